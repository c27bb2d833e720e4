//! sRGB ↔ CIE-Lab under a D65 white point.

use std::sync::LazyLock;

use crate::image::Image;

// linear sRGB -> XYZ (D65)
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

static XYZ_TO_RGB: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| invert(&RGB_TO_XYZ));

const DELTA: f64 = 6.0 / 29.0;

/// Reference white: the XYZ of sRGB (1, 1, 1), so white maps to `a = b = 0`.
fn white() -> [f64; 3] {
    RGB_TO_XYZ.map(|row| row.iter().sum())
}

fn to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn to_gamma(v: f64) -> f64 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn f(t: f64) -> f64 {
    if t > DELTA.powi(3) {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn f_inv(t: f64) -> f64 {
    if t > DELTA {
        t.powi(3)
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

fn invert(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let cof = |r: usize, c: usize| {
        let (r0, r1) = ((r + 1) % 3, (r + 2) % 3);
        let (c0, c1) = ((c + 1) % 3, (c + 2) % 3);
        m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
    };
    let det: f64 = (0..3).map(|c| m[0][c] * cof(0, c)).sum();
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = cof(c, r) / det;
        }
    }
    inv
}

fn mul(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    m.map(|row| row[0] * v[0] + row[1] * v[1] + row[2] * v[2])
}

pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let xyz = mul(&RGB_TO_XYZ, rgb.map(to_linear));
    let w = white();
    let [fx, fy, fz] = [f(xyz[0] / w[0]), f(xyz[1] / w[1]), f(xyz[2] / w[2])];
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Inverse of [`srgb_to_lab`]; out-of-gamut results are clipped to `[0, 1]`.
pub fn lab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let w = white();
    let xyz = [w[0] * f_inv(fx), w[1] * f_inv(fy), w[2] * f_inv(fz)];
    mul(&XYZ_TO_RGB, xyz).map(|v| to_gamma(v.clamp(0.0, 1.0)).clamp(0.0, 1.0))
}

/// Planar Lab image: `l` in `[0, 100]`, `a` and `b` roughly in `[-128, 127]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub width: usize,
    pub height: usize,
    pub l: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

pub fn rgb_to_lab(image: &Image) -> LabImage {
    let n = image.pixel_count();
    let mut out = LabImage {
        width: image.width(),
        height: image.height(),
        l: vec![0.0; n],
        a: vec![0.0; n],
        b: vec![0.0; n],
    };
    let (r, g, b) = (image.plane(0), image.plane(1), image.plane(2));
    for i in 0..n {
        let [l, a, bb] = srgb_to_lab([r[i], g[i], b[i]]);
        out.l[i] = l;
        out.a[i] = a;
        out.b[i] = bb;
    }
    out
}

pub fn lab_to_rgb(lab: &LabImage) -> Image {
    let mut out = Image::new(lab.width, lab.height);
    for i in 0..lab.l.len() {
        let rgb = lab_to_srgb([lab.l[i], lab.a[i], lab.b[i]]);
        for (c, v) in rgb.into_iter().enumerate() {
            out.plane_mut(c)[i] = v;
        }
    }
    out
}
