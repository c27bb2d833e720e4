//! Guided filter, Lab conversion, chrominance denoising, PatchMatch and patch
//! synthesis against direct oracles.

use nalgebra::{Matrix2, Vector2};
use painterly::image::{Image, Mask};
use painterly::postprocess::{
    box_mean, chrominance_denoise, denoise_lab, guided_filter, lab_to_srgb, patch_synthesis_parts,
    patchmatch_nnf, patchmatch_traced, postprocess, rgb_to_lab, srgb_to_lab, LabImage,
    PatchMatchParams,
};
use rand::Rng;

use super::{random_image, random_rect_mask, rng, Check};
use crate::ensure;

fn err(e: painterly::Error) -> String {
    e.to_string()
}

fn clamp(v: isize, n: usize) -> usize {
    v.clamp(0, n as isize - 1) as usize
}

/// Ridge regression `p ≈ a·I + b` over each edge-replicated window, solved as a
/// 2x2 linear system; coefficients averaged over the same windows.
fn regression_oracle(p: &[f64], guide: &[f64], w: usize, h: usize, r: usize, eps: f64) -> Vec<f64> {
    let window = |x: usize, y: usize| {
        let r = r as isize;
        (-r..=r).flat_map(move |dy| {
            (-r..=r).map(move |dx| clamp(y as isize + dy, h) * w + clamp(x as isize + dx, w))
        })
    };
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut coef = vec![(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            let (mut si, mut sii, mut sp, mut sip) = (0.0, 0.0, 0.0, 0.0);
            for k in window(x, y) {
                si += guide[k];
                sii += guide[k] * guide[k];
                sp += p[k];
                sip += guide[k] * p[k];
            }
            let m = Matrix2::new(sii + n * eps, si, si, n);
            let sol = m
                .lu()
                .solve(&Vector2::new(sip, sp))
                .expect("regular system");
            coef[y * w + x] = (sol[0], sol[1]);
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (a, b) = window(x, y).fold((0.0, 0.0), |(a, b), k| (a + coef[k].0, b + coef[k].1));
            out[y * w + x] = (a * guide[y * w + x] + b) / n;
        }
    }
    out
}

pub fn guided_vs_regression() -> Check {
    for seed in 0..4u64 {
        let mut r = rng(500 + seed);
        let (w, h) = (16, 16);
        let p: Vec<f64> = (0..w * h).map(|_| r.random()).collect();
        let g: Vec<f64> = (0..w * h).map(|_| r.random()).collect();
        for (radius, eps) in [(2, 0.01), (1, 0.1), (3, 1e-3)] {
            let got = guided_filter(&p, &g, w, h, radius, eps).map_err(err)?;
            let want = regression_oracle(&p, &g, w, h, radius, eps);
            let diff = got
                .iter()
                .zip(&want)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            ensure!(
                diff < 1e-6,
                "seed {seed}, r={radius}, eps={eps}: max diff {diff:e}"
            );
        }
    }
    Ok(())
}

pub fn guided_properties() -> Check {
    let mut r = rng(510);
    let (w, h) = (13, 11);
    let p: Vec<f64> = (0..w * h).map(|_| r.random()).collect();
    let g: Vec<f64> = (0..w * h).map(|_| r.random()).collect();
    let base = guided_filter(&p, &g, w, h, 2, 0.01).map_err(err)?;
    let shifted: Vec<f64> = p.iter().map(|v| v + 0.37).collect();
    let out = guided_filter(&shifted, &g, w, h, 2, 0.01).map_err(err)?;
    for (i, (a, b)) in out.iter().zip(&base).enumerate() {
        ensure!(
            (a - b - 0.37).abs() < 1e-9,
            "shift not preserved at {i}: {a} vs {b}"
        );
    }
    let c = guided_filter(&vec![0.6; w * h], &g, w, h, 2, 0.01).map_err(err)?;
    ensure!(
        c.iter().all(|v| (v - 0.6).abs() < 1e-12),
        "constant input not preserved"
    );
    let limit = guided_filter(&p, &p, w, h, 2, 1e6).map_err(err)?;
    let double_box = box_mean(&box_mean(&p, w, h, 2), w, h, 2);
    let diff = limit
        .iter()
        .zip(&double_box)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    ensure!(diff < 1e-3, "large-eps limit off by {diff:e}");
    Ok(())
}

pub fn lab_conversion() -> Check {
    let red = srgb_to_lab([1.0, 0.0, 0.0]);
    let want = [53.2408, 80.0925, 67.2032];
    for k in 0..3 {
        ensure!((red[k] - want[k]).abs() < 0.1, "sRGB red -> Lab {red:?}");
    }
    let white = srgb_to_lab([1.0, 1.0, 1.0]);
    ensure!(
        (white[0] - 100.0).abs() < 1e-9 && white[1].abs() < 1e-9 && white[2].abs() < 1e-9,
        "white -> {white:?}"
    );
    let mut r = rng(520);
    for _ in 0..1000 {
        let c = [r.random::<f64>(), r.random(), r.random()];
        let back = lab_to_srgb(srgb_to_lab(c));
        let e = (0..3).fold(0.0f64, |m, k| m.max((back[k] - c[k]).abs()));
        ensure!(e < 1e-4, "round trip of {c:?} off by {e:e}");
    }
    Ok(())
}

fn speckle_fixture() -> (LabImage, Vec<usize>) {
    let (w, h) = (24, 24);
    let n = w * h;
    let mut lab = LabImage {
        width: w,
        height: h,
        l: vec![50.0; n],
        a: vec![0.0; n],
        b: vec![0.0; n],
    };
    let mut spots = Vec::new();
    for y in (3..h).step_by(8) {
        for x in (3..w).step_by(8) {
            let i = y * w + x;
            lab.a[i] = 30.0;
            lab.b[i] = -20.0;
            spots.push(i);
        }
    }
    (lab, spots)
}

fn chroma_distance(a: &LabImage, b: &LabImage) -> f64 {
    a.a.iter()
        .zip(&b.a)
        .chain(a.b.iter().zip(&b.b))
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn chroma_denoise_checks() -> Check {
    let mut r = rng(530);
    let gray = Image::from_fn(20, 20, |_, _| [r.random::<f64>(); 3]);
    let out = chrominance_denoise(&gray).map_err(err)?;
    let e = out.max_abs_diff(&gray);
    ensure!(e < 1e-6, "grayscale image changed by {e:e}");

    let (lab, spots) = speckle_fixture();
    let once = denoise_lab(&lab).map_err(err)?;
    ensure!(
        once.l
            .iter()
            .zip(&lab.l)
            .all(|(a, b)| a.to_bits() == b.to_bits()),
        "L channel modified"
    );
    for &i in &spots {
        let before = lab.a[i].hypot(lab.b[i]);
        let after = once.a[i].hypot(once.b[i]);
        ensure!(
            after * 5.0 <= before,
            "speckle {i}: amplitude {before} -> {after}"
        );
    }
    let twice = denoise_lab(&once).map_err(err)?;
    let (d1, d2) = (chroma_distance(&lab, &once), chroma_distance(&once, &twice));
    ensure!(d2 < d1, "second pass moved chroma by {d2}, first by {d1}");

    // same fixture through RGB
    let rgb = painterly::postprocess::lab_to_rgb(&lab);
    let back = rgb_to_lab(&chrominance_denoise(&rgb).map_err(err)?);
    for &i in &spots {
        ensure!(
            back.a[i].hypot(back.b[i]) * 5.0 <= 36.0,
            "speckle {i} survives the RGB round trip"
        );
    }
    Ok(())
}

pub fn patchmatch_identity() -> Check {
    let img = random_image(&mut rng(540), 30, 26);
    let field = patchmatch_nnf(&img, &img, &PatchMatchParams::default(), None).map_err(err)?;
    ensure!(
        field.distances.iter().all(|&d| d == 0.0),
        "identity field total {}",
        field.total_distance()
    );
    Ok(())
}

pub fn patchmatch_translation() -> Check {
    let wide = random_image(&mut rng(541), 43, 28);
    let (w, h) = (40, 28);
    let src = Image::from_fn(w, h, |x, y| wide.rgb(x, y));
    let tgt = Image::from_fn(w, h, |x, y| wide.rgb(x + 3, y));
    let field = patchmatch_nnf(&src, &tgt, &PatchMatchParams::default(), None).map_err(err)?;
    for y in 0..field.height {
        for x in 3..field.width {
            let o = field.offset(x, y).ok_or("inactive patch")?;
            ensure!(o == (-3, 0), "patch ({x},{y}) offset {o:?}");
        }
    }
    Ok(())
}

pub fn patchmatch_monotone_deterministic() -> Check {
    for seed in 0..5u64 {
        let mut r = rng(550 + seed);
        let src = random_image(&mut r, 25, 21);
        let tgt = random_image(&mut r, 31, 19);
        let params = PatchMatchParams {
            seed,
            ..PatchMatchParams::default()
        };
        let (field, totals) = patchmatch_traced(&src, &tgt, &params, None).map_err(err)?;
        ensure!(
            totals.len() == params.iters + 1,
            "{} totals for {} iterations",
            totals.len(),
            params.iters
        );
        for w in totals.windows(2) {
            ensure!(w[1] <= w[0], "seed {seed}: total rose {} -> {}", w[0], w[1]);
        }
        let again = patchmatch_nnf(&src, &tgt, &params, None).map_err(err)?;
        ensure!(field == again, "seed {seed}: field differs between runs");
    }
    Ok(())
}

/// Two smooth periodic textures side by side: stripes along x (period 6) on
/// the left, along y (period 5) on the right.
fn two_textures(w: usize, h: usize) -> Image {
    use std::f64::consts::TAU;
    Image::from_fn(w, h, |x, y| {
        if x < w / 2 {
            let t = 0.5 + 0.4 * (TAU * x as f64 / 6.0).sin();
            [0.2 + 0.7 * t, 0.3 + 0.3 * t, 0.25]
        } else {
            let t = 0.5 + 0.4 * (TAU * y as f64 / 5.0).cos();
            [0.2, 0.25 + 0.3 * t, 0.3 + 0.6 * t]
        }
    })
}

pub fn synthesis_membership() -> Check {
    let (w, h) = (36, 40);
    let painting = two_textures(w, h);
    // vertical shift by two periods of the right texture
    let image = Image::from_fn(w, h, |x, y| painting.rgb(x, (y + 10) % h));
    let mask = Mask::from_fn(w, h, |x, y| (6..30).contains(&x) && (6..34).contains(&y));
    let parts = patch_synthesis_parts(&image, &painting, &mask, &PatchMatchParams::default())
        .map_err(err)?;
    let p = 7;
    let bp = &parts.base_prime;
    let mut checked = 0;
    for y in 0..=h - p {
        for x in 0..=w - p {
            if !(y..y + p).all(|yy| (x..x + p).all(|xx| mask.get(xx, yy))) {
                continue;
            }
            let mut best = f64::INFINITY;
            for sy in 0..=h - p {
                for sx in 0..=w - p {
                    let mut d = 0.0;
                    for c in 0..3 {
                        for dy in 0..p {
                            for dx in 0..p {
                                d += (bp.get(x + dx, y + dy, c)
                                    - painting.get(sx + dx, sy + dy, c))
                                .powi(2);
                            }
                        }
                    }
                    best = best.min(d);
                }
            }
            ensure!(
                best < 1e-3,
                "base' patch at ({x},{y}) is {best:e} from every painting patch"
            );
            checked += 1;
        }
    }
    ensure!(checked > 0, "no patch fully inside the mask");
    Ok(())
}

pub fn synthesis_detail_exact() -> Check {
    let mut r = rng(560);
    let image = random_image(&mut r, 24, 20);
    let painting = random_image(&mut r, 24, 20);
    let mask = random_rect_mask(&mut r, 24, 20, 6);
    let parts = patch_synthesis_parts(&image, &painting, &mask, &PatchMatchParams::default())
        .map_err(err)?;
    let n = 24 * 20;
    for o in mask.indices() {
        for c in 0..3 {
            let i = c * n + o;
            let sum = parts.base_prime.data()[i] + parts.detail.data()[i];
            ensure!(
                parts.unclamped.data()[i].to_bits() == sum.to_bits(),
                "pixel {o} channel {c}"
            );
            let d = image.data()[i] - parts.base.data()[i];
            ensure!(
                parts.detail.data()[i].to_bits() == d.to_bits(),
                "detail at pixel {o}"
            );
        }
    }
    Ok(())
}

pub fn synthesis_self_reconstruction() -> Check {
    let (w, h) = (32, 32);
    let painting = Image::from_fn(w, h, |x, y| {
        let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
        [
            0.3 + 0.4 * u,
            0.2 + 0.5 * v,
            0.5 + 0.2 * (u * v * 6.0).sin(),
        ]
    });
    let mask = Mask::from_fn(w, h, |x, y| (8..24).contains(&x) && (8..24).contains(&y));
    let parts = patch_synthesis_parts(&painting, &painting, &mask, &PatchMatchParams::default())
        .map_err(err)?;
    let e = parts.output.max_abs_diff(&painting);
    ensure!(e < 1e-2, "self reconstruction off by {e:e}");
    Ok(())
}

pub fn outside_mask_untouched() -> Check {
    for seed in 0..3u64 {
        let mut r = rng(570 + seed);
        let image = random_image(&mut r, 28, 24);
        let painting = random_image(&mut r, 28, 24);
        let mask = random_rect_mask(&mut r, 28, 24, 5);
        let params = PatchMatchParams {
            seed,
            ..PatchMatchParams::default()
        };
        let out = postprocess(&image, &painting, &mask, &params).map_err(err)?;
        for (i, (a, b)) in out.data().iter().zip(image.data()).enumerate() {
            if !mask.contains(i % (28 * 24)) {
                ensure!(
                    a.to_bits() == b.to_bits(),
                    "seed {seed}: outside value {i} changed"
                );
            }
        }
    }
    Ok(())
}

pub fn suite() -> Check {
    guided_vs_regression()?;
    guided_properties()?;
    lab_conversion()?;
    chroma_denoise_checks()?;
    patchmatch_identity()?;
    patchmatch_translation()?;
    patchmatch_monotone_deterministic()?;
    synthesis_membership()?;
    synthesis_detail_exact()?;
    synthesis_self_reconstruction()?;
    outside_mask_untouched()
}
