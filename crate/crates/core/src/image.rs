//! Planar RGB images and binary masks.
//!
//! Every pipeline stage exchanges [`Image`] values: three planes of `f64`
//! samples nominally in `[0, 1]`, stored channel-major so that a whole image
//! doubles as the flat parameter vector of the reconstruction.

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Rgb};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; CHANNELS])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; CHANNELS]) -> Self {
        let plane = width * height;
        let mut data = vec![0.0; plane * CHANNELS];
        for (c, value) in rgb.iter().enumerate() {
            data[c * plane..(c + 1) * plane].fill(*value);
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds an image from channel-major samples (`R` plane, then `G`, then `B`).
    pub fn from_planar(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * CHANNELS {
            return Err(Error::Shape(format!(
                "expected {} samples for a {width}x{height} image, got {}",
                width * height * CHANNELS,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                let rgb = f(x, y);
                for (c, v) in rgb.into_iter().enumerate() {
                    img.set(x, y, c, v);
                }
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixel_count();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[c * self.width * self.height + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let n = self.width * self.height;
        self.data[c * n + y * self.width + x] = v;
    }

    pub fn rgb(&self, x: usize, y: usize) -> [f64; 3] {
        [self.get(x, y, 0), self.get(x, y, 1), self.get(x, y, 2)]
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Takes pixels from `self` where `region` is set and from `background` elsewhere.
    pub fn composite_over(&self, background: &Image, region: &Mask) -> Image {
        debug_assert!(self.same_shape(background));
        let n = self.pixel_count();
        let mut out = background.clone();
        for c in 0..CHANNELS {
            for (i, inside) in region.data().iter().enumerate() {
                if *inside {
                    out.data[c * n + i] = self.data[c * n + i];
                }
            }
        }
        out
    }

    /// Bicubic (Catmull-Rom) resampling, clamped back into `[0, 1]`.
    pub fn resize(&self, width: usize, height: usize) -> Image {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let buf: ImageBuffer<Rgb<f32>, Vec<f32>> =
            ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
                let [r, g, b] = self.rgb(x as usize, y as usize);
                Rgb([r as f32, g as f32, b as f32])
            });
        let resized = imageops::resize(&buf, width as u32, height as u32, FilterType::CatmullRom);
        Image::from_fn(width, height, |x, y| {
            let p = resized.get_pixel(x as u32, y as u32).0;
            [
                f64::from(p[0]).clamp(0.0, 1.0),
                f64::from(p[1]).clamp(0.0, 1.0),
                f64::from(p[2]).clamp(0.0, 1.0),
            ]
        })
    }
}

/// Binary region over a pixel or activation grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "mask of {width}x{height} needs {} cells, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn contains(&self, p: usize) -> bool {
        self.data[p]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Flat indices of the set cells, in row-major order.
    pub fn indices(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// Euclidean disc dilation: a cell is set if any set cell lies within `radius`.
    pub fn dilate(&self, radius: usize) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as isize;
        let mut offsets = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    offsets.push((dx, dy));
                }
            }
        }
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = Mask::empty(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                if !self.data[(y * w + x) as usize] {
                    continue;
                }
                for &(dx, dy) in &offsets {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        out.data[(ny * w + nx) as usize] = true;
                    }
                }
            }
        }
        out
    }

    /// Downsamples by an integer cell size: the output cell `(x, y)` covers source
    /// pixels `[x*cell, (x+1)*cell)` and is set when at least half of them are set.
    /// Output dimensions are `floor(size / cell)`, matching repeated floor pooling.
    pub fn downsample_cells(&self, cell: usize) -> Mask {
        assert!(cell >= 1);
        if cell == 1 {
            return self.clone();
        }
        let (ow, oh) = (self.width / cell, self.height / cell);
        Mask::from_fn(ow, oh, |x, y| {
            let mut set = 0usize;
            for sy in y * cell..(y + 1) * cell {
                for sx in x * cell..(x + 1) * cell {
                    set += usize::from(self.get(sx, sy));
                }
            }
            2 * set >= cell * cell
        })
    }

    /// Resamples to arbitrary dimensions by area coverage with a 0.5 threshold.
    pub fn resample(&self, width: usize, height: usize) -> Mask {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Mask::from_fn(width, height, |x, y| {
            let (x0, x1) = (x as f64 * sx, (x + 1) as f64 * sx);
            let (y0, y1) = (y as f64 * sy, (y + 1) as f64 * sy);
            let mut covered = 0.0;
            for py in (y0.floor() as usize)..(y1.ceil() as usize).min(self.height) {
                let oy = (y1.min(py as f64 + 1.0) - y0.max(py as f64)).max(0.0);
                for px in (x0.floor() as usize)..(x1.ceil() as usize).min(self.width) {
                    if self.get(px, py) {
                        let ox = (x1.min(px as f64 + 1.0) - x0.max(px as f64)).max(0.0);
                        covered += ox * oy;
                    }
                }
            }
            covered >= 0.5 * sx * sy
        })
    }
}
