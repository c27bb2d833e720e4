//! Guided filter over single-channel planes.

use crate::error::{Error, Result};

/// Mean over the `(2r+1)²` window centred on each pixel, replicating edge pixels.
pub fn box_mean(plane: &[f64], width: usize, height: usize, r: usize) -> Vec<f64> {
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let k = (2 * r + 1) as f64;
    let mut rows = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut s = 0.0;
            for dx in -(r as isize)..=r as isize {
                s += row[clamp(x as isize + dx, width)];
            }
            rows[y * width + x] = s / k;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut s = 0.0;
            for dy in -(r as isize)..=r as isize {
                s += rows[clamp(y as isize + dy, height) * width + x];
            }
            out[y * width + x] = s / k;
        }
    }
    out
}

/// Edge-preserving smoothing of `input` steered by `guide`: per-window linear
/// fits `q = a·I + b`, with the coefficients box-averaged before being applied.
pub fn guided_filter(
    input: &[f64],
    guide: &[f64],
    width: usize,
    height: usize,
    r: usize,
    eps: f64,
) -> Result<Vec<f64>> {
    let n = width * height;
    if input.len() != n || guide.len() != n {
        return Err(Error::Shape(format!(
            "guided filter on {width}x{height}: input has {} values, guide {}",
            input.len(),
            guide.len()
        )));
    }
    if r == 0 || !(eps > 0.0) {
        return Err(Error::Config(format!(
            "guided filter needs r >= 1 and eps > 0, got r={r} eps={eps}"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let ii: Vec<f64> = guide.iter().map(|g| g * g).collect();
    let ip: Vec<f64> = guide.iter().zip(input).map(|(g, p)| g * p).collect();
    let mean_i = box_mean(guide, width, height, r);
    let mean_p = box_mean(input, width, height, r);
    let corr_i = box_mean(&ii, width, height, r);
    let corr_ip = box_mean(&ip, width, height, r);
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for k in 0..n {
        let var = corr_i[k] - mean_i[k] * mean_i[k];
        let cov = corr_ip[k] - mean_i[k] * mean_p[k];
        a[k] = cov / (var + eps);
        b[k] = mean_p[k] - a[k] * mean_i[k];
    }
    let mean_a = box_mean(&a, width, height, r);
    let mean_b = box_mean(&b, width, height, r);
    Ok((0..n).map(|k| mean_a[k] * guide[k] + mean_b[k]).collect())
}
