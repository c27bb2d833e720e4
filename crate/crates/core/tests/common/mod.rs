//! Shared fixtures and check suites for the integration tests.
//!
//! Every suite returns `Check` so the same code backs both the per-area test
//! targets and the acceptance report.
#![allow(dead_code)]

pub mod estimator;
pub mod mapping;
pub mod postprocess;

use painterly::backbone::{Backbone, FeatureMap, LayerId, Precision, WeightBank, IMAGENET_MEANS};
use painterly::image::{Image, Mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn l(block: u8, index: u8) -> LayerId {
    LayerId::new(block, index)
}

pub fn random_map(
    rng: &mut ChaCha8Rng,
    channels: usize,
    height: usize,
    width: usize,
) -> FeatureMap {
    let data = (0..channels * height * width)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    FeatureMap::new(channels, height, width, data).unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Image {
    Image::from_fn(width, height, |_, _| {
        [rng.random(), rng.random(), rng.random()]
    })
}

/// Random axis-aligned rectangle covering at least `min` x `min` pixels.
pub fn random_rect_mask(rng: &mut ChaCha8Rng, width: usize, height: usize, min: usize) -> Mask {
    let w = rng.random_range(min..=width);
    let h = rng.random_range(min..=height);
    let x0 = rng.random_range(0..=width - w);
    let y0 = rng.random_range(0..=height - h);
    Mask::from_fn(width, height, |x, y| {
        x >= x0 && x < x0 + w && y >= y0 && y < y0 + h
    })
}

pub fn random_mask(rng: &mut ChaCha8Rng, width: usize, height: usize, p: f64) -> Mask {
    Mask::from_fn(width, height, |_, _| rng.random_bool(p))
}

/// `conv1_1 (4) -> conv2_1 (6)` in double precision.
pub fn tiny_backbone(seed: u64) -> Backbone {
    let bank = WeightBank::random(&[(l(1, 1), 4), (l(2, 1), 6)], IMAGENET_MEANS, seed).unwrap();
    Backbone::new(bank, Precision::Double)
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central differences along every coordinate of `x`.
pub fn check_coordinates(
    name: &str,
    x: &[f64],
    grad: &[f64],
    h: f64,
    tol: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Check {
    let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let floor = 1e-6 * gmax.max(1e-12);
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = f(&xp);
        xp[i] = x[i] - h;
        let down = f(&xp);
        xp[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        let e = rel_err(fd, grad[i], floor);
        ensure!(
            e < tol,
            "{name}: coordinate {i}: finite difference {fd:e}, analytic {:e} (rel err {e:e})",
            grad[i]
        );
    }
    Ok(())
}

/// Central differences along `directions`.
pub fn check_directions(
    name: &str,
    x: &[f64],
    grad: &[f64],
    directions: &[Vec<f64>],
    h: f64,
    tol: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Check {
    for (k, v) in directions.iter().enumerate() {
        let up: Vec<f64> = x.iter().zip(v).map(|(a, d)| a + h * d).collect();
        let down: Vec<f64> = x.iter().zip(v).map(|(a, d)| a - h * d).collect();
        let fd = (f(&up) - f(&down)) / (2.0 * h);
        let an: f64 = grad.iter().zip(v).map(|(g, d)| g * d).sum();
        let e = rel_err(fd, an, 1e-12);
        ensure!(
            e < tol,
            "{name}: direction {k}: finite difference {fd:e}, analytic {an:e} (rel err {e:e})"
        );
    }
    Ok(())
}

pub fn gaussian_directions(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    (0..count)
        .map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// SHA-256 of a byte buffer, hex encoded.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// Runs `suite`, printing a one-line verdict. Returns whether it passed.
pub fn report(criterion: &str, suite: impl FnOnce() -> Check) -> bool {
    let start = std::time::Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(suite))
        .unwrap_or_else(|_| Err("panicked".into()));
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(()) => println!("PASS  {criterion}  ({secs:.1}s)"),
        Err(e) => println!("FAIL  {criterion}  ({secs:.1}s): {e}"),
    }
    outcome.is_ok()
}
