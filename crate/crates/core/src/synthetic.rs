//! Procedural images and small random weight banks for demos and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::{LayerId, WeightBank, IMAGENET_MEANS};
use crate::image::{Image, Mask};

/// Two-block bank: conv1_1 (8 filters) and conv2_1 (16 filters).
pub fn toy_bank(seed: u64) -> WeightBank {
    WeightBank::random(
        &[(LayerId::new(1, 1), 8), (LayerId::new(2, 1), 16)],
        IMAGENET_MEANS,
        seed,
    )
    .expect("valid layout")
}

/// Narrow bank covering every layer through conv5_1, `width` filters in the
/// first block and doubling per block up to `8 * width`.
pub fn narrow_vgg19(width: usize, seed: u64) -> WeightBank {
    let layout: Vec<(LayerId, usize)> = LayerId::vgg19()
        .into_iter()
        .map(|l| (l, width << (l.block() - 1).min(3)))
        .collect();
    WeightBank::random(&layout, IMAGENET_MEANS, seed).expect("valid layout")
}

/// Uniform noise in `[0, 1]`.
pub fn noise(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(width, height, |_, _| {
        [rng.random(), rng.random(), rng.random()]
    })
}

/// Brush-stroke-like texture: random short oriented strokes over a tinted
/// ground.
pub fn painting(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ground = [0.55, 0.45, 0.3];
    let mut img = Image::filled(width, height, ground);
    let strokes = width * height / 12;
    for _ in 0..strokes {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let len = rng.random_range(2.0..6.0);
        let color = [
            (ground[0] + rng.random_range(-0.35..0.35f64)).clamp(0.0, 1.0),
            (ground[1] + rng.random_range(-0.3..0.3f64)).clamp(0.0, 1.0),
            (ground[2] + rng.random_range(-0.25..0.25f64)).clamp(0.0, 1.0),
        ];
        let (dx, dy) = (angle.cos(), angle.sin());
        let steps = (len * 2.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / 2.0 - len / 2.0;
            let x = (cx + t * dx).round();
            let y = (cy + t * dy).round();
            if x >= 0.0 && y >= 0.0 && (x as usize) < width && (y as usize) < height {
                for (c, v) in color.iter().enumerate() {
                    img.set(x as usize, y as usize, c, *v);
                }
            }
        }
    }
    img
}

/// Disc of radius `r` centred at `(cx, cy)`.
pub fn disc_mask(width: usize, height: usize, cx: f64, cy: f64, r: f64) -> Mask {
    Mask::from_fn(width, height, |x, y| {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        dx * dx + dy * dy <= r * r
    })
}

/// A smoothly shaded sphere pasted onto `background` inside `mask`: the kind of
/// photographic element that clashes with a painting.
pub fn paste_sphere(background: &Image, mask: &Mask, cx: f64, cy: f64, r: f64) -> Image {
    let sphere = Image::from_fn(background.width(), background.height(), |x, y| {
        let nx = (x as f64 + 0.5 - cx) / r;
        let ny = (y as f64 + 0.5 - cy) / r;
        let nz = (1.0 - nx * nx - ny * ny).max(0.0).sqrt();
        let shade = (0.2 + 0.8 * (-0.4 * nx - 0.5 * ny + 0.77 * nz).max(0.0)).min(1.0);
        [0.15 * shade, 0.35 * shade, 0.95 * shade]
    });
    sphere.composite_over(background, mask)
}

/// Painting, mask and cut-and-paste composite of the standard `size x size` demo scene.
pub fn demo_scene(size: usize, seed: u64) -> (Image, Mask, Image) {
    let s = size as f64;
    let painting = painting(size, size, seed);
    let mask = disc_mask(size, size, s * 0.5, s * 0.55, s * 0.22);
    let composite = paste_sphere(&painting, &mask, s * 0.5, s * 0.55, s * 0.22);
    (painting, mask, composite)
}
