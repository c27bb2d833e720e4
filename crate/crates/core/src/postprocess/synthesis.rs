//! Patch synthesis: rebuild the low-frequency layer of the harmonized region
//! from painting patches, then add the region's own detail back.

use crate::error::{Error, Result};
use crate::image::{Image, Mask, CHANNELS};

use super::color::srgb_to_lab;
use super::guided::guided_filter;
use super::patchmatch::{patchmatch_nnf, NNField, PatchMatchParams};
use super::{GUIDED_EPS, GUIDED_RADIUS};

/// Intermediate layers of [`patch_synthesis_parts`].
#[derive(Debug, Clone)]
pub struct SynthesisParts {
    /// Guided-filtered input.
    pub base: Image,
    /// `input − base`.
    pub detail: Image,
    /// Average of the matched painting patches covering each in-mask pixel;
    /// equals `base` outside the mask.
    pub base_prime: Image,
    /// `base' + detail` inside the mask, the input outside, before clamping.
    pub unclamped: Image,
    pub output: Image,
    pub field: NNField,
}

/// CIE-Lab lightness scaled to `[0, 1]`.
pub fn luminance(image: &Image) -> Vec<f64> {
    (0..image.pixel_count())
        .map(|i| {
            let rgb = [image.plane(0)[i], image.plane(1)[i], image.plane(2)[i]];
            srgb_to_lab(rgb)[0] / 100.0
        })
        .collect()
}

/// Per-channel guided filter of `image`, steered by its luminance.
pub fn base_layer(image: &Image) -> Result<Image> {
    let (w, h) = (image.width(), image.height());
    let guide = luminance(image);
    let mut base = Image::new(w, h);
    for c in 0..CHANNELS {
        let q = guided_filter(image.plane(c), &guide, w, h, GUIDED_RADIUS, GUIDED_EPS)?;
        base.plane_mut(c).copy_from_slice(&q);
    }
    Ok(base)
}

pub fn patch_synthesis(
    image: &Image,
    painting: &Image,
    mask: &Mask,
    params: &PatchMatchParams,
) -> Result<Image> {
    patch_synthesis_parts(image, painting, mask, params).map(|p| p.output)
}

pub fn patch_synthesis_parts(
    image: &Image,
    painting: &Image,
    mask: &Mask,
    params: &PatchMatchParams,
) -> Result<SynthesisParts> {
    let (w, h) = (image.width(), image.height());
    if !image.same_shape(painting) || mask.width() != w || mask.height() != h {
        return Err(Error::Shape(format!(
            "patch synthesis needs equal sizes: image {w}x{h}, painting {}x{}, mask {}x{}",
            painting.width(),
            painting.height(),
            mask.width(),
            mask.height()
        )));
    }
    let p = params.patch_size;
    let base = base_layer(image)?;
    let mut detail = image.clone();
    for (d, b) in detail.data_mut().iter_mut().zip(base.data()) {
        *d -= b;
    }

    // match every patch that touches the mask
    let (gw, gh) = ((w + 1).saturating_sub(p), (h + 1).saturating_sub(p));
    let active: Vec<bool> = (0..gw * gh)
        .map(|i| {
            let (x, y) = (i % gw, i / gw);
            (y..y + p).any(|yy| (x..x + p).any(|xx| mask.get(xx, yy)))
        })
        .collect();
    let field = patchmatch_nnf(&base, painting, params, Some(&active))?;

    let n = w * h;
    let mut sum = vec![0.0; CHANNELS * n];
    let mut count = vec![0u32; n];
    for (i, m) in field.matches.iter().enumerate() {
        let Some((mx, my)) = *m else { continue };
        let (x, y) = (i % gw, i / gw);
        for dy in 0..p {
            for dx in 0..p {
                let o = (y + dy) * w + x + dx;
                if !mask.contains(o) {
                    continue;
                }
                count[o] += 1;
                for c in 0..CHANNELS {
                    sum[c * n + o] += painting.get(mx + dx, my + dy, c);
                }
            }
        }
    }

    let mut base_prime = base.clone();
    let mut unclamped = image.clone();
    for o in 0..n {
        if !mask.contains(o) {
            continue;
        }
        debug_assert!(count[o] > 0, "in-mask pixel not covered by an active patch");
        let inv = 1.0 / count[o] as f64;
        for c in 0..CHANNELS {
            let i = c * n + o;
            let v = sum[i] * inv;
            base_prime.data_mut()[i] = v;
            unclamped.data_mut()[i] = v + detail.data()[i];
        }
    }
    let mut output = unclamped.clone();
    for o in 0..n {
        if mask.contains(o) {
            for c in 0..CHANNELS {
                let v = &mut output.data_mut()[c * n + o];
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok(SynthesisParts {
        base,
        detail,
        base_prime,
        unclamped,
        output,
        field,
    })
}
