//! Clean-up after reconstruction: chrominance denoising in CIE-Lab, then patch
//! synthesis against the painting.

pub mod color;
pub mod guided;
pub mod patchmatch;
pub mod synthesis;

pub use color::{lab_to_rgb, lab_to_srgb, rgb_to_lab, srgb_to_lab, LabImage};
pub use guided::{box_mean, guided_filter};
pub use patchmatch::{
    patch_distance, patchmatch_nnf, patchmatch_traced, NNField, PatchMatchParams,
};
pub use synthesis::{
    base_layer, luminance, patch_synthesis, patch_synthesis_parts, SynthesisParts,
};

use crate::error::Result;
use crate::image::{Image, Mask};

pub const GUIDED_RADIUS: usize = 2;
pub const GUIDED_EPS: f64 = 0.01;

const AB_LOW: f64 = -128.0;
const AB_RANGE: f64 = 255.0;

/// Guided-filters the `a` and `b` channels with `L / 100` as the guide; `L` is
/// returned untouched. Chrominance is rescaled to `[0, 1]` over `[-128, 127]`
/// while filtering.
pub fn denoise_lab(lab: &LabImage) -> Result<LabImage> {
    let (w, h) = (lab.width, lab.height);
    let guide: Vec<f64> = lab.l.iter().map(|l| l / 100.0).collect();
    let chroma = |ch: &[f64]| -> Result<Vec<f64>> {
        let scaled: Vec<f64> = ch.iter().map(|v| (v - AB_LOW) / AB_RANGE).collect();
        let q = guided_filter(&scaled, &guide, w, h, GUIDED_RADIUS, GUIDED_EPS)?;
        Ok(q.into_iter().map(|v| v * AB_RANGE + AB_LOW).collect())
    };
    Ok(LabImage {
        width: w,
        height: h,
        l: lab.l.clone(),
        a: chroma(&lab.a)?,
        b: chroma(&lab.b)?,
    })
}

pub fn chrominance_denoise(image: &Image) -> Result<Image> {
    Ok(lab_to_rgb(&denoise_lab(&rgb_to_lab(image))?))
}

/// Chrominance denoising followed by patch synthesis, both confined to `mask`:
/// pixels outside it are returned bit-identical.
pub fn postprocess(
    image: &Image,
    painting: &Image,
    mask: &Mask,
    params: &PatchMatchParams,
) -> Result<Image> {
    let denoised = chrominance_denoise(image)?.composite_over(image, mask);
    let synthesized = patch_synthesis(&denoised, painting, mask, params)?;
    Ok(synthesized.composite_over(image, mask))
}
