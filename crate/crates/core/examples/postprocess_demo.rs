//! Chrominance denoising and patch synthesis on a speckled, blurred patch
//! pasted into a synthetic painting.

use painterly::image::Image;
use painterly::postprocess::{
    chrominance_denoise, patch_synthesis_parts, postprocess, PatchMatchParams, SynthesisParts,
};
use painterly::synthetic::{disc_mask, noise, painting};

pub struct Demo {
    pub input: Image,
    pub denoised: Image,
    pub parts: SynthesisParts,
    pub output: Image,
}

pub fn run_example(size: usize) -> painterly::Result<Demo> {
    let art = painting(size, size, 4);
    let s = size as f64;
    let mask = disc_mask(size, size, s * 0.5, s * 0.5, s * 0.3);
    let speckle = noise(size, size, 4);
    let patch = Image::from_fn(size, size, |x, y| {
        let mut c = art.rgb(x, y);
        for (k, v) in c.iter_mut().enumerate() {
            *v = (0.7 * *v + 0.3 * speckle.get(x, y, k)).clamp(0.0, 1.0);
        }
        c
    });
    let input = patch.composite_over(&art, &mask);
    let params = PatchMatchParams::default();
    let denoised = chrominance_denoise(&input)?.composite_over(&input, &mask);
    let parts = patch_synthesis_parts(&denoised, &art, &mask, &params)?;
    let output = postprocess(&input, &art, &mask, &params)?;
    Ok(Demo {
        input,
        denoised,
        parts,
        output,
    })
}

#[allow(dead_code)]
fn main() -> painterly::Result<()> {
    let demo = run_example(96)?;
    println!(
        "denoise changed the image by at most {:.3}",
        demo.denoised.max_abs_diff(&demo.input)
    );
    println!(
        "patch field total distance {:.3}",
        demo.parts.field.total_distance()
    );
    println!(
        "final output differs from input by at most {:.3}",
        demo.output.max_abs_diff(&demo.input)
    );
    let dir = std::env::temp_dir();
    for (name, img) in [
        ("input", &demo.input),
        ("denoised", &demo.denoised),
        ("base", &demo.parts.base),
        ("output", &demo.output),
    ] {
        painterly::io::save_image(img, dir.join(format!("postprocess_{name}.png")))?;
    }
    println!("images written to {}", dir.display());
    Ok(())
}
