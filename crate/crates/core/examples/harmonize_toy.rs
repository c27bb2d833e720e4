//! End-to-end harmonization of a pasted sphere into a synthetic painting with
//! a two-block random backbone.

use painterly::backbone::{Backbone, Precision};
use painterly::estimator::{predict_weights, StyleCategoryTable, StyleProbs};
use painterly::harmonizer::{two_pass, HarmonizeOptions, PassConfig, TwoPassResult};
use painterly::losses::LossWeights;
use painterly::postprocess::{postprocess, PatchMatchParams};
use painterly::synthetic::{demo_scene, toy_bank};

pub fn run_example(
    size: usize,
    iterations: usize,
) -> painterly::Result<(TwoPassResult, painterly::image::Image)> {
    let (painting, mask, composite) = demo_scene(size, 7);
    let backbone = Backbone::new(toy_bank(1), Precision::Single);
    let layers: Vec<_> = backbone.bank().layer_names().collect();

    let table = StyleCategoryTable::builtin();
    let w = predict_weights(&painting, &StyleProbs::one_hot("Impressionism"), &table)?.weights;
    let cfg1 = PassConfig::pass1()
        .with_weights(LossWeights {
            style: w.style,
            histogram: 0.0,
            tv: 0.0,
        })
        .with_iterations(iterations)
        .fit_to_layers(&layers)?;
    let cfg2 = PassConfig::pass2()
        .with_weights(w)
        .with_iterations(iterations)
        .fit_to_layers(&layers)?;

    let result = two_pass(
        &composite,
        &mask,
        &painting,
        &cfg1,
        &cfg2,
        &backbone,
        &HarmonizeOptions::default(),
    )?;
    let finished = postprocess(
        result.output(),
        &painting,
        &mask,
        &PatchMatchParams::default(),
    )?;
    Ok((result, finished))
}

#[allow(dead_code)]
fn main() -> painterly::Result<()> {
    let start = std::time::Instant::now();
    let (result, finished) = run_example(64, 200)?;
    for (name, pass) in [("pass 1", &result.pass1), ("pass 2", &result.pass2)] {
        println!(
            "{name}: {} iterations, {:?}\n  initial {}\n  final   {}",
            pass.report.iterations_run,
            pass.report.termination,
            pass.initial(),
            pass.last()
        );
    }
    let out = std::env::temp_dir().join("harmonize_toy.png");
    painterly::io::save_image(&finished, &out)?;
    println!("wrote {} in {:.1?}", out.display(), start.elapsed());
    Ok(())
}
