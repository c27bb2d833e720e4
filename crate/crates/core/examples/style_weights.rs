//! Loss weights predicted from style-class probabilities and painting texture.

use std::collections::BTreeMap;

use painterly::estimator::{
    median_tv, predict_weights, StyleCategoryTable, StyleProbs, WeightPrediction,
};
use painterly::image::Image;
use painterly::synthetic::{noise, painting};

pub fn run_example() -> painterly::Result<Vec<(String, WeightPrediction)>> {
    let table = StyleCategoryTable::builtin();
    let flat = Image::filled(48, 48, [0.6, 0.5, 0.4]);
    let strokes = painting(48, 48, 2);
    let grain = noise(48, 48, 2);
    let mixed = StyleProbs::new(BTreeMap::from([
        ("Cubism".to_string(), 0.6),
        ("Realism".to_string(), 0.3),
        ("Baroque".to_string(), 0.1),
    ]))?;
    let cases = [
        ("Baroque, flat", StyleProbs::one_hot("Baroque"), &flat),
        (
            "Impressionism, strokes",
            StyleProbs::one_hot("Impressionism"),
            &strokes,
        ),
        ("Cubism, noise", StyleProbs::one_hot("Cubism"), &grain),
        ("mixed, strokes", mixed, &strokes),
        ("uniform, flat", StyleProbs::uniform(&table), &flat),
    ];
    cases
        .into_iter()
        .map(|(name, probs, img)| {
            Ok((
                format!("{name} (median TV {:.2e})", median_tv(img)),
                predict_weights(img, &probs, &table)?,
            ))
        })
        .collect()
}

#[allow(dead_code)]
fn main() -> painterly::Result<()> {
    for (name, p) in run_example()? {
        println!(
            "{name:40} tau {:6.3}  w_s {:6.3}  w_hist {:6.3}  w_tv {:.3e}",
            p.tau, p.weights.style, p.weights.histogram, p.weights.tv
        );
    }
    Ok(())
}
