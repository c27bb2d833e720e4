//! Nearest-neighbour patch mapping at two layers, independent versus
//! consistent, and how coherent each one is.

use painterly::backbone::{Backbone, Precision};
use painterly::mapping::{consistent_mapping, independent_mapping, LayerMapping, MappingField};
use painterly::synthetic::{demo_scene, toy_bank};

/// Fraction of horizontally adjacent mapped pairs whose matches are also adjacent.
pub fn coherence(m: &LayerMapping) -> f64 {
    let (mut pairs, mut coherent) = (0, 0);
    for p in 0..m.input.len() {
        let (Some(q), Some(np)) = (m.assignment[p], m.input.offset(p, 1, 0)) else {
            continue;
        };
        if let Some(nq) = m.assignment[np] {
            pairs += 1;
            coherent += usize::from(m.style.offset(q, 1, 0) == Some(nq));
        }
    }
    if pairs == 0 {
        0.0
    } else {
        coherent as f64 / pairs as f64
    }
}

pub fn run_example(size: usize) -> painterly::Result<(MappingField, MappingField)> {
    let (painting, mask, composite) = demo_scene(size, 5);
    let backbone = Backbone::new(toy_bank(5), Precision::Single);
    let layers: Vec<_> = backbone.bank().layer_names().collect();
    let fi = backbone.forward(&composite, &layers)?;
    let fs = backbone.forward(&painting, &layers)?;
    let independent = independent_mapping(&fi, &mask, &fs)?;
    let consistent = consistent_mapping(&fi, &mask, &fs, *layers.last().unwrap())?;
    Ok((independent, consistent))
}

#[allow(dead_code)]
fn main() -> painterly::Result<()> {
    let (independent, consistent) = run_example(64)?;
    for (layer, m) in &independent.layers {
        let c = consistent.get(*layer).unwrap();
        println!(
            "{layer}: {} patches mapped, coherence independent {:.2}, consistent {:.2}",
            m.len(),
            coherence(m),
            coherence(c)
        );
    }
    let out = std::env::temp_dir().join("patch_mapping.json");
    consistent.write_json(&out)?;
    println!("consistent field written to {}", out.display());
    Ok(())
}
