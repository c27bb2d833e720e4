//! Evaluate the pass-2 objective on a small scene and compare its analytic
//! gradient with central differences along a few random directions.

use std::collections::BTreeMap;

use painterly::backbone::{Backbone, Precision};
use painterly::image::Image;
use painterly::losses::{
    build_style_targets, ContentTarget, LossBreakdown, LossConfig, LossWeights, Pass,
    PassObjective, TargetMode,
};
use painterly::mapping::{consistent_mapping, resize_mask};
use painterly::synthetic::{demo_scene, noise, toy_bank};
use rand::{Rng, SeedableRng};

pub fn run_example(
    size: usize,
    directions: usize,
) -> painterly::Result<(LossBreakdown, Vec<(f64, f64)>)> {
    let (painting, mask, composite) = demo_scene(size, 9);
    let backbone = Backbone::new(toy_bank(9), Precision::Double);
    let layers: Vec<_> = backbone.bank().layer_names().collect();
    let reference = *layers.last().unwrap();
    let fi = backbone.forward(&composite, &layers)?;
    let fs = backbone.forward(&painting, &layers)?;
    let mapping = consistent_mapping(&fi, &mask, &fs, reference)?;
    let targets = build_style_targets(&fs, &mapping, TargetMode::Unique)?;
    let masks: BTreeMap<_, _> = layers.iter().map(|&l| (l, resize_mask(&mask, l))).collect();
    let content = vec![ContentTarget {
        layer: reference,
        target: fi.get(reference).unwrap().clone(),
        mask: masks[&reference].clone(),
    }];
    let share = 1.0 / layers.len() as f64;
    let config = LossConfig {
        content: BTreeMap::from([(reference, 1.0)]),
        style: layers.iter().map(|&l| (l, share)).collect(),
        histogram: layers.iter().map(|&l| (l, share)).collect(),
        weights: LossWeights {
            style: 5.0,
            histogram: 5.0,
            tv: 1.0,
        },
    };
    let objective = PassObjective::new(
        &backbone,
        Pass::Two,
        config,
        content,
        targets,
        masks,
        mask.dilate(4),
    )?;

    // a point away from the content optimum
    let start = Image::from_planar(size, size, {
        let n = noise(size, size, 1);
        composite
            .data()
            .iter()
            .zip(n.data())
            .map(|(a, b)| 0.8 * a + 0.2 * b)
            .collect()
    })?;
    let (loss, grad) = objective.evaluate(&start)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let h = 1e-6;
    let mut pairs = Vec::new();
    for _ in 0..directions {
        let v: Vec<f64> = (0..start.data().len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let shifted = |s: f64| {
            let d = start
                .data()
                .iter()
                .zip(&v)
                .map(|(x, d)| x + s * d)
                .collect();
            objective
                .loss(&Image::from_planar(size, size, d).unwrap())
                .unwrap()
                .total
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        let an: f64 = grad.data().iter().zip(&v).map(|(g, d)| g * d).sum();
        pairs.push((an, fd));
    }
    Ok((loss, pairs))
}

#[allow(dead_code)]
fn main() -> painterly::Result<()> {
    let (loss, pairs) = run_example(24, 5)?;
    println!("loss at start: {loss}");
    for (an, fd) in pairs {
        println!(
            "analytic {an:+.6e}   finite difference {fd:+.6e}   rel err {:.1e}",
            (an - fd).abs() / an.abs().max(fd.abs())
        );
    }
    Ok(())
}
