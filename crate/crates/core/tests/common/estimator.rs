//! Published weight constants, interpolation and the TV-weight sigmoid.

use std::collections::BTreeMap;

use painterly::estimator::{
    interpolate_weights, median_tv, predict_weights, tv_sigmoid, StyleCategoryTable, StyleProbs,
};
use painterly::harmonizer::PassConfig;
use painterly::image::Image;

use super::{l, Check};
use crate::ensure;

const PUBLISHED: [(&str, f64); 6] = [
    ("Baroque", 1.0),
    ("High Renaissance", 1.0),
    ("Abstract Art", 5.0),
    ("Post-Impressionism", 5.0),
    ("Cubism", 10.0),
    ("Expressionism", 10.0),
];

pub fn one_hot_weights() -> Check {
    let table = StyleCategoryTable::builtin();
    ensure!(
        table.entries().len() == 18,
        "table has {} styles",
        table.entries().len()
    );
    for (name, w) in PUBLISHED {
        let (ws, wh) =
            interpolate_weights(&StyleProbs::one_hot(name), &table).map_err(|e| e.to_string())?;
        ensure!(
            ws == w && wh == w,
            "{name}: ({ws}, {wh}), expected ({w}, {w})"
        );
    }
    Ok(())
}

pub fn sigmoid_midpoint() -> Check {
    let v = tv_sigmoid(2.5e-3);
    ensure!(v == 5.0, "tv_sigmoid(2.5e-3) = {v:?}");
    Ok(())
}

pub fn default_pass_configs() -> Check {
    let (p1, p2) = (PassConfig::pass1(), PassConfig::pass2());
    let third = 1.0 / 3.0;
    let expect1 = BTreeMap::from([(l(3, 1), third), (l(4, 1), third), (l(5, 1), third)]);
    ensure!(p1.style == expect1, "pass-1 style layers {:?}", p1.style);
    ensure!(
        p1.content == BTreeMap::from([(l(4, 1), 1.0)]),
        "pass-1 content {:?}",
        p1.content
    );
    ensure!(p1.histogram.is_empty(), "pass 1 has histogram layers");
    ensure!(
        p1.weights.tv == 0.0 && p1.weights.histogram == 0.0,
        "pass 1 has TV or histogram weight"
    );
    let expect_hist = BTreeMap::from([(l(1, 1), 0.5), (l(4, 1), 0.5)]);
    ensure!(
        p2.histogram == expect_hist,
        "pass-2 histogram layers {:?}",
        p2.histogram
    );
    ensure!(p2.reference == l(4, 1), "pass-2 reference {}", p2.reference);
    ensure!(
        p2.content.keys().eq([l(4, 1)].iter()),
        "pass-2 content {:?}",
        p2.content
    );
    ensure!(
        p2.style
            .keys()
            .copied()
            .eq([l(1, 1), l(2, 1), l(3, 1), l(4, 1)]),
        "pass-2 style layers {:?}",
        p2.style
    );
    Ok(())
}

pub fn interpolation() -> Check {
    let table = StyleCategoryTable::builtin();
    let (ws, _) =
        interpolate_weights(&StyleProbs::uniform(&table), &table).map_err(|e| e.to_string())?;
    // 2 weak, 2 strong, 14 medium
    ensure!((ws - 92.0 / 18.0).abs() < 1e-12, "uniform gives {ws}");
    let probs = StyleProbs::new(BTreeMap::from([
        ("Cubism".into(), 0.5),
        ("Baroque".into(), 0.5),
    ]))
    .map_err(|e| e.to_string())?;
    let (ws, wh) = interpolate_weights(&probs, &table).map_err(|e| e.to_string())?;
    ensure!(
        ws == 5.5 && wh == 5.5,
        "half Cubism, half Baroque gives ({ws}, {wh})"
    );
    Ok(())
}

pub fn tv_weight() -> Check {
    let table = StyleCategoryTable::builtin();
    let probs = StyleProbs::one_hot("Cubism");
    let flat = Image::filled(16, 16, [0.3, 0.5, 0.7]);
    let w = predict_weights(&flat, &probs, &table)
        .map_err(|e| e.to_string())?
        .weights;
    let expected = 10.0 * 10.0 / (1.0 + (-25.0f64).exp());
    ensure!(
        (w.tv - expected).abs() < 1e-12,
        "flat painting w_tv {}",
        w.tv
    );

    // every pixel but the first column has TV 3 * 0.005²
    let ramp = Image::from_fn(16, 16, |x, _| [0.005 * x as f64; 3]);
    let m = median_tv(&ramp);
    ensure!((m - 7.5e-5).abs() < 1e-15, "ramp median TV {m:e}");
    let w = predict_weights(&ramp, &probs, &table)
        .map_err(|e| e.to_string())?
        .weights;
    let expected = 10.0 * 10.0 / (1.0 + (1e4 * 7.5e-5 - 25.0f64).exp());
    ensure!(
        (w.tv - expected).abs() < 1e-9,
        "ramp w_tv {} vs {expected}",
        w.tv
    );

    let noisy = painterly::synthetic::noise(32, 32, 3);
    let w = predict_weights(&noisy, &probs, &table)
        .map_err(|e| e.to_string())?
        .weights;
    ensure!(w.tv == 0.0, "noise w_tv {:e}", w.tv);
    ensure!(
        w.style == 10.0 && w.histogram == 10.0,
        "w_s = w_hist = tau violated"
    );
    Ok(())
}

/// The constants criterion.
pub fn suite() -> Check {
    one_hot_weights()?;
    sigmoid_midpoint()?;
    default_pass_configs()?;
    interpolation()?;
    tv_weight()
}
