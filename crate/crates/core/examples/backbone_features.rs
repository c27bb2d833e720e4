//! Forward a procedural painting through a narrow random VGG-19 prefix, print
//! the per-layer shapes and activation statistics, and round-trip the weights
//! through an NPHW file.

use painterly::backbone::{Backbone, LayerId, Precision, WeightBank};
use painterly::synthetic::{narrow_vgg19, painting};

pub struct LayerStats {
    pub layer: LayerId,
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub mean: f64,
    pub active: f64,
}

pub fn run_example(size: usize) -> painterly::Result<Vec<LayerStats>> {
    let bank = narrow_vgg19(4, 0);
    let path = std::env::temp_dir().join(format!("painterly_narrow_{}.nphw", std::process::id()));
    bank.save(&path)?;
    let reloaded = WeightBank::load(&path)?;
    let _ = std::fs::remove_file(&path);
    assert_eq!(reloaded, bank);

    let backbone = Backbone::new(reloaded, Precision::Single);
    let image = painting(size, size, 3);
    let features = backbone.forward(&image, &LayerId::vgg19())?;
    Ok(features
        .iter()
        .map(|(layer, f)| {
            let n = f.data.len() as f64;
            LayerStats {
                layer,
                channels: f.channels,
                width: f.width,
                height: f.height,
                mean: f.data.iter().sum::<f64>() / n,
                active: f.data.iter().filter(|v| **v > 0.0).count() as f64 / n,
            }
        })
        .collect())
}

#[allow(dead_code)]
fn main() -> painterly::Result<()> {
    for s in run_example(96)? {
        println!(
            "{:8} {:3} x {:3} x {:3}   mean {:9.3}   active {:5.1}%",
            s.layer.to_string(),
            s.channels,
            s.height,
            s.width,
            s.mean,
            100.0 * s.active
        );
    }
    Ok(())
}
