//! The two reconstruction passes: feature extraction, patch mapping, target
//! building and L-BFGS reconstruction of the masked region.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, LayerId};
use crate::error::{Error, Result};
use crate::image::{Image, Mask, CHANNELS};
use crate::losses::{
    build_style_targets, ContentTarget, LossBreakdown, LossConfig, LossWeights, Pass,
    PassObjective, TargetMode,
};
use crate::mapping::{consistent_mapping, independent_mapping, resize_mask, MappingField};
use crate::optimizer::{Lbfgs, OptimizeReport, Termination};

/// Largest side length processed; bigger inputs are scaled down first.
pub const MAX_DIMENSION: usize = 512;
pub const DEFAULT_DILATION: usize = 8;
pub const DEFAULT_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingKind {
    Independent,
    Consistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassConfig {
    pub objective: Pass,
    pub content: BTreeMap<LayerId, f64>,
    pub style: BTreeMap<LayerId, f64>,
    pub histogram: BTreeMap<LayerId, f64>,
    /// Reference layer of the consistent mapping.
    pub reference: LayerId,
    pub mapping: MappingKind,
    pub target_mode: TargetMode,
    pub weights: LossWeights,
    pub iterations: usize,
}

fn l(block: u8, index: u8) -> LayerId {
    LayerId::new(block, index)
}

impl PassConfig {
    /// Coarse pass: independent mapping, Gram loss on conv3_1..conv5_1.
    pub fn pass1() -> Self {
        Self {
            objective: Pass::One,
            content: BTreeMap::from([(l(4, 1), 1.0)]),
            style: [l(3, 1), l(4, 1), l(5, 1)]
                .into_iter()
                .map(|k| (k, 1.0 / 3.0))
                .collect(),
            histogram: BTreeMap::new(),
            reference: l(4, 1),
            mapping: MappingKind::Independent,
            target_mode: TargetMode::All,
            weights: LossWeights {
                style: 1.0,
                histogram: 0.0,
                tv: 0.0,
            },
            iterations: DEFAULT_ITERATIONS,
        }
    }

    /// Refinement pass: consistent mapping at conv4_1, unique Gram targets,
    /// histogram and total variation terms.
    pub fn pass2() -> Self {
        Self {
            objective: Pass::Two,
            content: BTreeMap::from([(l(4, 1), 1.0)]),
            style: [l(1, 1), l(2, 1), l(3, 1), l(4, 1)]
                .into_iter()
                .map(|k| (k, 0.25))
                .collect(),
            histogram: [l(1, 1), l(4, 1)].into_iter().map(|k| (k, 0.5)).collect(),
            reference: l(4, 1),
            mapping: MappingKind::Consistent,
            target_mode: TargetMode::Unique,
            weights: LossWeights::default(),
            iterations: DEFAULT_ITERATIONS,
        }
    }

    pub fn with_weights(mut self, weights: LossWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn loss_config(&self) -> LossConfig {
        let histogram = if self.objective == Pass::Two {
            self.histogram.clone()
        } else {
            BTreeMap::new()
        };
        LossConfig {
            content: self.content.clone(),
            style: self.style.clone(),
            histogram,
            weights: self.weights,
        }
    }

    /// Adapts the configuration to a truncated backbone: every layer the bank
    /// lacks is replaced by the deepest available layer before it, and
    /// coefficients landing on the same layer are summed.
    pub fn fit_to_layers(&self, available: &[LayerId]) -> Result<Self> {
        let substitute = |layer: LayerId| -> Result<LayerId> {
            available
                .iter()
                .copied()
                .filter(|a| *a <= layer)
                .max()
                .ok_or_else(|| Error::UnknownLayer(layer.to_string()))
        };
        let remap = |coeffs: &BTreeMap<LayerId, f64>| -> Result<BTreeMap<LayerId, f64>> {
            let mut out = BTreeMap::new();
            for (&layer, &c) in coeffs {
                *out.entry(substitute(layer)?).or_insert(0.0) += c;
            }
            Ok(out)
        };
        Ok(Self {
            content: remap(&self.content)?,
            style: remap(&self.style)?,
            histogram: remap(&self.histogram)?,
            reference: substitute(self.reference)?,
            ..self.clone()
        })
    }

    /// Layers that need a patch mapping.
    fn mapped_layers(&self) -> Vec<LayerId> {
        let mut layers: Vec<LayerId> = self.style.keys().copied().collect();
        if self.objective == Pass::Two {
            layers.extend(self.histogram.keys().copied());
        }
        if self.mapping == MappingKind::Consistent {
            layers.push(self.reference);
        }
        layers.sort();
        layers.dedup();
        layers
    }

    fn all_layers(&self) -> Vec<LayerId> {
        let mut layers = self.mapped_layers();
        layers.extend(self.content.keys().copied());
        layers.sort();
        layers.dedup();
        layers
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonizeOptions {
    /// Radius in pixels of the disc dilating the mask into the optimized region.
    pub dilation: usize,
    pub optimizer: Lbfgs,
}

impl Default for HarmonizeOptions {
    fn default() -> Self {
        Self {
            dilation: DEFAULT_DILATION,
            optimizer: Lbfgs::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PassResult {
    /// Clamped reconstruction composited over the painting.
    pub image: Image,
    pub mapping: MappingField,
    pub report: OptimizeReport,
    /// Loss terms at the starting image and after every accepted step.
    pub trace: Vec<LossBreakdown>,
}

impl PassResult {
    pub fn initial(&self) -> LossBreakdown {
        self.trace[0]
    }

    pub fn last(&self) -> LossBreakdown {
        *self.trace.last().expect("trace holds the initial loss")
    }
}

#[derive(Debug, Clone)]
pub struct TwoPassResult {
    pub pass1: PassResult,
    pub pass2: PassResult,
}

impl TwoPassResult {
    pub fn output(&self) -> &Image {
        &self.pass2.image
    }
}

fn check_inputs(image: &Image, mask: &Mask, painting: &Image) -> Result<()> {
    if !image.same_shape(painting)
        || mask.width() != image.width()
        || mask.height() != image.height()
    {
        return Err(Error::Shape(format!(
            "input {}x{}, mask {}x{}, painting {}x{} must agree",
            image.width(),
            image.height(),
            mask.width(),
            mask.height(),
            painting.width(),
            painting.height()
        )));
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask("image".into()));
    }
    Ok(())
}

/// Reconstructs the masked region of `init` so that its activations follow
/// the painting's mapped patches while keeping the activations of
/// `content_source`.
///
/// Optimization starts from `init`; only pixels within the dilated mask move.
/// The result is clamped to `[0, 1]` and composited over `painting` outside
/// the dilated mask.
pub fn run_pass(
    init: &Image,
    content_source: &Image,
    mask: &Mask,
    painting: &Image,
    cfg: &PassConfig,
    backbone: &Backbone,
    options: &HarmonizeOptions,
) -> Result<PassResult> {
    check_inputs(init, mask, painting)?;
    check_inputs(content_source, mask, painting)?;

    let layers = cfg.all_layers();
    let mut masks = BTreeMap::new();
    for &layer in &layers {
        let m = resize_mask(mask, layer);
        if m.is_empty() && layer != cfg.reference {
            return Err(Error::EmptyMask(layer.to_string()));
        }
        masks.insert(layer, m);
    }

    let mapped = cfg.mapped_layers();
    let f_init = backbone.forward(init, &mapped)?;
    let f_style = backbone.forward(painting, &mapped)?;
    let mapping = match cfg.mapping {
        MappingKind::Independent => independent_mapping(&f_init, mask, &f_style)?,
        MappingKind::Consistent => consistent_mapping(&f_init, mask, &f_style, cfg.reference)?,
    };
    let style_targets = build_style_targets(&f_style, &mapping, cfg.target_mode)?;

    let content_layers: Vec<LayerId> = cfg.content.keys().copied().collect();
    let f_content = backbone.forward(content_source, &content_layers)?;
    let content = content_layers
        .iter()
        .map(|&layer| {
            Ok(ContentTarget {
                layer,
                target: f_content.require(layer)?.clone(),
                mask: masks[&layer].clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let region = mask.dilate(options.dilation);
    let objective = PassObjective::new(
        backbone,
        cfg.objective,
        cfg.loss_config(),
        content,
        style_targets,
        masks,
        region.clone(),
    )?;

    let (w, h) = (init.width(), init.height());
    let active: Vec<bool> = (0..CHANNELS)
        .flat_map(|_| region.data().iter().copied())
        .collect();
    let last = Cell::new(LossBreakdown::default());
    let trace = RefCell::new(Vec::new());
    let eval = |x: &[f64], g: &mut [f64]| -> Result<f64> {
        let img = Image::from_planar(w, h, x.to_vec())?;
        let (b, grad) = objective.evaluate(&img)?;
        g.copy_from_slice(grad.data());
        if trace.borrow().is_empty() {
            trace.borrow_mut().push(b);
        }
        last.set(b);
        Ok(b.total)
    };
    let mut on_step = |_: usize, _: f64| trace.borrow_mut().push(last.get());
    let optimizer = options.optimizer.with_max_iters(cfg.iterations);
    let (x, report) = optimizer.minimize(init.data(), Some(&active), eval, Some(&mut on_step))?;
    if report.termination == Termination::NonFinite {
        return Err(Error::NonFinite(format!(
            "{:?} pass loss after {} iterations",
            cfg.objective, report.iterations_run
        )));
    }

    let mut out = Image::from_planar(w, h, x)?;
    out.clamp_unit();
    Ok(PassResult {
        image: out.composite_over(painting, &region),
        mapping,
        report,
        trace: trace.into_inner(),
    })
}

/// One pass started from the composite itself.
pub fn single_pass(
    image: &Image,
    mask: &Mask,
    painting: &Image,
    cfg: &PassConfig,
    backbone: &Backbone,
    options: &HarmonizeOptions,
) -> Result<PassResult> {
    run_pass(image, image, mask, painting, cfg, backbone, options)
}

/// Coarse pass from `image`, then the refinement pass from its result. The
/// content target of both passes is `image`.
pub fn two_pass(
    image: &Image,
    mask: &Mask,
    painting: &Image,
    cfg1: &PassConfig,
    cfg2: &PassConfig,
    backbone: &Backbone,
    options: &HarmonizeOptions,
) -> Result<TwoPassResult> {
    let pass1 = run_pass(image, image, mask, painting, cfg1, backbone, options)?;
    let pass2 = run_pass(&pass1.image, image, mask, painting, cfg2, backbone, options)?;
    Ok(TwoPassResult { pass1, pass2 })
}

/// Output size with the longer side at most `max_dim`, aspect ratio kept.
pub fn fitted_size(width: usize, height: usize, max_dim: usize) -> (usize, usize) {
    let longest = width.max(height);
    if longest <= max_dim || longest == 0 {
        return (width, height);
    }
    let s = max_dim as f64 / longest as f64;
    let scale = |v: usize| ((v as f64 * s).round() as usize).clamp(1, max_dim);
    (scale(width), scale(height))
}

/// Scales the composite, mask and painting so the longer side is at most
/// `max_dim`: bicubic for images, area coverage ≥ 0.5 for the mask.
pub fn fit_inputs(
    image: &Image,
    mask: &Mask,
    painting: &Image,
    max_dim: usize,
) -> Result<(Image, Mask, Image)> {
    if !image.same_shape(painting)
        || mask.width() != image.width()
        || mask.height() != image.height()
    {
        return Err(Error::Shape(format!(
            "input {}x{}, mask {}x{}, painting {}x{} must agree",
            image.width(),
            image.height(),
            mask.width(),
            mask.height(),
            painting.width(),
            painting.height()
        )));
    }
    let (w, h) = fitted_size(image.width(), image.height(), max_dim);
    if (w, h) == (image.width(), image.height()) {
        return Ok((image.clone(), mask.clone(), painting.clone()));
    }
    Ok((
        image.resize(w, h),
        mask.resample(w, h),
        painting.resize(w, h),
    ))
}
