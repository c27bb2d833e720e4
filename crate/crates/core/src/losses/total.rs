use std::collections::BTreeMap;
use std::fmt;

use crate::backbone::{Backbone, FeatureStack, LayerId};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};

use super::{
    content_loss_and_grad, histogram_loss_and_grad, style_loss_gram, tv_loss_and_grad,
    ContentTarget, LossConfig, StyleTargets,
};

/// Which reconstruction loss to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    /// `L_c + w_s L_s`.
    One,
    /// `L_c + w_s L_s1 + w_hist L_hist + w_tv L_tv`.
    Two,
}

/// Unweighted term values and the weighted total of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub content: f64,
    pub style: f64,
    pub histogram: f64,
    pub tv: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "iteration,content,style,histogram,tv,total";

    pub fn csv_record(&self, iteration: usize) -> String {
        format!(
            "{iteration},{:e},{:e},{:e},{:e},{:e}",
            self.content, self.style, self.histogram, self.tv, self.total
        )
    }
}

impl fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L_c={:.6e} L_s={:.6e} L_hist={:.6e} L_tv={:.6e} total={:.6e}",
            self.content, self.style, self.histogram, self.tv, self.total
        )
    }
}

/// Image-space loss of one reconstruction pass.
#[derive(Debug, Clone)]
pub struct PassObjective<'a> {
    backbone: &'a Backbone,
    pass: Pass,
    config: LossConfig,
    content: Vec<ContentTarget>,
    style: StyleTargets,
    masks: BTreeMap<LayerId, Mask>,
    tv_region: Mask,
    wanted: Vec<LayerId>,
}

impl<'a> PassObjective<'a> {
    /// `masks` holds the in-mask cells of every activation layer in `config`;
    /// `tv_region` is the pixel region whose smoothness is penalized.
    pub fn new(
        backbone: &'a Backbone,
        pass: Pass,
        config: LossConfig,
        content: Vec<ContentTarget>,
        style: StyleTargets,
        masks: BTreeMap<LayerId, Mask>,
        tv_region: Mask,
    ) -> Result<Self> {
        let mut wanted = config.layers();
        if pass == Pass::One {
            wanted.retain(|l| config.content.contains_key(l) || config.style.contains_key(l));
        }
        for layer in &wanted {
            if !masks.contains_key(layer) {
                return Err(Error::Config(format!("no mask for layer {layer}")));
            }
        }
        Ok(Self {
            backbone,
            pass,
            config,
            content,
            style,
            masks,
            tv_region,
            wanted,
        })
    }

    pub fn pass(&self) -> Pass {
        self.pass
    }

    pub fn config(&self) -> &LossConfig {
        &self.config
    }

    pub fn tv_region(&self) -> &Mask {
        &self.tv_region
    }

    fn activation_terms(&self, features: &FeatureStack) -> Result<(LossBreakdown, FeatureStack)> {
        let w = self.config.weights;
        let mut b = LossBreakdown::default();
        let mut grads = FeatureStack::new();

        let (lc, gc) = content_loss_and_grad(features, &self.content, &self.config.content)?;
        b.content = lc;
        for (layer, g) in gc.iter() {
            grads.accumulate(layer, g, 1.0);
        }

        let (ls, gs) = style_loss_gram(features, &self.style, &self.config.style, &self.masks)?;
        b.style = ls;
        if w.style != 0.0 {
            for (layer, g) in gs.iter() {
                grads.accumulate(layer, g, w.style);
            }
        }
        b.total = lc + w.style * ls;

        if self.pass == Pass::Two {
            let (lh, gh) = histogram_loss_and_grad(
                features,
                &self.style,
                &self.config.histogram,
                &self.masks,
            )?;
            b.histogram = lh;
            if w.histogram != 0.0 {
                for (layer, g) in gh.iter() {
                    grads.accumulate(layer, g, w.histogram);
                }
            }
            b.total += w.histogram * lh;
        }
        Ok((b, grads))
    }

    /// Loss terms without the gradient.
    pub fn loss(&self, image: &Image) -> Result<LossBreakdown> {
        let features = self.backbone.forward(image, &self.wanted)?;
        let (mut b, _) = self.activation_terms(&features)?;
        if self.pass == Pass::Two {
            let (tv, _) = tv_loss_and_grad(image, &self.tv_region);
            b.tv = tv;
            b.total += self.config.weights.tv * tv;
        }
        Ok(b)
    }

    /// Loss terms and `dLoss/dImage`.
    pub fn evaluate(&self, image: &Image) -> Result<(LossBreakdown, Image)> {
        let trace = self.backbone.forward_trace(image, &self.wanted)?;
        let (mut b, grads) = self.activation_terms(trace.features())?;
        let mut gradient = trace.backward(self.backbone, &grads)?;
        if self.pass == Pass::Two {
            let (tv, gtv) = tv_loss_and_grad(image, &self.tv_region);
            b.tv = tv;
            let w_tv = self.config.weights.tv;
            b.total += w_tv * tv;
            if w_tv != 0.0 {
                for (g, t) in gradient.data_mut().iter_mut().zip(gtv.data()) {
                    *g += w_tv * t;
                }
            }
        }
        Ok((b, gradient))
    }
}
