//! Reconstruction losses over masked activations and their gradients.
//!
//! Activation-space terms (content, Gram style, histogram) return a loss value
//! and a [`FeatureStack`] of gradients with respect to the output activations.
//! The image-space total variation term returns an image gradient directly.
//!
//! All activation terms are restricted to in-mask positions. Content and Gram
//! terms normalize by the number of in-mask positions (and the Gram target by
//! the number of gathered style vectors) so their magnitude does not grow with
//! the mask area.

mod total;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::backbone::{FeatureMap, FeatureStack, LayerId};
use crate::error::{Error, Result};
use crate::image::{Image, Mask, CHANNELS};
use crate::mapping::MappingField;

pub use total::{LossBreakdown, Pass, PassObjective};

/// Scalar weights balancing the terms of the second-pass loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub style: f64,
    pub histogram: f64,
    pub tv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            style: 1.0,
            histogram: 1.0,
            tv: 0.0,
        }
    }
}

/// Per-layer coefficients plus the scalar term weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossConfig {
    pub content: BTreeMap<LayerId, f64>,
    pub style: BTreeMap<LayerId, f64>,
    pub histogram: BTreeMap<LayerId, f64>,
    pub weights: LossWeights,
}

impl LossConfig {
    /// Every layer with a coefficient of any kind, in network order.
    pub fn layers(&self) -> Vec<LayerId> {
        let set: BTreeSet<LayerId> = self
            .content
            .keys()
            .chain(self.style.keys())
            .chain(self.histogram.keys())
            .copied()
            .collect();
        set.into_iter().collect()
    }
}

/// `F Fᵀ` for a channel-major `N x D` activation matrix.
pub fn gram(features: &FeatureMap) -> Vec<f64> {
    let all: Vec<usize> = (0..features.positions()).collect();
    let x = gather_columns(features, &all);
    gram_of(&x, features.channels, all.len())
}

/// Copies the activation vectors at `positions` into a row-major `N x positions.len()` matrix.
fn gather_columns(f: &FeatureMap, positions: &[usize]) -> Vec<f64> {
    let d = f.positions();
    let mut out = Vec::with_capacity(f.channels * positions.len());
    for c in 0..f.channels {
        let plane = &f.data[c * d..(c + 1) * d];
        out.extend(positions.iter().map(|&p| plane[p]));
    }
    out
}

fn gram_of(x: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut g = vec![0.0; n * n];
    if d == 0 {
        return g;
    }
    // SAFETY: x is n x d row-major, read as x and as its transpose; g is n x n.
    unsafe {
        matrixmultiply::dgemm(
            n,
            d,
            n,
            1.0,
            x.as_ptr(),
            d as isize,
            1,
            x.as_ptr(),
            1,
            d as isize,
            0.0,
            g.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    g
}

/// Content activations to preserve at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentTarget {
    pub layer: LayerId,
    pub target: FeatureMap,
    pub mask: Mask,
}

/// `Σ_ℓ α_ℓ / (2 N_ℓ D'_ℓ) Σ (F[O] − F[I])²` over in-mask positions.
pub fn content_loss_and_grad(
    output: &FeatureStack,
    targets: &[ContentTarget],
    alpha: &BTreeMap<LayerId, f64>,
) -> Result<(f64, FeatureStack)> {
    let mut loss = 0.0;
    let mut grads = FeatureStack::new();
    for t in targets {
        let a = alpha.get(&t.layer).copied().unwrap_or(0.0);
        if a == 0.0 {
            continue;
        }
        let out = output.require(t.layer)?;
        check_shapes(t.layer, out, &t.target, &t.mask)?;
        let inside = t.mask.indices();
        if inside.is_empty() {
            return Err(Error::EmptyMask(t.layer.to_string()));
        }
        let d = out.positions();
        let norm = (out.channels * inside.len()) as f64;
        let mut g = FeatureMap::zeros(out.channels, out.height, out.width);
        let mut sum = 0.0;
        for c in 0..out.channels {
            for &p in &inside {
                let i = c * d + p;
                let diff = out.data[i] - t.target.data[i];
                sum += diff * diff;
                g.data[i] = a / norm * diff;
            }
        }
        loss += a / (2.0 * norm) * sum;
        grads.accumulate(t.layer, &g, 1.0);
    }
    Ok((loss, grads))
}

fn check_shapes(layer: LayerId, a: &FeatureMap, b: &FeatureMap, mask: &Mask) -> Result<()> {
    if !a.same_shape(b) || mask.width() != a.width || mask.height() != a.height {
        return Err(Error::Shape(format!(
            "{layer}: output {}x{}x{}, target {}x{}x{}, mask {}x{}",
            a.channels,
            a.height,
            a.width,
            b.channels,
            b.height,
            b.width,
            mask.height(),
            mask.width()
        )));
    }
    Ok(())
}

/// How mapped style vectors are pooled into a Gram target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    /// Every mapped vector counts, repeats included.
    All,
    /// Each distinct style vector counts once.
    Unique,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramTarget {
    pub channels: usize,
    /// Mean outer product of the gathered style vectors, `N x N` row-major.
    pub gram: Vec<f64>,
    /// Number of gathered vectors.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramTarget {
    /// Per channel, the mapped style activations sorted ascending.
    pub sorted: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StyleTargets {
    pub grams: BTreeMap<LayerId, GramTarget>,
    pub histograms: BTreeMap<LayerId, HistogramTarget>,
}

/// Gathers the style activation vectors selected by `mapping` at every mapped layer.
///
/// Gram targets follow `mode`; histogram targets always use the full multiset of
/// mapped vectors. Layers with an empty mapping are skipped.
pub fn build_style_targets(
    style: &FeatureStack,
    mapping: &MappingField,
    mode: TargetMode,
) -> Result<StyleTargets> {
    let mut targets = StyleTargets::default();
    for (&layer, m) in &mapping.layers {
        let fs = style.require(layer)?;
        let all: Vec<usize> = m.pairs().map(|(_, q)| q).collect();
        if all.is_empty() {
            continue;
        }
        let picked = match mode {
            TargetMode::All => all.clone(),
            TargetMode::Unique => {
                let mut seen = BTreeSet::new();
                all.iter().copied().filter(|q| seen.insert(*q)).collect()
            }
        };
        let x = gather_columns(fs, &picked);
        let mut g = gram_of(&x, fs.channels, picked.len());
        let inv = 1.0 / picked.len() as f64;
        for v in &mut g {
            *v *= inv;
        }
        targets.grams.insert(
            layer,
            GramTarget {
                channels: fs.channels,
                gram: g,
                count: picked.len(),
            },
        );
        let x = gather_columns(fs, &all);
        let sorted = x
            .chunks(all.len())
            .map(|ch| {
                let mut v = ch.to_vec();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        targets.histograms.insert(layer, HistogramTarget { sorted });
    }
    Ok(targets)
}

/// `Σ_ℓ β_ℓ / (2 N_ℓ²) ‖G_ℓ[O] − G_target‖²_F` with `G_ℓ[O]` the mean outer
/// product of the in-mask output vectors.
pub fn style_loss_gram(
    output: &FeatureStack,
    targets: &StyleTargets,
    beta: &BTreeMap<LayerId, f64>,
    masks: &BTreeMap<LayerId, Mask>,
) -> Result<(f64, FeatureStack)> {
    let mut loss = 0.0;
    let mut grads = FeatureStack::new();
    for (&layer, &b) in beta {
        if b == 0.0 {
            continue;
        }
        let out = output.require(layer)?;
        let target = targets
            .grams
            .get(&layer)
            .ok_or_else(|| Error::Config(format!("no Gram target for style layer {layer}")))?;
        let mask = masks
            .get(&layer)
            .ok_or_else(|| Error::Config(format!("no mask for style layer {layer}")))?;
        let inside = mask.indices();
        if inside.is_empty() {
            return Err(Error::EmptyMask(layer.to_string()));
        }
        let (l, g) = gram_term(out, target, &inside, b)?;
        loss += l;
        grads.accumulate(layer, &g, 1.0);
    }
    Ok((loss, grads))
}

fn gram_term(
    out: &FeatureMap,
    target: &GramTarget,
    inside: &[usize],
    beta: f64,
) -> Result<(f64, FeatureMap)> {
    let n = out.channels;
    if target.channels != n {
        return Err(Error::Shape(format!(
            "Gram target has {} channels, output has {n}",
            target.channels
        )));
    }
    let dm = inside.len();
    let x = gather_columns(out, inside);
    let mut g = gram_of(&x, n, dm);
    let inv = 1.0 / dm as f64;
    let mut sum = 0.0;
    for (gv, tv) in g.iter_mut().zip(&target.gram) {
        *gv = *gv * inv - tv;
        sum += *gv * *gv;
    }
    let nn = (n * n) as f64;
    let loss = beta / (2.0 * nn) * sum;
    // d/dX = 2β/(N² D') (G − T) X
    let scale = 2.0 * beta / (nn * dm as f64);
    let mut gx = vec![0.0; n * dm];
    // SAFETY: g is n x n, x is n x dm, gx is n x dm, all row-major.
    unsafe {
        matrixmultiply::dgemm(
            n,
            n,
            dm,
            scale,
            g.as_ptr(),
            n as isize,
            1,
            x.as_ptr(),
            dm as isize,
            1,
            0.0,
            gx.as_mut_ptr(),
            dm as isize,
            1,
        );
    }
    let mut grad = FeatureMap::zeros(n, out.height, out.width);
    let d = out.positions();
    for c in 0..n {
        for (j, &p) in inside.iter().enumerate() {
            grad.data[c * d + p] = gx[c * dm + j];
        }
    }
    Ok((loss, grad))
}

/// Histogram matching by rank: each output value is replaced by the style value
/// at the same empirical CDF quantile.
///
/// Output values are ranked (ties by position); the value of rank `r` out of `n`
/// takes the style value at sorted index `ceil((r + 1) m / n) − 1`, with `m` the
/// number of style values. Equal counts therefore give an exact rank-for-rank
/// permutation.
pub fn histmatch(values: &[f64], style_sorted: &[f64]) -> Vec<f64> {
    let n = values.len();
    let m = style_sorted.len();
    if n == 0 || m == 0 {
        return values.to_vec();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        let idx = ((rank + 1) * m).div_ceil(n) - 1;
        out[i] = style_sorted[idx];
    }
    out
}

/// `γ Σ (F − R)²` with the remap `R` held constant; gradient `2γ (F − R)`.
pub fn histogram_term(values: &[f64], remapped: &[f64], gamma: f64) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let grad = values
        .iter()
        .zip(remapped)
        .map(|(f, r)| {
            let d = f - r;
            loss += d * d;
            2.0 * gamma * d
        })
        .collect();
    (gamma * loss, grad)
}

pub fn histogram_loss_and_grad(
    output: &FeatureStack,
    targets: &StyleTargets,
    gamma: &BTreeMap<LayerId, f64>,
    masks: &BTreeMap<LayerId, Mask>,
) -> Result<(f64, FeatureStack)> {
    let mut loss = 0.0;
    let mut grads = FeatureStack::new();
    for (&layer, &g) in gamma {
        if g == 0.0 {
            continue;
        }
        let out = output.require(layer)?;
        let target = targets
            .histograms
            .get(&layer)
            .ok_or_else(|| Error::Config(format!("no histogram target for layer {layer}")))?;
        let mask = masks
            .get(&layer)
            .ok_or_else(|| Error::Config(format!("no mask for histogram layer {layer}")))?;
        let inside = mask.indices();
        if inside.is_empty() {
            return Err(Error::EmptyMask(layer.to_string()));
        }
        if target.sorted.len() != out.channels {
            return Err(Error::Shape(format!(
                "histogram target at {layer} has {} channels, output has {}",
                target.sorted.len(),
                out.channels
            )));
        }
        let d = out.positions();
        let mut grad = FeatureMap::zeros(out.channels, out.height, out.width);
        for c in 0..out.channels {
            let values: Vec<f64> = inside.iter().map(|&p| out.data[c * d + p]).collect();
            let remapped = histmatch(&values, &target.sorted[c]);
            let (l, gv) = histogram_term(&values, &remapped, g);
            loss += l;
            for (&p, v) in inside.iter().zip(gv) {
                grad.data[c * d + p] = v;
            }
        }
        grads.accumulate(layer, &grad, 1.0);
    }
    Ok((loss, grads))
}

/// Squared-difference total variation over vertical and horizontal pixel pairs
/// whose two ends both lie in `region`, summed over channels.
pub fn tv_loss_and_grad(image: &Image, region: &Mask) -> (f64, Image) {
    let (w, h) = (image.width(), image.height());
    let mut grad = Image::new(w, h);
    let mut loss = 0.0;
    for c in 0..CHANNELS {
        let plane = image.plane(c);
        let mut g = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !region.contains(i) {
                    continue;
                }
                if y > 0 && region.contains(i - w) {
                    let d = plane[i] - plane[i - w];
                    loss += d * d;
                    g[i] += 2.0 * d;
                    g[i - w] -= 2.0 * d;
                }
                if x > 0 && region.contains(i - 1) {
                    let d = plane[i] - plane[i - 1];
                    loss += d * d;
                    g[i] += 2.0 * d;
                    g[i - 1] -= 2.0 * d;
                }
            }
        }
        grad.plane_mut(c).copy_from_slice(&g);
    }
    (loss, grad)
}
