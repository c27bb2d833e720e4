//! Painting estimator: turns a painting's style-class probabilities and its
//! texture level into the loss weights of the second pass.
//!
//! The style classifier itself is external; probabilities arrive as a JSON
//! sidecar (`{"styles": {"Cubism": 0.7, ...}}`) or as a one-hot choice.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::losses::LossWeights;

const BUILTIN_TABLE: &str = include_str!("../data/style_table.json");

/// Number of style classes the estimator distinguishes.
pub const STYLE_COUNT: usize = 18;

const PROB_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Weak,
    Medium,
    Strong,
}

impl Strength {
    /// `(w_s, w_hist)` of the strength class.
    pub fn weights(self) -> [f64; 2] {
        match self {
            Strength::Weak => [1.0, 1.0],
            Strength::Medium => [5.0, 5.0],
            Strength::Strong => [10.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleEntry {
    pub name: String,
    pub class: Strength,
    /// `(w_s, w_hist)`.
    pub weights: [f64; 2],
    /// Set when the class is a fallback rather than a published assignment.
    #[serde(default)]
    pub default: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleCategoryTable {
    styles: Vec<StyleEntry>,
}

impl StyleCategoryTable {
    /// The bundled 18-style table.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TABLE).expect("bundled style table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("style table: {e}")))?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        if self.styles.len() != STYLE_COUNT {
            return Err(Error::Config(format!(
                "style table must list {STYLE_COUNT} styles, found {}",
                self.styles.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for s in &self.styles {
            if !seen.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate style `{}`", s.name)));
            }
            if s.weights != s.class.weights() {
                return Err(Error::Config(format!(
                    "style `{}`: weights {:?} do not match class {:?} {:?}",
                    s.name,
                    s.weights,
                    s.class,
                    s.class.weights()
                )));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[StyleEntry] {
        &self.styles
    }

    pub fn get(&self, name: &str) -> Option<&StyleEntry> {
        self.styles.iter().find(|s| s.name == name)
    }
}

/// Softmax output of a style classifier, keyed by style name. Styles left out
/// have probability zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleProbs {
    styles: BTreeMap<String, f64>,
}

impl StyleProbs {
    pub fn new(styles: BTreeMap<String, f64>) -> Result<Self> {
        let probs = Self { styles };
        probs.validate()?;
        Ok(probs)
    }

    pub fn one_hot(name: &str) -> Self {
        Self {
            styles: BTreeMap::from([(name.to_string(), 1.0)]),
        }
    }

    pub fn uniform(table: &StyleCategoryTable) -> Self {
        let p = 1.0 / table.styles.len() as f64;
        Self {
            styles: table.styles.iter().map(|s| (s.name.clone(), p)).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probs: Self =
            serde_json::from_str(text).map_err(|e| Error::StyleProbs(e.to_string()))?;
        probs.validate()?;
        Ok(probs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let probs: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        probs.validate()?;
        Ok(probs)
    }

    fn validate(&self) -> Result<()> {
        let mut sum = 0.0;
        for (name, &p) in &self.styles {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::StyleProbs(format!("`{name}` has probability {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() >= PROB_SUM_TOL {
            return Err(Error::StyleProbs(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.styles.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Probability-weighted mean of the table's `(w_s, w_hist)` pairs.
pub fn interpolate_weights(probs: &StyleProbs, table: &StyleCategoryTable) -> Result<(f64, f64)> {
    probs.validate()?;
    let mut ws = 0.0;
    let mut wh = 0.0;
    for (name, p) in probs.iter() {
        let entry = table
            .get(name)
            .ok_or_else(|| Error::StyleProbs(format!("unknown style `{name}`")))?;
        ws += p * entry.weights[0];
        wh += p * entry.weights[1];
    }
    Ok((ws, wh))
}

/// Per-pixel squared-difference total variation (up and left neighbours,
/// summed over channels), then the lower median over all pixels.
pub fn median_tv(painting: &Image) -> f64 {
    let (w, h) = (painting.width(), painting.height());
    if w * h == 0 {
        return 0.0;
    }
    let mut t = vec![0.0; w * h];
    for c in 0..CHANNELS {
        let plane = painting.plane(c);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if y > 0 {
                    let d = plane[i] - plane[i - w];
                    t[i] += d * d;
                }
                if x > 0 {
                    let d = plane[i] - plane[i - 1];
                    t[i] += d * d;
                }
            }
        }
    }
    let mid = (t.len() - 1) / 2;
    *t.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// `10 / (1 + exp(10⁴ x − 25))`: close to 10 for flat paintings, vanishing for textured ones.
pub fn tv_sigmoid(x: f64) -> f64 {
    10.0 / (1.0 + (1e4 * x - 25.0).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPrediction {
    /// Interpolated stylization level.
    pub tau: f64,
    pub weights: LossWeights,
}

/// `w_s = w_hist = τ`, `w_tv = τ · tv_sigmoid(median_tv(S))`.
pub fn predict_weights(
    painting: &Image,
    probs: &StyleProbs,
    table: &StyleCategoryTable,
) -> Result<WeightPrediction> {
    let (ws, wh) = interpolate_weights(probs, table)?;
    let tau = ws;
    Ok(WeightPrediction {
        tau,
        weights: LossWeights {
            style: ws,
            histogram: wh,
            tv: tau * tv_sigmoid(median_tv(painting)),
        },
    })
}
