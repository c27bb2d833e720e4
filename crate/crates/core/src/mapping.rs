//! Input-to-style correspondences between neural patches.
//!
//! A neural patch is the 3x3 neighbourhood of activation vectors around one
//! location of a layer, flattened into a single vector. Two strategies build
//! the mapping field:
//!
//! * [`independent_mapping`] matches every layer on its own (robust, but the
//!   matches of different layers need not agree);
//! * [`consistent_mapping`] matches a single reference layer, removes spatial
//!   outliers with [`spatial_consistency`], then propagates the matches to the
//!   other layers so every layer draws from the same style location.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::{FeatureMap, FeatureStack, LayerId};
use crate::error::{Error, Result};
use crate::image::Mask;

/// Neighbour offsets in the order N, NE, E, SE, S, SW, W, NW (`y` grows downwards).
pub const NEIGHBOURS: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub width: usize,
    pub height: usize,
}

impl GridDims {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn of(map: &FeatureMap) -> Self {
        Self::new(map.width, map.height)
    }

    pub fn len(self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn coords(self, p: usize) -> (usize, usize) {
        (p % self.width, p / self.width)
    }

    #[inline]
    pub fn index(self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Flat index of `(x + dx, y + dy)` when it lies inside the grid.
    #[inline]
    pub fn offset(self, p: usize, dx: isize, dy: isize) -> Option<usize> {
        let (x, y) = self.coords(p);
        let (nx, ny) = (x as isize + dx, y as isize + dy);
        (nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height)
            .then(|| self.index(nx as usize, ny as usize))
    }
}

/// The mask at the resolution of `layer`: a cell is inside when at least half of
/// the input pixels it covers are inside.
pub fn resize_mask(mask: &Mask, layer: LayerId) -> Mask {
    mask.downsample_cells(layer.cell_size())
}

/// One row per spatial location, each the zero-padded 3x3 neighbourhood across
/// all channels. Row layout is neighbour-major: `(dy, dx)` in row-major order,
/// channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    dim: usize,
    rows: usize,
    data: Vec<f64>,
}

impl PatchMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }
}

pub fn extract_patches(features: &FeatureMap) -> PatchMatrix {
    let grid = GridDims::of(features);
    let n = features.channels;
    let dim = 9 * n;
    let mut data = vec![0.0; grid.len() * dim];
    for p in 0..grid.len() {
        let row = &mut data[p * dim..(p + 1) * dim];
        for (k, (dy, dx)) in (-1isize..=1)
            .flat_map(|dy| (-1isize..=1).map(move |dx| (dy, dx)))
            .enumerate()
        {
            if let Some(q) = grid.offset(p, dx, dy) {
                for c in 0..n {
                    row[k * n + c] = features.at(c, q);
                }
            }
        }
    }
    PatchMatrix {
        dim,
        rows: grid.len(),
        data,
    }
}

/// Index of the row of `candidates` closest to `query` in squared L2, with its
/// distance. Ties go to the lowest index.
pub fn nearest_neighbor_index(query: &[f64], candidates: &PatchMatrix) -> Result<(usize, f64)> {
    if candidates.rows == 0 {
        return Err(Error::Config("no candidate patches".into()));
    }
    if query.len() != candidates.dim {
        return Err(Error::Shape(format!(
            "query has {} values, candidates have {}",
            query.len(),
            candidates.dim
        )));
    }
    let mut best = (0, f64::INFINITY);
    for q in 0..candidates.rows {
        let row = candidates.row(q);
        let mut d = 0.0;
        // partial sums only grow, so stopping at `>= best` cannot skip a strict improvement
        for (a, b) in query.iter().zip(row) {
            let t = a - b;
            d += t * t;
            if d >= best.1 {
                break;
            }
        }
        if d < best.1 {
            best = (q, d);
        }
    }
    Ok(best)
}

/// Assignments for one layer: `assignment[p]` is the style patch matched to
/// input patch `p`, or `None` outside the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMapping {
    pub input: GridDims,
    pub style: GridDims,
    pub assignment: Vec<Option<usize>>,
}

impl LayerMapping {
    pub fn empty(input: GridDims, style: GridDims) -> Self {
        Self {
            input,
            style,
            assignment: vec![None; input.len()],
        }
    }

    /// `(input, style)` pairs in input order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(p, q)| q.map(|q| (p, q)))
    }

    pub fn len(&self) -> usize {
        self.assignment.iter().filter(|q| q.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain(&self) -> Mask {
        Mask::from_vec(
            self.input.width,
            self.input.height,
            self.assignment.iter().map(Option::is_some).collect(),
        )
        .expect("assignment matches grid")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MappingField {
    pub reference: Option<LayerId>,
    /// Reference-layer assignment over the whole propagation domain: the
    /// resized mask plus every cell another layer reads through
    /// [`change_resolution`]. Only set by [`consistent_mapping`].
    pub reference_support: Option<LayerMapping>,
    pub layers: BTreeMap<LayerId, LayerMapping>,
}

impl MappingField {
    pub fn get(&self, layer: LayerId) -> Option<&LayerMapping> {
        self.layers.get(&layer)
    }

    pub fn is_empty(&self) -> bool {
        self.layers.values().all(LayerMapping::is_empty)
    }

    /// Debug dump: `(layer, p, q)` triples plus grid sizes.
    pub fn to_json(&self) -> serde_json::Value {
        let layers: BTreeMap<String, serde_json::Value> = self
            .layers
            .iter()
            .map(|(l, m)| {
                (
                    l.to_string(),
                    serde_json::json!({ "input": m.input, "style": m.style }),
                )
            })
            .collect();
        let triples: Vec<(String, usize, usize)> = self
            .layers
            .iter()
            .flat_map(|(l, m)| m.pairs().map(move |(p, q)| (l.to_string(), p, q)))
            .collect();
        serde_json::json!({
            "reference": self.reference.map(|l| l.to_string()),
            "layers": layers,
            "triples": triples,
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_json()).expect("json values serialize");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn nearest_for_domain(
    input: &FeatureMap,
    style: &FeatureMap,
    domain: &Mask,
) -> Result<LayerMapping> {
    let in_grid = GridDims::of(input);
    let st_grid = GridDims::of(style);
    if input.channels != style.channels {
        return Err(Error::Shape(format!(
            "input has {} channels, style has {}",
            input.channels, style.channels
        )));
    }
    let mut mapping = LayerMapping::empty(in_grid, st_grid);
    let queries = domain.indices();
    if queries.is_empty() {
        return Ok(mapping);
    }
    if st_grid.is_empty() {
        return Err(Error::Config("style layer has no patches".into()));
    }
    let input_patches = extract_patches(input);
    let style_patches = extract_patches(style);
    let matches: Vec<usize> = queries
        .par_iter()
        .map(|&p| nearest_neighbor_index(input_patches.row(p), &style_patches).map(|(q, _)| q))
        .collect::<Result<_>>()?;
    for (p, q) in queries.into_iter().zip(matches) {
        mapping.assignment[p] = Some(q);
    }
    Ok(mapping)
}

/// Nearest style patch for every in-mask input patch, each layer on its own.
pub fn independent_mapping(
    input: &FeatureStack,
    mask: &Mask,
    style: &FeatureStack,
) -> Result<MappingField> {
    let mut field = MappingField::default();
    for (layer, fi) in input.iter() {
        let fs = style.require(layer)?;
        let domain = resize_mask(mask, layer);
        if domain.width() != fi.width || domain.height() != fi.height {
            return Err(Error::Shape(format!(
                "mask at {layer} is {}x{}, activations are {}x{}",
                domain.width(),
                domain.height(),
                fi.width,
                fi.height
            )));
        }
        field
            .layers
            .insert(layer, nearest_for_domain(fi, fs, &domain)?);
    }
    Ok(field)
}

fn sq_dist_vectors(style: &FeatureMap, a: usize, b: usize) -> f64 {
    let d = style.positions();
    (0..style.channels)
        .map(|c| {
            let t = style.data[c * d + a] - style.data[c * d + b];
            t * t
        })
        .sum()
}

/// One outlier-removal sweep over the mapping of the reference layer.
///
/// Every assigned patch `p` picks, among its own match and the matches of its
/// assigned neighbours shifted back by the neighbour offset, the candidate whose
/// style activation is closest (summed squared L2) to the style activations
/// assigned to those neighbours. Reads the input mapping, writes a new one.
pub fn spatial_consistency(mapping: &LayerMapping, style: &FeatureMap) -> LayerMapping {
    let in_grid = mapping.input;
    let st_grid = mapping.style;
    debug_assert_eq!(st_grid, GridDims::of(style));
    let assignment: Vec<Option<usize>> = (0..in_grid.len())
        .into_par_iter()
        .map(|p| {
            let q = mapping.assignment[p]?;
            let mut neighbours = Vec::with_capacity(8);
            let mut candidates = vec![q];
            for &(dx, dy) in &NEIGHBOURS {
                let Some(np) = in_grid.offset(p, dx, dy) else {
                    continue;
                };
                let Some(nq) = mapping.assignment[np] else {
                    continue;
                };
                neighbours.push(nq);
                if let Some(c) = st_grid.offset(nq, -dx, -dy) {
                    if !candidates.contains(&c) {
                        candidates.push(c);
                    }
                }
            }
            let mut best = (q, f64::INFINITY);
            for &c in &candidates {
                let cost: f64 = neighbours
                    .iter()
                    .map(|&n| sq_dist_vectors(style, c, n))
                    .sum();
                if cost < best.1 {
                    best = (c, cost);
                }
            }
            Some(best.0)
        })
        .collect();
    LayerMapping {
        input: in_grid,
        style: st_grid,
        assignment,
    }
}

/// Maps a flat index between two grids covering the same image extent.
pub fn change_resolution(p: usize, from: GridDims, to: GridDims) -> usize {
    let (x, y) = from.coords(p);
    let nx = (x * to.width / from.width).min(to.width - 1);
    let ny = (y * to.height / from.height).min(to.height - 1);
    to.index(nx, ny)
}

/// Reference cell under the centre pixel of patch `p` (cell size `cell`).
fn reference_cell(
    p: usize,
    grid: GridDims,
    cell: usize,
    ref_grid: GridDims,
    ref_cell: usize,
) -> usize {
    let (x, y) = grid.coords(p);
    let f = |v: usize, n: usize| ((2 * v + 1) * cell / (2 * ref_cell)).min(n - 1);
    ref_grid.index(f(x, ref_grid.width), f(y, ref_grid.height))
}

/// Style patch at grid `st` for input patch `p` whose reference cell `p_ref`
/// matched `q_ref`: the cell under `q_ref`'s origin shifted by the pixel offset
/// of `p`'s centre from `p_ref`'s origin, clamped to the grid.
#[allow(clippy::too_many_arguments)]
fn propagate(
    p: usize,
    grid: GridDims,
    cell: usize,
    p_ref: usize,
    q_ref: usize,
    ref_in: GridDims,
    ref_st: GridDims,
    ref_cell: usize,
    st: GridDims,
) -> usize {
    let (px, py) = grid.coords(p);
    let (rx, ry) = ref_in.coords(p_ref);
    let (qx, qy) = ref_st.coords(q_ref);
    // doubled pixel coordinates keep the centre integral
    let f = |pv: usize, rv: usize, qv: usize, n: usize| {
        let pix = (2 * qv * ref_cell + (2 * pv + 1) * cell) as isize - (2 * rv * ref_cell) as isize;
        ((pix.max(0) as usize) / (2 * cell)).min(n - 1)
    };
    st.index(f(px, rx, qx, st.width), f(py, ry, qy, st.height))
}

/// Reference-layer matching, one spatial-consistency sweep, then propagation to
/// every other layer of the stacks.
///
/// A patch's reference cell is the one under its centre pixel. Propagation
/// keeps the patch's pixel offset inside that cell, so a painting mapped onto
/// itself gets the identity at every layer. The reference matching also covers
/// reference cells that other layers' in-mask patches read, so propagation never
/// hits an unassigned cell; the returned reference layer is restricted to the
/// resized mask.
pub fn consistent_mapping(
    input: &FeatureStack,
    mask: &Mask,
    style: &FeatureStack,
    reference: LayerId,
) -> Result<MappingField> {
    let fi_ref = input.require(reference)?;
    let fs_ref = style.require(reference)?;
    let ref_in = GridDims::of(fi_ref);
    let ref_st = GridDims::of(fs_ref);
    let ref_cell = reference.cell_size();

    let ref_mask = resize_mask(mask, reference);
    let mut domain = ref_mask.data().to_vec();
    let mut layer_masks = BTreeMap::new();
    for (layer, fi) in input.iter() {
        style.require(layer)?;
        let m = resize_mask(mask, layer);
        if layer != reference {
            let grid = GridDims::of(fi);
            for p in m.indices() {
                domain[reference_cell(p, grid, layer.cell_size(), ref_in, ref_cell)] = true;
            }
        }
        layer_masks.insert(layer, m);
    }
    let domain = Mask::from_vec(ref_in.width, ref_in.height, domain)?;

    let matched = nearest_for_domain(fi_ref, fs_ref, &domain)?;
    let consistent = spatial_consistency(&matched, fs_ref);

    let mut field = MappingField {
        reference: Some(reference),
        reference_support: None,
        layers: BTreeMap::new(),
    };
    for (layer, fi) in input.iter() {
        let grid = GridDims::of(fi);
        let st_grid = GridDims::of(style.require(layer)?);
        let m = &layer_masks[&layer];
        let mut out = LayerMapping::empty(grid, st_grid);
        for p in m.indices() {
            let q = if layer == reference {
                consistent.assignment[p]
            } else {
                let cell = layer.cell_size();
                let p_ref = reference_cell(p, grid, cell, ref_in, ref_cell);
                consistent.assignment[p_ref]
                    .map(|q| propagate(p, grid, cell, p_ref, q, ref_in, ref_st, ref_cell, st_grid))
            };
            out.assignment[p] = q;
        }
        field.layers.insert(layer, out);
    }
    field.reference_support = Some(consistent);
    Ok(field)
}
