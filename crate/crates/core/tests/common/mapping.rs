//! Mapping oracles: exhaustive nearest neighbours, cross-layer collocation and
//! brute-force candidate-set evaluation of the spatial-consistency sweep.

use painterly::backbone::{FeatureMap, FeatureStack};
use painterly::image::Mask;
use painterly::mapping::{
    consistent_mapping, independent_mapping, spatial_consistency, GridDims, LayerMapping,
};
use rand::Rng;

use super::{l, random_image, random_map, rng, tiny_backbone, Check};
use crate::ensure;

/// Cell `(cx, cy)` of size `cell` is inside when at least half its pixels are.
fn oracle_resize(mask: &Mask, cell: usize) -> Vec<bool> {
    let (w, h) = (mask.width() / cell, mask.height() / cell);
    let mut out = Vec::with_capacity(w * h);
    for cy in 0..h {
        for cx in 0..w {
            let mut n = 0;
            for y in cy * cell..(cy + 1) * cell {
                for x in cx * cell..(cx + 1) * cell {
                    n += mask.get(x, y) as usize;
                }
            }
            out.push(2 * n >= cell * cell);
        }
    }
    out
}

fn value_or_zero(f: &FeatureMap, c: usize, x: isize, y: isize) -> f64 {
    if x < 0 || y < 0 || x >= f.width as isize || y >= f.height as isize {
        0.0
    } else {
        f.data[c * f.width * f.height + y as usize * f.width + x as usize]
    }
}

fn patch_distance(a: &FeatureMap, pa: usize, b: &FeatureMap, pb: usize) -> f64 {
    let (ax, ay) = ((pa % a.width) as isize, (pa / a.width) as isize);
    let (bx, by) = ((pb % b.width) as isize, (pb / b.width) as isize);
    let mut d = 0.0;
    for c in 0..a.channels {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let e =
                    value_or_zero(a, c, ax + dx, ay + dy) - value_or_zero(b, c, bx + dx, by + dy);
                d += e * e;
            }
        }
    }
    d
}

fn oracle_nearest(input: &FeatureMap, p: usize, style: &FeatureMap) -> usize {
    let mut best = (0, f64::INFINITY);
    for q in 0..style.width * style.height {
        let d = patch_distance(input, p, style, q);
        if d < best.1 {
            best = (q, d);
        }
    }
    best.0
}

fn random_blob(r: &mut rand_chacha::ChaCha8Rng, w: usize, h: usize) -> Mask {
    let (cx, cy) = (
        r.random_range(4.0..w as f64 - 4.0),
        r.random_range(4.0..h as f64 - 4.0),
    );
    let (rx, ry) = (r.random_range(4.0..9.0), r.random_range(4.0..9.0));
    Mask::from_fn(w, h, |x, y| {
        let (dx, dy) = ((x as f64 + 0.5 - cx) / rx, (y as f64 + 0.5 - cy) / ry);
        dx * dx + dy * dy <= 1.0
    })
}

/// Independent mapping equals an exhaustive scan at every layer, on 10 random cases.
pub fn independent_vs_oracle() -> Check {
    let layers = [l(1, 1), l(2, 1)];
    for case in 0..10u64 {
        let mut r = rng(100 + case);
        let backbone = tiny_backbone(case);
        let (iw, ih) = (r.random_range(12..=20), r.random_range(12..=20));
        let input = random_image(&mut r, iw, ih);
        let (sw, sh) = (r.random_range(12..=20), r.random_range(12..=20));
        let style = random_image(&mut r, sw, sh);
        let mask = random_blob(&mut r, iw, ih);
        let fi = backbone
            .forward(&input, &layers)
            .map_err(|e| e.to_string())?;
        let fs = backbone
            .forward(&style, &layers)
            .map_err(|e| e.to_string())?;
        let field = independent_mapping(&fi, &mask, &fs).map_err(|e| e.to_string())?;
        for layer in layers {
            let (a, b) = (fi.get(layer).unwrap(), fs.get(layer).unwrap());
            let inside = oracle_resize(&mask, layer.cell_size());
            let m = field
                .get(layer)
                .ok_or(format!("case {case}: no mapping at {layer}"))?;
            for (p, &inn) in inside.iter().enumerate() {
                let expected = inn.then(|| oracle_nearest(a, p, b));
                ensure!(
                    m.assignment[p] == expected,
                    "case {case}, {layer}, patch {p}: got {:?}, exhaustive scan gives {expected:?}",
                    m.assignment[p]
                );
            }
        }
    }
    Ok(())
}

/// Pixel distance between the reference cell centre and layer cell `q`: centre
/// to centre when the layer is at least as fine as the reference, centre to the
/// cell's extent otherwise (a floor-pooled coarse grid does not cover the last
/// reference cells).
fn axis_error(q: usize, cell: f64, q_ref: usize, ref_cell: f64) -> f64 {
    let c = (q_ref as f64 + 0.5) * ref_cell;
    if cell <= ref_cell {
        ((q as f64 + 0.5) * cell - c).abs()
    } else {
        let (lo, hi) = (q as f64 * cell, (q + 1) as f64 * cell);
        (lo - c).max(c - hi).max(0.0)
    }
}

/// After consistent mapping every layer's match lies within one reference cell
/// of the reference layer's match, in style-image coordinates.
pub fn consistent_collocation() -> Check {
    let layers = [l(1, 1), l(1, 2), l(2, 1), l(2, 2), l(3, 1)];
    let bank = painterly::backbone::WeightBank::random(
        &[
            (l(1, 1), 3),
            (l(1, 2), 3),
            (l(2, 1), 4),
            (l(2, 2), 4),
            (l(3, 1), 5),
        ],
        painterly::backbone::IMAGENET_MEANS,
        9,
    )
    .unwrap();
    let backbone = painterly::backbone::Backbone::new(bank, painterly::backbone::Precision::Double);
    for reference in [l(2, 1), l(3, 1)] {
        for case in 0..5u64 {
            let mut r = rng(200 + case);
            let (w, h) = (r.random_range(24..=36), r.random_range(24..=36));
            let input = random_image(&mut r, w, h);
            let (sw, sh) = (r.random_range(24..=36), r.random_range(24..=36));
            let style = random_image(&mut r, sw, sh);
            let mask = random_blob(&mut r, w, h);
            let fi = backbone
                .forward(&input, &layers)
                .map_err(|e| e.to_string())?;
            let fs = backbone
                .forward(&style, &layers)
                .map_err(|e| e.to_string())?;
            let field =
                consistent_mapping(&fi, &mask, &fs, reference).map_err(|e| e.to_string())?;
            let support = field
                .reference_support
                .as_ref()
                .ok_or("no reference support")?;
            let ref_cell = reference.cell_size() as f64;
            for layer in layers {
                let m = field.get(layer).unwrap();
                let inside = oracle_resize(&mask, layer.cell_size());
                ensure!(
                    m.domain().data() == inside.as_slice(),
                    "{layer}: mapping domain differs from the resized mask"
                );
                let cell = layer.cell_size() as f64;
                for (p, q) in m.pairs() {
                    ensure!(q < m.style.len(), "{layer}: style index {q} out of range");
                    let (px, py) = m.input.coords(p);
                    // reference cell under the patch's centre pixel
                    let rx = (((px as f64 + 0.5) * cell / ref_cell) as usize)
                        .min(support.input.width - 1);
                    let ry = (((py as f64 + 0.5) * cell / ref_cell) as usize)
                        .min(support.input.height - 1);
                    let qr = support.assignment[support.input.index(rx, ry)]
                        .ok_or(format!("{layer}: reference cell ({rx},{ry}) unassigned"))?;
                    let (qx, qy) = m.style.coords(q);
                    let (qrx, qry) = support.style.coords(qr);
                    let dx = axis_error(qx, cell, qrx, ref_cell);
                    let dy = axis_error(qy, cell, qry, ref_cell);
                    ensure!(
                        dx < ref_cell && dy < ref_cell,
                        "ref {reference}, case {case}, {layer} patch {p}: style centre off by ({dx}, {dy}) pixels"
                    );
                }
            }
        }
    }
    Ok(())
}

const ORDER: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

fn shifted(grid: GridDims, p: usize, dx: isize, dy: isize) -> Option<usize> {
    let (x, y) = (
        (p % grid.width) as isize + dx,
        (p / grid.width) as isize + dy,
    );
    (x >= 0 && y >= 0 && x < grid.width as isize && y < grid.height as isize)
        .then(|| y as usize * grid.width + x as usize)
}

fn vec_dist(f: &FeatureMap, a: usize, b: usize) -> f64 {
    let d = f.width * f.height;
    (0..f.channels)
        .map(|c| (f.data[c * d + a] - f.data[c * d + b]).powi(2))
        .sum()
}

/// Candidate list in insertion order (duplicates kept) and the oracle's pick.
fn oracle_consistency(m: &LayerMapping, style: &FeatureMap, p: usize) -> (Vec<usize>, usize) {
    let own = m.assignment[p].unwrap();
    let mut cands = vec![own];
    let mut neigh = Vec::new();
    for (dx, dy) in ORDER {
        if let Some(np) = shifted(m.input, p, dx, dy) {
            if let Some(nq) = m.assignment[np] {
                neigh.push(nq);
                if let Some(c) = shifted(m.style, nq, -dx, -dy) {
                    cands.push(c);
                }
            }
        }
    }
    let cost = |c: usize| neigh.iter().map(|&n| vec_dist(style, c, n)).sum::<f64>();
    let mut best = cands[0];
    let mut best_cost = cost(best);
    for &c in &cands[1..] {
        let k = cost(c);
        if k < best_cost {
            best = c;
            best_cost = k;
        }
    }
    (cands, best)
}

/// A coherent 3x3 block whose centre points at a distinct, far-away patch.
pub fn outlier_fixture() -> Check {
    let input = GridDims::new(5, 5);
    let style = GridDims::new(10, 8);
    // constant features on x < 5, distinct ramp elsewhere
    let sdata: Vec<f64> = (0..2)
        .flat_map(|c| (0..80).map(move |q| if q % 10 < 5 { 1.0 } else { (q + 7 * c) as f64 }))
        .collect();
    let sf = FeatureMap::new(2, 8, 10, sdata).unwrap();
    let mut m = LayerMapping::empty(input, style);
    let t = (0isize, 2isize);
    for y in 1..4 {
        for x in 1..4 {
            let q = style.index((x as isize + t.0) as usize, (y as isize + t.1) as usize);
            m.assignment[input.index(x, y)] = Some(q);
        }
    }
    let centre = input.index(2, 2);
    let outlier = style.index(8, 6);
    m.assignment[centre] = Some(outlier);
    let out = spatial_consistency(&m, &sf);
    let expected = style.index(2, 4);
    ensure!(
        out.assignment[centre] == Some(expected),
        "centre assigned {:?}, expected the neighbour-implied {expected}",
        out.assignment[centre]
    );
    for p in m.pairs().map(|(p, _)| p) {
        let (_, best) = oracle_consistency(&m, &sf, p);
        ensure!(
            out.assignment[p] == Some(best),
            "patch {p}: got {:?}, oracle {best}",
            out.assignment[p]
        );
    }
    Ok(())
}

/// Random mappings with small integer features (many ties): the sweep always
/// picks the oracle's candidate, never leaves the candidate set, and leaves
/// singleton candidate sets alone.
pub fn consistency_random_trials() -> Check {
    let mut r = rng(300);
    for trial in 0..1000 {
        let input = GridDims::new(r.random_range(1..=7), r.random_range(1..=7));
        let style = GridDims::new(r.random_range(1..=8), r.random_range(1..=8));
        let channels = r.random_range(1..=3);
        let data = (0..channels * style.len())
            .map(|_| r.random_range(0..4) as f64)
            .collect();
        let sf = FeatureMap::new(channels, style.height, style.width, data).unwrap();
        let mut m = LayerMapping::empty(input, style);
        for p in 0..input.len() {
            if r.random_bool(0.7) {
                m.assignment[p] = Some(r.random_range(0..style.len()));
            }
        }
        let out = spatial_consistency(&m, &sf);
        for p in 0..input.len() {
            match m.assignment[p] {
                None => ensure!(
                    out.assignment[p].is_none(),
                    "trial {trial}: unassigned patch {p} gained a match"
                ),
                Some(own) => {
                    let (cands, best) = oracle_consistency(&m, &sf, p);
                    let got = out.assignment[p]
                        .ok_or(format!("trial {trial}: patch {p} lost its match"))?;
                    ensure!(
                        cands.contains(&got),
                        "trial {trial}: patch {p} -> {got} outside {cands:?}"
                    );
                    if cands.iter().all(|&c| c == own) {
                        ensure!(got == own, "trial {trial}: singleton set changed patch {p}");
                    }
                    ensure!(
                        got == best,
                        "trial {trial}: patch {p} -> {got}, oracle {best} among {cands:?}"
                    );
                }
            }
        }
    }
    Ok(())
}

/// Matching one layer ignores the contents of any other layer.
pub fn layers_independent() -> Check {
    let mut r = rng(400);
    let layer = l(1, 1);
    let other = l(2, 1);
    let a = random_map(&mut r, 3, 8, 8);
    let b = random_map(&mut r, 3, 8, 8);
    let mask = Mask::full(8, 8);
    let single = {
        let (mut i, mut s) = (FeatureStack::new(), FeatureStack::new());
        i.insert(layer, a.clone());
        s.insert(layer, b.clone());
        independent_mapping(&i, &mask, &s).map_err(|e| e.to_string())?
    };
    let both = {
        let (mut i, mut s) = (FeatureStack::new(), FeatureStack::new());
        i.insert(layer, a);
        s.insert(layer, b);
        i.insert(other, random_map(&mut r, 4, 4, 4));
        s.insert(other, random_map(&mut r, 4, 4, 4));
        independent_mapping(&i, &mask, &s).map_err(|e| e.to_string())?
    };
    ensure!(
        single.get(layer) == both.get(layer),
        "mapping at {layer} changed with another layer present"
    );
    Ok(())
}

pub fn suite() -> Check {
    independent_vs_oracle()?;
    consistent_collocation()?;
    outlier_fixture()?;
    consistency_random_trials()
}
