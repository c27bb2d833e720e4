//! Randomized nearest-neighbour field between the patches of two images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchMatchParams {
    pub patch_size: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for PatchMatchParams {
    fn default() -> Self {
        Self {
            patch_size: 7,
            iters: 5,
            seed: 0,
        }
    }
}

/// For every source patch (indexed by its top-left corner), the top-left corner
/// of the matched target patch and the squared distance between the two.
///
/// Inactive source patches carry no match.
#[derive(Debug, Clone, PartialEq)]
pub struct NNField {
    pub patch_size: usize,
    /// Source patch grid.
    pub width: usize,
    pub height: usize,
    pub matches: Vec<Option<(usize, usize)>>,
    pub distances: Vec<f64>,
}

impl NNField {
    pub fn get(&self, x: usize, y: usize) -> Option<((usize, usize), f64)> {
        let i = y * self.width + x;
        self.matches[i].map(|m| (m, self.distances[i]))
    }

    /// `match − source` of an active patch.
    pub fn offset(&self, x: usize, y: usize) -> Option<(isize, isize)> {
        self.get(x, y)
            .map(|((mx, my), _)| (mx as isize - x as isize, my as isize - y as isize))
    }

    pub fn total_distance(&self) -> f64 {
        self.matches
            .iter()
            .zip(&self.distances)
            .filter(|(m, _)| m.is_some())
            .map(|(_, d)| d)
            .sum()
    }
}

/// Sum of squared differences between the `p x p` patches at `a` in `src` and
/// at `b` in `tgt`, over all channels. Stops early once `bound` is exceeded.
pub fn patch_distance(
    src: &Image,
    a: (usize, usize),
    tgt: &Image,
    b: (usize, usize),
    p: usize,
    bound: f64,
) -> f64 {
    let (sw, tw) = (src.width(), tgt.width());
    let mut d = 0.0;
    for c in 0..CHANNELS {
        let (sp, tp) = (src.plane(c), tgt.plane(c));
        for dy in 0..p {
            let so = (a.1 + dy) * sw + a.0;
            let to = (b.1 + dy) * tw + b.0;
            for dx in 0..p {
                let e = sp[so + dx] - tp[to + dx];
                d += e * e;
            }
            if d > bound {
                return d;
            }
        }
    }
    d
}

struct Search<'a> {
    src: &'a Image,
    tgt: &'a Image,
    p: usize,
    tw: usize,
    th: usize,
    field: NNField,
}

impl Search<'_> {
    fn try_candidate(&mut self, i: usize, cand: (usize, usize)) {
        let (x, y) = (i % self.field.width, i / self.field.width);
        let best = self.field.distances[i];
        if self.field.matches[i] == Some(cand) {
            return;
        }
        let d = patch_distance(self.src, (x, y), self.tgt, cand, self.p, best);
        if d < best {
            self.field.matches[i] = Some(cand);
            self.field.distances[i] = d;
        }
    }

    fn propagate(&mut self, x: usize, y: usize, forward: bool) {
        let w = self.field.width;
        let i = y * w + x;
        let neighbours: [Option<(usize, usize)>; 2] = if forward {
            [(x > 0).then(|| (x - 1, y)), (y > 0).then(|| (x, y - 1))]
        } else {
            [
                (x + 1 < w).then(|| (x + 1, y)),
                (y + 1 < self.field.height).then(|| (x, y + 1)),
            ]
        };
        for (nx, ny) in neighbours.into_iter().flatten() {
            let Some((mx, my)) = self.field.matches[ny * w + nx] else {
                continue;
            };
            // shift the neighbour's match back by the neighbour's offset
            let cx = mx as isize + x as isize - nx as isize;
            let cy = my as isize + y as isize - ny as isize;
            if cx >= 0 && cy >= 0 && (cx as usize) < self.tw && (cy as usize) < self.th {
                self.try_candidate(i, (cx as usize, cy as usize));
            }
        }
    }

    fn random_search(&mut self, i: usize, rng: &mut ChaCha8Rng) {
        let mut radius = self.tw.max(self.th);
        while radius >= 1 {
            let (mx, my) = self.field.matches[i].expect("active patch has a match");
            let x0 = mx.saturating_sub(radius);
            let x1 = (mx + radius).min(self.tw - 1);
            let y0 = my.saturating_sub(radius);
            let y1 = (my + radius).min(self.th - 1);
            let cand = (rng.random_range(x0..=x1), rng.random_range(y0..=y1));
            self.try_candidate(i, cand);
            radius /= 2;
        }
    }
}

/// PatchMatch from `src` patches to `tgt` patches: seeded random initialization,
/// then `iters` rounds of scanline propagation (alternating direction) and
/// random search with a halving radius.
///
/// `active` selects the source patches to match (all when `None`).
pub fn patchmatch_nnf(
    src: &Image,
    tgt: &Image,
    params: &PatchMatchParams,
    active: Option<&[bool]>,
) -> Result<NNField> {
    patchmatch_traced(src, tgt, params, active).map(|(f, _)| f)
}

/// [`patchmatch_nnf`] plus the total field distance after initialization and
/// after every iteration.
pub fn patchmatch_traced(
    src: &Image,
    tgt: &Image,
    params: &PatchMatchParams,
    active: Option<&[bool]>,
) -> Result<(NNField, Vec<f64>)> {
    let p = params.patch_size;
    if p == 0 {
        return Err(Error::Config("patch size must be positive".into()));
    }
    for (name, img) in [("source", src), ("target", tgt)] {
        if img.width() < p || img.height() < p {
            return Err(Error::Shape(format!(
                "{name} image {}x{} is smaller than the {p}x{p} patch",
                img.width(),
                img.height()
            )));
        }
    }
    let (w, h) = (src.width() - p + 1, src.height() - p + 1);
    let (tw, th) = (tgt.width() - p + 1, tgt.height() - p + 1);
    if let Some(a) = active {
        if a.len() != w * h {
            return Err(Error::Shape(format!(
                "active mask has {} entries, patch grid is {w}x{h}",
                a.len()
            )));
        }
    }
    let is_active = |i: usize| active.is_none_or(|a| a[i]);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut search = Search {
        src,
        tgt,
        p,
        tw,
        th,
        field: NNField {
            patch_size: p,
            width: w,
            height: h,
            matches: vec![None; w * h],
            distances: vec![0.0; w * h],
        },
    };
    for i in 0..w * h {
        if !is_active(i) {
            continue;
        }
        let m = (rng.random_range(0..tw), rng.random_range(0..th));
        search.field.matches[i] = Some(m);
        search.field.distances[i] = patch_distance(src, (i % w, i / w), tgt, m, p, f64::INFINITY);
    }
    let mut totals = vec![search.field.total_distance()];

    for iter in 0..params.iters {
        let forward = iter % 2 == 0;
        for k in 0..w * h {
            let i = if forward { k } else { w * h - 1 - k };
            if !is_active(i) {
                continue;
            }
            search.propagate(i % w, i / w, forward);
            search.random_search(i, &mut rng);
        }
        totals.push(search.field.total_distance());
    }
    Ok((search.field, totals))
}
