//! Pareto-front geometry: dominance filtering, exact hypervolume, rectangular
//! decomposition of the non-dominated region, and the inclusion-exclusion
//! hypervolume-improvement kernel.
//!
//! Everything here uses the maximization convention: point `a` dominates `b`
//! when `a >= b` componentwise with at least one strict coordinate, and the
//! hypervolume of a front is the Lebesgue measure of the region between the
//! reference point and the front.
//!
//! The decomposition splits the region that is *not* dominated by the front
//! into disjoint axis-aligned boxes `[l_k, u_k)`; upper bounds may be infinite.
//! For two objectives this is the classic staircase with exactly `|P| + 1`
//! boxes. For three or more objectives it is a binary space partition that
//! recursively splits cells at front coordinates until each cell is entirely
//! dominated (discarded) or entirely non-dominated (emitted). A positive
//! tolerance `zeta` enables early termination: small unresolved cells are
//! dropped as long as the total dropped volume stays below `zeta` times the
//! front's hypervolume. Cells reaching infinity are always resolved exactly,
//! so the approximate box union under-covers the true region by at most that
//! budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest batch size accepted by the subset-enumerating HVI kernel.
pub const MAX_BATCH: usize = 16;

/// True when `a` dominates `b` (maximization).
pub fn dominates<F: Real>(a: &[F], b: &[F]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (&x, &y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of the non-dominated rows of `points`, preserving first-occurrence
/// order; exact duplicates keep only their first occurrence.
pub fn pareto_filter_indices<F: Real>(points: &[Vec<F>]) -> Vec<usize> {
    let mut keep = Vec::new();
    'outer: for i in 0..points.len() {
        for j in 0..points.len() {
            if j != i && dominates(&points[j], &points[i]) {
                continue 'outer;
            }
            if j < i && points[j] == points[i] {
                continue 'outer;
            }
        }
        keep.push(i);
    }
    keep
}

/// Observed Pareto front relative to a reference point.
///
/// Construction keeps only rows that strictly dominate the reference in every
/// coordinate, collapses exact duplicates, and filters dominated rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront<F> {
    points: Vec<Vec<F>>,
    ref_point: Vec<F>,
}

impl<F: Real> ParetoFront<F> {
    pub fn new(points: &[Vec<F>], ref_point: &[F]) -> Self {
        let above: Vec<Vec<F>> = points
            .iter()
            .filter(|p| {
                debug_assert_eq!(p.len(), ref_point.len());
                p.iter().zip(ref_point).all(|(&y, &r)| y > r)
            })
            .cloned()
            .collect();
        let keep = pareto_filter_indices(&above);
        ParetoFront {
            points: keep.into_iter().map(|i| above[i].clone()).collect(),
            ref_point: ref_point.to_vec(),
        }
    }

    pub fn points(&self) -> &[Vec<F>] {
        &self.points
    }

    pub fn ref_point(&self) -> &[F] {
        &self.ref_point
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn objectives(&self) -> usize {
        self.ref_point.len()
    }

    /// Exact hypervolume dominated by this front above its reference point.
    pub fn hypervolume(&self) -> F {
        hypervolume(&self.points, &self.ref_point)
    }
}

/// Exact hypervolume of the region dominated by `points` above `ref_point`,
/// by dimension-sweep recursion (staircase in two dimensions, recursive
/// slicing along the last objective for three or more).
pub fn hypervolume<F: Real>(points: &[Vec<F>], ref_point: &[F]) -> F {
    let m = ref_point.len();
    // Only points strictly above the reference in every coordinate enclose
    // positive volume with it.
    let mut pts: Vec<&Vec<F>> = points
        .iter()
        .filter(|p| p.iter().zip(ref_point).all(|(&y, &r)| y > r))
        .collect();
    if pts.is_empty() {
        return F::zero();
    }
    match m {
        0 => F::zero(),
        1 => {
            let best = pts
                .iter()
                .map(|p| p[0])
                .fold(F::neg_infinity(), F::max);
            best - ref_point[0]
        }
        2 => {
            // Staircase sweep in descending first coordinate.
            pts.sort_by(|a, b| b[0].partial_cmp(&a[0]).unwrap());
            let mut hv = F::zero();
            let mut best_y1 = ref_point[1];
            for p in pts {
                if p[1] > best_y1 {
                    hv = hv + (p[0] - ref_point[0]) * (p[1] - best_y1);
                    best_y1 = p[1];
                }
            }
            hv
        }
        3 => hypervolume_3d(&pts, ref_point),
        _ => {
            // Slice along the last objective; each slab's cross-section is the
            // (m-1)-dimensional hypervolume of the points above the slab.
            let last = m - 1;
            pts.sort_by(|a, b| b[last].partial_cmp(&a[last]).unwrap());
            let proj_ref = &ref_point[..last];
            let mut hv = F::zero();
            let mut projections: Vec<Vec<F>> = Vec::with_capacity(pts.len());
            for i in 0..pts.len() {
                projections.push(pts[i][..last].to_vec());
                let upper = pts[i][last];
                let lower = if i + 1 < pts.len() {
                    pts[i + 1][last].max(ref_point[last])
                } else {
                    ref_point[last]
                };
                if upper > lower {
                    let keep = pareto_filter_indices(&projections);
                    let active: Vec<Vec<F>> =
                        keep.into_iter().map(|k| projections[k].clone()).collect();
                    hv = hv + (upper - lower) * hypervolume(&active, proj_ref);
                }
            }
            hv
        }
    }
}

/// Three-objective hypervolume by sweeping the last objective while
/// maintaining a two-dimensional staircase of the active projections; scales
/// to fronts with thousands of points.
fn hypervolume_3d<F: Real>(pts: &[&Vec<F>], ref_point: &[F]) -> F {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[b][2].partial_cmp(&pts[a][2]).unwrap());
    // Staircase sorted ascending by the first coordinate; second coordinate
    // strictly descending (mutually non-dominated projections).
    let mut stairs: Vec<(F, F)> = Vec::new();
    let mut hv = F::zero();
    let mut idx = 0usize;
    while idx < order.len() {
        let z = pts[order[idx]][2];
        while idx < order.len() && pts[order[idx]][2] == z {
            let p = pts[order[idx]];
            insert_stair(&mut stairs, p[0], p[1]);
            idx += 1;
        }
        let next_z = if idx < order.len() {
            pts[order[idx]][2].max(ref_point[2])
        } else {
            ref_point[2]
        };
        if z > next_z {
            // Cross-section area of the staircase above the reference.
            let mut area = F::zero();
            let mut prev = ref_point[0];
            for &(a, b) in &stairs {
                area = area + (a - prev) * (b - ref_point[1]);
                prev = a;
            }
            hv = hv + (z - next_z) * area;
        }
    }
    hv
}

/// Inserts a projection into the 2-d staircase unless dominated, evicting
/// entries it dominates.
fn insert_stair<F: Real>(stairs: &mut Vec<(F, F)>, a: F, b: F) {
    let pos = stairs.partition_point(|&(x, _)| x < a);
    // An entry at or right of `pos` has first coordinate >= a; the one at
    // `pos` carries the largest second coordinate among them.
    if let Some(&(_, y)) = stairs.get(pos) {
        if y >= b {
            return;
        }
    }
    // Evict entries weakly dominated by the new point (contiguous to the
    // left, where second coordinates are <= b).
    let mut start = pos;
    while start > 0 && stairs[start - 1].1 <= b {
        start -= 1;
    }
    stairs.splice(start..pos, [(a, b)]);
}

/// Disjoint axis-aligned boxes `[l_k, u_k)` covering (a subset of) the region
/// above the reference point that the front does not dominate.
///
/// Upper bounds may be `+inf`; JSON serialization encodes those as `null`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDecomposition<F> {
    pub lowers: Vec<Vec<F>>,
    pub uppers: Vec<Vec<F>>,
    pub ref_point: Vec<F>,
    /// `zeta` used during construction (zero for exact decompositions).
    pub zeta: F,
}

impl<F: Real> BoxDecomposition<F> {
    pub fn n_boxes(&self) -> usize {
        self.lowers.len()
    }

    pub fn objectives(&self) -> usize {
        self.ref_point.len()
    }

    /// Total volume of the boxes clipped to finite extents at `clip`.
    pub fn clipped_volume(&self, clip: &[F]) -> F {
        let mut total = F::zero();
        for (l, u) in self.lowers.iter().zip(&self.uppers) {
            let mut v = F::one();
            for m in 0..l.len() {
                let hi = u[m].min(clip[m]);
                if hi <= l[m] {
                    v = F::zero();
                    break;
                }
                v = v * (hi - l[m]);
            }
            total = total + v;
        }
        total
    }
}

#[derive(Serialize, Deserialize)]
struct BoxDecompositionWire<F> {
    lowers: Vec<Vec<F>>,
    uppers: Vec<Vec<Option<F>>>,
    ref_point: Vec<F>,
    zeta: F,
}

impl<F: Real + Serialize> Serialize for BoxDecomposition<F> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let wire = BoxDecompositionWire {
            lowers: self.lowers.clone(),
            uppers: self
                .uppers
                .iter()
                .map(|u| {
                    u.iter()
                        .map(|&x| if x.is_finite() { Some(x) } else { None })
                        .collect()
                })
                .collect(),
            ref_point: self.ref_point.clone(),
            zeta: self.zeta,
        };
        wire.serialize(s)
    }
}

impl<'de, F: Real + Deserialize<'de>> Deserialize<'de> for BoxDecomposition<F> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = BoxDecompositionWire::<F>::deserialize(d)?;
        Ok(BoxDecomposition {
            lowers: wire.lowers,
            uppers: wire
                .uppers
                .into_iter()
                .map(|u| {
                    u.into_iter()
                        .map(|x| x.unwrap_or_else(F::infinity))
                        .collect()
                })
                .collect(),
            ref_point: wire.ref_point,
            zeta: wire.zeta,
        })
    }
}

/// Work item for the binary partitioning: a half-open cell `[l, u)`.
struct Cell<F> {
    l: Vec<F>,
    u: Vec<F>,
    /// Volume clipped to the front's bounding box, used for ordering and for
    /// the early-termination accounting.
    clipped: F,
}

fn clipped_volume<F: Real>(l: &[F], u: &[F], clip: &[F]) -> F {
    let mut v = F::one();
    for m in 0..l.len() {
        let hi = u[m].min(clip[m]);
        if hi <= l[m] {
            return F::zero();
        }
        v = v * (hi - l[m]);
    }
    v
}

/// Decomposes the non-dominated region above `front.ref_point()` into disjoint
/// boxes.
///
/// `zeta = 0` gives an exact cover. For two objectives the staircase
/// construction is always used (already minimal at `|P| + 1` boxes), so `zeta`
/// only affects three or more objectives.
pub fn decompose<F: Real>(front: &ParetoFront<F>, zeta: F) -> Result<BoxDecomposition<F>> {
    if zeta < F::zero() {
        return Err(Error::InvalidArgument("zeta must be >= 0".into()));
    }
    let m = front.objectives();
    let r = front.ref_point().to_vec();
    let inf = F::infinity();

    if front.is_empty() {
        return Ok(BoxDecomposition {
            lowers: vec![r.clone()],
            uppers: vec![vec![inf; m]],
            ref_point: r,
            zeta,
        });
    }

    if m == 1 {
        let best = front
            .points()
            .iter()
            .map(|p| p[0])
            .fold(F::neg_infinity(), F::max);
        return Ok(BoxDecomposition {
            lowers: vec![vec![best]],
            uppers: vec![vec![inf]],
            ref_point: r,
            zeta,
        });
    }

    if m == 2 {
        // Staircase: K = |P| + 1 boxes.
        let mut pts = front.points().to_vec();
        pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        let mut lowers = Vec::with_capacity(pts.len() + 1);
        let mut uppers = Vec::with_capacity(pts.len() + 1);
        let mut prev_x = r[0];
        for p in &pts {
            lowers.push(vec![prev_x, p[1]]);
            uppers.push(vec![p[0], inf]);
            prev_x = p[0];
        }
        lowers.push(vec![prev_x, r[1]]);
        uppers.push(vec![inf, inf]);
        return Ok(BoxDecomposition {
            lowers,
            uppers,
            ref_point: r,
            zeta,
        });
    }

    // Binary partitioning for m >= 3.
    let pts = front.points();
    let mut clip = vec![F::neg_infinity(); m];
    for p in pts {
        for d in 0..m {
            clip[d] = clip[d].max(p[d]);
        }
    }
    let threshold = zeta * front.hypervolume();

    let mut lowers = Vec::new();
    let mut uppers = Vec::new();
    // Queue kept sorted ascending by clipped volume; the largest cell is
    // popped first so refinement effort goes where the volume is.
    let mut queue: Vec<Cell<F>> = vec![Cell {
        clipped: clipped_volume(&r, &vec![inf; m], &clip),
        l: r.clone(),
        u: vec![inf; m],
    }];
    // Early termination: once the total clipped volume still queued falls
    // under the budget, every box the remaining refinement could add is
    // forfeited. Bounded cells are dropped outright; unbounded cells are
    // still refined (they carry the infinite faces) but their bounded
    // children are forfeited too. All forfeited volume lies inside the
    // queued cells at trigger time, so the union loses less than
    // zeta * HV(front) of non-dominated volume (the constant c in the
    // documented (1 - c*zeta) coverage bound is 1).
    let mut remaining = queue[0].clipped;
    let mut terminated = false;

    while let Some(cell) = queue.pop() {
        remaining = remaining - cell.clipped;
        if zeta > F::zero() && !terminated && remaining + cell.clipped < threshold {
            terminated = true;
        }
        let unbounded = cell.u.iter().any(|x| !x.is_finite());
        if terminated && !unbounded {
            continue;
        }

        // Entirely dominated: some front point reaches the upper corner.
        if pts
            .iter()
            .any(|p| p.iter().zip(&cell.u).all(|(&pm, &um)| pm >= um))
        {
            // discarded; nothing to emit
        } else if pts
            .iter()
            .all(|p| p.iter().zip(&cell.l).any(|(&pm, &lm)| pm <= lm))
        {
            // Entirely non-dominated: emit.
            lowers.push(cell.l);
            uppers.push(cell.u);
        } else {
            // Mixed: split at a front coordinate strictly inside the cell,
            // along the dimension with the widest clipped extent.
            let mut best_dim = usize::MAX;
            let mut best_extent = F::neg_infinity();
            for d in 0..m {
                let has_pivot = pts
                    .iter()
                    .any(|p| p[d] > cell.l[d] && p[d] < cell.u[d]);
                if has_pivot {
                    let extent = cell.u[d].min(clip[d]) - cell.l[d];
                    if extent > best_extent {
                        best_extent = extent;
                        best_dim = d;
                    }
                }
            }
            debug_assert!(best_dim != usize::MAX, "mixed cell must have a pivot");
            let d = best_dim;
            // Median interior coordinate keeps the partition balanced.
            let mut pivots: Vec<F> = pts
                .iter()
                .map(|p| p[d])
                .filter(|&v| v > cell.l[d] && v < cell.u[d])
                .collect();
            pivots.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let v = pivots[pivots.len() / 2];

            let mut u_lo = cell.u.clone();
            u_lo[d] = v;
            let mut l_hi = cell.l.clone();
            l_hi[d] = v;
            let lo = Cell {
                clipped: clipped_volume(&cell.l, &u_lo, &clip),
                l: cell.l,
                u: u_lo,
            };
            let hi = Cell {
                clipped: clipped_volume(&l_hi, &cell.u, &clip),
                l: l_hi,
                u: cell.u,
            };
            // Keep the queue sorted by clipped volume (ascending, popped from
            // the back) without a full re-sort: insert by binary search.
            for child in [lo, hi] {
                if terminated && child.u.iter().all(|x| x.is_finite()) {
                    continue;
                }
                remaining = remaining + child.clipped;
                let pos = queue
                    .binary_search_by(|c| {
                        c.clipped
                            .partial_cmp(&child.clipped)
                            .unwrap()
                    })
                    .unwrap_or_else(|e| e);
                queue.insert(pos, child);
            }
        }
    }

    Ok(BoxDecomposition {
        lowers,
        uppers,
        ref_point: r,
        zeta,
    })
}

/// Scratch buffers for the inclusion-exclusion kernel.
#[derive(Debug, Default)]
pub struct HviWorkspace<F> {
    fmin: Vec<F>,
    wprod: Vec<F>,
}

impl<F: Real> HviWorkspace<F> {
    pub fn new() -> Self {
        HviWorkspace {
            fmin: Vec::new(),
            wprod: Vec::new(),
        }
    }
}

/// Joint hypervolume improvement of the batch `ys` over the decomposed region,
/// by inclusion-exclusion over all non-empty subsets of the batch.
///
/// `ys` is one point per batch element in objective space. Returns the exact
/// improvement contributed inside the union of the decomposition's boxes.
pub fn hvi_inclusion_exclusion<F: Real>(
    ys: &[Vec<F>],
    decomp: &BoxDecomposition<F>,
    ws: &mut HviWorkspace<F>,
) -> Result<F> {
    hvi_weighted_impl(ys, None, decomp, ws)
}

/// Inclusion-exclusion HVI with a multiplicative per-point weight: each subset
/// term is scaled by the product of its members' weights. With weights in
/// `{0, 1}` this is the feasibility-indicator form of constrained HVI; with
/// sigmoid weights it matches the differentiable constrained estimator.
pub fn hvi_weighted<F: Real>(
    ys: &[Vec<F>],
    weights: &[F],
    decomp: &BoxDecomposition<F>,
    ws: &mut HviWorkspace<F>,
) -> Result<F> {
    if weights.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            context: "hvi_weighted",
            expected: format!("{} weights", ys.len()),
            got: format!("{}", weights.len()),
        });
    }
    hvi_weighted_impl(ys, Some(weights), decomp, ws)
}

fn hvi_weighted_impl<F: Real>(
    ys: &[Vec<F>],
    weights: Option<&[F]>,
    decomp: &BoxDecomposition<F>,
    ws: &mut HviWorkspace<F>,
) -> Result<F> {
    let q = ys.len();
    let m = decomp.objectives();
    if q == 0 {
        return Ok(F::zero());
    }
    if q > MAX_BATCH {
        return Err(Error::BatchTooLarge { q, max: MAX_BATCH });
    }
    for y in ys {
        if y.len() != m {
            return Err(Error::ShapeMismatch {
                context: "hvi_inclusion_exclusion",
                expected: format!("{m} objectives"),
                got: format!("{}", y.len()),
            });
        }
    }
    let n_subsets = 1usize << q;

    // fmin[s * m + j] = min over i in subset s of ys[i][j], via lowest-bit DP.
    ws.fmin.clear();
    ws.fmin.resize(n_subsets * m, F::zero());
    ws.wprod.clear();
    ws.wprod.resize(n_subsets, F::one());
    for s in 1..n_subsets {
        let low = s.trailing_zeros() as usize;
        let rest = s & (s - 1);
        if rest == 0 {
            for j in 0..m {
                ws.fmin[s * m + j] = ys[low][j];
            }
            if let Some(w) = weights {
                ws.wprod[s] = w[low];
            }
        } else {
            for j in 0..m {
                ws.fmin[s * m + j] = ys[low][j].min(ws.fmin[rest * m + j]);
            }
            if let Some(w) = weights {
                ws.wprod[s] = w[low] * ws.wprod[rest];
            }
        }
    }

    let mut total = F::zero();
    for k in 0..decomp.n_boxes() {
        let l = &decomp.lowers[k];
        let u = &decomp.uppers[k];
        for s in 1..n_subsets {
            let mut term = ws.wprod[s];
            for j in 0..m {
                let z = u[j].min(ws.fmin[s * m + j]);
                let side = z - l[j];
                if side <= F::zero() {
                    term = F::zero();
                    break;
                }
                term = term * side;
            }
            if term != F::zero() {
                if (s.count_ones() & 1) == 1 {
                    total = total + term;
                } else {
                    total = total - term;
                }
            }
        }
    }
    Ok(total)
}

/// Reference point inferred from observed data: the componentwise minimum of
/// the observed Pareto front, shifted down by one tenth of its magnitude.
pub fn infer_reference_point<F: Real>(observed: &[Vec<F>]) -> Result<Vec<F>> {
    if observed.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot infer a reference point from zero observations".into(),
        ));
    }
    let keep = pareto_filter_indices(observed);
    let m = observed[0].len();
    let mut nadir = vec![F::infinity(); m];
    for &i in &keep {
        for d in 0..m {
            nadir[d] = nadir[d].min(observed[i][d]);
        }
    }
    Ok(nadir
        .into_iter()
        .map(|n| n - F::of(0.1) * n.abs())
        .collect())
}
