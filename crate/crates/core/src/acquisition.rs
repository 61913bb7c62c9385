//! Acquisition functions: batch expected hypervolume improvement with exact
//! sample-path gradients, its constrained variant, and the scalarization
//! baseline.
//!
//! The hypervolume acquisition builds one expression graph per batch
//! configuration: the joint GP posterior over pending plus new candidates is
//! replayed on the tape, fixed base normal draws turn it into deterministic
//! sample paths, and the per-sample joint hypervolume improvement is assembled
//! by inclusion-exclusion over batch subsets restricted to the decomposition
//! boxes. Averaging over draws gives a sample-average approximation whose
//! gradient with respect to the new candidates is exact, not estimated.
//!
//! Pending candidates enter as graph constants placed before the new ones, so
//! constant folding collapses their sample paths at build time, and only
//! subsets containing at least one new candidate are enumerated: under common
//! base draws the pending-only terms of the improvement cancel exactly.
//!
//! Constraints multiply every subset term by a sigmoid feasibility weight per
//! member, with temperature specified on the standardized constraint scale so
//! the feasibility threshold stays at zero on the original scale.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::autodiff::{ExprGraph, GraphBuilder, NodeId, Workspace};
use crate::error::{Error, Result};
use crate::gp::{build_posterior_graph, GpModel};
use crate::optimize::{AcqFamily, Objective};
use crate::pareto::{BoxDecomposition, MAX_BATCH};
use crate::sampling::{derive_seed, BaseKind, BaseSamples};
use crate::scalar::Real;

/// Monte Carlo and constraint settings shared by the acquisition functions.
#[derive(Debug, Clone)]
pub struct AcqConfig<F> {
    /// Number of posterior sample paths.
    pub mc_samples: usize,
    /// Base-sample generator (scrambled QMC by default).
    pub base_kind: BaseKind,
    /// Sigmoid temperature for constraint feasibility, on the standardized
    /// constraint scale.
    pub constraint_eps: F,
    /// Seed for base samples and any internal draws.
    pub seed: u64,
}

impl<F: Real> Default for AcqConfig<F> {
    fn default() -> Self {
        AcqConfig {
            mc_samples: 128,
            base_kind: BaseKind::QmcNormal,
            constraint_eps: F::of(1e-3),
            seed: 0,
        }
    }
}

/// A compiled acquisition objective: an expression graph over the flattened
/// new-candidate coordinates, with evaluation counters.
pub struct AcqObjective<F> {
    graph: ExprGraph<F>,
    ws: Workspace<F>,
    dim: usize,
    /// Forward evaluations performed.
    pub n_value: usize,
    /// Gradient evaluations performed.
    pub n_grad: usize,
}

impl<F: Real> AcqObjective<F> {
    /// The underlying expression graph (for gradient checks).
    pub fn graph(&self) -> &ExprGraph<F> {
        &self.graph
    }
}

impl<F: Real> Objective<F> for AcqObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&mut self, x: &[F]) -> Result<F> {
        self.n_value += 1;
        self.graph.evaluate_in(&mut self.ws, x)
    }

    fn value_grad(&mut self, x: &[F], grad: &mut [F]) -> Result<F> {
        self.n_grad += 1;
        let res = self.graph.gradient_in(&mut self.ws, x)?;
        grad.copy_from_slice(&res.gradient);
        Ok(res.value)
    }
}

/// Batch expected hypervolume improvement under a GP surrogate, estimated by
/// quasi-Monte Carlo over a box decomposition of the non-dominated region.
pub struct Qehvi<F> {
    model: GpModel<F>,
    decomp: BoxDecomposition<F>,
    cfg: AcqConfig<F>,
    /// Master base tensor over the maximum batch size; builds slice it so a
    /// batch position keeps its draws across pending configurations.
    base: BaseSamples<F>,
}

impl<F: Real> Qehvi<F> {
    pub fn new(
        model: GpModel<F>,
        decomp: BoxDecomposition<F>,
        cfg: AcqConfig<F>,
    ) -> Result<Self> {
        if decomp.objectives() != model.n_objectives() {
            return Err(Error::ShapeMismatch {
                context: "Qehvi",
                expected: format!("{} objectives", model.n_objectives()),
                got: format!("{}", decomp.objectives()),
            });
        }
        let base = BaseSamples::generate(
            cfg.mc_samples,
            MAX_BATCH,
            model.n_outputs(),
            cfg.base_kind,
            derive_seed(cfg.seed, 0x4241_5345), // "BASE"
        )?;
        Ok(Qehvi {
            model,
            decomp,
            cfg,
            base,
        })
    }

    pub fn model(&self) -> &GpModel<F> {
        &self.model
    }

    pub fn decomposition(&self) -> &BoxDecomposition<F> {
        &self.decomp
    }

    /// Compiles the acquisition for `q_new` new candidates given pending ones.
    ///
    /// The graph input is the flattened `q_new x d` coordinate block of the
    /// new candidates; pending candidates are baked in as constants.
    pub fn objective(&self, q_new: usize, pending: &[Vec<F>]) -> Result<AcqObjective<F>> {
        let d = self.model.dim();
        let p = pending.len();
        let q_total = p + q_new;
        if q_new == 0 {
            return Err(Error::InvalidArgument("q_new must be >= 1".into()));
        }
        if q_total > MAX_BATCH {
            return Err(Error::BatchTooLarge {
                q: q_total,
                max: MAX_BATCH,
            });
        }
        let n_obj = self.model.n_objectives();
        let n_con = self.model.n_constraints();
        let base = self.base.select_points(&(0..q_total).collect::<Vec<_>>());

        let mut b = GraphBuilder::<F>::new(q_new * d);
        let mut xs: Vec<Vec<NodeId>> = Vec::with_capacity(q_total);
        for pt in pending {
            if pt.len() != d {
                return Err(Error::ShapeMismatch {
                    context: "Qehvi::objective",
                    expected: format!("{d} pending coordinates"),
                    got: format!("{}", pt.len()),
                });
            }
            xs.push(pt.iter().map(|&v| b.constant(v)).collect());
        }
        for i in 0..q_new {
            xs.push((0..d).map(|m| b.input(i * d + m)).collect());
        }
        let pg = build_posterior_graph(&self.model, &mut b, &xs)?;

        // Constraint feasibility scale: sigmoid((c / std) / eps) keeps the
        // threshold at zero on the original scale.
        let con_scale: Vec<F> = (0..n_con)
            .map(|v| {
                let std = self.model.output(n_obj + v).y_std;
                F::one() / (self.cfg.constraint_eps * std)
            })
            .collect();

        let n_subsets = 1usize << q_total;
        let new_mask = (n_subsets - 1) ^ ((1usize << p) - 1);
        let n = self.cfg.mc_samples;
        let mut pos_terms: Vec<NodeId> = Vec::new();
        let mut neg_terms: Vec<NodeId> = Vec::new();

        // Scratch reused across draws, seeded with a dummy node that every
        // slot overwrites before use.
        let dummy = b.constant(F::zero());
        let mut z = vec![vec![dummy; q_total]; n_obj + n_con];
        let mut weight = vec![dummy; q_total];
        let mut zmin = vec![dummy; n_subsets * n_obj];
        let mut wprod = vec![dummy; n_subsets];
        let mut eps_buf = vec![F::zero(); q_total];

        for t in 0..n {
            // Sample paths z[o][i] for all outputs over the whole batch.
            for o in 0..n_obj + n_con {
                for i in 0..q_total {
                    for (k, e) in eps_buf.iter_mut().enumerate().take(i + 1) {
                        *e = base.at(t, k, o);
                    }
                    let lin = b.dot_const(&pg.chol[o][i], &eps_buf[..i + 1]);
                    z[o][i] = b.add(pg.mean[o][i], lin);
                }
            }
            // Per-point feasibility weights.
            if n_con > 0 {
                for (i, w) in weight.iter_mut().enumerate().take(q_total) {
                    let mut acc: Option<NodeId> = None;
                    for v in 0..n_con {
                        let scale = b.constant(con_scale[v]);
                        let a = b.mul(z[n_obj + v][i], scale);
                        let s = b.sigmoid(a);
                        acc = Some(match acc {
                            None => s,
                            Some(prev) => b.mul(prev, s),
                        });
                    }
                    *w = acc.unwrap();
                }
            }
            // Subset minima and weight products by lowest-bit recursion.
            for s in 1..n_subsets {
                let low = s.trailing_zeros() as usize;
                let rest = s & (s - 1);
                for m in 0..n_obj {
                    zmin[s * n_obj + m] = if rest == 0 {
                        z[m][low]
                    } else {
                        b.min(&[z[m][low], zmin[rest * n_obj + m]])
                    };
                }
                if n_con > 0 {
                    wprod[s] = if rest == 0 {
                        weight[low]
                    } else {
                        b.mul(weight[low], wprod[rest])
                    };
                }
            }
            // Box-restricted inclusion-exclusion over subsets touching a new
            // candidate; pending-only subsets cancel against the baseline.
            for k in 0..self.decomp.n_boxes() {
                let l = &self.decomp.lowers[k];
                let u = &self.decomp.uppers[k];
                for s in 1..n_subsets {
                    if s & new_mask == 0 {
                        continue;
                    }
                    let mut factor: Option<NodeId> = None;
                    for m in 0..n_obj {
                        let zm = zmin[s * n_obj + m];
                        let capped = if u[m].is_finite() {
                            let uc = b.constant(u[m]);
                            b.min(&[zm, uc])
                        } else {
                            zm
                        };
                        let lc = b.constant(l[m]);
                        let diff = b.sub(capped, lc);
                        let plus = b.relu(diff);
                        factor = Some(match factor {
                            None => plus,
                            Some(prev) => b.mul(prev, plus),
                        });
                    }
                    let mut term = factor.unwrap();
                    if n_con > 0 {
                        term = b.mul(term, wprod[s]);
                    }
                    if (s.count_ones() & 1) == 1 {
                        pos_terms.push(term);
                    } else {
                        neg_terms.push(term);
                    }
                }
            }
        }

        let pos = b.sum(&pos_terms);
        let total = if neg_terms.is_empty() {
            pos
        } else {
            let neg = b.sum(&neg_terms);
            b.sub(pos, neg)
        };
        let inv_n = b.constant(F::one() / F::of(n as f64));
        let avg = b.mul(total, inv_n);
        Ok(AcqObjective {
            graph: b.finish(avg),
            ws: Workspace::default(),
            dim: q_new * d,
            n_value: 0,
            n_grad: 0,
        })
    }

    /// Acquisition value of a complete batch with no pending points.
    pub fn value_of_batch(&self, batch: &[Vec<F>]) -> Result<F> {
        let d = self.model.dim();
        let mut obj = self.objective(batch.len(), &[])?;
        let flat: Vec<F> = batch.iter().flat_map(|x| x.iter().copied()).collect();
        if flat.len() != batch.len() * d {
            return Err(Error::ShapeMismatch {
                context: "value_of_batch",
                expected: format!("{} coordinates", batch.len() * d),
                got: format!("{}", flat.len()),
            });
        }
        obj.value(&flat)
    }
}

impl<F: Real> AcqFamily<F> for Qehvi<F> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn build<'a>(&'a mut self, pending: &[Vec<F>]) -> Result<Box<dyn Objective<F> + 'a>> {
        Ok(Box::new(self.objective(1, pending)?))
    }
}

/// Augmented Chebyshev scalarization under the maximization convention:
/// larger is better, `weights` lie on the simplex.
pub fn augmented_chebyshev<F: Real>(y: &[F], weights: &[F], rho: F) -> F {
    let mut worst = F::neg_infinity();
    let mut total = F::zero();
    for (&yi, &wi) in y.iter().zip(weights) {
        let g = wi * (-yi);
        worst = worst.max(g);
        total = total + g;
    }
    -(worst + rho * total)
}

/// Scalarization settings for the baseline.
#[derive(Debug, Clone)]
pub struct ScalarizationConfig<F> {
    /// Augmentation coefficient of the Chebyshev scalarization.
    pub rho: F,
}

impl<F: Real> Default for ScalarizationConfig<F> {
    fn default() -> Self {
        ScalarizationConfig { rho: F::of(0.05) }
    }
}

/// Scalarization baseline: expected improvement of a randomly weighted
/// augmented Chebyshev scalarization, one fresh weight vector per batch slot.
pub struct Qparego<F> {
    model: GpModel<F>,
    /// Observed objective vectors (maximization convention).
    observed_y: Vec<Vec<F>>,
    /// Feasibility of each observation (all true without constraints).
    feasible: Vec<bool>,
    cfg: AcqConfig<F>,
    scal: ScalarizationConfig<F>,
    next_slot: usize,
}

impl<F: Real> Qparego<F> {
    pub fn new(
        model: GpModel<F>,
        observed_y: Vec<Vec<F>>,
        feasible: Vec<bool>,
        cfg: AcqConfig<F>,
        scal: ScalarizationConfig<F>,
    ) -> Result<Self> {
        if observed_y.len() != feasible.len() {
            return Err(Error::ShapeMismatch {
                context: "Qparego",
                expected: format!("{} feasibility flags", observed_y.len()),
                got: format!("{}", feasible.len()),
            });
        }
        if observed_y.is_empty() {
            return Err(Error::InvalidArgument(
                "scalarization baseline needs at least one observation".into(),
            ));
        }
        Ok(Qparego {
            model,
            observed_y,
            feasible,
            cfg,
            scal,
            next_slot: 0,
        })
    }

    /// Simplex-uniform weights for a slot, deterministic in the seed.
    fn slot_weights(&self, slot: usize) -> Vec<F> {
        let m = self.model.n_objectives();
        let mut rng =
            ChaCha12Rng::seed_from_u64(derive_seed(self.cfg.seed, 0x5745_4947 ^ slot as u64));
        let mut w: Vec<f64> = (0..m)
            .map(|_| -(rng.gen::<f64>().max(1e-300)).ln())
            .collect();
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        w.into_iter().map(F::of).collect()
    }

    /// Compiles the expected-improvement objective for one slot.
    pub fn objective(&self, slot: usize) -> Result<AcqObjective<F>> {
        let d = self.model.dim();
        let n_obj = self.model.n_objectives();
        let n_con = self.model.n_constraints();
        let weights = self.slot_weights(slot);
        let rho = self.scal.rho;

        // Incumbent: best feasible observed scalarization; with nothing
        // feasible, one unit below the worst so improvement stays defined.
        let mut incumbent = F::neg_infinity();
        let mut worst = F::infinity();
        let mut any_feasible = false;
        for (y, &feas) in self.observed_y.iter().zip(&self.feasible) {
            let s = augmented_chebyshev(y, &weights, rho);
            worst = worst.min(s);
            if feas {
                any_feasible = true;
                incumbent = incumbent.max(s);
            }
        }
        if !any_feasible {
            incumbent = worst - F::one();
        }

        let base = BaseSamples::generate(
            self.cfg.mc_samples,
            1,
            n_obj + n_con,
            self.cfg.base_kind,
            derive_seed(self.cfg.seed, 0x5051_4249 ^ slot as u64),
        )?;
        let con_scale: Vec<F> = (0..n_con)
            .map(|v| {
                let std = self.model.output(n_obj + v).y_std;
                F::one() / (self.cfg.constraint_eps * std)
            })
            .collect();

        let mut b = GraphBuilder::<F>::new(d);
        let xs = vec![(0..d).map(|m| b.input(m)).collect::<Vec<_>>()];
        let pg = build_posterior_graph(&self.model, &mut b, &xs)?;
        let inc = b.constant(incumbent);
        let rho_c = b.constant(rho);
        let mut terms = Vec::with_capacity(self.cfg.mc_samples);
        for t in 0..self.cfg.mc_samples {
            // Objective sample path, then its scalarization on the tape.
            let mut neg_z = Vec::with_capacity(n_obj);
            let mut parts = Vec::with_capacity(n_obj);
            for m in 0..n_obj {
                let e = base.at(t, 0, m);
                let lin = b.dot_const(&pg.chol[m][0], &[e]);
                let zm = b.add(pg.mean[m][0], lin);
                neg_z.push(b.neg(zm));
            }
            for (m, &nz) in neg_z.iter().enumerate() {
                let wc = b.constant(weights[m]);
                parts.push(b.mul(wc, nz));
            }
            let worst_part = b.max(&parts);
            let total = b.sum(&parts);
            let aug = b.mul(rho_c, total);
            let inner = b.add(worst_part, aug);
            let s = b.neg(inner);
            let diff = b.sub(s, inc);
            let mut term = b.relu(diff);
            for v in 0..n_con {
                let o = n_obj + v;
                let e = base.at(t, 0, o);
                let lin = b.dot_const(&pg.chol[o][0], &[e]);
                let zc = b.add(pg.mean[o][0], lin);
                let scale = b.constant(con_scale[v]);
                let a = b.mul(zc, scale);
                let sg = b.sigmoid(a);
                term = b.mul(term, sg);
            }
            terms.push(term);
        }
        let total = b.sum(&terms);
        let inv_n = b.constant(F::one() / F::of(self.cfg.mc_samples as f64));
        let avg = b.mul(total, inv_n);
        Ok(AcqObjective {
            graph: b.finish(avg),
            ws: Workspace::default(),
            dim: d,
            n_value: 0,
            n_grad: 0,
        })
    }
}

impl<F: Real> AcqFamily<F> for Qparego<F> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn build<'a>(&'a mut self, _pending: &[Vec<F>]) -> Result<Box<dyn Objective<F> + 'a>> {
        let slot = self.next_slot;
        self.next_slot += 1;
        Ok(Box::new(self.objective(slot)?))
    }
}
