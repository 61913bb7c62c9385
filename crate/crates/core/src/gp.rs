//! Gaussian-process surrogates: Matérn-5/2 ARD kernel, per-output MAP
//! hyperparameter fitting with analytic marginal-likelihood gradients,
//! joint posteriors over candidate batches, posterior sampling, and a bridge
//! that replays the posterior onto the reverse-mode tape so acquisition
//! values differentiate through the surrogate.
//!
//! Outputs are modeled independently: each objective and each constraint gets
//! its own GP on standardized targets. Posteriors over a batch therefore have
//! block-diagonal covariance, one `q x q` block per output, stored
//! output-major (entry `o * q + i` is candidate `i` of output `o`).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GraphBuilder, NodeId};
use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_inverse, cholesky_solve, cholesky_with_jitter, dot, solve_lower, Matrix,
};
use crate::optimize::{maximize, LbfgsConfig, Objective};
use crate::sampling::{derive_seed, BaseSamples};
use crate::scalar::Real;

/// Relative nugget added to posterior covariance diagonals, in units of the
/// fitted signal variance.
const POSTERIOR_NUGGET: f64 = 1e-8;

/// Offset under the squared distance before the square root on the tape,
/// keeping the kernel differentiable at zero distance.
const R2_OFFSET: f64 = 1e-16;

/// Training data: `n x d` inputs with `n x m` objective values and optional
/// `n x v` constraint values (feasible when non-negative).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset<F> {
    pub x: Matrix<F>,
    pub y: Matrix<F>,
    pub constraints: Option<Matrix<F>>,
}

impl<F: Real> Dataset<F> {
    pub fn new(x: Matrix<F>, y: Matrix<F>, constraints: Option<Matrix<F>>) -> Result<Self> {
        if y.rows() != x.rows() {
            return Err(Error::ShapeMismatch {
                context: "Dataset",
                expected: format!("{} objective rows", x.rows()),
                got: format!("{}", y.rows()),
            });
        }
        if let Some(c) = &constraints {
            if c.rows() != x.rows() {
                return Err(Error::ShapeMismatch {
                    context: "Dataset",
                    expected: format!("{} constraint rows", x.rows()),
                    got: format!("{}", c.rows()),
                });
            }
        }
        Ok(Dataset { x, y, constraints })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn n_objectives(&self) -> usize {
        self.y.cols()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.as_ref().map_or(0, Matrix::cols)
    }
}

/// Kernel hyperparameters in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper<F> {
    pub log_lengthscales: Vec<F>,
    pub log_signal_var: F,
    pub log_noise_var: F,
}

impl<F: Real> GpHyper<F> {
    pub fn lengthscales(&self) -> Vec<F> {
        self.log_lengthscales.iter().map(|&v| v.exp()).collect()
    }

    pub fn signal_var(&self) -> F {
        self.log_signal_var.exp()
    }

    pub fn noise_var(&self) -> F {
        self.log_noise_var.exp()
    }
}

/// Matérn-5/2 kernel with per-dimension (ARD) lengthscales.
pub fn matern52_ard<F: Real>(a: &[F], b: &[F], lengthscales: &[F], signal_var: F) -> F {
    let mut r2 = F::zero();
    for m in 0..a.len() {
        let u = (a[m] - b[m]) / lengthscales[m];
        r2 = r2 + u * u;
    }
    let r = r2.sqrt();
    let sqrt5 = F::of(5.0).sqrt();
    let sr = sqrt5 * r;
    signal_var * (F::one() + sr + F::of(5.0 / 3.0) * r2) * (-sr).exp()
}

/// One fitted output: hyperparameters, standardization, and solver caches.
#[derive(Debug, Clone)]
pub struct FittedGp<F> {
    pub hyper: GpHyper<F>,
    pub y_mean: F,
    pub y_std: F,
    /// Standardized targets.
    y: Vec<F>,
    /// Cholesky factor of the noisy training covariance.
    chol: Matrix<F>,
    /// Jitter applied when factoring the training covariance.
    pub jitter: F,
    /// Weights `K^{-1} y` on the standardized scale.
    alpha: Vec<F>,
    /// Best penalized log marginal likelihood reached during fitting.
    pub log_posterior: F,
}

/// Independent GPs for every objective and constraint output.
#[derive(Debug, Clone)]
pub struct GpModel<F> {
    x: Matrix<F>,
    outputs: Vec<FittedGp<F>>,
    n_objectives: usize,
    n_constraints: usize,
}

/// Fit settings; the defaults match the engine's standard configuration.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 5,
            max_iters: 100,
        }
    }
}

/// Joint posterior over a candidate batch, block-diagonal across outputs.
///
/// Means are destandardized; block `o` of `cov` and `chol` is the `q x q`
/// covariance (and its factor) for output `o` on the original output scale.
#[derive(Debug, Clone)]
pub struct Posterior<F> {
    pub mean: Vec<F>,
    pub cov: Vec<Matrix<F>>,
    pub chol: Vec<Matrix<F>>,
    /// Jitter applied per output when factoring the covariance block.
    pub jitter: Vec<F>,
    pub q: usize,
    pub n_outputs: usize,
}

impl<F: Real> Posterior<F> {
    /// Mean of candidate `i` for output `o`.
    pub fn mean_at(&self, o: usize, i: usize) -> F {
        self.mean[o * self.q + i]
    }
}

/// Penalized log-marginal-likelihood objective over log-space parameters
/// `(log lengthscales.., log signal var, log noise var)`.
struct LmlObjective<'a, F> {
    x: &'a Matrix<F>,
    y: &'a [F],
    prior_ls_mean: F,
}

/// Value returned when the training covariance cannot be factored; large and
/// finite so line searches back off instead of aborting.
fn chol_penalty<F: Real>() -> F {
    F::of(-1e10)
}

impl<F: Real> LmlObjective<'_, F> {
    fn eval(&self, theta: &[F], mut grad: Option<&mut [F]>) -> F {
        let n = self.x.rows();
        let d = self.x.cols();
        let ls: Vec<F> = theta[..d].iter().map(|&v| v.exp()).collect();
        let s2 = theta[d].exp();
        let n2 = theta[d + 1].exp();
        let sqrt5 = F::of(5.0).sqrt();

        // Noise-free covariance plus the exponential factor reused by the
        // lengthscale gradients.
        let mut k = Matrix::zeros(n, n);
        let mut efac = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut r2 = F::zero();
                for m in 0..d {
                    let u = (self.x.get(i, m) - self.x.get(j, m)) / ls[m];
                    r2 = r2 + u * u;
                }
                let r = r2.sqrt();
                let e = (-sqrt5 * r).exp();
                let v = s2 * (F::one() + sqrt5 * r + F::of(5.0 / 3.0) * r2) * e;
                k.set(i, j, v);
                k.set(j, i, v);
                let g = s2 * (F::one() + sqrt5 * r) * e;
                efac.set(i, j, g);
                efac.set(j, i, g);
            }
        }
        let mut kn = k.clone();
        for i in 0..n {
            kn.set(i, i, kn.get(i, i) + n2);
        }
        let l = match crate::linalg::cholesky(&kn) {
            Some(l) => l,
            None => {
                if let Some(g) = grad.as_deref_mut() {
                    g.fill(F::zero());
                }
                return chol_penalty();
            }
        };
        let alpha = cholesky_solve(&l, self.y);
        let mut lml = -F::of(0.5) * dot(self.y, &alpha);
        for i in 0..n {
            lml = lml - l.get(i, i).ln();
        }
        lml = lml - F::of(0.5) * F::of(n as f64) * F::of((2.0 * std::f64::consts::PI).ln());

        // Log-normal priors on lengthscales and signal variance.
        let mut lp = lml;
        for m in 0..d {
            let z = theta[m] - self.prior_ls_mean;
            lp = lp - F::of(0.5) * z * z;
        }
        lp = lp - F::of(0.5) * theta[d] * theta[d];

        if let Some(g) = grad {
            // d lml / d theta_j = 0.5 tr((alpha alpha^T - K^{-1}) dK/dtheta_j)
            let kinv = cholesky_inverse(&l);
            let mut w = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    w.set(i, j, alpha[i] * alpha[j] - kinv.get(i, j));
                }
            }
            for m in 0..d {
                // dK_ij/d log ls_m = (5/3) s^2 (1 + sqrt5 r) e^{-sqrt5 r} u_m^2
                let mut acc = F::zero();
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let u = (self.x.get(i, m) - self.x.get(j, m)) / ls[m];
                        acc = acc + w.get(i, j) * F::of(5.0 / 3.0) * efac.get(i, j) * u * u;
                    }
                }
                g[m] = F::of(0.5) * acc - (theta[m] - self.prior_ls_mean);
            }
            let mut acc = F::zero();
            for i in 0..n {
                for j in 0..n {
                    acc = acc + w.get(i, j) * k.get(i, j);
                }
            }
            g[d] = F::of(0.5) * acc - theta[d];
            let mut tr = F::zero();
            for i in 0..n {
                tr = tr + w.get(i, i);
            }
            g[d + 1] = F::of(0.5) * n2 * tr;
        }
        lp
    }
}

impl<F: Real> Objective<F> for LmlObjective<'_, F> {
    fn dim(&self) -> usize {
        self.x.cols() + 2
    }

    fn value(&mut self, theta: &[F]) -> Result<F> {
        Ok(self.eval(theta, None))
    }

    fn value_grad(&mut self, theta: &[F], grad: &mut [F]) -> Result<F> {
        Ok(self.eval(theta, Some(grad)))
    }
}

/// Log-space box bounds for the fit search.
fn hyper_bounds<F: Real>(d: usize) -> Vec<(F, F)> {
    let mut b = vec![(F::of(1e-3_f64.ln()), F::of(1e3_f64.ln())); d];
    b.push((F::of(1e-6_f64.ln()), F::of(1e3_f64.ln())));
    b.push((F::of(1e-6_f64.ln()), F::zero()));
    b
}

fn fit_single<F: Real>(
    x: &Matrix<F>,
    y_raw: &[F],
    cfg: &FitConfig,
    seed: u64,
    output: usize,
) -> Result<FittedGp<F>> {
    let n = x.rows();
    let d = x.cols();
    if n < 2 {
        return Err(Error::FitFailed {
            output,
            reason: format!("need at least 2 observations, got {n}"),
        });
    }
    let mean = y_raw.iter().copied().sum::<F>() / F::of(n as f64);
    let var = y_raw
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<F>()
        / F::of(n as f64);
    let std = var.sqrt().max(F::of(1e-12));
    let y: Vec<F> = y_raw.iter().map(|&v| (v - mean) / std).collect();

    let prior_ls_mean = F::of((d as f64).sqrt().ln() - 2.0_f64.ln());
    let mut obj = LmlObjective {
        x,
        y: &y,
        prior_ls_mean,
    };
    let bounds = hyper_bounds::<F>(d);
    let mut lbfgs = LbfgsConfig::default();
    lbfgs.max_iters = cfg.max_iters;
    lbfgs.tol = F::of(1e-6);

    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 0x4750_4649 ^ output as u64));
    let mut best: Option<(Vec<F>, F)> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut theta = vec![F::zero(); d + 2];
        if restart == 0 {
            for t in theta.iter_mut().take(d) {
                *t = prior_ls_mean;
            }
            theta[d] = F::zero();
            theta[d + 1] = F::of(1e-4_f64.ln());
        } else {
            for t in theta.iter_mut().take(d) {
                *t = prior_ls_mean + F::of(standard_normal(&mut rng));
            }
            theta[d] = F::of(standard_normal(&mut rng));
            let u: f64 = rng.gen();
            theta[d + 1] = F::of((1e-6_f64.ln()) + u * (1e-2_f64.ln() - 1e-6_f64.ln()));
        }
        for (t, &(lo, hi)) in theta.iter_mut().zip(&bounds) {
            *t = (*t).max(lo).min(hi);
        }
        let run = maximize(&mut obj, &theta, &bounds, &lbfgs)?;
        if run.value > chol_penalty::<F>() {
            let better = best.as_ref().map_or(true, |(_, v)| run.value > *v);
            if better {
                best = Some((run.x, run.value));
            }
        }
    }
    let (theta, log_posterior) = best.ok_or(Error::FitFailed {
        output,
        reason: "no restart produced a usable covariance".into(),
    })?;

    let hyper = GpHyper {
        log_lengthscales: theta[..d].to_vec(),
        log_signal_var: theta[d],
        log_noise_var: theta[d + 1],
    };
    let (chol, jitter, alpha) = training_caches(x, &y, &hyper)?;
    Ok(FittedGp {
        hyper,
        y_mean: mean,
        y_std: std,
        y,
        chol,
        jitter,
        alpha,
    log_posterior,
    })
}

fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    // Box-Muller is plenty for restart jitter.
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn training_caches<F: Real>(
    x: &Matrix<F>,
    y: &[F],
    hyper: &GpHyper<F>,
) -> Result<(Matrix<F>, F, Vec<F>)> {
    let n = x.rows();
    let ls = hyper.lengthscales();
    let s2 = hyper.signal_var();
    let n2 = hyper.noise_var();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = matern52_ard(x.row(i), x.row(j), &ls, s2);
            k.set(i, j, v);
            k.set(j, i, v);
        }
        k.set(i, i, k.get(i, i) + n2);
    }
    let (chol, jitter) = cholesky_with_jitter(&k)?;
    let alpha = cholesky_solve(&chol, y);
    Ok((chol, jitter, alpha))
}

impl<F: Real> GpModel<F> {
    /// Fits one GP per objective and per constraint with multi-start MAP.
    pub fn fit(data: &Dataset<F>, cfg: &FitConfig, seed: u64) -> Result<Self> {
        let n_obj = data.n_objectives();
        let n_con = data.n_constraints();
        let mut outputs = Vec::with_capacity(n_obj + n_con);
        for o in 0..n_obj {
            let col: Vec<F> = (0..data.len()).map(|i| data.y.get(i, o)).collect();
            outputs.push(fit_single(&data.x, &col, cfg, seed, o)?);
        }
        if let Some(c) = &data.constraints {
            for v in 0..n_con {
                let col: Vec<F> = (0..data.len()).map(|i| c.get(i, v)).collect();
                outputs.push(fit_single(&data.x, &col, cfg, seed, n_obj + v)?);
            }
        }
        Ok(GpModel {
            x: data.x.clone(),
            outputs,
            n_objectives: n_obj,
            n_constraints: n_con,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn n_train(&self) -> usize {
        self.x.rows()
    }

    pub fn n_objectives(&self) -> usize {
        self.n_objectives
    }

    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Fitted GP for output `o` (objectives first, then constraints).
    pub fn output(&self, o: usize) -> &FittedGp<F> {
        &self.outputs[o]
    }

    /// Joint posterior over `points`, block-diagonal across outputs.
    pub fn posterior(&self, points: &[Vec<F>]) -> Result<Posterior<F>> {
        let q = points.len();
        let d = self.dim();
        if q == 0 {
            return Err(Error::InvalidArgument("posterior over empty batch".into()));
        }
        for p in points {
            if p.len() != d {
                return Err(Error::ShapeMismatch {
                    context: "posterior",
                    expected: format!("{d} input coordinates"),
                    got: format!("{}", p.len()),
                });
            }
        }
        let n = self.n_train();
        let mut mean = vec![F::zero(); self.outputs.len() * q];
        let mut cov = Vec::with_capacity(self.outputs.len());
        let mut chol = Vec::with_capacity(self.outputs.len());
        let mut jitters = Vec::with_capacity(self.outputs.len());
        for (o, gp) in self.outputs.iter().enumerate() {
            let ls = gp.hyper.lengthscales();
            let s2 = gp.hyper.signal_var();
            // Cross-covariances and their whitened solves.
            let mut vs: Vec<Vec<F>> = Vec::with_capacity(q);
            for (i, p) in points.iter().enumerate() {
                let kstar: Vec<F> = (0..n)
                    .map(|j| matern52_ard(p, self.x.row(j), &ls, s2))
                    .collect();
                mean[o * q + i] = gp.y_mean + gp.y_std * dot(&kstar, &gp.alpha);
                vs.push(solve_lower(&gp.chol, &kstar));
            }
            let nugget = F::of(POSTERIOR_NUGGET) * s2;
            let mut c = Matrix::zeros(q, q);
            for i in 0..q {
                for j in 0..=i {
                    let kij = matern52_ard(&points[i], &points[j], &ls, s2);
                    let mut v = kij - dot(&vs[i], &vs[j]);
                    if i == j {
                        v = v + nugget;
                    }
                    let scaled = gp.y_std * gp.y_std * v;
                    c.set(i, j, scaled);
                    c.set(j, i, scaled);
                }
            }
            let (l, jit) = cholesky_with_jitter(&c)?;
            cov.push(c);
            chol.push(l);
            jitters.push(jit);
        }
        Ok(Posterior {
            mean,
            cov,
            chol,
            jitter: jitters,
            q,
            n_outputs: self.outputs.len(),
        })
    }

    /// Draws joint samples from `posterior` by reparameterization with the
    /// provided base normal variates: draw `t` is a `q x outputs` matrix.
    pub fn sample(&self, posterior: &Posterior<F>, base: &BaseSamples<F>) -> Result<Vec<Matrix<F>>> {
        if base.q != posterior.q || base.outputs != posterior.n_outputs {
            return Err(Error::ShapeMismatch {
                context: "sample",
                expected: format!("base samples {} x {}", posterior.q, posterior.n_outputs),
                got: format!("{} x {}", base.q, base.outputs),
            });
        }
        let q = posterior.q;
        let mut draws = Vec::with_capacity(base.n);
        for t in 0..base.n {
            let mut m = Matrix::zeros(q, posterior.n_outputs);
            for o in 0..posterior.n_outputs {
                let l = &posterior.chol[o];
                for i in 0..q {
                    let mut z = posterior.mean[o * q + i];
                    for k in 0..=i {
                        z = z + l.get(i, k) * base.at(t, k, o);
                    }
                    m.set(i, o, z);
                }
            }
            draws.push(m);
        }
        Ok(draws)
    }
}

/// Posterior of a candidate batch replayed on the tape: destandardized means
/// and per-output lower-triangular Cholesky factors as graph nodes.
pub struct PosteriorGraph {
    /// `mean[o][i]`: mean node of candidate `i`, output `o`.
    pub mean: Vec<Vec<NodeId>>,
    /// `chol[o][i][k]` for `k <= i`: Cholesky entry nodes per output.
    pub chol: Vec<Vec<Vec<NodeId>>>,
}

/// Emits kernel evaluation between a candidate's coordinate nodes and a
/// constant training row.
fn kernel_nodes_const<F: Real>(
    b: &mut GraphBuilder<F>,
    xi: &[NodeId],
    row: &[F],
    inv_ls: &[F],
    s2: F,
) -> NodeId {
    let mut terms = Vec::with_capacity(xi.len());
    for m in 0..xi.len() {
        let c = b.constant(row[m]);
        let diff = b.sub(xi[m], c);
        let inv = b.constant(inv_ls[m]);
        let u = b.mul(diff, inv);
        terms.push(b.mul(u, u));
    }
    let r2_raw = b.sum(&terms);
    kernel_from_r2(b, r2_raw, s2)
}

/// Emits kernel evaluation between two candidates' coordinate nodes.
fn kernel_nodes_pair<F: Real>(
    b: &mut GraphBuilder<F>,
    xi: &[NodeId],
    xj: &[NodeId],
    inv_ls: &[F],
    s2: F,
) -> NodeId {
    let mut terms = Vec::with_capacity(xi.len());
    for m in 0..xi.len() {
        let diff = b.sub(xi[m], xj[m]);
        let inv = b.constant(inv_ls[m]);
        let u = b.mul(diff, inv);
        terms.push(b.mul(u, u));
    }
    let r2_raw = b.sum(&terms);
    kernel_from_r2(b, r2_raw, s2)
}

/// Matérn-5/2 from a squared-distance node, offset so the square root stays
/// differentiable when the distance vanishes.
fn kernel_from_r2<F: Real>(b: &mut GraphBuilder<F>, r2_raw: NodeId, s2: F) -> NodeId {
    let offset = b.constant(F::of(R2_OFFSET));
    let r2 = b.add(r2_raw, offset);
    let r = b.sqrt(r2);
    let sqrt5 = b.constant(F::of(5.0).sqrt());
    let sr = b.mul(sqrt5, r);
    let five_thirds = b.constant(F::of(5.0 / 3.0));
    let quad = b.mul(five_thirds, r2);
    let one = b.constant(F::one());
    let lin = b.add(one, sr);
    let poly = b.add(lin, quad);
    let neg_sr = b.neg(sr);
    let expo = b.exp(neg_sr);
    let scale = b.constant(s2);
    let prod = b.mul(poly, expo);
    b.mul(scale, prod)
}

/// Replays the block-diagonal posterior over candidates `xs` onto the tape.
///
/// Each candidate is given by its coordinate nodes; pending candidates whose
/// coordinates were added as constants fold to constants throughout, so they
/// cost nothing at evaluation time.
pub fn build_posterior_graph<F: Real>(
    model: &GpModel<F>,
    b: &mut GraphBuilder<F>,
    xs: &[Vec<NodeId>],
) -> Result<PosteriorGraph> {
    let q = xs.len();
    let d = model.dim();
    for x in xs {
        if x.len() != d {
            return Err(Error::ShapeMismatch {
                context: "build_posterior_graph",
                expected: format!("{d} coordinate nodes"),
                got: format!("{}", x.len()),
            });
        }
    }
    let n = model.n_train();
    let mut mean_out = Vec::with_capacity(model.outputs.len());
    let mut chol_out = Vec::with_capacity(model.outputs.len());
    for gp in &model.outputs {
        let ls = gp.hyper.lengthscales();
        let inv_ls: Vec<F> = ls.iter().map(|&v| F::one() / v).collect();
        let s2 = gp.hyper.signal_var();
        let nugget = F::of(POSTERIOR_NUGGET) * s2;
        let y_std = b.constant(gp.y_std);
        let y_mean = b.constant(gp.y_mean);

        // Per candidate: k_star, mean, and the whitened solve v = L^{-1} k.
        let mut means = Vec::with_capacity(q);
        let mut vs: Vec<Vec<NodeId>> = Vec::with_capacity(q);
        for xi in xs {
            let kstar: Vec<NodeId> = (0..n)
                .map(|j| kernel_nodes_const(b, xi, model.x.row(j), &inv_ls, s2))
                .collect();
            let alpha: Vec<NodeId> =
                gp.alpha.iter().map(|&a| b.constant(a)).collect();
            let mu_std = b.dot(&kstar, &alpha);
            let scaled = b.mul(y_std, mu_std);
            means.push(b.add(y_mean, scaled));
            // Forward substitution against the constant training factor.
            let mut v = Vec::with_capacity(n);
            for j in 0..n {
                let mut acc = kstar[j];
                if j > 0 {
                    let mut terms = Vec::with_capacity(j);
                    for (t, &vt) in v.iter().enumerate().take(j) {
                        let ljt = b.constant(gp.chol.get(j, t));
                        terms.push(b.mul(ljt, vt));
                    }
                    let s = b.sum(&terms);
                    acc = b.sub(acc, s);
                }
                let inv_l = b.constant(F::one() / gp.chol.get(j, j));
                v.push(b.mul(acc, inv_l));
            }
            vs.push(v);
        }

        // Standardized posterior covariance entries under the diagonal.
        let mut cov = vec![Vec::new(); q];
        for i in 0..q {
            for j in 0..=i {
                let kij = kernel_nodes_pair(b, &xs[i], &xs[j], &inv_ls, s2);
                let vv = b.dot(&vs[i], &vs[j]);
                let mut c = b.sub(kij, vv);
                if i == j {
                    let ng = b.constant(nugget);
                    c = b.add(c, ng);
                }
                cov[i].push(c);
            }
        }

        // Unrolled q x q Cholesky; the diagonal is floored to keep the square
        // root differentiable under round-off.
        let floor = F::of(1e-12) * s2;
        let mut lrows: Vec<Vec<NodeId>> = vec![Vec::new(); q];
        for i in 0..q {
            for j in 0..=i {
                let mut acc = cov[i][j];
                if j > 0 {
                    let mut terms = Vec::with_capacity(j);
                    for t in 0..j {
                        terms.push(b.mul(lrows[i][t], lrows[j][t]));
                    }
                    let s = b.sum(&terms);
                    acc = b.sub(acc, s);
                }
                if i == j {
                    let fl = b.constant(floor);
                    let safe = b.max(&[acc, fl]);
                    lrows[i].push(b.sqrt(safe));
                } else {
                    let inv = {
                        let one = b.constant(F::one());
                        b.div(one, lrows[j][j])
                    };
                    lrows[i].push(b.mul(acc, inv));
                }
            }
        }
        // Destandardize the factor.
        for row in lrows.iter_mut() {
            for e in row.iter_mut() {
                *e = b.mul(y_std, *e);
            }
        }
        mean_out.push(means);
        chol_out.push(lrows);
    }
    Ok(PosteriorGraph {
        mean: mean_out,
        chol: chol_out,
    })
}

/// Builds a tape computing the log marginal likelihood of `(x, y)` as a
/// function of the log-space hyperparameters, Cholesky unrolled as tape
/// operations. Exists to demonstrate the tape can differentiate the fit
/// objective end to end; the production fit uses the analytic gradients.
pub fn build_lml_graph<F: Real>(x: &Matrix<F>, y: &[F]) -> crate::autodiff::ExprGraph<F> {
    let n = x.rows();
    let d = x.cols();
    let mut b = GraphBuilder::new(d + 2);
    let theta_ls: Vec<NodeId> = (0..d).map(|m| b.input(m)).collect();
    let s2 = {
        let t = b.input(d);
        b.exp(t)
    };
    let n2 = {
        let t = b.input(d + 1);
        b.exp(t)
    };
    let inv_ls: Vec<NodeId> = theta_ls
        .iter()
        .map(|&t| {
            let e = b.exp(t);
            let one = b.constant(F::one());
            b.div(one, e)
        })
        .collect();

    // Covariance entries, lower triangle only.
    let mut k: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..=i {
            let mut terms = Vec::with_capacity(d);
            for m in 0..d {
                let c = b.constant(x.get(i, m) - x.get(j, m));
                let u = b.mul(c, inv_ls[m]);
                terms.push(b.mul(u, u));
            }
            let r2_raw = b.sum(&terms);
            let mut kij = kernel_from_r2(&mut b, r2_raw, F::one());
            kij = b.mul(kij, s2);
            if i == j {
                kij = b.add(kij, n2);
            }
            k[i].push(kij);
        }
    }

    // On-tape Cholesky and triangular solves.
    let mut l = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = k[i][j];
            if j > 0 {
                let mut terms = Vec::with_capacity(j);
                for t in 0..j {
                    terms.push(b.mul(l[i][t], l[j][t]));
                }
                let s = b.sum(&terms);
                acc = b.sub(acc, s);
            }
            if i == j {
                l[i].push(b.sqrt(acc));
            } else {
                let one = b.constant(F::one());
                let inv = b.div(one, l[j][j]);
                l[i].push(b.mul(acc, inv));
            }
        }
    }
    let mut w = Vec::with_capacity(n);
    for j in 0..n {
        let mut acc = b.constant(y[j]);
        if j > 0 {
            let mut terms = Vec::with_capacity(j);
            for (t, &wt) in w.iter().enumerate().take(j) {
                terms.push(b.mul(l[j][t], wt));
            }
            let s = b.sum(&terms);
            acc = b.sub(acc, s);
        }
        let one = b.constant(F::one());
        let inv = b.div(one, l[j][j]);
        w.push(b.mul(acc, inv));
    }
    // lml = -0.5 w^T w - sum log L_ii - (n/2) log 2 pi
    let wtw = b.dot(&w, &w);
    let half = b.constant(F::of(-0.5));
    let quad = b.mul(half, wtw);
    let logdets: Vec<NodeId> = (0..n).map(|i| b.ln(l[i][i])).collect();
    let logdet = b.sum(&logdets);
    let lml1 = b.sub(quad, logdet);
    let c = b.constant(F::of(0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()));
    let out = b.sub(lml1, c);
    b.finish(out)
}

#[derive(Serialize, Deserialize)]
struct FittedGpWire<F> {
    hyper: GpHyper<F>,
    y_mean: F,
    y_std: F,
    y: Vec<F>,
    log_posterior: F,
}

#[derive(Serialize, Deserialize)]
struct GpModelWire<F> {
    x: Matrix<F>,
    outputs: Vec<FittedGpWire<F>>,
    n_objectives: usize,
    n_constraints: usize,
}

impl<F: Real + Serialize> Serialize for GpModel<F> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let wire = GpModelWire {
            x: self.x.clone(),
            outputs: self
                .outputs
                .iter()
                .map(|g| FittedGpWire {
                    hyper: g.hyper.clone(),
                    y_mean: g.y_mean,
                    y_std: g.y_std,
                    y: g.y.clone(),
                    log_posterior: g.log_posterior,
                })
                .collect(),
            n_objectives: self.n_objectives,
            n_constraints: self.n_constraints,
        };
        wire.serialize(s)
    }
}

impl<'de, F: Real + Deserialize<'de>> Deserialize<'de> for GpModel<F> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = GpModelWire::<F>::deserialize(d)?;
        let mut outputs = Vec::with_capacity(wire.outputs.len());
        for g in wire.outputs {
            let (chol, jitter, alpha) = training_caches(&wire.x, &g.y, &g.hyper)
                .map_err(serde::de::Error::custom)?;
            outputs.push(FittedGp {
                hyper: g.hyper,
                y_mean: g.y_mean,
                y_std: g.y_std,
                y: g.y,
                chol,
                jitter,
                alpha,
                log_posterior: g.log_posterior,
            });
        }
        Ok(GpModel {
            x: wire.x,
            outputs,
            n_objectives: wire.n_objectives,
            n_constraints: wire.n_constraints,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::BaseKind;

    #[test]
    fn kernel_matches_known_value_at_unit_distance() {
        // One dimension, unit lengthscale, |a - b| = 1.
        let k: f64 = matern52_ard(&[0.0], &[1.0], &[1.0], 1.0);
        assert!((k - 0.523_994_8).abs() < 1e-6, "k = {k}");
        // Unit variance at zero distance.
        let k0: f64 = matern52_ard(&[0.3, 0.7], &[0.3, 0.7], &[1.0, 2.0], 2.5);
        assert!((k0 - 2.5).abs() < 1e-12);
    }

    #[test]
    fn kernel_decreases_with_distance() {
        let ls = [0.5, 1.5];
        let mut prev = f64::INFINITY;
        for step in 0..10 {
            let t = step as f64 * 0.3;
            let k = matern52_ard(&[0.0, 0.0], &[t, t], &ls, 1.0);
            assert!(k < prev || step == 0);
            assert!(k > 0.0);
            prev = k;
        }
    }

    fn toy_dataset(n: usize, seed: u64) -> Dataset<f64> {
        // Smooth function with small observation noise.
        let xs = crate::sampling::sobol::<f64>(n, 2, seed).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x55);
        let mut y = Matrix::zeros(n, 1);
        let mut x = Matrix::zeros(n, 2);
        for i in 0..n {
            let (a, b) = (xs[i][0], xs[i][1]);
            x.set(i, 0, a);
            x.set(i, 1, b);
            let noise = 0.01 * standard_normal(&mut rng);
            y.set(i, 0, (3.0 * a).sin() + b * b + noise);
        }
        Dataset::new(x, y, None).unwrap()
    }

    #[test]
    fn analytic_lml_gradient_matches_finite_differences() {
        let data = toy_dataset(12, 3);
        let col: Vec<f64> = (0..12).map(|i| data.y.get(i, 0)).collect();
        let mean = col.iter().sum::<f64>() / 12.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
        let std = var.sqrt();
        let ystd: Vec<f64> = col.iter().map(|v| (v - mean) / std).collect();
        let mut obj = LmlObjective {
            x: &data.x,
            y: &ystd,
            prior_ls_mean: 0.5_f64.ln() * 0.0 - 0.34,
        };
        let theta = vec![-0.3, 0.1, -0.2, -6.0];
        let mut grad = vec![0.0; 4];
        let f0 = obj.value_grad(&theta, &mut grad).unwrap();
        assert!(f0.is_finite());
        let h = 1e-6;
        for j in 0..4 {
            let mut tp = theta.clone();
            tp[j] += h;
            let fp = obj.value(&tp).unwrap();
            tp[j] -= 2.0 * h;
            let fm = obj.value(&tp).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (grad[j] - fd).abs() <= 1e-4 * (1.0 + fd.abs()),
                "theta[{j}]: analytic {} vs fd {}",
                grad[j],
                fd
            );
        }
    }

    #[test]
    fn tape_lml_matches_analytic_objective_and_gradient() {
        let data = toy_dataset(10, 9);
        let col: Vec<f64> = (0..10).map(|i| data.y.get(i, 0)).collect();
        let graph = build_lml_graph(&data.x, &col);
        // Analytic objective (without priors) on the same raw targets.
        let mut obj = LmlObjective {
            x: &data.x,
            y: &col,
            prior_ls_mean: 0.0,
        };
        let theta = vec![-0.5, 0.2, 0.3, -4.0];
        let tape_val = graph.evaluate(&theta).unwrap();
        let tape_grad = graph.gradient(&theta).unwrap();
        let mut grad = vec![0.0; 4];
        let analytic = obj.value_grad(&theta, &mut grad).unwrap();
        // Remove the prior terms the analytic objective adds.
        let prior: f64 = theta[..2].iter().map(|t| -0.5 * t * t).sum::<f64>()
            + -0.5 * theta[2] * theta[2];
        assert!(
            (tape_val - (analytic - prior)).abs() < 1e-8,
            "tape {tape_val} vs analytic {}",
            analytic - prior
        );
        let prior_grad = [-theta[0], -theta[1], -theta[2], 0.0];
        for j in 0..4 {
            let want = grad[j] - prior_grad[j];
            assert!(
                (tape_grad.gradient[j] - want).abs() < 1e-7,
                "grad[{j}] tape {} vs analytic {}",
                tape_grad.gradient[j],
                want
            );
        }
    }

    #[test]
    fn fit_recovers_smooth_function() {
        let data = toy_dataset(40, 1);
        let model = GpModel::fit(&data, &FitConfig::default(), 7).unwrap();
        assert_eq!(model.n_outputs(), 1);
        // Posterior mean approximates the target at held-out points.
        let test = crate::sampling::sobol::<f64>(20, 2, 999).unwrap();
        let mut worst: f64 = 0.0;
        for t in &test {
            let post = model.posterior(&[t.clone()]).unwrap();
            let truth = (3.0 * t[0]).sin() + t[1] * t[1];
            worst = worst.max((post.mean[0] - truth).abs());
        }
        assert!(worst < 0.15, "max abs error {worst}");
    }

    #[test]
    fn posterior_variance_shrinks_at_training_points() {
        let data = toy_dataset(25, 5);
        let model = GpModel::fit(&data, &FitConfig::default(), 2).unwrap();
        let x0: Vec<f64> = data.x.row(3).to_vec();
        let at_train = model.posterior(&[x0]).unwrap();
        let far = model.posterior(&[vec![0.987, 0.013]]).unwrap();
        let v_train = at_train.cov[0].get(0, 0);
        let v_far = far.cov[0].get(0, 0);
        assert!(v_train >= 0.0);
        assert!(v_far > 10.0 * v_train, "train {v_train} vs far {v_far}");
    }

    #[test]
    fn posterior_interpolates_noisefree_data_tightly() {
        let data = toy_dataset(30, 11);
        let model = GpModel::fit(&data, &FitConfig::default(), 3).unwrap();
        for i in [0, 7, 19] {
            let post = model.posterior(&[data.x.row(i).to_vec()]).unwrap();
            let resid = (post.mean[0] - data.y.get(i, 0)).abs();
            assert!(resid < 0.05, "residual {resid} at row {i}");
        }
    }

    #[test]
    fn sample_moments_match_posterior() {
        let data = toy_dataset(15, 21);
        let model = GpModel::fit(&data, &FitConfig::default(), 4).unwrap();
        let pts = vec![vec![0.4, 0.6], vec![0.8, 0.1]];
        let post = model.posterior(&pts).unwrap();
        let base =
            BaseSamples::<f64>::generate(4096, 2, 1, BaseKind::QmcNormal, 77).unwrap();
        let draws = model.sample(&post, &base).unwrap();
        for i in 0..2 {
            let vals: Vec<f64> = draws.iter().map(|d| d.get(i, 0)).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>()
                / vals.len() as f64;
            assert!((m - post.mean[i]).abs() < 0.02, "mean {m} vs {}", post.mean[i]);
            assert!(
                (v - post.cov[0].get(i, i)).abs() < 0.05 * post.cov[0].get(i, i) + 0.01,
                "var {v} vs {}",
                post.cov[0].get(i, i)
            );
        }
    }

    #[test]
    fn posterior_graph_reproduces_plain_posterior() {
        let data = toy_dataset(18, 31);
        let model = GpModel::fit(&data, &FitConfig::default(), 6).unwrap();
        let pts = vec![vec![0.3, 0.4], vec![0.9, 0.2], vec![0.1, 0.8]];
        let post = model.posterior(&pts).unwrap();

        let mut b = GraphBuilder::<f64>::new(6);
        let xs: Vec<Vec<NodeId>> = (0..3)
            .map(|i| (0..2).map(|m| b.input(i * 2 + m)).collect())
            .collect();
        let pg = build_posterior_graph(&model, &mut b, &xs).unwrap();
        let flat: Vec<f64> = pts.iter().flatten().copied().collect();

        // Compare means.
        for i in 0..3 {
            let g = b.clone().finish(pg.mean[0][i]);
            let got = g.evaluate(&flat).unwrap();
            let want = post.mean[i];
            assert!((got - want).abs() < 1e-8, "mean {i}: {got} vs {want}");
        }
        // Compare the covariance via L L^T.
        for i in 0..3 {
            for j in 0..=i {
                let mut cov_ij = 0.0;
                for k in 0..=j {
                    let gi = b.clone().finish(pg.chol[0][i][k]);
                    let gj = b.clone().finish(pg.chol[0][j][k]);
                    cov_ij += gi.evaluate(&flat).unwrap() * gj.evaluate(&flat).unwrap();
                }
                let want = post.cov[0].get(i, j);
                assert!(
                    (cov_ij - want).abs() < 1e-7 + 1e-5 * want.abs(),
                    "cov[{i}][{j}]: {cov_ij} vs {want}"
                );
            }
        }
    }

    #[test]
    fn posterior_graph_gradient_passes_finite_difference_check() {
        let data = toy_dataset(12, 41);
        let model = GpModel::fit(&data, &FitConfig::default(), 8).unwrap();
        let mut b = GraphBuilder::<f64>::new(4);
        let xs: Vec<Vec<NodeId>> = (0..2)
            .map(|i| (0..2).map(|m| b.input(i * 2 + m)).collect())
            .collect();
        let pg = build_posterior_graph(&model, &mut b, &xs).unwrap();
        // A scalar mixing mean and covariance pathways.
        let sum_mean = b.sum(&pg.mean[0].clone());
        let l10 = pg.chol[0][1][0];
        let l11 = pg.chol[0][1][1];
        let mix = b.add(l10, l11);
        let out = b.add(sum_mean, mix);
        let g = b.finish(out);
        let check = g
            .check_gradient(&[0.35, 0.62, 0.71, 0.22], 1e-5)
            .unwrap();
        assert!(
            check.max_rel_error < 1e-5,
            "gradient mismatch {:?}",
            check.max_rel_error
        );
    }

    #[test]
    fn pending_constants_fold_away() {
        let data = toy_dataset(14, 51);
        let model = GpModel::fit(&data, &FitConfig::default(), 9).unwrap();
        // One live candidate plus one pending candidate as constants.
        let mut b = GraphBuilder::<f64>::new(2);
        let live: Vec<NodeId> = (0..2).map(|m| b.input(m)).collect();
        let pend: Vec<NodeId> = [0.3, 0.9].iter().map(|&v| b.constant(v)).collect();
        let pg = build_posterior_graph(&model, &mut b, &[pend, live]).unwrap();
        let pending_cost = b.n_dynamic();

        let mut b2 = GraphBuilder::<f64>::new(2);
        let live2: Vec<NodeId> = (0..2).map(|m| b2.input(m)).collect();
        let _ = build_posterior_graph(&model, &mut b2, &[live2]).unwrap();
        let single_cost = b2.n_dynamic();

        // The pending candidate's posterior path folds to constants, so the
        // two-candidate graph carries few extra input-dependent ops beyond the
        // one-candidate graph (cross-covariance terms are the only growth).
        assert!(
            pending_cost < single_cost + single_cost / 2,
            "pending {pending_cost} vs single {single_cost}"
        );
        // Pending-block means are constants: evaluating with different live
        // inputs leaves them untouched.
        let gm = b.finish(pg.mean[0][0]);
        let a = gm.evaluate(&[0.1, 0.1]).unwrap();
        let c = gm.evaluate(&[0.9, 0.9]).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn model_round_trips_through_json() {
        let data = toy_dataset(10, 61);
        let model = GpModel::fit(&data, &FitConfig::default(), 11).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: GpModel<f64> = serde_json::from_str(&json).unwrap();
        let pts = vec![vec![0.25, 0.75]];
        let a = model.posterior(&pts).unwrap();
        let b = back.posterior(&pts).unwrap();
        assert!((a.mean[0] - b.mean[0]).abs() < 1e-12);
        assert!((a.cov[0].get(0, 0) - b.cov[0].get(0, 0)).abs() < 1e-12);
    }

    #[test]
    fn constraints_get_their_own_outputs() {
        let mut data = toy_dataset(12, 71);
        let n = data.len();
        let mut c = Matrix::zeros(n, 1);
        for i in 0..n {
            c.set(i, 0, data.x.get(i, 0) - 0.5);
        }
        data.constraints = Some(c);
        let model = GpModel::fit(&data, &FitConfig::default(), 13).unwrap();
        assert_eq!(model.n_objectives(), 1);
        assert_eq!(model.n_constraints(), 1);
        assert_eq!(model.n_outputs(), 2);
        let post = model.posterior(&[vec![0.9, 0.5]]).unwrap();
        // Constraint output should predict roughly x0 - 0.5 = 0.4.
        assert!((post.mean_at(1, 0) - 0.4).abs() < 0.1);
    }
}
