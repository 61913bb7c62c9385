//! Bound-constrained maximization: projected L-BFGS with a strong-Wolfe line
//! search, multi-start driving, Sobol initial conditions, and the sequential
//! greedy loop used for batch selection.
//!
//! Gradients come either from the caller's analytic implementation or from
//! central finite differences; both paths report how many underlying
//! objective evaluations they consumed so callers can compare budgets.

use crate::error::{Error, Result};
use crate::sampling::{derive_seed, sobol};
use crate::scalar::Real;

/// A differentiable objective over a box domain. `&mut self` lets
/// implementations reuse scratch buffers and keep evaluation counters.
pub trait Objective<F: Real> {
    /// Input dimension.
    fn dim(&self) -> usize;
    /// Objective value at `x`.
    fn value(&mut self, x: &[F]) -> Result<F>;
    /// Objective value and gradient at `x`; `grad` has length `dim()`.
    fn value_grad(&mut self, x: &[F], grad: &mut [F]) -> Result<F>;
}

/// How the optimizer obtains gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradMode<F> {
    /// Call `Objective::value_grad`.
    Exact,
    /// Central differences of `Objective::value` with step `h` per coordinate.
    CentralDiff { h: F },
}

/// Projected L-BFGS settings.
#[derive(Debug, Clone)]
pub struct LbfgsConfig<F> {
    pub memory: usize,
    pub max_iters: usize,
    /// Convergence tolerance on the sup-norm of the projected gradient.
    pub tol: F,
    /// Armijo (sufficient decrease) constant.
    pub c1: F,
    /// Curvature constant.
    pub c2: F,
    pub grad_mode: GradMode<F>,
}

impl<F: Real> Default for LbfgsConfig<F> {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iters: 200,
            tol: F::of(1e-8),
            c1: F::of(1e-4),
            c2: F::of(0.9),
            grad_mode: GradMode::Exact,
        }
    }
}

/// Outcome of a single local optimization run.
#[derive(Debug, Clone)]
pub struct OptimResult<F> {
    pub x: Vec<F>,
    pub value: F,
    pub iterations: usize,
    /// Underlying objective evaluations: one per `value` call, one per
    /// analytic `value_grad` call, `1 + 2 dim` per finite-difference gradient.
    pub n_evals: usize,
    pub converged: bool,
    /// Set when a line search failed and the run fell back or stopped early.
    pub degraded: bool,
}

fn project<F: Real>(x: &mut [F], bounds: &[(F, F)]) {
    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = (*xi).max(lo).min(hi);
    }
}

/// Evaluates value and gradient of the *negated* objective (minimization
/// form), honoring the gradient mode and counting evaluations.
fn eval_neg<F: Real, O: Objective<F> + ?Sized>(
    obj: &mut O,
    x: &[F],
    grad: &mut [F],
    mode: GradMode<F>,
    n_evals: &mut usize,
) -> Result<F> {
    match mode {
        GradMode::Exact => {
            let f = obj.value_grad(x, grad)?;
            *n_evals += 1;
            for g in grad.iter_mut() {
                *g = -*g;
            }
            Ok(-f)
        }
        GradMode::CentralDiff { h } => {
            let f = obj.value(x)?;
            *n_evals += 1;
            let mut xp = x.to_vec();
            for i in 0..x.len() {
                let xi = x[i];
                xp[i] = xi + h;
                let fp = obj.value(&xp)?;
                xp[i] = xi - h;
                let fm = obj.value(&xp)?;
                xp[i] = xi;
                *n_evals += 2;
                grad[i] = -(fp - fm) / (F::of(2.0) * h);
            }
            Ok(-f)
        }
    }
}

/// Maximizes `obj` over the box `bounds` starting from `x0` with projected
/// L-BFGS and a strong-Wolfe line search along the projected path.
pub fn maximize<F: Real, O: Objective<F> + ?Sized>(
    obj: &mut O,
    x0: &[F],
    bounds: &[(F, F)],
    config: &LbfgsConfig<F>,
) -> Result<OptimResult<F>> {
    let d = obj.dim();
    if x0.len() != d || bounds.len() != d {
        return Err(Error::ShapeMismatch {
            context: "maximize",
            expected: format!("{d} coordinates"),
            got: format!("x0 {} bounds {}", x0.len(), bounds.len()),
        });
    }
    for &(lo, hi) in bounds {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "invalid bounds [{lo}, {hi}]"
            )));
        }
    }
    let mode = config.grad_mode;
    let mut n_evals = 0usize;

    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let mut g = vec![F::zero(); d];
    let mut f = eval_neg(obj, &x, &mut g, mode, &mut n_evals)?;
    let mut degraded = false;

    // L-BFGS memory: newest pair last.
    let mut s_mem: Vec<Vec<F>> = Vec::new();
    let mut y_mem: Vec<Vec<F>> = Vec::new();
    let mut rho_mem: Vec<F> = Vec::new();

    let mut converged = false;
    let mut iterations = 0usize;
    let mut dir = vec![F::zero(); d];
    let mut alpha_buf = vec![F::zero(); 0];
    let mut stalled = 0usize;

    for iter in 0..config.max_iters {
        iterations = iter;
        // Projected-gradient convergence test (minimization form).
        let mut pg_max = F::zero();
        for i in 0..d {
            let stepped = (x[i] - g[i]).max(bounds[i].0).min(bounds[i].1);
            pg_max = pg_max.max((stepped - x[i]).abs());
        }
        if pg_max <= config.tol {
            converged = true;
            break;
        }

        // Two-loop recursion for dir = -H g.
        dir.copy_from_slice(&g);
        let k = s_mem.len();
        alpha_buf.resize(k, F::zero());
        for j in (0..k).rev() {
            let a = rho_mem[j] * dot(&s_mem[j], &dir);
            alpha_buf[j] = a;
            axpy(-a, &y_mem[j], &mut dir);
        }
        if k > 0 {
            let last = k - 1;
            let gamma = dot(&s_mem[last], &y_mem[last]) / dot(&y_mem[last], &y_mem[last]);
            for v in dir.iter_mut() {
                *v = *v * gamma;
            }
        }
        for j in 0..k {
            let b = rho_mem[j] * dot(&y_mem[j], &dir);
            axpy(alpha_buf[j] - b, &s_mem[j], &mut dir);
        }
        for v in dir.iter_mut() {
            *v = -*v;
        }
        // Freeze coordinates pinned at a bound and pointing outward.
        for i in 0..d {
            if (x[i] <= bounds[i].0 && dir[i] < F::zero())
                || (x[i] >= bounds[i].1 && dir[i] > F::zero())
            {
                dir[i] = F::zero();
            }
        }
        let mut dphi0 = dot(&g, &dir);
        if dphi0 >= F::zero() {
            // Not a descent direction: drop memory, use projected steepest
            // descent.
            s_mem.clear();
            y_mem.clear();
            rho_mem.clear();
            for i in 0..d {
                dir[i] = -g[i];
                if (x[i] <= bounds[i].0 && dir[i] < F::zero())
                    || (x[i] >= bounds[i].1 && dir[i] > F::zero())
                {
                    dir[i] = F::zero();
                }
            }
            dphi0 = dot(&g, &dir);
            if dphi0 >= F::zero() {
                converged = true;
                break;
            }
        }

        // Strong-Wolfe search along the projected path.
        let alpha0 = if s_mem.is_empty() {
            let g_norm = g.iter().fold(F::zero(), |m, &v| m.max(v.abs()));
            (F::one() / g_norm.max(F::one())).min(F::one())
        } else {
            F::one()
        };
        let search = wolfe_search(
            obj, &x, &dir, bounds, f, dphi0, alpha0, config, mode, &mut n_evals,
        )?;
        let (x_new, f_new, g_new) = match search {
            Some(t) => t,
            None => {
                // Armijo backtracking fallback.
                match armijo_search(
                    obj, &x, &dir, bounds, f, dphi0, config, mode, &mut n_evals,
                )? {
                    Some(t) => {
                        degraded = true;
                        t
                    }
                    None => {
                        degraded = true;
                        break;
                    }
                }
            }
        };

        // Curvature update.
        let s: Vec<F> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let yv: Vec<F> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > F::of(1e-10) {
            if s_mem.len() == config.memory {
                s_mem.remove(0);
                y_mem.remove(0);
                rho_mem.remove(0);
            }
            rho_mem.push(F::one() / sy);
            s_mem.push(s);
            y_mem.push(yv);
        }
        // Progress stall: MC acquisition surfaces have a gradient noise floor
        // below which line searches only churn; two consecutive no-progress
        // steps end the run.
        if (f - f_new).abs() <= F::of(1e-11) * (F::one() + f.abs()) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        iterations = iter + 1;
        if stalled >= 2 {
            let mut pg_max = F::zero();
            for i in 0..d {
                let stepped = (x[i] - g[i]).max(bounds[i].0).min(bounds[i].1);
                pg_max = pg_max.max((stepped - x[i]).abs());
            }
            converged = pg_max <= config.tol;
            break;
        }
    }

    Ok(OptimResult {
        x,
        value: -f,
        iterations,
        n_evals,
        converged,
        degraded,
    })
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn axpy<F: Real>(a: F, x: &[F], y: &mut [F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

/// Evaluates the minimization objective along the projected path
/// `alpha -> P(x + alpha dir)`, returning the point, value, gradient, and the
/// path derivative (gradient restricted to unclipped coordinates).
#[allow(clippy::too_many_arguments)]
fn eval_path<F: Real, O: Objective<F> + ?Sized>(
    obj: &mut O,
    x: &[F],
    dir: &[F],
    bounds: &[(F, F)],
    alpha: F,
    mode: GradMode<F>,
    n_evals: &mut usize,
) -> Result<(Vec<F>, F, Vec<F>, F)> {
    let d = x.len();
    let mut xa = vec![F::zero(); d];
    for i in 0..d {
        xa[i] = (x[i] + alpha * dir[i]).max(bounds[i].0).min(bounds[i].1);
    }
    let mut ga = vec![F::zero(); d];
    let fa = eval_neg(obj, &xa, &mut ga, mode, n_evals)?;
    let mut dphi = F::zero();
    for i in 0..d {
        let raw = x[i] + alpha * dir[i];
        if raw > bounds[i].0 && raw < bounds[i].1 {
            dphi = dphi + ga[i] * dir[i];
        }
    }
    Ok((xa, fa, ga, dphi))
}

type PathPoint<F> = (Vec<F>, F, Vec<F>);

/// Strong-Wolfe line search (bracket then zoom). Returns the accepted point
/// or `None` when no acceptable step was found.
#[allow(clippy::too_many_arguments)]
fn wolfe_search<F: Real, O: Objective<F> + ?Sized>(
    obj: &mut O,
    x: &[F],
    dir: &[F],
    bounds: &[(F, F)],
    phi0: F,
    dphi0: F,
    alpha0: F,
    config: &LbfgsConfig<F>,
    mode: GradMode<F>,
    n_evals: &mut usize,
) -> Result<Option<PathPoint<F>>> {
    let c1 = config.c1;
    let c2 = config.c2;
    let alpha_max = F::of(1e6);
    let mut alpha_prev = F::zero();
    let mut phi_prev = phi0;
    let mut alpha = alpha0;

    for i in 0..25 {
        let (xa, fa, ga, dphi_a) =
            eval_path(obj, x, dir, bounds, alpha, mode, n_evals)?;
        let bad = !fa.is_finite();
        if bad || fa > phi0 + c1 * alpha * dphi0 || (i > 0 && fa >= phi_prev) {
            return zoom(
                obj, x, dir, bounds, phi0, dphi0, alpha_prev, phi_prev, alpha, config,
                mode, n_evals,
            );
        }
        if dphi_a.abs() <= -c2 * dphi0 {
            return Ok(Some((xa, fa, ga)));
        }
        if dphi_a >= F::zero() {
            return zoom(
                obj, x, dir, bounds, phi0, dphi0, alpha, fa, alpha_prev, config, mode,
                n_evals,
            );
        }
        alpha_prev = alpha;
        phi_prev = fa;
        alpha = (alpha * F::of(2.0)).min(alpha_max);
        if alpha >= alpha_max {
            return Ok(Some((xa, fa, ga)));
        }
    }
    Ok(None)
}

/// Zoom phase: shrinks `[alpha_lo, alpha_hi]` by bisection until the strong
/// Wolfe conditions hold.
#[allow(clippy::too_many_arguments)]
fn zoom<F: Real, O: Objective<F> + ?Sized>(
    obj: &mut O,
    x: &[F],
    dir: &[F],
    bounds: &[(F, F)],
    phi0: F,
    dphi0: F,
    mut alpha_lo: F,
    mut phi_lo: F,
    mut alpha_hi: F,
    config: &LbfgsConfig<F>,
    mode: GradMode<F>,
    n_evals: &mut usize,
) -> Result<Option<PathPoint<F>>> {
    let c1 = config.c1;
    let c2 = config.c2;
    for _ in 0..30 {
        let alpha = (alpha_lo + alpha_hi) * F::of(0.5);
        let (xa, fa, ga, dphi_a) =
            eval_path(obj, x, dir, bounds, alpha, mode, n_evals)?;
        if !fa.is_finite() || fa > phi0 + c1 * alpha * dphi0 || fa >= phi_lo {
            alpha_hi = alpha;
        } else {
            if dphi_a.abs() <= -c2 * dphi0 {
                return Ok(Some((xa, fa, ga)));
            }
            if dphi_a * (alpha_hi - alpha_lo) >= F::zero() {
                alpha_hi = alpha_lo;
            }
            alpha_lo = alpha;
            phi_lo = fa;
        }
        if (alpha_hi - alpha_lo).abs() <= F::of(1e-14) {
            break;
        }
    }
    Ok(None)
}

/// Backtracking Armijo fallback used after a strong-Wolfe failure.
#[allow(clippy::too_many_arguments)]
fn armijo_search<F: Real, O: Objective<F> + ?Sized>(
    obj: &mut O,
    x: &[F],
    dir: &[F],
    bounds: &[(F, F)],
    phi0: F,
    dphi0: F,
    config: &LbfgsConfig<F>,
    mode: GradMode<F>,
    n_evals: &mut usize,
) -> Result<Option<PathPoint<F>>> {
    let mut alpha = F::one();
    for _ in 0..40 {
        let (xa, fa, ga, _) = eval_path(obj, x, dir, bounds, alpha, mode, n_evals)?;
        if fa.is_finite() && fa <= phi0 + config.c1 * alpha * dphi0 {
            return Ok(Some((xa, fa, ga)));
        }
        alpha = alpha * F::of(0.5);
    }
    Ok(None)
}

/// Multi-start options for acquisition maximization.
#[derive(Debug, Clone)]
pub struct MultistartOptions<F> {
    pub restarts: usize,
    pub raw_samples: usize,
    pub seed: u64,
    pub lbfgs: LbfgsConfig<F>,
}

impl<F: Real> Default for MultistartOptions<F> {
    fn default() -> Self {
        MultistartOptions {
            restarts: 20,
            raw_samples: 1024,
            seed: 0,
            lbfgs: LbfgsConfig::default(),
        }
    }
}

/// Scores `raw_samples` scrambled Sobol points and returns the `n_select`
/// best as starting points, ties broken by draw order.
pub fn generate_initial_conditions<F: Real, O: Objective<F> + ?Sized>(
    obj: &mut O,
    bounds: &[(F, F)],
    raw_samples: usize,
    n_select: usize,
    seed: u64,
) -> Result<Vec<Vec<F>>> {
    let d = obj.dim();
    if bounds.len() != d {
        return Err(Error::ShapeMismatch {
            context: "generate_initial_conditions",
            expected: format!("{d} bounds"),
            got: format!("{}", bounds.len()),
        });
    }
    let unit = sobol::<F>(raw_samples, d, derive_seed(seed, 0x49435f49))?; // "IC_I"
    let mut scored: Vec<(usize, F, Vec<F>)> = Vec::with_capacity(raw_samples);
    for (idx, u) in unit.into_iter().enumerate() {
        let x: Vec<F> = u
            .into_iter()
            .zip(bounds)
            .map(|(t, &(lo, hi))| lo + t * (hi - lo))
            .collect();
        let v = obj.value(&x)?;
        scored.push((idx, v, x));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .take(n_select)
        .map(|(_, _, x)| x)
        .collect())
}

/// Best local optimum over multi-started projected L-BFGS runs.
#[derive(Debug, Clone)]
pub struct MultistartResult<F> {
    pub x: Vec<F>,
    pub value: F,
    pub n_evals: usize,
    /// True when any accepted run reported a degraded line search.
    pub any_degraded: bool,
}

/// Maximizes `obj` from the best `restarts` of `raw_samples` Sobol starts.
pub fn maximize_multistart<F: Real, O: Objective<F> + ?Sized>(
    obj: &mut O,
    bounds: &[(F, F)],
    opts: &MultistartOptions<F>,
) -> Result<MultistartResult<F>> {
    let starts =
        generate_initial_conditions(obj, bounds, opts.raw_samples, opts.restarts, opts.seed)?;
    let mut n_evals = opts.raw_samples;
    let mut best: Option<(Vec<F>, F)> = None;
    let mut any_degraded = false;
    for x0 in &starts {
        let run = maximize(obj, x0, bounds, &opts.lbfgs)?;
        n_evals += run.n_evals;
        any_degraded |= run.degraded;
        let better = match &best {
            None => true,
            Some((_, v)) => run.value > *v,
        };
        if better {
            best = Some((run.x, run.value));
        }
    }
    let (x, value) = best.ok_or_else(|| {
        Error::InvalidArgument("maximize_multistart needs restarts >= 1".into())
    })?;
    Ok(MultistartResult {
        x,
        value,
        n_evals,
        any_degraded,
    })
}

/// A family of single-candidate acquisition objectives parameterized by the
/// set of already-selected (pending) batch members.
pub trait AcqFamily<F: Real> {
    /// Dimension of one candidate point.
    fn dim(&self) -> usize;
    /// Builds the objective for the next slot given the pending candidates.
    fn build<'a>(&'a mut self, pending: &[Vec<F>]) -> Result<Box<dyn Objective<F> + 'a>>;
}

/// One selected batch candidate with its conditional acquisition value.
#[derive(Debug, Clone)]
pub struct GreedySlot<F> {
    pub x: Vec<F>,
    pub value: F,
}

/// Selects a batch of `q` candidates by sequential greedy maximization:
/// slot `i` maximizes the acquisition conditioned on slots `0..i` pending.
pub fn optimize_sequential_greedy<F: Real>(
    family: &mut dyn AcqFamily<F>,
    q: usize,
    bounds: &[(F, F)],
    opts: &MultistartOptions<F>,
) -> Result<Vec<GreedySlot<F>>> {
    let mut slots: Vec<GreedySlot<F>> = Vec::with_capacity(q);
    for slot in 0..q {
        let pending: Vec<Vec<F>> = slots.iter().map(|s| s.x.clone()).collect();
        let mut obj = family.build(&pending)?;
        let mut slot_opts = opts.clone();
        slot_opts.seed = derive_seed(opts.seed, 0x534c4f54 ^ slot as u64); // "SLOT"
        let res = maximize_multistart(obj.as_mut(), bounds, &slot_opts)?;
        slots.push(GreedySlot {
            x: res.x,
            value: res.value,
        });
    }
    Ok(slots)
}
