//! Benchmark problem suite for multi-objective Bayesian optimization.
//!
//! Each problem is packaged as a [`ProblemSpec`]: native box bounds, a
//! maximization-convention evaluator (objectives are negated internally so
//! larger is better everywhere in the engine), non-negative-is-feasible
//! constraint slacks, a reference point in the engine convention, and, where
//! known, the hypervolume of the true Pareto front for regret reporting.
//! Problems are also reachable by registry name for configuration files and
//! the command line.

use crate::error::{Error, Result};
use crate::sampling::sobol;
use crate::scalar::Real;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Evaluator closure: fills objective values (maximization convention) and
/// constraint slacks for a point given in native coordinates.
type EvalFn<F> = Box<dyn FnMut(&[F], &mut Vec<F>, &mut Vec<F>) + Send>;

/// A benchmark problem with bounds, evaluator, and reference point.
pub struct ProblemSpec<F: Real> {
    name: String,
    bounds: Vec<(F, F)>,
    n_objectives: usize,
    n_constraints: usize,
    ref_point: Vec<F>,
    true_front_hv: Option<F>,
    eval: EvalFn<F>,
    n_evals: u64,
}

impl<F: Real> std::fmt::Debug for ProblemSpec<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("dim", &self.bounds.len())
            .field("n_objectives", &self.n_objectives)
            .field("n_constraints", &self.n_constraints)
            .finish()
    }
}

impl<F: Real> ProblemSpec<F> {
    /// Problem name as registered.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Input dimension.
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Number of objectives.
    pub fn n_objectives(&self) -> usize {
        self.n_objectives
    }

    /// Number of constraints.
    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }

    /// Native box bounds, one `(lower, upper)` pair per input dimension.
    pub fn bounds(&self) -> &[(F, F)] {
        &self.bounds
    }

    /// Reference point in the engine (maximization) convention.
    pub fn ref_point(&self) -> &[F] {
        &self.ref_point
    }

    /// Hypervolume of the true Pareto front at [`Self::ref_point`], if known.
    pub fn true_front_hv(&self) -> Option<F> {
        self.true_front_hv
    }

    /// Number of evaluations performed so far.
    pub fn n_evals(&self) -> u64 {
        self.n_evals
    }

    /// Evaluates a point in native coordinates, returning maximization-space
    /// objectives and constraint slacks (non-negative means feasible).
    pub fn evaluate(&mut self, x: &[F]) -> Result<(Vec<F>, Vec<F>)> {
        if x.len() != self.bounds.len() {
            return Err(Error::ShapeMismatch {
                context: "problem evaluation",
                expected: format!("{} coordinates", self.bounds.len()),
                got: format!("{}", x.len()),
            });
        }
        let tol = F::from(1e-9).unwrap();
        for (v, &(lo, hi)) in x.iter().zip(&self.bounds) {
            if !v.is_finite() || *v < lo - tol || *v > hi + tol {
                return Err(Error::InvalidArgument(format!(
                    "point outside problem bounds: {:?} not in [{:?}, {:?}]",
                    v.to_f64(),
                    lo.to_f64(),
                    hi.to_f64()
                )));
            }
        }
        let mut obj = Vec::with_capacity(self.n_objectives);
        let mut con = Vec::with_capacity(self.n_constraints);
        (self.eval)(x, &mut obj, &mut con);
        self.n_evals += 1;
        Ok((obj, con))
    }

    /// Evaluates a point given in unit-cube coordinates.
    pub fn evaluate_unit(&mut self, u: &[F]) -> Result<(Vec<F>, Vec<F>)> {
        let x = self.from_unit(u)?;
        self.evaluate(&x)
    }

    /// Maps unit-cube coordinates to native bounds.
    pub fn from_unit(&self, u: &[F]) -> Result<Vec<F>> {
        if u.len() != self.bounds.len() {
            return Err(Error::ShapeMismatch {
                context: "unit-cube mapping",
                expected: format!("{} coordinates", self.bounds.len()),
                got: format!("{}", u.len()),
            });
        }
        Ok(u.iter()
            .zip(&self.bounds)
            .map(|(&t, &(lo, hi))| lo + (hi - lo) * t)
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Closed-form objective functions (native minimization convention).
// ---------------------------------------------------------------------------

/// Branin function evaluated at already-rescaled coordinates.
pub fn branin<F: Real>(x1: F, x2: F) -> F {
    let pi = F::from(std::f64::consts::PI).unwrap();
    let a = F::one();
    let b = F::from(5.1).unwrap() / (F::from(4.0).unwrap() * pi * pi);
    let c = F::from(5.0).unwrap() / pi;
    let r = F::from(6.0).unwrap();
    let s = F::from(10.0).unwrap();
    let t = F::one() / (F::from(8.0).unwrap() * pi);
    let inner = x2 - b * x1 * x1 + c * x1 - r;
    a * inner * inner + s * (F::one() - t) * x1.cos() + s
}

/// Currin exponential function on the unit square.
pub fn currin<F: Real>(x1: F, x2: F) -> F {
    let one = F::one();
    let factor = if x2 == F::zero() {
        // Limit of 1 - exp(-1/(2 x2)) as x2 -> 0 from above.
        one
    } else {
        one - (-one / (F::from(2.0).unwrap() * x2)).exp()
    };
    let num = F::from(2300.0).unwrap() * x1 * x1 * x1
        + F::from(1900.0).unwrap() * x1 * x1
        + F::from(2092.0).unwrap() * x1
        + F::from(60.0).unwrap();
    let den = F::from(100.0).unwrap() * x1 * x1 * x1
        + F::from(500.0).unwrap() * x1 * x1
        + F::from(4.0).unwrap() * x1
        + F::from(20.0).unwrap();
    factor * num / den
}

/// Branin and Currin objectives on the unit square (minimization values).
pub fn branin_currin<F: Real>(x1: F, x2: F) -> (F, F) {
    let x1p = F::from(15.0).unwrap() * x1 - F::from(5.0).unwrap();
    let x2p = F::from(15.0).unwrap() * x2;
    (branin(x1p, x2p), currin(x1, x2))
}

/// Disk constraint slack for the constrained Branin-Currin problem:
/// non-negative when the rescaled point lies inside the disk.
pub fn branin_currin_disk<F: Real>(x1: F, x2: F) -> F {
    let x1p = F::from(15.0).unwrap() * x1 - F::from(5.0).unwrap();
    let x2p = F::from(15.0).unwrap() * x2;
    let dx = x1p - F::from(2.5).unwrap();
    let dy = x2p - F::from(7.5).unwrap();
    F::from(50.0).unwrap() - dx * dx - dy * dy
}

/// DTLZ2 objectives (minimization values) for `m` objectives.
pub fn dtlz2<F: Real>(x: &[F], m: usize) -> Vec<F> {
    let d = x.len();
    assert!(m >= 2 && d >= m, "dtlz2 requires d >= m >= 2");
    let half = F::from(0.5).unwrap();
    let pi_half = F::from(std::f64::consts::FRAC_PI_2).unwrap();
    let mut g = F::zero();
    for &xi in &x[m - 1..] {
        let dxi = xi - half;
        g = g + dxi * dxi;
    }
    let scale = F::one() + g;
    let mut f = vec![scale; m];
    for i in 0..m {
        // f_i = (1+g) * prod_{j < m-1-i} cos(pi/2 x_j) * [sin(pi/2 x_{m-1-i}) if i > 0]
        for &xj in x.iter().take(m - 1 - i) {
            f[i] = f[i] * (pi_half * xj).cos();
        }
        if i > 0 {
            f[i] = f[i] * (pi_half * x[m - 1 - i]).sin();
        }
    }
    f
}

/// C2 constraint slack for DTLZ2-style fronts: non-negative when the
/// objective vector lies within distance `r` of a front corner or its center.
pub fn c2_constraint<F: Real>(f: &[F], r: F) -> F {
    let m = f.len();
    let r2 = r * r;
    let mut best = F::infinity();
    for i in 0..m {
        let mut v = -r2;
        for (j, &fj) in f.iter().enumerate() {
            let term = if j == i { fj - F::one() } else { fj };
            v = v + term * term;
        }
        best = best.min(v);
    }
    let inv_sqrt_m = F::one() / F::from(m as f64).unwrap().sqrt();
    let mut center = -r2;
    for &fj in f {
        let term = fj - inv_sqrt_m;
        center = center + term * term;
    }
    best = best.min(center);
    -best
}

/// Vehicle crash safety objectives (minimization values) on `[1, 3]^5`.
pub fn vehicle_safety<F: Real>(x: &[F]) -> (F, F, F) {
    assert_eq!(x.len(), 5, "vehicle safety is five-dimensional");
    let c = |v: f64| F::from(v).unwrap();
    let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
    let f1 = c(1640.2823)
        + c(2.3573285) * x1
        + c(2.3220035) * x2
        + c(4.5688768) * x3
        + c(7.7213633) * x4
        + c(4.4559504) * x5;
    let f2 = c(6.5856)
        + c(1.15) * x1
        - c(1.0427) * x2
        + c(0.9738) * x3
        + c(0.8364) * x4
        - c(0.3695) * x1 * x4
        + c(0.0861) * x1 * x5
        + c(0.3628) * x2 * x4
        - c(0.1106) * x1 * x1
        - c(0.3437) * x3 * x3
        + c(0.1764) * x4 * x4;
    let f3 = c(-0.0551)
        + c(0.0181) * x1
        + c(0.1024) * x2
        + c(0.0421) * x3
        - c(0.0073) * x1 * x2
        + c(0.024) * x2 * x3
        - c(0.0118) * x2 * x4
        - c(0.0204) * x3 * x4
        - c(0.008) * x3 * x5
        - c(0.0241) * x2 * x2
        + c(0.0109) * x4 * x4;
    (f1, f2, f3)
}

// ---------------------------------------------------------------------------
// Problem constructors.
// ---------------------------------------------------------------------------

fn negate<F: Real>(vals: &mut Vec<F>) {
    for v in vals.iter_mut() {
        *v = -*v;
    }
}

/// Unconstrained Branin-Currin on the unit square.
pub fn branin_currin_spec<F: Real>() -> ProblemSpec<F> {
    let fix = fixture_hv("branin-currin");
    ProblemSpec {
        name: "branin-currin".into(),
        bounds: vec![(F::zero(), F::one()); 2],
        n_objectives: 2,
        n_constraints: 0,
        ref_point: vec![F::from(-18.0).unwrap(), F::from(-6.0).unwrap()],
        true_front_hv: fix.map(|v| F::from(v).unwrap()),
        eval: Box::new(|x, obj, _con| {
            let (f1, f2) = branin_currin(x[0], x[1]);
            obj.clear();
            obj.push(f1);
            obj.push(f2);
            negate(obj);
        }),
        n_evals: 0,
    }
}

/// Branin-Currin restricted to a disk in the rescaled input space.
pub fn constrained_branin_currin_spec<F: Real>() -> ProblemSpec<F> {
    let fix = fixture_hv("constrained-branin-currin");
    ProblemSpec {
        name: "constrained-branin-currin".into(),
        bounds: vec![(F::zero(), F::one()); 2],
        n_objectives: 2,
        n_constraints: 1,
        ref_point: vec![F::from(-90.0).unwrap(), F::from(-10.0).unwrap()],
        true_front_hv: fix.map(|v| F::from(v).unwrap()),
        eval: Box::new(|x, obj, con| {
            let (f1, f2) = branin_currin(x[0], x[1]);
            obj.clear();
            obj.push(f1);
            obj.push(f2);
            negate(obj);
            con.clear();
            con.push(branin_currin_disk(x[0], x[1]));
        }),
        n_evals: 0,
    }
}

/// DTLZ2 with `d` inputs and `m` objectives on the unit hypercube.
pub fn dtlz2_spec<F: Real>(d: usize, m: usize) -> Result<ProblemSpec<F>> {
    if m < 2 || d < m {
        return Err(Error::InvalidArgument(format!(
            "dtlz2 requires d >= m >= 2, got d={d}, m={m}"
        )));
    }
    let ref_val = F::from(-1.1).unwrap();
    Ok(ProblemSpec {
        name: if d == 6 && m == 2 {
            "dtlz2".into()
        } else {
            format!("dtlz2-d{d}-m{m}")
        },
        bounds: vec![(F::zero(), F::one()); d],
        n_objectives: m,
        n_constraints: 0,
        ref_point: vec![ref_val; m],
        true_front_hv: Some(F::from(dtlz2_true_hv(m)).unwrap()),
        eval: Box::new(move |x, obj, _con| {
            *obj = dtlz2(x, m);
            negate(obj);
        }),
        n_evals: 0,
    })
}

/// Hypervolume of the DTLZ2 front (unit sphere octant) against the
/// all-1.1 reference point, via the closed-form orthant ball volume.
pub fn dtlz2_true_hv(m: usize) -> f64 {
    let cube = 1.1f64.powi(m as i32);
    // Volume of the unit m-ball restricted to the positive orthant.
    let ball = std::f64::consts::PI.powf(m as f64 / 2.0)
        / statrs::function::gamma::gamma(m as f64 / 2.0 + 1.0)
        / 2f64.powi(m as i32);
    cube - ball
}

/// C2-DTLZ2 with 12 inputs, two objectives, and one constraint.
pub fn c2_dtlz2_spec<F: Real>() -> ProblemSpec<F> {
    let m = 2usize;
    let r = F::from(C2_DTLZ2_RADIUS).unwrap();
    let fix = fixture_hv("c2-dtlz2");
    ProblemSpec {
        name: "c2-dtlz2".into(),
        bounds: vec![(F::zero(), F::one()); 12],
        n_objectives: m,
        n_constraints: 1,
        ref_point: vec![F::from(-1.1).unwrap(); m],
        true_front_hv: fix.map(|v| F::from(v).unwrap()),
        eval: Box::new(move |x, obj, con| {
            let f = dtlz2(x, m);
            con.clear();
            con.push(c2_constraint(&f, r));
            *obj = f;
            negate(obj);
        }),
        n_evals: 0,
    }
}

/// Constraint radius for C2-DTLZ2.
pub const C2_DTLZ2_RADIUS: f64 = 0.2;

/// Vehicle crash safety problem on `[1, 3]^5`.
pub fn vehicle_safety_spec<F: Real>() -> ProblemSpec<F> {
    let fix = fixture_hv("vehicle-safety");
    ProblemSpec {
        name: "vehicle-safety".into(),
        bounds: vec![(F::one(), F::from(3.0).unwrap()); 5],
        n_objectives: 3,
        n_constraints: 0,
        ref_point: vec![
            F::from(-1864.72022).unwrap(),
            F::from(-11.81993945).unwrap(),
            F::from(-0.2903999384).unwrap(),
        ],
        true_front_hv: fix.map(|v| F::from(v).unwrap()),
        eval: Box::new(|x, obj, _con| {
            let (f1, f2, f3) = vehicle_safety(x);
            obj.clear();
            obj.push(f1);
            obj.push(f2);
            obj.push(f3);
            negate(obj);
        }),
        n_evals: 0,
    }
}

/// Looks up a problem by registry name.
pub fn problem_by_name<F: Real>(name: &str) -> Result<ProblemSpec<F>> {
    match name {
        "branin-currin" => Ok(branin_currin_spec()),
        "constrained-branin-currin" => Ok(constrained_branin_currin_spec()),
        "dtlz2" => dtlz2_spec(6, 2),
        "c2-dtlz2" => Ok(c2_dtlz2_spec()),
        "vehicle-safety" => Ok(vehicle_safety_spec()),
        other => Err(Error::UnknownProblem(other.into())),
    }
}

/// Names accepted by [`problem_by_name`].
pub const PROBLEM_NAMES: &[&str] = &[
    "branin-currin",
    "constrained-branin-currin",
    "dtlz2",
    "c2-dtlz2",
    "vehicle-safety",
];

// ---------------------------------------------------------------------------
// Observation noise wrapper.
// ---------------------------------------------------------------------------

/// Wraps a problem so each objective observation receives i.i.d. Gaussian
/// noise with standard deviation `relative_sd` times that objective's range,
/// estimated from 2^14 scrambled Sobol evaluations. Constraint slacks are
/// left noiseless and the underlying problem metadata is preserved.
pub fn with_noise<F: Real>(
    mut spec: ProblemSpec<F>,
    relative_sd: f64,
    seed: u64,
) -> Result<ProblemSpec<F>> {
    if !(relative_sd >= 0.0 && relative_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "relative_sd must be finite and non-negative, got {relative_sd}"
        )));
    }
    let d = spec.dim();
    let m = spec.n_objectives();
    let n = 1usize << 14;
    let pts: Vec<Vec<F>> = sobol(n, d, seed ^ 0x4e4f_4953)?;
    let mut lo = vec![F::infinity(); m];
    let mut hi = vec![F::neg_infinity(); m];
    for u in &pts {
        let (obj, _) = spec.evaluate_unit(u)?;
        for k in 0..m {
            lo[k] = lo[k].min(obj[k]);
            hi[k] = hi[k].max(obj[k]);
        }
    }
    let sds: Vec<F> = (0..m)
        .map(|k| (hi[k] - lo[k]) * F::from(relative_sd).unwrap())
        .collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let ProblemSpec {
        name,
        bounds,
        n_objectives,
        n_constraints,
        ref_point,
        true_front_hv,
        mut eval,
        ..
    } = spec;
    Ok(ProblemSpec {
        name,
        bounds,
        n_objectives,
        n_constraints,
        ref_point,
        true_front_hv,
        eval: Box::new(move |x, obj, con| {
            eval(x, obj, con);
            for (v, &sd) in obj.iter_mut().zip(&sds) {
                let z = F::from(standard_normal(&mut rng)).unwrap();
                *v = *v + sd * z;
            }
        }),
        n_evals: 0,
    })
}

/// Standard normal draw via Box-Muller.
fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ---------------------------------------------------------------------------
// True-front fixtures.
// ---------------------------------------------------------------------------

/// Parses a front fixture: `# key: value` header lines followed by one
/// comma-separated objective vector per line (engine convention).
pub fn parse_front_fixture(text: &str) -> Result<(Vec<Vec<f64>>, f64)> {
    let mut hv = None;
    let mut points = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once(':') {
                if key.trim() == "hv" {
                    hv = Some(value.trim().parse::<f64>().map_err(|e| Error::Parse {
                        context: "front fixture hv header".into(),
                        detail: e.to_string(),
                    })?);
                }
            }
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        points.push(row.map_err(|e| Error::Parse {
            context: "front fixture row".into(),
            detail: e.to_string(),
        })?);
    }
    let hv = hv.ok_or_else(|| Error::Parse {
        context: "front fixture".into(),
        detail: "missing hv header".into(),
    })?;
    Ok((points, hv))
}

/// Returns the embedded front fixture for a problem name, if one exists.
pub fn front_fixture(name: &str) -> Option<&'static str> {
    match name {
        "branin-currin" => Some(include_str!("../data/fronts/branin_currin.csv")),
        "constrained-branin-currin" => {
            Some(include_str!("../data/fronts/constrained_branin_currin.csv"))
        }
        "c2-dtlz2" => Some(include_str!("../data/fronts/c2_dtlz2.csv")),
        "vehicle-safety" => Some(include_str!("../data/fronts/vehicle_safety.csv")),
        _ => None,
    }
}

fn fixture_hv(name: &str) -> Option<f64> {
    let text = front_fixture(name)?;
    parse_front_fixture(text).ok().map(|(_, hv)| hv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pareto::{hypervolume, pareto_filter_indices};

    #[test]
    fn currin_frozen_value_at_documented_point() {
        // f2(0, 0.5) = (1 - e^{-1}) * 60/20.
        let v: f64 = currin(0.0, 0.5);
        assert!((v - 1.896362).abs() < 1e-6, "v = {v}");
    }

    #[test]
    fn currin_x2_zero_uses_limit() {
        let v: f64 = currin(0.3, 0.0);
        assert!(v.is_finite());
        // factor -> 1 as x2 -> 0+; compare against a tiny positive x2.
        let v_eps: f64 = currin(0.3, 1e-12);
        assert!((v - v_eps).abs() < 1e-6);
    }

    #[test]
    fn branin_currin_engine_values_are_negated() {
        let mut p = branin_currin_spec::<f64>();
        let (obj, con) = p.evaluate(&[0.0, 0.5]).unwrap();
        assert!(con.is_empty());
        let (f1, f2) = branin_currin(0.0f64, 0.5);
        assert!((obj[0] + f1).abs() < 1e-12);
        assert!((obj[1] + f2).abs() < 1e-12);
    }

    #[test]
    fn disk_slack_is_fifty_at_disk_center() {
        // Rescaled center (2.5, 7.5) corresponds to x = (0.5, 0.5).
        let s: f64 = branin_currin_disk(0.5, 0.5);
        assert!((s - 50.0).abs() < 1e-12);
        // Far corner is infeasible.
        let s: f64 = branin_currin_disk(1.0, 1.0);
        assert!(s < 0.0);
    }

    #[test]
    fn dtlz2_on_sphere_when_distance_term_vanishes() {
        // x_i = 0.5 for i >= m-1 makes g = 0, so the objective vector has
        // unit norm for any position coordinates.
        for m in 2..=4 {
            let mut x = vec![0.5; 7];
            let firsts = [0.3, 0.9, 0.1];
            x[..m - 1].copy_from_slice(&firsts[..m - 1]);
            let f: Vec<f64> = dtlz2(&x[..7], m);
            let norm: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "m={m} norm={norm}");
            assert!(f.iter().all(|&v| v >= -1e-15));
        }
    }

    #[test]
    fn dtlz2_true_hv_matches_closed_form_and_mc() {
        let hv2 = dtlz2_true_hv(2);
        assert!((hv2 - (1.21 - std::f64::consts::FRAC_PI_4)).abs() < 1e-12);
        // MC cross-check: fraction of [0,1.1]^2 dominated by the quarter
        // circle, i.e. outside the unit disk after clamping.
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let n = 400_000;
        let mut hit = 0usize;
        for _ in 0..n {
            let a: f64 = rng.gen_range(0.0..1.1);
            let b: f64 = rng.gen_range(0.0..1.1);
            // Dominated iff some front point (cos t, sin t) has both
            // coordinates <= the sample: equivalent to a^2 + b^2 >= 1 when
            // both are in [0, 1], or either exceeds 1... handled by the
            // nearest-point test below.
            let ca = a.min(1.0);
            let cb = b.min(1.0);
            if ca * ca + cb * cb >= 1.0 {
                hit += 1;
            }
        }
        let mc = 1.21 * hit as f64 / n as f64;
        let se = 1.21 * (0.35 / (n as f64).sqrt());
        assert!(
            (mc - hv2).abs() < 4.0 * se + 1e-3,
            "mc = {mc}, closed form = {hv2}"
        );
    }

    #[test]
    fn c2_constraint_matches_geometry() {
        // On the M=2 sphere, the corner (1, 0) is feasible with slack r^2.
        let r = 0.2f64;
        let s = c2_constraint(&[1.0, 0.0], r);
        assert!((s - r * r).abs() < 1e-12);
        // The center point (1/sqrt(2), 1/sqrt(2)) is feasible.
        let c = 1.0 / 2f64.sqrt();
        assert!(c2_constraint(&[c, c], r) > 0.0);
        // A point 45 degrees off both corners and away from center fails.
        let t = std::f64::consts::FRAC_PI_8;
        assert!(c2_constraint(&[t.cos(), t.sin()], r) < 0.0);
    }

    #[test]
    fn c2_dtlz2_spec_reports_constraint() {
        let mut p = c2_dtlz2_spec::<f64>();
        assert_eq!(p.dim(), 12);
        assert_eq!(p.n_objectives(), 2);
        assert_eq!(p.n_constraints(), 1);
        // g = 0 point on the corner arc: x1 = 0 gives f = (1, 0), feasible.
        let mut x = vec![0.5; 12];
        x[0] = 0.0;
        let (obj, con) = p.evaluate(&x).unwrap();
        assert!((obj[0] + 1.0).abs() < 1e-12);
        assert!(obj[1].abs() < 1e-12);
        assert!(con[0] > 0.0);
        // The g = 0 point halfway between the corner and center balls is
        // infeasible; the one at the sphere center (x1 = 0.5) is feasible.
        x[0] = 0.25;
        let (_, con) = p.evaluate(&x).unwrap();
        assert!(con[0] < 0.0);
        x[0] = 0.5;
        let (_, con) = p.evaluate(&x).unwrap();
        assert!(con[0] > 0.0);
    }

    #[test]
    fn vehicle_safety_frozen_value_and_affine_mass() {
        let x = [1.0f64; 5];
        let (f1, _, _) = vehicle_safety(&x);
        assert!((f1 - 1661.707823).abs() < 1e-6, "f1 = {f1}");
        // Mass is affine: evaluating at the midpoint of two points matches
        // the average of the endpoint values.
        let a = [1.0, 2.0, 1.5, 3.0, 2.5];
        let b = [3.0, 1.0, 2.5, 1.0, 1.5];
        let mid: Vec<f64> = a.iter().zip(&b).map(|(u, v)| (u + v) / 2.0).collect();
        let (fa, _, _) = vehicle_safety(&a);
        let (fb, _, _) = vehicle_safety(&b);
        let (fm, _, _) = vehicle_safety(&mid);
        assert!((fm - (fa + fb) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn registry_finds_all_problems() {
        for name in PROBLEM_NAMES {
            let p = problem_by_name::<f64>(name).unwrap();
            assert_eq!(p.name(), *name);
        }
        assert!(problem_by_name::<f64>("nope").is_err());
    }

    #[test]
    fn all_problems_finite_and_reference_dominated() {
        for name in PROBLEM_NAMES {
            let mut p = problem_by_name::<f64>(name).unwrap();
            let d = p.dim();
            let n = 10_000;
            let pts: Vec<Vec<f64>> = sobol(n, d, 4242).unwrap();
            let mut any_dominates = false;
            for u in &pts {
                let (obj, con) = p.evaluate_unit(u).unwrap();
                assert_eq!(obj.len(), p.n_objectives());
                assert_eq!(con.len(), p.n_constraints());
                assert!(obj.iter().chain(con.iter()).all(|v| v.is_finite()));
                if obj.iter().zip(p.ref_point()).all(|(o, r)| o > r) {
                    any_dominates = true;
                }
            }
            assert!(any_dominates, "{name}: no sample dominates the reference");
            assert_eq!(p.n_evals(), n as u64);
        }
    }

    #[test]
    fn out_of_bounds_and_wrong_dimension_rejected() {
        let mut p = branin_currin_spec::<f64>();
        assert!(p.evaluate(&[0.5]).is_err());
        assert!(p.evaluate(&[1.5, 0.5]).is_err());
        assert!(p.evaluate(&[f64::NAN, 0.5]).is_err());
        let mut v = vehicle_safety_spec::<f64>();
        assert!(v.evaluate(&[0.5; 5]).is_err()); // below native lower bound 1
        assert!(v.evaluate(&[1.5; 5]).is_ok());
    }

    #[test]
    fn noise_wrapper_matches_requested_scale() {
        let base = branin_currin_spec::<f64>();
        let rel = 0.05;
        let mut noisy = with_noise(base, rel, 99).unwrap();
        let mut clean = branin_currin_spec::<f64>();
        let n = 10_000;
        let x = [0.4, 0.6];
        let (mu, _) = clean.evaluate(&x).unwrap();
        let mut sum = vec![0.0f64; 2];
        let mut sumsq = vec![0.0f64; 2];
        for _ in 0..n {
            let (obj, _) = noisy.evaluate(&x).unwrap();
            for k in 0..2 {
                sum[k] += obj[k] - mu[k];
                sumsq[k] += (obj[k] - mu[k]).powi(2);
            }
        }
        // Empirical sd within 10% of relative_sd * range for each objective.
        // Ranges from a clean 2^14 Sobol scan of the same problem.
        let m = 1usize << 14;
        let pts: Vec<Vec<f64>> = sobol(m, 2, 99 ^ 0x4e4f_4953).unwrap();
        for k in 0..2 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for u in &pts {
                let (obj, _) = clean.evaluate_unit(u).unwrap();
                lo = lo.min(obj[k]);
                hi = hi.max(obj[k]);
            }
            let target = rel * (hi - lo);
            let sd = (sumsq[k] / n as f64 - (sum[k] / n as f64).powi(2)).sqrt();
            assert!(
                (sd - target).abs() < 0.1 * target,
                "objective {k}: sd = {sd}, target = {target}"
            );
        }
    }

    #[test]
    fn zero_noise_is_identity_and_seeds_reproduce() {
        let mut a = with_noise(branin_currin_spec::<f64>(), 0.0, 1).unwrap();
        let mut clean = branin_currin_spec::<f64>();
        let x = [0.25, 0.75];
        assert_eq!(a.evaluate(&x).unwrap().0, clean.evaluate(&x).unwrap().0);

        let mut b1 = with_noise(branin_currin_spec::<f64>(), 0.1, 7).unwrap();
        let mut b2 = with_noise(branin_currin_spec::<f64>(), 0.1, 7).unwrap();
        let mut b3 = with_noise(branin_currin_spec::<f64>(), 0.1, 8).unwrap();
        let v1 = b1.evaluate(&x).unwrap().0;
        let v2 = b2.evaluate(&x).unwrap().0;
        let v3 = b3.evaluate(&x).unwrap().0;
        assert_eq!(v1, v2);
        assert_ne!(v1, v3);
    }

    #[test]
    fn fixtures_parse_and_match_reported_hypervolume() {
        for name in ["branin-currin", "constrained-branin-currin", "c2-dtlz2"] {
            let text = front_fixture(name).unwrap();
            let (points, hv) = parse_front_fixture(text).unwrap();
            assert!(!points.is_empty(), "{name}: empty fixture");
            let p = problem_by_name::<f64>(name).unwrap();
            // Stored points are mutually non-dominated and dominate the
            // reference point.
            let keep = pareto_filter_indices(&points);
            assert_eq!(keep.len(), points.len(), "{name}: dominated rows");
            for pt in &points {
                assert!(pt.iter().zip(p.ref_point()).all(|(v, r)| v > r), "{name}");
            }
            // Two-objective fronts are stored in full, so their hypervolume
            // must reproduce the header value.
            let recomputed = hypervolume(&points, p.ref_point());
            assert!(
                (recomputed - hv).abs() <= 1e-9 * hv.abs().max(1.0),
                "{name}: fixture hv {hv} vs recomputed {recomputed}"
            );
            assert_eq!(p.true_front_hv(), Some(hv));
        }
        // The three-objective vehicle front is thinned for storage; its
        // stored points must still be non-dominated and its header value at
        // least the hypervolume of the stored subset.
        let (points, hv) = parse_front_fixture(front_fixture("vehicle-safety").unwrap()).unwrap();
        let keep = pareto_filter_indices(&points);
        assert_eq!(keep.len(), points.len());
        let p = problem_by_name::<f64>("vehicle-safety").unwrap();
        let sub = hypervolume(&points, p.ref_point());
        assert!(sub <= hv * (1.0 + 1e-9) && sub > 0.9 * hv, "sub={sub} hv={hv}");
    }
}
