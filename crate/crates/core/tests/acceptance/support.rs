//! Shared oracles and generators for the acceptance criteria.

use mobo::gp::{Dataset, FitConfig, GpModel};
use mobo::linalg::Matrix;
use mobo::pareto::{pareto_filter_indices, ParetoFront};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Prints the single pass/fail line for a criterion and asserts it.
pub fn criterion(name: &str, pass: bool, detail: &str) {
    println!("{name} {}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Random non-dominated front of at most `max_p` points in `[lo, hi]^m`,
/// paired with a reference point just below `lo`.
pub fn random_front(
    rng: &mut ChaCha12Rng,
    m: usize,
    max_p: usize,
) -> (ParetoFront<f64>, Vec<f64>) {
    let ref_point = vec![0.0; m];
    let raw: Vec<Vec<f64>> = (0..max_p)
        .map(|_| (0..m).map(|_| rng.gen_range(0.2..3.0)).collect())
        .collect();
    let keep = pareto_filter_indices(&raw);
    let pts: Vec<Vec<f64>> = keep.into_iter().map(|k| raw[k].clone()).collect();
    (ParetoFront::new(&pts, &ref_point), ref_point)
}

/// Random candidate batch overlapping the front region.
pub fn random_batch(rng: &mut ChaCha12Rng, m: usize, q: usize) -> Vec<Vec<f64>> {
    (0..q)
        .map(|_| (0..m).map(|_| rng.gen_range(-0.5..3.5)).collect())
        .collect()
}

/// Monte Carlo hypervolume estimate and its standard error over the
/// reference-to-maxima bounding box.
pub fn mc_hypervolume(points: &[Vec<f64>], r: &[f64], n: usize, seed: u64) -> (f64, f64) {
    let m = r.len();
    let hi: Vec<f64> = (0..m)
        .map(|j| {
            points
                .iter()
                .map(|p| p[j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let vol: f64 = (0..m).map(|j| hi[j] - r[j]).product();
    if vol <= 0.0 {
        return (0.0, 0.0);
    }
    let chunk = 50_000usize;
    let n_chunks = n.div_ceil(chunk);
    let hits: usize = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng(seed ^ (c as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let size = chunk.min(n - c * chunk);
            let mut h = 0usize;
            let mut z = vec![0.0f64; m];
            for _ in 0..size {
                for j in 0..m {
                    z[j] = rng.gen_range(r[j]..hi[j]);
                }
                if points
                    .iter()
                    .any(|p| z.iter().zip(p).all(|(zj, pj)| zj <= pj))
                {
                    h += 1;
                }
            }
            h
        })
        .sum();
    let p = hits as f64 / n as f64;
    let se = vol * (p * (1.0 - p) / n as f64).sqrt();
    (vol * p, se)
}

/// Smooth random multi-output targets for surrogate fitting: sums of a few
/// random sinusoids, plus an optional constraint output with mixed signs.
pub struct GpInstance {
    pub model: GpModel<f64>,
    pub y: Vec<Vec<f64>>,
}

pub fn random_gp(seed: u64, d: usize, m: usize, v: usize, n: usize) -> GpInstance {
    let mut rng = rng(seed);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let waves: Vec<Vec<(f64, f64, f64)>> = (0..m + v)
        .map(|_| {
            (0..3)
                .map(|_| {
                    (
                        rng.gen_range(0.5..2.5),
                        rng.gen_range(1.0..4.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect()
        })
        .collect();
    let eval_output = |o: usize, p: &[f64]| -> f64 {
        waves[o]
            .iter()
            .map(|&(a, f, ph)| a * (f * p.iter().sum::<f64>() + ph).sin())
            .sum::<f64>()
    };
    let y: Vec<Vec<f64>> = x
        .iter()
        .map(|p| (0..m).map(|o| eval_output(o, p)).collect())
        .collect();
    let con: Vec<Vec<f64>> = x
        .iter()
        .map(|p| (0..v).map(|k| eval_output(m + k, p)).collect())
        .collect();
    let data = Dataset::new(
        Matrix::from_rows(&x),
        Matrix::from_rows(&y),
        if v > 0 {
            Some(Matrix::from_rows(&con))
        } else {
            None
        },
    )
    .unwrap();
    let model = GpModel::fit(
        &data,
        &FitConfig {
            restarts: 2,
            max_iters: 60,
        },
        seed,
    )
    .unwrap();
    GpInstance { model, y }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &mut dyn FnMut(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Standard normal density.
pub fn normal_pdf(z: f64, mu: f64, sd: f64) -> f64 {
    let t = (z - mu) / sd;
    (-0.5 * t * t).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}
