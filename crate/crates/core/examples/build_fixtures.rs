//! Regenerates the true-front fixtures under `crates/core/data/fronts/`.
//!
//! Each front is approximated by densely evaluating the problem (2^20
//! scrambled Sobol points, or a dense parametric grid where the attainable
//! set is known in closed form), keeping the feasible non-dominated subset,
//! and recording its hypervolume at the problem's reference point. Run with
//! `cargo run --release --example build_fixtures` from the workspace root.

use mobo::pareto::hypervolume;
use mobo::problems::{self, ProblemSpec, C2_DTLZ2_RADIUS};
use mobo::sampling::sobol;
use std::fmt::Write as _;
use std::path::Path;

const SEED: u64 = 7001;
const N_SOBOL: usize = 1 << 20;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fronts");
    build_sobol_front(
        problems::branin_currin_spec(),
        &dir.join("branin_currin.csv"),
        usize::MAX,
    );
    build_sobol_front(
        problems::constrained_branin_currin_spec(),
        &dir.join("constrained_branin_currin.csv"),
        usize::MAX,
    );
    build_sobol_front(
        problems::vehicle_safety_spec(),
        &dir.join("vehicle_safety.csv"),
        1500,
    );
    build_c2_dtlz2_front(&dir.join("c2_dtlz2.csv"));
}

/// Dense-evaluation front: Sobol-scan the input box, keep feasible points,
/// Pareto-filter, and store (optionally thinned, with the full-front
/// hypervolume in the header).
fn build_sobol_front(mut spec: ProblemSpec<f64>, path: &Path, max_rows: usize) {
    let d = spec.dim();
    let pts: Vec<Vec<f64>> = sobol(N_SOBOL, d, SEED).unwrap();
    let mut ys: Vec<Vec<f64>> = Vec::new();
    for u in &pts {
        let (obj, con) = spec.evaluate_unit(u).unwrap();
        if con.iter().all(|&c| c >= 0.0) {
            ys.push(obj);
        }
    }
    let n_feasible = ys.len();
    let mut front = pareto_filter_fast(&ys);
    // Only keep points strictly better than the reference in every
    // objective; others contribute nothing to the hypervolume.
    front.retain(|y| y.iter().zip(spec.ref_point()).all(|(v, r)| v > r));
    let hv = hypervolume(&front, spec.ref_point());
    let full = front.len();
    let stored = thin(front, max_rows);
    let mut header = String::new();
    writeln!(header, "# problem: {}", spec.name()).unwrap();
    writeln!(
        header,
        "# source: {} scrambled Sobol evaluations (seed {}), {} feasible, \
         Pareto-filtered to {} points",
        N_SOBOL,
        SEED,
        n_feasible,
        full
    )
    .unwrap();
    if stored.len() < full {
        writeln!(
            header,
            "# stored: thinned to {} points; the hv header is for the full front",
            stored.len()
        )
        .unwrap();
    }
    write_fixture(path, &header, &spec, hv, &stored);
}

/// C2-DTLZ2 front from the closed-form attainable set: objective vectors
/// rho * (cos t, sin t) with rho >= 1, intersected with the feasibility balls.
fn build_c2_dtlz2_front(path: &Path) {
    let spec = problems::c2_dtlz2_spec::<f64>();
    let (n_t, n_rho) = (16384usize, 512usize);
    let mut ys: Vec<Vec<f64>> = Vec::new();
    for i in 0..n_t {
        let t = std::f64::consts::FRAC_PI_2 * i as f64 / (n_t - 1) as f64;
        for j in 0..n_rho {
            let rho = 1.0 + 0.3 * j as f64 / (n_rho - 1) as f64;
            let f = [rho * t.cos(), rho * t.sin()];
            if problems::c2_constraint(&f, C2_DTLZ2_RADIUS) >= 0.0 {
                ys.push(vec![-f[0], -f[1]]);
            }
        }
    }
    let n_feasible = ys.len();
    let mut front = pareto_filter_fast(&ys);
    front.retain(|y| y.iter().zip(spec.ref_point()).all(|(v, r)| v > r));
    let hv = hypervolume(&front, spec.ref_point());
    let mut header = String::new();
    writeln!(header, "# problem: {}", spec.name()).unwrap();
    writeln!(
        header,
        "# source: dense parametric grid over the attainable objective set \
         ({} angles x {} radii), {} feasible, Pareto-filtered to {} points",
        n_t,
        n_rho,
        n_feasible,
        front.len()
    )
    .unwrap();
    writeln!(
        header,
        "# radius: {} (standard value from the constrained multi-objective \
         literature)",
        C2_DTLZ2_RADIUS
    )
    .unwrap();
    write_fixture(path, &header, &spec, hv, &front);
}

fn write_fixture(path: &Path, header: &str, spec: &ProblemSpec<f64>, hv: f64, rows: &[Vec<f64>]) {
    let mut out = String::new();
    out.push_str(header);
    out.push_str("# convention: maximization (objectives negated)\n");
    let ref_str: Vec<String> = spec.ref_point().iter().map(|v| v.to_string()).collect();
    writeln!(out, "# ref_point: {}", ref_str.join(",")).unwrap();
    writeln!(out, "# hv: {hv}").unwrap();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
    println!(
        "{}: {} rows, hv = {hv:.9}",
        path.file_name().unwrap().to_string_lossy(),
        rows.len()
    );
}

/// Exact Pareto filter that scales to millions of points: a sort-sweep for
/// two objectives, and a screened incremental filter otherwise.
fn pareto_filter_fast(ys: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if ys.is_empty() {
        return Vec::new();
    }
    if ys[0].len() == 2 {
        let mut idx: Vec<usize> = (0..ys.len()).collect();
        idx.sort_by(|&a, &b| {
            ys[b][0]
                .partial_cmp(&ys[a][0])
                .unwrap()
                .then(ys[b][1].partial_cmp(&ys[a][1]).unwrap())
        });
        let mut best = f64::NEG_INFINITY;
        let mut out = Vec::new();
        for &i in &idx {
            if ys[i][1] > best {
                best = ys[i][1];
                out.push(ys[i].clone());
            }
        }
        out.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        return out;
    }
    // Screen against a front built from a prefix, then filter the survivors
    // exactly; the screen only discards points that are already dominated.
    let prefix = ys.len().min(1 << 16);
    let screen = incremental_filter(ys[..prefix].iter());
    let survivors = ys[prefix..]
        .iter()
        .filter(|y| !screen.iter().any(|q| dominates_or_equal(q, y)));
    incremental_filter(screen.iter().chain(survivors))
}

fn incremental_filter<'a>(points: impl Iterator<Item = &'a Vec<f64>>) -> Vec<Vec<f64>> {
    let mut front: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if front.iter().any(|q| dominates_or_equal(q, p)) {
            continue;
        }
        front.retain(|q| !dominates_or_equal(p, q));
        front.push(p.clone());
    }
    front
}

fn dominates_or_equal(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

/// Keeps at most `max_rows` points, evenly spaced along the first objective.
fn thin(mut front: Vec<Vec<f64>>, max_rows: usize) -> Vec<Vec<f64>> {
    front.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    if front.len() <= max_rows {
        return front;
    }
    let n = front.len();
    (0..max_rows)
        .map(|k| front[k * (n - 1) / (max_rows - 1)].clone())
        .collect()
}
