//! Command-line interface for the multi-objective BO engine: single trials,
//! seed-by-method sweeps, SVG convergence plots, and a standalone
//! hypervolume calculator.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mobo::harness::{
    run_bo, write_trace_json, BoTrace, ExperimentConfig, Method, OptMode, CSV_HEADER,
};
use mobo::pareto::{
    decompose, hvi_inclusion_exclusion, hypervolume, infer_reference_point, HviWorkspace,
    ParetoFront,
};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "mobo",
    about = "Multi-objective Bayesian optimization experiments",
    long_about = "Runs hypervolume-improvement BO trials on the bundled benchmark \
                  suite. Sweeps parallelize across trials; set RAYON_NUM_THREADS \
                  to bound the thread pool."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a single BO trial and write its JSON trace.
    Run(RunArgs),
    /// Run a seed x method grid in parallel and aggregate a CSV.
    Sweep(SweepArgs),
    /// Plot median and 2-standard-error bands from an aggregated CSV.
    Plot(PlotArgs),
    /// Compute hypervolume, improvement, and decomposition size for a CSV of
    /// objective vectors (maximization convention; `#` lines are comments).
    Hv(HvArgs),
}

#[derive(Args)]
struct TrialArgs {
    /// Problem registry name (see `hv --help` for conventions).
    #[arg(long)]
    problem: String,
    /// Batch size per iteration.
    #[arg(long, default_value_t = 1)]
    q: usize,
    /// Total evaluation budget, including the 2(d+1) initial design.
    #[arg(long)]
    budget: usize,
    /// Monte Carlo samples for the acquisition estimator.
    #[arg(long, default_value_t = 128)]
    mc_samples: usize,
    /// Box-decomposition approximation tolerance (0 = exact).
    #[arg(long, default_value_t = 0.0)]
    zeta: f64,
    /// Batch optimization mode: joint or sequential-greedy.
    #[arg(long, default_value = "sequential-greedy")]
    mode: String,
    /// Use the dynamic nadir reference point inside the acquisition.
    #[arg(long)]
    infer_ref: bool,
    /// Relative observation noise (0 = noiseless).
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl TrialArgs {
    fn config(&self, method: Method, seed: u64) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::new(&self.problem, method, self.q, self.budget, seed);
        config.mc_samples = self.mc_samples;
        config.zeta = self.zeta;
        config.mode = self.mode.parse::<OptMode>()?;
        config.infer_ref = self.infer_ref;
        config.noise_sd = self.noise_sd;
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    trial: TrialArgs,
    /// Candidate method: qehvi, qparego, or sobol.
    #[arg(long, default_value = "qehvi")]
    method: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    trial: TrialArgs,
    /// Comma-separated method list.
    #[arg(long, default_value = "qehvi,qparego,sobol")]
    methods: String,
    /// Number of seeds per method.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// First seed value.
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
}

#[derive(Args)]
struct PlotArgs {
    /// Aggregated CSV produced by `sweep`.
    #[arg(long)]
    csv: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    /// Metric column: log_hv_diff or hv.
    #[arg(long, default_value = "log_hv_diff")]
    metric: String,
    /// X axis: iteration or evaluations.
    #[arg(long, default_value = "iteration")]
    x: String,
}

#[derive(Args)]
struct HvArgs {
    /// CSV of objective vectors forming the front.
    #[arg(long)]
    points: PathBuf,
    /// Comma-separated reference point; inferred from the points if omitted.
    #[arg(long = "ref")]
    ref_point: Option<String>,
    /// Optional CSV of candidate objective vectors to score as a batch.
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Decomposition approximation tolerance.
    #[arg(long, default_value_t = 0.0)]
    zeta: f64,
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run(args) => run(args),
        Cmd::Sweep(args) => sweep(args),
        Cmd::Plot(args) => plot(args),
        Cmd::Hv(args) => hv(args),
    }
}

fn trace_path(dir: &Path, config: &ExperimentConfig) -> PathBuf {
    let method = method_name(config.method);
    dir.join(format!(
        "trace_{}_{}_q{}_seed{}.json",
        config.problem, method, config.q, config.seed
    ))
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Qehvi => "qehvi",
        Method::Qparego => "qparego",
        Method::Sobol => "sobol",
    }
}

fn run(args: RunArgs) -> Result<()> {
    let config = args.trial.config(args.method.parse()?, args.seed)?;
    std::fs::create_dir_all(&args.trial.out)?;
    let trace: BoTrace<f64> = run_bo(&config)?;
    let path = trace_path(&args.trial.out, &config);
    write_trace_json(&trace, &path)?;
    println!(
        "{} {} q={} seed={}: final hv = {:.6}{}  ->  {}",
        config.problem,
        method_name(config.method),
        config.q,
        config.seed,
        trace.final_hv(),
        trace
            .final_log_hv_diff()
            .map_or(String::new(), |v| format!(", log hv gap = {v:.4}")),
        path.display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let methods: Vec<Method> = args
        .methods
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<mobo::Result<_>>()?;
    if methods.is_empty() {
        bail!("no methods given");
    }
    std::fs::create_dir_all(&args.trial.out)?;
    let mut configs = Vec::new();
    for &m in &methods {
        for s in 0..args.seeds {
            configs.push(args.trial.config(m, args.seed_base + s)?);
        }
    }
    let traces: Vec<BoTrace<f64>> = configs
        .par_iter()
        .map(|c| run_bo(c).with_context(|| format!("{c:?}")))
        .collect::<Result<_>>()?;
    let csv_path = args.trial.out.join("results.csv");
    let mut csv = Vec::new();
    writeln!(csv, "{CSV_HEADER}")?;
    for trace in &traces {
        write_trace_json(trace, &trace_path(&args.trial.out, &trace.config))?;
        trace.write_csv_rows(&mut csv)?;
    }
    std::fs::write(&csv_path, csv)?;
    for &m in &methods {
        let finals: Vec<f64> = traces
            .iter()
            .filter(|t| t.config.method == m)
            .map(|t| t.final_log_hv_diff().unwrap_or_else(|| t.final_hv()))
            .collect();
        println!(
            "{:8} median final {} = {:.4}",
            method_name(m),
            if traces[0].true_front_hv.is_some() {
                "log hv gap"
            } else {
                "hv"
            },
            median(&finals)
        );
    }
    println!("aggregated CSV: {}", csv_path.display());
    Ok(())
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

// ---------------------------------------------------------------------------
// Plotting.
// ---------------------------------------------------------------------------

struct Series {
    xs: Vec<f64>,
    med: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn plot(args: PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.csv)
        .with_context(|| format!("reading {}", args.csv.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .context("empty CSV")?
        .split(',')
        .collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| *h == name)
            .with_context(|| format!("CSV lacks column '{name}'"))
    };
    let (c_method, c_metric, c_x, c_seed) = (
        col("method")?,
        col(&args.metric)?,
        col(&args.x)?,
        col("seed")?,
    );
    // method -> x -> per-seed metric values.
    let mut grouped: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let metric = cells[c_metric];
        if metric.is_empty() {
            bail!("metric '{}' is empty in row: {line}", args.metric);
        }
        let _seed: u64 = cells[c_seed].parse()?;
        grouped
            .entry(cells[c_method].to_string())
            .or_default()
            .entry(cells[c_x].parse::<u64>()?)
            .or_default()
            .push(metric.parse::<f64>()?);
    }
    if grouped.is_empty() {
        bail!("no rows in {}", args.csv.display());
    }
    let mut series = BTreeMap::new();
    for (method, by_x) in grouped {
        let mut s = Series {
            xs: Vec::new(),
            med: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
        };
        for (x, vals) in by_x {
            let m = median(&vals);
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let se = (var / n).sqrt();
            s.xs.push(x as f64);
            s.med.push(m);
            s.lo.push(m - 2.0 * se);
            s.hi.push(m + 2.0 * se);
        }
        series.insert(method, s);
    }
    let svg = render_svg(&series, &args.x, &args.metric);
    std::fs::write(&args.out, svg)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn render_svg(series: &BTreeMap<String, Series>, x_label: &str, y_label: &str) -> String {
    let (w, h) = (760.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 20.0, 50.0);
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series.values() {
        for i in 0..s.xs.len() {
            x0 = x0.min(s.xs[i]);
            x1 = x1.max(s.xs[i]);
            y0 = y0.min(s.lo[i]);
            y1 = y1.max(s.hi[i]);
        }
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    // Axes and ticks.
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb
    ));
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.0}</text>\n",
            sx(fx),
            h - mb + 18.0,
            fx
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.2}</text>\n",
            ml - 6.0,
            sy(fy) + 4.0,
            fy
        ));
        out.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{0:.1}\" x2=\"{1}\" y2=\"{0:.1}\" \
             stroke=\"#dddddd\"/>\n",
            sy(fy),
            w - mr
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>\n",
        (ml + w - mr) / 2.0,
        h - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.1})\">{y_label}</text>\n",
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0
    ));
    for (k, (name, s)) in series.iter().enumerate() {
        let color = palette[k % palette.len()];
        // 2-SE band: upper path forward, lower path reversed.
        let mut band = String::from("M");
        for i in 0..s.xs.len() {
            band.push_str(&format!(" {:.1},{:.1}", sx(s.xs[i]), sy(s.hi[i])));
        }
        for i in (0..s.xs.len()).rev() {
            band.push_str(&format!(" {:.1},{:.1}", sx(s.xs[i]), sy(s.lo[i])));
        }
        out.push_str(&format!(
            "<path d=\"{band} Z\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n"
        ));
        let mut line = String::from("M");
        for i in 0..s.xs.len() {
            line.push_str(&format!(" {:.1},{:.1}", sx(s.xs[i]), sy(s.med[i])));
        }
        out.push_str(&format!(
            "<path d=\"{line}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n"
        ));
        let ly = mt + 16.0 * (k as f64 + 1.0);
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly}\" x2=\"{:.1}\" y2=\"{ly}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            w - mr - 130.0,
            w - mr - 100.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{name}</text>\n",
            w - mr - 94.0,
            ly + 4.0
        ));
    }
    out.push_str("</svg>\n");
    out
}

// ---------------------------------------------------------------------------
// Standalone hypervolume calculator.
// ---------------------------------------------------------------------------

fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        rows.push(row.with_context(|| format!("bad row: {line}"))?);
    }
    if rows.is_empty() {
        bail!("no points in {}", path.display());
    }
    Ok(rows)
}

fn hv(args: HvArgs) -> Result<()> {
    let points = read_points(&args.points)?;
    let m = points[0].len();
    let ref_point = match &args.ref_point {
        Some(text) => {
            let r: std::result::Result<Vec<f64>, _> =
                text.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let r = r.context("bad --ref")?;
            if r.len() != m {
                bail!("--ref has {} coordinates, points have {m}", r.len());
            }
            r
        }
        None => {
            let r = infer_reference_point(&points)?;
            println!("inferred ref: {r:?}");
            r
        }
    };
    let front = ParetoFront::new(&points, &ref_point);
    println!("front size: {} of {} points", front.len(), points.len());
    println!("hv = {}", hypervolume(front.points(), &ref_point));
    let decomp = decompose(&front, args.zeta)?;
    println!("decomposition boxes: {}", decomp.n_boxes());
    if let Some(batch_path) = &args.batch {
        let batch = read_points(batch_path)?;
        if batch.iter().any(|b| b.len() != m) {
            bail!("batch dimension mismatch");
        }
        let mut ws = HviWorkspace::new();
        let hvi = hvi_inclusion_exclusion(&batch, &decomp, &mut ws)?;
        println!("hvi(batch) = {hvi}");
    }
    Ok(())
}
