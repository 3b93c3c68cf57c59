use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trmt_core::chebyshev::{self, CalibrationTable, Scaling};
use trmt_core::dynamics::{self, RemainderKind, SweepConfig};
use trmt_core::ensemble::{self, Ensemble, RiteSampler};
use trmt_core::nbcycles;
use trmt_core::oracle::{self, EdgeSet, ExpectationMode};
use trmt_core::rng::RngStream;
use trmt_core::stats::{self, SweepSettings};
use trmt_core::stein::{self, OuSpec, QuadratureGrid, TestReport};
use trmt_core::{Error, Result};

mod selftest;

#[derive(Parser, Debug)]
#[command(name = "trmt", version, about = "Random tournament matrix experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file; a summary, when present, goes to `<out>.summary.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sample budget (calibration samples, Monte Carlo draws or cycle cap,
    /// depending on the command).
    #[arg(long, global = true)]
    budget: Option<u64>,
    #[arg(long, global = true, default_value = "theorem")]
    scaling: Scaling,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Emit matrices as newline-delimited JSON.
    Sample {
        #[arg(long)]
        ensemble: Ensemble,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Chain steps between emitted RITE states (default: d_N rounded up to odd).
        #[arg(long)]
        thin: Option<u64>,
    },
    /// Build a calibration table of ensemble means.
    Calibrate {
        #[arg(long)]
        ensemble: Ensemble,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 3)]
        k_max: usize,
    },
    /// Centred statistics Y_2..Y_k for sampled states, as CSV.
    Traces {
        #[arg(long)]
        ensemble: Ensemble,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 3)]
        k_max: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Calibration table to reuse instead of building one.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Compare the cycle-sum and eigenvalue forms of Tr T_{2n}.
    Identity {
        #[arg(long = "N")]
        n: usize,
        #[arg(long = "n")]
        degree: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value = "ite")]
        ensemble: Ensemble,
    },
    /// Exact conditional moments, remainders and their scaling fit.
    Dynamics {
        #[arg(long)]
        ensemble: Ensemble,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        k_max: usize,
        /// Remainder to fit: drift, diffusion or third.
        #[arg(long, default_value = "drift")]
        which: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        l: usize,
    },
    /// Stein equation checks for the OU generator.
    Stein {
        #[arg(long, default_value_t = 3)]
        k_max: usize,
        #[arg(long, default_value_t = 20)]
        probes: usize,
    },
    /// Exact censuses, expectations and the asymptotic count.
    Oracle {
        /// Print the number of regular tournaments on N vertices.
        #[arg(long, value_name = "N")]
        regular_count: Option<usize>,
        /// Exact and integral-representation E[H_E] for `--edges`.
        #[arg(long, requires_all = ["n", "edges"])]
        expectation: bool,
        #[arg(long = "N")]
        n: Option<usize>,
        /// Edge list such as `0-1,0-2`.
        #[arg(long)]
        edges: Option<String>,
        /// Asymptotic count against exact counts.
        #[arg(long)]
        mckay: bool,
    },
    /// Gaussian convergence sweep over a grid of N.
    Gauss {
        #[arg(long)]
        ensemble: Ensemble,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 3000)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        k_max: usize,
    },
    /// Fast deterministic property suite.
    Selftest,
}

/// Primary output plus an optional JSON summary.
struct Output {
    primary: String,
    summary: Option<String>,
    ok: bool,
}

impl Output {
    fn new(primary: String) -> Self {
        Self { primary, summary: None, ok: true }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("{}", diagnostic("invalid-input", &e.to_string()));
            return ExitCode::from(2);
        }
    }
    match run(&cli).and_then(|out| write_output(&cli.global, &out).map(|_| out.ok)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", diagnostic(e.kind(), &e.to_string()));
            ExitCode::from(1)
        }
    }
}

fn diagnostic(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn write_output(g: &Global, out: &Output) -> Result<()> {
    match &g.out {
        Some(path) => {
            std::fs::write(path, &out.primary)?;
            if let Some(s) = &out.summary {
                std::fs::write(summary_path(path), s)?;
            }
        }
        None => {
            print!("{}", out.primary);
            if let Some(s) = &out.summary {
                println!("{s}");
            }
        }
    }
    Ok(())
}

fn summary_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn run(cli: &Cli) -> Result<Output> {
    let g = &cli.global;
    let root = RngStream::root(g.seed);
    match &cli.command {
        Command::Sample { ensemble, n, count, thin } => sample(*ensemble, *n, *count, *thin, root),
        Command::Calibrate { ensemble, n, k_max } => {
            let table = chebyshev::build_calibration(
                *ensemble,
                *n,
                *k_max,
                g.scaling,
                g.budget.unwrap_or(10_000),
                root.named("calibration"),
            )?;
            Ok(Output::new(table.to_json() + "\n"))
        }
        Command::Traces { ensemble, n, k_max, count, calibration } => {
            let table = match calibration {
                Some(p) => CalibrationTable::load(p)?,
                None => chebyshev::build_calibration(
                    *ensemble,
                    *n,
                    *k_max,
                    g.scaling,
                    g.budget.unwrap_or(10_000),
                    root.named("calibration"),
                )?,
            };
            let rows = stats::sample_statistics(*ensemble, *n, *count, &table, *k_max, root.named("samples"))?;
            let mut csv = String::from("sample");
            for k in 2..=*k_max {
                csv.push_str(&format!(",Y_{k}"));
            }
            csv.push('\n');
            for (i, r) in rows.iter().enumerate() {
                csv.push_str(&i.to_string());
                for v in &r.values {
                    csv.push_str(&format!(",{v}"));
                }
                csv.push('\n');
            }
            Ok(Output::new(csv))
        }
        Command::Identity { n, degree, trials, ensemble } => {
            identity(*ensemble, *n, *degree, *trials, g.budget.unwrap_or(nbcycles::DEFAULT_CYCLE_BUDGET), root)
        }
        Command::Dynamics { ensemble, grid, samples, k_max, which, n, m, l } => {
            let kind = match which.as_str() {
                "drift" => RemainderKind::Drift,
                "diffusion" => RemainderKind::Diffusion,
                "third" => RemainderKind::Third,
                other => return Err(Error::InvalidInput(format!("unknown remainder {other:?}"))),
            };
            let config = SweepConfig {
                ensemble: *ensemble,
                n_grid: grid.clone(),
                samples_per_n: *samples,
                k_max: *k_max,
                calibration_budget: g.budget.unwrap_or(20_000),
                moment_budget: dynamics::DEFAULT_MOMENT_BUDGET,
            };
            if [*n, *m, *l].iter().any(|&i| i < 2 || i > *k_max) {
                return Err(Error::InvalidInput(format!("indices must lie in 2..={k_max}")));
            }
            let points = dynamics::remainder_sweep(&config, root.named("sweep"))?;
            let mut csv = format!("{}\n", dynamics::DynamicsRow::CSV_HEADER);
            for p in &points {
                for r in dynamics::summary_rows(p) {
                    csv.push_str(&r.csv());
                    csv.push('\n');
                }
            }
            let values: Vec<Vec<f64>> = points.iter().map(|p| p.abs_remainders(kind, *n, *m, *l)).collect();
            let mut out = Output::new(csv);
            if grid.len() >= 4 {
                let fit = dynamics::fit_log_log(grid, &values, root.named("bootstrap"))?;
                out.summary = Some(to_json(&serde_json::json!({
                    "ensemble": ensemble,
                    "quantity": kind.as_str(),
                    "indices": [n, m, l],
                    "fit": fit,
                }))?);
            }
            Ok(out)
        }
        Command::Stein { k_max, probes } => stein_suite(*k_max, *probes, g.budget.unwrap_or(20_000) as usize, root),
        Command::Oracle { regular_count, expectation, n, edges, mckay } => {
            if let Some(n) = regular_count {
                let census = oracle::enumerate_regular(*n)?;
                return Ok(Output::new(format!("{}\n", census.count)));
            }
            if *expectation {
                let (n, edges) = (n.expect("clap enforces --N"), edges.as_deref().expect("clap enforces --edges"));
                return expectation_report(n, &parse_edges(edges)?, g.budget.unwrap_or(1 << 16), root);
            }
            if *mckay {
                return mckay_table();
            }
            Err(Error::InvalidInput("oracle needs --regular-count, --expectation or --mckay".into()))
        }
        Command::Gauss { ensemble, grid, samples, k_max } => {
            let settings = SweepSettings {
                ensemble: *ensemble,
                n_grid: grid.clone(),
                samples_per_n: *samples,
                k_max: *k_max,
                scaling: g.scaling,
                calibration_budget: g.budget.unwrap_or(10_000),
            };
            let table = stats::convergence_sweep(&settings, root.named("gauss"))?;
            let mut out = Output::new(table.csv());
            let rows: Vec<_> = table
                .rows
                .iter()
                .map(|r| serde_json::json!({ "N": r.n_vertices, "lag1_autocorrelation": r.lag1_autocorrelation }))
                .collect();
            out.summary = Some(to_json(&serde_json::json!({
                "ensemble": ensemble,
                "scaling": g.scaling,
                "trend": table.trend,
                "rows": rows,
            }))?);
            Ok(out)
        }
        Command::Selftest => {
            let reports = selftest::run(root)?;
            let ok = reports.iter().all(|r| r.pass);
            Ok(Output { primary: to_json(&reports)?, summary: None, ok })
        }
    }
}

fn sample(ensemble: Ensemble, n: usize, count: usize, thin: Option<u64>, root: RngStream) -> Result<Output> {
    ensemble.check_dimension(n)?;
    let mut out = String::new();
    match ensemble {
        Ensemble::Ite => {
            let mut rng = root.named("sample").rng();
            for _ in 0..count {
                out.push_str(&ensemble::sample_ite(n, &mut rng)?.to_json());
                out.push('\n');
            }
        }
        Ensemble::Rite => {
            let stream = root.named("sample");
            let mut sampler = match thin {
                Some(t) => RiteSampler::with_gap(n, stream, t)?,
                None => RiteSampler::new(n, stream)?,
            };
            for _ in 0..count {
                out.push_str(&sampler.next_sample().to_json());
                out.push('\n');
            }
        }
    }
    Ok(Output::new(out))
}

fn identity(ensemble: Ensemble, n: usize, degree: usize, trials: usize, budget: u64, root: RngStream) -> Result<Output> {
    if degree == 0 {
        return Err(Error::InvalidDegree("n must be >= 1".into()));
    }
    let poly = 2 * degree;
    let mut worst: f64 = 0.0;
    let mut sampler = match ensemble {
        Ensemble::Rite => Some(RiteSampler::new(n, root.named("identity"))?),
        Ensemble::Ite => None,
    };
    let mut rng = root.named("identity").rng();
    for _ in 0..trials {
        let h = match sampler.as_mut() {
            Some(s) => s.next_sample().clone(),
            None => ensemble::sample_ite(n, &mut rng)?,
        };
        let cycles = nbcycles::cycle_sum_trace(&h, poly, budget)?;
        let eig = chebyshev::chebyshev_trace(&h, poly, Scaling::Lemma)?;
        worst = worst.max((cycles - eig).abs());
    }
    let ok = worst < 1e-8;
    let mut out = Output::new(to_json(&serde_json::json!({
        "ensemble": ensemble,
        "N": n,
        "n": degree,
        "cycle_length": poly,
        "trials": trials,
        "max_discrepancy": worst,
        "pass": ok,
    }))?);
    out.ok = ok;
    Ok(out)
}

fn stein_suite(k_max: usize, probes: usize, samples: usize, root: RngStream) -> Result<Output> {
    let spec = OuSpec::new(k_max)?;
    let grid = QuadratureGrid::default_for(&spec);
    let points = stein::random_probes(&spec, probes, root.named("probes"));
    let mut reports = Vec::new();
    for i in 0..spec.dim() {
        let m = spec.rate(i);
        let linear = move |x: &[f64]| x[i];
        let square = move |x: &[f64]| x[i] * x[i];
        let (mut r1, mut r2): (f64, f64) = (0.0, 0.0);
        for x in &points {
            r1 = r1.max(stein::SteinSolver::new(&linear, spec, &grid).residual(x)?.abs());
            r2 = r2.max(stein::SteinSolver::new(&square, spec, &grid).residual(x)?.abs());
        }
        reports.push(TestReport::below(format!("residual:X_{m}"), r1, 1e-6));
        reports.push(TestReport::below(format!("residual:X_{m}^2"), r2, 1e-6));
    }
    let bump = stein::SteinSolver::new(&stein::gaussian_bump, spec, &grid);
    let mut rb: f64 = 0.0;
    for x in &points {
        rb = rb.max(bump.residual(x)?.abs());
    }
    reports.push(TestReport::below("residual:gaussian_bump", rb, 1e-3));
    let suite = stein::default_f_suite(&spec, root.named("suite"));
    let refs: Vec<(String, &dyn stein::Functional)> =
        suite.iter().map(|(name, f)| (name.clone(), f.as_ref() as &dyn stein::Functional)).collect();
    reports.extend(stein::stein_lemma_mc(&spec, &refs, samples, root.named("stein_mc"))?);
    let mut bounds = Vec::new();
    for j in 1..=3 {
        bounds.push(stein::function_bound_check(&stein::gaussian_bump, j, &spec, &grid, &points[..points.len().min(4)])?);
    }
    let ok = reports.iter().all(|r| r.pass);
    let mut out = Output::new(to_json(&serde_json::json!({ "tests": reports, "function_bounds": bounds }))?);
    out.ok = ok;
    Ok(out)
}

fn parse_edges(s: &str) -> Result<EdgeSet> {
    let bad = || Error::InvalidInput(format!("edges must look like 0-1,0-2; got {s:?}"));
    let mut edges = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (a, b) = part.split_once('-').ok_or_else(bad)?;
        edges.push((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?));
    }
    EdgeSet::new(edges)
}

fn expectation_report(n: usize, e: &EdgeSet, points: u64, root: RngStream) -> Result<Output> {
    let exact = oracle::edge_product_expectation(n, e, ExpectationMode::Exact, 0, root.named("exact"))?;
    let integral = oracle::mckay_integral_expectation(n, e, points, root.named("integral"))?;
    let gap = (exact.value - integral.value).norm();
    Ok(Output::new(to_json(&serde_json::json!({
        "N": n,
        "edges": e.edges(),
        "exact": exact,
        "integral": integral,
        "difference": gap,
        "within_3_stderr": gap <= 3.0 * integral.stderr,
    }))?))
}

fn mckay_table() -> Result<Output> {
    let mut csv = String::from("N,exact,asymptotic,ratio\n");
    let max = if oracle::long_runs_enabled() { oracle::RITE_CENSUS_LONG_MAX } else { oracle::RITE_CENSUS_MAX };
    for n in (5..=max).step_by(2) {
        let count = oracle::enumerate_regular(n)?.count;
        let exact: f64 = count.to_string().parse().expect("decimal integer");
        let asym = oracle::mckay_asymptotic(n)?;
        csv.push_str(&format!("{n},{count},{asym},{}\n", asym / exact));
    }
    Ok(Output::new(csv))
}
