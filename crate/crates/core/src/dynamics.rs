//! Exact one-step dynamics of the centred traces.
//!
//! For a state `H`, the conditional moments of `δY_n = Y_n(H') - Y_n(H)`
//! under one chain step are computed by summing over every admissible move
//! with its transition probability `1/d_N`. Centring cancels in `δY`, so
//! only uncentred traces under the lemma scaling are needed.
//!
//! The remainders compare these moments with the Ornstein–Uhlenbeck form
//!
//! `c_N E[δY_n|H] = -n Y_n + R_n`, `c_N E[δY_n δY_m|H] = 2n² δ_nm + R_nm`,
//!
//! with `c_N = d_N/4` (ITE) and `c_N = d_N/(6N)` (RITE).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chebyshev::{self, CalibrationTable, Scaling, TraceVector};
use crate::ensemble::{self, Ensemble, RiteSampler, TournamentMatrix};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Default cap on `d_N · N³`.
pub const DEFAULT_MOMENT_BUDGET: u64 = 50_000_000_000;

pub fn normalizer(ensemble: Ensemble, n: usize) -> f64 {
    let d = ensemble.move_count(n) as f64;
    match ensemble {
        Ensemble::Ite => d / 4.0,
        Ensemble::Rite => d / (6.0 * n as f64),
    }
}

/// Conditional moments for `Y_2..Y_{k_max}`; index `i` refers to `n = i + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsEstimate {
    #[serde(rename = "N")]
    pub n_vertices: usize,
    pub ensemble: Ensemble,
    pub k_max: usize,
    pub drift: Vec<f64>,
    pub diffusion: Vec<Vec<f64>>,
    pub third_abs: Vec<Vec<Vec<f64>>>,
    pub normalizer: f64,
}

/// Edges flipped by a move (the first `count` entries are used), and its probability.
pub type WeightedMove = ([(usize, usize); 3], usize, f64);

/// Every move out of `h` with its probability. RITE moves are listed once
/// per cyclic triangle with weight `6/d_N`, since all six labelled listings
/// reverse the same three edges.
pub fn weighted_moves(h: &TournamentMatrix, ensemble: Ensemble) -> Result<Vec<WeightedMove>> {
    let n = h.n();
    ensemble.check_dimension(n)?;
    let d = ensemble.move_count(n) as f64;
    Ok(match ensemble {
        Ensemble::Ite => (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| ([(p, q), (0, 0), (0, 0)], 1, 1.0 / d)))
            .collect(),
        Ensemble::Rite => {
            if !h.is_regular() {
                return Err(Error::PreconditionViolation("RITE moments need a regular state".into()));
            }
            let mut moves = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    for c in b + 1..n {
                        if h.is_triangle(a, b, c) || h.is_triangle(a, c, b) {
                            moves.push(([(a, b), (b, c), (c, a)], 3, 6.0 / d));
                        }
                    }
                }
            }
            moves
        }
    })
}

/// Exact `E[δY_n|H]`, `E[δY_n δY_m|H]`, `E[|δY_n δY_m δY_l| |H]` for
/// `2 <= n, m, l <= k_max`.
pub fn exact_conditional_moments(
    h: &TournamentMatrix,
    ensemble: Ensemble,
    k_max: usize,
    budget: u64,
) -> Result<DynamicsEstimate> {
    let n = h.n();
    if k_max < 2 {
        return Err(Error::InvalidDegree("k_max must be >= 2".into()));
    }
    let work = ensemble.move_count(n) as f64 * (n as f64).powi(3);
    if work > budget as f64 {
        return Err(Error::BudgetExceeded(format!("d_N·N³ = {work:.3e} exceeds budget {budget}")));
    }
    let moves = weighted_moves(h, ensemble)?;
    let base = chebyshev::eig_traces(h, k_max, Scaling::Lemma)?;
    let deltas: Vec<Result<(f64, Vec<f64>)>> = moves
        .par_iter()
        .map(|(edges, count, w)| {
            let mut h2 = h.clone();
            for &(p, q) in &edges[..*count] {
                h2.flip(p, q);
            }
            let t = chebyshev::eig_traces(&h2, k_max, Scaling::Lemma)?;
            Ok((*w, (1..k_max).map(|i| t[i] - base[i]).collect()))
        })
        .collect();
    let k = k_max - 1;
    let mut drift = vec![0.0; k];
    let mut diffusion = vec![vec![0.0; k]; k];
    let mut third_abs = vec![vec![vec![0.0; k]; k]; k];
    for r in deltas {
        let (w, dy) = r?;
        for a in 0..k {
            drift[a] += w * dy[a];
            for b in a..k {
                diffusion[a][b] += w * (dy[a] * dy[b]);
                for c in b..k {
                    third_abs[a][b][c] += w * (dy[a] * dy[b] * dy[c]).abs();
                }
            }
        }
    }
    // Fill the remaining index orders from the sorted ones so the tensors
    // are exactly symmetric.
    for a in 0..k {
        for b in 0..k {
            let (lo, hi) = (a.min(b), a.max(b));
            diffusion[a][b] = diffusion[lo][hi];
            for c in 0..k {
                let mut idx = [a, b, c];
                idx.sort_unstable();
                third_abs[a][b][c] = third_abs[idx[0]][idx[1]][idx[2]];
            }
        }
    }
    Ok(DynamicsEstimate {
        n_vertices: n,
        ensemble,
        k_max,
        drift,
        diffusion,
        third_abs,
        normalizer: normalizer(ensemble, n),
    })
}

/// Remainders; index `i` refers to `n = i + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderSample {
    pub r_n: Vec<f64>,
    pub r_nm: Vec<Vec<f64>>,
    pub r_nml: Vec<Vec<Vec<f64>>>,
}

pub fn extract_remainders(d: &DynamicsEstimate, y: &TraceVector) -> Result<RemainderSample> {
    if y.k_max != d.k_max || y.scaling != Scaling::Lemma {
        return Err(Error::InvalidInput(
            "trace vector must use the lemma scaling and the same k_max".into(),
        ));
    }
    let c = d.normalizer;
    let idx = |i: usize| (i + 2) as f64;
    let r_n = d.drift.iter().enumerate().map(|(i, &x)| c * x + idx(i) * y.values[i]).collect();
    let r_nm = d
        .diffusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &x)| c * x - if i == j { 2.0 * idx(i) * idx(i) } else { 0.0 })
                .collect()
        })
        .collect();
    let r_nml = d
        .third_abs
        .iter()
        .map(|m| m.iter().map(|row| row.iter().map(|&x| c * x).collect()).collect())
        .collect();
    Ok(RemainderSample { r_n, r_nm, r_nml })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemainderKind {
    #[serde(rename = "R_n")]
    Drift,
    #[serde(rename = "R_nm")]
    Diffusion,
    #[serde(rename = "R_nml")]
    Third,
}

impl RemainderKind {
    /// `|R|` for indices `(n, m, l)`, each `>= 2`.
    pub fn select(&self, r: &RemainderSample, n: usize, m: usize, l: usize) -> f64 {
        match self {
            RemainderKind::Drift => r.r_n[n - 2].abs(),
            RemainderKind::Diffusion => r.r_nm[n - 2][m - 2].abs(),
            RemainderKind::Third => r.r_nml[n - 2][m - 2][l - 2].abs(),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RemainderKind::Drift => "R_n",
            RemainderKind::Diffusion => "R_nm",
            RemainderKind::Third => "R_nml",
        }
    }
}

/// All states drawn at one grid point, with their moments and remainders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(rename = "N")]
    pub n_vertices: usize,
    pub ensemble: Ensemble,
    pub estimates: Vec<DynamicsEstimate>,
    pub remainders: Vec<RemainderSample>,
    pub calibration: CalibrationTable,
}

impl SweepPoint {
    /// `|R|` for every sampled state.
    pub fn abs_remainders(&self, kind: RemainderKind, n: usize, m: usize, l: usize) -> Vec<f64> {
        self.remainders.iter().map(|r| kind.select(r, n, m, l)).collect()
    }

    /// `c_N E[δY_n δY_m|H]` for every sampled state.
    pub fn scaled_diffusion(&self, n: usize, m: usize) -> Vec<f64> {
        self.estimates.iter().map(|d| d.normalizer * d.diffusion[n - 2][m - 2]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub ensemble: Ensemble,
    pub n_grid: Vec<usize>,
    pub samples_per_n: usize,
    pub k_max: usize,
    pub calibration_budget: u64,
    pub moment_budget: u64,
}

/// Draws `samples_per_n` states per grid point (independent for ITE,
/// decorrelated chain samples for RITE) and computes their remainders.
pub fn remainder_sweep(config: &SweepConfig, stream: RngStream) -> Result<Vec<SweepPoint>> {
    if config.samples_per_n < 20 {
        return Err(Error::InvalidInput(format!(
            "samples_per_N must be >= 20, got {}",
            config.samples_per_n
        )));
    }
    config
        .n_grid
        .iter()
        .map(|&n| {
            let point = stream.named(&format!("N={n}"));
            let table = chebyshev::build_calibration(
                config.ensemble,
                n,
                config.k_max,
                Scaling::Lemma,
                config.calibration_budget,
                point.named("calibration"),
            )?;
            let states: Vec<TournamentMatrix> = match config.ensemble {
                Ensemble::Ite => {
                    let mut rng = point.named("states").rng();
                    (0..config.samples_per_n)
                        .map(|_| ensemble::sample_ite(n, &mut rng))
                        .collect::<Result<_>>()?
                }
                Ensemble::Rite => {
                    let mut sampler = RiteSampler::new(n, point.named("states"))?;
                    (0..config.samples_per_n).map(|_| sampler.next_sample().clone()).collect()
                }
            };
            let mut estimates = Vec::with_capacity(states.len());
            let mut remainders = Vec::with_capacity(states.len());
            for h in &states {
                let d = exact_conditional_moments(h, config.ensemble, config.k_max, config.moment_budget)?;
                let y = chebyshev::centred_statistics(h, &table, config.k_max)?;
                remainders.push(extract_remainders(&d, &y)?);
                estimates.push(d);
            }
            Ok(SweepPoint {
                n_vertices: n,
                ensemble: config.ensemble,
                estimates,
                remainders,
                calibration: table,
            })
        })
        .collect()
}

/// Log–log fit of `mean |R|` against `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Ordinary least squares standard error of the slope.
    pub stderr: f64,
    /// Bootstrap standard error (states resampled within each `N`).
    pub bootstrap_stderr: f64,
    #[serde(rename = "N_grid")]
    pub n_grid: Vec<usize>,
    pub means: Vec<f64>,
}

pub const BOOTSTRAP_REPLICATES: usize = 400;

/// Fits `log mean(values[i]) = a + b log N_i`; `values[i]` holds the
/// per-state samples at `n_grid[i]`.
pub fn fit_log_log(n_grid: &[usize], values: &[Vec<f64>], stream: RngStream) -> Result<ScalingFit> {
    if n_grid.len() < 4 || values.len() != n_grid.len() {
        return Err(Error::InvalidGrid(format!(
            "scaling fit needs at least 4 grid points, got {}",
            n_grid.len()
        )));
    }
    if values.iter().any(|v| v.is_empty()) {
        return Err(Error::InvalidInput("empty sample at a grid point".into()));
    }
    let x: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let means: Vec<f64> = values.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    if means.iter().any(|&m| m <= 0.0 || !m.is_finite()) {
        return Err(Error::NumericalFailure("non-positive mean in log-log fit".into()));
    }
    let y: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let ols = crate::stats::ols(&x, &y)?;
    let mut rng = stream.rng();
    let mut slopes = Vec::with_capacity(BOOTSTRAP_REPLICATES);
    for _ in 0..BOOTSTRAP_REPLICATES {
        let yb: Vec<f64> = values
            .iter()
            .map(|v| {
                let s: f64 = (0..v.len()).map(|_| v[rng.random_range(0..v.len())]).sum();
                (s / v.len() as f64).max(f64::MIN_POSITIVE).ln()
            })
            .collect();
        slopes.push(crate::stats::ols(&x, &yb)?.slope);
    }
    let mb = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let vb = slopes.iter().map(|s| (s - mb).powi(2)).sum::<f64>() / (slopes.len() - 1) as f64;
    Ok(ScalingFit {
        exponent: ols.slope,
        intercept: ols.intercept,
        stderr: ols.slope_stderr,
        bootstrap_stderr: vb.sqrt(),
        n_grid: n_grid.to_vec(),
        means,
    })
}

/// Sweep followed by [`fit_log_log`] on `|R|` for the chosen entry.
#[allow(clippy::too_many_arguments)]
pub fn fit_remainder_scaling(
    ensemble: Ensemble,
    kind: RemainderKind,
    (n, m, l): (usize, usize, usize),
    n_grid: &[usize],
    samples_per_n: usize,
    calibration_budget: u64,
    stream: RngStream,
) -> Result<ScalingFit> {
    if n_grid.len() < 4 {
        return Err(Error::InvalidGrid(format!(
            "scaling fit needs at least 4 grid points, got {}",
            n_grid.len()
        )));
    }
    let k_max = n.max(m).max(l).max(2);
    let config = SweepConfig {
        ensemble,
        n_grid: n_grid.to_vec(),
        samples_per_n,
        k_max,
        calibration_budget,
        moment_budget: DEFAULT_MOMENT_BUDGET,
    };
    let points = remainder_sweep(&config, stream.named("sweep"))?;
    let values: Vec<Vec<f64>> = points.iter().map(|p| p.abs_remainders(kind, n, m, l)).collect();
    fit_log_log(n_grid, &values, stream.named("bootstrap"))
}

/// One output row: `ensemble,N,n,m,l,quantity,value,stderr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRow {
    pub ensemble: Ensemble,
    #[serde(rename = "N")]
    pub n_vertices: usize,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub quantity: String,
    pub value: f64,
    pub stderr: f64,
}

impl DynamicsRow {
    pub const CSV_HEADER: &'static str = "ensemble,N,n,m,l,quantity,value,stderr";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.ensemble, self.n_vertices, self.n, self.m, self.l, self.quantity, self.value, self.stderr
        )
    }
}

/// Summary rows for a sweep point: mean `|R_n|`, mean `|R_nm|`, mean
/// scaled diffusion, each with its standard error over states. Unused
/// indices are reported as 0.
pub fn summary_rows(p: &SweepPoint) -> Vec<DynamicsRow> {
    let k_max = p.estimates.first().map_or(2, |d| d.k_max);
    let mut rows = Vec::new();
    let mut push = |n: usize, m: usize, l: usize, quantity: &str, v: Vec<f64>| {
        let (mean, se) = crate::stats::mean_stderr(&v);
        rows.push(DynamicsRow {
            ensemble: p.ensemble,
            n_vertices: p.n_vertices,
            n,
            m,
            l,
            quantity: quantity.into(),
            value: mean,
            stderr: se,
        });
    };
    for n in 2..=k_max {
        push(n, 0, 0, "abs_R_n", p.abs_remainders(RemainderKind::Drift, n, 2, 2));
        for m in n..=k_max {
            push(n, m, 0, "abs_R_nm", p.abs_remainders(RemainderKind::Diffusion, n, m, 2));
            push(n, m, 0, "scaled_diffusion", p.scaled_diffusion(n, m));
        }
    }
    rows
}

/// `|LHS - RHS|` for the indicator simplification: the triangle-indicator
/// sum `Σ_q Θ_q(H)/d_N [f(H + δH^q) - f(H)]` against
/// `Σ_q (1 - 3 H_{q0q1} H_{q1q2})/(4 d_N) [f(H + δH^q) - f(H)]`, both over
/// all ordered triples of distinct vertices.
pub fn indicator_simplification_check(
    h: &TournamentMatrix,
    f: impl Fn(&TournamentMatrix) -> Result<f64> + Sync,
) -> Result<f64> {
    let n = h.n();
    Ensemble::Rite.check_dimension(n)?;
    if !h.is_regular() {
        return Err(Error::PreconditionViolation("indicator check needs a regular state".into()));
    }
    let d = ensemble::regular_triangle_count(n) as f64;
    let f0 = f(h)?;
    let triples: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|a| (0..n).flat_map(move |b| (0..n).map(move |c| (a, b, c))))
        .filter(|&(a, b, c)| a != b && b != c && a != c)
        .collect();
    let terms: Vec<Result<(f64, f64)>> = triples
        .par_iter()
        .map(|&(a, b, c)| {
            let mut h2 = h.clone();
            h2.flip(a, b);
            h2.flip(b, c);
            h2.flip(c, a);
            let df = f(&h2)? - f0;
            let theta = if h.is_triangle(a, b, c) { 1.0 } else { 0.0 };
            // H_ab H_bc = (i S_ab)(i S_bc) = -S_ab S_bc.
            let hh = -f64::from(h.sign(a, b) * h.sign(b, c));
            Ok((theta / d * df, (1.0 - 3.0 * hh) / (4.0 * d) * df))
        })
        .collect();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for t in terms {
        let (l, r) = t?;
        lhs += l;
        rhs += r;
    }
    Ok((lhs - rhs).abs())
}
