//! Gaussianity diagnostics for the centred traces and small statistical
//! helpers shared by the other modules.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::chebyshev::{self, CalibrationTable, Scaling, TraceVector};
use crate::ensemble::{self, Ensemble, RiteSampler};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Smallest sample accepted by [`gaussianity_report`].
pub const MIN_GAUSS_SAMPLES: usize = 500;

pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

/// Ordinary least squares `y = intercept + slope·x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    let k = x.len();
    if k < 2 || y.len() != k {
        return Err(Error::InvalidGrid(format!("regression needs >= 2 paired points, got {k}")));
    }
    let kf = k as f64;
    let mx = x.iter().sum::<f64>() / kf;
    let my = y.iter().sum::<f64>() / kf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidGrid("regression abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if k > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (rss / (kf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(OlsFit { slope, intercept, slope_stderr, points: k })
}

/// Sample skewness and excess kurtosis (moment estimators).
pub fn skew_kurtosis(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// One-sample Kolmogorov–Smirnov distance `sup |F_n - F|`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s: Vec<f64> = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Limiting Kolmogorov distribution `P(K <= x)`.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 0.3 {
        // The alternating series converges slowly here; use the theta-function form.
        let t = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let s: f64 = (1..=50).map(|k| (-((2 * k - 1) as f64).powi(2) * t).exp()).sum();
        return (2.0 * std::f64::consts::PI).sqrt() / x * s;
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * x * x).exp()
        })
        .sum();
    (1.0 - 2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS distance `d` from `n` samples, with
/// Stephens' finite-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    1.0 - kolmogorov_cdf((sn + 0.12 + 0.11 / sn) * d)
}

/// 1% critical value of the KS distance for `n` samples.
pub fn ks_critical_1pct(n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    1.627_624 / (sn + 0.12 + 0.11 / sn)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateDiagnostics {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    pub skew: f64,
    pub kurt: f64,
    /// KS distance to `N(0, n)`.
    pub ks: f64,
    pub ks_crit_1pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussDiagnostics {
    pub per_n: Vec<CoordinateDiagnostics>,
    /// Covariance of `(Y_2, ..., Y_k)`.
    pub covariance: Vec<Vec<f64>>,
    /// Standard errors of the covariance entries under independence.
    pub covariance_stderr: Vec<Vec<f64>>,
    pub sample_count: usize,
}

impl GaussDiagnostics {
    pub fn coordinate(&self, n: usize) -> &CoordinateDiagnostics {
        &self.per_n[n - 2]
    }
}

/// Moments, KS distance to `N(0, n)` and covariance for every coordinate.
pub fn gaussianity_report(samples: &[TraceVector]) -> Result<GaussDiagnostics> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|t| t.values.clone()).collect();
    if let Some(first) = samples.first() {
        if samples.iter().any(|t| t.k_max != first.k_max || t.scaling != first.scaling) {
            return Err(Error::InvalidInput("samples mix k_max or scaling".into()));
        }
    }
    gaussianity_report_rows(&rows)
}

/// [`gaussianity_report`] on raw rows, `rows[s][i]` being `Y_{i+2}`.
pub fn gaussianity_report_rows(rows: &[Vec<f64>]) -> Result<GaussDiagnostics> {
    let count = rows.len();
    if count < MIN_GAUSS_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_GAUSS_SAMPLES} samples, got {count}"
        )));
    }
    let k = rows[0].len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidInput("rows have different lengths".into()));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("non-finite statistic".into()));
    }
    let cols: Vec<Vec<f64>> = (0..k).map(|i| rows.iter().map(|r| r[i]).collect()).collect();
    let cf = count as f64;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / cf).collect();
    let mut covariance = vec![vec![0.0; k]; k];
    let mut covariance_stderr = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            let prods: Vec<f64> =
                (0..count).map(|s| (cols[a][s] - means[a]) * (cols[b][s] - means[b])).collect();
            let (m, _) = mean_stderr(&prods);
            covariance[a][b] = m * cf / (cf - 1.0);
            let v = prods.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (cf - 1.0);
            covariance_stderr[a][b] = (v / cf).sqrt();
        }
    }
    let per_n = cols
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let n = i + 2;
            let (skew, kurt) = skew_kurtosis(c);
            let law = Normal::new(0.0, (n as f64).sqrt()).expect("positive variance");
            CoordinateDiagnostics {
                n,
                mean: means[i],
                var: covariance[i][i],
                skew,
                kurt,
                ks: ks_statistic(c, |x| law.cdf(x)),
                ks_crit_1pct: ks_critical_1pct(count),
            }
        })
        .collect();
    Ok(GaussDiagnostics { per_n, covariance, covariance_stderr, sample_count: count })
}

/// Spearman rank correlation with ties given average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    sab / (saa * sbb).sqrt()
}

/// One-sided exact permutation p-value `P(ρ <= observed)` for a decreasing
/// trend of `y` in `x` (`x.len() <= 10`).
pub fn spearman_decreasing_p(x: &[f64], y: &[f64]) -> Result<f64> {
    let k = x.len();
    if k < 3 || y.len() != k {
        return Err(Error::InvalidGrid(format!("trend test needs >= 3 points, got {k}")));
    }
    if k > 10 {
        return Err(Error::BudgetExceeded("exact permutation test limited to 10 points".into()));
    }
    let observed = spearman_rho(x, y);
    let mut perm: Vec<f64> = y.to_vec();
    let mut total = 0u64;
    let mut hits = 0u64;
    permute(&mut perm, 0, &mut |p| {
        total += 1;
        if spearman_rho(x, p) <= observed + 1e-12 {
            hits += 1;
        }
    });
    Ok(hits as f64 / total as f64)
}

fn permute(v: &mut [f64], i: usize, f: &mut impl FnMut(&[f64])) {
    if i == v.len() {
        f(v);
        return;
    }
    for j in i..v.len() {
        v.swap(i, j);
        permute(v, i + 1, f);
        v.swap(i, j);
    }
}

/// Trend statistics for a sequence of KS distances along an ascending grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    pub spearman_rho: f64,
    /// Exact one-sided permutation p-value for a decrease.
    pub spearman_p: f64,
    /// Weighted least-squares slope of KS against `ln N`.
    pub slope: f64,
    pub slope_stderr: f64,
    /// One-sided p-value of `slope < 0` (normal reference, weights from
    /// the per-point standard errors).
    pub slope_p: f64,
    /// Largest step up between consecutive points, in units of the
    /// combined standard error.
    pub max_increase_sigma: f64,
}

/// Decreasing-trend tests on `values` (with standard errors `stderr`) over
/// the ascending grid `n_grid`.
pub fn decreasing_trend(n_grid: &[usize], values: &[f64], stderr: &[f64]) -> Result<TrendTest> {
    let k = n_grid.len();
    if k < 3 || values.len() != k || stderr.len() != k {
        return Err(Error::InvalidGrid(format!("trend test needs >= 3 points, got {k}")));
    }
    let x: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let rho = spearman_rho(&x, values);
    let p = spearman_decreasing_p(&x, values)?;
    let w: Vec<f64> = stderr.iter().map(|s| 1.0 / (s * s).max(1e-300)).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(values).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = w.iter().zip(&x).zip(values).map(|((w, x), y)| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let slope_stderr = (1.0 / sxx).sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let slope_p = std_normal.cdf(slope / slope_stderr);
    let max_increase_sigma = (1..k)
        .map(|i| (values[i] - values[i - 1]) / (stderr[i].powi(2) + stderr[i - 1].powi(2)).sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TrendTest { spearman_rho: rho, spearman_p: p, slope, slope_stderr, slope_p, max_increase_sigma })
}

/// Pearson chi-square test of equal cell probabilities.
pub fn chi_square_uniform(counts: &[u64]) -> Result<(f64, f64)> {
    if counts.len() < 2 {
        return Err(Error::InvalidInput("chi-square needs >= 2 cells".into()));
    }
    let total: u64 = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("positive degrees of freedom");
    Ok((stat, 1.0 - dist.cdf(stat)))
}

/// Two-sided p-value of a Student t statistic.
pub fn t_test_p(t: f64, dof: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Lag-1 autocorrelation.
pub fn lag1_autocorrelation(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 3 {
        return f64::NAN;
    }
    pearson(&v[..n - 1], &v[1..])
}

/// Centred statistics for `count` states: independent draws for ITE,
/// decorrelated chain samples for RITE (one chain per chunk of
/// [`GAUSS_CHAIN_CHUNK`] samples).
pub fn sample_statistics(
    ensemble: Ensemble,
    n: usize,
    count: usize,
    table: &CalibrationTable,
    k_max: usize,
    stream: RngStream,
) -> Result<Vec<TraceVector>> {
    use rayon::prelude::*;
    let chunks: Vec<usize> = (0..count.div_ceil(GAUSS_CHAIN_CHUNK)).collect();
    let parts: Vec<Result<Vec<TraceVector>>> = chunks
        .par_iter()
        .map(|&c| {
            let len = GAUSS_CHAIN_CHUNK.min(count - c * GAUSS_CHAIN_CHUNK);
            let sub = stream.child(c as u64);
            let mut out = Vec::with_capacity(len);
            match ensemble {
                Ensemble::Ite => {
                    let mut rng = sub.rng();
                    for _ in 0..len {
                        let h = ensemble::sample_ite(n, &mut rng)?;
                        out.push(chebyshev::centred_statistics(&h, table, k_max)?);
                    }
                }
                Ensemble::Rite => {
                    let mut sampler = RiteSampler::new(n, sub)?;
                    for _ in 0..len {
                        out.push(chebyshev::centred_statistics(sampler.next_sample(), table, k_max)?);
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(count);
    for p in parts {
        all.extend(p?);
    }
    Ok(all)
}

pub const GAUSS_CHAIN_CHUNK: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n_vertices: usize,
    pub diagnostics: GaussDiagnostics,
    /// Lag-1 autocorrelation of `Y_2` along the sample sequence.
    pub lag1_autocorrelation: f64,
    pub calibration: CalibrationTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub ensemble: Ensemble,
    pub scaling: Scaling,
    pub rows: Vec<SweepRow>,
    /// Trend of the `n = 2` KS distance.
    pub trend: TrendTest,
}

impl ConvergenceTable {
    pub const CSV_HEADER: &'static str = "ensemble,N,n,mean,var,skew,kurt,ks,ks_crit_1pct";

    pub fn csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            for c in &r.diagnostics.per_n {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    self.ensemble, r.n_vertices, c.n, c.mean, c.var, c.skew, c.kurt, c.ks, c.ks_crit_1pct
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub ensemble: Ensemble,
    pub n_grid: Vec<usize>,
    pub samples_per_n: usize,
    pub k_max: usize,
    pub scaling: Scaling,
    pub calibration_budget: u64,
}

/// KS standard error under the null, used to weight the trend regression.
/// `√n·D` has limiting mean `√(π/2) ln 2` and variance `π²/12 - (π/2)(ln 2)²`.
pub fn ks_null_stderr(samples: usize) -> f64 {
    let var = std::f64::consts::PI.powi(2) / 12.0
        - std::f64::consts::FRAC_PI_2 * std::f64::consts::LN_2.powi(2);
    (var / samples as f64).sqrt()
}

/// Per-`N` diagnostics plus the KS trend over an ascending grid.
pub fn convergence_sweep(settings: &SweepSettings, stream: RngStream) -> Result<ConvergenceTable> {
    let grid = &settings.n_grid;
    if grid.len() < 3 {
        return Err(Error::InvalidGrid(format!("sweep needs >= 3 grid points, got {}", grid.len())));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidGrid("grid must be strictly ascending".into()));
    }
    let rows: Vec<SweepRow> = grid
        .iter()
        .map(|&n| {
            let point = stream.named(&format!("N={n}"));
            let table = chebyshev::build_calibration(
                settings.ensemble,
                n,
                settings.k_max,
                settings.scaling,
                settings.calibration_budget,
                point.named("calibration"),
            )?;
            let samples = sample_statistics(
                settings.ensemble,
                n,
                settings.samples_per_n,
                &table,
                settings.k_max,
                point.named("samples"),
            )?;
            let y2: Vec<f64> = samples.iter().map(|t| t.get(2)).collect();
            Ok(SweepRow {
                n_vertices: n,
                diagnostics: gaussianity_report(&samples)?,
                lag1_autocorrelation: lag1_autocorrelation(&y2),
                calibration: table,
            })
        })
        .collect::<Result<_>>()?;
    let ks: Vec<f64> = rows.iter().map(|r| r.diagnostics.coordinate(2).ks).collect();
    let se: Vec<f64> = rows.iter().map(|r| ks_null_stderr(r.diagnostics.sample_count)).collect();
    let trend = decreasing_trend(grid, &ks, &se)?;
    Ok(ConvergenceTable { ensemble: settings.ensemble, scaling: settings.scaling, rows, trend })
}

/// Exact `N(0, n)` rows for self-tests of the diagnostics.
pub fn gaussian_rows(count: usize, k_max: usize, stream: RngStream) -> Vec<Vec<f64>> {
    let mut rng = stream.rng();
    (0..count)
        .map(|_| {
            (2..=k_max)
                .map(|n| {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    z * (n as f64).sqrt()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_one_and_two_points() {
        let law = Normal::new(0.0, 1.0).unwrap();
        let d = ks_statistic(&[0.3], |x| law.cdf(x));
        assert!((d - law.cdf(0.3).max(1.0 - law.cdf(0.3))).abs() < 1e-15);
        let (a, b) = (-0.5, 1.2);
        let d2 = ks_statistic(&[b, a], |x| law.cdf(x));
        let (fa, fb) = (law.cdf(a), law.cdf(b));
        let want = fa.max(0.5 - fa).max(fb - 0.5).max(1.0 - fb);
        assert!((d2 - want).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_distribution() {
        assert!((kolmogorov_cdf(1.3581) - 0.95).abs() < 1e-3);
        assert!((kolmogorov_cdf(1.6276) - 0.99).abs() < 1e-3);
        // Both series agree where they meet.
        let lo = {
            let x: f64 = 0.3;
            let t = std::f64::consts::PI.powi(2) / (8.0 * x * x);
            (2.0 * std::f64::consts::PI).sqrt() / x
                * (1..=50).map(|k| (-((2 * k - 1) as f64).powi(2) * t).exp()).sum::<f64>()
        };
        assert!((lo - kolmogorov_cdf(0.3)).abs() < 1e-10);
    }

    #[test]
    fn gaussian_self_test() {
        let rows = gaussian_rows(4000, 4, RngStream::root(11));
        let g = gaussianity_report_rows(&rows).unwrap();
        for c in &g.per_n {
            assert!(c.ks < c.ks_crit_1pct, "{c:?}");
            assert!((c.var / c.n as f64 - 1.0).abs() < 0.1);
        }
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(g.covariance[a][b], g.covariance[b][a]);
                if a != b {
                    assert!(g.covariance[a][b].abs() < 3.5 * g.covariance_stderr[a][b]);
                }
            }
        }
    }

    #[test]
    fn too_few_samples() {
        let rows = gaussian_rows(100, 3, RngStream::root(0));
        assert!(matches!(gaussianity_report_rows(&rows), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn spearman_exact_p() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman_decreasing_p(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap() - 1.0 / 24.0).abs() < 1e-12);
        assert!((spearman_decreasing_p(&x[..3], &[3.0, 2.0, 1.0]).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(spearman_rho(&x, &[1.0, 2.0, 3.0, 4.0]), 1.0);
    }

    #[test]
    fn ols_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = ols(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-12);
    }

    #[test]
    fn chi_square_flat_counts() {
        let (stat, p) = chi_square_uniform(&[100, 100, 100]).unwrap();
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_rejects_short_grid() {
        let s = SweepSettings {
            ensemble: Ensemble::Ite,
            n_grid: vec![10],
            samples_per_n: 500,
            k_max: 3,
            scaling: Scaling::Theorem,
            calibration_budget: 1000,
        };
        assert!(matches!(convergence_sweep(&s, RngStream::root(0)), Err(Error::InvalidGrid(_))));
    }
}
