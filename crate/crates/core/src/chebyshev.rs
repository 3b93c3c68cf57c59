//! Chebyshev polynomials of the first kind and the trace statistics built on
//! them.
//!
//! The observables are `Tr T_{2n}(H / σ)` for `H = iS`, evaluated from the
//! spectrum of `H`. Two normalisations are used:
//!
//! * [`Scaling::Theorem`]: `σ = √(4N)`, under which the centred traces are
//!   compared to independent `N(0, n)` variables.
//! * [`Scaling::Lemma`]: `σ = 2√(N-2)`, under which the traces equal a sum
//!   over non-backtracking cycles exactly (see [`crate::nbcycles`]).
//!
//! Centring subtracts an ensemble mean looked up in a [`CalibrationTable`],
//! obtained either by exhaustive enumeration or by Monte Carlo.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{self, Ensemble, TournamentMatrix};
use crate::error::{Error, Result};
use crate::oracle;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scaling {
    /// `H / √(4N)`.
    #[serde(rename = "theorem")]
    Theorem,
    /// `H / (2√(N-2))`.
    #[serde(rename = "lemma")]
    Lemma,
}

impl Scaling {
    pub fn sigma(&self, n: usize) -> f64 {
        match self {
            Scaling::Theorem => (4.0 * n as f64).sqrt(),
            Scaling::Lemma => 2.0 * (n as f64 - 2.0).sqrt(),
        }
    }
}

impl std::str::FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "theorem" => Ok(Scaling::Theorem),
            "lemma" => Ok(Scaling::Lemma),
            other => Err(Error::InvalidInput(format!("unknown scaling {other:?}"))),
        }
    }
}

impl std::fmt::Display for Scaling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scaling::Theorem => "theorem",
            Scaling::Lemma => "lemma",
        })
    }
}

/// Exact integer coefficients of `T_n`: `coeffs[r]` multiplies `x^{n-2r}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChebyshevCoeffs {
    pub degree: usize,
    pub coeffs: Vec<i128>,
}

impl ChebyshevCoeffs {
    pub fn eval(&self, x: f64) -> f64 {
        // Horner in x^2 from the leading coefficient; odd degrees pick up one x.
        let x2 = x * x;
        let mut acc = 0.0;
        for &c in &self.coeffs {
            acc = acc * x2 + c as f64;
        }
        if self.degree % 2 == 1 {
            acc * x
        } else {
            acc
        }
    }
}

/// Coefficients of `T_n` from the three-term recurrence `T_{n+1} = 2x T_n - T_{n-1}`.
pub fn chebyshev_coeffs(n: usize) -> Result<ChebyshevCoeffs> {
    if n == 0 {
        return Err(Error::InvalidDegree("degree must be >= 1".into()));
    }
    if n > 120 {
        return Err(Error::InvalidDegree(format!("degree {n} overflows i128 coefficients")));
    }
    // Dense power-basis coefficients, index = power.
    let mut prev: Vec<i128> = vec![1];
    let mut cur: Vec<i128> = vec![0, 1];
    for _ in 1..n {
        let mut next = vec![0i128; cur.len() + 1];
        for (k, &c) in cur.iter().enumerate() {
            next[k + 1] += 2 * c;
        }
        for (k, &c) in prev.iter().enumerate() {
            next[k] -= c;
        }
        prev = cur;
        cur = next;
    }
    let coeffs = (0..=n / 2).map(|r| cur[n - 2 * r]).collect();
    Ok(ChebyshevCoeffs { degree: n, coeffs })
}

/// Closed form `d_r = (-1)^r (n/2) (n-r-1)! / (r! (n-2r)!) 2^{n-2r}`.
pub fn chebyshev_coeffs_closed_form(n: usize) -> Result<ChebyshevCoeffs> {
    if n == 0 {
        return Err(Error::InvalidDegree("degree must be >= 1".into()));
    }
    if n > 30 {
        return Err(Error::InvalidDegree(format!("closed form limited to n <= 30, got {n}")));
    }
    let fact = |k: usize| -> i128 { (1..=k as i128).product() };
    let coeffs = (0..=n / 2)
        .map(|r| {
            let num = n as i128 * fact(n - r - 1) * (1i128 << (n - 2 * r));
            let den = 2 * fact(r) * fact(n - 2 * r);
            let sign = if r % 2 == 0 { 1 } else { -1 };
            sign * num / den
        })
        .collect();
    Ok(ChebyshevCoeffs { degree: n, coeffs })
}

/// `T_n(x)`: `cos(n arccos x)` on `[-1, 1]`, the recurrence outside.
pub fn chebyshev_t(n: usize, x: f64) -> f64 {
    if x.abs() <= 1.0 {
        (n as f64 * x.acos()).cos()
    } else {
        let (mut a, mut b) = (1.0, x);
        if n == 0 {
            return 1.0;
        }
        for _ in 1..n {
            let c = 2.0 * x * b - a;
            a = b;
            b = c;
        }
        b
    }
}

/// The Hermitian matrix `H = iS` as a dense complex matrix.
pub fn hermitian(h: &TournamentMatrix) -> DMatrix<Complex64> {
    let n = h.n();
    DMatrix::from_fn(n, n, |p, q| Complex64::new(0.0, f64::from(h.sign(p, q))))
}

/// Eigenvalues of `H = iS`, ascending.
///
/// Computed as a complex Hermitian problem. Fails with
/// [`Error::NumericalFailure`] if any eigenvalue is non-finite or the
/// identity `Σ λ² = N(N-1)` is violated beyond `1e-8` relative.
pub fn eigenvalues(h: &TournamentMatrix) -> Result<Vec<f64>> {
    let n = h.n();
    let vals = hermitian(h).symmetric_eigenvalues();
    let mut vals: Vec<f64> = vals.iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite eigenvalue".into()));
    }
    let expected = (n * (n - 1)) as f64;
    let sum_sq: f64 = vals.iter().map(|v| v * v).sum();
    if ((sum_sq - expected) / expected).abs() > 1e-8 {
        return Err(Error::NumericalFailure(format!(
            "eigensolver did not converge: sum of squares {sum_sq} vs {expected}"
        )));
    }
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// `Σ_μ T_degree(λ_μ / σ)` from precomputed eigenvalues.
pub fn trace_from_eigenvalues(eigs: &[f64], degree: usize, sigma: f64) -> f64 {
    eigs.iter().map(|&l| chebyshev_t(degree, l / sigma)).sum()
}

/// `Tr T_degree(H / σ)` for any degree.
pub fn chebyshev_trace(h: &TournamentMatrix, degree: usize, scaling: Scaling) -> Result<f64> {
    let eigs = eigenvalues(h)?;
    Ok(trace_from_eigenvalues(&eigs, degree, scaling.sigma(h.n())))
}

/// Uncentred `Tr T_{2n}(H / σ)` for `n = 1..=k_max`.
pub fn eig_traces(h: &TournamentMatrix, k_max: usize, scaling: Scaling) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Err(Error::InvalidDegree("k_max must be >= 1".into()));
    }
    let eigs = eigenvalues(h)?;
    Ok(traces_from_eigenvalues(&eigs, k_max, scaling.sigma(h.n())))
}

pub fn traces_from_eigenvalues(eigs: &[f64], k_max: usize, sigma: f64) -> Vec<f64> {
    (1..=k_max).map(|n| trace_from_eigenvalues(eigs, 2 * n, sigma)).collect()
}

/// Centred statistics `Y_n`, `n = 2..=k_max`, for one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceVector {
    pub k_max: usize,
    /// `values[i]` is `Y_{i+2}`.
    pub values: Vec<f64>,
    pub scaling: Scaling,
}

impl TraceVector {
    pub fn get(&self, n: usize) -> f64 {
        self.values[n - 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationMethod {
    #[serde(rename = "EXACT_ENUM")]
    ExactEnum,
    #[serde(rename = "MONTE_CARLO")]
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub method: CalibrationMethod,
    pub samples: u64,
}

/// Ensemble means `E[Tr T_{2n}(H/σ)]` for one `(ensemble, N, scaling)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub ensemble: Ensemble,
    #[serde(rename = "N")]
    pub n_vertices: usize,
    pub scaling: Scaling,
    pub seed: u64,
    pub budget: u64,
    pub entries: Vec<CalibrationEntry>,
}

impl CalibrationTable {
    pub fn entry(&self, n: usize) -> Option<&CalibrationEntry> {
        self.entries.iter().find(|e| e.n == n)
    }

    pub fn mean(&self, n: usize) -> Result<f64> {
        self.entry(n).map(|e| e.mean).ok_or_else(|| {
            Error::CalibrationMiss(format!(
                "no entry for ({}, N = {}, n = {n})",
                self.ensemble, self.n_vertices
            ))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `Y_n = Tr T_{2n}(H/σ) - E[...]` for `n = 2..=k_max`, centred with `table`.
pub fn centred_statistics(
    h: &TournamentMatrix,
    table: &CalibrationTable,
    k_max: usize,
) -> Result<TraceVector> {
    if k_max < 2 {
        return Err(Error::InvalidDegree("k_max must be >= 2".into()));
    }
    check_table_matches(h, table)?;
    let means: Vec<f64> = (2..=k_max).map(|n| table.mean(n)).collect::<Result<_>>()?;
    let traces = eig_traces(h, k_max, table.scaling)?;
    Ok(TraceVector {
        k_max,
        values: traces[1..].iter().zip(&means).map(|(t, m)| t - m).collect(),
        scaling: table.scaling,
    })
}

/// Centred value for a single `n >= 1` (including the constant `n = 1`).
pub fn centred_trace(h: &TournamentMatrix, table: &CalibrationTable, n: usize) -> Result<f64> {
    check_table_matches(h, table)?;
    let mean = table.mean(n)?;
    Ok(chebyshev_trace(h, 2 * n, table.scaling)? - mean)
}

fn check_table_matches(h: &TournamentMatrix, table: &CalibrationTable) -> Result<()> {
    if table.n_vertices != h.n() {
        return Err(Error::CalibrationMiss(format!(
            "table is for N = {}, matrix has N = {}",
            table.n_vertices,
            h.n()
        )));
    }
    Ok(())
}

/// Samples per Monte Carlo chunk; fixed so results do not depend on the
/// number of worker threads.
const MC_CHUNK: u64 = 512;

/// Builds the centring table, by exhaustive enumeration when the ensemble is
/// small enough (see [`oracle::census_feasible`]) and by Monte Carlo with
/// `budget` samples otherwise.
pub fn build_calibration(
    ensemble: Ensemble,
    n: usize,
    k_max: usize,
    scaling: Scaling,
    budget: u64,
    stream: RngStream,
) -> Result<CalibrationTable> {
    ensemble.check_dimension(n)?;
    if k_max == 0 {
        return Err(Error::InvalidDegree("k_max must be >= 1".into()));
    }
    let sigma = scaling.sigma(n);
    let entries = if oracle::census_feasible(ensemble, n) {
        let mut sums = vec![0.0; k_max];
        let mut count = 0u64;
        let mut err = None;
        oracle::for_each_member(ensemble, n, |h| {
            if err.is_some() {
                return;
            }
            match eigenvalues(h) {
                Ok(eigs) => {
                    for (s, t) in sums.iter_mut().zip(traces_from_eigenvalues(&eigs, k_max, sigma)) {
                        *s += t;
                    }
                    count += 1;
                }
                Err(e) => err = Some(e),
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        sums.iter()
            .enumerate()
            .map(|(i, s)| CalibrationEntry {
                n: i + 1,
                mean: s / count as f64,
                stderr: 0.0,
                method: CalibrationMethod::ExactEnum,
                samples: count,
            })
            .collect()
    } else {
        if budget < 1000 {
            return Err(Error::InvalidInput(format!(
                "Monte Carlo calibration needs budget >= 1000, got {budget}"
            )));
        }
        let (sums, sq) = mc_trace_moments(ensemble, n, k_max, sigma, budget, stream)?;
        let m = budget as f64;
        sums.iter()
            .zip(&sq)
            .enumerate()
            .map(|(i, (s, q))| {
                let mean = s / m;
                let var = ((q - m * mean * mean) / (m - 1.0)).max(0.0);
                CalibrationEntry {
                    n: i + 1,
                    mean,
                    stderr: (var / m).sqrt(),
                    method: CalibrationMethod::MonteCarlo,
                    samples: budget,
                }
            })
            .collect()
    };
    Ok(CalibrationTable {
        ensemble,
        n_vertices: n,
        scaling,
        seed: stream.seed,
        budget,
        entries,
    })
}

fn mc_trace_moments(
    ensemble: Ensemble,
    n: usize,
    k_max: usize,
    sigma: f64,
    budget: u64,
    stream: RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let chunks: Vec<(u64, u64)> = (0..budget.div_ceil(MC_CHUNK))
        .map(|c| (c, MC_CHUNK.min(budget - c * MC_CHUNK)))
        .collect();
    let partial: Vec<Result<(Vec<f64>, Vec<f64>)>> = chunks
        .par_iter()
        .map(|&(c, len)| {
            let mut sums = vec![0.0; k_max];
            let mut sq = vec![0.0; k_max];
            let mut record = |h: &TournamentMatrix| -> Result<()> {
                let eigs = eigenvalues(h)?;
                for (i, t) in traces_from_eigenvalues(&eigs, k_max, sigma).into_iter().enumerate() {
                    sums[i] += t;
                    sq[i] += t * t;
                }
                Ok(())
            };
            let sub = stream.child(c);
            match ensemble {
                Ensemble::Ite => {
                    let mut rng = sub.rng();
                    for _ in 0..len {
                        record(&ensemble::sample_ite(n, &mut rng)?)?;
                    }
                }
                Ensemble::Rite => {
                    let mut sampler = ensemble::RiteSampler::new(n, sub)?;
                    for _ in 0..len {
                        record(sampler.next_sample())?;
                    }
                }
            }
            Ok((sums, sq))
        })
        .collect();
    let mut sums = vec![0.0; k_max];
    let mut sq = vec![0.0; k_max];
    for p in partial {
        let (s, q) = p?;
        for i in 0..k_max {
            sums[i] += s[i];
            sq[i] += q[i];
        }
    }
    Ok((sums, sq))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t4_coefficients() {
        let c = chebyshev_coeffs(4).unwrap();
        assert_eq!(c.coeffs, vec![8, -8, 1]);
        assert_eq!(chebyshev_coeffs(1).unwrap().coeffs, vec![1]);
        assert_eq!(chebyshev_coeffs_closed_form(4).unwrap().coeffs, vec![8, -8, 1]);
    }

    #[test]
    fn recurrence_matches_closed_form() {
        for n in 1..=20 {
            assert_eq!(
                chebyshev_coeffs(n).unwrap(),
                chebyshev_coeffs_closed_form(n).unwrap(),
                "n = {n}"
            );
        }
    }

    #[test]
    fn coefficient_invariants() {
        for n in 1..=20 {
            let c = chebyshev_coeffs(n).unwrap();
            assert_eq!(c.coeffs.iter().sum::<i128>(), 1, "T_{n}(1) = 1");
            for x in [-0.9, -0.3, 0.2, 0.7] {
                let want = (n as f64 * f64::acos(x)).cos();
                assert!((c.eval(x) - want).abs() < 1e-9, "n = {n}, x = {x}");
                let odd = if n % 2 == 0 { 1.0 } else { -1.0 };
                assert!((c.eval(-x) - odd * c.eval(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degree_zero_rejected() {
        assert!(matches!(chebyshev_coeffs(0), Err(Error::InvalidDegree(_))));
        assert!(matches!(chebyshev_coeffs_closed_form(0), Err(Error::InvalidDegree(_))));
    }

    #[test]
    fn chebyshev_t_outside_unit_interval() {
        for n in 0..12 {
            let c = if n == 0 { None } else { Some(chebyshev_coeffs(n).unwrap()) };
            for x in [-1.7, -1.0, 1.0, 1.3, 2.5] {
                let want = c.as_ref().map_or(1.0, |c| c.eval(x));
                let got = chebyshev_t(n, x);
                assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "n={n} x={x}");
            }
        }
    }

    #[test]
    fn t2_trace_is_constant() {
        let mut rng = RngStream::root(2).rng();
        for n in [4usize, 7, 12] {
            let h = ensemble::sample_ite(n, &mut rng).unwrap();
            let nf = n as f64;
            let lemma = chebyshev_trace(&h, 2, Scaling::Lemma).unwrap();
            let want = nf * (nf - 1.0) / (2.0 * (nf - 2.0)) - nf;
            assert!((lemma - want).abs() < 1e-9);
            let theorem = chebyshev_trace(&h, 2, Scaling::Theorem).unwrap();
            assert!((theorem - ((nf - 1.0) / 2.0 - nf)).abs() < 1e-9);
        }
    }

    #[test]
    fn calibration_miss() {
        let table = CalibrationTable {
            ensemble: Ensemble::Ite,
            n_vertices: 5,
            scaling: Scaling::Lemma,
            seed: 0,
            budget: 0,
            entries: vec![],
        };
        let h = ensemble::seed_regular(5).unwrap();
        assert!(matches!(centred_statistics(&h, &table, 3), Err(Error::CalibrationMiss(_))));
        let h7 = ensemble::seed_regular(7).unwrap();
        assert!(matches!(centred_trace(&h7, &table, 2), Err(Error::CalibrationMiss(_))));
    }

    #[test]
    fn mc_budget_floor() {
        let r = build_calibration(Ensemble::Ite, 9, 3, Scaling::Lemma, 10, RngStream::root(0));
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }
}
