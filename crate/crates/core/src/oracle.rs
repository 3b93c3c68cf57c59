//! Exhaustive small-N ground truth.
//!
//! Enumerates every tournament (ITE, `N <= 6`) or every regular tournament
//! (RITE, `N <= 7`, or `N = 9` when long runs are enabled), averages
//! functionals exactly, and evaluates the asymptotic count of regular
//! tournaments together with its Fourier integral representation.

use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{self, Ensemble, RiteSampler, TournamentMatrix};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Largest ITE size enumerated exhaustively (`2^15` members).
pub const ITE_CENSUS_MAX: usize = 6;
/// Largest RITE size enumerated by default.
pub const RITE_CENSUS_MAX: usize = 7;
/// Largest RITE size enumerated when long runs are enabled (3 230 080 members).
pub const RITE_CENSUS_LONG_MAX: usize = 9;

/// `TRMT_LONG=1` unlocks the `N = 9` regular census.
pub fn long_runs_enabled() -> bool {
    std::env::var("TRMT_LONG").is_ok_and(|v| !v.is_empty() && v != "0")
}

/// Whether exact averages over the whole ensemble are cheap enough to be the
/// default (ITE `N <= 6`, RITE `N <= 7`).
pub fn census_feasible(ensemble: Ensemble, n: usize) -> bool {
    if ensemble.check_dimension(n).is_err() {
        return false;
    }
    match ensemble {
        Ensemble::Ite => n <= ITE_CENSUS_MAX,
        Ensemble::Rite => n <= RITE_CENSUS_MAX,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleCensus {
    #[serde(rename = "N")]
    pub n: usize,
    pub ensemble: Ensemble,
    #[serde(with = "biguint_string")]
    pub count: BigUint,
    /// Packed upper triangles (see [`TournamentMatrix::from_packed`]);
    /// `None` when the members are generated on the fly.
    #[serde(skip)]
    pub members: Option<Vec<u64>>,
}

mod biguint_string {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl EnsembleCensus {
    /// Full ITE census; members are the integers `0..2^{N(N-1)/2}`.
    pub fn ite(n: usize) -> Result<Self> {
        Ensemble::Ite.check_dimension(n)?;
        Ok(Self {
            n,
            ensemble: Ensemble::Ite,
            count: BigUint::from(1u8) << ensemble::edge_count(n),
            members: None,
        })
    }

    /// Visits every member. Fails for an ITE census too large to walk.
    pub fn for_each(&self, mut f: impl FnMut(&TournamentMatrix)) -> Result<()> {
        match &self.members {
            Some(words) => {
                for &w in words {
                    f(&TournamentMatrix::from_packed(self.n, w)?);
                }
            }
            None => {
                if self.n > ITE_CENSUS_MAX {
                    return Err(Error::BudgetExceeded(format!(
                        "ITE census at N = {} has 2^{} members",
                        self.n,
                        ensemble::edge_count(self.n)
                    )));
                }
                for w in 0..1u64 << ensemble::edge_count(self.n) {
                    f(&TournamentMatrix::from_packed(self.n, w)?);
                }
            }
        }
        Ok(())
    }
}

/// All regular tournaments on `N` vertices, honouring [`long_runs_enabled`].
pub fn enumerate_regular(n: usize) -> Result<EnsembleCensus> {
    let limit = if long_runs_enabled() { RITE_CENSUS_LONG_MAX } else { RITE_CENSUS_MAX };
    enumerate_regular_limited(n, limit)
}

/// All regular tournaments on `N <= max_n` vertices by backtracking over the
/// upper triangle, pruning any vertex whose wins or losses exceed `(N-1)/2`.
pub fn enumerate_regular_limited(n: usize, max_n: usize) -> Result<EnsembleCensus> {
    Ensemble::Rite.check_dimension(n)?;
    let max_n = max_n.min(RITE_CENSUS_LONG_MAX);
    if n > max_n {
        return Err(Error::BudgetExceeded(format!(
            "regular census at N = {n} exceeds the limit N <= {max_n}"
        )));
    }
    let half = (n - 1) / 2;
    // Split on the first row: vertex 0 beats exactly `half` of the others.
    // Prefixes are generated in the same order the sequential search would
    // visit them, so the concatenation below is deterministic.
    let prefixes: Vec<u64> = (0u64..1 << (n - 1))
        .filter(|m| m.count_ones() as usize == half)
        .collect();
    let parts: Vec<Vec<u64>> = prefixes
        .par_iter()
        .map(|&row0| {
            let mut st = Search::new(n);
            for q in 1..n {
                st.assign(0, q, row0 >> (q - 1) & 1 == 1);
            }
            let mut out = Vec::new();
            st.dfs(1, 2, &mut out);
            out
        })
        .collect();
    let members: Vec<u64> = parts.into_iter().flatten().collect();
    Ok(EnsembleCensus {
        n,
        ensemble: Ensemble::Rite,
        count: BigUint::from(members.len()),
        members: Some(members),
    })
}

struct Search {
    n: usize,
    half: usize,
    wins: Vec<usize>,
    losses: Vec<usize>,
    word: u64,
    k: usize,
}

impl Search {
    fn new(n: usize) -> Self {
        Self { n, half: (n - 1) / 2, wins: vec![0; n], losses: vec![0; n], word: 0, k: 0 }
    }

    fn assign(&mut self, p: usize, q: usize, p_wins: bool) {
        if p_wins {
            self.word |= 1 << self.k;
            self.wins[p] += 1;
            self.losses[q] += 1;
        } else {
            self.losses[p] += 1;
            self.wins[q] += 1;
        }
        self.k += 1;
    }

    fn unassign(&mut self, p: usize, q: usize, p_wins: bool) {
        self.k -= 1;
        if p_wins {
            self.word &= !(1 << self.k);
            self.wins[p] -= 1;
            self.losses[q] -= 1;
        } else {
            self.losses[p] -= 1;
            self.wins[q] -= 1;
        }
    }

    fn dfs(&mut self, p: usize, q: usize, out: &mut Vec<u64>) {
        if p + 1 >= self.n {
            out.push(self.word);
            return;
        }
        let (np, nq) = if q + 1 < self.n { (p, q + 1) } else { (p + 1, p + 2) };
        for p_wins in [true, false] {
            let ok = if p_wins {
                self.wins[p] < self.half && self.losses[q] < self.half
            } else {
                self.losses[p] < self.half && self.wins[q] < self.half
            };
            if ok {
                self.assign(p, q, p_wins);
                self.dfs(np, nq, out);
                self.unassign(p, q, p_wins);
            }
        }
    }
}

/// Visits every member of a feasible census (see [`census_feasible`]).
pub fn for_each_member(
    ensemble: Ensemble,
    n: usize,
    f: impl FnMut(&TournamentMatrix),
) -> Result<()> {
    census(ensemble, n)?.for_each(f)
}

fn census(ensemble: Ensemble, n: usize) -> Result<EnsembleCensus> {
    ensemble.check_dimension(n)?;
    match ensemble {
        Ensemble::Ite if n <= ITE_CENSUS_MAX => EnsembleCensus::ite(n),
        Ensemble::Rite => enumerate_regular_cached(n),
        _ => Err(Error::BudgetExceeded(format!("{ensemble} census at N = {n} is not feasible"))),
    }
}

/// `(1/|ensemble|) Σ g(H)` over the whole ensemble.
pub fn exact_expectation(
    ensemble: Ensemble,
    n: usize,
    mut g: impl FnMut(&TournamentMatrix) -> f64,
) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0u64);
    for_each_member(ensemble, n, |h| {
        sum += g(h);
        count += 1;
    })?;
    Ok(sum / count as f64)
}

/// Complex-valued form of [`exact_expectation`].
pub fn exact_expectation_complex(
    ensemble: Ensemble,
    n: usize,
    mut g: impl FnMut(&TournamentMatrix) -> Complex64,
) -> Result<Complex64> {
    let (mut sum, mut count) = (Complex64::new(0.0, 0.0), 0u64);
    for_each_member(ensemble, n, |h| {
        sum += g(h);
        count += 1;
    })?;
    Ok(sum / count as f64)
}

/// A set of directed edges `(p, q)`, `p != q`, no unordered pair repeated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSet {
    edges: Vec<(usize, usize)>,
}

impl EdgeSet {
    pub fn new(edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &(p, q) in &edges {
            if p == q {
                return Err(Error::InvalidInput(format!("loop edge ({p}, {q})")));
            }
            if !seen.insert((p.min(q), p.max(q))) {
                return Err(Error::InvalidInput(format!("edge ({p}, {q}) repeated")));
            }
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn k(&self) -> usize {
        self.edges.len()
    }

    pub fn max_vertex(&self) -> Option<usize> {
        self.edges.iter().map(|&(p, q)| p.max(q)).max()
    }

    fn check_range(&self, n: usize) -> Result<()> {
        match self.max_vertex() {
            Some(v) if v >= n => {
                Err(Error::InvalidInput(format!("edge vertex {v} out of range for N = {n}")))
            }
            _ => Ok(()),
        }
    }

    /// `Π_{(p,q)∈E} S_pq`.
    pub fn sign_product(&self, h: &TournamentMatrix) -> i8 {
        self.edges.iter().map(|&(p, q)| h.sign(p, q)).product()
    }

    /// `i^k`.
    pub fn phase(&self) -> Complex64 {
        Complex64::new(0.0, 1.0).powu(self.k() as u32)
    }

    /// `H_E = Π_{(p,q)∈E} H_pq = i^k Π S_pq`.
    pub fn product(&self, h: &TournamentMatrix) -> Complex64 {
        self.phase() * f64::from(self.sign_product(h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpectationMode {
    #[serde(rename = "EXACT")]
    Exact,
    #[serde(rename = "MC")]
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeExpectation {
    pub value: Complex64,
    pub stderr: f64,
    pub mode: ExpectationMode,
    pub samples: u64,
}

const MC_CHUNK: u64 = 1024;

/// RITE expectation of `H_E`, exactly or from decorrelated chain samples.
pub fn edge_product_expectation(
    n: usize,
    e: &EdgeSet,
    mode: ExpectationMode,
    budget: u64,
    stream: RngStream,
) -> Result<EdgeExpectation> {
    Ensemble::Rite.check_dimension(n)?;
    e.check_range(n)?;
    match mode {
        ExpectationMode::Exact => {
            let c = census(Ensemble::Rite, n)?;
            let (mut sum, mut count) = (0i64, 0u64);
            c.for_each(|h| {
                sum += i64::from(e.sign_product(h));
                count += 1;
            })?;
            Ok(EdgeExpectation {
                value: e.phase() * (sum as f64 / count as f64),
                stderr: 0.0,
                mode,
                samples: count,
            })
        }
        ExpectationMode::MonteCarlo => {
            if budget < 2 {
                return Err(Error::InvalidInput("Monte Carlo needs at least 2 samples".into()));
            }
            let chunks: Vec<u64> = (0..budget.div_ceil(MC_CHUNK)).collect();
            let parts: Vec<Result<(i64, u64)>> = chunks
                .par_iter()
                .map(|&c| {
                    let len = MC_CHUNK.min(budget - c * MC_CHUNK);
                    let mut sampler = RiteSampler::new(n, stream.child(c))?;
                    let mut s = 0i64;
                    for _ in 0..len {
                        s += i64::from(e.sign_product(sampler.next_sample()));
                    }
                    Ok((s, len))
                })
                .collect();
            let mut sum = 0i64;
            for p in parts {
                sum += p?.0;
            }
            // Products are ±1, so the sample variance is 1 - mean^2 (up to m/(m-1)).
            let m = budget as f64;
            let mean = sum as f64 / m;
            let var = (1.0 - mean * mean) * m / (m - 1.0);
            Ok(EdgeExpectation {
                value: e.phase() * mean,
                stderr: (var / m).sqrt(),
                mode,
                samples: budget,
            })
        }
    }
}

/// Natural log of the leading-order asymptotic count of regular tournaments,
/// `2^{(N²-1)/2} e^{-1/2} / (π^{(N-1)/2} N^{N/2-1})`.
pub fn mckay_asymptotic_ln(n: usize) -> Result<f64> {
    Ensemble::Rite.check_dimension(n)?;
    let nf = n as f64;
    Ok((nf * nf - 1.0) / 2.0 * std::f64::consts::LN_2
        - 0.5
        - (nf - 1.0) / 2.0 * std::f64::consts::PI.ln()
        - (nf / 2.0 - 1.0) * nf.ln())
}

pub fn mckay_asymptotic(n: usize) -> Result<f64> {
    Ok(mckay_asymptotic_ln(n)?.exp())
}

/// Exact ITE mean of `Tr T_4(H/σ)` for any `N`.
///
/// Only closed 4-walks with every edge used twice survive the average:
/// `E Tr H⁴ = N(N-1)(2N-3)`, while `Tr H² = N(N-1)` always.
pub fn ite_t4_mean(n: usize, scaling: crate::chebyshev::Scaling) -> Result<f64> {
    Ensemble::Ite.check_dimension(n)?;
    if scaling == crate::chebyshev::Scaling::Lemma && n < 3 {
        return Err(Error::InvalidDimension(format!("lemma scaling needs N >= 3, got {n}")));
    }
    let nf = n as f64;
    let s2 = scaling.sigma(n).powi(2);
    let h4 = nf * (nf - 1.0) * (2.0 * nf - 3.0);
    let h2 = nf * (nf - 1.0);
    Ok(8.0 * h4 / (s2 * s2) - 8.0 * h2 / s2 + nf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntegralMethod {
    #[serde(rename = "GAUSS_LEGENDRE")]
    GaussLegendre,
    #[serde(rename = "RANDOMIZED_LATTICE")]
    RandomizedLattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    /// The prefactored expectation `E[H_E]`.
    pub value: Complex64,
    pub stderr: f64,
    /// The raw angular integral over `[-π/2, π/2]^N`.
    pub integral: f64,
    pub method: IntegralMethod,
    pub points: u64,
}

/// Largest `N` accepted by [`mckay_integral_expectation`].
pub const INTEGRAL_MAX_N: usize = 7;
/// Estimator standard errors above this (on the expectation scale) fail.
pub const INTEGRAL_TOLERANCE: f64 = 1e-2;

/// `Π_{E} sin(θ_p - θ_q) Π_{E^c} cos(θ_p - θ_q)` over all `p < q`.
pub fn angular_integrand(n: usize, e: &EdgeSet, theta: &[f64]) -> f64 {
    let mut in_e = vec![0i8; n * n];
    for &(p, q) in e.edges() {
        in_e[p * n + q] = 1;
        in_e[q * n + p] = -1;
    }
    angular_integrand_with(n, &in_e, theta)
}

fn angular_integrand_with(n: usize, in_e: &[i8], theta: &[f64]) -> f64 {
    let mut prod = 1.0;
    for p in 0..n {
        for q in p + 1..n {
            let x = theta[p] - theta[q];
            prod *= match in_e[p * n + q] {
                1 => x.sin(),
                -1 => -x.sin(),
                _ => x.cos(),
            };
        }
    }
    prod
}

/// `E_{R_N}[H_E]` from the Fourier representation of the row-sum constraint:
///
/// `E[H_E] = (-1)^k 2^{N(N-1)/2} / (π^N |R_N|) · I`,
///
/// with `I` the integral of [`angular_integrand`] over `[-π/2, π/2]^N`.
/// The integrand depends only on angle differences and is `π`-periodic in
/// every angle, so `θ_{N-1}` is pinned to zero and `I = π · I'` with `I'` an
/// `(N-1)`-dimensional integral. `I'` uses tensor Gauss–Legendre for
/// `N <= 5` and a randomly shifted rank-1 lattice for `N = 7`; `mc_points`
/// is the lattice budget and is ignored by the tensor rule.
pub fn mckay_integral_expectation(
    n: usize,
    e: &EdgeSet,
    mc_points: u64,
    stream: RngStream,
) -> Result<IntegralEstimate> {
    Ensemble::Rite.check_dimension(n)?;
    e.check_range(n)?;
    if n > INTEGRAL_MAX_N {
        return Err(Error::BudgetExceeded(format!(
            "integral representation limited to N <= {INTEGRAL_MAX_N}"
        )));
    }
    let regular = census(Ensemble::Rite, n)?.count;
    let regular: f64 = regular.to_string().parse().expect("census count is a decimal integer");
    let ln_scale = ensemble::edge_count(n) as f64 * std::f64::consts::LN_2
        - n as f64 * std::f64::consts::PI.ln()
        - regular.ln();
    // Includes the factor π from the pinned angle.
    let scale = ln_scale.exp() * std::f64::consts::PI;
    let sign = if e.k().is_multiple_of(2) { 1.0 } else { -1.0 };

    let mut in_e = vec![0i8; n * n];
    for &(p, q) in e.edges() {
        in_e[p * n + q] = 1;
        in_e[q * n + p] = -1;
    }
    let dim = n - 1;
    let f = |x: &[f64]| {
        let mut theta = x.to_vec();
        theta.push(0.0);
        angular_integrand_with(n, &in_e, &theta)
    };

    let (reduced, err, method, points) = if n <= 5 {
        let (coarse, _) = tensor_gauss_legendre(dim, 12, &f);
        let (fine, abs_sum) = tensor_gauss_legendre(dim, 20, &f);
        let floor = 64.0 * f64::EPSILON * abs_sum;
        (fine, (fine - coarse).abs().max(floor), IntegralMethod::GaussLegendre, 20u64.pow(dim as u32))
    } else {
        const SHIFTS: u64 = 16;
        let per_shift = next_prime((mc_points / SHIFTS).max(257));
        let z = korobov_generator(per_shift, dim);
        let mut rng = stream.rng();
        let estimates: Vec<(f64, f64)> = (0..SHIFTS)
            .map(|_| {
                let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
                lattice_rule(per_shift, &z, &shift, &f)
            })
            .collect();
        let r = SHIFTS as f64;
        let mean = estimates.iter().map(|e| e.0).sum::<f64>() / r;
        let var = estimates.iter().map(|e| (e.0 - mean).powi(2)).sum::<f64>() / (r - 1.0);
        let abs_sum = estimates.iter().map(|e| e.1).sum::<f64>() / r;
        let floor = 64.0 * f64::EPSILON * abs_sum;
        (mean, (var / r).sqrt().max(floor), IntegralMethod::RandomizedLattice, SHIFTS * per_shift)
    };

    let integral = std::f64::consts::PI * reduced;
    let value = sign * scale * reduced;
    let stderr = scale * err;
    if !value.is_finite() || stderr > INTEGRAL_TOLERANCE {
        return Err(Error::NumericalFailure(format!(
            "integral estimate {value} has standard error {stderr} above {INTEGRAL_TOLERANCE}"
        )));
    }
    Ok(IntegralEstimate { value: Complex64::new(value, 0.0), stderr, integral, method, points })
}

/// Tensor Gauss–Legendre over `[-π/2, π/2]^dim`; returns the integral and
/// the integral of `|f|` (a rounding-error scale).
fn tensor_gauss_legendre(dim: usize, order: usize, f: &impl Fn(&[f64]) -> f64) -> (f64, f64) {
    let rule = gauss_quad::GaussLegendre::new(order.try_into().expect("order > 0"));
    let half = std::f64::consts::FRAC_PI_2;
    let nodes: Vec<(f64, f64)> =
        rule.as_node_weight_pairs().iter().map(|&(x, w)| (half * x, half * w)).collect();
    let total = order.pow(dim as u32);
    let (mut sum, mut abs_sum) = (0.0, 0.0);
    let mut x = vec![0.0; dim];
    for idx in 0..total {
        let mut rem = idx;
        let mut w = 1.0;
        for xi in x.iter_mut() {
            let (node, weight) = nodes[rem % order];
            *xi = node;
            w *= weight;
            rem /= order;
        }
        let v = f(&x);
        sum += w * v;
        abs_sum += w * v.abs();
    }
    (sum, abs_sum)
}

/// Shifted rank-1 lattice rule over `[-π/2, π/2]^dim` for a `π`-periodic
/// integrand; returns the integral and the integral of `|f|`.
fn lattice_rule(m: u64, z: &[u64], shift: &[f64], f: &impl Fn(&[f64]) -> f64) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    let vol = pi.powi(z.len() as i32);
    let (mut sum, mut abs_sum) = (0.0, 0.0);
    let mut x = vec![0.0; z.len()];
    for i in 0..m {
        for ((xi, &zj), &s) in x.iter_mut().zip(z).zip(shift) {
            let u = ((i * zj % m) as f64 / m as f64 + s).fract();
            *xi = pi * u - pi / 2.0;
        }
        let v = f(&x);
        sum += v;
        abs_sum += v.abs();
    }
    (vol * sum / m as f64, vol * abs_sum / m as f64)
}

fn next_prime(mut m: u64) -> u64 {
    let is_prime = |v: u64| v >= 2 && (2..).take_while(|d| d * d <= v).all(|d| !v.is_multiple_of(d));
    while !is_prime(m) {
        m += 1;
    }
    m
}

/// Korobov generator `(1, a, a², ...) mod m` minimising the `P_2` figure of
/// merit over a fixed candidate set.
fn korobov_generator(m: u64, dim: usize) -> Vec<u64> {
    let gen = |a: u64| {
        let mut z = Vec::with_capacity(dim);
        let mut v = 1u64;
        for _ in 0..dim {
            z.push(v);
            v = v * a % m;
        }
        z
    };
    let b2 = |x: f64| x * x - x + 1.0 / 6.0;
    let p2 = |z: &[u64]| {
        let two_pi2 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
        let s: f64 = (0..m)
            .map(|i| z.iter().map(|&zj| 1.0 + two_pi2 * b2((i * zj % m) as f64 / m as f64)).product::<f64>())
            .sum();
        s / m as f64 - 1.0
    };
    let step = (m / 256).max(1);
    (2..m)
        .step_by(step as usize)
        .map(|a| {
            let z = gen(a);
            (p2(&z), a)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
        .map(|(_, a)| gen(a))
        .unwrap_or_else(|| gen(1))
}

/// Cache location from `TRMT_CACHE_DIR`, if set.
pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os("TRMT_CACHE_DIR").filter(|v| !v.is_empty()).map(PathBuf::from)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusManifest {
    pub ensemble: Ensemble,
    #[serde(rename = "N")]
    pub n: usize,
    pub count: String,
    /// SHA-256 of the binary member file, hex.
    pub checksum: String,
}

fn cache_paths(dir: &Path, ensemble: Ensemble, n: usize) -> (PathBuf, PathBuf) {
    let stem = format!("{}_{n}", ensemble.as_str().to_ascii_lowercase());
    (dir.join(format!("{stem}.bin")), dir.join(format!("{stem}.json")))
}

/// Writes the members as little-endian `u64` words plus a JSON manifest.
pub fn save_census(census: &EnsembleCensus, dir: &Path) -> Result<CensusManifest> {
    let members = census.members.as_ref().ok_or_else(|| {
        Error::InvalidInput("only materialised censuses can be cached".into())
    })?;
    std::fs::create_dir_all(dir)?;
    let bytes: Vec<u8> = members.iter().flat_map(|w| w.to_le_bytes()).collect();
    let manifest = CensusManifest {
        ensemble: census.ensemble,
        n: census.n,
        count: census.count.to_string(),
        checksum: hex::encode(Sha256::digest(&bytes)),
    };
    let (bin, json) = cache_paths(dir, census.ensemble, census.n);
    std::fs::write(bin, &bytes)?;
    std::fs::write(json, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Loads a cached census, returning `None` if it is missing or corrupt.
pub fn load_census(dir: &Path, ensemble: Ensemble, n: usize) -> Result<Option<EnsembleCensus>> {
    let (bin, json) = cache_paths(dir, ensemble, n);
    if !bin.exists() || !json.exists() {
        return Ok(None);
    }
    let manifest: CensusManifest = serde_json::from_str(&std::fs::read_to_string(json)?)?;
    let bytes = std::fs::read(bin)?;
    if manifest.n != n
        || manifest.ensemble != ensemble
        || bytes.len() % 8 != 0
        || hex::encode(Sha256::digest(&bytes)) != manifest.checksum
        || manifest.count != (bytes.len() / 8).to_string()
    {
        return Ok(None);
    }
    let members: Vec<u64> = bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Some(EnsembleCensus {
        n,
        ensemble,
        count: BigUint::from(members.len()),
        members: Some(members),
    }))
}

/// [`enumerate_regular`] through the `TRMT_CACHE_DIR` cache when set.
pub fn enumerate_regular_cached(n: usize) -> Result<EnsembleCensus> {
    let Some(dir) = cache_dir() else {
        return enumerate_regular(n);
    };
    if let Some(c) = load_census(&dir, Ensemble::Rite, n)? {
        return Ok(c);
    }
    let c = enumerate_regular(n)?;
    save_census(&c, &dir)?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_regular(n: usize) -> Vec<u64> {
        (0u64..1 << ensemble::edge_count(n))
            .filter(|&w| TournamentMatrix::from_packed(n, w).unwrap().is_regular())
            .collect()
    }

    #[test]
    fn ite_t4_mean_matches_census() {
        use crate::chebyshev::{chebyshev_trace, Scaling};
        for n in 3..=6 {
            for scaling in [Scaling::Theorem, Scaling::Lemma] {
                let exact =
                    exact_expectation(Ensemble::Ite, n, |h| chebyshev_trace(h, 4, scaling).unwrap()).unwrap();
                assert!((exact - ite_t4_mean(n, scaling).unwrap()).abs() < 1e-10, "N={n} {scaling}");
            }
        }
        let lemma = ite_t4_mean(9, crate::chebyshev::Scaling::Lemma).unwrap();
        assert!((lemma + 9.0 * 6.0 / (2.0 * 49.0)).abs() < 1e-12);
    }

    #[test]
    fn small_regular_counts() {
        assert_eq!(enumerate_regular(3).unwrap().count, BigUint::from(2u8));
        let c5 = enumerate_regular(5).unwrap();
        assert_eq!(c5.count, BigUint::from(24u8));
        let mut members = c5.members.unwrap();
        members.sort_unstable();
        assert_eq!(members, brute_force_regular(5));
    }

    #[test]
    fn census_errors() {
        assert!(matches!(enumerate_regular(6), Err(Error::ParityViolation(_))));
        assert!(matches!(enumerate_regular_limited(9, 7), Err(Error::BudgetExceeded(_))));
        assert!(matches!(enumerate_regular_limited(11, 99), Err(Error::BudgetExceeded(_))));
        assert!(!census_feasible(Ensemble::Ite, 7));
        assert!(census_feasible(Ensemble::Rite, 7));
        assert!(!census_feasible(Ensemble::Rite, 6));
    }

    #[test]
    fn ite_census_size() {
        let c = EnsembleCensus::ite(4).unwrap();
        assert_eq!(c.count, BigUint::from(64u8));
        let mut seen = 0;
        c.for_each(|_| seen += 1).unwrap();
        assert_eq!(seen, 64);
    }

    #[test]
    fn exact_expectations() {
        for (ens, n) in [(Ensemble::Ite, 4), (Ensemble::Rite, 5)] {
            assert_eq!(exact_expectation(ens, n, |_| 1.0).unwrap(), 1.0);
            let single = EdgeSet::new(vec![(0, 1)]).unwrap();
            let m = exact_expectation_complex(ens, n, |h| single.product(h)).unwrap();
            assert_eq!(m, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn edge_set_validation() {
        assert!(EdgeSet::new(vec![(1, 1)]).is_err());
        assert!(EdgeSet::new(vec![(0, 1), (1, 0)]).is_err());
        let e = EdgeSet::new(vec![(0, 6)]).unwrap();
        assert!(edge_product_expectation(5, &e, ExpectationMode::Exact, 0, RngStream::root(0)).is_err());
    }

    #[test]
    fn two_path_expectation() {
        // E[S01 S02] = -1/(N-2) on regular tournaments, so E[H_E] = 1/(N-2).
        let e = EdgeSet::new(vec![(0, 1), (0, 2)]).unwrap();
        for n in [3usize, 5, 7] {
            let x = edge_product_expectation(n, &e, ExpectationMode::Exact, 0, RngStream::root(0))
                .unwrap();
            assert!((x.value.re - 1.0 / (n as f64 - 2.0)).abs() < 1e-12, "N = {n}");
            assert_eq!(x.value.im, 0.0);
        }
    }

    #[test]
    fn mckay_leading_term() {
        let r7 = mckay_asymptotic(7).unwrap() / 2640.0;
        assert!(r7 > 0.8 && r7 < 1.2);
        let r5 = mckay_asymptotic(5).unwrap() / 24.0;
        assert!((r5 - 1.0).abs() > (r7 - 1.0).abs());
        // Dominant term: (N²-1)/2 bits.
        let n = 201usize;
        let bits = mckay_asymptotic_ln(n).unwrap() / std::f64::consts::LN_2;
        let lead = ((n * n - 1) / 2) as f64;
        assert!(bits < lead && bits > 0.9 * lead);
        assert!(mckay_asymptotic(4).is_err());
    }

    #[test]
    fn integral_identity_empty_edge_set() {
        let empty = EdgeSet::new(vec![]).unwrap();
        for n in [3usize, 5] {
            let r = mckay_integral_expectation(n, &empty, 0, RngStream::root(1)).unwrap();
            assert!((r.value.re - 1.0).abs() < 1e-10, "N = {n}: {:?}", r);
        }
    }

    #[test]
    fn periodic_trapezoid_is_exact() {
        // The integrand is a trigonometric polynomial of degree (N-1)/2 in
        // e^{2iθ_p}; an equispaced rule with (N-1)/2 + 1 points per angle
        // integrates it exactly.
        let n = 5usize;
        let e = EdgeSet::new(vec![(0, 1), (0, 2)]).unwrap();
        let m = (n - 1) / 2 + 1;
        let pi = std::f64::consts::PI;
        let mut sum = 0.0;
        for idx in 0..m.pow(n as u32 - 1) {
            let mut rem = idx;
            let mut theta = vec![0.0; n];
            for t in theta.iter_mut().take(n - 1) {
                *t = pi * (rem % m) as f64 / m as f64;
                rem /= m;
            }
            sum += angular_integrand(n, &e, &theta);
        }
        let reduced = sum * pi.powi(n as i32 - 1) / m.pow(n as u32 - 1) as f64;
        let scale = 2f64.powi(10) / (pi.powi(5) * 24.0) * pi;
        assert!((scale * reduced - 1.0 / 3.0).abs() < 1e-12);
        let quad = mckay_integral_expectation(n, &e, 0, RngStream::root(0)).unwrap();
        assert!((quad.value.re - scale * reduced).abs() < 1e-10);
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let c = enumerate_regular(5).unwrap();
        let m = save_census(&c, dir.path()).unwrap();
        assert_eq!(m.count, "24");
        let back = load_census(dir.path(), Ensemble::Rite, 5).unwrap().unwrap();
        assert_eq!(back, c);
        let (bin, _) = cache_paths(dir.path(), Ensemble::Rite, 5);
        let mut bytes = std::fs::read(&bin).unwrap();
        bytes[0] ^= 1;
        std::fs::write(&bin, bytes).unwrap();
        assert!(load_census(dir.path(), Ensemble::Rite, 5).unwrap().is_none());
    }
}
