//! Ornstein–Uhlenbeck generator, semigroup and Stein equation for the
//! product Gaussian `⊗_n N(0, n)`, `n = 2..=k_max`.
//!
//! Points `X` are slices with `X[i]` the coordinate of index `n = i + 2`.
//! The generator is `A = Σ_n [n² ∂²_n - n X_n ∂_n]`, whose semigroup moves
//! coordinate `n` as `X_n e^{-nt} + √(1 - e^{-2nt}) Z_n`, `Z_n ~ N(0, n)`.
//! The Stein equation `A f = E[φ(Z)] - φ` is solved by
//! `f(X) = ∫_0^∞ (P_t φ(X) - E[φ(Z)]) dt`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A scalar functional of the coordinates `(X_2, ..., X_{k_max})`.
pub trait Functional: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Functional for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuSpec {
    pub k_min: usize,
    pub k_max: usize,
}

impl OuSpec {
    pub fn new(k_max: usize) -> Result<Self> {
        if k_max < 2 {
            return Err(Error::InvalidInput(format!("k_max must be >= 2, got {k_max}")));
        }
        Ok(Self { k_min: 2, k_max })
    }

    pub fn dim(&self) -> usize {
        self.k_max - self.k_min + 1
    }

    /// Rate (and stationary variance) of coordinate `i`.
    pub fn rate(&self, i: usize) -> f64 {
        (i + self.k_min) as f64
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Relative finite-difference step, scaled by `1 + |X|`.
pub const DEFAULT_FD_STEP: f64 = 1e-3;

fn step_for(x: &[f64], rel: f64) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    rel * (1.0 + norm)
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericalFailure("non-finite functional value".into()))
    }
}

/// First and second derivative of `f` along coordinate `i` by central
/// differences, Richardson-extrapolated from steps `h` and `h/2`.
fn axis_derivatives(f: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], i: usize, h: f64) -> Result<(f64, f64)> {
    let mut y = x.to_vec();
    let mut at = |d: f64| -> Result<f64> {
        y[i] = x[i] + d;
        finite(f(&y)?)
    };
    let f0 = at(0.0)?;
    let (p1, m1) = (at(h)?, at(-h)?);
    let (p2, m2) = (at(h / 2.0)?, at(-h / 2.0)?);
    let d1 = |p: f64, m: f64, s: f64| (p - m) / (2.0 * s);
    let d2 = |p: f64, m: f64, s: f64| (p - 2.0 * f0 + m) / (s * s);
    let first = (4.0 * d1(p2, m2, h / 2.0) - d1(p1, m1, h)) / 3.0;
    let second = (4.0 * d2(p2, m2, h / 2.0) - d2(p1, m1, h)) / 3.0;
    Ok((first, second))
}

fn generator_with(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    spec: &OuSpec,
    h: Option<f64>,
) -> Result<f64> {
    spec.check(x)?;
    let h = h.unwrap_or_else(|| step_for(x, DEFAULT_FD_STEP));
    let mut total = 0.0;
    for i in 0..spec.dim() {
        let n = spec.rate(i);
        let (d1, d2) = axis_derivatives(f, x, i, h)?;
        total += n * n * d2 - n * x[i] * d1;
    }
    finite(total)
}

/// `Af(X)` by finite differences; `h` defaults to `10⁻³ (1 + |X|)`.
pub fn apply_generator(f: &dyn Functional, x: &[f64], spec: &OuSpec, h: Option<f64>) -> Result<f64> {
    generator_with(&|y| Ok(f.eval(y)), x, spec, h)
}

/// One draw of the OU transition from `x` over time `t`.
pub fn ou_transition_sample<R: Rng + ?Sized>(x: &[f64], t: f64, spec: &OuSpec, rng: &mut R) -> Result<Vec<f64>> {
    spec.check(x)?;
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidInput(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(x.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let n = spec.rate(i);
            let z: f64 = rng.sample(StandardNormal);
            xi * (-n * t).exp() + (-(-2.0 * n * t).exp_m1()).sqrt() * n.sqrt() * z
        })
        .collect())
}

/// Quadrature for the Stein solution: a tensor Gauss–Hermite rule for the
/// Gaussian expectation and tanh-sinh nodes on `[0, T]` for time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub hermite_order: usize,
    /// Standard-normal nodes and weights of the one-dimensional rule.
    pub hermite: Vec<(f64, f64)>,
    /// Time horizon, chosen so that `e^{-k_min T} = tolerance_horizon`.
    pub horizon: f64,
    /// Fine tanh-sinh rule on `[0, T]`.
    pub time_nodes: Vec<(f64, f64)>,
    /// Nested coarse rule (every other node), used for the refinement check.
    pub coarse_time_nodes: Vec<(f64, f64)>,
    /// Largest accepted fine/coarse disagreement.
    pub tolerance: f64,
    pub probes: Vec<Vec<f64>>,
}

pub const DEFAULT_HERMITE_ORDER: usize = 20;
pub const DEFAULT_TIME_LEVEL: u32 = 5;

impl QuadratureGrid {
    pub fn new(spec: &OuSpec, hermite_order: usize, level: u32, tolerance: f64) -> Result<Self> {
        if hermite_order < 20 {
            return Err(Error::InvalidInput(format!("Hermite order must be >= 20, got {hermite_order}")));
        }
        let rule = gauss_quad::GaussHermite::new(hermite_order.try_into().expect("order > 0"));
        // Weight e^{-x²} → standard normal: ζ = √2 x, weight / √π.
        let hermite = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / std::f64::consts::PI.sqrt()))
            .collect();
        let horizon = 1e12f64.ln() / spec.k_min as f64;
        let (time_nodes, coarse_time_nodes) = tanh_sinh(horizon, level);
        Ok(Self {
            hermite_order,
            hermite,
            horizon,
            time_nodes,
            coarse_time_nodes,
            tolerance,
            probes: Vec::new(),
        })
    }

    pub fn default_for(spec: &OuSpec) -> Self {
        Self::new(spec, DEFAULT_HERMITE_ORDER, DEFAULT_TIME_LEVEL, 1e-9).expect("default grid is valid")
    }

    pub fn with_probes(mut self, probes: Vec<Vec<f64>>) -> Self {
        self.probes = probes;
        self
    }

    /// Tensor-product nodes `(ζ, w)` in `dim` dimensions.
    fn tensor(&self, dim: usize) -> Vec<(Vec<f64>, f64)> {
        let q = self.hermite.len();
        (0..q.pow(dim as u32))
            .map(|mut idx| {
                let mut z = Vec::with_capacity(dim);
                let mut w = 1.0;
                for _ in 0..dim {
                    let (node, weight) = self.hermite[idx % q];
                    z.push(node);
                    w *= weight;
                    idx /= q;
                }
                (z, w)
            })
            .collect()
    }
}

type Nodes = Vec<(f64, f64)>;

/// Tanh-sinh nodes on `[0, T]` with step `2^{-level}`, plus the nested rule
/// with twice the step.
fn tanh_sinh(horizon: f64, level: u32) -> (Nodes, Nodes) {
    let h = 0.5f64.powi(level as i32);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut fine = Vec::new();
    let mut coarse = Vec::new();
    let kmax = (3.5 / h).ceil() as i64;
    for k in -kmax..=kmax {
        let u = k as f64 * h;
        let s = half_pi * u.sinh();
        let c = s.cosh();
        // t = T/2 (1 + tanh s), written to avoid cancellation near t = 0.
        let t = horizon / (1.0 + (-2.0 * s).exp());
        let w = horizon / 2.0 * half_pi * u.cosh() / (c * c);
        if w < 1e-300 || t <= 0.0 || t >= horizon {
            continue;
        }
        fine.push((t, w * h));
        if k % 2 == 0 {
            coarse.push((t, w * 2.0 * h));
        }
    }
    (fine, coarse)
}

/// `E[φ(Z)]` under the tensor rule.
pub fn gaussian_expectation(phi: &dyn Functional, spec: &OuSpec, grid: &QuadratureGrid) -> f64 {
    let nodes = grid.tensor(spec.dim());
    let sd: Vec<f64> = (0..spec.dim()).map(|i| spec.rate(i).sqrt()).collect();
    let mut z = vec![0.0; spec.dim()];
    nodes
        .iter()
        .map(|(zeta, w)| {
            for i in 0..z.len() {
                z[i] = sd[i] * zeta[i];
            }
            w * phi.eval(&z)
        })
        .sum()
}

/// Precomputed pieces of the Stein solution for one `φ`.
pub struct SteinSolver<'a> {
    phi: &'a dyn Functional,
    spec: OuSpec,
    grid: &'a QuadratureGrid,
    nodes: Vec<(Vec<f64>, f64)>,
    mean: f64,
}

impl<'a> SteinSolver<'a> {
    pub fn new(phi: &'a dyn Functional, spec: OuSpec, grid: &'a QuadratureGrid) -> Self {
        let nodes = grid.tensor(spec.dim());
        let mean = gaussian_expectation(phi, &spec, grid);
        Self { phi, spec, grid, nodes, mean }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    fn semigroup(&self, x: &[f64], t: f64) -> f64 {
        let d = self.spec.dim();
        let decay: Vec<f64> = (0..d).map(|i| (-self.spec.rate(i) * t).exp()).collect();
        let spread: Vec<f64> = (0..d)
            .map(|i| {
                let n = self.spec.rate(i);
                (-(-2.0 * n * t).exp_m1() * n).sqrt()
            })
            .collect();
        let mut y = vec![0.0; d];
        self.nodes
            .iter()
            .map(|(zeta, w)| {
                for i in 0..d {
                    y[i] = x[i] * decay[i] + spread[i] * zeta[i];
                }
                w * self.phi.eval(&y)
            })
            .sum()
    }

    /// `f(X)` with the refinement check.
    pub fn solve(&self, x: &[f64]) -> Result<f64> {
        self.spec.check(x)?;
        let g: Vec<f64> = self
            .grid
            .time_nodes
            .par_iter()
            .map(|&(t, _)| self.semigroup(x, t) - self.mean)
            .collect();
        let fine: f64 = g.iter().zip(&self.grid.time_nodes).map(|(v, (_, w))| v * w).sum();
        // The coarse nodes are every other fine node, starting from the first
        // fine node whose index in the symmetric sequence is even.
        let coarse = self.coarse_estimate(&g);
        let err = (fine - coarse).abs();
        if !fine.is_finite() || err > self.grid.tolerance * (1.0 + fine.abs()) {
            return Err(Error::NumericalFailure(format!(
                "time quadrature not converged: fine {fine}, coarse {coarse}"
            )));
        }
        Ok(fine)
    }

    fn coarse_estimate(&self, g: &[f64]) -> f64 {
        let mut j = 0;
        let mut total = 0.0;
        for (i, &(t, _)) in self.grid.time_nodes.iter().enumerate() {
            if j < self.grid.coarse_time_nodes.len() && self.grid.coarse_time_nodes[j].0 == t {
                total += g[i] * self.grid.coarse_time_nodes[j].1;
                j += 1;
            }
        }
        total
    }

    /// `Af(X)` for the numerically solved `f`.
    pub fn generator(&self, x: &[f64], h: Option<f64>) -> Result<f64> {
        generator_with(&|y| self.solve(y), x, &self.spec, h)
    }

    /// `|Af(X) - (E[φ(Z)] - φ(X))|`.
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        Ok((self.generator(x, None)? - (self.mean - self.phi.eval(x))).abs())
    }
}

/// `f(X) = ∫_0^T (P_t φ(X) - E[φ(Z)]) dt`.
pub fn solve_stein(phi: &dyn Functional, x: &[f64], spec: &OuSpec, grid: &QuadratureGrid) -> Result<f64> {
    SteinSolver::new(phi, *spec, grid).solve(x)
}

/// One line of a test report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl TestReport {
    pub fn below(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self { name: name.into(), statistic, threshold, pass: statistic.is_finite() && statistic < threshold }
    }
}

/// Monte Carlo check of `E[Af(Z)] = 0`: reports `|mean| / stderr` against 3.
pub fn stein_lemma_mc(
    spec: &OuSpec,
    suite: &[(String, &dyn Functional)],
    samples: usize,
    stream: RngStream,
) -> Result<Vec<TestReport>> {
    const CHUNK: usize = 4096;
    suite
        .iter()
        .enumerate()
        .map(|(k, (name, f))| {
            let sub = stream.child(k as u64);
            let chunks: Vec<usize> = (0..samples.div_ceil(CHUNK)).collect();
            let parts: Vec<Result<(f64, f64)>> = chunks
                .par_iter()
                .map(|&c| {
                    let len = CHUNK.min(samples - c * CHUNK);
                    let mut rng = sub.child(c as u64).rng();
                    let (mut s, mut s2) = (0.0, 0.0);
                    for _ in 0..len {
                        let z: Vec<f64> = (0..spec.dim())
                            .map(|i| spec.rate(i).sqrt() * rng.sample::<f64, _>(StandardNormal))
                            .collect();
                        let a = apply_generator(*f, &z, spec, None)?;
                        s += a;
                        s2 += a * a;
                    }
                    Ok((s, s2))
                })
                .collect();
            let (mut s, mut s2) = (0.0, 0.0);
            for p in parts {
                let (a, b) = p?;
                s += a;
                s2 += b;
            }
            let m = samples as f64;
            let mean = s / m;
            let var = ((s2 - m * mean * mean) / (m - 1.0)).max(0.0);
            let se = (var / m).sqrt();
            let z = if se > 0.0 { mean.abs() / se } else if mean == 0.0 { 0.0 } else { f64::INFINITY };
            Ok(TestReport::below(format!("stein_lemma:{name}"), z, 3.0))
        })
        .collect()
}

/// Constant of the derivative bound in the form derived in the proof:
/// `(1/√π) 2^{j-3} Γ(j/2)² / (j-1)!`.
pub fn function_bound_constant(j: usize) -> f64 {
    let jf = j as f64;
    2f64.powf(jf - 3.0) * gamma(jf / 2.0).powi(2) / (gamma(jf) * std::f64::consts::PI.sqrt())
}

/// The same constant with `Γ(k/2)²/(k-1)!` as printed in the statement.
pub fn function_bound_constant_k_form(j: usize, k: usize) -> f64 {
    let (jf, kf) = (j as f64, k as f64);
    2f64.powf(jf - 3.0) * gamma(kf / 2.0).powi(2) / (gamma(kf) * std::f64::consts::PI.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionBoundReport {
    pub j: usize,
    /// `max_probe max_index |∂^j f|`.
    pub derivative_norm: f64,
    /// `max_probe max_index |∂^{j-1} (φ - E[φ])|`.
    pub phi_norm: f64,
    pub constant: f64,
    pub constant_k_form: f64,
    pub holds: bool,
    pub holds_k_form: bool,
}

/// Mixed partial `∂^{idx} g` by nested central differences, Richardson
/// extrapolated over `h` and `h/2`.
fn mixed_partial(g: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], idx: &[usize], h: f64) -> Result<f64> {
    fn nested(g: &dyn Fn(&[f64]) -> Result<f64>, x: &mut Vec<f64>, idx: &[usize], h: f64) -> Result<f64> {
        match idx.split_first() {
            None => finite(g(x)?),
            Some((&i, rest)) => {
                let orig = x[i];
                x[i] = orig + h;
                let p = nested(g, x, rest, h)?;
                x[i] = orig - h;
                let m = nested(g, x, rest, h)?;
                x[i] = orig;
                Ok((p - m) / (2.0 * h))
            }
        }
    }
    let mut y = x.to_vec();
    let coarse = nested(g, &mut y, idx, h)?;
    let fine = nested(g, &mut y, idx, h / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    if order == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for prefix in multi_indices(dim, order - 1) {
        let start = prefix.last().copied().unwrap_or(0);
        for i in start..dim {
            let mut v = prefix.clone();
            v.push(i);
            out.push(v);
        }
    }
    out
}

/// Finite-difference check of `‖∇^j f‖ <= C_j ‖∇^{j-1} φ‖` on `probes`,
/// where `f` solves the Stein equation for `φ` and norms are maxima over
/// probes and derivative indices. For `j = 1` the right-hand side uses
/// `φ - E[φ(Z)]`, the part of `φ` that `f` depends on.
pub fn function_bound_check(
    phi: &dyn Functional,
    j: usize,
    spec: &OuSpec,
    grid: &QuadratureGrid,
    probes: &[Vec<f64>],
) -> Result<FunctionBoundReport> {
    if !(1..=3).contains(&j) {
        return Err(Error::InvalidInput(format!("derivative order must be 1, 2 or 3, got {j}")));
    }
    if probes.is_empty() {
        return Err(Error::InvalidInput("no probes".into()));
    }
    let solver = SteinSolver::new(phi, *spec, grid);
    let mean = solver.mean();
    let h = 1e-2;
    let mut derivative_norm: f64 = 0.0;
    let mut phi_norm: f64 = 0.0;
    for x in probes {
        spec.check(x)?;
        for idx in multi_indices(spec.dim(), j) {
            let d = mixed_partial(&|y| solver.solve(y), x, &idx, h)?;
            derivative_norm = derivative_norm.max(d.abs());
        }
        for idx in multi_indices(spec.dim(), j - 1) {
            let d = mixed_partial(&|y| Ok(phi.eval(y) - mean), x, &idx, h)?;
            phi_norm = phi_norm.max(d.abs());
        }
    }
    // Finite-difference noise floor for the comparison.
    let slack = 1e-6;
    let constant = function_bound_constant(j);
    let constant_k_form = function_bound_constant_k_form(j, spec.k_max);
    Ok(FunctionBoundReport {
        j,
        derivative_norm,
        phi_norm,
        constant,
        constant_k_form,
        holds: derivative_norm <= constant * phi_norm + slack,
        holds_k_form: derivative_norm <= constant_k_form * phi_norm + slack,
    })
}

/// Smooth functionals for [`stein_lemma_mc`]: `X_m/m` and `X_m²` for every
/// coordinate, `sin(X_2)`, the Gaussian bump, and a random polynomial of
/// degree at most 4 in the first two coordinates.
pub fn default_f_suite(spec: &OuSpec, stream: RngStream) -> Vec<(String, Box<dyn Functional>)> {
    let mut suite: Vec<(String, Box<dyn Functional>)> = Vec::new();
    for i in 0..spec.dim() {
        let m = spec.rate(i);
        suite.push((format!("X_{m}/{m}"), Box::new(move |x: &[f64]| x[i] / m)));
        suite.push((format!("X_{m}^2"), Box::new(move |x: &[f64]| x[i] * x[i])));
    }
    suite.push(("sin(X_2)".into(), Box::new(|x: &[f64]| x[0].sin())));
    suite.push(("gaussian_bump".into(), Box::new(gaussian_bump)));
    let mut rng = stream.rng();
    let j = spec.dim().min(2) - 1;
    // Monomials X_2^a X_3^b with a + b <= 4.
    let terms: Vec<(i32, i32, f64)> = (0..=4)
        .flat_map(|a| (0..=4 - a).map(move |b| (a, b)))
        .filter(|&(_, b)| j == 1 || b == 0)
        .map(|(a, b)| (a, b, rng.random_range(-1.0..1.0)))
        .collect();
    suite.push((
        "random_quartic".into(),
        Box::new(move |x: &[f64]| terms.iter().map(|&(a, b, c)| c * x[0].powi(a) * x[j].powi(b)).sum()),
    ));
    suite
}

/// `exp(-|X|²/2)`.
pub fn gaussian_bump(x: &[f64]) -> f64 {
    (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp()
}

/// Deterministic probe points with coordinates in `[-2√n, 2√n]`.
pub fn random_probes(spec: &OuSpec, count: usize, stream: RngStream) -> Vec<Vec<f64>> {
    let mut rng = stream.rng();
    (0..count)
        .map(|_| {
            (0..spec.dim())
                .map(|i| (2.0 * rng.random::<f64>() - 1.0) * 2.0 * spec.rate(i).sqrt())
                .collect()
        })
        .collect()
}
