//! Non-backtracking cycles on the complete graph and the cycle expansion of
//! Chebyshev traces.
//!
//! For an `N × N` Hermitian `M` with unimodular off-diagonal entries and zero
//! diagonal,
//!
//! `Tr T_L(M / (2√(N-2))) = ½ (N-2)^{-L/2} [Σ_{ω∈Ω_L} M_ω - ½ N(N-3)(1 + (-1)^L)]`
//!
//! where `Ω_L` is the set of labelled non-backtracking cycles of length `L`
//! (see [`CYCLE_LENGTH_PER_DEGREE`]). The constant follows from the Ihara–Bass
//! formula on `K_N`, which has `N(N-1)/2 - N = N(N-3)/2` more edges than
//! vertices.

use std::collections::BTreeMap;

use num_complex::Complex64;
use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::TournamentMatrix;
use crate::error::{Error, Result};

/// Cycle length paired with `T_n`: the identity holds for cycles of length
/// `n` (not `2n`), as confirmed against eigenvalues in the tests.
pub const CYCLE_LENGTH_PER_DEGREE: usize = 1;

/// Default cap on `N²(N-2)^{L-2}`.
pub const DEFAULT_CYCLE_BUDGET: u64 = 2_000_000_000;

/// Closed walk `p_0 → p_1 → … → p_{L-1} → p_0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NbCycle {
    pub vertices: Vec<usize>,
}

impl NbCycle {
    pub fn new(vertices: Vec<usize>) -> Result<Self> {
        if !is_non_backtracking(&vertices) {
            return Err(Error::InvalidInput(format!("{vertices:?} is not a non-backtracking cycle")));
        }
        Ok(Self { vertices })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Closed edges `(p_i, p_{i+1})`, including the return edge.
    pub fn steps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let l = self.vertices.len();
        (0..l).map(move |i| (self.vertices[i], self.vertices[(i + 1) % l]))
    }
}

/// Cyclic non-backtracking predicate: `p_{i+1} != p_i` and `p_{i+2} != p_i`
/// for every `i`, indices mod `L`.
pub fn is_non_backtracking(v: &[usize]) -> bool {
    let l = v.len();
    l >= 2 && (0..l).all(|i| v[(i + 1) % l] != v[i] && v[(i + 2) % l] != v[i])
}

fn check_enumeration(n: usize, l: usize, budget: u64) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidDimension(format!("cycle enumeration needs N >= 3, got {n}")));
    }
    if l < 2 {
        return Err(Error::InvalidInput(format!("cycle length must be >= 2, got {l}")));
    }
    let work = (n as f64).powi(2) * (n as f64 - 2.0).powi(l as i32 - 2);
    if work > budget as f64 {
        return Err(Error::BudgetExceeded(format!(
            "N²(N-2)^(L-2) = {work:.3e} exceeds budget {budget}"
        )));
    }
    Ok(())
}

/// Depth-first extension from a fixed `(p_0, p_1)`.
fn extend(n: usize, l: usize, path: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    let k = path.len();
    if k == l {
        let (first, second) = (path[0], path[1]);
        if path[l - 1] != first && path[l - 2] != first && path[l - 1] != second {
            visit(path);
        }
        return;
    }
    let (a, b) = (path[k - 2], path[k - 1]);
    for v in 0..n {
        if v != a && v != b {
            path.push(v);
            extend(n, l, path, visit);
            path.pop();
        }
    }
}

/// Streams every labelled non-backtracking cycle of length `l` on `K_n`
/// exactly once; returns the number visited.
pub fn enumerate_nb_cycles(
    n: usize,
    l: usize,
    budget: u64,
    mut visit: impl FnMut(&[usize]),
) -> Result<u64> {
    check_enumeration(n, l, budget)?;
    let mut count = 0u64;
    let mut path = Vec::with_capacity(l);
    for p0 in 0..n {
        for p1 in (0..n).filter(|&p| p != p0) {
            path.clear();
            path.extend([p0, p1]);
            extend(n, l, &mut path, &mut |c| {
                count += 1;
                visit(c)
            });
        }
    }
    Ok(count)
}

/// Parallel fold over all cycles of length `l`, partitioned by `(p_0, p_1)`.
/// Partials are merged in partition order so the result does not depend on
/// scheduling.
pub fn fold_nb_cycles<T, F, M>(n: usize, l: usize, budget: u64, init: T, fold: F, merge: M) -> Result<T>
where
    T: Clone + Send + Sync,
    F: Fn(&mut T, &[usize]) + Sync,
    M: Fn(T, T) -> T,
{
    check_enumeration(n, l, budget)?;
    let starts: Vec<(usize, usize)> =
        (0..n).flat_map(|p0| (0..n).filter(move |&p1| p1 != p0).map(move |p1| (p0, p1))).collect();
    let partials: Vec<T> = starts
        .par_iter()
        .map(|&(p0, p1)| {
            let mut acc = init.clone();
            let mut path = Vec::with_capacity(l);
            path.extend([p0, p1]);
            extend(n, l, &mut path, &mut |c| fold(&mut acc, c));
            acc
        })
        .collect();
    Ok(partials.into_iter().fold(init, merge))
}

/// `Π_i S_{p_i p_{i+1}}` using a dense sign table.
fn sign_product(signs: &[i8], n: usize, c: &[usize]) -> i64 {
    let l = c.len();
    let mut s = 1i64;
    for i in 0..l {
        s *= i64::from(signs[c[i] * n + c[(i + 1) % l]]);
    }
    s
}

fn i_pow(k: usize) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// `H_ω = Π H_{p_i p_{i+1}}` for `H = iS`, including the closing edge.
pub fn cycle_weight(h: &TournamentMatrix, w: &NbCycle) -> Complex64 {
    let s: i64 = w.steps().map(|(p, q)| i64::from(h.sign(p, q))).product();
    i_pow(w.len()) * s as f64
}

/// `Σ_{ω∈Ω_L} H_ω` for `H = iS`, as an exact integer multiple of `i^L`.
pub fn cycle_sum(h: &TournamentMatrix, l: usize, budget: u64) -> Result<Complex64> {
    let n = h.n();
    let signs = h.signs();
    let total = fold_nb_cycles(n, l, budget, 0i64, |acc, c| *acc += sign_product(&signs, n, c), |a, b| a + b)?;
    Ok(i_pow(l) * total as f64)
}

/// Right-hand side of the cycle identity for `T_degree`, complex-valued;
/// the imaginary part vanishes whenever the identity holds.
pub fn cycle_sum_trace_complex(h: &TournamentMatrix, degree: usize, budget: u64) -> Result<Complex64> {
    let n = h.n();
    if n < 3 {
        return Err(Error::InvalidDimension(format!("cycle identity needs N >= 3, got {n}")));
    }
    if degree == 0 {
        return Err(Error::InvalidDegree("degree must be >= 1".into()));
    }
    let l = degree * CYCLE_LENGTH_PER_DEGREE;
    // No closed walk of length 1 exists on a loopless graph.
    let sum = if l < 2 { Complex64::new(0.0, 0.0) } else { cycle_sum(h, l, budget)? };
    let nf = n as f64;
    let parity = if l.is_multiple_of(2) { 2.0 } else { 0.0 };
    let constant = 0.5 * nf * (nf - 3.0) * parity;
    Ok(0.5 * (nf - 2.0).powf(-(l as f64) / 2.0) * (sum - constant))
}

/// `Tr T_degree(H / (2√(N-2)))` evaluated through the cycle expansion.
pub fn cycle_sum_trace(h: &TournamentMatrix, degree: usize, budget: u64) -> Result<f64> {
    Ok(cycle_sum_trace_complex(h, degree, budget)?.re)
}

/// Traversal counts per unordered edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeMultiset {
    pub counts: BTreeMap<(usize, usize), usize>,
}

impl EdgeMultiset {
    pub fn of(w: &NbCycle) -> Self {
        let mut counts = BTreeMap::new();
        for (p, q) in w.steps() {
            *counts.entry((p.min(q), p.max(q))).or_insert(0) += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Edges traversed an odd number of times.
    pub fn free_edges(&self) -> Vec<(usize, usize)> {
        self.counts.iter().filter(|(_, &c)| c % 2 == 1).map(|(&e, _)| e).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleClassification {
    pub edges: EdgeMultiset,
    pub free_edges: Vec<(usize, usize)>,
    /// At least one edge of odd multiplicity.
    pub is_lambda: bool,
    /// Every traversed edge is free and traversed once.
    pub is_star: bool,
    /// `|E| - |V| + components` of the traced subgraph.
    pub betti: usize,
}

pub fn classify_cycle(w: &NbCycle) -> CycleClassification {
    let edges = EdgeMultiset::of(w);
    let free_edges = edges.free_edges();
    let mut vertices: Vec<usize> = w.vertices.clone();
    vertices.sort_unstable();
    vertices.dedup();
    let edge_list: Vec<(usize, usize)> = edges.counts.keys().copied().collect();
    let betti = edge_list.len() + components(&vertices, &edge_list) - vertices.len();
    CycleClassification {
        is_lambda: !free_edges.is_empty(),
        is_star: free_edges.len() == w.len(),
        betti,
        free_edges,
        edges,
    }
}

fn components(vertices: &[usize], edges: &[(usize, usize)]) -> usize {
    let pos = |v: usize| vertices.binary_search(&v).expect("edge endpoint in vertex set");
    let mut uf = UnionFind::<usize>::new(vertices.len());
    for &(p, q) in edges {
        uf.union(pos(p), pos(q));
    }
    let mut labels = uf.into_labeling();
    labels.sort_unstable();
    labels.dedup();
    labels.len()
}

fn vertex_set(edges: &[(usize, usize)]) -> Vec<usize> {
    let mut v: Vec<usize> = edges.iter().flat_map(|&(p, q)| [p, q]).collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn edge_key(&(p, q): &(usize, usize)) -> (usize, usize) {
    (p.min(q), p.max(q))
}

/// Checks `|E(G')| - |V(G')| <= |E(G)| - |V(G)|` for a subgraph `G'` of a
/// connected graph `G`, both given as edge lists.
pub fn subgraph_betti_check(g: &[(usize, usize)], sub: &[(usize, usize)]) -> Result<bool> {
    let mut ge: Vec<(usize, usize)> = g.iter().map(edge_key).collect();
    ge.sort_unstable();
    ge.dedup();
    let mut se: Vec<(usize, usize)> = sub.iter().map(edge_key).collect();
    se.sort_unstable();
    se.dedup();
    let gv = vertex_set(&ge);
    let sv = vertex_set(&se);
    if gv.is_empty() || components(&gv, &ge) != 1 {
        return Err(Error::PreconditionViolation("G must be connected and non-empty".into()));
    }
    if sv.is_empty() {
        return Err(Error::PreconditionViolation("G' must have at least one vertex".into()));
    }
    if let Some(e) = se.iter().find(|e| ge.binary_search(e).is_err()) {
        return Err(Error::PreconditionViolation(format!("edge {e:?} of G' is not in G")));
    }
    let lhs = se.len() as i64 - sv.len() as i64;
    let rhs = ge.len() as i64 - gv.len() as i64;
    Ok(lhs <= rhs)
}

/// Cycle counts by class for one `(N, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleCensusRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub total: u64,
    pub lambda: u64,
    pub lambda_star: u64,
}

impl CycleCensusRow {
    pub const CSV_HEADER: &'static str = "N,L,total,lambda,lambda_star";

    pub fn csv(&self) -> String {
        format!("{},{},{},{},{}", self.n, self.l, self.total, self.lambda, self.lambda_star)
    }
}

pub fn cycle_census(n: usize, l: usize, budget: u64) -> Result<CycleCensusRow> {
    let (total, lambda, star) = fold_nb_cycles(
        n,
        l,
        budget,
        (0u64, 0u64, 0u64),
        |acc, c| {
            let class = classify_cycle(&NbCycle { vertices: c.to_vec() });
            acc.0 += 1;
            acc.1 += u64::from(class.is_lambda);
            acc.2 += u64::from(class.is_star);
        },
        |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2),
    )?;
    Ok(CycleCensusRow { n, l, total, lambda, lambda_star: star })
}
