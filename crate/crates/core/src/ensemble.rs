//! Tournament matrices and the two Markov chains on them.
//!
//! A tournament on `N` vertices is stored as its real sign matrix `S`
//! (`S_pq = +1` when `p` beats `q`, `S_qp = -S_pq`), of which only the strict
//! upper triangle is kept, one bit per edge in row-major order. The Hermitian
//! matrix studied throughout the crate is `H = iS`.
//!
//! Two ensembles are supported:
//!
//! * ITE, the uniform measure on all `2^{N(N-1)/2}` tournaments. Direct
//!   sampling draws independent fair signs; the edge-flip chain moves to a
//!   uniformly chosen Hamming neighbour.
//! * RITE, the uniform measure on regular tournaments (`N` odd, all row sums
//!   of `S` zero). The chain reverses a directed 3-cycle chosen uniformly
//!   among the `N(N-1)(N+1)/4` labelled directed triangles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ensemble {
    #[serde(rename = "ITE")]
    Ite,
    #[serde(rename = "RITE")]
    Rite,
}

impl Ensemble {
    pub fn as_str(&self) -> &'static str {
        match self {
            Ensemble::Ite => "ITE",
            Ensemble::Rite => "RITE",
        }
    }

    /// Number of admissible moves `d_N`: edges for ITE, labelled directed
    /// triangles of a regular tournament for RITE.
    pub fn move_count(&self, n: usize) -> u64 {
        match self {
            Ensemble::Ite => edge_count(n) as u64,
            Ensemble::Rite => regular_triangle_count(n),
        }
    }

    /// Checks that `n` admits members of this ensemble.
    pub fn check_dimension(&self, n: usize) -> Result<()> {
        match self {
            Ensemble::Ite if n < 2 => Err(Error::InvalidDimension(format!("N = {n} < 2"))),
            Ensemble::Rite if n < 3 => Err(Error::InvalidDimension(format!("N = {n} < 3"))),
            Ensemble::Rite if n.is_multiple_of(2) => Err(Error::ParityViolation(format!(
                "regular tournaments need odd N, got {n}"
            ))),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Ensemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ITE" => Ok(Ensemble::Ite),
            "RITE" => Ok(Ensemble::Rite),
            other => Err(Error::InvalidInput(format!("unknown ensemble {other:?}"))),
        }
    }
}

/// `N(N-1)/2`.
pub fn edge_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// `d_N = N(N-1)(N+1)/4`, the number of labelled directed triangles in any
/// regular tournament on `N` vertices.
pub fn regular_triangle_count(n: usize) -> u64 {
    let n = n as u64;
    n * (n - 1) * (n + 1) / 4
}

/// Antisymmetric ±1 sign matrix with bit-packed upper triangle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "MatrixRecord", try_from = "MatrixRecord")]
pub struct TournamentMatrix {
    n: usize,
    bits: Vec<u64>,
}

/// Wire form: `{"n": N, "bits": "<hex>"}`. The hex string packs the
/// row-major upper triangle MSB-first, one bit per edge, zero padded to a
/// whole byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub n: usize,
    pub bits: String,
}

impl From<TournamentMatrix> for MatrixRecord {
    fn from(h: TournamentMatrix) -> Self {
        MatrixRecord { n: h.n, bits: h.bits_hex() }
    }
}

impl TryFrom<MatrixRecord> for TournamentMatrix {
    type Error = Error;

    fn try_from(r: MatrixRecord) -> Result<Self> {
        TournamentMatrix::from_hex(r.n, &r.bits)
    }
}

impl TournamentMatrix {
    /// All upper-triangle signs `+1`: the transitive tournament `0 > 1 > ... > N-1`.
    pub fn transitive(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!("N = {n} < 2")));
        }
        let m = edge_count(n);
        let mut bits = vec![u64::MAX; m.div_ceil(64)];
        if !m.is_multiple_of(64) {
            *bits.last_mut().unwrap() = (1u64 << (m % 64)) - 1;
        }
        Ok(Self { n, bits })
    }

    /// Builds a matrix from `beats(p, q)` evaluated for every `p < q`.
    pub fn from_fn(n: usize, mut beats: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!("N = {n} < 2")));
        }
        let m = edge_count(n);
        let mut h = Self { n, bits: vec![0; m.div_ceil(64)] };
        for p in 0..n {
            for q in p + 1..n {
                if beats(p, q) {
                    let k = h.index(p, q);
                    h.bits[k / 64] |= 1 << (k % 64);
                }
            }
        }
        Ok(h)
    }

    /// From the packed upper triangle (bit `k` = `k`-th edge in row-major
    /// order). Only valid for `N(N-1)/2 <= 64`.
    pub fn from_packed(n: usize, word: u64) -> Result<Self> {
        let m = edge_count(n);
        if n < 2 || m > 64 {
            return Err(Error::InvalidDimension(format!("N = {n} does not pack into 64 bits")));
        }
        let mask = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
        Ok(Self { n, bits: vec![word & mask] })
    }

    pub fn packed(&self) -> Option<u64> {
        (self.bits.len() == 1).then(|| self.bits[0])
    }

    pub fn from_hex(n: usize, hex_bits: &str) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!("N = {n} < 2")));
        }
        let bytes = hex::decode(hex_bits)
            .map_err(|e| Error::InvalidInput(format!("bad hex bit string: {e}")))?;
        let m = edge_count(n);
        if bytes.len() != m.div_ceil(8) {
            return Err(Error::InvalidInput(format!(
                "expected {} bytes for N = {n}, got {}",
                m.div_ceil(8),
                bytes.len()
            )));
        }
        let mut h = Self { n, bits: vec![0; m.div_ceil(64)] };
        for k in 0..m {
            if bytes[k / 8] & (0x80 >> (k % 8)) != 0 {
                h.bits[k / 64] |= 1 << (k % 64);
            }
        }
        Ok(h)
    }

    pub fn bits_hex(&self) -> String {
        let m = edge_count(self.n);
        let mut bytes = vec![0u8; m.div_ceil(8)];
        for k in 0..m {
            if self.bit(k) {
                bytes[k / 8] |= 0x80 >> (k % 8);
            }
        }
        hex::encode(bytes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("matrix serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(&self, p: usize, q: usize) -> usize {
        debug_assert!(p < q && q < self.n);
        p * (2 * self.n - p - 1) / 2 + (q - p - 1)
    }

    #[inline]
    fn bit(&self, k: usize) -> bool {
        self.bits[k / 64] >> (k % 64) & 1 == 1
    }

    /// `S_pq` as `+1`/`-1`; `0` on the diagonal.
    #[inline]
    pub fn sign(&self, p: usize, q: usize) -> i8 {
        use std::cmp::Ordering::*;
        match p.cmp(&q) {
            Less => {
                if self.bit(self.index(p, q)) {
                    1
                } else {
                    -1
                }
            }
            Greater => -self.sign(q, p),
            Equal => 0,
        }
    }

    /// Negates `S_pq` (and hence `S_qp`).
    #[inline]
    pub fn flip(&mut self, p: usize, q: usize) {
        let (a, b) = if p < q { (p, q) } else { (q, p) };
        let k = self.index(a, b);
        self.bits[k / 64] ^= 1 << (k % 64);
    }

    pub fn row_sums(&self) -> RowSumVector {
        let mut sums = vec![0i64; self.n];
        for p in 0..self.n {
            for q in p + 1..self.n {
                let s = i64::from(self.sign(p, q));
                sums[p] += s;
                sums[q] -= s;
            }
        }
        RowSumVector { sums }
    }

    pub fn is_regular(&self) -> bool {
        self.row_sums().is_zero()
    }

    /// Dense row-major copy of `S`.
    pub fn signs(&self) -> Vec<i8> {
        let n = self.n;
        let mut out = vec![0i8; n * n];
        for p in 0..n {
            for q in p + 1..n {
                let s = self.sign(p, q);
                out[p * n + q] = s;
                out[q * n + p] = -s;
            }
        }
        out
    }

    /// Number of upper-triangle edges on which `self` and `other` differ.
    pub fn hamming(&self, other: &Self) -> u32 {
        assert_eq!(self.n, other.n);
        self.bits.iter().zip(&other.bits).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    /// The reversed tournament `-S`.
    pub fn negated(&self) -> Self {
        let mut h = Self::transitive(self.n).expect("n >= 2");
        for (w, x) in h.bits.iter_mut().zip(&self.bits) {
            *w ^= x;
        }
        h
    }

    /// Whether `(q0, q1, q2)` is a directed 3-cycle: the indicator `Θ_q(H)`.
    #[inline]
    pub fn is_triangle(&self, q0: usize, q1: usize, q2: usize) -> bool {
        if q0 == q1 || q1 == q2 || q2 == q0 {
            return false;
        }
        let a = self.sign(q0, q1);
        a == self.sign(q1, q2) && a == self.sign(q2, q0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowSumVector {
    pub sums: Vec<i64>,
}

impl RowSumVector {
    pub fn is_zero(&self) -> bool {
        self.sums.iter().all(|&s| s == 0)
    }
}

/// One step of either chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveProposal {
    EdgeFlip { p: usize, q: usize },
    TriangleReversal { q0: usize, q1: usize, q2: usize },
}

impl MoveProposal {
    pub fn edge_flip(p: usize, q: usize) -> Result<Self> {
        if p >= q {
            return Err(Error::InvalidMove(format!("edge flip needs p < q, got ({p}, {q})")));
        }
        Ok(MoveProposal::EdgeFlip { p, q })
    }

    pub fn triangle(q0: usize, q1: usize, q2: usize) -> Result<Self> {
        if q0 == q1 || q1 == q2 || q2 == q0 {
            return Err(Error::InvalidMove(format!(
                "triangle vertices must be distinct, got ({q0}, {q1}, {q2})"
            )));
        }
        Ok(MoveProposal::TriangleReversal { q0, q1, q2 })
    }
}

/// Applies `m` to a copy of `h`.
pub fn apply_move(h: &TournamentMatrix, m: MoveProposal) -> Result<TournamentMatrix> {
    let mut out = h.clone();
    apply_move_in_place(&mut out, m)?;
    Ok(out)
}

pub fn apply_move_in_place(h: &mut TournamentMatrix, m: MoveProposal) -> Result<()> {
    let n = h.n();
    match m {
        MoveProposal::EdgeFlip { p, q } => {
            if p >= q || q >= n {
                return Err(Error::InvalidMove(format!("edge ({p}, {q}) invalid for N = {n}")));
            }
            h.flip(p, q);
        }
        MoveProposal::TriangleReversal { q0, q1, q2 } => {
            if q0.max(q1).max(q2) >= n {
                return Err(Error::InvalidMove(format!(
                    "triangle ({q0}, {q1}, {q2}) out of range for N = {n}"
                )));
            }
            if !h.is_triangle(q0, q1, q2) {
                return Err(Error::InvalidMove(format!(
                    "({q0}, {q1}, {q2}) is not a directed triangle"
                )));
            }
            h.flip(q0, q1);
            h.flip(q1, q2);
            h.flip(q2, q0);
        }
    }
    Ok(())
}

/// Number of ordered triples `(q0, q1, q2)` with `Θ_q(H) = 1`, by direct scan.
pub fn count_directed_triangles(h: &TournamentMatrix) -> u64 {
    let n = h.n();
    let mut count = 0;
    for q0 in 0..n {
        for q1 in 0..n {
            for q2 in 0..n {
                if h.is_triangle(q0, q1, q2) {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Every labelled directed triangle of `h`, in lexicographic order.
pub fn directed_triangles(h: &TournamentMatrix) -> Vec<(usize, usize, usize)> {
    let n = h.n();
    let mut out = Vec::new();
    for q0 in 0..n {
        for q1 in 0..n {
            for q2 in 0..n {
                if h.is_triangle(q0, q1, q2) {
                    out.push((q0, q1, q2));
                }
            }
        }
    }
    out
}

/// Uniform ITE sample: independent fair signs.
pub fn sample_ite<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<TournamentMatrix> {
    Ensemble::Ite.check_dimension(n)?;
    let m = edge_count(n);
    let mut bits: Vec<u64> = (0..m.div_ceil(64)).map(|_| rng.random()).collect();
    if !m.is_multiple_of(64) {
        *bits.last_mut().unwrap() &= (1u64 << (m % 64)) - 1;
    }
    Ok(TournamentMatrix { n, bits })
}

/// The circulant regular tournament: `p` beats `q` iff `(q - p) mod N` lies
/// in `1..=(N-1)/2`.
pub fn seed_regular(n: usize) -> Result<TournamentMatrix> {
    Ensemble::Rite.check_dimension(n)?;
    let half = (n - 1) / 2;
    TournamentMatrix::from_fn(n, |p, q| {
        let d = (q + n - p) % n;
        (1..=half).contains(&d)
    })
}

/// Uniform labelled directed triangle of a regular tournament, by rejection
/// over ordered distinct triples.
///
/// Panics if `h` has no directed triangle (it is transitive); for regular `h`
/// the acceptance rate is `d_N / (N(N-1)(N-2))`.
pub fn sample_triangle<R: Rng + ?Sized>(h: &TournamentMatrix, rng: &mut R) -> MoveProposal {
    let (q0, q1, q2) = sample_triangle_counted(h, rng).0;
    MoveProposal::TriangleReversal { q0, q1, q2 }
}

/// As [`sample_triangle`], also returning the number of draws used.
pub fn sample_triangle_counted<R: Rng + ?Sized>(
    h: &TournamentMatrix,
    rng: &mut R,
) -> ((usize, usize, usize), u64) {
    let n = h.n();
    assert!(n >= 3, "no triangles on {n} vertices");
    let max_draws = 64 * (n as u64).pow(3) + 1024;
    for draws in 1..=max_draws {
        let q0 = rng.random_range(0..n);
        let mut q1 = rng.random_range(0..n - 1);
        if q1 >= q0 {
            q1 += 1;
        }
        let (lo, hi) = if q0 < q1 { (q0, q1) } else { (q1, q0) };
        let mut q2 = rng.random_range(0..n - 2);
        if q2 >= lo {
            q2 += 1;
        }
        if q2 >= hi {
            q2 += 1;
        }
        if h.is_triangle(q0, q1, q2) {
            return ((q0, q1, q2), draws);
        }
    }
    panic!("no directed triangle found; is the tournament regular?")
}

/// Default burn-in: `10 d_N ln d_N` proposals.
pub fn default_burn_in(ensemble: Ensemble, n: usize) -> u64 {
    let d = ensemble.move_count(n) as f64;
    (10.0 * d * d.ln().max(1.0)).ceil() as u64
}

/// A running chain; the state is owned and advanced in place.
#[derive(Debug, Clone)]
pub struct Chain {
    state: TournamentMatrix,
    ensemble: Ensemble,
    rng: rand_chacha::ChaCha8Rng,
    steps_taken: u64,
}

impl Chain {
    pub fn new(h0: TournamentMatrix, ensemble: Ensemble, stream: RngStream) -> Result<Self> {
        ensemble.check_dimension(h0.n())?;
        if ensemble == Ensemble::Rite && !h0.is_regular() {
            return Err(Error::PreconditionViolation(
                "RITE chain needs a regular initial state".into(),
            ));
        }
        Ok(Self { state: h0, ensemble, rng: stream.rng(), steps_taken: 0 })
    }

    pub fn state(&self) -> &TournamentMatrix {
        &self.state
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    /// Performs one proposal and returns it.
    pub fn step(&mut self) -> MoveProposal {
        let n = self.state.n();
        self.steps_taken += 1;
        match self.ensemble {
            Ensemble::Ite => {
                let p = self.rng.random_range(0..n);
                let mut q = self.rng.random_range(0..n - 1);
                if q >= p {
                    q += 1;
                }
                let (p, q) = if p < q { (p, q) } else { (q, p) };
                self.state.flip(p, q);
                MoveProposal::EdgeFlip { p, q }
            }
            Ensemble::Rite => {
                let ((q0, q1, q2), _) = sample_triangle_counted(&self.state, &mut self.rng);
                self.state.flip(q0, q1);
                self.state.flip(q1, q2);
                self.state.flip(q2, q0);
                MoveProposal::TriangleReversal { q0, q1, q2 }
            }
        }
    }

    pub fn advance(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }

    pub fn into_state(self) -> TournamentMatrix {
        self.state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub ensemble: Ensemble,
    pub steps: u64,
    pub thin: u64,
    /// `None` selects [`default_burn_in`].
    pub burn_in: Option<u64>,
}

impl ChainConfig {
    pub fn new(ensemble: Ensemble, steps: u64, thin: u64) -> Self {
        Self { ensemble, steps, thin, burn_in: None }
    }

    pub fn with_burn_in(mut self, burn_in: u64) -> Self {
        self.burn_in = Some(burn_in);
        self
    }
}

/// Runs the chain from `h0`. After burn-in the current state is emitted,
/// then every `thin` steps until `steps` steps have been taken.
pub fn run_chain(
    h0: TournamentMatrix,
    config: ChainConfig,
    stream: RngStream,
) -> Result<Vec<TournamentMatrix>> {
    let mut out = Vec::new();
    run_chain_with(h0, config, stream, |h| out.push(h.clone()))?;
    Ok(out)
}

/// Streaming form of [`run_chain`].
pub fn run_chain_with(
    h0: TournamentMatrix,
    config: ChainConfig,
    stream: RngStream,
    mut visit: impl FnMut(&TournamentMatrix),
) -> Result<()> {
    if config.thin == 0 {
        return Err(Error::InvalidInput("thin must be positive".into()));
    }
    let n = h0.n();
    let mut chain = Chain::new(h0, config.ensemble, stream)?;
    chain.advance(config.burn_in.unwrap_or_else(|| default_burn_in(config.ensemble, n)));
    visit(chain.state());
    for t in 1..=config.steps {
        chain.step();
        if t % config.thin == 0 {
            visit(chain.state());
        }
    }
    Ok(())
}

/// Decorrelated RITE samples from one chain: circulant start, default
/// burn-in, then a gap of `d_N` proposals (rounded up to odd) between samples.
///
/// The triangle-reversal chain flips three edges per step, so it alternates
/// between the two parity classes of the edge-bit count; an odd gap makes
/// the recorded samples cover both.
#[derive(Debug, Clone)]
pub struct RiteSampler {
    chain: Chain,
    gap: u64,
}

impl RiteSampler {
    pub fn new(n: usize, stream: RngStream) -> Result<Self> {
        let gap = regular_triangle_count(n) | 1;
        Self::with_gap(n, stream, gap)
    }

    pub fn with_gap(n: usize, stream: RngStream, gap: u64) -> Result<Self> {
        let mut chain = Chain::new(seed_regular(n)?, Ensemble::Rite, stream)?;
        chain.advance(default_burn_in(Ensemble::Rite, n));
        Ok(Self { chain, gap: gap.max(1) })
    }

    pub fn next_sample(&mut self) -> &TournamentMatrix {
        self.chain.advance(self.gap);
        self.chain.state()
    }
}

/// One-step transition probability `ρ(H → H')`, by enumerating every
/// admissible move from `h`.
pub fn transition_probability(
    h: &TournamentMatrix,
    target: &TournamentMatrix,
    ensemble: Ensemble,
) -> f64 {
    let n = h.n();
    match ensemble {
        Ensemble::Ite => {
            if h.hamming(target) == 1 {
                1.0 / edge_count(n) as f64
            } else {
                0.0
            }
        }
        Ensemble::Rite => {
            let triangles = directed_triangles(h);
            let hits = triangles
                .iter()
                .filter(|&&(q0, q1, q2)| {
                    let mut g = h.clone();
                    g.flip(q0, q1);
                    g.flip(q1, q2);
                    g.flip(q2, q0);
                    &g == target
                })
                .count();
            hits as f64 / triangles.len() as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_roundtrip() {
        let h = TournamentMatrix::from_fn(7, |p, q| (p * 3 + q) % 2 == 0).unwrap();
        for p in 0..7 {
            for q in 0..7 {
                if p == q {
                    assert_eq!(h.sign(p, q), 0);
                } else {
                    assert_eq!(h.sign(p, q), -h.sign(q, p));
                    if p < q {
                        assert_eq!(h.sign(p, q) == 1, (p * 3 + q) % 2 == 0);
                    }
                }
            }
        }
    }

    #[test]
    fn hex_layout_is_msb_first() {
        // N = 3: edges (0,1), (0,2), (1,2) -> bits 1,0,1 -> 0b1010_0000.
        let h = TournamentMatrix::from_fn(3, |p, q| (p, q) != (0, 2)).unwrap();
        assert_eq!(h.bits_hex(), "a0");
        assert_eq!(h.to_json(), r#"{"n":3,"bits":"a0"}"#);
        assert_eq!(TournamentMatrix::from_json(&h.to_json()).unwrap(), h);
    }

    #[test]
    fn bad_hex_is_rejected() {
        assert!(TournamentMatrix::from_hex(3, "zz").is_err());
        assert!(TournamentMatrix::from_hex(3, "a0a0").is_err());
    }

    #[test]
    fn dimension_errors() {
        let mut rng = RngStream::root(0).rng();
        assert!(matches!(sample_ite(1, &mut rng), Err(Error::InvalidDimension(_))));
        assert!(matches!(seed_regular(4), Err(Error::ParityViolation(_))));
        assert!(matches!(seed_regular(1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn n2_has_two_states() {
        let mut rng = RngStream::root(3).rng();
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..64 {
            let h = sample_ite(2, &mut rng).unwrap();
            seen.insert(h.sign(0, 1));
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn circulant_is_regular() {
        for n in [3, 5, 7, 9, 21] {
            let h = seed_regular(n).unwrap();
            assert!(h.row_sums().is_zero(), "N = {n}");
            assert_eq!(count_directed_triangles(&h), regular_triangle_count(n));
        }
        assert_eq!(regular_triangle_count(7), 84);
        assert_eq!(regular_triangle_count(5), 30);
    }

    #[test]
    fn three_cycle_has_six_listings() {
        let h = seed_regular(3).unwrap();
        assert_eq!(count_directed_triangles(&h), 6);
        let mut rng = RngStream::root(5).rng();
        for _ in 0..50 {
            let m = sample_triangle(&h, &mut rng);
            assert!(apply_move(&h, m).is_ok());
        }
    }

    #[test]
    fn n3_reversal_swaps_the_two_regular_tournaments() {
        let h = seed_regular(3).unwrap();
        let m = MoveProposal::triangle(0, 1, 2).unwrap();
        let g = apply_move(&h, m).unwrap();
        assert_ne!(g, h);
        assert_eq!(g, h.negated());
        assert!(g.is_regular());
        assert_eq!(apply_move(&g, m).unwrap(), h);
    }

    #[test]
    fn reversal_of_non_triangle_fails() {
        let h = TournamentMatrix::transitive(4).unwrap();
        let m = MoveProposal::triangle(0, 1, 2).unwrap();
        assert!(matches!(apply_move(&h, m), Err(Error::InvalidMove(_))));
        assert!(MoveProposal::triangle(0, 0, 2).is_err());
        assert!(MoveProposal::edge_flip(2, 1).is_err());
        assert_eq!(count_directed_triangles(&h), 0);
    }

    #[test]
    fn steps_zero_returns_initial_state() {
        let h0 = seed_regular(7).unwrap();
        let cfg = ChainConfig::new(Ensemble::Rite, 0, 1).with_burn_in(0);
        let traj = run_chain(h0.clone(), cfg, RngStream::root(1)).unwrap();
        assert_eq!(traj, vec![h0]);
    }

    #[test]
    fn thinning_counts() {
        let h0 = seed_regular(5).unwrap();
        let cfg = ChainConfig::new(Ensemble::Rite, 100, 7).with_burn_in(3);
        let traj = run_chain(h0, cfg, RngStream::root(1)).unwrap();
        assert_eq!(traj.len(), 1 + 100 / 7);
        assert!(traj.iter().all(|h| h.is_regular()));
    }

    #[test]
    fn rite_chain_rejects_irregular_start() {
        let h0 = TournamentMatrix::transitive(5).unwrap();
        let cfg = ChainConfig::new(Ensemble::Rite, 1, 1);
        assert!(run_chain(h0, cfg, RngStream::root(1)).is_err());
    }

    #[test]
    fn burn_in_default_formula() {
        let d = 30.0f64;
        assert_eq!(default_burn_in(Ensemble::Rite, 5), (10.0 * d * d.ln()).ceil() as u64);
    }
}
