use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trmt_core::chebyshev::{self, chebyshev_coeffs, chebyshev_t, CalibrationTable, Scaling, TraceVector};
use trmt_core::dynamics::{self, exact_conditional_moments, extract_remainders};
use trmt_core::ensemble::{self, apply_move, Chain, Ensemble, MoveProposal, TournamentMatrix};
use trmt_core::nbcycles::{self, subgraph_betti_check, DEFAULT_CYCLE_BUDGET};
use trmt_core::oracle;
use trmt_core::rng::RngStream;
use trmt_core::stein::{self, OuSpec, QuadratureGrid};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn ite_state(n: usize, seed: u64) -> TournamentMatrix {
    ensemble::sample_ite(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn rite_state(n: usize, seed: u64, steps: u64) -> TournamentMatrix {
    let mut c = Chain::new(ensemble::seed_regular(n).unwrap(), Ensemble::Rite, RngStream::root(seed)).unwrap();
    c.advance(steps);
    c.into_state()
}

fn power_trace(eigs: &[f64], p: i32) -> f64 {
    eigs.iter().map(|l| l.powi(p)).sum()
}

fn check_spectrum(h: &TournamentMatrix) -> Result<(), TestCaseError> {
    let n = h.n() as f64;
    let eigs = chebyshev::eigenvalues(h).unwrap();
    prop_assert!((power_trace(&eigs, 2) - n * (n - 1.0)).abs() < 1e-9 * n * n);
    let scale = n.powi(3);
    prop_assert!(power_trace(&eigs, 3).abs() < 1e-9 * scale);
    prop_assert!(power_trace(&eigs, 5).abs() < 1e-9 * scale * n * n);
    let mut sorted = eigs.clone();
    sorted.sort_by(f64::total_cmp);
    for (a, b) in sorted.iter().zip(sorted.iter().rev()) {
        prop_assert!((a + b).abs() < 1e-9, "spectrum not symmetric: {a} vs {b}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn ite_spectrum_invariants(n in 2usize..16, seed in any::<u64>()) {
        check_spectrum(&ite_state(n, seed))?;
    }

    #[test]
    fn rite_states_stay_regular(half in 1usize..8, seed in any::<u64>(), steps in 0u64..400) {
        let n = 2 * half + 1;
        let h = rite_state(n, seed, steps);
        prop_assert!(h.row_sums().is_zero());
        prop_assert_eq!(ensemble::count_directed_triangles(&h), ensemble::regular_triangle_count(n));
        check_spectrum(&h)?;
    }

    #[test]
    fn moves_are_involutions(n in 3usize..12, seed in any::<u64>(), picks in any::<(usize, usize, usize)>()) {
        let h = ite_state(n, seed);
        let (p, q) = (picks.0 % n, picks.1 % n);
        prop_assume!(p != q);
        let flip = MoveProposal::edge_flip(p.min(q), p.max(q)).unwrap();
        prop_assert_eq!(&apply_move(&apply_move(&h, flip).unwrap(), flip).unwrap(), &h);
        let triangles = ensemble::directed_triangles(&h);
        prop_assume!(!triangles.is_empty());
        let (a, b, c) = triangles[picks.2 % triangles.len()];
        let m = MoveProposal::triangle(a, b, c).unwrap();
        let once = apply_move(&h, m).unwrap();
        prop_assert_eq!(once.row_sums(), h.row_sums());
        // The reversed cycle runs the other way round.
        let back = MoveProposal::triangle(a, c, b).unwrap();
        prop_assert_eq!(&apply_move(&once, back).unwrap(), &h);
    }

    #[test]
    fn wire_format_roundtrip(n in 1usize..40, seed in any::<u64>()) {
        let h = ite_state(n.max(2), seed);
        prop_assert_eq!(TournamentMatrix::from_json(&h.to_json()).unwrap(), h.clone());
        prop_assert_eq!(TournamentMatrix::from_hex(h.n(), &h.bits_hex()).unwrap(), h);
    }

    #[test]
    fn chebyshev_parity_and_normalisation(n in 1usize..60, x in -1.5f64..1.5) {
        let c = chebyshev_coeffs(n).unwrap();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        // Rounding in the monomial form is bounded by Σ|d_r| |x|^{n-2r}.
        let scale: f64 = c.coeffs.iter().enumerate()
            .map(|(r, &d)| (d as f64).abs() * x.abs().powi((n - 2 * r) as i32)).sum::<f64>().max(1.0);
        prop_assert!((c.eval(-x) - sign * c.eval(x)).abs() < 1e-12 * scale);
        prop_assert!((c.eval(x) - chebyshev_t(n, x)).abs() < 1e-12 * scale);
        prop_assert!((c.eval(1.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn betti_inequality_on_random_subgraphs(
        n in 2usize..12,
        seed in any::<u64>(),
        extra in 0usize..20,
        keep in any::<u32>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // A random spanning tree plus random chords keeps G connected.
        let mut g: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
        for _ in 0..extra {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b {
                g.push((a, b));
            }
        }
        let sub: Vec<(usize, usize)> =
            g.iter().enumerate().filter(|(i, _)| keep >> (i % 32) & 1 == 1).map(|(_, &e)| e).collect();
        prop_assume!(!sub.is_empty());
        prop_assert!(subgraph_betti_check(&g, &sub).unwrap());
    }

    #[test]
    fn ou_generator_has_gaussian_mean_zero(k_max in 2usize..5, coeffs in prop::collection::vec(-2.0f64..2.0, 4)) {
        let spec = OuSpec::new(k_max).unwrap();
        let grid = QuadratureGrid::default_for(&spec);
        let f = move |x: &[f64]| {
            coeffs[0] * x[0] + coeffs[1] * x[0] * x[0] + coeffs[2] * x[x.len() - 1].powi(3)
                + coeffs[3] * x.iter().product::<f64>()
        };
        let af = |x: &[f64]| stein::apply_generator(&f, x, &spec, None).unwrap();
        let mean = stein::gaussian_expectation(&af, &spec, &grid);
        prop_assert!(mean.abs() < 1e-5, "E[Af] = {mean}");
    }

    #[test]
    fn ou_semigroup_composes(x in -3.0f64..3.0, s in 0.0f64..1.0, t in 0.0f64..1.0, m in 2usize..5) {
        // P_t x² = e^{-2mt} x² + m(1 - e^{-2mt}) and P_t x = e^{-mt} x.
        let mf = m as f64;
        let p1 = |t: f64, x: f64| (-mf * t).exp() * x;
        let p2 = |t: f64, x2: f64| (-2.0 * mf * t).exp() * x2 + mf * (1.0 - (-2.0 * mf * t).exp());
        let direct = p2(s + t, x * x);
        let composed = p2(s, p2(t, x * x));
        prop_assert!((direct - composed).abs() < 1e-12 * (1.0 + x * x));
        prop_assert!((p1(s + t, x) - p1(s, p1(t, x))).abs() < 1e-12);
        // The generator reproduces the time derivative at t = 0.
        let spec = OuSpec::new(m).unwrap();
        let mut pt = vec![0.0; spec.dim()];
        pt[m - 2] = x;
        let sq = |y: &[f64]| y[m - 2] * y[m - 2];
        let gen = stein::apply_generator(&sq, &pt, &spec, None).unwrap();
        prop_assert!((gen - (2.0 * mf * mf - 2.0 * mf * x * x)).abs() < 1e-6 * (1.0 + x * x));
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn cycle_identity_random_states(n in 3usize..9, degree in 1usize..6, seed in any::<u64>(), regular in any::<bool>()) {
        let h = if regular && n % 2 == 1 { rite_state(n, seed, 200) } else { ite_state(n, seed) };
        let cycles = nbcycles::cycle_sum_trace(&h, degree, DEFAULT_CYCLE_BUDGET).unwrap();
        let eig = chebyshev::chebyshev_trace(&h, degree, Scaling::Lemma).unwrap();
        prop_assert!((cycles - eig).abs() < 1e-8, "N={n} degree={degree}: {cycles} vs {eig}");
    }

    #[test]
    fn indicator_simplification_random_states(half in 2usize..4, seed in any::<u64>()) {
        let h = rite_state(2 * half + 1, seed, 300);
        let d = dynamics::indicator_simplification_check(&h, |g| chebyshev::chebyshev_trace(g, 4, Scaling::Lemma)).unwrap();
        prop_assert!(d < 1e-10, "discrepancy {d}");
    }

    #[test]
    fn conditional_moments_are_well_formed(n in 4usize..9, seed in any::<u64>(), rite in any::<bool>()) {
        let (h, ens) = if rite && n % 2 == 1 {
            (rite_state(n, seed, 100), Ensemble::Rite)
        } else {
            (ite_state(n, seed), Ensemble::Ite)
        };
        let d = exact_conditional_moments(&h, ens, 4, dynamics::DEFAULT_MOMENT_BUDGET).unwrap();
        for i in 0..d.diffusion.len() {
            for j in 0..d.diffusion.len() {
                prop_assert_eq!(d.diffusion[i][j].to_bits(), d.diffusion[j][i].to_bits());
                for l in 0..d.diffusion.len() {
                    prop_assert!(d.third_abs[i][j][l] >= 0.0 && d.third_abs[i][j][l].is_finite());
                }
            }
        }
        // Residual identity, recomputed independently of extract_remainders.
        let y = TraceVector { k_max: 4, values: vec![0.25, -1.5, 3.0], scaling: Scaling::Lemma };
        let r = extract_remainders(&d, &y).unwrap();
        for (i, &yn) in y.values.iter().enumerate() {
            let expect = d.normalizer * d.drift[i] + (i + 2) as f64 * yn;
            prop_assert!((r.r_n[i] - expect).abs() <= f64::EPSILON * expect.abs().max(1.0));
        }
    }
}

#[test]
fn detailed_balance_exhaustive() {
    // ITE at N = 4 and RITE at N = 5: ρ(H→H') = ρ(H'→H) for every pair.
    for (ens, n) in [(Ensemble::Ite, 4usize), (Ensemble::Rite, 5)] {
        let mut states = Vec::new();
        oracle::for_each_member(ens, n, |h| states.push(h.clone())).unwrap();
        let mut linked = 0;
        for a in &states {
            let mut out = 0.0;
            for b in &states {
                let ab = ensemble::transition_probability(a, b, ens);
                let ba = ensemble::transition_probability(b, a, ens);
                assert!((ab - ba).abs() < 1e-15, "{ens} N={n}");
                out += ab;
                linked += usize::from(ab > 0.0);
            }
            assert!((out - 1.0).abs() < 1e-12, "rows of the kernel sum to one");
        }
        assert!(linked > 0);
    }
}

#[test]
fn calibration_table_roundtrip_is_bit_identical() {
    let table =
        chebyshev::build_calibration(Ensemble::Ite, 9, 3, Scaling::Theorem, 2000, RngStream::root(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cal.json");
    table.save(&path).unwrap();
    let back = CalibrationTable::load(&path).unwrap();
    assert_eq!(back, table);
    for (a, b) in back.entries.iter().zip(&table.entries) {
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }
    assert_eq!(back.to_json(), table.to_json());
}
