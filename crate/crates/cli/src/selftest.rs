//! A fast, deterministic pass over the toolkit's core properties. Every line
//! is a [`TestReport`]; the output depends only on the seed.

use statrs::distribution::{ContinuousCDF, Normal};
use trmt_core::chebyshev::{self, Scaling};
use trmt_core::dynamics;
use trmt_core::ensemble::{self, Chain, ChainConfig, Ensemble};
use trmt_core::nbcycles;
use trmt_core::oracle::{self, EdgeSet, ExpectationMode};
use trmt_core::rng::RngStream;
use trmt_core::stats;
use trmt_core::stein::{self, OuSpec, QuadratureGrid, TestReport};
use trmt_core::Result;

fn exact(name: &str, ok: bool) -> TestReport {
    TestReport { name: name.into(), statistic: f64::from(u8::from(!ok)), threshold: 0.5, pass: ok }
}

pub fn run(root: RngStream) -> Result<Vec<TestReport>> {
    let mut out = Vec::new();

    for (n, expect) in [(3usize, 2u64), (5, 24), (7, 2640)] {
        let c = oracle::enumerate_regular(n)?;
        out.push(exact(&format!("regular_count:N={n}"), c.count == expect.into()));
    }

    // Chain uniformity on the 24 regular tournaments at N = 5.
    let mut members = oracle::enumerate_regular(5)?.members.expect("regular census lists members");
    members.sort_unstable();
    let mut counts = vec![0u64; members.len()];
    let thin = ensemble::regular_triangle_count(5) | 1;
    ensemble::run_chain_with(
        ensemble::seed_regular(5)?,
        ChainConfig::new(Ensemble::Rite, 200_000, thin),
        root.named("uniformity"),
        |h| {
            let w = h.packed().expect("N = 5 fits in a word");
            counts[members.binary_search(&w).expect("chain stays regular")] += 1;
        },
    )?;
    let (_, p) = stats::chi_square_uniform(&counts)?;
    out.push(TestReport { name: "chain_uniformity:N=5".into(), statistic: p, threshold: 0.01, pass: p > 0.01 });

    // Structural invariants along a RITE trajectory.
    let mut chain = Chain::new(ensemble::seed_regular(11)?, Ensemble::Rite, root.named("structure"))?;
    let d11 = ensemble::regular_triangle_count(11);
    let mut worst: f64 = 0.0;
    let mut structural = true;
    for _ in 0..500 {
        chain.step();
        let h = chain.state();
        structural &= h.row_sums().is_zero() && ensemble::count_directed_triangles(h) == d11;
        let eigs = chebyshev::eigenvalues(h)?;
        let p = |k: i32| eigs.iter().map(|l| l.powi(k)).sum::<f64>();
        worst = worst.max((p(2) - 110.0).abs()).max(p(3).abs()).max(p(5).abs());
    }
    out.push(exact("rite_structure:N=11", structural));
    out.push(TestReport::below("trace_invariants:N=11", worst, 1e-9));

    // Cycle-sum identity.
    let mut rng = root.named("identity").rng();
    let mut gap: f64 = 0.0;
    for n in 5..=7 {
        for _ in 0..3 {
            let h = ensemble::sample_ite(n, &mut rng)?;
            for degree in 1..=8 {
                let c = nbcycles::cycle_sum_trace(&h, degree, nbcycles::DEFAULT_CYCLE_BUDGET)?;
                gap = gap.max((c - chebyshev::chebyshev_trace(&h, degree, Scaling::Lemma)?).abs());
            }
        }
    }
    out.push(TestReport::below("cycle_identity", gap, 1e-8));

    // Stationarity of both chains.
    for (ens, n) in [(Ensemble::Ite, 4usize), (Ensemble::Rite, 5)] {
        let mut sums = [0.0; 2];
        let mut count = 0.0;
        let mut err = None;
        oracle::for_each_member(ens, n, |h| match dynamics::exact_conditional_moments(h, ens, 3, u64::MAX) {
            Ok(d) => {
                for (s, v) in sums.iter_mut().zip(&d.drift) {
                    *s += v;
                }
                count += 1.0;
            }
            Err(e) => err = Some(e),
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        let worst = sums.iter().map(|s| (s / count).abs()).fold(0.0, f64::max);
        out.push(TestReport::below(format!("stationarity:{ens}:N={n}"), worst, 1e-10));
    }

    // Indicator simplification on every regular tournament at N = 5.
    let mut ind: f64 = 0.0;
    for &w in &members {
        let h = ensemble::TournamentMatrix::from_packed(5, w)?;
        ind = ind.max(dynamics::indicator_simplification_check(&h, |g| {
            chebyshev::chebyshev_trace(g, 4, Scaling::Lemma)
        })?);
    }
    out.push(TestReport::below("indicator_simplification:N=5", ind, 1e-10));

    // Exact edge-product expectations and the integral representation.
    let two_path = EdgeSet::new(vec![(0, 1), (0, 2)])?;
    for n in [5usize, 7] {
        let e = oracle::edge_product_expectation(n, &two_path, ExpectationMode::Exact, 0, root)?;
        let gap = (e.value.re - 1.0 / (n as f64 - 2.0)).abs() + e.value.im.abs();
        out.push(TestReport::below(format!("two_path_expectation:N={n}"), gap, 1e-12));
    }
    let integral = oracle::mckay_integral_expectation(5, &two_path, 0, root.named("integral"))?;
    let gap = (integral.value.re - 1.0 / 3.0).abs();
    out.push(TestReport::below("integral_representation:N=5", gap, 3.0 * integral.stderr.max(1e-12)));

    let r5 = (oracle::mckay_asymptotic(5)? / 24.0 - 1.0).abs();
    let r7 = (oracle::mckay_asymptotic(7)? / 2640.0 - 1.0).abs();
    out.push(exact("mckay_ratio_improves", r7 < r5));

    // Stein closed forms and Stein's lemma.
    let spec = OuSpec::new(3)?;
    let grid = QuadratureGrid::default_for(&spec);
    let probes = stein::random_probes(&spec, 20, root.named("probes"));
    let mut closed: f64 = 0.0;
    for i in 0..spec.dim() {
        let lin = move |x: &[f64]| x[i];
        let sq = move |x: &[f64]| x[i] * x[i];
        for x in &probes {
            closed = closed.max(stein::SteinSolver::new(&lin, spec, &grid).residual(x)?);
            closed = closed.max(stein::SteinSolver::new(&sq, spec, &grid).residual(x)?);
        }
    }
    out.push(TestReport::below("stein_closed_forms", closed, 1e-6));
    let suite = stein::default_f_suite(&spec, root.named("suite"));
    let refs: Vec<(String, &dyn stein::Functional)> =
        suite.iter().map(|(n, f)| (n.clone(), f.as_ref() as &dyn stein::Functional)).collect();
    out.extend(stein::stein_lemma_mc(&spec, &refs, 20_000, root.named("stein_mc"))?);

    // Diagnostics on exact Gaussian input, and KS on a one-point sample.
    let rows = stats::gaussian_rows(4000, 3, root.named("gauss"));
    let diag = stats::gaussianity_report_rows(&rows)?;
    for c in &diag.per_n {
        out.push(TestReport::below(format!("gaussian_ks:n={}", c.n), c.ks, c.ks_crit_1pct));
    }
    let law = Normal::new(0.0, 1.0).expect("unit normal");
    let d = stats::ks_statistic(&[0.0], |x| law.cdf(x));
    out.push(TestReport::below("ks_single_point", (d - 0.5).abs(), 1e-15));

    Ok(out)
}
