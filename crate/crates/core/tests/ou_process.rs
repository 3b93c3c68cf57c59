//! Monte Carlo checks of the OU limit process, all at three standard errors.

use rand::Rng;
use trmt_core::rng::RngStream;
use trmt_core::stein::{ou_transition_sample, OuSpec};

const SAMPLES: usize = 100_000;

fn stationary<R: Rng>(spec: &OuSpec, rng: &mut R) -> Vec<f64> {
    // A long transition from the origin is the stationary law up to e^{-200}.
    ou_transition_sample(&vec![0.0; spec.dim()], 50.0, spec, rng).unwrap()
}

/// Sample second moments E[X_i X_j] and their standard errors.
fn second_moments(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut m = vec![vec![0.0; d]; d];
    let mut se = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let prod: Vec<f64> = rows.iter().map(|r| r[i] * r[j]).collect();
            let mean = prod.iter().sum::<f64>() / n;
            let var = prod.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
            m[i][j] = mean;
            se[i][j] = (var / n).sqrt();
        }
    }
    (m, se)
}

fn assert_within(value: f64, target: f64, se: f64, what: &str) {
    assert!((value - target).abs() <= 3.0 * se, "{what}: {value} vs {target} (se {se})");
}

#[test]
fn stationary_law_is_invariant() {
    let spec = OuSpec::new(4).unwrap();
    for (k, t) in [0.1, 0.5, 1.0].into_iter().enumerate() {
        let mut rng = RngStream::root(31).child(k as u64).rng();
        let rows: Vec<Vec<f64>> = (0..SAMPLES)
            .map(|_| {
                let z = stationary(&spec, &mut rng);
                ou_transition_sample(&z, t, &spec, &mut rng).unwrap()
            })
            .collect();
        let (m, se) = second_moments(&rows);
        for i in 0..spec.dim() {
            for j in 0..spec.dim() {
                let target = if i == j { spec.rate(i) } else { 0.0 };
                assert_within(m[i][j], target, se[i][j], &format!("t={t} E[X_{i} X_{j}]"));
            }
        }
    }
}

#[test]
fn semigroup_holds_in_distribution() {
    let spec = OuSpec::new(3).unwrap();
    let x0 = [1.5, -2.0];
    let (s, t) = (0.2, 0.3);
    let mut rng = RngStream::root(32).rng();
    let direct: Vec<Vec<f64>> =
        (0..SAMPLES).map(|_| ou_transition_sample(&x0, s + t, &spec, &mut rng).unwrap()).collect();
    let composed: Vec<Vec<f64>> = (0..SAMPLES)
        .map(|_| {
            let mid = ou_transition_sample(&x0, t, &spec, &mut rng).unwrap();
            ou_transition_sample(&mid, s, &spec, &mut rng).unwrap()
        })
        .collect();
    let n = SAMPLES as f64;
    for i in 0..spec.dim() {
        let rate = spec.rate(i);
        let var = rate * (1.0 - (-2.0 * rate * (s + t)).exp());
        let col = |rows: &[Vec<f64>]| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
        let (a, b) = (col(&direct), col(&composed));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        let (ma, mb) = (mean(&a), mean(&b));
        // Difference of two independent means.
        assert_within(ma - mb, 0.0, (2.0 * var / n).sqrt(), &format!("mean of coordinate {i}"));
        let second = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let (va, vb) = (second(&a, ma), second(&b, mb));
        assert_within(va - vb, 0.0, var * (4.0 / n).sqrt(), &format!("variance of coordinate {i}"));
    }
}

#[test]
fn transition_law_matches_closed_form() {
    let spec = OuSpec::new(4).unwrap();
    let x0 = [0.7, -1.1, 2.4];
    let t = 0.25;
    let mut rng = RngStream::root(34).rng();
    let rows: Vec<Vec<f64>> = (0..SAMPLES).map(|_| ou_transition_sample(&x0, t, &spec, &mut rng).unwrap()).collect();
    let n = SAMPLES as f64;
    let mean: Vec<f64> = (0..spec.dim()).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    let centred: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let (cov, se) = second_moments(&centred);
    for i in 0..spec.dim() {
        let rate = spec.rate(i);
        let var = rate * (1.0 - (-2.0 * rate * t).exp());
        assert_within(mean[i], x0[i] * (-rate * t).exp(), (var / n).sqrt(), &format!("mean {i}"));
        assert_within(cov[i][i], var, se[i][i], &format!("variance {i}"));
        for j in 0..spec.dim() {
            if j != i {
                // Coordinates move independently.
                assert_within(cov[i][j], 0.0, se[i][j], &format!("covariance {i},{j}"));
            }
        }
    }
}

#[test]
fn transition_rejects_bad_input() {
    let spec = OuSpec::new(3).unwrap();
    let mut rng = RngStream::root(1).rng();
    assert!(ou_transition_sample(&[0.0], 1.0, &spec, &mut rng).is_err());
    assert!(ou_transition_sample(&[0.0, 0.0], -1.0, &spec, &mut rng).is_err());
    assert!(ou_transition_sample(&[0.0, 0.0], f64::NAN, &spec, &mut rng).is_err());
}
