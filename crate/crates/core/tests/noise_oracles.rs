//! Statistical oracles for the driving noise and the compensator.

use serde_json::json;
use spdelab::coefficients::{CoefficientSpec, JumpSpec, PerMode};
use spdelab::noise::compensator_integral;
use spdelab::rng::{path_stream, Lane};
use spdelab::{builtin_coefficients, sample_noise, CoefficientSet, DiagonalModel, MarkLaw, McEstimate};

use rand::Rng;

#[test]
fn poisson_count_and_mark_moments() {
    let rate = 3.5;
    let m = DiagonalModel::heat(2, 1.0, rate, MarkLaw::Uniform { lo: -1.0, hi: 3.0 }, 2.0).unwrap();
    let n_paths = 20_000;
    let mut counts = Vec::with_capacity(n_paths);
    let mut marks = Vec::new();
    for i in 0..n_paths as u64 {
        let noise = sample_noise(&m, 8, i, 77).unwrap();
        counts.push(noise.jumps().len() as f64);
        marks.extend(noise.jumps().iter().map(|j| j.mark));
    }
    let count = McEstimate::from_samples(&counts, 77);
    // E N_T = Var N_T = λ T
    assert!((count.mean - rate * 2.0).abs() < 4.0 * count.stderr, "{count:?}");
    let var = counts.iter().map(|c| (c - count.mean).powi(2)).sum::<f64>() / (n_paths as f64 - 1.0);
    assert!((var / (rate * 2.0) - 1.0).abs() < 0.05, "variance {var}");
    let mark = McEstimate::from_samples(&marks, 77);
    assert!((mark.mean - 1.0).abs() < 4.0 * mark.stderr, "{mark:?}");
}

#[test]
fn wiener_increments_have_covariance_q_dt() {
    let q = vec![2.0, 0.5, 0.0];
    let m = DiagonalModel::new(vec![-1.0, -2.0, -3.0], 0.0, q.clone(), 0.0, MarkLaw::Gaussian, 1.0).unwrap();
    let n_steps = 10;
    let mut sums = [0.0f64; 3];
    let mut cross = 0.0;
    let mut n = 0.0;
    for i in 0..5000 {
        let noise = sample_noise(&m, n_steps, i, 5).unwrap();
        for s in 0..noise.n_intervals() {
            let dw = noise.increment(s);
            for k in 0..3 {
                sums[k] += dw[k] * dw[k];
            }
            cross += dw[0] * dw[1];
            n += 1.0;
        }
    }
    let dt = 1.0 / n_steps as f64;
    for k in 0..2 {
        assert!((sums[k] / n / (q[k] * dt) - 1.0).abs() < 0.03, "mode {k}: {}", sums[k] / n);
    }
    assert_eq!(sums[2], 0.0);
    assert!((cross / n).abs() < 0.03 * dt);
}

#[test]
fn path_streams_are_distinct_and_uncorrelated() {
    let draw = |path, lane| -> Vec<f64> {
        let mut r = path_stream(9, path, lane);
        (0..20_000).map(|_| r.random::<f64>() - 0.5).collect()
    };
    let a = draw(0, Lane::Wiener);
    let pairs = [draw(0, Lane::Jumps), draw(1, Lane::Wiener), draw(1, Lane::Jumps), draw(0, Lane::Bridge)];
    for b in &pairs {
        assert_ne!(a[..8], b[..8]);
        let corr: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (a.len() as f64 / 12.0);
        // standard error of the correlation is 1/sqrt(n) ≈ 0.007
        assert!(corr.abs() < 0.03, "{corr}");
    }
    assert_eq!(a, draw(0, Lane::Wiener));
}

#[test]
fn gaussian_mark_compensator_matches_monte_carlo() {
    // G(x, z) = z e₁ + 0.3 e₂ with Gaussian marks: Ḡ = λ (0, 0.3)
    let rate = 2.0;
    let m = DiagonalModel::heat(2, 0.0, rate, MarkLaw::Gaussian, 1.0).unwrap();
    let c = builtin_coefficients("additive", &json!({"g": [0.0, 0.3], "h": [1.0, 0.0]}), &m).unwrap();
    let closed = compensator_integral(&c, &m, &[0.4, -0.2]).unwrap();
    assert!(closed[0].abs() < 1e-15 && (closed[1] - rate * 0.3).abs() < 1e-15);

    // state-dependent jumps: (γ₀ + γ₁ z) x, Ḡ(x) = λ (γ₀ + γ₁ E z) x
    let spec = CoefficientSpec {
        jump: JumpSpec::JumpLinear { gamma0: 0.2, gamma1: 0.7, g: PerMode::Scalar(0.0), h: PerMode::Scalar(0.0) },
        ..Default::default()
    };
    let lin = CoefficientSet::new(&spec, &m).unwrap();
    let x = [0.4, -0.2];
    let closed = compensator_integral(&lin, &m, &x).unwrap();
    let mut rng = path_stream(123, 0, Lane::Aux);
    let n = 1_000_000;
    let mut acc = [0.0f64; 2];
    let mut out = [0.0; 2];
    let mut sq = 0.0;
    for _ in 0..n {
        let z = m.mark_law().sample(&mut rng);
        lin.jump(&x, z, &mut out);
        acc[0] += out[0];
        acc[1] += out[1];
        sq += out[0] * out[0];
    }
    let mean0 = rate * acc[0] / n as f64;
    let se0 = rate * ((sq / n as f64 - (acc[0] / n as f64).powi(2)) / n as f64).sqrt();
    assert!((mean0 - closed[0]).abs() < 4.0 * se0, "{mean0} vs {}", closed[0]);
    assert!((rate * acc[1] / n as f64 - closed[1]).abs() < 4.0 * se0);
}
