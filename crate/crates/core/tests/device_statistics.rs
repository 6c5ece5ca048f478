use memfield::device::{form_random_matrix, CellState, NoiseModel};
use memfield::rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Kolmogorov-Smirnov statistic of `samples` against `cdf`.
fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn formed_conductances_follow_the_fitted_distribution() {
    let noise = NoiseModel::fitted();
    let (mean, std) = noise.write_distribution(CellState::Lrs).unwrap();
    let normal = Normal::new(mean, std).unwrap();
    for seed in 0..3 {
        let a = form_random_matrix(100, 100, &noise, &mut rng::stream(seed, 0)).unwrap();
        let mut g = a.conductances().to_vec();
        let d = ks_statistic(&mut g, |x| normal.cdf(x));
        // 1% critical value for n = 10,000.
        let critical = 1.628 / (g.len() as f64).sqrt();
        assert!(d < critical, "seed {seed}: D = {d:.5} >= {critical:.5}");
    }
}

#[test]
fn ks_rejects_a_shifted_distribution() {
    let noise = NoiseModel::fitted();
    let a = form_random_matrix(100, 100, &noise, &mut rng::stream(0, 0)).unwrap();
    let shifted = Normal::new(30.5, 5.46).unwrap();
    let mut g = a.conductances().to_vec();
    assert!(ks_statistic(&mut g, |x| shifted.cdf(x)) > 1.628 / 100.0);
}

#[test]
fn write_noise_scales_the_conductance_spread() {
    let mut last = 0.0;
    for rel in [0.05, 0.1, 0.2, 0.3] {
        let noise = NoiseModel::fitted().with_write_noise(rel);
        let a = form_random_matrix(64, 64, &noise, &mut rng::stream(4, 0)).unwrap();
        let g = a.conductances();
        let m = g.iter().sum::<f64>() / g.len() as f64;
        let s = (g.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (g.len() - 1) as f64).sqrt();
        assert!((s / (rel * noise.lrs_mean) - 1.0).abs() < 0.1, "rel {rel}: std {s}");
        assert!(s > last);
        last = s;
    }
}
