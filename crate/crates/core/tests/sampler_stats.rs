use pfsmc::exec::{Backend, Executor};
use pfsmc::linalg::DenseMatrix;
use pfsmc::lmm::{Integrator, LmmScheme};
use pfsmc::models::LinearDecay;
use pfsmc::sampler::{
    innovate, log_sum_exp, proliferate, resample_multinomial, run, ObservationModel, Observations, ParamPrior,
    PfConfig, StatePrior,
};

#[test]
fn multinomial_counts_pass_chi_square() {
    let n = 100_000;
    let cats = 10;
    let raw: Vec<f64> = (0..n).map(|i| 1.0 + (i % cats) as f64).collect();
    let total: f64 = raw.iter().sum();
    let g: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let idx = resample_multinomial(&g, 31, 4);
    let mut counts = vec![0.0; cats];
    for i in idx {
        counts[i % cats] += 1.0;
    }
    let chi2: f64 = (0..cats)
        .map(|c| {
            let p: f64 = g.iter().skip(c).step_by(cats).sum();
            let e = p * n as f64;
            (counts[c] - e).powi(2) / e
        })
        .sum();
    // 99.9% quantile of chi-square with 9 degrees of freedom
    assert!(chi2 < 27.88, "chi2 = {chi2}");
}

#[test]
fn proliferation_covariance_is_scaled_by_one_minus_a_squared() {
    let n = 100_000;
    let c = DenseMatrix::from_rows(&[&[0.5, 0.2, 0.0], &[0.2, 0.3, -0.1], &[0.0, -0.1, 0.4]]).unwrap();
    let a: f64 = 0.95;
    let bars = vec![vec![1.0, -2.0, 0.5]; n];
    let draws = proliferate(&bars, &c, a, 5, 3).unwrap();
    let s2 = 1.0 - a * a;
    let mut mean = [0.0; 3];
    for d in &draws {
        for k in 0..3 {
            mean[k] += d[k] / n as f64;
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let cov: f64 = draws.iter().map(|d| (d[i] - mean[i]) * (d[j] - mean[j])).sum::<f64>() / n as f64;
            let expected = s2 * c[(i, j)];
            let scale = s2 * (c[(i, i)] * c[(j, j)]).sqrt();
            assert!((cov - expected).abs() <= 0.05 * scale, "({i},{j}): {cov} vs {expected}");
        }
    }
}

#[test]
fn innovation_variance_matches_gamma() {
    let gamma = [0.04, 1e-6];
    let n = 50_000;
    let mut sums = [0.0; 2];
    for k in 0..n {
        let x = innovate(&[1.0, 2.0], &gamma, 8, 2, k);
        sums[0] += (x[0] - 1.0).powi(2);
        sums[1] += (x[1] - 2.0).powi(2);
    }
    for (s, g) in sums.iter().zip(gamma) {
        let var = s / n as f64;
        assert!((var / g - 1.0).abs() < 0.03, "{var} vs {g}");
    }
}

#[test]
fn weights_stay_normalised_through_a_run() {
    let model = LinearDecay::new(2);
    let scheme: LmmScheme = "bdf2".parse().unwrap();
    let cfg = PfConfig {
        particles: 300,
        shrink_a: 0.95,
        integrator: Integrator::fixed(scheme, 0.1),
        seed: 17,
        prior: vec![ParamPrior { mean: 0.8, std: 0.3 }],
        x0_prior: StatePrior { mean: vec![1.0, 2.0], std: vec![0.05, 0.05] },
    };
    let times: Vec<f64> = (1..=15).map(|k| 0.2 * k as f64).collect();
    let values = times.iter().map(|t| vec![(-0.5 * t).exp(), 2.0 * (-0.5 * t).exp()]).collect();
    let data = Observations { t0: 0.0, times, values };
    let obs = ObservationModel::scalar(vec![0, 1], 0.02, 2).unwrap();
    let exec = Executor::new(Backend::Sequential).unwrap();
    let out = run(&data, &cfg, &exec, &model, &obs).unwrap();
    assert_eq!(out.trace.rows.len(), 16);
    assert!(log_sum_exp(&out.ensemble.logw).abs() < 1e-12);
    for row in &out.trace.rows {
        assert!(row.ess >= 1.0 - 1e-9 && row.ess <= 300.0 + 1e-9);
    }
    let rate = out.trace.last().theta_mean[0];
    assert!((rate - 0.5).abs() < 0.1, "rate estimate {rate}");
}
