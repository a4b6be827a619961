mod common;

use explasso::design::{generate_gaussian_design, Dataset};
use explasso::noise::NoiseModel;
use explasso::rng::stream;
use explasso::solver::{fit_exp_lasso_at, fit_known_scale, FitConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn sparse_instance(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = stream(seed, 0);
    let x = generate_gaussian_design(n, p, &mut rng).unwrap();
    let mut beta = DVector::zeros(p);
    for j in 0..p.min(3) {
        beta[j] = 1.0 - 0.4 * j as f64;
    }
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * &beta + noise * 0.7;
    Dataset::new(y, x, None).unwrap()
}

#[test]
fn gaussian_exp_lasso_is_the_square_root_lasso() {
    for (k, &p) in [10usize, 300].iter().enumerate() {
        for rep in 0..3u64 {
            let ds = sparse_instance(100, p, 100 * k as u64 + rep);
            let lam_sqrt = 1.1 * (2.0 * (2.0 * p as f64).ln() / 100.0).sqrt();
            let lam = lam_sqrt * common::gaussian_factor();
            let fit = fit_exp_lasso_at(&ds, &NoiseModel::Gaussian, &FitConfig::with_lambda(lam), lam).unwrap();
            assert!(fit.converged, "p={p} rep={rep}: kkt {} > {}", fit.kkt_residual, fit.kkt_tolerance);
            assert!(fit.trace_is_monotone());
            let oracle = common::sqrt_lasso_cd(ds.x(), ds.y(), ds.penalty_mask(), lam_sqrt);
            let diff = (&fit.beta - &oracle).amax();
            assert!(diff <= 1e-6, "p={p} rep={rep}: diff {diff}");
        }
    }
}

#[test]
fn sqrt_lasso_equivalence_with_unpenalized_intercept() {
    let ds = sparse_instance(80, 20, 7).with_intercept();
    let lam_sqrt = 0.3;
    let lam = lam_sqrt * common::gaussian_factor();
    let fit = fit_exp_lasso_at(&ds, &NoiseModel::Gaussian, &FitConfig::with_lambda(lam), lam).unwrap();
    assert!(fit.converged);
    let oracle = common::sqrt_lasso_cd(ds.x(), ds.y(), ds.penalty_mask(), lam_sqrt);
    assert!((&fit.beta - &oracle).amax() <= 1e-6);
}

#[test]
fn known_scale_gaussian_is_the_lasso() {
    for seed in 0..4u64 {
        let ds = sparse_instance(60, 25, 50 + seed);
        let lam = 0.15;
        let fit = fit_known_scale(&ds, &NoiseModel::Gaussian, 1.0, lam).unwrap();
        assert!(fit.converged);
        let oracle = common::lasso_cd(ds.x(), ds.y(), ds.penalty_mask(), lam);
        assert!((&fit.beta - &oracle).amax() <= 1e-6, "{}", (&fit.beta - &oracle).amax());
    }
}

#[test]
fn known_scale_single_column_soft_threshold() {
    let mut rng = stream(3, 0);
    let x = DMatrix::from_fn(40, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(40, |i, _| 0.8 * x[(i, 0)] + rng.sample::<f64, _>(StandardNormal));
    let ds = Dataset::new(y.clone(), x.clone(), None).unwrap();
    for (lam, sigma) in [(0.05, 1.0), (0.3, 0.5), (5.0, 1.0)] {
        let z = x.column(0).dot(&y) / 40.0;
        let c = x.column(0).norm_squared() / 40.0;
        let t = lam * sigma;
        let expected = z.signum() * (z.abs() - t).max(0.0) / c;
        // grid search on the objective confirms the formula
        let obj = |b: f64| (&y - &x * b).norm_squared() / (80.0 * sigma * sigma) + lam * b.abs() / sigma;
        let grid = (0..=40_000).map(|k| -2.0 + k as f64 * 1e-4).fold((f64::INFINITY, 0.0), |acc, b| {
            let v = obj(b);
            if v < acc.0 {
                (v, b)
            } else {
                acc
            }
        });
        assert!((grid.1 - expected).abs() <= 1e-4);
        let fit = fit_known_scale(&ds, &NoiseModel::Gaussian, sigma, lam).unwrap();
        assert!((fit.beta[0] - expected).abs() <= 1e-9, "{} vs {expected}", fit.beta[0]);
    }
}
