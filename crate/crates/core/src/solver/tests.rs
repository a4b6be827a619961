use super::*;
use crate::design::generate_gaussian_design;
use crate::noise::{NoiseModel, EULER_GAMMA};
use crate::rng::stream;

fn instance(model: &NoiseModel, n: usize, p: usize, seed: u64, intercept: bool) -> Dataset {
    let mut rng = stream(seed, 0);
    let x = generate_gaussian_design(n, p, &mut rng).unwrap();
    let mut beta = DVector::zeros(p);
    for j in 0..p.min(2) {
        beta[j] = 1.5 - j as f64;
    }
    let noise = DVector::from_vec(model.sample(&mut rng, n).unwrap());
    let y = &x * &beta + noise * 0.8;
    let ds = Dataset::new(y, x, None).unwrap();
    if intercept {
        ds.with_intercept()
    } else {
        ds
    }
}

fn lambda_for(p: usize, n: usize) -> f64 {
    4.0 * (2.0 * (p as f64).ln() / n as f64).sqrt()
}

#[test]
fn risk_at_the_truth_matches_entropy() {
    let n = 200_000;
    for (model, expected) in [
        (NoiseModel::Gaussian, 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln())),
        (NoiseModel::Gumbel, EULER_GAMMA + 1.0),
    ] {
        let xi = model.sample(&mut stream(1, 0), n).unwrap();
        let ds = Dataset::new(DVector::from_vec(xi), DMatrix::zeros(n, 1), None).unwrap();
        let r = risk(&ds, &model, &DVector::zeros(1), 1.0).unwrap();
        assert!((r - expected).abs() < 0.01, "{model}: {r} vs {expected}");
    }
}

#[test]
fn risk_rejects_bad_sigma_and_handles_floor() {
    let ds = instance(&NoiseModel::Gaussian, 10, 2, 2, false);
    let b = DVector::zeros(2);
    assert!(matches!(risk(&ds, &NoiseModel::Gaussian, &b, 0.0), Err(Error::Domain(_))));
    assert!(risk(&ds, &NoiseModel::Gaussian, &b, -1.0).is_err());
    assert!(risk(&ds, &NoiseModel::Gaussian, &DVector::zeros(3), 1.0).is_err());
    let exact = Dataset::new(DVector::zeros(10), ds.x().clone(), None).unwrap();
    assert!(risk(&exact, &NoiseModel::Gaussian, &b, 1e-10).unwrap().is_finite());
}

#[test]
fn config_validation() {
    assert!(FitConfig::default().validate().is_ok());
    assert!(FitConfig::with_lambda(0.0).validate().is_err());
    assert!(FitConfig { alpha: 0.6, ..FitConfig::default() }.validate().is_err());
    assert!(FitConfig { eta: 1.0, ..FitConfig::default() }.validate().is_err());
    assert!(FitConfig { tol_kkt: 0.0, ..FitConfig::default() }.validate().is_err());
    assert!(FitConfig { max_outer: 0, ..FitConfig::default() }.validate().is_err());
}

#[test]
fn huge_lambda_gives_the_null_fit() {
    for model in NoiseModel::all_default() {
        let ds = instance(&model, 50, 6, 3, true);
        let cfg = FitConfig::with_lambda(1e6);
        let fit = fit_exp_lasso(&ds, &model, &cfg).unwrap();
        assert!(fit.converged, "{model}");
        assert!(fit.active_set.is_empty());
        assert!(fit.beta.rows(1, 6).iter().all(|&b| b == 0.0));
        // intercept is the location MLE, σ the scale step at that intercept
        let mut b0 = DVector::zeros(7);
        b0[0] = fit.beta[0];
        let s = scale_step(&ds, &model, &b0, 1e-12).unwrap();
        assert!((s.sigma - fit.sigma).abs() <= 1e-8 * fit.sigma, "{model}");
        let (g, _) = exp_risk_gradient(&ds, &model, &fit.beta, fit.sigma).unwrap();
        assert!(g[0].abs() <= fit.kkt_tolerance);
    }
}

#[test]
fn converged_fits_are_certified_for_every_family() {
    for (k, model) in NoiseModel::all_default().into_iter().enumerate() {
        for (n, p) in [(60, 5), (50, 80)] {
            let ds = instance(&model, n, p, 10 + k as u64, true);
            let lam = lambda_for(p, n);
            let fit = fit_exp_lasso_at(&ds, &model, &FitConfig::with_lambda(lam), lam).unwrap();
            assert!(fit.converged, "{model} n={n} p={p}: kkt {} tol {}", fit.kkt_residual, fit.kkt_tolerance);
            assert!(fit.trace_is_monotone(), "{model}");
            let kkt = kkt_residual(&ds, &model, &fit.beta, fit.sigma, lam).unwrap();
            assert!(kkt.total() <= fit.kkt_tolerance);
            assert!(fit.sigma > 0.0 && fit.objective.is_finite());
            let direct = objective(&ds, &model, &fit.beta, fit.sigma, lam).unwrap();
            assert!((direct - fit.objective).abs() <= 1e-12 * direct);
        }
    }
}

#[test]
fn local_perturbations_do_not_improve() {
    let model = NoiseModel::subbotin(1.5).unwrap();
    let ds = instance(&model, 60, 3, 20, false);
    let lam = 0.2;
    let fit = fit_exp_lasso_at(&ds, &model, &FitConfig::with_lambda(lam), lam).unwrap();
    assert!(fit.converged);
    let base = objective(&ds, &model, &fit.beta, fit.sigma, lam).unwrap();
    for j in 0..3 {
        for delta in [1e-3, -1e-3] {
            let mut b = fit.beta.clone();
            b[j] += delta;
            let s = scale_step(&ds, &model, &b, 1e-12).unwrap().sigma;
            assert!(objective(&ds, &model, &b, s, lam).unwrap() >= base);
            assert!(objective(&ds, &model, &b, fit.sigma, lam).unwrap() >= base);
        }
    }
}

#[test]
fn scale_equivariance() {
    for model in NoiseModel::all_default() {
        let ds = instance(&model, 60, 10, 30, true);
        let lam = lambda_for(10, 60);
        let cfg = FitConfig::with_lambda(lam);
        let base = fit_exp_lasso_at(&ds, &model, &cfg, lam).unwrap();
        for c in [0.1, 3.0, 100.0] {
            let scaled = ds.with_response(ds.y() * c).unwrap();
            let fit = fit_exp_lasso_at(&scaled, &model, &cfg, lam).unwrap();
            assert!(fit.converged);
            let db = (&fit.beta - &base.beta * c).amax() / (c * base.beta.amax());
            assert!(db <= 1e-6, "{model} c={c}: {db}");
            assert!((fit.sigma - c * base.sigma).abs() <= 1e-6 * c * base.sigma);
        }
    }
}

#[test]
fn translation_equivariance_with_intercept() {
    for model in [NoiseModel::Gaussian, NoiseModel::Logistic] {
        let ds = instance(&model, 60, 8, 40, true);
        let lam = lambda_for(8, 60);
        let cfg = FitConfig { tol_kkt: 1e-11, ..FitConfig::with_lambda(lam) };
        let base = fit_exp_lasso_at(&ds, &model, &cfg, lam).unwrap();
        assert!(base.converged, "{model}: {:e}", base.kkt_residual);
        let shifted = ds.with_response(ds.y().add_scalar(2.5)).unwrap();
        let fit = fit_exp_lasso_at(&shifted, &model, &cfg, lam).unwrap();
        assert!((fit.beta[0] - base.beta[0] - 2.5).abs() <= 1e-8);
        assert!((fit.beta.rows(1, 8) - base.beta.rows(1, 8)).amax() <= 1e-8);
        assert!((fit.sigma - base.sigma).abs() <= 1e-8);
    }
}

#[test]
fn beta_step_objective_is_midpoint_convex() {
    for model in NoiseModel::all_default() {
        let ds = instance(&model, 40, 6, 50, false);
        let mut rng = stream(51, 0);
        let lam = 0.3;
        let f = |b: &DVector<f64>| objective(&ds, &model, b, 1.3, lam).unwrap();
        for _ in 0..100 {
            let a = DVector::from_fn(6, |_, _| rng.gen_range(-2.0..2.0));
            let b = DVector::from_fn(6, |_, _| rng.gen_range(-2.0..2.0));
            let mid = (&a + &b) * 0.5;
            let (fa, fb, fm) = (f(&a), f(&b), f(&mid));
            assert!(fm <= 0.5 * (fa + fb) + 1e-12 * fa.max(fb), "{model}");
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let smooth = [
        NoiseModel::Gaussian,
        NoiseModel::Logistic,
        NoiseModel::Gumbel,
        NoiseModel::subbotin(2.0).unwrap(),
        NoiseModel::subbotin(3.0).unwrap(),
    ];
    for model in smooth {
        let ds = instance(&model, 30, 4, 60, false);
        let beta = DVector::from_vec(vec![0.4, -0.2, 0.1, 0.3]);
        let sigma = 1.1;
        let (g, gs) = exp_risk_gradient(&ds, &model, &beta, sigma).unwrap();
        let e = |b: &DVector<f64>, s: f64| risk(&ds, &model, b, s).unwrap().exp();
        let h = 1e-5;
        for j in 0..4 {
            let mut bp = beta.clone();
            let mut bm = beta.clone();
            bp[j] += h;
            bm[j] -= h;
            let fd = (e(&bp, sigma) - e(&bm, sigma)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1e-2), "{model} j={j}: {fd} vs {}", g[j]);
        }
        let fd = (e(&beta, sigma + h) - e(&beta, sigma - h)) / (2.0 * h);
        assert!((fd - gs).abs() <= 1e-5 * gs.abs().max(1e-2), "{model} σ: {fd} vs {gs}");
    }
}

#[test]
fn scale_step_on_dataset() {
    let ds = Dataset::new(DVector::from_vec(vec![3.0, 4.0, 0.0, 0.0]), DMatrix::zeros(4, 1), None).unwrap();
    let s = scale_step(&ds, &NoiseModel::Gaussian, &DVector::zeros(1), 1e-10).unwrap();
    assert_eq!(s.sigma, 2.5);
}

#[test]
fn perfect_fit_is_flagged_degenerate() {
    let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0]);
    let y = &x * DVector::from_vec(vec![1.0, 2.0]);
    let ds = Dataset::new(y, x, Some(vec![false, false])).unwrap();
    let fit = fit_exp_lasso_at(&ds, &NoiseModel::Gaussian, &FitConfig::with_lambda(1.0), 1.0).unwrap();
    assert!(fit.degenerate);
    assert!(!fit.converged);
    assert!(fit.sigma > 0.0);
}

#[test]
fn multi_start_never_worse() {
    let model = NoiseModel::Gumbel;
    let ds = instance(&model, 50, 10, 70, true);
    let lam = lambda_for(10, 50);
    let one = fit_exp_lasso_at(&ds, &model, &FitConfig::with_lambda(lam), lam).unwrap();
    let cfg = FitConfig { n_starts: 3, ..FitConfig::with_lambda(lam) };
    let many = fit_exp_lasso_at(&ds, &model, &cfg, lam).unwrap();
    assert!(many.objective <= one.objective);
}

#[test]
fn known_scale_huge_lambda_is_zero() {
    let ds = instance(&NoiseModel::Logistic, 40, 5, 80, false);
    let fit = fit_known_scale(&ds, &NoiseModel::Logistic, 1.0, 1e6).unwrap();
    assert!(fit.beta.iter().all(|&b| b == 0.0));
    assert!(fit.converged);
}

#[test]
fn known_scale_kkt_for_every_family() {
    for model in NoiseModel::all_default() {
        let ds = instance(&model, 50, 8, 90, true);
        let fit = fit_known_scale(&ds, &model, 0.8, 0.1).unwrap();
        assert!(fit.converged, "{model}: {}", fit.kkt_residual);
    }
}

#[test]
fn predict_examples() {
    let meta = DesignMeta { p: 2, intercept: false, raw_means: None };
    let out = predict(&meta, &DVector::from_vec(vec![1.0, 2.0]), &DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
    assert_eq!(out[0], 1.0);
    assert!(predict(&meta, &DVector::from_vec(vec![1.0, 2.0]), &DMatrix::zeros(1, 3)).is_err());
    assert!(predict(&meta, &DVector::zeros(3), &DMatrix::zeros(1, 2)).is_err());

    let raw = DMatrix::from_row_slice(4, 2, &[1.0, 5.0, 2.0, 3.0, 3.0, 1.0, 6.0, 3.0]);
    let ds = Dataset::new(DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]), raw.clone(), None)
        .unwrap()
        .with_intercept();
    let beta = DVector::from_vec(vec![0.7, 1.5, -2.0]);
    let means = DMatrix::from_row_slice(1, 2, &[3.0, 3.0]);
    let out = predict(&ds.meta(), &beta, &means).unwrap();
    assert!((out[0] - 0.7).abs() < 1e-15);
    let out = predict(&ds.meta(), &beta, &raw).unwrap();
    let direct = ds.x() * &beta;
    assert!((out - direct).amax() < 1e-12);
}
