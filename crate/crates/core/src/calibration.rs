//! Monte Carlo calibration of the tuning parameter.
//!
//! The pivotal statistic
//! `λ* = ‖(1/n) Σ l̇(ξᵢ) xᵢ‖∞ · exp[(1/n) Σ −log f(ξᵢ)]`
//! has a distribution that depends on the design and the noise family but not
//! on the noise scale. Its upper quantile, inflated by `1/(1 − η)`, is the
//! recommended `λ`. The norm runs over penalized columns only.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::design::{generate_gaussian_design, Dataset};
use crate::error::{Error, Result};
use crate::noise::NoiseFamily;
use crate::rng::{child_seed, stream};

pub const MIN_REPS: usize = 100;

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    /// Sorted ascending.
    pub lambda_star_samples: Vec<f64>,
    pub quantile: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
    pub n_reps: usize,
    /// Order statistics bracketing the quantile at ±2 binomial standard errors.
    pub mc_bracket: (f64, f64),
}

impl CalibrationResult {
    /// Fraction of samples with `λ*·(1 − η) > λ`.
    pub fn exceedance(&self, lambda: f64, eta: f64) -> f64 {
        exceedance(&self.lambda_star_samples, lambda, eta)
    }
}

/// Fraction of `samples` with `s·(1 − η) > λ`.
pub fn exceedance(samples: &[f64], lambda: f64, eta: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    samples.iter().filter(|&&s| s * (1.0 - eta) > lambda).count() as f64 / samples.len() as f64
}

/// One-based rank `⌈q·N⌉`, clamped to `[1, N]`.
pub fn upper_rank(q: f64, n: usize) -> usize {
    ((q * n as f64 - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// `λ*` for one noise vector, with `x_pen` the penalized columns.
pub fn lambda_star_of<M: NoiseFamily + ?Sized>(x_pen: &DMatrix<f64>, model: &M, xi: &[f64]) -> f64 {
    let n = xi.len() as f64;
    let scores = DVector::from_iterator(xi.len(), xi.iter().map(|&v| model.l_dot(v)));
    let norm = if x_pen.ncols() == 0 { 0.0 } else { x_pen.tr_mul(&scores).amax() / n };
    let neg_log_lik = xi.iter().map(|&v| model.l(v)).sum::<f64>() / n + model.l_const();
    norm * neg_log_lik.exp()
}

fn penalized_columns(x: &DMatrix<f64>, mask: &[bool]) -> Result<DMatrix<f64>> {
    if mask.len() != x.ncols() {
        return Err(Error::Dimension(format!(
            "penalty mask has {} entries for {} columns",
            mask.len(),
            x.ncols()
        )));
    }
    let cols: Vec<usize> = (0..x.ncols()).filter(|&j| mask[j]).collect();
    if cols.is_empty() {
        return Err(Error::param("design has no penalized columns"));
    }
    Ok(x.select_columns(&cols))
}

/// `n_reps` independent draws of `λ*` on the fixed design `x`, in replicate
/// order. Replicate `i` uses stream `(seed, i)`, so the output does not depend
/// on the number of threads.
pub fn sample_lambda_star<M: NoiseFamily + ?Sized>(
    x: &DMatrix<f64>,
    mask: &[bool],
    model: &M,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_reps < MIN_REPS {
        return Err(Error::param(format!("need at least {MIN_REPS} replicates (got {n_reps})")));
    }
    let x_pen = penalized_columns(x, mask)?;
    let n = x.nrows();
    let samples = (0..n_reps)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |xi, i| {
                let mut rng = stream(seed, i as u64);
                for v in xi.iter_mut() {
                    *v = model.draw(&mut rng);
                }
                lambda_star_of(&x_pen, model, xi)
            },
        )
        .collect();
    Ok(samples)
}

/// Calibrates `λ = F̂⁻¹(1 − α)/(1 − η)` on the design `x`.
pub fn calibrate<M: NoiseFamily + ?Sized>(
    x: &DMatrix<f64>,
    mask: &[bool],
    model: &M,
    alpha: f64,
    eta: f64,
    n_reps: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::param(format!("alpha must lie in (0, 1/2] (got {alpha})")));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::param(format!("eta must lie in [0, 1) (got {eta})")));
    }
    let mut samples = sample_lambda_star(x, mask, model, n_reps, seed)?;
    samples.sort_by(f64::total_cmp);
    let quantile = samples[upper_rank(1.0 - alpha, n_reps) - 1];
    let half = 2.0 * (alpha * (1.0 - alpha) / n_reps as f64).sqrt();
    let lo = samples[upper_rank(1.0 - alpha - half, n_reps) - 1];
    let hi = samples[upper_rank(1.0 - alpha + half, n_reps) - 1];
    Ok(CalibrationResult {
        lambda_star_samples: samples,
        quantile,
        lambda: quantile / (1.0 - eta),
        alpha,
        eta,
        seed,
        n_reps,
        mc_bracket: (lo, hi),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub p: usize,
    pub quantile: f64,
    /// `quantile / √(log p / n)`
    pub normalized: f64,
}

/// Normalized quantiles `F̂⁻¹(1 − α)/√(log p/n)` over a grid of fresh,
/// centered Gaussian designs with an unpenalized intercept.
pub fn quantile_scaling_check<M: NoiseFamily + ?Sized>(
    model: &M,
    n_grid: &[usize],
    p_grid: &[usize],
    alpha: f64,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<ScalingRow>> {
    if n_grid.is_empty() || p_grid.is_empty() {
        return Err(Error::param("grids must be nonempty"));
    }
    let mut rows = Vec::new();
    for (a, &n) in n_grid.iter().enumerate() {
        for (b, &p) in p_grid.iter().enumerate() {
            if p < 2 {
                return Err(Error::param("p must be at least 2 for log p > 0"));
            }
            let cell = child_seed(seed, (a * p_grid.len() + b) as u64);
            let x = generate_gaussian_design(n, p, &mut stream(child_seed(cell, 0), 0))?;
            let ds = Dataset::new(DVector::zeros(n), x, None)?.with_intercept();
            let cal = calibrate(ds.x(), ds.penalty_mask(), model, alpha, 0.0, n_reps, child_seed(cell, 1))?;
            rows.push(ScalingRow {
                n,
                p,
                quantile: cal.quantile,
                normalized: cal.quantile / ((p as f64).ln() / n as f64).sqrt(),
            });
        }
    }
    Ok(rows)
}
