//! Profiled scale: the minimizer over σ of `R_n(β, σ)` at fixed residuals.

use crate::error::{Error, Result};
use crate::noise::NoiseFamily;

/// Outcome of a scale step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleStep {
    pub sigma: f64,
    /// All residuals were zero; `sigma` is the floor.
    pub degenerate: bool,
    /// The unconstrained minimizer lies at or below the floor.
    pub at_floor: bool,
}

/// `(1/n) Σ u l̇(u) − 1` and its derivative in `t = log σ`, for `u = r e^{−t}`.
pub fn scale_score<M: NoiseFamily + ?Sized>(model: &M, residuals: &[f64], t: f64) -> (f64, f64) {
    let inv = (-t).exp();
    let (mut s, mut d) = (0.0, 0.0);
    for &r in residuals {
        let u = r * inv;
        s += u * model.l_dot(u);
        d += model.score_slope(u);
    }
    let n = residuals.len() as f64;
    (s / n - 1.0, -d / n)
}

fn check_floor(sigma_floor: f64) -> Result<()> {
    if !(sigma_floor > 0.0 && sigma_floor.is_finite()) {
        return Err(Error::domain(format!("sigma floor must be positive (got {sigma_floor})")));
    }
    Ok(())
}

/// Minimizes `R_n` over `σ ≥ sigma_floor`, using the closed form when the
/// family has one.
pub fn scale_from_residuals<M: NoiseFamily + ?Sized>(
    model: &M,
    residuals: &[f64],
    sigma_floor: f64,
) -> Result<ScaleStep> {
    check_floor(sigma_floor)?;
    if residuals.is_empty() {
        return Err(Error::param("no residuals"));
    }
    if residuals.iter().all(|&r| r == 0.0) {
        return Ok(ScaleStep { sigma: sigma_floor, degenerate: true, at_floor: true });
    }
    match model.closed_scale(residuals) {
        Some(s) if s.is_finite() => Ok(ScaleStep {
            sigma: s.max(sigma_floor),
            degenerate: false,
            at_floor: s <= sigma_floor,
        }),
        _ => scale_step_numeric(model, residuals, sigma_floor),
    }
}

/// Root of the scale-score equation by safeguarded Newton iteration on
/// `log σ`, ignoring any closed form.
pub fn scale_step_numeric<M: NoiseFamily + ?Sized>(
    model: &M,
    residuals: &[f64],
    sigma_floor: f64,
) -> Result<ScaleStep> {
    check_floor(sigma_floor)?;
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::domain("non-finite residual"));
    }
    let amax = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if amax == 0.0 {
        return Ok(ScaleStep { sigma: sigma_floor, degenerate: true, at_floor: true });
    }
    let mut a = sigma_floor.ln();
    let (fa, _) = scale_score(model, residuals, a);
    if !(fa > 0.0) {
        return Ok(ScaleStep { sigma: sigma_floor, degenerate: false, at_floor: true });
    }
    let mut b = (10.0 * amax + sigma_floor).ln();
    let mut expand = 0;
    while !(scale_score(model, residuals, b).0 < 0.0) {
        b += std::f64::consts::LN_10;
        expand += 1;
        if expand > 50 {
            return Err(Error::Numeric("cannot bracket the scale-score root".into()));
        }
    }
    let n = residuals.len() as f64;
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let mut t = rms.ln();
    if !(t > a && t < b) {
        t = 0.5 * (a + b);
    }
    let mut best = (f64::INFINITY, t);
    for _ in 0..300 {
        let (f, df) = scale_score(model, residuals, t);
        if f.abs() < best.0 {
            best = (f.abs(), t);
        }
        if f == 0.0 || f.abs() <= 1e-15 {
            break;
        }
        if f > 0.0 {
            a = t;
        } else {
            b = t;
        }
        if b - a <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            break;
        }
        let newton = t - f / df;
        t = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
    }
    let sigma = best.1.exp();
    if !sigma.is_finite() {
        return Err(Error::Numeric("scale step diverged".into()));
    }
    Ok(ScaleStep { sigma: sigma.max(sigma_floor), degenerate: false, at_floor: sigma <= sigma_floor })
}
