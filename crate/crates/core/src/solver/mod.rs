//! The exp-Lasso and the known-scale Lasso.
//!
//! The exp-Lasso minimizes `exp[R_n(β, σ)] + λ‖β_pen‖₁` jointly over `(β, σ)`
//! by alternating an exact scale step with an accelerated proximal-gradient
//! β-step. Every accepted step is guarded so that the recorded objective is
//! nonincreasing, and the output carries a KKT certificate. The joint problem
//! is not convex for every family, so the certificate is one of
//! stationarity, not global optimality.

mod scale;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

pub use scale::{scale_from_residuals, scale_score, scale_step_numeric, ScaleStep};

use crate::calibration::{calibrate, CalibrationResult};
use crate::design::{Dataset, DesignMeta};
use crate::error::{Error, Result};
use crate::noise::NoiseFamily;
use crate::rng::{child_seed, stream};

/// Tuning parameter: explicit, or calibrated from the pivotal statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Value(f64),
    Calibrate,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub lambda: Lambda,
    pub alpha: f64,
    pub eta: f64,
    /// Relative objective change below which the outer loop may stop.
    pub tol_obj: f64,
    /// KKT tolerance relative to `exp[R_n]/σ` at the solution.
    pub tol_kkt: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Lower guard on σ; `None` uses `1e-10·(sd(y) + ε)`.
    pub sigma_floor: Option<f64>,
    pub seed: u64,
    /// Monte Carlo replicates used when `lambda` is [`Lambda::Calibrate`].
    pub calibration_reps: usize,
    /// Number of starting points (the first is always `β = 0`).
    pub n_starts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: Lambda::Calibrate,
            alpha: 0.05,
            eta: 0.1,
            tol_obj: 1e-10,
            tol_kkt: 1e-8,
            max_outer: 200,
            max_inner: 10_000,
            sigma_floor: None,
            seed: 0,
            calibration_reps: 10_000,
            n_starts: 1,
        }
    }
}

impl FitConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self { lambda: Lambda::Value(lambda), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Lambda::Value(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::param(format!("lambda must be positive and finite (got {l})")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::param(format!("alpha must lie in (0, 1/2] (got {})", self.alpha)));
        }
        if !(self.eta >= 0.0 && self.eta < 1.0) {
            return Err(Error::param(format!("eta must lie in [0, 1) (got {})", self.eta)));
        }
        if !(self.tol_obj > 0.0 && self.tol_kkt > 0.0) {
            return Err(Error::param("tolerances must be positive"));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.n_starts == 0 {
            return Err(Error::param("iteration caps and n_starts must be at least 1"));
        }
        if let Some(f) = self.sigma_floor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::param(format!("sigma floor must be positive (got {f})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub sigma: f64,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub lambda: f64,
    pub kkt_residual: f64,
    pub kkt_tolerance: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub converged: bool,
    pub degenerate: bool,
    pub objective_trace: Vec<f64>,
}

/// JSON view of a fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iters: usize,
}

impl FitResult {
    pub fn summary(&self) -> FitSummary {
        FitSummary {
            beta: self.beta.iter().copied().collect(),
            sigma: self.sigma,
            active_set: self.active_set.clone(),
            objective: self.objective,
            kkt_residual: self.kkt_residual,
            converged: self.converged,
            iters: self.outer_iters,
        }
    }

    /// Whether the recorded objective never increases.
    pub fn trace_is_monotone(&self) -> bool {
        self.objective_trace.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Result of the known-scale Lasso.
#[derive(Debug, Clone)]
pub struct KnownScaleFit {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Stationarity residuals of the exp-Lasso objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kkt {
    pub beta: f64,
    pub sigma: f64,
}

impl Kkt {
    pub fn total(&self) -> f64 {
        self.beta.max(self.sigma)
    }
}

fn check_beta(ds: &Dataset, beta: &DVector<f64>) -> Result<()> {
    if beta.len() != ds.p() {
        return Err(Error::Dimension(format!(
            "beta has {} entries, design has {} columns",
            beta.len(),
            ds.p()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::domain("beta contains non-finite values"));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!("sigma must be positive and finite (got {sigma})")));
    }
    Ok(())
}

/// `X β`, skipping zero coefficients.
fn design_times(x: &DMatrix<f64>, beta: &DVector<f64>, out: &mut DVector<f64>) {
    out.fill(0.0);
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            out.axpy(b, &x.column(j), 1.0);
        }
    }
}

/// Neumaier-compensated mean of `l(rᵢ/σ)`; the objective is compared
/// exactly between iterates, so summation noise matters near the optimum.
fn mean_loss<M: NoiseFamily + ?Sized>(model: &M, y: &DVector<f64>, fit: &DVector<f64>, sigma: f64) -> f64 {
    let inv = 1.0 / sigma;
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (yi, fi) in y.iter().zip(fit.iter()) {
        let v = model.l((yi - fi) * inv);
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    (s + c) / y.len() as f64
}

fn penalty(beta: &DVector<f64>, mask: &[bool]) -> f64 {
    beta.iter().zip(mask).filter(|(_, &m)| m).map(|(b, _)| b.abs()).sum()
}

/// Empirical risk `R_n(β, σ) = (1/n) Σ l((yᵢ − xᵢβ)/σ) + l_const + log σ`.
pub fn risk<M: NoiseFamily + ?Sized>(ds: &Dataset, model: &M, beta: &DVector<f64>, sigma: f64) -> Result<f64> {
    check_beta(ds, beta)?;
    check_sigma(sigma)?;
    let mut fit = DVector::zeros(ds.n());
    design_times(ds.x(), beta, &mut fit);
    Ok(mean_loss(model, ds.y(), &fit, sigma) + model.l_const() + sigma.ln())
}

/// `exp[R_n(β, σ)] + λ‖β_pen‖₁`.
pub fn objective<M: NoiseFamily + ?Sized>(
    ds: &Dataset,
    model: &M,
    beta: &DVector<f64>,
    sigma: f64,
    lambda: f64,
) -> Result<f64> {
    Ok(risk(ds, model, beta, sigma)?.exp() + lambda * penalty(beta, ds.penalty_mask()))
}

/// Gradient of `exp[R_n]` with respect to `β` and to `σ`.
pub fn exp_risk_gradient<M: NoiseFamily + ?Sized>(
    ds: &Dataset,
    model: &M,
    beta: &DVector<f64>,
    sigma: f64,
) -> Result<(DVector<f64>, f64)> {
    check_beta(ds, beta)?;
    check_sigma(sigma)?;
    let n = ds.n() as f64;
    let mut fit = DVector::zeros(ds.n());
    design_times(ds.x(), beta, &mut fit);
    let e = (mean_loss(model, ds.y(), &fit, sigma) + model.l_const() + sigma.ln()).exp();
    let scores = DVector::from_iterator(
        ds.n(),
        ds.y().iter().zip(fit.iter()).map(|(y, f)| model.l_dot((y - f) / sigma)),
    );
    let gb = ds.x().tr_mul(&scores) * (-e / (n * sigma));
    let ul: f64 = ds
        .y()
        .iter()
        .zip(fit.iter())
        .map(|(y, f)| {
            let u = (y - f) / sigma;
            u * model.l_dot(u)
        })
        .sum::<f64>()
        / n;
    Ok((gb, e / sigma * (1.0 - ul)))
}

/// KKT residuals of `exp[R_n] + λ‖β_pen‖₁` at `(β, σ)`.
pub fn kkt_residual<M: NoiseFamily + ?Sized>(
    ds: &Dataset,
    model: &M,
    beta: &DVector<f64>,
    sigma: f64,
    lambda: f64,
) -> Result<Kkt> {
    let (g, gs) = exp_risk_gradient(ds, model, beta, sigma)?;
    Ok(Kkt { beta: beta_kkt(&g, beta, ds.penalty_mask(), lambda), sigma: gs.abs() })
}

fn beta_kkt(g: &DVector<f64>, beta: &DVector<f64>, mask: &[bool], w: f64) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..g.len() {
        let v = if !mask[j] {
            g[j].abs()
        } else if beta[j] != 0.0 {
            (g[j] + w * beta[j].signum()).abs()
        } else {
            (g[j].abs() - w).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Minimizes over `σ ≥ sigma_floor` at fixed `β`.
pub fn scale_step<M: NoiseFamily + ?Sized>(
    ds: &Dataset,
    model: &M,
    beta: &DVector<f64>,
    sigma_floor: f64,
) -> Result<ScaleStep> {
    check_beta(ds, beta)?;
    let mut fit = DVector::zeros(ds.n());
    design_times(ds.x(), beta, &mut fit);
    let r: Vec<f64> = ds.y().iter().zip(fit.iter()).map(|(y, f)| y - f).collect();
    scale_from_residuals(model, &r, sigma_floor)
}

/// Default σ floor: `1e-10·(sd(y) + ε)`.
pub fn default_sigma_floor(y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let mean = y.mean();
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    1e-10 * (sd + f64::EPSILON)
}

/// The tuning parameter a config asks for, running the calibration if needed.
pub fn resolve_lambda<M: NoiseFamily + ?Sized>(
    ds: &Dataset,
    model: &M,
    cfg: &FitConfig,
) -> Result<(f64, Option<CalibrationResult>)> {
    cfg.validate()?;
    match cfg.lambda {
        Lambda::Value(l) => Ok((l, None)),
        Lambda::Calibrate => {
            let cal = calibrate(
                ds.x(),
                ds.penalty_mask(),
                model,
                cfg.alpha,
                cfg.eta,
                cfg.calibration_reps,
                child_seed(cfg.seed, 1),
            )?;
            Ok((cal.lambda, Some(cal)))
        }
    }
}

/// `l(b + h) − l(b)` without subtracting two rounded values: Simpson's rule
/// on `l̇` when the step is short and stays on one smooth piece of `l`.
fn loss_change<M: NoiseFamily + ?Sized>(model: &M, b: f64, h: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    let a = b + h;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let smooth = !model.kinks().iter().any(|&k| k >= lo && k <= hi);
    if smooth && h.abs() <= 1e-3 * (1.0 + b.abs()) {
        h / 6.0 * (model.l_dot(b) + 4.0 * model.l_dot(b + 0.5 * h) + model.l_dot(a))
    } else {
        model.l(a) - model.l(b)
    }
}

/// Change of the penalized part `Σ_pen |βⱼ|` between two coefficient vectors.
fn penalty_change(new: &DVector<f64>, old: &DVector<f64>, mask: &[bool]) -> f64 {
    new.iter()
        .zip(old.iter())
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((a, b), _)| a.abs() - b.abs())
        .sum()
}

/// Exact increment of `exp[R_n]` when σ moves from `sigma` to `new_sigma` at
/// fixed residuals, given `e = exp[R_n]` at the old scale.
fn scale_change<M: NoiseFamily + ?Sized>(model: &M, r: &[f64], sigma: f64, new_sigma: f64, e: f64) -> f64 {
    let k = (sigma - new_sigma) / (sigma * new_sigma);
    let dm: f64 = r.iter().map(|&ri| loss_change(model, ri / sigma, ri * k)).sum::<f64>() / r.len() as f64;
    e * (dm + ((new_sigma - sigma) / sigma).ln_1p()).exp_m1()
}

/// Smooth part of a β-step: `h(β) = T(mean l(r/σ))` with `T` either
/// `σ e^{l_const} exp(·)` (exp-Lasso) or `· + l_const + log σ` (known scale).
struct Smooth<'a, M: ?Sized> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    model: &'a M,
    sigma: f64,
    exp: bool,
}

impl<M: NoiseFamily + ?Sized> Smooth<'_, M> {
    fn value(&self, fit: &DVector<f64>) -> f64 {
        let m = mean_loss(self.model, self.y, fit, self.sigma) + self.model.l_const() + self.sigma.ln();
        if self.exp {
            m.exp()
        } else {
            m
        }
    }

    /// `h(β + d) − h(β)` from the fit and value at β and `X d`.
    fn change(&self, fit: &DVector<f64>, value: f64, dfit: &DVector<f64>) -> f64 {
        let inv = 1.0 / self.sigma;
        let dm: f64 = self
            .y
            .iter()
            .zip(fit.iter())
            .zip(dfit.iter())
            .map(|((y, f), d)| loss_change(self.model, (y - f) * inv, -d * inv))
            .sum::<f64>()
            / self.y.len() as f64;
        if self.exp {
            value * dm.exp_m1()
        } else {
            dm
        }
    }

    fn gradient(&self, fit: &DVector<f64>, value: f64, scores: &mut DVector<f64>, out: &mut DVector<f64>) {
        let inv = 1.0 / self.sigma;
        for ((s, y), f) in scores.iter_mut().zip(self.y.iter()).zip(fit.iter()) {
            *s = self.model.l_dot((y - f) * inv);
        }
        let coef = if self.exp { value } else { 1.0 };
        self.x.tr_mul_to(scores, out);
        *out *= -coef * inv / self.y.len() as f64;
    }
}

struct Inner {
    beta: DVector<f64>,
    fit: DVector<f64>,
    /// Sum of the exact objective increments of all accepted steps (≤ 0).
    change: f64,
    iters: usize,
    kkt: f64,
    lipschitz: f64,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v.abs() <= t {
        0.0
    } else {
        v - t * v.signum()
    }
}

/// Monotone accelerated proximal gradient for `h(β) + w‖β_pen‖₁`, started
/// at `beta` and stopped once the KKT residual is at most `tol`. A step is
/// accepted only if its exact objective increment is nonpositive.
fn prox_gradient<M: NoiseFamily + ?Sized>(
    s: &Smooth<'_, M>,
    mask: &[bool],
    w: f64,
    beta: DVector<f64>,
    max_iter: usize,
    tol: f64,
    lipschitz: f64,
) -> Inner {
    let (n, p) = (s.x.nrows(), s.x.ncols());
    let mut x = beta;
    let mut fx = DVector::zeros(n);
    design_times(s.x, &x, &mut fx);
    let mut hx = s.value(&fx);
    let mut x_prev = x.clone();
    let mut fx_prev = fx.clone();
    let mut scores = DVector::zeros(n);
    let mut g = DVector::zeros(p);
    let mut yv = DVector::zeros(p);
    let mut fy = DVector::zeros(n);
    let mut z = DVector::zeros(p);
    let mut fz = DVector::zeros(n);
    let mut step = DVector::zeros(p);
    let mut dfit = DVector::zeros(n);
    let mut l = lipschitz.max(1e-300);
    let mut t = 1.0f64;
    let mut kkt = f64::INFINITY;
    let mut total = 0.0;
    let mut iters = 0;
    let mut since_check = usize::MAX;

    while iters < max_iter {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mut theta = (t - 1.0) / t_next;
        yv.copy_from(&x);
        fy.copy_from(&fx);
        let mut hy = hx;
        if theta > 0.0 {
            yv.axpy(theta, &x, 1.0);
            yv.axpy(-theta, &x_prev, 1.0);
            fy.axpy(theta, &fx, 1.0);
            fy.axpy(-theta, &fx_prev, 1.0);
            hy = s.value(&fy);
            if !hy.is_finite() {
                yv.copy_from(&x);
                fy.copy_from(&fx);
                hy = hx;
                theta = 0.0;
            }
        }
        s.gradient(&fy, hy, &mut scores, &mut g);
        if theta == 0.0 {
            // y = x, so this gradient certifies x
            kkt = beta_kkt(&g, &x, mask, w);
            since_check = 0;
            if kkt <= tol {
                break;
            }
        }
        iters += 1;
        let mut accepted = false;
        for _ in 0..100 {
            for j in 0..p {
                let v = yv[j] - g[j] / l;
                z[j] = if mask[j] { soft_threshold(v, w / l) } else { v };
            }
            step.copy_from(&z);
            step -= &yv;
            design_times(s.x, &step, &mut dfit);
            let rise = s.change(&fy, hy, &dfit);
            if !(rise.is_finite() && rise <= g.dot(&step) + 0.5 * l * step.norm_squared()) {
                l *= 2.0;
                continue;
            }
            accepted = true;
            design_times(s.x, &z, &mut fz);
            let hz = s.value(&fz);
            let delta = if theta == 0.0 {
                rise + w * penalty_change(&z, &x, mask)
            } else {
                step.copy_from(&z);
                step -= &x;
                design_times(s.x, &step, &mut dfit);
                s.change(&fx, hx, &dfit) + w * penalty_change(&z, &x, mask)
            };
            if delta <= 0.0 {
                let moved = (&yv - &z).dot(&(&z - &x));
                std::mem::swap(&mut x_prev, &mut x);
                std::mem::swap(&mut fx_prev, &mut fx);
                x.copy_from(&z);
                fx.copy_from(&fz);
                hx = hz;
                total += delta;
                t = if moved > 0.0 { 1.0 } else { t_next };
                if z == x_prev {
                    return finish(s, mask, w, x, fx, total, iters, l, &mut scores, &mut g);
                }
            } else {
                if theta == 0.0 {
                    // a plain proximal step no longer decreases: working precision reached
                    return finish(s, mask, w, x, fx, total, iters, l, &mut scores, &mut g);
                }
                x_prev.copy_from(&x);
                fx_prev.copy_from(&fx);
                t = 1.0;
            }
            break;
        }
        if !accepted {
            break;
        }
        l *= 0.9;
        since_check = since_check.saturating_add(1);
        if since_check >= 10 && t != 1.0 {
            s.gradient(&fx, hx, &mut scores, &mut g);
            kkt = beta_kkt(&g, &x, mask, w);
            since_check = 0;
            if kkt <= tol {
                break;
            }
        }
    }
    if since_check != 0 {
        s.gradient(&fx, hx, &mut scores, &mut g);
        kkt = beta_kkt(&g, &x, mask, w);
    }
    Inner { beta: x, fit: fx, change: total, iters, kkt, lipschitz: l }
}

#[allow(clippy::too_many_arguments)]
fn finish<M: NoiseFamily + ?Sized>(
    s: &Smooth<'_, M>,
    mask: &[bool],
    w: f64,
    x: DVector<f64>,
    fx: DVector<f64>,
    change: f64,
    iters: usize,
    l: f64,
    scores: &mut DVector<f64>,
    g: &mut DVector<f64>,
) -> Inner {
    let hx = s.value(&fx);
    s.gradient(&fx, hx, scores, g);
    let kkt = beta_kkt(g, &x, mask, w);
    Inner { beta: x, fit: fx, change, iters, kkt, lipschitz: l }
}

fn residuals(y: &DVector<f64>, fit: &DVector<f64>) -> Vec<f64> {
    y.iter().zip(fit.iter()).map(|(a, b)| a - b).collect()
}

fn initial_lipschitz(x: &DMatrix<f64>, scale: f64, sigma: f64) -> f64 {
    let n = x.nrows() as f64;
    let max_col = x.column_iter().map(|c| c.norm_squared() / n).fold(0.0, f64::max);
    scale * max_col.max(1e-12) / (sigma * sigma)
}

/// Fits the exp-Lasso.
pub fn fit_exp_lasso<M: NoiseFamily + ?Sized>(ds: &Dataset, model: &M, cfg: &FitConfig) -> Result<FitResult> {
    let (lambda, _) = resolve_lambda(ds, model, cfg)?;
    fit_exp_lasso_at(ds, model, cfg, lambda)
}

/// Fits the exp-Lasso at an explicit `λ`, ignoring `cfg.lambda`.
pub fn fit_exp_lasso_at<M: NoiseFamily + ?Sized>(
    ds: &Dataset,
    model: &M,
    cfg: &FitConfig,
    lambda: f64,
) -> Result<FitResult> {
    FitConfig { lambda: Lambda::Value(lambda), ..cfg.clone() }.validate()?;
    let mut best = fit_from(ds, model, cfg, lambda, DVector::zeros(ds.p()))?;
    for k in 1..cfg.n_starts {
        let mut rng = stream(child_seed(cfg.seed, 2), k as u64);
        let scale = default_sigma_floor(ds.y()) * 1e10 / (ds.p() as f64).sqrt();
        let start = DVector::from_fn(ds.p(), |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            if rng.gen::<f64>() < 0.5 {
                z * scale
            } else {
                0.0
            }
        });
        let cand = fit_from(ds, model, cfg, lambda, start)?;
        if cand.objective < best.objective {
            best = cand;
        }
    }
    Ok(best)
}

/// Alternating minimization from one starting point. The trace starts at the
/// directly evaluated objective and then accumulates the exact increments of
/// the accepted steps, all of which are nonpositive.
fn fit_from<M: NoiseFamily + ?Sized>(
    ds: &Dataset,
    model: &M,
    cfg: &FitConfig,
    lambda: f64,
    start: DVector<f64>,
) -> Result<FitResult> {
    let (x, y, mask) = (ds.x(), ds.y(), ds.penalty_mask());
    let floor = cfg.sigma_floor.unwrap_or_else(|| default_sigma_floor(y));
    let mut beta = start;
    let mut fit = DVector::zeros(ds.n());
    design_times(x, &beta, &mut fit);
    let step = scale_from_residuals(model, &residuals(y, &fit), floor)?;
    let mut sigma = step.sigma;
    let mut degenerate = step.at_floor;
    let e_of = |fit: &DVector<f64>, sigma: f64| {
        (mean_loss(model, y, fit, sigma) + model.l_const() + sigma.ln()).exp()
    };
    let mut e = e_of(&fit, sigma);
    let mut tracked = e + lambda * penalty(&beta, mask);
    if !tracked.is_finite() {
        return Err(Error::Numeric("objective is not finite at the starting point".into()));
    }
    let mut trace = vec![tracked];
    let mut lip = initial_lipschitz(x, e, sigma);
    let mut kkt = Kkt { beta: f64::INFINITY, sigma: 0.0 };
    let mut tol = cfg.tol_kkt * e / sigma;
    let mut converged = false;
    let mut outer = 0;
    let mut inner_total = 0;

    while outer < cfg.max_outer && !degenerate {
        outer += 1;
        let before = tracked;
        let smooth = Smooth { x, y, model, sigma, exp: true };
        let inner_tol = (0.5 * tol).max(0.1 * kkt.total().min(f64::MAX));
        let inner = prox_gradient(&smooth, mask, lambda, beta.clone(), cfg.max_inner, inner_tol, lip);
        inner_total += inner.iters;
        lip = inner.lipschitz;
        beta = inner.beta;
        fit = inner.fit;
        tracked += inner.change;
        e = e_of(&fit, sigma);

        let r = residuals(y, &fit);
        let step = scale_from_residuals(model, &r, floor)?;
        if step.sigma != sigma {
            let delta = scale_change(model, &r, sigma, step.sigma, e);
            if delta <= 0.0 {
                if step.at_floor {
                    degenerate = true;
                }
                let e_new = e_of(&fit, step.sigma);
                lip *= e_new / e * (sigma / step.sigma).powi(2);
                sigma = step.sigma;
                e = e_new;
                tracked += delta;
            }
        }
        trace.push(tracked);
        kkt = kkt_residual(ds, model, &beta, sigma, lambda)?;
        tol = cfg.tol_kkt * e / sigma;
        let change = (before - tracked) / tracked.abs().max(f64::MIN_POSITIVE);
        if change <= cfg.tol_obj && kkt.total() <= tol {
            converged = true;
            break;
        }
    }
    if outer == 0 {
        kkt = kkt_residual(ds, model, &beta, sigma, lambda)?;
    }
    let active_set = (0..ds.p()).filter(|&j| mask[j] && beta[j] != 0.0).collect();
    Ok(FitResult {
        objective: e + lambda * penalty(&beta, mask),
        beta,
        sigma,
        active_set,
        lambda,
        kkt_residual: kkt.total(),
        kkt_tolerance: tol,
        outer_iters: outer,
        inner_iters: inner_total,
        converged: converged && !degenerate,
        degenerate,
        objective_trace: trace,
    })
}

/// Lasso with the scale held at `sigma_star`:
/// `min R_n(β, σ*) + λ‖β_pen‖₁/σ*`.
pub fn fit_known_scale<M: NoiseFamily + ?Sized>(
    ds: &Dataset,
    model: &M,
    sigma_star: f64,
    lambda: f64,
) -> Result<KnownScaleFit> {
    fit_known_scale_with(ds, model, sigma_star, lambda, None, &FitConfig::with_lambda(lambda))
}

/// [`fit_known_scale`] with a warm start and explicit tolerances.
pub fn fit_known_scale_with<M: NoiseFamily + ?Sized>(
    ds: &Dataset,
    model: &M,
    sigma_star: f64,
    lambda: f64,
    start: Option<DVector<f64>>,
    cfg: &FitConfig,
) -> Result<KnownScaleFit> {
    check_sigma(sigma_star)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("lambda must be nonnegative and finite (got {lambda})")));
    }
    let start = start.unwrap_or_else(|| DVector::zeros(ds.p()));
    check_beta(ds, &start)?;
    let smooth = Smooth { x: ds.x(), y: ds.y(), model, sigma: sigma_star, exp: false };
    let w = lambda / sigma_star;
    let mut fit = DVector::zeros(ds.n());
    design_times(ds.x(), &start, &mut fit);
    let tol = cfg.tol_kkt / sigma_star;
    let lip = initial_lipschitz(ds.x(), 1.0, sigma_star);
    let inner = prox_gradient(&smooth, ds.penalty_mask(), w, start, cfg.max_inner * cfg.max_outer.min(10), tol, lip);
    Ok(KnownScaleFit {
        converged: inner.kkt <= tol,
        objective: smooth.value(&inner.fit) + w * penalty(&inner.beta, ds.penalty_mask()),
        beta: inner.beta,
        kkt_residual: inner.kkt,
        iters: inner.iters,
    })
}

/// Applies a fitted coefficient vector to raw predictor rows, undoing the
/// centering recorded at training time.
pub fn predict(meta: &DesignMeta, beta: &DVector<f64>, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
    if beta.len() != meta.p {
        return Err(Error::Dimension(format!(
            "beta has {} entries, model has {} columns",
            beta.len(),
            meta.p
        )));
    }
    let raw_p = if meta.intercept { meta.p - 1 } else { meta.p };
    if x_new.ncols() != raw_p {
        return Err(Error::Dimension(format!(
            "new data has {} columns, training data had {raw_p}",
            x_new.ncols()
        )));
    }
    if !meta.intercept {
        return Ok(x_new * beta);
    }
    let means = meta.raw_means.clone().unwrap_or_else(|| vec![0.0; raw_p]);
    let slopes = beta.rows(1, raw_p);
    let offset = beta[0] - slopes.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(x_new * slopes + DVector::from_element(x_new.nrows(), offset))
}

#[cfg(test)]
mod tests;
