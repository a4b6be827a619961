//! Seeded simulation studies: error rates at the calibrated λ, the detection
//! edge under the null, variable selection and efficiency of the scale and
//! intercept estimates.
//!
//! Every scenario draws its design once (unless `redraw_design` is set),
//! calibrates λ on that design, and then redraws only the noise in each
//! replication. Replication `i` uses noise stream `(seed', i)` with `seed'`
//! derived from the scenario seed, and results are collected in index order,
//! so reports are bitwise reproducible for any thread count.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{calibrate, exceedance, upper_rank, CalibrationResult};
use crate::design::{csv_io, generate_gaussian_design, generate_orthogonal_design, Dataset};
use crate::error::{Error, Result};
use crate::noise::{FisherMethod, NoiseFamily, NoiseModel};
use crate::rng::{child_seed, stream};
use crate::solver::{exp_risk_gradient, fit_exp_lasso_at, FitConfig, FitResult};

const TAG_DESIGN: u64 = 1;
const TAG_CALIBRATION: u64 = 2;
const TAG_NOISE: u64 = 3;

/// Where the raw design comes from.
#[derive(Debug, Clone)]
pub enum DesignSource {
    Gaussian,
    /// Centered, orthogonal columns with `Σ̂ = I` (requires `n > p`).
    Orthogonal,
    /// A fixed raw design (e.g. read from a file); `redraw_design` is ignored.
    Fixed(Arc<DMatrix<f64>>),
}

impl DesignSource {
    fn name(&self) -> &'static str {
        match self {
            DesignSource::Gaussian => "gaussian",
            DesignSource::Orthogonal => "orthogonal",
            DesignSource::Fixed(_) => "file",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub n: usize,
    pub p: usize,
    pub s_star: usize,
    pub beta_magnitude: f64,
    pub sigma_star: f64,
    /// True intercept `β₀*`.
    pub intercept: f64,
    pub model: NoiseModel,
    pub design: DesignSource,
    pub replications: usize,
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
    pub calibration_reps: usize,
    pub redraw_design: bool,
    pub solver: FitConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 100,
            p: 200,
            s_star: 0,
            beta_magnitude: 1.0,
            sigma_star: 1.0,
            intercept: 0.0,
            model: NoiseModel::Gaussian,
            design: DesignSource::Gaussian,
            replications: 100,
            alpha: 0.05,
            eta: 0.1,
            seed: 1,
            calibration_reps: 10_000,
            redraw_design: false,
            solver: FitConfig::default(),
        }
    }
}

/// The scalar part of a scenario, echoed in reports.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSummary {
    pub n: usize,
    pub p: usize,
    pub s_star: usize,
    pub beta_magnitude: f64,
    pub sigma_star: f64,
    pub intercept: f64,
    pub model: String,
    pub design: String,
    pub replications: usize,
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
    pub calibration_reps: usize,
    pub redraw_design: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p == 0 {
            return Err(Error::param(format!("need n ≥ 2 and p ≥ 1 (got n={}, p={})", self.n, self.p)));
        }
        if self.s_star > self.p {
            return Err(Error::param(format!("s_star = {} exceeds p = {}", self.s_star, self.p)));
        }
        if self.replications == 0 {
            return Err(Error::param("replications must be at least 1"));
        }
        if !(self.sigma_star > 0.0 && self.sigma_star.is_finite()) {
            return Err(Error::param(format!("sigma_star must be positive (got {})", self.sigma_star)));
        }
        if !self.beta_magnitude.is_finite() || !self.intercept.is_finite() {
            return Err(Error::param("beta_magnitude and intercept must be finite"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::param(format!("alpha must lie in (0, 1/2] (got {})", self.alpha)));
        }
        if !(self.eta >= 0.0 && self.eta < 1.0) {
            return Err(Error::param(format!("eta must lie in [0, 1) (got {})", self.eta)));
        }
        if let DesignSource::Fixed(x) = &self.design {
            if x.nrows() != self.n || x.ncols() != self.p {
                return Err(Error::Dimension(format!(
                    "design file is {}×{}, scenario says {}×{}",
                    x.nrows(),
                    x.ncols(),
                    self.n,
                    self.p
                )));
            }
        }
        if let DesignSource::Orthogonal = self.design {
            if self.n <= self.p {
                return Err(Error::param("orthogonal design needs n > p"));
            }
        }
        self.solver.validate()
    }

    pub fn summary(&self) -> ScenarioSummary {
        ScenarioSummary {
            n: self.n,
            p: self.p,
            s_star: self.s_star,
            beta_magnitude: self.beta_magnitude,
            sigma_star: self.sigma_star,
            intercept: self.intercept,
            model: self.model.to_string(),
            design: self.design.name().to_string(),
            replications: self.replications,
            alpha: self.alpha,
            eta: self.eta,
            seed: self.seed,
            calibration_reps: self.calibration_reps,
            redraw_design: self.redraw_design,
        }
    }

    /// `β*` over the columns of the intercept-augmented design.
    pub fn beta_star(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.p + 1);
        b[0] = self.intercept;
        for j in 1..=self.s_star {
            b[j] = self.beta_magnitude;
        }
        b
    }

    /// Indices of `S*` in the augmented design.
    pub fn support(&self) -> Vec<usize> {
        (1..=self.s_star).collect()
    }

    fn raw_design(&self, index: u64) -> Result<DMatrix<f64>> {
        let mut rng = stream(child_seed(self.seed, TAG_DESIGN), index);
        match &self.design {
            DesignSource::Gaussian => generate_gaussian_design(self.n, self.p, &mut rng),
            DesignSource::Orthogonal => generate_orthogonal_design(self.n, self.p, &mut rng),
            DesignSource::Fixed(x) => Ok(x.as_ref().clone()),
        }
    }

    fn redraws(&self) -> bool {
        self.redraw_design && !matches!(self.design, DesignSource::Fixed(_))
    }
}

/// A design with its calibration, shared by the replications that use it.
pub struct Setting {
    pub design: Dataset,
    pub calibration: CalibrationResult,
}

fn setting(cfg: &ScenarioConfig, index: u64) -> Result<Setting> {
    let raw = cfg.raw_design(index)?;
    let design = Dataset::new(DVector::zeros(cfg.n), raw, None)?.with_intercept();
    let calibration = calibrate(
        design.x(),
        design.penalty_mask(),
        &cfg.model,
        cfg.alpha,
        cfg.eta,
        cfg.calibration_reps,
        child_seed(child_seed(cfg.seed, TAG_CALIBRATION), index),
    )?;
    Ok(Setting { design, calibration })
}

/// Draws the response of replication `rep` on `design`.
fn response(cfg: &ScenarioConfig, design: &Dataset, beta_star: &DVector<f64>, rep: usize) -> Result<Dataset> {
    let mut rng = stream(child_seed(cfg.seed, TAG_NOISE), rep as u64);
    let noise = DVector::from_vec(cfg.model.sample(&mut rng, cfg.n)?);
    design.with_response(design.x() * beta_star + noise * cfg.sigma_star)
}

/// Runs `body` for every replication with its setting, in parallel and in order.
fn replicate<R, F>(cfg: &ScenarioConfig, body: F) -> Result<(Arc<Setting>, Vec<R>)>
where
    R: Send,
    F: Fn(&Setting, usize) -> Result<R> + Sync,
{
    cfg.validate()?;
    let first = Arc::new(setting(cfg, 0)?);
    let records: Result<Vec<R>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            if cfg.redraws() && rep > 0 {
                let own = setting(cfg, rep as u64)?;
                body(&own, rep)
            } else {
                body(&first, rep)
            }
        })
        .collect();
    Ok((first, records?))
}

/// Whether a fit passed its own certificate.
fn certified(fit: &FitResult) -> bool {
    fit.converged && fit.kkt_residual <= fit.kkt_tolerance && fit.trace_is_monotone()
}

/// Certificate bookkeeping shared by all studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateCounts {
    pub fits: usize,
    pub converged: usize,
    /// Converged fits whose KKT residual and trace both check out.
    pub certified: usize,
}

impl CertificateCounts {
    fn from_flags(flags: impl Iterator<Item = (bool, bool)>) -> Self {
        let mut c = CertificateCounts { fits: 0, converged: 0, certified: 0 };
        for (conv, cert) in flags {
            c.fits += 1;
            c.converged += conv as usize;
            c.certified += (conv && cert) as usize;
        }
        c
    }
}

/// Mean, standard error of the mean, median and upper quantile of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub se: f64,
    pub median: f64,
    pub upper_quantile: f64,
}

/// Empirical summary with the upper quantile at level `1 − alpha`.
pub fn moments(values: &[f64], alpha: f64) -> Moments {
    let n = values.len();
    if n == 0 {
        return Moments { mean: f64::NAN, se: f64::NAN, median: f64::NAN, upper_quantile: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    Moments {
        mean,
        se: (var / n as f64).sqrt(),
        median,
        upper_quantile: sorted[upper_rank(1.0 - alpha, n) - 1],
    }
}

/// Binomial proportion and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub count: usize,
    pub total: usize,
    pub rate: f64,
    pub se: f64,
}

pub fn proportion(count: usize, total: usize) -> Proportion {
    let rate = if total == 0 { f64::NAN } else { count as f64 / total as f64 };
    Proportion { count, total, rate, se: (rate * (1.0 - rate) / total as f64).sqrt() }
}

/// Common interface of the study reports.
pub trait Report: Serialize {
    const STUDY: &'static str;
    /// Writes one CSV row per replication (and per grid point, where relevant).
    fn write_records<W: Write>(&self, out: W) -> Result<()>;
    /// Recomputes the aggregates from the records and compares exactly.
    fn is_self_consistent(&self) -> bool;
    fn certificates(&self) -> CertificateCounts;
}

fn write_csv<W: Write, R: Serialize>(out: W, records: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- rates

#[derive(Debug, Clone, Serialize)]
pub struct RatesRecord {
    pub replication: usize,
    pub l2_error: f64,
    pub l1_error: f64,
    /// `(β̂ − β*)ᵀ Σ̂ (β̂ − β*)`
    pub prediction_error: f64,
    /// `|σ̂ − σ*|/σ*`
    pub sigma_rel_error: f64,
    pub sigma_hat: f64,
    pub n_active: usize,
    pub lambda: f64,
    pub converged: bool,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatesSummary {
    pub l2_error: Moments,
    pub l1_error: Moments,
    pub prediction_error: Moments,
    pub sigma_rel_error: Moments,
    /// `‖β̂ − β*‖₂ / (σ* λ √max(s*, 1))`
    pub normalized_l2: Moments,
    /// `|σ̂ − σ*|/σ* / (λ √max(s*, 1))`
    pub normalized_sigma: Moments,
    pub certificates: CertificateCounts,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatesReport {
    pub scenario: ScenarioSummary,
    pub lambda: f64,
    pub quantile: f64,
    pub records: Vec<RatesRecord>,
    pub summary: RatesSummary,
}

fn rates_summary(records: &[RatesRecord], cfg: &ScenarioSummary) -> RatesSummary {
    let col = |f: &dyn Fn(&RatesRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let root_s = (cfg.s_star.max(1) as f64).sqrt();
    RatesSummary {
        l2_error: moments(&col(&|r| r.l2_error), cfg.alpha),
        l1_error: moments(&col(&|r| r.l1_error), cfg.alpha),
        prediction_error: moments(&col(&|r| r.prediction_error), cfg.alpha),
        sigma_rel_error: moments(&col(&|r| r.sigma_rel_error), cfg.alpha),
        normalized_l2: moments(&col(&|r| r.l2_error / (cfg.sigma_star * r.lambda * root_s)), cfg.alpha),
        normalized_sigma: moments(&col(&|r| r.sigma_rel_error / (r.lambda * root_s)), cfg.alpha),
        certificates: CertificateCounts::from_flags(records.iter().map(|r| (r.converged, r.certified))),
    }
}

impl Report for RatesReport {
    const STUDY: &'static str = "rates";

    fn write_records<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.records)
    }

    fn is_self_consistent(&self) -> bool {
        rates_summary(&self.records, &self.scenario) == self.summary
    }

    fn certificates(&self) -> CertificateCounts {
        self.summary.certificates
    }
}

/// Error rates at the calibrated λ.
pub fn run_oracle_rates(cfg: &ScenarioConfig) -> Result<RatesReport> {
    let beta_star = cfg.beta_star();
    let (first, records) = replicate(cfg, |set, rep| {
        let ds = response(cfg, &set.design, &beta_star, rep)?;
        let lambda = set.calibration.lambda;
        let fit = fit_exp_lasso_at(&ds, &cfg.model, &cfg.solver, lambda)?;
        let diff = &fit.beta - &beta_star;
        let gram_diff = set.design.x() * &diff;
        Ok(RatesRecord {
            replication: rep,
            l2_error: diff.norm(),
            l1_error: diff.lp_norm(1),
            prediction_error: gram_diff.norm_squared() / cfg.n as f64,
            sigma_rel_error: (fit.sigma - cfg.sigma_star).abs() / cfg.sigma_star,
            sigma_hat: fit.sigma,
            n_active: fit.active_set.len(),
            lambda,
            converged: fit.converged,
            certified: certified(&fit),
        })
    })?;
    let scenario = cfg.summary();
    let summary = rates_summary(&records, &scenario);
    Ok(RatesReport {
        scenario,
        lambda: first.calibration.lambda,
        quantile: first.calibration.quantile,
        records,
        summary,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSweepRow {
    pub n: usize,
    pub lambda: f64,
    pub median_l2_error: f64,
    pub median_sigma_rel_error: f64,
    pub certificates: CertificateCounts,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSweep {
    pub rows: Vec<RateSweepRow>,
    /// Least-squares slope of log median ‖β̂ − β*‖₂ against log(λ√s*).
    pub slope: f64,
}

/// Repeats [`run_oracle_rates`] over a grid of sample sizes, each with its
/// own design and calibration.
pub fn run_rate_sweep(cfg: &ScenarioConfig, n_grid: &[usize]) -> Result<RateSweep> {
    if n_grid.is_empty() {
        return Err(Error::param("n grid must be nonempty"));
    }
    let mut rows = Vec::new();
    for &n in n_grid {
        let sub = ScenarioConfig { n, seed: child_seed(cfg.seed, n as u64), ..cfg.clone() };
        let rep = run_oracle_rates(&sub)?;
        rows.push(RateSweepRow {
            n,
            lambda: rep.lambda,
            median_l2_error: rep.summary.l2_error.median,
            median_sigma_rel_error: rep.summary.sigma_rel_error.median,
            certificates: rep.summary.certificates,
        });
    }
    let root_s = (cfg.s_star.max(1) as f64).sqrt();
    let xs: Vec<f64> = rows.iter().map(|r| (r.lambda * root_s).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median_l2_error.ln()).collect();
    Ok(RateSweep { rows, slope: ls_slope(&xs, &ys) })
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

// ---------------------------------------------------------------- edge

#[derive(Debug, Clone, Serialize)]
pub struct EdgeRecord {
    pub multiplier: f64,
    pub replication: usize,
    /// All penalized coefficients exactly zero.
    pub retained_null: bool,
    pub converged: bool,
    pub certified: bool,
    pub lambda: f64,
    /// Smallest λ at which the null fit satisfies the KKT conditions.
    pub null_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgePoint {
    pub multiplier: f64,
    pub lambda: f64,
    pub retention: Proportion,
    /// `P̂(λ*(1 − η) > λ)` from the calibration sample.
    pub exceedance: f64,
    /// Monte Carlo standard error of `exceedance`.
    pub exceedance_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeSummary {
    pub points: Vec<EdgePoint>,
    pub certificates: CertificateCounts,
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeReport {
    pub scenario: ScenarioSummary,
    pub quantile: f64,
    pub multipliers: Vec<f64>,
    /// Calibration samples behind the exceedance curve (sorted).
    #[serde(skip)]
    pub lambda_star_samples: Vec<f64>,
    pub records: Vec<EdgeRecord>,
    pub summary: EdgeSummary,
}

fn edge_summary(
    records: &[EdgeRecord],
    multipliers: &[f64],
    quantile: f64,
    samples: &[f64],
    eta: f64,
) -> EdgeSummary {
    let points = multipliers
        .iter()
        .map(|&m| {
            let rows: Vec<&EdgeRecord> = records.iter().filter(|r| r.multiplier == m).collect();
            let kept = rows.iter().filter(|r| r.retained_null).count();
            let lambda = m * quantile;
            let ex = exceedance(samples, lambda, eta);
            EdgePoint {
                multiplier: m,
                lambda,
                retention: proportion(kept, rows.len()),
                exceedance: ex,
                exceedance_se: (ex * (1.0 - ex) / samples.len() as f64).sqrt(),
            }
        })
        .collect();
    EdgeSummary {
        points,
        certificates: CertificateCounts::from_flags(records.iter().map(|r| (r.converged, r.certified))),
    }
}

impl Report for EdgeReport {
    const STUDY: &'static str = "edge";

    fn write_records<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.records)
    }

    fn is_self_consistent(&self) -> bool {
        edge_summary(
            &self.records,
            &self.multipliers,
            self.quantile,
            &self.lambda_star_samples,
            self.scenario.eta,
        ) == self.summary
    }

    fn certificates(&self) -> CertificateCounts {
        self.summary.certificates
    }
}

/// Location-scale MLE with every penalized coefficient held at its value in
/// `beta_fixed`. Returns the full coefficient vector and σ̂.
fn restricted_mle<M: NoiseFamily + ?Sized>(
    ds: &Dataset,
    model: &M,
    beta_fixed: &DVector<f64>,
    solver: &FitConfig,
) -> Result<(DVector<f64>, f64, FitResult)> {
    let offset = ds.x() * beta_fixed - ds.x().column(0) * beta_fixed[0];
    let y = ds.y() - offset;
    let ones = DMatrix::from_element(ds.n(), 1, 1.0);
    let loc = Dataset::new(y, ones, Some(vec![false]))?;
    let fit = fit_exp_lasso_at(&loc, model, solver, 1.0)?;
    let mut beta = beta_fixed.clone();
    beta[0] = fit.beta[0];
    Ok((beta, fit.sigma, fit))
}

/// Null retention and the exceedance curve over multiples of `F̂⁻¹(1 − α)`.
pub fn run_detection_edge(cfg: &ScenarioConfig, multipliers: &[f64]) -> Result<EdgeReport> {
    if cfg.s_star != 0 {
        return Err(Error::param("the detection-edge study needs s_star = 0"));
    }
    if multipliers.is_empty() || multipliers.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::param("multipliers must be positive and nonempty"));
    }
    let beta_star = cfg.beta_star();
    let (first, nested) = replicate(cfg, |set, rep| {
        let ds = response(cfg, &set.design, &beta_star, rep)?;
        let (b0, s0, _) = restricted_mle(&ds, &cfg.model, &DVector::zeros(ds.p()), &cfg.solver)?;
        let (g, _) = exp_risk_gradient(&ds, &cfg.model, &b0, s0)?;
        let threshold = g.iter().skip(1).fold(0.0f64, |m, v| m.max(v.abs()));
        multipliers
            .iter()
            .map(|&m| {
                let lambda = m * set.calibration.quantile;
                let fit = fit_exp_lasso_at(&ds, &cfg.model, &cfg.solver, lambda)?;
                Ok(EdgeRecord {
                    multiplier: m,
                    replication: rep,
                    retained_null: fit.active_set.is_empty(),
                    converged: fit.converged,
                    certified: certified(&fit),
                    lambda,
                    null_threshold: threshold,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut records: Vec<EdgeRecord> = nested.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        let ia = multipliers.iter().position(|&m| m == a.multiplier);
        let ib = multipliers.iter().position(|&m| m == b.multiplier);
        ia.cmp(&ib).then(a.replication.cmp(&b.replication))
    });
    let cal = &first.calibration;
    let summary = edge_summary(&records, multipliers, cal.quantile, &cal.lambda_star_samples, cfg.eta);
    Ok(EdgeReport {
        scenario: cfg.summary(),
        quantile: cal.quantile,
        multipliers: multipliers.to_vec(),
        lambda_star_samples: cal.lambda_star_samples.clone(),
        records,
        summary,
    })
}

// ---------------------------------------------------------------- selection

#[derive(Debug, Clone, Serialize)]
pub struct SelectionRecord {
    pub replication: usize,
    pub no_false_positive: bool,
    pub exact_support: bool,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Irrepresentable constant of the design used in this replication.
    pub eta0: f64,
    pub converged: bool,
    pub certified: bool,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    /// `η₀ ≤ η/(2 − η)`
    Satisfied,
    Violated,
    /// `s* = p`: nothing can be a false positive.
    NoInactiveSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumRate {
    pub stratum: Stratum,
    pub no_false_positive: Proportion,
    pub exact_support: Proportion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionSummary {
    pub threshold: f64,
    pub no_false_positive: Proportion,
    pub exact_support: Proportion,
    pub strata: Vec<StratumRate>,
    pub certificates: CertificateCounts,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub scenario: ScenarioSummary,
    pub lambda: f64,
    pub records: Vec<SelectionRecord>,
    pub summary: SelectionSummary,
}

fn stratum(eta0: f64, threshold: f64, s_star: usize, p: usize) -> Stratum {
    if s_star == p {
        Stratum::NoInactiveSet
    } else if eta0 <= threshold {
        Stratum::Satisfied
    } else {
        Stratum::Violated
    }
}

fn selection_summary(records: &[SelectionRecord], cfg: &ScenarioSummary) -> SelectionSummary {
    let threshold = cfg.eta / (2.0 - cfg.eta);
    let count = |rs: &[&SelectionRecord], f: &dyn Fn(&SelectionRecord) -> bool| rs.iter().filter(|r| f(r)).count();
    let all: Vec<&SelectionRecord> = records.iter().collect();
    let mut strata = Vec::new();
    for s in [Stratum::Satisfied, Stratum::Violated, Stratum::NoInactiveSet] {
        let rows: Vec<&SelectionRecord> =
            records.iter().filter(|r| stratum(r.eta0, threshold, cfg.s_star, cfg.p) == s).collect();
        if rows.is_empty() {
            continue;
        }
        strata.push(StratumRate {
            stratum: s,
            no_false_positive: proportion(count(&rows, &|r| r.no_false_positive), rows.len()),
            exact_support: proportion(count(&rows, &|r| r.exact_support), rows.len()),
        });
    }
    SelectionSummary {
        threshold,
        no_false_positive: proportion(count(&all, &|r| r.no_false_positive), all.len()),
        exact_support: proportion(count(&all, &|r| r.exact_support), all.len()),
        strata,
        certificates: CertificateCounts::from_flags(records.iter().map(|r| (r.converged, r.certified))),
    }
}

impl Report for SelectionReport {
    const STUDY: &'static str = "select";

    fn write_records<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.records)
    }

    fn is_self_consistent(&self) -> bool {
        selection_summary(&self.records, &self.scenario) == self.summary
    }

    fn certificates(&self) -> CertificateCounts {
        self.summary.certificates
    }
}

/// No-false-positive frequency at the calibrated λ, stratified by the
/// irrepresentable constant of the design.
pub fn run_variable_selection(cfg: &ScenarioConfig) -> Result<SelectionReport> {
    if cfg.s_star == 0 {
        return Err(Error::param("variable selection needs s_star ≥ 1"));
    }
    let beta_star = cfg.beta_star();
    let support = cfg.support();
    let eta0_first = {
        cfg.validate()?;
        let raw = cfg.raw_design(0)?;
        let ds = Dataset::new(DVector::zeros(cfg.n), raw, None)?.with_intercept();
        ds.irrepresentable_eta0(&support)?
    };
    let (first, records) = replicate(cfg, |set, rep| {
        let eta0 = if cfg.redraws() && rep > 0 {
            set.design.irrepresentable_eta0(&support)?
        } else {
            eta0_first
        };
        let ds = response(cfg, &set.design, &beta_star, rep)?;
        let lambda = set.calibration.lambda;
        let fit = fit_exp_lasso_at(&ds, &cfg.model, &cfg.solver, lambda)?;
        let fp = fit.active_set.iter().filter(|j| !support.contains(j)).count();
        let fneg = support.iter().filter(|&&j| fit.beta[j] == 0.0).count();
        Ok(SelectionRecord {
            replication: rep,
            no_false_positive: fp == 0,
            exact_support: fp == 0 && fneg == 0,
            false_positives: fp,
            false_negatives: fneg,
            eta0,
            converged: fit.converged,
            certified: certified(&fit),
            lambda,
        })
    })?;
    let scenario = cfg.summary();
    let summary = selection_summary(&records, &scenario);
    Ok(SelectionReport { scenario, lambda: first.calibration.lambda, records, summary })
}

// ---------------------------------------------------------------- efficiency

#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyRecord {
    pub replication: usize,
    /// `√n (σ̂ − σ*)/σ*`
    pub scale_dev: f64,
    /// `√n (β̂₀ − β₀*)/σ*`
    pub location_dev: f64,
    /// Same quantities for the MLE that knows `β*₋₀`.
    pub oracle_scale_dev: f64,
    pub oracle_location_dev: f64,
    pub converged: bool,
    pub certified: bool,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencySummary {
    /// Empirical covariance of `(scale_dev, location_dev)`.
    pub covariance: [[f64; 2]; 2],
    /// Asymptotic covariance from the Fisher information, same ordering.
    pub fisher_inverse: [[f64; 2]; 2],
    pub oracle_covariance: [[f64; 2]; 2],
    /// Median of `|scale_dev − oracle_scale_dev|`.
    pub median_paired_scale_gap: f64,
    /// Median of `|location_dev − oracle_location_dev|`.
    pub median_paired_location_gap: f64,
    pub certificates: CertificateCounts,
}

#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyReport {
    pub scenario: ScenarioSummary,
    pub lambda: f64,
    pub records: Vec<EfficiencyRecord>,
    pub summary: EfficiencySummary,
    pub notes: Vec<String>,
}

fn covariance(a: &[f64], b: &[f64]) -> [[f64; 2]; 2] {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let d = (n - 1.0).max(1.0);
    let saa = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / d;
    let sbb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / d;
    let sab = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / d;
    [[saa, sab], [sab, sbb]]
}

fn median(values: &mut [f64]) -> f64 {
    moments(values, 0.5).median
}

fn efficiency_summary(records: &[EfficiencyRecord], fisher_inverse: [[f64; 2]; 2]) -> EfficiencySummary {
    let col = |f: &dyn Fn(&EfficiencyRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    EfficiencySummary {
        covariance: covariance(&col(&|r| r.scale_dev), &col(&|r| r.location_dev)),
        fisher_inverse,
        oracle_covariance: covariance(&col(&|r| r.oracle_scale_dev), &col(&|r| r.oracle_location_dev)),
        median_paired_scale_gap: median(&mut col(&|r| (r.scale_dev - r.oracle_scale_dev).abs())),
        median_paired_location_gap: median(&mut col(&|r| (r.location_dev - r.oracle_location_dev).abs())),
        certificates: CertificateCounts::from_flags(records.iter().map(|r| (r.converged, r.certified))),
    }
}

impl Report for EfficiencyReport {
    const STUDY: &'static str = "efficiency";

    fn write_records<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.records)
    }

    fn is_self_consistent(&self) -> bool {
        efficiency_summary(&self.records, self.summary.fisher_inverse) == self.summary
    }

    fn certificates(&self) -> CertificateCounts {
        self.summary.certificates
    }
}

/// Scale and intercept estimates against their asymptotic covariance and
/// against the MLE that knows the slopes.
pub fn run_efficiency(cfg: &ScenarioConfig) -> Result<EfficiencyReport> {
    let fisher_inverse = cfg.model.fisher_info(FisherMethod::Analytic)?.inverse()?;
    let mut notes = vec![format!(
        "desk-scale surrogate of the asymptotic regime: n = {}, p = {}, s* = {}",
        cfg.n, cfg.p, cfg.s_star
    )];
    let regime = (cfg.n as f64).sqrt() / (cfg.p as f64).ln();
    if cfg.s_star as f64 >= regime {
        let msg = format!("s* = {} is not small against √n/log p = {regime:.2}", cfg.s_star);
        log::warn!("{msg}");
        notes.push(msg);
    }
    let beta_star = cfg.beta_star();
    let root_n = (cfg.n as f64).sqrt();
    let (first, records) = replicate(cfg, |set, rep| {
        let ds = response(cfg, &set.design, &beta_star, rep)?;
        let lambda = set.calibration.lambda;
        let fit = fit_exp_lasso_at(&ds, &cfg.model, &cfg.solver, lambda)?;
        let (ob, os, _) = restricted_mle(&ds, &cfg.model, &beta_star, &cfg.solver)?;
        let s = cfg.sigma_star;
        Ok(EfficiencyRecord {
            replication: rep,
            scale_dev: root_n * (fit.sigma - s) / s,
            location_dev: root_n * (fit.beta[0] - beta_star[0]) / s,
            oracle_scale_dev: root_n * (os - s) / s,
            oracle_location_dev: root_n * (ob[0] - beta_star[0]) / s,
            converged: fit.converged,
            certified: certified(&fit),
            lambda,
        })
    })?;
    let summary = efficiency_summary(&records, fisher_inverse);
    Ok(EfficiencyReport { scenario: cfg.summary(), lambda: first.calibration.lambda, records, summary, notes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(s_star: usize) -> ScenarioConfig {
        ScenarioConfig {
            n: 60,
            p: 20,
            s_star,
            replications: 12,
            calibration_reps: 500,
            seed: 5,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(small(0).validate().is_ok());
        assert!(ScenarioConfig { s_star: 21, ..small(0) }.validate().is_err());
        assert!(ScenarioConfig { replications: 0, ..small(0) }.validate().is_err());
        assert!(ScenarioConfig { alpha: 0.7, ..small(0) }.validate().is_err());
        let fixed = DesignSource::Fixed(Arc::new(DMatrix::zeros(10, 3)));
        assert!(ScenarioConfig { design: fixed, ..small(0) }.validate().is_err());
    }

    #[test]
    fn beta_star_layout() {
        let b = ScenarioConfig { intercept: 0.5, beta_magnitude: 2.0, ..small(3) }.beta_star();
        assert_eq!(b.len(), 21);
        assert_eq!(b[0], 0.5);
        assert_eq!(&b.as_slice()[1..5], &[2.0, 2.0, 2.0, 0.0]);
    }

    #[test]
    fn rates_report_is_reproducible_and_consistent() {
        let cfg = small(2);
        let a = run_oracle_rates(&cfg).unwrap();
        let b = run_oracle_rates(&cfg).unwrap();
        assert!(a.is_self_consistent());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.records.len(), 12);
        assert_eq!(a.certificates().fits, 12);
    }

    #[test]
    fn rates_normalized_errors_do_not_depend_on_sigma() {
        let a = run_oracle_rates(&small(2)).unwrap();
        let b = run_oracle_rates(&ScenarioConfig { sigma_star: 10.0, beta_magnitude: 10.0, ..small(2) }).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!((rb.l2_error - 10.0 * ra.l2_error).abs() <= 1e-6 * rb.l2_error.max(1e-3));
            assert!((rb.sigma_rel_error - ra.sigma_rel_error).abs() <= 1e-6);
        }
        let (na, nb) = (a.summary.normalized_l2.median, b.summary.normalized_l2.median);
        assert!((na - nb).abs() <= 1e-6 * na);
    }

    #[test]
    fn edge_report_schema_and_threshold_consistency() {
        let cfg = small(0);
        let rep = run_detection_edge(&cfg, &[0.3, 1.5]).unwrap();
        assert!(rep.is_self_consistent());
        assert_eq!(rep.records.len(), 24);
        let mut buf = Vec::new();
        rep.write_records(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("multiplier,replication,retained_null"));
        for r in &rep.records {
            // retention is decided by the exact threshold up to solver tolerance
            if r.lambda > r.null_threshold * (1.0 + 1e-6) {
                assert!(r.retained_null);
            }
            if r.lambda < r.null_threshold * (1.0 - 1e-6) {
                assert!(!r.retained_null);
            }
        }
        assert!(run_detection_edge(&small(1), &[1.0]).is_err());
    }

    #[test]
    fn selection_with_no_inactive_set() {
        let cfg = ScenarioConfig { p: 3, s_star: 3, n: 80, beta_magnitude: 3.0, ..small(3) };
        let rep = run_variable_selection(&cfg).unwrap();
        assert!(rep.is_self_consistent());
        assert_eq!(rep.summary.no_false_positive.rate, 1.0);
        assert_eq!(rep.summary.strata.len(), 1);
        assert_eq!(rep.summary.strata[0].stratum, Stratum::NoInactiveSet);
    }

    #[test]
    fn orthogonal_design_has_zero_eta0() {
        let cfg = ScenarioConfig { design: DesignSource::Orthogonal, beta_magnitude: 2.0, ..small(2) };
        let rep = run_variable_selection(&cfg).unwrap();
        assert!(rep.records.iter().all(|r| r.eta0 < 1e-10));
        assert_eq!(rep.summary.strata[0].stratum, Stratum::Satisfied);
    }

    #[test]
    fn efficiency_report_shapes() {
        let rep = run_efficiency(&ScenarioConfig { n: 200, ..small(1) }).unwrap();
        assert!(rep.is_self_consistent());
        assert_eq!(rep.summary.fisher_inverse, [[0.5, 0.0], [0.0, 1.0]]);
        assert!(rep.summary.covariance[0][0] > 0.0);
    }

    #[test]
    fn redrawn_designs_differ_per_replication() {
        let cfg = ScenarioConfig { redraw_design: true, replications: 3, ..small(2) };
        let rep = run_variable_selection(&cfg).unwrap();
        assert_ne!(rep.records[0].eta0, rep.records[1].eta0);
    }

    #[test]
    fn identical_for_any_thread_count() {
        let cfg = small(0);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let rep = pool.install(|| run_detection_edge(&cfg, &[0.5, 1.2]).unwrap());
            let mut buf = Vec::new();
            rep.write_records(&mut buf).unwrap();
            (buf, serde_json::to_string(&rep).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn moments_and_slope() {
        let m = moments(&[1.0, 2.0, 3.0, 4.0], 0.25);
        assert_eq!(m.mean, 2.5);
        assert_eq!(m.median, 2.5);
        assert_eq!(m.upper_quantile, 3.0);
        assert!((ls_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-15);
    }
}
