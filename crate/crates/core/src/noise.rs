//! Log-concave noise families known up to scale.
//!
//! A family is described by `l = −log f` (convex), its derivative `l̇`, and the
//! additive constant `l_const` that makes `exp[−(l + l_const)]` a normalized
//! density. The solver works with `l` directly; the pivotal calibration needs
//! the exact `−log f`, so the constant is kept separately.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma, Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_pieces, Quadrature};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Half-width of the integration window used for expectations under `f`.
pub const QUAD_HALF_WIDTH: f64 = 40.0;
const QUAD_TOL: f64 = 1e-8;

/// Operations the solver and the calibration need from a noise family.
///
/// The trait is object safe so that wrappers (e.g. a family with a shifted
/// constant) can be passed where a [`NoiseModel`] is expected.
pub trait NoiseFamily: Send + Sync {
    /// `l(y) = −log f(y) − l_const`.
    fn l(&self, y: f64) -> f64;
    /// Derivative (or the canonical subgradient element) of `l`.
    fn l_dot(&self, y: f64) -> f64;
    /// Additive constant so that `l + l_const = −log f` exactly.
    fn l_const(&self) -> f64;
    /// `d/dt [u l̇(u)]` along `u = r e^{−t}`, negated: `u l̇(u) + u² l̈(u)`.
    /// Used by the Newton steps of the scale update; must be finite everywhere.
    fn score_slope(&self, u: f64) -> f64;
    /// One draw from the normalized density.
    fn draw(&self, rng: &mut dyn RngCore) -> f64;
    /// Points where `l` fails to be three times differentiable.
    fn kinks(&self) -> &[f64] {
        &[]
    }
    /// Closed-form minimizer over σ of `R_n(β, σ)` given residuals, if any.
    fn closed_scale(&self, _residuals: &[f64]) -> Option<f64> {
        None
    }
}

/// Subbotin shape `r ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SubbotinShape(f64);

impl SubbotinShape {
    pub fn new(r: f64) -> Result<Self> {
        if !r.is_finite() || r < 1.0 {
            return Err(Error::param(format!(
                "subbotin shape must be a finite number ≥ 1 (got {r})"
            )));
        }
        Ok(Self(r))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SubbotinShape {
    type Error = Error;
    fn try_from(r: f64) -> Result<Self> {
        Self::new(r)
    }
}

impl From<SubbotinShape> for f64 {
    fn from(s: SubbotinShape) -> f64 {
        s.0
    }
}

/// The five supported families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum NoiseModel {
    Gaussian,
    Subbotin { r: SubbotinShape },
    Logistic,
    /// Huber's least favourable density; transition fixed at 1 in
    /// standardized residual units.
    Huber,
    Gumbel,
}

/// How to evaluate the Fisher information.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherMethod {
    Analytic,
    Quadrature,
}

/// Fisher information for the location-scale family at `(m, σ) = (0, 1)`.
///
/// Entries are expressed in the `(σ, location)` coordinates:
/// `scale = E(l̇(ξ)ξ)² − 1`, `location = E l̇(ξ)²`, `cross = E l̇(ξ)²ξ`.
/// In the inverse-scale coordinate `d = 1/σ` the off-diagonal changes sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherInfo {
    pub location: f64,
    pub scale: f64,
    pub cross: f64,
}

impl FisherInfo {
    /// The matrix ordered as (scale, location).
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.scale, self.cross], [self.cross, self.location]]
    }

    pub fn determinant(&self) -> f64 {
        self.scale * self.location - self.cross * self.cross
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let half_tr = 0.5 * (self.scale + self.location);
        let disc = (0.25 * (self.scale - self.location).powi(2) + self.cross * self.cross).sqrt();
        (half_tr - disc, half_tr + disc)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eigenvalues().0 > 0.0
    }

    /// Asymptotic covariance of `√n (σ̂ − 1, β̂₀ − β₀*)`.
    pub fn inverse(&self) -> Result<[[f64; 2]; 2]> {
        let det = self.determinant();
        if !(det > 0.0) {
            return Err(Error::Numeric(format!(
                "fisher information is not positive definite (det = {det:e})"
            )));
        }
        Ok([
            [self.location / det, -self.cross / det],
            [-self.cross / det, self.scale / det],
        ])
    }
}

/// Monte Carlo Fisher information and the standard error of each entry.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FisherMonteCarlo {
    pub estimate: FisherInfo,
    pub se: FisherInfo,
}

/// Monte Carlo estimates of `E l̇(ξ)` and `E l̇(ξ)ξ` with standard errors.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormalizationCheck {
    pub mean_score: f64,
    pub mean_score_times_xi: f64,
    pub se_score: f64,
    pub se_score_times_xi: f64,
}

fn huber_core_mass() -> f64 {
    // ∫_{-1}^{1} e^{-y²/2} dy
    let phi = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * PI).sqrt() * (2.0 * phi.cdf(1.0) - 1.0)
}

/// Normalizing constant of the Huber density `exp[−l(y)]`.
pub fn huber_normalizer() -> f64 {
    huber_core_mass() + 2.0 * (-0.5f64).exp()
}

impl NoiseModel {
    pub fn subbotin(r: f64) -> Result<Self> {
        Ok(NoiseModel::Subbotin {
            r: SubbotinShape::new(r)?,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::Subbotin { .. } => "subbotin",
            NoiseModel::Logistic => "logistic",
            NoiseModel::Huber => "huber",
            NoiseModel::Gumbel => "gumbel",
        }
    }

    pub fn shape(&self) -> Option<f64> {
        match self {
            NoiseModel::Subbotin { r } => Some(r.get()),
            _ => None,
        }
    }

    pub fn all_default() -> Vec<NoiseModel> {
        vec![
            NoiseModel::Gaussian,
            NoiseModel::Subbotin {
                r: SubbotinShape(1.5),
            },
            NoiseModel::Logistic,
            NoiseModel::Huber,
            NoiseModel::Gumbel,
        ]
    }

    /// Whether the profiled scale has a closed form (Gaussian and Subbotin).
    pub fn has_closed_scale_step(&self) -> bool {
        matches!(self, NoiseModel::Gaussian | NoiseModel::Subbotin { .. })
    }

    /// Points where `l̇` is not differentiable; used to split quadrature.
    pub fn kinks(&self) -> &'static [f64] {
        match self {
            NoiseModel::Huber => &[-1.0, 1.0],
            NoiseModel::Subbotin { .. } => &[0.0],
            _ => &[],
        }
    }

    /// Checked evaluation of `l`.
    pub fn eval_l(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::domain(format!("l evaluated at non-finite {y}")));
        }
        Ok(self.l(y))
    }

    /// Checked evaluation of `l̇`.
    pub fn eval_l_dot(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::domain(format!("l̇ evaluated at non-finite {y}")));
        }
        Ok(self.l_dot(y))
    }

    /// Second derivative where it exists.
    pub fn l_ddot(&self, y: f64) -> Option<f64> {
        match *self {
            NoiseModel::Gaussian => Some(1.0),
            NoiseModel::Subbotin { r } => {
                let r = r.get();
                if r == 2.0 {
                    Some(1.0)
                } else if y == 0.0 && r < 2.0 {
                    None
                } else {
                    Some((r - 1.0) * y.abs().powf(r - 2.0))
                }
            }
            NoiseModel::Logistic => {
                let t = (0.5 * y).tanh();
                Some(0.5 * (1.0 - t * t))
            }
            NoiseModel::Huber => match y.abs() {
                a if a < 1.0 => Some(1.0),
                a if a > 1.0 => Some(0.0),
                _ => None,
            },
            NoiseModel::Gumbel => Some((-y).exp()),
        }
    }

    /// The exact additive constant of `−log f`.
    pub fn neg_log_const(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian => 0.5 * (2.0 * PI).ln(),
            NoiseModel::Subbotin { r } => {
                let r = r.get();
                // ∫ exp(−|y|^r / r) dy = 2 r^{1/r − 1} Γ(1/r)
                std::f64::consts::LN_2 + (1.0 / r - 1.0) * r.ln() + ln_gamma(1.0 / r)
            }
            NoiseModel::Logistic | NoiseModel::Gumbel => 0.0,
            NoiseModel::Huber => huber_normalizer().ln(),
        }
    }

    /// Normalized density `f(y)`.
    pub fn density(&self, y: f64) -> f64 {
        (-(self.l(y) + self.l_const())).exp()
    }

    /// Cumulative distribution function, closed form for every family except
    /// Subbotin with `r ∉ {1, 2}` (quadrature).
    pub fn cdf(&self, y: f64) -> Result<f64> {
        let phi = Normal::new(0.0, 1.0).expect("standard normal");
        Ok(match *self {
            NoiseModel::Gaussian => phi.cdf(y),
            NoiseModel::Logistic => 1.0 / (1.0 + (-y).exp()),
            NoiseModel::Gumbel => (-(-y).exp()).exp(),
            NoiseModel::Huber => {
                let z = huber_normalizer();
                let tail = (-0.5f64).exp() / z;
                if y <= -1.0 {
                    (y + 0.5).exp() / z
                } else if y <= 1.0 {
                    tail + (2.0 * PI).sqrt() * (phi.cdf(y) - phi.cdf(-1.0)) / z
                } else {
                    1.0 - (-(y - 0.5)).exp() / z
                }
            }
            NoiseModel::Subbotin { r } if r.get() == 2.0 => phi.cdf(y),
            NoiseModel::Subbotin { r } if r.get() == 1.0 => {
                if y < 0.0 {
                    0.5 * y.exp()
                } else {
                    1.0 - 0.5 * (-y).exp()
                }
            }
            NoiseModel::Subbotin { .. } => {
                let lo = -QUAD_HALF_WIDTH;
                if y <= lo {
                    return Ok(0.0);
                }
                let hi = y.min(QUAD_HALF_WIDTH);
                let breaks: Vec<f64> = if hi > 0.0 { vec![lo, 0.0, hi] } else { vec![lo, hi] };
                integrate_pieces(&|t| self.density(t), &breaks, 1e-12)?.value
            }
        })
    }

    /// `count` i.i.d. draws from the normalized density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(Error::param("sample count must be at least 1"));
        }
        let mut out = Vec::with_capacity(count);
        let mut adapter = RngAdapter(rng);
        for _ in 0..count {
            out.push(self.draw(&mut adapter));
        }
        Ok(out)
    }

    /// Expectation of `g(ξ)` under the model, by adaptive quadrature over
    /// `[−40, 40]` split at the kinks of `l̇`.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> Result<Quadrature> {
        // A uniform pre-split keeps the first Kronrod pass from missing the mass.
        let mut breaks: Vec<f64> = (0..=32)
            .map(|k| -QUAD_HALF_WIDTH + 2.0 * QUAD_HALF_WIDTH * k as f64 / 32.0)
            .chain(self.kinks().iter().copied())
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        integrate_pieces(&|y| g(y) * self.density(y), &breaks, QUAD_TOL)
    }

    /// Monte Carlo self-test of `E l̇(ξ) = 0` and `E l̇(ξ)ξ = 1`.
    pub fn normalization_check<R: Rng + ?Sized>(
        &self,
        n_mc: usize,
        rng: &mut R,
    ) -> Result<NormalizationCheck> {
        if n_mc < 10_000 {
            return Err(Error::param(format!(
                "normalization check needs at least 10⁴ draws (got {n_mc})"
            )));
        }
        let draws = self.sample(rng, n_mc)?;
        let scores: Vec<f64> = draws.iter().map(|&x| self.l_dot(x)).collect();
        let products: Vec<f64> = draws.iter().zip(&scores).map(|(&x, &s)| s * x).collect();
        let (m1, se1) = mean_and_se(&scores);
        let (m2, se2) = mean_and_se(&products);
        Ok(NormalizationCheck {
            mean_score: m1,
            mean_score_times_xi: m2,
            se_score: se1,
            se_score_times_xi: se2,
        })
    }

    /// Fisher information `K̈(0, 1)`.
    pub fn fisher_info(&self, method: FisherMethod) -> Result<FisherInfo> {
        match method {
            FisherMethod::Analytic => Ok(self.fisher_analytic()),
            FisherMethod::Quadrature => {
                let location = self.expect(|y| self.l_dot(y).powi(2))?.value;
                let scale = self.expect(|y| (self.l_dot(y) * y).powi(2))?.value - 1.0;
                let cross = self.expect(|y| self.l_dot(y).powi(2) * y)?.value;
                Ok(FisherInfo {
                    location,
                    scale,
                    cross,
                })
            }
        }
    }

    /// Plug-in Monte Carlo estimate of the Fisher information from `count`
    /// draws, with the standard error of each entry.
    pub fn fisher_monte_carlo<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<FisherMonteCarlo> {
        if count < 2 {
            return Err(Error::param("need at least 2 draws"));
        }
        let xi = self.sample(rng, count)?;
        let stat = |g: &dyn Fn(f64) -> f64| {
            let v: Vec<f64> = xi.iter().map(|&y| g(y)).collect();
            let m = v.iter().sum::<f64>() / count as f64;
            let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (count - 1) as f64;
            (m, (var / count as f64).sqrt())
        };
        let (location, se_location) = stat(&|y| self.l_dot(y).powi(2));
        let (scale, se_scale) = stat(&|y| (self.l_dot(y) * y).powi(2));
        let (cross, se_cross) = stat(&|y| self.l_dot(y).powi(2) * y);
        Ok(FisherMonteCarlo {
            estimate: FisherInfo { location, scale: scale - 1.0, cross },
            se: FisherInfo { location: se_location, scale: se_scale, cross: se_cross },
        })
    }

    fn fisher_analytic(&self) -> FisherInfo {
        match *self {
            NoiseModel::Gaussian => FisherInfo {
                location: 1.0,
                scale: 2.0,
                cross: 0.0,
            },
            NoiseModel::Subbotin { r } => {
                let r = r.get();
                // E|ξ|^{2r−2} with |ξ|^r / r ~ Gamma(1/r); E|ξ|^{2r} = 1 + r.
                let location =
                    ((2.0 * r - 2.0) / r * r.ln() + ln_gamma((2.0 * r - 1.0) / r) - ln_gamma(1.0 / r))
                        .exp();
                FisherInfo {
                    location,
                    scale: r,
                    cross: 0.0,
                }
            }
            NoiseModel::Logistic => FisherInfo {
                location: 1.0 / 3.0,
                scale: (PI * PI + 3.0) / 9.0,
                cross: 0.0,
            },
            NoiseModel::Huber => {
                let core = huber_core_mass();
                let z = huber_normalizer();
                let tail = (-0.5f64).exp();
                FisherInfo {
                    location: core / z,
                    scale: (3.0 * core + 2.0 * tail) / z - 1.0,
                    cross: 0.0,
                }
            }
            NoiseModel::Gumbel => FisherInfo {
                location: 1.0,
                scale: PI * PI / 6.0 + (1.0 - EULER_GAMMA).powi(2),
                cross: EULER_GAMMA - 1.0,
            },
        }
    }

    /// `E(−log f(ξ))`, the population value of the risk at the truth.
    pub fn entropy(&self) -> Result<f64> {
        Ok(match *self {
            NoiseModel::Gaussian => 0.5 * (1.0 + (2.0 * PI).ln()),
            NoiseModel::Gumbel => EULER_GAMMA + 1.0,
            NoiseModel::Subbotin { r } => 1.0 / r.get() + self.neg_log_const(),
            _ => self.expect(|y| self.l(y))?.value + self.l_const(),
        })
    }
}

struct RngAdapter<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl NoiseFamily for NoiseModel {
    #[inline]
    fn l(&self, y: f64) -> f64 {
        match *self {
            NoiseModel::Gaussian => 0.5 * y * y,
            NoiseModel::Subbotin { r } => {
                let r = r.get();
                if r == 2.0 {
                    0.5 * y * y
                } else {
                    y.abs().powf(r) / r
                }
            }
            NoiseModel::Logistic => {
                let a = y.abs();
                a + 2.0 * (-a).exp().ln_1p()
            }
            NoiseModel::Huber => {
                let a = y.abs();
                if a <= 1.0 {
                    0.5 * y * y
                } else {
                    a - 0.5
                }
            }
            NoiseModel::Gumbel => y + (-y).exp(),
        }
    }

    #[inline]
    fn l_dot(&self, y: f64) -> f64 {
        match *self {
            NoiseModel::Gaussian => y,
            NoiseModel::Subbotin { r } => {
                let r = r.get();
                if r == 2.0 {
                    y
                } else if y == 0.0 {
                    0.0
                } else {
                    y.signum() * y.abs().powf(r - 1.0)
                }
            }
            NoiseModel::Logistic => (0.5 * y).tanh(),
            NoiseModel::Huber => y.clamp(-1.0, 1.0),
            NoiseModel::Gumbel => -(-y).exp_m1(),
        }
    }

    fn l_const(&self) -> f64 {
        self.neg_log_const()
    }

    fn kinks(&self) -> &[f64] {
        NoiseModel::kinks(self)
    }

    #[inline]
    fn score_slope(&self, u: f64) -> f64 {
        match *self {
            NoiseModel::Gaussian => 2.0 * u * u,
            NoiseModel::Subbotin { r } => r.get() * u.abs().powf(r.get()),
            NoiseModel::Logistic => {
                let t = (0.5 * u).tanh();
                u * t + 0.5 * u * u * (1.0 - t * t)
            }
            NoiseModel::Huber => {
                if u.abs() <= 1.0 {
                    2.0 * u * u
                } else {
                    u.abs()
                }
            }
            NoiseModel::Gumbel => -u * (-u).exp_m1() + u * u * (-u).exp(),
        }
    }

    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        match *self {
            NoiseModel::Gaussian => StandardNormal.sample(rng),
            NoiseModel::Subbotin { r } => {
                let r = r.get();
                let g: f64 = Gamma::new(1.0 / r, 1.0).expect("valid gamma").sample(rng);
                let magnitude = (r * g).powf(1.0 / r);
                if rng.gen::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
            NoiseModel::Logistic => {
                let u: f64 = Open01.sample(rng);
                (u / (1.0 - u)).ln()
            }
            NoiseModel::Gumbel => {
                let u: f64 = Open01.sample(rng);
                -(-u.ln()).ln()
            }
            NoiseModel::Huber => {
                let u: f64 = Open01.sample(rng);
                huber_quantile(u)
            }
        }
    }

    fn closed_scale(&self, residuals: &[f64]) -> Option<f64> {
        let n = residuals.len() as f64;
        match *self {
            NoiseModel::Gaussian => Some((residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt()),
            NoiseModel::Subbotin { r } => {
                let r = r.get();
                if r == 2.0 {
                    Some((residuals.iter().map(|x| x * x).sum::<f64>() / n).sqrt())
                } else if r == 1.0 {
                    Some(residuals.iter().map(|x| x.abs()).sum::<f64>() / n)
                } else {
                    Some((residuals.iter().map(|x| x.abs().powf(r)).sum::<f64>() / n).powf(1.0 / r))
                }
            }
            _ => None,
        }
    }
}

/// Piecewise inverse CDF of the Huber density.
fn huber_quantile(u: f64) -> f64 {
    let z = huber_normalizer();
    let tail = (-0.5f64).exp() / z;
    if u < tail {
        (u * z).ln() - 0.5
    } else if u > 1.0 - tail {
        0.5 - ((1.0 - u) * z).ln()
    } else {
        let phi = Normal::new(0.0, 1.0).expect("standard normal");
        let target = phi.cdf(-1.0) + (u - tail) * z / (2.0 * PI).sqrt();
        let mut y = phi.inverse_cdf(target.clamp(0.0, 1.0));
        // one Newton polish; statrs' inverse is accurate to ~1e-11 only
        y -= (phi.cdf(y) - target) / phi.pdf(y);
        y.clamp(-1.0, 1.0)
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Subbotin { r } => write!(f, "subbotin:{}", r.get()),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    /// Parses `gaussian`, `subbotin:<r>`, `logistic`, `huber` or `gumbel`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "gaussian" => Ok(NoiseModel::Gaussian),
            "logistic" => Ok(NoiseModel::Logistic),
            "huber" => Ok(NoiseModel::Huber),
            "gumbel" => Ok(NoiseModel::Gumbel),
            _ => {
                let Some(shape) = s.strip_prefix("subbotin:") else {
                    return Err(Error::param(format!(
                        "unknown noise model '{s}' (expected gaussian, subbotin:<r>, logistic, huber, gumbel)"
                    )));
                };
                let r: f64 = shape
                    .parse()
                    .map_err(|_| Error::param(format!("invalid subbotin shape '{shape}'")))?;
                NoiseModel::subbotin(r)
            }
        }
    }
}
