//! Predictive densities for `Y ~ MMN_d(θ, a, σ²_Y I, 𝓛₂)` from one
//! observation `X ~ MMN_d(θ, a, σ²_X I, 𝓛₁)`.
//!
//! The minimum risk equivariant density is `MMN_d(x, a, σ²_S I, 𝓛₃)` with
//! `σ²_S = σ²_X + σ²_Y` and `𝓛₃` the law of `V₂ − V₁`. Bayes densities under
//! priors that are flat along `a` and equal to `π₀(H₂θ)` across it differ
//! from it by the ratio `m(H₂w, σ²_W) / m(H₂x, σ²_X)`, where `m` is the
//! marginal of `π₀` under normal noise and
//! `w = (σ²_X y + σ²_Y x)/(σ²_X + σ²_Y)`, `σ²_W = σ²_X σ²_Y/(σ²_X + σ²_Y)`.

use std::f64::consts::{LN_2, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, MmnError, Result};
use crate::mixing::{difference_law, DifferenceLaw, Law, MixingLaw, ScalarLaw};
use crate::mmn::{canonical_frame, log_mixing_factor, CanonicalFrame, MmnDistribution};
use crate::posterior::{predictive_normal_prior, NormalPrior, NormalPriorPredictive};
use crate::specfn::{
    log_add_exp, log_bivariate_normal_cdf, log_norm_cdf, log_norm_interval, noncentral_chisq_cdf,
    noncentral_chisq_inverse_moment, LN_SQRT_2PI,
};

/// The pair `X ~ MMN_d(θ, a, σ²_X I, 𝓛₁)`, `Y ~ MMN_d(θ, a, σ²_Y I, 𝓛₂)`.
#[derive(Debug, Clone)]
pub struct PredictionProblem {
    a: DVector<f64>,
    sigma2_x: f64,
    sigma2_y: f64,
    law1: MixingLaw,
    law2: MixingLaw,
    difference: DifferenceLaw,
    frame: Option<CanonicalFrame>,
}

impl PredictionProblem {
    pub fn new(
        a: DVector<f64>,
        sigma2_x: f64,
        sigma2_y: f64,
        law1: MixingLaw,
        law2: MixingLaw,
    ) -> Result<Self> {
        if a.is_empty() {
            return Err(MmnError::Dimension("dimension must be at least one".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(domain("a has non-finite entries"));
        }
        for (name, v) in [("σ²_X", sigma2_x), ("σ²_Y", sigma2_y)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} must be positive, got {v}")));
            }
        }
        let difference = difference_law(&law1, &law2)?;
        let d = a.len();
        let frame = match canonical_frame(&a, &DMatrix::identity(d, d)) {
            Ok(f) => Some(f),
            Err(MmnError::DegenerateDirection) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            a,
            sigma2_x,
            sigma2_y,
            law1,
            law2,
            difference,
            frame,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn sigma2_x(&self) -> f64 {
        self.sigma2_x
    }

    pub fn sigma2_y(&self) -> f64 {
        self.sigma2_y
    }

    /// `σ²_S = σ²_X + σ²_Y`.
    pub fn sigma2_s(&self) -> f64 {
        self.sigma2_x + self.sigma2_y
    }

    /// `σ²_W = σ²_X σ²_Y / σ²_S`.
    pub fn sigma2_w(&self) -> f64 {
        self.sigma2_x * self.sigma2_y / self.sigma2_s()
    }

    pub fn law1(&self) -> &MixingLaw {
        &self.law1
    }

    pub fn law2(&self) -> &MixingLaw {
        &self.law2
    }

    /// Law `𝓛₃` of `V₂ − V₁`.
    pub fn difference(&self) -> &DifferenceLaw {
        &self.difference
    }

    /// Householder frame of `a`; `None` when `a = 0`.
    pub fn frame(&self) -> Option<&CanonicalFrame> {
        self.frame.as_ref()
    }

    pub fn x_distribution(&self, theta: DVector<f64>) -> Result<MmnDistribution> {
        MmnDistribution::isotropic(theta, self.a.clone(), self.sigma2_x, self.law1.clone())
    }

    pub fn y_distribution(&self, theta: DVector<f64>) -> Result<MmnDistribution> {
        MmnDistribution::isotropic(theta, self.a.clone(), self.sigma2_y, self.law2.clone())
    }

    /// `w = (σ²_X y + σ²_Y x) / σ²_S`.
    pub fn pooled(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        (y * self.sigma2_x + x * self.sigma2_y) / self.sigma2_s()
    }

    /// `H₂ t`, the coordinates of `t` across `a`.
    pub fn across(&self, t: &DVector<f64>) -> Result<DVector<f64>> {
        let frame = self.frame.as_ref().ok_or(MmnError::DegenerateDirection)?;
        let full = frame.h_matrix() * t;
        Ok(full.rows(1, self.dim() - 1).into_owned())
    }

    /// `‖H₂ t‖² = tᵀ(I − aaᵀ/aᵀa)t`.
    pub fn across_norm2(&self, t: &DVector<f64>) -> f64 {
        let aa = self.a.norm_squared();
        if aa == 0.0 {
            return t.norm_squared();
        }
        let along = t.dot(&self.a);
        (t.norm_squared() - along * along / aa).max(0.0)
    }

    fn check_point(&self, name: &str, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(MmnError::Dimension(format!(
                "{name} has length {}, expected {}",
                v.len(),
                self.dim()
            )));
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(domain(format!("{name} has non-finite entries")));
        }
        Ok(())
    }
}

/// Which predictive density estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Estimator {
    /// Minimum risk equivariant density.
    Mre,
    /// Bayes under `π(θ) = ‖H₂θ‖^{−(d−3)}`.
    HarmonicBayes,
    /// Plug-in density with James–Stein shrinkage of `H₂x`.
    #[serde(rename = "plugin_js")]
    PlugInJs,
    /// Bayes under the flat prior on `c_lo ≤ √2 h₂ᵀθ ≤ c_hi` (d = 2).
    RestrictedInterval { c_lo: f64, c_hi: f64 },
    /// Bayes under the flat prior on `‖H₂θ‖ ≤ radius`.
    RestrictedCylinder { radius: f64 },
    /// Bayes under a normal prior.
    NormalPriorBayes,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Mre => "mre",
            Estimator::HarmonicBayes => "harmonic_bayes",
            Estimator::PlugInJs => "plugin_js",
            Estimator::RestrictedInterval { .. } => "restricted_interval",
            Estimator::RestrictedCylinder { .. } => "restricted_cylinder",
            Estimator::NormalPriorBayes => "normal_prior_bayes",
        }
    }
}

#[derive(Debug, Clone)]
enum Form {
    Mre,
    Ratio { log_denominator: f64 },
    PlugIn { center: DVector<f64> },
    NormalPrior(Box<NormalPriorPredictive>),
}

/// A predictive density `q̂(· ; x)` for a fixed observation `x`.
#[derive(Debug, Clone)]
pub struct PredictiveDensity {
    estimator: Estimator,
    x: DVector<f64>,
    problem: PredictionProblem,
    form: Form,
}

impl PredictiveDensity {
    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn problem(&self) -> &PredictionProblem {
        &self.problem
    }

    pub fn log_density(&self, y: &DVector<f64>) -> Result<f64> {
        self.problem.check_point("y", y)?;
        let p = &self.problem;
        match &self.form {
            Form::Mre => mre_log_density(p, &self.x, y),
            Form::Ratio { log_denominator } => {
                let w = p.pooled(&self.x, y);
                let numerator = log_marginal(p, self.estimator, &w, p.sigma2_w())?;
                Ok(mre_log_density(p, &self.x, y)? + numerator - log_denominator)
            }
            Form::PlugIn { center } => plugin_log_density(p, &self.x, center, y),
            Form::NormalPrior(pred) => pred.log_density(y),
        }
    }

    /// Draws from the density; ratio-form estimators have no sampler.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let p = &self.problem;
        match &self.form {
            Form::Mre => {
                let s = p.sigma2_s().sqrt();
                let z = DVector::from_fn(p.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let v = p.difference.sample(rng);
                Ok(&self.x + z * s + &p.a * v)
            }
            Form::NormalPrior(pred) => Ok(pred.two_direction.sample(rng)),
            _ => Err(MmnError::Capability(format!(
                "{} is density-only",
                self.estimator.name()
            ))),
        }
    }
}

/// `log φ_d(r; σ² I)` and the tilt `(q, s) = (‖a‖²/σ², rᵀa/σ²)`.
fn isotropic_parts(a: &DVector<f64>, sigma2: f64, r: &DVector<f64>) -> (f64, f64, f64) {
    let d = r.len() as f64;
    let base = -d * LN_SQRT_2PI - 0.5 * d * sigma2.ln() - 0.5 * r.norm_squared() / sigma2;
    (base, a.norm_squared() / sigma2, r.dot(a) / sigma2)
}

/// `log q̂_U(y; x)`.
fn mre_log_density(p: &PredictionProblem, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    difference_mixture_log_density(&p.difference, &p.a, p.sigma2_s(), &(y - x))
}

/// `log` of the `MMN_d(0, a, σ² I, 𝓛₃)` density at `r`, with the closed forms
/// for Laplace and half-normal differences.
pub fn difference_mixture_log_density(
    diff: &DifferenceLaw,
    a: &DVector<f64>,
    s2: f64,
    r: &DVector<f64>,
) -> Result<f64> {
    let (base, q, s) = isotropic_parts(a, s2, r);
    if q == 0.0 {
        return Ok(base);
    }
    match *diff {
        DifferenceLaw::ClosedLaplace { scale } => Ok(base + log_laplace_factor(scale, q, s)),
        DifferenceLaw::ClosedTruncNormalDiff => half_normal_difference_log_density(a, s2, r),
        _ => Ok(base + log_mixing_factor(&Law::Difference(diff.clone()), q, s)?),
    }
}

/// `log E[exp(−q T²/2 + s T)]` for `T` Laplace with scale `b`: the two
/// half-lines each give `√(2π/q) e^{c²/2q} Φ(c/√q)` with `c = ±s − 1/b`.
fn log_laplace_factor(b: f64, q: f64, s: f64) -> f64 {
    let root = q.sqrt();
    let half = |c: f64| 0.5 * c * c / q + log_norm_cdf(c / root);
    -(2.0 * b).ln() + LN_SQRT_2PI - 0.5 * q.ln()
        + log_add_exp(half(s - 1.0 / b), half(-s - 1.0 / b))
}

/// `V₂ − V₁` for independent half-normals:
/// `4 φ_d(r; σ²I + 2aaᵀ) {Φ₂(−u/(f₁f₂), √2u/(σf₂); ρ) + Φ₂(u/(f₁f₂), −√2u/(σf₂); ρ)}`
/// with `u = rᵀa`, `f_k = √(σ² + k‖a‖²)` and `ρ = −σ/(√2 f₁)`.
fn half_normal_difference_log_density(a: &DVector<f64>, s2: f64, r: &DVector<f64>) -> Result<f64> {
    let d = r.len() as f64;
    let aa = a.norm_squared();
    let u = r.dot(a);
    let sigma = s2.sqrt();
    let f1 = (s2 + aa).sqrt();
    let f2 = (s2 + 2.0 * aa).sqrt();
    // |σ²I + 2aaᵀ| = σ^{2(d−1)} f₂², inverse by Sherman–Morrison
    let log_det = (d - 1.0) * s2.ln() + 2.0 * f2.ln();
    let quad = (r.norm_squared() - 2.0 * u * u / (f2 * f2)) / s2;
    let log_phi = -d * LN_SQRT_2PI - 0.5 * log_det - 0.5 * quad;
    let rho = -sigma / (SQRT_2 * f1);
    let h = u / (f1 * f2);
    let k = SQRT_2 * u / (sigma * f2);
    let pair = log_add_exp(
        log_bivariate_normal_cdf(-h, k, rho)?,
        log_bivariate_normal_cdf(h, -k, rho)?,
    );
    Ok(2.0 * LN_2 + log_phi + pair)
}

pub fn mre(problem: &PredictionProblem, x: &DVector<f64>) -> Result<PredictiveDensity> {
    problem.check_point("x", x)?;
    if !problem.difference.has_density() && problem.difference.atom().is_none() {
        return Err(MmnError::Capability(
            "difference law is sampler-only".into(),
        ));
    }
    Ok(PredictiveDensity {
        estimator: Estimator::Mre,
        x: x.clone(),
        problem: problem.clone(),
        form: Form::Mre,
    })
}

/// `m(z, σ²) = E‖z + σN‖^{3−d}` for `N ~ N_{d−1}(0, I)`, the marginal of the
/// harmonic prior `‖ζ‖^{3−d}` on `ℝ^{d−1}`.
///
/// Odd `d` uses `‖z‖^{3−d}(1 − e^{−λ} Σ_{k<(d−3)/2} λᵏ/k!)` with
/// `λ = ‖z‖²/2σ²` while the finite sum does not cancel, and the Poisson
/// series over central inverse moments otherwise.
pub fn harmonic_marginal(z: &DVector<f64>, sigma2: f64, d: usize) -> Result<f64> {
    Ok(log_harmonic_marginal(z.norm_squared(), sigma2, d)?.exp())
}

fn check_harmonic(sigma2: f64, d: usize) -> Result<()> {
    if d < 4 {
        return Err(domain(format!("harmonic prior needs d ≥ 4, got {d}")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(domain(format!("variance must be positive, got {sigma2}")));
    }
    Ok(())
}

/// `log m` as a function of `‖z‖²`.
pub fn log_harmonic_marginal(z2: f64, sigma2: f64, d: usize) -> Result<f64> {
    check_harmonic(sigma2, d)?;
    if d % 2 == 1 && z2 > 0.0 {
        let n = (d - 3) / 2;
        let lambda = 0.5 * z2 / sigma2;
        let mut term = (-lambda).exp();
        let mut head = 0.0;
        for k in 0..n {
            head += term;
            term *= lambda / (k + 1) as f64;
        }
        if head < 0.5 {
            return Ok(-(n as f64) * z2.ln() + (-head).ln_1p());
        }
    }
    harmonic_marginal_series(z2, sigma2, d).map(f64::ln)
}

/// `σ^{3−d} E T^{(3−d)/2}` for `T ~ χ²_{d−1}(‖z‖²/σ²)`, valid for every `d ≥ 4`.
pub fn harmonic_marginal_series(z2: f64, sigma2: f64, d: usize) -> Result<f64> {
    check_harmonic(sigma2, d)?;
    let p = 0.5 * (d as f64 - 3.0);
    let moment = noncentral_chisq_inverse_moment(d as f64 - 1.0, z2 / sigma2, p)?;
    Ok(sigma2.powf(-p) * moment)
}

/// `log q̂_U(y; x) + log m(H₂w, σ²_W) − log m(H₂x, σ²_X)`.
///
/// `marginal` receives `H₂t` and a variance. A zero or infinite marginal
/// gives an infinite log-density; an undefined ratio is a numerical error.
pub fn bayes_ratio_log_density<M: Fn(&DVector<f64>, f64) -> f64>(
    problem: &PredictionProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    marginal: M,
) -> Result<f64> {
    problem.check_point("x", x)?;
    problem.check_point("y", y)?;
    let w = problem.pooled(x, y);
    let top = marginal(&problem.across(&w)?, problem.sigma2_w()).ln();
    let bottom = marginal(&problem.across(x)?, problem.sigma2_x).ln();
    let value = mre_log_density(problem, x, y)? + top - bottom;
    if value.is_nan() {
        return Err(MmnError::Numerical(format!(
            "marginal ratio is undefined (log terms {top}, {bottom})"
        )));
    }
    Ok(value)
}

fn log_marginal(
    p: &PredictionProblem,
    estimator: Estimator,
    t: &DVector<f64>,
    sigma2: f64,
) -> Result<f64> {
    match estimator {
        Estimator::HarmonicBayes => log_harmonic_marginal(p.across_norm2(t), sigma2, p.dim()),
        Estimator::RestrictedInterval { c_lo, c_hi } => {
            let z = p.across(t)?[0];
            let sigma = sigma2.sqrt();
            // ∫_{c_lo/√2}^{c_hi/√2} φ((z − ζ)/σ)/σ dζ
            Ok(log_norm_interval(
                (c_lo / SQRT_2 - z) / sigma,
                (c_hi / SQRT_2 - z) / sigma,
            ))
        }
        Estimator::RestrictedCylinder { radius } => {
            let cdf = noncentral_chisq_cdf(
                p.dim() as f64 - 1.0,
                p.across_norm2(t) / sigma2,
                radius * radius / sigma2,
            )?;
            Ok(cdf.ln())
        }
        _ => Ok(0.0),
    }
}

fn ratio_density(
    problem: &PredictionProblem,
    estimator: Estimator,
    x: &DVector<f64>,
) -> Result<PredictiveDensity> {
    problem.check_point("x", x)?;
    if problem.frame.is_none() {
        return Err(MmnError::DegenerateDirection);
    }
    let log_denominator = log_marginal(problem, estimator, x, problem.sigma2_x)?;
    if !log_denominator.is_finite() {
        return Err(MmnError::Numerical(format!(
            "prior marginal at x is {}; x is too far outside the restricted set",
            log_denominator.exp()
        )));
    }
    mre(problem, x)?;
    Ok(PredictiveDensity {
        estimator,
        x: x.clone(),
        problem: problem.clone(),
        form: Form::Ratio { log_denominator },
    })
}

pub fn harmonic_bayes(problem: &PredictionProblem, x: &DVector<f64>) -> Result<PredictiveDensity> {
    check_harmonic(problem.sigma2_x, problem.dim())?;
    ratio_density(problem, Estimator::HarmonicBayes, x)
}

/// Bayes density for the flat prior on `c_lo ≤ √2 h₂ᵀθ ≤ c_hi` in `d = 2`.
/// For `a ∝ (1, 1)` the frame gives `h₂ = (1, −1)/√2`, so the set is
/// `c_lo ≤ θ₁ − θ₂ ≤ c_hi`.
pub fn restricted_interval(
    problem: &PredictionProblem,
    c_lo: f64,
    c_hi: f64,
    x: &DVector<f64>,
) -> Result<PredictiveDensity> {
    if problem.dim() != 2 {
        return Err(MmnError::Dimension(format!(
            "interval restriction needs d = 2, got {}",
            problem.dim()
        )));
    }
    if c_lo.is_nan() || c_hi.is_nan() || c_lo >= c_hi {
        return Err(domain(format!(
            "interval needs c_lo < c_hi, got [{c_lo}, {c_hi}]"
        )));
    }
    ratio_density(problem, Estimator::RestrictedInterval { c_lo, c_hi }, x)
}

/// Bayes density for the flat prior on the cylinder `‖H₂θ‖ ≤ radius`.
pub fn restricted_cylinder(
    problem: &PredictionProblem,
    radius: f64,
    x: &DVector<f64>,
) -> Result<PredictiveDensity> {
    if problem.dim() < 2 {
        return Err(MmnError::Dimension(
            "cylinder restriction needs d ≥ 2".into(),
        ));
    }
    if !(radius > 0.0) {
        return Err(domain(format!(
            "cylinder radius must be positive, got {radius}"
        )));
    }
    ratio_density(problem, Estimator::RestrictedCylinder { radius }, x)
}

/// James–Stein estimate `(1 − (d−3)σ²_X/‖z‖²) z`, taken as `0` at `z = 0`.
pub fn james_stein(z: &DVector<f64>, sigma2_x: f64, d: usize) -> DVector<f64> {
    let z2 = z.norm_squared();
    if z2 == 0.0 {
        return DVector::zeros(z.len());
    }
    z * (1.0 - (d as f64 - 3.0) * sigma2_x / z2)
}

/// `q₁(h₁ᵀy; x) · φ_{d−1}(H₂y − center; σ²_S I)` where `q₁` is the univariate
/// density `MMN₁(h₁ᵀx, ‖a‖, σ²_S, 𝓛₃)`.
fn plugin_log_density(
    p: &PredictionProblem,
    x: &DVector<f64>,
    center: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    let frame = p.frame.as_ref().ok_or(MmnError::DegenerateDirection)?;
    let h = frame.h_matrix();
    let d = p.dim();
    let hy = h * y;
    let r1 = hy[0] - h.row(0).dot(&x.transpose());
    let along = DVector::from_element(1, frame.a_norm());
    let first = difference_mixture_log_density(
        &p.difference,
        &along,
        p.sigma2_s(),
        &DVector::from_element(1, r1),
    )?;
    let s2 = p.sigma2_s();
    let rest = hy.rows(1, d - 1) - center;
    let m = (d - 1) as f64;
    let second = -m * LN_SQRT_2PI - 0.5 * m * s2.ln() - 0.5 * rest.norm_squared() / s2;
    Ok(first + second)
}

/// Plug-in density with `H₂θ` estimated by `shrink(H₂x)`.
pub fn plugin_with<F: Fn(&DVector<f64>) -> DVector<f64>>(
    problem: &PredictionProblem,
    x: &DVector<f64>,
    shrink: F,
) -> Result<PredictiveDensity> {
    problem.check_point("x", x)?;
    mre(problem, x)?;
    let center = shrink(&problem.across(x)?);
    if center.len() != problem.dim() - 1 {
        return Err(MmnError::Dimension(
            "estimate of H₂θ has the wrong length".into(),
        ));
    }
    Ok(PredictiveDensity {
        estimator: Estimator::PlugInJs,
        x: x.clone(),
        problem: problem.clone(),
        form: Form::PlugIn { center },
    })
}

pub fn plugin_js(problem: &PredictionProblem, x: &DVector<f64>) -> Result<PredictiveDensity> {
    let d = problem.dim();
    if d < 4 {
        return Err(domain(format!(
            "James–Stein shrinkage needs d ≥ 4, got {d}"
        )));
    }
    let s2x = problem.sigma2_x;
    plugin_with(problem, x, |z| james_stein(z, s2x, d))
}

/// Bayes density under a normal prior on `θ`.
pub fn normal_prior_bayes(
    problem: &PredictionProblem,
    prior: &NormalPrior,
    x: &DVector<f64>,
) -> Result<PredictiveDensity> {
    problem.check_point("x", x)?;
    let d = problem.dim();
    let pred = predictive_normal_prior(
        &problem.x_distribution(DVector::zeros(d))?,
        &problem.y_distribution(DVector::zeros(d))?,
        prior,
        x,
    )?;
    Ok(PredictiveDensity {
        estimator: Estimator::NormalPriorBayes,
        x: x.clone(),
        problem: problem.clone(),
        form: Form::NormalPrior(Box::new(pred)),
    })
}

/// Builds the estimator for a tag; `NormalPriorBayes` needs [`normal_prior_bayes`].
pub fn build(
    problem: &PredictionProblem,
    estimator: Estimator,
    x: &DVector<f64>,
) -> Result<PredictiveDensity> {
    match estimator {
        Estimator::Mre => mre(problem, x),
        Estimator::HarmonicBayes => harmonic_bayes(problem, x),
        Estimator::PlugInJs => plugin_js(problem, x),
        Estimator::RestrictedInterval { c_lo, c_hi } => restricted_interval(problem, c_lo, c_hi, x),
        Estimator::RestrictedCylinder { radius } => restricted_cylinder(problem, radius, x),
        Estimator::NormalPriorBayes => Err(MmnError::Capability(
            "normal-prior Bayes needs a prior".into(),
        )),
    }
}

/// `count` draws as the rows of a matrix.
pub fn sample_predictive<R: Rng + ?Sized>(
    pd: &PredictiveDensity,
    count: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(count, pd.problem.dim());
    for i in 0..count {
        out.set_row(i, &pd.sample(rng)?.transpose());
    }
    Ok(out)
}
