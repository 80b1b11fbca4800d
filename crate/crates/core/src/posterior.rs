//! Posterior and Bayes predictive distributions under normal priors.
//!
//! Given `V = k`, the normal model is conjugate: with `P = Σ(Σ+Δ)⁻¹`,
//! `θ | x, k ~ N((I−P)(x − k a) + Pμ, (I−P)Σ)` and `X | k ~ N(μ + k a, Σ+Δ)`.
//! Mixing over the posterior law of `k`, which tilts `𝓛` by
//! `exp(−A k²/2 + B k)`, gives an MMN posterior with direction `−(I−P)a`.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, MmnError, Result};
use crate::mixing::{
    difference_law, difference_law_mean_shifted, posterior_mixing, tilted_mean, Law, MixingLaw,
    ScalarLaw,
};
use crate::mmn::{cholesky, MmnDistribution, TwoDirectionMmn};
use crate::specfn::reverse_mills_unchecked;

/// Prior `θ ~ N_d(μ, Δ)`, or the flat prior `π(θ) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalPrior {
    mu: DVector<f64>,
    delta: Option<DMatrix<f64>>,
}

impl NormalPrior {
    pub fn new(mu: DVector<f64>, delta: DMatrix<f64>) -> Result<Self> {
        if delta.nrows() != mu.len() {
            return Err(MmnError::Dimension(
                "prior covariance does not match its mean".into(),
            ));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(domain("prior mean has non-finite entries"));
        }
        cholesky(&delta)?;
        Ok(Self {
            mu,
            delta: Some(delta),
        })
    }

    /// `N_d(μ, τ² I)`.
    pub fn isotropic(mu: DVector<f64>, tau2: f64) -> Result<Self> {
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(domain(format!(
                "prior variance must be positive, got {tau2}"
            )));
        }
        let d = mu.len();
        Self::new(mu, DMatrix::identity(d, d) * tau2)
    }

    pub fn uniform(d: usize) -> Self {
        Self {
            mu: DVector::zeros(d),
            delta: None,
        }
    }

    pub fn is_uniform(&self) -> bool {
        self.delta.is_none()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn delta(&self) -> Option<&DMatrix<f64>> {
        self.delta.as_ref()
    }
}

/// `θ | x ~ MMN_d((I−P)x + Pμ, −(I−P)a, (I−P)Σ, 𝓛*)`.
#[derive(Debug, Clone)]
pub struct PosteriorMmn {
    pub location: DVector<f64>,
    pub a_star: DVector<f64>,
    pub sigma_post: DMatrix<f64>,
    /// Tilted mixing law `𝓛*` with density `∝ g(k) exp(−A k²/2 + B k)`.
    pub law_star: MixingLaw,
    pub p_matrix: DMatrix<f64>,
    pub tilt_a: f64,
    pub tilt_b: f64,
    /// The untilted mixing law, kept for quadrature of `E(K′)`.
    prior_law: MixingLaw,
}

impl PosteriorMmn {
    pub fn distribution(&self) -> Result<MmnDistribution> {
        MmnDistribution::new(
            self.location.clone(),
            self.a_star.clone(),
            self.sigma_post.clone(),
            self.law_star.clone(),
        )
    }

    pub fn log_density(&self, theta: &DVector<f64>) -> Result<f64> {
        self.distribution()?.log_density(theta)
    }

    /// `E(K′)` under `𝓛*`: closed form for truncated normals, quadrature otherwise.
    pub fn mixing_mean(&self) -> Result<f64> {
        match self.law_star {
            MixingLaw::TruncNormal { loc, scale } => {
                Ok(loc + scale * reverse_mills_unchecked(loc / scale))
            }
            MixingLaw::Degenerate { value } => Ok(value),
            _ if self.tilt_a == 0.0 && self.tilt_b == 0.0 => self.prior_law.mean(),
            _ => tilted_mean(&self.prior_law, self.tilt_a, self.tilt_b),
        }
    }
}

fn mixing_law_of(dist: &MmnDistribution) -> Result<MixingLaw> {
    dist.law().as_mixing().cloned().ok_or_else(|| {
        MmnError::Capability("posterior needs a mixing law on (0, ∞) or a point mass".into())
    })
}

pub fn posterior(
    dist: &MmnDistribution,
    prior: &NormalPrior,
    x: &DVector<f64>,
) -> Result<PosteriorMmn> {
    let d = dist.dim();
    if x.len() != d || prior.mu().len() != d {
        return Err(MmnError::Dimension(
            "observation, prior and model differ in dimension".into(),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(domain("observation has non-finite entries"));
    }
    let law = mixing_law_of(dist)?;
    let sigma = dist.sigma();
    let Some(delta) = prior.delta() else {
        return Ok(PosteriorMmn {
            location: x.clone(),
            a_star: -dist.a(),
            sigma_post: sigma.clone(),
            law_star: law.clone(),
            p_matrix: DMatrix::zeros(d, d),
            tilt_a: 0.0,
            tilt_b: 0.0,
            prior_law: law,
        });
    };
    let total = sigma + delta;
    let chol = total
        .clone()
        .cholesky()
        .ok_or(MmnError::NotPositiveDefinite)?;
    // P = Σ(Σ+Δ)⁻¹ = ((Σ+Δ)⁻¹Σ)ᵀ
    let p = chol.solve(sigma).transpose();
    let complement = DMatrix::identity(d, d) - &p;
    let solved_a = chol.solve(dist.a());
    let tilt_a = dist.a().dot(&solved_a);
    let tilt_b = (x - prior.mu()).dot(&solved_a);
    let law_star = posterior_mixing(&law, tilt_a, tilt_b)?;
    let post = &complement * sigma;
    Ok(PosteriorMmn {
        location: &complement * x + &p * prior.mu(),
        a_star: -(&complement * dist.a()),
        sigma_post: (&post + post.transpose()) * 0.5,
        law_star,
        p_matrix: p,
        tilt_a,
        tilt_b,
        prior_law: law,
    })
}

/// `E(θ | x) = (I−P)x + Pμ − (I−P)a E(K′)`.
pub fn posterior_mean(post: &PosteriorMmn) -> Result<DVector<f64>> {
    let mean = post.mixing_mean()?;
    if !mean.is_finite() {
        return Err(MmnError::Numerical(
            "posterior mixing law has no finite mean".into(),
        ));
    }
    Ok(&post.location + &post.a_star * mean)
}

/// `σ²` when `m = σ² I`.
pub(crate) fn scaled_identity(m: &DMatrix<f64>) -> Option<f64> {
    let s = m[(0, 0)];
    let tol = 1e-12 * s.abs();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let want = if i == j { s } else { 0.0 };
            if (m[(i, j)] - want).abs() > tol {
                return None;
            }
        }
    }
    (s > 0.0).then_some(s)
}

/// Bayes predictive density for `Y` under an isotropic normal prior.
#[derive(Debug, Clone)]
pub struct NormalPriorPredictive {
    /// `MMN_d(ωx + (1−ω)μ, −ω a_X, a_Y, (ωσ²_X + σ²_Y) I, (K′, J′))`.
    pub two_direction: TwoDirectionMmn,
    /// Single-direction form along `a_X` with the law of `cJ′ − ωK′`, when
    /// `a_Y = c a_X`; along `a_Y` with `J′` when `a_X = 0`.
    pub collapsed: Option<MmnDistribution>,
    pub omega: f64,
    pub tilt_a: f64,
    pub tilt_b: f64,
}

impl NormalPriorPredictive {
    pub fn log_density(&self, y: &DVector<f64>) -> Result<f64> {
        self.two_direction.log_density(y)
    }
}

/// `c` with `a_y = c a_x`, if any.
fn proportionality(a_x: &DVector<f64>, a_y: &DVector<f64>) -> Option<f64> {
    let nx = a_x.norm_squared();
    if nx == 0.0 {
        return None;
    }
    let c = a_x.dot(a_y) / nx;
    let resid = (a_y - a_x * c).amax();
    (resid <= 1e-12 * a_y.amax().max(a_x.amax())).then_some(c)
}

pub fn predictive_normal_prior(
    dist_x: &MmnDistribution,
    dist_y: &MmnDistribution,
    prior: &NormalPrior,
    x: &DVector<f64>,
) -> Result<NormalPriorPredictive> {
    let d = dist_x.dim();
    if dist_y.dim() != d || x.len() != d || prior.mu().len() != d {
        return Err(MmnError::Dimension(
            "observation, prior and models differ in dimension".into(),
        ));
    }
    let s2x = scaled_identity(dist_x.sigma()).ok_or_else(|| {
        MmnError::UnsupportedCovariance("Σ_X must be σ²_X I; whiten first".into())
    })?;
    let s2y = scaled_identity(dist_y.sigma()).ok_or_else(|| {
        MmnError::UnsupportedCovariance("Σ_Y must be σ²_Y I; whiten first".into())
    })?;
    let (omega, center) = match prior.delta() {
        None => (1.0, x.clone()),
        Some(delta) => {
            let tau2 = scaled_identity(delta).ok_or_else(|| {
                MmnError::UnsupportedCovariance("prior covariance must be τ² I".into())
            })?;
            let omega = tau2 / (tau2 + s2x);
            (omega, x * omega + prior.mu() * (1.0 - omega))
        }
    };
    let post = posterior(dist_x, prior, x)?;
    let k_law = post.law_star.clone();
    let j_law = dist_y.law().clone();
    let a_x = dist_x.a();
    let a_y = dist_y.a();
    let var = omega * s2x + s2y;
    let sigma = DMatrix::identity(d, d) * var;
    let two_direction = TwoDirectionMmn::new(
        center.clone(),
        -(a_x * omega),
        a_y.clone(),
        sigma.clone(),
        k_law.clone(),
        j_law.clone(),
    )?;
    let collapsed = if a_x.norm_squared() == 0.0 {
        Some(MmnDistribution::new(center, a_y.clone(), sigma, j_law)?)
    } else if let Some(c) = proportionality(a_x, a_y) {
        match j_law.as_mixing() {
            Some(j) => {
                let law = if omega == 1.0 && c == 1.0 {
                    difference_law(&k_law, j)?
                } else {
                    difference_law_mean_shifted(&[k_law, j.clone()], &[-omega, c])?
                };
                Some(MmnDistribution::new(
                    center,
                    a_x.clone(),
                    sigma,
                    Law::from(law),
                )?)
            }
            None => None,
        }
    } else {
        None
    };
    Ok(NormalPriorPredictive {
        two_direction,
        collapsed,
        omega,
        tilt_a: post.tilt_a,
        tilt_b: post.tilt_b,
    })
}

pub fn two_direction_log_density(tdm: &TwoDirectionMmn, y: &DVector<f64>) -> Result<f64> {
    tdm.log_density(y)
}
