//! Mean mixtures of multivariate normals.
//!
//! `X ~ MMN_d(θ, a, Σ, 𝓛)` when `X = θ + Σ^{1/2} Z + V a` with `Z` standard
//! normal and `V ~ 𝓛` independent. Conditioning on `V` gives the density
//!
//! ```text
//! p(x) = φ_d(x − θ; Σ) · E[exp(−q V²/2 + s V)],
//! q = aᵀΣ⁻¹a,  s = (x − θ)ᵀΣ⁻¹a,
//! ```
//!
//! which is what every density routine below evaluates, in log space.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, MmnError, Result};
use crate::mixing::{
    difference_law_mean_shifted, log_expectation, DifferenceLaw, Law, MixingLaw, ScalarLaw,
};
use crate::specfn::{log_norm_cdf, log_norm_pdf, truncated_normal_moment, LN_SQRT_2PI};

/// Lower Cholesky factor of an SPD matrix.
pub(crate) fn cholesky(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !sigma.is_square() {
        return Err(MmnError::Dimension(format!(
            "covariance must be square, got {}×{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(domain("covariance has non-finite entries"));
    }
    let scale = sigma.amax().max(f64::MIN_POSITIVE);
    if (sigma - sigma.transpose()).amax() > 1e-12 * scale {
        return Err(MmnError::NotPositiveDefinite);
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let chol = sym.cholesky().ok_or(MmnError::NotPositiveDefinite)?;
    Ok(chol.l())
}

/// `L⁻¹ v` for a lower-triangular `L`.
pub(crate) fn solve_lower(l: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(v)
        .expect("Cholesky factor has a positive diagonal")
}

fn check_vector(name: &str, v: &DVector<f64>, d: usize) -> Result<()> {
    if v.len() != d {
        return Err(MmnError::Dimension(format!(
            "{name} has length {}, expected {d}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(domain(format!("{name} has non-finite entries")));
    }
    Ok(())
}

/// `log E[exp(−q V²/2 + s V)]`.
///
/// Laws of the Gaussian-tilt form `C v^p e^{−c₂ v − c₁ v²/2}` use the closed
/// form `log C − (p+1) log c₁′ + log m_p(Δ) − log R(Δ)` with
/// `c₁′ = √(c₁ + q)`, `Δ = (s − c₂)/c₁′`. For `V = w₁V₁ + w₂V₂` where one
/// component has that form, it is integrated in closed form inside a
/// one-dimensional quadrature over the other. Everything else goes to
/// quadrature against the law's density.
pub fn log_mixing_factor(law: &Law, q: f64, s: f64) -> Result<f64> {
    if let Some(v) = law.atom() {
        return Ok(-0.5 * q * v * v + s * v);
    }
    if q == 0.0 && s == 0.0 {
        return Ok(0.0);
    }
    if let Some(value) = law
        .as_mixing()
        .map(|m| tilt_form_factor(m, q, s))
        .transpose()?
        .flatten()
    {
        return Ok(value);
    }
    if let Law::Difference(DifferenceLaw::NumericConvolution { components, .. }) = law {
        if let [(l1, w1), (l2, w2)] = components.as_slice() {
            if l2.gaussian_tilt_form().is_some() {
                return pair_factor((l1, *w1), (l2, *w2), q, s);
            }
            if l1.gaussian_tilt_form().is_some() {
                return pair_factor((l2, *w2), (l1, *w1), q, s);
            }
        }
    }
    law.log_tilted_mgf(q, s)
}

fn tilt_form_factor(law: &MixingLaw, q: f64, s: f64) -> Result<Option<f64>> {
    let Some(form) = law.gaussian_tilt_form() else {
        return Ok(None);
    };
    let precision = form.c1 + q;
    if !(precision > 0.0) {
        return Ok(None);
    }
    let c1p = precision.sqrt();
    let delta = (s - form.c2) / c1p;
    let log_moment = match form.power {
        0 => 0.0,
        p => truncated_normal_moment(delta, p)?.ln(),
    };
    let log_mills = log_norm_pdf(delta) - log_norm_cdf(delta);
    Ok(Some(
        form.log_const - (form.power as f64 + 1.0) * c1p.ln() + log_moment - log_mills,
    ))
}

/// `log E[exp(−q T²/2 + s T)]` for `T = w₁V₁ + w₂V₂`: given `V₁ = v` the
/// exponent is `−q w₁²v²/2 + s w₁v − q w₂² V₂²/2 + w₂(s − q w₁v) V₂`, so the
/// `V₂` expectation is closed.
fn pair_factor(
    (outer, w1): (&MixingLaw, f64),
    (inner, w2): (&MixingLaw, f64),
    q: f64,
    s: f64,
) -> Result<f64> {
    let q2 = q * w2 * w2;
    let failure = std::cell::Cell::new(None);
    let log_weight = |v: f64| {
        let t = w1 * v;
        match tilt_form_factor(inner, q2, w2 * (s - q * t)) {
            Ok(Some(m)) => -0.5 * q * t * t + s * t + m,
            Ok(None) => f64::NEG_INFINITY,
            Err(e) => {
                failure.set(Some(e));
                f64::NEG_INFINITY
            }
        }
    };
    // w₁v sits near s/q − w₂V₂ when the Gaussian dominates
    let (ilo, ihi) = inner.window();
    let spread = 14.0 / q.sqrt() + w2.abs() * (ihi - ilo);
    let center = s / q - w2 * 0.5 * (ilo + ihi);
    let hint = Some(((center - spread) / w1, (center + spread) / w1));
    let hint = hint.map(|(a, b)| (a.min(b), a.max(b)));
    let value = log_expectation(outer, log_weight, hint)?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// `X ~ MMN_d(θ, a, Σ, 𝓛)`.
#[derive(Debug, Clone)]
pub struct MmnDistribution {
    theta: DVector<f64>,
    a: DVector<f64>,
    sigma: DMatrix<f64>,
    law: Law,
    chol: DMatrix<f64>,
    log_det: f64,
    white_a: DVector<f64>,
}

impl MmnDistribution {
    pub fn new(
        theta: DVector<f64>,
        a: DVector<f64>,
        sigma: DMatrix<f64>,
        law: impl Into<Law>,
    ) -> Result<Self> {
        let d = theta.len();
        if d == 0 {
            return Err(MmnError::Dimension("dimension must be at least one".into()));
        }
        check_vector("theta", &theta, d)?;
        check_vector("a", &a, d)?;
        if sigma.nrows() != d {
            return Err(MmnError::Dimension(format!(
                "covariance is {}×{}, expected {d}×{d}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let chol = cholesky(&sigma)?;
        let log_det = 2.0 * chol.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let white_a = solve_lower(&chol, &a);
        Ok(Self {
            theta,
            a,
            sigma,
            law: law.into(),
            chol,
            log_det,
            white_a,
        })
    }

    /// `MMN_d(θ, a, σ² I, 𝓛)`.
    pub fn isotropic(
        theta: DVector<f64>,
        a: DVector<f64>,
        sigma2: f64,
        law: impl Into<Law>,
    ) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(domain(format!("variance must be positive, got {sigma2}")));
        }
        let d = theta.len();
        Self::new(theta, a, DMatrix::identity(d, d) * sigma2, law)
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn a(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    /// Lower Cholesky factor `L` of `Σ`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det_sigma(&self) -> f64 {
        self.log_det
    }

    /// `aᵀΣ⁻¹a`.
    pub fn a_norm2(&self) -> f64 {
        self.white_a.norm_squared()
    }

    /// Same distribution relocated to `theta`.
    pub fn with_theta(&self, theta: DVector<f64>) -> Result<Self> {
        check_vector("theta", &theta, self.dim())?;
        Ok(Self {
            theta,
            ..self.clone()
        })
    }

    /// Gaussian part `log φ_d(x − θ; Σ)` and the tilt `s = (x − θ)ᵀΣ⁻¹a`.
    fn gaussian_parts(&self, x: &DVector<f64>) -> Result<(f64, f64)> {
        check_vector("x", x, self.dim())?;
        let z = solve_lower(&self.chol, &(x - &self.theta));
        let d = self.dim() as f64;
        let base = -d * LN_SQRT_2PI - 0.5 * self.log_det - 0.5 * z.norm_squared();
        Ok((base, z.dot(&self.white_a)))
    }

    /// `log p(x)`, using closed forms where the mixing law allows.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let (base, s) = self.gaussian_parts(x)?;
        Ok(base + log_mixing_factor(&self.law, self.a_norm2(), s)?)
    }

    /// `log p(x)` with the mixing integral always done by quadrature.
    pub fn log_density_by_quadrature(&self, x: &DVector<f64>) -> Result<f64> {
        let (base, s) = self.gaussian_parts(x)?;
        let q = self.a_norm2();
        if let Some(v) = self.law.atom() {
            return Ok(base - 0.5 * q * v * v + s * v);
        }
        Ok(base + self.law.log_tilted_mgf(q, s)?)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = self.law.sample(rng);
        &self.theta + &self.chol * z + &self.a * v
    }
}

/// `count` draws as the rows of a matrix.
pub fn sample_mmn<R: Rng + ?Sized>(
    dist: &MmnDistribution,
    count: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(count, dist.dim());
    for i in 0..count {
        out.set_row(i, &dist.sample(rng).transpose());
    }
    out
}

pub fn log_density_mmn(dist: &MmnDistribution, x: &DVector<f64>) -> Result<f64> {
    dist.log_density(x)
}

/// Skew-normal log-density `log[2 φ_d(x − θ; Σ + aaᵀ) Φ(s / √(1 + q))]`.
pub fn skew_normal_log_density(
    theta: &DVector<f64>,
    a: &DVector<f64>,
    sigma: &DMatrix<f64>,
    x: &DVector<f64>,
) -> Result<f64> {
    let d = theta.len();
    check_vector("a", a, d)?;
    check_vector("x", x, d)?;
    let chol = cholesky(sigma)?;
    if chol.nrows() != d {
        return Err(MmnError::Dimension(
            "covariance does not match theta".into(),
        ));
    }
    let z = solve_lower(&chol, &(x - theta));
    let w = solve_lower(&chol, a);
    let q = w.norm_squared();
    let s = z.dot(&w);
    let log_det = 2.0 * chol.diagonal().iter().map(|x| x.ln()).sum::<f64>() + q.ln_1p();
    // Sherman–Morrison for (Σ + aaᵀ)⁻¹
    let quad = z.norm_squared() - s * s / (1.0 + q);
    let log_phi = -(d as f64) * LN_SQRT_2PI - 0.5 * log_det - 0.5 * quad;
    Ok(std::f64::consts::LN_2 + log_phi + log_norm_cdf(s / (1.0 + q).sqrt()))
}

/// Orthogonal `H` whose first row is proportional to `(L⁻¹a)ᵀ`, where `Σ = LLᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalFrame {
    h: DMatrix<f64>,
    a_norm: f64,
    whitener: DMatrix<f64>,
}

impl CanonicalFrame {
    pub fn h_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// `√(aᵀΣ⁻¹a)`.
    pub fn a_norm(&self) -> f64 {
        self.a_norm
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// `L⁻¹`.
    pub fn whitener(&self) -> &DMatrix<f64> {
        &self.whitener
    }

    /// First row `h₁`.
    pub fn h1(&self) -> DVector<f64> {
        self.h.row(0).transpose()
    }

    /// Rows `2..d`, the orthogonal complement `H₂`.
    pub fn h2(&self) -> DMatrix<f64> {
        self.h.rows(1, self.dim() - 1).into_owned()
    }

    /// `H L⁻¹ x`.
    pub fn transform(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * (&self.whitener * x)
    }
}

/// Builds the Householder frame for `(a, Σ)`: with `u = L⁻¹a/‖L⁻¹a‖` and
/// `v = u − e₁`, `H = I − 2vvᵀ/vᵀv`, or `I` when `u = e₁`.
pub fn canonical_frame(a: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<CanonicalFrame> {
    let d = a.len();
    check_vector("a", a, d)?;
    let chol = cholesky(sigma)?;
    if chol.nrows() != d {
        return Err(MmnError::Dimension("covariance does not match a".into()));
    }
    let w = solve_lower(&chol, a);
    let a_norm = w.norm();
    if a_norm == 0.0 {
        return Err(MmnError::DegenerateDirection);
    }
    let u = w / a_norm;
    let mut v = u.clone();
    v[0] -= 1.0;
    let vv = v.norm_squared();
    let h = if vv == 0.0 {
        DMatrix::identity(d, d)
    } else {
        DMatrix::identity(d, d) - (&v * v.transpose()) * (2.0 / vv)
    };
    let whitener = chol
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .expect("Cholesky factor has a positive diagonal");
    Ok(CanonicalFrame {
        h,
        a_norm,
        whitener,
    })
}

/// `Z = H L⁻¹ X ~ MMN_d(H L⁻¹ θ, (‖a‖_Σ, 0, …, 0), I, 𝓛)`.
pub fn to_canonical(dist: &MmnDistribution, frame: &CanonicalFrame) -> Result<MmnDistribution> {
    let d = dist.dim();
    if frame.dim() != d {
        return Err(MmnError::Dimension(format!(
            "frame has dimension {}, distribution {d}",
            frame.dim()
        )));
    }
    let mapped = frame.transform(dist.a());
    let mut a0 = DVector::zeros(d);
    a0[0] = frame.a_norm();
    if (&mapped - &a0).amax() > 1e-10 * frame.a_norm().max(1.0) {
        return Err(MmnError::Dimension(
            "frame was not built from this distribution's (a, Σ)".into(),
        ));
    }
    MmnDistribution::new(
        frame.transform(dist.theta()),
        a0,
        DMatrix::identity(d, d),
        dist.law().clone(),
    )
}

/// A prediction pair moved to the scale where `Σ_X = I`.
#[derive(Debug, Clone)]
pub struct WhitenedPair {
    pub x: MmnDistribution,
    pub y: MmnDistribution,
    /// `c` in `Σ_Y = c Σ_X`.
    pub ratio: f64,
    /// `log |L⁻¹|`, added to a whitened log-density to return to the original scale.
    pub log_jacobian: f64,
    pub whitener: DMatrix<f64>,
}

impl WhitenedPair {
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.whitener * v
    }
}

/// Maps `x ↦ L⁻¹x` with `Σ_X = LLᵀ`, which requires `Σ_Y = c Σ_X`.
pub fn whiten_problem(dist_x: &MmnDistribution, dist_y: &MmnDistribution) -> Result<WhitenedPair> {
    let d = dist_x.dim();
    if dist_y.dim() != d {
        return Err(MmnError::Dimension("X and Y differ in dimension".into()));
    }
    let sx = dist_x.sigma();
    let sy = dist_y.sigma();
    let ratio = sy.trace() / sx.trace();
    if (sy - sx * ratio).amax() > 1e-8 * sy.amax() {
        return Err(MmnError::UnsupportedCovariance(
            "Σ_Y is not a multiple of Σ_X".into(),
        ));
    }
    let l = dist_x.cholesky_factor();
    let whitener = l
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .expect("Cholesky factor has a positive diagonal");
    let log_jacobian = -0.5 * dist_x.log_det_sigma();
    let x = MmnDistribution::new(
        &whitener * dist_x.theta(),
        &whitener * dist_x.a(),
        DMatrix::identity(d, d),
        dist_x.law().clone(),
    )?;
    let y = MmnDistribution::new(
        &whitener * dist_y.theta(),
        &whitener * dist_y.a(),
        DMatrix::identity(d, d) * ratio,
        dist_y.law().clone(),
    )?;
    Ok(WhitenedPair {
        x,
        y,
        ratio,
        log_jacobian,
        whitener,
    })
}

/// Law of the mean of `n` i.i.d. draws: `MMN_d(θ, a, Σ/n, law of V̄)`.
pub fn aggregate_iid(dist: &MmnDistribution, n: usize) -> Result<MmnDistribution> {
    if n == 0 {
        return Err(domain("sample size must be positive"));
    }
    if n == 1 {
        return Ok(dist.clone());
    }
    let law = dist.law().as_mixing().ok_or_else(|| {
        MmnError::Capability("averaging needs a mixing law on (0, ∞) or a point mass".into())
    })?;
    let mean_law: Law = if let Some(v) = law.atom() {
        MixingLaw::degenerate(v)?.into()
    } else {
        let laws = vec![law.clone(); n];
        let weights = vec![1.0 / n as f64; n];
        difference_law_mean_shifted(&laws, &weights)?.into()
    };
    MmnDistribution::new(
        dist.theta().clone(),
        dist.a().clone(),
        dist.sigma() / n as f64,
        mean_law,
    )
}

/// `Y = θ + Σ^{1/2} Z + a₁ W₁ + a₂ W₂` with independent `W₁ ~ 𝓛₁`, `W₂ ~ 𝓛₂`.
#[derive(Debug, Clone)]
pub struct TwoDirectionMmn {
    theta: DVector<f64>,
    a1: DVector<f64>,
    a2: DVector<f64>,
    sigma: DMatrix<f64>,
    law1: Law,
    law2: Law,
    chol: DMatrix<f64>,
    log_det: f64,
    white_a1: DVector<f64>,
    white_a2: DVector<f64>,
}

impl TwoDirectionMmn {
    pub fn new(
        theta: DVector<f64>,
        a1: DVector<f64>,
        a2: DVector<f64>,
        sigma: DMatrix<f64>,
        law1: impl Into<Law>,
        law2: impl Into<Law>,
    ) -> Result<Self> {
        let d = theta.len();
        check_vector("theta", &theta, d)?;
        check_vector("a1", &a1, d)?;
        check_vector("a2", &a2, d)?;
        if sigma.nrows() != d {
            return Err(MmnError::Dimension(
                "covariance does not match theta".into(),
            ));
        }
        let chol = cholesky(&sigma)?;
        let log_det = 2.0 * chol.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let white_a1 = solve_lower(&chol, &a1);
        let white_a2 = solve_lower(&chol, &a2);
        Ok(Self {
            theta,
            a1,
            a2,
            sigma,
            law1: law1.into(),
            law2: law2.into(),
            chol,
            log_det,
            white_a1,
            white_a2,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn a1(&self) -> &DVector<f64> {
        &self.a1
    }

    pub fn a2(&self) -> &DVector<f64> {
        &self.a2
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn law1(&self) -> &Law {
        &self.law1
    }

    pub fn law2(&self) -> &Law {
        &self.law2
    }

    /// `log E[φ_d(y − θ − a₁W₁ − a₂W₂; Σ)]`: the `W₂` integral in closed form
    /// where possible, the `W₁` integral by quadrature.
    pub fn log_density(&self, y: &DVector<f64>) -> Result<f64> {
        check_vector("y", y, self.dim())?;
        let z = solve_lower(&self.chol, &(y - &self.theta));
        let d = self.dim() as f64;
        let constant = -d * LN_SQRT_2PI - 0.5 * self.log_det;
        let (b1, b2) = (&self.white_a1, &self.white_a2);
        let (q1, q2, q12) = (b1.norm_squared(), b2.norm_squared(), b1.dot(b2));
        let (s1, s2, zz) = (z.dot(b1), z.dot(b2), z.norm_squared());
        // log φ part and inner tilt after fixing W₁ = w
        let inner = |w: f64| -> Result<f64> {
            let quad = zz - 2.0 * w * s1 + w * w * q1;
            let tilt = s2 - w * q12;
            Ok(constant - 0.5 * quad + log_mixing_factor(&self.law2, q2, tilt)?)
        };
        if let Some(w) = self.law1.atom() {
            return inner(w);
        }
        if q1 == 0.0 {
            return inner(0.0);
        }
        let failure = std::cell::Cell::new(None);
        let log_weight = |w: f64| match inner(w) {
            Ok(v) => v,
            Err(e) => {
                failure.set(Some(e));
                f64::NEG_INFINITY
            }
        };
        let hint = {
            let center = s1 / q1;
            let reach = 14.0 / q1.sqrt();
            Some((center - reach, center + reach))
        };
        let value = log_expectation(&self.law1, log_weight, hint)?;
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let w1 = self.law1.sample(rng);
        let w2 = self.law2.sample(rng);
        &self.theta + &self.chol * z + &self.a1 * w1 + &self.a2 * w2
    }
}
