//! Kullback–Leibler risk of predictive densities.
//!
//! `R(θ, q̂) = E_θ[log q(Y|θ) − log q̂(Y; X)]` with `X` and `Y` independent.
//! Monte Carlo estimates are paired: every contender is scored on the same
//! `(Xᵢ, Yᵢ)` draws, so risk differences carry only the variance of the
//! per-replicate log-ratio differences.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{domain, invalid, MmnError, Result};
use crate::mixing::ScalarLaw;
use crate::mmn::MmnDistribution;
use crate::posterior::NormalPrior;
use crate::predictive::{
    build, difference_mixture_log_density, normal_prior_bayes, Estimator, PredictionProblem,
    PredictiveDensity,
};
use crate::quad::{self, Tolerance};
use crate::rng::{chunk_stream, chunks};
use crate::specfn::noncentral_chisq_inverse_moment;

/// Largest tolerated share of replicates with a non-finite log-ratio.
pub const CONTAMINATION_LIMIT: f64 = 1e-4;

/// Largest probability mass an entropy window may leave out.
pub const WINDOW_CLIP_LIMIT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√n`.
    pub std_error: f64,
    /// Replicates that entered the mean.
    pub n: usize,
    pub seed: u64,
    /// Replicates dropped for a non-finite log-ratio.
    pub non_finite: usize,
}

impl RiskEstimate {
    /// Lower end of the one-sided confidence interval at normal quantile `z`.
    pub fn lower_bound(&self, z: f64) -> f64 {
        self.mean - z * self.std_error
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    bad: usize,
}

impl Moments {
    fn push(&mut self, v: f64) {
        if !v.is_finite() {
            self.bad += 1;
            return;
        }
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        self.bad += other.bad;
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            let bad = self.bad;
            *self = *other;
            self.bad = bad;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    fn estimate(&self, seed: u64) -> Result<RiskEstimate> {
        let total = self.n + self.bad;
        if self.bad as f64 > CONTAMINATION_LIMIT * total as f64 || self.n < 2 {
            return Err(MmnError::Contaminated {
                bad: self.bad,
                n: total,
            });
        }
        let var = self.m2 / (self.n - 1) as f64;
        Ok(RiskEstimate {
            mean: self.mean,
            std_error: (var / self.n as f64).sqrt(),
            n: self.n,
            seed,
            non_finite: self.bad,
        })
    }
}

/// Anything that scores `log q̂(y)`.
pub trait LogDensity {
    fn log_density(&self, y: &DVector<f64>) -> Result<f64>;
}

impl LogDensity for PredictiveDensity {
    fn log_density(&self, y: &DVector<f64>) -> Result<f64> {
        PredictiveDensity::log_density(self, y)
    }
}

impl LogDensity for MmnDistribution {
    fn log_density(&self, y: &DVector<f64>) -> Result<f64> {
        MmnDistribution::log_density(self, y)
    }
}

impl<T: LogDensity + ?Sized> LogDensity for &T {
    fn log_density(&self, y: &DVector<f64>) -> Result<f64> {
        (**self).log_density(y)
    }
}

type Factory<'a> = dyn Fn(&DVector<f64>) -> Result<Box<dyn LogDensity + 'a>> + Sync + 'a;

/// A named predictive density estimator `x ↦ q̂(·; x)`.
pub struct Contender<'a> {
    name: String,
    factory: Box<Factory<'a>>,
}

impl<'a> Contender<'a> {
    pub fn new<F, D>(name: impl Into<String>, factory: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Result<D> + Sync + 'a,
        D: LogDensity + 'a,
    {
        Self {
            name: name.into(),
            factory: Box::new(move |x| Ok(Box::new(factory(x)?) as Box<dyn LogDensity + 'a>)),
        }
    }

    pub fn estimator(problem: &'a PredictionProblem, estimator: Estimator) -> Self {
        Self::new(estimator.name(), move |x| build(problem, estimator, x))
    }

    pub fn normal_prior(problem: &'a PredictionProblem, prior: &'a NormalPrior) -> Self {
        Self::new(Estimator::NormalPriorBayes.name(), move |x| {
            normal_prior_bayes(problem, prior, x)
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// `R(baseline) − R(other)`; positive when `other` does better.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDifference {
    pub baseline: String,
    pub other: String,
    pub estimate: RiskEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedRisk {
    pub risks: Vec<(String, RiskEstimate)>,
    /// The first contender against each of the others.
    pub differences: Vec<PairedDifference>,
}

impl PairedRisk {
    pub fn risk(&self, name: &str) -> Option<&RiskEstimate> {
        self.risks.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }

    pub fn difference(&self, other: &str) -> Option<&RiskEstimate> {
        self.differences
            .iter()
            .find(|d| d.other == other)
            .map(|d| &d.estimate)
    }
}

fn run_chunk(
    x_dist: &MmnDistribution,
    y_dist: &MmnDistribution,
    contenders: &[Contender<'_>],
    seed: u64,
    chunk: u64,
    count: usize,
) -> Result<(Vec<Moments>, Vec<Moments>)> {
    let k = contenders.len();
    let mut rng = chunk_stream(seed, chunk);
    let mut risks = vec![Moments::default(); k];
    let mut diffs = vec![Moments::default(); k.saturating_sub(1)];
    let mut ratios = vec![0.0; k];
    for _ in 0..count {
        let x = x_dist.sample(&mut rng);
        let y = y_dist.sample(&mut rng);
        let truth = y_dist.log_density(&y)?;
        for (c, slot) in contenders.iter().zip(ratios.iter_mut()) {
            *slot = match (c.factory)(&x).and_then(|q| q.log_density(&y)) {
                Ok(v) => truth - v,
                Err(MmnError::Numerical(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
        }
        for (m, r) in risks.iter_mut().zip(&ratios) {
            m.push(*r);
        }
        for (m, r) in diffs.iter_mut().zip(&ratios[1..]) {
            m.push(ratios[0] - r);
        }
    }
    Ok((risks, diffs))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(invalid("at least one worker is needed"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| MmnError::Numerical(format!("cannot start worker pool: {e}")))
}

/// Risks of all contenders at `θ` on common random numbers, with paired
/// differences against the first one.
///
/// Replicates are split into fixed chunks with their own streams and the
/// chunk moments are merged in chunk order, so the result does not depend
/// on `workers`.
pub fn paired_risk(
    problem: &PredictionProblem,
    theta: &DVector<f64>,
    contenders: &[Contender<'_>],
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<PairedRisk> {
    if contenders.is_empty() {
        return Err(invalid("no estimators to score"));
    }
    if n < 2 {
        return Err(invalid(format!("need at least two replicates, got {n}")));
    }
    let x_dist = problem.x_distribution(theta.clone())?;
    let y_dist = problem.y_distribution(theta.clone())?;
    let parts: Vec<Result<(Vec<Moments>, Vec<Moments>)>> = pool(workers)?.install(|| {
        chunks(n)
            .into_par_iter()
            .map(|(chunk, count)| run_chunk(&x_dist, &y_dist, contenders, seed, chunk, count))
            .collect()
    });
    let k = contenders.len();
    let mut risks = vec![Moments::default(); k];
    let mut diffs = vec![Moments::default(); k - 1];
    for part in parts {
        let (r, d) = part?;
        risks.iter_mut().zip(&r).for_each(|(a, b)| a.merge(b));
        diffs.iter_mut().zip(&d).for_each(|(a, b)| a.merge(b));
    }
    let names = || contenders.iter().map(|c| c.name.clone());
    Ok(PairedRisk {
        risks: names()
            .zip(&risks)
            .map(|(name, m)| Ok((name, m.estimate(seed)?)))
            .collect::<Result<_>>()?,
        differences: names()
            .skip(1)
            .zip(&diffs)
            .map(|(other, m)| {
                Ok(PairedDifference {
                    baseline: contenders[0].name.clone(),
                    other,
                    estimate: m.estimate(seed)?,
                })
            })
            .collect::<Result<_>>()?,
    })
}

/// Monte Carlo KL risk of one estimator at `θ`.
pub fn kl_risk_mc<F, D>(
    problem: &PredictionProblem,
    theta: &DVector<f64>,
    factory: F,
    n: usize,
    seed: u64,
) -> Result<RiskEstimate>
where
    F: Fn(&DVector<f64>) -> Result<D> + Sync,
    D: LogDensity,
{
    let contender = [Contender::new("estimator", factory)];
    Ok(paired_risk(problem, theta, &contender, n, seed, 1)?.risks[0].1)
}

fn integrate_window<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    inner: &[f64],
    tol: Tolerance,
) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let mut points = vec![lo];
            points.extend(inner.iter().copied().filter(|p| *p > lo && *p < hi));
            points.push(hi);
            quad::integrate_pieces(f, &points, tol).value
        }
        (true, false) => quad::integrate_upper(f, lo, tol).value,
        (false, true) => quad::integrate_lower(f, hi, tol).value,
        (false, false) => {
            quad::integrate_real(&mut f, inner.first().copied().unwrap_or(0.0), tol).value
        }
    }
}

/// `−∫ f log f` over `window` for a normalized univariate log-density.
pub fn entropy_1d<F: Fn(f64) -> f64>(log_density: F, window: (f64, f64)) -> Result<f64> {
    entropy_1d_with_breaks(log_density, window, &[])
}

fn entropy_1d_with_breaks<F: Fn(f64) -> f64>(
    log_density: F,
    window: (f64, f64),
    breaks: &[f64],
) -> Result<f64> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(domain(format!("empty entropy window [{lo}, {hi}]")));
    }
    let tol = Tolerance::new(1e-11, 1e-12);
    let mass = integrate_window(|v| log_density(v).exp(), lo, hi, breaks, tol);
    let clipped = (1.0 - mass).abs();
    if clipped > WINDOW_CLIP_LIMIT {
        return Err(MmnError::Window { mass: clipped });
    }
    let h = integrate_window(
        |v| {
            let l = log_density(v);
            if l == f64::NEG_INFINITY {
                0.0
            } else {
                -l * l.exp()
            }
        },
        lo,
        hi,
        breaks,
        tol,
    );
    if !h.is_finite() {
        return Err(MmnError::Numerical("entropy integral diverged".into()));
    }
    Ok(h)
}

/// Entropy of `Z + c V` with `Z ~ N(0, 1)` given its log-density.
fn mixture_entropy<L: ScalarLaw, F: Fn(f64) -> f64>(
    law: &L,
    c: f64,
    log_density: F,
) -> Result<f64> {
    let (v_lo, v_hi) = law.window();
    let (lo, hi) = if c >= 0.0 {
        (c * v_lo, c * v_hi)
    } else {
        (c * v_hi, c * v_lo)
    };
    let mut breaks = vec![0.0];
    if let Ok(m) = law.mean() {
        breaks.push(c * m);
    }
    breaks.sort_by(f64::total_cmp);
    entropy_1d_with_breaks(log_density, (lo - 12.0, hi + 12.0), &breaks)
}

/// Constant risk of the minimum risk equivariant density:
/// `H₁(‖a‖/σ_S, 1, 𝓛₃) − H₁(‖a‖/σ_Y, 1, 𝓛₂) + (d/2) log(σ²_S/σ²_Y)`,
/// where `H₁(c, 1, 𝓛)` is the entropy of `Z + cV`.
pub fn mre_risk_exact(problem: &PredictionProblem) -> Result<f64> {
    let d = problem.dim() as f64;
    let (s2s, s2y) = (problem.sigma2_s(), problem.sigma2_y());
    let normal = 0.5 * d * (s2s / s2y).ln();
    let norm = problem.a().norm();
    if norm == 0.0 {
        return Ok(normal);
    }
    let diff = problem.difference();
    if !diff.has_density() && diff.atom().is_none() {
        return Err(MmnError::Capability(
            "difference law is sampler-only".into(),
        ));
    }
    let c3 = norm / s2s.sqrt();
    let along3 = DVector::from_element(1, c3);
    let h3 = mixture_entropy(diff, c3, |r| {
        difference_mixture_log_density(diff, &along3, 1.0, &DVector::from_element(1, r))
            .unwrap_or(f64::NAN)
    })?;
    let c2 = norm / s2y.sqrt();
    let y1 = MmnDistribution::isotropic(
        DVector::zeros(1),
        DVector::from_element(1, c2),
        1.0,
        problem.law2().clone(),
    )?;
    let h2 = mixture_entropy(problem.law2(), c2, |r| {
        y1.log_density(&DVector::from_element(1, r))
            .unwrap_or(f64::NAN)
    })?;
    Ok(h3 - h2 + normal)
}

/// `R(q̂_U) − R(plug-in James–Stein)` when `‖H₂θ‖² = zeta2_norm2`:
/// `(d−3)² σ²_X E[1/χ²_{d−1}(λ)] / (2σ²_S)` with `λ = ‖H₂θ‖²/σ²_X`.
pub fn js_risk_difference_exact(
    d: usize,
    sigma2_x: f64,
    sigma2_y: f64,
    zeta2_norm2: f64,
) -> Result<f64> {
    if d < 4 {
        return Err(domain(format!(
            "James–Stein shrinkage needs d ≥ 4, got {d}"
        )));
    }
    if !(sigma2_x > 0.0 && sigma2_y > 0.0) || !(zeta2_norm2 >= 0.0) {
        return Err(domain("variances must be positive and ‖H₂θ‖² nonnegative"));
    }
    let m = (d - 3) as f64;
    let inverse = noncentral_chisq_inverse_moment((d - 1) as f64, zeta2_norm2 / sigma2_x, 1.0)?;
    Ok(m * m * sigma2_x * inverse / (2.0 * (sigma2_x + sigma2_y)))
}

/// Unit vector across `a`: the normalized part of `e₂` orthogonal to `a`,
/// falling back to the next basis vector when that part vanishes.
pub fn sweep_direction(a: &DVector<f64>) -> Result<DVector<f64>> {
    let d = a.len();
    if d < 2 {
        return Err(domain("no direction orthogonal to a in one dimension"));
    }
    let aa = a.norm_squared();
    for k in (1..d).chain(std::iter::once(0)) {
        let mut u = DVector::zeros(d);
        u[k] = 1.0;
        if aa > 0.0 {
            u -= a * (a[k] / aa);
        }
        let norm = u.norm();
        if norm > 1e-8 {
            return Ok(u / norm);
        }
    }
    Err(domain("no direction orthogonal to a"))
}

/// `θ = √((d−1)t) u` with `u` from [`sweep_direction`], so that
/// `‖H₂θ‖²/(d−1) = t`.
pub fn sweep_theta(a: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(domain(format!(
            "sweep abscissa must be finite and nonnegative, got {t}"
        )));
    }
    Ok(sweep_direction(a)? * ((a.len() - 1) as f64 * t).sqrt())
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub t: f64,
    pub theta: DVector<f64>,
    pub outcome: std::result::Result<PairedRisk, MmnError>,
}

/// Paired risks along `t_grid`. Every point reuses `seed`, so the curves
/// share random numbers across `t` as well as across estimators. A failed
/// point keeps its error and the sweep moves on.
pub fn risk_sweep<B>(
    problem: &PredictionProblem,
    contenders: &[Contender<'_>],
    t_grid: &[f64],
    theta_builder: B,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<SweepPoint>>
where
    B: Fn(f64) -> Result<DVector<f64>>,
{
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let theta = theta_builder(t)?;
        if theta.len() != problem.dim() {
            return Err(MmnError::Dimension(
                "θ builder returned the wrong length".into(),
            ));
        }
        let outcome = paired_risk(problem, &theta, contenders, n, seed, workers);
        points.push(SweepPoint { t, theta, outcome });
    }
    Ok(points)
}
