//! Univariate mixing laws, the law of differences and linear combinations of
//! independent mixing variables, and Gaussian tilting of a mixing law.

use std::f64::consts::{LN_2, SQRT_2};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Gamma as GammaDist, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{domain, invalid, MmnError, Result};
use crate::quad::{self, Tolerance};
use crate::specfn::{log_norm_cdf, log_norm_pdf, norm_cdf, reverse_mills_unchecked, LN_SQRT_2PI};

/// Nodes used when a density has to be tabulated.
pub const TABLE_NODES: usize = 8192;

/// Largest number of continuous components convolved into a density.
pub const MAX_CONVOLVED: usize = 6;

const SCAN_POINTS: usize = 512;
const LOG_DROP: f64 = 60.0;
const MAX_REFINE_PASSES: usize = 40;
const MAX_TABLE_NODES: usize = 1 << 18;

/// Shared behaviour of every scalar law in the crate.
pub trait ScalarLaw {
    /// `log` of the density at `v`; `-∞` outside the support.
    fn log_density(&self, v: f64) -> Result<f64>;
    fn cdf(&self, v: f64) -> Result<f64>;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
    /// Closed support `[lo, hi]`, possibly infinite.
    fn support(&self) -> (f64, f64);
    /// An interval holding all but a negligible (< 1e-13) share of the mass.
    fn window(&self) -> (f64, f64);
    fn mean(&self) -> Result<f64>;
    /// `Some(v)` when the law is a point mass at `v`.
    fn atom(&self) -> Option<f64>;

    fn density(&self, v: f64) -> Result<f64> {
        Ok(self.log_density(v)?.exp())
    }

    fn sample_n<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        (0..count).map(|_| self.sample(rng)).collect()
    }

    /// `log E[exp(−q V²/2 + s V)]`, the log moment integral appearing in
    /// every mean-mixture density.
    fn log_tilted_mgf(&self, q: f64, s: f64) -> Result<f64>
    where
        Self: Sized,
    {
        if let Some(v) = self.atom() {
            return Ok(-0.5 * q * v * v + s * v);
        }
        let region = TiltedRegion::locate(self, q, s)?;
        Ok(region.log_integral(self, q, s))
    }
}

/// The interval over which `g(v) exp(−q v²/2 + s v)` carries its mass, with
/// the location and value of its maximum.
pub(crate) struct TiltedRegion {
    pub lo: f64,
    pub hi: f64,
    pub argmax: f64,
    pub log_max: f64,
    pub scan_step: f64,
}

impl TiltedRegion {
    pub(crate) fn locate<L: ScalarLaw>(law: &L, q: f64, s: f64) -> Result<Self> {
        let hint = (q > 0.0).then(|| {
            let center = s / q;
            let reach = 14.0 / q.sqrt();
            (center - reach, center + reach)
        });
        Self::locate_by(
            law,
            |v| law.log_density(v).map(|l| l - 0.5 * q * v * v + s * v),
            hint,
        )
    }

    /// Region carrying the mass of `exp(log_f)`, searched over the law's
    /// window widened to `hint`.
    pub(crate) fn locate_by<L: ScalarLaw, F: Fn(f64) -> Result<f64>>(
        law: &L,
        log_f: F,
        hint: Option<(f64, f64)>,
    ) -> Result<Self> {
        let (slo, shi) = law.support();
        let (mut lo, mut hi) = law.window();
        if let Some((a, b)) = hint {
            if a.is_finite() && b.is_finite() {
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        lo = lo.max(slo);
        hi = hi.min(shi);
        if !(hi > lo) {
            return Err(MmnError::Numerical("empty integration region".into()));
        }
        // uniform points plus geometric ones, so that narrow peaks inside a
        // very wide window are still seen
        let width = hi - lo;
        let mut scan: Vec<f64> = (0..SCAN_POINTS)
            .map(|j| lo + (j as f64 + 0.5) * width / SCAN_POINTS as f64)
            .collect();
        let ratio = (1e12f64).powf(1.0 / SCAN_POINTS as f64);
        let mut offset = width * 1e-12;
        while offset < width {
            scan.push(lo + offset);
            scan.push(hi - offset);
            offset *= ratio;
        }
        scan.sort_by(f64::total_cmp);
        scan.dedup();
        let mut best = 0;
        let mut log_max = f64::NEG_INFINITY;
        for (j, &v) in scan.iter().enumerate() {
            let l = log_f(v)?;
            if l > log_max {
                log_max = l;
                best = j;
            }
        }
        if !log_max.is_finite() {
            return Err(MmnError::Numerical(
                "tilted mixing density vanishes on its window".into(),
            ));
        }
        let mut argmax = scan[best];
        let below = if best > 0 {
            argmax - scan[best - 1]
        } else {
            0.0
        };
        let above = if best + 1 < scan.len() {
            scan[best + 1] - argmax
        } else {
            0.0
        };
        let step = below.max(above);
        // walk outward until the integrand has dropped far below its peak
        let mut left = argmax;
        let mut dx = step;
        loop {
            let next = left - dx;
            if next <= slo {
                left = slo;
                break;
            }
            let l = log_f(next)?;
            left = next;
            if l > log_max {
                log_max = l;
                argmax = next;
            } else if l < log_max - LOG_DROP {
                break;
            }
            dx *= 2.0;
            if !left.is_finite() || dx > 1e300 {
                return Err(MmnError::NonNormalizable(
                    "tilted mixing density does not decay to the left".into(),
                ));
            }
        }
        let mut right = argmax;
        let mut dx = step;
        loop {
            let next = right + dx;
            if next >= shi {
                right = shi;
                break;
            }
            let l = log_f(next)?;
            right = next;
            if l > log_max {
                log_max = l;
                argmax = next;
            } else if l < log_max - LOG_DROP {
                break;
            }
            dx *= 2.0;
            if !right.is_finite() || dx > 1e300 {
                return Err(MmnError::NonNormalizable(
                    "tilted mixing density does not decay to the right".into(),
                ));
            }
        }
        Ok(Self {
            lo: left,
            hi: right,
            argmax,
            log_max,
            scan_step: step,
        })
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![self.lo];
        for p in [
            self.argmax - self.scan_step,
            self.argmax,
            self.argmax + self.scan_step,
        ] {
            if p > *pts.last().unwrap() && p < self.hi {
                pts.push(p);
            }
        }
        pts.push(self.hi);
        pts
    }

    /// `log ∫ exp(log_f(v)) dv` over the region.
    pub(crate) fn log_integral_by<F: Fn(f64) -> f64>(&self, log_f: F) -> f64 {
        let peak = self.log_max;
        let r = quad::integrate_pieces(
            |v| {
                let e = (log_f(v) - peak).exp();
                if e.is_finite() {
                    e
                } else {
                    0.0
                }
            },
            &self.breakpoints(),
            Tolerance::new(0.0, 1e-12),
        );
        peak + r.value.ln()
    }

    /// `log ∫ g(v) exp(−q v²/2 + s v) extra(v) dv` over the region.
    pub(crate) fn log_integral_with<L: ScalarLaw, F: Fn(f64) -> f64>(
        &self,
        law: &L,
        q: f64,
        s: f64,
        extra: F,
    ) -> f64 {
        self.log_integral_by(|v| {
            law.log_density(v).unwrap_or(f64::NEG_INFINITY) - 0.5 * q * v * v
                + s * v
                + extra(v).ln()
        })
    }

    pub(crate) fn log_integral<L: ScalarLaw>(&self, law: &L, q: f64, s: f64) -> f64 {
        self.log_integral_with(law, q, s, |_| 1.0)
    }
}

/// `log E[exp(w(V))]` for a log-weight `w`, with `hint` an interval where
/// `w` is known to peak.
pub(crate) fn log_expectation<L: ScalarLaw, F: Fn(f64) -> f64>(
    law: &L,
    log_weight: F,
    hint: Option<(f64, f64)>,
) -> Result<f64> {
    if let Some(v) = law.atom() {
        return Ok(log_weight(v));
    }
    let log_f = |v: f64| law.log_density(v).map(|l| l + log_weight(v));
    let region = TiltedRegion::locate_by(law, log_f, hint)?;
    Ok(region.log_integral_by(|v| law.log_density(v).unwrap_or(f64::NEG_INFINITY) + log_weight(v)))
}

/// A density known on a grid, interpolated linearly in log scale and zero
/// outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    nodes: Vec<f64>,
    log_values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Tabulated {
    /// Builds a law from grid points and (unnormalized) density values.
    pub fn new(grid: Vec<f64>, density_values: Vec<f64>) -> Result<Self> {
        if density_values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid(
                "tabulated density values must be finite and nonnegative",
            ));
        }
        let logs = density_values.iter().map(|v| v.ln()).collect();
        Self::from_log_values(grid, logs)
    }

    pub(crate) fn from_log_values(grid: Vec<f64>, log_values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != log_values.len() {
            return Err(invalid(
                "tabulated law needs at least two grid points and matching values",
            ));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|g| !g.is_finite()) {
            return Err(invalid(
                "tabulated grid must be finite and strictly increasing",
            ));
        }
        if log_values.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(invalid(
                "tabulated log-density values must not be NaN or +∞",
            ));
        }
        let peak = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(invalid("tabulated density is identically zero"));
        }
        let mut logs: Vec<f64> = log_values.iter().map(|l| l - peak).collect();
        let mut cumulative = Vec::with_capacity(grid.len());
        cumulative.push(0.0);
        let mut total = 0.0;
        for i in 0..grid.len() - 1 {
            total += cell_mass(grid[i + 1] - grid[i], logs[i], logs[i + 1]);
            cumulative.push(total);
        }
        if !(total > 0.0) {
            return Err(invalid("tabulated density has zero mass"));
        }
        let log_total = total.ln();
        for l in logs.iter_mut() {
            *l -= log_total;
        }
        for c in cumulative.iter_mut() {
            *c /= total;
        }
        Ok(Self {
            nodes: grid,
            log_values: logs,
            cumulative,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    fn cell(&self, v: f64) -> Option<usize> {
        let n = self.nodes.len();
        if v < self.nodes[0] || v > self.nodes[n - 1] {
            return None;
        }
        let idx = self.nodes.partition_point(|&x| x <= v);
        Some(idx.clamp(1, n - 1) - 1)
    }

    pub fn log_density(&self, v: f64) -> f64 {
        match self.cell(v) {
            None => f64::NEG_INFINITY,
            Some(i) => {
                let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
                let (l0, l1) = (self.log_values[i], self.log_values[i + 1]);
                if l0 == f64::NEG_INFINITY || l1 == f64::NEG_INFINITY {
                    return if v == x0 {
                        l0
                    } else if v == x1 {
                        l1
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                l0 + (l1 - l0) * (v - x0) / (x1 - x0)
            }
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        let n = self.nodes.len();
        if v <= self.nodes[0] {
            return 0.0;
        }
        if v >= self.nodes[n - 1] {
            return 1.0;
        }
        let i = self.cell(v).expect("inside grid");
        let x0 = self.nodes[i];
        let (l0, l1) = (self.log_values[i], self.log_values[i + 1]);
        let h = self.nodes[i + 1] - x0;
        let part = if l0 == f64::NEG_INFINITY || l1 == f64::NEG_INFINITY {
            0.0
        } else {
            let slope = (l1 - l0) / h;
            partial_mass(v - x0, l0, slope)
        };
        (self.cumulative[i] + part).min(1.0)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.nodes.len();
        let idx = self.cumulative.partition_point(|&c| c < u).clamp(1, n - 1) - 1;
        let x0 = self.nodes[idx];
        let h = self.nodes[idx + 1] - x0;
        let (l0, l1) = (self.log_values[idx], self.log_values[idx + 1]);
        let mass = self.cumulative[idx + 1] - self.cumulative[idx];
        if !(mass > 0.0) {
            return x0;
        }
        let target = ((u - self.cumulative[idx]) / mass).clamp(0.0, 1.0);
        let delta = l1 - l0;
        let frac = if delta.abs() < 1e-9 {
            target
        } else {
            (target * delta.exp_m1()).ln_1p() / delta
        };
        x0 + h * frac.clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        let mut m = 0.0;
        for i in 0..self.nodes.len() - 1 {
            let x0 = self.nodes[i];
            let h = self.nodes[i + 1] - x0;
            let (l0, l1) = (self.log_values[i], self.log_values[i + 1]);
            if l0 == f64::NEG_INFINITY || l1 == f64::NEG_INFINITY {
                continue;
            }
            let b = (l1 - l0) / h;
            let mass = cell_mass(h, l0, l1);
            // ∫₀^h x e^{l0 + b x} dx
            let first = if (b * h).abs() < 1e-6 {
                l0.exp() * h * h * (0.5 + b * h / 3.0)
            } else {
                l0.exp() * ((b * h - 1.0) * (b * h).exp() + 1.0) / (b * b)
            };
            m += x0 * mass + first;
        }
        m
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    pub fn support(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }
}

/// `∫₀^h exp(l0 + (l1 − l0) x / h) dx`.
fn cell_mass(h: f64, l0: f64, l1: f64) -> f64 {
    if l0 == f64::NEG_INFINITY || l1 == f64::NEG_INFINITY {
        return 0.0;
    }
    let delta = l1 - l0;
    if delta.abs() < 1e-12 {
        h * l0.exp()
    } else {
        h * l0.exp() * delta.exp_m1() / delta
    }
}

/// `∫₀^x exp(l0 + slope·t) dt`.
fn partial_mass(x: f64, l0: f64, slope: f64) -> f64 {
    let z = slope * x;
    if z.abs() < 1e-12 {
        x * l0.exp()
    } else {
        l0.exp() * z.exp_m1() / slope
    }
}

/// Kummer type II law with density
/// `σ^b / (Γ(a) ψ(a, 1−b, c)) · v^{a−1} (v+σ)^{−(a+b)} e^{−c v/σ}` on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KummerII {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sigma: f64,
    log_norm: f64,
    table: Arc<Tabulated>,
}

impl KummerII {
    pub fn new(a: f64, b: f64, c: f64, sigma: f64) -> Result<Self> {
        if !(a > 0.0
            && sigma > 0.0
            && c >= 0.0
            && b.is_finite()
            && a.is_finite()
            && c.is_finite()
            && sigma.is_finite())
        {
            return Err(invalid(format!(
                "Kummer type II needs a > 0, c >= 0, sigma > 0 (got a={a}, b={b}, c={c}, sigma={sigma})"
            )));
        }
        if c == 0.0 && b <= 0.0 {
            return Err(invalid(
                "Kummer type II with c = 0 needs b > 0 to be normalizable",
            ));
        }
        let integral = kummer_psi_integral(a, b, c)?;
        // ∫ v^{a−1}(v+σ)^{−(a+b)} e^{−cv/σ} dv = σ^{−b} Γ(a) ψ(a, 1−b, c)
        let log_norm = -(integral.ln() - b * sigma.ln());
        let log_density = |v: f64| kummer_log_density(a, b, c, sigma, log_norm, v);
        let table = Arc::new(kummer_table(sigma, &log_density)?);
        Ok(Self {
            a,
            b,
            c,
            sigma,
            log_norm,
            table,
        })
    }

    /// `Γ(a) ψ(a, 1−b, c)` evaluated by quadrature of its integral definition.
    pub fn psi_integral(&self) -> f64 {
        (-(self.log_norm) + self.b * self.sigma.ln()).exp()
    }

    pub fn log_density(&self, v: f64) -> f64 {
        kummer_log_density(self.a, self.b, self.c, self.sigma, self.log_norm, v)
    }
}

fn kummer_log_density(a: f64, b: f64, c: f64, sigma: f64, log_norm: f64, v: f64) -> f64 {
    if v <= 0.0 || !v.is_finite() {
        return f64::NEG_INFINITY;
    }
    log_norm + (a - 1.0) * v.ln() - (a + b) * (v + sigma).ln() - c * v / sigma
}

/// Sampling table on a grid that is geometric near the origin and uniform
/// further out, up to where `v·density(v)` is negligible.
fn kummer_table<F: Fn(f64) -> f64>(sigma: f64, log_density: &F) -> Result<Tabulated> {
    let mut upper = sigma;
    for _ in 0..200 {
        if log_density(upper) + upper.ln() < -33.0 || upper > 1e12 * sigma {
            break;
        }
        upper *= 1.5;
    }
    let lower = sigma * 1e-12;
    let half = TABLE_NODES / 2;
    let ratio = (upper / lower).ln() / half as f64;
    let mut grid: Vec<f64> = (0..=half)
        .map(|i| lower * (ratio * i as f64).exp())
        .collect();
    grid.extend((1..=half).map(|i| upper * i as f64 / half as f64));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let logs = grid.iter().map(|&v| log_density(v)).collect();
    Tabulated::from_log_values(grid, logs)
}

fn kummer_psi_integral(a: f64, b: f64, c: f64) -> Result<f64> {
    let tol = Tolerance::new(0.0, 1e-13);
    let tail_factor = |t: f64| (-(a + b) * (1.0 + t).ln() - c * t).exp();
    // ∫₀¹ t^{a−1} f(t) dt = (1/a) ∫₀¹ f(u^{1/a}) du removes the endpoint singularity
    let head = quad::integrate(|u: f64| tail_factor(u.powf(1.0 / a)), 0.0, 1.0, tol);
    let tail = quad::integrate_upper(
        |t: f64| ((a - 1.0) * t.ln() - (a + b) * (1.0 + t).ln() - c * t).exp(),
        1.0,
        tol,
    );
    let value = head.value / a + tail.value;
    if !(value.is_finite() && value > 0.0) {
        return Err(MmnError::Numerical(
            "Kummer normalizer is not finite".into(),
        ));
    }
    Ok(value)
}

/// Coefficients of the representation `ℓ(v) = C v^p e^{−c₂ v − c₁ v²/2}` on `(0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTiltForm {
    pub c1: f64,
    pub c2: f64,
    pub log_const: f64,
    pub power: usize,
}

/// Distribution of the scalar mixing variable `V`.
#[derive(Debug, Clone, PartialEq)]
pub enum MixingLaw {
    Degenerate {
        value: f64,
    },
    /// Gamma with shape `shape` and scale `scale`.
    Gamma {
        shape: f64,
        scale: f64,
    },
    /// Square root of a chi-square variable with `dof` degrees of freedom.
    SqrtChiSq {
        dof: f64,
    },
    /// `N(loc, scale²)` truncated to `(0, ∞)`; the standard case is `loc = 0, scale = 1`.
    TruncNormal {
        loc: f64,
        scale: f64,
    },
    KummerII(KummerII),
    Tabulated(Arc<Tabulated>),
}

impl MixingLaw {
    pub fn degenerate(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(invalid("point mass location must be finite"));
        }
        Ok(Self::Degenerate { value })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
            return Err(invalid(format!(
                "gamma needs positive shape and scale, got {shape}, {scale}"
            )));
        }
        Ok(Self::Gamma { shape, scale })
    }

    pub fn sqrt_chisq(dof: f64) -> Result<Self> {
        if !(dof > 0.0 && dof.is_finite()) {
            return Err(invalid(format!(
                "chi degrees of freedom must be positive, got {dof}"
            )));
        }
        Ok(Self::SqrtChiSq { dof })
    }

    /// Standard normal truncated to `(0, ∞)` (the half-normal law).
    pub fn trunc_normal() -> Self {
        Self::TruncNormal {
            loc: 0.0,
            scale: 1.0,
        }
    }

    pub fn trunc_normal_with(loc: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && loc.is_finite()) {
            return Err(invalid(format!(
                "truncated normal needs finite loc and positive scale, got {loc}, {scale}"
            )));
        }
        Ok(Self::TruncNormal { loc, scale })
    }

    pub fn kummer2(a: f64, b: f64, c: f64, sigma: f64) -> Result<Self> {
        Ok(Self::KummerII(KummerII::new(a, b, c, sigma)?))
    }

    pub fn tabulated(grid: Vec<f64>, density_values: Vec<f64>) -> Result<Self> {
        Ok(Self::Tabulated(Arc::new(Tabulated::new(
            grid,
            density_values,
        )?)))
    }

    /// True for the half-normal law, whichever tag expresses it.
    pub fn is_half_normal(&self) -> bool {
        match *self {
            Self::TruncNormal { loc, scale } => loc == 0.0 && scale == 1.0,
            Self::SqrtChiSq { dof } => dof == 1.0,
            _ => false,
        }
    }

    /// The `(c₁, c₂, C, p)` form with polynomial `h(v) = C v^p` when the law
    /// has one with a small integer power.
    pub fn gaussian_tilt_form(&self) -> Option<GaussianTiltForm> {
        match *self {
            Self::Gamma { shape, scale } => {
                let p = shape - 1.0;
                if p.fract() != 0.0 || !(0.0..=2.0).contains(&p) {
                    return None;
                }
                Some(GaussianTiltForm {
                    c1: 0.0,
                    c2: 1.0 / scale,
                    log_const: -ln_gamma(shape) - shape * scale.ln(),
                    power: p as usize,
                })
            }
            Self::SqrtChiSq { dof } => {
                let p = dof - 1.0;
                if p.fract() != 0.0 || !(0.0..=2.0).contains(&p) {
                    return None;
                }
                Some(GaussianTiltForm {
                    c1: 1.0,
                    c2: 0.0,
                    log_const: (1.0 - 0.5 * dof) * LN_2 - ln_gamma(0.5 * dof),
                    power: p as usize,
                })
            }
            Self::TruncNormal { loc, scale } => {
                let s2 = scale * scale;
                Some(GaussianTiltForm {
                    c1: 1.0 / s2,
                    c2: -loc / s2,
                    log_const: -0.5 * loc * loc / s2
                        - LN_SQRT_2PI
                        - scale.ln()
                        - log_norm_cdf(loc / scale),
                    power: 0,
                })
            }
            _ => None,
        }
    }

    fn continuous_log_density(&self, v: f64) -> f64 {
        match self {
            Self::Degenerate { .. } => unreachable!("point masses have no density"),
            Self::Gamma { shape, scale } => {
                if v < 0.0 || !v.is_finite() {
                    return f64::NEG_INFINITY;
                }
                if v == 0.0 {
                    return match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => -scale.ln(),
                        _ => f64::NEG_INFINITY,
                    };
                }
                (shape - 1.0) * v.ln() - v / scale - ln_gamma(*shape) - shape * scale.ln()
            }
            Self::SqrtChiSq { dof } => {
                if v < 0.0 || !v.is_finite() {
                    return f64::NEG_INFINITY;
                }
                let norm = (1.0 - 0.5 * dof) * LN_2 - ln_gamma(0.5 * dof);
                if v == 0.0 {
                    return match dof.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => norm,
                        _ => f64::NEG_INFINITY,
                    };
                }
                norm + (dof - 1.0) * v.ln() - 0.5 * v * v
            }
            Self::TruncNormal { loc, scale } => {
                if v < 0.0 || !v.is_finite() {
                    return f64::NEG_INFINITY;
                }
                log_norm_pdf((v - loc) / scale) - scale.ln() - log_norm_cdf(loc / scale)
            }
            Self::KummerII(k) => k.log_density(v),
            Self::Tabulated(t) => t.log_density(v),
        }
    }
}

impl ScalarLaw for MixingLaw {
    fn log_density(&self, v: f64) -> Result<f64> {
        if let Self::Degenerate { value } = self {
            return Err(MmnError::NoDensity(format!("point mass at {value}")));
        }
        Ok(self.continuous_log_density(v))
    }

    fn cdf(&self, v: f64) -> Result<f64> {
        if v.is_nan() {
            return Err(domain("cdf argument is NaN"));
        }
        Ok(match self {
            Self::Degenerate { value } => {
                if v >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Gamma { shape, scale } => {
                if v <= 0.0 {
                    0.0
                } else if v.is_infinite() {
                    1.0
                } else {
                    gamma_lr(*shape, v / scale)
                }
            }
            Self::SqrtChiSq { dof } => {
                if v <= 0.0 {
                    0.0
                } else if v.is_infinite() {
                    1.0
                } else {
                    gamma_lr(0.5 * dof, 0.5 * v * v)
                }
            }
            Self::TruncNormal { loc, scale } => {
                if v <= 0.0 {
                    0.0
                } else {
                    let log_survival = log_norm_cdf((loc - v) / scale) - log_norm_cdf(loc / scale);
                    -log_survival.exp_m1()
                }
            }
            Self::KummerII(k) => {
                if v <= 0.0 {
                    0.0
                } else if v.is_infinite() {
                    1.0
                } else {
                    let tol = Tolerance::new(0.0, 1e-12);
                    let a = k.a;
                    // substitution u = w^a near the origin as in the normalizer
                    let upper = v.min(k.sigma);
                    let head = quad::integrate(
                        |u: f64| {
                            let w = u.powf(1.0 / a);
                            (k.log_density(w) - (a - 1.0) * w.ln()).exp() / a
                        },
                        0.0,
                        upper.powf(a),
                        tol,
                    );
                    let tail = if v > k.sigma {
                        quad::integrate(|w| k.log_density(w).exp(), k.sigma, v, tol).value
                    } else {
                        0.0
                    };
                    (head.value + tail).min(1.0)
                }
            }
            Self::Tabulated(t) => t.cdf(v),
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Degenerate { value } => *value,
            Self::Gamma { shape, scale } => GammaDist::new(*shape, *scale)
                .expect("validated gamma parameters")
                .sample(rng),
            Self::SqrtChiSq { dof } => ChiSquared::new(*dof)
                .expect("validated chi-square parameters")
                .sample(rng)
                .sqrt(),
            Self::TruncNormal { loc, scale } => {
                loc + scale * sample_std_normal_above(-loc / scale, rng)
            }
            Self::KummerII(k) => k.table.sample(rng),
            Self::Tabulated(t) => t.sample(rng),
        }
    }

    fn support(&self) -> (f64, f64) {
        match self {
            Self::Degenerate { value } => (*value, *value),
            Self::Tabulated(t) => t.support(),
            _ => (0.0, f64::INFINITY),
        }
    }

    fn window(&self) -> (f64, f64) {
        match self {
            Self::Degenerate { value } => (*value, *value),
            Self::Gamma { shape, scale } => (0.0, scale * (shape + 12.0 * shape.sqrt() + 40.0)),
            Self::SqrtChiSq { dof } => (0.0, (dof + 12.0 * (2.0 * dof).sqrt() + 40.0).sqrt()),
            Self::TruncNormal { loc, scale } => {
                if *loc >= 0.0 {
                    ((loc - 9.0 * scale).max(0.0), loc + 9.0 * scale)
                } else {
                    // tail beyond x is below exp(−x|loc|/s² − x²/(2s²))
                    (0.0, loc + (loc * loc + 80.0 * scale * scale).sqrt())
                }
            }
            Self::KummerII(k) => k.table.support(),
            Self::Tabulated(t) => t.support(),
        }
    }

    fn mean(&self) -> Result<f64> {
        match self {
            Self::Degenerate { value } => Ok(*value),
            Self::Gamma { shape, scale } => Ok(shape * scale),
            Self::SqrtChiSq { dof } => {
                Ok(SQRT_2 * (ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof)).exp())
            }
            Self::TruncNormal { loc, scale } => {
                Ok(loc + scale * reverse_mills_unchecked(loc / scale))
            }
            Self::KummerII(k) => {
                if k.c == 0.0 && k.b <= 1.0 {
                    return Err(MmnError::Numerical(
                        "Kummer type II law has infinite mean".into(),
                    ));
                }
                let tol = Tolerance::new(0.0, 1e-11);
                let head = quad::integrate(|v| v * k.log_density(v).exp(), 0.0, k.sigma, tol);
                let tail = quad::integrate_upper(|v| v * k.log_density(v).exp(), k.sigma, tol);
                Ok(head.value + tail.value)
            }
            Self::Tabulated(t) => Ok(t.mean()),
        }
    }

    fn atom(&self) -> Option<f64> {
        match self {
            Self::Degenerate { value } => Some(*value),
            _ => None,
        }
    }
}

/// Draws `Z ~ N(0, 1)` conditioned on `Z > lower`.
pub(crate) fn sample_std_normal_above<R: Rng + ?Sized>(lower: f64, rng: &mut R) -> f64 {
    if lower <= 0.0 {
        if lower == 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            return z.abs();
        }
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > lower {
                return z;
            }
        }
    }
    // exponential proposal with the optimal rate for the tail beyond `lower`
    let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = lower + e / rate;
        let u: f64 = rng.random();
        if u <= (-0.5 * (z - rate) * (z - rate)).exp() {
            return z;
        }
    }
}

/// Draws `count` values of `V ~ law`.
pub fn sample_mixing<R: Rng + ?Sized>(law: &MixingLaw, count: usize, rng: &mut R) -> Vec<f64> {
    law.sample_n(count, rng)
}

/// Density of a continuous mixing law.
pub fn mixing_density(law: &MixingLaw, v: f64) -> Result<f64> {
    law.density(v)
}

/// Law of a scalar on the real line obtained from mixing variables.
#[derive(Debug, Clone, PartialEq)]
pub enum DifferenceLaw {
    /// Laplace law with density `e^{−|t|/scale} / (2 scale)`, the difference of
    /// two independent exponentials with mean `scale`.
    ClosedLaplace { scale: f64 },
    /// Difference of two independent half-normal variables, with density
    /// `2√2 φ(t/√2) Φ(−|t|/√2)`.
    ClosedTruncNormalDiff,
    /// `shift + V` or `shift − V` for `V ~ base`.
    ShiftedNegated {
        base: MixingLaw,
        shift: f64,
        negate: bool,
    },
    /// `Σ wᵢ Vᵢ` with a tabulated density from numerical convolution.
    NumericConvolution {
        components: Vec<(MixingLaw, f64)>,
        table: Arc<Tabulated>,
    },
    /// `Σ wᵢ Vᵢ` that can only be sampled.
    SamplerOnly { components: Vec<(MixingLaw, f64)> },
}

impl DifferenceLaw {
    /// True when density evaluation is supported.
    pub fn has_density(&self) -> bool {
        match self {
            Self::SamplerOnly { .. } => false,
            Self::ShiftedNegated { base, .. } => base.atom().is_none(),
            _ => true,
        }
    }

    fn combination_mean(components: &[(MixingLaw, f64)]) -> Result<f64> {
        components
            .iter()
            .try_fold(0.0, |acc, (law, w)| Ok(acc + w * law.mean()?))
    }
}

impl ScalarLaw for DifferenceLaw {
    fn log_density(&self, t: f64) -> Result<f64> {
        match self {
            Self::ClosedLaplace { scale } => Ok(-t.abs() / scale - (2.0 * scale).ln()),
            Self::ClosedTruncNormalDiff => {
                let z = t / SQRT_2;
                Ok(1.5 * LN_2 + log_norm_pdf(z) + log_norm_cdf(-z.abs()))
            }
            Self::ShiftedNegated {
                base,
                shift,
                negate,
            } => {
                let v = if *negate { shift - t } else { t - shift };
                base.log_density(v)
            }
            Self::NumericConvolution { table, .. } => Ok(table.log_density(t)),
            Self::SamplerOnly { .. } => Err(MmnError::Capability(
                "linear combination with point masses and continuous laws is sampler-only".into(),
            )),
        }
    }

    fn cdf(&self, t: f64) -> Result<f64> {
        match self {
            Self::ClosedLaplace { scale } => Ok(if t < 0.0 {
                0.5 * (t / scale).exp()
            } else {
                1.0 - 0.5 * (-t / scale).exp()
            }),
            Self::ClosedTruncNormalDiff => {
                let z = t / SQRT_2;
                Ok(if t < 0.0 {
                    2.0 * norm_cdf(z).powi(2)
                } else {
                    1.0 - 2.0 * norm_cdf(-z).powi(2)
                })
            }
            Self::ShiftedNegated {
                base,
                shift,
                negate,
            } => {
                if *negate {
                    // P(shift − V ≤ t) = P(V ≥ shift − t)
                    let v = shift - t;
                    if base.atom().is_some() {
                        Ok(if base.atom().unwrap() >= v { 1.0 } else { 0.0 })
                    } else {
                        Ok(1.0 - base.cdf(v)?)
                    }
                } else {
                    base.cdf(t - shift)
                }
            }
            Self::NumericConvolution { table, .. } => Ok(table.cdf(t)),
            Self::SamplerOnly { .. } => {
                Err(MmnError::Capability("sampler-only law has no cdf".into()))
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::ClosedLaplace { scale } => {
                let e1: f64 = rng.sample(Exp1);
                let e2: f64 = rng.sample(Exp1);
                scale * (e2 - e1)
            }
            Self::ClosedTruncNormalDiff => {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                z2.abs() - z1.abs()
            }
            Self::ShiftedNegated {
                base,
                shift,
                negate,
            } => {
                let v = base.sample(rng);
                if *negate {
                    shift - v
                } else {
                    shift + v
                }
            }
            Self::NumericConvolution { components, .. } | Self::SamplerOnly { components } => {
                components.iter().map(|(law, w)| w * law.sample(rng)).sum()
            }
        }
    }

    fn support(&self) -> (f64, f64) {
        match self {
            Self::ClosedLaplace { .. } | Self::ClosedTruncNormalDiff => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            Self::ShiftedNegated {
                base,
                shift,
                negate,
            } => {
                let (lo, hi) = base.support();
                if *negate {
                    (shift - hi, shift - lo)
                } else {
                    (shift + lo, shift + hi)
                }
            }
            Self::NumericConvolution { table, .. } => table.support(),
            Self::SamplerOnly { components } => combination_range(components, |l| l.support()),
        }
    }

    fn window(&self) -> (f64, f64) {
        match self {
            Self::ClosedLaplace { scale } => (-36.0 * scale, 36.0 * scale),
            Self::ClosedTruncNormalDiff => (-11.0, 11.0),
            Self::ShiftedNegated {
                base,
                shift,
                negate,
            } => {
                let (lo, hi) = base.window();
                if *negate {
                    (shift - hi, shift - lo)
                } else {
                    (shift + lo, shift + hi)
                }
            }
            Self::NumericConvolution { table, .. } => table.support(),
            Self::SamplerOnly { components } => combination_range(components, |l| l.window()),
        }
    }

    fn mean(&self) -> Result<f64> {
        match self {
            Self::ClosedLaplace { .. } | Self::ClosedTruncNormalDiff => Ok(0.0),
            Self::ShiftedNegated {
                base,
                shift,
                negate,
            } => {
                let m = base.mean()?;
                Ok(if *negate { shift - m } else { shift + m })
            }
            Self::NumericConvolution { components, .. } | Self::SamplerOnly { components } => {
                Self::combination_mean(components)
            }
        }
    }

    fn atom(&self) -> Option<f64> {
        match self {
            Self::ShiftedNegated {
                base,
                shift,
                negate,
            } => base
                .atom()
                .map(|v| if *negate { shift - v } else { shift + v }),
            _ => None,
        }
    }
}

fn combination_range<F: Fn(&MixingLaw) -> (f64, f64)>(
    components: &[(MixingLaw, f64)],
    range: F,
) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for (law, w) in components {
        let (a, b) = range(law);
        let (x, y) = if *w >= 0.0 {
            (w * a, w * b)
        } else {
            (w * b, w * a)
        };
        lo += if x.is_nan() { 0.0 } else { x };
        hi += if y.is_nan() { 0.0 } else { y };
    }
    (lo, hi)
}

/// Law of `V₂ − V₁` for independent `V₁ ~ l1`, `V₂ ~ l2`.
pub fn difference_law(l1: &MixingLaw, l2: &MixingLaw) -> Result<DifferenceLaw> {
    if let (
        MixingLaw::Gamma {
            shape: a1,
            scale: b1,
        },
        MixingLaw::Gamma {
            shape: a2,
            scale: b2,
        },
    ) = (l1, l2)
    {
        if *a1 == 1.0 && *a2 == 1.0 && b1 == b2 {
            return Ok(DifferenceLaw::ClosedLaplace { scale: *b1 });
        }
    }
    if l1.is_half_normal() && l2.is_half_normal() {
        return Ok(DifferenceLaw::ClosedTruncNormalDiff);
    }
    if let Some(v1) = l1.atom() {
        return Ok(DifferenceLaw::ShiftedNegated {
            base: l2.clone(),
            shift: -v1,
            negate: false,
        });
    }
    if let Some(v2) = l2.atom() {
        return Ok(DifferenceLaw::ShiftedNegated {
            base: l1.clone(),
            shift: v2,
            negate: true,
        });
    }
    linear_combination(&[l1.clone(), l2.clone()], &[-1.0, 1.0])
}

/// Law of `Σ wᵢ Vᵢ` for independent `Vᵢ ~ laws[i]`.
///
/// Point masses contribute a constant shift. Up to [`MAX_CONVOLVED`]
/// continuous components are convolved numerically into a tabulated density;
/// beyond that the result can be sampled but carries no density.
pub fn difference_law_mean_shifted(laws: &[MixingLaw], weights: &[f64]) -> Result<DifferenceLaw> {
    if laws.len() != weights.len() || laws.is_empty() {
        return Err(invalid(
            "laws and weights must be non-empty and of equal length",
        ));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(invalid("weights must be finite"));
    }
    linear_combination(laws, weights)
}

fn linear_combination(laws: &[MixingLaw], weights: &[f64]) -> Result<DifferenceLaw> {
    let mut shift = 0.0;
    let mut continuous: Vec<(MixingLaw, f64)> = Vec::new();
    for (law, &w) in laws.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        match law.atom() {
            Some(v) => shift += w * v,
            None => continuous.push((law.clone(), w)),
        }
    }
    if continuous.is_empty() {
        return Ok(DifferenceLaw::ShiftedNegated {
            base: MixingLaw::Degenerate { value: shift },
            shift: 0.0,
            negate: false,
        });
    }
    if continuous.len() == 1 && continuous[0].1.abs() == 1.0 {
        let (base, w) = continuous.pop().unwrap();
        return Ok(DifferenceLaw::ShiftedNegated {
            base,
            shift,
            negate: w < 0.0,
        });
    }
    if continuous.len() > MAX_CONVOLVED {
        if shift != 0.0 {
            continuous.push((MixingLaw::Degenerate { value: shift }, 1.0));
        }
        return Ok(DifferenceLaw::SamplerOnly {
            components: continuous,
        });
    }
    let table = convolve(&continuous, shift)?;
    let mut components = continuous;
    if shift != 0.0 {
        components.push((MixingLaw::Degenerate { value: shift }, 1.0));
    }
    Ok(DifferenceLaw::NumericConvolution {
        components,
        table: Arc::new(table),
    })
}

/// A scaled component `w V` viewed as a density on the real line.
struct Scaled<'a> {
    law: &'a MixingLaw,
    weight: f64,
}

impl Scaled<'_> {
    fn log_density(&self, x: f64) -> f64 {
        self.law
            .log_density(x / self.weight)
            .unwrap_or(f64::NEG_INFINITY)
            - self.weight.abs().ln()
    }

    fn interval(&self, (a, b): (f64, f64)) -> (f64, f64) {
        if self.weight > 0.0 {
            (self.weight * a, self.weight * b)
        } else {
            (self.weight * b, self.weight * a)
        }
    }

    fn window(&self) -> (f64, f64) {
        self.interval(self.law.window())
    }

    fn support(&self) -> (f64, f64) {
        self.interval(self.law.support())
    }
}

/// Grid with uniform spacing over `[lo, hi]` refined geometrically around
/// each finite point of `focus` that lies inside the interval.
fn refined_grid(lo: f64, hi: f64, focus: &[f64]) -> Vec<f64> {
    let n = TABLE_NODES;
    let width = hi - lo;
    let mut grid: Vec<f64> = (0..=n).map(|i| lo + width * i as f64 / n as f64).collect();
    let step = width / n as f64;
    for &p in focus {
        if !(p.is_finite() && p >= lo && p <= hi) {
            continue;
        }
        grid.push(p);
        let mut d = step * 1e-9;
        while d < 4.0 * step {
            for q in [p - d, p + d] {
                if q > lo && q < hi {
                    grid.push(q);
                }
            }
            d *= 1.25;
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Tabulates `log_fn` starting from `grid`, bisecting every cell whose
/// log-linear interpolant misses the midpoint density by more than a relative
/// `1e-8` (or `1e-11` of the peak).
fn adaptive_table<F: Fn(f64) -> f64 + Sync>(grid: Vec<f64>, log_fn: F) -> Result<Tabulated> {
    let eval = |x: f64| {
        let l = log_fn(x);
        if l.is_nan() || l == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            l
        }
    };
    let mut logs: Vec<f64> = grid.par_iter().map(|&x| eval(x)).collect();
    let mut grid = grid;
    for _ in 0..MAX_REFINE_PASSES {
        if grid.len() >= MAX_TABLE_NODES {
            break;
        }
        let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let floor = peak + (1e-11f64).ln();
        let mids: Vec<(usize, f64, f64)> = (0..grid.len() - 1)
            .into_par_iter()
            .filter_map(|i| {
                let (l0, l1) = (logs[i], logs[i + 1]);
                if l0.max(l1) < floor - 30.0 {
                    return None;
                }
                let m = 0.5 * (grid[i] + grid[i + 1]);
                if !(m > grid[i] && m < grid[i + 1]) {
                    return None;
                }
                let exact = eval(m);
                let interp = 0.5 * (l0 + l1);
                let (fe, fi) = ((exact - peak).exp(), (interp - peak).exp());
                let gap = (fe - fi).abs();
                let limit = 1e-8 * fe.max(fi) + (floor - peak).exp();
                let bad = if interp.is_finite() || exact.is_finite() {
                    gap > limit
                } else {
                    false
                };
                bad.then_some((i, m, exact))
            })
            .collect();
        if mids.is_empty() {
            break;
        }
        let mut new_grid = Vec::with_capacity(grid.len() + mids.len());
        let mut new_logs = Vec::with_capacity(grid.len() + mids.len());
        let mut next = mids.iter().peekable();
        for i in 0..grid.len() {
            new_grid.push(grid[i]);
            new_logs.push(logs[i]);
            if let Some(&&(j, m, l)) = next.peek() {
                if j == i {
                    new_grid.push(m);
                    new_logs.push(l);
                    next.next();
                }
            }
        }
        grid = new_grid;
        logs = new_logs;
    }
    Tabulated::from_log_values(grid, logs)
}

fn convolve(components: &[(MixingLaw, f64)], shift: f64) -> Result<Tabulated> {
    let parts: Vec<Scaled> = components
        .iter()
        .map(|(law, w)| Scaled { law, weight: *w })
        .collect();
    let first = &parts[0];
    let (mut lo, mut hi) = first.window();
    let mut edges: Vec<f64> = {
        let (a, b) = first.support();
        vec![a, b].into_iter().filter(|x| x.is_finite()).collect()
    };
    let mut table: Option<Tabulated> = None;
    if parts.len() == 1 {
        return adaptive_table(
            refined_grid(
                lo + shift,
                hi + shift,
                &edges.iter().map(|e| e + shift).collect::<Vec<_>>(),
            ),
            |x| first.log_density(x - shift),
        );
    }
    for next in &parts[1..] {
        let (nlo, nhi) = next.window();
        let (slo, shi) = next.support();
        let next_edges: Vec<f64> = [slo, shi].into_iter().filter(|x| x.is_finite()).collect();
        let prev_lo = lo;
        let prev_hi = hi;
        let prev_edges = edges.clone();
        lo += nlo;
        hi += nhi;
        let mut kinks = Vec::new();
        for &a in &prev_edges {
            for &b in &next_edges {
                kinks.push(a + b);
            }
        }
        let grid = refined_grid(lo, hi, &kinks);
        let prev_log = |y: f64| match &table {
            None => first.log_density(y),
            Some(t) => t.log_density(y),
        };
        let tol = Tolerance::new(0.0, 1e-10);
        let next_table = adaptive_table(grid, |t| {
            // ∫ f_prev(t − x) g(x) dx over x with t − x inside the previous window
            let a = nlo.max(t - prev_hi);
            let b = nhi.min(t - prev_lo);
            if !(b > a) {
                return f64::NEG_INFINITY;
            }
            let mut pts = vec![a];
            for &e in prev_edges
                .iter()
                .map(|e| t - e)
                .chain(next_edges.iter().copied())
                .collect::<Vec<_>>()
                .iter()
            {
                if e > a && e < b {
                    pts.push(e);
                }
            }
            pts.push(b);
            pts.sort_by(f64::total_cmp);
            let r = quad::integrate_pieces(
                |x| {
                    let v = (prev_log(t - x) + next.log_density(x)).exp();
                    if v.is_finite() {
                        v
                    } else {
                        0.0
                    }
                },
                &pts,
                tol,
            );
            r.value.ln()
        })?;
        table = Some(next_table);
        edges = kinks;
    }
    let t = table.expect("at least two components");
    let grid = t.nodes.iter().map(|x| x + shift).collect();
    Tabulated::from_log_values(grid, t.log_values.clone())
}

/// Law with density proportional to `g(k) exp(−A k²/2 + B k)`.
///
/// Laws of the Gaussian-tilt form with constant `h` map to a truncated normal
/// `TN((B − c₂)/(A + c₁), 1/√(A + c₁))` (or an exponential when `A + c₁ = 0`);
/// other laws are tabulated on a grid covering the tilted mass.
pub fn posterior_mixing(law: &MixingLaw, a: f64, b: f64) -> Result<MixingLaw> {
    if !(a >= 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(domain(format!(
            "tilt needs A >= 0 and finite B, got {a}, {b}"
        )));
    }
    if law.atom().is_some() {
        return Ok(law.clone());
    }
    if a == 0.0 && b == 0.0 {
        return Ok(law.clone());
    }
    if let Some(form) = law.gaussian_tilt_form() {
        if form.power == 0 {
            let precision = a + form.c1;
            if precision > 0.0 {
                let scale = 1.0 / precision.sqrt();
                return MixingLaw::trunc_normal_with((b - form.c2) / precision, scale);
            }
            let rate = form.c2 - b;
            if rate > 0.0 {
                return MixingLaw::gamma(1.0, 1.0 / rate);
            }
            return Err(MmnError::NonNormalizable(format!(
                "exponential tilt {b} is not below the decay rate {}",
                form.c2
            )));
        }
    }
    let region = TiltedRegion::locate(law, a, b)?;
    let (slo, _) = law.support();
    let grid = refined_grid(region.lo, region.hi, &[slo, region.argmax]);
    let table = adaptive_table(grid, |v| {
        let l = law.log_density(v).unwrap_or(f64::NEG_INFINITY);
        if l == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            l - 0.5 * a * v * v + b * v
        }
    })?;
    Ok(MixingLaw::Tabulated(Arc::new(table)))
}

/// `E[K]` for `K` with density proportional to `g(k) exp(−A k²/2 + B k)`,
/// by quadrature against the untilted law.
pub fn tilted_mean(law: &MixingLaw, a: f64, b: f64) -> Result<f64> {
    if let Some(v) = law.atom() {
        return Ok(v);
    }
    let region = TiltedRegion::locate(law, a, b)?;
    let log_mass = region.log_integral(law, a, b);
    let (lo, _) = law.support();
    let pos = region.log_integral_with(law, a, b, |v| (v - lo).max(0.0));
    let mean = lo + (pos - log_mass).exp();
    if !mean.is_finite() {
        return Err(MmnError::Numerical("tilted law has no finite mean".into()));
    }
    Ok(mean)
}

/// Wrapper over the two families of scalar laws used by mean-mixture
/// distributions.
#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Mixing(MixingLaw),
    Difference(DifferenceLaw),
}

impl From<MixingLaw> for Law {
    fn from(l: MixingLaw) -> Self {
        Law::Mixing(l)
    }
}

impl From<DifferenceLaw> for Law {
    fn from(l: DifferenceLaw) -> Self {
        Law::Difference(l)
    }
}

impl Law {
    /// Mixing law with the Gaussian-tilt form, if any.
    pub fn as_mixing(&self) -> Option<&MixingLaw> {
        match self {
            Law::Mixing(m) => Some(m),
            Law::Difference(DifferenceLaw::ShiftedNegated {
                base,
                shift,
                negate: false,
            }) if *shift == 0.0 => Some(base),
            _ => None,
        }
    }

    pub fn has_density(&self) -> bool {
        match self {
            Law::Mixing(m) => m.atom().is_none(),
            Law::Difference(d) => d.has_density(),
        }
    }
}

macro_rules! delegate {
    ($self:ident, $l:ident => $e:expr) => {
        match $self {
            Law::Mixing($l) => $e,
            Law::Difference($l) => $e,
        }
    };
}

impl ScalarLaw for Law {
    fn log_density(&self, v: f64) -> Result<f64> {
        delegate!(self, l => l.log_density(v))
    }
    fn cdf(&self, v: f64) -> Result<f64> {
        delegate!(self, l => l.cdf(v))
    }
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        delegate!(self, l => l.sample(rng))
    }
    fn support(&self) -> (f64, f64) {
        delegate!(self, l => l.support())
    }
    fn window(&self) -> (f64, f64) {
        delegate!(self, l => l.window())
    }
    fn mean(&self) -> Result<f64> {
        delegate!(self, l => l.mean())
    }
    fn atom(&self) -> Option<f64> {
        delegate!(self, l => l.atom())
    }
}
