//! Scalar special functions: the normal CDF and its logarithm, the reverse
//! Mills ratio, the bivariate normal CDF, the noncentral chi-square CDF,
//! truncated normal moments and the Gaussian-weighted `Φ` integral used by the
//! closed-form predictive densities.

#![allow(clippy::excessive_precision)]

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{domain, MmnError, Result};
use crate::quad::{self, Tolerance};

/// `ln √(2π)`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_405_6;

/// Largest order accepted by [`truncated_normal_moment`].
pub const MAX_MOMENT_ORDER: usize = 20;

const TAIL_SWITCH: f64 = -8.0;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// `Φ(x)` without argument checks; infinities map to 0 and 1.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Mills ratio `(1 − Φ(t)) / φ(t)` for `t ≥ 8` by its continued fraction
/// `1/(t + 1/(t + 2/(t + 3/(t + …))))`, evaluated with the modified Lentz method.
fn mills_ratio_tail(t: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = t;
    let mut c = t;
    let mut d = 0.0;
    for n in 1..500 {
        let an = n as f64;
        d = t + an * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = t + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// `log Φ(x)` without argument checks, accurate in both tails.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x < TAIL_SWITCH {
        log_norm_pdf(x) + mills_ratio_tail(-x).ln()
    } else if x > 5.0 {
        (-norm_cdf(-x)).ln_1p()
    } else {
        norm_cdf(x).ln()
    }
}

/// `φ(t)/Φ(t)` without argument checks.
pub fn reverse_mills_unchecked(t: f64) -> f64 {
    if t < TAIL_SWITCH {
        1.0 / mills_ratio_tail(-t)
    } else {
        norm_pdf(t) / norm_cdf(t)
    }
}

/// Standard normal CDF `Φ(x)`.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(domain("normal cdf argument is NaN"));
    }
    Ok(norm_cdf(x))
}

/// `log Φ(x)`.
pub fn log_std_normal_cdf(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(domain("normal cdf argument is NaN"));
    }
    Ok(log_norm_cdf(x))
}

/// Reverse Mills ratio `R(t) = φ(t)/Φ(t)`.
pub fn reverse_mills(t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(domain(format!(
            "reverse Mills ratio needs a finite argument, got {t}"
        )));
    }
    Ok(reverse_mills_unchecked(t))
}

// Gauss–Legendre (weight, abscissa) pairs on [-1, 1] from Genz's BVND.
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, -0.238_619_186_083_197_0),
];
const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475_0),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305_0),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];
const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

/// `P(X > h, Y > k)` for a standard bivariate normal with correlation `r`
/// (Drezner–Wesolowsky with Genz's refinements near `|r| = 1`).
fn bvnd(h: f64, k: f64, r: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let quad: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        if r.abs() > 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin();
            for &(w, x) in quad {
                for sign in [-1.0, 1.0] {
                    let sn = (asr * (sign * x + 1.0) / 2.0).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / (2.0 * two_pi);
        }
        return bvn + norm_cdf(-h) * norm_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let b_s = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let asr = -(b_s / a_s + hk) / 2.0;
        if asr > -100.0 {
            bvn = a
                * asr.exp()
                * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        }
        if hk > -100.0 {
            let b = b_s.sqrt();
            bvn -= (-hk / 2.0).exp()
                * two_pi.sqrt()
                * norm_cdf(-b / a)
                * b
                * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(w, x) in quad {
            for sign in [-1.0, 1.0] {
                let xs = (a * (sign * x + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -(b_s / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * xs / (2.0 * (1.0 + rs).powi(2))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / two_pi;
    }
    if r > 0.0 {
        bvn + norm_cdf(-h.max(k))
    } else {
        -bvn + (norm_cdf(-h) - norm_cdf(-k)).max(0.0)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(domain(format!("correlation {rho} outside [-1, 1]")));
    }
    Ok(())
}

/// `Φ₂(z1, z2; ρ) = P(X ≤ z1, Y ≤ z2)` for a standard bivariate normal.
/// Infinite limits are accepted.
pub fn bivariate_normal_cdf(z1: f64, z2: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    if z1.is_nan() || z2.is_nan() {
        return Err(domain("bivariate normal cdf argument is NaN"));
    }
    Ok(bvn_cdf(z1, z2, rho))
}

fn bvn_cdf(z1: f64, z2: f64, rho: f64) -> f64 {
    if z1 == f64::NEG_INFINITY || z2 == f64::NEG_INFINITY {
        return 0.0;
    }
    if z1 == f64::INFINITY {
        return norm_cdf(z2);
    }
    if z2 == f64::INFINITY {
        return norm_cdf(z1);
    }
    bvnd(-z1, -z2, rho).clamp(0.0, 1.0)
}

/// `log Φ₂(z1, z2; ρ)`, switching to a log-domain single-integral
/// representation when the probability is too small for the direct scheme
/// to carry relative accuracy.
pub fn log_bivariate_normal_cdf(z1: f64, z2: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    if z1.is_nan() || z2.is_nan() {
        return Err(domain("bivariate normal cdf argument is NaN"));
    }
    if z1 == f64::NEG_INFINITY || z2 == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if z1 == f64::INFINITY {
        return Ok(log_norm_cdf(z2));
    }
    if z2 == f64::INFINITY {
        return Ok(log_norm_cdf(z1));
    }
    let direct = bvn_cdf(z1, z2, rho);
    if direct > 1e-6 {
        return Ok(direct.ln());
    }
    if rho == 1.0 {
        return Ok(log_norm_cdf(z1.min(z2)));
    }
    if rho == -1.0 {
        // P(X ≤ z1, -X ≤ z2) = Φ(z1) − Φ(−z2) when positive
        let lo = -z2;
        if lo >= z1 {
            return Ok(f64::NEG_INFINITY);
        }
        let a = log_norm_cdf(z1);
        let b = log_norm_cdf(lo);
        return Ok(a + (-(b - a).exp()).ln_1p());
    }
    Ok(log_bvn_integral(z1, z2, rho))
}

/// `log ∫_{-∞}^{h} φ(t) Φ((k − ρt)/√(1−ρ²)) dt` for `|ρ| < 1`.
fn log_bvn_integral(h: f64, k: f64, rho: f64) -> f64 {
    let s = ((1.0 - rho) * (1.0 + rho)).sqrt();
    let log_f = |t: f64| log_norm_pdf(t) + log_norm_cdf((k - rho * t) / s);
    let slope = |t: f64| -t - (rho / s) * reverse_mills_unchecked((k - rho * t) / s);
    // the integrand is log-concave; locate its maximum on (-∞, h]
    let mode = if slope(h) >= 0.0 {
        h
    } else {
        let mut step = 1.0;
        let mut lo = h - step;
        while slope(lo) < 0.0 {
            step *= 2.0;
            lo = h - step;
        }
        let mut hi = h;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let peak = log_f(mode);
    let mut step = 1.0 / (1.0 + mode.abs());
    let mut left = mode - step;
    while log_f(left) - peak > -60.0 {
        step *= 2.0;
        left = mode - step;
    }
    let mut points = vec![left, mode];
    if mode < h {
        points.push(h);
    }
    let r = quad::integrate_pieces(
        |t| (log_f(t) - peak).exp(),
        &points,
        Tolerance::new(0.0, 1e-13),
    );
    peak + r.value.ln()
}

/// CDF of the noncentral chi-square distribution with `nu` degrees of
/// freedom and noncentrality `lambda`, as a Poisson mixture of central
/// chi-square CDFs.
pub fn noncentral_chisq_cdf(nu: f64, lambda: f64, x: f64) -> Result<f64> {
    if !(nu > 0.0) || !(lambda >= 0.0) || !(x >= 0.0) {
        return Err(domain(format!(
            "noncentral chi-square needs nu > 0, lambda >= 0, x >= 0 (got {nu}, {lambda}, {x})"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let half_x = 0.5 * x;
    let value = poisson_mixture(0.5 * lambda, |k| gamma_lr(0.5 * nu + k as f64, half_x));
    Ok(value.clamp(0.0, 1.0))
}

/// `E[T^{-p}]` for `T ~ χ²_ν(λ)`, requiring `ν/2 > p`.
pub fn noncentral_chisq_inverse_moment(nu: f64, lambda: f64, p: f64) -> Result<f64> {
    if !(nu > 0.0) || !(lambda >= 0.0) || !(0.5 * nu > p) {
        return Err(domain(format!(
            "inverse moment of order {p} undefined for chi-square with {nu} degrees of freedom"
        )));
    }
    let half_nu = 0.5 * nu;
    let scale = (-p * std::f64::consts::LN_2).exp();
    Ok(scale
        * poisson_mixture(0.5 * lambda, |k| {
            let a = half_nu + k as f64;
            (ln_gamma(a - p) - ln_gamma(a)).exp()
        }))
}

/// `Σ_k Pois(k; mean) · term(k)` for terms bounded by their value at the
/// smallest index visited. Summation starts at the Poisson mode and stops once
/// the remaining Poisson mass on either side falls below `1e-14`.
pub(crate) fn poisson_mixture<F: FnMut(u64) -> f64>(mean: f64, mut term: F) -> f64 {
    const TAIL: f64 = 1e-14;
    if mean == 0.0 {
        return term(0);
    }
    let mode = mean.floor() as u64;
    let log_w0 = -mean + mode as f64 * mean.ln() - ln_gamma(mode as f64 + 1.0);
    let w0 = log_w0.exp();
    let mut total = w0 * term(mode);

    let mut w = w0;
    let mut k = mode;
    loop {
        w *= mean / (k + 1) as f64;
        k += 1;
        total += w * term(k);
        let ratio = mean / (k + 1) as f64;
        if ratio < 1.0 && w * ratio / (1.0 - ratio) < TAIL {
            break;
        }
        if w == 0.0 {
            break;
        }
    }

    let mut w = w0;
    let mut k = mode;
    while k > 0 {
        w *= k as f64 / mean;
        k -= 1;
        total += w * term(k);
        let ratio = k as f64 / mean;
        if ratio < 1.0 && w * ratio / (1.0 - ratio) < TAIL {
            break;
        }
    }
    total
}

/// `∫₀^∞ Φ(ct) e^{−t²/(2A) + Bt} dt` in closed form through `Φ₂`.
pub fn lemma_j_integral(a: f64, b: f64, c: f64) -> Result<f64> {
    Ok(log_lemma_j_integral(a, b, c)?.exp())
}

/// Logarithm of [`lemma_j_integral`].
pub fn log_lemma_j_integral(a: f64, b: f64, c: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(domain(format!("Gaussian scale must be positive, got {a}")));
    }
    if !b.is_finite() || !c.is_finite() {
        return Err(domain("Gaussian integral arguments must be finite"));
    }
    let root = (1.0 + c * c * a).sqrt();
    let z1 = c * a * b / root;
    let z2 = b * a.sqrt();
    let rho = c * a.sqrt() / root;
    Ok(0.5 * a * b * b + 0.5 * (2.0 * PI * a).ln() + log_bivariate_normal_cdf(z1, z2, rho)?)
}

/// `E[(Z + Δ)^k | Z + Δ ≥ 0]` for standard normal `Z`.
///
/// For `Δ ≥ 0` the recurrence `m_k = Δ m_{k−1} + (k−1) m_{k−2}` with
/// `m_0 = 1`, `m_1 = Δ + R(Δ)` is stable. For `Δ < 0` it loses accuracy
/// through cancellation, so the moment is evaluated as
/// `R(Δ) ∫₀^∞ w^k e^{Δw − w²/2} dw`.
pub fn truncated_normal_moment(delta: f64, k: usize) -> Result<f64> {
    if k > MAX_MOMENT_ORDER {
        return Err(MmnError::UnsupportedOrder {
            order: k,
            max: MAX_MOMENT_ORDER,
        });
    }
    if !delta.is_finite() {
        return Err(domain(format!(
            "truncation offset must be finite, got {delta}"
        )));
    }
    let mills = reverse_mills_unchecked(delta);
    if k == 0 {
        return Ok(1.0);
    }
    if k == 1 {
        return Ok(delta + mills);
    }
    if delta >= 0.0 {
        let mut prev = 1.0;
        let mut cur = delta + mills;
        for j in 2..=k {
            let next = delta * cur + (j - 1) as f64 * prev;
            prev = cur;
            cur = next;
        }
        return Ok(cur);
    }
    let kf = k as f64;
    let mode = 0.5 * (delta + (delta * delta + 4.0 * kf).sqrt());
    let integrand = |w: f64| {
        if w <= 0.0 {
            0.0
        } else {
            (kf * w.ln() + delta * w - 0.5 * w * w - log_peak(mode, kf, delta)).exp()
        }
    };
    let tol = Tolerance::new(0.0, 1e-13);
    let head = quad::integrate_pieces(integrand, &[0.0, mode, 2.0 * mode + 1.0], tol);
    let tail = quad::integrate_upper(integrand, 2.0 * mode + 1.0, tol);
    let log_integral = (head.value + tail.value).ln() + log_peak(mode, kf, delta);
    Ok((log_integral + mills.ln()).exp())
}

fn log_peak(mode: f64, k: f64, delta: f64) -> f64 {
    k * mode.ln() + delta * mode - 0.5 * mode * mode
}

/// `log(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `log(e^a − e^b)` for `a ≥ b`.
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// `log(Φ(hi) − Φ(lo))` for `lo ≤ hi`, accurate when both lie in the same tail.
pub fn log_norm_interval(lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return f64::NEG_INFINITY;
    }
    if lo > 0.0 {
        // use the upper tail: Φ(hi) − Φ(lo) = Φ(−lo) − Φ(−hi)
        return log_sub_exp(log_norm_cdf(-lo), log_norm_cdf(-hi));
    }
    log_sub_exp(log_norm_cdf(hi), log_norm_cdf(lo))
}
