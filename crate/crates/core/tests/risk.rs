use mmn_predict::mixing::*;
use mmn_predict::mmn::*;
use mmn_predict::predictive::*;
use mmn_predict::risk::*;
use mmn_predict::rng::stream;
use mmn_predict::MmnError;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::PI;

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

fn ones(d: usize) -> DVector<f64> {
    DVector::from_element(d, 1.0)
}

fn half_normal_problem(d: usize) -> PredictionProblem {
    let l = MixingLaw::sqrt_chisq(1.0).unwrap();
    PredictionProblem::new(ones(d), 1.0, 2.0, l.clone(), l).unwrap()
}

fn exp_problem(d: usize) -> PredictionProblem {
    let l = MixingLaw::gamma(1.0, 1.0).unwrap();
    PredictionProblem::new(ones(d), 1.0, 2.0, l.clone(), l).unwrap()
}

fn gaussian_entropy(s2: f64) -> f64 {
    0.5 * (1.0 + (2.0 * PI * s2).ln())
}

#[test]
fn entropy_of_normals() {
    let h = entropy_1d(|v| -0.5 * v * v - 0.5 * (2.0 * PI).ln(), (-40.0, 40.0)).unwrap();
    assert!((h - 1.418_938_533_204_672_7).abs() < 1e-7);
    let s: f64 = 2.5;
    let scaled = entropy_1d(
        |v| -0.5 * v * v / (s * s) - 0.5 * (2.0 * PI).ln() - s.ln(),
        (-100.0, 100.0),
    )
    .unwrap();
    assert!((scaled - h - s.ln()).abs() < 1e-7);
    let unbounded = entropy_1d(
        |v| -0.5 * v * v - 0.5 * (2.0 * PI).ln(),
        (f64::NEG_INFINITY, f64::INFINITY),
    )
    .unwrap();
    assert!((unbounded - h).abs() < 1e-7);
}

#[test]
fn entropy_of_a_point_mass_mixture_is_gaussian() {
    let dist = MmnDistribution::isotropic(
        DVector::zeros(1),
        ones(1),
        1.0,
        MixingLaw::degenerate(3.0).unwrap(),
    )
    .unwrap();
    let h = entropy_1d(
        |v| dist.log_density(&DVector::from_element(1, v)).unwrap(),
        (-20.0, 20.0),
    )
    .unwrap();
    assert!((h - gaussian_entropy(1.0)).abs() < 1e-7);
}

#[test]
fn entropy_window_must_hold_the_mass() {
    let err = entropy_1d(|v| -0.5 * v * v - 0.5 * (2.0 * PI).ln(), (-5.0, 5.0)).unwrap_err();
    assert!(matches!(err, MmnError::Window { .. }));
    assert!(entropy_1d(|_| 0.0, (1.0, 1.0)).is_err());
}

#[test]
fn normal_mre_risk_is_the_variance_term() {
    for d in [1usize, 5, 7, 9] {
        let p = PredictionProblem::new(
            DVector::zeros(d),
            1.0,
            2.0,
            MixingLaw::trunc_normal(),
            MixingLaw::gamma(2.0, 1.0).unwrap(),
        )
        .unwrap();
        let want = 0.5 * d as f64 * 1.5f64.ln();
        assert!((mre_risk_exact(&p).unwrap() - want).abs() < 1e-12);
    }
}

/// Entropy of `Z + c(V₂ − V₁)` and `Z + cV` for half-normal `V`, from the
/// skew-normal density `2/√(1+c²) φ(x/√(1+c²)) Φ(cx/√(1+c²))` and Simpson.
fn half_normal_entropies(c3: f64, c2: f64) -> (f64, f64) {
    let n = Normal::standard();
    let skew = |c: f64, x: f64| {
        let s = (1.0 + c * c).sqrt();
        2.0 / s * (-0.5 * x * x / (s * s)).exp() / (2.0 * PI).sqrt() * n.cdf(c * x / s)
    };
    let diff = |x: f64| {
        simpson(
            |v| 2.0 * (-0.5 * v * v).exp() / (2.0 * PI).sqrt() * skew(c3, x + c3 * v),
            0.0,
            10.0,
            800,
        )
    };
    let ent = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| {
        simpson(
            |x| {
                let v = f(x);
                if v > 0.0 {
                    -v * v.ln()
                } else {
                    0.0
                }
            },
            lo,
            hi,
            4000,
        )
    };
    (ent(&diff, -25.0, 25.0), ent(&|x| skew(c2, x), -15.0, 25.0))
}

#[test]
fn mre_risk_matches_skew_normal_entropies() {
    for d in [2usize, 5] {
        let p = half_normal_problem(d);
        let norm = (d as f64).sqrt();
        let (h3, h2) = half_normal_entropies(norm / 3f64.sqrt(), norm / 2f64.sqrt());
        let want = h3 - h2 + 0.5 * d as f64 * 1.5f64.ln();
        let got = mre_risk_exact(&p).unwrap();
        assert!((got - want).abs() < 1e-7, "d={d}: {got} vs {want}");
    }
}

#[test]
fn mre_risk_through_the_quadrature_path() {
    // Γ(2) mixing has no closed difference density
    let l = MixingLaw::gamma(2.0, 0.5).unwrap();
    let p = PredictionProblem::new(ones(3), 1.0, 1.0, l.clone(), l.clone()).unwrap();
    let exact = mre_risk_exact(&p).unwrap();
    let mc = kl_risk_mc(&p, &DVector::zeros(3), |x| mre(&p, x), 20_000, 11).unwrap();
    assert!(
        (mc.mean - exact).abs() < 3.0 * mc.std_error,
        "{exact} vs {mc:?}"
    );
}

#[test]
fn oracle_estimator_has_zero_risk() {
    let p = half_normal_problem(3);
    let theta = DVector::from_column_slice(&[0.5, -1.0, 2.0]);
    let truth = p.y_distribution(theta.clone()).unwrap();
    let est = kl_risk_mc(&p, &theta, |_| Ok(&truth), 2000, 3).unwrap();
    assert_eq!(est.mean, 0.0);
    assert_eq!(est.std_error, 0.0);
}

#[test]
fn normal_mre_risk_by_simulation() {
    let p = PredictionProblem::new(
        DVector::zeros(5),
        1.0,
        2.0,
        MixingLaw::trunc_normal(),
        MixingLaw::trunc_normal(),
    )
    .unwrap();
    let theta = DVector::from_column_slice(&[0.3, -1.0, 2.0, 0.0, 5.0]);
    let est = kl_risk_mc(&p, &theta, |x| mre(&p, x), 50_000, 5).unwrap();
    let want = 2.5 * 1.5f64.ln();
    assert!((est.mean - want).abs() < 3.0 * est.std_error, "{est:?}");
    assert_eq!((est.n, est.seed, est.non_finite), (50_000, 5, 0));
}

#[test]
fn james_stein_improvement_at_the_origin() {
    let exact = js_risk_difference_exact(5, 1.0, 2.0, 0.0).unwrap();
    assert!((exact - 1.0 / 3.0).abs() < 1e-12);
    // quadratic risks of the raw and shrunk means of Z ~ N₄(0, I)
    let mut rng = stream(21);
    let n = 1_000_000;
    let (mut raw, mut shrunk) = (0.0, 0.0);
    for _ in 0..n {
        let z = DVector::<f64>::from_fn(4, |_, _| rng.sample(StandardNormal));
        let z2 = z.norm_squared();
        raw += z2;
        shrunk += (1.0 - 2.0 / z2).powi(2) * z2;
    }
    let mc = -((shrunk - raw) / n as f64) / 6.0;
    assert!((mc - exact).abs() < 5e-3, "{mc}");
}

#[test]
fn james_stein_improvement_vanishes_far_out() {
    let near = js_risk_difference_exact(6, 1.0, 1.0, 1.0).unwrap();
    let far = js_risk_difference_exact(6, 1.0, 1.0, 1e6).unwrap();
    assert!(far < 1e-5 && far > 0.0 && near > far);
    assert!(matches!(
        js_risk_difference_exact(3, 1.0, 1.0, 0.0),
        Err(MmnError::Domain(_))
    ));
}

#[test]
fn james_stein_paired_difference_matches_exact_for_both_mixings() {
    for p in [half_normal_problem(5), exp_problem(5)] {
        let contenders = [
            Contender::estimator(&p, Estimator::Mre),
            Contender::estimator(&p, Estimator::PlugInJs),
        ];
        for t in [0.0, 1.0, 4.0] {
            let theta = sweep_theta(p.a(), t).unwrap();
            let exact = js_risk_difference_exact(5, 1.0, 2.0, p.across_norm2(&theta)).unwrap();
            let r = paired_risk(&p, &theta, &contenders, 40_000, 8, 1).unwrap();
            let diff = r.difference("plugin_js").unwrap();
            assert!(
                (diff.mean - exact).abs() < 3.0 * diff.std_error,
                "t={t}: {diff:?} vs {exact}"
            );
        }
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let p = half_normal_problem(4);
    let contenders = [
        Contender::estimator(&p, Estimator::Mre),
        Contender::estimator(&p, Estimator::HarmonicBayes),
    ];
    let theta = sweep_theta(p.a(), 1.0).unwrap();
    let one = paired_risk(&p, &theta, &contenders, 10_000, 4, 1).unwrap();
    let three = paired_risk(&p, &theta, &contenders, 10_000, 4, 3).unwrap();
    assert_eq!(one, three);
    let other_seed = paired_risk(&p, &theta, &contenders, 10_000, 5, 1).unwrap();
    assert_ne!(one, other_seed);
    assert!(paired_risk(&p, &theta, &contenders, 10_000, 4, 0).is_err());
}

#[test]
fn contaminated_estimates_are_rejected() {
    let p = half_normal_problem(3);
    let flaky = |x: &DVector<f64>| {
        if x[0] > 3.0 {
            Err(MmnError::Numerical("overflow".into()))
        } else {
            mre(&p, x)
        }
    };
    let err = kl_risk_mc(&p, &DVector::zeros(3), flaky, 5000, 1).unwrap_err();
    let MmnError::Contaminated { bad, n } = err else {
        panic!("{err:?}")
    };
    assert_eq!(n, 5000);
    assert!(bad > 0);
}

#[test]
fn sweep_records_failed_points() {
    let p = half_normal_problem(4);
    let contenders = [
        Contender::estimator(&p, Estimator::Mre),
        Contender::new(
            "broken",
            |_: &DVector<f64>| -> mmn_predict::Result<PredictiveDensity> {
                Err(MmnError::Numerical("always".into()))
            },
        ),
    ];
    let grid = [0.0, 2.0];
    let points = risk_sweep(&p, &contenders, &grid, |t| sweep_theta(p.a(), t), 200, 1, 1).unwrap();
    assert_eq!(points.len(), 2);
    assert!(points
        .iter()
        .all(|pt| matches!(pt.outcome, Err(MmnError::Contaminated { .. }))));
    let fine = risk_sweep(
        &p,
        &contenders[..1],
        &grid,
        |t| sweep_theta(p.a(), t),
        200,
        1,
        1,
    )
    .unwrap();
    assert!(fine.iter().all(|pt| pt.outcome.is_ok()));
}

#[test]
fn mre_risk_is_constant_over_theta() {
    let p = half_normal_problem(5);
    let exact = mre_risk_exact(&p).unwrap();
    let mut rng = stream(99);
    let estimates: Vec<RiskEstimate> = (0..5)
        .map(|i| {
            let theta = DVector::from_fn(5, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
            kl_risk_mc(&p, &theta, |x| mre(&p, x), 20_000, 100 + i).unwrap()
        })
        .collect();
    for (i, a) in estimates.iter().enumerate() {
        assert!(
            (a.mean - exact).abs() < 3.0 * a.std_error,
            "{a:?} vs {exact}"
        );
        for b in &estimates[i + 1..] {
            let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
            assert!((a.mean - b.mean).abs() < 3.0 * se);
        }
    }
}

#[test]
fn harmonic_bayes_gain_is_positive_and_mixing_free() {
    let z99 = 2.326_347_874_040_841;
    let mut gains = Vec::new();
    for p in [half_normal_problem(5), exp_problem(5)] {
        let contenders = [
            Contender::estimator(&p, Estimator::Mre),
            Contender::estimator(&p, Estimator::HarmonicBayes),
        ];
        let points = risk_sweep(
            &p,
            &contenders,
            &[0.0, 2.0],
            |t| sweep_theta(p.a(), t),
            20_000,
            17,
            1,
        )
        .unwrap();
        let g: Vec<RiskEstimate> = points
            .iter()
            .map(|pt| {
                *pt.outcome
                    .as_ref()
                    .unwrap()
                    .difference("harmonic_bayes")
                    .unwrap()
            })
            .collect();
        assert!(g[0].lower_bound(z99) > 0.0, "{:?}", g[0]);
        assert!(g[0].mean > g[1].mean);
        gains.push(g);
    }
    for (a, b) in gains[0].iter().zip(&gains[1]) {
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() < 3.0 * se, "{a:?} vs {b:?}");
    }
}

#[test]
fn planar_entropy_splits_along_the_canonical_direction() {
    // H₂ = H₁(√(aᵀΣ⁻¹a), 1, 𝓛) + ½(1 + log 2π) + ½ log|Σ|
    let sigma = DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8]);
    let a = DVector::from_column_slice(&[1.0, -0.5]);
    let law = MixingLaw::sqrt_chisq(1.0).unwrap();
    let dist =
        MmnDistribution::new(DVector::zeros(2), a.clone(), sigma.clone(), law.clone()).unwrap();
    let (lo, hi, n) = (-9.0, 11.0, 400);
    let h = (hi - lo) / n as f64;
    let row = |u: f64| {
        simpson(
            |v| {
                let l = dist
                    .log_density(&DVector::from_column_slice(&[u, v]))
                    .unwrap();
                -l * l.exp()
            },
            lo,
            hi,
            n,
        )
    };
    let grid = simpson(row, lo, hi, n);
    assert!(h < 0.06);
    let c = a.dot(&(sigma.clone().try_inverse().unwrap() * &a)).sqrt();
    let one = MmnDistribution::isotropic(DVector::zeros(1), DVector::from_element(1, c), 1.0, law)
        .unwrap();
    let h1 = entropy_1d(
        |v| one.log_density(&DVector::from_element(1, v)).unwrap(),
        (-14.0, 14.0 + 8.0 * c),
    )
    .unwrap();
    let want = h1 + 0.5 * (1.0 + (2.0 * PI).ln()) + 0.5 * sigma.determinant().ln();
    assert!((grid - want).abs() < 1e-4, "{grid} vs {want}");
}

proptest! {
    #[test]
    fn sweep_theta_realizes_t(a in prop::collection::vec(-3.0f64..3.0, 2..8), t in 0.0f64..20.0) {
        let a = DVector::from_vec(a);
        let theta = sweep_theta(&a, t).unwrap();
        let d = a.len() as f64;
        let along = if a.norm_squared() > 0.0 { theta.dot(&a) / a.norm_squared() } else { 0.0 };
        let across = (&theta - &a * along).norm_squared() / (d - 1.0);
        prop_assert!((across - t).abs() < 1e-10 * (1.0 + t));
    }

    #[test]
    fn james_stein_gain_decreases_with_distance(d in 4usize..10, s2x in 0.2f64..3.0, s2y in 0.2f64..3.0, z in 0.0f64..30.0) {
        let near = js_risk_difference_exact(d, s2x, s2y, z).unwrap();
        let far = js_risk_difference_exact(d, s2x, s2y, z + 1.0).unwrap();
        prop_assert!(near >= far && far >= 0.0);
    }
}
