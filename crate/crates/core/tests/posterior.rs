use mmn_predict::mixing::*;
use mmn_predict::mmn::*;
use mmn_predict::posterior::*;
use mmn_predict::rng::stream;
use mmn_predict::specfn::{norm_cdf, norm_pdf};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
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

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn log_gaussian(r: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
    let d = r.len() as f64;
    let inv = s.clone().try_inverse().unwrap();
    -0.5 * d * (2.0 * PI).ln()
        - 0.5 * s.determinant().ln()
        - 0.5 * (r.transpose() * inv * r)[(0, 0)]
}

#[test]
fn uniform_prior_reflects_the_direction() {
    let law = MixingLaw::gamma(2.0, 1.0).unwrap();
    let dist =
        MmnDistribution::isotropic(DVector::zeros(2), vector(&[1.0, -2.0]), 1.5, law.clone())
            .unwrap();
    let x = vector(&[0.3, 0.4]);
    let post = posterior(&dist, &NormalPrior::uniform(2), &x).unwrap();
    assert_eq!(post.location, x);
    assert_eq!(post.a_star, vector(&[-1.0, 2.0]));
    assert_eq!(&post.sigma_post, dist.sigma());
    assert_eq!(post.law_star, law);
    let mean = posterior_mean(&post).unwrap();
    assert!((mean - (&x - vector(&[1.0, -2.0]) * 2.0)).amax() < 1e-12);
}

#[test]
fn no_direction_gives_normal_posterior() {
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
    let delta = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.5]);
    let mu = vector(&[1.0, -1.0]);
    let dist = MmnDistribution::new(
        DVector::zeros(2),
        DVector::zeros(2),
        sigma.clone(),
        MixingLaw::trunc_normal(),
    )
    .unwrap();
    let prior = NormalPrior::new(mu.clone(), delta.clone()).unwrap();
    let x = vector(&[0.5, 2.0]);
    let post = posterior(&dist, &prior, &x).unwrap();
    // precision-weighted form of the conjugate update
    let si = sigma.clone().try_inverse().unwrap();
    let di = delta.clone().try_inverse().unwrap();
    let cov = (&si + &di).try_inverse().unwrap();
    let mean = &cov * (&si * &x + &di * &mu);
    assert!((posterior_mean(&post).unwrap() - &mean).amax() < 1e-12);
    assert!((&post.sigma_post - &cov).amax() < 1e-12);
    let theta = vector(&[0.2, 0.1]);
    assert!(
        (post.log_density(&theta).unwrap() - log_gaussian(&(&theta - &mean), &cov)).abs() < 1e-12
    );
}

#[test]
fn half_normal_example_posterior() {
    let dist = MmnDistribution::isotropic(
        DVector::zeros(2),
        vector(&[1.0, 0.0]),
        1.0,
        MixingLaw::trunc_normal(),
    )
    .unwrap();
    let prior = NormalPrior::isotropic(DVector::zeros(2), 1.0).unwrap();
    let post = posterior(&dist, &prior, &vector(&[2.0, 0.0])).unwrap();
    assert!((&post.p_matrix - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
    assert!((post.tilt_a - 0.5).abs() < 1e-15);
    assert!((post.tilt_b - 1.0).abs() < 1e-15);
    let MixingLaw::TruncNormal { loc, scale } = post.law_star else {
        panic!("expected a truncated normal, got {:?}", post.law_star);
    };
    assert!((loc - 2.0 / 3.0).abs() < 1e-15);
    assert!((scale - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);

    // grid tilting of the half-normal density
    let tilted = |k: f64| norm_pdf(k) * (-0.25 * k * k + k).exp();
    let mass = simpson(tilted, 0.0, 20.0, 200_000);
    for k in [0.1, 0.7, 1.5, 3.0] {
        let want = tilted(k) / mass;
        assert!((post.law_star.density(k).unwrap() - want).abs() < 1e-12);
    }
    let mean_k = simpson(|k| k * tilted(k), 0.0, 20.0, 200_000) / mass;
    let s = (2.0f64 / 3.0).sqrt();
    let closed = 2.0 / 3.0 + s * norm_pdf((2.0 / 3.0) / s) / norm_cdf((2.0 / 3.0) / s);
    assert!((mean_k - closed).abs() < 1e-12);
    assert!((post.mixing_mean().unwrap() - closed).abs() < 1e-14);
}

/// Direct Bayes in d = 1: posterior density and mean on a θ grid.
fn grid_posterior(
    dist: &MmnDistribution,
    mu: f64,
    tau2: f64,
    x: f64,
) -> (f64, impl Fn(f64) -> f64 + '_, f64) {
    let joint = move |theta: f64| {
        let like = dist
            .with_theta(vector(&[theta]))
            .unwrap()
            .log_density(&vector(&[x]))
            .unwrap();
        (like + (norm_pdf((theta - mu) / tau2.sqrt()) / tau2.sqrt()).ln()).exp()
    };
    let (lo, hi) = (x - 30.0, x + 15.0);
    let evidence = simpson(joint, lo, hi, 60_000);
    let mean = simpson(|t| t * joint(t), lo, hi, 60_000) / evidence;
    (evidence, joint, mean)
}

#[test]
fn posterior_matches_direct_bayes_in_one_dimension() {
    for law in [
        MixingLaw::trunc_normal(),
        MixingLaw::gamma(1.0, 1.0).unwrap(),
    ] {
        let dist =
            MmnDistribution::isotropic(vector(&[0.0]), vector(&[1.3]), 0.8, law.clone()).unwrap();
        let (mu, tau2, x) = (0.5, 2.0, 1.7);
        let post = posterior(
            &dist,
            &NormalPrior::isotropic(vector(&[mu]), tau2).unwrap(),
            &vector(&[x]),
        )
        .unwrap();
        let (evidence, joint, mean) = grid_posterior(&dist, mu, tau2, x);
        for theta in [-3.0, -1.0, 0.0, 0.8, 1.9, 3.5] {
            let want = joint(theta) / evidence;
            let got = post.log_density(&vector(&[theta])).unwrap().exp();
            assert!(
                (got - want).abs() < 1e-6,
                "{law:?} at {theta}: {got} vs {want}"
            );
        }
        let got = posterior_mean(&post).unwrap()[0];
        assert!((got - mean).abs() < 1e-6, "{law:?}: {got} vs {mean}");
    }
}

#[test]
fn posterior_mean_for_tabulated_tilt() {
    // Gamma(2, 1) tilts into a tabulated law; the mean uses quadrature
    let dist = MmnDistribution::isotropic(
        vector(&[0.0]),
        vector(&[0.9]),
        1.0,
        MixingLaw::gamma(2.0, 1.0).unwrap(),
    )
    .unwrap();
    let (mu, tau2, x) = (-0.5, 1.5, 2.2);
    let post = posterior(
        &dist,
        &NormalPrior::isotropic(vector(&[mu]), tau2).unwrap(),
        &vector(&[x]),
    )
    .unwrap();
    assert!(matches!(post.law_star, MixingLaw::Tabulated(_)));
    let (evidence, joint, mean) = grid_posterior(&dist, mu, tau2, x);
    assert!((posterior_mean(&post).unwrap()[0] - mean).abs() < 1e-6);
    for theta in [-2.0, 0.0, 1.0, 2.5] {
        let want = joint(theta) / evidence;
        assert!((post.log_density(&vector(&[theta])).unwrap().exp() - want).abs() < 1e-6);
    }
}

#[test]
fn posterior_mean_against_importance_sampling() {
    // d = 4: draw θ from the prior and weight by the likelihood
    let d = 4;
    let a = vector(&[1.0, 0.5, -0.5, 0.25]);
    let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.2 });
    let law = MixingLaw::trunc_normal();
    let dist = MmnDistribution::new(DVector::zeros(d), a.clone(), sigma, law).unwrap();
    let mu = vector(&[0.5, 0.0, -0.5, 1.0]);
    let delta = DMatrix::from_diagonal(&vector(&[1.0, 2.0, 0.5, 1.5]));
    let prior = NormalPrior::new(mu.clone(), delta.clone()).unwrap();
    let x = vector(&[1.5, 0.7, -1.0, 0.3]);
    let post = posterior(&dist, &prior, &x).unwrap();
    let exact = posterior_mean(&post).unwrap();

    let n = 1_000_000;
    let chol = delta.map(f64::sqrt);
    let mut rng = stream(77);
    let mut weights = Vec::with_capacity(n);
    let mut thetas = Vec::with_capacity(n);
    for _ in 0..n {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta = &mu + &chol * z;
        let lw = dist
            .with_theta(theta.clone())
            .unwrap()
            .log_density(&x)
            .unwrap();
        weights.push(lw);
        thetas.push(theta);
    }
    let peak = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = weights.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = w.iter().sum();
    for j in 0..d {
        let est: f64 = w.iter().zip(&thetas).map(|(w, t)| w * t[j]).sum::<f64>() / total;
        // delta-method standard error of the ratio estimator
        let var: f64 = w
            .iter()
            .zip(&thetas)
            .map(|(w, t)| (w * (t[j] - est)).powi(2))
            .sum::<f64>()
            / (total * total);
        let se = var.sqrt();
        assert!(
            (est - exact[j]).abs() < 3.0 * se,
            "coordinate {j}: {est} vs {} (se {se})",
            exact[j]
        );
    }
}

#[test]
fn flat_prior_posterior_mean_against_importance_sampling() {
    // π(θ) = 1: posterior ∝ p(x | θ), proposal N(x, 4Σ)
    let a = vector(&[1.0, -0.5]);
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.7]);
    let dist = MmnDistribution::new(
        DVector::zeros(2),
        a.clone(),
        sigma.clone(),
        MixingLaw::trunc_normal(),
    )
    .unwrap();
    let x = vector(&[0.4, 1.2]);
    let post = posterior(&dist, &NormalPrior::uniform(2), &x).unwrap();
    let exact = posterior_mean(&post).unwrap();
    assert!((&exact - (&x - &a * (2.0 / PI).sqrt())).amax() < 1e-14);

    let n = 1_000_000;
    let prop_cov = &sigma * 4.0;
    let chol = prop_cov.clone().cholesky().unwrap().l();
    let mut rng = stream(78);
    let mut est = DVector::zeros(2);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta = &x + &chol * &z;
        let lw = dist
            .with_theta(theta.clone())
            .unwrap()
            .log_density(&x)
            .unwrap()
            - log_gaussian(&(&theta - &x), &prop_cov);
        samples.push((lw.exp(), theta));
    }
    let total: f64 = samples.iter().map(|s| s.0).sum();
    for (w, t) in &samples {
        est += t * (*w / total);
    }
    for j in 0..2 {
        let var: f64 = samples
            .iter()
            .map(|(w, t)| (w * (t[j] - est[j])).powi(2))
            .sum::<f64>()
            / (total * total);
        assert!((est[j] - exact[j]).abs() < 3.0 * var.sqrt());
    }
}

#[test]
fn large_prior_variance_recovers_flat_posterior() {
    let law = MixingLaw::trunc_normal();
    let a = vector(&[0.6, 0.3]);
    let dist = MmnDistribution::isotropic(DVector::zeros(2), a.clone(), 1.0, law).unwrap();
    let mu = vector(&[0.2, -0.1]);
    let x = vector(&[0.5, 0.1]);
    let flat = posterior(&dist, &NormalPrior::uniform(2), &x).unwrap();
    let vague = posterior(&dist, &NormalPrior::isotropic(mu, 1e8).unwrap(), &x).unwrap();
    assert!(vague.p_matrix.amax() < 1e-8);
    assert!(vague.tilt_a.abs() < 1e-8 && vague.tilt_b.abs() < 1e-8);
    assert!((&flat.location - &vague.location).amax() < 1e-8);
    assert!((&flat.a_star - &vague.a_star).amax() < 1e-8);
    assert!((&flat.sigma_post - &vague.sigma_post).amax() < 1e-8);
    let pred = predictive_normal_prior(
        &dist,
        &dist,
        &NormalPrior::isotropic(vector(&[0.2, -0.1]), 1e8).unwrap(),
        &x,
    )
    .unwrap();
    assert!((1.0 - pred.omega).abs() < 1e-8);
    // the densities themselves differ at order σ²/τ²
    for theta in [
        vector(&[0.0, 0.0]),
        vector(&[-1.0, 0.5]),
        vector(&[1.0, -1.0]),
    ] {
        let (f, v) = (
            flat.log_density(&theta).unwrap(),
            vague.log_density(&theta).unwrap(),
        );
        assert!((f - v).abs() < 1e-7, "{f} vs {v}");
    }
    let (mf, mv) = (
        posterior_mean(&flat).unwrap(),
        posterior_mean(&vague).unwrap(),
    );
    assert!((mf - mv).amax() < 1e-7);
}

#[test]
fn predictive_without_x_direction() {
    let law2 = MixingLaw::gamma(1.0, 1.0).unwrap();
    let dx = MmnDistribution::isotropic(
        DVector::zeros(2),
        DVector::zeros(2),
        1.0,
        MixingLaw::trunc_normal(),
    )
    .unwrap();
    let dy = MmnDistribution::isotropic(DVector::zeros(2), vector(&[1.0, 1.0]), 2.0, law2.clone())
        .unwrap();
    let prior = NormalPrior::isotropic(vector(&[1.0, 0.0]), 3.0).unwrap();
    let x = vector(&[0.5, -0.5]);
    let pred = predictive_normal_prior(&dx, &dy, &prior, &x).unwrap();
    let omega = 0.75;
    let center = &x * omega + vector(&[1.0, 0.0]) * (1.0 - omega);
    let want = MmnDistribution::isotropic(center, vector(&[1.0, 1.0]), omega + 2.0, law2).unwrap();
    for y in [
        vector(&[0.0, 0.0]),
        vector(&[2.0, 1.0]),
        vector(&[-1.0, 3.0]),
    ] {
        assert!((pred.log_density(&y).unwrap() - want.log_density(&y).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn flat_prior_predictive_is_the_minimum_risk_density() {
    let a = vector(&[1.0, -1.0]);
    let l1 = MixingLaw::gamma(1.0, 1.0).unwrap();
    let l2 = MixingLaw::gamma(1.0, 1.0).unwrap();
    let dx = MmnDistribution::isotropic(DVector::zeros(2), a.clone(), 1.0, l1.clone()).unwrap();
    let dy = MmnDistribution::isotropic(DVector::zeros(2), a.clone(), 2.0, l2.clone()).unwrap();
    let x = vector(&[0.3, 0.6]);
    let pred = predictive_normal_prior(&dx, &dy, &NormalPrior::uniform(2), &x).unwrap();
    assert_eq!(pred.omega, 1.0);
    let mre =
        MmnDistribution::isotropic(x.clone(), a.clone(), 3.0, difference_law(&l1, &l2).unwrap())
            .unwrap();
    let collapsed = pred.collapsed.as_ref().unwrap();
    for y in [
        vector(&[0.0, 0.0]),
        vector(&[2.0, -1.0]),
        vector(&[-1.5, 2.5]),
    ] {
        let want = mre.log_density(&y).unwrap();
        assert!((pred.log_density(&y).unwrap() - want).abs() < 1e-8);
        assert!((collapsed.log_density(&y).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn point_masses_give_normal_predictive() {
    let a = vector(&[1.0, 2.0]);
    let dx = MmnDistribution::isotropic(
        DVector::zeros(2),
        a.clone(),
        1.0,
        MixingLaw::degenerate(0.0).unwrap(),
    )
    .unwrap();
    let dy = MmnDistribution::isotropic(
        DVector::zeros(2),
        a.clone(),
        0.5,
        MixingLaw::degenerate(0.0).unwrap(),
    )
    .unwrap();
    let mu = vector(&[-1.0, 1.0]);
    let prior = NormalPrior::isotropic(mu.clone(), 4.0).unwrap();
    let x = vector(&[1.0, 1.0]);
    let pred = predictive_normal_prior(&dx, &dy, &prior, &x).unwrap();
    let omega = 0.8;
    let center = &x * omega + &mu * (1.0 - omega);
    let cov = DMatrix::identity(2, 2) * (omega + 0.5);
    for y in [vector(&[0.0, 0.0]), vector(&[1.0, 3.0])] {
        let want = log_gaussian(&(&y - &center), &cov);
        assert!((pred.log_density(&y).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn collapsed_form_matches_two_directions() {
    let a = vector(&[1.0, 0.5]);
    let dx =
        MmnDistribution::isotropic(DVector::zeros(2), a.clone(), 1.0, MixingLaw::trunc_normal())
            .unwrap();
    let dy = MmnDistribution::isotropic(
        DVector::zeros(2),
        &a * 2.0,
        1.5,
        MixingLaw::sqrt_chisq(1.0).unwrap(),
    )
    .unwrap();
    let prior = NormalPrior::isotropic(vector(&[0.0, 0.5]), 2.0).unwrap();
    let x = vector(&[1.2, 0.4]);
    let pred = predictive_normal_prior(&dx, &dy, &prior, &x).unwrap();
    let collapsed = pred.collapsed.as_ref().unwrap();
    let mut rng = stream(91);
    for _ in 0..20 {
        let y = vector(&[rng.random_range(-3.0..6.0), rng.random_range(-3.0..5.0)]);
        let (two, one) = (
            pred.log_density(&y).unwrap().exp(),
            collapsed.log_density(&y).unwrap().exp(),
        );
        assert!((two - one).abs() < 1e-6, "{two} vs {one}");
    }
}

#[test]
fn predictive_matches_posterior_integral() {
    // d = 1: q(y | x) = ∫ p(y | θ) π(θ | x) dθ
    for (l1, l2) in [
        (MixingLaw::trunc_normal(), MixingLaw::trunc_normal()),
        (
            MixingLaw::gamma(1.0, 1.0).unwrap(),
            MixingLaw::sqrt_chisq(1.0).unwrap(),
        ),
    ] {
        let dx =
            MmnDistribution::isotropic(vector(&[0.0]), vector(&[1.0]), 1.0, l1.clone()).unwrap();
        let dy =
            MmnDistribution::isotropic(vector(&[0.0]), vector(&[-0.7]), 2.0, l2.clone()).unwrap();
        let prior = NormalPrior::isotropic(vector(&[0.3]), 1.5).unwrap();
        let x = vector(&[1.4]);
        let pred = predictive_normal_prior(&dx, &dy, &prior, &x).unwrap();
        let post = posterior(&dx, &prior, &x).unwrap();
        for y in [-3.0, -1.0, 0.5, 2.0, 4.0] {
            let integrand = |t: f64| {
                let py = dy
                    .with_theta(vector(&[t]))
                    .unwrap()
                    .log_density(&vector(&[y]))
                    .unwrap();
                (py + post.log_density(&vector(&[t])).unwrap()).exp()
            };
            let want = simpson(integrand, -20.0, 15.0, 20_000);
            let got = pred.log_density(&vector(&[y])).unwrap().exp();
            assert!((got - want).abs() < 1e-5, "{y}: {got} vs {want}");
        }
    }
}

#[test]
fn predictive_needs_isotropic_covariances() {
    let law = MixingLaw::trunc_normal();
    let dx = MmnDistribution::new(
        DVector::zeros(2),
        vector(&[1.0, 0.0]),
        DMatrix::from_diagonal(&vector(&[1.0, 2.0])),
        law.clone(),
    )
    .unwrap();
    let dy = MmnDistribution::isotropic(DVector::zeros(2), vector(&[1.0, 0.0]), 1.0, law).unwrap();
    let err = predictive_normal_prior(&dx, &dy, &NormalPrior::uniform(2), &DVector::zeros(2))
        .unwrap_err();
    assert!(matches!(
        err,
        mmn_predict::MmnError::UnsupportedCovariance(_)
    ));
}
