use fpsens::oracle::{
    coupled_gap_oracle, gaussian_w2, gaussian_w2_squared, gaussian_wp_1d, gaussian_wp_pow_1d, joint_covariance, ou_marginal,
    GapModel, GapQuery, GaussianLaw, OracleError, OuParams,
};
use fpsens::simulate::RngStreamSpec;
use fpsens::transport::{wasserstein_1d, PointCloud};
use proptest::prelude::*;

fn ou(k: f64, target: f64, noise: f64) -> OuParams {
    OuParams { k, target: vec![target], noise }
}

#[test]
fn spec_examples() {
    let a = GaussianLaw::univariate(0.0, 1.0).unwrap();
    let b = GaussianLaw::univariate(2.0, 2.0).unwrap();
    assert!((gaussian_w2_squared(&a, &b).unwrap() - 5.0).abs() < 1e-14);
    let i1 = GaussianLaw::isotropic(vec![0.0, 0.0], 1.0).unwrap();
    let i4 = GaussianLaw::isotropic(vec![0.0, 0.0], 4.0).unwrap();
    assert!((gaussian_w2_squared(&i1, &i4).unwrap() - 2.0).abs() < 1e-14);
    assert!((gaussian_wp_1d(0.0, 1.0, 0.0, 0.0, 4.0).unwrap() - 3f64.powf(0.25)).abs() < 1e-12);

    let m = ou_marginal(&ou(1.0, 0.0, 2f64.sqrt()), &GaussianLaw::dirac(vec![0.0]), 1.0).unwrap();
    assert!((m.covariance[(0, 0)] - (1.0 - (-2f64).exp())).abs() < 1e-15);
    let far = ou_marginal(&ou(2.0, 0.5, 1.0), &GaussianLaw::univariate(3.0, 2.0).unwrap(), 25.0).unwrap();
    assert!((far.mean[0] - 0.5).abs() < 1e-10 && (far.covariance[(0, 0)] - 0.25).abs() < 1e-10);

    let heat = GapQuery { model: GapModel::Heat, dim: 1, a: 0.5, a_prime: 2.0, x0: vec![0.0], x0_prime: vec![0.0], p: 2.0, t: 1.0 };
    assert!((coupled_gap_oracle(&heat).unwrap() - 1.0).abs() < 1e-14);
    let g2 = GapQuery { model: GapModel::Ou { k: 1.0, sigma: 1.0 }, a: 0.0, a_prime: 1.0, ..heat.clone() };
    assert!((coupled_gap_oracle(&g2).unwrap() - 0.399576400893).abs() < 1e-12);
    let g4 = GapQuery { model: GapModel::LangevinLogCosh, ..heat };
    assert!(matches!(coupled_gap_oracle(&g4), Err(OracleError::Unsupported(_))));
}

#[test]
fn noise_mismatch_stationary_value() {
    // Δσ = 1 − 1/2, Var = Δσ²(1 − e^{−2kt})/(2k).
    let q = GapQuery {
        model: GapModel::LangevinQuadratic { k: 1.0, beta: 2.0, beta_prime: 8.0 },
        dim: 1,
        a: 0.0,
        a_prime: 0.0,
        x0: vec![0.0],
        x0_prime: vec![0.0],
        p: 2.0,
        t: 5.0,
    };
    let v = coupled_gap_oracle(&q).unwrap();
    assert!((v - 0.125 * (1.0 - (-10f64).exp())).abs() < 1e-15);
}

#[test]
fn empirical_w_p_converges_to_the_gaussian_value() {
    let n = 10_000;
    let (m1, s1, m2, s2) = (0.0, 1.0, 0.5, 1.5);
    let draw = |seed: u64, m: f64, s: f64| {
        let mut st = RngStreamSpec::new(seed).stream(0);
        PointCloud::from_1d(&(0..n).map(|_| m + s * st.next_normal()).collect::<Vec<_>>()).unwrap()
    };
    let (xs, ys) = (draw(1, m1, s1), draw(2, m2, s2));
    for p in [1.0, 2.0, 3.0] {
        let emp = wasserstein_1d(&xs, &ys, p).unwrap().distance();
        let exact = gaussian_wp_1d(m1, s1, m2, s2, p).unwrap();
        assert!((emp - exact).abs() <= 3.0 / (n as f64).sqrt() * (1.0 + exact), "p = {p}: {emp} vs {exact}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn wp_at_order_two_is_w2(m1 in -3.0..3.0f64, s1 in 0.0..3.0f64, m2 in -3.0..3.0f64, s2 in 0.0..3.0f64) {
        let w2 = gaussian_w2(&GaussianLaw::univariate(m1, s1).unwrap(), &GaussianLaw::univariate(m2, s2).unwrap()).unwrap();
        let wp = gaussian_wp_1d(m1, s1, m2, s2, 2.0).unwrap();
        prop_assert!((w2 - wp).abs() <= 1e-9);
    }

    #[test]
    fn equal_spreads_give_translation(m1 in -3.0..3.0f64, s in 0.0..3.0f64, m2 in -3.0..3.0f64, p in 1.0..6.0f64) {
        let v = gaussian_wp_pow_1d(m1, s, m2, s, p).unwrap();
        prop_assert!((v - (m1 - m2).abs().powf(p)).abs() <= 1e-12 * (1.0 + v));
    }

    #[test]
    fn ou_marginal_semigroup(
        k in 0.1..3.0f64, target in -2.0..2.0f64, noise in 0.0..2.0f64,
        m0 in -3.0..3.0f64, s0 in 0.0..2.0f64, t in 0.0..3.0f64, s in 0.0..3.0f64,
    ) {
        let params = ou(k, target, noise);
        let x0 = GaussianLaw::univariate(m0, s0).unwrap();
        let direct = ou_marginal(&params, &x0, t + s).unwrap();
        let composed = ou_marginal(&params, &ou_marginal(&params, &x0, t).unwrap(), s).unwrap();
        prop_assert!((direct.mean[0] - composed.mean[0]).abs() <= 1e-12);
        prop_assert!((direct.covariance[(0, 0)] - composed.covariance[(0, 0)]).abs() <= 1e-12);
    }

    #[test]
    fn equal_noise_gap_solves_its_ode(k in 0.2..3.0f64, a in -2.0..2.0f64, da in 0.1..2.0f64, t in 0.05..4.0f64) {
        // |gap| = |Δa|(1 − e^{−kt}) solves g′ = −k g + k|Δa|.
        let q = |t: f64| GapQuery {
            model: GapModel::Ou { k, sigma: 1.0 },
            dim: 1, a, a_prime: a + da, x0: vec![0.0], x0_prime: vec![0.0], p: 1.0, t,
        };
        let g = |t: f64| coupled_gap_oracle(&q(t)).unwrap();
        let h = 1e-5;
        let deriv = (g(t + h) - g(t - h)) / (2.0 * h);
        prop_assert!((deriv - (-k * g(t) + k * da)).abs() <= 1e-7 * (1.0 + k * da));
    }

    #[test]
    fn joint_covariance_solves_its_ode(k in 0.2..3.0f64, s in 0.0..2.0f64, sp in 0.0..2.0f64, t in 0.05..4.0f64) {
        // dΣ/dt = −2kΣ + vvᵀ, v = (s, s′).
        let h = 1e-5;
        let (a, b, c) = (joint_covariance(k, s, sp, t - h), joint_covariance(k, s, sp, t), joint_covariance(k, s, sp, t + h));
        let v = [s, sp];
        for i in 0..2 {
            for j in 0..2 {
                let deriv = (c[i][j] - a[i][j]) / (2.0 * h);
                prop_assert!((deriv - (-2.0 * k * b[i][j] + v[i] * v[j])).abs() <= 1e-7 * (1.0 + s * s + sp * sp));
            }
        }
    }

    #[test]
    fn even_moments_match_their_polynomials(mu in -10.0..10.0f64, scale in -3.0..1.0f64, ls in -4.0..1.0f64) {
        let (mu, sigma) = (mu * 10f64.powf(scale), 10f64.powf(ls));
        let e2 = mu * mu + sigma * sigma;
        let e4 = mu.powi(4) + 6.0 * mu * mu * sigma * sigma + 3.0 * sigma.powi(4);
        let q2 = fpsens::oracle::normal_abs_moment(mu, sigma, 2.0).unwrap();
        let q4 = fpsens::oracle::normal_abs_moment(mu, sigma, 4.0).unwrap();
        prop_assert!((q2 - e2).abs() <= 1e-11 * e2, "{q2} vs {e2}");
        prop_assert!((q4 - e4).abs() <= 1e-11 * e4, "{q4} vs {e4}");
    }

    #[test]
    fn heat_gap_closed_form_matches_quadrature(p in 2.0..6.0f64, t in 0.1..3.0f64, a in 0.2..3.0f64, ap in 0.2..3.0f64) {
        prop_assume!((a - ap).abs() > 1e-3);
        let q = GapQuery { model: GapModel::Heat, dim: 1, a, a_prime: ap, x0: vec![0.0], x0_prime: vec![0.0], p, t };
        let closed = coupled_gap_oracle(&q).unwrap();
        let ds = (2.0 * a).sqrt() - (2.0 * ap).sqrt();
        let quad = fpsens::oracle::normal_abs_moment(1e-12, ds * t.sqrt(), p).unwrap();
        prop_assert!((closed - quad).abs() <= 1e-8 * closed);
    }
}
