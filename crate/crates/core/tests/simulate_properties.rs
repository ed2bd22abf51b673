use fpsens::model::{HeatFlow, OuShift, QuadraticPotential};
use fpsens::simulate::{simulate_coupled, simulate_langevin_coupled, RngStreamSpec, TimeGrid};
use fpsens::transport::{PairedClouds, PointCloud};
use proptest::prelude::*;

fn gaussian_start(n: usize, seed: u64, shift: f64) -> PairedClouds {
    let mut s = RngStreamSpec::new(seed).stream(0);
    let left: Vec<f64> = (0..n).map(|_| s.next_normal()).collect();
    let right: Vec<f64> = left.iter().map(|x| x + shift).collect();
    PairedClouds::new(PointCloud::from_1d(&left).unwrap(), PointCloud::from_1d(&right).unwrap()).unwrap()
}

fn ou_gap_error(n_steps: usize) -> f64 {
    let ou = OuShift::for_params(1, 1.0, 0.8, 0.0, 1.0).unwrap();
    let start = PairedClouds::point_masses(&[0.0], &[0.0], 8).unwrap();
    let grid = TimeGrid::new(1.0, n_steps, vec![]).unwrap();
    let e = simulate_coupled(&ou, &[0.0], &[1.0], &start, &grid, &[2.0], &RngStreamSpec::new(3)).unwrap();
    let exact = (1.0 - (-1.0f64).exp()).powi(2);
    (e.moment_curves[0].mean[n_steps] - exact).abs()
}

#[test]
fn same_seed_same_output() {
    let heat = HeatFlow::for_params(2, 0.5, 2.0).unwrap();
    let start = PairedClouds::point_masses(&[0.0, 1.0], &[0.5, 1.0], 700).unwrap();
    let grid = TimeGrid::with_even_snapshots(0.5, 100, 4).unwrap();
    let run = || simulate_coupled(&heat, &[0.5], &[2.0], &start, &grid, &[2.0, 3.0], &RngStreamSpec::new(11)).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.moment_curves, b.moment_curves);
    assert_eq!(a.final_states, b.final_states);
    let other =
        simulate_coupled(&heat, &[0.5], &[2.0], &start, &grid, &[2.0, 3.0], &RngStreamSpec::new(12)).unwrap();
    assert_ne!(a.moment_curves, other.moment_curves);
}

#[cfg(feature = "parallel")]
#[test]
fn thread_count_does_not_change_results() {
    let heat = HeatFlow::for_params(1, 0.5, 2.0).unwrap();
    let start = gaussian_start(3000, 4, 0.25);
    let grid = TimeGrid::with_even_snapshots(1.0, 200, 5).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            simulate_coupled(&heat, &[0.5], &[2.0], &start, &grid, &[2.0, 4.0], &RngStreamSpec::new(99)).unwrap()
        })
    };
    let (one, four) = (run(1), run(4));
    assert_eq!(one.moment_curves, four.moment_curves);
    for (x, y) in one.snapshots.iter().zip(&four.snapshots) {
        assert_eq!(x.pairs, y.pairs);
    }
}

#[test]
fn swapping_legs_swaps_the_clouds() {
    let ou = OuShift::for_params(1, 1.5, 1.0, -0.5, 0.5).unwrap();
    let start = gaussian_start(500, 8, 0.0);
    let grid = TimeGrid::with_even_snapshots(1.0, 100, 3).unwrap();
    let rng = RngStreamSpec::new(21);
    let fwd = simulate_coupled(&ou, &[-0.5], &[0.5], &start, &grid, &[2.0], &rng).unwrap();
    let back = simulate_coupled(&ou, &[0.5], &[-0.5], &start.swapped(), &grid, &[2.0], &rng).unwrap();
    assert_eq!(fwd.moment_curves, back.moment_curves);
    assert_eq!(fwd.final_states.swapped(), back.final_states);
}

#[test]
fn identical_starts_and_parameters_never_separate() {
    let v = QuadraticPotential::new(2, 0.7).unwrap();
    let start = PairedClouds::point_masses(&[1.0, -1.0], &[1.0, -1.0], 400).unwrap();
    let grid = TimeGrid::new(1.0, 100, vec![50]).unwrap();
    let e = simulate_langevin_coupled(&v, &[0.3], &[0.3], 2.0, 2.0, &start, &grid, &[2.0], &RngStreamSpec::new(5))
        .unwrap();
    assert!(e.moment_curves[0].mean.iter().all(|&m| m == 0.0));
    assert!(e.moment_curves[0].std_err.iter().all(|&s| s == 0.0));
}

#[test]
fn euler_error_is_first_order_in_dt() {
    let coarse = ou_gap_error(200);
    let fine = ou_gap_error(400);
    let ratio = coarse / fine;
    assert!((1.8..2.2).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn heat_gap_second_moment_is_t() {
    // Gap (√(2a) − √(2a′))B_t = −B_t, so E gap² = t.
    let heat = HeatFlow::for_params(1, 0.5, 2.0).unwrap();
    let start = PairedClouds::point_masses(&[0.0], &[0.0], 20_000).unwrap();
    let grid = TimeGrid::new(1.0, 100, vec![]).unwrap();
    let e = simulate_coupled(&heat, &[0.5], &[2.0], &start, &grid, &[2.0], &RngStreamSpec::new(2024)).unwrap();
    let c = &e.moment_curves[0];
    assert!((c.mean[100] - 1.0).abs() <= 3.0 * c.std_err[100], "{} ± {}", c.mean[100], c.std_err[100]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn moments_are_nonnegative_and_start_at_the_initial_gap(
        seed in any::<u64>(), shift in -1.0..1.0f64, a in 0.2..2.0f64, ap in 0.2..2.0f64, p in 2.0..5.0f64,
    ) {
        let heat = HeatFlow::for_params(1, a, ap).unwrap();
        let start = gaussian_start(64, seed, shift);
        let grid = TimeGrid::new(0.5, 20, vec![]).unwrap();
        let e = simulate_coupled(&heat, &[a], &[ap], &start, &grid, &[p], &RngStreamSpec::new(seed)).unwrap();
        let c = &e.moment_curves[0];
        prop_assert!(c.mean.iter().chain(&c.std_err).all(|&v| v >= 0.0 && v.is_finite()));
        prop_assert!((c.mean[0] - shift.abs().powf(p)).abs() <= 1e-12);
        // Rounded gaps differ by ulps; the one-pass variance sees ~√ε of them.
        prop_assert!(c.std_err[0] <= 1e-7 * (1.0 + c.mean[0]));
    }
}
