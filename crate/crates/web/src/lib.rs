//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! Every export returns a flat `Float64Array`; the layout is given per
//! function. The plain Rust functions do the work so they can be tested
//! natively.

use fpsens::bounds::{
    langevin_constants, langevin_envelope, langevin_p2_corrected_envelope, noise_mismatch, theorem1_constants,
    theorem1_envelope,
};
use fpsens::model::QuadraticPotential;
use fpsens::oracle::{coupled_gap_oracle, gaussian_wp_1d, GapModel, GapQuery};
use fpsens::simulate::{simulate_langevin_coupled, RngStreamSpec, TimeGrid};
use fpsens::transport::{wasserstein_1d, PairedClouds, PointCloud};
use wasm_bindgen::prelude::*;

/// Rows `(t, theorem1, langevin)` at `n + 1` evenly spaced times.
#[allow(clippy::too_many_arguments)]
pub fn envelope_table(
    l1: f64,
    l2: f64,
    m: f64,
    k: f64,
    l3: f64,
    p: f64,
    delta_a: f64,
    t_end: f64,
    n: usize,
) -> Result<Vec<f64>, String> {
    let t1 = theorem1_constants(l1, l2, m, p).map_err(|e| e.to_string())?;
    let lv = langevin_constants(k, l3, 1, p).map_err(|e| e.to_string())?;
    let n = n.max(1);
    let mut out = Vec::with_capacity(3 * (n + 1));
    for i in 0..=n {
        let t = t_end * i as f64 / n as f64;
        out.extend([t, theorem1_envelope(0.0, &t1, delta_a, t), langevin_envelope(0.0, &lv, delta_a, 0.0, t)]);
    }
    Ok(out)
}

/// Synchronous coupling of two 1-D quadratic-potential Langevin SDEs from the
/// origin. Rows `(t, E|gap|², SE, exact, corrected envelope)` at `snapshots`
/// times after t = 0.
#[allow(clippy::too_many_arguments)]
pub fn langevin_demo(
    k: f64,
    delta_a: f64,
    beta: f64,
    beta_prime: f64,
    n_traj: usize,
    t_end: f64,
    n_steps: usize,
    snapshots: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let model = QuadraticPotential::new(1, k).map_err(|e| e.to_string())?;
    let start = PairedClouds::point_masses(&[0.0], &[0.0], n_traj.max(2)).map_err(|e| e.to_string())?;
    let grid = TimeGrid::new(t_end, n_steps, vec![]).map_err(|e| e.to_string())?;
    let ens = simulate_langevin_coupled(
        &model,
        &[0.0],
        &[delta_a],
        beta,
        beta_prime,
        &start,
        &grid,
        &[2.0],
        &RngStreamSpec::new(seed),
    )
    .map_err(|e| e.to_string())?;
    let curve = &ens.moment_curves[0];
    let dsb = noise_mismatch(beta, beta_prime);
    let snapshots = snapshots.clamp(1, n_steps);
    let mut out = Vec::with_capacity(5 * (snapshots + 1));
    for j in 0..=snapshots {
        let step = j * n_steps / snapshots;
        let t = grid.time(step);
        let q = GapQuery {
            model: GapModel::LangevinQuadratic { k, beta, beta_prime },
            dim: 1,
            a: 0.0,
            a_prime: delta_a,
            x0: vec![0.0],
            x0_prime: vec![0.0],
            p: 2.0,
            t,
        };
        let exact = coupled_gap_oracle(&q).map_err(|e| e.to_string())?;
        let env = langevin_p2_corrected_envelope(0.0, k, model.l3, 1, delta_a.abs(), dsb, t).map_err(|e| e.to_string())?;
        out.extend([t, curve.mean[step], curve.std_err[step], exact, env]);
    }
    Ok(out)
}

/// Empirical W_p between n-point samples of N(m1, s1²) and N(m2, s2²), and
/// the exact value: `(empirical, exact)`.
pub fn gaussian_wp(m1: f64, s1: f64, m2: f64, s2: f64, p: f64, n: usize, seed: u64) -> Result<Vec<f64>, String> {
    let exact = gaussian_wp_1d(m1, s1, m2, s2, p).map_err(|e| e.to_string())?;
    let streams = RngStreamSpec::new(seed);
    let draw = |index: u64, m: f64, s: f64| {
        let mut st = streams.stream(index);
        PointCloud::from_1d(&(0..n.max(1)).map(|_| m + s * st.next_normal()).collect::<Vec<_>>())
    };
    let xs = draw(0, m1, s1).map_err(|e| e.to_string())?;
    let ys = draw(1, m2, s2).map_err(|e| e.to_string())?;
    let r = wasserstein_1d(&xs, &ys, p).map_err(|e| e.to_string())?;
    Ok(vec![r.distance(), exact])
}

#[wasm_bindgen(js_name = envelopeTable)]
#[allow(clippy::too_many_arguments)]
pub fn envelope_table_js(
    l1: f64,
    l2: f64,
    m: f64,
    k: f64,
    l3: f64,
    p: f64,
    delta_a: f64,
    t_end: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    envelope_table(l1, l2, m, k, l3, p, delta_a, t_end, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = langevinDemo)]
#[allow(clippy::too_many_arguments)]
pub fn langevin_demo_js(
    k: f64,
    delta_a: f64,
    beta: f64,
    beta_prime: f64,
    n_traj: usize,
    t_end: f64,
    n_steps: usize,
    snapshots: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    langevin_demo(k, delta_a, beta, beta_prime, n_traj, t_end, n_steps, snapshots, seed as u64)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = gaussianWp)]
pub fn gaussian_wp_js(m1: f64, s1: f64, m2: f64, s2: f64, p: f64, n: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    gaussian_wp(m1, s1, m2, s2, p, n, seed as u64).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_rows() {
        let rows = envelope_table(1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 4).unwrap();
        assert_eq!(rows.len(), 15);
        assert_eq!(&rows[..3], &[0.0, 0.0, 0.0]);
        let last = &rows[12..];
        assert!((last[1] - 1.5 / 3.5 * (3.5f64.exp() - 1.0)).abs() < 1e-12);
        assert!((last[2] - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!(envelope_table(1.0, 0.0, 0.0, 1.0, 1.0, 2.0, 1.0, 1.0, 4).is_err());
    }

    #[test]
    fn langevin_rows_track_the_oracle() {
        let rows = langevin_demo(1.0, 1.0, 1.0, 1.0, 64, 2.0, 2000, 4, 1).unwrap();
        assert_eq!(rows.len(), 25);
        for r in rows.chunks(5) {
            assert!((r[1] - r[3]).abs() < 10.0 * 1e-3, "{r:?}");
            assert!(r[3] <= r[4] + 1e-15);
        }
    }

    #[test]
    fn gaussian_wp_is_close() {
        let v = gaussian_wp(0.0, 1.0, 1.0, 2.0, 2.0, 4000, 9).unwrap();
        assert!((v[0] - v[1]).abs() < 0.1, "{v:?}");
    }
}
