use std::sync::Arc;

use fbm_mkv::fbm::{DiffusionNormalization, HurstParameter};
use fbm_mkv::fokker_planck::{
    fp_step, solve_fp, DiffusionMode, FPCoefficients, FPState, FpConfig, PreStartHistory,
};
use fbm_mkv::measure::{gaussian_density, l1_distance, Measure, SpatialGrid};
use fbm_mkv::particle::{geometric_marginal_density, ModelSpec};

/// L1 error after evolving `N(0, var0)` to time 1 under constant drift `c`
/// and diffusion `d`.
fn constant_coefficient_error(cells: usize, steps: usize, c: f64, d: f64) -> f64 {
    let grid = SpatialGrid::new(10.0, cells).unwrap();
    let var0 = 0.5;
    let mut s = FPState::new(0.0, gaussian_density(grid, 0.0, var0).unwrap());
    let coeffs = FPCoefficients::constant(c, d);
    let dt = 1.0 / steps as f64;
    for _ in 0..steps {
        s = fp_step(&s, &coeffs, dt).unwrap();
    }
    let exact = gaussian_density(grid, c, var0 + 2.0 * d).unwrap();
    l1_distance(&s.density, &exact).unwrap()
}

#[test]
fn heat_kernel_on_the_default_grid() {
    let e = constant_coefficient_error(400, 100, 0.0, 0.2);
    assert!(e < 1e-3, "{e}");
}

#[test]
fn pure_diffusion_converges_at_second_order() {
    let errs: Vec<f64> = [(50, 10), (100, 20), (200, 40)]
        .iter()
        .map(|&(cells, steps)| constant_coefficient_error(cells, steps, 0.0, 0.2))
        .collect();
    for w in errs.windows(2) {
        assert!(w[0] / w[1] >= 3.5, "{errs:?}");
    }
}

#[test]
fn advection_diffusion_converges_at_first_order() {
    let errs: Vec<f64> = [(100, 20), (200, 40), (400, 80)]
        .iter()
        .map(|&(cells, steps)| constant_coefficient_error(cells, steps, 0.8, 0.1))
        .collect();
    for w in errs.windows(2) {
        assert!(w[0] / w[1] >= 1.8, "{errs:?}");
    }
}

#[test]
fn fbm_law_solve_matches_closed_form() {
    let hp = HurstParameter::new(0.75).unwrap();
    let grid = SpatialGrid::new(8.0, 400).unwrap();
    let t0 = 0.05;
    let init = gaussian_density(grid, 0.0, hp.variance(t0)).unwrap();
    let mut cfg = FpConfig::new(t0, 1.0, 256);
    cfg.diffusion = DiffusionMode::Explicit(Arc::new(move |t| hp.marginal_diffusion(t)));
    let sol = solve_fp(&ModelSpec::pure_fbm(), &init, &hp, &cfg).unwrap();
    let exact = gaussian_density(grid, 0.0, hp.variance(1.0)).unwrap();
    let last = sol.last();
    assert!(l1_distance(&last.density, &exact).unwrap() < 1e-2);
    assert!(sol.max_mass_drift() < 1e-10);
    assert!((last.density.variance() / hp.variance(1.0) - 1.0).abs() < 0.02);

    // the model route with the consistent normalization gives the same profile
    let mut from_model = FpConfig::new(t0, 1.0, 256);
    from_model.diffusion = DiffusionMode::FromModel(DiffusionNormalization::CovarianceConsistent);
    let sol2 = solve_fp(&ModelSpec::pure_fbm(), &init, &hp, &from_model).unwrap();
    for (a, b) in sol.profile.iter().zip(&sol2.profile) {
        assert!(
            (a.2 - b.2).abs() < 1e-9 * a.2.max(1e-12),
            "t={}: {} vs {}",
            a.0,
            a.2,
            b.2
        );
    }
}

#[test]
fn geometric_solve_is_self_consistent() {
    let hp = HurstParameter::new(0.75).unwrap();
    let (a, b, z) = (0.5, 0.3, 1.0);
    let grid = SpatialGrid::new(4.0, 2000).unwrap();
    let t0 = 0.05;
    let init = geometric_marginal_density(a, b, z, t0, &hp, grid).unwrap();
    let mut cfg = FpConfig::new(t0, 1.0, 256);
    cfg.history = PreStartHistory::Mean(Arc::new(move |s| z * (a * s).exp()));
    let sol = solve_fp(&ModelSpec::geometric(a, b, z), &init, &hp, &cfg).unwrap();
    assert!(sol.profile_change < 1e-8);
    // β(t) = β₀ · mean of the density at t, on every solution time
    for ((t, beta, _), st) in sol.profile.iter().zip(&sol.states) {
        assert_eq!(*t, st.t);
        assert!((beta / b - st.density.mean()).abs() < 1e-8, "t={t}");
    }
    let m = sol.last().density.mean();
    assert!((m / a.exp() - 1.0).abs() < 1e-2, "{m}");
    assert!(sol.min_before_clip() >= -1e-9);
}
