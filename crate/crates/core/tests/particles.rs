use fbm_mkv::fbm::{sample_fbm, DiffusionNormalization, HurstParameter, TimeGrid};
use fbm_mkv::particle::{
    fourier_generator_check, geometric_exact_ensemble, sample_moments, simulate_mkv,
    simulate_mkv_bounded, ModelSpec,
};
use fbm_mkv::Error;

fn hp(h: f64) -> HurstParameter {
    HurstParameter::new(h).unwrap()
}

#[test]
fn pure_fbm_particles_are_the_sampled_paths() {
    let p = hp(0.7);
    let grid = TimeGrid::uniform(1.0, 32).unwrap();
    let traj = simulate_mkv(&ModelSpec::pure_fbm(), &grid, 50, &p, 4).unwrap();
    let paths = sample_fbm(&grid, &p, 50, 4).unwrap();
    for i in 0..50 {
        let x = traj.particle_path(i);
        for (a, b) in x.iter().zip(paths.path(i)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn geometric_mean_follows_the_exponential() {
    let p = hp(0.75);
    let grid = TimeGrid::uniform(1.0, 256).unwrap();
    let n = 10_000;
    let traj = simulate_mkv(&ModelSpec::geometric(0.5, 0.3, 1.0), &grid, n, &p, 17).unwrap();
    for row in traj.summary().iter().step_by(64) {
        let target = (0.5 * row.time).exp();
        assert!(
            (row.mean - target).abs() <= 3.0 * row.stderr.max(1e-12) + 1e-3 * target,
            "t={}: {} vs {target}",
            row.time,
            row.mean
        );
    }
}

#[test]
fn euler_error_is_first_order_without_noise() {
    // β₀ = 0 leaves the mean ODE x' = α₀ x, integrated by explicit Euler
    let p = hp(0.75);
    let err = |steps: usize| {
        let grid = TimeGrid::uniform(1.0, steps).unwrap();
        let traj = simulate_mkv(&ModelSpec::geometric(0.8, 0.0, 1.0), &grid, 2, &p, 1).unwrap();
        (traj.states_at(steps)[0] - 0.8f64.exp()).abs()
    };
    let (e1, e2, e3) = (err(32), err(64), err(128));
    for r in [e1 / e2, e2 / e3] {
        assert!((1.9..2.1).contains(&r), "{e1} {e2} {e3}");
    }
}

#[test]
fn particle_system_tracks_the_exact_solution_pathwise() {
    // same seed, same fBm paths: the only difference is the empirical mean
    // in place of e^{α₀t} and the Euler discretization
    let p = hp(0.75);
    let grid = TimeGrid::uniform(1.0, 256).unwrap();
    let n = 4000;
    let traj = simulate_mkv(&ModelSpec::geometric(0.5, 0.3, 1.0), &grid, n, &p, 8).unwrap();
    let exact =
        geometric_exact_ensemble(0.5, 0.3, 1.0, &sample_fbm(&grid, &p, n, 8).unwrap()).unwrap();
    let diffs: Vec<f64> = traj
        .states_at(256)
        .iter()
        .zip(exact.states_at(256))
        .map(|(a, b)| (a - b).abs())
        .collect();
    let (mean_diff, _) = sample_moments(&diffs);
    assert!(mean_diff < 0.01, "{mean_diff}");
}

#[test]
fn zero_frequency_residual_vanishes() {
    let p = hp(0.75);
    let grid = TimeGrid::uniform(1.0, 32).unwrap();
    for model in [ModelSpec::pure_fbm(), ModelSpec::geometric(0.5, 0.3, 1.0)] {
        let traj = simulate_mkv(&model, &grid, 500, &p, 2).unwrap();
        let rows = fourier_generator_check(
            &traj,
            &model,
            &p,
            &[0.0, 1.0],
            DiffusionNormalization::CovarianceConsistent,
        )
        .unwrap();
        assert_eq!(rows.len(), 31 * 2);
        assert!(rows
            .iter()
            .filter(|r| r.y == 0.0)
            .all(|r| r.residual < 1e-12));
        assert!(rows.iter().all(|r| r.residual.is_finite()));
    }
}

#[test]
fn runaway_drift_is_reported() {
    let p = hp(0.75);
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let model = ModelSpec::new("runaway", |_, x, _| 1e3 * x * x.abs(), |_, _| 1.0, |_| 1.0);
    let err = simulate_mkv_bounded(&model, &grid, 10, &p, 3, 1e6).unwrap_err();
    assert!(
        matches!(err, Error::Diverged { bound, .. } if bound == 1e6),
        "{err:?}"
    );
}
