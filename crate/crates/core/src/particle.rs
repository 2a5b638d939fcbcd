//! Interacting-particle approximation of
//! `dX = α(t, X, μ_t) dt + β(t, μ_t) dB^H`, `μ_t = Law(X_t)`,
//! the exact solution of the mean-driven geometric example, and the
//! Fourier-side generator check.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use log::debug;
use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbm::{
    m_squared_profile, sample_fbm, wiener_variance, DiffusionNormalization, FbmPathSet,
    HurstParameter, Tabulated, TimeGrid,
};
use crate::measure::{gaussian_density, Complex, DensityField, Measure, SpatialGrid, UniformAtoms};
use crate::rng::{stream_rng, Stream};

/// Default bound on `|X|` beyond which a simulation is aborted.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// A law handed to model coefficients, with its mean computed once.
#[derive(Clone, Copy)]
pub struct Law<'a> {
    measure: &'a (dyn Measure + Sync),
    mean: f64,
}

impl<'a> Law<'a> {
    pub fn new(measure: &'a (dyn Measure + Sync)) -> Self {
        Self {
            mean: measure.mean(),
            measure,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn measure(&self) -> &'a (dyn Measure + Sync) {
        self.measure
    }
}

pub type DriftFn = Arc<dyn Fn(f64, f64, &Law) -> f64 + Send + Sync>;
pub type VolatilityFn = Arc<dyn Fn(f64, &Law) -> f64 + Send + Sync>;
pub type InitialSampler = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// Coefficients `α(t, x, μ)`, `β(t, μ)` and the initial law of a model.
#[derive(Clone)]
pub struct ModelSpec {
    pub drift: DriftFn,
    pub volatility: VolatilityFn,
    pub initial: InitialSampler,
    pub label: String,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn new(
        label: impl Into<String>,
        drift: impl Fn(f64, f64, &Law) -> f64 + Send + Sync + 'static,
        volatility: impl Fn(f64, &Law) -> f64 + Send + Sync + 'static,
        initial: impl Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            drift: Arc::new(drift),
            volatility: Arc::new(volatility),
            initial: Arc::new(initial),
            label: label.into(),
        }
    }

    /// `α = 0`, `β = 1`, `X_0 = 0`: the particles are fBm paths.
    pub fn pure_fbm() -> Self {
        Self::new("fbm-law", |_, _, _| 0.0, |_, _| 1.0, |_| 0.0)
    }

    /// `α = α₀ E[X_t]`, `β = β₀ E[X_t]`, `X_0 = z₀`.
    pub fn geometric(alpha0: f64, beta0: f64, z0: f64) -> Self {
        Self::new(
            "geometric",
            move |_, _, law| alpha0 * law.mean(),
            move |_, law| beta0 * law.mean(),
            move |_| z0,
        )
    }

    /// Constant coefficients that ignore the law.
    pub fn constant(drift: f64, volatility: f64, x0: f64) -> Self {
        Self::new(
            "constant",
            move |_, _, _| drift,
            move |_, _| volatility,
            move |_| x0,
        )
    }

    pub fn drift(&self, t: f64, x: f64, law: &Law) -> f64 {
        (self.drift)(t, x, law)
    }

    pub fn volatility(&self, t: f64, law: &Law) -> f64 {
        (self.volatility)(t, law)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub time: f64,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
}

/// Particle states on a time grid. States are stored time-major so the
/// empirical law at a grid time is a contiguous slice.
#[derive(Debug, Clone)]
pub struct EnsembleTrajectory {
    grid: TimeGrid,
    states: Vec<f64>,
    n_particles: usize,
    seed: u64,
    label: String,
}

impl EnsembleTrajectory {
    pub fn new(
        grid: TimeGrid,
        states: Vec<f64>,
        n_particles: usize,
        seed: u64,
        label: String,
    ) -> Result<Self> {
        if n_particles == 0 || states.len() != n_particles * grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} states for {} particles on {} grid points",
                states.len(),
                n_particles,
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            states,
            n_particles,
            seed,
            label,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// All particle states at grid index `k`.
    pub fn states_at(&self, k: usize) -> &[f64] {
        &self.states[k * self.n_particles..(k + 1) * self.n_particles]
    }

    pub fn particle_path(&self, i: usize) -> Vec<f64> {
        (0..self.grid.len()).map(|k| self.states_at(k)[i]).collect()
    }

    pub fn law_at(&self, k: usize) -> UniformAtoms<'_> {
        UniformAtoms(self.states_at(k))
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        self.grid
            .points()
            .iter()
            .enumerate()
            .map(|(k, &time)| {
                let (mean, variance) = sample_moments(self.states_at(k));
                SummaryRow {
                    time,
                    mean,
                    variance,
                    stderr: (variance / self.n_particles as f64).sqrt(),
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time,particle_id,state")?;
        for (k, t) in self.grid.points().iter().enumerate() {
            for (i, x) in self.states_at(k).iter().enumerate() {
                writeln!(w, "{t},{i},{x}")?;
            }
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time,mean,variance,stderr")?;
        for r in self.summary() {
            writeln!(w, "{},{},{},{}", r.time, r.mean, r.variance, r.stderr)?;
        }
        Ok(())
    }
}

/// Sample mean and unbiased sample variance.
pub fn sample_moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Euler scheme with the empirical law of all particles frozen over each
/// step and exact fBm increments per particle.
pub fn simulate_mkv(
    model: &ModelSpec,
    grid: &TimeGrid,
    n_particles: usize,
    hp: &HurstParameter,
    seed: u64,
) -> Result<EnsembleTrajectory> {
    simulate_mkv_bounded(model, grid, n_particles, hp, seed, DIVERGENCE_BOUND)
}

pub fn simulate_mkv_bounded(
    model: &ModelSpec,
    grid: &TimeGrid,
    n_particles: usize,
    hp: &HurstParameter,
    seed: u64,
    bound: f64,
) -> Result<EnsembleTrajectory> {
    let dt = grid
        .dt()
        .ok_or_else(|| Error::InvalidGrid("particle simulation needs a uniform grid".into()))?;
    if n_particles < 2 {
        return Err(Error::InvalidArgument("need at least two particles".into()));
    }
    let n = n_particles;
    let increments = time_major_increments(&sample_fbm(grid, hp, n, seed)?);
    let mut states = vec![0.0; n * grid.len()];
    states[..n].par_iter_mut().enumerate().for_each(|(i, x)| {
        let mut rng = stream_rng(seed, Stream::InitialStates, i as u64);
        *x = (model.initial)(&mut rng);
    });
    check_bound(&states[..n], 0.0, bound)?;

    for k in 0..grid.len() - 1 {
        let t = grid.points()[k];
        let (done, rest) = states.split_at_mut((k + 1) * n);
        let prev = &done[k * n..];
        let next = &mut rest[..n];
        let atoms = UniformAtoms(prev);
        let law = Law::new(&atoms);
        let vol = model.volatility(t, &law);
        let inc = &increments[k * n..(k + 1) * n];
        next.par_iter_mut().enumerate().for_each(|(i, x)| {
            *x = prev[i] + model.drift(t, prev[i], &law) * dt + vol * inc[i];
        });
        check_bound(next, grid.points()[k + 1], bound)?;
    }
    debug!(
        "simulated {} particles of '{}' over {} steps",
        n,
        model.label,
        grid.len() - 1
    );
    EnsembleTrajectory::new(grid.clone(), states, n, seed, model.label.clone())
}

/// `B_i(t_{k+1}) - B_i(t_k)` stored at `k * n_paths + i`, copied in tiles of
/// paths so both sides are read and written in cache-sized runs.
fn time_major_increments(paths: &FbmPathSet) -> Vec<f64> {
    const TILE: usize = 64;
    let n = paths.n_paths();
    let steps = paths.n_points() - 1;
    let mut out = vec![0.0; n * steps];
    for start in (0..n).step_by(TILE) {
        let end = (start + TILE).min(n);
        for k in 0..steps {
            for i in start..end {
                let p = paths.path(i);
                out[k * n + i] = p[k + 1] - p[k];
            }
        }
    }
    out
}

fn check_bound(xs: &[f64], time: f64, bound: f64) -> Result<()> {
    match xs.iter().position(|x| !(x.abs() <= bound)) {
        Some(particle) => Err(Error::Diverged {
            particle,
            time,
            state: xs[particle],
            bound,
        }),
        None => Ok(()),
    }
}

/// Pathwise solution of `dX = α₀ m e^{α₀t} dt + β₀ m e^{α₀t} dB^H`,
/// `X_0 = z`, with `m = E[Z]`. The Wiener integral is evaluated by parts,
/// `f(t)B(t) - ∫_0^t f'(s)B(s) ds`, with the trapezoid rule on the grid.
pub fn geometric_exact_path(
    alpha0: f64,
    beta0: f64,
    z: f64,
    mean_z: f64,
    grid: &TimeGrid,
    fbm_path: &[f64],
) -> Result<Vec<f64>> {
    if fbm_path.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "path has {} points, grid has {}",
            fbm_path.len(),
            grid.len()
        )));
    }
    let times = grid.points();
    let mut out = Vec::with_capacity(times.len());
    let mut riemann = 0.0;
    for k in 0..times.len() {
        let t = times[k];
        if k > 0 {
            let s = times[k - 1];
            let g0 = alpha0 * (alpha0 * s).exp() * fbm_path[k - 1];
            let g1 = alpha0 * (alpha0 * t).exp() * fbm_path[k];
            riemann += 0.5 * (t - s) * (g0 + g1);
        }
        let e = (alpha0 * t).exp();
        let wiener = e * fbm_path[k] - riemann;
        out.push(z + mean_z * (e - 1.0) + beta0 * mean_z * wiener);
    }
    Ok(out)
}

/// [`geometric_exact_path`] for every path of `fbm` with deterministic `Z = z0`.
pub fn geometric_exact_ensemble(
    alpha0: f64,
    beta0: f64,
    z0: f64,
    fbm: &FbmPathSet,
) -> Result<EnsembleTrajectory> {
    let grid = fbm.grid();
    let n = fbm.n_paths();
    let mut states = vec![0.0; n * grid.len()];
    for (i, path) in fbm.paths().enumerate() {
        let x = geometric_exact_path(alpha0, beta0, z0, z0, grid, path)?;
        for (k, v) in x.into_iter().enumerate() {
            states[k * n + i] = v;
        }
    }
    EnsembleTrajectory::new(
        grid.clone(),
        states,
        n,
        fbm.seed(),
        "geometric-exact".into(),
    )
}

/// Knot intervals used to tabulate `e^{α₀ s}` for [`wiener_variance`].
const EXP_TABULATION: usize = 256;

/// Variance of `∫_0^t β₀ z₀ e^{α₀ s} dB^H(s)`.
pub fn geometric_variance(
    alpha0: f64,
    beta0: f64,
    z0: f64,
    t: f64,
    hp: &HurstParameter,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let f = Tabulated::from_fn(0.0, t, EXP_TABULATION, |s| (alpha0 * s).exp())?;
    Ok(beta0 * beta0 * z0 * z0 * wiener_variance(&f, t, hp)?)
}

/// Gaussian law of the geometric model at time `t` for deterministic
/// `Z = z₀`: mean `z₀ e^{α₀t}`, variance [`geometric_variance`].
pub fn geometric_marginal_density(
    alpha0: f64,
    beta0: f64,
    z0: f64,
    t: f64,
    hp: &HurstParameter,
    grid: SpatialGrid,
) -> Result<DensityField> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "t must be positive, got {t}"
        )));
    }
    if beta0 == 0.0 || z0 == 0.0 {
        return Err(Error::DegenerateSample(
            "the marginal is a point mass when β₀ z₀ = 0".into(),
        ));
    }
    let var = geometric_variance(alpha0, beta0, z0, t, hp)?;
    if !(var > 0.0) {
        return Err(Error::DegenerateSample(format!(
            "variance {var} underflowed"
        )));
    }
    gaussian_density(grid, z0 * (alpha0 * t).exp(), var)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierResidual {
    pub t: f64,
    pub y: f64,
    pub residual: f64,
}

/// Compares the time derivative of the empirical characteristic function
/// (central difference) with the generator
/// `L_t(y) = -iy F[α μ](y) - y² d(t) μ̂_t(y)`,
/// where `d(t) = c β(t) M²(βχ_[0,t])(t)` is built from the volatility
/// profile of the trajectory itself and `c` is set by `normalization`.
///
/// One row per interior grid time and frequency.
pub fn fourier_generator_check(
    traj: &EnsembleTrajectory,
    model: &ModelSpec,
    hp: &HurstParameter,
    ys: &[f64],
    normalization: DiffusionNormalization,
) -> Result<Vec<FourierResidual>> {
    let interior: Vec<usize> = (1..traj.grid().len().saturating_sub(1)).collect();
    generator_residuals(traj, model, hp, ys, normalization, &interior)
}

/// [`fourier_generator_check`] restricted to the interior grid indices `ks`.
fn generator_residuals(
    traj: &EnsembleTrajectory,
    model: &ModelSpec,
    hp: &HurstParameter,
    ys: &[f64],
    normalization: DiffusionNormalization,
    ks: &[usize],
) -> Result<Vec<FourierResidual>> {
    let grid = traj.grid();
    let dt = grid
        .dt()
        .ok_or_else(|| Error::InvalidGrid("generator check needs a uniform grid".into()))?;
    if grid.len() < 3 {
        return Err(Error::InvalidGrid(
            "generator check needs at least 3 time points".into(),
        ));
    }
    let times = grid.points();
    let beta: Vec<f64> = (0..times.len())
        .map(|k| {
            let atoms = traj.law_at(k);
            model.volatility(times[k], &Law::new(&atoms))
        })
        .collect();
    let m2 = m_squared_profile(times, &beta, times, hp)?;
    let c = normalization.factor(hp);

    let mut needed = vec![false; times.len()];
    for &k in ks {
        if k == 0 || k + 1 >= times.len() {
            return Err(Error::InvalidArgument(format!(
                "index {k} is not an interior grid index"
            )));
        }
        needed[k - 1..=k + 1].iter_mut().for_each(|b| *b = true);
    }
    // μ̂_k(y) and F[α μ_k](y) at the needed grid times, one sin/cos per atom
    let sums: Vec<Vec<(Complex, Complex)>> = (0..times.len())
        .map(|k| {
            if !needed[k] {
                return Vec::new();
            }
            let t = times[k];
            let atoms = traj.law_at(k);
            let law = Law::new(&atoms);
            let xs = traj.states_at(k);
            let n = xs.len() as f64;
            let drift: Vec<f64> = xs.iter().map(|&x| model.drift(t, x, &law)).collect();
            ys.iter()
                .map(|&y| {
                    if y == 0.0 {
                        return (
                            Complex::ONE,
                            Complex::new(drift.iter().sum::<f64>() / n, 0.0),
                        );
                    }
                    let (mut c, mut s, mut fc, mut fs) = (0.0, 0.0, 0.0, 0.0);
                    for (x, a) in xs.iter().zip(&drift) {
                        let (sn, cs) = (x * y).sin_cos();
                        c += cs;
                        s += sn;
                        fc += a * cs;
                        fs += a * sn;
                    }
                    (Complex::new(c / n, -s / n), Complex::new(fc / n, -fs / n))
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(ks.len() * ys.len());
    for &k in ks {
        let d = c * beta[k] * m2[k];
        for (yi, &y) in ys.iter().enumerate() {
            let fd = (sums[k + 1][yi].0 - sums[k - 1][yi].0).scale(0.5 / dt);
            let (mu, f) = sums[k][yi];
            // -iy (a + ib) = y b - i y a
            let transport = Complex::new(y * f.im, -y * f.re);
            let generator = transport - mu.scale(y * y * d);
            rows.push(FourierResidual {
                t: times[k],
                y,
                residual: (fd - generator).abs(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementLevel {
    pub n_particles: usize,
    pub steps: usize,
    /// Maximum residual over the compared times, per frequency.
    pub max_residual: Vec<(f64, f64)>,
}

impl RefinementLevel {
    /// Maximum over all frequencies except `y = 0`.
    pub fn max_nonzero(&self) -> f64 {
        self.max_residual
            .iter()
            .filter(|(y, _)| *y != 0.0)
            .map(|(_, r)| *r)
            .fold(0.0, f64::max)
    }
}

/// Runs [`fourier_generator_check`] for each `(n_particles, steps)` pair on
/// `[0, t_end]`. Step counts must be multiples of the first one; residual
/// maxima are taken over the interior times of the coarsest grid so the
/// levels are compared on the same set of times.
pub fn fourier_refinement_study(
    model: &ModelSpec,
    hp: &HurstParameter,
    ys: &[f64],
    levels: &[(usize, usize)],
    t_end: f64,
    seed: u64,
    normalization: DiffusionNormalization,
) -> Result<Vec<RefinementLevel>> {
    let Some(&(_, coarse)) = levels.first() else {
        return Ok(Vec::new());
    };
    if coarse < 2 || levels.iter().any(|&(_, s)| s % coarse != 0) {
        return Err(Error::InvalidArgument(
            "refinement step counts must be multiples of a coarse count >= 2".into(),
        ));
    }
    levels
        .iter()
        .map(|&(n, steps)| {
            let grid = TimeGrid::uniform(t_end, steps)?;
            let traj = simulate_mkv(model, &grid, n, hp, seed)?;
            let stride = steps / coarse;
            let ks: Vec<usize> = (1..coarse).map(|j| j * stride).collect();
            let rows = generator_residuals(&traj, model, hp, ys, normalization, &ks)?;
            let max_residual = ys
                .iter()
                .map(|&y| {
                    let m = rows
                        .iter()
                        .filter(|r| r.y == y)
                        .map(|r| r.residual)
                        .fold(0.0, f64::max);
                    (y, m)
                })
                .collect();
            debug!("refinement level N={n} steps={steps} done");
            Ok(RefinementLevel {
                n_particles: n,
                steps,
                max_residual,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::EmpiricalMeasure;

    fn hp(h: f64) -> HurstParameter {
        HurstParameter::new(h).unwrap()
    }

    #[test]
    fn law_caches_mean() {
        let m = EmpiricalMeasure::uniform(vec![1.0, 2.0, 3.0]).unwrap();
        let law = Law::new(&m);
        assert_eq!(law.mean(), 2.0);
        let g = ModelSpec::geometric(0.5, 0.3, 1.0);
        assert_eq!(g.drift(0.0, 10.0, &law), 1.0);
        assert!((g.volatility(0.0, &law) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn frozen_dynamics_keep_initial_states() {
        let model = ModelSpec::new(
            "frozen",
            |_, _, _| 0.0,
            |_, _| 0.0,
            |rng| (rng.next_u64() % 1000) as f64 / 100.0,
        );
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let traj = simulate_mkv(&model, &grid, 50, &hp(0.7), 3).unwrap();
        for k in 1..grid.len() {
            assert_eq!(traj.states_at(k), traj.states_at(0));
        }
    }

    #[test]
    fn pure_fbm_reproduces_noise_paths() {
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        let p = hp(0.75);
        let traj = simulate_mkv(&ModelSpec::pure_fbm(), &grid, 20, &p, 11).unwrap();
        let noise = sample_fbm(&grid, &p, 20, 11).unwrap();
        for i in 0..20 {
            let path = traj.particle_path(i);
            for (a, b) in path.iter().zip(noise.path(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simulation_rejects_bad_input_and_divergence() {
        let p = hp(0.75);
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        assert!(simulate_mkv(&ModelSpec::pure_fbm(), &grid, 1, &p, 0).is_err());
        let uneven = TimeGrid::new(vec![0.0, 0.1, 0.5]).unwrap();
        assert!(simulate_mkv(&ModelSpec::pure_fbm(), &uneven, 5, &p, 0).is_err());
        let blowup = ModelSpec::constant(1e3, 0.0, 0.0);
        assert!(matches!(
            simulate_mkv_bounded(&blowup, &grid, 4, &p, 0, 100.0),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn exact_path_special_cases() {
        let grid = TimeGrid::uniform(1.0, 32).unwrap();
        let p = hp(0.8);
        let fbm = sample_fbm(&grid, &p, 1, 5).unwrap();
        let b = fbm.path(0);
        let no_noise = geometric_exact_path(0.5, 0.0, 1.3, 1.0, &grid, b).unwrap();
        for (x, t) in no_noise.iter().zip(grid.points()) {
            assert!((x - (1.3 + (0.5 * t).exp() - 1.0)).abs() < 1e-14);
        }
        let no_drift = geometric_exact_path(0.0, 0.3, 1.0, 2.0, &grid, b).unwrap();
        for (x, bt) in no_drift.iter().zip(b) {
            assert!((x - (1.0 + 0.6 * bt)).abs() < 1e-14);
        }
    }

    #[test]
    fn marginal_density_mean_and_degenerate_cases() {
        let p = hp(0.75);
        let grid = SpatialGrid::new(4.0, 800).unwrap();
        let d = geometric_marginal_density(0.5, 0.3, 1.0, 1.0, &p, grid).unwrap();
        assert!((d.mean() - 0.5f64.exp()).abs() < 1e-8);
        assert!((d.variance() - 0.0455774739305758).abs() < 1e-6);
        assert!(geometric_marginal_density(0.5, 0.0, 1.0, 1.0, &p, grid).is_err());
        assert!(geometric_marginal_density(0.5, 0.3, 1.0, 0.0, &p, grid).is_err());
        let v_small = geometric_variance(0.5, 0.3, 1.0, 1e-3, &p).unwrap();
        assert!(v_small < 1e-5);
    }

    #[test]
    fn generator_residual_vanishes_at_zero_frequency() {
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        let p = hp(0.75);
        let model = ModelSpec::geometric(0.5, 0.3, 1.0);
        let traj = simulate_mkv(&model, &grid, 200, &p, 1).unwrap();
        let rows = fourier_generator_check(
            &traj,
            &model,
            &p,
            &[0.0, 1.0],
            DiffusionNormalization::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 2 * 15);
        for r in rows.iter().filter(|r| r.y == 0.0) {
            assert_eq!(r.residual, 0.0);
        }
        assert!(rows.iter().all(|r| r.residual.is_finite()));
    }

    #[test]
    fn csv_layouts() {
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let traj =
            EnsembleTrajectory::new(grid, vec![0.0, 1.0, 0.5, 1.5, 1.0, 3.0], 2, 0, "t".into())
                .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,particle_id,state\n0,0,0\n0,1,1\n0.5,0,0.5\n"));
        let mut buf = Vec::new();
        traj.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,mean,variance,stderr\n0,0.5,0.5,0.5\n"));
    }
}
