//! Finite-volume solver for `∂_t m = -∂_x[α(t, x, m_t) m] + d(t) ∂_x² m` on
//! `[-L, L]` with zero-flux boundaries.
//!
//! Each step is split into explicit first-order upwind transport followed by
//! a Crank-Nicolson diffusion solve with `d` at the step midpoint. Both parts
//! are conservative with respect to the trapezoidal weights of the grid, so
//! the discrete mass is preserved up to rounding.
//!
//! The diffusion profile `d(t) = c β(t) M²(β χ_[0,t])(t)` depends on the
//! volatility over the whole past. Since `β` may depend on the law, it is
//! found by a fixed-point sweep over complete forward solves.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use log::debug;

use crate::error::{Error, Result};
use crate::fbm::{
    m_squared_at_end, m_squared_direct, m_squared_profile, DiffusionNormalization, HurstParameter,
    Tabulated,
};
use crate::measure::{DensityField, EmpiricalMeasure, Measure};
use crate::particle::{DriftFn, Law, ModelSpec};

/// Most negative value tolerated silently before clipping.
pub const NEGATIVITY_FLOOR: f64 = -1e-12;

/// Largest Courant number accepted by one explicit transport step.
pub const MAX_COURANT: f64 = 1.0;

pub type DiffusionProfile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Coefficients of one transport-diffusion step.
#[derive(Clone)]
pub struct FPCoefficients {
    pub drift: DriftFn,
    pub diffusion: DiffusionProfile,
}

impl fmt::Debug for FPCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FPCoefficients").finish_non_exhaustive()
    }
}

impl FPCoefficients {
    pub fn new(
        drift: impl Fn(f64, f64, &Law) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
        }
    }

    pub fn constant(drift: f64, diffusion: f64) -> Self {
        Self::new(move |_, _, _| drift, move |_| diffusion)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FPState {
    pub t: f64,
    pub density: DensityField,
    /// Smallest nodal value produced by the step before negative values
    /// were clipped.
    pub min_before_clip: f64,
}

impl FPState {
    pub fn new(t: f64, density: DensityField) -> Self {
        let min_before_clip = density
            .values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        Self {
            t,
            density,
            min_before_clip,
        }
    }

    pub fn mass(&self) -> f64 {
        self.density.mass()
    }
}

/// `(mean, variance)` of the state by grid quadrature.
pub fn fp_moments(state: &FPState) -> (f64, f64) {
    (state.density.mean(), state.density.variance())
}

/// `c β(t) M²(β χ_[0,t])(t)` for a tabulated `β` covering `[0, t]`, with
/// `c = 1/2` ([`DiffusionNormalization::AsPrinted`]).
pub fn diffusion_coefficient(beta: &Tabulated, t: f64, hp: &HurstParameter) -> Result<f64> {
    diffusion_coefficient_with(beta, t, hp, DiffusionNormalization::AsPrinted)
}

pub fn diffusion_coefficient_with(
    beta: &Tabulated,
    t: f64,
    hp: &HurstParameter,
    normalization: DiffusionNormalization,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    check_profile_support(beta, t)?;
    let m2 = m_squared_at_end(|s| beta.eval(s), t, hp)?.value;
    Ok(normalization.factor(hp) * beta.eval(t) * m2)
}

/// [`diffusion_coefficient_with`] through the direct `(y, z)` quadrature.
pub fn diffusion_coefficient_direct(
    beta: &Tabulated,
    t: f64,
    hp: &HurstParameter,
    normalization: DiffusionNormalization,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    check_profile_support(beta, t)?;
    let m2 = m_squared_direct(|s| beta.eval(s), t, hp)?;
    Ok(normalization.factor(hp) * beta.eval(t) * m2)
}

fn check_profile_support(beta: &Tabulated, t: f64) -> Result<()> {
    let (a, b) = beta.support();
    if a > 0.0 || b < t {
        return Err(Error::InvalidArgument(format!(
            "volatility profile on [{a}, {b}] does not cover [0, {t}]"
        )));
    }
    Ok(())
}

/// Courant number of a transport step: the largest fraction of a control
/// volume emptied by outflow, together with the largest face speed.
fn courant(faces: &[f64], dx: f64, dt: f64) -> (f64, f64) {
    let n = faces.len() + 1;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let w = if j == 0 || j == n - 1 { 0.5 * dx } else { dx };
        let right = if j < n - 1 { faces[j].max(0.0) } else { 0.0 };
        let left = if j > 0 { (-faces[j - 1]).max(0.0) } else { 0.0 };
        worst = worst.max(dt * (right + left) / w);
    }
    let vmax = faces.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    (worst, vmax)
}

fn face_velocities(density: &DensityField, coeffs: &FPCoefficients, t: f64) -> Vec<f64> {
    let grid = density.grid();
    let law = Law::new(density);
    let dx = grid.dx();
    (0..grid.cells())
        .map(|j| (coeffs.drift)(t, grid.x(j) + 0.5 * dx, &law))
        .collect()
}

/// Solves a tridiagonal system in place (`sub[0]` and `sup[n-1]` unused).
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut pivot = diag[0];
    if !(pivot > 0.0) {
        return Err(Error::Tridiagonal { row: 0, pivot });
    }
    c[0] = sup[0] / pivot;
    rhs[0] /= pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i] * c[i - 1];
        if !(pivot > 0.0) {
            return Err(Error::Tridiagonal { row: i, pivot });
        }
        c[i] = if i + 1 < n { sup[i] / pivot } else { 0.0 };
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

/// One step of length `dt` from `state`.
///
/// Fails with [`Error::Cfl`] if the explicit transport would empty more than
/// a full control volume; [`solve_fp`] sub-steps instead.
pub fn fp_step(state: &FPState, coeffs: &FPCoefficients, dt: f64) -> Result<FPState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let grid = *state.density.grid();
    let n = grid.n_nodes();
    let dx = grid.dx();
    let w: Vec<f64> = (0..n).map(|j| grid.weight(j)).collect();

    let faces = face_velocities(&state.density, coeffs, state.t);
    let (cfl, vmax) = courant(&faces, dx, dt);
    if cfl > MAX_COURANT {
        return Err(Error::Cfl {
            drift: vmax,
            courant: cfl,
        });
    }
    let m = state.density.values();
    let mut flux = vec![0.0; n + 1];
    for (j, &v) in faces.iter().enumerate() {
        flux[j + 1] = if v >= 0.0 { v * m[j] } else { v * m[j + 1] };
    }
    let mut rhs: Vec<f64> = (0..n)
        .map(|j| m[j] - dt / w[j] * (flux[j + 1] - flux[j]))
        .collect();

    let d = (coeffs.diffusion)(state.t + 0.5 * dt);
    if !(d >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "diffusion coefficient {d} at t = {} is negative",
            state.t + 0.5 * dt
        )));
    }
    if d > 0.0 {
        // (D m)_j = d/(w_j dx) [(m_{j+1} - m_j) - (m_j - m_{j-1})], no flux at the ends
        let r = 0.5 * dt * d / dx;
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let star = rhs.clone();
        for j in 0..n {
            let k = r / w[j];
            let left = if j > 0 { k } else { 0.0 };
            let right = if j + 1 < n { k } else { 0.0 };
            sub[j] = -left;
            sup[j] = -right;
            diag[j] = 1.0 + left + right;
            let mut explicit = (1.0 - left - right) * star[j];
            if j > 0 {
                explicit += left * star[j - 1];
            }
            if j + 1 < n {
                explicit += right * star[j + 1];
            }
            rhs[j] = explicit;
        }
        thomas(&sub, &diag, &sup, &mut rhs)?;
    }

    let min_before_clip = rhs.iter().copied().fold(f64::INFINITY, f64::min);
    if min_before_clip < 0.0 {
        let before = grid.integrate(&rhs);
        rhs.iter_mut().for_each(|v| *v = v.max(0.0));
        let after = grid.integrate(&rhs);
        if after > 0.0 {
            rhs.iter_mut().for_each(|v| *v *= before / after);
        }
        if min_before_clip < NEGATIVITY_FLOOR {
            debug!(
                "clipped density minimum {min_before_clip:e} at t = {}",
                state.t + dt
            );
        }
    }
    Ok(FPState {
        t: state.t + dt,
        density: DensityField::from_raw(grid, rhs),
        min_before_clip,
    })
}

/// Volatility history before the solver start time, needed because
/// `M²(βχ_[0,t])` integrates `β` from time 0.
#[derive(Clone, Default)]
pub enum PreStartHistory {
    /// `β(s) = β(t₀, m_{t₀})` for `s < t₀`.
    #[default]
    HoldInitial,
    /// The law at `s < t₀` is represented by a point mass at the given mean.
    Mean(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for PreStartHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::HoldInitial => write!(f, "HoldInitial"),
            Self::Mean(_) => write!(f, "Mean(..)"),
        }
    }
}

#[derive(Clone)]
pub enum DiffusionMode {
    /// `d(t) = c β(t) M²(β χ_[0,t])(t)` from the model's volatility.
    FromModel(DiffusionNormalization),
    /// A prescribed profile `t ↦ d(t)`; the volatility is ignored.
    Explicit(DiffusionProfile),
}

impl fmt::Debug for DiffusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FromModel(n) => write!(f, "FromModel({n:?})"),
            Self::Explicit(_) => write!(f, "Explicit(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FpConfig {
    /// Time of the initial density.
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
    pub diffusion: DiffusionMode,
    pub history: PreStartHistory,
    /// Sup-norm change of the volatility profile that ends the sweep.
    pub fixed_point_tol: f64,
    pub max_sweeps: usize,
}

impl FpConfig {
    pub fn new(t0: f64, t_end: f64, steps: usize) -> Self {
        Self {
            t0,
            t_end,
            steps,
            diffusion: DiffusionMode::FromModel(DiffusionNormalization::default()),
            history: PreStartHistory::HoldInitial,
            fixed_point_tol: 1e-8,
            max_sweeps: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FpSolution {
    /// States at `t₀ + k (T - t₀)/steps`, `k = 0..=steps`.
    pub states: Vec<FPState>,
    pub sweeps: usize,
    /// Sup-norm change of the volatility profile in the final sweep.
    pub profile_change: f64,
    /// Largest number of transport sub-steps used in one step.
    pub max_substeps: usize,
    /// `(t, β(t), d(t))` at the solution times, as used by the final sweep.
    pub profile: Vec<(f64, f64, f64)>,
}

impl FpSolution {
    pub fn last(&self) -> &FPState {
        self.states
            .last()
            .expect("solution has at least the initial state")
    }

    pub fn min_before_clip(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s.min_before_clip)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.states[0].mass();
        self.states
            .iter()
            .map(|s| (s.mass() - m0).abs())
            .fold(0.0, f64::max)
    }
}

/// Knots of the volatility profile: `pre` equal intervals on `[0, t₀]`
/// followed by the solution times.
fn profile_knots(cfg: &FpConfig, times: &[f64]) -> Vec<f64> {
    let dt = (cfg.t_end - cfg.t0) / cfg.steps as f64;
    let mut knots = Vec::new();
    if cfg.t0 > 0.0 {
        let pre = ((cfg.t0 / dt).ceil() as usize).max(8);
        knots.extend((0..pre).map(|k| cfg.t0 * k as f64 / pre as f64));
    }
    knots.extend_from_slice(times);
    knots
}

/// Marches `model` from `initial` at `t₀` to `T`.
///
/// With [`DiffusionMode::FromModel`] the volatility profile is iterated:
/// solve forward with the current profile, re-evaluate `β(t, m_t)` on the
/// solution, and repeat until the profile changes by less than
/// `fixed_point_tol` (at most `max_sweeps` solves).
pub fn solve_fp(
    model: &ModelSpec,
    initial: &DensityField,
    hp: &HurstParameter,
    cfg: &FpConfig,
) -> Result<FpSolution> {
    if !(cfg.t0 >= 0.0 && cfg.t_end > cfg.t0) || cfg.steps == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= t0 < t_end and steps >= 1 (got {}, {}, {})",
            cfg.t0, cfg.t_end, cfg.steps
        )));
    }
    if (initial.mass() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidMeasure(format!(
            "initial mass {}",
            initial.mass()
        )));
    }
    let dt = (cfg.t_end - cfg.t0) / cfg.steps as f64;
    let times: Vec<f64> = (0..=cfg.steps)
        .map(|k| {
            if k == cfg.steps {
                cfg.t_end
            } else {
                cfg.t0 + k as f64 * dt
            }
        })
        .collect();

    let normalization = match &cfg.diffusion {
        DiffusionMode::Explicit(d) => {
            let coeffs = FPCoefficients {
                drift: model.drift.clone(),
                diffusion: d.clone(),
            };
            let (states, max_substeps) = march(initial, &coeffs, &times)?;
            let profile = times.iter().map(|&t| (t, f64::NAN, d(t))).collect();
            return Ok(FpSolution {
                states,
                sweeps: 1,
                profile_change: 0.0,
                max_substeps,
                profile,
            });
        }
        DiffusionMode::FromModel(n) => *n,
    };

    let knots = profile_knots(cfg, &times);
    let pre = knots.len() - times.len();
    let beta_of = |t: f64, law: &Law| model.volatility(t, law);
    let initial_beta = beta_of(cfg.t0, &Law::new(initial));
    let history_beta = |s: f64| match &cfg.history {
        PreStartHistory::HoldInitial => initial_beta,
        PreStartHistory::Mean(mean) => {
            let point = EmpiricalMeasure::dirac(mean(s));
            beta_of(s, &Law::new(&point))
        }
    };
    // first guess: the history rule extended over the whole horizon
    let mut beta: Vec<f64> = knots.iter().map(|&s| history_beta(s)).collect();
    if matches!(cfg.history, PreStartHistory::HoldInitial) {
        beta.iter_mut().for_each(|b| *b = initial_beta);
    }
    let factor = normalization.factor(hp);

    let mut change = f64::INFINITY;
    for sweep in 1..=cfg.max_sweeps {
        let tab = Arc::new(Tabulated::new(knots.clone(), beta.clone())?);
        let m2_knots = Arc::new(knots.clone());
        let m2_beta = Arc::new(beta.clone());
        let hp_c = *hp;
        let diffusion = move |t: f64| -> f64 {
            let m2 = m_squared_profile(&m2_knots, &m2_beta, &[t], &hp_c)
                .map(|v| v[0])
                .unwrap_or(f64::NAN);
            factor * tab.eval(t) * m2
        };
        let coeffs = FPCoefficients {
            drift: model.drift.clone(),
            diffusion: Arc::new(diffusion),
        };
        let (states, max_substeps) = march(initial, &coeffs, &times)?;
        let new_tail: Vec<f64> = states
            .iter()
            .map(|s| beta_of(s.t, &Law::new(&s.density)))
            .collect();
        change = beta[pre..]
            .iter()
            .zip(&new_tail)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        debug!("fixed-point sweep {sweep}: profile change {change:e}");
        if change < cfg.fixed_point_tol {
            let profile = times
                .iter()
                .map(|&t| (t, tabulated_at(&knots, &beta, t), (coeffs.diffusion)(t)))
                .collect();
            return Ok(FpSolution {
                states,
                sweeps: sweep,
                profile_change: change,
                max_substeps,
                profile,
            });
        }
        beta[pre..].copy_from_slice(&new_tail);
    }
    Err(Error::FixedPoint {
        sweeps: cfg.max_sweeps,
        change,
    })
}

fn tabulated_at(knots: &[f64], values: &[f64], t: f64) -> f64 {
    Tabulated::new(knots.to_vec(), values.to_vec())
        .map(|tab| tab.eval(t))
        .unwrap_or(f64::NAN)
}

/// Runs [`fp_step`] through `times`, splitting a step into equal sub-steps
/// whenever the transport Courant number would exceed [`MAX_COURANT`].
fn march(
    initial: &DensityField,
    coeffs: &FPCoefficients,
    times: &[f64],
) -> Result<(Vec<FPState>, usize)> {
    let mut states = Vec::with_capacity(times.len());
    states.push(FPState::new(times[0], initial.clone()));
    let mut max_substeps = 1;
    for k in 0..times.len() - 1 {
        let current = &states[k];
        let dt = times[k + 1] - times[k];
        let faces = face_velocities(&current.density, coeffs, current.t);
        let (cfl, _) = courant(&faces, current.density.grid().dx(), dt);
        let substeps = if cfl > MAX_COURANT {
            (cfl / (0.9 * MAX_COURANT)).ceil() as usize
        } else {
            1
        };
        let mut next = current.clone();
        let mut min_before_clip = f64::INFINITY;
        for _ in 0..substeps {
            next = step_with_retry(&next, coeffs, dt / substeps as f64)?;
            min_before_clip = min_before_clip.min(next.min_before_clip);
        }
        if substeps > 1 {
            debug!(
                "step at t = {:.6}: {substeps} transport sub-steps (Courant {cfl:.3})",
                current.t
            );
        }
        max_substeps = max_substeps.max(substeps);
        next.t = times[k + 1];
        next.min_before_clip = min_before_clip;
        states.push(next);
    }
    Ok((states, max_substeps))
}

/// The drift can grow within a step split from the initial Courant estimate;
/// halve the sub-step until it is accepted.
fn step_with_retry(state: &FPState, coeffs: &FPCoefficients, dt: f64) -> Result<FPState> {
    match fp_step(state, coeffs, dt) {
        Err(Error::Cfl { .. }) if dt > 1e-12 => {
            let half = step_with_retry(state, coeffs, 0.5 * dt)?;
            step_with_retry(&half, coeffs, 0.5 * dt)
        }
        other => other,
    }
}

pub fn write_solution_csv<W: Write>(states: &[FPState], mut w: W) -> io::Result<()> {
    writeln!(w, "t,x,density")?;
    for s in states {
        let g = s.density.grid();
        for (j, v) in s.density.values().iter().enumerate() {
            writeln!(w, "{},{},{}", s.t, g.x(j), v)?;
        }
    }
    Ok(())
}

pub fn write_moments_csv<W: Write>(states: &[FPState], mut w: W) -> io::Result<()> {
    writeln!(w, "t,mean,variance")?;
    for s in states {
        let (m, v) = fp_moments(s);
        writeln!(w, "{},{},{}", s.t, m, v)?;
    }
    Ok(())
}
