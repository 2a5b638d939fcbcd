//! Fractional Brownian motion and the operator `M`.
//!
//! Sampling is exact. On uniform grids the increments are drawn by circulant
//! embedding of their Toeplitz covariance (one FFT per path); on other grids
//! the covariance matrix is factorized once and every path is `L z` for an
//! independent standard normal vector `z`.
//!
//! The operator `M f(x) = C_H ∫ f(y + x) |y|^{H-3/2} dy` and its square are
//! evaluated by quadrature with the `|y|^{H-3/2}` singularity removed by a
//! change of variables. With the constant `C_H` as defined here,
//! `‖M χ_[0,1]‖² = -2Γ(-2H)cos(πH)/π`, which is not `2 C_H`; quantities that
//! have to agree with the sampled process (Wiener-integral variances,
//! diffusion coefficients) are therefore scaled by
//! [`HurstParameter::isometry_factor`].

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use statrs::function::gamma::gamma;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{cached_legendre, gauss_legendre_doubling, tanh_sinh, Estimate};
use crate::rng::{stream_rng, Stream};

/// Relative tolerance of the singular quadratures.
pub const QUAD_REL_TOL: f64 = 1e-8;

/// `C_H = [2 Γ(H - 1/2) cos(π/2 (H - 1/2))]^{-1}` for `H ∈ (1/2, 1)`.
pub fn c_h(h: f64) -> Result<f64> {
    if !(h > 0.5 && h < 1.0) {
        return Err(Error::HurstDomain(h));
    }
    Ok(1.0 / (2.0 * gamma(h - 0.5) * (0.5 * PI * (h - 0.5)).cos()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstParameter {
    h: f64,
    c_h: f64,
}

impl HurstParameter {
    pub fn new(h: f64) -> Result<Self> {
        Ok(Self { h, c_h: c_h(h)? })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn c_h(&self) -> f64 {
        self.c_h
    }

    /// Exponent of the operator-M kernel, `H - 3/2`.
    pub fn kernel_exponent(&self) -> f64 {
        self.h - 1.5
    }

    /// `E[B(t)^2] = 2 C_H t^{2H}`.
    pub fn variance(&self, t: f64) -> f64 {
        2.0 * self.c_h * t.abs().powf(2.0 * self.h)
    }

    /// `‖M χ_[0,1]‖²_{L²} = -2 Γ(-2H) cos(πH) / π` (closed form of the
    /// Fourier-side integral `∫ |y|^{1-2H} |χ̂(y)|² dy`).
    pub fn m_indicator_norm_sq(&self) -> f64 {
        -2.0 * gamma(-2.0 * self.h) * (PI * self.h).cos() / PI
    }

    /// Factor `κ²` such that `κ² ‖M(f χ_[0,t])‖²` is the variance of the
    /// Wiener integral `∫_0^t f dB` for the process with covariance
    /// [`fbm_covariance`].
    pub fn isometry_factor(&self) -> f64 {
        2.0 * self.c_h / self.m_indicator_norm_sq()
    }

    /// Diffusion profile `d(t) = 2H C_H t^{2H-1}` of the marginal law of
    /// `B(t)`, i.e. half the time derivative of [`Self::variance`].
    pub fn marginal_diffusion(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        2.0 * self.h * self.c_h * t.powf(2.0 * self.h - 1.0)
    }

    /// `J(1) = ∫ (|1 - v²|/4)^{H-3/2} dv`, the inner integral of the rotated
    /// `M²` quadrature at `|u| = 1`.
    pub fn rotated_kernel_constant(&self) -> f64 {
        rotated_inner(1.0, self)
    }
}

/// How the operator-M kernel enters a diffusion coefficient
/// `d(t) = c β(t) M²(β χ_[0,t])(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiffusionNormalization {
    /// `c = 1/2`, the operator written as `½ β M²(βχ) ∂²`.
    AsPrinted,
    /// `c = κ²` ([`HurstParameter::isometry_factor`]), which makes
    /// `∫_0^t 2 d(s) ds` the variance of `∫_0^t β dB`. For `β ≡ 1` this is
    /// [`HurstParameter::marginal_diffusion`].
    #[default]
    CovarianceConsistent,
}

impl DiffusionNormalization {
    pub fn factor(self, hp: &HurstParameter) -> f64 {
        match self {
            Self::AsPrinted => 0.5,
            Self::CovarianceConsistent => hp.isometry_factor(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::AsPrinted => "as-printed",
            Self::CovarianceConsistent => "covariance-consistent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("need at least two points".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "first point must be 0, got {}",
                points[0]
            )));
        }
        if let Some(w) = points
            .windows(2)
            .find(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(Error::InvalidGrid(format!(
                "points must be finite and strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { points })
    }

    pub fn uniform(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || steps == 0 {
            return Err(Error::InvalidGrid(format!(
                "uniform grid needs t_end > 0 and steps >= 1 (got {t_end}, {steps})"
            )));
        }
        let dt = t_end / steps as f64;
        let mut points: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        points[steps] = t_end;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Step size if the grid is uniform.
    pub fn dt(&self) -> Option<f64> {
        let dt = self.t_end() / (self.points.len() - 1) as f64;
        let uniform = self
            .points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt);
        uniform.then_some(dt)
    }
}

/// `E[B(s) B(t)] = C_H (|t|^{2H} + |s|^{2H} - |t - s|^{2H})`.
pub fn fbm_covariance(s: f64, t: f64, hp: &HurstParameter) -> f64 {
    let two_h = 2.0 * hp.h;
    hp.c_h * (t.abs().powf(two_h) + s.abs().powf(two_h) - (t - s).abs().powf(two_h))
}

/// In-place lower Cholesky factorization of a row-major `n × n` symmetric
/// matrix. Only the lower triangle is read; the upper one is zeroed.
fn cholesky_lower(a: &mut [f64], n: usize) -> Result<()> {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(Error::NotPositiveDefinite {
                        index: i,
                        pivot: sum,
                    });
                }
                a[i * n + i] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
        for j in i + 1..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Lower Cholesky factor of the covariance on the grid points after `t = 0`.
/// A failing pivot is reported with its grid index.
fn covariance_factor(grid: &TimeGrid, hp: &HurstParameter) -> Result<Vec<f64>> {
    let times = &grid.points()[1..];
    let n = times.len();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            l[i * n + j] = fbm_covariance(times[i], times[j], hp);
        }
    }
    cholesky_lower(&mut l, n).map_err(|e| match e {
        Error::NotPositiveDefinite { index, pivot } => Error::NotPositiveDefinite {
            index: index + 1,
            pivot,
        },
        other => other,
    })?;
    Ok(l)
}

/// Discretely sampled fBm trajectories, one row per path.
#[derive(Debug, Clone)]
pub struct FbmPathSet {
    grid: TimeGrid,
    values: Vec<f64>,
    n_paths: usize,
    hp: HurstParameter,
    seed: u64,
}

impl FbmPathSet {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    pub fn hurst(&self) -> &HurstParameter {
        &self.hp
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.n_points();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_points())
    }

    /// Values of all paths at grid index `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.paths().map(|p| p[k]).collect()
    }
}

/// `sqrt(λ_k / 2n)` for the eigenvalues `λ_k` of the `2n`-circulant that
/// embeds the covariance of `n` increments of step `dt`. `None` when an
/// eigenvalue is clearly negative (the embedding is then not a covariance).
fn circulant_sqrt_eigenvalues(n: usize, dt: f64, hp: &HurstParameter) -> Option<Vec<f64>> {
    let two_h = 2.0 * hp.h;
    let scale = hp.c_h * dt.powf(two_h);
    let gamma = |k: f64| {
        scale * ((k + 1.0).powf(two_h) + (k - 1.0).abs().powf(two_h) - 2.0 * k.powf(two_h))
    };
    let m = 2 * n;
    let mut row: Vec<Complex64> = (0..m)
        .map(|j| Complex64::new(gamma(j.min(m - j) as f64), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    let floor = -1e-12 * gamma(0.0) * m as f64;
    if row.iter().any(|l| l.re < floor) {
        return None;
    }
    Some(
        row.iter()
            .map(|l| (l.re.max(0.0) / m as f64).sqrt())
            .collect(),
    )
}

enum Sampler {
    Circulant(Circulant),
    /// Row-major lower factor of the covariance after `t = 0`.
    Cholesky(Vec<f64>),
}

struct Circulant {
    sqrt_eig: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Circulant {
    /// Writes `B(t_1..t_n)` into `out` from `2 · 2n` standard normals of `rng`.
    fn fill<R: rand::Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let mut buf: Vec<Complex64> = self
            .sqrt_eig
            .iter()
            .map(|s| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut buf);
        let mut acc = 0.0;
        for (o, w) in out.iter_mut().zip(&buf) {
            acc += w.re;
            *o = acc;
        }
    }
}

/// Exact Gaussian sampling of `n_paths` fBm paths on `grid`.
///
/// Path `i` uses its own random stream, so it is the same whatever
/// `n_paths` is.
pub fn sample_fbm(
    grid: &TimeGrid,
    hp: &HurstParameter,
    n_paths: usize,
    seed: u64,
) -> Result<FbmPathSet> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    let n = grid.len() - 1;
    let circulant = grid.dt().and_then(|dt| {
        circulant_sqrt_eigenvalues(n, dt, hp).map(|sqrt_eig| Circulant {
            fft: FftPlanner::new().plan_fft_forward(2 * n),
            sqrt_eig,
        })
    });
    let sampler = match circulant {
        Some(c) => Sampler::Circulant(c),
        None => Sampler::Cholesky(covariance_factor(grid, hp)?),
    };
    let mut values = vec![0.0; n_paths * (n + 1)];
    values
        .par_chunks_mut(n + 1)
        .enumerate()
        .for_each(|(i, row)| {
            let mut rng = stream_rng(seed, Stream::FbmPaths, i as u64);
            row[0] = 0.0;
            match &sampler {
                Sampler::Circulant(c) => c.fill(&mut rng, &mut row[1..]),
                Sampler::Cholesky(l) => {
                    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                    for j in 0..n {
                        let lrow = &l[j * n..j * n + j + 1];
                        row[j + 1] = lrow.iter().zip(&z).map(|(a, b)| a * b).sum();
                    }
                }
            }
        });
    Ok(FbmPathSet {
        grid: grid.clone(),
        values,
        n_paths,
        hp: *hp,
        seed,
    })
}

/// Piecewise-linear tabulation of a function, zero outside its knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl Tabulated {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "tabulation needs >= 2 knots and matching values ({} knots, {} values)",
                knots.len(),
                values.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "knots must be strictly increasing and values finite".into(),
            ));
        }
        Ok(Self { knots, values })
    }

    /// Tabulate `f` at `intervals + 1` equally spaced knots on `[a, b]`.
    pub fn from_fn<F: Fn(f64) -> f64>(a: f64, b: f64, intervals: usize, f: F) -> Result<Self> {
        if !(b > a) || intervals == 0 {
            return Err(Error::InvalidArgument(format!(
                "bad tabulation interval [{a}, {b}] with {intervals} intervals"
            )));
        }
        let h = (b - a) / intervals as f64;
        let knots: Vec<f64> = (0..=intervals)
            .map(|k| if k == intervals { b } else { a + k as f64 * h })
            .collect();
        let values = knots.iter().map(|&s| f(s)).collect();
        Self::new(knots, values)
    }

    pub fn constant(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(vec![a, b], vec![c, c])
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn eval(&self, s: f64) -> f64 {
        let (a, b) = self.support();
        if !(s >= a && s <= b) {
            return 0.0;
        }
        let k = match self.knots.partition_point(|&x| x <= s) {
            0 => 0,
            p => (p - 1).min(self.knots.len() - 2),
        };
        self.segment_value(k, s)
    }

    fn segment_value(&self, k: usize, s: f64) -> f64 {
        let (s0, s1) = (self.knots[k], self.knots[k + 1]);
        let (v0, v1) = (self.values[k], self.values[k + 1]);
        v0 + (v1 - v0) * (s - s0) / (s1 - s0)
    }

    /// The tabulation multiplied by `χ_[a, b]` (knots at `a`, `b` inserted).
    pub fn restricted(&self, a: f64, b: f64) -> Result<Self> {
        let (lo, hi) = self.support();
        let a = a.max(lo);
        let b = b.min(hi);
        if !(b > a) {
            return Err(Error::InvalidArgument(format!(
                "restriction [{a}, {b}] does not overlap the support"
            )));
        }
        let mut knots = vec![a];
        knots.extend(self.knots.iter().copied().filter(|&s| s > a && s < b));
        knots.push(b);
        let values = knots.iter().map(|&s| self.eval(s)).collect();
        Self::new(knots, values)
    }

    /// `∫ f` and `∫ |f|` over the support (exact for the interpolant).
    fn integrals(&self) -> (f64, f64) {
        let mut int = 0.0;
        let mut abs = 0.0;
        for k in 0..self.knots.len() - 1 {
            let h = self.knots[k + 1] - self.knots[k];
            let (v0, v1) = (self.values[k], self.values[k + 1]);
            int += 0.5 * h * (v0 + v1);
            abs += if v0 * v1 >= 0.0 {
                0.5 * h * (v0.abs() + v1.abs())
            } else {
                0.5 * h * (v0 * v0 + v1 * v1) / (v0.abs() + v1.abs())
            };
        }
        (int, abs)
    }
}

fn signed_pow(x: f64, p: f64) -> f64 {
    x.signum() * x.abs().powf(p)
}

/// `M f(x) = C_H ∫ f(y + x) |y|^{H-3/2} dy` for a tabulated `f`.
pub fn m_apply(f: &Tabulated, x: f64, hp: &HurstParameter) -> Result<f64> {
    m_apply_with_tol(f, x, hp, QUAD_REL_TOL)
}

/// [`m_apply`] with an explicit relative tolerance. Each knot interval is
/// integrated at two Gauss-Legendre orders; the orders are doubled until the
/// totals agree within `rel_tol` times `C_H ∫ |f(s)| |s - x|^{H-3/2} ds`.
pub fn m_apply_with_tol(f: &Tabulated, x: f64, hp: &HurstParameter, rel_tol: f64) -> Result<f64> {
    let a = hp.kernel_exponent();
    let e = hp.h - 0.5;
    let (lo, hi) = f.support();
    let near = x > lo - (hi - lo) && x < hi + (hi - lo);

    // (order, value, |value|) summed over knot intervals
    let sum_at = |order: usize| -> (f64, f64) {
        let rule = cached_legendre(order);
        let mut total = 0.0;
        let mut scale = 0.0;
        for k in 0..f.knots.len() - 1 {
            let (s0, s1) = (f.knots[k], f.knots[k + 1]);
            if near {
                // u = sgn(y)|y|^{H-1/2}, y = s - x: du = (H - 1/2)|y|^{H-3/2} dy
                let u0 = signed_pow(s0 - x, e);
                let u1 = signed_pow(s1 - x, e);
                let pieces: &[(f64, f64)] = if u0 < 0.0 && u1 > 0.0 {
                    &[(u0, 0.0), (0.0, u1)]
                } else {
                    &[(u0, u1)]
                };
                for &(ua, ub) in pieces {
                    for (u, w) in rule.mapped(ua, ub) {
                        let s = x + signed_pow(u, 1.0 / e);
                        let v = f.segment_value(k, s) / e;
                        total += w * v;
                        scale += w * v.abs();
                    }
                }
            } else {
                for (s, w) in rule.mapped(s0, s1) {
                    let v = f.segment_value(k, s) * (s - x).abs().powf(a);
                    total += w * v;
                    scale += w * v.abs();
                }
            }
        }
        (total, scale)
    };

    let mut order = 8;
    let (mut prev, _) = sum_at(order);
    let mut err = f64::INFINITY;
    while order < 128 {
        order *= 2;
        let (next, scale) = sum_at(order);
        err = (next - prev).abs();
        prev = next;
        if err <= rel_tol * scale || scale == 0.0 {
            return Ok(hp.c_h * next);
        }
    }
    Err(Error::Quadrature {
        estimate: hp.c_h * prev,
        error: hp.c_h * err,
        tolerance: rel_tol,
    })
}

/// `M_t(x) = M(χ_[0,t])(x) = C_H/(H-1/2) [sgn(t-x)|t-x|^{H-1/2} + sgn(x)|x|^{H-1/2}]`,
/// the exact integral of the operator kernel over the indicator.
pub fn m_indicator(t: f64, x: f64, hp: &HurstParameter) -> f64 {
    let e = hp.h - 0.5;
    hp.c_h / e * (signed_pow(t - x, e) + signed_pow(x, e))
}

/// `J(w) = ∫_R (|w² - v²|/4)^{H-3/2} dv` for `w = |u| > 0`.
///
/// The singular points `v = ±w` are removed with `|v - w| = w r^{1/(H-1/2)}`
/// and the tail `v > 2w` with `v = 2w s^{-1/(2-2H)}`; all three pieces are
/// then regular and integrated by Gauss-Legendre.
fn rotated_inner(w: f64, hp: &HurstParameter) -> f64 {
    let a = hp.kernel_exponent();
    let q = 1.0 / (a + 1.0);
    let p = 1.0 / (-2.0 * a - 1.0);
    let c4 = 4f64.powf(-a);
    let near = |r: f64, sign: f64| {
        let v = w * (1.0 + sign * r.powf(q));
        c4 * w.powf(a + 1.0) * q * (w + v).powf(a)
    };
    let tail =
        |s: f64| c4 * (2.0 * w).powf(2.0 * a + 1.0) * p * (1.0 - 0.25 * s.powf(2.0 * p)).powf(a);
    let tol = 1e-13;
    let inside = gauss_legendre_doubling(|r| near(r, -1.0), 0.0, 1.0, 16, tol, 0.0);
    let outside = gauss_legendre_doubling(|r| near(r, 1.0), 0.0, 1.0, 16, tol, 0.0);
    let far = gauss_legendre_doubling(tail, 0.0, 1.0, 16, tol, 0.0);
    // the pieces are smooth; if the strict tolerance is missed the last
    // estimate is still accurate far beyond what callers need
    let value = |r: Result<Estimate>| match r {
        Ok(e) => e.value,
        Err(Error::Quadrature { estimate, .. }) => estimate,
        Err(_) => f64::NAN,
    };
    2.0 * (value(inside) + value(outside) + value(far))
}

/// `M²(f χ_[0,t])(t) = C_H² ∬ |yz|^{H-3/2} f(y+z+t) χ_[0,t](y+z+t) dy dz`
/// in rotated coordinates `u = y + z ∈ [-t, 0]`, `v = y - z`:
/// `C_H²/2 ∫_0^t f(t - w) J(w) dw` with `J(w) = J(1) w^{2H-2}`.
///
/// `f` is evaluated on `[0, t]` only.
pub fn m_squared_at_end<F: Fn(f64) -> f64>(f: F, t: f64, hp: &HurstParameter) -> Result<Estimate> {
    if t == 0.0 {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    let j1 = hp.rotated_kernel_constant();
    // w = t r^m with m = 1/(2H-1) absorbs the w^{2H-2} growth of J at w = 0:
    // J(w) dw = J(1) t^{2H-1} m dr
    let m = 1.0 / (2.0 * hp.h - 1.0);
    let integrand = |r: f64| f(t - t * r.powf(m));
    let est = gauss_legendre_doubling(integrand, 0.0, 1.0, 16, 1e-10, 0.0)?;
    let c = 0.5 * hp.c_h * hp.c_h * j1 * t.powf(2.0 * hp.h - 1.0) * m;
    Ok(Estimate {
        value: c * est.value,
        error: c * est.error,
    })
}

/// `M²(χ_[0,t])(t)` by the rotated-coordinate quadrature.
pub fn m_squared_indicator(t: f64, hp: &HurstParameter) -> Result<f64> {
    m_squared_at_end(|_| 1.0, t, hp).map(|e| e.value)
}

/// Maps `[x0, ∞)` to `s ∈ (0, 1]` via `x = x0 s^{-p}`, `p = 1/(2-2H)`, which
/// turns an integrand decaying like `x^{2H-3}` into a bounded one.
fn power_tail<F: FnMut(f64) -> f64>(
    mut g: F,
    x0: f64,
    hp: &HurstParameter,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Estimate> {
    let p = 1.0 / (2.0 - 2.0 * hp.h);
    tanh_sinh(
        |s| {
            let x = x0 * s.powf(-p);
            if !x.is_finite() || x > 1e150 {
                return 0.0;
            }
            g(x) * p * x / s
        },
        0.0,
        1.0,
        rel_tol,
        abs_tol,
    )
}

/// `M²(χ_[0,t])(t)` by nested tanh-sinh quadrature directly in `(y, z)`.
///
/// Independent of [`m_squared_indicator`]; used to cross-check it.
pub fn m_squared_indicator_direct(t: f64, hp: &HurstParameter) -> Result<f64> {
    m_squared_direct(|_| 1.0, t, hp)
}

/// `M²(f χ_[0,t])(t) = C_H² ∫ |y|^{H-3/2} ∫_{-t-y}^{-y} |z|^{H-3/2} f(y+z+t) dz dy`
/// by nested tanh-sinh quadrature, split at the singular points of both
/// kernels. Independent of [`m_squared_at_end`].
pub fn m_squared_direct<F: Fn(f64) -> f64>(f: F, t: f64, hp: &HurstParameter) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    let a = hp.kernel_exponent();
    let f_scale = (0..=16)
        .map(|k| f(t * k as f64 / 16.0).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let inner_tol = 1e-11;
    // inner values are of order sup|f| t^{H-1/2}; much smaller ones are negligible
    let inner_abs = 1e-14 * f_scale * t.powf(a + 1.0);
    let inner = |y: f64| -> f64 {
        let kern = |z: f64| z.abs().powf(a) * f(y + z + t);
        let lo = -t - y;
        let hi = -y;
        let r = if y.abs() > 4.0 * t {
            // far from the singularity; integrate over the offset w = -z - y
            // so that the interval does not round away when |y| >> t
            tanh_sinh(
                |w| (y + w).abs().powf(a) * f(t - w),
                0.0,
                t,
                inner_tol,
                inner_abs,
            )
            .map(|e| e.value)
        } else if lo < 0.0 && hi > 0.0 {
            tanh_sinh(kern, lo, 0.0, inner_tol, inner_abs).and_then(|l| {
                tanh_sinh(kern, 0.0, hi, inner_tol, inner_abs).map(|r| l.value + r.value)
            })
        } else {
            tanh_sinh(kern, lo, hi, inner_tol, inner_abs).map(|e| e.value)
        };
        match r {
            Ok(v) => v,
            Err(Error::Quadrature { estimate, .. }) => estimate,
            Err(_) => f64::NAN,
        }
    };
    let outer = |y: f64| y.abs().powf(a) * inner(y);
    let tol = 1e-8;
    let mut total = 0.0;
    for (lo, hi) in [(-2.0 * t, -t), (-t, 0.0), (0.0, t)] {
        total += tanh_sinh(outer, lo, hi, tol, 0.0)?.value;
    }
    total += power_tail(outer, t, hp, tol, 0.0)?.value;
    total += power_tail(|x| outer(-x), 2.0 * t, hp, tol, 0.0)?.value;
    Ok(hp.c_h * hp.c_h * total)
}

/// Variance of the Wiener integral `∫_0^t f dB`:
/// `κ² ∫ [M(f χ_[0,t])(x)]² dx` with `κ²` = [`HurstParameter::isometry_factor`].
///
/// The x-axis is split at `0` and `t` (where `M(f χ)` has cusps); the tails
/// beyond `[-t, 2t]` are mapped to a finite interval, so no truncation is
/// involved.
pub fn wiener_variance(f: &Tabulated, t: f64, hp: &HurstParameter) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    let g = f.restricted(0.0, t)?;
    let (_, abs_int) = g.integrals();
    if abs_int == 0.0 {
        return Ok(0.0);
    }
    let inner_tol = 1e-10;
    let mut failure = None;
    let mut sq = |x: f64| match m_apply_with_tol(&g, x, hp, inner_tol) {
        Ok(v) => v * v,
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    };
    // absolute floor relative to the natural scale (C_H ∫|f|)² t^{2H-1}
    let floor = 1e-14 * (hp.c_h * abs_int).powi(2) * t.powf(2.0 * hp.h - 1.0);
    let tol = 1e-9;
    let mut total = 0.0;
    for (lo, hi) in [(-t, 0.0), (0.0, t), (t, 2.0 * t)] {
        total += tanh_sinh(&mut sq, lo, hi, tol, floor)?.value;
    }
    total += power_tail(&mut sq, 2.0 * t, hp, tol, floor)?.value;
    total += power_tail(|x| sq(-x), t, hp, tol, floor)?.value;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(hp.isometry_factor() * total)
}

/// `M²(β χ_[0,t])(t)` at every `t` in `eval_times` for a piecewise-linear
/// `β` given on `knots` (which must start at 0 and reach every evaluation
/// time).
///
/// Uses the rotated form `C_H²/2 ∫_0^t β(s) J(t - s) ds` with
/// `J(w) = J(1) w^{2H-2}`, integrated exactly against each linear piece.
pub fn m_squared_profile(
    knots: &[f64],
    beta: &[f64],
    eval_times: &[f64],
    hp: &HurstParameter,
) -> Result<Vec<f64>> {
    if knots.len() < 2 || knots.len() != beta.len() || knots[0] != 0.0 {
        return Err(Error::InvalidArgument(
            "profile knots must start at 0 with one value per knot".into(),
        ));
    }
    let last = knots[knots.len() - 1];
    let gamma = 2.0 * hp.h - 2.0;
    let c = 0.5 * hp.c_h * hp.c_h * hp.rotated_kernel_constant();
    let g1 = gamma + 1.0;
    let g2 = gamma + 2.0;
    let tab = Tabulated::new(knots.to_vec(), beta.to_vec())?;
    eval_times
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                return Ok(0.0);
            }
            if t > last * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "evaluation time {t} beyond the profile end {last}"
                )));
            }
            let mut sum = 0.0;
            for k in 0..knots.len() - 1 {
                let s0 = knots[k];
                if s0 >= t {
                    break;
                }
                let s1 = knots[k + 1].min(t);
                let b0 = beta[k];
                let b1 = if knots[k + 1] <= t {
                    beta[k + 1]
                } else {
                    tab.eval(s1)
                };
                let slope = (b1 - b0) / (s1 - s0);
                // β(t - r) = a0 + a1 r on r ∈ [t - s1, t - s0]
                let a1 = -slope;
                let a0 = b0 + slope * (t - s0);
                let (r_lo, r_hi) = (t - s1, t - s0);
                sum += a0 * (r_hi.powf(g1) - r_lo.powf(g1)) / g1
                    + a1 * (r_hi.powf(g2) - r_lo.powf(g2)) / g2;
            }
            Ok(c * sum)
        })
        .collect()
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn hp(h: f64) -> HurstParameter {
        HurstParameter::new(h).unwrap()
    }

    // reference values from 20-digit arbitrary precision evaluation
    const C_H_075: f64 = 0.149270361082947661;
    const C_H_09: f64 = 0.278624678053099024;
    const C_H_06: f64 = 0.0532119780556692836;

    #[test]
    fn c_h_matches_reference_values() {
        assert!((c_h(0.75).unwrap() - C_H_075).abs() < 1e-14);
        assert!((c_h(0.9).unwrap() - C_H_09).abs() < 1e-14);
        assert!((c_h(0.6).unwrap() - C_H_06).abs() < 1e-14);
        assert!((c_h(0.75).unwrap() - 0.14927).abs() < 1e-5);
        assert!((c_h(0.9).unwrap() - 0.27862).abs() < 1e-5);
    }

    #[test]
    fn c_h_rejects_outside_domain() {
        for h in [0.5, 1.0, 0.3, 1.2, f64::NAN] {
            assert!(matches!(c_h(h), Err(Error::HurstDomain(_))), "h = {h}");
            assert!(HurstParameter::new(h).is_err());
        }
    }

    #[test]
    fn covariance_examples() {
        let p = hp(0.75);
        assert!((fbm_covariance(1.0, 2.0, &p) - 0.422200338207667).abs() < 1e-13);
        assert_eq!(fbm_covariance(0.7, 0.0, &p), 0.0);
        for t in [0.1, 1.0, 3.0] {
            assert!((fbm_covariance(t, t, &p) - p.variance(t)).abs() < 1e-14);
        }
        assert_eq!(fbm_covariance(0.3, 0.8, &p), fbm_covariance(0.8, 0.3, &p));
    }

    #[test]
    fn isometry_constants() {
        // mpmath: ‖Mχ‖² and κ² at H = 0.6, 0.75, 0.9
        let cases = [
            (0.6, 0.954310988531844474, 0.111519156113947752),
            (0.75, 1.06384608107048714, 0.280623980741171655),
            (0.9, 1.93026290458476952, 0.288690910850857031),
        ];
        for (h, norm, kappa) in cases {
            let p = hp(h);
            assert!(
                (p.m_indicator_norm_sq() - norm).abs() < 1e-12 * norm,
                "h={h}"
            );
            assert!((p.isometry_factor() - kappa).abs() < 1e-12, "h={h}");
        }
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.2]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.dt(), Some(0.25));
        let g = TimeGrid::new(vec![0.0, 0.1, 0.5]).unwrap();
        assert_eq!(g.dt(), None);
    }

    #[test]
    fn cholesky_reconstructs_and_rejects_indefinite() {
        let mut a = vec![4.0, 0.0, 2.0, 5.0];
        cholesky_lower(&mut a, 2).unwrap();
        assert_eq!(a, vec![2.0, 0.0, 1.0, 2.0]);
        let mut b = vec![1.0, 0.0, 2.0, 1.0];
        assert!(matches!(
            cholesky_lower(&mut b, 2),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
    }

    #[test]
    fn covariance_factor_reproduces_covariance() {
        let g = TimeGrid::new(vec![0.0, 0.1, 0.35, 0.9, 1.0]).unwrap();
        let p = hp(0.8);
        let l = covariance_factor(&g, &p).unwrap();
        let t = &g.points()[1..];
        let n = t.len();
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| l[i * n + k] * l[j * n + k]).sum();
                assert!((v - fbm_covariance(t[i], t[j], &p)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn circulant_embedding_reproduces_covariance() {
        for h in [0.55, 0.75, 0.95] {
            let p = hp(h);
            let (n, dt) = (12, 0.125);
            let s = circulant_sqrt_eigenvalues(n, dt, &p).unwrap();
            let m = 2 * n;
            // covariance of increments a and b implied by the embedding
            let lag = |j: usize| -> f64 {
                s.iter()
                    .enumerate()
                    .map(|(k, v)| v * v * (2.0 * PI * (j * k) as f64 / m as f64).cos())
                    .sum()
            };
            for i in 1..=n {
                for j in 1..=n {
                    let mut c = 0.0;
                    for a in 0..i {
                        for b in 0..j {
                            c += lag(a.abs_diff(b));
                        }
                    }
                    let exact = fbm_covariance(i as f64 * dt, j as f64 * dt, &p);
                    assert!((c - exact).abs() < 1e-13, "h={h} ({i},{j}): {c} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn non_uniform_grids_use_the_factor() {
        let g = TimeGrid::new(vec![0.0, 0.1, 0.35, 0.9, 1.0]).unwrap();
        let a = sample_fbm(&g, &hp(0.8), 3, 5).unwrap();
        assert!(a
            .paths()
            .all(|p| p[0] == 0.0 && p.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn sampled_paths_start_at_zero_and_are_deterministic() {
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let a = sample_fbm(&g, &hp(0.7), 20, 42).unwrap();
        let b = sample_fbm(&g, &hp(0.7), 25, 42).unwrap();
        assert!(a.paths().all(|p| p[0] == 0.0));
        // path i does not depend on how many paths were requested
        for i in 0..20 {
            assert_eq!(a.path(i), b.path(i));
        }
        let c = sample_fbm(&g, &hp(0.7), 20, 43).unwrap();
        assert_ne!(a.path(0), c.path(0));
    }

    #[test]
    fn m_indicator_limits_and_symmetry() {
        let p = hp(0.75);
        let expected = C_H_075 / 0.25 * 2.0 * 0.5f64.powf(0.25);
        assert!((m_indicator(1.0, 0.5, &p) - expected).abs() < 1e-14);
        assert!((expected - 1.00416729230622614).abs() < 1e-13);
        for x in [-3.0, -0.2, 0.1, 0.4, 0.9, 1.7] {
            let d = m_indicator(1.0, x, &p) - m_indicator(1.0, 1.0 - x, &p);
            assert!(d.abs() < 1e-14);
        }
        assert!(m_indicator(1.0, -1e8, &p).abs() < 1e-3);
        assert!(m_indicator(1.0, 1e8, &p).abs() < 1e-3);
        // endpoints are finite
        assert!(m_indicator(1.0, 0.0, &p).is_finite());
        assert!(m_indicator(1.0, 1.0, &p).is_finite());
    }

    #[test]
    fn m_apply_matches_indicator_closed_form() {
        for h in [0.6, 0.75, 0.9] {
            let p = hp(h);
            for t in [0.5, 1.0, 2.0] {
                let chi = Tabulated::constant(0.0, t, 1.0).unwrap();
                for x in [-2.0, -0.3, 0.0, 0.1, 0.5 * t, t, t + 0.01, 3.0, 40.0] {
                    let q = m_apply(&chi, x, &p).unwrap();
                    let exact = m_indicator(t, x, &p);
                    assert!(
                        (q - exact).abs() <= 1e-7 * exact.abs().max(1e-3),
                        "h={h} t={t} x={x}: {q} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn m_apply_is_linear() {
        let p = hp(0.7);
        let f = Tabulated::from_fn(0.0, 1.0, 10, |s| (3.0 * s).sin()).unwrap();
        let g = Tabulated::from_fn(0.0, 1.0, 10, |s| s * s - 0.2).unwrap();
        let combo = Tabulated::new(
            f.knots().to_vec(),
            f.values()
                .iter()
                .zip(g.values())
                .map(|(a, b)| 2.0 * a - 0.5 * b)
                .collect(),
        )
        .unwrap();
        for x in [-0.5, 0.05, 0.33, 0.95, 2.0] {
            let lhs = m_apply(&combo, x, &p).unwrap();
            let rhs = 2.0 * m_apply(&f, x, &p).unwrap() - 0.5 * m_apply(&g, x, &p).unwrap();
            assert!((lhs - rhs).abs() < 1e-7 * (lhs.abs() + 1.0), "x={x}");
        }
        let zero = Tabulated::constant(0.0, 1.0, 0.0).unwrap();
        assert_eq!(m_apply(&zero, 0.3, &p).unwrap(), 0.0);
    }

    #[test]
    fn m_squared_matches_beta_function_closed_form() {
        // C_H² K t^{2H-1}/(2H-1), K = B(H-1/2, H-1/2) + 2B(2-2H, H-1/2) (mpmath)
        let cases = [
            (0.6, 0.572586593119106663),
            (0.75, 0.797884560802865356),
            (0.9, 1.73723661412629261),
        ];
        for (h, m2) in cases {
            let p = hp(h);
            let rot = m_squared_indicator(1.0, &p).unwrap();
            assert!((rot - m2).abs() < 1e-8 * m2, "rotated h={h}: {rot} vs {m2}");
            let dir = m_squared_indicator_direct(1.0, &p).unwrap();
            assert!((dir - m2).abs() < 1e-6 * m2, "direct h={h}: {dir} vs {m2}");
        }
        assert_eq!(m_squared_indicator(0.0, &hp(0.75)).unwrap(), 0.0);
        assert_eq!(m_squared_indicator_direct(0.0, &hp(0.75)).unwrap(), 0.0);
    }

    #[test]
    fn m_squared_self_similarity() {
        for h in [0.6, 0.75, 0.9] {
            let p = hp(h);
            let base = m_squared_indicator_direct(0.5, &p).unwrap();
            for lambda in [2.0, 4.0] {
                let v = m_squared_indicator_direct(0.5 * lambda, &p).unwrap();
                let ratio = v / base;
                let expected = lambda.powf(2.0 * h - 1.0);
                assert!((ratio / expected - 1.0).abs() < 1e-2, "h={h} λ={lambda}");
            }
        }
    }

    #[test]
    fn weighted_m_squared_schemes_agree() {
        let p = hp(0.75);
        let f = |s: f64| (0.5 * s).exp();
        for t in [0.3, 1.0] {
            let rot = m_squared_at_end(f, t, &p).unwrap().value;
            let dir = m_squared_direct(f, t, &p).unwrap();
            assert!((rot - dir).abs() < 1e-6 * rot, "t={t}: {rot} vs {dir}");
        }
    }

    #[test]
    fn profile_agrees_with_pointwise_quadrature() {
        let p = hp(0.75);
        let f = |s: f64| 0.3 * (0.5 * s).exp();
        let knots: Vec<f64> = (0..=256).map(|k| k as f64 / 256.0).collect();
        let beta: Vec<f64> = knots.iter().map(|&s| f(s)).collect();
        let times = [0.0, 0.1, 0.5, 0.77, 1.0];
        let prof = m_squared_profile(&knots, &beta, &times, &p).unwrap();
        assert_eq!(prof[0], 0.0);
        for (t, v) in times.iter().zip(&prof).skip(1) {
            let q = m_squared_at_end(f, *t, &p).unwrap().value;
            assert!((v - q).abs() < 1e-6 * q, "t={t}: {v} vs {q}");
        }
        // constant profile reproduces m_squared_indicator
        let ones = vec![1.0; knots.len()];
        let prof = m_squared_profile(&knots, &ones, &[0.6], &p).unwrap();
        let direct = m_squared_indicator(0.6, &p).unwrap();
        assert!((prof[0] - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn wiener_variance_of_constant_is_fbm_variance() {
        for h in [0.6, 0.75, 0.9] {
            let p = hp(h);
            for t in [0.5, 1.0] {
                let one = Tabulated::constant(0.0, t, 1.0).unwrap();
                let v = wiener_variance(&one, t, &p).unwrap();
                assert!(
                    (v - p.variance(t)).abs() < 1e-6 * p.variance(t),
                    "h={h} t={t}: {v}"
                );
            }
        }
        let zero = Tabulated::constant(0.0, 1.0, 0.0).unwrap();
        assert_eq!(wiener_variance(&zero, 1.0, &hp(0.75)).unwrap(), 0.0);
    }

    #[test]
    fn wiener_variance_of_exponential() {
        // mpmath: 2∫_0^1∫_0^r e^{(r+s)/2} 2H(2H-1)C_H |r-s|^{2H-2} ds dr at H = 0.75
        let p = hp(0.75);
        let f = Tabulated::from_fn(0.0, 1.0, 256, |s| (0.5 * s).exp()).unwrap();
        let v = wiener_variance(&f, 1.0, &p).unwrap();
        assert!((v - 0.506416377006397).abs() < 1e-5, "{v}");
    }
}
