//! One-dimensional probability laws: weighted atoms and densities on a
//! uniform grid, their characteristic functions and the Fourier-weighted
//! distance `‖μ - ν‖² = ∫ |μ̂(y) - ν̂(y)|² e^{-y²} dy`.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;

/// Default Gauss-Hermite order of [`m_distance`].
pub const HERMITE_ORDER: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };
    pub const ONE: Complex = Complex { re: 1.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    /// `e^{iθ}`
    pub fn cis(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { re: c, im: s }
    }

    pub fn scale(self, k: f64) -> Self {
        Self {
            re: k * self.re,
            im: k * self.im,
        }
    }

    pub fn conj(self) -> Self {
        Self {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

/// Uniform grid of `cells + 1` nodes on `[-L, L]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    half_width: f64,
    cells: usize,
}

impl SpatialGrid {
    pub fn new(half_width: f64, cells: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) || cells < 2 {
            return Err(Error::InvalidGrid(format!(
                "spatial grid needs L > 0 and >= 2 cells (got L = {half_width}, {cells} cells)"
            )));
        }
        Ok(Self { half_width, cells })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn n_nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        if j == self.cells {
            self.half_width
        } else {
            -self.half_width + j as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|j| self.x(j)).collect()
    }

    /// Trapezoidal weight of node `j` (also the size of its control volume).
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.cells {
            0.5 * self.dx()
        } else {
            self.dx()
        }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(j, v)| self.weight(j) * v)
            .sum()
    }
}

/// A probability law that exposes its characteristic function and mean.
pub trait Measure {
    /// `μ̂(y) = ∫ e^{-ixy} μ(dx)`
    fn char_function(&self, y: f64) -> Complex;
    fn mean(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    locations: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(locations: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if locations.is_empty() || locations.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} locations and {} weights",
                locations.len(),
                weights.len()
            )));
        }
        if locations.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite atom location".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidMeasure("negative or NaN weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { locations, weights })
    }

    /// Equal weights `1/n`.
    pub fn uniform(locations: Vec<f64>) -> Result<Self> {
        let n = locations.len();
        let w = 1.0 / n.max(1) as f64;
        Self::new(locations, vec![w; n])
    }

    pub fn dirac(a: f64) -> Self {
        Self {
            locations: vec![a],
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.locations
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * (x - m) * (x - m))
            .sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,weight")?;
        for (x, p) in self.locations.iter().zip(&self.weights) {
            writeln!(w, "{x},{p}")?;
        }
        Ok(())
    }
}

impl Measure for EmpiricalMeasure {
    fn char_function(&self, y: f64) -> Complex {
        let (mut re, mut im) = (0.0, 0.0);
        for (x, w) in self.locations.iter().zip(&self.weights) {
            let (s, c) = (x * y).sin_cos();
            re += w * c;
            im -= w * s;
        }
        Complex::new(re, im)
    }

    fn mean(&self) -> f64 {
        self.locations
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum()
    }
}

/// Borrowed equal-weight atoms (the empirical law of a particle ensemble).
#[derive(Debug, Clone, Copy)]
pub struct UniformAtoms<'a>(pub &'a [f64]);

impl Measure for UniformAtoms<'_> {
    fn char_function(&self, y: f64) -> Complex {
        let (mut re, mut im) = (0.0, 0.0);
        for x in self.0 {
            let (s, c) = (x * y).sin_cos();
            re += c;
            im -= s;
        }
        let n = self.0.len() as f64;
        Complex::new(re / n, im / n)
    }

    fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

/// Nonnegative nodal density values on a [`SpatialGrid`] with unit
/// trapezoidal mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl DensityField {
    /// Checks one finite nonnegative value per node and unit mass within 1e-6.
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        Self::check_values(&grid, &values)?;
        let mass = grid.integrate(&values);
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidMeasure(format!(
                "density mass is {mass}, not 1"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Rescales `values` to unit mass.
    pub fn normalized(grid: SpatialGrid, mut values: Vec<f64>) -> Result<Self> {
        Self::check_values(&grid, &values)?;
        let mass = grid.integrate(&values);
        if !(mass > 0.0) {
            return Err(Error::InvalidMeasure(
                "density has zero mass on the grid".into(),
            ));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(Self { grid, values })
    }

    /// Wraps solver output whose mass and sign are maintained by the caller.
    pub(crate) fn from_raw(grid: SpatialGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_nodes());
        Self { grid, values }
    }

    fn check_values(grid: &SpatialGrid, values: &[f64]) -> Result<()> {
        if values.len() != grid.n_nodes() {
            return Err(Error::InvalidMeasure(format!(
                "{} values for {} grid nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidMeasure(
                "density values must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let g = &self.grid;
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let d = g.x(j) - m;
                g.weight(j) * v * d * d
            })
            .sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,density")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.grid.x(j), v)?;
        }
        Ok(())
    }
}

impl Measure for DensityField {
    fn char_function(&self, y: f64) -> Complex {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, v) in self.values.iter().enumerate() {
            let w = self.grid.weight(j) * v;
            let (s, c) = (self.grid.x(j) * y).sin_cos();
            re += w * c;
            im -= w * s;
        }
        Complex::new(re, im)
    }

    fn mean(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| self.grid.weight(j) * v * self.grid.x(j))
            .sum()
    }
}

pub fn char_function(mu: &dyn Measure, y: f64) -> Complex {
    mu.char_function(y)
}

pub fn measure_mean(mu: &dyn Measure) -> f64 {
    mu.mean()
}

fn default_hermite() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(HERMITE_ORDER))
}

/// `sqrt(∫ |μ̂(y) - ν̂(y)|² e^{-y²} dy)` with the default Hermite order.
pub fn m_distance(mu: &dyn Measure, nu: &dyn Measure) -> f64 {
    m_distance_with(mu, nu, default_hermite())
}

pub fn m_distance_with(mu: &dyn Measure, nu: &dyn Measure, rule: &GaussHermite) -> f64 {
    rule.integrate(|y| (mu.char_function(y) - nu.char_function(y)).norm_sqr())
        .max(0.0)
        .sqrt()
}

/// `N(mean, variance)` density tabulated on `grid` and renormalized to unit
/// trapezoidal mass.
pub fn gaussian_density(grid: SpatialGrid, mean: f64, variance: f64) -> Result<DensityField> {
    if !(variance > 0.0) || !mean.is_finite() {
        return Err(Error::DegenerateSample(format!(
            "Gaussian needs a finite mean and positive variance (got {mean}, {variance})"
        )));
    }
    let norm = 1.0 / (2.0 * PI * variance).sqrt();
    let values = (0..grid.n_nodes())
        .map(|j| {
            let d = grid.x(j) - mean;
            norm * (-0.5 * d * d / variance).exp()
        })
        .collect();
    DensityField::normalized(grid, values).map_err(|_| {
        Error::DegenerateSample(format!(
            "N({mean}, {variance}) has no resolvable mass on [-{0}, {0}]",
            grid.half_width()
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `1.06 σ̂ n^{-1/5}`
    Auto,
    Fixed(f64),
}

/// Gaussian kernel density estimate of `mu` on `grid`, renormalized to unit
/// mass on the grid.
pub fn kde_density(
    mu: &EmpiricalMeasure,
    grid: SpatialGrid,
    bandwidth: Bandwidth,
) -> Result<DensityField> {
    let b = match bandwidth {
        Bandwidth::Fixed(b) if b > 0.0 && b.is_finite() => b,
        Bandwidth::Fixed(b) => {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {b}"
            )))
        }
        Bandwidth::Auto => {
            if mu.len() < 2 {
                return Err(Error::DegenerateSample(
                    "automatic bandwidth needs at least two atoms".into(),
                ));
            }
            let sigma = mu.variance().sqrt();
            if !(sigma > 0.0) {
                return Err(Error::DegenerateSample(
                    "all atoms coincide; automatic bandwidth would be 0".into(),
                ));
            }
            1.06 * sigma * (mu.len() as f64).powf(-0.2)
        }
    };
    let mut atoms: Vec<(f64, f64)> = mu
        .locations()
        .iter()
        .copied()
        .zip(mu.weights().iter().copied())
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let reach = 9.0 * b;
    let norm = 1.0 / (b * (2.0 * PI).sqrt());
    let values = (0..grid.n_nodes())
        .map(|j| {
            let x = grid.x(j);
            let lo = atoms.partition_point(|a| a.0 < x - reach);
            let hi = atoms.partition_point(|a| a.0 <= x + reach);
            atoms[lo..hi]
                .iter()
                .map(|&(a, w)| {
                    let z = (x - a) / b;
                    w * (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    DensityField::normalized(grid, values)
}

/// `∫ |p - q| dx` by the trapezoidal rule; both fields must share a grid.
pub fn l1_distance(p: &DensityField, q: &DensityField) -> Result<f64> {
    if p.grid != q.grid {
        return Err(Error::InvalidGrid("L1 distance needs a common grid".into()));
    }
    Ok(p.grid.integrate(
        &p.values
            .iter()
            .zip(&q.values)
            .map(|(a, b)| (a - b).abs())
            .collect::<Vec<_>>(),
    ))
}
