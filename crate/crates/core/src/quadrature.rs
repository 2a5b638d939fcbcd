//! Quadrature rules used by the operator-M machinery and the measure metrics.
//!
//! * [`GaussLegendre`] for integrands that have been made regular by a
//!   change of variables.
//! * [`tanh_sinh`] (double exponential) for integrands with algebraic
//!   endpoint singularities. Put the singular point at `0.0` (or pass it as an
//!   endpoint that is exactly representable) so nodes can approach it without
//!   rounding onto it.
//! * [`GaussHermite`] for integrals against `e^{-y^2}`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// A quadrature value together with an estimate of its absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                dp = nf * (z * p1 - p2) / (z * z - 1.0);
                let step = p1 / dp;
                z -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        sum * half
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, w * half))
    }
}

const CACHED_ORDERS: [usize; 8] = [2, 4, 8, 16, 32, 64, 128, 256];

/// Shared Gauss-Legendre rule of order `n`; built on first use for the
/// power-of-two orders 2..=256, constructed afresh otherwise.
pub fn cached_legendre(n: usize) -> std::borrow::Cow<'static, GaussLegendre> {
    static RULES: OnceLock<Vec<OnceLock<GaussLegendre>>> = OnceLock::new();
    let rules = RULES.get_or_init(|| CACHED_ORDERS.iter().map(|_| OnceLock::new()).collect());
    match CACHED_ORDERS.iter().position(|&m| m == n) {
        Some(i) => std::borrow::Cow::Borrowed(rules[i].get_or_init(|| GaussLegendre::new(n))),
        None => std::borrow::Cow::Owned(GaussLegendre::new(n)),
    }
}

/// Gauss-Legendre with order doubling (`n0`, `2 n0`, ...) until two
/// successive orders agree within `max(abs_tol, rel_tol * |value|)`.
pub fn gauss_legendre_doubling<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    n0: usize,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Estimate> {
    let mut n = n0.max(2);
    let mut prev = cached_legendre(n).integrate(&mut f, a, b);
    let mut err = f64::INFINITY;
    for _ in 0..5 {
        n *= 2;
        let next = cached_legendre(n).integrate(&mut f, a, b);
        err = (next - prev).abs();
        prev = next;
        if err <= abs_tol.max(rel_tol * next.abs()) {
            return Ok(Estimate {
                value: next,
                error: err,
            });
        }
    }
    Err(Error::Quadrature {
        estimate: prev,
        error: err,
        tolerance: abs_tol.max(rel_tol * prev.abs()),
    })
}

const TANH_SINH_MAX_LEVEL: u32 = 12;
const TANH_SINH_T_MAX: f64 = 6.5;

/// Tanh-sinh quadrature of `f` over the finite interval `[a, b]`.
///
/// The step is halved until two successive levels agree within
/// `max(abs_tol, rel_tol * |value|)`. Nodes that round onto an endpoint are
/// skipped, so `f` is never evaluated at `a` or `b`.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    if b < a {
        return tanh_sinh(f, b, a, rel_tol, abs_tol).map(|e| Estimate {
            value: -e.value,
            error: e.error,
        });
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);

    // Contribution of the abscissa t (and its mirror -t when t > 0).
    let mut term = |t: f64| -> f64 {
        let s = 0.5 * PI * t.sinh();
        let cs = s.cosh();
        let w = half * 0.5 * PI * t.cosh() / (cs * cs);
        if t == 0.0 {
            return w * f(mid);
        }
        // distance from the nearest endpoint, computed without cancellation
        let d = half * 2.0 / (1.0 + (2.0 * s.abs()).exp());
        if d == 0.0 || !w.is_finite() || w == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        let left = a + d;
        if left > a && left < b {
            acc += w * f(left);
        }
        let right = b - d;
        if right < b && right > a {
            acc += w * f(right);
        }
        acc
    };

    let mut h = 1.0;
    let mut sum = term(0.0);
    let mut k = 1;
    while (k as f64) * h <= TANH_SINH_T_MAX {
        sum += term(k as f64 * h);
        k += 1;
    }
    let mut estimate = sum * h;
    let mut err = f64::INFINITY;
    for level in 1..=TANH_SINH_MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= TANH_SINH_T_MAX {
            sum += term(k as f64 * h);
            k += 2;
        }
        let next = sum * h;
        err = (next - estimate).abs();
        estimate = next;
        if level >= 3 && err <= abs_tol.max(rel_tol * estimate.abs()) {
            return Ok(Estimate {
                value: estimate,
                error: err,
            });
        }
    }
    Err(Error::Quadrature {
        estimate,
        error: err,
        tolerance: abs_tol.max(rel_tol * estimate.abs()),
    })
}

/// Gauss-Hermite rule: `∫ g(y) e^{-y^2} dy ≈ Σ w_i g(y_i)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite order must be positive");
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut z = 0.0_f64;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut dp = 0.0;
            for _ in 0..200 {
                let (mut p1, mut p2) = (pim4, 0.0);
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                dp = (2.0 * nf).sqrt() * p2;
                let step = p1 / dp;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (dp * dp);
            w[n - 1 - i] = w[i];
        }
        // nodes in increasing order
        x.reverse();
        w.reverse();
        Self {
            nodes: x,
            weights: w,
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&y, &w)| w * g(y))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(10);
        // degree 19 is exact for 10 points
        let v = gl.integrate(|x| x.powi(18) + 3.0 * x.powi(19), -1.0, 1.0);
        assert!((v - 2.0 / 19.0).abs() < 1e-14);
        let v = gl.integrate(|x| x * x, 0.0, 3.0);
        assert!((v - 9.0).abs() < 1e-13);
        let s: f64 = GaussLegendre::new(64)
            .mapped(0.0, 2.0)
            .map(|(_, w)| w)
            .sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // ∫_0^1 x^{-0.9} dx = 10
        let e = tanh_sinh(|x| x.powf(-0.9), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert!((e.value - 10.0).abs() < 1e-8, "{e:?}");
        // ∫_{-1}^0 |x|^{-1/2} dx = 2 with the singular point as right endpoint
        let e = tanh_sinh(|x: f64| x.abs().powf(-0.5), -1.0, 0.0, 1e-12, 0.0).unwrap();
        assert!((e.value - 2.0).abs() < 1e-10);
        // reversed limits flip the sign
        let e = tanh_sinh(|x| x.exp(), 1.0, 0.0, 1e-12, 0.0).unwrap();
        assert!((e.value + (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn hermite_reproduces_gaussian_moments() {
        for n in [8, 32, 64, 100] {
            let gh = GaussHermite::new(n);
            let m0 = gh.integrate(|_| 1.0);
            let m2 = gh.integrate(|y| y * y);
            assert!((m0 - PI.sqrt()).abs() < 1e-12, "n={n}: {m0}");
            assert!((m2 - 0.5 * PI.sqrt()).abs() < 1e-12, "n={n}: {m2}");
        }
        let gh = GaussHermite::new(64);
        assert!(gh.nodes().windows(2).all(|w| w[0] < w[1]));
        // ∫ cos(y) e^{-y²} dy = √π e^{-1/4}
        let c = gh.integrate(f64::cos);
        assert!((c - PI.sqrt() * (-0.25f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn doubling_reports_non_convergence() {
        let r = gauss_legendre_doubling(|x: f64| x.abs().powf(-0.99), -1.0, 1.0, 2, 1e-14, 0.0);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
