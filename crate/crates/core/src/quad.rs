//! Gauss-Legendre panel quadrature with panel doubling.

use crate::error::{Error, Result};
use std::sync::OnceLock;

const NODES: usize = 16;

/// 16-point Gauss-Legendre nodes and weights on [-1, 1].
fn gl16() -> &'static ([f64; NODES], [f64; NODES]) {
    static CACHE: OnceLock<([f64; NODES], [f64; NODES])> = OnceLock::new();
    CACHE.get_or_init(|| {
        let n = NODES;
        let mut xs = [0.0; NODES];
        let mut ws = [0.0; NODES];
        for i in 0..n {
            // Newton iteration on P_n from the Chebyshev initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_pair(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_pair(n, x);
            xs[i] = x;
            ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (xs, ws)
    })
}

/// Legendre polynomial P_n and its derivative at x.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn panels(f: &impl Fn(f64) -> f64, a: f64, b: f64, n_panels: usize) -> f64 {
    let (xs, ws) = gl16();
    let w = (b - a) / n_panels as f64;
    let mut total = 0.0;
    for p in 0..n_panels {
        let lo = a + w * p as f64;
        let mid = lo + 0.5 * w;
        let half = 0.5 * w;
        let mut acc = 0.0;
        for i in 0..NODES {
            acc += ws[i] * f(mid + half * xs[i]);
        }
        total += acc * half;
    }
    total
}

/// Integrate `f` over `[a, b]`, doubling the panel count until the result
/// changes by less than `rel_tol` relatively (or `rel_tol` absolutely for
/// results near zero).
pub(crate) fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if !(b >= a) {
        return Err(Error::param(format!("bad quadrature range [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut prev = panels(&f, a, b, 1);
    let mut n = 2;
    while n <= 512 {
        let cur = panels(&f, a, b, n);
        if (cur - prev).abs() <= rel_tol * cur.abs().max(1e-300) {
            return Ok(cur);
        }
        prev = cur;
        n *= 2;
    }
    Err(Error::QuadratureFailure(format!(
        "no convergence on [{a}, {b}] after 512 panels (last change {:.3e})",
        prev
    )))
}
