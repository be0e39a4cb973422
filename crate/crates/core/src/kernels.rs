//! Special functions and the radial hyperbolic heat-kernel family.
//!
//! All kernel work uses the unnormalized radial family `h^d_t(rho)`:
//!
//! * odd `d`: `h^d_t = (-(1/sinh rho) d/drho)^{(d-1)/2} exp(-rho^2/2t)`,
//!   evaluated exactly by truncated-Taylor (jet) arithmetic;
//! * even `d`: a singular integral of the same iterated derivative against
//!   `sinh s / sqrt(cosh s - cosh rho)`, evaluated after the substitution
//!   `cosh s = cosh rho + v^2`, which removes the inverse-square-root
//!   singularity.
//!
//! Descending one step, `-(1/sinh rho) d/drho h^d_t = h^{d+2}_t`, holds
//! exactly for this family in both parities, so log-derivative ratios need
//! no normalization constants. To stay representable at large `rho`, the
//! Gaussian factor is split off: [`h_scaled`] returns
//! `h^d_t(rho) * exp(rho^2/2t)`.

use crate::error::{Error, Result};
use crate::quad;
use crate::taylor::Jet;

/// Tail cut for the even-dimension integral: the integrand is dropped once
/// `(s^2 - rho^2)/2t` exceeds this (integrand below `e^-40`).
const EVEN_TAIL_CUT: f64 = 40.0;

/// Below this radius the iterated-derivative polynomial is evaluated as a
/// series around zero (the point-jet recursion divides by `sinh rho`, which
/// loses precision for tiny `rho`).
const ZERO_BRANCH_RHO: f64 = 0.35;

// ---------------------------------------------------------------------------
// rate constant
// ---------------------------------------------------------------------------

/// Concentration rate constant `(2/c) log cosh(c sqrt(a))`.
///
/// Strictly increasing in `a`, and satisfies the curvature scaling
/// `kcal(a, c) = kcal(c^2 a, 1)/c`.
pub fn kcal(a: f64, c: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::param(format!("kcal: a must be >= 0, got {a}")));
    }
    if !(c > 0.0) {
        return Err(Error::param(format!("kcal: c must be > 0, got {c}")));
    }
    Ok(2.0 / c * ln_cosh(c * a.sqrt()))
}

/// `log cosh x` without overflow.
pub(crate) fn ln_cosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
}

// ---------------------------------------------------------------------------
// radial kernel family
// ---------------------------------------------------------------------------

/// Validated query for one radial-kernel evaluation.
#[derive(Clone, Copy, Debug)]
pub struct KernelQuery {
    pub d: u32,
    pub c: f64,
    pub t: f64,
    pub rho: f64,
}

impl KernelQuery {
    pub fn new(d: u32, c: f64, t: f64, rho: f64) -> Result<Self> {
        if d < 1 {
            return Err(Error::param("kernel query: d must be >= 1"));
        }
        if !(c > 0.0) {
            return Err(Error::param(format!("kernel query: c must be > 0, got {c}")));
        }
        if !(t > 0.0) {
            return Err(Error::param(format!("kernel query: t must be > 0, got {t}")));
        }
        if !(rho >= 0.0) {
            return Err(Error::param(format!("kernel query: rho must be >= 0, got {rho}")));
        }
        Ok(KernelQuery { d, c, t, rho })
    }

    /// Radial derivative of the log kernel, signed toward the pole.
    pub fn grad_log(&self) -> Result<f64> {
        grad_log_heat(self.d, self.c, self.t, self.rho)
    }
}

/// `Q_n(rho)` with `(-(1/sinh rho) d/drho)^n exp(-rho^2/2t) = Q_n(rho) exp(-rho^2/2t)`.
///
/// The recursion is `Q_0 = 1`, `Q_{n+1} = ((rho/t) Q_n - Q_n') / sinh rho`.
fn q_scaled(n: usize, t: f64, rho: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if rho < ZERO_BRANCH_RHO {
        q_zero_series(n, t).eval(rho)
    } else {
        q_away_from_zero(n, t, rho)
    }
}

/// `Q_n` for `rho` away from zero: closed forms for the first two orders
/// (the hot path of the kernel quadratures), point jets beyond.
fn q_away_from_zero(n: usize, t: f64, rho: f64) -> f64 {
    let sh = rho.sinh();
    match n {
        1 => rho / (t * sh),
        2 => (rho * rho.cosh() - sh) / (t * sh * sh * sh) + rho * rho / (t * t * sh * sh),
        _ => q_point(n, t, rho),
    }
}

fn q_point(n: usize, t: f64, rho: f64) -> f64 {
    let mut q = Jet::constant(1.0, n);
    for i in 0..n {
        let cur = n - i; // current order of q
        let dq = q.deriv();
        let num = Jet::var(rho, cur)
            .scale(1.0 / t)
            .mul(&q)
            .truncate(cur - 1)
            .sub(&dq);
        let den = Jet::sinh_at(rho, cur - 1);
        q = num.div(&den);
    }
    q.value()
}

/// Series of `Q_n` around zero. `Q_n` is even, the operator numerator is
/// odd and `sinh` is odd, so the shifted division stays exact; each
/// application costs two series orders.
fn q_zero_series(n: usize, t: f64) -> Jet {
    let order = 2 * n + 28;
    let mut q = Jet::constant(1.0, order);
    for _ in 0..n {
        let m = q.order();
        let dq = q.deriv();
        let num = Jet::var(0.0, m)
            .scale(1.0 / t)
            .mul(&q)
            .truncate(m - 1)
            .sub(&dq);
        let den = Jet::sinh_at(0.0, m - 1);
        q = num.div_shifted(&den);
    }
    q
}

/// Scaled kernel `h^d_t(rho) * exp(rho^2/2t)`; finite at any radius where
/// `cosh rho` is representable.
pub fn h_scaled(d: u32, t: f64, rho: f64) -> Result<f64> {
    if d < 1 {
        return Err(Error::param("h_scaled: d must be >= 1"));
    }
    if !(t > 0.0) {
        return Err(Error::param(format!("h_scaled: t must be > 0, got {t}")));
    }
    if !(rho >= 0.0) {
        return Err(Error::param(format!("h_scaled: rho must be >= 0, got {rho}")));
    }
    if d % 2 == 1 {
        Ok(q_scaled((d as usize - 1) / 2, t, rho))
    } else {
        if rho > 500.0 {
            return Err(Error::NumericFailure(format!(
                "h_scaled: cosh overflow risk at rho = {rho}"
            )));
        }
        let n = d as usize / 2;
        let smax = (rho * rho + 2.0 * t * EVEN_TAIL_CUT).sqrt();
        let ch = rho.cosh();
        let vmax = (smax.cosh() - ch).sqrt();
        let r2 = rho * rho;
        // the integration variable can dip below the zero-series switch
        // only when rho does; build that series once per call, not per node
        let zero_jet = if rho < ZERO_BRANCH_RHO {
            Some(q_zero_series(n, t))
        } else {
            None
        };
        let f = |v: f64| {
            let s = (ch + v * v).acosh();
            let q = match &zero_jet {
                Some(jet) if s < ZERO_BRANCH_RHO => jet.eval(s),
                _ => q_away_from_zero(n, t, s),
            };
            q * (-(s * s - r2) / (2.0 * t)).exp()
        };
        Ok(2.0 * quad::integrate(f, 0.0, vmax, 1e-9)?)
    }
}

/// Odd-dimension kernel `h^d_t(rho)`, exact up to rounding.
///
/// `h^1 = exp(-rho^2/2t)` and `h^3 = (rho/(t sinh rho)) exp(-rho^2/2t)`;
/// higher orders come from the iterated descent operator. At `rho = 0` the
/// analytic limit is used.
pub fn h_odd(d: u32, t: f64, rho: f64) -> Result<f64> {
    if d % 2 == 0 {
        return Err(Error::param(format!("h_odd: d must be odd, got {d}")));
    }
    Ok(h_scaled(d, t, rho)? * (-rho * rho / (2.0 * t)).exp())
}

/// Even-dimension kernel `h^d_t(rho)` by adaptive quadrature; relative
/// accuracy target `1e-8`.
pub fn h_even(d: u32, t: f64, rho: f64) -> Result<f64> {
    if d % 2 == 1 {
        return Err(Error::param(format!("h_even: d must be even, got {d}")));
    }
    Ok(h_scaled(d, t, rho)? * (-rho * rho / (2.0 * t)).exp())
}

/// Radial derivative of `log p^{d,c}_t` at distance `rho`, signed toward
/// the pole (positive values drift toward the pole).
///
/// For `c = 1` this is `sinh(rho) h^{d+2}_t(rho) / h^d_t(rho)`; general `c`
/// reduces to it through `p^{d,c}_t(rho) = p^{d,1}_{c^2 t}(c rho)`.
/// Normalization constants cancel in the ratio. The Gaussian factor of
/// both kernels is split off before the ratio, so the computation stays in
/// range at radii where the raw kernels would underflow.
pub fn grad_log_heat(d: u32, c: f64, t: f64, rho: f64) -> Result<f64> {
    let q = KernelQuery::new(d, c, t, rho)?;
    let t1 = q.c * q.c * q.t;
    let r1 = q.c * q.rho;
    if r1 >= 700.0 {
        return Err(Error::NumericFailure(format!(
            "grad_log_heat: sinh overflow at c*rho = {r1}"
        )));
    }
    let hd = h_scaled(q.d, t1, r1)?;
    let hd2 = h_scaled(q.d + 2, t1, r1)?;
    Ok(q.c * r1.sinh() * hd2 / hd)
}

// ---------------------------------------------------------------------------
// Gauss 2F1 and the first-passage Laplace transform
// ---------------------------------------------------------------------------

/// Gauss hypergeometric series `2F1(a, b; c; z)` for `|z| < 1`.
///
/// Term-ratio recursion with Kahan summation; aborts with a numeric-failure
/// signal if the terms grow past the `1e300` budget.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(z.abs() < 1.0) {
        return Err(Error::param(format!("hyp2f1: |z| must be < 1, got {z}")));
    }
    if c <= 0.0 && c == c.floor() {
        return Err(Error::param(format!(
            "hyp2f1: c must not be a nonpositive integer, got {c}"
        )));
    }
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut comp = 0.0f64;
    let mut small = 0u32;
    for n in 0..20_000u32 {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        if !term.is_finite() || term.abs() > 1e300 {
            return Err(Error::SeriesDivergence(format!(
                "hyp2f1({a}, {b}; {c}; {z}) term overflow at n = {n}"
            )));
        }
        let y = term - comp;
        let t2 = sum + y;
        comp = (t2 - sum) - y;
        sum = t2;
        if term.abs() <= 1e-16 * sum.abs().max(1e-290) {
            small += 1;
            if small >= 2 {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Err(Error::SeriesDivergence(format!(
        "hyp2f1({a}, {b}; {c}; {z}) did not converge"
    )))
}

/// `log 2F1(a, b; c; z)` for a series whose terms are all nonnegative
/// (`a, b >= 0`, `c > 0`, `0 <= z < 1`), with rescaling so arbitrarily large
/// sums stay representable.
fn ln_hyp2f1_pos(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    debug_assert!(a >= 0.0 && b >= 0.0 && c > 0.0 && (0.0..1.0).contains(&z));
    const RESCALE: f64 = 1e280;
    let mut term = 1.0f64;
    let mut sum = 0.0f64;
    let mut ln_offset = 0.0f64;
    let mut small = 0u32;
    for n in 0..200_000u32 {
        sum += term;
        if sum > RESCALE {
            sum /= RESCALE;
            term /= RESCALE;
            ln_offset += RESCALE.ln();
        }
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        if term <= 1e-17 * sum {
            small += 1;
            if small >= 2 {
                return Ok(ln_offset + sum.ln());
            }
        } else {
            small = 0;
        }
    }
    Err(Error::SeriesDivergence(format!(
        "positive 2F1 series ({a}, {b}; {c}; {z}) did not converge"
    )))
}

/// Parameters of one first-passage Laplace-transform query for the Jacobi
/// diffusion `dY = dB - nu tanh(Y) dt + q coth(Y) dt` started at `sqrt(x)`
/// with barrier `sqrt(a)`.
#[derive(Clone, Copy, Debug)]
pub struct JacobiQuery {
    pub nu: f64,
    pub q: f64,
    pub lambda: f64,
    /// start level, as the squared coordinate (the diffusion starts at `sqrt(x)`)
    pub x: f64,
    /// target level, squared (barrier at `sqrt(a)`)
    pub a: f64,
}

impl JacobiQuery {
    pub fn new(nu: f64, q: f64, lambda: f64, x: f64, a: f64) -> Result<Self> {
        if !(nu >= 0.0) || !(q >= 0.0) {
            return Err(Error::param(format!("jacobi query: need nu, q >= 0, got {nu}, {q}")));
        }
        if !(lambda > 0.0) {
            return Err(Error::param(format!("jacobi query: need lambda > 0, got {lambda}")));
        }
        if !(0.0 < x && x < a) {
            return Err(Error::param(format!("jacobi query: need 0 < x < a, got x = {x}, a = {a}")));
        }
        Ok(JacobiQuery { nu, q, lambda, x, a })
    }

    /// `mu = sqrt((nu - q)^2 + 2 lambda)`; always `>= |nu - q|`.
    pub fn mu(&self) -> f64 {
        ((self.nu - self.q).powi(2) + 2.0 * self.lambda).sqrt()
    }
}

/// Closed-form Laplace transform `E[exp(-lambda T)]` of the first time the
/// Jacobi diffusion reaches `sqrt(a)` from `sqrt(x)`.
///
/// The textbook expression is a ratio of
/// `cosh(sqrt(u))^{nu+mu-q} 2F1((q-nu-mu)/2, (q+1+nu-mu)/2; q+1/2; tanh^2 sqrt(u))`
/// at `u = x` and `u = a`. For large `nu` that series alternates with huge
/// terms, so each piece is evaluated through the Euler transformation
/// `2F1(a,b;c;z) = (1-z)^{c-a-b} 2F1(c-a, c-b; c; z)`, whose transformed
/// series has only nonnegative terms, and the pieces are combined in log
/// space. Values lie in `(0, 1]`, decrease in `lambda` and increase in `x`.
pub fn laplace_fpt(q: &JacobiQuery) -> Result<f64> {
    let mu = q.mu();
    let piece = |u: f64| -> Result<f64> {
        let s = u.sqrt();
        let z = s.tanh() * s.tanh();
        let f = ln_hyp2f1_pos(
            (q.q + 1.0 + q.nu + mu) / 2.0,
            (q.q + mu - q.nu) / 2.0,
            q.q + 0.5,
            z,
        )?;
        Ok((q.nu - q.q - mu) * ln_cosh(s) + f)
    };
    let v = (piece(q.x)? - piece(q.a)?).exp();
    Ok(v.min(1.0))
}

// ---------------------------------------------------------------------------
// squared-Bessel density
// ---------------------------------------------------------------------------

/// Density of the time-1 marginal of a squared Bessel process of dimension
/// `k` started at zero: `x -> (2 Gamma(k/2))^-1 (x/2)^{k/2-1} e^{-x/2}`.
pub fn sqbessel_density(k: f64, x: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::param(format!("sqbessel_density: k must be > 0, got {k}")));
    }
    if !(x > 0.0) {
        return Err(Error::param(format!("sqbessel_density: x must be > 0, got {x}")));
    }
    let ln = (k / 2.0 - 1.0) * (x / 2.0).ln() - x / 2.0 - ln_gamma(k / 2.0) - std::f64::consts::LN_2;
    Ok(ln.exp())
}

/// Lanczos approximation (g = 7, 9 terms), accurate to ~2e-10 relative.
pub(crate) fn ln_gamma(z: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

// ---------------------------------------------------------------------------
// Gaussian heat-kernel envelopes
// ---------------------------------------------------------------------------

/// Constants of the two-sided Gaussian envelope
/// `K^-1 p2 <= p <= K p1`, `p_i = t^{-d/2} (1+rho)^nu exp(-(k_i rho + rho^2/2t))`.
///
/// The constants are not pinned by theory; they are fitted on a grid and
/// the sandwich is asserted post-fit.
#[derive(Clone, Copy, Debug)]
pub struct EnvelopeParams {
    pub big_k: f64,
    pub k1: f64,
    pub k2: f64,
    /// exponent of the polynomial factor, `(d-1)/2`
    pub nu_exp: f64,
}

impl EnvelopeParams {
    pub fn new(big_k: f64, k1: f64, k2: f64, nu_exp: f64) -> Result<Self> {
        if !(big_k >= 1.0) {
            return Err(Error::param(format!("envelope: K must be >= 1, got {big_k}")));
        }
        if !(k1 > 0.0 && k2 >= k1) {
            return Err(Error::param(format!("envelope: need k2 >= k1 > 0, got {k1}, {k2}")));
        }
        Ok(EnvelopeParams { big_k, k1, k2, nu_exp })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvelopeSide {
    Lower,
    Upper,
}

/// One side of the envelope at `(t, rho)`: `K^{-1} p2` (lower, with `k2`)
/// or `K p1` (upper, with `k1`).
pub fn dm_envelope(side: EnvelopeSide, p: &EnvelopeParams, t: f64, rho: f64) -> f64 {
    let d = 2.0 * p.nu_exp + 1.0;
    let (pref, ki) = match side {
        EnvelopeSide::Upper => (p.big_k, p.k1),
        EnvelopeSide::Lower => (1.0 / p.big_k, p.k2),
    };
    pref * t.powf(-d / 2.0) * (1.0 + rho).powf(p.nu_exp) * (-(ki * rho + rho * rho / (2.0 * t))).exp()
}

/// Mass of the unnormalized kernel over `H^3`:
/// `integral of h^3_t(rho) 4 pi sinh^2(rho) drho`. Dividing `h^3_t` by this
/// gives the probability kernel.
pub fn h3_norm_const(t: f64) -> Result<f64> {
    // integrand (4 pi / t) rho sinh(rho) exp(-rho^2/2t); peak near rho = t
    let rho_max = t + (2.0 * t * 90.0).sqrt() + 1.0;
    let f = |rho: f64| rho * rho.sinh() * (-rho * rho / (2.0 * t)).exp();
    Ok(4.0 * std::f64::consts::PI / t * quad::integrate(f, 0.0, rho_max, 1e-12)?)
}

/// Normalized heat kernel on `H^3` (curvature parameter 1).
pub fn heat_kernel_h3(t: f64, rho: f64) -> Result<f64> {
    Ok(h_odd(3, t, rho)? / h3_norm_const(t)?)
}

/// Result of fitting the Gaussian envelope constants to the exact `H^3`
/// kernel on a `(t, rho)` grid.
#[derive(Clone, Debug)]
pub struct EnvelopeFit {
    pub params: EnvelopeParams,
    /// per-node log residuals `(t, rho, log p - log p_fit_shape)`
    pub residuals: Vec<(f64, f64, f64)>,
}

/// Fit `(K, k1, k2)` for `d = 3` on the given grids: regress the shape
/// residual on `rho` for the decay constant, then take the smallest `K`
/// that makes the sandwich hold on every node.
pub fn fit_envelope_h3(ts: &[f64], rhos: &[f64]) -> Result<EnvelopeFit> {
    if ts.is_empty() || rhos.is_empty() {
        return Err(Error::param("fit_envelope_h3: empty grid"));
    }
    let nu_exp = 1.0; // (d-1)/2 for d = 3
    let mut l_vals = Vec::with_capacity(ts.len() * rhos.len());
    for &t in ts {
        let ln_n = h3_norm_const(t)?.ln();
        for &rho in rhos {
            // L = ln p + (d/2) ln t - nu ln(1+rho) + rho^2/2t, with the
            // Gaussian factor cancelled against the scaled kernel
            let l = h_scaled(3, t, rho)?.ln() - ln_n + 1.5 * t.ln() - nu_exp * (1.0 + rho).ln();
            l_vals.push((t, rho, l));
        }
    }
    // least-squares slope of L on rho, pooled over t
    let n = l_vals.len() as f64;
    let sx: f64 = l_vals.iter().map(|v| v.1).sum();
    let sy: f64 = l_vals.iter().map(|v| v.2).sum();
    let sxx: f64 = l_vals.iter().map(|v| v.1 * v.1).sum();
    let sxy: f64 = l_vals.iter().map(|v| v.1 * v.2).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let k_hat = -slope;
    if !(k_hat > 0.0) {
        return Err(Error::NumericFailure(format!(
            "fit_envelope_h3: fitted decay constant not positive ({k_hat})"
        )));
    }
    let residuals: Vec<(f64, f64, f64)> =
        l_vals.iter().map(|&(t, rho, l)| (t, rho, l + k_hat * rho)).collect();
    let max_abs = residuals.iter().map(|r| r.2.abs()).fold(0.0f64, f64::max);
    let params = EnvelopeParams::new((max_abs + 1e-9).exp(), k_hat, k_hat, nu_exp)?;
    Ok(EnvelopeFit { params, residuals })
}
