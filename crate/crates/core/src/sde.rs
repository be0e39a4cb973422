//! Path simulation: square-root diffusions, first-passage detection with
//! exact change-of-measure reweighting, squared-Bessel time changes,
//! hyperbolic Brownian motion and Brownian bridges, and bidisk bridges.
//!
//! Every simulation is driven by one ChaCha stream keyed by the `seed`
//! argument, so a path is a pure function of its inputs. Batch drivers
//! derive per-path seeds with [`path_seed`], which keeps estimates
//! independent of the worker count. The number of draws a path consumes is
//! a pure function of the grid parameters, never of the sampled values, so
//! coupled comparisons can share noise by sharing a seed.

use crate::error::{Error, Result};
use crate::hypgeo::{
    dist1, exp_map_into, log_map_into, BidiskPoint, GeodesicKind, GeodesicSpec, HPoint,
};
use crate::kernels::{h_scaled, ln_cosh};
use crate::rng::path_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Derive the RNG key for one path of a batch from the master seed
/// (splitmix64 of the path index under the master key).
pub fn path_seed(master: u64, path: u64) -> u64 {
    let mut z = master.wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(path.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Discretization scheme tag carried by [`PathSample`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    FullTruncationEuler,
    GeodesicEuler,
    BesselTimeChange,
}

/// One discretized trajectory.
#[derive(Clone, Debug)]
pub struct PathSample<S> {
    pub times: Vec<f64>,
    pub values: Vec<S>,
    pub seed: u64,
    pub scheme: Scheme,
    /// nominal step
    pub step: f64,
}

// ---------------------------------------------------------------------------
// square-root diffusions
// ---------------------------------------------------------------------------

/// Parameters of the square-root diffusion
/// `dY = 2 sqrt(Y) dB - 2 nu sqrt(Y) (tanh(c sqrt(Y)) + alpha) dt + k dt`.
#[derive(Clone, Copy, Debug)]
pub struct CirSpec {
    pub nu: f64,
    pub alpha: f64,
    pub c: f64,
    pub k: f64,
    pub y0: f64,
}

impl CirSpec {
    pub fn new(nu: f64, alpha: f64, c: f64, k: f64, y0: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::param(format!("cir spec: c must be > 0, got {c}")));
        }
        if !(k > 0.0) {
            return Err(Error::param(format!("cir spec: k must be > 0, got {k}")));
        }
        if !(y0 >= 0.0) {
            return Err(Error::param(format!("cir spec: y0 must be >= 0, got {y0}")));
        }
        Ok(CirSpec { nu, alpha, c, k, y0 })
    }

    /// Drift at the clipped state (full-truncation evaluation point).
    #[inline]
    fn drift(&self, y_plus: f64) -> f64 {
        let sy = y_plus.sqrt();
        self.k - 2.0 * self.nu * sy * ((self.c * sy).tanh() + self.alpha)
    }
}

/// Uniform grid of nominal step `h` covering `[0, t_max]` exactly; the last
/// step may be shorter.
fn grid_times(t_max: f64, h: f64) -> Vec<f64> {
    let n = (t_max / h - 1e-9).ceil().max(1.0) as usize;
    let mut ts: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    ts.push(t_max);
    ts
}

/// Full-truncation Euler path of the square-root diffusion. Stored values
/// are clipped at zero; drift and diffusion are evaluated at the clipped
/// state. Deterministic given `(seed, h)`.
pub fn simulate_cir(spec: &CirSpec, t_max: f64, h: f64, seed: u64) -> Result<PathSample<f64>> {
    if !(h > 0.0 && t_max > 0.0) {
        return Err(Error::param("simulate_cir: need h > 0 and t_max > 0"));
    }
    let times = grid_times(t_max, h);
    let mut rng = path_rng(seed, 0);
    let mut values = Vec::with_capacity(times.len());
    let mut y = spec.y0;
    values.push(y.max(0.0));
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        let yp = y.max(0.0);
        let xi: f64 = rng.sample(StandardNormal);
        y = y + spec.drift(yp) * dt + 2.0 * yp.sqrt() * dt.sqrt() * xi;
        values.push(y.max(0.0));
    }
    Ok(PathSample {
        times,
        values,
        seed,
        scheme: Scheme::FullTruncationEuler,
        step: h,
    })
}

/// Outcome of one first-passage simulation. `weight` is the importance
/// weight of the path: 1 for plain sampling, the exact change-of-measure
/// weight for reweighted hits, and 0 for reweighted misses (a miss
/// contributes nothing to the estimator).
#[derive(Clone, Copy, Debug)]
pub struct HitRecord {
    pub hit: bool,
    pub time: Option<f64>,
    pub weight: f64,
}

/// First hitting of level `a` by the discrete path before the deadline.
/// Detection on the grid only; `a <= y0` hits at time zero.
pub fn first_passage(spec: &CirSpec, a: f64, deadline: f64, h: f64, seed: u64) -> Result<HitRecord> {
    if !(a > 0.0) {
        return Err(Error::param(format!("first_passage: barrier must be > 0, got {a}")));
    }
    if a <= spec.y0 {
        return Ok(HitRecord { hit: true, time: Some(0.0), weight: 1.0 });
    }
    if !(h > 0.0 && deadline > 0.0) {
        return Err(Error::param("first_passage: need h > 0 and deadline > 0"));
    }
    let mut rng = path_rng(seed, 0);
    let mut y = spec.y0;
    let mut t = 0.0;
    while t < deadline - 1e-12 {
        let dt = h.min(deadline - t);
        let yp = y.max(0.0);
        let xi: f64 = rng.sample(StandardNormal);
        y = y + spec.drift(yp) * dt + 2.0 * yp.sqrt() * dt.sqrt() * xi;
        t += dt;
        if y.max(0.0) >= a {
            return Ok(HitRecord { hit: true, time: Some(t), weight: 1.0 });
        }
    }
    Ok(HitRecord { hit: false, time: None, weight: 1.0 })
}

/// First passage by exact change of measure: the path runs under the
/// reversed (outward) drift, where reaching the barrier is the typical
/// event, and each hit carries the weight that makes the estimator
/// unbiased for the original inward-drift probability (up to grid bias).
///
/// With `nu~ = nu/c` and scaled barrier `a~ = c^2 a`, a hit at grid time
/// `T` contributes
/// `(e^{alpha sqrt(a~)} cosh sqrt(a~))^{-(2 nu~+1)} exp((nu~+1/2) c^2 I)`,
/// `I = Int_0^T (1 + 2 alpha tanh(c sqrt(Y)) + alpha^2
///               + (k-1) tanh(c sqrt(Y))/(c sqrt(Y))) dt`
/// accumulated by the trapezoid rule; the `(k-1)` term takes its analytic
/// limit `k-1` at `Y = 0`.
///
/// Requires `k >= 1` (the integrand must stay >= 1, so the path weight is
/// bounded below); nonzero `alpha` additionally requires `k = 1`, since
/// the mixed `alpha/sqrt(Y)` term is singular at zero on a discrete grid.
pub fn first_passage_girsanov(
    spec: &CirSpec,
    a: f64,
    deadline: f64,
    h: f64,
    seed: u64,
) -> Result<HitRecord> {
    if spec.k < 1.0 {
        return Err(Error::param(format!(
            "first_passage_girsanov: k must be >= 1, got {}",
            spec.k
        )));
    }
    if spec.alpha != 0.0 && spec.k != 1.0 {
        return Err(Error::param(
            "first_passage_girsanov: alpha != 0 supported only for k = 1",
        ));
    }
    if !(a > spec.y0) {
        return Err(Error::param(format!(
            "first_passage_girsanov: need a > y0, got a = {a}, y0 = {}",
            spec.y0
        )));
    }
    if !(h > 0.0 && deadline > 0.0) {
        return Err(Error::param("first_passage_girsanov: need h > 0 and deadline > 0"));
    }
    let nu_t = spec.nu / spec.c;
    let reversed = CirSpec { nu: -(spec.nu + spec.c), ..*spec };
    let integrand = |y_plus: f64| -> f64 {
        let sy = spec.c * y_plus.sqrt();
        let th = sy.tanh();
        let base = 1.0 + 2.0 * spec.alpha * th + spec.alpha * spec.alpha;
        if spec.k == 1.0 {
            base
        } else {
            // alpha = 0 on this branch; tanh(x)/x -> 1 as x -> 0
            let ratio = if sy > 1e-150 { th / sy } else { 1.0 };
            base + (spec.k - 1.0) * ratio
        }
    };
    let mut rng = path_rng(seed, 0);
    let mut y = spec.y0;
    let mut t = 0.0;
    let mut integ = 0.0;
    let mut g_prev = integrand(y.max(0.0));
    while t < deadline - 1e-12 {
        let dt = h.min(deadline - t);
        let yp = y.max(0.0);
        let xi: f64 = rng.sample(StandardNormal);
        y = y + reversed.drift(yp) * dt + 2.0 * yp.sqrt() * dt.sqrt() * xi;
        t += dt;
        let g_new = integrand(y.max(0.0));
        integ += 0.5 * (g_prev + g_new) * dt;
        g_prev = g_new;
        if y.max(0.0) >= a {
            let sa = spec.c * a.sqrt();
            let ln_w = -(2.0 * nu_t + 1.0) * (spec.alpha * sa + ln_cosh(sa))
                + (nu_t + 0.5) * spec.c * spec.c * integ;
            return Ok(HitRecord { hit: true, time: Some(t), weight: ln_w.exp() });
        }
    }
    Ok(HitRecord { hit: false, time: None, weight: 0.0 })
}

// ---------------------------------------------------------------------------
// squared-Bessel time change
// ---------------------------------------------------------------------------

/// Deterministic time change turning a squared Bessel path into the
/// linear-drift square-root diffusion
/// `dX = 2 sqrt(X) dB + 2 c_nu X dt + k dt`: `X_t = e^{2 c_nu t} B^k_{psi(t)}`.
#[derive(Clone, Copy, Debug)]
pub struct TimeChangeSpec {
    /// `tanh(sqrt(a)) / sqrt(a)`
    pub c_a: f64,
    /// `(nu + 1) c_a`
    pub c_nu: f64,
}

impl TimeChangeSpec {
    pub fn new(a: f64, nu: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::param(format!("time change: a must be > 0, got {a}")));
        }
        let sa = a.sqrt();
        let c_a = sa.tanh() / sa;
        Ok(TimeChangeSpec { c_a, c_nu: (nu + 1.0) * c_a })
    }

    /// `psi(t) = (1 - e^{-2 c_nu t}) / (2 c_nu)`, increasing to `1/(2 c_nu)`.
    pub fn psi(&self, t: f64) -> f64 {
        let k = 2.0 * self.c_nu;
        if k.abs() < 1e-12 {
            t
        } else {
            -(-k * t).exp_m1() / k
        }
    }
}

/// Linear-drift square-root path built by simulating a squared Bessel path
/// of dimension `k` from zero on the deformed grid `psi(t_i)` and scaling
/// each node by `e^{2 c_nu t_i}`.
pub fn cir_via_timechange(
    k: f64,
    a: f64,
    nu: f64,
    t_max: f64,
    h: f64,
    seed: u64,
) -> Result<PathSample<f64>> {
    if !(k > 0.0 && h > 0.0 && t_max > 0.0) {
        return Err(Error::param("cir_via_timechange: need k, h, t_max > 0"));
    }
    let tc = TimeChangeSpec::new(a, nu)?;
    let times = grid_times(t_max, h);
    let mut rng = path_rng(seed, 0);
    let mut values = Vec::with_capacity(times.len());
    let mut y = 0.0f64; // squared Bessel state on the deformed clock
    values.push(0.0);
    for w in times.windows(2) {
        let dpsi = tc.psi(w[1]) - tc.psi(w[0]);
        let yp = y.max(0.0);
        let xi: f64 = rng.sample(StandardNormal);
        y = y + k * dpsi + 2.0 * yp.sqrt() * dpsi.sqrt() * xi;
        values.push((2.0 * tc.c_nu * w[1]).exp() * y.max(0.0));
    }
    Ok(PathSample {
        times,
        values,
        seed,
        scheme: Scheme::BesselTimeChange,
        step: h,
    })
}

/// Direct Euler reference for the same linear-drift diffusion
/// `dX = 2 sqrt(X) dB + 2 c_nu X dt + k dt` from zero.
pub fn simulate_cir_linear(
    k: f64,
    c_nu: f64,
    t_max: f64,
    h: f64,
    seed: u64,
) -> Result<PathSample<f64>> {
    if !(k > 0.0 && h > 0.0 && t_max > 0.0) {
        return Err(Error::param("simulate_cir_linear: need k, h, t_max > 0"));
    }
    let times = grid_times(t_max, h);
    let mut rng = path_rng(seed, 0);
    let mut values = Vec::with_capacity(times.len());
    let mut y = 0.0f64;
    values.push(0.0);
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        let yp = y.max(0.0);
        let xi: f64 = rng.sample(StandardNormal);
        y = y + (k + 2.0 * c_nu * yp) * dt + 2.0 * yp.sqrt() * dt.sqrt() * xi;
        values.push(y.max(0.0));
    }
    Ok(PathSample {
        times,
        values,
        seed,
        scheme: Scheme::FullTruncationEuler,
        step: h,
    })
}

// ---------------------------------------------------------------------------
// hyperbolic Brownian motion
// ---------------------------------------------------------------------------

/// Geodesic-step Euler scheme for Brownian motion on `H^d_c` (generator
/// `Delta/2`): each step draws a standard normal vector `xi` and moves to
/// `exp_z(sqrt(h) F(z) xi)` with `F(z) = c z_d Id` the orthonormal
/// half-space frame. Weak order 1; exactly equivariant under
/// x-translations and dilations.
pub fn simulate_hyp_bm(
    c: f64,
    z0: &HPoint,
    t_max: f64,
    h: f64,
    seed: u64,
) -> Result<PathSample<HPoint>> {
    if !(c > 0.0 && h > 0.0 && t_max > 0.0) {
        return Err(Error::param("simulate_hyp_bm: need c, h, t_max > 0"));
    }
    let d = z0.dim();
    let times = grid_times(t_max, h);
    let mut rng = path_rng(seed, 0);
    let mut values = Vec::with_capacity(times.len());
    values.push(z0.clone());
    let mut state = z0.coords().to_vec();
    let mut delta = vec![0.0; d];
    let mut out = vec![0.0; d];
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        let frame = c * state[d - 1] * dt.sqrt();
        for dj in delta.iter_mut() {
            let xi: f64 = rng.sample(StandardNormal);
            *dj = frame * xi;
        }
        exp_map_into(&state, &delta, &mut out);
        state.copy_from_slice(&out);
        values.push(HPoint::new(state.clone())?);
    }
    Ok(PathSample {
        times,
        values,
        seed,
        scheme: Scheme::GeodesicEuler,
        step: h,
    })
}

// ---------------------------------------------------------------------------
// bridge drift table
// ---------------------------------------------------------------------------

/// Precomputed grid of the radial log-kernel derivative for the bridge
/// drift: bicubic interpolation in `(ln tau, ln rho)` of the smooth ratio
/// `R = (tau/rho) grad_log` over a log-spaced grid, with direct kernel
/// evaluation off-grid. Built in curvature-1 coordinates and shared
/// read-only across paths.
#[derive(Clone, Debug)]
pub struct DriftTable {
    d: u32,
    ln_tau0: f64,
    dln_tau: f64,
    n_tau: usize,
    ln_rho0: f64,
    dln_rho: f64,
    n_rho: usize,
    vals: Vec<f64>,
}

impl DriftTable {
    /// Build for dimension `d` covering `tau` in `tau_range` and `rho` in
    /// `rho_range` (curvature-1 units), padding two grid cells beyond each
    /// edge so the cubic stencil stays interior on the whole range.
    pub fn build(d: u32, tau_range: (f64, f64), rho_range: (f64, f64)) -> Result<Self> {
        let (tau_lo, tau_hi) = tau_range;
        let (rho_lo, rho_hi) = rho_range;
        if !(0.0 < tau_lo && tau_lo < tau_hi) || !(0.0 < rho_lo && rho_lo < rho_hi) {
            return Err(Error::param("drift table: bad ranges"));
        }
        let n_tau = 48usize;
        let n_rho = 96usize;
        let lt_lo = tau_lo.ln();
        let dln_tau = (tau_hi.ln() - lt_lo) / (n_tau as f64 - 5.0);
        let ln_tau0 = lt_lo - 2.0 * dln_tau;
        let lr_lo = rho_lo.ln();
        let dln_rho = (rho_hi.ln() - lr_lo) / (n_rho as f64 - 5.0);
        let ln_rho0 = lr_lo - 2.0 * dln_rho;
        let mut vals = vec![0.0; n_tau * n_rho];
        for (i, row) in vals.chunks_mut(n_rho).enumerate() {
            let tau = (ln_tau0 + i as f64 * dln_tau).exp();
            for (j, v) in row.iter_mut().enumerate() {
                let rho = (ln_rho0 + j as f64 * dln_rho).exp();
                *v = Self::ratio_direct(d, tau, rho)?;
            }
        }
        Ok(DriftTable { d, ln_tau0, dln_tau, n_tau, ln_rho0, dln_rho, n_rho, vals })
    }

    /// `(tau/rho) sinh(rho) H_{d+2}/H_d` from the scaled kernels.
    fn ratio_direct(d: u32, tau: f64, rho: f64) -> Result<f64> {
        let hd = h_scaled(d, tau, rho)?;
        let hd2 = h_scaled(d + 2, tau, rho)?;
        Ok(tau / rho * rho.sinh() * hd2 / hd)
    }

    fn catmull_rom(u: f64) -> [f64; 4] {
        let u2 = u * u;
        let u3 = u2 * u;
        [
            -0.5 * u + u2 - 0.5 * u3,
            1.0 - 2.5 * u2 + 1.5 * u3,
            0.5 * u + 2.0 * u2 - 1.5 * u3,
            -0.5 * u2 + 0.5 * u3,
        ]
    }

    /// Curvature-1 radial log-derivative `R * rho / tau`, interpolated;
    /// off-grid queries are evaluated directly.
    pub fn grad_log1(&self, tau: f64, rho: f64) -> Result<f64> {
        let x = (tau.ln() - self.ln_tau0) / self.dln_tau;
        let y = (rho.ln() - self.ln_rho0) / self.dln_rho;
        let i = x.floor() as isize;
        let j = y.floor() as isize;
        if i < 1 || i + 2 >= self.n_tau as isize || j < 1 || j + 2 >= self.n_rho as isize {
            return Ok(Self::ratio_direct(self.d, tau, rho)? * rho / tau);
        }
        let (i, j) = (i as usize, j as usize);
        let wx = Self::catmull_rom(x - i as f64);
        let wy = Self::catmull_rom(y - j as f64);
        let mut r = 0.0;
        for (a, wxa) in wx.iter().enumerate() {
            let row = (i + a - 1) * self.n_rho + (j - 1);
            let cell = &self.vals[row..row + 4];
            let mut acc = 0.0;
            for (b, wyb) in wy.iter().enumerate() {
                acc += wyb * cell[b];
            }
            r += wxa * acc;
        }
        Ok(r * rho / tau)
    }
}

// ---------------------------------------------------------------------------
// hyperbolic Brownian bridge
// ---------------------------------------------------------------------------

/// Specification of a time-1 Brownian bridge on `H^d_c` from `x` to
/// `exp_x(s v)`.
#[derive(Clone, Debug)]
pub struct BridgeSpec {
    pub x: HPoint,
    /// unit tangent (curvature-`c` metric) toward the far endpoint
    pub v: Vec<f64>,
    /// separation (curvature-`c` distance between the endpoints)
    pub s: f64,
    pub c: f64,
    /// nominal step
    pub step: f64,
    /// integration stops at `1 - end_cut`; the final node snaps to the
    /// endpoint
    pub end_cut: f64,
}

impl BridgeSpec {
    pub fn new(x: HPoint, v: Vec<f64>, s: f64, c: f64, step: f64, end_cut: f64) -> Result<Self> {
        let d = x.dim();
        if !(2..=3).contains(&d) {
            return Err(Error::param(format!("bridge: dimension must be 2 or 3, got {d}")));
        }
        if v.len() != d {
            return Err(Error::DimensionMismatch(v.len(), d));
        }
        if !(c > 0.0) || !(s >= 0.0) || !(step > 0.0) {
            return Err(Error::param("bridge: need c > 0, s >= 0, step > 0"));
        }
        let n = crate::hypgeo::tangent_norm(&x, &v, c);
        if !((n - 1.0).abs() < 1e-6) {
            return Err(Error::param(format!("bridge: v must be a unit tangent, norm {n}")));
        }
        if !(end_cut >= 10.0 * step && end_cut < 0.5) {
            return Err(Error::param(format!(
                "bridge: need 10*step <= end_cut < 0.5, got step {step}, end_cut {end_cut}"
            )));
        }
        Ok(BridgeSpec { x, v, s, c, step, end_cut })
    }

    /// The target point `y = exp_x(s v)`.
    pub fn endpoint(&self) -> Result<HPoint> {
        let sv: Vec<f64> = self.v.iter().map(|t| t * self.s).collect();
        crate::hypgeo::exp_map(&self.x, &sv)
    }

    /// The geodesic line through `x` in direction `v` (carries the
    /// normalizing isometry used by the walker).
    pub fn line(&self) -> Result<GeodesicSpec> {
        GeodesicSpec::line_from_direction(&self.x, &self.v)
    }

    /// The segment from `x` to the endpoint (length may be zero).
    pub fn segment(&self) -> Result<GeodesicSpec> {
        GeodesicSpec::segment_from_direction(&self.x, &self.v, self.c * self.s)
    }

    /// Drift table sized for this bridge: kernel times down to the end cut
    /// and radii up to `s + 10 sqrt(s)` in curvature-1 units.
    pub fn drift_table(&self) -> Result<DriftTable> {
        let c2 = self.c * self.c;
        let s1 = self.c * self.s;
        let rho_hi = (s1 + 10.0 * s1.sqrt()).max(4.0);
        DriftTable::build(
            self.x.dim() as u32,
            (c2 * self.end_cut * 0.9, c2 * 1.01),
            (1e-3, rho_hi),
        )
    }
}

/// Run the geodesic-Euler bridge scheme in the normalized frame (the
/// geodesic is the axis, `x` at height 1, the endpoint at height
/// `e^{c s}`), sending `(t, state)` to the visitor at every node, the
/// initial node and the final snap to the endpoint included.
fn walk_bridge<F>(
    spec: &BridgeSpec,
    table: &DriftTable,
    rng: &mut ChaCha8Rng,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(f64, &[f64]),
{
    let d = spec.x.dim();
    let c = spec.c;
    let s1 = c * spec.s;
    let mut state = vec![0.0; d];
    state[d - 1] = 1.0;
    let mut target = vec![0.0; d];
    target[d - 1] = s1.exp();
    let mut delta = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut out = vec![0.0; d];
    let mut t = 0.0;
    visit(t, &state);
    loop {
        let rem = 1.0 - t;
        if rem <= spec.end_cut + 1e-15 {
            break;
        }
        // the drift grows like rho/(1-t) toward the endpoint: shrink the
        // step so one step never covers more than 1/20 of the remaining time
        let mut dt = spec.step.min(rem / 20.0);
        if rem - dt < spec.end_cut {
            dt = rem - spec.end_cut;
        }
        let rho1 = dist1(&state, &target);
        let frame = c * state[d - 1] * dt.sqrt();
        for dj in delta.iter_mut() {
            let xi: f64 = rng.sample(StandardNormal);
            *dj = frame * xi;
        }
        if rho1 > 0.0 {
            // V = grad_log * (unit tangent toward the target); in
            // half-space components the c-unit direction is c^2 log/rho1
            let glh_c = c * table.grad_log1(c * c * rem, rho1)?;
            log_map_into(&state, &target, &mut dir);
            let scale = dt * glh_c * c / rho1;
            for (dj, di) in delta.iter_mut().zip(dir.iter()) {
                *dj += scale * di;
            }
        }
        exp_map_into(&state, &delta, &mut out);
        state.copy_from_slice(&out);
        t += dt;
        visit(t, &state);
    }
    visit(1.0, &target);
    Ok(())
}

/// Simulate one bridge path, returned in the original frame. Deterministic
/// per seed; the drift table from [`BridgeSpec::drift_table`] is shared
/// read-only across paths.
pub fn simulate_hyp_bridge(
    spec: &BridgeSpec,
    table: &DriftTable,
    seed: u64,
) -> Result<PathSample<HPoint>> {
    let geo = spec.line()?;
    let inv = geo.isometry_inv();
    let mut times = Vec::new();
    let mut values: Vec<HPoint> = Vec::new();
    let mut bad = false;
    let mut rng = path_rng(seed, 0);
    walk_bridge(spec, table, &mut rng, |t, st| {
        let mut buf = st.to_vec();
        inv.apply_raw(&mut buf);
        match HPoint::new(buf) {
            Ok(p) => {
                times.push(t);
                values.push(p);
            }
            Err(_) => bad = true,
        }
    })?;
    if bad {
        return Err(Error::NumericFailure("bridge path left the half-space".into()));
    }
    Ok(PathSample {
        times,
        values,
        seed,
        scheme: Scheme::GeodesicEuler,
        step: spec.step,
    })
}

/// Grid suprema of the tube statistics along one bridge path.
#[derive(Clone, Copy, Debug)]
pub struct TubeSups {
    /// sup of `dist(X_t, line)^2`
    pub f_line: f64,
    /// sup of `dist(X_t, segment)^2`
    pub f_segment: f64,
    /// sup of `dist(X_t, gamma(t))`, `gamma` the time-1 geodesic from `x`
    /// to the endpoint
    pub deviation: f64,
}

/// Stream one bridge path and record the suprema of the squared distance
/// to the geodesic line, to the segment, and of the deviation from the
/// moving point `gamma(t)`. The segment statistic dominates the line
/// statistic pathwise.
pub fn bridge_tube_sups(spec: &BridgeSpec, table: &DriftTable, seed: u64) -> Result<TubeSups> {
    let d = spec.x.dim();
    let c = spec.c;
    let s1 = c * spec.s;
    let mut sup = TubeSups { f_line: 0.0, f_segment: 0.0, deviation: 0.0 };
    let mut near = vec![0.0; d];
    let mut rng = path_rng(seed, 0);
    walk_bridge(spec, table, &mut rng, |t, st| {
        let r = st[..d - 1].iter().map(|x| x * x).sum::<f64>().sqrt();
        let zd = st[d - 1];
        let h1 = (r / zd).asinh();
        let g_line = h1 / c;
        sup.f_line = sup.f_line.max(g_line * g_line);
        let u1 = 0.5 * (r * r + zd * zd).ln();
        let g_seg = if (0.0..=s1).contains(&u1) {
            g_line
        } else {
            near[d - 1] = u1.clamp(0.0, s1).exp();
            dist1(st, &near) / c
        };
        sup.f_segment = sup.f_segment.max(g_seg * g_seg);
        near[d - 1] = (s1 * t).exp();
        let dev = dist1(st, &near) / c;
        sup.deviation = sup.deviation.max(dev);
    })?;
    Ok(sup)
}

/// Grid supremum of the squared distance to the geodesic (line or segment
/// through the bridge endpoints) along one path.
pub fn bridge_sup_f(
    spec: &BridgeSpec,
    table: &DriftTable,
    seed: u64,
    kind: GeodesicKind,
) -> Result<f64> {
    let sups = bridge_tube_sups(spec, table, seed)?;
    Ok(match kind {
        GeodesicKind::Line => sups.f_line,
        GeodesicKind::Segment => sups.f_segment,
    })
}

// ---------------------------------------------------------------------------
// bidisk bridge
// ---------------------------------------------------------------------------

/// Runner for the standard bidisk bridge between `(0,1,0,1)` and
/// `(0,e^s,0,e^s)`: both factors are independent `H^2` (curvature 1)
/// bridges from `(0,1)` to `(0,e^s)` — the product heat kernel factorizes,
/// so the product of the factor bridges is the bridge of the product.
/// Holds the factor drift table so path batches share it.
#[derive(Clone, Debug)]
pub struct BidiskBridge {
    spec: BridgeSpec,
    table: DriftTable,
    s: f64,
}

impl BidiskBridge {
    pub fn new(s: f64, h: f64) -> Result<Self> {
        let end_cut = (10.0 * h).max(1e-3);
        let spec = BridgeSpec::new(HPoint::base(2), vec![0.0, 1.0], s, 1.0, h, end_cut)?;
        let table = spec.drift_table()?;
        Ok(BidiskBridge { spec, table, s })
    }

    /// Simulate one path; the factors use sub-streams 1 and 2 of the seed.
    pub fn simulate(&self, seed: u64) -> Result<PathSample<BidiskPoint>> {
        let mut first: Vec<(f64, [f64; 2])> = Vec::new();
        let mut rng1 = path_rng(seed, 1);
        walk_bridge(&self.spec, &self.table, &mut rng1, |t, st| {
            first.push((t, [st[0], st[1]]))
        })?;
        let mut values = Vec::with_capacity(first.len());
        let mut times = Vec::with_capacity(first.len());
        let mut idx = 0usize;
        let mut bad = false;
        let mut rng2 = path_rng(seed, 2);
        walk_bridge(&self.spec, &self.table, &mut rng2, |t, st| {
            let (t1, c1) = first[idx];
            debug_assert_eq!(t1, t);
            idx += 1;
            match (HPoint::new(vec![c1[0], c1[1]]), HPoint::new(vec![st[0], st[1]])) {
                (Ok(p1), Ok(p2)) => {
                    times.push(t);
                    values.push(BidiskPoint { p1, p2 });
                }
                _ => bad = true,
            }
        })?;
        if bad {
            return Err(Error::NumericFailure("bidisk state left the half-space".into()));
        }
        Ok(PathSample {
            times,
            values,
            seed,
            scheme: Scheme::GeodesicEuler,
            step: self.spec.step,
        })
    }

    /// Stream one path and record the supremum over the grid of the
    /// distance to the diagonal geodesic together with the factor
    /// deviations.
    pub fn sup_dist(&self, seed: u64) -> Result<BidiskSups> {
        let mut first: Vec<[f64; 2]> = Vec::new();
        let mut rng1 = path_rng(seed, 1);
        walk_bridge(&self.spec, &self.table, &mut rng1, |_, st| first.push([st[0], st[1]]))?;
        let mut sups = BidiskSups { dist_diag: 0.0, dev1: 0.0, dev2: 0.0 };
        let mut idx = 0usize;
        let mut rng2 = path_rng(seed, 2);
        let s = self.s;
        walk_bridge(&self.spec, &self.table, &mut rng2, |t, st| {
            let c1 = first[idx];
            idx += 1;
            let bp = BidiskPoint {
                p1: HPoint::from_raw(vec![c1[0], c1[1].max(f64::MIN_POSITIVE)]),
                p2: HPoint::from_raw(vec![st[0], st[1].max(f64::MIN_POSITIVE)]),
            };
            sups.dist_diag = sups
                .dist_diag
                .max(crate::hypgeo::bidisk_dist_to_diag_geodesic(&bp));
            let moving = [0.0, (s * t).exp()];
            sups.dev1 = sups.dev1.max(dist1(&c1, &moving));
            sups.dev2 = sups.dev2.max(dist1(st, &moving));
        })?;
        Ok(sups)
    }
}

/// Per-path suprema for the bidisk counterexample statistics.
#[derive(Clone, Copy, Debug)]
pub struct BidiskSups {
    /// sup of the product-metric distance to the diagonal geodesic
    /// `{(0, e^t, 0, e^t)}`
    pub dist_diag: f64,
    /// factor deviation suprema `sup_t rho_i(X^i_t, (0, e^{s t}))`
    pub dev1: f64,
    pub dev2: f64,
}

/// One-shot convenience: simulate a single bidisk bridge path. Batches
/// should construct a [`BidiskBridge`] once and reuse it, the drift table
/// build dominates a single path.
pub fn simulate_bidisk_bridge(s: f64, h: f64, seed: u64) -> Result<PathSample<BidiskPoint>> {
    BidiskBridge::new(s, h)?.simulate(seed)
}

/// One-shot convenience for [`BidiskBridge::sup_dist`].
pub fn bidisk_sup_dist(s: f64, h: f64, seed: u64) -> Result<BidiskSups> {
    BidiskBridge::new(s, h)?.sup_dist(seed)
}

// ---------------------------------------------------------------------------
// pathwise comparison
// ---------------------------------------------------------------------------

/// Pathwise comparison of the singular-drift diffusion with a shifted
/// reflected one: with `nu' = nu - q/(alpha0 tanh alpha0)`, the
/// square-root coordinates satisfy
/// `sqrt(Y^{nu, k=2q+1}_t) <= sqrt(Y^{nu', k=1}_t) + alpha0` under shared
/// driving noise (the `k = 1` path carries the local time at zero of the
/// reflected line diffusion). Returns whether the ordering holds on the
/// whole grid with one-step tolerance `2 sqrt(h)`.
pub fn comparison_check(
    nu: f64,
    q: f64,
    alpha0: f64,
    t_max: f64,
    h: f64,
    seed: u64,
) -> Result<bool> {
    if !(alpha0 > 0.0) {
        return Err(Error::param(format!("comparison_check: alpha0 must be > 0, got {alpha0}")));
    }
    if !(q >= 0.0) {
        return Err(Error::param(format!("comparison_check: q must be >= 0, got {q}")));
    }
    let nu_shift = nu - q / (alpha0 * alpha0.tanh());
    if !(nu_shift > 0.0) {
        return Err(Error::param(format!(
            "comparison_check: shifted drift parameter must be positive, got {nu_shift}"
        )));
    }
    let upper = simulate_cir(&CirSpec::new(nu, 0.0, 1.0, 2.0 * q + 1.0, 0.0)?, t_max, h, seed)?;
    let reflected = simulate_cir(&CirSpec::new(nu_shift, 0.0, 1.0, 1.0, 0.0)?, t_max, h, seed)?;
    let tol = alpha0 + 2.0 * h.sqrt();
    Ok(upper
        .values
        .iter()
        .zip(&reflected.values)
        .all(|(a, b)| a.sqrt() <= b.sqrt() + tol))
}
