//! Half-space-model geometry of the real hyperbolic space `H^d` with
//! curvature parameter `c` (sectional curvature `-c^2`), plus the bidisk
//! `H^2 x H^2` product metric.
//!
//! Points live in `{ z in R^d : z_d > 0 }` with metric `(c z_d)^{-2} dz^2`.
//! Distances scale like `1/c` against the unit-curvature model while
//! geodesics, exponential and logarithm maps are the same for every `c`
//! (constant conformal scaling leaves the geodesic equation unchanged), so
//! only distance-valued functions take `c`.
//!
//! Geodesics are vertical rays and semicircles orthogonal to the boundary.
//! A [`GeodesicSpec`] stores an isometry built from x-translations,
//! dilations and the unit inversion that maps the geodesic onto the
//! `z_d`-axis exactly; tube coordinates, distances to lines and segments
//! and the Laplacian of the squared distance are all evaluated in that
//! normalized frame.

use crate::error::{Error, Result};

const AXIS_RESIDUAL_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// points and raw coordinate helpers
// ---------------------------------------------------------------------------

/// A point of `H^d` in half-space coordinates; the last coordinate is > 0.
#[derive(Clone, Debug, PartialEq)]
pub struct HPoint {
    coords: Vec<f64>,
}

impl HPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidPoint(format!(
                "need dimension >= 2, got {}",
                coords.len()
            )));
        }
        let z = coords[coords.len() - 1];
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::InvalidPoint(format!("last coordinate must be > 0, got {z}")));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        Ok(HPoint { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Last (height) coordinate.
    pub fn height(&self) -> f64 {
        self.coords[self.coords.len() - 1]
    }

    /// Base point `(0, ..., 0, 1)` of dimension `d`.
    pub fn base(d: usize) -> Self {
        let mut coords = vec![0.0; d];
        coords[d - 1] = 1.0;
        HPoint { coords }
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        debug_assert!(coords[coords.len() - 1] > 0.0);
        HPoint { coords }
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `acosh(1 + u)` computed stably for small `u >= 0`.
fn acosh1p(u: f64) -> f64 {
    (u + (u * (u + 2.0)).sqrt()).ln_1p()
}

/// Curvature-1 distance between half-space points given as raw slices.
pub(crate) fn dist1(p: &[f64], q: &[f64]) -> f64 {
    let zp = p[p.len() - 1];
    let zq = q[q.len() - 1];
    acosh1p(sq_dist(p, q) / (2.0 * zp * zq))
}

/// Riemannian distance in `H^d` with curvature parameter `c`.
pub fn distance(p: &HPoint, q: &HPoint, c: f64) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(p.dim(), q.dim()));
    }
    if !(c > 0.0) {
        return Err(Error::param(format!("distance: c must be > 0, got {c}")));
    }
    Ok(dist1(p.coords(), q.coords()) / c)
}

/// Riemannian inner product of tangent vectors at `p`.
pub fn inner(p: &HPoint, u: &[f64], v: &[f64], c: f64) -> f64 {
    let s = c * p.height();
    u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (s * s)
}

/// Riemannian norm of a tangent vector at `p`.
pub fn tangent_norm(p: &HPoint, v: &[f64], c: f64) -> f64 {
    sq_norm(v).sqrt() / (c * p.height())
}

// ---------------------------------------------------------------------------
// exponential and logarithm maps (curvature-independent)
// ---------------------------------------------------------------------------

/// Geodesic exponential: the point reached from `p` with initial tangent
/// `v` (half-space components) after unit time. The map is the same for
/// every curvature parameter; the `g_c`-distance travelled is the
/// `g_c`-norm of `v`.
pub fn exp_map(p: &HPoint, v: &[f64]) -> Result<HPoint> {
    if v.len() != p.dim() {
        return Err(Error::DimensionMismatch(v.len(), p.dim()));
    }
    let mut out = vec![0.0; p.dim()];
    exp_map_into(p.coords(), v, &mut out);
    HPoint::new(out)
}

pub(crate) fn exp_map_into(p: &[f64], v: &[f64], out: &mut [f64]) {
    let d = p.len();
    let zp = p[d - 1];
    let vnorm = sq_norm(v).sqrt();
    if vnorm == 0.0 {
        out.copy_from_slice(p);
        return;
    }
    let s = vnorm / zp; // curvature-1 arclength
    let vz = v[d - 1];
    let w = sq_norm(&v[..d - 1]).sqrt();
    if w <= 1e-13 * vnorm {
        // vertical geodesic
        out[..d - 1].copy_from_slice(&p[..d - 1]);
        out[d - 1] = zp * (s.copysign(vz)).exp();
        return;
    }
    // semicircle in the plane spanned by the horizontal direction and e_d
    let xc = zp * vz / w;
    let r = xc.hypot(zp);
    let t0 = if xc > 0.0 {
        (zp / (r + xc)).ln()
    } else {
        ((r - xc) / zp).ln()
    };
    let t1 = t0 + s;
    let xi1 = xc + r * t1.tanh();
    let z1 = r / t1.cosh();
    for i in 0..d - 1 {
        out[i] = p[i] + xi1 * v[i] / w;
    }
    out[d - 1] = z1.max(f64::MIN_POSITIVE);
}

/// Inverse of [`exp_map`]: the tangent vector at `p` pointing to `q`, with
/// `g_c`-norm equal to the `g_c`-distance for every `c`. Returns the zero
/// vector when `q == p`.
pub fn log_map(p: &HPoint, q: &HPoint) -> Result<Vec<f64>> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(p.dim(), q.dim()));
    }
    let mut out = vec![0.0; p.dim()];
    log_map_into(p.coords(), q.coords(), &mut out);
    Ok(out)
}

pub(crate) fn log_map_into(p: &[f64], q: &[f64], out: &mut [f64]) {
    let d = p.len();
    let zp = p[d - 1];
    let zq = q[d - 1];
    let mut w2 = 0.0;
    for i in 0..d - 1 {
        let dx = q[i] - p[i];
        out[i] = dx;
        w2 += dx * dx;
    }
    let w = w2.sqrt();
    let scale = zp.max(zq).max(w);
    if w <= 1e-15 * scale {
        // (nearly) vertical: tangent along e_d with g_1-norm |ln(zq/zp)|
        for x in out[..d - 1].iter_mut() {
            *x = 0.0;
        }
        out[d - 1] = zp * (zq / zp).ln();
        return;
    }
    let xc = (w2 + zq * zq - zp * zp) / (2.0 * w);
    let r = xc.hypot(zp);
    let t0 = if xc > 0.0 {
        (zp / (r + xc)).ln()
    } else {
        ((r - xc) / zp).ln()
    };
    let delta = (w2 + zp * zp - zq * zq) / (2.0 * w); // = w - xc, no cancellation
    let t1 = if delta > 0.0 {
        ((r + delta) / zq).ln()
    } else {
        (zq / (r - delta)).ln()
    };
    let s = t1 - t0;
    // unit-speed tangent at p: ((zp^2/r) xhat, zp * xc / r)
    let ax = s * zp * zp / (r * w); // multiplies the raw horizontal difference
    for x in out[..d - 1].iter_mut() {
        *x *= ax;
    }
    out[d - 1] = s * zp * xc / r;
}

// ---------------------------------------------------------------------------
// isometries of the half-space model
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Move {
    /// translate the boundary coordinates by the stored vector
    Translate(Vec<f64>),
    /// dilate about the origin by a positive factor
    Scale(f64),
    /// unit-sphere inversion `z -> z / |z|^2`
    Invert,
}

/// A hyperbolic isometry assembled from x-translations, dilations and the
/// unit inversion. Exactly invertible move by move.
#[derive(Clone, Debug)]
pub struct Isometry {
    dim: usize,
    moves: Vec<Move>,
}

impl Isometry {
    pub fn identity(dim: usize) -> Self {
        Isometry { dim, moves: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, z: &HPoint) -> Result<HPoint> {
        if z.dim() != self.dim {
            return Err(Error::DimensionMismatch(z.dim(), self.dim));
        }
        let mut buf = z.coords().to_vec();
        self.apply_raw(&mut buf);
        HPoint::new(buf)
    }

    pub(crate) fn apply_raw(&self, z: &mut [f64]) {
        let d = self.dim;
        for mv in &self.moves {
            match mv {
                Move::Translate(b) => {
                    for i in 0..d - 1 {
                        z[i] += b[i];
                    }
                }
                Move::Scale(l) => {
                    for x in z.iter_mut() {
                        *x *= l;
                    }
                }
                Move::Invert => {
                    let n2 = sq_norm(z);
                    for x in z.iter_mut() {
                        *x /= n2;
                    }
                }
            }
        }
    }

    pub fn inverse(&self) -> Isometry {
        let moves = self
            .moves
            .iter()
            .rev()
            .map(|mv| match mv {
                Move::Translate(b) => Move::Translate(b.iter().map(|x| -x).collect()),
                Move::Scale(l) => Move::Scale(1.0 / l),
                Move::Invert => Move::Invert,
            })
            .collect();
        Isometry { dim: self.dim, moves }
    }

    fn push(&mut self, mv: Move) {
        self.moves.push(mv);
    }
}

// ---------------------------------------------------------------------------
// geodesics
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeodesicKind {
    Line,
    Segment,
}

/// An oriented geodesic line or segment, stored as the isometry that maps
/// it onto the `z_d`-axis with the base point at height 1 and the forward
/// direction pointing up. For segments, `s1` is the curvature-1 arclength,
/// so the segment covers axis heights `[1, e^{s1}]`.
#[derive(Clone, Debug)]
pub struct GeodesicSpec {
    kind: GeodesicKind,
    iso: Isometry,
    iso_inv: Isometry,
    s1: f64,
    dim: usize,
}

impl GeodesicSpec {
    /// The `z_d`-axis itself, oriented upward, based at height 1.
    pub fn axis(dim: usize) -> Self {
        GeodesicSpec {
            kind: GeodesicKind::Line,
            iso: Isometry::identity(dim),
            iso_inv: Isometry::identity(dim),
            s1: 0.0,
            dim,
        }
    }

    /// Oriented line through `p` with tangent `v` (any nonzero half-space
    /// vector).
    pub fn line_from_direction(p: &HPoint, v: &[f64]) -> Result<Self> {
        Self::build(p, v, GeodesicKind::Line, 0.0)
    }

    /// Oriented line through two distinct points.
    pub fn line_through(p: &HPoint, q: &HPoint) -> Result<Self> {
        let v = log_map(p, q)?;
        if sq_norm(&v) == 0.0 {
            return Err(Error::param("geodesic through equal points is undefined"));
        }
        Self::build(p, &v, GeodesicKind::Line, 0.0)
    }

    /// Geodesic segment from `p` to `q` (distinct points).
    pub fn segment(p: &HPoint, q: &HPoint) -> Result<Self> {
        let v = log_map(p, q)?;
        if sq_norm(&v) == 0.0 {
            return Err(Error::param("segment endpoints must be distinct"));
        }
        let s1 = dist1(p.coords(), q.coords());
        Self::build(p, &v, GeodesicKind::Segment, s1)
    }

    /// Segment of curvature-1 arclength `s1 >= 0` from `p` in direction
    /// `v`; admits zero length (a single point).
    pub fn segment_from_direction(p: &HPoint, v: &[f64], s1: f64) -> Result<Self> {
        if !(s1 >= 0.0) {
            return Err(Error::param(format!("segment length must be >= 0, got {s1}")));
        }
        Self::build(p, v, GeodesicKind::Segment, s1)
    }

    fn build(p: &HPoint, v: &[f64], kind: GeodesicKind, s1: f64) -> Result<Self> {
        let d = p.dim();
        if v.len() != d {
            return Err(Error::DimensionMismatch(v.len(), d));
        }
        let vn = sq_norm(v).sqrt();
        if !(vn > 0.0) {
            return Err(Error::param("geodesic direction must be nonzero"));
        }
        let mut iso = Isometry::identity(d);
        // p to (0, ..., 0, 1)
        iso.push(Move::Translate(p.coords()[..d - 1].iter().map(|x| -x).collect()));
        iso.push(Move::Scale(1.0 / p.height()));
        // direction in the new frame (translations fix tangents, dilations scale them)
        let u: Vec<f64> = v.iter().map(|x| x / vn).collect();
        let w = sq_norm(&u[..d - 1]).sqrt();
        if w <= 1e-13 {
            if u[d - 1] < 0.0 {
                // flip the axis; (0,...,0,1) is fixed by the inversion
                iso.push(Move::Invert);
            }
        } else {
            let xc = u[d - 1] / w;
            let r = xc.hypot(1.0);
            // ideal endpoints on the boundary, along the horizontal direction
            let fwd = xc + r;
            let bwd = xc - r;
            // send forward endpoint to infinity, backward endpoint to 0
            let mut t1 = vec![0.0; d - 1];
            for i in 0..d - 1 {
                t1[i] = -fwd * u[i] / w;
            }
            iso.push(Move::Translate(t1));
            iso.push(Move::Invert);
            let shift = 1.0 / (fwd - bwd); // image of the backward endpoint is -shift * xhat
            let mut t2 = vec![0.0; d - 1];
            for i in 0..d - 1 {
                t2[i] = shift * u[i] / w;
            }
            iso.push(Move::Translate(t2));
            // rescale so p sits at height 1
            let mut probe = p.coords().to_vec();
            iso.apply_raw(&mut probe);
            iso.push(Move::Scale(1.0 / probe[d - 1]));
        }
        let iso_inv = iso.inverse();
        let spec = GeodesicSpec { kind, iso, iso_inv, s1, dim: d };
        spec.check_residual(p, v)?;
        Ok(spec)
    }

    fn check_residual(&self, p: &HPoint, v: &[f64]) -> Result<()> {
        let d = self.dim;
        let probe_far = exp_map(p, &v.iter().map(|x| x * 0.5 / tangent_norm(p, v, 1.0)).collect::<Vec<_>>())?;
        for pt in [p, &probe_far] {
            let mut buf = pt.coords().to_vec();
            self.iso.apply_raw(&mut buf);
            let off = sq_norm(&buf[..d - 1]).sqrt() / buf[d - 1].max(1e-300);
            if off > AXIS_RESIDUAL_TOL * 100.0 {
                return Err(Error::NumericFailure(format!(
                    "geodesic normalization residual {off:.2e} too large"
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> GeodesicKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Curvature-1 arclength of the segment (0 for lines).
    pub fn arclength1(&self) -> f64 {
        self.s1
    }

    pub fn isometry(&self) -> &Isometry {
        &self.iso
    }

    pub fn isometry_inv(&self) -> &Isometry {
        &self.iso_inv
    }

    /// The point `phi(u)` at curvature-1 arclength `u` along the axis-form
    /// geodesic, mapped back to the original frame.
    pub fn point_at(&self, u: f64) -> Result<HPoint> {
        let mut buf = vec![0.0; self.dim];
        buf[self.dim - 1] = u.exp();
        self.iso_inv.apply_raw(&mut buf);
        HPoint::new(buf)
    }
}

// ---------------------------------------------------------------------------
// Fermi coordinates and distance to a geodesic
// ---------------------------------------------------------------------------

/// Tube coordinates adapted to a geodesic: arclength `u` along the axis,
/// distance `h` to it, and the transverse direction `theta` (unit vector in
/// the boundary coordinates of the normalized frame). Both `u` and `h` are
/// curvature-1 quantities; scale by `1/c` for the `H^d_c` values.
#[derive(Clone, Debug)]
pub struct FermiCoords {
    pub u: f64,
    pub h: f64,
    pub theta: Vec<f64>,
}

/// Fermi coordinates of `z` with respect to the geodesic. On the axis the
/// transverse direction degenerates; the first coordinate vector is
/// returned as the canonical choice.
pub fn fermi(z: &HPoint, geo: &GeodesicSpec) -> Result<FermiCoords> {
    if z.dim() != geo.dim() {
        return Err(Error::DimensionMismatch(z.dim(), geo.dim()));
    }
    let d = z.dim();
    let mut buf = z.coords().to_vec();
    geo.iso.apply_raw(&mut buf);
    let r = sq_norm(&buf[..d - 1]).sqrt();
    let zd = buf[d - 1];
    let u = 0.5 * (r * r + zd * zd).ln();
    let h = (r / zd).asinh();
    let theta = if r > 0.0 {
        buf[..d - 1].iter().map(|x| x / r).collect()
    } else {
        let mut e1 = vec![0.0; d - 1];
        e1[0] = 1.0;
        e1
    };
    Ok(FermiCoords { u, h, theta })
}

/// Reconstruct the point with the given Fermi coordinates.
pub fn fermi_inverse(fc: &FermiCoords, geo: &GeodesicSpec) -> Result<HPoint> {
    let d = geo.dim();
    if fc.theta.len() != d - 1 {
        return Err(Error::DimensionMismatch(fc.theta.len(), d - 1));
    }
    let eu = fc.u.exp();
    let th = fc.h.tanh();
    let sech = 1.0 / fc.h.cosh();
    let mut buf = vec![0.0; d];
    for i in 0..d - 1 {
        buf[i] = eu * th * fc.theta[i];
    }
    buf[d - 1] = eu * sech;
    geo.iso_inv.apply_raw(&mut buf);
    HPoint::new(buf)
}

/// Distance from `z` to the geodesic (line or segment) in `H^d_c`, together
/// with the outward unit tangent (the direction of increasing distance).
///
/// For lines the distance is the Fermi `h`; for segments the nearest point
/// is the axis point at clamped arclength, which is exact by geodesic
/// convexity of the distance. At distance zero the outward direction
/// degenerates and the first frame vector is returned.
pub fn dist_to_geodesic(z: &HPoint, geo: &GeodesicSpec, c: f64) -> Result<(f64, Vec<f64>)> {
    if z.dim() != geo.dim() {
        return Err(Error::DimensionMismatch(z.dim(), geo.dim()));
    }
    if !(c > 0.0) {
        return Err(Error::param(format!("dist_to_geodesic: c must be > 0, got {c}")));
    }
    let d = z.dim();
    let mut buf = z.coords().to_vec();
    geo.iso.apply_raw(&mut buf);
    let r = sq_norm(&buf[..d - 1]).sqrt();
    let zd = buf[d - 1];
    let u = 0.5 * (r * r + zd * zd).ln();
    let u_near = match geo.kind() {
        GeodesicKind::Line => u,
        GeodesicKind::Segment => u.clamp(0.0, geo.arclength1()),
    };
    let mut near = vec![0.0; d];
    near[d - 1] = u_near.exp();
    let g1 = match geo.kind() {
        GeodesicKind::Line => (r / zd).asinh(),
        GeodesicKind::Segment => dist1(&buf, &near),
    };
    let g = g1 / c;
    if g1 < 1e-14 {
        // on the geodesic: canonical transverse direction, unit in g_c
        let mut dir = vec![0.0; d];
        dir[0] = c * z.height();
        return Ok((0.0, dir));
    }
    geo.iso_inv.apply_raw(&mut near);
    let mut dir = vec![0.0; d];
    log_map_into(z.coords(), &near, &mut dir);
    for x in dir.iter_mut() {
        *x = -*x / g;
    }
    Ok((g, dir))
}

/// Laplace-Beltrami operator of `f = dist(., line)^2` in `H^d_c`, through
/// the closed form `Delta f = 2 + 2 g1 (tanh g1 + (d-2) coth g1)` with `g1`
/// the curvature-1 distance to the line; the value is the same for every
/// `c` when expressed through `g1 = c g`. Near the line the limit is
/// `2(d-1)`, the flat Laplacian of a squared distance in the `d-1`
/// transverse directions. Verified against a finite-difference metric
/// Laplacian in the tests.
pub fn laplacian_f(z: &HPoint, geo: &GeodesicSpec, c: f64) -> Result<f64> {
    if geo.kind() != GeodesicKind::Line {
        return Err(Error::param("laplacian_f expects a geodesic line"));
    }
    if !(c > 0.0) {
        return Err(Error::param(format!("laplacian_f: c must be > 0, got {c}")));
    }
    let d = z.dim() as f64;
    let fc = fermi(z, geo)?;
    let g1 = fc.h;
    if g1 == 0.0 {
        return Ok(2.0 * (d - 1.0));
    }
    let g_tanh = g1 * g1.tanh();
    let g_coth = g1 / g1.tanh();
    Ok(2.0 + 2.0 * g_tanh + 2.0 * (d - 2.0) * g_coth)
}

// ---------------------------------------------------------------------------
// bidisk
// ---------------------------------------------------------------------------

/// A point of the bidisk `H^2 x H^2` (both factors at curvature 1).
#[derive(Clone, Debug)]
pub struct BidiskPoint {
    pub p1: HPoint,
    pub p2: HPoint,
}

impl BidiskPoint {
    pub fn new(p1: HPoint, p2: HPoint) -> Result<Self> {
        if p1.dim() != 2 || p2.dim() != 2 {
            return Err(Error::param("bidisk components must be 2-dimensional"));
        }
        Ok(BidiskPoint { p1, p2 })
    }
}

/// Product-metric distance `sqrt(rho_1^2 + rho_2^2)`.
pub fn bidisk_distance(u: &BidiskPoint, v: &BidiskPoint) -> f64 {
    let d1 = dist1(u.p1.coords(), v.p1.coords());
    let d2 = dist1(u.p2.coords(), v.p2.coords());
    d1.hypot(d2)
}

/// Distance from `u` to the diagonal geodesic `{(0, e^t, 0, e^t)}`,
/// by golden-section minimization over `t` (tolerance 1e-9 on `t`).
pub fn bidisk_dist_to_diag_geodesic(u: &BidiskPoint) -> f64 {
    // rho_i(t) = acosh(cosh(h_i) cosh(t - m_i)) with m_i = ln |p_i|,
    // cosh(h_i) = |p_i| / z_i; the sum of squares is convex with its
    // minimum between m_1 and m_2.
    let prep = |p: &HPoint| {
        let r = sq_norm(p.coords()).sqrt();
        (r.ln(), r / p.height())
    };
    let (m1, ch1) = prep(&u.p1);
    let (m2, ch2) = prep(&u.p2);
    let rho2 = |t: f64, m: f64, ch: f64| {
        // acosh(ch * cosh(t - m)) without cancellation near 1
        let dl = (t - m).cosh();
        let arg = (ch - 1.0) * dl + (dl - 1.0);
        let r = acosh1p(arg);
        r * r
    };
    let f = |t: f64| rho2(t, m1, ch1) + rho2(t, m2, ch2);
    let (mut lo, mut hi) = (m1.min(m2) - 1e-9, m1.max(m2) + 1e-9);
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > 1e-9 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    f(0.5 * (lo + hi)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ACOSH_3_2: f64 = 0.962_423_650_119_206_9; // acosh(1.5)
    const LAPL_F_11_D2: f64 = 3.246_450_480_280_461; // 2 + 2 asinh(1)/sqrt(2)

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_point(r: &mut ChaCha8Rng, d: usize) -> HPoint {
        let mut c: Vec<f64> = (0..d - 1).map(|_| r.gen_range(-3.0..3.0)).collect();
        c.push(r.gen_range(0.05..4.0));
        HPoint::new(c).unwrap()
    }

    fn random_isometry(r: &mut ChaCha8Rng, d: usize) -> Isometry {
        let mut iso = Isometry::identity(d);
        for _ in 0..r.gen_range(1..5) {
            match r.gen_range(0..3) {
                0 => iso.push(Move::Translate((0..d - 1).map(|_| r.gen_range(-2.0..2.0)).collect())),
                1 => iso.push(Move::Scale(r.gen_range(0.2..5.0))),
                _ => iso.push(Move::Invert),
            }
        }
        iso
    }

    #[test]
    fn distance_goldens() {
        let p = HPoint::new(vec![0.0, 1.0]).unwrap();
        let q = HPoint::new(vec![0.0, std::f64::consts::E]).unwrap();
        assert_relative_eq!(distance(&p, &q, 1.0).unwrap(), 1.0, max_relative = 1e-14);
        let r = HPoint::new(vec![1.0, 1.0]).unwrap();
        assert_relative_eq!(distance(&p, &r, 1.0).unwrap(), ACOSH_3_2, max_relative = 1e-14);
        assert_eq!(distance(&p, &p, 1.0).unwrap(), 0.0);
        // curvature scaling
        assert_relative_eq!(distance(&p, &r, 2.0).unwrap(), ACOSH_3_2 / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn distance_rejects_bad_inputs() {
        let p = HPoint::new(vec![0.0, 1.0]).unwrap();
        let q3 = HPoint::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert!(distance(&p, &q3, 1.0).is_err());
        assert!(HPoint::new(vec![0.0, -1.0]).is_err());
        assert!(HPoint::new(vec![1.0]).is_err());
    }

    #[test]
    fn distance_symmetric_and_triangle() {
        let mut r = rng(11);
        for _ in 0..1000 {
            let d = [2usize, 3, 5][r.gen_range(0..3)];
            let (a, b, c) = (random_point(&mut r, d), random_point(&mut r, d), random_point(&mut r, d));
            let ab = distance(&a, &b, 1.0).unwrap();
            let ba = distance(&b, &a, 1.0).unwrap();
            assert_relative_eq!(ab, ba, max_relative = 1e-13);
            let bc = distance(&b, &c, 1.0).unwrap();
            let ac = distance(&a, &c, 1.0).unwrap();
            assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn distance_isometry_invariant() {
        let mut r = rng(12);
        for _ in 0..1000 {
            let d = if r.gen_bool(0.5) { 2 } else { 3 };
            let (a, b) = (random_point(&mut r, d), random_point(&mut r, d));
            let iso = random_isometry(&mut r, d);
            let ia = iso.apply(&a).unwrap();
            let ib = iso.apply(&b).unwrap();
            let before = distance(&a, &b, 1.0).unwrap();
            let after = distance(&ia, &ib, 1.0).unwrap();
            assert!((before - after).abs() < 1e-9 * (1.0 + before));
        }
    }

    #[test]
    fn exp_log_goldens() {
        let p = HPoint::new(vec![0.0, 1.0]).unwrap();
        let up = exp_map(&p, &[0.0, 1.0]).unwrap();
        assert_relative_eq!(up.coords()[1], std::f64::consts::E, max_relative = 1e-14);
        assert!(up.coords()[0].abs() < 1e-14);
        let v = log_map(&p, &up).unwrap();
        assert!(v[0].abs() < 1e-12);
        assert_relative_eq!(v[1], 1.0, max_relative = 1e-12);
        // q == p gives the zero vector
        let z = log_map(&p, &p).unwrap();
        assert!(z.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn exp_log_round_trip() {
        let mut r = rng(13);
        for _ in 0..1000 {
            let d = [2usize, 3, 5][r.gen_range(0..3)];
            let p = random_point(&mut r, d);
            let q = random_point(&mut r, d);
            let v = log_map(&p, &q).unwrap();
            // tangent norm equals the distance
            assert_relative_eq!(
                tangent_norm(&p, &v, 1.0),
                distance(&p, &q, 1.0).unwrap(),
                max_relative = 1e-11
            );
            let q2 = exp_map(&p, &v).unwrap();
            for (x, y) in q.coords().iter().zip(q2.coords()) {
                assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn fermi_goldens() {
        let geo = GeodesicSpec::axis(2);
        let z = HPoint::new(vec![1.0, 1.0]).unwrap();
        let fc = fermi(&z, &geo).unwrap();
        assert_relative_eq!(fc.u, 0.346_573_590_279_972_64, max_relative = 1e-12);
        assert_relative_eq!(fc.h, 0.881_373_587_019_543, max_relative = 1e-12);
        // h agrees with the point distance to (0, sqrt(2))
        let foot = HPoint::new(vec![0.0, 2.0f64.sqrt()]).unwrap();
        assert_relative_eq!(fc.h, distance(&z, &foot, 1.0).unwrap(), max_relative = 1e-12);
        // on-axis degeneracy
        let ax = HPoint::new(vec![0.0, 3.0]).unwrap();
        let fa = fermi(&ax, &geo).unwrap();
        assert_eq!(fa.h, 0.0);
        assert_eq!(fa.theta, vec![1.0]);
    }

    #[test]
    fn fermi_round_trip() {
        let mut r = rng(14);
        for _ in 0..500 {
            let d = if r.gen_bool(0.5) { 2 } else { 3 };
            let p = random_point(&mut r, d);
            let q = random_point(&mut r, d);
            if distance(&p, &q, 1.0).unwrap() < 1e-6 {
                continue;
            }
            let geo = GeodesicSpec::line_through(&p, &q).unwrap();
            let z = random_point(&mut r, d);
            let fc = fermi(&z, &geo).unwrap();
            let z2 = fermi_inverse(&fc, &geo).unwrap();
            for (x, y) in z.coords().iter().zip(z2.coords()) {
                assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()), "{:?} vs {:?}", z, z2);
            }
            // h equals the distance to the axis point at arclength u
            let foot = geo.point_at(fc.u).unwrap();
            assert_relative_eq!(fc.h, distance(&z, &foot, 1.0).unwrap(), epsilon = 1e-10, max_relative = 1e-9);
        }
    }

    #[test]
    fn geodesic_normalization_residual() {
        let mut r = rng(15);
        for _ in 0..300 {
            let d = [2usize, 3, 5][r.gen_range(0..3)];
            let p = random_point(&mut r, d);
            let q = random_point(&mut r, d);
            if distance(&p, &q, 1.0).unwrap() < 1e-3 {
                continue;
            }
            let geo = GeodesicSpec::line_through(&p, &q).unwrap();
            for pt in [&p, &q] {
                let im = geo.isometry().apply(pt).unwrap();
                let off = sq_norm(&im.coords()[..d - 1]).sqrt();
                assert!(off < 1e-12 * im.height().max(1.0), "residual {off}");
            }
            // p maps to height 1 and q above it
            let ip = geo.isometry().apply(&p).unwrap();
            assert_relative_eq!(ip.height(), 1.0, max_relative = 1e-12);
            let iq = geo.isometry().apply(&q).unwrap();
            assert!(iq.height() > 1.0);
        }
    }

    #[test]
    fn dist_to_geodesic_line_and_segment() {
        let geo = GeodesicSpec::axis(2);
        let z = HPoint::new(vec![1.0, 1.0]).unwrap();
        let (g, _) = dist_to_geodesic(&z, &geo, 1.0).unwrap();
        assert_relative_eq!(g, 0.881_373_587_019_543, max_relative = 1e-12);

        // segment [phi(0), phi(2)] on the axis; z at arclength 3 has distance 1
        let p0 = HPoint::new(vec![0.0, 1.0]).unwrap();
        let p2 = HPoint::new(vec![0.0, 2.0f64.exp()]).unwrap();
        let seg = GeodesicSpec::segment(&p0, &p2).unwrap();
        let z3 = HPoint::new(vec![0.0, 3.0f64.exp()]).unwrap();
        let (gs, dir) = dist_to_geodesic(&z3, &seg, 1.0).unwrap();
        assert_relative_eq!(gs, 1.0, max_relative = 1e-10);
        // outward direction points up (away from the segment)
        assert!(dir[1] > 0.0);

        // interior point has distance 0
        let zi = HPoint::new(vec![0.0, 1.5]).unwrap();
        let (gi, _) = dist_to_geodesic(&zi, &seg, 1.0).unwrap();
        assert_eq!(gi, 0.0);

        // segment distance dominates line distance
        let mut r = rng(16);
        for _ in 0..300 {
            let z = random_point(&mut r, 2);
            let line = GeodesicSpec::line_through(&p0, &p2).unwrap();
            let (gl, _) = dist_to_geodesic(&z, &line, 1.0).unwrap();
            let (gs, _) = dist_to_geodesic(&z, &seg, 1.0).unwrap();
            assert!(gs >= gl - 1e-12);
        }
    }

    #[test]
    fn outward_direction_tanh_identity() {
        // <grad_dir, direction to the forward ideal point> = -tanh(c g)
        let mut r = rng(17);
        for &c in &[1.0, 0.5, 2.0] {
            let geo = GeodesicSpec::axis(3);
            for _ in 0..200 {
                let z = random_point(&mut r, 3);
                let (g, dir) = dist_to_geodesic(&z, &geo, c).unwrap();
                if g < 1e-12 {
                    continue;
                }
                // the forward ideal point of the axis is straight up
                let up = [0.0, 0.0, c * z.height()];
                let ip = inner(&z, &dir, &up, c);
                assert!(
                    (ip + (c * g).tanh()).abs() < 1e-9,
                    "c={c}: {} vs {}",
                    ip,
                    -(c * g).tanh()
                );
            }
        }
    }

    #[test]
    fn laplacian_f_golden_and_axis_limit() {
        let geo = GeodesicSpec::axis(2);
        let z = HPoint::new(vec![1.0, 1.0]).unwrap();
        assert_relative_eq!(laplacian_f(&z, &geo, 1.0).unwrap(), LAPL_F_11_D2, max_relative = 1e-12);
        // on the axis the limit is 2(d-1); equals 2 in dimension 2
        let ax2 = HPoint::new(vec![0.0, 1.7]).unwrap();
        assert_eq!(laplacian_f(&ax2, &GeodesicSpec::axis(2), 1.0).unwrap(), 2.0);
        let ax3 = HPoint::new(vec![0.0, 0.0, 1.7]).unwrap();
        assert_eq!(laplacian_f(&ax3, &GeodesicSpec::axis(3), 1.0).unwrap(), 4.0);
        // approach to the limit in d = 2
        let near = HPoint::new(vec![1e-9, 1.0]).unwrap();
        assert_relative_eq!(laplacian_f(&near, &GeodesicSpec::axis(2), 1.0).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn laplacian_f_lower_bound_holds() {
        let mut r = rng(18);
        for &d in &[2usize, 3, 5] {
            let geo = GeodesicSpec::axis(d);
            for _ in 0..2000 {
                let z = random_point(&mut r, d);
                let lf = laplacian_f(&z, &geo, 1.0).unwrap();
                let (g, _) = dist_to_geodesic(&z, &geo, 1.0).unwrap();
                assert!(lf >= 2.0 - 1e-12);
                // the closed form stays below 2(d-1)(1+g)
                assert!(lf <= 2.0 * (d as f64 - 1.0) * (1.0 + g) + 1e-9);
            }
        }
    }

    /// Finite-difference Laplace-Beltrami operator in half-space
    /// coordinates: z_d^2 sum of second differences - (d-2) z_d d/dz_d.
    fn fd_laplacian(z: &HPoint, geo: &GeodesicSpec, step: f64) -> f64 {
        let d = z.dim();
        let f = |w: &[f64]| {
            let p = HPoint::new(w.to_vec()).unwrap();
            let (g, _) = dist_to_geodesic(&p, geo, 1.0).unwrap();
            g * g
        };
        let zd = z.height();
        let mut flat = 0.0;
        for i in 0..d {
            let mut wp = z.coords().to_vec();
            let mut wm = z.coords().to_vec();
            wp[i] += step;
            wm[i] -= step;
            flat += (f(&wp) - 2.0 * f(z.coords()) + f(&wm)) / (step * step);
        }
        let mut up = z.coords().to_vec();
        let mut dn = z.coords().to_vec();
        up[d - 1] += step;
        dn[d - 1] -= step;
        let dz = (f(&up) - f(&dn)) / (2.0 * step);
        zd * zd * flat - (d as f64 - 2.0) * zd * dz
    }

    #[test]
    fn laplacian_f_matches_finite_difference() {
        let mut r = rng(19);
        for &d in &[2usize, 3] {
            for _ in 0..50 {
                let p = random_point(&mut r, d);
                let q = random_point(&mut r, d);
                if distance(&p, &q, 1.0).unwrap() < 0.1 {
                    continue;
                }
                let geo = GeodesicSpec::line_through(&p, &q).unwrap();
                let z = random_point(&mut r, d);
                let (g, _) = dist_to_geodesic(&z, &geo, 1.0).unwrap();
                if g < 0.05 {
                    continue; // FD noise dominates right on the axis
                }
                let exact = laplacian_f(&z, &geo, 1.0).unwrap();
                let fd = fd_laplacian(&z, &geo, 1e-4 * z.height());
                assert_relative_eq!(exact, fd, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn bidisk_goldens() {
        let b = |a: f64, z: f64| HPoint::new(vec![a, z]).unwrap();
        let u = BidiskPoint::new(b(0.0, 1.0), b(0.0, 1.0)).unwrap();
        assert_eq!(bidisk_distance(&u, &u), 0.0);
        let e = std::f64::consts::E;
        let v = BidiskPoint::new(b(0.0, e), b(0.0, e)).unwrap();
        assert_relative_eq!(bidisk_distance(&u, &v), 2.0f64.sqrt(), max_relative = 1e-12);
        // points on the diagonal geodesic have distance 0 to it
        assert!(bidisk_dist_to_diag_geodesic(&u) < 1e-8);
        let w = BidiskPoint::new(b(0.0, 2.5), b(0.0, 2.5)).unwrap();
        assert!(bidisk_dist_to_diag_geodesic(&w) < 1e-8);
        // off-diagonal: sanity against a direct grid scan
        let x = BidiskPoint::new(b(0.4, 1.0), b(-0.2, 2.0)).unwrap();
        let direct = (0..20000)
            .map(|i| -2.0 + i as f64 * 2e-4)
            .map(|t| {
                let pt = b(0.0, t.exp());
                let d1 = distance(&x.p1, &pt, 1.0).unwrap();
                let d2 = distance(&x.p2, &pt, 1.0).unwrap();
                d1.hypot(d2)
            })
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(bidisk_dist_to_diag_geodesic(&x), direct, max_relative = 1e-6);
    }

    #[test]
    fn exp_map_respects_direction_norm() {
        // moving distance s along a random unit direction lands at distance s
        let mut r = rng(20);
        for _ in 0..300 {
            let d = if r.gen_bool(0.5) { 2 } else { 3 };
            let p = random_point(&mut r, d);
            let mut v: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
            let n = tangent_norm(&p, &v, 1.0);
            if n < 1e-3 {
                continue;
            }
            let s = r.gen_range(0.1..6.0);
            for x in v.iter_mut() {
                *x *= s / n;
            }
            let q = exp_map(&p, &v).unwrap();
            assert_relative_eq!(distance(&p, &q, 1.0).unwrap(), s, max_relative = 1e-10);
        }
    }
}
