//! Turn path simulations into numbers with error bars: hitting
//! probabilities (plain and importance-sampled), Monte Carlo Laplace
//! transforms, exponential-rate regression, two-sample Kolmogorov-Smirnov
//! distances and sub-Gaussian tail fits.
//!
//! All reducers are stateless folds over per-path values collected in path
//! order, so every estimate is reproducible and independent of the worker
//! count.

use crate::error::{Error, Result};
use crate::parallel::map_paths;
use crate::rng::path_rng;
use crate::sde::{first_passage, first_passage_girsanov, path_seed, CirSpec};
use rand::Rng;
use rand_distr::StandardNormal;

/// Estimation method tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Naive,
    Girsanov,
}

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug)]
pub struct EstimateCI {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub method: Method,
    /// set when a plain estimator saw zero hits; `stderr` then carries the
    /// rule-of-three upper bound `3/n`
    pub flagged_zero: bool,
}

fn mean_stderr(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Probability that the square-root diffusion crosses `a` before `t`,
/// over `n_paths` independent paths.
///
/// The plain method counts grid crossings; the reweighted method simulates
/// the reversed drift and averages the exact change-of-measure weights, so
/// it stays informative deep in the rare-event regime. A plain run with
/// zero hits is flagged and reports the rule-of-three bound as its error.
pub fn hit_prob(
    spec: &CirSpec,
    a: f64,
    t: f64,
    n_paths: u64,
    h: f64,
    seed: u64,
    method: Method,
) -> Result<EstimateCI> {
    if n_paths < 1 {
        return Err(Error::param("hit_prob: need at least one path"));
    }
    // validate the configuration once up front; the per-path errors can
    // only depend on the arguments, not the noise
    match method {
        Method::Naive => {
            first_passage(spec, a, t, h, path_seed(seed, 0))?;
        }
        Method::Girsanov => {
            first_passage_girsanov(spec, a, t, h, path_seed(seed, 0))?;
        }
    }
    let vals: Vec<f64> = match method {
        Method::Naive => map_paths(n_paths, |i| {
            let rec = first_passage(spec, a, t, h, path_seed(seed, i)).expect("validated");
            if rec.hit {
                1.0
            } else {
                0.0
            }
        }),
        Method::Girsanov => map_paths(n_paths, |i| {
            let rec = first_passage_girsanov(spec, a, t, h, path_seed(seed, i)).expect("validated");
            if rec.hit {
                rec.weight
            } else {
                0.0
            }
        }),
    };
    let (mean, stderr) = mean_stderr(&vals);
    let flagged_zero = method == Method::Naive && mean == 0.0;
    Ok(EstimateCI {
        mean,
        stderr: if flagged_zero { 3.0 / n_paths as f64 } else { stderr },
        n: n_paths,
        method,
        flagged_zero,
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo Laplace transform of the Jacobi first-passage time
// ---------------------------------------------------------------------------

/// Simulation cutoff for the hitting time; larger values only matter in
/// the exponentially small tail `e^{-lambda T_MAX}`.
const LAPLACE_T_MAX: f64 = 30.0;

/// First hitting times of level `sqrt(a)` by the Jacobi diffusion
/// `dY = dB - nu tanh(Y) dt + q coth(Y) dt` started at `sqrt(x)`;
/// `None` when the path has not hit by the cutoff.
///
/// The path is simulated as the squared coordinate `Z = Y^2`, whose drift
/// `1 + 2 q G(sqrt(Z)) - 2 nu sqrt(Z) tanh(sqrt(Z))` (with
/// `G(y) = y coth y`, `G(0) = 1`) is bounded near zero, removing the
/// `coth` singularity from the grid; `Z` hits `a` exactly when `Y` hits
/// `sqrt(a)`.
///
/// Grid detection alone under-counts crossings by `O(sqrt(h))` — an order
/// of magnitude above the target standard errors at usable steps — so each
/// step also applies the Brownian-bridge within-step crossing check:
/// conditional on the endpoints, a continuous path crossed the barrier
/// inside the step with probability
/// `exp(-2 (a - Z_i)(a - Z_{i+1}) / (sigma^2 h))`, `sigma` the diffusion
/// coefficient at the step start. Hits are reported at the step-end time
/// (an `O(h)` remainder).
pub fn mc_hitting_times(
    nu: f64,
    q: f64,
    x: f64,
    a: f64,
    n_paths: u64,
    h: f64,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    if !(q >= 0.5) {
        return Err(Error::param(format!(
            "mc_hitting_times: need q >= 1/2 (entrance boundary), got {q}"
        )));
    }
    if !(0.0 < x && x < a) {
        return Err(Error::param(format!("mc_hitting_times: need 0 < x < a, got {x}, {a}")));
    }
    if !(h > 0.0) {
        return Err(Error::param("mc_hitting_times: need h > 0"));
    }
    let g = |y: f64| if y > 0.0 { y / y.tanh() } else { 1.0 };
    Ok(map_paths(n_paths, |i| {
        let mut rng = path_rng(path_seed(seed, i), 0);
        let mut z = x;
        let mut t = 0.0;
        while t < LAPLACE_T_MAX {
            let zp = z.max(0.0);
            let sz = zp.sqrt();
            let drift = 1.0 + 2.0 * q * g(sz) - 2.0 * nu * sz * sz.tanh();
            let xi: f64 = rng.sample(StandardNormal);
            // drawn unconditionally so the per-step draw count stays fixed
            let u: f64 = rng.gen();
            let z_new = z + drift * h + 2.0 * sz * h.sqrt() * xi;
            t += h;
            if z_new.max(0.0) >= a {
                return Some(t);
            }
            let sigma2 = 4.0 * zp;
            if sigma2 > 0.0 {
                let p_cross = (-2.0 * (a - zp) * (a - z_new.max(0.0)) / (sigma2 * h)).exp();
                if u < p_cross {
                    return Some(t);
                }
            }
            z = z_new;
        }
        None
    }))
}

/// A Laplace-transform estimate together with the cutoff bias bound
/// `e^{-lambda T_max}` of truncating unfinished paths to zero.
#[derive(Clone, Copy, Debug)]
pub struct LaplaceEstimate {
    pub ci: EstimateCI,
    pub cutoff_bias_bound: f64,
}

/// Average `e^{-lambda T}` over the recorded hitting times (misses count
/// zero, which under-counts by at most the cutoff bound).
pub fn laplace_from_times(times: &[Option<f64>], lambda: f64) -> Result<LaplaceEstimate> {
    if !(lambda > 0.0) {
        return Err(Error::param(format!("laplace: lambda must be > 0, got {lambda}")));
    }
    if times.is_empty() {
        return Err(Error::param("laplace: no paths"));
    }
    let vals: Vec<f64> = times
        .iter()
        .map(|t| t.map(|t| (-lambda * t).exp()).unwrap_or(0.0))
        .collect();
    let (mean, stderr) = mean_stderr(&vals);
    Ok(LaplaceEstimate {
        ci: EstimateCI {
            mean,
            stderr,
            n: times.len() as u64,
            method: Method::Naive,
            flagged_zero: false,
        },
        cutoff_bias_bound: (-lambda * LAPLACE_T_MAX).exp(),
    })
}

/// Monte Carlo estimate of `E[e^{-lambda T}]` for the Jacobi first-passage
/// time (one lambda; use [`mc_hitting_times`] + [`laplace_from_times`] to
/// reuse one simulation across several lambdas).
pub fn mc_laplace(
    nu: f64,
    q: f64,
    lambda: f64,
    x: f64,
    a: f64,
    n_paths: u64,
    h: f64,
    seed: u64,
) -> Result<LaplaceEstimate> {
    let times = mc_hitting_times(nu, q, x, a, n_paths, h, seed)?;
    laplace_from_times(&times, lambda)
}

// ---------------------------------------------------------------------------
// exponential-rate regression
// ---------------------------------------------------------------------------

/// Weighted log-linear regression result for exponential-rate extraction.
#[derive(Clone, Debug)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r2: f64,
    /// `(scale, log estimate, weight)` triples actually used
    pub points: Vec<(f64, f64, f64)>,
}

/// Weighted least squares of `log(mean)` on the scale variable, with
/// weights `(mean/stderr)^2` (the inverse delta-method variance of the log
/// estimate). The slope is the empirical exponential rate.
pub fn rate_fit(points: &[(f64, EstimateCI)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::param(format!("rate_fit: need >= 3 points, got {}", points.len())));
    }
    let mut pts = Vec::with_capacity(points.len());
    for (scale, ci) in points {
        if !(ci.mean > 0.0) {
            return Err(Error::param(format!(
                "rate_fit: nonpositive estimate {} at scale {scale}",
                ci.mean
            )));
        }
        let w = if ci.stderr > 0.0 {
            (ci.mean / ci.stderr).powi(2)
        } else {
            return Err(Error::param(format!("rate_fit: zero stderr at scale {scale}")));
        };
        pts.push((*scale, ci.mean.ln(), w));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xbar: f64 = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / sw;
    let ybar: f64 = pts.iter().map(|p| p.1 * p.2).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xbar) * (p.0 - xbar)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar)).sum();
    if !(sxx > 0.0) {
        return Err(Error::param("rate_fit: degenerate scale grid"));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            p.2 * r * r
        })
        .sum();
    let ss_tot: f64 = pts.iter().map(|p| p.2 * (p.1 - ybar) * (p.1 - ybar)).sum();
    Ok(RateFit {
        slope,
        intercept,
        slope_stderr: (1.0 / sxx).sqrt(),
        r2: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
        points: pts,
    })
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov and tail fits
// ---------------------------------------------------------------------------

/// Two-sample KS comparison at the asymptotic 1% critical value
/// `1.628 sqrt((n+m)/(nm))`.
#[derive(Clone, Copy, Debug)]
pub struct KSResult {
    pub statistic: f64,
    pub n: usize,
    pub m: usize,
    pub critical_1pct: f64,
}

/// Raw two-sample KS statistic (maximum gap between empirical CDFs).
pub fn ks_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a: Vec<f64> = xs.to_vec();
    let mut b: Vec<f64> = ys.to_vec();
    a.sort_by(|p, q| p.partial_cmp(q).unwrap());
    b.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = a[i].min(b[j]);
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<KSResult> {
    if xs.len() < 100 || ys.len() < 100 {
        return Err(Error::param("ks_two_sample: need at least 100 samples per side"));
    }
    let (n, m) = (xs.len(), ys.len());
    Ok(KSResult {
        statistic: ks_statistic(xs, ys),
        n,
        m,
        critical_1pct: 1.628 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt(),
    })
}

/// Sub-Gaussian tail fit: regression of `log P[sup >= u]` on `u^2`.
#[derive(Clone, Debug)]
pub struct TailFit {
    /// decay rate (minus the fitted slope in `u^2`)
    pub c_hat: f64,
    /// prefactor `exp(intercept)`
    pub k_hat: f64,
    pub r2: f64,
    pub fit: RateFit,
}

/// Fit `P[sup >= u] ~ K e^{-c u^2}` over the empirical 50%-99% quantile
/// range of the observed suprema, with binomial weights per node.
pub fn subgaussian_tail_fit(sups: &[f64]) -> Result<TailFit> {
    let n = sups.len();
    if n < 200 {
        return Err(Error::param("subgaussian_tail_fit: need at least 200 samples"));
    }
    let mut sorted = sups.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted[0] == sorted[n - 1] {
        return Err(Error::param("subgaussian_tail_fit: degenerate sample"));
    }
    let mut pts = Vec::new();
    for pct in (50..99).step_by(2) {
        let idx = (pct * n) / 100;
        let u = sorted[idx];
        // survival probability just above this quantile
        let surv = sorted.iter().filter(|v| **v >= u).count() as f64 / n as f64;
        if surv <= 0.0 || surv >= 1.0 {
            continue;
        }
        let stderr = (surv * (1.0 - surv) / n as f64).sqrt();
        pts.push((
            u * u,
            EstimateCI { mean: surv, stderr, n: n as u64, method: Method::Naive, flagged_zero: false },
        ));
    }
    let fit = rate_fit(&pts)?;
    Ok(TailFit {
        c_hat: -fit.slope,
        k_hat: fit.intercept.exp(),
        r2: fit.r2,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{laplace_fpt, JacobiQuery};
    use approx::assert_relative_eq;

    #[test]
    fn hit_prob_near_zero_barrier_is_certain() {
        let spec = CirSpec::new(0.0, 0.0, 1.0, 2.0, 0.0).unwrap();
        let ci = hit_prob(&spec, 1e-6, 1.0, 500, 1e-3, 1, Method::Naive).unwrap();
        assert!(ci.mean > 0.999);
    }

    #[test]
    fn naive_and_girsanov_cis_overlap_moderate_nu() {
        let spec = CirSpec::new(4.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let n = 40_000;
        let h = 5e-5;
        let a = hit_prob(&spec, 1.0, 1.0, n, h, 2, Method::Naive).unwrap();
        let b = hit_prob(&spec, 1.0, 1.0, n, h, 3, Method::Girsanov).unwrap();
        let joint = a.stderr.hypot(b.stderr);
        assert!(
            (a.mean - b.mean).abs() <= 3.0 * joint,
            "naive {} +- {}, girsanov {} +- {}",
            a.mean,
            a.stderr,
            b.mean,
            b.stderr
        );
    }

    #[test]
    fn rare_event_regime_flags_naive_and_feeds_girsanov() {
        // nu = 30, a = 1: probability near e^{-26}; plain sampling sees
        // nothing at this n while the reweighted estimator resolves it
        let spec = CirSpec::new(30.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let naive = hit_prob(&spec, 1.0, 1.0, 100_000, 1e-3, 5, Method::Naive).unwrap();
        assert!(naive.flagged_zero);
        assert_eq!(naive.mean, 0.0);
        assert_relative_eq!(naive.stderr, 3.0 / 100_000.0);
        let is = hit_prob(&spec, 1.0, 1.0, 100_000, 1e-3, 5, Method::Girsanov).unwrap();
        assert!(is.mean > 0.0 && is.mean < 1e-9);
        assert!(is.stderr / is.mean < 0.1, "relative error {}", is.stderr / is.mean);
    }

    #[test]
    fn mc_laplace_matches_closed_form() {
        let (nu, q, x, a) = (5.0, 1.0, 0.0625, 1.0);
        let times = mc_hitting_times(nu, q, x, a, 20_000, 5e-4, 11).unwrap();
        for lam in [0.5, 1.0, 2.0] {
            let est = laplace_from_times(&times, lam).unwrap();
            let exact = laplace_fpt(&JacobiQuery::new(nu, q, lam, x, a).unwrap()).unwrap();
            assert!(
                (est.ci.mean - exact).abs() <= 3.0 * est.ci.stderr + est.cutoff_bias_bound,
                "lambda {lam}: {} +- {} vs {exact}",
                est.ci.mean,
                est.ci.stderr
            );
        }
    }

    #[test]
    fn mc_laplace_monotone_in_x() {
        let mut prev = 0.0;
        for (j, x) in [0.01, 0.1, 0.4].into_iter().enumerate() {
            let est = mc_laplace(5.0, 1.0, 1.0, x, 1.0, 4000, 1e-3, 13 + j as u64).unwrap();
            assert!(est.ci.mean > prev - 2.0 * est.ci.stderr);
            prev = est.ci.mean;
        }
    }

    #[test]
    fn mc_laplace_decays_in_lambda() {
        let times = mc_hitting_times(5.0, 1.0, 0.0625, 1.0, 3000, 1e-3, 17).unwrap();
        let mut prev = f64::INFINITY;
        for lam in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let est = laplace_from_times(&times, lam).unwrap();
            assert!(est.ci.mean < prev);
            prev = est.ci.mean;
        }
        assert!(prev < 0.02, "lambda = 16 estimate {prev}");
    }

    #[test]
    fn rate_fit_exact_line() {
        let pts: Vec<(f64, EstimateCI)> = [8.0f64, 16.0, 24.0, 32.0]
            .iter()
            .map(|nu| {
                let p = (-0.24 * nu).exp();
                (
                    *nu,
                    EstimateCI {
                        mean: p,
                        stderr: 0.01 * p,
                        n: 1,
                        method: Method::Naive,
                        flagged_zero: false,
                    },
                )
            })
            .collect();
        let fit = rate_fit(&pts).unwrap();
        assert_relative_eq!(fit.slope, -0.24, max_relative = 1e-12);
        assert_relative_eq!(fit.r2, 1.0, epsilon = 1e-12);
        // scaling all probabilities shifts the intercept, not the slope
        let pts2: Vec<(f64, EstimateCI)> = pts
            .iter()
            .map(|(s, ci)| (*s, EstimateCI { mean: 7.0 * ci.mean, stderr: 7.0 * ci.stderr, ..*ci }))
            .collect();
        let fit2 = rate_fit(&pts2).unwrap();
        assert!((fit.slope - fit2.slope).abs() < 1e-12);
        assert_relative_eq!(fit2.intercept - fit.intercept, 7.0f64.ln(), max_relative = 1e-10);
    }

    #[test]
    fn rate_fit_recovers_noisy_slope() {
        // synthetic log-linear data with 5% noise
        let mut rng = path_rng(99, 0);
        let truth = -0.31;
        let pts: Vec<(f64, EstimateCI)> = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
            .iter()
            .map(|s| {
                let noise: f64 = rng.sample(StandardNormal);
                let p = (truth * s + 0.05 * noise).exp();
                (
                    *s,
                    EstimateCI {
                        mean: p,
                        stderr: 0.05 * p,
                        n: 1,
                        method: Method::Naive,
                        flagged_zero: false,
                    },
                )
            })
            .collect();
        let fit = rate_fit(&pts).unwrap();
        assert!(
            (fit.slope - truth).abs() < 3.0 * fit.slope_stderr,
            "slope {} +- {}",
            fit.slope,
            fit.slope_stderr
        );
    }

    #[test]
    fn rate_fit_rejects_bad_input() {
        let good = EstimateCI { mean: 0.5, stderr: 0.01, n: 10, method: Method::Naive, flagged_zero: false };
        assert!(rate_fit(&[(1.0, good), (2.0, good)]).is_err());
        let bad = EstimateCI { mean: 0.0, ..good };
        assert!(rate_fit(&[(1.0, good), (2.0, bad), (3.0, good)]).is_err());
    }

    #[test]
    fn ks_identical_samples() {
        let xs: Vec<f64> = (0..500).map(|i| i as f64).collect();
        assert_eq!(ks_statistic(&xs, &xs), 0.0);
        let r = ks_two_sample(&xs, &xs).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_relative_eq!(r.critical_1pct, 1.628 * (1000.0f64 / 250_000.0).sqrt());
    }

    #[test]
    fn ks_detects_shift() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.2).collect();
        let r = ks_two_sample(&xs, &ys).unwrap();
        assert!(r.statistic > r.critical_1pct);
        assert_relative_eq!(r.statistic, 0.2, max_relative = 0.05);
    }

    #[test]
    fn tail_fit_recovers_gaussian_decay() {
        // |N(0, sigma)| has survival ~ e^{-u^2/(2 sigma^2)} up to slowly
        // varying factors
        let mut rng = path_rng(7, 0);
        let sigma = 0.8;
        let sups: Vec<f64> = (0..20_000)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (sigma * z).abs()
            })
            .collect();
        let fit = subgaussian_tail_fit(&sups).unwrap();
        assert!(fit.r2 > 0.9, "r2 {}", fit.r2);
        // the pure Gaussian rate is 1/(2 sigma^2) = 0.78; the 1/u Mills
        // factor steepens the fitted slope on a finite quantile range
        let base = 1.0 / (2.0 * sigma * sigma);
        assert!(fit.c_hat > base && fit.c_hat < base + 0.6, "c_hat {}", fit.c_hat);
    }

    #[test]
    fn tail_fit_rejects_degenerate() {
        assert!(subgaussian_tail_fit(&vec![1.0; 500]).is_err());
        assert!(subgaussian_tail_fit(&[1.0, 2.0]).is_err());
    }
}
