//! Recovering model constants from observed trajectories.
//!
//! Each channel is fit as `y(t) = A*exp(-rate*t) + C` in two stages: a
//! rate-grid search where the linear pair `(A, C)` is solved in closed form
//! per candidate rate, then damped Gauss-Newton refinement of all three
//! parameters. A separate linear regression of the gap's time derivative on
//! the gap itself exposes the decay rate and energy floor directly, and
//! [`recover_params`] maps a pair of channel fits back to the model
//! constants under the `k = 1` normalization.

use alloc::vec::Vec;
use thiserror::Error;

use crate::mat3;

/// Rate-grid bounds and size for the coarse search stage.
const RATE_GRID_LO: f64 = 1e-3;
const RATE_GRID_HI: f64 = 10.0;
const RATE_GRID_LEN: usize = 200;
/// Refinement loop limits.
const GN_MAX_ITERS: u32 = 100;
const GN_STEP_TOL: f64 = 1e-10;
/// Damping factor bounds for the Levenberg-Marquardt loop.
const LM_MU_INIT: f64 = 1e-3;
const LM_MU_MAX: f64 = 1e15;
/// Value spread below which a series is treated as constant.
const FLAT_SPREAD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("sample {index} is not finite")]
    NonFiniteData { index: usize },
    #[error("times must be strictly increasing at index {index}")]
    NonIncreasingTime { index: usize },
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("sample spacing is not uniform at index {index}")]
    NonUniformSpacing { index: usize },
    #[error("channel rates disagree beyond tolerance: solver {lambda_s}, verifier {lambda_v}")]
    RateMismatch { lambda_s: f64, lambda_v: f64 },
    #[error("solver amplitude {a_s} must exceed verifier amplitude {a_v}")]
    AmplitudeOrdering { a_s: f64, a_v: f64 },
    #[error("solver offset {c_s} must not fall below verifier offset {c_v}")]
    OffsetOrdering { c_s: f64, c_v: f64 },
    #[error("solver channel shows no decay to recover a rate from")]
    SolverNotDecaying,
    #[error("observed values have no variance, coefficient of determination is undefined")]
    ZeroVariance,
}

/// How an exponential fit terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    /// Refinement reached a step below tolerance.
    Converged,
    /// Refinement ran out of iterations; parameters are the best found.
    MaxIterations,
    /// Input was constant, so only the offset is meaningful.
    Degenerate,
    /// A flat model beat every decaying candidate; rate and amplitude are 0.
    NoDecay,
}

/// Result of fitting `y(t) = amplitude * exp(-rate * t) + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFit {
    pub amplitude: f64,
    pub rate: f64,
    pub offset: f64,
    /// Coefficient of determination; 0 when the input had no variance.
    pub r_squared: f64,
    /// Euclidean norm of the residual vector.
    pub residual_norm: f64,
    /// Refinement iterations consumed (0 when refinement never ran).
    pub iterations: u32,
    pub status: FitStatus,
}

impl ExpFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.amplitude * libm::exp(-self.rate * t) + self.offset
    }

    pub fn converged(&self) -> bool {
        self.status == FitStatus::Converged
    }
}

fn validate_series(times: &[f64], values: &[f64], needed: usize) -> Result<(), FitError> {
    if times.len() != values.len() {
        return Err(FitError::LengthMismatch {
            left: times.len(),
            right: values.len(),
        });
    }
    if times.len() < needed {
        return Err(FitError::TooFewPoints {
            needed,
            got: times.len(),
        });
    }
    for i in 0..times.len() {
        if !(times[i].is_finite() && values[i].is_finite()) {
            return Err(FitError::NonFiniteData { index: i });
        }
        if i > 0 && times[i] <= times[i - 1] {
            return Err(FitError::NonIncreasingTime { index: i });
        }
    }
    Ok(())
}

/// Linear coefficients `(a, c)` minimizing `sum (y - a*x - c)^2`, or `None`
/// when the basis is numerically collinear with the constant.
fn solve_linear_pair(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let det = n * sxx - sx * sx;
    if libm::fabs(det) <= 1e-12 * libm::fabs(n * sxx).max(1e-300) {
        return None;
    }
    Some(((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det))
}

fn sum_sq_residuals(times: &[f64], values: &[f64], a: f64, rate: f64, c: f64) -> f64 {
    let mut ssr = 0.0;
    for (&t, &y) in times.iter().zip(values) {
        let r = y - (a * libm::exp(-rate * t) + c);
        ssr += r * r;
    }
    ssr
}

fn finish_exp_fit(
    times: &[f64],
    values: &[f64],
    amplitude: f64,
    rate: f64,
    offset: f64,
    iterations: u32,
    status: FitStatus,
) -> ExpFit {
    let mut fit = ExpFit {
        amplitude,
        rate,
        offset,
        r_squared: 0.0,
        residual_norm: 0.0,
        iterations,
        status,
    };
    // Recompute goodness-of-fit through the public predictor so downstream
    // consumers holding only (amplitude, rate, offset) and the raw samples
    // reproduce these two numbers bit for bit.
    let predicted: Vec<f64> = times.iter().map(|&t| fit.predict(t)).collect();
    let mut ssr = 0.0;
    for (&y, &p) in values.iter().zip(&predicted) {
        ssr += (y - p) * (y - p);
    }
    fit.residual_norm = libm::sqrt(ssr);
    fit.r_squared = r_squared(values, &predicted).unwrap_or(0.0);
    fit
}

/// Fits `y(t) = A*exp(-rate*t) + C` with `rate >= 0`.
///
/// Constant inputs return `Degenerate` immediately; inputs where no decaying
/// candidate beats the flat model return `NoDecay`. Both are ordinary
/// results, not errors — callers decide whether a non-decaying channel is
/// acceptable.
pub fn fit_exponential(times: &[f64], values: &[f64]) -> Result<ExpFit, FitError> {
    validate_series(times, values, 3)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &y in values {
        lo = lo.min(y);
        hi = hi.max(y);
    }
    if hi - lo <= FLAT_SPREAD {
        return Ok(finish_exp_fit(
            times,
            values,
            0.0,
            0.0,
            mean,
            0,
            FitStatus::Degenerate,
        ));
    }

    // Stage 1: grid over the rate, linear pair solved exactly per candidate.
    // The flat model (rate 0, amplitude 0) competes as candidate zero.
    let flat_ssr = values.iter().map(|&y| (y - mean) * (y - mean)).sum::<f64>();
    let mut best = (0.0, 0.0, mean, flat_ssr);
    let log_lo = libm::log(RATE_GRID_LO);
    let log_step = (libm::log(RATE_GRID_HI) - log_lo) / (RATE_GRID_LEN - 1) as f64;
    let mut basis = Vec::with_capacity(times.len());
    for j in 0..RATE_GRID_LEN {
        let rate = libm::exp(log_lo + log_step * j as f64);
        basis.clear();
        basis.extend(times.iter().map(|&t| libm::exp(-rate * t)));
        let Some((a, c)) = solve_linear_pair(&basis, values) else {
            continue;
        };
        let ssr = sum_sq_residuals(times, values, a, rate, c);
        if ssr < best.3 {
            best = (a, rate, c, ssr);
        }
    }

    let (mut a, mut rate, mut c, mut ssr) = best;
    if rate == 0.0 {
        return Ok(finish_exp_fit(times, values, a, rate, c, 0, FitStatus::NoDecay));
    }

    // Stage 2: Levenberg-Marquardt on (A, rate, C). Damping scales the
    // normal-equation diagonal so the step is invariant under rescaling any
    // one parameter; steps that push the rate out of (0, inf) are rejected
    // like any non-improving step.
    let mut mu = LM_MU_INIT;
    let mut iterations = 0;
    let mut status = FitStatus::MaxIterations;
    while iterations < GN_MAX_ITERS {
        iterations += 1;
        let mut jtj = [[0.0_f64; 3]; 3];
        let mut jtr = [0.0_f64; 3];
        for (&t, &y) in times.iter().zip(values) {
            let e = libm::exp(-rate * t);
            let j = [e, -a * t * e, 1.0];
            let r = y - (a * e + c);
            for p in 0..3 {
                jtr[p] += j[p] * r;
                for q in 0..3 {
                    jtj[p][q] += j[p] * j[q];
                }
            }
        }
        let mut damped = jtj;
        for p in 0..3 {
            damped[p][p] += mu * jtj[p][p];
        }
        let Some(step) = mat3::solve(damped, jtr) else {
            mu *= 2.0;
            if mu > LM_MU_MAX {
                status = FitStatus::Converged;
                break;
            }
            continue;
        };
        let (a2, rate2, c2) = (a + step[0], rate + step[1], c + step[2]);
        let improved = rate2 > 0.0 && {
            let ssr2 = sum_sq_residuals(times, values, a2, rate2, c2);
            ssr2 < ssr && {
                ssr = ssr2;
                true
            }
        };
        if improved {
            let step_sq = step[0] * step[0] + step[1] * step[1] + step[2] * step[2];
            let scale_sq = a * a + rate * rate + c * c;
            (a, rate, c) = (a2, rate2, c2);
            mu = (mu * 0.5).max(1e-12);
            if step_sq <= GN_STEP_TOL * GN_STEP_TOL * (1.0 + scale_sq) {
                status = FitStatus::Converged;
                break;
            }
        } else {
            mu *= 2.0;
            if mu > LM_MU_MAX {
                // No direction improves at machine scale: a minimum.
                status = FitStatus::Converged;
                break;
            }
        }
    }
    Ok(finish_exp_fit(times, values, a, rate, c, iterations, status))
}

/// Straight-line regression of the gap's numerical time derivative on the
/// gap value. Under the model the slope is `-k*(alpha-beta)` and the
/// intercept `(alpha-beta)*b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residual_norm: f64,
}

/// Regresses `dG/dt` (central differences inside, three-point one-sided
/// stencils at the ends) on `G`. Requires uniformly spaced times: the
/// endpoint stencils assume one spacing, and drift there leaks straight into
/// the slope.
pub fn fit_gap_linear(times: &[f64], gaps: &[f64]) -> Result<LinearFit, FitError> {
    validate_series(times, gaps, 3)?;
    let n = times.len();
    let h = times[1] - times[0];
    for i in 1..n {
        if libm::fabs(times[i] - times[i - 1] - h) > 1e-9 * libm::fabs(h) + 1e-12 {
            return Err(FitError::NonUniformSpacing { index: i });
        }
    }

    let mut deriv = Vec::with_capacity(n);
    deriv.push((-3.0 * gaps[0] + 4.0 * gaps[1] - gaps[2]) / (2.0 * h));
    for i in 1..n - 1 {
        deriv.push((gaps[i + 1] - gaps[i - 1]) / (2.0 * h));
    }
    deriv.push((3.0 * gaps[n - 1] - 4.0 * gaps[n - 2] + gaps[n - 3]) / (2.0 * h));

    let nf = n as f64;
    let g_mean = gaps.iter().sum::<f64>() / nf;
    let d_mean = deriv.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&g, &d) in gaps.iter().zip(&deriv) {
        sxx += (g - g_mean) * (g - g_mean);
        sxy += (g - g_mean) * (d - d_mean);
    }
    let (slope, intercept) = if sxx > 0.0 {
        let s = sxy / sxx;
        (s, d_mean - s * g_mean)
    } else {
        // A constant gap pins the line's height but not its tilt.
        (0.0, d_mean)
    };

    let (mut ssr, mut sst) = (0.0, 0.0);
    for (&g, &d) in gaps.iter().zip(&deriv) {
        let r = d - (slope * g + intercept);
        ssr += r * r;
        sst += (d - d_mean) * (d - d_mean);
    }
    let r_squared = if sst <= 1e-30 {
        if ssr <= 1e-30 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ssr / sst
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        residual_norm: libm::sqrt(ssr),
    })
}

/// Model constants recovered from a pair of channel fits under the `k = 1`
/// normalization (only `k*(alpha - beta)` and `b/k` are observable, so one
/// of the three is pinned).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveredParams {
    /// Shared decay rate, weighted toward the channel with smaller residual.
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
    /// Asymptotic gap `b/k`; equal to `b` under the normalization.
    pub g_inf: f64,
    /// `None` when the verifier never moved (`beta = 0`).
    pub alpha_over_beta: Option<f64>,
    /// False when the data forced `beta < 0`, outside the model family.
    pub identifiable: bool,
}

/// Inverts the closed-form trajectory shape: from per-channel `(A, rate, C)`
/// back to `(alpha, beta, b)` with `k = 1`.
///
/// The two rates must agree within `rate_tolerance` (relative to the larger)
/// except when the verifier channel is flat, which is read as `beta = 0` and
/// the solver rate is used alone.
pub fn recover_params(
    fit_s: &ExpFit,
    fit_v: &ExpFit,
    rate_tolerance: f64,
) -> Result<RecoveredParams, FitError> {
    if matches!(fit_s.status, FitStatus::Degenerate | FitStatus::NoDecay) {
        return Err(FitError::SolverNotDecaying);
    }
    let (a_s, c_s) = (fit_s.amplitude, fit_s.offset);
    let (a_v, c_v) = (fit_v.amplitude, fit_v.offset);
    if c_s < c_v {
        return Err(FitError::OffsetOrdering { c_s, c_v });
    }
    let b = c_s - c_v;

    let verifier_flat = matches!(fit_v.status, FitStatus::Degenerate | FitStatus::NoDecay)
        || libm::fabs(a_v) <= 1e-12 * libm::fabs(a_s);
    if verifier_flat {
        if a_s <= 0.0 {
            return Err(FitError::AmplitudeOrdering { a_s, a_v: 0.0 });
        }
        let lambda = fit_s.rate;
        return Ok(RecoveredParams {
            lambda,
            alpha: lambda,
            beta: 0.0,
            b,
            g_inf: b,
            alpha_over_beta: None,
            identifiable: true,
        });
    }

    let (lambda_s, lambda_v) = (fit_s.rate, fit_v.rate);
    let scale = libm::fabs(lambda_s).max(libm::fabs(lambda_v));
    if libm::fabs(lambda_s - lambda_v) > rate_tolerance * scale {
        return Err(FitError::RateMismatch { lambda_s, lambda_v });
    }
    if a_s <= a_v {
        return Err(FitError::AmplitudeOrdering { a_s, a_v });
    }
    // Inverse-residual weighting: the cleaner channel decides the rate.
    let w_s = 1.0 / (fit_s.residual_norm * fit_s.residual_norm + 1e-300);
    let w_v = 1.0 / (fit_v.residual_norm * fit_v.residual_norm + 1e-300);
    let lambda = (w_s * lambda_s + w_v * lambda_v) / (w_s + w_v);

    let alpha = lambda * a_s / (a_s - a_v);
    let beta = lambda * a_v / (a_s - a_v);
    Ok(RecoveredParams {
        lambda,
        alpha,
        beta,
        b,
        g_inf: b,
        alpha_over_beta: if beta > 0.0 { Some(alpha / beta) } else { None },
        identifiable: beta >= 0.0,
    })
}

/// `1 - SSR/SST` for a predicted series against observations. Errors when
/// the observations carry no variance instead of inventing a convention.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<f64, FitError> {
    if observed.len() != predicted.len() {
        return Err(FitError::LengthMismatch {
            left: observed.len(),
            right: predicted.len(),
        });
    }
    if observed.is_empty() {
        return Err(FitError::TooFewPoints { needed: 1, got: 0 });
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let (mut ssr, mut sst) = (0.0, 0.0);
    for (&y, &p) in observed.iter().zip(predicted) {
        ssr += (y - p) * (y - p);
        sst += (y - mean) * (y - mean);
    }
    if sst <= 1e-30 {
        return Err(FitError::ZeroVariance);
    }
    Ok(1.0 - ssr / sst)
}
