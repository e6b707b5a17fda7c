//! The continuous model and its closed form.
//!
//! Both channels decay in proportion to a shared energy `e = k*g - b` of the
//! gap `g = u_s - u_v`, the solver at rate `alpha` and the verifier at
//! `beta`:
//!
//! ```text
//! du_s/dt = -alpha * e(t)        du_v/dt = -beta * e(t)
//! ```
//!
//! With `alpha > beta` the gap contracts as `g(t) = delta*exp(-lambda*t) +
//! b/k` where `lambda = k*(alpha - beta)` and `delta` is the initial excess
//! over the limiting gap `b/k`; both channels land at finite limits.

use alloc::vec::Vec;
use thiserror::Error;

use crate::trajectory::{Trajectory, TrajectoryPoint};

const MAX_STEPS: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DynamicsError {
    #[error("model constants must be finite")]
    NonFiniteParams,
    #[error("decay rates must satisfy alpha > beta >= 0, got alpha={alpha} beta={beta}")]
    RateOrdering { alpha: f64, beta: f64 },
    #[error("k*(alpha - beta) must be positive, got {rate}")]
    NonPositiveRate { rate: f64 },
    #[error("initial state must be finite")]
    NonFiniteInitial,
    #[error("initial state must satisfy u_s0 > u_v0, got u_s0={u_s0} u_v0={u_v0}")]
    InitialOrdering { u_s0: f64, u_v0: f64 },
    #[error("time must be finite and nonnegative, got {t}")]
    InvalidTime { t: f64 },
    #[error("tolerance must be positive and finite, got {epsilon}")]
    InvalidTolerance { epsilon: f64 },
    #[error("initial gap excess {delta} is not positive: the gap already sits at or below its limit")]
    GapAtLimit { delta: f64 },
    #[error("step size must be positive and finite, got {step}")]
    InvalidStep { step: f64 },
    #[error("step size {step} needs more than 1e8 steps for this horizon")]
    StepTooSmall { step: f64 },
    #[error("state became non-finite at t={t}")]
    Diverged { t: f64 },
}

/// Model constants. `gamma` scales the multiplicative verifier boost of the
/// discrete cross-improvement map and is ignored by the continuous system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams {
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub b: f64,
    pub gamma: f64,
}

impl DynamicsParams {
    pub fn new(alpha: f64, beta: f64, k: f64, b: f64) -> Result<Self, DynamicsError> {
        let p = DynamicsParams {
            alpha,
            beta,
            k,
            b,
            gamma: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self, DynamicsError> {
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    /// The constraints the closed form relies on: finite constants,
    /// `alpha > beta >= 0`, and a positive contraction rate.
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.alpha.is_finite()
            && self.beta.is_finite()
            && self.k.is_finite()
            && self.b.is_finite()
            && self.gamma.is_finite())
        {
            return Err(DynamicsError::NonFiniteParams);
        }
        if !(self.alpha > self.beta && self.beta >= 0.0) {
            return Err(DynamicsError::RateOrdering {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        let rate = self.decay_rate();
        if !(rate > 0.0) {
            return Err(DynamicsError::NonPositiveRate { rate });
        }
        Ok(())
    }

    /// Linearized energy `e = k*g - b` of a gap value.
    pub fn gap_potential(&self, gap: f64) -> f64 {
        self.k * gap - self.b
    }

    /// Gap contraction rate `lambda = k*(alpha - beta)`.
    pub fn decay_rate(&self) -> f64 {
        self.k * (self.alpha - self.beta)
    }
}

/// Starting uncertainties; the solver must start above the verifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialState {
    pub u_s0: f64,
    pub u_v0: f64,
}

impl InitialState {
    pub fn new(u_s0: f64, u_v0: f64) -> Result<Self, DynamicsError> {
        let s = InitialState { u_s0, u_v0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.u_s0.is_finite() && self.u_v0.is_finite()) {
            return Err(DynamicsError::NonFiniteInitial);
        }
        if !(self.u_s0 > self.u_v0) {
            return Err(DynamicsError::InitialOrdering {
                u_s0: self.u_s0,
                u_v0: self.u_v0,
            });
        }
        Ok(())
    }

    pub fn gap(&self) -> f64 {
        self.u_s0 - self.u_v0
    }
}

/// Constants of the closed-form solution.
///
/// `delta` is the initial excess of the gap over its limit `g_inf = b/k` and
/// decays as `exp(-lambda*t)`; `alpha_prime`/`beta_prime` are the total
/// uncertainty each channel sheds over the whole trajectory, so the limits
/// are `u_s0 - alpha_prime` and `u_v0 - beta_prime`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub delta: f64,
    pub lambda: f64,
    pub alpha_prime: f64,
    pub beta_prime: f64,
    pub g_inf: f64,
    pub u_s_inf: f64,
    pub u_v_inf: f64,
}

pub fn derive_constants(
    params: &DynamicsParams,
    init: &InitialState,
) -> Result<DerivedConstants, DynamicsError> {
    params.validate()?;
    init.validate()?;
    let g_inf = params.b / params.k;
    let delta = init.gap() - g_inf;
    let spread = params.alpha - params.beta;
    let alpha_prime = params.alpha * delta / spread;
    let beta_prime = params.beta * delta / spread;
    Ok(DerivedConstants {
        delta,
        lambda: params.decay_rate(),
        alpha_prime,
        beta_prime,
        g_inf,
        u_s_inf: init.u_s0 - alpha_prime,
        u_v_inf: init.u_v0 - beta_prime,
    })
}

/// One instant of the closed-form solution. `gap` is always exactly
/// `u_s - u_v`; `energy` equals `gap_potential(gap)` up to rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapabilityState {
    pub t: f64,
    pub u_s: f64,
    pub u_v: f64,
    pub gap: f64,
    pub energy: f64,
}

pub fn closed_form_state(
    params: &DynamicsParams,
    init: &InitialState,
    t: f64,
) -> Result<CapabilityState, DynamicsError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(DynamicsError::InvalidTime { t });
    }
    let c = derive_constants(params, init)?;
    let decay = libm::exp(-c.lambda * t);
    let u_s = c.alpha_prime * decay + c.u_s_inf;
    let u_v = c.beta_prime * decay + c.u_v_inf;
    Ok(CapabilityState {
        t,
        u_s,
        u_v,
        gap: u_s - u_v,
        energy: params.k * c.delta * decay,
    })
}

/// Sensitivity of the final solver uncertainty to the initial gap:
/// `d(u_s_inf)/d(g0) = -alpha/(alpha - beta)`. Widening the initial gap
/// lowers where the solver lands, and by more than one-for-one.
pub fn sensitivity_final_to_gap(params: &DynamicsParams) -> Result<f64, DynamicsError> {
    params.validate()?;
    Ok(-params.alpha / (params.alpha - params.beta))
}

/// Epochs until the gap sits within `epsilon` of its limit:
/// `ln(delta/epsilon)/lambda`, clamped at zero when the tolerance is already
/// met at the start. Errors when the gap starts at or below its limit
/// (`delta <= 0`), where no finite budget is meaningful.
pub fn epochs_to_tolerance(
    params: &DynamicsParams,
    init: &InitialState,
    epsilon: f64,
) -> Result<f64, DynamicsError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(DynamicsError::InvalidTolerance { epsilon });
    }
    let c = derive_constants(params, init)?;
    if !(c.delta > 0.0) {
        return Err(DynamicsError::GapAtLimit { delta: c.delta });
    }
    let t = libm::log(c.delta / epsilon) / c.lambda;
    Ok(if t > 0.0 { t } else { 0.0 })
}

/// Fixed-step RK4 integration of the coupled system with the linearized
/// energy `k*g - b`.
pub fn integrate_ode(
    params: &DynamicsParams,
    init: &InitialState,
    t_end: f64,
    step: f64,
) -> Result<Trajectory, DynamicsError> {
    integrate_ode_with(params, init, t_end, step, |g| params.gap_potential(g))
}

/// The same integrator with a caller-supplied energy function of the gap.
///
/// States are recorded at every step. The march restarts at every whole
/// epoch, so integer times within the horizon are hit exactly and can be
/// sampled without interpolation; the final step into each boundary is
/// shortened as needed.
pub fn integrate_ode_with<F>(
    params: &DynamicsParams,
    init: &InitialState,
    t_end: f64,
    step: f64,
    energy: F,
) -> Result<Trajectory, DynamicsError>
where
    F: Fn(f64) -> f64,
{
    params.validate()?;
    init.validate()?;
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(DynamicsError::InvalidTime { t: t_end });
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(DynamicsError::InvalidStep { step });
    }
    if t_end / step > MAX_STEPS {
        return Err(DynamicsError::StepTooSmall { step });
    }

    let deriv = |u_s: f64, u_v: f64| {
        let e = energy(u_s - u_v);
        (-params.alpha * e, -params.beta * e)
    };

    let mut points = Vec::with_capacity(2 + (t_end / step) as usize);
    let mut u_s = init.u_s0;
    let mut u_v = init.u_v0;
    let mut t = 0.0f64;
    points.push(TrajectoryPoint { t, u_s, u_v });

    let mut interval_start = 0.0f64;
    while t < t_end {
        let interval_end = if t_end < interval_start + 1.0 {
            t_end
        } else {
            interval_start + 1.0
        };
        let mut i = 0u64;
        while t < interval_end {
            i += 1;
            let mut t_next = interval_start + i as f64 * step;
            if t_next > interval_end {
                t_next = interval_end;
            }
            if t_next <= t {
                continue;
            }
            let h = t_next - t;
            let (k1s, k1v) = deriv(u_s, u_v);
            let (k2s, k2v) = deriv(u_s + 0.5 * h * k1s, u_v + 0.5 * h * k1v);
            let (k3s, k3v) = deriv(u_s + 0.5 * h * k2s, u_v + 0.5 * h * k2v);
            let (k4s, k4v) = deriv(u_s + h * k3s, u_v + h * k3v);
            u_s += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
            u_v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            t = t_next;
            if !(u_s.is_finite() && u_v.is_finite()) {
                return Err(DynamicsError::Diverged { t });
            }
            points.push(TrajectoryPoint { t, u_s, u_v });
        }
        interval_start = interval_end;
    }
    Ok(Trajectory::new_unchecked(points, "rk4"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_params() -> DynamicsParams {
        DynamicsParams::new(2.0, 1.0, 1.0, 0.5).unwrap()
    }

    fn example_init() -> InitialState {
        InitialState::new(3.0, 1.0).unwrap()
    }

    #[test]
    fn derive_constants_worked_example() {
        let c = derive_constants(&example_params(), &example_init()).unwrap();
        assert_eq!(c.delta, 1.5);
        assert_eq!(c.lambda, 1.0);
        assert_eq!(c.alpha_prime, 3.0);
        assert_eq!(c.beta_prime, 1.5);
        assert_eq!(c.g_inf, 0.5);
        assert_eq!(c.u_s_inf, 0.0);
        assert_eq!(c.u_v_inf, -0.5);
    }

    #[test]
    fn closed_form_at_ln_two() {
        let s = closed_form_state(&example_params(), &example_init(), libm::log(2.0)).unwrap();
        assert!((s.u_s - 1.5).abs() < 1e-12);
        assert!((s.u_v - 0.25).abs() < 1e-12);
        assert!((s.gap - 1.25).abs() < 1e-12);
        assert!((s.energy - 0.75).abs() < 1e-12);
        assert_eq!(s.gap, s.u_s - s.u_v);
    }

    #[test]
    fn zero_delta_start_freezes_everything() {
        // b/k equals the initial gap, so nothing ever moves
        let p = DynamicsParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
        let init = InitialState::new(2.0, 1.0).unwrap();
        let c = derive_constants(&p, &init).unwrap();
        assert_eq!(c.delta, 0.0);
        assert_eq!(c.alpha_prime, 0.0);
        assert_eq!(c.beta_prime, 0.0);
        assert_eq!(c.u_s_inf, init.u_s0);
        assert_eq!(c.u_v_inf, init.u_v0);
    }

    #[test]
    fn budget_worked_example() {
        let t = epochs_to_tolerance(&example_params(), &example_init(), 0.015).unwrap();
        assert!((t - libm::log(100.0)).abs() < 1e-12);
    }

    #[test]
    fn budget_clamps_to_zero_for_loose_tolerance() {
        let t = epochs_to_tolerance(&example_params(), &example_init(), 2.0).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn budget_rejects_bad_tolerance_and_vacuous_gap() {
        assert!(matches!(
            epochs_to_tolerance(&example_params(), &example_init(), 0.0),
            Err(DynamicsError::InvalidTolerance { .. })
        ));
        // b/k = 3 exceeds the initial gap of 2
        let p = DynamicsParams::new(2.0, 1.0, 1.0, 3.0).unwrap();
        assert!(matches!(
            epochs_to_tolerance(&p, &example_init(), 0.1),
            Err(DynamicsError::GapAtLimit { .. })
        ));
    }

    #[test]
    fn sensitivity_worked_example() {
        assert_eq!(sensitivity_final_to_gap(&example_params()).unwrap(), -2.0);
    }

    #[test]
    fn params_validation() {
        assert!(matches!(
            DynamicsParams::new(1.0, 1.0, 1.0, 0.0),
            Err(DynamicsError::RateOrdering { .. })
        ));
        assert!(matches!(
            DynamicsParams::new(1.0, 2.0, 1.0, 0.0),
            Err(DynamicsError::RateOrdering { .. })
        ));
        assert!(matches!(
            DynamicsParams::new(2.0, 1.0, 0.0, 0.0),
            Err(DynamicsError::NonPositiveRate { .. })
        ));
        assert!(matches!(
            DynamicsParams::new(2.0, 1.0, -1.0, 0.0),
            Err(DynamicsError::NonPositiveRate { .. })
        ));
        assert!(matches!(
            DynamicsParams::new(f64::NAN, 1.0, 1.0, 0.0),
            Err(DynamicsError::NonFiniteParams)
        ));
        assert!(matches!(
            example_params().with_gamma(f64::INFINITY),
            Err(DynamicsError::NonFiniteParams)
        ));
    }

    #[test]
    fn initial_state_validation() {
        assert!(matches!(
            InitialState::new(1.0, 1.0),
            Err(DynamicsError::InitialOrdering { .. })
        ));
        assert!(matches!(
            InitialState::new(f64::NAN, 0.0),
            Err(DynamicsError::NonFiniteInitial)
        ));
    }

    #[test]
    fn closed_form_rejects_negative_time() {
        assert!(matches!(
            closed_form_state(&example_params(), &example_init(), -1.0),
            Err(DynamicsError::InvalidTime { .. })
        ));
    }

    #[test]
    fn integrator_validates_inputs() {
        let (p, init) = (example_params(), example_init());
        assert!(matches!(
            integrate_ode(&p, &init, 1.0, 0.0),
            Err(DynamicsError::InvalidStep { .. })
        ));
        assert!(matches!(
            integrate_ode(&p, &init, 1.0, -0.1),
            Err(DynamicsError::InvalidStep { .. })
        ));
        assert!(matches!(
            integrate_ode(&p, &init, -1.0, 0.1),
            Err(DynamicsError::InvalidTime { .. })
        ));
        assert!(matches!(
            integrate_ode(&p, &init, 10.0, 1e-12),
            Err(DynamicsError::StepTooSmall { .. })
        ));
    }

    #[test]
    fn integrator_lands_on_whole_epochs() {
        let tr = integrate_ode(&example_params(), &example_init(), 3.0, 0.3).unwrap();
        for e in 0..=3 {
            assert!(
                tr.points().iter().any(|p| p.t == e as f64),
                "missing exact epoch {e}"
            );
        }
        assert_eq!(tr.points().last().unwrap().t, 3.0);
    }

    #[test]
    fn integrator_tracks_closed_form() {
        let (p, init) = (example_params(), example_init());
        let tr = integrate_ode(&p, &init, 5.0, 0.01).unwrap();
        for pt in tr.points() {
            let cf = closed_form_state(&p, &init, pt.t).unwrap();
            assert!((pt.u_s - cf.u_s).abs() < 1e-8, "u_s off at t={}", pt.t);
            assert!((pt.u_v - cf.u_v).abs() < 1e-8, "u_v off at t={}", pt.t);
        }
    }

    #[test]
    fn integrator_with_quadratic_energy_keeps_gap_monotone() {
        let (p, init) = (example_params(), example_init());
        let tr = integrate_ode_with(&p, &init, 5.0, 0.01, |g| g * g).unwrap();
        let gaps: alloc::vec::Vec<f64> = tr.points().iter().map(|pt| pt.gap()).collect();
        for w in gaps.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }
}
