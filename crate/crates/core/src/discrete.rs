//! Per-epoch update maps and allocation schedules.
//!
//! One epoch first applies the cross-improvement boost `u_v / (1 +
//! gamma*eta_t)` to the verifier, then the shared energy update to both
//! channels. In homogeneous coordinates `u = [u_v, u_s, 1]` the epoch is the
//! affine map `u(t) = (I - M_t) u(t-1)`; a whole horizon is the ordered
//! product of those maps, and `exp(-aggregate)` of a single horizon matrix
//! approximates the product using only the schedule's total allocation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::dynamics::{DynamicsError, DynamicsParams, InitialState};
use crate::mat3;

/// Realized per-epoch sums may drift this far past 1 before rejection.
const ETA_SUM_SLACK: f64 = 1e-12;
/// Allowed gap between a custom schedule's realized sum and its stated total.
const TOTAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscreteError {
    #[error("schedule horizon must be at least 1")]
    EmptyHorizon,
    #[error("allocation fraction at epoch {epoch} must lie in [0, 1]")]
    EtaOutOfRange { epoch: usize },
    #[error("allocation fractions sum to {sum}, beyond the budget of 1")]
    EtaSumTooLarge { sum: f64 },
    #[error("total allocation must lie in [0, 1], got {total}")]
    TotalOutOfRange { total: f64 },
    #[error("allocation fractions sum to {sum} but the schedule claims {total}")]
    TotalMismatch { sum: f64, total: f64 },
    #[error("late epoch {epoch} is outside 1..={horizon}")]
    LateEpochOutOfRange { epoch: usize, horizon: usize },
    #[error("allocation fraction must lie in [0, 1], got {eta}")]
    InvalidEta { eta: f64 },
    #[error("boost denominator 1 + gamma*eta must stay positive, got {value}")]
    BoostNotPositive { value: f64 },
    #[error("boost denominator 1 + gamma*eta went nonpositive at epoch {epoch}")]
    BoostNotPositiveAt { epoch: usize },
    #[error("model constants must be finite")]
    NonFiniteParams,
    #[error("schedules must share one horizon to be comparable")]
    MixedHorizons,
    #[error("at least one schedule is required")]
    NoSchedules,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// How the verifier-training budget is spread over the horizon: `eta[t]` is
/// the fraction spent in epoch `t+1`, the fractions sum to at most 1.
///
/// The total passed at construction is kept verbatim (the realized sum is
/// only validated against it), so schedules built for the same total produce
/// bitwise-identical aggregate matrices regardless of how the mass is split.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    eta: Vec<f64>,
    total: f64,
    budget: Option<u64>,
}

impl Schedule {
    fn build(eta: Vec<f64>, total: f64) -> Result<Self, DiscreteError> {
        if eta.is_empty() {
            return Err(DiscreteError::EmptyHorizon);
        }
        for (i, &e) in eta.iter().enumerate() {
            if !(0.0..=1.0).contains(&e) {
                return Err(DiscreteError::EtaOutOfRange { epoch: i + 1 });
            }
        }
        let sum: f64 = eta.iter().sum();
        if sum > 1.0 + ETA_SUM_SLACK {
            return Err(DiscreteError::EtaSumTooLarge { sum });
        }
        Ok(Self {
            eta,
            total,
            budget: None,
        })
    }

    fn check_total(total: f64) -> Result<(), DiscreteError> {
        if !(total.is_finite() && (0.0..=1.0).contains(&total)) {
            return Err(DiscreteError::TotalOutOfRange { total });
        }
        Ok(())
    }

    /// All mass in the first epoch.
    pub fn early(horizon: usize, total: f64) -> Result<Self, DiscreteError> {
        Self::check_total(total)?;
        if horizon == 0 {
            return Err(DiscreteError::EmptyHorizon);
        }
        let mut eta = vec![0.0; horizon];
        eta[0] = total;
        Self::build(eta, total)
    }

    /// The same mass in every epoch.
    pub fn uniform(horizon: usize, total: f64) -> Result<Self, DiscreteError> {
        Self::check_total(total)?;
        if horizon == 0 {
            return Err(DiscreteError::EmptyHorizon);
        }
        Self::build(vec![total / horizon as f64; horizon], total)
    }

    /// All mass at one epoch (1-indexed) late in the horizon.
    pub fn late(horizon: usize, total: f64, epoch: usize) -> Result<Self, DiscreteError> {
        Self::check_total(total)?;
        if horizon == 0 {
            return Err(DiscreteError::EmptyHorizon);
        }
        if epoch == 0 || epoch > horizon {
            return Err(DiscreteError::LateEpochOutOfRange { epoch, horizon });
        }
        let mut eta = vec![0.0; horizon];
        eta[epoch - 1] = total;
        Self::build(eta, total)
    }

    /// Caller-supplied fractions, validated against the stated total.
    pub fn custom(eta: Vec<f64>, total: f64) -> Result<Self, DiscreteError> {
        Self::check_total(total)?;
        let s = Self::build(eta, total)?;
        let sum: f64 = s.eta.iter().sum();
        if libm::fabs(sum - total) > TOTAL_TOLERANCE {
            return Err(DiscreteError::TotalMismatch { sum, total });
        }
        Ok(s)
    }

    /// No cross-improvement at all: the self-improvement baseline.
    pub fn self_improvement(horizon: usize) -> Result<Self, DiscreteError> {
        Self::build(vec![0.0; horizon], 0.0)
    }

    /// Attach the response budget (informational only).
    pub fn with_budget(mut self, responses: u64) -> Self {
        self.budget = Some(responses);
        self
    }

    pub fn horizon(&self) -> usize {
        self.eta.len()
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    /// The total the schedule was built for (see the type docs).
    pub fn total_eta(&self) -> f64 {
        self.total
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }
}

/// One epoch of the update in homogeneous coordinates: `u(t) = (I - M) u(t-1)`
/// with `u = [u_v, u_s, 1]`. The third row is identically zero, so the affine
/// embedding survives every product exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMatrix {
    entries: mat3::Mat3,
}

impl StepMatrix {
    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.entries
    }
}

fn check_finite_params(params: &DynamicsParams) -> Result<(), DiscreteError> {
    if params.alpha.is_finite()
        && params.beta.is_finite()
        && params.k.is_finite()
        && params.b.is_finite()
        && params.gamma.is_finite()
    {
        Ok(())
    } else {
        Err(DiscreteError::NonFiniteParams)
    }
}

/// Update matrix for one epoch with cross-allocation `eta_t`. Only
/// finiteness and the boost sign are checked here, not the full parameter
/// ordering, so degenerate corners (k = 0 and friends) stay constructible.
pub fn build_step_matrix(
    params: &DynamicsParams,
    eta_t: f64,
) -> Result<StepMatrix, DiscreteError> {
    check_finite_params(params)?;
    if !(0.0..=1.0).contains(&eta_t) {
        return Err(DiscreteError::InvalidEta { eta: eta_t });
    }
    let denom = 1.0 + params.gamma * eta_t;
    if !(denom > 0.0) {
        return Err(DiscreteError::BoostNotPositive { value: denom });
    }
    let (alpha, beta, k, b) = (params.alpha, params.beta, params.k, params.b);
    Ok(StepMatrix {
        entries: [
            [1.0 - (1.0 + beta * k) / denom, beta * k, -beta * b],
            [-alpha * k / denom, alpha * k, -alpha * b],
            [0.0, 0.0, 0.0],
        ],
    })
}

/// Everything one epoch did: the entering state (`pre_*`, equal to the
/// previous epoch's `post_*`), the boosted verifier value, the gap and
/// energy the update saw, and the resulting state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub pre_u_s: f64,
    pub pre_u_v: f64,
    pub boosted_u_v: f64,
    pub gap_c: f64,
    pub energy: f64,
    pub post_u_s: f64,
    pub post_u_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRun {
    pub records: Vec<StepRecord>,
    /// One-epoch gap contraction factor `1 - k*(alpha - beta)`.
    pub gap_step_factor: f64,
    /// Set when `|1 - k*(alpha - beta)| >= 1`: the unit-step map no longer
    /// contracts the gap, so the iteration may oscillate or diverge from the
    /// continuous solution it discretizes.
    pub stability_warning: bool,
}

impl DiscreteRun {
    /// Final `(u_s, u_v)`; `None` only for an empty record list, which no
    /// valid schedule produces.
    pub fn final_state(&self) -> Option<(f64, f64)> {
        self.records.last().map(|r| (r.post_u_s, r.post_u_v))
    }
}

/// Exact per-epoch iteration over a whole schedule.
pub fn simulate_discrete(
    params: &DynamicsParams,
    init: &InitialState,
    schedule: &Schedule,
) -> Result<DiscreteRun, DiscreteError> {
    params.validate()?;
    init.validate()?;
    let mut u_s = init.u_s0;
    let mut u_v = init.u_v0;
    let mut records = Vec::with_capacity(schedule.horizon());
    for (i, &eta) in schedule.eta().iter().enumerate() {
        let epoch = i + 1;
        let denom = 1.0 + params.gamma * eta;
        if !(denom > 0.0) {
            return Err(DiscreteError::BoostNotPositiveAt { epoch });
        }
        let boosted_u_v = u_v / denom;
        let gap_c = u_s - boosted_u_v;
        let energy = params.gap_potential(gap_c);
        let post_u_s = u_s - params.alpha * energy;
        let post_u_v = boosted_u_v - params.beta * energy;
        records.push(StepRecord {
            epoch,
            pre_u_s: u_s,
            pre_u_v: u_v,
            boosted_u_v,
            gap_c,
            energy,
            post_u_s,
            post_u_v,
        });
        u_s = post_u_s;
        u_v = post_u_v;
    }
    let gap_step_factor = 1.0 - params.decay_rate();
    Ok(DiscreteRun {
        records,
        gap_step_factor,
        stability_warning: libm::fabs(gap_step_factor) >= 1.0,
    })
}

/// Horizon-aggregated matrix whose exponential stands in for the ordered
/// product of per-epoch steps. Only the schedule's total enters — placement
/// is invisible at this order of approximation.
pub fn aggregate_matrix(
    params: &DynamicsParams,
    schedule: &Schedule,
) -> Result<StepMatrix, DiscreteError> {
    check_finite_params(params)?;
    let t = schedule.horizon() as f64;
    let shrunk = t - params.gamma * schedule.total_eta();
    let (alpha, beta, k, b) = (params.alpha, params.beta, params.k, params.b);
    Ok(StepMatrix {
        entries: [
            [t - (1.0 + beta * k) * shrunk, t * beta * k, -t * beta * b],
            [-alpha * k * shrunk, t * alpha * k, -t * alpha * b],
            [0.0, 0.0, 0.0],
        ],
    })
}

/// `[u_v, u_s, 1]` in the order the update matrices act on. `one` stays
/// exactly 1 through every operation here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyVector {
    pub u_v: f64,
    pub u_s: f64,
    pub one: f64,
}

/// The ordered product `(I - M_T) ... (I - M_1)` over the whole schedule:
/// the exact horizon map as one matrix. Its third row is `[0, 0, 1]`
/// exactly, and applying it to `[u_v0, u_s0, 1]` reproduces the per-epoch
/// iteration up to reassociated rounding.
pub fn exact_product_matrix(
    params: &DynamicsParams,
    schedule: &Schedule,
) -> Result<StepMatrix, DiscreteError> {
    let mut product = mat3::IDENTITY;
    for (i, &eta) in schedule.eta().iter().enumerate() {
        let step = build_step_matrix(params, eta).map_err(|e| match e {
            DiscreteError::BoostNotPositive { .. } => {
                DiscreteError::BoostNotPositiveAt { epoch: i + 1 }
            }
            other => other,
        })?;
        let one_step = mat3::add(&mat3::IDENTITY, &mat3::neg(&step.entries));
        product = mat3::mul(&one_step, &product);
    }
    Ok(StepMatrix { entries: product })
}

/// The horizon map the aggregate approximation stands in for:
/// `exp(-aggregate)`.
pub fn approx_product_matrix(
    params: &DynamicsParams,
    schedule: &Schedule,
) -> Result<StepMatrix, DiscreteError> {
    let m = aggregate_matrix(params, schedule)?;
    Ok(StepMatrix {
        entries: mat3::expm(&mat3::neg(&m.entries)),
    })
}

/// Closed-form shortcut for the whole horizon: `exp(-aggregate) * u(0)`.
pub fn approx_final_state(
    params: &DynamicsParams,
    init: &InitialState,
    schedule: &Schedule,
) -> Result<UncertaintyVector, DiscreteError> {
    init.validate()?;
    let e = approx_product_matrix(params, schedule)?;
    let v = mat3::mul_vec(&e.entries, &[init.u_v0, init.u_s0, 1.0]);
    Ok(UncertaintyVector {
        u_v: v[0],
        u_s: v[1],
        one: v[2],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOutcome {
    pub name: String,
    pub total_eta: f64,
    pub exact_u_s: f64,
    pub exact_u_v: f64,
    pub approx_u_s: f64,
    pub approx_u_v: f64,
    /// Max-abs difference between the exact product and the exponential
    /// shortcut over (u_v, u_s).
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleComparison {
    pub outcomes: Vec<ScheduleOutcome>,
    /// Exact final state under an all-zero allocation of the same horizon.
    pub baseline_u_s: f64,
    pub baseline_u_v: f64,
    /// max - min of exact final u_s across the compared schedules.
    pub spread_exact_u_s: f64,
}

/// Runs every named schedule exactly and through the exponential shortcut,
/// against the self-improvement baseline of the shared horizon.
pub fn compare_schedules(
    params: &DynamicsParams,
    init: &InitialState,
    schedules: &[(&str, &Schedule)],
) -> Result<ScheduleComparison, DiscreteError> {
    let Some(first) = schedules.first() else {
        return Err(DiscreteError::NoSchedules);
    };
    let horizon = first.1.horizon();
    if schedules.iter().any(|(_, s)| s.horizon() != horizon) {
        return Err(DiscreteError::MixedHorizons);
    }

    let baseline = simulate_discrete(params, init, &Schedule::self_improvement(horizon)?)?;
    let (baseline_u_s, baseline_u_v) = baseline.final_state().expect("horizon >= 1");

    let mut outcomes = Vec::with_capacity(schedules.len());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (name, schedule) in schedules {
        let run = simulate_discrete(params, init, schedule)?;
        let (exact_u_s, exact_u_v) = run.final_state().expect("horizon >= 1");
        let approx = approx_final_state(params, init, schedule)?;
        let d_v = libm::fabs(exact_u_v - approx.u_v);
        let d_s = libm::fabs(exact_u_s - approx.u_s);
        lo = lo.min(exact_u_s);
        hi = hi.max(exact_u_s);
        outcomes.push(ScheduleOutcome {
            name: String::from(*name),
            total_eta: schedule.total_eta(),
            exact_u_s,
            exact_u_v,
            approx_u_s: approx.u_s,
            approx_u_v: approx.u_v,
            discrepancy: if d_v > d_s { d_v } else { d_s },
        });
    }
    Ok(ScheduleComparison {
        outcomes,
        baseline_u_s,
        baseline_u_v,
        spread_exact_u_s: hi - lo,
    })
}
