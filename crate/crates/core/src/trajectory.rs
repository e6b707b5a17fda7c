//! Sampled (t, u_s, u_v) sequences shared by the integrator and the fitters.

use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("sample times must be strictly increasing (violation at index {index})")]
    NonIncreasingTime { index: usize },
    #[error("trajectory values must be finite (violation at index {index})")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub u_s: f64,
    pub u_v: f64,
}

impl TrajectoryPoint {
    pub fn gap(&self) -> f64 {
        self.u_s - self.u_v
    }
}

/// An ordered sample of the two uncertainty channels plus a free-form
/// provenance label (where the numbers came from: a file path, "rk4", ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
    label: String,
}

impl Trajectory {
    /// Validates finiteness and strictly increasing times.
    pub fn new(
        points: Vec<TrajectoryPoint>,
        label: impl Into<String>,
    ) -> Result<Self, TrajectoryError> {
        for (i, p) in points.iter().enumerate() {
            if !(p.t.is_finite() && p.u_s.is_finite() && p.u_v.is_finite()) {
                return Err(TrajectoryError::NonFinite { index: i });
            }
            if i > 0 && p.t <= points[i - 1].t {
                return Err(TrajectoryError::NonIncreasingTime { index: i });
            }
        }
        Ok(Self {
            points,
            label: label.into(),
        })
    }

    /// For producers whose construction already guarantees the invariants.
    pub(crate) fn new_unchecked(points: Vec<TrajectoryPoint>, label: impl Into<String>) -> Self {
        Self {
            points,
            label: label.into(),
        }
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn solver_series(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.t, p.u_s)).collect()
    }

    pub fn verifier_series(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.t, p.u_v)).collect()
    }

    pub fn gap_series(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.t, p.gap())).collect()
    }
}
