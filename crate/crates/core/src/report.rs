//! Run records shared by all algorithms and schemes.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::metrics::{ReflectVector, TxBeams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    ObjectiveDecreased,
    MaxIters,
    SolverFailure,
    /// The scheme cannot run on this configuration (e.g. too few antennas
    /// for zero forcing).
    Inapplicable,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::ObjectiveDecreased => "objective_decreased",
            Termination::MaxIters => "max_iters",
            Termination::SolverFailure => "solver_failure",
            Termination::Inapplicable => "inapplicable",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Termination::Converged,
            Termination::ObjectiveDecreased,
            Termination::MaxIters,
            Termination::SolverFailure,
            Termination::Inapplicable,
        ]
        .into_iter()
        .find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub algorithm: String,
    /// Min-weighted SINR (linear) at the start and after every completed
    /// iteration.
    pub trace: Vec<f64>,
    /// Objective after every half-step, in execution order.
    pub half_trace: Vec<f64>,
    pub beams: TxBeams,
    pub reflect: ReflectVector,
    /// Min-weighted SINR of the returned `(beams, reflect)`.
    pub objective: f64,
    pub iterations: usize,
    pub wall: Duration,
    /// Duration of every reflective half-step.
    pub reflect_times: Vec<Duration>,
    pub termination: Termination,
    pub detail: Option<String>,
}

impl SolveReport {
    pub fn wall_ms(&self) -> f64 {
        self.wall.as_secs_f64() * 1e3
    }

    /// Largest relative drop between consecutive trace entries (0 if none).
    pub fn worst_drop(&self) -> f64 {
        self.trace
            .windows(2)
            .map(|w| (w[0] - w[1]) / w[0].abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}
