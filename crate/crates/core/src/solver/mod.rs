//! The two-stage alternating solver.
//!
//! Per cell and per Dinkelbach iteration:
//! 1. reflection step: pick `beta` from the KKT candidates at fixed `alpha`,
//! 2. power-split step: roots of the stationarity quadratic plus the
//!    constraint-active points, best feasible candidate wins,
//! 3. projected subgradient update of the Lagrange multipliers,
//! 4. `theta <- R_sum / P_T`, stopping once `|F(theta)|` is below tolerance.
//!
//! Cells are coupled only through co-channel interference; [`solve_network`]
//! repeats Gauss-Seidel sweeps of [`solve_cell`] until the total EE settles.

mod cell;
mod dual;
mod network;
mod power_split;
mod reflection;

use serde::{Deserialize, Serialize};

use crate::channel::Allocation;
use crate::error::{Error, Result};
use crate::objective::FeasibilityReport;

pub use cell::{feasible_alpha_interval, solve_cell, CellSolution, CellStart, PROBE_ALPHA_N};
pub use dual::update_multipliers;
pub use network::{solve_network, NetworkSolution};
pub use power_split::{
    lagrangian, lagrangian_gradient_offset, power_split_closed_form, quadratic_coefficients,
    rate_active_bounds, PowerSplit, QuadCoefficients, Roots, ALPHA_N_MAX,
};
pub use reflection::{reflection_closed_form, reflection_step};

/// Lagrange multipliers of one cell plus its Dinkelbach parameter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Multipliers {
    /// Near-vehicle rate constraint (C1).
    pub mu_n: f64,
    /// Far-vehicle rate constraint (C2).
    pub mu_f: f64,
    /// Power budget (C3).
    pub lambda: f64,
    /// Reflection upper bound (C5).
    pub tau: f64,
    /// Power split (C4).
    pub eta: f64,
    pub theta: f64,
}

/// Which root of the stationarity quadratic to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootBranch {
    /// Evaluate every candidate and keep the feasible `F(theta)` maximizer.
    #[default]
    FeasibleBest,
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Absolute tolerance on `|F(theta)|`.
    pub dinkelbach_tol: f64,
    /// Relative tolerance on the change of total EE between sweeps.
    pub sweep_tol: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub max_sweeps: usize,
    pub subgradient_step0: f64,
    /// Extra geometric decay on top of the `1/sqrt(t)` schedule.
    pub step_decay: f64,
    pub root_branch_policy: RootBranch,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dinkelbach_tol: 1e-4,
            sweep_tol: 1e-4,
            max_outer_iters: 50,
            max_inner_iters: 20,
            max_sweeps: 50,
            subgradient_step0: 0.1,
            step_decay: 1.0,
            root_branch_policy: RootBranch::FeasibleBest,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dinkelbach_tol", self.dinkelbach_tol),
            ("sweep_tol", self.sweep_tol),
            ("subgradient_step0", self.subgradient_step0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, "must be finite and > 0"));
            }
        }
        for (name, v) in [
            ("max_outer_iters", self.max_outer_iters),
            ("max_inner_iters", self.max_inner_iters),
            ("max_sweeps", self.max_sweeps),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(Error::config("step_decay", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Subgradient step for the `t`-th multiplier update (1-based):
    /// `step0 * decay^(t-1) / sqrt(t)`.
    pub fn step(&self, t: usize) -> f64 {
        let t = t.max(1) as f64;
        self.subgradient_step0 * self.step_decay.powf(t - 1.0) / t.sqrt()
    }
}

/// One Dinkelbach iteration (cell) or one Gauss-Seidel sweep (network).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    /// Parameter used in this iteration (summed over cells for a sweep).
    pub theta: f64,
    /// `F(theta)` at the allocation produced by this iteration.
    pub f_value: f64,
    pub total_ee: f64,
    pub allocations: Vec<Allocation>,
    pub reports: Vec<FeasibilityReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
}

impl SolveTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.theta)
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// True when `theta` never decreases from one record to the next.
    pub fn theta_non_decreasing(&self) -> bool {
        self.records.windows(2).all(|w| w[1].theta >= w[0].theta)
    }
}
