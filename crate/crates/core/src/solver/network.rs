use serde::Serialize;

use crate::channel::{interference, Allocation, CellChannels, NetworkConfig, Vehicle};
use crate::error::{Error, Result};
use crate::objective::{CellProblem, EEBreakdown, FeasibilityReport};
use crate::solver::{
    solve_cell, CellStart, SolveTrace, SolverSettings, TraceRecord, PROBE_ALPHA_N,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkSolution {
    pub allocations: Vec<Allocation>,
    pub breakdowns: Vec<EEBreakdown>,
    pub reports: Vec<FeasibilityReport>,
    /// Sum of per-cell energy efficiencies.
    pub total_ee: f64,
    pub sweeps: usize,
    /// Dinkelbach iterations summed over sweeps, counting the slowest cell
    /// of each sweep (cells could run side by side within a sweep).
    pub iterations: usize,
    /// Network EE after each counted iteration; cells that finished early
    /// hold their last value.
    pub ee_by_iteration: Vec<f64>,
    pub converged: bool,
    /// One record per sweep.
    pub trace: SolveTrace,
}

/// Gauss-Seidel sweeps of [`solve_cell`] over all cells.
///
/// Each cell sees interference from the other cells' latest allocations.
/// Sweeps stop once the total EE changes by less than `sweep_tol` (relative)
/// and every cell converged, or after `max_sweeps`.
pub fn solve_network(
    channels: &[CellChannels],
    config: &NetworkConfig,
    settings: &SolverSettings,
) -> Result<NetworkSolution> {
    config.validate()?;
    settings.validate()?;
    if channels.len() != config.num_cells {
        return Err(Error::LengthMismatch {
            expected: config.num_cells,
            actual: channels.len(),
        });
    }
    let s = channels.len();
    let budget = config.power_budget_w();
    let beta_max = config.backscatter.max_beta();
    let mut allocations = vec![
        Allocation {
            alpha_n: PROBE_ALPHA_N,
            alpha_f: 1.0 - PROBE_ALPHA_N,
            beta: beta_max,
            p_s_w: budget,
        };
        s
    ];
    let mut starts: Vec<Option<CellStart>> = vec![None; s];
    let mut breakdowns = Vec::with_capacity(s);
    let mut reports = Vec::with_capacity(s);
    let mut trace = SolveTrace::default();
    let mut ee_by_iteration = Vec::new();
    let mut iterations = 0;
    let mut previous: Option<f64> = None;
    let mut converged = false;

    for _ in 0..settings.max_sweeps {
        breakdowns.clear();
        reports.clear();
        let mut infeasible = Vec::new();
        let mut cell_ee_traces: Vec<Vec<f64>> = Vec::with_capacity(s);
        let mut thetas = 0.0;
        let mut f_values = 0.0;
        let mut all_converged = true;

        for cell in 0..s {
            let powers: Vec<f64> = allocations.iter().map(Allocation::radiated_power).collect();
            let i_n = interference(cell, Vehicle::Near, channels, &powers)?;
            let i_f = interference(cell, Vehicle::Far, channels, &powers)?;
            let problem = CellProblem::new(&channels[cell], config, i_n, i_f);
            match solve_cell(&problem, settings, starts[cell].as_ref()) {
                Ok(sol) => {
                    allocations[cell] = sol.allocation;
                    starts[cell] = Some(CellStart {
                        allocation: sol.allocation,
                        multipliers: sol.multipliers,
                    });
                    if let Some(last) = sol.trace.last() {
                        thetas += last.theta;
                        f_values += last.f_value;
                    }
                    cell_ee_traces.push(sol.trace.records.iter().map(|r| r.total_ee).collect());
                    breakdowns.push(sol.breakdown);
                    reports.push(sol.report);
                    all_converged &= sol.converged;
                }
                Err(Error::Infeasible { .. }) => infeasible.push(cell),
                Err(e) => return Err(e),
            }
        }
        if !infeasible.is_empty() {
            return Err(Error::NetworkInfeasible {
                cells: infeasible,
                num_cells: s,
            });
        }

        let depth = cell_ee_traces.iter().map(Vec::len).max().unwrap_or(0);
        iterations += depth;
        ee_by_iteration.extend((0..depth).map(|j| {
            cell_ee_traces
                .iter()
                .map(|t| t[j.min(t.len() - 1)])
                .sum::<f64>()
        }));

        let total: f64 = breakdowns.iter().map(|b| b.ee).sum();
        trace.records.push(TraceRecord {
            theta: thetas,
            f_value: f_values,
            total_ee: total,
            allocations: allocations.clone(),
            reports: reports.clone(),
        });
        let steady = s == 1
            || previous
                .is_some_and(|p| (total - p).abs() <= settings.sweep_tol * total.abs().max(1e-12));
        if steady && all_converged {
            converged = true;
            break;
        }
        previous = Some(total);
    }

    let total_ee = breakdowns.iter().map(|b| b.ee).sum();
    Ok(NetworkSolution {
        allocations,
        breakdowns,
        reports,
        total_ee,
        sweeps: trace.len(),
        iterations,
        ee_by_iteration,
        converged,
        trace,
    })
}
