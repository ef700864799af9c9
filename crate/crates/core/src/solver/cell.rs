use serde::Serialize;

use crate::channel::Allocation;
use crate::error::{Error, Result};
use crate::objective::{dinkelbach_value, CellProblem, EEBreakdown, FeasibilityReport};
use crate::solver::{
    power_split_closed_form, quadratic_coefficients, rate_active_bounds, reflection_step,
    update_multipliers, Multipliers, SolveTrace, SolverSettings, TraceRecord, ALPHA_N_MAX,
};

/// Near-vehicle split of the feasibility probe and the cold start.
pub const PROBE_ALPHA_N: f64 = 0.25;

const DUAL_SETTLE_RTOL: f64 = 1e-12;

/// Warm start for [`solve_cell`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStart {
    pub allocation: Allocation,
    pub multipliers: Multipliers,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSolution {
    pub allocation: Allocation,
    pub multipliers: Multipliers,
    pub breakdown: EEBreakdown,
    pub report: FeasibilityReport,
    /// `|F(theta)|` fell below tolerance before the iteration cap.
    pub converged: bool,
    pub trace: SolveTrace,
}

impl CellSolution {
    /// Number of Dinkelbach iterations run.
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Range of `alpha_n` in `[0, 0.5]` meeting both rate floors at `beta`.
pub fn feasible_alpha_interval(problem: &CellProblem<'_>, beta: f64) -> Option<(f64, f64)> {
    let (lower, upper) = rate_active_bounds(problem, beta);
    let (lo, hi) = (lower.max(0.0), upper.min(ALPHA_N_MAX));
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Some((lo, hi))
    } else {
        None
    }
}

fn settled(a: &Multipliers, b: &Multipliers) -> bool {
    [
        (a.mu_n, b.mu_n),
        (a.mu_f, b.mu_f),
        (a.lambda, b.lambda),
        (a.tau, b.tau),
        (a.eta, b.eta),
    ]
    .iter()
    .all(|(x, y)| (x - y).abs() <= DUAL_SETTLE_RTOL * (1.0 + x.abs()))
}

/// Solves one cell with the neighbours' interference held fixed.
///
/// The rate floors are widest at full reflection (no reflection when the tag
/// is disabled), so the instance is declared infeasible when no split meets
/// both floors there. The error carries the report at the probe point
/// `(0.25, 0.75, beta_max)`.
pub fn solve_cell(
    problem: &CellProblem<'_>,
    settings: &SolverSettings,
    start: Option<&CellStart>,
) -> Result<CellSolution> {
    let beta_max = problem.backscatter.max_beta();
    let probe = problem.allocation(PROBE_ALPHA_N, beta_max);
    if feasible_alpha_interval(problem, beta_max).is_none() {
        return Err(Error::Infeasible {
            report: Box::new(problem.constraints(&probe)),
        });
    }

    let (mut alloc, mut mults) = match start {
        Some(s) => {
            let a = s.allocation;
            (
                problem.allocation(a.alpha_n, a.beta.min(beta_max)),
                s.multipliers,
            )
        }
        None => (probe, Multipliers::default()),
    };
    let mut trace = SolveTrace::default();
    let mut updates = 0usize;
    let mut best: Option<(Allocation, Multipliers, EEBreakdown, FeasibilityReport)> = None;
    let mut converged = false;

    for _ in 0..settings.max_outer_iters {
        let theta = mults.theta;
        let score = |alpha_n: f64, beta: f64| {
            let a = problem.allocation(alpha_n, beta);
            let b = problem.evaluate(&a);
            (
                problem.constraints(&a).all_ok(),
                dinkelbach_value(b.rate_sum(), b.power_total, theta),
            )
        };

        alloc.beta = reflection_step(problem, &alloc, theta);

        for _ in 0..settings.max_inner_iters {
            let beta = alloc.beta;
            let q = quadratic_coefficients(problem, beta, &mults, alloc.alpha_n);
            let (lower, upper) = rate_active_bounds(problem, beta);
            let split =
                power_split_closed_form(&q, settings.root_branch_policy, &[lower, upper], |a| {
                    score(a, beta)
                });
            alloc = problem.allocation(split.alpha_n, beta);
            let report = problem.constraints(&alloc);
            updates += 1;
            let next = update_multipliers(&mults, &report, settings.step(updates));
            let done = settled(&mults, &next);
            mults = next;
            if done {
                break;
            }
        }

        let breakdown = problem.evaluate(&alloc);
        let report = problem.constraints(&alloc);
        let f_value = dinkelbach_value(breakdown.rate_sum(), breakdown.power_total, theta);
        trace.records.push(TraceRecord {
            theta,
            f_value,
            total_ee: breakdown.ee,
            allocations: vec![alloc],
            reports: vec![report],
        });
        if report.all_ok() && best.as_ref().is_none_or(|b| breakdown.ee >= b.2.ee) {
            best = Some((alloc, mults, breakdown, report));
        }
        if f_value.abs() < settings.dinkelbach_tol {
            converged = true;
            mults.theta = breakdown.ee;
            break;
        }
        mults.theta = breakdown.ee;
    }

    let (allocation, multipliers, breakdown, report) = if converged {
        (
            alloc,
            mults,
            problem.evaluate(&alloc),
            problem.constraints(&alloc),
        )
    } else {
        match best {
            Some(b) => b,
            None => (
                alloc,
                mults,
                problem.evaluate(&alloc),
                problem.constraints(&alloc),
            ),
        }
    };
    Ok(CellSolution {
        allocation,
        multipliers,
        breakdown,
        report,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Backscatter, CellChannels, NetworkConfig};
    use crate::solver::{lagrangian, RootBranch};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cell() -> CellChannels {
        CellChannels {
            g_n_sq: 2.0,
            g_f_sq: 0.6,
            g_k_sq: 0.8,
            h_nk_sq: 0.5,
            h_fk_sq: 0.9,
            cross_gains_n: vec![],
            cross_gains_f: vec![],
        }
    }

    fn cfg(delta: f64, r_min: f64) -> NetworkConfig {
        NetworkConfig {
            sic_imperfection: delta,
            qos_rate_min: r_min,
            power_budget_dbm: 20.0,
            ..NetworkConfig::default()
        }
    }

    fn grid_best(p: &CellProblem<'_>, n: usize) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let a = p.allocation(ALPHA_N_MAX * i as f64 / n as f64, j as f64 / n as f64);
                if p.constraints(&a).all_ok() {
                    best = best.max(p.evaluate(&a).ee);
                }
            }
        }
        best
    }

    #[test]
    fn matches_grid_without_rate_floor() {
        let ch = cell();
        let config = cfg(0.1, 0.0);
        let p = CellProblem::isolated(&ch, &config);
        let s = solve_cell(&p, &SolverSettings::default(), None).unwrap();
        assert!(s.converged);
        let g = grid_best(&p, 400);
        assert!(
            s.breakdown.ee >= g * (1.0 - 1e-3),
            "{} vs {}",
            s.breakdown.ee,
            g
        );
        assert!(s.report.all_ok());
    }

    #[test]
    fn matches_grid_with_rate_floor() {
        let ch = cell();
        let config = cfg(0.3, 0.5);
        let p = CellProblem::isolated(&ch, &config);
        let s = solve_cell(&p, &SolverSettings::default(), None).unwrap();
        let g = grid_best(&p, 400);
        assert!(
            s.breakdown.ee >= g * (1.0 - 1e-3),
            "{} vs {}",
            s.breakdown.ee,
            g
        );
        assert!(s.report.all_ok());
    }

    #[test]
    fn imperfect_sic_costs_efficiency() {
        let ch = cell();
        let c0 = cfg(0.0, 0.5);
        let c6 = cfg(0.6, 0.5);
        let s0 = solve_cell(
            &CellProblem::isolated(&ch, &c0),
            &SolverSettings::default(),
            None,
        )
        .unwrap();
        let s6 = solve_cell(
            &CellProblem::isolated(&ch, &c6),
            &SolverSettings::default(),
            None,
        )
        .unwrap();
        assert!(s0.breakdown.ee >= s6.breakdown.ee);
    }

    #[test]
    fn converges_within_four_iterations() {
        let ch = cell();
        let config = cfg(0.1, 0.5);
        let s = solve_cell(
            &CellProblem::isolated(&ch, &config),
            &SolverSettings::default(),
            None,
        )
        .unwrap();
        assert!(s.converged);
        assert!(s.iterations() <= 4, "{} iterations", s.iterations());
        assert!(s.trace.theta_non_decreasing());
    }

    #[test]
    fn infeasible_carries_probe_report() {
        let ch = cell();
        let config = cfg(0.1, 8.0);
        let err = solve_cell(
            &CellProblem::isolated(&ch, &config),
            &SolverSettings::default(),
            None,
        )
        .unwrap_err();
        match err {
            Error::Infeasible { report } => assert!(!report.all_ok()),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn disabled_tag_never_reflects() {
        let ch = cell();
        let config = NetworkConfig {
            backscatter: Backscatter::Disabled,
            ..cfg(0.1, 0.3)
        };
        let s = solve_cell(
            &CellProblem::isolated(&ch, &config),
            &SolverSettings::default(),
            None,
        )
        .unwrap();
        assert_eq!(s.allocation.beta, 0.0);
        assert!(s.report.all_ok());
    }

    #[test]
    fn warm_start_at_optimum_converges_at_once() {
        let ch = cell();
        let config = cfg(0.1, 0.5);
        let p = CellProblem::isolated(&ch, &config);
        let s = solve_cell(&p, &SolverSettings::default(), None).unwrap();
        let start = CellStart {
            allocation: s.allocation,
            multipliers: s.multipliers,
        };
        let w = solve_cell(&p, &SolverSettings::default(), Some(&start)).unwrap();
        assert_eq!(w.iterations(), 1);
        assert!((w.breakdown.ee - s.breakdown.ee).abs() < 1e-12);
    }

    #[test]
    fn theta_and_f_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let mut e = || -rng.random::<f64>().max(1e-12).ln();
            let (a, b) = (e(), e());
            let ch = CellChannels {
                g_n_sq: a.max(b),
                g_f_sq: a.min(b),
                g_k_sq: e(),
                h_nk_sq: e(),
                h_fk_sq: e(),
                cross_gains_n: vec![],
                cross_gains_f: vec![],
            };
            let config = cfg(0.2, 0.2);
            let p = CellProblem::isolated(&ch, &config);
            let Ok(s) = solve_cell(&p, &SolverSettings::default(), None) else {
                continue;
            };
            assert!(s.trace.theta_non_decreasing());
            let fs: Vec<f64> = s.trace.records.iter().map(|r| r.f_value).collect();
            assert!(fs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{fs:?}");
            assert!(s.report.all_ok());
        }
    }

    // A strong reflected far path makes the unconstrained maximizer starve the
    // near vehicle. Pricing the violation must move the Lagrangian maximizer
    // onto the feasible set, raising the price only while violated.
    #[test]
    fn dual_ascent_reduces_violation() {
        let ch = CellChannels {
            g_n_sq: 1.0,
            g_f_sq: 0.9,
            g_k_sq: 5.0,
            h_nk_sq: 0.01,
            h_fk_sq: 2.0,
            cross_gains_n: vec![],
            cross_gains_f: vec![],
        };
        let config = cfg(0.1, 0.5);
        let p = CellProblem::isolated(&ch, &config);
        let beta = 1.0;
        assert!(feasible_alpha_interval(&p, beta).is_some());
        let argmax = |m: &Multipliers| {
            (0..=2000)
                .map(|i| ALPHA_N_MAX * i as f64 / 2000.0)
                .map(|a| (a, lagrangian(&p, beta, m, a)))
                .fold(
                    (0.0, f64::NEG_INFINITY),
                    |b, c| if c.1 > b.1 { c } else { b },
                )
                .0
        };
        let violation = |r: &FeasibilityReport| (-r.c1_slack).max(0.0) + (-r.c2_slack).max(0.0);
        let mut m = Multipliers::default();
        let mut history = vec![];
        for t in 1..=200 {
            let r = p.constraints(&p.allocation(argmax(&m), beta));
            history.push(violation(&r));
            if violation(&r) == 0.0 {
                break;
            }
            let next = update_multipliers(&m, &r, 50.0 / (t as f64).sqrt());
            if !r.c1_ok {
                assert!(next.mu_n > m.mu_n);
            }
            m = next;
        }
        assert!(history[0] > 0.0);
        assert_eq!(*history.last().unwrap(), 0.0, "{history:?}");
        assert!(history.windows(2).all(|w| w[1] <= w[0]), "{history:?}");
    }

    #[test]
    fn plus_and_minus_policies_still_return_a_solution() {
        let ch = cell();
        let config = cfg(0.3, 0.5);
        let p = CellProblem::isolated(&ch, &config);
        for policy in [RootBranch::Plus, RootBranch::Minus] {
            let settings = SolverSettings {
                root_branch_policy: policy,
                ..SolverSettings::default()
            };
            let s = solve_cell(&p, &settings, None).unwrap();
            assert!(s.breakdown.ee.is_finite());
            assert!(s.iterations() >= 1);
        }
    }
}
