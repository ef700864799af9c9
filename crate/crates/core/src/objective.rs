//! Per-cell energy efficiency, the constraint set C1-C5 and the Dinkelbach
//! subtractive form.
//!
//! The network objective is the *sum of per-cell ratios*
//! `(R_n + R_f) / (p_s (alpha_n + alpha_f) + p_c)`, not a global ratio.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{
    rate, sinr_far, sinr_near, Allocation, Backscatter, CellChannels, NetworkConfig,
};
use crate::error::{Error, Result};

/// Relative tolerance for treating a rate constraint as met with equality.
pub const BOUNDARY_RTOL: f64 = 1e-9;

const SPLIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EEBreakdown {
    pub rate_n: f64,
    pub rate_f: f64,
    /// `p_s (alpha_n + alpha_f) + p_c`.
    pub power_total: f64,
    pub ee: f64,
}

impl EEBreakdown {
    pub fn rate_sum(&self) -> f64 {
        self.rate_n + self.rate_f
    }
}

/// Constraint status for one allocation.
///
/// The rate constraints are checked in their power-domain form, with slack
/// `LHS - RHS` in watts. Slacks within [`BOUNDARY_RTOL`] of zero are stored as
/// exactly zero, so `slack >= 0` always agrees with the flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub c1_ok: bool,
    pub c2_ok: bool,
    pub c3_ok: bool,
    pub c4_ok: bool,
    pub c5_ok: bool,
    pub c1_slack: f64,
    pub c2_slack: f64,
    /// `P_tot - p_s` in watts.
    pub budget_slack: f64,
    /// `1 - alpha_n - alpha_f`.
    pub split_slack: f64,
    /// `1 - beta`.
    pub reflection_slack: f64,
}

impl FeasibilityReport {
    pub fn all_ok(&self) -> bool {
        self.c1_ok && self.c2_ok && self.c3_ok && self.c4_ok && self.c5_ok
    }

    /// Smallest of the two rate-constraint slacks.
    pub fn min_rate_slack(&self) -> f64 {
        self.c1_slack.min(self.c2_slack)
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |ok: bool| if ok { "ok" } else { "VIOLATED" };
        write!(
            f,
            "C1 {} (slack {:.3e}), C2 {} (slack {:.3e}), C3 {}, C4 {}, C5 {}",
            flag(self.c1_ok),
            self.c1_slack,
            flag(self.c2_ok),
            self.c2_slack,
            flag(self.c3_ok),
            flag(self.c4_ok),
            flag(self.c5_ok)
        )
    }
}

pub fn cell_ee(
    ch: &CellChannels,
    a: &Allocation,
    delta: f64,
    i_n: f64,
    i_f: f64,
    noise: f64,
    circuit_power: f64,
) -> EEBreakdown {
    let rate_n = rate(sinr_near(ch, a, delta, i_n, noise));
    let rate_f = rate(sinr_far(ch, a, i_f, noise));
    let power_total = a.p_s_w * (a.alpha_n + a.alpha_f) + circuit_power;
    EEBreakdown {
        rate_n,
        rate_f,
        power_total,
        ee: (rate_n + rate_f) / power_total,
    }
}

/// Network energy efficiency: the sum of per-cell ratios.
pub fn total_ee(per_cell: &[EEBreakdown]) -> Result<f64> {
    if per_cell.is_empty() {
        return Err(Error::Usage("total_ee needs at least one cell".into()));
    }
    Ok(per_cell.iter().map(|b| b.ee).sum())
}

fn snapped_slack(lhs: f64, rhs: f64) -> f64 {
    let slack = lhs - rhs;
    if slack.abs() <= BOUNDARY_RTOL * lhs.abs().max(rhs.abs()) {
        0.0
    } else {
        slack
    }
}

/// Evaluates C1-C5. `power_budget_w` is the linear power budget.
#[allow(clippy::too_many_arguments)]
pub fn check_constraints(
    ch: &CellChannels,
    a: &Allocation,
    delta: f64,
    i_n: f64,
    i_f: f64,
    noise: f64,
    rate_min: f64,
    power_budget_w: f64,
) -> FeasibilityReport {
    let c = qos_factor(rate_min);
    let near = ch.near_gain(a.beta);
    let far = ch.far_gain(a.beta);

    let c1_lhs = a.p_s_w * a.alpha_n * near;
    let c1_rhs = c * (ch.g_n_sq * a.p_s_w * a.alpha_f * delta + i_n + noise);
    let c1_slack = snapped_slack(c1_lhs, c1_rhs);

    let c2_lhs = a.p_s_w * a.alpha_f * far;
    let c2_rhs = c * (a.p_s_w * a.alpha_n * far + i_f + noise);
    let c2_slack = snapped_slack(c2_lhs, c2_rhs);

    let budget_slack = power_budget_w - a.p_s_w;
    let split_slack = 1.0 - a.alpha_n - a.alpha_f;
    FeasibilityReport {
        c1_ok: c1_slack >= 0.0,
        c2_ok: c2_slack >= 0.0,
        c3_ok: a.p_s_w >= 0.0 && budget_slack >= 0.0,
        c4_ok: a.alpha_n >= 0.0 && a.alpha_f >= 0.0 && split_slack >= -SPLIT_TOL,
        c5_ok: (0.0..=1.0).contains(&a.beta),
        c1_slack,
        c2_slack,
        budget_slack,
        split_slack,
        reflection_slack: 1.0 - a.beta,
    }
}

/// `F(theta) = R_sum - theta * P_T`.
pub fn dinkelbach_value(rate_sum: f64, power_total: f64, theta: f64) -> f64 {
    rate_sum - theta * power_total
}

/// SINR threshold `2^R_min - 1` equivalent to the rate floor.
pub fn qos_factor(rate_min: f64) -> f64 {
    rate_min.exp2() - 1.0
}

/// One cell's subproblem with the neighbours' interference frozen.
///
/// The RSU always transmits at its full budget; the decision variables are
/// `alpha_n` (with `alpha_f = 1 - alpha_n`) and `beta`.
#[derive(Debug, Clone, Copy)]
pub struct CellProblem<'a> {
    pub channels: &'a CellChannels,
    pub delta: f64,
    pub interference_n: f64,
    pub interference_f: f64,
    pub noise: f64,
    pub rate_min: f64,
    pub power_budget_w: f64,
    pub circuit_power_w: f64,
    pub backscatter: Backscatter,
}

impl<'a> CellProblem<'a> {
    pub fn new(
        channels: &'a CellChannels,
        config: &NetworkConfig,
        interference_n: f64,
        interference_f: f64,
    ) -> Self {
        Self {
            channels,
            delta: config.sic_imperfection,
            interference_n,
            interference_f,
            noise: config.noise_variance,
            rate_min: config.qos_rate_min,
            power_budget_w: config.power_budget_w(),
            circuit_power_w: config.circuit_power_w,
            backscatter: config.backscatter,
        }
    }

    /// The cell on its own, with no co-channel interference.
    pub fn isolated(channels: &'a CellChannels, config: &NetworkConfig) -> Self {
        Self::new(channels, config, 0.0, 0.0)
    }

    pub fn allocation(&self, alpha_n: f64, beta: f64) -> Allocation {
        Allocation {
            alpha_n,
            alpha_f: 1.0 - alpha_n,
            beta,
            p_s_w: self.power_budget_w,
        }
    }

    pub fn evaluate(&self, a: &Allocation) -> EEBreakdown {
        cell_ee(
            self.channels,
            a,
            self.delta,
            self.interference_n,
            self.interference_f,
            self.noise,
            self.circuit_power_w,
        )
    }

    pub fn constraints(&self, a: &Allocation) -> FeasibilityReport {
        let mut report = check_constraints(
            self.channels,
            a,
            self.delta,
            self.interference_n,
            self.interference_f,
            self.noise,
            self.rate_min,
            self.power_budget_w,
        );
        if a.beta > self.backscatter.max_beta() {
            report.c5_ok = false;
        }
        report
    }

    pub fn qos_factor(&self) -> f64 {
        qos_factor(self.rate_min)
    }

    /// `R_n + R_f` on the line `alpha_f = 1 - alpha_n`.
    pub fn rate_sum(&self, alpha_n: f64, beta: f64) -> f64 {
        self.evaluate(&self.allocation(alpha_n, beta)).rate_sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cell() -> CellChannels {
        CellChannels {
            g_n_sq: 1.0,
            g_f_sq: 0.5,
            g_k_sq: 0.5,
            h_nk_sq: 0.4,
            h_fk_sq: 0.2,
            cross_gains_n: vec![],
            cross_gains_f: vec![],
        }
    }

    fn breakdown(rate_n: f64, rate_f: f64, power_total: f64) -> EEBreakdown {
        EEBreakdown {
            rate_n,
            rate_f,
            power_total,
            ee: (rate_n + rate_f) / power_total,
        }
    }

    #[test]
    fn zero_power_split_gives_zero_ee() {
        let a = Allocation {
            alpha_n: 0.0,
            alpha_f: 0.0,
            beta: 0.5,
            p_s_w: 1.0,
        };
        let b = cell_ee(&cell(), &a, 0.3, 0.0, 0.0, 0.1, 0.1);
        assert_eq!(b.ee, 0.0);
        assert_relative_eq!(b.power_total, 0.1);
    }

    #[test]
    fn ee_composes_rates() {
        // gamma_n = 3 and gamma_f = 1: near gain 1, alpha_n = 0.3, noise 0.1,
        // no SIC residue; far gain 0.5 with alpha_f = 0.7 and I_f tuned.
        let ch = CellChannels {
            g_n_sq: 1.0,
            g_f_sq: 0.5,
            ..cell()
        };
        let a = Allocation {
            alpha_n: 0.3,
            alpha_f: 0.7,
            beta: 0.0,
            p_s_w: 1.0,
        };
        // far: 0.35 / (0.15 + I_f + 0.1) = 1  =>  I_f = 0.1
        let b = cell_ee(&ch, &a, 0.0, 0.0, 0.1, 0.1, 0.1);
        assert_relative_eq!(b.rate_n, 2.0, epsilon = 1e-12);
        assert_relative_eq!(b.rate_f, 1.0, epsilon = 1e-12);
        assert_relative_eq!(b.ee, 3.0 / 1.1, epsilon = 1e-12);
        let b2 = cell_ee(&ch, &a, 0.0, 0.0, 0.1, 0.1, 0.2);
        assert_relative_eq!(b2.ee, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn total_ee_is_sum_of_ratios() {
        let one = breakdown(2.0, 1.0, 1.1);
        assert_relative_eq!(total_ee(&[one]).unwrap(), 3.0 / 1.1);
        assert_eq!(
            total_ee(&[one, one]).unwrap(),
            2.0 * total_ee(&[one]).unwrap()
        );
        assert!(matches!(total_ee(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn constraint_examples() {
        let ch = cell();
        let a = Allocation {
            alpha_n: 0.2,
            alpha_f: 0.0,
            beta: 0.0,
            p_s_w: 1.0,
        };
        let r = check_constraints(&ch, &a, 0.0, 0.0, 0.0, 0.1, 0.5, 1.0);
        assert!(r.c1_ok);
        assert_relative_eq!(r.c1_slack, 0.2 - (2f64.sqrt() - 1.0) * 0.1, epsilon = 1e-12);
        assert_relative_eq!(r.c1_slack, 0.1586, epsilon = 1e-4);

        let zero_floor = check_constraints(&ch, &a, 0.9, 5.0, 5.0, 0.1, 0.0, 1.0);
        assert!(zero_floor.c1_ok && zero_floor.c2_ok);

        let bad_beta = Allocation { beta: 1.5, ..a };
        assert!(!check_constraints(&ch, &bad_beta, 0.0, 0.0, 0.0, 0.1, 0.0, 1.0).c5_ok);

        let over_budget = Allocation { p_s_w: 2.0, ..a };
        assert!(!check_constraints(&ch, &over_budget, 0.0, 0.0, 0.0, 0.1, 0.0, 1.0).c3_ok);

        let over_split = Allocation {
            alpha_n: 0.6,
            alpha_f: 0.6,
            ..a
        };
        assert!(!check_constraints(&ch, &over_split, 0.0, 0.0, 0.0, 0.1, 0.0, 1.0).c4_ok);
    }

    #[test]
    fn active_constraint_matches_rate_floor() {
        // Put C1 exactly on its boundary and check the log-form rate agrees.
        let ch = cell();
        let (delta, i_n, noise, p, beta, r_min) = (0.3, 0.05, 0.1, 1.0, 0.7, 0.8);
        let c = qos_factor(r_min);
        let near = ch.near_gain(beta);
        let d = ch.g_n_sq * delta;
        let alpha_n = c * (p * d + i_n + noise) / (p * (near + c * d));
        let a = Allocation {
            alpha_n,
            alpha_f: 1.0 - alpha_n,
            beta,
            p_s_w: p,
        };
        let r = check_constraints(&ch, &a, delta, i_n, 0.0, noise, r_min, 1.0);
        assert!(r.c1_ok);
        assert_eq!(r.c1_slack, 0.0);
        let rate_n = rate(sinr_near(&ch, &a, delta, i_n, noise));
        assert_relative_eq!(rate_n, r_min, max_relative = 1e-9);
    }

    #[test]
    fn dinkelbach_value_examples() {
        assert_eq!(dinkelbach_value(3.0, 1.1, 0.0), 3.0);
        assert_relative_eq!(dinkelbach_value(3.0, 1.1, 3.0 / 1.1), 0.0, epsilon = 1e-15);
        assert_relative_eq!(dinkelbach_value(3.0, 1.1, 2.0), 0.8, epsilon = 1e-12);
        assert!(dinkelbach_value(3.0, 1.1, 2.0) > dinkelbach_value(3.0, 1.1, 2.5));
    }

    #[test]
    fn disabled_backscatter_rejects_reflection() {
        let ch = cell();
        let config = NetworkConfig {
            backscatter: Backscatter::Disabled,
            qos_rate_min: 0.0,
            ..NetworkConfig::default()
        };
        let problem = CellProblem::isolated(&ch, &config);
        assert!(!problem.constraints(&problem.allocation(0.2, 0.5)).c5_ok);
        assert!(problem.constraints(&problem.allocation(0.2, 0.0)).c5_ok);
    }
}
