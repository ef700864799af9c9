use crate::objective::FeasibilityReport;
use crate::solver::Multipliers;

/// Projected subgradient step on the dual variables.
///
/// Each multiplier moves against its constraint slack and is clipped at
/// zero, so a violated constraint (negative slack) raises its price. `theta`
/// is carried through unchanged.
pub fn update_multipliers(
    mults: &Multipliers,
    report: &FeasibilityReport,
    step: f64,
) -> Multipliers {
    let next = |m: f64, slack: f64| (m - step * slack).max(0.0);
    Multipliers {
        mu_n: next(mults.mu_n, report.c1_slack),
        mu_f: next(mults.mu_f, report.c2_slack),
        lambda: next(mults.lambda, report.budget_slack),
        tau: next(mults.tau, report.reflection_slack),
        eta: next(mults.eta, report.split_slack),
        theta: mults.theta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn report(c1: f64, c2: f64) -> FeasibilityReport {
        FeasibilityReport {
            c1_ok: c1 >= 0.0,
            c2_ok: c2 >= 0.0,
            c3_ok: true,
            c4_ok: true,
            c5_ok: true,
            c1_slack: c1,
            c2_slack: c2,
            budget_slack: 0.0,
            split_slack: 0.0,
            reflection_slack: 0.2,
        }
    }

    #[test]
    fn slack_everywhere_keeps_zero() {
        let m = update_multipliers(&Multipliers::default(), &report(0.3, 1.0), 0.1);
        assert_eq!(m, Multipliers::default());
    }

    #[test]
    fn violation_raises_price() {
        let m0 = Multipliers {
            mu_n: 1.0,
            theta: 2.0,
            ..Default::default()
        };
        let m = update_multipliers(&m0, &report(-0.5, 0.0), 0.1);
        assert_relative_eq!(m.mu_n, 1.05, epsilon = 1e-15);
        assert_eq!(m.theta, 2.0);
    }

    #[test]
    fn projection_to_zero() {
        let m0 = Multipliers {
            mu_n: 0.01,
            ..Default::default()
        };
        let m = update_multipliers(&m0, &report(1.0, 0.0), 0.1);
        assert_eq!(m.mu_n, 0.0);
    }
}
