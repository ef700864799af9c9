use crate::channel::{Allocation, Backscatter, CellChannels};
use crate::error::{Error, Result};
use crate::objective::{dinkelbach_value, qos_factor, CellProblem};

/// Closed-form reflection coefficient, clamped to `[0, 1]`.
///
/// The printed form carries the near-vehicle split in both numerator and
/// denominator, so with a single iterate it cancels and the result is
/// `(2^R_min - 1) g_n / (g_k h_nk)`. It is exactly 0 when `R_min = 0`.
pub fn reflection_closed_form(
    ch: &CellChannels,
    alpha_n: f64,
    p_s: f64,
    rate_min: f64,
) -> Result<f64> {
    let path = ch.g_k_sq * ch.h_nk_sq;
    if path.is_nan() || path <= 0.0 {
        return Err(Error::DegenerateChannel("backscatter path gain is zero"));
    }
    if !(alpha_n > 0.0 && p_s > 0.0) {
        return Err(Error::DegenerateChannel("near vehicle receives no power"));
    }
    let raw = qos_factor(rate_min) * p_s * alpha_n * ch.g_n_sq / (p_s * alpha_n * path);
    Ok(raw.clamp(0.0, 1.0))
}

/// Reflection update at fixed power split.
///
/// Candidates are the closed form (when defined) and the two bounds of C5.
/// The feasible candidate with the largest `F(theta)` wins; if none is
/// feasible the largest `F(theta)` wins outright.
pub fn reflection_step(problem: &CellProblem<'_>, current: &Allocation, theta: f64) -> f64 {
    if problem.backscatter == Backscatter::Disabled {
        return 0.0;
    }
    let closed = reflection_closed_form(
        problem.channels,
        current.alpha_n,
        current.p_s_w,
        problem.rate_min,
    )
    .ok();
    closed
        .into_iter()
        .chain([0.0, 1.0])
        .map(|beta| {
            let a = Allocation { beta, ..*current };
            let b = problem.evaluate(&a);
            let feasible = problem.constraints(&a).all_ok();
            (
                beta,
                feasible,
                dinkelbach_value(b.rate_sum(), b.power_total, theta),
            )
        })
        .fold(None::<(f64, bool, f64)>, |best, cand| match best {
            Some(b) if (b.1, b.2) >= (cand.1, cand.2) => Some(b),
            _ => Some(cand),
        })
        .map_or(0.0, |(beta, _, _)| beta)
}
