//! Power-split step: the stationarity quadratic in `alpha_n` and root
//! selection.
//!
//! Along `alpha_f = 1 - alpha_n` the total power is constant, so only the
//! rates and the two QoS multipliers shape the stationarity condition.
//! Write `A`, `B` for the near/far effective gains, `D = g_n delta` for the
//! SIC residue, `N_n`, `N_f` for interference plus noise, and
//!
//! ```text
//! P1 = p (A - D) a + p D + N_n     (near SINR numerator + denominator)
//! Q1 = p D (1 - a) + N_n           (near SINR denominator)
//! P2 = p B a + N_f                 (far SINR denominator)
//! ```
//!
//! Then `ln2 * dR_sum/da = p (pD + N_n) A / (P1 Q1) - p B / P2` and the
//! QoS terms add `-ln2 * p * offset` with `offset = -mu_n (A + cD) + mu_f (1 + c) B`.
//! Clearing denominators with `Q1` frozen at a reference split in the
//! multiplier term gives a quadratic. With zero multipliers the quadratic is
//! exact; otherwise it is exact at its own fixed point.

use std::f64::consts::LN_2;

use crate::objective::{dinkelbach_value, CellProblem};
use crate::solver::{Multipliers, RootBranch};

/// Largest near-vehicle split that keeps `alpha_n <= alpha_f` on the C4 line.
pub const ALPHA_N_MAX: f64 = 0.5;

const LINEAR_RTOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadCoefficients {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Roots {
    /// `(-y + sqrt(disc)) / 2x` and `(-y - sqrt(disc)) / 2x`.
    Pair {
        plus: f64,
        minus: f64,
    },
    Linear(f64),
    /// Negative discriminant, or `x = y = 0`.
    NoReal,
}

impl QuadCoefficients {
    pub fn evaluate(&self, a: f64) -> f64 {
        (self.x * a + self.y) * a + self.z
    }

    pub fn discriminant(&self) -> f64 {
        self.y * self.y - 4.0 * self.x * self.z
    }

    pub fn roots(&self) -> Roots {
        let Self { x, y, z } = *self;
        let scale = y.abs().max(z.abs());
        if x == 0.0 || x.abs() <= LINEAR_RTOL * scale {
            return if y == 0.0 {
                Roots::NoReal
            } else {
                Roots::Linear(-z / y)
            };
        }
        let disc = self.discriminant();
        if disc < 0.0 {
            return Roots::NoReal;
        }
        let sq = disc.sqrt();
        let q = -0.5 * (y + y.signum() * sq);
        if q == 0.0 {
            return Roots::Pair {
                plus: 0.0,
                minus: 0.0,
            };
        }
        let (big, small) = (q / x, z / q);
        if y >= 0.0 {
            Roots::Pair {
                plus: small,
                minus: big,
            }
        } else {
            Roots::Pair {
                plus: big,
                minus: small,
            }
        }
    }
}

fn project(a: f64) -> f64 {
    if a.is_nan() {
        return 0.0;
    }
    a.clamp(0.0, ALPHA_N_MAX) + 0.0
}

/// Outcome of the power-split step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplit {
    pub alpha_n: f64,
    pub alpha_f: f64,
    /// No real stationary point; the split sits on a corner of `[0, 0.5]`.
    pub corner: bool,
    pub feasible: bool,
}

struct Gains {
    near: f64,
    far: f64,
    residue: f64,
    noise_n: f64,
    noise_f: f64,
}

fn gains(problem: &CellProblem<'_>, beta: f64) -> Gains {
    let ch = problem.channels;
    Gains {
        near: ch.near_gain(beta),
        far: ch.far_gain(beta),
        residue: ch.g_n_sq * problem.delta,
        noise_n: problem.interference_n + problem.noise,
        noise_f: problem.interference_f + problem.noise,
    }
}

/// Net pull of the QoS multipliers on the stationarity condition.
///
/// Raising `mu_n` by one shifts this by `-(A + (2^R_min - 1) g_n delta)`.
pub fn lagrangian_gradient_offset(
    problem: &CellProblem<'_>,
    beta: f64,
    mults: &Multipliers,
) -> f64 {
    let g = gains(problem, beta);
    let c = problem.qos_factor();
    -mults.mu_n * (g.near + c * g.residue) + mults.mu_f * (1.0 + c) * g.far
}

/// Coefficients of the stationarity quadratic in `alpha_n` at reflection
/// `beta`. `alpha_ref` only matters when some QoS multiplier is non-zero.
pub fn quadratic_coefficients(
    problem: &CellProblem<'_>,
    beta: f64,
    mults: &Multipliers,
    alpha_ref: f64,
) -> QuadCoefficients {
    let g = gains(problem, beta);
    let p = problem.power_budget_w;
    let lam = g.near - g.residue;
    let psi_n = p * g.residue + g.noise_n;
    let k = LN_2 * lagrangian_gradient_offset(problem, beta, mults);
    let kq = k * (psi_n - p * g.residue * alpha_ref);
    let b = g.far;
    QuadCoefficients {
        x: p * p * lam * b * (g.residue - kq),
        y: 2.0 * p * b * psi_n * g.residue - kq * p * (lam * g.noise_f + b * psi_n),
        z: g.near * psi_n * g.noise_f - b * psi_n * psi_n - kq * psi_n * g.noise_f,
    }
}

/// Lagrangian of the cell problem on the line `alpha_f = 1 - alpha_n`, with
/// constraints written as `slack >= 0`.
pub fn lagrangian(problem: &CellProblem<'_>, beta: f64, mults: &Multipliers, alpha_n: f64) -> f64 {
    let a = problem.allocation(alpha_n, beta);
    let b = problem.evaluate(&a);
    let r = problem.constraints(&a);
    dinkelbach_value(b.rate_sum(), b.power_total, mults.theta)
        + mults.mu_n * raw_c1(problem, alpha_n, beta)
        + mults.mu_f * raw_c2(problem, alpha_n, beta)
        + mults.lambda * r.budget_slack
        + mults.tau * (1.0 - beta)
        + mults.eta * (1.0 - a.alpha_n - a.alpha_f)
}

fn raw_c1(problem: &CellProblem<'_>, alpha_n: f64, beta: f64) -> f64 {
    let g = gains(problem, beta);
    let p = problem.power_budget_w;
    p * alpha_n * g.near - problem.qos_factor() * (p * (1.0 - alpha_n) * g.residue + g.noise_n)
}

fn raw_c2(problem: &CellProblem<'_>, alpha_n: f64, beta: f64) -> f64 {
    let g = gains(problem, beta);
    let p = problem.power_budget_w;
    p * (1.0 - alpha_n) * g.far - problem.qos_factor() * (p * alpha_n * g.far + g.noise_f)
}

/// Splits at which C1 (lower) and C2 (upper) hold with equality.
///
/// C1 holds for `alpha_n >= lower`, C2 for `alpha_n <= upper`.
pub fn rate_active_bounds(problem: &CellProblem<'_>, beta: f64) -> (f64, f64) {
    let g = gains(problem, beta);
    let p = problem.power_budget_w;
    let c = problem.qos_factor();
    let lower = c * (p * g.residue + g.noise_n) / (p * (g.near + c * g.residue));
    let upper = (p * g.far - c * g.noise_f) / (p * g.far * (1.0 + c));
    (lower, upper)
}

/// Picks the power split from the quadratic's roots.
///
/// `score(alpha_n)` returns `(feasible, F(theta))`. Under
/// [`RootBranch::FeasibleBest`] the candidates are the projected roots, the
/// projected `kkt_points` and both ends of `[0, 0.5]`; feasible beats
/// infeasible, then larger `F` wins. The other policies return the chosen
/// root, or the better end of `[0, 0.5]` when there is no real root.
pub fn power_split_closed_form<S>(
    q: &QuadCoefficients,
    policy: RootBranch,
    kkt_points: &[f64],
    mut score: S,
) -> PowerSplit
where
    S: FnMut(f64) -> (bool, f64),
{
    let roots = q.roots();
    let corner = matches!(roots, Roots::NoReal);
    let pick = |cands: &mut dyn Iterator<Item = f64>, score: &mut S| {
        cands
            .filter(|a| a.is_finite())
            .map(project)
            .map(|a| {
                let (ok, f) = score(a);
                (a, ok, f)
            })
            .fold(None::<(f64, bool, f64)>, |best, c| match best {
                Some(b) if (b.1, b.2) >= (c.1, c.2) => Some(b),
                _ => Some(c),
            })
    };
    let ends = [0.0, ALPHA_N_MAX];
    let chosen = match (policy, roots) {
        (RootBranch::FeasibleBest, r) => {
            let rs: Vec<f64> = match r {
                Roots::Pair { plus, minus } => vec![plus, minus],
                Roots::Linear(a) => vec![a],
                Roots::NoReal => vec![],
            };
            pick(
                &mut rs.into_iter().chain(kkt_points.iter().copied()).chain(ends),
                &mut score,
            )
        }
        (_, Roots::NoReal) => pick(&mut ends.into_iter(), &mut score),
        (RootBranch::Plus, Roots::Pair { plus, .. }) => {
            pick(&mut std::iter::once(plus), &mut score)
        }
        (RootBranch::Minus, Roots::Pair { minus, .. }) => {
            pick(&mut std::iter::once(minus), &mut score)
        }
        (_, Roots::Linear(a)) => pick(&mut std::iter::once(a), &mut score),
    };
    let (alpha_n, feasible, _) = match chosen {
        Some(c) => c,
        None => pick(&mut ends.into_iter(), &mut score).expect("two candidates"),
    };
    PowerSplit {
        alpha_n,
        alpha_f: 1.0 - alpha_n,
        corner,
        feasible,
    }
}
