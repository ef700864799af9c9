//! Brute-force checks for the solver: exhaustive grid search over one cell's
//! decision space, and finite-difference batteries for the concavity claims
//! the closed forms lean on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{derive_seed, sample_network, Allocation, CellChannels, NetworkConfig};
use crate::error::{Error, Result};
use crate::objective::{CellProblem, FeasibilityReport};
use crate::solver::{feasible_alpha_interval, solve_cell, SolverSettings, ALPHA_N_MAX};

/// Number of grid points along each axis. `alpha_n` spans `[0, 0.5]` and
/// `beta` spans `[0, 1]`, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha_steps: usize,
    pub beta_steps: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::square(1000)
    }
}

impl GridSpec {
    pub fn square(steps: usize) -> Self {
        Self {
            alpha_steps: steps,
            beta_steps: steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_steps < 2 || self.beta_steps < 2 {
            return Err(Error::config("grid", "needs at least 2 points per axis"));
        }
        Ok(())
    }

    pub fn alpha_resolution(&self) -> f64 {
        ALPHA_N_MAX / (self.alpha_steps - 1) as f64
    }

    pub fn beta_resolution(&self) -> f64 {
        1.0 / (self.beta_steps - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleOptimum {
    pub alpha_n: f64,
    pub beta: f64,
    pub ee: f64,
}

/// Best feasible grid point of one cell (`alpha_f = 1 - alpha_n`, full
/// budget), or `None` when no grid point is feasible. With the tag disabled
/// only `beta = 0` is searched. Ties go to the lowest `(alpha_n, beta)` index.
pub fn grid_search_cell(
    problem: &CellProblem<'_>,
    grid: &GridSpec,
) -> Result<Option<OracleOptimum>> {
    grid.validate()?;
    let betas: Vec<f64> = if problem.backscatter.max_beta() > 0.0 {
        (0..grid.beta_steps)
            .map(|j| j as f64 * grid.beta_resolution())
            .collect()
    } else {
        vec![0.0]
    };
    let rows: Vec<Option<OracleOptimum>> = (0..grid.alpha_steps)
        .into_par_iter()
        .map(|i| {
            let alpha_n = i as f64 * grid.alpha_resolution();
            betas
                .iter()
                .filter_map(|&beta| {
                    let a = problem.allocation(alpha_n, beta);
                    problem.constraints(&a).all_ok().then(|| OracleOptimum {
                        alpha_n,
                        beta,
                        ee: problem.evaluate(&a).ee,
                    })
                })
                .fold(None, better)
        })
        .collect();
    Ok(rows.into_iter().fold(None, |acc, row| match row {
        Some(r) => better(acc, r),
        None => acc,
    }))
}

fn better(acc: Option<OracleOptimum>, cand: OracleOptimum) -> Option<OracleOptimum> {
    match acc {
        Some(a) if a.ee >= cand.ee => Some(a),
        _ => Some(cand),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certification {
    pub pass: bool,
    /// `solution - (oracle - tol * max(1, oracle))`; non-negative on a pass.
    pub margin: f64,
}

/// Accepts `solution_ee` when it is no worse than the oracle by more than
/// `rel_tol * max(1, oracle_ee)`.
pub fn certify(solution_ee: f64, oracle_ee: f64, rel_tol: f64) -> Result<Certification> {
    if !(solution_ee.is_finite() && oracle_ee.is_finite() && oracle_ee >= 0.0) {
        return Err(Error::Usage(format!(
            "certify needs finite values and a non-negative oracle (got {solution_ee}, {oracle_ee})"
        )));
    }
    let margin = solution_ee - (oracle_ee - rel_tol * oracle_ee.max(1.0));
    Ok(Certification {
        pass: margin >= 0.0,
        margin,
    })
}

/// One single-cell instance checked against the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceCertificate {
    pub seed: u64,
    pub delta: f64,
    pub rate_min: f64,
    pub solution_ee: f64,
    pub oracle: OracleOptimum,
    pub allocation: Allocation,
    pub report: FeasibilityReport,
    pub converged: bool,
    pub certification: Certification,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchCertificate {
    pub instances: Vec<InstanceCertificate>,
    /// Draws discarded because either side found them infeasible.
    pub skipped: usize,
    pub rel_tol: f64,
}

impl BatchCertificate {
    pub fn passed(&self) -> usize {
        self.instances
            .iter()
            .filter(|c| c.certification.pass)
            .count()
    }

    pub fn all_pass(&self) -> bool {
        self.passed() == self.instances.len()
    }

    pub fn worst_margin(&self) -> Option<f64> {
        self.instances
            .iter()
            .map(|c| c.certification.margin)
            .min_by(f64::total_cmp)
    }
}

/// SIC residues and rate floors the certification family cycles through.
pub const CERTIFY_DELTAS: [f64; 2] = [0.0, 0.3];
pub const CERTIFY_RATE_MINS: [f64; 2] = [0.0, 0.5];

const MAX_DRAWS_PER_INSTANCE: u64 = 1000;

/// Runs `instances` random single-cell instances through [`solve_cell`] and
/// the grid oracle.
///
/// Instance `i` uses `delta = CERTIFY_DELTAS[i % 2]` and
/// `R_min = CERTIFY_RATE_MINS[(i / 2) % 2]` on top of `base`; its channels
/// come from seeds derived from `(seed, i, draw)`, redrawing until both the
/// solver and the oracle find the instance feasible.
pub fn certify_batch(
    base: &NetworkConfig,
    settings: &SolverSettings,
    grid: &GridSpec,
    instances: usize,
    seed: u64,
    rel_tol: f64,
) -> Result<BatchCertificate> {
    grid.validate()?;
    settings.validate()?;
    let mut out = Vec::with_capacity(instances);
    let mut skipped = 0;
    for i in 0..instances {
        let config = NetworkConfig {
            num_cells: 1,
            sic_imperfection: CERTIFY_DELTAS[i % 2],
            qos_rate_min: CERTIFY_RATE_MINS[(i / 2) % 2],
            ..base.clone()
        };
        let mut found = None;
        for draw in 0..MAX_DRAWS_PER_INSTANCE {
            let config = NetworkConfig {
                rng_seed: derive_seed(seed, &[i as u64, draw]),
                ..config.clone()
            };
            config.validate()?;
            let channels = sample_network(&config);
            let problem = CellProblem::isolated(&channels[0], &config);
            let solution = match solve_cell(&problem, settings, None) {
                Ok(s) => s,
                Err(Error::Infeasible { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let Some(oracle) = grid_search_cell(&problem, grid)? else {
                skipped += 1;
                continue;
            };
            found = Some(InstanceCertificate {
                seed: config.rng_seed,
                delta: config.sic_imperfection,
                rate_min: config.qos_rate_min,
                solution_ee: solution.breakdown.ee,
                oracle,
                allocation: solution.allocation,
                report: solution.report,
                converged: solution.converged,
                certification: certify(solution.breakdown.ee, oracle.ee, rel_tol)?,
            });
            break;
        }
        match found {
            Some(c) => out.push(c),
            None => {
                return Err(Error::Usage(format!(
                    "no feasible draw for certification instance {i} after {MAX_DRAWS_PER_INSTANCE} tries"
                )))
            }
        }
    }
    Ok(BatchCertificate {
        instances: out,
        skipped,
        rel_tol,
    })
}

/// Outcome of a finite-difference battery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub checks: usize,
    pub violations: usize,
    /// Largest amount by which any check missed its bound (0 when none did).
    pub worst_excess: f64,
    /// First few failing points, for diagnostics.
    pub examples: Vec<String>,
}

impl LemmaReport {
    fn new() -> Self {
        Self {
            checks: 0,
            violations: 0,
            worst_excess: 0.0,
            examples: Vec::new(),
        }
    }

    fn record(&mut self, excess: f64, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if excess > 0.0 {
            self.violations += 1;
            self.worst_excess = self.worst_excess.max(excess);
            if self.examples.len() < 5 {
                self.examples.push(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Finite-difference step used by both batteries.
pub const FD_STEP: f64 = 1e-3;
/// Slack allowed on each finite-difference sign test.
pub const FD_TOL: f64 = 1e-6;

fn unit_cell(rng: &mut ChaCha8Rng) -> CellChannels {
    let config = NetworkConfig {
        num_cells: 1,
        rng_seed: rng.random_range(0..i64::MAX as u64),
        ..NetworkConfig::default()
    };
    sample_network(&config).remove(0)
}

/// Concavity and monotonicity of the sum rate in the reflection coefficient.
///
/// For each instance (unit-mean Rayleigh cell, `delta` drawn from
/// `[0, 0.9]`, `R_min = 0.5` at the base budget) a feasible split is fixed,
/// then at `beta_samples` points the central first difference must be
/// `>= -FD_TOL` and the central second difference `<= FD_TOL`.
pub fn lemma_reflection_battery(
    base: &NetworkConfig,
    instances: usize,
    beta_samples: usize,
    seed: u64,
) -> LemmaReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LemmaReport::new();
    let h = FD_STEP;
    let mut done = 0;
    while done < instances {
        let ch = unit_cell(&mut rng);
        let config = NetworkConfig {
            num_cells: 1,
            sic_imperfection: rng.random_range(0.0..0.9),
            qos_rate_min: 0.5,
            ..base.clone()
        };
        let p = CellProblem::isolated(&ch, &config);
        let Some((lo, hi)) = feasible_alpha_interval(&p, 1.0) else {
            continue;
        };
        let alpha_n = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
        let r = |beta: f64| p.rate_sum(alpha_n, beta);
        for _ in 0..beta_samples {
            let beta = rng.random_range(h..=1.0 - h);
            let (up, mid, down) = (r(beta + h), r(beta), r(beta - h));
            let slope = (up - down) / (2.0 * h);
            let curvature = (up - 2.0 * mid + down) / (h * h);
            let excess = (-FD_TOL - slope).max(curvature - FD_TOL);
            report.record(excess, || {
                format!("delta={} alpha_n={alpha_n:.4} beta={beta:.4}: slope={slope:.3e} curvature={curvature:.3e}", config.sic_imperfection)
            });
        }
        done += 1;
    }
    report
}

/// SIC residues the split battery cycles through.
pub const SPLIT_BATTERY_DELTAS: [f64; 5] = [0.0, 0.1, 0.3, 0.6, 0.9];

/// Joint concavity of the sum rate in `(alpha_n, alpha_f)`.
///
/// At each interior point the finite-difference Hessian must have strictly
/// negative diagonal entries and a strictly positive determinant. Points
/// cycle through [`SPLIT_BATTERY_DELTAS`]; `beta` and the split are uniform.
pub fn lemma_split_battery(base: &NetworkConfig, points: usize, seed: u64) -> LemmaReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LemmaReport::new();
    let h = FD_STEP;
    for i in 0..points {
        let ch = unit_cell(&mut rng);
        let config = NetworkConfig {
            num_cells: 1,
            sic_imperfection: SPLIT_BATTERY_DELTAS[i % SPLIT_BATTERY_DELTAS.len()],
            ..base.clone()
        };
        let p = CellProblem::isolated(&ch, &config);
        let beta = rng.random::<f64>();
        let alpha_n = rng.random_range(0.05..0.45);
        let alpha_f = rng.random_range(alpha_n + 0.02..1.0 - alpha_n - 0.02);
        let (hnn, hff, hnf) = split_hessian(&p, alpha_n, alpha_f, beta, h);
        let det = hnn * hff - hnf * hnf;
        let excess = hnn.max(hff).max(-det);
        let excess = if excess >= 0.0 {
            excess.max(f64::MIN_POSITIVE)
        } else {
            0.0
        };
        report.record(excess, || {
            format!(
                "delta={} beta={beta:.3} alpha=({alpha_n:.3},{alpha_f:.3}): H=[{hnn:.3e} {hnf:.3e}; {hnf:.3e} {hff:.3e}] det={det:.3e}",
                config.sic_imperfection
            )
        });
    }
    report
}

/// Central finite-difference Hessian of `R_sum` in `(alpha_n, alpha_f)`,
/// returned as `(d2/dn2, d2/df2, d2/dndf)`.
pub fn split_hessian(
    p: &CellProblem<'_>,
    alpha_n: f64,
    alpha_f: f64,
    beta: f64,
    h: f64,
) -> (f64, f64, f64) {
    let r = |an: f64, af: f64| {
        p.evaluate(&Allocation {
            alpha_n: an,
            alpha_f: af,
            beta,
            p_s_w: p.power_budget_w,
        })
        .rate_sum()
    };
    let c = r(alpha_n, alpha_f);
    let nn = (r(alpha_n + h, alpha_f) - 2.0 * c + r(alpha_n - h, alpha_f)) / (h * h);
    let ff = (r(alpha_n, alpha_f + h) - 2.0 * c + r(alpha_n, alpha_f - h)) / (h * h);
    let nf =
        (r(alpha_n + h, alpha_f + h) - r(alpha_n + h, alpha_f - h) - r(alpha_n - h, alpha_f + h)
            + r(alpha_n - h, alpha_f - h))
            / (4.0 * h * h);
    (nn, ff, nf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

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

    #[test]
    fn certify_examples() {
        let eq = certify(1.0, 1.0, 0.0).unwrap();
        assert!(eq.pass);
        assert_eq!(eq.margin, 0.0);
        assert!(certify(1.0, 1.0, 1e-3).unwrap().pass);
        assert!(certify(1.000, 1.0005, 1e-3).unwrap().pass);
        let bad = certify(0.90, 1.00, 1e-3).unwrap();
        assert!(!bad.pass);
        assert_relative_eq!(bad.margin, -0.099, epsilon = 1e-12);
        assert!(certify(f64::NAN, 1.0, 1e-3).is_err());
        assert!(certify(1.0, -1.0, 1e-3).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::square(1).validate().is_err());
        assert!(GridSpec {
            alpha_steps: 2,
            beta_steps: 2
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn unreachable_floor_is_infeasible() {
        let ch = cell();
        let config = NetworkConfig {
            qos_rate_min: 10.0,
            ..NetworkConfig::default()
        };
        let p = CellProblem::isolated(&ch, &config);
        assert!(!p.constraints(&p.allocation(0.5, 1.0)).c1_ok);
        assert_eq!(grid_search_cell(&p, &GridSpec::square(50)).unwrap(), None);
    }

    #[test]
    fn disabled_tag_matches_one_dimensional_scan() {
        let ch = cell();
        let config = NetworkConfig {
            qos_rate_min: 0.0,
            backscatter: crate::channel::Backscatter::Disabled,
            ..NetworkConfig::default()
        };
        let p = CellProblem::isolated(&ch, &config);
        let grid = GridSpec::square(501);
        let o = grid_search_cell(&p, &grid).unwrap().unwrap();
        assert_eq!(o.beta, 0.0);
        let best = (0..501)
            .map(|i| {
                p.evaluate(&p.allocation(i as f64 * grid.alpha_resolution(), 0.0))
                    .ee
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(o.ee, best);
    }

    #[test]
    fn oracle_point_is_feasible_and_refines() {
        let ch = cell();
        let config = NetworkConfig {
            qos_rate_min: 0.5,
            sic_imperfection: 0.3,
            ..NetworkConfig::default()
        };
        let p = CellProblem::isolated(&ch, &config);
        let coarse = grid_search_cell(&p, &GridSpec::square(101))
            .unwrap()
            .unwrap();
        let fine = grid_search_cell(&p, &GridSpec::square(201))
            .unwrap()
            .unwrap();
        assert!(p
            .constraints(&p.allocation(fine.alpha_n, fine.beta))
            .all_ok());
        assert!(fine.ee >= coarse.ee);
    }

    #[test]
    fn solver_beats_grid() {
        let ch = cell();
        for (delta, r_min) in [(0.0, 0.0), (0.3, 0.0), (0.0, 0.5), (0.3, 0.5)] {
            let config = NetworkConfig {
                qos_rate_min: r_min,
                sic_imperfection: delta,
                ..NetworkConfig::default()
            };
            let p = CellProblem::isolated(&ch, &config);
            let o = grid_search_cell(&p, &GridSpec::square(300))
                .unwrap()
                .unwrap();
            let s = solve_cell(&p, &SolverSettings::default(), None).unwrap();
            assert!(certify(s.breakdown.ee, o.ee, 1e-3).unwrap().pass);
        }
    }

    #[test]
    fn small_batch_certifies() {
        let b = certify_batch(
            &NetworkConfig::default(),
            &SolverSettings::default(),
            &GridSpec::square(200),
            8,
            7,
            1e-3,
        )
        .unwrap();
        assert_eq!(b.instances.len(), 8);
        assert!(b.all_pass(), "{:?}", b.worst_margin());
        let deltas: Vec<f64> = b.instances.iter().map(|c| c.delta).collect();
        assert_eq!(&deltas[..4], &[0.0, 0.3, 0.0, 0.3]);
    }

    #[test]
    fn reflection_battery_is_clean() {
        let r = lemma_reflection_battery(&NetworkConfig::default(), 30, 20, 3);
        assert_eq!(r.checks, 600);
        assert!(r.passed(), "{:?}", r.examples);
    }

    // Joint concavity holds with perfect SIC whenever the near vehicle's
    // gain-to-noise ratio beats the far vehicle's.
    #[test]
    fn split_concavity_with_perfect_sic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut checked = 0;
        while checked < 100 {
            let ch = unit_cell(&mut rng);
            let config = NetworkConfig {
                sic_imperfection: 0.0,
                ..NetworkConfig::default()
            };
            let p = CellProblem::isolated(&ch, &config);
            let beta = rng.random::<f64>();
            let noise = config.noise_variance;
            if ch.near_gain(beta) * noise <= ch.far_gain(beta) * noise * 1.05 {
                continue;
            }
            let alpha_n = rng.random_range(0.05..0.45);
            let alpha_f = rng.random_range(alpha_n + 0.02..1.0 - alpha_n - 0.02);
            let (nn, ff, nf) = split_hessian(&p, alpha_n, alpha_f, beta, 1e-4);
            assert!(nn < 0.0 && ff < 0.0, "{nn} {ff}");
            assert!(nn * ff - nf * nf > 0.0);
            checked += 1;
        }
    }

    #[test]
    fn split_battery_counts_points() {
        let r = lemma_split_battery(&NetworkConfig::default(), 20, 1);
        assert_eq!(r.checks, 20);
    }
}
