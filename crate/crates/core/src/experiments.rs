//! Monte Carlo sweeps over network realizations, curve-shape summaries and
//! CSV output.
//!
//! Trial `t` of a sweep with `S` cells always draws its channels from the
//! seed derived from `(base seed, S, t)`, whatever the sweep value, baseline
//! or SIC residue. Curves are therefore compared on common random numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{derive_seed, sample_network, Backscatter, NetworkConfig, RNG_ALGORITHM};
use crate::error::{Error, Result};
use crate::solver::{solve_network, SolverSettings};

pub const CSV_HEADER: &str =
    "sweep_kind,sweep_value,baseline,delta,S,mean_ee,std_ee,mean_iters,infeasible_fraction,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Sweep values are RSU power budgets in dBm.
    EeVsPower,
    /// Sweep values are rate floors in bits/s/Hz.
    EeVsRmin,
    /// Sweep values are iteration indices (1-based); each row reports the
    /// network EE after that many Dinkelbach iterations.
    Convergence,
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::EeVsPower => "ee_vs_power",
            SweepKind::EeVsRmin => "ee_vs_rmin",
            SweepKind::Convergence => "convergence",
        })
    }
}

/// With backscattering (WBS) or the no-backscattering baseline (NBS).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Baseline {
    Wbs,
    Nbs,
}

impl Baseline {
    pub fn backscatter(self) -> Backscatter {
        match self {
            Baseline::Wbs => Backscatter::Enabled,
            Baseline::Nbs => Backscatter::Disabled,
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::Wbs => "WBS",
            Baseline::Nbs => "NBS",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub sweep_kind: SweepKind,
    pub sweep_values: Vec<f64>,
    pub baselines: Vec<Baseline>,
    pub delta_values: Vec<f64>,
    pub rsu_counts: Vec<usize>,
    pub trials: usize,
    /// Everything not swept; its `rng_seed` is the base seed of the sweep.
    pub base_config: NetworkConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("sweep.trials", "must be at least 1"));
        }
        if self.sweep_values.is_empty() {
            return Err(Error::config("sweep.values", "must not be empty"));
        }
        if !self.sweep_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("sweep.values", "must be strictly increasing"));
        }
        if self.sweep_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("sweep.values", "must be finite"));
        }
        if self.sweep_kind == SweepKind::Convergence
            && self
                .sweep_values
                .iter()
                .any(|v| *v < 1.0 || v.fract() != 0.0)
        {
            return Err(Error::config(
                "sweep.values",
                "must be iteration indices 1, 2, ... for a convergence sweep",
            ));
        }
        if self.baselines.is_empty() {
            return Err(Error::config("sweep.baselines", "must not be empty"));
        }
        if self.delta_values.is_empty() {
            return Err(Error::config("sweep.deltas", "must not be empty"));
        }
        if self.rsu_counts.is_empty() || self.rsu_counts.contains(&0) {
            return Err(Error::config(
                "sweep.rsu_counts",
                "must be non-empty and positive",
            ));
        }
        for &cells in &self.rsu_counts {
            for &delta in &self.delta_values {
                for &v in &self.sweep_values {
                    self.point_config(v, Baseline::Wbs, delta, cells)
                        .validate()?;
                }
            }
        }
        Ok(())
    }

    /// Network configuration of one sweep point, before the per-trial seed.
    pub fn point_config(
        &self,
        value: f64,
        baseline: Baseline,
        delta: f64,
        cells: usize,
    ) -> NetworkConfig {
        let mut c = NetworkConfig {
            num_cells: cells,
            sic_imperfection: delta,
            backscatter: baseline.backscatter(),
            ..self.base_config.clone()
        };
        match self.sweep_kind {
            SweepKind::EeVsPower => c.power_budget_dbm = value,
            SweepKind::EeVsRmin => c.qos_rate_min = value,
            SweepKind::Convergence => {}
        }
        c
    }

    pub fn trial_seed(&self, cells: usize, trial: usize) -> u64 {
        derive_seed(self.base_config.rng_seed, &[cells as u64, trial as u64])
    }
}

/// One aggregated sweep point. EE statistics are over feasible trials only
/// and are absent when no trial was feasible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_kind: SweepKind,
    pub sweep_value: f64,
    pub baseline: Baseline,
    pub delta: f64,
    pub cells: usize,
    pub mean_ee: Option<f64>,
    pub std_ee: Option<f64>,
    pub mean_iters: Option<f64>,
    pub infeasible_fraction: f64,
    pub feasible_trials: usize,
    pub seed: u64,
}

/// Result of one Monte Carlo trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub seed: u64,
    /// `None` when some cell could not meet its rate floors.
    pub total_ee: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub ee_by_iteration: Vec<f64>,
    /// Smallest C1/C2 slack over all cells (watts).
    pub min_rate_slack: Option<f64>,
    /// Every cell's final allocation passes C1-C5.
    pub allocation_feasible: bool,
}

pub fn run_trial(config: &NetworkConfig, settings: &SolverSettings) -> Result<TrialOutcome> {
    let channels = sample_network(config);
    match solve_network(&channels, config, settings) {
        Ok(sol) => Ok(TrialOutcome {
            seed: config.rng_seed,
            total_ee: Some(sol.total_ee),
            iterations: sol.iterations,
            converged: sol.converged,
            ee_by_iteration: sol.ee_by_iteration,
            min_rate_slack: sol
                .reports
                .iter()
                .map(|r| r.min_rate_slack())
                .min_by(f64::total_cmp),
            allocation_feasible: sol.reports.iter().all(|r| r.all_ok()),
        }),
        Err(Error::NetworkInfeasible { .. }) => Ok(TrialOutcome {
            seed: config.rng_seed,
            total_ee: None,
            iterations: 0,
            converged: false,
            ee_by_iteration: Vec::new(),
            min_rate_slack: None,
            allocation_feasible: false,
        }),
        Err(e) => Err(e),
    }
}

/// Trials behind one curve: fixed baseline, SIC residue and cell count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveTrials {
    pub baseline: Baseline,
    pub delta: f64,
    pub cells: usize,
    /// One entry per sweep value (a single entry for convergence sweeps).
    pub points: Vec<Vec<TrialOutcome>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub curves: Vec<CurveTrials>,
}

fn run_point(
    spec: &SweepSpec,
    config: &NetworkConfig,
    settings: &SolverSettings,
) -> Result<Vec<TrialOutcome>> {
    (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let c = NetworkConfig {
                rng_seed: spec.trial_seed(config.num_cells, t),
                ..config.clone()
            };
            run_trial(&c, settings)
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

fn aggregate(
    spec: &SweepSpec,
    value: f64,
    curve: (Baseline, f64, usize),
    ees: &[f64],
    iters: &[f64],
) -> ResultRow {
    let (baseline, delta, cells) = curve;
    let stats = mean_std(ees);
    ResultRow {
        sweep_kind: spec.sweep_kind,
        sweep_value: value,
        baseline,
        delta,
        cells,
        mean_ee: stats.map(|s| s.0),
        std_ee: stats.map(|s| s.1),
        mean_iters: mean_std(iters).map(|s| s.0),
        infeasible_fraction: 1.0 - ees.len() as f64 / spec.trials as f64,
        feasible_trials: ees.len(),
        seed: spec.base_config.rng_seed,
    }
}

/// Runs every (cell count, SIC residue, baseline, sweep value) point and
/// keeps the per-trial outcomes alongside the aggregated rows.
///
/// Rows are ordered by cell count, then SIC residue, then baseline, then
/// sweep value, each in the order of the `SweepSpec` lists.
pub fn run_sweep_detailed(spec: &SweepSpec, settings: &SolverSettings) -> Result<SweepOutput> {
    spec.validate()?;
    settings.validate()?;
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for &cells in &spec.rsu_counts {
        for &delta in &spec.delta_values {
            for &baseline in &spec.baselines {
                let key = (baseline, delta, cells);
                let mut points = Vec::new();
                match spec.sweep_kind {
                    SweepKind::Convergence => {
                        let config = spec.point_config(0.0, baseline, delta, cells);
                        let trials = run_point(spec, &config, settings)?;
                        let feasible: Vec<&TrialOutcome> =
                            trials.iter().filter(|t| t.total_ee.is_some()).collect();
                        let iters: Vec<f64> =
                            feasible.iter().map(|t| t.iterations as f64).collect();
                        for &v in &spec.sweep_values {
                            let k = v as usize;
                            let ees: Vec<f64> = feasible
                                .iter()
                                .map(|t| t.ee_by_iteration[k.min(t.ee_by_iteration.len()) - 1])
                                .collect();
                            rows.push(aggregate(spec, v, key, &ees, &iters));
                        }
                        points.push(trials);
                    }
                    SweepKind::EeVsPower | SweepKind::EeVsRmin => {
                        for &v in &spec.sweep_values {
                            let config = spec.point_config(v, baseline, delta, cells);
                            let trials = run_point(spec, &config, settings)?;
                            let (ees, iters): (Vec<f64>, Vec<f64>) = trials
                                .iter()
                                .filter_map(|t| t.total_ee.map(|e| (e, t.iterations as f64)))
                                .unzip();
                            rows.push(aggregate(spec, v, key, &ees, &iters));
                            points.push(trials);
                        }
                    }
                }
                curves.push(CurveTrials {
                    baseline,
                    delta,
                    cells,
                    points,
                });
            }
        }
    }
    Ok(SweepOutput { rows, curves })
}

pub fn run_sweep(spec: &SweepSpec, settings: &SolverSettings) -> Result<Vec<ResultRow>> {
    Ok(run_sweep_detailed(spec, settings)?.rows)
}

/// One point of a curve as seen by [`summarize_shape`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub value: f64,
    pub mean: Option<f64>,
    /// Half-width of the noise band, `2 std / sqrt(n)`.
    pub band: f64,
}

impl CurvePoint {
    pub fn from_row(row: &ResultRow) -> Self {
        let band = match (row.std_ee, row.feasible_trials) {
            (Some(s), n) if n > 0 => 2.0 * s / (n as f64).sqrt(),
            _ => 0.0,
        };
        Self {
            value: row.sweep_value,
            mean: row.mean_ee,
            band,
        }
    }

    pub fn exact(value: f64, mean: f64) -> Self {
        Self {
            value,
            mean: Some(mean),
            band: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dominance {
    /// Every point of the curve is at least the comparison's.
    pub holds: bool,
    /// Smallest pointwise `curve - comparison`.
    pub min_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeReport {
    pub is_unimodal: bool,
    pub argmax_value: f64,
    pub dominance_vs: BTreeMap<String, Dominance>,
}

/// Shape of one curve: unimodality within the noise band, where it peaks,
/// and pointwise dominance over each named comparison curve.
///
/// A curve with an absent point is not unimodal, and comparisons involving
/// an absent point do not hold.
pub fn summarize_shape(
    curve: &[CurvePoint],
    comparisons: &[(String, Vec<CurvePoint>)],
) -> Result<ShapeReport> {
    if curve.len() < 3 {
        return Err(Error::Usage(format!(
            "shape summary needs at least 3 points, got {}",
            curve.len()
        )));
    }
    let means: Option<Vec<f64>> = curve.iter().map(|p| p.mean).collect();
    let (is_unimodal, argmax) = match &means {
        Some(m) => {
            let peak = m
                .iter()
                .enumerate()
                .fold(0, |best, (i, v)| if *v > m[best] { i } else { best });
            let tol = |i: usize| curve[i].band + curve[i + 1].band;
            let rising = (0..peak).all(|i| m[i + 1] >= m[i] - tol(i));
            let falling = (peak..m.len() - 1).all(|i| m[i + 1] <= m[i] + tol(i));
            (rising && falling, peak)
        }
        None => (false, 0),
    };
    let mut dominance_vs = BTreeMap::new();
    for (name, other) in comparisons {
        if other.len() != curve.len() {
            return Err(Error::LengthMismatch {
                expected: curve.len(),
                actual: other.len(),
            });
        }
        let gaps: Option<Vec<f64>> = curve
            .iter()
            .zip(other)
            .map(|(a, b)| Some(a.mean? - b.mean?))
            .collect();
        let d = match gaps {
            Some(g) => {
                let min_gap = g.into_iter().fold(f64::INFINITY, f64::min);
                Dominance {
                    holds: min_gap >= 0.0,
                    min_gap,
                }
            }
            None => Dominance {
                holds: false,
                min_gap: f64::NAN,
            },
        };
        dominance_vs.insert(name.clone(), d);
    }
    Ok(ShapeReport {
        is_unimodal,
        argmax_value: curve[argmax].value,
        dominance_vs,
    })
}

/// `printf("%.9g")` formatting, so files are byte-stable across platforms.
pub fn format_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_line(row: &ResultRow) -> String {
    let opt = |v: Option<f64>| v.map(format_g9).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{}\n",
        row.sweep_kind,
        format_g9(row.sweep_value),
        row.baseline,
        format_g9(row.delta),
        row.cells,
        opt(row.mean_ee),
        opt(row.std_ee),
        opt(row.mean_iters),
        format_g9(row.infeasible_fraction),
        row.seed
    )
}

/// Rows as CSV text with LF line endings.
pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    rows.iter().for_each(|r| out.push_str(&csv_line(r)));
    out
}

pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(render_csv(rows).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Contents of the JSON file written next to a results CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub artifact: &'static str,
    pub version: &'static str,
    pub rng_algorithm: &'static str,
    pub spec: SweepSpec,
    pub settings: SolverSettings,
    /// `key=value` overrides applied after reading the config file, in order.
    pub overrides: Vec<String>,
}

impl RunMetadata {
    pub fn new(spec: &SweepSpec, settings: &SolverSettings, overrides: &[String]) -> Self {
        Self {
            artifact: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            rng_algorithm: RNG_ALGORITHM,
            spec: spec.clone(),
            settings: settings.clone(),
            overrides: overrides.to_vec(),
        }
    }
}

/// `results.csv` -> `results.csv.meta.json`.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn write_metadata(meta: &RunMetadata, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::Usage(format!("cannot serialize run metadata: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
