//! Run configuration: one TOML file with `[network]`, `[solver]` and optional
//! `[sweep]` / `[certify]` tables, plus `key=value` overrides on dotted paths.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::NetworkConfig;
use crate::error::{Error, Result};
use crate::experiments::{Baseline, SweepKind, SweepSpec};
use crate::oracle::GridSpec;
use crate::solver::SolverSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<Baseline>,
    /// SIC residues; defaults to the network's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    /// Cell counts; defaults to the network's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rsu_counts: Option<Vec<usize>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_baselines() -> Vec<Baseline> {
    vec![Baseline::Wbs, Baseline::Nbs]
}

fn default_trials() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySection {
    pub instances: usize,
    /// Grid points per axis.
    pub grid: usize,
    pub tolerance: f64,
}

impl Default for CertifySection {
    fn default() -> Self {
        Self {
            instances: 100,
            grid: GridSpec::default().alpha_steps,
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub certify: CertifySection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", one_line(&e.to_string())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", one_line(&e.to_string())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides).map_err(|e| match e {
            Error::Config { field, reason } => Error::Config {
                field: format!("{}: {field}", path.display()),
                reason,
            },
            e => e,
        })
    }

    /// Defaults plus overrides, for runs without a config file.
    pub fn from_overrides(overrides: &[String]) -> Result<Self> {
        let text = toml::to_string(&RunConfig::default())
            .map_err(|e| Error::config("config", e.to_string()))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.solver.validate()?;
        if let Some(spec) = self.sweep_spec()? {
            spec.validate()?;
        }
        GridSpec::square(self.certify.grid).validate()?;
        if !(self.certify.tolerance >= 0.0 && self.certify.tolerance.is_finite()) {
            return Err(Error::config(
                "certify.tolerance",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }

    /// The sweep described by `[sweep]` on top of `[network]`, if present.
    pub fn sweep_spec(&self) -> Result<Option<SweepSpec>> {
        let Some(s) = &self.sweep else {
            return Ok(None);
        };
        Ok(Some(SweepSpec {
            sweep_kind: s.kind,
            sweep_values: s.values.clone(),
            baselines: s.baselines.clone(),
            delta_values: s
                .deltas
                .clone()
                .unwrap_or_else(|| vec![self.network.sic_imperfection]),
            rsu_counts: s
                .rsu_counts
                .clone()
                .unwrap_or_else(|| vec![self.network.num_cells]),
            trials: s.trials,
            base_config: self.network.clone(),
        }))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `raw` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `a.b.c=value` override, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Usage(format!(
            "override `{assignment}` is not of the form key=value"
        ))
    })?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Usage(format!(
            "override `{assignment}` has an empty key segment"
        )));
    }
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            Error::Usage(format!("override `{assignment}`: `{p}` is not a table"))
        })?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}
