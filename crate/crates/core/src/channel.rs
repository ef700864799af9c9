//! Network realizations and per-vehicle link quality.
//!
//! Every squared channel gain is an exponential draw (Rayleigh amplitude),
//! scaled by the per-link-class mean in [`FadingScale`]. Within a cell the two
//! direct gains are sorted so the near vehicle always holds the stronger one.
//!
//! The SINR expressions follow the usual two-user NOMA downlink with a
//! reflecting tag: the near vehicle runs SIC and keeps a residual fraction
//! `delta` of the far vehicle's signal, the far vehicle decodes directly and
//! sees the near vehicle's share as interference.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VEHICLES_PER_CELL: usize = 2;
pub const BACKSCATTER_PER_CELL: usize = 1;

/// Recorded in result metadata so CSV output can be reproduced elsewhere.
pub const RNG_ALGORITHM: &str =
    "ChaCha8 (rand_chacha 0.9, seed_from_u64); trial seeds via splitmix64";

/// Mean of the exponential power gain for each link class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FadingScale {
    /// RSU to vehicle, own cell.
    pub direct: f64,
    /// RSU to backscatter tag.
    pub tag: f64,
    /// Backscatter tag to vehicle.
    pub backscatter: f64,
    /// Neighbouring RSU to vehicle.
    pub cross: f64,
}

impl Default for FadingScale {
    fn default() -> Self {
        Self {
            direct: 1.0,
            tag: 1.0,
            backscatter: 1.0,
            cross: 1.0,
        }
    }
}

/// Whether the tag may reflect (WBS) or is forced silent (the NBS baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backscatter {
    #[default]
    Enabled,
    Disabled,
}

impl Backscatter {
    /// Largest admissible reflection coefficient.
    pub fn max_beta(self) -> f64 {
        match self {
            Backscatter::Enabled => 1.0,
            Backscatter::Disabled => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_cells: usize,
    pub power_budget_dbm: f64,
    #[serde(default = "default_circuit_power")]
    pub circuit_power_w: f64,
    pub qos_rate_min: f64,
    pub sic_imperfection: f64,
    #[serde(default = "default_noise")]
    pub noise_variance: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_vehicles")]
    pub vehicles_per_cell: usize,
    #[serde(default = "default_backscatter_devices")]
    pub backscatter_per_cell: usize,
    #[serde(default)]
    pub backscatter: Backscatter,
    #[serde(default)]
    pub fading: FadingScale,
}

fn default_circuit_power() -> f64 {
    0.1
}

fn default_noise() -> f64 {
    0.1
}

fn default_vehicles() -> usize {
    VEHICLES_PER_CELL
}

fn default_backscatter_devices() -> usize {
    BACKSCATTER_PER_CELL
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_cells: 1,
            power_budget_dbm: 30.0,
            circuit_power_w: default_circuit_power(),
            qos_rate_min: 0.5,
            sic_imperfection: 0.1,
            noise_variance: default_noise(),
            rng_seed: 0,
            vehicles_per_cell: VEHICLES_PER_CELL,
            backscatter_per_cell: BACKSCATTER_PER_CELL,
            backscatter: Backscatter::Enabled,
            fading: FadingScale::default(),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_cells == 0 {
            return Err(Error::config("num_cells", "must be at least 1"));
        }
        if !(self.power_budget_dbm.is_finite() && self.power_budget_dbm >= 0.0) {
            return Err(Error::config(
                "power_budget_dbm",
                "must be finite and >= 0 dBm",
            ));
        }
        if !(self.circuit_power_w.is_finite() && self.circuit_power_w > 0.0) {
            return Err(Error::config("circuit_power_w", "must be finite and > 0"));
        }
        if !(self.qos_rate_min.is_finite() && self.qos_rate_min >= 0.0) {
            return Err(Error::config("qos_rate_min", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.sic_imperfection) {
            return Err(Error::config("sic_imperfection", "must lie in [0, 1]"));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance > 0.0) {
            return Err(Error::config("noise_variance", "must be finite and > 0"));
        }
        if self.rng_seed > i64::MAX as u64 {
            return Err(Error::config(
                "rng_seed",
                "must fit in a signed 64-bit TOML integer",
            ));
        }
        if self.vehicles_per_cell != VEHICLES_PER_CELL {
            return Err(Error::config("vehicles_per_cell", "must be exactly 2"));
        }
        if self.backscatter_per_cell != BACKSCATTER_PER_CELL {
            return Err(Error::config("backscatter_per_cell", "must be exactly 1"));
        }
        let f = &self.fading;
        for (name, v) in [
            ("fading.direct", f.direct),
            ("fading.tag", f.tag),
            ("fading.backscatter", f.backscatter),
            ("fading.cross", f.cross),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }

    pub fn power_budget_w(&self) -> f64 {
        dbm_to_watts(self.power_budget_dbm)
    }
}

/// All squared channel gains seen by one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellChannels {
    pub g_n_sq: f64,
    pub g_f_sq: f64,
    pub g_k_sq: f64,
    pub h_nk_sq: f64,
    pub h_fk_sq: f64,
    /// Gains from every other RSU to this cell's near vehicle, in cell order
    /// with this cell skipped.
    pub cross_gains_n: Vec<f64>,
    pub cross_gains_f: Vec<f64>,
}

impl CellChannels {
    /// Direct plus reflected gain at the near vehicle for reflection `beta`.
    pub fn near_gain(&self, beta: f64) -> f64 {
        self.g_n_sq + beta * self.g_k_sq * self.h_nk_sq
    }

    pub fn far_gain(&self, beta: f64) -> f64 {
        self.g_f_sq + beta * self.g_k_sq * self.h_fk_sq
    }

    pub fn cross_gains(&self, vehicle: Vehicle) -> &[f64] {
        match vehicle {
            Vehicle::Near => &self.cross_gains_n,
            Vehicle::Far => &self.cross_gains_f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vehicle {
    Near,
    Far,
}

impl fmt::Display for Vehicle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Vehicle::Near => "near",
            Vehicle::Far => "far",
        })
    }
}

/// Per-cell decision variables plus the RSU transmit power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub alpha_n: f64,
    pub alpha_f: f64,
    pub beta: f64,
    pub p_s_w: f64,
}

impl Allocation {
    /// Power actually radiated by the RSU, which is what neighbours see.
    pub fn radiated_power(&self) -> f64 {
        self.p_s_w * (self.alpha_n + self.alpha_f)
    }
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Mixes `parts` into `base` with splitmix64 rounds. The result is kept
/// below `2^63` so it survives a round trip through TOML integers.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p))) & (i64::MAX as u64)
}

/// Draws one network realization. Deterministic in `config.rng_seed`.
///
/// The config is assumed to be valid; see [`NetworkConfig::validate`].
pub fn sample_network(config: &NetworkConfig) -> Vec<CellChannels> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let scale = config.fading;
    let s = config.num_cells;
    let mut draw = |mean: f64| -> f64 {
        let e: f64 = Exp1.sample(&mut rng);
        mean * e
    };
    (0..s)
        .map(|_| {
            let a = draw(scale.direct);
            let b = draw(scale.direct);
            let (g_n_sq, g_f_sq) = if a >= b { (a, b) } else { (b, a) };
            let g_k_sq = draw(scale.tag);
            let h_nk_sq = draw(scale.backscatter);
            let h_fk_sq = draw(scale.backscatter);
            let cross_gains_n = (1..s).map(|_| draw(scale.cross)).collect();
            let cross_gains_f = (1..s).map(|_| draw(scale.cross)).collect();
            CellChannels {
                g_n_sq,
                g_f_sq,
                g_k_sq,
                h_nk_sq,
                h_fk_sq,
                cross_gains_n,
                cross_gains_f,
            }
        })
        .collect()
}

/// Co-channel interference at `vehicle` of cell `cell_index`, given the
/// radiated power of every RSU (own entry ignored).
pub fn interference(
    cell_index: usize,
    vehicle: Vehicle,
    channels: &[CellChannels],
    powers: &[f64],
) -> Result<f64> {
    if powers.len() != channels.len() {
        return Err(Error::LengthMismatch {
            expected: channels.len(),
            actual: powers.len(),
        });
    }
    if cell_index >= channels.len() {
        return Err(Error::Usage(format!(
            "cell index {cell_index} out of range for {} cells",
            channels.len()
        )));
    }
    let gains = channels[cell_index].cross_gains(vehicle);
    if gains.len() + 1 != channels.len() {
        return Err(Error::LengthMismatch {
            expected: channels.len() - 1,
            actual: gains.len(),
        });
    }
    let neighbours = powers
        .iter()
        .enumerate()
        .filter(|&(other, _)| other != cell_index)
        .map(|(_, &p)| p);
    Ok(gains.iter().zip(neighbours).map(|(g, p)| g * p).sum())
}

pub fn sinr_near(ch: &CellChannels, a: &Allocation, delta: f64, i_n: f64, noise: f64) -> f64 {
    let signal = a.p_s_w * a.alpha_n * ch.near_gain(a.beta);
    let residual = a.p_s_w * a.alpha_f * ch.g_n_sq * delta;
    signal / (residual + i_n + noise)
}

pub fn sinr_far(ch: &CellChannels, a: &Allocation, i_f: f64, noise: f64) -> f64 {
    let gain = ch.far_gain(a.beta);
    let signal = a.p_s_w * a.alpha_f * gain;
    let intra = a.p_s_w * a.alpha_n * gain;
    signal / (intra + i_f + noise)
}

/// Achievable rate in bits/s/Hz.
pub fn rate(sinr: f64) -> f64 {
    sinr.ln_1p() / std::f64::consts::LN_2
}
