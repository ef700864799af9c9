//! Energy-efficiency maximization for multi-cell NOMA vehicular networks with
//! ambient backscatter devices.
//!
//! Each cell has one road-side unit (RSU) serving a near and a far vehicle
//! over downlink NOMA, plus one backscatter tag that reflects the RSU signal
//! toward both vehicles. The solver alternates a reflection-coefficient step
//! and a power-split step inside a Dinkelbach loop, and sweeps the cells in
//! Gauss-Seidel order so co-channel interference stays consistent.
//!
//! Module map:
//! - [`channel`]: Rayleigh network realizations, SINRs and rates.
//! - [`objective`]: per-cell energy efficiency, constraints C1-C5, `F(theta)`.
//! - [`solver`]: closed-form updates, subgradient multipliers, Dinkelbach loop.
//! - [`oracle`]: brute-force grid search and finite-difference lemma batteries.
//! - [`experiments`]: Monte Carlo sweeps, shape summaries and CSV output.
//! - [`config`] and [`cli`]: TOML run configuration and the command-line front end.

pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod objective;
pub mod oracle;
pub mod solver;

pub use channel::{
    dbm_to_watts, derive_seed, interference, rate, sample_network, sinr_far, sinr_near, Allocation,
    Backscatter, CellChannels, FadingScale, NetworkConfig, Vehicle,
};
pub use error::{Error, Result};
pub use objective::{
    cell_ee, check_constraints, dinkelbach_value, total_ee, CellProblem, EEBreakdown,
    FeasibilityReport,
};
pub use solver::{
    power_split_closed_form, quadratic_coefficients, reflection_closed_form, solve_cell,
    solve_network, update_multipliers, CellSolution, Multipliers, NetworkSolution,
    QuadCoefficients, RootBranch, SolveTrace, SolverSettings,
};
