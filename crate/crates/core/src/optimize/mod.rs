//! Rate-coverage maximization over association probabilities and spectrum
//! fractions.
//!
//! * [`optimize_joint`]: projected gradient ascent on both simplices.
//! * [`optimize_equal_fractions`]: closed form when `A_k = w_k`.
//! * [`optimize_spectrum_maxsir`]: spectrum only, association fixed at unit
//!   biases.
//! * [`brute_force`]: exhaustive lattice search, used as the oracle.

mod brute;
mod closed_form;
mod joint;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{rate_coverage, CoverageReport};
use crate::network::{AllocationPair, LoadModel, NetworkConfig};

pub use brute::{brute_force, MAX_BRUTE_FORCE_POINTS, MAX_BRUTE_FORCE_TIERS};
pub use closed_form::optimize_equal_fractions;
pub use joint::{optimize_joint, optimize_spectrum_maxsir};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Stopping threshold on the KKT residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Random starting points in addition to the closed-form warm start.
    pub restarts: usize,
    /// Lattice spacing of the brute-force search; must divide 1.
    pub grid_step: f64,
    /// Seed for the random restarts.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 10_000,
            restarts: 8,
            grid_step: 0.01,
            seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::invalid("solve.tolerance", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("solve.max_iterations", "must be positive"));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(Error::invalid("solve.grid_step", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Joint,
    EqualFractions,
    MaxSirSpectrumOnly,
    BruteForce,
}

/// Outcome of one local search started from one initial point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub initial_objective: f64,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub alloc: AllocationPair,
    /// `rate_coverage` recomputed at `alloc`.
    pub report: CoverageReport,
    pub converged: bool,
    pub iterations: usize,
    pub mode: SolveMode,
    /// Set when the closed form hit a zero or saturated kernel and had to
    /// fall back to splitting among the remaining tiers.
    pub degenerate: bool,
    /// Per-start outcomes of multi-start searches, in start order (the
    /// closed-form warm start first). Empty for non-iterative modes.
    pub starts: Vec<StartOutcome>,
}

impl SolveResult {
    pub fn objective(&self) -> f64 {
        self.report.objective
    }

    fn finish(
        config: &NetworkConfig,
        model: LoadModel,
        alloc: AllocationPair,
        mode: SolveMode,
    ) -> Result<Self> {
        let report = rate_coverage(config, &alloc, model)?;
        Ok(Self {
            alloc,
            report,
            converged: true,
            iterations: 0,
            mode,
            degenerate: false,
            starts: Vec::new(),
        })
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::network::{NetworkConfig, TierParams};

    /// Three tiers with the densities and powers used throughout the
    /// evaluation: λ = {0.01, 0.05, 0.2} λ_u, P = {46, 30, 20} dBm, α = 3.5,
    /// W = 10 MHz.
    pub fn three_tier(rate: f64) -> NetworkConfig {
        let lu = 0.05;
        NetworkConfig::new(
            vec![
                TierParams::new(46.0, 0.01 * lu, 1.0, rate),
                TierParams::new(30.0, 0.05 * lu, 1.0, rate),
                TierParams::new(20.0, 0.2 * lu, 1.0, rate),
            ],
            lu,
            1e7,
            3.5,
        )
        .unwrap()
    }

    pub fn symmetric(k: usize, rate: f64) -> NetworkConfig {
        NetworkConfig::new(
            vec![TierParams::new(30.0, 0.01, 1.0, rate); k],
            0.05,
            1e7,
            3.5,
        )
        .unwrap()
    }
}
