use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{implied_biases, LoadModel, NetworkConfig};
use crate::optimize::{
    brute_force, optimize_equal_fractions, optimize_joint, optimize_spectrum_maxsir, SolveOptions,
    SolveResult,
};
use crate::sim::{simulate_coverage, SimConfig};

/// Which rate thresholds a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    AllTiers,
    /// One tier, numbered from 1 like the output columns.
    OneTier(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Joint,
    EqualFractions,
    MaxSirSpectrumOnly,
    BruteForce,
    /// Joint optimum under the higher-load model; its objective is the
    /// higher-load coverage.
    JointHigherLoad,
}

impl SweepMode {
    pub const ALL: [SweepMode; 5] = [
        SweepMode::Joint,
        SweepMode::EqualFractions,
        SweepMode::MaxSirSpectrumOnly,
        SweepMode::BruteForce,
        SweepMode::JointHigherLoad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepMode::Joint => "joint",
            SweepMode::EqualFractions => "equal_fractions",
            SweepMode::MaxSirSpectrumOnly => "max_sir_spectrum_only",
            SweepMode::BruteForce => "brute_force",
            SweepMode::JointHigherLoad => "joint_higher_load",
        }
    }

    pub fn load_model(self) -> LoadModel {
        match self {
            SweepMode::JointHigherLoad => LoadModel::HigherLoad,
            _ => LoadModel::MeanLoad,
        }
    }

    pub fn solve(self, config: &NetworkConfig, opts: &SolveOptions) -> Result<SolveResult> {
        let model = self.load_model();
        match self {
            SweepMode::Joint | SweepMode::JointHigherLoad => optimize_joint(config, model, opts),
            SweepMode::EqualFractions => optimize_equal_fractions(config, model),
            SweepMode::MaxSirSpectrumOnly => optimize_spectrum_maxsir(config, model, opts),
            SweepMode::BruteForce => brute_force(config, model, opts.grid_step),
        }
    }
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid("mode", format!("unknown mode `{s}`")))
    }
}

fn default_modes() -> Vec<SweepMode> {
    vec![SweepMode::Joint, SweepMode::EqualFractions]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    /// Rate thresholds in bits/s, strictly increasing.
    pub values: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<SweepMode>,
}

impl SweepSpec {
    pub fn validate(&self, num_tiers: usize) -> Result<()> {
        if let SweepVariable::OneTier(t) = self.variable {
            if t == 0 || t > num_tiers {
                return Err(Error::invalid(
                    "sweep.variable.one_tier",
                    format!("tier {t} is not in 1..={num_tiers}"),
                ));
            }
        }
        if self.values.is_empty() {
            return Err(Error::invalid("sweep.values", "must not be empty"));
        }
        for (i, &v) in self.values.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    format!("sweep.values[{i}]"),
                    "must be positive and finite",
                ));
            }
            if i > 0 && v <= self.values[i - 1] {
                return Err(Error::invalid(
                    format!("sweep.values[{i}]"),
                    "values must be strictly increasing",
                ));
            }
        }
        if self.modes.is_empty() {
            return Err(Error::invalid("sweep.modes", "must not be empty"));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if self.modes[..i].contains(m) {
                return Err(Error::invalid(
                    format!("sweep.modes[{i}]"),
                    format!("duplicate mode `{m}`"),
                ));
            }
        }
        Ok(())
    }

    /// Scenario with the swept threshold set to `value`.
    pub fn apply(&self, config: &NetworkConfig, value: f64) -> Result<NetworkConfig> {
        let mut rates = config.rate_thresholds();
        match self.variable {
            SweepVariable::AllTiers => rates.iter_mut().for_each(|r| *r = value),
            SweepVariable::OneTier(t) => rates[t - 1] = value,
        }
        config.with_rate_thresholds(&rates)
    }
}

/// One solved allocation with provenance. Used for sweep tables and for
/// single `optimize` results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRow {
    /// Swept rate threshold in bits/s; `None` outside sweeps when tiers
    /// have different thresholds.
    pub threshold: Option<f64>,
    pub mode: SweepMode,
    pub objective: Option<f64>,
    pub assoc: Vec<f64>,
    pub spectrum: Vec<f64>,
    /// Biases realizing `assoc`, smallest positive one scaled to 1; zero
    /// for tiers with no association.
    pub biases: Vec<f64>,
    pub converged: bool,
    pub mc_estimate: Option<f64>,
    pub mc_stderr: Option<f64>,
    /// Solver error message when the mode could not run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub tolerance: f64,
}

impl SweepRow {
    /// Runs `mode` on `config` and fills a row. Solver failures end up in
    /// `error` rather than aborting.
    pub fn solve(
        config: &NetworkConfig,
        mode: SweepMode,
        threshold: Option<f64>,
        opts: &SolveOptions,
        sim: Option<&SimConfig>,
        config_hash: &str,
    ) -> Self {
        let mut row = SweepRow {
            threshold,
            mode,
            objective: None,
            assoc: Vec::new(),
            spectrum: Vec::new(),
            biases: Vec::new(),
            converged: false,
            mc_estimate: None,
            mc_stderr: None,
            error: None,
            config_hash: config_hash.to_string(),
            seed: opts.seed,
            tolerance: opts.tolerance,
        };
        let result = match mode.solve(config, opts) {
            Ok(r) => r,
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        };
        row.objective = Some(result.objective());
        row.biases = implied_biases(config, &result.alloc.assoc);
        row.converged = result.converged;
        if let Some(sim) = sim {
            match simulate_coverage(config, &result.alloc, sim) {
                Ok(mc) => {
                    row.mc_estimate = Some(mc.coverage_estimate);
                    row.mc_stderr = Some(mc.std_error);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
        }
        row.assoc = result.alloc.assoc;
        row.spectrum = result.alloc.spectrum;
        row
    }

    /// Structural checks for rows read back from disk. Allocations are
    /// compared with a tolerance loose enough for 10-digit output.
    pub fn validate(&self, num_tiers: usize) -> Result<()> {
        let solved = self.objective.is_some();
        for (name, v) in [
            ("assoc", &self.assoc),
            ("spectrum", &self.spectrum),
            ("biases", &self.biases),
        ] {
            let expected = if solved { num_tiers } else { 0 };
            if v.len() != expected {
                return Err(Error::invalid(
                    name,
                    format!("has {} entries, expected {expected}", v.len()),
                ));
            }
        }
        if let Some(obj) = self.objective {
            if !(0.0..=1.0 + 1e-9).contains(&obj) {
                return Err(Error::invalid(
                    "objective",
                    format!("{obj} is not a probability"),
                ));
            }
            for (name, v) in [("assoc", &self.assoc), ("spectrum", &self.spectrum)] {
                let sum: f64 = v.iter().sum();
                if v.iter().any(|x| !(0.0..=1.0 + 1e-9).contains(x)) || (sum - 1.0).abs() > 1e-8 {
                    return Err(Error::invalid(name, "is not on the simplex"));
                }
            }
        }
        if self.config_hash.len() != 64 || !self.config_hash.bytes().all(|b| b.is_ascii_hexdigit())
        {
            return Err(Error::invalid("config_hash", "is not a SHA-256 hex digest"));
        }
        Ok(())
    }
}

/// Solves every `(value, mode)` pair, in parallel. Rows come back ordered
/// by value and then by the order of `spec.modes`.
pub fn run_sweep(
    config: &NetworkConfig,
    spec: &SweepSpec,
    opts: &SolveOptions,
    sim: Option<&SimConfig>,
    config_hash: &str,
) -> Result<Vec<SweepRow>> {
    spec.validate(config.num_tiers())?;
    opts.validate()?;
    if let Some(sim) = sim {
        sim.radius(config)?;
    }
    let configs = spec
        .values
        .iter()
        .map(|&v| spec.apply(config, v))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, SweepMode)> = (0..spec.values.len())
        .flat_map(|i| spec.modes.iter().map(move |&m| (i, m)))
        .collect();
    Ok(jobs
        .into_par_iter()
        .map(|(i, mode)| {
            SweepRow::solve(
                &configs[i],
                mode,
                Some(spec.values[i]),
                opts,
                sim,
                config_hash,
            )
        })
        .collect())
}
