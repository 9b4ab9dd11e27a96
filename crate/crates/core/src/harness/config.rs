use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{AllocationPair, NetworkConfig, TierParams};
use crate::optimize::SolveOptions;
use crate::sim::SimConfig;

use super::sweep::SweepSpec;

/// On-disk schema. Units: densities per square meter, powers in dBm,
/// bandwidth in Hz, rate thresholds in bits/s.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    user_density: f64,
    bandwidth: f64,
    path_loss_exponent: f64,
    tiers: Vec<TierParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepSpec>,
    #[serde(default)]
    solve: SolveOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    simulation: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    allocation: Option<AllocationPair>,
}

/// A validated scenario bundle.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: NetworkConfig,
    pub sweep: Option<SweepSpec>,
    pub solve: SolveOptions,
    pub simulation: Option<SimConfig>,
    pub allocation: Option<AllocationPair>,
    /// SHA-256 of the canonical JSON form of the scenario, in hex.
    pub hash: String,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_config(&text, &path.display().to_string())
}

/// Parses and validates a scenario. `origin` only labels error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: origin.to_string(),
        field: e.path().to_string(),
        reason: e.inner().to_string(),
    })?;

    let config = NetworkConfig::new(
        file.tiers.clone(),
        file.user_density,
        file.bandwidth,
        file.path_loss_exponent,
    )?;
    if let Some(sweep) = &file.sweep {
        sweep.validate(config.num_tiers())?;
    }
    file.solve.validate()?;
    if let Some(sim) = &file.simulation {
        sim.radius(&config)?;
    }
    if let Some(alloc) = &file.allocation {
        alloc
            .validate_for(&config)
            .map_err(|e| Error::invalid("allocation", e.to_string()))?;
    }

    let canonical = serde_json::to_vec(&file).expect("scenario serializes");
    let hash = Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok(Scenario {
        config,
        sweep: file.sweep,
        solve: file.solve,
        simulation: file.simulation,
        allocation: file.allocation,
        hash,
    })
}
