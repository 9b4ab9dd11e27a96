//! Rate coverage of K-tier heterogeneous networks with orthogonal spectrum
//! partitioning across tiers: the analytic objective, its gradients,
//! optimizers for association probabilities and spectrum fractions, and a
//! Poisson point process simulator to check it all.

pub mod error;
pub mod harness;
pub mod kernel;
pub mod network;
pub mod optimize;
pub mod quadrature;
pub mod sim;
pub mod simplex;

pub use error::{Error, Result};
pub use kernel::{
    grad_assoc, grad_spectrum, kkt_residual, per_tier_coverage_integral, rate_coverage, rho,
    rho_dtau, sir_threshold, CoverageReport, KktResidual, SirThreshold,
};
pub use network::{
    association_probabilities, biases_for_association, implied_biases, mean_load, AllocationPair,
    LoadModel, NetworkConfig, TierParams,
};
pub use optimize::{
    brute_force, optimize_equal_fractions, optimize_joint, optimize_spectrum_maxsir, SolveMode,
    SolveOptions, SolveResult,
};
pub use sim::{
    simulate_assoc_distance, simulate_coverage, AssocDistance, SimConfig, SimLoad, SimOutcome,
};
