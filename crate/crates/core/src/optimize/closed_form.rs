use crate::error::{Error, Result};
use crate::kernel::{equal_share_threshold, rho_unchecked, SirThreshold};
use crate::network::{AllocationPair, LoadModel, NetworkConfig};

use super::{SolveMode, SolveResult};

/// Shares `A_k = w_k ∝ 1 / ρ(τ̄_k, α)`, the maximizer of the coverage when
/// each tier's spectrum share equals its user share. Returns the shares and
/// whether a degenerate kernel forced a fallback.
pub(crate) fn equal_fraction_shares(config: &NetworkConfig) -> (Vec<f64>, bool) {
    let alpha = config.path_loss_exponent();
    let kernels: Vec<f64> = (0..config.num_tiers())
        .map(|k| match equal_share_threshold(config, k) {
            SirThreshold::Finite(t) => rho_unchecked(t, alpha),
            SirThreshold::Saturated { .. } => f64::INFINITY,
        })
        .collect();

    // a zero kernel (nothing to cover) takes every user; split among ties
    let zero: Vec<usize> = (0..kernels.len()).filter(|&k| kernels[k] == 0.0).collect();
    if !zero.is_empty() {
        let mut shares = vec![0.0; kernels.len()];
        for &k in &zero {
            shares[k] = 1.0 / zero.len() as f64;
        }
        return (shares, true);
    }

    let inverse: Vec<f64> = kernels.iter().map(|r| 1.0 / r).collect();
    let total: f64 = inverse.iter().sum();
    if total == 0.0 || !total.is_finite() {
        // every tier saturated: no allocation covers anyone
        let k = kernels.len();
        return (vec![1.0 / k as f64; k], true);
    }
    let degenerate = inverse.contains(&0.0);
    (inverse.iter().map(|v| v / total).collect(), degenerate)
}

/// Closed-form optimum of the reduced problem with `A_k = w_k`. Only valid
/// under the mean-load model, where the share cancels out of `τ_k`.
pub fn optimize_equal_fractions(config: &NetworkConfig, model: LoadModel) -> Result<SolveResult> {
    if model != LoadModel::MeanLoad {
        return Err(Error::ClosedFormNeedsMeanLoad);
    }
    let (shares, degenerate) = equal_fraction_shares(config);
    let alloc = AllocationPair::equal(shares)?;
    let mut result = SolveResult::finish(config, model, alloc, SolveMode::EqualFractions)?;
    result.degenerate = degenerate;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::rho;
    use crate::network::TierParams;
    use crate::optimize::test_support::{symmetric, three_tier};
    use approx::assert_relative_eq;

    #[test]
    fn equal_kernels_split_evenly() {
        let r = optimize_equal_fractions(&symmetric(2, 1e6), LoadModel::MeanLoad).unwrap();
        assert_eq!(r.alloc.assoc, vec![0.5, 0.5]);
        assert_eq!(r.alloc.assoc, r.alloc.spectrum);
    }

    #[test]
    fn shares_inversely_proportional_to_kernel() {
        let alpha = 4.0;
        // with α = 4, ρ(τ) = √τ atan(√τ); pick τ̄_1 so that ρ(τ̄_1) = 2 ρ(τ̄_2)
        let lu = 0.05;
        let w = 1e7;
        let density = 0.01;
        let tau2: f64 = 1.0;
        let target = 2.0 * rho(tau2, alpha).unwrap();
        // bisection on τ for ρ(τ, 4) = target
        let (mut lo, mut hi) = (tau2, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid.sqrt() * mid.sqrt().atan() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tau1 = 0.5 * (lo + hi);
        let rate = |tau: f64| (1.0 + tau).log2() * w * density / lu;
        let cfg = NetworkConfig::new(
            vec![
                TierParams::new(30.0, density, 1.0, rate(tau1)),
                TierParams::new(30.0, density, 1.0, rate(tau2)),
            ],
            lu,
            w,
            alpha,
        )
        .unwrap();
        let r = optimize_equal_fractions(&cfg, LoadModel::MeanLoad).unwrap();
        assert_relative_eq!(r.alloc.assoc[0], 1.0 / 3.0, epsilon = 1e-10);
        assert_relative_eq!(r.alloc.assoc[1], 2.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn stationarity_of_closed_form() {
        let cfg = three_tier(1e6);
        let r = optimize_equal_fractions(&cfg, LoadModel::MeanLoad).unwrap();
        let alpha = cfg.path_loss_exponent();
        let vals: Vec<f64> = (0..3)
            .map(|k| {
                let tau = equal_share_threshold(&cfg, k).value();
                let rho = rho(tau, alpha).unwrap();
                1.0 / (1.0 + r.alloc.assoc[k] * rho).powi(2)
            })
            .collect();
        for v in &vals {
            assert!((v - vals[0]).abs() < 1e-10);
        }
        assert!((r.alloc.assoc.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(!r.degenerate);
    }

    #[test]
    fn rejects_higher_load() {
        assert_eq!(
            optimize_equal_fractions(&three_tier(1e6), LoadModel::HigherLoad).unwrap_err(),
            Error::ClosedFormNeedsMeanLoad
        );
    }

    #[test]
    fn saturated_tier_gets_nothing() {
        // tier 0 would need 1e9 * 0.05 / (1e7 * 1e-4) = 5e4 bits/s/Hz
        let cfg = NetworkConfig::new(
            vec![
                TierParams::new(46.0, 1e-4, 1.0, 1e9),
                TierParams::new(30.0, 0.01, 1.0, 1e6),
            ],
            0.05,
            1e7,
            3.5,
        )
        .unwrap();
        let r = optimize_equal_fractions(&cfg, LoadModel::MeanLoad).unwrap();
        assert_eq!(r.alloc.assoc, vec![0.0, 1.0]);
        assert!(r.degenerate);
    }
}
