//! Physical scenario description: tiers, biased association and AP load.
//!
//! Association follows the biased average received power rule. For a user
//! at the origin the probability of attaching to tier `k` is
//!
//! ```text
//! A_k = [ sum_j (λ_j / λ_k) (P_j B_j / P_k B_k)^(2/α) ]^-1
//! ```
//!
//! which only depends on bias ratios, so biases are normalized so that the
//! smallest one equals 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum = 1` for vectors living on the probability simplex.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Correction factor of the higher-load model `1 + 1.28 A λ_u / λ`.
pub const HIGHER_LOAD_FACTOR: f64 = 1.28;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierParams {
    /// Transmit power in dBm.
    pub power_dbm: f64,
    /// APs per unit area.
    pub density: f64,
    /// Linear association bias.
    #[serde(default = "unit_bias")]
    pub bias: f64,
    /// Rate threshold in bits/s.
    pub rate_threshold: f64,
}

fn unit_bias() -> f64 {
    1.0
}

impl TierParams {
    pub fn new(power_dbm: f64, density: f64, bias: f64, rate_threshold: f64) -> Self {
        Self {
            power_dbm,
            density,
            bias,
            rate_threshold,
        }
    }

    /// Transmit power in watts.
    pub fn power_watts(&self) -> f64 {
        dbm_to_watts(self.power_dbm)
    }

    fn validate(&self, index: usize) -> Result<()> {
        let at = |field: &str| format!("tiers[{index}].{field}");
        if !self.power_dbm.is_finite() {
            return Err(Error::invalid(at("power_dbm"), "must be finite"));
        }
        let watts = self.power_watts();
        if !(watts > 0.0 && watts.is_finite()) {
            return Err(Error::invalid(
                at("power_dbm"),
                "linear power must be strictly positive and finite",
            ));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::invalid(at("density"), "must be positive and finite"));
        }
        if !(self.bias > 0.0 && self.bias.is_finite()) {
            return Err(Error::invalid(at("bias"), "must be positive and finite"));
        }
        if !(self.rate_threshold > 0.0 && self.rate_threshold.is_finite()) {
            return Err(Error::invalid(
                at("rate_threshold"),
                "must be positive and finite",
            ));
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// A validated K-tier scenario. Tiers keep the caller's order; use
/// [`NetworkConfig::sorted_by_density`] for the ascending-density view.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkConfig {
    tiers: Vec<TierParams>,
    user_density: f64,
    bandwidth: f64,
    path_loss_exponent: f64,
}

impl NetworkConfig {
    pub fn new(
        tiers: Vec<TierParams>,
        user_density: f64,
        bandwidth: f64,
        path_loss_exponent: f64,
    ) -> Result<Self> {
        if tiers.is_empty() {
            return Err(Error::invalid("tiers", "at least one tier is required"));
        }
        for (i, t) in tiers.iter().enumerate() {
            t.validate(i)?;
        }
        if !(user_density > 0.0 && user_density.is_finite()) {
            return Err(Error::invalid(
                "user_density",
                "must be positive and finite",
            ));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth", "must be positive and finite"));
        }
        if !path_loss_exponent.is_finite() {
            return Err(Error::invalid("path_loss_exponent", "must be finite"));
        }
        if path_loss_exponent <= 2.0 {
            return Err(Error::PathLossExponent(path_loss_exponent));
        }
        Ok(Self {
            tiers,
            user_density,
            bandwidth,
            path_loss_exponent,
        })
    }

    pub fn tiers(&self) -> &[TierParams] {
        &self.tiers
    }

    pub fn tier(&self, k: usize) -> &TierParams {
        &self.tiers[k]
    }

    pub fn num_tiers(&self) -> usize {
        self.tiers.len()
    }

    pub fn user_density(&self) -> f64 {
        self.user_density
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn path_loss_exponent(&self) -> f64 {
        self.path_loss_exponent
    }

    pub fn biases(&self) -> Vec<f64> {
        self.tiers.iter().map(|t| t.bias).collect()
    }

    pub fn rate_thresholds(&self) -> Vec<f64> {
        self.tiers.iter().map(|t| t.rate_threshold).collect()
    }

    pub fn with_biases(&self, biases: &[f64]) -> Result<Self> {
        self.check_len("biases", biases.len())?;
        let tiers = self
            .tiers
            .iter()
            .zip(biases)
            .map(|(t, &bias)| TierParams { bias, ..*t })
            .collect();
        Self::new(
            tiers,
            self.user_density,
            self.bandwidth,
            self.path_loss_exponent,
        )
    }

    /// Same scenario with every bias reset to 1 (max-SIR association).
    pub fn unbiased(&self) -> Self {
        let tiers = self
            .tiers
            .iter()
            .map(|t| TierParams { bias: 1.0, ..*t })
            .collect();
        Self { tiers, ..*self }
    }

    pub fn with_rate_thresholds(&self, rates: &[f64]) -> Result<Self> {
        self.check_len("rate_thresholds", rates.len())?;
        let tiers = self
            .tiers
            .iter()
            .zip(rates)
            .map(|(t, &rate_threshold)| TierParams {
                rate_threshold,
                ..*t
            })
            .collect();
        Self::new(
            tiers,
            self.user_density,
            self.bandwidth,
            self.path_loss_exponent,
        )
    }

    /// Tier indices ordered by ascending density (stable for ties).
    pub fn density_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.tiers.len()).collect();
        order.sort_by(|&a, &b| self.tiers[a].density.total_cmp(&self.tiers[b].density));
        order
    }

    /// Returns the scenario with tiers sorted so that `λ_1 <= ... <= λ_K`,
    /// together with the map `sorted index -> caller index`.
    pub fn sorted_by_density(&self) -> (NetworkConfig, Vec<usize>) {
        let order = self.density_order();
        let tiers = order.iter().map(|&i| self.tiers[i]).collect();
        (Self { tiers, ..*self }, order)
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.tiers.len() {
            return Err(Error::invalid(
                what,
                format!("expected {} entries, got {len}", self.tiers.len()),
            ));
        }
        Ok(())
    }
}

/// Reorders a per-tier vector computed on a sorted scenario back to the
/// caller's tier order, given the map returned by `sorted_by_density`.
pub fn unsort<T: Clone>(sorted: &[T], order: &[usize]) -> Vec<T> {
    let mut out = sorted.to_vec();
    for (s, &orig) in order.iter().enumerate() {
        out[orig] = sorted[s].clone();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadModel {
    /// `N_k = A_k λ_u / λ_k`.
    #[default]
    MeanLoad,
    /// `N_k = 1 + 1.28 A_k λ_u / λ_k`, counting the reference user.
    HigherLoad,
}

impl LoadModel {
    /// Users per AP in tier `k` when a fraction `assoc` of users attach to it.
    pub fn load(self, config: &NetworkConfig, k: usize, assoc: f64) -> f64 {
        let base = assoc * config.user_density / config.tiers[k].density;
        match self {
            LoadModel::MeanLoad => base,
            LoadModel::HigherLoad => 1.0 + HIGHER_LOAD_FACTOR * base,
        }
    }

    /// `dN_k / dA_k`.
    pub fn load_slope(self, config: &NetworkConfig, k: usize) -> f64 {
        let base = config.user_density / config.tiers[k].density;
        match self {
            LoadModel::MeanLoad => base,
            LoadModel::HigherLoad => HIGHER_LOAD_FACTOR * base,
        }
    }
}

/// Association probabilities and spectrum fractions, both on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationPair {
    pub assoc: Vec<f64>,
    pub spectrum: Vec<f64>,
}

impl AllocationPair {
    pub fn new(assoc: Vec<f64>, spectrum: Vec<f64>) -> Result<Self> {
        let pair = Self { assoc, spectrum };
        pair.validate()?;
        Ok(pair)
    }

    /// Both vectors set to the same fractions.
    pub fn equal(fractions: Vec<f64>) -> Result<Self> {
        Self::new(fractions.clone(), fractions)
    }

    pub fn uniform(k: usize) -> Self {
        let v = vec![1.0 / k as f64; k];
        Self {
            assoc: v.clone(),
            spectrum: v,
        }
    }

    pub fn num_tiers(&self) -> usize {
        self.assoc.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.assoc.len() != self.spectrum.len() {
            return Err(Error::Allocation(format!(
                "assoc has {} entries but spectrum has {}",
                self.assoc.len(),
                self.spectrum.len()
            )));
        }
        check_simplex("assoc", &self.assoc)?;
        check_simplex("spectrum", &self.spectrum)
    }

    pub(crate) fn validate_for(&self, config: &NetworkConfig) -> Result<()> {
        self.validate()?;
        if self.assoc.len() != config.num_tiers() {
            return Err(Error::Allocation(format!(
                "allocation has {} tiers, scenario has {}",
                self.assoc.len(),
                config.num_tiers()
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_simplex(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Allocation(format!("{name} is empty")));
    }
    let tol = SIMPLEX_TOL * v.len().max(4) as f64;
    if let Some(i) = v.iter().position(|x| !(0.0..=1.0 + tol).contains(x)) {
        return Err(Error::Allocation(format!(
            "{name}[{i}] = {} is outside [0, 1]",
            v[i]
        )));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::Allocation(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Probability that a typical user attaches to each tier under biased
/// average-power association.
pub fn association_probabilities(config: &NetworkConfig) -> Vec<f64> {
    let exp = 2.0 / config.path_loss_exponent;
    // log of λ_j (P_j B_j)^(2/α); shifted by the max before exponentiating
    let logs: Vec<f64> = config
        .tiers
        .iter()
        .map(|t| t.density.ln() + exp * (t.power_watts().ln() + t.bias.ln()))
        .collect();
    normalize_log_weights(&logs)
}

/// Biases that make [`association_probabilities`] return `target`, scaled
/// so that the smallest bias is 1.
pub fn biases_for_association(config: &NetworkConfig, target: &[f64]) -> Result<Vec<f64>> {
    if target.len() != config.num_tiers() {
        return Err(Error::Allocation(format!(
            "target has {} entries, scenario has {} tiers",
            target.len(),
            config.num_tiers()
        )));
    }
    if let Some(tier) = target.iter().position(|&a| a == 0.0) {
        return Err(Error::ZeroTarget { tier });
    }
    check_simplex("target", target)?;
    Ok(implied_biases(config, target))
}

/// Like [`biases_for_association`], but a tier with zero association gets
/// bias 0 (the limit `B_k -> 0`) and the smallest positive bias is 1.
/// `assoc` must already have one entry per tier.
pub fn implied_biases(config: &NetworkConfig, assoc: &[f64]) -> Vec<f64> {
    let half_alpha = config.path_loss_exponent / 2.0;
    let logs: Vec<Option<f64>> = config
        .tiers
        .iter()
        .zip(assoc)
        .map(|(t, &a)| {
            (a > 0.0).then(|| half_alpha * (a.ln() - t.density.ln()) - t.power_watts().ln())
        })
        .collect();
    let min = logs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    logs.iter()
        .map(|l| l.map_or(0.0, |l| (l - min).exp()))
        .collect()
}

/// Users per AP for each tier.
pub fn mean_load(config: &NetworkConfig, assoc: &[f64], model: LoadModel) -> Vec<f64> {
    assoc
        .iter()
        .enumerate()
        .map(|(k, &a)| model.load(config, k, a))
        .collect()
}

fn normalize_log_weights(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn three_tier() -> NetworkConfig {
        let lu = 0.05;
        NetworkConfig::new(
            vec![
                TierParams::new(46.0, 0.01 * lu, 1.0, 1e6),
                TierParams::new(30.0, 0.05 * lu, 1.0, 1e6),
                TierParams::new(20.0, 0.2 * lu, 1.0, 1e6),
            ],
            lu,
            1e7,
            3.5,
        )
        .unwrap()
    }

    #[test]
    fn single_tier_gets_everyone() {
        let cfg =
            NetworkConfig::new(vec![TierParams::new(30.0, 0.3, 2.0, 1e5)], 0.1, 1e6, 4.0).unwrap();
        assert_eq!(association_probabilities(&cfg), vec![1.0]);
    }

    #[test]
    fn identical_tiers_split_evenly() {
        let t = TierParams::new(30.0, 0.01, 1.0, 1e6);
        let cfg = NetworkConfig::new(vec![t; 3], 0.05, 1e7, 3.5).unwrap();
        for a in association_probabilities(&cfg) {
            assert_relative_eq!(a, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn matches_ratio_formula() {
        let cfg = three_tier();
        let a = association_probabilities(&cfg);
        let alpha = cfg.path_loss_exponent();
        for k in 0..3 {
            let tk = cfg.tier(k);
            let inv: f64 = cfg
                .tiers()
                .iter()
                .map(|tj| {
                    (tj.density / tk.density)
                        * ((tj.power_watts() * tj.bias) / (tk.power_watts() * tk.bias))
                            .powf(2.0 / alpha)
                })
                .sum();
            assert_relative_eq!(a[k], 1.0 / inv, max_relative = 1e-13);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dbm_conversion() {
        assert_relative_eq!(dbm_to_watts(30.0), 1.0);
        assert_relative_eq!(dbm_to_watts(46.0), 39.810717055349734, max_relative = 1e-14);
    }

    #[test]
    fn unbiased_target_inverts_to_unit_biases() {
        let cfg = three_tier();
        let a = association_probabilities(&cfg);
        for b in biases_for_association(&cfg, &a).unwrap() {
            assert_relative_eq!(b, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn two_identical_tiers_bias_ratio() {
        let t = TierParams::new(30.0, 0.01, 1.0, 1e6);
        let alpha = 3.5;
        let cfg = NetworkConfig::new(vec![t; 2], 0.05, 1e7, alpha).unwrap();
        let b = biases_for_association(&cfg, &[0.75, 0.25]).unwrap();
        assert_relative_eq!(b[0] / b[1], 3f64.powf(alpha / 2.0), max_relative = 1e-12);
        assert_eq!(b[1], 1.0);
        let back = association_probabilities(&cfg.with_biases(&b).unwrap());
        assert_relative_eq!(back[0], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn zero_target_rejected() {
        let cfg = three_tier();
        assert_eq!(
            biases_for_association(&cfg, &[0.5, 0.5, 0.0]),
            Err(Error::ZeroTarget { tier: 2 })
        );
    }

    #[test]
    fn load_models() {
        let cfg = NetworkConfig::new(
            vec![TierParams::new(20.0, 0.0025, 1.0, 1e6)],
            0.05,
            1e7,
            3.5,
        )
        .unwrap();
        assert_relative_eq!(
            mean_load(&cfg, &[0.4], LoadModel::MeanLoad)[0],
            8.0,
            epsilon = 1e-12
        );
        assert_eq!(mean_load(&cfg, &[0.0], LoadModel::MeanLoad)[0], 0.0);
        assert_eq!(mean_load(&cfg, &[0.0], LoadModel::HigherLoad)[0], 1.0);
        assert_relative_eq!(
            mean_load(&cfg, &[0.4], LoadModel::HigherLoad)[0],
            1.0 + 1.28 * 8.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rejects_bad_scenarios() {
        let t = TierParams::new(30.0, 0.01, 1.0, 1e6);
        assert_eq!(
            NetworkConfig::new(vec![t], 0.05, 1e7, 2.0),
            Err(Error::PathLossExponent(2.0))
        );
        let bad = TierParams { density: -1.0, ..t };
        match NetworkConfig::new(vec![t, bad], 0.05, 1e7, 3.5) {
            Err(Error::Invalid { path, .. }) => assert_eq!(path, "tiers[1].density"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(NetworkConfig::new(vec![], 0.05, 1e7, 3.5).is_err());
    }

    #[test]
    fn sorting_round_trips() {
        let lu = 0.05;
        let cfg = NetworkConfig::new(
            vec![
                TierParams::new(20.0, 0.2 * lu, 1.0, 1e6),
                TierParams::new(46.0, 0.01 * lu, 1.0, 1e6),
                TierParams::new(30.0, 0.05 * lu, 1.0, 1e6),
            ],
            lu,
            1e7,
            3.5,
        )
        .unwrap();
        let (sorted, order) = cfg.sorted_by_density();
        assert_eq!(order, vec![1, 2, 0]);
        assert!(sorted
            .tiers()
            .windows(2)
            .all(|w| w[0].density <= w[1].density));
        let a_sorted = association_probabilities(&sorted);
        let a = association_probabilities(&cfg);
        let back = unsort(&a_sorted, &order);
        for (x, y) in back.iter().zip(&a) {
            assert_relative_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn allocation_validation() {
        assert!(AllocationPair::new(vec![0.5, 0.5], vec![0.2, 0.8]).is_ok());
        assert!(AllocationPair::new(vec![0.5, 0.6], vec![0.2, 0.8]).is_err());
        assert!(AllocationPair::new(vec![1.0], vec![0.5, 0.5]).is_err());
        assert!(AllocationPair::new(vec![1.5, -0.5], vec![0.5, 0.5]).is_err());
    }
}
