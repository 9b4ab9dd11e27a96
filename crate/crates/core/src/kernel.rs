//! Coverage kernel: the interference integral `ρ(τ, α)`, per-tier SIR
//! thresholds, the rate-coverage objective and its analytic gradients.
//!
//! A user attached to tier `k` with SIR threshold `τ_k` contributes
//! `f_k = A_k / (1 + A_k ρ(τ_k, α))` to the overall rate coverage, where
//! `τ_k = 2^(R_k N_k / (W w_k)) - 1`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{AllocationPair, LoadModel, NetworkConfig};
use crate::quadrature::{integrate, integrate_to_infinity};

/// Largest per-user spectral demand `R_k N_k / (W w_k)` (bits/s/Hz) that is
/// evaluated; above it the tier's coverage term is treated as zero.
pub const EXP_CAP: f64 = 1000.0;

/// Split point between quadrature and the convergent tail series.
const SERIES_START: f64 = 2.0;

const MEMO_LIMIT: usize = 1 << 16;

thread_local! {
    static RHO_MEMO: RefCell<HashMap<(u64, u64), f64>> = RefCell::new(HashMap::new());
}

/// `∫_a^∞ du / (1 + u^β)` for `a >= SERIES_START` via the alternating
/// expansion `1/(1+u^β) = Σ (-1)^n u^(-β(n+1))`, integrated term by term.
fn tail_series(a: f64, beta: f64) -> f64 {
    let ratio = a.powf(-beta);
    let mut power = a.powf(1.0 - beta);
    let mut sum = 0.0;
    let mut sign = 1.0;
    for n in 1..400 {
        let term = power / (beta * n as f64 - 1.0);
        sum += sign * term;
        if term <= 1e-17 * sum.abs() {
            break;
        }
        power *= ratio;
        sign = -sign;
    }
    sum
}

/// `∫_a^∞ du / (1 + u^β)` for `a >= 0`, `β > 1`.
fn interference_integral(a: f64, beta: f64) -> f64 {
    if a >= SERIES_START {
        return tail_series(a, beta);
    }
    let body = integrate(
        |u: f64| 1.0 / (1.0 + u.powf(beta)),
        a,
        SERIES_START,
        1e-300,
        1e-14,
    );
    body.value + tail_series(SERIES_START, beta)
}

fn rho_uncached(tau: f64, alpha: f64) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    if tau.is_infinite() {
        return f64::INFINITY;
    }
    let e = 2.0 / alpha;
    let lower = tau.powf(-e);
    tau.powf(e) * interference_integral(lower, alpha / 2.0)
}

/// Memoized `ρ`, keyed by the exact bit patterns of the arguments. The memo
/// is thread-local so concurrent solves never contend or observe partial
/// entries.
pub(crate) fn rho_unchecked(tau: f64, alpha: f64) -> f64 {
    let key = (tau.to_bits(), alpha.to_bits());
    if let Some(v) = RHO_MEMO.with(|m| m.borrow().get(&key).copied()) {
        return v;
    }
    let v = rho_uncached(tau, alpha);
    RHO_MEMO.with(|m| {
        let mut m = m.borrow_mut();
        if m.len() >= MEMO_LIMIT {
            m.clear();
        }
        m.insert(key, v);
    });
    v
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 2.0 {
        Ok(())
    } else {
        Err(Error::PathLossExponent(alpha))
    }
}

/// `ρ(τ, α) = τ^(2/α) ∫_{τ^(-2/α)}^∞ du / (1 + u^(α/2))`.
pub fn rho(tau: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(tau >= 0.0) {
        return Err(Error::invalid(
            "tau",
            format!("must be nonnegative, got {tau}"),
        ));
    }
    Ok(rho_unchecked(tau, alpha))
}

/// `∂ρ/∂τ = (2 / (α τ)) [ρ(τ, α) + τ / (1 + τ)]`, defined for `τ > 0`.
pub fn rho_dtau(tau: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(
            "tau",
            format!("must be positive and finite, got {tau}"),
        ));
    }
    let r = rho_unchecked(tau, alpha);
    Ok(2.0 / (alpha * tau) * (r + tau / (1.0 + tau)))
}

/// SIR threshold implied by a tier's rate target, load and spectrum share.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SirThreshold {
    Finite(f64),
    /// Spectral demand exceeds [`EXP_CAP`] (or the tier has no spectrum):
    /// the tier is treated as never covered.
    Saturated {
        exponent: f64,
    },
}

impl SirThreshold {
    pub fn value(self) -> f64 {
        match self {
            SirThreshold::Finite(t) => t,
            SirThreshold::Saturated { .. } => f64::INFINITY,
        }
    }
}

/// Per-user spectral demand `R_k N_k / (W w_k)` in bits/s/Hz.
pub(crate) fn demand(config: &NetworkConfig, k: usize, load: f64, w: f64) -> f64 {
    if load == 0.0 {
        return 0.0;
    }
    if w == 0.0 {
        return f64::INFINITY;
    }
    config.tier(k).rate_threshold * load / (config.bandwidth() * w)
}

pub(crate) fn threshold_from_demand(x: f64) -> SirThreshold {
    if x > EXP_CAP {
        SirThreshold::Saturated { exponent: x }
    } else {
        SirThreshold::Finite((x * LN_2).exp_m1())
    }
}

/// `τ_k = 2^(R_k N_k / (W w_k)) - 1`.
pub fn sir_threshold(
    config: &NetworkConfig,
    assoc: &[f64],
    spectrum: &[f64],
    k: usize,
    model: LoadModel,
) -> SirThreshold {
    let load = model.load(config, k, assoc[k]);
    threshold_from_demand(demand(config, k, load, spectrum[k]))
}

/// Threshold when spectrum and association shares are equal under the
/// mean-load model: `2^(R_k λ_u / (W λ_k)) - 1`, independent of the share.
pub fn equal_share_threshold(config: &NetworkConfig, k: usize) -> SirThreshold {
    let t = config.tier(k);
    threshold_from_demand(
        t.rate_threshold * config.user_density() / (config.bandwidth() * t.density),
    )
}

/// Everything the objective and the solvers need for one tier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierTerms {
    pub tau: f64,
    pub rho: f64,
    /// `f_k`.
    pub coverage: f64,
    /// `∂f_k/∂w_k`.
    pub grad_spectrum: f64,
    /// `∂f_k/∂A_k`, written out directly.
    pub grad_assoc: f64,
    /// `∂f_k/∂A_k` obtained from `∂f_k/∂w_k` through the gradient relation.
    pub grad_assoc_relation: f64,
    pub saturated: bool,
}

/// Evaluates `f_k` and both partial derivatives at `(A_k, w_k) = (a, w)`.
pub fn tier_terms(config: &NetworkConfig, k: usize, a: f64, w: f64, model: LoadModel) -> TierTerms {
    let alpha = config.path_loss_exponent();
    let load = model.load(config, k, a);
    let x = demand(config, k, load, w);
    let threshold = threshold_from_demand(x);

    if a == 0.0 {
        // empty tier: f = 0, ∂f/∂A = 1/(1+0·ρ)^2, no use for spectrum
        return TierTerms {
            tau: threshold.value(),
            rho: match threshold {
                SirThreshold::Finite(t) => rho_unchecked(t, alpha),
                SirThreshold::Saturated { .. } => f64::INFINITY,
            },
            coverage: 0.0,
            grad_spectrum: 0.0,
            grad_assoc: 1.0,
            grad_assoc_relation: 1.0,
            saturated: matches!(threshold, SirThreshold::Saturated { .. }),
        };
    }

    let (tau, x_eval, w_eval, saturated) = match threshold {
        SirThreshold::Finite(t) => (t, x, w, false),
        SirThreshold::Saturated { .. } => {
            // gradients are evaluated where the demand hits the cap
            let w_cap = config.tier(k).rate_threshold * load / (config.bandwidth() * EXP_CAP);
            ((EXP_CAP * LN_2).exp_m1(), EXP_CAP, w_cap, true)
        }
    };

    let rho = rho_unchecked(tau, alpha);
    let s = 1.0 / (1.0 + a * rho);
    let f = a * s;
    let coverage = if saturated { 0.0 } else { f };

    if tau == 0.0 {
        return TierTerms {
            tau,
            rho,
            coverage,
            grad_spectrum: 0.0,
            grad_assoc: s * s,
            grad_assoc_relation: s * s,
            saturated,
        };
    }

    // ((1+τ)ρ + τ)/τ, arranged to stay finite for τ near 2^1000
    let bracket = rho * (1.0 + 1.0 / tau) + 1.0;
    let c = 2.0 * LN_2 / alpha;
    let grad_spectrum = c * (x_eval / w_eval) * f * (f * bracket);

    let slope = model.load_slope(config, k);
    let t = config.tier(k);
    let d_assoc = c * bracket * t.rate_threshold * slope / (config.bandwidth() * w_eval);
    let grad_assoc = s * s - f * (f * d_assoc);
    let grad_assoc_relation = s * s - (w_eval * slope / load) * grad_spectrum;

    TierTerms {
        tau,
        rho,
        coverage,
        grad_spectrum,
        grad_assoc,
        grad_assoc_relation,
        saturated,
    }
}

/// Stationarity residual of the coverage objective on the two simplices.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResidual {
    pub value: f64,
    /// Some tier sits on the boundary (`A_k = 0` or `w_k = 0`); only the
    /// remaining tiers enter `value`.
    pub boundary: bool,
    pub active_tiers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub objective: f64,
    pub per_tier_terms: Vec<f64>,
    pub grad_assoc: Vec<f64>,
    pub grad_spectrum: Vec<f64>,
    pub sir_thresholds: Vec<f64>,
    pub kkt: KktResidual,
}

fn all_terms(config: &NetworkConfig, alloc: &AllocationPair, model: LoadModel) -> Vec<TierTerms> {
    (0..config.num_tiers())
        .map(|k| tier_terms(config, k, alloc.assoc[k], alloc.spectrum[k], model))
        .collect()
}

/// Rate coverage `Σ_k A_k / (1 + A_k ρ(τ_k, α))` with gradients and the KKT
/// residual at `alloc`.
pub fn rate_coverage(
    config: &NetworkConfig,
    alloc: &AllocationPair,
    model: LoadModel,
) -> Result<CoverageReport> {
    alloc.validate_for(config)?;
    let terms = all_terms(config, alloc, model);
    let per_tier_terms: Vec<f64> = terms.iter().map(|t| t.coverage).collect();
    let grad_assoc: Vec<f64> = terms.iter().map(|t| t.grad_assoc).collect();
    let grad_spectrum: Vec<f64> = terms.iter().map(|t| t.grad_spectrum).collect();
    let kkt = kkt_from_gradients(&alloc.assoc, &alloc.spectrum, &grad_assoc, &grad_spectrum);
    Ok(CoverageReport {
        objective: per_tier_terms.iter().sum(),
        per_tier_terms,
        grad_assoc,
        grad_spectrum,
        sir_thresholds: terms.iter().map(|t| t.tau).collect(),
        kkt,
    })
}

/// Objective value only.
pub(crate) fn objective(
    config: &NetworkConfig,
    assoc: &[f64],
    spectrum: &[f64],
    model: LoadModel,
) -> f64 {
    (0..config.num_tiers())
        .map(|k| tier_terms(config, k, assoc[k], spectrum[k], model).coverage)
        .sum()
}

pub fn grad_spectrum(
    config: &NetworkConfig,
    alloc: &AllocationPair,
    model: LoadModel,
) -> Result<Vec<f64>> {
    alloc.validate_for(config)?;
    Ok(all_terms(config, alloc, model)
        .iter()
        .map(|t| t.grad_spectrum)
        .collect())
}

pub fn grad_assoc(
    config: &NetworkConfig,
    alloc: &AllocationPair,
    model: LoadModel,
) -> Result<Vec<f64>> {
    alloc.validate_for(config)?;
    Ok(all_terms(config, alloc, model)
        .iter()
        .map(|t| t.grad_assoc)
        .collect())
}

pub(crate) fn kkt_from_gradients(
    assoc: &[f64],
    spectrum: &[f64],
    grad_assoc: &[f64],
    grad_spectrum: &[f64],
) -> KktResidual {
    let active: Vec<usize> = (0..assoc.len())
        .filter(|&k| assoc[k] > 0.0 && spectrum[k] > 0.0)
        .collect();
    let boundary = active.len() < assoc.len();
    if active.len() <= 1 {
        return KktResidual {
            value: 0.0,
            boundary,
            active_tiers: active.len(),
        };
    }
    let n = active.len() as f64;
    let eta = active.iter().map(|&k| grad_assoc[k]).sum::<f64>() / n;
    let mu = active.iter().map(|&k| grad_spectrum[k]).sum::<f64>() / n;
    let value = active
        .iter()
        .map(|&k| (grad_assoc[k] - eta).abs() + (grad_spectrum[k] - mu).abs())
        .fold(0.0, f64::max);
    KktResidual {
        value,
        boundary,
        active_tiers: active.len(),
    }
}

/// `max_k |∂f_k/∂A_k − η| + |∂f_k/∂w_k − μ|` with `η`, `μ` the mean
/// gradients over tiers that are off the boundary.
pub fn kkt_residual(
    config: &NetworkConfig,
    alloc: &AllocationPair,
    model: LoadModel,
) -> Result<KktResidual> {
    Ok(rate_coverage(config, alloc, model)?.kkt)
}

/// Probability that the typical user attaches to tier `k` and meets its rate
/// target, evaluated by integrating over the serving distance
///
/// ```text
/// ∫_0^∞ 2πλ_k r exp(-πλ_k r² [ρ(τ_k, α) + Σ_j (λ_j/λ_k)(P_j B_j / P_k B_k)^(2/α)]) dr
/// ```
///
/// with the biases `B_j` that realize `alloc.assoc`. Tiers with zero
/// association correspond to `B_j → 0` and drop out of the sum.
pub fn per_tier_coverage_integral(
    config: &NetworkConfig,
    alloc: &AllocationPair,
    model: LoadModel,
    k: usize,
) -> Result<f64> {
    alloc.validate_for(config)?;
    if k >= config.num_tiers() {
        return Err(Error::invalid("tier", format!("index {k} out of range")));
    }
    if alloc.assoc[k] == 0.0 {
        return Ok(0.0);
    }
    let alpha = config.path_loss_exponent();
    let tau = match sir_threshold(config, &alloc.assoc, &alloc.spectrum, k, model) {
        SirThreshold::Finite(t) => t,
        SirThreshold::Saturated { .. } => return Ok(0.0),
    };
    let rho = rho_unchecked(tau, alpha);

    // log(P_j B_j) for biases B_j ∝ (A_j/λ_j)^(α/2) / P_j
    let log_pb = |j: usize| 0.5 * alpha * (alloc.assoc[j].ln() - config.tier(j).density.ln());
    let lk = config.tier(k).density;
    let association_sum: f64 = (0..config.num_tiers())
        .filter(|&j| alloc.assoc[j] > 0.0)
        .map(|j| (config.tier(j).density / lk) * ((2.0 / alpha) * (log_pb(j) - log_pb(k))).exp())
        .sum();

    let spread = PI * lk * (rho + association_sum);
    let integrand = |r: f64| 2.0 * PI * lk * r * (-spread * r * r).exp();
    let q = integrate_to_infinity(integrand, 0.0, 1.0 / spread.sqrt(), 1e-300, 1e-13);
    Ok(q.value)
}
