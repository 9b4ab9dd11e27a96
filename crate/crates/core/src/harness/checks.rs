//! Self-checks behind `ratecov validate`: analytic identities and oracle
//! comparisons evaluated on a given scenario.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Error;
use crate::kernel::{
    equal_share_threshold, per_tier_coverage_integral, rate_coverage, rho, sir_threshold,
    tier_terms,
};
use crate::network::{AllocationPair, LoadModel, NetworkConfig};
use crate::optimize::{
    brute_force, optimize_equal_fractions, optimize_joint, optimize_spectrum_maxsir, SolveOptions,
};
use crate::sim::{simulate_coverage, SimConfig};
use crate::simplex::sample_uniform;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

/// Random allocations with every share at least `0.2 / K`, away from the
/// simplex boundary where finite differences would leave the domain.
fn interior_points(k: usize, count: usize, seed: u64) -> Vec<AllocationPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        sample_uniform(rng, k)
            .into_iter()
            .map(|x| 0.8 * x + 0.2 / k as f64)
            .collect()
    };
    (0..count)
        .map(|_| {
            let a = draw(&mut rng);
            let w = draw(&mut rng);
            AllocationPair {
                assoc: a,
                spectrum: w,
            }
        })
        .collect()
}

fn kernel_closed_form() -> Check {
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let tau = 10f64.powf(-6.0 + 10.0 * i as f64 / 99.0);
        let exact = tau.sqrt() * tau.sqrt().atan();
        let got = rho(tau, 4.0).unwrap_or(f64::NAN);
        worst = worst.max(((got - exact) / exact).abs());
    }
    check(
        "kernel_closed_form",
        worst < 1e-8,
        format!("max relative error {worst:.2e} against sqrt(t) atan(sqrt(t)) at alpha = 4"),
    )
}

fn gradients(config: &NetworkConfig, points: &[AllocationPair]) -> Vec<Check> {
    let model = LoadModel::MeanLoad;
    let alpha = config.path_loss_exponent();
    let mut worst_fd: f64 = 0.0;
    let mut worst_relation: f64 = 0.0;
    for p in points {
        for k in 0..config.num_tiers() {
            let (a, w) = (p.assoc[k], p.spectrum[k]);
            let t = tier_terms(config, k, a, w, model);
            if t.saturated {
                continue;
            }
            let f = |a: f64, w: f64| tier_terms(config, k, a, w, model).coverage;
            let (ha, hw) = (1e-6 * a, 1e-6 * w);
            let fd_a = (f(a + ha, w) - f(a - ha, w)) / (2.0 * ha);
            let fd_w = (f(a, w + hw) - f(a, w - hw)) / (2.0 * hw);
            for (g, fd) in [(t.grad_assoc, fd_a), (t.grad_spectrum, fd_w)] {
                worst_fd = worst_fd.max((g - fd).abs() / fd.abs().max(f64::MIN_POSITIVE));
            }
            let tau = sir_threshold(config, &p.assoc, &p.spectrum, k, model).value();
            let r = rho(tau, alpha).unwrap_or(f64::NAN);
            let relation = 1.0 / (1.0 + a * r).powi(2) - (w / a) * t.grad_spectrum;
            worst_relation = worst_relation.max((t.grad_assoc - relation).abs());
        }
    }
    vec![
        check(
            "gradient_finite_difference",
            worst_fd < 1e-5,
            format!(
                "max relative error {worst_fd:.2e} at {} points",
                points.len()
            ),
        ),
        check(
            "gradient_relation",
            worst_relation < 1e-12,
            format!("max residual {worst_relation:.2e}"),
        ),
    ]
}

fn coverage_integral(config: &NetworkConfig, points: &[AllocationPair]) -> Check {
    let mut worst: f64 = 0.0;
    for p in points {
        let Ok(report) = rate_coverage(config, p, LoadModel::MeanLoad) else {
            worst = f64::INFINITY;
            continue;
        };
        for k in 0..config.num_tiers() {
            let integral =
                per_tier_coverage_integral(config, p, LoadModel::MeanLoad, k).unwrap_or(f64::NAN);
            worst = worst.max((integral - report.per_tier_terms[k]).abs());
        }
    }
    check(
        "coverage_integral",
        worst < 1e-8,
        format!("max deviation {worst:.2e} from the closed-form tier terms"),
    )
}

fn closed_form_stationarity(config: &NetworkConfig) -> Check {
    let alpha = config.path_loss_exponent();
    match optimize_equal_fractions(config, LoadModel::MeanLoad) {
        Ok(r) if r.degenerate => check(
            "closed_form_stationarity",
            true,
            "skipped: degenerate kernel, shares split by fallback".to_string(),
        ),
        Ok(r) => {
            let vals: Vec<f64> = (0..config.num_tiers())
                .map(|k| {
                    let tau = equal_share_threshold(config, k).value();
                    let rho = rho(tau, alpha).unwrap_or(f64::NAN);
                    1.0 / (1.0 + r.alloc.assoc[k] * rho).powi(2)
                })
                .collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_err = (r.alloc.assoc.iter().sum::<f64>() - 1.0).abs();
            check(
                "closed_form_stationarity",
                hi - lo < 1e-10 && sum_err < 1e-12,
                format!(
                    "stationarity spread {:.2e}, sum error {sum_err:.2e}",
                    hi - lo
                ),
            )
        }
        Err(e) => check("closed_form_stationarity", false, e.to_string()),
    }
}

fn optimizer_ordering(config: &NetworkConfig, opts: &SolveOptions) -> Vec<Check> {
    let model = LoadModel::MeanLoad;
    let joint = match optimize_joint(config, model, opts) {
        Ok(r) => r,
        Err(e) => return vec![check("joint_converged", false, e.to_string())],
    };
    let mut out = vec![check(
        "joint_converged",
        joint.converged,
        format!(
            "objective {:.10}, KKT residual {:.2e}",
            joint.objective(),
            joint.report.kkt.value
        ),
    )];

    let others = [
        (
            "joint_vs_equal_fractions",
            optimize_equal_fractions(config, model),
        ),
        (
            "joint_vs_max_sir",
            optimize_spectrum_maxsir(config, model, opts),
        ),
    ];
    for (name, r) in others {
        out.push(match r {
            Ok(r) => check(
                name,
                joint.objective() >= r.objective() - 1e-9,
                format!("joint {:.10} vs {:.10}", joint.objective(), r.objective()),
            ),
            Err(e) => check(name, false, e.to_string()),
        });
    }

    out.push(match brute_force(config, model, opts.grid_step) {
        Ok(b) => check(
            "joint_vs_brute_force",
            joint.objective() >= b.objective() - 1e-6,
            format!(
                "joint {:.10} vs grid {} optimum {:.10}",
                joint.objective(),
                opts.grid_step,
                b.objective()
            ),
        ),
        Err(Error::GridTooLarge(msg)) => {
            check("joint_vs_brute_force", true, format!("skipped: {msg}"))
        }
        Err(e) => check("joint_vs_brute_force", false, e.to_string()),
    });
    out
}

fn monte_carlo(config: &NetworkConfig, sim: &SimConfig) -> Check {
    let name = "monte_carlo_consistency";
    let alloc = match optimize_equal_fractions(config, LoadModel::MeanLoad) {
        Ok(r) => r.alloc,
        Err(e) => return check(name, false, e.to_string()),
    };
    let analytic = match rate_coverage(config, &alloc, LoadModel::MeanLoad) {
        Ok(r) => r.objective,
        Err(e) => return check(name, false, e.to_string()),
    };
    match simulate_coverage(config, &alloc, sim) {
        Ok(mc) => {
            let gap = (mc.coverage_estimate - analytic).abs();
            let tol = 0.02f64.max(3.0 * mc.std_error);
            check(
                name,
                gap < tol,
                format!(
                    "simulated {:.4} ± {:.4} vs analytic {analytic:.4} over {} drops",
                    mc.coverage_estimate, mc.std_error, mc.drops
                ),
            )
        }
        Err(e) => check(name, false, e.to_string()),
    }
}

/// Runs every check on `config`. The Monte Carlo check uses `sim`, or
/// 5000 drops when none is given.
pub fn run_checks(
    config: &NetworkConfig,
    opts: &SolveOptions,
    sim: Option<&SimConfig>,
) -> Vec<Check> {
    let points = interior_points(config.num_tiers(), 200, opts.seed);
    let mut out = vec![kernel_closed_form()];
    out.extend(gradients(config, &points));
    out.push(coverage_integral(config, &points[..50]));
    out.push(closed_form_stationarity(config));
    out.extend(optimizer_ordering(config, opts));
    let default_sim = SimConfig::new(5000, opts.seed);
    out.push(monte_carlo(config, sim.unwrap_or(&default_sim)));
    out
}
