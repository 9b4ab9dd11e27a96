//! Acceptance criteria. Everything runs inside one test so that the runtime
//! budgets are measured without other tests competing for the CPU. Each
//! criterion prints one PASS/FAIL line; the test fails if any criterion does.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use ratecov::harness::output::write_csv;
use ratecov::harness::{run_sweep, SweepMode, SweepSpec, SweepVariable};
use ratecov::{
    association_probabilities, brute_force, grad_assoc, grad_spectrum, optimize_equal_fractions,
    optimize_joint, optimize_spectrum_maxsir, per_tier_coverage_integral, rate_coverage, rho,
    simulate_coverage, AllocationPair, LoadModel, NetworkConfig, SimConfig, SolveOptions,
    TierParams,
};

const MBPS: f64 = 1e6;
const RATES: [f64; 4] = [0.25 * MBPS, 0.5 * MBPS, 1.0 * MBPS, 2.0 * MBPS];
const USER_DENSITY: f64 = 0.05;
const BANDWIDTH: f64 = 1e7;

fn reference_config(rates: [f64; 3]) -> NetworkConfig {
    let lu = USER_DENSITY;
    NetworkConfig::new(
        vec![
            TierParams::new(46.0, 0.01 * lu, 1.0, rates[0]),
            TierParams::new(30.0, 0.05 * lu, 1.0, rates[1]),
            TierParams::new(20.0, 0.2 * lu, 1.0, rates[2]),
        ],
        lu,
        BANDWIDTH,
        3.5,
    )
    .unwrap()
}

/// Random scenario whose equal-share spectral demand per tier lies in
/// [0.05, 3] bits/s/Hz, so thresholds stay in the range of practical
/// interest.
fn random_config(rng: &mut ChaCha8Rng, k: usize) -> NetworkConfig {
    let lu = USER_DENSITY;
    let tiers = (0..k)
        .map(|_| {
            let density = lu * 10f64.powf(rng.random_range(-2.3..-0.3));
            let demand = 10f64.powf(rng.random_range(-1.3..0.48));
            TierParams::new(
                rng.random_range(20.0..46.0),
                density,
                1.0,
                demand * BANDWIDTH * density / lu,
            )
        })
        .collect();
    NetworkConfig::new(tiers, lu, BANDWIDTH, rng.random_range(2.5..5.0)).unwrap()
}

/// Uniform point on the simplex mixed with the barycenter, so every share is
/// at least `floor / k`.
fn interior(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.iter()
        .map(|x| (1.0 - floor) * x / s + floor / k as f64)
        .collect()
}

/// `τ = 2^(R N / (W w)) - 1` with the mean load `N = A λ_u / λ`.
fn threshold(config: &NetworkConfig, k: usize, a: f64, w: f64) -> f64 {
    let t = config.tier(k);
    let n = a * config.user_density() / t.density;
    (t.rate_threshold * n / (config.bandwidth() * w)).exp2() - 1.0
}

/// Tier term `A / (1 + A ρ(τ, α))` of the coverage.
fn tier_term(config: &NetworkConfig, k: usize, a: f64, w: f64) -> f64 {
    let tau = threshold(config, k, a, w);
    a / (1.0 + a * rho(tau, config.path_loss_exponent()).unwrap())
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(elapsed: Duration, budget: Duration) -> bool {
    elapsed < budget
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let tau = 10f64.powf(-6.0 + 10.0 * i as f64 / 99.0);
        let exact = tau.sqrt() * tau.sqrt().atan();
        let got = rho(tau, 4.0).unwrap();
        worst = worst.max((got - exact).abs() / exact);
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-8 && within(elapsed, Duration::from_secs(1)),
        format!("max relative error {worst:.2e}, {elapsed:.2?}"),
    )
}

struct GradientSample {
    config: NetworkConfig,
    alloc: AllocationPair,
}

fn gradient_samples() -> Vec<GradientSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..1000)
        .map(|_| {
            let k = rng.random_range(2..=4);
            let config = random_config(&mut rng, k);
            let alloc = AllocationPair::new(interior(&mut rng, k, 0.2), interior(&mut rng, k, 0.2))
                .unwrap();
            GradientSample { config, alloc }
        })
        .collect()
}

fn criterion_2(samples: &[GradientSample]) -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for s in samples {
        let ga = grad_assoc(&s.config, &s.alloc, LoadModel::MeanLoad).unwrap();
        let gw = grad_spectrum(&s.config, &s.alloc, LoadModel::MeanLoad).unwrap();
        for k in 0..s.config.num_tiers() {
            let (a, w) = (s.alloc.assoc[k], s.alloc.spectrum[k]);
            let (ha, hw) = (1e-5 * a, 1e-5 * w);
            let fd_a = (tier_term(&s.config, k, a + ha, w) - tier_term(&s.config, k, a - ha, w))
                / (2.0 * ha);
            let fd_w = (tier_term(&s.config, k, a, w + hw) - tier_term(&s.config, k, a, w - hw))
                / (2.0 * hw);
            worst = worst.max((ga[k] - fd_a).abs() / fd_a.abs());
            worst = worst.max((gw[k] - fd_w).abs() / fd_w.abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-5 && within(elapsed, Duration::from_secs(10)),
        format!(
            "max relative error {worst:.2e} at {} points, {elapsed:.2?}",
            samples.len()
        ),
    )
}

fn criterion_3(samples: &[GradientSample]) -> Outcome {
    let mut worst: f64 = 0.0;
    for s in samples {
        let ga = grad_assoc(&s.config, &s.alloc, LoadModel::MeanLoad).unwrap();
        let gw = grad_spectrum(&s.config, &s.alloc, LoadModel::MeanLoad).unwrap();
        let alpha = s.config.path_loss_exponent();
        for k in 0..s.config.num_tiers() {
            let (a, w) = (s.alloc.assoc[k], s.alloc.spectrum[k]);
            let r = rho(threshold(&s.config, k, a, w), alpha).unwrap();
            let relation = 1.0 / (1.0 + a * r).powi(2) - (w / a) * gw[k];
            worst = worst.max((ga[k] - relation).abs());
        }
    }
    outcome(worst < 1e-12, format!("max residual {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..=4);
        let config = random_config(&mut rng, k);
        let alloc =
            AllocationPair::new(interior(&mut rng, k, 0.1), interior(&mut rng, k, 0.1)).unwrap();
        for t in 0..k {
            let integral =
                per_tier_coverage_integral(&config, &alloc, LoadModel::MeanLoad, t).unwrap();
            let closed = tier_term(&config, t, alloc.assoc[t], alloc.spectrum[t]);
            worst = worst.max((integral - closed).abs());
        }
    }
    outcome(
        worst < 1e-8,
        format!("max deviation {worst:.2e} over 100 scenarios"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut configs: Vec<NetworkConfig> = RATES.iter().map(|&r| reference_config([r; 3])).collect();
    configs.extend((0..20).map(|i| random_config(&mut rng, 2 + i % 3)));
    let (mut spread_max, mut sum_max): (f64, f64) = (0.0, 0.0);
    for config in &configs {
        let r = optimize_equal_fractions(config, LoadModel::MeanLoad).unwrap();
        let alpha = config.path_loss_exponent();
        let vals: Vec<f64> = (0..config.num_tiers())
            .map(|k| {
                let t = config.tier(k);
                let tau_bar = (t.rate_threshold * config.user_density()
                    / (config.bandwidth() * t.density))
                    .exp2()
                    - 1.0;
                1.0 / (1.0 + r.alloc.assoc[k] * rho(tau_bar, alpha).unwrap()).powi(2)
            })
            .collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        spread_max = spread_max.max(hi - lo);
        sum_max = sum_max.max((r.alloc.assoc.iter().sum::<f64>() - 1.0).abs());
    }
    outcome(
        spread_max < 1e-10 && sum_max < 1e-12,
        format!(
            "stationarity spread {spread_max:.2e}, sum error {sum_max:.2e} over {} scenarios",
            configs.len()
        ),
    )
}

struct RatePoint {
    rate: f64,
    joint: f64,
    equal: f64,
    max_sir: f64,
    joint_converged: bool,
}

fn solve_rates() -> Vec<RatePoint> {
    let opts = SolveOptions::default();
    RATES
        .iter()
        .map(|&rate| {
            let config = reference_config([rate; 3]);
            let joint = optimize_joint(&config, LoadModel::MeanLoad, &opts).unwrap();
            RatePoint {
                rate,
                joint: joint.objective(),
                equal: optimize_equal_fractions(&config, LoadModel::MeanLoad)
                    .unwrap()
                    .objective(),
                max_sir: optimize_spectrum_maxsir(&config, LoadModel::MeanLoad, &opts)
                    .unwrap()
                    .objective(),
                joint_converged: joint.converged,
            }
        })
        .collect()
}

fn criterion_6(points: &[RatePoint]) -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for p in points {
        let config = reference_config([p.rate; 3]);
        let coarse = brute_force(&config, LoadModel::MeanLoad, 0.01)
            .unwrap()
            .objective();
        let fine = brute_force(&config, LoadModel::MeanLoad, 0.005)
            .unwrap()
            .objective();
        ok &= p.joint_converged && p.joint >= coarse - 1e-6 && p.joint <= fine + 1e-3;
        detail.push(format!(
            "R={} joint {:.6} grid0.01 {:.6} grid0.005 {:.6}",
            p.rate / MBPS,
            p.joint,
            coarse,
            fine
        ));
    }
    let elapsed = start.elapsed();
    outcome(
        ok && within(elapsed, Duration::from_secs(300)),
        format!("{}; {elapsed:.2?}", detail.join("; ")),
    )
}

fn criterion_7(points: &[RatePoint]) -> Outcome {
    let worst = points
        .iter()
        .map(|p| (p.joint - p.equal).abs())
        .fold(0.0, f64::max);
    outcome(worst <= 0.01, format!("max |joint - equal| = {worst:.5}"))
}

fn criterion_8(points: &[RatePoint]) -> Outcome {
    let below = points.iter().all(|p| p.max_sir < p.joint);
    let gap = points
        .iter()
        .map(|p| p.joint - p.max_sir)
        .fold(0.0, f64::max);
    outcome(
        below && gap > 0.02,
        format!("max-SIR below joint everywhere: {below}, largest gap {gap:.4}"),
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, &rate) in RATES.iter().enumerate() {
        let config = reference_config([rate; 3]);
        let alloc = optimize_equal_fractions(&config, LoadModel::MeanLoad)
            .unwrap()
            .alloc;
        let analytic = rate_coverage(&config, &alloc, LoadModel::MeanLoad)
            .unwrap()
            .objective;
        let mc =
            simulate_coverage(&config, &alloc, &SimConfig::new(20_000, 100 + i as u64)).unwrap();
        let gap = (mc.coverage_estimate - analytic).abs();
        ok &= gap < 0.02f64.max(3.0 * mc.std_error);
        detail.push(format!(
            "R={} sim {:.4}±{:.4} vs {:.4}",
            rate / MBPS,
            mc.coverage_estimate,
            mc.std_error,
            analytic
        ));
    }

    let config = reference_config([MBPS; 3]);
    let assoc = association_probabilities(&config);
    let alloc = AllocationPair::new(assoc.clone(), assoc.clone()).unwrap();
    let n = 100_000;
    let mc = simulate_coverage(&config, &alloc, &SimConfig::new(n, 7)).unwrap();
    let mut worst_sigma: f64 = 0.0;
    for (k, &a) in assoc.iter().enumerate() {
        let sigma = (a * (1.0 - a) / n as f64).sqrt();
        worst_sigma = worst_sigma.max((mc.per_tier_assoc_empirical[k] - a).abs() / sigma);
    }
    ok &= worst_sigma < 3.0;
    detail.push(format!(
        "association within {worst_sigma:.2} sigma at {n} drops"
    ));

    let elapsed = start.elapsed();
    outcome(
        ok && within(elapsed, Duration::from_secs(120)),
        format!("{}; {elapsed:.2?}", detail.join("; ")),
    )
}

fn criterion_10() -> Outcome {
    let base = reference_config([0.5 * MBPS; 3]);
    let spec = SweepSpec {
        variable: SweepVariable::OneTier(2),
        values: vec![0.25 * MBPS, 0.5 * MBPS, MBPS, 2.0 * MBPS, 4.0 * MBPS],
        modes: vec![SweepMode::Joint],
    };
    let rows = run_sweep(
        &base,
        &spec,
        &SolveOptions::default(),
        None,
        &"0".repeat(64),
    )
    .unwrap();
    let a2: Vec<f64> = rows.iter().map(|r| r.assoc[1]).collect();
    let w2: Vec<f64> = rows.iter().map(|r| r.spectrum[1]).collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|p| p[1] < p[0]);
    let converged = rows.iter().all(|r| r.converged);
    outcome(
        converged && decreasing(&a2) && decreasing(&w2),
        format!("A_2 {a2:.4?}, w_2 {w2:.4?}"),
    )
}

fn sweep_csv(threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| {
        let config = reference_config([MBPS; 3]);
        let spec = SweepSpec {
            variable: SweepVariable::AllTiers,
            values: RATES.to_vec(),
            modes: vec![
                SweepMode::Joint,
                SweepMode::EqualFractions,
                SweepMode::MaxSirSpectrumOnly,
                SweepMode::JointHigherLoad,
            ],
        };
        let opts = SolveOptions {
            seed: 9,
            ..SolveOptions::default()
        };
        let sim = SimConfig::new(500, 9);
        let rows = run_sweep(&config, &spec, &opts, Some(&sim), &"ab".repeat(32)).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, 3, &mut buf).unwrap();
        buf
    })
}

fn criterion_11() -> Outcome {
    let first = sweep_csv(1);
    let second = sweep_csv(1);
    let parallel = sweep_csv(4);
    outcome(
        !first.is_empty() && first == second && first == parallel,
        format!(
            "{} bytes, repeat identical: {}, 4-thread identical: {}",
            first.len(),
            first == second,
            first == parallel
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let samples = gradient_samples();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "kernel matches closed form at alpha = 4", criterion_1()),
        (
            2,
            "gradients match finite differences",
            criterion_2(&samples),
        ),
        (3, "gradient relation identity", criterion_3(&samples)),
        (
            4,
            "serving-distance integral equals closed form",
            criterion_4(),
        ),
        (5, "closed-form stationarity", criterion_5()),
    ];
    let points = solve_rates();
    results.push((
        6,
        "joint solver against brute-force grids",
        criterion_6(&points),
    ));
    results.push((
        7,
        "equal fractions near joint optimum",
        criterion_7(&points),
    ));
    results.push((
        8,
        "spectrum-only max-SIR is dominated",
        criterion_8(&points),
    ));
    results.push((9, "Monte Carlo consistency", criterion_9()));
    results.push((
        10,
        "raising one tier's rate sheds users and spectrum",
        criterion_10(),
    ));
    results.push((11, "sweep output is byte-identical", criterion_11()));

    for (n, name, o) in &results {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("[{status}] criterion {n:>2}: {name}: {}", o.detail);
    }
    let failed: Vec<u32> = results
        .iter()
        .filter(|(_, _, o)| !o.passed)
        .map(|(n, _, _)| *n)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
