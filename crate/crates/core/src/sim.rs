//! Monte Carlo estimate of rate coverage on Poisson point process drops.
//!
//! Each drop places a reference user at the origin and samples every tier's
//! APs as a homogeneous PPP in a disk. The user attaches to the AP with the
//! largest biased average received power, and its link sees Rayleigh fading
//! and interference from the other APs of the serving tier only.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{demand, sir_threshold, threshold_from_demand, SirThreshold};
use crate::network::{association_probabilities, AllocationPair, LoadModel, NetworkConfig};

/// How the serving AP's load enters the rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimLoad {
    /// `N_k = A_k λ_u / λ_k`, as in the analytic model.
    #[default]
    AnalyticAverage,
    /// Users of an independent user PPP that fall in the serving AP's cell,
    /// plus the reference user.
    ActualCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Radius of the simulation disk. `None` picks `10 / sqrt(π λ_min)`.
    pub window_radius: Option<f64>,
    pub num_drops: usize,
    pub seed: u64,
    pub load_mode: SimLoad,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            window_radius: None,
            num_drops: 20_000,
            seed: 0,
            load_mode: SimLoad::AnalyticAverage,
        }
    }
}

impl SimConfig {
    pub fn new(num_drops: usize, seed: u64) -> Self {
        Self {
            num_drops,
            seed,
            ..Self::default()
        }
    }

    pub fn default_radius(config: &NetworkConfig) -> f64 {
        10.0 / (PI * min_density(config)).sqrt()
    }

    /// Window radius after applying the default, checked against the
    /// sparsest tier: its mean nearest-AP distance `1 / (2 sqrt(λ_min))`
    /// must stay below a fifth of the radius.
    pub fn radius(&self, config: &NetworkConfig) -> Result<f64> {
        if self.num_drops == 0 {
            return Err(Error::invalid("simulation.num_drops", "must be positive"));
        }
        let radius = self
            .window_radius
            .unwrap_or_else(|| Self::default_radius(config));
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(
                "simulation.window_radius",
                "must be positive and finite",
            ));
        }
        let nearest = 0.5 / min_density(config).sqrt();
        if nearest >= radius / 5.0 {
            return Err(Error::invalid(
                "simulation.window_radius",
                format!(
                    "{radius} is too small: the sparsest tier's mean nearest-AP distance is {nearest}"
                ),
            ));
        }
        Ok(radius)
    }
}

fn min_density(config: &NetworkConfig) -> f64 {
    config
        .tiers()
        .iter()
        .map(|t| t.density)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub coverage_estimate: f64,
    /// Binomial standard error of `coverage_estimate`.
    pub std_error: f64,
    pub per_tier_assoc_empirical: Vec<f64>,
    pub per_tier_coverage: Vec<f64>,
    pub drops: usize,
    pub seed: u64,
}

impl SimOutcome {
    /// Standard error of an empirical association frequency.
    pub fn assoc_std_error(&self, k: usize) -> f64 {
        binomial_std_error(self.per_tier_assoc_empirical[k], self.drops)
    }
}

fn binomial_std_error(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Points of one tier in the window. Squared distances to the origin are
/// always kept; Cartesian positions and the bucket grid for fixed-radius
/// queries only when cell membership is needed.
struct Layer {
    r2: Vec<f64>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    half: f64,
    cell: f64,
    side: usize,
    starts: Vec<u32>,
    members: Vec<u32>,
}

impl Layer {
    fn sample<R: Rng>(rng: &mut R, density: f64, radius: f64, positions: bool) -> Self {
        let mean = density * PI * radius * radius;
        let n = Poisson::new(mean)
            .map(|d| d.sample(rng) as usize)
            .unwrap_or(0);
        let r2: Vec<f64> = (0..n)
            .map(|_| radius * radius * rng.random::<f64>())
            .collect();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        if positions {
            for &d2 in &r2 {
                let (sin, cos) = (2.0 * PI * rng.random::<f64>()).sin_cos();
                xs.push(d2.sqrt() * cos);
                ys.push(d2.sqrt() * sin);
            }
        }
        Self {
            r2,
            xs,
            ys,
            half: radius,
            cell: 0.0,
            side: 0,
            starts: Vec::new(),
            members: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.r2.len()
    }

    fn dist2(&self, i: usize, x: f64, y: f64) -> f64 {
        let dx = self.xs[i] - x;
        let dy = self.ys[i] - y;
        dx * dx + dy * dy
    }

    /// Nearest point to the origin with its squared distance.
    fn nearest_to_origin(&self) -> Option<(usize, f64)> {
        (0..self.len())
            .map(|i| (i, self.r2[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Builds the bucket grid with about one point per cell.
    fn index(&mut self, density: f64) {
        let side = ((2.0 * self.half * density.sqrt()).ceil() as usize).clamp(1, 4096);
        self.side = side;
        self.cell = 2.0 * self.half / side as f64;
        let mut counts = vec![0u32; side * side + 1];
        let cells: Vec<usize> = (0..self.len())
            .map(|i| self.cell_of(self.xs[i], self.ys[i]))
            .collect();
        for &c in &cells {
            counts[c + 1] += 1;
        }
        for c in 0..side * side {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut members = vec![0u32; self.len()];
        for (i, &c) in cells.iter().enumerate() {
            members[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        self.starts = counts;
        self.members = members;
    }

    fn coord(&self, v: f64) -> usize {
        (((v + self.half) / self.cell).floor().max(0.0) as usize).min(self.side - 1)
    }

    fn cell_of(&self, x: f64, y: f64) -> usize {
        self.coord(y) * self.side + self.coord(x)
    }

    /// Whether any point other than `skip` lies strictly closer than
    /// `sqrt(r2)` to `(x, y)`.
    fn any_within(&self, x: f64, y: f64, r2: f64, skip: Option<usize>) -> bool {
        let cx = self.coord(x) as isize;
        let cy = self.coord(y) as isize;
        let side = self.side as isize;
        let r = r2.sqrt();
        let mut ring = 0isize;
        // every point in ring m is at least (m - 1) cells away
        while ring <= side && ((ring - 1) as f64) * self.cell < r {
            for gy in (cy - ring)..=(cy + ring) {
                if gy < 0 || gy >= side {
                    continue;
                }
                let edge = gy == cy - ring || gy == cy + ring;
                let stride = if edge { 1 } else { 2 * ring.max(1) };
                let mut gx = cx - ring;
                while gx <= cx + ring {
                    if gx >= 0 && gx < side {
                        let c = (gy * side + gx) as usize;
                        for &m in
                            &self.members[self.starts[c] as usize..self.starts[c + 1] as usize]
                        {
                            let m = m as usize;
                            if Some(m) != skip && self.dist2(m, x, y) < r2 {
                                return true;
                            }
                        }
                    }
                    gx += stride;
                }
            }
            ring += 1;
        }
        false
    }
}

/// `ln(P_k B_k)` up to a common constant for the biases that realize
/// `assoc`; `None` for tiers nobody attaches to.
fn log_biased_powers(config: &NetworkConfig, assoc: &[f64]) -> Vec<Option<f64>> {
    let alpha = config.path_loss_exponent();
    (0..config.num_tiers())
        .map(|k| {
            (assoc[k] > 0.0).then(|| 0.5 * alpha * (assoc[k].ln() - config.tier(k).density.ln()))
        })
        .collect()
}

struct Serving {
    tier: usize,
    ap: usize,
    dist2: f64,
}

/// Strongest biased average power at the origin, comparing the nearest AP
/// of every tier that has one.
fn associate(layers: &[Layer], log_pb: &[Option<f64>], alpha: f64) -> Option<Serving> {
    let mut best: Option<(f64, Serving)> = None;
    for (k, layer) in layers.iter().enumerate() {
        let Some(lp) = log_pb[k] else { continue };
        let Some((ap, d2)) = layer.nearest_to_origin() else {
            continue;
        };
        let score = lp - 0.5 * alpha * d2.ln();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((
                score,
                Serving {
                    tier: k,
                    ap,
                    dist2: d2,
                },
            ));
        }
    }
    best.map(|(_, s)| s)
}

fn drop_rng(seed: u64, drop: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(drop as u64);
    rng
}

fn sample_layers(
    rng: &mut ChaCha8Rng,
    config: &NetworkConfig,
    radius: f64,
    positions: bool,
) -> Vec<Layer> {
    config
        .tiers()
        .iter()
        .map(|t| Layer::sample(rng, t.density, radius, positions))
        .collect()
}

/// Users of a fresh user PPP inside the serving AP's cell.
fn users_in_cell(
    rng: &mut ChaCha8Rng,
    config: &NetworkConfig,
    layers: &mut [Layer],
    log_pb: &[Option<f64>],
    serving: &Serving,
    radius: f64,
) -> usize {
    for (k, layer) in layers.iter_mut().enumerate() {
        layer.index(config.tier(k).density);
    }
    let alpha = config.path_loss_exponent();
    let users = Layer::sample(rng, config.user_density(), radius, true);
    let s = &layers[serving.tier];
    let (sx, sy) = (s.xs[serving.ap], s.ys[serving.ap]);
    let own = log_pb[serving.tier].expect("serving tier has a bias");
    (0..users.len())
        .filter(|&u| {
            let (x, y) = (users.xs[u], users.ys[u]);
            let d2 = (sx - x).powi(2) + (sy - y).powi(2);
            // another AP of tier j beats the serving one when it is closer
            // than d (P_j B_j / P_k B_k)^(1/α)
            !layers.iter().enumerate().any(|(j, layer)| match log_pb[j] {
                None => false,
                Some(lp) => {
                    let scale2 = ((lp - own) * 2.0 / alpha).exp();
                    let skip = (j == serving.tier).then_some(serving.ap);
                    layer.any_within(x, y, d2 * scale2, skip)
                }
            })
        })
        .count()
}

#[derive(Default, Clone)]
struct Tally {
    assoc: Vec<u64>,
    covered: Vec<u64>,
}

impl Tally {
    fn new(k: usize) -> Self {
        Self {
            assoc: vec![0; k],
            covered: vec![0; k],
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for k in 0..self.assoc.len() {
            self.assoc[k] += other.assoc[k];
            self.covered[k] += other.covered[k];
        }
        self
    }
}

/// Empirical rate coverage at `alloc`.
///
/// The association rule uses the biases that realize `alloc.assoc`, so the
/// drop statistics target the same quantity as
/// [`rate_coverage`](crate::kernel::rate_coverage) with the mean-load model.
/// Tiers with zero association never serve.
pub fn simulate_coverage(
    config: &NetworkConfig,
    alloc: &AllocationPair,
    sim: &SimConfig,
) -> Result<SimOutcome> {
    alloc.validate_for(config)?;
    let radius = sim.radius(config)?;
    let k = config.num_tiers();
    let alpha = config.path_loss_exponent();
    let log_pb = log_biased_powers(config, &alloc.assoc);
    let positions = sim.load_mode == SimLoad::ActualCount;
    let thresholds: Vec<SirThreshold> = (0..k)
        .map(|t| {
            sir_threshold(
                config,
                &alloc.assoc,
                &alloc.spectrum,
                t,
                LoadModel::MeanLoad,
            )
        })
        .collect();

    let tally = (0..sim.num_drops)
        .into_par_iter()
        .fold(
            || Tally::new(k),
            |mut tally, drop| {
                let mut rng = drop_rng(sim.seed, drop);
                let mut layers = sample_layers(&mut rng, config, radius, positions);
                let Some(serving) = associate(&layers, &log_pb, alpha) else {
                    return tally;
                };
                let t = serving.tier;
                tally.assoc[t] += 1;

                let layer = &layers[t];
                let h0: f64 = Exp1.sample(&mut rng);
                let signal = h0 * serving.dist2.powf(-0.5 * alpha);
                let mut interference = 0.0;
                for i in 0..layer.len() {
                    let h: f64 = Exp1.sample(&mut rng);
                    if i != serving.ap {
                        interference += h * layer.r2[i].powf(-0.5 * alpha);
                    }
                }

                let tau = match sim.load_mode {
                    SimLoad::AnalyticAverage => thresholds[t],
                    SimLoad::ActualCount => {
                        let n =
                            users_in_cell(&mut rng, config, &mut layers, &log_pb, &serving, radius);
                        threshold_from_demand(demand(config, t, n as f64 + 1.0, alloc.spectrum[t]))
                    }
                };
                if let SirThreshold::Finite(tau) = tau {
                    if signal >= tau * interference {
                        tally.covered[t] += 1;
                    }
                }
                tally
            },
        )
        .reduce(|| Tally::new(k), Tally::merge);

    let n = sim.num_drops as f64;
    let per_tier_coverage: Vec<f64> = tally.covered.iter().map(|&c| c as f64 / n).collect();
    let covered: u64 = tally.covered.iter().sum();
    let coverage_estimate = covered as f64 / n;
    Ok(SimOutcome {
        coverage_estimate,
        std_error: binomial_std_error(coverage_estimate, sim.num_drops),
        per_tier_assoc_empirical: tally.assoc.iter().map(|&c| c as f64 / n).collect(),
        per_tier_coverage,
        drops: sim.num_drops,
        seed: sim.seed,
    })
}

/// Serving distances of the drops that attached to one tier, compared with
/// the analytic conditional law `1 - exp(-π λ_k r² / A_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssocDistance {
    pub tier: usize,
    /// Sorted serving distances.
    pub distances: Vec<f64>,
    pub drops: usize,
    /// Analytic association probability `A_k` under the scenario's biases.
    pub assoc: f64,
    pub density: f64,
    /// One-sample Kolmogorov–Smirnov distance to the analytic CDF.
    pub ks_statistic: f64,
    /// Critical value at significance 0.01.
    pub ks_critical: f64,
}

/// Asymptotic KS critical value coefficient at significance 0.01.
const KS_COEFF_01: f64 = 1.6276;

impl AssocDistance {
    pub fn empirical_cdf(&self, r: f64) -> f64 {
        if self.distances.is_empty() {
            return 0.0;
        }
        self.distances.partition_point(|&d| d <= r) as f64 / self.distances.len() as f64
    }

    pub fn analytic_cdf(&self, r: f64) -> f64 {
        -(-PI * self.density * r * r / self.assoc).exp_m1()
    }

    pub fn passes(&self) -> bool {
        self.ks_statistic < self.ks_critical
    }
}

/// Serving-distance distribution of users attached to tier `k`, using the
/// biases in `config`.
pub fn simulate_assoc_distance(
    config: &NetworkConfig,
    sim: &SimConfig,
    k: usize,
) -> Result<AssocDistance> {
    let radius = sim.radius(config)?;
    if k >= config.num_tiers() {
        return Err(Error::invalid("tier", format!("index {k} out of range")));
    }
    let alpha = config.path_loss_exponent();
    let assoc = association_probabilities(config);
    let log_pb = log_biased_powers(config, &assoc);

    let mut distances: Vec<f64> = (0..sim.num_drops)
        .into_par_iter()
        .filter_map(|drop| {
            let mut rng = drop_rng(sim.seed, drop);
            let layers = sample_layers(&mut rng, config, radius, false);
            associate(&layers, &log_pb, alpha)
                .filter(|s| s.tier == k)
                .map(|s| s.dist2.sqrt())
        })
        .collect();
    distances.sort_by(f64::total_cmp);

    let mut out = AssocDistance {
        tier: k,
        distances,
        drops: sim.num_drops,
        assoc: assoc[k],
        density: config.tier(k).density,
        ks_statistic: 0.0,
        ks_critical: f64::INFINITY,
    };
    let n = out.distances.len();
    if n > 0 {
        let nf = n as f64;
        out.ks_statistic = out
            .distances
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let f = out.analytic_cdf(d);
                (f - i as f64 / nf)
                    .abs()
                    .max((f - (i + 1) as f64 / nf).abs())
            })
            .fold(0.0, f64::max);
        out.ks_critical = KS_COEFF_01 / nf.sqrt();
    }
    Ok(out)
}
