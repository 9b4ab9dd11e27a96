use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::kernel::{kkt_from_gradients, objective, tier_terms};
use crate::network::{association_probabilities, AllocationPair, LoadModel, NetworkConfig};
use crate::simplex::{project_onto_simplex, projection_shift, renormalize, sample_uniform};

use super::closed_form::equal_fraction_shares;
use super::{SolveMode, SolveOptions, SolveResult, StartOutcome};

/// Armijo sufficient-increase constant.
const ARMIJO: f64 = 1e-4;
/// Coordinates at or below this count as sitting on the boundary.
const PIN_LEVEL: f64 = 1e-9;
/// Consecutive pinned iterations before a tier is frozen out.
const PIN_ITERATIONS: usize = 50;
const MIN_STEP: f64 = 1e-12;
const MAX_STEP: f64 = 1e12;
/// Smallest share given to a tier re-entering from the boundary.
const REENTRY_SHARE: f64 = 1e-3;

#[derive(Debug, Clone)]
struct Point {
    assoc: Vec<f64>,
    spectrum: Vec<f64>,
}

struct Eval {
    value: f64,
    grad_assoc: Vec<f64>,
    grad_spectrum: Vec<f64>,
}

/// Projected gradient ascent on the simplex (or product of simplices when
/// the association is free), with Barzilai–Borwein trial steps and Armijo
/// backtracking along the projected direction.
struct Ascent<'a> {
    config: &'a NetworkConfig,
    model: LoadModel,
    assoc_free: bool,
    opts: &'a SolveOptions,
}

impl Ascent<'_> {
    /// Objective and gradients. `∂f/∂w` is written out directly; `∂f/∂A`
    /// is derived from it through the gradient relation, so one kernel
    /// derivative serves both.
    fn evaluate(&self, p: &Point) -> Eval {
        let k = self.config.num_tiers();
        let mut value = 0.0;
        let mut grad_assoc = vec![0.0; k];
        let mut grad_spectrum = vec![0.0; k];
        for t in 0..k {
            let terms = tier_terms(self.config, t, p.assoc[t], p.spectrum[t], self.model);
            value += terms.coverage;
            grad_assoc[t] = terms.grad_assoc_relation;
            grad_spectrum[t] = terms.grad_spectrum;
        }
        Eval {
            value,
            grad_assoc,
            grad_spectrum,
        }
    }

    fn value(&self, p: &Point) -> f64 {
        objective(self.config, &p.assoc, &p.spectrum, self.model)
    }

    fn residual(&self, p: &Point, e: &Eval, frozen: &[bool]) -> f64 {
        let mask = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(frozen)
                .map(|(&x, &f)| if f { 0.0 } else { x })
                .collect()
        };
        if self.assoc_free {
            kkt_from_gradients(
                &mask(&p.assoc),
                &mask(&p.spectrum),
                &e.grad_assoc,
                &e.grad_spectrum,
            )
            .value
        } else {
            let zeros = vec![0.0; e.grad_assoc.len()];
            let assoc: Vec<f64> = p.spectrum.iter().map(|_| 1.0).collect();
            kkt_from_gradients(&mask(&assoc), &mask(&p.spectrum), &zeros, &e.grad_spectrum).value
        }
    }

    /// Direction `P(x + step·g) - x` for one simplex block. The gradient is
    /// centered over the active tiers first (the projection ignores a common
    /// shift), and unclipped coordinates take `step·g̃_i - θ` directly, so the
    /// direction keeps full precision when it is many orders of magnitude
    /// smaller than `x`. Returns the direction and the centered gradient.
    fn block_direction(x: &[f64], g: &[f64], step: f64, active: &[bool]) -> (Vec<f64>, Vec<f64>) {
        let live = active.iter().filter(|a| **a).count().max(1) as f64;
        let mean = g
            .iter()
            .zip(active)
            .filter(|(_, &a)| a)
            .map(|(v, _)| v)
            .sum::<f64>()
            / live;
        let centered: Vec<f64> = g
            .iter()
            .zip(active)
            .map(|(v, &a)| if a { v - mean } else { 0.0 })
            .collect();
        let moved: Vec<f64> = x.iter().zip(&centered).map(|(a, b)| a + step * b).collect();
        let theta = projection_shift(&moved, active).unwrap_or(0.0);
        let direction = (0..x.len())
            .map(|i| {
                if !active[i] {
                    -x[i]
                } else if moved[i] - theta > 0.0 {
                    step * centered[i] - theta
                } else {
                    -x[i]
                }
            })
            .collect();
        (direction, centered)
    }

    fn run(&self, start: Point) -> (Point, StartOutcome) {
        let k = self.config.num_tiers();
        let mut frozen = vec![false; k];
        let mut pinned = vec![0usize; k];
        let mut x = start;
        let mut e = self.evaluate(&x);
        let initial_objective = e.value;
        let mut step = 1.0;
        let mut converged = false;
        let mut iterations = 0;

        while iterations < self.opts.max_iterations {
            if self.residual(&x, &e, &frozen) < self.opts.tolerance {
                converged = true;
                break;
            }
            iterations += 1;

            let active: Vec<bool> = frozen.iter().map(|f| !f).collect();
            let (d_spec, g_spec) =
                Self::block_direction(&x.spectrum, &e.grad_spectrum, step, &active);
            let (d_assoc, g_assoc) = if self.assoc_free {
                Self::block_direction(&x.assoc, &e.grad_assoc, step, &active)
            } else {
                (vec![0.0; k], vec![0.0; k])
            };
            let slope = dot(&g_assoc, &d_assoc) + dot(&g_spec, &d_spec);
            if !(slope > 0.0) {
                // projected step is null: stationary up to rounding
                break;
            }

            let mut lambda = 1.0;
            let accepted = loop {
                let trial = Point {
                    assoc: combine(&x.assoc, &d_assoc, lambda),
                    spectrum: combine(&x.spectrum, &d_spec, lambda),
                };
                // objective differences below rounding carry no information
                let noise = 8.0 * f64::EPSILON * e.value.abs().max(1.0);
                if self.value(&trial) >= e.value + ARMIJO * lambda * slope - noise {
                    break Some(trial);
                }
                lambda *= 0.5;
                if lambda < 1e-16 {
                    break None;
                }
            };

            let Some(next) = accepted else {
                step *= 0.1;
                if step < MIN_STEP {
                    break;
                }
                continue;
            };

            let next_eval = self.evaluate(&next);
            // Barzilai-Borwein step for the next iteration
            let s: Vec<f64> = next
                .assoc
                .iter()
                .chain(&next.spectrum)
                .zip(x.assoc.iter().chain(&x.spectrum))
                .map(|(a, b)| a - b)
                .collect();
            let y: Vec<f64> = next_eval
                .grad_assoc
                .iter()
                .chain(&next_eval.grad_spectrum)
                .zip(e.grad_assoc.iter().chain(&e.grad_spectrum))
                .map(|(a, b)| a - b)
                .collect();
            let curvature = -dot(&s, &y);
            step = if curvature > 0.0 {
                (dot(&s, &s) / curvature).clamp(MIN_STEP, MAX_STEP)
            } else {
                (step * 2.0).min(MAX_STEP)
            };

            x = next;
            e = next_eval;
            self.freeze_pinned(&mut x, &mut frozen, &mut pinned, &mut e);
        }

        let outcome = StartOutcome {
            initial_objective,
            objective: e.value,
            converged,
            iterations,
        };
        (x, outcome)
    }

    /// Freezes tiers that sat on the boundary for `PIN_ITERATIONS`
    /// consecutive iterations and re-projects the rest.
    fn freeze_pinned(
        &self,
        x: &mut Point,
        frozen: &mut [bool],
        pinned: &mut [usize],
        e: &mut Eval,
    ) {
        let mut changed = false;
        let live = frozen.iter().filter(|f| !**f).count();
        for t in 0..frozen.len() {
            if frozen[t] {
                continue;
            }
            let coord = if self.assoc_free {
                x.assoc[t]
            } else {
                x.spectrum[t]
            };
            pinned[t] = if coord <= PIN_LEVEL { pinned[t] + 1 } else { 0 };
            if pinned[t] >= PIN_ITERATIONS && live > 1 {
                frozen[t] = true;
                changed = true;
            }
        }
        if changed {
            let active: Vec<bool> = frozen.iter().map(|f| !f).collect();
            if self.assoc_free {
                x.assoc = project_onto_simplex(&x.assoc, &active);
            }
            x.spectrum = project_onto_simplex(&x.spectrum, &active);
            *e = self.evaluate(x);
        }
    }
}

/// Local search plus one re-entry attempt: a run that ends with a tier on
/// the boundary is restarted with that tier put back at its closed-form
/// share. The face `A_k = w_k = 0` attracts gradient steps even where
/// coverage still improves along a narrow ridge off it.
fn run_with_reentry(ascent: &Ascent<'_>, start: Point, shares: &[f64]) -> (Point, StartOutcome) {
    let (mut best, mut outcome) = ascent.run(start);
    if !ascent.assoc_free {
        return (best, outcome);
    }
    let initial_objective = outcome.initial_objective;
    let boundary: Vec<usize> = (0..shares.len())
        .filter(|&k| best.assoc[k] <= PIN_LEVEL || best.spectrum[k] <= PIN_LEVEL)
        .collect();
    for k in boundary {
        let share = shares[k].max(REENTRY_SHARE);
        let reinsert = |v: &[f64]| -> Vec<f64> {
            let mut out: Vec<f64> = v.iter().map(|x| x * (1.0 - share)).collect();
            out[k] += share;
            renormalize(&mut out);
            out
        };
        let retry = Point {
            assoc: reinsert(&best.assoc),
            spectrum: reinsert(&best.spectrum),
        };
        let (point, o) = ascent.run(retry);
        if o.objective > outcome.objective {
            best = point;
            outcome = StartOutcome {
                iterations: outcome.iterations + o.iterations,
                ..o
            };
        } else {
            outcome.iterations += o.iterations;
        }
    }
    outcome.initial_objective = initial_objective;
    (best, outcome)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combine(x: &[f64], d: &[f64], lambda: f64) -> Vec<f64> {
    let mut v: Vec<f64> = x
        .iter()
        .zip(d)
        .map(|(a, b)| (a + lambda * b).max(0.0))
        .collect();
    renormalize(&mut v);
    v
}

fn multi_start(ascent: &Ascent<'_>, starts: Vec<Point>, mode: SolveMode) -> Result<SolveResult> {
    let (shares, _) = equal_fraction_shares(ascent.config);
    let runs: Vec<(Point, StartOutcome)> = starts
        .into_par_iter()
        .map(|s| run_with_reentry(ascent, s, &shares))
        .collect();
    let mut best = 0;
    for (i, (_, o)) in runs.iter().enumerate() {
        if o.objective > runs[best].1.objective {
            best = i;
        }
    }
    let (point, outcome) = &runs[best];
    let alloc = AllocationPair::new(point.assoc.clone(), point.spectrum.clone())?;
    let mut result = SolveResult::finish(ascent.config, ascent.model, alloc, mode)?;
    result.converged = outcome.converged;
    result.iterations = outcome.iterations;
    result.starts = runs.into_iter().map(|(_, o)| o).collect();
    Ok(result)
}

/// Maximizes the rate coverage jointly over association probabilities and
/// spectrum fractions. Local search from the equal-fractions closed form and
/// `opts.restarts` uniformly random points; the best local optimum wins.
pub fn optimize_joint(
    config: &NetworkConfig,
    model: LoadModel,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let k = config.num_tiers();
    let (warm, _) = equal_fraction_shares(config);
    let mut starts = vec![Point {
        assoc: warm.clone(),
        spectrum: warm,
    }];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let assoc = sample_uniform(&mut rng, k);
        let spectrum = sample_uniform(&mut rng, k);
        starts.push(Point { assoc, spectrum });
    }
    let ascent = Ascent {
        config,
        model,
        assoc_free: true,
        opts,
    };
    multi_start(&ascent, starts, SolveMode::Joint)
}

/// Maximizes over spectrum fractions only, with association fixed by the
/// unbiased (max-SIR) rule regardless of the biases stored in `config`.
pub fn optimize_spectrum_maxsir(
    config: &NetworkConfig,
    model: LoadModel,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let k = config.num_tiers();
    let assoc = association_probabilities(&config.unbiased());
    let (warm, _) = equal_fraction_shares(config);
    let mut starts = vec![Point {
        assoc: assoc.clone(),
        spectrum: warm,
    }];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        starts.push(Point {
            assoc: assoc.clone(),
            spectrum: sample_uniform(&mut rng, k),
        });
    }
    let ascent = Ascent {
        config,
        model,
        assoc_free: false,
        opts,
    };
    multi_start(&ascent, starts, SolveMode::MaxSirSpectrumOnly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::test_support::{symmetric, three_tier};
    use crate::optimize::{brute_force, optimize_equal_fractions};

    #[test]
    fn single_tier_is_immediate() {
        let r = optimize_joint(
            &symmetric(1, 1e6),
            LoadModel::MeanLoad,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(r.alloc.assoc, vec![1.0]);
        assert_eq!(r.alloc.spectrum, vec![1.0]);
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn symmetric_tiers_split_evenly() {
        let r = optimize_joint(
            &symmetric(2, 1e6),
            LoadModel::MeanLoad,
            &SolveOptions::default(),
        )
        .unwrap();
        for v in r.alloc.assoc.iter().chain(&r.alloc.spectrum) {
            assert!((v - 0.5).abs() < 1e-6, "{:?}", r.alloc);
        }
        let m = optimize_spectrum_maxsir(
            &symmetric(3, 1e6),
            LoadModel::MeanLoad,
            &SolveOptions::default(),
        )
        .unwrap();
        for v in &m.alloc.spectrum {
            assert!((v - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn three_tier_converges_and_beats_grid() {
        let cfg = three_tier(1e6);
        let opts = SolveOptions::default();
        let r = optimize_joint(&cfg, LoadModel::MeanLoad, &opts).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.report.kkt.value < 1e-6);
        let grid = brute_force(&cfg, LoadModel::MeanLoad, 0.05).unwrap();
        assert!(r.objective() >= grid.objective() - 1e-6);
        for s in &r.starts {
            assert!(r.objective() >= s.initial_objective);
        }
        let eq = optimize_equal_fractions(&cfg, LoadModel::MeanLoad).unwrap();
        assert!(r.objective() >= eq.objective() - 1e-6);
        let maxsir = optimize_spectrum_maxsir(&cfg, LoadModel::MeanLoad, &opts).unwrap();
        assert!(r.objective() >= maxsir.objective() - 1e-6);
    }

    #[test]
    fn higher_load_solves() {
        let cfg = three_tier(1e6);
        let r = optimize_joint(&cfg, LoadModel::HigherLoad, &SolveOptions::default()).unwrap();
        assert!(r.converged, "{r:?}");
        let mean = optimize_joint(&cfg, LoadModel::MeanLoad, &SolveOptions::default()).unwrap();
        assert!(r.objective() < mean.objective());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = three_tier(5e5);
        let opts = SolveOptions {
            seed: 7,
            ..Default::default()
        };
        let a = optimize_joint(&cfg, LoadModel::MeanLoad, &opts).unwrap();
        let b = optimize_joint(&cfg, LoadModel::MeanLoad, &opts).unwrap();
        assert_eq!(a, b);
    }
}
