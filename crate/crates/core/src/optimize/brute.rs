use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::tier_terms;
use crate::network::{AllocationPair, LoadModel, NetworkConfig};
use crate::simplex::{compositions, lattice_size};

use super::{SolveMode, SolveResult};

pub const MAX_BRUTE_FORCE_TIERS: usize = 4;

/// Upper bound on `|assoc lattice| × |spectrum lattice|`.
pub const MAX_BRUTE_FORCE_POINTS: u128 = 1_000_000_000;

/// Number of lattice intervals for a step that must divide 1.
fn intervals(grid_step: f64) -> Result<usize> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::invalid("grid_step", "must lie in (0, 1]"));
    }
    let n = (1.0 / grid_step).round();
    if (n * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "grid_step",
            format!("{grid_step} does not divide 1 into whole steps"),
        ));
    }
    Ok(n as usize)
}

#[derive(Clone, Copy)]
struct Best {
    value: f64,
    assoc: usize,
    spectrum: usize,
}

impl Best {
    const NONE: Best = Best {
        value: f64::NEG_INFINITY,
        assoc: usize::MAX,
        spectrum: usize::MAX,
    };

    // larger objective wins; ties go to the lexicographically first point
    fn better(self, other: Best) -> Best {
        if other.value > self.value
            || (other.value == self.value
                && (other.assoc, other.spectrum) < (self.assoc, self.spectrum))
        {
            other
        } else {
            self
        }
    }
}

/// Exhaustive search over both simplex lattices with spacing `grid_step`.
///
/// The objective is a sum of per-tier terms `f_k(A_k, w_k)`, so every
/// `(i/n, j/n)` pair is tabulated once and the product lattice is scanned
/// with table lookups. Every lattice pair is visited.
pub fn brute_force(
    config: &NetworkConfig,
    model: LoadModel,
    grid_step: f64,
) -> Result<SolveResult> {
    let k = config.num_tiers();
    if k > MAX_BRUTE_FORCE_TIERS {
        return Err(Error::GridTooLarge(format!(
            "{k} tiers, at most {MAX_BRUTE_FORCE_TIERS} supported"
        )));
    }
    let n = intervals(grid_step)?;
    let points = lattice_size(n, k).pow(2);
    if points > MAX_BRUTE_FORCE_POINTS {
        return Err(Error::GridTooLarge(format!(
            "{points} lattice pairs exceed the limit of {MAX_BRUTE_FORCE_POINTS}"
        )));
    }

    let step = 1.0 / n as f64;
    // table[tier][i][j] = f_k(i/n, j/n)
    let table: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|tier| {
            (0..=n)
                .into_par_iter()
                .map(|i| {
                    (0..=n)
                        .map(|j| {
                            tier_terms(config, tier, i as f64 * step, j as f64 * step, model)
                                .coverage
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let lattice = compositions(n, k);
    let count = lattice.len() / k;

    let best = (0..count)
        .into_par_iter()
        .map(|ai| {
            let a = &lattice[ai * k..(ai + 1) * k];
            let rows: Vec<&[f64]> = (0..k).map(|t| table[t][a[t] as usize].as_slice()).collect();
            let mut best = Best::NONE;
            for (wi, w) in lattice.chunks_exact(k).enumerate() {
                let mut v = 0.0;
                for t in 0..k {
                    v += rows[t][w[t] as usize];
                }
                if v > best.value {
                    best = Best {
                        value: v,
                        assoc: ai,
                        spectrum: wi,
                    };
                }
            }
            best
        })
        .reduce(|| Best::NONE, Best::better);

    let to_fractions = |idx: usize| -> Vec<f64> {
        lattice[idx * k..(idx + 1) * k]
            .iter()
            .map(|&c| c as f64 / n as f64)
            .collect()
    };
    let alloc = AllocationPair::new(to_fractions(best.assoc), to_fractions(best.spectrum))?;
    let mut result = SolveResult::finish(config, model, alloc, SolveMode::BruteForce)?;
    result.iterations = count * count;
    Ok(result)
}
