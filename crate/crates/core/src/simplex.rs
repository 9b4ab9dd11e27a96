//! Probability-simplex helpers: Euclidean projection, lattice enumeration
//! and uniform sampling.

use rand::Rng;
use rand_distr::Exp1;

/// Euclidean projection of `v` onto `{x : x >= 0, Σx = 1}`, restricted to the
/// coordinates where `active` is true. Inactive coordinates are set to 0.
pub fn project_onto_simplex(v: &[f64], active: &[bool]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    let Some(theta) = projection_shift(v, active) else {
        return out;
    };
    for (o, (&x, &on)) in out.iter_mut().zip(v.iter().zip(active)) {
        if on {
            *o = (x - theta).max(0.0);
        }
    }
    renormalize(&mut out);
    out
}

/// The shift `θ` such that `max(v - θ, 0)` over the active coordinates is
/// the simplex projection of `v`. `None` when no coordinate is active.
pub fn projection_shift(v: &[f64], active: &[bool]) -> Option<f64> {
    let mut sorted: Vec<f64> = v
        .iter()
        .zip(active)
        .filter(|(_, &on)| on)
        .map(|(&x, _)| x)
        .collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(|a, b| b.total_cmp(a));

    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if x - candidate > 0.0 {
            theta = candidate;
        }
    }
    Some(theta)
}

/// Rescales a nonnegative vector so its entries sum to exactly 1 up to
/// rounding.
pub fn renormalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    }
}

/// All compositions of `n` into `k` nonnegative parts, in lexicographic
/// order, flattened into one buffer of `k`-tuples.
pub fn compositions(n: usize, k: usize) -> Vec<u16> {
    assert!(k >= 1 && n <= u16::MAX as usize);
    let mut out = Vec::with_capacity(lattice_size(n, k) as usize * k);
    let mut current = vec![0u16; k];
    fill(n, 0, &mut current, &mut out);
    out
}

fn fill(remaining: usize, pos: usize, current: &mut [u16], out: &mut Vec<u16>) {
    let k = current.len();
    if pos == k - 1 {
        current[pos] = remaining as u16;
        out.extend_from_slice(current);
        return;
    }
    for c in 0..=remaining {
        current[pos] = c as u16;
        fill(remaining - c, pos + 1, current, out);
    }
}

/// Number of lattice points `C(n + k - 1, k - 1)`.
pub fn lattice_size(n: usize, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 1..k as u128 {
        acc = acc * (n as u128 + i) / i;
    }
    acc
}

/// Uniform draw from the simplex (Dirichlet with unit concentration).
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    renormalize(&mut v);
    v
}
