//! Deterministic reductions.
//!
//! Sums and dot products run as fixed-size chunk partials combined by a
//! pairwise tree, so the result is identical at any thread count. All
//! reductions in the library go through here.

use rayon::prelude::*;

const CHUNK: usize = 1024;

/// Pairwise tree fold; consumes the partials in place.
fn pairwise(parts: &mut [f64]) -> f64 {
    if parts.is_empty() {
        return 0.0;
    }
    let mut len = parts.len();
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            parts[i] = parts[2 * i] + parts[2 * i + 1];
        }
        if len % 2 == 1 {
            parts[half] = parts[len - 1];
            len = half + 1;
        } else {
            len = half;
        }
    }
    parts[0]
}

pub fn sum(v: &[f64]) -> f64 {
    let mut parts: Vec<f64> = v
        .par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect();
    pairwise(&mut parts)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut parts: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    pairwise(&mut parts)
}

/// Sum of `f(v[i])` with the same deterministic chunking as [`sum`].
pub fn sum_map(v: &[f64], f: impl Fn(f64) -> f64 + Sync) -> f64 {
    let mut parts: Vec<f64> = v
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|&x| f(x)).sum::<f64>())
        .collect();
    pairwise(&mut parts)
}

/// Sum of `f(i)` for `i` in `0..n`, deterministically chunked.
pub fn sum_indexed(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let nchunks = n.div_ceil(CHUNK);
    let mut parts: Vec<f64> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi).map(&f).sum::<f64>()
        })
        .collect();
    pairwise(&mut parts)
}

pub fn max(v: &[f64]) -> f64 {
    v.par_chunks(CHUNK)
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

pub fn min(v: &[f64]) -> f64 {
    v.par_chunks(CHUNK)
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.par_chunks(CHUNK)
        .map(|c| c.iter().fold(0.0f64, |m, &x| m.max(x.abs())))
        .reduce(|| 0.0, f64::max)
}

/// Index of the first non-finite entry, if any.
pub fn first_non_finite(v: &[f64]) -> Option<usize> {
    v.iter().position(|x| !x.is_finite())
}
