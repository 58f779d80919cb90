//! Reductions whose result does not depend on the rayon worker count.
//!
//! Work is cut into fixed-size chunks, each chunk is summed sequentially and
//! the chunk partials are combined in index order.

use rayon::prelude::*;

pub(crate) const CHUNK: usize = 4096;

pub(crate) fn sum_by<T, F>(items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync,
{
    let partials: Vec<f64> = items
        .par_chunks(CHUNK)
        .map(|chunk| chunk.iter().map(&f).sum::<f64>())
        .collect();
    partials.iter().sum()
}

pub(crate) fn dot3(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let partials: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(p, q)| p[0] * q[0] + p[1] * q[1] + p[2] * q[2])
                .sum::<f64>()
        })
        .collect();
    partials.iter().sum()
}

pub(crate) fn norm3(a: &[[f64; 3]]) -> f64 {
    dot3(a, a).sqrt()
}

/// Per-component mean of a nodal field.
pub(crate) fn mean3(a: &[[f64; 3]]) -> [f64; 3] {
    let partials: Vec<[f64; 3]> = a
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s = [0.0; 3];
            for v in chunk {
                s[0] += v[0];
                s[1] += v[1];
                s[2] += v[2];
            }
            s
        })
        .collect();
    let mut s = [0.0; 3];
    for p in &partials {
        for k in 0..3 {
            s[k] += p[k];
        }
    }
    let n = a.len().max(1) as f64;
    [s[0] / n, s[1] / n, s[2] / n]
}

/// Remove the rigid-translation component (per-component mean).
pub(crate) fn remove_translation(a: &mut [[f64; 3]]) {
    let m = mean3(a);
    a.par_iter_mut().for_each(|v| {
        v[0] -= m[0];
        v[1] -= m[1];
        v[2] -= m[2];
    });
}
