//! Majority-vote label smoothing over k nearest neighbors.
//!
//! Used to suppress isolated mislabeled particles before part-level
//! parameters are attached. Brute-force neighbor search; part assignment
//! runs once per scene on at most a few thousand points.

use thiserror::Error;

use crate::linalg::Vector;
use crate::real::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KnnError {
    #[error("empty input")]
    Empty,
    #[error("k = {k} out of range for {n} points (need 1 <= k < n)")]
    KOutOfRange { k: usize, n: usize },
    #[error("labels ({labels}) and positions ({positions}) differ in length")]
    LengthMismatch { labels: usize, positions: usize },
}

/// Replaces each label by the majority label among its `k` nearest neighbors
/// (Euclidean, self excluded). Ties break toward the smallest label index.
pub fn knn_smooth_labels<T: Real, const D: usize>(
    labels: &[u32],
    positions: &[Vector<T, D>],
    k: usize,
) -> Result<Vec<u32>, KnnError> {
    let n = positions.len();
    if n == 0 {
        return Err(KnnError::Empty);
    }
    if labels.len() != n {
        return Err(KnnError::LengthMismatch {
            labels: labels.len(),
            positions: n,
        });
    }
    if k < 1 || k >= n {
        return Err(KnnError::KOutOfRange { k, n });
    }

    let mut out = Vec::with_capacity(n);
    let mut dists: Vec<(T, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        dists.clear();
        for j in 0..n {
            if j != i {
                dists.push((positions[i].distance_sq(&positions[j]), j));
            }
        }
        // Equidistant neighbors resolve by index so the result is
        // independent of input iteration order.
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut counts: Vec<(u32, usize)> = Vec::new();
        for &(_, j) in dists.iter().take(k) {
            let lbl = labels[j];
            match counts.iter_mut().find(|(l, _)| *l == lbl) {
                Some((_, c)) => *c += 1,
                None => counts.push((lbl, 1)),
            }
        }
        let winner = counts
            .iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|&(l, _)| l)
            .expect("k >= 1 guarantees at least one neighbor");
        out.push(winner);
    }
    Ok(out)
}
