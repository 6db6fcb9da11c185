//! Simulation-driven initialization: Latin hypercube sampling of candidate
//! parameter vectors in log10 space, short forward rollouts, and selection
//! of the candidate whose rendered video best matches the reference under
//! the multi-scale similarity metric.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics;
use crate::params::{ParamBounds, ParamVector, PARAM_COUNT};
use crate::pipeline::render_rollout;
use crate::real::Real;
use crate::scene::SceneConfig;
use crate::video::VideoTensor;

#[derive(Debug, Error)]
pub enum InitError {
    #[error("no candidate survived evaluation; all were disqualified")]
    AllDisqualified,
    #[error("candidate set is unscored; run the evaluation first")]
    Unscored,
    #[error("reference video too short: need {needed} frames, got {got}")]
    ReferenceTooShort { needed: usize, got: usize },
    #[error("{0}")]
    BadConfig(String),
}

/// Whether each part gets its own sampled vector or all parts share one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchSpace {
    PerPart,
    Shared,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate<T: Real> {
    /// Unit-cube sample, one entry per search dimension.
    pub unit: Vec<T>,
    /// log10 of the physical values.
    pub log10: Vec<T>,
    /// Expanded per-part parameter vectors.
    pub parts: Vec<ParamVector<T>>,
    /// Similarity score; `None` until evaluated, negative infinity when the
    /// candidate was disqualified by a failed simulation.
    pub score: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSet<T: Real> {
    pub space: SearchSpace,
    pub part_count: usize,
    /// Search dimension: `parts * 6` per-part, 6 shared.
    pub dim: usize,
    pub candidates: Vec<Candidate<T>>,
}

/// Raw Latin hypercube sample in the unit cube: for every dimension the `n`
/// samples occupy the `n` equal strata exactly once, jittered uniformly
/// within each stratum.
pub fn lhs_unit<T: Real>(n: usize, dim: usize, seed: u64) -> Vec<Vec<T>> {
    assert!(n >= 1 && dim >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<T>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let column: Vec<T> = strata
            .into_iter()
            .map(|s| {
                let jitter: f64 = rng.random_range(0.0..1.0);
                T::cast((s as f64 + jitter) / n as f64)
            })
            .collect();
        columns.push(column);
    }
    (0..n)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect()
}

/// Maps unit samples into physical space through the log10 range of each
/// parameter: `s = log10(l) + (log10(u) - log10(l)) u`, `theta = 10^s`.
pub fn lhs_sample<T: Real>(
    bounds: &ParamBounds<T>,
    n: usize,
    space: SearchSpace,
    part_count: usize,
    seed: u64,
) -> CandidateSet<T> {
    let dim = match space {
        SearchSpace::PerPart => part_count * PARAM_COUNT,
        SearchSpace::Shared => PARAM_COUNT,
    };
    let unit = lhs_unit::<T>(n, dim, seed);
    let candidates = unit
        .into_iter()
        .map(|u| {
            let mut log10 = Vec::with_capacity(dim);
            for (k, &uv) in u.iter().enumerate() {
                let j = k % PARAM_COUNT;
                let lo = bounds.lower[j].log10();
                let hi = bounds.upper[j].log10();
                log10.push(lo + (hi - lo) * uv);
            }
            let parts = (0..part_count)
                .map(|m| {
                    let offset = match space {
                        SearchSpace::PerPart => m * PARAM_COUNT,
                        SearchSpace::Shared => 0,
                    };
                    let mut arr = [T::zero(); PARAM_COUNT];
                    for (j, slot) in arr.iter_mut().enumerate() {
                        *slot = T::cast(10.0).powf(log10[offset + j]);
                    }
                    ParamVector::from_array(arr)
                })
                .collect();
            Candidate {
                unit: u,
                log10,
                parts,
                score: None,
                note: None,
            }
        })
        .collect();
    CandidateSet {
        space,
        part_count,
        dim,
        candidates,
    }
}

/// Scores one candidate: a `k_frames` rollout rendered and compared against
/// the first `k_frames` of the reference. Simulation failures disqualify the
/// candidate with a negative-infinity score instead of aborting the search.
pub fn evaluate_candidate<T: Real, const D: usize>(
    cfg: &SceneConfig<T, D>,
    parts: &[ParamVector<T>],
    reference: &VideoTensor<T>,
    k_frames: usize,
) -> (T, Option<String>) {
    match render_rollout(cfg, parts, k_frames) {
        Ok((_, video)) => {
            let ref_head = VideoTensor {
                frames: reference.frames[..k_frames].to_vec(),
                fps: reference.fps,
            };
            match metrics::ms_ssim(&video, &ref_head) {
                Ok(score) => (score, None),
                Err(e) => (T::neg_infinity(), Some(format!("metric failed: {e}"))),
            }
        }
        Err(e) => (T::neg_infinity(), Some(format!("simulation failed: {e}"))),
    }
}

/// Evaluates every candidate. Candidates are independent; they run in
/// parallel and land in the set by index, so the outcome matches a
/// sequential pass bitwise.
pub fn score_candidates<T: Real, const D: usize>(
    cfg: &SceneConfig<T, D>,
    set: &mut CandidateSet<T>,
    reference: &VideoTensor<T>,
    k_frames: usize,
) -> Result<(), InitError> {
    if k_frames < 2 {
        return Err(InitError::BadConfig("init rollouts need >= 2 frames".into()));
    }
    if reference.len() < k_frames {
        return Err(InitError::ReferenceTooShort {
            needed: k_frames,
            got: reference.len(),
        });
    }
    let results: Vec<(T, Option<String>)> = set
        .candidates
        .par_iter()
        .map(|c| evaluate_candidate(cfg, &c.parts, reference, k_frames))
        .collect();
    for (c, (score, note)) in set.candidates.iter_mut().zip(results) {
        c.score = Some(score);
        c.note = note;
    }
    Ok(())
}

/// Argmax over finite scores; ties break toward the lowest candidate index.
pub fn select_init<T: Real>(set: &CandidateSet<T>) -> Result<usize, InitError> {
    let mut best: Option<(usize, T)> = None;
    for (i, c) in set.candidates.iter().enumerate() {
        let score = c.score.ok_or(InitError::Unscored)?;
        if !score.is_finite() {
            continue;
        }
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((i, score)),
        }
    }
    best.map(|(i, _)| i).ok_or(InitError::AllDisqualified)
}
