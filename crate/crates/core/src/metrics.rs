//! Evaluation metrics: PSNR and multi-scale SSIM for videos, Chamfer
//! distance, 95th-percentile Hausdorff distance, and F-score for point sets.
//!
//! Conventions (stated because the literature varies): Chamfer distance is
//! the symmetric mean of squared nearest-neighbor distances divided by two;
//! HD95 interpolates linearly between order statistics and takes the worse
//! direction; the F-score threshold comes from the caller.

use thiserror::Error;

use crate::linalg::Vector;
use crate::real::Real;
use crate::ssim;
use crate::video::{Image, VideoTensor};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty point set")]
    EmptySet,
    #[error("frames must be at least 32x32 for the 5-scale pyramid, got {width}x{height}")]
    FramesTooSmall { width: usize, height: usize },
    #[error("threshold must be positive")]
    BadThreshold,
}

/// PSNR cap returned for identical inputs (MSE = 0).
pub const PSNR_CAP_DB: f64 = 100.0;

/// Standard per-scale exponents of the multi-scale structural similarity.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn mse_images<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<(T, usize), MetricError> {
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels) {
        return Err(MetricError::ShapeMismatch("image shapes differ".into()));
    }
    let mut acc = T::zero();
    for (&va, &vb) in a.data.iter().zip(&b.data) {
        let d = va - vb;
        acc += d * d;
    }
    Ok((acc, a.data.len()))
}

/// `10 log10(1 / MSE)` with values in [0,1]; identical inputs return the
/// documented 100 dB cap.
pub fn psnr_images<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<T, MetricError> {
    let (acc, n) = mse_images(a, b)?;
    psnr_from_mse(acc / T::from_usize_cast(n))
}

pub fn psnr_video<T: Real>(a: &VideoTensor<T>, b: &VideoTensor<T>) -> Result<T, MetricError> {
    if !a.same_shape(b) {
        return Err(MetricError::ShapeMismatch("video shapes differ".into()));
    }
    if a.is_empty() {
        return Err(MetricError::ShapeMismatch("empty video".into()));
    }
    let mut acc = T::zero();
    let mut count = 0usize;
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        let (s, n) = mse_images(fa, fb)?;
        acc += s;
        count += n;
    }
    psnr_from_mse(acc / T::from_usize_cast(count))
}

fn psnr_from_mse<T: Real>(mse: T) -> Result<T, MetricError> {
    let cap = T::cast(PSNR_CAP_DB);
    if mse <= T::zero() {
        return Ok(cap);
    }
    let db = T::cast(10.0) * (T::one() / mse).log10();
    Ok(db.min(cap))
}

/// Per-frame multi-scale SSIM (5 scales, 2x mean-pool downsampling, the
/// standard exponents), averaged over frames. Grayscale conversion first.
pub fn ms_ssim<T: Real>(a: &VideoTensor<T>, b: &VideoTensor<T>) -> Result<T, MetricError> {
    if !a.same_shape(b) {
        return Err(MetricError::ShapeMismatch("video shapes differ".into()));
    }
    if a.is_empty() {
        return Err(MetricError::ShapeMismatch("empty video".into()));
    }
    if a.width() < 32 || a.height() < 32 {
        return Err(MetricError::FramesTooSmall {
            width: a.width(),
            height: a.height(),
        });
    }
    let mut acc = T::zero();
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        acc += ms_ssim_frame(&fa.to_gray(), &fb.to_gray());
    }
    Ok(acc / T::from_usize_cast(a.len()))
}

fn ms_ssim_frame<T: Real>(a: &Image<T>, b: &Image<T>) -> T {
    let scales = MS_SSIM_WEIGHTS.len();
    let mut cur_a = a.clone();
    let mut cur_b = b.clone();
    let mut value = T::one();
    for (s, &w) in MS_SSIM_WEIGHTS.iter().enumerate() {
        let (ssim_full, cs) = ssim::ssim_components(&cur_a, &cur_b);
        let exponent = T::cast(w);
        if s + 1 == scales {
            // Final scale uses the full index; negative values clamp to zero
            // so the fractional powers stay real.
            value *= ssim_full.max(T::zero()).powf(exponent);
        } else {
            value *= cs.max(T::zero()).powf(exponent);
            cur_a = cur_a.downsample_2x();
            cur_b = cur_b.downsample_2x();
        }
    }
    value
}

fn nearest_sq<T: Real, const D: usize>(p: &Vector<T, D>, set: &[Vector<T, D>]) -> T {
    let mut best = T::infinity();
    for q in set {
        let d = p.distance_sq(q);
        if d < best {
            best = d;
        }
    }
    best
}

/// Symmetric mean squared nearest-neighbor distance, divided by two.
pub fn chamfer<T: Real, const D: usize>(
    predicted: &[Vector<T, D>],
    reference: &[Vector<T, D>],
) -> Result<T, MetricError> {
    if predicted.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let forward: T = predicted.iter().map(|p| nearest_sq(p, reference)).sum();
    let backward: T = reference.iter().map(|q| nearest_sq(q, predicted)).sum();
    let f = forward / T::from_usize_cast(predicted.len());
    let b = backward / T::from_usize_cast(reference.len());
    Ok((f + b) / T::cast(2.0))
}

/// 95th percentile (linear interpolation between order statistics) of the
/// directed nearest-neighbor distances, worse direction.
pub fn hd95<T: Real, const D: usize>(
    predicted: &[Vector<T, D>],
    reference: &[Vector<T, D>],
) -> Result<T, MetricError> {
    if predicted.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let directed = |from: &[Vector<T, D>], to: &[Vector<T, D>]| {
        let mut dists: Vec<T> = from.iter().map(|p| nearest_sq(p, to).sqrt()).collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        percentile_sorted(&dists, T::cast(0.95))
    };
    Ok(directed(predicted, reference).max(directed(reference, predicted)))
}

fn percentile_sorted<T: Real>(sorted: &[T], q: T) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * T::from_usize_cast(n - 1);
    let lo = pos.floor().to_f64_cast() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - T::from_usize_cast(lo);
    sorted[lo] * (T::one() - frac) + sorted[hi] * frac
}

/// Harmonic mean of precision and recall at distance threshold `tau`;
/// zero when both vanish.
pub fn fscore<T: Real, const D: usize>(
    predicted: &[Vector<T, D>],
    reference: &[Vector<T, D>],
    tau: T,
) -> Result<T, MetricError> {
    if predicted.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptySet);
    }
    if tau <= T::zero() {
        return Err(MetricError::BadThreshold);
    }
    let tau_sq = tau * tau;
    let within = |from: &[Vector<T, D>], to: &[Vector<T, D>]| {
        let hits = from.iter().filter(|p| nearest_sq(p, to) <= tau_sq).count();
        T::from_usize_cast(hits) / T::from_usize_cast(from.len())
    };
    let precision = within(predicted, reference);
    let recall = within(reference, predicted);
    if precision + recall == T::zero() {
        return Ok(T::zero());
    }
    Ok(T::cast(2.0) * precision * recall / (precision + recall))
}
