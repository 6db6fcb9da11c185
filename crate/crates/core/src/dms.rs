//! Dual-domain motion supervision.
//!
//! The spatial term is one minus the mean frame-wise SSIM (or an L1 mode for
//! ablations). The spectral term works on grayscale frame differences:
//! non-overlapping spatial patches keep their full temporal extent, each
//! patch gets an unnormalized 3D DFT, and the loss compares log-magnitudes
//! (L1) and phase alignment (one minus the mean real part of the normalized
//! cross spectrum). Totals: `l_spec = l_mag + l_phase`,
//! `l_dms = l_spatial + l_spec`, with unit weights.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft;
use crate::real::Real;
use crate::ssim;
use crate::video::{Image, VideoTensor};

#[derive(Debug, Error)]
pub enum DmsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("video needs at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("patch size {patch} does not divide image extent {extent}")]
    NonDivisiblePatch { patch: usize, extent: usize },
    #[error("{0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialMode {
    #[default]
    Ssim,
    L1,
}

/// How RGB frames reduce to a single channel before loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrayMode {
    #[default]
    Luma,
    ChannelMean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmsConfig<T> {
    pub patch_height: usize,
    pub patch_width: usize,
    pub epsilon: T,
    pub spatial_mode: SpatialMode,
    /// Disabling drops the spectral terms (spatial-only ablations).
    pub spectral: bool,
    pub gray_mode: GrayMode,
}

impl<T: Real> Default for DmsConfig<T> {
    fn default() -> Self {
        DmsConfig {
            patch_height: 16,
            patch_width: 16,
            epsilon: T::cast(1e-8),
            spatial_mode: SpatialMode::Ssim,
            spectral: true,
            gray_mode: GrayMode::Luma,
        }
    }
}

/// Scalar components of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport<T> {
    #[serde(rename = "l_spatial")]
    pub spatial: T,
    #[serde(rename = "l_mag")]
    pub magnitude: T,
    #[serde(rename = "l_phase")]
    pub phase: T,
    #[serde(rename = "l_spec")]
    pub spectral: T,
    #[serde(rename = "l_dms")]
    pub total: T,
}

impl<T: Real> LossReport<T> {
    fn compose(spatial: T, magnitude: T, phase: T) -> Self {
        let spectral = magnitude + phase;
        LossReport {
            spatial,
            magnitude,
            phase,
            spectral,
            total: spatial + spectral,
        }
    }
}

/// Grayscale consecutive frame differences, `diffs[t] = gray(I_{t+1}) - gray(I_t)`.
#[derive(Debug, Clone)]
pub struct DiffVolume<T> {
    pub steps: usize,
    pub height: usize,
    pub width: usize,
    /// Row-major `(t, y, x)`.
    pub data: Vec<T>,
}

/// Non-overlapping spatial patches of a difference volume, each keeping the
/// full temporal extent. Raster order over the patch grid.
#[derive(Debug, Clone)]
pub struct PatchSet<T> {
    pub count: usize,
    /// `(t, h, w)` extents of one patch.
    pub dims: [usize; 3],
    pub data: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct SpectrumPatchSet<T> {
    pub count: usize,
    pub dims: [usize; 3],
    pub data: Vec<Complex<T>>,
}

impl<T: Real> SpectrumPatchSet<T> {
    pub fn coefficients(&self) -> usize {
        self.count * self.dims.iter().product::<usize>()
    }
}

fn gray_frame<T: Real>(img: &Image<T>, mode: GrayMode) -> Image<T> {
    match mode {
        GrayMode::Luma => img.to_gray(),
        GrayMode::ChannelMean => img.to_channel_mean(),
    }
}

/// Mean local SSIM between two frames (grayscale conversion applied first).
pub fn ssim_frame<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<T, DmsError> {
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels) {
        return Err(DmsError::ShapeMismatch(format!(
            "frames {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    let ga = gray_frame(a, GrayMode::Luma);
    let gb = gray_frame(b, GrayMode::Luma);
    Ok(ssim::ssim_components(&ga, &gb).0)
}

/// `1 - mean_t SSIM(a_t, b_t)`, or mean absolute difference in L1 mode.
pub fn spatial_loss<T: Real>(
    a: &VideoTensor<T>,
    b: &VideoTensor<T>,
    mode: SpatialMode,
    gray: GrayMode,
) -> Result<T, DmsError> {
    if !a.same_shape(b) {
        return Err(DmsError::ShapeMismatch("video shapes differ".into()));
    }
    if a.is_empty() {
        return Err(DmsError::TooFewFrames { needed: 1, got: 0 });
    }
    let t_count = T::from_usize_cast(a.len());
    match mode {
        SpatialMode::Ssim => {
            let mut acc = T::zero();
            for (fa, fb) in a.frames.iter().zip(&b.frames) {
                let ga = gray_frame(fa, gray);
                let gb = gray_frame(fb, gray);
                acc += ssim::ssim_components(&ga, &gb).0;
            }
            Ok(T::one() - acc / t_count)
        }
        SpatialMode::L1 => {
            let mut acc = T::zero();
            let mut count = T::zero();
            for (fa, fb) in a.frames.iter().zip(&b.frames) {
                for (&va, &vb) in fa.data.iter().zip(&fb.data) {
                    acc += (va - vb).abs();
                    count += T::one();
                }
            }
            Ok(acc / count)
        }
    }
}

pub fn frame_difference<T: Real>(
    video: &VideoTensor<T>,
    gray: GrayMode,
) -> Result<DiffVolume<T>, DmsError> {
    if video.len() < 2 {
        return Err(DmsError::TooFewFrames {
            needed: 2,
            got: video.len(),
        });
    }
    let width = video.width();
    let height = video.height();
    let steps = video.len() - 1;
    let mut data = Vec::with_capacity(steps * width * height);
    let mut prev = gray_frame(&video.frames[0], gray);
    for t in 1..video.len() {
        let cur = gray_frame(&video.frames[t], gray);
        for i in 0..width * height {
            data.push(cur.data[i] - prev.data[i]);
        }
        prev = cur;
    }
    Ok(DiffVolume {
        steps,
        height,
        width,
        data,
    })
}

pub fn patchify<T: Real>(
    diff: &DiffVolume<T>,
    patch_height: usize,
    patch_width: usize,
) -> Result<PatchSet<T>, DmsError> {
    if patch_height == 0 || patch_width == 0 {
        return Err(DmsError::BadConfig("patch extents must be positive".into()));
    }
    if diff.height % patch_height != 0 {
        return Err(DmsError::NonDivisiblePatch {
            patch: patch_height,
            extent: diff.height,
        });
    }
    if diff.width % patch_width != 0 {
        return Err(DmsError::NonDivisiblePatch {
            patch: patch_width,
            extent: diff.width,
        });
    }
    let rows = diff.height / patch_height;
    let cols = diff.width / patch_width;
    let count = rows * cols;
    let dims = [diff.steps, patch_height, patch_width];
    let mut data = Vec::with_capacity(count * diff.steps * patch_height * patch_width);
    for pr in 0..rows {
        for pc in 0..cols {
            for t in 0..diff.steps {
                for y in 0..patch_height {
                    let gy = pr * patch_height + y;
                    let row_start = (t * diff.height + gy) * diff.width + pc * patch_width;
                    data.extend_from_slice(&diff.data[row_start..row_start + patch_width]);
                }
            }
        }
    }
    Ok(PatchSet { count, dims, data })
}

/// Reassembles patches in raster order; the partition inverse, used in tests.
pub fn unpatchify<T: Real>(patches: &PatchSet<T>, height: usize, width: usize) -> DiffVolume<T> {
    let [steps, ph, pw] = patches.dims;
    let cols = width / pw;
    let mut data = vec![T::zero(); steps * height * width];
    let patch_len = steps * ph * pw;
    for n in 0..patches.count {
        let pr = n / cols;
        let pc = n % cols;
        for t in 0..steps {
            for y in 0..ph {
                for x in 0..pw {
                    let src = n * patch_len + (t * ph + y) * pw + x;
                    let gy = pr * ph + y;
                    let gx = pc * pw + x;
                    data[(t * height + gy) * width + gx] = patches.data[src];
                }
            }
        }
    }
    DiffVolume {
        steps,
        height,
        width,
        data,
    }
}

/// Unnormalized forward 3D DFT of every patch.
pub fn patch_spectrum<T: Real>(patches: &PatchSet<T>) -> SpectrumPatchSet<T> {
    let patch_len: usize = patches.dims.iter().product();
    let mut data = Vec::with_capacity(patches.count * patch_len);
    for n in 0..patches.count {
        let mut buf: Vec<Complex<T>> = patches.data[n * patch_len..(n + 1) * patch_len]
            .iter()
            .map(|&v| Complex::new(v, T::zero()))
            .collect();
        fft::dft3_inplace(&mut buf, patches.dims);
        data.append(&mut buf);
    }
    SpectrumPatchSet {
        count: patches.count,
        dims: patches.dims,
        data,
    }
}

fn check_spectra<T: Real>(
    a: &SpectrumPatchSet<T>,
    b: &SpectrumPatchSet<T>,
) -> Result<(), DmsError> {
    if a.count != b.count || a.dims != b.dims {
        return Err(DmsError::ShapeMismatch(format!(
            "spectra {}x{:?} vs {}x{:?}",
            a.count, a.dims, b.count, b.dims
        )));
    }
    Ok(())
}

/// Mean L1 distance between log(1 + |F|) magnitudes.
pub fn magnitude_loss<T: Real>(
    a: &SpectrumPatchSet<T>,
    b: &SpectrumPatchSet<T>,
) -> Result<T, DmsError> {
    check_spectra(a, b)?;
    let mut acc = T::zero();
    for (ca, cb) in a.data.iter().zip(&b.data) {
        acc += (ca.norm().ln_1p() - cb.norm().ln_1p()).abs();
    }
    Ok(acc / T::from_usize_cast(a.data.len()))
}

/// One minus the mean real part of the normalized cross spectrum.
///
/// Normalization divides each coefficient by its magnitude plus `epsilon`,
/// so all-zero spectra give exactly 1 and anti-aligned spectra approach 2.
pub fn phase_loss<T: Real>(
    a: &SpectrumPatchSet<T>,
    b: &SpectrumPatchSet<T>,
    epsilon: T,
) -> Result<T, DmsError> {
    check_spectra(a, b)?;
    if epsilon <= T::zero() {
        return Err(DmsError::BadConfig("epsilon must be positive".into()));
    }
    let mut acc = T::zero();
    for (ca, cb) in a.data.iter().zip(&b.data) {
        let na = *ca / (ca.norm() + epsilon);
        let nb = *cb / (cb.norm() + epsilon);
        let s = (na * nb.conj()).re;
        acc += s;
    }
    Ok(T::one() - acc / T::from_usize_cast(a.data.len()))
}

/// Full dual-domain loss of a rendered video against a reference.
pub fn dms_loss<T: Real>(
    rendered: &VideoTensor<T>,
    reference: &VideoTensor<T>,
    cfg: &DmsConfig<T>,
) -> Result<LossReport<T>, DmsError> {
    if !rendered.same_shape(reference) {
        return Err(DmsError::ShapeMismatch(format!(
            "rendered {}x{}x{} ({} frames) vs reference {}x{}x{} ({} frames)",
            rendered.width(),
            rendered.height(),
            rendered.channels(),
            rendered.len(),
            reference.width(),
            reference.height(),
            reference.channels(),
            reference.len(),
        )));
    }
    if rendered.len() < 2 {
        return Err(DmsError::TooFewFrames {
            needed: 2,
            got: rendered.len(),
        });
    }
    let spatial = spatial_loss(rendered, reference, cfg.spatial_mode, cfg.gray_mode)?;
    if !cfg.spectral {
        return Ok(LossReport::compose(spatial, T::zero(), T::zero()));
    }
    let da = frame_difference(rendered, cfg.gray_mode)?;
    let db = frame_difference(reference, cfg.gray_mode)?;
    let pa = patchify(&da, cfg.patch_height, cfg.patch_width)?;
    let pb = patchify(&db, cfg.patch_height, cfg.patch_width)?;
    let sa = patch_spectrum(&pa);
    let sb = patch_spectrum(&pb);
    let magnitude = magnitude_loss(&sa, &sb)?;
    let phase = phase_loss(&sa, &sb, cfg.epsilon)?;
    Ok(LossReport::compose(spatial, magnitude, phase))
}
