//! Particle splatting renderer and spatiotemporal slice diagnostics.
//!
//! Each particle contributes an isotropic Gaussian footprint of fixed pixel
//! radius, accumulated additively and clamped to [0,1]; the footprint is
//! smooth in the particle position. The camera is orthographic: world
//! coordinates in the projected plane map to pixels through a scale and a
//! center, with world +y pointing up the image.

use num_complex::Complex;
use thiserror::Error;

use crate::fft;
use crate::mpm::{ParticleState, Trajectory};
use crate::real::Real;
use crate::scene::{CameraSpec, PartDef};
use crate::video::{Image, VideoTensor};

/// Footprints are evaluated out to this many sigmas.
const CUTOFF_SIGMAS: f64 = 4.0;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("row {row} out of range for height {height}")]
    RowOutOfRange { row: usize, height: usize },
    #[error("slice needs at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("empty trajectory")]
    EmptyTrajectory,
}

/// Maps a world position to continuous pixel coordinates.
///
/// In 2D both axes map directly; in 3D the camera's view axis is dropped
/// and the remaining axes keep their order.
#[inline]
pub fn project<T: Real, const D: usize>(
    position: &crate::linalg::Vector<T, D>,
    cam: &CameraSpec<T>,
) -> (T, T) {
    let (wx, wy) = if D == 2 {
        (position[0], position[1])
    } else {
        let mut picked = [T::zero(); 2];
        let mut k = 0;
        for a in 0..D {
            if a != cam.view_axis {
                picked[k] = position[a];
                k += 1;
            }
        }
        (picked[0], picked[1])
    };
    let half_w = T::from_usize_cast(cam.width) / T::cast(2.0);
    let half_h = T::from_usize_cast(cam.height) / T::cast(2.0);
    let u = (wx - cam.center[0]) * cam.scale + half_w;
    let v = (cam.center[1] - wy) * cam.scale + half_h;
    (u, v)
}

fn all_gray<T: Real>(parts: &[PartDef<T>]) -> bool {
    parts
        .iter()
        .all(|p| p.color[0] == p.color[1] && p.color[1] == p.color[2])
}

/// Splats one particle set. Grayscale output when every part color is gray.
pub fn render_frame<T: Real, const D: usize>(
    particles: &[ParticleState<T, D>],
    parts: &[PartDef<T>],
    cam: &CameraSpec<T>,
) -> Image<T> {
    let channels = if all_gray(parts) { 1 } else { 3 };
    let mut img = Image::zeros(cam.width, cam.height, channels);
    let sigma = cam.splat_radius;
    let inv_two_sigma_sq = T::one() / (T::cast(2.0) * sigma * sigma);
    let cutoff = sigma * T::cast(CUTOFF_SIGMAS);
    let half = T::cast(0.5);
    for p in particles {
        let (u, v) = project(&p.position, cam);
        if !u.is_finite() || !v.is_finite() {
            continue;
        }
        let color = &parts[p.part as usize].color;
        // Pixel sample points sit at integer + 0.5.
        let x_lo = (u - cutoff - half).floor().to_f64_cast() as i64;
        let x_hi = (u + cutoff - half).ceil().to_f64_cast() as i64;
        let y_lo = (v - cutoff - half).floor().to_f64_cast() as i64;
        let y_hi = (v + cutoff - half).ceil().to_f64_cast() as i64;
        if x_hi < 0 || y_hi < 0 || x_lo >= cam.width as i64 || y_lo >= cam.height as i64 {
            continue; // footprint entirely outside the frustum
        }
        let x_lo = x_lo.max(0) as usize;
        let x_hi = (x_hi.min(cam.width as i64 - 1)) as usize;
        let y_lo = y_lo.max(0) as usize;
        let y_hi = (y_hi.min(cam.height as i64 - 1)) as usize;
        for y in y_lo..=y_hi {
            let dy = T::from_usize_cast(y) + half - v;
            for x in x_lo..=x_hi {
                let dx = T::from_usize_cast(x) + half - u;
                let d2 = dx * dx + dy * dy;
                let w = (-d2 * inv_two_sigma_sq).exp();
                if channels == 1 {
                    let i = img.idx(x, y, 0);
                    img.data[i] += w * color[0];
                } else {
                    for c in 0..3 {
                        let i = img.idx(x, y, c);
                        img.data[i] += w * color[c];
                    }
                }
            }
        }
    }
    img.clamp01();
    img
}

pub fn render_video<T: Real, const D: usize>(
    trajectory: &Trajectory<T, D>,
    parts: &[PartDef<T>],
    cam: &CameraSpec<T>,
) -> Result<VideoTensor<T>, RenderError> {
    if trajectory.frames.is_empty() {
        return Err(RenderError::EmptyTrajectory);
    }
    let frames = trajectory
        .frames
        .iter()
        .map(|f| render_frame(f, parts, cam))
        .collect();
    Ok(VideoTensor {
        frames,
        fps: trajectory.fps(),
    })
}

/// One fixed scanline per frame, stacked over time:
/// row `t` of the slice is frame `t`'s scanline (grayscale).
#[derive(Debug, Clone)]
pub struct WTSlice<T> {
    pub steps: usize,
    pub width: usize,
    pub row: usize,
    /// Row-major `(t, x)`.
    pub data: Vec<T>,
}

pub fn wt_slice<T: Real>(video: &VideoTensor<T>, row: usize) -> Result<WTSlice<T>, RenderError> {
    if video.len() < 2 {
        return Err(RenderError::TooFewFrames {
            needed: 2,
            got: video.len(),
        });
    }
    let height = video.height();
    if row >= height {
        return Err(RenderError::RowOutOfRange { row, height });
    }
    let width = video.width();
    let mut data = Vec::with_capacity(video.len() * width);
    for frame in &video.frames {
        let gray = frame.to_gray();
        data.extend_from_slice(&gray.data[row * width..(row + 1) * width]);
    }
    Ok(WTSlice {
        steps: video.len(),
        width,
        row,
        data,
    })
}

/// Per-column temporal spectrum of a mean-removed slice, magnitudes averaged
/// across columns. Bin `k` covers frequency `k * fps / steps`.
pub fn slice_spectrum<T: Real>(slice: &WTSlice<T>) -> Vec<T> {
    let t_len = slice.steps;
    let twiddle = fft::twiddles::<T>(t_len);
    let mut line = vec![Complex::new(T::zero(), T::zero()); t_len];
    let mut out = vec![Complex::new(T::zero(), T::zero()); t_len];
    let mut acc = vec![T::zero(); t_len / 2 + 1];
    for x in 0..slice.width {
        let mut mean = T::zero();
        for t in 0..t_len {
            mean += slice.data[t * slice.width + x];
        }
        mean /= T::from_usize_cast(t_len);
        for t in 0..t_len {
            line[t] = Complex::new(slice.data[t * slice.width + x] - mean, T::zero());
        }
        fft::dft_line(&line, &twiddle, &mut out);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += out[k].norm();
        }
    }
    let w = T::from_usize_cast(slice.width);
    for a in &mut acc {
        *a /= w;
    }
    acc
}

/// Peak of the column-averaged temporal spectrum, excluding DC.
/// Returns `(frequency_hz, amplitude)`; all-constant slices give `(0, 0)`.
pub fn dominant_frequency<T: Real>(
    slice: &WTSlice<T>,
    fps: T,
) -> Result<(T, T), RenderError> {
    if slice.steps < 4 {
        return Err(RenderError::TooFewFrames {
            needed: 4,
            got: slice.steps,
        });
    }
    let spectrum = slice_spectrum(slice);
    let mut best_k = 0usize;
    let mut best_amp = T::zero();
    for (k, &a) in spectrum.iter().enumerate().skip(1) {
        if a > best_amp {
            best_amp = a;
            best_k = k;
        }
    }
    if best_k == 0 || best_amp <= T::cast(1e-12) {
        return Ok((T::zero(), T::zero()));
    }
    let freq = T::from_usize_cast(best_k) * fps / T::from_usize_cast(slice.steps);
    Ok((freq, best_amp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Matrix, Vector};
    use crate::mpm::RolloutWarnings;
    use crate::scene::MaterialMode;

    fn camera(w: usize, h: usize, scale: f64) -> CameraSpec<f64> {
        CameraSpec {
            view_axis: 2,
            width: w,
            height: h,
            scale,
            center: [0.5, 0.5],
            splat_radius: 1.5,
        }
    }

    fn one_part() -> Vec<PartDef<f64>> {
        vec![PartDef {
            name: "p".into(),
            color: [1.0; 3],
            material: MaterialMode::VonMises,
            params: None,
        }]
    }

    fn particle_at(x: f64, y: f64) -> ParticleState<f64, 2> {
        ParticleState {
            position: Vector([x, y]),
            velocity: Vector::zero(),
            def_grad: Matrix::identity(),
            affine: Matrix::zero(),
            mass: 1.0,
            volume: 1.0,
            part: 0,
        }
    }

    #[test]
    fn empty_particle_set_renders_black() {
        let img = render_frame::<f64, 2>(&[], &one_part(), &camera(32, 32, 32.0));
        assert!(img.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_particle_peaks_at_center_and_decays() {
        let cam = camera(33, 33, 33.0);
        // World (0.5, 0.5) maps to pixel center (16.5, 16.5).
        let img = render_frame(&[particle_at(0.5, 0.5)], &one_part(), &cam);
        let center = img.get(16, 16, 0);
        assert!(center > 0.9, "center response {center}");
        assert!(img.get(18, 16, 0) < center);
        assert!(img.get(16, 20, 0) < img.get(16, 18, 0));
        assert!(img.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    /// Shifting the world by exactly one pixel worth of distance shifts the
    /// image by one pixel.
    #[test]
    fn shift_equivariance_within_tolerance() {
        let cam = camera(64, 64, 64.0);
        let particles: Vec<_> = (0..20)
            .map(|i| particle_at(0.35 + 0.01 * i as f64, 0.45 + 0.007 * i as f64))
            .collect();
        let base = render_frame(&particles, &one_part(), &cam);
        let shifted: Vec<_> = particles
            .iter()
            .map(|p| particle_at(p.position[0] + 1.0 / 64.0, p.position[1]))
            .collect();
        let moved = render_frame(&shifted, &one_part(), &cam);
        let mut mad = 0.0;
        let mut count = 0.0;
        for y in 0..64 {
            for x in 1..64 {
                mad += (moved.get(x, y, 0) - base.get(x - 1, y, 0)).abs();
                count += 1.0;
            }
        }
        assert!(mad / count < 1e-3, "shift MAD {}", mad / count);
    }

    #[test]
    fn video_rendering_is_framewise() {
        let frames = vec![
            vec![particle_at(0.4, 0.5)],
            vec![particle_at(0.5, 0.5)],
            vec![particle_at(0.6, 0.5)],
        ];
        let traj = Trajectory {
            frames: frames.clone(),
            dt: 1e-3,
            substeps: 10,
            warnings: RolloutWarnings::default(),
        };
        let cam = camera(32, 32, 32.0);
        let video = render_video(&traj, &one_part(), &cam).unwrap();
        assert_eq!(video.len(), 3);
        for (t, f) in frames.iter().enumerate() {
            assert_eq!(video.frames[t], render_frame(f, &one_part(), &cam));
        }
        // Reversed trajectory renders the time-reversed video.
        let rev = Trajectory {
            frames: frames.into_iter().rev().collect(),
            dt: 1e-3,
            substeps: 10,
            warnings: RolloutWarnings::default(),
        };
        let video_rev = render_video(&rev, &one_part(), &cam).unwrap();
        for t in 0..3 {
            assert_eq!(video_rev.frames[t], video.frames[2 - t]);
        }
    }

    #[test]
    fn wt_slice_basics() {
        let mut frames = Vec::new();
        for t in 0..4 {
            let mut img = Image::zeros(8, 8, 1);
            if t == 0 {
                for x in 0..8 {
                    img.set(x, 3, 0, 1.0);
                }
            }
            frames.push(img);
        }
        let video = VideoTensor { frames, fps: 10.0 };
        let slice = wt_slice(&video, 3).unwrap();
        assert_eq!(slice.steps, 4);
        assert!(slice.data[..8].iter().all(|&v| v == 1.0));
        assert!(slice.data[8..].iter().all(|&v| v == 0.0));
        assert!(matches!(
            wt_slice(&video, 8),
            Err(RenderError::RowOutOfRange { .. })
        ));

        let constant = VideoTensor {
            frames: vec![Image::<f64>::zeros(8, 8, 1); 4],
            fps: 10.0,
        };
        let s = wt_slice(&constant, 2).unwrap();
        for t in 1..4 {
            assert_eq!(s.data[t * 8..(t + 1) * 8], s.data[0..8]);
        }
    }

    /// A horizontally oscillating bright dot leaves a sinusoid trace:
    /// the per-row argmax must follow the analytic center within a pixel.
    #[test]
    fn oscillating_dot_traces_sinusoid() {
        let t_len = 32;
        let w = 64;
        let mut frames = Vec::new();
        let center = |t: usize| 32.0 + 12.0 * (2.0 * std::f64::consts::PI * t as f64 / 16.0).sin();
        for t in 0..t_len {
            let mut img = Image::zeros(w, 8, 1);
            let cx = center(t);
            for x in 0..w {
                let d = x as f64 + 0.5 - cx;
                img.set(x, 4, 0, (-d * d / 4.0).exp());
            }
            frames.push(img);
        }
        let video = VideoTensor { frames, fps: 16.0 };
        let slice = wt_slice(&video, 4).unwrap();
        for t in 0..t_len {
            let row = &slice.data[t * w..(t + 1) * w];
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!(
                (argmax as f64 + 0.5 - center(t)).abs() <= 1.0,
                "t={t}: argmax {argmax} vs center {}",
                center(t)
            );
        }
    }

    #[test]
    fn dominant_frequency_of_pure_tone() {
        // Scanline brightness oscillating at 2 Hz, sampled at 32 fps for 64
        // frames: the peak must land within half a bin of 2 Hz.
        let t_len = 64;
        let fps = 32.0;
        let mut frames = Vec::new();
        for t in 0..t_len {
            let mut img = Image::zeros(8, 4, 1);
            let v = 0.5 + 0.4 * (2.0 * std::f64::consts::PI * 2.0 * t as f64 / fps).sin();
            for x in 0..8 {
                img.set(x, 1, 0, v);
            }
            frames.push(img);
        }
        let video = VideoTensor { frames, fps };
        let slice = wt_slice(&video, 1).unwrap();
        let (freq, amp) = dominant_frequency(&slice, fps).unwrap();
        assert!((freq - 2.0).abs() <= 0.5, "freq {freq}");
        assert!(amp > 0.0);

        // Uniform brightness offset must not change the answer.
        let mut offset = video.clone();
        for f in &mut offset.frames {
            for v in &mut f.data {
                *v = (*v * 0.5) + 0.25;
            }
        }
        let slice2 = wt_slice(&offset, 1).unwrap();
        let (freq2, _) = dominant_frequency(&slice2, fps).unwrap();
        assert_eq!(freq, freq2);
    }

    #[test]
    fn constant_slice_reports_zero() {
        let video = VideoTensor {
            frames: vec![Image::<f64>::zeros(8, 4, 1); 16],
            fps: 30.0,
        };
        let slice = wt_slice(&video, 2).unwrap();
        let (freq, amp) = dominant_frequency(&slice, 30.0).unwrap();
        assert_eq!(freq, 0.0);
        assert_eq!(amp, 0.0);
    }
}
