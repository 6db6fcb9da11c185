//! Float image and video containers plus the PNG frame-directory format.
//!
//! Videos are ordered frame stacks with values in [0,1] and a frame rate.
//! The on-disk form is a directory of 8-bit PNGs `frame_%05d.png` with a
//! `manifest.json`; import quantization is accepted for reference videos
//! while in-memory pipelines stay in float precision.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

/// BT.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    /// 1 (grayscale) or 3 (RGB).
    pub channels: usize,
    /// Row-major `(y, x, c)`.
    pub data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Image {
            width,
            height,
            channels,
            data: vec![T::zero(); width * height * channels],
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[self.idx(x, y, c)]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        let i = self.idx(x, y, c);
        self.data[i] = v;
    }

    /// Single-channel view: identity for grayscale, BT.601 luma for RGB.
    pub fn to_gray(&self) -> Image<T> {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = Image::zeros(self.width, self.height, 1);
        let wr = T::cast(LUMA[0]);
        let wg = T::cast(LUMA[1]);
        let wb = T::cast(LUMA[2]);
        for i in 0..self.width * self.height {
            let r = self.data[i * 3];
            let g = self.data[i * 3 + 1];
            let b = self.data[i * 3 + 2];
            out.data[i] = wr * r + wg * g + wb * b;
        }
        out
    }

    /// Channel mean, the alternative reduction for RGB inputs.
    pub fn to_channel_mean(&self) -> Image<T> {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = Image::zeros(self.width, self.height, 1);
        let third = T::cast(1.0 / 3.0);
        for i in 0..self.width * self.height {
            out.data[i] =
                (self.data[i * 3] + self.data[i * 3 + 1] + self.data[i * 3 + 2]) * third;
        }
        out
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = (*v).max(T::zero()).min(T::one());
        }
    }

    /// 2x2 average pooling, used by the multi-scale similarity pyramid.
    pub fn downsample_2x(&self) -> Image<T> {
        let nw = (self.width / 2).max(1);
        let nh = (self.height / 2).max(1);
        let mut out = Image::zeros(nw, nh, self.channels);
        for y in 0..nh {
            for x in 0..nw {
                for c in 0..self.channels {
                    let mut acc = T::zero();
                    let mut count = T::zero();
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let sx = (x * 2 + dx).min(self.width - 1);
                            let sy = (y * 2 + dy).min(self.height - 1);
                            acc += self.get(sx, sy, c);
                            count += T::one();
                        }
                    }
                    out.set(x, y, c, acc / count);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor<T> {
    pub frames: Vec<Image<T>>,
    pub fps: T,
}

impl<T: Real> VideoTensor<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames.first().map_or(0, |f| f.width)
    }

    pub fn height(&self) -> usize {
        self.frames.first().map_or(0, |f| f.height)
    }

    pub fn channels(&self) -> usize {
        self.frames.first().map_or(0, |f| f.channels)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self.width() == other.width()
            && self.height() == other.height()
            && self.channels() == other.channels()
    }
}

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("png error on {path}: {reason}")]
    Png { path: PathBuf, reason: String },
    #[error("manifest error on {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("video format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoManifest {
    pub schema_version: u32,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub channels: usize,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

pub fn save_video<T: Real>(video: &VideoTensor<T>, dir: &Path) -> Result<(), VideoError> {
    if video.is_empty() {
        return Err(VideoError::Format("refusing to save an empty video".into()));
    }
    std::fs::create_dir_all(dir).map_err(|source| VideoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (t, frame) in video.frames.iter().enumerate() {
        let path = dir.join(frame_file_name(t));
        write_png(frame, &path)?;
    }
    let manifest = VideoManifest {
        schema_version: crate::scene::SCHEMA_VERSION,
        fps: video.fps.to_f64_cast(),
        width: video.width(),
        height: video.height(),
        frames: video.len(),
        channels: video.channels(),
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).map_err(|source| {
        VideoError::Io { path, source }
    })
}

pub fn load_video<T: Real>(dir: &Path) -> Result<VideoTensor<T>, VideoError> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|source| VideoError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    let manifest: VideoManifest =
        serde_json::from_str(&text).map_err(|source| VideoError::Manifest {
            path: manifest_path,
            source,
        })?;
    let mut frames = Vec::with_capacity(manifest.frames);
    for t in 0..manifest.frames {
        let path = dir.join(frame_file_name(t));
        let img = read_png(&path)?;
        if img.width != manifest.width || img.height != manifest.height {
            return Err(VideoError::Format(format!(
                "frame {t} is {}x{}, manifest says {}x{}",
                img.width, img.height, manifest.width, manifest.height
            )));
        }
        frames.push(img);
    }
    Ok(VideoTensor {
        frames,
        fps: T::cast(manifest.fps),
    })
}

pub fn write_png<T: Real>(img: &Image<T>, path: &Path) -> Result<(), VideoError> {
    let file = std::fs::File::create(path).map_err(|source| VideoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let w = std::io::BufWriter::new(file);
    let mut encoder = png::Encoder::new(w, img.width as u32, img.height as u32);
    encoder.set_color(match img.channels {
        1 => png::ColorType::Grayscale,
        _ => png::ColorType::Rgb,
    });
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| VideoError::Png {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(png_err)?;
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|&v| {
            let clamped = v.max(T::zero()).min(T::one());
            (clamped.to_f64_cast() * 255.0).round() as u8
        })
        .collect();
    writer.write_image_data(&bytes).map_err(png_err)
}

pub fn read_png<T: Real>(path: &Path) -> Result<Image<T>, VideoError> {
    let file = std::fs::File::open(path).map_err(|source| VideoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let png_err = |reason: String| VideoError::Png {
        path: path.to_path_buf(),
        reason,
    };
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| png_err(e.to_string()))?;
    let mut buf = vec![
        0u8;
        reader
            .output_buffer_size()
            .ok_or_else(|| png_err("output buffer size overflow".into()))?
    ];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| png_err(e.to_string()))?;
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(png_err(format!("unsupported color type {other:?}"))),
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(png_err(format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    let width = info.width as usize;
    let height = info.height as usize;
    let scale = T::cast(1.0 / 255.0);
    let data = buf[..width * height * channels]
        .iter()
        .map(|&b| T::from_usize_cast(b as usize) * scale)
        .collect();
    Ok(Image {
        width,
        height,
        channels,
        data,
    })
}
