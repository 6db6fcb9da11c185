//! Minimal plot rendering on the crate's own image type: line plots for loss
//! curves, heatmaps for spatiotemporal slices, and bar plots for spectra.

use rmpm_core::render::WTSlice;
use rmpm_core::video::Image;
use rmpm_core::{Frame, Scalar};

const MARGIN: usize = 8;

fn put(img: &mut Frame, x: i64, y: i64, color: [Scalar; 3]) {
    if x < 0 || y < 0 || x >= img.width as i64 || y >= img.height as i64 {
        return;
    }
    for (c, &v) in color.iter().enumerate() {
        img.set(x as usize, y as usize, c, v);
    }
}

fn line(img: &mut Frame, mut x0: i64, mut y0: i64, x1: i64, y1: i64, color: [Scalar; 3]) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Line plot of one or more series over a shared x index.
pub fn line_plot(series: &[(&[Scalar], [Scalar; 3])], width: usize, height: usize) -> Frame {
    let mut img = Image::zeros(width, height, 3);
    for v in img.data.iter_mut() {
        *v = 0.08;
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut max_len = 0usize;
    for (data, _) in series {
        max_len = max_len.max(data.len());
        for &v in *data {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !lo.is_finite() || max_len < 2 {
        return img;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let plot_w = (width - 2 * MARGIN) as f64;
    let plot_h = (height - 2 * MARGIN) as f64;
    let to_px = |i: usize, v: f64, n: usize| -> (i64, i64) {
        let x = MARGIN as f64 + plot_w * i as f64 / (n - 1).max(1) as f64;
        let y = MARGIN as f64 + plot_h * (1.0 - (v - lo) / (hi - lo));
        (x.round() as i64, y.round() as i64)
    };
    // Axes.
    let axis = [0.35, 0.35, 0.35];
    line(
        &mut img,
        MARGIN as i64,
        (height - MARGIN) as i64,
        (width - MARGIN) as i64,
        (height - MARGIN) as i64,
        axis,
    );
    line(
        &mut img,
        MARGIN as i64,
        MARGIN as i64,
        MARGIN as i64,
        (height - MARGIN) as i64,
        axis,
    );
    for (data, color) in series {
        if data.len() < 2 {
            continue;
        }
        let mut prev: Option<(i64, i64)> = None;
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                prev = None;
                continue;
            }
            let p = to_px(i, v, data.len());
            if let Some(q) = prev {
                line(&mut img, q.0, q.1, p.0, p.1, *color);
            }
            prev = Some(p);
        }
    }
    img
}

/// Grayscale heatmap of a w-t slice, upscaled by an integer factor,
/// normalized to the data range.
pub fn slice_heatmap(slice: &WTSlice<Scalar>, upscale: usize) -> Frame {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &slice.data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = (hi - lo).max(1e-12);
    let mut img = Image::zeros(slice.width * upscale, slice.steps * upscale, 1);
    for t in 0..slice.steps {
        for x in 0..slice.width {
            let v = (slice.data[t * slice.width + x] - lo) / range;
            for dy in 0..upscale {
                for dx in 0..upscale {
                    img.set(x * upscale + dx, t * upscale + dy, 0, v);
                }
            }
        }
    }
    img
}

/// Bar plot of a spectrum with the peak bin highlighted.
pub fn spectrum_plot(spectrum: &[Scalar], peak_bin: usize, width: usize, height: usize) -> Frame {
    let mut img = Image::zeros(width, height, 3);
    for v in img.data.iter_mut() {
        *v = 0.08;
    }
    if spectrum.len() < 2 {
        return img;
    }
    let hi = spectrum.iter().cloned().fold(1e-12, f64::max);
    let plot_w = width - 2 * MARGIN;
    let plot_h = (height - 2 * MARGIN) as f64;
    let n = spectrum.len();
    for (k, &v) in spectrum.iter().enumerate() {
        let x0 = MARGIN + k * plot_w / n;
        let x1 = MARGIN + ((k + 1) * plot_w / n).max(k * plot_w / n + 1);
        let bar_h = (plot_h * v / hi).round() as usize;
        let color = if k == peak_bin {
            [1.0, 0.35, 0.25]
        } else {
            [0.55, 0.65, 0.9]
        };
        for x in x0..x1.min(width - MARGIN) {
            for y in 0..bar_h.min(height - 2 * MARGIN) {
                put(
                    &mut img,
                    x as i64,
                    (height - MARGIN - 1 - y) as i64,
                    color,
                );
            }
        }
    }
    img
}
