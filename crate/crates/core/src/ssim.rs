//! Windowed structural-similarity internals shared by the spatial loss and
//! the multi-scale video metric.
//!
//! Local statistics use an 11x11 Gaussian window with sigma 1.5 (shrunk to
//! the image size when needed) and a valid convolution, with the usual
//! stabilizers C1 = (0.01 L)^2, C2 = (0.03 L)^2 at L = 1.

use crate::real::Real;
use crate::video::Image;

pub(crate) const WINDOW: usize = 11;
pub(crate) const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

pub(crate) fn gaussian_kernel<T: Real>(size: usize, sigma: f64) -> Vec<T> {
    let center = (size as f64 - 1.0) / 2.0;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<T> = (0..size)
        .map(|i| T::cast((-((i as f64 - center).powi(2)) / denom).exp()))
        .collect();
    let sum: T = k.iter().copied().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid convolution of a single-channel image.
fn conv_valid<T: Real>(
    data: &[T],
    width: usize,
    height: usize,
    kernel: &[T],
) -> (Vec<T>, usize, usize) {
    let k = kernel.len();
    let ow = width - k + 1;
    let oh = height - k + 1;
    // Horizontal pass.
    let mut tmp = vec![T::zero(); ow * height];
    for y in 0..height {
        for x in 0..ow {
            let mut acc = T::zero();
            for i in 0..k {
                acc += data[y * width + x + i] * kernel[i];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![T::zero(); ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = T::zero();
            for i in 0..k {
                acc += tmp[(y + i) * ow + x] * kernel[i];
            }
            out[y * ow + x] = acc;
        }
    }
    (out, ow, oh)
}

/// Mean SSIM and mean contrast-structure term over the valid window
/// positions of two grayscale images of equal shape.
pub(crate) fn ssim_components<T: Real>(a: &Image<T>, b: &Image<T>) -> (T, T) {
    debug_assert_eq!(a.channels, 1);
    debug_assert_eq!(b.channels, 1);
    debug_assert_eq!((a.width, a.height), (b.width, b.height));
    let win = WINDOW.min(a.width).min(a.height);
    let kernel = gaussian_kernel::<T>(win, SIGMA);

    let n = a.width * a.height;
    let mut aa = vec![T::zero(); n];
    let mut bb = vec![T::zero(); n];
    let mut ab = vec![T::zero(); n];
    for i in 0..n {
        aa[i] = a.data[i] * a.data[i];
        bb[i] = b.data[i] * b.data[i];
        ab[i] = a.data[i] * b.data[i];
    }
    let (mu_a, ow, oh) = conv_valid(&a.data, a.width, a.height, &kernel);
    let (mu_b, _, _) = conv_valid(&b.data, a.width, a.height, &kernel);
    let (m_aa, _, _) = conv_valid(&aa, a.width, a.height, &kernel);
    let (m_bb, _, _) = conv_valid(&bb, a.width, a.height, &kernel);
    let (m_ab, _, _) = conv_valid(&ab, a.width, a.height, &kernel);

    let c1 = T::cast(K1 * K1);
    let c2 = T::cast(K2 * K2);
    let two = T::cast(2.0);
    let mut ssim_sum = T::zero();
    let mut cs_sum = T::zero();
    for i in 0..ow * oh {
        let ma = mu_a[i];
        let mb = mu_b[i];
        let va = m_aa[i] - ma * ma;
        let vb = m_bb[i] - mb * mb;
        let cov = m_ab[i] - ma * mb;
        let luminance = (two * ma * mb + c1) / (ma * ma + mb * mb + c1);
        let cs = (two * cov + c2) / (va + vb + c2);
        ssim_sum += luminance * cs;
        cs_sum += cs;
    }
    let count = T::from_usize_cast(ow * oh);
    (ssim_sum / count, cs_sum / count)
}
