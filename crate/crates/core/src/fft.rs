//! Small unnormalized forward DFTs over 1D lines and 3D volumes.
//!
//! Patch sizes here are tiny (16x16 spatial, a few dozen frames), so the
//! transform is a separable direct DFT with precomputed twiddle tables; no
//! power-of-two restriction, bitwise deterministic, generic over scalar.

use num_complex::Complex;

use crate::real::Real;

/// Twiddle table `w[k] = exp(-2 pi i k / n)` for k in 0..n.
pub fn twiddles<T: Real>(n: usize) -> Vec<Complex<T>> {
    let step = -2.0 * std::f64::consts::PI / n as f64;
    (0..n)
        .map(|k| {
            let angle = step * k as f64;
            Complex::new(T::cast(angle.cos()), T::cast(angle.sin()))
        })
        .collect()
}

/// Unnormalized forward DFT of one line, `out[k] = sum_j x[j] w[(jk) % n]`.
pub fn dft_line<T: Real>(input: &[Complex<T>], twiddle: &[Complex<T>], out: &mut [Complex<T>]) {
    let n = input.len();
    debug_assert_eq!(twiddle.len(), n);
    debug_assert_eq!(out.len(), n);
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = Complex::new(T::zero(), T::zero());
        let mut idx = 0usize;
        for x in input {
            acc = acc + *x * twiddle[idx];
            idx += k;
            if idx >= n {
                idx -= n;
            }
        }
        *o = acc;
    }
}

/// In-place separable 3D DFT over axes `(t, h, w)` of a row-major volume
/// (t-major, then rows, then columns).
pub fn dft3_inplace<T: Real>(data: &mut [Complex<T>], dims: [usize; 3]) {
    let [nt, nh, nw] = dims;
    debug_assert_eq!(data.len(), nt * nh * nw);
    let mut line: Vec<Complex<T>> = Vec::new();
    let mut out: Vec<Complex<T>> = Vec::new();

    // Axis w: contiguous lines.
    let tw = twiddles::<T>(nw);
    out.resize(nw, Complex::new(T::zero(), T::zero()));
    for t in 0..nt {
        for h in 0..nh {
            let start = (t * nh + h) * nw;
            dft_line(&data[start..start + nw], &tw, &mut out);
            data[start..start + nw].copy_from_slice(&out);
        }
    }

    // Axis h: stride nw.
    let th = twiddles::<T>(nh);
    line.resize(nh, Complex::new(T::zero(), T::zero()));
    out.resize(nh, Complex::new(T::zero(), T::zero()));
    for t in 0..nt {
        for w in 0..nw {
            for h in 0..nh {
                line[h] = data[(t * nh + h) * nw + w];
            }
            dft_line(&line, &th, &mut out);
            for h in 0..nh {
                data[(t * nh + h) * nw + w] = out[h];
            }
        }
    }

    // Axis t: stride nh*nw.
    let tt = twiddles::<T>(nt);
    line.resize(nt, Complex::new(T::zero(), T::zero()));
    out.resize(nt, Complex::new(T::zero(), T::zero()));
    for h in 0..nh {
        for w in 0..nw {
            for t in 0..nt {
                line[t] = data[(t * nh + h) * nw + w];
            }
            dft_line(&line, &tt, &mut out);
            for t in 0..nt {
                data[(t * nh + h) * nw + w] = out[t];
            }
        }
    }
}

/// Direct sextuple-loop 3D DFT used as the independent oracle in tests.
#[doc(hidden)]
pub fn dft3_direct<T: Real>(input: &[T], dims: [usize; 3]) -> Vec<Complex<T>> {
    let [nt, nh, nw] = dims;
    let tau = -2.0 * std::f64::consts::PI;
    let mut out = vec![Complex::new(T::zero(), T::zero()); nt * nh * nw];
    for kt in 0..nt {
        for kh in 0..nh {
            for kw in 0..nw {
                let mut acc = Complex::new(0.0f64, 0.0);
                for t in 0..nt {
                    for h in 0..nh {
                        for w in 0..nw {
                            let phase = tau
                                * (kt as f64 * t as f64 / nt as f64
                                    + kh as f64 * h as f64 / nh as f64
                                    + kw as f64 * w as f64 / nw as f64);
                            let x = input[(t * nh + h) * nw + w].to_f64_cast();
                            acc += Complex::new(phase.cos(), phase.sin()) * x;
                        }
                    }
                }
                out[(kt * nh + kh) * nw + kw] = Complex::new(T::cast(acc.re), T::cast(acc.im));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dft3_of(input: &[f64], dims: [usize; 3]) -> Vec<Complex<f64>> {
        let mut data: Vec<Complex<f64>> =
            input.iter().map(|&v| Complex::new(v, 0.0)).collect();
        dft3_inplace(&mut data, dims);
        data
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let dims = [3, 4, 5];
        let mut input = vec![0.0; 60];
        input[0] = 1.0;
        let spec = dft3_of(&input, dims);
        for c in &spec {
            assert!((c.re - 1.0).abs() < 1e-12 && c.im.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_volume_has_zero_spectrum() {
        let spec = dft3_of(&[0.0; 24], [2, 3, 4]);
        assert!(spec.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn matches_direct_oracle_on_random_volumes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dims in [[4, 4, 4], [3, 5, 2], [8, 8, 8]] {
            let n = dims.iter().product::<usize>();
            let input: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = dft3_of(&input, dims);
            let direct = dft3_direct(&input, dims);
            let scale: f64 = direct.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            for (a, b) in fast.iter().zip(&direct) {
                assert!(
                    (a - b).norm() <= 1e-6 * scale.max(1.0),
                    "dims {dims:?}: {a} vs {b}"
                );
            }
        }
    }

    /// Parseval: sum |F|^2 = N * sum |x|^2 for the unnormalized transform.
    #[test]
    fn parseval_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = [5, 6, 7];
        let n: usize = dims.iter().product();
        let input: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = dft3_of(&input, dims);
        let spatial: f64 = input.iter().map(|v| v * v).sum();
        let spectral: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
        let rel = (spectral - n as f64 * spatial).abs() / (n as f64 * spatial);
        assert!(rel < 1e-12, "parseval relative error {rel}");
    }
}
