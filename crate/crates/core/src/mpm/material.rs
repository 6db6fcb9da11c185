//! Constitutive model: fixed-corotated hyperelasticity with a viscoplastic
//! von Mises return map in singular-value space, plus an optional
//! Drucker-Prager clamp for granular parts.

use crate::linalg::Matrix;
use crate::params::ParamVector;
use crate::real::Real;
use crate::scene::MaterialMode;

/// Yield stresses at or above this value (the documented upper bound of the
/// yield-stress range) disable the return map entirely, giving the purely
/// elastic regime.
pub const YIELD_STRESS_DISABLE_AT: f64 = 1e6;

#[derive(Debug, Clone, Copy)]
pub struct MaterialParams<T> {
    pub mu: T,
    pub lambda: T,
    /// Infinite when plasticity is disabled.
    pub yield_stress: T,
    pub viscosity: T,
    pub friction_angle_rad: T,
    pub density: T,
    pub mode: MaterialMode,
}

impl<T: Real> MaterialParams<T> {
    pub fn new(theta: &ParamVector<T>, mode: MaterialMode) -> Result<Self, String> {
        let e = theta.young_modulus;
        let nu = theta.poisson_ratio;
        if e <= T::zero() {
            return Err(format!("young_modulus must be positive, got {e}"));
        }
        if nu >= T::cast(0.5) || nu <= T::cast(-1.0) {
            return Err(format!("poisson_ratio {nu} outside (-1, 0.5)"));
        }
        if theta.density <= T::zero() {
            return Err("density must be positive".into());
        }
        let two = T::cast(2.0);
        let mu = e / (two * (T::one() + nu));
        let lambda = e * nu / ((T::one() + nu) * (T::one() - two * nu));
        let yield_stress = if theta.yield_stress >= T::cast(YIELD_STRESS_DISABLE_AT) {
            T::infinity()
        } else {
            theta.yield_stress
        };
        Ok(MaterialParams {
            mu,
            lambda,
            yield_stress,
            viscosity: theta.plastic_viscosity,
            friction_angle_rad: theta.friction_angle.to_radians(),
            density: theta.density,
            mode,
        })
    }
}

/// Kirchhoff stress of the fixed-corotated model:
/// `tau = 2 mu (F - R) F^T + lambda J (J - 1) I`.
///
/// Caller guarantees `det(F) > 0`; the output is symmetric.
pub fn kirchhoff_stress<T: Real, const D: usize>(
    f: &Matrix<T, D>,
    mat: &MaterialParams<T>,
) -> Matrix<T, D> {
    let j = f.determinant();
    let r = f.polar_rotation();
    let two_mu = T::cast(2.0) * mat.mu;
    let corot = (*f - r) * f.transpose() * two_mu;
    let volumetric = Matrix::identity() * (mat.lambda * j * (j - T::one()));
    corot + volumetric
}

/// Projects a trial deformation gradient back toward the yield surface.
///
/// Works on the Hencky strains (log singular values). The von Mises part
/// relaxes the deviatoric strain at a rate set by the plastic viscosity
/// (capped at full projection); granular parts additionally apply the
/// friction-angle cone clamp. Always returns a gradient with positive
/// determinant.
pub fn apply_plasticity<T: Real, const D: usize>(
    f_trial: &Matrix<T, D>,
    mat: &MaterialParams<T>,
    dt: T,
) -> Matrix<T, D> {
    let elastic = mat.yield_stress == T::infinity();
    if elastic && mat.mode == MaterialMode::VonMises {
        return *f_trial;
    }

    let svd = f_trial.svd();
    let mut eps = [T::zero(); D];
    for a in 0..D {
        // det(F) > 0 is a precondition, so all singular values are positive.
        eps[a] = svd.sigma[a].ln();
    }
    let mut changed = false;

    if !elastic {
        let (dev, norm) = deviatoric(&eps);
        let tau_dev_norm = T::cast(2.0) * mat.mu * norm;
        let yield_radius = T::cast(2.0 / 3.0).sqrt() * mat.yield_stress;
        let excess = tau_dev_norm - yield_radius;
        if excess > T::zero() && norm > T::zero() {
            // Viscoplastic relaxation; eta -> 0 recovers the instant return.
            let full = excess / (T::cast(2.0) * mat.mu);
            let viscous = if mat.viscosity > T::zero() {
                dt * excess / mat.viscosity
            } else {
                full
            };
            let dgamma = viscous.min(full);
            let scale = T::one() - dgamma / norm;
            let mean = trace_mean(&eps);
            for a in 0..D {
                eps[a] = mean + dev[a] * scale;
            }
            changed = true;
        }
    }

    if mat.mode == MaterialMode::DruckerPrager {
        let tr: T = eps.iter().copied().fold(T::zero(), |acc, e| acc + e);
        if tr > T::zero() {
            // Expansion: project to the cone tip.
            eps = [T::zero(); D];
            changed = true;
        } else {
            let (dev, norm) = deviatoric(&eps);
            let sin_phi = mat.friction_angle_rad.sin();
            let alpha = T::cast(2.0 / 3.0).sqrt() * T::cast(2.0) * sin_phi
                / (T::cast(3.0) - sin_phi);
            let dim = T::from_usize_cast(D);
            let dgamma =
                norm + tr * alpha * (dim * mat.lambda + T::cast(2.0) * mat.mu)
                    / (T::cast(2.0) * mat.mu);
            if dgamma > T::zero() && norm > T::zero() {
                let scale = T::one() - dgamma / norm;
                let mean = tr / dim;
                for a in 0..D {
                    eps[a] = mean + dev[a] * scale.max(T::zero());
                }
                changed = true;
            }
        }
    }

    if !changed {
        return *f_trial;
    }
    let mut sigma = [T::zero(); D];
    for a in 0..D {
        sigma[a] = eps[a].exp();
    }
    svd.u * Matrix::from_diagonal(&sigma) * svd.v.transpose()
}

fn deviatoric<T: Real, const D: usize>(eps: &[T; D]) -> ([T; D], T) {
    let mean = trace_mean(eps);
    let mut dev = [T::zero(); D];
    let mut norm_sq = T::zero();
    for a in 0..D {
        dev[a] = eps[a] - mean;
        norm_sq += dev[a] * dev[a];
    }
    (dev, norm_sq.sqrt())
}

fn trace_mean<T: Real, const D: usize>(eps: &[T; D]) -> T {
    let tr: T = eps.iter().copied().fold(T::zero(), |acc, e| acc + e);
    tr / T::from_usize_cast(D)
}
