//! Central-difference gradient engine over positive parameter vectors.
//!
//! Probes use a multiplicative step `h * theta_j`, clipped into the feasible
//! box. At a bound or when a probe's loss evaluation fails (for instance a
//! diverging simulation), that coordinate falls back to a one-sided
//! difference against the base loss; if both sides fail the coordinate
//! reports a zero gradient with a warning.

use rayon::prelude::*;

use crate::real::Real;

#[derive(Debug, Clone)]
pub struct FdResult<T> {
    pub gradient: Vec<T>,
    pub warnings: Vec<String>,
    /// Loss evaluations performed.
    pub evaluations: usize,
}

enum Probe<T> {
    /// Loss value at the probe point and the probe's coordinate value.
    Value(T, T),
    /// Step was clipped to nothing (coordinate pinned at a bound).
    Pinned,
    Failed(String),
}

/// Central-difference gradient of `loss_fn` at `theta`.
///
/// `base_loss` is the already-known loss at `theta` (used by one-sided
/// fallbacks). Probes are independent and evaluate in parallel; assembly is
/// indexed, so results match a sequential run bitwise.
pub fn fd_gradient<T, F>(
    loss_fn: F,
    theta: &[T],
    base_loss: T,
    rel_step: T,
    lower: &[T],
    upper: &[T],
) -> FdResult<T>
where
    T: Real,
    F: Fn(&[T]) -> Result<T, String> + Sync,
{
    assert!(rel_step > T::zero(), "relative step must be positive");
    assert_eq!(theta.len(), lower.len());
    assert_eq!(theta.len(), upper.len());
    let dim = theta.len();

    let probe = |j: usize, up: bool| -> Probe<T> {
        let x = theta[j];
        let step = rel_step * x.abs().max(T::min_positive_value());
        let target = if up {
            (x + step).min(upper[j])
        } else {
            (x - step).max(lower[j])
        };
        if target == x {
            return Probe::Pinned;
        }
        let mut point = theta.to_vec();
        point[j] = target;
        match loss_fn(&point) {
            Ok(l) => Probe::Value(l, target),
            Err(e) => Probe::Failed(e),
        }
    };

    let probes: Vec<(Probe<T>, Probe<T>)> = (0..dim)
        .into_par_iter()
        .map(|j| (probe(j, true), probe(j, false)))
        .collect();

    let mut gradient = vec![T::zero(); dim];
    let mut warnings = Vec::new();
    let mut evaluations = 0usize;
    for (j, (plus, minus)) in probes.into_iter().enumerate() {
        if !matches!(plus, Probe::Pinned) {
            evaluations += 1;
        }
        if !matches!(minus, Probe::Pinned) {
            evaluations += 1;
        }
        gradient[j] = match (plus, minus) {
            (Probe::Value(lp, xp), Probe::Value(lm, xm)) => (lp - lm) / (xp - xm),
            (Probe::Value(lp, xp), Probe::Pinned) | (Probe::Value(lp, xp), Probe::Failed(_)) => {
                (lp - base_loss) / (xp - theta[j])
            }
            (Probe::Pinned, Probe::Value(lm, xm)) | (Probe::Failed(_), Probe::Value(lm, xm)) => {
                (base_loss - lm) / (theta[j] - xm)
            }
            (Probe::Failed(e1), Probe::Failed(e2)) => {
                warnings.push(format!(
                    "coordinate {j}: both probes failed ({e1}; {e2}); gradient set to 0"
                ));
                T::zero()
            }
            (Probe::Pinned, Probe::Pinned) => {
                warnings.push(format!(
                    "coordinate {j}: pinned on both sides; gradient set to 0"
                ));
                T::zero()
            }
            (Probe::Pinned, Probe::Failed(e)) | (Probe::Failed(e), Probe::Pinned) => {
                warnings.push(format!(
                    "coordinate {j}: one side pinned, the other failed ({e}); gradient set to 0"
                ));
                T::zero()
            }
        };
    }
    FdResult {
        gradient,
        warnings,
        evaluations,
    }
}
