//! Log-domain joint physical parameter optimization.
//!
//! Trainable variables are natural logs of the physical parameters, clamped
//! into the feasible log range before every recovery (`theta = exp(xi)`).
//! Gradients come from central finite differences in parameter space, map
//! into the log domain via `dL/dxi = dL/dtheta * theta`, get norm-clipped,
//! and feed a decoupled-weight-decay adaptive update. Granularity modes
//! share one vector over the object, one per part (default), or one per
//! particle (simultaneous-perturbation gradients for the ablation).

pub mod adamw;
pub mod fd;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dms::{dms_loss, DmsConfig, DmsError, LossReport};
use crate::params::{ParamBounds, ParamVector, PARAM_COUNT};
use crate::pipeline::render_rollout;
use crate::real::Real;
use crate::scene::SceneConfig;
use crate::video::VideoTensor;

pub use adamw::{clip_global_norm, AdamW};
pub use fd::{fd_gradient, FdResult};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("simulation failed at the initial parameters: {0}")]
    InitialStateFailed(String),
    #[error("step rejected {count} times in a row at iteration {iter}; aborting")]
    RepeatedBlowups { iter: usize, count: usize },
    #[error(transparent)]
    Loss(#[from] DmsError),
}

/// Parameter-sharing granularity of the trainables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One vector shared by every part.
    Object,
    /// One vector per part (the default).
    Part,
    /// One vector per particle; gradients use simultaneous perturbations
    /// because per-coordinate probing is infeasible at this size.
    Particle,
}

/// Per-part physical parameters with their log-domain trainable form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartParams<T: Real> {
    pub parts: Vec<ParamVector<T>>,
}

impl<T: Real> PartParams<T> {
    pub fn new(parts: Vec<ParamVector<T>>) -> Self {
        PartParams { parts }
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }
}

/// Elementwise `ln(max(theta, floor))`.
pub fn log_init<T: Real>(theta: &[T], floor: T) -> Vec<T> {
    theta.iter().map(|&v| v.max(floor).ln()).collect()
}

/// Clamps log-domain variables into `[ln(max(l, floor)), ln(max(u, floor))]`
/// and recovers `theta = exp(xi)`. Returns the recovered values; `xi` is
/// modified in place.
pub fn clip_and_recover<T: Real>(
    xi: &mut [T],
    lower: &[T],
    upper: &[T],
    floor: T,
) -> Vec<T> {
    debug_assert_eq!(xi.len(), lower.len());
    debug_assert_eq!(xi.len(), upper.len());
    let mut theta = Vec::with_capacity(xi.len());
    for j in 0..xi.len() {
        let lo = lower[j].max(floor).ln();
        let hi = upper[j].max(floor).ln();
        xi[j] = xi[j].max(lo).min(hi);
        theta.push(xi[j].exp());
    }
    theta
}

/// Chain rule into the log domain: `dL/dxi = dL/dtheta * theta`, elementwise.
pub fn grad_to_log<T: Real>(grad_theta: &[T], theta: &[T]) -> Vec<T> {
    grad_theta
        .iter()
        .zip(theta)
        .map(|(&g, &t)| g * t)
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeOptions<T: Real> {
    pub iterations: usize,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub weight_decay: T,
    pub grad_clip: T,
    /// Relative finite-difference step.
    pub fd_step: T,
    pub granularity: Granularity,
    /// Which of the six parameters are trainable; frozen ones keep their
    /// initial values. Order matches `ParamIndex`.
    pub trainable: [bool; PARAM_COUNT],
    pub dms: DmsConfig<T>,
    /// Consecutive rejected steps tolerated before aborting.
    pub blowup_limit: usize,
    /// Simultaneous-perturbation sample pairs (particle granularity only).
    pub spsa_samples: usize,
    /// Seed for the simultaneous-perturbation directions.
    pub seed: u64,
}

impl<T: Real> Default for OptimizeOptions<T> {
    fn default() -> Self {
        OptimizeOptions {
            iterations: 150,
            learning_rate: T::cast(0.05),
            beta1: T::cast(0.9),
            beta2: T::cast(0.999),
            weight_decay: T::zero(),
            grad_clip: T::one(),
            fd_step: T::cast(0.05),
            granularity: Granularity::Part,
            trainable: [true; PARAM_COUNT],
            dms: DmsConfig::default(),
            blowup_limit: 8,
            spsa_samples: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord<T: Real> {
    pub iter: usize,
    /// Absent when the step was rejected before the loss could be evaluated.
    pub losses: Option<LossReport<T>>,
    pub parts: Vec<ParamVector<T>>,
    pub lr_scale: T,
    pub rejected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeReport<T: Real> {
    /// Best parameters by total loss, reduced to one vector per part
    /// (particle granularity reduces by per-part geometric mean).
    pub best_parts: Vec<ParamVector<T>>,
    pub best_losses: Option<LossReport<T>>,
    pub initial_losses: Option<LossReport<T>>,
    pub trace: Vec<IterationRecord<T>>,
    pub warnings: Vec<String>,
    pub loss_evaluations: usize,
}

/// Index layout of the reduced trainable vector.
struct Layout {
    /// `(group, param_j)` per reduced coordinate.
    entries: Vec<(usize, usize)>,
    groups: usize,
}

impl Layout {
    fn build(groups: usize, trainable: &[bool; PARAM_COUNT]) -> Self {
        let mut entries = Vec::new();
        for g in 0..groups {
            for (j, &on) in trainable.iter().enumerate() {
                if on {
                    entries.push((g, j));
                }
            }
        }
        Layout { entries, groups }
    }

    /// Expands reduced values over the per-group base vectors.
    fn expand<T: Real>(&self, reduced: &[T], base: &[ParamVector<T>]) -> Vec<ParamVector<T>> {
        debug_assert_eq!(base.len(), self.groups);
        let mut out = base.to_vec();
        for (k, &(g, j)) in self.entries.iter().enumerate() {
            out[g].set(j, reduced[k]);
        }
        out
    }

    fn reduce<T: Real>(&self, parts: &[ParamVector<T>]) -> Vec<T> {
        self.entries.iter().map(|&(g, j)| parts[g].get(j)).collect()
    }
}

fn geometric_mean_by_label<T: Real>(
    per_group: &[ParamVector<T>],
    labels: &[u32],
    part_count: usize,
) -> Vec<ParamVector<T>> {
    let mut acc = vec![[T::zero(); PARAM_COUNT]; part_count];
    let mut counts = vec![T::zero(); part_count];
    for (vec, &lbl) in per_group.iter().zip(labels) {
        let arr = vec.to_array();
        for j in 0..PARAM_COUNT {
            acc[lbl as usize][j] += arr[j].ln();
        }
        counts[lbl as usize] += T::one();
    }
    acc.iter()
        .zip(&counts)
        .map(|(sums, &c)| {
            let mut arr = [T::zero(); PARAM_COUNT];
            for j in 0..PARAM_COUNT {
                arr[j] = (sums[j] / c).exp();
            }
            ParamVector::from_array(arr)
        })
        .collect()
}

/// Minimizes the dual-domain loss of the rendered rollout against the
/// reference video, starting from `theta_init` (one vector per part).
pub fn optimize<T: Real, const D: usize>(
    cfg: &SceneConfig<T, D>,
    reference: &VideoTensor<T>,
    theta_init: &PartParams<T>,
    bounds: &ParamBounds<T>,
    opts: &OptimizeOptions<T>,
) -> Result<OptimizeReport<T>, OptimError> {
    bounds.validate().map_err(OptimError::BadConfig)?;
    if theta_init.part_count() != cfg.parts.len() {
        return Err(OptimError::BadConfig(format!(
            "{} init vectors for {} parts",
            theta_init.part_count(),
            cfg.parts.len()
        )));
    }
    if reference.len() < 2 {
        return Err(OptimError::BadConfig("reference needs >= 2 frames".into()));
    }
    if !opts.trainable.iter().any(|&t| t) {
        return Err(OptimError::BadConfig("no trainable parameters".into()));
    }

    // Granularity decides the evaluation scene and the trainable groups.
    let particle_cfg;
    let particle_labels: Vec<u32>;
    let (eval_cfg, groups, base_parts): (&SceneConfig<T, D>, usize, Vec<ParamVector<T>>) =
        match opts.granularity {
            Granularity::Part => (cfg, cfg.parts.len(), theta_init.parts.clone()),
            Granularity::Object => {
                // Single shared vector; differing per-part inits collapse by
                // geometric mean.
                let labels: Vec<u32> = (0..theta_init.part_count()).map(|_| 0).collect();
                let merged = geometric_mean_by_label(&theta_init.parts, &labels, 1);
                (cfg, 1, merged)
            }
            Granularity::Particle => {
                particle_labels = cfg.particles.iter().map(|p| p.part).collect();
                particle_cfg = expand_per_particle(cfg);
                let base = particle_labels
                    .iter()
                    .map(|&lbl| theta_init.parts[lbl as usize].clone())
                    .collect();
                (&particle_cfg, cfg.particles.len(), base)
            }
        };

    let layout = Layout::build(groups, &opts.trainable);
    let dim = layout.entries.len();
    let lower: Vec<T> = layout.entries.iter().map(|&(_, j)| bounds.lower[j]).collect();
    let upper: Vec<T> = layout.entries.iter().map(|&(_, j)| bounds.upper[j]).collect();

    let frames = reference.len();
    let eval_count = std::sync::atomic::AtomicUsize::new(0);
    // Object granularity trains one shared vector; the scene still wants one
    // parameter vector per part.
    let eval = |parts: &[ParamVector<T>]| -> Result<LossReport<T>, String> {
        eval_count.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let replicated;
        let scene_params: &[ParamVector<T>] = match opts.granularity {
            Granularity::Object => {
                replicated = vec![parts[0]; eval_cfg.parts.len()];
                &replicated
            }
            _ => parts,
        };
        let (_, video) =
            render_rollout(eval_cfg, scene_params, frames).map_err(|e| e.to_string())?;
        dms_loss(&video, reference, &opts.dms).map_err(|e| e.to_string())
    };
    let eval_reduced = |reduced: &[T]| -> Result<T, String> {
        let parts = layout.expand(reduced, &base_parts);
        eval(&parts).map(|r| r.total)
    };

    let summarize = |per_group: &[ParamVector<T>]| -> Vec<ParamVector<T>> {
        match opts.granularity {
            Granularity::Part => per_group.to_vec(),
            Granularity::Object => vec![per_group[0].clone(); cfg.parts.len()],
            Granularity::Particle => {
                geometric_mean_by_label(per_group, &particle_labels_of(cfg), cfg.parts.len())
            }
        }
    };

    let mut xi = log_init(&layout.reduce(&base_parts), bounds.floor);
    let mut adam = AdamW::new(
        dim,
        opts.learning_rate,
        (opts.beta1, opts.beta2),
        opts.weight_decay,
    );
    let mut spsa_rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut trace: Vec<IterationRecord<T>> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut best: Option<(T, LossReport<T>, Vec<ParamVector<T>>)> = None;
    let mut initial_losses = None;
    // Last applied step, for rejection: (xi before, adam snapshot, gradient).
    let mut last_step: Option<(Vec<T>, (Vec<T>, Vec<T>, u64), Vec<T>)> = None;
    let mut reject_streak = 0usize;
    let mut lr_scale = T::one();

    let record_best =
        |theta_red: &[T], report: &LossReport<T>, best: &mut Option<(T, LossReport<T>, Vec<ParamVector<T>>)>| {
            let parts = layout.expand(theta_red, &base_parts);
            match best {
                Some((b, _, _)) if report.total >= *b => {}
                _ => *best = Some((report.total, *report, parts)),
            }
        };

    let mut iter = 0usize;
    while iter < opts.iterations {
        let theta = clip_and_recover(&mut xi, &lower, &upper, bounds.floor);
        match eval(&layout.expand(&theta, &base_parts)) {
            Ok(report) => {
                if initial_losses.is_none() {
                    initial_losses = Some(report);
                }
                record_best(&theta, &report, &mut best);
                trace.push(IterationRecord {
                    iter,
                    losses: Some(report),
                    parts: summarize(&layout.expand(&theta, &base_parts)),
                    lr_scale,
                    rejected: false,
                });
                reject_streak = 0;
                lr_scale = T::one();

                let grad_xi = match opts.granularity {
                    Granularity::Particle => spsa_log_gradient(
                        &eval_reduced,
                        &xi,
                        report.total,
                        opts.fd_step,
                        &layout,
                        opts.spsa_samples,
                        &mut spsa_rng,
                        &mut warnings,
                    ),
                    _ => {
                        let fd = fd_gradient(
                            &eval_reduced,
                            &theta,
                            report.total,
                            opts.fd_step,
                            &lower,
                            &upper,
                        );
                        warnings.extend(fd.warnings);
                        grad_to_log(&fd.gradient, &theta)
                    }
                };
                let mut grad = grad_xi;
                clip_global_norm(&mut grad, opts.grad_clip);
                let snapshot = (xi.clone(), adam.snapshot(), grad.clone());
                adam.step_scaled(&mut xi, &grad, lr_scale);
                last_step = Some(snapshot);
            }
            Err(e) => {
                let Some((xi_prev, adam_snap, grad)) = last_step.as_ref() else {
                    return Err(OptimError::InitialStateFailed(e));
                };
                reject_streak += 1;
                warnings.push(format!(
                    "iteration {iter}: simulation failed ({e}); step rejected, retrying at half rate"
                ));
                if reject_streak > opts.blowup_limit {
                    return Err(OptimError::RepeatedBlowups {
                        iter,
                        count: reject_streak,
                    });
                }
                trace.push(IterationRecord {
                    iter,
                    losses: None,
                    parts: summarize(&layout.expand(
                        &xi.iter().map(|v| v.exp()).collect::<Vec<_>>(),
                        &base_parts,
                    )),
                    lr_scale,
                    rejected: true,
                });
                // Rewind and retry the same gradient at half the rate.
                xi.copy_from_slice(xi_prev);
                adam.restore(adam_snap);
                lr_scale = lr_scale * T::cast(0.5);
                let grad = grad.clone();
                adam.step_scaled(&mut xi, &grad, lr_scale);
            }
        }
        iter += 1;
    }

    // Evaluate the final point so the last step can still win.
    if opts.iterations > 0 {
        let theta = clip_and_recover(&mut xi, &lower, &upper, bounds.floor);
        if let Ok(report) = eval(&layout.expand(&theta, &base_parts)) {
            record_best(&theta, &report, &mut best);
            trace.push(IterationRecord {
                iter: opts.iterations,
                losses: Some(report),
                parts: summarize(&layout.expand(&theta, &base_parts)),
                lr_scale,
                rejected: false,
            });
        }
    }

    let (best_losses, best_parts) = match best {
        Some((_, report, parts)) => (Some(report), summarize(&parts)),
        None => (None, theta_init.parts.clone()),
    };
    Ok(OptimizeReport {
        best_parts,
        best_losses,
        initial_losses,
        trace,
        warnings,
        loss_evaluations: eval_count.load(std::sync::atomic::Ordering::Relaxed),
    })
}

fn particle_labels_of<T: Real, const D: usize>(cfg: &SceneConfig<T, D>) -> Vec<u32> {
    cfg.particles.iter().map(|p| p.part).collect()
}

/// Per-particle evaluation scene: every particle becomes its own part,
/// inheriting color and material mode from its original part.
fn expand_per_particle<T: Real, const D: usize>(cfg: &SceneConfig<T, D>) -> SceneConfig<T, D> {
    let mut out = cfg.clone();
    out.parts = cfg
        .particles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let src = &cfg.parts[p.part as usize];
            crate::scene::PartDef {
                name: format!("{}#{}", src.name, i),
                color: src.color,
                material: src.material,
                params: src.params.clone(),
            }
        })
        .collect();
    for (i, p) in out.particles.iter_mut().enumerate() {
        p.part = i as u32;
    }
    out
}

/// Simultaneous-perturbation gradient in the log domain for per-particle
/// trainables: a shared finite-difference component along each parameter's
/// uniform direction plus zero-column-mean random fluctuation samples. The
/// mean over particles therefore equals the shared component exactly, which
/// keeps this mode consistent with part-level gradients on degenerate input.
#[allow(clippy::too_many_arguments)]
fn spsa_log_gradient<T: Real>(
    eval_reduced: &(impl Fn(&[T]) -> Result<T, String> + Sync),
    xi: &[T],
    base_loss: T,
    step: T,
    layout: &Layout,
    samples: usize,
    rng: &mut ChaCha8Rng,
    warnings: &mut Vec<String>,
) -> Vec<T> {
    let dim = xi.len();
    let groups = layout.groups;
    let params: Vec<usize> = {
        let mut seen = Vec::new();
        for &(_, j) in &layout.entries {
            if !seen.contains(&j) {
                seen.push(j);
            }
        }
        seen
    };
    let theta: Vec<T> = xi.iter().map(|v| v.exp()).collect();
    let mut grad = vec![T::zero(); dim];

    // Shared component: all particles' parameter j nudged together.
    for &j in &params {
        let mut plus = xi.to_vec();
        let mut minus = xi.to_vec();
        for (k, &(_, pj)) in layout.entries.iter().enumerate() {
            if pj == j {
                plus[k] += step;
                minus[k] -= step;
            }
        }
        let to_theta = |v: &[T]| -> Vec<T> { v.iter().map(|x| x.exp()).collect() };
        let lp = eval_reduced(&to_theta(&plus));
        let lm = eval_reduced(&to_theta(&minus));
        let directional = match (lp, lm) {
            (Ok(a), Ok(b)) => (a - b) / (T::cast(2.0) * step),
            (Ok(a), Err(_)) => (a - base_loss) / step,
            (Err(_), Ok(b)) => (base_loss - b) / step,
            (Err(e1), Err(e2)) => {
                warnings.push(format!(
                    "shared probe for parameter {j} failed on both sides ({e1}; {e2})"
                ));
                T::zero()
            }
        };
        let per_particle = directional / T::from_usize_cast(groups);
        for (k, &(_, pj)) in layout.entries.iter().enumerate() {
            if pj == j {
                grad[k] = per_particle;
            }
        }
    }

    // Fluctuation component: centered Rademacher directions.
    for _ in 0..samples {
        let mut delta: Vec<T> = (0..dim)
            .map(|_| {
                if rng.random::<bool>() {
                    T::one()
                } else {
                    -T::one()
                }
            })
            .collect();
        // Remove each parameter's column mean so the shared component stays
        // untouched.
        for &j in &params {
            let idx: Vec<usize> = layout
                .entries
                .iter()
                .enumerate()
                .filter(|(_, &(_, pj))| pj == j)
                .map(|(k, _)| k)
                .collect();
            let mean = idx.iter().map(|&k| delta[k]).fold(T::zero(), |a, b| a + b)
                / T::from_usize_cast(idx.len());
            for &k in &idx {
                delta[k] -= mean;
            }
        }
        let to_theta = |sign: T| -> Vec<T> {
            xi.iter()
                .zip(&delta)
                .map(|(&x, &d)| (x + sign * step * d).exp())
                .collect()
        };
        let lp = eval_reduced(&to_theta(T::one()));
        let lm = eval_reduced(&to_theta(-T::one()));
        if let (Ok(a), Ok(b)) = (lp, lm) {
            let directional = (a - b) / (T::cast(2.0) * step);
            let scale = directional / T::from_usize_cast(samples);
            for k in 0..dim {
                grad[k] += scale * delta[k];
            }
        } else {
            warnings.push("fluctuation probe failed; sample skipped".into());
        }
    }
    let _ = theta;
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;
    use crate::scene::{
        CameraSpec, GridSpec, MaterialMode, ParticleInit, SceneConfig, SimSpec, SCHEMA_VERSION,
    };

    fn tiny_scene() -> SceneConfig<f64, 2> {
        // A small cluster hanging from its anchored top row and kicked
        // sideways: both stiffness and density shape the motion.
        let mut particles = Vec::new();
        let mut anchors = Vec::new();
        for i in 0..4 {
            for j in 0..6 {
                if j == 5 {
                    anchors.push(particles.len());
                }
                particles.push(ParticleInit {
                    position: Vector([0.45 + 0.016 * i as f64, 0.40 + 0.016 * j as f64]),
                    velocity: Vector([0.3, 0.0]),
                    part: 0,
                });
            }
        }
        SceneConfig {
            schema_version: SCHEMA_VERSION,
            grid: GridSpec {
                resolution: [32, 32],
                cell_size: 1.0 / 32.0,
                origin: Vector::zero(),
            },
            particles,
            parts: vec![crate::scene::PartDef {
                name: "blob".into(),
                color: [1.0; 3],
                material: MaterialMode::VonMises,
                params: Some(ParamVector {
                    young_modulus: 2e4,
                    poisson_ratio: 0.3,
                    yield_stress: 1e6,
                    plastic_viscosity: 10.0,
                    friction_angle: 30.0,
                    density: 800.0,
                }),
            }],
            sim: SimSpec {
                dt: 1e-4,
                frames: 3,
                substeps: 30,
                gravity: Vector([0.0, -9.8]),
                anchors,
                particle_volume: None,
            },
            camera: CameraSpec {
                view_axis: 2,
                width: 32,
                height: 32,
                scale: 120.0,
                center: [0.48, 0.44],
                splat_radius: 1.5,
            },
            boundaries: vec![],
        }
    }

    fn mask_e_density() -> [bool; PARAM_COUNT] {
        let mut m = [false; PARAM_COUNT];
        m[0] = true;
        m[5] = true;
        m
    }

    #[test]
    fn zero_iteration_budget_returns_init_unchanged() {
        let cfg = tiny_scene();
        let truth = cfg.truth_params().unwrap();
        let (_, reference) = crate::pipeline::render_rollout(&cfg, &truth, 3).unwrap();
        let mut init = truth.clone();
        init[0].young_modulus *= 2.0;
        let opts = OptimizeOptions {
            iterations: 0,
            ..OptimizeOptions::default()
        };
        let report = optimize(
            &cfg,
            &reference,
            &PartParams::new(init.clone()),
            &ParamBounds::default(),
            &opts,
        )
        .unwrap();
        assert_eq!(report.best_parts[0], init[0]);
        assert!(report.trace.is_empty());
        assert_eq!(report.loss_evaluations, 0);
    }

    #[test]
    fn best_so_far_is_non_increasing_and_stays_in_bounds() {
        let cfg = tiny_scene();
        let truth = cfg.truth_params().unwrap();
        let (_, reference) = crate::pipeline::render_rollout(&cfg, &truth, 3).unwrap();
        let mut init = truth.clone();
        init[0].young_modulus *= 4.0;
        init[0].density /= 3.0;
        let opts = OptimizeOptions {
            iterations: 5,
            trainable: mask_e_density(),
            fd_step: 0.1,
            ..OptimizeOptions::default()
        };
        let bounds = ParamBounds::default();
        let report = optimize(
            &cfg,
            &reference,
            &PartParams::new(init),
            &bounds,
            &opts,
        )
        .unwrap();
        let mut best = f64::INFINITY;
        let mut bests = Vec::new();
        for rec in &report.trace {
            if let Some(l) = rec.losses {
                best = best.min(l.total);
            }
            bests.push(best);
            for p in &rec.parts {
                assert!(bounds.contains(p), "trace left the bounds: {p:?}");
            }
        }
        for w in bests.windows(2) {
            assert!(w[1] <= w[0], "best-so-far must be non-increasing: {bests:?}");
        }
        assert_eq!(report.best_losses.unwrap().total, best);
    }

    /// Degenerate-input consistency: with uniform labels, the mean over
    /// particles of the particle-level gradient points the same way as the
    /// part-level gradient of the single shared part.
    #[test]
    fn particle_gradient_mean_matches_part_gradient_direction() {
        let cfg = tiny_scene();
        let truth = cfg.truth_params().unwrap();
        let (_, reference) = crate::pipeline::render_rollout(&cfg, &truth, 3).unwrap();
        let mut init = truth.clone();
        init[0].young_modulus *= 3.0;
        init[0].density *= 2.0;
        let bounds = ParamBounds::default();
        let mask = mask_e_density();
        let step = 0.01;
        let dms = crate::dms::DmsConfig::default();

        // Part-level gradient (one part): central FD in theta, chain rule.
        let part_layout = Layout::build(1, &mask);
        let base = init.clone();
        let eval_part = |reduced: &[f64]| -> Result<f64, String> {
            let parts = part_layout.expand(reduced, &base);
            let (_, video) =
                crate::pipeline::render_rollout(&cfg, &parts, 3).map_err(|e| e.to_string())?;
            crate::dms::dms_loss(&video, &reference, &dms)
                .map(|r| r.total)
                .map_err(|e| e.to_string())
        };
        let theta_red = part_layout.reduce(&init);
        let base_loss = eval_part(&theta_red).unwrap();
        let lower: Vec<f64> = part_layout.entries.iter().map(|&(_, j)| bounds.lower[j]).collect();
        let upper: Vec<f64> = part_layout.entries.iter().map(|&(_, j)| bounds.upper[j]).collect();
        let fd = fd_gradient(&eval_part, &theta_red, base_loss, step, &lower, &upper);
        let g_part = grad_to_log(&fd.gradient, &theta_red);

        // Particle-level gradient via the simultaneous-perturbation engine.
        let particle_cfg = expand_per_particle(&cfg);
        let groups = cfg.particles.len();
        let p_layout = Layout::build(groups, &mask);
        let p_base: Vec<ParamVector<f64>> = (0..groups).map(|_| init[0].clone()).collect();
        let eval_particle = |reduced: &[f64]| -> Result<f64, String> {
            let parts = p_layout.expand(reduced, &p_base);
            let (_, video) = crate::pipeline::render_rollout(&particle_cfg, &parts, 3)
                .map_err(|e| e.to_string())?;
            crate::dms::dms_loss(&video, &reference, &dms)
                .map(|r| r.total)
                .map_err(|e| e.to_string())
        };
        let xi: Vec<f64> = p_layout.reduce(&p_base).iter().map(|v| v.ln()).collect();
        let mut warnings = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g_particle = spsa_log_gradient(
            &eval_particle,
            &xi,
            base_loss,
            step,
            &p_layout,
            2,
            &mut rng,
            &mut warnings,
        );
        // Mean per parameter over particles.
        let mut mean = vec![0.0f64; 2];
        for (k, &(_, j)) in p_layout.entries.iter().enumerate() {
            let slot = if j == 0 { 0 } else { 1 };
            mean[slot] += g_particle[k] / groups as f64;
        }
        let dot = mean[0] * g_part[0] + mean[1] * g_part[1];
        let norms = (mean[0].powi(2) + mean[1].powi(2)).sqrt()
            * (g_part[0].powi(2) + g_part[1].powi(2)).sqrt();
        assert!(norms > 0.0, "gradients must be nonzero");
        let cosine = dot / norms;
        assert!(
            cosine > 0.99,
            "particle-level mean direction must match part-level: cos = {cosine}, mean {mean:?}, part {g_part:?}"
        );
    }

    #[test]
    fn object_granularity_runs_on_multi_part_scenes() {
        let mut cfg = tiny_scene();
        // Split the cluster into two labels sharing one material definition.
        cfg.parts.push(cfg.parts[0].clone());
        cfg.parts[1].name = "upper".into();
        for (i, p) in cfg.particles.iter_mut().enumerate() {
            if i % 2 == 0 {
                p.part = 1;
            }
        }
        let truth = cfg.truth_params().unwrap();
        let (_, reference) = crate::pipeline::render_rollout(&cfg, &truth, 3).unwrap();
        let mut init = truth.clone();
        init[0].young_modulus *= 2.0;
        init[1].young_modulus /= 2.0;
        let opts = OptimizeOptions {
            iterations: 1,
            granularity: Granularity::Object,
            trainable: mask_e_density(),
            ..OptimizeOptions::default()
        };
        let report = optimize(
            &cfg,
            &reference,
            &PartParams::new(init),
            &ParamBounds::default(),
            &opts,
        )
        .unwrap();
        assert_eq!(report.best_parts.len(), 2);
        assert_eq!(
            report.best_parts[0], report.best_parts[1],
            "object mode keeps parts identical"
        );
        // The shared start is the geometric mean of the per-part inits.
        let expect = (truth[0].young_modulus * 2.0 * truth[0].young_modulus / 2.0).sqrt();
        let got = report.trace[0].parts[0].young_modulus;
        assert!((got - expect).abs() < 1e-9 * expect, "{got} vs {expect}");
    }

    #[test]
    fn initial_blowup_is_a_clean_error() {
        let mut cfg = tiny_scene();
        cfg.sim.dt = 5e-3; // grossly unstable for a stiff candidate
        let truth = cfg.truth_params().unwrap();
        let (_, reference) = crate::pipeline::render_rollout(&tiny_scene(), &truth, 3).unwrap();
        let mut init = truth;
        init[0].young_modulus = 1e7;
        let opts = OptimizeOptions {
            iterations: 3,
            ..OptimizeOptions::default()
        };
        match optimize(
            &cfg,
            &reference,
            &PartParams::new(init),
            &ParamBounds::default(),
            &opts,
        ) {
            Err(OptimError::InitialStateFailed(_)) => {}
            other => panic!("expected InitialStateFailed, got {other:?}"),
        }
    }

    #[test]
    fn log_init_matches_formula() {
        let xi = log_init(&[1000.0f64, 0.0, 2.0], 1e-8);
        assert!((xi[0] - 1000.0f64.ln()).abs() < 1e-12);
        assert!((xi[0] - 6.9078).abs() < 1e-4);
        assert!((xi[1] - 1e-8f64.ln()).abs() < 1e-12, "floor engages at zero");
        // Round trip above the floor.
        assert!((xi[2].exp() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn clip_and_recover_clamps_both_ends() {
        let lower = [1.0, 1.0, 1.0];
        let upper = [100.0, 100.0, 100.0];
        let mut xi = vec![0.0f64, 10.0, 3.0];
        let theta = clip_and_recover(&mut xi, &lower, &upper, 1e-8);
        assert!((theta[0] - 1.0).abs() < 1e-12, "below range clamps to lower");
        assert!((theta[1] - 100.0).abs() < 1e-10, "above range clamps to upper");
        assert!((theta[2] - 3.0f64.exp()).abs() < 1e-12, "inside: untouched");
        assert!((xi[0] - 0.0f64).abs() < 1e-12 || xi[0] == 1.0f64.ln());
    }

    #[test]
    fn grad_to_log_is_elementwise_product() {
        assert_eq!(grad_to_log(&[2.0f64], &[5.0]), vec![10.0]);
        assert_eq!(grad_to_log(&[0.0f64, 3.0], &[7.0, 2.0]), vec![0.0, 6.0]);
    }

    /// Finite-difference oracle in xi on an analytic loss: the chain rule
    /// product must match d/dxi L(exp(xi)) within 1e-4 relative.
    #[test]
    fn grad_to_log_matches_fd_oracle() {
        let loss = |theta: f64| (theta - 3.0).powi(2) + 0.5 * theta;
        let dloss = |theta: f64| 2.0 * (theta - 3.0) + 0.5;
        for &theta in &[0.5f64, 2.0, 7.3] {
            let xi: f64 = theta.ln();
            let analytic = grad_to_log(&[dloss(theta)], &[theta])[0];
            let h = 1e-6;
            let fd = (loss((xi + h).exp()) - loss((xi - h).exp())) / (2.0 * h);
            let rel = ((analytic - fd) / fd).abs();
            assert!(rel < 1e-4, "theta {theta}: analytic {analytic}, fd {fd}");
        }
    }

    #[test]
    fn layout_expand_respects_mask() {
        let mut mask = [false; PARAM_COUNT];
        mask[0] = true;
        mask[5] = true;
        let layout = Layout::build(2, &mask);
        assert_eq!(layout.entries.len(), 4);
        let base = vec![
            ParamVector::from_array([1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]),
            ParamVector::from_array([10.0, 20.0, 30.0, 40.0, 50.0, 60.0]),
        ];
        let reduced = layout.reduce(&base);
        assert_eq!(reduced, vec![1.0, 6.0, 10.0, 60.0]);
        let expanded = layout.expand(&[1.5, 6.5, 10.5, 60.5], &base);
        assert_eq!(expanded[0].young_modulus, 1.5);
        assert_eq!(expanded[0].density, 6.5);
        assert_eq!(expanded[0].poisson_ratio, 2.0, "frozen stays at base");
        assert_eq!(expanded[1].density, 60.5);
    }

    #[test]
    fn geometric_mean_reduction() {
        let vecs = vec![
            ParamVector::from_array([1.0f64; 6]),
            ParamVector::from_array([4.0f64; 6]),
            ParamVector::from_array([9.0f64; 6]),
        ];
        let labels = vec![0u32, 0, 1];
        let reduced = geometric_mean_by_label(&vecs, &labels, 2);
        assert!((reduced[0].young_modulus - 2.0).abs() < 1e-12);
        assert!((reduced[1].young_modulus - 9.0).abs() < 1e-12);
    }
}
