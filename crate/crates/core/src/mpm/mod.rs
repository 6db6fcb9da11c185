//! Explicit MLS-MPM forward simulator.
//!
//! One substep is particle-to-grid transfer with fused stress contribution,
//! a symplectic-Euler grid update with gravity and boundary conditions, and
//! grid-to-particle transfer with APIC affine velocity reconstruction and a
//! quadratic B-spline kernel. Substeps are strictly sequential and iterate
//! particles and nodes in index order, so rollouts are bitwise reproducible.

pub mod material;
pub mod trajectory;

use thiserror::Error;

use crate::linalg::{Matrix, Vector};
use crate::params::ParamVector;
use crate::real::Real;
use crate::scene::{BoundaryKind, SceneConfig};

pub use material::{apply_plasticity, kirchhoff_stress, MaterialParams};
pub use trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid material for part {part}: {reason}")]
    BadMaterial { part: usize, reason: String },
    #[error("deformation gradient inverted (det <= 0) on particle {particle} at substep {substep}")]
    Inverted { particle: usize, substep: u64 },
    #[error("non-finite state on particle {particle} at substep {substep}")]
    NonFinite { particle: usize, substep: u64 },
}

#[derive(Debug, Clone)]
pub struct ParticleState<T, const D: usize> {
    pub position: Vector<T, D>,
    pub velocity: Vector<T, D>,
    pub def_grad: Matrix<T, D>,
    pub affine: Matrix<T, D>,
    pub mass: T,
    pub volume: T,
    pub part: u32,
}

#[derive(Debug, Clone)]
pub struct SimState<T, const D: usize> {
    pub particles: Vec<ParticleState<T, D>>,
    pub substep: u64,
}

/// Scale applied to anchored particles' mass in the grid velocity average.
/// Pinned material acts as if (nearly) infinitely heavy, which makes the
/// anchor region a true clamp; a plain zero-velocity mass contribution lets
/// the surrounding material slide past it at a constant rate.
const ANCHOR_MASS_SCALE: f64 = 1e6;

/// Background grid storage, reused across substeps.
#[derive(Debug)]
pub struct Grid<T, const D: usize> {
    pub node_dims: [usize; D],
    pub momentum: Vec<Vector<T, D>>,
    pub mass: Vec<T>,
    /// Mass contributed by anchored particles only.
    pub anchor_mass: Vec<T>,
}

impl<T: Real, const D: usize> Grid<T, D> {
    pub fn new(node_dims: [usize; D]) -> Self {
        let count = node_dims.iter().product();
        Grid {
            node_dims,
            momentum: vec![Vector::zero(); count],
            mass: vec![T::zero(); count],
            anchor_mass: vec![T::zero(); count],
        }
    }

    fn clear(&mut self) {
        self.momentum.fill(Vector::zero());
        self.mass.fill(T::zero());
        self.anchor_mass.fill(T::zero());
    }
}

/// Immutable per-rollout context derived from the scene and parameters.
#[derive(Debug)]
pub struct SimContext<T, const D: usize> {
    pub dt: T,
    pub cell_size: T,
    pub inv_h: T,
    pub origin: Vector<T, D>,
    pub node_dims: [usize; D],
    pub strides: [usize; D],
    pub gravity: Vector<T, D>,
    pub materials: Vec<MaterialParams<T>>,
    pub anchored: Vec<bool>,
    /// Per axis: (min-side boundary, max-side boundary), each with margin.
    pub walls: [[Option<(BoundaryKind, usize)>; 2]; D],
    pub safe_lo: Vector<T, D>,
    pub safe_hi: Vector<T, D>,
}

/// Per-substep diagnostics: totals for the conservation checks plus a CFL
/// advisory.
#[derive(Debug, Clone)]
pub struct StepStats<T, const D: usize> {
    /// Total particle mass before the transfer.
    pub particle_mass: T,
    /// Total particle momentum before the transfer.
    pub particle_momentum: Vector<T, D>,
    /// Total grid mass right after particle-to-grid transfer.
    pub grid_mass: T,
    /// Total grid momentum right after particle-to-grid transfer, before
    /// gravity and boundary conditions.
    pub grid_momentum: Vector<T, D>,
    pub max_speed: T,
    /// True when `max_speed * dt` exceeds one cell.
    pub cfl_exceeded: bool,
}

pub fn build_context<T: Real, const D: usize>(
    cfg: &SceneConfig<T, D>,
    params: &[ParamVector<T>],
) -> Result<SimContext<T, D>, SimError> {
    assert_eq!(
        params.len(),
        cfg.parts.len(),
        "one parameter vector per part"
    );
    let mut materials = Vec::with_capacity(params.len());
    for (part, (theta, def)) in params.iter().zip(&cfg.parts).enumerate() {
        let m = MaterialParams::new(theta, def.material)
            .map_err(|reason| SimError::BadMaterial { part, reason })?;
        materials.push(m);
    }
    let h = cfg.grid.cell_size;
    let mut node_dims = [0usize; D];
    for a in 0..D {
        node_dims[a] = cfg.grid.resolution[a] + 1;
    }
    let mut strides = [1usize; D];
    for a in (0..D.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * node_dims[a + 1];
    }
    let mut anchored = vec![false; cfg.particles.len()];
    for &i in &cfg.sim.anchors {
        anchored[i] = true;
    }
    let mut walls: [[Option<(BoundaryKind, usize)>; 2]; D] = [[None; 2]; D];
    for b in &cfg.boundaries {
        let axis = b.plane.axis();
        let side = if b.plane.is_min_side() { 0 } else { 1 };
        walls[axis][side] = Some((b.kind, b.margin));
    }
    let margin = T::cast(1.5) * h + T::cast(1e-9) * h;
    let mut safe_lo = Vector::zero();
    let mut safe_hi = Vector::zero();
    for a in 0..D {
        safe_lo[a] = cfg.grid.origin[a] + margin;
        safe_hi[a] =
            cfg.grid.origin[a] + T::from_usize_cast(cfg.grid.resolution[a]) * h - margin;
    }
    Ok(SimContext {
        dt: cfg.sim.dt,
        cell_size: h,
        inv_h: T::one() / h,
        origin: cfg.grid.origin,
        node_dims,
        strides,
        gravity: cfg.sim.gravity,
        materials,
        anchored,
        walls,
        safe_lo,
        safe_hi,
    })
}

/// Builds the initial particle state. Mass is density times per-particle
/// volume, so it tracks the current density parameter of each part.
pub fn init_state<T: Real, const D: usize>(
    cfg: &SceneConfig<T, D>,
    ctx: &SimContext<T, D>,
) -> SimState<T, D> {
    let volume = cfg.sim.particle_volume.unwrap_or_else(|| {
        let half = cfg.grid.cell_size / T::cast(2.0);
        (0..D).map(|_| half).fold(T::one(), |acc, v| acc * v)
    });
    let particles = cfg
        .particles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut pos = p.position;
            for a in 0..D {
                pos[a] = pos[a].max(ctx.safe_lo[a]).min(ctx.safe_hi[a]);
            }
            let density = ctx.materials[p.part as usize].density;
            ParticleState {
                position: pos,
                velocity: if ctx.anchored[i] { Vector::zero() } else { p.velocity },
                def_grad: Matrix::identity(),
                affine: Matrix::zero(),
                mass: density * volume,
                volume,
                part: p.part,
            }
        })
        .collect();
    SimState {
        particles,
        substep: 0,
    }
}

/// Quadratic B-spline weights for one axis given `fx = x/h - base` in
/// [0.5, 1.5].
#[inline]
fn bspline_weights<T: Real>(fx: T) -> [T; 3] {
    let half = T::cast(0.5);
    let three_quarters = T::cast(0.75);
    [
        half * (T::cast(1.5) - fx) * (T::cast(1.5) - fx),
        three_quarters - (fx - T::one()) * (fx - T::one()),
        half * (fx - half) * (fx - half),
    ]
}

/// Advances the state by one substep.
pub fn simulate_step<T: Real, const D: usize>(
    state: &mut SimState<T, D>,
    grid: &mut Grid<T, D>,
    ctx: &SimContext<T, D>,
) -> Result<StepStats<T, D>, SimError> {
    let dt = ctx.dt;
    let h = ctx.cell_size;
    let inv_h = ctx.inv_h;
    let d_inv = T::cast(4.0) * inv_h * inv_h;
    let offsets: usize = 3usize.pow(D as u32);

    grid.clear();

    let mut particle_mass = T::zero();
    let mut particle_momentum = Vector::zero();

    // P2G with the stress contribution fused into the affine term.
    for (i, p) in state.particles.iter().enumerate() {
        particle_mass += p.mass;
        particle_momentum += p.velocity * p.mass;

        let mat = &ctx.materials[p.part as usize];
        let stress = kirchhoff_stress(&p.def_grad, mat);
        let q = p.affine * p.mass + stress * (-dt * p.volume * d_inv);

        let anchored = ctx.anchored[i];
        let ker = kernel(&p.position, &ctx.origin, inv_h);
        for k in 0..offsets {
            let (idx, w, dpos) = node_of(k, &ker, &ctx.strides, h);
            grid.mass[idx] += w * p.mass;
            grid.momentum[idx] += (p.velocity * p.mass + q * dpos) * w;
            if anchored {
                grid.anchor_mass[idx] += w * p.mass;
            }
        }
    }

    let mut grid_mass = T::zero();
    let mut grid_momentum = Vector::zero();
    for (m, mom) in grid.mass.iter().zip(grid.momentum.iter()) {
        grid_mass += *m;
        grid_momentum += *mom;
    }

    // Grid update: momentum -> velocity, gravity, boundary conditions.
    // Anchor-weighted nodes divide by the inflated mass (gravity scaled the
    // same way), so pinned regions hold still instead of creeping.
    let anchor_scale = T::cast(ANCHOR_MASS_SCALE);
    let node_count = grid.mass.len();
    for idx in 0..node_count {
        let m = grid.mass[idx];
        if m <= T::zero() {
            continue;
        }
        let m_eff = m + anchor_scale * grid.anchor_mass[idx];
        let mut v = (grid.momentum[idx] + ctx.gravity * (dt * m)) / m_eff;
        let mut rest = idx;
        for a in 0..D {
            let ia = rest / ctx.strides[a];
            rest %= ctx.strides[a];
            if let Some((kind, margin)) = ctx.walls[a][0] {
                if ia <= margin {
                    match kind {
                        BoundaryKind::Sticky => v = Vector::zero(),
                        BoundaryKind::Slip => v[a] = T::zero(),
                    }
                }
            }
            if let Some((kind, margin)) = ctx.walls[a][1] {
                if ia + margin >= ctx.node_dims[a] - 1 {
                    match kind {
                        BoundaryKind::Sticky => v = Vector::zero(),
                        BoundaryKind::Slip => v[a] = T::zero(),
                    }
                }
            }
        }
        grid.momentum[idx] = v; // now stores velocity
    }

    // G2P: gather velocity and affine matrix, advect, update F, plasticity.
    //
    // Anchored particles keep integrating their deformation gradient from
    // the local field (so they exert restoring stress through the grid) but
    // their position and velocity stay pinned.
    let substep = state.substep;
    let mut max_speed_sq = T::zero();
    for (i, p) in state.particles.iter_mut().enumerate() {
        let anchored = ctx.anchored[i];
        let ker = kernel(&p.position, &ctx.origin, inv_h);
        let mut v_new = Vector::zero();
        let mut b_new = Matrix::zero();
        for k in 0..offsets {
            let (idx, w, dpos) = node_of(k, &ker, &ctx.strides, h);
            let v_node = grid.momentum[idx];
            v_new += v_node * w;
            b_new = b_new + v_node.outer(&dpos) * w;
        }
        let c_new = b_new * d_inv;
        if anchored {
            p.velocity = Vector::zero();
            p.affine = Matrix::zero();
        } else {
            p.velocity = v_new;
            p.affine = c_new;
            p.position += v_new * dt;
            for a in 0..D {
                p.position[a] = p.position[a].max(ctx.safe_lo[a]).min(ctx.safe_hi[a]);
            }
        }
        let f_new = (Matrix::identity() + c_new * dt) * p.def_grad;
        if !f_new.is_finite() || !v_new.0.iter().all(|x| x.is_finite()) {
            return Err(SimError::NonFinite {
                particle: i,
                substep,
            });
        }
        if f_new.determinant() <= T::zero() {
            return Err(SimError::Inverted {
                particle: i,
                substep,
            });
        }
        let mat = &ctx.materials[p.part as usize];
        p.def_grad = apply_plasticity(&f_new, mat, dt);
        if !anchored {
            max_speed_sq = max_speed_sq.max(v_new.norm_sq());
        }
    }
    state.substep += 1;

    let max_speed = max_speed_sq.sqrt();
    Ok(StepStats {
        particle_mass,
        particle_momentum,
        grid_mass,
        grid_momentum,
        max_speed,
        cfl_exceeded: max_speed * dt > h,
    })
}

/// Kernel support for one particle: base node, fractional offset
/// `fx = x/h - base` per axis (in [0.5, 1.5]), and the three B-spline
/// weights per axis.
struct Kernel<T, const D: usize> {
    base: [usize; D],
    fx: [T; D],
    weights: [[T; 3]; D],
}

#[inline]
fn kernel<T: Real, const D: usize>(
    position: &Vector<T, D>,
    origin: &Vector<T, D>,
    inv_h: T,
) -> Kernel<T, D> {
    let mut base = [0usize; D];
    let mut fx = [T::zero(); D];
    let mut weights = [[T::zero(); 3]; D];
    for a in 0..D {
        let gx = (position[a] - origin[a]) * inv_h;
        let b = (gx - T::cast(0.5)).floor();
        base[a] = b.to_f64_cast() as usize;
        fx[a] = gx - b;
        weights[a] = bspline_weights(fx[a]);
    }
    Kernel { base, fx, weights }
}

/// Node visit `k` of the 3^D support: linear grid index, combined weight,
/// and the node offset from the particle in meters.
#[inline]
fn node_of<T: Real, const D: usize>(
    k: usize,
    kernel: &Kernel<T, D>,
    strides: &[usize; D],
    h: T,
) -> (usize, T, Vector<T, D>) {
    let mut idx = 0usize;
    let mut w = T::one();
    let mut dpos = Vector::zero();
    let mut rest = k;
    for a in (0..D).rev() {
        let o = rest % 3;
        rest /= 3;
        idx += (kernel.base[a] + o) * strides[a];
        w *= kernel.weights[a][o];
        dpos[a] = (T::from_usize_cast(o) - kernel.fx[a]) * h;
    }
    (idx, w, dpos)
}

#[derive(Debug, Clone, Default)]
pub struct RolloutWarnings {
    /// Substeps on which the advective CFL advisory fired.
    pub cfl_substeps: usize,
}

/// Runs `frames * substeps` substeps, snapshotting the particle set after
/// each frame. Frame `t` (0-based) is the state after `(t+1) * substeps`
/// substeps; the initial state is not included.
pub fn rollout<T: Real, const D: usize>(
    cfg: &SceneConfig<T, D>,
    params: &[ParamVector<T>],
    frames: usize,
) -> Result<Trajectory<T, D>, SimError> {
    assert!(frames >= 1, "rollout needs at least one frame");
    let ctx = build_context(cfg, params)?;
    let mut state = init_state(cfg, &ctx);
    let mut grid = Grid::new(ctx.node_dims);
    let mut out = Vec::with_capacity(frames);
    let mut warnings = RolloutWarnings::default();
    for _ in 0..frames {
        for _ in 0..cfg.sim.substeps {
            let stats = simulate_step(&mut state, &mut grid, &ctx)?;
            if stats.cfl_exceeded {
                warnings.cfl_substeps += 1;
            }
        }
        out.push(state.particles.clone());
    }
    Ok(Trajectory {
        frames: out,
        dt: cfg.sim.dt,
        substeps: cfg.sim.substeps,
        warnings,
    })
}
