//! Built-in synthetic scenes used for ground-truth recovery experiments.
//!
//! Each template is a pure function of `(template, seed)`: the seed drives a
//! small sub-cell jitter of the particle lattice that breaks grid alignment
//! and exact symmetries. Part parameters stored in the parts table are the
//! ground truth used by reference generation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    BoundaryKind, BoundaryPlane, BoundarySpec, CameraSpec, GridSpec, MaterialMode, PartDef,
    ParticleInit, SceneConfig, SimSpec, SCHEMA_VERSION,
};
use crate::linalg::Vector;
use crate::params::ParamVector;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// Horizontal cantilever clamped at its left end, oscillating under
    /// gravity. One part.
    Beam,
    /// Hanging rod clamped at the top, kicked sideways. Two parts: the upper
    /// "stem" region and a softer, denser lower "tip" region.
    TwoPartPendulum,
    /// Soft plastic ball dropped onto a sticky floor. One part.
    BlobDrop,
}

impl Template {
    pub const ALL: [Template; 3] = [
        Template::Beam,
        Template::TwoPartPendulum,
        Template::BlobDrop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::Beam => "beam",
            Template::TwoPartPendulum => "two_part_pendulum",
            Template::BlobDrop => "blob_drop",
        }
    }

    pub fn parse(name: &str) -> Option<Template> {
        Template::ALL.iter().copied().find(|t| t.name() == name)
    }
}

const GRID_N: usize = 64;
/// Lattice spacing: two particles per cell per axis.
const SPACING_CELLS: f64 = 0.5;
const JITTER: f64 = 0.15;

struct LatticeBuilder<T: Real> {
    spacing: T,
    rng: ChaCha8Rng,
    particles: Vec<ParticleInit<T, 2>>,
    anchors: Vec<usize>,
}

impl<T: Real> LatticeBuilder<T> {
    fn new(seed: u64, cell_size: T) -> Self {
        LatticeBuilder {
            spacing: cell_size * T::cast(SPACING_CELLS),
            rng: ChaCha8Rng::seed_from_u64(seed),
            particles: Vec::new(),
            anchors: Vec::new(),
        }
    }

    fn jittered(&mut self, x: T, y: T) -> Vector<T, 2> {
        let j = T::cast(JITTER) * self.spacing;
        let dx = T::cast(self.rng.random_range(-1.0..1.0)) * j;
        let dy = T::cast(self.rng.random_range(-1.0..1.0)) * j;
        Vector([x + dx, y + dy])
    }

    fn push(&mut self, pos: Vector<T, 2>, part: u32, anchored: bool) {
        if anchored {
            self.anchors.push(self.particles.len());
        }
        self.particles.push(ParticleInit {
            position: pos,
            velocity: Vector::zero(),
            part,
        });
    }

    /// Rectangle of `nx` x `ny` lattice sites with lower-left corner at
    /// `(x0, y0)`; `classify(i, j)` yields `(part, anchored)`.
    fn rect(&mut self, x0: T, y0: T, nx: usize, ny: usize, classify: impl Fn(usize, usize) -> (u32, bool)) {
        let s = self.spacing;
        let half = T::cast(0.5);
        for i in 0..nx {
            for j in 0..ny {
                let x = x0 + (T::from_usize_cast(i) + half) * s;
                let y = y0 + (T::from_usize_cast(j) + half) * s;
                let pos = self.jittered(x, y);
                let (part, anchored) = classify(i, j);
                self.push(pos, part, anchored);
            }
        }
    }

    fn disc(&mut self, cx: T, cy: T, radius: T, part: u32) {
        let s = self.spacing;
        let half = T::cast(0.5);
        let n = (radius / s).to_f64_cast().ceil() as i64 + 1;
        for i in -n..=n {
            for j in -n..=n {
                let x = cx + (T::cast(i as f64) + half) * s;
                let y = cy + (T::cast(j as f64) + half) * s;
                let dx = x - cx;
                let dy = y - cy;
                if dx * dx + dy * dy <= radius * radius {
                    let pos = self.jittered(x, y);
                    self.push(pos, part, false);
                }
            }
        }
    }

    fn set_velocity(&mut self, v: Vector<T, 2>, free_only: bool) {
        let anchored: std::collections::HashSet<usize> = self.anchors.iter().copied().collect();
        for (i, p) in self.particles.iter_mut().enumerate() {
            if !free_only || !anchored.contains(&i) {
                p.velocity = v;
            }
        }
    }
}

fn grid<T: Real>() -> GridSpec<T, 2> {
    GridSpec {
        resolution: [GRID_N, GRID_N],
        cell_size: T::cast(1.0 / GRID_N as f64),
        origin: Vector::zero(),
    }
}

fn part<T: Real>(
    name: &str,
    gray: f64,
    e: f64,
    yield_stress: f64,
    viscosity: f64,
    density: f64,
) -> PartDef<T> {
    PartDef {
        name: name.into(),
        color: [T::cast(gray); 3],
        material: MaterialMode::VonMises,
        params: Some(ParamVector {
            young_modulus: T::cast(e),
            poisson_ratio: T::cast(0.3),
            yield_stress: T::cast(yield_stress),
            plastic_viscosity: T::cast(viscosity),
            friction_angle: T::cast(30.0),
            density: T::cast(density),
        }),
    }
}

pub fn synthetic_scene<T: Real>(template: Template, seed: u64) -> SceneConfig<T, 2> {
    match template {
        Template::Beam => beam(seed),
        Template::TwoPartPendulum => two_part_pendulum(seed),
        Template::BlobDrop => blob_drop(seed),
    }
}

fn beam<T: Real>(seed: u64) -> SceneConfig<T, 2> {
    let g = grid::<T>();
    let mut b = LatticeBuilder::new(seed, g.cell_size);
    // 55 x 10 sites: a 0.43 m x 0.078 m bar, clamped on its left 3 columns.
    b.rect(T::cast(0.12), T::cast(0.60), 55, 10, |i, _j| (0, i < 3));
    SceneConfig {
        schema_version: SCHEMA_VERSION,
        grid: g,
        particles: b.particles,
        parts: vec![part("beam", 1.0, 6e5, 1e6, 10.0, 400.0)],
        sim: SimSpec {
            dt: T::cast(1e-4),
            frames: 40,
            substeps: 50,
            gravity: Vector([T::zero(), T::cast(-9.8)]),
            anchors: b.anchors,
            particle_volume: None,
        },
        camera: CameraSpec {
            view_axis: 2,
            width: 64,
            height: 32,
            scale: T::cast(136.0),
            center: [T::cast(0.335), T::cast(0.585)],
            splat_radius: T::cast(1.5),
        },
        boundaries: vec![],
    }
}

fn two_part_pendulum<T: Real>(seed: u64) -> SceneConfig<T, 2> {
    let g = grid::<T>();
    let mut b = LatticeBuilder::new(seed, g.cell_size);
    // An 8 x 32 site rod hanging from the top. The top 8 rows form a clamped
    // collar (pure pinning over too thin a band acts like a hinge); the
    // lowest 8 rows are the denser, softer "tip" region.
    b.rect(T::cast(0.46875), T::cast(0.62), 8, 32, |_i, j| {
        let part = if j < 8 { 1 } else { 0 };
        (part, j >= 24)
    });
    b.set_velocity(Vector([T::cast(0.65), T::zero()]), true);
    SceneConfig {
        schema_version: SCHEMA_VERSION,
        grid: g,
        particles: b.particles,
        parts: vec![
            part("stem", 0.38, 2e5, 4e3, 30.0, 300.0),
            part("tip", 0.5, 4e4, 4e3, 30.0, 1500.0),
        ],
        sim: SimSpec {
            dt: T::cast(8e-5),
            frames: 34,
            substeps: 150,
            gravity: Vector([T::zero(), T::cast(-9.8)]),
            anchors: b.anchors,
            particle_volume: None,
        },
        camera: CameraSpec {
            view_axis: 2,
            width: 48,
            height: 64,
            scale: T::cast(376.0),
            center: [T::cast(0.5), T::cast(0.665)],
            splat_radius: T::cast(0.8),
        },
        boundaries: vec![],
    }
}

fn blob_drop<T: Real>(seed: u64) -> SceneConfig<T, 2> {
    let g = grid::<T>();
    let mut b = LatticeBuilder::new(seed, g.cell_size);
    b.disc(T::cast(0.5), T::cast(0.19), T::cast(0.09), 0);
    b.set_velocity(Vector([T::zero(), T::cast(-0.5)]), false);
    SceneConfig {
        schema_version: SCHEMA_VERSION,
        grid: g,
        particles: b.particles,
        parts: vec![part("blob", 1.0, 8e4, 3e3, 5.0, 1000.0)],
        sim: SimSpec {
            dt: T::cast(1e-4),
            frames: 28,
            substeps: 125,
            gravity: Vector([T::zero(), T::cast(-9.8)]),
            anchors: b.anchors,
            particle_volume: None,
        },
        camera: CameraSpec {
            view_axis: 2,
            width: 64,
            height: 64,
            scale: T::cast(228.0),
            center: [T::cast(0.5), T::cast(0.15)],
            splat_radius: T::cast(1.5),
        },
        boundaries: vec![BoundarySpec {
            plane: BoundaryPlane::YMin,
            kind: BoundaryKind::Sticky,
            margin: 2,
        }],
    }
}
