//! Scene data model: grid, particles, parts, simulation and camera settings.
//!
//! Scenes are JSON documents with top-level keys `grid`, `particles`, `parts`,
//! `sim`, `camera`, `boundaries` (see `docs/formats.md` at the repo root for
//! the field-by-field schema). Particle arrays may alternatively reference an
//! external binary blob with magic `RMPMPART`.

pub mod knn;
pub mod templates;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Vector;
use crate::params::ParamVector;
use crate::real::Real;

pub const SCHEMA_VERSION: u32 = 1;
pub const PARTICLE_BLOB_MAGIC: &[u8; 8] = b"RMPMPART";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("particle blob {path}: {reason}")]
    Blob { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec<T: Real, const D: usize> {
    /// Cells per axis.
    #[serde(with = "usize_array")]
    pub resolution: [usize; D],
    /// Cell edge length in meters.
    pub cell_size: T,
    #[serde(default = "Vector::zero")]
    pub origin: Vector<T, D>,
}

mod usize_array {
    use serde::de::Error as _;
    use serde::ser::SerializeTuple;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const D: usize>(
        value: &[usize; D],
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        let mut tuple = serializer.serialize_tuple(D)?;
        for v in value {
            tuple.serialize_element(v)?;
        }
        tuple.end()
    }

    pub fn deserialize<'de, De: Deserializer<'de>, const D: usize>(
        deserializer: De,
    ) -> Result<[usize; D], De::Error> {
        let values: Vec<usize> = Vec::deserialize(deserializer)?;
        if values.len() != D {
            return Err(De::Error::invalid_length(
                values.len(),
                &format!("{D} axes").as_str(),
            ));
        }
        let mut out = [0usize; D];
        out.copy_from_slice(&values);
        Ok(out)
    }
}

impl<T: Real, const D: usize> GridSpec<T, D> {
    pub fn domain_extent(&self) -> Vector<T, D> {
        let mut e = Vector::zero();
        for a in 0..D {
            e[a] = T::from_usize_cast(self.resolution[a]) * self.cell_size;
        }
        e
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticleInit<T: Real, const D: usize> {
    pub position: Vector<T, D>,
    #[serde(default = "Vector::zero")]
    pub velocity: Vector<T, D>,
    #[serde(default)]
    pub part: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialMode {
    /// Fixed-corotated elasticity with a viscoplastic von Mises return map.
    #[default]
    VonMises,
    /// Adds the friction-angle (Drucker-Prager) clamp for granular behavior.
    DruckerPrager,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartDef<T: Real> {
    pub name: String,
    /// Splat color, RGB in [0,1]. Grayscale parts render single-channel video.
    #[serde(default = "default_color")]
    pub color: [T; 3],
    #[serde(default)]
    pub material: MaterialMode,
    /// Physical parameters; used as ground truth by `generate` and as the
    /// starting point when the init search is skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamVector<T>>,
}

fn default_color<T: Real>() -> [T; 3] {
    [T::one(); 3]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSpec<T: Real, const D: usize> {
    /// Substep length in seconds.
    pub dt: T,
    /// Number of video frames a rollout covers.
    pub frames: usize,
    /// Substeps integrated per frame.
    pub substeps: usize,
    pub gravity: Vector<T, D>,
    /// Particle indices pinned in place (position and velocity frozen).
    #[serde(default)]
    pub anchors: Vec<usize>,
    /// Per-particle volume; defaults to `cell_size^D / 2^D` (two particles
    /// per cell per axis, the seeding used by the bundled templates).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particle_volume: Option<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraSpec<T: Real> {
    /// World axis dropped by the orthographic projection (3D scenes only).
    #[serde(default = "default_view_axis")]
    pub view_axis: usize,
    pub width: usize,
    pub height: usize,
    /// Pixels per meter.
    pub scale: T,
    /// World coordinates (in the projected plane) of the image center.
    pub center: [T; 2],
    /// Gaussian splat sigma in pixels.
    #[serde(default = "default_splat_radius")]
    pub splat_radius: T,
}

fn default_view_axis() -> usize {
    2
}

fn default_splat_radius<T: Real>() -> T {
    T::cast(1.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Sticky,
    Slip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPlane {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl BoundaryPlane {
    pub fn axis(self) -> usize {
        match self {
            BoundaryPlane::XMin | BoundaryPlane::XMax => 0,
            BoundaryPlane::YMin | BoundaryPlane::YMax => 1,
            BoundaryPlane::ZMin | BoundaryPlane::ZMax => 2,
        }
    }

    pub fn is_min_side(self) -> bool {
        matches!(
            self,
            BoundaryPlane::XMin | BoundaryPlane::YMin | BoundaryPlane::ZMin
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub plane: BoundaryPlane,
    #[serde(rename = "type")]
    pub kind: BoundaryKind,
    /// Width of the affected node band, in cells.
    #[serde(default = "default_margin")]
    pub margin: usize,
}

fn default_margin() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneConfig<T: Real, const D: usize> {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub grid: GridSpec<T, D>,
    pub particles: Vec<ParticleInit<T, D>>,
    pub parts: Vec<PartDef<T>>,
    pub sim: SimSpec<T, D>,
    pub camera: CameraSpec<T>,
    #[serde(default)]
    pub boundaries: Vec<BoundarySpec>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// On-disk form: particles either inline or as a blob reference.
#[derive(Serialize, Deserialize)]
struct SceneDoc<T: Real, const D: usize> {
    #[serde(default = "schema_version")]
    schema_version: u32,
    grid: GridSpec<T, D>,
    particles: ParticleSource<T, D>,
    parts: Vec<PartDef<T>>,
    sim: SimSpec<T, D>,
    camera: CameraSpec<T>,
    #[serde(default)]
    boundaries: Vec<BoundarySpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ParticleSource<T: Real, const D: usize> {
    Inline(Vec<ParticleInit<T, D>>),
    Blob { blob: PathBuf },
}

impl<T: Real, const D: usize> SceneConfig<T, D> {
    /// Number of parts declared in the parts table.
    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    /// True parameter vectors from the parts table, if every part has one.
    pub fn truth_params(&self) -> Option<Vec<ParamVector<T>>> {
        self.parts.iter().map(|p| p.params.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let g = &self.grid;
        if g.cell_size <= T::zero() {
            return Err(SceneError::Validation("cell size must be positive".into()));
        }
        for (a, &r) in g.resolution.iter().enumerate() {
            if r < 8 {
                return Err(SceneError::Validation(format!(
                    "grid resolution on axis {a} is {r}; at least 8 cells required"
                )));
            }
        }
        if self.sim.dt <= T::zero() {
            return Err(SceneError::Validation("dt must be > 0".into()));
        }
        if self.sim.frames < 2 {
            return Err(SceneError::Validation(format!(
                "frames must be >= 2, got {}",
                self.sim.frames
            )));
        }
        if self.sim.substeps < 1 {
            return Err(SceneError::Validation("substeps must be >= 1".into()));
        }
        if self.parts.is_empty() {
            return Err(SceneError::Validation("parts table is empty".into()));
        }
        if self.particles.is_empty() {
            return Err(SceneError::Validation("scene has no particles".into()));
        }
        let m = self.parts.len() as u32;
        let extent = g.domain_extent();
        for (i, p) in self.particles.iter().enumerate() {
            for a in 0..D {
                let rel = p.position[a] - g.origin[a];
                if !(rel > T::zero() && rel < extent[a]) {
                    return Err(SceneError::Validation(format!(
                        "particle {i} position outside domain on axis {a}"
                    )));
                }
                if !p.position[a].is_finite() || !p.velocity[a].is_finite() {
                    return Err(SceneError::Validation(format!(
                        "particle {i} has non-finite state"
                    )));
                }
            }
            if p.part >= m {
                return Err(SceneError::Validation(format!(
                    "particle {i} references part_label {} but only {m} parts are declared",
                    p.part
                )));
            }
        }
        for &a in &self.sim.anchors {
            if a >= self.particles.len() {
                return Err(SceneError::Validation(format!(
                    "anchor index {a} out of range ({} particles)",
                    self.particles.len()
                )));
            }
        }
        for b in &self.boundaries {
            if b.plane.axis() >= D {
                return Err(SceneError::Validation(format!(
                    "boundary plane {:?} does not exist in {D}D",
                    b.plane
                )));
            }
        }
        if self.camera.width == 0 || self.camera.height == 0 {
            return Err(SceneError::Validation("camera image is empty".into()));
        }
        if D == 3 && self.camera.view_axis >= 3 {
            return Err(SceneError::Validation(format!(
                "camera view_axis {} out of range",
                self.camera.view_axis
            )));
        }
        Ok(())
    }
}

pub fn load_scene<T, const D: usize>(path: &Path) -> Result<SceneConfig<T, D>, SceneError>
where
    T: Real + Serialize + for<'de> Deserialize<'de>,
{
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc: SceneDoc<T, D> = serde_json::from_str(&text).map_err(|source| SceneError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let particles = match doc.particles {
        ParticleSource::Inline(v) => v,
        ParticleSource::Blob { blob } => {
            let resolved = if blob.is_absolute() {
                blob
            } else {
                path.parent().unwrap_or(Path::new(".")).join(blob)
            };
            read_particle_blob(&resolved)?
        }
    };
    let cfg = SceneConfig {
        schema_version: doc.schema_version,
        grid: doc.grid,
        particles,
        parts: doc.parts,
        sim: doc.sim,
        camera: doc.camera,
        boundaries: doc.boundaries,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn save_scene<T, const D: usize>(
    cfg: &SceneConfig<T, D>,
    path: &Path,
) -> Result<(), SceneError>
where
    T: Real + Serialize + for<'de> Deserialize<'de>,
{
    let doc = SceneDoc {
        schema_version: cfg.schema_version,
        grid: cfg.grid.clone(),
        particles: ParticleSource::Inline(cfg.particles.clone()),
        parts: cfg.parts.clone(),
        sim: cfg.sim.clone(),
        camera: cfg.camera.clone(),
        boundaries: cfg.boundaries.clone(),
    };
    let text = serde_json::to_string_pretty(&doc).expect("scene serializes");
    std::fs::write(path, text).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Binary particle blob: magic `RMPMPART`, then u32 count, u32 dimension,
/// then `count` rows of little-endian f32: position[D], velocity[D], label.
pub fn write_particle_blob<T: Real, const D: usize>(
    particles: &[ParticleInit<T, D>],
    path: &Path,
) -> Result<(), SceneError> {
    let io_err = |source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    let io_err = |source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    };
    f.write_all(PARTICLE_BLOB_MAGIC).map_err(io_err)?;
    f.write_all(&(particles.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    f.write_all(&(D as u32).to_le_bytes()).map_err(io_err)?;
    for p in particles {
        for a in 0..D {
            f.write_all(&(p.position[a].to_f64_cast() as f32).to_le_bytes())
                .map_err(io_err)?;
        }
        for a in 0..D {
            f.write_all(&(p.velocity[a].to_f64_cast() as f32).to_le_bytes())
                .map_err(io_err)?;
        }
        f.write_all(&(p.part as f32).to_le_bytes()).map_err(io_err)?;
    }
    f.flush().map_err(io_err)
}

pub fn read_particle_blob<T: Real, const D: usize>(
    path: &Path,
) -> Result<Vec<ParticleInit<T, D>>, SceneError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path).map_err(|source| {
        SceneError::Io {
            path: path.to_path_buf(),
            source,
        }
    })?);
    let blob_err = |reason: String| SceneError::Blob {
        path: path.to_path_buf(),
        reason,
    };
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)
        .map_err(|e| blob_err(format!("short read: {e}")))?;
    if &magic != PARTICLE_BLOB_MAGIC {
        return Err(blob_err("bad magic header".into()));
    }
    let mut u32buf = [0u8; 4];
    f.read_exact(&mut u32buf)
        .map_err(|e| blob_err(format!("short read: {e}")))?;
    let count = u32::from_le_bytes(u32buf) as usize;
    f.read_exact(&mut u32buf)
        .map_err(|e| blob_err(format!("short read: {e}")))?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    if dim != D {
        return Err(blob_err(format!("blob dimension {dim} does not match {D}")));
    }
    let mut particles = Vec::with_capacity(count);
    let mut f32buf = [0u8; 4];
    let mut read_f32 = |f: &mut dyn Read| -> Result<f32, SceneError> {
        f.read_exact(&mut f32buf)
            .map_err(|e| SceneError::Blob {
                path: path.to_path_buf(),
                reason: format!("short read: {e}"),
            })
            .map(|_| f32::from_le_bytes(f32buf))
    };
    for _ in 0..count {
        let mut pos = Vector::zero();
        let mut vel = Vector::zero();
        for a in 0..D {
            pos[a] = T::cast(read_f32(&mut f)? as f64);
        }
        for a in 0..D {
            vel[a] = T::cast(read_f32(&mut f)? as f64);
        }
        let label = read_f32(&mut f)?;
        particles.push(ParticleInit {
            position: pos,
            velocity: vel,
            part: label as u32,
        });
    }
    Ok(particles)
}
