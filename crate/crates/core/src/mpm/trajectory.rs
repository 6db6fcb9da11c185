//! Trajectory container and its binary export format.
//!
//! The on-disk form is a block of little-endian f32 positions with magic
//! `RMPMTRAJ` plus a JSON manifest (`frames`, `particle_count`, `dim`, `dt`,
//! `substeps`).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ParticleState, RolloutWarnings};
use crate::linalg::Vector;
use crate::real::Real;

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"RMPMTRAJ";

#[derive(Debug, Clone)]
pub struct Trajectory<T, const D: usize> {
    /// Frame `t` holds the particle set after `(t+1) * substeps` substeps.
    pub frames: Vec<Vec<ParticleState<T, D>>>,
    pub dt: T,
    pub substeps: usize,
    pub warnings: RolloutWarnings,
}

impl<T: Real, const D: usize> Trajectory<T, D> {
    pub fn positions(&self) -> Vec<Vec<Vector<T, D>>> {
        self.frames
            .iter()
            .map(|f| f.iter().map(|p| p.position).collect())
            .collect()
    }

    /// Seconds spanned by one frame.
    pub fn frame_dt(&self) -> T {
        self.dt * T::from_usize_cast(self.substeps)
    }

    /// Frames per second implied by dt and substep count.
    pub fn fps(&self) -> T {
        T::one() / self.frame_dt()
    }
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest error on {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("trajectory blob {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub schema_version: u32,
    pub frames: usize,
    pub particle_count: usize,
    pub dim: usize,
    pub dt: f64,
    pub substeps: usize,
}

/// Positions-only view used by the evaluation metrics.
#[derive(Debug, Clone)]
pub struct PointTrajectory<T, const D: usize> {
    pub frames: Vec<Vec<Vector<T, D>>>,
    pub manifest: TrajectoryManifest,
}

pub fn write_trajectory<T: Real, const D: usize>(
    traj: &Trajectory<T, D>,
    blob_path: &Path,
    manifest_path: &Path,
) -> Result<(), TrajectoryError> {
    let particle_count = traj.frames.first().map_or(0, |f| f.len());
    let manifest = TrajectoryManifest {
        schema_version: crate::scene::SCHEMA_VERSION,
        frames: traj.frames.len(),
        particle_count,
        dim: D,
        dt: traj.dt.to_f64_cast(),
        substeps: traj.substeps,
    };
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| TrajectoryError::Io {
            path: path.clone(),
            source,
        }
    };
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(blob_path).map_err(io_err(blob_path))?,
    );
    f.write_all(TRAJECTORY_MAGIC).map_err(io_err(blob_path))?;
    f.write_all(&(manifest.frames as u32).to_le_bytes())
        .map_err(io_err(blob_path))?;
    f.write_all(&(particle_count as u32).to_le_bytes())
        .map_err(io_err(blob_path))?;
    f.write_all(&(D as u32).to_le_bytes())
        .map_err(io_err(blob_path))?;
    for frame in &traj.frames {
        for p in frame {
            for a in 0..D {
                f.write_all(&(p.position[a].to_f64_cast() as f32).to_le_bytes())
                    .map_err(io_err(blob_path))?;
            }
        }
    }
    f.flush().map_err(io_err(blob_path))?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(manifest_path, text).map_err(io_err(manifest_path))
}

pub fn read_trajectory<T: Real, const D: usize>(
    blob_path: &Path,
    manifest_path: &Path,
) -> Result<PointTrajectory<T, D>, TrajectoryError> {
    let manifest_text =
        std::fs::read_to_string(manifest_path).map_err(|source| TrajectoryError::Io {
            path: manifest_path.to_path_buf(),
            source,
        })?;
    let manifest: TrajectoryManifest =
        serde_json::from_str(&manifest_text).map_err(|source| TrajectoryError::Manifest {
            path: manifest_path.to_path_buf(),
            source,
        })?;
    let fmt_err = |reason: String| TrajectoryError::Format {
        path: blob_path.to_path_buf(),
        reason,
    };
    let mut f = std::io::BufReader::new(std::fs::File::open(blob_path).map_err(|source| {
        TrajectoryError::Io {
            path: blob_path.to_path_buf(),
            source,
        }
    })?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)
        .map_err(|e| fmt_err(format!("short read: {e}")))?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(fmt_err("bad magic header".into()));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |f: &mut dyn Read| -> Result<u32, std::io::Error> {
        f.read_exact(&mut u32buf).map(|_| u32::from_le_bytes(u32buf))
    };
    let frames = read_u32(&mut f).map_err(|e| fmt_err(e.to_string()))? as usize;
    let particles = read_u32(&mut f).map_err(|e| fmt_err(e.to_string()))? as usize;
    let dim = read_u32(&mut f).map_err(|e| fmt_err(e.to_string()))? as usize;
    if dim != D {
        return Err(fmt_err(format!("dimension {dim} does not match {D}")));
    }
    if frames != manifest.frames || particles != manifest.particle_count {
        return Err(fmt_err("blob header disagrees with manifest".into()));
    }
    let mut out = Vec::with_capacity(frames);
    let mut f32buf = [0u8; 4];
    for _ in 0..frames {
        let mut frame = Vec::with_capacity(particles);
        for _ in 0..particles {
            let mut v = Vector::zero();
            for a in 0..D {
                f.read_exact(&mut f32buf)
                    .map_err(|e| fmt_err(format!("short read: {e}")))?;
                v[a] = T::cast(f32::from_le_bytes(f32buf) as f64);
            }
            frame.push(v);
        }
        out.push(frame);
    }
    Ok(PointTrajectory {
        frames: out,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn tiny_trajectory() -> Trajectory<f64, 2> {
        let state = |x: f64| ParticleState {
            position: Vector([x, 0.25]),
            velocity: Vector::zero(),
            def_grad: Matrix::identity(),
            affine: Matrix::zero(),
            mass: 1.0,
            volume: 1.0,
            part: 0,
        };
        Trajectory {
            frames: vec![vec![state(0.1), state(0.2)], vec![state(0.15), state(0.25)]],
            dt: 1e-4,
            substeps: 50,
            warnings: RolloutWarnings::default(),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let blob = dir.path().join("traj.bin");
        let manifest = dir.path().join("traj.json");
        let traj = tiny_trajectory();
        write_trajectory(&traj, &blob, &manifest).unwrap();
        let read: PointTrajectory<f64, 2> = read_trajectory(&blob, &manifest).unwrap();
        assert_eq!(read.frames.len(), 2);
        assert_eq!(read.manifest.particle_count, 2);
        assert_eq!(read.manifest.substeps, 50);
        assert!((read.frames[1][1][0] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn frame_timing_helpers() {
        let traj = tiny_trajectory();
        assert!((traj.frame_dt() - 5e-3).abs() < 1e-12);
        assert!((traj.fps() - 200.0).abs() < 1e-9);
    }
}
