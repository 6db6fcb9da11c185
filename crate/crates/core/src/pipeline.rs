//! Forward pipeline helper: parameters in, rendered video out.

use crate::mpm::{self, SimError, Trajectory};
use crate::params::ParamVector;
use crate::real::Real;
use crate::render;
use crate::scene::SceneConfig;
use crate::video::VideoTensor;

/// Rolls the simulator forward and renders every frame with the scene camera.
pub fn render_rollout<T: Real, const D: usize>(
    cfg: &SceneConfig<T, D>,
    params: &[ParamVector<T>],
    frames: usize,
) -> Result<(Trajectory<T, D>, VideoTensor<T>), SimError> {
    let traj = mpm::rollout(cfg, params, frames)?;
    let video = render::render_video(&traj, &cfg.parts, &cfg.camera)
        .expect("non-empty rollout renders");
    Ok((traj, video))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::templates::{synthetic_scene, Template};

    #[test]
    fn rollout_video_shape_matches_camera() {
        let cfg: SceneConfig<f64, 2> = synthetic_scene(Template::Beam, 0);
        let truth = cfg.truth_params().unwrap();
        let (traj, video) = render_rollout(&cfg, &truth, 3).unwrap();
        assert_eq!(traj.frames.len(), 3);
        assert_eq!(video.len(), 3);
        assert_eq!(video.width(), cfg.camera.width);
        assert_eq!(video.height(), cfg.camera.height);
        assert!((video.fps - 1.0 / (cfg.sim.dt * cfg.sim.substeps as f64)).abs() < 1e-9);
    }
}
