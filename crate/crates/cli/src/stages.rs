//! Pipeline stages shared by the CLI verbs, generic over the scene's
//! spatial dimension.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use rmpm_core::dms::{dms_loss, LossReport};
use rmpm_core::init::{lhs_sample, score_candidates, select_init, CandidateSet, SearchSpace};
use rmpm_core::linalg::Vector;
use rmpm_core::metrics;
use rmpm_core::mpm::trajectory::{read_trajectory, write_trajectory, PointTrajectory};
use rmpm_core::optim::{optimize, OptimizeReport, PartParams};
use rmpm_core::params::ParamVector;
use rmpm_core::pipeline::render_rollout;
use rmpm_core::render::{dominant_frequency, slice_spectrum, wt_slice};
use rmpm_core::scene::knn::knn_smooth_labels;
use rmpm_core::scene::templates::{synthetic_scene, Template};
use rmpm_core::scene::{load_scene, save_scene, SceneConfig, SCHEMA_VERSION};
use rmpm_core::video::{load_video, save_video, VideoTensor};
use rmpm_core::{Scalar, Video};

use crate::config::HarnessConfig;
use crate::plots;

/// Where a scene comes from: a bundled template name or a JSON file.
#[derive(Debug, Clone)]
pub enum SceneSource {
    Template(Template),
    File(PathBuf),
}

impl SceneSource {
    pub fn parse(arg: &str) -> SceneSource {
        match Template::parse(arg) {
            Some(t) => SceneSource::Template(t),
            None => SceneSource::File(PathBuf::from(arg)),
        }
    }

    /// Spatial dimension of the scene (templates are 2D; files are peeked).
    pub fn dimension(&self) -> anyhow::Result<usize> {
        match self {
            SceneSource::Template(_) => Ok(2),
            SceneSource::File(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading scene {}", path.display()))?;
                let doc: serde_json::Value = serde_json::from_str(&text)
                    .with_context(|| format!("parsing scene {}", path.display()))?;
                let res = doc
                    .get("grid")
                    .and_then(|g| g.get("resolution"))
                    .and_then(|r| r.as_array())
                    .ok_or_else(|| anyhow!("scene {} lacks grid.resolution", path.display()))?;
                Ok(res.len())
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SceneSource::Template(t) => format!("template:{}", t.name()),
            SceneSource::File(p) => p.display().to_string(),
        }
    }
}

pub fn load_scene_dim<const D: usize>(
    source: &SceneSource,
    seed: u64,
    cfg: &HarnessConfig,
) -> anyhow::Result<SceneConfig<Scalar, D>> {
    let mut scene: SceneConfig<Scalar, D> = match source {
        SceneSource::Template(t) => {
            let scene2 = synthetic_scene::<Scalar>(*t, seed);
            if D != 2 {
                bail!("template scenes are two-dimensional");
            }
            // D == 2 here; route through JSON to avoid an unsafe transmute
            // between the const-generic instantiations.
            serde_json::from_value(serde_json::to_value(&scene2)?)?
        }
        SceneSource::File(path) => load_scene(path)?,
    };
    if cfg.labels.knn_smooth {
        let positions: Vec<Vector<Scalar, D>> =
            scene.particles.iter().map(|p| p.position).collect();
        let labels: Vec<u32> = scene.particles.iter().map(|p| p.part).collect();
        let smoothed = knn_smooth_labels(&labels, &positions, cfg.labels.knn_k)?;
        for (p, l) in scene.particles.iter_mut().zip(smoothed) {
            p.part = l;
        }
        scene.validate()?;
    }
    Ok(scene)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TruthRecord {
    pub schema_version: u32,
    pub scene: String,
    pub seed: u64,
    pub theta: Vec<ParamVector<Scalar>>,
}

/// Reference generation: ground-truth rollout, rendered video, trajectory
/// blob, and a record of the parameters used.
pub fn stage_generate<const D: usize>(
    scene: &SceneConfig<Scalar, D>,
    source_desc: &str,
    seed: u64,
    out: &Path,
    frames: Option<usize>,
) -> anyhow::Result<Video> {
    let truth = scene
        .truth_params()
        .ok_or_else(|| anyhow!("scene parts carry no params; ground truth required"))?;
    let frames = frames.unwrap_or(scene.sim.frames);
    let (traj, video) = render_rollout(scene, &truth, frames)?;
    if traj.warnings.cfl_substeps > 0 {
        eprintln!(
            "warning: advective CFL advisory fired on {} substeps",
            traj.warnings.cfl_substeps
        );
    }
    std::fs::create_dir_all(out)?;
    save_video(&video, &out.join("reference"))?;
    write_trajectory(
        &traj,
        &out.join("truth_trajectory.bin"),
        &out.join("truth_trajectory.json"),
    )?;
    let record = TruthRecord {
        schema_version: SCHEMA_VERSION,
        scene: source_desc.to_string(),
        seed,
        theta: truth,
    };
    std::fs::write(
        out.join("truth.json"),
        serde_json::to_string_pretty(&record)?,
    )?;
    save_scene(scene, &out.join("scene.json"))?;
    Ok(video)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InitRecord {
    pub schema_version: u32,
    pub seed: u64,
    pub frames: usize,
    pub selected: usize,
    pub selected_theta: Vec<ParamVector<Scalar>>,
    pub candidates: CandidateSet<Scalar>,
}

pub fn stage_init_search<const D: usize>(
    scene: &SceneConfig<Scalar, D>,
    reference: &Video,
    cfg: &HarnessConfig,
    seed: u64,
    out: &Path,
) -> anyhow::Result<Vec<ParamVector<Scalar>>> {
    let space = if cfg.init.shared {
        SearchSpace::Shared
    } else {
        SearchSpace::PerPart
    };
    let k = cfg.init.frames.min(reference.len());
    let mut set = lhs_sample(&cfg.bounds, cfg.init.candidates, space, scene.parts.len(), seed);
    score_candidates(scene, &mut set, reference, k)?;
    let selected = select_init(&set)?;
    let theta = set.candidates[selected].parts.clone();
    std::fs::create_dir_all(out)?;
    let record = InitRecord {
        schema_version: SCHEMA_VERSION,
        seed,
        frames: k,
        selected,
        selected_theta: theta.clone(),
        candidates: set,
    };
    std::fs::write(out.join("init.json"), serde_json::to_string_pretty(&record)?)?;
    Ok(theta)
}

#[derive(Debug, Serialize)]
struct TraceLine<'a> {
    schema_version: u32,
    iter: usize,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    losses: Option<&'a LossReport<Scalar>>,
    theta: &'a [ParamVector<Scalar>],
    lr_scale: Scalar,
    rejected: bool,
}

pub fn stage_optimize<const D: usize>(
    scene: &SceneConfig<Scalar, D>,
    reference: &Video,
    theta_init: Vec<ParamVector<Scalar>>,
    cfg: &HarnessConfig,
    seed: u64,
    out: &Path,
) -> anyhow::Result<OptimizeReport<Scalar>> {
    let opts = cfg.optimize_options(seed)?;
    let report = optimize(
        scene,
        reference,
        &PartParams::new(theta_init),
        &cfg.bounds,
        &opts,
    )?;
    std::fs::create_dir_all(out)?;
    let mut jsonl = String::new();
    for rec in &report.trace {
        let line = TraceLine {
            schema_version: SCHEMA_VERSION,
            iter: rec.iter,
            losses: rec.losses.as_ref(),
            theta: &rec.parts,
            lr_scale: rec.lr_scale,
            rejected: rec.rejected,
        };
        jsonl.push_str(&serde_json::to_string(&line)?);
        jsonl.push('\n');
    }
    std::fs::write(out.join("optimize.jsonl"), jsonl)?;
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VideoMetricsRecord {
    pub psnr_db: Scalar,
    pub ms_ssim: Scalar,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PointMetricsRecord {
    pub tau: Scalar,
    pub chamfer: Scalar,
    pub hd95: Scalar,
    pub fscore: Scalar,
    pub per_frame_chamfer: Vec<Scalar>,
    pub per_frame_hd95: Vec<Scalar>,
    pub per_frame_fscore: Vec<Scalar>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<PointMetricsRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub video: Option<VideoMetricsRecord>,
}

/// Mean and per-frame point metrics between two trajectories.
pub fn eval_trajectories<const D: usize>(
    predicted: &PointTrajectory<Scalar, D>,
    reference: &PointTrajectory<Scalar, D>,
    tau: Scalar,
) -> anyhow::Result<PointMetricsRecord> {
    if predicted.frames.len() != reference.frames.len() {
        bail!(
            "trajectory frame counts differ: {} vs {}",
            predicted.frames.len(),
            reference.frames.len()
        );
    }
    let mut cd = Vec::new();
    let mut hd = Vec::new();
    let mut fs = Vec::new();
    for (p, r) in predicted.frames.iter().zip(&reference.frames) {
        cd.push(metrics::chamfer(p, r)?);
        hd.push(metrics::hd95(p, r)?);
        fs.push(metrics::fscore(p, r, tau)?);
    }
    let mean = |v: &[Scalar]| v.iter().sum::<Scalar>() / v.len() as Scalar;
    Ok(PointMetricsRecord {
        tau,
        chamfer: mean(&cd),
        hd95: mean(&hd),
        fscore: mean(&fs),
        per_frame_chamfer: cd,
        per_frame_hd95: hd,
        per_frame_fscore: fs,
    })
}

pub fn default_tau<const D: usize>(scene: &SceneConfig<Scalar, D>) -> Scalar {
    let extent = scene.grid.domain_extent();
    0.01 * extent.norm()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WtDiagnostics {
    pub row: usize,
    pub frequency_hz: Scalar,
    pub amplitude: Scalar,
}

/// Writes the w-t slice heatmap and its spectrum plot; returns the dominant
/// frequency data.
pub fn wt_diagnostics(
    video: &Video,
    row: Option<usize>,
    out: &Path,
    stem_name: &str,
) -> anyhow::Result<WtDiagnostics> {
    let row = row.unwrap_or(video.height() / 2);
    let slice = wt_slice(video, row)?;
    let (freq, amplitude) = dominant_frequency(&slice, video.fps)?;
    std::fs::create_dir_all(out)?;
    let heat = plots::slice_heatmap(&slice, 4);
    rmpm_core::video::write_png(&heat, &out.join(format!("wt_{stem_name}.png")))?;
    let spectrum = slice_spectrum(&slice);
    let peak = spectrum
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, _)| k)
        .unwrap_or(0);
    let plot = plots::spectrum_plot(&spectrum, peak, 320, 200);
    rmpm_core::video::write_png(&plot, &out.join(format!("spectrum_{stem_name}.png")))?;
    Ok(WtDiagnostics {
        row,
        frequency_hz: freq,
        amplitude,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub schema_version: u32,
    pub scene: String,
    pub seed: u64,
    pub selected_init: Option<Vec<ParamVector<Scalar>>>,
    pub final_theta: Vec<ParamVector<Scalar>>,
    pub initial_losses: Option<LossReport<Scalar>>,
    pub best_losses: Option<LossReport<Scalar>>,
    pub metrics: Option<MetricsRecord>,
    pub reference_wt: Option<WtDiagnostics>,
    pub final_wt: Option<WtDiagnostics>,
    pub loss_evaluations: usize,
    pub wall_clock_s: f64,
    pub warnings: Vec<String>,
}

/// Full pipeline: (generate) -> init search -> optimize -> eval -> diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn stage_run<const D: usize>(
    scene: &SceneConfig<Scalar, D>,
    source_desc: &str,
    reference_dir: Option<&Path>,
    skip_init: bool,
    init_theta: Option<Vec<ParamVector<Scalar>>>,
    cfg: &HarnessConfig,
    seed: u64,
    out: &Path,
) -> anyhow::Result<RunResult> {
    let start = Instant::now();
    std::fs::create_dir_all(out)?;

    // Reference: load if given, otherwise synthesize from ground truth.
    let reference: Video = match reference_dir {
        Some(dir) => load_video(dir).context("stage reference: loading video")?,
        None => stage_generate(scene, source_desc, seed, out, None)
            .context("stage generate")?,
    };

    let selected_init = if skip_init {
        None
    } else {
        Some(
            stage_init_search(scene, &reference, cfg, seed.wrapping_add(1), out)
                .context("stage init-search")?,
        )
    };
    let theta0 = match (init_theta, selected_init.clone()) {
        (Some(t), _) => t,
        (None, Some(t)) => t,
        (None, None) => scene
            .truth_params()
            .ok_or_else(|| anyhow!("--skip-init needs --init-params or scene part params"))?,
    };

    let report = stage_optimize(scene, &reference, theta0, cfg, seed.wrapping_add(2), out)
        .context("stage optimize")?;

    // Final render, trajectory and metrics.
    let frames = reference.len();
    let (final_traj, final_video) =
        render_rollout(scene, &report.best_parts, frames).context("stage final-render")?;
    save_video(&final_video, &out.join("render_final"))?;
    write_trajectory(
        &final_traj,
        &out.join("final_trajectory.bin"),
        &out.join("final_trajectory.json"),
    )?;

    let truth_blob = out.join("truth_trajectory.bin");
    let metrics_record = if truth_blob.exists() {
        let truth: PointTrajectory<Scalar, D> =
            read_trajectory(&truth_blob, &out.join("truth_trajectory.json"))?;
        let predicted: PointTrajectory<Scalar, D> = read_trajectory(
            &out.join("final_trajectory.bin"),
            &out.join("final_trajectory.json"),
        )?;
        let tau = cfg.eval.tau.unwrap_or_else(|| default_tau(scene));
        let points = eval_trajectories(&predicted, &truth, tau).context("stage eval")?;
        let video_metrics = VideoMetricsRecord {
            psnr_db: metrics::psnr_video(&final_video, &reference)?,
            ms_ssim: metrics::ms_ssim(&final_video, &reference)?,
        };
        let record = MetricsRecord {
            schema_version: SCHEMA_VERSION,
            points: Some(points),
            video: Some(video_metrics),
        };
        std::fs::write(
            out.join("metrics.json"),
            serde_json::to_string_pretty(&record)?,
        )?;
        Some(record)
    } else {
        None
    };

    let reference_wt = wt_diagnostics(&reference, None, out, "reference").ok();
    let final_wt = wt_diagnostics(&final_video, None, out, "final").ok();

    // Confirm the recorded best loss against a fresh evaluation of the
    // final render (also covers the reference-given path).
    let best_losses = match report.best_losses {
        Some(l) => Some(l),
        None => dms_loss(&final_video, &reference, &cfg.dms).ok(),
    };

    let result = RunResult {
        schema_version: SCHEMA_VERSION,
        scene: source_desc.to_string(),
        seed,
        selected_init,
        final_theta: report.best_parts.clone(),
        initial_losses: report.initial_losses,
        best_losses,
        metrics: metrics_record,
        reference_wt,
        final_wt,
        loss_evaluations: report.loss_evaluations,
        wall_clock_s: start.elapsed().as_secs_f64(),
        warnings: report.warnings.clone(),
    };
    std::fs::write(
        out.join("result.json"),
        serde_json::to_string_pretty(&result)?,
    )?;
    Ok(result)
}

/// Loads the per-iteration loss trace written by the optimize stage.
pub fn load_trace(out: &Path) -> anyhow::Result<Vec<serde_json::Value>> {
    let text = std::fs::read_to_string(out.join("optimize.jsonl"))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}

/// Loads a video directory, resolving either the directory itself or a run
/// output directory containing `reference/`.
pub fn load_video_flexible(path: &Path) -> anyhow::Result<VideoTensor<Scalar>> {
    if path.join("manifest.json").exists() {
        return Ok(load_video(path)?);
    }
    let nested = path.join("reference");
    if nested.join("manifest.json").exists() {
        return Ok(load_video(&nested)?);
    }
    bail!("no video manifest under {}", path.display())
}
