//! Command-line pipeline for inverse material-parameter recovery.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime or simulation
//! failure, 3 i/o error.

mod config;
mod plots;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use rmpm_core::dms::dms_loss;
use rmpm_core::init::InitError;
use rmpm_core::metrics::{self, MetricError};
use rmpm_core::mpm::trajectory::{read_trajectory, PointTrajectory, TrajectoryError};
use rmpm_core::mpm::SimError;
use rmpm_core::optim::OptimError;
use rmpm_core::params::{ParamIndex, ParamVector};
use rmpm_core::dms::DmsError;
use rmpm_core::render::RenderError;
use rmpm_core::scene::{SceneError, SCHEMA_VERSION};
use rmpm_core::video::VideoError;
use rmpm_core::Scalar;

use config::HarnessConfig;
use stages::SceneSource;

#[derive(Parser)]
#[command(
    name = "rmpm",
    about = "Recovers part-level material parameters of particle scenes from reference videos",
    version
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// Scene: a JSON file path or a template name (beam, two_part_pendulum,
    /// blob_drop).
    #[arg(long, global = true)]
    scene: Option<String>,
    /// Reference video directory (PNG frames plus manifest.json).
    #[arg(long = "ref", global = true)]
    reference: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON file overriding harness defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scene's ground-truth parameters and write the reference
    /// video, trajectory, and truth record.
    Generate {
        /// Frames to generate (default: the scene's own frame count).
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Latin-hypercube candidate search scored against the reference video.
    InitSearch,
    /// Log-domain parameter optimization against the reference video.
    Optimize {
        /// JSON file with one parameter vector per part to start from
        /// (default: the scene's part parameters).
        #[arg(long)]
        init_params: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Full pipeline: generate (if no --ref), init search, optimize, eval.
    Run {
        /// Skip the init search; start from --init-params or scene params.
        #[arg(long)]
        skip_init: bool,
        #[arg(long)]
        init_params: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Point-trajectory and video metrics.
    Eval {
        #[arg(long)]
        pred_traj: PathBuf,
        #[arg(long)]
        ref_traj: PathBuf,
        /// F-score threshold in meters (default: 1% of the domain diagonal
        /// when --scene is given, else 0.01).
        #[arg(long)]
        tau: Option<Scalar>,
        #[arg(long)]
        pred_video: Option<PathBuf>,
        #[arg(long)]
        ref_video: Option<PathBuf>,
    },
    /// Dual-domain loss between two video directories, JSON to stdout.
    DmsCompare {
        rendered: PathBuf,
        reference: PathBuf,
    },
    /// w-t slice heatmap, temporal spectrum, and dominant frequency.
    WtPlot {
        #[arg(long)]
        row: Option<usize>,
    },
    /// Human-readable summary and plots for a run output directory.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Maps error chains onto the documented exit codes.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<SceneError>() {
            return match e {
                SceneError::Io { .. } => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<SimError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<OptimError>() {
            return match e {
                OptimError::BadConfig(_) => 1,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<InitError>() {
            return match e {
                InitError::AllDisqualified => 2,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<VideoError>() {
            return match e {
                VideoError::Io { .. } | VideoError::Png { .. } => 3,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<TrajectoryError>() {
            return match e {
                TrajectoryError::Io { .. } => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<DmsError>().is_some()
            || cause.downcast_ref::<MetricError>().is_some()
            || cause.downcast_ref::<RenderError>().is_some()
        {
            return 1;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 1;
        }
    }
    2
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let cfg = HarnessConfig::load(cli.global.config.as_deref())?;
    match &cli.command {
        Command::DmsCompare {
            rendered,
            reference,
        } => cmd_dms_compare(rendered, reference, &cfg),
        Command::Eval {
            pred_traj,
            ref_traj,
            tau,
            pred_video,
            ref_video,
        } => cmd_eval(
            &cli.global,
            &cfg,
            pred_traj,
            ref_traj,
            *tau,
            pred_video.as_deref(),
            ref_video.as_deref(),
        ),
        Command::WtPlot { row } => cmd_wt_plot(&cli.global, *row),
        Command::Report => cmd_report(&cli.global),
        _ => {
            // Scene-bound verbs dispatch on the scene dimension.
            let scene_arg = cli
                .global
                .scene
                .as_deref()
                .ok_or_else(|| anyhow!("--scene is required for this command"))?;
            let source = SceneSource::parse(scene_arg);
            match source.dimension()? {
                2 => scene_command::<2>(&cli, &source, &cfg),
                3 => scene_command::<3>(&cli, &source, &cfg),
                d => Err(anyhow!(SceneError::Validation(format!(
                    "unsupported scene dimension {d}"
                )))),
            }
        }
    }
}

fn out_dir(global: &GlobalArgs) -> anyhow::Result<&Path> {
    global
        .out
        .as_deref()
        .ok_or_else(|| anyhow!("--out is required for this command"))
}

fn scene_command<const D: usize>(
    cli: &Cli,
    source: &SceneSource,
    cfg: &HarnessConfig,
) -> anyhow::Result<()> {
    let seed = cli.global.seed;
    let scene = stages::load_scene_dim::<D>(source, seed, cfg)?;
    match &cli.command {
        Command::Generate { frames } => {
            let out = out_dir(&cli.global)?;
            stages::stage_generate(&scene, &source.describe(), seed, out, *frames)?;
            println!(
                "wrote reference video, trajectory and truth record to {}",
                out.display()
            );
            Ok(())
        }
        Command::InitSearch => {
            let out = out_dir(&cli.global)?;
            let reference = load_reference(&cli.global)?;
            let theta =
                stages::stage_init_search(&scene, &reference, cfg, seed.wrapping_add(1), out)?;
            println!("selected init:");
            print_theta_table(&scene_part_names(&scene), &theta, None);
            Ok(())
        }
        Command::Optimize {
            init_params,
            iterations,
        } => {
            let out = out_dir(&cli.global)?;
            let reference = load_reference(&cli.global)?;
            let mut cfg = cfg.clone();
            if let Some(iters) = iterations {
                cfg.optimize.iterations = *iters;
            }
            let theta0 = match init_params {
                Some(path) => read_params_file(path, scene.parts.len())?,
                None => scene.truth_params().ok_or_else(|| {
                    anyhow!("scene parts carry no params; pass --init-params")
                })?,
            };
            let report =
                stages::stage_optimize(&scene, &reference, theta0, &cfg, seed.wrapping_add(2), out)?;
            let result_path = out.join("result.json");
            std::fs::write(
                &result_path,
                serde_json::to_string_pretty(&serde_json::json!({
                    "schema_version": SCHEMA_VERSION,
                    "best_theta": report.best_parts,
                    "initial_losses": report.initial_losses,
                    "best_losses": report.best_losses,
                    "loss_evaluations": report.loss_evaluations,
                    "warnings": report.warnings,
                }))?,
            )?;
            println!("best parameters:");
            print_theta_table(&scene_part_names(&scene), &report.best_parts, None);
            Ok(())
        }
        Command::Run {
            skip_init,
            init_params,
            iterations,
        } => {
            let out = out_dir(&cli.global)?;
            let mut cfg = cfg.clone();
            if let Some(iters) = iterations {
                cfg.optimize.iterations = *iters;
            }
            let init_theta = match init_params {
                Some(path) => Some(read_params_file(path, scene.parts.len())?),
                None => None,
            };
            let result = stages::stage_run(
                &scene,
                &source.describe(),
                cli.global.reference.as_deref(),
                *skip_init,
                init_theta,
                &cfg,
                seed,
                out,
            )?;
            println!(
                "run complete in {:.1}s ({} loss evaluations); result.json written",
                result.wall_clock_s, result.loss_evaluations
            );
            print_theta_table(&scene_part_names(&scene), &result.final_theta, None);
            Ok(())
        }
        _ => unreachable!("non-scene commands handled in dispatch"),
    }
}

fn scene_part_names<const D: usize>(
    scene: &rmpm_core::scene::SceneConfig<Scalar, D>,
) -> Vec<String> {
    scene.parts.iter().map(|p| p.name.clone()).collect()
}

fn load_reference(global: &GlobalArgs) -> anyhow::Result<rmpm_core::Video> {
    let dir = global
        .reference
        .as_deref()
        .ok_or_else(|| anyhow!("--ref is required for this command"))?;
    stages::load_video_flexible(dir)
}

fn read_params_file(path: &Path, parts: usize) -> anyhow::Result<Vec<ParamVector<Scalar>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let theta: Vec<ParamVector<Scalar>> = serde_json::from_str(&text)
        .with_context(|| format!("parsing parameter vectors from {}", path.display()))?;
    if theta.len() != parts {
        return Err(anyhow!(SceneError::Validation(format!(
            "{} parameter vectors for {} parts",
            theta.len(),
            parts
        ))));
    }
    Ok(theta)
}

fn cmd_dms_compare(rendered: &Path, reference: &Path, cfg: &HarnessConfig) -> anyhow::Result<()> {
    let a = stages::load_video_flexible(rendered)?;
    let b = stages::load_video_flexible(reference)?;
    let report = dms_loss(&a, &b, &cfg.dms)?;
    let out = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "rendered": rendered.display().to_string(),
        "reference": reference.display().to_string(),
        "losses": report,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_eval(
    global: &GlobalArgs,
    cfg: &HarnessConfig,
    pred_traj: &Path,
    ref_traj: &Path,
    tau: Option<Scalar>,
    pred_video: Option<&Path>,
    ref_video: Option<&Path>,
) -> anyhow::Result<()> {
    let manifest_of = |blob: &Path| blob.with_extension("json");
    // Peek the dimension from the manifest.
    let manifest: rmpm_core::mpm::trajectory::TrajectoryManifest =
        serde_json::from_str(&std::fs::read_to_string(manifest_of(pred_traj))?)?;
    let tau = match tau {
        Some(t) => t,
        None => match &global.scene {
            Some(arg) => {
                let source = SceneSource::parse(arg);
                match source.dimension()? {
                    2 => stages::default_tau(&stages::load_scene_dim::<2>(
                        &source,
                        global.seed,
                        cfg,
                    )?),
                    _ => stages::default_tau(&stages::load_scene_dim::<3>(
                        &source,
                        global.seed,
                        cfg,
                    )?),
                }
            }
            None => 0.01,
        },
    };
    let points = match manifest.dim {
        2 => {
            let p: PointTrajectory<Scalar, 2> = read_trajectory(pred_traj, &manifest_of(pred_traj))?;
            let r: PointTrajectory<Scalar, 2> = read_trajectory(ref_traj, &manifest_of(ref_traj))?;
            stages::eval_trajectories(&p, &r, tau)?
        }
        3 => {
            let p: PointTrajectory<Scalar, 3> = read_trajectory(pred_traj, &manifest_of(pred_traj))?;
            let r: PointTrajectory<Scalar, 3> = read_trajectory(ref_traj, &manifest_of(ref_traj))?;
            stages::eval_trajectories(&p, &r, tau)?
        }
        d => return Err(anyhow!("unsupported trajectory dimension {d}")),
    };
    let video = match (pred_video, ref_video) {
        (Some(p), Some(r)) => {
            let vp = stages::load_video_flexible(p)?;
            let vr = stages::load_video_flexible(r)?;
            Some(stages::VideoMetricsRecord {
                psnr_db: metrics::psnr_video(&vp, &vr)?,
                ms_ssim: metrics::ms_ssim(&vp, &vr)?,
            })
        }
        _ => None,
    };
    let record = stages::MetricsRecord {
        schema_version: SCHEMA_VERSION,
        points: Some(points),
        video,
    };
    let text = serde_json::to_string_pretty(&record)?;
    if let Some(out) = global.out.as_deref() {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("metrics.json"), &text)?;
    }
    println!("{text}");
    Ok(())
}

fn cmd_wt_plot(global: &GlobalArgs, row: Option<usize>) -> anyhow::Result<()> {
    let out = out_dir(global)?;
    let video = load_reference(global)?;
    std::fs::create_dir_all(out)?;
    let diag = stages::wt_diagnostics(&video, row, out, "slice")?;
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "row": diag.row,
        "dominant_frequency_hz": diag.frequency_hz,
        "amplitude": diag.amplitude,
    }))?;
    std::fs::write(out.join("wt.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn cmd_report(global: &GlobalArgs) -> anyhow::Result<()> {
    let dir = out_dir(global)?;
    let result_path = dir.join("result.json");
    let result: stages::RunResult = serde_json::from_str(
        &std::fs::read_to_string(&result_path)
            .with_context(|| format!("missing result bundle: {}", result_path.display()))?,
    )?;

    // Loss curve from the optimize trace.
    let trace = stages::load_trace(dir).unwrap_or_default();
    let total: Vec<Scalar> = trace
        .iter()
        .filter_map(|v| v.get("l_dms").and_then(|x| x.as_f64()))
        .collect();
    let spatial: Vec<Scalar> = trace
        .iter()
        .filter_map(|v| v.get("l_spatial").and_then(|x| x.as_f64()))
        .collect();
    let spectral: Vec<Scalar> = trace
        .iter()
        .filter_map(|v| v.get("l_spec").and_then(|x| x.as_f64()))
        .collect();
    let plot = plots::line_plot(
        &[
            (&total, [1.0, 0.6, 0.2]),
            (&spatial, [0.4, 0.8, 0.4]),
            (&spectral, [0.4, 0.6, 1.0]),
        ],
        480,
        280,
    );
    rmpm_core::video::write_png(&plot, &dir.join("loss_curve.png"))?;

    // w-t and spectrum plots for reference and final render.
    if let Ok(video) = stages::load_video_flexible(&dir.join("reference")) {
        stages::wt_diagnostics(&video, result.reference_wt.as_ref().map(|d| d.row), dir, "reference")?;
    }
    if let Ok(video) = stages::load_video_flexible(&dir.join("render_final")) {
        stages::wt_diagnostics(&video, result.final_wt.as_ref().map(|d| d.row), dir, "final")?;
    }

    // Text table of recovered parameters, with log10 errors when the truth
    // record exists.
    let truth: Option<stages::TruthRecord> = std::fs::read_to_string(dir.join("truth.json"))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    let mut lines = Vec::new();
    lines.push(format!("scene: {}", result.scene));
    lines.push(format!("seed: {}", result.seed));
    if let (Some(init), Some(best)) = (&result.initial_losses, &result.best_losses) {
        lines.push(format!(
            "loss: initial {:.5} -> best {:.5}",
            init.total, best.total
        ));
    }
    if let Some(m) = result.metrics.as_ref().and_then(|m| m.points.as_ref()) {
        lines.push(format!(
            "points: chamfer {:.3e} m^2, hd95 {:.3e} m, f-score {:.3} (tau {:.3e} m)",
            m.chamfer, m.hd95, m.fscore, m.tau
        ));
    }
    if let Some(v) = result.metrics.as_ref().and_then(|m| m.video.as_ref()) {
        lines.push(format!(
            "video: psnr {:.2} dB, ms-ssim {:.4}",
            v.psnr_db, v.ms_ssim
        ));
    }
    if let (Some(r), Some(f)) = (&result.reference_wt, &result.final_wt) {
        lines.push(format!(
            "dominant frequency: reference {:.2} Hz, final {:.2} Hz (row {})",
            r.frequency_hz, f.frequency_hz, r.row
        ));
    }
    if truth.is_none() {
        lines.push("note: truth.json absent; log10 error column omitted".into());
    }
    lines.push(String::new());
    let names: Vec<String> = (0..result.final_theta.len())
        .map(|m| format!("part {m}"))
        .collect();
    lines.push(theta_table(
        &names,
        &result.final_theta,
        truth.as_ref().map(|t| t.theta.as_slice()),
    ));
    let text = lines.join("\n");
    std::fs::write(dir.join("report.txt"), &text)?;
    println!("{text}");
    Ok(())
}

fn theta_table(
    names: &[String],
    theta: &[ParamVector<Scalar>],
    truth: Option<&[ParamVector<Scalar>]>,
) -> String {
    let mut out = String::new();
    for (m, vec) in theta.iter().enumerate() {
        out.push_str(&format!("{}:\n", names.get(m).cloned().unwrap_or_default()));
        for idx in ParamIndex::ALL {
            let v = vec.get(idx as usize);
            match truth.and_then(|t| t.get(m)) {
                Some(t) => {
                    let tv = t.get(idx as usize);
                    let err = (v.log10() - tv.log10()).abs();
                    out.push_str(&format!(
                        "  {:<18} {:>12.5e}  truth {:>12.5e}  |log10 err| {:.3}\n",
                        idx.name(),
                        v,
                        tv,
                        err
                    ));
                }
                None => {
                    out.push_str(&format!("  {:<18} {:>12.5e}\n", idx.name(), v));
                }
            }
        }
    }
    out
}

fn print_theta_table(
    names: &[String],
    theta: &[ParamVector<Scalar>],
    truth: Option<&[ParamVector<Scalar>]>,
) {
    print!("{}", theta_table(names, theta, truth));
}
