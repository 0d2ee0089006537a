//! `dexflow eval`: closed-loop rollouts of a trained (or scripted) policy on
//! the reach task, with a machine-readable report.

use std::fs;
use std::path::PathBuf;

use clap::ValueEnum;
use dexflow_core::capture::frame_seed;
use dexflow_core::dataset::load_dataset;
use dexflow_core::diffusion::load_checkpoint;
use dexflow_core::pipeline::{Embodiment, ARM_DIM};
use dexflow_core::retarget::HandModel;
use serde::Serialize;

use crate::commands::{CliError, Ctx, STREAM_EVAL};
use crate::world::{
    run_episode, DiffusionPolicy, EpisodeOutcome, ObservationSpec, ScriptedPolicy, WorldMap,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    /// The trained denoiser, sampled with deterministic few-step reverse
    /// diffusion.
    Diffusion,
    /// The demonstrator script behind the synthetic data; checks the
    /// closed-loop plumbing end to end.
    Scripted,
}

#[derive(Serialize)]
struct EvalReport {
    policy: String,
    episodes: usize,
    successes: usize,
    success_rate: f64,
    mean_final_distance: f64,
    success_radius: f64,
    horizon: usize,
    exec_horizon: usize,
    outcomes: Vec<EpisodeOutcome>,
}

pub fn run(ctx: &Ctx, policy: PolicyKind, checkpoint: Option<PathBuf>) -> Result<(), CliError> {
    let world = WorldMap::new(&ctx.cfg.world);
    let e = &ctx.cfg.eval;
    let eval_stream = ctx.stream(STREAM_EVAL);
    let seeds: Vec<u64> = (0..e.episodes).map(|i| frame_seed(eval_stream, i as u64)).collect();

    let outcomes: Vec<EpisodeOutcome> = match policy {
        PolicyKind::Scripted => {
            let p = ScriptedPolicy {
                world: world.clone(),
                chunk_len: ctx.cfg.dataset.chunk_len,
                action_dim: ARM_DIM + HandModel::reference().total_joints(),
                step_max: ctx.cfg.synth.expert_step,
            };
            seeds.iter().map(|s| run_episode(&p, &world, *s, e)).collect()
        }
        PolicyKind::Diffusion => {
            let ds_dir = ctx.dataset_dir().join(Embodiment::Robot.to_string());
            if !ds_dir.is_dir() {
                return Err(CliError::NoData(format!(
                    "robot dataset missing at {}; eval denormalizes with its stats",
                    ds_dir.display()
                )));
            }
            let dataset = load_dataset(&ds_dir)?;
            let ckpt_dir = checkpoint.unwrap_or_else(|| ctx.checkpoint_dir().join("final"));
            let ckpt = load_checkpoint(&ckpt_dir)?;
            let chunk_dim = dataset.chunk_len * dataset.action_dim;
            if ckpt.denoiser.chunk_dim != chunk_dim || ckpt.denoiser.cond_dim != dataset.cond_dim()
            {
                return Err(CliError::Invalid(format!(
                    "checkpoint shapes (chunk {}, cond {}) do not match the dataset (chunk {chunk_dim}, cond {})",
                    ckpt.denoiser.chunk_dim,
                    ckpt.denoiser.cond_dim,
                    dataset.cond_dim()
                )));
            }
            if e.ddim_steps > ckpt.schedule.t_max {
                return Err(CliError::Invalid(format!(
                    "eval.ddim_steps {} exceeds the checkpoint's schedule length {}",
                    e.ddim_steps, ckpt.schedule.t_max
                )));
            }
            let p = DiffusionPolicy {
                denoiser: &ckpt.denoiser,
                schedule: &ckpt.schedule,
                dataset: &dataset,
                obs: ObservationSpec::new(
                    ctx.cfg.synth.embed_seed,
                    ctx.cfg.synth.embed_dim,
                    world.clone(),
                    dataset.entries,
                    dataset.step,
                ),
                ddim_steps: e.ddim_steps,
            };
            seeds.iter().map(|s| run_episode(&p, &world, *s, e)).collect()
        }
    };

    let successes = outcomes.iter().filter(|o| o.success).count();
    let mean_final_distance =
        outcomes.iter().map(|o| o.final_distance).sum::<f64>() / outcomes.len() as f64;
    let report = EvalReport {
        policy: format!("{policy:?}").to_lowercase(),
        episodes: e.episodes,
        successes,
        success_rate: successes as f64 / e.episodes as f64,
        mean_final_distance,
        success_radius: e.success_radius,
        horizon: e.horizon,
        exec_horizon: e.exec_horizon,
        outcomes,
    };
    fs::create_dir_all(&ctx.root)?;
    let report_path = ctx.root.join("eval_report.json");
    fs::write(&report_path, serde_json::to_vec_pretty(&report)?)?;
    println!(
        "eval: {successes}/{} episodes reached the goal ({:.1}%), mean final distance {:.4}",
        e.episodes,
        100.0 * report.success_rate,
        mean_final_distance
    );
    println!("eval: report written to {}", report_path.display());
    Ok(())
}
