//! `dexflow train`: fit the action-chunk denoiser on fixed-ratio co-training
//! batches, checkpointing as it goes.

use std::fs;

use dexflow_core::dataset::CoSampler;
use dexflow_core::diffusion::{make_schedule, save_checkpoint, train_step, MlpDenoiser, TrainState};
use serde::Serialize;

use crate::commands::{
    load_training_data, CliError, Ctx, STREAM_NET, STREAM_SAMPLER, STREAM_TRAIN,
};

#[derive(Serialize)]
struct TrainLog {
    steps: usize,
    /// Mean loss over the first and last `window` steps.
    window: usize,
    initial_loss: f64,
    final_loss: f64,
    first_step_loss: f64,
    last_step_loss: f64,
}

pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    let scfg = ctx.cfg.sampler.sampler_config(ctx.stream(STREAM_SAMPLER));
    let data = load_training_data(ctx, &scfg)?;
    let ds = data.primary();
    let t = &ctx.cfg.train;

    let schedule = make_schedule(t.t_max, t.schedule)?;
    let chunk_dim = ds.chunk_len * ds.action_dim;
    let mut denoiser =
        MlpDenoiser::new(chunk_dim, ds.cond_dim(), t.hidden, t.temb_dim, ctx.stream(STREAM_NET));
    let mut state =
        TrainState::new(denoiser.param_count(), t.lr_schedule(), ctx.stream(STREAM_TRAIN));
    let mut sampler = CoSampler::new(data.robot_len(), data.human_len(), scfg)?;

    println!(
        "train: denoiser {} params (chunk {}x{}, cond {}, hidden {}); batches {} robot / {} human of {}",
        denoiser.param_count(),
        ds.chunk_len,
        ds.action_dim,
        ds.cond_dim(),
        t.hidden,
        scfg.robot_per_batch(),
        scfg.human_per_batch(),
        scfg.batch
    );

    let ckpt_root = ctx.checkpoint_dir();
    if ckpt_root.exists() {
        fs::remove_dir_all(&ckpt_root)?;
    }

    let mut losses = Vec::with_capacity(t.steps);
    while state.step < t.steps {
        let batch = sampler.next_batch();
        let (cond, chunks) = data.gather(&batch)?;
        let loss = train_step(&mut state, &mut denoiser, &cond, &chunks, &schedule)?;
        losses.push(loss);
        let done = state.step;
        if done % t.log_every == 0 || done == t.steps {
            println!("train: step {done}/{} loss {loss:.6} lr {:.3e}", t.steps, state.lr.lr_at(done));
        }
        if t.checkpoint_every > 0 && done % t.checkpoint_every == 0 && done < t.steps {
            save_checkpoint(&ckpt_root.join(format!("step-{done:06}")), &denoiser, &state, &schedule)?;
        }
    }
    save_checkpoint(&ckpt_root.join("final"), &denoiser, &state, &schedule)?;

    let window = losses.len().min(100);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let log = TrainLog {
        steps: t.steps,
        window,
        initial_loss: mean(&losses[..window]),
        final_loss: mean(&losses[losses.len() - window..]),
        first_step_loss: losses[0],
        last_step_loss: *losses.last().unwrap(),
    };
    fs::write(ckpt_root.join("train_log.json"), serde_json::to_vec_pretty(&log)?)?;
    println!(
        "train: loss {:.6} -> {:.6} (mean over {window}-step windows); checkpoints in {}",
        log.initial_loss,
        log.final_loss,
        ckpt_root.display()
    );
    Ok(())
}
