//! `dexflow stats`: summarize what is on disk at every pipeline stage.

use dexflow_core::dataset::load_dataset;
use dexflow_core::pipeline::Embodiment;

use crate::commands::{episode_dirs, CliError, Ctx};

pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    let mut anything = false;
    for embodiment in [Embodiment::Human, Embodiment::Robot] {
        let name = embodiment.to_string();
        let raw = ctx.raw_dir().join(&name);
        if raw.is_dir() {
            println!("stats: {embodiment}: {} raw episodes in {}", episode_dirs(&raw)?.len(), raw.display());
            anything = true;
        }
        let processed = ctx.processed_dir().join(&name);
        if processed.is_dir() {
            println!(
                "stats: {embodiment}: {} processed pieces in {}",
                episode_dirs(&processed)?.len(),
                processed.display()
            );
            anything = true;
        }
        let ds_dir = ctx.dataset_dir().join(&name);
        if ds_dir.is_dir() {
            let ds = load_dataset(&ds_dir)?;
            println!(
                "stats: {embodiment}: dataset {} transitions from {} episodes ({} too short), cond {} = {} embed + {} state, chunk {} x {} actions",
                ds.len(),
                ds.episodes.len(),
                ds.skipped.len(),
                ds.cond_dim(),
                ds.embed_width(),
                ds.state_dim(),
                ds.chunk_len,
                ds.action_dim
            );
            let lo = ds.stats.lo.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ds.stats.hi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            println!("stats: {embodiment}: action bounds span [{lo:.5}, {hi:.5}]");
            anything = true;
        }
    }
    let ckpt = ctx.checkpoint_dir();
    if ckpt.is_dir() {
        let mut dirs = episode_dirs(&ckpt)?;
        dirs.retain(|d| d.join("manifest.json").is_file());
        println!("stats: {} checkpoints in {}", dirs.len(), ckpt.display());
        anything = true;
    }
    if !anything {
        println!("stats: nothing under {} yet; start with `dexflow synth`", ctx.root.display());
    }
    Ok(())
}
