//! `dexflow build`: assemble processed episodes into per-embodiment training
//! datasets with shared normalization stats.

use dexflow_core::dataset::{build_dataset, save_dataset};
use dexflow_core::pipeline::{load_processed_episode, Embodiment};

use crate::commands::{episode_dirs, fresh_dir, CliError, Ctx};

pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    let dcfg = ctx.cfg.dataset.dataset_config();
    let mut built = 0usize;
    for embodiment in [Embodiment::Human, Embodiment::Robot] {
        let src = ctx.processed_dir().join(embodiment.to_string());
        if !src.is_dir() {
            continue;
        }
        let mut episodes = Vec::new();
        for dir in episode_dirs(&src)? {
            episodes.push(load_processed_episode(&dir)?);
        }
        if episodes.is_empty() {
            continue;
        }
        let ds = build_dataset(&episodes, &dcfg)?;
        let out = ctx.dataset_dir().join(embodiment.to_string());
        fresh_dir(&out)?;
        save_dataset(&out, &ds)?;
        println!(
            "build: {embodiment}: {} transitions from {} episodes ({} too short) -> {}",
            ds.len(),
            ds.episodes.len(),
            ds.skipped.len(),
            out.display()
        );
        built += 1;
    }
    if built == 0 {
        return Err(CliError::NoData(format!(
            "no processed episodes under {}; run `dexflow process` first",
            ctx.processed_dir().display()
        )));
    }
    Ok(())
}
