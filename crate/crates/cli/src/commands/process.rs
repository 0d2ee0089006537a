//! `dexflow process`: run the raw-to-processed chain over every episode,
//! in parallel across episodes, keeping rejections as data rather than
//! failures.

use std::fs;

use dexflow_core::pipeline::{
    load_raw_episode, process_episode, save_processed_episode, Embodiment, FilterReport,
    ProcessConfig,
};
use dexflow_core::retarget::HandModel;
use rayon::prelude::*;

use crate::commands::{episode_dirs, fresh_dir, CliError, Ctx};

pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    let hand = HandModel::reference();
    let pcfg = ProcessConfig {
        rules: ctx.cfg.filter.rules(),
        sigma_frames: ctx.cfg.smooth.sigma_frames,
        ik: ctx.cfg.ik.params(),
    };

    let mut total_kept = 0usize;
    for embodiment in [Embodiment::Human, Embodiment::Robot] {
        let src = ctx.raw_dir().join(embodiment.to_string());
        if !src.is_dir() {
            continue;
        }
        let dirs = episode_dirs(&src)?;
        if dirs.is_empty() {
            continue;
        }
        let out_root = ctx.processed_dir().join(embodiment.to_string());
        fresh_dir(&out_root)?;

        // One job per episode id; results come back in directory order.
        let outcomes = dirs
            .par_iter()
            .map(|dir| {
                let id = dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| dir.display().to_string());
                let (raw, _truth) = load_raw_episode(dir)?;
                Ok(process_episode(&raw, &id, &hand, &pcfg))
            })
            .collect::<Vec<Result<_, CliError>>>();

        let mut kept = 0usize;
        let mut rejected: Vec<FilterReport> = Vec::new();
        for outcome in outcomes {
            let outcome = outcome?;
            for ep in &outcome.episodes {
                save_processed_episode(&out_root.join(&ep.source_id), ep)?;
                println!(
                    "process: kept {embodiment}/{} ({} frames, retarget rms {:.3} mm)",
                    ep.source_id,
                    ep.frame_count(),
                    1000.0 * ep.report.retarget_residual_rms
                );
                kept += 1;
            }
            for rep in outcome.rejected {
                println!(
                    "process: rejected {embodiment}/{} ({})",
                    rep.source_id,
                    rep.reasons.join(", ")
                );
                rejected.push(rep);
            }
        }
        fs::write(out_root.join("rejected.json"), serde_json::to_vec_pretty(&rejected)?)?;
        println!(
            "process: {embodiment}: {kept} pieces kept, {} rejected -> {}",
            rejected.len(),
            out_root.display()
        );
        total_kept += kept;
    }

    if total_kept == 0 {
        return Err(CliError::NoData(
            "no episodes survived processing; check tracking quality and filter settings".into(),
        ));
    }
    Ok(())
}
