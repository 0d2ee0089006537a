//! `dexflow sample`: draw co-training batches and report their composition
//! without training anything.

use dexflow_core::dataset::CoSampler;
use dexflow_core::pipeline::Embodiment;

use crate::commands::{load_training_data, CliError, Ctx, STREAM_SAMPLER};

pub fn run(ctx: &Ctx, batches: usize) -> Result<(), CliError> {
    let scfg = ctx.cfg.sampler.sampler_config(ctx.stream(STREAM_SAMPLER));
    let data = load_training_data(ctx, &scfg)?;
    println!(
        "sample: ratio {}:{} over {} robot + {} human transitions, batch size {}",
        scfg.w_r,
        scfg.w_h,
        data.robot_len(),
        data.human_len(),
        scfg.batch
    );
    let mut sampler = CoSampler::new(data.robot_len(), data.human_len(), scfg)?;
    for b in 0..batches {
        let batch = sampler.next_batch();
        let (cond, chunks) = data.gather(&batch)?;
        println!(
            "sample: batch {b}: robot={} human={} (cond {}x{}, chunks {}x{})",
            batch.count(Embodiment::Robot),
            batch.count(Embodiment::Human),
            cond.nrows(),
            cond.ncols(),
            chunks.nrows(),
            chunks.ncols()
        );
    }
    Ok(())
}
