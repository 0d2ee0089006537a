//! `dexflow synth`: generate raw capture episodes for both embodiments.

use dexflow_core::capture::{
    frame_seed, synth_episode, MarkerCube, SynthParams, DEFAULT_REPROJ_REJECT_PX,
};
use dexflow_core::pipeline::{save_raw_episode, Embodiment};
use dexflow_core::pose::Pose;
use nalgebra::{UnitQuaternion, Vector3};

use crate::commands::{fresh_dir, CliError, Ctx, STREAM_SYNTH_HUMAN, STREAM_SYNTH_ROBOT};
use crate::world::{synth_task, WorldMap};

pub fn run(ctx: &Ctx) -> Result<(), CliError> {
    let world = WorldMap::new(&ctx.cfg.world);
    let cam = ctx.cfg.camera.intrinsics();
    let cube = MarkerCube::standard(
        ctx.cfg.cube.edge_m,
        Pose::new(Vector3::from(ctx.cfg.cube.wrist_offset_m), UnitQuaternion::identity()),
    );
    let s = &ctx.cfg.synth;

    let sources = [
        (Embodiment::Human, s.human_episodes, s.human_noise_px, s.human_dropout, STREAM_SYNTH_HUMAN),
        (Embodiment::Robot, s.robot_episodes, s.robot_noise_px, s.robot_dropout, STREAM_SYNTH_ROBOT),
    ];
    for (embodiment, count, noise_px, dropout, salt) in sources {
        let dir = ctx.raw_dir().join(embodiment.to_string());
        fresh_dir(&dir)?;
        let stream = ctx.stream(salt);
        let mut tracked_frames = 0usize;
        for i in 0..count {
            let ep_seed = frame_seed(stream, i as u64);
            let task = synth_task(ep_seed, &world, s);
            let params = SynthParams {
                seed: frame_seed(ep_seed, 1),
                embed_seed: s.embed_seed,
                noise_px,
                dropout,
                embed_dim: s.embed_dim,
                scene_anchor: task.anchor,
                rate_hz: s.rate_hz,
                embodiment,
                reject_px: DEFAULT_REPROJ_REJECT_PX,
                finger_amp: s.finger_amp,
                finger_freq_hz: s.finger_freq_hz,
            };
            let (ep, truth) = synth_episode(&task.wrist, &cube, &cam, &params);
            tracked_frames += ep
                .frames
                .iter()
                .filter(|f| f.hands.iter().all(|h| h.wrist.is_some()))
                .count();
            let gt = truth.to_ground_truth(Some(serde_json::json!({
                "start": task.start,
                "goal": task.goal,
            })));
            save_raw_episode(&dir.join(format!("ep-{i:03}")), &ep, Some(&gt))?;
        }
        if count > 0 {
            println!(
                "synth: {embodiment}: {count} episodes x {} frames ({:.1}% tracked) -> {}",
                s.frames,
                100.0 * tracked_frames as f64 / (count * s.frames) as f64,
                dir.display()
            );
        }
    }
    Ok(())
}
