//! The desk-scale toy world shared by data synthesis and closed-loop
//! evaluation.
//!
//! An agent lives on [-1,1]^2. Its position maps onto a tilted plane in
//! front of the camera; the wrist rides that plane with the plane's fixed
//! orientation, so the first two components of a relative arm action are
//! exactly the scaled 2D move that produced it. Evaluation feeds those two
//! components back into the agent.

use crate::config::{EvalConfig, SynthConfig, WorldConfig};
use dexflow_core::capture::{embed_heads, embed_offset};
use dexflow_core::capture::frame_seed;
use dexflow_core::dataset::Dataset;
use dexflow_core::diffusion::{ddim_sample, Denoiser, NoiseSchedule};
use dexflow_core::pipeline::{denormalize, PipelineError, ARM_DIM};
use dexflow_core::pose::Pose;
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

/// Maps agent coordinates to wrist poses on the tilted plane.
#[derive(Debug, Clone)]
pub struct WorldMap {
    pub base: Vector3<f64>,
    pub rot: UnitQuaternion<f64>,
    pub scale: f64,
}

impl WorldMap {
    pub fn new(cfg: &WorldConfig) -> WorldMap {
        let axis = nalgebra::Unit::new_normalize(Vector3::new(1.0, 1.0, 0.0));
        WorldMap {
            base: Vector3::from(cfg.base_m),
            rot: UnitQuaternion::from_axis_angle(&axis, cfg.tilt_deg.to_radians()),
            scale: cfg.scale_m,
        }
    }

    pub fn wrist_pose(&self, agent: [f64; 2]) -> Pose {
        let offset = self.rot * Vector3::new(self.scale * agent[0], self.scale * agent[1], 0.0);
        Pose::new(self.base + offset, self.rot)
    }

    /// The agent move encoded by a relative arm action's translation.
    pub fn agent_delta(&self, arm: &[f64]) -> [f64; 2] {
        [arm[0] / self.scale, arm[1] / self.scale]
    }
}

/// Start and goal for one episode: both inside [-0.8, 0.8]^2, at least 0.5
/// apart so the task is never trivially solved at reset.
pub fn sample_task(rng: &mut impl Rng) -> ([f64; 2], [f64; 2]) {
    fn draw(rng: &mut impl Rng) -> [f64; 2] {
        [rng.random::<f64>() * 1.6 - 0.8, rng.random::<f64>() * 1.6 - 0.8]
    }
    let start = draw(rng);
    loop {
        let goal = draw(rng);
        let d = ((goal[0] - start[0]).powi(2) + (goal[1] - start[1]).powi(2)).sqrt();
        if d >= 0.5 {
            return (start, goal);
        }
    }
}

fn clamp_unit(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(-1.0, 1.0), p[1].clamp(-1.0, 1.0)]
}

fn toward(pos: [f64; 2], goal: [f64; 2], step_max: f64) -> [f64; 2] {
    let d = [goal[0] - pos[0], goal[1] - pos[1]];
    let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if n <= step_max {
        d
    } else {
        [d[0] / n * step_max, d[1] / n * step_max]
    }
}

/// Scripted demonstrator: walks toward the goal at bounded speed with a
/// little per-axis jitter, then dithers around it. Returns `frames` agent
/// positions, starting at `start`.
pub fn expert_positions(
    start: [f64; 2],
    goal: [f64; 2],
    frames: usize,
    step_max: f64,
    jitter: f64,
    rng: &mut impl Rng,
) -> Vec<[f64; 2]> {
    let noise = Normal::new(0.0, jitter.max(0.0)).unwrap();
    let mut out = Vec::with_capacity(frames);
    let mut pos = start;
    for _ in 0..frames {
        out.push(pos);
        let step = toward(pos, goal, step_max);
        pos = clamp_unit([
            pos[0] + step[0] + noise.sample(rng),
            pos[1] + step[1] + noise.sample(rng),
        ]);
    }
    out
}

/// Planar reach task: drive the agent within `success_radius` of the goal by
/// the end of the horizon. Deterministic given its task.
#[derive(Debug, Clone)]
pub struct ToyReachEnv {
    pub pos: [f64; 2],
    pub goal: [f64; 2],
    pub steps_taken: usize,
    pub horizon: usize,
}

impl ToyReachEnv {
    pub fn new(start: [f64; 2], goal: [f64; 2], horizon: usize) -> ToyReachEnv {
        ToyReachEnv { pos: start, goal, steps_taken: 0, horizon }
    }

    pub fn done(&self) -> bool {
        self.steps_taken >= self.horizon
    }

    /// Applies one agent move (already in agent units).
    pub fn step(&mut self, delta: [f64; 2]) {
        assert!(!self.done(), "stepping a finished episode");
        self.pos = clamp_unit([self.pos[0] + delta[0], self.pos[1] + delta[1]]);
        self.steps_taken += 1;
    }

    pub fn distance_to_goal(&self) -> f64 {
        ((self.pos[0] - self.goal[0]).powi(2) + (self.pos[1] - self.goal[1]).powi(2)).sqrt()
    }

    pub fn success(&self, radius: f64) -> bool {
        self.distance_to_goal() <= radius
    }
}

/// A plan is `chunk_len` raw (denormalized) action rows; the runner executes
/// the first `exec_horizon` of them before asking again.
pub trait ChunkPolicy {
    fn plan(&self, env: &ToyReachEnv, history: &[Vec<f64>], plan_seed: u64) -> Vec<Vec<f64>>;
}

/// Replays the scripted demonstrator through the policy interface; proves the
/// closed-loop plumbing can reach 100% success.
pub struct ScriptedPolicy {
    pub world: WorldMap,
    pub chunk_len: usize,
    pub action_dim: usize,
    pub step_max: f64,
}

impl ChunkPolicy for ScriptedPolicy {
    fn plan(&self, env: &ToyReachEnv, _history: &[Vec<f64>], _plan_seed: u64) -> Vec<Vec<f64>> {
        let mut rows = Vec::with_capacity(self.chunk_len);
        let mut pos = env.pos;
        for _ in 0..self.chunk_len {
            let step = toward(pos, env.goal, self.step_max);
            let next = clamp_unit([pos[0] + step[0], pos[1] + step[1]]);
            let moved = [next[0] - pos[0], next[1] - pos[1]];
            let mut row = vec![0.0; self.action_dim];
            row[0] = self.world.scale * moved[0];
            row[1] = self.world.scale * moved[1];
            // dims 3..9 are the flattened identity rotation columns.
            row[3] = 1.0;
            row[7] = 1.0;
            pos = next;
            rows.push(row);
        }
        rows
    }
}

/// Observation builder mirroring the dataset layout exactly: embedding heads
/// for the current wrist position relative to the goal's scene anchor, then
/// the newest-first history of arm actions (identity-padded before the
/// start), all in raw units.
pub struct ObservationSpec {
    pub heads: [Vec<f64>; 2],
    pub world: WorldMap,
    pub entries: usize,
    pub step: usize,
}

impl ObservationSpec {
    pub fn new(
        embed_seed: u64,
        embed_dim: usize,
        world: WorldMap,
        entries: usize,
        step: usize,
    ) -> ObservationSpec {
        ObservationSpec { heads: embed_heads(embed_seed, embed_dim), world, entries, step }
    }

    pub fn cond(&self, pos: [f64; 2], goal: [f64; 2], history: &[Vec<f64>]) -> Vec<f64> {
        let anchor = self.world.wrist_pose(goal).translation();
        let wrist = self.world.wrist_pose(pos);
        let offset = anchor - wrist.translation();
        let embeds = embed_offset(&self.heads, &offset);
        let mut cond: Vec<f64> =
            embeds.iter().flatten().map(|v| *v as f64).collect();
        let identity = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        for k in 0..self.entries {
            let lag = k * self.step;
            let entry: &[f64] = if history.len() > lag {
                &history[history.len() - 1 - lag][..ARM_DIM]
            } else {
                &identity
            };
            // History entries store states exactly as the dataset does:
            // raw action values, f32-quantized on disk.
            cond.extend(entry.iter().map(|v| *v as f32 as f64));
        }
        cond
    }
}

/// Denoises a chunk for the current observation and maps it back to raw
/// action units with the dataset's stats.
pub struct DiffusionPolicy<'a, D: Denoiser> {
    pub denoiser: &'a D,
    pub schedule: &'a NoiseSchedule,
    pub dataset: &'a Dataset,
    pub obs: ObservationSpec,
    pub ddim_steps: usize,
}

impl<D: Denoiser> DiffusionPolicy<'_, D> {
    fn denorm(&self, row: &[f64]) -> Result<Vec<f64>, PipelineError> {
        denormalize(row, &self.dataset.stats, self.dataset.embodiment)
    }
}

impl<D: Denoiser> ChunkPolicy for DiffusionPolicy<'_, D> {
    fn plan(&self, env: &ToyReachEnv, history: &[Vec<f64>], plan_seed: u64) -> Vec<Vec<f64>> {
        let cond = self.obs.cond(env.pos, env.goal, history);
        let flat = ddim_sample(self.denoiser, &cond, self.schedule, self.ddim_steps, plan_seed);
        let dim = self.dataset.action_dim;
        flat.chunks_exact(dim)
            .map(|row| self.denorm(row).expect("stats fitted on this dataset"))
            .collect()
    }
}

/// Outcome of one closed-loop episode.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub final_pos: [f64; 2],
    pub final_distance: f64,
    pub success: bool,
}

/// Rolls one episode: replan every `exec_horizon` steps, execute the leading
/// rows of each plan, keep the executed arm actions as the policy's state
/// history.
pub fn run_episode(
    policy: &impl ChunkPolicy,
    world: &WorldMap,
    episode_seed: u64,
    eval: &EvalConfig,
) -> EpisodeOutcome {
    let mut task_rng = ChaCha12Rng::seed_from_u64(episode_seed);
    let (start, goal) = sample_task(&mut task_rng);
    let mut env = ToyReachEnv::new(start, goal, eval.horizon);
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut plan_idx = 0u64;
    while !env.done() {
        let rows = policy.plan(&env, &history, frame_seed(episode_seed, 1 + plan_idx));
        plan_idx += 1;
        for row in rows.iter().take(eval.exec_horizon) {
            if env.done() {
                break;
            }
            env.step(world.agent_delta(row));
            history.push(row[..ARM_DIM].to_vec());
        }
    }
    EpisodeOutcome {
        seed: episode_seed,
        start,
        goal,
        final_pos: env.pos,
        final_distance: env.distance_to_goal(),
        success: env.success(eval.success_radius),
    }
}

/// Builds the wrist trajectory the demonstrator traces for one synthetic
/// episode, plus its task record.
pub struct SynthTask {
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub positions: Vec<[f64; 2]>,
    pub wrist: Vec<Pose>,
    pub anchor: Vector3<f64>,
}

pub fn synth_task(
    episode_seed: u64,
    world: &WorldMap,
    synth: &SynthConfig,
) -> SynthTask {
    let mut task_rng = ChaCha12Rng::seed_from_u64(frame_seed(episode_seed, 0xA));
    let (start, goal) = sample_task(&mut task_rng);
    let mut path_rng = ChaCha12Rng::seed_from_u64(frame_seed(episode_seed, 0xB));
    let positions = expert_positions(
        start,
        goal,
        synth.frames,
        synth.expert_step,
        synth.expert_jitter,
        &mut path_rng,
    );
    let wrist = positions.iter().map(|p| world.wrist_pose(*p)).collect();
    SynthTask { start, goal, positions, wrist, anchor: world.wrist_pose(goal).translation() }
}
