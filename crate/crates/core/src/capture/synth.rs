//! Synthetic capture episodes with known ground truth.
//!
//! Generates what the real rig would log: per-frame marker-corner
//! observations run through the same pose estimator as live data, glove
//! fingertips from forward kinematics of a scripted joint trajectory, and
//! deterministic pseudo image embeddings. Randomness is counter-based per
//! frame, so episodes are reproducible regardless of evaluation order.

use crate::capture::camera::{CameraIntrinsics, MarkerCube};
use crate::capture::pnp::estimate_wrist_pose;
use crate::capture::CornerObservation;
use crate::pipeline::episode::{
    Embodiment, GroundTruth, HandFrame, RawEpisode, RawFrame, FINGERTIP_DIM,
};
use crate::pose::Pose;
use crate::retarget::{forward_kinematics, HandModel};
use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub seed: u64,
    /// Seed for the embedding projection; shared across a dataset so all
    /// episodes embed with the same map.
    pub embed_seed: u64,
    pub noise_px: f64,
    /// Probability that a frame's observations are hidden entirely.
    pub dropout: f64,
    pub embed_dim: usize,
    /// Embeddings encode the offset from the wrist to this point.
    pub scene_anchor: Vector3<f64>,
    pub rate_hz: f64,
    pub embodiment: Embodiment,
    pub reject_px: f64,
    /// Finger joints swing sinusoidally around mid-range by this fraction of
    /// their half-span.
    pub finger_amp: f64,
    pub finger_freq_hz: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            seed: 0,
            embed_seed: 7,
            noise_px: 0.0,
            dropout: 0.0,
            embed_dim: 8,
            scene_anchor: Vector3::new(0.0, 0.0, 0.5),
            rate_hz: 30.0,
            embodiment: Embodiment::Human,
            reject_px: crate::capture::pnp::DEFAULT_REPROJ_REJECT_PX,
            finger_amp: 0.5,
            finger_freq_hz: 0.4,
        }
    }
}

/// Exact values behind a synthetic episode.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    pub wrist: Vec<Pose>,
    pub joints: Vec<Vec<f64>>,
}

impl SynthTruth {
    pub fn to_ground_truth(&self, task: Option<serde_json::Value>) -> GroundTruth {
        GroundTruth {
            wrist: vec![self.wrist.iter().map(|p| p.to_array()).collect()],
            joints: vec![self.joints.clone()],
            task,
        }
    }
}

/// SplitMix-style mix of (seed, counter) into an independent stream seed.
pub fn frame_seed(seed: u64, frame: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E3779B97F4A7C15)
        .wrapping_mul(0xBF58476D1CE4E9B5)
        ^ frame.wrapping_mul(0x94D049BB133111EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E9B5);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Dataset-wide embedding projections: two heads, each `embed_dim` rows of
/// three weights. Seeded so every episode of a dataset, and any later
/// closed-loop evaluation, embeds with the same map.
pub fn embed_heads(embed_seed: u64, embed_dim: usize) -> [Vec<f64>; 2] {
    let mut embed_rng = ChaCha12Rng::seed_from_u64(embed_seed);
    let gauss = Normal::new(0.0, 2.0).unwrap();
    let mut heads = [Vec::new(), Vec::new()];
    for head in &mut heads {
        *head = (0..embed_dim * 3).map(|_| gauss.sample(&mut embed_rng)).collect::<Vec<f64>>();
    }
    heads
}

/// Squashed random projection of a wrist-to-anchor offset, one vector per
/// head; the stand-in for the rig's palm-camera image features.
pub fn embed_offset(heads: &[Vec<f64>; 2], offset: &Vector3<f64>) -> [Vec<f32>; 2] {
    std::array::from_fn(|h| {
        heads[h]
            .chunks_exact(3)
            .map(|w| ((w[0] * offset.x + w[1] * offset.y + w[2] * offset.z).tanh()) as f32)
            .collect()
    })
}

/// Corner observations of every camera-facing, in-image cube face.
fn visible_corners(
    cube_pose: &Pose,
    cube: &MarkerCube,
    cam: &CameraIntrinsics,
) -> Vec<CornerObservation> {
    let mut out = Vec::new();
    for face in &cube.faces {
        let n_cam = cube_pose.rotation() * face.outward_normal();
        let c_cam = cube_pose.transform_point(&face.center());
        if n_cam.dot(&c_cam) >= -1e-9 {
            continue;
        }
        let mut projected = Vec::with_capacity(4);
        for (corner_id, c) in face.corners.iter().enumerate() {
            let p_cam = cube_pose.transform_point(&Vector3::from(*c));
            match cam.project(&p_cam) {
                Some(uv) if cam.contains(&uv) => projected.push((corner_id as u8, uv)),
                _ => break,
            }
        }
        if projected.len() == 4 {
            for (corner_id, uv) in projected {
                out.push(CornerObservation { face_id: face.face_id, corner_id, uv });
            }
        }
    }
    out
}

/// Generates a raw episode from a wrist trajectory, plus the truth that made
/// it. Wrist poses are camera-frame. Fingertips follow a sinusoidal joint
/// schedule on the reference hand; embeddings are a fixed random projection
/// (squashed) of the anchor offset, mimicking a visual feature of the scene.
pub fn synth_episode(
    traj: &[Pose],
    cube: &MarkerCube,
    cam: &CameraIntrinsics,
    params: &SynthParams,
) -> (RawEpisode, SynthTruth) {
    assert!((0.0..1.0).contains(&params.dropout), "dropout must be in [0, 1)");
    let hand = HandModel::reference();
    let noise = Normal::new(0.0, params.noise_px.max(0.0)).unwrap();

    let heads = embed_heads(params.embed_seed, params.embed_dim);

    let joint_schedule = |t: f64| -> Vec<f64> {
        let mut q = Vec::with_capacity(hand.total_joints());
        let mut k = 0;
        for f in &hand.fingers {
            for j in &f.joints {
                let mid = 0.5 * (j.lo + j.hi);
                let span = 0.5 * (j.hi - j.lo);
                let phase = k as f64 * 0.9;
                q.push(
                    mid + params.finger_amp
                        * span
                        * (2.0 * std::f64::consts::PI * params.finger_freq_hz * t + phase).sin(),
                );
                k += 1;
            }
        }
        q
    };

    let mut frames = Vec::with_capacity(traj.len());
    let mut truth_wrist = Vec::with_capacity(traj.len());
    let mut truth_joints = Vec::with_capacity(traj.len());

    for (i, wrist) in traj.iter().enumerate() {
        let t = i as f64 / params.rate_hz;
        let mut rng = ChaCha12Rng::seed_from_u64(frame_seed(params.seed, i as u64));

        let hidden = rng.random::<f64>() < params.dropout;
        let cube_pose = wrist.compose(&cube.wrist_offset.inverse());
        let estimate = if hidden {
            None
        } else {
            let mut obs = visible_corners(&cube_pose, cube, cam);
            for o in &mut obs {
                o.uv[0] += noise.sample(&mut rng);
                o.uv[1] += noise.sample(&mut rng);
            }
            estimate_wrist_pose(&obs, cube, cam, params.reject_px)
        };

        let q = joint_schedule(t);
        let tips = forward_kinematics(&hand, &q).expect("schedule stays in limits");
        let mut fingertips = [0.0f64; FINGERTIP_DIM];
        for (f, tip) in tips.iter().enumerate() {
            fingertips[3 * f..3 * f + 3].copy_from_slice(tip.as_slice());
        }

        let offset = params.scene_anchor - wrist.translation();
        let embeds = embed_offset(&heads, &offset);

        frames.push(RawFrame {
            timestamp: t,
            hands: vec![HandFrame {
                wrist: estimate.map(|e| e.pose),
                fingertips,
                embeds,
            }],
        });
        truth_wrist.push(wrist.clone());
        truth_joints.push(q);
    }

    (
        RawEpisode { embodiment: params.embodiment, rate_hz: params.rate_hz, frames },
        SynthTruth { wrist: truth_wrist, joints: truth_joints },
    )
}
