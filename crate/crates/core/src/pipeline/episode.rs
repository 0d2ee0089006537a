//! Episode data model and on-disk layout.
//!
//! An episode directory holds `manifest.json`, `frames.bin` (little-endian
//! f32 records, stride recorded in the manifest) and `embeddings.bin`
//! (little-endian f32, two vectors per hand per frame). Processed episodes
//! add `actions.bin` and `report.json`.

use crate::pipeline::filter::FilterReport;
use crate::pose::Pose;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Arm action dimension: 3 translation + 6 rotation components.
pub const ARM_DIM: usize = 9;
/// Fingertip positions per hand: five fingers times xyz.
pub const FINGERTIP_DIM: usize = 15;

#[derive(Debug, Error)]
pub enum EpisodeIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: u32, found: u32 },
    #[error("malformed episode: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Embodiment {
    Human,
    Robot,
}

impl std::fmt::Display for Embodiment {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        match self {
            Embodiment::Human => write!(f, "human"),
            Embodiment::Robot => write!(f, "robot"),
        }
    }
}

/// Per-hand capture data for one frame. The wrist pose is absent on tracking
/// loss; glove fingertips and palm-image embeddings are always present.
#[derive(Debug, Clone, PartialEq)]
pub struct HandFrame {
    pub wrist: Option<Pose>,
    /// Five fingertip positions in the wrist frame, xyz per finger, meters.
    pub fingertips: [f64; FINGERTIP_DIM],
    /// Pinky-side and thumb-side palm image embeddings.
    pub embeds: [Vec<f32>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub timestamp: f64,
    pub hands: Vec<HandFrame>,
}

/// A raw capture episode: timestamped frames at a fixed rate, one or two
/// hands, all frames carrying the same hand count and embedding width.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEpisode {
    pub embodiment: Embodiment,
    pub rate_hz: f64,
    pub frames: Vec<RawFrame>,
}

impl RawEpisode {
    pub fn hand_count(&self) -> usize {
        self.frames.first().map_or(0, |f| f.hands.len())
    }

    pub fn embed_dim(&self) -> usize {
        self.frames.first().map_or(0, |f| f.hands[0].embeds[0].len())
    }

    pub fn validate(&self) -> Result<(), EpisodeIoError> {
        let err = |m: String| Err(EpisodeIoError::Malformed(m));
        if self.rate_hz <= 0.0 {
            return err(format!("rate must be positive, got {}", self.rate_hz));
        }
        let hands = self.hand_count();
        if !self.frames.is_empty() && !(1..=2).contains(&hands) {
            return err(format!("hand count must be 1 or 2, got {hands}"));
        }
        let dim = self.embed_dim();
        for (i, f) in self.frames.iter().enumerate() {
            if f.hands.len() != hands {
                return err(format!("frame {i} has {} hands, expected {hands}", f.hands.len()));
            }
            if i > 0 && f.timestamp <= self.frames[i - 1].timestamp {
                return err(format!("timestamps not strictly increasing at frame {i}"));
            }
            for h in &f.hands {
                if h.embeds[0].len() != dim || h.embeds[1].len() != dim {
                    return err(format!("frame {i} embedding width differs from {dim}"));
                }
            }
        }
        Ok(())
    }
}

/// Known-good values attached to synthetic episodes so downstream stages can
/// be scored against the truth that generated them.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct GroundTruth {
    /// True wrist pose per hand per frame, wire order (tx..qz).
    #[serde(default)]
    pub wrist: Vec<Vec<[f64; 7]>>,
    /// True hand joint angles per hand per frame.
    #[serde(default)]
    pub joints: Vec<Vec<Vec<f64>>>,
    /// Scenario-specific payload (e.g. task start and target).
    #[serde(default)]
    pub task: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeManifest {
    schema_version: u32,
    stage: String,
    embodiment: Embodiment,
    rate_hz: f64,
    frame_count: usize,
    hands: usize,
    embed_dim: usize,
    frame_stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    joints_per_hand: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    action_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<GroundTruth>,
}

fn f32s_to_bytes(vals: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(vals.len() * 4);
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn bytes_to_f32s(bytes: &[u8]) -> Result<Vec<f32>, EpisodeIoError> {
    if bytes.len() % 4 != 0 {
        return Err(EpisodeIoError::Malformed(format!(
            "binary length {} not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_manifest(dir: &Path, stage: &str) -> Result<EpisodeManifest, EpisodeIoError> {
    let manifest: EpisodeManifest =
        serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(EpisodeIoError::SchemaMismatch {
            expected: SCHEMA_VERSION,
            found: manifest.schema_version,
        });
    }
    if manifest.stage != stage {
        return Err(EpisodeIoError::Malformed(format!(
            "expected a {stage} episode, found stage {:?}",
            manifest.stage
        )));
    }
    Ok(manifest)
}

/// Writes a raw episode directory, optionally recording ground truth in the
/// manifest.
pub fn save_raw_episode(
    dir: &Path,
    ep: &RawEpisode,
    truth: Option<&GroundTruth>,
) -> Result<(), EpisodeIoError> {
    ep.validate()?;
    fs::create_dir_all(dir)?;
    let hands = ep.hand_count();
    let embed_dim = ep.embed_dim();
    // Per frame: timestamp, then per hand: tracked flag, pose (7), fingertips.
    let frame_stride = 1 + hands * (1 + 7 + FINGERTIP_DIM);

    let mut frames = Vec::with_capacity(ep.frames.len() * frame_stride);
    let mut embeds = Vec::with_capacity(ep.frames.len() * hands * 2 * embed_dim);
    for f in &ep.frames {
        frames.push(f.timestamp as f32);
        for h in &f.hands {
            match &h.wrist {
                Some(p) => {
                    frames.push(1.0);
                    frames.extend(p.to_array().iter().map(|v| *v as f32));
                }
                None => {
                    frames.push(0.0);
                    frames.extend([0.0f32, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
                }
            }
            frames.extend(h.fingertips.iter().map(|v| *v as f32));
            embeds.extend_from_slice(&h.embeds[0]);
            embeds.extend_from_slice(&h.embeds[1]);
        }
    }

    let manifest = EpisodeManifest {
        schema_version: SCHEMA_VERSION,
        stage: "raw".into(),
        embodiment: ep.embodiment,
        rate_hz: ep.rate_hz,
        frame_count: ep.frames.len(),
        hands,
        embed_dim,
        frame_stride,
        joints_per_hand: None,
        action_dim: None,
        ground_truth: truth.cloned(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(dir.join("frames.bin"), f32s_to_bytes(&frames))?;
    fs::write(dir.join("embeddings.bin"), f32s_to_bytes(&embeds))?;
    Ok(())
}

pub fn load_raw_episode(
    dir: &Path,
) -> Result<(RawEpisode, Option<GroundTruth>), EpisodeIoError> {
    let manifest = read_manifest(dir, "raw")?;
    let frames = bytes_to_f32s(&fs::read(dir.join("frames.bin"))?)?;
    let embeds = bytes_to_f32s(&fs::read(dir.join("embeddings.bin"))?)?;

    let stride = manifest.frame_stride;
    let expected = 1 + manifest.hands * (1 + 7 + FINGERTIP_DIM);
    if stride != expected || frames.len() != manifest.frame_count * stride {
        return Err(EpisodeIoError::Malformed(format!(
            "frames.bin length {} does not match manifest ({} frames, stride {})",
            frames.len(),
            manifest.frame_count,
            stride
        )));
    }
    let embed_stride = manifest.hands * 2 * manifest.embed_dim;
    if embeds.len() != manifest.frame_count * embed_stride {
        return Err(EpisodeIoError::Malformed("embeddings.bin length mismatch".into()));
    }

    let mut out_frames = Vec::with_capacity(manifest.frame_count);
    for i in 0..manifest.frame_count {
        let rec = &frames[i * stride..(i + 1) * stride];
        let erec = &embeds[i * embed_stride..(i + 1) * embed_stride];
        let mut hands = Vec::with_capacity(manifest.hands);
        for h in 0..manifest.hands {
            let base = 1 + h * (1 + 7 + FINGERTIP_DIM);
            let tracked = rec[base] != 0.0;
            let mut pose_vals = [0.0f64; 7];
            for (j, v) in pose_vals.iter_mut().enumerate() {
                *v = rec[base + 1 + j] as f64;
            }
            let mut fingertips = [0.0f64; FINGERTIP_DIM];
            for (j, v) in fingertips.iter_mut().enumerate() {
                *v = rec[base + 8 + j] as f64;
            }
            let ebase = h * 2 * manifest.embed_dim;
            hands.push(HandFrame {
                wrist: tracked.then(|| Pose::from_array(pose_vals)),
                fingertips,
                embeds: [
                    erec[ebase..ebase + manifest.embed_dim].to_vec(),
                    erec[ebase + manifest.embed_dim..ebase + 2 * manifest.embed_dim].to_vec(),
                ],
            });
        }
        out_frames.push(RawFrame { timestamp: rec[0] as f64, hands });
    }

    let ep = RawEpisode {
        embodiment: manifest.embodiment,
        rate_hz: manifest.rate_hz,
        frames: out_frames,
    };
    ep.validate()?;
    Ok((ep, manifest.ground_truth))
}

/// One hand's processed series: every frame has a pose, hand joint targets
/// from retargeting, and the pass-through glove and embedding data.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedHand {
    pub poses: Vec<Pose>,
    pub joints: Vec<Vec<f64>>,
    pub fingertips: Vec<[f64; FINGERTIP_DIM]>,
    pub embeds: Vec<[Vec<f32>; 2]>,
}

/// Filtered, smoothed, retargeted episode with per-step actions.
///
/// Actions are hand-major: for each hand, 9 arm components (relative pose to
/// the next frame) followed by its joint targets at the next frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedEpisode {
    pub source_id: String,
    pub embodiment: Embodiment,
    pub rate_hz: f64,
    pub timestamps: Vec<f64>,
    pub hands: Vec<ProcessedHand>,
    pub actions: Vec<Vec<f64>>,
    pub report: FilterReport,
}

impl ProcessedEpisode {
    pub fn frame_count(&self) -> usize {
        self.timestamps.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.hands.first().map_or(0, |h| h.embeds.first().map_or(0, |e| e[0].len()))
    }

    pub fn joints_per_hand(&self) -> usize {
        self.hands.first().map_or(0, |h| h.joints.first().map_or(0, |j| j.len()))
    }

    pub fn action_dim(&self) -> usize {
        self.hands.len() * (ARM_DIM + self.joints_per_hand())
    }
}

pub fn save_processed_episode(dir: &Path, ep: &ProcessedEpisode) -> Result<(), EpisodeIoError> {
    fs::create_dir_all(dir)?;
    let hands = ep.hands.len();
    let joints = ep.joints_per_hand();
    let embed_dim = ep.embed_dim();
    let n = ep.frame_count();
    let hand_stride = 7 + joints + FINGERTIP_DIM;
    let frame_stride = 1 + hands * hand_stride;

    let mut frames = Vec::with_capacity(n * frame_stride);
    let mut embeds = Vec::with_capacity(n * hands * 2 * embed_dim);
    for i in 0..n {
        frames.push(ep.timestamps[i] as f32);
        for hand in &ep.hands {
            frames.extend(hand.poses[i].to_array().iter().map(|v| *v as f32));
            frames.extend(hand.joints[i].iter().map(|v| *v as f32));
            frames.extend(hand.fingertips[i].iter().map(|v| *v as f32));
            embeds.extend_from_slice(&hand.embeds[i][0]);
            embeds.extend_from_slice(&hand.embeds[i][1]);
        }
    }
    let actions: Vec<f32> =
        ep.actions.iter().flat_map(|a| a.iter().map(|v| *v as f32)).collect();

    let manifest = EpisodeManifest {
        schema_version: SCHEMA_VERSION,
        stage: "processed".into(),
        embodiment: ep.embodiment,
        rate_hz: ep.rate_hz,
        frame_count: n,
        hands,
        embed_dim,
        frame_stride,
        joints_per_hand: Some(joints),
        action_dim: Some(ep.action_dim()),
        ground_truth: None,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(dir.join("frames.bin"), f32s_to_bytes(&frames))?;
    fs::write(dir.join("embeddings.bin"), f32s_to_bytes(&embeds))?;
    fs::write(dir.join("actions.bin"), f32s_to_bytes(&actions))?;
    fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&ep.report)?)?;
    Ok(())
}

pub fn load_processed_episode(dir: &Path) -> Result<ProcessedEpisode, EpisodeIoError> {
    let manifest = read_manifest(dir, "processed")?;
    let joints = manifest
        .joints_per_hand
        .ok_or_else(|| EpisodeIoError::Malformed("missing joints_per_hand".into()))?;
    let frames = bytes_to_f32s(&fs::read(dir.join("frames.bin"))?)?;
    let embeds = bytes_to_f32s(&fs::read(dir.join("embeddings.bin"))?)?;
    let actions = bytes_to_f32s(&fs::read(dir.join("actions.bin"))?)?;
    let report: FilterReport = serde_json::from_slice(&fs::read(dir.join("report.json"))?)?;

    let n = manifest.frame_count;
    let hand_stride = 7 + joints + FINGERTIP_DIM;
    let frame_stride = 1 + manifest.hands * hand_stride;
    if frame_stride != manifest.frame_stride || frames.len() != n * frame_stride {
        return Err(EpisodeIoError::Malformed("frames.bin length mismatch".into()));
    }
    let embed_stride = manifest.hands * 2 * manifest.embed_dim;
    if embeds.len() != n * embed_stride {
        return Err(EpisodeIoError::Malformed("embeddings.bin length mismatch".into()));
    }
    let action_dim = manifest.hands * (ARM_DIM + joints);
    if n > 0 && actions.len() != (n - 1) * action_dim {
        return Err(EpisodeIoError::Malformed("actions.bin length mismatch".into()));
    }

    let mut hands: Vec<ProcessedHand> = (0..manifest.hands)
        .map(|_| ProcessedHand {
            poses: Vec::with_capacity(n),
            joints: Vec::with_capacity(n),
            fingertips: Vec::with_capacity(n),
            embeds: Vec::with_capacity(n),
        })
        .collect();
    let mut timestamps = Vec::with_capacity(n);
    for i in 0..n {
        let rec = &frames[i * frame_stride..(i + 1) * frame_stride];
        let erec = &embeds[i * embed_stride..(i + 1) * embed_stride];
        timestamps.push(rec[0] as f64);
        for (h, hand) in hands.iter_mut().enumerate() {
            let base = 1 + h * hand_stride;
            let mut pose_vals = [0.0f64; 7];
            for (j, v) in pose_vals.iter_mut().enumerate() {
                *v = rec[base + j] as f64;
            }
            hand.poses.push(Pose::from_array(pose_vals));
            hand.joints.push(rec[base + 7..base + 7 + joints].iter().map(|v| *v as f64).collect());
            let mut tips = [0.0f64; FINGERTIP_DIM];
            for (j, v) in tips.iter_mut().enumerate() {
                *v = rec[base + 7 + joints + j] as f64;
            }
            hand.fingertips.push(tips);
            let ebase = h * 2 * manifest.embed_dim;
            hand.embeds.push([
                erec[ebase..ebase + manifest.embed_dim].to_vec(),
                erec[ebase + manifest.embed_dim..ebase + 2 * manifest.embed_dim].to_vec(),
            ]);
        }
    }

    let actions: Vec<Vec<f64>> = actions
        .chunks_exact(action_dim.max(1))
        .map(|c| c.iter().map(|v| *v as f64).collect())
        .collect();

    Ok(ProcessedEpisode {
        source_id: report.source_id.clone(),
        embodiment: manifest.embodiment,
        rate_hz: manifest.rate_hz,
        timestamps,
        hands,
        actions,
        report,
    })
}
