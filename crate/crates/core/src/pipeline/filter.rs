//! Tracking-quality rules and gap repair.
//!
//! Episodes are kept only when the wrist track covers at least three quarters
//! of the frames, the episode is long enough, and no frame teleports.
//! Surviving episodes then get short tracking gaps interpolated away; gaps
//! longer than the fill limit split the episode, and the pieces re-enter the
//! rule check individually.

use crate::pipeline::episode::{RawEpisode, RawFrame};
use crate::pipeline::PipelineError;
use crate::pose::pose_interpolate;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterRules {
    /// Minimum fraction of frames with a wrist pose (worst hand).
    pub min_track_ratio: f64,
    /// Minimum episode length in frames.
    pub min_frames: usize,
    /// Maximum translation between consecutive tracked frames, meters.
    pub jump_max_m: f64,
    /// Longest tracking gap repaired by interpolation; longer gaps split.
    pub max_gap_fill: usize,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            min_track_ratio: 0.75,
            min_frames: 30,
            jump_max_m: 0.10,
            max_gap_fill: 5,
        }
    }
}

/// Outcome of processing one source episode. `kept` holds exactly when
/// `reasons` is empty; later stages append clip bounds, the stage log, and
/// retargeting residuals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterReport {
    pub source_id: String,
    pub track_ratio: f64,
    pub kept: bool,
    pub reasons: Vec<String>,
    pub frames_in: usize,
    pub frames_out: usize,
    pub segments_kept: usize,
    /// Per action dimension (p2, p97), hand-major.
    pub clip_bounds: Vec<[f64; 2]>,
    /// Stages applied, in order.
    pub stages: Vec<String>,
    pub retarget_residual_rms: f64,
}

/// Fraction of frames with a present wrist pose; for bimanual episodes the
/// minimum over hands, so one unusable hand fails the episode.
pub fn track_ratio(ep: &RawEpisode) -> Result<f64, PipelineError> {
    if ep.frames.is_empty() {
        return Err(PipelineError::EmptyEpisode);
    }
    let ratio = (0..ep.hand_count())
        .map(|h| {
            let tracked = ep.frames.iter().filter(|f| f.hands[h].wrist.is_some()).count();
            tracked as f64 / ep.frames.len() as f64
        })
        .fold(1.0f64, f64::min);
    Ok(ratio)
}

fn max_translation_jump(ep: &RawEpisode) -> f64 {
    let mut worst = 0.0f64;
    for h in 0..ep.hand_count() {
        let mut prev: Option<&RawFrame> = None;
        for f in &ep.frames {
            if f.hands[h].wrist.is_some() {
                if let Some(p) = prev {
                    if let (Some(a), Some(b)) = (&p.hands[h].wrist, &f.hands[h].wrist) {
                        worst = worst.max((b.translation() - a.translation()).norm());
                    }
                }
                prev = Some(f);
            } else {
                prev = None;
            }
        }
    }
    worst
}

/// Applies the keep/reject rules in order and records every failing rule.
/// Rejection is a report, not an error.
pub fn filter_episode(ep: &RawEpisode, rules: &FilterRules, source_id: &str) -> FilterReport {
    let ratio = track_ratio(ep).unwrap_or(0.0);
    let mut reasons = Vec::new();
    if ratio < rules.min_track_ratio {
        reasons.push("track_ratio".to_string());
    }
    if ep.frames.len() < rules.min_frames {
        reasons.push("min_frames".to_string());
    }
    if max_translation_jump(ep) > rules.jump_max_m {
        reasons.push("jump".to_string());
    }
    FilterReport {
        source_id: source_id.to_string(),
        track_ratio: ratio,
        kept: reasons.is_empty(),
        reasons,
        frames_in: ep.frames.len(),
        ..FilterReport::default()
    }
}

/// Repairs tracking gaps of at most `max_gap` frames by pose interpolation at
/// the recorded timestamps. Longer gaps, and untracked frames at either end,
/// split the episode; every frame of every returned piece has a wrist pose
/// for every hand.
pub fn fill_gaps(ep: &RawEpisode, max_gap: usize) -> Vec<RawEpisode> {
    let n = ep.frames.len();
    let hands = ep.hand_count();
    let tracked = |i: usize, h: usize| ep.frames[i].hands[h].wrist.is_some();

    // Frames inside a gap too long to repair are dropped; the episode splits
    // around them.
    let mut cut = vec![false; n];
    for h in 0..hands {
        let mut i = 0;
        while i < n {
            if tracked(i, h) {
                i += 1;
                continue;
            }
            let start = i;
            while i < n && !tracked(i, h) {
                i += 1;
            }
            if i - start > max_gap {
                cut[start..i].iter_mut().for_each(|c| *c = true);
            }
        }
    }

    let mut pieces = Vec::new();
    let mut i = 0;
    while i < n {
        if cut[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !cut[i] {
            i += 1;
        }
        if let Some(piece) = fill_piece(ep, start, i, max_gap) {
            pieces.push(piece);
        }
    }
    pieces
}

fn fill_piece(ep: &RawEpisode, mut lo: usize, mut hi: usize, max_gap: usize) -> Option<RawEpisode> {
    let hands = ep.hand_count();
    let all_tracked =
        |i: usize| (0..hands).all(|h| ep.frames[i].hands[h].wrist.is_some());
    while lo < hi && !all_tracked(lo) {
        lo += 1;
    }
    while hi > lo && !all_tracked(hi - 1) {
        hi -= 1;
    }
    if lo >= hi {
        return None;
    }

    let mut frames: Vec<RawFrame> = ep.frames[lo..hi].to_vec();
    for h in 0..hands {
        let mut i = 0;
        while i < frames.len() {
            if frames[i].hands[h].wrist.is_some() {
                i += 1;
                continue;
            }
            let start = i;
            while i < frames.len() && frames[i].hands[h].wrist.is_none() {
                i += 1;
            }
            // Interior by construction (edges are fully tracked) and short by
            // construction (long runs were cut before splitting).
            debug_assert!(start > 0 && i < frames.len() && i - start <= max_gap);
            let before = frames[start - 1].hands[h].wrist.clone().unwrap();
            let after = frames[i].hands[h].wrist.clone().unwrap();
            let (t0, t1) = (frames[start - 1].timestamp, frames[i].timestamp);
            for j in start..i {
                let t = (frames[j].timestamp - t0) / (t1 - t0);
                frames[j].hands[h].wrist = Some(pose_interpolate(&before, &after, t));
            }
        }
    }

    Some(RawEpisode { embodiment: ep.embodiment, rate_hz: ep.rate_hz, frames })
}
