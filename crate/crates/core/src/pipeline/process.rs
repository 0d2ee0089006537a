//! Raw-to-processed orchestration: track quality check, gap repair, outlier
//! clipping, smoothing, and hand retargeting, in that order.
//!
//! Rejection at any stage is recorded in a [`FilterReport`], never raised as
//! an error: a batch run always completes and tells you what it dropped.

use crate::pipeline::actions::{
    chain_relative_actions, clip_percentiles, compute_relative_actions, CLIP_HI_PCT, CLIP_LO_PCT,
};
use crate::pipeline::episode::{ProcessedEpisode, ProcessedHand, RawEpisode};
use crate::pipeline::filter::{fill_gaps, filter_episode, FilterReport, FilterRules};
use crate::pipeline::smooth::{gaussian_smooth, DEFAULT_SIGMA_FRAMES};
use crate::pose::Pose;
use crate::retarget::{retarget_series, FingertipTargets, HandModel, IkParams};

#[derive(Debug, Clone)]
pub struct ProcessConfig {
    pub rules: FilterRules,
    pub sigma_frames: f64,
    pub ik: IkParams,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        ProcessConfig {
            rules: FilterRules::default(),
            sigma_frames: DEFAULT_SIGMA_FRAMES,
            ik: IkParams::default(),
        }
    }
}

/// Everything a process run produced for one source episode: zero or more
/// kept pieces plus a report for each rejected piece (or for the episode as a
/// whole when it fails the entry rules).
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessOutcome {
    pub episodes: Vec<ProcessedEpisode>,
    pub rejected: Vec<FilterReport>,
}

const STAGES: [&str; 5] = ["track", "filter", "clip", "smooth", "retarget"];

/// Runs the full processing chain on one raw episode. Long tracking gaps
/// split the episode; each piece is filtered, clipped, smoothed, and
/// retargeted independently and keeps its own report.
pub fn process_episode(
    ep: &RawEpisode,
    source_id: &str,
    hand_model: &HandModel,
    cfg: &ProcessConfig,
) -> ProcessOutcome {
    let mut outcome = ProcessOutcome { episodes: Vec::new(), rejected: Vec::new() };

    let mut entry = filter_episode(ep, &cfg.rules, source_id);
    entry.stages = vec![STAGES[0].into(), STAGES[1].into()];
    if !entry.kept {
        outcome.rejected.push(entry);
        return outcome;
    }

    let pieces = fill_gaps(ep, cfg.rules.max_gap_fill);
    let single = pieces.len() == 1;
    for (k, piece) in pieces.iter().enumerate() {
        let piece_id =
            if single { source_id.to_string() } else { format!("{source_id}-p{k}") };
        let mut report = filter_episode(piece, &cfg.rules, &piece_id);
        report.stages = vec![STAGES[0].into(), STAGES[1].into()];
        if !report.kept {
            outcome.rejected.push(report);
            continue;
        }
        match process_piece(piece, hand_model, cfg, report) {
            Ok(done) => outcome.episodes.push(done),
            Err(report) => outcome.rejected.push(report),
        }
    }
    let segments = outcome.episodes.len();
    for ep in &mut outcome.episodes {
        ep.report.segments_kept = segments;
    }
    outcome
}

/// One gap-free piece through clip -> smooth -> retarget. The returned
/// report's `kept` stays true only if every stage succeeds.
fn process_piece(
    piece: &RawEpisode,
    hand_model: &HandModel,
    cfg: &ProcessConfig,
    mut report: FilterReport,
) -> Result<ProcessedEpisode, FilterReport> {
    let n = piece.frames.len();
    let hands = piece.hand_count();
    let reject = |mut report: FilterReport, reason: &str| {
        report.kept = false;
        report.reasons.push(reason.to_string());
        report
    };

    let mut processed_hands = Vec::with_capacity(hands);
    let mut arm_actions: Vec<Vec<[f64; 9]>> = Vec::with_capacity(hands);
    let mut residual_sq_sum = 0.0;
    for h in 0..hands {
        let poses: Vec<Pose> =
            piece.frames.iter().map(|f| f.hands[h].wrist.clone().unwrap()).collect();

        let rel = match compute_relative_actions(&poses) {
            Ok(r) => r,
            Err(_) => return Err(reject(report, "too_few_frames")),
        };
        let series: Vec<Vec<f64>> = rel.iter().map(|a| a.to_vec()).collect();
        let clip = match clip_percentiles(&series, CLIP_LO_PCT, CLIP_HI_PCT) {
            Ok(c) => c,
            Err(_) => return Err(reject(report, "too_few_frames")),
        };
        report.clip_bounds.extend_from_slice(&clip.bounds);

        let clipped: Vec<[f64; 9]> = clip
            .values
            .iter()
            .map(|v| <[f64; 9]>::try_from(v.as_slice()).unwrap())
            .collect();
        let chained = match chain_relative_actions(&poses[0], &clipped) {
            Ok(c) => c,
            Err(_) => return Err(reject(report, "clip_reconstruct")),
        };

        let smoothed = gaussian_smooth(&chained, cfg.sigma_frames);

        let targets: Vec<FingertipTargets> = piece
            .frames
            .iter()
            .map(|f| FingertipTargets::from_flat(&f.hands[h].fingertips))
            .collect();
        let (joints, residuals) = match retarget_series(hand_model, &targets, &cfg.ik) {
            Ok(r) => r,
            Err(_) => return Err(reject(report, "retarget")),
        };
        residual_sq_sum += residuals.iter().map(|r| r * r).sum::<f64>();

        let arm = match compute_relative_actions(&smoothed) {
            Ok(a) => a,
            Err(_) => return Err(reject(report, "too_few_frames")),
        };
        arm_actions.push(arm);

        processed_hands.push(ProcessedHand {
            poses: smoothed,
            joints,
            fingertips: piece.frames.iter().map(|f| f.hands[h].fingertips).collect(),
            embeds: piece.frames.iter().map(|f| f.hands[h].embeds.clone()).collect(),
        });
    }

    let mut actions = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let mut a = Vec::new();
        for h in 0..hands {
            a.extend_from_slice(&arm_actions[h][i]);
            a.extend_from_slice(&processed_hands[h].joints[i + 1]);
        }
        actions.push(a);
    }

    report.frames_out = n;
    report.retarget_residual_rms = (residual_sq_sum / (hands * n) as f64).sqrt();
    report.stages = STAGES.iter().map(|s| s.to_string()).collect();
    Ok(ProcessedEpisode {
        source_id: report.source_id.clone(),
        embodiment: piece.embodiment,
        rate_hz: piece.rate_hz,
        timestamps: piece.frames.iter().map(|f| f.timestamp).collect(),
        hands: processed_hands,
        actions,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{synth_episode, CameraIntrinsics, MarkerCube, SynthParams};
    use crate::pose::geodesic_distance;
    use crate::testutil::walk_episode;
    use nalgebra::{UnitQuaternion, Vector3};

    fn synth_setup() -> (MarkerCube, CameraIntrinsics) {
        (
            MarkerCube::standard(
                0.06,
                Pose::new(Vector3::new(0.0, 0.0, -0.05), UnitQuaternion::identity()),
            ),
            CameraIntrinsics {
                fx: 500.0,
                fy: 500.0,
                cx: 320.0,
                cy: 240.0,
                width: 640,
                height: 480,
            },
        )
    }

    fn synth_traj(n: usize) -> Vec<Pose> {
        let tilt = UnitQuaternion::from_axis_angle(
            &nalgebra::Unit::new_normalize(Vector3::new(1.0, 1.0, 0.0)),
            (35.0f64).to_radians(),
        );
        (0..n)
            .map(|i| {
                let s = i as f64 / 30.0;
                Pose::new(
                    Vector3::new(0.06 * (0.8 * s).sin(), 0.05 * (0.6 * s).cos(), 0.55),
                    tilt,
                )
            })
            .collect()
    }

    #[test]
    fn clean_synthetic_episode_survives_all_stages() {
        let (cube, cam) = synth_setup();
        let (raw, _) = synth_episode(&synth_traj(60), &cube, &cam, &SynthParams::default());
        let out =
            process_episode(&raw, "ep0", &HandModel::reference(), &ProcessConfig::default());
        assert!(out.rejected.is_empty());
        assert_eq!(out.episodes.len(), 1);
        let ep = &out.episodes[0];
        assert_eq!(ep.source_id, "ep0");
        assert_eq!(ep.frame_count(), 60);
        assert_eq!(ep.actions.len(), 59);
        assert_eq!(ep.action_dim(), 26);
        assert_eq!(ep.report.stages, vec!["track", "filter", "clip", "smooth", "retarget"]);
        assert_eq!(ep.report.clip_bounds.len(), 9);
        assert_eq!(ep.report.segments_kept, 1);
        // Synthetic fingertips come from the same hand model, so retargeting
        // reaches them almost exactly.
        assert!(ep.report.retarget_residual_rms < 1e-4);
    }

    #[test]
    fn short_gaps_are_repaired_not_fatal() {
        let ep = walk_episode(21, 60, 1, &|i, _| !(10..13).contains(&i) && !(40..42).contains(&i));
        let out = process_episode(
            &ep,
            "gappy",
            &HandModel::reference_non_redundant(),
            &ProcessConfig::default(),
        );
        assert_eq!(out.episodes.len(), 1, "rejected: {:?}", out.rejected);
        assert_eq!(out.episodes[0].frame_count(), 60);
    }

    #[test]
    fn long_gap_splits_and_pieces_keep_their_own_reports() {
        let ep = walk_episode(22, 100, 1, &|i, _| !(45..55).contains(&i));
        let out = process_episode(
            &ep,
            "split",
            &HandModel::reference_non_redundant(),
            &ProcessConfig::default(),
        );
        assert_eq!(out.episodes.len(), 2);
        assert_eq!(out.episodes[0].source_id, "split-p0");
        assert_eq!(out.episodes[1].source_id, "split-p1");
        assert_eq!(out.episodes[0].frame_count(), 45);
        assert_eq!(out.episodes[1].frame_count(), 45);
        for ep in &out.episodes {
            assert_eq!(ep.report.segments_kept, 2);
        }
    }

    #[test]
    fn piece_too_short_after_split_is_rejected() {
        // 100 frames, gap at 80..90: the tail piece has 10 frames < 30.
        let ep = walk_episode(23, 100, 1, &|i, _| !(80..90).contains(&i));
        let out = process_episode(
            &ep,
            "tail",
            &HandModel::reference_non_redundant(),
            &ProcessConfig::default(),
        );
        assert_eq!(out.episodes.len(), 1);
        assert_eq!(out.rejected.len(), 1);
        assert_eq!(out.rejected[0].source_id, "tail-p1");
        assert_eq!(out.rejected[0].reasons, vec!["min_frames"]);
    }

    #[test]
    fn untrackable_episode_is_rejected_outright() {
        let ep = walk_episode(24, 60, 1, &|i, _| i % 2 == 0);
        let out = process_episode(
            &ep,
            "lost",
            &HandModel::reference_non_redundant(),
            &ProcessConfig::default(),
        );
        assert!(out.episodes.is_empty());
        assert_eq!(out.rejected.len(), 1);
        assert_eq!(out.rejected[0].reasons, vec!["track_ratio"]);
        assert_eq!(out.rejected[0].stages, vec!["track", "filter"]);
    }

    #[test]
    fn processing_is_deterministic() {
        let ep = walk_episode(25, 60, 2, &|i, _| i != 20);
        let cfg = ProcessConfig::default();
        let model = &HandModel::reference_non_redundant();
        let a = process_episode(&ep, "det", model, &cfg);
        let b = process_episode(&ep, "det", model, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn bimanual_actions_are_hand_major() {
        let ep = walk_episode(26, 40, 2, &|_, _| true);
        let model = &HandModel::reference_non_redundant();
        let out = process_episode(&ep, "bi", model, &ProcessConfig::default());
        let ep = &out.episodes[0];
        assert_eq!(ep.action_dim(), 2 * (9 + 15));
        let a = &ep.actions[0];
        // Second hand's joint block sits at the end and matches its series.
        assert_eq!(&a[2 * 9 + 15..], ep.hands[1].joints[1].as_slice());
    }

    #[test]
    fn repair_and_near_zero_smoothing_are_idempotent() {
        let ep = walk_episode(27, 60, 1, &|i, _| !(15..17).contains(&i));
        let once = fill_gaps(&ep, 5);
        assert_eq!(once.len(), 1);
        let poses: Vec<Pose> =
            once[0].frames.iter().map(|f| f.hands[0].wrist.clone().unwrap()).collect();
        let s1 = gaussian_smooth(&poses, 1e-6);
        // A second repair pass sees no gaps; a second smoothing pass at
        // sigma -> 0 is the identity.
        let again = fill_gaps(&once[0], 5);
        assert_eq!(again.len(), 1);
        assert_eq!(again[0], once[0]);
        let s2 = gaussian_smooth(&s1, 1e-6);
        for (a, b) in s1.iter().zip(&s2) {
            assert!((a.translation() - b.translation()).norm() < 1e-9);
            assert!(geodesic_distance(&a.rotation(), &b.rotation()) < 1e-9);
        }
    }
}
