//! Transition construction: observation state history, pass-through
//! embeddings, and normalized action chunks.

use crate::dataset::DatasetError;
use crate::pipeline::actions::{normalize_apply, normalize_fit, NormalizationStats};
use crate::pipeline::episode::{Embodiment, ProcessedEpisode, ARM_DIM};
use crate::pose::{relative, RelativePose};

/// Identity relative pose, the padding value for history entries that fall
/// before the episode start.
fn identity_entry() -> [f64; ARM_DIM] {
    RelativePose::identity().flatten()
}

/// One training example. `state` is the proprioceptive history, newest entry
/// first; each entry holds the 9-dim relative arm pose per hand and, for
/// bimanual data, the 9-dim pose of the second hand relative to the first.
/// `chunk` is the next `n` actions, normalized to [-1, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f32>,
    pub embeds: Vec<f32>,
    pub chunk: Vec<f32>,
}

#[derive(Debug, Clone, Copy)]
pub struct DatasetConfig {
    pub chunk_len: usize,
    /// Proprioception horizon: history reaches back `history` actions.
    pub history: usize,
    /// Stride between history entries.
    pub step: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { chunk_len: 48, history: 3, step: 1 }
    }
}

impl DatasetConfig {
    pub fn entries(&self) -> usize {
        self.history / self.step.max(1) + 1
    }
}

/// An embodiment-tagged set of transitions with the normalization stats they
/// were built with.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub embodiment: Embodiment,
    pub chunk_len: usize,
    pub action_dim: usize,
    /// History entries per observation.
    pub entries: usize,
    /// Width of one history entry: 9 per hand, plus 9 interhand when bimanual.
    pub entry_dim: usize,
    pub hands: usize,
    /// Width of one embedding head.
    pub embed_dim: usize,
    pub step: usize,
    pub stats: NormalizationStats,
    pub episodes: Vec<String>,
    /// Episodes skipped for being shorter than the horizon needs.
    pub skipped: Vec<String>,
    pub transitions: Vec<Transition>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.entries * self.entry_dim
    }

    pub fn embed_width(&self) -> usize {
        self.hands * 2 * self.embed_dim
    }

    /// Conditioning vector dimension: embeddings then state history.
    pub fn cond_dim(&self) -> usize {
        self.embed_width() + self.state_dim()
    }

    /// Flattened conditioning input for one transition: embedding heads in
    /// hand order, then the state history.
    pub fn cond(&self, idx: usize) -> Vec<f64> {
        let t = &self.transitions[idx];
        t.embeds.iter().chain(t.state.iter()).map(|v| *v as f64).collect()
    }

    pub fn chunk(&self, idx: usize) -> Vec<f64> {
        self.transitions[idx].chunk.iter().map(|v| *v as f64).collect()
    }
}

/// Builds one transition per action index. The history entry at lag `k*step`
/// is the arm block of the action that led into the current frame; entries
/// from before the start are identity. Chunks past the episode end repeat the
/// final action. Chunks are normalized with `stats`; the history is stored
/// raw (its values are already clip-bounded upstream).
pub fn build_transitions(
    ep: &ProcessedEpisode,
    cfg: &DatasetConfig,
    stats: &NormalizationStats,
) -> Result<Vec<Transition>, DatasetError> {
    let frames = ep.frame_count();
    let needed = cfg.history + cfg.chunk_len + 1;
    if frames < needed {
        return Err(DatasetError::EpisodeTooShort { needed, got: frames });
    }
    let hands = ep.hands.len();
    let per_hand = ARM_DIM + ep.joints_per_hand();
    let n_actions = ep.actions.len();

    let normalized: Vec<Vec<f32>> = ep
        .actions
        .iter()
        .map(|a| {
            normalize_apply(a, stats, ep.embodiment)
                .map(|v| v.iter().map(|x| *x as f32).collect())
        })
        .collect::<Result<_, _>>()?;

    let arm_entry = |idx: isize, h: usize| -> [f64; ARM_DIM] {
        if idx < 0 {
            identity_entry()
        } else {
            let a = &ep.actions[idx as usize];
            <[f64; ARM_DIM]>::try_from(&a[h * per_hand..h * per_hand + ARM_DIM]).unwrap()
        }
    };
    let interhand_entry = |frame: isize| -> [f64; ARM_DIM] {
        if frame < 0 {
            identity_entry()
        } else {
            let i = frame as usize;
            relative(&ep.hands[0].poses[i], &ep.hands[1].poses[i]).flatten()
        }
    };

    let mut out = Vec::with_capacity(n_actions);
    for i in 0..n_actions {
        let mut state = Vec::with_capacity(cfg.entries() * (hands + (hands > 1) as usize) * ARM_DIM);
        for k in 0..cfg.entries() {
            let lag = (k * cfg.step) as isize;
            for h in 0..hands {
                state.extend(arm_entry(i as isize - 1 - lag, h).iter().map(|v| *v as f32));
            }
            if hands > 1 {
                state.extend(interhand_entry(i as isize - lag).iter().map(|v| *v as f32));
            }
        }

        let mut embeds = Vec::with_capacity(hands * 2 * ep.embed_dim());
        for hand in &ep.hands {
            embeds.extend_from_slice(&hand.embeds[i][0]);
            embeds.extend_from_slice(&hand.embeds[i][1]);
        }

        let mut chunk = Vec::with_capacity(cfg.chunk_len * normalized[0].len());
        for c in 0..cfg.chunk_len {
            chunk.extend_from_slice(&normalized[(i + c).min(n_actions - 1)]);
        }

        out.push(Transition { state, embeds, chunk });
    }
    Ok(out)
}

/// Fits normalization stats over every episode's actions, then builds all
/// transitions. Episodes too short for the horizon are skipped and recorded;
/// mixed embodiments or mismatched dimensions are errors.
pub fn build_dataset(
    episodes: &[ProcessedEpisode],
    cfg: &DatasetConfig,
) -> Result<Dataset, DatasetError> {
    let Some(first) = episodes.first() else {
        return Err(DatasetError::EmptyDataset);
    };
    let embodiment = first.embodiment;
    let (hands, action_dim, embed_dim) =
        (first.hands.len(), first.action_dim(), first.embed_dim());
    for ep in episodes {
        if ep.embodiment != embodiment {
            return Err(DatasetError::InconsistentEpisodes(format!(
                "episode {} is {}, expected {}",
                ep.source_id, ep.embodiment, embodiment
            )));
        }
        if ep.hands.len() != hands || ep.action_dim() != action_dim || ep.embed_dim() != embed_dim
        {
            return Err(DatasetError::InconsistentEpisodes(format!(
                "episode {} dimensions differ from the first episode",
                ep.source_id
            )));
        }
    }

    let all_actions: Vec<Vec<f64>> =
        episodes.iter().flat_map(|ep| ep.actions.iter().cloned()).collect();
    if all_actions.len() < 2 {
        return Err(DatasetError::EmptyDataset);
    }
    let stats = normalize_fit(&all_actions, embodiment)?;

    let mut transitions = Vec::new();
    let mut kept_ids = Vec::new();
    let mut skipped = Vec::new();
    for ep in episodes {
        match build_transitions(ep, cfg, &stats) {
            Ok(mut t) => {
                transitions.append(&mut t);
                kept_ids.push(ep.source_id.clone());
            }
            Err(DatasetError::EpisodeTooShort { .. }) => skipped.push(ep.source_id.clone()),
            Err(e) => return Err(e),
        }
    }
    if transitions.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }

    Ok(Dataset {
        embodiment,
        chunk_len: cfg.chunk_len,
        action_dim,
        entries: cfg.entries(),
        entry_dim: hands * ARM_DIM + if hands > 1 { ARM_DIM } else { 0 },
        hands,
        embed_dim,
        step: cfg.step.max(1),
        stats,
        episodes: kept_ids,
        skipped,
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::process::{process_episode, ProcessConfig};
    use crate::retarget::HandModel;
    use crate::testutil::walk_episode;

    fn processed(seed: u64, frames: usize, hands: usize) -> ProcessedEpisode {
        let raw = walk_episode(seed, frames, hands, &|_, _| true);
        let out = process_episode(
            &raw,
            &format!("ep{seed}"),
            &HandModel::reference_non_redundant(),
            &ProcessConfig::default(),
        );
        assert_eq!(out.episodes.len(), 1);
        out.episodes.into_iter().next().unwrap()
    }

    #[test]
    fn zero_history_padding_arithmetic() {
        let ep = processed(1, 100, 1);
        let cfg = DatasetConfig { chunk_len: 48, history: 0, step: 1 };
        let ds = build_dataset(std::slice::from_ref(&ep), &cfg).unwrap();
        // One transition per action index.
        assert_eq!(ds.len(), 99);
        // At i=60 the chunk needs actions 60..108 but only 0..=98 exist:
        // rows 39..48 repeat the final action.
        let d = ds.action_dim;
        let chunk = &ds.transitions[60].chunk;
        let last_real = &chunk[38 * d..39 * d];
        for c in 39..48 {
            assert_eq!(&chunk[c * d..(c + 1) * d], last_real, "row {c}");
        }
        let row37 = &chunk[37 * d..38 * d];
        assert_ne!(row37, last_real);
    }

    #[test]
    fn history_is_newest_first_with_identity_padding() {
        let ep = processed(2, 60, 1);
        let cfg = DatasetConfig { chunk_len: 8, history: 3, step: 1 };
        let ds = build_dataset(std::slice::from_ref(&ep), &cfg).unwrap();
        assert_eq!(ds.entries, 4);
        assert_eq!(ds.entry_dim, 9);
        assert_eq!(ds.state_dim(), 36);

        // i=0: every entry precedes the start, so all are identity.
        let id: Vec<f32> = identity_entry().iter().map(|v| *v as f32).collect();
        let s0 = &ds.transitions[0].state;
        for k in 0..4 {
            assert_eq!(&s0[k * 9..(k + 1) * 9], id.as_slice(), "entry {k}");
        }

        // i=2: entries are the raw arm actions 1, 0, then identity padding.
        let s2 = &ds.transitions[2].state;
        let want1: Vec<f32> = ep.actions[1][..9].iter().map(|v| *v as f32).collect();
        let want0: Vec<f32> = ep.actions[0][..9].iter().map(|v| *v as f32).collect();
        assert_eq!(&s2[0..9], want1.as_slice());
        assert_eq!(&s2[9..18], want0.as_slice());
        assert_eq!(&s2[18..27], id.as_slice());
        assert_eq!(&s2[27..36], id.as_slice());
    }

    #[test]
    fn history_step_skips_entries() {
        let ep = processed(3, 60, 1);
        let cfg = DatasetConfig { chunk_len: 8, history: 4, step: 2 };
        let ds = build_dataset(std::slice::from_ref(&ep), &cfg).unwrap();
        assert_eq!(ds.entries, 3);
        let i = 10;
        let s = &ds.transitions[i].state;
        for (k, lag) in [0usize, 2, 4].iter().enumerate() {
            let want: Vec<f32> =
                ep.actions[i - 1 - lag][..9].iter().map(|v| *v as f32).collect();
            assert_eq!(&s[k * 9..(k + 1) * 9], want.as_slice(), "lag {lag}");
        }
    }

    #[test]
    fn bimanual_entries_carry_interhand() {
        let ep = processed(4, 60, 2);
        let cfg = DatasetConfig { chunk_len: 8, history: 1, step: 1 };
        let ds = build_dataset(std::slice::from_ref(&ep), &cfg).unwrap();
        assert_eq!(ds.entry_dim, 27);
        let i = 5;
        let s = &ds.transitions[i].state;
        let want: Vec<f32> = relative(&ep.hands[0].poses[i], &ep.hands[1].poses[i])
            .flatten()
            .iter()
            .map(|v| *v as f32)
            .collect();
        assert_eq!(&s[18..27], want.as_slice());
        // Second hand's arm block comes from its own action slice.
        let per_hand = 9 + ep.joints_per_hand();
        let want_h1: Vec<f32> =
            ep.actions[i - 1][per_hand..per_hand + 9].iter().map(|v| *v as f32).collect();
        assert_eq!(&s[9..18], want_h1.as_slice());
    }

    #[test]
    fn chunks_are_normalized_into_unit_range() {
        let ep = processed(5, 80, 1);
        let ds = build_dataset(std::slice::from_ref(&ep), &DatasetConfig::default()).unwrap();
        for t in &ds.transitions {
            for v in &t.chunk {
                assert!((-1.0..=1.0).contains(v), "value {v} out of range");
            }
        }
    }

    #[test]
    fn too_short_episode_is_an_error_alone_and_skipped_in_a_batch() {
        let short = processed(6, 40, 1);
        let cfg = DatasetConfig::default();
        let err = build_transitions(
            &short,
            &cfg,
            &normalize_fit(&short.actions, short.embodiment).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::EpisodeTooShort { needed: 52, got: 40 }));

        let long = processed(7, 80, 1);
        let ds = build_dataset(&[long, short], &cfg).unwrap();
        assert_eq!(ds.episodes, vec!["ep7"]);
        assert_eq!(ds.skipped, vec!["ep6"]);
    }

    #[test]
    fn mixed_embodiments_are_rejected() {
        let a = processed(8, 80, 1);
        let mut b = processed(9, 80, 1);
        b.embodiment = Embodiment::Robot;
        let err = build_dataset(&[a, b], &DatasetConfig::default()).unwrap_err();
        assert!(matches!(err, DatasetError::InconsistentEpisodes(_)));
    }

    #[test]
    fn embeddings_pass_through_in_hand_order() {
        let ep = processed(10, 60, 2);
        let cfg = DatasetConfig { chunk_len: 8, history: 0, step: 1 };
        let ds = build_dataset(std::slice::from_ref(&ep), &cfg).unwrap();
        let i = 7;
        let t = &ds.transitions[i];
        assert_eq!(t.embeds.len(), 2 * 2 * ep.embed_dim());
        assert_eq!(&t.embeds[..4], ep.hands[0].embeds[i][0].as_slice());
        assert_eq!(&t.embeds[12..16], ep.hands[1].embeds[i][1].as_slice());
        // cond() is embeds then state.
        let cond = ds.cond(i);
        assert_eq!(cond.len(), ds.cond_dim());
        assert_eq!(cond[0], t.embeds[0] as f64);
        assert_eq!(cond[16], t.state[0] as f64);
    }
}
