//! Fixed-ratio co-training batch sampler.
//!
//! Every batch holds an exact robot/human split derived from the configured
//! ratio. Within each source, draws are without replacement per epoch: a
//! seeded shuffle of the whole index range is consumed, then reshuffled, so
//! every transition is visited once per epoch regardless of batch boundaries.

use crate::dataset::transitions::Dataset;
use crate::dataset::DatasetError;
use crate::pipeline::episode::Embodiment;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Robot weight in the robot:human batch ratio.
    pub w_r: u32,
    /// Human weight in the robot:human batch ratio.
    pub w_h: u32,
    pub batch: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { w_r: 1, w_h: 2, batch: 256, seed: 0 }
    }
}

impl SamplerConfig {
    /// Robot transitions per batch: round(B * w_r / (w_r + w_h)); the
    /// remainder is human.
    pub fn robot_per_batch(&self) -> usize {
        (self.batch as f64 * self.w_r as f64 / (self.w_r + self.w_h) as f64).round() as usize
    }

    pub fn human_per_batch(&self) -> usize {
        self.batch - self.robot_per_batch()
    }
}

/// One sampled batch: `(source, transition index)` in final shuffled order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub items: Vec<(Embodiment, usize)>,
}

impl Batch {
    pub fn count(&self, e: Embodiment) -> usize {
        self.items.iter().filter(|(s, _)| *s == e).count()
    }
}

#[derive(Debug)]
pub struct CoSampler {
    cfg: SamplerConfig,
    robot_len: usize,
    human_len: usize,
    robot_queue: Vec<usize>,
    human_queue: Vec<usize>,
    queue_rng: ChaCha12Rng,
    order_rng: ChaCha12Rng,
}

impl CoSampler {
    pub fn new(
        robot_len: usize,
        human_len: usize,
        cfg: SamplerConfig,
    ) -> Result<Self, DatasetError> {
        if cfg.w_r + cfg.w_h == 0 {
            return Err(DatasetError::InvalidConfig("sampler ratio weights are both zero".into()));
        }
        if cfg.batch == 0 {
            return Err(DatasetError::InvalidConfig("batch size must be at least 1".into()));
        }
        if cfg.robot_per_batch() > 0 && robot_len == 0 {
            return Err(DatasetError::EmptyDataset);
        }
        if cfg.human_per_batch() > 0 && human_len == 0 {
            return Err(DatasetError::EmptyDataset);
        }
        Ok(CoSampler {
            cfg,
            robot_len,
            human_len,
            robot_queue: Vec::new(),
            human_queue: Vec::new(),
            queue_rng: ChaCha12Rng::seed_from_u64(cfg.seed),
            order_rng: ChaCha12Rng::seed_from_u64(cfg.seed ^ 0xD1B5_4A32_D192_ED03),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    fn draw(
        queue: &mut Vec<usize>,
        len: usize,
        count: usize,
        rng: &mut ChaCha12Rng,
        out: &mut Vec<(Embodiment, usize)>,
        source: Embodiment,
    ) {
        for _ in 0..count {
            if queue.is_empty() {
                let mut fresh: Vec<usize> = (0..len).collect();
                fresh.shuffle(rng);
                *queue = fresh;
            }
            out.push((source, queue.pop().unwrap()));
        }
    }

    pub fn next_batch(&mut self) -> Batch {
        let mut items = Vec::with_capacity(self.cfg.batch);
        Self::draw(
            &mut self.robot_queue,
            self.robot_len,
            self.cfg.robot_per_batch(),
            &mut self.queue_rng,
            &mut items,
            Embodiment::Robot,
        );
        Self::draw(
            &mut self.human_queue,
            self.human_len,
            self.cfg.human_per_batch(),
            &mut self.queue_rng,
            &mut items,
            Embodiment::Human,
        );
        items.shuffle(&mut self.order_rng);
        Batch { items }
    }
}

/// Materializes a batch as row-major conditioning and chunk matrices, one row
/// per item, in batch order.
pub fn gather_batch(
    batch: &Batch,
    robot: &Dataset,
    human: &Dataset,
) -> Result<(DMatrix<f64>, DMatrix<f64>), DatasetError> {
    let pick = |e: Embodiment| -> &Dataset {
        match e {
            Embodiment::Robot => robot,
            Embodiment::Human => human,
        }
    };
    let sources: Vec<Embodiment> = {
        let mut s: Vec<Embodiment> = batch.items.iter().map(|(e, _)| *e).collect();
        s.dedup();
        s
    };
    let Some(&first) = sources.first() else {
        return Err(DatasetError::EmptyDataset);
    };
    for &e in &sources[1..] {
        if pick(e).cond_dim() != pick(first).cond_dim()
            || pick(e).chunk_len != pick(first).chunk_len
            || pick(e).action_dim != pick(first).action_dim
        {
            return Err(DatasetError::InconsistentEpisodes(
                "robot and human datasets have different observation or action shapes".into(),
            ));
        }
    }

    let b = batch.items.len();
    let cond_dim = pick(first).cond_dim();
    let chunk_dim = pick(first).chunk_len * pick(first).action_dim;
    let mut cond = DMatrix::zeros(b, cond_dim);
    let mut chunk = DMatrix::zeros(b, chunk_dim);
    for (row, (e, idx)) in batch.items.iter().enumerate() {
        let ds = pick(*e);
        for (c, v) in ds.cond(*idx).into_iter().enumerate() {
            cond[(row, c)] = v;
        }
        for (c, v) in ds.chunk(*idx).into_iter().enumerate() {
            chunk[(row, c)] = v;
        }
    }
    Ok((cond, chunk))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(w_r: u32, w_h: u32) -> SamplerConfig {
        SamplerConfig { w_r, w_h, batch: 256, seed: 11 }
    }

    #[test]
    fn ratio_composition_is_exact() {
        for (w_r, w_h, want_r) in
            [(1u32, 0u32, 256usize), (1, 1, 128), (1, 2, 85), (1, 5, 43), (0, 1, 0)]
        {
            let c = cfg(w_r, w_h);
            assert_eq!(c.robot_per_batch(), want_r, "{w_r}:{w_h}");
            let mut s = CoSampler::new(500, 500, c).unwrap();
            let b = s.next_batch();
            assert_eq!(b.items.len(), 256);
            assert_eq!(b.count(Embodiment::Robot), want_r, "{w_r}:{w_h}");
            assert_eq!(b.count(Embodiment::Human), 256 - want_r, "{w_r}:{w_h}");
        }
    }

    #[test]
    fn epoch_coverage_without_replacement() {
        // 200 robot transitions at 85 per batch: after 3 batches (255 draws)
        // the first epoch has fully drained, so every index has appeared, and
        // none can have appeared three times yet.
        let mut s = CoSampler::new(200, 1000, cfg(1, 2)).unwrap();
        let mut counts = vec![0usize; 200];
        for _ in 0..3 {
            for (e, idx) in s.next_batch().items {
                if e == Embodiment::Robot {
                    counts[idx] += 1;
                }
            }
        }
        assert!(counts.iter().all(|&c| c >= 1), "min {:?}", counts.iter().min());
        assert!(counts.iter().all(|&c| c <= 2), "max {:?}", counts.iter().max());
    }

    #[test]
    fn draws_within_one_epoch_never_repeat() {
        let mut s = CoSampler::new(200, 400, cfg(1, 2)).unwrap();
        let mut robot_seen = std::collections::HashSet::new();
        let mut human_seen = std::collections::HashSet::new();
        // Two batches: 170 robot draws < 200 and 342 human draws < 400.
        for _ in 0..2 {
            for (e, idx) in s.next_batch().items {
                let fresh = match e {
                    Embodiment::Robot => robot_seen.insert(idx),
                    Embodiment::Human => human_seen.insert(idx),
                };
                assert!(fresh, "{e} index {idx} repeated within the epoch");
            }
        }
    }

    #[test]
    fn sequences_are_seed_deterministic() {
        let mut a = CoSampler::new(300, 700, cfg(1, 2)).unwrap();
        let mut b = CoSampler::new(300, 700, cfg(1, 2)).unwrap();
        let batches_a: Vec<Batch> = (0..5).map(|_| a.next_batch()).collect();
        let batches_b: Vec<Batch> = (0..5).map(|_| b.next_batch()).collect();
        assert_eq!(batches_a, batches_b);

        let mut c = CoSampler::new(300, 700, SamplerConfig { seed: 12, ..cfg(1, 2) }).unwrap();
        assert_ne!(batches_a[0], c.next_batch());
    }

    #[test]
    fn batch_order_interleaves_sources() {
        let mut s = CoSampler::new(500, 500, cfg(1, 1)).unwrap();
        let b = s.next_batch();
        let first_half_robots = b.items[..128].iter().filter(|(e, _)| *e == Embodiment::Robot).count();
        // A block layout would put all 128 robots first; the seeded
        // permutation must mix them.
        assert!(first_half_robots > 32 && first_half_robots < 96, "{first_half_robots}");
    }

    #[test]
    fn empty_required_source_is_an_error() {
        assert!(matches!(
            CoSampler::new(0, 500, cfg(1, 2)),
            Err(DatasetError::EmptyDataset)
        ));
        assert!(matches!(
            CoSampler::new(500, 0, cfg(1, 2)),
            Err(DatasetError::EmptyDataset)
        ));
        // A zero-weight source may be empty.
        assert!(CoSampler::new(500, 0, cfg(1, 0)).is_ok());
        assert!(matches!(
            CoSampler::new(1, 1, SamplerConfig { w_r: 0, w_h: 0, batch: 4, seed: 0 }),
            Err(DatasetError::InvalidConfig(_))
        ));
    }
}
