//! Shared helpers for unit tests.

use crate::pipeline::episode::{Embodiment, HandFrame, RawEpisode, RawFrame};
use crate::pose::Pose;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let q = Quaternion::new(
        rng.random::<f64>() * 2.0 - 1.0,
        rng.random::<f64>() * 2.0 - 1.0,
        rng.random::<f64>() * 2.0 - 1.0,
        rng.random::<f64>() * 2.0 - 1.0,
    );
    if q.norm() < 1e-3 {
        return UnitQuaternion::identity();
    }
    UnitQuaternion::from_quaternion(q)
}

pub fn random_pose(rng: &mut impl Rng) -> Pose {
    let t = Vector3::new(
        rng.random::<f64>() * 4.0 - 2.0,
        rng.random::<f64>() * 4.0 - 2.0,
        rng.random::<f64>() * 4.0 - 2.0,
    );
    Pose::new(t, random_rotation(rng))
}

/// Builds a smooth random-walk episode (steps well under the jump threshold)
/// where `tracked(frame, hand)` controls wrist presence.
pub fn walk_episode(
    seed: u64,
    frames: usize,
    hands: usize,
    tracked: &dyn Fn(usize, usize) -> bool,
) -> RawEpisode {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut poses: Vec<Pose> = (0..hands).map(|_| random_pose(&mut rng)).collect();
    let frames = (0..frames)
        .map(|i| {
            let hands = (0..hands)
                .map(|h| {
                    if i > 0 {
                        let dt = Vector3::new(
                            (rng.random::<f64>() - 0.5) * 0.02,
                            (rng.random::<f64>() - 0.5) * 0.02,
                            (rng.random::<f64>() - 0.5) * 0.02,
                        );
                        let dr = UnitQuaternion::from_scaled_axis(Vector3::new(
                            (rng.random::<f64>() - 0.5) * 0.04,
                            (rng.random::<f64>() - 0.5) * 0.04,
                            (rng.random::<f64>() - 0.5) * 0.04,
                        ));
                        poses[h] = poses[h].compose(&Pose::new(dt, dr));
                    }
                    HandFrame {
                        wrist: tracked(i, h).then(|| poses[h].clone()),
                        fingertips: std::array::from_fn(|_| rng.random::<f64>() * 0.1),
                        embeds: [
                            (0..4).map(|_| rng.random::<f32>()).collect(),
                            (0..4).map(|_| rng.random::<f32>()).collect(),
                        ],
                    }
                })
                .collect();
            RawFrame { timestamp: i as f64 / 30.0, hands }
        })
        .collect();
    RawEpisode { embodiment: Embodiment::Human, rate_hz: 30.0, frames }
}
