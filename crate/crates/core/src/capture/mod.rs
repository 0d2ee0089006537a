//! Wrist pose capture: camera and marker-cube geometry, PnP estimation, and
//! synthetic episode generation with known ground truth.

pub mod camera;
pub mod pnp;
pub mod synth;

pub use camera::{project_points, CameraIntrinsics, GeometryError, MarkerCube, MarkerFace};
pub use pnp::{
    estimate_wrist_pose, solve_pnp, CornerObservation, Correspondence, PnpError, PnpSolution,
    PoseEstimate, TrackedFrame, DEFAULT_REPROJ_REJECT_PX,
};
pub use synth::{
    embed_heads, embed_offset, frame_seed, synth_episode, SynthParams, SynthTruth,
};
