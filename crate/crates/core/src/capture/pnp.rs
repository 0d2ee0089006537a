//! Wrist pose estimation from marker-cube corner observations.
//!
//! A linear DLT estimate is refined by Levenberg-Marquardt on the pixel
//! reprojection error. Frames whose refined RMS residual exceeds the
//! rejection threshold are treated as tracking failures, not errors: the
//! absent-pose state is the normal signal for downstream filtering.

use crate::capture::camera::{CameraIntrinsics, MarkerCube};
use crate::pose::Pose;
use nalgebra::{DMatrix, Matrix2x3, Matrix3, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

/// Frames with a refined RMS above this many pixels are rejected. Pinned by
/// tests; override per call site via the `reject_px` argument.
pub const DEFAULT_REPROJ_REJECT_PX: f64 = 3.0;

const LM_INIT_LAMBDA: f64 = 1e-3;
const LM_MAX_ITERS: usize = 100;
const LM_STEP_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum PnpError {
    #[error("need at least 6 correspondences, got {0}")]
    InsufficientPoints(usize),
    #[error("solver diverged: {0}")]
    SolverDiverged(&'static str),
}

/// A 3D model-frame point matched to a pixel measurement.
#[derive(Debug, Clone, Copy)]
pub struct Correspondence {
    pub point: Vector3<f64>,
    pub uv: [f64; 2],
}

/// One detected marker corner: which face, which corner, and where in the
/// image (pixels, within image bounds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerObservation {
    pub face_id: u32,
    pub corner_id: u8,
    pub uv: [f64; 2],
}

/// Pose estimate for one frame plus its root-mean-square pixel residual
/// (square root of the mean squared 2D corner error).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub reproj_rms: f64,
}

/// Per-frame tracking result; `estimate` is absent on tracking loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedFrame {
    pub timestamp: f64,
    pub estimate: Option<PoseEstimate>,
}

#[derive(Debug, Clone)]
pub struct PnpSolution {
    /// Model frame -> camera frame.
    pub pose: Pose,
    pub reproj_rms: f64,
    /// Cost (sum of squared pixel residuals) at init and after each accepted
    /// LM step; non-increasing by construction.
    pub cost_history: Vec<f64>,
}

/// Estimates the model -> camera pose minimizing squared pixel reprojection
/// error. Needs >= 6 correspondences in a non-degenerate configuration.
pub fn solve_pnp(
    corrs: &[Correspondence],
    cam: &CameraIntrinsics,
) -> Result<PnpSolution, PnpError> {
    if corrs.len() < 6 {
        return Err(PnpError::InsufficientPoints(corrs.len()));
    }
    let (mut rot, mut t) = dlt_init(corrs, cam)?;

    let mut cost = match reprojection_cost(corrs, cam, &rot, &t) {
        Some(c) if c.is_finite() => c,
        _ => return Err(PnpError::SolverDiverged("non-finite initial residual")),
    };
    let mut history = vec![cost];
    let mut lambda = LM_INIT_LAMBDA;
    let mut accepted = 0usize;

    for _ in 0..LM_MAX_ITERS {
        let (h, g) = normal_equations(corrs, cam, &rot, &t);
        let Some(chol) = (h + Matrix6::identity() * lambda).cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let delta: Vector6<f64> = chol.solve(&-g);
        if delta.norm() < LM_STEP_TOL {
            break;
        }
        let new_rot = UnitQuaternion::from_scaled_axis(delta.fixed_rows::<3>(0).into_owned())
            * rot;
        let new_t = t + delta.fixed_rows::<3>(3).into_owned();
        match reprojection_cost(corrs, cam, &new_rot, &new_t) {
            Some(new_cost) if new_cost.is_finite() && new_cost < cost => {
                rot = new_rot;
                t = new_t;
                cost = new_cost;
                history.push(cost);
                accepted += 1;
                lambda = (lambda / 10.0).max(1e-12);
            }
            _ => lambda *= 10.0,
        }
    }
    if accepted == 0 && history.len() == 1 && cost > 1e-9 {
        // The linear init was not already optimal and LM never improved it.
        return Err(PnpError::SolverDiverged("no accepted step"));
    }

    Ok(PnpSolution {
        pose: Pose::new(t, rot),
        reproj_rms: (cost / corrs.len() as f64).sqrt(),
        cost_history: history,
    })
}

type Matrix6 = nalgebra::Matrix6<f64>;

fn dlt_init(
    corrs: &[Correspondence],
    cam: &CameraIntrinsics,
) -> Result<(UnitQuaternion<f64>, Vector3<f64>), PnpError> {
    let n = corrs.len();
    // Condition the 3D points: zero centroid, mean distance sqrt(3).
    let centroid: Vector3<f64> = corrs.iter().map(|c| c.point).sum::<Vector3<f64>>() / n as f64;
    let mean_dist = corrs.iter().map(|c| (c.point - centroid).norm()).sum::<f64>() / n as f64;
    let scale = if mean_dist > 1e-12 { 3f64.sqrt() / mean_dist } else { 1.0 };

    let mut m = DMatrix::<f64>::zeros(2 * n, 12);
    for (i, c) in corrs.iter().enumerate() {
        let p = (c.point - centroid) * scale;
        let x = (c.uv[0] - cam.cx) / cam.fx;
        let y = (c.uv[1] - cam.cy) / cam.fy;
        let r0 = 2 * i;
        for (j, v) in [p.x, p.y, p.z, 1.0].iter().enumerate() {
            m[(r0, j)] = *v;
            m[(r0, 8 + j)] = -x * v;
            m[(r0 + 1, 4 + j)] = *v;
            m[(r0 + 1, 8 + j)] = -y * v;
        }
    }

    let svd = m.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let min_idx = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or(PnpError::SolverDiverged("empty svd"))?;
    let p = v_t.row(min_idx);

    // P maps conditioned points; fold the conditioning back in.
    let a = Matrix3::new(p[0], p[1], p[2], p[4], p[5], p[6], p[8], p[9], p[10]);
    let mut lin = a * scale;
    let mut trans = Vector3::new(p[3], p[7], p[11]) - lin * centroid;

    // Resolve the projective sign so points land in front of the camera.
    let mean_depth: f64 =
        corrs.iter().map(|c| (lin * c.point + trans).z).sum::<f64>() / n as f64;
    if mean_depth < 0.0 {
        lin = -lin;
        trans = -trans;
    }

    // Nearest rotation (orthogonal Procrustes) and the matching scale.
    let svd3 = lin.svd(true, true);
    let (u, v_t3) = (svd3.u.unwrap(), svd3.v_t.unwrap());
    let det = (u * v_t3).determinant();
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det.signum()));
    let r = u * d * v_t3;
    let sigma = svd3.singular_values.mean();
    if !(sigma > 1e-12) || !r.iter().all(|v| v.is_finite()) {
        return Err(PnpError::SolverDiverged("degenerate linear system"));
    }

    let rot = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r));
    Ok((rot, trans / sigma))
}

fn reprojection_cost(
    corrs: &[Correspondence],
    cam: &CameraIntrinsics,
    rot: &UnitQuaternion<f64>,
    t: &Vector3<f64>,
) -> Option<f64> {
    let mut cost = 0.0;
    for c in corrs {
        let uv = cam.project(&(rot * c.point + t))?;
        cost += (uv[0] - c.uv[0]).powi(2) + (uv[1] - c.uv[1]).powi(2);
    }
    Some(cost)
}

/// Gauss-Newton normal equations (J^T J, J^T r) for the pixel residual, with
/// the rotation parametrized by a left-multiplied axis-angle perturbation.
fn normal_equations(
    corrs: &[Correspondence],
    cam: &CameraIntrinsics,
    rot: &UnitQuaternion<f64>,
    t: &Vector3<f64>,
) -> (Matrix6, Vector6<f64>) {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    for c in corrs {
        let q = rot * c.point;
        let p = q + t;
        let z = p.z;
        let duv_dp = Matrix2x3::new(
            cam.fx / z,
            0.0,
            -cam.fx * p.x / (z * z),
            0.0,
            cam.fy / z,
            -cam.fy * p.y / (z * z),
        );
        let dp_domega = -skew(&q);
        let j_omega = duv_dp * dp_domega;
        let j_t = duv_dp;
        let uv = [cam.fx * p.x / z + cam.cx, cam.fy * p.y / z + cam.cy];
        let r = nalgebra::Vector2::new(uv[0] - c.uv[0], uv[1] - c.uv[1]);

        let mut j = nalgebra::Matrix2x6::<f64>::zeros();
        j.fixed_view_mut::<2, 3>(0, 0).copy_from(&j_omega);
        j.fixed_view_mut::<2, 3>(0, 3).copy_from(&j_t);
        h += j.transpose() * j;
        g += j.transpose() * r;
    }
    (h, g)
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Looks up the observed corners on the cube, solves PnP, rejects frames with
/// RMS above `reject_px`, and maps the cube pose to the wrist via the mount
/// offset. `None` is the tracking-loss state.
pub fn estimate_wrist_pose(
    observations: &[CornerObservation],
    cube: &MarkerCube,
    cam: &CameraIntrinsics,
    reject_px: f64,
) -> Option<PoseEstimate> {
    let corrs: Vec<Correspondence> = observations
        .iter()
        .filter_map(|o| {
            cube.corner(o.face_id, o.corner_id as usize)
                .map(|point| Correspondence { point, uv: o.uv })
        })
        .collect();
    if corrs.len() < 6 {
        return None;
    }
    let sol = solve_pnp(&corrs, cam).ok()?;
    if sol.reproj_rms > reject_px {
        return None;
    }
    Some(PoseEstimate {
        pose: sol.pose.compose(&cube.wrist_offset),
        reproj_rms: sol.reproj_rms,
    })
}
