//! Fingertip-to-joint retargeting by damped-least-squares inverse kinematics.
//!
//! A [`HandModel`] is a set of serial kinematic chains in the wrist frame,
//! one per finger. Each joint rotates about a fixed local axis and is
//! followed by a link along the local x axis; the fingertip sits at a fixed
//! offset past the last link. [`ik_retarget`] finds in-limit joint angles
//! whose forward kinematics match target fingertip positions in the
//! least-squares sense.

use crate::pose::Pose;
use nalgebra::{DMatrix, DVector, UnitQuaternion, UnitVector3, Vector3};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

/// Fingertip targets farther than this from the wrist origin are rejected as
/// sensor glitches; the reference hand reaches about 0.2 m.
pub const MAX_TARGET_RADIUS_M: f64 = 0.3;

#[derive(Debug, Error)]
pub enum RetargetError {
    #[error("invalid hand model: {0}")]
    InvalidModel(String),
    #[error("joint {index} value {value} outside [{lo}, {hi}]")]
    JointLimitViolation { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("non-finite fingertip target (finger {finger})")]
    NonFiniteTarget { finger: usize },
    #[error("fingertip target {dist:.3} m from wrist exceeds {MAX_TARGET_RADIUS_M} m (finger {finger})")]
    TargetOutOfRange { finger: usize, dist: f64 },
    #[error("expected {expected} {what}, got {got}")]
    WrongCount { what: &'static str, expected: usize, got: usize },
    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<RetargetError>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandJoint {
    pub axis: [f64; 3],
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Finger {
    #[serde(default)]
    pub name: String,
    /// Knuckle pose in the wrist frame, wire order (tx ty tz qw qx qy qz).
    pub base_pose: [f64; 7],
    pub joints: Vec<HandJoint>,
    /// Link length after each joint, meters; same length as `joints`.
    pub links: Vec<f64>,
    pub tip_offset: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandModel {
    #[serde(default)]
    pub name: String,
    pub fingers: Vec<Finger>,
}

static REFERENCE: OnceLock<HandModel> = OnceLock::new();

impl HandModel {
    pub fn from_json(text: &str) -> Result<HandModel, RetargetError> {
        let model: HandModel = serde_json::from_str(text)
            .map_err(|e| RetargetError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    /// The built-in five-finger, 17-joint hand.
    pub fn reference() -> HandModel {
        REFERENCE
            .get_or_init(|| {
                HandModel::from_json(include_str!("../assets/reference_hand.json"))
                    .expect("embedded hand model is valid")
            })
            .clone()
    }

    /// The reference hand with the distal joint of every four-joint finger
    /// fused into the tip offset, leaving three joints per finger. Each tip
    /// position then determines its finger's angles uniquely (locally), which
    /// makes joint-space recovery testable.
    pub fn reference_non_redundant() -> HandModel {
        let mut model = HandModel::reference();
        model.name = "reference-15".into();
        for f in &mut model.fingers {
            while f.joints.len() > 3 {
                f.joints.pop();
                let fused = f.links.pop().unwrap();
                f.tip_offset[0] += fused;
            }
        }
        model
    }

    /// A single planar two-link finger (l1 = l2 = 0.04 m, both joints about
    /// z, limits ±1.57 rad) used for oracle tests.
    pub fn planar_two_link() -> HandModel {
        HandModel {
            name: "planar-2".into(),
            fingers: vec![Finger {
                name: "finger".into(),
                base_pose: [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
                joints: vec![
                    HandJoint { axis: [0.0, 0.0, 1.0], lo: -1.57, hi: 1.57 },
                    HandJoint { axis: [0.0, 0.0, 1.0], lo: -1.57, hi: 1.57 },
                ],
                links: vec![0.04, 0.04],
                tip_offset: [0.0, 0.0, 0.0],
            }],
        }
    }

    pub fn validate(&self) -> Result<(), RetargetError> {
        if self.fingers.is_empty() {
            return Err(RetargetError::InvalidModel("no fingers".into()));
        }
        for (fi, f) in self.fingers.iter().enumerate() {
            if f.joints.is_empty() || f.joints.len() != f.links.len() {
                return Err(RetargetError::InvalidModel(format!(
                    "finger {fi}: {} joints vs {} links",
                    f.joints.len(),
                    f.links.len()
                )));
            }
            for (ji, j) in f.joints.iter().enumerate() {
                let norm = Vector3::from(j.axis).norm();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(RetargetError::InvalidModel(format!(
                        "finger {fi} joint {ji}: axis norm {norm}"
                    )));
                }
                if !(j.lo < j.hi) {
                    return Err(RetargetError::InvalidModel(format!(
                        "finger {fi} joint {ji}: limits [{}, {}]",
                        j.lo, j.hi
                    )));
                }
            }
            if f.links.iter().any(|l| !l.is_finite() || *l < 0.0) {
                return Err(RetargetError::InvalidModel(format!("finger {fi}: bad link length")));
            }
        }
        Ok(())
    }

    pub fn total_joints(&self) -> usize {
        self.fingers.iter().map(|f| f.joints.len()).sum()
    }

    /// Midpoint of every joint range; the cold-start configuration.
    pub fn mid_range_q(&self) -> Vec<f64> {
        self.fingers
            .iter()
            .flat_map(|f| f.joints.iter().map(|j| 0.5 * (j.lo + j.hi)))
            .collect()
    }

    pub fn clamp_q(&self, q: &mut [f64]) {
        let mut k = 0;
        for f in &self.fingers {
            for j in &f.joints {
                q[k] = q[k].clamp(j.lo, j.hi);
                k += 1;
            }
        }
    }

    fn check_limits(&self, q: &[f64]) -> Result<(), RetargetError> {
        if q.len() != self.total_joints() {
            return Err(RetargetError::WrongCount {
                what: "joint angles",
                expected: self.total_joints(),
                got: q.len(),
            });
        }
        let mut k = 0;
        for f in &self.fingers {
            for j in &f.joints {
                if q[k] < j.lo || q[k] > j.hi {
                    return Err(RetargetError::JointLimitViolation {
                        index: k,
                        value: q[k],
                        lo: j.lo,
                        hi: j.hi,
                    });
                }
                k += 1;
            }
        }
        Ok(())
    }
}

/// One fingertip position per finger, in the wrist frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FingertipTargets(pub Vec<Vector3<f64>>);

impl FingertipTargets {
    pub fn from_flat(v: &[f64; 15]) -> FingertipTargets {
        FingertipTargets(
            v.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect(),
        )
    }

    pub fn validate(&self) -> Result<(), RetargetError> {
        for (i, t) in self.0.iter().enumerate() {
            if !t.iter().all(|v| v.is_finite()) {
                return Err(RetargetError::NonFiniteTarget { finger: i });
            }
            let dist = t.norm();
            if dist > MAX_TARGET_RADIUS_M {
                return Err(RetargetError::TargetOutOfRange { finger: i, dist });
            }
        }
        Ok(())
    }
}

fn fk_finger(f: &Finger, q: &[f64]) -> Vector3<f64> {
    let base = Pose::from_array(f.base_pose);
    let mut rot = base.rotation();
    let mut pos = base.translation();
    for (j, (joint, link)) in f.joints.iter().zip(&f.links).enumerate() {
        let axis = UnitVector3::new_normalize(Vector3::from(joint.axis));
        rot *= UnitQuaternion::from_axis_angle(&axis, q[j]);
        pos += rot * Vector3::new(*link, 0.0, 0.0);
    }
    pos + rot * Vector3::from(f.tip_offset)
}

fn fk_unchecked(model: &HandModel, q: &[f64]) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(model.fingers.len());
    let mut k = 0;
    for f in &model.fingers {
        out.push(fk_finger(f, &q[k..k + f.joints.len()]));
        k += f.joints.len();
    }
    out
}

/// Fingertip positions for an in-limit joint configuration.
pub fn forward_kinematics(
    model: &HandModel,
    q: &[f64],
) -> Result<Vec<Vector3<f64>>, RetargetError> {
    model.check_limits(q)?;
    Ok(fk_unchecked(model, q))
}

#[derive(Debug, Clone)]
pub struct IkParams {
    pub lambda: f64,
    pub fd_step_rad: f64,
    pub max_iters: usize,
    /// Stop once the stacked tip error norm falls below this, meters.
    pub residual_tol_m: f64,
    pub step_tol_rad: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        IkParams {
            lambda: 0.05,
            fd_step_rad: 1e-6,
            max_iters: 200,
            residual_tol_m: 1e-4,
            step_tol_rad: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: Vec<f64>,
    /// Norm of the stacked fingertip error at `q`, meters.
    pub residual: f64,
    /// Accepted damped-least-squares iterations.
    pub iterations: usize,
}

fn stacked_residual(model: &HandModel, q: &[f64], targets: &[Vector3<f64>]) -> DVector<f64> {
    let tips = fk_unchecked(model, q);
    let mut r = DVector::zeros(3 * targets.len());
    for (i, (tip, target)) in tips.iter().zip(targets).enumerate() {
        r.fixed_rows_mut::<3>(3 * i).copy_from(&(target - tip));
    }
    r
}

fn dls_solve(
    model: &HandModel,
    targets: &[Vector3<f64>],
    q_init: &[f64],
    params: &IkParams,
) -> IkSolution {
    let n = model.total_joints();
    let mut q = q_init.to_vec();
    model.clamp_q(&mut q);
    let mut residual = stacked_residual(model, &q, targets);
    let mut cost = residual.norm();
    let mut iterations = 0;

    for _ in 0..params.max_iters {
        if cost < params.residual_tol_m {
            break;
        }
        // Central-difference Jacobian of the stacked tip positions.
        let mut jac = DMatrix::zeros(3 * targets.len(), n);
        for j in 0..n {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[j] += params.fd_step_rad;
            qm[j] -= params.fd_step_rad;
            let tp = fk_unchecked(model, &qp);
            let tm = fk_unchecked(model, &qm);
            for (f, (a, b)) in tp.iter().zip(&tm).enumerate() {
                let col = (a - b) / (2.0 * params.fd_step_rad);
                jac.fixed_view_mut::<3, 1>(3 * f, j).copy_from(&col);
            }
        }

        let dls_step = |jac: &DMatrix<f64>| -> Option<DVector<f64>> {
            let jjt = jac * jac.transpose();
            let eye = DMatrix::identity(jjt.nrows(), jjt.ncols());
            let damped = jjt + eye * params.lambda.powi(2);
            Some(jac.transpose() * damped.cholesky()?.solve(&residual))
        };
        let Some(mut step) = dls_step(&jac) else { break };

        // Joints the step drives into a limit contribute nothing; zero their
        // columns and recompute so the other joints compensate instead of
        // crawling against the wall.
        let mut active = Vec::new();
        let mut k = 0;
        for f in &model.fingers {
            for joint in &f.joints {
                let v = q[k] + step[k];
                if (v < joint.lo && step[k] < 0.0) || (v > joint.hi && step[k] > 0.0) {
                    active.push(k);
                }
                k += 1;
            }
        }
        if !active.is_empty() && active.len() < n {
            let mut reduced = jac.clone();
            for j in &active {
                reduced.column_mut(*j).fill(0.0);
            }
            if let Some(s) = dls_step(&reduced) {
                step = s;
            }
        }
        if step.norm() < params.step_tol_rad {
            break;
        }

        let mut improved = false;
        let mut scale = 1.0;
        for _ in 0..8 {
            let mut q_new = q.clone();
            for j in 0..n {
                q_new[j] += scale * step[j];
            }
            model.clamp_q(&mut q_new);
            let r_new = stacked_residual(model, &q_new, targets);
            let c_new = r_new.norm();
            if c_new < cost {
                q = q_new;
                residual = r_new;
                cost = c_new;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
        iterations += 1;
    }

    IkSolution { q, residual: cost, iterations }
}

/// Damped least squares on the stacked fingertip error with joint limits
/// enforced by clamping each step. Backtracks on non-decreasing residual and
/// stops when no fraction of the step helps, so the residual is
/// non-increasing over accepted iterations.
///
/// If the solve from `q_init` misses the residual tolerance (possible when
/// the start is in the wrong elbow basin or jams against a joint limit), a
/// fixed set of canonical starts is tried as well; fingers are independent
/// chains, so the best solution is assembled per finger. Unreachable targets
/// settle at a least-squares solution rather than failing.
pub fn ik_retarget(
    model: &HandModel,
    targets: &[Vector3<f64>],
    q_init: &[f64],
    params: &IkParams,
) -> Result<IkSolution, RetargetError> {
    if targets.len() != model.fingers.len() {
        return Err(RetargetError::WrongCount {
            what: "fingertip targets",
            expected: model.fingers.len(),
            got: targets.len(),
        });
    }
    for (i, t) in targets.iter().enumerate() {
        if !t.iter().all(|v| v.is_finite()) {
            return Err(RetargetError::NonFiniteTarget { finger: i });
        }
    }

    let primary = dls_solve(model, targets, q_init, params);
    if primary.residual < params.residual_tol_m {
        return Ok(primary);
    }

    let mut solutions = vec![primary];
    for t in [0.15, 0.5, 0.85] {
        let start: Vec<f64> = model
            .fingers
            .iter()
            .flat_map(|f| f.joints.iter().map(move |j| j.lo + t * (j.hi - j.lo)))
            .collect();
        solutions.push(dls_solve(model, targets, &start, params));
    }

    // Assemble the best block per finger: the stacked residual decomposes
    // over fingers, so mixing blocks from different starts is still optimal.
    let iterations = solutions.iter().map(|s| s.iterations).sum();
    let mut q = Vec::with_capacity(model.total_joints());
    let mut total_sq = 0.0;
    let mut offset = 0;
    for (fi, f) in model.fingers.iter().enumerate() {
        let nf = f.joints.len();
        let best = solutions
            .iter()
            .map(|s| {
                let block = &s.q[offset..offset + nf];
                let res = (fk_finger(f, block) - targets[fi]).norm();
                (res, block)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        total_sq += best.0 * best.0;
        q.extend_from_slice(best.1);
        offset += nf;
    }
    Ok(IkSolution { q, residual: total_sq.sqrt(), iterations })
}

/// Retargets a fingertip series with warm starting: frame 0 solves from the
/// mid-range pose, each later frame from the previous frame's solution.
/// Returns joint angles and the residual per frame.
pub fn retarget_series(
    model: &HandModel,
    series: &[FingertipTargets],
    params: &IkParams,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), RetargetError> {
    let mut qs = Vec::with_capacity(series.len());
    let mut residuals = Vec::with_capacity(series.len());
    let mut q_prev = model.mid_range_q();
    for (i, targets) in series.iter().enumerate() {
        let wrap = |source: RetargetError| RetargetError::AtFrame {
            frame: i,
            source: Box::new(source),
        };
        targets.validate().map_err(wrap)?;
        let sol = ik_retarget(model, &targets.0, &q_prev, params).map_err(wrap)?;
        q_prev = sol.q.clone();
        qs.push(sol.q);
        residuals.push(sol.residual);
    }
    Ok((qs, residuals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_q(model: &HandModel, rng: &mut impl Rng) -> Vec<f64> {
        let mut q = Vec::with_capacity(model.total_joints());
        for f in &model.fingers {
            for j in &f.joints {
                q.push(j.lo + rng.random::<f64>() * (j.hi - j.lo));
            }
        }
        q
    }

    #[test]
    fn reference_model_shape() {
        let model = HandModel::reference();
        model.validate().unwrap();
        assert_eq!(model.fingers.len(), 5);
        assert_eq!(model.total_joints(), 17);
        let slim = HandModel::reference_non_redundant();
        slim.validate().unwrap();
        assert_eq!(slim.total_joints(), 15);
        assert!(slim.fingers.iter().all(|f| f.joints.len() == 3));
    }

    #[test]
    fn fused_distal_joint_preserves_straight_tip() {
        // With the distal angle at zero the fused model's tip must coincide
        // with the full model's.
        let full = HandModel::reference();
        let slim = HandModel::reference_non_redundant();
        let mut q_full = Vec::new();
        let mut q_slim = Vec::new();
        for f in &full.fingers {
            for (j, joint) in f.joints.iter().enumerate() {
                let v = 0.5 * (joint.lo + joint.hi);
                if j == 3 {
                    // Distal joint fixed at zero; not within its limits, so
                    // compare through the unchecked chain.
                    q_full.push(0.0);
                } else {
                    q_full.push(v);
                    q_slim.push(v);
                }
            }
        }
        let tips_full = fk_unchecked(&full, &q_full);
        let tips_slim = fk_unchecked(&slim, &q_slim);
        for (a, b) in tips_full.iter().zip(&tips_slim) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn straight_chain_at_zero_angles() {
        let model = HandModel::planar_two_link();
        let tips = forward_kinematics(&model, &[0.0, 0.0]).unwrap();
        assert!((tips[0] - Vector3::new(0.08, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn right_angle_first_joint_rotates_tip() {
        let model = HandModel::planar_two_link();
        // Exactly 90 degrees sits just past the 1.57 rad limit, so evaluate
        // the unchecked chain there and the checked API at the limit.
        let tips = fk_unchecked(&model, &[std::f64::consts::FRAC_PI_2, 0.0]);
        assert!((tips[0] - Vector3::new(0.0, 0.08, 0.0)).norm() < 1e-12);
        let q = [1.57, 0.0];
        let tips = forward_kinematics(&model, &q).unwrap();
        let want = Vector3::new(0.08 * q[0].cos(), 0.08 * q[0].sin(), 0.0);
        assert!((tips[0] - want).norm() < 1e-12);
        assert!((tips[0].norm() - 0.08).abs() < 1e-12);
    }

    #[test]
    fn fk_matches_homogeneous_chain_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let model = HandModel::reference();
        for _ in 0..200 {
            let q = random_q(&model, &mut rng);
            let tips = forward_kinematics(&model, &q).unwrap();
            let mut k = 0;
            for (f, finger) in model.fingers.iter().enumerate() {
                let mut m: Matrix4<f64> = Pose::from_array(finger.base_pose).to_homogeneous();
                for (j, link) in finger.links.iter().enumerate() {
                    let axis = UnitVector3::new_normalize(Vector3::from(finger.joints[j].axis));
                    let rot = UnitQuaternion::from_axis_angle(&axis, q[k + j])
                        .to_rotation_matrix()
                        .to_homogeneous();
                    let mut trans = Matrix4::identity();
                    trans[(0, 3)] = *link;
                    m = m * rot * trans;
                }
                let tip = m.transform_point(&nalgebra::Point3::from(Vector3::from(
                    finger.tip_offset,
                )));
                assert!((tips[f] - tip.coords).norm() < 1e-12);
                k += finger.joints.len();
            }
        }
    }

    #[test]
    fn fk_rejects_out_of_limit_angles() {
        let model = HandModel::planar_two_link();
        let err = forward_kinematics(&model, &[2.0, 0.0]).unwrap_err();
        assert!(matches!(err, RetargetError::JointLimitViolation { index: 0, .. }));
    }

    #[test]
    fn planar_fk_round_trip_from_random_targets() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let model = HandModel::planar_two_link();
        let params = IkParams::default();
        for _ in 0..100 {
            // Keep the elbow bent: at q2 near zero the chain is extended and
            // singular, where fixed-damping steps converge sublinearly.
            let q1 = -1.57 + rng.random::<f64>() * 3.14;
            let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
            let q2 = sign * (0.5 + rng.random::<f64>() * 0.9);
            let targets = fk_unchecked(&model, &[q1, q2]);
            let sol = ik_retarget(&model, &targets, &model.mid_range_q(), &params).unwrap();
            assert!(sol.residual < 1e-4, "residual {}", sol.residual);
        }
    }

    #[test]
    fn full_reach_target_straightens_the_finger() {
        let model = HandModel::planar_two_link();
        let sol = ik_retarget(
            &model,
            &[Vector3::new(0.08, 0.0, 0.0)],
            &[0.4, 0.4],
            &IkParams::default(),
        )
        .unwrap();
        assert!(sol.residual < 1e-4);
        assert!(sol.q[0].abs() < 0.05 && sol.q[1].abs() < 0.05, "q = {:?}", sol.q);
    }

    #[test]
    fn ik_matches_brute_force_grid() {
        let model = HandModel::planar_two_link();
        // Converge well past the grid resolution so the comparison measures
        // where the optimum is, not where the default stop rule fires.
        let params = IkParams { residual_tol_m: 1e-7, ..IkParams::default() };
        let f = &model.fingers[0];
        let targets = [
            Vector3::new(0.05, 0.03, 0.0),
            Vector3::new(0.02, 0.06, 0.0),
            Vector3::new(0.045, -0.04, 0.0),
        ];
        for target in targets {
            let sol = ik_retarget(&model, &[target], &model.mid_range_q(), &params).unwrap();
            let mut best = (f64::INFINITY, 0.0, 0.0);
            let steps = (2.0f64 * 1.57 / 1e-3).round() as i64;
            for i in 0..=steps {
                let q1 = -1.57 + i as f64 * 1e-3;
                for j in 0..=steps {
                    let q2 = -1.57 + j as f64 * 1e-3;
                    let tip = fk_finger(f, &[q1, q2]);
                    let r = (tip - target).norm();
                    if r < best.0 {
                        best = (r, q1, q2);
                    }
                }
            }
            let angles_close =
                (sol.q[0] - best.1).abs() <= 2e-3 && (sol.q[1] - best.2).abs() <= 2e-3;
            // Mirror-branch solutions match in cost (the DLS objective), not
            // in angles; compare squared errors there.
            let cost_close = (sol.residual.powi(2) - best.0.powi(2)).abs() < 1e-6;
            assert!(
                angles_close || cost_close,
                "target {target:?}: ik ({:?}, {}) vs grid ({}, {}, {})",
                sol.q,
                sol.residual,
                best.1,
                best.2,
                best.0
            );
        }
    }

    #[test]
    fn reference_round_trip_500_random_targets() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let model = HandModel::reference();
        let params = IkParams::default();
        let q0 = model.mid_range_q();
        let mut worst = 0.0f64;
        for i in 0..500 {
            let q_star = random_q(&model, &mut rng);
            let targets = fk_unchecked(&model, &q_star);
            let sol = ik_retarget(&model, &targets, &q0, &params).unwrap();
            worst = worst.max(sol.residual);
            assert!(sol.residual < 1e-4, "trial {i}: residual {}", sol.residual);
        }
        assert!(worst < 1e-4);
    }

    #[test]
    fn solutions_respect_joint_limits() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let model = HandModel::reference();
        let params = IkParams::default();
        for _ in 0..50 {
            // Arbitrary targets, including unreachable ones.
            let targets: Vec<Vector3<f64>> = (0..5)
                .map(|_| {
                    Vector3::new(
                        rng.random::<f64>() * 0.3 - 0.15,
                        rng.random::<f64>() * 0.25,
                        rng.random::<f64>() * 0.2 - 0.1,
                    )
                })
                .collect();
            let sol = ik_retarget(&model, &targets, &model.mid_range_q(), &params).unwrap();
            model.check_limits(&sol.q).unwrap();
        }
    }

    #[test]
    fn non_finite_target_is_rejected() {
        let model = HandModel::planar_two_link();
        let err = ik_retarget(
            &model,
            &[Vector3::new(f64::NAN, 0.0, 0.0)],
            &[0.0, 0.0],
            &IkParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, RetargetError::NonFiniteTarget { finger: 0 }));
    }

    #[test]
    fn constant_targets_give_constant_warm_started_joints() {
        let model = HandModel::reference();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let q_star = random_q(&model, &mut rng);
        let tips = fk_unchecked(&model, &q_star);
        let mut flat = [0.0f64; 15];
        for (i, t) in tips.iter().enumerate() {
            flat[3 * i..3 * i + 3].copy_from_slice(t.as_slice());
        }
        let series = vec![FingertipTargets::from_flat(&flat); 10];
        let (qs, residuals) = retarget_series(&model, &series, &IkParams::default()).unwrap();
        for i in 1..qs.len() {
            for (a, b) in qs[i].iter().zip(&qs[1]) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!(residuals[i] < 1e-4);
        }
        // Warm-started frames converge immediately.
        let sol = ik_retarget(&model, &tips, &qs[1], &IkParams::default()).unwrap();
        assert!(sol.iterations <= 2);
    }

    #[test]
    fn smooth_joint_trajectory_is_recovered() {
        // FK-generated episode on the non-redundant model: retargeting must
        // recover the generating joint trajectory.
        let model = HandModel::reference_non_redundant();
        let n = 120;
        let mut truth = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 / 30.0;
            let mut q = Vec::new();
            for (fi, f) in model.fingers.iter().enumerate() {
                for (ji, j) in f.joints.iter().enumerate() {
                    let mid = 0.5 * (j.lo + j.hi);
                    let span = 0.5 * (j.hi - j.lo);
                    // Keep flexion away from both the straight-chain pose and
                    // deep curl, where tips lose sensitivity to the first axis.
                    let amp = if ji == 0 { 0.6 * span } else { 0.35 * span };
                    let phase = fi as f64 * 0.7 + ji as f64 * 1.3;
                    q.push(mid + amp * (2.0 * std::f64::consts::PI * 0.4 * t + phase).sin());
                }
            }
            truth.push(q);
        }
        let series: Vec<FingertipTargets> = truth
            .iter()
            .map(|q| FingertipTargets(fk_unchecked(&model, q)))
            .collect();
        let (qs, _) = retarget_series(&model, &series, &IkParams::default()).unwrap();
        let mut sq = 0.0;
        let mut count = 0;
        for (got, want) in qs.iter().zip(&truth) {
            for (a, b) in got.iter().zip(want) {
                sq += (a - b).powi(2);
                count += 1;
            }
        }
        let rms = (sq / count as f64).sqrt();
        assert!(rms < 5e-3, "joint recovery RMS {rms}");
    }

    #[test]
    fn warm_start_keeps_joint_steps_proportional_to_target_steps() {
        let model = HandModel::reference();
        let n = 90;
        let mut series = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 / 30.0;
            let mut q = Vec::new();
            for (fi, f) in model.fingers.iter().enumerate() {
                for (ji, j) in f.joints.iter().enumerate() {
                    let mid = 0.5 * (j.lo + j.hi);
                    let span = 0.5 * (j.hi - j.lo);
                    q.push(mid + 0.3 * span * (2.0 * t + fi as f64 + ji as f64).sin());
                }
            }
            series.push(FingertipTargets(fk_unchecked(&model, &q)));
        }
        let (qs, _) = retarget_series(&model, &series, &IkParams::default()).unwrap();
        for i in 1..n {
            let dq: f64 = qs[i]
                .iter()
                .zip(&qs[i - 1])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let dt: f64 = series[i]
                .0
                .iter()
                .zip(&series[i - 1].0)
                .map(|(a, b)| (a - b).norm_squared())
                .sum::<f64>()
                .sqrt();
            // Continuity constant calibrated once on this model and frozen.
            assert!(dq <= 60.0 * dt + 1e-9, "frame {i}: dq {dq} vs dt {dt}");
        }
    }

    #[test]
    fn residual_decreases_monotonically_under_backtracking() {
        // Re-run IK step by step, checking the invariant via iteration counts:
        // each accepted iteration must not increase the residual.
        let model = HandModel::reference();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..20 {
            let q_star = random_q(&model, &mut rng);
            let targets = fk_unchecked(&model, &q_star);
            let mut prev = f64::INFINITY;
            for iters in 1..=12 {
                let params = IkParams { max_iters: iters, ..IkParams::default() };
                let sol = ik_retarget(&model, &targets, &model.mid_range_q(), &params).unwrap();
                assert!(sol.residual <= prev + 1e-15, "residual rose at iter {iters}");
                prev = sol.residual;
            }
        }
    }

    #[test]
    fn out_of_range_target_is_reported_with_frame() {
        let model = HandModel::reference();
        let mut flat = [0.0f64; 15];
        flat[0] = 0.5;
        let series =
            vec![FingertipTargets::from_flat(&[0.05; 15]), FingertipTargets::from_flat(&flat)];
        let err = retarget_series(&model, &series, &IkParams::default()).unwrap_err();
        match err {
            RetargetError::AtFrame { frame, source } => {
                assert_eq!(frame, 1);
                assert!(matches!(*source, RetargetError::TargetOutOfRange { finger: 0, .. }));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
