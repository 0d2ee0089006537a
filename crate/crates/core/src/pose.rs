//! Rigid-body poses and the compact rotation encodings used by the action
//! representation.
//!
//! Rotations are unit quaternions kept on the canonical hemisphere (w >= 0) so
//! every orientation has exactly one representation. Actions use the 6D
//! encoding (first two rotation-matrix columns) which is continuous and easy
//! to regress; [`from_rot6d`] reconstructs a rotation from noisy 6D values via
//! Gram-Schmidt.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    /// The 6D rotation input has (near-)zero or (near-)parallel columns and
    /// cannot be orthonormalized.
    #[error("degenerate 6D rotation input: {0}")]
    DegenerateRot6D(&'static str),
}

/// Normalizes only when the norm actually drifted, so already-unit inputs
/// keep their exact bit pattern (serialization round trips stay exact).
pub(crate) fn unit_from(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    let n = q.norm();
    debug_assert!(n > 1e-6, "quaternion norm too small to normalize");
    if (n - 1.0).abs() <= 1e-12 {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::from_quaternion(q)
    }
}

/// Returns the quaternion flipped onto the canonical hemisphere (w >= 0).
///
/// For w == 0 the sign of the first nonzero vector component is forced
/// positive so canonicalization is total.
pub(crate) fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.coords; // [x, y, z, w]
    let flip = if c[3] != 0.0 {
        c[3] < 0.0
    } else {
        let first = c.iter().find(|v| **v != 0.0).copied().unwrap_or(1.0);
        first < 0.0
    };
    if flip {
        UnitQuaternion::new_unchecked(Quaternion::new(-c[3], -c[0], -c[1], -c[2]))
    } else {
        q
    }
}

/// Rigid transform: rotation followed by translation, `p' = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    trans: Vector3<f64>,
    rot: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { trans: Vector3::zeros(), rot: UnitQuaternion::identity() }
    }

    /// Builds a pose, renormalizing the quaternion and canonicalizing its sign.
    pub fn new(trans: Vector3<f64>, rot: UnitQuaternion<f64>) -> Self {
        Self { trans, rot: canonical(unit_from(rot.into_inner())) }
    }

    /// Builds a pose from raw quaternion components in (w, x, y, z) order.
    pub fn from_parts(trans: [f64; 3], quat_wxyz: [f64; 4]) -> Self {
        let [w, x, y, z] = quat_wxyz;
        Self::new(Vector3::from(trans), unit_from(Quaternion::new(w, x, y, z)))
    }

    pub fn from_translation(trans: Vector3<f64>) -> Self {
        Self { trans, rot: UnitQuaternion::identity() }
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.trans
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rot
    }

    /// Quaternion components in (w, x, y, z) order, canonical hemisphere.
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let c = self.rot.coords;
        [c[3], c[0], c[1], c[2]]
    }

    /// `self` then `other` applied in `self`'s frame: `T = T_self * T_other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            trans: self.trans + self.rot * other.trans,
            rot: canonical(self.rot * other.rot),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rot.inverse();
        Pose { trans: -(inv_rot * self.trans), rot: canonical(inv_rot) }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.trans + self.rot * p
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rot.to_rotation_matrix().matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.trans);
        m
    }

    /// Serializes as 7 little-endian f64: (tx, ty, tz, qw, qx, qy, qz).
    pub fn to_le_bytes(&self) -> [u8; 56] {
        let mut out = [0u8; 56];
        for (i, v) in self.to_array().iter().enumerate() {
            out[i * 8..i * 8 + 8].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8; 56]) -> Self {
        let mut vals = [0.0f64; 7];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = f64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        }
        Self::from_array(vals)
    }

    /// Component order (tx, ty, tz, qw, qx, qy, qz), matching the wire format.
    pub fn to_array(&self) -> [f64; 7] {
        let t = self.trans;
        let [w, x, y, z] = self.quat_wxyz();
        [t.x, t.y, t.z, w, x, y, z]
    }

    pub fn from_array(v: [f64; 7]) -> Self {
        Self::from_parts([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]])
    }
}

impl serde::Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Pose::from_array(<[f64; 7]>::deserialize(d)?))
    }
}

/// Linear translation blend plus shortest-arc quaternion slerp, `u` in [0, 1].
pub fn pose_interpolate(a: &Pose, b: &Pose, u: f64) -> Pose {
    Pose {
        trans: a.trans.lerp(&b.trans, u),
        rot: canonical(slerp_shortest(&a.rot, &b.rot, u)),
    }
}

fn slerp_shortest(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, u: f64) -> UnitQuaternion<f64> {
    let qa = a.coords;
    let mut qb = b.coords;
    let mut dot = qa.dot(&qb);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    let blended = if dot > 1.0 - 1e-12 {
        // Nearly identical rotations: normalized lerp is exact to precision.
        qa.lerp(&qb, u)
    } else {
        let theta = dot.clamp(-1.0, 1.0).acos();
        let sin_theta = theta.sin();
        let wa = ((1.0 - u) * theta).sin() / sin_theta;
        let wb = (u * theta).sin() / sin_theta;
        qa * wa + qb * wb
    };
    UnitQuaternion::from_quaternion(Quaternion::from_vector(blended))
}

/// Rotation angle of `a^-1 b` in radians, in [0, pi].
pub fn geodesic_distance(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let d = a.inverse() * b;
    let c = d.coords;
    2.0 * c.fixed_rows::<3>(0).norm().atan2(c[3].abs())
}

/// Rotation encoded by the first two rotation-matrix columns, column-major:
/// (r00, r10, r20, r01, r11, r21).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot6D(pub [f64; 6]);

pub fn to_rot6d(rot: &UnitQuaternion<f64>) -> Rot6D {
    let m = rot.to_rotation_matrix();
    let m = m.matrix();
    Rot6D([m[(0, 0)], m[(1, 0)], m[(2, 0)], m[(0, 1)], m[(1, 1)], m[(2, 1)]])
}

/// Gram-Schmidt reconstruction: normalize column one, orthogonalize column
/// two against it, complete with their cross product.
pub fn from_rot6d(r6: &Rot6D) -> Result<UnitQuaternion<f64>, PoseError> {
    let v = &r6.0;
    let a = Vector3::new(v[0], v[1], v[2]);
    let b = Vector3::new(v[3], v[4], v[5]);
    let na = a.norm();
    let nb = b.norm();
    if na < 1e-8 || nb < 1e-8 {
        return Err(PoseError::DegenerateRot6D("column norm below 1e-8"));
    }
    if (a.dot(&b) / (na * nb)).abs() > 1.0 - 1e-8 {
        return Err(PoseError::DegenerateRot6D("columns nearly parallel"));
    }
    let x = a / na;
    let b_perp = b - x * x.dot(&b);
    let nb_perp = b_perp.norm();
    if nb_perp < 1e-8 {
        return Err(PoseError::DegenerateRot6D("columns nearly parallel"));
    }
    let y = b_perp / nb_perp;
    let z = x.cross(&y);
    let m = nalgebra::Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    Ok(canonical(UnitQuaternion::from_rotation_matrix(&m)))
}

/// Relative motion between consecutive poses: metric translation delta plus
/// 6D rotation delta, both expressed in the source frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub dt: Vector3<f64>,
    pub dr6: Rot6D,
}

impl RelativePose {
    pub fn identity() -> Self {
        Self { dt: Vector3::zeros(), dr6: to_rot6d(&UnitQuaternion::identity()) }
    }

    /// Flattens to the 9-dim action layout (dt, dr6).
    pub fn flatten(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        out[..3].copy_from_slice(self.dt.as_slice());
        out[3..].copy_from_slice(&self.dr6.0);
        out
    }

    pub fn from_flat(v: &[f64; 9]) -> Self {
        Self {
            dt: Vector3::new(v[0], v[1], v[2]),
            dr6: Rot6D([v[3], v[4], v[5], v[6], v[7], v[8]]),
        }
    }
}

/// Motion from `a` to `b` expressed in `a`'s frame: `a^-1 * b`.
pub fn relative(a: &Pose, b: &Pose) -> RelativePose {
    let d = a.inverse().compose(b);
    RelativePose { dt: d.trans, dr6: to_rot6d(&d.rot) }
}

/// Reconstructs the pose increment encoded by a relative pose.
pub fn lift(rel: &RelativePose) -> Result<Pose, PoseError> {
    Ok(Pose { trans: rel.dt, rot: from_rot6d(&rel.dr6)? })
}
