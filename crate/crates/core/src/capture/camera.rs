//! Pinhole camera model and the fiducial marker cube mounted on the glove.

use crate::pose::Pose;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid marker cube: {0}")]
    InvalidCube(String),
}

/// Pinhole intrinsics in pixels: `u = fx X/Z + cx`, `v = fy Y/Z + cy`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let err = |m: String| Err(GeometryError::InvalidIntrinsics(m));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return err(format!("focal lengths must be positive, got ({}, {})", self.fx, self.fy));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return err(format!("principal point ({}, {}) outside image", self.cx, self.cy));
        }
        Ok(())
    }

    /// Projects a camera-frame point; `None` when at or behind the camera
    /// plane (Z <= 1e-6 m).
    pub fn project(&self, p: &Vector3<f64>) -> Option<[f64; 2]> {
        if p.z <= 1e-6 {
            return None;
        }
        Some([self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy])
    }

    pub fn contains(&self, uv: &[f64; 2]) -> bool {
        (0.0..self.width as f64).contains(&uv[0]) && (0.0..self.height as f64).contains(&uv[1])
    }
}

/// Projects model-frame points through `pose` (model frame -> camera frame).
pub fn project_points(
    pose: &Pose,
    points: &[Vector3<f64>],
    cam: &CameraIntrinsics,
) -> Vec<Option<[f64; 2]>> {
    points.iter().map(|p| cam.project(&pose.transform_point(p))).collect()
}

/// One marker face: four corner positions in the cube frame, ordered
/// counter-clockwise seen from outside the cube.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkerFace {
    pub face_id: u32,
    pub corners: [[f64; 3]; 4],
}

impl MarkerFace {
    pub fn corner(&self, corner_id: usize) -> Option<Vector3<f64>> {
        self.corners.get(corner_id).map(|c| Vector3::from(*c))
    }

    pub fn center(&self) -> Vector3<f64> {
        self.corners.iter().map(|c| Vector3::from(*c)).sum::<Vector3<f64>>() / 4.0
    }

    /// Unit normal of the corner plane, oriented away from the cube center.
    pub fn outward_normal(&self) -> Vector3<f64> {
        let c0 = Vector3::from(self.corners[0]);
        let c1 = Vector3::from(self.corners[1]);
        let c2 = Vector3::from(self.corners[2]);
        let n = (c1 - c0).cross(&(c2 - c0)).normalize();
        if n.dot(&self.center()) < 0.0 {
            -n
        } else {
            n
        }
    }
}

/// Marker cube rigidly attached to the glove wrist. All corner coordinates
/// live on the cube surface; `wrist_offset` maps the cube frame to the wrist
/// frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkerCube {
    pub edge: f64,
    pub faces: Vec<MarkerFace>,
    pub wrist_offset: Pose,
}

impl MarkerCube {
    /// Standard six-face cube with markers inset from the face edges.
    pub fn standard(edge: f64, wrist_offset: Pose) -> Self {
        let h = edge / 2.0;
        let m = 0.35 * edge; // marker half-size
        // For each face: (outward axis, in-plane u axis, in-plane v axis).
        let axes: [(Vector3<f64>, Vector3<f64>, Vector3<f64>); 6] = [
            (Vector3::x(), Vector3::y(), Vector3::z()),
            (-Vector3::x(), Vector3::z(), Vector3::y()),
            (Vector3::y(), Vector3::z(), Vector3::x()),
            (-Vector3::y(), Vector3::x(), Vector3::z()),
            (Vector3::z(), Vector3::x(), Vector3::y()),
            (-Vector3::z(), Vector3::y(), Vector3::x()),
        ];
        let faces = axes
            .iter()
            .enumerate()
            .map(|(id, (n, u, v))| {
                let center = n * h;
                let corners = [
                    center - u * m - v * m,
                    center + u * m - v * m,
                    center + u * m + v * m,
                    center - u * m + v * m,
                ];
                MarkerFace { face_id: id as u32, corners: corners.map(|c| [c.x, c.y, c.z]) }
            })
            .collect();
        Self { edge, faces, wrist_offset }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let err = |m: String| Err(GeometryError::InvalidCube(m));
        if self.edge <= 0.0 {
            return err(format!("edge must be positive, got {}", self.edge));
        }
        let h = self.edge / 2.0;
        for face in &self.faces {
            for c in &face.corners {
                let on_surface = c.iter().any(|v| (v.abs() - h).abs() <= 1e-9);
                let inside = c.iter().all(|v| v.abs() <= h + 1e-9);
                if !on_surface || !inside {
                    return err(format!("face {} corner {:?} not on cube surface", face.face_id, c));
                }
            }
            let c: Vec<Vector3<f64>> = face.corners.iter().map(|v| Vector3::from(*v)).collect();
            let volume = (c[1] - c[0]).cross(&(c[2] - c[0])).dot(&(c[3] - c[0]));
            if volume.abs() > 1e-9 {
                return err(format!("face {} corners are not coplanar", face.face_id));
            }
        }
        Ok(())
    }

    pub fn face(&self, face_id: u32) -> Option<&MarkerFace> {
        self.faces.iter().find(|f| f.face_id == face_id)
    }

    /// Corner position in the cube frame, or `None` for unknown ids.
    pub fn corner(&self, face_id: u32, corner_id: usize) -> Option<Vector3<f64>> {
        self.face(face_id).and_then(|f| f.corner(corner_id))
    }
}
