//! Pinhole camera model mounted on the UAV body.
//!
//! Frames:
//! * world: local ENU (x east, y north, z up)
//! * body: x forward, y left, z up; yaw-only rotation relative to world
//! * camera: x right, y down, z forward (optical)
//!
//! The extrinsic maps body coordinates into camera coordinates:
//! `p_cam = R * p_body + t`.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("focal lengths must be positive (fx={fx}, fy={fy})")]
    Focal { fx: f64, fy: f64 },
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error("extrinsic rotation is not a proper rotation (orthonormality error {0:e})")]
    NotRotation(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsic {
    /// Row-major body→camera rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Extrinsic {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Forward-looking optical mount, tilted down by `pitch_down` radians.
    pub fn forward_looking(pitch_down: f64) -> Self {
        let (s, c) = pitch_down.sin_cos();
        Self {
            rotation: [[0.0, -1.0, 0.0], [-s, 0.0, -c], [c, 0.0, -s]],
            translation: [0.0; 3],
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn translation_vector(&self) -> Vec3 {
        Vector3::from(self.translation)
    }
}

/// Position and heading of the body frame in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub yaw: f64,
}

impl Pose {
    fn yaw_rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw)
    }

    pub fn body_to_world(&self, p: &Vec3) -> Vec3 {
        self.yaw_rotation() * p + self.position
    }

    pub fn world_to_body(&self, p: &Vec3) -> Vec3 {
        self.yaw_rotation().inverse() * (p - self.position)
    }

    pub fn body_dir_to_world(&self, d: &Vec3) -> Vec3 {
        self.yaw_rotation() * d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub extrinsic: Extrinsic,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::Focal { fx: self.fx, fy: self.fy });
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::EmptyImage);
        }
        let r = self.extrinsic.rotation_matrix();
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det_err = (r.determinant() - 1.0).abs();
        let err = ortho.max(det_err);
        if !(err <= 1e-9) {
            return Err(CameraError::NotRotation(err));
        }
        Ok(())
    }

    pub fn body_to_camera(&self, p: &Vec3) -> Vec3 {
        self.extrinsic.rotation_matrix() * p + self.extrinsic.translation_vector()
    }

    pub fn camera_to_body(&self, p: &Vec3) -> Vec3 {
        self.extrinsic.rotation_matrix().transpose() * (p - self.extrinsic.translation_vector())
    }

    pub fn world_to_camera(&self, pose: &Pose, p: &Vec3) -> Vec3 {
        self.body_to_camera(&pose.world_to_body(p))
    }

    pub fn camera_to_world(&self, pose: &Pose, p: &Vec3) -> Vec3 {
        pose.body_to_world(&self.camera_to_body(p))
    }

    /// Optical center in world coordinates.
    pub fn center_world(&self, pose: &Pose) -> Vec3 {
        self.camera_to_world(pose, &Vec3::zeros())
    }

    /// Optical axis in world coordinates.
    pub fn forward_world(&self, pose: &Pose) -> Vec3 {
        let fwd_body = self.extrinsic.rotation_matrix().transpose() * Vec3::z();
        pose.body_dir_to_world(&fwd_body)
    }

    /// Optical axis projected onto the body's horizontal plane, normalized.
    /// Falls back to body +x for a camera looking straight up or down.
    pub fn horizontal_forward_body(&self) -> Vec3 {
        let f = self.extrinsic.rotation_matrix().transpose() * Vec3::z();
        let h = Vec3::new(f.x, f.y, 0.0);
        if h.norm() < 1e-9 {
            Vec3::x()
        } else {
            h.normalize()
        }
    }

    /// Camera-frame point to `(u, v, z_depth)`; `None` when behind the camera.
    pub fn project_camera(&self, pc: &Vec3) -> Option<(f64, f64, f64)> {
        if pc.z <= 0.0 {
            return None;
        }
        Some((self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy, pc.z))
    }

    pub fn project(&self, pose: &Pose, p: &Vec3) -> Option<(f64, f64, f64)> {
        self.project_camera(&self.world_to_camera(pose, p))
    }

    /// Camera-frame point at z-depth `d` along the ray through pixel `(u, v)`.
    pub fn unproject_camera(&self, u: f64, v: f64, d: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx * d, (v - self.cy) / self.fy * d, d)
    }

    pub fn unproject(&self, pose: &Pose, u: f64, v: f64, d: f64) -> Vec3 {
        self.camera_to_world(pose, &self.unproject_camera(u, v, d))
    }

    /// World-frame unit ray through pixel `(u, v)` plus the z-depth gained per
    /// unit of ray length (for converting hit distances into z-depth).
    pub fn pixel_ray(&self, pose: &Pose, u: f64, v: f64) -> (Vec3, Vec3, f64) {
        let dc = self.unproject_camera(u, v, 1.0);
        let len = dc.norm();
        let origin = self.center_world(pose);
        let dir_body = self.extrinsic.rotation_matrix().transpose() * (dc / len);
        (origin, pose.body_dir_to_world(&dir_body), 1.0 / len)
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}
