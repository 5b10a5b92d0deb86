//! Small geometric primitives shared across the crate.
//!
//! All 3D math is done in `f64`; image payloads are `f32`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance for the rotation orthonormality check.
pub const ROTATION_TOL: f64 = 1e-9;

/// Rigid transform (rotation then translation), meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    /// Row-major 3x3 rotation matrix.
    pub rotation: [[f64; 3]; 3],
    /// Translation in meters.
    pub translation: [f64; 3],
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        let mut rot = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                rot[r][c] = rotation[(r, c)];
            }
        }
        Self {
            rotation: rot,
            translation: [translation.x, translation.y, translation.z],
        }
    }

    /// Rotation about the x axis composed with a translation.
    pub fn rot_x(angle_rad: f64, translation: Vec3) -> Self {
        let (s, c) = angle_rad.sin_cos();
        let rot = Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c);
        Self::new(rot, translation)
    }

    /// Rotation about the y axis composed with a translation.
    pub fn rot_y(angle_rad: f64, translation: Vec3) -> Self {
        let (s, c) = angle_rad.sin_cos();
        let rot = Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
        Self::new(rot, translation)
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        Mat3::new(
            self.rotation[0][0],
            self.rotation[0][1],
            self.rotation[0][2],
            self.rotation[1][0],
            self.rotation[1][1],
            self.rotation[1][2],
            self.rotation[2][0],
            self.rotation[2][1],
            self.rotation[2][2],
        )
    }

    pub fn translation_vector(&self) -> Vec3 {
        Vec3::new(self.translation[0], self.translation[1], self.translation[2])
    }

    /// Apply to a point.
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation_matrix() * p + self.translation_vector()
    }

    /// Apply only the rotation (for direction vectors).
    pub fn apply_dir(&self, d: Vec3) -> Vec3 {
        self.rotation_matrix() * d
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation_matrix().transpose();
        Self::new(rt, -(rt * self.translation_vector()))
    }

    /// Reject matrices that are not proper rotations.
    pub fn validate(&self) -> Result<()> {
        let r = self.rotation_matrix();
        let should_be_identity = r.transpose() * r;
        let dev = (should_be_identity - Mat3::identity()).abs().max();
        if dev > ROTATION_TOL {
            return Err(Error::Domain(format!(
                "rotation is not orthonormal (max deviation {dev:.3e})"
            )));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::Domain(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(())
    }
}

/// Refuse vectors that are not unit length within `tol`.
pub fn check_unit(v: Vec3, tol: f64, what: &str) -> Result<()> {
    let n = v.norm();
    if (n - 1.0).abs() > tol {
        return Err(Error::Domain(format!("{what} is not unit length (|v| = {n})")));
    }
    Ok(())
}
