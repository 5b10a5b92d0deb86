//! Pinhole camera model.
//!
//! Depth convention: z-depth, the projection of a point onto the principal
//! axis — not Euclidean ray length. `backproject(p, d)` therefore always
//! returns a point whose z component equals `d` exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{RigidTransform, Vec3};

/// Pinhole camera: intrinsics in pixels plus a camera-to-world pose.
///
/// Scene geometry in this crate lives in the camera frame; the pose is
/// carried for exporting results into an external frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub pose: RigidTransform,
}

impl Camera {
    pub fn new(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        pose: RigidTransform,
    ) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::Domain(format!("focal lengths must be positive ({fx}, {fy})")));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::Domain(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        pose.validate()?;
        Ok(Self { width, height, fx, fy, cx, cy, pose })
    }

    /// 256x256 camera with a ~44 degree horizontal field of view, identity
    /// pose. The resolution matches the rest of the toolchain's defaults.
    pub fn default_256() -> Self {
        Self {
            width: 256,
            height: 256,
            fx: 320.0,
            fy: 320.0,
            cx: 127.5,
            cy: 127.5,
            pose: RigidTransform::identity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.width, self.height, self.fx, self.fy, self.cx, self.cy, self.pose)
            .map(|_| ())
    }

    /// Project a camera-frame point to continuous pixel coordinates.
    pub fn project(&self, point: Vec3) -> Result<[f64; 2]> {
        if point.z <= 0.0 {
            return Err(Error::Domain(format!(
                "cannot project point with non-positive z ({})",
                point.z
            )));
        }
        Ok([
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        ])
    }

    /// Back-project a pixel at the given z-depth into the camera frame.
    pub fn backproject(&self, pixel: [f64; 2], depth: f64) -> Result<Vec3> {
        if depth <= 0.0 {
            return Err(Error::Domain(format!("depth must be positive, got {depth}")));
        }
        Ok(Vec3::new(
            (pixel[0] - self.cx) / self.fx * depth,
            (pixel[1] - self.cy) / self.fy * depth,
            depth,
        ))
    }

    /// Unit direction of the viewing ray through a pixel.
    pub fn pixel_ray(&self, pixel: [f64; 2]) -> Vec3 {
        Vec3::new(
            (pixel[0] - self.cx) / self.fx,
            (pixel[1] - self.cy) / self.fy,
            1.0,
        )
        .normalize()
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let cam: Camera = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
