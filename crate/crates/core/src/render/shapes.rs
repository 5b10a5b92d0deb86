//! Analytic ray intersections for the parametric transparent shapes.
//!
//! Every surface is described by its canonical outward normal together with
//! the media on its two sides, so a crossing direction alone determines the
//! refraction ratio. This keeps the tracer stateless: a grazing chord that is
//! numerically skipped cannot corrupt medium bookkeeping for later surfaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Medium {
    Air,
    Glass,
}

/// A ray-surface crossing in camera-frame coordinates.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceHit {
    pub t: f64,
    pub point: Vec3,
    /// Canonical outward normal of the surface (unit, camera frame).
    pub outward_normal: Vec3,
    /// Medium on the outward-normal side.
    pub outside: Medium,
    /// Medium on the opposite side.
    pub inside: Medium,
}

/// Parametric shape, in its local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "params", rename_all = "snake_case")]
pub enum ShapeSpec {
    /// Solid glass sphere of the given radius.
    SolidSphere { radius: f64 },
    /// Hollow glass sphere: wall between `outer_r - thickness` and `outer_r`.
    SphereShell { outer_r: f64, thickness: f64 },
    /// Open glass tube along local z: wall between `r - thickness` and `r`,
    /// clipped to height; no end caps.
    CylinderShell { r: f64, thickness: f64, height: f64 },
    /// Parallel-faced plate: faces perpendicular to local z at +-thickness/2,
    /// square lateral extent, closed by its four side walls (a full box).
    Slab { thickness: f64, extent: f64 },
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ShapeSpec::SolidSphere { radius } => radius > 0.0,
            ShapeSpec::SphereShell { outer_r, thickness } => {
                outer_r > 0.0 && thickness > 0.0 && thickness < outer_r
            }
            ShapeSpec::CylinderShell { r, thickness, height } => {
                r > 0.0 && thickness > 0.0 && thickness < r && height > 0.0
            }
            ShapeSpec::Slab { thickness, extent } => thickness > 0.0 && extent > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid shape parameters: {self:?}")))
        }
    }

    /// Radius of a bounding sphere around the local origin.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            ShapeSpec::SolidSphere { radius } => radius,
            ShapeSpec::SphereShell { outer_r, .. } => outer_r,
            ShapeSpec::CylinderShell { r, height, .. } => (r * r + 0.25 * height * height).sqrt(),
            ShapeSpec::Slab { thickness, extent } => {
                (0.25 * thickness * thickness + 0.5 * extent * extent).sqrt()
            }
        }
    }

    /// Local z of the lowest point (largest local z is toward +z).
    pub fn lowest_local_z(&self) -> f64 {
        match *self {
            ShapeSpec::SolidSphere { radius } => radius,
            ShapeSpec::SphereShell { outer_r, .. } => outer_r,
            ShapeSpec::CylinderShell { height, .. } => 0.5 * height,
            ShapeSpec::Slab { thickness, .. } => 0.5 * thickness,
        }
    }
}

/// A posed transparent object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransparentObject {
    #[serde(flatten)]
    pub shape: ShapeSpec,
    #[serde(default)]
    pub pose: RigidTransform,
    #[serde(default = "default_ior")]
    pub ior: f64,
}

fn default_ior() -> f64 {
    1.5
}

impl TransparentObject {
    /// Half-extent of the posed object along the camera z axis: the object
    /// lies within [center_z - s, center_z + s]. Exact for all shapes.
    pub fn vertical_support(&self) -> f64 {
        let r = self.pose.rotation_matrix();
        let az = |col: usize| r[(2, col)].abs();
        match self.shape {
            ShapeSpec::SolidSphere { radius } => radius,
            ShapeSpec::SphereShell { outer_r, .. } => outer_r,
            ShapeSpec::CylinderShell { r: rad, height, .. } => {
                let wz = az(2);
                0.5 * height * wz + rad * (1.0 - wz * wz).max(0.0).sqrt()
            }
            ShapeSpec::Slab { thickness, extent } => {
                0.5 * thickness * az(2) + 0.5 * extent * (az(0) + az(1))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.pose.validate()?;
        if self.ior <= 1.0 {
            return Err(Error::Domain(format!("refractive index must exceed 1, got {}", self.ior)));
        }
        Ok(())
    }

    /// Nearest surface crossing along the camera-frame ray, if any.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64) -> Option<SurfaceHit> {
        let inv = self.pose.inverse();
        let o = inv.apply(origin);
        let d = inv.apply_dir(dir);
        let local = match self.shape {
            ShapeSpec::SolidSphere { radius } => {
                sphere_hit(o, d, radius, t_min, Medium::Air, Medium::Glass)
            }
            ShapeSpec::SphereShell { outer_r, thickness } => nearest(
                sphere_hit(o, d, outer_r, t_min, Medium::Air, Medium::Glass),
                sphere_hit(o, d, outer_r - thickness, t_min, Medium::Glass, Medium::Air),
            ),
            ShapeSpec::CylinderShell { r, thickness, height } => nearest(
                cylinder_hit(o, d, r, height, t_min, Medium::Air, Medium::Glass),
                cylinder_hit(o, d, r - thickness, height, t_min, Medium::Glass, Medium::Air),
            ),
            ShapeSpec::Slab { thickness, extent } => box_hit(o, d, extent, thickness, t_min),
        }?;
        Some(SurfaceHit {
            t: local.t,
            point: self.pose.apply(local.point),
            outward_normal: self.pose.apply_dir(local.outward_normal),
            outside: local.outside,
            inside: local.inside,
        })
    }
}

fn nearest(a: Option<SurfaceHit>, b: Option<SurfaceHit>) -> Option<SurfaceHit> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if x.t <= y.t { x } else { y }),
        (x, None) => x,
        (None, y) => y,
    }
}

fn sphere_hit(o: Vec3, d: Vec3, r: f64, t_min: f64, outside: Medium, inside: Medium) -> Option<SurfaceHit> {
    // |o + t d|^2 = r^2 with unit-ish d
    let a = d.dot(&d);
    let b = o.dot(&d);
    let c = o.dot(&o) - r * r;
    let disc = b * b - a * c;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let mut t = (-b - sq) / a;
    if t <= t_min {
        t = (-b + sq) / a;
    }
    if t <= t_min {
        return None;
    }
    let point = o + d * t;
    Some(SurfaceHit {
        t,
        point,
        outward_normal: point.normalize(),
        outside,
        inside,
    })
}

fn cylinder_hit(
    o: Vec3,
    d: Vec3,
    r: f64,
    height: f64,
    t_min: f64,
    outside: Medium,
    inside: Medium,
) -> Option<SurfaceHit> {
    let a = d.x * d.x + d.y * d.y;
    if a < 1e-300 {
        return None; // ray parallel to the axis
    }
    let b = o.x * d.x + o.y * d.y;
    let c = o.x * o.x + o.y * o.y - r * r;
    let disc = b * b - a * c;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    for t in [(-b - sq) / a, (-b + sq) / a] {
        if t <= t_min {
            continue;
        }
        let point = o + d * t;
        if point.z.abs() <= 0.5 * height {
            let n = Vec3::new(point.x, point.y, 0.0).normalize();
            return Some(SurfaceHit { t, point, outward_normal: n, outside, inside });
        }
    }
    None
}

/// Axis-aligned glass box: extent x extent laterally, thickness along z.
fn box_hit(o: Vec3, d: Vec3, extent: f64, thickness: f64, t_min: f64) -> Option<SurfaceHit> {
    let half = Vec3::new(0.5 * extent, 0.5 * extent, 0.5 * thickness);
    let mut best: Option<SurfaceHit> = None;
    for axis in 0..3 {
        if d[axis].abs() < 1e-300 {
            continue;
        }
        for sign in [-1.0f64, 1.0] {
            let t = (sign * half[axis] - o[axis]) / d[axis];
            if t <= t_min {
                continue;
            }
            let point = o + d * t;
            let inside = (0..3).all(|a| a == axis || point[a].abs() <= half[a]);
            if !inside {
                continue;
            }
            if best.as_ref().is_none_or(|b| t < b.t) {
                let mut n = Vec3::zeros();
                n[axis] = sign;
                best = Some(SurfaceHit {
                    t,
                    point,
                    outward_normal: n,
                    outside: Medium::Air,
                    inside: Medium::Glass,
                });
            }
        }
    }
    best
}
