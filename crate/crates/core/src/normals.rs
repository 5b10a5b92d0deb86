//! Surface normals from refractive flow.
//!
//! Thin-object model: each camera ray refracts once, at a surface point B,
//! between the object medium and air. The observed flow fixes the background
//! point A the ray actually came from; the normal at B is the unique
//! camera-facing direction for which Snell's law bends the ray A->B into the
//! ray B->O toward the camera. The normal lies in the plane spanned by B->O
//! and B->A, so the search is one-dimensional: a bracketed bisection on the
//! tilt angle. The model is exact when the object's back face sits on the
//! background (the contact regime) and degrades smoothly away from it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::codec::{FlowField, FLOW_QUANTIZATION_FLOOR_PX};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::grid::{Grid2, Mask};
use crate::render::{refract_dir, Refraction};

/// Parameters of the single-interface inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionParams {
    /// Refractive index of the object.
    pub ior: f64,
    /// Pattern-plane z-depth in meters.
    pub h: f64,
    /// Nominal z-depth of the refracting surface (prior for point B).
    pub d0: f64,
    /// Bisection iteration cap.
    pub max_iter: usize,
    /// Angular tolerance on the Snell residual, radians.
    pub tol_rad: f64,
}

impl InversionParams {
    pub fn new(ior: f64, h: f64, d0: f64) -> Result<Self> {
        let p = Self { ior, h, d0, max_iter: 60, tol_rad: 1e-4 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0 && self.d0 < self.h) {
            return Err(Error::Domain(format!(
                "surface prior d0 = {} must lie in (0, h = {})",
                self.d0, self.h
            )));
        }
        if self.ior <= 1.0 {
            return Err(Error::Domain(format!("ior must exceed 1, got {}", self.ior)));
        }
        if self.tol_rad <= 0.0 {
            return Err(Error::Domain("tol_rad must be positive".into()));
        }
        Ok(())
    }
}

/// Upper end of the tilt-angle search bracket.
const PHI_MAX_DEG: f64 = 85.0;
/// Coarse scan resolution used to bracket the root before bisecting.
const BRACKET_STEPS: usize = 64;

/// Per-pixel map of unit normals in the camera frame; NaN outside the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    grid: Grid2,
}

impl NormalMap {
    pub fn new(grid: Grid2) -> Result<Self> {
        if grid.channels() != 3 {
            return Err(Error::Shape("normal map must have 3 channels".into()));
        }
        Ok(Self { grid })
    }

    pub fn nans(width: usize, height: usize) -> Self {
        Self { grid: Grid2::nans(width, height, 3).expect("valid dims") }
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Vec3 {
        Vec3::new(
            self.grid.get(x, y, 0) as f64,
            self.grid.get(x, y, 1) as f64,
            self.grid.get(x, y, 2) as f64,
        )
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, n: Vec3) {
        self.grid.set(x, y, 0, n.x as f32);
        self.grid.set(x, y, 1, n.y as f32);
        self.grid.set(x, y, 2, n.z as f32);
    }

    #[inline]
    pub fn is_finite(&self, x: usize, y: usize) -> bool {
        self.grid.get(x, y, 0).is_finite()
            && self.grid.get(x, y, 1).is_finite()
            && self.grid.get(x, y, 2).is_finite()
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::new(Grid2::read(path)?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        self.grid.write(path)
    }
}

/// Recover the surface normal at one pixel from its refractive flow.
///
/// Returns `None` when the residual has no sign change over the bracket.
/// Flow below the decode quantization floor maps to normal incidence.
pub fn normal_from_flow_pixel(
    flow: [f64; 2],
    pixel: [f64; 2],
    camera: &Camera,
    params: &InversionParams,
) -> Result<Option<Vec3>> {
    if !(flow[0].is_finite() && flow[1].is_finite()) {
        return Err(Error::Domain("flow must be finite".into()));
    }
    params.validate()?;

    let view = camera.pixel_ray(pixel);
    let to_camera = -view;
    if (flow[0] * flow[0] + flow[1] * flow[1]).sqrt() < FLOW_QUANTIZATION_FLOOR_PX {
        // signal below the codec's resolution: report normal incidence
        return Ok(Some(to_camera));
    }

    // B on the viewing ray at the prior depth, A from the flow's C-point
    let surface = view * (params.d0 / view.z);
    let background = camera.backproject([pixel[0] + flow[0], pixel[1] + flow[1]], params.h)?;
    let toward_bg = (background - surface).normalize();

    let lateral = toward_bg - to_camera * toward_bg.dot(&to_camera);
    if lateral.norm() < 1e-12 {
        return Ok(Some(to_camera));
    }
    let lateral = lateral.normalize();

    // candidate normal at tilt phi, in the plane of (B->O, B->A); the normal
    // tilts away from the lateral displacement of A
    let candidate = |phi: f64| to_camera * phi.cos() - lateral * phi.sin();
    // light direction A->B, refracting from the object medium into air
    let incoming = -toward_bg;

    // signed in-plane angle between the refracted ray and the camera ray
    let residual = |phi: f64| -> Option<f64> {
        let n = candidate(phi);
        // incident side is the object side: flip to face the incoming light
        match refract_dir(incoming, -n, params.ior) {
            Ok(Refraction::Transmit(out)) => Some(out.dot(&lateral).atan2(out.dot(&to_camera))),
            Ok(Refraction::TotalInternal) => None,
            Err(_) => None,
        }
    };

    let phi_max = PHI_MAX_DEG.to_radians();
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for i in 0..=BRACKET_STEPS {
        let phi = phi_max * i as f64 / BRACKET_STEPS as f64;
        let Some(r) = residual(phi) else {
            // TIR region begins; nothing beyond it can transmit
            break;
        };
        if r.abs() < params.tol_rad {
            return Ok(Some(candidate(phi)));
        }
        if let Some((p_phi, p_r)) = prev {
            if p_r * r < 0.0 {
                bracket = Some((p_phi, phi, p_r));
                break;
            }
        }
        prev = Some((phi, r));
    }
    let Some((mut lo, mut hi, mut r_lo)) = bracket else {
        return Ok(None);
    };

    for _ in 0..params.max_iter {
        let mid = 0.5 * (lo + hi);
        let Some(r_mid) = residual(mid) else {
            hi = mid;
            continue;
        };
        if r_mid.abs() < params.tol_rad {
            return Ok(Some(candidate(mid)));
        }
        if r_lo * r_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            r_lo = r_mid;
        }
    }
    // a pixel only succeeds with the Snell residual inside tolerance
    let mid = 0.5 * (lo + hi);
    match residual(mid) {
        Some(r) if r.abs() < params.tol_rad => Ok(Some(candidate(mid))),
        _ => Ok(None),
    }
}

/// Outcome counters for a full-map inversion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InversionStats {
    pub recovered: usize,
    pub failed: usize,
    pub skipped: usize,
}

/// Apply [`normal_from_flow_pixel`] over a flow field.
///
/// Pixels outside the mask or without finite flow stay NaN; per-pixel
/// bracket failures become NaN and are counted, not raised.
pub fn normal_map_from_flow(
    flow: &FlowField,
    mask: &Mask,
    camera: &Camera,
    params: &InversionParams,
) -> Result<(NormalMap, InversionStats)> {
    let (w, h) = (flow.width(), flow.height());
    if mask.width() != w || mask.height() != h {
        return Err(Error::Shape("flow and mask must share resolution".into()));
    }
    params.validate()?;

    let rows: Vec<(Vec<[f32; 3]>, InversionStats)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = vec![[f32::NAN; 3]; w];
            let mut stats = InversionStats::default();
            for (x, out) in row.iter_mut().enumerate() {
                if !mask.is_set(x, y) || !flow.is_finite(x, y) {
                    stats.skipped += 1;
                    continue;
                }
                let f = flow.get(x, y);
                match normal_from_flow_pixel(
                    [f[0] as f64, f[1] as f64],
                    [x as f64, y as f64],
                    camera,
                    params,
                ) {
                    Ok(Some(n)) => {
                        *out = [n.x as f32, n.y as f32, n.z as f32];
                        stats.recovered += 1;
                    }
                    _ => stats.failed += 1,
                }
            }
            (row, stats)
        })
        .collect();

    let mut map = NormalMap::nans(w, h);
    let mut total = InversionStats::default();
    for (y, (row, stats)) in rows.iter().enumerate() {
        total.recovered += stats.recovered;
        total.failed += stats.failed;
        total.skipped += stats.skipped;
        for (x, n) in row.iter().enumerate() {
            map.grid.set(x, y, 0, n[0]);
            map.grid.set(x, y, 1, n[1]);
            map.grid.set(x, y, 2, n[2]);
        }
    }
    Ok((map, total))
}
