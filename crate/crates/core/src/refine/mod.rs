//! Depth refinement by sparse linear least squares, and point-cloud lifting.
//!
//! The energy fuses three quadratic terms over the unknown depths D:
//!
//! ```text
//! E = lambda_data   * sum_obs   (D_p - D0_p)^2
//!   + lambda_smooth * sum_(p,q) w_pq (D_p - D_q)^2
//!   + lambda_normal * sum_(p,q) w_pq (n . (P_q - P_p))^2
//! ```
//!
//! where P = backproject(pixel, D) and w_pq attenuates edges that touch the
//! boundary band. Unknowns are the masked pixels plus a 2-px observed ring
//! outside the mask; sensor depth inside the mask is discarded outright (it
//! carries the refracted background distance, not the surface), so the data
//! term acts on the ring only. Backprojection is linear in z-depth, which
//! makes the whole energy an exact quadratic; the spare second linearization
//! pass in [`refine_depth`] re-solves the same system from the first
//! solution and is kept as a cheap guard.

pub mod sparse;

use nalgebra::Vector3;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::grid::{Grid2, Mask};
use crate::normals::NormalMap;
pub use sparse::{energy_non_increasing, solve_cg, CgStats, CsrMatrix, TripletBuilder};

/// Term weights for the refinement energy.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyWeights {
    pub lambda_data: f64,
    pub lambda_smooth: f64,
    pub lambda_normal: f64,
    /// Multiplier in [0, 1] on smooth/normal terms for edges touching the
    /// boundary band.
    pub boundary_atten: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self { lambda_data: 1000.0, lambda_smooth: 1.0, lambda_normal: 1.0, boundary_atten: 0.01 }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        let ws = [self.lambda_data, self.lambda_smooth, self.lambda_normal];
        if ws.iter().any(|w| *w < 0.0) || !(0.0..=1.0).contains(&self.boundary_atten) {
            return Err(Error::Domain("weights must be non-negative, atten in [0,1]".into()));
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err(Error::Domain("at least one energy weight must be positive".into()));
        }
        Ok(())
    }
}

/// Diagonal regularization added to keep the system strictly SPD.
pub const DIAG_REG: f64 = 1e-10;
/// Width of the observed ring outside the mask, pixels (Chebyshev).
pub const RING_WIDTH: usize = 2;
/// Default CG stopping tolerance (relative residual).
pub const CG_TOL: f64 = 1e-8;
/// Default CG iteration cap.
pub const CG_MAX_ITER: usize = 10_000;

/// Sparse normal-equations system over unknown pixels.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Pixel (x, y) of each unknown index.
    pub pixel_of_unknown: Vec<(usize, usize)>,
    /// Unknown index per pixel, usize::MAX where not an unknown.
    pub unknown_of_pixel: Vec<usize>,
    width: usize,
    height: usize,
}

impl SparseSystem {
    pub fn n_unknowns(&self) -> usize {
        self.pixel_of_unknown.len()
    }

    pub fn unknown_at(&self, x: usize, y: usize) -> Option<usize> {
        let u = self.unknown_of_pixel[y * self.width + x];
        (u != usize::MAX).then_some(u)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

fn aligned(a: &Grid2, w: usize, h: usize) -> bool {
    a.width() == w && a.height() == h
}

/// Back-projection ray scale: P(D) = ray_coeff * D.
#[inline]
fn ray_coeff(camera: &Camera, x: usize, y: usize) -> Vector3<f64> {
    Vector3::new(
        (x as f64 - camera.cx) / camera.fx,
        (y as f64 - camera.cy) / camera.fy,
        1.0,
    )
}

/// Assemble the quadratic refinement system.
///
/// Unknowns: mask pixels plus the 2-px ring of finite sensor depth outside
/// the mask. Errors when the mask is empty or no ring pixel exists (mask
/// flush against the border with nothing observed around it).
pub fn assemble_system(
    sensor_depth: &Grid2,
    mask: &Mask,
    boundary: &Mask,
    normal_map: &NormalMap,
    camera: &Camera,
    weights: &EnergyWeights,
) -> Result<SparseSystem> {
    weights.validate()?;
    let (w, h) = (sensor_depth.width(), sensor_depth.height());
    if sensor_depth.channels() != 1 {
        return Err(Error::Shape("sensor depth must be single-channel".into()));
    }
    if !aligned(mask.grid(), w, h) || !aligned(boundary.grid(), w, h) || !aligned(normal_map.grid(), w, h)
    {
        return Err(Error::Shape("refinement inputs must share resolution".into()));
    }

    // unknown set: mask, then observed ring within RING_WIDTH outside it
    let mut unknown_of_pixel = vec![usize::MAX; w * h];
    let mut pixel_of_unknown = Vec::new();
    let mut is_ring = Vec::new();
    let mut n_masked = 0usize;
    for y in 0..h {
        for x in 0..w {
            if mask.is_set(x, y) {
                unknown_of_pixel[y * w + x] = pixel_of_unknown.len();
                pixel_of_unknown.push((x, y));
                is_ring.push(false);
                n_masked += 1;
            }
        }
    }
    if n_masked == 0 {
        return Err(Error::Empty("mask selects no pixels".into()));
    }
    let rw = RING_WIDTH as i64;
    let mut n_ring = 0usize;
    for y in 0..h {
        for x in 0..w {
            if mask.is_set(x, y) || !sensor_depth.get(x, y, 0).is_finite() {
                continue;
            }
            let mut near = false;
            'scan: for dy in -rw..=rw {
                for dx in -rw..=rw {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if mask.grid().in_bounds(nx, ny) && mask.is_set(nx as usize, ny as usize) {
                        near = true;
                        break 'scan;
                    }
                }
            }
            if near {
                unknown_of_pixel[y * w + x] = pixel_of_unknown.len();
                pixel_of_unknown.push((x, y));
                is_ring.push(true);
                n_ring += 1;
            }
        }
    }
    if n_ring == 0 {
        return Err(Error::UnderConstrained(
            "no observed ring around the mask (mask touches the border?)".into(),
        ));
    }

    let n = pixel_of_unknown.len();
    let mut t = TripletBuilder::new(n);
    let mut rhs = vec![0.0; n];

    for (u, &(x, y)) in pixel_of_unknown.iter().enumerate() {
        t.add(u, u, DIAG_REG);
        if is_ring[u] {
            t.add(u, u, weights.lambda_data);
            rhs[u] += weights.lambda_data * sensor_depth.get(x, y, 0) as f64;
        }
    }

    // 4-neighbor edges within the unknown set (right and down from each pixel)
    for (u, &(x, y)) in pixel_of_unknown.iter().enumerate() {
        for (nx, ny) in [(x + 1, y), (x, y + 1)] {
            if nx >= w || ny >= h {
                continue;
            }
            let v = unknown_of_pixel[ny * w + nx];
            if v == usize::MAX {
                continue;
            }
            let w_pq = if boundary.is_set(x, y) || boundary.is_set(nx, ny) {
                weights.boundary_atten
            } else {
                1.0
            };
            if w_pq == 0.0 {
                continue;
            }

            let ls = weights.lambda_smooth * w_pq;
            if ls > 0.0 {
                t.add(u, u, ls);
                t.add(v, v, ls);
                t.add_sym(u, v, -ls);
            }

            let ln = weights.lambda_normal * w_pq;
            if ln > 0.0 {
                let r_p = ray_coeff(camera, x, y);
                let r_q = ray_coeff(camera, nx, ny);
                // residual per finite endpoint normal: n . (P_q - P_p)
                for (sx, sy) in [(x, y), (nx, ny)] {
                    if !normal_map.is_finite(sx, sy) {
                        continue;
                    }
                    let nrm = normal_map.get(sx, sy);
                    let cp = nrm.dot(&r_p);
                    let cq = nrm.dot(&r_q);
                    t.add(u, u, ln * cp * cp);
                    t.add(v, v, ln * cq * cq);
                    t.add_sym(u, v, -ln * cp * cq);
                }
            }
        }
    }

    Ok(SparseSystem {
        matrix: t.build(),
        rhs,
        pixel_of_unknown,
        unknown_of_pixel,
        width: w,
        height: h,
    })
}

/// Refine sensor depth over the mask. Outside the mask the sensor depth
/// passes through untouched.
pub fn refine_depth(
    sensor_depth: &Grid2,
    mask: &Mask,
    boundary: &Mask,
    normal_map: &NormalMap,
    camera: &Camera,
    weights: &EnergyWeights,
) -> Result<(Grid2, CgStats)> {
    let sys = assemble_system(sensor_depth, mask, boundary, normal_map, camera, weights)?;
    let (x0, _) = solve_cg(&sys.matrix, &sys.rhs, None, CG_TOL, CG_MAX_ITER)?;
    // second linearization pass: the energy is already an exact quadratic
    // (backprojection is linear in z-depth), so this re-solve is a no-op up
    // to solver tolerance; warm-started, it converges immediately.
    let sys2 = assemble_system(sensor_depth, mask, boundary, normal_map, camera, weights)?;
    let (x, stats) = solve_cg(&sys2.matrix, &sys2.rhs, Some(&x0), CG_TOL, CG_MAX_ITER)?;

    let mut out = sensor_depth.clone();
    for (u, &(px, py)) in sys2.pixel_of_unknown.iter().enumerate() {
        if mask.is_set(px, py) {
            out.set(px, py, 0, x[u] as f32);
        }
    }
    Ok((out, stats))
}

/// Oriented, labeled point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudN {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// Source pixel per point.
    pub pixels: Vec<(u32, u32)>,
    /// Connected-component label per point, 0 = largest component.
    pub labels: Vec<u32>,
}

impl PointCloudN {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_components(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m as usize + 1)
    }

    /// ASCII export: `x y z nx ny nz label` per line.
    pub fn write_ascii(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.len() {
            let (p, n) = (self.points[i], self.normals[i]);
            writeln!(f, "{} {} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z, self.labels[i])?;
        }
        Ok(())
    }

    pub fn read_ascii(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut points = Vec::new();
        let mut normals = Vec::new();
        let mut labels = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("cloud line {}: {e}", ln + 1)))?;
            if vals.len() != 7 {
                return Err(Error::Config(format!("cloud line {} has {} fields, expected 7", ln + 1, vals.len())));
            }
            points.push(Vec3::new(vals[0], vals[1], vals[2]));
            normals.push(Vec3::new(vals[3], vals[4], vals[5]));
            labels.push(vals[6] as u32);
        }
        if points.is_empty() {
            return Err(Error::Empty("point cloud file has no points".into()));
        }
        let pixels = vec![(0, 0); points.len()];
        Ok(Self { points, normals, pixels, labels })
    }
}

/// Lift a depth map to an oriented point cloud over the mask.
///
/// One point per masked pixel with finite depth and finite normal; labels
/// are 4-connected components ordered by decreasing size.
pub fn depth_to_pointcloud(
    depth: &Grid2,
    normal_map: &NormalMap,
    mask: &Mask,
    camera: &Camera,
) -> Result<PointCloudN> {
    let (w, h) = (depth.width(), depth.height());
    if !aligned(mask.grid(), w, h) || !aligned(normal_map.grid(), w, h) {
        return Err(Error::Shape("depth, normals and mask must share resolution".into()));
    }
    if mask.count() == 0 {
        return Err(Error::Empty("mask selects no pixels".into()));
    }

    let include = |x: usize, y: usize| -> bool {
        mask.is_set(x, y)
            && depth.get(x, y, 0).is_finite()
            && depth.get(x, y, 0) > 0.0
            && normal_map.is_finite(x, y)
    };

    // 4-connected components over included pixels
    let mut comp = vec![u32::MAX; w * h];
    let mut sizes: Vec<(usize, u32)> = Vec::new();
    let mut next_label = 0u32;
    for y in 0..h {
        for x in 0..w {
            if !include(x, y) || comp[y * w + x] != u32::MAX {
                continue;
            }
            let mut stack = vec![(x, y)];
            comp[y * w + x] = next_label;
            let mut size = 0usize;
            while let Some((cx, cy)) = stack.pop() {
                size += 1;
                let neighbors = [
                    (cx.wrapping_sub(1), cy),
                    (cx + 1, cy),
                    (cx, cy.wrapping_sub(1)),
                    (cx, cy + 1),
                ];
                for (nx, ny) in neighbors {
                    if nx < w && ny < h && include(nx, ny) && comp[ny * w + nx] == u32::MAX {
                        comp[ny * w + nx] = next_label;
                        stack.push((nx, ny));
                    }
                }
            }
            sizes.push((size, next_label));
            next_label += 1;
        }
    }
    if next_label == 0 {
        return Err(Error::Empty("no masked pixel has finite depth and normal".into()));
    }
    // relabel by decreasing size (stable for ties by first appearance)
    sizes.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut relabel = vec![0u32; next_label as usize];
    for (rank, &(_, old)) in sizes.iter().enumerate() {
        relabel[old as usize] = rank as u32;
    }

    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !include(x, y) {
                continue;
            }
            let p = camera.backproject([x as f64, y as f64], depth.get(x, y, 0) as f64)?;
            points.push(p);
            normals.push(normal_map.get(x, y).normalize());
            pixels.push((x as u32, y as u32));
            labels.push(relabel[comp[y * w + x] as usize]);
        }
    }
    Ok(PointCloudN { points, normals, pixels, labels })
}
