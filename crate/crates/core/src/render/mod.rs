//! Analytic ray tracer over parametric transparent objects.
//!
//! Scenes live in the camera frame: the camera sits at the origin looking
//! along +z, and the background pattern plane is fronto-parallel at z = h.
//! Tracing is deterministic and embarrassingly parallel; the only random
//! element is the sensor noise model, which draws from a per-pixel RNG
//! seeded by (scene seed, x, y) so results are bit-identical regardless of
//! scheduling.

pub mod optics;
pub mod shapes;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::codec::FlowField;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::graycode::{PatternStack, StackMeta};
use crate::grid::{Grid2, Mask};
pub use optics::{fresnel_reflectance, refract_dir, Refraction};
pub use shapes::{Medium, ShapeSpec, SurfaceHit, TransparentObject};

const T_EPS: f64 = 1e-9;
const MAX_INTERFACES: usize = 64;

/// Background pattern plane, fronto-parallel at `distance_m` along camera z.
///
/// Pattern cells are square; one pattern unit spans `scale_px_per_unit`
/// camera pixels at the direct (no-object) view through the image center,
/// i.e. a cell edge is `scale_px_per_unit * distance_m / fx` meters. The
/// pattern is centered on the principal axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternPlane {
    pub distance_m: f64,
    pub scale_px_per_unit: f64,
    pub pattern: StackMeta,
    /// Sub-unit shift of the displayed pattern (u, v), pattern units. Lets
    /// two rigs differ only in stripe phase.
    #[serde(default)]
    pub phase_offset: [f64; 2],
}

impl PatternPlane {
    pub fn default_at(distance_m: f64) -> Self {
        Self {
            distance_m,
            scale_px_per_unit: 1.0,
            pattern: StackMeta::default_10bit(),
            phase_offset: [0.0, 0.0],
        }
    }
}

/// Sensor error model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    /// Probability of a missing return on masked pixels past the grazing angle.
    pub p_fail: f64,
    /// Incidence angle (degrees) beyond which returns may drop out.
    pub grazing_deg: f64,
    /// Gaussian noise sigma on background depth, meters.
    pub noise_sigma_m: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self { p_fail: 0.3, grazing_deg: 70.0, noise_sigma_m: 0.001 }
    }
}

/// Camera + pattern plane + transparent objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub camera: Camera,
    pub plane: PatternPlane,
    pub objects: Vec<TransparentObject>,
    #[serde(default)]
    pub sensor: SensorParams,
    #[serde(default)]
    pub seed: u64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.plane.distance_m <= 0.0 {
            return Err(Error::Domain("plane distance must be positive".into()));
        }
        if self.plane.scale_px_per_unit <= 0.0 {
            return Err(Error::Domain("pattern scale must be positive".into()));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            obj.validate()?;
            let cz = obj.pose.translation[2];
            let s = obj.vertical_support();
            if cz - s <= 0.0 {
                return Err(Error::Domain(format!("object {i} reaches behind the camera")));
            }
            if cz + s > self.plane.distance_m + 1e-9 {
                return Err(Error::Domain(format!("object {i} extends beyond the pattern plane")));
            }
        }
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let scene: Scene =
            serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Meters per pattern unit on the plane.
    pub fn pattern_unit_m(&self) -> f64 {
        self.plane.scale_px_per_unit * self.plane.distance_m / self.camera.fx
    }

    /// Continuous pattern coordinate of a plane point.
    pub fn pattern_coord(&self, plane_point: Vec3) -> [f64; 2] {
        let unit = self.pattern_unit_m();
        [
            plane_point.x / unit + 0.5 * self.plane.pattern.pattern_width as f64
                + self.plane.phase_offset[0],
            plane_point.y / unit + 0.5 * self.plane.pattern.pattern_height as f64
                + self.plane.phase_offset[1],
        ]
    }

    /// A copy of the scene with its objects removed (reference capture).
    pub fn without_objects(&self) -> Scene {
        Scene { objects: Vec::new(), ..self.clone() }
    }
}

/// How a traced camera ray ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RayStatus {
    /// Reached the plane without touching any object.
    BackgroundDirect,
    /// Reached the plane after refracting through object interfaces.
    BackgroundRefracted,
    /// Dropped at an interface where total internal reflection occurred.
    TirLost,
    /// Escaped without reaching the plane.
    Miss,
}

/// Full trace record for one pixel.
#[derive(Debug, Clone, Copy)]
pub struct RayOutcome {
    pub status: RayStatus,
    /// z-depth of the first object surface hit; NaN when no object was hit.
    pub first_hit_depth: f64,
    /// Unit normal at the first hit, oriented toward the camera.
    pub first_hit_normal: Vec3,
    /// Cosine of the incidence angle at the first hit.
    pub first_incidence_cos: f64,
    /// Point where the ray met the pattern plane; NaN components otherwise.
    pub background_point: Vec3,
    /// Pattern coordinate (u, v) of the background point.
    pub background_pattern_coord: [f64; 2],
    /// Fresnel transmittance product along the path.
    pub transmittance: f64,
}

impl RayOutcome {
    fn no_background(status: RayStatus) -> Self {
        Self {
            status,
            first_hit_depth: f64::NAN,
            first_hit_normal: Vec3::new(f64::NAN, f64::NAN, f64::NAN),
            first_incidence_cos: f64::NAN,
            background_point: Vec3::new(f64::NAN, f64::NAN, f64::NAN),
            background_pattern_coord: [f64::NAN, f64::NAN],
            transmittance: 0.0,
        }
    }

    /// True when the first thing the ray met was an object surface.
    pub fn hits_object(&self) -> bool {
        self.first_hit_depth.is_finite()
    }
}

/// Trace the full refracted path of one pixel's viewing ray.
pub fn trace_pixel(scene: &Scene, pixel: [f64; 2]) -> Result<RayOutcome> {
    let cam = &scene.camera;
    if pixel[0] < 0.0
        || pixel[1] < 0.0
        || pixel[0] > (cam.width - 1) as f64
        || pixel[1] > (cam.height - 1) as f64
    {
        return Err(Error::Domain(format!("pixel {pixel:?} outside image bounds")));
    }
    Ok(trace_ray(scene, Vec3::zeros(), cam.pixel_ray(pixel)))
}

fn trace_ray(scene: &Scene, mut origin: Vec3, mut dir: Vec3) -> RayOutcome {
    let h = scene.plane.distance_m;
    let mut out = RayOutcome::no_background(RayStatus::Miss);
    let mut transmittance = 1.0;
    let mut interfaces = 0usize;

    loop {
        let mut hit: Option<(SurfaceHit, f64)> = None;
        for obj in &scene.objects {
            if let Some(s) = obj.intersect(origin, dir, T_EPS) {
                if hit.as_ref().is_none_or(|(b, _)| s.t < b.t) {
                    hit = Some((s, obj.ior));
                }
            }
        }
        let plane_t = if dir.z > 0.0 { (h - origin.z) / dir.z } else { f64::INFINITY };

        match hit {
            Some((s, obj_ior)) if s.t < plane_t => {
                // media on either side follow from the crossing direction
                let going_in = dir.dot(&s.outward_normal) < 0.0;
                let (from, to) = if going_in { (s.outside, s.inside) } else { (s.inside, s.outside) };
                let facing_normal = if going_in { s.outward_normal } else { -s.outward_normal };
                let idx = |m: Medium| if m == Medium::Air { 1.0 } else { obj_ior };
                let (n1, n2) = (idx(from), idx(to));

                if !out.hits_object() {
                    out.first_hit_depth = s.point.z;
                    out.first_hit_normal = facing_normal;
                    out.first_incidence_cos = -dir.dot(&facing_normal);
                }

                match refract_dir(dir, facing_normal, n1 / n2)
                    .expect("tracer maintains unit vectors and orientation")
                {
                    Refraction::TotalInternal => {
                        out.status = RayStatus::TirLost;
                        out.transmittance = 0.0;
                        return out;
                    }
                    Refraction::Transmit(t) => {
                        let cos1 = -dir.dot(&facing_normal);
                        let cos2 = (-t.dot(&facing_normal)).clamp(0.0, 1.0);
                        transmittance *= 1.0 - fresnel_reflectance(cos1, cos2, n1, n2);
                        origin = s.point;
                        dir = t;
                    }
                }
                interfaces += 1;
                if interfaces >= MAX_INTERFACES {
                    out.status = RayStatus::Miss;
                    return out;
                }
            }
            _ => {
                if plane_t.is_finite() {
                    let p = origin + dir * plane_t;
                    out.status = if interfaces == 0 {
                        RayStatus::BackgroundDirect
                    } else {
                        RayStatus::BackgroundRefracted
                    };
                    out.background_point = p;
                    out.background_pattern_coord = scene.pattern_coord(p);
                    out.transmittance = transmittance;
                } else {
                    out.status = RayStatus::Miss;
                    out.transmittance = 0.0;
                }
                return out;
            }
        }
    }
}

/// Aligned ground-truth channels for one rendering.
#[derive(Debug, Clone)]
pub struct GeoChannels {
    /// First-hit z-depth; plane depth where no object is seen.
    pub gt_depth: Grid2,
    /// Camera-facing unit normals; plane normal outside the mask.
    pub gt_normal: Grid2,
    pub mask: Mask,
    pub boundary: Mask,
    pub gt_flow: FlowField,
    /// Depth as an RGB-D sensor would report it (Type I/II errors applied).
    pub sensor_depth: Grid2,
}

/// Deterministic per-pixel RNG: same (seed, x, y) -> same stream.
pub fn pixel_rng(seed: u64, x: u32, y: u32) -> ChaCha8Rng {
    let mut z = seed ^ (u64::from(x) << 32) ^ u64::from(y) ^ 0x9e37_79b9_7f4a_7c15;
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Depth value an RGB-D sensor would report for a traced pixel.
///
/// Refracted returns report the z-depth of the traced background point
/// (Type II). Masked pixels past the grazing angle drop out with
/// probability `p_fail`, and TIR pixels always do (Type I). Unmasked pixels
/// report the plane depth plus Gaussian noise.
pub fn sensor_model(
    outcome: &RayOutcome,
    params: &SensorParams,
    plane_depth: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    if outcome.hits_object() {
        match outcome.status {
            RayStatus::BackgroundRefracted => {
                let grazing = outcome.first_incidence_cos < params.grazing_deg.to_radians().cos();
                if grazing && rng.random::<f64>() < params.p_fail {
                    f64::NAN
                } else {
                    outcome.background_point.z
                }
            }
            // no return at all
            _ => f64::NAN,
        }
    } else {
        match outcome.status {
            RayStatus::BackgroundDirect => {
                // Box-Muller; draws two uniforms to stay stream-deterministic
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random::<f64>();
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                plane_depth + params.noise_sigma_m * z
            }
            _ => f64::NAN,
        }
    }
}

/// Trace every pixel of the scene (row-major order).
pub fn trace_all(scene: &Scene) -> Vec<RayOutcome> {
    let cam = &scene.camera;
    let (w, h) = (cam.width, cam.height);
    let mut rows: Vec<Vec<RayOutcome>> = Vec::new();
    (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| trace_ray(scene, Vec3::zeros(), cam.pixel_ray([x as f64, y as f64])))
                .collect::<Vec<_>>()
        })
        .collect_into_vec(&mut rows);
    rows.into_iter().flatten().collect()
}

/// Render all ground-truth channels plus simulated sensor depth.
pub fn render_channels(scene: &Scene) -> Result<GeoChannels> {
    scene.validate()?;
    let outcomes = trace_all(scene);
    channels_from_outcomes(scene, &outcomes)
}

/// Build channels from precomputed outcomes (shared with capture rendering).
pub fn channels_from_outcomes(scene: &Scene, outcomes: &[RayOutcome]) -> Result<GeoChannels> {
    let cam = &scene.camera;
    let (w, h) = (cam.width, cam.height);
    let plane_h = scene.plane.distance_m;

    let mut gt_depth = Grid2::zeros(w, h, 1)?;
    let mut gt_normal = Grid2::zeros(w, h, 3)?;
    let mut mask = Mask::zeros(w, h)?;
    let mut flow = FlowField::nans(w, h);
    let mut sensor = Grid2::zeros(w, h, 1)?;

    for y in 0..h {
        for x in 0..w {
            let o = &outcomes[y * w + x];
            let masked = o.hits_object();
            mask.set(x, y, masked);
            gt_depth.set(x, y, 0, if masked { o.first_hit_depth as f32 } else { plane_h as f32 });
            let n = if masked { o.first_hit_normal } else { Vec3::new(0.0, 0.0, -1.0) };
            gt_normal.set(x, y, 0, n.x as f32);
            gt_normal.set(x, y, 1, n.y as f32);
            gt_normal.set(x, y, 2, n.z as f32);
            if masked && o.status == RayStatus::BackgroundRefracted {
                let c = cam.project(o.background_point)?;
                flow.set(x, y, [(c[0] - x as f64) as f32, (c[1] - y as f64) as f32]);
            }
            let mut rng = pixel_rng(scene.seed, x as u32, y as u32);
            sensor.set(x, y, 0, sensor_model(o, &scene.sensor, plane_h, &mut rng) as f32);
        }
    }
    let boundary = boundary_from_mask(&mask)?;
    Ok(GeoChannels { gt_depth, gt_normal, mask, boundary, gt_flow: flow, sensor_depth: sensor })
}

/// Morphological gradient of a binary mask: dilate(1) minus erode(1),
/// 8-connected, image border treated as background.
pub fn boundary_from_mask(mask: &Mask) -> Result<Mask> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Mask::zeros(w, h)?;
    for y in 0..h {
        for x in 0..w {
            let mut any = false;
            let mut all = true;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    let v = if mask.grid().in_bounds(nx, ny) {
                        mask.is_set(nx as usize, ny as usize)
                    } else {
                        false
                    };
                    any |= v;
                    all &= v;
                }
            }
            out.set(x, y, any && !all);
        }
    }
    Ok(out)
}

/// Render the captured image of one displayed pattern frame, given traced
/// outcomes. Radiance is the displayed cell value times the Fresnel
/// transmittance along the path; rays that never reach the plane see black.
fn capture_frame(scene: &Scene, outcomes: &[RayOutcome], displayed: &Grid2) -> Result<Grid2> {
    let cam = &scene.camera;
    let (w, h) = (cam.width, cam.height);
    let mut img = Grid2::zeros(w, h, 1)?;
    for y in 0..h {
        for x in 0..w {
            let o = &outcomes[y * w + x];
            let v = match o.status {
                RayStatus::BackgroundDirect | RayStatus::BackgroundRefracted => {
                    let [u, vv] = o.background_pattern_coord;
                    if u >= 0.0
                        && vv >= 0.0
                        && (u as usize) < displayed.width()
                        && (vv as usize) < displayed.height()
                    {
                        o.transmittance as f32 * displayed.get(u as usize, vv as usize, 0)
                    } else {
                        0.0
                    }
                }
                _ => 0.0,
            };
            img.set(x, y, 0, v);
        }
    }
    Ok(img)
}

/// Render the full captured stack for a scene: one image per displayed
/// pattern frame. The path is traced once and reused across frames.
pub fn render_capture(scene: &Scene, stack: &PatternStack) -> Result<Vec<Grid2>> {
    scene.validate()?;
    if stack.meta != scene.plane.pattern {
        return Err(Error::Shape(format!(
            "pattern stack {:?} does not match scene plane {:?}",
            stack.meta, scene.plane.pattern
        )));
    }
    let outcomes = trace_all(scene);
    stack
        .frames
        .iter()
        .map(|f| capture_frame(scene, &outcomes, f))
        .collect()
}

/// Trace outcomes and captured stack together (avoids re-tracing when both
/// ground truth and captures are needed).
pub fn render_all(scene: &Scene, stack: &PatternStack) -> Result<(GeoChannels, Vec<Grid2>)> {
    scene.validate()?;
    if stack.meta != scene.plane.pattern {
        return Err(Error::Shape("pattern stack does not match scene plane".into()));
    }
    let outcomes = trace_all(scene);
    let channels = channels_from_outcomes(scene, &outcomes)?;
    let frames: Result<Vec<Grid2>> = stack
        .frames
        .iter()
        .map(|f| capture_frame(scene, &outcomes, f))
        .collect();
    Ok((channels, frames?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::RigidTransform;
    use approx::assert_relative_eq;

    fn at(z: f64) -> RigidTransform {
        RigidTransform::new(nalgebra::Matrix3::identity(), Vec3::new(0.0, 0.0, z))
    }

    fn empty_scene() -> Scene {
        Scene {
            camera: Camera::default_256(),
            plane: PatternPlane::default_at(0.8),
            objects: vec![],
            sensor: SensorParams::default(),
            seed: 7,
        }
    }

    #[test]
    fn empty_scene_is_background_direct() {
        let scene = empty_scene();
        let o = trace_pixel(&scene, [127.5, 127.5]).unwrap();
        assert_eq!(o.status, RayStatus::BackgroundDirect);
        // principal ray meets the plane on the axis: pattern center + phase
        let [u, v] = o.background_pattern_coord;
        assert_relative_eq!(u, 512.0, epsilon = 1e-9);
        assert_relative_eq!(v, 512.0, epsilon = 1e-9);
        assert!((o.background_point.z - 0.8).abs() < 1e-12);
        // direct pinhole-plane intersection for an off-center pixel
        let o2 = trace_pixel(&scene, [200.0, 64.0]).unwrap();
        let expect = scene.camera.pixel_ray([200.0, 64.0]) * (0.8 / scene.camera.pixel_ray([200.0, 64.0]).z);
        assert!((o2.background_point - expect).norm() < 1e-12);
    }

    #[test]
    fn pixel_outside_bounds_is_domain_error() {
        let scene = empty_scene();
        assert!(trace_pixel(&scene, [-1.0, 0.0]).is_err());
        assert!(trace_pixel(&scene, [0.0, 256.0]).is_err());
    }

    #[test]
    fn perpendicular_slab_gives_zero_center_flow() {
        let mut scene = empty_scene();
        scene.objects.push(TransparentObject {
            shape: ShapeSpec::Slab { thickness: 0.005, extent: 0.1 },
            pose: at(0.5),
            ior: 1.5,
        });
        let o = trace_pixel(&scene, [127.5, 127.5]).unwrap();
        assert_eq!(o.status, RayStatus::BackgroundRefracted);
        let c = scene.camera.project(o.background_point).unwrap();
        assert!((c[0] - 127.5).abs() < 1e-9 && (c[1] - 127.5).abs() < 1e-9);
    }

    #[test]
    fn tilted_slab_matches_closed_form_displacement() {
        // 20 degree tilt, 5 mm glass, ior 1.5
        let tilt = 20f64.to_radians();
        let mut scene = empty_scene();
        scene.objects.push(TransparentObject {
            shape: ShapeSpec::Slab { thickness: 0.005, extent: 0.2 },
            pose: RigidTransform::rot_x(tilt, Vec3::new(0.0, 0.0, 0.5)),
            ior: 1.5,
        });
        let o = trace_pixel(&scene, [127.5, 127.5]).unwrap();
        assert_eq!(o.status, RayStatus::BackgroundRefracted);
        // lateral displacement of the background point vs the straight ray
        let straight = Vec3::new(0.0, 0.0, 0.8);
        let d = o.background_point - straight;
        let got = (d.x * d.x + d.y * d.y).sqrt();
        let th1 = tilt;
        let th2 = (th1.sin() / 1.5).asin();
        let expect = 0.005 * (th1 - th2).sin() / th2.cos();
        assert!((got - expect).abs() < 1e-6, "got {got}, closed form {expect}");
    }

    #[test]
    fn slab_reciprocity_keeps_direction() {
        let tilt = 25f64.to_radians();
        let mut scene = empty_scene();
        scene.objects.push(TransparentObject {
            shape: ShapeSpec::Slab { thickness: 0.01, extent: 0.2 },
            pose: RigidTransform::rot_x(tilt, Vec3::new(0.0, 0.0, 0.5)),
            ior: 1.5,
        });
        for px in [[127.5, 127.5], [80.0, 190.0], [30.0, 40.0]] {
            let o = trace_pixel(&scene, px).unwrap();
            if o.status != RayStatus::BackgroundRefracted {
                continue;
            }
            // exit direction equals the entry direction: background point lies
            // on a line parallel to the view ray through the exit point; check
            // via the angle between (A - straight-plane-hit) being pure shift:
            // trace two nearby pixels and compare displacement vectors
            let v = scene.camera.pixel_ray(px);
            let straight = v * (0.8 / v.z);
            let shift = o.background_point - straight;
            // a parallel-shifted ray keeps z displacement zero
            assert!(shift.z.abs() < 1e-9, "direction changed through the slab");
        }
    }

    #[test]
    fn centered_sphere_flow_is_radially_symmetric() {
        let mut scene = empty_scene();
        scene.objects.push(TransparentObject {
            shape: ShapeSpec::SolidSphere { radius: 0.04 },
            pose: at(0.76),
            ior: 1.5,
        });
        let channels = render_channels(&scene).unwrap();
        let flow = &channels.gt_flow;
        let (w, h) = (flow.width(), flow.height());
        // flow vanishes below decode quantization at the normal-incidence pole
        for (px, py) in [(127usize, 127usize), (128, 127), (127, 128), (128, 128)] {
            let f = flow.get(px, py);
            assert!((f[0] as f64).hypot(f[1] as f64) < 0.5, "pole flow {f:?}");
        }
        for y in 100..128 {
            for x in 100..128 {
                if !flow.is_finite(x, y) {
                    continue;
                }
                let (mx, my) = (w - 1 - x, h - 1 - y);
                if !flow.is_finite(mx, my) {
                    continue;
                }
                let f = flow.get(x, y);
                let g = flow.get(mx, my);
                assert!(
                    (f[0] + g[0]).abs() < 1e-6 && (f[1] + g[1]).abs() < 1e-6,
                    "mirror asymmetry at ({x},{y}): {f:?} vs {g:?}"
                );
                // flow points along the radial direction about the center
                let rx = x as f64 - 127.5;
                let ry = y as f64 - 127.5;
                let cross = rx * f[1] as f64 - ry * f[0] as f64;
                let mag = ((f[0] as f64).hypot(f[1] as f64)) * (rx.hypot(ry));
                if mag > 1e-9 {
                    assert!((cross / mag).abs() < 1e-6, "flow not radial at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn empty_scene_channels() {
        let scene = empty_scene();
        let ch = render_channels(&scene).unwrap();
        assert_eq!(ch.mask.count(), 0);
        for y in 0..ch.gt_depth.height() {
            for x in 0..ch.gt_depth.width() {
                assert_eq!(ch.gt_depth.get(x, y, 0), 0.8);
                assert!(!ch.gt_flow.is_finite(x, y));
            }
        }
    }

    #[test]
    fn type_ii_sensor_reports_background_depth() {
        let mut scene = empty_scene();
        scene.objects.push(TransparentObject {
            shape: ShapeSpec::SphereShell { outer_r: 0.05, thickness: 0.008 },
            pose: at(0.74),
            ior: 1.5,
        });
        let ch = render_channels(&scene).unwrap();
        let o = trace_pixel(&scene, [127.5, 127.5]).unwrap();
        assert_eq!(o.status, RayStatus::BackgroundRefracted);
        // gt depth is the first surface, sensor reports the plane depth
        let gt = ch.gt_depth.get(127, 127, 0); // pixel (127,127) is close to center
        assert!(gt < 0.74);
        let mut rng = pixel_rng(scene.seed, 127, 127);
        let o127 = trace_pixel(&scene, [127.0, 127.0]).unwrap();
        let s = sensor_model(&o127, &scene.sensor, 0.8, &mut rng);
        assert!((s - o127.background_point.z).abs() < 1e-12);
        assert!(s > gt as f64);
    }

    #[test]
    fn grazing_dropout_fraction_matches_p_fail() {
        // solid sphere: grazing rays still transmit (the exit angle equals
        // the entry angle), unlike shells where the inner wall TIRs them
        let mut scene = empty_scene();
        scene.objects.push(TransparentObject {
            shape: ShapeSpec::SolidSphere { radius: 0.06 },
            pose: at(0.72),
            ior: 1.5,
        });
        let grazing_cos = scene.sensor.grazing_deg.to_radians().cos();
        let mut candidates = 0usize;
        let mut dropped = 0usize;
        for seed in 0..10u64 {
            scene.seed = seed;
            let outcomes = trace_all(&scene);
            for (i, o) in outcomes.iter().enumerate() {
                if o.status != RayStatus::BackgroundRefracted || !o.hits_object() {
                    continue;
                }
                if o.first_incidence_cos >= grazing_cos {
                    continue;
                }
                let (x, y) = ((i % 256) as u32, (i / 256) as u32);
                let mut rng = pixel_rng(seed, x, y);
                let s = sensor_model(o, &scene.sensor, 0.8, &mut rng);
                candidates += 1;
                if s.is_nan() {
                    dropped += 1;
                }
            }
        }
        assert!(candidates > 200, "test scene too small: {candidates}");
        let p = scene.sensor.p_fail;
        let sigma = (candidates as f64 * p * (1.0 - p)).sqrt();
        let expect = candidates as f64 * p;
        assert!(
            ((dropped as f64) - expect).abs() <= 3.0 * sigma,
            "dropped {dropped} of {candidates}, expected {expect} +- {sigma}"
        );
    }

    #[test]
    fn boundary_examples() {
        let empty = Mask::zeros(8, 8).unwrap();
        assert_eq!(boundary_from_mask(&empty).unwrap().count(), 0);
        let mut single = Mask::zeros(8, 8).unwrap();
        single.set(4, 4, true);
        // dilation is the 3x3 block, erosion is empty: 9 boundary pixels
        assert_eq!(boundary_from_mask(&single).unwrap().count(), 9);
    }

    #[test]
    fn boundary_of_disk_is_thin_annulus() {
        let (w, h) = (64, 64);
        let mut mask = Mask::zeros(w, h).unwrap();
        let r = 20.0f64;
        for y in 0..h {
            for x in 0..w {
                if ((x as f64 - 31.5).powi(2) + (y as f64 - 31.5).powi(2)).sqrt() <= r {
                    mask.set(x, y, true);
                }
            }
        }
        let boundary = boundary_from_mask(&mask).unwrap();
        for y in 0..h {
            for x in 0..w {
                if boundary.is_set(x, y) {
                    let d = ((x as f64 - 31.5).powi(2) + (y as f64 - 31.5).powi(2)).sqrt();
                    assert!((d - r).abs() <= 2.0, "boundary pixel ({x},{y}) at radius {d}");
                }
            }
        }
        // the annulus contains the ideal circle: every angle is covered
        for k in 0..360 {
            let th = (k as f64).to_radians();
            let x = (31.5 + r * th.cos()).round() as usize;
            let y = (31.5 + r * th.sin()).round() as usize;
            let mut near = false;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if boundary.grid().in_bounds(nx, ny) && boundary.is_set(nx as usize, ny as usize) {
                        near = true;
                    }
                }
            }
            assert!(near, "no boundary pixel near angle {k}");
        }
    }

    #[test]
    fn rendering_is_deterministic_across_thread_counts() {
        let mut scene = empty_scene();
        scene.objects.push(TransparentObject {
            shape: ShapeSpec::SolidSphere { radius: 0.035 },
            pose: at(0.75),
            ior: 1.5,
        });
        let render = || {
            let ch = render_channels(&scene).unwrap();
            let mut bytes = Vec::new();
            for v in ch.sensor_depth.data() {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            for v in ch.gt_flow.grid().data() {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            bytes
        };
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(render);
        let b = pool4.install(render);
        let c = render();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn refracted_rays_satisfy_snell_and_coplanarity() {
        // spot check through the tracer: shell scene, many pixels
        let mut scene = empty_scene();
        scene.objects.push(TransparentObject {
            shape: ShapeSpec::SphereShell { outer_r: 0.05, thickness: 0.01 },
            pose: at(0.74),
            ior: 1.5,
        });
        let mut checked = 0;
        for y in (90..166).step_by(4) {
            for x in (90..166).step_by(4) {
                let px = [x as f64, y as f64];
                let o = trace_pixel(&scene, px).unwrap();
                if !o.hits_object() {
                    continue;
                }
                let d = scene.camera.pixel_ray(px);
                let n = o.first_hit_normal;
                match refract_dir(d, n, 1.0 / 1.5).unwrap() {
                    Refraction::Transmit(t) => {
                        let sin1 = d.cross(&n).norm();
                        let sin2 = t.cross(&n).norm();
                        assert!((sin2 - sin1 / 1.5).abs() < 1e-12);
                        assert!(d.cross(&n).dot(&t).abs() < 1e-12);
                        checked += 1;
                    }
                    Refraction::TotalInternal => {}
                }
            }
        }
        assert!(checked > 50);
    }
}
