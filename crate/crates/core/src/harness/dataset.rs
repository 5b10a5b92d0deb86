//! Synthetic dataset generation.
//!
//! Every sample is a scene of 1-5 transparent objects resting on the pattern
//! plane, rendered into ground-truth channels plus a full gray-code capture
//! stack. Poses are rejection-sampled for pairwise non-penetration (bounding
//! spheres) and table contact (lowest point on the plane within 1 mm).
//! Sampling is keyed by a per-sample seed derived from the dataset seed, so
//! generation is reproducible sample by sample.

use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::codec::FlowField;
use crate::error::{Error, Result};
use crate::geom::{RigidTransform, Vec3};
use crate::graycode::{gen_patterns, read_stack, write_stack, PatternStack};
use crate::grid::{Grid2, Mask};
use crate::render::{
    render_all, GeoChannels, PatternPlane, Scene, SensorParams, ShapeSpec, TransparentObject,
};

/// Shape family with parameter ranges for random sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyConfig {
    SolidSphere { radius: [f64; 2] },
    SphereShell { outer_r: [f64; 2], thickness: [f64; 2] },
    CylinderShell { r: [f64; 2], thickness: [f64; 2], height: [f64; 2] },
    Slab { thickness: [f64; 2], extent: [f64; 2], tilt_deg: [f64; 2] },
}

/// Dataset generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub camera: Camera,
    pub plane: PatternPlane,
    pub sensor: SensorParams,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Objects are placed with |x|, |y| below this lateral bound, meters.
    pub lateral_extent_m: f64,
    pub ior_range: [f64; 2],
    pub families: Vec<FamilyConfig>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            camera: Camera::default_256(),
            plane: PatternPlane::default_at(0.8),
            sensor: SensorParams::default(),
            min_objects: 1,
            max_objects: 5,
            lateral_extent_m: 0.12,
            ior_range: [1.45, 1.55],
            families: vec![
                FamilyConfig::SolidSphere { radius: [0.02, 0.035] },
                FamilyConfig::SphereShell { outer_r: [0.03, 0.05], thickness: [0.004, 0.008] },
                FamilyConfig::CylinderShell {
                    r: [0.025, 0.04],
                    thickness: [0.003, 0.006],
                    height: [0.06, 0.1],
                },
                FamilyConfig::Slab { thickness: [0.01, 0.03], extent: [0.05, 0.09], tilt_deg: [0.0, 15.0] },
            ],
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(Error::Config("need 1 <= min_objects <= max_objects".into()));
        }
        if self.families.is_empty() {
            return Err(Error::Config("at least one shape family required".into()));
        }
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let c: GenConfig = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        c.validate()?;
        Ok(c)
    }
}

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
/// Contact slack: lowest point within this distance of the plane.
const CONTACT_TOL_M: f64 = 1e-3;

fn uniform_in(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    range[0] + (range[1] - range[0]) * rng.random::<f64>()
}

/// Sample one resting object of the given family.
fn sample_object(
    family: &FamilyConfig,
    config: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> TransparentObject {
    let h = config.plane.distance_m;
    let (shape, rotation) = match *family {
        FamilyConfig::SolidSphere { radius } => (
            ShapeSpec::SolidSphere { radius: uniform_in(rng, radius) },
            Matrix3::identity(),
        ),
        FamilyConfig::SphereShell { outer_r, thickness } => {
            let r = uniform_in(rng, outer_r);
            let t = uniform_in(rng, thickness).min(0.8 * r);
            (ShapeSpec::SphereShell { outer_r: r, thickness: t }, Matrix3::identity())
        }
        FamilyConfig::CylinderShell { r, thickness, height } => {
            let rr = uniform_in(rng, r);
            (
                ShapeSpec::CylinderShell {
                    r: rr,
                    thickness: uniform_in(rng, thickness).min(0.8 * rr),
                    height: uniform_in(rng, height),
                },
                Matrix3::identity(), // upright: axis along camera z
            )
        }
        FamilyConfig::Slab { thickness, extent, tilt_deg } => {
            let tilt = uniform_in(rng, tilt_deg).to_radians();
            let azim = rng.random::<f64>() * std::f64::consts::TAU;
            let axis = Vec3::new(azim.cos(), azim.sin(), 0.0);
            let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), tilt)
                .matrix()
                .to_owned();
            (
                ShapeSpec::Slab {
                    thickness: uniform_in(rng, thickness),
                    extent: uniform_in(rng, extent),
                },
                rot,
            )
        }
    };
    let lateral = config.lateral_extent_m;
    let x = (rng.random::<f64>() * 2.0 - 1.0) * lateral;
    let y = (rng.random::<f64>() * 2.0 - 1.0) * lateral;
    let mut obj = TransparentObject {
        shape,
        pose: RigidTransform::new(rotation, Vec3::new(x, y, 0.0)),
        ior: uniform_in(rng, config.ior_range),
    };
    // rest on the plane: lowest point touches z = h (within contact slack)
    let support = obj.vertical_support();
    let gap = rng.random::<f64>() * CONTACT_TOL_M * 0.5;
    obj.pose.translation[2] = h - support - gap;
    obj
}

fn bounding_overlap(a: &TransparentObject, b: &TransparentObject) -> bool {
    let d = (a.pose.translation_vector() - b.pose.translation_vector()).norm();
    d < a.shape.bounding_radius() + b.shape.bounding_radius()
}

/// Rejection-sample a full scene.
pub fn gen_scene(config: &GenConfig, seed: u64, scene_index: usize) -> Result<Scene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_objects = rng.random_range(config.min_objects..=config.max_objects);
    let mut objects: Vec<TransparentObject> = Vec::with_capacity(n_objects);
    let mut attempts = 0usize;
    while objects.len() < n_objects {
        if attempts >= MAX_PLACEMENT_ATTEMPTS {
            return Err(Error::Generation {
                msg: format!("placed {} of {n_objects} objects", objects.len()),
                scene_index,
            });
        }
        attempts += 1;
        let fam = config.families[rng.random_range(0..config.families.len())];
        let obj = sample_object(&fam, config, &mut rng);
        if obj.validate().is_err() {
            continue;
        }
        if objects.iter().any(|o| bounding_overlap(o, &obj)) {
            continue;
        }
        objects.push(obj);
    }
    let scene = Scene {
        camera: config.camera.clone(),
        plane: config.plane.clone(),
        objects,
        sensor: config.sensor,
        seed,
    };
    scene.validate()?;
    Ok(scene)
}

/// Mix a per-sample seed out of the dataset seed and sample index.
pub fn sample_seed(dataset_seed: u64, index: usize) -> u64 {
    let mut z = dataset_seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn sample_dir_name(index: usize) -> String {
    format!("sample_{index:04}")
}

/// Write one rendered sample to disk.
pub fn write_sample(dir: &Path, scene: &Scene, channels: &GeoChannels, capture: &[Grid2]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    scene.write_json(&dir.join("scene.json"))?;
    channels.gt_depth.write(&dir.join("gt_depth.rfg"))?;
    channels.gt_normal.write(&dir.join("gt_normal.rfg"))?;
    channels.mask.write(&dir.join("mask.rfg"))?;
    channels.boundary.write(&dir.join("boundary.rfg"))?;
    channels.gt_flow.write(&dir.join("gt_flow.rfg"))?;
    channels.sensor_depth.write(&dir.join("sensor_depth.rfg"))?;
    write_stack(&dir.join("stack"), &scene.plane.pattern, capture)?;
    Ok(())
}

/// A sample loaded back from disk.
#[derive(Debug, Clone)]
pub struct DatasetSample {
    pub scene: Scene,
    pub gt_depth: Grid2,
    pub gt_normal: Grid2,
    pub mask: Mask,
    pub boundary: Mask,
    pub gt_flow: FlowField,
    pub sensor_depth: Grid2,
    pub capture: Vec<Grid2>,
}

impl DatasetSample {
    pub fn read(dir: &Path) -> Result<Self> {
        let scene = Scene::read_json(&dir.join("scene.json"))?;
        let gt_depth = Grid2::read(&dir.join("gt_depth.rfg"))?;
        let gt_normal = Grid2::read(&dir.join("gt_normal.rfg"))?;
        let mask = Mask::read(&dir.join("mask.rfg"))?;
        let boundary = Mask::read(&dir.join("boundary.rfg"))?;
        let gt_flow = FlowField::new(Grid2::read(&dir.join("gt_flow.rfg"))?)?;
        let sensor_depth = Grid2::read(&dir.join("sensor_depth.rfg"))?;
        let (meta, capture) = read_stack(&dir.join("stack"))?;
        if meta != scene.plane.pattern {
            return Err(Error::Shape("capture stack metadata disagrees with the scene".into()));
        }
        let res_ok = [
            gt_depth.width() == mask.width(),
            gt_normal.width() == mask.width(),
            gt_flow.width() == mask.width(),
            sensor_depth.width() == mask.width(),
        ];
        if res_ok.iter().any(|ok| !ok) {
            return Err(Error::Shape("sample grids disagree on resolution".into()));
        }
        Ok(Self { scene, gt_depth, gt_normal, mask, boundary, gt_flow, sensor_depth, capture })
    }
}

/// Summary row for one generated sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRow {
    pub sample_id: usize,
    pub seed: u64,
    pub n_objects: usize,
    pub dir: String,
}

/// Generate `n_samples` samples under `out_dir`.
///
/// Layout: `reference/` holds the shared no-object capture stack,
/// `sample_XXXX/` one directory per sample, `manifest.csv` the index.
pub fn gen_dataset(config: &GenConfig, n_samples: usize, seed: u64, out_dir: &Path) -> Result<Vec<ManifestRow>> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let patterns = gen_patterns(
        config.plane.pattern.bits,
        config.plane.pattern.pattern_width,
        config.plane.pattern.pattern_height,
    )?;

    // shared reference capture: the same rig with no objects
    let reference_scene = Scene {
        camera: config.camera.clone(),
        plane: config.plane.clone(),
        objects: Vec::new(),
        sensor: config.sensor,
        seed,
    };
    let ref_capture = crate::render::render_capture(&reference_scene, &patterns)?;
    write_stack(&out_dir.join("reference"), &config.plane.pattern, &ref_capture)?;

    let mut rows = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let s = sample_seed(seed, i);
        let scene = gen_scene(config, s, i)?;
        let (channels, capture) = render_all(&scene, &patterns)?;
        let dir_name = sample_dir_name(i);
        write_sample(&out_dir.join(&dir_name), &scene, &channels, &capture)?;
        rows.push(ManifestRow { sample_id: i, seed: s, n_objects: scene.objects.len(), dir: dir_name });
    }

    let mut manifest = String::from("sample_id,seed,n_objects,dir\n");
    for r in &rows {
        manifest.push_str(&format!("{},{},{},{}\n", r.sample_id, r.seed, r.n_objects, r.dir));
    }
    std::fs::write(out_dir.join("manifest.csv"), manifest)?;
    Ok(rows)
}

/// Load the shared reference stack of a dataset directory.
pub fn read_reference_stack(dataset_dir: &Path) -> Result<(PatternStack, Vec<Grid2>)> {
    let (meta, frames) = read_stack(&dataset_dir.join("reference"))?;
    let patterns = gen_patterns(meta.bits, meta.pattern_width, meta.pattern_height)?;
    Ok((patterns, frames))
}

/// Resolve the path of a sample inside a dataset directory.
pub fn sample_path(dataset_dir: &Path, index: usize) -> PathBuf {
    dataset_dir.join(sample_dir_name(index))
}
