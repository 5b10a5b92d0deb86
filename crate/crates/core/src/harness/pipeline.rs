//! End-to-end pipeline: decode -> normals -> refine -> cloud -> grasp,
//! with metrics against the sample's ground truth.
//!
//! Every stage writes its output into the run directory before the next
//! stage starts, so a failed run keeps its partial artifacts and any suffix
//! of the pipeline can be re-run from saved intermediates. Metrics rows are
//! fully deterministic; wall-clock timings go to a separate report file so
//! the results CSV stays bit-identical across runs.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codec::{decode_stack, flow_from_correspondence, DEFAULT_MIN_CONTRAST};
use crate::error::{Error, Result};
use crate::grasp::{plan_grasp, write_grasps_json, GraspPlan, GripperModel, PlanConfig};
use crate::grid::Grid2;
use crate::harness::dataset::DatasetSample;
use crate::harness::metrics::{angular_error_stats, depth_rmse_m, flow_rmse, NormalMetrics};
use crate::normals::{normal_map_from_flow, InversionParams, NormalMap};
use crate::refine::{depth_to_pointcloud, refine_depth, EnergyWeights};

/// Pipeline parameters. Optional fields fall back to scene-derived values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Refractive index for the inversion; default: mean over scene objects.
    pub ior: Option<f64>,
    /// Surface-depth prior d0; default: shallowest object front depth from
    /// the scene descriptor.
    pub d0: Option<f64>,
    pub min_contrast: f32,
    pub weights: EnergyWeights,
    pub gripper: GripperModel,
    pub grasp: PlanConfig,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            ior: None,
            d0: None,
            min_contrast: DEFAULT_MIN_CONTRAST,
            weights: EnergyWeights::default(),
            gripper: GripperModel::default(),
            grasp: PlanConfig::default(),
        }
    }
}

/// Deterministic per-sample result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sample_id: usize,
    pub seed: u64,
    pub n_objects: usize,
    pub flow_rmse_px: f64,
    pub mean_deg: f64,
    pub median_deg: f64,
    pub pct11: f64,
    pub pct22: f64,
    pub pct30: f64,
    pub depth_rmse_mm: f64,
    /// Energy of the best grasp; NaN when no grasp was found.
    pub best_grasp_energy: f64,
}

pub const RESULTS_HEADER: &str =
    "sample_id,seed,n_objects,flow_rmse_px,mean_deg,median_deg,pct11,pct22,pct30,depth_rmse_mm,best_grasp_energy";

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.sample_id,
            self.seed,
            self.n_objects,
            self.flow_rmse_px,
            self.mean_deg,
            self.median_deg,
            self.pct11,
            self.pct22,
            self.pct30,
            self.depth_rmse_mm,
            self.best_grasp_energy
        )
    }
}

/// Wall-clock milliseconds per stage (informational; not deterministic).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTimings {
    pub stages: Vec<(String, f64)>,
}

/// Full report of one pipeline run.
#[derive(Debug)]
pub struct PipelineReport {
    pub row: ResultRow,
    pub timings: StageTimings,
    pub normal_metrics: NormalMetrics,
    pub plan: GraspPlan,
}

fn scene_front_depth(scene: &crate::render::Scene) -> f64 {
    scene
        .objects
        .iter()
        .map(|o| o.pose.translation[2] - o.vertical_support())
        .fold(f64::INFINITY, f64::min)
}

fn scene_mean_ior(scene: &crate::render::Scene) -> f64 {
    if scene.objects.is_empty() {
        return 1.5;
    }
    scene.objects.iter().map(|o| o.ior).sum::<f64>() / scene.objects.len() as f64
}

/// Run the full pipeline on one sample directory.
///
/// `reference` is the no-object capture stack (shared per dataset);
/// artifacts land in `out_dir`.
pub fn run_pipeline(
    sample_dir: &Path,
    reference: &[Grid2],
    out_dir: &Path,
    sample_id: usize,
    params: &PipelineParams,
) -> Result<PipelineReport> {
    std::fs::create_dir_all(out_dir)?;
    let mut timings = Vec::new();
    let clock = Instant::now;

    // load
    let t0 = clock();
    let sample = DatasetSample::read(sample_dir).map_err(|e| e.in_stage("load-sample"))?;
    let scene = &sample.scene;
    let camera = &scene.camera;
    timings.push(("load".to_string(), t0.elapsed().as_secs_f64() * 1e3));

    // decode both stacks and match into flow
    let t0 = clock();
    let meta = &scene.plane.pattern;
    let m_obj = decode_stack(&sample.capture, meta, params.min_contrast)
        .map_err(|e| e.in_stage("decode-flow"))?;
    let m_ref =
        decode_stack(reference, meta, params.min_contrast).map_err(|e| e.in_stage("decode-flow"))?;
    let flow = flow_from_correspondence(&m_obj, &m_ref, &sample.mask)
        .map_err(|e| e.in_stage("decode-flow"))?;
    let any_flow = (0..flow.height()).any(|y| (0..flow.width()).any(|x| flow.is_finite(x, y)));
    if !any_flow {
        return Err(Error::Empty("no decodable flow pixels inside the mask".into())
            .in_stage("decode-flow"));
    }
    flow.write(&out_dir.join("flow.rfg")).map_err(|e| e.in_stage("decode-flow"))?;
    flow.grid().write_png(&out_dir.join("flow.png")).ok();
    timings.push(("decode-flow".to_string(), t0.elapsed().as_secs_f64() * 1e3));

    // flow -> normals
    let t0 = clock();
    let h = scene.plane.distance_m;
    let d0 = params.d0.unwrap_or_else(|| {
        let front = scene_front_depth(scene);
        if front.is_finite() {
            front.clamp(1e-4, h - 1e-4)
        } else {
            0.7 * h
        }
    });
    let inv_params = InversionParams::new(params.ior.unwrap_or_else(|| scene_mean_ior(scene)), h, d0)
        .map_err(|e| e.in_stage("flow2normal"))?;
    let (normal_map, _stats) = normal_map_from_flow(&flow, &sample.mask, camera, &inv_params)
        .map_err(|e| e.in_stage("flow2normal"))?;
    normal_map.write(&out_dir.join("normal.rfg")).map_err(|e| e.in_stage("flow2normal"))?;
    normal_map
        .grid()
        .write_png_fixed_range(&out_dir.join("normal.png"), -1.0, 1.0)
        .ok();
    timings.push(("flow2normal".to_string(), t0.elapsed().as_secs_f64() * 1e3));

    // depth refinement
    let t0 = clock();
    let (refined, _cg) = refine_depth(
        &sample.sensor_depth,
        &sample.mask,
        &sample.boundary,
        &normal_map,
        camera,
        &params.weights,
    )
    .map_err(|e| e.in_stage("refine-depth"))?;
    refined.write(&out_dir.join("refined.rfg")).map_err(|e| e.in_stage("refine-depth"))?;
    refined.write_png(&out_dir.join("refined.png")).ok();
    timings.push(("refine-depth".to_string(), t0.elapsed().as_secs_f64() * 1e3));

    // point cloud
    let t0 = clock();
    let cloud = depth_to_pointcloud(&refined, &normal_map, &sample.mask, camera)
        .map_err(|e| e.in_stage("pointcloud"))?;
    cloud.write_ascii(&out_dir.join("cloud.txt")).map_err(|e| e.in_stage("pointcloud"))?;
    timings.push(("pointcloud".to_string(), t0.elapsed().as_secs_f64() * 1e3));

    // grasp planning
    let t0 = clock();
    let plan = plan_grasp(&cloud, &params.gripper, &params.grasp).map_err(|e| e.in_stage("plan-grasp"))?;
    write_grasps_json(&plan, &out_dir.join("grasps.json")).map_err(|e| e.in_stage("plan-grasp"))?;
    timings.push(("plan-grasp".to_string(), t0.elapsed().as_secs_f64() * 1e3));

    // metrics against ground truth
    let t0 = clock();
    let gt_normals = NormalMap::new(sample.gt_normal.clone()).map_err(|e| e.in_stage("metrics"))?;
    let nm = angular_error_stats(&normal_map, &gt_normals, &sample.mask)
        .map_err(|e| e.in_stage("metrics"))?;
    let f_rmse =
        flow_rmse(&flow, &sample.gt_flow, &sample.mask).map_err(|e| e.in_stage("metrics"))?;
    let d_rmse =
        depth_rmse_m(&refined, &sample.gt_depth, &sample.mask).map_err(|e| e.in_stage("metrics"))?;
    timings.push(("metrics".to_string(), t0.elapsed().as_secs_f64() * 1e3));

    let row = ResultRow {
        sample_id,
        seed: scene.seed,
        n_objects: scene.objects.len(),
        flow_rmse_px: f_rmse,
        mean_deg: nm.mean_deg,
        median_deg: nm.median_deg,
        pct11: nm.pct_11_25,
        pct22: nm.pct_22_5,
        pct30: nm.pct_30,
        depth_rmse_mm: d_rmse * 1e3,
        best_grasp_energy: plan.best().map_or(f64::NAN, |c| c.energy),
    };

    std::fs::write(
        out_dir.join("results.csv"),
        format!("{RESULTS_HEADER}\n{}\n", row.to_csv()),
    )?;
    let mut timing_csv = String::from("stage,wall_ms\n");
    for (name, ms) in &timings {
        timing_csv.push_str(&format!("{name},{ms}\n"));
    }
    std::fs::write(out_dir.join("timing.csv"), timing_csv)?;

    Ok(PipelineReport {
        row,
        timings: StageTimings { stages: timings },
        normal_metrics: nm,
        plan,
    })
}
