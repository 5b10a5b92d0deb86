//! Command-line front end for the transparent-object geometry pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use glassgeom::camera::Camera;
use glassgeom::codec::{decode_stack, flow_from_correspondence, FlowField, DEFAULT_MIN_CONTRAST};
use glassgeom::error::Result;
use glassgeom::grasp::{plan_grasp, write_grasps_json, GripperModel, PlanConfig};
use glassgeom::graycode::{gen_patterns, read_stack, write_stack};
use glassgeom::grid::{Grid2, Mask};
use glassgeom::harness::dataset::{gen_dataset, read_reference_stack, DatasetSample, GenConfig};
use glassgeom::harness::metrics::{angular_error_stats, depth_rmse_m, flow_rmse};
use glassgeom::harness::pipeline::{run_pipeline, PipelineParams, RESULTS_HEADER};
use glassgeom::normals::{normal_map_from_flow, InversionParams, NormalMap};
use glassgeom::refine::{depth_to_pointcloud, refine_depth, EnergyWeights, PointCloudN};
use glassgeom::render::{render_channels, Scene};

#[derive(Parser)]
#[command(name = "glassgeom", version, about = "Refractive-flow geometry and grasping for transparent objects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the gray-code pattern stack (monitor frames + manifest).
    GenPatterns {
        #[arg(long, default_value_t = 10)]
        bits: u32,
        /// Pattern width in stripes; defaults to 2^bits.
        #[arg(long)]
        width: Option<u32>,
        /// Pattern height in stripes; defaults to 2^bits.
        #[arg(long)]
        height: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode captured stacks and compute refractive flow.
    DecodeFlow {
        /// Directory with the capture through the object.
        #[arg(long)]
        obj: PathBuf,
        /// Directory with the no-object reference capture.
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_CONTRAST)]
        min_contrast: f32,
    },
    /// Render ground-truth channels (and optionally a capture stack).
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also render the gray-code capture stack into OUT/stack.
        #[arg(long, default_value_t = false)]
        stack: bool,
    },
    /// Invert refractive flow to surface normals.
    Flow2normal {
        #[arg(long)]
        flow: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long, default_value_t = 1.5)]
        ior: f64,
        /// Pattern-plane depth in meters.
        #[arg(long)]
        h: f64,
        /// Surface-depth prior in meters; defaults to 0.7 * h.
        #[arg(long)]
        d0: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine sensor depth with mask, boundary and normals.
    RefineDepth {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        boundary: PathBuf,
        #[arg(long)]
        normal: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also export the refined point cloud (x y z nx ny nz label).
        #[arg(long)]
        cloud_out: Option<PathBuf>,
        #[arg(long, default_value_t = 1000.0)]
        lambda_data: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_smooth: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_normal: f64,
        #[arg(long, default_value_t = 0.01)]
        boundary_atten: f64,
    },
    /// Plan parallel-jaw grasps over a point cloud.
    PlanGrasp {
        #[arg(long)]
        cloud: PathBuf,
        /// Gripper geometry JSON; defaults to the built-in gripper.
        #[arg(long)]
        gripper: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset of rendered samples.
    GenDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Generator configuration JSON; defaults are built in.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate predictions against a sample's ground truth.
    Evaluate {
        /// Sample directory produced by gen-dataset.
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        normal: Option<PathBuf>,
        #[arg(long)]
        flow: Option<PathBuf>,
        #[arg(long)]
        depth: Option<PathBuf>,
    },
    /// Run the full pipeline on one sample.
    Pipeline {
        #[arg(long)]
        sample: PathBuf,
        /// Dataset directory holding the shared reference stack; defaults to
        /// the sample's parent directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        sample_id: usize,
    },
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenPatterns { bits, width, height, out } => {
            let w = width.unwrap_or(1u32 << bits.min(16));
            let h = height.unwrap_or(1u32 << bits.min(16));
            let stack = gen_patterns(bits, w, h)?;
            write_stack(&out, &stack.meta, &stack.frames)?;
            println!("wrote {} pattern frames to {}", stack.frames.len(), out.display());
        }
        Command::DecodeFlow { obj, reference, mask, out, min_contrast } => {
            let (meta_o, frames_o) = read_stack(&obj)?;
            let (meta_r, frames_r) = read_stack(&reference)?;
            if meta_o != meta_r {
                return Err(glassgeom::Error::Shape("object and reference stacks disagree".into()));
            }
            let mask = Mask::read(&mask)?;
            let m_obj = decode_stack(&frames_o, &meta_o, min_contrast)?;
            let m_ref = decode_stack(&frames_r, &meta_r, min_contrast)?;
            let flow = flow_from_correspondence(&m_obj, &m_ref, &mask)?;
            flow.write(&out)?;
            println!("wrote flow to {}", out.display());
        }
        Command::Render { scene, out, stack } => {
            let scene = Scene::read_json(&scene)?;
            std::fs::create_dir_all(&out)?;
            let channels = render_channels(&scene)?;
            channels.gt_depth.write(&out.join("gt_depth.rfg"))?;
            channels.gt_normal.write(&out.join("gt_normal.rfg"))?;
            channels.mask.write(&out.join("mask.rfg"))?;
            channels.boundary.write(&out.join("boundary.rfg"))?;
            channels.gt_flow.write(&out.join("gt_flow.rfg"))?;
            channels.sensor_depth.write(&out.join("sensor_depth.rfg"))?;
            channels.gt_depth.write_png(&out.join("gt_depth.png"))?;
            channels.gt_normal.write_png_fixed_range(&out.join("gt_normal.png"), -1.0, 1.0)?;
            channels.mask.grid().write_png(&out.join("mask.png"))?;
            channels.boundary.grid().write_png(&out.join("boundary.png"))?;
            channels.gt_flow.grid().write_png(&out.join("gt_flow.png"))?;
            channels.sensor_depth.write_png(&out.join("sensor_depth.png"))?;
            if stack {
                let patterns = gen_patterns(
                    scene.plane.pattern.bits,
                    scene.plane.pattern.pattern_width,
                    scene.plane.pattern.pattern_height,
                )?;
                let frames = glassgeom::render::render_capture(&scene, &patterns)?;
                write_stack(&out.join("stack"), &scene.plane.pattern, &frames)?;
            }
            println!("rendered {} ({} masked pixels)", out.display(), channels.mask.count());
        }
        Command::Flow2normal { flow, mask, camera, ior, h, d0, out } => {
            let flow = FlowField::read(&flow)?;
            let mask = Mask::read(&mask)?;
            let camera = Camera::read_json(&camera)?;
            let params = InversionParams::new(ior, h, d0.unwrap_or(0.7 * h))?;
            let (map, stats) = normal_map_from_flow(&flow, &mask, &camera, &params)?;
            map.write(&out)?;
            println!(
                "recovered {} normals ({} failed, {} skipped) -> {}",
                stats.recovered,
                stats.failed,
                stats.skipped,
                out.display()
            );
        }
        Command::RefineDepth {
            depth,
            mask,
            boundary,
            normal,
            camera,
            out,
            cloud_out,
            lambda_data,
            lambda_smooth,
            lambda_normal,
            boundary_atten,
        } => {
            let depth = Grid2::read(&depth)?;
            let mask = Mask::read(&mask)?;
            let boundary = Mask::read(&boundary)?;
            let normal = NormalMap::read(&normal)?;
            let camera = Camera::read_json(&camera)?;
            let weights = EnergyWeights { lambda_data, lambda_smooth, lambda_normal, boundary_atten };
            let (refined, stats) = refine_depth(&depth, &mask, &boundary, &normal, &camera, &weights)?;
            refined.write(&out)?;
            println!(
                "refined depth in {} CG iterations (residual {:.3e}) -> {}",
                stats.iterations,
                stats.relative_residual,
                out.display()
            );
            if let Some(cloud_path) = cloud_out {
                let cloud = depth_to_pointcloud(&refined, &normal, &mask, &camera)?;
                cloud.write_ascii(&cloud_path)?;
                println!("wrote {} points to {}", cloud.len(), cloud_path.display());
            }
        }
        Command::PlanGrasp { cloud, gripper, n, seed, out } => {
            let cloud = PointCloudN::read_ascii(&cloud)?;
            let gripper = match gripper {
                Some(p) => GripperModel::read_json(&p)?,
                None => GripperModel::default(),
            };
            let config = PlanConfig { n_candidates: n, seed, ..PlanConfig::default() };
            let plan = plan_grasp(&cloud, &gripper, &config)?;
            write_grasps_json(&plan, &out)?;
            match plan.best() {
                Some(best) => println!(
                    "{} grasps ({} collision-free); best energy {:.6e} -> {}",
                    plan.candidates.len(),
                    plan.n_collision_free,
                    best.energy,
                    out.display()
                ),
                None => println!("no feasible grasp found -> {}", out.display()),
            }
        }
        Command::GenDataset { out, n, seed, config } => {
            let config = match config {
                Some(p) => GenConfig::read_json(&p)?,
                None => GenConfig::default(),
            };
            let rows = gen_dataset(&config, n, seed, &out)?;
            println!("generated {} samples under {}", rows.len(), out.display());
        }
        Command::Evaluate { sample, normal, flow, depth } => {
            let s = DatasetSample::read(&sample)?;
            if let Some(p) = normal {
                let pred = NormalMap::read(&p)?;
                let gt = NormalMap::new(s.gt_normal.clone())?;
                let m = angular_error_stats(&pred, &gt, &s.mask)?;
                println!(
                    "normals: mean {:.3} deg, median {:.3} deg, th11.25 {:.2}%, th22.5 {:.2}%, th30 {:.2}% over {} px",
                    m.mean_deg, m.median_deg, m.pct_11_25, m.pct_22_5, m.pct_30, m.n_pixels
                );
            }
            if let Some(p) = flow {
                let pred = FlowField::read(&p)?;
                let r = flow_rmse(&pred, &s.gt_flow, &s.mask)?;
                println!("flow RMSE: {r:.4} px");
            }
            if let Some(p) = depth {
                let pred = Grid2::read(&p)?;
                let r = depth_rmse_m(&pred, &s.gt_depth, &s.mask)?;
                println!("depth RMSE: {:.3} mm", r * 1e3);
            }
        }
        Command::Pipeline { sample, dataset, out, sample_id } => {
            let dataset_dir = dataset.unwrap_or_else(|| {
                sample.parent().map(|p| p.to_path_buf()).unwrap_or_else(|| PathBuf::from("."))
            });
            let (_meta, reference) = read_reference_stack(&dataset_dir)?;
            let params = PipelineParams::default();
            let report = run_pipeline(&sample, &reference, &out, sample_id, &params)?;
            println!("{RESULTS_HEADER}");
            println!("{}", report.row.to_csv());
            for (stage, ms) in &report.timings.stages {
                println!("  {stage}: {ms:.1} ms");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
