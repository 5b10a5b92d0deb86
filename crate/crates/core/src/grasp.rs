//! Parallel-jaw grasp planning by iterative surface fitting.
//!
//! Candidates are seeded at random surface points, oriented top-down with
//! the closing axis along the horizontal component of the local normal, then
//! refined by damped linear least squares that pulls the two finger pads
//! onto the captured surface points: point-to-pad-plane distance plus a
//! normal-opposition penalty, minimized over closing-axis translation, wrist
//! roll and opening. Candidates are ranked ascending by the final mean
//! residual per captured point; the head of the list is the grasp.
//!
//! Gripper frame convention: x is the closing axis (pad contact faces at
//! x = +-opening/2, inner normals facing each other), y spans the pad width,
//! and the approach direction (the way the hand travels) is gripper -z, so
//! +z points back toward the wrist.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat3, RigidTransform, Vec3};
use crate::refine::PointCloudN;

/// Parallel-jaw gripper geometry, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperModel {
    /// Pad extent along the gripper y axis.
    pub pad_width: f64,
    /// Pad extent along the gripper z axis.
    pub pad_height: f64,
    pub max_open: f64,
    pub min_open: f64,
    pub finger_thickness: f64,
    /// Full finger length from fingertip to palm.
    pub finger_length: f64,
    /// Palm box half-extents (x, y) and depth along +z.
    pub palm_half_x: f64,
    pub palm_half_y: f64,
    pub palm_depth: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        // Franka hand numbers
        Self {
            pad_width: 0.018,
            pad_height: 0.028,
            max_open: 0.08,
            min_open: 0.0,
            finger_thickness: 0.012,
            finger_length: 0.054,
            palm_half_x: 0.05,
            palm_half_y: 0.035,
            palm_depth: 0.06,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_open >= 0.0 && self.min_open < self.max_open) {
            return Err(Error::Domain("need 0 <= min_open < max_open".into()));
        }
        if self.pad_width <= 0.0 || self.pad_height <= 0.0 || self.finger_thickness <= 0.0 {
            return Err(Error::Domain("pad dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let g: GripperModel =
            serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        g.validate()?;
        Ok(g)
    }

    /// z of the fingertip plane in the gripper frame.
    fn fingertip_z(&self) -> f64 {
        -0.5 * self.pad_height
    }

    /// z where the fingers end and the palm begins.
    fn palm_base_z(&self) -> f64 {
        self.fingertip_z() + self.finger_length
    }
}

/// One grasp hypothesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraspCandidate {
    /// Gripper-to-camera transform.
    pub pose: RigidTransform,
    pub opening: f64,
    /// Mean fitting residual per captured point; +inf when under-supported.
    pub energy: f64,
    /// Captured point count per pad (left, right).
    pub contacts: [usize; 2],
}

/// Planner configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub n_candidates: usize,
    pub seed: u64,
    pub fit_iters: usize,
    /// Direction the hand travels during the approach, in the cloud frame.
    /// +z matches a camera looking straight down at the table.
    pub approach_dir: [f64; 3],
    /// Weight of the normal-opposition term.
    pub gamma: f64,
    /// Minimum captured points per pad for a candidate to count.
    pub k_min: usize,
    /// Capture slab half-thickness around each pad plane.
    pub capture_m: f64,
    /// Extra opening beyond the local antipodal width at sampling time.
    pub clearance_m: f64,
    /// Collision margin around gripper bodies.
    pub margin_m: f64,
    /// Wrist roll jitter half-range, radians.
    pub roll_jitter_rad: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            n_candidates: 200,
            seed: 1,
            fit_iters: 10,
            approach_dir: [0.0, 0.0, 1.0],
            gamma: 0.25,
            k_min: 15,
            capture_m: 0.008,
            clearance_m: 0.005,
            margin_m: 0.002,
            roll_jitter_rad: 10f64.to_radians(),
        }
    }
}

impl PlanConfig {
    pub fn approach(&self) -> Vec3 {
        Vec3::new(self.approach_dir[0], self.approach_dir[1], self.approach_dir[2]).normalize()
    }
}

fn rotation_about(axis: Vec3, angle: f64) -> Mat3 {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
        .matrix()
        .to_owned()
}

/// Gripper orientation from a closing direction and the approach direction.
fn orientation_from(closing: Vec3, approach: Vec3) -> Mat3 {
    let x = closing.normalize();
    let z = -approach.normalize();
    let y = z.cross(&x).normalize();
    // re-orthogonalize x against numerical drift
    let x = y.cross(&z).normalize();
    Matrix3::from_columns(&[x, y, z])
}

/// Draw sample candidates on the cloud surface (unrefined).
pub fn sample_candidates(
    cloud: &PointCloudN,
    gripper: &GripperModel,
    n: usize,
    seed: u64,
    config: &PlanConfig,
) -> Result<Vec<GraspCandidate>> {
    if cloud.is_empty() {
        return Err(Error::Empty("cannot sample grasps on an empty cloud".into()));
    }
    gripper.validate()?;
    let approach = config.approach();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);

    for _ in 0..n {
        let idx = rng.random_range(0..cloud.len());
        let p = cloud.points[idx];
        let n_p = cloud.normals[idx];

        // closing axis: horizontal component of the surface normal
        let mut u = n_p - approach * n_p.dot(&approach);
        if u.norm() < 1e-6 {
            // near-vertical normal: fall back to a random horizontal direction
            let seed_vec = if approach.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let e1 = (seed_vec - approach * seed_vec.dot(&approach)).normalize();
            let e2 = approach.cross(&e1);
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            u = e1 * theta.cos() + e2 * theta.sin();
        } else {
            u = u.normalize();
        }
        let jitter = (rng.random::<f64>() * 2.0 - 1.0) * config.roll_jitter_rad;
        let u = rotation_about(approach, jitter) * u;

        let rot = orientation_from(u, approach);
        let x_axis = rot.column(0).into_owned();
        let y_axis = rot.column(1).into_owned();
        let z_axis = rot.column(2).into_owned();

        // local antipodal width: farthest surface point across the pad band
        let mut width = 0.0f64;
        for q in &cloud.points {
            let d = q - p;
            if d.dot(&y_axis).abs() <= 0.5 * gripper.pad_width
                && d.dot(&z_axis).abs() <= 0.5 * gripper.pad_height
            {
                width = width.max(-d.dot(&x_axis));
            }
        }
        let opening = (width + config.clearance_m).clamp(gripper.min_open, gripper.max_open);
        let center = p - x_axis * (0.5 * width);

        out.push(GraspCandidate {
            pose: RigidTransform::new(rot, center),
            opening,
            energy: f64::INFINITY,
            contacts: [0, 0],
        });
    }
    Ok(out)
}

struct Captured {
    /// Point in the gripper frame.
    q: Vec3,
    /// Normal in the gripper frame.
    n: Vec3,
    /// +1 for the right pad (x = +opening/2), -1 for the left.
    side: f64,
}

fn capture_points(
    cloud: &PointCloudN,
    pose: &RigidTransform,
    opening: f64,
    gripper: &GripperModel,
    capture: f64,
) -> (Vec<Captured>, [usize; 2]) {
    let inv = pose.inverse();
    let mut pts = Vec::new();
    let mut counts = [0usize; 2];
    for i in 0..cloud.len() {
        let q = inv.apply(cloud.points[i]);
        if q.y.abs() > 0.5 * gripper.pad_width || q.z.abs() > 0.5 * gripper.pad_height {
            continue;
        }
        for side in [-1.0, 1.0] {
            if (q.x - side * 0.5 * opening).abs() <= capture {
                pts.push(Captured { q, n: inv.apply_dir(cloud.normals[i]), side });
                counts[if side < 0.0 { 0 } else { 1 }] += 1;
            }
        }
    }
    (pts, counts)
}

/// Mean residual per captured point: squared pad-plane distance plus the
/// normal-opposition penalty.
fn fit_energy(pts: &[Captured], opening: f64, gamma: f64) -> f64 {
    if pts.is_empty() {
        return f64::INFINITY;
    }
    let mut total = 0.0;
    for c in pts {
        let d = c.q.x - c.side * 0.5 * opening;
        // pad inner normal is (-side, 0, 0); zero when the point normal opposes it
        let op = 1.0 - c.side * c.n.x;
        total += d * d + gamma * op * op;
    }
    total / pts.len() as f64
}

/// Refine one candidate by iterative surface fitting.
///
/// Each iteration linearizes over (closing-axis translation, wrist roll,
/// opening) and is accepted only if the recaptured energy decreases, so the
/// reported energy sequence is non-increasing by construction.
pub fn fit_surface(
    candidate: &GraspCandidate,
    cloud: &PointCloudN,
    gripper: &GripperModel,
    iters: usize,
    config: &PlanConfig,
) -> (GraspCandidate, Vec<f64>) {
    let gamma = config.gamma;
    let mut pose = candidate.pose;
    let mut opening = candidate.opening;

    let (mut pts, mut counts) = capture_points(cloud, &pose, opening, gripper, config.capture_m);
    if counts[0] < config.k_min || counts[1] < config.k_min {
        let mut c = candidate.clone();
        c.energy = f64::INFINITY;
        c.contacts = counts;
        return (c, vec![f64::INFINITY]);
    }
    let mut energy = fit_energy(&pts, opening, gamma);
    let mut trace = vec![energy];

    for _ in 0..iters {
        // damped normal equations over delta = (tx, roll, opening)
        let mut ata = Matrix3::<f64>::zeros();
        let mut atb = Vector3::<f64>::zeros();
        for c in &pts {
            // distance residual: r = q.x - side*o/2,
            // dr/d(tx, roll, do) = (-1, q.y, -side/2)
            let r = c.q.x - c.side * 0.5 * opening;
            let j = Vector3::new(-1.0, c.q.y, -0.5 * c.side);
            ata += j * j.transpose();
            atb += j * (-r);
            // opposition residual: s = sqrt(g) (1 - side * n.x),
            // ds/droll = -sqrt(g) * side * n.y
            let s = gamma.sqrt() * (1.0 - c.side * c.n.x);
            let js = Vector3::new(0.0, -gamma.sqrt() * c.side * c.n.y, 0.0);
            ata += js * js.transpose();
            atb += js * (-s);
        }
        for k in 0..3 {
            ata[(k, k)] += 1e-9;
        }
        let Some(chol) = ata.cholesky() else { break };
        let delta = chol.solve(&atb);
        if !delta.iter().all(|v| v.is_finite()) {
            break;
        }

        let rot = pose.rotation_matrix();
        let new_rot = rot * rotation_about(Vec3::z(), delta[1]);
        let new_t = pose.translation_vector() + rot * Vec3::new(delta[0], 0.0, 0.0);
        let new_pose = RigidTransform::new(new_rot, new_t);
        let new_opening = (opening + delta[2]).clamp(gripper.min_open, gripper.max_open);

        let (new_pts, new_counts) = capture_points(cloud, &new_pose, new_opening, gripper, config.capture_m);
        if new_counts[0] < config.k_min || new_counts[1] < config.k_min {
            break;
        }
        let new_energy = fit_energy(&new_pts, new_opening, gamma);
        if new_energy.is_nan() || new_energy >= energy {
            break; // keep the best iterate
        }
        pose = new_pose;
        opening = new_opening;
        pts = new_pts;
        counts = new_counts;
        energy = new_energy;
        trace.push(energy);
        if delta.norm() < 1e-10 {
            break;
        }
    }

    (
        GraspCandidate { pose, opening, energy, contacts: counts },
        trace,
    )
}

/// True iff no cloud point intrudes into the finger bodies, the approach
/// corridor above them, or the palm box (2 mm default margin). Points at the
/// pad contact faces are the grasped surface and do not count.
pub fn collision_check(
    candidate: &GraspCandidate,
    cloud: &PointCloudN,
    gripper: &GripperModel,
    margin: f64,
) -> bool {
    let inv = candidate.pose.inverse();
    let half_open = 0.5 * candidate.opening;
    let tip = gripper.fingertip_z();
    let palm_base = gripper.palm_base_z();
    for p in &cloud.points {
        let q = inv.apply(*p);
        // palm box (also covers the corridor the palm sweeps on approach)
        if q.x.abs() <= gripper.palm_half_x + margin
            && q.y.abs() <= gripper.palm_half_y + margin
            && q.z >= palm_base - margin
            && q.z <= palm_base + gripper.palm_depth + margin
        {
            return false;
        }
        // finger bodies and the corridor they swept while descending
        let in_steel_x = q.x.abs() >= half_open + margin
            && q.x.abs() <= half_open + gripper.finger_thickness + margin;
        if in_steel_x && q.y.abs() <= 0.5 * gripper.pad_width + margin && q.z >= tip - margin && q.z <= palm_base + margin
        {
            return false;
        }
    }
    true
}

/// Result of planning: candidates sorted ascending by energy. An empty list
/// is the explicit no-grasp outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraspPlan {
    pub candidates: Vec<GraspCandidate>,
    pub n_sampled: usize,
    pub n_supported: usize,
    pub n_collision_free: usize,
}

impl GraspPlan {
    pub fn best(&self) -> Option<&GraspCandidate> {
        self.candidates.first()
    }
}

/// Sample, fit, filter and rank grasp candidates.
pub fn plan_grasp(cloud: &PointCloudN, gripper: &GripperModel, config: &PlanConfig) -> Result<GraspPlan> {
    if cloud.is_empty() {
        return Err(Error::Empty("cannot plan grasps on an empty cloud".into()));
    }
    let seeds = sample_candidates(cloud, gripper, config.n_candidates, config.seed, config)?;
    let fitted: Vec<GraspCandidate> = seeds
        .par_iter()
        .map(|c| fit_surface(c, cloud, gripper, config.fit_iters, config).0)
        .collect();

    let n_supported = fitted.iter().filter(|c| c.energy.is_finite()).count();
    let mut kept: Vec<(usize, GraspCandidate)> = fitted
        .into_iter()
        .enumerate()
        .filter(|(_, c)| c.energy.is_finite() && collision_check(c, cloud, gripper, config.margin_m))
        .collect();
    let n_collision_free = kept.len();
    // ascending energy, ties by candidate index
    kept.sort_by(|(ia, a), (ib, b)| {
        a.energy
            .partial_cmp(&b.energy)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ia.cmp(ib))
    });

    Ok(GraspPlan {
        candidates: kept.into_iter().map(|(_, c)| c).collect(),
        n_sampled: config.n_candidates,
        n_supported,
        n_collision_free,
    })
}

/// Serialize a plan with 4x4 row-major poses.
pub fn write_grasps_json(plan: &GraspPlan, path: &std::path::Path) -> Result<()> {
    #[derive(Serialize)]
    struct Entry {
        pose: [[f64; 4]; 4],
        opening: f64,
        energy: f64,
        contacts: [usize; 2],
    }
    #[derive(Serialize)]
    struct File {
        n_sampled: usize,
        n_supported: usize,
        n_collision_free: usize,
        grasps: Vec<Entry>,
    }
    let entries = plan
        .candidates
        .iter()
        .map(|c| {
            let r = c.pose.rotation;
            let t = c.pose.translation;
            Entry {
                pose: [
                    [r[0][0], r[0][1], r[0][2], t[0]],
                    [r[1][0], r[1][1], r[1][2], t[1]],
                    [r[2][0], r[2][1], r[2][2], t[2]],
                    [0.0, 0.0, 0.0, 1.0],
                ],
                opening: c.opening,
                energy: c.energy,
                contacts: c.contacts,
            }
        })
        .collect();
    let file = File {
        n_sampled: plan.n_sampled,
        n_supported: plan.n_supported,
        n_collision_free: plan.n_collision_free,
        grasps: entries,
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Analytic outer-wall cylinder-shell cloud (test and benchmark helper).
pub fn cylinder_shell_cloud(
    center: Vec3,
    axis: Vec3,
    radius: f64,
    height: f64,
    n_angles: usize,
    n_heights: usize,
) -> PointCloudN {
    let w = axis.normalize();
    let seed = if w.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (seed - w * seed.dot(&w)).normalize();
    let e2 = w.cross(&e1);
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for ih in 0..n_heights {
        let z = (ih as f64 / (n_heights - 1) as f64 - 0.5) * height;
        for ia in 0..n_angles {
            let th = std::f64::consts::TAU * ia as f64 / n_angles as f64;
            let radial = e1 * th.cos() + e2 * th.sin();
            points.push(center + w * z + radial * radius);
            normals.push(radial);
        }
    }
    let n = points.len();
    PointCloudN { points, normals, pixels: vec![(0, 0); n], labels: vec![0; n] }
}
