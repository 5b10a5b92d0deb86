//! C ABI over the transparent-object geometry pipeline.
//!
//! Conventions:
//! - every object is an opaque handle created and freed by this library;
//! - every fallible call returns a [`GgStatus`] code and writes its result
//!   through out-pointers only on `GG_OK`;
//! - the last error message is kept in thread-local storage and readable
//!   via [`gg_last_error_message`] until the next failing call.
//!
//! The generated header lands in `include/glassgeom.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use glassgeom::camera::Camera;
use glassgeom::codec::{decode_stack, flow_from_correspondence, FlowField};
use glassgeom::error::Error;
use glassgeom::grasp::{plan_grasp, write_grasps_json, GripperModel, PlanConfig};
use glassgeom::graycode::read_stack;
use glassgeom::grid::{Grid2, Mask};
use glassgeom::normals::{normal_map_from_flow, InversionParams, NormalMap};
use glassgeom::refine::{depth_to_pointcloud, refine_depth, EnergyWeights, PointCloudN};
use glassgeom::render::{render_channels, Scene};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgStatus {
    GgOk = 0,
    /// Invalid argument (null pointer, bad UTF-8, bad handle).
    GgErrArgument = 1,
    /// Input violates a mathematical precondition.
    GgErrDomain = 2,
    /// Grids or stacks with mismatched shapes.
    GgErrShape = 3,
    /// Malformed file.
    GgErrFormat = 4,
    /// I/O failure.
    GgErrIo = 5,
    /// Optimization is missing anchoring observations.
    GgErrUnderConstrained = 6,
    /// Numeric failure inside a solver.
    GgErrNumeric = 7,
    /// Nothing to operate on.
    GgErrEmpty = 8,
    /// Anything else.
    GgErrOther = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> GgStatus {
    match e {
        Error::Domain(_) => GgStatus::GgErrDomain,
        Error::Shape(_) => GgStatus::GgErrShape,
        Error::Format { .. } => GgStatus::GgErrFormat,
        Error::Io(_) => GgStatus::GgErrIo,
        Error::UnderConstrained(_) => GgStatus::GgErrUnderConstrained,
        Error::Numeric { .. } => GgStatus::GgErrNumeric,
        Error::Empty(_) => GgStatus::GgErrEmpty,
        Error::Stage { source, .. } => status_of(source),
        _ => GgStatus::GgErrOther,
    }
}

fn fail(e: Error) -> GgStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn fail_arg(msg: &str) -> GgStatus {
    set_error(msg);
    GgStatus::GgErrArgument
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn cstr<'a>(p: *const c_char) -> Option<&'a str> {
    if p.is_null() {
        return None;
    }
    CStr::from_ptr(p).to_str().ok()
}

/// Opaque float raster (row-major, channel-interleaved).
pub struct GgGrid {
    inner: Grid2,
}

/// Opaque scene description.
pub struct GgScene {
    inner: Scene,
}

/// Opaque oriented point cloud.
pub struct GgCloud {
    inner: PointCloudN,
}

macro_rules! check_null {
    ($($p:ident),+) => {
        $(if $p.is_null() { return fail_arg(concat!("null pointer: ", stringify!($p))); })+
    };
}

fn put<T>(out: *mut *mut T, value: T) {
    unsafe { *out = Box::into_raw(Box::new(value)) }
}

// ---------------------------------------------------------------- grids --

/// Create a grid from caller-owned data (copied).
///
/// # Safety
/// `data` must point to `width * height * channels` floats; `out` must be a
/// valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gg_grid_create(
    width: u32,
    height: u32,
    channels: u32,
    data: *const f32,
    out: *mut *mut GgGrid,
) -> GgStatus {
    check_null!(data, out);
    let n = (width as usize) * (height as usize) * (channels as usize);
    let slice = std::slice::from_raw_parts(data, n);
    match Grid2::from_data(width as usize, height as usize, channels as usize, slice.to_vec()) {
        Ok(g) => {
            put(out, GgGrid { inner: g });
            GgStatus::GgOk
        }
        Err(e) => fail(e),
    }
}

/// Read a grid file (RFG1).
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gg_grid_read(path: *const c_char, out: *mut *mut GgGrid) -> GgStatus {
    check_null!(out);
    let Some(path) = cstr(path) else { return fail_arg("path is null or not UTF-8") };
    match Grid2::read(Path::new(path)) {
        Ok(g) => {
            put(out, GgGrid { inner: g });
            GgStatus::GgOk
        }
        Err(e) => fail(e),
    }
}

/// Write a grid file (RFG1).
///
/// # Safety
/// `grid` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn gg_grid_write(grid: *const GgGrid, path: *const c_char) -> GgStatus {
    check_null!(grid);
    let Some(path) = cstr(path) else { return fail_arg("path is null or not UTF-8") };
    match (*grid).inner.write(Path::new(path)) {
        Ok(()) => GgStatus::GgOk,
        Err(e) => fail(e),
    }
}

/// # Safety
/// `grid` must be a live handle (or null, which yields 0).
#[no_mangle]
pub unsafe extern "C" fn gg_grid_width(grid: *const GgGrid) -> u32 {
    if grid.is_null() { 0 } else { (*grid).inner.width() as u32 }
}

/// # Safety
/// `grid` must be a live handle (or null, which yields 0).
#[no_mangle]
pub unsafe extern "C" fn gg_grid_height(grid: *const GgGrid) -> u32 {
    if grid.is_null() { 0 } else { (*grid).inner.height() as u32 }
}

/// # Safety
/// `grid` must be a live handle (or null, which yields 0).
#[no_mangle]
pub unsafe extern "C" fn gg_grid_channels(grid: *const GgGrid) -> u32 {
    if grid.is_null() { 0 } else { (*grid).inner.channels() as u32 }
}

/// Copy the grid payload into a caller buffer of `len` floats; `len` must be
/// exactly width * height * channels.
///
/// # Safety
/// `buffer` must point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn gg_grid_copy_data(
    grid: *const GgGrid,
    buffer: *mut f32,
    len: usize,
) -> GgStatus {
    check_null!(grid, buffer);
    let data = (*grid).inner.data();
    if data.len() != len {
        return fail_arg("buffer length does not match the grid payload");
    }
    std::ptr::copy_nonoverlapping(data.as_ptr(), buffer, len);
    GgStatus::GgOk
}

/// # Safety
/// `grid` must come from this library and not have been freed; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn gg_grid_free(grid: *mut GgGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

// ---------------------------------------------------------------- scenes --

/// Parse and validate a scene from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gg_scene_from_json(json: *const c_char, out: *mut *mut GgScene) -> GgStatus {
    check_null!(out);
    let Some(json) = cstr(json) else { return fail_arg("json is null or not UTF-8") };
    let scene: Scene = match serde_json::from_str(json) {
        Ok(s) => s,
        Err(e) => {
            set_error(&format!("scene json: {e}"));
            return GgStatus::GgErrFormat;
        }
    };
    if let Err(e) = scene.validate() {
        return fail(e);
    }
    put(out, GgScene { inner: scene });
    GgStatus::GgOk
}

/// # Safety
/// `scene` must come from this library and not have been freed; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn gg_scene_free(scene: *mut GgScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Render ground-truth channels. Each non-null out-pointer receives a new
/// grid handle: depth, normals (3ch), mask, boundary, flow (2ch), sensor
/// depth.
///
/// # Safety
/// `scene` must be a live handle; out-pointers must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn gg_render_channels(
    scene: *const GgScene,
    gt_depth: *mut *mut GgGrid,
    gt_normal: *mut *mut GgGrid,
    mask: *mut *mut GgGrid,
    boundary: *mut *mut GgGrid,
    gt_flow: *mut *mut GgGrid,
    sensor_depth: *mut *mut GgGrid,
) -> GgStatus {
    check_null!(scene);
    let channels = match render_channels(&(*scene).inner) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if !gt_depth.is_null() {
        put(gt_depth, GgGrid { inner: channels.gt_depth });
    }
    if !gt_normal.is_null() {
        put(gt_normal, GgGrid { inner: channels.gt_normal });
    }
    if !mask.is_null() {
        put(mask, GgGrid { inner: channels.mask.into_grid() });
    }
    if !boundary.is_null() {
        put(boundary, GgGrid { inner: channels.boundary.into_grid() });
    }
    if !gt_flow.is_null() {
        put(gt_flow, GgGrid { inner: channels.gt_flow.grid().clone() });
    }
    if !sensor_depth.is_null() {
        put(sensor_depth, GgGrid { inner: channels.sensor_depth });
    }
    GgStatus::GgOk
}

// ------------------------------------------------------------- pipeline --

/// Decode two captured stack directories into a refractive flow grid (2ch).
///
/// # Safety
/// Paths must be NUL-terminated UTF-8 strings, `mask` a live 1-channel
/// handle with values 0/1, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gg_decode_flow(
    obj_stack_dir: *const c_char,
    ref_stack_dir: *const c_char,
    mask: *const GgGrid,
    min_contrast: f32,
    out: *mut *mut GgGrid,
) -> GgStatus {
    check_null!(mask, out);
    let (Some(obj_dir), Some(ref_dir)) = (cstr(obj_stack_dir), cstr(ref_stack_dir)) else {
        return fail_arg("stack paths must be non-null UTF-8");
    };
    let result = (|| -> glassgeom::Result<FlowField> {
        let (meta_o, frames_o) = read_stack(Path::new(obj_dir))?;
        let (meta_r, frames_r) = read_stack(Path::new(ref_dir))?;
        if meta_o != meta_r {
            return Err(Error::Shape("object and reference stacks disagree".into()));
        }
        let mask = Mask::new((*mask).inner.clone())?;
        let m_obj = decode_stack(&frames_o, &meta_o, min_contrast)?;
        let m_ref = decode_stack(&frames_r, &meta_r, min_contrast)?;
        flow_from_correspondence(&m_obj, &m_ref, &mask)
    })();
    match result {
        Ok(flow) => {
            put(out, GgGrid { inner: flow.grid().clone() });
            GgStatus::GgOk
        }
        Err(e) => fail(e),
    }
}

/// Invert a flow grid (2ch) to unit normals (3ch) under the thin-object
/// model. `camera_json` is the camera description used by the CLI.
///
/// # Safety
/// Handles must be live; `camera_json` a NUL-terminated UTF-8 string; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn gg_flow_to_normals(
    flow: *const GgGrid,
    mask: *const GgGrid,
    camera_json: *const c_char,
    ior: f64,
    plane_depth_m: f64,
    surface_prior_m: f64,
    out: *mut *mut GgGrid,
) -> GgStatus {
    check_null!(flow, mask, out);
    let Some(cam_json) = cstr(camera_json) else { return fail_arg("camera_json must be UTF-8") };
    let result = (|| -> glassgeom::Result<NormalMap> {
        let camera: Camera = serde_json::from_str(cam_json)?;
        camera.validate()?;
        let flow = FlowField::new((*flow).inner.clone())?;
        let mask = Mask::new((*mask).inner.clone())?;
        let params = InversionParams::new(ior, plane_depth_m, surface_prior_m)?;
        Ok(normal_map_from_flow(&flow, &mask, &camera, &params)?.0)
    })();
    match result {
        Ok(map) => {
            put(out, GgGrid { inner: map.grid().clone() });
            GgStatus::GgOk
        }
        Err(e) => fail(e),
    }
}

/// Refine sensor depth using mask, boundary and normals; also exposes the
/// lifted point cloud when `cloud_out` is non-null.
///
/// # Safety
/// Handles must be live, `camera_json` a NUL-terminated UTF-8 string, out
/// pointers writable or null.
#[no_mangle]
pub unsafe extern "C" fn gg_refine_depth(
    sensor_depth: *const GgGrid,
    mask: *const GgGrid,
    boundary: *const GgGrid,
    normals: *const GgGrid,
    camera_json: *const c_char,
    lambda_data: f64,
    lambda_smooth: f64,
    lambda_normal: f64,
    boundary_atten: f64,
    out: *mut *mut GgGrid,
    cloud_out: *mut *mut GgCloud,
) -> GgStatus {
    check_null!(sensor_depth, mask, boundary, normals, out);
    let Some(cam_json) = cstr(camera_json) else { return fail_arg("camera_json must be UTF-8") };
    let result = (|| -> glassgeom::Result<(Grid2, Option<PointCloudN>)> {
        let camera: Camera = serde_json::from_str(cam_json)?;
        camera.validate()?;
        let mask = Mask::new((*mask).inner.clone())?;
        let boundary = Mask::new((*boundary).inner.clone())?;
        let normal_map = NormalMap::new((*normals).inner.clone())?;
        let weights = EnergyWeights { lambda_data, lambda_smooth, lambda_normal, boundary_atten };
        let (refined, _) = refine_depth(
            &(*sensor_depth).inner,
            &mask,
            &boundary,
            &normal_map,
            &camera,
            &weights,
        )?;
        let cloud = if cloud_out.is_null() {
            None
        } else {
            Some(depth_to_pointcloud(&refined, &normal_map, &mask, &camera)?)
        };
        Ok((refined, cloud))
    })();
    match result {
        Ok((refined, cloud)) => {
            put(out, GgGrid { inner: refined });
            if let Some(c) = cloud {
                put(cloud_out, GgCloud { inner: c });
            }
            GgStatus::GgOk
        }
        Err(e) => fail(e),
    }
}

/// Number of points in a cloud handle.
///
/// # Safety
/// `cloud` must be a live handle (or null, which yields 0).
#[no_mangle]
pub unsafe extern "C" fn gg_cloud_len(cloud: *const GgCloud) -> usize {
    if cloud.is_null() { 0 } else { (*cloud).inner.len() }
}

/// Write a cloud as the ASCII `x y z nx ny nz label` table.
///
/// # Safety
/// `cloud` must be live; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn gg_cloud_write(cloud: *const GgCloud, path: *const c_char) -> GgStatus {
    check_null!(cloud);
    let Some(path) = cstr(path) else { return fail_arg("path must be UTF-8") };
    match (*cloud).inner.write_ascii(Path::new(path)) {
        Ok(()) => GgStatus::GgOk,
        Err(e) => fail(e),
    }
}

/// # Safety
/// `cloud` must come from this library and not have been freed; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn gg_cloud_free(cloud: *mut GgCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Plan grasps on a cloud and write the ranked list as JSON. The returned
/// best energy is NaN when no feasible grasp exists (still `GG_OK`).
///
/// # Safety
/// `cloud` must be live; `gripper_json` may be null (built-in gripper);
/// `out_json_path` must be a NUL-terminated UTF-8 string; `best_energy`
/// must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn gg_plan_grasps(
    cloud: *const GgCloud,
    gripper_json: *const c_char,
    n_candidates: usize,
    seed: u64,
    out_json_path: *const c_char,
    best_energy: *mut f64,
) -> GgStatus {
    check_null!(cloud);
    let Some(out_path) = cstr(out_json_path) else { return fail_arg("out_json_path must be UTF-8") };
    let result = (|| -> glassgeom::Result<f64> {
        let gripper = match cstr(gripper_json) {
            Some(text) => {
                let g: GripperModel = serde_json::from_str(text)?;
                g.validate()?;
                g
            }
            None => GripperModel::default(),
        };
        let config = PlanConfig { n_candidates, seed, ..PlanConfig::default() };
        let plan = plan_grasp(&(*cloud).inner, &gripper, &config)?;
        write_grasps_json(&plan, Path::new(out_path))?;
        Ok(plan.best().map_or(f64::NAN, |c| c.energy))
    })();
    match result {
        Ok(e) => {
            if !best_energy.is_null() {
                *best_energy = e;
            }
            GgStatus::GgOk
        }
        Err(e) => fail(e),
    }
}
