//! Geometry recovery and grasp planning for transparent objects.
//!
//! The pipeline runs in five stages, each usable on its own:
//!
//! 1. [`codec`] decodes gray-code structured-light captures into per-pixel
//!    background correspondences and turns them into refractive flow;
//! 2. [`normals`] inverts refractive flow to surface normals through Snell's
//!    law under a single-interface thin-object model;
//! 3. [`refine`] fuses raw sensor depth, mask, boundary and normals into a
//!    refined depth map by sparse linear least squares, then lifts it to an
//!    oriented point cloud;
//! 4. [`grasp`] plans parallel-jaw grasps on the cloud by iterative surface
//!    fitting and returns candidates ranked by fitting energy;
//! 5. [`render`] is an analytic ray tracer over parametric transparent
//!    objects that doubles as the synthetic-data generator and as the
//!    ground-truth oracle for every other stage.
//!
//! [`harness`] glues the stages together: dataset generation, evaluation
//! metrics, and end-to-end runs.

pub mod camera;
pub mod codec;
pub mod error;
pub mod geom;
pub mod graycode;
pub mod grid;
pub mod harness;
pub mod normals;
pub mod refine;
pub mod render;
pub mod grasp;

pub use camera::Camera;
pub use codec::{CorrespondenceMap, FlowField};
pub use error::{Error, Result};
pub use geom::{RigidTransform, Vec3};
pub use grid::{Grid2, Mask};
