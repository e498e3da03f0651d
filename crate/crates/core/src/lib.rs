//! Semantic scene reconstruction from posed RGB-D captures.
//!
//! The pipeline fuses depth frames into a truncated signed distance field
//! (TSDF) voxel grid, corrupts it to simulate incomplete scans, and then
//! recovers complete geometry, per-voxel color, and per-voxel semantic
//! labels by optimizing volumetric predictions through a differentiable
//! raycasting renderer. Supervision lives entirely in 2D: captured depth
//! and color images plus label maps that are either ground truth or the
//! output of a generic segmentation predictor (optionally evaluated on
//! extra, perturbed "virtual" views).
//!
//! Module map:
//! - [`grid`]: voxel grid storage, chunking, marching cubes export
//! - [`camera`]: pinhole model, virtual-view perturbation, view selection
//! - [`fusion`]: volumetric TSDF/color/label fusion and scan corruption
//! - [`render`]: differentiable raycaster (depth / color / semantics)
//! - [`losses`]: 2D L1, cross-entropy, and 3D TSDF objectives
//! - [`net`]: toy two-encoder / three-decoder residual U-network with
//!   hand-written forward and backward passes
//! - [`train`]: training loops (2D-GT, pseudo-label, virtual-view
//!   self-supervision, direct field refinement) and chunked inference
//! - [`eval`]: semantic scene completion / segmentation metrics
//! - [`synth`]: analytic SDF scenes and the exact oracle raytracer
//! - [`io`]: file formats (VXG1 volumes, PFM/PPM/PGM images, PLY meshes,
//!   trajectories, NET1 checkpoints, dataset directories)

pub mod camera;
pub mod losses;
pub mod net;
pub mod error;
pub mod eval;

pub mod fusion;
pub mod grid;
pub mod io;
pub mod image;



pub mod render;
pub mod synth;
pub mod train;


pub use error::SemvoxError;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, SemvoxError>;
