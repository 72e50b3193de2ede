//! Gaussian splatting for multi-date satellite photogrammetry.
//!
//! The crate recovers a digital surface model and an albedo map from a small
//! set of posed satellite images. Cameras are affine approximations of the RPC
//! sensor model, shadows come from a shadow map rendered from a sun camera,
//! and training is regularized for sparsity, view consistency and opaqueness.
//!
//! Module map:
//!
//! - [`geocam`]: RPC, UTM, world frame, affine cameras, localization.
//! - [`splat`]: primitives, projection, tile rasterizer and its gradients.
//! - [`shading`]: shadow mapping and image formation.
//! - [`losses`]: photometric distance and regularizers.
//! - [`training`]: initialization, Adam, pruning and the training loop.
//! - [`evalsynth`]: synthetic scenes, ray-cast oracle, DSM export and MAE.
//! - [`io`]: datasets, checkpoints and raster files.

pub mod error;
pub mod evalsynth;
pub mod geocam;
pub mod io;
pub mod losses;
pub mod raster;
pub mod shading;
pub mod splat;
pub mod training;

pub use error::{Error, Result};
