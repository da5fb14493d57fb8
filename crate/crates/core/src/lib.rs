//! Geometry, rig and differentiable-rendering primitives shared by the
//! garment reconstruction and animation pipeline.
//!
//! The crate is CPU-only. Hot loops (rasterization tiles, per-vertex
//! skinning) run on rayon when the `parallel` feature is enabled
//! (default) and fall back to plain sequential iteration otherwise.

pub mod camera;
pub mod error;
pub mod image;
pub mod mesh;
pub mod obj;
pub(crate) mod par;
pub mod pose;
pub mod render;
pub mod rig;
pub mod skinning;
pub mod subspace;

pub use camera::Camera;
pub use error::{CoreError, Result};
pub use image::{MaskImage, NormalImage};
pub use mesh::TriMesh;
pub use pose::Pose;
pub use rig::RigBundle;
pub use subspace::GarmentSubspace;
