//! Differentiable rasterization passes.
//!
//! Two passes with a deliberate split of differentiability:
//!
//! * the normal pass is a hard z-buffered rasterizer whose gradients
//!   flow through shading only (barycentric weights and interpolated
//!   vertex normals), with the per-pixel face assignment held fixed;
//! * occupancy gradients flow exclusively through the soft silhouette,
//!   a sigmoid of the signed 2D distance to the boundary of the union
//!   of projected faces.
//!
//! Both passes are tiled (32x32). Parallel runs reduce per-tile partial
//! buffers in a fixed order, so results are bitwise reproducible for a
//! fixed tile size regardless of thread count.

mod backprop;
mod imgrad;
mod raster;
mod silhouette;

pub use backprop::{backprop_normal_image, backprop_silhouette};
pub use imgrad::{image_gradient, image_gradient_adjoint, normal_image_gradient};
pub use raster::{normals_with_assignment, render_normals, NormalAssignment};
pub use silhouette::{
    render_silhouette, silhouette_with_assignment, SilhouetteAssignment, DEFAULT_SHARPNESS,
};

use crate::image::MaskImage;
use crate::image::NormalImage;

/// One z-buffer pass feeding both the normal and silhouette outputs;
/// what per-iteration optimization loops should call.
pub fn render_passes(
    mesh: &TriMesh,
    camera: &Camera,
    sharpness: f64,
) -> Result<(NormalImage, NormalAssignment, MaskImage, SilhouetteAssignment)> {
    let proj = project_mesh(mesh, camera)?;
    let raster = raster::rasterize(mesh, camera, &proj);
    let (img, assignment) = raster::normals_from_raster(mesh, camera, &raster);
    let sil = silhouette::silhouette_from_raster(mesh, sharpness, &proj, &raster);
    Ok((img, assignment, sil.mask, sil.assignment))
}

use nalgebra::{Vector2, Vector3};

use crate::camera::Camera;
use crate::error::{CoreError, Result};
use crate::mesh::{v3, TriMesh};

pub(crate) const TILE: usize = 32;

/// Faces with any vertex at or behind this camera-space depth are
/// dropped rather than clipped; garments sit well in front.
pub(crate) const Z_NEAR: f64 = 1e-6;

/// Per-vertex gradient accumulator aligned with the rendered mesh.
#[derive(Debug, Clone)]
pub struct RenderGrad {
    per_vertex: Vec<[f64; 3]>,
}

impl RenderGrad {
    pub fn zeros(vertex_count: usize) -> Self {
        RenderGrad { per_vertex: vec![[0.0; 3]; vertex_count] }
    }

    pub fn per_vertex(&self) -> &[[f64; 3]] {
        &self.per_vertex
    }

    #[inline]
    pub(crate) fn add(&mut self, vertex: usize, g: Vector3<f64>) {
        let slot = &mut self.per_vertex[vertex];
        slot[0] += g.x;
        slot[1] += g.y;
        slot[2] += g.z;
    }

    /// Merge `other` into self (fixed call order keeps this deterministic).
    pub fn accumulate(&mut self, other: &RenderGrad) {
        assert_eq!(self.per_vertex.len(), other.per_vertex.len());
        for (a, b) in self.per_vertex.iter_mut().zip(&other.per_vertex) {
            a[0] += b[0];
            a[1] += b[1];
            a[2] += b[2];
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for g in &mut self.per_vertex {
            g[0] *= s;
            g[1] *= s;
            g[2] *= s;
        }
        self
    }

    pub fn assert_finite(&self) -> Result<()> {
        for (i, g) in self.per_vertex.iter().enumerate() {
            if !(g[0].is_finite() && g[1].is_finite() && g[2].is_finite()) {
                return Err(CoreError::TopologyMismatch {
                    context: format!("non-finite gradient at vertex {i}"),
                });
            }
        }
        Ok(())
    }
}

/// Camera-space and pixel-space vertex positions plus face validity.
pub(crate) struct Projection {
    pub cam: Vec<Vector3<f64>>,
    pub pix: Vec<Vector2<f64>>,
    pub face_valid: Vec<bool>,
}

pub(crate) fn project_mesh(mesh: &TriMesh, camera: &Camera) -> Result<Projection> {
    let cam: Vec<Vector3<f64>> = mesh
        .vertices()
        .iter()
        .map(|v| camera.to_camera(&v3(*v)))
        .collect();
    let pix: Vec<Vector2<f64>> = cam
        .iter()
        .map(|c| if c.z > Z_NEAR { camera.project(c) } else { Vector2::zeros() })
        .collect();
    let face_valid: Vec<bool> = mesh
        .faces()
        .iter()
        .map(|f| f.iter().all(|&i| cam[i as usize].z > Z_NEAR))
        .collect();
    if !face_valid.iter().any(|&v| v) {
        return Err(CoreError::MeshBehindCamera);
    }
    Ok(Projection { cam, pix, face_valid })
}

/// Signed area scaled barycentric coordinates of point `p` in triangle
/// (a, b, c). Returns None when the projected triangle is degenerate.
#[inline]
pub(crate) fn barycentric(
    p: Vector2<f64>,
    a: Vector2<f64>,
    b: Vector2<f64>,
    c: Vector2<f64>,
) -> Option<[f64; 3]> {
    let denom = cross2(b - a, c - a);
    if denom.abs() < 1e-14 {
        return None;
    }
    let b0 = cross2(b - p, c - p) / denom;
    let b1 = cross2(c - p, a - p) / denom;
    let b2 = cross2(a - p, b - p) / denom;
    Some([b0, b1, b2])
}

#[inline]
pub(crate) fn cross2(u: Vector2<f64>, v: Vector2<f64>) -> f64 {
    u.x * v.y - u.y * v.x
}

#[inline]
pub(crate) fn inside(bary: &[f64; 3]) -> bool {
    bary[0] >= 0.0 && bary[1] >= 0.0 && bary[2] >= 0.0
}

pub(crate) struct TileGrid {
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub width: usize,
    pub height: usize,
}

impl TileGrid {
    pub fn new(width: usize, height: usize) -> Self {
        TileGrid {
            tiles_x: width.div_ceil(TILE),
            tiles_y: height.div_ceil(TILE),
            width,
            height,
        }
    }

    pub fn tile_count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    /// Pixel bounds (x0, y0, x1, y1) of tile `t`, exclusive upper.
    pub fn tile_bounds(&self, t: usize) -> (usize, usize, usize, usize) {
        let tx = t % self.tiles_x;
        let ty = t / self.tiles_x;
        let x0 = tx * TILE;
        let y0 = ty * TILE;
        (x0, y0, (x0 + TILE).min(self.width), (y0 + TILE).min(self.height))
    }

    pub fn tile_of(&self, x: f64, y: f64) -> Option<usize> {
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        Some((y as usize / TILE) * self.tiles_x + x as usize / TILE)
    }

    /// Bin item bboxes (in pixel coordinates, inflated by `margin`)
    /// into per-tile index lists.
    pub fn bin_bboxes(&self, bboxes: &[(f64, f64, f64, f64)], margin: f64) -> Vec<Vec<u32>> {
        let mut bins = vec![Vec::new(); self.tile_count()];
        for (i, &(min_x, min_y, max_x, max_y)) in bboxes.iter().enumerate() {
            if !min_x.is_finite() {
                continue;
            }
            let x0 = ((min_x - margin).floor().max(0.0) as usize) / TILE;
            let y0 = ((min_y - margin).floor().max(0.0) as usize) / TILE;
            let x1 = (max_x + margin).ceil().min((self.width - 1) as f64) as usize / TILE;
            let y1 = (max_y + margin).ceil().min((self.height - 1) as f64) as usize / TILE;
            if (min_x - margin) > (self.width as f64) || (min_y - margin) > (self.height as f64) {
                continue;
            }
            if (max_x + margin) < 0.0 || (max_y + margin) < 0.0 {
                continue;
            }
            for ty in y0..=y1.min(self.tiles_y - 1) {
                for tx in x0..=x1.min(self.tiles_x - 1) {
                    bins[ty * self.tiles_x + tx].push(i as u32);
                }
            }
        }
        bins
    }
}
