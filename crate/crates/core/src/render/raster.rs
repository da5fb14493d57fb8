//! Hard z-buffered rasterization of camera-space normals.

use nalgebra::{Vector2, Vector3};

use crate::camera::Camera;
use crate::error::{CoreError, Result};
use crate::image::NormalImage;
use crate::mesh::TriMesh;
use crate::par;

use super::{barycentric, inside, project_mesh, Projection, TileGrid};

/// Everything the backward pass needs to re-walk the forward pixels:
/// which face won each pixel and the orientation sign that was applied
/// to its interpolated normal. Barycentrics are recomputed during
/// backprop from the same mesh.
#[derive(Debug, Clone)]
pub struct NormalAssignment {
    pub(crate) topology_id: u64,
    pub(crate) width: usize,
    pub(crate) height: usize,
    /// -1 for background.
    pub(crate) face_id: Vec<i32>,
    pub(crate) sign: Vec<i8>,
}

impl NormalAssignment {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn face_at(&self, x: usize, y: usize) -> Option<usize> {
        let f = self.face_id[y * self.width + x];
        (f >= 0).then_some(f as usize)
    }

    pub fn covered_count(&self) -> usize {
        self.face_id.iter().filter(|&&f| f >= 0).count()
    }
}

/// Shared hard-visibility buffers: winning face, barycentrics and depth
/// per pixel, plus the per-tile face bins (reused by probes).
pub(crate) struct Raster {
    pub grid: TileGrid,
    pub face_id: Vec<i32>,
    pub bary: Vec<[f64; 3]>,
    pub face_bins: Vec<Vec<u32>>,
}

pub(crate) fn rasterize(mesh: &TriMesh, camera: &Camera, proj: &Projection) -> Raster {
    let grid = TileGrid::new(camera.width, camera.height);
    let faces = mesh.faces();

    let bboxes: Vec<(f64, f64, f64, f64)> = faces
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            if !proj.face_valid[fi] {
                return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
            }
            let pts = [
                proj.pix[f[0] as usize],
                proj.pix[f[1] as usize],
                proj.pix[f[2] as usize],
            ];
            let min_x = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
            let min_y = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
            let max_x = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
            let max_y = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
            (min_x, min_y, max_x, max_y)
        })
        .collect();
    let face_bins = grid.bin_bboxes(&bboxes, 0.5);

    struct TileOut {
        face_id: Vec<i32>,
        bary: Vec<[f64; 3]>,
    }

    let tiles: Vec<TileOut> = par::map_indexed(grid.tile_count(), |t| {
        let (x0, y0, x1, y1) = grid.tile_bounds(t);
        let (tw, th) = (x1 - x0, y1 - y0);
        let mut face_id = vec![-1i32; tw * th];
        let mut bary = vec![[0.0f64; 3]; tw * th];
        let mut depth = vec![f64::INFINITY; tw * th];

        // Bins are built in ascending face order, so ties resolve to the
        // lowest face index deterministically.
        for &fi in &face_bins[t] {
            let f = faces[fi as usize];
            let a = proj.pix[f[0] as usize];
            let b = proj.pix[f[1] as usize];
            let c = proj.pix[f[2] as usize];
            let za = proj.cam[f[0] as usize].z;
            let zb = proj.cam[f[1] as usize].z;
            let zc = proj.cam[f[2] as usize].z;

            let fx0 = a.x.min(b.x).min(c.x).floor().max(x0 as f64) as usize;
            let fy0 = a.y.min(b.y).min(c.y).floor().max(y0 as f64) as usize;
            let fx1 = (a.x.max(b.x).max(c.x).ceil() as usize).min(x1);
            let fy1 = (a.y.max(b.y).max(c.y).ceil() as usize).min(y1);

            for py in fy0..fy1 {
                for px in fx0..fx1 {
                    let p = Vector2::new(px as f64 + 0.5, py as f64 + 0.5);
                    let Some(bc) = barycentric(p, a, b, c) else { continue };
                    if !inside(&bc) {
                        continue;
                    }
                    let z = bc[0] * za + bc[1] * zb + bc[2] * zc;
                    let idx = (py - y0) * tw + (px - x0);
                    if z < depth[idx] {
                        depth[idx] = z;
                        face_id[idx] = fi as i32;
                        bary[idx] = bc;
                    }
                }
            }
        }
        TileOut { face_id, bary }
    });

    let npx = camera.width * camera.height;
    let mut face_id = vec![-1i32; npx];
    let mut bary = vec![[0.0f64; 3]; npx];
    for (t, tile) in tiles.iter().enumerate() {
        let (x0, y0, x1, y1) = grid.tile_bounds(t);
        let tw = x1 - x0;
        for py in y0..y1 {
            let src = (py - y0) * tw;
            let dst = py * camera.width + x0;
            face_id[dst..dst + tw].copy_from_slice(&tile.face_id[src..src + tw]);
            bary[dst..dst + tw].copy_from_slice(&tile.bary[src..src + tw]);
        }
    }

    Raster { grid, face_id, bary, face_bins }
}

/// Unit camera-space vertex normals with a zero fallback for vertices
/// whose incident face normals cancel (those pixels drop to background).
pub(crate) fn camera_vertex_normals(mesh: &TriMesh, camera: &Camera) -> Vec<Vector3<f64>> {
    mesh.vertex_normal_sums()
        .into_iter()
        .map(|s| {
            let n = s.norm();
            if n < 1e-30 {
                Vector3::zeros()
            } else {
                camera.rotation() * (s / n)
            }
        })
        .collect()
}

/// Hard z-buffered render of interpolated camera-space normals.
///
/// Stored normals use the viewer convention (+z toward the camera);
/// back-facing fragments are flipped, so open surfaces read the same
/// from both sides.
pub fn render_normals(mesh: &TriMesh, camera: &Camera) -> Result<(NormalImage, NormalAssignment)> {
    let proj = project_mesh(mesh, camera)?;
    let raster = rasterize(mesh, camera, &proj);
    Ok(normals_from_raster(mesh, camera, &raster))
}

pub(crate) fn normals_from_raster(
    mesh: &TriMesh,
    camera: &Camera,
    raster: &Raster,
) -> (NormalImage, NormalAssignment) {
    let cam_normals = camera_vertex_normals(mesh, camera);

    let mut img = NormalImage::zeros(camera.width, camera.height);
    let mut sign = vec![0i8; camera.width * camera.height];
    let mut face_id = raster.face_id.clone();

    for y in 0..camera.height {
        for x in 0..camera.width {
            let idx = y * camera.width + x;
            let fi = face_id[idx];
            if fi < 0 {
                continue;
            }
            let f = mesh.faces()[fi as usize];
            let bc = raster.bary[idx];
            let w = cam_normals[f[0] as usize] * bc[0]
                + cam_normals[f[1] as usize] * bc[1]
                + cam_normals[f[2] as usize] * bc[2];
            let norm = w.norm();
            if norm < 1e-12 {
                face_id[idx] = -1;
                continue;
            }
            let w_hat = w / norm;
            let ray = camera.ray_dir(x as f64 + 0.5, y as f64 + 0.5);
            let s: f64 = if w_hat.dot(&ray) <= 0.0 { 1.0 } else { -1.0 };
            // Oriented toward the camera, then negated into the viewer frame.
            let m = -(w_hat * s);
            img.set(x, y, [m.x as f32, m.y as f32, m.z as f32]);
            sign[idx] = s as i8;
        }
    }

    let assignment = NormalAssignment {
        topology_id: mesh.topology_id(),
        width: camera.width,
        height: camera.height,
        face_id,
        sign,
    };
    (img, assignment)
}

/// Re-evaluate the stored normals under a frozen assignment: same
/// per-pixel face and orientation sign, barycentrics and normals
/// recomputed from the given (possibly perturbed) mesh. This is the
/// function the analytic backward pass differentiates, and what
/// finite-difference checks must probe; it stays in f64 so difference
/// quotients are not polluted by storage quantization.
pub fn normals_with_assignment(
    mesh: &TriMesh,
    camera: &Camera,
    assignment: &NormalAssignment,
) -> Result<Vec<[f64; 3]>> {
    if assignment.topology_id != mesh.topology_id() {
        return Err(CoreError::StaleAssignment);
    }
    let proj = project_mesh(mesh, camera)?;
    let cam_normals = camera_vertex_normals(mesh, camera);
    let mut img = vec![[0.0f64; 3]; assignment.width * assignment.height];
    for y in 0..assignment.height {
        for x in 0..assignment.width {
            let idx = y * assignment.width + x;
            let fi = assignment.face_id[idx];
            if fi < 0 {
                continue;
            }
            let f = mesh.faces()[fi as usize];
            let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let Some(bc) = barycentric(
                p,
                proj.pix[f[0] as usize],
                proj.pix[f[1] as usize],
                proj.pix[f[2] as usize],
            ) else {
                continue;
            };
            let w = cam_normals[f[0] as usize] * bc[0]
                + cam_normals[f[1] as usize] * bc[1]
                + cam_normals[f[2] as usize] * bc[2];
            let norm = w.norm();
            if norm < 1e-12 {
                continue;
            }
            let m = -(w / norm) * assignment.sign[idx] as f64;
            img[idx] = [m.x, m.y, m.z];
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big_triangle(z: f64) -> TriMesh {
        // Covers the whole image at depth z for a frontal camera.
        TriMesh::new(
            vec![[-10.0, -10.0, z], [10.0, -10.0, z], [0.0, 10.0, z]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn fronto_parallel_triangle_reads_plus_z() {
        let camera = Camera::frontal(64, 64.0);
        let (img, assign) = render_normals(&big_triangle(2.0), &camera).unwrap();
        assert_eq!(assign.covered_count(), 64 * 64);
        for y in 0..64 {
            for x in 0..64 {
                let n = img.get(x, y);
                assert!((n[0]).abs() < 1e-6 && (n[1]).abs() < 1e-6);
                assert!((n[2] - 1.0).abs() < 1e-6, "pixel ({x},{y}) z: {}", n[2]);
            }
        }
        img.validate().unwrap();
    }

    #[test]
    fn winding_does_not_change_stored_normal() {
        let camera = Camera::frontal(32, 32.0);
        let flipped = TriMesh::new(
            vec![[-10.0, -10.0, 2.0], [10.0, -10.0, 2.0], [0.0, 10.0, 2.0]],
            vec![[0, 2, 1]],
        )
        .unwrap();
        let (img, _) = render_normals(&flipped, &camera).unwrap();
        let n = img.get(16, 16);
        assert!((n[2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn z_buffer_keeps_nearer_face() {
        let camera = Camera::frontal(64, 64.0);
        // Far face fronto-parallel at z=2; near face tilted at z~1.
        let mut verts = big_triangle(2.0).vertices().to_vec();
        verts.extend_from_slice(&[[-10.0, -10.0, 1.0], [10.0, -10.0, 1.0], [0.0, 10.0, 1.2]]);
        let mesh = TriMesh::new(verts, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let (img, assign) = render_normals(&mesh, &camera).unwrap();
        assert_eq!(assign.face_at(32, 32), Some(1));
        let n = img.get(32, 32);
        // Tilted face: stored normal is not exactly +z but close.
        assert!(n[2] > 0.9 && n[2] < 1.0 - 1e-9);
    }

    #[test]
    fn mesh_behind_camera_errors() {
        let camera = Camera::frontal(16, 16.0);
        let err = render_normals(&big_triangle(-1.0), &camera).unwrap_err();
        assert!(matches!(err, CoreError::MeshBehindCamera));
    }

    #[test]
    fn rendered_normals_are_unit_length() {
        // A slanted quad: interpolated normals stay unit because all
        // vertex normals agree; a curved mesh exercises normalization.
        let camera = Camera::frontal(48, 48.0);
        let mesh = TriMesh::new(
            vec![
                [-5.0, -5.0, 2.0],
                [5.0, -5.0, 2.6],
                [5.0, 5.0, 3.0],
                [-5.0, 5.0, 2.2],
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let (img, _) = render_normals(&mesh, &camera).unwrap();
        img.validate().unwrap();
    }
}
