//! Adjoint passes: image-space loss gradients back to vertex positions.
//!
//! Visibility is frozen (the pixel -> face / pixel -> edge assignment is
//! an input); the chain rule runs through barycentric weights, vertex
//! normal fields, the normalization, the projection and the extrinsics.

use nalgebra::{Vector2, Vector3};

use crate::camera::Camera;
use crate::error::{CoreError, Result};
use crate::mesh::TriMesh;
use crate::par;

use super::raster::{camera_vertex_normals, NormalAssignment};
use super::silhouette::{distance_with_state, SilhouetteAssignment};
use super::{RenderGrad, TileGrid};

/// Barycentrics of `p` in (a, b, c) plus all partials d b_t / d vertex.
/// Returns None for degenerate projections.
fn bary_with_derivatives(
    p: Vector2<f64>,
    a: Vector2<f64>,
    b: Vector2<f64>,
    c: Vector2<f64>,
) -> Option<([f64; 3], [[Vector2<f64>; 3]; 3])> {
    let denom = super::cross2(b - a, c - a);
    if denom.abs() < 1e-14 {
        return None;
    }
    let n0 = super::cross2(b - p, c - p);
    let n1 = super::cross2(c - p, a - p);
    let n2 = super::cross2(a - p, b - p);
    let bary = [n0 / denom, n1 / denom, n2 / denom];

    let grad_d = [
        Vector2::new(b.y - c.y, c.x - b.x),
        Vector2::new(c.y - a.y, a.x - c.x),
        Vector2::new(a.y - b.y, b.x - a.x),
    ];
    // d n_t / d vertex_v; zero where the numerator does not involve v.
    let zero = Vector2::zeros();
    let dn = [
        [zero, Vector2::new(c.y - p.y, -(c.x - p.x)), Vector2::new(-(b.y - p.y), b.x - p.x)],
        [Vector2::new(-(c.y - p.y), c.x - p.x), zero, Vector2::new(a.y - p.y, -(a.x - p.x))],
        [Vector2::new(b.y - p.y, -(b.x - p.x)), Vector2::new(-(a.y - p.y), a.x - p.x), zero],
    ];

    let mut deriv = [[zero; 3]; 3];
    for t in 0..3 {
        for v in 0..3 {
            deriv[t][v] = (dn[t][v] - grad_d[v] * bary[t]) / denom;
        }
    }
    Some((bary, deriv))
}

/// Backpropagate a normal-pass adjoint image to vertex positions.
///
/// `adjoint` is dL/d(stored normal) per pixel, dimensioned like the
/// forward image. The per-pixel face assignment and orientation signs
/// come from the forward pass and are held fixed.
pub fn backprop_normal_image(
    adjoint: &[[f64; 3]],
    assignment: &NormalAssignment,
    mesh: &TriMesh,
    camera: &Camera,
) -> Result<RenderGrad> {
    if assignment.topology_id != mesh.topology_id() {
        return Err(CoreError::StaleAssignment);
    }
    let npx = assignment.width * assignment.height;
    if adjoint.len() != npx {
        return Err(CoreError::DimensionMismatch {
            expected: npx,
            actual: adjoint.len(),
            context: "normal adjoint image".into(),
        });
    }

    let proj = super::project_mesh(mesh, camera)?;
    let cam_normals = camera_vertex_normals(mesh, camera);
    let sums = mesh.vertex_normal_sums();
    let grid = TileGrid::new(assignment.width, assignment.height);
    let rot_t = camera.rotation().transpose();

    type Entry = (u32, Vector3<f64>);
    struct TileOut {
        pos: Vec<Entry>,
        normal_adj: Vec<Entry>,
    }

    let tiles: Vec<TileOut> = par::map_indexed(grid.tile_count(), |t| {
        let (x0, y0, x1, y1) = grid.tile_bounds(t);
        let mut pos: Vec<Entry> = Vec::new();
        let mut normal_adj: Vec<Entry> = Vec::new();
        for py in y0..y1 {
            for px in x0..x1 {
                let idx = py * assignment.width + px;
                let fi = assignment.face_id[idx];
                if fi < 0 {
                    continue;
                }
                let adj = Vector3::new(adjoint[idx][0], adjoint[idx][1], adjoint[idx][2]);
                if adj == Vector3::zeros() {
                    continue;
                }
                let f = mesh.faces()[fi as usize];
                let (ia, ib, ic) = (f[0] as usize, f[1] as usize, f[2] as usize);
                let p = Vector2::new(px as f64 + 0.5, py as f64 + 0.5);
                let Some((bary, dbary)) =
                    bary_with_derivatives(p, proj.pix[ia], proj.pix[ib], proj.pix[ic])
                else {
                    continue;
                };

                let n = [cam_normals[ia], cam_normals[ib], cam_normals[ic]];
                let w = n[0] * bary[0] + n[1] * bary[1] + n[2] * bary[2];
                let norm = w.norm();
                if norm < 1e-12 {
                    continue;
                }
                let w_hat = w / norm;
                // stored = -sign * w_hat
                let sign = assignment.sign[idx] as f64;
                let d_what = -adj * sign;
                let d_w = (d_what - w_hat * w_hat.dot(&d_what)) / norm;

                // Through the barycentric weights.
                let db = [n[0].dot(&d_w), n[1].dot(&d_w), n[2].dot(&d_w)];
                for (v, &iv) in [ia, ib, ic].iter().enumerate() {
                    let mut du = Vector2::zeros();
                    for t in 0..3 {
                        du += dbary[t][v] * db[t];
                    }
                    let d_cam = camera.project_adjoint(&proj.cam[iv], &du);
                    pos.push((iv as u32, rot_t * d_cam));
                }
                // Through the vertex normals (resolved in stage B).
                for (t, &iv) in [ia, ib, ic].iter().enumerate() {
                    normal_adj.push((iv as u32, d_w * bary[t]));
                }
            }
        }
        TileOut { pos, normal_adj }
    });

    let mut grad = RenderGrad::zeros(mesh.vertex_count());
    let mut n_adj = vec![Vector3::<f64>::zeros(); mesh.vertex_count()];
    for tile in &tiles {
        for &(v, g) in &tile.pos {
            grad.add(v as usize, g);
        }
        for &(v, g) in &tile.normal_adj {
            n_adj[v as usize] += g;
        }
    }

    // Stage B: vertex-normal adjoints back through normalization and the
    // area-weighted cross-product accumulation.
    let mut s_adj = vec![Vector3::<f64>::zeros(); mesh.vertex_count()];
    for i in 0..mesh.vertex_count() {
        if n_adj[i] == Vector3::zeros() {
            continue;
        }
        let norm = sums[i].norm();
        if norm < 1e-30 {
            continue;
        }
        let n_world = sums[i] / norm;
        // cam normal = R * n_world
        let d_nworld = rot_t * n_adj[i];
        s_adj[i] = (d_nworld - n_world * n_world.dot(&d_nworld)) / norm;
    }
    let verts = mesh.vertices();
    for f in mesh.faces() {
        let (ia, ib, ic) = (f[0] as usize, f[1] as usize, f[2] as usize);
        let g_c = s_adj[ia] + s_adj[ib] + s_adj[ic];
        if g_c == Vector3::zeros() {
            continue;
        }
        let pa = crate::mesh::v3(verts[ia]);
        let pb = crate::mesh::v3(verts[ib]);
        let pc = crate::mesh::v3(verts[ic]);
        let u = pb - pa;
        let v = pc - pa;
        // c = u x v ; dL/du = v x g, dL/dv = g x u
        let du = v.cross(&g_c);
        let dv = g_c.cross(&u);
        grad.add(ib, du);
        grad.add(ic, dv);
        grad.add(ia, -(du + dv));
    }

    grad.assert_finite()?;
    Ok(grad)
}

/// Backpropagate a silhouette adjoint image to vertex positions.
///
/// `adjoint` is dL/d(mask value) per pixel. Gradients exist only at the
/// pixels recorded by the forward pass; clamped pixels contribute zero by
/// construction.
pub fn backprop_silhouette(
    adjoint: &[f64],
    assignment: &SilhouetteAssignment,
    mesh: &TriMesh,
    camera: &Camera,
    sharpness: f64,
) -> Result<RenderGrad> {
    if assignment.topology_id != mesh.topology_id() {
        return Err(CoreError::StaleAssignment);
    }
    let proj = super::project_mesh(mesh, camera)?;
    let rot_t = camera.rotation().transpose();
    let mut grad = RenderGrad::zeros(mesh.vertex_count());

    let w = assignment.width;
    for rec in &assignment.records {
        let pix_adj = adjoint[rec.pixel as usize];
        if pix_adj == 0.0 {
            continue;
        }
        let (px, py) = (rec.pixel as usize % w, rec.pixel as usize / w);
        let p = Vector2::new(px as f64 + 0.5, py as f64 + 0.5);
        let (ia, ib) = (rec.va as usize, rec.vb as usize);
        let a2 = proj.pix[ia];
        let b2 = proj.pix[ib];
        let (d, t) = distance_with_state(p, a2, b2, rec.t_state);
        if d < 1e-12 {
            continue;
        }
        let signed = d * rec.sign as f64;
        let v = 1.0 / (1.0 + (-sharpness * signed).exp());
        let dv_dd = sharpness * rec.sign as f64 * v * (1.0 - v);
        let dd = pix_adj * dv_dd;

        let q = a2 + (b2 - a2) * t;
        let unit = (p - q) / d;
        // d(dist)/d(a2) = -(1 - t) * unit, d(dist)/d(b2) = -t * unit
        let da2 = -unit * (1.0 - t) * dd;
        let db2 = -unit * t * dd;
        let ga = camera.project_adjoint(&proj.cam[ia], &da2);
        let gb = camera.project_adjoint(&proj.cam[ib], &db2);
        grad.add(ia, rot_t * ga);
        grad.add(ib, rot_t * gb);
    }

    grad.assert_finite()?;
    Ok(grad)
}
