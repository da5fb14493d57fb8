//! Soft silhouette: sigmoid of the signed 2D distance to the boundary
//! of the union of projected faces, positive inside.

use nalgebra::Vector2;

use crate::camera::Camera;
use crate::error::Result;
use crate::image::MaskImage;
use crate::mesh::TriMesh;
use crate::par;

use super::raster::{rasterize, Raster};
use super::{barycentric, inside, project_mesh, Projection, TileGrid};

pub const DEFAULT_SHARPNESS: f64 = 50.0;

/// Distances are searched at least this far (pixels) from every edge,
/// so near-boundary pixels always carry gradients even when the
/// sigmoid's own 3-sigma band is sub-pixel.
const MIN_BAND_PX: f64 = 3.0;

/// Offset (pixels) of the coverage probe that rejects interior edges.
const PROBE_STEP_PX: f64 = 0.35;

#[derive(Debug, Clone, Copy)]
pub(crate) struct SilRecord {
    pub pixel: u32,
    /// Global vertex indices of the boundary edge this pixel latched to.
    pub va: u32,
    pub vb: u32,
    /// +1 covered, -1 uncovered; frozen at forward time.
    pub sign: i8,
    /// Frozen foot-parameter regime: -1 clamped at `va`, 0 interior,
    /// +1 clamped at `vb`. Freezing it keeps the frozen-assignment
    /// distance smooth under perturbation.
    pub t_state: i8,
}

#[inline]
pub(crate) fn foot_param_raw(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let seg = b - a;
    let len2 = seg.norm_squared();
    if len2 < 1e-24 {
        0.0
    } else {
        (p - a).dot(&seg) / len2
    }
}

/// Distance under a frozen clamp regime; interior regimes measure to the
/// infinite line, clamped regimes to the endpoint.
#[inline]
pub(crate) fn distance_with_state(
    p: Vector2<f64>,
    a: Vector2<f64>,
    b: Vector2<f64>,
    t_state: i8,
) -> (f64, f64) {
    let t = match t_state {
        -1 => 0.0,
        1 => 1.0,
        _ => foot_param_raw(p, a, b),
    };
    let q = a + (b - a) * t;
    ((p - q).norm(), t)
}

/// Frozen per-pixel edge choices of one silhouette forward pass.
#[derive(Debug, Clone)]
pub struct SilhouetteAssignment {
    pub(crate) topology_id: u64,
    pub(crate) width: usize,
    pub(crate) records: Vec<SilRecord>,
}

impl SilhouetteAssignment {
    pub fn record_count(&self) -> usize {
        self.records.len()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Distance from p to segment (a, b) plus the clamped foot parameter.
#[inline]
pub(crate) fn point_segment(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> (f64, f64) {
    let seg = b - a;
    let len2 = seg.norm_squared();
    let t = if len2 < 1e-24 { 0.0 } else { ((p - a).dot(&seg) / len2).clamp(0.0, 1.0) };
    let q = a + seg * t;
    ((p - q).norm(), t)
}

fn point_covered(
    point: Vector2<f64>,
    grid: &TileGrid,
    face_bins: &[Vec<u32>],
    faces: &[[u32; 3]],
    proj: &Projection,
) -> bool {
    let Some(tile) = grid.tile_of(point.x, point.y) else { return false };
    for &fi in &face_bins[tile] {
        let f = faces[fi as usize];
        if let Some(bc) = barycentric(
            point,
            proj.pix[f[0] as usize],
            proj.pix[f[1] as usize],
            proj.pix[f[2] as usize],
        ) {
            if inside(&bc) {
                return true;
            }
        }
    }
    false
}

/// Unique undirected edges of the valid faces, as global vertex pairs.
fn silhouette_edges(mesh: &TriMesh, proj: &Projection) -> Vec<(u32, u32)> {
    let mut edges = Vec::with_capacity(mesh.face_count() * 3);
    for (fi, f) in mesh.faces().iter().enumerate() {
        if !proj.face_valid[fi] {
            continue;
        }
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

pub(crate) struct SilhouetteOutput {
    pub mask: MaskImage,
    pub assignment: SilhouetteAssignment,
}

pub(crate) fn silhouette_from_raster(
    mesh: &TriMesh,
    sharpness: f64,
    proj: &Projection,
    raster: &Raster,
) -> SilhouetteOutput {
    assert!(sharpness > 0.0, "sharpness must be positive");
    let band = (3.0 / sharpness).max(MIN_BAND_PX);
    let grid = &raster.grid;
    let faces = mesh.faces();

    let edges = silhouette_edges(mesh, proj);
    let edge_bboxes: Vec<(f64, f64, f64, f64)> = edges
        .iter()
        .map(|&(a, b)| {
            let pa = proj.pix[a as usize];
            let pb = proj.pix[b as usize];
            (pa.x.min(pb.x), pa.y.min(pb.y), pa.x.max(pb.x), pa.y.max(pb.y))
        })
        .collect();
    let edge_bins = grid.bin_bboxes(&edge_bboxes, band + 0.5);

    struct TileOut {
        values: Vec<f32>,
        records: Vec<SilRecord>,
    }

    let tiles: Vec<TileOut> = par::map_indexed(grid.tile_count(), |t| {
        let (x0, y0, x1, y1) = grid.tile_bounds(t);
        let tw = x1 - x0;
        let mut values = vec![0.0f32; tw * (y1 - y0)];
        let mut records = Vec::new();
        let mut candidates: Vec<(f64, u32, f64)> = Vec::new();

        for py in y0..y1 {
            for px in x0..x1 {
                let pidx = py * grid.width + px;
                let covered = raster.face_id[pidx] >= 0;
                let p = Vector2::new(px as f64 + 0.5, py as f64 + 0.5);

                candidates.clear();
                for &ei in &edge_bins[t] {
                    let (a, b) = edges[ei as usize];
                    let (d, tt) = point_segment(p, proj.pix[a as usize], proj.pix[b as usize]);
                    if d <= band {
                        candidates.push((d, ei, tt));
                    }
                }
                candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

                let mut chosen: Option<(f64, u32)> = None;
                for &(d, ei, tt) in &candidates {
                    if covered {
                        // Reject edges that are interior to the union: step
                        // off the foot point away from the pixel and check
                        // whether that side is still covered.
                        let (a, b) = edges[ei as usize];
                        let pa = proj.pix[a as usize];
                        let pb = proj.pix[b as usize];
                        let q = pa + (pb - pa) * tt;
                        let to_pixel = p - q;
                        let valid = if to_pixel.norm() > 1e-9 {
                            let out = q - to_pixel.normalize() * PROBE_STEP_PX;
                            !point_covered(out, grid, &raster.face_bins, faces, proj)
                        } else {
                            // Pixel center on the edge: boundary if either
                            // perpendicular side is uncovered.
                            let seg = pb - pa;
                            let perp = if seg.norm() > 1e-12 {
                                Vector2::new(-seg.y, seg.x).normalize()
                            } else {
                                Vector2::new(1.0, 0.0)
                            };
                            !point_covered(q + perp * PROBE_STEP_PX, grid, &raster.face_bins, faces, proj)
                                || !point_covered(q - perp * PROBE_STEP_PX, grid, &raster.face_bins, faces, proj)
                        };
                        if !valid {
                            continue;
                        }
                    }
                    chosen = Some((d, ei));
                    break;
                }

                let idx = (py - y0) * tw + (px - x0);
                match chosen {
                    Some((d, ei)) => {
                        let signed = if covered { d } else { -d };
                        values[idx] = sigmoid(sharpness * signed) as f32;
                        let (a, b) = edges[ei as usize];
                        let t_raw = foot_param_raw(p, proj.pix[a as usize], proj.pix[b as usize]);
                        let t_state = if t_raw <= 0.0 {
                            -1
                        } else if t_raw >= 1.0 {
                            1
                        } else {
                            0
                        };
                        records.push(SilRecord {
                            pixel: pidx as u32,
                            va: a,
                            vb: b,
                            sign: if covered { 1 } else { -1 },
                            t_state,
                        });
                    }
                    None => {
                        values[idx] = if covered { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        TileOut { values, records }
    });

    let mut mask = MaskImage::zeros(grid.width, grid.height);
    let mut records = Vec::new();
    for (t, tile) in tiles.into_iter().enumerate() {
        let (x0, y0, x1, y1) = grid.tile_bounds(t);
        let tw = x1 - x0;
        for py in y0..y1 {
            for px in x0..x1 {
                mask.set(px, py, tile.values[(py - y0) * tw + (px - x0)]);
            }
        }
        records.extend(tile.records);
    }

    SilhouetteOutput {
        mask,
        assignment: SilhouetteAssignment {
            topology_id: mesh.topology_id(),
            width: grid.width,
            records,
        },
    }
}

/// Soft coverage of the mesh's projection. Values head to 1 deep inside
/// the union of projected faces and 0 far outside; a pixel whose center
/// sits exactly on the silhouette boundary reads 0.5.
pub fn render_silhouette(
    mesh: &TriMesh,
    camera: &Camera,
    sharpness: f64,
) -> Result<(MaskImage, SilhouetteAssignment)> {
    let proj = project_mesh(mesh, camera)?;
    let raster = rasterize(mesh, camera, &proj);
    let out = silhouette_from_raster(mesh, sharpness, &proj, &raster);
    Ok((out.mask, out.assignment))
}

/// Re-evaluate a silhouette under a frozen assignment: every recorded
/// pixel recomputes its distance against the same edge and keeps its
/// coverage sign; all other pixels keep their `base` value. The
/// analytic backward pass differentiates exactly this function; it runs
/// in f64 so finite-difference checks see no storage quantization.
pub fn silhouette_with_assignment(
    mesh: &TriMesh,
    camera: &Camera,
    sharpness: f64,
    assignment: &SilhouetteAssignment,
    base: &MaskImage,
) -> Result<Vec<f64>> {
    if assignment.topology_id != mesh.topology_id() {
        return Err(crate::error::CoreError::StaleAssignment);
    }
    let proj = project_mesh(mesh, camera)?;
    let mut mask: Vec<f64> = base.pixels().iter().map(|&v| v as f64).collect();
    let w = assignment.width;
    for rec in &assignment.records {
        let (px, py) = (rec.pixel as usize % w, rec.pixel as usize / w);
        let p = Vector2::new(px as f64 + 0.5, py as f64 + 0.5);
        let (d, _) = distance_with_state(
            p,
            proj.pix[rec.va as usize],
            proj.pix[rec.vb as usize],
            rec.t_state,
        );
        let signed = d * rec.sign as f64;
        mask[rec.pixel as usize] = sigmoid(sharpness * signed);
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_value_is_nearly_one_at_high_sharpness() {
        let camera = Camera::frontal(64, 64.0);
        // Projected triangle ~36 px across; centroid far from edges.
        let mesh = TriMesh::new(
            vec![[-0.5, -0.5, 2.0], [0.5, -0.5, 2.0], [0.0, 0.6, 2.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let (mask, _) = render_silhouette(&mesh, &camera, 50.0).unwrap();
        // Centroid in pixels: camera maps (0, ~ -0.067) -> (32, ~30).
        assert!(mask.get(32, 30) > 0.99);
    }

    #[test]
    fn pixel_on_silhouette_edge_reads_half() {
        let camera = Camera::frontal(16, 16.0);
        // Vertical right edge exactly through x = 10.5 px = camera
        // x-coordinate (10.5 - 8) / 16 * z at z=2 -> world x = 0.3125.
        let x_world = (10.5 - 8.0) / 16.0 * 2.0;
        let mesh = TriMesh::new(
            vec![
                [-2.0, -2.0, 2.0],
                [x_world, -2.0, 2.0],
                [x_world, 2.0, 2.0],
                [-2.0, 2.0, 2.0],
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let (mask, _) = render_silhouette(&mesh, &camera, 50.0).unwrap();
        for y in 4..12 {
            let v = mask.get(10, y);
            assert!((v - 0.5).abs() <= 1e-3, "pixel (10,{y}) = {v}");
        }
    }

    #[test]
    fn deep_interior_is_one_despite_interior_edges() {
        let camera = Camera::frontal(64, 64.0);
        // Two abutting triangles forming a quad: the shared diagonal is
        // an interior edge and must not pull values below 1 deep inside.
        let mesh = TriMesh::new(
            vec![[-2.0, -2.0, 2.0], [2.0, -2.0, 2.0], [2.0, 2.0, 2.0], [-2.0, 2.0, 2.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let (mask, _) = render_silhouette(&mesh, &camera, 50.0).unwrap();
        // Pixels on the diagonal, far from the outer boundary.
        for t in 20..44 {
            let v = mask.get(t, t);
            assert!(v > 0.999, "diagonal pixel {t} = {v}");
        }
    }

    #[test]
    fn monotone_in_sharpness() {
        let camera = Camera::frontal(48, 48.0);
        let mesh = TriMesh::new(
            vec![[-0.4, -0.4, 2.0], [0.4, -0.4, 2.0], [0.0, 0.5, 2.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let sharps = [2.0, 5.0, 10.0, 50.0];
        let masks: Vec<MaskImage> = sharps
            .iter()
            .map(|&s| render_silhouette(&mesh, &camera, s).unwrap().0)
            .collect();
        let (hard, _) = render_silhouette(&mesh, &camera, 1e4).unwrap();
        for w in masks.windows(2) {
            for i in 0..48 * 48 {
                let (lo, hi) = (w[0].pixels()[i], w[1].pixels()[i]);
                let covered = hard.pixels()[i] > 0.5;
                if covered {
                    assert!(hi >= lo - 1e-6, "interior pixel {i} fell: {lo} -> {hi}");
                } else {
                    assert!(hi <= lo + 1e-6, "exterior pixel {i} rose: {lo} -> {hi}");
                }
            }
        }
    }

    #[test]
    fn threshold_agrees_with_bruteforce_coverage() {
        // Box (cube faces that face the camera) vs an independent
        // point-in-triangle rasterization.
        let camera = Camera::frontal(96, 96.0);
        let mut verts = Vec::new();
        let mut faces = Vec::new();
        // A cube with corners (+-0.5) at z in [1.5, 2.5], all 12 faces.
        let corners = [
            [-0.5, -0.5, 1.5],
            [0.5, -0.5, 1.5],
            [0.5, 0.5, 1.5],
            [-0.5, 0.5, 1.5],
            [-0.5, -0.5, 2.5],
            [0.5, -0.5, 2.5],
            [0.5, 0.5, 2.5],
            [-0.5, 0.5, 2.5],
        ];
        verts.extend_from_slice(&corners);
        let quads = [
            [0, 1, 2, 3],
            [4, 5, 6, 7],
            [0, 1, 5, 4],
            [2, 3, 7, 6],
            [0, 3, 7, 4],
            [1, 2, 6, 5],
        ];
        for q in quads {
            faces.push([q[0], q[1], q[2]]);
            faces.push([q[0], q[2], q[3]]);
        }
        let mesh = TriMesh::new(verts, faces).unwrap();
        let (mask, _) = render_silhouette(&mesh, &camera, 50.0).unwrap();

        // Oracle: brute-force coverage at pixel centers.
        let mut inter = 0usize;
        let mut union = 0usize;
        for y in 0..96 {
            for x in 0..96 {
                let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                let mut covered = false;
                'f: for f in mesh.faces() {
                    let proj: Vec<Vector2<f64>> = f
                        .iter()
                        .map(|&i| {
                            let c = camera.to_camera(&nalgebra::Vector3::new(
                                mesh.vertices()[i as usize][0],
                                mesh.vertices()[i as usize][1],
                                mesh.vertices()[i as usize][2],
                            ));
                            camera.project(&c)
                        })
                        .collect();
                    if let Some(bc) = barycentric(p, proj[0], proj[1], proj[2]) {
                        if inside(&bc) {
                            covered = true;
                            break 'f;
                        }
                    }
                }
                let soft = mask.get(x, y) > 0.5;
                if covered && soft {
                    inter += 1;
                }
                if covered || soft {
                    union += 1;
                }
            }
        }
        let iou = inter as f64 / union as f64;
        assert!(iou >= 0.98, "IoU {iou}");
    }
}
