//! Procedural demo assets: a tube-shaped garment with a joint chain,
//! deformation corpora for subspace fitting, and a watertight body
//! sphere. Used by tests, benches and the asset-generation example;
//! real captures replace all of this with their own files.

use garment_core::mesh::TriMesh;
use garment_core::pose::Pose;
use garment_core::rig::{Joint, RigBundle, RigidTransform};
use garment_core::subspace::{fit_subspace, GarmentSubspace};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Open tube around the y axis: `rows` rings of `cols` vertices each,
/// radius varying smoothly so the surface is not a perfect cylinder.
/// Vertex count is rows * cols; the paper-scale garment uses 79 x 56 =
/// 4424 vertices.
pub fn tube_garment(rows: usize, cols: usize, radius: f64, height: f64) -> TriMesh {
    assert!(rows >= 2 && cols >= 3);
    let mut verts = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let t = r as f64 / (rows - 1) as f64;
        let y = t * height;
        // Slight waist so normals vary along the tube.
        let ring_radius = radius * (1.0 + 0.08 * (t * std::f64::consts::PI * 2.0).cos());
        for c in 0..cols {
            let a = c as f64 / cols as f64 * std::f64::consts::TAU;
            verts.push([ring_radius * a.cos(), y, ring_radius * a.sin()]);
        }
    }
    let mut faces = Vec::with_capacity(2 * cols * (rows - 1));
    for r in 0..rows - 1 {
        for c in 0..cols {
            let c1 = (c + 1) % cols;
            let a = (r * cols + c) as u32;
            let b = (r * cols + c1) as u32;
            let d = ((r + 1) * cols + c) as u32;
            let e = ((r + 1) * cols + c1) as u32;
            faces.push([a, b, e]);
            faces.push([a, e, d]);
        }
    }
    TriMesh::new(verts, faces).unwrap()
}

/// A joint chain along the tube axis with smooth two-joint skinning
/// weights per vertex.
pub fn tube_rig(garment: &TriMesh, joint_count: usize) -> RigBundle {
    assert!(joint_count >= 2);
    let ys: Vec<f64> = garment.vertices().iter().map(|v| v[1]).collect();
    let (y_min, y_max) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    let span = (y_max - y_min).max(1e-9);

    let joints: Vec<Joint> = (0..joint_count)
        .map(|i| Joint {
            parent: if i == 0 { None } else { Some(i - 1) },
            rest: RigidTransform::new(
                Matrix3::identity(),
                Vector3::new(0.0, y_min + span * i as f64 / (joint_count - 1) as f64, 0.0),
            ),
        })
        .collect();

    let mut weights = Vec::with_capacity(garment.vertex_count() * joint_count);
    for v in garment.vertices() {
        let t = ((v[1] - y_min) / span).clamp(0.0, 1.0) * (joint_count - 1) as f64;
        let lo = (t.floor() as usize).min(joint_count - 2);
        let frac = t - lo as f64;
        let mut row = vec![0.0; joint_count];
        row[lo] = 1.0 - frac;
        row[lo + 1] = frac;
        weights.extend(row);
    }
    RigBundle::new(joints, weights, garment.vertex_count()).unwrap()
}

/// Smooth low-frequency radial deformation fields over the tube,
/// the generating modes of the synthetic corpus.
pub fn deformation_fields(base: &TriMesh, count: usize, seed: u64) -> Vec<Vec<[f64; 3]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let fy: f64 = rng.gen_range(1.0..4.0);
            let fa: f64 = rng.gen_range(1.0..3.0) * (rng.gen_range(0..2) as f64 * 2.0 - 1.0);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp: f64 = rng.gen_range(0.01..0.025);
            base.vertices()
                .iter()
                .map(|v| {
                    let angle = v[2].atan2(v[0]);
                    let radial = Vector3::new(angle.cos(), 0.0, angle.sin());
                    let s = amp * (fy * v[1] * 6.0 + fa * angle + phase).sin();
                    [radial.x * s, 0.3 * s, radial.z * s]
                })
                .collect()
        })
        .collect()
}

/// Corpus of deformed copies of the base garment, in rest pose.
pub fn garment_corpus(base: &TriMesh, size: usize, field_count: usize, seed: u64) -> Vec<TriMesh> {
    let fields = deformation_fields(base, field_count, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    (0..size)
        .map(|_| {
            let coeffs: Vec<f64> = (0..field_count).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let verts: Vec<[f64; 3]> = base
                .vertices()
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let mut out = *v;
                    for (c, field) in coeffs.iter().zip(&fields) {
                        for k in 0..3 {
                            out[k] += c * field[i][k];
                        }
                    }
                    out
                })
                .collect();
            base.with_vertices(verts).unwrap()
        })
        .collect()
}

/// Convenience: fit a paper-scale demo subspace.
pub fn demo_subspace(rows: usize, cols: usize, modes: usize, seed: u64) -> GarmentSubspace {
    let base = tube_garment(rows, cols, 0.18, 0.55);
    let corpus = garment_corpus(&base, (modes + 1).max(40) + 20, modes.max(8), seed);
    fit_subspace(&corpus, modes).unwrap()
}

/// Watertight UV sphere; stacks*slices quads plus polar fans.
pub fn uv_sphere(stacks: usize, slices: usize, radius: f64, center: [f64; 3]) -> TriMesh {
    assert!(stacks >= 3 && slices >= 3);
    let mut verts = vec![[center[0], center[1] + radius, center[2]]];
    for s in 1..stacks {
        let phi = std::f64::consts::PI * s as f64 / stacks as f64;
        for c in 0..slices {
            let theta = std::f64::consts::TAU * c as f64 / slices as f64;
            verts.push([
                center[0] + radius * phi.sin() * theta.cos(),
                center[1] + radius * phi.cos(),
                center[2] + radius * phi.sin() * theta.sin(),
            ]);
        }
    }
    verts.push([center[0], center[1] - radius, center[2]]);
    let bottom = (verts.len() - 1) as u32;

    let ring = |s: usize, c: usize| -> u32 { (1 + (s - 1) * slices + (c % slices)) as u32 };
    let mut faces = Vec::new();
    for c in 0..slices {
        faces.push([0, ring(1, c + 1), ring(1, c)]);
    }
    for s in 1..stacks - 1 {
        for c in 0..slices {
            let a = ring(s, c);
            let b = ring(s, c + 1);
            let d = ring(s + 1, c);
            let e = ring(s + 1, c + 1);
            faces.push([a, b, e]);
            faces.push([a, e, d]);
        }
    }
    for c in 0..slices {
        faces.push([bottom, ring(stacks - 1, c), ring(stacks - 1, c + 1)]);
    }
    TriMesh::new(verts, faces).unwrap()
}

/// Mildly varied poses for a rig of the given joint count.
pub fn pose_sequence(rig_joints: usize, frames: usize, amplitude: f64, seed: u64) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dofs = (rig_joints - 1) * 3;
    let freqs: Vec<f64> = (0..dofs).map(|_| rng.gen_range(0.05..0.3)).collect();
    let phases: Vec<f64> = (0..dofs).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let scales: Vec<f64> = (0..dofs).map(|_| rng.gen_range(0.2..1.0) * amplitude).collect();
    (0..frames)
        .map(|f| {
            let values: Vec<f64> = (0..dofs)
                .map(|d| scales[d] * (freqs[d] * f as f64 + phases[d]).sin())
                .collect();
            Pose::new(values).unwrap()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_scale_tube_has_4424_vertices() {
        let mesh = tube_garment(79, 56, 0.18, 0.55);
        assert_eq!(mesh.vertex_count(), 4424);
        assert_eq!(mesh.face_count(), 2 * 56 * 78);
        mesh.vertex_normals().unwrap();
    }

    #[test]
    fn tube_rig_weights_are_valid_and_smooth() {
        let mesh = tube_garment(12, 8, 0.2, 0.5);
        let rig = tube_rig(&mesh, 4);
        assert_eq!(rig.joint_count(), 4);
        assert_eq!(rig.vertex_count(), mesh.vertex_count());
    }

    #[test]
    fn uv_sphere_is_watertight() {
        let sphere = uv_sphere(12, 16, 0.5, [0.0, 0.0, 0.0]);
        // Every undirected edge must be shared by exactly two faces.
        let mut counts = std::collections::HashMap::new();
        for f in sphere.faces() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *counts.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        assert!(counts.values().all(|&c| c == 2));
        // Consistent outward winding: signed volume is positive.
        let mut vol = 0.0;
        for f in sphere.faces() {
            let a = Vector3::from(sphere.vertices()[f[0] as usize]);
            let b = Vector3::from(sphere.vertices()[f[1] as usize]);
            let c = Vector3::from(sphere.vertices()[f[2] as usize]);
            vol += a.dot(&b.cross(&c)) / 6.0;
        }
        assert!(vol > 0.0, "signed volume {vol}");
    }

    #[test]
    fn corpus_is_deterministic() {
        let base = tube_garment(10, 8, 0.2, 0.5);
        let a = garment_corpus(&base, 5, 4, 42);
        let b = garment_corpus(&base, 5, 4, 42);
        for (ma, mb) in a.iter().zip(&b) {
            assert_eq!(ma.vertices(), mb.vertices());
        }
    }
}
