//! Forward kinematics and matrix-blend linear blend skinning, with the
//! exact inverse used to unpose reconstructed meshes.

use nalgebra::{Matrix3, Vector3};

use crate::error::{CoreError, Result};
use crate::mesh::v3;
use crate::par;
use crate::pose::Pose;
use crate::rig::{RigBundle, RigidTransform};

/// Default cap on the condition number of a blended per-vertex
/// transform before `unskin` refuses to invert it.
pub const DEFAULT_CONDITION_CAP: f64 = 1e6;

/// Rodrigues rotation from an (unnormalized) axis-angle vector, with a
/// series fallback near zero so the map stays smooth.
pub fn rodrigues(aa: [f64; 3]) -> Matrix3<f64> {
    let v = Vector3::new(aa[0], aa[1], aa[2]);
    let theta2 = v.norm_squared();
    let (a, b) = if theta2 < 1e-16 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = Matrix3::new(
        0.0, -v.z, v.y,
        v.z, 0.0, -v.x,
        -v.y, v.x, 0.0,
    );
    Matrix3::identity() + k * a + k * k * b
}

/// Global joint transforms for one pose.
#[derive(Debug, Clone)]
pub struct JointTransforms {
    globals: Vec<RigidTransform>,
}

impl JointTransforms {
    pub fn globals(&self) -> &[RigidTransform] {
        &self.globals
    }
}

/// Compose axis-angle joint rotations down the tree. The root keeps its
/// rest transform; each non-root joint rotates in its own local frame.
pub fn forward_kinematics(rig: &RigBundle, pose: &Pose) -> Result<JointTransforms> {
    if pose.len() != rig.pose_len() {
        return Err(CoreError::DimensionMismatch {
            expected: rig.pose_len(),
            actual: pose.len(),
            context: "pose length vs rig".into(),
        });
    }
    let joints = rig.joints();
    let mut globals: Vec<RigidTransform> = Vec::with_capacity(joints.len());
    globals.push(joints[0].rest);
    for (i, joint) in joints.iter().enumerate().skip(1) {
        let parent = joint.parent.expect("validated at construction");
        let local_rest = joints[parent].rest.inverse().compose(&joint.rest);
        let rot = RigidTransform::new(rodrigues(pose.joint_rotation(i - 1)), Vector3::zeros());
        globals.push(globals[parent].compose(&local_rest).compose(&rot));
    }
    Ok(JointTransforms { globals })
}

/// Per-joint skinning transforms relative to rest: S_j = G_j * rest_j^-1.
pub fn skinning_transforms(rig: &RigBundle, posed: &JointTransforms) -> Vec<RigidTransform> {
    rig.joints()
        .iter()
        .zip(&posed.globals)
        .map(|(j, g)| g.compose(&j.rest.inverse()))
        .collect()
}

/// Weight-blended affine transform of each vertex. The linear part is a
/// convex combination of rotations, so it is orthonormal only at rest.
pub fn vertex_transforms(
    rig: &RigBundle,
    joint_transforms: &[RigidTransform],
) -> Vec<(Matrix3<f64>, Vector3<f64>)> {
    let jc = rig.joint_count();
    par::map_indexed(rig.vertex_count(), |v| {
        let row = rig.weight_row(v);
        let mut rot = Matrix3::zeros();
        let mut trans = Vector3::zeros();
        for j in 0..jc {
            let w = row[j];
            if w != 0.0 {
                rot += joint_transforms[j].rotation * w;
                trans += joint_transforms[j].translation * w;
            }
        }
        (rot, trans)
    })
}

fn check_vertex_count(rig: &RigBundle, n: usize, context: &str) -> Result<()> {
    if n != rig.vertex_count() {
        return Err(CoreError::DimensionMismatch {
            expected: rig.vertex_count(),
            actual: n,
            context: context.into(),
        });
    }
    Ok(())
}

/// Pose rest-space vertices with precomputed joint transforms.
pub fn skin_with(
    rest_vertices: &[[f64; 3]],
    rig: &RigBundle,
    posed: &JointTransforms,
) -> Result<Vec<[f64; 3]>> {
    check_vertex_count(rig, rest_vertices.len(), "skin vertex buffer")?;
    let skin_tf = skinning_transforms(rig, posed);
    let blended = vertex_transforms(rig, &skin_tf);
    Ok(par::map_indexed(rest_vertices.len(), |v| {
        let (rot, trans) = &blended[v];
        let p = rot * v3(rest_vertices[v]) + trans;
        [p.x, p.y, p.z]
    }))
}

pub fn skin(rest_vertices: &[[f64; 3]], rig: &RigBundle, pose: &Pose) -> Result<Vec<[f64; 3]>> {
    skin_with(rest_vertices, rig, &forward_kinematics(rig, pose)?)
}

/// Invert the per-vertex blended transform. Fails on vertices whose
/// blended linear part has a condition number above `condition_cap`.
pub fn unskin_with(
    posed_vertices: &[[f64; 3]],
    rig: &RigBundle,
    posed: &JointTransforms,
    condition_cap: f64,
) -> Result<Vec<[f64; 3]>> {
    check_vertex_count(rig, posed_vertices.len(), "unskin vertex buffer")?;
    let skin_tf = skinning_transforms(rig, posed);
    let blended = vertex_transforms(rig, &skin_tf);
    let results = par::map_indexed(posed_vertices.len(), |v| {
        let (rot, trans) = &blended[v];
        let svs = rot.singular_values();
        let (smax, smin) = (svs.max(), svs.min());
        if smin <= 0.0 || smax / smin > condition_cap {
            let condition = if smin <= 0.0 { f64::INFINITY } else { smax / smin };
            return Err(CoreError::SingularSkinningTransform { vertex: v, condition });
        }
        let inv = rot.try_inverse().ok_or(CoreError::SingularSkinningTransform {
            vertex: v,
            condition: f64::INFINITY,
        })?;
        let p = inv * (v3(posed_vertices[v]) - trans);
        Ok([p.x, p.y, p.z])
    });
    results.into_iter().collect()
}

pub fn unskin(posed_vertices: &[[f64; 3]], rig: &RigBundle, pose: &Pose) -> Result<Vec<[f64; 3]>> {
    unskin_with(posed_vertices, rig, &forward_kinematics(rig, pose)?, DEFAULT_CONDITION_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rig::Joint;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn chain_rig(joint_count: usize, vertex_count: usize, seed: u64) -> RigBundle {
        // Joints spaced along +y; smooth weights over the two nearest joints.
        let joints: Vec<Joint> = (0..joint_count)
            .map(|i| Joint {
                parent: if i == 0 { None } else { Some(i - 1) },
                rest: RigidTransform::new(
                    Matrix3::identity(),
                    Vector3::new(0.0, i as f64 * 0.3, 0.0),
                ),
            })
            .collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(vertex_count * joint_count);
        for _ in 0..vertex_count {
            let a = rng.gen_range(0..joint_count);
            let b = (a + 1).min(joint_count - 1);
            let t: f64 = rng.gen_range(0.0..1.0);
            let mut row = vec![0.0; joint_count];
            row[a] += 1.0 - t;
            row[b] += t;
            weights.extend(row);
        }
        RigBundle::new(joints, weights, vertex_count).unwrap()
    }

    #[test]
    fn zero_pose_is_identity() {
        let rig = chain_rig(4, 20, 7);
        let pose = Pose::zeros(3);
        let fk = forward_kinematics(&rig, &pose).unwrap();
        for (g, j) in fk.globals().iter().zip(rig.joints()) {
            assert_relative_eq!(g.rotation, j.rest.rotation, epsilon = 1e-12);
            assert_relative_eq!(g.translation, j.rest.translation, epsilon = 1e-12);
        }
        let verts: Vec<[f64; 3]> = (0..20).map(|i| [i as f64 * 0.01, 0.3, 0.1]).collect();
        let posed = skin(&verts, &rig, &pose).unwrap();
        assert_eq!(posed, verts);
    }

    #[test]
    fn two_joint_chain_child_rotation_composes() {
        // Root rotated by a fixed rotation; child's axis-angle about z.
        let root_rot = Matrix3::from(nalgebra::Rotation3::from_euler_angles(0.2, -0.4, 0.9));
        let joints = vec![
            Joint { parent: None, rest: RigidTransform::new(root_rot, Vector3::zeros()) },
            Joint {
                parent: Some(0),
                rest: RigidTransform::new(root_rot, Vector3::new(0.0, 0.5, 0.0)),
            },
        ];
        let rig = RigBundle::new(joints, vec![0.0, 1.0], 1).unwrap();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let pose = Pose::new(vec![0.0, 0.0, half_pi]).unwrap();
        let fk = forward_kinematics(&rig, &pose).unwrap();
        let expected = root_rot * rodrigues([0.0, 0.0, half_pi]);
        assert_relative_eq!(fk.globals()[1].rotation, expected, epsilon = 1e-12);
    }

    #[test]
    fn pose_length_mismatch_errors() {
        let rig = chain_rig(3, 4, 1);
        let err = forward_kinematics(&rig, &Pose::zeros(5)).unwrap_err();
        assert!(matches!(err, CoreError::DimensionMismatch { .. }));
    }

    #[test]
    fn single_weight_vertex_rotates_about_joint_frame() {
        // One vertex fully bound to the child joint, child rotated by R.
        let joints = vec![
            Joint { parent: None, rest: RigidTransform::identity() },
            Joint {
                parent: Some(0),
                rest: RigidTransform::new(Matrix3::identity(), Vector3::new(0.0, 1.0, 0.0)),
            },
        ];
        let rig = RigBundle::new(joints, vec![0.0, 1.0], 1).unwrap();
        let aa = [0.3, 0.7, -0.2];
        let pose = Pose::new(aa.to_vec()).unwrap();
        let x = [0.25, 1.5, -0.3];
        let posed = skin(&[x], &rig, &pose).unwrap();
        // Oracle: rotate about the child's rest origin (0, 1, 0).
        let origin = Vector3::new(0.0, 1.0, 0.0);
        let expected = rodrigues(aa) * (v3(x) - origin) + origin;
        assert_relative_eq!(v3(posed[0]), expected, epsilon = 1e-12);
    }

    #[test]
    fn half_blend_of_opposite_rotations_shrinks_in_closed_form() {
        // Two joints with coincident frames, rotated +a and -a about z;
        // a 50/50 vertex sees the blended matrix in closed form.
        let joints = vec![
            Joint { parent: None, rest: RigidTransform::identity() },
            Joint { parent: Some(0), rest: RigidTransform::identity() },
            Joint { parent: Some(0), rest: RigidTransform::identity() },
        ];
        let rig = RigBundle::new(joints, vec![0.0, 0.5, 0.5], 1).unwrap();
        let a = 0.8;
        let pose = Pose::new(vec![0.0, 0.0, a, 0.0, 0.0, -a]).unwrap();
        let x = [0.4, 0.2, 0.6];
        let posed = skin(&[x], &rig, &pose).unwrap();
        // (Rz(a) + Rz(-a)) / 2 = diag(cos a, cos a, 1)
        let expected = Vector3::new(x[0] * a.cos(), x[1] * a.cos(), x[2]);
        assert_relative_eq!(v3(posed[0]), expected, epsilon = 1e-12);
    }

    #[test]
    fn singular_blend_is_reported() {
        // 50/50 of identity and a half-turn about z collapses x and y.
        let joints = vec![
            Joint { parent: None, rest: RigidTransform::identity() },
            Joint { parent: Some(0), rest: RigidTransform::identity() },
            Joint { parent: Some(0), rest: RigidTransform::identity() },
        ];
        let rig = RigBundle::new(joints, vec![0.0, 0.5, 0.5], 1).unwrap();
        let pose = Pose::new(vec![0.0, 0.0, std::f64::consts::PI, 0.0, 0.0, 0.0]).unwrap();
        let err = unskin(&[[0.1, 0.2, 0.3]], &rig, &pose).unwrap_err();
        assert!(matches!(err, CoreError::SingularSkinningTransform { vertex: 0, .. }));
    }

    #[test]
    fn skin_is_equivariant_to_rigid_motion_of_rig_and_rest() {
        let rig = chain_rig(4, 12, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let verts: Vec<[f64; 3]> = (0..12)
            .map(|_| [rng.gen_range(-0.5..0.5), rng.gen_range(0.0..1.0), rng.gen_range(-0.5..0.5)])
            .collect();
        let pose = Pose::new((0..9).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();

        let t = RigidTransform::new(
            Matrix3::from(nalgebra::Rotation3::from_euler_angles(0.4, 0.1, -0.7)),
            Vector3::new(1.0, -0.5, 2.0),
        );
        let moved_joints: Vec<Joint> = rig
            .joints()
            .iter()
            .map(|j| Joint { parent: j.parent, rest: t.compose(&j.rest) })
            .collect();
        let jc = rig.joint_count();
        let weights: Vec<f64> = (0..rig.vertex_count())
            .flat_map(|v| rig.weight_row(v).to_vec())
            .collect();
        let moved_rig = RigBundle::new(moved_joints, weights, rig.vertex_count()).unwrap();
        let moved_verts: Vec<[f64; 3]> = verts
            .iter()
            .map(|v| {
                let p = t.apply(&v3(*v));
                [p.x, p.y, p.z]
            })
            .collect();

        let base = skin(&verts, &rig, &pose).unwrap();
        let moved = skin(&moved_verts, &moved_rig, &pose).unwrap();
        for (b, m) in base.iter().zip(&moved) {
            assert_relative_eq!(t.apply(&v3(*b)), v3(*m), epsilon = 1e-9);
        }
        let _ = jc;
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn unskin_undoes_skin(seed in 0u64..1000) {
            let rig = chain_rig(5, 16, seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let verts: Vec<[f64; 3]> = (0..16)
                .map(|_| [rng.gen_range(-0.5..0.5), rng.gen_range(0.0..1.5), rng.gen_range(-0.5..0.5)])
                .collect();
            // Rotation magnitude capped at 2 rad per joint.
            let pose = Pose::new((0..12).map(|_| rng.gen_range(-1.15..1.15)).collect()).unwrap();
            let posed = skin(&verts, &rig, &pose).unwrap();
            let back = unskin(&posed, &rig, &pose).unwrap();
            for (a, b) in verts.iter().zip(&back) {
                for k in 0..3 {
                    prop_assert!((a[k] - b[k]).abs() < 1e-6);
                }
            }
        }
    }
}
