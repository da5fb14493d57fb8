//! Kinematic trees with skinning weights, and their on-disk schema.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{CoreError, Result};

/// Rigid transform as explicit rotation + translation. Matrix form is
/// what linear-blend skinning blends, so no quaternion detour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform { rotation, translation }
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// self ∘ other (apply `other` first).
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn is_rigid(&self, tol: f64) -> bool {
        let should_be_id = self.rotation.transpose() * self.rotation - Matrix3::identity();
        should_be_id.norm() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }
}

#[derive(Debug, Clone)]
pub struct Joint {
    /// None for the root.
    pub parent: Option<usize>,
    /// Global rest-pose transform (joint frame -> world).
    pub rest: RigidTransform,
}

/// Kinematic tree plus a row-stochastic vertex-by-joint weight matrix.
#[derive(Debug, Clone)]
pub struct RigBundle {
    joints: Vec<Joint>,
    /// Dense row-major weights, `vertex_count x joint_count`.
    weights: Vec<f64>,
    vertex_count: usize,
}

impl RigBundle {
    pub fn new(joints: Vec<Joint>, weights: Vec<f64>, vertex_count: usize) -> Result<Self> {
        if joints.is_empty() {
            return Err(CoreError::InvalidRig("rig has no joints".into()));
        }
        if joints[0].parent.is_some() {
            return Err(CoreError::InvalidRig("joint 0 must be the root".into()));
        }
        for (i, j) in joints.iter().enumerate().skip(1) {
            match j.parent {
                // Parents must precede children, which also rules out cycles.
                Some(p) if p < i => {}
                Some(p) => {
                    return Err(CoreError::InvalidRig(format!(
                        "joint {i} has parent {p}; parents must precede children"
                    )))
                }
                None => {
                    return Err(CoreError::InvalidRig(format!("joint {i} has no parent")));
                }
            }
            if !j.rest.is_rigid(1e-6) {
                return Err(CoreError::InvalidRig(format!("joint {i} rest transform is not rigid")));
            }
        }
        if !joints[0].rest.is_rigid(1e-6) {
            return Err(CoreError::InvalidRig("root rest transform is not rigid".into()));
        }
        let jc = joints.len();
        if weights.len() != vertex_count * jc {
            return Err(CoreError::DimensionMismatch {
                expected: vertex_count * jc,
                actual: weights.len(),
                context: "skinning weight matrix".into(),
            });
        }
        for (v, row) in weights.chunks_exact(jc).enumerate() {
            let mut sum = 0.0;
            for &w in row {
                if w < 0.0 {
                    return Err(CoreError::InvalidRig(format!("vertex {v} has a negative weight")));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(CoreError::InvalidRig(format!(
                    "vertex {v} weights sum to {sum}, expected 1"
                )));
            }
        }
        Ok(RigBundle { joints, weights, vertex_count })
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    /// Expected pose length: three values per non-root joint.
    pub fn pose_len(&self) -> usize {
        (self.joints.len() - 1) * 3
    }

    #[inline]
    pub fn weight_row(&self, vertex: usize) -> &[f64] {
        let jc = self.joints.len();
        &self.weights[vertex * jc..(vertex + 1) * jc]
    }
}

/// Write the rig-bundle schema:
///
/// ```text
/// rig v1
/// joints <J>
/// <id> <parent|-1> <r00..r22 row-major> <tx> <ty> <tz>   (J lines)
/// weights <vertex_count> <nonzero_count>
/// <vertex> <joint> <weight>                              (nnz lines)
/// ```
pub fn save_rig(path: impl AsRef<Path>, rig: &RigBundle) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let jc = rig.joint_count();
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "rig v1")?;
        writeln!(w, "joints {jc}")?;
        for (i, j) in rig.joints.iter().enumerate() {
            let parent = j.parent.map(|p| p as i64).unwrap_or(-1);
            let r = &j.rest.rotation;
            let t = &j.rest.translation;
            writeln!(
                w,
                "{i} {parent} {} {} {} {} {} {} {} {} {} {} {} {}",
                r[(0, 0)], r[(0, 1)], r[(0, 2)],
                r[(1, 0)], r[(1, 1)], r[(1, 2)],
                r[(2, 0)], r[(2, 1)], r[(2, 2)],
                t.x, t.y, t.z
            )?;
        }
        let nnz = rig.weights.iter().filter(|&&x| x != 0.0).count();
        writeln!(w, "weights {} {nnz}", rig.vertex_count)?;
        for v in 0..rig.vertex_count {
            for (j, &weight) in rig.weight_row(v).iter().enumerate() {
                if weight != 0.0 {
                    writeln!(w, "{v} {j} {weight}")?;
                }
            }
        }
        w.flush()
    };
    emit().map_err(|e| CoreError::io(path, e))
}

pub fn load_rig(path: impl AsRef<Path>) -> Result<RigBundle> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let mut next_line = || -> Result<(usize, String)> {
        loop {
            match lines.next() {
                Some((i, Ok(l))) => {
                    let t = l.trim().to_string();
                    if !t.is_empty() && !t.starts_with('#') {
                        return Ok((i + 1, t));
                    }
                }
                Some((_, Err(e))) => return Err(CoreError::io(path, e)),
                None => return Err(CoreError::parse(path, 0, "unexpected end of file")),
            }
        }
    };

    let (ln, header) = next_line()?;
    if header != "rig v1" {
        return Err(CoreError::parse(path, ln, format!("expected 'rig v1', got '{header}'")));
    }

    let (ln, joints_line) = next_line()?;
    let jc: usize = joints_line
        .strip_prefix("joints ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| CoreError::parse(path, ln, "expected 'joints <count>'"))?;

    let mut joints = Vec::with_capacity(jc);
    for _ in 0..jc {
        let (ln, line) = next_line()?;
        let vals: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|_| CoreError::parse(path, ln, "bad number in joint row"))?;
        if vals.len() != 14 {
            return Err(CoreError::parse(path, ln, "joint row needs 14 fields"));
        }
        let parent = if vals[1] < 0.0 { None } else { Some(vals[1] as usize) };
        let rotation = Matrix3::new(
            vals[2], vals[3], vals[4],
            vals[5], vals[6], vals[7],
            vals[8], vals[9], vals[10],
        );
        let translation = Vector3::new(vals[11], vals[12], vals[13]);
        joints.push(Joint { parent, rest: RigidTransform::new(rotation, translation) });
    }

    let (ln, weights_line) = next_line()?;
    let mut parts = weights_line.split_whitespace();
    if parts.next() != Some("weights") {
        return Err(CoreError::parse(path, ln, "expected 'weights <verts> <nnz>'"));
    }
    let vertex_count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CoreError::parse(path, ln, "bad vertex count"))?;
    let nnz: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CoreError::parse(path, ln, "bad nonzero count"))?;

    let mut weights = vec![0.0; vertex_count * jc];
    for _ in 0..nnz {
        let (ln, line) = next_line()?;
        let mut it = line.split_whitespace();
        let v: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CoreError::parse(path, ln, "bad vertex index"))?;
        let j: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CoreError::parse(path, ln, "bad joint index"))?;
        let wv: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CoreError::parse(path, ln, "bad weight"))?;
        if v >= vertex_count || j >= jc {
            return Err(CoreError::parse(path, ln, "weight triplet out of range"));
        }
        weights[v * jc + j] = wv;
    }

    RigBundle::new(joints, weights, vertex_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_joint_rig(vertex_count: usize) -> RigBundle {
        let joints = vec![
            Joint { parent: None, rest: RigidTransform::identity() },
            Joint {
                parent: Some(0),
                rest: RigidTransform::new(Matrix3::identity(), Vector3::new(0.0, 1.0, 0.0)),
            },
        ];
        let mut weights = Vec::new();
        for v in 0..vertex_count {
            let w1 = v as f64 / (vertex_count.max(2) - 1) as f64;
            weights.extend_from_slice(&[1.0 - w1, w1]);
        }
        RigBundle::new(joints, weights, vertex_count).unwrap()
    }

    #[test]
    fn rejects_forward_parent_reference() {
        let joints = vec![
            Joint { parent: None, rest: RigidTransform::identity() },
            Joint { parent: Some(2), rest: RigidTransform::identity() },
            Joint { parent: Some(0), rest: RigidTransform::identity() },
        ];
        assert!(RigBundle::new(joints, vec![1.0, 0.0, 0.0], 1).is_err());
    }

    #[test]
    fn rejects_bad_weight_row() {
        let joints = vec![Joint { parent: None, rest: RigidTransform::identity() }];
        assert!(RigBundle::new(joints.clone(), vec![0.5], 1).is_err());
        assert!(RigBundle::new(joints, vec![1.0], 1).is_ok());
    }

    #[test]
    fn rig_file_round_trip() {
        let rig = two_joint_rig(5);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rig.txt");
        save_rig(&p, &rig).unwrap();
        let back = load_rig(&p).unwrap();
        assert_eq!(back.joint_count(), 2);
        assert_eq!(back.vertex_count(), 5);
        for v in 0..5 {
            for j in 0..2 {
                assert!((back.weight_row(v)[j] - rig.weight_row(v)[j]).abs() < 1e-12);
            }
        }
        assert_eq!(back.joints()[1].parent, Some(0));
    }

    #[test]
    fn rigid_transform_compose_inverse() {
        let r = Matrix3::from(nalgebra::Rotation3::from_euler_angles(0.3, 0.5, -0.2));
        let t = RigidTransform::new(r, Vector3::new(1.0, -2.0, 0.5));
        let roundtrip = t.compose(&t.inverse());
        assert!(roundtrip.is_rigid(1e-12));
        assert!((roundtrip.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(roundtrip.translation.norm() < 1e-12);
    }
}
