//! Axis-angle body poses and pose-sequence files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{CoreError, Result};

/// Axis-angle pose vector, three values per posed joint (the root is
/// not posed). The paper's body uses 23 posed joints, so 69 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose(Vec<f64>);

/// Magnitude slack above pi allowed for each per-joint axis-angle block.
const ANGLE_TOLERANCE: f64 = 1e-3;

impl Pose {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() % 3 != 0 {
            return Err(CoreError::DimensionMismatch {
                expected: (values.len() / 3 + 1) * 3,
                actual: values.len(),
                context: "pose length must be a multiple of 3".into(),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::NonFinitePose { index: i });
            }
        }
        for (j, chunk) in values.chunks_exact(3).enumerate() {
            let mag = (chunk[0] * chunk[0] + chunk[1] * chunk[1] + chunk[2] * chunk[2]).sqrt();
            if mag >= std::f64::consts::PI + ANGLE_TOLERANCE {
                return Err(CoreError::InvalidRig(format!(
                    "pose joint {j} rotation magnitude {mag:.4} exceeds pi"
                )));
            }
        }
        Ok(Pose(values))
    }

    pub fn zeros(joint_rotations: usize) -> Self {
        Pose(vec![0.0; joint_rotations * 3])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Axis-angle block for posed joint `j` (root excluded).
    pub fn joint_rotation(&self, j: usize) -> [f64; 3] {
        [self.0[3 * j], self.0[3 * j + 1], self.0[3 * j + 2]]
    }
}

/// One whitespace-separated row of floats per frame.
pub fn load_pose_sequence(path: impl AsRef<Path>, expected_len: Option<usize>) -> Result<Vec<Pose>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut poses = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse).collect();
        let values = values
            .map_err(|_| CoreError::parse(path, lineno + 1, "bad float in pose row"))?;
        if let Some(expected) = expected_len {
            if values.len() != expected {
                return Err(CoreError::parse(
                    path,
                    lineno + 1,
                    format!("pose row has {} values, expected {expected}", values.len()),
                ));
            }
        }
        poses.push(Pose::new(values).map_err(|e| {
            CoreError::parse(path, lineno + 1, format!("invalid pose: {e}"))
        })?);
    }
    Ok(poses)
}

pub fn save_pose_sequence(path: impl AsRef<Path>, poses: &[Pose]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        for pose in poses {
            let row: Vec<String> = pose.values().iter().map(|v| format!("{v:.9}")).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()
    };
    emit().map_err(|e| CoreError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let err = Pose::new(vec![0.0, f64::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, CoreError::NonFinitePose { index: 1 }));
    }

    #[test]
    fn rejects_overlong_rotation() {
        assert!(Pose::new(vec![4.0, 0.0, 0.0]).is_err());
        assert!(Pose::new(vec![3.14, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn sequence_round_trip() {
        let poses = vec![
            Pose::new(vec![0.1, -0.2, 0.3, 0.0, 0.0, 1.5]).unwrap(),
            Pose::zeros(2),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("poses.txt");
        save_pose_sequence(&p, &poses).unwrap();
        let back = load_pose_sequence(&p, Some(6)).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in poses.iter().zip(&back) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sequence_rejects_wrong_width() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("poses.txt");
        std::fs::write(&p, "0 0 0\n").unwrap();
        assert!(load_pose_sequence(&p, Some(6)).is_err());
    }
}
