//! Pinhole camera. Camera space follows the computer-vision convention:
//! x right, y down, z forward; points in front of the camera have
//! positive z. Pixel (u, v) has u growing right and v growing down,
//! with integer coordinates at pixel centers offset by 0.5.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{CoreError, Result};
use crate::rig::RigidTransform;

#[derive(Debug, Clone)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World -> camera.
    pub extrinsics: RigidTransform,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        extrinsics: RigidTransform,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(CoreError::InvalidCamera(format!("focal lengths must be positive, got ({fx}, {fy})")));
        }
        if !(0.0..=width as f64).contains(&cx) || !(0.0..=height as f64).contains(&cy) {
            return Err(CoreError::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        if !extrinsics.is_rigid(1e-6) {
            return Err(CoreError::InvalidCamera("extrinsics are not rigid".into()));
        }
        Ok(Camera { fx, fy, cx, cy, extrinsics, width, height })
    }

    /// Simple frontal camera at the world origin looking down +z.
    pub fn frontal(resolution: usize, focal: f64) -> Camera {
        let c = resolution as f64 / 2.0;
        Camera {
            fx: focal,
            fy: focal,
            cx: c,
            cy: c,
            extrinsics: RigidTransform::identity(),
            width: resolution,
            height: resolution,
        }
    }

    #[inline]
    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.extrinsics.apply(world)
    }

    /// Rotation used to carry directions (normals) into camera space.
    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.extrinsics.rotation
    }

    /// Perspective projection of a camera-space point (z > 0) to pixels.
    #[inline]
    pub fn project(&self, cam: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * cam.x / cam.z + self.cx, self.fy * cam.y / cam.z + self.cy)
    }

    /// Transpose-Jacobian of `project` at `cam`: maps a pixel-space
    /// adjoint back to a camera-space adjoint.
    #[inline]
    pub fn project_adjoint(&self, cam: &Vector3<f64>, pixel_adjoint: &Vector2<f64>) -> Vector3<f64> {
        let iz = 1.0 / cam.z;
        Vector3::new(
            self.fx * iz * pixel_adjoint.x,
            self.fy * iz * pixel_adjoint.y,
            -(self.fx * cam.x * iz * iz * pixel_adjoint.x + self.fy * cam.y * iz * iz * pixel_adjoint.y),
        )
    }

    /// Unit ray direction through pixel (u, v), in camera space.
    #[inline]
    pub fn ray_dir(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(Camera::new(-1.0, 1.0, 0.5, 0.5, RigidTransform::identity(), 1, 1).is_err());
        assert!(Camera::new(1.0, 1.0, 5.0, 0.5, RigidTransform::identity(), 1, 1).is_err());
    }

    #[test]
    fn center_point_projects_to_principal_point() {
        let cam = Camera::frontal(512, 512.0);
        let p = cam.project(&Vector3::new(0.0, 0.0, 2.0));
        assert_relative_eq!(p, Vector2::new(256.0, 256.0), epsilon = 1e-12);
    }

    #[test]
    fn projection_adjoint_matches_finite_differences() {
        let cam = Camera::frontal(256, 300.0);
        let p = Vector3::new(0.2, -0.1, 1.7);
        let adj = Vector2::new(0.7, -1.3);
        let analytic = cam.project_adjoint(&p, &adj);
        let h = 1e-6;
        for k in 0..3 {
            let mut dp = p;
            dp[k] += h;
            let up = cam.project(&dp);
            dp[k] -= 2.0 * h;
            let dn = cam.project(&dp);
            let fd = (up - dn) / (2.0 * h);
            assert_relative_eq!(analytic[k], fd.dot(&adj), epsilon = 1e-6);
        }
    }
}
