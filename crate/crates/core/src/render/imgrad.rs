//! Image gradient operator (central differences, replicate-padded
//! borders) and its adjoint.

use crate::error::{CoreError, Result};
use crate::image::NormalImage;

fn check_size(width: usize, height: usize) -> Result<()> {
    if width < 3 || height < 3 {
        return Err(CoreError::ImageTooSmall { min: 3, width, height });
    }
    Ok(())
}

/// Central-difference x/y gradients of a scalar plane. Border samples
/// replicate the edge pixel, so the stencil stays (f[i+1] - f[i-1]) / 2
/// with clamped indices. Linear in the input.
pub fn image_gradient(width: usize, height: usize, plane: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_size(width, height)?;
    assert_eq!(plane.len(), width * height);
    let mut gx = vec![0.0; width * height];
    let mut gy = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(width - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(height - 1);
            gx[y * width + x] = 0.5 * (plane[y * width + xp] - plane[y * width + xm]);
            gy[y * width + x] = 0.5 * (plane[yp * width + x] - plane[ym * width + x]);
        }
    }
    Ok((gx, gy))
}

/// Transpose of [`image_gradient`]: scatter gradient-space adjoints back
/// to the input plane.
pub fn image_gradient_adjoint(
    width: usize,
    height: usize,
    gx_adj: &[f64],
    gy_adj: &[f64],
) -> Result<Vec<f64>> {
    check_size(width, height)?;
    assert_eq!(gx_adj.len(), width * height);
    assert_eq!(gy_adj.len(), width * height);
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(width - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(height - 1);
            let gx = gx_adj[y * width + x];
            out[y * width + xp] += 0.5 * gx;
            out[y * width + xm] -= 0.5 * gx;
            let gy = gy_adj[y * width + x];
            out[yp * width + x] += 0.5 * gy;
            out[ym * width + x] -= 0.5 * gy;
        }
    }
    Ok(out)
}

/// Gradients of all three channels of a normal image: returns
/// [gx_r, gy_r, gx_g, gy_g, gx_b, gy_b].
pub fn normal_image_gradient(img: &NormalImage) -> Result<[Vec<f64>; 6]> {
    let (w, h) = (img.width, img.height);
    let mut planes = [vec![0.0; w * h], Vec::new(), Vec::new()];
    planes[1] = vec![0.0; w * h];
    planes[2] = vec![0.0; w * h];
    for (i, p) in img.pixels().iter().enumerate() {
        planes[0][i] = p[0] as f64;
        planes[1][i] = p[1] as f64;
        planes[2][i] = p[2] as f64;
    }
    let (gx0, gy0) = image_gradient(w, h, &planes[0])?;
    let (gx1, gy1) = image_gradient(w, h, &planes[1])?;
    let (gx2, gy2) = image_gradient(w, h, &planes[2])?;
    Ok([gx0, gy0, gx1, gy1, gx2, gy2])
}
