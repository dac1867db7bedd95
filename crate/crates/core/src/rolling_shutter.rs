//! Translational rolling-shutter model.
//!
//! Inter-frame translation `(c, f)` is read as row-sequential skew: a
//! horizontal shift shears the frame and a vertical shift stretches it. `D`
//! maps distortion-free coordinates to distorted ones.

use nalgebra::Matrix3;

use crate::geometry::{CameraParams, Homography};

/// Lower bound on `1 - f / H` so `D` stays well conditioned.
pub const MIN_VERTICAL_SCALE: f64 = 0.1;

/// `D` for motion `m`, using `m`'s translation components.
pub fn distortion_matrix(m: &Homography, cam: &CameraParams) -> Homography {
    let m = m.normalized();
    let mm = m.matrix();
    let (c, f) = (mm[(0, 2)], mm[(1, 2)]);
    let h = cam.sensor_height;
    let sy = (1.0 - f / h).max(MIN_VERTICAL_SCALE);
    // Closed-form inverse of [[1, -c/h, 0], [0, sy, 0], [0, 0, 1]].
    Homography::from_matrix(Matrix3::new(1.0, c / (h * sy), 0.0, 0.0, 1.0 / sy, 0.0, 0.0, 0.0, 1.0))
}

/// `N = D_curr^-1 M D_prev`.
pub fn undistorted_motion(m: &Homography, d_curr: &Homography, d_prev: &Homography) -> Homography {
    // D is upper triangular with a unit corner, so it is always invertible.
    let d_inv = d_curr.inverse().expect("distortion matrix is invertible");
    d_inv.compose(m).compose(d_prev)
}

/// Tracks the previous frame's `D` across a stream.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RsState {
    pub current: Homography,
}

impl RsState {
    /// Consumes motion `m` into the next frame and returns `(D_n, N_n)`.
    pub fn advance(&mut self, m: &Homography, cam: &CameraParams) -> (Homography, Homography) {
        let d = distortion_matrix(m, cam);
        let n = undistorted_motion(m, &d, &self.current);
        self.current = d;
        (d, n)
    }
}
