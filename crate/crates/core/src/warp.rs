//! Inverse-mapped bilinear warping onto an output sampling grid.

use crate::exec::Exec;
use crate::filter::CropWindow;
use crate::frame::Plane;
use crate::geometry::{Homography, CONTAIN_TOL};

/// Output raster positions in input-canvas coordinates: pixel `(u, v)` samples
/// `(x0 + step (u + 0.5), y0 + step (v + 0.5))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleGrid {
    pub width: usize,
    pub height: usize,
    pub x0: f64,
    pub y0: f64,
    pub step: f64,
}

impl SampleGrid {
    /// Full-resolution luma grid of a crop window.
    pub fn full(window: &CropWindow) -> Self {
        Self { width: window.width, height: window.height, x0: window.x0, y0: window.y0, step: 1.0 }
    }

    /// Grid with one sample per `factor x factor` block of the crop window.
    pub fn reduced(window: &CropWindow, factor: usize) -> Self {
        Self {
            width: window.width.div_ceil(factor),
            height: window.height.div_ceil(factor),
            x0: window.x0,
            y0: window.y0,
            step: factor as f64,
        }
    }
}

/// A warped plane with per-pixel validity.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedImage {
    pub width: usize,
    pub height: usize,
    /// Invalid pixels hold 0.
    pub luma: Vec<u8>,
    pub valid: Vec<bool>,
}

impl WarpedImage {
    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    pub fn to_plane(&self) -> Plane {
        Plane { width: self.width, height: self.height, data: self.luma.clone() }
    }

    /// Marks a pixel of this reduced warp invalid when any of the `factor` x
    /// `factor` pixels it covers in `full` is invalid, so thin slivers of
    /// missing samples survive the reduction.
    pub fn pool_invalid(&mut self, full: &WarpedImage, factor: usize) {
        for y in 0..full.height {
            for x in 0..full.width {
                if !full.valid[y * full.width + x] {
                    let (qx, qy) = (x / factor, y / factor);
                    if qx < self.width && qy < self.height {
                        self.valid[qy * self.width + qx] = false;
                    }
                }
            }
        }
    }
}

/// Samples `src` at `h(grid point)` for every grid pixel.
///
/// `h` maps canvas coordinates to full-resolution source coordinates; `src`
/// holds `scale` of its pixels per full-resolution pixel (1 for luma, 0.5 for
/// 4:2:0 chroma, 0.25 for the second pyramid level). A sample is valid when
/// its source point lies in `[0, full_w] x [0, full_h]`.
pub fn warp(
    src: &Plane,
    scale: f64,
    full_w: usize,
    full_h: usize,
    h: &Homography,
    grid: &SampleGrid,
    exec: Exec,
) -> WarpedImage {
    let (w, hgt) = (grid.width, grid.height);
    let m = h.matrix();
    let (fw, fh) = (full_w as f64, full_h as f64);
    let mut out: Vec<(u8, bool)> = vec![(0, false); w * hgt];
    exec.for_each_row(&mut out, w, |v, row| {
        let y = grid.y0 + grid.step * (v as f64 + 0.5);
        let x_start = grid.x0 + grid.step * 0.5;
        // Homogeneous coordinates advance linearly along the row.
        let mut hx = m[(0, 0)] * x_start + m[(0, 1)] * y + m[(0, 2)];
        let mut hy = m[(1, 0)] * x_start + m[(1, 1)] * y + m[(1, 2)];
        let mut hw = m[(2, 0)] * x_start + m[(2, 1)] * y + m[(2, 2)];
        let (dx, dy, dw) = (m[(0, 0)] * grid.step, m[(1, 0)] * grid.step, m[(2, 0)] * grid.step);
        for px in row.iter_mut() {
            if hw.abs() > 1e-12 {
                let sx = hx / hw;
                let sy = hy / hw;
                let inside = sx >= -CONTAIN_TOL && sy >= -CONTAIN_TOL && sx <= fw + CONTAIN_TOL && sy <= fh + CONTAIN_TOL;
                if inside {
                    let val = src.sample(sx * scale, sy * scale);
                    *px = ((val + 0.5).floor().clamp(0.0, 255.0) as u8, true);
                }
            }
            hx += dx;
            hy += dy;
            hw += dw;
        }
    });
    let (luma, valid) = out.into_iter().unzip();
    WarpedImage { width: w, height: hgt, luma, valid }
}
