//! Global perspective motion between adjacent frames.
//!
//! Coarse-to-fine over a 2x2 box pyramid: at each level Harris-Stephens
//! corners are picked on the previous frame, tracked independently by SAD
//! block matching seeded from the coarser level's homography, and a
//! homography is fitted to the matches by normalized least squares.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frame::{Frame, Plane};
use crate::geometry::{Homography, Point};

/// Smallest pyramid level edge, in pixels.
pub const MIN_LEVEL_SIZE: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<Plane>,
}

impl Pyramid {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Builds up to `levels` levels, stopping before any level would drop below
/// 32x32.
pub fn build_pyramid(frame: &Frame, levels: usize) -> Result<Pyramid> {
    build_pyramid_from_plane(&frame.luma, levels)
}

pub fn build_pyramid_from_plane(plane: &Plane, levels: usize) -> Result<Pyramid> {
    if plane.width < MIN_LEVEL_SIZE || plane.height < MIN_LEVEL_SIZE {
        return Err(Error::FrameTooSmall { width: plane.width, height: plane.height });
    }
    let mut out = vec![plane.clone()];
    while out.len() < levels.max(1) {
        let last = out.last().unwrap();
        if last.width / 2 < MIN_LEVEL_SIZE || last.height / 2 < MIN_LEVEL_SIZE {
            break;
        }
        let next = last.downsample2();
        out.push(next);
    }
    Ok(Pyramid { levels: out })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarrisParams {
    /// Harris sensitivity `k` in `det - k tr^2`.
    pub k: f64,
    /// Half-size of the structure-tensor window.
    pub window_radius: usize,
    /// Responses below this fraction of the strongest response are dropped.
    pub rel_threshold: f64,
    /// Detections closer than this to the plane border are ignored.
    pub margin: usize,
    /// Lower bound on the non-maximum-suppression grid cell size.
    pub min_cell: usize,
}

impl Default for HarrisParams {
    fn default() -> Self {
        Self { k: 0.04, window_radius: 2, rel_threshold: 0.01, margin: 9, min_cell: 8 }
    }
}

/// Harris-Stephens response per pixel (zero on the one-pixel border).
pub fn harris_response(plane: &Plane, params: &HarrisParams) -> Vec<f64> {
    let (w, h) = (plane.width, plane.height);
    let mut ixx = vec![0.0f64; w * h];
    let mut iyy = vec![0.0f64; w * h];
    let mut ixy = vec![0.0f64; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w - 1 {
            let gx = (plane.get(x + 1, y) as f64 - plane.get(x - 1, y) as f64) * 0.5;
            let gy = (plane.get(x, y + 1) as f64 - plane.get(x, y - 1) as f64) * 0.5;
            let i = y * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let sxx = box_sum(&ixx, w, h, params.window_radius);
    let syy = box_sum(&iyy, w, h, params.window_radius);
    let sxy = box_sum(&ixy, w, h, params.window_radius);
    (0..w * h)
        .map(|i| {
            let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
            let tr = sxx[i] + syy[i];
            det - params.k * tr * tr
        })
        .collect()
}

/// Separable box sum with zero padding.
fn box_sum(src: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut tmp = vec![0.0f64; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let mut acc: f64 = row[..r.min(w)].iter().sum();
        for x in 0..w {
            if x + r < w {
                acc += row[x + r];
            }
            tmp[y * w + x] = acc;
            if x >= r {
                acc -= row[x - r];
            }
        }
    }
    let mut out = vec![0.0f64; w * h];
    for x in 0..w {
        let mut acc: f64 = (0..r.min(h)).map(|y| tmp[y * w + x]).sum();
        for y in 0..h {
            if y + r < h {
                acc += tmp[(y + r) * w + x];
            }
            out[y * w + x] = acc;
            if y >= r {
                acc -= tmp[(y - r) * w + x];
            }
        }
    }
    out
}

/// Sparse Harris corners with default parameters.
pub fn detect_features(plane: &Plane, max_points: usize) -> Vec<Point> {
    detect_features_with(plane, max_points, &HarrisParams::default())
}

/// Up to `max_points` corners in continuous coordinates, strongest first.
///
/// At most one corner per grid cell survives: the cell's strongest response
/// that is also a 3x3 local maximum and above the relative threshold.
pub fn detect_features_with(plane: &Plane, max_points: usize, params: &HarrisParams) -> Vec<Point> {
    let (w, h) = (plane.width, plane.height);
    if max_points == 0 || w < 3 || h < 3 {
        return Vec::new();
    }
    let resp = harris_response(plane, params);
    let peak = resp.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    let threshold = (peak * params.rel_threshold).max(1e-3);
    let margin = params.margin.max(1);
    if w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }
    let cell = (((w * h) as f64 / max_points as f64).sqrt().ceil() as usize).max(params.min_cell);
    let mut picks: Vec<(f64, usize, usize)> = Vec::new();
    for cy in (0..h).step_by(cell) {
        for cx in (0..w).step_by(cell) {
            let mut best: Option<(f64, usize, usize)> = None;
            for y in cy.max(margin)..(cy + cell).min(h - margin) {
                for x in cx.max(margin)..(cx + cell).min(w - margin) {
                    let r = resp[y * w + x];
                    if r <= threshold || best.is_some_and(|b| r <= b.0) {
                        continue;
                    }
                    let is_max = (y - 1..=y + 1)
                        .all(|yy| (x - 1..=x + 1).all(|xx| (xx == x && yy == y) || resp[yy * w + xx] <= r));
                    if is_max {
                        best = Some((r, x, y));
                    }
                }
            }
            picks.extend(best);
        }
    }
    picks.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));
    picks.truncate(max_points);
    picks.into_iter().map(|(_, x, y)| Point::new(x as f64 + 0.5, y as f64 + 0.5)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMatch {
    pub src: Point,
    pub dst: Point,
    pub sad: u32,
}

fn block_sad(prev: &Plane, curr: &Plane, px: usize, py: usize, qx: usize, qy: usize, block: usize) -> u32 {
    let mut sum = 0u32;
    for r in 0..block {
        let a = &prev.data[(py + r) * prev.width + px..][..block];
        let b = &curr.data[(qy + r) * curr.width + qx..][..block];
        sum += a.iter().zip(b).map(|(&u, &v)| u.abs_diff(v) as u32).sum::<u32>();
    }
    sum
}

/// Exhaustive SAD search for the block centered on pixel `p` of `prev`, over
/// displacements within `radius` of `init`.
///
/// Ties go to the smaller displacement, then to row-major scan order. With
/// `subpixel`, the integer optimum is refined by a parabola through its two
/// neighbors on each axis, unless it is an exact match (SAD 0).
pub fn track_block(
    prev: &Plane,
    curr: &Plane,
    p: (usize, usize),
    init: (i32, i32),
    radius: usize,
    block: usize,
    subpixel: bool,
) -> Result<PointMatch> {
    let half = block / 2;
    let (px, py) = p;
    if block == 0 || px < half || py < half || px - half + block > prev.width || py - half + block > prev.height {
        return Err(Error::InvalidParam(format!("block at ({px}, {py}) leaves the source plane")));
    }
    let (bx, by) = (px - half, py - half);
    let r = radius as i32;
    let max_x = curr.width as i64 - block as i64;
    let max_y = curr.height as i64 - block as i64;
    let side = 2 * radius + 1;
    let mut sads = vec![u32::MAX; side * side];
    let mut best: Option<(u32, i64, i32, i32)> = None;
    for j in -r..=r {
        for i in -r..=r {
            let (dx, dy) = (init.0 + i, init.1 + j);
            let qx = bx as i64 + dx as i64;
            let qy = by as i64 + dy as i64;
            if qx < 0 || qy < 0 || qx > max_x || qy > max_y {
                continue;
            }
            let sad = block_sad(prev, curr, bx, by, qx as usize, qy as usize, block);
            sads[((j + r) as usize) * side + (i + r) as usize] = sad;
            let dist = dx as i64 * dx as i64 + dy as i64 * dy as i64;
            let better = match best {
                None => true,
                Some((bs, bd, _, _)) => sad < bs || (sad == bs && dist < bd),
            };
            if better {
                best = Some((sad, dist, dx, dy));
            }
        }
    }
    let (sad, _, dx, dy) = best.ok_or(Error::NoMatch)?;
    let (mut fx, mut fy) = (dx as f64, dy as f64);
    if subpixel && sad > 0 {
        let at = |i: i32, j: i32| -> Option<f64> {
            let (ii, jj) = (i - init.0 + r, j - init.1 + r);
            if ii < 0 || jj < 0 || ii >= side as i32 || jj >= side as i32 {
                return None;
            }
            let s = sads[jj as usize * side + ii as usize];
            (s != u32::MAX).then_some(s as f64)
        };
        let c = sad as f64;
        if let (Some(l), Some(rr)) = (at(dx - 1, dy), at(dx + 1, dy)) {
            fx += parabola_offset(l, c, rr);
        }
        if let (Some(u), Some(d)) = (at(dx, dy - 1), at(dx, dy + 1)) {
            fy += parabola_offset(u, c, d);
        }
    }
    let src = Point::new(px as f64 + 0.5, py as f64 + 0.5);
    Ok(PointMatch { src, dst: Point::new(src.x + fx, src.y + fy), sad })
}

fn parabola_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom <= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Similarity transform taking the points to zero mean and unit RMS per axis.
fn normalizing_transform(pts: impl Iterator<Item = Point> + Clone) -> Result<Matrix3<f64>> {
    let n = pts.clone().count() as f64;
    let (sx, sy) = pts.clone().fold((0.0, 0.0), |a, p| (a.0 + p.x, a.1 + p.y));
    let (mx, my) = (sx / n, sy / n);
    let var = pts.map(|p| (p.x - mx).powi(2) + (p.y - my).powi(2)).sum::<f64>() / n;
    if var <= 1e-18 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let s = (2.0 / var).sqrt();
    Ok(Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0))
}

/// Least-squares homography over the linearized constraints with `h33 = 1`,
/// after normalizing both point sets.
pub fn fit_homography(matches: &[PointMatch]) -> Result<Homography> {
    if matches.len() < 4 {
        return Err(Error::Degenerate(format!("{} matches, need at least 4", matches.len())));
    }
    let ts = normalizing_transform(matches.iter().map(|m| m.src))?;
    let td = normalizing_transform(matches.iter().map(|m| m.dst))?;
    let n = matches.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, 8);
    let mut b = DVector::<f64>::zeros(2 * n);
    for (k, m) in matches.iter().enumerate() {
        let s = ts * nalgebra::Vector3::new(m.src.x, m.src.y, 1.0);
        let d = td * nalgebra::Vector3::new(m.dst.x, m.dst.y, 1.0);
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r0 = 2 * k;
        a.row_mut(r0).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r0 + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r0] = u;
        b[r0 + 1] = v;
    }
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-9 * smax) {
        return Err(Error::Degenerate("rank-deficient correspondence system".into()));
    }
    let h = svd.solve(&b, 0.0).map_err(|e| Error::Degenerate(e.to_string()))?;
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let td_inv = td.try_inverse().ok_or(Error::Singular)?;
    let out = Homography::from_matrix(td_inv * hn * ts);
    if !out.is_finite() {
        return Err(Error::Degenerate("non-finite fit".into()));
    }
    Ok(out)
}

/// Drops matches whose SAD exceeds twice the median (when at least four
/// survive), then fits.
pub fn fit_homography_trimmed(matches: &[PointMatch]) -> Result<Homography> {
    if matches.len() < 4 {
        return fit_homography(matches);
    }
    let mut sads: Vec<u32> = matches.iter().map(|m| m.sad).collect();
    sads.sort_unstable();
    let median = sads[sads.len() / 2];
    let kept: Vec<PointMatch> = matches.iter().copied().filter(|m| m.sad <= median.saturating_mul(2)).collect();
    if kept.len() >= 4 {
        fit_homography(&kept).or_else(|_| fit_homography(matches))
    } else {
        fit_homography(matches)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    pub levels: usize,
    pub block: usize,
    pub radius: usize,
    pub max_features: usize,
    pub min_matches: usize,
    pub subpixel: bool,
    pub harris: HarrisParams,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            levels: 4,
            block: 16,
            radius: 8,
            max_features: 256,
            min_matches: 8,
            subpixel: true,
            harris: HarrisParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionEstimate {
    /// Maps previous-frame coordinates to current-frame coordinates.
    pub homography: Homography,
    /// False when no pyramid level produced a usable fit.
    pub confident: bool,
    /// Matches used at the finest level that succeeded.
    pub matches: usize,
}

/// Estimates `M` with `x_curr ~ M x_prev` from prebuilt pyramids.
pub fn calc_motion(prev: &Pyramid, curr: &Pyramid, params: &MotionParams, exec: Exec) -> Result<MotionEstimate> {
    let (p0, c0) = (&prev.levels[0], &curr.levels[0]);
    if (p0.width, p0.height) != (c0.width, c0.height) {
        return Err(Error::InvalidParam("frames differ in size".into()));
    }
    let depth = prev.len().min(curr.len()).min(params.levels.max(1));
    let mut h = Homography::identity();
    let mut confident = false;
    let mut used = 0;
    let mut harris = params.harris.clone();
    harris.margin = harris.margin.max(params.block / 2 + 1);
    for level in (0..depth).rev() {
        let scale = (1u32 << level) as f64;
        let down = Homography::scaling(1.0 / scale, 1.0 / scale);
        let up = Homography::scaling(scale, scale);
        let h_level = down.compose(&h).compose(&up);
        let (lp, lc) = (&prev.levels[level], &curr.levels[level]);
        let feats = detect_features_with(lp, params.max_features, &harris);
        let results = exec.map(&feats, |f| {
            let predicted = h_level.apply(*f).ok()?;
            let init = ((predicted.x - f.x).round() as i32, (predicted.y - f.y).round() as i32);
            let px = (f.x - 0.5) as usize;
            let py = (f.y - 0.5) as usize;
            track_block(lp, lc, (px, py), init, params.radius, params.block, params.subpixel).ok()
        });
        let matches: Vec<PointMatch> = results.into_iter().flatten().collect();
        if matches.len() < params.min_matches.max(4) {
            continue;
        }
        if let Ok(fit) = fit_homography_trimmed(&matches) {
            if fit.inverse().is_ok() {
                h = up.compose(&fit).compose(&down);
                confident = true;
                used = matches.len();
            }
        }
    }
    if !confident {
        h = Homography::identity();
    }
    Ok(MotionEstimate { homography: h, confident, matches: used })
}

/// Convenience wrapper that builds both pyramids.
pub fn calc_motion_frames(prev: &Frame, curr: &Frame, params: &MotionParams, exec: Exec) -> Result<MotionEstimate> {
    if (prev.width(), prev.height()) != (curr.width(), curr.height()) {
        return Err(Error::InvalidParam("frames differ in size".into()));
    }
    let a = build_pyramid(prev, params.levels)?;
    let b = build_pyramid(curr, params.levels)?;
    calc_motion(&a, &b, params, exec)
}
