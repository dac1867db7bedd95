//! Projective geometry shared by every stage: homographies, the camera model
//! used to turn yaw/pitch/roll into pixel-space transforms, the rough angle
//! estimator, and convex-quadrangle containment.
//!
//! Coordinates are continuous pixel coordinates: pixel `(i, j)` covers
//! `[i, i+1) x [j, j+1)` and its center sits at `(i + 0.5, j + 0.5)`. A frame of
//! size `W x H` therefore spans `[0, W] x [0, H]`.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Homogeneous weights smaller than this are treated as points at infinity.
const W_EPS: f64 = 1e-12;

/// Slack, in pixels, for boundary-inclusive containment tests.
pub const CONTAIN_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }
}

fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// A 3x3 projective transform, kept with `h33 = 1` whenever that coefficient
/// is not vanishingly small.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Default for Homography {
    fn default() -> Self {
        Self::identity()
    }
}

impl Homography {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix and normalizes it.
    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        Self(m).normalized()
    }

    /// Builds from nine row-major coefficients.
    pub fn from_coeffs(c: [f64; 9]) -> Self {
        Self::from_matrix(Matrix3::from_row_slice(&c))
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0))
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Self(Matrix3::new(sx, 0.0, 0.0, 0.0, sy, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Row-major coefficients.
    pub fn coeffs(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn normalized(self) -> Self {
        let h33 = self.0[(2, 2)];
        if h33.abs() > W_EPS {
            Self(self.0 / h33)
        } else {
            self
        }
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Homography) -> Homography {
        Self(self.0 * other.0).normalized()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    pub fn inverse(&self) -> Result<Homography> {
        let det = self.0.determinant();
        let scale = self.0.abs().max().powi(3);
        if !det.is_finite() || det.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular);
        }
        self.0
            .try_inverse()
            .map(Homography::from_matrix)
            .ok_or(Error::Singular)
    }

    /// Maps a point, dividing by the homogeneous weight.
    pub fn apply(&self, p: Point) -> Result<Point> {
        let (q, w) = self.apply_homogeneous(p);
        if w.abs() < W_EPS {
            return Err(Error::PointAtInfinity(w));
        }
        Ok(q)
    }

    /// Maps a point and also returns the homogeneous weight before division.
    pub fn apply_homogeneous(&self, p: Point) -> (Point, f64) {
        let v = self.0 * Vector3::new(p.x, p.y, 1.0);
        (Point::new(v.x / v.z, v.y / v.z), v.z)
    }

    /// Largest absolute coefficient difference after normalizing both sides,
    /// relative to the larger coefficient magnitude.
    pub fn relative_distance(&self, other: &Homography) -> f64 {
        let a = self.normalized().0;
        let b = other.normalized().0;
        let scale = a.abs().max().max(b.abs().max()).max(1.0);
        (a - b).abs().max() / scale
    }

    /// Largest distance between where `self` and `other` send the corners of
    /// a `width` x `height` frame.
    pub fn corner_error(&self, other: &Homography, width: f64, height: f64) -> f64 {
        Quad::rect(0.0, 0.0, width, height)
            .vertices()
            .iter()
            .map(|&p| match (self.apply(p), other.apply(p)) {
                (Ok(a), Ok(b)) => a.dist(b),
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Mul for Homography {
    type Output = Homography;

    fn mul(self, rhs: Homography) -> Homography {
        self.compose(&rhs)
    }
}

impl Mul<&Homography> for &Homography {
    type Output = Homography;

    fn mul(self, rhs: &Homography) -> Homography {
        self.compose(rhs)
    }
}

/// Pinhole model for one video stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    /// Focal length in pixels.
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    /// Effective rolling-shutter sensor height in pixels (>= frame height).
    pub sensor_height: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraParams {
    pub const DEFAULT_SENSOR_HEIGHT_FACTOR: f64 = 2.0;

    /// Principal point at the frame center and sensor height at twice the
    /// frame height.
    pub fn new(width: usize, height: usize, focal: f64) -> Self {
        Self {
            focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            sensor_height: Self::DEFAULT_SENSOR_HEIGHT_FACTOR * height as f64,
            width,
            height,
        }
    }

    /// Default focal length: one frame width (about 53 degrees horizontal FOV).
    pub fn with_default_focal(width: usize, height: usize) -> Self {
        Self::new(width, height, width as f64)
    }

    pub fn with_sensor_height_factor(mut self, factor: f64) -> Self {
        self.sensor_height = factor * self.height as f64;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(Error::InvalidParam(format!("focal length {} must be > 0", self.focal)));
        }
        if self.sensor_height < self.height as f64 {
            return Err(Error::InvalidParam(format!(
                "effective sensor height {} is below frame height {}",
                self.sensor_height, self.height
            )));
        }
        Ok(())
    }

    /// Maps principal-point-centered coordinates to pixel coordinates.
    fn centering(&self) -> Homography {
        Homography::translation(self.cx, self.cy)
    }

    fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.focal, 0.0, 0.0, 0.0, self.focal, 0.0, 0.0, 0.0, 1.0)
    }

    /// Re-expresses a pixel-space homography in principal-point-centered
    /// coordinates.
    pub fn to_centered(&self, h: &Homography) -> Homography {
        let c = self.centering();
        let c_inv = Homography::translation(-self.cx, -self.cy);
        c_inv.compose(&h.compose(&c))
    }
}

fn yaw_matrix(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn pitch_matrix(b: f64) -> Matrix3<f64> {
    let (s, c) = b.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn roll_matrix(g: f64) -> Matrix3<f64> {
    let (s, c) = g.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Pixel-space homography of the camera rotation `R_yaw * R_pitch * R_roll`,
/// conjugated by the intrinsics: `C K R K^-1 C^-1`.
pub fn rotation_homography(yaw: f64, pitch: f64, roll: f64, cam: &CameraParams) -> Homography {
    let k = cam.intrinsics();
    let k_inv = Matrix3::new(1.0 / cam.focal, 0.0, 0.0, 0.0, 1.0 / cam.focal, 0.0, 0.0, 0.0, 1.0);
    let r = yaw_matrix(yaw) * pitch_matrix(pitch) * roll_matrix(roll);
    let centered = Homography::from_matrix(k * r * k_inv);
    let c = cam.centering();
    let c_inv = Homography::translation(-cam.cx, -cam.cy);
    c.compose(&centered.compose(&c_inv))
}

/// Yaw, pitch and roll in radians.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Angles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Angles {
    pub const ZERO: Angles = Angles { yaw: 0.0, pitch: 0.0, roll: 0.0 };

    pub const fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.yaw, self.pitch, self.roll]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn homography(&self, cam: &CameraParams) -> Homography {
        rotation_homography(self.yaw, self.pitch, self.roll, cam)
    }
}

/// Rough yaw/pitch/roll of a homography, read from its translation and
/// shear terms in principal-point-centered coordinates:
/// `yaw = asin(c/l)`, `pitch = -asin(f/l)`, `roll = atan(d/e)`.
pub fn estimate_angles(h: &Homography, cam: &CameraParams) -> Angles {
    let hc = cam.to_centered(h).coeffs();
    let (c, d, e, f) = (hc[2], hc[3], hc[4], hc[5]);
    let yaw = (c / cam.focal).clamp(-1.0, 1.0).asin();
    let pitch = -(f / cam.focal).clamp(-1.0, 1.0).asin();
    let roll = if d == 0.0 && e == 0.0 { 0.0 } else { (d / e).atan() };
    Angles { yaw, pitch, roll }
}

/// `q ~ R_yaw R_pitch R_roll * residual`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleDecomposition {
    pub angles: Angles,
    pub residual: Homography,
}

impl AngleDecomposition {
    pub fn identity() -> Self {
        Self { angles: Angles::ZERO, residual: Homography::identity() }
    }

    pub fn recompose(&self, cam: &CameraParams) -> Homography {
        self.angles.homography(cam).compose(&self.residual)
    }
}

/// Yaw, pitch and roll that [`rotation_homography`] maps back to `h` exactly
/// when `h` is a pure rotation (|yaw|, |pitch| < 90 degrees).
///
/// Reads the rotation column and row through `K^-1 h K` in centered
/// coordinates: `yaw = atan(c/l)`, `pitch = -atan(f / (l sqrt(1 + (c/l)^2)))`,
/// `roll = atan2(d, e)`.
pub fn rotation_angles(h: &Homography, cam: &CameraParams) -> Angles {
    let hc = cam.to_centered(h).coeffs();
    let (c, d, e, f) = (hc[2] / cam.focal, hc[3], hc[4], hc[5] / cam.focal);
    let yaw = c.atan();
    let pitch = -(f / (1.0 + c * c).sqrt()).atan();
    let roll = if d == 0.0 && e == 0.0 { 0.0 } else { d.atan2(e) };
    Angles { yaw, pitch, roll }
}

/// Splits `q` into a yaw-pitch-roll rotation and a residual. The rotation
/// part is exact for pure rotations, so their residual is the identity.
pub fn decompose(q: &Homography, cam: &CameraParams) -> Result<AngleDecomposition> {
    let angles = rotation_angles(q, cam);
    let residual = angles.homography(cam).inverse()?.compose(q);
    Ok(AngleDecomposition { angles, residual })
}

/// Four vertices in order (either winding).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad(pub [Point; 4]);

impl Quad {
    /// Axis-aligned rectangle, vertices clockwise in image coordinates
    /// starting at the top-left.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Quad([Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)])
    }

    pub fn vertices(&self) -> &[Point; 4] {
        &self.0
    }

    /// Shoelace area; positive for counter-clockwise in a y-up frame.
    pub fn signed_area(&self) -> f64 {
        polygon_signed_area(&self.0)
    }

    pub fn centroid(&self) -> Point {
        let v = &self.0;
        Point::new(
            (v[0].x + v[1].x + v[2].x + v[3].x) / 4.0,
            (v[0].y + v[1].y + v[2].y + v[3].y) / 4.0,
        )
    }

    pub fn is_convex(&self) -> bool {
        let v = &self.0;
        let mut sign = 0.0f64;
        for i in 0..4 {
            let c = cross(v[(i + 1) % 4].sub(v[i]), v[(i + 2) % 4].sub(v[(i + 1) % 4]));
            if c.abs() < 1e-12 {
                continue;
            }
            if sign == 0.0 {
                sign = c.signum();
            } else if c.signum() != sign {
                return false;
            }
        }
        sign != 0.0
    }

    /// Vertices reordered so the signed area is positive.
    fn oriented(&self) -> [Point; 4] {
        let mut v = self.0;
        if self.signed_area() < 0.0 {
            v.reverse();
        }
        v
    }

    /// Boundary-inclusive containment for a convex quad.
    pub fn contains(&self, p: Point) -> bool {
        let v = self.oriented();
        (0..4).all(|i| {
            let e = v[(i + 1) % 4].sub(v[i]);
            let len = (e.x * e.x + e.y * e.y).sqrt();
            len == 0.0 || cross(e, p.sub(v[i])) / len >= -CONTAIN_TOL
        })
    }

    /// Parameter interval `[t0, t1]` of the segment `a + t (b - a)`,
    /// `t in [0, 1]`, that lies inside this convex quad (Cyrus-Beck).
    pub fn clip_segment(&self, a: Point, b: Point) -> Option<(f64, f64)> {
        let v = self.oriented();
        let d = b.sub(a);
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for i in 0..4 {
            let e = v[(i + 1) % 4].sub(v[i]);
            let len = (e.x * e.x + e.y * e.y).sqrt();
            if len == 0.0 {
                continue;
            }
            let num = cross(e, a.sub(v[i])) / len + CONTAIN_TOL;
            let den = cross(e, d) / len;
            if den.abs() < 1e-15 {
                if num < 0.0 {
                    return None;
                }
            } else {
                let t = -num / den;
                if den > 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
            }
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

pub fn polygon_signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    (0..n).map(|i| cross(v[i], v[(i + 1) % n])).sum::<f64>() / 2.0
}

/// Maps each vertex through `h`. Fails if any vertex reaches infinity or the
/// vertices straddle the line at infinity.
pub fn transform_quad(q: &Quad, h: &Homography) -> Result<Quad> {
    let mut out = [Point::default(); 4];
    let mut sign = 0.0f64;
    for (dst, &p) in out.iter_mut().zip(q.0.iter()) {
        let (mapped, w) = h.apply_homogeneous(p);
        if w.abs() < W_EPS || !mapped.x.is_finite() || !mapped.y.is_finite() {
            return Err(Error::DegenerateQuad);
        }
        if sign == 0.0 {
            sign = w.signum();
        } else if w.signum() != sign {
            return Err(Error::DegenerateQuad);
        }
        *dst = mapped;
    }
    Ok(Quad(out))
}

/// True iff the whole boundary of `crop` lies in `a` or `b`.
///
/// Each crop edge is clipped exactly against both convex quads and the two
/// covered parameter intervals must jointly cover the edge. Because the union
/// of two convex sets with a connected boundary cover is simply connected, a
/// covered boundary implies a covered interior.
pub fn quad_inside_union(crop: &Quad, a: &Quad, b: &Quad) -> bool {
    let v = crop.0;
    (0..4).all(|i| {
        let (p, q) = (v[i], v[(i + 1) % 4]);
        let mut spans: Vec<(f64, f64)> =
            [a.clip_segment(p, q), b.clip_segment(p, q)].into_iter().flatten().collect();
        spans.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut reach = 0.0f64;
        for (t0, t1) in spans {
            if t0 > reach + 1e-12 {
                return false;
            }
            reach = reach.max(t1);
        }
        reach >= 1.0 - 1e-12
    })
}

/// Sutherland-Hodgman clip of a polygon against an axis-aligned rectangle.
pub fn clip_polygon_to_rect(poly: &[Point], x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
    // Each boundary: inside test on a point, and intersection with segment.
    let bounds: [(u8, f64); 4] = [(0, x0), (1, x1), (2, y0), (3, y1)];
    let mut out: Vec<Point> = poly.to_vec();
    for (kind, lim) in bounds {
        if out.is_empty() {
            break;
        }
        let inside = |p: &Point| match kind {
            0 => p.x >= lim,
            1 => p.x <= lim,
            2 => p.y >= lim,
            _ => p.y <= lim,
        };
        let cut = |a: Point, b: Point| {
            let t = if kind < 2 { (lim - a.x) / (b.x - a.x) } else { (lim - a.y) / (b.y - a.y) };
            a.lerp(b, t)
        };
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            match (inside(&prev), inside(&cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(cut(prev, cur)),
                (false, true) => {
                    out.push(cut(prev, cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    out
}
