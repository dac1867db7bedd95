//! Cropping-matrix filter and inside-frame enforcement.
//!
//! Per frame the distortion-free motion `N` drives
//! `Q_n ~ R(g(angles of N^-1)) N Q_{n-1}`, where `g` is a mid-range filter
//! over recent angles. The non-rotational residual of `Q` is pulled towards
//! the identity every frame, and `P = D Q` is blended towards the identity
//! until its crop is usable.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    clip_polygon_to_rect, decompose, estimate_angles, quad_inside_union, transform_quad, AngleDecomposition,
    Angles, CameraParams, Homography, Point, Quad, CONTAIN_TOL,
};
use crate::rolling_shutter::RsState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    /// Mid-range window length.
    pub window: usize,
    /// Residual-to-identity blend per frame.
    pub eta: f64,
    /// `P`-to-identity blend per inside-enforcement iteration.
    pub epsilon: f64,
    pub crop_ratio: f64,
    pub max_iterations: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { window: 8, eta: 0.25, epsilon: 0.01, crop_ratio: 0.9, max_iterations: 2000 }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidParam("window must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParam(format!("eta {} must be in (0, 1)", self.eta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParam(format!("epsilon {} must be in (0, 1)", self.epsilon)));
        }
        if !(self.crop_ratio > 0.0 && self.crop_ratio <= 1.0) {
            return Err(Error::InvalidParam(format!("crop ratio {} must be in (0, 1]", self.crop_ratio)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParam("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sliding window returning `(max + min) / 2` of its contents.
#[derive(Clone, Debug, PartialEq)]
pub struct MidRange {
    values: VecDeque<f64>,
    capacity: usize,
}

impl MidRange {
    pub fn new(capacity: usize) -> Self {
        Self { values: VecDeque::with_capacity(capacity.max(1)), capacity: capacity.max(1) }
    }

    pub fn push(&mut self, v: f64) -> f64 {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(v);
        self.value()
    }

    /// Current mid-range, 0 when empty.
    pub fn value(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        (hi + lo) / 2.0
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Output raster placement: the centered `crop_ratio` rectangle of the input
/// canvas. Output pixel `(u, v)` has its center at `(x0 + u + 0.5, y0 + v + 0.5)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropWindow {
    pub x0: f64,
    pub y0: f64,
    pub width: usize,
    pub height: usize,
}

impl CropWindow {
    pub fn new(in_width: usize, in_height: usize, ratio: f64) -> Self {
        let (width, height) = output_dims(in_width, in_height, ratio);
        Self {
            x0: (in_width as f64 - width as f64) / 2.0,
            y0: (in_height as f64 - height as f64) / 2.0,
            width,
            height,
        }
    }

    pub fn rect(&self) -> Quad {
        Quad::rect(self.x0, self.y0, self.x0 + self.width as f64, self.y0 + self.height as f64)
    }

    /// Canvas position of output pixel `(u, v)`'s center.
    pub fn pixel_center(&self, u: usize, v: usize) -> Point {
        Point::new(self.x0 + u as f64 + 0.5, self.y0 + v as f64 + 0.5)
    }
}

/// `round(ratio * dims)`, at least one pixel each way.
pub fn output_dims(in_width: usize, in_height: usize, ratio: f64) -> (usize, usize) {
    let w = ((ratio * in_width as f64).round() as usize).clamp(1, in_width.max(1));
    let h = ((ratio * in_height as f64).round() as usize).clamp(1, in_height.max(1));
    (w, h)
}

/// The output crop rectangle mapped through `p` into input coordinates.
pub fn crop_boundary(p: &Homography, window: &CropWindow) -> Result<Quad> {
    transform_quad(&window.rect(), p)
}

/// True iff `crop` lies within `[0, W] x [0, H]` (boundary included).
pub fn is_inside_conventional(crop: &Quad, width: usize, height: usize) -> bool {
    let (w, h) = (width as f64, height as f64);
    crop.0.iter().all(|p| {
        p.x >= -CONTAIN_TOL && p.y >= -CONTAIN_TOL && p.x <= w + CONTAIN_TOL && p.y <= h + CONTAIN_TOL
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StitchChoice {
    NoStitch,
    StitchPrev,
    StitchNext,
    Fail,
}

impl StitchChoice {
    pub fn is_usable(self) -> bool {
        self != StitchChoice::Fail
    }
}

/// Output-frame edges, in the fixed order used for tie-breaking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Edge {
    Top,
    Right,
    Bottom,
    Left,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Top, Edge::Right, Edge::Bottom, Edge::Left];

    pub fn opposite(self) -> Edge {
        match self {
            Edge::Top => Edge::Bottom,
            Edge::Right => Edge::Left,
            Edge::Bottom => Edge::Top,
            Edge::Left => Edge::Right,
        }
    }
}

/// Set of touched output edges as a bitmask over [`Edge::ALL`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct EdgeSet(pub u8);

impl EdgeSet {
    pub fn insert(&mut self, e: Edge) {
        self.0 |= 1 << e as u8;
    }

    pub fn contains(self, e: Edge) -> bool {
        self.0 & (1 << e as u8) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Edge> {
        Edge::ALL.into_iter().filter(move |&e| self.contains(e))
    }

    /// Two opposite edges, or all four: no open seam can separate the deficit.
    pub fn is_ring(self) -> bool {
        match self.len() {
            4 => true,
            2 => {
                let mut it = self.iter();
                let a = it.next().unwrap();
                it.next() == Some(a.opposite())
            }
            _ => false,
        }
    }
}

/// Output edges touched by the region of the crop not covered by the main
/// frame, computed in output coordinates.
///
/// A band along one edge meets its two neighboring edges only where the
/// main-covered part is absent, so those neighbors do not count as touched.
/// Returns `None` when the main frame misses the crop entirely.
pub fn deficit_edges(p: &Homography, window: &CropWindow, width: usize, height: usize) -> Option<EdgeSet> {
    let p_inv = p.inverse().ok()?;
    let main = transform_quad(&Quad::rect(0.0, 0.0, width as f64, height as f64), &p_inv).ok()?;
    let (x0, y0) = (window.x0, window.y0);
    let (x1, y1) = (x0 + window.width as f64, y0 + window.height as f64);
    let covered = clip_polygon_to_rect(main.vertices(), x0, y0, x1, y1);
    if covered.len() < 3 {
        return None;
    }
    let (mut cx0, mut cx1, mut cy0, mut cy1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for v in &covered {
        cx0 = cx0.min(v.x);
        cx1 = cx1.max(v.x);
        cy0 = cy0.min(v.y);
        cy1 = cy1.max(v.y);
    }
    let tol = 1e-6;
    let mut set = EdgeSet::default();
    for edge in Edge::ALL {
        let (a, b) = match edge {
            Edge::Top => (Point::new(x0, y0), Point::new(x1, y0)),
            Edge::Bottom => (Point::new(x0, y1), Point::new(x1, y1)),
            Edge::Left => (Point::new(x0, y0), Point::new(x0, y1)),
            Edge::Right => (Point::new(x1, y0), Point::new(x1, y1)),
        };
        // Parameter interval of the covered region's projection onto this edge.
        let (plo, phi) = match edge {
            Edge::Top | Edge::Bottom => ((cx0 - x0) / (x1 - x0), (cx1 - x0) / (x1 - x0)),
            Edge::Left | Edge::Right => ((cy0 - y0) / (y1 - y0), (cy1 - y0) / (y1 - y0)),
        };
        let inside = main.clip_segment(a, b);
        // Uncovered pieces of the edge: complement of `inside` in [0, 1].
        let gaps: Vec<(f64, f64)> = match inside {
            None => vec![(0.0, 1.0)],
            Some((t0, t1)) => vec![(0.0, t0), (t1, 1.0)],
        };
        let touched = gaps.iter().any(|&(g0, g1)| {
            g1 - g0 > tol && g0.max(plo) + tol < g1.min(phi)
        });
        if touched {
            set.insert(edge);
        }
    }
    Some(set)
}

/// Stitching-aware inside test for crop matrix `p` of the current frame.
///
/// `m_prev` maps the previous frame into the current one and `m_next` maps
/// the current frame into the next one. Deficits that touch two opposite
/// edges (or all four) cannot be separated by an open seam and fail.
pub fn is_inside_stitching(
    p: &Homography,
    window: &CropWindow,
    m_prev: Option<&Homography>,
    m_next: Option<&Homography>,
    width: usize,
    height: usize,
) -> StitchChoice {
    let Ok(crop) = crop_boundary(p, window) else {
        return StitchChoice::Fail;
    };
    if is_inside_conventional(&crop, width, height) {
        return StitchChoice::NoStitch;
    }
    let main = Quad::rect(0.0, 0.0, width as f64, height as f64);
    let mut ring_checked: Option<bool> = None;
    let mut ring = || *ring_checked.get_or_insert_with(|| deficit_edges(p, window, width, height).is_none_or(|e| e.is_ring()));
    if let Some(m) = m_prev {
        if let Ok(sub) = transform_quad(&main, m) {
            if quad_inside_union(&crop, &main, &sub) && !ring() {
                return StitchChoice::StitchPrev;
            }
        }
    }
    if let Some(m) = m_next {
        if let Ok(sub) = m.inverse().and_then(|inv| transform_quad(&main, &inv)) {
            if quad_inside_union(&crop, &main, &sub) && !ring() {
                return StitchChoice::StitchNext;
            }
        }
    }
    StitchChoice::Fail
}

/// `eps I + (1 - eps) P` on the normalized matrix.
pub fn to_identity(p: &Homography, eps: f64) -> Homography {
    let m = p.normalized().matrix() * (1.0 - eps) + nalgebra::Matrix3::identity() * eps;
    Homography::from_matrix(m)
}

/// Blends `p` towards the identity until `inside` accepts it. Returns the
/// accepted matrix and the number of blend steps.
pub fn ensure_inside(
    p: &Homography,
    mut inside: impl FnMut(&Homography) -> bool,
    eps: f64,
    max_iterations: usize,
) -> Result<(Homography, usize)> {
    let mut cur = p.normalized();
    let mut iterations = 0;
    while !inside(&cur) {
        if iterations == max_iterations {
            return Err(Error::EnsureInsideDiverged(max_iterations));
        }
        cur = to_identity(&cur, eps);
        iterations += 1;
    }
    Ok((cur, iterations))
}

/// `Q_n ~ R(g) N Q_{n-1}` with the residual blended towards the identity.
/// Returns the decomposition of the new `Q`.
pub fn filter_step(
    q_prev: &Homography,
    g: Angles,
    n: &Homography,
    cam: &CameraParams,
    params: &FilterParams,
) -> Result<AngleDecomposition> {
    let q = g.homography(cam).compose(n).compose(q_prev);
    let mut dec = decompose(&q, cam)?;
    let lam = dec.residual.normalized().matrix() * (1.0 - params.eta) + nalgebra::Matrix3::identity() * params.eta;
    dec.residual = Homography::from_matrix(lam);
    Ok(dec)
}

/// Runs [`ensure_inside`] with the predicate for `mode`. Returns the accepted
/// `P`, the iteration count and the stitch choice made for it.
#[allow(clippy::too_many_arguments)]
pub fn enforce_inside(
    p: &Homography,
    mode: InsideMode,
    window: &CropWindow,
    m_prev: Option<&Homography>,
    m_next: Option<&Homography>,
    width: usize,
    height: usize,
    params: &FilterParams,
) -> Result<(Homography, usize, StitchChoice)> {
    let mut choice = StitchChoice::NoStitch;
    let (p, iterations) = match mode {
        InsideMode::Conventional => ensure_inside(
            p,
            |c| crop_boundary(c, window).is_ok_and(|q| is_inside_conventional(&q, width, height)),
            params.epsilon,
            params.max_iterations,
        )?,
        InsideMode::Stitching => ensure_inside(
            p,
            |c| {
                choice = is_inside_stitching(c, window, m_prev, m_next, width, height);
                choice.is_usable()
            },
            params.epsilon,
            params.max_iterations,
        )?,
    };
    Ok((p, iterations, choice))
}

/// Mid-range filter state plus the distortion-free cropping matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub q: Homography,
    pub windows: [MidRange; 3],
    pub last: AngleDecomposition,
}

impl FilterState {
    pub fn new(params: &FilterParams) -> Self {
        Self {
            q: Homography::identity(),
            windows: std::array::from_fn(|_| MidRange::new(params.window)),
            last: AngleDecomposition::identity(),
        }
    }

    /// One filter step with the mid-range low pass.
    pub fn update(&mut self, n: &Homography, cam: &CameraParams, params: &FilterParams) -> Result<Homography> {
        let n_inv = n.inverse()?;
        let raw = estimate_angles(&n_inv, cam).as_array();
        let g = Angles::from_array(std::array::from_fn(|i| self.windows[i].push(raw[i])));
        self.step(g, n, cam, params)
    }

    /// One filter step with the camera motion `g` given directly.
    pub fn update_forced(
        &mut self,
        n: &Homography,
        g: Angles,
        cam: &CameraParams,
        params: &FilterParams,
    ) -> Result<Homography> {
        self.step(g, n, cam, params)
    }

    fn step(&mut self, g: Angles, n: &Homography, cam: &CameraParams, params: &FilterParams) -> Result<Homography> {
        let dec = filter_step(&self.q, g, n, cam, params)?;
        self.q = dec.recompose(cam);
        self.last = dec;
        Ok(self.q)
    }

    /// Re-derives `Q = D^-1 P` after `P` was forced inside.
    pub fn resync(&mut self, p: &Homography, d: &Homography, cam: &CameraParams) -> Result<()> {
        self.q = d.inverse()?.compose(p);
        self.last = decompose(&self.q, cam)?;
        Ok(())
    }
}

/// Which inside test drives enforcement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsideMode {
    Conventional,
    Stitching,
}

/// Per-frame outcome of [`Stabilizer::process`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameDecision {
    /// Output-to-input crop matrix.
    pub p: Homography,
    pub d: Homography,
    pub n: Homography,
    pub iterations: usize,
    pub choice: StitchChoice,
    /// Decomposition of the final distortion-free crop matrix.
    pub decomposition: AngleDecomposition,
}

/// The full per-frame stabilizer: rolling-shutter factorization, filter
/// update and inside enforcement.
#[derive(Clone, Debug, PartialEq)]
pub struct Stabilizer {
    pub cam: CameraParams,
    pub params: FilterParams,
    pub mode: InsideMode,
    pub window: CropWindow,
    pub filter: FilterState,
    pub rs: RsState,
}

impl Stabilizer {
    pub fn new(cam: CameraParams, params: FilterParams, mode: InsideMode) -> Result<Self> {
        cam.validate()?;
        params.validate()?;
        let window = CropWindow::new(cam.width, cam.height, params.crop_ratio);
        let filter = FilterState::new(&params);
        Ok(Self { cam, params, mode, window, filter, rs: RsState::default() })
    }

    /// Decision for the first frame of a stream: no motion, `P = I`.
    pub fn first_frame(&self) -> FrameDecision {
        FrameDecision {
            p: Homography::identity(),
            d: Homography::identity(),
            n: Homography::identity(),
            iterations: 0,
            choice: StitchChoice::NoStitch,
            decomposition: AngleDecomposition::identity(),
        }
    }

    /// Processes motion `m` (previous to current). `m_next` (current to next)
    /// is consulted only in stitching mode; `g` forces the camera motion
    /// instead of the mid-range filter.
    pub fn process(&mut self, m: &Homography, m_next: Option<&Homography>, g: Option<Angles>) -> Result<FrameDecision> {
        let (d, n) = self.rs.advance(m, &self.cam);
        let q = match g {
            Some(g) => self.filter.update_forced(&n, g, &self.cam, &self.params)?,
            None => self.filter.update(&n, &self.cam, &self.params)?,
        };
        let p = d.compose(&q);
        let (w, h) = (self.cam.width, self.cam.height);
        let (p, iterations, choice) =
            enforce_inside(&p, self.mode, &self.window, Some(m), m_next, w, h, &self.params)?;
        if iterations > 0 {
            self.filter.resync(&p, &d, &self.cam)?;
        }
        Ok(FrameDecision { p, d, n, iterations, choice, decomposition: self.filter.last })
    }
}
