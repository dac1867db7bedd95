//! Deficit classification, seam search and two-frame merging.
//!
//! Everything up to the seam runs on quarter-resolution warps. The deficit
//! (output pixels the main frame cannot supply) is expanded to the cheapest
//! edge-anchored shape, a wider search band of the same shape bounds the
//! seam, and Dijkstra finds the minimum-cost path along pixel borders between
//! the two places where the band meets the frame border. Pixels on the
//! deficit side of the seam come from the sub frame.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{Edge, EdgeSet};
use crate::frame::Plane;
use crate::warp::WarpedImage;

/// Impassable edge.
pub const INF: u32 = u32::MAX;
/// Cost of an edge whose pixels lack a valid luma in one of the frames.
pub const LARGE: u32 = 4 * 255 + 1;
/// Default search-band width relative to the expanded deficit.
pub const DEFAULT_BAND_FACTOR: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeficitType {
    I,
    L,
    C,
    O,
}

/// Edge-anchored region shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expansion {
    /// Union of bands along the edges, depths indexed as [`Edge::ALL`].
    Bands([usize; 4]),
    /// Rectangle anchored in the corner between two adjacent edges, with
    /// extents measured away from each of them.
    Corner { edges: (Edge, Edge), depths: (usize, usize) },
}

/// Distance of pixel `(x, y)` from an edge of a `w x h` raster.
fn dist(e: Edge, x: usize, y: usize, w: usize, h: usize) -> usize {
    match e {
        Edge::Top => y,
        Edge::Right => w - 1 - x,
        Edge::Bottom => h - 1 - y,
        Edge::Left => x,
    }
}

fn edge_len(e: Edge, w: usize, h: usize) -> usize {
    match e {
        Edge::Top | Edge::Bottom => w,
        Edge::Left | Edge::Right => h,
    }
}

impl Expansion {
    pub fn contains(&self, x: usize, y: usize, w: usize, h: usize) -> bool {
        match *self {
            Expansion::Bands(d) => Edge::ALL.iter().zip(d).any(|(&e, depth)| dist(e, x, y, w, h) < depth),
            Expansion::Corner { edges: (a, b), depths: (da, db) } => {
                dist(a, x, y, w, h) < da && dist(b, x, y, w, h) < db
            }
        }
    }

    pub fn area(&self, w: usize, h: usize) -> usize {
        let mut n = 0;
        for y in 0..h {
            for x in 0..w {
                n += self.contains(x, y, w, h) as usize;
            }
        }
        n
    }

    /// Edges the shape is anchored on.
    pub fn edges(&self) -> EdgeSet {
        let mut s = EdgeSet::default();
        match *self {
            Expansion::Bands(d) => Edge::ALL.iter().zip(d).filter(|(_, d)| *d > 0).for_each(|(&e, _)| s.insert(e)),
            Expansion::Corner { edges: (a, b), .. } => {
                s.insert(a);
                s.insert(b);
            }
        }
        s
    }

    /// Same shape with every depth multiplied by `factor`, capped one pixel
    /// short of the far side. Fails if the cap leaves no room to grow.
    pub fn scaled(&self, factor: f64, w: usize, h: usize) -> Result<Expansion> {
        let grow = |depth: usize, e: Edge| -> Result<usize> {
            if depth == 0 {
                return Ok(0);
            }
            let limit = match e {
                Edge::Top | Edge::Bottom => h,
                Edge::Left | Edge::Right => w,
            } - 1;
            let d = ((depth as f64 * factor).ceil() as usize).min(limit);
            if d <= depth {
                return Err(Error::DegenerateBand);
            }
            Ok(d)
        };
        Ok(match *self {
            Expansion::Bands(d) => {
                let mut out = [0; 4];
                for (i, e) in Edge::ALL.into_iter().enumerate() {
                    out[i] = grow(d[i], e)?;
                }
                Expansion::Bands(out)
            }
            Expansion::Corner { edges: (a, b), depths: (da, db) } => {
                Expansion::Corner { edges: (a, b), depths: (grow(da, a)?, grow(db, b)?) }
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeficitShape {
    pub kind: DeficitType,
    pub touched: EdgeSet,
    pub expansion: Expansion,
    pub area: usize,
}

fn tie_key(exp: &Expansion, nominal_edges: usize) -> (usize, Vec<u8>) {
    (nominal_edges, exp.edges().iter().map(|e| e as u8).collect())
}

/// Output edges the deficit touches. A deficit pixel on an edge counts only
/// if the row or column it sits in also holds non-deficit pixels, so a band
/// along one edge does not touch its two neighbors.
pub fn touched_edges(mask: &[bool], w: usize, h: usize) -> EdgeSet {
    let col_mixed: Vec<bool> = (0..w).map(|x| (0..h).any(|y| !mask[y * w + x])).collect();
    let row_mixed: Vec<bool> = (0..h).map(|y| (0..w).any(|x| !mask[y * w + x])).collect();
    let mut s = EdgeSet::default();
    if (0..w).any(|x| mask[x] && col_mixed[x]) {
        s.insert(Edge::Top);
    }
    if (0..h).any(|y| mask[y * w + w - 1] && row_mixed[y]) {
        s.insert(Edge::Right);
    }
    if (0..w).any(|x| mask[(h - 1) * w + x] && col_mixed[x]) {
        s.insert(Edge::Bottom);
    }
    if (0..h).any(|y| mask[y * w] && row_mixed[y]) {
        s.insert(Edge::Left);
    }
    s
}

/// Classifies a deficit mask (`true` = deficit) by its cheapest expansion.
///
/// Candidates are a band along one edge (I), a corner rectangle or the union
/// of two bands along adjacent edges (L), and the union of three bands (C),
/// each with the smallest depths that contain the deficit. The smallest area
/// wins; ties go to fewer edges, then to edge order top, right, bottom, left.
/// Deficits touching two opposite edges or all four are type O.
pub fn classify_deficit(mask: &[bool], w: usize, h: usize) -> Result<DeficitShape> {
    if w == 0 || h == 0 || mask.len() != w * h {
        return Err(Error::InvalidParam("mask size does not match dimensions".into()));
    }
    let pixels: Vec<(usize, usize)> =
        (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| mask[y * w + x]).collect();
    if pixels.is_empty() {
        return Err(Error::InvalidParam("empty deficit mask".into()));
    }
    let touched = touched_edges(mask, w, h);
    let o_shape = |touched| DeficitShape { kind: DeficitType::O, touched, expansion: Expansion::Bands([0; 4]), area: w * h };
    if pixels.len() == w * h || touched.is_ring() {
        return Ok(o_shape(touched));
    }

    let mut cands: Vec<(usize, (usize, Vec<u8>), Expansion)> = Vec::new();
    let mut push = |exp: Expansion, nominal: usize| {
        let area = exp.area(w, h);
        let key = tie_key(&exp, nominal);
        cands.push((area, key, exp));
    };

    // Single bands.
    for (i, e) in Edge::ALL.into_iter().enumerate() {
        let depth = pixels.iter().map(|&(x, y)| dist(e, x, y, w, h) + 1).max().unwrap();
        let mut d = [0; 4];
        d[i] = depth;
        push(Expansion::Bands(d), 1);
    }

    // Adjacent pairs.
    for i in 0..4 {
        let (a, b) = (Edge::ALL[i], Edge::ALL[(i + 1) % 4]);
        let da = pixels.iter().map(|&(x, y)| dist(a, x, y, w, h) + 1).max().unwrap();
        let db = pixels.iter().map(|&(x, y)| dist(b, x, y, w, h) + 1).max().unwrap();
        push(Expansion::Corner { edges: (a, b), depths: (da, db) }, 2);

        // Band union: for each depth along `a`, the depth along `b` needed to
        // cover the rest.
        let la = edge_len(b, w, h); // depth range along a's normal
        let mut need_b = vec![0usize; la + 1];
        for &(x, y) in &pixels {
            let t = dist(a, x, y, w, h);
            need_b[t] = need_b[t].max(dist(b, x, y, w, h) + 1);
        }
        for t in (0..la).rev() {
            need_b[t] = need_b[t].max(need_b[t + 1]);
        }
        let (mut best, mut best_area) = ((0, 0), usize::MAX);
        for (ta, &tb) in need_b.iter().enumerate() {
            let area = ta * edge_len(a, w, h) + tb * edge_len(b, w, h) - ta * tb;
            if area < best_area {
                best_area = area;
                best = (ta, tb);
            }
        }
        let mut d = [0; 4];
        d[i] = best.0;
        d[(i + 1) % 4] = best.1;
        push(Expansion::Bands(d), 2);
    }

    // Three bands: a middle edge and its two neighbors.
    for i in 0..4 {
        let mid = Edge::ALL[i];
        let s1 = Edge::ALL[(i + 3) % 4];
        let len = edge_len(mid, w, h);
        let span = edge_len(s1, w, h);
        // Rows of pixels by distance from the middle edge, each as positions
        // measured from s1.
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); span];
        for &(x, y) in &pixels {
            rows[dist(mid, x, y, w, h)].push(dist(s1, x, y, w, h));
        }
        let mut occupied = vec![false; len];
        let (mut best, mut best_area) = ((0, 0, 0), usize::MAX);
        for t in (0..=span).rev() {
            if t < span {
                for &u in &rows[t] {
                    occupied[u] = true;
                }
            }
            // Pixels at distance >= t from `mid` are occupied; the largest
            // empty run of positions splits them between the side bands.
            let (l, r) = widest_gap_split(&occupied);
            let area = t * len + (l + r) * (span - t);
            if area < best_area {
                best_area = area;
                best = (t, l, r);
            }
        }
        let mut d = [0; 4];
        d[i] = best.0;
        d[(i + 3) % 4] = best.1;
        d[(i + 1) % 4] = best.2;
        push(Expansion::Bands(d), 3);
    }

    cands.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let (area, (nominal, _), expansion) = cands.into_iter().next().unwrap();
    let kind = match nominal {
        1 => DeficitType::I,
        2 => DeficitType::L,
        _ => DeficitType::C,
    };
    Ok(DeficitShape { kind, touched, expansion, area })
}

/// Side-band depths `(l, r)` covering the occupied positions with minimal
/// `l + r`: everything left and right of the widest empty run.
fn widest_gap_split(occupied: &[bool]) -> (usize, usize) {
    let len = occupied.len();
    if !occupied.iter().any(|&o| o) {
        return (0, 0);
    }
    // Maximal empty runs [a, b) including the two ends.
    let (mut best_len, mut best) = (0usize, (0usize, 0usize));
    let mut a = 0;
    while a < len {
        if occupied[a] {
            a += 1;
            continue;
        }
        let mut b = a;
        while b < len && !occupied[b] {
            b += 1;
        }
        if b - a > best_len {
            best_len = b - a;
            best = (a, b);
        }
        a = b;
    }
    if best_len == 0 {
        return (len, 0);
    }
    (best.0, len - best.1)
}

/// Pixel-border graph of a `width x height` raster. Nodes are the
/// `(width + 1) x (height + 1)` pixel corners, indexed `y * (width + 1) + x`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeamGraph {
    pub width: usize,
    pub height: usize,
    /// Edge between nodes `(x, y)` and `(x + 1, y)`, indexed `y * width + x`.
    pub h_edges: Vec<u32>,
    /// Edge between nodes `(x, y)` and `(x, y + 1)`, indexed `y * (width + 1) + x`.
    pub v_edges: Vec<u32>,
    pub start: Vec<usize>,
    pub end: Vec<usize>,
    /// When set, horizontal edges may only be walked left to right.
    pub monotone_x: bool,
}

impl SeamGraph {
    /// All edges impassable, no endpoints.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            h_edges: vec![INF; width * (height + 1)],
            v_edges: vec![INF; (width + 1) * height],
            start: Vec::new(),
            end: Vec::new(),
            monotone_x: false,
        }
    }

    pub fn node_count(&self) -> usize {
        (self.width + 1) * (self.height + 1)
    }

    pub fn node(&self, x: usize, y: usize) -> usize {
        y * (self.width + 1) + x
    }

    pub fn node_xy(&self, n: usize) -> (usize, usize) {
        (n % (self.width + 1), n / (self.width + 1))
    }

    /// Passable neighbors of `n` with edge costs, in a fixed order.
    pub fn neighbors(&self, n: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let (x, y) = self.node_xy(n);
        let w = self.width;
        let left = (x > 0 && !self.monotone_x).then(|| (n - 1, self.h_edges[y * w + x - 1]));
        let right = (x < w).then(|| (n + 1, self.h_edges[y * w + x]));
        let up = (y > 0).then(|| (n - (w + 1), self.v_edges[(y - 1) * (w + 1) + x]));
        let down = (y < self.height).then(|| (n + w + 1, self.v_edges[y * (w + 1) + x]));
        [up, left, right, down].into_iter().flatten().filter(|&(_, c)| c != INF)
    }

    /// Cost of the edge joining two adjacent nodes.
    pub fn edge_cost(&self, a: usize, b: usize) -> Option<u32> {
        let (ax, ay) = self.node_xy(a);
        let (bx, by) = self.node_xy(b);
        let c = if ay == by && ax.abs_diff(bx) == 1 {
            self.h_edges[ay * self.width + ax.min(bx)]
        } else if ax == bx && ay.abs_diff(by) == 1 {
            self.v_edges[ay.min(by) * (self.width + 1) + ax]
        } else {
            return None;
        };
        (c != INF).then_some(c)
    }
}

/// A node path and its total cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seam {
    pub nodes: Vec<usize>,
    pub cost: u64,
}

/// Minimum-cost path from any start node to any end node. Ties between equal
/// costs resolve by node index.
pub fn dijkstra_seam(graph: &SeamGraph) -> Result<Seam> {
    if graph.start.is_empty() || graph.end.is_empty() {
        return Err(Error::NoSeam);
    }
    let n = graph.node_count();
    let mut dist = vec![u64::MAX; n];
    let mut prev = vec![usize::MAX; n];
    let mut is_end = vec![false; n];
    for &e in &graph.end {
        is_end[e] = true;
    }
    let mut heap = BinaryHeap::new();
    for &s in &graph.start {
        if dist[s] != 0 {
            dist[s] = 0;
            heap.push(Reverse((0u64, s)));
        }
    }
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if is_end[u] {
            let mut nodes = vec![u];
            let mut cur = u;
            while prev[cur] != usize::MAX {
                cur = prev[cur];
                nodes.push(cur);
            }
            nodes.reverse();
            return Ok(Seam { nodes, cost: d });
        }
        for (v, c) in graph.neighbors(u) {
            let nd = d + c as u64;
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = u;
                heap.push(Reverse((nd, v)));
            }
        }
    }
    Err(Error::NoSeam)
}

/// Pixels in the 3x3 neighborhood of any deficit pixel.
pub fn dilate(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    out[yy * w + xx] = true;
                }
            }
        }
    }
    out
}

/// Search band and its seam endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchRegion {
    /// Expanded deficit.
    pub expanded: Vec<bool>,
    /// Expanded deficit widened by the band factor.
    pub band: Vec<bool>,
    pub start: Vec<usize>,
    pub end: Vec<usize>,
}

/// Border nodes walked clockwise from the top-left corner.
fn perimeter(w: usize, h: usize) -> Vec<(usize, usize)> {
    let mut p = Vec::with_capacity(2 * (w + h));
    p.extend((0..w).map(|x| (x, 0)));
    p.extend((0..h).map(|y| (w, y)));
    p.extend((1..=w).rev().map(|x| (x, h)));
    p.extend((1..=h).rev().map(|y| (0, y)));
    p
}

/// Whether node `(x, y)` touches a pixel of `set`.
fn node_touches(set: &[bool], w: usize, h: usize, x: usize, y: usize) -> bool {
    let xs = x.saturating_sub(1)..(x + 1).min(w);
    xs.clone().any(|px| (y.saturating_sub(1)..(y + 1).min(h)).any(|py| set[py * w + px]))
}

/// Widens the expanded deficit by `factor` and finds the two border
/// segments where the band meets the output border.
pub fn build_search_region(shape: &DeficitShape, factor: f64, w: usize, h: usize) -> Result<SearchRegion> {
    if shape.kind == DeficitType::O {
        return Err(Error::TypeO);
    }
    if !(2.0..=4.0).contains(&factor) {
        return Err(Error::InvalidParam(format!("band factor {factor} must be in [2, 4]")));
    }
    let wide = shape.expansion.scaled(factor, w, h)?;
    let region: Vec<bool> = (0..w * h).map(|i| shape.expansion.contains(i % w, i / w, w, h)).collect();
    let band: Vec<bool> = (0..w * h).map(|i| wide.contains(i % w, i / w, w, h)).collect();
    let per = perimeter(w, h);
    let selected: Vec<bool> =
        per.iter().map(|&(x, y)| node_touches(&band, w, h, x, y) && !node_touches(&region, w, h, x, y)).collect();
    let node = |(x, y): (usize, usize)| y * (w + 1) + x;
    // Rotate to an unselected node so cyclic runs come out whole.
    let Some(pivot) = selected.iter().position(|s| !s) else {
        return Err(Error::DegenerateBand);
    };
    let mut runs: Vec<Vec<usize>> = Vec::new();
    let mut in_run = false;
    for k in 0..per.len() {
        let i = (pivot + k) % per.len();
        if selected[i] {
            if !in_run {
                runs.push(Vec::new());
                in_run = true;
            }
            runs.last_mut().unwrap().push(node(per[i]));
        } else {
            in_run = false;
        }
    }
    if runs.len() != 2 {
        return Err(Error::DegenerateBand);
    }
    let end = runs.pop().unwrap();
    let start = runs.pop().unwrap();
    Ok(SearchRegion { expanded: region, band, start, end })
}

/// Fills the graph's edge costs from quarter-scale main and sub warps.
///
/// Edges next to the dilated deficit are impassable, edges outside the band
/// are excluded, frame-border edges are free outside the expanded deficit,
/// and edges where any luma is missing cost [`LARGE`].
pub fn edge_costs(main: &WarpedImage, sub: &WarpedImage, deficit: &[bool], region: &SearchRegion) -> SeamGraph {
    let (w, h) = (main.width, main.height);
    let moat = dilate(deficit, w, h);
    let mut g = SeamGraph::new(w, h);
    let cost = |a: usize, b: usize| -> u32 {
        if moat[a] || moat[b] {
            return INF;
        }
        if !(main.valid[a] && main.valid[b] && sub.valid[a] && sub.valid[b]) {
            return LARGE;
        }
        let (ma, sa, mb, sb) = (main.luma[a] as i32, sub.luma[a] as i32, main.luma[b] as i32, sub.luma[b] as i32);
        ((ma - sb).abs() + (sa - mb).abs()) as u32
    };
    let border = |p: usize| if region.expanded[p] { INF } else { 0 };
    for y in 0..=h {
        for x in 0..w {
            // Pixels above and below this horizontal border.
            let above = (y > 0).then(|| (y - 1) * w + x);
            let below = (y < h).then(|| y * w + x);
            let c = match (above, below) {
                (Some(a), Some(b)) if region.band[a] || region.band[b] => cost(a, b),
                (Some(p), None) | (None, Some(p)) if region.band[p] => border(p),
                _ => INF,
            };
            g.h_edges[y * w + x] = c;
        }
    }
    for y in 0..h {
        for x in 0..=w {
            let left = (x > 0).then(|| y * w + x - 1);
            let right = (x < w).then(|| y * w + x);
            let c = match (left, right) {
                (Some(a), Some(b)) if region.band[a] || region.band[b] => cost(a, b),
                (Some(p), None) | (None, Some(p)) if region.band[p] => border(p),
                _ => INF,
            };
            g.v_edges[y * (w + 1) + x] = c;
        }
    }
    g.start = region.start.clone();
    g.end = region.end.clone();
    g
}

/// Marks the pixels reachable from the deficit without crossing the seam.
pub fn label_sub_side(deficit: &[bool], w: usize, h: usize, seam: &Seam) -> Vec<bool> {
    // Seam edges as blocked pixel borders.
    let mut block_h = vec![false; w * (h + 1)];
    let mut block_v = vec![false; (w + 1) * h];
    for pair in seam.nodes.windows(2) {
        let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
        let (ax, ay) = (a % (w + 1), a / (w + 1));
        if b == a + 1 {
            block_h[ay * w + ax] = true;
        } else {
            block_v[ay * (w + 1) + ax] = true;
        }
    }
    let mut label = vec![false; w * h];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, &d) in deficit.iter().enumerate() {
        if d {
            label[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(p) = queue.pop_front() {
        let (x, y) = (p % w, p / w);
        // Crossing to a neighbor passes one pixel border.
        let steps = [
            (x > 0 && !block_v[y * (w + 1) + x]).then(|| p - 1),
            (x + 1 < w && !block_v[y * (w + 1) + x + 1]).then(|| p + 1),
            (y > 0 && !block_h[y * w + x]).then(|| p - w),
            (y + 1 < h && !block_h[(y + 1) * w + x]).then(|| p + w),
        ];
        for q in steps.into_iter().flatten() {
            if !label[q] {
                label[q] = true;
                queue.push_back(q);
            }
        }
    }
    label
}

/// Everything found at quarter scale for one stitched frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SeamResult {
    pub shape: DeficitShape,
    pub region: SearchRegion,
    pub seam: Seam,
    /// Quarter-scale sub-side labels.
    pub labels: Vec<bool>,
    pub deficit: Vec<bool>,
    pub width: usize,
    pub height: usize,
}

/// Classifies the deficit of `main`, builds the band and finds the seam.
pub fn find_seam(main: &WarpedImage, sub: &WarpedImage, factor: f64) -> Result<SeamResult> {
    let (w, h) = (main.width, main.height);
    if (sub.width, sub.height) != (w, h) {
        return Err(Error::InvalidParam("main and sub warps differ in size".into()));
    }
    let deficit: Vec<bool> = main.valid.iter().map(|v| !v).collect();
    let shape = classify_deficit(&deficit, w, h)?;
    if shape.kind == DeficitType::O {
        return Err(Error::TypeO);
    }
    let region = build_search_region(&shape, factor, w, h)?;
    let graph = edge_costs(main, sub, &deficit, &region);
    let seam = dijkstra_seam(&graph)?;
    let labels = label_sub_side(&deficit, w, h, &seam);
    Ok(SeamResult { shape, region, seam, labels, deficit, width: w, height: h })
}

/// Per-pixel source of a merged frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Main,
    Sub,
    Missing,
}

/// Picks main or sub per full-resolution pixel. With labels (quarter scale,
/// `true` = sub side, upscaled by `factor` nearest-neighbor) each side prefers
/// its own frame and falls back to the other; without labels, sub fills only
/// where main is invalid.
pub fn merge_sources(main: &WarpedImage, sub: &WarpedImage, labels: Option<(&[bool], usize, usize)>) -> Vec<Source> {
    let w = main.width;
    (0..main.luma.len())
        .map(|i| {
            let prefer_sub = match labels {
                Some((l, lw, factor)) => {
                    let (x, y) = (i % w / factor, i / w / factor);
                    l[y * lw + x]
                }
                None => false,
            };
            let (first, second) = if prefer_sub { (Source::Sub, Source::Main) } else { (Source::Main, Source::Sub) };
            let ok = |s: Source| match s {
                Source::Main => main.valid[i],
                Source::Sub => sub.valid[i],
                Source::Missing => false,
            };
            if ok(first) {
                first
            } else if ok(second) {
                second
            } else {
                Source::Missing
            }
        })
        .collect()
}

/// Assembles a plane from per-pixel sources.
pub fn merge_plane(main: &WarpedImage, sub: &WarpedImage, sources: &[Source]) -> Plane {
    let data = sources
        .iter()
        .enumerate()
        .map(|(i, s)| match s {
            Source::Main => main.luma[i],
            Source::Sub => sub.luma[i],
            Source::Missing => 0,
        })
        .collect();
    Plane { width: main.width, height: main.height, data }
}

/// Debug rendering of a seam search: deficit in blue, sub side in pink,
/// search band in yellow, seam pixels in red, main content in gray.
pub fn debug_overlay(result: &SeamResult, main: &WarpedImage) -> Vec<[u8; 3]> {
    let (w, h) = (result.width, result.height);
    let mut out: Vec<[u8; 3]> = main.luma.iter().map(|&v| [v / 2, v / 2, v / 2]).collect();
    for (i, px) in out.iter_mut().enumerate() {
        if result.deficit[i] {
            *px = [40, 60, 220];
        } else if result.labels[i] {
            *px = [240, 120, 200];
        } else if result.region.band[i] {
            let v = main.luma[i] / 2;
            *px = [128 + v / 2, 128 + v / 2, v / 4];
        }
    }
    for &n in &result.seam.nodes {
        let (x, y) = (n % (w + 1), n / (w + 1));
        let (x, y) = (x.min(w - 1), y.min(h - 1));
        out[y * w + x] = [230, 30, 30];
    }
    out
}
