//! Frame-skipping hyperlapse with a bounded tree search over camera
//! velocities.
//!
//! Motion between consecutive output frames is the product of the stored
//! per-frame motions it skips. Each tree node carries a virtual stabilizer
//! (its distortion-free crop matrix `Q`) that is driven by a fixed camera
//! velocity instead of the mid-range filter. Every search step expands the
//! deepest leaves by one output frame, keeps the `beam` cheapest children
//! and, once the tree is `horizon` deep, emits the first frame of the best
//! lineage.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::filter::{enforce_inside, filter_step, CropWindow, FilterParams, InsideMode, StitchChoice};
use crate::geometry::{estimate_angles, rotation_angles, Angles, CameraParams, Homography};
use crate::rolling_shutter::RsState;

/// Angle cost per radian: 1 per 10 degrees.
pub const ANGLE_COST_PER_RAD: f64 = 18.0 / std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Standard,
    Lite,
}

impl Preset {
    pub fn beam(self) -> usize {
        match self {
            Preset::Standard => 1024,
            Preset::Lite => 256,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Preset::Standard),
            "lite" => Ok(Preset::Lite),
            other => Err(Error::InvalidParam(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperlapseParams {
    pub skip: usize,
    pub eps_turn: f64,
    pub eps_outside: f64,
    pub eps_yaw: f64,
    pub eps_pitch: f64,
    pub eps_roll: f64,
    /// Tree depth before the first emission.
    pub horizon: usize,
    /// Children kept per search step.
    pub beam: usize,
    /// Turn children per leaf.
    pub turns: usize,
    /// Averaging periods are `period_base^t` for `t = 1..=turns`.
    pub period_base: usize,
}

impl Default for HyperlapseParams {
    fn default() -> Self {
        Self {
            skip: 4,
            eps_turn: 1.0,
            eps_outside: 16.0,
            eps_yaw: ANGLE_COST_PER_RAD,
            eps_pitch: ANGLE_COST_PER_RAD,
            eps_roll: ANGLE_COST_PER_RAD,
            horizon: 64,
            beam: Preset::Standard.beam(),
            turns: 6,
            period_base: 2,
        }
    }
}

impl HyperlapseParams {
    pub fn with_preset(mut self, preset: Preset) -> Self {
        self.beam = preset.beam();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let costs = [self.eps_turn, self.eps_outside, self.eps_yaw, self.eps_pitch, self.eps_roll];
        if costs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidParam("hyperlapse costs must be positive".into()));
        }
        if self.skip == 0 || self.horizon == 0 || self.turns == 0 || self.period_base == 0 {
            return Err(Error::InvalidParam("skip, horizon, turns and period base must be positive".into()));
        }
        if self.beam < self.turns + 1 {
            return Err(Error::InvalidParam(format!("beam {} must be at least turns + 1", self.beam)));
        }
        if self.periods().is_none() {
            return Err(Error::InvalidParam("averaging period overflows".into()));
        }
        Ok(())
    }

    /// `d^1, d^2, ..., d^T`.
    pub fn periods(&self) -> Option<Vec<usize>> {
        (1..=self.turns as u32).map(|t| self.period_base.checked_pow(t)).collect()
    }

    /// Off-center and outside cost of one processed frame.
    pub fn frame_cost(&self, angles: &Angles, engaged: bool) -> f64 {
        let off = self.eps_yaw * angles.yaw.abs() + self.eps_pitch * angles.pitch.abs() + self.eps_roll * angles.roll.abs();
        if engaged {
            off + self.eps_outside
        } else {
            off
        }
    }
}

/// Product of `skip` consecutive stored motions starting at `start`, where
/// `motions[i]` maps frame `i` to frame `i + 1`. The result maps frame
/// `start` to frame `start + skip`.
pub fn accumulate_skip(motions: &[Homography], start: usize, skip: usize) -> Result<Homography> {
    let len = motions.len();
    let end = start.checked_add(skip).filter(|&e| e <= len).ok_or(Error::OutOfRange { index: start.saturating_add(skip), len })?;
    Ok(motions[start..end].iter().fold(Homography::identity(), |acc, m| m.compose(&acc)).normalized())
}

/// Mean of the last `period` entries of `history` (all of them when shorter).
pub fn average_motion(history: &[Angles], period: usize) -> Angles {
    let tail = &history[history.len().saturating_sub(period.max(1))..];
    if tail.is_empty() {
        return Angles::ZERO;
    }
    let n = tail.len() as f64;
    let sum = tail.iter().fold([0.0; 3], |acc, a| {
        let a = a.as_array();
        [acc[0] + a[0], acc[1] + a[1], acc[2] + a[2]]
    });
    Angles::from_array(sum.map(|s| s / n))
}

/// One output-frame step of the skipped stream. Independent of the lineage,
/// so it is computed once.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HlStep {
    /// Motion from the previous output frame to this one.
    pub m: Homography,
    pub d: Homography,
    pub d_inv: Homography,
    pub n: Homography,
    /// Camera motion estimate that cancels `n`.
    pub angles: Angles,
}

/// Accumulates `motions` in groups of `skip`; entry `k` describes output
/// frame `k + 1`. Trailing motions that do not fill a group are dropped.
pub fn prepare_steps(motions: &[Homography], skip: usize, cam: &CameraParams) -> Result<Vec<HlStep>> {
    if skip == 0 {
        return Err(Error::InvalidParam("skip must be positive".into()));
    }
    let mut rs = RsState::default();
    (0..motions.len() / skip)
        .map(|k| {
            let m = accumulate_skip(motions, k * skip, skip)?;
            let (d, n) = rs.advance(&m, cam);
            let angles = estimate_angles(&n.inverse()?, cam);
            Ok(HlStep { m, d, d_inv: d.inverse()?, n, angles })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchNode {
    /// Index into the previous tree level.
    pub parent: usize,
    /// Output frame index.
    pub depth: usize,
    pub q: Homography,
    pub p: Homography,
    pub velocities: Angles,
    /// Accumulated from the start of the stream.
    pub cost: f64,
    pub engaged: bool,
    pub iterations: usize,
    pub choice: StitchChoice,
    /// Yaw, pitch and roll of `Q`.
    pub angles: Angles,
}

impl SearchNode {
    fn root() -> Self {
        Self {
            parent: 0,
            depth: 0,
            q: Homography::identity(),
            p: Homography::identity(),
            velocities: Angles::ZERO,
            cost: 0.0,
            engaged: false,
            iterations: 0,
            choice: StitchChoice::NoStitch,
            angles: Angles::ZERO,
        }
    }
}

/// An emitted output frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannedFrame {
    pub output_index: usize,
    pub input_index: usize,
    pub p: Homography,
    pub velocities: Angles,
    pub cost: f64,
    pub engaged: bool,
    pub iterations: usize,
    pub choice: StitchChoice,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperlapsePlan {
    pub frames: Vec<PlannedFrame>,
    pub final_cost: f64,
    /// Frames where the crop had to be forced inside.
    pub n_f: usize,
    /// Search steps run before the first result after the root was emitted.
    pub first_emission_searches: usize,
    pub searches: usize,
}

/// Incremental tree search. Level 0 of the tree holds the current root.
pub struct Planner {
    params: HyperlapseParams,
    filter: FilterParams,
    cam: CameraParams,
    window: CropWindow,
    mode: InsideMode,
    exec: Exec,
    steps: Vec<HlStep>,
    periods: Vec<usize>,
    seeds: Vec<Angles>,
    levels: VecDeque<Vec<SearchNode>>,
    consumed: usize,
    searches: usize,
}

impl Planner {
    pub fn new(
        steps: Vec<HlStep>,
        cam: CameraParams,
        params: HyperlapseParams,
        filter: FilterParams,
        mode: InsideMode,
        exec: Exec,
    ) -> Result<Self> {
        params.validate()?;
        filter.validate()?;
        cam.validate()?;
        let periods = params.periods().ok_or(Error::InvalidParam("averaging period overflows".into()))?;
        let window = CropWindow::new(cam.width, cam.height, filter.crop_ratio);
        let mut planner = Self {
            params,
            filter,
            cam,
            window,
            mode,
            exec,
            steps,
            periods,
            seeds: Vec::new(),
            levels: VecDeque::from([vec![SearchNode::root()]]),
            consumed: 0,
            searches: 0,
        };
        planner.initial_nodes();
        Ok(planner)
    }

    /// Velocities tried from the root: zero and the mean of the first `d^t`
    /// steps for each period.
    fn initial_nodes(&mut self) {
        let angles: Vec<Angles> = self.steps.iter().map(|s| s.angles).collect();
        self.seeds = std::iter::once(Angles::ZERO)
            .chain(self.periods.iter().map(|&p| average_motion(&angles[..p.min(angles.len())], p)))
            .collect();
    }

    pub fn steps(&self) -> &[HlStep] {
        &self.steps
    }

    pub fn searches(&self) -> usize {
        self.searches
    }

    /// Levels below the root.
    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn remaining_steps(&self) -> usize {
        self.steps.len() - self.consumed
    }

    pub fn leaves(&self) -> &[SearchNode] {
        self.levels.back().expect("tree has a root")
    }

    /// Runs the virtual stabilizer of `parent` one step with `velocities`.
    fn child(&self, parent: &SearchNode, parent_idx: usize, velocities: Angles, turn_cost: f64) -> Result<SearchNode> {
        let k = self.consumed;
        let step = &self.steps[k];
        let dec = filter_step(&parent.q, velocities, &step.n, &self.cam, &self.filter)?;
        let q = dec.recompose(&self.cam);
        let p = step.d.compose(&q);
        let m_next = self.steps.get(k + 1).map(|s| &s.m);
        let (p, iterations, choice) = enforce_inside(
            &p,
            self.mode,
            &self.window,
            Some(&step.m),
            m_next,
            self.cam.width,
            self.cam.height,
            &self.filter,
        )?;
        let (q, angles) = if iterations > 0 {
            let q = step.d_inv.compose(&p);
            (q, rotation_angles(&q, &self.cam))
        } else {
            (q, dec.angles)
        };
        let engaged = iterations > 0;
        Ok(SearchNode {
            parent: parent_idx,
            depth: parent.depth + 1,
            q,
            p,
            velocities,
            cost: parent.cost + turn_cost + self.params.frame_cost(&angles, engaged),
            engaged,
            iterations,
            choice,
            angles,
        })
    }

    /// Expands every deepest leaf by the next output frame and keeps the
    /// `beam` cheapest children.
    pub fn search_each_frame(&mut self) -> Result<()> {
        if self.consumed >= self.steps.len() {
            return Err(Error::OutOfRange { index: self.consumed, len: self.steps.len() });
        }
        let from_root = self.levels.len() == 1;
        let options: Vec<(Angles, f64)> = if from_root {
            self.seeds.iter().map(|&v| (v, 0.0)).collect()
        } else {
            let history: Vec<Angles> = self.steps[..=self.consumed].iter().map(|s| s.angles).collect();
            self.periods.iter().map(|&p| (average_motion(&history, p), self.params.eps_turn)).collect()
        };
        let leaves = self.leaves();
        let expanded: Vec<Result<Vec<SearchNode>>> = self.exec.map_range(leaves.len(), |i| {
            let leaf = &leaves[i];
            let mut out = Vec::with_capacity(options.len() + 1);
            if !from_root {
                out.push(self.child(leaf, i, leaf.velocities, 0.0)?);
            }
            for &(v, c) in &options {
                out.push(self.child(leaf, i, v, c)?);
            }
            Ok(out)
        });
        let mut children = Vec::with_capacity(expanded.len() * (options.len() + 1));
        for group in expanded {
            children.extend(group?);
        }
        children.sort_by(|a: &SearchNode, b| a.cost.total_cmp(&b.cost));
        children.truncate(self.params.beam);
        self.levels.push_back(children);
        self.consumed += 1;
        self.searches += 1;
        Ok(())
    }

    /// Index of the cheapest deepest leaf, first on ties.
    fn best_leaf(&self) -> usize {
        let leaves = self.leaves();
        (0..leaves.len()).fold(0, |best, i| if leaves[i].cost < leaves[best].cost { i } else { best })
    }

    /// Lineage of the best leaf as indices per level, root level first.
    fn best_path(&self) -> Vec<usize> {
        let mut path = vec![0; self.levels.len()];
        let mut idx = self.best_leaf();
        for (lvl, nodes) in self.levels.iter().enumerate().rev() {
            path[lvl] = idx;
            idx = nodes[idx].parent;
        }
        path
    }

    /// Emits the depth-1 node on the best lineage and makes it the root,
    /// keeping only its descendants.
    pub fn fix_state(&mut self) -> Option<SearchNode> {
        if self.levels.len() < 2 {
            return None;
        }
        let keep = self.best_path()[1];
        self.levels.pop_front();
        let mut remap: Vec<Option<usize>> = vec![None; self.levels[0].len()];
        remap[keep] = Some(0);
        let mut root = self.levels[0][keep];
        root.parent = 0;
        self.levels[0] = vec![root];
        for lvl in 1..self.levels.len() {
            let old = std::mem::take(&mut self.levels[lvl]);
            let mut next_map = vec![None; old.len()];
            let mut kept = Vec::new();
            for (i, mut node) in old.into_iter().enumerate() {
                if let Some(p) = remap[node.parent] {
                    node.parent = p;
                    next_map[i] = Some(kept.len());
                    kept.push(node);
                }
            }
            self.levels[lvl] = kept;
            remap = next_map;
        }
        Some(root)
    }

    /// Searches up to `horizon` steps (fewer on short clips), then emits.
    pub fn get_first(&mut self) -> Result<Option<SearchNode>> {
        while self.height() < self.params.horizon && self.remaining_steps() > 0 {
            self.search_each_frame()?;
        }
        Ok(self.fix_state())
    }

    /// One search and one emission; at stream end emits without searching.
    pub fn get_others(&mut self) -> Result<Option<SearchNode>> {
        if self.remaining_steps() > 0 {
            self.search_each_frame()?;
        }
        Ok(self.fix_state())
    }

    /// Every node on the best lineage below the root, in order.
    pub fn drain(&mut self) -> Vec<SearchNode> {
        let path = self.best_path();
        let out = self.levels.iter().zip(&path).skip(1).map(|(nodes, &i)| nodes[i]).collect();
        let last = self.levels.pop_back().map(|l| l[*path.last().unwrap_or(&0)]);
        self.levels.clear();
        let mut root = last.unwrap_or_else(SearchNode::root);
        root.parent = 0;
        self.levels.push_back(vec![root]);
        out
    }
}

/// Plans the whole stream. Output frame 0 is input frame 0 with `P = I`.
pub fn plan(
    motions: &[Homography],
    cam: CameraParams,
    params: HyperlapseParams,
    filter: FilterParams,
    mode: InsideMode,
    exec: Exec,
) -> Result<HyperlapsePlan> {
    params.validate()?;
    let steps = prepare_steps(motions, params.skip, &cam)?;
    let mut planner = Planner::new(steps, cam, params, filter, mode, exec)?;
    let mut nodes = vec![SearchNode::root()];
    let mut first_emission_searches = 0;
    if let Some(first) = planner.get_first()? {
        first_emission_searches = planner.searches();
        nodes.push(first);
        while planner.remaining_steps() > 0 {
            nodes.extend(planner.get_others()?);
        }
        nodes.extend(planner.drain());
    }
    let frames: Vec<PlannedFrame> = nodes
        .iter()
        .map(|n| PlannedFrame {
            output_index: n.depth,
            input_index: n.depth * params.skip,
            p: n.p,
            velocities: n.velocities,
            cost: n.cost,
            engaged: n.engaged,
            iterations: n.iterations,
            choice: n.choice,
        })
        .collect();
    Ok(HyperlapsePlan {
        final_cost: frames.last().map_or(0.0, |f| f.cost),
        n_f: frames.iter().filter(|f| f.engaged).count(),
        first_emission_searches,
        searches: planner.searches(),
        frames,
    })
}
