//! End-to-end runs: analysis, stabilization and hyperlapse rendering.
//!
//! Stabilization is a three-stage pipeline (decode, analyze/filter, render)
//! joined by bounded channels. In stitching mode the filter stage holds each
//! frame back until the next one has been analyzed, so the inside test can
//! consult the next frame's motion.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::filter::{CropWindow, FilterParams, FrameDecision, InsideMode, Stabilizer, StitchChoice};
use crate::frame::{Frame, Plane};
use crate::geometry::{Angles, CameraParams, Homography};
use crate::hyperlapse::{self, HyperlapseParams, HyperlapsePlan};
use crate::io::{FrameRate, FrameReader, FrameWriter};
use crate::metrics::{jitter, output_increment, EvalReport, HyperlapseMetrics, RunMetrics, Throughput};
use crate::motion::{build_pyramid, calc_motion, MotionParams, Pyramid};
use crate::seam::{self, SeamResult, Source, DEFAULT_BAND_FACTOR};
use crate::sidecar::{MotionRecord, MotionSidecar};
use crate::warp::{warp, SampleGrid, WarpedImage};

/// Settings shared by every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    /// Focal length in pixels; the frame width when absent.
    pub focal: Option<f64>,
    pub sensor_height_factor: f64,
    pub stitching: bool,
    pub filter: FilterParams,
    pub motion: MotionParams,
    /// Seam search band width relative to the deficit.
    pub band_factor: f64,
    /// Frames in flight between pipeline stages.
    pub queue_depth: usize,
    #[serde(skip)]
    pub exec: Exec,
    #[serde(skip)]
    pub dump_seams: Option<PathBuf>,
    /// Record per-stage wall-clock rates in the metrics.
    pub timings: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            focal: None,
            sensor_height_factor: CameraParams::DEFAULT_SENSOR_HEIGHT_FACTOR,
            stitching: true,
            filter: FilterParams::default(),
            motion: MotionParams::default(),
            band_factor: DEFAULT_BAND_FACTOR,
            queue_depth: 4,
            exec: Exec::default(),
            dump_seams: None,
            timings: false,
        }
    }
}

impl RunOptions {
    pub fn mode(&self) -> InsideMode {
        if self.stitching {
            InsideMode::Stitching
        } else {
            InsideMode::Conventional
        }
    }

    pub fn camera(&self, width: usize, height: usize) -> Result<CameraParams> {
        let cam = CameraParams::new(width, height, self.focal.unwrap_or(width as f64))
            .with_sensor_height_factor(self.sensor_height_factor);
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        if !(2.0..=4.0).contains(&self.band_factor) {
            return Err(Error::InvalidParam(format!("band factor {} outside [2, 4]", self.band_factor)));
        }
        if !(self.sensor_height_factor.is_finite() && self.sensor_height_factor > 0.0) {
            return Err(Error::InvalidParam("sensor height factor must be positive".into()));
        }
        if self.queue_depth == 0 {
            return Err(Error::InvalidParam("queue depth must be positive".into()));
        }
        Ok(())
    }
}

/// Adjacent frame used to fill a deficit, with the motion relating it to the
/// current frame (`prev -> curr` for the previous frame, `curr -> next` for
/// the next one).
pub struct Neighbor<'a> {
    pub frame: &'a Frame,
    pub motion: Homography,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rendered {
    pub frame: Frame,
    /// Output samples (luma and chroma) with no source.
    pub holes: usize,
    pub seam: Option<SeamResult>,
    /// Stitched without a seam because the seam search failed.
    pub seam_fallback: bool,
}

/// Turns crop decisions into output frames.
#[derive(Clone, Debug)]
pub struct Renderer {
    pub width: usize,
    pub height: usize,
    pub window: CropWindow,
    pub band_factor: f64,
    pub exec: Exec,
    luma_grid: SampleGrid,
    chroma_grid: SampleGrid,
    quarter_grid: SampleGrid,
}

impl Renderer {
    pub fn new(width: usize, height: usize, crop_ratio: f64, band_factor: f64, exec: Exec) -> Self {
        let window = CropWindow::new(width, height, crop_ratio);
        Self {
            width,
            height,
            window,
            band_factor,
            exec,
            luma_grid: SampleGrid::full(&window),
            chroma_grid: SampleGrid::reduced(&window, 2),
            quarter_grid: SampleGrid::reduced(&window, 4),
        }
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (self.window.width, self.window.height)
    }

    fn warp_luma(&self, f: &Frame, p: &Homography) -> WarpedImage {
        warp(&f.luma, 1.0, self.width, self.height, p, &self.luma_grid, self.exec)
    }

    fn warp_chroma(&self, f: &Frame, p: &Homography) -> Option<[WarpedImage; 2]> {
        f.chroma.as_ref().map(|planes| {
            planes.each_ref().map(|c| warp(c, 0.5, self.width, self.height, p, &self.chroma_grid, self.exec))
        })
    }

    fn warp_quarter(&self, f: &Frame, p: &Homography) -> WarpedImage {
        let q = f.luma.downsample2().downsample2();
        warp(&q, 0.25, self.width, self.height, p, &self.quarter_grid, self.exec)
    }

    /// Renders `frame` under crop `p`. For stitched choices the matching
    /// neighbor must be given.
    pub fn render(
        &self,
        frame: &Frame,
        p: &Homography,
        choice: StitchChoice,
        prev: Option<Neighbor<'_>>,
        next: Option<Neighbor<'_>>,
    ) -> Result<Rendered> {
        let sub = match choice {
            StitchChoice::StitchPrev => prev.map(|n| Ok::<_, Error>((n.frame, n.motion.inverse()?.compose(p)))),
            StitchChoice::StitchNext => next.map(|n| Ok((n.frame, n.motion.compose(p)))),
            _ => None,
        }
        .transpose()?;
        let main_luma = self.warp_luma(frame, p);
        let main_chroma = self.warp_chroma(frame, p);
        let Some((sub_frame, p_sub)) = sub else {
            let holes = main_luma.invalid_count() + main_chroma.as_ref().map_or(0, |c| c[0].invalid_count() + c[1].invalid_count());
            let chroma = main_chroma.map(|c| c.map(|w| fill_invalid(&w, 128)));
            let out = Frame { index: frame.index, luma: main_luma.to_plane(), chroma };
            return Ok(Rendered { frame: out, holes, seam: None, seam_fallback: false });
        };

        let sub_luma = self.warp_luma(sub_frame, &p_sub);
        let seam = if main_luma.invalid_count() > 0 {
            let (mut mq, sq) = (self.warp_quarter(frame, p), self.warp_quarter(sub_frame, &p_sub));
            mq.pool_invalid(&main_luma, 4);
            match seam::find_seam(&mq, &sq, self.band_factor) {
                Ok(s) => Some(s),
                Err(e) => {
                    log::debug!("frame {}: seam search failed ({e}), filling the deficit directly", frame.index);
                    None
                }
            }
        } else {
            None
        };
        let seam_fallback = seam.is_none() && main_luma.invalid_count() > 0;
        let labels = seam.as_ref().map(|s| (s.labels.as_slice(), s.width));
        let sources = seam::merge_sources(&main_luma, &sub_luma, labels.map(|(l, w)| (l, w, 4)));
        let mut holes = sources.iter().filter(|s| **s == Source::Missing).count();
        let luma = seam::merge_plane(&main_luma, &sub_luma, &sources);
        let chroma = match (main_chroma, self.warp_chroma(sub_frame, &p_sub)) {
            (Some(mc), Some(sc)) => {
                let planes: [Plane; 2] = std::array::from_fn(|i| {
                    let src = seam::merge_sources(&mc[i], &sc[i], labels.map(|(l, w)| (l, w, 2)));
                    holes += src.iter().filter(|s| **s == Source::Missing).count();
                    let mut plane = seam::merge_plane(&mc[i], &sc[i], &src);
                    for (v, s) in plane.data.iter_mut().zip(&src) {
                        if *s == Source::Missing {
                            *v = 128;
                        }
                    }
                    plane
                });
                Some(planes)
            }
            (Some(mc), None) => {
                holes += mc[0].invalid_count() + mc[1].invalid_count();
                Some(mc.map(|w| fill_invalid(&w, 128)))
            }
            _ => None,
        };
        Ok(Rendered { frame: Frame { index: frame.index, luma, chroma }, holes, seam, seam_fallback })
    }
}

fn fill_invalid(w: &WarpedImage, value: u8) -> Plane {
    let data = w.luma.iter().zip(&w.valid).map(|(&v, &ok)| if ok { v } else { value }).collect();
    Plane { width: w.width, height: w.height, data }
}

/// Writes the quarter-scale seam visualization for one frame.
pub fn dump_seam(dir: &Path, index: usize, result: &SeamResult, frame: &Frame, p: &Homography, renderer: &Renderer) -> Result<()> {
    let main = renderer.warp_quarter(frame, p);
    let pixels = seam::debug_overlay(result, &main);
    let img = image::RgbImage::from_fn(result.width as u32, result.height as u32, |x, y| {
        image::Rgb(pixels[y as usize * result.width + x as usize])
    });
    std::fs::create_dir_all(dir)?;
    img.save(dir.join(format!("seam_{index:06}.png")))?;
    Ok(())
}

/// Per-frame record of a stabilization run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameLog {
    pub index: usize,
    pub decision: FrameDecision,
    /// Motion into this frame (identity for the first).
    pub motion: Homography,
    pub confident: bool,
    /// Increment of the emitted camera path.
    pub increment: Angles,
    pub holes: usize,
    pub seam_fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilizeOutcome {
    pub metrics: RunMetrics,
    pub frames: Vec<FrameLog>,
    pub output_dims: (usize, usize),
}

struct Job {
    frame: Arc<Frame>,
    prev: Option<(Arc<Frame>, Homography)>,
    next: Option<(Arc<Frame>, Homography)>,
    decision: FrameDecision,
    motion: Homography,
    confident: bool,
    increment: Angles,
}

/// Where motion comes from in the analysis stage.
pub enum MotionSource {
    Estimate,
    /// `motions[i]` maps frame `i` to frame `i + 1`.
    Given(Arc<Vec<Homography>>),
}

/// A frame, its incoming motion and confidence, and its previous neighbor.
type Pending = (Arc<Frame>, Homography, bool, Option<(Arc<Frame>, Homography)>);

struct Analyzer {
    opts: RunOptions,
    source: MotionSource,
    stab: Option<Stabilizer>,
    cam: Option<CameraParams>,
    prev: Option<(Arc<Frame>, Option<Pyramid>)>,
    /// Frame waiting for its successor (stitching mode): the frame, its
    /// incoming motion and confidence, and its previous neighbor.
    pending: Option<Pending>,
    last_p: Homography,
    count: usize,
}

impl Analyzer {
    fn motion_into(&mut self, frame: &Frame, pyr: Option<&Pyramid>) -> Result<(Homography, bool)> {
        let n = frame.index;
        match &self.source {
            MotionSource::Given(ms) => {
                let m = ms.get(n - 1).ok_or(Error::OutOfRange { index: n - 1, len: ms.len() })?;
                Ok((*m, true))
            }
            MotionSource::Estimate => {
                let prev = self.prev.as_ref().and_then(|(_, p)| p.as_ref()).expect("pyramid of previous frame");
                let est = calc_motion(prev, pyr.expect("pyramid"), &self.opts.motion, self.opts.exec)?;
                if !est.confident {
                    log::warn!("frame {n}: motion estimate not confident, assuming no motion");
                }
                Ok((est.homography, est.confident))
            }
        }
    }

    fn decide(
        &mut self,
        frame: Arc<Frame>,
        motion: Homography,
        confident: bool,
        prev: Option<(Arc<Frame>, Homography)>,
        next: Option<(Arc<Frame>, Homography)>,
    ) -> Result<Job> {
        let stab = self.stab.as_mut().expect("stabilizer");
        let decision = if prev.is_none() {
            stab.first_frame()
        } else {
            stab.process(&motion, next.as_ref().map(|(_, m)| m), None)?
        };
        let increment = if prev.is_none() {
            Angles::ZERO
        } else {
            output_increment(&motion, &self.last_p, &decision.p, self.cam.as_ref().expect("camera"))?
        };
        self.last_p = decision.p;
        Ok(Job { frame, prev, next, decision, motion, confident, increment })
    }

    /// Consumes one decoded frame; returns a job when one becomes ready.
    fn push(&mut self, frame: Frame) -> Result<Option<Job>> {
        let frame = Arc::new(frame);
        if self.stab.is_none() {
            let cam = self.opts.camera(frame.width(), frame.height())?;
            self.stab = Some(Stabilizer::new(cam, self.opts.filter.clone(), self.opts.mode())?);
            self.cam = Some(cam);
        } else {
            let cam = self.cam.as_ref().expect("camera");
            if (frame.width(), frame.height()) != (cam.width, cam.height) {
                return Err(Error::Format { what: "input", detail: format!("frame {} changes size", frame.index) });
            }
        }
        self.count += 1;
        let pyr = match self.source {
            MotionSource::Estimate => Some(build_pyramid(&frame, self.opts.motion.levels)?),
            MotionSource::Given(_) => None,
        };
        let (motion, confident) = if self.prev.is_some() { self.motion_into(&frame, pyr.as_ref())? } else { (Homography::identity(), true) };
        let prev = self.prev.take().map(|(f, _)| (f, motion));
        self.prev = Some((frame.clone(), pyr));
        if !self.opts.stitching {
            return self.decide(frame, motion, confident, prev, None).map(Some);
        }
        let ready = self.pending.replace((frame.clone(), motion, confident, prev));
        match ready {
            None => Ok(None),
            Some((pf, pm, pc, pprev)) => self.decide(pf, pm, pc, pprev, Some((frame, motion))).map(Some),
        }
    }

    fn finish(&mut self) -> Result<Option<Job>> {
        match self.pending.take() {
            Some((pf, pm, pc, pprev)) => self.decide(pf, pm, pc, pprev, None).map(Some),
            None => Ok(None),
        }
    }
}

fn neighbor(n: Option<&(Arc<Frame>, Homography)>) -> Option<Neighbor<'_>> {
    n.map(|(f, m)| Neighbor { frame: f.as_ref(), motion: *m })
}

fn send<T>(tx: &SyncSender<T>, v: T) -> bool {
    tx.send(v).is_ok()
}

fn decode_stage(
    frames: impl Iterator<Item = Result<Frame>>,
    tx: SyncSender<Result<Frame>>,
) -> Duration {
    let mut busy = Duration::ZERO;
    let mut frames = frames;
    loop {
        let t = Instant::now();
        let next = frames.next();
        busy += t.elapsed();
        let Some(item) = next else { break };
        let stop = item.is_err();
        if !send(&tx, item) || stop {
            break;
        }
    }
    busy
}

fn analyze_stage(mut analyzer: Analyzer, rx: Receiver<Result<Frame>>, tx: SyncSender<Result<Job>>) -> (Duration, Option<CameraParams>) {
    let mut busy = Duration::ZERO;
    for item in rx {
        let t = Instant::now();
        let out = item.and_then(|f| analyzer.push(f));
        busy += t.elapsed();
        match out {
            Ok(Some(job)) => {
                if !send(&tx, Ok(job)) {
                    return (busy, analyzer.cam);
                }
            }
            Ok(None) => {}
            Err(e) => {
                send(&tx, Err(e));
                return (busy, analyzer.cam);
            }
        }
    }
    let t = Instant::now();
    let last = analyzer.finish();
    busy += t.elapsed();
    match last {
        Ok(Some(job)) => {
            send(&tx, Ok(job));
        }
        Ok(None) => {}
        Err(e) => {
            send(&tx, Err(e));
        }
    }
    (busy, analyzer.cam)
}

/// Stabilizes a frame stream, handing each output frame to `sink` in order.
pub fn stabilize_stream<I, S>(frames: I, motion: MotionSource, opts: &RunOptions, mut sink: S) -> Result<StabilizeOutcome>
where
    I: Iterator<Item = Result<Frame>> + Send,
    S: FnMut(&Frame) -> Result<()>,
{
    opts.validate()?;
    let start = Instant::now();
    let analyzer = Analyzer {
        opts: opts.clone(),
        source: motion,
        stab: None,
        cam: None,
        prev: None,
        pending: None,
        last_p: Homography::identity(),
        count: 0,
    };
    let depth = opts.queue_depth;
    let mut logs = Vec::new();
    let mut renderer: Option<Renderer> = None;
    let mut render_busy = Duration::ZERO;
    let (decode_busy, (analyze_busy, _cam), result) = std::thread::scope(|s| {
        let (ftx, frx) = sync_channel(depth);
        let (jtx, jrx) = sync_channel(depth);
        let dec = s.spawn(move || decode_stage(frames, ftx));
        let ana = s.spawn(move || analyze_stage(analyzer, frx, jtx));
        let result = (|| -> Result<()> {
            for job in &jrx {
                let job = job?;
                let t = Instant::now();
                let r = renderer.get_or_insert_with(|| {
                    Renderer::new(job.frame.width(), job.frame.height(), opts.filter.crop_ratio, opts.band_factor, opts.exec)
                });
                let d = &job.decision;
                let out = r.render(&job.frame, &d.p, d.choice, neighbor(job.prev.as_ref()), neighbor(job.next.as_ref()))?;
                if let (Some(dir), Some(seam)) = (&opts.dump_seams, &out.seam) {
                    dump_seam(dir, job.frame.index, seam, &job.frame, &d.p, r)?;
                }
                render_busy += t.elapsed();
                sink(&out.frame)?;
                logs.push(FrameLog {
                    index: job.frame.index,
                    decision: job.decision,
                    motion: job.motion,
                    confident: job.confident,
                    increment: job.increment,
                    holes: out.holes,
                    seam_fallback: out.seam_fallback,
                });
            }
            Ok(())
        })();
        // Unblock upstream stages if rendering stopped early.
        drop(jrx);
        let d = dec.join().expect("decode stage panicked");
        let a = ana.join().expect("analysis stage panicked");
        (d, a, result)
    });
    result?;
    let wall = start.elapsed();
    let metrics = summarize(&logs, opts.mode(), opts.timings.then(|| {
        Throughput::from_times(logs.len(), decode_busy.as_secs_f64(), analyze_busy.as_secs_f64(), render_busy.as_secs_f64(), wall.as_secs_f64())
    }));
    let output_dims = renderer.map_or((0, 0), |r| r.output_dims());
    Ok(StabilizeOutcome { metrics, frames: logs, output_dims })
}

fn summarize(logs: &[FrameLog], mode: InsideMode, throughput: Option<Throughput>) -> RunMetrics {
    let stitched = |c: StitchChoice| logs.iter().filter(|l| l.decision.choice == c).count();
    let increments: Vec<Angles> = logs.iter().skip(1).map(|l| l.increment).collect();
    RunMetrics {
        mode,
        frames: logs.len(),
        n_f: logs.iter().filter(|l| l.decision.iterations > 0).count(),
        jitter: jitter(&increments),
        stitched_prev: stitched(StitchChoice::StitchPrev),
        stitched_next: stitched(StitchChoice::StitchNext),
        seam_fallbacks: logs.iter().filter(|l| l.seam_fallback).count(),
        holes: logs.iter().map(|l| l.holes).sum(),
        stitched_frames_with_holes: logs
            .iter()
            .filter(|l| matches!(l.decision.choice, StitchChoice::StitchPrev | StitchChoice::StitchNext) && l.holes > 0)
            .count(),
        throughput,
    }
}

/// Reads `input`, stabilizes it and writes the result to `output` if given.
pub fn run_stabilize(input: &Path, output: Option<&Path>, sidecar: Option<&Path>, opts: &RunOptions) -> Result<StabilizeOutcome> {
    let reader = FrameReader::open(input)?;
    let rate = reader.frame_rate();
    let motion = match sidecar {
        Some(p) => MotionSource::Given(Arc::new(MotionSidecar::load(p)?.motions())),
        None => MotionSource::Estimate,
    };
    let mut writer: Option<FrameWriter> = None;
    let outcome = stabilize_stream(reader, motion, opts, |f| {
        if let Some(path) = output {
            if writer.is_none() {
                writer = Some(FrameWriter::create(path, f.width(), f.height(), f.chroma.is_some(), rate)?);
            }
            writer.as_mut().expect("writer").write(f)?;
        }
        Ok(())
    })?;
    if outcome.frames.len() < 2 {
        return Err(Error::InvalidParam("stabilization needs at least two frames".into()));
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    Ok(outcome)
}

/// Estimates motion for every frame transition of a stream.
pub fn analyze_stream<I>(frames: I, opts: &RunOptions) -> Result<MotionSidecar>
where
    I: Iterator<Item = Result<Frame>> + Send,
{
    let depth = opts.queue_depth.max(1);
    std::thread::scope(|s| {
        let (tx, rx) = sync_channel(depth);
        let dec = s.spawn(move || decode_stage(frames, tx));
        let result = (|| -> Result<MotionSidecar> {
            let mut sidecar: Option<MotionSidecar> = None;
            let mut prev: Option<Pyramid> = None;
            for item in &rx {
                let frame = item?;
                let pyr = build_pyramid(&frame, opts.motion.levels)?;
                let sc = match sidecar.as_mut() {
                    Some(sc) => sc,
                    None => sidecar.insert(MotionSidecar::new(opts.camera(frame.width(), frame.height())?)),
                };
                if (frame.width(), frame.height()) != (sc.cam.width, sc.cam.height) {
                    return Err(Error::Format { what: "input", detail: format!("frame {} changes size", frame.index) });
                }
                if let Some(p) = &prev {
                    let est = calc_motion(p, &pyr, &opts.motion, opts.exec)?;
                    sc.records.push(MotionRecord { frame: sc.records.len() + 1, m: est.homography.normalized(), confident: est.confident });
                }
                prev = Some(pyr);
            }
            sidecar.ok_or_else(|| Error::InvalidParam("input has no frames".into()))
        })();
        drop(rx);
        dec.join().expect("decode stage panicked");
        result
    })
}

pub fn run_analyze(input: &Path, sidecar_out: &Path, opts: &RunOptions) -> Result<MotionSidecar> {
    let sc = analyze_stream(FrameReader::open(input)?, opts)?;
    sc.save(sidecar_out)?;
    Ok(sc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperlapseOutcome {
    /// Frames in the source clip.
    pub input_frames: usize,
    pub plan: HyperlapsePlan,
    pub metrics: HyperlapseMetrics,
}

/// Plans a hyperlapse from stored motions.
pub fn plan_hyperlapse(sidecar: &MotionSidecar, params: &HyperlapseParams, opts: &RunOptions) -> Result<HyperlapsePlan> {
    opts.validate()?;
    let mut cam = sidecar.cam;
    if let Some(f) = opts.focal {
        cam.focal = f;
    }
    hyperlapse::plan(&sidecar.motions(), cam, *params, opts.filter.clone(), opts.mode(), opts.exec)
}

/// Renders a planned hyperlapse from a frame stream, keeping at most
/// `2 * skip + 1` input frames in memory. Returns the missing-sample count of
/// each output frame.
pub fn render_hyperlapse<I, S>(frames: I, sidecar: &MotionSidecar, plan: &HyperlapsePlan, skip: usize, opts: &RunOptions, mut sink: S) -> Result<Vec<usize>>
where
    I: Iterator<Item = Result<Frame>>,
    S: FnMut(&Frame) -> Result<()>,
{
    let motions = sidecar.motions();
    let (w, h) = (sidecar.cam.width, sidecar.cam.height);
    let renderer = Renderer::new(w, h, opts.filter.crop_ratio, opts.band_factor, opts.exec);
    let mut buffer: VecDeque<Frame> = VecDeque::new();
    let mut frames = frames;
    let mut holes = Vec::with_capacity(plan.frames.len());
    for (k, planned) in plan.frames.iter().enumerate() {
        let want = planned.input_index;
        let last_needed = plan.frames.get(k + 1).map_or(want, |n| n.input_index);
        while buffer.back().is_none_or(|f| f.index < last_needed) {
            match frames.next() {
                Some(f) => buffer.push_back(f?),
                None => return Err(Error::OutOfRange { index: last_needed, len: buffer.back().map_or(0, |f| f.index + 1) }),
            }
            let keep_from = want.saturating_sub(skip);
            while buffer.front().is_some_and(|f| f.index < keep_from) {
                buffer.pop_front();
            }
        }
        let find = |i: usize| buffer.iter().find(|f| f.index == i).ok_or(Error::OutOfRange { index: i, len: 0 });
        let frame = find(want)?;
        let prev = match k {
            0 => None,
            _ => Some(Neighbor { frame: find(want - skip)?, motion: hyperlapse::accumulate_skip(&motions, want - skip, skip)? }),
        };
        let next = match plan.frames.get(k + 1) {
            Some(n) => Some(Neighbor { frame: find(n.input_index)?, motion: hyperlapse::accumulate_skip(&motions, want, skip)? }),
            None => None,
        };
        let out = renderer.render(frame, &planned.p, planned.choice, prev, next)?;
        holes.push(out.holes);
        let mut f = out.frame;
        f.index = planned.output_index;
        sink(&f)?;
    }
    Ok(holes)
}

/// Plans and (when `output` is given) renders a hyperlapse. Motion comes
/// from `sidecar`, or is estimated from the input first.
pub fn run_hyperlapse(
    input: &Path,
    output: Option<&Path>,
    sidecar: Option<&Path>,
    params: &HyperlapseParams,
    opts: &RunOptions,
) -> Result<HyperlapseOutcome> {
    let sc = match sidecar {
        Some(p) => MotionSidecar::load(p)?,
        None => analyze_stream(FrameReader::open(input)?, opts)?,
    };
    let plan = plan_hyperlapse(&sc, params, opts)?;
    let mut holes = 0;
    if let Some(out) = output {
        let reader = FrameReader::open(input)?;
        let rate = reader.frame_rate();
        let mut writer: Option<FrameWriter> = None;
        holes = render_hyperlapse(reader, &sc, &plan, params.skip, opts, |f| {
            if writer.is_none() {
                writer = Some(FrameWriter::create(out, f.width(), f.height(), f.chroma.is_some(), rate)?);
            }
            writer.as_mut().expect("writer").write(f)
        })?
        .iter()
        .sum();
        if let Some(w) = writer {
            w.finish()?;
        }
    }
    let metrics = hyperlapse_metrics(&plan, params, opts, holes);
    Ok(HyperlapseOutcome { input_frames: sc.frame_count(), plan, metrics })
}

fn hyperlapse_metrics(plan: &HyperlapsePlan, params: &HyperlapseParams, opts: &RunOptions, holes: usize) -> HyperlapseMetrics {
    HyperlapseMetrics {
        mode: opts.mode(),
        skip: params.skip,
        beam: params.beam,
        output_frames: plan.frames.len(),
        final_cost: plan.final_cost,
        n_f: plan.n_f,
        first_emission_searches: plan.first_emission_searches,
        holes,
    }
}

/// Stabilizes `input` in both inside modes and plans and renders one
/// hyperlapse per entry of `hyperlapse` in both modes. Motion is estimated
/// once (or loaded from `sidecar`) and shared by every run.
pub fn run_eval(input: &Path, sidecar: Option<&Path>, hyperlapse: &[HyperlapseParams], opts: &RunOptions) -> Result<EvalReport> {
    opts.validate()?;
    let sc = match sidecar {
        Some(p) => MotionSidecar::load(p)?,
        None => analyze_stream(FrameReader::open(input)?, opts)?,
    };
    let motions = Arc::new(sc.motions());
    let mut report = EvalReport::default();
    for stitching in [false, true] {
        let o = RunOptions { stitching, ..opts.clone() };
        let out = stabilize_stream(FrameReader::open(input)?, MotionSource::Given(motions.clone()), &o, |_| Ok(()))?;
        report.add_run(out.metrics);
    }
    for params in hyperlapse {
        for stitching in [false, true] {
            let o = RunOptions { stitching, ..opts.clone() };
            let plan = plan_hyperlapse(&sc, params, &o)?;
            let holes = render_hyperlapse(FrameReader::open(input)?, &sc, &plan, params.skip, &o, |_| Ok(()))?;
            report.hyperlapse.push(hyperlapse_metrics(&plan, params, &o, holes.iter().sum()));
        }
    }
    report.frames = sc.frame_count();
    Ok(report)
}

/// Output frame rate helper for writers fed from in-memory streams.
pub fn default_rate() -> FrameRate {
    FrameRate::default()
}
