//! Synthetic shaky sequences with known camera rotations.
//!
//! Each frame is a rotated pinhole view into a larger source image that
//! shares the frame's focal length. The camera path is a slow sinusoidal
//! sweep plus a walking gait plus correlated random shake. An optional
//! rolling-shutter readout interpolates the orientation from the top row to
//! the bottom row.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frame::{Frame, Plane};
use crate::geometry::{rotation_homography, Angles, CameraParams, Homography, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Defaults to the frame width.
    pub focal: Option<f64>,
    /// Still image to film; a procedural texture when absent.
    pub source: Option<PathBuf>,
    /// Procedural source size relative to the frame.
    pub source_scale: f64,
    /// Yaw, pitch, roll amplitude of the slow sweep (radians).
    pub sweep_amplitude: [f64; 3],
    /// Period of the slow sweep in frames.
    pub sweep_period: f64,
    /// Yaw, pitch, roll amplitude of the walking gait (radians). Pitch bobs
    /// once per step, yaw and roll sway once per stride.
    pub gait_amplitude: [f64; 3],
    /// Stride length in frames (two steps).
    pub gait_period: f64,
    /// Standard deviation of the shake per axis (radians).
    pub shake_amplitude: [f64; 3],
    /// Lag-one correlation of the shake, in `(-1, 1)`.
    pub shake_correlation: f64,
    /// Readout time of the bottom row as a fraction of the frame interval.
    pub rolling_shutter: f64,
    pub color: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 360,
            frames: 300,
            focal: None,
            source: None,
            source_scale: 2.0,
            sweep_amplitude: [0.08, 0.03, 0.01],
            sweep_period: 240.0,
            gait_amplitude: [0.015, 0.025, 0.008],
            gait_period: 24.0,
            shake_amplitude: [0.004, 0.004, 0.002],
            shake_correlation: 0.3,
            rolling_shutter: 0.0,
            color: true,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn camera(&self) -> CameraParams {
        CameraParams::new(self.width, self.height, self.focal.unwrap_or(self.width as f64))
    }

    pub fn validate(&self) -> Result<()> {
        self.camera().validate()?;
        if self.frames == 0 {
            return Err(Error::InvalidParam("synth needs at least one frame".into()));
        }
        if !(self.source_scale >= 1.0) || !(self.sweep_period > 0.0) || !(self.gait_period > 0.0) {
            return Err(Error::InvalidParam("source scale must be >= 1 and periods > 0".into()));
        }
        if !(self.shake_correlation.abs() < 1.0) || !(0.0..=1.0).contains(&self.rolling_shutter) {
            return Err(Error::InvalidParam("shake correlation in (-1, 1), rolling shutter in [0, 1]".into()));
        }
        let amps = self.sweep_amplitude.iter().chain(&self.gait_amplitude).chain(&self.shake_amplitude);
        if amps.into_iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidParam("amplitudes must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Ground-truth orientation per frame, plus one extra sample past the end
    /// for rolling-shutter interpolation of the last frame.
    pub fn camera_path(&self) -> Vec<Angles> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let phase: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
        let rho = self.shake_correlation;
        let innov = (1.0 - rho * rho).sqrt();
        let mut shake = [0.0; 3];
        let w = std::f64::consts::TAU / self.sweep_period;
        let stride = std::f64::consts::TAU / self.gait_period;
        let gait_phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        (0..=self.frames)
            .map(|n| {
                let t = n as f64;
                let mut a = [0.0; 3];
                for i in 0..3 {
                    let g: f64 = rng.sample(StandardNormal);
                    shake[i] = if n == 0 { g * self.shake_amplitude[i] } else { rho * shake[i] + innov * g * self.shake_amplitude[i] };
                    let sweep = (w * t + phase[i]).sin() + 0.4 * (2.7 * w * t + 1.3 * phase[i]).sin();
                    let sweep0 = phase[i].sin() + 0.4 * (1.3 * phase[i]).sin();
                    // pitch bobs at twice the stride rate; all gait terms start at 0
                    let k = if i == 1 { 2.0 } else { 1.0 };
                    let gait = (k * (stride * t + gait_phase)).sin() - (k * gait_phase).sin();
                    a[i] = self.sweep_amplitude[i] * (sweep - sweep0) + self.gait_amplitude[i] * gait + shake[i];
                }
                Angles::from_array(a)
            })
            .collect()
    }
}

/// Maps frame coordinates to source coordinates for a camera at `angles`.
/// The source is centered on the optical axis of the zero orientation.
pub fn view_homography(angles: &Angles, cam: &CameraParams, src_w: usize, src_h: usize) -> Homography {
    let ox = (src_w as f64 - cam.width as f64) / 2.0;
    let oy = (src_h as f64 - cam.height as f64) / 2.0;
    Homography::translation(ox, oy).compose(&rotation_homography(angles.yaw, angles.pitch, angles.roll, cam))
}

/// Motion from frame `n - 1` to frame `n` for a global-shutter camera:
/// `V_n^-1 V_{n-1}`.
pub fn ground_truth_motions(angles: &[Angles], cam: &CameraParams) -> Result<Vec<Homography>> {
    let views: Vec<Homography> = angles.iter().map(|a| rotation_homography(a.yaw, a.pitch, a.roll, cam)).collect();
    views.windows(2).map(|w| Ok(w[1].inverse()?.compose(&w[0]).normalized())).collect()
}

fn lattice_noise(w: usize, h: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let gy = y / cell;
        let ty = smooth((y % cell) as f64 / cell as f64);
        for x in 0..w {
            let gx = x / cell;
            let tx = smooth((x % cell) as f64 / cell as f64);
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(gx, gy) * (1.0 - tx) + g(gx + 1, gy) * tx;
            let bottom = g(gx, gy + 1) * (1.0 - tx) + g(gx + 1, gy + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Multi-octave value noise with scattered rectangles: plenty of corners
/// for tracking and varied texture for seams.
pub fn procedural_source(width: usize, height: usize, color: bool, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f50_u64);
    let mut field = vec![128.0; width * height];
    for (cell, amp) in [(96, 50.0), (48, 30.0), (24, 18.0), (12, 10.0), (6, 6.0)] {
        let n = lattice_noise(width, height, cell, &mut rng);
        field.iter_mut().zip(n).for_each(|(f, v)| *f += amp * v);
    }
    let rects = width * height / 2500;
    for _ in 0..rects {
        let rw = rng.random_range(6..48usize);
        let rh = rng.random_range(6..48usize);
        let x0 = rng.random_range(0..width.saturating_sub(rw).max(1));
        let y0 = rng.random_range(0..height.saturating_sub(rh).max(1));
        let value: f64 = rng.random_range(0.0..255.0);
        for y in y0..(y0 + rh).min(height) {
            for x in x0..(x0 + rw).min(width) {
                let f = &mut field[y * width + x];
                *f = 0.35 * *f + 0.65 * value;
            }
        }
    }
    let luma = Plane::from_vec(width, height, field.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect())
        .expect("sized by construction");
    let chroma = color.then(|| {
        let (cw, ch) = Frame::chroma_dims(width, height);
        let mut plane = |amp: f64| {
            let n = lattice_noise(cw, ch, 40, &mut rng);
            Plane::from_vec(cw, ch, n.iter().map(|v| (128.0 + amp * v).round() as u8).collect()).expect("sized")
        };
        [plane(40.0), plane(40.0)]
    });
    Frame { index: 0, luma, chroma }
}

/// A prepared synthetic sequence; frames render on demand.
pub struct Synth {
    pub spec: SynthSpec,
    pub cam: CameraParams,
    pub source: Frame,
    /// `frames + 1` orientations.
    pub path: Vec<Angles>,
}

impl Synth {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        spec.validate()?;
        let cam = spec.camera();
        let source = match &spec.source {
            Some(p) => {
                let mut frames = crate::io::read_frames(p).or_else(|_| {
                    let img = image::open(p)?;
                    Ok::<_, Error>(vec![if spec.color {
                        crate::io::rgb_to_frame(&img.into_rgb8(), 0)
                    } else {
                        let g = img.into_luma8();
                        let (w, h) = g.dimensions();
                        Frame::gray(0, Plane::from_vec(w as usize, h as usize, g.into_raw())?)
                    }])
                })?;
                if frames.is_empty() {
                    return Err(Error::InvalidParam(format!("no image in {}", p.display())));
                }
                frames.swap_remove(0)
            }
            None => {
                let sw = (spec.width as f64 * spec.source_scale).round() as usize;
                let sh = (spec.height as f64 * spec.source_scale).round() as usize;
                procedural_source(sw, sh, spec.color, spec.seed)
            }
        };
        if source.width() < 2 * spec.width || source.height() < 2 * spec.height {
            return Err(Error::InvalidParam(format!(
                "source {}x{} is smaller than twice the frame size",
                source.width(),
                source.height()
            )));
        }
        let path = spec.camera_path();
        let synth = Self { spec, cam, source, path };
        synth.check_views()?;
        Ok(synth)
    }

    pub fn len(&self) -> usize {
        self.spec.frames
    }

    pub fn is_empty(&self) -> bool {
        self.spec.frames == 0
    }

    /// Ground-truth orientation of each frame (at its first row).
    pub fn angles(&self) -> &[Angles] {
        &self.path[..self.spec.frames]
    }

    /// Orientation while row `y` (continuous) is read out in frame `n`.
    fn row_angles(&self, n: usize, y: f64) -> Angles {
        let t = self.spec.rolling_shutter * (y / self.cam.height as f64);
        let (a, b) = (self.path[n].as_array(), self.path[n + 1].as_array());
        Angles::from_array(std::array::from_fn(|i| a[i] + t * (b[i] - a[i])))
    }

    fn row_view(&self, n: usize, y: f64) -> Homography {
        view_homography(&self.row_angles(n, y), &self.cam, self.source.width(), self.source.height())
    }

    fn check_views(&self) -> Result<()> {
        let (w, h) = (self.cam.width as f64, self.cam.height as f64);
        let (sw, sh) = (self.source.width() as f64, self.source.height() as f64);
        for n in 0..self.spec.frames {
            for (x, y) in [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)] {
                let p = self.row_view(n, y).apply(Point::new(x, y))?;
                if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= sw && p.y <= sh) {
                    return Err(Error::InvalidParam(format!("frame {n} views outside the source image")));
                }
            }
        }
        Ok(())
    }

    pub fn frame(&self, n: usize, exec: Exec) -> Frame {
        let (w, h) = (self.cam.width, self.cam.height);
        let render = |plane: &Plane, pw: usize, ph: usize, step: f64| {
            let mut buf = vec![0u8; pw * ph];
            exec.for_each_row(&mut buf, pw, |v, row| {
                let y = step * (v as f64 + 0.5);
                let view = self.row_view(n, y);
                let scale = plane.width as f64 / self.source.width() as f64;
                for (u, px) in row.iter_mut().enumerate() {
                    let (p, _) = view.apply_homogeneous(Point::new(step * (u as f64 + 0.5), y));
                    *px = (plane.sample(p.x * scale, p.y * scale) + 0.5).floor().clamp(0.0, 255.0) as u8;
                }
            });
            Plane { width: pw, height: ph, data: buf }
        };
        let luma = render(&self.source.luma, w, h, 1.0);
        let chroma = self.source.chroma.as_ref().map(|[u, v]| {
            let (cw, ch) = Frame::chroma_dims(w, h);
            [render(u, cw, ch, 2.0), render(v, cw, ch, 2.0)]
        });
        Frame { index: n, luma, chroma }
    }

    pub fn frames(&self, exec: Exec) -> Vec<Frame> {
        (0..self.spec.frames).map(|n| self.frame(n, exec)).collect()
    }

    /// Frame-to-frame motion of the frame centers' orientations.
    pub fn ground_truth_motions(&self) -> Result<Vec<Homography>> {
        ground_truth_motions(self.angles(), &self.cam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec { width: 96, height: 64, frames: 6, ..SynthSpec::default() }
    }

    #[test]
    fn zero_amplitudes_give_identical_frames() {
        let spec = SynthSpec { sweep_amplitude: [0.0; 3], gait_amplitude: [0.0; 3], shake_amplitude: [0.0; 3], ..small() };
        let s = Synth::new(spec).unwrap();
        let f = s.frames(Exec::Sequential);
        assert!(f.windows(2).all(|w| w[0].luma == w[1].luma && w[0].chroma == w[1].chroma));
        // Zero orientation is the centered window of the source.
        let src = &s.source.luma;
        assert_eq!(f[0].luma.get(0, 0), src.get(48, 32));
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = Synth::new(small()).unwrap();
        let b = Synth::new(small()).unwrap();
        assert_eq!(a.path, b.path);
        assert_eq!(a.frame(3, Exec::Sequential), b.frame(3, Exec::Parallel));
        let c = Synth::new(SynthSpec { seed: 2, ..small() }).unwrap();
        assert_ne!(a.path, c.path);
    }

    #[test]
    fn yaw_sine_motion_matches_analytic_homography() {
        let spec = SynthSpec {
            width: 640,
            height: 360,
            frames: 40,
            sweep_amplitude: [1f64.to_radians(), 0.0, 0.0],
            gait_amplitude: [0.0; 3],
            shake_amplitude: [0.0; 3],
            sweep_period: 30.0,
            color: false,
            ..SynthSpec::default()
        };
        let s = Synth::new(spec).unwrap();
        let cam = s.cam;
        let ms = s.ground_truth_motions().unwrap();
        for (n, m) in ms.iter().enumerate() {
            let (a0, a1) = (s.angles()[n], s.angles()[n + 1]);
            let analytic = rotation_homography(a1.yaw, 0.0, 0.0, &cam)
                .inverse()
                .unwrap()
                .compose(&rotation_homography(a0.yaw, 0.0, 0.0, &cam));
            assert!(m.corner_error(&analytic, 640.0, 360.0) < 0.1);
            // A point seen in frame n reappears where the motion predicts.
            let p = Point::new(200.0, 150.0);
            let src = view_homography(&a0, &cam, s.source.width(), s.source.height()).apply(p).unwrap();
            let q = m.apply(p).unwrap();
            let src2 = view_homography(&a1, &cam, s.source.width(), s.source.height()).apply(q).unwrap();
            assert!(src.dist(src2) < 1e-9);
        }
    }

    #[test]
    fn views_leaving_the_source_are_rejected() {
        let spec = SynthSpec { shake_amplitude: [0.5, 0.0, 0.0], ..small() };
        assert!(Synth::new(spec).is_err());
        assert!(Synth::new(SynthSpec { source_scale: 1.5, ..small() }).is_err());
    }

    #[test]
    fn path_starts_near_zero_and_shake_has_requested_spread() {
        let spec = SynthSpec { frames: 20000, sweep_amplitude: [0.0; 3], gait_amplitude: [0.0; 3], ..small() };
        let path = spec.camera_path();
        let n = path.len() as f64;
        let var = path.iter().map(|a| a.yaw * a.yaw).sum::<f64>() / n;
        assert!((var.sqrt() / spec.shake_amplitude[0] - 1.0).abs() < 0.1);
        let sweep = SynthSpec { shake_amplitude: [0.0; 3], ..small() }.camera_path();
        assert!(sweep[0].yaw.abs() < 1e-15 && sweep[0].pitch.abs() < 1e-15);
    }

    #[test]
    fn gait_bobs_pitch_twice_per_stride() {
        let spec = SynthSpec {
            frames: 96,
            sweep_amplitude: [0.0; 3],
            shake_amplitude: [0.0; 3],
            gait_amplitude: [0.01, 0.01, 0.0],
            gait_period: 24.0,
            ..small()
        };
        let path = spec.camera_path();
        for n in 0..path.len() - 24 {
            assert!((path[n + 24].yaw - path[n].yaw).abs() < 1e-12);
            assert!((path[n + 12].pitch - path[n].pitch).abs() < 1e-12);
        }
        assert!(path.iter().any(|a| (a.yaw - path[12].yaw).abs() > 1e-3));
    }

    #[test]
    fn rolling_shutter_tilts_rows() {
        let still = SynthSpec { sweep_amplitude: [0.0; 3], gait_amplitude: [0.0; 3], shake_amplitude: [0.0; 3], ..small() };
        let mut s = Synth::new(SynthSpec { rolling_shutter: 1.0, ..still }).unwrap();
        s.path[1] = Angles::new(0.05, 0.0, 0.0);
        // Top row follows frame 0, the bottom row leans toward frame 1.
        assert_eq!(s.row_angles(0, 0.0), Angles::ZERO);
        assert!((s.row_angles(0, 64.0).yaw - 0.05).abs() < 1e-15);
    }
}
