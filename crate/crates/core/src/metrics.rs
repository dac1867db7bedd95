//! Evaluation metrics and the JSON report.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filter::InsideMode;
use crate::geometry::{rotation_angles, Angles, CameraParams, Homography};

/// Motion of the output view from frame `n - 1` to `n`: `P_n^-1 M_n P_{n-1}`.
pub fn output_motion(m: &Homography, p_prev: &Homography, p_curr: &Homography) -> Result<Homography> {
    Ok(p_curr.inverse()?.compose(m).compose(p_prev))
}

/// Per-frame yaw, pitch and roll increments of the emitted camera path.
pub fn output_increment(m: &Homography, p_prev: &Homography, p_curr: &Homography, cam: &CameraParams) -> Result<Angles> {
    Ok(rotation_angles(&output_motion(m, p_prev, p_curr)?, cam))
}

/// RMS magnitude of the path's first differences, in radians.
pub fn jitter(increments: &[Angles]) -> f64 {
    if increments.is_empty() {
        return 0.0;
    }
    let sum: f64 = increments.iter().map(|a| a.yaw * a.yaw + a.pitch * a.pitch + a.roll * a.roll).sum();
    (sum / increments.len() as f64).sqrt()
}

/// Frames per second of each stage's busy time, and of the whole run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub decode_fps: f64,
    pub analyze_fps: f64,
    pub render_fps: f64,
    pub end_to_end_fps: f64,
}

impl Throughput {
    pub fn from_times(frames: usize, decode: f64, analyze: f64, render: f64, wall: f64) -> Self {
        let fps = |t: f64| if t > 0.0 { frames as f64 / t } else { 0.0 };
        Self { decode_fps: fps(decode), analyze_fps: fps(analyze), render_fps: fps(render), end_to_end_fps: fps(wall) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mode: InsideMode,
    pub frames: usize,
    /// Frames where the crop had to be forced back inside.
    pub n_f: usize,
    pub jitter: f64,
    pub stitched_prev: usize,
    pub stitched_next: usize,
    /// Stitched frames merged without a seam (seam search failed).
    pub seam_fallbacks: usize,
    /// Output samples no input frame could supply.
    pub holes: usize,
    /// Stitched frames that still had holes.
    pub stitched_frames_with_holes: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub throughput: Option<Throughput>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperlapseMetrics {
    pub mode: InsideMode,
    pub skip: usize,
    pub beam: usize,
    pub output_frames: usize,
    pub final_cost: f64,
    pub n_f: usize,
    pub first_emission_searches: usize,
    pub holes: usize,
}

/// Everything one evaluation produced, serialized as a single JSON document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub conventional: Option<RunMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stitching: Option<RunMetrics>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub hyperlapse: Vec<HyperlapseMetrics>,
}

impl EvalReport {
    pub fn add_run(&mut self, run: RunMetrics) {
        self.frames = self.frames.max(run.frames);
        match run.mode {
            InsideMode::Conventional => self.conventional = Some(run),
            InsideMode::Stitching => self.stitching = Some(run),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_homography;

    #[test]
    fn constant_path_has_zero_jitter() {
        assert_eq!(jitter(&[Angles::ZERO; 10]), 0.0);
        assert_eq!(jitter(&[]), 0.0);
        let a = Angles::new(0.03, 0.04, 0.0);
        assert!((jitter(&[a, a]) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn perfectly_cancelled_motion_gives_zero_increment() {
        let cam = CameraParams::with_default_focal(640, 360);
        let m = rotation_homography(0.01, -0.02, 0.003, &cam);
        // P_n = M P_{n-1}: the crop follows the scene exactly.
        let p_prev = Homography::translation(3.0, -2.0);
        let p_curr = m.compose(&p_prev);
        let inc = output_increment(&m, &p_prev, &p_curr, &cam).unwrap();
        assert!(inc.yaw.abs() < 1e-12 && inc.pitch.abs() < 1e-12 && inc.roll.abs() < 1e-12);
        // A static crop sees the full rotation.
        let still = output_increment(&m, &Homography::identity(), &Homography::identity(), &cam).unwrap();
        assert!((still.yaw - 0.01).abs() < 1e-9);
    }

    #[test]
    fn report_round_trips_as_one_document() {
        let mut r = EvalReport::default();
        r.add_run(RunMetrics {
            mode: InsideMode::Stitching,
            frames: 10,
            n_f: 2,
            jitter: 0.1,
            stitched_prev: 1,
            stitched_next: 0,
            seam_fallbacks: 0,
            holes: 0,
            stitched_frames_with_holes: 0,
            throughput: None,
        });
        let text = r.to_json().unwrap();
        assert!(!text.contains("throughput"));
        let back: EvalReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.frames, 10);
    }
}
