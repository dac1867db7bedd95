//! Per-frame motion metadata, stored as JSON lines.
//!
//! The first line is a header with the stream geometry; each following line
//! holds the motion from frame `frame - 1` to `frame`. Numbers are written
//! with 17 significant digits so every `f64` reads back bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::{CameraParams, Homography};

pub const FORMAT: &str = "stitchstab-motion";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct MotionRecord {
    /// Destination frame index (>= 1).
    pub frame: usize,
    pub m: Homography,
    pub confident: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionSidecar {
    pub cam: CameraParams,
    pub records: Vec<MotionRecord>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    width: usize,
    height: usize,
    focal: f64,
    sensor_height: f64,
}

#[derive(Deserialize)]
struct Record {
    frame: usize,
    m: [f64; 9],
    #[serde(default = "yes")]
    confident: bool,
}

fn yes() -> bool {
    true
}

/// Shortest exact form is not needed; fixed 17 significant digits is.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

impl MotionSidecar {
    pub fn new(cam: CameraParams) -> Self {
        Self { cam, records: Vec::new() }
    }

    /// Motions in stream order; entry `i` maps frame `i` to frame `i + 1`.
    pub fn motions(&self) -> Vec<Homography> {
        self.records.iter().map(|r| r.m).collect()
    }

    pub fn frame_count(&self) -> usize {
        self.records.len() + 1
    }

    pub fn to_writer(&self, mut w: impl Write) -> Result<()> {
        let c = &self.cam;
        writeln!(
            w,
            "{{\"format\":\"{FORMAT}\",\"version\":{VERSION},\"width\":{},\"height\":{},\"focal\":{},\"sensor_height\":{}}}",
            c.width,
            c.height,
            num(c.focal),
            num(c.sensor_height)
        )?;
        for r in &self.records {
            let mut coeffs = String::new();
            for (i, v) in r.m.coeffs().iter().enumerate() {
                if i > 0 {
                    coeffs.push(',');
                }
                let _ = write!(coeffs, "{}", num(*v));
            }
            writeln!(w, "{{\"frame\":{},\"m\":[{coeffs}],\"confident\":{}}}", r.frame, r.confident)?;
        }
        Ok(())
    }

    pub fn from_reader(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| Error::Format { what: "sidecar", detail: "empty file".into() })??;
        let h: Header = serde_json::from_str(&first)?;
        if h.format != FORMAT || h.version != VERSION {
            return Err(Error::Format {
                what: "sidecar",
                detail: format!("unsupported header {} v{}", h.format, h.version),
            });
        }
        let mut cam = CameraParams::new(h.width, h.height, h.focal);
        cam.sensor_height = h.sensor_height;
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)?;
            if rec.frame != records.len() + 1 {
                return Err(Error::Format {
                    what: "sidecar",
                    detail: format!("expected frame {}, found {}", records.len() + 1, rec.frame),
                });
            }
            records.push(MotionRecord { frame: rec.frame, m: Homography::from_coeffs(rec.m), confident: rec.confident });
        }
        Ok(Self { cam, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.to_writer(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut s = MotionSidecar::new(CameraParams::new(640, 360, 640.0));
        let vals = [0.1, 1.0 / 3.0, -2.5e-7, 1e300, 5e-324, std::f64::consts::PI, -0.0, 12345.678901234567, 1.0];
        s.records.push(MotionRecord { frame: 1, m: Homography::from_coeffs(vals), confident: false });
        s.records.push(MotionRecord { frame: 2, m: Homography::identity(), confident: true });
        let mut buf = Vec::new();
        s.to_writer(&mut buf).unwrap();
        let back = MotionSidecar::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back.cam, s.cam);
        for (a, b) in back.records.iter().zip(&s.records) {
            let (ca, cb) = (a.m.coeffs(), b.m.coeffs());
            assert!(ca.iter().zip(cb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_eq!(a.confident, b.confident);
        }
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().contains("\"format\":\"stitchstab-motion\""));
    }

    #[test]
    fn rejects_gaps_and_foreign_headers() {
        let bad = "{\"format\":\"other\",\"version\":1,\"width\":2,\"height\":2,\"focal\":1,\"sensor_height\":4}\n";
        assert!(MotionSidecar::from_reader(bad.as_bytes()).is_err());
        let gap = "{\"format\":\"stitchstab-motion\",\"version\":1,\"width\":2,\"height\":2,\"focal\":1,\"sensor_height\":4}\n\
                   {\"frame\":2,\"m\":[1,0,0,0,1,0,0,0,1]}\n";
        assert!(MotionSidecar::from_reader(gap.as_bytes()).is_err());
    }
}
