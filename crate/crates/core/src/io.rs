//! Raw frame I/O: Y4M files and directories of still images.
//!
//! A path ending in `.y4m` is a Y4M stream; anything else is a directory of
//! images read in lexicographic file-name order. Color images are converted
//! to full-range BT.601 Y'CbCr with 4:2:0 chroma.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::frame::{Frame, Plane};

const IMAGE_EXTENSIONS: [&str; 6] = ["png", "pgm", "ppm", "pnm", "pbm", "pam"];

pub fn is_y4m(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

fn y4m_err(e: y4m::Error) -> Error {
    match e {
        y4m::Error::IoError(io) => Error::Io(io),
        other => Error::Format { what: "y4m", detail: other.to_string() },
    }
}

/// Frame rate as a ratio, carried from input to output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameRate {
    pub num: usize,
    pub den: usize,
}

impl Default for FrameRate {
    fn default() -> Self {
        Self { num: 30, den: 1 }
    }
}

/// Streaming frame reader.
pub enum FrameReader {
    Y4m { decoder: Box<y4m::Decoder<BufReader<File>>>, chroma: bool, next: usize },
    Images { files: Vec<PathBuf>, next: usize, dims: Option<(usize, usize)> },
}

impl FrameReader {
    pub fn open(path: &Path) -> Result<Self> {
        if is_y4m(path) {
            let decoder = y4m::decode(BufReader::new(File::open(path)?)).map_err(y4m_err)?;
            if decoder.get_bit_depth() != 8 {
                return Err(Error::Unsupported(format!("{}-bit Y4M", decoder.get_bit_depth())));
            }
            let chroma = match decoder.get_colorspace() {
                y4m::Colorspace::Cmono => false,
                y4m::Colorspace::C420 | y4m::Colorspace::C420jpeg | y4m::Colorspace::C420paldv | y4m::Colorspace::C420mpeg2 => {
                    true
                }
                other => return Err(Error::Unsupported(format!("Y4M colorspace {other:?}"))),
            };
            Ok(FrameReader::Y4m { decoder: Box::new(decoder), chroma, next: 0 })
        } else if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                })
                .collect();
            files.sort();
            Ok(FrameReader::Images { files, next: 0, dims: None })
        } else {
            Err(Error::Unsupported(format!("{} is neither a .y4m file nor a directory", path.display())))
        }
    }

    /// Input dimensions, when known before reading a frame.
    pub fn dims(&self) -> Option<(usize, usize)> {
        match self {
            FrameReader::Y4m { decoder, .. } => Some((decoder.get_width(), decoder.get_height())),
            FrameReader::Images { dims, .. } => *dims,
        }
    }

    pub fn frame_rate(&self) -> FrameRate {
        match self {
            FrameReader::Y4m { decoder, .. } => {
                let r = decoder.get_framerate();
                FrameRate { num: r.num, den: r.den }
            }
            FrameReader::Images { .. } => FrameRate::default(),
        }
    }

    fn read_next(&mut self) -> Result<Option<Frame>> {
        match self {
            FrameReader::Y4m { decoder, chroma, next } => {
                let (w, h) = (decoder.get_width(), decoder.get_height());
                let (cw, ch) = Frame::chroma_dims(w, h);
                let frame = match decoder.read_frame() {
                    Ok(f) => f,
                    Err(y4m::Error::EOF) => return Ok(None),
                    Err(e) => return Err(y4m_err(e)),
                };
                let luma = Plane::from_vec(w, h, frame.get_y_plane().to_vec())?;
                let chroma = if *chroma {
                    Some([
                        Plane::from_vec(cw, ch, frame.get_u_plane().to_vec())?,
                        Plane::from_vec(cw, ch, frame.get_v_plane().to_vec())?,
                    ])
                } else {
                    None
                };
                let out = Frame { index: *next, luma, chroma };
                *next += 1;
                Ok(Some(out))
            }
            FrameReader::Images { files, next, dims } => {
                let Some(path) = files.get(*next) else { return Ok(None) };
                let frame = load_image(path, *next)?;
                let d = (frame.width(), frame.height());
                match dims {
                    Some(expected) if *expected != d => {
                        return Err(Error::Format {
                            what: "frame directory",
                            detail: format!(
                                "{} is {}x{}, expected {}x{}",
                                path.display(),
                                d.0,
                                d.1,
                                expected.0,
                                expected.1
                            ),
                        })
                    }
                    _ => *dims = Some(d),
                }
                *next += 1;
                Ok(Some(frame))
            }
        }
    }
}

impl Iterator for FrameReader {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_next().transpose()
    }
}

pub fn read_frames(path: &Path) -> Result<Vec<Frame>> {
    FrameReader::open(path)?.collect()
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn load_image(path: &Path, index: usize) -> Result<Frame> {
    let img = image::open(path)?;
    let color = img.color();
    if color.bytes_per_pixel() / color.channel_count() as u8 != 1 {
        return Err(Error::Unsupported(format!("{}: only 8-bit images are supported", path.display())));
    }
    if !color.has_color() {
        let g = img.into_luma8();
        let (w, h) = g.dimensions();
        return Ok(Frame::gray(index, Plane::from_vec(w as usize, h as usize, g.into_raw())?));
    }
    Ok(rgb_to_frame(&img.into_rgb8(), index))
}

/// Full-range BT.601 conversion; chroma is the rounded mean of each 2x2 block.
pub fn rgb_to_frame(img: &RgbImage, index: usize) -> Frame {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px = |x: usize, y: usize| {
        let p = img.get_pixel(x as u32, y as u32).0;
        (p[0] as f64, p[1] as f64, p[2] as f64)
    };
    let luma = Plane::from_fn(w, h, |x, y| {
        let (r, g, b) = px(x, y);
        clamp_u8(0.299 * r + 0.587 * g + 0.114 * b)
    });
    let (cw, ch) = Frame::chroma_dims(w, h);
    let avg = |cx: usize, cy: usize, f: &dyn Fn(f64, f64, f64) -> f64| {
        let mut sum = 0.0;
        let mut n = 0.0;
        for y in 2 * cy..(2 * cy + 2).min(h) {
            for x in 2 * cx..(2 * cx + 2).min(w) {
                let (r, g, b) = px(x, y);
                sum += f(r, g, b);
                n += 1.0;
            }
        }
        clamp_u8(sum / n)
    };
    let cb = Plane::from_fn(cw, ch, |x, y| avg(x, y, &|r, g, b| 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b));
    let cr = Plane::from_fn(cw, ch, |x, y| avg(x, y, &|r, g, b| 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b));
    Frame { index, luma, chroma: Some([cb, cr]) }
}

/// Inverse of [`rgb_to_frame`] with nearest chroma upsampling.
pub fn frame_to_rgb(frame: &Frame) -> RgbImage {
    let (w, h) = (frame.width(), frame.height());
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let yv = frame.luma.get(x, y) as f64;
        let (cb, cr) = match &frame.chroma {
            Some([u, v]) => (u.get(x / 2, y / 2) as f64 - 128.0, v.get(x / 2, y / 2) as f64 - 128.0),
            None => (0.0, 0.0),
        };
        image::Rgb([
            clamp_u8(yv + 1.402 * cr),
            clamp_u8(yv - 0.344136 * cb - 0.714136 * cr),
            clamp_u8(yv + 1.772 * cb),
        ])
    })
}

pub fn save_image(frame: &Frame, path: &Path) -> Result<()> {
    if frame.chroma.is_some() {
        frame_to_rgb(frame).save(path)?;
    } else {
        let g = GrayImage::from_raw(frame.width() as u32, frame.height() as u32, frame.luma.data.clone())
            .ok_or(Error::Format { what: "frame", detail: "luma size mismatch".into() })?;
        g.save(path)?;
    }
    Ok(())
}

/// Streaming frame writer with fixed dimensions.
pub enum FrameWriter {
    Y4m { encoder: y4m::Encoder<File>, width: usize, height: usize, chroma: bool },
    Images { dir: PathBuf, width: usize, height: usize, next: usize },
}

impl FrameWriter {
    /// Creates the container (or directory) immediately, so an empty stream
    /// still leaves a valid result behind.
    pub fn create(path: &Path, width: usize, height: usize, chroma: bool, rate: FrameRate) -> Result<Self> {
        if is_y4m(path) {
            let colorspace = if chroma { y4m::Colorspace::C420jpeg } else { y4m::Colorspace::Cmono };
            let encoder = y4m::encode(width, height, y4m::Ratio::new(rate.num, rate.den))
                .with_colorspace(colorspace)
                .write_header(File::create(path)?)
                .map_err(y4m_err)?;
            Ok(FrameWriter::Y4m { encoder, width, height, chroma })
        } else {
            std::fs::create_dir_all(path)?;
            Ok(FrameWriter::Images { dir: path.to_path_buf(), width, height, next: 0 })
        }
    }

    pub fn write(&mut self, frame: &Frame) -> Result<()> {
        let (w, h) = match self {
            FrameWriter::Y4m { width, height, .. } | FrameWriter::Images { width, height, .. } => (*width, *height),
        };
        if (frame.width(), frame.height()) != (w, h) {
            return Err(Error::Format {
                what: "output frame",
                detail: format!("{}x{} written to a {}x{} stream", frame.width(), frame.height(), w, h),
            });
        }
        frame.validate()?;
        match self {
            FrameWriter::Y4m { encoder, chroma, .. } => {
                let (cw, ch) = Frame::chroma_dims(w, h);
                let gray = vec![128u8; cw * ch];
                let (u, v): (&[u8], &[u8]) = match (&frame.chroma, *chroma) {
                    (_, false) => (&[], &[]),
                    (Some([u, v]), true) => (&u.data, &v.data),
                    (None, true) => (&gray, &gray),
                };
                encoder.write_frame(&y4m::Frame::new([&frame.luma.data, u, v], None)).map_err(y4m_err)
            }
            FrameWriter::Images { dir, next, .. } => {
                save_image(frame, &dir.join(format!("frame_{:06}.png", *next)))?;
                *next += 1;
                Ok(())
            }
        }
    }

    /// Frames are written unbuffered (a few large writes each), so there is
    /// nothing left to flush.
    pub fn finish(self) -> Result<()> {
        Ok(())
    }
}

pub fn write_frames(frames: &[Frame], path: &Path, width: usize, height: usize, rate: FrameRate) -> Result<()> {
    let chroma = frames.first().is_some_and(|f| f.chroma.is_some());
    let mut w = FrameWriter::create(path, width, height, chroma, rate)?;
    for f in frames {
        w.write(f)?;
    }
    w.finish()
}

/// Writes one `yaw pitch roll` line per frame, radians, 17 significant digits.
pub fn write_ground_truth(path: &Path, angles: &[crate::geometry::Angles]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for a in angles {
        writeln!(f, "{:.16e} {:.16e} {:.16e}", a.yaw, a.pitch, a.roll)?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<crate::geometry::Angles>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            match vals {
                Ok(v) if v.len() == 3 => Ok(crate::geometry::Angles::new(v[0], v[1], v[2])),
                _ => Err(Error::Format { what: "ground truth", detail: format!("line {}: {line:?}", i + 1) }),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn color_frame(index: usize, w: usize, h: usize) -> Frame {
        let (cw, ch) = Frame::chroma_dims(w, h);
        Frame {
            index,
            luma: Plane::from_fn(w, h, |x, y| (x * 7 + y * 3 + index) as u8),
            chroma: Some([Plane::from_fn(cw, ch, |x, _| (100 + x) as u8), Plane::from_fn(cw, ch, |_, y| (150 - y) as u8)]),
        }
    }

    #[test]
    fn y4m_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.y4m");
        let frames: Vec<Frame> = (0..3).map(|i| color_frame(i, 9, 5)).collect();
        write_frames(&frames, &path, 9, 5, FrameRate::default()).unwrap();
        assert_eq!(read_frames(&path).unwrap(), frames);
    }

    #[test]
    fn y4m_header_parse_matches_hand_built_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hand.y4m");
        let mut bytes = b"YUV4MPEG2 W4 H2 F25:1 Ip A1:1 C420jpeg\n".to_vec();
        bytes.extend_from_slice(b"FRAME\n");
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6, 7, 8]);
        bytes.extend_from_slice(&[60, 61, 70, 71]);
        std::fs::write(&path, bytes).unwrap();
        let r = FrameReader::open(&path).unwrap();
        assert_eq!(r.dims(), Some((4, 2)));
        assert_eq!(r.frame_rate(), FrameRate { num: 25, den: 1 });
        let frames: Vec<Frame> = r.collect::<Result<_>>().unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].luma.data, vec![1, 2, 3, 4, 5, 6, 7, 8]);
        let [u, v] = frames[0].chroma.as_ref().unwrap();
        assert_eq!((u.data.as_slice(), v.data.as_slice()), (&[60u8, 61][..], &[70u8, 71][..]));
    }

    #[test]
    fn empty_streams_leave_valid_containers() {
        let dir = tempfile::tempdir().unwrap();
        let y = dir.path().join("empty.y4m");
        write_frames(&[], &y, 1728, 972, FrameRate::default()).unwrap();
        let r = FrameReader::open(&y).unwrap();
        assert_eq!(r.dims(), Some((1728, 972)));
        assert_eq!(r.count(), 0);
        let d = dir.path().join("empty_dir");
        write_frames(&[], &d, 8, 8, FrameRate::default()).unwrap();
        assert_eq!(read_frames(&d).unwrap().len(), 0);
    }

    #[test]
    fn gray_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<Frame> = (0..3).map(|i| Frame::gray(i, Plane::from_fn(6, 4, |x, y| (x * 40 + y + i) as u8))).collect();
        write_frames(&frames, dir.path(), 6, 4, FrameRate::default()).unwrap();
        assert_eq!(read_frames(dir.path()).unwrap(), frames);
    }

    #[test]
    fn color_directory_keeps_luma_close() {
        let dir = tempfile::tempdir().unwrap();
        // In-gamut colors only; clamped RGB cannot preserve luma.
        let mut f = color_frame(0, 8, 6);
        f.luma = Plane::from_fn(8, 6, |x, y| (90 + x * 5 + y * 3) as u8);
        f.chroma = Some([Plane::from_fn(4, 3, |x, _| (120 + x) as u8), Plane::from_fn(4, 3, |_, y| (136 - y) as u8)]);
        write_frames(std::slice::from_ref(&f), dir.path(), 8, 6, FrameRate::default()).unwrap();
        let back = read_frames(dir.path()).unwrap();
        let diff = back[0].luma.data.iter().zip(&f.luma.data).map(|(a, b)| (*a as i32 - *b as i32).abs()).max();
        assert!(diff.unwrap() <= 2);
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_image(&Frame::gray(0, Plane::new(4, 4)), &dir.path().join("a.png")).unwrap();
        save_image(&Frame::gray(1, Plane::new(5, 4)), &dir.path().join("b.png")).unwrap();
        assert!(read_frames(dir.path()).is_err());
    }

    #[test]
    fn writer_rejects_wrong_dims() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = FrameWriter::create(&dir.path().join("x.y4m"), 4, 4, false, FrameRate::default()).unwrap();
        assert!(w.write(&Frame::gray(0, Plane::new(5, 4))).is_err());
    }

    #[test]
    fn ground_truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.txt");
        let a = vec![crate::geometry::Angles::new(0.1, -1.0 / 3.0, 2e-9), crate::geometry::Angles::ZERO];
        write_ground_truth(&p, &a).unwrap();
        assert_eq!(read_ground_truth(&p).unwrap(), a);
    }
}
