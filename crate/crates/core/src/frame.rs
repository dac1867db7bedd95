use crate::error::{Error, Result};

/// One 8-bit image plane, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Format {
                what: "plane",
                detail: format!("{} bytes for {}x{}", data.len(), width, height),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Bilinear sample at continuous coordinates (pixel centers at `i + 0.5`),
    /// clamping to the edge pixels.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = fx - x0 as f64;
        let ay = fy - y0 as f64;
        let top = self.get(x0, y0) as f64 * (1.0 - ax) + self.get(x1, y0) as f64 * ax;
        let bottom = self.get(x0, y1) as f64 * (1.0 - ax) + self.get(x1, y1) as f64 * ax;
        top * (1.0 - ay) + bottom * ay
    }

    /// 2x2 box-filtered half-size plane (rounded to nearest).
    pub fn downsample2(&self) -> Plane {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut out = Plane::new(w, h);
        for y in 0..h {
            let r0 = self.row(2 * y);
            let r1 = self.row(2 * y + 1);
            let dst = &mut out.data[y * w..(y + 1) * w];
            for (x, d) in dst.iter_mut().enumerate() {
                let s = r0[2 * x] as u32 + r0[2 * x + 1] as u32 + r1[2 * x] as u32 + r1[2 * x + 1] as u32;
                *d = ((s + 2) / 4) as u8;
            }
        }
        out
    }
}

/// A decoded video frame: luma always, chroma as optional 4:2:0 planes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    pub luma: Plane,
    pub chroma: Option<[Plane; 2]>,
}

impl Frame {
    pub fn gray(index: usize, luma: Plane) -> Self {
        Self { index, luma, chroma: None }
    }

    pub fn width(&self) -> usize {
        self.luma.width
    }

    pub fn height(&self) -> usize {
        self.luma.height
    }

    pub fn chroma_dims(width: usize, height: usize) -> (usize, usize) {
        (width.div_ceil(2), height.div_ceil(2))
    }

    pub fn validate(&self) -> Result<()> {
        if self.luma.data.len() != self.width() * self.height() {
            return Err(Error::Format { what: "frame", detail: "luma size mismatch".into() });
        }
        if let Some([u, v]) = &self.chroma {
            let (cw, ch) = Self::chroma_dims(self.width(), self.height());
            for p in [u, v] {
                if p.width != cw || p.height != ch || p.data.len() != cw * ch {
                    return Err(Error::Format { what: "frame", detail: "chroma size mismatch".into() });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_pixel_centers_and_midpoints() {
        let p = Plane::from_fn(4, 1, |x, _| (x * 10) as u8);
        assert_eq!(p.sample(0.5, 0.5), 0.0);
        assert_eq!(p.sample(2.5, 0.5), 20.0);
        assert_eq!(p.sample(1.0, 0.5), 5.0);
        // Clamped beyond the last center.
        assert_eq!(p.sample(4.0, 0.5), 30.0);
    }

    #[test]
    fn downsample_rounds_box_average() {
        let p = Plane::from_vec(2, 2, vec![0, 1, 1, 1]).unwrap();
        assert_eq!(p.downsample2().data, vec![1]);
        let odd = Plane::filled(5, 3, 9);
        let d = odd.downsample2();
        assert_eq!((d.width, d.height), (2, 1));
    }

    #[test]
    fn validate_checks_chroma_dims() {
        let mut f = Frame::gray(0, Plane::new(5, 3));
        f.chroma = Some([Plane::new(3, 2), Plane::new(3, 2)]);
        assert!(f.validate().is_ok());
        f.chroma = Some([Plane::new(2, 2), Plane::new(3, 2)]);
        assert!(f.validate().is_err());
    }
}
