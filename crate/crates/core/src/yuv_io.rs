//! Raw I420 ingestion and half-resolution luma downsampling.
//!
//! Files carry no header: each picture is a full-resolution Y plane followed
//! by quarter-size U and V planes. Only luma is retained.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoSpec {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frame_count: usize,
}

impl VideoSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 || !self.width.is_multiple_of(2) || !self.height.is_multiple_of(2) {
            return Err(Error::InvalidSpec(format!(
                "dimensions {}x{} must be even and at least 16",
                self.width, self.height
            )));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidSpec(format!("fps {} must be positive", self.fps)));
        }
        if self.frame_count == 0 {
            return Err(Error::InvalidSpec("frame_count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn luma_size(&self) -> usize {
        self.width * self.height
    }

    /// Bytes occupied by one I420 picture.
    pub fn frame_size(&self) -> usize {
        self.luma_size() + 2 * (self.width / 2) * (self.height / 2)
    }

    pub fn pixels(&self) -> u64 {
        self.luma_size() as u64
    }
}

/// One 8-bit luma plane stored row-major without padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FramePlane {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl FramePlane {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidPlane(format!("empty plane {width}x{height}")));
        }
        if samples.len() != width * height {
            return Err(Error::InvalidPlane(format!(
                "{} samples for a {width}x{height} plane",
                samples.len()
            )));
        }
        Ok(Self { width, height, samples })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, samples: vec![value; width * height] }
    }

    /// Builds a plane by evaluating `f(x, y)` at every sample.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self { width, height, samples }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    /// Sample lookup with edge replication outside the plane.
    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize) -> u8 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.samples[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().map(|&s| s as u64).sum::<u64>() as f64 / self.samples.len() as f64
    }
}

/// Reads `spec.frame_count` pictures from an I420 file, keeping luma only.
pub fn read_yuv_sequence(path: impl AsRef<Path>, spec: &VideoSpec) -> Result<Vec<FramePlane>> {
    spec.validate()?;
    let file = File::open(path.as_ref())?;
    let found = file.metadata()?.len();
    let needed = (spec.frame_size() * spec.frame_count) as u64;
    if found < needed {
        return Err(Error::FileTooShort { needed, found });
    }

    let chroma = (spec.frame_size() - spec.luma_size()) as i64;
    let mut reader = BufReader::new(file);
    let mut frames = Vec::with_capacity(spec.frame_count);
    for _ in 0..spec.frame_count {
        let mut luma = vec![0u8; spec.luma_size()];
        reader.read_exact(&mut luma)?;
        reader.seek(SeekFrom::Current(chroma))?;
        frames.push(FramePlane { width: spec.width, height: spec.height, samples: luma });
    }
    Ok(frames)
}

/// Writes luma planes as I420 with neutral (128) chroma.
pub fn write_yuv_sequence(path: impl AsRef<Path>, frames: &[FramePlane]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    for plane in frames {
        if plane.width % 2 != 0 || plane.height % 2 != 0 {
            return Err(Error::OddDimensions { width: plane.width, height: plane.height });
        }
        out.write_all(&plane.samples)?;
        let chroma = vec![128u8; 2 * (plane.width / 2) * (plane.height / 2)];
        out.write_all(&chroma)?;
    }
    out.flush()?;
    Ok(())
}

/// 2x2 box average with round-half-up.
pub fn downsample_half(plane: &FramePlane) -> Result<FramePlane> {
    if !plane.width.is_multiple_of(2) || !plane.height.is_multiple_of(2) {
        return Err(Error::OddDimensions { width: plane.width, height: plane.height });
    }
    let (w, h) = (plane.width / 2, plane.height / 2);
    let src = &plane.samples;
    let stride = plane.width;
    let mut samples = Vec::with_capacity(w * h);
    for y in 0..h {
        let r0 = &src[2 * y * stride..][..stride];
        let r1 = &src[(2 * y + 1) * stride..][..stride];
        for x in 0..w {
            let sum = r0[2 * x] as u16 + r0[2 * x + 1] as u16 + r1[2 * x] as u16 + r1[2 * x + 1] as u16;
            samples.push(((sum + 2) >> 2) as u8);
        }
    }
    Ok(FramePlane { width: w, height: h, samples })
}
