//! Image-grid containers and bit-exact grid file I/O.
//!
//! Conventions used throughout the crate:
//! - pixel centers sit at integer coordinates, pixel (0, 0) is top-left;
//! - invalid or missing values are encoded as NaN inside float grids;
//! - masks are separate single-channel grids holding exactly 0.0 or 1.0.
//!
//! The on-disk format `RFG1` is: 4 magic bytes `RFG1`, little-endian u32
//! width / height / channels / dtype (1 = f32), then width x height x channels
//! little-endian f32 values, row-major, channel-interleaved.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RFG1";
const DTYPE_F32: u32 = 1;

/// Dense row-major float raster with 1-3 interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Grid2 {
    /// Grid filled with a constant value.
    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::from_data(width, height, channels, vec![value; width * height * channels])
    }

    /// Grid of zeros.
    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, 0.0)
    }

    /// Grid of NaNs (everything invalid).
    pub fn nans(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, f32::NAN)
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width < 1 || height < 1 {
            return Err(Error::Shape(format!("grid dimensions {width}x{height} must be >= 1")));
        }
        if !(1..=3).contains(&channels) {
            return Err(Error::Shape(format!("channels must be 1..=3, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "data length {} != {width} x {height} x {channels}",
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// True when the two grids have identical width, height and channels.
    pub fn same_shape(&self, other: &Grid2) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Mutable access to one row (all channels interleaved), for parallel fills.
    pub fn rows_mut(&mut self) -> std::slice::ChunksMut<'_, f32> {
        self.data.chunks_mut(self.width * self.channels)
    }

    /// Write in `RFG1` format.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&(self.channels as u32).to_le_bytes())?;
        w.write_all(&DTYPE_F32.to_le_bytes())?;
        // Round-trips must be bit-exact, NaN payloads included, so raw bits
        // are written rather than anything that could canonicalize NaNs.
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    /// Read an `RFG1` file.
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        read_exact_at(&mut r, &mut magic, 0)?;
        if &magic != MAGIC {
            return Err(Error::Format {
                msg: format!("bad magic {magic:?}, expected {MAGIC:?}"),
                offset: 0,
            });
        }
        let width = read_u32_at(&mut r, 4)? as usize;
        let height = read_u32_at(&mut r, 8)? as usize;
        let channels = read_u32_at(&mut r, 12)? as usize;
        let dtype = read_u32_at(&mut r, 16)?;
        if dtype != DTYPE_F32 {
            return Err(Error::Format {
                msg: format!("unsupported dtype code {dtype}"),
                offset: 16,
            });
        }
        if width == 0 || height == 0 || !(1..=3).contains(&channels) {
            return Err(Error::Format {
                msg: format!("invalid header {width}x{height}x{channels}"),
                offset: 4,
            });
        }
        let n = width * height * channels;
        let mut bytes = vec![0u8; n * 4];
        read_exact_at(&mut r, &mut bytes, 20)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_bits(u32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        Self::from_data(width, height, channels, data)
    }

    /// Export as an 8-bit PNG. Each channel is min-max normalized over its
    /// finite values; NaNs render as 0. 2-channel grids pad blue with zeros.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        self.export_png(path, None)
    }

    /// Export as PNG mapping values from a fixed range (e.g. [-1, 1] for
    /// normal maps) to [0, 255].
    pub fn write_png_fixed_range(&self, path: &Path, lo: f32, hi: f32) -> Result<()> {
        self.export_png(path, Some((lo, hi)))
    }

    fn export_png(&self, path: &Path, range: Option<(f32, f32)>) -> Result<()> {
        let mut ranges = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            let r = match range {
                Some(r) => r,
                None => {
                    let mut lo = f32::INFINITY;
                    let mut hi = f32::NEG_INFINITY;
                    for y in 0..self.height {
                        for x in 0..self.width {
                            let v = self.get(x, y, c);
                            if v.is_finite() {
                                lo = lo.min(v);
                                hi = hi.max(v);
                            }
                        }
                    }
                    if lo > hi {
                        (0.0, 1.0)
                    } else if lo == hi {
                        (lo, lo + 1.0)
                    } else {
                        (lo, hi)
                    }
                }
            };
            ranges.push(r);
        }
        let to_u8 = |v: f32, (lo, hi): (f32, f32)| -> u8 {
            if !v.is_finite() {
                return 0;
            }
            (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8
        };
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut px = [0u8; 3];
                match self.channels {
                    1 => {
                        let g = to_u8(self.get(x, y, 0), ranges[0]);
                        px = [g, g, g];
                    }
                    n => {
                        for (c, item) in px.iter_mut().enumerate().take(n) {
                            *item = to_u8(self.get(x, y, c), ranges[c]);
                        }
                    }
                }
                img.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        img.save(path)
            .map_err(|e| Error::Config(format!("png export failed: {e}")))?;
        Ok(())
    }
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: u64) -> Result<()> {
    let mut filled = 0usize;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            return Err(Error::Format {
                msg: format!("truncated file: expected {} more bytes", buf.len() - filled),
                offset: offset + filled as u64,
            });
        }
        filled += n;
    }
    Ok(())
}

fn read_u32_at<R: Read>(r: &mut R, offset: u64) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_at(r, &mut b, offset)?;
    Ok(u32::from_le_bytes(b))
}

/// Binary mask: single-channel grid whose entries are exactly 0.0 or 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    grid: Grid2,
}

impl Mask {
    pub fn new(grid: Grid2) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(Error::Shape(format!(
                "mask must have 1 channel, got {}",
                grid.channels()
            )));
        }
        if grid.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain("mask entries must be exactly 0.0 or 1.0".into()));
        }
        Ok(Self { grid })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Ok(Self {
            grid: Grid2::zeros(width, height, 1)?,
        })
    }

    pub fn filled(width: usize, height: usize) -> Result<Self> {
        Ok(Self {
            grid: Grid2::filled(width, height, 1, 1.0)?,
        })
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn into_grid(self) -> Grid2 {
        self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn is_set(&self, x: usize, y: usize) -> bool {
        self.grid.get(x, y, 0) == 1.0
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.grid.set(x, y, 0, if on { 1.0 } else { 0.0 });
    }

    pub fn count(&self) -> usize {
        self.grid.data().iter().filter(|&&v| v == 1.0).count()
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::new(Grid2::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.grid.write(path)
    }
}
