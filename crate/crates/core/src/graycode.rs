//! Gray-code pattern generation.
//!
//! The acquisition displays `bits` vertical stripe patterns (encoding the
//! horizontal pattern coordinate, most significant bit first), then `bits`
//! horizontal ones, then an all-white and an all-black reference frame used
//! for per-pixel adaptive thresholding. With the default 10 bits this is a
//! 22-frame stack.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2;

/// Binary-reflected gray code.
pub fn gray_encode(n: u32, bits: u32) -> Result<u32> {
    if bits == 0 || bits > 31 || n >= (1 << bits) {
        return Err(Error::Domain(format!("value {n} out of range for {bits}-bit gray code")));
    }
    Ok(n ^ (n >> 1))
}

/// Inverse of [`gray_encode`].
pub fn gray_decode(code: u32, bits: u32) -> Result<u32> {
    if bits == 0 || bits > 31 || code >= (1 << bits) {
        return Err(Error::Domain(format!("code {code} out of range for {bits}-bit gray code")));
    }
    let mut n = code;
    let mut shift = 1;
    while shift < bits {
        n ^= n >> shift;
        shift <<= 1;
    }
    Ok(n)
}

/// Which coordinate a coded frame group encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameKind {
    /// Vertical stripes, encodes the horizontal pattern coordinate u.
    Vertical,
    /// Horizontal stripes, encodes the vertical pattern coordinate v.
    Horizontal,
    White,
    Black,
}

/// Metadata describing a pattern stack; shared between the displayed frames
/// and the captured frames so decoders know the frame order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackMeta {
    pub bits: u32,
    pub pattern_width: u32,
    pub pattern_height: u32,
}

impl StackMeta {
    pub fn new(bits: u32, pattern_width: u32, pattern_height: u32) -> Result<Self> {
        if bits == 0 || bits > 16 {
            return Err(Error::Domain(format!("bits must be in 1..=16, got {bits}")));
        }
        if pattern_width as u64 > 1 << bits || pattern_height as u64 > 1 << bits {
            return Err(Error::Domain(format!(
                "pattern {pattern_width}x{pattern_height} exceeds 2^{bits} stripes"
            )));
        }
        if pattern_width == 0 || pattern_height == 0 {
            return Err(Error::Domain("pattern dimensions must be >= 1".into()));
        }
        Ok(Self { bits, pattern_width, pattern_height })
    }

    /// Default 10-bit / 1024x1024 stack.
    pub fn default_10bit() -> Self {
        Self { bits: 10, pattern_width: 1024, pattern_height: 1024 }
    }

    /// Total frames: 2*bits coded plus white and black references.
    pub fn frame_count(&self) -> usize {
        2 * self.bits as usize + 2
    }

    /// Kind of the frame at stack position `idx`.
    pub fn frame_kind(&self, idx: usize) -> FrameKind {
        let b = self.bits as usize;
        if idx < b {
            FrameKind::Vertical
        } else if idx < 2 * b {
            FrameKind::Horizontal
        } else if idx == 2 * b {
            FrameKind::White
        } else {
            FrameKind::Black
        }
    }

    /// Displayed intensity (0 or 1) of frame `idx` at pattern cell (u, v).
    ///
    /// Vertical frame k is white in column u iff bit (bits-1-k) of
    /// gray_encode(u) is set; horizontal frames are the analogue on rows.
    pub fn frame_value(&self, idx: usize, u: u32, v: u32) -> f32 {
        let b = self.bits;
        match self.frame_kind(idx) {
            FrameKind::Vertical => {
                let code = u ^ (u >> 1);
                let bit = b - 1 - idx as u32;
                ((code >> bit) & 1) as f32
            }
            FrameKind::Horizontal => {
                let code = v ^ (v >> 1);
                let bit = b - 1 - (idx as u32 - b);
                ((code >> bit) & 1) as f32
            }
            FrameKind::White => 1.0,
            FrameKind::Black => 0.0,
        }
    }
}

/// A generated stack of displayed pattern frames plus its metadata.
#[derive(Debug, Clone)]
pub struct PatternStack {
    pub meta: StackMeta,
    pub frames: Vec<Grid2>,
}

/// Generate the displayed pattern frames at pattern resolution.
pub fn gen_patterns(bits: u32, pattern_width: u32, pattern_height: u32) -> Result<PatternStack> {
    let meta = StackMeta::new(bits, pattern_width, pattern_height)?;
    let (w, h) = (pattern_width as usize, pattern_height as usize);
    let mut frames = Vec::with_capacity(meta.frame_count());
    for idx in 0..meta.frame_count() {
        let mut g = Grid2::zeros(w, h, 1)?;
        for y in 0..h {
            for x in 0..w {
                g.set(x, y, 0, meta.frame_value(idx, x as u32, y as u32));
            }
        }
        frames.push(g);
    }
    Ok(PatternStack { meta, frames })
}

pub fn frame_file_name(idx: usize) -> String {
    format!("frame_{idx:03}.rfg")
}

/// On-disk manifest for a stack directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackManifest {
    pub bits: u32,
    pub pattern_width: u32,
    pub pattern_height: u32,
    /// Frame order: vertical stripes MSB-first, horizontal stripes MSB-first,
    /// white reference, black reference.
    pub order: String,
    pub frames: Vec<String>,
}

impl StackManifest {
    pub fn for_meta(meta: &StackMeta) -> Self {
        Self {
            bits: meta.bits,
            pattern_width: meta.pattern_width,
            pattern_height: meta.pattern_height,
            order: "vertical-msb,horizontal-msb,white,black".into(),
            frames: (0..meta.frame_count()).map(frame_file_name).collect(),
        }
    }

    pub fn meta(&self) -> Result<StackMeta> {
        StackMeta::new(self.bits, self.pattern_width, self.pattern_height)
    }
}

/// Write a stack (frames + manifest) into a directory.
pub fn write_stack(dir: &Path, meta: &StackMeta, frames: &[Grid2]) -> Result<()> {
    if frames.len() != meta.frame_count() {
        return Err(Error::Shape(format!(
            "stack has {} frames, expected {}",
            frames.len(),
            meta.frame_count()
        )));
    }
    std::fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        f.write(&dir.join(frame_file_name(i)))?;
    }
    let manifest = StackManifest::for_meta(meta);
    std::fs::write(dir.join("stack.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Load a stack directory written by [`write_stack`].
pub fn read_stack(dir: &Path) -> Result<(StackMeta, Vec<Grid2>)> {
    let manifest: StackManifest =
        serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(dir.join("stack.json"))?))?;
    let meta = manifest.meta()?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for name in &manifest.frames {
        frames.push(Grid2::read(&dir.join(name))?);
    }
    if frames.len() != meta.frame_count() {
        return Err(Error::Shape(format!(
            "manifest lists {} frames, expected {}",
            frames.len(),
            meta.frame_count()
        )));
    }
    Ok((meta, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        assert_eq!(gray_encode(0, 10).unwrap(), 0);
        assert_eq!(gray_encode(5, 10).unwrap(), 7);
    }

    #[test]
    fn out_of_range_is_domain_error() {
        assert!(gray_encode(1024, 10).is_err());
        assert!(gray_decode(1024, 10).is_err());
        assert!(gray_encode(2, 1).is_err());
    }

    #[test]
    fn exhaustive_roundtrip_and_adjacency_up_to_12_bits() {
        for bits in 1..=12u32 {
            for n in 0..(1u32 << bits) {
                let c = gray_encode(n, bits).unwrap();
                assert_eq!(gray_decode(c, bits).unwrap(), n);
                if n + 1 < (1 << bits) {
                    let c2 = gray_encode(n + 1, bits).unwrap();
                    assert_eq!((c ^ c2).count_ones(), 1, "bits={bits} n={n}");
                }
            }
        }
    }

    #[test]
    fn one_bit_vertical_pattern() {
        let stack = gen_patterns(1, 2, 2).unwrap();
        // gray(0)=0, gray(1)=1 -> [black, white]
        assert_eq!(stack.frames[0].get(0, 0, 0), 0.0);
        assert_eq!(stack.frames[0].get(1, 0, 0), 1.0);
        assert_eq!(stack.meta.frame_count(), 4);
    }

    #[test]
    fn ten_bit_stack_has_22_frames() {
        let meta = StackMeta::default_10bit();
        assert_eq!(meta.frame_count(), 22);
        assert_eq!(meta.frame_kind(20), FrameKind::White);
        assert_eq!(meta.frame_kind(21), FrameKind::Black);
    }

    #[test]
    fn every_column_decodes_back_to_itself() {
        let meta = StackMeta::new(6, 64, 64).unwrap();
        for u in 0..64u32 {
            let mut code = 0u32;
            for k in 0..6 {
                let bit = meta.frame_value(k, u, 0) as u32;
                code = (code << 1) | bit;
            }
            assert_eq!(gray_decode(code, 6).unwrap(), u);
        }
        // and rows through the horizontal group
        for v in 0..64u32 {
            let mut code = 0u32;
            for k in 6..12 {
                let bit = meta.frame_value(k, 0, v) as u32;
                code = (code << 1) | bit;
            }
            assert_eq!(gray_decode(code, 6).unwrap(), v);
        }
    }

    #[test]
    fn stack_io_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let stack = gen_patterns(2, 4, 4).unwrap();
        write_stack(dir.path(), &stack.meta, &stack.frames).unwrap();
        let (meta, frames) = read_stack(dir.path()).unwrap();
        assert_eq!(meta, stack.meta);
        assert_eq!(frames, stack.frames);
    }
}
