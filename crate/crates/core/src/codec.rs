//! Gray-code stack decoding and refractive flow from correspondences.
//!
//! A captured stack is thresholded per pixel against its own white/black
//! reference frames, which makes the decoded correspondence map exactly
//! invariant to global affine intensity changes (gain/offset), the property
//! that keeps flow stable under ambient light variation.
//!
//! Flow convention: for a pixel p seen through the object, the decoded
//! background coordinate is matched back into the reference (no-object)
//! capture at sub-pixel location q, and flow(p) = q - p in camera pixels.
//! Flow is NaN outside the object mask and wherever decoding failed.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graycode::{gray_decode, FrameKind, StackMeta};
use crate::grid::{Grid2, Mask};

/// Default decode contrast floor, as a fraction of full intensity scale.
pub const DEFAULT_MIN_CONTRAST: f32 = 0.05;

/// Sub-pixel flow below this magnitude is below decode quantization.
pub const FLOW_QUANTIZATION_FLOOR_PX: f64 = 0.5;

const LOCAL_SEARCH_RADIUS: i64 = 2;
const AFFINE_WINDOW_RADIUS: i64 = 2; // 5x5 window
const MIN_AFFINE_SAMPLES: usize = 3;

/// Per-pixel decoded background pattern coordinate (u, v) in pattern units,
/// stored at cell centers (k + 0.5). NaN where decoding failed.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    grid: Grid2,
}

impl CorrespondenceMap {
    pub fn new(grid: Grid2) -> Result<Self> {
        if grid.channels() != 2 {
            return Err(Error::Shape("correspondence map must have 2 channels".into()));
        }
        Ok(Self { grid })
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        [self.grid.get(x, y, 0), self.grid.get(x, y, 1)]
    }

    #[inline]
    pub fn is_decoded(&self, x: usize, y: usize) -> bool {
        self.get(x, y).iter().all(|v| v.is_finite())
    }
}

/// Per-pixel 2-vector offset map in camera pixels; NaN where undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    grid: Grid2,
}

impl FlowField {
    pub fn new(grid: Grid2) -> Result<Self> {
        if grid.channels() != 2 {
            return Err(Error::Shape("flow field must have 2 channels".into()));
        }
        Ok(Self { grid })
    }

    pub fn nans(width: usize, height: usize) -> Self {
        Self {
            grid: Grid2::nans(width, height, 2).expect("valid dims"),
        }
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn grid_mut(&mut self) -> &mut Grid2 {
        &mut self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        [self.grid.get(x, y, 0), self.grid.get(x, y, 1)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, f: [f32; 2]) {
        self.grid.set(x, y, 0, f[0]);
        self.grid.set(x, y, 1, f[1]);
    }

    #[inline]
    pub fn is_finite(&self, x: usize, y: usize) -> bool {
        self.get(x, y).iter().all(|v| v.is_finite())
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::new(Grid2::read(path)?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        self.grid.write(path)
    }
}

/// Decode a captured gray-code stack into a correspondence map.
///
/// Bit b of each coordinate is `intensity > (white + black) / 2` using that
/// pixel's own reference frames; pixels whose white-black contrast falls
/// below `min_contrast` times the capture's full intensity scale (the
/// largest white-black span in the frame pair) decode to NaN, as do
/// assembled codes outside the pattern extent. Both the bit threshold and
/// the contrast gate compare quantities that transform identically under a
/// global gain/offset, so the decoded map is invariant to affine intensity
/// changes.
pub fn decode_stack(captured: &[Grid2], meta: &StackMeta, min_contrast: f32) -> Result<CorrespondenceMap> {
    if captured.len() != meta.frame_count() {
        return Err(Error::Shape(format!(
            "captured stack has {} frames, expected {}",
            captured.len(),
            meta.frame_count()
        )));
    }
    let (w, h) = (captured[0].width(), captured[0].height());
    for (i, f) in captured.iter().enumerate() {
        if f.width() != w || f.height() != h || f.channels() != 1 {
            return Err(Error::Shape(format!(
                "frame {i} is {}x{}x{}, expected {w}x{h}x1",
                f.width(),
                f.height(),
                f.channels()
            )));
        }
    }
    let bits = meta.bits as usize;
    let white = &captured[2 * bits];
    let black = &captured[2 * bits + 1];

    // full intensity scale of this capture: largest white-black span
    let mut scale = 0.0f32;
    for y in 0..h {
        for x in 0..w {
            let span = white.get(x, y, 0) - black.get(x, y, 0);
            if span.is_finite() && span > scale {
                scale = span;
            }
        }
    }
    if scale <= 0.0 {
        return CorrespondenceMap::new(Grid2::nans(w, h, 2)?);
    }
    let gate = min_contrast * scale;

    let mut grid = Grid2::nans(w, h, 2)?;
    grid.rows_mut()
        .enumerate()
        .par_bridge()
        .for_each(|(y, row)| {
            for x in 0..w {
                let wv = white.get(x, y, 0);
                let bv = black.get(x, y, 0);
                if !(wv.is_finite() && bv.is_finite()) || wv - bv < gate {
                    continue;
                }
                let threshold = 0.5 * (wv + bv);
                let mut u_code = 0u32;
                let mut v_code = 0u32;
                let mut ok = true;
                for (i, frame) in captured.iter().enumerate().take(2 * bits) {
                    let iv = frame.get(x, y, 0);
                    if !iv.is_finite() {
                        ok = false;
                        break;
                    }
                    let bit = (iv > threshold) as u32;
                    match meta.frame_kind(i) {
                        FrameKind::Vertical => u_code = (u_code << 1) | bit,
                        FrameKind::Horizontal => v_code = (v_code << 1) | bit,
                        _ => unreachable!(),
                    }
                }
                if !ok {
                    continue;
                }
                let u = gray_decode(u_code, meta.bits).expect("code within bit range");
                let v = gray_decode(v_code, meta.bits).expect("code within bit range");
                if u >= meta.pattern_width || v >= meta.pattern_height {
                    continue;
                }
                row[2 * x] = u as f32 + 0.5;
                row[2 * x + 1] = v as f32 + 0.5;
            }
        });
    CorrespondenceMap::new(grid)
}

/// Least-squares affine fit (u, v) ~ A * (x, y) + b over samples.
/// Returns rows [a1, a2, a0] per output coordinate, or None when degenerate.
fn fit_affine(samples: &[(f64, f64, f64, f64)]) -> Option<[Vector3<f64>; 2]> {
    if samples.len() < MIN_AFFINE_SAMPLES {
        return None;
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut atu = Vector3::<f64>::zeros();
    let mut atv = Vector3::<f64>::zeros();
    for &(x, y, u, v) in samples {
        let row = Vector3::new(x, y, 1.0);
        ata += row * row.transpose();
        atu += row * u;
        atv += row * v;
    }
    let chol = ata.cholesky()?;
    Some([chol.solve(&atu), chol.solve(&atv)])
}

/// Invert an affine map at a target (u, v); None when the Jacobian is singular.
fn invert_affine(coeff: &[Vector3<f64>; 2], target: [f64; 2]) -> Option<[f64; 2]> {
    let jac = Matrix2::new(coeff[0][0], coeff[0][1], coeff[1][0], coeff[1][1]);
    let rhs = Vector2::new(target[0] - coeff[0][2], target[1] - coeff[1][2]);
    let inv = jac.try_inverse()?;
    let q = inv * rhs;
    Some([q[0], q[1]])
}

/// Compute refractive flow by matching object-capture correspondences back
/// into the reference (no-object) correspondence map.
///
/// For each masked decodable pixel, the reference pixel whose decoded
/// coordinate best matches is located, a local affine model of the reference
/// mapping is fit over a 5x5 window, and the model is inverted at the target
/// coordinate for a sub-pixel match position.
pub fn flow_from_correspondence(
    m_obj: &CorrespondenceMap,
    m_ref: &CorrespondenceMap,
    mask: &Mask,
) -> Result<FlowField> {
    let (w, h) = (m_obj.width(), m_obj.height());
    if m_ref.width() != w || m_ref.height() != h || mask.width() != w || mask.height() != h {
        return Err(Error::Shape("correspondence maps and mask must share resolution".into()));
    }

    // Global affine seed for the inverse lookup; the reference mapping of a
    // fronto-parallel background is near-affine so this lands within a pixel
    // or two of the true match.
    let mut all = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if m_ref.is_decoded(x, y) {
                let [u, v] = m_ref.get(x, y);
                all.push((x as f64, y as f64, u as f64, v as f64));
            }
        }
    }
    let global = fit_affine(&all)
        .ok_or_else(|| Error::Empty("reference capture has too few decodable pixels".into()))?;

    let mut flow = FlowField::nans(w, h);
    let rows: Vec<Vec<[f32; 2]>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = vec![[f32::NAN, f32::NAN]; w];
            for (x, out) in row.iter_mut().enumerate() {
                if !mask.is_set(x, y) || !m_obj.is_decoded(x, y) {
                    continue;
                }
                let [tu, tv] = m_obj.get(x, y);
                let target = [tu as f64, tv as f64];
                if let Some(q) = match_reference(m_ref, &global, target) {
                    *out = [(q[0] - x as f64) as f32, (q[1] - y as f64) as f32];
                }
            }
            row
        })
        .collect();
    for (y, row) in rows.iter().enumerate() {
        for (x, f) in row.iter().enumerate() {
            flow.set(x, y, *f);
        }
    }
    Ok(flow)
}

/// Sub-pixel location in the reference capture whose decoded coordinate
/// equals `target`.
fn match_reference(
    m_ref: &CorrespondenceMap,
    global: &[Vector3<f64>; 2],
    target: [f64; 2],
) -> Option<[f64; 2]> {
    let (w, h) = (m_ref.width() as i64, m_ref.height() as i64);
    let seed = invert_affine(global, target)?;
    let sx = (seed[0].round() as i64).clamp(0, w - 1);
    let sy = (seed[1].round() as i64).clamp(0, h - 1);

    // nearest decoded reference pixel around the seed
    let mut best: Option<(f64, i64, i64)> = None;
    for dy in -LOCAL_SEARCH_RADIUS..=LOCAL_SEARCH_RADIUS {
        for dx in -LOCAL_SEARCH_RADIUS..=LOCAL_SEARCH_RADIUS {
            let (qx, qy) = (sx + dx, sy + dy);
            if qx < 0 || qy < 0 || qx >= w || qy >= h {
                continue;
            }
            if !m_ref.is_decoded(qx as usize, qy as usize) {
                continue;
            }
            let [u, v] = m_ref.get(qx as usize, qy as usize);
            let d2 = (u as f64 - target[0]).powi(2) + (v as f64 - target[1]).powi(2);
            if best.is_none_or(|(bd, _, _)| d2 < bd) {
                best = Some((d2, qx, qy));
            }
        }
    }
    let (_, bx, by) = best?;

    // local affine fit of the reference mapping over a 5x5 window
    let mut samples = Vec::with_capacity(25);
    for dy in -AFFINE_WINDOW_RADIUS..=AFFINE_WINDOW_RADIUS {
        for dx in -AFFINE_WINDOW_RADIUS..=AFFINE_WINDOW_RADIUS {
            let (qx, qy) = (bx + dx, by + dy);
            if qx < 0 || qy < 0 || qx >= w || qy >= h {
                continue;
            }
            if m_ref.is_decoded(qx as usize, qy as usize) {
                let [u, v] = m_ref.get(qx as usize, qy as usize);
                samples.push((qx as f64, qy as f64, u as f64, v as f64));
            }
        }
    }
    let local = fit_affine(&samples)?;
    invert_affine(&local, target)
}
