//! Evaluation metrics for normals, flow and depth.
//!
//! All statistics are computed only over masked pixels where both operands
//! are finite; they are permutation-invariant over pixels and blind to
//! anything outside the mask.

use serde::{Deserialize, Serialize};

use crate::codec::FlowField;
use crate::error::{Error, Result};
use crate::grid::{Grid2, Mask};
use crate::normals::NormalMap;

/// Angular-error statistics in degrees plus threshold percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalMetrics {
    pub mean_deg: f64,
    pub median_deg: f64,
    /// Percentage of pixels with error below 11.25 degrees.
    pub pct_11_25: f64,
    /// Percentage below 22.5 degrees.
    pub pct_22_5: f64,
    /// Percentage below 30 degrees.
    pub pct_30: f64,
    pub n_pixels: usize,
}

/// Per-pixel angular error between predicted and ground-truth normals.
///
/// Error is `arccos(clamp(pred . gt, -1, 1))` after normalization. Median
/// uses the midpoint-average convention for even counts.
pub fn angular_error_stats(pred: &NormalMap, gt: &NormalMap, mask: &Mask) -> Result<NormalMetrics> {
    let (w, h) = (pred.width(), pred.height());
    if gt.width() != w || gt.height() != h || mask.width() != w || mask.height() != h {
        return Err(Error::Shape("metric inputs must share resolution".into()));
    }
    let mut errs = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.is_set(x, y) || !pred.is_finite(x, y) || !gt.is_finite(x, y) {
                continue;
            }
            let a = pred.get(x, y).normalize();
            let b = gt.get(x, y).normalize();
            errs.push(a.dot(&b).clamp(-1.0, 1.0).acos().to_degrees());
        }
    }
    stats_from_errors(&mut errs)
}

fn stats_from_errors(errs: &mut [f64]) -> Result<NormalMetrics> {
    if errs.is_empty() {
        return Err(Error::Empty("no evaluable pixels for angular statistics".into()));
    }
    let n = errs.len();
    let mean = errs.iter().sum::<f64>() / n as f64;
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if n % 2 == 1 {
        errs[n / 2]
    } else {
        0.5 * (errs[n / 2 - 1] + errs[n / 2])
    };
    let pct = |thr: f64| 100.0 * errs.iter().filter(|&&e| e < thr).count() as f64 / n as f64;
    Ok(NormalMetrics {
        mean_deg: mean,
        median_deg: median,
        pct_11_25: pct(11.25),
        pct_22_5: pct(22.5),
        pct_30: pct(30.0),
        n_pixels: n,
    })
}

/// Root-mean-square flow difference over masked mutually-finite pixels,
/// in pixels (2-vector Euclidean norm per pixel).
pub fn flow_rmse(pred: &FlowField, gt: &FlowField, mask: &Mask) -> Result<f64> {
    let (w, h) = (pred.width(), pred.height());
    if gt.width() != w || gt.height() != h || mask.width() != w || mask.height() != h {
        return Err(Error::Shape("metric inputs must share resolution".into()));
    }
    let mut total = 0.0f64;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            if !mask.is_set(x, y) || !pred.is_finite(x, y) || !gt.is_finite(x, y) {
                continue;
            }
            let p = pred.get(x, y);
            let g = gt.get(x, y);
            let (dx, dy) = ((p[0] - g[0]) as f64, (p[1] - g[1]) as f64);
            total += dx * dx + dy * dy;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no evaluable pixels for flow RMSE".into()));
    }
    Ok((total / n as f64).sqrt())
}

/// RMS depth difference in meters over masked mutually-finite pixels.
pub fn depth_rmse_m(pred: &Grid2, gt: &Grid2, mask: &Mask) -> Result<f64> {
    let (w, h) = (pred.width(), pred.height());
    if gt.width() != w || gt.height() != h || mask.width() != w || mask.height() != h {
        return Err(Error::Shape("metric inputs must share resolution".into()));
    }
    let mut total = 0.0f64;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            let (p, g) = (pred.get(x, y, 0), gt.get(x, y, 0));
            if !mask.is_set(x, y) || !p.is_finite() || !g.is_finite() {
                continue;
            }
            total += ((p - g) as f64).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no evaluable pixels for depth RMSE".into()));
    }
    Ok((total / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn uniform_normals(w: usize, h: usize, n: Vec3) -> NormalMap {
        let mut m = NormalMap::nans(w, h);
        for y in 0..h {
            for x in 0..w {
                m.set(x, y, n);
            }
        }
        m
    }

    #[test]
    fn identical_normals_score_zero() {
        let gt = uniform_normals(8, 8, Vec3::new(0.0, 0.0, -1.0));
        let mask = Mask::filled(8, 8).unwrap();
        let m = angular_error_stats(&gt, &gt, &mask).unwrap();
        assert_eq!(m.mean_deg, 0.0);
        assert_eq!(m.median_deg, 0.0);
        assert_eq!(m.pct_11_25, 100.0);
        assert_eq!(m.pct_22_5, 100.0);
        assert_eq!(m.pct_30, 100.0);
        assert_eq!(m.n_pixels, 64);
    }

    #[test]
    fn uniform_15_degree_rotation() {
        let gt = uniform_normals(8, 8, Vec3::new(0.0, 0.0, -1.0));
        let t = 15f64.to_radians();
        let pred = uniform_normals(8, 8, Vec3::new(t.sin(), 0.0, -t.cos()));
        let mask = Mask::filled(8, 8).unwrap();
        let m = angular_error_stats(&pred, &gt, &mask).unwrap();
        // normals live in f32 grids; 1e-3 deg covers the storage rounding
        assert!((m.mean_deg - 15.0).abs() < 1e-3);
        assert_eq!(m.pct_11_25, 0.0);
        assert_eq!(m.pct_22_5, 100.0);
        assert_eq!(m.pct_30, 100.0);
    }

    #[test]
    fn half_5_half_25_mixture() {
        let (w, h) = (8, 8);
        let gt = uniform_normals(w, h, Vec3::new(0.0, 0.0, -1.0));
        let mut pred = NormalMap::nans(w, h);
        for y in 0..h {
            for x in 0..w {
                let deg: f64 = if (y * w + x) % 2 == 0 { 5.0 } else { 25.0 };
                let t = deg.to_radians();
                pred.set(x, y, Vec3::new(t.sin(), 0.0, -t.cos()));
            }
        }
        let mask = Mask::filled(w, h).unwrap();
        let m = angular_error_stats(&pred, &gt, &mask).unwrap();
        assert!((m.mean_deg - 15.0).abs() < 1e-3);
        // even count: midpoint average of the two central values (5, 25)
        assert!((m.median_deg - 15.0).abs() < 1e-3);
        assert!((m.pct_11_25 - 50.0).abs() < 1e-12);
        assert!((m.pct_22_5 - 50.0).abs() < 1e-12);
        assert!((m.pct_30 - 100.0).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_errors() {
        let gt = uniform_normals(4, 4, Vec3::new(0.0, 0.0, -1.0));
        let mask = Mask::zeros(4, 4).unwrap();
        assert!(angular_error_stats(&gt, &gt, &mask).is_err());
    }

    #[test]
    fn flow_rmse_examples() {
        let (w, h) = (6, 6);
        let mut a = FlowField::nans(w, h);
        let mut b = FlowField::nans(w, h);
        for y in 0..h {
            for x in 0..w {
                a.set(x, y, [1.5, -2.0]);
                b.set(x, y, [1.5, -2.0]);
            }
        }
        let mask = Mask::filled(w, h).unwrap();
        assert_eq!(flow_rmse(&a, &b, &mask).unwrap(), 0.0);
        for y in 0..h {
            for x in 0..w {
                b.set(x, y, [1.5 + 3.0, -2.0 + 4.0]);
            }
        }
        assert!((flow_rmse(&a, &b, &mask).unwrap() - 5.0).abs() < 1e-6);
    }

    #[test]
    fn flow_rmse_matches_brute_force_on_random_fields() {
        let (w, h) = (16, 16);
        let mut a = FlowField::nans(w, h);
        let mut b = FlowField::nans(w, h);
        let mut mask = Mask::zeros(w, h).unwrap();
        let mut state = 7u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) as f32 * 4.0 - 2.0
        };
        let mut total = 0.0f64;
        let mut n = 0usize;
        for y in 0..h {
            for x in 0..w {
                let (ax, ay, bx, by) = (next(), next(), next(), next());
                a.set(x, y, [ax, ay]);
                b.set(x, y, [bx, by]);
                if (x + y) % 3 != 0 {
                    mask.set(x, y, true);
                    total += ((ax - bx) as f64).powi(2) + ((ay - by) as f64).powi(2);
                    n += 1;
                }
            }
        }
        let oracle = (total / n as f64).sqrt();
        assert!((flow_rmse(&a, &b, &mask).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn metrics_ignore_unmasked_content() {
        let (w, h) = (6, 6);
        let gt = uniform_normals(w, h, Vec3::new(0.0, 0.0, -1.0));
        let mut pred = uniform_normals(w, h, Vec3::new(0.0, 0.0, -1.0));
        let mut mask = Mask::filled(w, h).unwrap();
        mask.set(0, 0, false);
        pred.set(0, 0, Vec3::new(1.0, 0.0, 0.0)); // garbage outside the mask
        let m = angular_error_stats(&pred, &gt, &mask).unwrap();
        assert_eq!(m.mean_deg, 0.0);
        assert_eq!(m.n_pixels, 35);
    }
}
