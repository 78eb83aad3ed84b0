//! Entropy rate of a slope and the entropy functional of piecewise-linear curves.
//!
//! The rate `e(u) = ½[(1+u)log(1+u) + (1−u)log(1−u)]` is the large-deviation cost per
//! unit length for a simple random walk bridge to move with mean slope `u`. The entropy
//! of a curve is the integral of `e` along its derivative; for piecewise-linear curves
//! this is an exact sum over segments.

use crate::curves::{Curve, Point};
use crate::error::{Error, Result};

pub const LN_2: f64 = std::f64::consts::LN_2;

/// Slopes within this distance beyond ±1 are clamped rather than rejected.
pub const SLOPE_TOL: f64 = 1e-12;

// Below this magnitude the power series is used to avoid cancellation.
const SERIES_CUTOFF: f64 = 0.1;

/// Entropy rate `e(u)` for `|u| ≤ 1`, with `e(±1) = log 2`.
pub fn pointwise_entropy(u: f64) -> Result<f64> {
    if !(u.abs() <= 1.0) {
        return Err(Error::Domain(format!("slope {u} outside [-1, 1]")));
    }
    Ok(entropy_rate(u))
}

/// Unchecked entropy rate. Slopes are clamped into `[-1, 1]`.
#[inline]
pub fn entropy_rate(u: f64) -> f64 {
    let a = u.abs().min(1.0);
    if a < SERIES_CUTOFF {
        // e(u) = Σ_{k≥1} u^{2k} / ((2k−1)·2k)
        let u2 = a * a;
        let mut term = u2;
        let mut sum = 0.0;
        for k in 1..=10u32 {
            let k2 = f64::from(2 * k);
            sum += term / ((k2 - 1.0) * k2);
            term *= u2;
        }
        sum
    } else if a == 1.0 {
        LN_2
    } else {
        0.5 * ((1.0 + a) * a.ln_1p() + (1.0 - a) * (-a).ln_1p())
    }
}

/// Entropy `Δx · e(Δy/Δx)` of a single linear segment with `Δx > 0`.
#[inline]
pub fn segment_entropy(dx: f64, dy: f64) -> f64 {
    dx * entropy_rate(dy / dx)
}

/// Exact entropy of a piecewise-linear curve (sum over its segments).
pub fn curve_entropy(curve: &Curve) -> f64 {
    polyline_entropy(curve.points())
}

pub(crate) fn polyline_entropy(points: &[Point]) -> f64 {
    points
        .windows(2)
        .map(|w| segment_entropy(w[1].x - w[0].x, w[1].y - w[0].y))
        .fold(0.0, |acc, s| acc + s)
}

/// Entropy of the tent `linear{(0,0), (x,y), (1,0)}`.
pub fn tent_entropy(x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) || y.abs() > x.min(1.0 - x) + SLOPE_TOL {
        return Err(Error::Domain(format!(
            "tent apex ({x}, {y}) outside the domain"
        )));
    }
    Ok(segment_entropy(x, y) + segment_entropy(1.0 - x, -y))
}

/// Entropy of the linear interpolation of a subset of `curve`'s breakpoints, paired with
/// the entropy of `curve` itself. The first value never exceeds the second.
///
/// `subset` holds breakpoint positions and must include the first and last breakpoint.
pub fn coarsen_entropy_check(curve: &Curve, subset: &[usize]) -> Result<(f64, f64)> {
    let points = curve.points();
    let last = points.len() - 1;
    let mut keep: Vec<usize> = subset.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.first() != Some(&0) || keep.last() != Some(&last) {
        return Err(Error::Domain(
            "breakpoint subset must contain both curve endpoints".into(),
        ));
    }
    if let Some(&bad) = keep.iter().find(|&&i| i > last) {
        return Err(Error::Domain(format!("breakpoint {bad} out of range")));
    }
    let coarse: Vec<Point> = keep.iter().map(|&i| points[i]).collect();
    Ok((polyline_entropy(&coarse), curve_entropy(curve)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const E_HALF: f64 = 0.130_812_035_941_136_96;

    #[test]
    fn closed_form_values() {
        assert_eq!(pointwise_entropy(0.0).unwrap(), 0.0);
        assert!((pointwise_entropy(1.0).unwrap() - LN_2).abs() < 1e-15);
        assert!((pointwise_entropy(-1.0).unwrap() - LN_2).abs() < 1e-15);
        assert!((pointwise_entropy(0.5).unwrap() - E_HALF).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(pointwise_entropy(1.000_001).is_err());
        assert!(pointwise_entropy(f64::NAN).is_err());
    }

    #[test]
    fn series_and_closed_form_agree_at_cutoff() {
        let u = SERIES_CUTOFF;
        let closed = 0.5 * ((1.0 + u) * u.ln_1p() + (1.0 - u) * (-u).ln_1p());
        let below = entropy_rate(u - 1e-15);
        assert!((closed - below).abs() < 1e-15);
    }

    #[test]
    fn tent_values() {
        assert_eq!(tent_entropy(0.5, 0.0).unwrap(), 0.0);
        assert!((tent_entropy(0.5, 0.5).unwrap() - LN_2).abs() < 1e-15);
        assert!((tent_entropy(0.5, 0.25).unwrap() - E_HALF).abs() < 1e-15);
        // 0.25·log 2 + 0.75·e(1/3), evaluated at 50 digits
        assert!((tent_entropy(0.25, 0.25).unwrap() - 0.215_761_554_338_835_7).abs() < 1e-15);
        assert!(tent_entropy(0.25, 0.3).is_err());
        assert!(tent_entropy(0.0, 0.0).is_err());
    }

    #[test]
    fn coarsening_requires_endpoints() {
        let tent = Curve::tent(0.5, 0.25).unwrap();
        assert!(coarsen_entropy_check(&tent, &[0, 1]).is_err());
        let (coarse, full) = coarsen_entropy_check(&tent, &[0, 2]).unwrap();
        assert_eq!(coarse, 0.0);
        assert!((full - E_HALF).abs() < 1e-15);
        let (a, b) = coarsen_entropy_check(&tent, &[0, 1, 2]).unwrap();
        assert_eq!(a, b);
    }
}
