//! Two-segment trend classification.

use super::AnalysisError;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Linear,
    Plateau,
    Flat,
    Unstable,
}

impl Trend {
    pub fn as_str(self) -> &'static str {
        match self {
            Trend::Linear => "linear",
            Trend::Plateau => "plateau",
            Trend::Flat => "flat",
            Trend::Unstable => "unstable",
        }
    }
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Thresholds for [`detect_knee`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KneeParams {
    /// Maximum slope_after / slope_before for a plateau.
    pub plateau_ratio: f64,
    /// Minimum relative SSE reduction of the two-segment fit.
    pub sse_improvement: f64,
    /// Maximum single-segment RMSE over the y range for a linear trend.
    pub linear_nrmse: f64,
    /// A fitted rise below this many residual standard deviations is flat.
    pub flat_sigmas: f64,
}

impl Default for KneeParams {
    fn default() -> Self {
        KneeParams { plateau_ratio: 0.2, sse_improvement: 0.25, linear_nrmse: 0.05, flat_sigmas: 2.0 }
    }
}

/// Result of fitting a curve against one and two linear segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendClassification {
    pub trend: Trend,
    /// Breakpoint, set for plateaus only.
    pub knee_x: Option<f64>,
    /// Best two-segment breakpoint regardless of the trend.
    pub breakpoint: f64,
    pub slope_before: f64,
    pub slope_after: f64,
    /// Slope of the single-segment fit.
    pub slope: f64,
    pub sse_one: f64,
    pub sse_two: f64,
    pub nrmse: f64,
    /// Filled by [`classify_all`](super::classify_all) when per-second data exist.
    #[serde(default)]
    pub instability_onset_x: Option<f64>,
}

impl TrendClassification {
    pub fn is_plateau(&self) -> bool {
        self.trend == Trend::Plateau
    }

    pub fn slope_ratio(&self) -> f64 {
        if self.slope_before == 0.0 {
            f64::INFINITY
        } else {
            self.slope_after / self.slope_before
        }
    }
}

pub const MIN_POINTS: usize = 6;

/// Least squares over columns `cols` (each of len n). Returns coefficients and SSE.
fn lstsq(cols: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let k = cols.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = cols[i].iter().zip(&cols[j]).map(|(p, q)| p * q).sum();
        }
        a[i][k] = cols[i].iter().zip(y).map(|(p, q)| p * q).sum();
    }
    // gaussian elimination with partial pivoting
    for c in 0..k {
        let piv = (c..k).max_by(|&p, &q| a[p][c].abs().total_cmp(&a[q][c].abs()))?;
        if a[piv][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, piv);
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                for j in c..=k {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
    }
    let coef: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    let sse = (0..y.len())
        .map(|r| {
            let fit: f64 = (0..k).map(|i| coef[i] * cols[i][r]).sum();
            (y[r] - fit).powi(2)
        })
        .sum();
    Some((coef, sse))
}

/// Fits and classifies a rate curve with the default thresholds.
pub fn detect_knee(points: &[(f64, f64)]) -> Result<TrendClassification, AnalysisError> {
    detect_knee_with(points, &KneeParams::default())
}

pub fn detect_knee_with(points: &[(f64, f64)], p: &KneeParams) -> Result<TrendClassification, AnalysisError> {
    let n = points.len();
    if n < MIN_POINTS {
        return Err(AnalysisError::TooFewPoints { need: MIN_POINTS, got: n });
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(AnalysisError::NonMonotoneX);
    }
    // center and scale x for conditioning; slopes are mapped back below
    let x0 = points[0].0;
    let span = points[n - 1].0 - x0;
    let xs: Vec<f64> = points.iter().map(|(x, _)| (x - x0) / span).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, y)| y).collect();
    let ones = vec![1.0; n];
    let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = y_max - y_min;

    let (c1, sse_one) = lstsq(&[ones.clone(), xs.clone()], &ys).expect("x has distinct values");
    let slope = c1[1] / span;

    let mut best: Option<(usize, f64, f64, f64)> = None;
    for k in 1..n - 2 {
        let hinge: Vec<f64> = xs.iter().map(|&x| (x - xs[k]).max(0.0)).collect();
        let Some((c, sse)) = lstsq(&[ones.clone(), xs.clone(), hinge], &ys) else { continue };
        if best.is_none_or(|b| sse < b.1 - 1e-12 * (1.0 + b.1)) {
            best = Some((k, sse, c[1], c[1] + c[2]));
        }
    }
    let (k, sse_two, b_before, b_after) = best.expect("at least one breakpoint");
    let slope_before = b_before / span;
    let slope_after = b_after / span;
    let nrmse = if range > 0.0 { (sse_one / n as f64).sqrt() / range } else { 0.0 };

    let improvement = if sse_one > 0.0 { 1.0 - sse_two / sse_one } else { 0.0 };
    let sigma = (sse_one / (n - 2) as f64).sqrt();
    let rise = c1[1].abs();
    let flat = range == 0.0 || (rise <= p.flat_sigmas * sigma && improvement < p.sse_improvement);
    let plateau = slope_before != 0.0
        && slope_after.abs() <= p.plateau_ratio * slope_before.abs()
        && improvement >= p.sse_improvement;

    let trend = if flat {
        Trend::Flat
    } else if plateau {
        Trend::Plateau
    } else if nrmse <= p.linear_nrmse {
        Trend::Linear
    } else {
        Trend::Unstable
    };
    Ok(TrendClassification {
        trend,
        knee_x: (trend == Trend::Plateau).then_some(points[k].0),
        breakpoint: points[k].0,
        slope_before,
        slope_after,
        slope,
        sse_one,
        sse_two,
        nrmse,
        instability_onset_x: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (4..=24).map(|i| i as f64 * 100.0).map(|x| (x, f(x))).collect()
    }

    #[test]
    fn exact_plateau() {
        let c = detect_knee(&grid(|x| x.min(1600.0) / 20.0)).unwrap();
        assert_eq!(c.trend, Trend::Plateau);
        assert_eq!(c.knee_x, Some(1600.0));
        assert!((c.slope_before - 0.05).abs() < 1e-9);
        assert!(c.slope_after.abs() < 1e-9);
    }

    #[test]
    fn exact_line() {
        let c = detect_knee(&grid(|x| 0.03 * x)).unwrap();
        assert_eq!(c.trend, Trend::Linear);
        assert_eq!(c.knee_x, None);
        assert!((c.slope - 0.03).abs() < 1e-12);
    }

    #[test]
    fn constant_and_zero_are_flat() {
        assert_eq!(detect_knee(&grid(|_| 0.0)).unwrap().trend, Trend::Flat);
        assert_eq!(detect_knee(&grid(|_| 7.5)).unwrap().trend, Trend::Flat);
    }

    #[test]
    fn hump_is_not_flat() {
        let c = detect_knee(&grid(|x| -(x - 1400.0).abs())).unwrap();
        assert_eq!(c.trend, Trend::Unstable);
    }

    #[test]
    fn rising_after_flat_is_not_plateau() {
        let c = detect_knee(&grid(|x| (x - 1800.0).max(0.0))).unwrap();
        assert_eq!(c.breakpoint, 1800.0);
        assert_ne!(c.trend, Trend::Plateau);
    }

    #[test]
    fn errors() {
        let short = grid(|x| x)[..5].to_vec();
        assert_eq!(detect_knee(&short), Err(AnalysisError::TooFewPoints { need: 6, got: 5 }));
        let mut bad = grid(|x| x);
        bad.swap(2, 3);
        assert_eq!(detect_knee(&bad), Err(AnalysisError::NonMonotoneX));
    }

    #[test]
    fn affine_scaling_keeps_result() {
        let pts = grid(|x| x.min(1300.0) * 0.7 + (x * 0.37).sin() * 5.0);
        let a = detect_knee(&pts).unwrap();
        let scaled: Vec<_> = pts.iter().map(|&(x, y)| (x, 3.5 * y - 42.0)).collect();
        let b = detect_knee(&scaled).unwrap();
        assert_eq!(a.trend, b.trend);
        assert_eq!(a.knee_x, b.knee_x);
    }
}
