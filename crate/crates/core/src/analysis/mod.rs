//! Trend detection, decomposition and bottleneck localization over
//! metric frames.

mod group;
mod knee;
mod localize;
mod signals;
mod traffic;

pub use group::{cluster_nodes, NodeGrouping, MAX_GROUPS, SPLIT_GAP};
pub use knee::{detect_knee, detect_knee_with, KneeParams, Trend, TrendClassification, MIN_POINTS};
pub use localize::{
    incidence, localize_bottleneck, BottleneckReport, CandidateId, Exclusion, RankedCandidate, INCIDENCE_SHARE,
    PINNED_FRACTION,
};
pub use signals::{
    classify_all, correlate, correlate_pre_knee, instability_onset, observables, rejection_and_pool, role_groups,
    role_name, throughput_signal, Correlation, Observable, ObservableKind, RejectionPool, Signal, ONSET_MIN_STEPS,
};
pub use traffic::{
    block_traffic_estimate, follower_orderers, mean_outbound, outbound_ratio, subtract_block_traffic, AdjustedTraffic,
    IDLE_FLOOR_BPS,
};

use thiserror::Error;

use crate::metrics::MetricsError;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    #[error("empty series")]
    EmptySeries,
    #[error("series must be sorted by time")]
    UnsortedSeries,
    #[error("window must be at least 1")]
    InvalidWindow,
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("x values must be strictly increasing")]
    NonMonotoneX,
    #[error("non-finite value")]
    NonFinite,
    #[error("zero variance")]
    ZeroVariance,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no followers")]
    NoFollowers,
    #[error("denominator traffic below the heartbeat floor at rate {0}")]
    NearZeroDenominator(f64),
    #[error("estimate rates do not match the frame rates")]
    MisalignedRates,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("metrics absent: {0}")]
    MetricsAbsent(String),
    #[error("stage {0} has no observable")]
    UnmappedObservable(String),
    #[error("{0}")]
    Metrics(String),
}

impl From<MetricsError> for AnalysisError {
    fn from(e: MetricsError) -> Self {
        AnalysisError::Metrics(e.to_string())
    }
}

/// Centered rolling mean over a time-sorted series; the window shrinks at
/// the edges.
pub fn rolling_mean(series: &[(f64, f64)], window_s: usize) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if series.is_empty() {
        return Err(AnalysisError::EmptySeries);
    }
    if window_s == 0 {
        return Err(AnalysisError::InvalidWindow);
    }
    if series.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(AnalysisError::UnsortedSeries);
    }
    let n = series.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &(_, y) in series {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + y);
    }
    // even windows lean one point to the right
    let left = (window_s - 1) / 2;
    let right = window_s / 2;
    Ok(series
        .iter()
        .enumerate()
        .map(|(i, &(t, _))| {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(n - 1);
            (t, (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(ys: &[f64]) -> Vec<(f64, f64)> {
        ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect()
    }

    #[test]
    fn rolling_mean_examples() {
        let out = rolling_mean(&ts(&[1.0, 2.0, 3.0, 4.0, 5.0]), 3).unwrap();
        let ys: Vec<f64> = out.iter().map(|p| p.1).collect();
        assert_eq!(ys, vec![1.5, 2.0, 3.0, 4.0, 4.5]);
        let s = ts(&[3.0, 1.0, 4.0, 1.0, 5.0]);
        assert_eq!(rolling_mean(&s, 1).unwrap(), s);
        let c = ts(&[2.5; 7]);
        assert_eq!(rolling_mean(&c, 4).unwrap(), c);
    }

    #[test]
    fn rolling_mean_errors() {
        assert_eq!(rolling_mean(&[], 3), Err(AnalysisError::EmptySeries));
        assert_eq!(rolling_mean(&ts(&[1.0]), 0), Err(AnalysisError::InvalidWindow));
        assert_eq!(rolling_mean(&[(1.0, 0.0), (0.0, 0.0)], 2), Err(AnalysisError::UnsortedSeries));
    }
}
