use super::{cluster_nodes, AnalysisError};
use crate::metrics::{series, Aggregate, MetricName, MetricsFrame, Selector, XAxis};
use crate::model::{Architecture, Role};

/// Denominator traffic at or below this many bytes per second is treated as
/// idle.
pub const IDLE_FLOOR_BPS: f64 = 1500.0;

type Curve = Vec<(f64, f64)>;

fn out_curve(frame: &MetricsFrame, nodes: &[String]) -> Result<Curve, AnalysisError> {
    Ok(series(frame, &Selector::metric(MetricName::NetOut).nodes(nodes), Aggregate::Mean, XAxis::Rate)?)
}

fn mean_y(c: &Curve) -> f64 {
    c.iter().map(|p| p.1).sum::<f64>() / c.len().max(1) as f64
}

/// Mean outbound bytes/s per node over every step.
pub fn mean_outbound(frame: &MetricsFrame, role: Role) -> Result<Vec<(String, f64)>, AnalysisError> {
    frame
        .nodes_with_role(role)
        .into_iter()
        .map(|n| {
            let c = out_curve(frame, std::slice::from_ref(&n))?;
            Ok((n, mean_y(&c)))
        })
        .collect()
}

/// Orderers other than the busiest one.
pub fn follower_orderers(frame: &MetricsFrame) -> Result<Vec<String>, AnalysisError> {
    let mut out = mean_outbound(frame, Role::Orderer)?;
    let leader = out
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|x| x.0.clone());
    out.retain(|x| Some(&x.0) != leader.as_ref());
    if out.is_empty() {
        return Err(AnalysisError::NoFollowers);
    }
    Ok(out.into_iter().map(|x| x.0).collect())
}

/// Block bytes a peer forwards per second, approximated by the outbound
/// traffic of follower orderers.
pub fn block_traffic_estimate(frame: &MetricsFrame) -> Result<Curve, AnalysisError> {
    if frame.architecture() != Some(Architecture::Fabric) {
        return Err(AnalysisError::MetricsAbsent("orderer traffic".into()));
    }
    out_curve(frame, &follower_orderers(frame)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedTraffic {
    /// Gossip leaders with the block estimate removed.
    pub adjusted: Vec<(String, Curve)>,
    /// Remaining peers, unchanged.
    pub others: Vec<(String, Curve)>,
}

impl AdjustedTraffic {
    /// Per rate, (max - min) / mean over every curve.
    pub fn spread(&self) -> Curve {
        let all: Vec<&Curve> = self.adjusted.iter().chain(&self.others).map(|x| &x.1).collect();
        let Some(first) = all.first() else { return Vec::new() };
        (0..first.len())
            .map(|i| {
                let ys: Vec<f64> = all.iter().map(|c| c[i].1).collect();
                let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
                let mean = ys.iter().sum::<f64>() / ys.len() as f64;
                (first[i].0, if mean > 0.0 { (max - min) / mean } else { 0.0 })
            })
            .collect()
    }

    pub fn max_spread_below(&self, rate: f64) -> f64 {
        self.spread().iter().filter(|p| p.0 < rate).map(|p| p.1).fold(0.0, f64::max)
    }
}

/// Removes the block estimate from the outbound traffic of the peers in the
/// top outbound group.
pub fn subtract_block_traffic(frame: &MetricsFrame, estimate: &[(f64, f64)]) -> Result<AdjustedTraffic, AnalysisError> {
    let stats = mean_outbound(frame, Role::Peer)?;
    let grouping = cluster_nodes(&stats);
    let rates = frame.rates();
    if estimate.len() != rates.len() || estimate.iter().zip(&rates).any(|(e, r)| e.0 != *r) {
        return Err(AnalysisError::MisalignedRates);
    }
    let leaders: &[String] = if grouping.len() > 1 { &grouping.groups[0] } else { &[] };
    let mut adjusted = Vec::new();
    let mut others = Vec::new();
    for (node, _) in stats {
        let c = out_curve(frame, std::slice::from_ref(&node))?;
        if c.len() != rates.len() {
            return Err(AnalysisError::MisalignedRates);
        }
        if leaders.contains(&node) {
            let adj = c.iter().zip(estimate).map(|(p, e)| (p.0, p.1 - e.1)).collect();
            adjusted.push((node, adj));
        } else {
            others.push((node, c));
        }
    }
    Ok(AdjustedTraffic { adjusted, others })
}

/// Per-rate ratio of one node's outbound traffic to the mean of a node set.
pub fn outbound_ratio(frame: &MetricsFrame, numerator: &str, denominator: &[String]) -> Result<Curve, AnalysisError> {
    let known = frame.nodes();
    for n in std::iter::once(numerator).chain(denominator.iter().map(String::as_str)) {
        if !known.iter().any(|k| k.0 == n) {
            return Err(AnalysisError::UnknownNode(n.to_string()));
        }
    }
    let num = out_curve(frame, &[numerator.to_string()])?;
    let den = out_curve(frame, denominator)?;
    if num.len() != den.len() {
        return Err(AnalysisError::MisalignedRates);
    }
    num.iter()
        .zip(&den)
        .map(|(a, b)| {
            if b.1 <= IDLE_FLOOR_BPS {
                Err(AnalysisError::NearZeroDenominator(b.0))
            } else {
                Ok((a.0, a.1 / b.1))
            }
        })
        .collect()
}
