use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use super::{AnalysisError, ObservableKind, Signal, Trend, TrendClassification};
use crate::netsim::{CapKind, Constraint, StageGraph, StageKind};

/// A stage's share of an observable's per-transaction load needed for the
/// stage to count as contributing to it.
pub const INCIDENCE_SHARE: f64 = 0.25;
/// Fraction of a pool limit the occupancy must reach at the top rates.
pub const PINNED_FRACTION: f64 = 0.9;
const TOP_POINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CandidateId {
    Stage(StageKind),
    Cap(CapKind),
}

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidateId::Stage(s) => f.write_str(s.as_str()),
            CandidateId::Cap(c) => f.write_str(c.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub id: CandidateId,
    /// Earliest plateau knee among the supporting observables.
    pub knee_x: Option<f64>,
    pub supporting: Vec<String>,
    pub plateaus: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: CandidateId,
    pub reason: String,
    /// Incident observables with their trends.
    pub observables: Vec<(String, Trend)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckReport {
    pub candidates: Vec<RankedCandidate>,
    pub excluded: Vec<Exclusion>,
    pub throughput: TrendClassification,
    pub summary: String,
}

impl BottleneckReport {
    pub fn top(&self) -> Option<CandidateId> {
        self.candidates.first().map(|c| c.id)
    }

    pub fn rank_of(&self, id: CandidateId) -> Option<usize> {
        self.candidates.iter().position(|c| c.id == id)
    }
}

/// Observables each stage contributes to, as indices into `signals`.
pub fn incidence(graph: &StageGraph, signals: &[Signal]) -> Result<BTreeMap<StageKind, Vec<usize>>, AnalysisError> {
    let mut by_node: BTreeMap<(&str, ObservableKind), usize> = BTreeMap::new();
    for (i, s) in signals.iter().enumerate() {
        if let ObservableKind::Resource(_) = s.observable.kind {
            for n in &s.observable.nodes {
                by_node.insert((n.as_str(), s.observable.kind), i);
            }
        }
    }
    let mut load: BTreeMap<(StageKind, usize), f64> = BTreeMap::new();
    let mut total = vec![0.0; signals.len()];
    for c in graph.contributions() {
        let node = graph.nodes[c.node].node_id.as_str();
        if let Some(&i) = by_node.get(&(node, ObservableKind::Resource(c.resource))) {
            *load.entry((c.stage, i)).or_default() += c.per_tx;
            total[i] += c.per_tx;
        }
    }
    let throughput = signals.iter().position(|s| s.observable.kind == ObservableKind::Throughput);
    let mut out = BTreeMap::new();
    for stage in &graph.stages {
        let shares: Vec<(usize, f64)> = load
            .iter()
            .filter(|((k, _), _)| *k == stage.kind)
            .map(|(&(_, i), &l)| (i, l / total[i]))
            .collect();
        let mut inc: Vec<usize> = shares.iter().filter(|s| s.1 >= INCIDENCE_SHARE).map(|s| s.0).collect();
        if let Some(best) = shares.iter().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0))) {
            inc.push(best.0);
        }
        if stage.kind == StageKind::ConfirmToClient {
            inc.extend(throughput);
        }
        inc.sort_unstable();
        inc.dedup();
        if inc.is_empty() {
            return Err(AnalysisError::UnmappedObservable(stage.kind.to_string()));
        }
        out.insert(stage.kind, inc);
    }
    Ok(out)
}

fn evidence_kind(cap: CapKind) -> ObservableKind {
    match cap {
        CapKind::ClientExecutableCap => ObservableKind::ClientExec,
        CapKind::ClientNonexecCap => ObservableKind::ClientNonexec,
        CapKind::PoolExecCap => ObservableKind::PoolExec,
        CapKind::PoolNonexecCap => ObservableKind::PoolNonexec,
    }
}

fn top_mean(curve: &[(f64, f64)]) -> f64 {
    let tail = &curve[curve.len().saturating_sub(TOP_POINTS)..];
    tail.iter().map(|p| p.1).sum::<f64>() / tail.len().max(1) as f64
}

fn grid_step(signals: &[Signal]) -> f64 {
    signals
        .iter()
        .flat_map(|s| s.curve.windows(2).map(|w| w[1].0 - w[0].0))
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min)
}

struct Pending {
    id: CandidateId,
    order: f64,
    knee: Option<f64>,
    supporting: Vec<String>,
    plateaus: usize,
}

/// Excludes stages whose observables all stay linear or flat and ranks the
/// rest. `caps` supplies the pool constraints that act as extra stages.
pub fn localize_bottleneck(
    graph: &StageGraph,
    caps: &[Constraint],
    signals: &[Signal],
    throughput: &TrendClassification,
) -> Result<BottleneckReport, AnalysisError> {
    let inc = incidence(graph, signals)?;
    let mut pending = Vec::new();
    let mut excluded = Vec::new();
    for (pos, stage) in graph.stages.iter().enumerate() {
        let idx = &inc[&stage.kind];
        let trends: Vec<(String, Trend)> = idx.iter().map(|&i| (signals[i].id(), signals[i].classification.trend)).collect();
        let live: Vec<&Signal> = idx
            .iter()
            .map(|&i| &signals[i])
            .filter(|s| matches!(s.classification.trend, Trend::Plateau | Trend::Unstable))
            .collect();
        let id = CandidateId::Stage(stage.kind);
        if live.is_empty() {
            excluded.push(Exclusion { id, reason: "every incident observable is linear or flat".into(), observables: trends });
            continue;
        }
        let knee = live.iter().filter_map(|s| s.classification.knee_x).min_by(f64::total_cmp);
        pending.push(Pending {
            id,
            order: pos as f64,
            knee,
            supporting: live.iter().map(|s| s.id()).collect(),
            plateaus: live.iter().filter(|s| s.classification.is_plateau()).count(),
        });
    }

    let cap_order = graph.stage_order(StageKind::TxGossip).map(|p| p as f64 + 0.5).unwrap_or(0.5);
    let rejected = signals.iter().find(|s| s.observable.kind == ObservableKind::Rejected);
    for c in caps {
        let Some((kind, limit)) = c.cap_kind() else { continue };
        let id = CandidateId::Cap(kind);
        let Some(ev) = signals.iter().find(|s| s.observable.kind == evidence_kind(kind)) else {
            excluded.push(Exclusion { id, reason: "no pool occupancy data".into(), observables: Vec::new() });
            continue;
        };
        let trends = vec![(ev.id(), ev.classification.trend)];
        let top = top_mean(&ev.curve);
        if !limit.is_finite() || top < PINNED_FRACTION * limit {
            excluded.push(Exclusion {
                id,
                reason: format!("occupancy {top:.1} stays below {PINNED_FRACTION} x limit {limit}"),
                observables: trends,
            });
            continue;
        }
        let mut supporting = vec![ev.id()];
        let knee = match rejected {
            Some(r) if r.classification.trend != Trend::Flat => {
                supporting.push(r.id());
                r.classification.breakpoint
            }
            _ => ev.classification.breakpoint,
        };
        pending.push(Pending { id, order: cap_order, knee: Some(knee), supporting, plateaus: 1 });
    }

    let candidates = rank(pending, grid_step(signals));
    let summary = match candidates.first() {
        None => "no saturation observed".to_string(),
        Some(c) => match c.knee_x {
            Some(k) => format!("top candidate {} with knee at {k}", c.id),
            None => format!("top candidate {} (unstable, no knee)", c.id),
        },
    };
    Ok(BottleneckReport { candidates, excluded, throughput: *throughput, summary })
}

/// Knees within one grid step of the earliest remaining knee form a tier;
/// inside a tier upstream stages come first, then more plateaus.
fn rank(mut pending: Vec<Pending>, step: f64) -> Vec<RankedCandidate> {
    let tol = if step.is_finite() { step * 1.000_001 } else { 0.0 };
    let mut out = Vec::new();
    while !pending.is_empty() {
        let first = pending.iter().filter_map(|p| p.knee).min_by(f64::total_cmp);
        let (mut tier, rest): (Vec<Pending>, Vec<Pending>) = match first {
            Some(k0) => pending.into_iter().partition(|p| p.knee.is_some_and(|k| k <= k0 + tol)),
            None => (pending, Vec::new()),
        };
        tier.sort_by(|a, b| a.order.total_cmp(&b.order).then(b.plateaus.cmp(&a.plateaus)));
        out.extend(tier.into_iter().map(|p| RankedCandidate {
            id: p.id,
            knee_x: p.knee,
            supporting: p.supporting,
            plateaus: p.plateaus,
        }));
        pending = rest;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{classify_all, fixture, throughput_signal};
    use crate::metrics::MetricName;
    use crate::model::Architecture;

    const RATES: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

    fn report(arch: Architecture, caps: &[Constraint], v: impl Fn(&str, MetricName, f64, u32) -> f64) -> (usize, BottleneckReport) {
        let g = fixture::graph(arch);
        let f = fixture::frame(&g, &RATES, 2, v);
        let sigs = classify_all(&f, &g).unwrap();
        let tp = throughput_signal(&sigs).unwrap().classification;
        (g.stages.len(), localize_bottleneck(&g, caps, &sigs, &tp).unwrap())
    }

    #[test]
    fn all_linear_means_no_saturation() {
        let (n, rep) = report(Architecture::Fabric, &[], |_, _, r, _| r);
        assert!(rep.candidates.is_empty());
        assert_eq!(rep.summary, "no saturation observed");
        assert_eq!(rep.excluded.len(), n);
    }

    #[test]
    fn plateau_on_core_observable_names_its_stage() {
        let (n, rep) = report(Architecture::Fabric, &[], |node, m, r, _| {
            if node.starts_with("peer") && m == MetricName::CpuCore(15) { r.min(500.0) } else { r }
        });
        assert_eq!(rep.top(), Some(CandidateId::Stage(StageKind::PeerMvcc)));
        assert_eq!(rep.candidates[0].knee_x, Some(500.0));
        assert_eq!(rep.candidates.len() + rep.excluded.len(), n);
    }

    #[test]
    fn pinned_pool_makes_cap_a_candidate() {
        let caps = Constraint::quorum_defaults();
        let (n, rep) = report(Architecture::Quorum, &caps, |node, m, r, _| match m {
            MetricName::PoolExec if node.starts_with("client") => (r / 25.0).min(16.0),
            MetricName::PoolExec | MetricName::PoolNonexec => 1.0,
            MetricName::Rejected => (r - 500.0).max(0.0),
            _ => r,
        });
        assert_eq!(rep.top(), Some(CandidateId::Cap(CapKind::ClientExecutableCap)));
        assert_eq!(rep.candidates[0].knee_x, Some(500.0));
        assert_eq!(rep.candidates.len() + rep.excluded.len(), n + caps.len());
    }

    #[test]
    fn stage_without_observables_is_an_error() {
        let g = fixture::graph(Architecture::Fabric);
        let tp = crate::analysis::detect_knee(&RATES.map(|r| (r, r))).unwrap();
        assert_eq!(
            localize_bottleneck(&g, &[], &[], &tp),
            Err(AnalysisError::UnmappedObservable("client-submit".into()))
        );
    }

    fn p(order: f64, knee: Option<f64>, plateaus: usize) -> Pending {
        Pending { id: CandidateId::Stage(StageKind::ALL[order as usize]), order, knee, supporting: Vec::new(), plateaus }
    }

    #[test]
    fn knees_within_one_step_rank_upstream_first() {
        let ranked = rank(vec![p(3.0, Some(900.0), 5), p(1.0, Some(1000.0), 1), p(0.0, None, 9), p(2.0, Some(1200.0), 1)], 100.0);
        let order: Vec<CandidateId> = ranked.iter().map(|r| r.id).collect();
        assert_eq!(
            order,
            vec![
                CandidateId::Stage(StageKind::ALL[1]),
                CandidateId::Stage(StageKind::ALL[3]),
                CandidateId::Stage(StageKind::ALL[2]),
                CandidateId::Stage(StageKind::ALL[0]),
            ]
        );
    }
}
