use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

use super::{cluster_nodes, detect_knee, rolling_mean, AnalysisError, NodeGrouping, TrendClassification};
use crate::metrics::{step_traces, Aggregate, MetricName, MetricsFrame, Selector, StepTraces};
use crate::model::{Architecture, Role};
use crate::netsim::{Resource, StageGraph};

/// What an observable measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObservableKind {
    Resource(Resource),
    /// Confirmed transactions per second summed over the group.
    Throughput,
    /// Rejections per second over the requested rate.
    Rejected,
    /// Largest per-client executable pool.
    ClientExec,
    ClientNonexec,
    /// Cumulative pools held by the nodes.
    PoolExec,
    PoolNonexec,
}

impl ObservableKind {
    pub fn metric(self) -> MetricName {
        match self {
            ObservableKind::Resource(r) => match r {
                Resource::Cpu => MetricName::CpuMean,
                Resource::Core(k) => MetricName::CpuCore(k as u16),
                Resource::NetIn => MetricName::NetIn,
                Resource::NetOut => MetricName::NetOut,
                Resource::Mem => MetricName::Mem,
                Resource::Disk => MetricName::Disk,
            },
            ObservableKind::Throughput => MetricName::FResp,
            ObservableKind::Rejected => MetricName::Rejected,
            ObservableKind::ClientExec | ObservableKind::PoolExec => MetricName::PoolExec,
            ObservableKind::ClientNonexec | ObservableKind::PoolNonexec => MetricName::PoolNonexec,
        }
    }

    pub fn aggregate(self) -> Aggregate {
        match self {
            ObservableKind::Resource(_) => Aggregate::Mean,
            ObservableKind::Throughput | ObservableKind::Rejected => Aggregate::Sum,
            _ => Aggregate::Max,
        }
    }

    fn name(self) -> String {
        match self {
            ObservableKind::Resource(Resource::Cpu) => "cpu".into(),
            ObservableKind::Resource(Resource::Core(k)) => format!("core{k}"),
            ObservableKind::Resource(Resource::NetIn) => "net-in".into(),
            ObservableKind::Resource(Resource::NetOut) => "net-out".into(),
            ObservableKind::Resource(Resource::Mem) => "mem".into(),
            ObservableKind::Resource(Resource::Disk) => "disk".into(),
            ObservableKind::Throughput => "throughput".into(),
            ObservableKind::Rejected => "rejected-share".into(),
            ObservableKind::ClientExec => "exec-pool".into(),
            ObservableKind::ClientNonexec => "nonexec-pool".into(),
            ObservableKind::PoolExec => "exec-pool-total".into(),
            ObservableKind::PoolNonexec => "nonexec-pool-total".into(),
        }
    }
}

/// A node group paired with one measured quantity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observable {
    pub role: Role,
    pub group: String,
    pub nodes: Vec<String>,
    pub kind: ObservableKind,
}

impl Observable {
    pub fn id(&self) -> String {
        format!("{}/{}/{}", role_name(self.role), self.group, self.kind.name())
    }

    fn selector(&self) -> Selector {
        Selector::metric(self.kind.metric()).nodes(&self.nodes)
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

pub fn role_name(role: Role) -> &'static str {
    match role {
        Role::Client => "client",
        Role::Peer => "peer",
        Role::Orderer => "orderer",
        Role::QuorumNode => "node",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub observable: Observable,
    pub classification: TrendClassification,
    /// Rate against the step mean of the observable.
    pub curve: Vec<(f64, f64)>,
}

impl Signal {
    pub fn id(&self) -> String {
        self.observable.id()
    }
}

/// Per-step traces of an observable plus its rate curve.
fn traces(frame: &MetricsFrame, obs: &Observable) -> Result<StepTraces, AnalysisError> {
    Ok(step_traces(frame, &obs.selector(), obs.kind.aggregate())?)
}

fn step_means(tr: &[(f64, Vec<(f64, f64)>)]) -> Vec<(f64, f64)> {
    tr.iter().map(|(x, v)| (*x, v.iter().map(|p| p.1).sum::<f64>() / v.len().max(1) as f64)).collect()
}

/// Groups the nodes of every role by mean outbound traffic.
pub fn role_groups(frame: &MetricsFrame) -> Result<Vec<(Role, NodeGrouping)>, AnalysisError> {
    let roles: BTreeSet<Role> = frame.nodes().into_iter().map(|n| n.1).collect();
    roles
        .into_iter()
        .map(|role| Ok((role, cluster_nodes(&super::mean_outbound(frame, role)?))))
        .collect()
}

/// Every observable the frame supports, given the dedicated cores of the
/// graph's stages.
pub fn observables(frame: &MetricsFrame, graph: &StageGraph) -> Result<Vec<Observable>, AnalysisError> {
    let cores: BTreeSet<(String, usize)> = graph
        .contributions()
        .into_iter()
        .filter_map(|c| match c.resource {
            Resource::Core(k) => Some((graph.nodes[c.node].node_id.clone(), k)),
            _ => None,
        })
        .collect();
    let mut out = Vec::new();
    for (role, grouping) in role_groups(frame)? {
        for (nodes, label) in grouping.groups.iter().zip(&grouping.labels) {
            let mut push = |kind| out.push(Observable { role, group: label.clone(), nodes: nodes.clone(), kind });
            for r in [Resource::Cpu, Resource::NetIn, Resource::NetOut, Resource::Mem, Resource::Disk] {
                push(ObservableKind::Resource(r));
            }
            let ks: BTreeSet<usize> = cores.iter().filter(|(n, _)| nodes.contains(n)).map(|c| c.1).collect();
            for k in ks {
                push(ObservableKind::Resource(Resource::Core(k)));
            }
        }
        let all = frame.nodes_with_role(role);
        let mut push = |kind| out.push(Observable { role, group: "all".into(), nodes: all.clone(), kind });
        match role {
            Role::Client => {
                push(ObservableKind::Throughput);
                if frame.has_metric(MetricName::Rejected) {
                    push(ObservableKind::Rejected);
                    push(ObservableKind::ClientExec);
                    push(ObservableKind::ClientNonexec);
                }
            }
            Role::QuorumNode if frame.has_metric(MetricName::PoolExec) => {
                push(ObservableKind::PoolExec);
                push(ObservableKind::PoolNonexec);
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Classifies the rate curve of every observable.
pub fn classify_all(frame: &MetricsFrame, graph: &StageGraph) -> Result<Vec<Signal>, AnalysisError> {
    let obs = observables(frame, graph)?;
    obs.into_iter()
        .map(|o| {
            let tr = traces(frame, &o)?;
            let mut curve = step_means(&tr);
            if o.kind == ObservableKind::Rejected {
                for p in curve.iter_mut().filter(|p| p.0 > 0.0) {
                    p.1 /= p.0;
                }
            }
            let mut classification = detect_knee(&curve)?;
            classification.instability_onset_x = onset_of(&tr);
            Ok(Signal { observable: o, classification, curve })
        })
        .collect()
}

/// The client throughput signal.
pub fn throughput_signal(signals: &[Signal]) -> Option<&Signal> {
    signals.iter().find(|s| s.observable.kind == ObservableKind::Throughput)
}

fn cov(v: &[(f64, f64)]) -> f64 {
    let n = v.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = v.iter().map(|p| p.1).sum::<f64>() / n;
    if mean.abs() <= f64::EPSILON {
        return 0.0;
    }
    let var = v.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

/// Minimum number of steps for [`instability_onset`].
pub const ONSET_MIN_STEPS: usize = 4;

fn onset_of(tr: &[(f64, Vec<(f64, f64)>)]) -> Option<f64> {
    if tr.len() < ONSET_MIN_STEPS {
        return None;
    }
    let covs: Vec<f64> = tr.iter().map(|s| cov(&s.1)).collect();
    let mut base = covs[..3].to_vec();
    base.sort_by(f64::total_cmp);
    let limit = 2.0 * base[1];
    tr.iter().zip(&covs).find(|(_, &c)| c > limit && c > 1e-12).map(|(s, _)| s.0)
}

/// First rate whose within-step coefficient of variation exceeds twice the
/// median of the three lowest steps.
pub fn instability_onset(frame: &MetricsFrame, obs: &Observable) -> Result<Option<f64>, AnalysisError> {
    let tr = traces(frame, obs)?;
    if tr.len() < ONSET_MIN_STEPS {
        return Err(AnalysisError::TooFewPoints { need: ONSET_MIN_STEPS, got: tr.len() });
    }
    Ok(onset_of(&tr))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson_r: f64,
    /// Least-squares slope of the resource on throughput.
    pub slope: f64,
    pub n: usize,
}

/// Pearson correlation and regression slope of `resource` on `throughput`.
pub fn correlate(throughput: &[f64], resource: &[f64]) -> Result<Correlation, AnalysisError> {
    if throughput.len() != resource.len() {
        return Err(AnalysisError::LengthMismatch(throughput.len(), resource.len()));
    }
    let n = throughput.len();
    if n < 2 {
        return Err(AnalysisError::TooFewPoints { need: 2, got: n });
    }
    if throughput.iter().chain(resource).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let mx = throughput.iter().sum::<f64>() / n as f64;
    let my = resource.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in throughput.iter().zip(resource) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok(Correlation { pearson_r: sxy / (sxx * syy).sqrt(), slope: sxy / sxx, n })
}

/// Correlates per-second throughput with a resource over the steps below
/// `knee`, after a rolling mean of `window_s` within each step.
pub fn correlate_pre_knee(
    frame: &MetricsFrame,
    throughput: &Observable,
    resource: &Observable,
    knee: f64,
    window_s: usize,
) -> Result<Correlation, AnalysisError> {
    let tx = traces(frame, throughput)?;
    let ty = traces(frame, resource)?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for ((rate, a), (rate_b, b)) in tx.iter().zip(&ty) {
        if rate != rate_b {
            return Err(AnalysisError::MisalignedRates);
        }
        if *rate >= knee {
            continue;
        }
        if a.len() != b.len() {
            return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
        }
        xs.extend(rolling_mean(a, window_s)?.into_iter().map(|p| p.1));
        ys.extend(rolling_mean(b, window_s)?.into_iter().map(|p| p.1));
    }
    correlate(&xs, &ys)
}

/// Rejections and pool occupancy per rate step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionPool {
    /// Rejected transactions over the window.
    pub rejected: Vec<(f64, f64)>,
    /// Rejected share of the transactions requested in the window.
    pub rejected_share: Vec<(f64, f64)>,
    /// Largest executable pool of any single client.
    pub client_exec_max: Vec<(f64, f64)>,
    pub client_nonexec_max: Vec<(f64, f64)>,
    /// Largest cumulative executable pool.
    pub pool_exec_max: Vec<(f64, f64)>,
    pub pool_nonexec_max: Vec<(f64, f64)>,
}

fn step_max(frame: &MetricsFrame, sel: Selector) -> Result<Vec<(f64, f64)>, AnalysisError> {
    Ok(step_traces(frame, &sel, Aggregate::Max)?
        .into_iter()
        .map(|(x, v)| (x, v.iter().map(|p| p.1).fold(0.0, f64::max)))
        .collect())
}

pub fn rejection_and_pool(frame: &MetricsFrame) -> Result<RejectionPool, AnalysisError> {
    if frame.architecture() != Some(Architecture::Quorum) || !frame.has_metric(MetricName::Rejected) {
        return Err(AnalysisError::MetricsAbsent("rejections and pool occupancy".into()));
    }
    let rej = step_traces(frame, &Selector::metric(MetricName::Rejected).role(Role::Client), Aggregate::Sum)?;
    let rejected: Vec<(f64, f64)> = rej.iter().map(|(x, v)| (*x, v.iter().map(|p| p.1).sum())).collect();
    let rejected_share = rej
        .iter()
        .zip(&rejected)
        .map(|((x, v), r)| {
            let requested = x * v.len() as f64;
            (*x, if requested > 0.0 { r.1 / requested } else { 0.0 })
        })
        .collect();
    Ok(RejectionPool {
        rejected,
        rejected_share,
        client_exec_max: step_max(frame, Selector::metric(MetricName::PoolExec).role(Role::Client))?,
        client_nonexec_max: step_max(frame, Selector::metric(MetricName::PoolNonexec).role(Role::Client))?,
        pool_exec_max: step_max(frame, Selector::metric(MetricName::PoolExec).role(Role::QuorumNode))?,
        pool_nonexec_max: step_max(frame, Selector::metric(MetricName::PoolNonexec).role(Role::QuorumNode))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{fixture, Trend};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RATES: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

    #[test]
    fn correlate_exact_multiple() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let c = correlate(&x, &y).unwrap();
        assert!((c.pearson_r - 1.0).abs() < 1e-12);
        assert!((c.slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn correlate_independent_noise_is_weak() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..400).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..400).map(|_| rng.random_range(0.0..1.0)).collect();
        assert!(correlate(&x, &y).unwrap().pearson_r.abs() < 0.3);
    }

    #[test]
    fn correlate_errors() {
        assert_eq!(correlate(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(AnalysisError::ZeroVariance));
        assert_eq!(correlate(&[1.0, 2.0], &[1.0]), Err(AnalysisError::LengthMismatch(2, 1)));
    }

    fn cpu_obs(g: &StageGraph) -> Observable {
        let nodes = g.nodes.iter().filter(|n| n.role == Role::Peer).map(|n| n.node_id.clone()).collect();
        Observable { role: Role::Peer, group: "all".into(), nodes, kind: ObservableKind::Resource(Resource::Cpu) }
    }

    #[test]
    fn onset_absent_for_constant_values() {
        let g = fixture::graph(Architecture::Fabric);
        let f = fixture::frame(&g, &RATES, 6, |_, _, _, _| 0.3);
        assert_eq!(instability_onset(&f, &cpu_obs(&g)), Ok(None));
    }

    #[test]
    fn onset_found_where_variance_jumps() {
        let g = fixture::graph(Architecture::Fabric);
        // alternating +-a around 0.5; amplitude grows tenfold from 500 on
        let f = fixture::frame(&g, &RATES, 6, |_, _, r, t| {
            let a = if r >= 500.0 { 0.1 } else { 0.01 };
            0.5 + if t % 2 == 0 { a } else { -a }
        });
        assert_eq!(instability_onset(&f, &cpu_obs(&g)), Ok(Some(500.0)));
    }

    #[test]
    fn onset_needs_four_steps() {
        let g = fixture::graph(Architecture::Fabric);
        let f = fixture::frame(&g, &RATES[..3], 4, |_, _, _, _| 1.0);
        assert_eq!(instability_onset(&f, &cpu_obs(&g)), Err(AnalysisError::TooFewPoints { need: 4, got: 3 }));
    }

    #[test]
    fn zero_load_is_flat_everywhere() {
        let g = fixture::graph(Architecture::Fabric);
        let f = fixture::frame(&g, &RATES, 3, |_, _, _, _| 0.0);
        let sigs = classify_all(&f, &g).unwrap();
        assert!(!sigs.is_empty());
        assert!(sigs.iter().all(|s| s.classification.trend == Trend::Flat), "{sigs:?}");
    }

    #[test]
    fn observables_cover_groups_and_dedicated_cores() {
        let g = fixture::graph(Architecture::Fabric);
        let f = fixture::frame(&g, &RATES, 2, |n, m, r, _| {
            let anchor = matches!(n, "peer0" | "peer2" | "peer4" | "peer6");
            if m == MetricName::NetOut && anchor { 3.0 * r } else { r }
        });
        let ids: Vec<String> = observables(&f, &g).unwrap().iter().map(Observable::id).collect();
        for want in ["peer/high/net-out", "peer/low/cpu", "peer/high/core15", "client/all/throughput"] {
            assert!(ids.iter().any(|i| i == want), "{want} missing from {ids:?}");
        }
        assert!(!ids.iter().any(|i| i.contains("rejected")));
    }

    #[test]
    fn fabric_frame_has_no_rejections() {
        let g = fixture::graph(Architecture::Fabric);
        let f = fixture::frame(&g, &RATES, 2, |_, _, r, _| r);
        assert!(matches!(rejection_and_pool(&f), Err(AnalysisError::MetricsAbsent(_))));
    }
}
