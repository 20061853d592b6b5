//! Architecture models: pipeline stages with cost coefficients, the message
//! edges between them, and the injectable constraints.

use crate::model::{Architecture, NodeDescriptor, Role};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    ClientSubmit,
    PeerEndorse,
    ClientCollect,
    OrdererOrder,
    BlockBroadcast,
    PeerVscc,
    PeerMvcc,
    PeerCommit,
    ConfirmToClient,
    PreValidate,
    TxGossip,
    LeaderOrder,
    Append,
    AckToLeader,
}

impl StageKind {
    pub const ALL: [StageKind; 14] = [
        StageKind::ClientSubmit,
        StageKind::PeerEndorse,
        StageKind::ClientCollect,
        StageKind::OrdererOrder,
        StageKind::BlockBroadcast,
        StageKind::PeerVscc,
        StageKind::PeerMvcc,
        StageKind::PeerCommit,
        StageKind::ConfirmToClient,
        StageKind::PreValidate,
        StageKind::TxGossip,
        StageKind::LeaderOrder,
        StageKind::Append,
        StageKind::AckToLeader,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::ClientSubmit => "client-submit",
            StageKind::PeerEndorse => "peer-endorse",
            StageKind::ClientCollect => "client-collect",
            StageKind::OrdererOrder => "orderer-order",
            StageKind::BlockBroadcast => "block-broadcast",
            StageKind::PeerVscc => "peer-vscc",
            StageKind::PeerMvcc => "peer-mvcc",
            StageKind::PeerCommit => "peer-commit",
            StageKind::ConfirmToClient => "confirm-to-client",
            StageKind::PreValidate => "pre-validate",
            StageKind::TxGossip => "tx-gossip",
            StageKind::LeaderOrder => "leader-order",
            StageKind::Append => "append",
            StageKind::AckToLeader => "ack-to-leader",
        }
    }

    /// Stages of one architecture in transaction life-cycle order.
    pub fn pipeline(arch: Architecture) -> &'static [StageKind] {
        match arch {
            Architecture::Fabric => &[
                StageKind::ClientSubmit,
                StageKind::PeerEndorse,
                StageKind::ClientCollect,
                StageKind::OrdererOrder,
                StageKind::BlockBroadcast,
                StageKind::PeerVscc,
                StageKind::PeerMvcc,
                StageKind::PeerCommit,
                StageKind::ConfirmToClient,
            ],
            Architecture::Quorum => &[
                StageKind::ClientSubmit,
                StageKind::PreValidate,
                StageKind::TxGossip,
                StageKind::LeaderOrder,
                StageKind::BlockBroadcast,
                StageKind::Append,
                StageKind::AckToLeader,
                StageKind::ConfirmToClient,
            ],
        }
    }

    pub fn is_validation(self) -> bool {
        matches!(self, StageKind::PeerVscc | StageKind::PeerMvcc)
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StageKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ExecutionMode {
    /// Runs on any core not reserved for a sequential stage, with at most
    /// `workers` jobs in flight per host.
    ParallelAcrossCores { workers: usize },
    /// Runs on the host's last core, one job at a time.
    SequentialSingleCore,
    PinnedCore { core: usize },
}

/// Block cutting policy of the batching stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Batching {
    pub block_size: usize,
    pub block_timeout_s: f64,
}

/// CPU and disk cost coefficients of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageCost {
    pub cpu_ms_per_tx: f64,
    pub cpu_ms_per_block: f64,
    pub disk_bytes_per_tx: f64,
    /// Parallelism limit; only meaningful for parallel stages.
    pub workers: Option<usize>,
}

impl Default for StageCost {
    fn default() -> Self {
        StageCost { cpu_ms_per_tx: 0.0, cpu_ms_per_block: 0.0, disk_bytes_per_tx: 0.0, workers: None }
    }
}

impl StageCost {
    fn cpu(cpu_ms_per_tx: f64) -> Self {
        StageCost { cpu_ms_per_tx, ..StageCost::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MessageSizes {
    pub proposal: f64,
    pub endorsement: f64,
    pub tx_in_block: f64,
    pub confirmation: f64,
    pub block_header: f64,
    /// Client to node submission in order-execute networks.
    pub submission: f64,
    /// Per recipient, transaction plus propagation overhead.
    pub gossip: f64,
    pub ack_per_block: f64,
    pub ack_per_tx: f64,
    pub rejection: f64,
}

impl Default for MessageSizes {
    fn default() -> Self {
        MessageSizes {
            proposal: 400.0,
            endorsement: 300.0,
            tx_in_block: 300.0,
            confirmation: 100.0,
            block_header: 2000.0,
            submission: 200.0,
            gossip: 400.0,
            ack_per_block: 100.0,
            ack_per_tx: 32.0,
            rejection: 100.0,
        }
    }
}

/// Per-stage costs, message sizes and batching. The defaults are the
/// calibration constants documented in the README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub stages: BTreeMap<StageKind, StageCost>,
    pub messages: MessageSizes,
    pub batching: Batching,
    /// Bytes per second on every consensus link, each direction.
    pub heartbeat_bytes_per_s: f64,
    /// Pre-validation intake buffer per node; unbounded when absent.
    pub intake_limit: Option<usize>,
    /// Baseline resident memory per node, bytes.
    pub mem_baseline: f64,
}

impl CostModel {
    pub fn fabric_default() -> Self {
        let mut stages = BTreeMap::new();
        stages.insert(StageKind::ClientSubmit, StageCost::cpu(0.05));
        stages.insert(StageKind::PeerEndorse, StageCost::cpu(0.3));
        stages.insert(StageKind::ClientCollect, StageCost::cpu(0.05));
        stages.insert(
            StageKind::OrdererOrder,
            StageCost { cpu_ms_per_tx: 0.05, disk_bytes_per_tx: 300.0, ..StageCost::default() },
        );
        stages.insert(StageKind::BlockBroadcast, StageCost { disk_bytes_per_tx: 300.0, ..StageCost::default() });
        stages.insert(StageKind::PeerVscc, StageCost { cpu_ms_per_tx: 5.0, workers: Some(8), ..StageCost::default() });
        stages.insert(StageKind::PeerMvcc, StageCost::cpu(0.2));
        stages.insert(
            StageKind::PeerCommit,
            StageCost { cpu_ms_per_tx: 0.02, disk_bytes_per_tx: 300.0, ..StageCost::default() },
        );
        stages.insert(StageKind::ConfirmToClient, StageCost::default());
        CostModel {
            stages,
            messages: MessageSizes::default(),
            batching: Batching { block_size: 100, block_timeout_s: 0.25 },
            heartbeat_bytes_per_s: 1000.0,
            intake_limit: None,
            mem_baseline: 2.0 * 1024.0 * 1024.0 * 1024.0,
        }
    }

    pub fn quorum_default() -> Self {
        let mut stages = BTreeMap::new();
        stages.insert(StageKind::ClientSubmit, StageCost::cpu(0.05));
        stages.insert(
            StageKind::PreValidate,
            StageCost { cpu_ms_per_tx: 3.25, workers: Some(2), ..StageCost::default() },
        );
        stages.insert(StageKind::TxGossip, StageCost::default());
        stages.insert(
            StageKind::LeaderOrder,
            StageCost { cpu_ms_per_tx: 0.2, cpu_ms_per_block: 29.5, disk_bytes_per_tx: 300.0, workers: None },
        );
        stages.insert(StageKind::BlockBroadcast, StageCost::default());
        stages.insert(
            StageKind::Append,
            StageCost { cpu_ms_per_tx: 0.1, cpu_ms_per_block: 1.0, disk_bytes_per_tx: 300.0, workers: None },
        );
        stages.insert(StageKind::AckToLeader, StageCost::default());
        stages.insert(StageKind::ConfirmToClient, StageCost::default());
        CostModel {
            stages,
            // blocks carry receipts and state roots besides the transactions
            messages: MessageSizes { submission: 150.0, block_header: 40_000.0, ack_per_tx: 8.0, ..MessageSizes::default() },
            batching: Batching { block_size: 10_000, block_timeout_s: 0.046 },
            heartbeat_bytes_per_s: 1000.0,
            intake_limit: Some(16),
            mem_baseline: 2.0 * 1024.0 * 1024.0 * 1024.0,
        }
    }

    pub fn default_for(arch: Architecture) -> Self {
        match arch {
            Architecture::Fabric => CostModel::fabric_default(),
            Architecture::Quorum => CostModel::quorum_default(),
        }
    }

    /// A model in which no stage costs anything; useful for cap-only SUTs.
    pub fn zero_cost(arch: Architecture) -> Self {
        let mut model = CostModel::default_for(arch);
        for cost in model.stages.values_mut() {
            cost.cpu_ms_per_tx = 0.0;
            cost.cpu_ms_per_block = 0.0;
            cost.disk_bytes_per_tx = 0.0;
        }
        model
    }

    pub fn stage(&self, kind: StageKind) -> StageCost {
        self.stages.get(&kind).copied().unwrap_or_default()
    }

    pub fn is_non_negative(&self) -> bool {
        let m = &self.messages;
        let sizes = [
            m.proposal,
            m.endorsement,
            m.tx_in_block,
            m.confirmation,
            m.block_header,
            m.submission,
            m.gossip,
            m.ack_per_block,
            m.ack_per_tx,
            m.rejection,
        ];
        self.stages
            .values()
            .all(|c| c.cpu_ms_per_tx >= 0.0 && c.cpu_ms_per_block >= 0.0 && c.disk_bytes_per_tx >= 0.0)
            && sizes.iter().all(|&s| s >= 0.0)
            && self.heartbeat_bytes_per_s >= 0.0
            && self.batching.block_size > 0
            && self.batching.block_timeout_s > 0.0
    }
}

/// Optional overrides read from a configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostOverrides {
    #[serde(default)]
    pub stages: BTreeMap<StageKind, StageCostOverride>,
    pub messages: Option<MessageSizes>,
    pub batching: Option<Batching>,
    pub heartbeat_bytes_per_s: Option<f64>,
    pub intake_limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageCostOverride {
    pub cpu_ms_per_tx: Option<f64>,
    pub cpu_ms_per_block: Option<f64>,
    pub disk_bytes_per_tx: Option<f64>,
    pub workers: Option<usize>,
}

impl CostOverrides {
    pub fn apply(&self, mut model: CostModel) -> CostModel {
        for (kind, o) in &self.stages {
            let entry = model.stages.entry(*kind).or_default();
            if let Some(v) = o.cpu_ms_per_tx {
                entry.cpu_ms_per_tx = v;
            }
            if let Some(v) = o.cpu_ms_per_block {
                entry.cpu_ms_per_block = v;
            }
            if let Some(v) = o.disk_bytes_per_tx {
                entry.disk_bytes_per_tx = v;
            }
            if o.workers.is_some() {
                entry.workers = o.workers;
            }
        }
        if let Some(m) = self.messages {
            model.messages = m;
        }
        if let Some(b) = self.batching {
            model.batching = b;
        }
        if let Some(h) = self.heartbeat_bytes_per_s {
            model.heartbeat_bytes_per_s = h;
        }
        if self.intake_limit.is_some() {
            model.intake_limit = self.intake_limit;
        }
        model
    }
}

/// An injectable limit. Caps may be infinite (`inf` in TOML), which removes
/// the limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Constraint {
    ClientExecutableCap { limit: f64 },
    ClientNonexecCap { limit: f64 },
    PoolExecCap { limit: f64 },
    PoolNonexecCap { limit: f64 },
    StageRateCap { stage: StageKind, rate: f64 },
}

/// Identifies a constraint independent of its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapKind {
    ClientExecutableCap,
    ClientNonexecCap,
    PoolExecCap,
    PoolNonexecCap,
}

impl CapKind {
    pub const ALL: [CapKind; 4] =
        [CapKind::ClientExecutableCap, CapKind::ClientNonexecCap, CapKind::PoolExecCap, CapKind::PoolNonexecCap];

    pub fn as_str(self) -> &'static str {
        match self {
            CapKind::ClientExecutableCap => "client-executable-cap",
            CapKind::ClientNonexecCap => "client-nonexec-cap",
            CapKind::PoolExecCap => "pool-exec-cap",
            CapKind::PoolNonexecCap => "pool-nonexec-cap",
        }
    }
}

impl fmt::Display for CapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Constraint {
    /// Default transaction-pool limits of the order-execute client.
    pub fn quorum_defaults() -> Vec<Constraint> {
        vec![
            Constraint::ClientExecutableCap { limit: 16.0 },
            Constraint::ClientNonexecCap { limit: 500.0 },
            Constraint::PoolExecCap { limit: 4096.0 },
            Constraint::PoolNonexecCap { limit: 10_000.0 },
        ]
    }

    pub fn cap_kind(&self) -> Option<(CapKind, f64)> {
        match *self {
            Constraint::ClientExecutableCap { limit } => Some((CapKind::ClientExecutableCap, limit)),
            Constraint::ClientNonexecCap { limit } => Some((CapKind::ClientNonexecCap, limit)),
            Constraint::PoolExecCap { limit } => Some((CapKind::PoolExecCap, limit)),
            Constraint::PoolNonexecCap { limit } => Some((CapKind::PoolNonexecCap, limit)),
            Constraint::StageRateCap { .. } => None,
        }
    }

    pub fn is_positive(&self) -> bool {
        match *self {
            Constraint::StageRateCap { rate, .. } => rate > 0.0,
            _ => self.cap_kind().is_some_and(|(_, l)| l > 0.0),
        }
    }

    /// Whether the constraint makes sense for the architecture.
    pub fn valid_for(&self, arch: Architecture) -> bool {
        match self {
            Constraint::StageRateCap { stage, .. } => StageKind::pipeline(arch).contains(stage),
            _ => arch == Architecture::Quorum,
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::StageRateCap { stage, rate } => write!(f, "stage-rate-cap({stage}, {rate}/s)"),
            other => {
                let (kind, limit) = other.cap_kind().expect("cap constraint");
                write!(f, "{kind}({limit})")
            }
        }
    }
}

/// Where a stage runs and how much of the transaction flow each host sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageHost {
    /// Index into the network's node list.
    pub node: usize,
    /// Fraction of all transactions this host processes in this stage.
    pub share: f64,
    /// Fraction of all transactions whose stage disk cost lands here.
    pub disk_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub kind: StageKind,
    pub host_role: Role,
    pub mode: ExecutionMode,
    pub cost: StageCost,
    pub batching: Option<Batching>,
    pub hosts: Vec<StageHost>,
}

impl Stage {
    pub fn host_share(&self, node: usize) -> Option<f64> {
        self.hosts.iter().find(|h| h.node == node).map(|h| h.share)
    }

    /// Dedicated core index, when the stage does not use the shared pool.
    pub fn dedicated_core(&self, n_cores: usize) -> Option<usize> {
        match self.mode {
            ExecutionMode::ParallelAcrossCores { .. } => None,
            ExecutionMode::SequentialSingleCore => Some(n_cores - 1),
            ExecutionMode::PinnedCore { core } => Some(core),
        }
    }
}

/// Messages sent by the sending stage's hosts. `routes` lists, per sender,
/// the receivers of each message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageEdge {
    pub from_stage: StageKind,
    pub to_stage: Option<StageKind>,
    pub routes: Vec<Route>,
    pub bytes_per_tx: f64,
    pub bytes_per_block_header: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub from: usize,
    pub to: Vec<usize>,
    /// Fraction of all transactions carried on this route (per receiver).
    pub share: f64,
}

impl MessageEdge {
    pub fn fan_out(&self, sender: usize) -> usize {
        self.routes.iter().filter(|r| r.from == sender).map(|r| r.to.len()).sum()
    }
}

/// An architecture model: the stages, in life-cycle order, and their
/// message edges over a concrete node set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGraph {
    pub architecture: Architecture,
    pub nodes: Vec<NodeDescriptor>,
    pub n_cores: usize,
    pub stages: Vec<Stage>,
    pub edges: Vec<MessageEdge>,
    /// Expected transactions per block, used to amortize header bytes.
    pub nominal_block_size: f64,
}

impl StageGraph {
    pub fn stage(&self, kind: StageKind) -> Option<&Stage> {
        self.stages.iter().find(|s| s.kind == kind)
    }

    pub fn stage_order(&self, kind: StageKind) -> Option<usize> {
        self.stages.iter().position(|s| s.kind == kind)
    }

    pub fn edges_from(&self, kind: StageKind) -> impl Iterator<Item = &MessageEdge> {
        self.edges.iter().filter(move |e| e.from_stage == kind)
    }

    pub fn node_index(&self, node_id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.node_id == node_id)
    }

    /// Every stage is reachable from client submission and the stage-level
    /// edge relation follows life-cycle order (hence acyclic).
    pub fn is_well_formed(&self) -> bool {
        let Some(first) = self.stages.first() else { return false };
        if first.kind != StageKind::ClientSubmit {
            return false;
        }
        let mut reached = vec![false; self.stages.len()];
        reached[0] = true;
        for (i, stage) in self.stages.iter().enumerate() {
            if !reached[i] {
                return false;
            }
            for e in self.edges_from(stage.kind) {
                if let Some(to) = e.to_stage {
                    match self.stage_order(to) {
                        Some(j) if j > i => reached[j] = true,
                        Some(j) if j == i => {}
                        _ => return false,
                    }
                }
            }
            // Stages without an explicit message edge hand over in place.
            if i + 1 < self.stages.len() && !self.edges_from(stage.kind).any(|e| e.to_stage.is_some()) {
                reached[i + 1] = true;
            }
        }
        reached.iter().all(|&r| r)
    }

    /// Expected per-transaction load every stage puts on every node.
    pub fn contributions(&self) -> Vec<Contribution> {
        let mut out = Vec::new();
        let header_share = |e: &MessageEdge| e.bytes_per_block_header / self.nominal_block_size.max(1.0);
        for stage in &self.stages {
            for host in &stage.hosts {
                let cpu = host.share * stage.cost.cpu_ms_per_tx
                    + host.share * stage.cost.cpu_ms_per_block / self.nominal_block_size.max(1.0);
                if cpu > 0.0 {
                    out.push(Contribution {
                        stage: stage.kind,
                        node: host.node,
                        resource: Resource::Cpu,
                        per_tx: cpu,
                    });
                    if let Some(core) = stage.dedicated_core(self.n_cores) {
                        out.push(Contribution {
                            stage: stage.kind,
                            node: host.node,
                            resource: Resource::Core(core),
                            per_tx: cpu,
                        });
                    }
                }
                let disk = host.disk_share * stage.cost.disk_bytes_per_tx;
                if disk > 0.0 {
                    out.push(Contribution { stage: stage.kind, node: host.node, resource: Resource::Disk, per_tx: disk });
                }
            }
            for edge in self.edges_from(stage.kind) {
                let bytes = edge.bytes_per_tx + header_share(edge);
                for route in &edge.routes {
                    let per_msg = route.share * bytes;
                    if per_msg <= 0.0 {
                        continue;
                    }
                    out.push(Contribution {
                        stage: stage.kind,
                        node: route.from,
                        resource: Resource::NetOut,
                        per_tx: per_msg * route.to.len() as f64,
                    });
                    for &to in &route.to {
                        out.push(Contribution { stage: stage.kind, node: to, resource: Resource::NetIn, per_tx: per_msg });
                    }
                }
            }
        }
        out
    }
}

/// Resource dimension of an observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Resource {
    Cpu,
    Core(usize),
    NetIn,
    NetOut,
    Mem,
    Disk,
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resource::Cpu => f.write_str("cpu"),
            Resource::Core(k) => write!(f, "cpu-core{k}"),
            Resource::NetIn => f.write_str("net-in"),
            Resource::NetOut => f.write_str("net-out"),
            Resource::Mem => f.write_str("mem"),
            Resource::Disk => f.write_str("disk"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub stage: StageKind,
    pub node: usize,
    pub resource: Resource,
    /// Load per network-wide transaction: cpu-ms or bytes.
    pub per_tx: f64,
}
