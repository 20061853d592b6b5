//! Shared domain types for the simulator, the benchmark controller and the
//! analysis engine.

mod config;

pub use config::{
    derive_node_set, validate_config, ConfigError, ExperimentConfig, SweepGrid, Topology,
    ValidatedConfig, Violation, CONFIG_SCHEMA_VERSION,
};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Which ledger pipeline a network follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    /// Execute-order-validate.
    #[serde(rename = "fabric", alias = "fabric-like")]
    Fabric,
    /// Order-execute.
    #[serde(rename = "quorum", alias = "quorum-like")]
    Quorum,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Fabric => "fabric",
            Architecture::Quorum => "quorum",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fabric" | "fabric-like" => Ok(Architecture::Fabric),
            "quorum" | "quorum-like" => Ok(Architecture::Quorum),
            other => Err(format!("unknown architecture `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "client")]
    Client,
    #[serde(rename = "peer")]
    Peer,
    #[serde(rename = "orderer")]
    Orderer,
    #[serde(rename = "quorum-node")]
    QuorumNode,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Client => "client",
            Role::Peer => "peer",
            Role::Orderer => "orderer",
            Role::QuorumNode => "quorum-node",
        }
    }

    /// Prefix used when naming nodes of this role (`peer3`, `node0`, ...).
    pub fn id_prefix(self) -> &'static str {
        match self {
            Role::Client => "client",
            Role::Peer => "peer",
            Role::Orderer => "orderer",
            Role::QuorumNode => "node",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "client" => Ok(Role::Client),
            "peer" => Ok(Role::Peer),
            "orderer" => Ok(Role::Orderer),
            "quorum-node" => Ok(Role::QuorumNode),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeFlags {
    pub raft_leader: bool,
    /// Anchor peer, i.e. the gossip leader of its organization.
    pub anchor_peer: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeDescriptor {
    pub node_id: String,
    pub role: Role,
    /// Position among the nodes of the same role.
    pub index: usize,
    pub org_id: u32,
    pub flags: NodeFlags,
}

/// Per-host resources. Defaults follow the measured cloud instances:
/// 16 cores, 64 GiB of memory and a 1 Gbps NIC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HostCapacity {
    pub n_cores: usize,
    /// cpu-milliseconds per second per core.
    pub core_capacity: f64,
    /// Bytes per second.
    pub nic_bandwidth: f64,
    /// Bytes.
    pub mem_total: f64,
    /// Bytes per second.
    pub disk_bandwidth: f64,
}

impl Default for HostCapacity {
    fn default() -> Self {
        HostCapacity {
            n_cores: 16,
            core_capacity: 1000.0,
            nic_bandwidth: 125_000_000.0,
            mem_total: 64.0 * 1024.0 * 1024.0 * 1024.0,
            disk_bandwidth: 250_000_000.0,
        }
    }
}

/// One benchmark step: a target request rate held for `duration_s`
/// seconds, of which the head and tail seconds are ramps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateStep {
    pub f_req: f64,
    pub duration_s: u32,
    pub ramp_head_s: u32,
    pub ramp_tail_s: u32,
}

impl Default for RateStep {
    fn default() -> Self {
        RateStep { f_req: 0.0, duration_s: 20, ramp_head_s: 3, ramp_tail_s: 3 }
    }
}

impl RateStep {
    pub fn at(self, f_req: f64) -> RateStep {
        RateStep { f_req, ..self }
    }

    /// Number of seconds left once the ramps are excluded.
    pub fn window_len(&self) -> u32 {
        self.duration_s.saturating_sub(self.ramp_head_s + self.ramp_tail_s)
    }

    pub fn is_valid(&self) -> bool {
        self.ramp_head_s + self.ramp_tail_s < self.duration_s && self.f_req >= 0.0 && self.f_req.is_finite()
    }

    /// Whether second `t` lies inside the measurement window.
    pub fn in_window(&self, t: u32) -> bool {
        t >= self.ramp_head_s && t < self.duration_s - self.ramp_tail_s
    }

    /// Offered-load multiplier at time `t`: linear ramps at both ends.
    pub fn ramp_factor(&self, t: f64) -> f64 {
        let d = self.duration_s as f64;
        let head = self.ramp_head_s as f64;
        let tail = self.ramp_tail_s as f64;
        if t < 0.0 || t >= d {
            0.0
        } else if head > 0.0 && t < head {
            t / head
        } else if tail > 0.0 && t > d - tail {
            (d - t) / tail
        } else {
            1.0
        }
    }
}

/// One node's resource snapshot for one second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub t: u32,
    pub node_id: String,
    pub cpu_per_core: Vec<f64>,
    pub net_in: f64,
    pub net_out: f64,
    pub mem_used: f64,
    pub disk_util: f64,
}

impl MetricSample {
    pub fn cpu_mean(&self) -> f64 {
        if self.cpu_per_core.is_empty() {
            0.0
        } else {
            self.cpu_per_core.iter().sum::<f64>() / self.cpu_per_core.len() as f64
        }
    }

    pub fn fractions_in_range(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        self.cpu_per_core.iter().all(|&c| unit(c))
            && unit(self.mem_used)
            && unit(self.disk_util)
            && self.net_in >= 0.0
            && self.net_out >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxOutcome {
    Confirmed,
    Rejected,
    PendingAtEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxEvent {
    pub tx_id: u64,
    /// Index of the submitting client.
    pub client_id: u32,
    pub t_submit: f64,
    pub t_settle: Option<f64>,
    pub outcome: TxOutcome,
}

/// Upper bound on the time between submission and a rejection notice.
pub const REJECTION_LATENCY_BOUND_S: f64 = 0.050;

impl TxEvent {
    pub fn latency(&self) -> Option<f64> {
        self.t_settle.map(|s| s - self.t_submit)
    }

    pub fn is_consistent(&self) -> bool {
        match (self.outcome, self.t_settle) {
            (TxOutcome::PendingAtEnd, None) => true,
            (TxOutcome::Confirmed, Some(s)) => s >= self.t_submit,
            (TxOutcome::Rejected, Some(s)) => s >= self.t_submit && s - self.t_submit < REJECTION_LATENCY_BOUND_S,
            _ => false,
        }
    }
}

/// Transaction-pool occupancy for one second (maxima within the second).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSample {
    pub t: u32,
    pub per_client_exec: Vec<u32>,
    pub per_client_nonexec: Vec<u32>,
    pub cumulative_exec: u32,
    pub cumulative_nonexec: u32,
}

/// Everything measured during one rate step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub step: RateStep,
    pub architecture: Architecture,
    pub nodes: Vec<NodeDescriptor>,
    pub samples: Vec<MetricSample>,
    pub tx_log: Vec<TxEvent>,
    /// Network-wide confirmations per second, indexed by second.
    pub f_resp_series: Vec<u32>,
    /// Empty for execute-order-validate networks.
    pub pool_series: Vec<PoolSample>,
    /// Node that confirms each client's transactions, by client index.
    #[serde(default)]
    pub client_home: Vec<String>,
    pub seed: u64,
}

impl RunRecord {
    /// Mean confirmations per second over the trimmed window.
    pub fn mean_f_resp(&self) -> Option<f64> {
        let window: Vec<u32> = (0..self.step.duration_s)
            .filter(|&t| self.step.in_window(t))
            .map(|t| self.f_resp_series.get(t as usize).copied().unwrap_or(0))
            .collect();
        if window.is_empty() {
            None
        } else {
            Some(window.iter().map(|&c| c as f64).sum::<f64>() / window.len() as f64)
        }
    }

    /// Minimum per-second confirmation count over the trimmed window.
    pub fn worst_f_resp(&self) -> Option<f64> {
        (0..self.step.duration_s)
            .filter(|&t| self.step.in_window(t))
            .map(|t| self.f_resp_series.get(t as usize).copied().unwrap_or(0) as f64)
            .reduce(f64::min)
    }

    /// Per-second confirmation counts recomputed from the transaction log.
    pub fn f_resp_from_log(&self) -> Vec<u32> {
        let mut series = vec![0u32; self.step.duration_s as usize];
        for ev in &self.tx_log {
            if let (TxOutcome::Confirmed, Some(s)) = (ev.outcome, ev.t_settle) {
                let sec = s.floor() as usize;
                if sec < series.len() {
                    series[sec] += 1;
                }
            }
        }
        series
    }

    pub fn count(&self, outcome: TxOutcome) -> usize {
        self.tx_log.iter().filter(|e| e.outcome == outcome).count()
    }

    pub fn node(&self, node_id: &str) -> Option<&NodeDescriptor> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }
}
