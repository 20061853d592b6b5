use super::{Architecture, HostCapacity, NodeDescriptor, NodeFlags, RateStep, Role};
use crate::controller::ControllerPolicy;
use crate::netsim::{Constraint, CostModel};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Node counts. Fields that do not apply to an architecture are ignored
/// (peers/orderers/orgs for order-execute, nodes for execute-order-validate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub clients: usize,
    pub peers: usize,
    pub orderers: usize,
    pub orgs: usize,
    pub nodes: usize,
    /// Nodes that accept client submissions (ids 0..submission_nodes).
    pub submission_nodes: usize,
}

impl Topology {
    pub fn default_for(arch: Architecture) -> Self {
        match arch {
            Architecture::Fabric => {
                Topology { clients: 16, peers: 8, orderers: 4, orgs: 4, nodes: 0, submission_nodes: 0 }
            }
            Architecture::Quorum => {
                Topology { clients: 16, peers: 0, orderers: 0, orgs: 0, nodes: 8, submission_nodes: 4 }
            }
        }
    }
}

/// Inclusive arithmetic rate grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepGrid {
    pub fn default_for(arch: Architecture) -> Self {
        match arch {
            Architecture::Fabric => SweepGrid { start: 200.0, stop: 2400.0, step: 200.0 },
            Architecture::Quorum => SweepGrid { start: 300.0, stop: 3600.0, step: 100.0 },
        }
    }

    pub fn rates(&self) -> Vec<f64> {
        if !self.is_valid() {
            return Vec::new();
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }

    pub fn is_valid(&self) -> bool {
        self.start >= 0.0 && self.step > 0.0 && self.stop >= self.start && self.stop.is_finite()
    }
}

/// Complete, defaulted experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub architecture: Architecture,
    pub seed: u64,
    pub topology: Topology,
    pub host: HostCapacity,
    pub step: RateStep,
    pub sweep: SweepGrid,
    pub controller: ControllerPolicy,
    pub cost_model: CostModel,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl ExperimentConfig {
    pub fn default_for(arch: Architecture) -> Self {
        let constraints = match arch {
            Architecture::Fabric => Vec::new(),
            Architecture::Quorum => Constraint::quorum_defaults(),
        };
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            architecture: arch,
            seed: 1,
            topology: Topology::default_for(arch),
            host: HostCapacity::default(),
            step: RateStep::default(),
            sweep: SweepGrid::default_for(arch),
            controller: ControllerPolicy::default_for(arch),
            cost_model: CostModel::default_for(arch),
            constraints,
        }
    }

    /// Parses a TOML document. Omitted keys take the architecture's
    /// defaults; unknown keys are errors.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let arch = match user.get("architecture") {
            Some(toml::Value::String(s)) => s.parse::<Architecture>().map_err(ConfigError::Parse)?,
            Some(_) => return Err(ConfigError::Parse("`architecture` must be a string".into())),
            None => return Err(ConfigError::Parse("missing `architecture`".into())),
        };
        if let Some(v) = user.get("schema_version") {
            if v.as_integer() != Some(CONFIG_SCHEMA_VERSION as i64) {
                return Err(ConfigError::Parse(format!(
                    "unsupported schema_version {v}, expected {CONFIG_SCHEMA_VERSION}"
                )));
            }
        }
        let defaults = toml::Table::try_from(ExperimentConfig::default_for(arch))
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        let merged = merge(defaults, user);
        merged.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Recursive table merge; arrays and scalars from `over` replace `base`.
fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (key, value) in over {
        match (base.remove(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                base.insert(key, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
    base
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Violation { field: field.to_string(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// A configuration that passed validation, with the node set derived.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    config: ExperimentConfig,
    nodes: Vec<NodeDescriptor>,
}

impl ValidatedConfig {
    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[NodeDescriptor] {
        &self.nodes
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    pub fn into_config(self) -> ExperimentConfig {
        self.config
    }
}

pub fn validate_config(cfg: &ExperimentConfig) -> Result<ValidatedConfig, Vec<Violation>> {
    let mut v = Vec::new();
    let t = &cfg.topology;
    if cfg.schema_version != CONFIG_SCHEMA_VERSION {
        v.push(Violation::new("schema_version", format!("expected {CONFIG_SCHEMA_VERSION}")));
    }
    if t.clients == 0 {
        v.push(Violation::new("topology.clients", "no clients"));
    }
    match cfg.architecture {
        Architecture::Fabric => {
            if t.peers == 0 {
                v.push(Violation::new("topology.peers", "no peers"));
            }
            if t.orderers == 0 {
                v.push(Violation::new("topology.orderers", "no orderers"));
            }
            if t.orgs == 0 {
                v.push(Violation::new("topology.orgs", "no orgs"));
            } else if t.peers > 0 && t.peers < t.orgs {
                v.push(Violation::new("topology.orgs", "more orgs than peers; every org needs an anchor peer"));
            }
        }
        Architecture::Quorum => {
            if t.nodes == 0 {
                v.push(Violation::new("topology.nodes", "no nodes"));
            }
            if t.submission_nodes == 0 {
                v.push(Violation::new("topology.submission_nodes", "no submission nodes"));
            } else if t.submission_nodes > t.nodes {
                v.push(Violation::new("topology.submission_nodes", "more submission nodes than nodes"));
            }
        }
    }
    let h = &cfg.host;
    if h.n_cores == 0 {
        v.push(Violation::new("host.n_cores", "non-positive capacity"));
    }
    for (name, value) in [
        ("host.core_capacity", h.core_capacity),
        ("host.nic_bandwidth", h.nic_bandwidth),
        ("host.mem_total", h.mem_total),
        ("host.disk_bandwidth", h.disk_bandwidth),
    ] {
        if !(value > 0.0) {
            v.push(Violation::new(name, "non-positive capacity"));
        }
    }
    if cfg.step.ramp_head_s + cfg.step.ramp_tail_s >= cfg.step.duration_s {
        v.push(Violation::new("step", "empty measurement window"));
    }
    if !(cfg.step.f_req >= 0.0 && cfg.step.f_req.is_finite()) {
        v.push(Violation::new("step.f_req", "must be a finite non-negative rate"));
    }
    if !cfg.sweep.is_valid() {
        v.push(Violation::new("sweep", "need 0 <= start <= stop and step > 0"));
    }
    if let Err(msg) = cfg.controller.check() {
        v.push(Violation::new("controller", msg));
    }
    if !cfg.cost_model.is_non_negative() {
        v.push(Violation::new("cost_model", "costs and sizes must be non-negative"));
    }
    for c in &cfg.constraints {
        if !c.is_positive() {
            v.push(Violation::new("constraints", format!("{c}: caps must be positive")));
        }
        if !c.valid_for(cfg.architecture) {
            v.push(Violation::new("constraints", format!("{c} does not apply to {}", cfg.architecture)));
        }
    }
    if !v.is_empty() {
        return Err(v);
    }
    let nodes = enumerate_nodes(cfg);
    Ok(ValidatedConfig { config: cfg.clone(), nodes })
}

/// Clients first, then peers and orderers (or quorum nodes). Peers are
/// split into contiguous org blocks; the first peer of each org is its
/// anchor and id 0 of the consensus role is the leader.
pub fn derive_node_set(cfg: &ValidatedConfig) -> Vec<NodeDescriptor> {
    cfg.nodes.clone()
}

fn enumerate_nodes(cfg: &ExperimentConfig) -> Vec<NodeDescriptor> {
    let t = &cfg.topology;
    let mut nodes = Vec::new();
    let mut push = |role: Role, index: usize, org_id: u32, flags: NodeFlags| {
        nodes.push(NodeDescriptor { node_id: format!("{}{index}", role.id_prefix()), role, index, org_id, flags });
    };
    match cfg.architecture {
        Architecture::Fabric => {
            for c in 0..t.clients {
                push(Role::Client, c, (c % t.orgs) as u32, NodeFlags::default());
            }
            for p in 0..t.peers {
                let org = p * t.orgs / t.peers;
                let first = (org * t.peers).div_ceil(t.orgs);
                let flags = NodeFlags { raft_leader: false, anchor_peer: p == first };
                push(Role::Peer, p, org as u32, flags);
            }
            for o in 0..t.orderers {
                push(Role::Orderer, o, 0, NodeFlags { raft_leader: o == 0, anchor_peer: false });
            }
        }
        Architecture::Quorum => {
            for c in 0..t.clients {
                push(Role::Client, c, 0, NodeFlags::default());
            }
            for n in 0..t.nodes {
                push(Role::QuorumNode, n, 0, NodeFlags { raft_leader: n == 0, anchor_peer: false });
            }
        }
    }
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids_with(nodes: &[NodeDescriptor], pred: impl Fn(&NodeDescriptor) -> bool) -> Vec<String> {
        nodes.iter().filter(|n| pred(n)).map(|n| n.node_id.clone()).collect()
    }

    #[test]
    fn fabric_default_topology() {
        let cfg = validate_config(&ExperimentConfig::default_for(Architecture::Fabric)).unwrap();
        let nodes = derive_node_set(&cfg);
        assert_eq!(nodes.len(), 28);
        assert_eq!(ids_with(&nodes, |n| n.flags.raft_leader), ["orderer0"]);
        assert_eq!(ids_with(&nodes, |n| n.flags.anchor_peer), ["peer0", "peer2", "peer4", "peer6"]);
    }

    #[test]
    fn quorum_default_topology() {
        let cfg = validate_config(&ExperimentConfig::default_for(Architecture::Quorum)).unwrap();
        let nodes = derive_node_set(&cfg);
        assert_eq!(nodes.len(), 24);
        assert_eq!(ids_with(&nodes, |n| n.flags.raft_leader), ["node0"]);
    }

    #[test]
    fn minimal_topology() {
        let mut cfg = ExperimentConfig::default_for(Architecture::Fabric);
        cfg.topology = Topology { clients: 1, peers: 1, orderers: 1, orgs: 1, nodes: 0, submission_nodes: 0 };
        let nodes = derive_node_set(&validate_config(&cfg).unwrap());
        assert_eq!(nodes.len(), 3);
        assert!(nodes[1].flags.anchor_peer && nodes[2].flags.raft_leader);
    }

    #[test]
    fn uneven_orgs_get_one_anchor_each() {
        let mut cfg = ExperimentConfig::default_for(Architecture::Fabric);
        cfg.topology.peers = 7;
        cfg.topology.orgs = 3;
        let nodes = derive_node_set(&validate_config(&cfg).unwrap());
        let peers: Vec<_> = nodes.iter().filter(|n| n.role == Role::Peer).collect();
        for org in 0..3 {
            let anchors = peers.iter().filter(|p| p.org_id == org && p.flags.anchor_peer).count();
            assert_eq!(anchors, 1, "org {org}");
        }
    }

    #[test]
    fn violations() {
        let mut cfg = ExperimentConfig::default_for(Architecture::Fabric);
        cfg.topology.peers = 0;
        let err = validate_config(&cfg).unwrap_err();
        assert!(err.iter().any(|v| v.message == "no peers"));

        let mut cfg = ExperimentConfig::default_for(Architecture::Quorum);
        cfg.step = RateStep { f_req: 0.0, duration_s: 5, ramp_head_s: 3, ramp_tail_s: 3 };
        let err = validate_config(&cfg).unwrap_err();
        assert!(err.iter().any(|v| v.message == "empty measurement window"));

        let mut cfg = ExperimentConfig::default_for(Architecture::Quorum);
        cfg.host.nic_bandwidth = 0.0;
        let err = validate_config(&cfg).unwrap_err();
        assert_eq!(err[0].field, "host.nic_bandwidth");
    }

    #[test]
    fn pool_caps_rejected_for_fabric() {
        let mut cfg = ExperimentConfig::default_for(Architecture::Fabric);
        cfg.constraints = Constraint::quorum_defaults();
        assert_eq!(validate_config(&cfg).unwrap_err().len(), 4);
    }

    #[test]
    fn validation_is_idempotent() {
        let cfg = ExperimentConfig::default_for(Architecture::Quorum);
        let once = validate_config(&cfg).unwrap();
        let twice = validate_config(once.config()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn toml_partial_override() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            architecture = "quorum-like"
            seed = 9
            [topology]
            clients = 4
            [cost_model.stages.pre-validate]
            cpu_ms_per_tx = 2.0
            [[constraints]]
            kind = "client-executable-cap"
            limit = inf
            "#,
        )
        .unwrap();
        assert_eq!(cfg.topology.clients, 4);
        assert_eq!(cfg.topology.nodes, 8);
        assert_eq!(cfg.seed, 9);
        let pv = cfg.cost_model.stage(crate::netsim::StageKind::PreValidate);
        assert_eq!(pv.cpu_ms_per_tx, 2.0);
        assert_eq!(pv.workers, Some(2));
        assert_eq!(cfg.constraints, vec![Constraint::ClientExecutableCap { limit: f64::INFINITY }]);
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = ExperimentConfig::default_for(Architecture::Fabric);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
        let err = ExperimentConfig::from_toml_str("architecture = \"fabric\"\n[host]\ncores = 3\n").unwrap_err();
        assert!(err.to_string().contains("cores"));
        assert!(ExperimentConfig::from_toml_str("seed = 1").is_err());
    }

    #[test]
    fn sweep_grid_rates() {
        let g = SweepGrid { start: 200.0, stop: 2400.0, step: 200.0 };
        let r = g.rates();
        assert_eq!(r.len(), 12);
        assert_eq!(r[11], 2400.0);
    }
}
