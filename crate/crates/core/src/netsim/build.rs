//! Stage graphs over a concrete node set.

use super::graph::{ExecutionMode, MessageEdge, Route, Stage, StageGraph, StageHost, StageKind};
use crate::model::{Architecture, NodeDescriptor, Role, ValidatedConfig};

/// Node indices grouped by role, in node-set order.
#[derive(Debug, Clone, Default)]
pub(crate) struct Layout {
    pub clients: Vec<usize>,
    pub peers: Vec<usize>,
    pub orderers: Vec<usize>,
    pub nodes: Vec<usize>,
    /// Peers per org; the first entry of each is the anchor.
    pub org_peers: Vec<Vec<usize>>,
}

impl Layout {
    pub fn new(nodes: &[NodeDescriptor]) -> Self {
        let mut l = Layout::default();
        for (i, n) in nodes.iter().enumerate() {
            match n.role {
                Role::Client => l.clients.push(i),
                Role::Peer => {
                    let org = n.org_id as usize;
                    if l.org_peers.len() <= org {
                        l.org_peers.resize(org + 1, Vec::new());
                    }
                    if n.flags.anchor_peer {
                        l.org_peers[org].insert(0, i);
                    } else {
                        l.org_peers[org].push(i);
                    }
                    l.peers.push(i);
                }
                Role::Orderer => l.orderers.push(i),
                Role::QuorumNode => l.nodes.push(i),
            }
        }
        l
    }

    pub fn leader(&self) -> usize {
        if self.orderers.is_empty() {
            self.nodes[0]
        } else {
            self.orderers[0]
        }
    }

    pub fn org_of_peer(&self, peer: usize) -> usize {
        self.org_peers.iter().position(|o| o.contains(&peer)).expect("peer belongs to an org")
    }

    /// Orderer that feeds blocks to an org's anchor.
    pub fn orderer_for_org(&self, org: usize) -> usize {
        self.orderers[org % self.orderers.len()]
    }

    /// Peer that confirms a client's transactions.
    pub fn home_peer(&self, client_pos: usize) -> usize {
        self.peers[client_pos % self.peers.len()]
    }

    /// Node a client submits to, given the number of submission nodes.
    pub fn home_node(&self, client_pos: usize, submission_nodes: usize) -> usize {
        self.nodes[client_pos % submission_nodes]
    }
}

fn mode(kind: StageKind, n_cores: usize, workers: Option<usize>) -> ExecutionMode {
    match kind {
        StageKind::PeerMvcc => ExecutionMode::SequentialSingleCore,
        StageKind::OrdererOrder | StageKind::LeaderOrder => ExecutionMode::PinnedCore { core: n_cores - 1 },
        _ => ExecutionMode::ParallelAcrossCores { workers: workers.unwrap_or(n_cores) },
    }
}

struct Builder<'a> {
    cfg: &'a ValidatedConfig,
    stages: Vec<Stage>,
    edges: Vec<MessageEdge>,
}

impl Builder<'_> {
    fn stage(&mut self, kind: StageKind, role: Role, hosts: Vec<(usize, f64)>) -> &mut Stage {
        let c = self.cfg.config();
        let cost = c.cost_model.stage(kind);
        let batching = matches!(kind, StageKind::OrdererOrder | StageKind::LeaderOrder).then_some(c.cost_model.batching);
        self.stages.push(Stage {
            kind,
            host_role: role,
            mode: mode(kind, c.host.n_cores, cost.workers),
            cost,
            batching,
            hosts: hosts.into_iter().map(|(node, share)| StageHost { node, share, disk_share: share }).collect(),
        });
        self.stages.last_mut().expect("just pushed")
    }

    fn edge(&mut self, from: StageKind, to: Option<StageKind>, bytes_per_tx: f64, header: f64, routes: Vec<Route>) {
        self.edges.push(MessageEdge { from_stage: from, to_stage: to, routes, bytes_per_tx, bytes_per_block_header: header });
    }
}

pub(crate) fn fabric_graph(cfg: &ValidatedConfig) -> StageGraph {
    let c = cfg.config();
    let nodes = cfg.nodes();
    let l = Layout::new(nodes);
    let m = c.cost_model.messages;
    let n_clients = l.clients.len() as f64;
    let leader = l.leader();
    let mut b = Builder { cfg, stages: Vec::new(), edges: Vec::new() };
    let per_client: Vec<(usize, f64)> = l.clients.iter().map(|&i| (i, 1.0 / n_clients)).collect();
    let endorse_share = |p: usize| 1.0 / l.org_peers[l.org_of_peer(p)].len() as f64;

    b.stage(StageKind::ClientSubmit, Role::Client, per_client.clone());
    let routes = l
        .clients
        .iter()
        .flat_map(|&cl| l.peers.iter().map(move |&p| (cl, p)))
        .map(|(cl, p)| Route { from: cl, to: vec![p], share: endorse_share(p) / n_clients })
        .collect();
    b.edge(StageKind::ClientSubmit, Some(StageKind::PeerEndorse), m.proposal, 0.0, routes);

    b.stage(StageKind::PeerEndorse, Role::Peer, l.peers.iter().map(|&p| (p, endorse_share(p))).collect());
    let routes = l
        .peers
        .iter()
        .flat_map(|&p| l.clients.iter().map(move |&cl| (p, cl)))
        .map(|(p, cl)| Route { from: p, to: vec![cl], share: endorse_share(p) / n_clients })
        .collect();
    b.edge(StageKind::PeerEndorse, Some(StageKind::ClientCollect), m.endorsement, 0.0, routes);

    b.stage(StageKind::ClientCollect, Role::Client, per_client.clone());
    let routes = l.clients.iter().map(|&cl| Route { from: cl, to: vec![leader], share: 1.0 / n_clients }).collect();
    b.edge(StageKind::ClientCollect, Some(StageKind::OrdererOrder), m.tx_in_block, 0.0, routes);

    b.stage(StageKind::OrdererOrder, Role::Orderer, vec![(leader, 1.0)]);

    // leader and followers each serve the anchors of their orgs; anchors
    // relay to the rest of their org
    let mut routes = Vec::new();
    for &o in &l.orderers {
        let mut to: Vec<usize> = if o == leader { l.orderers[1..].to_vec() } else { Vec::new() };
        for (org, members) in l.org_peers.iter().enumerate() {
            if l.orderer_for_org(org) == o {
                to.push(members[0]);
            }
        }
        if !to.is_empty() {
            routes.push(Route { from: o, to, share: 1.0 });
        }
    }
    for members in &l.org_peers {
        if members.len() > 1 {
            routes.push(Route { from: members[0], to: members[1..].to_vec(), share: 1.0 });
        }
    }
    let mut hosts: Vec<(usize, f64)> = l.orderers.iter().map(|&o| (o, 1.0)).collect();
    hosts.extend(l.org_peers.iter().map(|m| (m[0], 1.0)));
    let stage = b.stage(StageKind::BlockBroadcast, Role::Orderer, hosts);
    for h in &mut stage.hosts {
        // only follower orderers persist the received block
        h.disk_share = if l.orderers[1..].contains(&h.node) { 1.0 } else { 0.0 };
    }
    b.edge(StageKind::BlockBroadcast, Some(StageKind::PeerVscc), m.tx_in_block, m.block_header, routes);

    let all_peers: Vec<(usize, f64)> = l.peers.iter().map(|&p| (p, 1.0)).collect();
    b.stage(StageKind::PeerVscc, Role::Peer, all_peers.clone());
    b.stage(StageKind::PeerMvcc, Role::Peer, all_peers.clone());
    b.stage(StageKind::PeerCommit, Role::Peer, all_peers);

    let homed = |p: usize| {
        (0..l.clients.len()).filter(|&ci| l.home_peer(ci) == p).count() as f64 / n_clients
    };
    b.stage(StageKind::ConfirmToClient, Role::Peer, l.peers.iter().map(|&p| (p, homed(p))).collect());
    let routes = l
        .clients
        .iter()
        .enumerate()
        .map(|(ci, &cl)| Route { from: l.home_peer(ci), to: vec![cl], share: 1.0 / n_clients })
        .collect();
    b.edge(StageKind::ConfirmToClient, None, m.confirmation, 0.0, routes);

    StageGraph {
        architecture: Architecture::Fabric,
        nodes: nodes.to_vec(),
        n_cores: c.host.n_cores,
        stages: b.stages,
        edges: b.edges,
        nominal_block_size: c.cost_model.batching.block_size as f64,
    }
}

/// Typical transactions per block of the order-execute leader, used only
/// to amortize per-block costs when attributing load to stages.
const QUORUM_NOMINAL_BLOCK: f64 = 50.0;

pub(crate) fn quorum_graph(cfg: &ValidatedConfig) -> StageGraph {
    let c = cfg.config();
    let nodes = cfg.nodes();
    let l = Layout::new(nodes);
    let m = c.cost_model.messages;
    let n_clients = l.clients.len() as f64;
    let subs = c.topology.submission_nodes;
    let leader = l.leader();
    let followers: Vec<usize> = l.nodes[1..].to_vec();
    let mut b = Builder { cfg, stages: Vec::new(), edges: Vec::new() };
    let homed = |n: usize| {
        (0..l.clients.len()).filter(|&ci| l.home_node(ci, subs) == n).count() as f64 / n_clients
    };
    let submission: Vec<usize> = l.nodes[..subs].to_vec();

    b.stage(StageKind::ClientSubmit, Role::Client, l.clients.iter().map(|&i| (i, 1.0 / n_clients)).collect());
    let routes = l
        .clients
        .iter()
        .enumerate()
        .map(|(ci, &cl)| Route { from: cl, to: vec![l.home_node(ci, subs)], share: 1.0 / n_clients })
        .collect();
    b.edge(StageKind::ClientSubmit, Some(StageKind::PreValidate), m.submission, 0.0, routes);

    b.stage(StageKind::PreValidate, Role::QuorumNode, submission.iter().map(|&n| (n, homed(n))).collect());

    let gossipers: Vec<usize> = submission.iter().copied().filter(|&n| n != leader).collect();
    b.stage(StageKind::TxGossip, Role::QuorumNode, gossipers.iter().map(|&n| (n, homed(n))).collect());
    let routes = gossipers
        .iter()
        .map(|&n| Route { from: n, to: l.nodes.iter().copied().filter(|&o| o != n).collect(), share: homed(n) })
        .collect();
    b.edge(StageKind::TxGossip, Some(StageKind::LeaderOrder), m.gossip, 0.0, routes);

    b.stage(StageKind::LeaderOrder, Role::QuorumNode, vec![(leader, 1.0)]);
    b.stage(StageKind::BlockBroadcast, Role::QuorumNode, vec![(leader, 1.0)]);
    let routes = if followers.is_empty() {
        Vec::new()
    } else {
        vec![Route { from: leader, to: followers.clone(), share: 1.0 }]
    };
    b.edge(StageKind::BlockBroadcast, Some(StageKind::Append), m.tx_in_block, m.block_header, routes);

    let fs: Vec<(usize, f64)> = followers.iter().map(|&f| (f, 1.0)).collect();
    b.stage(StageKind::Append, Role::QuorumNode, fs.clone());
    b.stage(StageKind::AckToLeader, Role::QuorumNode, fs);
    let routes = followers.iter().map(|&f| Route { from: f, to: vec![leader], share: 1.0 }).collect();
    b.edge(StageKind::AckToLeader, None, m.ack_per_tx, m.ack_per_block, routes);

    b.stage(StageKind::ConfirmToClient, Role::QuorumNode, submission.iter().map(|&n| (n, homed(n))).collect());
    let routes = l
        .clients
        .iter()
        .enumerate()
        .map(|(ci, &cl)| Route { from: l.home_node(ci, subs), to: vec![cl], share: 1.0 / n_clients })
        .collect();
    b.edge(StageKind::ConfirmToClient, None, m.confirmation, 0.0, routes);

    StageGraph {
        architecture: Architecture::Quorum,
        nodes: nodes.to_vec(),
        n_cores: c.host.n_cores,
        stages: b.stages,
        edges: b.edges,
        nominal_block_size: QUORUM_NOMINAL_BLOCK,
    }
}
