//! Execute-order-validate transaction flow.

use super::build::Layout;
use super::engine::{ClassMode, Engine, Popped};
use super::{arrivals, collect_samples, Ledger, Pacers, SimNetwork, StageKind};
use crate::model::{RateStep, RunRecord, TxOutcome};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy)]
enum Ev {
    Arrive(usize),
    SubmitJob(usize),
    SendProposals(usize),
    Proposal { tx: usize, peer: usize },
    EndorseJob { tx: usize, peer: usize },
    SendEndorsement { tx: usize, peer: usize },
    Endorsement(usize),
    CollectJob(usize),
    SendEnvelope(usize),
    Envelope(usize),
    OrderJob(usize),
    Ordered(usize),
    BatchTimeout(usize),
    Broadcast { block: usize, from: usize },
    BlockAt { block: usize, node: usize },
    ChunkDone { block: usize, peer: usize },
    VsccDone { block: usize, peer: usize },
    MvccJob { block: usize, peer: usize },
    MvccDone { block: usize, peer: usize },
    CommitJob { block: usize, peer: usize },
    CommitWritten { block: usize, peer: usize },
    Committed { block: usize, peer: usize },
    SendConfirm { tx: usize, peer: usize },
    Confirmed(usize),
}

struct Classes {
    client: usize,
    endorse: usize,
    vscc: usize,
    mvcc: usize,
    commit: usize,
    order: usize,
}

struct PeerState {
    /// Outstanding VSCC chunks per block.
    chunks_left: Vec<usize>,
    vscc_ready: BTreeSet<usize>,
    next_mvcc: usize,
}

struct Sim<'a> {
    net: &'a SimNetwork,
    e: Engine<Ev>,
    l: Layout,
    ledger: Ledger,
    pacers: Pacers,
    cls: Classes,
    tx_client: Vec<usize>,
    endorsements_left: Vec<u8>,
    batch: Vec<usize>,
    batch_gen: usize,
    blocks: Vec<Vec<usize>>,
    /// Per node: block recipients (empty for nodes that do not relay).
    bcast_to: Vec<Vec<usize>>,
    peer_state: Vec<PeerState>,
    /// Node index to position among peers.
    peer_pos: Vec<usize>,
    resident: Vec<Vec<f64>>,
    vscc_workers: usize,
}

impl Sim<'_> {
    fn cost(&self, kind: StageKind) -> super::StageCost {
        self.net.graph.stage(kind).map(|s| s.cost).unwrap_or_default()
    }

    /// Leaves `stage` on `host` after pacing, then fires `ev`.
    fn after(&mut self, stage: StageKind, host: usize, n: usize, ev: Ev) {
        let t = self.pacers.release(stage, host, n, self.e.now);
        self.e.schedule(t, ev);
    }

    /// Starts a CPU job for `stage` once its pacer admits `n` transactions.
    fn job(&mut self, stage: StageKind, host: usize, n: usize, class: usize, cpu_ms: f64, then: Ev) {
        let t = self.pacers.release(stage, host, n, self.e.now);
        self.e.submit_at(t, host, class, cpu_ms, then);
    }

    fn cut_block(&mut self) {
        if self.batch.is_empty() {
            return;
        }
        self.batch_gen += 1;
        let txs = std::mem::take(&mut self.batch);
        let n = txs.len();
        let block = self.blocks.len();
        self.blocks.push(txs);
        for ps in &mut self.peer_state {
            ps.chunks_left.push(0);
        }
        let leader = self.l.leader();
        self.e.write_disk(leader, self.cost(StageKind::OrdererOrder).disk_bytes_per_tx * n as f64);
        self.after(StageKind::BlockBroadcast, leader, n, Ev::Broadcast { block, from: leader });
    }

    fn block_bytes(&self, block: usize) -> f64 {
        let m = &self.net.config.config().cost_model.messages;
        m.block_header + m.tx_in_block * self.blocks[block].len() as f64
    }

    fn start_validation(&mut self, block: usize, peer: usize) {
        let n = self.blocks[block].len();
        let chunks = self.vscc_workers.min(n).max(1);
        let per_tx = self.cost(StageKind::PeerVscc).cpu_ms_per_tx;
        self.peer_state[self.peer_pos[peer]].chunks_left[block] = chunks;
        let t = self.pacers.release(StageKind::PeerVscc, peer, n, self.e.now);
        for k in 0..chunks {
            let size = n / chunks + usize::from(k < n % chunks);
            self.e.submit_at(t, peer, self.cls.vscc, per_tx * size as f64, Ev::ChunkDone { block, peer });
        }
    }

    fn handle(&mut self, ev: Ev) {
        let now = self.e.now;
        match ev {
            Ev::Arrive(tx) => {
                let c = self.l.clients[self.tx_client[tx]];
                let cpu = self.cost(StageKind::ClientSubmit).cpu_ms_per_tx;
                self.job(StageKind::ClientSubmit, c, 1, self.cls.client, cpu, Ev::SubmitJob(tx));
            }
            Ev::SubmitJob(tx) => self.e.schedule(now, Ev::SendProposals(tx)),
            Ev::SendProposals(tx) => {
                let c = self.l.clients[self.tx_client[tx]];
                let bytes = self.net.config.config().cost_model.messages.proposal;
                self.endorsements_left[tx] = self.l.org_peers.len() as u8;
                for o in 0..self.l.org_peers.len() {
                    let members = &self.l.org_peers[o];
                    let peer = members[tx % members.len()];
                    self.e.send(c, peer, bytes, Ev::Proposal { tx, peer });
                }
            }
            Ev::Proposal { tx, peer } => {
                let cpu = self.cost(StageKind::PeerEndorse).cpu_ms_per_tx;
                self.job(StageKind::PeerEndorse, peer, 1, self.cls.endorse, cpu, Ev::EndorseJob { tx, peer });
            }
            Ev::EndorseJob { tx, peer } => self.e.schedule(now, Ev::SendEndorsement { tx, peer }),
            Ev::SendEndorsement { tx, peer } => {
                let c = self.l.clients[self.tx_client[tx]];
                let bytes = self.net.config.config().cost_model.messages.endorsement;
                self.e.send(peer, c, bytes, Ev::Endorsement(tx));
            }
            Ev::Endorsement(tx) => {
                self.endorsements_left[tx] -= 1;
                if self.endorsements_left[tx] == 0 {
                    let c = self.l.clients[self.tx_client[tx]];
                    let cpu = self.cost(StageKind::ClientCollect).cpu_ms_per_tx;
                    self.job(StageKind::ClientCollect, c, 1, self.cls.client, cpu, Ev::CollectJob(tx));
                }
            }
            Ev::CollectJob(tx) => self.e.schedule(now, Ev::SendEnvelope(tx)),
            Ev::SendEnvelope(tx) => {
                let c = self.l.clients[self.tx_client[tx]];
                let bytes = self.net.config.config().cost_model.messages.tx_in_block;
                self.e.send(c, self.l.leader(), bytes, Ev::Envelope(tx));
            }
            Ev::Envelope(tx) => {
                let cpu = self.cost(StageKind::OrdererOrder).cpu_ms_per_tx;
                self.job(StageKind::OrdererOrder, self.l.leader(), 1, self.cls.order, cpu, Ev::OrderJob(tx));
            }
            Ev::OrderJob(tx) => self.e.schedule(now, Ev::Ordered(tx)),
            Ev::Ordered(tx) => {
                let batching = self.net.config.config().cost_model.batching;
                if self.batch.is_empty() {
                    self.e.schedule(now + batching.block_timeout_s, Ev::BatchTimeout(self.batch_gen));
                }
                self.batch.push(tx);
                if self.batch.len() >= batching.block_size {
                    self.cut_block();
                }
            }
            Ev::BatchTimeout(gen) => {
                if gen == self.batch_gen {
                    self.cut_block();
                }
            }
            Ev::Broadcast { block, from } => {
                let bytes = self.block_bytes(block);
                for i in 0..self.bcast_to[from].len() {
                    let node = self.bcast_to[from][i];
                    self.e.send(from, node, bytes, Ev::BlockAt { block, node });
                }
            }
            Ev::BlockAt { block, node } => {
                let n = self.blocks[block].len();
                if self.l.orderers.contains(&node) {
                    let disk = self.cost(StageKind::BlockBroadcast).disk_bytes_per_tx * n as f64;
                    self.e.write_disk(node, disk);
                    self.after(StageKind::BlockBroadcast, node, n, Ev::Broadcast { block, from: node });
                } else {
                    if !self.bcast_to[node].is_empty() {
                        self.after(StageKind::BlockBroadcast, node, n, Ev::Broadcast { block, from: node });
                    }
                    self.start_validation(block, node);
                }
            }
            Ev::ChunkDone { block, peer } => {
                let ps = &mut self.peer_state[self.peer_pos[peer]];
                ps.chunks_left[block] -= 1;
                if ps.chunks_left[block] == 0 {
                    self.e.schedule(now, Ev::VsccDone { block, peer });
                }
            }
            Ev::VsccDone { block, peer } => {
                let per_tx = self.cost(StageKind::PeerMvcc).cpu_ms_per_tx;
                let pos = self.peer_pos[peer];
                self.peer_state[pos].vscc_ready.insert(block);
                loop {
                    let ps = &mut self.peer_state[pos];
                    let next = ps.next_mvcc;
                    if !ps.vscc_ready.remove(&next) {
                        break;
                    }
                    ps.next_mvcc += 1;
                    let n = self.blocks[next].len();
                    self.job(StageKind::PeerMvcc, peer, n, self.cls.mvcc, per_tx * n as f64, Ev::MvccJob { block: next, peer });
                }
            }
            Ev::MvccJob { block, peer } => self.e.schedule(now, Ev::MvccDone { block, peer }),
            Ev::MvccDone { block, peer } => {
                let n = self.blocks[block].len();
                let cpu = self.cost(StageKind::PeerCommit).cpu_ms_per_tx * n as f64;
                self.job(StageKind::PeerCommit, peer, n, self.cls.commit, cpu, Ev::CommitJob { block, peer });
            }
            Ev::CommitJob { block, peer } => {
                let n = self.blocks[block].len() as f64;
                let t = self.e.write_disk(peer, self.cost(StageKind::PeerCommit).disk_bytes_per_tx * n);
                self.e.schedule(t, Ev::CommitWritten { block, peer });
            }
            Ev::CommitWritten { block, peer } => {
                self.e.schedule(now, Ev::Committed { block, peer });
            }
            Ev::Committed { block, peer } => {
                for i in 0..self.blocks[block].len() {
                    let tx = self.blocks[block][i];
                    if self.l.home_peer(self.tx_client[tx]) == peer {
                        self.after(StageKind::ConfirmToClient, peer, 1, Ev::SendConfirm { tx, peer });
                    }
                }
            }
            Ev::SendConfirm { tx, peer } => {
                let c = self.l.clients[self.tx_client[tx]];
                let bytes = self.net.config.config().cost_model.messages.confirmation;
                self.e.send(peer, c, bytes, Ev::Confirmed(tx));
            }
            Ev::Confirmed(tx) => self.ledger.settle(tx, now, TxOutcome::Confirmed),
        }
    }
}

pub(crate) fn simulate(net: &SimNetwork, step: &RateStep, seed: u64) -> RunRecord {
    let cfg = net.config.config();
    let nodes = net.nodes();
    let l = Layout::new(nodes);
    let n_cores = cfg.host.n_cores;
    let mut e: Engine<Ev> = Engine::new(nodes.len(), &cfg.host, step.duration_s);

    let vscc_workers = cfg.cost_model.stage(StageKind::PeerVscc).workers.unwrap_or(n_cores);
    let endorse_workers = cfg.cost_model.stage(StageKind::PeerEndorse).workers.unwrap_or(n_cores);
    let commit_workers = cfg.cost_model.stage(StageKind::PeerCommit).workers.unwrap_or(n_cores);
    let mut cls = Classes { client: 0, endorse: 0, vscc: 0, mvcc: 0, commit: 0, order: 0 };
    for &c in &l.clients {
        cls.client = e.add_class(c, ClassMode::Pool(n_cores));
    }
    for &p in &l.peers {
        cls.mvcc = e.add_class(p, ClassMode::Core(n_cores - 1));
        cls.vscc = e.add_class(p, ClassMode::Pool(vscc_workers));
        cls.endorse = e.add_class(p, ClassMode::Pool(endorse_workers));
        cls.commit = e.add_class(p, ClassMode::Pool(commit_workers));
    }
    for (i, &o) in l.orderers.iter().enumerate() {
        let class = e.add_class(o, ClassMode::Core(n_cores - 1));
        if i == 0 {
            cls.order = class;
        }
    }

    let mut bcast_to = vec![Vec::new(); nodes.len()];
    if let Some(edge) = net.graph.edges_from(StageKind::BlockBroadcast).next() {
        for r in &edge.routes {
            bcast_to[r.from].extend(r.to.iter().copied());
        }
    }
    let mut peer_pos = vec![usize::MAX; nodes.len()];
    for (i, &p) in l.peers.iter().enumerate() {
        peer_pos[p] = i;
    }

    let mut ledger = Ledger::new(step.duration_s as usize);
    let mut tx_client = Vec::new();
    for (t, c) in arrivals(step, l.clients.len(), seed) {
        let tx = ledger.submit(c, t);
        tx_client.push(c);
        e.schedule(t, Ev::Arrive(tx));
    }
    let n_tx = tx_client.len();
    let heartbeat: Vec<(usize, usize)> = l.orderers.iter().skip(1).map(|&f| (l.leader(), f)).collect();
    let n_peers = l.peers.len();

    let mut sim = Sim {
        net,
        e,
        l,
        ledger,
        pacers: Pacers::new(net),
        cls,
        tx_client,
        endorsements_left: vec![0; n_tx],
        batch: Vec::new(),
        batch_gen: 0,
        blocks: Vec::new(),
        bcast_to,
        peer_state: (0..n_peers)
            .map(|_| PeerState { chunks_left: Vec::new(), vscc_ready: BTreeSet::new(), next_mvcc: 0 })
            .collect(),
        peer_pos,
        resident: vec![vec![0.0; step.duration_s as usize]; nodes.len()],
        vscc_workers,
    };
    while let Some(p) = sim.e.next() {
        match p {
            Popped::Event(ev) => sim.handle(ev),
            Popped::Tick(s) => {
                for h in 0..nodes.len() {
                    sim.resident[h][s as usize] = sim.e.queued(h) as f64;
                }
                let leader = sim.l.leader();
                sim.resident[leader][s as usize] += sim.batch.len() as f64;
            }
        }
    }
    let samples = collect_samples(&sim.e, net, &sim.resident, &heartbeat);
    let (tx_log, f_resp_series) = sim.ledger.into_parts();
    RunRecord {
        step: *step,
        architecture: net.architecture(),
        nodes: nodes.to_vec(),
        samples,
        tx_log,
        f_resp_series,
        pool_series: Vec::new(),
        client_home: (0..sim.l.clients.len()).map(|ci| nodes[sim.l.home_peer(ci)].node_id.clone()).collect(),
        seed,
    }
}
