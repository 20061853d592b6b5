//! Order-execute transaction flow with a capped transaction pool.

use super::build::Layout;
use super::engine::{ClassMode, Engine, Popped};
use super::{arrivals, collect_samples, sim_rng, CapKind, Ledger, Pacers, SimNetwork, StageKind};
use crate::model::{PoolSample, RateStep, RunRecord, TxOutcome};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Debug, Clone, Copy)]
enum Ev {
    Arrive(usize),
    SubmitJob(usize),
    Send(usize),
    AtNode(usize),
    PreValidateJob(usize),
    Validated(usize),
    Gossip(usize),
    AtLeader(usize),
    Rejected(usize),
    BlockTimer,
    BuildJob(usize),
    Built(usize),
    Broadcast(usize),
    BlockAt { block: usize, node: usize },
    AppendJob { block: usize, node: usize },
    AppendWritten { block: usize, node: usize },
    Appended { block: usize, node: usize },
    SendAck { block: usize, node: usize },
    Ack(usize),
    SendConfirm { tx: usize, node: usize },
    Confirmed(usize),
}

#[derive(Default)]
struct ClientPool {
    next_seq: u64,
    /// Submitted, not yet admitted or rejected.
    undecided: BTreeSet<u64>,
    exec: u32,
    /// Admitted but waiting for a predecessor or an executable slot.
    waiting: BTreeMap<u64, usize>,
}

struct TxState {
    client: usize,
    seq: u64,
    home: usize,
    executable: bool,
    at_leader: bool,
}

struct Caps {
    client_exec: f64,
    client_nonexec: f64,
    pool_exec: f64,
    pool_nonexec: f64,
}

struct Sim<'a> {
    net: &'a SimNetwork,
    e: Engine<Ev>,
    l: Layout,
    ledger: Ledger,
    pacers: Pacers,
    rng: ChaCha8Rng,
    caps: Caps,
    client_class: usize,
    /// Per node index.
    prevalidate_class: Vec<usize>,
    order_class: usize,
    append_class: Vec<usize>,
    txs: Vec<TxState>,
    clients: Vec<ClientPool>,
    cum_exec: u32,
    cum_nonexec: u32,
    ready: VecDeque<usize>,
    building: bool,
    build_due: bool,
    blocks: Vec<Vec<usize>>,
    acks: Vec<usize>,
    acks_needed: usize,
    followers: Vec<usize>,
    max_exec: Vec<u32>,
    max_nonexec: Vec<u32>,
    max_cum_exec: u32,
    max_cum_nonexec: u32,
    pool_series: Vec<PoolSample>,
    resident: Vec<Vec<f64>>,
}

impl Sim<'_> {
    fn cost(&self, kind: StageKind) -> super::StageCost {
        self.net.graph.stage(kind).map(|s| s.cost).unwrap_or_default()
    }

    fn msgs(&self) -> super::MessageSizes {
        self.net.config.config().cost_model.messages
    }

    fn after(&mut self, stage: StageKind, host: usize, n: usize, ev: Ev) {
        let t = self.pacers.release(stage, host, n, self.e.now);
        self.e.schedule(t, ev);
    }

    /// Starts a CPU job for `stage` once its pacer admits `n` transactions.
    fn job(&mut self, stage: StageKind, host: usize, n: usize, class: usize, cpu_ms: f64, then: Ev) {
        let t = self.pacers.release(stage, host, n, self.e.now);
        self.e.submit_at(t, host, class, cpu_ms, then);
    }

    fn note_pool(&mut self, c: usize) {
        let p = &self.clients[c];
        self.max_exec[c] = self.max_exec[c].max(p.exec);
        self.max_nonexec[c] = self.max_nonexec[c].max(p.waiting.len() as u32);
        self.max_cum_exec = self.max_cum_exec.max(self.cum_exec);
        self.max_cum_nonexec = self.max_cum_nonexec.max(self.cum_nonexec);
    }

    fn reject(&mut self, tx: usize, at: usize) {
        let c = self.txs[tx].client;
        self.clients[c].undecided.remove(&self.txs[tx].seq);
        let bytes = self.msgs().rejection;
        self.e.send(at, self.l.clients[c], bytes, Ev::Rejected(tx));
        self.promote(c);
    }

    fn exec_slot_free(&self, c: usize) -> bool {
        (self.clients[c].exec as f64) < self.caps.client_exec && (self.cum_exec as f64) < self.caps.pool_exec
    }

    fn make_executable(&mut self, tx: usize) {
        let c = self.txs[tx].client;
        self.clients[c].exec += 1;
        self.cum_exec += 1;
        self.txs[tx].executable = true;
        if self.txs[tx].at_leader {
            self.ready.push_back(tx);
        }
    }

    /// Moves waiting transactions whose predecessors are all admitted into
    /// executable slots, in nonce order.
    fn promote(&mut self, c: usize) {
        loop {
            let p = &self.clients[c];
            let Some((&seq, &tx)) = p.waiting.first_key_value() else { break };
            let blocked = p.undecided.first().is_some_and(|&u| u < seq);
            if blocked || !self.exec_slot_free(c) {
                break;
            }
            self.clients[c].waiting.remove(&seq);
            self.cum_nonexec -= 1;
            self.make_executable(tx);
        }
        self.note_pool(c);
    }

    fn admit(&mut self, tx: usize) {
        let TxState { client: c, seq, home, .. } = self.txs[tx];
        let p = &self.clients[c];
        let in_order = p.undecided.first().is_none_or(|&u| u >= seq)
            && p.waiting.first_key_value().is_none_or(|(&w, _)| w > seq);
        if in_order {
            if self.exec_slot_free(c) {
                self.clients[c].undecided.remove(&seq);
                self.make_executable(tx);
                self.promote(c);
            } else {
                self.reject(tx, home);
            }
        } else if (p.waiting.len() as f64) < self.caps.client_nonexec && (self.cum_nonexec as f64) < self.caps.pool_nonexec {
            self.clients[c].undecided.remove(&seq);
            self.clients[c].waiting.insert(seq, tx);
            self.cum_nonexec += 1;
            self.promote(c);
        } else {
            self.reject(tx, home);
        }
    }

    fn leave_pool(&mut self, tx: usize) {
        let c = self.txs[tx].client;
        self.clients[c].exec -= 1;
        self.cum_exec -= 1;
        self.promote(c);
    }

    fn start_build(&mut self) {
        if self.building || self.ready.is_empty() {
            return;
        }
        let size = self.net.config.config().cost_model.batching.block_size.min(self.ready.len());
        let txs: Vec<usize> = self.ready.drain(..size).collect();
        let cost = self.cost(StageKind::LeaderOrder);
        let cpu = cost.cpu_ms_per_block + cost.cpu_ms_per_tx * txs.len() as f64;
        let block = self.blocks.len();
        self.blocks.push(txs);
        self.acks.push(0);
        self.building = true;
        let n = self.blocks[block].len();
        self.job(StageKind::LeaderOrder, self.l.leader(), n, self.order_class, cpu, Ev::BuildJob(block));
    }

    fn confirm(&mut self, tx: usize, node: usize) {
        self.leave_pool(tx);
        self.after(StageKind::ConfirmToClient, node, 1, Ev::SendConfirm { tx, node });
    }

    fn commit(&mut self, block: usize) {
        let leader = self.l.leader();
        for i in 0..self.blocks[block].len() {
            let tx = self.blocks[block][i];
            if self.txs[tx].home == leader {
                self.confirm(tx, leader);
            }
        }
    }

    fn handle(&mut self, ev: Ev) {
        let now = self.e.now;
        let leader = self.l.leader();
        match ev {
            Ev::Arrive(tx) => {
                let c = self.txs[tx].client;
                let p = &mut self.clients[c];
                self.txs[tx].seq = p.next_seq;
                p.undecided.insert(p.next_seq);
                p.next_seq += 1;
                let cpu = self.cost(StageKind::ClientSubmit).cpu_ms_per_tx;
                self.job(StageKind::ClientSubmit, self.l.clients[c], 1, self.client_class, cpu, Ev::SubmitJob(tx));
            }
            Ev::SubmitJob(tx) => self.e.schedule(now, Ev::Send(tx)),
            Ev::Send(tx) => {
                let c = self.l.clients[self.txs[tx].client];
                let bytes = self.msgs().submission;
                self.e.send(c, self.txs[tx].home, bytes, Ev::AtNode(tx));
            }
            Ev::AtNode(tx) => {
                let home = self.txs[tx].home;
                let limit = self.net.config.config().cost_model.intake_limit;
                if limit.is_some_and(|l| self.e.class_backlog(home, self.prevalidate_class[home]) >= l) {
                    self.reject(tx, home);
                    return;
                }
                let jitter: f64 = self.rng.random_range(0.8..1.2);
                let cpu = self.cost(StageKind::PreValidate).cpu_ms_per_tx * jitter;
                self.job(StageKind::PreValidate, home, 1, self.prevalidate_class[home], cpu, Ev::PreValidateJob(tx));
            }
            Ev::PreValidateJob(tx) => self.e.schedule(now, Ev::Validated(tx)),
            Ev::Validated(tx) => {
                let home = self.txs[tx].home;
                if home == leader {
                    self.txs[tx].at_leader = true;
                } else {
                    self.after(StageKind::TxGossip, home, 1, Ev::Gossip(tx));
                }
                self.admit(tx);
            }
            Ev::Gossip(tx) => {
                let home = self.txs[tx].home;
                let bytes = self.msgs().gossip;
                for i in 0..self.l.nodes.len() {
                    let n = self.l.nodes[i];
                    if n == home {
                        continue;
                    }
                    if n == leader {
                        self.e.send(home, n, bytes, Ev::AtLeader(tx));
                    } else {
                        self.e.transfer(home, n, bytes);
                    }
                }
            }
            Ev::AtLeader(tx) => {
                self.txs[tx].at_leader = true;
                if self.txs[tx].executable {
                    self.ready.push_back(tx);
                }
            }
            Ev::Rejected(tx) => self.ledger.settle(tx, now, TxOutcome::Rejected),
            Ev::BlockTimer => {
                let period = self.net.config.config().cost_model.batching.block_timeout_s;
                self.e.schedule(now + period, Ev::BlockTimer);
                if self.building {
                    self.build_due = true;
                } else {
                    self.start_build();
                }
            }
            Ev::BuildJob(block) => {
                self.building = false;
                self.e.schedule(now, Ev::Built(block));
                if std::mem::take(&mut self.build_due) {
                    self.start_build();
                }
            }
            Ev::Built(block) => {
                let n = self.blocks[block].len() as f64;
                self.e.write_disk(leader, self.cost(StageKind::LeaderOrder).disk_bytes_per_tx * n);
                if self.acks_needed == 0 {
                    self.commit(block);
                }
                self.after(StageKind::BlockBroadcast, leader, n as usize, Ev::Broadcast(block));
            }
            Ev::Broadcast(block) => {
                let m = self.msgs();
                let bytes = m.block_header + m.tx_in_block * self.blocks[block].len() as f64;
                for i in 0..self.followers.len() {
                    let node = self.followers[i];
                    self.e.send(leader, node, bytes, Ev::BlockAt { block, node });
                }
            }
            Ev::BlockAt { block, node } => {
                let cost = self.cost(StageKind::Append);
                let n = self.blocks[block].len();
                let cpu = cost.cpu_ms_per_block + cost.cpu_ms_per_tx * n as f64;
                self.job(StageKind::Append, node, n, self.append_class[node], cpu, Ev::AppendJob { block, node });
            }
            Ev::AppendJob { block, node } => {
                let n = self.blocks[block].len() as f64;
                let t = self.e.write_disk(node, self.cost(StageKind::Append).disk_bytes_per_tx * n);
                self.e.schedule(t, Ev::AppendWritten { block, node });
            }
            Ev::AppendWritten { block, node } => {
                self.e.schedule(now, Ev::Appended { block, node });
            }
            Ev::Appended { block, node } => {
                let n = self.blocks[block].len();
                self.after(StageKind::AckToLeader, node, n, Ev::SendAck { block, node });
                for i in 0..n {
                    let tx = self.blocks[block][i];
                    if self.txs[tx].home == node {
                        self.confirm(tx, node);
                    }
                }
            }
            Ev::SendAck { block, node } => {
                let m = self.msgs();
                let bytes = m.ack_per_block + m.ack_per_tx * self.blocks[block].len() as f64;
                self.e.send(node, leader, bytes, Ev::Ack(block));
            }
            Ev::Ack(block) => {
                self.acks[block] += 1;
                if self.acks[block] == self.acks_needed {
                    self.commit(block);
                }
            }
            Ev::SendConfirm { tx, node } => {
                let c = self.l.clients[self.txs[tx].client];
                let bytes = self.msgs().confirmation;
                self.e.send(node, c, bytes, Ev::Confirmed(tx));
            }
            Ev::Confirmed(tx) => self.ledger.settle(tx, now, TxOutcome::Confirmed),
        }
    }

    fn tick(&mut self, s: u32) {
        for h in 0..self.resident.len() {
            self.resident[h][s as usize] = self.e.queued(h) as f64;
        }
        let leader = self.l.leader();
        self.resident[leader][s as usize] += (self.cum_exec + self.cum_nonexec) as f64;
        self.pool_series.push(PoolSample {
            t: s,
            per_client_exec: self.max_exec.clone(),
            per_client_nonexec: self.max_nonexec.clone(),
            cumulative_exec: self.max_cum_exec,
            cumulative_nonexec: self.max_cum_nonexec,
        });
        for c in 0..self.clients.len() {
            self.max_exec[c] = self.clients[c].exec;
            self.max_nonexec[c] = self.clients[c].waiting.len() as u32;
        }
        self.max_cum_exec = self.cum_exec;
        self.max_cum_nonexec = self.cum_nonexec;
    }
}

pub(crate) fn simulate(net: &SimNetwork, step: &RateStep, seed: u64) -> RunRecord {
    let cfg = net.config.config();
    let nodes = net.nodes();
    let l = Layout::new(nodes);
    let n_cores = cfg.host.n_cores;
    let subs = cfg.topology.submission_nodes;
    let mut e: Engine<Ev> = Engine::new(nodes.len(), &cfg.host, step.duration_s);

    let workers = |k: StageKind| cfg.cost_model.stage(k).workers.unwrap_or(n_cores);
    let mut client_class = 0;
    for &c in &l.clients {
        client_class = e.add_class(c, ClassMode::Pool(workers(StageKind::ClientSubmit)));
    }
    let leader = l.leader();
    let order_class = e.add_class(leader, ClassMode::Core(n_cores - 1));
    let mut prevalidate_class = vec![usize::MAX; nodes.len()];
    let mut append_class = vec![usize::MAX; nodes.len()];
    for &n in &l.nodes {
        prevalidate_class[n] = e.add_class(n, ClassMode::Pool(workers(StageKind::PreValidate)));
        append_class[n] = e.add_class(n, ClassMode::Pool(workers(StageKind::Append)));
    }

    let mut ledger = Ledger::new(step.duration_s as usize);
    let mut txs = Vec::new();
    for (t, c) in arrivals(step, l.clients.len(), seed) {
        let tx = ledger.submit(c, t);
        txs.push(TxState { client: c, seq: 0, home: l.home_node(c, subs), executable: false, at_leader: false });
        e.schedule(t, Ev::Arrive(tx));
    }
    let period = cfg.cost_model.batching.block_timeout_s;
    e.schedule(period, Ev::BlockTimer);
    let followers: Vec<usize> = l.nodes[1..].to_vec();
    let heartbeat: Vec<(usize, usize)> = followers.iter().map(|&f| (leader, f)).collect();
    let n_clients = l.clients.len();
    let caps = Caps {
        client_exec: net.cap(CapKind::ClientExecutableCap),
        client_nonexec: net.cap(CapKind::ClientNonexecCap),
        pool_exec: net.cap(CapKind::PoolExecCap),
        pool_nonexec: net.cap(CapKind::PoolNonexecCap),
    };

    let mut sim = Sim {
        net,
        e,
        acks_needed: l.nodes.len() / 2,
        l,
        ledger,
        pacers: Pacers::new(net),
        rng: sim_rng(seed, step),
        caps,
        client_class,
        prevalidate_class,
        order_class,
        append_class,
        txs,
        clients: (0..n_clients).map(|_| ClientPool::default()).collect(),
        cum_exec: 0,
        cum_nonexec: 0,
        ready: VecDeque::new(),
        building: false,
        build_due: false,
        blocks: Vec::new(),
        acks: Vec::new(),
        followers,
        max_exec: vec![0; n_clients],
        max_nonexec: vec![0; n_clients],
        max_cum_exec: 0,
        max_cum_nonexec: 0,
        pool_series: Vec::new(),
        resident: vec![vec![0.0; step.duration_s as usize]; nodes.len()],
    };
    while let Some(p) = sim.e.next() {
        match p {
            Popped::Event(ev) => sim.handle(ev),
            Popped::Tick(s) => sim.tick(s),
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
        pool_series: sim.pool_series,
        client_home: (0..sim.l.clients.len()).map(|ci| nodes[sim.l.home_node(ci, subs)].node_id.clone()).collect(),
        seed,
    }
}
