//! Discrete-event simulator of the two ledger architectures.

mod build;
mod engine;
mod fabric;
mod graph;
mod quorum;

pub use graph::{
    Batching, CapKind, Constraint, Contribution, CostModel, CostOverrides, ExecutionMode, MessageEdge,
    MessageSizes, Resource, Route, Stage, StageCost, StageCostOverride, StageGraph, StageHost, StageKind,
};

use crate::model::{
    Architecture, MetricSample, NodeDescriptor, RateStep, RunRecord, TxEvent, TxOutcome, ValidatedConfig,
};
use engine::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("expected a {expected} configuration, got {got}")]
    WrongArchitecture { expected: Architecture, got: Architecture },
    #[error("{0} does not apply to this architecture")]
    InvalidConstraint(Constraint),
    #[error("empty rate grid")]
    EmptyGrid,
    #[error("rate grid must be ascending")]
    UnsortedGrid,
}

/// A built network: validated config, stage graph and active constraints.
/// Runs never mutate it, so one network can serve many parallel steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SimNetwork {
    config: ValidatedConfig,
    graph: StageGraph,
    constraints: Vec<Constraint>,
}

impl SimNetwork {
    pub fn graph(&self) -> &StageGraph {
        &self.graph
    }

    pub fn config(&self) -> &ValidatedConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[NodeDescriptor] {
        &self.graph.nodes
    }

    pub fn architecture(&self) -> Architecture {
        self.graph.architecture
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Effective limit of a pool cap; the last constraint of a kind wins.
    pub fn cap(&self, kind: CapKind) -> f64 {
        self.constraints
            .iter()
            .rev()
            .filter_map(|c| c.cap_kind())
            .find(|(k, _)| *k == kind)
            .map(|(_, l)| l)
            .unwrap_or(f64::INFINITY)
    }

    pub fn stage_rate_caps(&self) -> BTreeMap<StageKind, f64> {
        let mut caps = BTreeMap::new();
        for c in &self.constraints {
            if let Constraint::StageRateCap { stage, rate } = *c {
                let e = caps.entry(stage).or_insert(rate);
                *e = e.min(rate);
            }
        }
        caps
    }
}

fn build(cfg: &ValidatedConfig, arch: Architecture) -> Result<SimNetwork, SimError> {
    if cfg.architecture() != arch {
        return Err(SimError::WrongArchitecture { expected: arch, got: cfg.architecture() });
    }
    let graph = match arch {
        Architecture::Fabric => build::fabric_graph(cfg),
        Architecture::Quorum => build::quorum_graph(cfg),
    };
    Ok(SimNetwork { config: cfg.clone(), graph, constraints: cfg.config().constraints.clone() })
}

pub fn build_fabric_network(cfg: &ValidatedConfig) -> Result<SimNetwork, SimError> {
    build(cfg, Architecture::Fabric)
}

pub fn build_quorum_network(cfg: &ValidatedConfig) -> Result<SimNetwork, SimError> {
    build(cfg, Architecture::Quorum)
}

pub fn build_network(cfg: &ValidatedConfig) -> SimNetwork {
    build(cfg, cfg.architecture()).expect("architecture matches itself")
}

/// Returns a copy of `net` that also enforces `c`.
pub fn inject_constraint(net: &SimNetwork, c: Constraint) -> Result<SimNetwork, SimError> {
    if !c.valid_for(net.architecture()) || !c.is_positive() {
        return Err(SimError::InvalidConstraint(c));
    }
    let mut out = net.clone();
    out.constraints.push(c);
    Ok(out)
}

/// Runs one rate step. Deterministic in (net, step, seed).
pub fn run_step(net: &SimNetwork, step: &RateStep, seed: u64) -> RunRecord {
    match net.architecture() {
        Architecture::Fabric => fabric::simulate(net, step, seed),
        Architecture::Quorum => quorum::simulate(net, step, seed),
    }
}

/// Runs every rate of a sweep in parallel; records come back in grid order.
pub fn run_sweep(net: &SimNetwork, template: &RateStep, rates: &[f64], seed: u64) -> Vec<RunRecord> {
    rates.par_iter().map(|&r| run_step(net, &template.at(r), seed)).collect()
}

/// Step shape used by [`saturation_oracle`].
pub const ORACLE_STEP: RateStep = RateStep { f_req: 0.0, duration_s: 30, ramp_head_s: 3, ramp_tail_s: 3 };

/// Largest grid rate whose trimmed-window mean f_resp reaches 95 % of the
/// request rate, by brute force over one long step per rate.
pub fn saturation_oracle(net: &SimNetwork, grid: &[f64], seed: u64) -> Result<f64, SimError> {
    if grid.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::UnsortedGrid);
    }
    let sustained: Vec<bool> = grid
        .par_iter()
        .map(|&r| {
            let rec = run_step(net, &ORACLE_STEP.at(r), seed);
            rec.mean_f_resp().unwrap_or(0.0) >= 0.95 * r - 1e-9
        })
        .collect();
    Ok(grid.iter().zip(sustained).filter(|(_, ok)| *ok).map(|(r, _)| *r).fold(0.0, f64::max))
}

/// Seed for one client's arrival stream.
fn stream_seed(seed: u64, f_req: f64, stream: u64) -> u64 {
    let mut z = seed ^ f_req.to_bits().rotate_left(17) ^ stream.wrapping_mul(0xA24B_AED4_963E_E407);
    z = (z ^ (z >> 33)).wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    z = (z ^ (z >> 33)).wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    z ^ (z >> 33)
}

pub(crate) fn sim_rng(seed: u64, step: &RateStep) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, step.f_req, u64::MAX))
}

/// Poisson arrivals per client at `f_req / n_clients`, thinned by the
/// ramp profile. Sorted by time.
pub(crate) fn arrivals(step: &RateStep, n_clients: usize, seed: u64) -> Vec<(f64, usize)> {
    let mut out = Vec::new();
    if step.f_req <= 0.0 || n_clients == 0 {
        return out;
    }
    let lambda = step.f_req / n_clients as f64;
    let exp = Exp::new(lambda).expect("positive rate");
    let end = step.duration_s as f64;
    for c in 0..n_clients {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, step.f_req, c as u64));
        let mut t = 0.0;
        loop {
            t += exp.sample(&mut rng);
            if t >= end {
                break;
            }
            if rng.random::<f64>() < step.ramp_factor(t) {
                out.push((t, c));
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out
}

/// Output pacing for stage-rate-cap: each host may release at most
/// `rate * share` transactions per second from a capped stage.
pub(crate) struct Pacers {
    rate: BTreeMap<(StageKind, usize), f64>,
    next_free: BTreeMap<(StageKind, usize), f64>,
}

impl Pacers {
    pub fn new(net: &SimNetwork) -> Self {
        let mut rate = BTreeMap::new();
        for (stage, r) in net.stage_rate_caps() {
            if let Some(s) = net.graph.stage(stage) {
                for h in &s.hosts {
                    if h.share > 0.0 {
                        rate.insert((stage, h.node), r * h.share);
                    }
                }
            }
        }
        Pacers { rate, next_free: BTreeMap::new() }
    }

    /// Time at which `n` transactions finishing `stage` on `host` at `now`
    /// may leave it.
    pub fn release(&mut self, stage: StageKind, host: usize, n: usize, now: f64) -> f64 {
        let Some(&r) = self.rate.get(&(stage, host)) else { return now };
        let free = self.next_free.entry((stage, host)).or_insert(0.0);
        let out = free.max(now) + n as f64 / r;
        *free = out;
        out
    }
}

/// Per-transaction outcomes.
pub(crate) struct Ledger {
    pub events: Vec<TxEvent>,
    f_resp: Vec<u32>,
}

impl Ledger {
    pub fn new(n_secs: usize) -> Self {
        Ledger { events: Vec::new(), f_resp: vec![0; n_secs] }
    }

    pub fn submit(&mut self, client: usize, t: f64) -> usize {
        let id = self.events.len();
        self.events.push(TxEvent {
            tx_id: id as u64,
            client_id: client as u32,
            t_submit: t,
            t_settle: None,
            outcome: TxOutcome::PendingAtEnd,
        });
        id
    }

    pub fn settle(&mut self, tx: usize, t: f64, outcome: TxOutcome) {
        let ev = &mut self.events[tx];
        debug_assert!(ev.t_settle.is_none());
        ev.t_settle = Some(t);
        ev.outcome = outcome;
        let sec = t.floor() as usize;
        if outcome == TxOutcome::Confirmed && sec < self.f_resp.len() {
            self.f_resp[sec] += 1;
        }
    }

    pub fn into_parts(self) -> (Vec<TxEvent>, Vec<u32>) {
        (self.events, self.f_resp)
    }
}

/// Bytes of resident state per queued job or pooled transaction.
const MEM_PER_ITEM: f64 = 64.0 * 1024.0;

/// Builds the per-node, per-second samples from the engine's accumulators.
/// `resident[host][sec]` counts queued items at each second's end;
/// `heartbeat` lists consensus links.
pub(crate) fn collect_samples<E>(
    engine: &Engine<E>,
    net: &SimNetwork,
    resident: &[Vec<f64>],
    heartbeat: &[(usize, usize)],
) -> Vec<MetricSample> {
    let cfg = net.config.config();
    let hb = cfg.cost_model.heartbeat_bytes_per_s;
    let mut hb_in = vec![0.0; net.nodes().len()];
    let mut hb_out = vec![0.0; net.nodes().len()];
    for &(a, b) in heartbeat {
        hb_out[a] += hb;
        hb_in[b] += hb;
        hb_out[b] += hb;
        hb_in[a] += hb;
    }
    let mut samples = Vec::with_capacity(net.nodes().len() * engine.n_secs());
    for (i, node) in net.nodes().iter().enumerate() {
        for sec in 0..engine.n_secs() {
            let (bin, bout) = engine.bytes(i, sec);
            let mem = (cfg.cost_model.mem_baseline + MEM_PER_ITEM * resident[i][sec]) / cfg.host.mem_total;
            samples.push(MetricSample {
                t: sec as u32,
                node_id: node.node_id.clone(),
                cpu_per_core: engine.core_util(i, sec),
                net_in: bin + hb_in[i],
                net_out: bout + hb_out[i],
                mem_used: mem.clamp(0.0, 1.0),
                disk_util: engine.disk_util(i, sec),
            });
        }
    }
    samples
}
