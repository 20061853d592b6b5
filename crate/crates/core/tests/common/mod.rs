//! Shared fixtures and criterion checks for the integration and acceptance tests.
//!
//! Every `check_*` returns `Ok(detail)` or `Err(detail)`; the detail is the
//! measured numbers, so failures print what was actually seen.
#![allow(dead_code)]

use std::sync::OnceLock;

use chainscope::analysis::{
    block_traffic_estimate, classify_all, detect_knee, follower_orderers, localize_bottleneck, mean_outbound,
    outbound_ratio, rejection_and_pool, rolling_mean, subtract_block_traffic, throughput_signal, BottleneckReport,
    CandidateId, Signal, Trend,
};
use chainscope::controller::{run_localization_with_step, ControllerPolicy, PassCriterion};
use chainscope::metrics::{
    frame_from_records, frame_to_csv_string, parse_csv, series, step_traces, trim_window, Aggregate, MetricName,
    MetricRow, MetricsFrame, Selector, XAxis,
};
use chainscope::model::{validate_config, Architecture, ExperimentConfig, RateStep, Role, RunRecord, TxOutcome};
use chainscope::netsim::{build_network, run_step, run_sweep, saturation_oracle, Constraint, SimNetwork, StageKind};
use chainscope::report::cmd_run;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

pub type Check = Result<String, String>;

pub struct Sweep {
    pub cfg: ExperimentConfig,
    pub net: SimNetwork,
    pub records: Vec<RunRecord>,
    /// Trimmed to the measurement window.
    pub frame: MetricsFrame,
    pub signals: Vec<Signal>,
    pub report: BottleneckReport,
}

impl Sweep {
    pub fn run(cfg: ExperimentConfig) -> Sweep {
        let net = build_network(&validate_config(&cfg).expect("valid config"));
        let records = run_sweep(&net, &cfg.step, &cfg.sweep.rates(), cfg.seed);
        let full = frame_from_records(&records).expect("frame");
        let frame = trim_window(&full, cfg.step.ramp_head_s, cfg.step.ramp_tail_s).expect("trim");
        let signals = classify_all(&frame, net.graph()).expect("classify");
        let tp = throughput_signal(&signals).expect("throughput observable").classification;
        let report = localize_bottleneck(net.graph(), net.constraints(), &signals, &tp).expect("localize");
        Sweep { cfg, net, records, frame, signals, report }
    }

    pub fn signal(&self, id: &str) -> Result<&Signal, String> {
        self.signals.iter().find(|s| s.id() == id).ok_or_else(|| format!("no observable {id}"))
    }

    pub fn grid_step(&self) -> f64 {
        self.cfg.sweep.step
    }
}

pub fn fabric() -> &'static Sweep {
    static S: OnceLock<Sweep> = OnceLock::new();
    S.get_or_init(|| Sweep::run(ExperimentConfig::default_for(Architecture::Fabric)))
}

pub fn quorum() -> &'static Sweep {
    static S: OnceLock<Sweep> = OnceLock::new();
    S.get_or_init(|| Sweep::run(ExperimentConfig::default_for(Architecture::Quorum)))
}

/// Sets every pool/client cap of a config to infinity.
pub fn without_caps(mut cfg: ExperimentConfig) -> ExperimentConfig {
    for c in cfg.constraints.iter_mut() {
        match c {
            Constraint::ClientExecutableCap { limit }
            | Constraint::ClientNonexecCap { limit }
            | Constraint::PoolExecCap { limit }
            | Constraint::PoolNonexecCap { limit } => *limit = f64::INFINITY,
            Constraint::StageRateCap { .. } => {}
        }
    }
    cfg
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn at(curve: &[(f64, f64)], x: f64) -> Result<f64, String> {
    curve.iter().find(|p| p.0 == x).map(|p| p.1).ok_or_else(|| format!("no point at {x}"))
}

fn near(v: Option<f64>, target: f64, tol: f64) -> bool {
    v.is_some_and(|v| (v - target).abs() <= tol)
}

/// Knee of the mean CPU over all Fabric peers.
pub fn fabric_peer_knee() -> Result<(f64, f64, Trend), String> {
    let s = fabric();
    let curve = series(&s.frame, &Selector::metric(MetricName::CpuMean).role(Role::Peer), Aggregate::Mean, XAxis::Rate)
        .map_err(|e| e.to_string())?;
    let c = detect_knee(&curve).map_err(|e| e.to_string())?;
    let knee = c.knee_x.ok_or_else(|| format!("peer cpu is {}, not a plateau", c.trend))?;
    Ok((knee, at(&curve, knee)?, c.trend))
}

pub fn check_fabric_peer_cpu() -> Check {
    let (knee, cpu, trend) = fabric_peer_knee()?;
    ensure(
        trend == Trend::Plateau && (knee - 1600.0).abs() <= 100.0 && (cpu - 0.5).abs() <= 0.1,
        format!("peer cpu {trend}, knee {knee}, cpu at knee {:.1}%", cpu * 100.0),
    )
}

fn sub_knee_rates() -> Result<Vec<f64>, String> {
    let (knee, _, _) = fabric_peer_knee()?;
    Ok(fabric().frame.rates().into_iter().filter(|&r| r < knee).collect())
}

pub fn check_orderer_ratio() -> Check {
    let f = &fabric().frame;
    let outs = mean_outbound(f, Role::Orderer).map_err(|e| e.to_string())?;
    let leader = outs.iter().max_by(|a, b| a.1.total_cmp(&b.1)).ok_or("no orderers")?.0.clone();
    let followers = follower_orderers(f).map_err(|e| e.to_string())?;
    let ratio = outbound_ratio(f, &leader, &followers).map_err(|e| e.to_string())?;
    let sub = sub_knee_rates()?;
    let vals: Vec<f64> = sub.iter().map(|&r| at(&ratio, r)).collect::<Result<_, _>>()?;
    let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    ensure(
        !vals.is_empty() && (lo - 4.0).abs() <= 0.2 && (hi - 4.0).abs() <= 0.2,
        format!("{leader}/followers ratio over {} sub-knee rates in [{lo:.3}, {hi:.3}]", vals.len()),
    )
}

pub fn check_anchor_traffic() -> Check {
    let s = fabric();
    let peers: Vec<_> = s.net.nodes().iter().filter(|n| n.role == Role::Peer).collect();
    let anchors: Vec<&str> = peers.iter().filter(|n| n.flags.anchor_peer).map(|n| n.node_id.as_str()).collect();
    let others: Vec<&str> = peers.iter().filter(|n| !n.flags.anchor_peer).map(|n| n.node_id.as_str()).collect();
    let mean = |nodes: &[&str]| {
        series(&s.frame, &Selector::metric(MetricName::NetOut).nodes(nodes), Aggregate::Mean, XAxis::Rate)
            .map_err(|e| e.to_string())
    };
    let (a, o) = (mean(&anchors)?, mean(&others)?);
    let sub = sub_knee_rates()?;
    let mut min_factor = f64::INFINITY;
    for &r in &sub {
        min_factor = min_factor.min(at(&a, r)? / at(&o, r)?);
    }
    let est = block_traffic_estimate(&s.frame).map_err(|e| e.to_string())?;
    let adj = subtract_block_traffic(&s.frame, &est).map_err(|e| e.to_string())?;
    let knee = fabric_peer_knee()?.0;
    let spread = adj.max_spread_below(knee);
    ensure(
        min_factor >= 2.0 && spread <= 0.10,
        format!("anchor/non-anchor outbound >= {min_factor:.2}x, adjusted spread <= {:.2}% below {knee}", spread * 100.0),
    )
}

pub fn check_fabric_localization() -> Check {
    let s = fabric();
    let rep = &s.report;
    let validation = [StageKind::PeerVscc, StageKind::PeerMvcc];
    let top = rep.top().ok_or("no candidates")?;
    let best_validation = validation
        .iter()
        .filter_map(|&k| rep.rank_of(CandidateId::Stage(k)))
        .min()
        .ok_or("validation stages not ranked")?;
    let upstream = [
        StageKind::ClientSubmit,
        StageKind::PeerEndorse,
        StageKind::ClientCollect,
        StageKind::OrdererOrder,
        StageKind::BlockBroadcast,
    ];
    let beaten: Vec<String> = upstream
        .iter()
        .filter(|&&k| rep.rank_of(CandidateId::Stage(k)).is_some_and(|r| r < best_validation))
        .map(|k| k.to_string())
        .collect();
    let traffic: Vec<&Signal> = s
        .signals
        .iter()
        .filter(|x| matches!(x.observable.role, Role::Orderer | Role::Client))
        .filter(|x| matches!(x.observable.kind.metric(), MetricName::NetIn | MetricName::NetOut))
        .collect();
    let nonlinear: Vec<String> =
        traffic.iter().filter(|x| x.classification.trend != Trend::Linear).map(|x| format!("{} {}", x.id(), x.classification.trend)).collect();
    ensure(
        validation.contains(&match top {
            CandidateId::Stage(k) => k,
            CandidateId::Cap(_) => StageKind::ClientSubmit,
        }) && beaten.is_empty()
            && nonlinear.is_empty()
            && !traffic.is_empty(),
        format!(
            "top {top}, best validation rank {}, upstream ranked above: [{}], {} orderer/client traffic observables, non-linear: [{}]",
            best_validation + 1,
            beaten.join(", "),
            traffic.len(),
            nonlinear.join(", ")
        ),
    )
}

/// Per-step means of the 15 s rolling-mean throughput.
pub fn rolling_throughput(frame: &MetricsFrame, window_s: usize) -> Result<Vec<(f64, f64)>, String> {
    let traces = step_traces(frame, &Selector::metric(MetricName::FResp).role(Role::Client), Aggregate::Sum)
        .map_err(|e| e.to_string())?;
    traces
        .into_iter()
        .map(|(x, tr)| {
            let r = rolling_mean(&tr, window_s).map_err(|e| e.to_string())?;
            Ok((x, r.iter().map(|p| p.1).sum::<f64>() / r.len() as f64))
        })
        .collect()
}

pub fn check_quorum_knees() -> Check {
    let s = quorum();
    let step = s.grid_step();
    let knee = |id: &str| s.signal(id).map(|x| x.classification.knee_x);
    let out = knee("node/leader/net-out")?;
    let inn = knee("node/leader/net-in")?;
    let cpu = knee("node/leader/cpu")?;
    let rp = rejection_and_pool(&s.frame).map_err(|e| e.to_string())?;
    let onset = detect_knee(&rp.rejected_share).map_err(|e| e.to_string())?.breakpoint;
    let tp = rolling_throughput(&s.frame, 15)?;
    let tc = detect_knee(&tp).map_err(|e| e.to_string())?;
    let level = tc.knee_x.map(|k| {
        let after: Vec<f64> = tp.iter().filter(|p| p.0 >= k).map(|p| p.1).collect();
        after.iter().sum::<f64>() / after.len() as f64
    });
    ensure(
        near(out, 1800.0, step)
            && (onset - 1800.0).abs() <= step
            && near(inn, 2400.0, step)
            && near(cpu, 2400.0, step)
            && tc.trend == Trend::Plateau
            && near(level, 2100.0, 150.0),
        format!(
            "leader out knee {out:?}, rejection onset {onset}, leader in knee {inn:?}, leader cpu knee {cpu:?}, \
             throughput {} knee {:?} plateau level {:.0}",
            tc.trend,
            tc.knee_x,
            level.unwrap_or(f64::NAN)
        ),
    )
}

pub fn check_quorum_rejections() -> Check {
    let s = quorum();
    let rp = rejection_and_pool(&s.frame).map_err(|e| e.to_string())?;
    let share = rp.rejected_share.last().ok_or("no rates")?.1;
    let knee = s.report.candidates.first().and_then(|c| c.knee_x).ok_or("no ranked knee")?;
    let peak_exec = rp.client_exec_max.iter().map(|p| p.1).fold(0.0, f64::max);
    let pinned = rp.client_exec_max.iter().filter(|p| p.0 >= knee).all(|p| p.1 == 16.0);
    let pool = rp.pool_exec_max.iter().map(|p| p.1).fold(0.0, f64::max);
    ensure(
        share >= 0.10 && peak_exec == 16.0 && pinned && pool <= 4096.0,
        format!(
            "rejected {:.1}% at top rate, per-client executable max {peak_exec} (pinned at 16 from {knee}: {pinned}), \
             cumulative executable max {pool}",
            share * 100.0
        ),
    )
}

pub fn check_quorum_cap_culprit() -> Check {
    let s = quorum();
    let top = s.report.top().ok_or("no candidates")?;
    let grid = s.cfg.sweep.rates();
    let capped = saturation_oracle(&s.net, &grid, s.cfg.seed).map_err(|e| e.to_string())?;
    let mut cfg = s.cfg.clone();
    for c in cfg.constraints.iter_mut() {
        if let Constraint::ClientExecutableCap { limit } = c {
            *limit = f64::INFINITY;
        }
    }
    let free = saturation_oracle(&build_network(&validate_config(&cfg).unwrap()), &grid, s.cfg.seed)
        .map_err(|e| e.to_string())?;
    let gain = free / capped - 1.0;
    ensure(
        top.to_string() == "client-executable-cap" && gain >= 0.15,
        format!("top {top}; oracle {capped} with the cap, {free} without (+{:.1}%)", gain * 100.0),
    )
}

/// Confirms min(Poisson(f_req), cap) transactions each second.
pub fn hard_capped(step: &RateStep, seed: u64, cap: f64) -> RunRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series = (0..step.duration_s)
        .map(|t| {
            let lambda = step.f_req * step.ramp_factor(t as f64 + 0.5);
            let n = if lambda > 0.0 { Poisson::new(lambda).unwrap().sample(&mut rng) } else { 0.0 };
            n.min(cap.floor()) as u32
        })
        .collect();
    RunRecord {
        step: *step,
        architecture: Architecture::Fabric,
        nodes: Vec::new(),
        samples: Vec::new(),
        tx_log: Vec::new(),
        f_resp_series: series,
        pool_series: Vec::new(),
        client_home: Vec::new(),
        seed,
    }
}

pub fn random_policy(rng: &mut ChaCha8Rng) -> ControllerPolicy {
    let increment = rng.random_range(100.0..500.0_f64).round();
    ControllerPolicy {
        base_rate: rng.random_range(100.0..400.0_f64).round(),
        increment,
        lag_threshold: rng.random_range(0.02..0.1),
        retries: rng.random_range(0..3),
        restart_fraction: rng.random_range(0.5..0.9),
        increment_shrink: rng.random_range(0.3..0.7),
        resolution_floor: rng.random_range(10.0..50.0_f64).round(),
        max_rounds: 20,
        max_rate: 1e6,
        criterion: PassCriterion::MeanOfWindow,
    }
}

/// Controller against 20 random hard caps with random policies.
pub fn check_controller_soundness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = Vec::new();
    for i in 0..20 {
        let cap = rng.random_range(500.0..5000.0_f64).round();
        let policy = random_policy(&mut rng);
        let sut = |s: &RateStep, seed: u64| hard_capped(s, seed, cap);
        let res = run_localization_with_step(&sut, &policy, RateStep::default(), i).map_err(|e| format!("T={cap}: {e}"))?;
        let inc = res.final_increment().ok_or("no rounds")?;
        let got = res.max_sustained_rate;
        if !(got <= cap && got >= cap - inc) {
            worst.push(format!("T={cap} got {got} (final increment {inc})"));
        }
    }
    let sim = check_controller_vs_oracle()?;
    ensure(worst.is_empty(), format!("20 hard caps: {} outside [T - final increment, T] {worst:?}; {sim}", worst.len()))
}

/// Controller on simulated networks with a stage-rate cap T. The oracle
/// must confirm T binds: at 95 % it passes rates up to T / 0.95.
pub fn check_controller_vs_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xca9);
    let mut lines = Vec::new();
    for _ in 0..3 {
        let t = rng.random_range(500.0..1400.0_f64).round();
        let mut cfg = ExperimentConfig::default_for(Architecture::Fabric);
        cfg.constraints.push(Constraint::StageRateCap { stage: StageKind::ClientSubmit, rate: t });
        let net = build_network(&validate_config(&cfg).unwrap());
        let grid_step = 10.0;
        let grid: Vec<f64> = (0..=80).map(|i| (0.8 * t).floor() + i as f64 * grid_step).collect();
        let oracle = saturation_oracle(&net, &grid, cfg.seed).map_err(|e| e.to_string())?;
        let policy = ControllerPolicy { base_rate: 200.0, ..ControllerPolicy::default_for(Architecture::Fabric) };
        let sut = |s: &RateStep, seed: u64| run_step(&net, s, seed);
        let res = run_localization_with_step(&sut, &policy, cfg.step, cfg.seed).map_err(|e| e.to_string())?;
        let inc = res.final_increment().unwrap_or(f64::NAN);
        let got = res.max_sustained_rate;
        let binding = oracle >= t && oracle <= t / 0.95 + grid_step;
        let ok = binding && got <= t && got >= t - inc;
        lines.push(format!("cap {t}: oracle {oracle}, controller {got} (increment {inc}){}", if ok { "" } else { " MISMATCH" }));
        if !ok {
            return Err(lines.join("; "));
        }
    }
    Ok(lines.join("; "))
}

/// Two-segment curve with its breakpoint at grid index `k`.
pub fn two_segment(n: usize, k: usize, slope: f64, ratio: f64, offset: f64, step: f64) -> Vec<(f64, f64)> {
    let kx = (k + 1) as f64 * step;
    (1..=n)
        .map(|i| {
            let x = i as f64 * step;
            let y = if x <= kx { offset + slope * x } else { offset + slope * kx + ratio * slope * (x - kx) };
            (x, y)
        })
        .collect()
}

pub fn check_knee_recovery() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b6e);
    let mut exact = 0;
    let mut close = 0;
    let cases = 50;
    for _ in 0..cases {
        let n = rng.random_range(10..=30);
        let k = rng.random_range(2..=n - 4);
        let step = [50.0, 100.0, 200.0][rng.random_range(0..3)];
        let slope = rng.random_range(0.01..5.0);
        let ratio = rng.random_range(0.0..0.1);
        let offset = rng.random_range(0.0..100.0);
        let curve = two_segment(n, k, slope, ratio, offset, step);
        let truth = curve[k].0;
        if detect_knee(&curve).map_err(|e| e.to_string())?.knee_x == Some(truth) {
            exact += 1;
        }
        let noise = Normal::new(0.0, 0.01).unwrap();
        let noisy: Vec<(f64, f64)> = curve.iter().map(|&(x, y)| (x, y * (1.0 + noise.sample(&mut rng)))).collect();
        if detect_knee(&noisy).map_err(|e| e.to_string())?.knee_x.is_some_and(|x| (x - truth).abs() <= step + 1e-9) {
            close += 1;
        }
    }
    ensure(
        exact == cases && close * 10 >= cases * 9,
        format!("noiseless exact {exact}/{cases}, 1% noise within one step {close}/{cases}"),
    )
}

/// Smallest stage-rate cap that still puts S below the natural bottleneck.
pub fn injection_rate(arch: Architecture) -> f64 {
    match arch {
        Architecture::Fabric => 800.0,
        Architecture::Quorum => 1000.0,
    }
}

pub fn injection_config(arch: Architecture, stage: StageKind) -> ExperimentConfig {
    let mut cfg = without_caps(ExperimentConfig::default_for(arch));
    cfg.constraints.push(Constraint::StageRateCap { stage, rate: injection_rate(arch) });
    cfg
}

pub fn graph_stages(arch: Architecture) -> Vec<StageKind> {
    let cfg = ExperimentConfig::default_for(arch);
    build_network(&validate_config(&cfg).unwrap()).graph().stages.iter().map(|s| s.kind).collect()
}

/// Injects a stage-rate cap into every stage of `arch` and localizes.
pub fn injection_misses(arch: Architecture) -> Result<(usize, Vec<String>), String> {
    let stages = graph_stages(arch);
    let mut misses = Vec::new();
    for &stage in &stages {
        let s = Sweep::run(injection_config(arch, stage));
        tx_conserved(&s.records)?;
        let top = s.report.top();
        if top != Some(CandidateId::Stage(stage)) {
            misses.push(format!("{stage} -> {}", top.map(|t| t.to_string()).unwrap_or_else(|| "none".into())));
        }
    }
    Ok((stages.len(), misses))
}

pub fn check_injection() -> Check {
    let mut parts = Vec::new();
    let mut all = Vec::new();
    for arch in [Architecture::Fabric, Architecture::Quorum] {
        let (n, misses) = injection_misses(arch)?;
        parts.push(format!("{arch}: {}/{n} stages top-ranked", n - misses.len()));
        all.extend(misses);
    }
    ensure(all.is_empty(), format!("{} [{}]", parts.join(", "), all.join(", ")))
}

pub fn tx_conserved(records: &[RunRecord]) -> Result<(), String> {
    for r in records {
        let settled =
            r.count(TxOutcome::Confirmed) + r.count(TxOutcome::Rejected) + r.count(TxOutcome::PendingAtEnd);
        if settled != r.tx_log.len() {
            return Err(format!("rate {}: {settled} outcomes for {} submitted", r.step.f_req, r.tx_log.len()));
        }
        let confirmed: u64 = r.f_resp_series.iter().map(|&c| c as u64).sum();
        if confirmed != r.count(TxOutcome::Confirmed) as u64 {
            return Err(format!("rate {}: f_resp sums to {confirmed}, log has {}", r.step.f_req, r.count(TxOutcome::Confirmed)));
        }
    }
    Ok(())
}

pub fn cores_bounded(records: &[RunRecord]) -> Result<(), String> {
    for r in records {
        for s in &r.samples {
            if let Some(u) = s.cpu_per_core.iter().find(|u| !(0.0..=1.0).contains(*u)) {
                return Err(format!("rate {}: {} core at {u} (t={})", r.step.f_req, s.node_id, s.t));
            }
        }
    }
    Ok(())
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(Config { cases, failure_persistence: None, ..Config::default() }, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

pub fn brute_rolling(series: &[(f64, f64)], w: usize) -> Vec<(f64, f64)> {
    let n = series.len() as isize;
    let (back, fwd) = ((w as isize - 1) / 2, w as isize / 2);
    (0..n)
        .map(|i| {
            let lo = (i - back).max(0);
            let hi = (i + fwd).min(n - 1);
            let vals: Vec<f64> = (lo..=hi).map(|j| series[j as usize].1).collect();
            (series[i as usize].0, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

pub fn rolling_case() -> impl Strategy<Value = (Vec<(f64, f64)>, usize)> {
    (prop::collection::vec(-1e4..1e4_f64, 1..120), 1usize..20).prop_map(|(ys, w)| {
        (ys.into_iter().enumerate().map(|(i, y)| (i as f64, y)).collect(), w)
    })
}

pub fn frame_strategy() -> impl Strategy<Value = MetricsFrame> {
    let metric = prop_oneof![
        (0u16..16).prop_map(MetricName::CpuCore),
        Just(MetricName::CpuMean),
        Just(MetricName::NetIn),
        Just(MetricName::NetOut),
        Just(MetricName::Mem),
        Just(MetricName::Disk),
        Just(MetricName::FResp),
    ];
    let role = prop_oneof![Just(Role::Client), Just(Role::Peer), Just(Role::Orderer)];
    let row = (0u32..8, 0u32..30, 0usize..6, role, metric, any::<f64>().prop_filter("finite", |v| v.is_finite()));
    prop::collection::vec(row, 1..200).prop_map(|rows| {
        let rows: Vec<MetricRow> = rows
            .into_iter()
            .map(|(step, t, node, role, metric, value)| MetricRow {
                step_f_req: 100.0 * step as f64 + 0.5 * (step % 2) as f64,
                t,
                node_id: format!("{}{node}", role.id_prefix()),
                role,
                metric,
                value,
            })
            .collect();
        let mut seen = std::collections::HashSet::new();
        let rows = rows
            .into_iter()
            .filter(|r| seen.insert((r.step_f_req.to_bits(), r.t, r.node_id.clone(), r.metric.name())))
            .collect();
        MetricsFrame::new(rows, Vec::new()).expect("deduplicated")
    })
}

pub fn check_oracles() -> Check {
    let mut parts = Vec::new();
    let mut r = runner(100);
    r.run(&rolling_case(), |(s, w)| {
        let got = rolling_mean(&s, w).unwrap();
        let want = brute_rolling(&s, w);
        prop_assert_eq!(got.len(), want.len());
        for (g, e) in got.iter().zip(&want) {
            prop_assert!(g.0 == e.0 && (g.1 - e.1).abs() <= 1e-9 * (1.0 + e.1.abs()), "{:?} vs {:?}", g, e);
        }
        Ok(())
    })
    .map_err(|e| format!("rolling_mean: {e}"))?;
    parts.push("rolling_mean matches brute force on 100 cases".to_string());

    let mut r = runner(100);
    r.run(&frame_strategy(), |f| {
        let back = parse_csv(&frame_to_csv_string(&f)).unwrap();
        prop_assert_eq!(back, f);
        Ok(())
    })
    .map_err(|e| format!("CSV round-trip: {e}"))?;
    parts.push("CSV round-trip identity on 100 frames".to_string());

    let mut n = 0;
    for s in [fabric(), quorum()] {
        tx_conserved(&s.records)?;
        cores_bounded(&s.records)?;
        n += s.records.len();
    }
    parts.push(format!("tx conservation and per-core <= 1 on {n} simulated runs"));
    Ok(parts.join("; "))
}

pub fn check_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for arch in [Architecture::Fabric, Architecture::Quorum] {
        let cfg = ExperimentConfig::default_for(arch);
        let (a, b) = (dir.path().join(format!("{arch}-a")), dir.path().join(format!("{arch}-b")));
        let ra = cmd_run(&cfg, &a, None).map_err(|e| e.to_string())?;
        let rb = cmd_run(&cfg, &b, None).map_err(|e| e.to_string())?;
        let read = |p: &std::path::Path| std::fs::read(p).map_err(|e| e.to_string());
        let csv_same = read(ra.csv.as_ref().unwrap())? == read(rb.csv.as_ref().unwrap())?;
        let md_same = read(&ra.report)? == read(&rb.report)?;
        if !(csv_same && md_same) {
            return Err(format!("{arch}: csv identical {csv_same}, report identical {md_same}"));
        }
        lines.push(format!("{arch} csv and report.md byte-identical"));
    }
    Ok(lines.join(", "))
}
