//! Long-format metric frames and their CSV form.
//!
//! A frame holds one row per (rate step, node, second, metric). The CSV
//! file starts with a `# schema_version: 1` line, optionally followed by a
//! `# step_durations:` line, then the header and the rows.

use crate::model::{Architecture, Role, RunRecord, TxOutcome};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const COLUMNS: [&str; 6] = ["step_f_req", "t", "node_id", "role", "metric_name", "metric_value"];
const VERSION_PREFIX: &str = "# schema_version: ";
const DURATIONS_PREFIX: &str = "# step_durations: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricName {
    CpuCore(u16),
    CpuMean,
    NetIn,
    NetOut,
    Mem,
    Disk,
    FResp,
    Rejected,
    PoolExec,
    PoolNonexec,
}

impl MetricName {
    pub const SCALARS: [MetricName; 9] = [
        MetricName::CpuMean,
        MetricName::NetIn,
        MetricName::NetOut,
        MetricName::Mem,
        MetricName::Disk,
        MetricName::FResp,
        MetricName::Rejected,
        MetricName::PoolExec,
        MetricName::PoolNonexec,
    ];

    pub fn name(&self) -> String {
        match self {
            MetricName::CpuCore(k) => format!("cpu_core_{k}"),
            other => other.scalar_name().to_string(),
        }
    }

    fn scalar_name(&self) -> &'static str {
        match self {
            MetricName::CpuCore(_) => "cpu_core",
            MetricName::CpuMean => "cpu_mean",
            MetricName::NetIn => "net_in",
            MetricName::NetOut => "net_out",
            MetricName::Mem => "mem",
            MetricName::Disk => "disk",
            MetricName::FResp => "f_resp",
            MetricName::Rejected => "rejected",
            MetricName::PoolExec => "pool_exec",
            MetricName::PoolNonexec => "pool_nonexec",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for MetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(k) = s.strip_prefix("cpu_core_") {
            // reject leading zeros and signs so names stay canonical
            if !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()) && (k == "0" || !k.starts_with('0')) {
                return k.parse().map(MetricName::CpuCore).map_err(|_| format!("unknown metric `{s}`"));
            }
            return Err(format!("unknown metric `{s}`"));
        }
        MetricName::SCALARS
            .into_iter()
            .find(|m| m.scalar_name() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// Metrics sort by their CSV name.
impl Ord for MetricName {
    fn cmp(&self, other: &Self) -> Ordering {
        self.name().cmp(&other.name())
    }
}

impl PartialOrd for MetricName {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub step_f_req: f64,
    pub t: u32,
    pub node_id: String,
    pub role: Role,
    pub metric: MetricName,
    pub value: f64,
}

impl MetricRow {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.step_f_req
            .total_cmp(&other.step_f_req)
            .then_with(|| self.node_id.cmp(&other.node_id))
            .then_with(|| self.t.cmp(&other.t))
            .then_with(|| self.metric.cmp(&other.metric))
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no run records to write")]
    NoRecords,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("duplicate key ({key}) on lines {first} and {second}")]
    DuplicateKey { key: String, first: u64, second: u64 },
    #[error("duplicate row for key ({0})")]
    DuplicateRow(String),
    #[error("trim of {head}+{tail} s leaves no seconds in the {duration} s step at rate {rate}")]
    EmptyWindow { rate: f64, duration: u32, head: u32, tail: u32 },
    #[error("selection matches no rows")]
    EmptySelection,
    #[error("aggregate `none` needs one row per x value, found several at x = {0}")]
    AmbiguousSelection(f64),
    #[error("a time axis needs exactly one rate step, selection spans {0}")]
    MultipleSteps(usize),
}

impl MetricsError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        MetricsError::Io { path: path.to_path_buf(), source }
    }
}

/// Rows sorted by (step_f_req, node_id, t, metric_name) plus each step's
/// full duration, which trimming is measured against.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsFrame {
    rows: Vec<MetricRow>,
    durations: Vec<(f64, u32)>,
}

impl MetricsFrame {
    /// Builds a frame, sorting rows. Fails on duplicate keys. Steps missing
    /// from `durations` get one inferred from their largest t.
    pub fn new(mut rows: Vec<MetricRow>, durations: Vec<(f64, u32)>) -> Result<Self, MetricsError> {
        rows.sort_by(MetricRow::cmp_key);
        if let Some(w) = rows.windows(2).find(|w| w[0].cmp_key(&w[1]) == Ordering::Equal) {
            return Err(MetricsError::DuplicateRow(key_string(&w[0])));
        }
        Ok(Self::from_sorted(rows, durations))
    }

    fn from_sorted(rows: Vec<MetricRow>, durations: Vec<(f64, u32)>) -> Self {
        let mut d: Vec<(f64, u32)> = Vec::new();
        for r in &rows {
            match d.iter_mut().find(|(f, _)| *f == r.step_f_req) {
                Some(e) => e.1 = e.1.max(r.t + 1),
                None => d.push((r.step_f_req, r.t + 1)),
            }
        }
        for (f, dur) in durations {
            match d.iter_mut().find(|(g, _)| *g == f) {
                Some(e) => e.1 = dur,
                None => d.push((f, dur)),
            }
        }
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        MetricsFrame { rows, durations: d }
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// (rate, full duration) per step, ascending by rate.
    pub fn durations(&self) -> &[(f64, u32)] {
        &self.durations
    }

    pub fn rates(&self) -> Vec<f64> {
        self.durations.iter().map(|d| d.0).collect()
    }

    /// Node ids with their roles, sorted by id.
    pub fn nodes(&self) -> Vec<(String, Role)> {
        let set: BTreeMap<&str, Role> = self.rows.iter().map(|r| (r.node_id.as_str(), r.role)).collect();
        set.into_iter().map(|(n, r)| (n.to_string(), r)).collect()
    }

    pub fn nodes_with_role(&self, role: Role) -> Vec<String> {
        self.nodes().into_iter().filter(|(_, r)| *r == role).map(|(n, _)| n).collect()
    }

    pub fn architecture(&self) -> Option<Architecture> {
        let roles: BTreeSet<Role> = self.rows.iter().map(|r| r.role).collect();
        if roles.contains(&Role::QuorumNode) {
            Some(Architecture::Quorum)
        } else if roles.contains(&Role::Peer) || roles.contains(&Role::Orderer) {
            Some(Architecture::Fabric)
        } else {
            None
        }
    }

    pub fn has_metric(&self, metric: MetricName) -> bool {
        self.rows.iter().any(|r| r.metric == metric)
    }

    /// Number of per-core metrics found for a node.
    pub fn n_cores(&self, node_id: &str) -> usize {
        self.rows
            .iter()
            .filter_map(|r| match r.metric {
                MetricName::CpuCore(k) if r.node_id == node_id => Some(k as usize + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }
}

fn key_string(r: &MetricRow) -> String {
    format!("{},{},{},{}", r.step_f_req, r.node_id, r.t, r.metric)
}

/// Flattens run records into a frame.
pub fn frame_from_records(records: &[RunRecord]) -> Result<MetricsFrame, MetricsError> {
    let mut rows = Vec::new();
    let mut durations = Vec::new();
    for rec in records {
        let f = rec.step.f_req;
        durations.push((f, rec.step.duration_s));
        let quorum = rec.architecture == Architecture::Quorum;
        let n_secs = rec.step.duration_s as usize;
        let client_index: BTreeMap<&str, usize> = rec
            .nodes
            .iter()
            .filter(|n| n.role == Role::Client)
            .enumerate()
            .map(|(i, n)| (n.node_id.as_str(), i))
            .collect();
        // confirmations and rejections per client per second
        let mut settled = vec![[vec![0u32; n_secs], vec![0u32; n_secs]]; client_index.len()];
        for ev in &rec.tx_log {
            let Some(s) = ev.t_settle else { continue };
            let sec = s.floor() as usize;
            let slot = match ev.outcome {
                TxOutcome::Confirmed => 0,
                TxOutcome::Rejected => 1,
                TxOutcome::PendingAtEnd => continue,
            };
            if let Some(c) = settled.get_mut(ev.client_id as usize) {
                if sec < n_secs {
                    c[slot][sec] += 1;
                }
            }
        }
        let homed = |node: &str, slot: usize, t: usize| -> u32 {
            rec.client_home
                .iter()
                .enumerate()
                .filter(|(_, h)| h.as_str() == node)
                .filter_map(|(c, _)| settled.get(c))
                .map(|c| c[slot][t])
                .sum()
        };
        for s in &rec.samples {
            let Some(node) = rec.node(&s.node_id) else { continue };
            let t = s.t as usize;
            let mut push = |metric, value| {
                rows.push(MetricRow { step_f_req: f, t: s.t, node_id: s.node_id.clone(), role: node.role, metric, value })
            };
            for (k, &c) in s.cpu_per_core.iter().enumerate() {
                push(MetricName::CpuCore(k as u16), c);
            }
            push(MetricName::CpuMean, s.cpu_mean());
            push(MetricName::NetIn, s.net_in);
            push(MetricName::NetOut, s.net_out);
            push(MetricName::Mem, s.mem_used);
            push(MetricName::Disk, s.disk_util);
            let (confirmed, rejected) = match client_index.get(s.node_id.as_str()) {
                Some(&c) => (settled[c][0].get(t).copied().unwrap_or(0), settled[c][1].get(t).copied().unwrap_or(0)),
                None if t < n_secs => (homed(&s.node_id, 0, t), homed(&s.node_id, 1, t)),
                None => (0, 0),
            };
            push(MetricName::FResp, confirmed as f64);
            if quorum {
                push(MetricName::Rejected, rejected as f64);
                let pool = rec.pool_series.iter().find(|p| p.t == s.t);
                let (exec, nonexec) = match (client_index.get(s.node_id.as_str()), pool) {
                    (Some(&c), Some(p)) => (
                        p.per_client_exec.get(c).copied().unwrap_or(0),
                        p.per_client_nonexec.get(c).copied().unwrap_or(0),
                    ),
                    (None, Some(p)) => (p.cumulative_exec, p.cumulative_nonexec),
                    (_, None) => (0, 0),
                };
                push(MetricName::PoolExec, exec as f64);
                push(MetricName::PoolNonexec, nonexec as f64);
            }
        }
    }
    MetricsFrame::new(rows, durations)
}

/// Flattens the records and writes them as CSV.
pub fn write_csv(records: &[RunRecord], path: &Path) -> Result<MetricsFrame, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    let frame = frame_from_records(records)?;
    write_frame(&frame, path)?;
    Ok(frame)
}

pub fn frame_to_csv_string(frame: &MetricsFrame) -> String {
    let d: Vec<String> = frame.durations.iter().map(|(f, d)| format!("{f}={d}")).collect();
    let preamble = format!("{VERSION_PREFIX}{SCHEMA_VERSION}\n{DURATIONS_PREFIX}{}\n", d.join(","));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(preamble.into_bytes());
    let io = "writing to memory cannot fail";
    w.write_record(COLUMNS).expect(io);
    for r in &frame.rows {
        let fields = [r.step_f_req.to_string(), r.t.to_string(), r.node_id.clone(), r.role.to_string(), r.metric.name(), r.value.to_string()];
        w.write_record(&fields).expect(io);
    }
    String::from_utf8(w.into_inner().expect(io)).expect("csv output is utf-8")
}

pub fn write_frame(frame: &MetricsFrame, path: &Path) -> Result<(), MetricsError> {
    std::fs::write(path, frame_to_csv_string(frame)).map_err(|e| MetricsError::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<MetricsFrame, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|e| MetricsError::io(path, e))?;
    parse_csv(&text)
}

fn malformed(line: u64, message: impl Into<String>) -> MetricsError {
    MetricsError::Malformed { line, message: message.into() }
}

pub fn parse_csv(text: &str) -> Result<MetricsFrame, MetricsError> {
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i as u64 + 1, l.strip_suffix('\r').unwrap_or(l)));
    let (_, first) = lines.next().unwrap_or((1, ""));
    let version = first
        .strip_prefix(VERSION_PREFIX)
        .ok_or_else(|| MetricsError::Schema("missing `# schema_version` line".into()))?;
    if version.trim() != SCHEMA_VERSION.to_string() {
        return Err(MetricsError::Schema(format!("unsupported schema version {}", version.trim())));
    }
    let mut durations = Vec::new();
    let mut header = lines.next();
    if let Some((n, l)) = header {
        if let Some(list) = l.strip_prefix(DURATIONS_PREFIX) {
            for item in list.split(',').filter(|s| !s.is_empty()) {
                let (f, d) = item.split_once('=').ok_or_else(|| malformed(n, format!("bad duration entry `{item}`")))?;
                let f: f64 = f.parse().map_err(|_| malformed(n, format!("bad rate `{f}`")))?;
                let d: u32 = d.parse().map_err(|_| malformed(n, format!("bad duration `{d}`")))?;
                durations.push((f, d));
            }
            header = lines.next();
        }
    }
    let (header_line, _) = header.ok_or_else(|| MetricsError::Schema("missing header row".into()))?;
    // the csv reader starts at the header; its line numbers are offset by the preamble
    let offset = header_line - 1;
    let body: String = text.split('\n').skip(offset as usize).collect::<Vec<_>>().join("\n");
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(body.as_bytes());
    let cols: Vec<String> = rdr
        .headers()
        .map_err(|e| MetricsError::Schema(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    for c in COLUMNS {
        if !cols.iter().any(|h| h == c) {
            return Err(MetricsError::Schema(format!("missing column {c}")));
        }
    }
    if let Some(extra) = cols.iter().find(|c| !COLUMNS.contains(&c.as_str())) {
        return Err(MetricsError::Schema(format!("unexpected column {extra}")));
    }
    if cols != COLUMNS {
        return Err(MetricsError::Schema(format!("columns must be in the order {}", COLUMNS.join(","))));
    }

    let mut rows: Vec<(u64, MetricRow)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() + offset).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let n = rec.position().map(|p| p.line() + offset).unwrap_or(0);
        if rec.len() != COLUMNS.len() {
            return Err(malformed(n, format!("expected {} fields, found {}", COLUMNS.len(), rec.len())));
        }
        let fields: Vec<&str> = rec.iter().collect();
        let num = |i: usize| -> Result<f64, MetricsError> {
            let v: f64 = fields[i].parse().map_err(|_| malformed(n, format!("{}: non-numeric value `{}`", COLUMNS[i], fields[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(malformed(n, format!("{}: non-finite value `{}`", COLUMNS[i], fields[i])))
            }
        };
        let step_f_req = num(0)?;
        let t: u32 = fields[1].parse().map_err(|_| malformed(n, format!("t: not a second index `{}`", fields[1])))?;
        if fields[2].is_empty() {
            return Err(malformed(n, "node_id: empty"));
        }
        let role: Role = fields[3].parse().map_err(|e: String| malformed(n, format!("role: {e}")))?;
        let metric: MetricName = fields[4].parse().map_err(|e: String| malformed(n, format!("metric_name: {e}")))?;
        let value = num(5)?;
        rows.push((n, MetricRow { step_f_req, t, node_id: fields[2].to_string(), role, metric, value }));
    }
    rows.sort_by(|a, b| a.1.cmp_key(&b.1).then(a.0.cmp(&b.0)));
    if let Some(w) = rows.windows(2).find(|w| w[0].1.cmp_key(&w[1].1) == Ordering::Equal) {
        return Err(MetricsError::DuplicateKey { key: key_string(&w[0].1), first: w[0].0, second: w[1].0 });
    }
    Ok(MetricsFrame::from_sorted(rows.into_iter().map(|r| r.1).collect(), durations))
}

/// Drops the first `head_s` and last `tail_s` seconds of every step.
pub fn trim_window(frame: &MetricsFrame, head_s: u32, tail_s: u32) -> Result<MetricsFrame, MetricsError> {
    for &(rate, duration) in &frame.durations {
        if head_s + tail_s >= duration {
            return Err(MetricsError::EmptyWindow { rate, duration, head: head_s, tail: tail_s });
        }
    }
    let end = |f: f64| frame.durations.iter().find(|d| d.0 == f).map(|d| d.1).unwrap_or(0) - tail_s;
    let rows = frame.rows.iter().filter(|r| r.t >= head_s && r.t < end(r.step_f_req)).cloned().collect();
    Ok(MetricsFrame { rows, durations: frame.durations.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Mean,
    Max,
    Sum,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XAxis {
    /// One point per step; per-second values are averaged over the step.
    Rate,
    /// One point per second of a single step.
    Time,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selector {
    pub metric: MetricName,
    /// Empty selects every node.
    pub nodes: Vec<String>,
    pub roles: Vec<Role>,
    /// Empty selects every step.
    pub steps: Vec<f64>,
}

impl Selector {
    pub fn metric(metric: MetricName) -> Self {
        Selector { metric, nodes: Vec::new(), roles: Vec::new(), steps: Vec::new() }
    }

    pub fn nodes<S: AsRef<str>>(mut self, nodes: &[S]) -> Self {
        self.nodes = nodes.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn role(mut self, role: Role) -> Self {
        self.roles = vec![role];
        self
    }

    pub fn steps(mut self, steps: &[f64]) -> Self {
        self.steps = steps.to_vec();
        self
    }

    fn matches(&self, r: &MetricRow) -> bool {
        r.metric == self.metric
            && (self.nodes.is_empty() || self.nodes.contains(&r.node_id))
            && (self.roles.is_empty() || self.roles.contains(&r.role))
            && (self.steps.is_empty() || self.steps.contains(&r.step_f_req))
    }
}

fn aggregate(values: &[f64], how: Aggregate, x: f64) -> Result<f64, MetricsError> {
    Ok(match how {
        Aggregate::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregate::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregate::Sum => values.iter().sum(),
        Aggregate::None if values.len() == 1 => values[0],
        Aggregate::None => return Err(MetricsError::AmbiguousSelection(x)),
    })
}

/// Curve of one metric. The aggregate combines the selected nodes within
/// each second; on the rate axis the per-second results are then averaged.
pub fn series(frame: &MetricsFrame, sel: &Selector, how: Aggregate, axis: XAxis) -> Result<Vec<(f64, f64)>, MetricsError> {
    // (step, t) -> values across nodes
    let mut cells: BTreeMap<(u64, u32), Vec<f64>> = BTreeMap::new();
    let mut steps: Vec<f64> = Vec::new();
    for r in frame.rows.iter().filter(|r| sel.matches(r)) {
        let si = match steps.iter().position(|&s| s == r.step_f_req) {
            Some(i) => i,
            None => {
                steps.push(r.step_f_req);
                steps.len() - 1
            }
        };
        cells.entry((si as u64, r.t)).or_default().push(r.value);
    }
    if cells.is_empty() {
        return Err(MetricsError::EmptySelection);
    }
    match axis {
        XAxis::Time => {
            if steps.len() > 1 {
                return Err(MetricsError::MultipleSteps(steps.len()));
            }
            cells.iter().map(|(&(_, t), v)| Ok((t as f64, aggregate(v, how, t as f64)?))).collect()
        }
        XAxis::Rate => {
            let mut per_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            for (&(si, _), v) in &cells {
                let x = steps[si as usize];
                per_step.entry(si).or_default().push(aggregate(v, how, x)?);
            }
            let mut out: Vec<(f64, f64)> = per_step
                .into_iter()
                .map(|(si, ys)| {
                    let x = steps[si as usize];
                    if how == Aggregate::None && ys.len() > 1 {
                        return Err(MetricsError::AmbiguousSelection(x));
                    }
                    Ok((x, ys.iter().sum::<f64>() / ys.len() as f64))
                })
                .collect::<Result<_, _>>()?;
            out.sort_by(|a, b| a.0.total_cmp(&b.0));
            Ok(out)
        }
    }
}

/// Per-second aggregates for every selected step, ascending by rate.
/// Per-step `(rate, [(t, value)])` traces.
pub type StepTraces = Vec<(f64, Vec<(f64, f64)>)>;

pub fn step_traces(frame: &MetricsFrame, sel: &Selector, how: Aggregate) -> Result<StepTraces, MetricsError> {
    let mut out: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    let mut by_step: BTreeMap<u64, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for r in frame.rows.iter().filter(|r| sel.matches(r)) {
        by_step.entry(r.step_f_req.to_bits()).or_default().entry(r.t).or_default().push(r.value);
    }
    for (bits, secs) in by_step {
        let x = f64::from_bits(bits);
        let mut trace = Vec::with_capacity(secs.len());
        for (t, v) in secs {
            trace.push((t as f64, aggregate(&v, how, x)?));
        }
        out.push((x, trace));
    }
    if out.is_empty() {
        return Err(MetricsError::EmptySelection);
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Per-second values of one node and metric within one step.
pub fn node_trace(frame: &MetricsFrame, node: &str, metric: MetricName, step: f64) -> Result<Vec<(f64, f64)>, MetricsError> {
    series(frame, &Selector::metric(metric).nodes(&[node]).steps(&[step]), Aggregate::None, XAxis::Time)
}
