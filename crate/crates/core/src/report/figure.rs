//! Vector figures rendered from metric frames.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use svg::node::element::{Circle, Group, Line, Polyline, Rectangle, Text, Title};
use svg::Document;
use thiserror::Error;

use crate::analysis::{outbound_ratio, rejection_and_pool, rolling_mean, AnalysisError};
use crate::metrics::{series, step_traces, Aggregate, MetricName, MetricsError, MetricsFrame, Selector, XAxis};
use crate::model::{Architecture, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureKind {
    ResourceScatter,
    PerCoreBox,
    PerNodeMean,
    TemporalCoreTrace,
    TrafficInOut,
    RatioCurve,
    RollingThroughput { window_s: usize },
    ThroughputVsResource,
    RejectionCurve,
    PoolOccupancy,
}

impl FigureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FigureKind::ResourceScatter => "resource-scatter",
            FigureKind::PerCoreBox => "per-core-box",
            FigureKind::PerNodeMean => "per-node-mean",
            FigureKind::TemporalCoreTrace => "temporal-core-trace",
            FigureKind::TrafficInOut => "traffic-in-out",
            FigureKind::RatioCurve => "ratio-curve",
            FigureKind::RollingThroughput { .. } => "rolling-throughput",
            FigureKind::ThroughputVsResource => "throughput-vs-resource",
            FigureKind::RejectionCurve => "rejection-curve",
            FigureKind::PoolOccupancy => "pool-occupancy",
        }
    }

    fn quorum_only(self) -> bool {
        matches!(self, FigureKind::RejectionCurve | FigureKind::PoolOccupancy)
    }
}

impl fmt::Display for FigureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One figure: its kind, what it selects and where it goes.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureSpec {
    pub kind: FigureKind,
    pub metric: Option<MetricName>,
    pub role: Option<Role>,
    /// Explicit nodes; for ratio curves the first is the numerator.
    pub nodes: Vec<String>,
    /// Step for per-step figures; the highest rate when absent.
    pub step: Option<f64>,
    pub path: PathBuf,
}

impl FigureSpec {
    pub fn new(kind: FigureKind, path: impl Into<PathBuf>) -> Self {
        FigureSpec { kind, metric: None, role: None, nodes: Vec::new(), step: None, path: path.into() }
    }

    pub fn metric(mut self, m: MetricName) -> Self {
        self.metric = Some(m);
        self
    }

    pub fn role(mut self, r: Role) -> Self {
        self.role = Some(r);
        self
    }

    pub fn nodes<S: AsRef<str>>(mut self, n: &[S]) -> Self {
        self.nodes = n.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn step(mut self, s: f64) -> Self {
        self.step = Some(s);
        self
    }
}

#[derive(Debug, Error)]
pub enum FigureError {
    #[error("{kind} figures need a quorum frame, got {arch}")]
    Incompatible { kind: FigureKind, arch: String },
    #[error("{kind}: {what}")]
    Selector { kind: FigureKind, what: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
    line: bool,
}

struct BoxStat {
    label: String,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
}

struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
    boxes: Vec<BoxStat>,
}

/// Axis label with unit, and the factor turning stored values into it.
fn unit(metric: MetricName) -> (&'static str, f64) {
    match metric {
        MetricName::CpuCore(_) | MetricName::CpuMean => ("CPU (%)", 100.0),
        MetricName::NetIn => ("inbound traffic (MB/s)", 1e-6),
        MetricName::NetOut => ("outbound traffic (MB/s)", 1e-6),
        MetricName::Mem => ("memory (MB)", 1e-6),
        MetricName::Disk => ("disk writes (MB/s)", 1e-6),
        MetricName::FResp => ("throughput (s⁻¹)", 1.0),
        MetricName::Rejected => ("rejected (s⁻¹)", 1.0),
        MetricName::PoolExec => ("executable pool (tx)", 1.0),
        MetricName::PoolNonexec => ("non-executable pool (tx)", 1.0),
    }
}

const RATE_LABEL: &str = "request rate (s⁻¹)";

fn scaled(points: Vec<(f64, f64)>, k: f64) -> Vec<(f64, f64)> {
    points.into_iter().map(|(x, y)| (x, y * k)).collect()
}

fn select_nodes(frame: &MetricsFrame, spec: &FigureSpec) -> Vec<String> {
    if !spec.nodes.is_empty() {
        return spec.nodes.clone();
    }
    match spec.role {
        Some(r) => frame.nodes_with_role(r),
        None => frame.nodes().into_iter().map(|n| n.0).collect(),
    }
}

fn need<T>(v: Option<T>, spec: &FigureSpec, what: &str) -> Result<T, FigureError> {
    v.ok_or_else(|| FigureError::Selector { kind: spec.kind, what: what.to_string() })
}

fn chosen_step(frame: &MetricsFrame, spec: &FigureSpec) -> Result<f64, FigureError> {
    match spec.step {
        Some(s) => Ok(s),
        None => need(frame.rates().last().copied(), spec, "frame has no steps"),
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn build(frame: &MetricsFrame, spec: &FigureSpec) -> Result<Plot, FigureError> {
    let arch = frame.architecture();
    if spec.kind.quorum_only() && arch != Some(Architecture::Quorum) {
        let arch = arch.map(|a| a.to_string()).unwrap_or_else(|| "unknown".into());
        return Err(FigureError::Incompatible { kind: spec.kind, arch });
    }
    let mut plot = Plot {
        title: spec.kind.to_string(),
        x_label: RATE_LABEL.into(),
        y_label: String::new(),
        series: Vec::new(),
        boxes: Vec::new(),
    };
    match spec.kind {
        FigureKind::ResourceScatter | FigureKind::PerNodeMean => {
            let m = need(spec.metric, spec, "metric required")?;
            let (label, k) = unit(m);
            plot.y_label = label.into();
            plot.title = format!("{} {}", spec.kind, m);
            for n in select_nodes(frame, spec) {
                let sel = Selector::metric(m).nodes(&[&n]);
                let points = if spec.kind == FigureKind::ResourceScatter {
                    step_traces(frame, &sel, Aggregate::None)?
                        .into_iter()
                        .flat_map(|(x, tr)| tr.into_iter().map(move |p| (x, p.1)))
                        .collect()
                } else {
                    series(frame, &sel, Aggregate::Mean, XAxis::Rate)?
                };
                plot.series.push(Series { name: n, points: scaled(points, k), line: spec.kind == FigureKind::PerNodeMean });
            }
        }
        FigureKind::PerCoreBox => {
            let step = chosen_step(frame, spec)?;
            let nodes = select_nodes(frame, spec);
            let cores = nodes.iter().map(|n| frame.n_cores(n)).max().unwrap_or(0);
            plot.title = format!("per-core CPU at {step} s⁻¹");
            plot.x_label = "core".into();
            plot.y_label = "CPU (%)".into();
            for c in 0..cores {
                let metric = MetricName::CpuCore(c as u16);
                let mut v: Vec<f64> = frame
                    .rows()
                    .iter()
                    .filter(|r| r.metric == metric && r.step_f_req == step && nodes.contains(&r.node_id))
                    .map(|r| r.value * 100.0)
                    .collect();
                if v.is_empty() {
                    continue;
                }
                v.sort_by(f64::total_cmp);
                plot.boxes.push(BoxStat {
                    label: c.to_string(),
                    min: v[0],
                    q1: quantile(&v, 0.25),
                    median: quantile(&v, 0.5),
                    q3: quantile(&v, 0.75),
                    max: v[v.len() - 1],
                });
            }
        }
        FigureKind::TemporalCoreTrace => {
            let step = chosen_step(frame, spec)?;
            let node = need(select_nodes(frame, spec).into_iter().next(), spec, "node required")?;
            plot.title = format!("per-core CPU of {node} at {step} s⁻¹");
            plot.x_label = "time (s)".into();
            plot.y_label = "CPU (%)".into();
            for c in 0..frame.n_cores(&node) {
                let sel = Selector::metric(MetricName::CpuCore(c as u16)).nodes(&[&node]).steps(&[step]);
                let points = series(frame, &sel, Aggregate::None, XAxis::Time)?;
                plot.series.push(Series { name: format!("core {c}"), points: scaled(points, 100.0), line: true });
            }
        }
        FigureKind::TrafficInOut => {
            let nodes = select_nodes(frame, spec);
            plot.y_label = "traffic (MB/s)".into();
            for (m, name) in [(MetricName::NetIn, "in"), (MetricName::NetOut, "out")] {
                let points = series(frame, &Selector::metric(m).nodes(&nodes), Aggregate::Mean, XAxis::Rate)?;
                plot.series.push(Series { name: name.into(), points: scaled(points, 1e-6), line: true });
            }
        }
        FigureKind::RatioCurve => {
            let (num, den) = need(spec.nodes.split_first(), spec, "numerator and denominator nodes required")?;
            plot.y_label = "outbound ratio".into();
            plot.title = format!("outbound of {num} over {}", den.join(", "));
            plot.series.push(Series { name: "ratio".into(), points: outbound_ratio(frame, num, den)?, line: true });
        }
        FigureKind::RollingThroughput { window_s } => {
            plot.title = format!("throughput, {window_s} s rolling mean");
            plot.x_label = "time (s)".into();
            plot.y_label = "throughput (s⁻¹)".into();
            let sel = Selector::metric(MetricName::FResp).role(Role::Client);
            let mut offset = 0.0;
            let mut points = Vec::new();
            for (_, tr) in step_traces(frame, &sel, Aggregate::Sum)? {
                let n = tr.len() as f64;
                points.extend(rolling_mean(&tr, window_s.max(1))?.into_iter().map(|(t, y)| (offset + t, y)));
                offset += n;
            }
            plot.series.push(Series { name: "f_resp".into(), points, line: window_s > 1 });
        }
        FigureKind::ThroughputVsResource => {
            let m = need(spec.metric, spec, "metric required")?;
            let (label, k) = unit(m);
            plot.title = format!("throughput vs {m}");
            plot.x_label = "throughput (s⁻¹)".into();
            plot.y_label = label.into();
            let nodes = select_nodes(frame, spec);
            let tp = step_traces(frame, &Selector::metric(MetricName::FResp).role(Role::Client), Aggregate::Sum)?;
            let res = step_traces(frame, &Selector::metric(m).nodes(&nodes), Aggregate::Mean)?;
            let mut points = Vec::new();
            for ((_, a), (_, b)) in tp.iter().zip(&res) {
                let a = rolling_mean(a, 3)?;
                let b = rolling_mean(b, 3)?;
                points.extend(a.iter().zip(&b).map(|(p, q)| (p.1, q.1 * k)));
            }
            plot.series.push(Series { name: m.to_string(), points, line: false });
        }
        FigureKind::RejectionCurve => {
            let rp = rejection_and_pool(frame)?;
            plot.y_label = "rejected (%)".into();
            plot.series.push(Series { name: "rejected".into(), points: scaled(rp.rejected_share, 100.0), line: true });
        }
        FigureKind::PoolOccupancy => {
            let rp = rejection_and_pool(frame)?;
            plot.y_label = "transactions".into();
            plot.series.push(Series { name: "client executable max".into(), points: rp.client_exec_max, line: true });
            plot.series.push(Series { name: "cumulative executable".into(), points: rp.pool_exec_max, line: true });
        }
    }
    Ok(plot)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let lo = lo.min(0.0);
    if hi <= lo { (lo, lo + 1.0) } else { (lo, hi) }
}

fn text(x: f64, y: f64, s: &str, anchor: &str) -> Text {
    Text::new(s).set("x", fmt_num(x)).set("y", fmt_num(y)).set("font-size", 11).set("text-anchor", anchor)
}

fn render(plot: &Plot) -> String {
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let (x0, x1) = if plot.boxes.is_empty() {
        bounds(plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)))
    } else {
        (-0.5, plot.boxes.len() as f64 - 0.5)
    };
    let (y0, y1) = bounds(
        plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).chain(plot.boxes.iter().map(|b| b.max)),
    );
    let sx = move |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = move |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut axes = Group::new().set("stroke", "black").set("stroke-width", 1);
    axes = axes
        .add(Line::new().set("x1", LEFT).set("y1", TOP + ph).set("x2", LEFT + pw).set("y2", TOP + ph))
        .add(Line::new().set("x1", LEFT).set("y1", TOP).set("x2", LEFT).set("y2", TOP + ph));
    let mut labels = Group::new().set("font-family", "sans-serif");
    labels = labels
        .add(text(W / 2.0, 20.0, &plot.title, "middle").set("font-size", 14))
        .add(text(LEFT + pw / 2.0, H - 10.0, &plot.x_label, "middle"))
        .add(text(15.0, TOP + ph / 2.0, &plot.y_label, "middle").set("transform", format!("rotate(-90 15 {})", fmt_num(TOP + ph / 2.0))));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let yv = y0 + f * (y1 - y0);
        labels = labels.add(text(LEFT - 6.0, sy(yv) + 4.0, &fmt_num(yv), "end"));
        axes = axes.add(Line::new().set("x1", LEFT - 4.0).set("y1", fmt_num(sy(yv))).set("x2", LEFT).set("y2", fmt_num(sy(yv))));
        if plot.boxes.is_empty() {
            let xv = x0 + f * (x1 - x0);
            labels = labels.add(text(sx(xv), TOP + ph + 16.0, &fmt_num(xv), "middle"));
        }
    }

    let mut data = Group::new().set("fill", "none");
    for (i, b) in plot.boxes.iter().enumerate() {
        let cx = sx(i as f64);
        let half = pw / plot.boxes.len() as f64 * 0.3;
        let g = Group::new()
            .set("stroke", PALETTE[0])
            .add(Title::new(format!("core {}", b.label)))
            .add(Line::new().set("x1", fmt_num(cx)).set("y1", fmt_num(sy(b.min))).set("x2", fmt_num(cx)).set("y2", fmt_num(sy(b.max))))
            .add(
                Rectangle::new()
                    .set("x", fmt_num(cx - half))
                    .set("y", fmt_num(sy(b.q3)))
                    .set("width", fmt_num(2.0 * half))
                    .set("height", fmt_num((sy(b.q1) - sy(b.q3)).max(0.5)))
                    .set("fill", "white"),
            )
            .add(Line::new().set("x1", fmt_num(cx - half)).set("y1", fmt_num(sy(b.median))).set("x2", fmt_num(cx + half)).set("y2", fmt_num(sy(b.median))));
        data = data.add(g);
        if i % 2 == 0 || plot.boxes.len() <= 8 {
            labels = labels.add(text(cx, TOP + ph + 16.0, &b.label, "middle"));
        }
    }
    for (i, s) in plot.series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let mut g = Group::new().set("stroke", colour).add(Title::new(s.name.as_str()));
        if s.line {
            let pts: Vec<String> = s.points.iter().map(|p| format!("{},{}", fmt_num(sx(p.0)), fmt_num(sy(p.1)))).collect();
            g = g.add(Polyline::new().set("points", pts.join(" ")));
        } else {
            for p in &s.points {
                g = g.add(Circle::new().set("cx", fmt_num(sx(p.0))).set("cy", fmt_num(sy(p.1))).set("r", 2).set("fill", colour));
            }
        }
        data = data.add(g);
        let ly = TOP + 14.0 * i as f64;
        if i < 20 {
            labels = labels
                .add(Rectangle::new().set("x", LEFT + pw + 10.0).set("y", fmt_num(ly)).set("width", 10).set("height", 10).set("fill", colour))
                .add(text(LEFT + pw + 24.0, ly + 9.0, &s.name, "start"));
        }
    }
    Document::new()
        .set("xmlns", "http://www.w3.org/2000/svg")
        .set("viewBox", (0, 0, W, H))
        .set("width", W)
        .set("height", H)
        .add(Rectangle::new().set("width", "100%").set("height", "100%").set("fill", "white"))
        .add(axes)
        .add(data)
        .add(labels)
        .to_string()
}

/// SVG text of a figure.
pub fn render_figure(frame: &MetricsFrame, spec: &FigureSpec) -> Result<String, FigureError> {
    Ok(render(&build(frame, spec)?))
}

/// Renders a figure to `spec.path`.
pub fn emit_figure(frame: &MetricsFrame, spec: &FigureSpec) -> Result<PathBuf, FigureError> {
    let svg = render_figure(frame, spec)?;
    std::fs::write(&spec.path, svg).map_err(|source| FigureError::Io { path: spec.path.clone(), source })?;
    Ok(spec.path.clone())
}

/// The standard figure set of an architecture, written under `dir`.
pub fn default_figures(frame: &MetricsFrame, arch: Architecture, dir: &Path) -> Vec<FigureSpec> {
    let p = |name: &str| dir.join(format!("{name}.svg"));
    let mut v = Vec::new();
    let server = match arch {
        Architecture::Fabric => Role::Peer,
        Architecture::Quorum => Role::QuorumNode,
    };
    v.push(FigureSpec::new(FigureKind::ResourceScatter, p("cpu-scatter")).metric(MetricName::CpuMean).role(server));
    v.push(FigureSpec::new(FigureKind::PerCoreBox, p("per-core-box")).role(server));
    v.push(FigureSpec::new(FigureKind::PerNodeMean, p("cpu-per-node")).metric(MetricName::CpuMean).role(server));
    v.push(FigureSpec::new(FigureKind::PerNodeMean, p("mem-per-node")).metric(MetricName::Mem).role(server));
    v.push(FigureSpec::new(FigureKind::PerNodeMean, p("disk-per-node")).metric(MetricName::Disk).role(server));
    v.push(FigureSpec::new(FigureKind::PerNodeMean, p("net-out-per-node")).metric(MetricName::NetOut).role(server));
    if let Some(first) = frame.nodes_with_role(server).first() {
        v.push(FigureSpec::new(FigureKind::TemporalCoreTrace, p("core-trace")).nodes(&[first]));
    }
    v.push(FigureSpec::new(FigureKind::TrafficInOut, p("client-traffic")).role(Role::Client));
    for w in [1, 3, 8, 15] {
        v.push(FigureSpec::new(FigureKind::RollingThroughput { window_s: w }, p(&format!("throughput-rolling-{w}s"))));
    }
    v.push(FigureSpec::new(FigureKind::ThroughputVsResource, p("throughput-vs-cpu")).metric(MetricName::CpuMean).role(server));
    v.push(FigureSpec::new(FigureKind::ThroughputVsResource, p("throughput-vs-net-out")).metric(MetricName::NetOut).role(server));
    match arch {
        Architecture::Fabric => {
            v.push(FigureSpec::new(FigureKind::PerNodeMean, p("orderer-net-out")).metric(MetricName::NetOut).role(Role::Orderer));
            if let Ok(followers) = crate::analysis::follower_orderers(frame) {
                let mut leader: Vec<String> = frame.nodes_with_role(Role::Orderer);
                leader.retain(|n| !followers.contains(n));
                if let Some(l) = leader.first() {
                    let mut nodes = vec![l.clone()];
                    nodes.extend(followers);
                    v.push(FigureSpec::new(FigureKind::RatioCurve, p("orderer-ratio")).nodes(&nodes));
                }
            }
        }
        Architecture::Quorum => {
            v.push(FigureSpec::new(FigureKind::RejectionCurve, p("rejections")));
            v.push(FigureSpec::new(FigureKind::PoolOccupancy, p("pool-occupancy")));
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fixture;

    const RATES: [f64; 6] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0];

    fn frame(arch: Architecture) -> MetricsFrame {
        let g = fixture::graph(arch);
        fixture::frame(&g, &RATES, 4, |n, m, r, t| match m {
            MetricName::NetOut if n == "orderer0" => 4000.0 * r,
            MetricName::NetOut => 1000.0 * r,
            MetricName::CpuCore(k) => (r / 1000.0 + k as f64 / 100.0 + t as f64 / 1000.0).min(1.0),
            _ => r,
        })
    }

    #[test]
    fn pool_occupancy_rejects_fabric() {
        let f = frame(Architecture::Fabric);
        let err = render_figure(&f, &FigureSpec::new(FigureKind::PoolOccupancy, "x.svg")).unwrap_err();
        assert!(matches!(err, FigureError::Incompatible { .. }));
    }

    #[test]
    fn output_is_deterministic_and_labelled() {
        let f = frame(Architecture::Fabric);
        let spec = FigureSpec::new(FigureKind::PerNodeMean, "x.svg").metric(MetricName::CpuMean).role(Role::Peer);
        let a = render_figure(&f, &spec).unwrap();
        assert_eq!(a, render_figure(&f, &spec).unwrap());
        assert!(a.starts_with("<svg"));
        assert!(a.contains("CPU (%)") && a.contains("request rate (s⁻¹)"));
    }

    #[test]
    fn ratio_curve_of_leader_over_followers() {
        let f = frame(Architecture::Fabric);
        let spec = FigureSpec::new(FigureKind::RatioCurve, "r.svg").nodes(&["orderer0", "orderer1", "orderer2"]);
        let plot = build(&f, &spec).unwrap();
        assert!(plot.series[0].points.iter().all(|p| (p.1 - 4.0).abs() < 1e-12));
    }

    #[test]
    fn rolling_window_one_keeps_every_point() {
        let f = frame(Architecture::Fabric);
        let plot = build(&f, &FigureSpec::new(FigureKind::RollingThroughput { window_s: 1 }, "t.svg")).unwrap();
        assert_eq!(plot.series[0].points.len(), RATES.len() * 4);
        assert!(!plot.series[0].line);
    }

    #[test]
    fn per_core_box_has_one_box_per_core() {
        let f = frame(Architecture::Quorum);
        let plot = build(&f, &FigureSpec::new(FigureKind::PerCoreBox, "b.svg").role(Role::QuorumNode)).unwrap();
        assert_eq!(plot.boxes.len(), 16);
        assert!(plot.boxes.iter().all(|b| b.min <= b.q1 && b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max));
    }

    #[test]
    fn default_sets_render() {
        let dir = tempfile::tempdir().unwrap();
        for arch in [Architecture::Fabric, Architecture::Quorum] {
            let f = frame(arch);
            for spec in default_figures(&f, arch, dir.path()) {
                emit_figure(&f, &spec).unwrap_or_else(|e| panic!("{}: {e}", spec.kind));
                assert!(spec.path.exists());
            }
        }
    }
}
