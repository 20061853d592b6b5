//! Figures, markdown reports and the end-to-end pipeline behind the CLI.

mod figure;
mod pipeline;

pub use figure::{default_figures, emit_figure, render_figure, FigureError, FigureKind, FigureSpec};
pub use pipeline::{
    cmd_analyze, cmd_bench, cmd_report, cmd_run, cmd_simulate, CliError, RunOutput, BENCH_NAME, CSV_NAME, REPORT_NAME,
};

use std::fmt::Write;

use crate::analysis::{
    classify_all, localize_bottleneck, rejection_and_pool, throughput_signal, AnalysisError, BottleneckReport,
    RejectionPool, Signal,
};
use crate::metrics::MetricsFrame;
use crate::model::Architecture;
use crate::netsim::{Constraint, StageGraph};

/// Everything the report is rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub architecture: Architecture,
    pub rates: Vec<f64>,
    pub signals: Vec<Signal>,
    pub bottleneck: BottleneckReport,
    pub rejections: Option<RejectionPool>,
}

impl Analysis {
    pub fn signal(&self, id: &str) -> Option<&Signal> {
        self.signals.iter().find(|s| s.id() == id)
    }
}

/// Classifies a trimmed frame and localizes its bottleneck.
pub fn analyze_frame(frame: &MetricsFrame, graph: &StageGraph, caps: &[Constraint]) -> Result<Analysis, AnalysisError> {
    let signals = classify_all(frame, graph)?;
    let tp = throughput_signal(&signals)
        .ok_or_else(|| AnalysisError::MetricsAbsent("client throughput".into()))?
        .classification;
    let bottleneck = localize_bottleneck(graph, caps, &signals, &tp)?;
    let rejections = match graph.architecture {
        Architecture::Quorum => Some(rejection_and_pool(frame)?),
        Architecture::Fabric => None,
    };
    Ok(Analysis { architecture: graph.architecture, rates: frame.rates(), signals, bottleneck, rejections })
}

fn num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e12 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "-".into())
}

fn last(curve: &[(f64, f64)]) -> Option<f64> {
    curve.last().map(|p| p.1)
}

/// The markdown report: summary, trends, exclusions, ranking.
pub fn render_markdown(a: &Analysis) -> String {
    let mut s = String::new();
    let b = &a.bottleneck;
    let _ = writeln!(s, "# Bottleneck report\n");
    let _ = writeln!(s, "## Summary\n");
    let _ = writeln!(s, "| item | value |\n|---|---|");
    let _ = writeln!(s, "| architecture | {} |", a.architecture);
    let (lo, hi) = (a.rates.first().copied().unwrap_or(0.0), a.rates.last().copied().unwrap_or(0.0));
    let _ = writeln!(s, "| rate steps | {} ({} to {} s⁻¹) |", a.rates.len(), num(lo), num(hi));
    let _ = writeln!(s, "| throughput trend | {} |", b.throughput.trend);
    let _ = writeln!(s, "| throughput knee (s⁻¹) | {} |", opt(b.throughput.knee_x));
    if let Some(tp) = throughput_signal(&a.signals) {
        let peak = tp.curve.iter().map(|p| p.1).fold(0.0, f64::max);
        let _ = writeln!(s, "| peak mean throughput (s⁻¹) | {peak:.1} |");
    }
    let top = b.top().map(|c| c.to_string()).unwrap_or_else(|| "none".into());
    let _ = writeln!(s, "| top candidate | {top} |");
    if let Some(r) = &a.rejections {
        let share = last(&r.rejected_share).unwrap_or(0.0) * 100.0;
        let _ = writeln!(s, "| rejected at top rate (%) | {:.1} |", share);
        let exec = r.client_exec_max.iter().map(|p| p.1).fold(0.0, f64::max);
        let pool = r.pool_exec_max.iter().map(|p| p.1).fold(0.0, f64::max);
        let _ = writeln!(s, "| per-client executable max | {} |", num(exec));
        let _ = writeln!(s, "| cumulative executable max | {} |", num(pool));
    }
    let _ = writeln!(s, "| verdict | {} |", b.summary);

    let _ = writeln!(s, "\n## Resource trends\n");
    let _ = writeln!(s, "| observable | nodes | trend | knee (s⁻¹) | slope before | slope after | nrmse | instability onset (s⁻¹) |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
    for sig in &a.signals {
        let c = &sig.classification;
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.4e} | {:.4e} | {:.4} | {} |",
            sig.id(),
            sig.observable.nodes.join(" "),
            c.trend,
            opt(c.knee_x),
            c.slope_before,
            c.slope_after,
            c.nrmse,
            opt(c.instability_onset_x)
        );
    }

    let _ = writeln!(s, "\n## Exclusion trace\n");
    let _ = writeln!(s, "| excluded | reason | observables |\n|---|---|---|");
    for e in &b.excluded {
        let obs: Vec<String> = e.observables.iter().map(|(id, t)| format!("{id}: {t}")).collect();
        let _ = writeln!(s, "| {} | {} | {} |", e.id, e.reason, obs.join(", "));
    }

    let _ = writeln!(s, "\n## Candidate ranking\n");
    if b.candidates.is_empty() {
        let _ = writeln!(s, "{}", b.summary);
    } else {
        let _ = writeln!(s, "| rank | candidate | knee (s⁻¹) | plateaus | supporting observables |\n|---|---|---|---|---|");
        for (i, c) in b.candidates.iter().enumerate() {
            let _ = writeln!(s, "| {} | {} | {} | {} | {} |", i + 1, c.id, opt(c.knee_x), c.plateaus, c.supporting.join(", "));
        }
    }
    s
}
