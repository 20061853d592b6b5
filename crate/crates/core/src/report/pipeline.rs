use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{analyze_frame, default_figures, emit_figure, render_markdown, Analysis, FigureError};
use crate::controller::{run_localization_with_step, schedule_report, ControllerError, LocalizationResult};
use crate::metrics::{frame_from_records, read_csv, trim_window, write_frame, MetricsError, MetricsFrame};
use crate::model::{validate_config, ExperimentConfig, RateStep, ValidatedConfig};
use crate::netsim::{build_network, run_step, run_sweep, SimNetwork};

pub const CSV_NAME: &str = "metrics.csv";
pub const REPORT_NAME: &str = "report.md";
pub const BENCH_NAME: &str = "bench.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("analysis error: {0}")]
    Analysis(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Analysis(_) => 4,
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io { .. } | MetricsError::Schema(_) | MetricsError::Malformed { .. } => CliError::Io(e.to_string()),
            other => CliError::Analysis(other.to_string()),
        }
    }
}

impl From<FigureError> for CliError {
    fn from(e: FigureError) -> Self {
        match e {
            FigureError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Analysis(other.to_string()),
        }
    }
}

/// Files written by one command; removed again unless the command succeeds.
struct Outputs {
    written: Vec<PathBuf>,
    keep: bool,
}

impl Outputs {
    fn new() -> Self {
        Outputs { written: Vec::new(), keep: false }
    }

    fn write(&mut self, path: PathBuf, contents: &str) -> Result<PathBuf, CliError> {
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn track(&mut self, path: PathBuf) -> PathBuf {
        self.written.push(path.clone());
        path
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub csv: Option<PathBuf>,
    pub report: PathBuf,
    pub figures: Vec<PathBuf>,
    pub analysis: Analysis,
}

fn validated(cfg: &ExperimentConfig) -> Result<ValidatedConfig, CliError> {
    validate_config(cfg).map_err(|v| {
        CliError::Config(v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; "))
    })
}

fn out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

fn window(cfg: &ExperimentConfig, w: Option<(u32, u32)>) -> (u32, u32) {
    w.unwrap_or((cfg.step.ramp_head_s, cfg.step.ramp_tail_s))
}

fn finish(
    frame: &MetricsFrame,
    net: &SimNetwork,
    trim: (u32, u32),
    out: &Path,
    mut files: Outputs,
    csv: Option<PathBuf>,
) -> Result<RunOutput, CliError> {
    let trimmed = trim_window(frame, trim.0, trim.1)?;
    let analysis = analyze_frame(&trimmed, net.graph(), net.constraints()).map_err(|e| CliError::Analysis(e.to_string()))?;
    let mut figures = Vec::new();
    for spec in default_figures(&trimmed, net.architecture(), out) {
        figures.push(files.track(spec.path.clone()));
        emit_figure(&trimmed, &spec)?;
    }
    let report = files.write(out.join(REPORT_NAME), &render_markdown(&analysis))?;
    files.keep = true;
    Ok(RunOutput { csv, report, figures, analysis })
}

/// Simulates the configured sweep, then writes the CSV, figures and report.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path, trim: Option<(u32, u32)>) -> Result<RunOutput, CliError> {
    let v = validated(cfg)?;
    let net = build_network(&v);
    let records = run_sweep(&net, &cfg.step, &cfg.sweep.rates(), cfg.seed);
    let frame = frame_from_records(&records)?;
    out_dir(out)?;
    let mut files = Outputs::new();
    let csv = files.track(out.join(CSV_NAME));
    write_frame(&frame, &csv)?;
    finish(&frame, &net, window(cfg, trim), out, files, Some(csv))
}

/// Analyzes an existing CSV against the configured architecture.
pub fn cmd_analyze(csv: &Path, cfg: &ExperimentConfig, out: &Path, trim: Option<(u32, u32)>) -> Result<RunOutput, CliError> {
    let v = validated(cfg)?;
    let net = build_network(&v);
    let frame = read_csv(csv)?;
    if let Some(arch) = frame.architecture() {
        if arch != cfg.architecture {
            return Err(CliError::Config(format!("CSV holds a {arch} run but the architecture is {}", cfg.architecture)));
        }
    }
    out_dir(out)?;
    finish(&frame, &net, window(cfg, trim), out, Outputs::new(), None)
}

/// Re-renders only report.md from an existing CSV.
pub fn cmd_report(csv: &Path, cfg: &ExperimentConfig, out: &Path, trim: Option<(u32, u32)>) -> Result<PathBuf, CliError> {
    let v = validated(cfg)?;
    let net = build_network(&v);
    let frame = read_csv(csv)?;
    if let Some(arch) = frame.architecture() {
        if arch != cfg.architecture {
            return Err(CliError::Config(format!("CSV holds a {arch} run but the architecture is {}", cfg.architecture)));
        }
    }
    let trimmed = trim_window(&frame, window(cfg, trim).0, window(cfg, trim).1)?;
    let analysis = analyze_frame(&trimmed, net.graph(), net.constraints()).map_err(|e| CliError::Analysis(e.to_string()))?;
    out_dir(out)?;
    let mut files = Outputs::new();
    let report = files.write(out.join(REPORT_NAME), &render_markdown(&analysis))?;
    files.keep = true;
    Ok(report)
}

/// Runs the throughput-localization controller and writes its schedule.
pub fn cmd_bench(cfg: &ExperimentConfig, out: &Path) -> Result<LocalizationResult, CliError> {
    let v = validated(cfg)?;
    let net = build_network(&v);
    let sut = |step: &RateStep, seed: u64| run_step(&net, step, seed);
    let result = run_localization_with_step(&sut, &cfg.controller, cfg.step, cfg.seed).map_err(|e| match e {
        ControllerError::InvalidPolicy(_) | ControllerError::EmptyWindow => CliError::Config(e.to_string()),
        other => CliError::Analysis(other.to_string()),
    })?;
    out_dir(out)?;
    let mut files = Outputs::new();
    let text = schedule_report(&result);
    files.write(out.join(BENCH_NAME), &text)?;
    files.keep = true;
    Ok(result)
}

/// Simulates one rate step and writes its CSV.
pub fn cmd_simulate(cfg: &ExperimentConfig, rate: f64, out: &Path) -> Result<PathBuf, CliError> {
    let v = validated(cfg)?;
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(CliError::Config(format!("rate must be a non-negative number, got {rate}")));
    }
    let net = build_network(&v);
    let record = run_step(&net, &cfg.step.at(rate), cfg.seed);
    let frame = frame_from_records(std::slice::from_ref(&record))?;
    out_dir(out)?;
    let mut files = Outputs::new();
    let csv = files.track(out.join(CSV_NAME));
    write_frame(&frame, &csv)?;
    files.keep = true;
    Ok(csv)
}
