use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chainscope::model::{Architecture, ExperimentConfig};
use chainscope::report::{cmd_analyze, cmd_bench, cmd_report, cmd_run, cmd_simulate, CliError};

#[derive(Parser)]
#[command(name = "chainscope", version, about = "Simulate, benchmark and localize bottlenecks in ledger pipelines")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the full rate sweep, then write CSV, figures and report.md
    Run(Common),
    /// Run the throughput-localization controller only
    Bench(Common),
    /// Simulate a single rate step and write its CSV
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Request rate in tx/s
        #[arg(long)]
        rate: f64,
    },
    /// Analyze an existing metrics CSV: figures and report.md
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Rebuild report.md from an existing metrics CSV
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults for --arch are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds trimmed from each step as HEAD,TAIL
    #[arg(long, value_parser = parse_window)]
    window: Option<(u32, u32)>,
    #[arg(long, default_value = "fabric")]
    arch: Architecture,
}

fn parse_window(s: &str) -> Result<(u32, u32), String> {
    let (h, t) = s.split_once(',').ok_or("expected HEAD,TAIL")?;
    let p = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("`{x}`: {e}"));
    Ok((p(h)?, p(t)?))
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            None => ExperimentConfig::default_for(self.arch),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

fn exec(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Run(c) => {
            let o = cmd_run(&c.config()?, &c.out, c.window)?;
            println!("{}", o.analysis.bottleneck.summary);
            println!("wrote {}", o.report.display());
        }
        Cmd::Bench(c) => {
            let r = cmd_bench(&c.config()?, &c.out)?;
            println!("max sustained rate: {} s⁻¹", r.max_sustained_rate);
        }
        Cmd::Simulate { common: c, rate } => {
            let p = cmd_simulate(&c.config()?, rate, &c.out)?;
            println!("wrote {}", p.display());
        }
        Cmd::Analyze { common: c, csv } => {
            let o = cmd_analyze(&csv, &c.config()?, &c.out, c.window)?;
            println!("{}", o.analysis.bottleneck.summary);
            println!("wrote {}", o.report.display());
        }
        Cmd::Report { common: c, csv } => {
            let p = cmd_report(&csv, &c.config()?, &c.out, c.window)?;
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
