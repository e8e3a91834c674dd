//! `itosym` command line front end.

mod commands;
mod config;
mod failure;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use itosym::integrate::Scheme;

use commands::{IntegrateArgs, Outcome};
use config::Config;
use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "itosym", version, about = "Symmetries and exact solutions of scalar Itô SDEs")]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for reports and trajectories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Leave timestamps out of reports.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    EulerMaruyama,
    Milstein,
    Exact,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Scheme {
        match s {
            SchemeArg::EulerMaruyama => Scheme::EulerMaruyama,
            SchemeArg::Milstein => Scheme::Milstein,
            SchemeArg::Exact => Scheme::Exact,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect the symmetric family of the drift.
    Classify { config: PathBuf },
    /// Print the symmetry of the classified problem.
    Symmetry { config: PathBuf },
    /// Evaluate the determining equations at random probe points.
    Verify {
        config: PathBuf,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Exact and numerical solutions on shared Wiener paths.
    Integrate {
        config: PathBuf,
        #[arg(long)]
        paths: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        /// Also write a gnuplot script next to the CSV files.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Strong convergence table on nested grids.
    Convergence {
        config: PathBuf,
        #[arg(long)]
        levels: Option<u32>,
        #[arg(long)]
        paths: Option<u64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Classify { .. } => "classify",
            Command::Symmetry { .. } => "symmetry",
            Command::Verify { .. } => "verify",
            Command::Integrate { .. } => "integrate",
            Command::Convergence { .. } => "convergence",
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome, Failure> {
    match &cli.command {
        Command::Classify { config } => commands::classify_cmd(&Config::load(config)?),
        Command::Symmetry { config } => commands::symmetry_cmd(&Config::load(config)?),
        Command::Verify { config, points } => {
            let cfg = Config::load(config)?;
            commands::verify_cmd(&cfg, points.or(cfg.points).unwrap_or(100), cli.seed)
        }
        Command::Integrate { config, paths, dt, scheme, gnuplot } => {
            let cfg = Config::load(config)?;
            let args = IntegrateArgs {
                seed: cli.seed,
                paths: paths.or(cfg.paths).unwrap_or(10),
                dt: dt.or(cfg.dt).unwrap_or(1e-3),
                scheme: scheme.map(Scheme::from).or(cfg.scheme).unwrap_or(Scheme::EulerMaruyama),
                out: cli.out.as_deref(),
                gnuplot: *gnuplot,
            };
            commands::integrate_cmd(&cfg, &args)
        }
        Command::Convergence { config, levels, paths } => {
            let cfg = Config::load(config)?;
            let levels = levels.or(cfg.levels).unwrap_or(4);
            let paths = paths.or(cfg.paths).unwrap_or(100);
            commands::convergence_cmd(&cfg, cli.seed, levels, paths)
        }
    }
}

fn emit(cli: &Cli, mut report: serde_json::Value) -> Result<(), Failure> {
    if !cli.deterministic {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        report["generatedAt"] = now.into();
    }
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::evaluation(e.to_string()))?;
    if let Some(dir) = &cli.out {
        write_report(dir, cli.command.name(), &text)?;
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{text}")?;
    Ok(())
}

fn write_report(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{name}.json")), format!("{text}\n"))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { failure::CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = dispatch(&cli).and_then(|o| emit(&cli, o.report).map(|_| o.code));
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("itosym: {f}");
            ExitCode::from(f.code)
        }
    }
}
