use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use vsrhpo_core::cost::{graph_cost, hofvsr_graph, ArchitectureGraph, InputShape};
use vsrhpo_core::metrics::{quality, Raster};
use vsrhpo_core::protocol::{serve_synthetic, SyntheticServer};
use vsrhpo_core::SearchSpace;

mod report;
mod search;

/// Failure with the exit code it maps to.
pub struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    pub fn input(err: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, err: err.into() }
    }

    pub fn empty(err: impl Into<anyhow::Error>) -> Self {
        Self { code: 3, err: err.into() }
    }

    pub fn evaluator(err: impl Into<anyhow::Error>) -> Self {
        Self { code: 4, err: err.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        Self::input(err)
    }
}

pub type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "vsrhpo", version, about = "Hyper-parameter search for compact video super-resolution networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect a search-space file.
    Space {
        #[command(subcommand)]
        action: SpaceAction,
    },
    /// Run (or resume) a search and write its trial log.
    Search(search::SearchArgs),
    /// Parameter and FLOP count of an architecture.
    Cost(CostArgs),
    /// PSNR and SSIM between two binary PGM images.
    Metrics {
        reference: PathBuf,
        test: PathBuf,
    },
    /// Tables, curves and scatter data from trial logs.
    Report {
        #[command(subcommand)]
        action: report::ReportAction,
    },
    /// Serve the synthetic evaluator protocol on stdin/stdout.
    #[command(hide = true)]
    Evaluator {
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        profile_seed: u64,
        #[arg(long, default_value_t = 240.0)]
        epoch_seconds: f64,
        #[arg(long, default_value_t = 0.0)]
        duration_jitter: f64,
    },
}

#[derive(Subcommand)]
enum SpaceAction {
    /// Print the number of configurations.
    Size(SpaceFile),
    /// Check a space file.
    Validate(SpaceFile),
    /// Print every configuration as one JSON object per line.
    Enumerate(SpaceFile),
}

#[derive(Args)]
struct SpaceFile {
    /// Space file; the built-in 800-configuration space when omitted.
    #[arg(long)]
    space: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    /// Architecture graph file instead of the generator flags.
    #[arg(long, conflicts_with_all = ["res_channels", "n_res", "up_channels"])]
    graph: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    res_channels: u32,
    #[arg(long, default_value_t = 5)]
    n_res: u32,
    #[arg(long, default_value_t = 64)]
    up_channels: u32,
    #[arg(long, default_value_t = 4)]
    scale: u32,
    /// Input as HxWxCxF.
    #[arg(long, default_value = "36x36x1x3")]
    input: String,
    /// Print the generated graph instead of its cost.
    #[arg(long)]
    emit_graph: bool,
}

pub fn load_space(path: Option<&Path>) -> Result<SearchSpace, Failure> {
    match path {
        None => Ok(SearchSpace::hofvsr()),
        Some(p) => SearchSpace::from_file(p)
            .with_context(|| format!("{}", p.display()))
            .map_err(Failure::input),
    }
}

fn cmd_space(action: SpaceAction) -> CmdResult {
    let out = io::stdout();
    let mut out = BufWriter::new(out.lock());
    let res = match action {
        SpaceAction::Size(f) => writeln!(out, "{}", load_space(f.space.as_deref())?.size()),
        SpaceAction::Validate(f) => {
            let s = load_space(f.space.as_deref())?;
            writeln!(out, "ok: {} domains, {} configurations", s.dims(), s.size())
        }
        SpaceAction::Enumerate(f) => {
            let s = load_space(f.space.as_deref())?;
            s.enumerate().try_for_each(|c| {
                serde_json::to_writer(&mut out, &c)?;
                writeln!(out)
            })
        }
    };
    write_ok(res.and_then(|_| out.flush()))
}

/// Broken pipes (e.g. `| head`) are not errors.
fn write_ok(res: io::Result<()>) -> CmdResult {
    match res {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure::input(e)),
        _ => Ok(()),
    }
}

fn cmd_cost(a: CostArgs) -> CmdResult {
    let graph = match &a.graph {
        Some(p) => ArchitectureGraph::from_file(p).with_context(|| format!("{}", p.display()))?,
        None => {
            let input: InputShape = a.input.parse().map_err(|e: String| anyhow!(e))?;
            hofvsr_graph(a.res_channels, a.n_res, a.up_channels, a.scale, input).map_err(Failure::input)?
        }
    };
    let text = if a.emit_graph {
        graph.to_json()
    } else {
        graph_cost(&graph).to_json()
    };
    write_output(None, &(text + "\n"))
}

fn cmd_metrics(reference: &Path, test: &Path) -> CmdResult {
    let a = Raster::read_pgm(reference).with_context(|| format!("{}", reference.display()))?;
    let b = Raster::read_pgm(test).with_context(|| format!("{}", test.display()))?;
    let q = quality(&a, &b).map_err(Failure::input)?;
    let text = serde_json::to_string_pretty(&q).map_err(anyhow::Error::from)?;
    write_output(None, &(text + "\n"))
}

fn cmd_evaluator(space: Option<&Path>, profile_seed: u64, epoch_seconds: f64, duration_jitter: f64) -> CmdResult {
    let server = SyntheticServer {
        space: load_space(space)?,
        profile_seed,
        epoch_seconds,
        duration_jitter,
    };
    let stdin = io::stdin();
    serve_synthetic(&server, stdin.lock(), io::stdout().lock()).map_err(Failure::evaluator)
}

pub fn write_output(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
        None => write_ok(io::stdout().lock().write_all(text.as_bytes()))?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Space { action } => cmd_space(action),
        Command::Search(a) => search::cmd_search(a),
        Command::Cost(a) => cmd_cost(a),
        Command::Metrics { reference, test } => cmd_metrics(&reference, &test),
        Command::Report { action } => report::cmd_report(action),
        Command::Evaluator {
            space,
            profile_seed,
            epoch_seconds,
            duration_jitter,
        } => cmd_evaluator(space.as_deref(), profile_seed, epoch_seconds, duration_jitter),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
