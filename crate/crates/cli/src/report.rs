use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Subcommand};

use vsrhpo_core::cost::InputShape;
use vsrhpo_core::log::TrialLog;
use vsrhpo_core::report::{
    budget_csv, budget_table, budget_table_text, convergence_csv, pareto_front, scatter_csv, scatter_points,
    scatter_svg, top_k, top_k_csv, CostSettings,
};

use crate::{write_output, CmdResult, Failure};

#[derive(Subcommand)]
pub enum ReportAction {
    /// Best k completed trials of one log.
    TopK {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trials not dominated in (loss, params, FLOPs).
    Pareto {
        #[command(flatten)]
        logs: Logs,
        #[command(flatten)]
        cost: CostFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every epoch loss in log order.
    Convergence {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loss against params and GFLOPs for the top 5 trials of each log.
    Scatter {
        #[command(flatten)]
        logs: Logs,
        #[command(flatten)]
        cost: CostFlags,
        /// Every completed trial instead of the top 5.
        #[arg(long)]
        all: bool,
        /// Also write a two-panel SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Networks trained, epochs and total time per log.
    Budget {
        #[command(flatten)]
        logs: Logs,
        /// CSV instead of an aligned table.
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
pub struct Logs {
    /// Trial log (repeatable).
    #[arg(long = "log", required = true)]
    paths: Vec<PathBuf>,
    /// Strategy label per log, in order [default: the log's sampler]
    #[arg(long = "label")]
    labels: Vec<String>,
}

#[derive(Args)]
pub struct CostFlags {
    #[arg(long, default_value_t = 4)]
    scale: u32,
    #[arg(long, default_value = "36x36x1x3")]
    input: String,
}

impl CostFlags {
    fn settings(&self) -> Result<CostSettings, Failure> {
        Ok(CostSettings {
            scale: self.scale,
            input: self.input.parse::<InputShape>().map_err(|e| anyhow!(e))?,
        })
    }
}

fn read_log(path: &Path) -> Result<TrialLog, Failure> {
    Ok(TrialLog::from_path(path).with_context(|| format!("{}", path.display()))?)
}

impl Logs {
    fn load(&self) -> Result<Vec<(String, TrialLog)>, Failure> {
        if !self.labels.is_empty() && self.labels.len() != self.paths.len() {
            return Err(Failure::input(anyhow!(
                "{} labels for {} logs",
                self.labels.len(),
                self.paths.len()
            )));
        }
        self.paths
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let log = read_log(p)?;
                let label = self.labels.get(i).cloned().unwrap_or_else(|| log.header.sampler.clone());
                Ok((label, log))
            })
            .collect()
    }
}

fn borrowed(logs: &[(String, TrialLog)]) -> Vec<(String, &TrialLog)> {
    logs.iter().map(|(l, t)| (l.clone(), t)).collect()
}

pub fn cmd_report(action: ReportAction) -> CmdResult {
    match action {
        ReportAction::TopK { log, k, out } => {
            let log = read_log(&log)?;
            let best = top_k(&log.trials, k).map_err(Failure::empty)?;
            write_output(out.as_deref(), &top_k_csv(&best).map_err(anyhow::Error::from)?)
        }
        ReportAction::Pareto { logs, cost, out } => {
            let logs = logs.load()?;
            let points = scatter_points(&borrowed(&logs), true, cost.settings()?).map_err(scatter_failure)?;
            let front = pareto_front(&points);
            write_output(out.as_deref(), &scatter_csv(&front).map_err(anyhow::Error::from)?)
        }
        ReportAction::Convergence { log, out } => {
            let log = read_log(&log)?;
            let text = convergence_csv(&log).map_err(Failure::empty)?;
            write_output(out.as_deref(), &text)
        }
        ReportAction::Scatter {
            logs,
            cost,
            all,
            svg,
            out,
        } => {
            let logs = logs.load()?;
            let points = scatter_points(&borrowed(&logs), all, cost.settings()?).map_err(scatter_failure)?;
            if let Some(p) = svg {
                write_output(Some(&p), &scatter_svg(&points))?;
            }
            write_output(out.as_deref(), &scatter_csv(&points).map_err(anyhow::Error::from)?)
        }
        ReportAction::Budget { logs, csv, out } => {
            let logs = logs.load()?;
            let rows = budget_table(&borrowed(&logs));
            let text = if csv {
                budget_csv(&rows).map_err(anyhow::Error::from)?
            } else {
                budget_table_text(&rows)
            };
            write_output(out.as_deref(), &text)
        }
    }
}

fn scatter_failure(e: vsrhpo_core::report::ReportError) -> Failure {
    match e {
        vsrhpo_core::report::ReportError::NoCompleted => Failure::empty(e),
        other => Failure::input(other),
    }
}
