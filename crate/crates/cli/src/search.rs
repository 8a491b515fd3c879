use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

use vsrhpo_core::evaluator::{Evaluator, ProcessEvaluator, SyntheticEvaluator};
use vsrhpo_core::log::{JsonlSink, LogEvent, LogSink};
use vsrhpo_core::orchestrator::{
    open_for_resume, resume_search, run_search, BudgetSpec, ClockMode, ObjectiveAgg, SearchError,
    SearchOptions, SearchResult,
};
use vsrhpo_core::{Configuration, SamplerSpec, SearchSpace};

use crate::{load_space, write_output, CmdResult, Failure};

#[derive(Args)]
pub struct SearchArgs {
    /// JSON run-config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    space: Option<PathBuf>,
    /// random, tpe or smac [default: tpe]
    #[arg(long)]
    sampler: Option<String>,
    /// Sampler setting, e.g. gamma=0.25 (repeatable).
    #[arg(long = "sampler-param", value_name = "KEY=VALUE")]
    sampler_params: Vec<String>,
    /// [default: 40]
    #[arg(long)]
    max_trials: Option<u32>,
    /// Epochs per trial [default: 20]
    #[arg(long)]
    epochs: Option<u32>,
    /// Wall-clock budget: seconds, or with an h/m/s suffix [default: 32h]
    #[arg(long)]
    wall_clock: Option<String>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// `synthetic` or `exec:<command line>` [default: synthetic]
    #[arg(long)]
    evaluator: Option<String>,
    /// Synthetic landscape seed [default: 0]
    #[arg(long)]
    profile_seed: Option<u64>,
    /// Simulated seconds per synthetic epoch [default: 240]
    #[arg(long)]
    epoch_seconds: Option<f64>,
    /// Relative jitter of synthetic epoch durations [default: 0]
    #[arg(long)]
    duration_jitter: Option<f64>,
    /// real or simulated [default: simulated for synthetic, real for exec]
    #[arg(long)]
    clock: Option<String>,
    /// Trial objective: min or last epoch loss [default: min]
    #[arg(long)]
    objective: Option<String>,
    /// Per-message timeout for exec evaluators [default: 6h]
    #[arg(long)]
    timeout: Option<String>,
    /// Trial log (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite an existing log.
    #[arg(long, conflicts_with = "resume")]
    force: bool,
    /// Continue the run recorded in --out.
    #[arg(long)]
    resume: bool,
    /// No per-trial progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Seconds {
    Number(f64),
    Text(String),
}

impl Seconds {
    fn resolve(&self) -> anyhow::Result<f64> {
        match self {
            Seconds::Number(v) => Ok(*v),
            Seconds::Text(s) => parse_seconds(s),
        }
    }
}

/// Run-config file; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    space: Option<PathBuf>,
    sampler: Option<String>,
    #[serde(default)]
    sampler_params: BTreeMap<String, serde_json::Value>,
    max_trials: Option<u32>,
    epochs: Option<u32>,
    wall_clock: Option<Seconds>,
    seed: Option<u64>,
    evaluator: Option<String>,
    profile_seed: Option<u64>,
    epoch_seconds: Option<f64>,
    duration_jitter: Option<f64>,
    clock: Option<String>,
    objective: Option<String>,
    timeout: Option<Seconds>,
    out: Option<PathBuf>,
}

/// `90`, `90s`, `15m`, `32h`, `1h30m`.
pub fn parse_seconds(s: &str) -> anyhow::Result<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Ok(v);
    }
    let mut total = 0.0;
    let mut num = String::new();
    for ch in s.chars() {
        match ch {
            '0'..='9' | '.' => num.push(ch),
            'h' | 'm' | 's' if !num.is_empty() => {
                let v: f64 = num.parse().map_err(|_| anyhow!("bad duration `{s}`"))?;
                total += v * match ch {
                    'h' => 3600.0,
                    'm' => 60.0,
                    _ => 1.0,
                };
                num.clear();
            }
            _ => bail!("bad duration `{s}` (use seconds or e.g. 32h, 1h30m)"),
        }
    }
    if !num.is_empty() || s.is_empty() {
        bail!("bad duration `{s}` (use seconds or e.g. 32h, 1h30m)");
    }
    Ok(total)
}

enum EvaluatorChoice {
    Synthetic,
    Exec(String),
}

struct RunConfig {
    space: SearchSpace,
    options: SearchOptions,
    evaluator: EvaluatorChoice,
    profile_seed: u64,
    epoch_seconds: f64,
    duration_jitter: f64,
    timeout: Duration,
    out: PathBuf,
}

fn resolve(a: &SearchArgs) -> Result<RunConfig, Failure> {
    let (file, base) = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("{}", p.display()))?;
            let f: RunConfigFile = serde_json::from_str(&text)
                .with_context(|| format!("{}", p.display()))?;
            (f, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (RunConfigFile::default(), PathBuf::new()),
    };

    let space_path = a.space.clone().or_else(|| file.space.as_ref().map(|p| base.join(p)));
    let space = load_space(space_path.as_deref())?;

    let sampler_name = a.sampler.as_deref().or(file.sampler.as_deref()).unwrap_or("tpe");
    let mut sampler: SamplerSpec = sampler_name.parse().map_err(anyhow::Error::from)?;
    for (k, v) in &file.sampler_params {
        let v = match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        sampler.set_param(k, &v).map_err(anyhow::Error::from)?;
    }
    for kv in &a.sampler_params {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--sampler-param expects KEY=VALUE, got `{kv}`"))?;
        sampler.set_param(k.trim(), v.trim()).map_err(anyhow::Error::from)?;
    }

    let evaluator = match a.evaluator.as_deref().or(file.evaluator.as_deref()).unwrap_or("synthetic") {
        "synthetic" => EvaluatorChoice::Synthetic,
        s => match s.strip_prefix("exec:") {
            Some(cmd) if !cmd.trim().is_empty() => EvaluatorChoice::Exec(cmd.trim().to_string()),
            _ => return Err(Failure::input(anyhow!("--evaluator must be `synthetic` or `exec:<command>`, got `{s}`"))),
        },
    };

    let clock = match a.clock.as_deref().or(file.clock.as_deref()) {
        Some(c) => c.parse::<ClockMode>().map_err(|e| anyhow!(e))?,
        None => match evaluator {
            EvaluatorChoice::Synthetic => ClockMode::Simulated,
            EvaluatorChoice::Exec(_) => ClockMode::Real,
        },
    };
    let objective = match a.objective.as_deref().or(file.objective.as_deref()) {
        Some(o) => o.parse::<ObjectiveAgg>().map_err(|e| anyhow!(e))?,
        None => ObjectiveAgg::Min,
    };

    let defaults = BudgetSpec::default();
    let wall_clock = match (&a.wall_clock, &file.wall_clock) {
        (Some(s), _) => parse_seconds(s)?,
        (None, Some(s)) => s.resolve()?,
        (None, None) => defaults.wall_clock_limit_s as f64,
    };
    if wall_clock.is_nan() || wall_clock < 1.0 || wall_clock.fract() != 0.0 {
        return Err(Failure::input(anyhow!("wall-clock budget must be a whole number of seconds >= 1")));
    }
    let timeout = match (&a.timeout, &file.timeout) {
        (Some(s), _) => parse_seconds(s)?,
        (None, Some(s)) => s.resolve()?,
        (None, None) => 6.0 * 3600.0,
    };
    if !(timeout > 0.0 && timeout.is_finite()) {
        return Err(Failure::input(anyhow!("timeout must be positive")));
    }

    let budget = BudgetSpec {
        max_trials: a.max_trials.or(file.max_trials).unwrap_or(defaults.max_trials),
        epochs_per_trial: a.epochs.or(file.epochs).unwrap_or(defaults.epochs_per_trial),
        wall_clock_limit_s: wall_clock as u64,
        clock_mode: clock,
    };
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let epoch_seconds = a.epoch_seconds.or(file.epoch_seconds).unwrap_or(240.0);
    let duration_jitter = a.duration_jitter.or(file.duration_jitter).unwrap_or(0.0);
    if !(epoch_seconds >= 0.0 && epoch_seconds.is_finite()) || !(0.0..1.0).contains(&duration_jitter) {
        return Err(Failure::input(anyhow!("epoch seconds must be >= 0 and jitter in [0, 1)")));
    }
    let out = a
        .out
        .clone()
        .or_else(|| file.out.as_ref().map(|p| base.join(p)))
        .ok_or_else(|| anyhow!("--out is required"))?;

    Ok(RunConfig {
        space,
        options: SearchOptions {
            sampler,
            budget,
            seed,
            objective,
        },
        evaluator,
        profile_seed: a.profile_seed.or(file.profile_seed).unwrap_or(0),
        epoch_seconds,
        duration_jitter,
        timeout: Duration::from_secs_f64(timeout),
        out,
    })
}

/// Forwards to the log and reports finished trials on stderr.
struct Progress<S> {
    inner: S,
    quiet: bool,
    last_config: Option<Configuration>,
}

impl<S> Progress<S> {
    fn new(inner: S, quiet: bool) -> Self {
        Self {
            inner,
            quiet,
            last_config: None,
        }
    }
}

impl<S: LogSink> LogSink for Progress<S> {
    fn write_event(&mut self, event: &LogEvent) -> io::Result<()> {
        self.inner.write_event(event)?;
        if self.quiet {
            return Ok(());
        }
        match event {
            LogEvent::Epoch(e) => self.last_config = Some(e.config.clone()),
            LogEvent::TrialDone(d) => {
                let cfg = self.last_config.take().map(|c| c.to_string()).unwrap_or_default();
                match d.objective {
                    Some(o) => eprintln!("trial {:>3} {} objective {o:.6} {cfg}", d.trial_id, d.status),
                    None => eprintln!("trial {:>3} {} {cfg}", d.trial_id, d.status),
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    best_trial: Option<u64>,
    best_config: Option<&'a Configuration>,
    best_objective: Option<f64>,
    trials: usize,
    completed: usize,
    elapsed_s: f64,
    log: &'a Path,
}

fn map_search_error(e: SearchError) -> Failure {
    match e {
        SearchError::Handshake(_) | SearchError::Evaluator(_) | SearchError::ClockNeedsDurations => {
            Failure::evaluator(e)
        }
        other => Failure::input(other),
    }
}

pub fn cmd_search(a: SearchArgs) -> CmdResult {
    let cfg = resolve(&a)?;
    let mut evaluator: Box<dyn Evaluator> = match &cfg.evaluator {
        EvaluatorChoice::Synthetic => Box::new(
            SyntheticEvaluator::new(&cfg.space, cfg.profile_seed)
                .with_epoch_seconds(cfg.epoch_seconds)
                .with_duration_jitter(cfg.duration_jitter),
        ),
        EvaluatorChoice::Exec(cmd) => {
            Box::new(ProcessEvaluator::spawn(cmd, cfg.timeout).map_err(Failure::evaluator)?)
        }
    };

    let result: SearchResult = if a.resume {
        if !cfg.out.exists() {
            return Err(Failure::input(anyhow!("--resume: {} does not exist", cfg.out.display())));
        }
        let (log, sink) = open_for_resume(&cfg.out).map_err(map_search_error)?;
        let mut sink = Progress::new(sink, a.quiet);
        resume_search(&cfg.space, &cfg.options, &log, evaluator.as_mut(), &mut sink)
            .map_err(map_search_error)?
    } else {
        if cfg.out.exists() && !a.force {
            return Err(Failure::input(anyhow!(
                "{} exists; pass --force to overwrite or --resume to continue it",
                cfg.out.display()
            )));
        }
        let sink = JsonlSink::create(&cfg.out)
            .with_context(|| format!("cannot create {}", cfg.out.display()))?;
        let mut sink = Progress::new(sink, a.quiet);
        run_search(&cfg.space, &cfg.options, evaluator.as_mut(), &mut sink).map_err(map_search_error)?
    };

    let completed = result.completed().count();
    let summary = Summary {
        best_trial: result.best_trial,
        best_config: result.best.as_ref(),
        best_objective: result.best_objective,
        trials: result.trials.len(),
        completed,
        elapsed_s: result.elapsed_s,
        log: &cfg.out,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?;
    write_output(None, &(text + "\n"))?;
    if completed == 0 {
        return Err(Failure::empty(anyhow!("no trial completed")));
    }
    Ok(())
}
