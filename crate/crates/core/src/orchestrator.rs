//! The propose / train-and-evaluate / record loop.
//!
//! Each trial takes one proposal from the sampler, streams up to
//! `epochs_per_trial` evaluation losses from the evaluator (each written to
//! the log before the next is requested) and feeds the trial objective back
//! to the sampler before the next proposal. A trial starts only while both
//! the trial budget and the wall-clock budget have room; a running trial is
//! never cut short.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter};
use std::path::Path;
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{EvalError, Evaluator};
use crate::log::{
    EpochLine, HeaderBudget, JsonlSink, LogError, LogEvent, LogHeader, LogSink, ResultLine,
    TrialDoneLine, TrialLog, LOG_PROTOCOL,
};
use crate::sampler::{Observation, SamplerError, SamplerSpec, SamplerState, RNG_NAME};
use crate::space::{Configuration, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    /// Monotonic wall time.
    Real,
    /// Sum of evaluator-reported epoch durations.
    Simulated,
}

impl FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(ClockMode::Real),
            "simulated" => Ok(ClockMode::Simulated),
            _ => Err(format!("unknown clock mode `{s}` (expected real or simulated)")),
        }
    }
}

/// How a trial's epoch losses collapse into its objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveAgg {
    #[default]
    Min,
    Last,
}

impl ObjectiveAgg {
    fn apply(self, reports: &[EpochReport]) -> Option<f64> {
        match self {
            ObjectiveAgg::Min => reports.iter().map(|r| r.eval_loss).reduce(f64::min),
            ObjectiveAgg::Last => reports.last().map(|r| r.eval_loss),
        }
    }
}

impl FromStr for ObjectiveAgg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(ObjectiveAgg::Min),
            "last" => Ok(ObjectiveAgg::Last),
            _ => Err(format!("unknown objective aggregator `{s}` (expected min or last)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSpec {
    pub max_trials: u32,
    pub epochs_per_trial: u32,
    pub wall_clock_limit_s: u64,
    pub clock_mode: ClockMode,
}

impl Default for BudgetSpec {
    /// 40 trials of 20 epochs each, capped at 32 hours.
    fn default() -> Self {
        Self {
            max_trials: 40,
            epochs_per_trial: 20,
            wall_clock_limit_s: 32 * 3600,
            clock_mode: ClockMode::Real,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    Failed,
    CutByBudget,
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrialStatus::Completed => "completed",
            TrialStatus::Failed => "failed",
            TrialStatus::CutByBudget => "cut_by_budget",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub trial_id: u64,
    pub epoch: u32,
    pub eval_loss: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    /// `None` only for trials read back from a log that failed before their first epoch.
    pub config: Option<Configuration>,
    pub epoch_reports: Vec<EpochReport>,
    pub status: TrialStatus,
    pub objective: Option<f64>,
}

impl TrialRecord {
    pub fn duration_s(&self) -> f64 {
        self.epoch_reports.iter().map(|e| e.duration_s).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub trials: Vec<TrialRecord>,
    pub best_trial: Option<u64>,
    pub best: Option<Configuration>,
    pub best_objective: Option<f64>,
    pub elapsed_s: f64,
}

impl SearchResult {
    /// Picks the completed trial with the lowest objective, earliest on ties.
    pub fn from_trials(trials: Vec<TrialRecord>, elapsed_s: f64) -> Self {
        let mut best: Option<&TrialRecord> = None;
        for t in trials.iter().filter(|t| t.status == TrialStatus::Completed) {
            let obj = t.objective.expect("completed trials carry an objective");
            if best.is_none_or(|b| obj < b.objective.unwrap()) {
                best = Some(t);
            }
        }
        let (best_trial, best_cfg, best_objective) = match best {
            Some(b) => (Some(b.trial_id), b.config.clone(), b.objective),
            None => (None, None, None),
        };
        Self {
            trials,
            best_trial,
            best: best_cfg,
            best_objective,
            elapsed_s,
        }
    }

    pub fn completed(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials
            .iter()
            .filter(|t| t.status == TrialStatus::Completed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub sampler: SamplerSpec,
    pub budget: BudgetSpec,
    pub seed: u64,
    pub objective: ObjectiveAgg,
}

impl SearchOptions {
    pub fn new(sampler: SamplerSpec, budget: BudgetSpec, seed: u64) -> Self {
        Self {
            sampler,
            budget,
            seed,
            objective: ObjectiveAgg::Min,
        }
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("simulated clock requires an evaluator that reports epoch durations")]
    ClockNeedsDurations,
    #[error("{0}")]
    Handshake(EvalError),
    #[error("evaluator failure: {0}")]
    Evaluator(EvalError),
    #[error("cannot write trial log: {0}")]
    Sink(io::Error),
    #[error("trial log: {0}")]
    Log(#[from] LogError),
    #[error("log header does not match this run: {0}")]
    HeaderMismatch(String),
}

fn validate(opts: &SearchOptions) -> Result<(), SearchError> {
    let b = &opts.budget;
    if b.max_trials == 0 || b.epochs_per_trial == 0 || b.wall_clock_limit_s == 0 {
        return Err(SearchError::InvalidBudget(
            "max_trials, epochs_per_trial and wall_clock_limit must be positive".into(),
        ));
    }
    opts.sampler.validate()?;
    Ok(())
}

pub fn header_for(space: &SearchSpace, opts: &SearchOptions) -> LogHeader {
    LogHeader {
        protocol: LOG_PROTOCOL,
        space_hash: space.content_hash(),
        sampler: opts.sampler.name().to_string(),
        seed: opts.seed,
        budget: HeaderBudget {
            max_trials: opts.budget.max_trials,
            epochs_per_trial: opts.budget.epochs_per_trial,
            wall_clock_s: opts.budget.wall_clock_limit_s,
        },
        rng: RNG_NAME.to_string(),
        started_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    }
}

/// Runs a fresh search, writing the header and every event to `sink`.
pub fn run_search<E, S>(
    space: &SearchSpace,
    opts: &SearchOptions,
    evaluator: &mut E,
    sink: &mut S,
) -> Result<SearchResult, SearchError>
where
    E: Evaluator + ?Sized,
    S: LogSink + ?Sized,
{
    validate(opts)?;
    if opts.budget.clock_mode == ClockMode::Simulated && !evaluator.supplies_durations() {
        return Err(SearchError::ClockNeedsDurations);
    }
    evaluator.handshake().map_err(SearchError::Handshake)?;
    sink.write_event(&LogEvent::Header(header_for(space, opts)))
        .map_err(SearchError::Sink)?;
    Loop {
        space,
        opts,
        state: SamplerState::new(opts.seed),
        trials: Vec::new(),
        prior_elapsed_s: 0.0,
    }
    .run(evaluator, sink)
}

/// Continues the run recorded in `log`, appending to `sink`.
///
/// The unfinished tail (if any) is ignored; the caller is responsible for
/// removing it from the underlying file. A log that already has its result
/// line is returned as-is without contacting the evaluator.
pub fn resume_search<E, S>(
    space: &SearchSpace,
    opts: &SearchOptions,
    log: &TrialLog,
    evaluator: &mut E,
    sink: &mut S,
) -> Result<SearchResult, SearchError>
where
    E: Evaluator + ?Sized,
    S: LogSink + ?Sized,
{
    let h = &log.header;
    if h.sampler != opts.sampler.name() {
        return Err(SearchError::HeaderMismatch(format!(
            "log sampler `{}`, requested `{}`",
            h.sampler,
            opts.sampler.name()
        )));
    }
    if h.seed != opts.seed {
        return Err(SearchError::HeaderMismatch(format!(
            "log seed {}, requested {}",
            h.seed, opts.seed
        )));
    }
    if h.space_hash != space.content_hash() {
        return Err(SearchError::HeaderMismatch("search space differs".into()));
    }
    if h.rng != RNG_NAME {
        return Err(SearchError::HeaderMismatch(format!("log generator `{}`", h.rng)));
    }
    let mut opts = opts.clone();
    opts.budget.max_trials = h.budget.max_trials;
    opts.budget.epochs_per_trial = h.budget.epochs_per_trial;
    opts.budget.wall_clock_limit_s = h.budget.wall_clock_s;
    validate(&opts)?;

    // same summation order as the uninterrupted run, so resumed totals match bit for bit
    let prior_elapsed_s = log
        .trials
        .iter()
        .flat_map(|t| &t.epoch_reports)
        .fold(0.0, |acc, e| acc + e.duration_s);
    if let Some(r) = &log.result {
        return Ok(SearchResult::from_trials(log.trials.clone(), r.elapsed_s));
    }
    if opts.budget.clock_mode == ClockMode::Simulated && !evaluator.supplies_durations() {
        return Err(SearchError::ClockNeedsDurations);
    }

    let mut state = SamplerState::new(opts.seed);
    for t in &log.trials {
        if let (TrialStatus::Completed, Some(config), Some(objective)) =
            (t.status, &t.config, t.objective)
        {
            state.observe(Observation {
                config: config.clone(),
                objective,
                trial_index: t.trial_id,
            })?;
        }
    }
    state.proposal_count = log.trials.len() as u64;

    evaluator.handshake().map_err(SearchError::Handshake)?;
    Loop {
        space,
        opts: &opts,
        state,
        trials: log.trials.clone(),
        prior_elapsed_s,
    }
    .run(evaluator, sink)
}

/// Parses the log at `path`, drops its unfinished tail and opens it for appending.
pub fn open_for_resume(
    path: impl AsRef<Path>,
) -> Result<(TrialLog, JsonlSink<BufWriter<File>>), SearchError> {
    let path = path.as_ref();
    let log = TrialLog::from_path(path)?;
    if !log.is_complete() {
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(SearchError::Sink)?;
        f.set_len(log.complete_len).map_err(SearchError::Sink)?;
    }
    let sink = JsonlSink::append(path).map_err(SearchError::Sink)?;
    Ok((log, sink))
}

/// Resumes the log at `path` in place.
pub fn resume_search_file<E>(
    space: &SearchSpace,
    opts: &SearchOptions,
    path: impl AsRef<Path>,
    evaluator: &mut E,
) -> Result<SearchResult, SearchError>
where
    E: Evaluator + ?Sized,
{
    let (log, mut sink) = open_for_resume(path)?;
    resume_search(space, opts, &log, evaluator, &mut sink)
}

struct Loop<'a> {
    space: &'a SearchSpace,
    opts: &'a SearchOptions,
    state: SamplerState,
    trials: Vec<TrialRecord>,
    prior_elapsed_s: f64,
}

impl Loop<'_> {
    fn run<E, S>(mut self, evaluator: &mut E, sink: &mut S) -> Result<SearchResult, SearchError>
    where
        E: Evaluator + ?Sized,
        S: LogSink + ?Sized,
    {
        let budget = &self.opts.budget;
        let started = Instant::now();
        let mut simulated_s = self.prior_elapsed_s;
        let elapsed = |simulated_s: f64| match budget.clock_mode {
            ClockMode::Simulated => simulated_s,
            ClockMode::Real => self.prior_elapsed_s + started.elapsed().as_secs_f64(),
        };

        while (self.trials.len() as u64) < budget.max_trials as u64
            && elapsed(simulated_s) < budget.wall_clock_limit_s as f64
        {
            let trial_id = self.trials.len() as u64;
            let config = self.opts.sampler.propose(self.space, &self.state);
            self.state.proposal_count += 1;

            let mut reports: Vec<EpochReport> = Vec::new();
            let mut failed = false;
            match evaluator.start_trial(trial_id, &config, budget.epochs_per_trial) {
                Ok(()) => {}
                Err(e) if e.is_fatal() => return Err(SearchError::Evaluator(e)),
                Err(_) => failed = true,
            }
            let mut mark = Instant::now();
            while !failed {
                match evaluator.next_epoch() {
                    Ok(Some(r)) => {
                        let now = Instant::now();
                        let duration_s = match budget.clock_mode {
                            ClockMode::Simulated => r.duration_s.ok_or_else(|| {
                                SearchError::Evaluator(EvalError::Protocol(
                                    "epoch without duration under simulated clock".into(),
                                ))
                            })?,
                            ClockMode::Real => now.duration_since(mark).as_secs_f64(),
                        };
                        mark = now;
                        if r.epoch as usize != reports.len() || r.epoch >= budget.epochs_per_trial {
                            return Err(SearchError::Evaluator(EvalError::Protocol(format!(
                                "trial {trial_id}: unexpected epoch {}",
                                r.epoch
                            ))));
                        }
                        if !r.eval_loss.is_finite() || duration_s.is_nan() || duration_s < 0.0 {
                            failed = true;
                            drain(evaluator)?;
                            break;
                        }
                        let report = EpochReport {
                            trial_id,
                            epoch: r.epoch,
                            eval_loss: r.eval_loss,
                            duration_s,
                        };
                        sink.write_event(&LogEvent::Epoch(EpochLine {
                            trial_id,
                            epoch: r.epoch,
                            config: config.clone(),
                            eval_loss: r.eval_loss,
                            duration_s,
                        }))
                        .map_err(SearchError::Sink)?;
                        simulated_s += duration_s;
                        reports.push(report);
                    }
                    Ok(None) => break,
                    Err(e) if e.is_fatal() => return Err(SearchError::Evaluator(e)),
                    Err(_) => failed = true,
                }
            }

            let objective = if failed {
                None
            } else {
                self.opts.objective.apply(&reports)
            };
            let status = if objective.is_some() {
                TrialStatus::Completed
            } else {
                TrialStatus::Failed
            };
            sink.write_event(&LogEvent::TrialDone(TrialDoneLine {
                trial_id,
                status,
                objective,
            }))
            .map_err(SearchError::Sink)?;
            if let Some(objective) = objective {
                self.state.observe(Observation {
                    config: config.clone(),
                    objective,
                    trial_index: trial_id,
                })?;
            }
            self.trials.push(TrialRecord {
                trial_id,
                config: Some(config),
                epoch_reports: reports,
                status,
                objective,
            });
        }

        let result = SearchResult::from_trials(self.trials, elapsed(simulated_s));
        sink.write_event(&LogEvent::Result(ResultLine {
            best_trial: result.best_trial,
            elapsed_s: result.elapsed_s,
        }))
        .map_err(SearchError::Sink)?;
        Ok(result)
    }
}

fn drain<E: Evaluator + ?Sized>(evaluator: &mut E) -> Result<(), SearchError> {
    loop {
        match evaluator.next_epoch() {
            Ok(Some(_)) => continue,
            Ok(None) => return Ok(()),
            Err(e) if e.is_fatal() => return Err(SearchError::Evaluator(e)),
            Err(_) => return Ok(()),
        }
    }
}
