//! JSON Lines trial log: one header, one line per epoch, one per finished
//! trial, and a closing result line.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{EpochReport, TrialRecord, TrialStatus};
use crate::space::Configuration;

pub const LOG_PROTOCOL: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderBudget {
    pub max_trials: u32,
    pub epochs_per_trial: u32,
    pub wall_clock_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub protocol: u32,
    pub space_hash: String,
    pub sampler: String,
    pub seed: u64,
    pub budget: HeaderBudget,
    pub rng: String,
    /// Wall-clock start time. The only field that differs between replays.
    pub started_unix_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLine {
    pub trial_id: u64,
    pub epoch: u32,
    pub config: Configuration,
    pub eval_loss: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDoneLine {
    pub trial_id: u64,
    pub status: TrialStatus,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub best_trial: Option<u64>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEvent {
    Header(LogHeader),
    Epoch(EpochLine),
    TrialDone(TrialDoneLine),
    Result(ResultLine),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("log is empty")]
    Empty,
    #[error("cannot read log: {0}")]
    Io(#[from] io::Error),
}

fn corrupt(line: usize, message: impl Into<String>) -> LogError {
    LogError::Corrupt {
        line,
        message: message.into(),
    }
}

/// Destination for log events. Every event must be durable before the
/// orchestrator moves on.
pub trait LogSink {
    fn write_event(&mut self, event: &LogEvent) -> io::Result<()>;
}

impl LogSink for Vec<LogEvent> {
    fn write_event(&mut self, event: &LogEvent) -> io::Result<()> {
        self.push(event.clone());
        Ok(())
    }
}

/// Writes one JSON object per line and flushes after each.
pub struct JsonlSink<W: Write> {
    inner: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

impl JsonlSink<BufWriter<File>> {
    /// Creates (or truncates) `path`.
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }

    /// Opens `path` for appending.
    pub fn append(path: impl AsRef<Path>) -> io::Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self::new(BufWriter::new(f)))
    }
}

impl<W: Write> LogSink for JsonlSink<W> {
    fn write_event(&mut self, event: &LogEvent) -> io::Result<()> {
        serde_json::to_writer(&mut self.inner, event)?;
        self.inner.write_all(b"\n")?;
        self.inner.flush()
    }
}

/// A parsed, possibly truncated trial log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub header: LogHeader,
    /// Trials with a `trial_done` line, in order.
    pub trials: Vec<TrialRecord>,
    /// Epochs of a trial that never finished.
    pub partial: Vec<EpochLine>,
    pub result: Option<ResultLine>,
    /// Byte length of the prefix that ends with the last finished trial.
    pub complete_len: u64,
}

impl TrialLog {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let f = File::open(path)?;
        Self::from_reader(BufReader::new(f))
    }

    pub fn parse_str(text: &str) -> Result<Self, LogError> {
        Self::from_reader(text.as_bytes())
    }

    /// Parses a log. A final line without a trailing newline that does not
    /// parse is treated as a torn write and dropped; any other bad line is an
    /// error naming its 1-based line number.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, LogError> {
        let mut reader = BufReader::new(reader);
        let mut header: Option<LogHeader> = None;
        let mut trials: Vec<TrialRecord> = Vec::new();
        let mut partial: Vec<EpochLine> = Vec::new();
        let mut result: Option<ResultLine> = None;
        let mut offset = 0u64;
        let mut complete_len = 0u64;
        let mut lineno = 0usize;
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf)?;
            if n == 0 {
                break;
            }
            lineno += 1;
            offset += n as u64;
            let terminated = buf.ends_with('\n');
            let text = buf.trim();
            if text.is_empty() {
                continue;
            }
            let event: LogEvent = match serde_json::from_str(text) {
                Ok(ev) => ev,
                Err(_) if !terminated => break,
                Err(e) => return Err(corrupt(lineno, e.to_string())),
            };
            if result.is_some() {
                return Err(corrupt(lineno, "entry after the result line"));
            }
            match event {
                LogEvent::Header(h) => {
                    if header.is_some() {
                        return Err(corrupt(lineno, "second header"));
                    }
                    if h.protocol != LOG_PROTOCOL {
                        return Err(corrupt(lineno, format!("unsupported protocol {}", h.protocol)));
                    }
                    header = Some(h);
                    complete_len = offset;
                }
                _ if header.is_none() => {
                    return Err(corrupt(lineno, "first line must be the header"));
                }
                LogEvent::Epoch(e) => {
                    let expected_trial = trials.len() as u64;
                    if e.trial_id != expected_trial {
                        return Err(corrupt(
                            lineno,
                            format!("epoch for trial {}, expected trial {expected_trial}", e.trial_id),
                        ));
                    }
                    if e.epoch as usize != partial.len() {
                        return Err(corrupt(
                            lineno,
                            format!("epoch {} out of sequence (expected {})", e.epoch, partial.len()),
                        ));
                    }
                    if !e.eval_loss.is_finite() || e.duration_s.is_nan() || e.duration_s < 0.0 {
                        return Err(corrupt(lineno, "non-finite loss or negative duration"));
                    }
                    partial.push(e);
                }
                LogEvent::TrialDone(d) => {
                    let expected_trial = trials.len() as u64;
                    if d.trial_id != expected_trial {
                        return Err(corrupt(
                            lineno,
                            format!("trial_done for {}, expected {expected_trial}", d.trial_id),
                        ));
                    }
                    if (d.status == TrialStatus::Completed) != d.objective.is_some() {
                        return Err(corrupt(lineno, "objective must be set exactly for completed trials"));
                    }
                    if d.status == TrialStatus::Completed && partial.is_empty() {
                        return Err(corrupt(lineno, "completed trial without epochs"));
                    }
                    let epochs = std::mem::take(&mut partial);
                    trials.push(TrialRecord {
                        trial_id: d.trial_id,
                        config: epochs.first().map(|e| e.config.clone()),
                        epoch_reports: epochs
                            .iter()
                            .map(|e| EpochReport {
                                trial_id: e.trial_id,
                                epoch: e.epoch,
                                eval_loss: e.eval_loss,
                                duration_s: e.duration_s,
                            })
                            .collect(),
                        status: d.status,
                        objective: d.objective,
                    });
                    complete_len = offset;
                }
                LogEvent::Result(r) => {
                    if !partial.is_empty() {
                        return Err(corrupt(lineno, "result line inside an unfinished trial"));
                    }
                    result = Some(r);
                    complete_len = offset;
                }
            }
        }
        let header = header.ok_or(LogError::Empty)?;
        Ok(Self {
            header,
            trials,
            partial,
            result,
            complete_len,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.result.is_some()
    }

    pub fn completed(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials
            .iter()
            .filter(|t| t.status == TrialStatus::Completed)
    }

    /// Every logged epoch in file order, including an unfinished trial's.
    pub fn epochs(&self) -> impl Iterator<Item = EpochReport> + '_ {
        self.trials
            .iter()
            .flat_map(|t| t.epoch_reports.iter().copied())
            .chain(self.partial.iter().map(|e| EpochReport {
                trial_id: e.trial_id,
                epoch: e.epoch,
                eval_loss: e.eval_loss,
                duration_s: e.duration_s,
            }))
    }
}
