//! Evaluators map `(configuration, epoch)` to an evaluation loss.
//!
//! [`SyntheticEvaluator`] runs in-process; [`ProcessEvaluator`] drives an
//! external trainer over the NDJSON protocol in [`crate::protocol`].

use std::io::{BufRead, BufReader, BufWriter};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::protocol::{write_message, Reply, Request, PROTOCOL_VERSION};
use crate::space::{Configuration, SearchSpace};
use crate::synthetic::SyntheticProfile;

#[derive(Debug, Error)]
pub enum EvalError {
    /// The current trial failed; the evaluator can take the next one.
    #[error("trial failed: {0}")]
    Trial(String),
    #[error("evaluator handshake failed: {0}")]
    Handshake(String),
    #[error("evaluator protocol error: {0}")]
    Protocol(String),
    #[error("evaluator did not answer within {0:?}")]
    Timeout(Duration),
    #[error("evaluator exited")]
    Exited,
    #[error("evaluator i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl EvalError {
    pub fn is_fatal(&self) -> bool {
        !matches!(self, EvalError::Trial(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochResult {
    pub epoch: u32,
    pub eval_loss: f64,
    /// Evaluator-reported duration; required for simulated clocks.
    pub duration_s: Option<f64>,
}

/// One trial at a time: `start_trial`, then `next_epoch` until it yields `None`.
pub trait Evaluator {
    fn handshake(&mut self) -> Result<(), EvalError> {
        Ok(())
    }

    fn start_trial(
        &mut self,
        trial_id: u64,
        config: &Configuration,
        max_epochs: u32,
    ) -> Result<(), EvalError>;

    fn next_epoch(&mut self) -> Result<Option<EpochResult>, EvalError>;

    fn supplies_durations(&self) -> bool;
}

#[derive(Debug, Clone)]
struct ActiveTrial {
    trial_id: u64,
    encoded: Vec<usize>,
    max_epochs: u32,
    next: u32,
}

/// In-process evaluator backed by a [`SyntheticProfile`].
#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    space: SearchSpace,
    profile: SyntheticProfile,
    epoch_seconds: f64,
    duration_jitter: f64,
    active: Option<ActiveTrial>,
}

impl SyntheticEvaluator {
    pub fn new(space: &SearchSpace, profile_seed: u64) -> Self {
        Self {
            space: space.clone(),
            profile: SyntheticProfile::new(space, profile_seed),
            epoch_seconds: 240.0,
            duration_jitter: 0.0,
            active: None,
        }
    }

    /// Simulated seconds per epoch (default 240).
    pub fn with_epoch_seconds(mut self, seconds: f64) -> Self {
        self.epoch_seconds = seconds;
        self
    }

    /// Relative per-epoch duration jitter, e.g. `0.1` for +/-10%.
    pub fn with_duration_jitter(mut self, jitter: f64) -> Self {
        self.duration_jitter = jitter;
        self
    }

    pub fn profile(&self) -> &SyntheticProfile {
        &self.profile
    }
}

impl Evaluator for SyntheticEvaluator {
    fn start_trial(
        &mut self,
        trial_id: u64,
        config: &Configuration,
        max_epochs: u32,
    ) -> Result<(), EvalError> {
        let encoded = self
            .space
            .encode(config)
            .map_err(|e| EvalError::Trial(e.to_string()))?;
        self.active = Some(ActiveTrial {
            trial_id,
            encoded,
            max_epochs,
            next: 0,
        });
        Ok(())
    }

    fn next_epoch(&mut self) -> Result<Option<EpochResult>, EvalError> {
        let Some(t) = self.active.as_mut() else {
            return Err(EvalError::Protocol("no trial in progress".into()));
        };
        if t.next >= t.max_epochs {
            self.active = None;
            return Ok(None);
        }
        let epoch = t.next;
        t.next += 1;
        Ok(Some(EpochResult {
            epoch,
            eval_loss: self.profile.eval_loss(&t.encoded, epoch),
            duration_s: Some(self.profile.epoch_duration(
                self.epoch_seconds,
                self.duration_jitter,
                t.trial_id,
                epoch,
            )),
        }))
    }

    fn supplies_durations(&self) -> bool {
        true
    }
}

/// Child process speaking the evaluator protocol on stdin/stdout.
pub struct ProcessEvaluator {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    current: Option<(u64, u32, u32)>,
}

impl ProcessEvaluator {
    /// Spawns `command_line` (split on whitespace, no shell).
    pub fn spawn(command_line: &str, timeout: Duration) -> Result<Self, EvalError> {
        let mut parts = command_line.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| EvalError::Handshake("empty evaluator command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EvalError::Handshake(format!("cannot start `{program}`: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            timeout,
            current: None,
        })
    }

    fn recv(&mut self) -> Result<Reply, EvalError> {
        loop {
            let line = match self.lines.recv_timeout(self.timeout) {
                Ok(line) => line?,
                Err(RecvTimeoutError::Timeout) => return Err(EvalError::Timeout(self.timeout)),
                Err(RecvTimeoutError::Disconnected) => return Err(EvalError::Exited),
            };
            if line.trim().is_empty() {
                continue;
            }
            return serde_json::from_str(&line)
                .map_err(|e| EvalError::Protocol(format!("bad message `{line}`: {e}")));
        }
    }

    fn send(&mut self, req: &Request) -> Result<(), EvalError> {
        write_message(&mut self.stdin, req).map_err(|_| EvalError::Exited)
    }
}

impl Evaluator for ProcessEvaluator {
    fn handshake(&mut self) -> Result<(), EvalError> {
        self.send(&Request::Hello {
            protocol: PROTOCOL_VERSION,
        })
        .map_err(|e| EvalError::Handshake(e.to_string()))?;
        match self.recv() {
            Ok(Reply::Hello { protocol }) if protocol == PROTOCOL_VERSION => Ok(()),
            Ok(Reply::Hello { protocol }) => Err(EvalError::Handshake(format!(
                "evaluator speaks protocol {protocol}, expected {PROTOCOL_VERSION}"
            ))),
            Ok(other) => Err(EvalError::Handshake(format!("expected hello, got {other:?}"))),
            Err(e) => Err(EvalError::Handshake(e.to_string())),
        }
    }

    fn start_trial(
        &mut self,
        trial_id: u64,
        config: &Configuration,
        max_epochs: u32,
    ) -> Result<(), EvalError> {
        self.current = Some((trial_id, max_epochs, 0));
        self.send(&Request::StartTrial {
            trial_id,
            config: config.clone(),
            max_epochs,
        })
    }

    fn next_epoch(&mut self) -> Result<Option<EpochResult>, EvalError> {
        let Some((trial_id, max_epochs, expected)) = self.current else {
            return Err(EvalError::Protocol("no trial in progress".into()));
        };
        loop {
            match self.recv()? {
                Reply::Epoch {
                    trial_id: t,
                    epoch,
                    eval_loss,
                    duration_s,
                } => {
                    if t != trial_id {
                        return Err(EvalError::Protocol(format!(
                            "epoch for trial {t} while trial {trial_id} is running"
                        )));
                    }
                    if epoch != expected || epoch >= max_epochs {
                        return Err(EvalError::Protocol(format!(
                            "trial {trial_id}: got epoch {epoch}, expected {expected} (max {max_epochs})"
                        )));
                    }
                    self.current = Some((trial_id, max_epochs, expected + 1));
                    return Ok(Some(EpochResult {
                        epoch,
                        eval_loss,
                        duration_s: Some(duration_s),
                    }));
                }
                Reply::TrialDone { trial_id: t } if t == trial_id => {
                    self.current = None;
                    return Ok(None);
                }
                // late completion of a trial that already reported an error
                Reply::TrialDone { trial_id: t } if t < trial_id => continue,
                Reply::Error { message, .. } => {
                    self.current = None;
                    return Err(EvalError::Trial(message));
                }
                other => {
                    return Err(EvalError::Protocol(format!(
                        "unexpected message during trial {trial_id}: {other:?}"
                    )))
                }
            }
        }
    }

    fn supplies_durations(&self) -> bool {
        true
    }
}

impl Drop for ProcessEvaluator {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
