//! NDJSON wire protocol between the orchestrator and an external evaluator.
//!
//! The orchestrator writes [`Request`]s to the child's stdin and reads
//! [`Reply`]s from its stdout, one JSON object per line.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::space::{Configuration, SearchSpace};
use crate::synthetic::SyntheticProfile;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Hello {
        protocol: u32,
    },
    StartTrial {
        trial_id: u64,
        config: Configuration,
        max_epochs: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    Hello {
        protocol: u32,
    },
    Epoch {
        trial_id: u64,
        epoch: u32,
        eval_loss: f64,
        duration_s: f64,
    },
    TrialDone {
        trial_id: u64,
    },
    Error {
        #[serde(default)]
        trial_id: Option<u64>,
        message: String,
    },
}

pub fn write_message<W: Write, T: Serialize>(w: &mut W, msg: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *w, msg)?;
    w.write_all(b"\n")?;
    w.flush()
}

/// Settings for [`serve_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticServer {
    pub space: SearchSpace,
    pub profile_seed: u64,
    pub epoch_seconds: f64,
    pub duration_jitter: f64,
}

/// Answers the evaluator protocol from the built-in synthetic profile.
///
/// Malformed requests get an `error` reply and the loop continues; a protocol
/// version mismatch is reported and ends the session with an error.
pub fn serve_synthetic<R: BufRead, W: Write>(
    server: &SyntheticServer,
    input: R,
    mut output: W,
) -> io::Result<()> {
    let profile = SyntheticProfile::new(&server.space, server.profile_seed);
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                write_message(
                    &mut output,
                    &Reply::Error {
                        trial_id: None,
                        message: format!("malformed request: {e}"),
                    },
                )?;
                continue;
            }
        };
        match req {
            Request::Hello { protocol } if protocol == PROTOCOL_VERSION => {
                write_message(&mut output, &Reply::Hello { protocol })?;
            }
            Request::Hello { protocol } => {
                write_message(
                    &mut output,
                    &Reply::Error {
                        trial_id: None,
                        message: format!("unsupported protocol version {protocol}"),
                    },
                )?;
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    "protocol version mismatch",
                ));
            }
            Request::StartTrial {
                trial_id,
                config,
                max_epochs,
            } => {
                let enc = match server.space.encode(&config) {
                    Ok(e) => e,
                    Err(e) => {
                        write_message(
                            &mut output,
                            &Reply::Error {
                                trial_id: Some(trial_id),
                                message: e.to_string(),
                            },
                        )?;
                        continue;
                    }
                };
                for epoch in 0..max_epochs {
                    write_message(
                        &mut output,
                        &Reply::Epoch {
                            trial_id,
                            epoch,
                            eval_loss: profile.eval_loss(&enc, epoch),
                            duration_s: profile.epoch_duration(
                                server.epoch_seconds,
                                server.duration_jitter,
                                trial_id,
                                epoch,
                            ),
                        },
                    )?;
                }
                write_message(&mut output, &Reply::TrialDone { trial_id })?;
            }
        }
    }
    Ok(())
}
