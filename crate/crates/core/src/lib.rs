//! Hyper-parameter search for compact face video super-resolution networks.
//!
//! The crate covers the discrete search space, three search strategies
//! (random, TPE, SMAC), the per-epoch train/evaluate loop with trial and
//! wall-clock budgets, static parameter/FLOP accounting for the candidate
//! architectures, PSNR/SSIM, and the reports built from trial logs.

pub mod cost;
pub mod evaluator;
pub mod log;
pub mod metrics;
pub mod orchestrator;
pub mod protocol;
pub mod report;
pub mod sampler;
pub mod space;
pub mod synthetic;

pub use evaluator::{EvalError, Evaluator, ProcessEvaluator, SyntheticEvaluator};
pub use log::{JsonlSink, LogEvent, LogSink, TrialLog};
pub use orchestrator::{
    open_for_resume, resume_search, resume_search_file, run_search, BudgetSpec, ClockMode, ObjectiveAgg,
    SearchError, SearchOptions, SearchResult, TrialRecord, TrialStatus,
};
pub use sampler::{Observation, SamplerSpec, SamplerState};
pub use space::{build_space, Configuration, ParamDomain, SearchSpace, SpaceError};
