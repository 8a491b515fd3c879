use std::fs;
use std::path::Path;

use vsrhpo_core::log::{JsonlSink, LogEvent, TrialLog};
use vsrhpo_core::orchestrator::{
    resume_search_file, run_search, BudgetSpec, ClockMode, SearchError, SearchOptions,
};
use vsrhpo_core::{SearchSpace, SyntheticEvaluator, TrialStatus};

fn opts(sampler: &str, max_trials: u32, seed: u64) -> SearchOptions {
    SearchOptions::new(
        sampler.parse().unwrap(),
        BudgetSpec {
            max_trials,
            epochs_per_trial: 6,
            clock_mode: ClockMode::Simulated,
            ..BudgetSpec::default()
        },
        seed,
    )
}

fn evaluator(space: &SearchSpace) -> SyntheticEvaluator {
    SyntheticEvaluator::new(space, 17).with_duration_jitter(0.1)
}

fn run_to(path: &Path, o: &SearchOptions) {
    let space = SearchSpace::hofvsr();
    let mut sink = JsonlSink::create(path).unwrap();
    run_search(&space, o, &mut evaluator(&space), &mut sink).unwrap();
}

/// Log text with the wall-clock start stamp blanked out.
fn normalized(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut header: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    header["started_unix_s"] = 0.into();
    lines[0] = header.to_string();
    lines.join("\n")
}

#[test]
fn log_parses_back_to_result() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    let space = SearchSpace::hofvsr();
    let o = opts("tpe", 12, 5);
    let mut sink = JsonlSink::create(&path).unwrap();
    let result = run_search(&space, &o, &mut evaluator(&space), &mut sink).unwrap();
    drop(sink);

    let log = TrialLog::from_path(&path).unwrap();
    assert!(log.is_complete());
    assert_eq!(log.trials, result.trials);
    assert_eq!(log.result.as_ref().unwrap().best_trial, result.best_trial);
    assert_eq!(log.result.as_ref().unwrap().elapsed_s, result.elapsed_s);
    assert_eq!(log.header.sampler, "tpe");
    assert_eq!(log.header.space_hash, space.content_hash());
    assert_eq!(log.epochs().count(), 12 * 6);
}

#[test]
fn identical_inputs_give_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    for sampler in ["random", "tpe", "smac"] {
        let a = dir.path().join(format!("{sampler}-a.jsonl"));
        let b = dir.path().join(format!("{sampler}-b.jsonl"));
        run_to(&a, &opts(sampler, 15, 99));
        run_to(&b, &opts(sampler, 15, 99));
        assert_eq!(normalized(&a), normalized(&b), "{sampler}");
    }
}

#[test]
fn different_seeds_diverge() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    run_to(&a, &opts("random", 5, 1));
    run_to(&b, &opts("random", 5, 2));
    assert_ne!(normalized(&a), normalized(&b));
}

#[test]
fn resume_after_truncation_reproduces_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    for sampler in ["random", "tpe", "smac"] {
        let o = opts(sampler, 14, 3);
        let full = dir.path().join(format!("{sampler}-full.jsonl"));
        run_to(&full, &o);
        let bytes = fs::read(&full).unwrap();
        let header_end = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
        let space = SearchSpace::hofvsr();
        // cut points: right after the header, mid-line, on line boundaries, just before the result
        let last_line_start = bytes[..bytes.len() - 1]
            .iter()
            .rposition(|&b| b == b'\n')
            .unwrap()
            + 1;
        let mut cuts = vec![header_end, header_end + 7, last_line_start, last_line_start + 3];
        cuts.extend((1..6).map(|k| header_end + (bytes.len() - header_end) * k / 6));
        for cut in cuts {
            let part = dir.path().join(format!("{sampler}-{cut}.jsonl"));
            fs::write(&part, &bytes[..cut]).unwrap();
            let r = resume_search_file(&space, &o, &part, &mut evaluator(&space)).unwrap();
            assert_eq!(r.trials.len(), 14);
            assert_eq!(normalized(&part), normalized(&full), "{sampler} cut at {cut}");
        }
    }
}

#[test]
fn resume_of_finished_log_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("done.jsonl");
    let o = opts("smac", 6, 8);
    run_to(&path, &o);
    let before = fs::read(&path).unwrap();
    let space = SearchSpace::hofvsr();
    let r = resume_search_file(&space, &o, &path, &mut evaluator(&space)).unwrap();
    assert_eq!(fs::read(&path).unwrap(), before);
    assert_eq!(r.trials.len(), 6);
    assert!(r.trials.iter().all(|t| t.status == TrialStatus::Completed));
}

#[test]
fn resume_refuses_foreign_log() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    run_to(&path, &opts("tpe", 3, 8));
    let space = SearchSpace::hofvsr();
    for other in [opts("random", 3, 8), opts("tpe", 3, 9)] {
        let err = resume_search_file(&space, &other, &path, &mut evaluator(&space)).unwrap_err();
        assert!(matches!(err, SearchError::HeaderMismatch(_)), "{err}");
    }
}

#[test]
fn sink_events_follow_log_order() {
    let space = SearchSpace::hofvsr();
    let mut events: Vec<LogEvent> = Vec::new();
    run_search(&space, &opts("random", 3, 0), &mut evaluator(&space), &mut events).unwrap();
    let kinds: String = events
        .iter()
        .map(|e| match e {
            LogEvent::Header(_) => 'H',
            LogEvent::Epoch(_) => 'e',
            LogEvent::TrialDone(_) => 'D',
            LogEvent::Result(_) => 'R',
        })
        .collect();
    assert_eq!(kinds, "HeeeeeeDeeeeeeDeeeeeeDR");
}
