//! Tables, curves and scatter data derived from trial logs.
//!
//! All outputs are pure functions of their inputs. The "performance" axis is
//! the raw evaluation loss as logged (lower is better).

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::cost::{graph_cost, hofvsr_graph, CostError, InputShape};
use crate::log::TrialLog;
use crate::orchestrator::{TrialRecord, TrialStatus};
use crate::space::Configuration;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("log has no completed trials")]
    NoCompleted,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no strategies given")]
    NoStrategies,
    #[error("log has no epoch reports")]
    EmptyLog,
    #[error("trial {trial_id}: configuration lacks `{name}`")]
    MissingParam { trial_id: u64, name: &'static str },
    #[error("trial {trial_id}: {source}")]
    Cost {
        trial_id: u64,
        #[source]
        source: CostError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The `k` completed trials with the lowest objective, ascending, ties by trial id.
pub fn top_k(trials: &[TrialRecord], k: usize) -> Result<Vec<&TrialRecord>, ReportError> {
    if k == 0 {
        return Err(ReportError::ZeroK);
    }
    let mut done: Vec<&TrialRecord> = trials
        .iter()
        .filter(|t| t.status == TrialStatus::Completed)
        .collect();
    if done.is_empty() {
        return Err(ReportError::NoCompleted);
    }
    done.sort_by(|a, b| {
        a.objective
            .unwrap()
            .total_cmp(&b.objective.unwrap())
            .then(a.trial_id.cmp(&b.trial_id))
    });
    done.truncate(k);
    Ok(done)
}

pub fn top_k_csv(trials: &[&TrialRecord]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let names: Vec<String> = trials
        .first()
        .and_then(|t| t.config.as_ref())
        .map(|c| c.iter().map(|(n, _)| n.to_string()).collect())
        .unwrap_or_default();
    let mut header = vec!["rank".to_string(), "trial_id".into()];
    header.extend(names.iter().cloned());
    header.extend(["objective".into(), "epochs".into()]);
    w.write_record(&header)?;
    for (rank, t) in trials.iter().enumerate() {
        let mut row = vec![(rank + 1).to_string(), t.trial_id.to_string()];
        let cfg = t.config.as_ref();
        row.extend(
            names
                .iter()
                .map(|n| cfg.and_then(|c| c.get(n)).map_or(String::new(), |v| v.to_string())),
        );
        row.push(t.objective.unwrap().to_string());
        row.push(t.epoch_reports.len().to_string());
        w.write_record(&row)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ReportError> {
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `trial_id,epoch,eval_loss`, one row per logged epoch, in log order.
pub fn convergence_csv(log: &TrialLog) -> Result<String, ReportError> {
    let mut epochs = log.epochs().peekable();
    if epochs.peek().is_none() {
        return Err(ReportError::EmptyLog);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial_id", "epoch", "eval_loss"])?;
    for e in epochs {
        w.write_record([e.trial_id.to_string(), e.epoch.to_string(), e.eval_loss.to_string()])?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub strategy: String,
    pub trial_id: u64,
    pub config: Configuration,
    pub objective: f64,
    pub params: u64,
    pub flops: u64,
}

impl ScatterPoint {
    pub fn params_m(&self) -> f64 {
        self.params as f64 / 1e6
    }

    pub fn gflops(&self) -> f64 {
        self.flops as f64 / 1e9
    }
}

/// How trials are costed for the scatter plot.
#[derive(Debug, Clone, Copy)]
pub struct CostSettings {
    pub scale: u32,
    pub input: InputShape,
}

impl Default for CostSettings {
    fn default() -> Self {
        Self {
            scale: 4,
            input: crate::cost::default_input(),
        }
    }
}

fn param(t: &TrialRecord, c: &Configuration, name: &'static str) -> Result<u32, ReportError> {
    c.get(name)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or(ReportError::MissingParam {
            trial_id: t.trial_id,
            name,
        })
}

/// One point per top-5 trial (or every completed trial with `all`) of each strategy.
pub fn scatter_points(
    strategies: &[(String, &TrialLog)],
    all: bool,
    cost: CostSettings,
) -> Result<Vec<ScatterPoint>, ReportError> {
    if strategies.is_empty() {
        return Err(ReportError::NoStrategies);
    }
    let mut points = Vec::new();
    for (label, log) in strategies {
        let picked = top_k(&log.trials, if all { usize::MAX } else { 5 })?;
        for t in picked {
            let c = t.config.as_ref().expect("completed trials have a configuration");
            let g = hofvsr_graph(
                param(t, c, "res_channels")?,
                param(t, c, "n_res")?,
                param(t, c, "up_channels")?,
                cost.scale,
                cost.input,
            )
            .map_err(|source| ReportError::Cost {
                trial_id: t.trial_id,
                source,
            })?;
            let r = graph_cost(&g);
            points.push(ScatterPoint {
                strategy: label.clone(),
                trial_id: t.trial_id,
                config: c.clone(),
                objective: t.objective.unwrap(),
                params: r.total_params,
                flops: r.total_flops,
            });
        }
    }
    Ok(points)
}

pub fn scatter_csv(points: &[ScatterPoint]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "strategy",
        "trial_id",
        "res_channels",
        "n_res",
        "up_channels",
        "objective",
        "params_M",
        "gflops",
    ])?;
    for p in points {
        let v = |n: &str| p.config.get(n).map_or(String::new(), |v| v.to_string());
        w.write_record([
            p.strategy.clone(),
            p.trial_id.to_string(),
            v("res_channels"),
            v("n_res"),
            v("up_channels"),
            p.objective.to_string(),
            p.params_m().to_string(),
            p.gflops().to_string(),
        ])?;
    }
    finish(w)
}

/// `p` dominates `q`: no worse in objective, params and flops, better in one.
pub fn dominates(p: &ScatterPoint, q: &ScatterPoint) -> bool {
    let le = p.objective <= q.objective && p.params <= q.params && p.flops <= q.flops;
    let lt = p.objective < q.objective || p.params < q.params || p.flops < q.flops;
    le && lt
}

/// Points not dominated by any other point, in input order. Duplicates of a
/// front point are all kept.
pub fn pareto_front(points: &[ScatterPoint]) -> Vec<ScatterPoint> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&points[a], &points[b]);
        p.objective
            .total_cmp(&q.objective)
            .then(p.params.cmp(&q.params))
            .then(p.flops.cmp(&q.flops))
    });
    // a dominator sorts strictly before what it dominates, so comparing
    // against the front built so far is enough
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| dominates(&points[f], &points[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front.into_iter().map(|i| points[i].clone()).collect()
}

/// Axis label and the x value it plots.
type Panel = (&'static str, fn(&ScatterPoint) -> f64);

/// Two side-by-side panels: loss vs params (M) and loss vs GFLOPs.
pub fn scatter_svg(points: &[ScatterPoint]) -> String {
    const W: f64 = 360.0;
    const H: f64 = 280.0;
    const PAD: f64 = 48.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let mut labels: Vec<&str> = Vec::new();
    for p in points {
        if !labels.contains(&p.strategy.as_str()) {
            labels.push(&p.strategy);
        }
    }
    let range = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (ylo, yhi) = range(&mut points.iter().map(|p| p.objective));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        2.0 * W,
        H + 24.0
    );
    let panels: [Panel; 2] = [
        ("params (M)", ScatterPoint::params_m),
        ("GFLOPs", ScatterPoint::gflops),
    ];
    for (k, (xlabel, xf)) in panels.iter().enumerate() {
        let ox = k as f64 * W;
        let (xlo, xhi) = range(&mut points.iter().map(xf));
        let sx = |v: f64| ox + PAD + (v - xlo) / (xhi - xlo) * (W - 2.0 * PAD);
        let sy = |v: f64| H - PAD - (v - ylo) / (yhi - ylo) * (H - 2.0 * PAD);
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            ox + PAD,
            PAD,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, ox + W / 2.0, H - 12.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" transform="rotate(-90 {} {})" text-anchor="middle">eval_loss (raw)</text>"#,
            ox + 14.0,
            H / 2.0,
            ox + 14.0,
            H / 2.0
        );
        for (v, anchor_x, anchor) in [(xlo, ox + PAD, "start"), (xhi, ox + W - PAD, "end")] {
            let _ = writeln!(s, r#"<text x="{anchor_x}" y="{}" text-anchor="{anchor}">{v:.3}</text>"#, H - PAD + 14.0);
        }
        for (v, y) in [(ylo, H - PAD), (yhi, PAD + 10.0)] {
            let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{v:.4}</text>"#, ox + PAD - 4.0);
        }
        for p in points {
            let color = COLORS[labels.iter().position(|l| *l == p.strategy).unwrap() % COLORS.len()];
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"><title>{} trial {}: {}</title></circle>"#,
                sx(xf(p)),
                sy(p.objective),
                p.strategy,
                p.trial_id,
                p.config
            );
        }
    }
    for (i, l) in labels.iter().enumerate() {
        let x = PAD + i as f64 * 90.0;
        let _ = writeln!(
            s,
            r#"<circle cx="{x}" cy="16" r="4" fill="{}"/><text x="{}" y="20">{l}</text>"#,
            COLORS[i % COLORS.len()],
            x + 8.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetRow {
    pub strategy: String,
    pub networks: usize,
    pub epochs: u32,
    pub total_s: f64,
}

impl BudgetRow {
    pub fn total_time(&self) -> String {
        format_duration(self.total_s)
    }
}

/// `"XXh XXmin"`, whole minutes rounded down.
pub fn format_duration(seconds: f64) -> String {
    let minutes = (seconds.max(0.0) / 60.0).floor() as u64;
    format!("{}h {:02}min", minutes / 60, minutes % 60)
}

pub fn budget_row(strategy: &str, log: &TrialLog) -> BudgetRow {
    BudgetRow {
        strategy: strategy.to_string(),
        networks: log.trials.len(),
        epochs: log.header.budget.epochs_per_trial,
        total_s: log
            .trials
            .iter()
            .flat_map(|t| &t.epoch_reports)
            .fold(0.0, |acc, e| acc + e.duration_s),
    }
}

pub fn budget_table(logs: &[(String, &TrialLog)]) -> Vec<BudgetRow> {
    logs.iter().map(|(s, l)| budget_row(s, l)).collect()
}

pub fn budget_csv(rows: &[BudgetRow]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["strategy", "networks", "epochs", "total_s", "total_time"])?;
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.networks.to_string(),
            r.epochs.to_string(),
            r.total_s.to_string(),
            r.total_time(),
        ])?;
    }
    finish(w)
}

pub fn budget_table_text(rows: &[BudgetRow]) -> String {
    let width = rows.iter().map(|r| r.strategy.len()).max().unwrap_or(0).max(8);
    let mut s = format!("{:<width$}  {:>8}  {:>6}  {:>12}\n", "strategy", "networks", "epochs", "total time");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>8}  {:>6}  {:>12}",
            r.strategy,
            r.networks,
            r.epochs,
            r.total_time()
        );
    }
    s
}
