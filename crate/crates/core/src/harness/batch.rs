//! Seeded batches and CSV summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::harness::scenario::Scenario;
use crate::harness::trial::{run_trial_with, TrialMetrics, TrialOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub scenario: String,
    pub n_trials: usize,
    /// Percent.
    pub success_rate: f64,
    pub baseline_success_rate: f64,
    /// Mean over successful adaptive trials; `None` when none succeeded.
    pub mean_time_adaptive: Option<f64>,
    /// `None` means impossible: the baseline failed every trial.
    pub mean_time_baseline: Option<f64>,
    /// Percent of adaptive trials with every body classified correctly.
    pub movability_accuracy: f64,
    pub adaptive: Vec<TrialMetrics>,
    pub baseline: Vec<TrialMetrics>,
}

impl BatchSummary {
    pub fn time_ratio(&self) -> Option<f64> {
        Some(self.mean_time_adaptive? / self.mean_time_baseline?)
    }
}

fn pct(n: usize, d: usize) -> f64 {
    100.0 * n as f64 / d as f64
}

fn mean_success_time(ts: &[TrialMetrics]) -> Option<f64> {
    let ok: Vec<f64> = ts
        .iter()
        .filter(|t| t.success)
        .map(|t| t.nav_time)
        .collect();
    (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
}

pub fn summarize(
    name: &str,
    adaptive: Vec<TrialMetrics>,
    baseline: Vec<TrialMetrics>,
) -> BatchSummary {
    let n = adaptive.len().max(1);
    BatchSummary {
        scenario: name.to_owned(),
        n_trials: adaptive.len(),
        success_rate: pct(adaptive.iter().filter(|t| t.success).count(), n),
        baseline_success_rate: pct(
            baseline.iter().filter(|t| t.success).count(),
            baseline.len().max(1),
        ),
        mean_time_adaptive: mean_success_time(&adaptive),
        mean_time_baseline: mean_success_time(&baseline),
        movability_accuracy: pct(adaptive.iter().filter(|t| t.movability_correct).count(), n),
        adaptive,
        baseline,
    }
}

/// Trials with seeds `seed0..seed0 + n` in adaptive and baseline mode.
/// Trials run in parallel under `exec`; each trial is internally sequential.
pub fn run_batch(scenario: &Scenario, n_trials: usize, seed0: u64, exec: Exec) -> BatchSummary {
    assert!(n_trials >= 1, "n_trials must be at least 1");
    let opts = TrialOptions {
        exec: Exec::Sequential,
        frames_dir: None,
    };
    let modes = [scenario.with_baseline(false), scenario.with_baseline(true)];
    let mut all = exec.map_range(2 * n_trials, |k| {
        let sc = &modes[k / n_trials];
        run_trial_with(sc, seed0 + (k % n_trials) as u64, &opts)
    });
    let baseline = all.split_off(n_trials);
    summarize(&scenario.name, all, baseline)
}

pub const CSV_HEADER: [&str; 8] = [
    "scenario",
    "n_trials",
    "success_rate",
    "baseline_success_rate",
    "mean_time_adaptive",
    "mean_time_baseline",
    "time_ratio",
    "movability_accuracy",
];

fn fmt_opt(v: Option<f64>, none: &str) -> String {
    v.map_or_else(|| none.to_owned(), |x| format!("{x:.3}"))
}

pub fn write_csv<W: Write>(out: W, rows: &[BatchSummary]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in rows {
        w.write_record([
            s.scenario.clone(),
            s.n_trials.to_string(),
            format!("{:.1}", s.success_rate),
            format!("{:.1}", s.baseline_success_rate),
            fmt_opt(s.mean_time_adaptive, "none"),
            fmt_opt(s.mean_time_baseline, "impossible"),
            fmt_opt(s.time_ratio(), "none"),
            format!("{:.1}", s.movability_accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}
