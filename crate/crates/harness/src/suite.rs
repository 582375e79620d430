//! Scenario-suite runner.
//!
//! Every (scenario, replicate) cell realizes one dataset and fits every
//! configured method on it. Cells run on a rayon pool and are sorted before
//! anything is written, so the output does not depend on scheduling.

use std::path::Path;
use std::time::Instant;

use berm_core::metrics::{AccuracyKind, MetricsReport, MseSet};
use berm_core::seeds::{derive_seed, SeedPart};
use berm_core::selection::{fit_method, MethodOptions};
use berm_core::simgen::realize_scenario;
use berm_core::{standardize, MethodTag};
use rayon::prelude::*;

use crate::config::{SuiteConfig, SuiteScenario};
use crate::error::{HarnessError, Result};
use crate::output::{fmt_f64, fmt_opt, write_csv_atomic};

pub const RESULTS_HEADER: [&str; 21] = [
    "scenario",
    "replicate",
    "method",
    "n",
    "p",
    "sparsity",
    "sigma",
    "simple",
    "tp",
    "fp",
    "tn",
    "fn",
    "balanced_accuracy",
    "accuracy_kind",
    "selection_delta",
    "mse_selected",
    "n_selected",
    "lambda",
    "achieved_skewness",
    "achieved_kurtosis",
    "warning",
];

/// Per-(scenario, method) statistics, each reported as `_mean` and `_se`.
pub const SUMMARY_STATS: [&str; 7] =
    ["balanced_accuracy", "selection_delta", "abs_selection_delta", "mse_selected", "n_selected", "fp", "fn"];

pub fn data_seed(base_seed: u64, scenario: &str, replicate: usize) -> u64 {
    derive_seed(base_seed, &[SeedPart::Label(scenario), SeedPart::from(replicate)])
}

pub fn fit_seed(base_seed: u64, scenario: &str, replicate: usize, method: MethodTag) -> u64 {
    derive_seed(
        base_seed,
        &[SeedPart::Label(scenario), SeedPart::from(replicate), SeedPart::Label(method.as_str())],
    )
}

pub fn coefficient_seed(base_seed: u64, scenario: &str) -> u64 {
    derive_seed(base_seed, &[SeedPart::Label(scenario), SeedPart::Label("coefficients")])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub replicate: usize,
    pub method: MethodTag,
    pub n: usize,
    pub p: usize,
    pub sparsity: f64,
    pub sigma: f64,
    pub simple: bool,
    pub report: MetricsReport,
    pub lambda: f64,
    pub achieved_skewness: Option<f64>,
    pub achieved_kurtosis: Option<f64>,
    pub warning: Option<&'static str>,
    pub seconds: f64,
}

impl ResultRow {
    fn key(&self) -> (&str, usize, MethodTag) {
        (&self.scenario, self.replicate, self.method)
    }

    fn cells(&self) -> Vec<String> {
        let c = &self.report.confusion;
        vec![
            self.scenario.clone(),
            self.replicate.to_string(),
            self.method.to_string(),
            self.n.to_string(),
            self.p.to_string(),
            fmt_f64(self.sparsity),
            fmt_f64(self.sigma),
            self.simple.to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            c.fn_.to_string(),
            fmt_f64(self.report.balanced_accuracy),
            match self.report.accuracy_kind {
                AccuracyKind::Balanced => "balanced".into(),
                AccuracyKind::Plain => "plain".into(),
            },
            self.report.selection_delta.to_string(),
            fmt_opt(self.report.mse_selected),
            self.report.n_selected.to_string(),
            fmt_f64(self.lambda),
            fmt_opt(self.achieved_skewness),
            fmt_opt(self.achieved_kurtosis),
            self.warning.unwrap_or("").to_string(),
        ]
    }

    fn stat(&self, name: &str) -> Option<f64> {
        let c = &self.report.confusion;
        match name {
            "balanced_accuracy" => Some(self.report.balanced_accuracy),
            "selection_delta" => Some(self.report.selection_delta as f64),
            "abs_selection_delta" => Some(self.report.selection_delta.unsigned_abs() as f64),
            "mse_selected" => self.report.mse_selected,
            "n_selected" => Some(self.report.n_selected as f64),
            "fp" => Some(c.fp as f64),
            "fn" => Some(c.fn_ as f64),
            _ => unreachable!("unknown statistic {name}"),
        }
    }
}

/// A cell that could not be produced. `method` is `None` when data
/// generation failed, which skips every method of the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub scenario: String,
    pub replicate: usize,
    pub method: Option<MethodTag>,
    pub stage: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: MethodTag,
    pub n: usize,
    pub p: usize,
    pub sparsity: f64,
    pub sigma: f64,
    pub simple: bool,
    pub replicates: usize,
    /// `(mean, standard error, count)` per entry of [`SUMMARY_STATS`].
    pub stats: Vec<(f64, f64, usize)>,
}

impl SummaryRow {
    pub fn mean(&self, stat: &str) -> f64 {
        let i = SUMMARY_STATS.iter().position(|s| *s == stat).expect("known statistic");
        self.stats[i].0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub results: Vec<ResultRow>,
    pub errors: Vec<ErrorRow>,
    pub summary: Vec<SummaryRow>,
}

impl SuiteOutcome {
    pub fn summary_for(&self, scenario: &str, method: MethodTag) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.scenario == scenario && s.method == method)
    }
}

/// Mean and standard error (`sd / sqrt(k)` with the `k - 1` denominator).
/// The error is NaN below two values.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

fn summarize(results: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut start = 0;
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&results[a], &results[b]);
        (&x.scenario, x.method, x.replicate).cmp(&(&y.scenario, y.method, y.replicate))
    });
    while start < order.len() {
        let first = &results[order[start]];
        let end = order[start..]
            .iter()
            .position(|&i| results[i].scenario != first.scenario || results[i].method != first.method)
            .map_or(order.len(), |k| start + k);
        let group: Vec<&ResultRow> = order[start..end].iter().map(|&i| &results[i]).collect();
        let stats = SUMMARY_STATS
            .iter()
            .map(|name| {
                let v: Vec<f64> = group.iter().filter_map(|r| r.stat(name)).collect();
                let (m, se) = mean_se(&v);
                (m, se, v.len())
            })
            .collect();
        out.push(SummaryRow {
            scenario: first.scenario.clone(),
            method: first.method,
            n: first.n,
            p: first.p,
            sparsity: first.sparsity,
            sigma: first.sigma,
            simple: first.simple,
            replicates: group.len(),
            stats,
        });
        start = end;
    }
    out
}

fn run_cell(
    cfg: &SuiteConfig,
    s: &SuiteScenario,
    replicate: usize,
    opts: &MethodOptions,
) -> (Vec<ResultRow>, Vec<ErrorRow>) {
    let mut scenario = s.scenario.clone();
    scenario.seed = data_seed(cfg.base_seed, &s.id, replicate);
    if cfg.fix_coefficients {
        scenario.coefficient_seed = Some(coefficient_seed(cfg.base_seed, &s.id));
    }
    let fail = |method, stage, e: &dyn std::fmt::Display| ErrorRow {
        scenario: s.id.clone(),
        replicate,
        method,
        stage,
        message: e.to_string(),
    };
    let data = match realize_scenario(&scenario) {
        Ok(d) => d,
        Err(e) => return (Vec::new(), vec![fail(None, "generate", &e)]),
    };
    let sd = match standardize(&data.dataset) {
        Ok(sd) => sd,
        Err(e) => return (Vec::new(), vec![fail(None, "standardize", &e)]),
    };
    let (mut rows, mut errors) = (Vec::new(), Vec::new());
    for &method in &cfg.methods {
        let started = Instant::now();
        match fit_method(&sd, method, opts, fit_seed(cfg.base_seed, &s.id, replicate, method)) {
            Ok(f) => rows.push(ResultRow {
                scenario: s.id.clone(),
                replicate,
                method,
                n: scenario.n,
                p: scenario.p,
                sparsity: scenario.sparsity,
                sigma: scenario.sigma,
                simple: scenario.simple,
                report: MetricsReport::score(&data.beta_true, f.fit.beta(), f.fit.selected(), MseSet::TruePositives),
                lambda: f.fit.lambda(),
                achieved_skewness: data.achieved_skewness,
                achieved_kurtosis: data.achieved_kurtosis,
                warning: f.warning.map(|w| w.as_str()),
                seconds: started.elapsed().as_secs_f64(),
            }),
            Err(e) => errors.push(fail(Some(method), "fit", &e)),
        }
    }
    (rows, errors)
}

/// Runs every cell without writing anything. `progress` is called once per
/// finished (scenario, replicate) cell.
pub fn evaluate_suite(cfg: &SuiteConfig, progress: &(dyn Fn(&str, usize) + Sync)) -> Result<SuiteOutcome> {
    cfg.validate()?;
    let scenarios = cfg.expand()?;
    let opts = cfg.fitting.method_options();
    let cells: Vec<(usize, usize)> =
        (0..scenarios.len()).flat_map(|i| (0..cfg.replicates).map(move |r| (i, r))).collect();
    let work = || {
        cells
            .par_iter()
            .map(|&(i, r)| {
                let out = run_cell(cfg, &scenarios[i], r, &opts);
                progress(&scenarios[i].id, r);
                out
            })
            .collect::<Vec<_>>()
    };
    let done = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HarnessError::schema("suite.threads", e.to_string()))?
            .install(work),
        None => work(),
    };
    let (mut results, mut errors): (Vec<ResultRow>, Vec<ErrorRow>) = (Vec::new(), Vec::new());
    for (r, e) in done {
        results.extend(r);
        errors.extend(e);
    }
    results.sort_by(|a, b| a.key().cmp(&b.key()));
    errors.sort_by(|a, b| (&a.scenario, a.replicate, a.method).cmp(&(&b.scenario, b.replicate, b.method)));
    let summary = summarize(&results);
    Ok(SuiteOutcome { results, errors, summary })
}

pub fn write_outcome(outcome: &SuiteOutcome, dir: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = outcome.results.iter().map(ResultRow::cells).collect();
    write_csv_atomic(&dir.join("results.csv"), &RESULTS_HEADER, &rows)?;

    let mut header: Vec<String> =
        ["scenario", "method", "n", "p", "sparsity", "sigma", "simple", "replicates"].map(String::from).to_vec();
    for s in SUMMARY_STATS {
        header.extend([format!("{s}_mean"), format!("{s}_se"), format!("{s}_count")]);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = outcome
        .summary
        .iter()
        .map(|s| {
            let mut r = vec![
                s.scenario.clone(),
                s.method.to_string(),
                s.n.to_string(),
                s.p.to_string(),
                fmt_f64(s.sparsity),
                fmt_f64(s.sigma),
                s.simple.to_string(),
                s.replicates.to_string(),
            ];
            for &(m, se, k) in &s.stats {
                r.extend([fmt_f64(m), fmt_f64(se), k.to_string()]);
            }
            r
        })
        .collect();
    write_csv_atomic(&dir.join("summary.csv"), &header, &rows)?;

    let rows: Vec<Vec<String>> = outcome
        .errors
        .iter()
        .map(|e| {
            vec![
                e.scenario.clone(),
                e.replicate.to_string(),
                e.method.map(|m| m.to_string()).unwrap_or_default(),
                e.stage.to_string(),
                e.message.clone(),
            ]
        })
        .collect();
    write_csv_atomic(&dir.join("errors.csv"), &["scenario", "replicate", "method", "stage", "message"], &rows)?;

    let rows: Vec<Vec<String>> = outcome
        .results
        .iter()
        .map(|r| vec![r.scenario.clone(), r.replicate.to_string(), r.method.to_string(), fmt_f64(r.seconds)])
        .collect();
    write_csv_atomic(&dir.join("timings.csv"), &["scenario", "replicate", "method", "seconds"], &rows)
}

/// Evaluates the suite and writes `results.csv`, `summary.csv`,
/// `errors.csv` and `timings.csv` into `cfg.output_dir`.
pub fn run_suite(cfg: &SuiteConfig, progress: &(dyn Fn(&str, usize) + Sync)) -> Result<SuiteOutcome> {
    let outcome = evaluate_suite(cfg, progress)?;
    write_outcome(&outcome, &cfg.output_dir)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sd = sqrt(5/3), se = sd / 2
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert!(mean_se(&[3.0]).1.is_nan());
        assert!(mean_se(&[]).0.is_nan());
    }

    #[test]
    fn seeds_are_independent_per_cell() {
        assert_ne!(data_seed(1, "a", 0), data_seed(1, "a", 1));
        assert_ne!(data_seed(1, "a", 0), data_seed(1, "b", 0));
        assert_ne!(fit_seed(1, "a", 0, MethodTag::Berm), fit_seed(1, "a", 0, MethodTag::Lasso));
        assert_eq!(fit_seed(7, "x", 3, MethodTag::Enet), fit_seed(7, "x", 3, MethodTag::Enet));
    }
}
