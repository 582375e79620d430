//! Case-study runner for user-supplied CSV data.
//!
//! Rows of the fit group are split into train and test by a seeded shuffle.
//! The chosen method is fit on the training rows and scored on the test
//! rows. Every other configured group is predicted out of sample. The group
//! comparison then contrasts each eval group's acceleration (predicted minus
//! observed response) with that of the held-out fit-group rows.

use std::collections::HashMap;
use std::path::Path;

use berm_core::metrics::{correlation, univariate_skewness};
use berm_core::model::{predict, r_squared};
use berm_core::seeds::{derive_seed, stream, SeedPart};
use berm_core::selection::fit_method;
use berm_core::{standardize, Dataset, FitResult};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::config::{CaseStudyConfig, GroupTest};
use crate::error::{HarnessError, Result};
use crate::output::{fmt_f64, fmt_opt, write_csv_atomic};
use crate::stats::{mann_whitney, welch, TestResult};

pub const MIN_FIT_ROWS: usize = 20;

/// Raw CSV contents: header plus string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let csv_err = |e: csv::Error| HarnessError::Csv { path: path.to_path_buf(), message: e.to_string() };
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => HarnessError::io(path, io),
                _ => unreachable!(),
            },
            _ => csv_err(e),
        })?;
        let header = r.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .map_err(csv_err)?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| HarnessError::MissingColumn(name.to_string()))
    }

    fn number(&self, row: usize, col: usize) -> Result<f64> {
        let raw = &self.rows[row][col];
        raw.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| HarnessError::UnparseableCell {
                row: row + 2,
                column: self.header[col].clone(),
                value: raw.clone(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// 0-based data row in the input file.
    pub row: usize,
    pub id: Option<String>,
    pub group: Option<String>,
    pub split: Split,
    pub observed: f64,
    pub predicted: f64,
}

impl Prediction {
    pub fn acceleration(&self) -> f64 {
        self.predicted - self.observed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedFeature {
    pub name: String,
    pub standardized: f64,
    pub raw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub feature: String,
    pub coefficient: f64,
    pub skewness: Option<f64>,
    /// Largest absolute correlation with another selected feature.
    pub max_abs_corr_selected: Option<f64>,
    pub corr_with_response: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupComparison {
    pub eval_group: String,
    pub reference_group: String,
    pub n_eval: usize,
    pub n_reference: usize,
    pub mean_eval: f64,
    pub mean_reference: f64,
    pub test: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseOutcome {
    pub features: Vec<String>,
    /// Predictors dropped because they are constant on the training rows.
    pub dropped: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub test_r2: f64,
    pub fit: FitResult,
    pub intercept: f64,
    pub warning: Option<&'static str>,
    pub selected: Vec<SelectedFeature>,
    pub predictions: Vec<Prediction>,
    pub comparisons: Vec<GroupComparison>,
    pub diagnostics: Vec<Diagnostic>,
}

fn matrix(table: &Table, rows: &[usize], cols: &[usize]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            m[(i, j)] = table.number(r, c)?;
        }
    }
    Ok(m)
}

fn vector(table: &Table, rows: &[usize], col: usize) -> Result<DVector<f64>> {
    rows.iter().map(|&r| table.number(r, col)).collect::<Result<Vec<_>>>().map(DVector::from_vec)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Seeded train/test partition of `rows`; both halves keep file order.
pub fn split_rows(rows: &[usize], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(&mut stream(seed, &[SeedPart::Label("split")]));
    let n_test = ((rows.len() as f64 * test_fraction).round() as usize).clamp(1, rows.len().saturating_sub(1));
    let (mut test, mut train) = (shuffled[..n_test].to_vec(), shuffled[n_test..].to_vec());
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

pub fn evaluate_case_study(cfg: &CaseStudyConfig, table: &Table) -> Result<CaseOutcome> {
    cfg.validate()?;
    let y_col = table.column(&cfg.response_column)?;
    let g_col = cfg.group_column.as_deref().map(|g| table.column(g)).transpose()?;
    let id_col = cfg.id_column.as_deref().map(|c| table.column(c)).transpose()?;
    let mut skip = vec![y_col];
    skip.extend(g_col);
    skip.extend(id_col);
    for c in &cfg.exclude_columns {
        skip.push(table.column(c)?);
    }
    let candidates: Vec<usize> = (0..table.header.len()).filter(|c| !skip.contains(c)).collect();

    let group_of = |r: usize| g_col.map(|g| table.rows[r][g].trim().to_string());
    let fit_rows: Vec<usize> = (0..table.rows.len())
        .filter(|&r| match (&cfg.fit_group, group_of(r)) {
            (Some(f), Some(g)) => &g == f,
            _ => true,
        })
        .collect();
    if fit_rows.len() < MIN_FIT_ROWS {
        return Err(HarnessError::TooFewRows { needed: MIN_FIT_ROWS, found: fit_rows.len() });
    }
    let (train, test) = split_rows(&fit_rows, cfg.test_fraction, cfg.seed);

    let x_all = matrix(table, &train, &candidates)?;
    let (mut cols, mut dropped) = (Vec::new(), Vec::new());
    for (j, &c) in candidates.iter().enumerate() {
        let col = x_all.column(j);
        if col.iter().all(|&v| v == col[0]) {
            dropped.push(table.header[c].clone());
        } else {
            cols.push(c);
        }
    }
    let features: Vec<String> = cols.iter().map(|&c| table.header[c].clone()).collect();
    let x_train = matrix(table, &train, &cols)?;
    let y_train = vector(table, &train, y_col)?;
    let sd = standardize(&Dataset::with_names(x_train.clone(), y_train.clone(), Some(features.clone()))?)?;
    let fitted = fit_method(
        &sd,
        cfg.method,
        &cfg.fitting.method_options(),
        derive_seed(cfg.seed, &[SeedPart::Label("fit")]),
    )?;
    let fit = fitted.fit;
    let (raw, intercept) = sd.raw_coefficients(fit.beta());

    let mut predictions = Vec::new();
    let mut push = |rows: &[usize], split: Split| -> Result<Vec<f64>> {
        let pred = predict(&fit, &sd, &matrix(table, rows, &cols)?)?;
        let obs = vector(table, rows, y_col)?;
        for (k, &r) in rows.iter().enumerate() {
            predictions.push(Prediction {
                row: r,
                id: id_col.map(|c| table.rows[r][c].clone()),
                group: group_of(r),
                split,
                observed: obs[k],
                predicted: pred[k],
            });
        }
        Ok(pred.iter().copied().collect())
    };
    push(&train, Split::Train)?;
    let test_pred = push(&test, Split::Test)?;
    let test_r2 = r_squared(&vector(table, &test, y_col)?, &DVector::from_vec(test_pred))?;
    for group in &cfg.eval_groups {
        let rows: Vec<usize> = (0..table.rows.len()).filter(|&r| group_of(r).as_deref() == Some(group)).collect();
        push(&rows, Split::Eval)?;
    }
    predictions.sort_by_key(|p| p.row);

    let below = |p: &Prediction| cfg.age_threshold.is_none_or(|t| p.observed < t);
    let reference: Vec<f64> =
        predictions.iter().filter(|p| p.split == Split::Test && below(p)).map(Prediction::acceleration).collect();
    let comparisons = cfg
        .eval_groups
        .iter()
        .map(|group| {
            let eval: Vec<f64> = predictions
                .iter()
                .filter(|p| p.split == Split::Eval && p.group.as_deref() == Some(group) && below(p))
                .map(Prediction::acceleration)
                .collect();
            let test = match cfg.group_test {
                GroupTest::Welch => welch(&eval, &reference),
                GroupTest::MannWhitney => mann_whitney(&eval, &reference),
            };
            GroupComparison {
                eval_group: group.clone(),
                reference_group: cfg.fit_group.clone().unwrap_or_default(),
                n_eval: eval.len(),
                n_reference: reference.len(),
                mean_eval: mean(&eval),
                mean_reference: mean(&reference),
                test,
            }
        })
        .collect();

    let chosen: Vec<usize> = (0..features.len()).filter(|&j| fit.selected()[j]).collect();
    let selected = chosen
        .iter()
        .map(|&j| SelectedFeature { name: features[j].clone(), standardized: fit.beta()[j], raw: raw[j] })
        .collect();
    let column = |j: usize| x_train.column(j).iter().copied().collect::<Vec<f64>>();
    let y: Vec<f64> = y_train.iter().copied().collect();
    let diagnostics = chosen
        .iter()
        .map(|&j| {
            let xj = column(j);
            let max_abs_corr_selected = chosen
                .iter()
                .filter(|&&k| k != j)
                .filter_map(|&k| correlation(&xj, &column(k)).ok())
                .map(f64::abs)
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
            Diagnostic {
                feature: features[j].clone(),
                coefficient: fit.beta()[j],
                skewness: univariate_skewness(&xj).ok(),
                max_abs_corr_selected,
                corr_with_response: correlation(&xj, &y).ok(),
            }
        })
        .collect();

    Ok(CaseOutcome {
        features,
        dropped,
        n_train: train.len(),
        n_test: test.len(),
        test_r2,
        fit,
        intercept,
        warning: fitted.warning.map(|w| w.as_str()),
        selected,
        predictions,
        comparisons,
        diagnostics,
    })
}

pub fn write_case_outcome(cfg: &CaseStudyConfig, out: &CaseOutcome, dir: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = out
        .selected
        .iter()
        .map(|s| vec![s.name.clone(), fmt_f64(s.standardized), fmt_f64(s.raw)])
        .collect();
    write_csv_atomic(
        &dir.join("selected_features.csv"),
        &["feature", "coefficient_standardized", "coefficient_raw"],
        &rows,
    )?;

    let rows: Vec<Vec<String>> = out
        .predictions
        .iter()
        .map(|p| {
            vec![
                p.row.to_string(),
                p.id.clone().unwrap_or_default(),
                p.group.clone().unwrap_or_default(),
                p.split.as_str().to_string(),
                fmt_f64(p.observed),
                fmt_f64(p.predicted),
                fmt_f64(p.acceleration()),
            ]
        })
        .collect();
    write_csv_atomic(
        &dir.join("predictions.csv"),
        &["row", "id", "group", "split", "observed", "predicted", "acceleration"],
        &rows,
    )?;

    let test_name = match cfg.group_test {
        GroupTest::Welch => "welch",
        GroupTest::MannWhitney => "mann_whitney",
    };
    let rows: Vec<Vec<String>> = out
        .comparisons
        .iter()
        .map(|c| {
            vec![
                c.eval_group.clone(),
                c.reference_group.clone(),
                test_name.to_string(),
                fmt_opt(cfg.age_threshold),
                c.n_eval.to_string(),
                c.n_reference.to_string(),
                fmt_f64(c.mean_eval),
                fmt_f64(c.mean_reference),
                fmt_f64(c.mean_eval - c.mean_reference),
                fmt_opt(c.test.map(|t| t.statistic)),
                fmt_opt(c.test.map(|t| t.p_value)),
            ]
        })
        .collect();
    write_csv_atomic(
        &dir.join("acceleration.csv"),
        &[
            "eval_group",
            "reference_group",
            "test",
            "threshold",
            "n_eval",
            "n_reference",
            "mean_acceleration_eval",
            "mean_acceleration_reference",
            "difference",
            "statistic",
            "p_value",
        ],
        &rows,
    )?;

    let rows: Vec<Vec<String>> = out
        .diagnostics
        .iter()
        .map(|d| {
            vec![
                d.feature.clone(),
                fmt_f64(d.coefficient),
                fmt_opt(d.skewness),
                fmt_opt(d.max_abs_corr_selected),
                fmt_opt(d.corr_with_response),
            ]
        })
        .collect();
    write_csv_atomic(
        &dir.join("diagnostics.csv"),
        &["feature", "coefficient", "skewness", "max_abs_corr_selected", "corr_with_response"],
        &rows,
    )?;

    let summary: Vec<(&str, String)> = vec![
        ("method", out.fit.method().to_string()),
        ("n_train", out.n_train.to_string()),
        ("n_test", out.n_test.to_string()),
        ("n_features", out.features.len().to_string()),
        ("n_selected", out.selected.len().to_string()),
        ("test_r2", fmt_f64(out.test_r2)),
        ("lambda", fmt_f64(out.fit.lambda())),
        ("alpha", fmt_f64(out.fit.alpha())),
        ("intercept", fmt_f64(out.intercept)),
        ("warning", out.warning.unwrap_or("").to_string()),
        ("dropped_constant_columns", out.dropped.join(";")),
    ];
    let rows: Vec<Vec<String>> = summary.into_iter().map(|(k, v)| vec![k.to_string(), v]).collect();
    write_csv_atomic(&dir.join("case_summary.csv"), &["metric", "value"], &rows)
}

/// Reads `cfg.data_path`, fits, and writes the case report into
/// `cfg.output_dir`.
pub fn run_case_study(cfg: &CaseStudyConfig) -> Result<CaseOutcome> {
    cfg.validate()?;
    let table = Table::read(&cfg.data_path)?;
    let out = evaluate_case_study(cfg, &table)?;
    write_case_outcome(cfg, &out, &cfg.output_dir)?;
    Ok(out)
}

/// Confirms that the columns a case config names exist in the data header.
pub fn check_columns(cfg: &CaseStudyConfig, table: &Table) -> Result<()> {
    let named = std::iter::once(&cfg.response_column)
        .chain(cfg.group_column.iter())
        .chain(cfg.id_column.iter())
        .chain(cfg.exclude_columns.iter());
    for c in named {
        table.column(c)?;
    }
    let mut seen = HashMap::new();
    for (i, h) in table.header.iter().enumerate() {
        if let Some(prev) = seen.insert(h.as_str(), i) {
            return Err(HarnessError::Csv {
                path: cfg.data_path.clone(),
                message: format!("header name `{h}` repeats (columns {} and {})", prev + 1, i + 1),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(header: &[&str], rows: Vec<Vec<String>>) -> Table {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows }
    }

    #[test]
    fn split_is_seeded_and_partitions_rows() {
        let rows: Vec<usize> = (0..50).collect();
        let (train, test) = split_rows(&rows, 0.2, 3);
        assert_eq!((train.len(), test.len()), (40, 10));
        let mut all = [train.clone(), test.clone()].concat();
        all.sort_unstable();
        assert_eq!(all, rows);
        assert_eq!(split_rows(&rows, 0.2, 3), (train, test.clone()));
        assert_ne!(split_rows(&rows, 0.2, 4).1, test);
    }

    #[test]
    fn cell_errors_carry_position() {
        let t = table(&["y", "a"], vec![vec!["1".into(), "2".into()], vec!["3".into(), "x".into()]]);
        assert_eq!(t.number(0, 1).unwrap(), 2.0);
        match t.number(1, 1) {
            Err(HarnessError::UnparseableCell { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (3, "a", "x"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(t.column("z"), Err(HarnessError::MissingColumn(c)) if c == "z"));
    }
}
