//! Bootstrap relevance screening, the weighted refit, and baseline methods.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{FitResult, MethodTag, StandardizedDesign};
use crate::seeds::{self, SeedPart};
use crate::solver::{self, cd_fit, cv_fit, CvOptions, CvResult, PenaltyConfig};

pub const DEFAULT_REPLICATES: usize = 100;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_MAX_REDRAWS: usize = 10;
/// Mixing parameter of the near-ridge initial fit used by adaptive baselines.
pub const ADAPTIVE_INITIAL_ALPHA: f64 = 0.001;
pub const ADAPTIVE_TAU: f64 = 1e-6;
pub const ADAPTIVE_GAMMA: f64 = 1.0;
pub const ALPHA_TUNING_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// How each bootstrap replicate picks its penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaMode {
    /// Cross-validate inside every replicate.
    #[default]
    PerReplicate,
    /// Cross-validate once on the full data and reuse that lambda.
    FullData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub alpha: f64,
    /// Two-sided coverage of the percentile interval.
    pub level: f64,
    pub lambda_mode: LambdaMode,
    /// Redraws allowed per replicate when a resample has a constant column.
    pub max_redraws: usize,
    pub cv: CvOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            alpha: DEFAULT_ALPHA,
            level: DEFAULT_LEVEL,
            lambda_mode: LambdaMode::PerReplicate,
            max_redraws: DEFAULT_MAX_REDRAWS,
            cv: CvOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    /// `replicates × p` matrix, one fitted coefficient vector per row.
    pub coef_samples: DMatrix<f64>,
    pub ci_lower: DVector<f64>,
    pub ci_upper: DVector<f64>,
    pub relevance: Vec<bool>,
    /// Penalty used by each replicate.
    pub lambdas: Vec<f64>,
    /// Resamples discarded because of constant columns.
    pub redraws: usize,
}

impl BootstrapSummary {
    pub fn replicates(&self) -> usize {
        self.coef_samples.nrows()
    }

    pub fn n_relevant(&self) -> usize {
        self.relevance.iter().filter(|&&r| r).count()
    }
}

/// Percentile with linear interpolation between order statistics of a sorted
/// sample (`h = (n - 1) q`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// A coefficient is relevant when its closed interval excludes zero.
pub fn relevance_from_ci(ci_lower: &[f64], ci_upper: &[f64]) -> Vec<bool> {
    assert_eq!(ci_lower.len(), ci_upper.len());
    ci_lower
        .iter()
        .zip(ci_upper)
        .map(|(&lo, &hi)| lo > 0.0 || hi < 0.0)
        .collect()
}

/// Percentile intervals of each column of a `replicates × p` sample.
pub fn percentile_intervals(samples: &DMatrix<f64>, level: f64) -> (DVector<f64>, DVector<f64>) {
    let tail = (1.0 - level) / 2.0;
    let p = samples.ncols();
    let mut lower = DVector::zeros(p);
    let mut upper = DVector::zeros(p);
    for j in 0..p {
        let mut col: Vec<f64> = samples.column(j).iter().copied().collect();
        col.sort_by(f64::total_cmp);
        lower[j] = percentile(&col, tail);
        upper[j] = percentile(&col, 1.0 - tail);
    }
    (lower, upper)
}

fn check_bootstrap_options(sd: &StandardizedDesign, opts: &BootstrapOptions) -> Result<()> {
    if opts.replicates < 2 {
        return Err(Error::InvalidInput("need at least two bootstrap replicates".into()));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidInput(format!("interval level {} must lie in (0, 1)", opts.level)));
    }
    if !(opts.alpha > 0.0 && opts.alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha {} must lie in (0, 1]", opts.alpha)));
    }
    if sd.n() < opts.cv.folds {
        return Err(Error::InvalidInput("fewer rows than folds".into()));
    }
    Ok(())
}

/// Fits the elastic net on one resample, given by its row indices.
fn replicate_fit(
    sd: &StandardizedDesign,
    rows: &[usize],
    opts: &BootstrapOptions,
    fixed_lambda: Option<f64>,
    cv_seed: u64,
) -> Result<(DVector<f64>, f64)> {
    let rs = sd.subset_rows(rows)?;
    let ones = vec![1.0; sd.p()];
    let fit = match fixed_lambda {
        Some(lambda) => cd_fit(&rs, &PenaltyConfig::new(opts.alpha, lambda, ones)?, None, &opts.cv.solver)?,
        None => match cv_fit(&rs, opts.alpha, &ones, &opts.cv.with_seed(cv_seed)) {
            Ok((fit, _)) => fit,
            // a resample whose response is orthogonal to every column has
            // the empty model as its only solution
            Err(Error::DegenerateGrid) => FitResult::zeros(sd.p(), f64::INFINITY, opts.alpha, MethodTag::Enet),
            Err(e) => return Err(e),
        },
    };
    Ok((fit.beta().clone(), fit.lambda()))
}

fn full_data_lambda(sd: &StandardizedDesign, opts: &BootstrapOptions, seed: u64) -> Result<Option<f64>> {
    match opts.lambda_mode {
        LambdaMode::PerReplicate => Ok(None),
        LambdaMode::FullData => {
            let cv = solver::cv_select_lambda(
                sd,
                opts.alpha,
                &vec![1.0; sd.p()],
                &opts.cv.with_seed(seeds::derive_seed(seed, &["bootstrap-lambda".into()])),
            )?;
            Ok(Some(cv.lambda_best))
        }
    }
}

fn summarize(sd: &StandardizedDesign, fits: Vec<(DVector<f64>, f64, usize)>, level: f64) -> BootstrapSummary {
    let b = fits.len();
    let mut coef_samples = DMatrix::zeros(b, sd.p());
    let mut lambdas = Vec::with_capacity(b);
    let mut redraws = 0;
    for (r, (beta, lambda, extra)) in fits.into_iter().enumerate() {
        coef_samples.set_row(r, &beta.transpose());
        lambdas.push(lambda);
        redraws += extra;
    }
    let (ci_lower, ci_upper) = percentile_intervals(&coef_samples, level);
    let relevance = relevance_from_ci(ci_lower.as_slice(), ci_upper.as_slice());
    BootstrapSummary { coef_samples, ci_lower, ci_upper, relevance, lambdas, redraws }
}

/// Step one: nonparametric bootstrap of the elastic net. Replicate `b` draws
/// its rows from a stream derived from `(seed, b, attempt)`, re-standardizes
/// the resample and fits at a cross-validated penalty. A resample with a
/// constant column is redrawn up to `max_redraws` times.
pub fn bootstrap_coefficients(sd: &StandardizedDesign, opts: &BootstrapOptions, seed: u64) -> Result<BootstrapSummary> {
    check_bootstrap_options(sd, opts)?;
    let fixed = full_data_lambda(sd, opts, seed)?;
    let n = sd.n();
    let fits = (0..opts.replicates)
        .into_par_iter()
        .map(|b| {
            let cv_seed = seeds::derive_seed(seed, &["bootstrap-cv".into(), SeedPart::from(b)]);
            for attempt in 0..=opts.max_redraws {
                let mut rng = seeds::stream(seed, &["bootstrap".into(), SeedPart::from(b), SeedPart::from(attempt)]);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                match replicate_fit(sd, &rows, opts, fixed, cv_seed) {
                    Ok((beta, lambda)) => return Ok((beta, lambda, attempt)),
                    Err(Error::ConstantColumn(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::DegenerateResample { replicate: b })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(sd, fits, opts.level))
}

/// Bootstrap over caller-supplied resamples (one index vector per replicate).
/// Replicate `b` uses cross-validation seed `(seed, b)` as in
/// [`bootstrap_coefficients`]; constant columns are an error here.
pub fn bootstrap_from_indices(
    sd: &StandardizedDesign,
    resamples: &[Vec<usize>],
    opts: &BootstrapOptions,
    seed: u64,
) -> Result<BootstrapSummary> {
    let opts = BootstrapOptions { replicates: resamples.len(), ..opts.clone() };
    check_bootstrap_options(sd, &opts)?;
    if let Some(bad) = resamples.iter().flatten().find(|&&i| i >= sd.n()) {
        return Err(Error::InvalidInput(format!("resample row {bad} is out of range")));
    }
    let fixed = full_data_lambda(sd, &opts, seed)?;
    let fits = resamples
        .par_iter()
        .enumerate()
        .map(|(b, rows)| {
            let cv_seed = seeds::derive_seed(seed, &["bootstrap-cv".into(), SeedPart::from(b)]);
            match replicate_fit(sd, rows, &opts, fixed, cv_seed) {
                Ok((beta, lambda)) => Ok((beta, lambda, 0)),
                Err(Error::ConstantColumn(_)) => Err(Error::DegenerateResample { replicate: b }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(sd, fits, opts.level))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BermWarning {
    /// No predictor survived screening; the fit is the empty model.
    EmptyRelevantSet,
}

impl BermWarning {
    pub fn as_str(self) -> &'static str {
        match self {
            BermWarning::EmptyRelevantSet => "empty_relevant_set",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BermOptions {
    pub bootstrap: BootstrapOptions,
    /// Tune the refit's mixing parameter over [`ALPHA_TUNING_GRID`] instead
    /// of reusing the bootstrap alpha.
    pub tune_alpha: bool,
}

impl Default for BermOptions {
    fn default() -> Self {
        Self { bootstrap: BootstrapOptions::default(), tune_alpha: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BermFit {
    pub fit: FitResult,
    pub bootstrap: BootstrapSummary,
    /// Cross-validation of the refit; absent for the empty model.
    pub cv: Option<CvResult>,
    pub warning: Option<BermWarning>,
}

/// Infinite weight for irrelevant predictors, unit weight otherwise.
pub fn relevance_weights(relevance: &[bool]) -> Vec<f64> {
    relevance.iter().map(|&r| if r { 1.0 } else { f64::INFINITY }).collect()
}

fn empty_model(p: usize, alpha: f64) -> FitResult {
    FitResult::zeros(p, f64::INFINITY, alpha, MethodTag::Berm)
}

/// Step two: cross-validated weighted elastic net over the relevant
/// predictors only.
pub fn berm_refit(
    sd: &StandardizedDesign,
    alpha: f64,
    relevance: &[bool],
    cv: &CvOptions,
) -> Result<(FitResult, Option<CvResult>)> {
    if relevance.len() != sd.p() {
        return Err(Error::DimensionMismatch { expected: sd.p(), found: relevance.len() });
    }
    let weights = relevance_weights(relevance);
    match cv_fit(sd, alpha, &weights, cv) {
        Ok((fit, res)) => Ok((fit.with_method(MethodTag::Berm), Some(res))),
        Err(Error::AllWeightsInfinite) | Err(Error::DegenerateGrid) => Ok((empty_model(sd.p(), alpha), None)),
        Err(e) => Err(e),
    }
}

/// Bootstrap screening followed by the weighted refit.
pub fn berm_fit(sd: &StandardizedDesign, opts: &BermOptions, seed: u64) -> Result<BermFit> {
    let bootstrap = bootstrap_coefficients(sd, &opts.bootstrap, seeds::derive_seed(seed, &["screen".into()]))?;
    let refit_cv = opts.bootstrap.cv.with_seed(seeds::derive_seed(seed, &["refit".into()]));
    if bootstrap.n_relevant() == 0 {
        return Ok(BermFit {
            fit: empty_model(sd.p(), opts.bootstrap.alpha),
            bootstrap,
            cv: None,
            warning: Some(BermWarning::EmptyRelevantSet),
        });
    }
    let (fit, cv) = if opts.tune_alpha {
        let weights = relevance_weights(&bootstrap.relevance);
        match tune_alpha(sd, &weights, &ALPHA_TUNING_GRID, &refit_cv) {
            Ok((fit, cv)) => (fit.with_method(MethodTag::Berm), Some(cv)),
            Err(Error::DegenerateGrid) => (empty_model(sd.p(), opts.bootstrap.alpha), None),
            Err(e) => return Err(e),
        }
    } else {
        berm_refit(sd, opts.bootstrap.alpha, &bootstrap.relevance, &refit_cv)?
    };
    Ok(BermFit { fit, bootstrap, cv, warning: None })
}

/// Cross-validates every alpha in `alphas` on the same folds and keeps the
/// one with the smallest error (ties go to the earlier alpha).
pub fn tune_alpha(sd: &StandardizedDesign, weights: &[f64], alphas: &[f64], cv: &CvOptions) -> Result<(FitResult, CvResult)> {
    let mut best: Option<(f64, FitResult, CvResult)> = None;
    for &alpha in alphas {
        let (fit, res) = cv_fit(sd, alpha, weights, cv)?;
        let err = res.cv_mean_error[res.best_index];
        if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
            best = Some((err, fit, res));
        }
    }
    let (_, fit, res) = best.ok_or_else(|| Error::InvalidInput("empty alpha grid".into()))?;
    Ok((fit, res))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BaselineOptions {
    pub cv: CvOptions,
    /// Tune alpha over [`ALPHA_TUNING_GRID`] for the elastic-net variants.
    pub tune_alpha: bool,
}

/// Adaptive weights `1 / (|b| + tau)^gamma`.
pub fn adaptive_weights(initial: &DVector<f64>) -> Vec<f64> {
    initial.iter().map(|b| 1.0 / (b.abs() + ADAPTIVE_TAU).powf(ADAPTIVE_GAMMA)).collect()
}

/// Lasso, elastic net and their adaptive variants, each tuned by
/// cross-validation.
pub fn baseline_fit(
    sd: &StandardizedDesign,
    method: MethodTag,
    opts: &BaselineOptions,
    seed: u64,
) -> Result<(FitResult, CvResult)> {
    let ones = vec![1.0; sd.p()];
    let final_cv = opts.cv.with_seed(seed);
    let fit_at = |alpha: f64, weights: &[f64]| -> Result<(FitResult, CvResult)> {
        if opts.tune_alpha && alpha < 1.0 {
            tune_alpha(sd, weights, &ALPHA_TUNING_GRID, &final_cv)
        } else {
            cv_fit(sd, alpha, weights, &final_cv)
        }
    };
    let (fit, cv) = match method {
        MethodTag::Lasso => fit_at(1.0, &ones)?,
        MethodTag::Enet => fit_at(DEFAULT_ALPHA, &ones)?,
        MethodTag::Alasso | MethodTag::Aenet => {
            let init_cv = opts.cv.with_seed(seeds::derive_seed(seed, &["initial".into()]));
            let (initial, _) = cv_fit(sd, ADAPTIVE_INITIAL_ALPHA, &ones, &init_cv)?;
            let weights = adaptive_weights(initial.beta());
            let alpha = if method == MethodTag::Alasso { 1.0 } else { DEFAULT_ALPHA };
            fit_at(alpha, &weights)?
        }
        MethodTag::Berm => {
            return Err(Error::InvalidInput("berm is not a baseline method".into()));
        }
    };
    Ok((fit.with_method(method), cv))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MethodOptions {
    pub berm: BermOptions,
    pub baseline: BaselineOptions,
}

impl MethodOptions {
    /// Shares one cross-validation configuration across all methods.
    pub fn with_cv(cv: CvOptions) -> Self {
        let mut o = Self::default();
        o.berm.bootstrap.cv = cv.clone();
        o.baseline.cv = cv;
        o
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodFit {
    pub fit: FitResult,
    pub cv: Option<CvResult>,
    pub bootstrap: Option<BootstrapSummary>,
    pub warning: Option<BermWarning>,
}

/// Fits any supported method.
pub fn fit_method(sd: &StandardizedDesign, method: MethodTag, opts: &MethodOptions, seed: u64) -> Result<MethodFit> {
    match method {
        MethodTag::Berm => {
            let b = berm_fit(sd, &opts.berm, seed)?;
            Ok(MethodFit { fit: b.fit, cv: b.cv, bootstrap: Some(b.bootstrap), warning: b.warning })
        }
        _ => {
            let (fit, cv) = baseline_fit(sd, method, &opts.baseline, seed)?;
            Ok(MethodFit { fit, cv: Some(cv), bootstrap: None, warning: None })
        }
    }
}
