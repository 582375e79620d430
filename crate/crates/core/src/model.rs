//! Datasets, standardization, fit results and prediction.
//!
//! Predictors are centered and scaled by their population standard deviation
//! (divide by `n`), so that every standardized column satisfies
//! `x_jᵀx_j / n = 1`. The response is only centered, which removes the
//! intercept from every model in the crate.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictor matrix (rows are observations) and response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        Self::with_names(x, y, None)
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: DVector<f64>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 rows, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidInput("need at least 1 predictor".into()));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: y.len() });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite predictor value at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite response value at row {i}")));
        }
        if let Some(names) = &feature_names {
            if names.len() != p {
                return Err(Error::DimensionMismatch { expected: p, found: names.len() });
            }
            let unique: HashSet<&str> = names.iter().map(String::as_str).collect();
            if unique.len() != p {
                return Err(Error::InvalidInput("feature names must be unique".into()));
            }
        }
        Ok(Self { x, y, feature_names })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Centered and scaled design together with the statistics needed to map
/// back to the raw scale.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedDesign {
    xs: DMatrix<f64>,
    yc: DVector<f64>,
    col_means: DVector<f64>,
    col_scales: DVector<f64>,
    y_mean: f64,
}

pub fn standardize(d: &Dataset) -> Result<StandardizedDesign> {
    StandardizedDesign::from_raw(&d.x, &d.y)
}

fn column_stats(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl StandardizedDesign {
    /// Standardizes raw inputs. Shapes are assumed consistent; `Dataset`
    /// enforces them for external callers.
    pub(crate) fn from_raw(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        let mut xs = DMatrix::zeros(n, p);
        let mut col_means = DVector::zeros(p);
        let mut col_scales = DVector::zeros(p);
        for j in 0..p {
            let col = x.column(j);
            let col = col.as_slice();
            let (mean, sd) = column_stats(col);
            let magnitude = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(sd > 1e-12 * magnitude.max(1e-300)) {
                return Err(Error::ConstantColumn(j));
            }
            for (dst, v) in xs.column_mut(j).iter_mut().zip(col) {
                *dst = (v - mean) / sd;
            }
            col_means[j] = mean;
            col_scales[j] = sd;
        }
        let y_mean = y.mean();
        let yc = y.map(|v| v - y_mean);
        Ok(Self { xs, yc, col_means, col_scales, y_mean })
    }

    /// Re-standardizes a subset of rows (duplicates allowed) using statistics
    /// of that subset only. Because standardization is a per-column affine
    /// map, this matches standardizing the same raw rows.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = self.xs.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.yc[i]));
        let inner = Self::from_raw(&x, &y)?;
        // compose the subset statistics with our own so that the raw-scale
        // view stays correct
        let col_means = self.col_means.clone() + self.col_scales.component_mul(&inner.col_means);
        let col_scales = self.col_scales.component_mul(&inner.col_scales);
        Ok(Self {
            y_mean: self.y_mean + inner.y_mean,
            col_means,
            col_scales,
            ..inner
        })
    }

    pub fn xs(&self) -> &DMatrix<f64> {
        &self.xs
    }

    pub fn yc(&self) -> &DVector<f64> {
        &self.yc
    }

    pub fn col_means(&self) -> &DVector<f64> {
        &self.col_means
    }

    pub fn col_scales(&self) -> &DVector<f64> {
        &self.col_scales
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn n(&self) -> usize {
        self.xs.nrows()
    }

    pub fn p(&self) -> usize {
        self.xs.ncols()
    }

    /// Maps raw rows onto the standardized scale of this design.
    pub fn transform(&self, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_new.ncols() != self.p() {
            return Err(Error::DimensionMismatch { expected: self.p(), found: x_new.ncols() });
        }
        let mut out = x_new.clone();
        for j in 0..self.p() {
            let (m, s) = (self.col_means[j], self.col_scales[j]);
            out.column_mut(j).apply(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }

    /// Reconstructs the raw predictor matrix.
    pub fn destandardize(&self) -> DMatrix<f64> {
        let mut out = self.xs.clone();
        for j in 0..self.p() {
            let (m, s) = (self.col_means[j], self.col_scales[j]);
            out.column_mut(j).apply(|v| *v = *v * s + m);
        }
        out
    }

    /// Raw-scale coefficients `beta_j / scale_j` and the matching intercept.
    pub fn raw_coefficients(&self, beta: &DVector<f64>) -> (DVector<f64>, f64) {
        let raw = beta.component_div(&self.col_scales);
        let intercept = self.y_mean - raw.dot(&self.col_means);
        (raw, intercept)
    }
}

/// Method label carried by every fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodTag {
    Berm,
    Lasso,
    Enet,
    Alasso,
    Aenet,
}

impl MethodTag {
    pub const ALL: [MethodTag; 5] =
        [MethodTag::Berm, MethodTag::Lasso, MethodTag::Enet, MethodTag::Alasso, MethodTag::Aenet];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::Berm => "berm",
            MethodTag::Lasso => "lasso",
            MethodTag::Enet => "enet",
            MethodTag::Alasso => "alasso",
            MethodTag::Aenet => "aenet",
        }
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodTag::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}`")))
    }
}

/// Coefficients on the standardized scale plus the penalty that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    beta: DVector<f64>,
    selected: Vec<bool>,
    lambda: f64,
    alpha: f64,
    method: MethodTag,
}

impl FitResult {
    pub fn new(beta: DVector<f64>, lambda: f64, alpha: f64, method: MethodTag) -> Self {
        debug_assert!(lambda >= 0.0 && (0.0..=1.0).contains(&alpha));
        let selected = beta.iter().map(|b| b.abs() > 0.0).collect();
        Self { beta, selected, lambda, alpha, method }
    }

    pub fn zeros(p: usize, lambda: f64, alpha: f64, method: MethodTag) -> Self {
        Self::new(DVector::zeros(p), lambda, alpha, method)
    }

    pub fn with_method(mut self, method: MethodTag) -> Self {
        self.method = method;
        self
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    pub fn n_selected(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn method(&self) -> MethodTag {
        self.method
    }
}

/// `y_mean + ((X_new - means) / scales) · beta`.
pub fn predict(fit: &FitResult, sd: &StandardizedDesign, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
    if fit.beta.len() != sd.p() {
        return Err(Error::DimensionMismatch { expected: sd.p(), found: fit.beta.len() });
    }
    let z = sd.transform(x_new)?;
    Ok((z * &fit.beta).add_scalar(sd.y_mean))
}

pub fn r_squared(y_true: &DVector<f64>, y_pred: &DVector<f64>) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch { expected: y_true.len(), found: y_pred.len() });
    }
    if y_true.len() < 2 {
        return Err(Error::InvalidInput("r_squared needs at least 2 observations".into()));
    }
    let mean = y_true.mean();
    let ss_tot: f64 = y_true.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ConstantResponse);
    }
    let ss_res: f64 = y_true.iter().zip(y_pred.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ds(x: DMatrix<f64>, y: Vec<f64>) -> Dataset {
        Dataset::new(x, DVector::from_vec(y)).unwrap()
    }

    #[test]
    fn standardize_three_points() {
        let sd = standardize(&ds(DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]), vec![2.0, 4.0, 6.0]))
            .unwrap();
        // population sd of (1,2,3) is sqrt(2/3); 1/sqrt(2/3) = 1.224744871391589
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in sd.xs().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(sd.yc().as_slice(), &[-2.0, 0.0, 2.0]);
        assert_abs_diff_eq!(sd.y_mean(), 4.0);
    }

    #[test]
    fn already_standardized_is_identity() {
        let col = [-1.224744871391589, 0.0, 1.224744871391589];
        let x = DMatrix::from_column_slice(3, 1, &col);
        let sd = standardize(&ds(x.clone(), vec![1.0, 0.0, 2.0])).unwrap();
        assert!((sd.xs() - x).amax() < 1e-10);
    }

    #[test]
    fn constant_column_is_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        assert_eq!(standardize(&ds(x, vec![1.0, 2.0, 3.0])), Err(Error::ConstantColumn(1)));
    }

    #[test]
    fn dataset_validation() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(Dataset::new(x, DVector::from_vec(vec![1.0, 2.0])).is_err());
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let dup = Some(vec!["a".to_string(), "a".to_string()]);
        assert!(Dataset::with_names(x.clone(), DVector::from_vec(vec![1.0, 2.0]), dup).is_err());
        assert!(matches!(
            Dataset::new(x, DVector::from_vec(vec![1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn subset_rows_matches_raw_standardization() {
        let x = DMatrix::from_fn(8, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * (i * j) as f64);
        let y = DVector::from_fn(8, |i, _| (i as f64).sin() * 4.0 + 10.0);
        let d = Dataset::new(x.clone(), y.clone()).unwrap();
        let sd = standardize(&d).unwrap();
        let rows = [0, 2, 2, 5, 7, 1];
        let via_subset = sd.subset_rows(&rows).unwrap();
        let raw = Dataset::new(x.select_rows(&rows), DVector::from_iterator(6, rows.iter().map(|&i| y[i])))
            .unwrap();
        let direct = standardize(&raw).unwrap();
        assert!((via_subset.xs() - direct.xs()).amax() < 1e-12);
        assert!((via_subset.yc() - direct.yc()).amax() < 1e-12);
        assert!((via_subset.col_means() - direct.col_means()).amax() < 1e-12);
        assert!((via_subset.col_scales() - direct.col_scales()).amax() < 1e-12);
        assert_abs_diff_eq!(via_subset.y_mean(), direct.y_mean(), epsilon = 1e-12);
    }

    #[test]
    fn predict_zero_beta_gives_mean() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 4.0, 3.0]);
        let sd = standardize(&ds(x.clone(), vec![3.0, 5.0, 10.0])).unwrap();
        let fit = FitResult::zeros(2, 0.1, 0.5, MethodTag::Enet);
        let pred = predict(&fit, &sd, &x).unwrap();
        assert!(pred.iter().all(|&v| (v - 6.0).abs() < 1e-12));
        assert!(matches!(
            predict(&fit, &sd, &DMatrix::zeros(2, 3)),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn predict_single_standardized_predictor() {
        let col = [-1.224744871391589, 0.0, 1.224744871391589];
        let x = DMatrix::from_column_slice(3, 1, &col);
        let sd = standardize(&ds(x.clone(), vec![1.0, 2.0, 3.0])).unwrap();
        let fit = FitResult::new(DVector::from_vec(vec![1.0]), 0.0, 1.0, MethodTag::Lasso);
        let pred = predict(&fit, &sd, &x).unwrap();
        for (p, c) in pred.iter().zip(col) {
            assert_abs_diff_eq!(*p, 2.0 + c, epsilon = 1e-10);
        }
    }

    #[test]
    fn r_squared_examples() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        assert_abs_diff_eq!(r_squared(&y, &DVector::from_element(4, 2.5)).unwrap(), 0.0);
        // 1 - 0.10 / 5.0
        let pred = DVector::from_vec(vec![1.1, 1.9, 3.2, 3.8]);
        assert_abs_diff_eq!(r_squared(&y, &pred).unwrap(), 0.98, epsilon = 1e-12);
        assert_eq!(
            r_squared(&DVector::from_element(3, 1.0), &DVector::from_element(3, 1.0)),
            Err(Error::ConstantResponse)
        );
    }

    #[test]
    fn raw_coefficients_reproduce_predictions() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i * i + j) as f64 * 0.5 + j as f64);
        let y = DVector::from_fn(6, |i, _| i as f64 * 1.5 - 2.0);
        let sd = standardize(&Dataset::new(x.clone(), y).unwrap()).unwrap();
        let fit = FitResult::new(DVector::from_vec(vec![0.7, -0.2]), 0.1, 0.5, MethodTag::Enet);
        let (raw, b0) = sd.raw_coefficients(fit.beta());
        let direct = (&x * raw).add_scalar(b0);
        assert!((direct - predict(&fit, &sd, &x).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn method_tag_round_trip() {
        for m in MethodTag::ALL {
            assert_eq!(m.as_str().parse::<MethodTag>().unwrap(), m);
        }
        assert!("ridge".parse::<MethodTag>().is_err());
    }
}
