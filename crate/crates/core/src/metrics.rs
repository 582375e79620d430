//! Selection and estimation scores, and distributional diagnostics.
//!
//! All moments use population (`1/n`) denominators.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SelectionConfusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl SelectionConfusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Number of selected variables minus the number of truly nonzero ones.
    pub fn selection_delta(&self) -> i64 {
        (self.tp + self.fp) as i64 - (self.tp + self.fn_) as i64
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

pub fn confusion(selected: &[bool], support_true: &[bool]) -> SelectionConfusion {
    assert_eq!(selected.len(), support_true.len(), "selection and support lengths differ");
    let mut c = SelectionConfusion::default();
    for (&s, &t) in selected.iter().zip(support_true) {
        match (s, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// Mean of sensitivity and specificity.
pub fn balanced_accuracy(c: &SelectionConfusion) -> Result<f64> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedClass("nonzero"));
    }
    if c.tn + c.fp == 0 {
        return Err(Error::UndefinedClass("zero"));
    }
    Ok(0.5 * (c.tp as f64 / (c.tp + c.fn_) as f64 + c.tn as f64 / (c.tn + c.fp) as f64))
}

/// Which coordinates enter the coefficient error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MseSet {
    /// Selected and truly nonzero.
    #[default]
    TruePositives,
    /// Every selected coordinate, false positives included.
    Selected,
}

/// Mean squared coefficient error over the accurately selected variables.
/// The average runs over that set, not over all `p` coordinates, so the
/// score does not mix selection errors into estimation error. `None` when
/// the set is empty.
pub fn mse_selected(
    beta_true: &DVector<f64>,
    beta_hat: &DVector<f64>,
    selected: &[bool],
    set: MseSet,
) -> Option<f64> {
    assert_eq!(beta_true.len(), beta_hat.len());
    assert_eq!(beta_true.len(), selected.len());
    let (sum, count) = (0..selected.len())
        .filter(|&j| selected[j] && (set == MseSet::Selected || beta_true[j] != 0.0))
        .fold((0.0, 0usize), |(s, c), j| (s + (beta_true[j] - beta_hat[j]).powi(2), c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Balanced accuracy, or plain accuracy when one truth class is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyKind {
    Balanced,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub confusion: SelectionConfusion,
    pub balanced_accuracy: f64,
    pub accuracy_kind: AccuracyKind,
    pub selection_delta: i64,
    pub mse_selected: Option<f64>,
    pub n_selected: usize,
}

impl MetricsReport {
    pub fn score(
        beta_true: &DVector<f64>,
        beta_hat: &DVector<f64>,
        selected: &[bool],
        set: MseSet,
    ) -> Self {
        let support: Vec<bool> = beta_true.iter().map(|b| *b != 0.0).collect();
        let c = confusion(selected, &support);
        let (balanced_accuracy, accuracy_kind) = match balanced_accuracy(&c) {
            Ok(v) => (v, AccuracyKind::Balanced),
            Err(_) => (c.accuracy(), AccuracyKind::Plain),
        };
        Self {
            confusion: c,
            balanced_accuracy,
            accuracy_kind,
            selection_delta: c.selection_delta(),
            mse_selected: mse_selected(beta_true, beta_hat, selected, set),
            n_selected: c.tp + c.fp,
        }
    }
}

fn central_moment(x: &[f64], mean: f64, k: i32) -> f64 {
    x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / x.len() as f64
}

/// `m3 / m2^{3/2}`.
pub fn univariate_skewness(x: &[f64]) -> Result<f64> {
    if x.len() < 3 {
        return Err(Error::InvalidInput("skewness needs at least 3 values".into()));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let m2 = central_moment(x, mean, 2);
    if m2 <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(central_moment(x, mean, 3) / m2.powf(1.5))
}

/// `m4 / m2^2` (not excess).
pub fn univariate_kurtosis(x: &[f64]) -> Result<f64> {
    if x.len() < 3 {
        return Err(Error::InvalidInput("kurtosis needs at least 3 values".into()));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let m2 = central_moment(x, mean, 2);
    if m2 <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(central_moment(x, mean, 4) / (m2 * m2))
}

/// Rows centered and whitened by the population sample covariance, so that
/// `w_iᵀ w_j` is the Mahalanobis cross product of rows `i` and `j`.
pub fn whiten(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::SingularCovariance);
    }
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let cov = xc.tr_mul(&xc) / n as f64;
    let scale = cov.diagonal().max();
    let chol = cov.cholesky().ok_or(Error::SingularCovariance)?;
    let l = chol.l();
    let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(min_pivot > 1e-10 * scale.sqrt()) {
        return Err(Error::SingularCovariance);
    }
    // W = Xc L^{-T}  <=>  L Wᵀ = Xcᵀ
    let wt = l
        .solve_lower_triangular(&xc.transpose())
        .ok_or(Error::SingularCovariance)?;
    Ok(wt.transpose())
}

/// Mardia's multivariate skewness `b_{1,p}`; dispatches to the cheaper of the
/// two exact routes.
pub fn mardia_skewness(x: &DMatrix<f64>) -> Result<f64> {
    let w = whiten(x)?;
    let (n, p) = w.shape();
    // pairwise route costs ~n^2 p, tensor route ~n p^3 / 6
    if (n as f64) * 6.0 <= (p * p) as f64 {
        Ok(skewness_pairwise(&w))
    } else {
        Ok(skewness_tensor(&w))
    }
}

/// `(1/n^2) sum_{i,j} (w_iᵀ w_j)^3`, accumulated in row blocks.
pub fn mardia_skewness_pairwise(x: &DMatrix<f64>) -> Result<f64> {
    Ok(skewness_pairwise(&whiten(x)?))
}

/// `sum_{a,b,c} m_abc^2` with `m_abc = (1/n) sum_i w_ia w_ib w_ic`.
pub fn mardia_skewness_tensor(x: &DMatrix<f64>) -> Result<f64> {
    Ok(skewness_tensor(&whiten(x)?))
}

fn skewness_pairwise(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    const BLOCK: usize = 256;
    let starts: Vec<usize> = (0..n).step_by(BLOCK).collect();
    let total: f64 = starts
        .par_iter()
        .map(|&start| {
            let rows = BLOCK.min(n - start);
            let block = w.rows(start, rows);
            let g = block * w.transpose();
            g.iter().map(|v| v * v * v).sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / (n * n) as f64
}

fn skewness_tensor(w: &DMatrix<f64>) -> f64 {
    let (n, p) = w.shape();
    let nf = n as f64;
    let per_a: Vec<f64> = (0..p)
        .into_par_iter()
        .map(|a| {
            let wa = w.column(a);
            let mut prod = vec![0.0; n];
            let mut acc = 0.0;
            for b in a..p {
                let wb = w.column(b);
                for i in 0..n {
                    prod[i] = wa[i] * wb[i];
                }
                for c in b..p {
                    let wc = w.column(c);
                    let m = prod.iter().zip(wc.iter()).map(|(x, y)| x * y).sum::<f64>() / nf;
                    let mult = if a == b && b == c {
                        1.0
                    } else if a == b || b == c {
                        3.0
                    } else {
                        6.0
                    };
                    acc += mult * m * m;
                }
            }
            acc
        })
        .collect();
    per_a.iter().sum()
}

/// Mardia's multivariate kurtosis `b_{2,p} = (1/n) sum_i (w_iᵀ w_i)^2`.
pub fn mardia_kurtosis(x: &DMatrix<f64>) -> Result<f64> {
    let w = whiten(x)?;
    Ok(kurtosis_whitened(&w))
}

fn kurtosis_whitened(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let mut norms = vec![0.0; n];
    for col in w.column_iter() {
        for (acc, v) in norms.iter_mut().zip(col.iter()) {
            *acc += v * v;
        }
    }
    norms.iter().map(|d| d * d).sum::<f64>() / n as f64
}

/// Both Mardia statistics from a single whitening pass.
pub fn mardia(x: &DMatrix<f64>) -> Result<(f64, f64)> {
    let w = whiten(x)?;
    let (n, p) = w.shape();
    let skew = if (n as f64) * 6.0 <= (p * p) as f64 {
        skewness_pairwise(&w)
    } else {
        skewness_tensor(&w)
    };
    Ok((skew, kurtosis_whitened(&w)))
}

/// Pearson correlation with population moments.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(sab / (saa * sbb).sqrt())
}
