//! Simulation scenarios: block correlation matrices, non-normal predictors,
//! sparse coefficient vectors and Gaussian-noise responses.

mod covariance;
mod nonnormal;

pub use covariance::{
    build_covariance, min_eigenvalue, nearest_positive_definite, Block, CovarianceSpec, Coupling, MIN_EIGENVALUE,
};
pub use nonnormal::{fit_transform, generate_nonnormal, NonNormalTransform, FIT_SAMPLE, MAX_FIT_ERROR, SPIKE_HEIGHT};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::Dataset;
use crate::seeds::{self, SeedPart};

/// Number of nonzero coefficients, `round(p (1 - sparsity))` with halves
/// rounded up.
pub fn support_size(p: usize, sparsity: f64) -> usize {
    ((p as f64) * (1.0 - sparsity) + 0.5).floor() as usize
}

/// Places `support_size(p, sparsity)` draws from `N(0, 4^2)` at positions
/// chosen uniformly at random; every other coefficient is exactly zero.
pub fn generate_coefficients(p: usize, sparsity: f64, seed: u64) -> Result<(DVector<f64>, Vec<bool>)> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::InvalidInput(format!("sparsity {sparsity} is outside [0, 1]")));
    }
    let m = support_size(p, sparsity).min(p);
    let mut rng = seeds::rng(seed);
    let mut positions = rand::seq::index::sample(&mut rng, p, m).into_vec();
    positions.sort_unstable();
    let dist = Normal::new(0.0, 4.0).expect("valid normal");
    let mut beta = DVector::zeros(p);
    let mut support = vec![false; p];
    for j in positions {
        let mut v = 0.0;
        while v == 0.0 {
            v = dist.sample(&mut rng);
        }
        beta[j] = v;
        support[j] = true;
    }
    Ok((beta, support))
}

/// `y = X beta + eps` with `eps_i ~ N(0, sigma^2)`. `sigma = 0` gives the
/// noiseless response.
pub fn generate_response(x: &DMatrix<f64>, beta: &DVector<f64>, sigma: f64, seed: u64) -> Result<DVector<f64>> {
    if x.ncols() != beta.len() {
        return Err(Error::DimensionMismatch { expected: x.ncols(), found: beta.len() });
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("noise sd {sigma} must be finite and >= 0")));
    }
    let mut rng = seeds::rng(seed);
    let mut y = x * beta;
    for v in y.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += sigma * e;
    }
    Ok(y)
}

/// I.i.d. standard normal predictors, drawn row by row.
pub fn generate_simple(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeds::rng(seed);
    DMatrix::from_row_iterator(n, p, (0..n * p).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn default_sigma() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    pub p: usize,
    pub sparsity: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub covariance: CovarianceSpec,
    #[serde(default)]
    pub target_skewness: f64,
    /// Defaults to the normal value `p (p + 2)` when absent.
    #[serde(default)]
    pub target_kurtosis: Option<f64>,
    /// Independent standard normal predictors; ignores covariance and targets.
    #[serde(default)]
    pub simple: bool,
    #[serde(default)]
    pub seed: u64,
    /// Keeps the coefficient vector fixed across seeds when set.
    #[serde(default)]
    pub coefficient_seed: Option<u64>,
}

impl Scenario {
    pub fn kurtosis_target(&self) -> f64 {
        self.target_kurtosis.unwrap_or((self.p * (self.p + 2)) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n < 2 || self.p == 0 {
            return bad(format!("scenario needs n >= 2 and p >= 1 (got n={}, p={})", self.n, self.p));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return bad(format!("sparsity {} is outside [0, 1]", self.sparsity));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma {} must be positive", self.sigma));
        }
        let k = self.kurtosis_target();
        if !(self.target_skewness.is_finite() && self.target_skewness >= 0.0 && k.is_finite() && k > 0.0) {
            return bad("Mardia targets must be finite and nonnegative".into());
        }
        if !self.simple {
            self.covariance.validate()?;
            if self.covariance.dim() != self.p {
                return bad(format!(
                    "covariance blocks cover {} predictors, scenario has {}",
                    self.covariance.dim(),
                    self.p
                ));
            }
        }
        Ok(())
    }

    /// Seed of one component stream, derived from the scenario seed.
    pub fn component_seed(&self, component: &str) -> u64 {
        seeds::derive_seed(self.seed, &[SeedPart::Label(component)])
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub dataset: Dataset,
    pub beta_true: DVector<f64>,
    pub support_true: Vec<bool>,
    pub sigma_true: DMatrix<f64>,
    /// Sample Mardia statistics of the predictors; `None` when `n <= p`.
    pub achieved_skewness: Option<f64>,
    pub achieved_kurtosis: Option<f64>,
}

pub fn realize_scenario(s: &Scenario) -> Result<SimulatedDataset> {
    s.validate()?;
    let (x, sigma_true) = if s.simple {
        (generate_simple(s.n, s.p, s.component_seed("predictors")), DMatrix::identity(s.p, s.p))
    } else {
        let sigma = build_covariance(&s.covariance, s.component_seed("covariance"))?;
        let x = generate_nonnormal(
            s.n,
            &sigma,
            s.target_skewness,
            s.kurtosis_target(),
            s.component_seed("predictors"),
        )?;
        (x, sigma)
    };
    let beta_seed = s.coefficient_seed.unwrap_or_else(|| s.component_seed("coefficients"));
    let (beta_true, support_true) = generate_coefficients(s.p, s.sparsity, beta_seed)?;
    let y = generate_response(&x, &beta_true, s.sigma, s.component_seed("noise"))?;
    let (achieved_skewness, achieved_kurtosis) = match metrics::mardia(&x) {
        Ok((a, b)) => (Some(a), Some(b)),
        Err(_) => (None, None),
    };
    Ok(SimulatedDataset {
        dataset: Dataset::new(x, y)?,
        beta_true,
        support_true,
        sigma_true,
        achieved_skewness,
        achieved_kurtosis,
    })
}
