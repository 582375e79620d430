//! Weighted elastic net by cyclic coordinate descent.
//!
//! The objective is
//!
//! ```text
//! (1/2n) ||y - X beta||^2 + lambda * sum_j w_j [ (1 - alpha)/2 beta_j^2 + alpha |beta_j| ]
//! ```
//!
//! with per-coefficient weights `w_j >= 0`. A weight of `f64::INFINITY`
//! removes the column from the problem: it is never updated and its
//! coefficient is exactly zero.
//!
//! Updates use the covariance form: the gradient `x_jᵀ r / n` is maintained
//! for every column and each coefficient move costs one Gram column, which is
//! computed lazily the first time that coefficient becomes nonzero.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{FitResult, MethodTag, StandardizedDesign};
use crate::seeds;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_N_LAMBDA: usize = 100;
/// Active-set sweeps between attempts at an exact jump on the sign pattern.
const POLISH_EVERY: usize = 8;

/// Mixing parameter, penalty level and per-coefficient weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    alpha: f64,
    lambda: f64,
    weights: Vec<f64>,
}

impl PenaltyConfig {
    pub fn new(alpha: f64, lambda: f64, weights: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        validate_weights(&weights)?;
        Ok(Self { alpha, lambda, weights })
    }

    pub fn unit(alpha: f64, lambda: f64, p: usize) -> Result<Self> {
        Self::new(alpha, lambda, vec![1.0; p])
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.alpha, lambda, self.weights.clone())
    }

    fn l1(&self, j: usize) -> f64 {
        self.lambda * self.alpha * self.weights[j]
    }

    fn l2(&self, j: usize) -> f64 {
        self.lambda * (1.0 - self.alpha) * self.weights[j]
    }
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    match weights.iter().position(|w| w.is_nan() || *w < 0.0) {
        Some(j) => Err(Error::InvalidInput(format!("weight {j} is negative or NaN"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest absolute coefficient change allowed on the final full sweep.
    pub tol: f64,
    /// Budget of coordinate sweeps (full and active-set sweeps both count).
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Coordinate-descent state bound to one standardized design. Reusing one
/// solver along a descending lambda path keeps the Gram cache warm.
pub struct CdSolver<'a> {
    x: &'a DMatrix<f64>,
    n: f64,
    xty: Vec<f64>,
    diag: Vec<f64>,
    gram: Vec<Option<Box<[f64]>>>,
    beta: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a> CdSolver<'a> {
    pub fn new(sd: &'a StandardizedDesign) -> Self {
        Self::from_parts(sd.xs(), sd.yc())
    }

    fn from_parts(x: &'a DMatrix<f64>, y: &DVector<f64>) -> Self {
        let n = x.nrows() as f64;
        let p = x.ncols();
        let xty: Vec<f64> = (0..p).map(|j| x.column(j).dot(y) / n).collect();
        let diag = (0..p).map(|j| x.column(j).norm_squared() / n).collect();
        Self {
            x,
            n,
            grad: xty.clone(),
            xty,
            diag,
            gram: vec![None; p],
            beta: vec![0.0; p],
        }
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    fn ensure_gram(&mut self, k: usize) {
        if self.gram[k].is_none() {
            let col = self.x.tr_mul(&self.x.column(k)) / self.n;
            self.gram[k] = Some(col.as_slice().into());
        }
    }

    pub fn set_beta(&mut self, beta: &[f64]) {
        assert_eq!(beta.len(), self.beta.len());
        self.grad.clone_from(&self.xty);
        self.beta.copy_from_slice(beta);
        for k in 0..beta.len() {
            if beta[k] != 0.0 {
                self.ensure_gram(k);
                let g = self.gram[k].as_deref().unwrap();
                for (gi, gk) in self.grad.iter_mut().zip(g) {
                    *gi -= beta[k] * gk;
                }
            }
        }
    }

    /// Moves coordinate `j` to its minimizer and returns the absolute change.
    fn update(&mut self, j: usize, l1: f64, l2: f64) -> f64 {
        let old = self.beta[j];
        let z = self.grad[j] + self.diag[j] * old;
        let new = soft_threshold(z, l1) / (self.diag[j] + l2);
        if new == old {
            return 0.0;
        }
        let delta = new - old;
        self.ensure_gram(j);
        let g = self.gram[j].as_deref().unwrap();
        for (gi, gj) in self.grad.iter_mut().zip(g) {
            *gi -= delta * gj;
        }
        self.beta[j] = new;
        delta.abs()
    }

    fn sweep(&mut self, pen: &PenaltyConfig, coords: &[usize]) -> f64 {
        coords
            .iter()
            .map(|&j| self.update(j, pen.l1(j), pen.l2(j)))
            .fold(0.0, f64::max)
    }

    /// Zeroes excluded coordinates and returns the indices that may move.
    fn prepare(&mut self, pen: &PenaltyConfig) -> Vec<usize> {
        let mut free = Vec::with_capacity(self.beta.len());
        for j in 0..self.beta.len() {
            if pen.weights[j].is_infinite() {
                if self.beta[j] != 0.0 {
                    // move to zero through the gradient bookkeeping
                    let delta = -self.beta[j];
                    self.ensure_gram(j);
                    let g = self.gram[j].as_deref().unwrap();
                    for (gi, gj) in self.grad.iter_mut().zip(g) {
                        *gi -= delta * gj;
                    }
                    self.beta[j] = 0.0;
                }
            } else {
                free.push(j);
            }
        }
        free
    }

    /// One cyclic pass over every finite-weight coordinate; returns the
    /// largest absolute change.
    pub fn full_sweep(&mut self, pen: &PenaltyConfig) -> f64 {
        let free = self.prepare(pen);
        self.sweep(pen, &free)
    }

    /// Runs full sweeps alternating with active-set cycling until a full
    /// sweep moves no coefficient by `tol` or more.
    pub fn solve(&mut self, pen: &PenaltyConfig, opts: &SolverOptions) -> Result<usize> {
        assert_eq!(pen.weights.len(), self.beta.len());
        let free = self.prepare(pen);
        let mut sweeps = 0usize;
        let mut active = Vec::with_capacity(free.len());
        loop {
            let change = self.sweep(pen, &free);
            sweeps += 1;
            if change < opts.tol {
                return Ok(sweeps);
            }
            if sweeps >= opts.max_iter {
                return Err(self.no_convergence(opts.max_iter, change));
            }
            active.clear();
            active.extend(free.iter().copied().filter(|&j| self.beta[j] != 0.0));
            let mut inner = 0usize;
            loop {
                let change = self.sweep(pen, &active);
                sweeps += 1;
                inner += 1;
                if change < opts.tol {
                    break;
                }
                if sweeps >= opts.max_iter {
                    return Err(self.no_convergence(opts.max_iter, change));
                }
                if inner % POLISH_EVERY == 0 {
                    self.polish(pen, &active);
                }
            }
        }
    }

    /// Active-set step on the current sign pattern. With the signs `s` of
    /// the nonzero coordinates fixed, the objective is a quadratic whose
    /// minimizer solves `(G_AA + diag(l2)) b = xty_A - l1 * s`. The iterate
    /// moves toward `b`, stopping where the first coordinate reaches zero
    /// (that coordinate is then set to exactly zero), and the move is kept
    /// only if the objective decreases. This ends the slow zig-zag of
    /// coordinate descent between strongly correlated columns.
    fn polish(&mut self, pen: &PenaltyConfig, active: &[usize]) {
        let a: Vec<usize> = active.iter().copied().filter(|&j| self.beta[j] != 0.0).collect();
        let m = a.len();
        if m == 0 {
            return;
        }
        let mut lhs = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        for (r, &j) in a.iter().enumerate() {
            self.ensure_gram(j);
            let g = self.gram[j].as_deref().unwrap();
            for (c, &k) in a.iter().enumerate() {
                lhs[(r, c)] = g[k];
            }
            lhs[(r, r)] += pen.l2(j);
            rhs[r] = self.xty[j] - pen.l1(j) * self.beta[j].signum();
        }
        let Some(chol) = lhs.clone().cholesky() else { return };
        let b = chol.solve(&rhs);
        if !b.iter().all(|v| v.is_finite()) {
            return;
        }
        let cur = DVector::from_iterator(m, a.iter().map(|&j| self.beta[j]));
        let d = &b - &cur;
        // largest step that keeps every sign
        let mut t = 1.0f64;
        let mut blocking = Vec::new();
        for r in 0..m {
            if d[r] != 0.0 && (cur[r] + d[r]) * cur[r] <= 0.0 {
                let tr = -cur[r] / d[r];
                if tr < t {
                    t = tr;
                    blocking.clear();
                }
                if tr <= t {
                    blocking.push(r);
                }
            }
        }
        if t <= 0.0 {
            return;
        }
        // objective change along the step; on a fixed orthant the penalty
        // is linear plus quadratic, so the change is exact
        let step = &d * t;
        let quad = step.dot(&(&lhs * &step));
        let lin: f64 = (0..m)
            .map(|r| {
                let j = a[r];
                -self.grad[j] * step[r] + pen.l1(j) * cur[r].signum() * step[r] + pen.l2(j) * cur[r] * step[r]
            })
            .sum();
        if !(lin + 0.5 * quad < 0.0) {
            return;
        }
        for r in 0..m {
            let j = a[r];
            let new = if blocking.contains(&r) { 0.0 } else { cur[r] + step[r] };
            let delta = new - self.beta[j];
            if delta != 0.0 {
                let g = self.gram[j].as_deref().unwrap();
                for (gi, gj) in self.grad.iter_mut().zip(g) {
                    *gi -= delta * gj;
                }
                self.beta[j] = new;
            }
        }
    }

    fn no_convergence(&self, max_iter: usize, max_change: f64) -> Error {
        Error::NoConvergence { max_iter, max_change, beta: self.beta.clone() }
    }
}

fn check_shapes(sd: &StandardizedDesign, pen: &PenaltyConfig) -> Result<()> {
    if pen.weights.len() != sd.p() {
        return Err(Error::DimensionMismatch { expected: sd.p(), found: pen.weights.len() });
    }
    Ok(())
}

fn default_tag(alpha: f64) -> MethodTag {
    if alpha == 1.0 {
        MethodTag::Lasso
    } else {
        MethodTag::Enet
    }
}

/// Minimizes the weighted elastic-net objective at a single penalty.
pub fn cd_fit(
    sd: &StandardizedDesign,
    pen: &PenaltyConfig,
    warm_start: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<FitResult> {
    check_shapes(sd, pen)?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let mut solver = CdSolver::new(sd);
    if let Some(w) = warm_start {
        if w.len() != sd.p() {
            return Err(Error::DimensionMismatch { expected: sd.p(), found: w.len() });
        }
        solver.set_beta(w.as_slice());
    }
    solver.solve(pen, opts)?;
    let fit = FitResult::new(DVector::from_column_slice(solver.beta()), pen.lambda, pen.alpha, default_tag(pen.alpha));
    audit_fit(sd, pen, &fit);
    Ok(fit)
}

/// Warm-started fits along `grid[..=upto]`; returns the fit at `grid[upto]`.
pub fn fit_path(
    sd: &StandardizedDesign,
    alpha: f64,
    weights: &[f64],
    grid: &[f64],
    upto: usize,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let mut pen = PenaltyConfig::new(alpha, grid[0], weights.to_vec())?;
    check_shapes(sd, &pen)?;
    let mut solver = CdSolver::new(sd);
    for &lambda in &grid[..=upto] {
        pen.lambda = lambda;
        solver.solve(&pen, opts)?;
    }
    let fit = FitResult::new(DVector::from_column_slice(solver.beta()), pen.lambda, alpha, default_tag(alpha));
    audit_fit(sd, &pen, &fit);
    Ok(fit)
}

/// Value of the penalized objective. Excluded coordinates contribute nothing
/// when zero and `+inf` otherwise.
pub fn objective(sd: &StandardizedDesign, pen: &PenaltyConfig, beta: &DVector<f64>) -> f64 {
    let n = sd.n() as f64;
    let r = sd.yc() - sd.xs() * beta;
    let loss = r.norm_squared() / (2.0 * n);
    let penalty: f64 = beta
        .iter()
        .zip(&pen.weights)
        .map(|(&b, &w)| {
            if b == 0.0 {
                0.0
            } else {
                w * ((1.0 - pen.alpha) / 2.0 * b * b + pen.alpha * b.abs())
            }
        })
        .sum();
    loss + pen.lambda * penalty
}

/// Worst stationarity violation of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub max_violation: f64,
    pub worst_index: Option<usize>,
}

/// Stationarity residuals of the weighted elastic net at `beta`:
///
/// * `beta_j != 0`: `|x_jᵀr/n - lambda w_j (alpha sign(beta_j) + (1-alpha) beta_j)|`
/// * `beta_j == 0`, finite weight: `max(0, |x_jᵀr/n| - lambda w_j alpha)`
/// * infinite weight: `0` when `beta_j` is exactly zero, `inf` otherwise
pub fn kkt_violation(sd: &StandardizedDesign, pen: &PenaltyConfig, beta: &DVector<f64>) -> KktReport {
    let n = sd.n() as f64;
    let r = sd.yc() - sd.xs() * beta;
    let grad = sd.xs().tr_mul(&r) / n;
    let mut report = KktReport { max_violation: 0.0, worst_index: None };
    for j in 0..beta.len() {
        let (b, w, g) = (beta[j], pen.weights[j], grad[j]);
        let v = if w.is_infinite() {
            if b == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else if b != 0.0 {
            (g - pen.lambda * w * (pen.alpha * b.signum() + (1.0 - pen.alpha) * b)).abs()
        } else {
            (g.abs() - pen.lambda * w * pen.alpha).max(0.0)
        };
        if v > report.max_violation {
            report = KktReport { max_violation: v, worst_index: Some(j) };
        }
    }
    report
}

pub fn check_kkt(sd: &StandardizedDesign, pen: &PenaltyConfig, beta: &DVector<f64>, tol: f64) -> bool {
    kkt_violation(sd, pen, beta).max_violation <= tol
}

#[cfg(feature = "kkt-audit")]
pub mod audit {
    //! Process-wide record of stationarity checks on emitted fits.

    use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

    pub const TOLERANCE: f64 = 1e-5;

    static CHECKED: AtomicUsize = AtomicUsize::new(0);
    static FAILED: AtomicUsize = AtomicUsize::new(0);
    static WORST: AtomicU64 = AtomicU64::new(0);

    #[derive(Debug, Clone, Copy)]
    pub struct Snapshot {
        pub checked: usize,
        pub failed: usize,
        pub worst_violation: f64,
    }

    pub(crate) fn record(violation: f64) {
        CHECKED.fetch_add(1, Ordering::Relaxed);
        if !(violation <= TOLERANCE) {
            FAILED.fetch_add(1, Ordering::Relaxed);
        }
        // non-negative floats order like their bit patterns
        WORST.fetch_max(violation.to_bits(), Ordering::Relaxed);
    }

    pub fn snapshot() -> Snapshot {
        Snapshot {
            checked: CHECKED.load(Ordering::Relaxed),
            failed: FAILED.load(Ordering::Relaxed),
            worst_violation: f64::from_bits(WORST.load(Ordering::Relaxed)),
        }
    }
}

#[cfg(feature = "kkt-audit")]
fn audit_fit(sd: &StandardizedDesign, pen: &PenaltyConfig, fit: &FitResult) {
    audit::record(kkt_violation(sd, pen, fit.beta()).max_violation);
}

#[cfg(not(feature = "kkt-audit"))]
fn audit_fit(_: &StandardizedDesign, _: &PenaltyConfig, _: &FitResult) {}

/// Default ratio `lambda_min / lambda_max`.
pub fn default_lambda_ratio(n: usize, p: usize) -> f64 {
    if n > p {
        1e-3
    } else {
        1e-2
    }
}

/// Largest penalty with a nonzero solution,
/// `max_j |x_jᵀy| / (n alpha w_j)` over finite positive weights.
pub fn lambda_max(sd: &StandardizedDesign, alpha: f64, weights: &[f64]) -> Result<f64> {
    if weights.len() != sd.p() {
        return Err(Error::DimensionMismatch { expected: sd.p(), found: weights.len() });
    }
    validate_weights(weights)?;
    if alpha <= 0.0 {
        return Err(Error::AlphaZero);
    }
    if weights.iter().all(|w| w.is_infinite()) {
        return Err(Error::AllWeightsInfinite);
    }
    let n = sd.n() as f64;
    let mut lmax = 0.0f64;
    for (j, &w) in weights.iter().enumerate() {
        if w.is_finite() && w > 0.0 {
            let c = sd.xs().column(j).dot(sd.yc()).abs() / n;
            lmax = lmax.max(c / (alpha * w));
        }
    }
    if !(lmax > 0.0 && lmax.is_finite()) {
        return Err(Error::DegenerateGrid);
    }
    Ok(lmax)
}

/// Log-spaced descending grid from `lambda_max` down to `lambda_max * ratio`.
pub fn lambda_grid(
    sd: &StandardizedDesign,
    alpha: f64,
    weights: &[f64],
    n_lambda: usize,
    ratio: f64,
) -> Result<Vec<f64>> {
    if n_lambda < 2 {
        return Err(Error::InvalidInput("n_lambda must be at least 2".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    // tiny upward nudge so that rounding can never leave a coefficient alive
    let top = lambda_max(sd, alpha, weights)? * (1.0 + 1e-10);
    let step = ratio.ln() / (n_lambda - 1) as f64;
    Ok((0..n_lambda).map(|k| top * (step * k as f64).exp()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CvRule {
    /// Smallest mean held-out error; ties go to the larger lambda.
    #[default]
    MinError,
    /// Largest lambda whose error is within one standard error of the minimum.
    OneStandardError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub n_lambda: usize,
    /// `None` picks [`default_lambda_ratio`].
    pub lambda_ratio: Option<f64>,
    pub rule: CvRule,
    pub solver: SolverOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            seed: 0,
            n_lambda: DEFAULT_N_LAMBDA,
            lambda_ratio: None,
            rule: CvRule::MinError,
            solver: SolverOptions::default(),
        }
    }
}

impl CvOptions {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    pub cv_mean_error: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub lambda_best: f64,
    pub best_index: usize,
    pub fold_assignment_seed: u64,
}

/// Fold label of every row: a seeded shuffle dealt round-robin into `k`
/// parts whose sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeds::rng(seed));
    let mut folds = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        folds[row] = pos % k;
    }
    folds
}

fn fold_path_errors(
    sd: &StandardizedDesign,
    alpha: f64,
    weights: &[f64],
    grid: &[f64],
    folds: &[usize],
    fold: usize,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let train: Vec<usize> = (0..sd.n()).filter(|&i| folds[i] != fold).collect();
    let test: Vec<usize> = (0..sd.n()).filter(|&i| folds[i] == fold).collect();
    // fold statistics relative to the full-data standardized scale
    let yc_train = DVector::from_iterator(train.len(), train.iter().map(|&i| sd.yc()[i]));
    let tr = StandardizedDesign::from_raw(&sd.xs().select_rows(&train), &yc_train)?;
    let xs_test = tr.transform(&sd.xs().select_rows(&test))?;
    let y_test: Vec<f64> = test.iter().map(|&i| sd.yc()[i] - tr.y_mean()).collect();

    let mut pen = PenaltyConfig::new(alpha, grid[0], weights.to_vec())?;
    let mut solver = CdSolver::new(&tr);
    let mut errors = Vec::with_capacity(grid.len());
    for &lambda in grid {
        pen.lambda = lambda;
        solver.solve(&pen, opts)?;
        let beta = solver.beta();
        let nz: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        let mse = y_test
            .iter()
            .enumerate()
            .map(|(r, &yt)| {
                let pred: f64 = nz.iter().map(|&j| xs_test[(r, j)] * beta[j]).sum();
                (yt - pred).powi(2)
            })
            .sum::<f64>()
            / y_test.len() as f64;
        errors.push(mse);
    }
    Ok(errors)
}

/// K-fold cross-validation over a lambda grid computed on the full design.
/// Each training fold is re-standardized with its own statistics.
pub fn cv_select_lambda(
    sd: &StandardizedDesign,
    alpha: f64,
    weights: &[f64],
    opts: &CvOptions,
) -> Result<CvResult> {
    let n = sd.n();
    let k = opts.folds;
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!("need 2 <= folds <= n, got folds={k}, n={n}")));
    }
    let ratio = opts.lambda_ratio.unwrap_or_else(|| default_lambda_ratio(n, sd.p()));
    let grid = lambda_grid(sd, alpha, weights, opts.n_lambda, ratio)?;
    let folds = fold_assignment(n, k, opts.seed);

    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| fold_path_errors(sd, alpha, weights, &grid, &folds, f, &opts.solver))
        .collect::<Result<_>>()?;

    let kf = k as f64;
    let mut mean = vec![0.0; grid.len()];
    let mut se = vec![0.0; grid.len()];
    for l in 0..grid.len() {
        let m = per_fold.iter().map(|e| e[l]).sum::<f64>() / kf;
        let var = per_fold.iter().map(|e| (e[l] - m).powi(2)).sum::<f64>() / (kf - 1.0);
        mean[l] = m;
        se[l] = (var / kf).sqrt();
    }
    let mut best = 0;
    for l in 1..grid.len() {
        if mean[l] < mean[best] {
            best = l;
        }
    }
    if opts.rule == CvRule::OneStandardError {
        let bound = mean[best] + se[best];
        best = (0..=best).find(|&l| mean[l] <= bound).unwrap_or(best);
    }
    Ok(CvResult {
        lambda_best: grid[best],
        best_index: best,
        lambda_grid: grid,
        cv_mean_error: mean,
        cv_se: se,
        fold_assignment_seed: opts.seed,
    })
}

/// Cross-validates lambda, then refits the full design along the grid down
/// to the selected value.
pub fn cv_fit(
    sd: &StandardizedDesign,
    alpha: f64,
    weights: &[f64],
    opts: &CvOptions,
) -> Result<(FitResult, CvResult)> {
    let cv = cv_select_lambda(sd, alpha, weights, opts)?;
    let fit = fit_path(sd, alpha, weights, &cv.lambda_grid, cv.best_index, &opts.solver)?;
    Ok((fit, cv))
}
