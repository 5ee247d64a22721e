//! Lasso on standardized regressions: the exponential λ-grid, coordinate
//! descent with warm starts, BIC tuning and rescaling to natural units.
//!
//! The objective is `(1/n)‖ỹ - X̃β‖² + λ‖β‖₁`. With
//! [`LassoOptions::raw_objective`] the unnormalized `‖ỹ - X̃β‖² + λ‖β‖₁` is
//! used instead, which is the same problem at `λ/n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::linalg::{backward_solve, cholesky_prefix, forward_solve};

/// Exponents of the default grid: 50 equidistant values from 4 down to -15.
pub const GRID_EXPONENT_HI: f64 = 4.0;
pub const GRID_EXPONENT_LO: f64 = -15.0;
pub const GRID_COUNT: usize = 50;

/// Columns with sample variance at or below this are dropped.
const MIN_COLUMN_VARIANCE: f64 = 1e-12;

/// Coefficients at or below this magnitude count as zero for the BIC.
pub const NONZERO_THRESHOLD: f64 = 1e-12;

/// Active-set sweeps between attempts to solve the active problem directly;
/// the first attempt follows the first active sweep.
const POLISH_EVERY: usize = 25;

/// Consecutive support-shrinking steps per polish attempt.
const MAX_PARTIAL_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub exponent_hi: f64,
    pub exponent_lo: f64,
    pub count: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { exponent_hi: GRID_EXPONENT_HI, exponent_lo: GRID_EXPONENT_LO, count: GRID_COUNT }
    }
}

impl GridSpec {
    pub fn exponents(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.exponent_hi];
        }
        let step = (self.exponent_lo - self.exponent_hi) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.exponent_lo } else { self.exponent_hi + i as f64 * step })
            .collect()
    }

    /// `{2^e}` over the exponents, descending, followed by 0.
    pub fn lambdas(&self) -> Vec<f64> {
        let mut grid: Vec<f64> = self.exponents().into_iter().map(pow2).collect();
        grid.push(0.0);
        grid
    }
}

fn pow2(e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() < 1000.0 {
        2f64.powi(e as i32)
    } else {
        e.exp2()
    }
}

/// The default 51-point grid `{2^k : k ∈ 4, ..., -15} ∪ {0}`.
pub fn lambda_grid() -> Vec<f64> {
    GridSpec::default().lambdas()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    pub raw_objective: bool,
    /// Converged when no coefficient moves more than this in a full sweep.
    pub tolerance: f64,
    pub kkt_tolerance: f64,
    pub max_sweeps: usize,
    /// The path stops after the first solution whose support exceeds this
    /// fraction of the rows; the BIC is unreliable beyond it.
    pub max_support_fraction: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { raw_objective: false, tolerance: 1e-8, kkt_tolerance: 1e-7, max_sweeps: 100_000, max_support_fraction: 0.5 }
    }
}

/// A regression with unit-variance response and columns.
#[derive(Debug, Clone)]
pub struct StandardizedProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    pub y_scale: f64,
    /// Scale of each retained column.
    pub col_scales: Vec<f64>,
    /// Original indices of the retained columns.
    pub kept: Vec<usize>,
    /// Original indices of columns dropped for zero variance.
    pub dropped: Vec<usize>,
    pub n_columns: usize,
    gram: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone, n: usize) -> f64 {
    let mean = values.clone().sum::<f64>() / n as f64;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Divides the response and every column by its sample standard deviation
/// (no centering). Zero-variance columns are dropped.
pub fn standardize(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<StandardizedProblem> {
    let (n, m) = x.shape();
    if y.len() != n {
        return Err(ModelError::Invalid(format!("design has {n} rows but response has {}", y.len())));
    }
    if n < 2 {
        return Err(ModelError::Insufficient(format!("{n} observations")));
    }
    let y_scale = sample_sd(y.iter().copied(), n);
    if !(y_scale * y_scale > MIN_COLUMN_VARIANCE) {
        return Err(ModelError::ConstantSeries);
    }
    let mut kept = Vec::with_capacity(m);
    let mut dropped = Vec::new();
    let mut col_scales = Vec::with_capacity(m);
    for j in 0..m {
        let sd = sample_sd(x.column(j).iter().copied(), n);
        if sd * sd > MIN_COLUMN_VARIANCE {
            kept.push(j);
            col_scales.push(sd);
        } else {
            dropped.push(j);
        }
    }
    let xs = DMatrix::from_fn(n, kept.len(), |i, j| x[(i, kept[j])] / col_scales[j]);
    let ys = y / y_scale;
    Ok(StandardizedProblem::from_parts(xs, ys, y_scale, col_scales, kept, dropped, m))
}

impl StandardizedProblem {
    fn from_parts(
        x: DMatrix<f64>,
        y: DVector<f64>,
        y_scale: f64,
        col_scales: Vec<f64>,
        kept: Vec<usize>,
        dropped: Vec<usize>,
        n_columns: usize,
    ) -> Self {
        let n = x.nrows() as f64;
        let m = x.ncols();
        let g = x.tr_mul(&x) / n;
        let mut gram = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                gram[i * m + j] = g[(i, j)];
            }
        }
        let xty = (x.tr_mul(&y) / n).as_slice().to_vec();
        let yty = y.dot(&y);
        Self { x, y, y_scale, col_scales, kept, dropped, n_columns, gram, xty, yty }
    }

    /// Wraps an already standardized design without rescaling it.
    pub fn from_standardized(x: DMatrix<f64>, y: DVector<f64>) -> Self {
        let m = x.ncols();
        Self::from_parts(x, y, 1.0, vec![1.0; m], (0..m).collect(), Vec::new(), m)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of retained columns.
    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Smallest λ of the normalized objective with an all-zero solution.
    pub fn lambda_max(&self) -> f64 {
        2.0 * self.xty.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn residual_sum_of_squares(&self, beta: &[f64]) -> f64 {
        let fitted = &self.x * DVector::from_column_slice(beta);
        (&self.y - fitted).norm_squared()
    }

    /// `(1/n)‖ỹ - X̃β‖² + λ‖β‖₁` evaluated on the design.
    pub fn objective(&self, beta: &[f64], lambda: f64) -> f64 {
        self.residual_sum_of_squares(beta) / self.n() as f64 + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// `(2/n) X̃ᵀ(ỹ - X̃β)`, the smooth part of the KKT conditions.
    pub fn score(&self, beta: &[f64]) -> Vec<f64> {
        let resid = &self.y - &self.x * DVector::from_column_slice(beta);
        (self.x.tr_mul(&resid) * (2.0 / self.n() as f64)).as_slice().to_vec()
    }

    /// Largest violation of the lasso optimality conditions at `lambda`.
    pub fn kkt_violation(&self, beta: &[f64], lambda: f64) -> f64 {
        kkt_violation_from_score(&self.score(beta), beta, lambda)
    }

    fn effective_lambda(&self, lambda: f64, opts: &LassoOptions) -> f64 {
        if opts.raw_objective {
            lambda / self.n() as f64
        } else {
            lambda
        }
    }
}

fn kkt_violation_from_score(score: &[f64], beta: &[f64], lambda: f64) -> f64 {
    score
        .iter()
        .zip(beta)
        .map(|(&g, &b)| if b == 0.0 { (g.abs() - lambda).max(0.0) } else { (g - lambda * b.signum()).abs() })
        .fold(0.0, f64::max)
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    z.signum() * (z.abs() - gamma).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdSolution {
    pub beta: Vec<f64>,
    pub sweeps: usize,
    /// Objective after each sweep, when requested.
    pub objective_trace: Vec<f64>,
}

enum Polish {
    Full,
    Partial,
    Rejected,
}

/// Coordinate-descent state with `r = c - Gβ` maintained incrementally,
/// where `G = X̃ᵀX̃/n` and `c = X̃ᵀỹ/n`.
struct Descent<'a> {
    prob: &'a StandardizedProblem,
    lambda: f64,
    beta: Vec<f64>,
    r: Vec<f64>,
}

impl<'a> Descent<'a> {
    fn new(prob: &'a StandardizedProblem, lambda: f64, warm: &[f64]) -> Self {
        let mut d = Self { prob, lambda, beta: warm.to_vec(), r: Vec::new() };
        d.refresh();
        d
    }

    fn refresh(&mut self) {
        let m = self.prob.m();
        let g = &self.prob.gram;
        self.r = (0..m)
            .map(|i| {
                let row = &g[i * m..(i + 1) * m];
                self.prob.xty[i] - row.iter().zip(&self.beta).filter(|(_, b)| **b != 0.0).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
    }

    fn update(&mut self, j: usize) -> f64 {
        let m = self.prob.m();
        let gjj = self.prob.gram[j * m + j];
        let old = self.beta[j];
        let z = self.r[j] + gjj * old;
        let new = soft_threshold(z, 0.5 * self.lambda) / gjj;
        let delta = new - old;
        if delta != 0.0 {
            self.beta[j] = new;
            let row = &self.prob.gram[j * m..(j + 1) * m];
            for (ri, gij) in self.r.iter_mut().zip(row) {
                *ri -= gij * delta;
            }
        }
        delta.abs()
    }

    fn sweep(&mut self, coords: &[usize]) -> f64 {
        coords.iter().fold(0.0, |acc, &j| acc.max(self.update(j)))
    }

    fn sweep_all(&mut self) -> f64 {
        (0..self.prob.m()).fold(0.0, |acc, j| acc.max(self.update(j)))
    }

    fn objective(&self) -> f64 {
        let c = &self.prob.xty;
        let n = self.prob.n() as f64;
        let mut value = self.prob.yty / n;
        for j in 0..self.beta.len() {
            let b = self.beta[j];
            if b != 0.0 {
                value += -c[j] * b - b * self.r[j] + self.lambda * b.abs();
            }
        }
        value
    }

    fn kkt_violation(&self) -> f64 {
        let score: Vec<f64> = self.r.iter().map(|v| 2.0 * v).collect();
        kkt_violation_from_score(&score, &self.beta, self.lambda)
    }

    /// Solves the stationarity equations on the current support with the
    /// current signs. If some sign would flip, moves only as far as the first
    /// zero crossing and drops that coordinate. The step is kept only if the
    /// objective does not increase.
    fn polish(&mut self) -> Polish {
        let active: Vec<usize> = (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect();
        let k = active.len();
        if k == 0 {
            return Polish::Rejected;
        }
        let m = self.prob.m();
        let mut a = vec![0.0; k * k];
        for (ai, &i) in active.iter().enumerate() {
            for (aj, &j) in active.iter().enumerate() {
                a[ai * k + aj] = self.prob.gram[i * m + j];
            }
        }
        if cholesky_prefix(&mut a, k, 1e-12) < k {
            return Polish::Rejected;
        }
        let mut b: Vec<f64> =
            active.iter().map(|&j| self.prob.xty[j] - 0.5 * self.lambda * self.beta[j].signum()).collect();
        forward_solve(&a, k, k, &mut b);
        backward_solve(&a, k, k, &mut b);
        if b.iter().any(|v| !v.is_finite()) {
            return Polish::Rejected;
        }
        // Largest step along β -> b keeping every sign.
        let mut step = 1.0;
        let mut crossing = None;
        for (ai, (&j, &v)) in active.iter().zip(&b).enumerate() {
            let old = self.beta[j];
            if v == 0.0 || v.signum() != old.signum() {
                let t = old / (old - v);
                if t < step {
                    step = t;
                    crossing = Some(ai);
                }
            }
        }
        let before = self.objective();
        let saved = (self.beta.clone(), self.r.clone());
        for (ai, (&j, &v)) in active.iter().zip(&b).enumerate() {
            let old = self.beta[j];
            let moved = old + step * (v - old);
            self.beta[j] = if Some(ai) == crossing || moved.signum() != old.signum() { 0.0 } else { moved };
        }
        self.refresh();
        if self.objective() > before {
            (self.beta, self.r) = saved;
            Polish::Rejected
        } else if crossing.is_some() {
            Polish::Partial
        } else {
            Polish::Full
        }
    }

    /// Repeats [`Self::polish`] while it only reaches a sign change, which
    /// shrinks the support each time. Returns whether anything was accepted.
    fn polish_support(&mut self) -> bool {
        let mut accepted = false;
        for _ in 0..MAX_PARTIAL_STEPS {
            match self.polish() {
                Polish::Full => return true,
                Polish::Partial => accepted = true,
                Polish::Rejected => return accepted,
            }
        }
        accepted
    }
}

/// Minimizes the lasso objective at `lambda` starting from `warm_start`.
pub fn coordinate_descent(
    prob: &StandardizedProblem,
    lambda: f64,
    warm_start: &[f64],
    opts: &LassoOptions,
) -> Result<CdSolution> {
    solve(prob, lambda, warm_start, opts, false)
}

/// As [`coordinate_descent`], also recording the objective after every sweep.
pub fn coordinate_descent_traced(
    prob: &StandardizedProblem,
    lambda: f64,
    warm_start: &[f64],
    opts: &LassoOptions,
) -> Result<CdSolution> {
    solve(prob, lambda, warm_start, opts, true)
}

fn solve(
    prob: &StandardizedProblem,
    lambda: f64,
    warm_start: &[f64],
    opts: &LassoOptions,
    trace: bool,
) -> Result<CdSolution> {
    let m = prob.m();
    if warm_start.len() != m {
        return Err(ModelError::Invalid(format!("warm start has {} entries for {m} columns", warm_start.len())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(ModelError::Invalid(format!("lambda {lambda} must be finite and non-negative")));
    }
    let lambda = prob.effective_lambda(lambda, opts);
    let mut state = Descent::new(prob, lambda, warm_start);
    let mut objective_trace = Vec::new();
    let mut sweeps = 0;
    let mut last_change = f64::INFINITY;
    let record = |state: &Descent, trace_vec: &mut Vec<f64>| {
        if trace {
            trace_vec.push(state.objective());
        }
    };

    while sweeps < opts.max_sweeps {
        last_change = state.sweep_all();
        sweeps += 1;
        record(&state, &mut objective_trace);
        if last_change < opts.tolerance {
            state.refresh();
            if state.kkt_violation() <= opts.kkt_tolerance {
                return Ok(CdSolution { beta: state.beta, sweeps, objective_trace });
            }
        }
        let active: Vec<usize> = (0..m).filter(|&j| state.beta[j] != 0.0).collect();
        let mut inner = 0;
        let mut polished_at = None;
        while sweeps < opts.max_sweeps {
            let change = state.sweep(&active);
            sweeps += 1;
            inner += 1;
            record(&state, &mut objective_trace);
            if change < opts.tolerance {
                if polished_at != Some(inner - 1) && state.polish_support() {
                    record(&state, &mut objective_trace);
                }
                break;
            }
            if inner % POLISH_EVERY == 1 && state.polish_support() {
                polished_at = Some(inner);
                record(&state, &mut objective_trace);
            }
        }
    }
    Err(ModelError::NoConvergence { lambda, sweeps, max_change: last_change })
}

/// `n ln(RSS/n) + k ln n` with `k` the number of nonzero coefficients.
/// A perfect fit returns negative infinity.
pub fn bic(prob: &StandardizedProblem, beta_tilde: &[f64]) -> f64 {
    let n = prob.n() as f64;
    let rss = prob.residual_sum_of_squares(beta_tilde);
    if !(rss > f64::EPSILON * prob.yty) {
        return f64::NEG_INFINITY;
    }
    let k = beta_tilde.iter().filter(|b| b.abs() > NONZERO_THRESHOLD).count() as f64;
    n * (rss / n).ln() + k * n.ln()
}

/// Solutions along the λ-grid, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    /// One row per computed grid point (standardized scale). Shorter than
    /// `lambdas` when the path saturated before reaching the end of the grid.
    pub betas: Vec<Vec<f64>>,
    pub bic_values: Vec<f64>,
    pub selected_index: usize,
}

impl LassoPath {
    pub fn selected_beta(&self) -> &[f64] {
        &self.betas[self.selected_index]
    }

    pub fn selected_lambda(&self) -> f64 {
        self.lambdas[self.selected_index]
    }

    pub fn is_truncated(&self) -> bool {
        self.betas.len() < self.lambdas.len()
    }
}

/// Computes the path over `grid` (descending) with warm starts and selects
/// the minimum-BIC point, ties going to the larger λ.
///
/// The path stops early once a solution has `n - 1` nonzeros, more than
/// `max_support_fraction · n` nonzeros, or fits perfectly. Near saturation
/// `n ln(RSS/n)` diverges and the BIC would favor interpolating fits.
pub fn fit_lasso_path(prob: &StandardizedProblem, grid: &[f64], opts: &LassoOptions) -> Result<LassoPath> {
    if grid.is_empty() {
        return Err(ModelError::Invalid("empty lambda grid".into()));
    }
    let m = prob.m();
    let n = prob.n();
    let lambda_max = prob.lambda_max();
    let mut betas: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    let mut bic_values = Vec::with_capacity(grid.len());
    let mut warm = vec![0.0; m];
    for &lambda in grid {
        if let (Some(prev), Some(prev_bic)) = (betas.last(), bic_values.last()) {
            let nonzero = prev.iter().filter(|b: &&f64| **b != 0.0).count();
            if nonzero + 1 >= n || nonzero as f64 > opts.max_support_fraction * n as f64 || *prev_bic == f64::NEG_INFINITY {
                break;
            }
        }
        let beta = if prob.effective_lambda(lambda, opts) >= lambda_max {
            vec![0.0; m]
        } else {
            coordinate_descent(prob, lambda, &warm, opts)?.beta
        };
        bic_values.push(bic(prob, &beta));
        warm.clone_from(&beta);
        betas.push(beta);
    }
    let mut selected_index = 0;
    for (i, &value) in bic_values.iter().enumerate() {
        let current = bic_values[selected_index];
        if value.is_finite() && (!current.is_finite() || value < current) {
            selected_index = i;
        }
    }
    Ok(LassoPath { lambdas: grid.to_vec(), betas, bic_values, selected_index })
}

/// Natural-unit coefficients over all original columns: `β̃_i · y_scale / s_i`
/// for retained columns, 0 for dropped ones.
pub fn unstandardize(prob: &StandardizedProblem, beta_tilde: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; prob.n_columns];
    for ((&j, &s), &b) in prob.kept.iter().zip(&prob.col_scales).zip(beta_tilde) {
        out[j] = b * prob.y_scale / s;
    }
    out
}

/// Standardized coefficients spread over all original columns, 0 for dropped ones.
pub fn expand(prob: &StandardizedProblem, beta_tilde: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; prob.n_columns];
    for (&j, &b) in prob.kept.iter().zip(beta_tilde) {
        out[j] = b;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estim::ols;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_problem(n: usize, m: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let x = DMatrix::from_fn(n, m, |_, _| draw());
        let truth: Vec<f64> = (0..m).map(|j| if j < 3 { 1.0 - 0.4 * j as f64 } else { 0.0 }).collect();
        let y = DVector::from_fn(n, |i, _| (0..m).map(|j| x[(i, j)] * truth[j]).sum::<f64>() + draw());
        (x, y)
    }

    #[test]
    fn grid_matches_definition() {
        let grid = lambda_grid();
        assert_eq!(grid.len(), 51);
        assert_eq!(grid[0], 16.0);
        assert_eq!(grid[49], 2f64.powi(-15));
        assert_eq!(grid[50], 0.0);
        let e = GridSpec::default().exponents();
        for pair in e.windows(2) {
            assert!((pair[0] - pair[1] - 19.0 / 49.0).abs() < 1e-12);
        }
        assert!(grid.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn standardize_scales_and_drops() {
        let x = DMatrix::from_fn(4, 3, |i, j| match j {
            0 => [1.0, -1.0, 1.0, -1.0][i] / (4.0f64 / 3.0).sqrt(),
            1 => 2.0 * [1.0, -1.0, 1.0, -1.0][i] / (4.0f64 / 3.0).sqrt(),
            _ => 0.0,
        });
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0, 3.0]);
        let p = standardize(&x, &y).unwrap();
        assert!((p.col_scales[0] - 1.0).abs() < 1e-12);
        assert!((p.col_scales[1] - 2.0).abs() < 1e-12);
        assert_eq!(p.kept, vec![0, 1]);
        assert_eq!(p.dropped, vec![2]);
        for j in 0..2 {
            let sd = sample_sd(p.x().column(j).iter().copied(), 4);
            assert!((sd - 1.0).abs() < 1e-8);
        }
        assert!((sample_sd(p.y().iter().copied(), 4) - 1.0).abs() < 1e-8);
        assert!(matches!(standardize(&x, &DVector::from_element(4, 2.0)), Err(ModelError::ConstantSeries)));
    }

    #[test]
    fn zero_lambda_matches_ols() {
        let (x, y) = random_problem(120, 10, 1);
        let prob = standardize(&x, &y).unwrap();
        let cd = coordinate_descent(&prob, 0.0, &[0.0; 10], &LassoOptions::default()).unwrap();
        let beta = ols(prob.x(), prob.y()).unwrap();
        for j in 0..10 {
            assert!((cd.beta[j] - beta[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn lambda_above_max_gives_zero() {
        let (x, y) = random_problem(60, 8, 2);
        let prob = standardize(&x, &y).unwrap();
        let cd = coordinate_descent(&prob, prob.lambda_max() * 1.0001, &[0.0; 8], &LassoOptions::default()).unwrap();
        assert!(cd.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn raw_objective_rescales_lambda() {
        let (x, y) = random_problem(80, 6, 3);
        let prob = standardize(&x, &y).unwrap();
        let raw = LassoOptions { raw_objective: true, ..LassoOptions::default() };
        let a = coordinate_descent(&prob, 8.0, &[0.0; 6], &raw).unwrap();
        let b = coordinate_descent(&prob, 0.1, &[0.0; 6], &LassoOptions::default()).unwrap();
        for j in 0..6 {
            assert!((a.beta[j] - b.beta[j]).abs() < 1e-7);
        }
    }

    #[test]
    fn objective_never_increases_across_sweeps() {
        let (x, y) = random_problem(50, 30, 4);
        let prob = standardize(&x, &y).unwrap();
        for &lambda in &[0.5, 0.05, 0.001] {
            let cd = coordinate_descent_traced(&prob, lambda, &[0.0; 30], &LassoOptions::default()).unwrap();
            for pair in cd.objective_trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn bic_examples() {
        let (x, y) = random_problem(40, 3, 5);
        let prob = standardize(&x, &y).unwrap();
        let n = 40.0f64;
        let rss0 = prob.y().norm_squared();
        assert!((bic(&prob, &[0.0; 3]) - n * (rss0 / n).ln()).abs() < 1e-10);

        // A coefficient on a column orthogonal to the residual keeps RSS and costs ln n.
        let z = DMatrix::from_fn(4, 2, |i, j| if j == 0 { [1.0, 1.0, -1.0, -1.0][i] } else { [1.0, -1.0, 1.0, -1.0][i] });
        let y = DVector::from_vec(vec![1.5, 0.5, -1.5, -0.5]);
        let p = StandardizedProblem::from_standardized(z.clone(), y);
        let base = [1.0, 0.0];
        let rss = p.residual_sum_of_squares(&base);
        let extra = [1.0, 1e-9];
        assert!(p.residual_sum_of_squares(&extra) >= rss);
        assert!((bic(&p, &extra) - bic(&p, &base) - 4f64.ln()).abs() < 1e-9);

        let exact = StandardizedProblem::from_standardized(z.clone(), z.column(0).into_owned());
        assert_eq!(bic(&exact, &[1.0, 0.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn path_has_kkt_certificates_and_monotone_support() {
        let (x, y) = random_problem(100, 20, 6);
        let prob = standardize(&x, &y).unwrap();
        let path = fit_lasso_path(&prob, &lambda_grid(), &LassoOptions::default()).unwrap();
        assert_eq!(path.betas.len(), 51);
        for (beta, &lambda) in path.betas.iter().zip(&path.lambdas) {
            assert!(prob.kkt_violation(beta, lambda) <= 1e-7, "lambda {lambda}");
        }
        let nnz = |b: &Vec<f64>| b.iter().filter(|v| **v != 0.0).count();
        assert!(nnz(&path.betas[50]) >= nnz(&path.betas[0]));
    }

    #[test]
    fn underdetermined_path_stops_at_saturation() {
        let (x, y) = random_problem(30, 60, 7);
        let prob = standardize(&x, &y).unwrap();
        let path = fit_lasso_path(&prob, &lambda_grid(), &LassoOptions::default()).unwrap();
        assert!(path.is_truncated());
        assert!(path.bic_values[path.selected_index].is_finite());
        for (beta, &lambda) in path.betas.iter().zip(&path.lambdas) {
            assert!(prob.kkt_violation(beta, lambda) <= 1e-7);
        }
    }

    #[test]
    fn unstandardize_examples() {
        let x = DMatrix::from_fn(3, 1, |i, _| [0.0, 4.0, 8.0][i]);
        let y = DVector::from_vec(vec![0.0, 2.0, 4.0]);
        let prob = standardize(&x, &y).unwrap();
        assert!((prob.y_scale - 2.0).abs() < 1e-12 && (prob.col_scales[0] - 4.0).abs() < 1e-12);
        assert!((unstandardize(&prob, &[1.0])[0] - 0.5).abs() < 1e-12);

        let id = StandardizedProblem::from_standardized(DMatrix::identity(3, 3), DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_eq!(unstandardize(&id, &[0.3, -0.2, 0.1]), vec![0.3, -0.2, 0.1]);
    }

    #[test]
    fn unstandardized_ols_matches_natural_units() {
        let (x, y) = random_problem(90, 7, 8);
        let prob = standardize(&x, &y).unwrap();
        let tilde = ols(prob.x(), prob.y()).unwrap();
        let natural = unstandardize(&prob, tilde.as_slice());
        let direct = ols(&x, &y).unwrap();
        for j in 0..7 {
            assert!((natural[j] - direct[j]).abs() < 1e-8);
        }
        let lhs = &x * DVector::from_vec(natural);
        let rhs = prob.x() * &tilde * prob.y_scale;
        assert!((lhs - rhs).amax() < 1e-9);
    }
}
