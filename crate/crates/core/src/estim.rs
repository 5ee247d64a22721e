//! Linear estimators shared by the model families: least squares,
//! Yule-Walker autoregressions (univariate via Levinson-Durbin, multivariate
//! via the block-Toeplitz moment system) with AIC order selection, and PCA.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataio::HOURS;
use crate::error::{ModelError, Result};
use crate::linalg::{backward_solve, cholesky_prefix, forward_solve};

/// `cond(XᵀX)` above this is treated as rank deficient.
const MAX_GRAM_CONDITION: f64 = 1e12;

/// Least-squares coefficients of `y` on the columns of `x`.
///
/// Solved through a Householder QR of `x`; a column whose diagonal entry in
/// `R` is negligible relative to the largest one is reported as dependent.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, m) = x.shape();
    if y.len() != n {
        return Err(ModelError::Invalid(format!("design has {n} rows but response has {}", y.len())));
    }
    if n < m {
        return Err(ModelError::Insufficient(format!("{n} observations for {m} regressors")));
    }
    if m == 0 {
        return Ok(DVector::zeros(0));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..m).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let floor = max_diag / MAX_GRAM_CONDITION.sqrt();
    if let Some(column) = (0..m).find(|&j| !(r[(j, j)].abs() > floor)) {
        return Err(ModelError::RankDeficient { column });
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, m).into_owned();
    r.solve_upper_triangular(&head).ok_or(ModelError::RankDeficient { column: m - 1 })
}

/// Biased sample autocovariances `γ_0..γ_max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoCovariance {
    pub values: Vec<f64>,
    /// Set when the series is constant (`γ_0 = 0`).
    pub degenerate: bool,
}

pub fn sample_autocov(x: &[f64], max_lag: usize) -> Result<AutoCovariance> {
    let n = x.len();
    if n <= max_lag {
        return Err(ModelError::Insufficient(format!("{n} observations for lag {max_lag}")));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let values: Vec<f64> = (0..=max_lag)
        .map(|k| centered[k..].iter().zip(&centered).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect();
    let degenerate = !(values[0] > 0.0);
    if degenerate {
        return Ok(AutoCovariance { values: vec![0.0; max_lag + 1], degenerate });
    }
    Ok(AutoCovariance { values, degenerate })
}

/// Autoregression `x_t = c + Σ φ_k (x_{t-k} - c) + ε_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArFit {
    pub order: usize,
    pub phi: Vec<f64>,
    pub intercept: f64,
    pub innovation_variance: f64,
}

impl ArFit {
    pub fn white_noise(intercept: f64, innovation_variance: f64) -> Self {
        Self { order: 0, phi: Vec::new(), intercept, innovation_variance }
    }

    /// Spectral radius of the companion matrix.
    pub fn spectral_radius(&self) -> f64 {
        companion_spectral_radius(&self.phi)
    }

    pub fn is_stationary(&self) -> bool {
        self.spectral_radius() < 1.0 - 1e-10
    }

    /// One-step prediction from a history in natural units, newest value last.
    pub fn predict(&self, history: &[f64]) -> f64 {
        let c = self.intercept;
        c + self.phi.iter().zip(history.iter().rev()).map(|(p, x)| p * (x - c)).sum::<f64>()
    }
}

/// Spectral radius of the companion matrix of `1 - φ_1 z - ... - φ_p z^p`.
pub fn companion_spectral_radius(phi: &[f64]) -> f64 {
    let p = phi.len();
    if p == 0 {
        return 0.0;
    }
    let mut c = DMatrix::zeros(p, p);
    for (j, v) in phi.iter().enumerate() {
        c[(0, j)] = *v;
    }
    for i in 1..p {
        c[(i, i - 1)] = 1.0;
    }
    c.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solves the Yule-Walker systems of orders `0..=p_max` recursively.
///
/// Each returned fit has intercept 0; callers set the series mean.
pub fn levinson_durbin(acov: &[f64], p_max: usize) -> Result<Vec<ArFit>> {
    if acov.len() < p_max + 1 {
        return Err(ModelError::Insufficient(format!("{} autocovariances for order {p_max}", acov.len())));
    }
    if !(acov[0] > 0.0) {
        return Err(ModelError::ConstantSeries);
    }
    let mut fits = Vec::with_capacity(p_max + 1);
    let mut phi: Vec<f64> = Vec::with_capacity(p_max);
    let mut variance = acov[0];
    fits.push(ArFit::white_noise(0.0, variance));
    for k in 1..=p_max {
        let acc = acov[k] - phi.iter().enumerate().map(|(j, p)| p * acov[k - 1 - j]).sum::<f64>();
        let kappa = acc / variance;
        if !(kappa.abs() < 1.0) {
            return Err(ModelError::NotPositiveDefinite { order: k, kappa });
        }
        let previous = phi.clone();
        for j in 0..k - 1 {
            phi[j] = previous[j] - kappa * previous[k - 2 - j];
        }
        phi.push(kappa);
        variance *= 1.0 - kappa * kappa;
        fits.push(ArFit { order: k, phi: phi.clone(), intercept: 0.0, innovation_variance: variance });
    }
    Ok(fits)
}

/// Order minimizing `n ln σ²_p + 2p`; ties go to the smaller order.
pub fn aic_select(fits: &[ArFit], n: usize) -> Result<usize> {
    if fits.is_empty() {
        return Err(ModelError::Invalid("no candidate orders".into()));
    }
    let mut best = (0, f64::INFINITY);
    for fit in fits {
        if !(fit.innovation_variance > 0.0) {
            return Err(ModelError::DegenerateVariance { order: fit.order, variance: fit.innovation_variance });
        }
        let aic = n as f64 * fit.innovation_variance.ln() + 2.0 * fit.order as f64;
        if aic < best.1 {
            best = (fit.order, aic);
        }
    }
    Ok(best.0)
}

/// Yule-Walker AR fit with AIC order selection up to `p_max` (capped at `n - 1`).
/// A constant series yields an order-0 fit with zero variance.
pub fn fit_ar_yule_walker(series: &[f64], p_max: usize) -> Result<ArFit> {
    let n = series.len();
    if n < 2 {
        return Err(ModelError::Insufficient(format!("{n} observations")));
    }
    let p_max = p_max.min(n - 1);
    let mean = series.iter().sum::<f64>() / n as f64;
    let acov = sample_autocov(series, p_max)?;
    if acov.degenerate {
        return Ok(ArFit::white_noise(mean, 0.0));
    }
    let fits = levinson_durbin(&acov.values, p_max)?;
    let order = aic_select(&fits, n)?;
    let mut fit = fits.into_iter().nth(order).expect("selected order is a candidate");
    fit.intercept = mean;
    Ok(fit)
}

/// Vector autoregression `x_t = c + Σ Φ_k (x_{t-k} - c) + ε_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarFit {
    pub dim: usize,
    pub order: usize,
    /// `phi[k-1][i][j]` is entry `(i, j)` of `Φ_k`.
    pub phi: Vec<Vec<Vec<f64>>>,
    pub intercept: Vec<f64>,
    pub innovation_covariance: Vec<Vec<f64>>,
    /// AIC of every candidate order that was evaluated, starting at order 0.
    pub aic: Vec<f64>,
}

impl VarFit {
    /// One-step prediction from rows in natural units, newest row last.
    pub fn predict(&self, history: &[Vec<f64>]) -> Vec<f64> {
        let c = &self.intercept;
        let mut out = c.clone();
        for (phi_k, row) in self.phi.iter().zip(history.iter().rev()) {
            for i in 0..self.dim {
                out[i] += phi_k[i].iter().zip(row).zip(c).map(|((p, x), m)| p * (x - m)).sum::<f64>();
            }
        }
        out
    }
}

/// Multivariate Yule-Walker fit of the rows of `series` (D x K) with AIC
/// `D ln det Σ_p + 2 K² p` minimized over `p <= p_max`, ties to smaller p.
///
/// The `K(p_max+1)` block-Toeplitz autocovariance matrix is factored once;
/// the order-p system is its leading block, so every candidate's innovation
/// covariance follows from the shared forward substitution. Orders whose
/// leading block is numerically singular are not considered.
pub fn multivar_yule_walker(series: &[Vec<f64>], p_max: usize) -> Result<VarFit> {
    let d = series.len();
    let k = series.first().map_or(0, Vec::len);
    if k == 0 {
        return Err(ModelError::Invalid("series has no columns".into()));
    }
    if series.iter().any(|r| r.len() != k) {
        return Err(ModelError::Invalid("ragged series".into()));
    }
    if d <= k * p_max {
        return Err(ModelError::Insufficient(format!("{d} rows for dimension {k} and order {p_max}")));
    }
    let mut mean = vec![0.0; k];
    for row in series {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= d as f64);
    let x: Vec<Vec<f64>> = series.iter().map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect();

    // gamma[h][i][j] = (1/D) Σ_t x_{t+h,i} x_{t,j}
    let gamma: Vec<Vec<Vec<f64>>> = (0..=p_max)
        .map(|h| {
            let mut g = vec![vec![0.0; k]; k];
            for t in 0..d - h {
                let (lead, lag) = (&x[t + h], &x[t]);
                for i in 0..k {
                    for j in 0..k {
                        g[i][j] += lead[i] * lag[j];
                    }
                }
            }
            g.iter_mut().flatten().for_each(|v| *v /= d as f64);
            g
        })
        .collect();

    let n = k * (p_max + 1);
    let mut toeplitz = vec![0.0; n * n];
    for a in 0..=p_max {
        for b in 0..=p_max {
            for i in 0..k {
                for j in 0..k {
                    let v = if b >= a { gamma[b - a][i][j] } else { gamma[a - b][j][i] };
                    toeplitz[(a * k + i) * n + b * k + j] = v;
                }
            }
        }
    }
    let factored = cholesky_prefix(&mut toeplitz, n, 1e-12);
    if factored < k {
        return Err(ModelError::SingularToeplitz);
    }
    let p_allowed = p_max.min(factored / k);

    // Z = L⁻¹ Rᵀ with block h of Rᵀ equal to Γ(h)ᵀ.
    let rows = k * p_allowed;
    let mut z = vec![vec![0.0; rows]; k];
    for (c, col) in z.iter_mut().enumerate() {
        for h in 1..=p_allowed {
            for i in 0..k {
                col[(h - 1) * k + i] = gamma[h][c][i];
            }
        }
        forward_solve(&toeplitz, n, rows, col);
    }

    let trace: f64 = (0..k).map(|i| gamma[0][i][i]).sum();
    let mut sigma = gamma[0].clone();
    let mut aic = Vec::with_capacity(p_allowed + 1);
    let mut best = (0usize, f64::INFINITY);
    let mut sigmas = Vec::with_capacity(p_allowed + 1);
    for p in 0..=p_allowed {
        if p > 0 {
            for i in 0..k {
                for j in 0..k {
                    let dot: f64 = ((p - 1) * k..p * k).map(|r| z[i][r] * z[j][r]).sum();
                    sigma[i][j] -= dot;
                }
            }
            for i in 0..k {
                for j in 0..i {
                    let avg = 0.5 * (sigma[i][j] + sigma[j][i]);
                    sigma[i][j] = avg;
                    sigma[j][i] = avg;
                }
            }
        }
        let Some(log_det) = log_det_spd(&sigma, trace)? else {
            break;
        };
        let value = d as f64 * log_det + 2.0 * (k * k * p) as f64;
        aic.push(value);
        sigmas.push(sigma.clone());
        if value < best.1 {
            best = (p, value);
        }
    }
    let order = best.0;

    let mut phi = vec![vec![vec![0.0; k]; k]; order];
    let used = k * order;
    for c in 0..k {
        let mut b = z[c][..used].to_vec();
        backward_solve(&toeplitz, n, used, &mut b);
        // b is column c of Bᵀ, whose block r holds Φ_{r+1}ᵀ.
        for (r, phi_r) in phi.iter_mut().enumerate() {
            for j in 0..k {
                phi_r[c][j] = b[r * k + j];
            }
        }
    }
    Ok(VarFit {
        dim: k,
        order,
        phi,
        intercept: mean,
        innovation_covariance: sigmas.swap_remove(order),
        aic,
    })
}

/// `ln det` of a symmetric matrix expected to be positive definite. Returns
/// `None` when it is singular within tolerance and an error when it has an
/// eigenvalue below `-1e-8` relative to `scale`.
fn log_det_spd(m: &[Vec<f64>], scale: f64) -> Result<Option<f64>> {
    let k = m.len();
    let mut a: Vec<f64> = m.iter().flatten().copied().collect();
    if cholesky_prefix(&mut a, k, 1e-12) == k {
        return Ok(Some((0..k).map(|i| 2.0 * a[i * k + i].ln()).sum()));
    }
    let dm = DMatrix::from_fn(k, k, |i, j| m[i][j]);
    let min_eig = dm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-8 * scale.max(1.0) {
        return Err(ModelError::DegenerateVariance { order: 0, variance: min_eig });
    }
    Ok(None)
}

/// Principal components of the 24-hour price vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaFactorization {
    /// Loading columns, ordered by descending absolute eigenvalue.
    pub loadings: Vec<[f64; HOURS]>,
    pub eigenvalues: Vec<f64>,
    pub column_means: [f64; HOURS],
}

/// Eigendecomposition of the sample covariance of the mean-centered rows.
/// Each loading's largest-magnitude entry is made positive.
pub fn pca_fit(rows: &[[f64; HOURS]]) -> Result<PcaFactorization> {
    let d = rows.len();
    if d < HOURS {
        return Err(ModelError::Insufficient(format!("{d} rows for PCA of {HOURS} hours")));
    }
    let mut means = [0.0; HOURS];
    for row in rows {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= d as f64);
    let mut cov = DMatrix::<f64>::zeros(HOURS, HOURS);
    for row in rows {
        let c = DVector::from_fn(HOURS, |h, _| row[h] - means[h]);
        cov.syger(1.0, &c, &c, 1.0);
    }
    cov /= (d - 1) as f64;
    cov.fill_upper_triangle_with_lower_triangle();
    let eig = SymmetricEigen::try_new(cov, 1e-15, 100_000).ok_or(ModelError::EigenFailure)?;

    let mut order: Vec<usize> = (0..HOURS).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()).then(a.cmp(&b)));
    let mut loadings = Vec::with_capacity(HOURS);
    let mut eigenvalues = Vec::with_capacity(HOURS);
    for &j in &order {
        let col = eig.eigenvectors.column(j);
        let mut loading: [f64; HOURS] = std::array::from_fn(|h| col[h]);
        let anchor = (0..HOURS).fold(0, |best, h| if loading[h].abs() > loading[best].abs() { h } else { best });
        if loading[anchor] < 0.0 {
            loading.iter_mut().for_each(|v| *v = -*v);
        }
        loadings.push(loading);
        eigenvalues.push(eig.eigenvalues[j]);
    }
    Ok(PcaFactorization { loadings, eigenvalues, column_means: means })
}

impl PcaFactorization {
    /// Scores on the first `k` components: `(P_d - means) · γ_j`.
    pub fn scores(&self, rows: &[[f64; HOURS]], k: usize) -> Result<Vec<Vec<f64>>> {
        if k == 0 || k > HOURS {
            return Err(ModelError::Invalid(format!("number of components {k} outside 1..={HOURS}")));
        }
        Ok(rows.iter().map(|row| self.score_row(row, k)).collect())
    }

    pub fn score_row(&self, row: &[f64; HOURS], k: usize) -> Vec<f64> {
        self.loadings[..k]
            .iter()
            .map(|g| (0..HOURS).map(|h| (row[h] - self.column_means[h]) * g[h]).sum())
            .collect()
    }

    /// Maps scores on the leading components back to prices.
    pub fn reconstruct(&self, scores: &[f64]) -> [f64; HOURS] {
        let mut out = self.column_means;
        for (s, g) in scores.iter().zip(&self.loadings) {
            for h in 0..HOURS {
                out[h] += s * g[h];
            }
        }
        out
    }
}

/// Free-function form of [`PcaFactorization::scores`].
pub fn pca_scores(fact: &PcaFactorization, rows: &[[f64; HOURS]], k: usize) -> Result<Vec<Vec<f64>>> {
    fact.scores(rows, k)
}
