//! Dense least-squares core shared by every estimator.
//!
//! The solver is a sequential modified Gram-Schmidt QR with
//! re-orthogonalization. Columns are processed in declaration order and a
//! column whose residual after projection on the accepted basis falls below
//! the rank tolerance is dropped, so of any aliased set the later-declared
//! columns go. That makes fits exactly reproducible and keeps the reported
//! coefficient set stable across runs. Normal equations appear only in test
//! oracles.

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative rank tolerance: a column is aliased when its residual norm is
/// at most this fraction of the largest diagonal seen in the decomposition.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

/// Structured identity of a design-matrix column.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ColumnLabel {
    Intercept,
    /// Group x time intersection dummy.
    Cell { group: String, time: i64 },
    Group(String),
    Time(i64),
    /// The post-treatment dummy D.
    Treatment,
    /// A covariate, possibly interacted with a group and/or time dummy.
    Covariate {
        name: String,
        group: Option<String>,
        time: Option<i64>,
    },
    /// Per-(group, time) treatment-effect dummy in the FLEX regression.
    TreatmentEffect { group: String, time: i64 },
}

impl std::fmt::Display for ColumnLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnLabel::Intercept => write!(f, "intercept"),
            ColumnLabel::Cell { group, time } => write!(f, "cell:{group}@{time}"),
            ColumnLabel::Group(g) => write!(f, "group:{g}"),
            ColumnLabel::Time(t) => write!(f, "time:{t}"),
            ColumnLabel::Treatment => write!(f, "D"),
            ColumnLabel::Covariate { name, group, time } => match (group, time) {
                (None, None) => write!(f, "{name}"),
                (Some(g), None) => write!(f, "{name}:{g}"),
                (None, Some(t)) => write!(f, "{name}@{t}"),
                (Some(g), Some(t)) => write!(f, "{name}:{g}@{t}"),
            },
            ColumnLabel::TreatmentEffect { group, time } => write!(f, "tau:{group}@{time}"),
        }
    }
}

/// Row-major design matrix with structured column labels.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    values: Vec<f64>,
    n_rows: usize,
    labels: Vec<ColumnLabel>,
}

impl DesignMatrix {
    /// All-zero matrix with the given labels. Labels must be unique.
    pub fn zeros(n_rows: usize, labels: Vec<ColumnLabel>) -> Result<Self> {
        for (i, a) in labels.iter().enumerate() {
            if labels[i + 1..].contains(a) {
                return Err(Error::input(format!("duplicate design column `{a}`")));
            }
        }
        Ok(DesignMatrix {
            values: vec![0.0; n_rows * labels.len()],
            n_rows,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[ColumnLabel] {
        &self.labels
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.labels.len() + col] = value;
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.labels.len() + col]
    }

    fn column(&self, col: usize) -> Vec<f64> {
        let p = self.labels.len();
        (0..self.n_rows).map(|i| self.values[i * p + col]).collect()
    }
}

/// Least-squares (or logit) fit: kept coefficients in design order, the
/// residual vector, the numerical rank, and the labels dropped for aliasing.
#[derive(Debug, Clone)]
pub struct FitResult {
    coefficients: Vec<(ColumnLabel, f64)>,
    pub residuals: Vec<f64>,
    pub rank: usize,
    pub dropped: Vec<ColumnLabel>,
}

impl FitResult {
    pub fn coefficients(&self) -> &[(ColumnLabel, f64)] {
        &self.coefficients
    }

    /// Coefficient for a label; `None` if the column was dropped or unknown.
    pub fn coef(&self, label: &ColumnLabel) -> Option<f64> {
        self.coefficients
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| *v)
    }
}

struct Decomposition {
    /// Orthonormal basis vectors of the kept columns.
    q: Vec<Vec<f64>>,
    /// R factor, column by kept column: r[j] holds the first j+1 entries.
    r: Vec<Vec<f64>>,
    /// Indices (into the declared columns) that were kept.
    kept: Vec<usize>,
    dropped: Vec<usize>,
}

/// Sequential MGS-QR over columns in declared order. Each candidate is
/// orthogonalized twice against the accepted basis; it is dropped when its
/// remaining norm is at most `tol` times the largest diagonal so far.
fn decompose(columns: &[Vec<f64>], tol: f64) -> Decomposition {
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut r: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut max_diag = 0.0f64;

    for (j, col) in columns.iter().enumerate() {
        let mut v = col.clone();
        let mut coeffs = vec![0.0; q.len()];
        for pass in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &v);
                axpy(&mut v, -c, qi);
                coeffs[i] += c;
            }
            if pass == 0 && q.is_empty() {
                break;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm <= tol * max_diag || norm == 0.0 {
            dropped.push(j);
            continue;
        }
        for x in v.iter_mut() {
            *x /= norm;
        }
        coeffs.push(norm);
        q.push(v);
        r.push(coeffs);
        kept.push(j);
        max_diag = max_diag.max(norm);
    }

    Decomposition { q, r, kept, dropped }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Minimizes `||y - X b||^2` with deterministic aliased-column dropping.
///
/// `intercept` prepends an all-ones column labeled [`ColumnLabel::Intercept`]
/// ahead of the declared columns (so aliased covariates drop, not it).
pub fn ols(x: &DesignMatrix, y: &[f64], intercept: bool) -> Result<FitResult> {
    ols_with_tolerance(x, y, intercept, DEFAULT_RANK_TOLERANCE)
}

/// [`ols`] with an explicit relative rank tolerance.
pub fn ols_with_tolerance(
    x: &DesignMatrix,
    y: &[f64],
    intercept: bool,
    rank_tol: f64,
) -> Result<FitResult> {
    let n = x.n_rows();
    if n == 0 || y.is_empty() {
        return Err(Error::Linalg("empty system: no observations".into()));
    }
    if y.len() != n {
        return Err(Error::Linalg(format!(
            "outcome length {} does not match {} design rows",
            y.len(),
            n
        )));
    }

    let mut labels: Vec<ColumnLabel> = Vec::with_capacity(x.n_cols() + 1);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(x.n_cols() + 1);
    if intercept {
        labels.push(ColumnLabel::Intercept);
        columns.push(vec![1.0; n]);
    }
    for j in 0..x.n_cols() {
        labels.push(x.labels()[j].clone());
        columns.push(x.column(j));
    }

    let dec = decompose(&columns, rank_tol);
    if dec.kept.is_empty() {
        return Err(Error::Linalg("all design columns dropped for rank deficiency".into()));
    }

    // Back-substitution on R beta = Q^T y over the kept columns.
    let qty: Vec<f64> = dec.q.iter().map(|qi| dot(qi, y)).collect();
    let r = dec.kept.len();
    let mut beta = vec![0.0; r];
    #[allow(clippy::needless_range_loop)]
    for i in (0..r).rev() {
        let mut v = qty[i];
        for j in (i + 1)..r {
            v -= dec.r[j][i] * beta[j];
        }
        beta[i] = v / dec.r[i][i];
    }

    let mut residuals = y.to_vec();
    for (b, &col_ix) in beta.iter().zip(&dec.kept) {
        axpy(&mut residuals, -b, &columns[col_ix]);
    }

    Ok(FitResult {
        coefficients: dec
            .kept
            .iter()
            .zip(&beta)
            .map(|(&ix, &b)| (labels[ix].clone(), b))
            .collect(),
        residuals,
        rank: r,
        dropped: dec.dropped.iter().map(|&ix| labels[ix].clone()).collect(),
    })
}

/// Maximum-likelihood logistic regression of a binary response on `x`.
///
/// Newton iterations with step halving; converges when the gradient norm
/// falls below 1e-8. Aliased columns are dropped with the same rule as
/// [`ols`]. Diverging coefficients are reported as separation.
pub fn logit(x: &DesignMatrix, d: &[f64]) -> Result<FitResult> {
    const GRAD_TOL: f64 = 1e-8;
    const MAX_ITER: usize = 100;
    const SEPARATION_BOUND: f64 = 50.0;

    let n = x.n_rows();
    if n == 0 || d.len() != n {
        return Err(Error::Linalg("logit: response length mismatch".into()));
    }
    for v in d {
        if *v != 0.0 && *v != 1.0 {
            return Err(Error::input(format!("logit: response value {v} is not 0/1")));
        }
    }
    let ones = d.iter().filter(|v| **v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::input("logit: single-class response"));
    }

    let mut labels: Vec<ColumnLabel> = Vec::with_capacity(x.n_cols());
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(x.n_cols());
    for j in 0..x.n_cols() {
        labels.push(x.labels()[j].clone());
        columns.push(x.column(j));
    }
    let dec = decompose(&columns, DEFAULT_RANK_TOLERANCE);
    if dec.kept.is_empty() {
        return Err(Error::Linalg("logit: all design columns dropped".into()));
    }
    let kept_cols: Vec<&Vec<f64>> = dec.kept.iter().map(|&ix| &columns[ix]).collect();
    let p = kept_cols.len();

    let mut beta = vec![0.0; p];
    let mut eta = vec![0.0; n];
    let loglik = |eta: &[f64]| -> f64 {
        eta.iter()
            .zip(d)
            .map(|(&e, &di)| di * e - softplus(e))
            .sum()
    };
    let mut ll = loglik(&eta);

    for _ in 0..MAX_ITER {
        let probs: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        // All fitted probabilities at their labels means the classes are
        // perfectly separated: the MLE does not exist.
        let max_resid = d
            .iter()
            .zip(&probs)
            .map(|(&di, &pi)| (di - pi).abs())
            .fold(0.0, f64::max);
        if max_resid < 1e-6 {
            return Err(Error::Separation);
        }
        let grad: Vec<f64> = kept_cols
            .iter()
            .map(|col| col.iter().zip(d).zip(&probs).map(|((&x, &di), &pi)| x * (di - pi)).sum())
            .collect();
        let grad_norm = dot(&grad, &grad).sqrt();
        if grad_norm <= GRAD_TOL {
            return finish_logit(&labels, &dec, beta, d, &probs);
        }

        // H = X^T W X with W = p(1-p).
        let w: Vec<f64> = probs.iter().map(|&pi| pi * (1.0 - pi)).collect();
        let mut h = vec![0.0; p * p];
        for a in 0..p {
            for b in a..p {
                let v: f64 = kept_cols[a]
                    .iter()
                    .zip(kept_cols[b].iter())
                    .zip(&w)
                    .map(|((&xa, &xb), &wi)| xa * wi * xb)
                    .sum();
                h[a * p + b] = v;
                h[b * p + a] = v;
            }
        }
        let step = match solve_spd(&h, p, &grad) {
            Some(step) => step,
            None if max_resid < 1e-3 => return Err(Error::Separation),
            None => return Err(Error::Linalg("logit: singular Hessian".into())),
        };

        // Step halving keeps the log-likelihood non-decreasing.
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let trial_eta: Vec<f64> = (0..n)
                .map(|i| kept_cols.iter().zip(&trial).map(|(col, b)| col[i] * b).sum())
                .collect();
            let trial_ll = loglik(&trial_eta);
            if trial_ll >= ll - 1e-12 {
                beta = trial;
                eta = trial_eta;
                ll = trial_ll;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            return Err(Error::NonConvergence(MAX_ITER));
        }
        if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            return Err(Error::Separation);
        }
    }
    Err(Error::NonConvergence(MAX_ITER))
}

fn finish_logit(
    labels: &[ColumnLabel],
    dec: &Decomposition,
    beta: Vec<f64>,
    d: &[f64],
    probs: &[f64],
) -> Result<FitResult> {
    Ok(FitResult {
        coefficients: dec
            .kept
            .iter()
            .zip(&beta)
            .map(|(&ix, &b)| (labels[ix].clone(), b))
            .collect(),
        residuals: d.iter().zip(probs).map(|(&di, &pi)| di - pi).collect(),
        rank: dec.kept.len(),
        dropped: dec.dropped.iter().map(|&ix| labels[ix].clone()).collect(),
    })
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(x)) without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` (row-major, dim x dim)
/// via Cholesky. Returns `None` if a pivot collapses.
pub(crate) fn solve_spd(a: &[f64], dim: usize, b: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * dim + i] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0; dim];
    for i in 0..dim {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * dim + k] * y[k];
        }
        y[i] = v / l[i * dim + i];
    }
    let mut x = vec![0.0; dim];
    for i in (0..dim).rev() {
        let mut v = y[i];
        for k in (i + 1)..dim {
            v -= l[k * dim + i] * x[k];
        }
        x[i] = v / l[i * dim + i];
    }
    Some(x)
}

/// Gaussian kernel density with the Silverman bandwidth
/// `1.06 * sd * n^(-1/5)`, evaluated on the given grid.
pub fn kde(samples: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Linalg("kde: need at least 2 samples".into()));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var <= 0.0 {
        return Err(Error::Linalg("kde: degenerate sample with zero variance".into()));
    }
    let h = 1.06 * var.sqrt() * (n as f64).powf(-0.2);
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * n as f64);
    Ok(grid
        .iter()
        .map(|&g| {
            samples
                .iter()
                .map(|&x| {
                    let z = (g - x) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: &[&[f64]], labels: Vec<ColumnLabel>) -> DesignMatrix {
        let mut m = DesignMatrix::zeros(rows.len(), labels).unwrap();
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        m
    }

    fn cov(name: &str) -> ColumnLabel {
        ColumnLabel::Covariate {
            name: name.into(),
            group: None,
            time: None,
        }
    }

    /// Independent oracle: solve the normal equations (X^T X) b = X^T y by
    /// Gaussian elimination with partial pivoting.
    #[allow(clippy::needless_range_loop)]
    fn normal_equations(x: &DesignMatrix, y: &[f64]) -> Vec<f64> {
        let n = x.n_rows();
        let p = x.n_cols();
        let mut xtx = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        for a in 0..p {
            for b in 0..p {
                xtx[a * p + b] = (0..n).map(|i| x.get(i, a) * x.get(i, b)).sum();
            }
            xty[a] = (0..n).map(|i| x.get(i, a) * y[i]).sum();
        }
        let mut aug: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                let mut row: Vec<f64> = xtx[i * p..(i + 1) * p].to_vec();
                row.push(xty[i]);
                row
            })
            .collect();
        for col in 0..p {
            let pivot = (col..p).max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs())).unwrap();
            aug.swap(col, pivot);
            for row in 0..p {
                if row != col {
                    let f = aug[row][col] / aug[col][col];
                    for k in col..=p {
                        let v = aug[col][k];
                        aug[row][k] -= f * v;
                    }
                }
            }
        }
        (0..p).map(|i| aug[i][p] / aug[i][i]).collect()
    }

    #[test]
    fn ones_column_fits_the_mean() {
        let x = matrix(&[&[1.0], &[1.0]], vec![cov("c")]);
        let fit = ols(&x, &[2.0, 4.0], false).unwrap();
        assert!((fit.coef(&cov("c")).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_drops_the_later_one() {
        let x = matrix(
            &[&[1.0, 1.0, 2.0], &[2.0, 2.0, 1.0], &[3.0, 3.0, 5.0]],
            vec![cov("a"), cov("b"), cov("c")],
        );
        let y = [1.0, 2.0, 3.5];
        let fit = ols(&x, &y, false).unwrap();
        assert_eq!(fit.dropped, vec![cov("b")]);
        assert_eq!(fit.rank, 2);
        assert!(fit.coef(&cov("b")).is_none());

        // The fit is unchanged relative to the design without the alias.
        let x2 = matrix(&[&[1.0, 2.0], &[2.0, 1.0], &[3.0, 5.0]], vec![cov("a"), cov("c")]);
        let fit2 = ols(&x2, &y, false).unwrap();
        assert!((fit.coef(&cov("a")).unwrap() - fit2.coef(&cov("a")).unwrap()).abs() < 1e-12);
        for (r1, r2) in fit.residuals.iter().zip(&fit2.residuals) {
            assert!((r1 - r2).abs() < 1e-12);
        }
    }

    /// Random well-conditioned 50x4 system matches the normal-equations
    /// oracle to 1e-8.
    #[test]
    fn matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let labels: Vec<ColumnLabel> = (0..4).map(|j| cov(&format!("c{j}"))).collect();
        let mut x = DesignMatrix::zeros(50, labels.clone()).unwrap();
        for i in 0..50 {
            for j in 0..4 {
                x.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fit = ols(&x, &y, false).unwrap();
        let oracle = normal_equations(&x, &y);
        for (j, label) in labels.iter().enumerate() {
            assert!(
                (fit.coef(label).unwrap() - oracle[j]).abs() < 1e-8,
                "column {j}: {} vs {}",
                fit.coef(label).unwrap(),
                oracle[j]
            );
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_kept_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let labels: Vec<ColumnLabel> = (0..5).map(|j| cov(&format!("c{j}"))).collect();
        let mut x = DesignMatrix::zeros(40, labels).unwrap();
        for i in 0..40 {
            for j in 0..5 {
                // Column 4 aliases column 0.
                let v = if j == 4 { x.get(i, 0) } else { rng.random_range(-2.0..2.0) };
                x.set(i, j, v);
            }
        }
        let y: Vec<f64> = (0..40).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fit = ols(&x, &y, false).unwrap();
        assert_eq!(fit.rank, 4);
        let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for j in 0..4 {
            let xte: f64 = (0..40).map(|i| x.get(i, j) * fit.residuals[i]).sum();
            assert!(xte.abs() <= 1e-8 * scale.max(1.0), "X^T e = {xte}");
        }
    }

    /// Refitting on residuals yields coefficients at the noise floor.
    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels: Vec<ColumnLabel> = (0..3).map(|j| cov(&format!("c{j}"))).collect();
        let mut x = DesignMatrix::zeros(30, labels).unwrap();
        for i in 0..30 {
            for j in 0..3 {
                x.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(-3.0..3.0)).collect();
        let fit = ols(&x, &y, false).unwrap();
        let refit = ols(&x, &fit.residuals, false).unwrap();
        for (_, b) in refit.coefficients() {
            assert!(b.abs() <= 1e-8, "residual refit coefficient {b}");
        }
    }

    #[test]
    fn ols_is_bit_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels: Vec<ColumnLabel> = (0..6).map(|j| cov(&format!("c{j}"))).collect();
        let mut x = DesignMatrix::zeros(25, labels).unwrap();
        for i in 0..25 {
            for j in 0..6 {
                x.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
        let y: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fit1 = ols(&x, &y, false).unwrap();
        let fit2 = ols(&x, &y, false).unwrap();
        for ((_, a), (_, b)) in fit1.coefficients().iter().zip(fit2.coefficients()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn empty_system_is_an_error() {
        let x = DesignMatrix::zeros(0, vec![cov("a")]).unwrap();
        assert!(ols(&x, &[], false).is_err());
    }

    #[test]
    fn all_zero_design_is_an_error() {
        let x = matrix(&[&[0.0], &[0.0]], vec![cov("a")]);
        assert!(ols(&x, &[1.0, 2.0], false).is_err());
    }

    /// Intercept-only logit recovers log(p / (1 - p)) exactly.
    #[test]
    fn logit_intercept_only() {
        let ones = [1.0];
        let x = matrix(&[&ones; 8].map(|r| r as &[f64]), vec![ColumnLabel::Intercept]);
        let d = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let fit = logit(&x, &d).unwrap();
        let expected = (0.25f64 / 0.75).ln();
        assert!(
            (fit.coef(&ColumnLabel::Intercept).unwrap() - expected).abs() < 1e-7,
            "{} vs {expected}",
            fit.coef(&ColumnLabel::Intercept).unwrap()
        );
    }

    /// With d independent of X, slope estimates center on zero. 1000
    /// simulated fits; the mean slope must sit within 3 MC standard errors.
    #[test]
    fn logit_independent_regressor_has_zero_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut slopes = Vec::new();
        for _ in 0..1000 {
            let n = 60;
            let mut x = DesignMatrix::zeros(n, vec![ColumnLabel::Intercept, cov("z")]).unwrap();
            let mut d = Vec::with_capacity(n);
            for i in 0..n {
                x.set(i, 0, 1.0);
                x.set(i, 1, rng.random_range(-1.0..1.0));
                d.push(if rng.random_bool(0.5) { 1.0 } else { 0.0 });
            }
            match logit(&x, &d) {
                Ok(fit) => slopes.push(fit.coef(&cov("z")).unwrap()),
                Err(_) => continue, // single-class or separated draw
            }
        }
        let m = slopes.len() as f64;
        let mean = slopes.iter().sum::<f64>() / m;
        let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let mc_se = (var / m).sqrt();
        assert!(mean.abs() < 3.0 * mc_se, "mean slope {mean}, MC-SE {mc_se}");
    }

    #[test]
    fn logit_detects_separation() {
        let x = matrix(
            &[&[1.0, -2.0], &[1.0, -1.0], &[1.0, 1.0], &[1.0, 2.0]],
            vec![ColumnLabel::Intercept, cov("z")],
        );
        let d = [0.0, 0.0, 1.0, 1.0];
        assert!(matches!(logit(&x, &d), Err(Error::Separation)));
    }

    #[test]
    fn logit_rejects_single_class() {
        let x = matrix(&[&[1.0], &[1.0]], vec![ColumnLabel::Intercept]);
        assert!(logit(&x, &[1.0, 1.0]).is_err());
    }

    /// KDE of a large standard-normal sample is close to the true density
    /// at zero, and integrates to one on a wide grid.
    #[test]
    fn kde_matches_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let samples: Vec<f64> = (0..10_000)
            .map(|_| {
                // Box-Muller
                let u1: f64 = rng.random_range(1e-12..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let grid: Vec<f64> = (0..801).map(|i| -4.0 + i as f64 * 0.01).collect();
        let density = kde(&samples, &grid).unwrap();
        let at_zero = density[400];
        assert!((at_zero - 0.3989).abs() < 0.02, "density at 0: {at_zero}");

        let mut integral = 0.0;
        for i in 1..grid.len() {
            integral += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
        }
        assert!((0.99..=1.01).contains(&integral), "integral {integral}");
    }

    #[test]
    fn kde_rejects_degenerate_samples() {
        assert!(kde(&[0.0, 0.0], &[0.0]).is_err());
        assert!(kde(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn solve_spd_roundtrip() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let b = [1.0, 2.0, 3.0];
        let x = solve_spd(&a, 3, &b).unwrap();
        for i in 0..3 {
            let ax: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-10);
        }
    }
}
