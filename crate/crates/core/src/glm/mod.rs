//! Regression kernels shared by every estimator: weighted least squares,
//! binary logistic regression (IRLS) and multinomial logistic regression
//! (Newton–Raphson).

mod blocked;
mod linear;
mod logistic;
mod multinomial;
pub mod qr;

pub use blocked::{BlockId, BlockRhs, BlockedLeastSquares};
pub use linear::fit_wls;
pub use logistic::fit_logistic;
pub use multinomial::fit_multinomial;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlmError {
    #[error("design matrix has no rows")]
    EmptyInput,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("design is rank deficient; collinear columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },
    #[error("separation detected: coefficient for `{column}` diverged ({value:.3} on standardized scale)")]
    Separation { column: String, value: f64 },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("design columns {found:?} do not match fitted columns {expected:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("non-finite or negative entry in {0}")]
    InvalidValue(&'static str),
}

/// Iteration controls for the likelihood-based fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stop when the largest coefficient step (standardized scale) falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Any standardized coefficient beyond this magnitude is reported as separation.
    pub separation_bound: f64,
    /// Relative threshold on `|R_kk| / |R_00|` below which a pivot counts as rank loss.
    pub rank_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
            separation_bound: 30.0,
            rank_tolerance: 1e-10,
        }
    }
}

/// Dense design matrix with named columns and optional row weights.
///
/// Storage is column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    rows: usize,
    data: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl DesignMatrix {
    /// Builds from row-major values.
    pub fn from_row_major(
        names: Vec<String>,
        values: &[f64],
        weights: Option<Vec<f64>>,
    ) -> Result<Self, GlmError> {
        let cols = names.len();
        if cols == 0 {
            return Err(GlmError::DimensionMismatch("design has no columns".into()));
        }
        if values.len() % cols != 0 {
            return Err(GlmError::DimensionMismatch(format!(
                "{} values cannot fill rows of {} columns",
                values.len(),
                cols
            )));
        }
        let rows = values.len() / cols;
        let mut data = vec![0.0; values.len()];
        for i in 0..rows {
            for j in 0..cols {
                data[j * rows + i] = values[i * cols + j];
            }
        }
        Self::from_col_major(names, rows, data, weights)
    }

    pub fn from_rows(names: &[&str], rows: &[Vec<f64>]) -> Result<Self, GlmError> {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        if rows.iter().any(|r| r.len() != names.len()) {
            return Err(GlmError::DimensionMismatch("ragged rows".into()));
        }
        Self::from_row_major(names.iter().map(|s| s.to_string()).collect(), &flat, None)
    }

    pub fn from_col_major(
        names: Vec<String>,
        rows: usize,
        data: Vec<f64>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self, GlmError> {
        if data.len() != rows * names.len() {
            return Err(GlmError::DimensionMismatch(format!(
                "expected {} values for {} x {}, got {}",
                rows * names.len(),
                rows,
                names.len(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GlmError::InvalidValue("design matrix"));
        }
        if let Some(w) = &weights {
            if w.len() != rows {
                return Err(GlmError::DimensionMismatch(format!(
                    "{} weights for {} rows",
                    w.len(),
                    rows
                )));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(GlmError::InvalidValue("weights"));
            }
        }
        Ok(Self {
            names,
            rows,
            data,
            weights,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, GlmError> {
        if weights.len() != self.rows {
            return Err(GlmError::DimensionMismatch(format!(
                "{} weights for {} rows",
                weights.len(),
                self.rows
            )));
        }
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(GlmError::InvalidValue("weights"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols()).map(|j| self.get(i, j)).collect()
    }

    /// Column-major copy with each row scaled by `sqrt(w_i * extra_i)`.
    pub(crate) fn scaled_copy(&self, extra: Option<&[f64]>) -> Vec<f64> {
        let scale: Vec<f64> = (0..self.rows)
            .map(|i| (self.weight(i) * extra.map_or(1.0, |e| e[i])).sqrt())
            .collect();
        let mut out = self.data.clone();
        if self.rows == 0 {
            return out;
        }
        for col in out.chunks_mut(self.rows) {
            for (v, s) in col.iter_mut().zip(&scale) {
                *v *= s;
            }
        }
        out
    }

    /// Scale used for the separation bound: the sd of a varying column, or
    /// the magnitude of a constant one.
    pub(crate) fn column_scales(&self) -> Vec<f64> {
        (0..self.cols())
            .map(|j| {
                let col = self.column(j);
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    mean.abs().max(1e-12)
                }
            })
            .collect()
    }

    pub(crate) fn linear_predictor(&self, coef: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.rows];
        for (j, b) in coef.iter().enumerate() {
            if *b == 0.0 {
                continue;
            }
            for (e, x) in eta.iter_mut().zip(self.column(j)) {
                *e += b * x;
            }
        }
        eta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Logistic,
    /// `categories` includes the reference category 0.
    Multinomial { categories: usize },
}

/// Outcome of a regression fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: ModelKind,
    pub names: Vec<String>,
    /// One coefficient vector per modelled category: a single vector for
    /// linear and logistic fits, categories `1..K` for multinomial fits.
    pub coefficients: Vec<Vec<f64>>,
    /// Residual standard deviation for linear fits.
    pub residual_sd: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood (logistic, multinomial) or weighted RSS (linear).
    pub objective: f64,
    /// Log-likelihood after each accepted iteration.
    pub trace: Vec<f64>,
}

impl FitResult {
    /// Coefficient by column name (first modelled category).
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.category_coefficient(0, name)
    }

    /// Coefficient by column name for modelled category `k` (0-based over non-reference categories).
    pub fn category_coefficient(&self, k: usize, name: &str) -> Option<f64> {
        let j = self.names.iter().position(|n| n == name)?;
        self.coefficients.get(k).map(|c| c[j])
    }

    /// Linear fit prediction `x^T b` for one row.
    pub fn predict_linear_row(&self, x: &[f64]) -> f64 {
        self.coefficients[0].iter().zip(x).map(|(b, v)| b * v).sum()
    }
}

/// Row-major matrix of predicted probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    /// 1 for logistic (P(y = 1)), K for multinomial.
    pub columns: usize,
    pub values: Vec<f64>,
}

impl ProbabilityMatrix {
    pub fn rows(&self) -> usize {
        self.values.len() / self.columns
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.columns..(i + 1) * self.columns]
    }
}

/// Predicted probabilities for every row of `x`.
pub fn predict_probs(fit: &FitResult, x: &DesignMatrix) -> Result<ProbabilityMatrix, GlmError> {
    if fit.names != x.names {
        return Err(GlmError::ColumnMismatch {
            expected: fit.names.clone(),
            found: x.names.clone(),
        });
    }
    match fit.kind {
        ModelKind::Logistic => {
            let eta = x.linear_predictor(&fit.coefficients[0]);
            Ok(ProbabilityMatrix {
                columns: 1,
                values: eta.into_iter().map(expit).collect(),
            })
        }
        ModelKind::Multinomial { categories } => {
            let etas: Vec<Vec<f64>> = fit
                .coefficients
                .iter()
                .map(|c| x.linear_predictor(c))
                .collect();
            let mut values = Vec::with_capacity(x.rows() * categories);
            let mut buf = vec![0.0; categories];
            for i in 0..x.rows() {
                softmax_with_reference(etas.iter().map(|e| e[i]), &mut buf);
                values.extend_from_slice(&buf);
            }
            Ok(ProbabilityMatrix {
                columns: categories,
                values,
            })
        }
        ModelKind::Linear => Err(GlmError::InvalidResponse(
            "probabilities requested from a linear fit".into(),
        )),
    }
}

/// Logistic function `1 / (1 + e^-x)`, evaluated without overflow.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax over `[0, eta_1, .., eta_{K-1}]` written into `out` (length K).
pub(crate) fn softmax_with_reference(etas: impl Iterator<Item = f64>, out: &mut [f64]) {
    out[0] = 0.0;
    let mut max = 0.0f64;
    for (slot, e) in out[1..].iter_mut().zip(etas) {
        *slot = e;
        max = max.max(e);
    }
    let mut total = 0.0;
    for v in out.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in out.iter_mut() {
        *v /= total;
    }
}

fn check_rank(
    x: &DesignMatrix,
    scaled: &[f64],
    opts: &FitOptions,
) -> Result<qr::PivotedQr, GlmError> {
    if x.rows() == 0 {
        return Err(GlmError::EmptyInput);
    }
    if x.rows() < x.cols() {
        return Err(GlmError::RankDeficient {
            columns: x.names()[x.rows()..].to_vec(),
        });
    }
    let qr = qr::PivotedQr::new(scaled.to_vec(), x.rows(), x.cols());
    let bad = qr.deficient_columns(opts.rank_tolerance);
    if !bad.is_empty() {
        return Err(GlmError::RankDeficient {
            columns: bad.iter().map(|&j| x.names()[j].clone()).collect(),
        });
    }
    Ok(qr)
}

fn check_separation(
    x: &DesignMatrix,
    scales: &[f64],
    coefs: &[Vec<f64>],
    bound: f64,
) -> Result<(), GlmError> {
    for c in coefs {
        for (j, (b, s)) in c.iter().zip(scales).enumerate() {
            let std = b * s;
            if std.abs() > bound || !std.is_finite() {
                return Err(GlmError::Separation {
                    column: x.names()[j].clone(),
                    value: std,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_values() {
        assert_eq!(expit(0.0), 0.5);
        assert!((expit(1.8) - 0.858_148_935_099_512_1).abs() < 1e-12);
        for x in [-40.0, -3.2, -0.1, 0.7, 5.0, 800.0] {
            assert!((expit(x) - (1.0 - expit(-x))).abs() < 1e-15);
        }
        assert!(expit(-800.0) >= 0.0 && expit(800.0) <= 1.0);
    }

    #[test]
    fn zero_coefficients_give_uniform_probabilities() {
        let x = DesignMatrix::from_rows(&["one", "l"], &[vec![1.0, 0.3], vec![1.0, -2.0]]).unwrap();
        let fit = FitResult {
            kind: ModelKind::Multinomial { categories: 4 },
            names: x.names().to_vec(),
            coefficients: vec![vec![0.0, 0.0]; 3],
            residual_sd: None,
            converged: true,
            iterations: 0,
            objective: 0.0,
            trace: vec![],
        };
        let p = predict_probs(&fit, &x).unwrap();
        for i in 0..2 {
            for v in p.row(i) {
                assert!((v - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn logistic_prediction_is_expit_of_linear_predictor() {
        let x = DesignMatrix::from_rows(&["one", "l"], &[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let fit = FitResult {
            kind: ModelKind::Logistic,
            names: x.names().to_vec(),
            coefficients: vec![vec![0.0, 0.3]],
            residual_sd: None,
            converged: true,
            iterations: 0,
            objective: 0.0,
            trace: vec![],
        };
        let p = predict_probs(&fit, &x).unwrap();
        assert_eq!(p.row(0)[0], 0.5);
        // expit(0.3) = 1 / (1 + e^-0.3)
        assert!((p.row(1)[0] - 0.574_442_516_811_659_3).abs() < 1e-12);
    }

    #[test]
    fn mismatched_columns_are_rejected() {
        let x = DesignMatrix::from_rows(&["one", "l"], &[vec![1.0, 0.0]]).unwrap();
        let fit = FitResult {
            kind: ModelKind::Logistic,
            names: vec!["one".into(), "y".into()],
            coefficients: vec![vec![0.0, 0.3]],
            residual_sd: None,
            converged: true,
            iterations: 0,
            objective: 0.0,
            trace: vec![],
        };
        assert!(matches!(
            predict_probs(&fit, &x),
            Err(GlmError::ColumnMismatch { .. })
        ));
    }

    #[test]
    fn negative_weights_rejected() {
        let x = DesignMatrix::from_rows(&["one"], &[vec![1.0], vec![1.0]]).unwrap();
        assert!(x.with_weights(vec![1.0, -0.5]).is_err());
    }
}
