use super::{check_rank, DesignMatrix, FitOptions, FitResult, GlmError, ModelKind};

/// Weighted least squares: minimizes `sum_i w_i (y_i - x_i^T b)^2`.
///
/// The residual standard deviation uses `sum(w) - p` degrees of freedom,
/// which is `n - p` for unit weights.
pub fn fit_wls(x: &DesignMatrix, y: &[f64]) -> Result<FitResult, GlmError> {
    if y.len() != x.rows() {
        return Err(GlmError::DimensionMismatch(format!(
            "{} responses for {} rows",
            y.len(),
            x.rows()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GlmError::InvalidValue("response"));
    }
    let opts = FitOptions::default();
    let scaled = x.scaled_copy(None);
    let qr = check_rank(x, &scaled, &opts)?;
    let sy: Vec<f64> = y
        .iter()
        .enumerate()
        .map(|(i, v)| v * x.weight(i).sqrt())
        .collect();
    let (coef, rss) = qr.solve(&sy, x.cols());

    let total_weight: f64 = match x.weights() {
        Some(w) => w.iter().sum(),
        None => x.rows() as f64,
    };
    let df = total_weight - x.cols() as f64;
    let residual_sd = if df > 0.0 { (rss / df).sqrt() } else { 0.0 };

    Ok(FitResult {
        kind: ModelKind::Linear,
        names: x.names().to_vec(),
        coefficients: vec![coef],
        residual_sd: Some(residual_sd),
        converged: true,
        iterations: 1,
        objective: rss,
        trace: vec![],
    })
}
