use super::{
    check_rank, check_separation, expit, qr::PivotedQr, DesignMatrix, FitOptions, FitResult,
    GlmError, ModelKind,
};

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn log_likelihood(x: &DesignMatrix, y: &[f64], coef: &[f64]) -> f64 {
    let eta = x.linear_predictor(coef);
    eta.iter()
        .zip(y)
        .enumerate()
        .map(|(i, (e, yi))| x.weight(i) * (yi * e - softplus(*e)))
        .sum()
}

/// Binary logistic regression by iteratively reweighted least squares with
/// step-halving on likelihood decrease.
pub fn fit_logistic(
    x: &DesignMatrix,
    y: &[f64],
    opts: &FitOptions,
) -> Result<FitResult, GlmError> {
    if y.len() != x.rows() {
        return Err(GlmError::DimensionMismatch(format!(
            "{} responses for {} rows",
            y.len(),
            x.rows()
        )));
    }
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(GlmError::InvalidResponse("logistic response must be 0 or 1".into()));
    }
    check_rank(x, &x.scaled_copy(None), opts)?;
    let scales = x.column_scales();
    let p = x.cols();
    let n = x.rows();

    let mut coef = vec![0.0; p];
    let mut ll = log_likelihood(x, y, &coef);
    let mut trace = vec![ll];

    for iter in 1..=opts.max_iterations {
        let eta = x.linear_predictor(&coef);
        let mut working_w = vec![0.0; n];
        let mut z = vec![0.0; n];
        for i in 0..n {
            let mu = expit(eta[i]);
            let v = (mu * (1.0 - mu)).max(1e-300);
            working_w[i] = v;
            z[i] = eta[i] + (y[i] - mu) / v;
        }
        let scaled = x.scaled_copy(Some(&working_w));
        let qr = PivotedQr::new(scaled, n, p);
        let sz: Vec<f64> = z
            .iter()
            .enumerate()
            .map(|(i, v)| v * (x.weight(i) * working_w[i]).sqrt())
            .collect();
        let rank = qr.rank(opts.rank_tolerance);
        let (target, _) = qr.solve(&sz, rank);
        let step: Vec<f64> = target.iter().zip(&coef).map(|(t, c)| t - c).collect();

        let mut t = 1.0;
        let mut candidate;
        let mut ll_new;
        loop {
            candidate = coef.iter().zip(&step).map(|(c, s)| c + t * s).collect::<Vec<_>>();
            ll_new = log_likelihood(x, y, &candidate);
            if ll_new >= ll - 1e-12 * ll.abs().max(1.0) || t < 1e-10 {
                break;
            }
            t *= 0.5;
        }
        let max_step = step
            .iter()
            .zip(&scales)
            .map(|(s, sc)| (t * s * sc).abs())
            .fold(0.0, f64::max);
        coef = candidate;
        if ll_new > ll {
            ll = ll_new;
        }
        trace.push(ll);
        check_separation(x, &scales, std::slice::from_ref(&coef), opts.separation_bound)?;
        if max_step < opts.tolerance {
            return Ok(FitResult {
                kind: ModelKind::Logistic,
                names: x.names().to_vec(),
                coefficients: vec![coef],
                residual_sd: None,
                converged: true,
                iterations: iter,
                objective: ll,
                trace,
            });
        }
    }
    Err(GlmError::NoConvergence {
        iterations: opts.max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn intercept_only_balanced() {
        let rows = vec![vec![1.0]; 10];
        let x = DesignMatrix::from_rows(&["one"], &rows).unwrap();
        let y: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        let fit = fit_logistic(&x, &y, &FitOptions::default()).unwrap();
        assert!(fit.coefficients[0][0].abs() < 1e-8);
    }

    #[test]
    fn perfect_separation_detected() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64 - 9.5]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i >= 10 { 1.0 } else { 0.0 }).collect();
        let x = DesignMatrix::from_rows(&["one", "x"], &rows).unwrap();
        assert!(matches!(
            fit_logistic(&x, &y, &FitOptions::default()),
            Err(GlmError::Separation { .. })
        ));
    }

    #[test]
    fn rejects_non_binary_response() {
        let x = DesignMatrix::from_rows(&["one"], &[vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(
            fit_logistic(&x, &[0.0, 2.0], &FitOptions::default()),
            Err(GlmError::InvalidResponse(_))
        ));
    }

    #[test]
    fn likelihood_trace_is_non_decreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..2000 {
            let l: f64 = rng.sample(StandardNormal);
            rows.push(vec![1.0, l]);
            y.push(if rng.random::<f64>() < expit(-1.0 + 2.0 * l) { 1.0 } else { 0.0 });
        }
        let x = DesignMatrix::from_rows(&["one", "l"], &rows).unwrap();
        let fit = fit_logistic(&x, &y, &FitOptions::default()).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn affine_rescaling_leaves_predictions_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rows = Vec::new();
        let mut rescaled = Vec::new();
        let mut y = Vec::new();
        for _ in 0..3000 {
            let l: f64 = rng.sample(StandardNormal);
            rows.push(vec![1.0, l]);
            rescaled.push(vec![1.0, 100.0 * l - 7.0]);
            y.push(if rng.random::<f64>() < expit(0.4 + 0.8 * l) { 1.0 } else { 0.0 });
        }
        let opts = FitOptions::default();
        let a = DesignMatrix::from_rows(&["one", "l"], &rows).unwrap();
        let b = DesignMatrix::from_rows(&["one", "l"], &rescaled).unwrap();
        let fa = fit_logistic(&a, &y, &opts).unwrap();
        let fb = fit_logistic(&b, &y, &opts).unwrap();
        let pa = super::super::predict_probs(&fa, &a).unwrap();
        let pb = super::super::predict_probs(&fb, &b).unwrap();
        for (u, v) in pa.values.iter().zip(&pb.values) {
            assert!((u - v).abs() < 1e-8);
        }
    }
}
