use nalgebra::{DMatrix, DVector};

use super::{
    check_rank, check_separation, softmax_with_reference, DesignMatrix, FitOptions, FitResult,
    GlmError, ModelKind,
};

struct Evaluation {
    loglik: f64,
    gradient: Vec<f64>,
    /// Negative Hessian, row-major `q x q` with `q = (K-1) p`.
    information: Vec<f64>,
}

/// Columns of `x` as row-major copies so one pass over a row touches contiguous memory.
fn row_major(x: &DesignMatrix) -> Vec<f64> {
    let (n, p) = (x.rows(), x.cols());
    let mut out = vec![0.0; n * p];
    for j in 0..p {
        for (i, v) in x.column(j).iter().enumerate() {
            out[i * p + j] = *v;
        }
    }
    out
}

fn loglik_only(rows: &[f64], x: &DesignMatrix, y: &[usize], k: usize, coef: &[f64]) -> f64 {
    let p = x.cols();
    let mut probs = vec![0.0; k];
    let mut ll = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let row = &rows[i * p..(i + 1) * p];
        let etas = (0..k - 1).map(|c| {
            coef[c * p..(c + 1) * p]
                .iter()
                .zip(row)
                .map(|(b, v)| b * v)
                .sum::<f64>()
        });
        softmax_with_reference(etas, &mut probs);
        ll += x.weight(i) * probs[yi].max(1e-300).ln();
    }
    ll
}

fn evaluate(rows: &[f64], x: &DesignMatrix, y: &[usize], k: usize, coef: &[f64]) -> Evaluation {
    let p = x.cols();
    let m = k - 1;
    let q = m * p;
    let mut gradient = vec![0.0; q];
    // per category pair (a <= b): upper triangle of sum c_ab x x^T
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (a..m).map(move |b| (a, b))).collect();
    let mut gram = vec![vec![0.0; p * p]; pairs.len()];
    let mut probs = vec![0.0; k];
    let mut cw = vec![0.0; pairs.len()];
    let mut ll = 0.0;

    for (i, &yi) in y.iter().enumerate() {
        let w = x.weight(i);
        if w == 0.0 {
            continue;
        }
        let row = &rows[i * p..(i + 1) * p];
        let etas = (0..m).map(|c| {
            coef[c * p..(c + 1) * p]
                .iter()
                .zip(row)
                .map(|(b, v)| b * v)
                .sum::<f64>()
        });
        softmax_with_reference(etas, &mut probs);
        ll += w * probs[yi].max(1e-300).ln();
        for c in 0..m {
            let resid = if yi == c + 1 { 1.0 } else { 0.0 } - probs[c + 1];
            let g = &mut gradient[c * p..(c + 1) * p];
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += w * resid * xj;
            }
        }
        for (slot, &(a, b)) in cw.iter_mut().zip(&pairs) {
            let delta = if a == b { 1.0 } else { 0.0 };
            *slot = w * probs[a + 1] * (delta - probs[b + 1]);
        }
        for j in 0..p {
            let xj = row[j];
            if xj == 0.0 {
                continue;
            }
            for l in j..p {
                let xx = xj * row[l];
                if xx == 0.0 {
                    continue;
                }
                let idx = j * p + l;
                for (g, c) in gram.iter_mut().zip(&cw) {
                    g[idx] += c * xx;
                }
            }
        }
    }

    let mut information = vec![0.0; q * q];
    for (g, &(a, b)) in gram.iter().zip(&pairs) {
        for j in 0..p {
            for l in j..p {
                let v = g[j * p + l];
                let (r1, c1) = (a * p + j, b * p + l);
                let (r2, c2) = (a * p + l, b * p + j);
                information[r1 * q + c1] = v;
                information[c1 * q + r1] = v;
                information[r2 * q + c2] = v;
                information[c2 * q + r2] = v;
            }
        }
    }
    Evaluation {
        loglik: ll,
        gradient,
        information,
    }
}

/// Multinomial logistic regression with category 0 as the reference.
///
/// `y[i]` is the category index in `0..categories`. Returns one coefficient
/// vector per non-reference category.
pub fn fit_multinomial(
    x: &DesignMatrix,
    y: &[usize],
    categories: usize,
    opts: &FitOptions,
) -> Result<FitResult, GlmError> {
    if categories < 2 {
        return Err(GlmError::InvalidResponse("need at least two categories".into()));
    }
    if y.len() != x.rows() {
        return Err(GlmError::DimensionMismatch(format!(
            "{} responses for {} rows",
            y.len(),
            x.rows()
        )));
    }
    if let Some(bad) = y.iter().find(|&&c| c >= categories) {
        return Err(GlmError::InvalidResponse(format!(
            "category {bad} outside 0..{categories}"
        )));
    }
    check_rank(x, &x.scaled_copy(None), opts)?;
    let scales = x.column_scales();
    let rows = row_major(x);
    let p = x.cols();
    let m = categories - 1;
    let q = m * p;

    let mut coef = vec![0.0; q];
    let mut eval = evaluate(&rows, x, y, categories, &coef);
    let mut trace = vec![eval.loglik];

    for iter in 1..=opts.max_iterations {
        let info = DMatrix::from_row_slice(q, q, &eval.information);
        let grad = DVector::from_column_slice(&eval.gradient);
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                // near-singular information: fall back to LU, else give up
                match info.lu().solve(&grad) {
                    Some(s) => s,
                    None => {
                        return Err(GlmError::NoConvergence { iterations: iter });
                    }
                }
            }
        };

        let mut t = 1.0;
        let mut candidate;
        loop {
            candidate = coef
                .iter()
                .zip(step.iter())
                .map(|(c, s)| c + t * s)
                .collect::<Vec<_>>();
            let ll_new = loglik_only(&rows, x, y, categories, &candidate);
            if ll_new >= eval.loglik - 1e-12 * eval.loglik.abs().max(1.0) || t < 1e-10 {
                break;
            }
            t *= 0.5;
        }
        let max_step = step
            .iter()
            .enumerate()
            .map(|(idx, s)| (t * s * scales[idx % p]).abs())
            .fold(0.0, f64::max);
        coef = candidate;
        let split: Vec<Vec<f64>> = coef.chunks(p).map(|c| c.to_vec()).collect();
        check_separation(x, &scales, &split, opts.separation_bound)?;

        let converged = max_step < opts.tolerance;
        if converged {
            let ll = loglik_only(&rows, x, y, categories, &coef);
            trace.push(ll);
            return Ok(FitResult {
                kind: ModelKind::Multinomial { categories },
                names: x.names().to_vec(),
                coefficients: split,
                residual_sd: None,
                converged: true,
                iterations: iter,
                objective: ll,
                trace,
            });
        }
        eval = evaluate(&rows, x, y, categories, &coef);
        trace.push(eval.loglik);
    }
    Err(GlmError::NoConvergence {
        iterations: opts.max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{fit_logistic, predict_probs};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn intercept_only_equal_counts() {
        let rows = vec![vec![1.0]; 40];
        let y: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let x = DesignMatrix::from_rows(&["one"], &rows).unwrap();
        let fit = fit_multinomial(&x, &y, 4, &FitOptions::default()).unwrap();
        for c in &fit.coefficients {
            assert!(c[0].abs() < 1e-10);
        }
        let p = predict_probs(&fit, &x).unwrap();
        for v in p.row(0) {
            assert!((v - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn saturated_intercept_reproduces_frequencies() {
        let counts = [5usize, 10, 20, 15];
        let y: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        let rows = vec![vec![1.0]; y.len()];
        let x = DesignMatrix::from_rows(&["one"], &rows).unwrap();
        let fit = fit_multinomial(&x, &y, 4, &FitOptions::default()).unwrap();
        let p = predict_probs(&fit, &x).unwrap();
        for (c, &n) in counts.iter().enumerate() {
            assert!((p.row(0)[c] - n as f64 / 50.0).abs() < 1e-10);
        }
    }

    #[test]
    fn two_categories_match_logistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..2000 {
            let l: f64 = rng.sample(StandardNormal);
            rows.push(vec![1.0, l]);
            let p = super::super::expit(0.3 - 0.7 * l);
            y.push(usize::from(rng.random::<f64>() < p));
        }
        let x = DesignMatrix::from_rows(&["one", "l"], &rows).unwrap();
        let opts = FitOptions::default();
        let multi = fit_multinomial(&x, &y, 2, &opts).unwrap();
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let logit = fit_logistic(&x, &yf, &opts).unwrap();
        for (a, b) in multi.coefficients[0].iter().zip(&logit.coefficients[0]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_category_is_separation() {
        let rows = vec![vec![1.0]; 30];
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let x = DesignMatrix::from_rows(&["one"], &rows).unwrap();
        assert!(matches!(
            fit_multinomial(&x, &y, 4, &FitOptions::default()),
            Err(GlmError::Separation { .. })
        ));
    }

    #[test]
    fn likelihood_non_decreasing_and_probabilities_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let truth = [[0.2, -0.1], [-0.3, 0.4], [0.1, 0.1]];
        let mut probs = [0.0; 4];
        for _ in 0..3000 {
            let l: f64 = rng.sample(StandardNormal);
            rows.push(vec![1.0, l]);
            softmax_with_reference(truth.iter().map(|b| b[0] + b[1] * l), &mut probs);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut cat = 3;
            for (c, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    cat = c;
                    break;
                }
            }
            y.push(cat);
        }
        let x = DesignMatrix::from_rows(&["one", "l"], &rows).unwrap();
        let fit = fit_multinomial(&x, &y, 4, &FitOptions::default()).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        let p = predict_probs(&fit, &x).unwrap();
        for i in 0..p.rows() {
            let row = p.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(row.iter().all(|v| *v > 0.0 && *v < 1.0));
        }
    }
}
