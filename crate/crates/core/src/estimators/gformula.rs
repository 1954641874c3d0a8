//! Parametric g-formula by Monte Carlo simulation from fitted outcome and
//! confounder models.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::glm::{fit_wls, DesignMatrix, GlmError};
use crate::longdata::{ComboCode, LongitudinalDataset};
use crate::rng::{Domain, SeedSpec, StreamKey};
use crate::simgen::sustained;

use super::{EstimateSet, EstimatorError, Method, StrategyValues};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GFormulaOptions {
    /// Number of simulated individuals per strategy.
    pub mc_size: usize,
    pub seed: SeedSpec,
    /// With `mc_size == n`, use each observed baseline exactly once instead
    /// of resampling.
    pub reuse_baselines: bool,
}

impl Default for GFormulaOptions {
    fn default() -> Self {
        Self {
            mc_size: 10_000,
            seed: SeedSpec::new(0, 0),
            reuse_baselines: false,
        }
    }
}

/// A fitted Gaussian linear model. Columns without support in the data keep
/// a zero coefficient, so predictions extrapolate through them.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub residual_sd: f64,
}

impl LinearModel {
    fn fit(names: Vec<String>, rows: &[Vec<f64>], y: &[f64]) -> Result<Self, GlmError> {
        let p = names.len();
        let support: Vec<usize> = (0..p).filter(|&j| rows.iter().any(|r| r[j] != 0.0)).collect();
        let m = rows.len();
        let mut data = Vec::with_capacity(m * support.len());
        for &j in &support {
            data.extend(rows.iter().map(|r| r[j]));
        }
        let kept = support.iter().map(|&j| names[j].clone()).collect();
        let x = DesignMatrix::from_col_major(kept, m, data, None)?;
        let fit = fit_wls(&x, y)?;
        let mut coefficients = vec![0.0; p];
        for (pos, &j) in support.iter().enumerate() {
            coefficients[j] = fit.coefficients[0][pos];
        }
        Ok(Self {
            names,
            coefficients,
            residual_sd: fit.residual_sd.unwrap_or(0.0),
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum()
    }

    /// Sets every coefficient whose name starts with `prefix` to zero.
    pub fn zero_prefixed(&mut self, prefix: &str) {
        for (name, b) in self.names.iter().zip(&mut self.coefficients) {
            if name.starts_with(prefix) {
                *b = 0.0;
            }
        }
    }
}

/// The fitted models and the observed baselines `(L_0, Y_0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GFormulaModels {
    /// `Y_{t+1}` on `1, L_t`, lag-indexed combination history, `Y_t`.
    pub outcome: LinearModel,
    /// `L_t` on `1, L_{t-1}`, combination at `t-1`, `Y_{t-1}`.
    pub confounder: LinearModel,
    pub baselines: Vec<(f64, f64)>,
    pub times: usize,
}

impl GFormulaModels {
    /// Zeroes the treatment terms of both models.
    pub fn zero_treatment_effects(&mut self) {
        self.outcome.zero_prefixed("lag");
        self.confounder.zero_prefixed("z_prev");
    }
}

fn outcome_row(times: usize, l: f64, y: f64, history: &[ComboCode]) -> Vec<f64> {
    let mut r = vec![0.0; 3 * times + 3];
    r[0] = 1.0;
    r[1] = l;
    let t = history.len() - 1;
    for lag in 1..=t + 1 {
        let c = history[t + 1 - lag].index();
        if c > 0 {
            r[2 + 3 * (lag - 1) + c - 1] = 1.0;
        }
    }
    r[3 * times + 2] = y;
    r
}

fn confounder_row(l_prev: f64, z_prev: ComboCode, y_prev: f64) -> Vec<f64> {
    let c = z_prev.index();
    vec![
        1.0,
        l_prev,
        f64::from(u8::from(c == 1)),
        f64::from(u8::from(c == 2)),
        f64::from(u8::from(c == 3)),
        y_prev,
    ]
}

/// Fits the outcome and confounder models by pooled least squares over the
/// observed person-times. Only the first covariate component is modelled.
pub fn fit_gformula_models(ds: &LongitudinalDataset) -> Result<GFormulaModels, EstimatorError> {
    let times = ds.times();
    let mut out_names = vec!["(intercept)".to_string(), "l".into()];
    for lag in 1..=times {
        for c in 1..=3 {
            out_names.push(format!("lag{lag}_{}", ComboCode::ALL[c].label()));
        }
    }
    out_names.push("y".into());
    let conf_names = ["(intercept)", "l_prev", "z_prev_1", "z_prev_2", "z_prev_3", "y_prev"]
        .map(String::from)
        .to_vec();

    let (mut out_rows, mut out_y, mut conf_rows, mut conf_y) = (vec![], vec![], vec![], vec![]);
    for i in 0..ds.n_individuals() {
        let z = ds.z_row(i);
        for t in 0..ds.observed_times(i) {
            out_rows.push(outcome_row(times, ds.l(i, t), ds.y(i, t), &z[..=t]));
            out_y.push(ds.y(i, t + 1));
            if t > 0 {
                conf_rows.push(confounder_row(ds.l(i, t - 1), z[t - 1], ds.y(i, t - 1)));
                conf_y.push(ds.l(i, t));
            }
        }
    }
    Ok(GFormulaModels {
        outcome: LinearModel::fit(out_names, &out_rows, &out_y)?,
        confounder: LinearModel::fit(conf_names, &conf_rows, &conf_y)?,
        baselines: (0..ds.n_individuals()).map(|i| (ds.l(i, 0), ds.y(i, 0))).collect(),
        times,
    })
}

/// Mean predicted outcome at horizons `1..=T` under each sustained strategy.
///
/// Every strategy sees the same baselines and the same noise draws.
pub fn simulate_strategies(
    models: &GFormulaModels,
    opts: &GFormulaOptions,
) -> Result<StrategyValues, EstimatorError> {
    let n = models.baselines.len();
    if opts.mc_size == 0 || n == 0 {
        return Err(EstimatorError::InvalidSpec("g-formula needs baselines and mc_size >= 1".into()));
    }
    if opts.reuse_baselines && opts.mc_size != n {
        return Err(EstimatorError::InvalidSpec(format!(
            "reusing baselines needs mc_size = n ({n}), got {}",
            opts.mc_size
        )));
    }
    let times = models.times;
    let key = StreamKey::new(opts.seed, Domain::GFormula, 0);
    let (out, conf) = (&models.outcome, &models.confounder);
    let mut sums = [(); 4].map(|_| vec![0.0; times]);
    let mut l = vec![0.0; times];
    let mut y = vec![0.0; times + 1];
    for j in 0..opts.mc_size {
        let mut rng = key.rng(j as u64);
        let pick = if opts.reuse_baselines { j } else { rng.random_range(0..n) };
        let noise: Vec<f64> = (0..2 * times).map(|_| rng.sample(StandardNormal)).collect();
        for (c, sum) in sums.iter_mut().enumerate() {
            let strategy = sustained(ComboCode::ALL[c], times);
            (l[0], y[0]) = models.baselines[pick];
            for t in 0..times {
                if t > 0 {
                    let mean = conf.predict(&confounder_row(l[t - 1], strategy[t - 1], y[t - 1]));
                    l[t] = mean + conf.residual_sd * noise[2 * t];
                }
                let mean = out.predict(&outcome_row(times, l[t], y[t], &strategy[..=t]));
                sum[t] += mean;
                y[t + 1] = mean + out.residual_sd * noise[2 * t + 1];
            }
        }
    }
    let mc = opts.mc_size as f64;
    Ok(sums.map(|s| s.into_iter().map(|v| Some(v / mc)).collect()))
}

pub fn gformula(ds: &LongitudinalDataset, mc_size: usize) -> Result<EstimateSet, EstimatorError> {
    gformula_with(
        ds,
        &GFormulaOptions {
            mc_size,
            ..GFormulaOptions::default()
        },
    )
}

pub fn gformula_with(
    ds: &LongitudinalDataset,
    opts: &GFormulaOptions,
) -> Result<EstimateSet, EstimatorError> {
    let models = fit_gformula_models(ds)?;
    let values = simulate_strategies(&models, opts)?;
    let coefficients = models
        .outcome
        .names
        .iter()
        .cloned()
        .zip(models.outcome.coefficients.iter().copied())
        .collect();
    let mut est = EstimateSet::from_values(Method::GFormula, &values, coefficients)?;
    if ds.covariate_width() > 1 {
        est.notes.push("only the first covariate component is modelled".into());
    }
    Ok(est)
}
