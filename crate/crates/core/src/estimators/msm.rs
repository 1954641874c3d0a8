//! Weighted marginal structural models: plain IPTW, censoring and
//! weighting, and sequential trials.

use crate::glm::{fit_wls, DesignMatrix};
use crate::longdata::{ComboCode, LongitudinalDataset};
use crate::weights::{
    censoring_weights, fit_treatment_model, stabilized_weights, stacked_person_times, truncate,
    CensoringMode, PersonTime, PropensityOptions, PropensityScores, Role, WeightSeries,
};

use super::{EstimateSet, EstimatorError, Method, StrategyValues};

/// How treatment history enters the MSM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MsmForm {
    /// One coefficient per combination and lag (time since that treatment).
    #[default]
    PerTimeIndicators,
    /// One coefficient per combination on the number of years spent on it.
    Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterceptForm {
    #[default]
    Common,
    PerHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineCovariate {
    Y0,
    /// First component of `L_0`.
    L0,
}

/// Weight construction shared by the MSM estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightOptions {
    pub propensity: PropensityOptions,
    /// Percentile truncation `(lo, hi)` applied to the final weights.
    pub truncate: Option<(f64, f64)>,
}

impl Default for WeightOptions {
    fn default() -> Self {
        Self {
            propensity: PropensityOptions::default(),
            truncate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsmSpec {
    pub form: MsmForm,
    pub intercept: InterceptForm,
    pub baseline_covariates: Vec<BaselineCovariate>,
    pub weights: WeightOptions,
}

impl Default for MsmSpec {
    fn default() -> Self {
        Self {
            form: MsmForm::PerTimeIndicators,
            intercept: InterceptForm::Common,
            baseline_covariates: vec![BaselineCovariate::Y0],
            weights: WeightOptions::default(),
        }
    }
}

impl MsmSpec {
    fn validate(&self) -> Result<(), EstimatorError> {
        // the numerator model conditions on Y_0, so the MSM must too
        if !self.baseline_covariates.contains(&BaselineCovariate::Y0) {
            return Err(EstimatorError::InvalidSpec(
                "baseline covariates must include y0, the numerator-model covariate".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqTrialOptions {
    /// Number of trial baselines `0..trials`; `None` uses every treatment time.
    pub trials: Option<usize>,
    /// Adds trial indicators to the treatment models and the MSM.
    pub trial_indicator: bool,
}

impl Default for SeqTrialOptions {
    fn default() -> Self {
        Self {
            trials: None,
            trial_indicator: true,
        }
    }
}

/// Treatment-model fits and weights over a stacked person-time layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedWeights {
    pub den: PropensityScores,
    pub num: PropensityScores,
    pub weights: WeightSeries,
    pub trials: usize,
    pub trial_indicator: bool,
}

/// Fits numerator and denominator models over trials `0..trials` and builds
/// the final weights (stabilized treatment weights times cumulative
/// censoring weights, truncated if requested).
pub fn prepare_weights(
    ds: &LongitudinalDataset,
    trials: usize,
    trial_indicator: bool,
    opts: &WeightOptions,
) -> Result<PreparedWeights, EstimatorError> {
    let rows = stacked_person_times(ds, trials);
    let dummies = if trial_indicator { trials } else { 1 };
    let den = fit_treatment_model(ds, &rows, Role::Denominator, dummies, &opts.propensity)?;
    let num = fit_treatment_model(ds, &rows, Role::Numerator, dummies, &opts.propensity)?;
    let mut weights = stabilized_weights(&num, &den)?;
    if ds.has_censoring() {
        let cens = censoring_weights(ds, &[], CensoringMode::Cumulative, true)?;
        // trial k counts censoring from its own baseline: cum(t) / cum(k - 1)
        let mut start = vec![usize::MAX; ds.n_individuals()];
        for (k, r) in cens.rows.iter().enumerate().rev() {
            start[r.individual] = k;
        }
        let base = |i: usize, t: usize| cens.weight[start[i] + t];
        let mut aligned = WeightSeries::uniform(rows.clone());
        for (k, r) in rows.iter().enumerate() {
            let upto = base(r.individual, r.time);
            let before = if r.trial > 0 { base(r.individual, r.trial - 1) } else { 1.0 };
            aligned.weight[k] = upto / before;
        }
        weights = weights.with_censoring(&aligned)?;
    }
    if let Some((lo, hi)) = opts.truncate {
        weights = truncate(&weights, lo, hi)?;
    }
    Ok(PreparedWeights {
        den,
        num,
        weights,
        trials,
        trial_indicator,
    })
}

fn adherent(ds: &LongitudinalDataset, r: &PersonTime) -> bool {
    let z = ds.z_row(r.individual);
    z[r.trial..=r.time].iter().all(|&c| c == z[r.trial])
}

/// Builds and fits the MSM on the chosen rows, returning strategy values
/// relative to sustained no treatment.
fn fit_msm(
    ds: &LongitudinalDataset,
    msm: &MsmSpec,
    prepared: &PreparedWeights,
    artificial_censoring: bool,
    method: Method,
) -> Result<EstimateSet, EstimatorError> {
    msm.validate()?;
    let horizons = ds.times();
    let trial_dummies = if prepared.trial_indicator { prepared.trials } else { 1 };
    let w = &prepared.weights;
    let picks: Vec<usize> = (0..w.rows.len())
        .filter(|&k| !artificial_censoring || adherent(ds, &w.rows[k]))
        .collect();

    let mut names: Vec<String> = match msm.intercept {
        InterceptForm::Common => vec!["(intercept)".into()],
        InterceptForm::PerHorizon => (1..=horizons).map(|h| format!("horizon_{h}")).collect(),
    };
    let treat_start = names.len();
    match msm.form {
        MsmForm::PerTimeIndicators => {
            for lag in 1..=horizons {
                for c in 1..=3 {
                    names.push(format!("lag{lag}_{}", ComboCode::ALL[c].label()));
                }
            }
        }
        MsmForm::Duration => {
            for c in 1..=3 {
                names.push(format!("years_{}", ComboCode::ALL[c].label()));
            }
        }
    }
    let treat_end = names.len();
    for b in &msm.baseline_covariates {
        names.push(match b {
            BaselineCovariate::Y0 => "y0".into(),
            BaselineCovariate::L0 => "l0".into(),
        });
    }
    names.extend((1..trial_dummies).map(|k| format!("trial_{k}")));

    let p = names.len();
    let m = picks.len();
    let mut data = vec![0.0; m * p];
    let mut y = Vec::with_capacity(m);
    let mut weight = Vec::with_capacity(m);
    for (row, &k) in picks.iter().enumerate() {
        let r = w.rows[k];
        let (i, t, s) = (r.individual, r.time, r.trial_time());
        let z = ds.z_row(i);
        let mut set = |col: usize, v: f64| data[col * m + row] = v;
        match msm.intercept {
            InterceptForm::Common => set(0, 1.0),
            InterceptForm::PerHorizon => set(s, 1.0),
        }
        match msm.form {
            MsmForm::PerTimeIndicators => {
                for lag in 1..=s + 1 {
                    let c = z[t + 1 - lag].index();
                    if c > 0 {
                        set(treat_start + 3 * (lag - 1) + c - 1, 1.0);
                    }
                }
            }
            MsmForm::Duration => {
                for j in r.trial..=t {
                    let c = z[j].index();
                    if c > 0 {
                        data[(treat_start + c - 1) * m + row] += 1.0;
                    }
                }
            }
        }
        let mut col = treat_end;
        for b in &msm.baseline_covariates {
            let v = match b {
                BaselineCovariate::Y0 => ds.y(i, 0),
                BaselineCovariate::L0 => ds.l(i, 0),
            };
            data[col * m + row] = v;
            col += 1;
        }
        if r.trial > 0 && trial_dummies > 1 {
            data[(col + r.trial - 1) * m + row] = 1.0;
        }
        y.push(ds.y(i, t + 1));
        weight.push(w.weight[k]);
    }

    // drop columns without support among positively weighted rows
    let supported: Vec<usize> = (0..p)
        .filter(|&j| (0..m).any(|r| weight[r] > 0.0 && data[j * m + r] != 0.0))
        .collect();
    let mut kept = Vec::with_capacity(supported.len() * m);
    for &j in &supported {
        kept.extend_from_slice(&data[j * m..(j + 1) * m]);
    }
    let kept_names: Vec<String> = supported.iter().map(|&j| names[j].clone()).collect();
    let x = DesignMatrix::from_col_major(kept_names.clone(), m, kept, Some(weight))?;
    let fit = fit_wls(&x, &y)?;
    let mut coef: Vec<Option<f64>> = vec![None; p];
    for (pos, &j) in supported.iter().enumerate() {
        coef[j] = Some(fit.coefficients[0][pos]);
    }

    let values: StrategyValues = std::array::from_fn(|c| {
        (1..=horizons)
            .map(|h| {
                if c == 0 {
                    return Some(0.0);
                }
                match msm.form {
                    MsmForm::PerTimeIndicators => (1..=h)
                        .map(|lag| coef[treat_start + 3 * (lag - 1) + c - 1])
                        .sum::<Option<f64>>(),
                    MsmForm::Duration => coef[treat_start + c - 1].map(|a| a * h as f64),
                }
            })
            .collect()
    });
    let coefficients = kept_names.into_iter().zip(fit.coefficients[0].iter().copied()).collect();
    let mut est = EstimateSet::from_values(method, &values, coefficients)?;
    for k in 1..prepared.trials {
        if !w.rows.iter().any(|r| r.trial == k) {
            est.notes.push(format!("trial {k} has no eligible individuals and was skipped"));
        }
    }
    Ok(est)
}

/// IPTW estimation of the MSM over all person-times.
pub fn iptw_msm(ds: &LongitudinalDataset, msm: &MsmSpec) -> Result<EstimateSet, EstimatorError> {
    iptw_msm_with(ds, msm, &prepare_weights(ds, 1, false, &msm.weights)?)
}

pub fn iptw_msm_with(
    ds: &LongitudinalDataset,
    msm: &MsmSpec,
    prepared: &PreparedWeights,
) -> Result<EstimateSet, EstimatorError> {
    fit_msm(ds, msm, prepared, false, Method::Iptw)
}

/// Artificially censors each individual at the first deviation from the
/// baseline combination and fits the MSM to the weighted remainder.
pub fn censor_and_weight(ds: &LongitudinalDataset, msm: &MsmSpec) -> Result<EstimateSet, EstimatorError> {
    censor_and_weight_with(ds, msm, &prepare_weights(ds, 1, false, &msm.weights)?)
}

pub fn censor_and_weight_with(
    ds: &LongitudinalDataset,
    msm: &MsmSpec,
    prepared: &PreparedWeights,
) -> Result<EstimateSet, EstimatorError> {
    fit_msm(ds, msm, prepared, true, Method::Censor)
}

/// Censoring and weighting repeated from every baseline at which the
/// individual is still untreated, pooled across trials.
pub fn sequential_trials(ds: &LongitudinalDataset, msm: &MsmSpec) -> Result<EstimateSet, EstimatorError> {
    sequential_trials_with(ds, msm, &SeqTrialOptions::default())
}

pub fn sequential_trials_with(
    ds: &LongitudinalDataset,
    msm: &MsmSpec,
    opts: &SeqTrialOptions,
) -> Result<EstimateSet, EstimatorError> {
    let trials = opts.trials.unwrap_or(ds.times()).clamp(1, ds.times());
    let prepared = prepare_weights(ds, trials, opts.trial_indicator, &msm.weights)?;
    fit_msm(ds, msm, &prepared, true, Method::SeqTrial)
}
