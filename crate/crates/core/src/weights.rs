//! Treatment-combination propensity models, stabilized inverse probability
//! weights, censoring weights, truncation and weight diagnostics.
//!
//! Person-times are stacked by trial: trial 0 holds every individual from
//! time 0, and trial `k > 0` holds the individuals untreated at times
//! `0..k`, from time `k` on. Plain analyses use trial 0 only.

use thiserror::Error;

use crate::glm::{
    fit_logistic, fit_multinomial, predict_probs, DesignMatrix, FitOptions, FitResult, GlmError,
};
use crate::longdata::{ComboCode, LongitudinalDataset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error("propensity of the observed combination is {value:e} for individual {individual} at time {time}")]
    ZeroDenominator {
        individual: usize,
        time: usize,
        value: f64,
    },
    #[error("numerator and denominator cover different person-times")]
    RowMismatch,
    #[error("no uncensored individuals remain at time {0}")]
    AllCensored(usize),
    #[error("dataset has no censoring column")]
    NoCensoring,
    #[error("invalid truncation percentiles ({0}, {1})")]
    InvalidPercentiles(f64, f64),
}

/// One row of a stacked person-time layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PersonTime {
    pub trial: usize,
    pub individual: usize,
    /// Calendar time.
    pub time: usize,
}

impl PersonTime {
    /// Time since the trial baseline.
    pub fn trial_time(&self) -> usize {
        self.time - self.trial
    }
}

/// Person-times for trials `0..trials`, ordered by trial, individual, time.
pub fn stacked_person_times(ds: &LongitudinalDataset, trials: usize) -> Vec<PersonTime> {
    let mut rows = Vec::new();
    for k in 0..trials.max(1) {
        for i in 0..ds.n_individuals() {
            let obs = ds.observed_times(i);
            if obs <= k || ds.z_row(i)[..k].iter().any(|&z| z != ComboCode::NONE) {
                continue;
            }
            rows.extend((k..obs).map(|t| PersonTime {
                trial: k,
                individual: i,
                time: t,
            }));
        }
    }
    rows
}

/// How the joint treatment probability is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PropensityForm {
    /// One multinomial model over the four combinations.
    #[default]
    Multinomial,
    /// Separate logistic models for A and B, multiplied.
    ProductOfLogistics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropensityOptions {
    pub form: PropensityForm,
    pub fit: FitOptions,
}

impl Default for PropensityOptions {
    fn default() -> Self {
        Self {
            form: PropensityForm::Multinomial,
            fit: FitOptions::default(),
        }
    }
}

/// Regressor set of a treatment model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Previous combination, `Y_0`, `Y_{t-1}` and `L_t`.
    Denominator,
    /// Previous combination and `Y_0`.
    Numerator,
}

/// Predicted combination probabilities per person-time.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityScores {
    pub rows: Vec<PersonTime>,
    /// `P(Z_t = c)` for `c = 0..3`.
    pub probs: Vec<[f64; 4]>,
    /// Probability of the combination actually observed.
    pub observed: Vec<f64>,
    /// Fitted models: baseline-time model first, then the pooled later-time
    /// model (one per treatment for the product form).
    pub fits: Vec<FitResult>,
    lookup: Vec<u32>,
    n: usize,
    times: usize,
}

impl PropensityScores {
    /// Row index of `(trial, individual, time)`.
    pub fn position(&self, trial: usize, individual: usize, time: usize) -> Option<usize> {
        let slot = (trial * self.n + individual) * self.times + time;
        match self.lookup.get(slot) {
            Some(&v) if v != u32::MAX => Some(v as usize),
            _ => None,
        }
    }
}

fn build_lookup(rows: &[PersonTime], n: usize, times: usize) -> Vec<u32> {
    let trials = rows.iter().map(|r| r.trial + 1).max().unwrap_or(1);
    let mut lookup = vec![u32::MAX; trials * n * times];
    for (k, r) in rows.iter().enumerate() {
        lookup[(r.trial * n + r.individual) * times + r.time] = k as u32;
    }
    lookup
}

fn treatment_design(
    ds: &LongitudinalDataset,
    rows: &[PersonTime],
    picks: &[usize],
    role: Role,
    baseline: bool,
    trial_dummies: usize,
) -> Result<DesignMatrix, GlmError> {
    let width = ds.covariate_width();
    let mut names: Vec<String> = vec!["(intercept)".into()];
    if !baseline {
        names.extend((1..=3).map(|c| format!("z_prev_{c}")));
    }
    names.push("y0".into());
    if role == Role::Denominator {
        if !baseline {
            names.push("y_prev".into());
        }
        names.push("l".into());
        names.extend((2..=width).map(|w| format!("l{w}")));
    }
    if !baseline {
        names.extend((1..trial_dummies).map(|k| format!("trial_{k}")));
    }
    let p = names.len();
    let m = picks.len();
    let mut data = vec![0.0; m * p];
    for (r, &k) in picks.iter().enumerate() {
        let pt = rows[k];
        let (i, t) = (pt.individual, pt.time);
        let mut col = 0;
        let mut put = |v: f64| {
            data[col * m + r] = v;
            col += 1;
        };
        put(1.0);
        if !baseline {
            let prev = ds.z(i, t - 1).index();
            for c in 1..=3 {
                put(if prev == c { 1.0 } else { 0.0 });
            }
        }
        put(ds.y(i, 0));
        if role == Role::Denominator {
            if !baseline {
                put(ds.y(i, t - 1));
            }
            for &v in ds.l_vec(i, t) {
                put(v);
            }
        }
        if !baseline {
            for k in 1..trial_dummies {
                put(if pt.trial == k { 1.0 } else { 0.0 });
            }
        }
    }
    DesignMatrix::from_col_major(names, m, data, None)
}

fn fit_block(
    ds: &LongitudinalDataset,
    x: &DesignMatrix,
    rows: &[PersonTime],
    picks: &[usize],
    opts: &PropensityOptions,
    out: &mut [[f64; 4]],
    fits: &mut Vec<FitResult>,
) -> Result<(), GlmError> {
    let combos: Vec<ComboCode> = picks
        .iter()
        .map(|&k| ds.z(rows[k].individual, rows[k].time))
        .collect();
    match opts.form {
        PropensityForm::Multinomial => {
            let y: Vec<usize> = combos.iter().map(|z| z.index()).collect();
            let fit = fit_multinomial(x, &y, 4, &opts.fit)?;
            let probs = predict_probs(&fit, x)?;
            for (r, &k) in picks.iter().enumerate() {
                out[k].copy_from_slice(probs.row(r));
            }
            fits.push(fit);
        }
        PropensityForm::ProductOfLogistics => {
            let ya: Vec<f64> = combos.iter().map(|z| f64::from(u8::from(z.a()))).collect();
            let yb: Vec<f64> = combos.iter().map(|z| f64::from(u8::from(z.b()))).collect();
            let fa = fit_logistic(x, &ya, &opts.fit)?;
            let fb = fit_logistic(x, &yb, &opts.fit)?;
            let pa = predict_probs(&fa, x)?;
            let pb = predict_probs(&fb, x)?;
            for (r, &k) in picks.iter().enumerate() {
                let (a, b) = (pa.values[r], pb.values[r]);
                out[k] = [(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b];
            }
            fits.push(fa);
            fits.push(fb);
        }
    }
    Ok(())
}

/// Fits a treatment model over the given stacked person-times.
///
/// Rows at time 0 get their own model without lag terms; later rows share a
/// pooled model. With `trial_dummies = K > 1`, indicators for trials
/// `1..K` enter the pooled model.
pub fn fit_treatment_model(
    ds: &LongitudinalDataset,
    rows: &[PersonTime],
    role: Role,
    trial_dummies: usize,
    opts: &PropensityOptions,
) -> Result<PropensityScores, WeightError> {
    let (first, later): (Vec<usize>, Vec<usize>) =
        (0..rows.len()).partition(|&k| rows[k].time == 0);
    let mut probs = vec![[0.0; 4]; rows.len()];
    let mut fits = Vec::new();
    for (picks, baseline) in [(&first, true), (&later, false)] {
        if picks.is_empty() {
            continue;
        }
        let x = treatment_design(ds, rows, picks, role, baseline, trial_dummies)?;
        fit_block(ds, &x, rows, picks, opts, &mut probs, &mut fits)?;
    }
    let observed = rows
        .iter()
        .zip(&probs)
        .map(|(r, p)| p[ds.z(r.individual, r.time).index()])
        .collect();
    Ok(PropensityScores {
        lookup: build_lookup(rows, ds.n_individuals(), ds.times()),
        rows: rows.to_vec(),
        probs,
        observed,
        fits,
        n: ds.n_individuals(),
        times: ds.times(),
    })
}

/// Denominator model. With the flag set, rows are stacked over trials
/// `0..T` and trial indicators enter the model.
pub fn fit_propensity(
    ds: &LongitudinalDataset,
    include_trial_indicator: bool,
) -> Result<PropensityScores, WeightError> {
    let trials = if include_trial_indicator { ds.times() } else { 1 };
    let rows = stacked_person_times(ds, trials);
    fit_treatment_model(ds, &rows, Role::Denominator, trials, &PropensityOptions::default())
}

/// Numerator model over trial 0.
pub fn fit_numerator(ds: &LongitudinalDataset) -> Result<PropensityScores, WeightError> {
    let rows = stacked_person_times(ds, 1);
    fit_treatment_model(ds, &rows, Role::Numerator, 1, &PropensityOptions::default())
}

/// Per-time weight summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeDiagnostics {
    pub time: usize,
    pub mean_w: f64,
    pub max_w: f64,
    pub ess: f64,
    pub count: usize,
}

/// Weights per stacked person-time.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSeries {
    pub rows: Vec<PersonTime>,
    /// Stabilized treatment weight, cumulative over the trial's times up to `t`.
    pub sw: Vec<f64>,
    /// Censoring weight (1 when there is no censoring).
    pub cw: Vec<f64>,
    /// Weight used by estimators: `sw * cw`, possibly truncated.
    pub weight: Vec<f64>,
}

impl WeightSeries {
    pub fn uniform(rows: Vec<PersonTime>) -> Self {
        let n = rows.len();
        Self {
            rows,
            sw: vec![1.0; n],
            cw: vec![1.0; n],
            weight: vec![1.0; n],
        }
    }

    /// Multiplies in censoring weights aligned on the same rows.
    pub fn with_censoring(mut self, cens: &WeightSeries) -> Result<Self, WeightError> {
        if cens.rows != self.rows {
            return Err(WeightError::RowMismatch);
        }
        self.cw = cens.weight.clone();
        self.weight = self.sw.iter().zip(&self.cw).map(|(a, b)| a * b).collect();
        Ok(self)
    }

    /// Mean, max and effective sample size per trial time.
    pub fn diagnostics(&self) -> Vec<TimeDiagnostics> {
        let times = self.rows.iter().map(|r| r.trial_time() + 1).max().unwrap_or(0);
        (0..times)
            .filter_map(|t| {
                let w: Vec<f64> = self
                    .rows
                    .iter()
                    .zip(&self.weight)
                    .filter(|(r, _)| r.trial_time() == t)
                    .map(|(_, &w)| w)
                    .collect();
                if w.is_empty() {
                    return None;
                }
                let sum: f64 = w.iter().sum();
                let sq: f64 = w.iter().map(|v| v * v).sum();
                Some(TimeDiagnostics {
                    time: t,
                    mean_w: sum / w.len() as f64,
                    max_w: w.iter().copied().fold(f64::MIN, f64::max),
                    ess: if sq > 0.0 { sum * sum / sq } else { 0.0 },
                    count: w.len(),
                })
            })
            .collect()
    }
}

/// `SW_t = prod_{j = trial..t} num_j / den_j` at the observed combinations.
pub fn stabilized_weights(
    num: &PropensityScores,
    den: &PropensityScores,
) -> Result<WeightSeries, WeightError> {
    if num.rows != den.rows {
        return Err(WeightError::RowMismatch);
    }
    let mut sw = Vec::with_capacity(den.rows.len());
    let mut running = 1.0;
    for (k, r) in den.rows.iter().enumerate() {
        let d = den.observed[k];
        if !(d >= 1e-12) {
            return Err(WeightError::ZeroDenominator {
                individual: r.individual,
                time: r.time,
                value: d,
            });
        }
        if r.time == r.trial {
            running = 1.0;
        }
        running *= num.observed[k] / d;
        sw.push(running);
    }
    let n = sw.len();
    Ok(WeightSeries {
        rows: den.rows.clone(),
        weight: sw.clone(),
        sw,
        cw: vec![1.0; n],
    })
}

/// Direction of the censoring-weight product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CensoringMode {
    /// Product over `j <= t` of remaining-uncensored probabilities.
    Cumulative,
    /// `I(uncensored at T)` over the product for `j > t`.
    Forward,
}

/// Models `P(outcome at t+1 observed | observed at t)` over treatment
/// rows, and returns weights for the trial-0 person-times.
///
/// The denominator uses `Y_0`, the time index, the previous combination,
/// `L_{t-1}` and `Y_t`; the numerator uses `Y_0` and the time index.
/// `baseline_covariates` adds columns of `L_0` (by component index) to both.
pub fn censoring_weights(
    ds: &LongitudinalDataset,
    baseline_covariates: &[usize],
    mode: CensoringMode,
    stabilized: bool,
) -> Result<WeightSeries, WeightError> {
    if !ds.has_censoring() {
        return Err(WeightError::NoCensoring);
    }
    let times = ds.times();
    let n = ds.n_individuals();
    // risk rows: outcome Y_t observed and t < T
    let mut risk: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for t in 0..times.min(ds.last_outcome(i) + 1) {
            risk.push((i, t));
        }
    }
    for t in 0..times {
        if !risk.iter().any(|&(i, s)| s == t && ds.last_outcome(i) > t) {
            return Err(WeightError::AllCensored(t));
        }
    }
    let event: Vec<f64> = risk
        .iter()
        .map(|&(i, t)| if ds.last_outcome(i) == t { 1.0 } else { 0.0 })
        .collect();

    let design = |full: bool| -> Result<DesignMatrix, GlmError> {
        let mut names = vec!["(intercept)".to_string(), "y0".into(), "time".into()];
        names.extend(baseline_covariates.iter().map(|w| format!("l0_{w}")));
        if full {
            names.extend((1..=3).map(|c| format!("z_prev_{c}")));
            names.push("l_prev".into());
            names.push("y".into());
        }
        let rows: Vec<Vec<f64>> = risk
            .iter()
            .map(|&(i, t)| {
                let mut r = vec![1.0, ds.y(i, 0), t as f64];
                r.extend(baseline_covariates.iter().map(|&w| ds.l_vec(i, 0)[w]));
                if full {
                    let prev = if t > 0 { ds.z(i, t - 1).index() } else { 0 };
                    r.extend((1..=3).map(|c| if prev == c { 1.0 } else { 0.0 }));
                    r.push(if t > 0 { ds.l(i, t - 1) } else { 0.0 });
                    r.push(ds.y(i, t));
                }
                r
            })
            .collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        DesignMatrix::from_rows(&refs, &rows)
    };
    let any_event = event.iter().any(|&e| e == 1.0);
    let stay_prob = |full: bool| -> Result<Vec<f64>, WeightError> {
        if !any_event {
            return Ok(vec![1.0; risk.len()]);
        }
        let x = design(full)?;
        let fit = fit_logistic(&x, &event, &FitOptions::default())?;
        Ok(predict_probs(&fit, &x)?.values.into_iter().map(|p| 1.0 - p).collect())
    };
    let den = stay_prob(true)?;
    let num = if stabilized && mode == CensoringMode::Cumulative {
        stay_prob(false)?
    } else {
        vec![1.0; risk.len()]
    };

    // per individual factor sequence over risk rows
    let mut factor = vec![vec![]; n];
    for (k, &(i, _)) in risk.iter().enumerate() {
        factor[i].push(num[k] / den[k]);
    }
    let rows = stacked_person_times(ds, 1);
    let weight: Vec<f64> = rows
        .iter()
        .map(|r| {
            let f = &factor[r.individual];
            match mode {
                CensoringMode::Cumulative => f[..=r.time].iter().product(),
                CensoringMode::Forward => {
                    if ds.last_outcome(r.individual) < times {
                        0.0
                    } else {
                        f[r.time..].iter().product()
                    }
                }
            }
        })
        .collect();
    Ok(WeightSeries {
        sw: vec![1.0; rows.len()],
        cw: weight.clone(),
        weight,
        rows,
    })
}

/// Nearest-rank percentile of an ascending sample: the value at rank
/// `max(1, ceil(p/100 * N))`.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Clamps the estimator weights to the `[lo, hi]` percentiles computed
/// separately at each trial time.
pub fn truncate(w: &WeightSeries, lo_pct: f64, hi_pct: f64) -> Result<WeightSeries, WeightError> {
    if !(0.0..100.0).contains(&lo_pct) || !(lo_pct < hi_pct && hi_pct <= 100.0) {
        return Err(WeightError::InvalidPercentiles(lo_pct, hi_pct));
    }
    let mut out = w.clone();
    let times = w.rows.iter().map(|r| r.trial_time() + 1).max().unwrap_or(0);
    for t in 0..times {
        let idx: Vec<usize> = (0..w.rows.len()).filter(|&k| w.rows[k].trial_time() == t).collect();
        if idx.is_empty() {
            continue;
        }
        let mut sorted: Vec<f64> = idx.iter().map(|&k| w.weight[k]).collect();
        sorted.sort_by(f64::total_cmp);
        let lo = if lo_pct == 0.0 { sorted[0] } else { nearest_rank(&sorted, lo_pct) };
        let hi = nearest_rank(&sorted, hi_pct);
        for k in idx {
            out.weight[k] = w.weight[k].clamp(lo, hi);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::longdata::PanelParts;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Treatments drawn uniformly over the four combinations, independent of everything.
    fn randomized(n: usize, times: usize, seed: u64) -> LongitudinalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut parts = PanelParts {
            ids: (0..n).map(|i| i.to_string()).collect(),
            times,
            covariate_width: 1,
            ..Default::default()
        };
        for _ in 0..n {
            for _ in 0..times {
                parts.a.push(rng.random_range(0..2));
                parts.b.push(rng.random_range(0..2));
                parts.l.push(rng.sample(StandardNormal));
            }
            for _ in 0..=times {
                parts.y.push(rng.sample(StandardNormal));
            }
        }
        LongitudinalDataset::from_parts(parts).unwrap()
    }

    #[test]
    fn person_time_stacking() {
        let ds = {
            let mut p = PanelParts {
                ids: vec!["a".into(), "b".into()],
                times: 3,
                covariate_width: 1,
                l: vec![0.0; 6],
                y: vec![0.0; 8],
                ..Default::default()
            };
            // a: z = (0, 3, 3); b: z = (1, 1, 1)
            p.a = vec![0, 1, 1, 1, 1, 1];
            p.b = vec![0, 1, 1, 0, 0, 0];
            LongitudinalDataset::from_parts(p).unwrap()
        };
        let rows = stacked_person_times(&ds, 3);
        let trial1: Vec<_> = rows.iter().filter(|r| r.trial == 1).collect();
        assert_eq!(trial1.len(), 2);
        assert!(trial1.iter().all(|r| r.individual == 0));
        assert!(rows.iter().all(|r| r.trial != 2));
        assert_eq!(rows.iter().filter(|r| r.trial == 0).count(), 6);
    }

    #[test]
    fn null_model_probabilities_and_unit_weights() {
        let ds = randomized(4000, 3, 1);
        let den = fit_propensity(&ds, false).unwrap();
        let num = fit_numerator(&ds).unwrap();
        let mut fitted = [0.0; 4];
        let mut counts = [0.0; 4];
        for (r, p) in den.rows.iter().zip(&den.probs) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            for (c, v) in p.iter().enumerate() {
                assert!((v - 0.25).abs() < 0.1, "{p:?}");
                fitted[c] += v;
            }
            counts[ds.z(r.individual, r.time).index()] += 1.0;
        }
        // with an intercept the fitted probabilities reproduce the observed frequencies
        for c in 0..4 {
            assert!((fitted[c] - counts[c]).abs() < 1e-6 * counts[c]);
            assert!((counts[c] / den.rows.len() as f64 - 0.25).abs() < 0.02);
        }
        let w = stabilized_weights(&num, &den).unwrap();
        for d in w.diagnostics() {
            assert!((d.mean_w - 1.0).abs() < 0.05);
            assert!(d.ess <= d.count as f64 + 1e-9);
        }
    }

    #[test]
    fn equal_models_give_unit_weights() {
        let ds = randomized(500, 3, 2);
        let den = fit_propensity(&ds, false).unwrap();
        let w = stabilized_weights(&den, &den).unwrap();
        assert!(w.weight.iter().all(|&v| v == 1.0));
        let d = w.diagnostics();
        assert!(d.iter().all(|x| (x.ess - x.count as f64).abs() < 1e-9));
    }

    #[test]
    fn single_factor_product() {
        let ds = randomized(400, 4, 3);
        let mut den = fit_propensity(&ds, false).unwrap();
        let mut num = den.clone();
        for k in 0..den.rows.len() {
            num.observed[k] = 0.3;
            den.observed[k] = 0.3;
        }
        let k = den.position(0, 1, 2).unwrap();
        num.observed[k] = 0.5;
        den.observed[k] = 0.25;
        let w = stabilized_weights(&num, &den).unwrap();
        for (r, v) in w.rows.iter().zip(&w.sw) {
            let expect = if r.individual == 1 && r.time >= 2 { 2.0 } else { 1.0 };
            assert_eq!(*v, expect);
        }
        den.observed[k] = 0.0;
        assert!(matches!(
            stabilized_weights(&num, &den),
            Err(WeightError::ZeroDenominator { .. })
        ));
    }

    #[test]
    fn cumulative_property() {
        let ds = randomized(800, 4, 4);
        let den = fit_propensity(&ds, false).unwrap();
        let num = fit_numerator(&ds).unwrap();
        let w = stabilized_weights(&num, &den).unwrap();
        for k in 1..w.rows.len() {
            let (r, prev) = (w.rows[k], w.rows[k - 1]);
            if r.time > 0 && prev.individual == r.individual {
                let ratio = num.observed[k] / den.observed[k];
                assert!((w.sw[k] - w.sw[k - 1] * ratio).abs() < 1e-12 * w.sw[k].max(1.0));
            }
        }
    }

    #[test]
    fn numerator_ignores_covariate() {
        let ds = randomized(600, 3, 5);
        let mut parts = PanelParts {
            ids: (0..600).map(|i| i.to_string()).collect(),
            times: 3,
            covariate_width: 1,
            ..Default::default()
        };
        for i in 0..600 {
            for t in 0..3 {
                parts.a.push(ds.a(i, t));
                parts.b.push(ds.b(i, t));
                parts.l.push(ds.l((i * 7 + 3) % 600, t));
            }
            for t in 0..=3 {
                parts.y.push(ds.y(i, t));
            }
        }
        let permuted = LongitudinalDataset::from_parts(parts).unwrap();
        assert_eq!(
            fit_numerator(&ds).unwrap().probs,
            fit_numerator(&permuted).unwrap().probs
        );
    }

    #[test]
    fn product_of_logistics_is_normalized() {
        let ds = randomized(1000, 3, 6);
        let rows = stacked_person_times(&ds, 1);
        let opts = PropensityOptions {
            form: PropensityForm::ProductOfLogistics,
            ..Default::default()
        };
        let p = fit_treatment_model(&ds, &rows, Role::Denominator, 1, &opts).unwrap();
        assert_eq!(p.fits.len(), 4);
        for v in &p.probs {
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn with_censoring(ds: &LongitudinalDataset, last: Vec<usize>) -> LongitudinalDataset {
        let n = ds.n_individuals();
        let t = ds.times();
        let mut parts = PanelParts {
            ids: (0..n).map(|i| ds.id(i).to_string()).collect(),
            times: t,
            covariate_width: 1,
            last: Some(last),
            ..Default::default()
        };
        for i in 0..n {
            for s in 0..t {
                parts.a.push(ds.a(i, s));
                parts.b.push(ds.b(i, s));
                parts.l.push(ds.l(i, s));
            }
            for s in 0..=t {
                parts.y.push(ds.y(i, s));
            }
        }
        LongitudinalDataset::from_parts(parts).unwrap()
    }

    #[test]
    fn censoring_weights_examples() {
        let ds = randomized(6000, 3, 7);
        let none = with_censoring(&ds, vec![3; 6000]);
        let w = censoring_weights(&none, &[], CensoringMode::Cumulative, true).unwrap();
        assert!(w.weight.iter().all(|&v| v == 1.0));

        // half of the sample loses follow-up after Y_1, completely at random
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let last: Vec<usize> = (0..6000).map(|_| if rng.random::<f64>() < 0.5 { 1 } else { 3 }).collect();
        let cens = with_censoring(&ds, last.clone());
        let w = censoring_weights(&cens, &[], CensoringMode::Cumulative, false).unwrap();
        let late: Vec<f64> = w
            .rows
            .iter()
            .zip(&w.weight)
            .filter(|(r, _)| r.time >= 1 && r.time < cens.observed_times(r.individual))
            .map(|(_, &v)| v)
            .collect();
        let mean = late.iter().sum::<f64>() / late.len() as f64;
        assert!((mean - 2.0).abs() < 0.15, "mean {mean}");

        let fw = censoring_weights(&cens, &[], CensoringMode::Forward, false).unwrap();
        for (r, v) in fw.rows.iter().zip(&fw.weight) {
            if last[r.individual] < 3 {
                assert_eq!(*v, 0.0);
            } else {
                assert!(*v >= 1.0);
            }
        }
    }

    #[test]
    fn truncation_rules() {
        let rows: Vec<PersonTime> = (0..10)
            .map(|i| PersonTime {
                trial: 0,
                individual: i,
                time: 0,
            })
            .collect();
        let mut w = WeightSeries::uniform(rows);
        w.weight = (1..=10).map(f64::from).collect();
        let same = truncate(&w, 0.0, 100.0).unwrap();
        assert_eq!(same.weight, w.weight);
        let t = truncate(&w, 10.0, 90.0).unwrap();
        assert_eq!(t.weight[0], 1.0);
        assert_eq!(t.weight[9], 9.0);
        assert_eq!(t.weight[4], 5.0);
        assert!(truncate(&w, 50.0, 40.0).is_err());
        let max_before = w.weight.iter().copied().fold(0.0, f64::max);
        let t2 = truncate(&w, 20.0, 70.0).unwrap();
        assert!(t2.weight.iter().all(|&v| v <= max_before));
        assert_eq!(t2.weight[0], 2.0);
        assert_eq!(t2.weight[9], 7.0);
    }
}
