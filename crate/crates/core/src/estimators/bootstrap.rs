use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::longdata::{EstimandId, LongitudinalDataset};
use crate::rng::{Domain, SeedSpec, StreamKey};

use super::{run_method, EstimateSet, EstimatorConfig, EstimatorError, Method, SharedFits};

/// Bootstrap standard errors and the resamples behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub method: Method,
    pub requested: usize,
    /// Resamples whose estimator run failed, with the error.
    pub failures: Vec<(usize, EstimatorError)>,
    /// Sample sd over successful resamples with a value for the estimand.
    pub se: BTreeMap<EstimandId, f64>,
    pub replicates: Vec<EstimateSet>,
}

impl BootstrapSummary {
    /// Normal-based interval `estimate +- 1.96 se`.
    pub fn interval(&self, id: EstimandId, estimate: f64) -> Option<(f64, f64)> {
        self.se.get(&id).map(|se| (estimate - 1.96 * se, estimate + 1.96 * se))
    }
}

/// Resamples individuals with replacement `b` times and reruns `method`.
pub fn bootstrap_se(
    ds: &LongitudinalDataset,
    method: Method,
    cfg: &EstimatorConfig,
    b: usize,
    seed: SeedSpec,
) -> Result<BootstrapSummary, EstimatorError> {
    if b < 2 {
        return Err(EstimatorError::InvalidSpec(format!("bootstrap needs at least 2 resamples, got {b}")));
    }
    let n = ds.n_individuals();
    let key = StreamKey::new(seed, Domain::Bootstrap, 0);
    let runs: Vec<Result<EstimateSet, EstimatorError>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = key.rng(r as u64);
            let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            run_method(&ds.select(&picks), method, cfg, &mut SharedFits::default())
        })
        .collect();

    let mut failures = Vec::new();
    let mut replicates = Vec::new();
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok(est) => replicates.push(est),
            Err(e) => failures.push((r, e)),
        }
    }
    let mut se = BTreeMap::new();
    for id in EstimandId::all(ds.times()) {
        let v: Vec<f64> = replicates.iter().filter_map(|e| e.get(id)).collect();
        if v.len() < 2 {
            continue;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
        se.insert(id, (ss / (v.len() - 1) as f64).sqrt());
    }
    Ok(BootstrapSummary {
        method,
        requested: b,
        failures,
        se,
        replicates,
    })
}
