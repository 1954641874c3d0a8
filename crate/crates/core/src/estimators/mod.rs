//! The five g-method estimators. Each maps a dataset to estimates of all
//! six comparisons at every horizon.

mod bootstrap;
mod gest;
mod gformula;
mod msm;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::glm::GlmError;
use crate::longdata::{Comparison, EstimandId, LongitudinalDataset};
use crate::weights::WeightError;

pub use bootstrap::{bootstrap_se, BootstrapSummary};
pub use gest::{gestimation, gestimation_with, BlipStructure, SnmmSpec};
pub use gformula::{
    fit_gformula_models, gformula, gformula_with, simulate_strategies, GFormulaModels,
    GFormulaOptions,
};
pub use msm::{
    censor_and_weight, censor_and_weight_with, iptw_msm, iptw_msm_with, prepare_weights,
    sequential_trials, sequential_trials_with, BaselineCovariate, InterceptForm, MsmForm, MsmSpec,
    PreparedWeights, SeqTrialOptions, WeightOptions,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error("{method}: no estimable contrast; strategies without support: {missing}")]
    EmptyArm { method: Method, missing: String },
    #[error("strategy values missing for combination {0}")]
    MissingStrategy(usize),
    #[error("no convergence after {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
}

/// Estimator identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Iptw,
    Censor,
    SeqTrial,
    GFormula,
    GEst,
    GEstConst,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Iptw,
        Method::Censor,
        Method::SeqTrial,
        Method::GFormula,
        Method::GEst,
        Method::GEstConst,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Iptw => "iptw",
            Method::Censor => "censor",
            Method::SeqTrial => "seqtrial",
            Method::GFormula => "gformula",
            Method::GEst => "gest",
            Method::GEstConst => "gest-const",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s.trim())
            .ok_or_else(|| {
                let valid: Vec<&str> = Method::ALL.iter().map(|m| m.id()).collect();
                format!("unknown method `{s}`; valid: {}", valid.join(", "))
            })
    }
}

/// Estimates of one method on one dataset.
///
/// A `None` estimate marks a contrast whose strategies have no support in
/// the data (for example nobody sustains A-only to year 5 after artificial
/// censoring).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub method: Method,
    pub estimates: BTreeMap<EstimandId, Option<f64>>,
    pub se: Option<BTreeMap<EstimandId, f64>>,
    /// Named coefficients of the final fitted model.
    pub coefficients: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl EstimateSet {
    pub fn get(&self, id: EstimandId) -> Option<f64> {
        self.estimates.get(&id).copied().flatten()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub(crate) fn from_values(
        method: Method,
        values: &StrategyValues,
        coefficients: Vec<(String, f64)>,
    ) -> Result<Self, EstimatorError> {
        let estimates = contrasts(values)?;
        if estimates.values().all(Option::is_none) {
            let missing: Vec<String> = (1..4)
                .filter(|&c| values[c].iter().any(Option::is_none))
                .map(|c| crate::longdata::ComboCode::ALL[c].label().to_string())
                .collect();
            return Err(EstimatorError::EmptyArm {
                method,
                missing: missing.join(", "),
            });
        }
        Ok(Self {
            method,
            estimates,
            se: None,
            coefficients,
            notes: Vec::new(),
        })
    }
}

/// Per combination code, the value of the sustained strategy at horizons
/// `1..=H` (a mean, or an effect relative to a common reference).
pub type StrategyValues = [Vec<Option<f64>>; 4];

/// Differences of strategy values for every comparison and horizon.
pub fn contrasts(values: &StrategyValues) -> Result<BTreeMap<EstimandId, Option<f64>>, EstimatorError> {
    let horizons = values[0].len();
    if let Some(c) = (0..4).find(|&c| values[c].len() != horizons || horizons == 0) {
        return Err(EstimatorError::MissingStrategy(c));
    }
    let mut out = BTreeMap::new();
    for cmp in Comparison::ALL {
        let (p, q) = cmp.arms();
        for h in 1..=horizons {
            let v = match (values[p.index()][h - 1], values[q.index()][h - 1]) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            };
            out.insert(EstimandId::new(cmp, h), v);
        }
    }
    Ok(out)
}

/// Settings for every method, used by the study runner and the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub msm: MsmSpec,
    pub seqtrial: SeqTrialOptions,
    pub gformula: GFormulaOptions,
    pub snmm: SnmmSpec,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            msm: MsmSpec::default(),
            seqtrial: SeqTrialOptions::default(),
            gformula: GFormulaOptions::default(),
            snmm: SnmmSpec::default(),
        }
    }
}

/// Treatment models shared by several methods on one dataset.
#[derive(Debug, Default)]
pub struct SharedFits {
    trial0: Option<Result<PreparedWeights, EstimatorError>>,
}

impl SharedFits {
    fn trial0(
        &mut self,
        ds: &LongitudinalDataset,
        opts: &WeightOptions,
    ) -> Result<&PreparedWeights, EstimatorError> {
        self.trial0
            .get_or_insert_with(|| prepare_weights(ds, 1, false, opts))
            .as_ref()
            .map_err(Clone::clone)
    }
}

/// Runs one method, reusing treatment-model fits held in `shared`.
pub fn run_method(
    ds: &LongitudinalDataset,
    method: Method,
    cfg: &EstimatorConfig,
    shared: &mut SharedFits,
) -> Result<EstimateSet, EstimatorError> {
    match method {
        Method::Iptw => iptw_msm_with(ds, &cfg.msm, shared.trial0(ds, &cfg.msm.weights)?),
        Method::Censor => censor_and_weight_with(ds, &cfg.msm, shared.trial0(ds, &cfg.msm.weights)?),
        Method::SeqTrial => sequential_trials_with(ds, &cfg.msm, &cfg.seqtrial),
        Method::GFormula => gformula_with(ds, &cfg.gformula),
        Method::GEst | Method::GEstConst => {
            let mut snmm = cfg.snmm.clone();
            snmm.blip = if method == Method::GEst {
                BlipStructure::LagSpecific
            } else {
                BlipStructure::Constant
            };
            let den = &shared.trial0(ds, &cfg.msm.weights)?.den;
            let mut est = gestimation_with(ds, &snmm, den)?;
            est.method = method;
            Ok(est)
        }
    }
}

/// Runs one method without shared state.
pub fn run_single(
    ds: &LongitudinalDataset,
    method: Method,
    cfg: &EstimatorConfig,
) -> Result<EstimateSet, EstimatorError> {
    run_method(ds, method, cfg, &mut SharedFits::default())
}
