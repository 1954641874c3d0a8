//! Simulation study runner and performance measures.

mod io;
mod svg;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::estimators::{run_method, EstimatorConfig, Method, SharedFits};
use crate::longdata::{Comparison, EstimandId};
use crate::oracle::TrueEffects;
use crate::rng::SeedSpec;
use crate::simgen::{generate, scenario_spec, SimError};

pub use io::{
    read_estimates, read_raw, read_report, read_truth, write_estimates, write_raw, write_report,
    write_truth,
};
pub use svg::{render_panel, write_svg_panels, Panel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{scenario}/{method}/{comparison} h{horizon}: {available} successful replications, need at least 2")]
    InsufficientReplications {
        scenario: u32,
        method: Method,
        comparison: Comparison,
        horizon: usize,
        available: usize,
    },
    #[error("no truth for scenario {0}")]
    MissingTruth(u32),
    #[error("study needs at least {needed} replications, got {got}")]
    TooFewReplications { needed: usize, got: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Outcome of one estimator run for one estimand.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum CellStatus {
    Ok,
    /// The method ran but this contrast had no support.
    Inestimable,
    /// The method failed for the whole replication.
    Failed(String),
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellStatus::Ok => f.write_str("ok"),
            CellStatus::Inestimable => f.write_str("inestimable"),
            CellStatus::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

impl CellStatus {
    pub fn parse(s: &str) -> Self {
        match s {
            "ok" => CellStatus::Ok,
            "inestimable" => CellStatus::Inestimable,
            other => CellStatus::Failed(other.strip_prefix("failed: ").unwrap_or(other).to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRow {
    pub scenario: u32,
    pub replication: usize,
    pub method: Method,
    pub estimand: EstimandId,
    pub estimate: Option<f64>,
    pub status: CellStatus,
}

/// Every estimate of a study, sorted by scenario, replication, method and
/// estimand.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplicationTable {
    pub rows: Vec<ReplicationRow>,
}

impl ReplicationTable {
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (a.scenario, a.replication, a.method, a.estimand)
                .cmp(&(b.scenario, b.replication, b.method, b.estimand))
        });
    }

    /// Rows with `status != Ok`.
    pub fn failures(&self) -> impl Iterator<Item = &ReplicationRow> {
        self.rows.iter().filter(|r| r.status != CellStatus::Ok)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub scenarios: Vec<u32>,
    pub methods: Vec<Method>,
    pub n_sim: usize,
    pub n: usize,
    pub master_seed: u64,
    pub estimators: EstimatorConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            scenarios: (1..=9).collect(),
            methods: Method::ALL.to_vec(),
            n_sim: 200,
            n: 10_000,
            master_seed: 20_240_101,
            estimators: EstimatorConfig::default(),
        }
    }
}

fn run_replication(
    scenario: u32,
    replication: usize,
    cfg: &StudyConfig,
) -> Result<Vec<ReplicationRow>, SimError> {
    let spec = scenario_spec(scenario)?;
    let seed = SeedSpec::new(cfg.master_seed, replication as u64);
    let ds = generate(&spec, cfg.n, seed);
    let mut est_cfg = cfg.estimators.clone();
    est_cfg.gformula.seed = seed;
    let mut shared = SharedFits::default();
    let ids = EstimandId::all(spec.times);
    let mut rows = Vec::with_capacity(cfg.methods.len() * ids.len());
    for &method in &cfg.methods {
        let result = run_method(&ds, method, &est_cfg, &mut shared);
        for &estimand in &ids {
            let (estimate, status) = match &result {
                Ok(set) => match set.get(estimand) {
                    Some(v) => (Some(v), CellStatus::Ok),
                    None => (None, CellStatus::Inestimable),
                },
                Err(e) => (None, CellStatus::Failed(e.to_string())),
            };
            rows.push(ReplicationRow {
                scenario,
                replication,
                method,
                estimand,
                estimate,
                status,
            });
        }
    }
    Ok(rows)
}

/// Simulates `n_sim` datasets per scenario and runs every method on each.
///
/// Replication `r` of every scenario uses the data stream `(master_seed, r)`,
/// so the table does not depend on the thread count. Method failures are
/// recorded per cell and the study carries on.
pub fn run_study(cfg: &StudyConfig) -> Result<ReplicationTable, EvalError> {
    run_study_with_progress(cfg, |_, _| {})
}

/// [`run_study`] with a callback after each finished replication.
pub fn run_study_with_progress<F>(cfg: &StudyConfig, progress: F) -> Result<ReplicationTable, EvalError>
where
    F: Fn(u32, usize) + Sync,
{
    if cfg.n_sim == 0 {
        return Err(EvalError::TooFewReplications { needed: 1, got: 0 });
    }
    for &s in &cfg.scenarios {
        scenario_spec(s)?;
    }
    let jobs: Vec<(u32, usize)> = cfg
        .scenarios
        .iter()
        .flat_map(|&s| (0..cfg.n_sim).map(move |r| (s, r)))
        .collect();
    let parts: Vec<Vec<ReplicationRow>> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let rows = run_replication(s, r, cfg)?;
            progress(s, r);
            Ok(rows)
        })
        .collect::<Result<_, SimError>>()?;
    let mut table = ReplicationTable {
        rows: parts.into_iter().flatten().collect(),
    };
    table.sort();
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceRow {
    pub scenario: u32,
    pub method: Method,
    pub estimand: EstimandId,
    pub theta: f64,
    /// Mean estimate over successful replications.
    pub mean: f64,
    /// `mean - theta`.
    pub bias: f64,
    pub bias_mcse: f64,
    pub empse: f64,
    pub empse_mcse: f64,
    pub n_effective: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerformanceReport {
    pub rows: Vec<PerformanceRow>,
}

impl PerformanceReport {
    pub fn get(&self, scenario: u32, method: Method, estimand: EstimandId) -> Option<&PerformanceRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.method == method && r.estimand == estimand)
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn scenarios(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.rows.iter().map(|r| r.scenario).collect();
        s.sort();
        s.dedup();
        s
    }
}

/// Bias, empirical SE and their Monte Carlo SEs from a set of estimates.
pub fn summarize(estimates: &[f64], theta: f64) -> Option<(f64, f64, f64, f64, f64)> {
    let n = estimates.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mean = estimates.iter().sum::<f64>() / nf;
    let ss: f64 = estimates.iter().map(|x| (x - mean).powi(2)).sum();
    let empse = (ss / (nf - 1.0)).sqrt();
    Some((mean, mean - theta, empse / nf.sqrt(), empse, empse / (2.0 * (nf - 1.0)).sqrt()))
}

type CellKey = (u32, Method, EstimandId);

fn collect_cells(table: &ReplicationTable) -> BTreeMap<CellKey, Vec<(usize, f64)>> {
    let mut cells: BTreeMap<CellKey, Vec<(usize, f64)>> = BTreeMap::new();
    for r in &table.rows {
        let cell = cells.entry((r.scenario, r.method, r.estimand)).or_default();
        if let (CellStatus::Ok, Some(v)) = (&r.status, r.estimate) {
            cell.push((r.replication, v));
        }
    }
    // replication order makes the sums independent of the table's row order
    for v in cells.values_mut() {
        v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    cells
}

fn build_row(key: &CellKey, values: &[(usize, f64)], truth: &TrueEffects) -> Result<Option<PerformanceRow>, EvalError> {
    let &(scenario, method, estimand) = key;
    let theta = truth.theta(estimand).ok_or(EvalError::MissingTruth(scenario))?;
    let est: Vec<f64> = values.iter().map(|v| v.1).collect();
    Ok(summarize(&est, theta).map(|(mean, bias, bias_mcse, empse, empse_mcse)| PerformanceRow {
        scenario,
        method,
        estimand,
        theta,
        mean,
        bias,
        bias_mcse,
        empse,
        empse_mcse,
        n_effective: est.len(),
    }))
}

fn truth_for(truths: &[TrueEffects], scenario: u32) -> Result<&TrueEffects, EvalError> {
    truths
        .iter()
        .find(|t| t.scenario == scenario)
        .ok_or(EvalError::MissingTruth(scenario))
}

/// Performance measures for every (scenario, method, estimand) cell.
///
/// Every cell needs at least two successful replications.
pub fn performance(table: &ReplicationTable, truths: &[TrueEffects]) -> Result<PerformanceReport, EvalError> {
    let mut rows = Vec::new();
    for (key, values) in collect_cells(table) {
        let truth = truth_for(truths, key.0)?;
        match build_row(&key, &values, truth)? {
            Some(row) => rows.push(row),
            None => {
                return Err(EvalError::InsufficientReplications {
                    scenario: key.0,
                    method: key.1,
                    comparison: key.2.comparison,
                    horizon: key.2.horizon,
                    available: values.len(),
                })
            }
        }
    }
    Ok(PerformanceReport { rows })
}

/// Like [`performance`], but cells with fewer than two successful
/// replications are returned separately instead of failing the report.
pub fn performance_partial(
    table: &ReplicationTable,
    truths: &[TrueEffects],
) -> Result<(PerformanceReport, Vec<EvalError>), EvalError> {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (key, values) in collect_cells(table) {
        let truth = truth_for(truths, key.0)?;
        match build_row(&key, &values, truth)? {
            Some(row) => rows.push(row),
            None => skipped.push(EvalError::InsufficientReplications {
                scenario: key.0,
                method: key.1,
                comparison: key.2.comparison,
                horizon: key.2.horizon,
                available: values.len(),
            }),
        }
    }
    Ok((PerformanceReport { rows }, skipped))
}

/// Methods ordered from smallest to largest empirical SE for one estimand.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpseRanking {
    pub scenario: u32,
    pub estimand: EstimandId,
    pub order: Vec<(Method, f64)>,
}

/// How the empirical SE of one method moves across horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonTrend {
    pub scenario: u32,
    pub method: Method,
    pub comparison: Comparison,
    /// Horizon-to-horizon steps with a larger empirical SE.
    pub increasing_steps: usize,
    pub steps: usize,
    /// `empse(last) - empse(first)`.
    pub growth: f64,
}

impl HorizonTrend {
    pub fn monotonic(&self) -> bool {
        self.steps > 0 && self.increasing_steps == self.steps
    }

    pub fn mostly_increasing(&self) -> bool {
        2 * self.increasing_steps > self.steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasFlag {
    pub scenario: u32,
    pub method: Method,
    pub estimand: EstimandId,
    /// `|bias| / bias_mcse`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OrderingSummary {
    pub rankings: Vec<EmpseRanking>,
    pub trends: Vec<HorizonTrend>,
    /// Cells with `|bias| > 3 * bias_mcse`.
    pub bias_flags: Vec<BiasFlag>,
}

impl OrderingSummary {
    pub fn trend(&self, scenario: u32, method: Method, comparison: Comparison) -> Option<&HorizonTrend> {
        self.trends
            .iter()
            .find(|t| t.scenario == scenario && t.method == method && t.comparison == comparison)
    }

    pub fn flagged(&self, scenario: u32, method: Method, estimand: EstimandId) -> bool {
        self.bias_flags
            .iter()
            .any(|f| f.scenario == scenario && f.method == method && f.estimand == estimand)
    }
}

/// Empirical-SE rankings, horizon trends and bias flags.
pub fn compare_report(report: &PerformanceReport) -> OrderingSummary {
    let mut by_estimand: BTreeMap<(u32, EstimandId), Vec<(Method, f64)>> = BTreeMap::new();
    let mut by_series: BTreeMap<(u32, Method, Comparison), Vec<(usize, f64)>> = BTreeMap::new();
    let mut out = OrderingSummary::default();
    for r in &report.rows {
        by_estimand.entry((r.scenario, r.estimand)).or_default().push((r.method, r.empse));
        by_series
            .entry((r.scenario, r.method, r.estimand.comparison))
            .or_default()
            .push((r.estimand.horizon, r.empse));
        let ratio = if r.bias_mcse > 0.0 {
            r.bias.abs() / r.bias_mcse
        } else if r.bias == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if ratio > 3.0 {
            out.bias_flags.push(BiasFlag {
                scenario: r.scenario,
                method: r.method,
                estimand: r.estimand,
                ratio,
            });
        }
    }
    for ((scenario, estimand), mut order) in by_estimand {
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out.rankings.push(EmpseRanking {
            scenario,
            estimand,
            order,
        });
    }
    for ((scenario, method, comparison), mut series) in by_series {
        series.sort_by_key(|s| s.0);
        let steps = series.len().saturating_sub(1);
        let increasing_steps = series.windows(2).filter(|w| w[1].1 > w[0].1).count();
        let growth = match (series.first(), series.last()) {
            (Some(a), Some(b)) => b.1 - a.1,
            _ => 0.0,
        };
        out.trends.push(HorizonTrend {
            scenario,
            method,
            comparison,
            increasing_steps,
            steps,
            growth,
        });
    }
    out
}
