//! CSV formats for replication tables, performance reports, truth tables
//! and estimate sets. Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::estimators::{EstimateSet, Method};
use crate::longdata::{Comparison, EstimandId};
use crate::oracle::{TrueEffects, TruthEntry};

use super::{CellStatus, EvalError, PerformanceReport, PerformanceRow, ReplicationRow, ReplicationTable};

#[derive(Serialize, Deserialize)]
struct RawRecord {
    scenario: u32,
    replication: usize,
    method: String,
    comparison: String,
    horizon: usize,
    estimate: Option<f64>,
    status: String,
}

#[derive(Serialize, Deserialize)]
struct ReportRecord {
    scenario: u32,
    method: String,
    comparison: String,
    horizon: usize,
    theta: f64,
    mean: f64,
    bias: f64,
    bias_mcse: f64,
    empse: f64,
    empse_mcse: f64,
    n_effective: usize,
}

#[derive(Serialize, Deserialize)]
struct TruthRecord {
    scenario: u32,
    comparison: String,
    horizon: usize,
    theta: f64,
    mc_se: Option<f64>,
    paired_se: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct EstimateRecord {
    method: String,
    comparison: String,
    horizon: usize,
    estimate: Option<f64>,
    se: Option<f64>,
}

fn parse_method(s: &str, line: usize) -> Result<Method, EvalError> {
    s.parse().map_err(|message| EvalError::Parse { line, message })
}

fn parse_estimand(comparison: &str, horizon: usize, line: usize) -> Result<EstimandId, EvalError> {
    let c = Comparison::parse(comparison).ok_or_else(|| EvalError::Parse {
        line,
        message: format!("unknown comparison `{comparison}`"),
    })?;
    Ok(EstimandId::new(c, horizon))
}

fn records<R: Read, T: for<'de> Deserialize<'de>>(source: R) -> impl Iterator<Item = Result<(usize, T), EvalError>> {
    let mut reader = csv::Reader::from_reader(source);
    let out: Vec<_> = reader
        .deserialize::<T>()
        .enumerate()
        .map(|(k, r)| r.map(|v| (k + 2, v)).map_err(EvalError::from))
        .collect();
    out.into_iter()
}

fn write_all<W: Write, T: Serialize>(sink: W, headers: &[&str], rows: impl Iterator<Item = T>) -> Result<(), EvalError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(headers)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_raw<W: Write>(table: &ReplicationTable, sink: W) -> Result<(), EvalError> {
    let mut sorted = table.clone();
    sorted.sort();
    write_all(
        sink,
        &["scenario", "replication", "method", "comparison", "horizon", "estimate", "status"],
        sorted.rows.iter().map(|r| RawRecord {
            scenario: r.scenario,
            replication: r.replication,
            method: r.method.id().into(),
            comparison: r.estimand.comparison.label().into(),
            horizon: r.estimand.horizon,
            estimate: r.estimate,
            status: r.status.to_string(),
        }),
    )
}

pub fn read_raw<R: Read>(source: R) -> Result<ReplicationTable, EvalError> {
    let mut rows = Vec::new();
    for rec in records::<R, RawRecord>(source) {
        let (line, r) = rec?;
        rows.push(ReplicationRow {
            scenario: r.scenario,
            replication: r.replication,
            method: parse_method(&r.method, line)?,
            estimand: parse_estimand(&r.comparison, r.horizon, line)?,
            estimate: r.estimate,
            status: CellStatus::parse(&r.status),
        });
    }
    Ok(ReplicationTable { rows })
}

pub fn write_report<W: Write>(report: &PerformanceReport, sink: W) -> Result<(), EvalError> {
    let mut rows: Vec<&PerformanceRow> = report.rows.iter().collect();
    rows.sort_by(|a, b| (a.scenario, a.method, a.estimand).cmp(&(b.scenario, b.method, b.estimand)));
    write_all(
        sink,
        &[
            "scenario", "method", "comparison", "horizon", "theta", "mean", "bias", "bias_mcse", "empse",
            "empse_mcse", "n_effective",
        ],
        rows.into_iter().map(|r| ReportRecord {
            scenario: r.scenario,
            method: r.method.id().into(),
            comparison: r.estimand.comparison.label().into(),
            horizon: r.estimand.horizon,
            theta: r.theta,
            mean: r.mean,
            bias: r.bias,
            bias_mcse: r.bias_mcse,
            empse: r.empse,
            empse_mcse: r.empse_mcse,
            n_effective: r.n_effective,
        }),
    )
}

pub fn read_report<R: Read>(source: R) -> Result<PerformanceReport, EvalError> {
    let mut rows = Vec::new();
    for rec in records::<R, ReportRecord>(source) {
        let (line, r) = rec?;
        rows.push(PerformanceRow {
            scenario: r.scenario,
            method: parse_method(&r.method, line)?,
            estimand: parse_estimand(&r.comparison, r.horizon, line)?,
            theta: r.theta,
            mean: r.mean,
            bias: r.bias,
            bias_mcse: r.bias_mcse,
            empse: r.empse,
            empse_mcse: r.empse_mcse,
            n_effective: r.n_effective,
        });
    }
    Ok(PerformanceReport { rows })
}

pub fn write_truth<W: Write>(truths: &[TrueEffects], sink: W) -> Result<(), EvalError> {
    let mut sorted: Vec<&TrueEffects> = truths.iter().collect();
    sorted.sort_by_key(|t| t.scenario);
    write_all(
        sink,
        &["scenario", "comparison", "horizon", "theta", "mc_se", "paired_se"],
        sorted.into_iter().flat_map(|t| {
            t.entries.iter().map(|(id, e)| TruthRecord {
                scenario: t.scenario,
                comparison: id.comparison.label().into(),
                horizon: id.horizon,
                theta: e.theta,
                mc_se: e.mc_se,
                paired_se: e.paired_se,
            })
        }),
    )
}

/// Reads truth tables; arm means and the trial size are not stored.
pub fn read_truth<R: Read>(source: R) -> Result<Vec<TrueEffects>, EvalError> {
    let mut by_scenario: BTreeMap<u32, BTreeMap<EstimandId, TruthEntry>> = BTreeMap::new();
    for rec in records::<R, TruthRecord>(source) {
        let (line, r) = rec?;
        by_scenario.entry(r.scenario).or_default().insert(
            parse_estimand(&r.comparison, r.horizon, line)?,
            TruthEntry {
                theta: r.theta,
                mc_se: r.mc_se,
                paired_se: r.paired_se,
            },
        );
    }
    Ok(by_scenario
        .into_iter()
        .map(|(scenario, entries)| TrueEffects {
            scenario,
            rct_n: None,
            entries,
            arm_means: None,
        })
        .collect())
}

pub fn write_estimates<W: Write>(sets: &[EstimateSet], sink: W) -> Result<(), EvalError> {
    let with_se = sets.iter().any(|s| s.se.is_some());
    let mut headers = vec!["method", "comparison", "horizon", "estimate"];
    if with_se {
        headers.push("se");
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(&headers)?;
    for set in sets {
        for (id, v) in &set.estimates {
            let mut rec = vec![
                set.method.id().to_string(),
                id.comparison.label().to_string(),
                id.horizon.to_string(),
                v.map_or(String::new(), |x| x.to_string()),
            ];
            if with_se {
                rec.push(
                    set.se
                        .as_ref()
                        .and_then(|m| m.get(id))
                        .map_or(String::new(), |x| x.to_string()),
                );
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads an estimates file back into one set per method.
pub fn read_estimates<R: Read>(source: R) -> Result<Vec<EstimateSet>, EvalError> {
    let mut sets: BTreeMap<Method, EstimateSet> = BTreeMap::new();
    for rec in records::<R, EstimateRecord>(source) {
        let (line, r) = rec?;
        let method = parse_method(&r.method, line)?;
        let id = parse_estimand(&r.comparison, r.horizon, line)?;
        let set = sets.entry(method).or_insert_with(|| EstimateSet {
            method,
            estimates: BTreeMap::new(),
            se: None,
            coefficients: Vec::new(),
            notes: Vec::new(),
        });
        set.estimates.insert(id, r.estimate);
        if let Some(se) = r.se {
            set.se.get_or_insert_with(BTreeMap::new).insert(id, se);
        }
    }
    Ok(sets.into_values().collect())
}
