//! G-estimation of a linear structural nested mean model for the
//! combination blips, by recursive regression on blipped-down outcomes.

use crate::glm::{BlockId, BlockRhs, BlockedLeastSquares, DesignMatrix};
use crate::longdata::{ComboCode, LongitudinalDataset};
use crate::weights::{censoring_weights, CensoringMode, PropensityScores};

use super::{EstimateSet, EstimatorError, Method, StrategyValues};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlipStructure {
    /// `phi[c][lag]`: a separate effect of each combination at every lag.
    #[default]
    LagSpecific,
    /// One effect per combination, the same at every lag.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnmmSpec {
    pub blip: BlipStructure,
    /// Largest absolute change in the blip parameters accepted as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SnmmSpec {
    fn default() -> Self {
        Self {
            blip: BlipStructure::LagSpecific,
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

/// Global column layout: blip parameters first, then one nuisance set per lag.
struct Layout {
    times: usize,
    width: usize,
    blip: BlipStructure,
    names: Vec<String>,
    lag_start: Vec<usize>,
}

impl Layout {
    fn new(times: usize, width: usize, blip: BlipStructure) -> Self {
        let mut names = Vec::new();
        for c in 1..=3 {
            let label = ComboCode::ALL[c].label();
            match blip {
                BlipStructure::LagSpecific => {
                    names.extend((1..=times).map(|lag| format!("phi_{label}_lag{lag}")))
                }
                BlipStructure::Constant => names.push(format!("phi_{label}")),
            }
        }
        let mut lag_start = Vec::with_capacity(times);
        for lag in 1..=times {
            lag_start.push(names.len());
            names.push(format!("lag{lag}:(intercept)"));
            for m in 1..=times - lag {
                for c in 1..=3 {
                    names.push(format!("lag{lag}:hist{m}_{}", ComboCode::ALL[c].label()));
                }
            }
            names.push(format!("lag{lag}:l"));
            names.extend((2..=width).map(|w| format!("lag{lag}:l{w}")));
            names.push(format!("lag{lag}:y"));
            names.extend((1..=3).map(|c| format!("lag{lag}:ps{c}")));
        }
        Self {
            times,
            width,
            blip,
            names,
            lag_start,
        }
    }

    fn phi(&self, c: usize, lag: usize) -> usize {
        match self.blip {
            BlipStructure::LagSpecific => (c - 1) * self.times + lag - 1,
            BlipStructure::Constant => c - 1,
        }
    }

    /// Global index of every local column of block `t` when used at `lag`.
    fn columns(&self, t: usize, lag: usize) -> Vec<usize> {
        let base = self.lag_start[lag - 1];
        let mut cols = vec![base];
        cols.extend((1..=3).map(|c| self.phi(c, lag)));
        let mut next = base + 1;
        cols.extend(next..next + 3 * t);
        next += 3 * (self.times - lag);
        cols.extend(next..next + self.width + 4);
        cols
    }
}

struct Block {
    t: usize,
    id: BlockId,
    individuals: Vec<usize>,
    weight: Vec<f64>,
}

fn block_design(
    ds: &LongitudinalDataset,
    den: &PropensityScores,
    t: usize,
    individuals: &[usize],
    weight: Vec<f64>,
) -> Result<DesignMatrix, EstimatorError> {
    let width = ds.covariate_width();
    let mut names = vec!["(intercept)".to_string()];
    names.extend((1..=3).map(|c| format!("z_{c}")));
    for m in 1..=t {
        names.extend((1..=3).map(|c| format!("hist{m}_{c}")));
    }
    names.extend((1..=width).map(|w| format!("l{w}")));
    names.push("y".into());
    names.extend((1..=3).map(|c| format!("ps{c}")));
    let mut rows = Vec::with_capacity(individuals.len() * names.len());
    for &i in individuals {
        let z = ds.z_row(i);
        rows.push(1.0);
        let ind = |v: ComboCode, c: usize| f64::from(u8::from(v.index() == c));
        rows.extend((1..=3).map(|c| ind(z[t], c)));
        for m in 1..=t {
            rows.extend((1..=3).map(|c| ind(z[t - m], c)));
        }
        rows.extend_from_slice(ds.l_vec(i, t));
        rows.push(ds.y(i, t));
        let k = den.position(0, i, t).ok_or_else(|| {
            EstimatorError::InvalidSpec(format!("no propensity row for individual {i} at time {t}"))
        })?;
        rows.extend_from_slice(&den.probs[k][1..]);
    }
    Ok(DesignMatrix::from_row_major(names, &rows, Some(weight))?)
}

/// G-estimation with the propensity model fitted internally.
pub fn gestimation(ds: &LongitudinalDataset, snmm: &SnmmSpec) -> Result<EstimateSet, EstimatorError> {
    let rows = crate::weights::stacked_person_times(ds, 1);
    let den = crate::weights::fit_treatment_model(
        ds,
        &rows,
        crate::weights::Role::Denominator,
        1,
        &Default::default(),
    )?;
    gestimation_with(ds, snmm, &den)
}

/// G-estimation using the given trial-0 denominator propensity scores.
pub fn gestimation_with(
    ds: &LongitudinalDataset,
    snmm: &SnmmSpec,
    den: &PropensityScores,
) -> Result<EstimateSet, EstimatorError> {
    let times = ds.times();
    let layout = Layout::new(times, ds.covariate_width(), snmm.blip);
    let forward = if ds.has_censoring() {
        Some(censoring_weights(ds, &[], CensoringMode::Forward, false)?)
    } else {
        None
    };
    let forward_weight = |i: usize, t: usize| -> f64 {
        forward.as_ref().map_or(1.0, |f| {
            den.position(0, i, t).map_or(0.0, |k| f.weight[k])
        })
    };

    let mut solver = BlockedLeastSquares::new(layout.names.clone());
    let mut blocks = Vec::with_capacity(times);
    for t in 0..times {
        let individuals: Vec<usize> = (0..ds.n_individuals())
            .filter(|&i| ds.observed_times(i) > t)
            .collect();
        if individuals.is_empty() {
            continue;
        }
        let weight: Vec<f64> = individuals.iter().map(|&i| forward_weight(i, t)).collect();
        let x = block_design(ds, den, t, &individuals, weight.clone())?;
        blocks.push(Block {
            t,
            id: solver.add_block(&x),
            individuals,
            weight,
        });
    }

    let phi_len = match snmm.blip {
        BlipStructure::LagSpecific => 3 * times,
        BlipStructure::Constant => 3,
    };
    let mut phi: Vec<Option<f64>> = vec![None; phi_len];
    let columns: Vec<Vec<Vec<usize>>> = blocks
        .iter()
        .map(|b| (1..=times).map(|lag| layout.columns(b.t, lag)).collect())
        .collect();

    // blipped-down outcome H_{s,t} for each block row and lag s - t
    let blipped = |phi: &[Option<f64>], b: &Block, lag: usize| -> Vec<f64> {
        let s = b.t + lag;
        b.individuals
            .iter()
            .zip(&b.weight)
            .map(|(&i, &w)| {
                if w == 0.0 || ds.last_outcome(i) < s {
                    return 0.0;
                }
                let z = ds.z_row(i);
                let removed: f64 = (b.t + 1..s)
                    .map(|u| match z[u].index() {
                        0 => 0.0,
                        c => phi[layout.phi(c, s - u)].unwrap_or(0.0),
                    })
                    .sum();
                ds.y(i, s) - removed
            })
            .collect()
    };

    let fit = |phi: &[Option<f64>], max_lag: usize| -> Result<Vec<Option<f64>>, EstimatorError> {
        let mut ys = Vec::new();
        let mut parts = Vec::new();
        for (bi, b) in blocks.iter().enumerate() {
            for lag in 1..=max_lag.min(times - b.t) {
                ys.push((bi, lag, blipped(phi, b, lag)));
            }
        }
        for (bi, lag, y) in &ys {
            parts.push(BlockRhs {
                block: blocks[*bi].id,
                columns: &columns[*bi][*lag - 1],
                y,
            });
        }
        let coef = solver.solve(&parts)?;
        Ok(coef[..phi_len].to_vec())
    };
    let change = |a: &[Option<f64>], b: &[Option<f64>]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x.unwrap_or(0.0) - y.unwrap_or(0.0)).abs())
            .fold(0.0, f64::max)
    };

    for lag in 1..=times {
        phi = fit(&phi, lag)?;
    }
    let mut iterations = 0;
    loop {
        let next = fit(&phi, times)?;
        let delta = change(&next, &phi);
        phi = next;
        iterations += 1;
        if delta <= snmm.tolerance {
            break;
        }
        if iterations >= snmm.max_iterations {
            return Err(EstimatorError::NoConvergence {
                iterations,
                change: delta,
            });
        }
    }

    let values: StrategyValues = std::array::from_fn(|c| {
        (1..=times)
            .map(|h| match (c, snmm.blip) {
                (0, _) => Some(0.0),
                (_, BlipStructure::LagSpecific) => {
                    (1..=h).map(|lag| phi[layout.phi(c, lag)]).sum::<Option<f64>>()
                }
                (_, BlipStructure::Constant) => phi[layout.phi(c, 1)].map(|p| p * h as f64),
            })
            .collect()
    });
    let coefficients = layout.names[..phi_len]
        .iter()
        .zip(&phi)
        .filter_map(|(n, v)| v.map(|v| (n.clone(), v)))
        .collect();
    let method = match snmm.blip {
        BlipStructure::LagSpecific => Method::GEst,
        BlipStructure::Constant => Method::GEstConst,
    };
    let mut est = EstimateSet::from_values(method, &values, coefficients)?;
    if iterations > 1 {
        est.notes.push(format!("blip parameters converged after {iterations} full refits"));
    }
    Ok(est)
}
