//! Data-generating processes for the nine simulation scenarios.
//!
//! Per individual the draws are, in order: `L_0`, `Y_0`, then for each
//! treatment time `t`: `L_t` (for `t > 0`), a uniform for `A_t`, a uniform for
//! `B_t`, and the noise of `Y_{t+1}`. Every draw is always taken, so a
//! counterfactual run with fixed treatments consumes exactly the same random
//! numbers as the observational run for that individual.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::longdata::{ComboCode, LongitudinalDataset, PanelParts};
use crate::rng::{Domain, SeedSpec, StreamKey};

pub use crate::glm::expit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown scenario {0}; valid ids are 1..=9")]
    UnknownScenario(u32),
    #[error("strategy covers {found} times, scenario needs {expected}")]
    StrategyLength { expected: usize, found: usize },
}

/// Which prior treatment years reduce the effect of `A_t` in the decay outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayCount {
    /// `sum_{j<t} A_j`: years already spent on A before `t`.
    PriorYears,
    /// `sum_{j=1..t} A_j`, the index range exactly as printed.
    PrintedIndex,
}

/// Extra outcome terms beyond the linear predictor
/// `d0 + d1 L_t + d2 A_t + d3 B_t + d4 Y_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeVariant {
    Linear,
    /// Linear with the A coefficient forced to zero.
    NoA,
    /// Adds `coef * A_t * B_t`.
    Interaction { coef: f64 },
    /// Adds `sum_k lags[k-1] * A_{t-k}` for `k = 1..=4`.
    History { lags: [f64; 4] },
    /// Multiplies the A coefficient by `1 - rate * count`.
    Decay { rate: f64, count: DecayCount },
}

/// Full generative specification of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: u32,
    /// Intercept and coefficients on `L_t, A_{t-1}, B_{t-1}, Y_{t-1}`.
    pub treat_a: [f64; 5],
    pub treat_b: [f64; 5],
    /// Coefficients on `L_{t-1}, A_{t-1}, B_{t-1}, Y_{t-1}`.
    pub confounder: [f64; 4],
    /// Intercept and coefficients on `L_t, A_t, B_t, Y_t`.
    pub outcome: [f64; 5],
    pub variant: OutcomeVariant,
    /// Baseline outcome mean is `baseline_y_on_l * L_0`.
    pub baseline_y_on_l: f64,
    /// Number of treatment times.
    pub times: usize,
}

const BASE_A: [f64; 5] = [0.0, 0.3, 1.8, 0.0, 0.12];
const BASE_B: [f64; 5] = [0.0, 0.3, 0.0, 1.8, 0.12];
const BASE_Y: [f64; 5] = [0.0, 0.05, 1.0, 0.5, 0.1];

impl ScenarioSpec {
    fn scenario1() -> Self {
        Self {
            id: 1,
            treat_a: BASE_A,
            treat_b: BASE_B,
            confounder: [0.2, 0.2, 0.2, 0.01],
            outcome: BASE_Y,
            variant: OutcomeVariant::Linear,
            baseline_y_on_l: 0.05,
            times: 5,
        }
    }

    /// Scenario 7 with the coefficient on `Y_t` printed in its outcome
    /// formula (0.01) instead of the 0.1 that its truth table implies.
    pub fn scenario7_as_printed() -> Self {
        let mut s = scenario_spec(7).expect("scenario 7 exists");
        s.outcome[4] = 0.01;
        s
    }

    /// Mean of `Y_{t+1}` given the current state and the A history
    /// `a_hist[0..=t]`.
    pub fn outcome_mean(&self, l: f64, a_hist: &[u8], b: u8, y: f64) -> f64 {
        let t = a_hist.len() - 1;
        let a = f64::from(a_hist[t]);
        let d = &self.outcome;
        let mut mean = d[0] + d[1] * l + d[3] * f64::from(b) + d[4] * y;
        match self.variant {
            OutcomeVariant::Linear => mean += d[2] * a,
            OutcomeVariant::NoA => {}
            OutcomeVariant::Interaction { coef } => mean += d[2] * a + coef * a * f64::from(b),
            OutcomeVariant::History { lags } => {
                mean += d[2] * a;
                for (k, c) in lags.iter().enumerate() {
                    if let Some(j) = t.checked_sub(k + 1) {
                        mean += c * f64::from(a_hist[j]);
                    }
                }
            }
            OutcomeVariant::Decay { rate, count } => {
                let years: u32 = match count {
                    DecayCount::PriorYears => a_hist[..t].iter().map(|&v| u32::from(v)).sum(),
                    DecayCount::PrintedIndex => a_hist[1..=t].iter().map(|&v| u32::from(v)).sum(),
                };
                mean += d[2] * (1.0 - rate * f64::from(years)) * a;
            }
        }
        mean
    }
}

/// Coefficients of scenarios 1 to 9.
pub fn scenario_spec(id: u32) -> Result<ScenarioSpec, SimError> {
    let mut s = ScenarioSpec::scenario1();
    s.id = id;
    match id {
        1 => {}
        2 => s.treat_a[0] = -2.3,
        3 => s.outcome[1] = 0.3,
        4 => s.treat_a[1] = 1.0,
        5 => {
            s.treat_a[3] = -0.2;
            s.treat_b[2] = -0.2;
        }
        6 => {
            s.outcome[2] = 0.0;
            s.variant = OutcomeVariant::NoA;
        }
        7 => s.variant = OutcomeVariant::Interaction { coef: 0.25 },
        8 => {
            s.variant = OutcomeVariant::History {
                lags: [0.2, 0.1, 0.05, 0.001],
            }
        }
        9 => {
            s.variant = OutcomeVariant::Decay {
                rate: 0.2,
                count: DecayCount::PriorYears,
            }
        }
        _ => return Err(SimError::UnknownScenario(id)),
    }
    Ok(s)
}

/// Treatment assignment used while simulating one individual.
#[derive(Debug, Clone, Copy)]
pub enum Assignment<'a> {
    Natural,
    Fixed(&'a [ComboCode]),
}

/// One simulated individual.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub a: Vec<u8>,
    pub b: Vec<u8>,
    pub l: Vec<f64>,
    /// `Y_0..=Y_T`.
    pub y: Vec<f64>,
}

fn bernoulli(u: f64, eta: f64) -> u8 {
    u8::from(u < expit(eta))
}

/// Simulates one individual from `rng`.
pub fn simulate_individual(
    spec: &ScenarioSpec,
    rng: &mut ChaCha8Rng,
    assignment: Assignment<'_>,
) -> Trajectory {
    let times = spec.times;
    let mut out = Trajectory {
        a: Vec::with_capacity(times),
        b: Vec::with_capacity(times),
        l: Vec::with_capacity(times),
        y: Vec::with_capacity(times + 1),
    };
    let l0: f64 = rng.sample(StandardNormal);
    let e0: f64 = rng.sample(StandardNormal);
    out.l.push(l0);
    out.y.push(spec.baseline_y_on_l * l0 + e0);
    let (ca, cb, cl) = (&spec.treat_a, &spec.treat_b, &spec.confounder);
    for t in 0..times {
        if t > 0 {
            let e: f64 = rng.sample(StandardNormal);
            let mean = cl[0] * out.l[t - 1]
                + cl[1] * f64::from(out.a[t - 1])
                + cl[2] * f64::from(out.b[t - 1])
                + cl[3] * out.y[t - 1];
            out.l.push(mean + e);
        }
        let ua: f64 = rng.random();
        let ub: f64 = rng.random();
        let l = out.l[t];
        let (a, b) = match assignment {
            Assignment::Fixed(z) => (u8::from(z[t].a()), u8::from(z[t].b())),
            Assignment::Natural if t == 0 => {
                (bernoulli(ua, ca[0] + ca[1] * l), bernoulli(ub, cb[0] + cb[1] * l))
            }
            Assignment::Natural => {
                let (ap, bp, yp) = (
                    f64::from(out.a[t - 1]),
                    f64::from(out.b[t - 1]),
                    out.y[t - 1],
                );
                (
                    bernoulli(ua, ca[0] + ca[1] * l + ca[2] * ap + ca[3] * bp + ca[4] * yp),
                    bernoulli(ub, cb[0] + cb[1] * l + cb[2] * ap + cb[3] * bp + cb[4] * yp),
                )
            }
        };
        out.a.push(a);
        out.b.push(b);
        let e: f64 = rng.sample(StandardNormal);
        let mean = spec.outcome_mean(l, &out.a, b, out.y[t]);
        out.y.push(mean + e);
    }
    out
}

fn assemble(spec: &ScenarioSpec, rows: Vec<Trajectory>) -> LongitudinalDataset {
    let n = rows.len();
    let times = spec.times;
    let mut parts = PanelParts {
        ids: (1..=n).map(|i| i.to_string()).collect(),
        times,
        a: Vec::with_capacity(n * times),
        b: Vec::with_capacity(n * times),
        l: Vec::with_capacity(n * times),
        y: Vec::with_capacity(n * (times + 1)),
        last: None,
        covariate_width: 1,
    };
    for r in rows {
        parts.a.extend(r.a);
        parts.b.extend(r.b);
        parts.l.extend(r.l);
        parts.y.extend(r.y);
    }
    LongitudinalDataset::from_parts(parts).expect("generated panel is well formed")
}

fn run(
    spec: &ScenarioSpec,
    n: usize,
    key: StreamKey,
    assignment: Assignment<'_>,
) -> LongitudinalDataset {
    let rows: Vec<Trajectory> = (0..n)
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| simulate_individual(spec, &mut key.rng(i as u64), assignment))
        .collect();
    assemble(spec, rows)
}

/// Observational dataset for one replication.
pub fn generate(spec: &ScenarioSpec, n: usize, seed: SeedSpec) -> LongitudinalDataset {
    run(
        spec,
        n,
        StreamKey::new(seed, Domain::Data, u64::from(spec.id)),
        Assignment::Natural,
    )
}

/// Same draws as [`generate`] with treatments replaced by `strategy`.
pub fn generate_counterfactual(
    spec: &ScenarioSpec,
    strategy: &[ComboCode],
    n: usize,
    seed: SeedSpec,
) -> Result<LongitudinalDataset, SimError> {
    if strategy.len() != spec.times {
        return Err(SimError::StrategyLength {
            expected: spec.times,
            found: strategy.len(),
        });
    }
    Ok(run(
        spec,
        n,
        StreamKey::new(seed, Domain::Data, u64::from(spec.id)),
        Assignment::Fixed(strategy),
    ))
}

/// Sustained strategy `combo` at every treatment time.
pub fn sustained(combo: ComboCode, times: usize) -> Vec<ComboCode> {
    vec![combo; times]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_values() {
        assert_eq!(expit(0.0), 0.5);
        for x in [-3.0, -0.2, 0.7, 5.0] {
            assert!((expit(x) - (1.0 - expit(-x))).abs() < 1e-15);
        }
        assert!((expit(1.8) - 0.858_148_935_099_512_1).abs() < 1e-15);
    }

    #[test]
    fn scenario_coefficients() {
        let s2 = scenario_spec(2).unwrap();
        let s1 = scenario_spec(1).unwrap();
        assert_eq!(s2.treat_a[0], -2.3);
        assert_eq!(s2.treat_a[1..], s1.treat_a[1..]);
        assert_eq!(s2.treat_b, s1.treat_b);
        assert_eq!(s2.outcome, s1.outcome);
        assert_eq!(scenario_spec(4).unwrap().treat_a[1], 1.0);
        let s5 = scenario_spec(5).unwrap();
        assert_eq!((s5.treat_a[3], s5.treat_b[2]), (-0.2, -0.2));
        assert_eq!(scenario_spec(3).unwrap().outcome[1], 0.3);
        assert_eq!(ScenarioSpec::scenario7_as_printed().outcome[4], 0.01);
        assert_eq!(scenario_spec(10), Err(SimError::UnknownScenario(10)));
        for id in 6..=9 {
            let s = scenario_spec(id).unwrap();
            assert_eq!((s.treat_a, s.treat_b, s.confounder), (s1.treat_a, s1.treat_b, s1.confounder));
        }
    }

    #[test]
    fn decay_counts() {
        let s = scenario_spec(9).unwrap();
        // sustained A from 0: both readings agree
        let hist = [1u8, 1, 1];
        let prior = s.outcome_mean(0.0, &hist, 0, 0.0);
        let mut printed = s.clone();
        printed.variant = OutcomeVariant::Decay {
            rate: 0.2,
            count: DecayCount::PrintedIndex,
        };
        assert!((prior - 0.6).abs() < 1e-12);
        assert!((printed.outcome_mean(0.0, &hist, 0, 0.0) - 0.6).abs() < 1e-12);
        // initiation at t=2: prior-years reading gives the full effect
        let late = [0u8, 0, 1];
        assert!((s.outcome_mean(0.0, &late, 0, 0.0) - 1.0).abs() < 1e-12);
        assert!((printed.outcome_mean(0.0, &late, 0, 0.0) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn history_lags() {
        let s = scenario_spec(8).unwrap();
        let m = s.outcome_mean(0.0, &[1, 1, 1, 1, 1], 0, 0.0);
        assert!((m - (1.0 + 0.2 + 0.1 + 0.05 + 0.001)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_generation() {
        let s = scenario_spec(1).unwrap();
        let a = generate(&s, 300, SeedSpec::new(9, 2));
        let b = generate(&s, 300, SeedSpec::new(9, 2));
        assert_eq!(a, b);
        let c = generate(&s, 300, SeedSpec::new(9, 3));
        assert_ne!(a, c);
    }

    #[test]
    fn counterfactual_shares_noise() {
        let s = scenario_spec(1).unwrap();
        let seed = SeedSpec::new(1, 0);
        let obs = generate(&s, 50, seed);
        let cf = generate_counterfactual(&s, &sustained(ComboCode::NONE, 5), 50, seed).unwrap();
        for i in 0..50 {
            assert_eq!(obs.l(i, 0), cf.l(i, 0));
            assert_eq!(obs.y(i, 0), cf.y(i, 0));
            assert!(cf.z_row(i).iter().all(|&z| z == ComboCode::NONE));
        }
        assert!(generate_counterfactual(&s, &sustained(ComboCode::NONE, 4), 5, seed).is_err());
    }
}
