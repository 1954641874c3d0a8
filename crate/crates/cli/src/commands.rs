use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use gmethods::estimators::{bootstrap_se, run_method, EstimateSet, EstimatorConfig, SharedFits, WeightOptions};
use gmethods::eval::{
    performance_partial, run_study_with_progress, write_estimates, write_raw, write_report, write_svg_panels,
    write_truth, CellStatus, EvalError, StudyConfig,
};
use gmethods::longdata::{load_long_csv, write_long_csv, DataError, LongitudinalDataset};
use gmethods::oracle::{published_truth, true_effects_for, TrueEffects};
use gmethods::rng::SeedSpec;
use gmethods::simgen::{generate, scenario_spec, SimError};
use gmethods::estimators::prepare_weights;
use thiserror::Error;

use crate::config::{Command, RunConfig, TruthSource};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Estimator(#[from] gmethods::estimators::EstimatorError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CommandError {
    pub fn kind(&self) -> &'static str {
        match self {
            CommandError::Data(_) => "data",
            CommandError::Eval(_) => "eval",
            CommandError::Sim(_) => "simulation",
            CommandError::Estimator(_) => "estimator",
            CommandError::Io { .. } => "io",
            CommandError::Usage(_) => "usage",
        }
    }
}

/// Cell-level problems; each line is tab separated `key=value` fields.
#[derive(Debug, Default)]
pub struct Outcome {
    pub errors: Vec<String>,
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CommandError> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|source| CommandError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
            let f = File::create(p).map_err(|source| CommandError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(cfg: &RunConfig) -> Result<LongitudinalDataset, CommandError> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| CommandError::Usage(format!("`{}` needs --data", cfg.command.name())))?;
    let f = File::open(path).map_err(|source| CommandError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(load_long_csv(io::BufReader::new(f))?)
}

fn estimator_config(cfg: &RunConfig) -> EstimatorConfig {
    let mut e = EstimatorConfig::default();
    e.msm.weights = WeightOptions {
        truncate: cfg.truncate,
        ..WeightOptions::default()
    };
    e.gformula.mc_size = cfg.mc_size;
    e.gformula.seed = SeedSpec::new(cfg.master_seed, 0);
    e
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    match cfg.command {
        Command::Simulate => simulate(cfg),
        Command::Truth => truth(cfg),
        Command::Estimate => estimate(cfg),
        Command::Weights => weights(cfg),
        Command::Study => study(cfg, false),
        Command::Reproduce => study(cfg, true),
    }
}

fn simulate(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let [scenario] = cfg.scenarios[..] else {
        return Err(CommandError::Usage("`simulate` takes exactly one scenario".into()));
    };
    let ds = generate(&scenario_spec(scenario)?, cfg.n, SeedSpec::new(cfg.master_seed, cfg.replication));
    write_long_csv(&ds, open_out(cfg.out.as_deref())?)?;
    Ok(Outcome::default())
}

fn truths(cfg: &RunConfig) -> Result<Vec<TrueEffects>, CommandError> {
    cfg.scenarios
        .iter()
        .map(|&s| match cfg.truth {
            TruthSource::Published => Ok(published_truth(s)?),
            TruthSource::Simulated => {
                eprintln!("truth: scenario {s}, {} individuals per arm", cfg.rct_n);
                Ok(true_effects_for(s, cfg.rct_n, SeedSpec::new(cfg.master_seed, 0))?)
            }
        })
        .collect()
}

fn truth(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    write_truth(&truths(cfg)?, open_out(cfg.out.as_deref())?)?;
    Ok(Outcome::default())
}

fn estimate(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let ds = load(cfg)?;
    let est_cfg = estimator_config(cfg);
    let mut shared = SharedFits::default();
    let mut sets: Vec<EstimateSet> = Vec::new();
    let mut outcome = Outcome::default();
    for &method in &cfg.methods {
        let mut set = match run_method(&ds, method, &est_cfg, &mut shared) {
            Ok(s) => s,
            Err(e) => {
                outcome.errors.push(format!("error\tkind=estimator\tmethod={method}\tmessage={e}"));
                continue;
            }
        };
        for note in &set.notes {
            eprintln!("{method}: {note}");
        }
        if let Some(b) = cfg.bootstrap {
            let summary = bootstrap_se(&ds, method, &est_cfg, b, SeedSpec::new(cfg.master_seed, 0))?;
            for (r, e) in &summary.failures {
                outcome
                    .errors
                    .push(format!("error\tkind=bootstrap\tmethod={method}\tresample={r}\tmessage={e}"));
            }
            set.se = Some(summary.se);
        }
        sets.push(set);
    }
    write_estimates(&sets, open_out(cfg.out.as_deref())?)?;
    Ok(outcome)
}

fn weights(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let ds = load(cfg)?;
    let opts = WeightOptions {
        truncate: cfg.truncate,
        ..WeightOptions::default()
    };
    let prepared = prepare_weights(&ds, 1, false, &opts)?;
    let w = &prepared.weights;
    let io_err = |source| CommandError::Io {
        path: cfg.out.clone().unwrap_or_else(|| "<stdout>".into()),
        source,
    };
    let mut out = open_out(cfg.out.as_deref())?;
    writeln!(out, "id,time,sw,cw,weight").map_err(io_err)?;
    for (k, r) in w.rows.iter().enumerate() {
        writeln!(out, "{},{},{},{},{}", ds.id(r.individual), r.time, w.sw[k], w.cw[k], w.weight[k]).map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    eprintln!("time\tcount\tmean\tmax\tess");
    for d in w.diagnostics() {
        eprintln!("{}\t{}\t{:.4}\t{:.4}\t{:.1}", d.time, d.count, d.mean_w, d.max_w, d.ess);
    }
    Ok(Outcome::default())
}

fn create(path: &Path) -> Result<BufWriter<File>, CommandError> {
    File::create(path).map(BufWriter::new).map_err(|source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn study(cfg: &RunConfig, figures: bool) -> Result<Outcome, CommandError> {
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("study-out"));
    std::fs::create_dir_all(&out_dir).map_err(|source| CommandError::Io {
        path: out_dir.clone(),
        source,
    })?;
    let study_cfg = StudyConfig {
        scenarios: cfg.scenarios.clone(),
        methods: cfg.methods.clone(),
        n_sim: cfg.n_sim,
        n: cfg.n,
        master_seed: cfg.master_seed,
        estimators: estimator_config(cfg),
    };
    let total = cfg.scenarios.len() * cfg.n_sim;
    let done = AtomicUsize::new(0);
    let table = run_study_with_progress(&study_cfg, |_, _| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        if k % 10 == 0 || k == total {
            eprintln!("study: {k}/{total} replications");
        }
    })?;
    let truth = truths(cfg)?;
    let (report, skipped) = performance_partial(&table, &truth)?;

    write_raw(&table, create(&out_dir.join("raw.csv"))?)?;
    write_report(&report, create(&out_dir.join("report.csv"))?)?;
    write_truth(&truth, create(&out_dir.join("truth.csv"))?)?;
    let svg_dir = cfg.svg.clone().or_else(|| figures.then(|| out_dir.join("svg")));
    if let Some(dir) = svg_dir {
        let written = write_svg_panels(&report, &dir)?;
        eprintln!("wrote {} panels to {}", written.len(), dir.display());
    }

    let mut outcome = Outcome::default();
    let mut seen = std::collections::BTreeSet::new();
    for r in table.failures() {
        if let CellStatus::Failed(msg) = &r.status {
            // one line per failed method run, not per estimand
            if seen.insert((r.scenario, r.replication, r.method)) {
                outcome.errors.push(format!(
                    "error\tkind=cell\tscenario={}\treplication={}\tmethod={}\tmessage={msg}",
                    r.scenario, r.replication, r.method
                ));
            }
        }
    }
    for s in skipped {
        outcome.errors.push(format!("error\tkind=insufficient\tmessage={s}"));
    }
    eprintln!("wrote raw.csv, report.csv and truth.csv to {}", out_dir.display());
    Ok(outcome)
}
