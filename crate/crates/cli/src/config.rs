//! Run configuration: built-in defaults, then an optional TOML file, then
//! command-line flags.
//!
//! The file has one table per subcommand. Keys are the long flag names with
//! `-` written as `_`:
//!
//! ```toml
//! [study]
//! scenario = "1..9"        # integer, list of integers, or "1,3,5" / "1..9"
//! n = 10000
//! nsim = 200
//! seed = 20240101
//! method = ["iptw", "gest"]
//! mc_size = 10000
//! truncate = [10.0, 90.0]
//! out = "study-out"
//! svg = "study-out/svg"
//! rct_n = 1000000
//! truth = "simulated"      # or "published"
//! ```

use std::path::PathBuf;
use std::str::FromStr;

use gmethods::estimators::Method;
use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key `{key}`{}", valid_suffix(.valid))]
    UnknownKey { key: String, valid: Vec<String> },
    #[error("`{key}` has the wrong type: {message}")]
    TypeMismatch { key: String, message: String },
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
}

fn valid_suffix(valid: &[String]) -> String {
    if valid.is_empty() {
        String::new()
    } else {
        format!("; valid: {}", valid.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Truth,
    Estimate,
    Weights,
    Study,
    Reproduce,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Simulate,
        Command::Truth,
        Command::Estimate,
        Command::Weights,
        Command::Study,
        Command::Reproduce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Truth => "truth",
            Command::Estimate => "estimate",
            Command::Weights => "weights",
            Command::Study => "study",
            Command::Reproduce => "reproduce",
        }
    }

    /// Keys accepted in this command's section.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Command::Simulate => &["scenario", "n", "seed", "replication", "out"],
            Command::Truth => &["scenario", "rct_n", "seed", "out", "truth"],
            Command::Estimate => &["method", "data", "bootstrap", "mc_size", "seed", "truncate", "out"],
            Command::Weights => &["data", "truncate", "out"],
            Command::Study | Command::Reproduce => &[
                "scenario", "n", "nsim", "seed", "method", "mc_size", "truncate", "out", "svg", "rct_n", "truth",
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthSource {
    /// Large simulated trials at `rct_n`.
    Simulated,
    /// The two-decimal published tables.
    Published,
}

impl FromStr for TruthSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simulated" => Ok(TruthSource::Simulated),
            "published" => Ok(TruthSource::Published),
            _ => Err(format!("expected `simulated` or `published`, got `{s}`")),
        }
    }
}

/// Values that may come from the file or from flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub scenario: Option<Vec<u32>>,
    pub n: Option<usize>,
    pub nsim: Option<usize>,
    pub seed: Option<u64>,
    pub replication: Option<u64>,
    pub method: Option<Vec<Method>>,
    pub mc_size: Option<usize>,
    pub bootstrap: Option<usize>,
    pub truncate: Option<(f64, f64)>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub rct_n: Option<usize>,
    pub data: Option<PathBuf>,
    pub truth: Option<TruthSource>,
}

impl Overrides {
    /// Fields set in `other` replace those here.
    pub fn merge(mut self, other: Overrides) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(scenario, n, nsim, seed, replication, method, mc_size, bootstrap, truncate, out, svg, rct_n, data, truth);
        self
    }
}

/// Fully resolved settings for one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub scenarios: Vec<u32>,
    pub n: usize,
    pub n_sim: usize,
    pub master_seed: u64,
    pub replication: u64,
    pub methods: Vec<Method>,
    pub mc_size: usize,
    pub bootstrap: Option<usize>,
    pub truncate: Option<(f64, f64)>,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub rct_n: usize,
    pub data: Option<PathBuf>,
    pub truth: TruthSource,
}

pub const DEFAULT_SEED: u64 = 20_240_101;

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            scenarios: match command {
                Command::Simulate => vec![1],
                _ => (1..=9).collect(),
            },
            n: 10_000,
            n_sim: 200,
            master_seed: DEFAULT_SEED,
            replication: 0,
            methods: match command {
                Command::Estimate => vec![Method::Iptw, Method::Censor, Method::SeqTrial, Method::GFormula, Method::GEst],
                _ => Method::ALL.to_vec(),
            },
            mc_size: 10_000,
            bootstrap: None,
            truncate: None,
            out: None,
            svg: None,
            rct_n: 1_000_000,
            data: None,
            truth: TruthSource::Simulated,
        }
    }

    pub fn resolve(command: Command, file: Overrides, flags: Overrides) -> Result<Self, ConfigError> {
        let o = file.merge(flags);
        let mut c = Self::defaults(command);
        if let Some(v) = o.scenario {
            c.scenarios = v;
        }
        macro_rules! set {
            ($($src:ident => $dst:ident),*) => { $( if let Some(v) = o.$src { c.$dst = v; } )* };
        }
        set!(n => n, nsim => n_sim, seed => master_seed, replication => replication, method => methods,
             mc_size => mc_size, rct_n => rct_n, truth => truth);
        c.bootstrap = o.bootstrap;
        c.truncate = o.truncate;
        c.out = o.out;
        c.svg = o.svg;
        c.data = o.data;
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, message: String| {
            Err(ConfigError::InvalidValue {
                key: key.into(),
                message,
            })
        };
        if self.scenarios.is_empty() || self.scenarios.iter().any(|s| !(1..=9).contains(s)) {
            return bad("scenario", format!("{:?}; scenarios are 1..9", self.scenarios));
        }
        if self.n < 10 {
            return bad("n", format!("{} is too small", self.n));
        }
        if self.n_sim == 0 {
            return bad("nsim", "must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("method", "no methods".into());
        }
        if self.mc_size < 1000 && self.methods.contains(&Method::GFormula) {
            return bad("mc_size", format!("{} is below the minimum of 1000", self.mc_size));
        }
        if let Some(b) = self.bootstrap {
            if b < 50 {
                return bad("bootstrap", format!("{b} resamples; at least 50 are needed"));
            }
        }
        if let Some((lo, hi)) = self.truncate {
            if !(0.0 <= lo && lo < hi && hi <= 100.0) {
                return bad("truncate", format!("({lo}, {hi}) are not percentiles lo < hi"));
            }
        }
        if self.rct_n < 2 {
            return bad("rct_n", "must be at least 2".into());
        }
        Ok(())
    }
}

/// `"3"`, `"1,4,7"`, `"1..9"` or a mix such as `"1..3,7"`.
pub fn parse_scenarios(s: &str) -> Result<Vec<u32>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u32 = a.trim().parse().map_err(|_| format!("bad range `{part}`"))?;
            let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad range `{part}`"))?;
            if a > b {
                return Err(format!("empty range `{part}`"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad scenario `{part}`"))?);
        }
    }
    if out.is_empty() {
        return Err("no scenarios given".into());
    }
    out.dedup();
    Ok(out)
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>, ConfigError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|m| {
            m.parse::<Method>().map_err(|_| ConfigError::UnknownKey {
                key: m.to_string(),
                valid: Method::ALL.iter().map(|m| m.id().to_string()).collect(),
            })
        })
        .collect()
}

pub fn parse_truncate(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let lo = a.trim().parse().map_err(|_| format!("bad percentile `{a}`"))?;
    let hi = b.trim().parse().map_err(|_| format!("bad percentile `{b}`"))?;
    Ok((lo, hi))
}

fn typed<T: DeserializeOwned>(key: &str, v: &toml::Value) -> Result<T, ConfigError> {
    v.clone().try_into().map_err(|e: toml::de::Error| ConfigError::TypeMismatch {
        key: key.into(),
        message: e.message().to_string(),
    })
}

fn string_or_list(key: &str, v: &toml::Value) -> Result<String, ConfigError> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Array(items) => items
            .iter()
            .map(|x| match x {
                toml::Value::String(s) => Ok(s.clone()),
                toml::Value::Integer(i) => Ok(i.to_string()),
                other => Err(ConfigError::TypeMismatch {
                    key: key.into(),
                    message: format!("unexpected {} in list", other.type_str()),
                }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|v| v.join(",")),
        other => Err(ConfigError::TypeMismatch {
            key: key.into(),
            message: format!("expected a string, integer or list, found {}", other.type_str()),
        }),
    }
}

/// Parses the section for `command` out of a config file's text. Other
/// sections are checked for unknown keys too.
pub fn parse_file(text: &str, command: Command) -> Result<Overrides, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut result = Overrides::default();
    for (section, body) in &table {
        let cmd = Command::ALL
            .into_iter()
            .find(|c| c.name() == section)
            .ok_or_else(|| ConfigError::UnknownKey {
                key: section.clone(),
                valid: Command::ALL.iter().map(|c| c.name().to_string()).collect(),
            })?;
        let body = body.as_table().ok_or_else(|| ConfigError::TypeMismatch {
            key: section.clone(),
            message: "expected a table".into(),
        })?;
        for key in body.keys() {
            if !cmd.keys().contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    key: format!("{section}.{key}"),
                    valid: cmd.keys().iter().map(|k| k.to_string()).collect(),
                });
            }
        }
        if cmd == command {
            result = section_overrides(body)?;
        }
    }
    Ok(result)
}

fn section_overrides(body: &toml::Table) -> Result<Overrides, ConfigError> {
    let mut o = Overrides::default();
    for (key, v) in body {
        let k = key.as_str();
        let invalid = |message: String| ConfigError::InvalidValue {
            key: k.into(),
            message,
        };
        match k {
            "scenario" => o.scenario = Some(parse_scenarios(&string_or_list(k, v)?).map_err(invalid)?),
            "n" => o.n = Some(typed(k, v)?),
            "nsim" => o.nsim = Some(typed(k, v)?),
            "seed" => o.seed = Some(typed(k, v)?),
            "replication" => o.replication = Some(typed(k, v)?),
            "method" => o.method = Some(parse_methods(&string_or_list(k, v)?)?),
            "mc_size" => o.mc_size = Some(typed(k, v)?),
            "bootstrap" => o.bootstrap = Some(typed(k, v)?),
            "truncate" => {
                let pair: [f64; 2] = typed(k, v)?;
                o.truncate = Some((pair[0], pair[1]));
            }
            "out" => o.out = Some(typed::<String>(k, v)?.into()),
            "svg" => o.svg = Some(typed::<String>(k, v)?.into()),
            "rct_n" => o.rct_n = Some(typed(k, v)?),
            "data" => o.data = Some(typed::<String>(k, v)?.into()),
            "truth" => o.truth = Some(typed::<String>(k, v)?.parse().map_err(invalid)?),
            _ => unreachable!("keys are checked against the command's list"),
        }
    }
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = parse_file("[study]\nn = 10000\nnsim = 50\n", Command::Study).unwrap();
        let flags = Overrides {
            n: Some(5000),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(Command::Study, file, flags).unwrap();
        assert_eq!((c.n, c.n_sim, c.master_seed), (5000, 50, DEFAULT_SEED));
    }

    #[test]
    fn study_defaults_are_desk_scale() {
        let c = RunConfig::resolve(Command::Study, Overrides::default(), Overrides::default()).unwrap();
        assert_eq!(c.n_sim, 200);
        assert_eq!(c.n, 10_000);
        assert_eq!(c.rct_n, 1_000_000);
        assert_eq!(c.scenarios, (1..=9).collect::<Vec<_>>());
        assert_eq!(c.truncate, None);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_file("[study]\nsample = 3\n", Command::Study).unwrap_err();
        assert!(matches!(&err, ConfigError::UnknownKey { key, .. } if key == "study.sample"));
        let err = parse_file("[plots]\n", Command::Study).unwrap_err();
        assert!(err.to_string().contains("plots") && err.to_string().contains("reproduce"));
        let err = parse_methods("iptw,bogus").unwrap_err();
        assert!(err.to_string().contains("bogus") && err.to_string().contains("gformula"));
    }

    #[test]
    fn type_mismatch_names_key() {
        let err = parse_file("[study]\nn = \"many\"\n", Command::Study).unwrap_err();
        assert!(matches!(&err, ConfigError::TypeMismatch { key, .. } if key == "n"), "{err}");
    }

    #[test]
    fn scenario_forms() {
        assert_eq!(parse_scenarios("1..3,7").unwrap(), vec![1, 2, 3, 7]);
        assert_eq!(parse_scenarios("4").unwrap(), vec![4]);
        let f = parse_file("[truth]\nscenario = [2, 5]\n", Command::Truth).unwrap();
        assert_eq!(f.scenario, Some(vec![2, 5]));
        assert!(parse_scenarios("3..1").is_err());
        assert!(RunConfig::resolve(
            Command::Truth,
            Overrides {
                scenario: Some(vec![10]),
                ..Overrides::default()
            },
            Overrides::default()
        )
        .is_err());
    }
}
