//! Experiment configuration: `key = value` text with `[section]` headers or
//! dotted keys, and the same keys set from command-line flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::algorithms::{Init, Method};
use crate::error::{Error, Result};
use crate::objective::{Family, DEFAULT_ETA, DEFAULT_RHO};
use crate::shuffling::SamplingMode;
use crate::stepsize::{Regime, ScheduleSpec, DEFAULT_PATIENCE, DEFAULT_THETA};
use crate::topology::GraphSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Quadratic,
    Logistic,
    NcvxLogistic,
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "quadratic" => Ok(ObjectiveKind::Quadratic),
            "logistic" => Ok(ObjectiveKind::Logistic),
            "ncvx-logistic" => Ok(ObjectiveKind::NcvxLogistic),
            other => Err(Error::Config(format!(
                "unknown objective {other:?} (quadratic | logistic | ncvx-logistic)"
            ))),
        }
    }
}

impl std::fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ObjectiveKind::Quadratic => "quadratic",
            ObjectiveKind::Logistic => "logistic",
            ObjectiveKind::NcvxLogistic => "ncvx-logistic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveBlock {
    pub kind: ObjectiveKind,
    pub rho: f64,
    pub eta: f64,
    pub dim: usize,
    pub m: usize,
    /// Quadratic: spread of the agent targets. Logistic: label-sorted
    /// partition when positive, shuffled otherwise.
    pub hetero: f64,
    pub data_seed: u64,
    pub cifar10: Option<PathBuf>,
    pub condition: f64,
    pub noise: f64,
    pub component_spread: f64,
}

impl ObjectiveBlock {
    pub fn family(&self) -> Family {
        match self.kind {
            ObjectiveKind::Quadratic => Family::Quadratic,
            ObjectiveKind::Logistic => Family::Logistic { rho: self.rho },
            ObjectiveKind::NcvxLogistic => Family::NonconvexLogistic { eta: self.eta },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyBlock {
    pub graph: GraphSpec,
    pub agents: usize,
    /// Laziness `τ`; `W ← τ I + (1 − τ) W` when set.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleBlock {
    pub stepsize: ScheduleSpec,
    pub regime: Regime,
    pub theta: f64,
    pub patience: usize,
    pub worst_case_constants: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objective: ObjectiveBlock,
    pub topology: TopologyBlock,
    pub methods: Vec<Method>,
    pub sampling: Option<SamplingMode>,
    pub init: Init,
    pub strict_alg2: bool,
    pub schedule: ScheduleBlock,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub inner_metrics: bool,
    pub timing: bool,
    /// Output directory; not part of the hash.
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            objective: ObjectiveBlock {
                kind: ObjectiveKind::Quadratic,
                rho: DEFAULT_RHO,
                eta: DEFAULT_ETA,
                dim: 5,
                m: 10,
                hetero: 1.0,
                data_seed: 0,
                cifar10: None,
                condition: 10.0,
                noise: 0.5,
                component_spread: 0.3,
            },
            topology: TopologyBlock {
                graph: GraphSpec::Ring,
                agents: 16,
                tau: None,
            },
            methods: vec![Method::Gtrr],
            sampling: None,
            init: Init::Same,
            strict_alg2: false,
            schedule: ScheduleBlock {
                stepsize: ScheduleSpec::Auto,
                regime: Regime::Ncvx,
                theta: DEFAULT_THETA,
                patience: DEFAULT_PATIENCE,
                worst_case_constants: false,
            },
            epochs: 100,
            seeds: vec![0],
            inner_metrics: false,
            timing: false,
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {value:?} for {key}"))),
    }
}

/// `0,1,2` or `0..10` (half-open).
pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let v = value.trim();
    if let Some((lo, hi)) = v.split_once("..") {
        let lo: u64 = parse("seeds", lo)?;
        let hi: u64 = parse("seeds", hi)?;
        if hi <= lo {
            return Err(Error::Config(format!("empty seed range {v:?}")));
        }
        return Ok((lo..hi).collect());
    }
    let seeds: Vec<u64> = v.split(',').map(|s| parse("seeds", s)).collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

/// Every key accepted by [`ExperimentConfig::set`].
pub const KEYS: &[&str] = &[
    "objective.kind",
    "objective.rho",
    "objective.eta",
    "objective.dim",
    "objective.m",
    "objective.hetero",
    "objective.data_seed",
    "objective.cifar10",
    "objective.condition",
    "objective.noise",
    "objective.component_spread",
    "topology.graph",
    "topology.agents",
    "topology.tau",
    "run.methods",
    "run.sampling",
    "run.init",
    "run.strict_alg2",
    "run.epochs",
    "run.seeds",
    "run.inner_metrics",
    "run.timing",
    "schedule.stepsize",
    "schedule.regime",
    "schedule.theta",
    "schedule.patience",
    "schedule.worst_case_constants",
    "output.dir",
];

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "objective.kind" => self.objective.kind = v.parse()?,
            "objective.rho" => self.objective.rho = parse(key, v)?,
            "objective.eta" => self.objective.eta = parse(key, v)?,
            "objective.dim" => self.objective.dim = parse(key, v)?,
            "objective.m" => self.objective.m = parse(key, v)?,
            "objective.hetero" => self.objective.hetero = parse(key, v)?,
            "objective.data_seed" => self.objective.data_seed = parse(key, v)?,
            "objective.cifar10" => self.objective.cifar10 = (!v.is_empty()).then(|| PathBuf::from(v)),
            "objective.condition" => self.objective.condition = parse(key, v)?,
            "objective.noise" => self.objective.noise = parse(key, v)?,
            "objective.component_spread" => self.objective.component_spread = parse(key, v)?,
            "topology.graph" => self.topology.graph = v.parse()?,
            "topology.agents" => self.topology.agents = parse(key, v)?,
            "topology.tau" => self.topology.tau = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "run.methods" => {
                self.methods = v.split(',').map(str::parse).collect::<Result<_>>()?;
                if self.methods.is_empty() {
                    return Err(Error::Config("method list is empty".into()));
                }
            }
            "run.sampling" => self.sampling = if v.is_empty() { None } else { Some(v.parse()?) },
            "run.init" => self.init = v.parse()?,
            "run.strict_alg2" => self.strict_alg2 = parse_bool(key, v)?,
            "run.epochs" => self.epochs = parse(key, v)?,
            "run.seeds" => self.seeds = parse_seeds(v)?,
            "run.inner_metrics" => self.inner_metrics = parse_bool(key, v)?,
            "run.timing" => self.timing = parse_bool(key, v)?,
            "schedule.stepsize" => self.schedule.stepsize = v.parse()?,
            "schedule.regime" => self.schedule.regime = v.parse()?,
            "schedule.theta" => self.schedule.theta = parse(key, v)?,
            "schedule.patience" => self.schedule.patience = parse(key, v)?,
            "schedule.worst_case_constants" => self.schedule.worst_case_constants = parse_bool(key, v)?,
            "output.dir" => self.out = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a config file's contents on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let k = k.trim();
            let key = if section.is_empty() || k.contains('.') {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            self.set(&key, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Canonical `key = value` rendering of everything that affects results.
    pub fn canonical(&self) -> String {
        let o = &self.objective;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("objective.kind", o.kind.to_string());
        put("objective.rho", format!("{:e}", o.rho));
        put("objective.eta", format!("{:e}", o.eta));
        put("objective.dim", o.dim.to_string());
        put("objective.m", o.m.to_string());
        put("objective.hetero", format!("{:e}", o.hetero));
        put("objective.data_seed", o.data_seed.to_string());
        put(
            "objective.cifar10",
            o.cifar10.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        put("objective.condition", format!("{:e}", o.condition));
        put("objective.noise", format!("{:e}", o.noise));
        put("objective.component_spread", format!("{:e}", o.component_spread));
        put("topology.graph", self.topology.graph.to_string());
        put("topology.agents", self.topology.agents.to_string());
        put("topology.tau", self.topology.tau.map(|t| format!("{t:e}")).unwrap_or_default());
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        put("run.methods", methods.join(","));
        put("run.sampling", self.sampling.map(|m| m.to_string()).unwrap_or_default());
        put("run.init", self.init.to_string());
        put("run.strict_alg2", self.strict_alg2.to_string());
        put("run.epochs", self.epochs.to_string());
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        put("run.seeds", seeds.join(","));
        put("run.inner_metrics", self.inner_metrics.to_string());
        put("run.timing", self.timing.to_string());
        put("schedule.stepsize", self.schedule.stepsize.to_string());
        put("schedule.regime", self.schedule.regime.to_string());
        put("schedule.theta", format!("{:e}", self.schedule.theta));
        put("schedule.patience", self.schedule.patience.to_string());
        put("schedule.worst_case_constants", self.schedule.worst_case_constants.to_string());
        s
    }

    /// First 16 hex digits of the SHA-256 of [`ExperimentConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_dotted_keys() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(
            "# sweep\n[objective]\nkind = logistic\nm = 20 # per agent\n\n[run]\nmethods = gtrr,dsgt\nseeds = 0..3\ntopology.graph = grid:4x4\n",
        )
        .unwrap();
        assert_eq!(cfg.objective.kind, ObjectiveKind::Logistic);
        assert_eq!(cfg.objective.m, 20);
        assert_eq!(cfg.methods, vec![Method::Gtrr, Method::Dsgt]);
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        assert_eq!(cfg.topology.graph, GraphSpec::Grid { rows: 4, cols: 4 });
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("schedule.stepsize", "plateau:1/50,1/250").unwrap();
        cfg.set("topology.tau", "0.5").unwrap();
        cfg.set("run.sampling", "once").unwrap();
        let mut back = ExperimentConfig::default();
        back.apply_text(&cfg.canonical()).unwrap();
        back.out = cfg.out.clone();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.epochs += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn every_key_is_settable() {
        let canonical = ExperimentConfig::default().canonical();
        for key in KEYS.iter().filter(|k| **k != "output.dir") {
            assert!(canonical.contains(&format!("{key} =")), "{key}");
        }
    }

    #[test]
    fn bad_input_is_a_config_error() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_text("nonsense").is_err());
        assert!(cfg.set("run.nothing", "1").is_err());
        assert!(cfg.set("run.epochs", "-3").is_err());
        assert!(cfg.set("run.methods", "gtrr,sgd").is_err());
        assert!(parse_seeds("5..5").is_err());
    }
}
