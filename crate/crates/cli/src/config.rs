//! Experiment configuration: strict TOML schema, dotted overrides and the
//! per-kind resource defaults.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use hexpert::distrib::ResourceParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

/// Validation failure; always carries the offending key path.
#[derive(Debug, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { path: path.into(), message: message.into() }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Oracle,
    Supervised,
    Density,
    Rl,
    Meta,
    RateUtilitySweep,
}

impl Kind {
    /// Sections a config of this kind may contain.
    fn sections(self) -> &'static [&'static str] {
        match self {
            Kind::Oracle => &["oracle"],
            Kind::Supervised => &["supervised"],
            Kind::Density => &["density"],
            Kind::Rl => &["rl"],
            Kind::Meta => &["meta"],
            Kind::RateUtilitySweep => &["supervised", "sweep"],
        }
    }

    /// `(beta1, beta2, gamma)` used when the file leaves them out.
    fn default_resources(self) -> (f64, f64, f64) {
        match self {
            Kind::Oracle => (5.0, 5.0, 0.99),
            Kind::Supervised | Kind::RateUtilitySweep => (25.0, 10.0, 0.99),
            Kind::Density => (20.0, 1.0, 0.99),
            Kind::Rl => (25.0, 2.5, 0.95),
            Kind::Meta => (25.0, 1.25, 0.99),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = Value::try_from(self).map_err(|_| fmt::Error)?;
        write!(f, "{}", v.as_str().unwrap_or("?"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resources {
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub px: Vec<f64>,
    pub utility: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    /// Explicit problem; a random one of the given shape otherwise.
    pub problem: Option<ProblemSpec>,
    pub states: usize,
    pub actions: usize,
    pub experts: usize,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            problem: None,
            states: 4,
            actions: 3,
            experts: 2,
            tol: hexpert::oracle::DEFAULT_TOL,
            max_sweeps: hexpert::oracle::DEFAULT_MAX_SWEEPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisedSection {
    pub dataset: String,
    pub samples: usize,
    pub noise: f64,
    pub experts: Vec<usize>,
    pub seeds: usize,
    pub folds: usize,
    pub test_fraction: f64,
    pub steps: usize,
    pub batch: usize,
    pub selector_hidden: Vec<usize>,
    pub expert_hidden: Vec<usize>,
    pub selector_lr: f64,
    pub expert_lr: f64,
}

impl Default for SupervisedSection {
    fn default() -> Self {
        SupervisedSection {
            dataset: "circles".into(),
            samples: 1024,
            noise: 0.1,
            experts: vec![1, 2, 4],
            seeds: 5,
            folds: 10,
            test_fraction: 0.2,
            steps: 10_000,
            batch: 32,
            selector_hidden: vec![10, 10],
            expert_hidden: vec![],
            selector_lr: 1e-3,
            expert_lr: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub experts: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { beta1: vec![0.5, 5.0, 50.0], beta2: vec![0.5, 5.0, 50.0], experts: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySection {
    pub experts: Vec<usize>,
    pub samples: usize,
    pub cov_scale: f64,
    pub steps: usize,
    pub batch: usize,
    pub lambda: f64,
    pub prior_lambda: f64,
    pub selector_hidden: Vec<usize>,
    pub selector_lr: f64,
    pub expert_lr: f64,
    pub log_every: usize,
    pub grid_points: usize,
}

impl Default for DensitySection {
    fn default() -> Self {
        DensitySection {
            experts: vec![4, 8],
            samples: 4000,
            cov_scale: 0.15,
            steps: 20_000,
            batch: 32,
            lambda: 25.0,
            prior_lambda: 1.0,
            selector_hidden: vec![10, 10],
            selector_lr: 3e-3,
            expert_lr: 3e-3,
            log_every: 100,
            grid_points: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSection {
    pub experts: usize,
    pub seeds: usize,
    pub iterations: usize,
    pub batch: usize,
    pub max_steps: usize,
    pub eval_episodes: usize,
    pub selector_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub expert_hidden: Vec<usize>,
    pub selector_lr: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub critic_epochs: usize,
    pub huber_delta: f64,
    /// Per-dimension state factors; empty means none.
    pub state_scale: Vec<f64>,
}

impl Default for RlSection {
    fn default() -> Self {
        RlSection {
            experts: 2,
            seeds: 5,
            iterations: 3000,
            batch: 8,
            max_steps: hexpert::tasks::MAX_EPISODE_STEPS,
            eval_episodes: 20,
            selector_hidden: vec![32, 32],
            critic_hidden: vec![32, 32],
            expert_hidden: vec![],
            selector_lr: 1e-4,
            actor_lr: 1e-3,
            critic_lr: 3e-3,
            critic_epochs: 2,
            huber_delta: 1.0,
            state_scale: vec![1.0 / 2.4, 1.0 / 2.0, 1.0 / 0.21, 1.0 / 2.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaSection {
    pub experts: Vec<usize>,
    pub seeds: usize,
    pub episodes: usize,
    pub tasks_per_episode: usize,
    /// Shot counts drawn uniformly per training task.
    pub train_shots: Vec<usize>,
    pub adaptation_steps: usize,
    pub eval_shots: usize,
    pub eval_steps: usize,
    pub eval_tasks: usize,
    pub confidence_shots: Vec<usize>,
    pub grid: usize,
    pub draws: usize,
    pub log_every: usize,
    pub bins: usize,
    pub selector_hidden: Vec<usize>,
    pub expert_hidden: Vec<usize>,
    pub selector_lr: f64,
    pub expert_lr: f64,
    pub adapt_lr: f64,
    pub huber_delta: f64,
}

impl Default for MetaSection {
    fn default() -> Self {
        MetaSection {
            experts: vec![1, 2, 4, 8],
            seeds: 5,
            episodes: 40_000,
            tasks_per_episode: 16,
            train_shots: vec![1, 5, 10],
            adaptation_steps: 1,
            eval_shots: 10,
            eval_steps: 10,
            eval_tasks: 200,
            confidence_shots: vec![1, 5, 10],
            grid: 20,
            draws: 20,
            log_every: 100,
            bins: 20,
            selector_hidden: vec![16, 16],
            expert_hidden: vec![40],
            selector_lr: 1e-3,
            expert_lr: 3e-3,
            adapt_lr: 0.01,
            huber_delta: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; relative paths resolve under the output root.
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub resources: Resources,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub supervised: SupervisedSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub density: DensitySection,
    #[serde(default)]
    pub rl: RlSection,
    #[serde(default)]
    pub meta: MetaSection,
}

/// Parsed config plus the leaf keys that were filled from defaults.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub defaulted: Vec<String>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
    text.parse::<Table>().map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))
}

/// Applies `key.path=value`; the value is read as TOML, falling back to a
/// bare string.
pub fn apply_override(table: &mut Table, arg: &str) -> Result<()> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| ConfigError::new(arg, "override must look like key=value"))?;
    let key = key.trim();
    let value = match format!("v = {}", raw.trim()).parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new(key, "empty key segment"));
    }
    let mut node = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = node.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::new(parts[..=i].join("."), "not a table"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Strict parse and full validation of a raw table.
pub fn load_table(table: Table) -> Result<Loaded> {
    let kind: Kind = match table.get("kind") {
        None => return Err(ConfigError::new("kind", "missing")),
        Some(v) => v
            .clone()
            .try_into()
            .map_err(|_| ConfigError::new("kind", "expected one of oracle, supervised, density, rl, meta, rate-utility-sweep"))?,
    };
    for key in table.keys() {
        let top = ["kind", "name", "seed", "out", "resources"];
        if !top.contains(&key.as_str()) && !kind.sections().contains(&key.as_str()) {
            let all = ["oracle", "supervised", "sweep", "density", "rl", "meta"];
            let msg = if all.contains(&key.as_str()) {
                format!("section does not apply to kind {kind}")
            } else {
                "unknown key".to_string()
            };
            return Err(ConfigError::new(key.clone(), msg));
        }
    }
    let config: ExperimentConfig = Value::Table(table.clone()).try_into().map_err(|e: toml::de::Error| {
        ConfigError::new(error_path(&e, &table), e.message().trim().to_string())
    })?;
    config.validate()?;
    let resolved = Value::try_from(config.resolved_view()).expect("config serializes");
    let mut full = BTreeSet::new();
    leaf_paths(&resolved, "", &mut full);
    let mut given = BTreeSet::new();
    leaf_paths(&Value::Table(table), "", &mut given);
    let defaulted = full
        .into_iter()
        .filter(|p| !given.contains(p) && !given.iter().any(|g| p.starts_with(&format!("{g}."))))
        .collect();
    Ok(Loaded { config, defaulted })
}

pub fn load(path: &Path, overrides: &[String]) -> Result<Loaded> {
    let mut table = read_table(path)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut loaded = load_table(table)?;
    if loaded.config.name.is_none() {
        loaded.config.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(loaded)
}

/// Best-effort key path for a deserialization error: the innermost key whose
/// span covers the error span.
fn error_path(e: &toml::de::Error, table: &Table) -> String {
    let msg = e.message();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(field) = rest.split('`').next() {
            return find_key(table, field, "").unwrap_or_else(|| field.to_string());
        }
    }
    "config".to_string()
}

fn find_key(table: &Table, field: &str, prefix: &str) -> Option<String> {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        if k == field {
            return Some(path);
        }
        if let Value::Table(t) = v {
            if let Some(p) = find_key(t, field, &path) {
                return Some(p);
            }
        }
    }
    None
}

fn leaf_paths(v: &Value, prefix: &str, out: &mut BTreeSet<String>) {
    match v {
        Value::Table(t) => {
            for (k, child) in t {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaf_paths(child, &path, out);
            }
        }
        _ => {
            out.insert(prefix.to_string());
        }
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be a positive finite number, got {v}")))
    }
}

fn nonzero(path: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(ConfigError::new(path, "must be at least 1"))
    }
}

fn nonempty<T>(path: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(ConfigError::new(path, "must not be empty"))
    } else {
        Ok(())
    }
}

fn widths(path: &str, v: &[usize]) -> Result<()> {
    if v.contains(&0) {
        Err(ConfigError::new(path, "hidden widths must be positive"))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("experiment")
    }

    pub fn resource_params(&self) -> ResourceParams {
        let (b1, b2, gamma) = self.kind.default_resources();
        let d = ResourceParams::default();
        ResourceParams {
            beta1: self.resources.beta1.unwrap_or(b1),
            beta2: self.resources.beta2.unwrap_or(b2),
            lambda1: self.resources.lambda1.unwrap_or(d.lambda1),
            lambda2: self.resources.lambda2.unwrap_or(d.lambda2),
            gamma: self.resources.gamma.unwrap_or(gamma),
        }
    }

    /// The config with resources resolved and only the sections of its
    /// kind, as echoed into manifests.
    pub fn resolved_view(&self) -> Table {
        let mut t = Table::new();
        t.insert("kind".into(), Value::try_from(self.kind).expect("kind"));
        t.insert("name".into(), Value::String(self.name().to_string()));
        t.insert("seed".into(), Value::Integer(self.seed as i64));
        let rp = self.resource_params();
        let mut r = Table::new();
        for (k, v) in [("beta1", rp.beta1), ("beta2", rp.beta2), ("lambda1", rp.lambda1), ("lambda2", rp.lambda2), ("gamma", rp.gamma)] {
            r.insert(k.into(), Value::Float(v));
        }
        t.insert("resources".into(), Value::Table(r));
        for s in self.kind.sections() {
            let v = match *s {
                "oracle" => Value::try_from(&self.oracle),
                "supervised" => Value::try_from(&self.supervised),
                "sweep" => Value::try_from(&self.sweep),
                "density" => Value::try_from(&self.density),
                "rl" => Value::try_from(&self.rl),
                _ => Value::try_from(&self.meta),
            };
            t.insert(s.to_string(), v.expect("section serializes"));
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        let rp = self.resource_params();
        rp.validate().map_err(|e| match e {
            hexpert::distrib::DistribError::InvalidParameter { name, reason, .. } => {
                ConfigError::new(format!("resources.{name}"), reason)
            }
            other => ConfigError::new("resources", other.to_string()),
        })?;
        match self.kind {
            Kind::Oracle => self.validate_oracle(),
            Kind::Supervised => self.validate_supervised(),
            Kind::RateUtilitySweep => {
                self.validate_supervised()?;
                let s = &self.sweep;
                nonempty("sweep.beta1", &s.beta1)?;
                nonempty("sweep.beta2", &s.beta2)?;
                s.beta1.iter().try_for_each(|&b| positive("sweep.beta1", b))?;
                s.beta2.iter().try_for_each(|&b| positive("sweep.beta2", b))?;
                nonzero("sweep.experts", s.experts)
            }
            Kind::Density => {
                let d = &self.density;
                nonempty("density.experts", &d.experts)?;
                d.experts.iter().try_for_each(|&m| nonzero("density.experts", m))?;
                nonzero("density.samples", d.samples)?;
                positive("density.cov_scale", d.cov_scale)?;
                nonzero("density.batch", d.batch)?;
                positive("density.lambda", d.lambda)?;
                positive("density.prior_lambda", d.prior_lambda)?;
                widths("density.selector_hidden", &d.selector_hidden)?;
                positive("density.selector_lr", d.selector_lr)?;
                positive("density.expert_lr", d.expert_lr)?;
                nonzero("density.log_every", d.log_every)?;
                if d.grid_points == 1 {
                    return Err(ConfigError::new("density.grid_points", "must be 0 (no grid) or at least 2"));
                }
                Ok(())
            }
            Kind::Rl => {
                let r = &self.rl;
                nonzero("rl.experts", r.experts)?;
                nonzero("rl.seeds", r.seeds)?;
                nonzero("rl.batch", r.batch)?;
                nonzero("rl.max_steps", r.max_steps)?;
                nonzero("rl.eval_episodes", r.eval_episodes)?;
                nonzero("rl.critic_epochs", r.critic_epochs)?;
                widths("rl.selector_hidden", &r.selector_hidden)?;
                widths("rl.critic_hidden", &r.critic_hidden)?;
                widths("rl.expert_hidden", &r.expert_hidden)?;
                positive("rl.selector_lr", r.selector_lr)?;
                positive("rl.actor_lr", r.actor_lr)?;
                positive("rl.critic_lr", r.critic_lr)?;
                positive("rl.huber_delta", r.huber_delta)?;
                if !(r.state_scale.is_empty() || r.state_scale.len() == 4) {
                    return Err(ConfigError::new("rl.state_scale", "must be empty or have 4 entries"));
                }
                r.state_scale.iter().try_for_each(|&v| positive("rl.state_scale", v))
            }
            Kind::Meta => {
                let m = &self.meta;
                nonempty("meta.experts", &m.experts)?;
                m.experts.iter().try_for_each(|&e| nonzero("meta.experts", e))?;
                nonzero("meta.seeds", m.seeds)?;
                nonzero("meta.tasks_per_episode", m.tasks_per_episode)?;
                nonempty("meta.train_shots", &m.train_shots)?;
                m.train_shots.iter().try_for_each(|&k| nonzero("meta.train_shots", k))?;
                nonzero("meta.eval_shots", m.eval_shots)?;
                nonzero("meta.eval_tasks", m.eval_tasks)?;
                m.confidence_shots.iter().try_for_each(|&k| nonzero("meta.confidence_shots", k))?;
                nonzero("meta.grid", m.grid)?;
                nonzero("meta.draws", m.draws)?;
                nonzero("meta.log_every", m.log_every)?;
                nonzero("meta.bins", m.bins)?;
                widths("meta.selector_hidden", &m.selector_hidden)?;
                widths("meta.expert_hidden", &m.expert_hidden)?;
                positive("meta.selector_lr", m.selector_lr)?;
                positive("meta.expert_lr", m.expert_lr)?;
                positive("meta.adapt_lr", m.adapt_lr)?;
                positive("meta.huber_delta", m.huber_delta)
            }
        }
    }

    fn validate_oracle(&self) -> Result<()> {
        let o = &self.oracle;
        positive("oracle.tol", o.tol)?;
        nonzero("oracle.max_sweeps", o.max_sweeps)?;
        nonzero("oracle.experts", o.experts)?;
        match &o.problem {
            Some(p) => {
                nonempty("oracle.problem.px", &p.px)?;
                if p.utility.len() != p.px.len() {
                    return Err(ConfigError::new("oracle.problem.utility", "needs one row per state"));
                }
                let width = p.utility[0].len();
                if width == 0 || p.utility.iter().any(|r| r.len() != width) {
                    return Err(ConfigError::new("oracle.problem.utility", "rows must share a positive length"));
                }
                Ok(())
            }
            None => {
                nonzero("oracle.states", o.states)?;
                nonzero("oracle.actions", o.actions)
            }
        }
    }

    fn validate_supervised(&self) -> Result<()> {
        let s = &self.supervised;
        if !["moons", "circles", "blobs"].contains(&s.dataset.as_str()) {
            return Err(ConfigError::new("supervised.dataset", "expected moons, circles or blobs"));
        }
        nonzero("supervised.samples", s.samples)?;
        if !(s.noise >= 0.0 && s.noise.is_finite()) {
            return Err(ConfigError::new("supervised.noise", "must be a non-negative finite number"));
        }
        if self.kind == Kind::Supervised {
            nonempty("supervised.experts", &s.experts)?;
            s.experts.iter().try_for_each(|&m| nonzero("supervised.experts", m))?;
        }
        nonzero("supervised.seeds", s.seeds)?;
        nonzero("supervised.folds", s.folds)?;
        if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
            return Err(ConfigError::new("supervised.test_fraction", "must lie in (0, 1)"));
        }
        nonzero("supervised.batch", s.batch)?;
        widths("supervised.selector_hidden", &s.selector_hidden)?;
        widths("supervised.expert_hidden", &s.expert_hidden)?;
        positive("supervised.selector_lr", s.selector_lr)?;
        positive("supervised.expert_lr", s.expert_lr)
    }
}

/// Expands `key=[v1, v2, ...]` specs into the cartesian product of plain
/// `key=value` override lists, first key varying slowest.
pub fn expand_grid(params: &[String]) -> Result<Vec<Vec<String>>> {
    let mut cells: Vec<Vec<String>> = vec![Vec::new()];
    for arg in params {
        let (key, raw) = arg
            .split_once('=')
            .ok_or_else(|| ConfigError::new(arg.as_str(), "grid parameter must look like key=[v1, v2]"))?;
        let values = match format!("v = {}", raw.trim()).parse::<Table>().ok().and_then(|mut t| t.remove("v")) {
            Some(Value::Array(a)) if !a.is_empty() => a,
            _ => return Err(ConfigError::new(key.trim(), "grid values must be a non-empty TOML array")),
        };
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut next = cell.clone();
                    next.push(format!("{}={}", key.trim(), v));
                    next
                })
            })
            .collect();
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Loaded> {
        load_table(text.parse::<Table>().unwrap())
    }

    #[test]
    fn minimal_config_reports_defaults() {
        let l = parse("kind = \"oracle\"").unwrap();
        assert_eq!(l.config.resource_params().beta1, 5.0);
        assert!(l.defaulted.contains(&"resources.beta1".to_string()));
        assert!(l.defaulted.contains(&"oracle.tol".to_string()));
        assert!(!l.defaulted.contains(&"kind".to_string()));
        assert!(!l.defaulted.iter().any(|d| d.starts_with("rl.")));
    }

    #[test]
    fn negative_beta_names_the_field() {
        let e = parse("kind = \"meta\"\n[resources]\nbeta1 = -1.0").unwrap_err();
        assert_eq!(e.path, "resources.beta1");
        assert!(e.message.contains("positive"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let e = parse("kind = \"rl\"\n[rl]\nbogus = 1").unwrap_err();
        assert_eq!(e.path, "rl.bogus");
        let e = parse("kind = \"rl\"\nbogus = 1").unwrap_err();
        assert_eq!(e.path, "bogus");
        let e = parse("kind = \"rl\"\n[meta]\nseeds = 1").unwrap_err();
        assert_eq!(e.path, "meta");
        let e = parse("kind = \"nope\"").unwrap_err();
        assert_eq!(e.path, "kind");
    }

    #[test]
    fn overrides_take_precedence_and_parse_toml_values() {
        let mut t: Table = "kind = \"supervised\"\n[supervised]\nsteps = 5".parse().unwrap();
        apply_override(&mut t, "supervised.steps=7").unwrap();
        apply_override(&mut t, "supervised.experts=[1, 3]").unwrap();
        apply_override(&mut t, "resources.beta2=2.5").unwrap();
        apply_override(&mut t, "supervised.dataset=moons").unwrap();
        let c = load_table(t).unwrap().config;
        assert_eq!(c.supervised.steps, 7);
        assert_eq!(c.supervised.experts, vec![1, 3]);
        assert_eq!(c.supervised.dataset, "moons");
        assert_eq!(c.resource_params().beta2, 2.5);
        let mut t: Table = "kind = \"rl\"".parse().unwrap();
        assert!(apply_override(&mut t, "noequals").is_err());
        assert!(apply_override(&mut t, "kind.x=1").is_err());
    }

    #[test]
    fn grid_expansion_is_a_cartesian_product() {
        let cells = expand_grid(&["a.b=[1, 2]".into(), "c=[\"x\", \"y\", \"z\"]".into()]).unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0], vec!["a.b=1".to_string(), "c=\"x\"".to_string()]);
        assert_eq!(cells[5], vec!["a.b=2".to_string(), "c=\"z\"".to_string()]);
        assert!(expand_grid(&["a=1".into()]).is_err());
        assert!(expand_grid(&["a=[]".into()]).is_err());
        assert_eq!(expand_grid(&[]).unwrap(), vec![Vec::<String>::new()]);
    }

    #[test]
    fn section_rules_are_checked() {
        assert_eq!(parse("kind = \"rl\"\n[rl]\nstate_scale = [1.0]").unwrap_err().path, "rl.state_scale");
        assert_eq!(parse("kind = \"meta\"\n[meta]\nexperts = []").unwrap_err().path, "meta.experts");
        assert_eq!(
            parse("kind = \"oracle\"\n[oracle.problem]\npx = [0.5, 0.5]\nutility = [[1.0]]").unwrap_err().path,
            "oracle.problem.utility"
        );
        assert!(parse("kind = \"rate-utility-sweep\"\n[sweep]\nbeta1 = [1.0]\n[supervised]\nseeds = 1").is_ok());
    }
}
