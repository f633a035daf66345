//! Experiment configuration: a flat `key = value` text format with `#`
//! comments and dotted key namespaces.
//!
//! Every value has a documented default; a minimal config only names the
//! metrics to sweep. Unknown keys are hard errors so typos never silently
//! fall back to defaults. The fully resolved configuration is echoed into
//! the output directory so every result set records what produced it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::{BregmanGenerator, MetricKind};
use crate::sim::ScenarioName;
use crate::staleness::EpochRule;

/// Which classifier the clients train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Logistic,
    Mlp,
}

impl ModelKind {
    pub fn token(&self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ModelKind::Logistic),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::Config(format!(
                "unknown model kind {other:?}; valid kinds are logistic, mlp"
            ))),
        }
    }
}

/// Where the training and test data come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Gaussian blobs generated per seed.
    Synthetic {
        n_per_class: usize,
        d: usize,
        n_classes: usize,
        spread: f64,
        test_per_class: usize,
    },
    /// User-supplied IDX image/label files.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

/// A fully resolved experiment: the cross product of metrics and scenarios,
/// repeated over consecutive seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub metrics: Vec<MetricKind>,
    pub scenarios: Vec<ScenarioName>,
    /// Repetitions per (metric, scenario) cell; run k uses root_seed + k.
    pub n_seeds: u32,
    pub root_seed: u64,
    /// Virtual seconds per run.
    pub budget: f64,
    pub eval_interval: f64,
    pub n_clients: usize,
    pub out_dir: PathBuf,
    pub model_kind: ModelKind,
    pub hidden: usize,
    pub local_lr: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub generator: BregmanGenerator,
    pub epoch_rule: EpochRule,
    pub data: DataSource,
    pub alpha: f64,
    pub min_per_client: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            metrics: Vec::new(),
            scenarios: ScenarioName::ALL.to_vec(),
            n_seeds: 10,
            root_seed: 42,
            budget: 300.0,
            eval_interval: 5.0,
            n_clients: 20,
            out_dir: PathBuf::from("out"),
            model_kind: ModelKind::Logistic,
            hidden: 16,
            local_lr: 0.05,
            batch_size: 32,
            lambda: 0.5,
            epsilon: 1e-8,
            delta: 1e-12,
            generator: BregmanGenerator::SquaredNorm,
            epoch_rule: EpochRule::Fixed(3),
            data: DataSource::Synthetic {
                n_per_class: 50,
                d: 8,
                n_classes: 4,
                spread: 1.0,
                test_per_class: 25,
            },
            alpha: 0.5,
            min_per_client: 2,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "metrics",
    "scenarios",
    "seeds",
    "seed",
    "budget",
    "eval_interval",
    "n_clients",
    "out",
    "model.kind",
    "model.hidden",
    "model.lr",
    "model.batch_size",
    "staleness.metric",
    "staleness.lambda",
    "staleness.epsilon",
    "staleness.delta",
    "staleness.generator",
    "staleness.epoch_rule",
    "staleness.k",
    "staleness.k_ref",
    "staleness.k_min",
    "staleness.k_max",
    "data.kind",
    "data.n_per_class",
    "data.d",
    "data.n_classes",
    "data.spread",
    "data.test_per_class",
    "data.train_images",
    "data.train_labels",
    "data.test_images",
    "data.test_labels",
    "partition.alpha",
    "partition.min_per_client",
];

struct RawConfig {
    pairs: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {line_no}: expected key = value, got {line:?}"))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {line_no}: empty key")));
            }
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "line {line_no}: unknown config key {key:?}"
                )));
            }
            if let Some((_, first)) = pairs.get(&key) {
                return Err(Error::Config(format!(
                    "line {line_no}: key {key:?} already set on line {first}"
                )));
            }
            pairs.insert(key, (value, line_no));
        }
        Ok(Self { pairs })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.pairs.get(key).map(|(v, _)| v.as_str())
    }

    fn parse_as<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("key {key:?}: expected {what}, got {raw:?}"))
            }),
        }
    }

    fn typed<T: FromStr<Err = Error>>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Config(format!("key {key:?}: {e}"))),
        }
    }
}

fn parse_list<T: FromStr<Err = Error>>(raw: &str, what: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for item in raw.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return Err(Error::Config(format!("empty entry in {what} list {raw:?}")));
        }
        out.push(item.parse::<T>()?);
    }
    Ok(out)
}

/// Reads and fully validates a config file, resolving every default.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Parses config text; see [`parse_config`].
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw = RawConfig::parse(text)?;
    let mut cfg = ExperimentConfig::default();

    match (raw.get("metrics"), raw.get("staleness.metric")) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "set either \"metrics\" or \"staleness.metric\", not both".into(),
            ));
        }
        (Some(list), None) => cfg.metrics = parse_list(list, "metric")?,
        (None, Some(single)) => cfg.metrics = vec![single.parse()?],
        (None, None) => {
            return Err(Error::Config(
                "config must name at least one metric via \"metrics\"".into(),
            ));
        }
    }

    if let Some(list) = raw.get("scenarios") {
        cfg.scenarios = parse_list(list, "scenario")?;
    }
    if let Some(v) = raw.parse_as::<u32>("seeds", "a positive integer")? {
        cfg.n_seeds = v;
    }
    if let Some(v) = raw.parse_as::<u64>("seed", "an unsigned integer")? {
        cfg.root_seed = v;
    }
    if let Some(v) = raw.parse_as::<f64>("budget", "a number of virtual seconds")? {
        cfg.budget = v;
    }
    if let Some(v) = raw.parse_as::<f64>("eval_interval", "a number of virtual seconds")? {
        cfg.eval_interval = v;
    }
    if let Some(v) = raw.parse_as::<usize>("n_clients", "a positive integer")? {
        cfg.n_clients = v;
    }
    if let Some(v) = raw.get("out") {
        cfg.out_dir = PathBuf::from(v);
    }
    if let Some(v) = raw.typed::<ModelKind>("model.kind")? {
        cfg.model_kind = v;
    }
    if let Some(v) = raw.parse_as::<usize>("model.hidden", "a positive integer")? {
        if cfg.model_kind != ModelKind::Mlp {
            return Err(Error::Config(
                "model.hidden is only valid with model.kind = mlp".into(),
            ));
        }
        cfg.hidden = v;
    }
    if let Some(v) = raw.parse_as::<f64>("model.lr", "a non-negative number")? {
        cfg.local_lr = v;
    }
    if let Some(v) = raw.parse_as::<usize>("model.batch_size", "a positive integer")? {
        cfg.batch_size = v;
    }
    if let Some(v) = raw.parse_as::<f64>("staleness.lambda", "a positive number")? {
        cfg.lambda = v;
    }
    if let Some(v) = raw.parse_as::<f64>("staleness.epsilon", "a positive number")? {
        cfg.epsilon = v;
    }
    if let Some(v) = raw.parse_as::<f64>("staleness.delta", "a positive number")? {
        cfg.delta = v;
    }
    if let Some(v) = raw.typed::<BregmanGenerator>("staleness.generator")? {
        cfg.generator = v;
    }

    cfg.epoch_rule = parse_epoch_rule(&raw)?;
    cfg.data = parse_data_source(&raw)?;

    if let Some(v) = raw.parse_as::<f64>("partition.alpha", "a positive number")? {
        cfg.alpha = v;
    }
    if let Some(v) = raw.parse_as::<usize>("partition.min_per_client", "a positive integer")? {
        cfg.min_per_client = v;
    }

    cfg.validate()?;
    Ok(cfg)
}

fn parse_epoch_rule(raw: &RawConfig) -> Result<EpochRule> {
    let rule = raw.get("staleness.epoch_rule").unwrap_or("fixed");
    let k = raw.parse_as::<u32>("staleness.k", "a positive integer")?;
    let k_ref = raw.parse_as::<u32>("staleness.k_ref", "a positive integer")?;
    let k_min = raw.parse_as::<u32>("staleness.k_min", "a positive integer")?;
    let k_max = raw.parse_as::<u32>("staleness.k_max", "a positive integer")?;
    match rule {
        "fixed" => {
            for (key, set) in [
                ("staleness.k_ref", k_ref.is_some()),
                ("staleness.k_min", k_min.is_some()),
                ("staleness.k_max", k_max.is_some()),
            ] {
                if set {
                    return Err(Error::Config(format!(
                        "{key} is only valid with staleness.epoch_rule = inverse"
                    )));
                }
            }
            Ok(EpochRule::Fixed(k.unwrap_or(3)))
        }
        "inverse" => {
            if k.is_some() {
                return Err(Error::Config(
                    "staleness.k is only valid with staleness.epoch_rule = fixed".into(),
                ));
            }
            Ok(EpochRule::InverseStaleness {
                k_ref: k_ref.unwrap_or(6),
                k_min: k_min.unwrap_or(1),
                k_max: k_max.unwrap_or(6),
            })
        }
        other => Err(Error::Config(format!(
            "unknown epoch rule {other:?}; valid rules are fixed, inverse"
        ))),
    }
}

fn parse_data_source(raw: &RawConfig) -> Result<DataSource> {
    let kind = raw.get("data.kind").unwrap_or("synthetic");
    let synth_keys = [
        "data.n_per_class",
        "data.d",
        "data.n_classes",
        "data.spread",
        "data.test_per_class",
    ];
    let idx_keys = [
        "data.train_images",
        "data.train_labels",
        "data.test_images",
        "data.test_labels",
    ];
    match kind {
        "synthetic" => {
            for key in idx_keys {
                if raw.get(key).is_some() {
                    return Err(Error::Config(format!(
                        "{key} is only valid with data.kind = idx"
                    )));
                }
            }
            let mut n_per_class = 50;
            let mut d = 8;
            let mut n_classes = 4;
            let mut spread = 1.0;
            let mut test_per_class = 25;
            if let Some(v) = raw.parse_as::<usize>("data.n_per_class", "a positive integer")? {
                n_per_class = v;
            }
            if let Some(v) = raw.parse_as::<usize>("data.d", "a positive integer")? {
                d = v;
            }
            if let Some(v) = raw.parse_as::<usize>("data.n_classes", "a positive integer")? {
                n_classes = v;
            }
            if let Some(v) = raw.parse_as::<f64>("data.spread", "a positive number")? {
                spread = v;
            }
            if let Some(v) = raw.parse_as::<usize>("data.test_per_class", "a positive integer")? {
                test_per_class = v;
            }
            Ok(DataSource::Synthetic { n_per_class, d, n_classes, spread, test_per_class })
        }
        "idx" => {
            for key in synth_keys {
                if raw.get(key).is_some() {
                    return Err(Error::Config(format!(
                        "{key} is only valid with data.kind = synthetic"
                    )));
                }
            }
            let path = |key: &str| -> Result<PathBuf> {
                raw.get(key)
                    .map(PathBuf::from)
                    .ok_or_else(|| Error::Config(format!("data.kind = idx requires {key}")))
            };
            Ok(DataSource::Idx {
                train_images: path("data.train_images")?,
                train_labels: path("data.train_labels")?,
                test_images: path("data.test_images")?,
                test_labels: path("data.test_labels")?,
            })
        }
        other => Err(Error::Config(format!(
            "unknown data kind {other:?}; valid kinds are synthetic, idx"
        ))),
    }
}

/// Command line overrides applied on top of a parsed config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub metrics: Option<String>,
    pub scenarios: Option<String>,
    pub seeds: Option<u32>,
    pub budget: Option<f64>,
}

impl ExperimentConfig {
    /// Applies flag overrides and re-validates the result.
    pub fn apply_overrides(&mut self, ov: &Overrides) -> Result<()> {
        if let Some(out) = &ov.out {
            self.out_dir = out.clone();
        }
        if let Some(metrics) = &ov.metrics {
            self.metrics = parse_list(metrics, "metric")?;
        }
        if let Some(scenarios) = &ov.scenarios {
            self.scenarios = parse_list(scenarios, "scenario")?;
        }
        if let Some(seeds) = ov.seeds {
            self.n_seeds = seeds;
        }
        if let Some(budget) = ov.budget {
            self.budget = budget;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(Error::Config("metric list must not be empty".into()));
        }
        for (i, m) in self.metrics.iter().enumerate() {
            if self.metrics[..i].contains(m) {
                return Err(Error::Config(format!("metric {m} listed twice")));
            }
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("scenario list must not be empty".into()));
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            if self.scenarios[..i].contains(s) {
                return Err(Error::Config(format!("scenario {s} listed twice")));
            }
        }
        if self.n_seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if !(self.budget > 0.0) || !self.budget.is_finite() {
            return Err(Error::Config(format!(
                "budget must be positive and finite, got {}",
                self.budget
            )));
        }
        if !(self.eval_interval > 0.0) || !self.eval_interval.is_finite() {
            return Err(Error::Config(format!(
                "eval_interval must be positive and finite, got {}",
                self.eval_interval
            )));
        }
        if self.n_clients == 0 {
            return Err(Error::Config("n_clients must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("model.hidden must be at least 1".into()));
        }
        if !self.local_lr.is_finite() || self.local_lr < 0.0 {
            return Err(Error::Config(format!(
                "model.lr must be >= 0, got {}",
                self.local_lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("model.batch_size must be at least 1".into()));
        }
        for (name, v) in [
            ("staleness.lambda", self.lambda),
            ("staleness.epsilon", self.epsilon),
            ("staleness.delta", self.delta),
            ("partition.alpha", self.alpha),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        self.epoch_rule.validate()?;
        if self.min_per_client == 0 {
            return Err(Error::Config("partition.min_per_client must be at least 1".into()));
        }
        if let DataSource::Synthetic { n_per_class, d, n_classes, spread, test_per_class } =
            &self.data
        {
            if *n_per_class == 0 || *d == 0 || *n_classes == 0 || *test_per_class == 0 {
                return Err(Error::Config("data counts must all be at least 1".into()));
            }
            if !(*spread > 0.0) || !spread.is_finite() {
                return Err(Error::Config(format!(
                    "data.spread must be positive and finite, got {spread}"
                )));
            }
            if d < n_classes {
                return Err(Error::Config(format!(
                    "data.d = {d} must be at least data.n_classes = {n_classes}"
                )));
            }
            let total = n_per_class * n_classes;
            if self.n_clients > total {
                return Err(Error::Config(format!(
                    "cannot split {total} samples across {} clients",
                    self.n_clients
                )));
            }
            if self.min_per_client * self.n_clients > total {
                return Err(Error::Config(format!(
                    "{} clients x {} minimum samples exceeds the {total} available",
                    self.n_clients, self.min_per_client
                )));
            }
        }
        Ok(())
    }

    /// Canonical echo of every resolved value, written into the output
    /// directory so each results set records the exact configuration that
    /// produced it.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        let metric_list: Vec<&str> = self.metrics.iter().map(|m| m.token()).collect();
        let scenario_list: Vec<&str> = self.scenarios.iter().map(|x| x.token()).collect();
        let _ = writeln!(s, "metrics = {}", metric_list.join(","));
        let _ = writeln!(s, "scenarios = {}", scenario_list.join(","));
        let _ = writeln!(s, "seeds = {}", self.n_seeds);
        let _ = writeln!(s, "seed = {}", self.root_seed);
        let _ = writeln!(s, "budget = {}", self.budget);
        let _ = writeln!(s, "eval_interval = {}", self.eval_interval);
        let _ = writeln!(s, "n_clients = {}", self.n_clients);
        let _ = writeln!(s, "out = {}", self.out_dir.display());
        let _ = writeln!(s, "model.kind = {}", self.model_kind.token());
        if self.model_kind == ModelKind::Mlp {
            let _ = writeln!(s, "model.hidden = {}", self.hidden);
        }
        let _ = writeln!(s, "model.lr = {}", self.local_lr);
        let _ = writeln!(s, "model.batch_size = {}", self.batch_size);
        let _ = writeln!(s, "staleness.lambda = {}", self.lambda);
        let _ = writeln!(s, "staleness.epsilon = {}", self.epsilon);
        let _ = writeln!(s, "staleness.delta = {}", self.delta);
        let _ = writeln!(s, "staleness.generator = {}", self.generator.token());
        match self.epoch_rule {
            EpochRule::Fixed(k) => {
                let _ = writeln!(s, "staleness.epoch_rule = fixed");
                let _ = writeln!(s, "staleness.k = {k}");
            }
            EpochRule::InverseStaleness { k_ref, k_min, k_max } => {
                let _ = writeln!(s, "staleness.epoch_rule = inverse");
                let _ = writeln!(s, "staleness.k_ref = {k_ref}");
                let _ = writeln!(s, "staleness.k_min = {k_min}");
                let _ = writeln!(s, "staleness.k_max = {k_max}");
            }
        }
        match &self.data {
            DataSource::Synthetic { n_per_class, d, n_classes, spread, test_per_class } => {
                let _ = writeln!(s, "data.kind = synthetic");
                let _ = writeln!(s, "data.n_per_class = {n_per_class}");
                let _ = writeln!(s, "data.d = {d}");
                let _ = writeln!(s, "data.n_classes = {n_classes}");
                let _ = writeln!(s, "data.spread = {spread}");
                let _ = writeln!(s, "data.test_per_class = {test_per_class}");
            }
            DataSource::Idx { train_images, train_labels, test_images, test_labels } => {
                let _ = writeln!(s, "data.kind = idx");
                let _ = writeln!(s, "data.train_images = {}", train_images.display());
                let _ = writeln!(s, "data.train_labels = {}", train_labels.display());
                let _ = writeln!(s, "data.test_images = {}", test_images.display());
                let _ = writeln!(s, "data.test_labels = {}", test_labels.display());
            }
        }
        let _ = writeln!(s, "partition.alpha = {}", self.alpha);
        let _ = writeln!(s, "partition.min_per_client = {}", self.min_per_client);
        s
    }
}
