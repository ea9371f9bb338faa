//! Experiment specs, seeded evaluation and reproducible report files.
//!
//! An experiment writes three files into its output directory:
//!
//! * `metrics.csv`: `label,dispatcher,total_discounted_reward,average_lateness,average_tardiness,jobs_completed,jobs_dropped`
//! * `learning_curve.csv`: `label,iteration,mean_discounted_reward,mean_lateness,mean_tardiness,loss`
//! * `manifest.json`: the full spec, its SHA-256 hash, the seeds, the tool
//!   version and a hash of every other output file.
//!
//! Trained policies are saved next to them as `policy-<label>.json`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{Geometry, StateVariant};
use crate::config::ShopConfig;
use crate::error::{Error, Result};
use crate::heuristics::{train_imitation, HeuristicDispatcher, HeuristicKind, ImitationOptions};
use crate::metrics::MetricsRow;
use crate::policy::{layer_dims, PolicyDispatcher, PolicyParams, SelectMode};
use crate::reinforce::{train_reinforce, train_reinforce_from, ReinforceOptions, TrainReport};
use crate::rng;
use crate::sim::{run_episode, Dispatcher, Shop};
use crate::transfer::{transfer_pipeline, TransferOptions};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CURVE_FILE: &str = "learning_curve.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "shopfloor-manifest";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispatcherKind {
    #[default]
    Edf,
    Lst,
    Random,
    Imitation,
    Reinforce,
    Transfer,
}

impl DispatcherKind {
    pub fn heuristic(self) -> Option<HeuristicKind> {
        match self {
            DispatcherKind::Edf => Some(HeuristicKind::Edf),
            DispatcherKind::Lst => Some(HeuristicKind::Lst),
            DispatcherKind::Random => Some(HeuristicKind::Random),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DispatcherKind::Edf => "edf",
            DispatcherKind::Lst => "lst",
            DispatcherKind::Random => "random",
            DispatcherKind::Imitation => "imitation",
            DispatcherKind::Reinforce => "reinforce",
            DispatcherKind::Transfer => "transfer",
        }
    }
}

impl fmt::Display for DispatcherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DispatcherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::usage(format!("unknown dispatcher `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImitationSpec {
    pub teacher: HeuristicKind,
    pub samples: usize,
    pub options: ImitationOptions,
}

impl Default for ImitationSpec {
    fn default() -> Self {
        Self {
            teacher: HeuristicKind::Edf,
            samples: 5000,
            options: ImitationOptions::default(),
        }
    }
}

/// Source side of a transfer experiment; the spec's `config` is the target.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSpec {
    pub source: ShopConfig,
    /// Trained source policy; trained with `source_training` when absent.
    pub source_checkpoint: Option<PathBuf>,
    pub source_training: ReinforceOptions,
    pub options: TransferOptions,
}

/// Runs the experiment once per value of one config field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub field: String,
    pub values: Vec<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub config: ShopConfig,
    pub dispatcher: DispatcherKind,
    pub eval_trajectories: usize,
    pub train_seeds: Vec<u64>,
    pub test_seeds: Vec<u64>,
    pub seed: u64,
    /// Saved policy to evaluate instead of training one.
    pub checkpoint: Option<PathBuf>,
    /// Save the policy every this many REINFORCE iterations.
    pub checkpoint_every: Option<usize>,
    pub reinforce: ReinforceOptions,
    pub imitation: ImitationSpec,
    pub transfer: Option<TransferSpec>,
    pub sweep: Option<Sweep>,
    /// State variants to train and compare; REINFORCE only.
    pub ablation: Vec<StateVariant>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            config: ShopConfig::default(),
            dispatcher: DispatcherKind::default(),
            eval_trajectories: 10,
            train_seeds: (0..10).collect(),
            test_seeds: (100..110).collect(),
            seed: 0,
            checkpoint: None,
            checkpoint_every: None,
            reinforce: ReinforceOptions::default(),
            imitation: ImitationSpec::default(),
            transfer: None,
            sweep: None,
            ablation: Vec::new(),
        }
    }
}

fn spec_error(field: &str, message: impl Into<String>) -> Error {
    Error::Spec {
        field: field.to_string(),
        message: message.into(),
    }
}

fn tag_config_error(prefix: &str, e: Error) -> Error {
    match e {
        Error::Config(msg) => spec_error(prefix, msg),
        other => other,
    }
}

impl ExperimentSpec {
    /// Parses JSON; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let spec: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            spec_error(&path, e.into_inner().to_string())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_string(self)?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate().map_err(|e| tag_config_error("config", e))?;
        if self.eval_trajectories == 0 {
            return Err(spec_error("eval_trajectories", "must be at least 1"));
        }
        if self.test_seeds.len() < self.eval_trajectories {
            return Err(spec_error(
                "test_seeds",
                format!("{} seeds for {} evaluation trajectories", self.test_seeds.len(), self.eval_trajectories),
            ));
        }
        let trains = matches!(self.dispatcher, DispatcherKind::Reinforce | DispatcherKind::Transfer);
        if trains && self.train_seeds.is_empty() && self.checkpoint.is_none() {
            return Err(spec_error("train_seeds", "training needs at least one seed"));
        }
        if self.checkpoint_every == Some(0) {
            return Err(spec_error("checkpoint_every", "must be positive"));
        }
        if !self.ablation.is_empty() && self.dispatcher != DispatcherKind::Reinforce {
            return Err(spec_error("ablation", "state ablation requires the reinforce dispatcher"));
        }
        match (&self.transfer, self.dispatcher) {
            (None, DispatcherKind::Transfer) => {
                return Err(spec_error("transfer", "required by the transfer dispatcher"));
            }
            (Some(t), DispatcherKind::Transfer) => {
                t.source.validate().map_err(|e| tag_config_error("transfer.source", e))?;
                t.options.align.validate().map_err(|e| tag_config_error("transfer.options.align", e))?;
            }
            _ => {}
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(spec_error("sweep.values", "must not be empty"));
            }
            for v in &s.values {
                with_field(&self.config, &s.field, v)?;
            }
        }
        Ok(())
    }

    pub fn eval_seeds(&self) -> &[u64] {
        &self.test_seeds[..self.eval_trajectories]
    }

    fn reinforce_options(&self, variant: StateVariant) -> ReinforceOptions {
        let mut o = self.reinforce.clone();
        if o.train_seeds.is_empty() {
            o.train_seeds = self.train_seeds.clone();
        }
        o.variant = variant;
        o
    }
}

/// Copy of `config` with one JSON field replaced.
pub fn with_field(config: &ShopConfig, field: &str, value: &serde_json::Value) -> Result<ShopConfig> {
    let key = match field {
        "λ" => "lambda",
        "γ" => "gamma",
        other => other,
    };
    let mut json = serde_json::to_value(config)?;
    let obj = json.as_object_mut().expect("config serializes to an object");
    if !obj.contains_key(key) {
        return Err(spec_error("sweep.field", format!("unknown config field `{field}`")));
    }
    obj.insert(key.to_string(), value.clone());
    let cfg: ShopConfig =
        serde_json::from_value(json).map_err(|e| spec_error("sweep.values", format!("{key}: {e}")))?;
    cfg.validate().map_err(|e| tag_config_error("sweep.values", e))?;
    Ok(cfg)
}

/// What `evaluate_policy` runs.
#[derive(Clone, Debug)]
pub enum EvalPolicy {
    Heuristic(HeuristicKind),
    /// Greedy network policy over the given state variant.
    Network { params: PolicyParams, variant: StateVariant },
}

impl EvalPolicy {
    fn dispatcher(&self, seed: u64) -> Box<dyn Dispatcher> {
        match self {
            EvalPolicy::Heuristic(k) => Box::new(HeuristicDispatcher::new(*k, seed)),
            EvalPolicy::Network { params, variant } => {
                Box::new(PolicyDispatcher::new(params.clone(), SelectMode::Greedy, *variant, seed))
            }
        }
    }
}

/// One episode per seed.
pub fn evaluate_per_seed(policy: &EvalPolicy, config: &ShopConfig, seeds: &[u64]) -> Result<Vec<MetricsRow>> {
    if let EvalPolicy::Network { params, .. } = policy {
        let g = Geometry::of(config);
        if params.input_dim() != g.dim() || params.num_actions() != g.actions() {
            return Err(Error::usage(format!(
                "policy dims {:?} do not fit this shop (input {}, actions {})",
                params.dims(),
                g.dim(),
                g.actions()
            )));
        }
    }
    seeds
        .iter()
        .map(|&seed| {
            let mut shop = Shop::new(config.clone(), seed)?;
            let mut d = policy.dispatcher(rng::derive_seed(seed, &[0xe7a1]));
            let ep = run_episode(&mut shop, d.as_mut())?;
            Ok(MetricsRow::from_episode(&ep.rewards, &ep.final_state, config.gamma))
        })
        .collect()
}

/// Mean metrics over one test episode per seed.
pub fn evaluate_policy(policy: &EvalPolicy, config: &ShopConfig, seeds: &[u64]) -> Result<MetricsRow> {
    Ok(MetricsRow::mean(&evaluate_per_seed(policy, config, seeds)?))
}

/// Result of one experiment cell.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub label: String,
    pub metrics: MetricsRow,
    /// Named learning curves (empty for untrained dispatchers).
    pub curves: Vec<(String, TrainReport)>,
    pub params: Option<PolicyParams>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub train_seeds: Vec<u64>,
    pub test_seeds: Vec<u64>,
    pub spec: ExperimentSpec,
    /// SHA-256 of each output file, by name.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::usage(format!("{} is not an experiment manifest", path.display())));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub cells: Vec<CellResult>,
    pub manifest: Manifest,
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

fn load_policy(spec: &ExperimentSpec) -> Result<Option<PolicyParams>> {
    match &spec.checkpoint {
        None => Ok(None),
        Some(path) => {
            if !path.exists() {
                return Err(Error::usage(format!("checkpoint {} does not exist", path.display())));
            }
            PolicyParams::load(path).map(Some)
        }
    }
}

fn train_policy(
    spec: &ExperimentSpec,
    config: &ShopConfig,
    variant: StateVariant,
    label: &str,
    out: Option<&Path>,
) -> Result<(PolicyParams, TrainReport)> {
    let opts = spec.reinforce_options(variant);
    let init = PolicyParams::init(&layer_dims(Geometry::of(config), &opts.hidden), rng::derive_seed(spec.seed, &[0x5eed]))?;
    let every = spec.checkpoint_every;
    let dir = out.map(|d| d.join("checkpoints"));
    train_reinforce_from(config, init, &opts, spec.seed, |it, params| {
        if let (Some(k), Some(dir)) = (every, &dir) {
            if (it + 1) % k == 0 {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                params.save(dir.join(format!("{}-iter{:05}.json", sanitize(label), it + 1)))?;
            }
        }
        Ok(())
    })
}

/// Trains and evaluates one configuration.
pub fn run_cell(spec: &ExperimentSpec, config: &ShopConfig, variant: StateVariant, label: &str, out: Option<&Path>) -> Result<CellResult> {
    let seeds = spec.eval_seeds();
    let network = |params: &PolicyParams, variant| EvalPolicy::Network {
        params: params.clone(),
        variant,
    };
    let (policy, curves, params) = match spec.dispatcher {
        k if k.heuristic().is_some() => (EvalPolicy::Heuristic(k.heuristic().expect("heuristic")), Vec::new(), None),
        DispatcherKind::Imitation => {
            let v = spec.imitation.options.variant;
            let p = match load_policy(spec)? {
                Some(p) => p,
                None => {
                    let im = &spec.imitation;
                    train_imitation(im.teacher, config, im.samples, spec.seed, &im.options)?.0
                }
            };
            (network(&p, v), Vec::new(), Some(p))
        }
        DispatcherKind::Reinforce => match load_policy(spec)? {
            Some(p) => (network(&p, variant), Vec::new(), Some(p)),
            None => {
                let (p, report) = train_policy(spec, config, variant, label, out)?;
                (network(&p, variant), vec![(label.to_string(), report)], Some(p))
            }
        },
        DispatcherKind::Transfer => {
            let t = spec.transfer.as_ref().ok_or_else(|| spec_error("transfer", "missing"))?;
            let source = match &t.source_checkpoint {
                Some(path) => PolicyParams::load(path)?,
                None => {
                    let mut o = t.source_training.clone();
                    if o.train_seeds.is_empty() {
                        o.train_seeds = spec.train_seeds.clone();
                    }
                    train_reinforce(&t.source, &o, spec.seed)?.0
                }
            };
            let mut opts = t.options.clone();
            if opts.fine_tune.train_seeds.is_empty() {
                opts.fine_tune.train_seeds = spec.train_seeds.clone();
            }
            let outcome = transfer_pipeline(&source, &t.source, config, &opts, spec.seed)?;
            let mut curves = vec![(format!("{label}/transfer"), outcome.transfer_curve)];
            if let Some(s) = outcome.scratch_curve {
                curves.push((format!("{label}/scratch"), s));
            }
            (network(&outcome.params, opts.fine_tune.variant), curves, Some(outcome.params))
        }
        _ => unreachable!("heuristics handled above"),
    };
    let metrics = evaluate_policy(&policy, config, seeds)?;
    Ok(CellResult {
        label: label.to_string(),
        metrics,
        curves,
        params,
    })
}

/// Trains and evaluates one REINFORCE policy per state variant.
pub fn ablate_state(spec: &ExperimentSpec, variants: &[StateVariant]) -> Result<Vec<CellResult>> {
    variants
        .iter()
        .map(|&v| {
            let mut s = spec.clone();
            s.dispatcher = DispatcherKind::Reinforce;
            s.checkpoint = None;
            run_cell(&s, &spec.config, v, v.label(), None)
        })
        .collect()
}

#[derive(Serialize)]
struct MetricsCsvRow<'a> {
    label: &'a str,
    dispatcher: &'a str,
    total_discounted_reward: f64,
    average_lateness: f64,
    average_tardiness: f64,
    jobs_completed: f64,
    jobs_dropped: f64,
}

#[derive(Serialize)]
struct CurveCsvRow<'a> {
    label: &'a str,
    iteration: usize,
    mean_discounted_reward: f64,
    mean_lateness: f64,
    mean_tardiness: f64,
    loss: f64,
}

fn metrics_csv(spec: &ExperimentSpec, cells: &[CellResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cells {
        let m = &c.metrics;
        w.serialize(MetricsCsvRow {
            label: &c.label,
            dispatcher: spec.dispatcher.name(),
            total_discounted_reward: m.total_discounted_reward,
            average_lateness: m.average_lateness,
            average_tardiness: m.average_tardiness,
            jobs_completed: m.jobs_completed,
            jobs_dropped: m.jobs_dropped,
        })?;
    }
    w.into_inner().map_err(|e| Error::io(METRICS_FILE, e.into_error()))
}

fn curve_csv(cells: &[CellResult]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["label", "iteration", "mean_discounted_reward", "mean_lateness", "mean_tardiness", "loss"])?;
    for c in cells {
        for (label, report) in &c.curves {
            for r in &report.rows {
                w.serialize(CurveCsvRow {
                    label,
                    iteration: r.iteration,
                    mean_discounted_reward: r.mean_discounted_reward,
                    mean_lateness: r.mean_lateness,
                    mean_tardiness: r.mean_tardiness,
                    loss: r.loss,
                })?;
            }
        }
    }
    w.into_inner().map_err(|e| Error::io(CURVE_FILE, e.into_error()))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], outputs: &mut BTreeMap<String, String>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    outputs.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
    Ok(())
}

/// Runs every cell of `spec` and writes the report files into `out`.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<ExperimentReport> {
    spec.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut configs = Vec::new();
    match &spec.sweep {
        None => configs.push((String::new(), spec.config.clone())),
        Some(s) => {
            for v in &s.values {
                configs.push((format!("{}={}", s.field, v), with_field(&spec.config, &s.field, v)?));
            }
        }
    }
    let variants: Vec<Option<StateVariant>> = if spec.ablation.is_empty() {
        vec![None]
    } else {
        spec.ablation.iter().copied().map(Some).collect()
    };
    let mut cells = Vec::new();
    for (prefix, cfg) in &configs {
        for v in &variants {
            let label = match (prefix.is_empty(), v) {
                (true, None) => "default".to_string(),
                (true, Some(v)) => v.label().to_string(),
                (false, None) => prefix.clone(),
                (false, Some(v)) => format!("{prefix}/{}", v.label()),
            };
            let variant = v.unwrap_or(spec.reinforce.variant);
            cells.push(run_cell(spec, cfg, variant, &label, Some(out))?);
        }
    }

    let mut outputs = BTreeMap::new();
    write_file(out, METRICS_FILE, &metrics_csv(spec, &cells)?, &mut outputs)?;
    write_file(out, CURVE_FILE, &curve_csv(&cells)?, &mut outputs)?;
    for c in &cells {
        if let Some(p) = &c.params {
            let json = serde_json::to_string(&p.to_checkpoint())?;
            write_file(out, &format!("policy-{}.json", sanitize(&c.label)), json.as_bytes(), &mut outputs)?;
        }
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        version: 1,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: spec.hash()?,
        seed: spec.seed,
        train_seeds: spec.train_seeds.clone(),
        test_seeds: spec.eval_seeds().to_vec(),
        spec: spec.clone(),
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(ExperimentReport { cells, manifest })
}

/// Re-runs the experiment recorded in a manifest.
pub fn rerun_manifest(manifest: impl AsRef<Path>, out: &Path) -> Result<ExperimentReport> {
    let m = Manifest::load(manifest)?;
    let expected = m.spec.hash()?;
    if expected != m.config_hash {
        return Err(Error::usage("manifest config hash does not match its spec"));
    }
    run_experiment(&m.spec, out)
}
