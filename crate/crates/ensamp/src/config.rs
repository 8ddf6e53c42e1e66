//! The two plain-text configuration files users touch: `resource.cfg`
//! (where to run) and `kernel.cfg` (what to run).
//!
//! Grammar: one `key = value` pair per line, `#` starts a comment line,
//! keys are case-sensitive, values are single tokens (integers, decimals
//! or bare words). Unknown keys are rejected by name; every field is
//! either required or has a documented default, listed in the guide's
//! configuration chapter.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::ResourceHandle;
use crate::dynamics::Potential;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("duplicate key `{key}`")]
    DuplicateKey { key: String },
    #[error("missing required key `{key}`")]
    MissingKey { key: String },
    #[error("key `{key}`: {message}")]
    InvalidValue { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Where the workload runs: a named slot pool. The `username`, `account`
/// and `queue` keys of HPC-style files are accepted and recorded, but
/// nothing at desk scale consumes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceConfig {
    pub name: String,
    pub total_slots: usize,
    pub walltime_limit: Option<f64>,
    pub extras: BTreeMap<String, String>,
}

impl ResourceConfig {
    pub fn handle(&self) -> ResourceHandle {
        ResourceHandle {
            name: self.name.clone(),
            total_slots: self.total_slots,
            walltime_limit: self.walltime_limit,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "name = {}", self.name).unwrap();
        writeln!(out, "slots = {}", self.total_slots).unwrap();
        if let Some(w) = self.walltime_limit {
            writeln!(out, "walltime = {}", w).unwrap();
        }
        for (k, v) in &self.extras {
            writeln!(out, "{} = {}", k, v).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkflowKind {
    Dmdmd,
    Cocomd,
}

impl WorkflowKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            WorkflowKind::Dmdmd => "dmdmd",
            WorkflowKind::Cocomd => "cocomd",
        }
    }
}

/// Simulation-stage parameters shared by both workflows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdParams {
    pub n_steps: usize,
    pub dt: f64,
    pub temperature: f64,
    pub friction: f64,
    pub potential: Potential,
    pub seed: u64,
    pub stride: usize,
    pub jitter: f64,
    /// Start point override; the potential's canonical start when absent.
    pub init: Option<Vec<f64>>,
}

impl MdParams {
    pub fn start_config(&self) -> Vec<f64> {
        self.init
            .clone()
            .unwrap_or_else(|| self.potential.default_start())
    }
}

/// Diffusion-map analysis knobs. Thresholds are expressed in units of the
/// median pairwise diffusion-coordinate distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmdmdParams {
    pub num_neighbors_for_local_scale: usize,
    pub merge_threshold: f64,
    pub spawn_threshold: f64,
}

/// Complementary-coordinates analysis knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoParams {
    pub projection_dims: usize,
    pub bins_per_dim: usize,
    pub n_new_structures: usize,
}

/// Fully resolved workload description: which workflow, how many
/// iterations and replicas, simulation parameters, analysis parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub workflow: WorkflowKind,
    pub num_iterations: usize,
    pub num_replicas: usize,
    pub md: MdParams,
    pub dmdmd: DmdmdParams,
    pub coco: CocoParams,
}

impl KernelConfig {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "workflow = {}", self.workflow.as_str()).unwrap();
        writeln!(out, "num_iterations = {}", self.num_iterations).unwrap();
        writeln!(out, "num_replicas = {}", self.num_replicas).unwrap();
        writeln!(out, "n_steps = {}", self.md.n_steps).unwrap();
        writeln!(out, "dt = {}", self.md.dt).unwrap();
        writeln!(out, "temperature = {}", self.md.temperature).unwrap();
        writeln!(out, "friction = {}", self.md.friction).unwrap();
        writeln!(out, "potential = {}", self.md.potential.name()).unwrap();
        if let Potential::DoubleWell1d { barrier } | Potential::DoubleWell2d { barrier } =
            self.md.potential
        {
            writeln!(out, "barrier = {}", barrier).unwrap();
        }
        writeln!(out, "seed = {}", self.md.seed).unwrap();
        writeln!(out, "stride = {}", self.md.stride).unwrap();
        writeln!(out, "jitter = {}", self.md.jitter).unwrap();
        if let Some(init) = &self.md.init {
            for (i, v) in init.iter().enumerate() {
                writeln!(out, "init_{} = {}", i, v).unwrap();
            }
        }
        writeln!(
            out,
            "num_neighbors_for_local_scale = {}",
            self.dmdmd.num_neighbors_for_local_scale
        )
        .unwrap();
        writeln!(out, "merge_threshold = {}", self.dmdmd.merge_threshold).unwrap();
        writeln!(out, "spawn_threshold = {}", self.dmdmd.spawn_threshold).unwrap();
        writeln!(out, "projection_dims = {}", self.coco.projection_dims).unwrap();
        writeln!(out, "bins_per_dim = {}", self.coco.bins_per_dim).unwrap();
        writeln!(out, "n_new_structures = {}", self.coco.n_new_structures).unwrap();
        out
    }
}

/// Raw `key = value` lines, syntax-checked but untyped.
fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut pairs = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || key.split_whitespace().count() != 1 {
            return Err(ConfigError::Syntax {
                line: i + 1,
                message: "key must be a single word".into(),
            });
        }
        if value.is_empty() || value.split_whitespace().count() != 1 {
            return Err(ConfigError::Syntax {
                line: i + 1,
                message: format!("value for `{key}` must be a single token"),
            });
        }
        if pairs.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError::DuplicateKey {
                key: key.to_string(),
            });
        }
    }
    Ok(pairs)
}

struct Fields {
    pairs: BTreeMap<String, String>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<String> {
        self.pairs.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<String, ConfigError> {
        self.take(key).ok_or_else(|| ConfigError::MissingKey {
            key: key.to_string(),
        })
    }

    fn count(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| invalid(key, format!("expected a non-negative integer, found `{v}`"))),
        }
    }

    fn real(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| invalid(key, format!("expected a number, found `{v}`"))),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.pairs.into_keys().next() {
            None => Ok(()),
            Some(key) => Err(ConfigError::UnknownKey { key }),
        }
    }
}

pub fn parse_resource_config(text: &str) -> Result<ResourceConfig, ConfigError> {
    let mut f = Fields {
        pairs: parse_pairs(text)?,
    };
    let name = f.require("name")?;
    let slots_raw = f.require("slots")?;
    let total_slots = slots_raw
        .parse::<usize>()
        .map_err(|_| invalid("slots", format!("expected an integer, found `{slots_raw}`")))?;
    if total_slots == 0 {
        return Err(invalid("slots", "must be at least 1"));
    }
    let walltime_limit = match f.take("walltime") {
        None => None,
        Some(v) => {
            let w = v
                .parse::<f64>()
                .map_err(|_| invalid("walltime", format!("expected seconds, found `{v}`")))?;
            if w <= 0.0 {
                return Err(invalid("walltime", "must be positive"));
            }
            Some(w)
        }
    };
    let mut extras = BTreeMap::new();
    for key in ["username", "account", "queue"] {
        if let Some(v) = f.take(key) {
            extras.insert(key.to_string(), v);
        }
    }
    f.finish()?;
    Ok(ResourceConfig {
        name,
        total_slots,
        walltime_limit,
        extras,
    })
}

pub fn parse_kernel_config(text: &str) -> Result<KernelConfig, ConfigError> {
    let mut f = Fields {
        pairs: parse_pairs(text)?,
    };
    let workflow = match f.require("workflow")?.as_str() {
        "dmdmd" => WorkflowKind::Dmdmd,
        "cocomd" => WorkflowKind::Cocomd,
        other => {
            return Err(invalid(
                "workflow",
                format!("expected `dmdmd` or `cocomd`, found `{other}`"),
            ))
        }
    };

    let num_iterations = f.count("num_iterations", 5)?;
    if num_iterations == 0 {
        return Err(invalid("num_iterations", "must be at least 1"));
    }
    let num_replicas = f.count("num_replicas", 8)?;
    if num_replicas < 2 {
        return Err(invalid("num_replicas", "must be at least 2"));
    }

    let n_steps = f.count("n_steps", 1000)?;
    if n_steps == 0 {
        return Err(invalid("n_steps", "must be at least 1"));
    }
    let dt = f.real("dt", 1e-3)?;
    if dt <= 0.0 {
        return Err(invalid("dt", "must be positive"));
    }
    let temperature = f.real("temperature", 1.0)?;
    if temperature <= 0.0 {
        return Err(invalid("temperature", "must be positive"));
    }
    let friction = f.real("friction", 1.0)?;
    if friction <= 0.0 {
        return Err(invalid("friction", "must be positive"));
    }
    let barrier = f.real("barrier", 4.0)?;
    if barrier <= 0.0 {
        return Err(invalid("barrier", "must be positive"));
    }
    let potential_name = f.take("potential").unwrap_or_else(|| "double_well_1d".into());
    let potential = Potential::from_name(&potential_name, barrier)
        .map_err(|_| invalid("potential", format!("unknown potential `{potential_name}`")))?;
    let seed = match f.take("seed") {
        None => 42,
        Some(v) => v
            .parse::<u64>()
            .map_err(|_| invalid("seed", format!("expected an integer, found `{v}`")))?,
    };
    let stride = f.count("stride", (n_steps / 10).max(1))?;
    if stride == 0 {
        return Err(invalid("stride", "must be at least 1"));
    }
    let jitter = f.real("jitter", 0.05)?;
    if jitter < 0.0 {
        return Err(invalid("jitter", "must be non-negative"));
    }

    let init = take_init(&mut f, potential.dim())?;

    let num_neighbors_for_local_scale = f.count("num_neighbors_for_local_scale", 8)?;
    if num_neighbors_for_local_scale == 0 {
        return Err(invalid("num_neighbors_for_local_scale", "must be at least 1"));
    }
    let merge_threshold = f.real("merge_threshold", 0.2)?;
    if merge_threshold <= 0.0 {
        return Err(invalid("merge_threshold", "must be positive"));
    }
    let spawn_threshold = f.real("spawn_threshold", 2.0)?;
    if spawn_threshold <= 0.0 {
        return Err(invalid("spawn_threshold", "must be positive"));
    }

    let projection_dims = f.count("projection_dims", 2)?;
    if !(2..=4).contains(&projection_dims) {
        return Err(invalid(
            "projection_dims",
            format!("must be between 2 and 4, found {projection_dims}"),
        ));
    }
    let bins_per_dim = f.count("bins_per_dim", 10)?;
    if bins_per_dim < 2 {
        return Err(invalid("bins_per_dim", "must be at least 2"));
    }
    let n_new_structures = f.count("n_new_structures", num_replicas)?;
    if n_new_structures == 0 {
        return Err(invalid("n_new_structures", "must be at least 1"));
    }

    f.finish()?;

    if workflow == WorkflowKind::Cocomd && potential.dim() < projection_dims {
        return Err(invalid(
            "projection_dims",
            format!(
                "cocomd needs a potential with at least {projection_dims} dimensions, \
                 `{}` has {}",
                potential.name(),
                potential.dim()
            ),
        ));
    }

    Ok(KernelConfig {
        workflow,
        num_iterations,
        num_replicas,
        md: MdParams {
            n_steps,
            dt,
            temperature,
            friction,
            potential,
            seed,
            stride,
            jitter,
            init,
        },
        dmdmd: DmdmdParams {
            num_neighbors_for_local_scale,
            merge_threshold,
            spawn_threshold,
        },
        coco: CocoParams {
            projection_dims,
            bins_per_dim,
            n_new_structures,
        },
    })
}

/// `init_0 .. init_{dim-1}` override the start point; either all present
/// or none.
fn take_init(f: &mut Fields, dim: usize) -> Result<Option<Vec<f64>>, ConfigError> {
    let keys: Vec<String> = f
        .pairs
        .keys()
        .filter(|k| k.starts_with("init_"))
        .cloned()
        .collect();
    if keys.is_empty() {
        return Ok(None);
    }
    let mut init = vec![None; dim];
    for key in keys {
        let idx: usize = key[5..]
            .parse()
            .map_err(|_| invalid(&key, "expected `init_<coordinate index>`"))?;
        if idx >= dim {
            return Err(invalid(
                &key,
                format!("coordinate index out of range, potential has {dim} dimensions"),
            ));
        }
        let v = f.pairs.remove(&key).unwrap();
        init[idx] = Some(v.parse::<f64>().map_err(|_| {
            invalid(&key, format!("expected a number, found `{v}`"))
        })?);
    }
    let filled: Option<Vec<f64>> = init.into_iter().collect();
    match filled {
        Some(v) => Ok(Some(v)),
        None => Err(invalid(
            "init_0",
            format!("start point override must set all {dim} coordinates"),
        )),
    }
}
