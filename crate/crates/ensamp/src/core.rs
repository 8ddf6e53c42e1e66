//! Domain types shared by every module: replicas, ensembles, tasks,
//! task records and resource handles.
//!
//! Replica configurations are plain real vectors in toy units; the dynamics
//! module gives them meaning. Weights are stored unnormalized so that weight
//! conservation stays assertable across operations; normalization is an
//! explicit step.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ReplicaId = u64;
pub type TaskId = u64;

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("degenerate ensemble: total weight must be positive")]
    DegenerateWeights,
    #[error("ensemble must contain at least one replica")]
    Empty,
    #[error("replica {id} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        id: ReplicaId,
        got: usize,
        expected: usize,
    },
    #[error("duplicate replica id {0}")]
    DuplicateId(ReplicaId),
    #[error("replica {id} has invalid weight {weight}")]
    InvalidWeight { id: ReplicaId, weight: f64 },
    #[error("malformed ensemble text: {0}")]
    Parse(String),
}

/// One walker: a point in configuration space with a statistical weight and
/// an optional lineage pointer set when the replica was spawned by
/// duplicating another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replica {
    pub id: ReplicaId,
    pub config: Vec<f64>,
    pub weight: f64,
    pub parent: Option<ReplicaId>,
}

impl Replica {
    pub fn new(id: ReplicaId, config: Vec<f64>, weight: f64) -> Self {
        Replica {
            id,
            config,
            weight,
            parent: None,
        }
    }
}

/// An ordered set of replicas sharing one configuration dimension.
///
/// Invariants checked on construction: non-empty, unique ids, uniform
/// dimension, finite non-negative weights with positive total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    replicas: Vec<Replica>,
    dim: usize,
}

impl Ensemble {
    pub fn new(replicas: Vec<Replica>) -> Result<Self, EnsembleError> {
        let first = replicas.first().ok_or(EnsembleError::Empty)?;
        let dim = first.config.len();
        let mut seen = std::collections::BTreeSet::new();
        for r in &replicas {
            if r.config.len() != dim {
                return Err(EnsembleError::DimensionMismatch {
                    id: r.id,
                    got: r.config.len(),
                    expected: dim,
                });
            }
            if !seen.insert(r.id) {
                return Err(EnsembleError::DuplicateId(r.id));
            }
            if !r.weight.is_finite() || r.weight < 0.0 {
                return Err(EnsembleError::InvalidWeight {
                    id: r.id,
                    weight: r.weight,
                });
            }
        }
        let total = kahan_sum(replicas.iter().map(|r| r.weight));
        if total <= 0.0 {
            return Err(EnsembleError::DegenerateWeights);
        }
        Ok(Ensemble { replicas, dim })
    }

    pub fn replicas(&self) -> &[Replica] {
        &self.replicas
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.replicas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicas.is_empty()
    }

    /// Compensated sum of replica weights.
    pub fn total_weight(&self) -> f64 {
        kahan_sum(self.replicas.iter().map(|r| r.weight))
    }

    /// Largest replica id present, used when minting ids for duplicates.
    pub fn max_id(&self) -> ReplicaId {
        self.replicas.iter().map(|r| r.id).max().unwrap_or(0)
    }
}

/// Rescale weights to sum to one, preserving ratios, order, ids and configs.
pub fn normalize_weights(ensemble: &Ensemble) -> Result<Ensemble, EnsembleError> {
    let total = ensemble.total_weight();
    if !(total > 0.0) || !total.is_finite() {
        return Err(EnsembleError::DegenerateWeights);
    }
    let replicas = ensemble
        .replicas
        .iter()
        .map(|r| Replica {
            weight: r.weight / total,
            ..r.clone()
        })
        .collect();
    Ensemble::new(replicas)
}

/// Build an ensemble of `n` replicas around `init_config`, each coordinate
/// jittered uniformly in `[-jitter, +jitter]`, all weights `1/n`.
///
/// Each replica draws from its own counter-based stream keyed on
/// `(seed, replica id)`, so the result is independent of evaluation order.
pub fn ensemble_from_seed(
    n: usize,
    init_config: &[f64],
    jitter: f64,
    seed: u64,
) -> Result<Ensemble, EnsembleError> {
    if n == 0 {
        return Err(EnsembleError::Empty);
    }
    assert!(jitter >= 0.0, "jitter must be non-negative");
    let weight = 1.0 / n as f64;
    let replicas = (0..n as ReplicaId)
        .map(|id| {
            let config = if jitter == 0.0 {
                init_config.to_vec()
            } else {
                let mut rng = replica_rng(seed, id);
                let dist = Uniform::new_inclusive(-jitter, jitter);
                init_config.iter().map(|c| c + rng.sample(dist)).collect()
            };
            Replica::new(id, config, weight)
        })
        .collect();
    Ensemble::new(replicas)
}

/// Counter-based random stream for one `(seed, replica)` pair. Streams for
/// different replicas never overlap, so concurrent use cannot change results.
pub fn replica_rng(seed: u64, replica: ReplicaId) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Derive a sub-seed from a base seed and a salt (splitmix64 finalizer).
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Kahan-compensated sum.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Line-oriented ensemble text format: header `dim n`, then one line per
/// replica `id weight c1 .. c_dim`. Floats print in shortest round-trip
/// form, so a write/read cycle reproduces values exactly.
pub fn write_ensemble_text(ensemble: &Ensemble) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", ensemble.dim(), ensemble.len()).unwrap();
    for r in ensemble.replicas() {
        write!(out, "{} {}", r.id, r.weight).unwrap();
        for c in &r.config {
            write!(out, " {}", c).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_ensemble_text(text: &str) -> Result<Ensemble, EnsembleError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| EnsembleError::Parse("empty input".into()))?;
    let mut parts = header.split_whitespace();
    let dim: usize = parse_field(parts.next(), "dim")?;
    let n: usize = parse_field(parts.next(), "n")?;
    let mut replicas = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let mut fields = line.split_whitespace();
        let id: ReplicaId = parse_field(fields.next(), "id")?;
        let weight: f64 = parse_field(fields.next(), "weight")?;
        let config: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| EnsembleError::Parse(format!("line {}: {e}", i + 2)))
            })
            .collect::<Result<_, _>>()?;
        if config.len() != dim {
            return Err(EnsembleError::Parse(format!(
                "line {}: expected {dim} coordinates, found {}",
                i + 2,
                config.len()
            )));
        }
        replicas.push(Replica::new(id, config, weight));
    }
    if replicas.len() != n {
        return Err(EnsembleError::Parse(format!(
            "header declared {n} replicas, found {}",
            replicas.len()
        )));
    }
    Ensemble::new(replicas)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T, EnsembleError>
where
    T::Err: std::fmt::Display,
{
    let raw = field.ok_or_else(|| EnsembleError::Parse(format!("missing field `{name}`")))?;
    raw.parse()
        .map_err(|e| EnsembleError::Parse(format!("field `{name}`: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Simulation,
    Analysis,
    Null,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TaskKind::Simulation => "simulation",
            TaskKind::Analysis => "analysis",
            TaskKind::Null => "null",
        };
        f.write_str(s)
    }
}

/// A unit of executable work as the executor sees it: identity, kind, a
/// kernel-specific parameter record, a slot requirement, and artifact keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub kind: TaskKind,
    pub payload: BTreeMap<String, String>,
    pub slots_required: usize,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl TaskSpec {
    pub fn new(id: TaskId, kind: TaskKind, slots_required: usize) -> Self {
        assert!(slots_required >= 1, "slots_required must be at least 1");
        TaskSpec {
            id,
            kind,
            payload: BTreeMap::new(),
            slots_required,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: impl ToString) -> Self {
        self.payload.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure(String),
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }
}

/// Timing and outcome record for one task. All timestamps come from the
/// pilot's monotonic clock, in seconds since the pilot was created:
/// `submitted` at queue entry, `launched` when the coordinator dequeues the
/// task, `started` at kernel entry, `finished` at kernel exit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskRecord {
    pub spec_id: TaskId,
    pub kind: TaskKind,
    pub slots: usize,
    pub submitted: f64,
    pub launched: f64,
    pub started: f64,
    pub finished: f64,
    pub outcome: Outcome,
}

impl TaskRecord {
    pub fn duration(&self) -> f64 {
        self.finished - self.started
    }

    /// submitted <= launched <= started <= finished
    pub fn timestamps_ordered(&self) -> bool {
        self.submitted <= self.launched
            && self.launched <= self.started
            && self.started <= self.finished
    }
}

/// A named slot pool with an optional walltime limit; the executor schedules
/// inside it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResourceHandle {
    pub name: String,
    pub total_slots: usize,
    pub walltime_limit: Option<f64>,
}

impl ResourceHandle {
    pub fn new(name: impl Into<String>, total_slots: usize) -> Self {
        assert!(total_slots >= 1, "total_slots must be at least 1");
        ResourceHandle {
            name: name.into(),
            total_slots,
            walltime_limit: None,
        }
    }
}
