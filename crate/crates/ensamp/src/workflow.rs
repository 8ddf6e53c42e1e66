//! The simulation-analysis loop driver: iterate { one simulation task per
//! replica -> stage barrier -> one analysis task -> next ensemble } for a
//! configured number of rounds, with per-iteration instance counts allowed
//! to change between rounds.
//!
//! Pre-processing seeds the initial ensemble; post-processing is report
//! assembly. All parallelism lives in the executor: the driver is
//! single-threaded and the barrier falls out of draining the pilot queue
//! before submitting the analysis task.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coco::coco_analyze;
use crate::config::{KernelConfig, WorkflowKind};
use crate::core::{
    derive_seed, ensemble_from_seed, Ensemble, Replica, ReplicaId, TaskId, TaskKind, TaskSpec,
};
use crate::dynamics::{propagate, LangevinParams, Trajectory};
use crate::executor::{Pilot, RunBatch, Task};
use crate::lsdmap::{
    diffusion_map, dynamic_target, local_scales, pairwise_distances, select_replicas, Selection,
    SelectionParams,
};

/// Hard ceiling on dynamic growth: the selection step may not request more
/// than this multiple of the configured replica count.
pub const MAX_GROWTH_FACTOR: usize = 4;

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("analysis task failed in iteration {iteration}: {reason}")]
    AnalysisFailed {
        iteration: usize,
        reason: String,
        partial: Box<WorkflowReport>,
    },
    #[error("iteration {iteration} left fewer than two usable replicas")]
    EnsembleCollapsed {
        iteration: usize,
        partial: Box<WorkflowReport>,
    },
    #[error(transparent)]
    Executor(#[from] crate::executor::ExecutorError),
    #[error(transparent)]
    Ensemble(#[from] crate::core::EnsembleError),
}

impl WorkflowError {
    /// The partial report accumulated before the failure, when one exists.
    pub fn partial_report(&self) -> Option<&WorkflowReport> {
        match self {
            WorkflowError::AnalysisFailed { partial, .. }
            | WorkflowError::EnsembleCollapsed { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// What a stage task hands back through the executor.
pub enum StageOutput {
    Sim(Trajectory),
    DmdmdAnalysis(Box<Selection>),
    CocoAnalysis {
        configs: Vec<Vec<f64>>,
        exhausted: bool,
    },
}

/// Timing and accounting for one iteration, assembled from task records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    /// Simulation tasks submitted this iteration.
    pub n_instances: usize,
    /// Ensemble size the analysis emitted for the next iteration.
    pub next_count: usize,
    /// Wall time of the simulation stage (first submission to last finish).
    pub sim_wall_s: f64,
    /// Wall time of the analysis stage.
    pub analysis_wall_s: f64,
    /// Iteration wall minus the critical-path kernel time
    /// (longest simulation kernel plus the analysis kernel).
    pub overhead_s: f64,
    /// Steps budgeted to this iteration: n_instances * n_steps.
    pub steps: u64,
    /// Replicas dropped because their simulation task failed.
    pub dropped: Vec<ReplicaId>,
    pub sim_task_ids: Vec<TaskId>,
    pub analysis_task_id: Option<TaskId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkflowReport {
    pub kind: WorkflowKind,
    pub seed: u64,
    pub iterations: Vec<IterationStats>,
    pub total_steps: u64,
    pub final_ensemble: Ensemble,
}

impl WorkflowReport {
    /// JSON document mirroring the per-iteration stacked-bar data: one row
    /// per iteration with instance count and wall times, budget totals,
    /// and a pointer to the serialized final ensemble.
    pub fn to_json(&self, final_ensemble_path: &str) -> String {
        let iterations: Vec<serde_json::Value> = self
            .iterations
            .iter()
            .map(|it| {
                serde_json::json!({
                    "iteration": it.iteration,
                    "n_instances": it.n_instances,
                    "next_count": it.next_count,
                    "sim_wall_s": it.sim_wall_s,
                    "analysis_wall_s": it.analysis_wall_s,
                    "overhead_s": it.overhead_s,
                    "steps": it.steps,
                    "dropped": it.dropped,
                })
            })
            .collect();
        let doc = serde_json::json!({
            "kind": self.kind.as_str(),
            "seed": self.seed,
            "iterations": iterations,
            "budget": {
                "total_steps": self.total_steps,
                "per_iteration": self.iterations.iter().map(|i| i.steps).collect::<Vec<u64>>(),
            },
            "final_ensemble_path": final_ensemble_path,
            "final_ensemble_size": self.final_ensemble.len(),
        });
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }
}

/// The iterated two-stage state machine. `frame_store` accumulates every
/// simulation frame seen so far and feeds the agglomerative analysis; the
/// diffusion-map workflow reads only final structures and leaves it empty.
pub struct SalWorkflow {
    pub config: KernelConfig,
    pub seed: u64,
    pub ensemble: Ensemble,
    pub iteration: usize,
    pub frame_store: Vec<Vec<f64>>,
    pub history: Vec<IterationStats>,
    next_task_id: TaskId,
    next_replica_id: ReplicaId,
}

impl SalWorkflow {
    /// Pre-processing stage: seed the initial ensemble from the start
    /// configuration.
    pub fn new(config: KernelConfig, seed_override: Option<u64>) -> Result<Self, WorkflowError> {
        let seed = seed_override.unwrap_or(config.md.seed);
        let ensemble = ensemble_from_seed(
            config.num_replicas,
            &config.md.start_config(),
            config.md.jitter,
            derive_seed(seed, 0),
        )?;
        let next_replica_id = ensemble.max_id() + 1;
        Ok(SalWorkflow {
            config,
            seed,
            ensemble,
            iteration: 0,
            frame_store: Vec::new(),
            history: Vec::new(),
            next_task_id: 0,
            next_replica_id,
        })
    }

    fn params(&self) -> LangevinParams {
        LangevinParams::new(
            self.config.md.n_steps,
            self.config.md.dt,
            self.config.md.temperature,
            self.config.md.friction,
            self.config.md.stride,
        )
    }

    /// Run all configured iterations on the given pilot and assemble the
    /// report (the post-processing stage).
    pub fn run(&mut self, pilot: &mut Pilot<StageOutput>) -> Result<WorkflowReport, WorkflowError> {
        for _ in 0..self.config.num_iterations {
            self.run_iteration(pilot)?;
        }
        Ok(self.report())
    }

    pub fn report(&self) -> WorkflowReport {
        WorkflowReport {
            kind: self.config.workflow,
            seed: self.seed,
            iterations: self.history.clone(),
            total_steps: self.history.iter().map(|i| i.steps).sum(),
            final_ensemble: self.ensemble.clone(),
        }
    }

    fn take_task_id(&mut self, pilot: &Pilot<StageOutput>) -> TaskId {
        let floor = pilot.records().keys().max().map_or(0, |m| m + 1);
        self.next_task_id = self.next_task_id.max(floor);
        let id = self.next_task_id;
        self.next_task_id += 1;
        id
    }

    /// One simulation stage, barrier, and analysis stage.
    pub fn run_iteration(&mut self, pilot: &mut Pilot<StageOutput>) -> Result<(), WorkflowError> {
        let iteration = self.iteration;
        let iteration_seed = derive_seed(self.seed, 1 + iteration as u64);
        let params = self.params();
        let potential = self.config.md.potential;
        let n_instances = self.ensemble.len();

        // Simulation stage: one task per replica.
        let replicas: Vec<Replica> = self.ensemble.replicas().to_vec();
        let mut sim_ids = Vec::with_capacity(n_instances);
        let mut tasks = Vec::with_capacity(n_instances);
        for replica in replicas {
            let id = self.take_task_id(pilot);
            sim_ids.push(id);
            let spec = TaskSpec::new(id, TaskKind::Simulation, 1)
                .with_param("replica", replica.id)
                .with_param("iteration", iteration)
                .with_param("steps", params.n_steps);
            tasks.push(Task::new(spec, move || {
                propagate(&replica, &potential, &params, iteration_seed)
                    .map(StageOutput::Sim)
                    .map_err(|e| e.to_string())
            }));
        }
        pilot.submit(tasks)?;
        let sim_batch = pilot.run_to_completion()?;

        // Collect finals; failed simulations drop their replica.
        let mut finals: Vec<Replica> = Vec::new();
        let mut trajectories: Vec<Trajectory> = Vec::new();
        let mut dropped: Vec<ReplicaId> = Vec::new();
        for (replica, task_id) in self.ensemble.replicas().iter().zip(&sim_ids) {
            match sim_batch.outputs.get(task_id) {
                Some(StageOutput::Sim(t)) => {
                    finals.push(Replica {
                        id: replica.id,
                        config: t.final_config.clone(),
                        weight: replica.weight,
                        parent: replica.parent,
                    });
                    trajectories.push(t.clone());
                }
                _ => dropped.push(replica.id),
            }
        }

        match self.config.workflow {
            WorkflowKind::Dmdmd => {
                // Weight of a dropped replica moves to the nearest survivor
                // (start-configuration distance, both sides known).
                for &lost in &dropped {
                    let lost_replica = self
                        .ensemble
                        .replicas()
                        .iter()
                        .find(|r| r.id == lost)
                        .expect("dropped replica came from the ensemble");
                    if let Some(nearest) = nearest_survivor(lost_replica, &self.ensemble, &dropped)
                    {
                        if let Some(f) = finals.iter_mut().find(|f| f.id == nearest) {
                            f.weight += lost_replica.weight;
                        }
                    }
                }
            }
            WorkflowKind::Cocomd => {
                // Re-seed failed replicas at their pre-iteration position.
                for &lost in &dropped {
                    let r = self
                        .ensemble
                        .replicas()
                        .iter()
                        .find(|r| r.id == lost)
                        .expect("dropped replica came from the ensemble");
                    finals.push(r.clone());
                }
                for t in &trajectories {
                    self.frame_store.extend(t.frames.iter().cloned());
                }
            }
        }

        if finals.len() < 2 {
            return Err(WorkflowError::EnsembleCollapsed {
                iteration,
                partial: Box::new(self.report()),
            });
        }
        let finals = Ensemble::new(finals)?;

        // Analysis stage: a single task.
        let analysis_id = self.take_task_id(pilot);
        let analysis_task = self.build_analysis_task(analysis_id, &finals, iteration);
        pilot.submit(vec![analysis_task])?;
        let analysis_batch = pilot.run_to_completion()?;
        let analysis_record = analysis_batch.records[&analysis_id].clone();

        let next = match analysis_batch.outputs.into_values().next() {
            Some(StageOutput::DmdmdAnalysis(selection)) => selection.ensemble,
            Some(StageOutput::CocoAnalysis { configs, .. }) => {
                self.ensemble_from_new_configs(configs, &finals)?
            }
            _ => {
                let reason = match &analysis_record.outcome {
                    crate::core::Outcome::Failure(msg) => msg.clone(),
                    _ => "analysis produced no output".to_string(),
                };
                return Err(WorkflowError::AnalysisFailed {
                    iteration,
                    reason,
                    partial: Box::new(self.report()),
                });
            }
        };

        self.next_replica_id = self.next_replica_id.max(next.max_id() + 1);
        self.history.push(iteration_stats(
            iteration,
            n_instances,
            next.len(),
            params.n_steps as u64,
            &sim_batch,
            &analysis_record,
            sim_ids,
            analysis_id,
            dropped,
        ));
        self.ensemble = next;
        self.iteration += 1;
        Ok(())
    }

    fn build_analysis_task(
        &mut self,
        task_id: TaskId,
        finals: &Ensemble,
        iteration: usize,
    ) -> Task<StageOutput> {
        let spec = TaskSpec::new(task_id, TaskKind::Analysis, 1)
            .with_param("iteration", iteration)
            .with_param("kind", self.config.workflow.as_str());
        match self.config.workflow {
            WorkflowKind::Dmdmd => {
                let finals = finals.clone();
                let p = self.config.dmdmd.clone();
                let min_target = self.config.num_replicas;
                let max_target = MAX_GROWTH_FACTOR * self.config.num_replicas;
                Task::new(spec, move || {
                    let distances = pairwise_distances(&finals);
                    // Clamp the neighbor count so analyses of shrunken
                    // ensembles stay well-posed.
                    let k = p.num_neighbors_for_local_scale.min(finals.len() - 1).max(1);
                    let scales = local_scales(&distances, k).map_err(|e| e.to_string())?;
                    let dmap = diffusion_map(&distances, &scales).map_err(|e| e.to_string())?;
                    let n_target = dynamic_target(
                        &dmap,
                        &finals,
                        p.merge_threshold,
                        p.spawn_threshold,
                        min_target,
                        max_target,
                    );
                    let selection = select_replicas(
                        &finals,
                        &dmap,
                        &SelectionParams {
                            n_target,
                            merge_threshold: p.merge_threshold,
                            spawn_threshold: p.spawn_threshold,
                        },
                    )
                    .map_err(|e| e.to_string())?;
                    Ok(StageOutput::DmdmdAnalysis(Box::new(selection)))
                })
            }
            WorkflowKind::Cocomd => {
                let frames = self.frame_store.clone();
                let p = self.config.coco.clone();
                Task::new(spec, move || {
                    let (model, configs) = coco_analyze(
                        &frames,
                        p.projection_dims,
                        p.bins_per_dim,
                        p.n_new_structures,
                    )
                    .map_err(|e| e.to_string())?;
                    Ok(StageOutput::CocoAnalysis {
                        configs,
                        exhausted: model.exhausted,
                    })
                })
            }
        }
    }

    /// Next ensemble for the coco workflow: one unit-weight replica per
    /// generated configuration, topped up by duplicating current replicas
    /// when the grid ran out of unsampled bins.
    fn ensemble_from_new_configs(
        &mut self,
        configs: Vec<Vec<f64>>,
        finals: &Ensemble,
    ) -> Result<Ensemble, WorkflowError> {
        let want = self.config.coco.n_new_structures.max(2);
        let mut replicas = Vec::with_capacity(want);
        for config in configs {
            let id = self.next_replica_id;
            self.next_replica_id += 1;
            replicas.push(Replica::new(id, config, 1.0));
        }
        let mut fill = finals.replicas().iter().cycle();
        while replicas.len() < want {
            let src = fill.next().expect("finals is non-empty");
            let id = self.next_replica_id;
            self.next_replica_id += 1;
            replicas.push(Replica {
                id,
                config: src.config.clone(),
                weight: 1.0,
                parent: Some(src.id),
            });
        }
        Ok(Ensemble::new(replicas)?)
    }
}

fn nearest_survivor(
    lost: &Replica,
    ensemble: &Ensemble,
    dropped: &[ReplicaId],
) -> Option<ReplicaId> {
    ensemble
        .replicas()
        .iter()
        .filter(|r| r.id != lost.id && !dropped.contains(&r.id))
        .map(|r| {
            let d: f64 = r
                .config
                .iter()
                .zip(&lost.config)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (r.id, d)
        })
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
        .map(|(id, _)| id)
}

#[allow(clippy::too_many_arguments)]
fn iteration_stats(
    iteration: usize,
    n_instances: usize,
    next_count: usize,
    n_steps: u64,
    sim_batch: &RunBatch<StageOutput>,
    ana: &crate::core::TaskRecord,
    sim_task_ids: Vec<TaskId>,
    analysis_task_id: TaskId,
    dropped: Vec<ReplicaId>,
) -> IterationStats {
    let sim_submit = fold_min(sim_batch.records.values().map(|r| r.submitted));
    let sim_finish = fold_max(sim_batch.records.values().map(|r| r.finished));
    let longest_sim = fold_max(sim_batch.records.values().map(|r| r.duration()));
    let iteration_wall = ana.finished - sim_submit;
    IterationStats {
        iteration,
        n_instances,
        next_count,
        sim_wall_s: sim_finish - sim_submit,
        analysis_wall_s: ana.finished - ana.submitted,
        overhead_s: iteration_wall - (longest_sim + ana.duration()),
        steps: n_instances as u64 * n_steps,
        dropped,
        sim_task_ids,
        analysis_task_id: Some(analysis_task_id),
    }
}

fn fold_min(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::INFINITY, f64::min)
}

fn fold_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

/// Convenience entry point: seed, run, report.
pub fn run_sal(
    config: &KernelConfig,
    pilot: &mut Pilot<StageOutput>,
    seed_override: Option<u64>,
) -> Result<WorkflowReport, WorkflowError> {
    let mut wf = SalWorkflow::new(config.clone(), seed_override)?;
    wf.run(pilot)
}

/// Plain-MD comparison arm: the same initial ensemble and the same total
/// step budget as an adaptive run, with no analysis-driven reseeding —
/// every replica just keeps integrating. The budget is split as evenly as
/// possible (the first `budget % n` replicas run one extra step), so the
/// reported total matches the requested budget exactly.
pub fn plain_md_baseline(
    config: &KernelConfig,
    pilot: &mut Pilot<StageOutput>,
    seed_override: Option<u64>,
    total_step_budget: u64,
) -> Result<BaselineReport, WorkflowError> {
    let seed = seed_override.unwrap_or(config.md.seed);
    let ensemble = ensemble_from_seed(
        config.num_replicas,
        &config.md.start_config(),
        config.md.jitter,
        derive_seed(seed, 0),
    )?;
    let n = ensemble.len() as u64;
    let base = total_step_budget / n;
    let remainder = (total_step_budget % n) as usize;
    let potential = config.md.potential;

    let mut next_task_id = pilot.records().keys().max().map_or(0, |m| m + 1);
    let mut tasks = Vec::with_capacity(ensemble.len());
    let mut sim_ids = Vec::with_capacity(ensemble.len());
    for (i, replica) in ensemble.replicas().iter().enumerate() {
        let steps = base + u64::from(i < remainder);
        let id = next_task_id;
        next_task_id += 1;
        sim_ids.push(id);
        let spec = TaskSpec::new(id, TaskKind::Simulation, 1)
            .with_param("replica", replica.id)
            .with_param("steps", steps);
        let replica = replica.clone();
        let params = LangevinParams::new(
            steps as usize,
            config.md.dt,
            config.md.temperature,
            config.md.friction,
            config.md.stride,
        );
        tasks.push(Task::new(spec, move || {
            propagate(&replica, &potential, &params, derive_seed(seed, 1))
                .map(StageOutput::Sim)
                .map_err(|e| e.to_string())
        }));
    }
    pilot.submit(tasks)?;
    let batch = pilot.run_to_completion()?;

    let mut finals = Vec::new();
    let mut trajectories = Vec::new();
    let mut dropped = Vec::new();
    for (replica, task_id) in ensemble.replicas().iter().zip(&sim_ids) {
        match batch.outputs.get(task_id) {
            Some(StageOutput::Sim(t)) => {
                finals.push(Replica {
                    id: replica.id,
                    config: t.final_config.clone(),
                    weight: replica.weight,
                    parent: replica.parent,
                });
                trajectories.push(t.clone());
            }
            _ => dropped.push(replica.id),
        }
    }
    if finals.is_empty() {
        return Err(WorkflowError::EnsembleCollapsed {
            iteration: 0,
            partial: Box::new(WorkflowReport {
                kind: config.workflow,
                seed,
                iterations: Vec::new(),
                total_steps: 0,
                final_ensemble: ensemble,
            }),
        });
    }

    let sim_submit = fold_min(batch.records.values().map(|r| r.submitted));
    let sim_finish = fold_max(batch.records.values().map(|r| r.finished));
    let longest = fold_max(batch.records.values().map(|r| r.duration()));
    let stats = IterationStats {
        iteration: 0,
        n_instances: ensemble.len(),
        next_count: finals.len(),
        sim_wall_s: sim_finish - sim_submit,
        analysis_wall_s: 0.0,
        overhead_s: (sim_finish - sim_submit) - longest,
        steps: total_step_budget,
        dropped,
        sim_task_ids: sim_ids,
        analysis_task_id: None,
    };
    let report = WorkflowReport {
        kind: config.workflow,
        seed,
        iterations: vec![stats],
        total_steps: total_step_budget,
        final_ensemble: Ensemble::new(finals)?,
    };
    Ok(BaselineReport {
        report,
        trajectories,
    })
}

/// Baseline run output: the report plus the raw trajectories, which the
/// comparison experiments inspect for well occupancy.
pub struct BaselineReport {
    pub report: WorkflowReport,
    pub trajectories: Vec<Trajectory>,
}
