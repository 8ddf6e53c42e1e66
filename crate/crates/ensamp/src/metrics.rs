//! Overhead characterization and scaling experiments.
//!
//! Every wall time here is computed from task records — one clock source —
//! never measured separately. Timed experiments repeat each configuration
//! and report the median with min/max retained, since desk hardware is
//! noisy. "Overhead" for a fully-concurrent batch is wall time minus the
//! longest single task duration; with null workloads that is almost purely
//! the cost of creating, launching and finishing tasks.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::core::{ensemble_from_seed, ResourceHandle, TaskId, TaskKind, TaskSpec};
use crate::executor::{Pilot, Task};
use crate::lsdmap::{diffusion_map, local_scales, pairwise_distances};

/// A task that does no work, in the spirit of a `/bin/sleep 0` workload.
pub fn null_task(id: TaskId) -> Task<()> {
    Task::new(TaskSpec::new(id, TaskKind::Null, 1), || Ok(()))
}

/// A CPU-burning task that spins until a wall-clock deadline. Spinning to
/// a deadline (rather than a fixed work quantum) keeps task durations
/// equal under any core count, which is what the scheduling experiments
/// need from an "equal-duration CPU-bound task".
pub fn busy_task(id: TaskId, millis: u64) -> Task<()> {
    Task::new(TaskSpec::new(id, TaskKind::Simulation, 1), move || {
        let deadline = Instant::now() + Duration::from_millis(millis);
        while Instant::now() < deadline {
            std::thread::yield_now();
            std::hint::spin_loop();
        }
        Ok(())
    })
}

/// A timer-based equal-duration task (null-padded workload).
pub fn sleep_task(id: TaskId, millis: u64) -> Task<()> {
    Task::new(TaskSpec::new(id, TaskKind::Simulation, 1), move || {
        std::thread::sleep(Duration::from_millis(millis));
        Ok(())
    })
}

/// A single analysis stand-in: a diffusion map over `points` seeded
/// configurations. Its cost depends only on `points`, so it is constant
/// under strong scaling and grows under weak scaling.
pub fn analysis_task(id: TaskId, points: usize, seed: u64) -> Task<()> {
    Task::new(TaskSpec::new(id, TaskKind::Analysis, 1), move || {
        let ensemble =
            ensemble_from_seed(points, &[0.0, 0.0], 1.0, seed).map_err(|e| e.to_string())?;
        let d = pairwise_distances(&ensemble);
        let k = 8.min(points - 1).max(1);
        let scales = local_scales(&d, k).map_err(|e| e.to_string())?;
        diffusion_map(&d, &scales).map_err(|e| e.to_string())?;
        Ok(())
    })
}

/// One fully-concurrent null-workload measurement.
#[derive(Debug, Clone)]
pub struct OverheadReport {
    pub n_tasks: usize,
    /// First submission to last finish.
    pub wall_s: f64,
    /// Sum of in-task (kernel) time.
    pub task_time_sum_s: f64,
    /// wall_s minus the longest single task duration; the critical-path
    /// framework cost. Non-negative by construction for concurrent sets.
    pub overhead_s: f64,
    /// launched - submitted per task, in task id order.
    pub launch_latencies_s: Vec<f64>,
}

/// Submit `n_tasks` null tasks to a pilot that can run them all at once
/// and measure what the framework itself costs.
pub fn measure_overhead(n_tasks: usize, pilot: &mut Pilot<()>) -> OverheadReport {
    assert!(n_tasks >= 1);
    assert!(
        pilot.resource().total_slots >= n_tasks,
        "overhead measurement requires all tasks concurrent"
    );
    let base = pilot.records().keys().max().map_or(0, |m| m + 1);
    let tasks = (0..n_tasks as TaskId).map(|i| null_task(base + i)).collect();
    pilot.submit(tasks).expect("null tasks fit the pilot");
    let batch = pilot.run_to_completion().expect("pilot accepts runs");

    let submitted = batch
        .records
        .values()
        .map(|r| r.submitted)
        .fold(f64::INFINITY, f64::min);
    let finished = batch
        .records
        .values()
        .map(|r| r.finished)
        .fold(f64::NEG_INFINITY, f64::max);
    let longest = batch
        .records
        .values()
        .map(|r| r.duration())
        .fold(0.0, f64::max);
    OverheadReport {
        n_tasks,
        wall_s: finished - submitted,
        task_time_sum_s: batch.records.values().map(|r| r.duration()).sum(),
        overhead_s: (finished - submitted) - longest,
        launch_latencies_s: batch.records.values().map(|r| r.launched - r.submitted).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct OverheadSweepRow {
    pub n_tasks: usize,
    pub median_overhead_s: f64,
    pub min_overhead_s: f64,
    pub max_overhead_s: f64,
}

/// Repeat `measure_overhead` for each task count on a fresh pilot.
pub fn overhead_sweep(task_counts: &[usize], repeats: usize) -> Vec<OverheadSweepRow> {
    assert!(repeats >= 1);
    task_counts
        .iter()
        .map(|&n| {
            let mut samples: Vec<f64> = (0..repeats)
                .map(|_| {
                    let mut pilot = Pilot::new(ResourceHandle::new("overhead", n));
                    measure_overhead(n, &mut pilot).overhead_s
                })
                .collect();
            OverheadSweepRow {
                n_tasks: n,
                median_overhead_s: median_of(&mut samples),
                min_overhead_s: samples.iter().cloned().fold(f64::INFINITY, f64::min),
                max_overhead_s: samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

pub fn overhead_sweep_to_csv(rows: &[OverheadSweepRow], repeats: usize) -> String {
    let mut out = String::from(
        "# overhead_s = wall_s - max single task duration, fully-concurrent null workload\n",
    );
    writeln!(out, "# repeats = {repeats}, median reported, min/max retained").unwrap();
    out.push_str("n_tasks,median_overhead_s,min_overhead_s,max_overhead_s\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.n_tasks, r.median_overhead_s, r.min_overhead_s, r.max_overhead_s
        )
        .unwrap();
    }
    out
}

/// One stage measurement: equal-duration simulation tasks then a single
/// analysis task, walls from the records.
fn run_stage_pair(
    slots: usize,
    instances: usize,
    task_millis: u64,
    analysis_points: usize,
) -> (f64, f64) {
    let mut pilot: Pilot<()> = Pilot::new(ResourceHandle::new("scaling", slots));
    let tasks = (0..instances as TaskId)
        .map(|i| sleep_task(i, task_millis))
        .collect();
    pilot.submit(tasks).expect("tasks fit");
    let sim = pilot.run_to_completion().expect("sim stage runs");
    pilot
        .submit(vec![analysis_task(instances as TaskId, analysis_points, 7)])
        .expect("analysis fits");
    let ana = pilot.run_to_completion().expect("analysis runs");

    let sim_start = sim.records.values().map(|r| r.submitted).fold(f64::INFINITY, f64::min);
    let sim_end = sim.records.values().map(|r| r.finished).fold(f64::NEG_INFINITY, f64::max);
    let a = ana.records.values().next().expect("one analysis record");
    (sim_end - sim_start, a.finished - a.submitted)
}

#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub instances: usize,
    pub slots: usize,
    pub sim_wall_s: f64,
    pub sim_wall_min_s: f64,
    pub sim_wall_max_s: f64,
    pub analysis_wall_s: f64,
    /// T(base slots) / T(these slots); 1.0 at the base row.
    pub speedup: f64,
    /// speedup divided by the capacity growth over the base row.
    pub efficiency: f64,
}

/// Fixed workload, growing capacity. `analysis_points` controls the size
/// of the analysis input, which stays constant across rows.
pub fn strong_scaling(
    instances: usize,
    task_millis: u64,
    slot_counts: &[usize],
    analysis_points: usize,
    repeats: usize,
) -> Vec<ScalingRow> {
    assert!(repeats >= 1 && !slot_counts.is_empty());
    let mut rows: Vec<ScalingRow> = Vec::new();
    for &slots in slot_counts {
        let mut sim_samples = Vec::with_capacity(repeats);
        let mut ana_samples = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let (s, a) = run_stage_pair(slots, instances, task_millis, analysis_points);
            sim_samples.push(s);
            ana_samples.push(a);
        }
        let sim = median_of(&mut sim_samples);
        let ana = median_of(&mut ana_samples);
        rows.push(ScalingRow {
            instances,
            slots,
            sim_wall_s: sim,
            sim_wall_min_s: sim_samples.iter().cloned().fold(f64::INFINITY, f64::min),
            sim_wall_max_s: sim_samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            analysis_wall_s: ana,
            speedup: 0.0,
            efficiency: 0.0,
        });
    }
    let base_wall = rows[0].sim_wall_s;
    let base_slots = rows[0].slots as f64;
    for row in &mut rows {
        row.speedup = base_wall / row.sim_wall_s;
        row.efficiency = row.speedup / (row.slots as f64 / base_slots);
    }
    rows
}

/// Fixed instances-to-slots ratio, growing both; all simulations run
/// concurrently at every point. The analysis input grows with the
/// instance count (`frames_per_instance` structures per simulation).
pub fn weak_scaling(
    points: &[(usize, usize)],
    task_millis: u64,
    frames_per_instance: usize,
    repeats: usize,
) -> Vec<ScalingRow> {
    assert!(repeats >= 1);
    let mut rows = Vec::new();
    for &(instances, slots) in points {
        assert!(slots >= instances, "weak scaling keeps all instances concurrent");
        let mut sim_samples = Vec::with_capacity(repeats);
        let mut ana_samples = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let (s, a) =
                run_stage_pair(slots, instances, task_millis, instances * frames_per_instance);
            sim_samples.push(s);
            ana_samples.push(a);
        }
        let sim = median_of(&mut sim_samples);
        let ana = median_of(&mut ana_samples);
        rows.push(ScalingRow {
            instances,
            slots,
            sim_wall_s: sim,
            sim_wall_min_s: sim_samples.iter().cloned().fold(f64::INFINITY, f64::min),
            sim_wall_max_s: sim_samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            analysis_wall_s: ana,
            speedup: 1.0,
            efficiency: 1.0,
        });
    }
    rows
}

pub fn scaling_to_csv(rows: &[ScalingRow], repeats: usize) -> String {
    let mut out = String::from("# sim_wall_s is the median over repeats; min/max retained\n");
    writeln!(out, "# repeats = {repeats}").unwrap();
    out.push_str(
        "instances,slots,sim_wall_s,sim_wall_min_s,sim_wall_max_s,analysis_wall_s,speedup,efficiency\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.instances,
            r.slots,
            r.sim_wall_s,
            r.sim_wall_min_s,
            r.sim_wall_max_s,
            r.analysis_wall_s,
            r.speedup,
            r.efficiency
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone)]
pub struct OversubscriptionReport {
    pub n_instances: usize,
    pub capacity: usize,
    /// ceil(n_instances / capacity)
    pub waves: usize,
    pub wall_s: f64,
    pub wall_min_s: f64,
    pub wall_max_s: f64,
    /// Median wall of one capacity-sized batch of the same tasks.
    pub single_wave_wall_s: f64,
    /// wall_s / single_wave_wall_s.
    pub growth_factor: f64,
    /// n_instances / capacity: how much more work than one wave.
    pub work_growth_factor: f64,
}

/// More concurrent-eligible work than capacity: execution proceeds in
/// waves and the wall time grows roughly linearly in their number.
pub fn oversubscription_run(
    n_instances: usize,
    capacity: usize,
    task_millis: u64,
    repeats: usize,
) -> OversubscriptionReport {
    assert!(n_instances > 0 && capacity > 0 && repeats >= 1);
    let measure = |count: usize| -> f64 {
        let mut pilot: Pilot<()> = Pilot::new(ResourceHandle::new("oversub", capacity));
        let tasks = (0..count as TaskId).map(|i| busy_task(i, task_millis)).collect();
        pilot.submit(tasks).expect("single-slot tasks fit");
        let batch = pilot.run_to_completion().expect("pilot runs");
        let start = batch.records.values().map(|r| r.submitted).fold(f64::INFINITY, f64::min);
        let end = batch.records.values().map(|r| r.finished).fold(f64::NEG_INFINITY, f64::max);
        end - start
    };
    let mut walls: Vec<f64> = (0..repeats).map(|_| measure(n_instances)).collect();
    let mut single: Vec<f64> = (0..repeats).map(|_| measure(capacity.min(n_instances))).collect();
    let wall = median_of(&mut walls);
    let single_wave = median_of(&mut single);
    OversubscriptionReport {
        n_instances,
        capacity,
        waves: n_instances.div_ceil(capacity),
        wall_s: wall,
        wall_min_s: walls.iter().cloned().fold(f64::INFINITY, f64::min),
        wall_max_s: walls.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        single_wave_wall_s: single_wave,
        growth_factor: wall / single_wave,
        work_growth_factor: n_instances as f64 / capacity.min(n_instances) as f64,
    }
}

pub fn oversubscription_to_csv(r: &OversubscriptionReport, repeats: usize) -> String {
    let mut out = String::from(
        "# growth_factor = median wall / median single-wave wall; CPU-bound equal tasks\n",
    );
    writeln!(out, "# repeats = {repeats}").unwrap();
    out.push_str(
        "n_instances,capacity,waves,wall_s,wall_min_s,wall_max_s,single_wave_wall_s,growth_factor,work_growth_factor\n",
    );
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        r.n_instances,
        r.capacity,
        r.waves,
        r.wall_s,
        r.wall_min_s,
        r.wall_max_s,
        r.single_wave_wall_s,
        r.growth_factor,
        r.work_growth_factor
    )
    .unwrap();
    out
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}
