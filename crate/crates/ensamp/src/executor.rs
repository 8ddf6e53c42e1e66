//! Pilot-style bounded-capacity executor.
//!
//! A [`Pilot`] owns a FIFO queue of tasks and a fixed slot pool. It accepts
//! workloads whose aggregate slot demand is far above capacity, runs up to
//! capacity concurrently, and records per-task timings and outcomes. This
//! decouples how much work is submitted from how much hardware is held —
//! the local stand-in for a pilot/runtime layer on a batch system.
//!
//! Scheduling is greedy FIFO with first-fit backfill: the queue is scanned
//! in submission order and every task that fits in the currently free slots
//! starts; a later task overtakes an earlier one only when the earlier one
//! cannot fit. Tasks run as in-process kernel invocations, one worker
//! thread per running task, so a slot is a worker. Kernels that fail or
//! panic are recorded as task failures; the rest of the workload is
//! unaffected.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::core::{Outcome, ResourceHandle, TaskId, TaskRecord, TaskSpec};

#[derive(Debug, Error, PartialEq)]
pub enum ExecutorError {
    #[error("task {task} exceeds pilot capacity: needs {required} slots, pilot has {capacity}")]
    TaskExceedsCapacity {
        task: TaskId,
        required: usize,
        capacity: usize,
    },
    #[error("task {0} resubmitted: ids must be unique over the pilot lifetime")]
    DuplicateTask(TaskId),
    #[error("task {0} requires at least one slot")]
    ZeroSlots(TaskId),
    #[error("pilot is {0}: submission requires a pending or active pilot")]
    InvalidState(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotState {
    Pending,
    Active,
    Done,
    Canceled,
}

impl PilotState {
    fn name(self) -> &'static str {
        match self {
            PilotState::Pending => "pending",
            PilotState::Active => "active",
            PilotState::Done => "done",
            PilotState::Canceled => "canceled",
        }
    }
}

/// A task spec plus the kernel to invoke for it. The kernel returns the
/// task's output or a failure reason.
pub struct Task<T> {
    pub spec: TaskSpec,
    work: Box<dyn FnOnce() -> Result<T, String> + Send + 'static>,
}

impl<T> Task<T> {
    pub fn new(
        spec: TaskSpec,
        work: impl FnOnce() -> Result<T, String> + Send + 'static,
    ) -> Self {
        Task {
            spec,
            work: Box::new(work),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubmitAck {
    pub accepted: usize,
}

/// Records and successful outputs of one drain of the queue.
pub struct RunBatch<T> {
    pub records: BTreeMap<TaskId, TaskRecord>,
    pub outputs: BTreeMap<TaskId, T>,
}

struct QueuedTask<T> {
    spec: TaskSpec,
    submitted: f64,
    work: Box<dyn FnOnce() -> Result<T, String> + Send + 'static>,
}

struct WorkerDone<T> {
    record: TaskRecord,
    output: Option<T>,
}

pub struct Pilot<T> {
    resource: ResourceHandle,
    state: PilotState,
    quantum: Duration,
    epoch: Instant,
    queue: VecDeque<QueuedTask<T>>,
    records: BTreeMap<TaskId, TaskRecord>,
}

impl<T: Send + 'static> Pilot<T> {
    pub fn new(resource: ResourceHandle) -> Self {
        Pilot {
            resource,
            state: PilotState::Pending,
            quantum: Duration::from_millis(1),
            epoch: Instant::now(),
            queue: VecDeque::new(),
            records: BTreeMap::new(),
        }
    }

    /// Polling quantum: the upper bound on how long a runnable queued task
    /// waits once slots free up. Default 1 ms.
    pub fn with_quantum(mut self, quantum: Duration) -> Self {
        self.quantum = quantum;
        self
    }

    pub fn state(&self) -> PilotState {
        self.state
    }

    pub fn resource(&self) -> &ResourceHandle {
        &self.resource
    }

    /// Seconds since the pilot's clock epoch; every timestamp in this
    /// pilot's records comes from this one monotonic clock.
    pub fn now(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64()
    }

    /// All records accumulated over the pilot lifetime.
    pub fn records(&self) -> &BTreeMap<TaskId, TaskRecord> {
        &self.records
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// Append tasks to the queue in submission order. The batch is checked
    /// first and rejected as a whole if any task cannot ever run.
    pub fn submit(&mut self, tasks: Vec<Task<T>>) -> Result<SubmitAck, ExecutorError> {
        match self.state {
            PilotState::Pending | PilotState::Active => {}
            s => return Err(ExecutorError::InvalidState(s.name())),
        }
        for t in &tasks {
            if t.spec.slots_required == 0 {
                return Err(ExecutorError::ZeroSlots(t.spec.id));
            }
            if t.spec.slots_required > self.resource.total_slots {
                return Err(ExecutorError::TaskExceedsCapacity {
                    task: t.spec.id,
                    required: t.spec.slots_required,
                    capacity: self.resource.total_slots,
                });
            }
            let queued_dup = self.queue.iter().any(|q| q.spec.id == t.spec.id);
            if queued_dup || self.records.contains_key(&t.spec.id) {
                return Err(ExecutorError::DuplicateTask(t.spec.id));
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for t in &tasks {
            if !ids.insert(t.spec.id) {
                return Err(ExecutorError::DuplicateTask(t.spec.id));
            }
        }
        let accepted = tasks.len();
        let submitted = self.now();
        for t in tasks {
            self.queue.push_back(QueuedTask {
                spec: t.spec,
                submitted,
                work: t.work,
            });
        }
        Ok(SubmitAck { accepted })
    }

    /// Drain the queue: run every queued task to a terminal outcome and
    /// return this batch's records and outputs. The pilot stays active
    /// afterwards and accepts further submissions.
    pub fn run_to_completion(&mut self) -> Result<RunBatch<T>, ExecutorError> {
        match self.state {
            PilotState::Pending | PilotState::Active => {}
            s => return Err(ExecutorError::InvalidState(s.name())),
        }
        self.state = PilotState::Active;

        let (tx, rx) = mpsc::channel::<WorkerDone<T>>();
        let mut free = self.resource.total_slots;
        let mut running = 0usize;
        let mut batch_records = BTreeMap::new();
        let mut outputs = BTreeMap::new();

        let mut complete = |done: WorkerDone<T>,
                            free: &mut usize,
                            running: &mut usize,
                            batch: &mut BTreeMap<TaskId, TaskRecord>,
                            outs: &mut BTreeMap<TaskId, T>| {
            *free += done.record.slots;
            *running -= 1;
            if let Some(v) = done.output {
                outs.insert(done.record.spec_id, v);
            }
            self.records.insert(done.record.spec_id, done.record.clone());
            batch.insert(done.record.spec_id, done.record);
        };

        loop {
            // First-fit scan: start everything that fits, queue order.
            let mut idx = 0;
            while idx < self.queue.len() {
                if self.queue[idx].spec.slots_required <= free {
                    let qt = self.queue.remove(idx).expect("index in bounds");
                    free -= qt.spec.slots_required;
                    running += 1;
                    let launched = self.epoch.elapsed().as_secs_f64();
                    spawn_worker(qt, launched, self.epoch, tx.clone());
                } else {
                    idx += 1;
                }
            }

            if running == 0 && self.queue.is_empty() {
                break;
            }

            match rx.recv_timeout(self.quantum) {
                Ok(done) => {
                    complete(done, &mut free, &mut running, &mut batch_records, &mut outputs);
                    while let Ok(done) = rx.try_recv() {
                        complete(done, &mut free, &mut running, &mut batch_records, &mut outputs);
                    }
                }
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => unreachable!("sender held locally"),
            }
        }

        Ok(RunBatch {
            records: batch_records,
            outputs,
        })
    }

    /// Drop all queued work and mark the pilot canceled. Already-completed
    /// records are kept; queued tasks never receive a record.
    pub fn cancel(&mut self) {
        self.queue.clear();
        self.state = PilotState::Canceled;
    }

    /// Mark the pilot done; no further submissions are accepted.
    pub fn finish(&mut self) {
        if matches!(self.state, PilotState::Pending | PilotState::Active) {
            self.state = PilotState::Done;
        }
    }
}

fn spawn_worker<T: Send + 'static>(
    qt: QueuedTask<T>,
    launched: f64,
    epoch: Instant,
    tx: mpsc::Sender<WorkerDone<T>>,
) {
    let spec = qt.spec;
    let submitted = qt.submitted;
    let work = qt.work;
    thread::spawn(move || {
        let started = epoch.elapsed().as_secs_f64();
        let result = catch_unwind(AssertUnwindSafe(work));
        let finished = epoch.elapsed().as_secs_f64();
        let (outcome, output) = match result {
            Ok(Ok(v)) => (Outcome::Success, Some(v)),
            Ok(Err(reason)) => (Outcome::Failure(reason), None),
            Err(panic) => (Outcome::Failure(panic_reason(panic)), None),
        };
        let record = TaskRecord {
            spec_id: spec.id,
            kind: spec.kind,
            slots: spec.slots_required,
            submitted,
            launched,
            started,
            finished,
            outcome,
        };
        // The receiver only disappears if the coordinator is gone; nothing
        // left to report to in that case.
        let _ = tx.send(WorkerDone { record, output });
    });
}

fn panic_reason(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("kernel panicked: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("kernel panicked: {s}")
    } else {
        "kernel panicked".to_string()
    }
}

/// Maximum number of tasks running at once, from start/finish timestamps.
/// Intervals are half-open, so a task finishing exactly when another starts
/// does not overlap it.
pub fn max_concurrency<'a>(records: impl IntoIterator<Item = &'a TaskRecord>) -> usize {
    sweep_peak(records, |_| 1)
}

/// Peak of the slot-usage step function; the capacity invariant is
/// `peak_slot_usage(records) <= total_slots` for any completed run.
pub fn peak_slot_usage<'a>(records: impl IntoIterator<Item = &'a TaskRecord>) -> usize {
    sweep_peak(records, |r| r.slots)
}

fn sweep_peak<'a>(
    records: impl IntoIterator<Item = &'a TaskRecord>,
    weight: impl Fn(&TaskRecord) -> usize,
) -> usize {
    let mut events: Vec<(f64, i64)> = Vec::new();
    for r in records {
        let w = weight(r) as i64;
        events.push((r.started, w));
        events.push((r.finished, -w));
    }
    // Ends sort before starts at equal timestamps.
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut level = 0i64;
    let mut peak = 0i64;
    for (_, delta) in events {
        level += delta;
        peak = peak.max(level);
    }
    peak.max(0) as usize
}

/// CSV export of task records:
/// `task_id,kind,slots,submitted,launched,started,finished,outcome`.
/// Failure reasons have commas and newlines flattened so rows stay simple.
pub fn records_to_csv<'a>(records: impl IntoIterator<Item = &'a TaskRecord>) -> String {
    let mut out = String::from("task_id,kind,slots,submitted,launched,started,finished,outcome\n");
    for r in records {
        let outcome = match &r.outcome {
            Outcome::Success => "success".to_string(),
            Outcome::Failure(reason) => {
                format!("failure: {}", reason.replace([',', '\n'], ";"))
            }
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.spec_id, r.kind, r.slots, r.submitted, r.launched, r.started, r.finished, outcome
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::TaskKind;
    use std::time::Duration;

    fn sleep_task(id: TaskId, slots: usize, millis: u64) -> Task<()> {
        Task::new(
            TaskSpec::new(id, TaskKind::Simulation, slots),
            move || {
                thread::sleep(Duration::from_millis(millis));
                Ok(())
            },
        )
    }

    fn pilot(slots: usize) -> Pilot<()> {
        Pilot::new(ResourceHandle::new("test", slots))
    }

    #[test]
    fn oversubmission_respects_capacity() {
        let mut p = pilot(32);
        let tasks: Vec<_> = (0..128).map(|i| sleep_task(i, 1, 1)).collect();
        assert_eq!(p.submit(tasks).unwrap().accepted, 128);
        let batch = p.run_to_completion().unwrap();
        assert_eq!(batch.records.len(), 128);
        assert!(batch.records.values().all(|r| r.outcome.is_success()));
        assert!(peak_slot_usage(batch.records.values()) <= 32);
    }

    #[test]
    fn oversized_task_rejected() {
        let mut p = pilot(32);
        let err = p.submit(vec![sleep_task(0, 33, 1)]).unwrap_err();
        assert_eq!(
            err,
            ExecutorError::TaskExceedsCapacity {
                task: 0,
                required: 33,
                capacity: 32
            }
        );
        assert!(err.to_string().contains("exceeds pilot capacity"));
    }

    #[test]
    fn empty_submission_is_noop() {
        let mut p = pilot(4);
        assert_eq!(p.submit(vec![]).unwrap().accepted, 0);
        assert_eq!(p.queued(), 0);
    }

    #[test]
    fn four_tasks_two_slots_two_waves() {
        // Brute force over feasible schedules: 4 equal tasks on 2 slots is
        // always exactly 2 waves, so makespan is 2T and concurrency 2.
        let t_ms = 25;
        let mut p = pilot(2);
        p.submit((0..4).map(|i| sleep_task(i, 1, t_ms)).collect())
            .unwrap();
        let batch = p.run_to_completion().unwrap();
        let start = batch
            .records
            .values()
            .map(|r| r.submitted)
            .fold(f64::MAX, f64::min);
        let end = batch
            .records
            .values()
            .map(|r| r.finished)
            .fold(f64::MIN, f64::max);
        let makespan = end - start;
        let two_waves = 2.0 * t_ms as f64 / 1000.0;
        assert!(makespan >= two_waves - 1e-3, "makespan {makespan}");
        assert!(makespan < two_waves + 0.15, "makespan {makespan}");
        assert_eq!(max_concurrency(batch.records.values()), 2);
    }

    #[test]
    fn single_task_makespan_is_task_duration() {
        let mut p = pilot(8);
        p.submit(vec![sleep_task(0, 1, 20)]).unwrap();
        let batch = p.run_to_completion().unwrap();
        let r = &batch.records[&0];
        assert!(r.duration() >= 0.019);
        assert!(r.finished - r.submitted < 0.15);
    }

    #[test]
    fn wide_task_then_two_narrow() {
        // Feasible schedules for [2-slot, 1-slot, 1-slot] on 2 slots: the
        // wide task runs alone, the narrow pair runs together after it.
        let mut p = pilot(2);
        p.submit(vec![
            sleep_task(0, 2, 20),
            sleep_task(1, 1, 20),
            sleep_task(2, 1, 20),
        ])
        .unwrap();
        let batch = p.run_to_completion().unwrap();
        let wide = &batch.records[&0];
        let a = &batch.records[&1];
        let b = &batch.records[&2];
        assert!(a.started >= wide.finished);
        assert!(b.started >= wide.finished);
        assert!(a.started < b.finished && b.started < a.finished, "narrow pair overlaps");
        let slot_seconds: f64 = batch
            .records
            .values()
            .map(|r| r.slots as f64 * r.duration())
            .sum();
        assert!((slot_seconds - 0.08).abs() < 0.05, "slot-seconds {slot_seconds}");
        assert!(peak_slot_usage(batch.records.values()) <= 2);
    }

    #[test]
    fn backfill_overtakes_blocked_wide_task() {
        // Queue [1-slot, 2-slot, 1-slot] on 2 slots: the wide task cannot
        // fit next to the running narrow one, so the trailing narrow task
        // backfills ahead of it.
        let mut p = pilot(2);
        p.submit(vec![
            sleep_task(0, 1, 30),
            sleep_task(1, 2, 30),
            sleep_task(2, 1, 30),
        ])
        .unwrap();
        let batch = p.run_to_completion().unwrap();
        let narrow_first = &batch.records[&0];
        let wide = &batch.records[&1];
        let backfilled = &batch.records[&2];
        assert!(backfilled.started < wide.started, "backfill happened");
        assert!(backfilled.started < narrow_first.finished, "ran alongside head task");
        assert!(wide.started >= narrow_first.finished.min(backfilled.finished));
        assert!(peak_slot_usage(batch.records.values()) <= 2);
    }

    #[test]
    fn failing_kernel_recorded_other_tasks_unaffected() {
        let mut p: Pilot<u32> = Pilot::new(ResourceHandle::new("test", 2));
        p.submit(vec![
            Task::new(TaskSpec::new(0, TaskKind::Simulation, 1), || Ok(7)),
            Task::new(TaskSpec::new(1, TaskKind::Simulation, 1), || {
                Err("kernel exploded".to_string())
            }),
            Task::new(TaskSpec::new(2, TaskKind::Simulation, 1), || {
                panic!("integration diverged")
            }),
        ])
        .unwrap();
        let batch = p.run_to_completion().unwrap();
        assert_eq!(batch.records[&0].outcome, Outcome::Success);
        assert_eq!(
            batch.records[&1].outcome,
            Outcome::Failure("kernel exploded".into())
        );
        assert!(matches!(&batch.records[&2].outcome, Outcome::Failure(r) if r.contains("diverged")));
        assert_eq!(batch.outputs.get(&0), Some(&7));
        assert!(!batch.outputs.contains_key(&1));
        assert!(batch.records.values().all(|r| r.timestamps_ordered()));
    }

    #[test]
    fn outcomes_independent_of_capacity() {
        let run = |slots: usize| -> Vec<(TaskId, bool)> {
            let mut p: Pilot<()> = Pilot::new(ResourceHandle::new("test", slots));
            let tasks = (0..12)
                .map(|i| {
                    Task::new(TaskSpec::new(i, TaskKind::Null, 1), move || {
                        if i % 3 == 0 {
                            Err(format!("task {i} fails"))
                        } else {
                            Ok(())
                        }
                    })
                })
                .collect();
            p.submit(tasks).unwrap();
            let batch = p.run_to_completion().unwrap();
            batch
                .records
                .iter()
                .map(|(id, r)| (*id, r.outcome.is_success()))
                .collect()
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn repeated_batches_accumulate_records() {
        let mut p = pilot(2);
        p.submit(vec![sleep_task(0, 1, 1)]).unwrap();
        p.run_to_completion().unwrap();
        p.submit(vec![sleep_task(1, 1, 1)]).unwrap();
        p.run_to_completion().unwrap();
        assert_eq!(p.records().len(), 2);
        assert_eq!(p.state(), PilotState::Active);
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut p = pilot(2);
        p.submit(vec![sleep_task(0, 1, 1)]).unwrap();
        assert_eq!(
            p.submit(vec![sleep_task(0, 1, 1)]).unwrap_err(),
            ExecutorError::DuplicateTask(0)
        );
    }

    #[test]
    fn canceled_pilot_rejects_submissions() {
        let mut p = pilot(2);
        p.cancel();
        assert_eq!(
            p.submit(vec![sleep_task(0, 1, 1)]).unwrap_err(),
            ExecutorError::InvalidState("canceled")
        );
    }

    #[test]
    fn sweep_line_matches_pairwise_oracle() {
        // Oracle: for each record, count records overlapping at its start.
        fn oracle(records: &[TaskRecord]) -> usize {
            records
                .iter()
                .map(|r| {
                    records
                        .iter()
                        .filter(|o| o.started <= r.started && r.started < o.finished)
                        .map(|o| o.slots)
                        .sum::<usize>()
                })
                .max()
                .unwrap_or(0)
        }
        let mut rng_state = 88172645463325252u64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            rng_state
        };
        for _ in 0..50 {
            let n = (next() % 12 + 1) as usize;
            let records: Vec<TaskRecord> = (0..n)
                .map(|i| {
                    let start = (next() % 1000) as f64 / 100.0;
                    let dur = (next() % 500 + 1) as f64 / 100.0;
                    TaskRecord {
                        spec_id: i as TaskId,
                        kind: TaskKind::Null,
                        slots: (next() % 3 + 1) as usize,
                        submitted: start,
                        launched: start,
                        started: start,
                        finished: start + dur,
                        outcome: Outcome::Success,
                    }
                })
                .collect();
            assert_eq!(peak_slot_usage(records.iter()), oracle(&records));
        }
    }

    #[test]
    fn concurrency_of_serial_and_overlapping_records() {
        let rec = |start: f64, finish: f64| TaskRecord {
            spec_id: (start * 10.0) as TaskId,
            kind: TaskKind::Null,
            slots: 1,
            submitted: start,
            launched: start,
            started: start,
            finished: finish,
            outcome: Outcome::Success,
        };
        let serial = [rec(0.0, 1.0), rec(1.0, 2.0)];
        assert_eq!(max_concurrency(serial.iter()), 1);
        let overlapping = [rec(0.0, 2.0), rec(1.0, 3.0)];
        assert_eq!(max_concurrency(overlapping.iter()), 2);
    }

    #[test]
    fn csv_schema() {
        let r = TaskRecord {
            spec_id: 3,
            kind: TaskKind::Null,
            slots: 1,
            submitted: 0.0,
            launched: 0.5,
            started: 0.5,
            finished: 1.0,
            outcome: Outcome::Failure("a, b\nc".into()),
        };
        let csv = records_to_csv([&r].into_iter().cloned().collect::<Vec<_>>().iter());
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "task_id,kind,slots,submitted,launched,started,finished,outcome"
        );
        assert_eq!(lines.next().unwrap(), "3,null,1,0,0.5,0.5,1,failure: a; b;c");
    }
}
