//! Command-line entry point: run workflows from the two configuration
//! files, run the measurement experiments, write machine-readable reports.
//!
//! Exit codes: 0 success, 1 configuration/usage error (the message names
//! the file and key), 2 runtime failure (partial reports are still
//! written).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use ensamp::coco::{coco_analyze, coco_to_csv};
use ensamp::config::{
    parse_kernel_config, parse_resource_config, KernelConfig, ResourceConfig, WorkflowKind,
};
use ensamp::core::write_ensemble_text;
use ensamp::dynamics::{propagate, LangevinParams, Potential, write_trajectory_text};
use ensamp::executor::{records_to_csv, Pilot};
use ensamp::lsdmap::{diffusion_map, dmap_to_csv, local_scales, pairwise_distances};
use ensamp::metrics::{
    overhead_sweep, overhead_sweep_to_csv, oversubscription_run, oversubscription_to_csv,
    scaling_to_csv, strong_scaling, weak_scaling,
};
use ensamp::workflow::{plain_md_baseline, SalWorkflow, StageOutput, WorkflowReport};

#[derive(Parser)]
#[command(name = "ensamp", version, about = "Ensemble sampling workflows on a local pilot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an adaptive sampling workflow described by the two config files.
    Run {
        #[arg(long)]
        resource: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed override (flag beats ENSAMP_SEED beats kernel.cfg).
        #[arg(long)]
        seed: Option<u64>,
        /// Overwrite an existing non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Plain-MD comparison arm: same start, same step budget, no reseeding.
    Baseline {
        #[arg(long)]
        resource: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Total step budget; defaults to iterations x replicas x n_steps.
        #[arg(long)]
        budget_steps: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Measure framework overhead with fully-concurrent null workloads.
    Overhead {
        /// Task counts to sweep, comma separated (e.g. 4,16,64).
        #[arg(long, default_value = "4,8,16,32,64")]
        tasks: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Fixed workload, growing capacity.
    ScaleStrong {
        #[arg(long, default_value_t = 8)]
        instances: usize,
        /// Capacities to sweep, comma separated.
        #[arg(long, default_value = "1,2,4,8")]
        slots: String,
        #[arg(long, default_value_t = 30)]
        task_ms: u64,
        /// Size of the (fixed) analysis input.
        #[arg(long)]
        analysis_points: Option<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Fixed instances-to-slots ratio, growing both.
    ScaleWeak {
        /// instances:slots pairs, comma separated (e.g. 4:4,8:8,16:16).
        #[arg(long, default_value = "4:4,8:8,16:16")]
        points: String,
        #[arg(long, default_value_t = 40)]
        task_ms: u64,
        /// Analysis input grows by this many structures per instance.
        #[arg(long, default_value_t = 16)]
        frames_per_instance: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// More work than capacity: waves of execution.
    Oversub {
        #[arg(long, default_value_t = 8)]
        instances: usize,
        #[arg(long, default_value_t = 2)]
        slots: usize,
        #[arg(long, default_value_t = 30)]
        task_ms: u64,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Tabulate a toy potential and a short sample trajectory on it.
    DemoPotential {
        #[arg(long, default_value = "double_well_1d")]
        potential: String,
        #[arg(long, default_value_t = 4.0)]
        barrier: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

enum CliError {
    /// Bad configuration or arguments; exit 1.
    Config(String),
    /// The workload itself failed; exit 2. Partial reports already written.
    Runtime(String),
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems exit 1, including unknown flags; clap prints
            // its usage text. --help and --version stay exit 0.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            resource,
            kernel,
            out,
            seed,
            force,
        } => cmd_run(&resource, &kernel, &out, seed, force),
        Command::Baseline {
            resource,
            kernel,
            out,
            seed,
            budget_steps,
            force,
        } => cmd_baseline(&resource, &kernel, &out, seed, budget_steps, force),
        Command::Overhead {
            tasks,
            repeats,
            out,
            force,
        } => cmd_overhead(&tasks, repeats, &out, force),
        Command::ScaleStrong {
            instances,
            slots,
            task_ms,
            analysis_points,
            repeats,
            out,
            force,
        } => cmd_scale_strong(instances, &slots, task_ms, analysis_points, repeats, &out, force),
        Command::ScaleWeak {
            points,
            task_ms,
            frames_per_instance,
            repeats,
            out,
            force,
        } => cmd_scale_weak(&points, task_ms, frames_per_instance, repeats, &out, force),
        Command::Oversub {
            instances,
            slots,
            task_ms,
            repeats,
            out,
            force,
        } => cmd_oversub(instances, slots, task_ms, repeats, &out, force),
        Command::DemoPotential {
            potential,
            barrier,
            seed,
            out,
            force,
        } => cmd_demo_potential(&potential, barrier, seed, &out, force),
    }
}

/// Output directory guard: created if absent, never silently overwritten.
struct OutputDir {
    path: PathBuf,
}

impl OutputDir {
    fn prepare(path: &Path, force: bool) -> Result<Self, CliError> {
        if path.exists() {
            let occupied = fs::read_dir(path)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?
                .next()
                .is_some();
            if occupied && !force {
                return Err(config_err(format!(
                    "output directory {} is not empty; pass --force to overwrite",
                    path.display()
                )));
            }
        } else {
            fs::create_dir_all(path)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        }
        Ok(OutputDir {
            path: path.to_path_buf(),
        })
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let target = self.path.join(name);
        fs::write(&target, contents)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", target.display())))?;
        Ok(target)
    }

    fn manifest(
        &self,
        command: &str,
        seed: Option<u64>,
        configs: serde_json::Value,
        args: serde_json::Value,
    ) -> Result<(), CliError> {
        let doc = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "configs": configs,
            "args": args,
        });
        self.write(
            "manifest.json",
            &serde_json::to_string_pretty(&doc).expect("manifest serializes"),
        )?;
        Ok(())
    }
}

fn load_resource(path: &Path) -> Result<ResourceConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    parse_resource_config(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn load_kernel(path: &Path) -> Result<KernelConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    parse_kernel_config(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

/// --seed flag, then ENSAMP_SEED, then the kernel config's seed.
fn resolve_seed(flag: Option<u64>, kernel: &KernelConfig) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("ENSAMP_SEED") {
        Ok(v) => v
            .parse::<u64>()
            .map_err(|_| config_err(format!("ENSAMP_SEED: expected an integer, found `{v}`"))),
        Err(_) => Ok(kernel.md.seed),
    }
}

fn config_manifest(
    resource_path: &Path,
    resource: &ResourceConfig,
    kernel_path: &Path,
    kernel: &KernelConfig,
) -> serde_json::Value {
    serde_json::json!({
        "resource": { "path": resource_path.display().to_string(), "resolved": resource.to_text() },
        "kernel": { "path": kernel_path.display().to_string(), "resolved": kernel.to_text() },
    })
}

/// Write the workflow outputs shared by `run` and `baseline`.
fn write_workflow_outputs(
    dir: &OutputDir,
    report: &WorkflowReport,
    pilot: &Pilot<StageOutput>,
) -> Result<(), CliError> {
    dir.write("final_ensemble.txt", &write_ensemble_text(&report.final_ensemble))?;
    dir.write("report.json", &report.to_json("final_ensemble.txt"))?;
    dir.write("task_records.csv", &records_to_csv(pilot.records().values()))?;
    Ok(())
}

fn cmd_run(
    resource_path: &Path,
    kernel_path: &Path,
    out: &Path,
    seed_flag: Option<u64>,
    force: bool,
) -> Result<(), CliError> {
    let resource = load_resource(resource_path)?;
    let kernel = load_kernel(kernel_path)?;
    let seed = resolve_seed(seed_flag, &kernel)?;
    let dir = OutputDir::prepare(out, force)?;
    dir.manifest(
        "run",
        Some(seed),
        config_manifest(resource_path, &resource, kernel_path, &kernel),
        serde_json::json!({}),
    )?;

    let mut pilot: Pilot<StageOutput> = Pilot::new(resource.handle());
    let mut wf = SalWorkflow::new(kernel.clone(), Some(seed))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    match wf.run(&mut pilot) {
        Ok(report) => {
            write_workflow_outputs(&dir, &report, &pilot)?;
            write_analysis_csv(&dir, &kernel, &wf)?;
            println!(
                "{} finished: {} iterations, {} total steps, final ensemble of {}",
                kernel.workflow.as_str(),
                report.iterations.len(),
                report.total_steps,
                report.final_ensemble.len()
            );
            Ok(())
        }
        Err(e) => {
            if let Some(partial) = e.partial_report() {
                write_workflow_outputs(&dir, partial, &pilot)?;
            }
            Err(CliError::Runtime(e.to_string()))
        }
    }
}

/// Final-state analysis export: the diffusion map of the final ensemble,
/// or the complementary-coordinates model of the accumulated frames.
fn write_analysis_csv(
    dir: &OutputDir,
    kernel: &KernelConfig,
    wf: &SalWorkflow,
) -> Result<(), CliError> {
    match kernel.workflow {
        WorkflowKind::Dmdmd => {
            let distances = pairwise_distances(&wf.ensemble);
            let k = kernel
                .dmdmd
                .num_neighbors_for_local_scale
                .min(wf.ensemble.len() - 1)
                .max(1);
            if let Ok(scales) = local_scales(&distances, k) {
                if let Ok(dmap) = diffusion_map(&distances, &scales) {
                    dir.write("analysis.csv", &dmap_to_csv(&dmap))?;
                }
            }
        }
        WorkflowKind::Cocomd => {
            if let Ok((model, _)) = coco_analyze(
                &wf.frame_store,
                kernel.coco.projection_dims,
                kernel.coco.bins_per_dim,
                kernel.coco.n_new_structures,
            ) {
                dir.write("analysis.csv", &coco_to_csv(&model))?;
            }
        }
    }
    Ok(())
}

fn cmd_baseline(
    resource_path: &Path,
    kernel_path: &Path,
    out: &Path,
    seed_flag: Option<u64>,
    budget_steps: Option<u64>,
    force: bool,
) -> Result<(), CliError> {
    let resource = load_resource(resource_path)?;
    let kernel = load_kernel(kernel_path)?;
    let seed = resolve_seed(seed_flag, &kernel)?;
    let budget = budget_steps.unwrap_or(
        kernel.num_iterations as u64 * kernel.num_replicas as u64 * kernel.md.n_steps as u64,
    );
    let dir = OutputDir::prepare(out, force)?;
    dir.manifest(
        "baseline",
        Some(seed),
        config_manifest(resource_path, &resource, kernel_path, &kernel),
        serde_json::json!({ "budget_steps": budget }),
    )?;

    let mut pilot: Pilot<StageOutput> = Pilot::new(resource.handle());
    match plain_md_baseline(&kernel, &mut pilot, Some(seed), budget) {
        Ok(baseline) => {
            write_workflow_outputs(&dir, &baseline.report, &pilot)?;
            println!(
                "baseline finished: {} steps across {} replicas",
                baseline.report.total_steps,
                baseline.report.final_ensemble.len()
            );
            Ok(())
        }
        Err(e) => {
            if let Some(partial) = e.partial_report() {
                write_workflow_outputs(&dir, partial, &pilot)?;
            }
            Err(CliError::Runtime(e.to_string()))
        }
    }
}

fn parse_count_list(raw: &str, flag: &str) -> Result<Vec<usize>, CliError> {
    let values: Result<Vec<usize>, _> = raw.split(',').map(|t| t.trim().parse()).collect();
    match values {
        Ok(v) if !v.is_empty() && v.iter().all(|&x| x >= 1) => Ok(v),
        _ => Err(config_err(format!(
            "--{flag}: expected a comma-separated list of positive integers, found `{raw}`"
        ))),
    }
}

fn cmd_overhead(tasks: &str, repeats: usize, out: &Path, force: bool) -> Result<(), CliError> {
    let counts = parse_count_list(tasks, "tasks")?;
    if repeats == 0 {
        return Err(config_err("--repeats: must be at least 1"));
    }
    let dir = OutputDir::prepare(out, force)?;
    dir.manifest(
        "overhead",
        None,
        serde_json::json!({}),
        serde_json::json!({ "tasks": counts, "repeats": repeats }),
    )?;
    let rows = overhead_sweep(&counts, repeats);
    dir.write("overhead.csv", &overhead_sweep_to_csv(&rows, repeats))?;
    for r in &rows {
        println!(
            "{} null tasks: median overhead {:.6}s (min {:.6}, max {:.6})",
            r.n_tasks, r.median_overhead_s, r.min_overhead_s, r.max_overhead_s
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_scale_strong(
    instances: usize,
    slots: &str,
    task_ms: u64,
    analysis_points: Option<usize>,
    repeats: usize,
    out: &Path,
    force: bool,
) -> Result<(), CliError> {
    let slot_counts = parse_count_list(slots, "slots")?;
    if instances == 0 || repeats == 0 {
        return Err(config_err("--instances and --repeats must be at least 1"));
    }
    let analysis_points = analysis_points.unwrap_or(instances * 16);
    let dir = OutputDir::prepare(out, force)?;
    dir.manifest(
        "scale-strong",
        None,
        serde_json::json!({}),
        serde_json::json!({
            "instances": instances, "slots": slot_counts, "task_ms": task_ms,
            "analysis_points": analysis_points, "repeats": repeats,
        }),
    )?;
    let rows = strong_scaling(instances, task_ms, &slot_counts, analysis_points, repeats);
    dir.write("strong_scaling.csv", &scaling_to_csv(&rows, repeats))?;
    for r in &rows {
        println!(
            "{} slots: sim {:.4}s analysis {:.4}s speedup {:.2} efficiency {:.2}",
            r.slots, r.sim_wall_s, r.analysis_wall_s, r.speedup, r.efficiency
        );
    }
    Ok(())
}

fn cmd_scale_weak(
    points: &str,
    task_ms: u64,
    frames_per_instance: usize,
    repeats: usize,
    out: &Path,
    force: bool,
) -> Result<(), CliError> {
    let mut pairs = Vec::new();
    for tok in points.split(',') {
        let parts: Vec<&str> = tok.trim().split(':').collect();
        let pair = match parts.as_slice() {
            [a, b] => a.parse::<usize>().ok().zip(b.parse::<usize>().ok()),
            _ => None,
        };
        match pair {
            Some((instances, slots)) if instances >= 1 && slots >= instances => {
                pairs.push((instances, slots))
            }
            _ => {
                return Err(config_err(format!(
                    "--points: expected `instances:slots` with slots >= instances, found `{tok}`"
                )))
            }
        }
    }
    if repeats == 0 {
        return Err(config_err("--repeats: must be at least 1"));
    }
    let dir = OutputDir::prepare(out, force)?;
    dir.manifest(
        "scale-weak",
        None,
        serde_json::json!({}),
        serde_json::json!({
            "points": points, "task_ms": task_ms,
            "frames_per_instance": frames_per_instance, "repeats": repeats,
        }),
    )?;
    let rows = weak_scaling(&pairs, task_ms, frames_per_instance, repeats);
    dir.write("weak_scaling.csv", &scaling_to_csv(&rows, repeats))?;
    for r in &rows {
        println!(
            "{} instances on {} slots: sim {:.4}s analysis {:.4}s",
            r.instances, r.slots, r.sim_wall_s, r.analysis_wall_s
        );
    }
    Ok(())
}

fn cmd_oversub(
    instances: usize,
    slots: usize,
    task_ms: u64,
    repeats: usize,
    out: &Path,
    force: bool,
) -> Result<(), CliError> {
    if instances == 0 || slots == 0 || repeats == 0 {
        return Err(config_err("--instances, --slots and --repeats must be at least 1"));
    }
    let dir = OutputDir::prepare(out, force)?;
    dir.manifest(
        "oversub",
        None,
        serde_json::json!({}),
        serde_json::json!({
            "instances": instances, "slots": slots, "task_ms": task_ms, "repeats": repeats,
        }),
    )?;
    let report = oversubscription_run(instances, slots, task_ms, repeats);
    dir.write("oversubscription.csv", &oversubscription_to_csv(&report, repeats))?;
    println!(
        "{} tasks on {} slots: {} waves, wall {:.4}s = {:.2}x single wave (work grew {:.2}x)",
        report.n_instances,
        report.capacity,
        report.waves,
        report.wall_s,
        report.growth_factor,
        report.work_growth_factor
    );
    Ok(())
}

fn cmd_demo_potential(
    name: &str,
    barrier: f64,
    seed_flag: Option<u64>,
    out: &Path,
    force: bool,
) -> Result<(), CliError> {
    if barrier <= 0.0 {
        return Err(config_err("--barrier: must be positive"));
    }
    let potential = Potential::from_name(name, barrier)
        .map_err(|_| config_err(format!("--potential: unknown potential `{name}`")))?;
    let seed = seed_flag.unwrap_or(42);
    let dir = OutputDir::prepare(out, force)?;
    dir.manifest(
        "demo-potential",
        Some(seed),
        serde_json::json!({}),
        serde_json::json!({ "potential": name, "barrier": barrier }),
    )?;

    // Energy tabulated over a plotting window around the interesting parts.
    let mut csv = String::new();
    match potential.dim() {
        1 => {
            csv.push_str("x,energy\n");
            let (lo, hi, n) = (-2.0, 2.0, 401);
            for i in 0..n {
                let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                csv.push_str(&format!("{},{}\n", x, potential.energy(&[x])));
            }
        }
        _ => {
            csv.push_str("x,y,energy\n");
            let (xlo, xhi, ylo, yhi, n) = match potential {
                Potential::MuellerBrown => (-1.8, 1.2, -0.5, 2.2, 121),
                _ => (-2.0, 2.0, -2.0, 2.0, 121),
            };
            for i in 0..n {
                for j in 0..n {
                    let x = xlo + (xhi - xlo) * i as f64 / (n - 1) as f64;
                    let y = ylo + (yhi - ylo) * j as f64 / (n - 1) as f64;
                    csv.push_str(&format!("{},{},{}\n", x, y, potential.energy(&[x, y])));
                }
            }
        }
    }
    dir.write("potential.csv", &csv)?;

    // A short sample trajectory from the canonical start.
    let replica = ensamp::core::Replica::new(0, potential.default_start(), 1.0);
    let params = LangevinParams::new(20_000, 1e-4, 1.0, 1.0, 200);
    match propagate(&replica, &potential, &params, seed) {
        Ok(traj) => {
            dir.write("trajectory.txt", &write_trajectory_text(&traj, 1.0))?;
        }
        Err(e) => return Err(CliError::Runtime(e.to_string())),
    }
    println!("wrote potential.csv and trajectory.txt for {name}");
    Ok(())
}
