// Scratch harness for tuning the sampling-speedup experiment.
use ensamp::config::parse_kernel_config;
use ensamp::core::ResourceHandle;
use ensamp::executor::Pilot;
use ensamp::workflow::{plain_md_baseline, SalWorkflow, StageOutput};

const CROSSED_X: f64 = 0.5;

fn crossed(config: &[f64]) -> bool {
    config[0] > CROSSED_X
}

fn dmdmd_run(seed: u64, merge: f64, spawn: f64, iters: usize, steps: usize, n: usize, friction: f64) -> (bool, u64) {
    let text = format!(
        "workflow = dmdmd\npotential = double_well_2d\nbarrier = 8\nnum_replicas = {n}\n\
         num_iterations = {iters}\nn_steps = {steps}\ndt = 0.0005\njitter = 0.05\n
         merge_threshold = {merge}\nspawn_threshold = {spawn}\nnum_neighbors_for_local_scale = 8\nfriction = {friction}"
    );
    let config = parse_kernel_config(&text).unwrap();
    let mut wf = SalWorkflow::new(config, Some(seed)).unwrap();
    let mut pilot: Pilot<StageOutput> = Pilot::new(ResourceHandle::new("p", 4));
    let mut hit = false;
    for _ in 0..iters {
        if wf.run_iteration(&mut pilot).is_err() {
            break;
        }
        hit |= wf.ensemble.replicas().iter().any(|r| crossed(&r.config));
    }
    let budget: u64 = wf.history.iter().map(|i| i.steps).sum();
    (hit, budget)
}

fn coco_run(seed: u64, bins: usize, iters: usize, steps: usize, n: usize, friction: f64) -> (bool, u64) {
    let text = format!(
        "workflow = cocomd\npotential = double_well_2d\nbarrier = 8\nnum_replicas = {n}\n\
         num_iterations = {iters}\nn_steps = {steps}\ndt = 0.0005\njitter = 0.05\nbins_per_dim = {bins}\nfriction = {friction}"
    );
    let config = parse_kernel_config(&text).unwrap();
    let mut wf = SalWorkflow::new(config, Some(seed)).unwrap();
    let mut pilot: Pilot<StageOutput> = Pilot::new(ResourceHandle::new("p", 4));
    let mut hit = false;
    for _ in 0..iters {
        if wf.run_iteration(&mut pilot).is_err() {
            break;
        }
        hit |= wf.frame_store.iter().any(|f| crossed(f));
        hit |= wf.ensemble.replicas().iter().any(|r| crossed(&r.config));
    }
    let budget: u64 = wf.history.iter().map(|i| i.steps).sum();
    (hit, budget)
}

fn baseline_run(seed: u64, budget: u64, n: usize, friction: f64) -> bool {
    let text = format!(
        "workflow = dmdmd\npotential = double_well_2d\nbarrier = 8\nnum_replicas = {n}\n\
         n_steps = 250\ndt = 0.0005\njitter = 0.05\nfriction = {friction}"
    );
    let config = parse_kernel_config(&text).unwrap();
    let mut pilot: Pilot<StageOutput> = Pilot::new(ResourceHandle::new("p", 4));
    let b = plain_md_baseline(&config, &mut pilot, Some(seed), budget).unwrap();
    b.trajectories
        .iter()
        .any(|t| t.frames.iter().any(|f| crossed(f)))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let merge: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.4);
    let spawn: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.9);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(12);
    let steps: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(250);
    let n: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(16);
    let bins: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(10);
    let friction: f64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let seeds = 20u64;

    let mut dm_hits = 0;
    let mut co_hits = 0;
    let mut base_hits = 0;
    let mut dm_budgets = Vec::new();
    for seed in 0..seeds {
        let (dm, b1) = dmdmd_run(seed, merge, spawn, iters, steps, n, friction);
        let (co, b2) = coco_run(seed, bins, 12, 250, n, friction);
        let base = baseline_run(seed, b1.max(b2), n, friction);
        dm_hits += dm as u32;
        co_hits += co as u32;
        base_hits += base as u32;
        dm_budgets.push(b1);
        println!(
            "seed {seed}: dmdmd {} (budget {b1}), coco {} (budget {b2}), baseline {}",
            dm as u8, co as u8, base as u8
        );
    }
    println!(
        "merge={merge} spawn={spawn} iters={iters} steps={steps} n={n} bins={bins} => \
         dmdmd {dm_hits}/{seeds}, coco {co_hits}/{seeds}, baseline {base_hits}/{seeds}"
    );
    println!("dmdmd budgets: {:?}", dm_budgets);
}
