// Direct selection-mechanism inspection: who gets spawned, who merged.
use ensamp::core::{ensemble_from_seed, derive_seed, Ensemble, Replica};
use ensamp::dynamics::{propagate, LangevinParams, Potential};
use ensamp::lsdmap::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let merge: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.3);
    let spawn: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(150);
    let steps: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(20);
    let n0: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(16);
    let k_nn: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(8);
    let dt: f64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(5e-4);
    let seed: u64 = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(0);

    let pot = Potential::DoubleWell2d { barrier: 8.0 };
    let params = LangevinParams::new(steps, dt, 1.0, 1.0, steps.max(10) / 10);
    let mut ens = ensemble_from_seed(n0, &[-1.0, 0.0], 0.05, derive_seed(seed, 0)).unwrap();
    let mut next_id = ens.max_id() + 1;

    let mut spawn_frontier_hits = 0usize;
    let mut spawn_total = 0usize;
    for it in 0..iters {
        let iter_seed = derive_seed(seed, 1 + it as u64);
        let finals: Vec<Replica> = ens
            .replicas()
            .iter()
            .map(|r| {
                let t = propagate(r, &pot, &params, iter_seed).unwrap();
                Replica { config: t.final_config, ..r.clone() }
            })
            .collect();
        let finals = Ensemble::new(finals).unwrap();
        let d = pairwise_distances(&finals);
        let k = k_nn.min(finals.len() - 1).max(1);
        let scales = local_scales(&d, k).unwrap();
        let dmap = diffusion_map(&d, &scales).unwrap();
        let target = dynamic_target(&dmap, &finals, merge, spawn, n0, 4 * n0);
        let sel = select_replicas(
            &finals,
            &dmap,
            &SelectionParams { n_target: target, merge_threshold: merge, spawn_threshold: spawn },
        )
        .unwrap();

        // Rank of spawned sources along +x among current walkers.
        let mut xs: Vec<(u64, f64)> = finals.replicas().iter().map(|r| (r.id, r.config[0])).collect();
        xs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let max_x = xs[0].1;
        for ev in &sel.events {
            if let SelectionEvent::Spawned { source, .. } = ev {
                spawn_total += 1;
                let rank = xs.iter().position(|(id, _)| id == source).unwrap();
                if rank < 3 {
                    spawn_frontier_hits += 1;
                }
            }
        }
        if it % 15 == 0 {
            let n_spawns = sel.events.iter().filter(|e| matches!(e, SelectionEvent::Spawned { .. })).count();
            let n_merges = sel.events.iter().filter(|e| matches!(e, SelectionEvent::Merged { .. } | SelectionEvent::ForcedMerge { .. })).count();
            println!(
                "iter {it:3}: n={:2} -> {:2} max_x={max_x:+.3} merges={n_merges} spawns={n_spawns} lam2={:+.3} lam3={:+.3}",
                finals.len(), target, dmap.eigenvalues[1], dmap.eigenvalues[2],
            );
        }
        ens = sel.ensemble;
        next_id = next_id.max(ens.max_id() + 1);
        if max_x > 0.5 {
            println!("crossed at iter {it}");
            break;
        }
    }
    println!(
        "spawns: {spawn_total}, of which top-3-in-x sources: {spawn_frontier_hits} ({:.0}%)",
        100.0 * spawn_frontier_hits as f64 / spawn_total.max(1) as f64
    );
}
