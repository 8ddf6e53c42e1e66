use ensamp::config::parse_kernel_config;
use ensamp::core::ResourceHandle;
use ensamp::executor::Pilot;
use ensamp::workflow::{SalWorkflow, StageOutput};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let merge: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.15);
    let spawn: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.35);
    let steps: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(30);
    let barrier: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2.0);
    for n0 in [8usize, 16, 32] {
        let config = parse_kernel_config(&format!(
            "workflow = dmdmd\npotential = double_well_2d\nbarrier = {barrier}\nnum_replicas = {n0}\n\
             num_iterations = 5\nn_steps = {steps}\ndt = 0.001\njitter = 0.05\n\
             merge_threshold = {merge}\nspawn_threshold = {spawn}"
        ))
        .unwrap();
        let mut wf = SalWorkflow::new(config, Some(100 + n0 as u64)).unwrap();
        let mut pilot: Pilot<StageOutput> = Pilot::new(ResourceHandle::new("p", 8));
        wf.run(&mut pilot).unwrap();
        let counts: Vec<usize> = wf.history.iter().map(|i| i.n_instances).collect();
        let nexts: Vec<usize> = wf.history.iter().map(|i| i.next_count).collect();
        println!("n0={n0}: counts {counts:?} next {nexts:?}");
    }
}
