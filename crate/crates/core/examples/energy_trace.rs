//! Relaxes one MNIST digit through an untrained 784-64-10 network and prints
//! the energy and residual at each iteration of the free and nudged phases.

use std::path::Path;

use csm::dynamics::{relax_traced, PhaseConfig};
use csm::harness::{load_dataset, preset};
use csm::net::{init_params, NetworkState};

fn main() -> csm::Result<()> {
    let mut cfg = preset("mnist-desk")?.config;
    cfg.subset_train = Some(10);
    cfg.subset_val = Some(10);
    cfg.data_dir = Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset"));
    let ds = load_dataset(&cfg)?;
    let topo = cfg.topology(ds.dim())?;
    let params = init_params(&topo, cfg.seed, cfg.weight_init())?;
    let sample = ds.sample(ds.train[0]);

    let free = PhaseConfig::free(0.5, 200, 1e-5);
    let (out, rows) = relax_traced(NetworkState::midpoint(&sample.input, &topo), &params, &topo, &free, None)?;
    println!("free phase, label {}", ds.label(ds.train[0]));
    for r in rows.iter().step_by(10) {
        println!("{:>4} {:>12.6} {:.2e}", r.iteration, r.energy, r.residual);
    }
    println!("converged {} after {} iterations", out.converged, out.iterations);

    let nudged = free.with_beta(1.0);
    let (out, rows) = relax_traced(out.state, &params, &topo, &nudged, Some(&sample.target))?;
    println!("nudged phase");
    for r in &rows {
        println!("{:>4} {:>12.6} {:.2e}", r.iteration, r.energy, r.residual);
    }
    println!("output {:.3}", out.state.output());
    Ok(())
}
