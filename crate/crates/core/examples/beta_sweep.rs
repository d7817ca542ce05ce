//! Sweeps β over a small MNIST subset with two seeds per value and prints
//! mean, min and max of the final validation error.

use std::path::Path;

use csm::harness::sweep::format_sweep_table;
use csm::harness::{load_dataset, preset, sweep, SweepParam};

fn main() -> csm::Result<()> {
    let mut cfg = preset("mnist-desk")?.config;
    cfg.subset_train = Some(1000);
    cfg.subset_val = Some(200);
    cfg.epochs = 3;
    cfg.data_dir = Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset"));
    let ds = load_dataset(&cfg)?;
    let rows = sweep(&cfg, &ds, SweepParam::Beta, &[0.25, 0.5, 1.0, 2.0], 2)?;
    print!("{}", format_sweep_table(SweepParam::Beta, &rows));
    Ok(())
}
