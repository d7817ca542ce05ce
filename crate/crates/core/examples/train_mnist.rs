//! Trains the desk-scale MNIST preset (784-64-10 on a 5k/1k subset) for a few
//! epochs and prints the metrics and the table row.
//!
//! `cargo run --release --example train_mnist -- [epochs] [algorithm]`

use std::path::Path;

use csm::harness::{load_dataset, preset, table_row, Trainer};

fn main() -> csm::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = preset("mnist-desk")?.config;
    cfg.epochs = args.next().map_or(5, |e| e.parse().expect("epochs"));
    if let Some(a) = args.next() {
        cfg.algorithm = a.parse()?;
    }
    if std::env::var_os(csm::data::DATA_DIR_ENV).is_none() {
        cfg.data_dir = Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset"));
    }
    let ds = load_dataset(&cfg)?;
    let mut trainer = Trainer::new(cfg, &ds)?;
    trainer.run(&ds)?;
    for m in &trainer.metrics {
        println!("{}", m.csv_row());
    }
    println!("{}", table_row(&trainer.config, &trainer.metrics));
    Ok(())
}
