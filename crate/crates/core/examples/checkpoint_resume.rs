//! Trains two epochs, stops, reloads the checkpoint and trains two more; the
//! result matches a straight four-epoch run bit for bit.

use std::path::Path;

use csm::harness::{load_dataset, preset, Checkpoint, Trainer};

fn main() -> csm::Result<()> {
    let dir = std::env::temp_dir().join(format!("csm-resume-{}", std::process::id()));
    let mut cfg = preset("mnist-desk")?.config;
    cfg.subset_train = Some(500);
    cfg.subset_val = Some(100);
    cfg.data_dir = Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset"));
    let ds = load_dataset(&cfg)?;

    cfg.epochs = 4;
    let mut straight = Trainer::new(cfg.clone(), &ds)?;
    straight.run(&ds)?;

    cfg.epochs = 2;
    cfg.out_dir = Some(dir.clone());
    Trainer::new(cfg, &ds)?.run(&ds)?;
    let mut ck = Checkpoint::load(&dir.join("checkpoint.bin"))?;
    println!("checkpoint at epoch {}, dataset {}", ck.epoch, &ck.dataset_digest[..12]);
    ck.config.epochs = 4;
    let mut resumed = Trainer::resume(ck, &ds)?;
    resumed.run(&ds)?;

    println!("parameters identical: {}", resumed.params == straight.params);
    println!("final validation error {:.2}%", resumed.metrics.last().map_or(f64::NAN, |m| m.val_err));
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
