//! Reads a CIFAR-10 binary directory (`$CSM_DATA_DIR/cifar10` or the path
//! given) and prints the split sizes and per-class counts.

use std::path::PathBuf;

use csm::data::{load_cifar10, resolve_data_dir};

fn main() -> csm::Result<()> {
    let explicit = std::env::args().nth(1).map(PathBuf::from);
    let dir = resolve_data_dir(explicit.as_deref(), "cifar10")?;
    let ds = load_cifar10(&dir)?;
    println!("{}: dimension {}", ds.name, ds.dim());
    println!("train {} per class {:?}", ds.train.len(), ds.class_counts(&ds.train));
    println!("validation {} per class {:?}", ds.validation.len(), ds.class_counts(&ds.validation));
    Ok(())
}
