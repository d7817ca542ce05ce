#![allow(dead_code)]

use std::fs::File;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csm::data::{write_cifar_batch, DATA_DIR_ENV};

/// MNIST fixture directory: `$CSM_DATA_DIR/mnist` or `$CSM_DATA_DIR` when set,
/// else the subset shipped in `data/mnist-subset`.
pub fn mnist_dir() -> PathBuf {
    if let Some(base) = std::env::var_os(DATA_DIR_ENV) {
        let base = PathBuf::from(base);
        let nested = base.join("mnist");
        return if nested.is_dir() { nested } else { base };
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
}

/// Writes five training batches and a test batch of random CIFAR-format
/// records, `per_batch` records each, labels cycling through the classes.
pub fn synthetic_cifar(dir: &Path, per_batch: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = (1..=5).map(|b| format!("data_batch_{b}.bin")).chain(["test_batch.bin".to_string()]);
    for name in names {
        let labels: Vec<u8> = (0..per_batch).map(|i| (i % 10) as u8).collect();
        let pixels: Vec<u8> = (0..per_batch * 3072).map(|_| rng.gen()).collect();
        write_cifar_batch(File::create(dir.join(name)).unwrap(), &labels, &pixels).unwrap();
    }
}

/// Metrics CSV with the wall-clock column dropped.
pub fn without_seconds(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let mut cols: Vec<&str> = l.split(',').collect();
            cols.pop();
            cols.join(",")
        })
        .collect()
}
