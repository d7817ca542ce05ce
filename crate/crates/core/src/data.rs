//! MNIST (IDX) and CIFAR-10 (binary batch) loading, stratified subsets and
//! content checksums.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::GzDecoder;
use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{CsmError, Result};
use crate::net::Sample;

pub const CLASSES: usize = 10;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD: usize = 1 + 3 * 1024;

/// Environment variable consulted when no data directory is given.
pub const DATA_DIR_ENV: &str = "CSM_DATA_DIR";

/// Where a loaded file came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileProvenance {
    pub path: PathBuf,
    pub bytes: u64,
    /// SHA-256 of the file as stored on disk.
    pub sha256: String,
}

/// How MNIST records are divided into training and validation sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MnistSplit {
    /// Training file for training, the t10k file for validation.
    #[default]
    TestAsValidation,
    /// Last `n` records of the training file held out for validation.
    HoldOut(usize),
}

/// Images stored as raw bytes; inputs are `byte / 255`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    dim: usize,
    pixels: Arc<Vec<u8>>,
    labels: Arc<Vec<u8>>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub provenance: Vec<FileProvenance>,
}

impl Dataset {
    /// Builds a dataset from raw records; `pixels.len()` must be `labels.len() × dim`.
    pub fn from_parts(
        name: impl Into<String>,
        dim: usize,
        pixels: Vec<u8>,
        labels: Vec<u8>,
        train: Vec<usize>,
        validation: Vec<usize>,
    ) -> Result<Self> {
        if dim == 0 || pixels.len() != labels.len() * dim {
            return Err(CsmError::Shape(format!(
                "{} pixel bytes for {} records of dimension {dim}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l as usize >= CLASSES) {
            return Err(CsmError::Shape(format!("label {l} outside 0..{CLASSES}")));
        }
        let n = labels.len();
        if train.iter().chain(&validation).any(|&i| i >= n) {
            return Err(CsmError::Shape("split index out of range".into()));
        }
        let mut seen = vec![false; n];
        train.iter().for_each(|&i| seen[i] = true);
        if validation.iter().any(|&i| seen[i]) {
            return Err(CsmError::Shape("training and validation splits overlap".into()));
        }
        Ok(Self {
            name: name.into(),
            dim,
            pixels: Arc::new(pixels),
            labels: Arc::new(labels),
            train,
            validation,
            provenance: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored records, whether or not they belong to a split.
    pub fn records(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, record: usize) -> u8 {
        self.labels[record]
    }

    pub fn raw(&self, record: usize) -> &[u8] {
        &self.pixels[record * self.dim..(record + 1) * self.dim]
    }

    pub fn input(&self, record: usize) -> Array1<f64> {
        self.raw(record).iter().map(|&b| b as f64 / 255.0).collect()
    }

    pub fn target(&self, record: usize) -> Array1<f64> {
        let mut z = Array1::zeros(CLASSES);
        z[self.label(record) as usize] = 1.0;
        z
    }

    pub fn sample(&self, record: usize) -> Sample {
        Sample::new(self.input(record), self.target(record))
    }

    pub fn train_samples(&self) -> Vec<Sample> {
        self.train.iter().map(|&i| self.sample(i)).collect()
    }

    pub fn validation_samples(&self) -> Vec<Sample> {
        self.validation.iter().map(|&i| self.sample(i)).collect()
    }

    /// Per-class counts of the given records.
    pub fn class_counts(&self, records: &[usize]) -> [usize; CLASSES] {
        let mut c = [0; CLASSES];
        records.iter().for_each(|&i| c[self.label(i) as usize] += 1);
        c
    }

    /// SHA-256 over the dimension, split indices and the records they reference.
    pub fn content_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for split in [&self.train, &self.validation] {
            h.update((split.len() as u64).to_le_bytes());
            for &i in split {
                h.update([self.label(i)]);
                h.update(self.raw(i));
            }
        }
        hex(&h.finalize())
    }

    /// Keeps a central `side × side` window of square images, dropping `border` pixels per edge.
    pub fn cropped(&self, border: usize) -> Result<Self> {
        let side = (self.dim as f64).sqrt() as usize;
        if side * side != self.dim || 2 * border >= side {
            return Err(CsmError::Shape(format!(
                "cannot crop {border} pixels from images of dimension {}",
                self.dim
            )));
        }
        let inner = side - 2 * border;
        let mut pixels = Vec::with_capacity(self.records() * inner * inner);
        for r in 0..self.records() {
            let img = self.raw(r);
            for row in border..side - border {
                pixels.extend_from_slice(&img[row * side + border..row * side + side - border]);
            }
        }
        Ok(Self {
            name: format!("{}-crop{inner}", self.name),
            dim: inner * inner,
            pixels: Arc::new(pixels),
            labels: self.labels.clone(),
            train: self.train.clone(),
            validation: self.validation.clone(),
            provenance: self.provenance.clone(),
        })
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a whole file, transparently decompressing `.gz`, and records its checksum.
fn read_file(path: &Path) -> Result<(Vec<u8>, FileProvenance)> {
    let mut raw = Vec::new();
    File::open(path)
        .map_err(|e| CsmError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?
        .read_to_end(&mut raw)?;
    let prov = FileProvenance {
        path: path.to_path_buf(),
        bytes: raw.len() as u64,
        sha256: hex(&Sha256::digest(&raw)),
    };
    let data = if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| parse_err(path, 0, format!("gzip: {e}")))?;
        out
    } else {
        raw
    };
    Ok((data, prov))
}

fn parse_err(path: &Path, offset: u64, msg: impl Into<String>) -> CsmError {
    CsmError::Parse {
        path: path.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

fn be_u32(data: &[u8], offset: usize, path: &Path) -> Result<u32> {
    data.get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| parse_err(path, data.len() as u64, "truncated header"))
}

/// Parses an IDX image file into (count, rows, cols, pixels).
pub fn parse_idx_images(data: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(data, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(parse_err(path, 0, format!("bad image magic {magic:#010x}")));
    }
    let n = be_u32(data, 4, path)? as usize;
    let rows = be_u32(data, 8, path)? as usize;
    let cols = be_u32(data, 12, path)? as usize;
    let need = 16 + n * rows * cols;
    if data.len() < need {
        return Err(parse_err(
            path,
            data.len() as u64,
            format!("truncated: {n} images of {rows}x{cols} need {need} bytes"),
        ));
    }
    Ok((n, rows, cols, data[16..need].to_vec()))
}

/// Parses an IDX label file, rejecting labels outside 0–9.
pub fn parse_idx_labels(data: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(data, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(parse_err(path, 0, format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(data, 4, path)? as usize;
    if data.len() < 8 + n {
        return Err(parse_err(
            path,
            data.len() as u64,
            format!("truncated: {n} labels need {} bytes", 8 + n),
        ));
    }
    let labels = data[8..8 + n].to_vec();
    if let Some(i) = labels.iter().position(|&l| l as usize >= CLASSES) {
        return Err(parse_err(path, (8 + i) as u64, format!("label {} out of range", labels[i])));
    }
    Ok(labels)
}

pub fn write_idx_images(mut out: impl Write, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let n = pixels.len() / (rows * cols);
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.write_all(&v.to_be_bytes())?;
    }
    out.write_all(pixels)?;
    Ok(())
}

pub fn write_idx_labels(mut out: impl Write, labels: &[u8]) -> Result<()> {
    out.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    out.write_all(&(labels.len() as u32).to_be_bytes())?;
    out.write_all(labels)?;
    Ok(())
}

/// Writes CIFAR-10 binary records: one label byte then 3072 planar pixel bytes each.
pub fn write_cifar_batch(mut out: impl Write, labels: &[u8], pixels: &[u8]) -> Result<()> {
    if pixels.len() != labels.len() * (CIFAR_RECORD - 1) {
        return Err(CsmError::Shape(format!(
            "{} pixel bytes for {} records",
            pixels.len(),
            labels.len()
        )));
    }
    for (l, px) in labels.iter().zip(pixels.chunks(CIFAR_RECORD - 1)) {
        out.write_all(&[*l])?;
        out.write_all(px)?;
    }
    Ok(())
}

fn find_file(dir: &Path, stems: &[&str]) -> Result<PathBuf> {
    for stem in stems {
        for name in [stem.to_string(), format!("{stem}.gz")] {
            let p = dir.join(&name);
            if p.is_file() {
                return Ok(p);
            }
        }
    }
    Err(CsmError::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{} not found in {}", stems[0], dir.display()),
    )))
}

/// Input dimension, pixels, labels and the provenance of both files.
type IdxPair = (usize, Vec<u8>, Vec<u8>, Vec<FileProvenance>);

fn load_idx_pair(dir: &Path, images: &[&str], labels: &[&str]) -> Result<IdxPair> {
    let ip = find_file(dir, images)?;
    let lp = find_file(dir, labels)?;
    let (idata, iprov) = read_file(&ip)?;
    let (ldata, lprov) = read_file(&lp)?;
    let (n, rows, cols, pixels) = parse_idx_images(&idata, &ip)?;
    let labs = parse_idx_labels(&ldata, &lp)?;
    if labs.len() != n {
        return Err(parse_err(&lp, 4, format!("{} labels for {n} images", labs.len())));
    }
    Ok((rows * cols, pixels, labs, vec![iprov, lprov]))
}

/// Directory given explicitly, else `$CSM_DATA_DIR/<name>`, else `$CSM_DATA_DIR`.
pub fn resolve_data_dir(explicit: Option<&Path>, name: &str) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    let base = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).ok_or_else(|| {
        CsmError::Config(format!("no data directory given and {DATA_DIR_ENV} is unset"))
    })?;
    let nested = base.join(name);
    Ok(if nested.is_dir() { nested } else { base })
}

/// Loads the four MNIST IDX files (plain or gzipped) from `dir`.
pub fn load_mnist(dir: &Path, crop: bool, split: MnistSplit) -> Result<Dataset> {
    let (dim, mut pixels, mut labels, mut prov) = load_idx_pair(
        dir,
        &["train-images-idx3-ubyte", "train-images.idx3-ubyte"],
        &["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"],
    )?;
    let n_train = labels.len();
    let (train, validation) = match split {
        MnistSplit::TestAsValidation => {
            let (tdim, tp, tl, tprov) = load_idx_pair(
                dir,
                &["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"],
                &["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"],
            )?;
            if tdim != dim {
                return Err(CsmError::Shape(format!("test images have dimension {tdim}, train {dim}")));
            }
            pixels.extend(tp);
            labels.extend(&tl);
            prov.extend(tprov);
            ((0..n_train).collect(), (n_train..n_train + tl.len()).collect())
        }
        MnistSplit::HoldOut(n_val) => {
            if n_val >= n_train {
                return Err(CsmError::Config(format!("cannot hold out {n_val} of {n_train} records")));
            }
            ((0..n_train - n_val).collect(), (n_train - n_val..n_train).collect())
        }
    };
    let mut ds = Dataset::from_parts("mnist", dim, pixels, labels, train, validation)?;
    ds.provenance = prov;
    if crop {
        ds = ds.cropped(4)?;
    }
    Ok(ds)
}

fn parse_cifar(data: &[u8], path: &Path, pixels: &mut Vec<u8>, labels: &mut Vec<u8>) -> Result<usize> {
    if data.is_empty() || !data.len().is_multiple_of(CIFAR_RECORD) {
        return Err(parse_err(
            path,
            (data.len() - data.len() % CIFAR_RECORD) as u64,
            format!("{} bytes is not a whole number of {CIFAR_RECORD}-byte records", data.len()),
        ));
    }
    for (k, rec) in data.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] as usize >= CLASSES {
            return Err(parse_err(
                path,
                (k * CIFAR_RECORD) as u64,
                format!("label {} out of range", rec[0]),
            ));
        }
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok(data.len() / CIFAR_RECORD)
}

/// Loads `data_batch_1..5.bin` for training and `test_batch.bin` for validation.
/// Pixels keep the on-disk planar order: 1024 red, 1024 green, 1024 blue.
pub fn load_cifar10(dir: &Path) -> Result<Dataset> {
    let dir = if dir.join("cifar-10-batches-bin").is_dir() {
        dir.join("cifar-10-batches-bin")
    } else {
        dir.to_path_buf()
    };
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    let mut prov = Vec::new();
    for b in 1..=5 {
        let p = find_file(&dir, &[&format!("data_batch_{b}.bin")])?;
        let (data, fp) = read_file(&p)?;
        parse_cifar(&data, &p, &mut pixels, &mut labels)?;
        prov.push(fp);
    }
    let n_train = labels.len();
    let p = find_file(&dir, &["test_batch.bin"])?;
    let (data, fp) = read_file(&p)?;
    parse_cifar(&data, &p, &mut pixels, &mut labels)?;
    prov.push(fp);
    let n = labels.len();
    let mut ds = Dataset::from_parts(
        "cifar10",
        3 * 1024,
        pixels,
        labels,
        (0..n_train).collect(),
        (n_train..n).collect(),
    )?;
    ds.provenance = prov;
    Ok(ds)
}

fn stratified(ds: &Dataset, pool: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); CLASSES];
    pool.iter().for_each(|&i| by_class[ds.label(i) as usize].push(i));
    let mut picked = Vec::with_capacity(n);
    for (c, members) in by_class.iter_mut().enumerate() {
        let quota = n / CLASSES + usize::from(c < n % CLASSES);
        if quota > members.len() {
            return Err(CsmError::Oversubscribed {
                class: c as u8,
                requested: quota,
                available: members.len(),
            });
        }
        members.shuffle(rng);
        picked.extend_from_slice(&members[..quota]);
    }
    picked.sort_unstable();
    picked.shuffle(rng);
    Ok(picked)
}

/// Class-stratified random subset of each split; class quotas differ by at most one.
pub fn subset(ds: &Dataset, n_train: usize, n_val: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = stratified(ds, &ds.train, n_train, &mut rng)?;
    let validation = stratified(ds, &ds.validation, n_val, &mut rng)?;
    Ok(Dataset {
        name: format!("{}-sub{n_train}-{n_val}", ds.name),
        train,
        validation,
        ..ds.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let dim = 16;
        let pixels: Vec<u8> = (0..n * dim).map(|i| (i * 37 % 256) as u8).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        let half = n / 2;
        Dataset::from_parts("toy", dim, pixels, labels, (0..half).collect(), (half..n).collect())
            .unwrap()
    }

    #[test]
    fn one_hot_targets() {
        let ds = toy(20);
        let z = ds.target(7);
        assert_eq!(z[7], 1.0);
        assert_eq!(z.sum(), 1.0);
        assert!(ds.input(3).iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn idx_round_trip_plain_and_gz() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..3 * 28 * 28).map(|i| (i % 256) as u8).collect();
        for (stem, px, lb) in [("train", &pixels, vec![7u8, 0, 9]), ("t10k", &pixels[..784].to_vec(), vec![3u8])] {
            let mut f = File::create(dir.path().join(format!("{stem}-images-idx3-ubyte"))).unwrap();
            write_idx_images(&mut f, 28, 28, px).unwrap();
            let g = File::create(dir.path().join(format!("{stem}-labels-idx1-ubyte.gz"))).unwrap();
            let mut enc = flate2::write::GzEncoder::new(g, flate2::Compression::default());
            write_idx_labels(&mut enc, &lb).unwrap();
            enc.finish().unwrap().flush().unwrap();
        }
        let ds = load_mnist(dir.path(), false, MnistSplit::TestAsValidation).unwrap();
        assert_eq!((ds.records(), ds.dim()), (4, 784));
        assert_eq!(ds.validation, vec![3]);
        assert_eq!(ds.target(0)[7], 1.0);
        assert_eq!(ds.input(0)[255], 1.0);
        assert_eq!(ds.provenance.len(), 4);
        let again = load_mnist(dir.path(), false, MnistSplit::TestAsValidation).unwrap();
        assert_eq!(ds.content_digest(), again.content_digest());

        let cropped = load_mnist(dir.path(), true, MnistSplit::TestAsValidation).unwrap();
        assert_eq!(cropped.dim(), 400);
        assert_eq!(cropped.raw(0)[0], ds.raw(0)[4 * 28 + 4]);
        assert_eq!(cropped.raw(0)[399], ds.raw(0)[23 * 28 + 23]);
    }

    #[test]
    fn idx_errors_carry_offsets() {
        let p = Path::new("x");
        let mut bad = Vec::new();
        write_idx_labels(&mut bad, &[1, 2, 12]).unwrap();
        match parse_idx_labels(&bad, p) {
            Err(CsmError::Parse { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("{other:?}"),
        }
        bad[3] = 0x03;
        assert!(matches!(parse_idx_labels(&bad, p), Err(CsmError::Parse { offset: 0, .. })));
        let mut imgs = Vec::new();
        write_idx_images(&mut imgs, 2, 2, &[0; 8]).unwrap();
        imgs.truncate(20);
        assert!(matches!(parse_idx_images(&imgs, p), Err(CsmError::Parse { offset: 20, .. })));
    }

    #[test]
    fn cifar_layout_and_record_count() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["data_batch_1", "data_batch_2", "data_batch_3", "data_batch_4", "data_batch_5", "test_batch"] {
            let mut recs = Vec::new();
            for k in 0..2u8 {
                recs.push(k + 3);
                recs.extend(std::iter::repeat_n(200u8, 1024));
                recs.extend(std::iter::repeat_n(100u8, 1024));
                recs.extend(std::iter::repeat_n(k, 1024));
            }
            std::fs::write(dir.path().join(format!("{name}.bin")), recs).unwrap();
        }
        let ds = load_cifar10(dir.path()).unwrap();
        assert_eq!((ds.train.len(), ds.validation.len(), ds.dim()), (10, 2, 3072));
        assert_eq!(ds.label(1), 4);
        assert_eq!(ds.raw(1)[0], 200);
        assert_eq!(ds.raw(1)[1024], 100);
        assert_eq!(ds.raw(1)[2048], 1);

        std::fs::write(dir.path().join("test_batch.bin"), vec![0u8; CIFAR_RECORD + 5]).unwrap();
        assert!(matches!(
            load_cifar10(dir.path()),
            Err(CsmError::Parse { offset, .. }) if offset == CIFAR_RECORD as u64
        ));
    }

    #[test]
    fn subset_is_stratified_and_deterministic() {
        let ds = toy(400);
        let a = subset(&ds, 53, 20, 5).unwrap();
        let b = subset(&ds, 53, 20, 5).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.validation, b.validation);
        let counts = a.class_counts(&a.train);
        assert!(counts.iter().all(|&c| c == 5 || c == 6));
        assert_eq!(counts.iter().sum::<usize>(), 53);
        assert!(a.train.iter().all(|i| !a.validation.contains(i)));
        assert_ne!(subset(&ds, 53, 20, 6).unwrap().train, a.train);
        assert!(matches!(subset(&ds, 300, 10, 0), Err(CsmError::Oversubscribed { .. })));
    }

    #[test]
    fn overlapping_splits_rejected() {
        assert!(Dataset::from_parts("x", 1, vec![0; 3], vec![0; 3], vec![0, 1], vec![1, 2]).is_err());
    }
}
