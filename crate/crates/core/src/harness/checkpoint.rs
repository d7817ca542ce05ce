//! Binary training checkpoints.
//!
//! Layout (little endian): magic `CSM1`, `u32` version, the topology
//! (sizes, γ, lateral prefactor, lateral coefficients, activation bounds,
//! optional masks as one byte per entry), the matrices `W^(1..P)`, `L^(1..P)`,
//! `b^(1..P)` row-major as `f64`, then the training state: completed epochs,
//! lateral divisor, dataset digest, config text, metrics rows and particles.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::config::RunConfig;
use super::metrics::EpochMetrics;
use crate::dynamics::PersistentParticleStore;
use crate::error::{CsmError, Result};
use crate::net::{ActivationSpec, NetworkTopology, Parameters};
use crate::structured::StructureMasks;

const MAGIC: &[u8; 4] = b"CSM1";
const VERSION: u32 = 1;

/// Everything needed to evaluate a trained network or continue training it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub topology: NetworkTopology,
    pub params: Parameters,
    pub particles: PersistentParticleStore,
    pub lateral_divisor: f64,
    /// Completed training epochs.
    pub epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    pub dataset_digest: String,
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        Ok(self.0.write_all(b)?)
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn usize(&mut self, v: usize) -> Result<()> {
        self.u64(v as u64)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn str(&mut self, s: &str) -> Result<()> {
        self.usize(s.len())?;
        self.bytes(s.as_bytes())
    }
    fn floats<'a>(&mut self, it: impl IntoIterator<Item = &'a f64>) -> Result<()> {
        for &v in it {
            self.f64(v)?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| {
            CsmError::Checkpoint(format!("truncated or unreadable at byte {}: {e}", self.offset))
        })?;
        self.offset += n as u64;
        Ok(buf)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.bytes(N)?.try_into().expect("length requested"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.array()?);
        usize::try_from(v).map_err(|_| self.corrupt(format!("count {v} too large")))
    }
    /// A count that must not exceed `limit`, guarding allocations on corrupt input.
    fn count(&mut self, limit: usize) -> Result<usize> {
        let v = self.usize()?;
        if v > limit {
            return Err(self.corrupt(format!("count {v} exceeds {limit}")));
        }
        Ok(v)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.count(1 << 24)?;
        String::from_utf8(self.bytes(n)?).map_err(|_| self.corrupt("invalid utf-8 string".into()))
    }
    fn vec(&mut self, n: usize) -> Result<Array1<f64>> {
        (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>().map(Array1::from)
    }
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let v = (0..rows * cols).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Array2::from_shape_vec((rows, cols), v).expect("shape matches length"))
    }
    fn mask(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let b = self.bytes(rows * cols)?;
        Ok(Array2::from_shape_vec((rows, cols), b.into_iter().map(f64::from).collect())
            .expect("shape matches length"))
    }
    fn corrupt(&self, msg: String) -> CsmError {
        CsmError::Checkpoint(format!("corrupt at byte {}: {msg}", self.offset))
    }
}

fn mask_byte(v: f64) -> Result<u8> {
    if v == 0.0 || v == 1.0 {
        Ok(v as u8)
    } else {
        Err(CsmError::Checkpoint(format!("mask entry {v} is not 0 or 1")))
    }
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = Writer(out);
        let topo = &self.topology;
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        w.usize(topo.sizes().len())?;
        for &n in topo.sizes() {
            w.usize(n)?;
        }
        w.f64(topo.gamma())?;
        w.f64(topo.lateral_prefactor())?;
        w.floats(topo.lateral_coeffs())?;
        w.f64(topo.activation().lower)?;
        w.f64(topo.activation().upper)?;
        match topo.masks() {
            Some(m) => {
                w.bytes(&[1])?;
                for a in m.feedforward.iter().chain(&m.lateral) {
                    let b = a.iter().map(|&v| mask_byte(v)).collect::<Result<Vec<u8>>>()?;
                    w.bytes(&b)?;
                }
            }
            None => w.bytes(&[0])?,
        }
        for a in self.params.weights.iter().chain(&self.params.laterals) {
            w.floats(a.iter())?;
        }
        for b in &self.params.biases {
            w.floats(b.iter())?;
        }

        w.usize(self.epoch)?;
        w.f64(self.lateral_divisor)?;
        w.str(&self.dataset_digest)?;
        w.str(&self.config.to_toml_string()?)?;
        w.usize(self.metrics.len())?;
        for m in &self.metrics {
            w.usize(m.epoch)?;
            w.f64(m.train_err)?;
            w.f64(m.val_err)?;
            w.f64(m.free_iters_mean)?;
            w.usize(m.nonconv)?;
            w.floats(&m.sparsity)?;
            w.f64(m.seconds)?;
        }
        let entries = self.particles.sorted_entries();
        w.usize(entries.len())?;
        for (idx, rates) in entries {
            w.usize(idx)?;
            for r in rates {
                w.floats(r.iter())?;
            }
        }
        w.0.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = Reader {
            inner: input,
            offset: 0,
        };
        if &r.array::<4>()? != MAGIC {
            return Err(CsmError::Checkpoint("bad magic, not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CsmError::Checkpoint(format!(
                "version {version} not supported (expected {VERSION})"
            )));
        }
        let n_layers = r.count(1 << 10)?;
        let sizes = (0..n_layers).map(|_| r.count(1 << 24)).collect::<Result<Vec<_>>>()?;
        let gamma = r.f64()?;
        let prefactor = r.f64()?;
        let depth = n_layers.saturating_sub(1);
        let coeffs = (0..depth).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let act = ActivationSpec::new(r.f64()?, r.f64()?)?;
        let mut topology = NetworkTopology::new(&sizes, gamma)?
            .with_lateral_coeffs(coeffs)?
            .with_lateral_prefactor(prefactor)?
            .with_activation(act);
        match r.u8()? {
            0 => {}
            1 => {
                let feedforward = (1..=depth)
                    .map(|p| r.mask(sizes[p], sizes[p - 1]))
                    .collect::<Result<Vec<_>>>()?;
                let lateral = (1..=depth).map(|p| r.mask(sizes[p], sizes[p])).collect::<Result<Vec<_>>>()?;
                topology = topology.with_masks(StructureMasks {
                    feedforward,
                    lateral,
                })?;
            }
            other => return Err(r.corrupt(format!("mask flag {other}"))),
        }
        let weights = (1..=depth)
            .map(|p| r.matrix(sizes[p], sizes[p - 1]))
            .collect::<Result<Vec<_>>>()?;
        let laterals = (1..=depth).map(|p| r.matrix(sizes[p], sizes[p])).collect::<Result<Vec<_>>>()?;
        let biases = (1..=depth).map(|p| r.vec(sizes[p])).collect::<Result<Vec<_>>>()?;
        let params = Parameters {
            weights,
            laterals,
            biases,
        };

        let epoch = r.usize()?;
        let lateral_divisor = r.f64()?;
        let dataset_digest = r.str()?;
        let config = RunConfig::from_toml_str(&r.str()?)?;
        let n_metrics = r.count(1 << 24)?;
        let mut metrics = Vec::with_capacity(n_metrics);
        for _ in 0..n_metrics {
            metrics.push(EpochMetrics {
                epoch: r.usize()?,
                train_err: r.f64()?,
                val_err: r.f64()?,
                free_iters_mean: r.f64()?,
                nonconv: r.usize()?,
                sparsity: (0..depth).map(|_| r.f64()).collect::<Result<Vec<_>>>()?,
                seconds: r.f64()?,
            });
        }
        let n_particles = r.count(1 << 28)?;
        let mut particles = PersistentParticleStore::new();
        for _ in 0..n_particles {
            let idx = r.usize()?;
            let rates = (1..=depth).map(|p| r.vec(sizes[p])).collect::<Result<Vec<_>>>()?;
            particles.insert_rates(idx, rates);
        }
        let mut tail = [0u8; 1];
        if r.inner.read(&mut tail)? != 0 {
            return Err(r.corrupt("trailing bytes".into()));
        }
        Ok(Self {
            config,
            topology,
            params,
            particles,
            lateral_divisor,
            epoch,
            metrics,
            dataset_digest,
        })
    }

    /// Writes through a temporary file so an interrupted save never leaves a
    /// truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        self.write_to(BufWriter::new(File::create(&tmp)?))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path)
            .map_err(|e| CsmError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::read_from(BufReader::new(f))
    }

    /// Fails unless `topo` describes the same network as the stored one.
    pub fn check_topology(&self, topo: &NetworkTopology) -> Result<()> {
        let a = &self.topology;
        let mismatch = |what: &str| {
            Err(CsmError::Checkpoint(format!("topology mismatch: {what} differ")))
        };
        if a.sizes() != topo.sizes() {
            return Err(CsmError::Checkpoint(format!(
                "topology mismatch: stored sizes {:?}, expected {:?}",
                a.sizes(),
                topo.sizes()
            )));
        }
        if a.gamma().to_bits() != topo.gamma().to_bits() {
            return mismatch("gamma values");
        }
        if a.lateral_prefactor().to_bits() != topo.lateral_prefactor().to_bits()
            || a.lateral_coeffs() != topo.lateral_coeffs()
        {
            return mismatch("lateral coefficients");
        }
        if a.activation() != topo.activation() {
            return mismatch("activation bounds");
        }
        if a.masks() != topo.masks() {
            return mismatch("structure masks");
        }
        Ok(())
    }
}
