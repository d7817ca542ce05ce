//! The training loop, evaluation and sparsity measurement.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::config::{DatasetKind, PhaseOrder, RunConfig};
use super::metrics::{moving_average_rises, table_row, write_metrics_csv, EpochMetrics, TABLE_HEADER};
use crate::data::{load_cifar10, load_mnist, resolve_data_dir, subset, Dataset, MnistSplit};
use crate::dynamics::{
    persistent_init, relax, relax_traced, write_trace_csv, PersistentParticleStore, PhaseConfig,
    RelaxOutcome,
};
use crate::error::{CsmError, Result};
use crate::learning::{
    accumulate_update, add_delta, apply_adaptive_lr, csm_update_in_place, ep_update_in_place,
    AdaptiveLRSchedule, AlgorithmKind, LearningRates,
};
use crate::net::{init_params, NetworkState, NetworkTopology, Parameters};

/// Loads the configured dataset and draws the configured subset.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let dir = resolve_data_dir(cfg.data_dir.as_deref(), cfg.dataset.name())?;
    let ds = match cfg.dataset {
        DatasetKind::Mnist => load_mnist(&dir, cfg.crop, MnistSplit::TestAsValidation)?,
        DatasetKind::Cifar10 => load_cifar10(&dir)?,
    };
    match (cfg.subset_train, cfg.subset_val) {
        (None, None) => Ok(ds),
        (t, v) => {
            let n_train = t.unwrap_or(ds.train.len());
            let n_val = v.unwrap_or(ds.validation.len());
            subset(&ds, n_train, n_val, cfg.subset_seed)
        }
    }
}

/// Outcome of relaxing a set of samples from the midpoint with `β = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub error_pct: f64,
    /// Samples whose relaxation hit the budget or diverged; all count as errors.
    pub nonconverged: usize,
    pub mean_iterations: f64,
    /// Fraction of units above the threshold per layer `0..=P`.
    pub sparsity: Vec<f64>,
}

/// Mean over `states` of the fraction of units with rate above `threshold`,
/// per layer (layer 0 is the input).
pub fn sparsity<'a>(states: impl IntoIterator<Item = &'a NetworkState>, threshold: f64) -> Vec<f64> {
    let mut sums: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for s in states {
        if sums.is_empty() {
            sums = vec![0.0; s.r.len()];
        }
        for (acc, r) in sums.iter_mut().zip(&s.r) {
            *acc += r.iter().filter(|&&v| v > threshold).count() as f64 / r.len() as f64;
        }
        n += 1;
    }
    sums.iter().map(|s| s / n.max(1) as f64).collect()
}

/// Free relaxation of every `record` from the midpoint; the prediction is the
/// argmax of the output rates. Runs in parallel over samples.
pub fn evaluate(
    params: &Parameters,
    topo: &NetworkTopology,
    ds: &Dataset,
    records: &[usize],
    phase: &PhaseConfig,
    threshold: f64,
) -> Result<EvalReport> {
    let free = phase.with_beta(0.0);
    let results: Vec<Result<Option<(bool, RelaxOutcome)>>> = records
        .par_iter()
        .map(|&rec| {
            let x = ds.input(rec);
            match relax(NetworkState::midpoint(&x, topo), params, topo, &free, None) {
                Ok(out) => {
                    let correct = out.converged && out.state.predicted_class() == ds.label(rec) as usize;
                    Ok(Some((correct, out)))
                }
                Err(CsmError::Divergence { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut wrong = 0usize;
    let mut nonconverged = 0usize;
    let mut iters = 0usize;
    let mut states = Vec::with_capacity(records.len());
    for r in results {
        match r? {
            Some((correct, out)) => {
                wrong += usize::from(!correct);
                nonconverged += usize::from(!out.converged);
                iters += out.iterations;
                states.push(out.state);
            }
            None => {
                wrong += 1;
                nonconverged += 1;
            }
        }
    }
    if nonconverged > 0 {
        log::debug!("evaluation: {nonconverged} of {} samples did not converge", records.len());
    }
    let n = records.len().max(1) as f64;
    Ok(EvalReport {
        error_pct: 100.0 * wrong as f64 / n,
        nonconverged,
        mean_iterations: iters as f64 / states.len().max(1) as f64,
        sparsity: sparsity(&states, threshold),
    })
}

/// Fixed points of one training sample.
struct PairOutcome {
    free: RelaxOutcome,
    nudged: RelaxOutcome,
}

/// Per-epoch tallies of the training pass.
#[derive(Default)]
struct EpochTally {
    wrong: usize,
    seen: usize,
    free_iters: usize,
    nonconv: usize,
    diverged: usize,
    skipped: usize,
}

/// Training run state. `metrics[0]` describes the untrained network.
pub struct Trainer {
    pub config: RunConfig,
    pub topology: NetworkTopology,
    pub params: Parameters,
    pub particles: PersistentParticleStore,
    pub rates: LearningRates,
    /// Completed training epochs.
    pub epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    dataset_digest: String,
    schedule: AdaptiveLRSchedule,
}

impl Trainer {
    /// Fresh parameters for `ds`. Algorithms without laterals start with `L = 0`.
    pub fn new(config: RunConfig, ds: &Dataset) -> Result<Self> {
        config.validate()?;
        let topology = config.topology(ds.dim())?;
        let mut params = init_params(&topology, config.seed, config.weight_init())?;
        if !config.algorithm.has_laterals() {
            params.clear_laterals();
        }
        let rates = config.learning_rates(topology.depth())?;
        Ok(Self {
            config,
            topology,
            params,
            particles: PersistentParticleStore::new(),
            rates,
            epoch: 0,
            metrics: Vec::new(),
            dataset_digest: ds.content_digest(),
            schedule: AdaptiveLRSchedule::default(),
        })
    }

    /// Continues from a checkpoint. The dataset must have the digest recorded in it.
    pub fn resume(ck: Checkpoint, ds: &Dataset) -> Result<Self> {
        let digest = ds.content_digest();
        if digest != ck.dataset_digest {
            return Err(CsmError::Checkpoint(format!(
                "dataset digest {digest} differs from the checkpoint's {}",
                ck.dataset_digest
            )));
        }
        let topology = ck.config.topology(ds.dim())?;
        ck.check_topology(&topology)?;
        ck.params.check_shapes(&topology)?;
        let mut rates = ck.config.learning_rates(topology.depth())?;
        rates.lateral_divisor = ck.lateral_divisor;
        Ok(Self {
            config: ck.config,
            topology,
            params: ck.params,
            particles: ck.particles,
            rates,
            epoch: ck.epoch,
            metrics: ck.metrics,
            dataset_digest: digest,
            schedule: AdaptiveLRSchedule::default(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            topology: self.topology.clone(),
            params: self.params.clone(),
            particles: self.particles.clone(),
            lateral_divisor: self.rates.lateral_divisor,
            epoch: self.epoch,
            metrics: self.metrics.clone(),
            dataset_digest: self.dataset_digest.clone(),
        }
    }

    pub fn dataset_digest(&self) -> &str {
        &self.dataset_digest
    }

    /// Trains until `config.epochs` epochs are complete, recording the
    /// untrained baseline first when starting fresh.
    pub fn run(&mut self, ds: &Dataset) -> Result<()> {
        if let Some(dir) = &self.config.out_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("config.toml"), self.config.to_toml_string()?)?;
            fs::write(dir.join("dataset.sha256"), format!("{}\n", self.dataset_digest))?;
        }
        if self.metrics.is_empty() {
            let m = self.baseline(ds)?;
            self.log_epoch(&m);
            self.metrics.push(m);
            self.persist()?;
        }
        while self.epoch < self.config.epochs {
            self.run_epoch(ds)?;
        }
        let rises = moving_average_rises(&self.metrics);
        if !rises.is_empty() {
            warn!("5-epoch mean training error rose at epochs {rises:?}");
        }
        info!("{TABLE_HEADER}");
        info!("{}", table_row(&self.config, &self.metrics));
        if let Some(dir) = self.config.out_dir.clone() {
            fs::write(
                dir.join("summary.txt"),
                format!("{TABLE_HEADER}\n{}\n", table_row(&self.config, &self.metrics)),
            )?;
            if self.config.trace_samples > 0 {
                self.dump_traces(ds, &dir.join("traces"))?;
            }
        }
        Ok(())
    }

    fn baseline(&self, ds: &Dataset) -> Result<EpochMetrics> {
        let start = Instant::now();
        let phase = self.config.eval_phase();
        let th = self.config.sparsity_threshold;
        let train = evaluate(&self.params, &self.topology, ds, &ds.train, &phase, th)?;
        let val = evaluate(&self.params, &self.topology, ds, &ds.validation, &phase, th)?;
        Ok(EpochMetrics {
            epoch: 0,
            train_err: train.error_pct,
            val_err: val.error_pct,
            free_iters_mean: train.mean_iterations,
            nonconv: train.nonconverged,
            sparsity: val.sparsity[1..].to_vec(),
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn log_epoch(&self, m: &EpochMetrics) {
        info!(
            "epoch {:>4}  train {:6.2}%  val {:6.2}%  free iters {:6.1}  nonconv {}  ({:.1}s)",
            m.epoch, m.train_err, m.val_err, m.free_iters_mean, m.nonconv, m.seconds
        );
    }

    /// Relaxes one sample in the configured phase order.
    fn relax_pair(&self, params: &Parameters, record: usize, beta: f64, ds: &Dataset) -> Result<PairOutcome> {
        let x = ds.input(record);
        let z = ds.target(record);
        let cfg = &self.config;
        let stored = cfg.persistent_particles && self.particles.get(record).is_some();
        let init = if cfg.persistent_particles {
            persistent_init(&self.particles, record, &x, &self.topology)
        } else {
            NetworkState::midpoint(&x, &self.topology)
        };
        let free_phase = cfg.free_phase(stored);
        let nudged_phase = cfg.nudged_phase(beta);
        let topo = &self.topology;
        Ok(match cfg.phase_order {
            PhaseOrder::NudgedFirst => {
                let nudged = relax(init, params, topo, &nudged_phase, Some(&z))?;
                let free = relax(nudged.state.clone(), params, topo, &free_phase, None)?;
                PairOutcome { free, nudged }
            }
            PhaseOrder::FreeFirst => {
                let free = relax(init, params, topo, &free_phase, None)?;
                let nudged = relax(free.state.clone(), params, topo, &nudged_phase, Some(&z))?;
                PairOutcome { free, nudged }
            }
        })
    }

    fn update_allowed(&self, pair: &PairOutcome) -> bool {
        !self.config.skip_nonconverged || (pair.free.converged && pair.nudged.converged)
    }

    fn tally(&self, t: &mut EpochTally, record: usize, ds: &Dataset, pair: &Result<PairOutcome>) {
        t.seen += 1;
        match pair {
            Ok(p) => {
                t.wrong += usize::from(p.free.state.predicted_class() != ds.label(record) as usize);
                t.free_iters += p.free.iterations;
                t.nonconv += usize::from(!p.free.converged);
                t.skipped += usize::from(!self.update_allowed(p));
            }
            Err(_) => {
                t.wrong += 1;
                t.nonconv += 1;
                t.diverged += 1;
            }
        }
    }

    /// Runs one epoch over the shuffled training split, then evaluates,
    /// adapts the lateral rates and writes metrics and checkpoint.
    pub fn run_epoch(&mut self, ds: &Dataset) -> Result<EpochMetrics> {
        let start = Instant::now();
        let epoch = self.epoch + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64);
        let mut order = ds.train.clone();
        order.shuffle(&mut rng);
        let beta = self.config.beta;
        let betas: Vec<f64> = order
            .iter()
            .map(|_| match self.config.algorithm {
                AlgorithmKind::EpBetaRegularized if rng.gen_bool(0.5) => -beta,
                _ => beta,
            })
            .collect();

        let mut tally = EpochTally::default();
        let masks = self.topology.masks().cloned();
        let batch = self.config.batch_size;
        for (chunk, chunk_betas) in order.chunks(batch).zip(betas.chunks(batch)) {
            if batch == 1 {
                let (rec, b) = (chunk[0], chunk_betas[0]);
                let pair = split_divergence(self.relax_pair(&self.params, rec, b, ds))?;
                self.tally(&mut tally, rec, ds, &pair);
                if let Ok(p) = pair {
                    if self.update_allowed(&p) {
                        self.apply(&p, b, masks.as_ref())?;
                    }
                    if self.config.persistent_particles {
                        self.particles.save(rec, &p.free.state);
                    }
                }
            } else {
                let pairs: Vec<Result<PairOutcome>> = chunk
                    .par_iter()
                    .zip(chunk_betas)
                    .map(|(&rec, &b)| split_divergence(self.relax_pair(&self.params, rec, b, ds)))
                    .collect::<Result<_>>()?;
                let mut delta = Parameters::zeros(&self.topology);
                let scale = 1.0 / chunk.len() as f64;
                for ((&rec, &b), pair) in chunk.iter().zip(chunk_betas).zip(&pairs) {
                    self.tally(&mut tally, rec, ds, pair);
                    if let Ok(p) = pair {
                        if self.update_allowed(p) {
                            accumulate_update(
                                &mut delta,
                                &self.params,
                                self.config.algorithm,
                                &p.free.state,
                                &p.nudged.state,
                                b,
                                &self.rates,
                                masks.as_ref(),
                                scale,
                            )?;
                        }
                    }
                }
                add_delta(&mut self.params, &delta);
                if self.config.persistent_particles {
                    for (&rec, pair) in chunk.iter().zip(pairs) {
                        if let Ok(p) = pair {
                            self.particles.save(rec, &p.free.state);
                        }
                    }
                }
            }
            if !self.params.is_finite() {
                return Err(CsmError::Aborted(format!("non-finite parameters in epoch {epoch}")));
            }
        }

        let n = tally.seen.max(1) as f64;
        if tally.diverged as f64 / n > self.config.max_divergence_fraction {
            return Err(CsmError::Aborted(format!(
                "{} of {} samples diverged in epoch {epoch}",
                tally.diverged, tally.seen
            )));
        }
        if tally.skipped > 0 {
            log::debug!("epoch {epoch}: {} updates skipped", tally.skipped);
        }
        let val = evaluate(
            &self.params,
            &self.topology,
            ds,
            &ds.validation,
            &self.config.eval_phase(),
            self.config.sparsity_threshold,
        )?;
        let train_err = 100.0 * tally.wrong as f64 / n;
        if self.config.adaptive_lr {
            self.rates = apply_adaptive_lr(&self.schedule, train_err, &self.rates);
        }
        let m = EpochMetrics {
            epoch,
            train_err,
            val_err: val.error_pct,
            free_iters_mean: tally.free_iters as f64 / (tally.seen - tally.diverged).max(1) as f64,
            nonconv: tally.nonconv,
            sparsity: val.sparsity[1..].to_vec(),
            seconds: start.elapsed().as_secs_f64(),
        };
        self.epoch = epoch;
        self.log_epoch(&m);
        self.metrics.push(m.clone());
        self.persist()?;
        Ok(m)
    }

    fn apply(&mut self, p: &PairOutcome, beta: f64, masks: Option<&crate::structured::StructureMasks>) -> Result<()> {
        match self.config.algorithm {
            AlgorithmKind::Csm => {
                csm_update_in_place(&mut self.params, &p.free.state, &p.nudged.state, &self.rates, masks)
            }
            kind => ep_update_in_place(
                kind,
                &mut self.params,
                &p.free.state,
                &p.nudged.state,
                beta,
                &self.rates,
                masks,
            ),
        }
    }

    /// Rewrites `metrics.csv` and `checkpoint.bin` in the output directory.
    fn persist(&self) -> Result<()> {
        let Some(dir) = &self.config.out_dir else {
            return Ok(());
        };
        let f = BufWriter::new(File::create(dir.join("metrics.csv"))?);
        write_metrics_csv(f, self.topology.depth(), &self.metrics)?;
        self.checkpoint().save(&dir.join("checkpoint.bin"))
    }

    /// Residual and energy traces of the evaluation relaxation of the first
    /// `trace_samples` validation records.
    fn dump_traces(&self, ds: &Dataset, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let phase = self.config.eval_phase();
        for &rec in ds.validation.iter().take(self.config.trace_samples) {
            let x: Array1<f64> = ds.input(rec);
            let state = NetworkState::midpoint(&x, &self.topology);
            match relax_traced(state, &self.params, &self.topology, &phase, None) {
                Ok((_, rows)) => {
                    let f = BufWriter::new(File::create(dir.join(format!("record-{rec}.csv")))?);
                    write_trace_csv(f, &rows)?;
                }
                Err(e) => warn!("trace of record {rec} failed: {e}"),
            }
        }
        Ok(())
    }
}

/// Keeps divergence as a per-sample outcome; every other error is fatal.
fn split_divergence(r: Result<PairOutcome>) -> Result<Result<PairOutcome>> {
    match r {
        Err(e @ CsmError::Divergence { .. }) => Ok(Err(e)),
        Err(e) => Err(e),
        ok => Ok(ok),
    }
}

/// Trains from scratch and returns the final state.
pub fn train(config: RunConfig, ds: &Dataset) -> Result<Trainer> {
    let mut t = Trainer::new(config, ds)?;
    t.run(ds)?;
    Ok(t)
}

/// Output directory for a run if none is configured: `runs/<preset or algorithm>-s<seed>`.
pub fn default_out_dir(cfg: &RunConfig) -> PathBuf {
    let stem = cfg.preset.clone().unwrap_or_else(|| cfg.algorithm.name().to_string());
    PathBuf::from("runs").join(format!("{stem}-s{}", cfg.seed))
}
