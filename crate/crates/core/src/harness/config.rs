//! Run configuration: a flat TOML table whose keys mirror [`RunConfig`], plus
//! named presets with the results they are expected to reach.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::CLASSES;
use crate::dynamics::PhaseConfig;
use crate::error::{CsmError, Result};
use crate::learning::{AlgorithmKind, LearningRates};
use crate::net::{ActivationSpec, NetworkTopology, WeightInit};
use crate::structured::{build_grid_masks_channels, parse_grid_spec};

/// Which relaxation runs first for each training sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseOrder {
    /// Nudged phase from the stored particle, then the free phase from the nudged fixed point.
    #[default]
    NudgedFirst,
    /// Free phase from the stored particle, then the nudged phase from the free fixed point.
    FreeFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    #[default]
    Mnist,
    Cifar10,
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            DatasetKind::Mnist => 1,
            DatasetKind::Cifar10 => 3,
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = CsmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar10" | "cifar-10" | "cifar" => Ok(DatasetKind::Cifar10),
            other => Err(CsmError::Config(format!("unknown dataset {other:?}"))),
        }
    }
}

mod algorithm_name {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::learning::AlgorithmKind;

    pub fn serialize<S: Serializer>(kind: &AlgorithmKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(kind.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<AlgorithmKind, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything that determines a training run, together with the dataset checksum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Preset the remaining keys were layered over, if any.
    pub preset: Option<String>,
    #[serde(with = "algorithm_name")]
    pub algorithm: AlgorithmKind,
    /// Hidden layer sizes; input and output sizes come from the dataset.
    /// Ignored when `structured` is set.
    pub hidden: Vec<usize>,
    pub beta: f64,
    pub gamma: f64,
    pub lateral_prefactor: f64,
    /// `c^(P) = 1/2` instead of 0.
    pub output_lateral: bool,
    pub activation_lower: f64,
    pub activation_upper: f64,
    /// Multiplier on the fan-based uniform bound of the initial weights.
    pub init_scale: f64,

    pub free_step: f64,
    /// Free-phase budget when no stored particle exists (first epoch).
    pub free_max_iterations: usize,
    /// Free-phase budget when starting from a stored particle.
    pub free_persistent_iterations: usize,
    pub nudged_step: f64,
    pub nudged_max_iterations: usize,
    pub tolerance: f64,
    /// Budget of the free relaxation from the midpoint used for evaluation.
    pub eval_max_iterations: usize,
    pub phase_order: PhaseOrder,
    pub persistent_particles: bool,

    /// One feedforward rate per layer `1..=P`.
    pub weight_lr: Vec<f64>,
    /// One lateral rate per hidden layer.
    pub lateral_lr: Vec<f64>,
    /// Defaults to `weight_lr`.
    pub bias_lr: Option<Vec<f64>>,
    pub adaptive_lr: bool,
    /// 1 applies every sample's update immediately; larger values average
    /// updates computed in parallel from the same parameters.
    pub batch_size: usize,
    /// Skip updates of samples whose relaxations hit their budget. Diverged
    /// samples are always skipped.
    pub skip_nonconverged: bool,
    /// Abort when more than this fraction of an epoch's samples diverge.
    pub max_divergence_fraction: f64,
    pub epochs: usize,
    pub seed: u64,

    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    /// 20×20 center crop (MNIST only).
    pub crop: bool,
    pub subset_train: Option<usize>,
    pub subset_val: Option<usize>,
    /// Seed of the stratified subset draw, kept apart from `seed` so trials
    /// with different seeds see the same samples.
    pub subset_seed: u64,
    /// Grid layers as `nps:stride:radius,...`.
    pub structured: Option<String>,

    pub sparsity_threshold: f64,
    /// Number of validation samples whose final free relaxation is dumped as CSV.
    pub trace_samples: usize,
    /// Number of trailing validation errors averaged in the summary row.
    pub final_window: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    /// The 784-500-10 CSM run on full MNIST.
    fn default() -> Self {
        Self {
            preset: None,
            algorithm: AlgorithmKind::Csm,
            hidden: vec![500],
            beta: 1.0,
            gamma: 1.0,
            lateral_prefactor: 1.0,
            output_lateral: false,
            activation_lower: 0.0,
            activation_upper: 1.0,
            init_scale: 1.0,
            free_step: 0.5,
            free_max_iterations: 100,
            free_persistent_iterations: 20,
            nudged_step: 0.5,
            nudged_max_iterations: 6,
            tolerance: 1e-5,
            eval_max_iterations: 100,
            phase_order: PhaseOrder::NudgedFirst,
            persistent_particles: true,
            weight_lr: vec![0.5, 0.375],
            lateral_lr: vec![0.01],
            bias_lr: None,
            adaptive_lr: false,
            batch_size: 1,
            skip_nonconverged: false,
            max_divergence_fraction: 0.5,
            epochs: 25,
            seed: 1,
            dataset: DatasetKind::Mnist,
            data_dir: None,
            crop: false,
            subset_train: None,
            subset_val: None,
            subset_seed: 0,
            structured: None,
            sparsity_threshold: 0.01,
            trace_samples: 0,
            final_window: 1,
            out_dir: None,
        }
    }
}

impl RunConfig {
    /// Parses a TOML table. A `preset` key starts from that preset and the
    /// remaining keys override it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| CsmError::Config(e.to_string()))?;
        let mut base = match table.get("preset") {
            Some(toml::Value::String(name)) => preset(name)?.config.to_table()?,
            Some(other) => return Err(CsmError::Config(format!("preset must be a string, got {other}"))),
            None => toml::Table::new(),
        };
        base.extend(table);
        Self::from_table(base)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CsmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CsmError::Config(e.to_string()))
    }

    fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| CsmError::Config(e.to_string()))
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| CsmError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from a `key=value` string. The value is read as a TOML
    /// value when it parses as one and as a bare string otherwise.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CsmError::Config(format!("expected key=value, got {assignment:?}")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("parsed key present"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let mut table = self.to_table()?;
        if key == "preset" {
            let name = value
                .as_str()
                .ok_or_else(|| CsmError::Config("preset must be a string".into()))?;
            let mut base = preset(name)?.config.to_table()?;
            table.remove("preset");
            base.extend(table);
            table = base;
        } else {
            table.insert(key.to_string(), value);
        }
        *self = Self::from_table(table)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CsmError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("free_step", self.free_step)?;
        positive("nudged_step", self.nudged_step)?;
        positive("tolerance", self.tolerance)?;
        positive("init_scale", self.init_scale)?;
        if !self.beta.is_finite() || self.beta == 0.0 {
            return Err(CsmError::Config(format!("beta must be finite and nonzero, got {}", self.beta)));
        }
        if self.batch_size == 0 {
            return Err(CsmError::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_divergence_fraction) {
            return Err(CsmError::Config("max_divergence_fraction must lie in [0, 1]".into()));
        }
        if self.crop && self.dataset != DatasetKind::Mnist {
            return Err(CsmError::Config("crop is only defined for MNIST".into()));
        }
        ActivationSpec::new(self.activation_lower, self.activation_upper)?;
        Ok(())
    }

    pub fn free_phase(&self, persistent: bool) -> PhaseConfig {
        let budget = if persistent {
            self.free_persistent_iterations
        } else {
            self.free_max_iterations
        };
        PhaseConfig::free(self.free_step, budget, self.tolerance)
    }

    pub fn nudged_phase(&self, beta: f64) -> PhaseConfig {
        PhaseConfig::free(self.nudged_step, self.nudged_max_iterations, self.tolerance).with_beta(beta)
    }

    pub fn eval_phase(&self) -> PhaseConfig {
        PhaseConfig::free(self.free_step, self.eval_max_iterations, self.tolerance)
    }

    pub fn weight_init(&self) -> WeightInit {
        if self.init_scale == 1.0 {
            WeightInit::FanUniform
        } else {
            WeightInit::ScaledFan(self.init_scale)
        }
    }

    /// Topology for inputs of dimension `input_dim`, including grid masks when
    /// `structured` is set.
    pub fn topology(&self, input_dim: usize) -> Result<NetworkTopology> {
        let act = ActivationSpec::new(self.activation_lower, self.activation_upper)?;
        let (sizes, masks) = match &self.structured {
            Some(spec) => {
                let layers = parse_grid_spec(spec)?;
                let channels = self.dataset.channels();
                let side = ((input_dim / channels) as f64).sqrt().round() as usize;
                if side * side * channels != input_dim {
                    return Err(CsmError::Config(format!(
                        "input dimension {input_dim} is not a square grid with {channels} channel(s)"
                    )));
                }
                let net = build_grid_masks_channels(side, channels, &layers, CLASSES)?;
                (net.sizes, Some(net.masks))
            }
            None => {
                let mut sizes = vec![input_dim];
                sizes.extend(&self.hidden);
                sizes.push(CLASSES);
                (sizes, None)
            }
        };
        let mut topo = NetworkTopology::new(&sizes, self.gamma)?
            .with_output_lateral(self.output_lateral)
            .with_lateral_prefactor(self.lateral_prefactor)?
            .with_activation(act);
        if let Some(m) = masks {
            topo = topo.with_masks(m)?;
        }
        Ok(topo)
    }

    pub fn learning_rates(&self, depth: usize) -> Result<LearningRates> {
        if self.weight_lr.len() != depth {
            return Err(CsmError::Config(format!(
                "weight_lr has {} entries for {depth} layers",
                self.weight_lr.len()
            )));
        }
        let laterals: Vec<f64> = if self.algorithm.has_laterals() {
            if self.lateral_lr.len() != depth - 1 {
                return Err(CsmError::Config(format!(
                    "lateral_lr has {} entries for {} hidden layers",
                    self.lateral_lr.len(),
                    depth - 1
                )));
            }
            self.lateral_lr.clone()
        } else {
            Vec::new()
        };
        let mut rates = LearningRates::from_layers(&self.weight_lr, &laterals)?;
        if let Some(b) = &self.bias_lr {
            if b.len() != depth {
                return Err(CsmError::Config(format!("bias_lr has {} entries for {depth} layers", b.len())));
            }
            rates = LearningRates::new(rates.weights, rates.laterals, b.clone())?;
        }
        Ok(rates)
    }
}

/// Result a preset is expected to reach at full scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expected {
    pub train_err: f64,
    pub val_err: f64,
    /// Spread reported alongside `val_err` (standard error over trials or epochs).
    pub val_spread: Option<f64>,
    pub epochs: usize,
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "train {}%, validation {}%", self.train_err, self.val_err)?;
        if let Some(s) = self.val_spread {
            write!(f, " ± {s}")?;
        }
        write!(f, " after {} epochs", self.epochs)
    }
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    /// Row label in the summary table.
    pub label: &'static str,
    pub config: RunConfig,
    pub expected: Option<Expected>,
}

struct Row {
    name: &'static str,
    label: &'static str,
    algorithm: AlgorithmKind,
    dataset: DatasetKind,
    hidden: &'static [usize],
    structured: Option<&'static str>,
    crop: bool,
    weight_lr: &'static [f64],
    lateral_lr: &'static [f64],
    adaptive: bool,
    epochs: usize,
    expected: Option<Expected>,
}

const fn exp(train_err: f64, val_err: f64, val_spread: Option<f64>, epochs: usize) -> Option<Expected> {
    Some(Expected {
        train_err,
        val_err,
        val_spread,
        epochs,
    })
}

use AlgorithmKind::{Csm, EpBetaPositive, EpBetaRegularized, EpLateral};
use DatasetKind::{Cifar10, Mnist};

const H3: &[usize] = &[500, 500, 500];
const W3_EP: &[f64] = &[0.128, 0.032, 0.008, 0.002];
const W3_CSM: &[f64] = &[0.5, 0.375, 0.281, 0.211];
const L3_CSM: &[f64] = &[0.75, 0.562, 0.422];

#[rustfmt::skip]
const ROWS: &[Row] = &[
    Row { name: "mnist-1hl", label: "CSM", algorithm: Csm, dataset: Mnist, hidden: &[500], structured: None, crop: false,
          weight_lr: &[0.5, 0.375], lateral_lr: &[0.01], adaptive: false, epochs: 25, expected: exp(0.0, 2.16, None, 25) },
    Row { name: "mnist-1hl-ep-reg", label: "EP:±β", algorithm: EpBetaRegularized, dataset: Mnist, hidden: &[500], structured: None, crop: false,
          weight_lr: &[0.1, 0.05], lateral_lr: &[], adaptive: false, epochs: 40, expected: exp(0.0, 2.53, None, 40) },
    Row { name: "mnist-1hl-ep-pos", label: "EP:+β", algorithm: EpBetaPositive, dataset: Mnist, hidden: &[500], structured: None, crop: false,
          weight_lr: &[0.5, 0.125], lateral_lr: &[], adaptive: false, epochs: 100, expected: exp(0.034, 2.18, None, 100) },
    Row { name: "mnist-1hl-ep-lateral", label: "EP: lateral", algorithm: EpLateral, dataset: Mnist, hidden: &[500], structured: None, crop: false,
          weight_lr: &[0.5, 0.25], lateral_lr: &[0.75], adaptive: false, epochs: 25, expected: exp(0.0, 2.29, None, 25) },
    Row { name: "mnist-3hl", label: "CSM", algorithm: Csm, dataset: Mnist, hidden: H3, structured: None, crop: false,
          weight_lr: W3_CSM, lateral_lr: L3_CSM, adaptive: false, epochs: 250, expected: exp(0.0, 4.82, None, 250) },
    Row { name: "mnist-3hl-adaptive", label: "CSM Adaptive", algorithm: Csm, dataset: Mnist, hidden: H3, structured: None, crop: false,
          weight_lr: W3_CSM, lateral_lr: L3_CSM, adaptive: true, epochs: 250, expected: exp(0.0, 3.52, None, 250) },
    Row { name: "mnist-3hl-ep-reg", label: "EP:±β", algorithm: EpBetaRegularized, dataset: Mnist, hidden: H3, structured: None, crop: false,
          weight_lr: W3_EP, lateral_lr: &[], adaptive: false, epochs: 250, expected: exp(0.0, 2.73, None, 250) },
    Row { name: "mnist-3hl-ep-pos", label: "EP:+β", algorithm: EpBetaPositive, dataset: Mnist, hidden: H3, structured: None, crop: false,
          weight_lr: W3_EP, lateral_lr: &[], adaptive: false, epochs: 250, expected: exp(0.0, 2.77, None, 250) },
    Row { name: "mnist-3hl-ep-lateral", label: "EP lateral", algorithm: EpLateral, dataset: Mnist, hidden: H3, structured: None, crop: false,
          weight_lr: W3_EP, lateral_lr: &[0.192, 0.048, 0.012], adaptive: false, epochs: 250, expected: exp(0.0, 2.4, None, 250) },
    Row { name: "mnist-str-r4-nps4-full", label: "R4, NPS4, Full", algorithm: Csm, dataset: Mnist, hidden: &[], structured: Some("4:2:4"), crop: false,
          weight_lr: &[0.5, 0.375], lateral_lr: &[0.01], adaptive: false, epochs: 50, expected: exp(0.02, 2.71, None, 50) },
    Row { name: "mnist-str-r4-nps16-full", label: "R4, NPS16, Full", algorithm: Csm, dataset: Mnist, hidden: &[], structured: Some("16:2:4"), crop: false,
          weight_lr: &[0.5, 0.25], lateral_lr: &[0.75], adaptive: false, epochs: 49, expected: exp(0.0, 2.41, None, 49) },
    Row { name: "mnist-str-r4-nps20-full", label: "R4, NPS20, Full", algorithm: Csm, dataset: Mnist, hidden: &[], structured: Some("20:2:4"), crop: false,
          weight_lr: &[0.664, 0.577], lateral_lr: &[0.9], adaptive: false, epochs: 50, expected: exp(0.0, 2.22, None, 50) },
    Row { name: "mnist-str-r8-nps80-crop", label: "R8, NPS80, Crop", algorithm: Csm, dataset: Mnist, hidden: &[], structured: Some("80:4:8"), crop: true,
          weight_lr: &[0.664, 0.577], lateral_lr: &[0.9], adaptive: false, epochs: 20, expected: exp(0.01, 2.27, None, 20) },
    Row { name: "mnist-str-r4-nps4-crop", label: "R4, NPS4, Crop", algorithm: Csm, dataset: Mnist, hidden: &[], structured: Some("4:1:4"), crop: true,
          weight_lr: &[0.099, 0.065], lateral_lr: &[0.335], adaptive: false, epochs: 100, expected: exp(0.08, 2.98, None, 100) },
    Row { name: "mnist-str-r8-nps4-crop", label: "R8, NPS4, Crop", algorithm: Csm, dataset: Mnist, hidden: &[], structured: Some("4:1:8"), crop: true,
          weight_lr: &[0.099, 0.065], lateral_lr: &[0.335], adaptive: false, epochs: 100, expected: exp(0.0, 2.73, None, 100) },
    Row { name: "mnist-str-r8-nps20-crop", label: "R8, NPS20, Crop", algorithm: Csm, dataset: Mnist, hidden: &[], structured: Some("20:2:8"), crop: true,
          weight_lr: &[0.664, 0.577], lateral_lr: &[0.9], adaptive: false, epochs: 79, expected: exp(0.0, 2.23, None, 79) },
    Row { name: "cifar-fc-1hl", label: "CSM, FC, 1HL", algorithm: Csm, dataset: Cifar10, hidden: &[500], structured: None, crop: false,
          weight_lr: &[0.059, 0.017], lateral_lr: &[0.067], adaptive: false, epochs: 1000, expected: exp(1.77, 59.21, Some(0.08), 1000) },
    Row { name: "cifar-fc-2hl", label: "CSM, FC, 2HL", algorithm: Csm, dataset: Cifar10, hidden: &[500, 500], structured: None, crop: false,
          weight_lr: &[0.018, 7.51e-4, 3.07e-5], lateral_lr: &[0.063, 2.59e-3], adaptive: false, epochs: 3584, expected: exp(17.96, 51.76, Some(0.002), 3584) },
    Row { name: "cifar-str-1hl", label: "CSM, Str, 1HL", algorithm: Csm, dataset: Cifar10, hidden: &[], structured: Some("3:2:4"), crop: false,
          weight_lr: &[0.050, 0.0375], lateral_lr: &[0.01], adaptive: false, epochs: 250, expected: exp(34.0, 49.5, Some(0.7), 250) },
    Row { name: "cifar-str-2hl", label: "CSM, Str, 2HL", algorithm: Csm, dataset: Cifar10, hidden: &[], structured: Some("3:2:4,3:4:4"), crop: false,
          weight_lr: &[0.265, 0.073, 0.020], lateral_lr: &[0.075, 0.020], adaptive: false, epochs: 200, expected: exp(46.8, 51.4, Some(0.6), 200) },
    Row { name: "cifar-ep-fc-1hl", label: "EP, FC, 1HL", algorithm: EpBetaPositive, dataset: Cifar10, hidden: &[500], structured: None, crop: false,
          weight_lr: &[0.014, 0.011], lateral_lr: &[], adaptive: false, epochs: 1000, expected: exp(0.76, 57.60, Some(0.06), 1000) },
    Row { name: "cifar-ep-fc-2hl", label: "EP, FC, 2HL", algorithm: EpBetaPositive, dataset: Cifar10, hidden: &[500, 500], structured: None, crop: false,
          weight_lr: &[0.014, 0.011, 1.25], lateral_lr: &[], adaptive: false, epochs: 1000, expected: exp(1.25, 53.43, Some(0.04), 1000) },
    Row { name: "mnist-desk", label: "CSM", algorithm: Csm, dataset: Mnist, hidden: &[64], structured: None, crop: false,
          weight_lr: &[0.1, 0.05], lateral_lr: &[0.01], adaptive: false, epochs: 30, expected: None },
];

impl Row {
    fn preset(&self) -> Preset {
        let structured = self.structured.is_some();
        let fc_cifar = self.dataset == Cifar10 && !structured;
        let config = RunConfig {
            preset: Some(self.name.to_string()),
            algorithm: self.algorithm,
            hidden: self.hidden.to_vec(),
            weight_lr: self.weight_lr.to_vec(),
            lateral_lr: self.lateral_lr.to_vec(),
            adaptive_lr: self.adaptive,
            epochs: self.epochs,
            dataset: self.dataset,
            crop: self.crop,
            structured: self.structured.map(str::to_string),
            final_window: if fc_cifar { 20 } else { 1 },
            subset_train: (self.name == "mnist-desk").then_some(5000),
            subset_val: (self.name == "mnist-desk").then_some(1000),
            ..RunConfig::default()
        };
        Preset {
            name: self.name,
            label: self.label,
            config,
            expected: self.expected,
        }
    }
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    ROWS.iter().map(|r| r.name)
}

pub fn preset(name: &str) -> Result<Preset> {
    ROWS.iter()
        .find(|r| r.name == name)
        .map(Row::preset)
        .ok_or_else(|| CsmError::Config(format!("unknown preset {name:?}")))
}

pub fn all_presets() -> Vec<Preset> {
    ROWS.iter().map(Row::preset).collect()
}

/// Label for a config's summary row: the preset label if one is set, else the algorithm.
pub fn row_label(cfg: &RunConfig) -> String {
    cfg.preset
        .as_deref()
        .and_then(|n| ROWS.iter().find(|r| r.name == n))
        .map(|r| r.label.to_string())
        .unwrap_or_else(|| match cfg.algorithm {
            Csm => "CSM".into(),
            EpBetaRegularized => "EP:±β".into(),
            EpBetaPositive => "EP:+β".into(),
            EpLateral => "EP: lateral".into(),
        })
}

/// Learning-rate column of the summary table, e.g. `α_W = 0.5, 0.375; α_L = 0.01`.
pub fn rate_label(cfg: &RunConfig) -> String {
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
    let mut s = format!("α_W = {}", join(&cfg.weight_lr));
    if cfg.algorithm.has_laterals() && !cfg.lateral_lr.is_empty() {
        s.push_str(&format!("; α_L = {}", join(&cfg.lateral_lr)));
    }
    s
}
