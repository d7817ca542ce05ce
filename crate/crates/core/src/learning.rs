//! Local update rules: CSM and the three EP baselines, the contrastive objective,
//! and the training-error driven lateral learning-rate schedule.
//!
//! CSM updates, per layer `p`:
//!
//! ```text
//! ΔL = α_L (r_β r_βᵀ − L)
//! ΔW = α_W (r_β^(p) r_β^(p−1)ᵀ − r_0^(p) r_0^(p−1)ᵀ)
//! Δb = α_b (r_β − r_0)
//! ```
//!
//! EP updates use the same contrastive differences scaled by `1/β`; the lateral
//! variant moves `L` by `−(α_L/β)(r_β r_βᵀ − r_0 r_0ᵀ)`. Since `L` enters the
//! dynamics with a minus sign, that is Hebbian on the effective lateral coupling,
//! while the CSM lateral rule is anti-Hebbian.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Zip};

use crate::dynamics::{energy_lt, relax, PhaseConfig};
use crate::error::{CsmError, Result};
use crate::net::{NetworkState, NetworkTopology, Parameters, Sample};
use crate::structured::StructureMasks;

/// Per-layer learning rates, indexed by `p − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningRates {
    pub weights: Vec<f64>,
    pub laterals: Vec<f64>,
    pub biases: Vec<f64>,
    /// Current divisor applied to every lateral rate by the adaptive schedule.
    pub lateral_divisor: f64,
}

impl LearningRates {
    pub fn new(weights: Vec<f64>, laterals: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if laterals.len() != n || biases.len() != n {
            return Err(CsmError::Config(format!(
                "learning rates: {} weight, {} lateral, {} bias entries",
                n,
                laterals.len(),
                biases.len()
            )));
        }
        if weights
            .iter()
            .chain(&laterals)
            .chain(&biases)
            .any(|&a| !(a.is_finite() && a >= 0.0))
        {
            return Err(CsmError::Config("learning rates must be finite and nonnegative".into()));
        }
        Ok(Self {
            weights,
            laterals,
            biases,
            lateral_divisor: 1.0,
        })
    }

    /// Rates from the per-layer feedforward list and the per-hidden-layer
    /// lateral list. Biases reuse the feedforward rate of their layer and the
    /// output-layer lateral rate repeats the last hidden one.
    pub fn from_layers(weights: &[f64], hidden_laterals: &[f64]) -> Result<Self> {
        let depth = weights.len();
        if depth == 0 {
            return Err(CsmError::Config("no learning rates given".into()));
        }
        let mut laterals: Vec<f64> = hidden_laterals.iter().copied().take(depth).collect();
        let fill = laterals.last().copied().unwrap_or(0.0);
        laterals.resize(depth, fill);
        Self::new(weights.to_vec(), laterals, weights.to_vec())
    }

    pub fn zeros(depth: usize) -> Self {
        Self {
            weights: vec![0.0; depth],
            laterals: vec![0.0; depth],
            biases: vec![0.0; depth],
            lateral_divisor: 1.0,
        }
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// Effective lateral rate of layer `p`.
    pub fn lateral(&self, p: usize) -> f64 {
        self.laterals[p - 1] / self.lateral_divisor
    }
}

/// Divides the lateral rates once the training error drops below each threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveLRSchedule {
    thresholds: Vec<f64>,
    divisors: Vec<f64>,
}

impl Default for AdaptiveLRSchedule {
    /// Thresholds 5, 1, 0.5, 0.1 % with divisors 5, 10, 50, 100.
    fn default() -> Self {
        Self {
            thresholds: vec![5.0, 1.0, 0.5, 0.1],
            divisors: vec![5.0, 10.0, 50.0, 100.0],
        }
    }
}

impl AdaptiveLRSchedule {
    pub fn new(thresholds: Vec<f64>, divisors: Vec<f64>) -> Result<Self> {
        if thresholds.len() != divisors.len() {
            return Err(CsmError::Config("thresholds and divisors differ in length".into()));
        }
        if thresholds.windows(2).any(|w| w[0] <= w[1]) {
            return Err(CsmError::Config("thresholds must be strictly descending".into()));
        }
        if divisors.iter().any(|&d| !(d > 0.0)) {
            return Err(CsmError::Config("divisors must be positive".into()));
        }
        Ok(Self {
            thresholds,
            divisors,
        })
    }

    /// Divisor of the lowest threshold strictly above `error_pct`, or 1.
    pub fn divisor_for(&self, error_pct: f64) -> f64 {
        self.thresholds
            .iter()
            .zip(&self.divisors)
            .filter(|(&t, _)| error_pct < t)
            .map(|(_, &d)| d)
            .next_back()
            .unwrap_or(1.0)
    }
}

/// Lateral rates divided by the divisor of the lowest crossed threshold. The
/// divisor never decreases, so applying the same error level twice is a no-op.
pub fn apply_adaptive_lr(
    schedule: &AdaptiveLRSchedule,
    train_error_pct: f64,
    rates: &LearningRates,
) -> LearningRates {
    let mut out = rates.clone();
    out.lateral_divisor = rates.lateral_divisor.max(schedule.divisor_for(train_error_pct));
    out
}

/// Which local learning rule drives the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlgorithmKind {
    Csm,
    /// EP without laterals, sign of β drawn uniformly per sample.
    EpBetaRegularized,
    /// EP without laterals, constant positive β.
    EpBetaPositive,
    /// EP with lateral connections trained by the EP contrastive rule.
    EpLateral,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 4] = [
        AlgorithmKind::Csm,
        AlgorithmKind::EpBetaRegularized,
        AlgorithmKind::EpBetaPositive,
        AlgorithmKind::EpLateral,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::Csm => "csm",
            AlgorithmKind::EpBetaRegularized => "ep-reg",
            AlgorithmKind::EpBetaPositive => "ep-pos",
            AlgorithmKind::EpLateral => "ep-lateral",
        }
    }

    pub fn has_laterals(&self) -> bool {
        matches!(self, AlgorithmKind::Csm | AlgorithmKind::EpLateral)
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmKind {
    type Err = CsmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csm" => Ok(AlgorithmKind::Csm),
            "ep-reg" | "ep_beta_regularized" | "ep-beta-regularized" => {
                Ok(AlgorithmKind::EpBetaRegularized)
            }
            "ep-pos" | "ep_beta_positive" | "ep-beta-positive" | "ep" => {
                Ok(AlgorithmKind::EpBetaPositive)
            }
            "ep-lateral" | "ep_lateral" => Ok(AlgorithmKind::EpLateral),
            other => Err(CsmError::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Rule {
    Csm,
    Ep { beta: f64, lateral: bool },
}

fn check_states(params: &Parameters, free: &NetworkState, nudged: &NetworkState) -> Result<()> {
    let depth = params.depth();
    for (name, s) in [("free", free), ("nudged", nudged)] {
        if s.r.len() != depth + 1 {
            return Err(CsmError::Shape(format!(
                "{name} state has {} layers, parameters {}",
                s.r.len() - 1,
                depth
            )));
        }
        for p in 1..=depth {
            let (rows, cols) = params.weights[p - 1].dim();
            if s.r[p].len() != rows || s.r[p - 1].len() != cols {
                return Err(CsmError::Shape(format!(
                    "{name} state layer {p} does not match W^({p}) {rows}x{cols}"
                )));
            }
        }
    }
    Ok(())
}

fn check_masks(params: &Parameters, masks: Option<&StructureMasks>) -> Result<()> {
    if let Some(m) = masks {
        if m.depth() != params.depth()
            || m
                .feedforward
                .iter()
                .zip(&params.weights)
                .any(|(a, b)| a.dim() != b.dim())
            || m.lateral.iter().zip(&params.laterals).any(|(a, b)| a.dim() != b.dim())
        {
            return Err(CsmError::Shape("structure masks do not match parameters".into()));
        }
    }
    Ok(())
}

/// Adds `scale ×` the rule's update into `target`. When `reference` is `None`
/// the update is applied in place and the lateral decay reads `target` itself;
/// otherwise `target` accumulates deltas and the decay reads `reference`.
#[allow(clippy::too_many_arguments)]
fn accumulate(
    target: &mut Parameters,
    reference: Option<&Parameters>,
    rule: Rule,
    free: &NetworkState,
    nudged: &NetworkState,
    rates: &LearningRates,
    masks: Option<&StructureMasks>,
    scale: f64,
) {
    let depth = target.depth();
    let inv_beta = match rule {
        Rule::Csm => 1.0,
        Rule::Ep { beta, .. } => 1.0 / beta,
    };
    for p in 1..=depth {
        let (a, a_pre) = (&nudged.r[p], &nudged.r[p - 1]);
        let (b, b_pre) = (&free.r[p], &free.r[p - 1]);

        let cw = scale * rates.weights[p - 1] * inv_beta;
        let wmask = masks.map(|m| &m.feedforward[p - 1]);
        Zip::indexed(&mut target.weights[p - 1]).for_each(|(i, j), w| {
            if wmask.is_none_or(|m| m[(i, j)] != 0.0) {
                *w += cw * (a[i] * a_pre[j] - b[i] * b_pre[j]);
            }
        });

        let cb = scale * rates.biases[p - 1] * inv_beta;
        Zip::from(&mut target.biases[p - 1])
            .and(a)
            .and(b)
            .for_each(|x, &ra, &rb| *x += cb * (ra - rb));

        let lmask = masks.map(|m| &m.lateral[p - 1]);
        match rule {
            Rule::Csm => {
                let cl = scale * rates.lateral(p);
                match reference {
                    None => Zip::indexed(&mut target.laterals[p - 1]).for_each(|(i, j), l| {
                        let s = lmask.map_or(1.0, |m| m[(i, j)]);
                        if s != 0.0 {
                            *l += cl * (a[i] * a[j] - *l / s);
                        }
                    }),
                    Some(src) => Zip::indexed(&mut target.laterals[p - 1])
                        .and(&src.laterals[p - 1])
                        .for_each(|(i, j), l, &cur| {
                            let s = lmask.map_or(1.0, |m| m[(i, j)]);
                            if s != 0.0 {
                                *l += cl * (a[i] * a[j] - cur / s);
                            }
                        }),
                }
            }
            Rule::Ep { lateral: true, .. } => {
                let cl = -scale * rates.lateral(p) * inv_beta;
                Zip::indexed(&mut target.laterals[p - 1]).for_each(|(i, j), l| {
                    if lmask.is_none_or(|m| m[(i, j)] != 0.0) {
                        *l += cl * (a[i] * a[j] - b[i] * b[j]);
                    }
                });
            }
            Rule::Ep { lateral: false, .. } => {}
        }
    }
}

fn ep_rule(kind: AlgorithmKind, beta_used: f64) -> Result<Rule> {
    if kind == AlgorithmKind::Csm {
        return Err(CsmError::WrongDispatch("csm"));
    }
    if beta_used == 0.0 || !beta_used.is_finite() {
        return Err(CsmError::Config(format!("EP update needs a nonzero beta, got {beta_used}")));
    }
    Ok(Rule::Ep {
        beta: beta_used,
        lateral: kind == AlgorithmKind::EpLateral,
    })
}

/// CSM update from a (free, nudged) pair of fixed points of the same sample.
pub fn csm_update(
    params: &Parameters,
    free: &NetworkState,
    nudged: &NetworkState,
    rates: &LearningRates,
    masks: Option<&StructureMasks>,
) -> Result<Parameters> {
    let mut out = params.clone();
    csm_update_in_place(&mut out, free, nudged, rates, masks)?;
    Ok(out)
}

pub fn csm_update_in_place(
    params: &mut Parameters,
    free: &NetworkState,
    nudged: &NetworkState,
    rates: &LearningRates,
    masks: Option<&StructureMasks>,
) -> Result<()> {
    check_states(params, free, nudged)?;
    check_masks(params, masks)?;
    accumulate(params, None, Rule::Csm, free, nudged, rates, masks, 1.0);
    Ok(())
}

/// EP update with the `1/β_used` scaling. Variants without laterals leave `L` alone.
#[allow(clippy::too_many_arguments)]
pub fn ep_update(
    kind: AlgorithmKind,
    params: &Parameters,
    free: &NetworkState,
    nudged: &NetworkState,
    beta_used: f64,
    rates: &LearningRates,
    masks: Option<&StructureMasks>,
) -> Result<Parameters> {
    let mut out = params.clone();
    ep_update_in_place(kind, &mut out, free, nudged, beta_used, rates, masks)?;
    Ok(out)
}

pub fn ep_update_in_place(
    kind: AlgorithmKind,
    params: &mut Parameters,
    free: &NetworkState,
    nudged: &NetworkState,
    beta_used: f64,
    rates: &LearningRates,
    masks: Option<&StructureMasks>,
) -> Result<()> {
    let rule = ep_rule(kind, beta_used)?;
    check_states(params, free, nudged)?;
    check_masks(params, masks)?;
    accumulate(params, None, rule, free, nudged, rates, masks, 1.0);
    Ok(())
}

/// Adds `scale ×` the update for one sample into `acc`, reading decay terms
/// from `params`. Used to average deltas over a mini-batch.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_update(
    acc: &mut Parameters,
    params: &Parameters,
    kind: AlgorithmKind,
    free: &NetworkState,
    nudged: &NetworkState,
    beta_used: f64,
    rates: &LearningRates,
    masks: Option<&StructureMasks>,
    scale: f64,
) -> Result<()> {
    let rule = match kind {
        AlgorithmKind::Csm => Rule::Csm,
        k => ep_rule(k, beta_used)?,
    };
    check_states(params, free, nudged)?;
    check_masks(params, masks)?;
    accumulate(acc, Some(params), rule, free, nudged, rates, masks, scale);
    Ok(())
}

/// Adds `delta` to `params` entrywise.
pub fn add_delta(params: &mut Parameters, delta: &Parameters) {
    for (a, b) in params.weights.iter_mut().zip(&delta.weights) {
        *a += b;
    }
    for (a, b) in params.laterals.iter_mut().zip(&delta.laterals) {
        *a += b;
    }
    for (a, b) in params.biases.iter_mut().zip(&delta.biases) {
        *a += b;
    }
}

/// Mean of `l_t(β)` at the nudged fixed point minus `l_t(0)` at the free fixed
/// point, over the samples whose relaxations converged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveEstimate {
    pub value: f64,
    pub used: usize,
    pub excluded: usize,
}

/// Contrastive objective `J = E(β) − E(0)` with the lateral weights held fixed.
///
/// Each sample relaxes freely from the activation midpoint, then the nudged
/// phase starts from the free fixed point.
pub fn contrastive_j(
    params: &Parameters,
    topo: &NetworkTopology,
    batch: &[Sample],
    beta: f64,
    free_phase: &PhaseConfig,
    nudged_phase: &PhaseConfig,
) -> Result<ContrastiveEstimate> {
    let free_phase = free_phase.with_beta(0.0);
    let nudged_phase = nudged_phase.with_beta(beta);
    let mut sum = 0.0;
    let mut used = 0;
    let mut excluded = 0;
    for sample in batch {
        let free = relax(
            NetworkState::midpoint(&sample.input, topo),
            params,
            topo,
            &free_phase,
            None,
        )?;
        let nudged = relax(
            free.state.clone(),
            params,
            topo,
            &nudged_phase,
            Some(&sample.target),
        )?;
        if !(free.converged && nudged.converged) {
            excluded += 1;
            continue;
        }
        let e_beta = energy_lt(&nudged.state, params, topo, beta, Some(&sample.target))?;
        let e_free = energy_lt(&free.state, params, topo, 0.0, None)?;
        sum += e_beta - e_free;
        used += 1;
    }
    if excluded > 0 {
        log::warn!("contrastive J: {excluded} of {} samples did not converge", batch.len());
    }
    Ok(ContrastiveEstimate {
        value: if used > 0 { sum / used as f64 } else { f64::NAN },
        used,
        excluded,
    })
}

/// Mean squared output error `(1/T) Σ ‖r^(P) − z‖²` at free fixed points.
pub fn output_mse(
    params: &Parameters,
    topo: &NetworkTopology,
    batch: &[Sample],
    free_phase: &PhaseConfig,
) -> Result<f64> {
    let phase = free_phase.with_beta(0.0);
    let mut sum = 0.0;
    for sample in batch {
        let free = relax(NetworkState::midpoint(&sample.input, topo), params, topo, &phase, None)?;
        if !free.converged {
            return Err(CsmError::NonConvergence {
                iterations: free.iterations,
                residual: free.residual,
            });
        }
        sum += free
            .state
            .output()
            .iter()
            .zip(&sample.target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(sum / batch.len() as f64)
}

/// Outer product `a bᵀ`.
pub fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}
