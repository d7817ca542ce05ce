//! Network domain types: activation bounds, topology, parameters and per-sample state.
//!
//! Layers are numbered `0..=P`. Layer 0 is the input, layer `P` the output.
//! Every per-layer parameter vector is indexed by `p - 1`, so `weights[0]` is
//! the matrix feeding layer 1 from the input.

use std::sync::Arc;

use ndarray::{Array1, Array2, Zip};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CsmError, Result};
use crate::structured::StructureMasks;

/// Hard-sigmoid activation `f(u) = min(upper, max(u, lower))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationSpec {
    pub lower: f64,
    pub upper: f64,
}

impl Default for ActivationSpec {
    fn default() -> Self {
        Self {
            lower: 0.0,
            upper: 1.0,
        }
    }
}

impl ActivationSpec {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(CsmError::InvalidTopology(format!(
                "activation bounds must satisfy a1 < a2, got ({lower}, {upper})"
            )));
        }
        Ok(Self { lower, upper })
    }

    #[inline]
    pub fn clamp(&self, u: f64) -> f64 {
        u.max(self.lower).min(self.upper)
    }

    pub fn apply(&self, u: &Array1<f64>) -> Array1<f64> {
        u.mapv(|x| self.clamp(x))
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.lower && r <= self.upper
    }

    pub fn is_interior(&self, r: f64) -> bool {
        r > self.lower && r < self.upper
    }
}

/// Elementwise clamp of `u` to the activation bounds.
pub fn apply_activation(u: &Array1<f64>, act: &ActivationSpec) -> Array1<f64> {
    act.apply(u)
}

/// `Σ_i (r_i²/2 − b_i r_i)`, the antiderivative of `u − b` on the interior of the
/// hard sigmoid where `r = u`.
pub fn regularizer_value(r: &Array1<f64>, b: &Array1<f64>, act: &ActivationSpec) -> Result<f64> {
    if r.len() != b.len() {
        return Err(CsmError::Shape(format!(
            "regularizer: rates have {} entries, biases {}",
            r.len(),
            b.len()
        )));
    }
    if let Some((i, &x)) = r.iter().enumerate().find(|(_, &x)| !act.contains(x)) {
        return Err(CsmError::Domain(format!(
            "r[{i}] = {x} outside [{}, {}]",
            act.lower, act.upper
        )));
    }
    Ok(r.iter().zip(b.iter()).map(|(&ri, &bi)| 0.5 * ri * ri - bi * ri).sum())
}

/// Layer sizes and the coefficients that shape the dynamics and energy.
#[derive(Debug, Clone)]
pub struct NetworkTopology {
    sizes: Vec<usize>,
    gamma: f64,
    lateral_coeffs: Vec<f64>,
    lateral_prefactor: f64,
    activation: ActivationSpec,
    masks: Option<Arc<StructureMasks>>,
}

impl NetworkTopology {
    /// Topology with `c^(p) = 1/2` on hidden layers and `c^(P) = 0`.
    pub fn new(sizes: &[usize], gamma: f64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(CsmError::InvalidTopology(
                "need at least an input and an output layer".into(),
            ));
        }
        if let Some(p) = sizes.iter().position(|&n| n == 0) {
            return Err(CsmError::InvalidTopology(format!("layer {p} has zero units")));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(CsmError::InvalidTopology(format!(
                "gamma must be finite and nonnegative, got {gamma}"
            )));
        }
        let depth = sizes.len() - 1;
        let lateral_coeffs = (1..=depth)
            .map(|p| if p < depth { 0.5 } else { 0.0 })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            gamma,
            lateral_coeffs,
            lateral_prefactor: 1.0,
            activation: ActivationSpec::default(),
            masks: None,
        })
    }

    /// Sets `c^(P) = 1/2` instead of 0, switching on the output-layer lateral term.
    pub fn with_output_lateral(mut self, on: bool) -> Self {
        let last = self.lateral_coeffs.len() - 1;
        self.lateral_coeffs[last] = if on { 0.5 } else { 0.0 };
        self
    }

    pub fn with_lateral_coeffs(mut self, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != self.depth() {
            return Err(CsmError::InvalidTopology(format!(
                "{} lateral coefficients for depth {}",
                coeffs.len(),
                self.depth()
            )));
        }
        self.lateral_coeffs = coeffs;
        Ok(self)
    }

    pub fn with_lateral_prefactor(mut self, k: f64) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(CsmError::InvalidTopology(format!("lateral prefactor {k}")));
        }
        self.lateral_prefactor = k;
        Ok(self)
    }

    pub fn with_activation(mut self, act: ActivationSpec) -> Self {
        self.activation = act;
        self
    }

    pub fn with_masks(mut self, masks: StructureMasks) -> Result<Self> {
        masks.check_shapes(&self.sizes)?;
        self.masks = Some(Arc::new(masks));
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(CsmError::InvalidTopology(format!("gamma {gamma}")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of non-input layers `P`.
    pub fn depth(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn activation(&self) -> &ActivationSpec {
        &self.activation
    }

    pub fn lateral_coeffs(&self) -> &[f64] {
        &self.lateral_coeffs
    }

    pub fn lateral_prefactor(&self) -> f64 {
        self.lateral_prefactor
    }

    pub fn masks(&self) -> Option<&StructureMasks> {
        self.masks.as_deref()
    }

    /// `γ (1 − δ_pP)`: strength of the feedback from layer `p + 1`.
    pub fn feedback_gain(&self, p: usize) -> f64 {
        if p < self.depth() {
            self.gamma
        } else {
            0.0
        }
    }

    /// `c^(p) [1 + γ(1 − δ_pP)]` times the lateral prefactor: the coefficient of
    /// `L^(p) r^(p)` in the drive.
    pub fn lateral_gain(&self, p: usize) -> f64 {
        self.lateral_prefactor * self.lateral_coeffs[p - 1] * (1.0 + self.feedback_gain(p))
    }

    /// `γ^(p−P)`, the weight of layer `p` in the energy.
    pub fn layer_weight(&self, p: usize) -> f64 {
        let exp = p as i32 - self.depth() as i32;
        self.gamma.powi(exp)
    }
}

/// Rule for the scale of the uniform feedforward initialization.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum WeightInit {
    /// `s = sqrt(6 / (fan_in + fan_out))`.
    #[default]
    FanUniform,
    /// Fan-based bound multiplied by a constant.
    ScaledFan(f64),
    /// Fixed bound `s`.
    Uniform(f64),
}

impl WeightInit {
    pub fn bound(&self, fan_out: usize, fan_in: usize) -> f64 {
        let fan = (6.0 / (fan_in + fan_out) as f64).sqrt();
        match *self {
            WeightInit::FanUniform => fan,
            WeightInit::ScaledFan(k) => k * fan,
            WeightInit::Uniform(s) => s,
        }
    }
}

/// Feedforward matrices `W^(p)` (`N^(p) × N^(p−1)`), symmetric laterals `L^(p)`
/// and biases `b^(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub weights: Vec<Array2<f64>>,
    pub laterals: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Parameters {
    pub fn zeros(topo: &NetworkTopology) -> Self {
        let s = topo.sizes();
        let depth = topo.depth();
        Self {
            weights: (1..=depth).map(|p| Array2::zeros((s[p], s[p - 1]))).collect(),
            laterals: (1..=depth).map(|p| Array2::zeros((s[p], s[p]))).collect(),
            biases: (1..=depth).map(|p| Array1::zeros(s[p])).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn check_shapes(&self, topo: &NetworkTopology) -> Result<()> {
        let s = topo.sizes();
        let depth = topo.depth();
        if self.weights.len() != depth || self.laterals.len() != depth || self.biases.len() != depth {
            return Err(CsmError::Shape(format!(
                "parameters have {} layers, topology {}",
                self.weights.len(),
                depth
            )));
        }
        for p in 1..=depth {
            let w = self.weights[p - 1].dim();
            let l = self.laterals[p - 1].dim();
            let b = self.biases[p - 1].len();
            if w != (s[p], s[p - 1]) || l != (s[p], s[p]) || b != s[p] {
                return Err(CsmError::Shape(format!(
                    "layer {p}: W {w:?}, L {l:?}, b {b} do not match sizes {} and {}",
                    s[p],
                    s[p - 1]
                )));
            }
        }
        Ok(())
    }

    /// Multiplies every entry by its structure constant's support (nonzero → kept).
    pub fn apply_masks(&mut self, masks: &StructureMasks) {
        for (w, m) in self.weights.iter_mut().zip(&masks.feedforward) {
            Zip::from(w).and(m).for_each(|x, &s| {
                if s == 0.0 {
                    *x = 0.0;
                }
            });
        }
        for (l, m) in self.laterals.iter_mut().zip(&masks.lateral) {
            Zip::from(l).and(m).for_each(|x, &s| {
                if s == 0.0 {
                    *x = 0.0;
                }
            });
        }
    }

    /// Zeroes every lateral matrix (EP variants without lateral connections).
    pub fn clear_laterals(&mut self) {
        for l in &mut self.laterals {
            l.fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|m| m.iter().all(|x| x.is_finite()))
            && self.laterals.iter().all(|m| m.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn laterals_symmetric(&self) -> bool {
        self.laterals.iter().all(|l| l == l.t())
    }
}

/// Uniform `W`, identity `L`, zero `b`; masks applied when the topology carries them.
pub fn init_params(topo: &NetworkTopology, seed: u64, rule: WeightInit) -> Result<Parameters> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = topo.sizes();
    let mut params = Parameters::zeros(topo);
    for p in 1..=topo.depth() {
        let bound = rule.bound(s[p], s[p - 1]);
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(CsmError::InvalidTopology(format!("weight bound {bound}")));
        }
        if bound > 0.0 {
            let dist = Uniform::new_inclusive(-bound, bound);
            for x in params.weights[p - 1].iter_mut() {
                *x = dist.sample(&mut rng);
            }
        }
        params.laterals[p - 1] = Array2::eye(s[p]);
    }
    if let Some(masks) = topo.masks() {
        params.apply_masks(masks);
    }
    Ok(params)
}

/// Pre-activations `u^(p)` and rates `r^(p) = f(u^(p))` for one sample.
/// `u[0]` and `r[0]` both hold the input.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub u: Vec<Array1<f64>>,
    pub r: Vec<Array1<f64>>,
}

impl NetworkState {
    /// Every non-input rate at the activation midpoint.
    pub fn midpoint(input: &Array1<f64>, topo: &NetworkTopology) -> Self {
        let mid = topo.activation().midpoint();
        let mut r = vec![input.clone()];
        r.extend(topo.sizes()[1..].iter().map(|&n| Array1::from_elem(n, mid)));
        Self { u: r.clone(), r }
    }

    /// State with every non-input layer set to `value`.
    pub fn filled(input: &Array1<f64>, topo: &NetworkTopology, value: f64) -> Self {
        let act = topo.activation();
        let mut u = vec![input.clone()];
        u.extend(topo.sizes()[1..].iter().map(|&n| Array1::from_elem(n, value)));
        let r = u
            .iter()
            .enumerate()
            .map(|(p, x)| if p == 0 { x.clone() } else { act.apply(x) })
            .collect();
        Self { u, r }
    }

    /// Restores rates `r^(1..P)`, using `u = r` as the activation preimage.
    pub fn from_rates(input: &Array1<f64>, rates: &[Array1<f64>]) -> Self {
        let mut r = Vec::with_capacity(rates.len() + 1);
        r.push(input.clone());
        r.extend(rates.iter().cloned());
        Self { u: r.clone(), r }
    }

    pub fn depth(&self) -> usize {
        self.r.len() - 1
    }

    pub fn input(&self) -> &Array1<f64> {
        &self.r[0]
    }

    pub fn output(&self) -> &Array1<f64> {
        &self.r[self.depth()]
    }

    pub fn set_pre(&mut self, p: usize, u: Array1<f64>, act: &ActivationSpec) {
        self.r[p] = act.apply(&u);
        self.u[p] = u;
    }

    pub fn check_shapes(&self, topo: &NetworkTopology) -> Result<()> {
        let s = topo.sizes();
        if self.r.len() != s.len() || self.u.len() != s.len() {
            return Err(CsmError::Shape(format!(
                "state has {} layers, topology {}",
                self.r.len(),
                s.len()
            )));
        }
        for (p, &n) in s.iter().enumerate() {
            if self.r[p].len() != n || self.u[p].len() != n {
                return Err(CsmError::Shape(format!(
                    "layer {p}: state has {} units, topology {n}",
                    self.r[p].len()
                )));
            }
        }
        Ok(())
    }

    /// True when every non-input rate lies strictly inside the activation bounds.
    pub fn is_interior(&self, act: &ActivationSpec) -> bool {
        self.r[1..].iter().all(|v| v.iter().all(|&x| act.is_interior(x)))
    }

    /// Index of the largest output rate (first one on ties).
    pub fn predicted_class(&self) -> usize {
        argmax(self.output())
    }
}

/// One training pair: input rates `r^(0)` and target `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Array1<f64>,
    pub target: Array1<f64>,
}

impl Sample {
    pub fn new(input: Array1<f64>, target: Array1<f64>) -> Self {
        Self { input, target }
    }

    /// Sample with a one-hot target of length `classes`.
    pub fn one_hot(input: Array1<f64>, label: usize, classes: usize) -> Self {
        let mut target = Array1::zeros(classes);
        target[label] = 1.0;
        Self { input, target }
    }
}

pub(crate) fn argmax(v: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn clamp_examples() {
        let act = ActivationSpec::default();
        assert_eq!(apply_activation(&array![-0.5, 0.3, 1.7], &act), array![0.0, 0.3, 1.0]);
        assert_eq!(apply_activation(&array![0.0, 1.0], &act), array![0.0, 1.0]);
        assert_eq!(apply_activation(&array![0.25], &act), array![0.25]);
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(ActivationSpec::new(1.0, 1.0).is_err());
        assert!(ActivationSpec::new(2.0, 1.0).is_err());
        assert!(ActivationSpec::new(-1.0, 1.0).is_ok());
    }

    #[test]
    fn regularizer_examples() {
        let act = ActivationSpec::default();
        let z = Array1::zeros(3);
        assert_eq!(regularizer_value(&z, &array![0.3, -1.0, 2.0], &act).unwrap(), 0.0);
        assert_eq!(regularizer_value(&array![1.0], &array![0.0], &act).unwrap(), 0.5);
        assert!(matches!(
            regularizer_value(&array![1.5], &array![0.0], &act),
            Err(CsmError::Domain(_))
        ));
        assert!(matches!(
            regularizer_value(&array![0.5], &array![0.0, 1.0], &act),
            Err(CsmError::Shape(_))
        ));
    }

    #[test]
    fn regularizer_gradient_is_r_minus_b() {
        let act = ActivationSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let unit = Uniform::new(0.1, 0.9);
        let bias = Uniform::new(-1.0, 1.0);
        for _ in 0..20 {
            let r: Array1<f64> = (0..5).map(|_| unit.sample(&mut rng)).collect();
            let b: Array1<f64> = (0..5).map(|_| bias.sample(&mut rng)).collect();
            let h = 1e-5;
            for i in 0..5 {
                let mut rp = r.clone();
                let mut rm = r.clone();
                rp[i] += h;
                rm[i] -= h;
                let fd = (regularizer_value(&rp, &b, &act).unwrap()
                    - regularizer_value(&rm, &b, &act).unwrap())
                    / (2.0 * h);
                assert!((fd - (r[i] - b[i])).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn default_lateral_coefficients() {
        let t = NetworkTopology::new(&[4, 3, 3, 2], 1.0).unwrap();
        assert_eq!(t.lateral_coeffs(), &[0.5, 0.5, 0.0]);
        assert_eq!(t.lateral_gain(1), 1.0);
        assert_eq!(t.lateral_gain(3), 0.0);
        let t = t.with_output_lateral(true);
        assert_eq!(t.lateral_gain(3), 0.5);
    }

    #[test]
    fn invalid_topologies() {
        assert!(matches!(
            NetworkTopology::new(&[3, 0, 2], 1.0),
            Err(CsmError::InvalidTopology(_))
        ));
        assert!(NetworkTopology::new(&[3], 1.0).is_err());
        assert!(NetworkTopology::new(&[3, 2], -0.1).is_err());
    }

    #[test]
    fn init_defaults_and_determinism() {
        let t = NetworkTopology::new(&[2, 3, 1], 1.0).unwrap();
        let a = init_params(&t, 7, WeightInit::FanUniform).unwrap();
        let b = init_params(&t, 7, WeightInit::FanUniform).unwrap();
        assert_eq!(a.laterals[0], Array2::<f64>::eye(3));
        assert!(a.biases.iter().all(|b| b.iter().all(|&x| x == 0.0)));
        for (x, y) in a.weights.iter().zip(&b.weights) {
            for (u, v) in x.iter().zip(y) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
        let c = init_params(&t, 8, WeightInit::FanUniform).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn init_bound_mnist_scale() {
        let t = NetworkTopology::new(&[784, 500, 10], 1.0).unwrap();
        let p = init_params(&t, 1, WeightInit::FanUniform).unwrap();
        let bound = (6.0f64 / 1284.0).sqrt();
        assert!((bound - 0.0684).abs() < 5e-5);
        let max = p.weights[0].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max <= bound);
        assert!(max > 0.9 * bound);
    }
}
