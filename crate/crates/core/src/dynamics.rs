//! Relaxation of the network to its fixed points and the per-sample energy.
//!
//! The drive of layer `p` is
//!
//! ```text
//! −u^(p) + W^(p) r^(p−1) − c^(p)[1 + γ(1−δ_pP)] L^(p) r^(p) + b^(p)
//!        + γ(1−δ_pP) W^(p+1)ᵀ r^(p+1) − 2β δ_pP (r^(P) − z)
//! ```
//!
//! and one explicit Euler step updates every layer simultaneously from the old
//! state: `u ← u + ε·drive`, `r ← f(u)`. On interior states the drive equals
//! `−(γ^(P−p)/2) ∂l/∂r^(p)` where `l` is [`energy_lt`].

use std::collections::HashMap;
use std::io::{self, Write};

use ndarray::linalg::general_mat_vec_mul;
use ndarray::Array1;

use crate::error::{CsmError, Result};
use crate::net::{regularizer_value, NetworkState, NetworkTopology, Parameters};

/// Settings for one relaxation phase. `beta = 0` is the free phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseConfig {
    pub beta: f64,
    pub step: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl PhaseConfig {
    pub fn free(step: f64, max_iterations: usize, tolerance: f64) -> Self {
        Self {
            beta: 0.0,
            step,
            max_iterations,
            tolerance,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(CsmError::Config(format!("relaxation step {} must be positive", self.step)));
        }
        if !(self.tolerance > 0.0) {
            return Err(CsmError::Config(format!(
                "convergence tolerance {} must be positive",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(CsmError::Config("max iterations must be positive".into()));
        }
        if !self.beta.is_finite() {
            return Err(CsmError::Config(format!("beta {}", self.beta)));
        }
        Ok(())
    }
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self::free(0.5, 100, 1e-5)
    }
}

/// Result of [`relax`].
#[derive(Debug, Clone)]
pub struct RelaxOutcome {
    pub state: NetworkState,
    pub iterations: usize,
    /// Max-norm of the drive at the returned state.
    pub residual: f64,
    pub converged: bool,
}

/// One row of a relaxation trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual: f64,
    pub energy: f64,
}

fn check_label<'a>(
    topo: &NetworkTopology,
    beta: f64,
    label: Option<&'a Array1<f64>>,
) -> Result<Option<&'a Array1<f64>>> {
    if beta == 0.0 {
        return Ok(None);
    }
    let z = label.ok_or_else(|| CsmError::Shape("nudged phase needs a label".into()))?;
    let out = topo.sizes()[topo.depth()];
    if z.len() != out {
        return Err(CsmError::Shape(format!(
            "label has {} entries, output layer {out}",
            z.len()
        )));
    }
    Ok(Some(z))
}

/// `b₁ + W₁ x`, constant during a relaxation.
fn input_drive(state: &NetworkState, params: &Parameters) -> Array1<f64> {
    let mut out = params.biases[0].clone();
    general_mat_vec_mul(1.0, &params.weights[0], &state.r[0], 1.0, &mut out);
    out
}

/// Writes the drive of layer `p` into `out` (length `N^(p)`). `first` is the
/// cached [`input_drive`] for `p = 1`.
#[allow(clippy::too_many_arguments)]
fn drive_into(
    out: &mut Array1<f64>,
    state: &NetworkState,
    params: &Parameters,
    topo: &NetworkTopology,
    p: usize,
    beta: f64,
    label: Option<&Array1<f64>>,
    first: Option<&Array1<f64>>,
) {
    let depth = topo.depth();
    match first.filter(|_| p == 1) {
        Some(base) => out.assign(base),
        None => {
            out.assign(&params.biases[p - 1]);
            general_mat_vec_mul(1.0, &params.weights[p - 1], &state.r[p - 1], 1.0, out);
        }
    }
    *out -= &state.u[p];
    let lat = topo.lateral_gain(p);
    if lat != 0.0 {
        general_mat_vec_mul(-lat, &params.laterals[p - 1], &state.r[p], 1.0, out);
    }
    let fb = topo.feedback_gain(p);
    if p < depth && fb != 0.0 {
        general_mat_vec_mul(fb, &params.weights[p].t(), &state.r[p + 1], 1.0, out);
    }
    if p == depth {
        if let Some(z) = label {
            let k = 2.0 * beta;
            ndarray::Zip::from(out)
                .and(&state.r[p])
                .and(z)
                .for_each(|d, &r, &zz| *d -= k * (r - zz));
        }
    }
}

/// Right-hand side of the dynamics for layer `p` (`1 ≤ p ≤ P`).
pub fn layer_drive(
    state: &NetworkState,
    params: &Parameters,
    topo: &NetworkTopology,
    p: usize,
    beta: f64,
    label: Option<&Array1<f64>>,
) -> Result<Array1<f64>> {
    if p == 0 || p > topo.depth() {
        return Err(CsmError::Shape(format!("layer index {p} outside 1..={}", topo.depth())));
    }
    params.check_shapes(topo)?;
    state.check_shapes(topo)?;
    let z = check_label(topo, beta, label)?;
    let mut out = Array1::zeros(topo.sizes()[p]);
    drive_into(&mut out, state, params, topo, p, beta, z, None);
    Ok(out)
}

/// Runs Euler steps from `state` until the drive max-norm drops below the
/// tolerance or the iteration budget is spent.
pub fn relax(
    state: NetworkState,
    params: &Parameters,
    topo: &NetworkTopology,
    phase: &PhaseConfig,
    label: Option<&Array1<f64>>,
) -> Result<RelaxOutcome> {
    relax_observed(state, params, topo, phase, label, |_, _, _| {})
}

/// [`relax`] that also records residual and energy at every iteration.
pub fn relax_traced(
    state: NetworkState,
    params: &Parameters,
    topo: &NetworkTopology,
    phase: &PhaseConfig,
    label: Option<&Array1<f64>>,
) -> Result<(RelaxOutcome, Vec<TraceRow>)> {
    let mut rows = Vec::new();
    let mut energy_err = None;
    let outcome = relax_observed(state, params, topo, phase, label, |iteration, residual, s| {
        match energy_lt(s, params, topo, phase.beta, label) {
            Ok(energy) => rows.push(TraceRow {
                iteration,
                residual,
                energy,
            }),
            Err(e) => {
                energy_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = energy_err {
        return Err(e);
    }
    Ok((outcome, rows))
}

/// Core loop; `observe(iteration, residual, state)` sees every visited state.
pub fn relax_observed(
    mut state: NetworkState,
    params: &Parameters,
    topo: &NetworkTopology,
    phase: &PhaseConfig,
    label: Option<&Array1<f64>>,
    mut observe: impl FnMut(usize, f64, &NetworkState),
) -> Result<RelaxOutcome> {
    phase.validate()?;
    params.check_shapes(topo)?;
    state.check_shapes(topo)?;
    let z = check_label(topo, phase.beta, label)?;
    let depth = topo.depth();
    let act = *topo.activation();
    let mut drives: Vec<Array1<f64>> = topo.sizes()[1..].iter().map(|&n| Array1::zeros(n)).collect();
    let first = input_drive(&state, params);
    let mut iterations = 0;
    loop {
        let mut residual = 0.0f64;
        for p in 1..=depth {
            let d = &mut drives[p - 1];
            drive_into(d, &state, params, topo, p, phase.beta, z, Some(&first));
            for &x in d.iter() {
                if !x.is_finite() {
                    return Err(CsmError::Divergence {
                        layer: p,
                        iteration: iterations,
                    });
                }
                residual = residual.max(x.abs());
            }
        }
        observe(iterations, residual, &state);
        if residual < phase.tolerance || iterations >= phase.max_iterations {
            return Ok(RelaxOutcome {
                state,
                iterations,
                residual,
                converged: residual < phase.tolerance,
            });
        }
        for p in 1..=depth {
            let eps = phase.step;
            let NetworkState { u, r } = &mut state;
            ndarray::Zip::from(&mut u[p])
                .and(&mut r[p])
                .and(&drives[p - 1])
                .for_each(|u, r, &d| {
                    *u += eps * d;
                    *r = act.clamp(*u);
                });
        }
        iterations += 1;
    }
}

/// Per-sample energy
///
/// ```text
/// Σ_p γ^(p−P) [ Tr WᵀW − 2 r^(p)ᵀ W r^(p−1)
///               + ((1+γ(1−δ_pP))/2) c^(p) (2 r^(p)ᵀ (κL) r^(p) − Tr LᵀL)
///               + 2 F(r^(p))ᵀ1 ]
///   + 2β ‖r^(P) − z‖²
/// ```
///
/// with `κ` the lateral prefactor. Needs `γ > 0` whenever `P > 1`.
pub fn energy_lt(
    state: &NetworkState,
    params: &Parameters,
    topo: &NetworkTopology,
    beta: f64,
    label: Option<&Array1<f64>>,
) -> Result<f64> {
    params.check_shapes(topo)?;
    state.check_shapes(topo)?;
    let z = check_label(topo, beta, label)?;
    let depth = topo.depth();
    if depth > 1 && topo.gamma() == 0.0 {
        return Err(CsmError::Domain("energy needs gamma > 0 with hidden layers".into()));
    }
    let act = topo.activation();
    let kappa = topo.lateral_prefactor();
    let mut total = 0.0;
    for p in 1..=depth {
        let w = &params.weights[p - 1];
        let l = &params.laterals[p - 1];
        let r = &state.r[p];
        let r_prev = &state.r[p - 1];
        let mut term = w.iter().map(|x| x * x).sum::<f64>() - 2.0 * r.dot(&w.dot(r_prev));
        let c = 0.5 * (1.0 + topo.feedback_gain(p)) * topo.lateral_coeffs()[p - 1];
        if c != 0.0 {
            term += c * (2.0 * kappa * r.dot(&l.dot(r)) - l.iter().map(|x| x * x).sum::<f64>());
        }
        term += 2.0 * regularizer_value(r, &params.biases[p - 1], act)?;
        total += topo.layer_weight(p) * term;
    }
    if let Some(z) = z {
        let out = &state.r[depth];
        total += 2.0 * beta * out.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}

/// Cached free-phase fixed points keyed by sample index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersistentParticleStore {
    particles: HashMap<usize, Vec<Array1<f64>>>,
}

impl PersistentParticleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Saves the rates `r^(1..P)` of `state`.
    pub fn save(&mut self, index: usize, state: &NetworkState) {
        self.particles.insert(index, state.r[1..].to_vec());
    }

    pub fn insert_rates(&mut self, index: usize, rates: Vec<Array1<f64>>) {
        self.particles.insert(index, rates);
    }

    pub fn get(&self, index: usize) -> Option<&[Array1<f64>]> {
        self.particles.get(&index).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn clear(&mut self) {
        self.particles.clear();
    }

    /// Entries sorted by sample index.
    pub fn sorted_entries(&self) -> Vec<(usize, &[Array1<f64>])> {
        let mut v: Vec<_> = self.particles.iter().map(|(&k, r)| (k, r.as_slice())).collect();
        v.sort_by_key(|(k, _)| *k);
        v
    }
}

/// Initial state for sample `index`: the stored particle if present, else the
/// activation midpoint.
pub fn persistent_init(
    store: &PersistentParticleStore,
    index: usize,
    input: &Array1<f64>,
    topo: &NetworkTopology,
) -> NetworkState {
    match store.get(index) {
        Some(rates) => NetworkState::from_rates(input, rates),
        None => NetworkState::midpoint(input, topo),
    }
}

/// Writes `iteration,residual,energy` rows.
pub fn write_trace_csv<W: Write>(mut out: W, rows: &[TraceRow]) -> io::Result<()> {
    writeln!(out, "iteration,residual,energy")?;
    for row in rows {
        writeln!(out, "{},{:e},{:.17e}", row.iteration, row.residual, row.energy)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, WeightInit};
    use ndarray::{array, Array2};
    use rand::distributions::{Distribution, Uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64, sizes: &[usize]) -> (NetworkTopology, Parameters) {
        let topo = NetworkTopology::new(sizes, 1.0).unwrap();
        let mut params = init_params(&topo, seed, WeightInit::FanUniform).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let b = Uniform::new(0.2, 0.6);
        for v in &mut params.biases {
            v.mapv_inplace(|_| b.sample(&mut rng));
        }
        (topo, params)
    }

    fn interior_state(topo: &NetworkTopology, seed: u64) -> NetworkState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Uniform::new(0.15, 0.85);
        let rates: Vec<Array1<f64>> = topo.sizes()[1..]
            .iter()
            .map(|&n| (0..n).map(|_| d.sample(&mut rng)).collect())
            .collect();
        let input: Array1<f64> = (0..topo.sizes()[0]).map(|_| d.sample(&mut rng)).collect();
        NetworkState::from_rates(&input, &rates)
    }

    #[test]
    fn zero_net_has_zero_drive() {
        let topo = NetworkTopology::new(&[3, 4, 2], 1.0).unwrap();
        let params = Parameters::zeros(&topo);
        let state = NetworkState::filled(&Array1::zeros(3), &topo, 0.0);
        for p in 1..=2 {
            let d = layer_drive(&state, &params, &topo, p, 0.0, None).unwrap();
            assert!(d.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn single_layer_fixed_point() {
        // P = 1 and c^(P) = 0: u = W r0 + b with r = u is a fixed point.
        let topo = NetworkTopology::new(&[2, 2], 1.0).unwrap();
        let mut params = Parameters::zeros(&topo);
        params.weights[0] = array![[0.2, 0.1], [0.05, 0.3]];
        params.biases[0] = array![0.1, 0.2];
        params.laterals[0] = Array2::eye(2);
        let x = array![0.5, 0.5];
        let u = params.weights[0].dot(&x) + &params.biases[0];
        let state = NetworkState::from_rates(&x, &[u]);
        let d = layer_drive(&state, &params, &topo, 1, 0.0, None).unwrap();
        assert!(d.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn drive_is_scaled_negative_energy_gradient() {
        for (seed, gamma) in [(1u64, 1.0), (2, 0.7), (3, 1.3)] {
            let (topo, params) = small_net(seed, &[4, 5, 3, 2]);
            let topo = topo.with_gamma(gamma).unwrap();
            let z = array![1.0, 0.0];
            let beta = 0.8;
            let state = interior_state(&topo, seed + 7);
            let depth = topo.depth();
            for p in 1..=depth {
                let drive = layer_drive(&state, &params, &topo, p, beta, Some(&z)).unwrap();
                let scale = gamma.powi(depth as i32 - p as i32) / 2.0;
                for i in 0..topo.sizes()[p] {
                    let h = 1e-5;
                    let mut sp = state.clone();
                    let mut sm = state.clone();
                    sp.r[p][i] += h;
                    sp.u[p][i] += h;
                    sm.r[p][i] -= h;
                    sm.u[p][i] -= h;
                    let fd = (energy_lt(&sp, &params, &topo, beta, Some(&z)).unwrap()
                        - energy_lt(&sm, &params, &topo, beta, Some(&z)).unwrap())
                        / (2.0 * h);
                    assert!(
                        (drive[i] + scale * fd).abs() < 1e-6,
                        "layer {p} unit {i}: drive {} vs {}",
                        drive[i],
                        -scale * fd
                    );
                }
            }
        }
    }

    #[test]
    fn zero_input_relaxes_immediately() {
        let topo = NetworkTopology::new(&[3, 4, 2], 1.0).unwrap();
        let mut params = init_params(&topo, 1, WeightInit::FanUniform).unwrap();
        params.biases.iter_mut().for_each(|b| b.fill(0.0));
        let state = NetworkState::filled(&Array1::zeros(3), &topo, 0.0);
        let out = relax(state, &params, &topo, &PhaseConfig::default(), None).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 2);
        assert_eq!(out.residual, 0.0);
        assert!(out.state.r[1..].iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn energy_zero_and_nudge_isolation() {
        let topo = NetworkTopology::new(&[3, 4, 2], 1.0).unwrap();
        let params = Parameters::zeros(&topo);
        let state = NetworkState::filled(&Array1::zeros(3), &topo, 0.0);
        assert_eq!(energy_lt(&state, &params, &topo, 0.0, None).unwrap(), 0.0);

        let (topo, params) = small_net(4, &[3, 4, 2]);
        let state = interior_state(&topo, 9);
        let z = array![0.0, 1.0];
        let e0 = energy_lt(&state, &params, &topo, 0.0, None).unwrap();
        let e1 = energy_lt(&state, &params, &topo, 0.5, Some(&z)).unwrap();
        let out = state.output();
        let sq: f64 = out.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((e1 - e0 - 2.0 * 0.5 * sq).abs() < 1e-12);
    }

    #[test]
    fn energy_non_increasing_along_small_steps() {
        for seed in 0..5u64 {
            let (topo, params) = small_net(seed, &[6, 5, 4]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Array1<f64> = (0..6).map(|_| rng.gen_f64()).collect();
            let phase = PhaseConfig::free(0.05, 300, 1e-14);
            let (_, rows) =
                relax_traced(NetworkState::midpoint(&x, &topo), &params, &topo, &phase, None).unwrap();
            for w in rows.windows(2) {
                assert!(w[1].energy <= w[0].energy + 1e-10);
            }
        }
    }

    trait GenF64 {
        fn gen_f64(&mut self) -> f64;
    }
    impl GenF64 for ChaCha8Rng {
        fn gen_f64(&mut self) -> f64 {
            Uniform::new(0.0, 1.0).sample(self)
        }
    }

    #[test]
    fn nudge_toward_own_output_changes_nothing() {
        let (topo, params) = small_net(11, &[5, 4, 3]);
        let x = array![0.2, 0.9, 0.4, 0.1, 0.6];
        let phase = PhaseConfig::free(0.5, 10_000, 1e-12);
        let free = relax(NetworkState::midpoint(&x, &topo), &params, &topo, &phase, None).unwrap();
        assert!(free.converged);
        let z = free.state.output().clone();
        let nudged = relax(
            NetworkState::midpoint(&x, &topo),
            &params,
            &topo,
            &phase.with_beta(1.0),
            Some(&z),
        )
        .unwrap();
        for (a, b) in free.state.r.iter().zip(&nudged.state.r) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        let topo = NetworkTopology::new(&[2, 2], 1.0).unwrap();
        let mut params = Parameters::zeros(&topo);
        params.biases[0] = array![f64::NAN, 0.0];
        let err = relax(
            NetworkState::midpoint(&array![0.1, 0.1], &topo),
            &params,
            &topo,
            &PhaseConfig::default(),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, CsmError::Divergence { layer: 1, iteration: 0 }));
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let (topo, params) = small_net(3, &[4, 6, 3]);
        let x = array![0.3, 0.3, 0.8, 0.1];
        let out = relax(
            NetworkState::midpoint(&x, &topo),
            &params,
            &topo,
            &PhaseConfig::free(0.01, 3, 1e-9),
            None,
        )
        .unwrap();
        assert_eq!(out.iterations, 3);
        assert!(!out.converged);
        assert!(out.residual >= 1e-9);
    }

    #[test]
    fn nudged_phase_requires_label() {
        let (topo, params) = small_net(3, &[4, 3, 2]);
        let s = NetworkState::midpoint(&Array1::zeros(4), &topo);
        assert!(layer_drive(&s, &params, &topo, 2, 1.0, None).is_err());
        assert!(layer_drive(&s, &params, &topo, 3, 0.0, None).is_err());
    }

    #[test]
    fn persistent_store_round_trip() {
        let (topo, params) = small_net(5, &[4, 3, 2]);
        let x = array![0.1, 0.2, 0.3, 0.4];
        let store = PersistentParticleStore::new();
        let s0 = persistent_init(&store, 3, &x, &topo);
        assert!(s0.r[1..].iter().all(|v| v.iter().all(|&r| r == 0.5)));
        let free = relax(s0, &params, &topo, &PhaseConfig::default(), None).unwrap();
        let mut store = store;
        store.save(3, &free.state);
        let back = persistent_init(&store, 3, &x, &topo);
        assert_eq!(back.r, free.state.r);
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        write_trace_csv(
            &mut buf,
            &[TraceRow {
                iteration: 0,
                residual: 0.5,
                energy: -1.0,
            }],
        )
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("iteration,residual,energy\n0,"));
    }
}
