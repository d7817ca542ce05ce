//! Linear supervised similarity matching with a single hidden layer.
//!
//! Training clamps the output to the label and relaxes the hidden layer to the
//! fixed point of `ẏ = W₁x − 2L₁y + W₂ᵀz`. Prediction runs the joint flow with
//! free output units, `ż = W₂y − L₂z`, whose laterals `L₂` are trained by a
//! delta rule so that labels are fixed points.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{CsmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSsmParams {
    /// Hidden × input.
    pub w1: Array2<f64>,
    /// Hidden × hidden, symmetric.
    pub l1: Array2<f64>,
    /// Output × hidden.
    pub w2: Array2<f64>,
    /// Output × output.
    pub l2: Array2<f64>,
}

impl LinearSsmParams {
    /// Feedforward weights uniform in `±scale`, both laterals identity.
    pub fn init(inputs: usize, hidden: usize, outputs: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |r, c| {
            if scale > 0.0 {
                let u = Uniform::new_inclusive(-scale, scale);
                Array2::from_shape_simple_fn((r, c), || u.sample(&mut rng))
            } else {
                Array2::zeros((r, c))
            }
        };
        let w1 = draw(hidden, inputs);
        let w2 = draw(outputs, hidden);
        Self {
            w1,
            l1: Array2::eye(hidden),
            w2,
            l2: Array2::eye(outputs),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w1.ncols(), self.w1.nrows(), self.w2.nrows())
    }

    fn check(&self, x: &Array1<f64>, z: Option<&Array1<f64>>) -> Result<()> {
        let (n, m, k) = self.dims();
        let ok = self.l1.dim() == (m, m)
            && self.w2.ncols() == m
            && self.l2.dim() == (k, k)
            && x.len() == n
            && z.is_none_or(|z| z.len() == k);
        if ok {
            Ok(())
        } else {
            Err(CsmError::Shape(format!(
                "linear network {n}-{m}-{k} given input {} and label {:?}",
                x.len(),
                z.map(|z| z.len())
            )))
        }
    }
}

/// How the hidden fixed point is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub enum HiddenSolve {
    #[default]
    Direct,
    Flow {
        step: f64,
        max_iterations: usize,
        tolerance: f64,
    },
}


fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn hidden_input(params: &LinearSsmParams, x: &Array1<f64>, z: &Array1<f64>) -> Array1<f64> {
    params.w1.dot(x) + params.w2.t().dot(z)
}

/// Hidden fixed point `y = (2L₁)⁻¹(W₁x + W₂ᵀz)` for clamped output `z`.
pub fn lin_relax_hidden(
    x: &Array1<f64>,
    z: &Array1<f64>,
    params: &LinearSsmParams,
    method: HiddenSolve,
) -> Result<Array1<f64>> {
    params.check(x, Some(z))?;
    let drive_in = hidden_input(params, x, z);
    match method {
        HiddenSolve::Direct => {
            let a = to_na(&params.l1) * 2.0;
            let svd = a.clone().svd(false, false);
            let max = svd.singular_values.max();
            let min = svd.singular_values.min();
            if !(min > 1e-12 * max.max(1e-300)) {
                return Err(CsmError::Singular(format!(
                    "L1 condition number {:e}",
                    max / min
                )));
            }
            let rhs = DVector::from_iterator(drive_in.len(), drive_in.iter().copied());
            let y = a
                .lu()
                .solve(&rhs)
                .ok_or_else(|| CsmError::Singular("L1 is not invertible".into()))?;
            Ok(Array1::from_iter(y.iter().copied()))
        }
        HiddenSolve::Flow {
            step,
            max_iterations,
            tolerance,
        } => {
            let mut y = Array1::zeros(params.l1.nrows());
            for _ in 0..max_iterations {
                let dy = &drive_in - &(params.l1.dot(&y) * 2.0);
                let residual = dy.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if !residual.is_finite() {
                    return Err(CsmError::Singular("hidden flow diverged".into()));
                }
                if residual < tolerance {
                    return Ok(y);
                }
                y.scaled_add(step, &dy);
            }
            Err(CsmError::NonConvergence {
                iterations: max_iterations,
                residual: (&drive_in - &(params.l1.dot(&y) * 2.0))
                    .iter()
                    .fold(0.0, |m: f64, v| m.max(v.abs())),
            })
        }
    }
}

/// One online step on `(x, z)`; returns the hidden fixed point used.
pub fn lin_train_step(
    x: &Array1<f64>,
    z: &Array1<f64>,
    params: &mut LinearSsmParams,
    eta: f64,
    method: HiddenSolve,
) -> Result<Array1<f64>> {
    let y = lin_relax_hidden(x, z, params, method)?;
    let (n, m, k) = params.dims();
    let output_error = params.w2.dot(&y) - params.l2.dot(z);
    for i in 0..m {
        for j in 0..n {
            params.w1[(i, j)] += eta * (y[i] * x[j] - params.w1[(i, j)]);
        }
        for j in 0..m {
            params.l1[(i, j)] += eta * (y[i] * y[j] - params.l1[(i, j)]);
        }
    }
    for i in 0..k {
        for j in 0..m {
            params.w2[(i, j)] += eta * (z[i] * y[j] - params.w2[(i, j)]);
        }
        for j in 0..k {
            params.l2[(i, j)] += eta * output_error[i] * z[j];
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictConfig {
    pub step: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            step: 0.1,
            max_iterations: 200_000,
            tolerance: 1e-10,
        }
    }
}

/// Output `z` at the fixed point of the joint free-running flow, started from zero.
pub fn lin_predict(
    x: &Array1<f64>,
    params: &LinearSsmParams,
    cfg: &PredictConfig,
) -> Result<Array1<f64>> {
    params.check(x, None)?;
    let (_, m, k) = params.dims();
    let feed = params.w1.dot(x);
    let mut y = Array1::<f64>::zeros(m);
    let mut z = Array1::<f64>::zeros(k);
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iterations {
        let dy = &feed - &(params.l1.dot(&y) * 2.0) + params.w2.t().dot(&z);
        let dz = params.w2.dot(&y) - params.l2.dot(&z);
        residual = dy.iter().chain(&dz).fold(0.0_f64, |a, v| a.max(v.abs()));
        if !residual.is_finite() || residual > 1e12 {
            break;
        }
        if residual < cfg.tolerance {
            return Ok(z);
        }
        y.scaled_add(cfg.step, &dy);
        z.scaled_add(cfg.step, &dz);
    }
    Err(CsmError::NonConvergence {
        iterations: cfg.max_iterations,
        residual,
    })
}

/// Direct solve of the joint fixed point, for cross-checking [`lin_predict`].
pub fn lin_predict_direct(x: &Array1<f64>, params: &LinearSsmParams) -> Result<Array1<f64>> {
    params.check(x, None)?;
    let (_, m, k) = params.dims();
    let mut a = DMatrix::zeros(m + k, m + k);
    let mut rhs = DVector::zeros(m + k);
    let feed = params.w1.dot(x);
    for i in 0..m {
        rhs[i] = feed[i];
        for j in 0..m {
            a[(i, j)] = 2.0 * params.l1[(i, j)];
        }
        for j in 0..k {
            a[(i, m + j)] = -params.w2[(j, i)];
        }
    }
    for i in 0..k {
        for j in 0..m {
            a[(m + i, j)] = -params.w2[(i, j)];
        }
        for j in 0..k {
            a[(m + i, m + j)] = params.l2[(i, j)];
        }
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CsmError::Singular("joint linear system".into()))?;
    Ok(Array1::from_iter(sol.iter().skip(m).copied()))
}

/// Linear regression task used by the demo.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDemoConfig {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub eta: f64,
    /// When set, step `t` uses `eta · τ / (τ + t)`.
    pub eta_decay: Option<f64>,
    pub steps: usize,
    pub eval_every: usize,
    pub test_size: usize,
    /// Standard deviation of Gaussian noise added to training inputs.
    pub input_noise: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for LinearDemoConfig {
    fn default() -> Self {
        Self {
            inputs: 5,
            hidden: 2,
            outputs: 2,
            eta: 0.01,
            eta_decay: Some(2000.0),
            steps: 100_000,
            eval_every: 500,
            test_size: 200,
            input_noise: 0.0,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearDemoReport {
    /// `(step, test MSE)`, starting at step 0.
    pub curve: Vec<(usize, f64)>,
    /// `(predicted, desired)` output entries on the test set after training.
    pub pairs: Vec<(f64, f64)>,
    pub params: LinearSsmParams,
}

impl LinearDemoReport {
    pub fn initial_mse(&self) -> f64 {
        self.curve.first().map_or(f64::NAN, |c| c.1)
    }

    pub fn final_mse(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |c| c.1)
    }

    /// Pearson correlation of predicted against desired entries.
    pub fn correlation(&self) -> f64 {
        pearson(&self.pairs)
    }

    pub fn write_curve_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "step,test_mse")?;
        for (s, e) in &self.curve {
            writeln!(out, "{s},{e:.12e}")?;
        }
        Ok(())
    }

    pub fn write_pairs_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "predicted,desired")?;
        for (p, d) in &self.pairs {
            writeln!(out, "{p:.12e},{d:.12e}")?;
        }
        Ok(())
    }
}

pub fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (ma, mb) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn uniform_vec(rng: &mut impl Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.gen_range(-1.0..=1.0))
}

/// Held-out MSE, or infinity while the free-running flow is still unstable.
fn test_mse(params: &LinearSsmParams, test: &[(Array1<f64>, Array1<f64>)]) -> Result<f64> {
    let cfg = PredictConfig::default();
    let mut sum = 0.0;
    for (x, z) in test {
        match lin_predict(x, params, &cfg) {
            Ok(zp) => sum += (&zp - z).mapv(|d| d * d).sum(),
            Err(CsmError::NonConvergence { .. }) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        }
    }
    Ok(sum / test.len() as f64)
}

/// Trains on `z = Ax` with fresh samples each step and tracks held-out MSE.
pub fn run_linear_demo(cfg: &LinearDemoConfig) -> Result<LinearDemoReport> {
    if cfg.eval_every == 0 || cfg.test_size == 0 {
        return Err(CsmError::Config("eval_every and test_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a = Array2::from_shape_simple_fn((cfg.outputs, cfg.inputs), || rng.gen_range(-1.0..=1.0));
    let test: Vec<_> = (0..cfg.test_size)
        .map(|_| {
            let x = uniform_vec(&mut rng, cfg.inputs);
            let z = a.dot(&x);
            (x, z)
        })
        .collect();
    let noise = Normal::new(0.0, cfg.input_noise.max(0.0))
        .map_err(|e| CsmError::Config(format!("input noise: {e}")))?;
    let mut params = LinearSsmParams::init(
        cfg.inputs,
        cfg.hidden,
        cfg.outputs,
        cfg.init_scale,
        cfg.seed.wrapping_add(1),
    );
    let mut curve = vec![(0, test_mse(&params, &test)?)];
    for step in 1..=cfg.steps {
        let clean = uniform_vec(&mut rng, cfg.inputs);
        let z = a.dot(&clean);
        let x = if cfg.input_noise > 0.0 {
            clean.mapv(|v| v + noise.sample(&mut rng))
        } else {
            clean
        };
        let eta = match cfg.eta_decay {
            Some(tau) => cfg.eta * tau / (tau + step as f64),
            None => cfg.eta,
        };
        lin_train_step(&x, &z, &mut params, eta, HiddenSolve::Direct)?;
        if step % cfg.eval_every == 0 || step == cfg.steps {
            curve.push((step, test_mse(&params, &test)?));
        }
    }
    let cfg_p = PredictConfig::default();
    let mut pairs = Vec::with_capacity(cfg.test_size * cfg.outputs);
    for (x, z) in &test {
        let zp = lin_predict(x, &params, &cfg_p)?;
        pairs.extend(zp.iter().copied().zip(z.iter().copied()));
    }
    Ok(LinearDemoReport {
        curve,
        pairs,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn flow() -> HiddenSolve {
        HiddenSolve::Flow {
            step: 0.1,
            max_iterations: 100_000,
            tolerance: 1e-12,
        }
    }

    #[test]
    fn homogeneous_zero() {
        let p = LinearSsmParams::init(3, 2, 2, 0.5, 1);
        let y = lin_relax_hidden(&Array1::zeros(3), &Array1::zeros(2), &p, HiddenSolve::Direct)
            .unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_identity_lateral() {
        let mut p = LinearSsmParams::init(3, 2, 2, 0.5, 2);
        p.l1 = Array2::eye(2) * 0.5;
        let x = array![0.3, -0.2, 0.9];
        let z = array![1.0, -0.5];
        let y = lin_relax_hidden(&x, &z, &p, HiddenSolve::Direct).unwrap();
        let expect = p.w1.dot(&x) + p.w2.t().dot(&z);
        assert!((&y - &expect).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn flow_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..10 {
            let mut p = LinearSsmParams::init(5, 3, 2, 1.0, seed);
            let b = Array2::from_shape_simple_fn((3, 3), || rng.gen_range(-0.3..0.3));
            p.l1 = Array2::eye(3) + b.dot(&b.t());
            let x = uniform_vec(&mut rng, 5);
            let z = uniform_vec(&mut rng, 2);
            let d = lin_relax_hidden(&x, &z, &p, HiddenSolve::Direct).unwrap();
            let f = lin_relax_hidden(&x, &z, &p, flow()).unwrap();
            assert!((&d - &f).iter().all(|e| e.abs() < 1e-8), "{d} vs {f}");
        }
    }

    #[test]
    fn singular_lateral_rejected() {
        let mut p = LinearSsmParams::init(2, 2, 1, 0.5, 3);
        p.l1 = array![[1.0, 1.0], [1.0, 1.0]];
        let err = lin_relax_hidden(&array![1.0, 0.0], &array![0.0], &p, HiddenSolve::Direct);
        assert!(matches!(err, Err(CsmError::Singular(_))));
    }

    #[test]
    fn zero_hidden_is_pure_decay() {
        let mut p = LinearSsmParams::init(2, 2, 1, 0.5, 4);
        let before = p.clone();
        // zero input and label give y = 0
        lin_train_step(&array![0.0, 0.0], &array![0.0], &mut p, 0.1, HiddenSolve::Direct).unwrap();
        assert!((&p.w1 - &(&before.w1 * 0.9)).iter().all(|d| d.abs() < 1e-15));
        assert!(p.l1.iter().zip(&before.l1).all(|(a, b)| (a - b * 0.9).abs() < 1e-15));
        assert_eq!(p.l2, before.l2);
    }

    #[test]
    fn lateral_stays_symmetric() {
        let mut p = LinearSsmParams::init(4, 3, 2, 0.5, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let x = uniform_vec(&mut rng, 4);
            let z = uniform_vec(&mut rng, 2);
            lin_train_step(&x, &z, &mut p, 0.05, HiddenSolve::Direct).unwrap();
        }
        assert!((&p.l1 - &p.l1.t()).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn zero_params_predict_zero() {
        let mut p = LinearSsmParams::init(3, 2, 2, 0.0, 0);
        p.l1 = Array2::zeros((2, 2));
        let z = lin_predict(&array![0.5, -1.0, 2.0], &p, &PredictConfig::default()).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flow_prediction_matches_direct() {
        let report = run_linear_demo(&LinearDemoConfig {
            steps: 20_000,
            eval_every: 10_000,
            test_size: 20,
            ..Default::default()
        })
        .unwrap();
        let x = array![0.2, -0.4, 0.9, 0.1, -0.7];
        let a = lin_predict(&x, &report.params, &PredictConfig::default()).unwrap();
        let b = lin_predict_direct(&x, &report.params).unwrap();
        assert!((&a - &b).iter().all(|d| d.abs() < 1e-8));
    }

    #[test]
    fn demo_error_decreases() {
        let report = run_linear_demo(&LinearDemoConfig::default()).unwrap();
        assert!(report.final_mse() < report.initial_mse() / 100.0, "{:?}", report.curve);
        assert!(report.correlation() >= 0.99);
    }
}
