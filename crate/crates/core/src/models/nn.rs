//! Single-hidden-layer feedforward network trained on an arbitrary residual loss.
//!
//! ```text
//!   f(x) = v₀ + Σ_{e=1..k} v_e · g(w_e0 + Σ_j w_ej x_j)
//! ```
//!
//! `v₀` is the output bias (the constant hidden unit) and `w_e0` are input-layer
//! biases. The training objective is
//!
//! ```text
//!   mean_i L(y_i − f(x_i)) + λ₁ Σ_{e,j≥1} w_ej² + λ₂ Σ_{e≥1} v_e²
//! ```
//!
//! minimized with Adam on seeded mini-batches. Biases are not penalized.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linear::check_xy;
use super::LossMode;
use crate::error::{Error, Result};
use crate::loss::CostSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Logistic,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    fn slope(self, g: f64) -> f64 {
        match self {
            Activation::Logistic => g * (1.0 - g),
            Activation::Tanh => 1.0 - g * g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NNConfig {
    pub hidden_nodes: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Half-width of a quadratic band replacing the pinball kink; 0 disables it.
    pub pinball_smoothing: f64,
}

impl Default for NNConfig {
    fn default() -> Self {
        NNConfig {
            hidden_nodes: 5,
            lambda1: 1e-5,
            lambda2: 1e-5,
            activation: Activation::Logistic,
            epochs: 150,
            learning_rate: 0.01,
            batch_size: 64,
            seed: 0,
            pinball_smoothing: 0.0,
        }
    }
}

impl NNConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_nodes == 0 {
            return Err(Error::Config("hidden_nodes must be >= 1".into()));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::Config("lambda1 and lambda2 must be >= 0".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        if !(self.pinball_smoothing >= 0.0) {
            return Err(Error::Config("pinball_smoothing must be >= 0".into()));
        }
        Ok(())
    }
}

/// Network parameters. `hidden[e]` holds `[w_e0, w_e1, …, w_em]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkWeights {
    pub hidden: Vec<Vec<f64>>,
    /// `[v₀, v₁, …, v_k]`.
    pub output: Vec<f64>,
    pub activation: Activation,
}

impl NetworkWeights {
    pub fn zeros(inputs: usize, hidden_nodes: usize, activation: Activation) -> Self {
        NetworkWeights {
            hidden: vec![vec![0.0; inputs + 1]; hidden_nodes],
            output: vec![0.0; hidden_nodes + 1],
            activation,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.hidden.first().map_or(0, |h| h.len() - 1)
    }

    fn n_params(&self) -> usize {
        self.hidden.iter().map(Vec::len).sum::<usize>() + self.output.len()
    }

    /// Flattened as hidden rows followed by output weights.
    pub fn to_flat(&self) -> Vec<f64> {
        self.hidden
            .iter()
            .flatten()
            .chain(&self.output)
            .copied()
            .collect()
    }

    pub fn from_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for row in &mut self.hidden {
            for v in row.iter_mut() {
                *v = it.next().expect("flat parameter vector too short");
            }
        }
        for v in &mut self.output {
            *v = it.next().expect("flat parameter vector too short");
        }
    }

    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize, hidden_buf: &mut [f64]) -> f64 {
        let mut out = self.output[0];
        for (e, w) in self.hidden.iter().enumerate() {
            let mut z = w[0];
            for (j, wj) in w[1..].iter().enumerate() {
                z += wj * x[(row, j)];
            }
            let g = self.activation.apply(z);
            hidden_buf[e] = g;
            out += self.output[e + 1] * g;
        }
        out
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut buf = vec![0.0; self.hidden.len()];
        (0..x.nrows())
            .map(|r| self.predict_row(x, r, &mut buf))
            .collect()
    }

    /// Σw² over non-bias hidden weights plus Σv² over non-bias output weights.
    pub fn penalized_norm(&self) -> (f64, f64) {
        let w: f64 = self.hidden.iter().flat_map(|h| &h[1..]).map(|v| v * v).sum();
        let v: f64 = self.output[1..].iter().map(|v| v * v).sum();
        (w, v)
    }
}

/// Residual loss used in training: a cost spec plus optional pinball smoothing.
#[derive(Debug, Clone, Copy)]
struct TrainingLoss {
    spec: CostSpec,
    smoothing: f64,
}

impl TrainingLoss {
    fn new(mode: LossMode, smoothing: f64) -> Result<Self> {
        let spec = mode.cost_spec()?;
        let smoothing = if matches!(mode, LossMode::Pinball { .. }) {
            smoothing
        } else {
            0.0
        };
        Ok(TrainingLoss { spec, smoothing })
    }

    /// (loss, dloss/de)
    #[inline]
    fn eval(&self, e: f64) -> (f64, f64) {
        let eps = self.smoothing;
        if eps > 0.0 && e.abs() <= eps {
            let tau = self.spec.tau;
            let wgt = if e > 0.0 { tau } else { 1.0 - tau };
            return (wgt * e * e / (2.0 * eps), wgt * e / eps);
        }
        if eps > 0.0 {
            let tau = self.spec.tau;
            return if e > 0.0 {
                (tau * (e - eps / 2.0), tau)
            } else {
                ((1.0 - tau) * (-e - eps / 2.0), tau - 1.0)
            };
        }
        (self.spec.value(e), self.spec.derivative(e))
    }
}

/// Objective value and gradient over `rows`, accumulated into `grad`.
fn objective_on_rows(
    net: &NetworkWeights,
    x: &DMatrix<f64>,
    y: &[f64],
    rows: &[usize],
    loss: &TrainingLoss,
    config: &NNConfig,
    grad: &mut [f64],
    hidden_buf: &mut [f64],
) -> f64 {
    let k = net.hidden.len();
    let width = net.n_inputs() + 1;
    let out_offset = k * width;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let inv_n = 1.0 / rows.len() as f64;
    let mut total = 0.0;
    for &r in rows {
        let f = net.predict_row(x, r, hidden_buf);
        let (l, dl) = loss.eval(y[r] - f);
        total += l;
        // d/df of L(y − f) is −L'(e)
        let df = -dl * inv_n;
        grad[out_offset] += df;
        for e in 0..k {
            let g = hidden_buf[e];
            grad[out_offset + e + 1] += df * g;
            let dz = df * net.output[e + 1] * net.activation.slope(g);
            let base = e * width;
            grad[base] += dz;
            for j in 1..width {
                grad[base + j] += dz * x[(r, j - 1)];
            }
        }
    }
    let mut objective = total * inv_n;
    for e in 0..k {
        let base = e * width;
        for j in 1..width {
            let w = net.hidden[e][j];
            objective += config.lambda1 * w * w;
            grad[base + j] += 2.0 * config.lambda1 * w;
        }
        let v = net.output[e + 1];
        objective += config.lambda2 * v * v;
        grad[out_offset + e + 1] += 2.0 * config.lambda2 * v;
    }
    objective
}

/// Full-data training objective and its gradient with respect to the flattened
/// parameters (see [`NetworkWeights::to_flat`]).
pub fn objective_and_gradient(
    net: &NetworkWeights,
    x: &DMatrix<f64>,
    y: &[f64],
    config: &NNConfig,
    mode: LossMode,
) -> Result<(f64, Vec<f64>)> {
    let loss = TrainingLoss::new(mode, config.pinball_smoothing)?;
    let rows: Vec<usize> = (0..y.len()).collect();
    let mut grad = vec![0.0; net.n_params()];
    let mut buf = vec![0.0; net.hidden.len()];
    let obj = objective_on_rows(net, x, y, &rows, &loss, config, &mut grad, &mut buf);
    Ok((obj, grad))
}

/// Adam on shuffled mini-batches with a cosine-decayed step size. Hidden
/// weights start uniform in ±1/sqrt(m+1), the output bias at the mean target.
pub fn train_network(
    x: &DMatrix<f64>,
    y: &[f64],
    config: &NNConfig,
    mode: LossMode,
) -> Result<NetworkWeights> {
    check_xy(x, y)?;
    config.validate()?;
    let loss = TrainingLoss::new(mode, config.pinball_smoothing)?;
    let (n, m) = x.shape();
    let k = config.hidden_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut net = NetworkWeights::zeros(m, k, config.activation);
    let init_scale = 1.0 / ((m + 1) as f64).sqrt();
    for row in &mut net.hidden {
        for w in row.iter_mut() {
            *w = rng.random_range(-init_scale..init_scale);
        }
    }
    let out_scale = 1.0 / (k as f64).sqrt();
    for v in net.output[1..].iter_mut() {
        *v = rng.random_range(-out_scale..out_scale) * 0.1;
    }
    net.output[0] = y.iter().sum::<f64>() / n as f64;

    let n_params = net.n_params();
    let mut params = net.to_flat();
    let mut grad = vec![0.0; n_params];
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let (beta1, beta2, eps) = (0.9_f64, 0.999_f64, 1e-8);
    let mut step = 0i32;
    let mut hidden_buf = vec![0.0; k];
    let mut order: Vec<usize> = (0..n).collect();
    let batch = config.batch_size.min(n);

    for epoch in 0..config.epochs {
        // cosine decay from the configured rate down to 1% of it
        let progress = epoch as f64 / config.epochs as f64;
        let lr = config.learning_rate * (0.01 + 0.99 * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
        order.shuffle(&mut rng);
        let mut epoch_obj = 0.0;
        for chunk in order.chunks(batch) {
            net.from_flat(&params);
            let obj = objective_on_rows(&net, x, y, chunk, &loss, config, &mut grad, &mut hidden_buf);
            epoch_obj += obj;
            step += 1;
            let c1 = 1.0 - beta1.powi(step);
            let c2 = 1.0 - beta2.powi(step);
            for i in 0..n_params {
                m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                params[i] -= lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
            }
        }
        if !epoch_obj.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Training(format!(
                "objective became non-finite in epoch {epoch}; try a smaller learning rate (currently {})",
                config.learning_rate
            )));
        }
    }
    net.from_flat(&params);
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::linear::ols_coefficients;

    fn linear_problem(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = (0..n)
            .map(|r| 0.5 + 0.2 * x[(r, 0)] - 0.1 * x[(r, 1)] + rng.random_range(-0.05..0.05))
            .collect();
        (x, y)
    }

    fn random_net(m: usize, k: usize, seed: u64, act: Activation) -> NetworkWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = NetworkWeights::zeros(m, k, act);
        let flat: Vec<f64> = (0..net.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        net.from_flat(&flat);
        net
    }

    fn mse(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn zero_hidden_weights_give_constant_output() {
        let mut net = NetworkWeights::zeros(3, 2, Activation::Logistic);
        net.output = vec![0.3, 0.4, -0.2];
        let x = DMatrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64);
        let out = net.predict(&x);
        // v0 + Σ v_e · g(0) with g(0) = 0.5
        for v in out {
            assert!((v - (0.3 + 0.5 * (0.4 - 0.2))).abs() < 1e-15);
        }
        let all_zero = NetworkWeights::zeros(3, 2, Activation::Logistic);
        assert!(all_zero.predict(&x).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = linear_problem(40, 2);
        let config = NNConfig {
            hidden_nodes: 3,
            lambda1: 0.01,
            lambda2: 0.02,
            ..NNConfig::default()
        };
        let modes = [
            LossMode::Symmetric,
            LossMode::QqcApprox { a: 0.3, b: 1.0 },
            LossMode::Pinball { tau: 0.3 },
        ];
        for act in [Activation::Logistic, Activation::Tanh] {
            for mode in modes {
                for point in 0..5u64 {
                    let net = random_net(2, 3, 100 + point, act);
                    let (_, grad) = objective_and_gradient(&net, &x, &y, &config, mode).unwrap();
                    let flat = net.to_flat();
                    let h = 1e-6;
                    for i in 0..flat.len() {
                        let mut probe = net.clone();
                        let mut p = flat.clone();
                        p[i] += h;
                        probe.from_flat(&p);
                        let up = objective_and_gradient(&probe, &x, &y, &config, mode).unwrap().0;
                        p[i] -= 2.0 * h;
                        probe.from_flat(&p);
                        let down = objective_and_gradient(&probe, &x, &y, &config, mode).unwrap().0;
                        let fd = (up - down) / (2.0 * h);
                        let tol = 1e-4 * fd.abs().max(1e-3);
                        assert!((grad[i] - fd).abs() <= tol, "{mode:?} param {i}: {} vs {fd}", grad[i]);
                    }
                }
            }
        }
    }

    #[test]
    fn symmetric_net_tracks_ols_on_linear_truth() {
        let (x, y) = linear_problem(600, 5);
        let (xv, yv) = linear_problem(400, 6);
        let config = NNConfig {
            hidden_nodes: 1,
            epochs: 200,
            lambda1: 0.0,
            lambda2: 0.0,
            ..NNConfig::default()
        };
        let net = train_network(&x, &y, &config, LossMode::Symmetric).unwrap();
        let ols = ols_coefficients(&x, &y, None).unwrap();
        let nn_mse = mse(&yv, &net.predict(&xv));
        let ols_mse = mse(&yv, &ols.predict(&xv));
        assert!(nn_mse <= 1.1 * ols_mse, "nn {nn_mse} vs ols {ols_mse}");
    }

    #[test]
    fn pinball_half_converges_to_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 1000;
        let x = DMatrix::<f64>::zeros(n, 2);
        let mut y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0f64).powi(2)).collect();
        let config = NNConfig {
            hidden_nodes: 2,
            epochs: 100,
            ..NNConfig::default()
        };
        let net = train_network(&x, &y, &config, LossMode::Pinball { tau: 0.5 }).unwrap();
        let pred = net.predict(&x)[0];
        y.sort_by(f64::total_cmp);
        let median = 0.5 * (y[n / 2 - 1] + y[n / 2]);
        assert!((pred - median).abs() < 0.05, "{pred} vs {median}");
    }

    #[test]
    fn asymmetric_training_shifts_forecasts_down() {
        let (x, y) = linear_problem(800, 12);
        let config = NNConfig {
            hidden_nodes: 3,
            epochs: 80,
            ..NNConfig::default()
        };
        let sym = train_network(&x, &y, &config, LossMode::Symmetric).unwrap();
        let asym = train_network(&x, &y, &config, LossMode::QqcApprox { a: 0.2, b: 1.0 }).unwrap();
        let bias = |net: &NetworkWeights| {
            y.iter().zip(net.predict(&x)).map(|(a, f)| a - f).sum::<f64>() / y.len() as f64
        };
        assert!(bias(&asym) >= bias(&sym));
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = linear_problem(100, 1);
        let config = NNConfig {
            epochs: 10,
            seed: 77,
            ..NNConfig::default()
        };
        let a = train_network(&x, &y, &config, LossMode::Symmetric).unwrap();
        let b = train_network(&x, &y, &config, LossMode::Symmetric).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stronger_penalty_shrinks_weights() {
        let (x, y) = linear_problem(200, 21);
        let mut last = f64::INFINITY;
        for lambda in [0.0, 1e-4, 1e-3, 1e-2] {
            let config = NNConfig {
                hidden_nodes: 4,
                lambda1: lambda,
                lambda2: lambda,
                epochs: 300,
                batch_size: 200,
                learning_rate: 0.02,
                seed: 3,
                ..NNConfig::default()
            };
            let net = train_network(&x, &y, &config, LossMode::Symmetric).unwrap();
            let (w, v) = net.penalized_norm();
            assert!(w + v <= last + 1e-9, "lambda {lambda}: {} > {last}", w + v);
            last = w + v;
        }
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = linear_problem(50, 1);
        let config = NNConfig {
            learning_rate: 1e308,
            epochs: 5,
            ..NNConfig::default()
        };
        assert!(matches!(
            train_network(&x, &y, &config, LossMode::Symmetric),
            Err(Error::Training(_))
        ));
    }
}
