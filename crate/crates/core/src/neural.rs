//! Feedforward joint-action Q-approximator with analytic gradients.
//!
//! Fixed architecture: dense layers with rectified-linear hidden activations
//! and an identity output head of one scalar per joint action, leader-major.
//! Gradients for the squared TD error are computed by hand (the valuation
//! path is a plain chain of matrix products), and parameters are updated by
//! an adaptive-moment optimizer with bias correction.
//!
//! Batched entry points deduplicate identical input rows before the matrix
//! products. Duplicate states are common in replay minibatches of a small
//! discrete environment, and the per-row activations of duplicates are
//! identical, so output-side residuals can be summed per unique row without
//! changing the math.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::task::{AssemblyTask, ChessboardState};

/// One-hot encoding of a chessboard frontier: per column, a block over
/// {sentinel 0, sub-task ids 1..K}.
#[derive(Clone, Debug, PartialEq)]
pub struct StateEncoding {
    values: Vec<f64>,
}

impl StateEncoding {
    pub fn encode(state: &ChessboardState, task: &AssemblyTask) -> StateEncoding {
        let block = task.n_subtasks() + 1;
        let mut values = vec![0.0; task.n_columns() as usize * block];
        for (ci, &id) in state.frontier.iter().enumerate() {
            values[ci * block + id as usize] = 1.0;
        }
        StateEncoding { values }
    }

    /// Encoded input width for a task: n_columns x (K+1).
    pub fn dim(task: &AssemblyTask) -> usize {
        task.n_columns() as usize * (task.n_subtasks() + 1)
    }

    pub fn from_values(values: Vec<f64>) -> StateEncoding {
        StateEncoding { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Parameter gradients, shaped like the network's weights and biases.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// A minibatch for TD regression: input rows, the selected joint-action
/// output index per row, and the constant regression target per row.
#[derive(Clone, Debug)]
pub struct TdBatch {
    pub inputs: Array2<f64>,
    pub action_index: Vec<usize>,
    pub targets: Vec<f64>,
}

/// Serializable network parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetState {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Dense feedforward network. `weights[k]` has shape `[out_k, in_k]`.
#[derive(Clone, Debug)]
pub struct QApproximator {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl QApproximator {
    /// Glorot-uniform weights (`±sqrt(6 / (fan_in + fan_out))`), zero biases.
    /// Layers are initialized in order, weights row-major, so a given rng
    /// seed always produces the same parameters.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<QApproximator> {
        Self::check_sizes(layer_sizes)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
            weights.push(Array2::from_shape_vec((fan_out, fan_in), data).expect("weight shape"));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(QApproximator { layer_sizes: layer_sizes.to_vec(), weights, biases })
    }

    /// All-zero parameters, mainly for tests.
    pub fn zeros(layer_sizes: &[usize]) -> Result<QApproximator> {
        Self::check_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_sizes.windows(2).map(|w| Array1::zeros(w[1])).collect();
        Ok(QApproximator { layer_sizes: layer_sizes.to_vec(), weights, biases })
    }

    fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("network needs at least input and output sizes".into()));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, layer: usize) -> &Array2<f64> {
        &self.weights[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Array2<f64> {
        &mut self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &Array1<f64> {
        &self.biases[layer]
    }

    /// Evaluate one input vector.
    pub fn forward_vec(&self, input: ArrayView1<f64>) -> Result<Array1<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input length {} does not match network input {}",
                input.len(),
                self.input_dim()
            )));
        }
        let last = self.n_layers() - 1;
        let mut h = input.to_owned();
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.dot(&h) + b;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        Ok(h)
    }

    /// Evaluate a batch of row vectors, one output row per input row.
    pub fn forward_batch(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input width {} does not match network input {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        let last = self.n_layers() - 1;
        let mut h = inputs.clone();
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(&w.t()) + b;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        Ok(h)
    }

    /// Q-values for one encoded state, reshaped to the joint-action matrix
    /// (rows leader actions, columns follower actions, index 0 = idle).
    pub fn forward(&self, s: &StateEncoding) -> Result<Array2<f64>> {
        let out = self.forward_vec(ArrayView1::from(s.as_slice()))?;
        let side = joint_side(out.len())?;
        Ok(out.into_shape_with_order((side, side)).expect("square output"))
    }

    pub fn to_state(&self) -> NetState {
        NetState {
            layer_sizes: self.layer_sizes.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        }
    }

    pub fn from_state(state: NetState) -> Result<QApproximator> {
        Self::check_sizes(&state.layer_sizes)?;
        if state.weights.len() != state.layer_sizes.len() - 1
            || state.biases.len() != state.weights.len()
        {
            return Err(Error::Shape("checkpoint layer count mismatch".into()));
        }
        for (k, w) in state.layer_sizes.windows(2).enumerate() {
            if state.weights[k].dim() != (w[1], w[0]) || state.biases[k].len() != w[1] {
                return Err(Error::Shape(format!("checkpoint layer {k} has wrong shape")));
            }
        }
        Ok(QApproximator {
            layer_sizes: state.layer_sizes,
            weights: state.weights,
            biases: state.biases,
        })
    }
}

/// Side length of the square joint-action head.
pub fn joint_side(output_dim: usize) -> Result<usize> {
    let side = (output_dim as f64).sqrt().round() as usize;
    if side * side != output_dim {
        return Err(Error::Shape(format!("output size {output_dim} is not a square")));
    }
    Ok(side)
}

/// Collapse duplicate rows: returns the unique rows in first-occurrence
/// order and a map from original row to unique row. Rows are keyed by their
/// exact bit patterns.
fn dedup_rows(inputs: &Array2<f64>) -> (Array2<f64>, Vec<usize>) {
    let n = inputs.nrows();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(n);
    let mut order: Vec<usize> = Vec::new();
    let mut map = Vec::with_capacity(n);
    for (i, row) in inputs.rows().into_iter().enumerate() {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        let next = order.len();
        let u = *index.entry(key).or_insert_with(|| {
            order.push(i);
            next
        });
        map.push(u);
    }
    let mut unique = Array2::zeros((order.len(), inputs.ncols()));
    for (u, &i) in order.iter().enumerate() {
        unique.row_mut(u).assign(&inputs.row(i));
    }
    (unique, map)
}

/// Gradient of the mean squared TD error over a batch, taken only through
/// each row's selected joint-action output; targets are constants. Also
/// returns the loss value.
pub fn td_gradient(net: &QApproximator, batch: &TdBatch) -> Result<(Gradients, f64)> {
    let b = batch.inputs.nrows();
    if b == 0 {
        return Err(Error::Shape("empty TD batch".into()));
    }
    if batch.action_index.len() != b || batch.targets.len() != b {
        return Err(Error::Shape("TD batch fields disagree on length".into()));
    }
    if batch.inputs.ncols() != net.input_dim() {
        return Err(Error::Shape(format!(
            "batch width {} does not match network input {}",
            batch.inputs.ncols(),
            net.input_dim()
        )));
    }
    let out_dim = net.output_dim();
    for &a in &batch.action_index {
        if a >= out_dim {
            return Err(Error::IndexOutOfRange(format!("action index {a} with {out_dim} outputs")));
        }
    }
    for &t in &batch.targets {
        if !t.is_finite() {
            return Err(Error::Validation(format!("non-finite TD target {t}")));
        }
    }

    let (unique, map) = dedup_rows(&batch.inputs);
    let last = net.n_layers() - 1;

    // Forward pass with traces over the unique rows. acts[k] holds the input
    // to layer k; zs[k] its pre-activation.
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(net.n_layers() + 1);
    let mut zs: Vec<Array2<f64>> = Vec::with_capacity(net.n_layers());
    acts.push(unique);
    for k in 0..net.n_layers() {
        let z = acts[k].dot(&net.weights[k].t()) + &net.biases[k];
        let h = if k < last { z.mapv(|v| v.max(0.0)) } else { z.clone() };
        zs.push(z);
        acts.push(h);
    }
    let q = acts.last().unwrap();

    // Residuals per sample, summed per unique row at the output layer.
    let mut delta = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    let scale = 2.0 / b as f64;
    for j in 0..b {
        let u = map[j];
        let a = batch.action_index[j];
        let resid = q[[u, a]] - batch.targets[j];
        loss += resid * resid;
        delta[[u, a]] += scale * resid;
    }
    loss /= b as f64;

    // Backward pass.
    let mut g_weights = vec![Array2::zeros((0, 0)); net.n_layers()];
    let mut g_biases = vec![Array1::zeros(0); net.n_layers()];
    for k in (0..net.n_layers()).rev() {
        g_weights[k] = delta.t().dot(&acts[k]);
        g_biases[k] = delta.sum_axis(Axis(0));
        if k > 0 {
            let mut prev = delta.dot(&net.weights[k]);
            prev.zip_mut_with(&zs[k - 1], |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = prev;
        }
    }
    Ok((Gradients { weights: g_weights, biases: g_biases }, loss))
}

/// Adaptive-moment optimizer state for one network.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m_weights: Vec<Array2<f64>>,
    v_weights: Vec<Array2<f64>>,
    m_biases: Vec<Array1<f64>>,
    v_biases: Vec<Array1<f64>>,
}

impl OptimizerState {
    pub fn new(net: &QApproximator, learning_rate: f64) -> OptimizerState {
        OptimizerState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m_weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    fn matches(&self, net: &QApproximator) -> bool {
        self.m_weights.len() == net.weights.len()
            && self
                .m_weights
                .iter()
                .zip(&net.weights)
                .all(|(m, w)| m.raw_dim() == w.raw_dim())
            && self
                .m_biases
                .iter()
                .zip(&net.biases)
                .all(|(m, b)| m.raw_dim() == b.raw_dim())
    }
}

/// One bias-corrected adaptive-moment update of every parameter in place.
pub fn optimizer_step(net: &mut QApproximator, grads: &Gradients, opt: &mut OptimizerState) -> Result<()> {
    if !opt.matches(net) {
        return Err(Error::Shape("optimizer state does not match network".into()));
    }
    if grads.weights.len() != net.weights.len()
        || grads
            .weights
            .iter()
            .zip(&net.weights)
            .any(|(g, w)| g.raw_dim() != w.raw_dim())
        || grads
            .biases
            .iter()
            .zip(&net.biases)
            .any(|(g, b)| g.raw_dim() != b.raw_dim())
    {
        return Err(Error::Shape("gradient shapes do not match network".into()));
    }
    opt.step += 1;
    let bc1 = 1.0 - opt.beta1.powi(opt.step as i32);
    let bc2 = 1.0 - opt.beta2.powi(opt.step as i32);
    let (b1, b2, lr, eps) = (opt.beta1, opt.beta2, opt.learning_rate, opt.epsilon);

    for k in 0..net.weights.len() {
        ndarray::Zip::from(&mut net.weights[k])
            .and(&mut opt.m_weights[k])
            .and(&mut opt.v_weights[k])
            .and(&grads.weights[k])
            .for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            });
        ndarray::Zip::from(&mut net.biases[k])
            .and(&mut opt.m_biases[k])
            .and(&mut opt.v_biases[k])
            .and(&grads.biases[k])
            .for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            });
    }
    Ok(())
}

/// Soft target update: every target parameter moves to
/// `tau * target + (1 - tau) * online`.
pub fn soft_update(target: &mut QApproximator, online: &QApproximator, tau: f64) -> Result<()> {
    if target.layer_sizes != online.layer_sizes {
        return Err(Error::Shape(format!(
            "target layers {:?} do not match online layers {:?}",
            target.layer_sizes, online.layer_sizes
        )));
    }
    for k in 0..target.weights.len() {
        ndarray::Zip::from(&mut target.weights[k])
            .and(&online.weights[k])
            .for_each(|t, &o| *t = tau * *t + (1.0 - tau) * o);
        ndarray::Zip::from(&mut target.biases[k])
            .and(&online.biases[k])
            .for_each(|t, &o| *t = tau * *t + (1.0 - tau) * o);
    }
    Ok(())
}
