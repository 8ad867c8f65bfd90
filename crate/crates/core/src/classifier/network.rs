//! One-dimensional CNN: conv(kernel, channels) + ReLU, flatten, dense
//! layers with ReLU, inverted dropout after one dense layer, and a softmax
//! (classification) or linear (regression) head.
//!
//! Batches are rows of a matrix. Convolution is computed as an im2col
//! matrix product; the flattened conv output is indexed `t * channels + c`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Softmax,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_length: usize,
    #[serde(default = "one")]
    pub in_channels: usize,
    pub kernel: usize,
    pub conv_channels: usize,
    /// Dense layer widths; the last one is the output size.
    pub dense_sizes: Vec<usize>,
    pub dropout_p: f64,
    /// Index of the dense layer whose output is dropped out.
    #[serde(default)]
    pub dropout_after: usize,
    pub head: Head,
}

fn one() -> usize {
    1
}

/// Per-layer parameter counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub conv: usize,
    pub dense: Vec<usize>,
    pub total: usize,
}

impl NetworkConfig {
    /// Reference classifier: 33-long input, 24 kernels of width 4,
    /// dense 2048 → 1024 → `n_classes`, dropout 0.5 after the first dense layer.
    pub fn reference(n_classes: usize) -> Self {
        Self {
            input_length: 33,
            in_channels: 1,
            kernel: 4,
            conv_channels: 24,
            dense_sizes: vec![2048, 1024, n_classes],
            dropout_p: 0.5,
            dropout_after: 0,
            head: Head::Softmax,
        }
    }

    /// Positions produced by the valid convolution.
    pub fn conv_positions(&self) -> usize {
        self.input_length + 1 - self.kernel
    }

    pub fn flat_size(&self) -> usize {
        self.conv_positions() * self.conv_channels
    }

    pub fn input_width(&self) -> usize {
        self.in_channels * self.input_length
    }

    pub fn output_size(&self) -> usize {
        *self.dense_sizes.last().unwrap_or(&self.flat_size())
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_length == 0 || self.in_channels == 0 || self.kernel == 0 || self.conv_channels == 0 {
            return Err(Error::config("network sizes must be positive"));
        }
        if self.kernel > self.input_length {
            return Err(Error::config("kernel longer than the input"));
        }
        if self.dense_sizes.iter().any(|&d| d == 0) {
            return Err(Error::config("dense layer sizes must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config("dropout_p must lie in [0, 1)"));
        }
        if self.dropout_p > 0.0 && self.dropout_after + 1 >= self.dense_sizes.len() {
            return Err(Error::config("dropout must follow a hidden dense layer"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> ParamCounts {
        let conv = self.in_channels * self.kernel * self.conv_channels + self.conv_channels;
        let mut inputs = self.flat_size();
        let dense: Vec<usize> = self
            .dense_sizes
            .iter()
            .map(|&out| {
                let n = inputs * out + out;
                inputs = out;
                n
            })
            .collect();
        let total = conv + dense.iter().sum::<usize>();
        ParamCounts { conv, dense, total }
    }
}

pub fn param_count(config: &NetworkConfig) -> ParamCounts {
    config.param_count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `(inputs, outputs)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Fixed per-position affine map applied to every input row before the
/// convolution; fitted on the training rows, never trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    /// Strictly positive.
    pub scale: Vec<f64>,
}

impl InputNorm {
    /// Column means and standard deviations of `rows`; constant columns get scale 1.
    pub fn fit(rows: ArrayView2<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::config("input statistics need at least one row"));
        }
        let mean = rows.mean_axis(Axis(0)).expect("non-empty").to_vec();
        let scale = rows
            .std_axis(Axis(0), 0.0)
            .iter()
            .map(|&s| if s > 1e-12 { s } else { 1.0 })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, inputs: ArrayView2<f64>) -> Array2<f64> {
        let mut out = inputs.to_owned();
        for mut row in out.outer_iter_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub config: NetworkConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_norm: Option<InputNorm>,
    /// `(in_channels * kernel, conv_channels)`; row `c * kernel + j`.
    pub conv_weight: Array2<f64>,
    pub conv_bias: Array1<f64>,
    pub dense: Vec<DenseLayer>,
}

/// Dropout behaviour of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout mask drawn from a stream seeded with `seed`.
    Train { seed: u64 },
}

/// Supervision for a batch.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Labels(&'a [usize]),
    Values(ArrayView2<'a, f64>),
}

impl NetworkParams {
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        if config.dense_sizes.is_empty() {
            return Err(Error::config("network needs at least one dense layer"));
        }
        let mut inputs = config.flat_size();
        let dense = config
            .dense_sizes
            .iter()
            .map(|&out| {
                let layer = DenseLayer {
                    weight: Array2::zeros((inputs, out)),
                    bias: Array1::zeros(out),
                };
                inputs = out;
                layer
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            input_norm: None,
            conv_weight: Array2::zeros((config.in_channels * config.kernel, config.conv_channels)),
            conv_bias: Array1::zeros(config.conv_channels),
            dense,
        })
    }

    /// He-normal weights, zero biases.
    pub fn init<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let fill = |w: &mut Array2<f64>, rng: &mut R| {
            let fan_in = w.nrows() as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
            w.iter_mut().for_each(|v| *v = normal.sample(rng));
        };
        fill(&mut params.conv_weight, rng);
        for layer in &mut params.dense {
            fill(&mut layer.weight, rng);
        }
        Ok(params)
    }

    /// All tensors in a fixed order: conv weight, conv bias, then each dense weight and bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.conv_weight.as_slice().expect("standard layout"),
            self.conv_bias.as_slice().expect("standard layout"),
        ];
        for layer in &self.dense {
            out.push(layer.weight.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.conv_weight.as_slice_mut().expect("standard layout"),
            self.conv_bias.as_slice_mut().expect("standard layout"),
        ];
        for layer in &mut self.dense {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = vec!["conv.weight".to_string(), "conv.bias".to_string()];
        for i in 0..self.dense.len() {
            out.push(format!("dense_{}.weight", i + 1));
            out.push(format!("dense_{}.bias", i + 1));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        let norm_ok = self.input_norm.as_ref().is_none_or(|n| {
            n.mean.iter().all(|v| v.is_finite()) && n.scale.iter().all(|v| v.is_finite() && *v > 0.0)
        });
        norm_ok && self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.config.input_width() {
            return Err(Error::config(format!(
                "input width {} but network expects {}",
                inputs.ncols(),
                self.config.input_width()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::config("empty batch"));
        }
        if let Some(n) = &self.input_norm {
            if n.mean.len() != inputs.ncols() || n.scale.len() != inputs.ncols() {
                return Err(Error::config("input statistics do not match the input width"));
            }
        }
        Ok(())
    }

    fn im2col(&self, inputs: &ArrayView2<f64>) -> Array2<f64> {
        let cfg = &self.config;
        let t_len = cfg.conv_positions();
        let mut patches = Array2::zeros((inputs.nrows() * t_len, cfg.in_channels * cfg.kernel));
        for (b, x) in inputs.outer_iter().enumerate() {
            for t in 0..t_len {
                let mut row = patches.row_mut(b * t_len + t);
                for c in 0..cfg.in_channels {
                    for j in 0..cfg.kernel {
                        row[c * cfg.kernel + j] = x[c * cfg.input_length + t + j];
                    }
                }
            }
        }
        patches
    }

    fn forward_cached(&self, inputs: ArrayView2<f64>, mode: Mode) -> Result<Cache> {
        self.check_input(&inputs)?;
        let batch = inputs.nrows();
        let patches = match &self.input_norm {
            Some(n) => self.im2col(&n.apply(inputs).view()),
            None => self.im2col(&inputs),
        };
        let mut conv = patches.dot(&self.conv_weight) + &self.conv_bias;
        conv.mapv_inplace(relu);
        let flat = conv
            .into_shape_with_order((batch, self.config.flat_size()))
            .map_err(|e| Error::numeric(e.to_string()))?;

        let last = self.dense.len() - 1;
        let mut activations = vec![flat];
        let mut mask = None;
        for (i, layer) in self.dense.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weight) + &layer.bias;
            if i < last {
                z.mapv_inplace(relu);
                if i == self.config.dropout_after && self.config.dropout_p > 0.0 {
                    if let Mode::Train { seed } = mode {
                        let m = dropout_mask(z.dim(), self.config.dropout_p, seed);
                        z *= &m;
                        mask = Some(m);
                    }
                }
            } else if self.config.head == Head::Softmax {
                softmax_rows(&mut z);
            }
            activations.push(z);
        }
        Ok(Cache {
            patches,
            activations,
            mask,
        })
    }

    /// Class probabilities (softmax head) or outputs (linear head), one row per input.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>, mode: Mode) -> Result<Array2<f64>> {
        let mut cache = self.forward_cached(inputs, mode)?;
        Ok(cache.activations.pop().expect("output layer"))
    }

    pub fn forward(&self, input: &[f64], mode: Mode) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::config(e.to_string()))?;
        Ok(self.forward_batch(view, mode)?.row(0).to_vec())
    }

    /// Eval-mode outputs for many rows, in chunks.
    pub fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        const CHUNK: usize = 256;
        let mut out = Array2::zeros((inputs.nrows(), self.config.output_size()));
        let mut start = 0;
        while start < inputs.nrows() {
            let end = (start + CHUNK).min(inputs.nrows());
            let part = self.forward_batch(inputs.slice(s![start..end, ..]), Mode::Eval)?;
            out.slice_mut(s![start..end, ..]).assign(&part);
            start = end;
        }
        Ok(out)
    }

    /// Batch-mean loss (cross-entropy for softmax, half squared error for
    /// linear) and its gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        inputs: ArrayView2<f64>,
        targets: Targets,
        mode: Mode,
    ) -> Result<(f64, NetworkParams)> {
        let batch = inputs.nrows();
        let cache = self.forward_cached(inputs, mode)?;
        let output = cache.activations.last().expect("output layer");
        let (loss, mut delta) = output_delta(output, targets, self.config.head)?;
        let inv = 1.0 / batch as f64;
        delta *= inv;

        let mut grad = NetworkParams::zeros(&self.config)?;
        for i in (0..self.dense.len()).rev() {
            let a_in = &cache.activations[i];
            grad.dense[i].weight = a_in.t().dot(&delta);
            grad.dense[i].bias = delta.sum_axis(Axis(0));
            let mut back = delta.dot(&self.dense[i].weight.t());
            // a_in > 0 is exactly where the ReLU (and any kept dropout unit) passes gradient.
            if i > 0 && i - 1 == self.config.dropout_after {
                if let Some(mask) = &cache.mask {
                    back *= mask;
                }
            }
            back.zip_mut_with(a_in, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = back;
        }
        let conv_delta = delta
            .into_shape_with_order((batch * self.config.conv_positions(), self.config.conv_channels))
            .map_err(|e| Error::numeric(e.to_string()))?;
        grad.conv_weight = cache.patches.t().dot(&conv_delta);
        grad.conv_bias = conv_delta.sum_axis(Axis(0));
        Ok((loss * inv, grad))
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &NetworkParams, alpha: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += alpha * y);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= alpha);
        }
    }
}

struct Cache {
    patches: Array2<f64>,
    /// Input to each dense layer, then the network output.
    activations: Vec<Array2<f64>>,
    mask: Option<Array2<f64>>,
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Inverted dropout mask: 0 or `1/(1-p)`.
pub fn dropout_mask(dim: (usize, usize), p: f64, seed: u64) -> Array2<f64> {
    let mut rng = rng_from_u64(seed);
    let keep = 1.0 - p;
    Array2::from_shape_simple_fn(dim, || {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}

pub fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.outer_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Summed loss and `dL/dz` of the output pre-activation (before batch averaging).
fn output_delta(output: &Array2<f64>, targets: Targets, head: Head) -> Result<(f64, Array2<f64>)> {
    match (targets, head) {
        (Targets::Labels(labels), Head::Softmax) => {
            if labels.len() != output.nrows() {
                return Err(Error::config("label count differs from batch size"));
            }
            let mut delta = output.clone();
            let mut loss = 0.0;
            for (b, &y) in labels.iter().enumerate() {
                if y >= output.ncols() {
                    return Err(Error::config(format!("label {y} outside the output layer")));
                }
                loss -= output[[b, y]].max(f64::MIN_POSITIVE).ln();
                delta[[b, y]] -= 1.0;
            }
            Ok((loss, delta))
        }
        (Targets::Values(values), Head::Linear) => {
            if values.dim() != output.dim() {
                return Err(Error::config("target shape differs from output shape"));
            }
            let delta = output - &values;
            let loss = 0.5 * delta.iter().map(|d| d * d).sum::<f64>();
            Ok((loss, delta))
        }
        _ => Err(Error::config("targets do not match the network head")),
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_u64;
    use ndarray::Array2;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn small(head: Head) -> NetworkConfig {
        NetworkConfig {
            input_length: 9,
            in_channels: 2,
            kernel: 4,
            conv_channels: 3,
            dense_sizes: vec![7, 5, 4],
            dropout_p: 0.5,
            dropout_after: 0,
            head,
        }
    }

    fn random_inputs(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn reference_param_counts() {
        let counts = NetworkConfig::reference(208).param_count();
        assert_eq!(counts.conv, 120);
        assert_eq!(counts.dense, vec![1_476_608, 2_098_176, 213_200]);
        assert_eq!(counts.total, 3_788_104);
        assert_eq!(NetworkConfig::reference(12).param_count().dense[2], 12_300);
    }

    #[test]
    fn minimal_param_count() {
        let cfg = NetworkConfig {
            input_length: 5,
            in_channels: 1,
            kernel: 1,
            conv_channels: 1,
            dense_sizes: vec![],
            dropout_p: 0.0,
            dropout_after: 0,
            head: Head::Softmax,
        };
        assert_eq!(param_count(&cfg).total, 2);
    }

    #[test]
    fn zero_network_is_uniform() {
        let params = NetworkParams::zeros(&small(Head::Softmax)).unwrap();
        let p = params.forward(&[0.3; 18], Mode::Eval).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn output_bias_shift_is_invisible() {
        let cfg = small(Head::Softmax);
        let mut params = NetworkParams::init(&cfg, &mut rng_from_u64(1)).unwrap();
        let x = random_inputs(1, 18, 2);
        let before = params.forward_batch(x.view(), Mode::Eval).unwrap();
        params.dense[2].bias += 3.7;
        let after = params.forward_batch(x.view(), Mode::Eval).unwrap();
        for (a, b) in before.iter().zip(after.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_prediction_loss_is_ln_n() {
        let params = NetworkParams::zeros(&small(Head::Softmax)).unwrap();
        let x = random_inputs(6, 18, 3);
        let (loss, _) = params
            .loss_and_gradient(x.view(), Targets::Labels(&[0, 1, 2, 3, 0, 1]), Mode::Eval)
            .unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_prediction_loss_vanishes() {
        let mut params = NetworkParams::zeros(&small(Head::Softmax)).unwrap();
        params.dense[2].bias[2] = 60.0;
        let x = random_inputs(3, 18, 4);
        let (loss, _) = params
            .loss_and_gradient(x.view(), Targets::Labels(&[2, 2, 2]), Mode::Eval)
            .unwrap();
        assert!(loss < 1e-20);
    }

    #[test]
    fn shape_errors() {
        let params = NetworkParams::zeros(&small(Head::Softmax)).unwrap();
        assert!(params.forward(&[0.0; 17], Mode::Eval).is_err());
        let x = random_inputs(2, 18, 5);
        assert!(params
            .loss_and_gradient(x.view(), Targets::Labels(&[0]), Mode::Eval)
            .is_err());
        assert!(params
            .loss_and_gradient(x.view(), Targets::Values(Array2::zeros((2, 4)).view()), Mode::Eval)
            .is_err());
    }

    #[test]
    fn dropout_mean_matches_eval() {
        // Mean of many inverted-dropout passes equals the eval activation.
        let p = 0.5;
        let trials = 10_000;
        let mut acc = 0.0;
        for seed in 0..trials {
            acc += dropout_mask((1, 16), p, seed).sum() / 16.0;
        }
        let mean = acc / trials as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn train_mode_is_reproducible_per_seed() {
        let cfg = small(Head::Softmax);
        let params = NetworkParams::init(&cfg, &mut rng_from_u64(6)).unwrap();
        let x = random_inputs(4, 18, 7);
        let a = params.forward_batch(x.view(), Mode::Train { seed: 9 }).unwrap();
        let b = params.forward_batch(x.view(), Mode::Train { seed: 9 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn input_norm_equals_normalizing_the_rows() {
        let cfg = small(Head::Softmax);
        let mut params = NetworkParams::init(&cfg, &mut rng_from_u64(4)).unwrap();
        let mut x = random_inputs(6, 18, 8);
        x.column_mut(3).fill(2.5);
        let norm = InputNorm::fit(x.view()).unwrap();
        assert_eq!(norm.scale[3], 1.0);
        let manual = params.forward_batch(norm.apply(x.view()).view(), Mode::Eval).unwrap();
        params.input_norm = Some(norm);
        assert_eq!(params.forward_batch(x.view(), Mode::Eval).unwrap(), manual);
        let z = params.input_norm.as_ref().unwrap().apply(x.view());
        for j in 0..18 {
            assert!(z.column(j).mean().unwrap().abs() < 1e-12);
        }
        params.input_norm.as_mut().unwrap().mean.pop();
        assert!(params.forward_batch(x.view(), Mode::Eval).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(Head::Softmax);
        cfg.dropout_p = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small(Head::Softmax);
        cfg.kernel = 10;
        assert!(cfg.validate().is_err());
        let mut cfg = small(Head::Softmax);
        cfg.dropout_after = 2;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn probabilities_sum_to_one(seed in 0u64..1000, shift in -50.0f64..50.0) {
            let cfg = small(Head::Softmax);
            let mut params = NetworkParams::init(&cfg, &mut rng_from_u64(seed)).unwrap();
            let x = random_inputs(3, 18, seed + 1);
            let p = params.forward_batch(x.view(), Mode::Eval).unwrap();
            for row in p.outer_iter() {
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                prop_assert!((row.sum() - 1.0).abs() < 1e-9);
            }
            let before: Vec<usize> = p.outer_iter().map(|r| argmax(r.as_slice().unwrap())).collect();
            params.dense[2].bias += shift;
            let q = params.forward_batch(x.view(), Mode::Eval).unwrap();
            let after: Vec<usize> = q.outer_iter().map(|r| argmax(r.as_slice().unwrap())).collect();
            prop_assert_eq!(before, after);
        }
    }
}
