//! Mini-batch SGD with momentum, stratified validation hold-out and
//! best-validation model selection.

use log::{debug, info};
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{dataset_inputs, FeatureConfig};
use super::network::{argmax, InputNorm, Mode, NetworkConfig, NetworkParams, Targets};
use crate::error::{Error, Result};
use crate::phy::{stratified_split, Dataset};
use crate::rng::SeedTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub seed: u64,
    /// Fraction of the dataset used for training; the rest is the test split.
    pub train_fraction: f64,
    /// Fraction of the training split held out for model selection.
    #[serde(default = "default_validation")]
    pub validation_fraction: f64,
    /// Fit per-position input statistics on the training rows and store them
    /// in the network.
    #[serde(default = "default_standardize")]
    pub standardize_inputs: bool,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_validation() -> f64 {
    0.1
}

fn default_standardize() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            train_fraction: 0.2,
            validation_fraction: 0.1,
            standardize_inputs: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("learning rate must be positive and momentum in [0, 1)"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction must lie in (0, 1)"));
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config("validation_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_risk: f64,
    pub validation_risk: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl TrainReport {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,train_risk,validation_risk,validation_accuracy")?;
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{}",
                e.epoch, e.train_risk, e.validation_risk, e.validation_accuracy
            )?;
        }
        Ok(())
    }
}

/// Record indices of the train and test parts of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified train/test split drawn from the `split` stream of `seed`.
pub fn split_dataset(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<Split> {
    let labels = dataset.labels();
    let (train, test) = stratified_split(
        &labels,
        train_fraction,
        &mut SeedTree::new(seed).stream("split"),
    )?;
    Ok(Split { train, test })
}

pub struct Trained {
    pub params: NetworkParams,
    pub report: TrainReport,
}

/// Mean loss and accuracy of `params` on a labelled matrix, chunked.
pub fn evaluate_risk(params: &NetworkParams, inputs: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, f64)> {
    let probs = params.predict(inputs)?;
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, &y) in probs.outer_iter().zip(labels) {
        loss -= row[y].max(f64::MIN_POSITIVE).ln();
        if argmax(row.as_slice().expect("row-major")) == y {
            correct += 1;
        }
    }
    let n = labels.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Supervision stored for a whole training set.
#[derive(Debug, Clone)]
pub enum TargetSet {
    Labels(Vec<usize>),
    Values(Array2<f64>),
}

impl TargetSet {
    fn len(&self) -> usize {
        match self {
            TargetSet::Labels(l) => l.len(),
            TargetSet::Values(v) => v.nrows(),
        }
    }

    fn select(&self, idx: &[usize]) -> TargetSet {
        match self {
            TargetSet::Labels(l) => TargetSet::Labels(idx.iter().map(|&i| l[i]).collect()),
            TargetSet::Values(v) => TargetSet::Values(v.select(Axis(0), idx)),
        }
    }

    fn as_targets(&self) -> Targets<'_> {
        match self {
            TargetSet::Labels(l) => Targets::Labels(l),
            TargetSet::Values(v) => Targets::Values(v.view()),
        }
    }

    /// Labels used to stratify the validation split (one stratum for values).
    fn strata(&self) -> Vec<usize> {
        match self {
            TargetSet::Labels(l) => l.clone(),
            TargetSet::Values(v) => vec![0; v.nrows()],
        }
    }
}

/// Mean loss and accuracy (NaN for regression) on a held-out set.
fn held_out_risk(params: &NetworkParams, inputs: ArrayView2<f64>, targets: &TargetSet) -> Result<(f64, f64)> {
    match targets {
        TargetSet::Labels(l) => evaluate_risk(params, inputs, l),
        TargetSet::Values(v) => {
            let out = params.predict(inputs)?;
            let sq: f64 = (&out - v).iter().map(|d| d * d).sum();
            Ok((0.5 * sq / v.nrows().max(1) as f64, f64::NAN))
        }
    }
}

/// Train a softmax network on feature rows and labels.
///
/// A stratified `validation_fraction` of the rows is held out; the returned
/// parameters are those with the lowest validation risk (or the last epoch
/// when nothing is held out).
pub fn fit(
    inputs: &Array2<f64>,
    labels: &[usize],
    net: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<Trained> {
    let n_classes = net.output_size();
    let mut present = vec![false; n_classes];
    for &y in labels {
        if y >= n_classes {
            return Err(Error::config(format!("label {y} outside the output layer")));
        }
        present[y] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(Error::config(format!("class {missing} absent from the training split")));
    }
    fit_targets(inputs, &TargetSet::Labels(labels.to_vec()), net, cfg)
}

/// Train a linear-head network on real-valued targets (half squared error).
pub fn fit_regression(
    inputs: &Array2<f64>,
    targets: &Array2<f64>,
    net: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<Trained> {
    if targets.ncols() != net.output_size() {
        return Err(Error::config("target width differs from the output layer"));
    }
    fit_targets(inputs, &TargetSet::Values(targets.clone()), net, cfg)
}

pub fn fit_targets(
    inputs: &Array2<f64>,
    targets: &TargetSet,
    net: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    net.validate()?;
    if targets.len() != inputs.nrows() || targets.len() == 0 {
        return Err(Error::config("feature rows and targets differ in length"));
    }

    let seeds = SeedTree::new(cfg.seed);
    let (val_idx, fit_idx) = if cfg.validation_fraction > 0.0 {
        stratified_split(&targets.strata(), cfg.validation_fraction, &mut seeds.stream("validation"))?
    } else {
        (Vec::new(), (0..targets.len()).collect())
    };
    let x_fit = inputs.select(Axis(0), &fit_idx);
    let y_fit = targets.select(&fit_idx);
    let x_val = inputs.select(Axis(0), &val_idx);
    let y_val = targets.select(&val_idx);

    let mut params = NetworkParams::init(net, &mut seeds.stream("init"))?;
    if cfg.standardize_inputs {
        params.input_norm = Some(InputNorm::fit(x_fit.view())?);
    }
    let mut velocity = NetworkParams::zeros(net)?;
    let mut order_rng = seeds.stream("shuffle");
    let mut dropout_rng = seeds.stream("dropout");
    let mut order: Vec<usize> = (0..y_fit.len()).collect();
    let mut best: Option<(f64, usize, NetworkParams)> = None;
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            let j = order_rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut risk = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x_fit.select(Axis(0), chunk);
            let yb = y_fit.select(chunk);
            let mode = Mode::Train {
                seed: dropout_rng.random(),
            };
            let (loss, grad) = params.loss_and_gradient(xb.view(), yb.as_targets(), mode)?;
            if !loss.is_finite() {
                return Err(Error::numeric(format!("training loss diverged at epoch {epoch}")));
            }
            risk += loss * chunk.len() as f64;
            velocity.scale(cfg.momentum);
            velocity.add_scaled(&grad, -cfg.learning_rate);
            params.add_scaled(&velocity, 1.0);
        }
        let train_risk = risk / y_fit.len() as f64;
        let (validation_risk, validation_accuracy) = if y_val.len() == 0 {
            (train_risk, f64::NAN)
        } else {
            held_out_risk(&params, x_val.view(), &y_val)?
        };
        debug!("epoch {epoch}: train {train_risk:.4} val {validation_risk:.4} acc {validation_accuracy:.4}");
        epochs.push(EpochStats {
            epoch,
            train_risk,
            validation_risk,
            validation_accuracy,
        });
        let improved = y_val.len() == 0 || best.as_ref().is_none_or(|(r, _, _)| validation_risk < *r);
        if improved {
            best = Some((validation_risk, epoch, params.clone()));
        }
    }
    let (risk, best_epoch, params) = best.expect("at least one epoch");
    if !params.is_finite() {
        return Err(Error::numeric("trained parameters are not finite"));
    }
    info!("best epoch {best_epoch} with validation risk {risk:.4}");
    Ok(Trained {
        params,
        report: TrainReport { epochs, best_epoch },
    })
}

/// Split the dataset, extract features and fit on the training part.
pub fn train(
    dataset: &Dataset,
    features: &FeatureConfig,
    net: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<(Trained, Split)> {
    dataset.validate()?;
    if net.output_size() != dataset.n_classes() {
        return Err(Error::config(format!(
            "network has {} outputs for {} classes",
            net.output_size(),
            dataset.n_classes()
        )));
    }
    if net.input_width() != features.width() {
        return Err(Error::config("feature width does not match the network input"));
    }
    let split = split_dataset(dataset, cfg.train_fraction, cfg.seed)?;
    let inputs = dataset_inputs(dataset, &split.train, features)?;
    let labels: Vec<usize> = split.train.iter().map(|&i| dataset.records[i].label as usize).collect();
    Ok((fit(&inputs, &labels, net, cfg)?, split))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::network::Head;
    use crate::rng::rng_from_u64;

    fn tiny(n_classes: usize) -> NetworkConfig {
        NetworkConfig {
            input_length: 8,
            in_channels: 1,
            kernel: 3,
            conv_channels: 4,
            dense_sizes: vec![16, n_classes],
            dropout_p: 0.0,
            dropout_after: 0,
            head: Head::Softmax,
        }
    }

    fn separable(n: usize) -> (Array2<f64>, Vec<usize>) {
        let mut rng = rng_from_u64(11);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = Array2::from_shape_fn((n, 8), |(i, j)| {
            let sign = if labels[i] == 0 { -1.0 } else { 1.0 };
            sign * (1.0 + j as f64 * 0.1) + rng.random_range(-0.2..0.2)
        });
        (x, labels)
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let (x, y) = separable(80);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 8,
            learning_rate: 0.05,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        let trained = fit(&x, &y, &tiny(2), &cfg).unwrap();
        let (_, acc) = evaluate_risk(&trained.params, x.view(), &y).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let (x, y) = separable(40);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let mut net = tiny(2);
        net.dense_sizes = vec![16, 8, 2];
        net.dropout_p = 0.5;
        let a = fit(&x, &y, &net, &cfg).unwrap();
        let b = fit(&x, &y, &net, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn missing_class_is_a_config_error() {
        let (x, _) = separable(10);
        let y = vec![0; 10];
        let err = fit(&x, &y, &tiny(2), &TrainConfig::default()).err().unwrap();
        assert!(matches!(err, Error::Config(_)));
    }
}
