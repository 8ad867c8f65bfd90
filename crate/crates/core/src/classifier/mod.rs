//! Signature classifiers: the convolutional network and a Mahalanobis
//! nearest-centroid baseline.

pub mod centroid;
pub mod features;
pub mod network;
pub mod train;

pub use centroid::{centroid_classify, centroid_fit, mahalanobis, CentroidModel};
pub use features::{csi_to_input, dataset_inputs, magnitude_feature, FeatureConfig};
pub use network::{param_count, softmax_rows, Head, InputNorm, Mode, NetworkConfig, NetworkParams, ParamCounts, Targets};
pub use train::{evaluate_risk, fit, fit_regression, fit_targets, split_dataset, train, EpochStats, Split, TrainConfig, TargetSet, TrainReport, Trained};
