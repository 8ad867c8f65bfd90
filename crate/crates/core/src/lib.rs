//! Simulation of RF fingerprints injected by a tunable metasurface.
//!
//! A node transmits through a varactor-loaded surface whose control code
//! shapes the channel in a narrow band. The receiver estimates CSI, and a
//! classifier or an authentication server recognises the injected shape.
//! Replay attackers try to reproduce it from elsewhere.
//!
//! Module map: [`metasurface`] (surface response and capacity), [`channel`]
//! (path loss, Rician multipath), [`phy`] (CSI packets and datasets),
//! [`classifier`] (CNN and Mahalanobis centroid), [`metrics`], [`auth`]
//! (enrollment and protocols), [`adversary`] (replay attacks) and
//! [`harness`] (configured experiments and artifacts).

pub mod adversary;
pub mod auth;
pub mod channel;
pub mod classifier;
pub mod error;
pub mod harness;
pub mod metasurface;
pub mod metrics;
pub mod phy;
pub mod rng;

pub use adversary::{AttackerConfig, SvEstimator};
pub use auth::{authenticate_p1, authenticate_p2, authenticate_p3, AuthConfig, AuthServer, ProtocolOutcome};
pub use channel::{ChannelParams, Link, ScenarioGeometry};
pub use classifier::{CentroidModel, FeatureConfig, NetworkConfig, NetworkParams, TrainConfig};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, ExperimentKind, RunReport};
pub use metasurface::{ControlCode, FrequencyResponse, Surface};
pub use metrics::EvaluationReport;
pub use phy::{CsiVector, Dataset, Scenario};
pub use rng::SeedTree;
