//! Experiment configuration: JSON files with an `include` list, built-in
//! presets and validation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::adversary::{AttackerConfig, EstimatorConfig, FeatureReplayConfig};
use crate::auth::AuthConfig;
use crate::classifier::{FeatureConfig, NetworkConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::metasurface::{ControlCode, Surface, SPEED_OF_LIGHT};
use crate::phy::{wifi_channel_center, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "capacity_208")]
    Capacity208,
    #[serde(rename = "distance")]
    Distance,
    #[serde(rename = "orientation")]
    Orientation,
    #[serde(rename = "through_wall")]
    ThroughWall,
    #[serde(rename = "multi_channel_96")]
    MultiChannel96,
    #[serde(rename = "attack")]
    Attack,
    #[serde(rename = "custom")]
    Custom,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Capacity208,
        ExperimentKind::Distance,
        ExperimentKind::Orientation,
        ExperimentKind::ThroughWall,
        ExperimentKind::MultiChannel96,
        ExperimentKind::Attack,
        ExperimentKind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Capacity208 => "capacity_208",
            ExperimentKind::Distance => "distance",
            ExperimentKind::Orientation => "orientation",
            ExperimentKind::ThroughWall => "through_wall",
            ExperimentKind::MultiChannel96 => "multi_channel_96",
            ExperimentKind::Attack => "attack",
            ExperimentKind::Custom => "custom",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::config(format!("unknown experiment `{name}`")))
    }
}

/// Offset between a channel centre and the idle resonance that centres the
/// single-cell sweep in the channel, Hz.
pub const SWEEP_CENTRE_OFFSET: f64 = 14.5e6;

/// Diffuse arrivals of the corridor scenarios trail the direct path by up
/// to this much, s.
pub const CORRIDOR_EXCESS_DELAY: f64 = 150e-9;

/// Channel-select voltage that centres the signature sweep on `channel`.
pub fn sweep_cv(surface: &Surface, channel: u32) -> Result<f64> {
    surface.cv_for_frequency(wifi_channel_center(channel)? - SWEEP_CENTRE_OFFSET)
}

/// Which control codes an experiment transmits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CodeSpec {
    /// Every cell at every level.
    Sweep {
        #[serde(default)]
        cv: Option<f64>,
    },
    /// `count` codes spread through the sweep.
    Spread {
        #[serde(default)]
        cv: Option<f64>,
        count: usize,
    },
    Explicit { codes: Vec<ControlCode> },
}

impl CodeSpec {
    /// Concrete codes; a missing `cv` centres the sweep on `channel`.
    pub fn resolve(&self, surface: &Surface, channel: u32) -> Result<Vec<ControlCode>> {
        let cv_or = |cv: &Option<f64>| -> Result<f64> {
            match cv {
                Some(v) => Ok(*v),
                None => sweep_cv(surface, channel),
            }
        };
        let codes = match self {
            CodeSpec::Sweep { cv } => surface.sweep_codes(cv_or(cv)?),
            CodeSpec::Spread { cv, count } => {
                if *count < 2 {
                    return Err(Error::config("a spread code set needs at least two codes"));
                }
                surface.spread_codes(cv_or(cv)?, *count)
            }
            CodeSpec::Explicit { codes } => codes.clone(),
        };
        for c in &codes {
            c.validate(surface.cell_count(), surface.v_max())?;
        }
        Ok(codes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    /// Convolutional network; `network` defaults to the reference layout.
    Cnn {
        #[serde(default)]
        network: Option<NetworkConfig>,
        train: TrainConfig,
        #[serde(default)]
        features: FeatureConfig,
    },
    /// Mahalanobis nearest centroid on standardized magnitudes.
    Centroid {
        train_fraction: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

fn default_epsilon() -> f64 {
    1e-6
}

impl ClassifierSpec {
    pub fn train_fraction(&self) -> f64 {
        match self {
            ClassifierSpec::Cnn { train, .. } => train.train_fraction,
            ClassifierSpec::Centroid { train_fraction, .. } => *train_fraction,
        }
    }

    fn cnn(n_classes: usize, epochs: usize, train_fraction: f64) -> Self {
        ClassifierSpec::Cnn {
            network: Some(NetworkConfig::reference(n_classes)),
            train: TrainConfig {
                epochs,
                learning_rate: 0.003,
                train_fraction,
                ..TrainConfig::default()
            },
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// Index of the secret code in the experiment's code list; the others are
    /// known to the attacker.
    pub secret_index: usize,
    pub enroll_packets: usize,
    #[serde(default)]
    pub auth: AuthConfig,
    /// Offset of the co-located relay from the node, metres.
    pub colocated_offset: f64,
    /// Distance of the far relay from the node, metres.
    pub far_distance: f64,
    pub replay_packets: usize,
    /// Feature-replay attacker (position, noise, gain).
    pub attacker: AttackerConfig,
    pub eavesdrop_packets: usize,
    #[serde(default = "default_paper_packets")]
    pub paper_eavesdrop_packets: usize,
    #[serde(default)]
    pub replay: FeatureReplayConfig,
    /// Defaults to the narrow trunk at desk scale and the full one at paper scale.
    #[serde(default)]
    pub estimator: Option<EstimatorConfig>,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            secret_index: 11,
            enroll_packets: 100,
            auth: AuthConfig::default(),
            colocated_offset: 0.0001,
            far_distance: 3.0,
            replay_packets: 500,
            attacker: AttackerConfig::at([1.5, 1.5]),
            eavesdrop_packets: 100,
            paper_eavesdrop_packets: 500,
            replay: FeatureReplayConfig::default(),
            estimator: None,
        }
    }
}

fn default_paper_packets() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub surface: Surface,
    /// One dataset, model and evaluation per scenario.
    pub scenarios: Vec<Scenario>,
    pub codes: CodeSpec,
    pub packets_per_code: usize,
    #[serde(default = "default_paper_packets")]
    pub paper_packets_per_code: usize,
    #[serde(default)]
    pub paper_scale: bool,
    pub classifier: ClassifierSpec,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
    /// Where the CLI writes artifacts when no output directory is given.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale built-in configuration of `kind`.
    pub fn preset(kind: ExperimentKind, seed: u64) -> Result<Self> {
        let surface = Surface::default();
        let cv = surface.calibration.cv;
        let on = |mut s: Scenario, channels: &[u32]| {
            s.channels = channels.to_vec();
            s
        };
        let (scenarios, codes, classifier, attack) = match kind {
            ExperimentKind::Capacity208 => (
                vec![on(Scenario::line("capacity", 2.54), &[6])],
                CodeSpec::Sweep { cv: Some(cv) },
                ClassifierSpec::cnn(208, 40, 0.2),
                None,
            ),
            ExperimentKind::Distance => (
                [7.0, 27.0, 53.0]
                    .iter()
                    .map(|&d| {
                        let mut s = on(Scenario::line(&format!("corridor-{d}m"), d), &[5]);
                        s.params.path_loss_exponent = 1.8;
                        // Same excess-delay window at every distance.
                        s.params.max_delay_spread = d / SPEED_OF_LIGHT + CORRIDOR_EXCESS_DELAY;
                        s
                    })
                    .collect(),
                CodeSpec::Spread { cv: None, count: 12 },
                ClassifierSpec::cnn(12, 40, 0.2),
                None,
            ),
            ExperimentKind::Orientation => (
                [0.0, 30.0, 60.0, 90.0]
                    .iter()
                    .map(|&deg| {
                        let mut s = on(Scenario::line(&format!("orientation-{deg}deg"), 2.54), &[6]);
                        s.geometry.orientation = deg;
                        s
                    })
                    .collect(),
                CodeSpec::Spread { cv: Some(cv), count: 12 },
                ClassifierSpec::cnn(12, 40, 0.2),
                None,
            ),
            ExperimentKind::ThroughWall => {
                let mut s = on(Scenario::line("through-wall", 100.3), &[6]);
                s.geometry.wall_attenuations = vec![10.0];
                (
                    vec![s],
                    CodeSpec::Spread { cv: Some(cv), count: 12 },
                    ClassifierSpec::cnn(12, 40, 0.2),
                    None,
                )
            }
            ExperimentKind::MultiChannel96 => (
                vec![on(Scenario::line("multi-channel", 2.54), &[4, 5, 6, 7])],
                CodeSpec::Spread { cv: Some(cv), count: 24 },
                ClassifierSpec::cnn(96, 40, 0.5),
                None,
            ),
            ExperimentKind::Attack => (
                vec![on(Scenario::line("attack", 2.54), &[6])],
                CodeSpec::Spread { cv: Some(cv), count: 12 },
                ClassifierSpec::Centroid {
                    train_fraction: 0.2,
                    epsilon: default_epsilon(),
                },
                Some(AttackSpec::default()),
            ),
            ExperimentKind::Custom => (
                vec![on(Scenario::line("custom", 2.54), &[6])],
                CodeSpec::Spread { cv: Some(cv), count: 12 },
                ClassifierSpec::Centroid {
                    train_fraction: 0.2,
                    epsilon: default_epsilon(),
                },
                None,
            ),
        };
        let cfg = Self {
            experiment: kind,
            seed,
            surface,
            scenarios,
            codes,
            packets_per_code: 100,
            paper_packets_per_code: 500,
            paper_scale: false,
            classifier,
            attack,
            output_dir: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Packets per code at the selected scale.
    pub fn packets(&self) -> usize {
        if self.paper_scale {
            self.paper_packets_per_code
        } else {
            self.packets_per_code
        }
    }

    /// Classes produced by a scenario of this experiment.
    pub fn class_count(&self, scenario: &Scenario) -> Result<usize> {
        let channel = scenario.channels[0];
        Ok(self.codes.resolve(&self.surface, channel)?.len() * scenario.channels.len())
    }

    pub fn validate(&self) -> Result<()> {
        self.surface.validate()?;
        if self.scenarios.is_empty() {
            return Err(Error::config("experiment lists no scenarios"));
        }
        let mut ids = BTreeSet::new();
        for s in &self.scenarios {
            s.validate()?;
            if !ids.insert(s.id.as_str()) {
                return Err(Error::config(format!("scenario id `{}` used twice", s.id)));
            }
            if s.id.is_empty() || s.id.contains(['/', '\\']) {
                return Err(Error::config("scenario ids must be non-empty and free of path separators"));
            }
        }
        if self.packets() < 2 {
            return Err(Error::config("need at least two packets per code"));
        }
        let f = self.classifier.train_fraction();
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::config("train fraction must lie in (0, 1)"));
        }
        match &self.classifier {
            ClassifierSpec::Cnn { network, train, .. } => {
                train.validate()?;
                for s in &self.scenarios {
                    let k = self.class_count(s)?;
                    let net = network.clone().unwrap_or_else(|| NetworkConfig::reference(k));
                    net.validate()?;
                    if net.output_size() != k {
                        return Err(Error::config(format!(
                            "network has {} outputs but scenario `{}` has {k} classes",
                            net.output_size(),
                            s.id
                        )));
                    }
                }
            }
            ClassifierSpec::Centroid { epsilon, .. } => {
                if !(*epsilon >= 0.0) {
                    return Err(Error::config("centroid epsilon must be non-negative"));
                }
            }
        }
        if let Some(a) = &self.attack {
            let s = &self.scenarios[0];
            if self.scenarios.len() != 1 || s.channels.len() != 1 {
                return Err(Error::config("the attack experiment needs one scenario on one channel"));
            }
            let n = self.codes.resolve(&self.surface, s.channels[0])?.len();
            if a.secret_index >= n || n < 3 {
                return Err(Error::config("secret code index outside a code set of at least three"));
            }
            if a.enroll_packets < 2 || a.eavesdrop_packets < 2 || a.replay.packets_per_test == 0 || a.replay.tests == 0 {
                return Err(Error::config("attack packet counts too small"));
            }
            if !(a.colocated_offset > 0.0 && a.far_distance > 0.0) {
                return Err(Error::config("attacker offsets must be positive"));
            }
            a.attacker.validate()?;
            a.auth.validate()?;
        } else if self.experiment == ExperimentKind::Attack {
            return Err(Error::config("attack experiment without an attack block"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> Result<String> {
        let canonical = serde_json::to_vec(&serde_json::to_value(self)?)?;
        Ok(hex::encode(Sha256::digest(&canonical)))
    }

    /// Read a config file, resolving `include` entries relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let value = load_value(path, &mut Vec::new())?;
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Deep merge: objects merge key by key, anything else is replaced.
pub fn merge_json(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Included files are merged in order, then the including file on top.
fn load_value(path: &Path, stack: &mut Vec<PathBuf>) -> Result<Value> {
    let canonical = path
        .canonicalize()
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("config file {}: {e}", path.display()))))?;
    if stack.contains(&canonical) {
        return Err(Error::config(format!("include cycle through {}", path.display())));
    }
    let text = std::fs::read_to_string(&canonical)?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let includes = match value.as_object_mut().and_then(|o| o.remove("include")) {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                _ => Err(Error::config("include entries must be strings")),
            })
            .collect::<Result<Vec<_>>>()?,
        Some(Value::String(s)) => vec![s],
        Some(_) => return Err(Error::config("include must be a string or a list of strings")),
    };
    stack.push(canonical.clone());
    let dir = canonical.parent().unwrap_or(Path::new("."));
    let mut merged = Value::Object(Default::default());
    for inc in includes {
        merge_json(&mut merged, load_value(&dir.join(inc), stack)?);
    }
    stack.pop();
    merge_json(&mut merged, value);
    Ok(merged)
}
