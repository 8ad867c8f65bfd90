//! Experiment orchestration: generate, train, evaluate, attack, report.
//!
//! Every random draw comes from the config's master seed through named
//! streams, so a config and seed fix every output byte. Wall-clock time is
//! measured by callers and kept out of the report.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{ClassifierSpec, ExperimentConfig, ExperimentKind};
use super::io::{export_dataset, save_model, SavedModel};
use super::plots::emit_plots_csv;
use crate::adversary::{
    attacker_uplink, eavesdrop_scenario, feature_replay_attack, run_signal_replay, train_sv_estimator,
    AttackerConfig, EstimatorConfig, FeatureReplayReport, FeatureReplaySetup, ReplayTarget, SignalReplayReport,
};
use crate::auth::{authenticate_p1, AuthServer, EnrollOptions};
use crate::classifier::{
    centroid_fit, dataset_inputs, magnitude_feature, softmax_rows, split_dataset, train, CentroidModel,
    NetworkConfig, TrainReport,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvaluationReport};
use crate::phy::{generate_dataset, CsiVector, Dataset, Scenario, Transmitter};
use crate::rng::SeedTree;

/// Results for one scenario of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub scenario_id: String,
    pub distance: f64,
    pub orientation: f64,
    /// Effective CSI SNR of the frozen link, dB.
    pub snr_db: f64,
    pub channels: Vec<u32>,
    pub n_classes: usize,
    pub train_size: usize,
    pub test_size: usize,
    #[serde(default)]
    pub training: Option<TrainReport>,
    pub evaluation: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    /// Global class of the secret code at the server.
    pub secret_class: u32,
    /// Acceptance of genuine packets of the secret code (same count as the burst).
    pub legitimate_acceptance: f64,
    pub signal_colocated: SignalReplayReport,
    pub signal_far: SignalReplayReport,
    pub estimator_validation_rms: f64,
    pub estimator_degenerate: bool,
    pub feature: FeatureReplayReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub paper_scale: bool,
    pub config_digest: String,
    pub config: serde_json::Value,
    pub variants: Vec<VariantReport>,
    #[serde(default)]
    pub attack: Option<AttackReport>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// A fitted classifier of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Cnn(SavedModel),
    Centroid(CentroidModel),
}

impl TrainedModel {
    /// Class scores (probabilities) for each CSI vector.
    pub fn scores(&self, dataset: &Dataset, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
        match self {
            TrainedModel::Cnn(m) => {
                let x = dataset_inputs(dataset, indices, &m.features)?;
                let p = m.params.predict(x.view())?;
                Ok(p.outer_iter().map(|r| r.to_vec()).collect())
            }
            TrainedModel::Centroid(model) => {
                let feats = centroid_features(dataset, indices)?;
                let mut logits = ndarray::Array2::zeros((feats.len(), model.n_classes()));
                for (i, f) in feats.iter().enumerate() {
                    for (k, d) in model.distances(f)?.into_iter().enumerate() {
                        logits[[i, k]] = -0.5 * d * d;
                    }
                }
                softmax_rows(&mut logits);
                Ok(logits.outer_iter().map(|r| r.to_vec()).collect())
            }
        }
    }
}

fn centroid_features(dataset: &Dataset, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
    let cfg = crate::classifier::FeatureConfig::default();
    indices
        .iter()
        .map(|&i| magnitude_feature(&dataset.records[i].csi, &cfg))
        .collect()
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub datasets: Vec<Dataset>,
    pub models: Vec<TrainedModel>,
}

/// Seed tree of one scenario's data.
fn data_seeds(root: &SeedTree, scenario: &Scenario) -> SeedTree {
    root.subtree(&format!("data/{}", scenario.id))
}

/// Generate the dataset of every scenario.
pub fn generate_datasets(cfg: &ExperimentConfig) -> Result<Vec<Dataset>> {
    cfg.validate()?;
    let root = SeedTree::new(cfg.seed);
    cfg.scenarios
        .iter()
        .map(|s| {
            let codes = cfg.codes.resolve(&cfg.surface, s.channels[0])?;
            generate_dataset(&cfg.surface, s, &codes, cfg.packets(), &data_seeds(&root, s))
        })
        .collect()
}

/// Train the configured classifier on the training split of `dataset`.
///
/// The split and training seeds derive from the master seed and the
/// scenario id; the seed inside the train config is ignored.
pub fn train_variant(
    cfg: &ExperimentConfig,
    scenario_id: &str,
    dataset: &Dataset,
) -> Result<(TrainedModel, Vec<usize>, Vec<usize>, Option<TrainReport>)> {
    let root = SeedTree::new(cfg.seed);
    let seed = root.seed_u64(&format!("train/{scenario_id}"));
    match &cfg.classifier {
        ClassifierSpec::Cnn {
            network,
            train: train_cfg,
            features,
        } => {
            let net = network
                .clone()
                .unwrap_or_else(|| NetworkConfig::reference(dataset.n_classes()));
            let mut tc = train_cfg.clone();
            tc.seed = seed;
            let (trained, split) = train(dataset, features, &net, &tc)?;
            let model = TrainedModel::Cnn(SavedModel {
                params: trained.params,
                features: *features,
            });
            Ok((model, split.train, split.test, Some(trained.report)))
        }
        ClassifierSpec::Centroid {
            train_fraction,
            epsilon,
        } => {
            let split = split_dataset(dataset, *train_fraction, seed)?;
            let feats = centroid_features(dataset, &split.train)?;
            let labels: Vec<usize> = split.train.iter().map(|&i| dataset.records[i].label as usize).collect();
            let model = centroid_fit(&feats, &labels, dataset.n_classes(), *epsilon)?;
            Ok((TrainedModel::Centroid(model), split.train, split.test, None))
        }
    }
}

/// Run every stage of the experiment; failures are tagged with their stage.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let root = SeedTree::new(cfg.seed);
    let datasets = generate_datasets(cfg).map_err(|e| e.in_stage("generate"))?;
    let mut variants = Vec::new();
    let mut models = Vec::new();
    for (scenario, ds) in cfg.scenarios.iter().zip(&datasets) {
        info!("{}: training on {} records", scenario.id, ds.len());
        let (model, train_idx, test_idx, training) =
            train_variant(cfg, &scenario.id, ds).map_err(|e| e.in_stage("train"))?;
        let evaluation = (|| {
            let scores = model.scores(ds, &test_idx)?;
            let labels: Vec<usize> = test_idx.iter().map(|&i| ds.records[i].label as usize).collect();
            evaluate(&scores, &labels)
        })()
        .map_err(|e| e.in_stage("evaluate"))?;
        info!("{}: accuracy {:.4}", scenario.id, evaluation.accuracy);
        let link = scenario.link(&data_seeds(&root, scenario)).map_err(|e| e.in_stage("evaluate"))?;
        let rx = scenario.snr.tx_power() * link.large_scale_gain()?;
        variants.push(VariantReport {
            scenario_id: scenario.id.clone(),
            distance: scenario.geometry.distance(),
            orientation: scenario.geometry.orientation,
            snr_db: scenario.snr.effective_snr_db(rx),
            channels: scenario.channels.clone(),
            n_classes: ds.n_classes(),
            train_size: train_idx.len(),
            test_size: test_idx.len(),
            training,
            evaluation,
        });
        models.push(model);
    }
    let attack = if cfg.attack.is_some() {
        Some(run_attack(cfg).map_err(|e| e.in_stage("attack"))?)
    } else {
        None
    };
    let report = RunReport {
        experiment: cfg.experiment,
        seed: cfg.seed,
        paper_scale: cfg.paper_scale,
        config_digest: cfg.digest()?,
        config: serde_json::to_value(cfg)?,
        variants,
        attack,
    };
    Ok(RunArtifacts {
        report,
        datasets,
        models,
    })
}

/// Server, link and codes shared by the attack stages.
pub struct AttackBed {
    pub server: AuthServer,
    pub scenario: Scenario,
    /// Frozen node-to-server link.
    pub link: crate::channel::Link,
    pub codes: Vec<crate::metasurface::ControlCode>,
    pub secret_class: u32,
    pub channel: u32,
}

/// Dev id of the node that owns the secret code.
pub const TARGET_DEVICE: &str = "alice";
/// Dev id holding the codes the attacker has overheard.
pub const RETIRED_DEVICE: &str = "alice-retired";

/// Enroll the server: the known codes as a retired device, the secret code
/// as the target device.
pub fn attack_bed(cfg: &ExperimentConfig) -> Result<AttackBed> {
    let spec = cfg.attack.as_ref().ok_or_else(|| Error::config("no attack block"))?;
    let scenario = cfg.scenarios[0].clone();
    let channel = scenario.channels[0];
    let codes = cfg.codes.resolve(&cfg.surface, channel)?;
    let root = SeedTree::new(cfg.seed);
    let enroll_seeds = root.subtree("attack/enroll");
    let ds = generate_dataset(&cfg.surface, &scenario, &codes, spec.enroll_packets, &enroll_seeds)?;
    let known: Vec<usize> = (0..codes.len()).filter(|&i| i != spec.secret_index).collect();
    let mut server = AuthServer::new(spec.auth, root.seed_u64("attack/server"))?;
    server.enroll(RETIRED_DEVICE, &ds.select_classes(&known), &EnrollOptions::default())?;
    server.enroll(TARGET_DEVICE, &ds.select_classes(&[spec.secret_index]), &EnrollOptions::default())?;
    let secret_class = known.len() as u32;
    let link = scenario.link(&enroll_seeds)?;
    Ok(AttackBed {
        server,
        link,
        scenario,
        codes,
        secret_class,
        channel,
    })
}

fn packets(tx: &Transmitter<'_>, code: &crate::metasurface::ControlCode, channel: u32, n: usize, seeds: &SeedTree, tag: &str) -> Result<Vec<CsiVector>> {
    (0..n)
        .map(|p| tx.packet(code, channel, &mut seeds.stream(&format!("{tag}/{p}"))))
        .collect()
}

/// Signal replay (co-located and far) and feature replay against the secret code.
pub fn run_attack(cfg: &ExperimentConfig) -> Result<AttackReport> {
    let spec = cfg.attack.as_ref().ok_or_else(|| Error::config("no attack block"))?;
    let bed = attack_bed(cfg)?;
    let root = SeedTree::new(cfg.seed);
    let secret = &bed.codes[spec.secret_index];
    let node = bed.scenario.geometry.tx_position;
    let legit = Transmitter::with_link(&cfg.surface, &bed.scenario, bed.link.clone());

    let genuine_burst = packets(&legit, secret, bed.channel, spec.replay.burst.max(1), &root, "attack/genuine")?;
    let mut ok = 0;
    for c in &genuine_burst {
        if authenticate_p1(&bed.server, c, TARGET_DEVICE)?.accepted {
            ok += 1;
        }
    }
    let legitimate_acceptance = ok as f64 / genuine_burst.len() as f64;

    let target = ReplayTarget {
        server: &bed.server,
        dev_id: TARGET_DEVICE,
        surface: &cfg.surface,
        scenario: &bed.scenario,
        legit_link: &bed.link,
        code: secret,
        channel: bed.channel,
    };
    let relay = |offset: [f64; 2], tag: &str| -> Result<SignalReplayReport> {
        let mut a = spec.attacker.clone();
        a.position = [node[0] + offset[0], node[1] + offset[1]];
        run_signal_replay(&target, &a, spec.replay_packets, &root.subtree(tag))
    };
    let signal_colocated = relay([spec.colocated_offset, 0.0], "attack/relay-near")?;
    let signal_far = relay([0.0, spec.far_distance], "attack/relay-far")?;

    // Feature replay: learn sv from the overheard known codes.
    let mut attacker: AttackerConfig = spec.attacker.clone();
    let known: Vec<usize> = (0..bed.codes.len()).filter(|&i| i != spec.secret_index).collect();
    attacker.known_codes = known.iter().enumerate().map(|(l, &i)| (bed.codes[i].clone(), l as u32)).collect();
    let eaves = eavesdrop_scenario(&bed.scenario, &attacker)?;
    let eaves_seeds = root.subtree("attack/eavesdrop");
    let eaves_packets = if cfg.paper_scale {
        spec.paper_eavesdrop_packets
    } else {
        spec.eavesdrop_packets
    };
    let known_codes: Vec<_> = attacker.known_codes.iter().map(|(c, _)| c.clone()).collect();
    let overheard = generate_dataset(&cfg.surface, &eaves, &known_codes, eaves_packets, &eaves_seeds)?;
    let cells = cfg.surface.cell_count();
    let est_seed = root.seed_u64("attack/estimator");
    let est_cfg = spec.estimator.clone().unwrap_or_else(|| {
        if cfg.paper_scale {
            EstimatorConfig::reference(cells, est_seed)
        } else {
            EstimatorConfig::desk(cells, est_seed)
        }
    });
    let estimator = train_sv_estimator(&overheard, &cfg.surface.levels, &est_cfg)?;

    let listener = Transmitter::new(&cfg.surface, &eaves, &eaves_seeds)?;
    let heard: Vec<Vec<CsiVector>> = (0..spec.replay.tests)
        .map(|t| packets(&listener, secret, bed.channel, spec.replay.packets_per_test, &root, &format!("attack/overheard/{t}")))
        .collect::<Result<_>>()?;
    let genuine: Vec<Vec<CsiVector>> = (0..spec.replay.tests)
        .map(|t| packets(&legit, secret, bed.channel, spec.replay.packets_per_test, &root, &format!("attack/baseline/{t}")))
        .collect::<Result<_>>()?;
    let uplink = attacker_uplink(&bed.link, &attacker);
    let setup = FeatureReplaySetup {
        server: &bed.server,
        dev_id: TARGET_DEVICE,
        target_class: bed.secret_class,
        cv: secret.cv,
        channel: bed.channel,
        scenario: &bed.scenario,
        attacker_surface: &cfg.surface,
        uplink: &uplink,
    };
    let feature = feature_replay_attack(&estimator, &heard, &genuine, &setup, &spec.replay, &root.subtree("attack/feature"))?;
    Ok(AttackReport {
        secret_class: bed.secret_class,
        legitimate_acceptance,
        signal_colocated,
        signal_far,
        estimator_validation_rms: estimator.validation_rms,
        estimator_degenerate: estimator.degenerate,
        feature,
    })
}

/// Write `report.json`, datasets, models and plot CSVs into `dir`.
pub fn write_artifacts(artifacts: &RunArtifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let report_path = dir.join("report.json");
    std::fs::write(&report_path, artifacts.report.to_json()?)?;
    written.push(report_path);
    for ((variant, ds), model) in artifacts.report.variants.iter().zip(&artifacts.datasets).zip(&artifacts.models) {
        let data_path = dir.join(format!("dataset-{}.mfpd", variant.scenario_id));
        export_dataset(ds, &data_path)?;
        written.push(data_path);
        let model_path = match model {
            TrainedModel::Cnn(m) => {
                let p = dir.join(format!("model-{}.mfpm", variant.scenario_id));
                save_model(m, &p)?;
                p
            }
            TrainedModel::Centroid(c) => {
                let p = dir.join(format!("model-{}.json", variant.scenario_id));
                std::fs::write(&p, serde_json::to_string_pretty(c)? + "\n")?;
                p
            }
        };
        written.push(model_path);
    }
    written.extend(emit_plots_csv(&artifacts.report, dir)?);
    Ok(written)
}
