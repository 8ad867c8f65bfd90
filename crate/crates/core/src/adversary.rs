//! Replay attackers against the fingerprint server.
//!
//! A signal-replay attacker relays what it hears, so the server sees
//! `x·s·h_{i→at}·g·h_{at→s} + η`: neither attacker-side channel can be
//! removed. A feature-replay attacker instead learns the map from CSI to
//! signature voltages on codes it has overheard, estimates the voltages of an
//! unseen code and re-injects them through its own surface, again through its
//! own channel to the server.

use log::{debug, info};
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auth::{authenticate_p1, AuthServer};
use crate::channel::{distance, Link};
use crate::classifier::{
    dataset_inputs, csi_to_input, fit_regression, FeatureConfig, Head, Mode, NetworkConfig, NetworkParams,
    TrainConfig,
};
use crate::error::{Error, Result};
use crate::metasurface::{ControlCode, FrequencyResponse, SignatureLevels, Surface, SPEED_OF_LIGHT};
use crate::phy::{complex_gaussian, estimate_csi, transmit, CsiVector, Dataset, Scenario, SnrModel, Transmitter};
use crate::rng::SeedTree;

/// Guard-zone radius `λ/4 = c/(4f)` in metres.
pub fn guard_zone_radius(frequency: f64) -> Result<f64> {
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::domain("frequency must be positive"));
    }
    Ok(SPEED_OF_LIGHT / (4.0 * frequency))
}

/// Figure quoted for the 2.4 GHz band in the original description of the
/// guard zone. It equals λ/2 there, not λ/4; kept for reference only.
pub const QUOTED_GUARD_ZONE: f64 = 0.0625;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerConfig {
    pub position: [f64; 2],
    /// SNR of the eavesdropping receiver; `None` reuses the legitimate noise
    /// model (thermal floor only when relaying).
    #[serde(default)]
    pub eavesdrop_snr_db: Option<f64>,
    #[serde(default = "default_true")]
    pub owns_surface: bool,
    /// Codes the attacker has overheard, with the label it knows them by.
    #[serde(default)]
    pub known_codes: Vec<(ControlCode, u32)>,
    /// Constant relay gain on top of undoing the eavesdrop path loss.
    #[serde(default = "default_gain")]
    pub replay_gain: f64,
}

fn default_true() -> bool {
    true
}

fn default_gain() -> f64 {
    1.0
}

impl AttackerConfig {
    pub fn at(position: [f64; 2]) -> Self {
        Self {
            position,
            eavesdrop_snr_db: None,
            owns_surface: true,
            known_codes: Vec::new(),
            replay_gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.position.iter().all(|p| p.is_finite())) {
            return Err(Error::config("attacker position must be finite"));
        }
        if !(self.replay_gain > 0.0 && self.replay_gain.is_finite()) {
            return Err(Error::config("replay gain must be positive"));
        }
        if let Some(snr) = self.eavesdrop_snr_db {
            if !snr.is_finite() {
                return Err(Error::config("eavesdrop SNR must be finite"));
            }
        }
        Ok(())
    }
}

/// `g·h_{at→s}·y_at + η` per subcarrier, `E|η|² = noise_power`.
pub fn signal_replay<R: Rng + ?Sized>(
    y_at: &[Complex64],
    channel_at_to_s: &FrequencyResponse,
    gain: Complex64,
    noise_power: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if y_at.len() != channel_at_to_s.len() {
        return Err(Error::config("replayed signal and channel differ in length"));
    }
    if !(noise_power >= 0.0) {
        return Err(Error::domain("noise power must be non-negative"));
    }
    Ok(y_at
        .iter()
        .zip(channel_at_to_s.values())
        .map(|(y, h)| {
            let clean = gain * h * y;
            if noise_power == 0.0 {
                clean
            } else {
                clean + complex_gaussian(noise_power, rng)
            }
        })
        .collect())
}

/// Noiseless filter condition `s·h_{i→s} = s·h_{i→at}·f_at·h_{at→s}` on every
/// subcarrier, to relative tolerance `tol`.
pub fn filter_condition_holds(
    s: &FrequencyResponse,
    h_i_s: &FrequencyResponse,
    h_i_at: &FrequencyResponse,
    f_at: &FrequencyResponse,
    h_at_s: &FrequencyResponse,
    tol: f64,
) -> Result<bool> {
    let n = s.len();
    if [h_i_s.len(), h_i_at.len(), f_at.len(), h_at_s.len()].iter().any(|&l| l != n) {
        return Err(Error::config("filter condition needs equal-length responses"));
    }
    Ok((0..n).all(|j| {
        let genuine = s.values()[j] * h_i_s.values()[j];
        let replayed = s.values()[j] * h_i_at.values()[j] * f_at.values()[j] * h_at_s.values()[j];
        (genuine - replayed).norm() <= tol * genuine.norm().max(f64::MIN_POSITIVE)
    }))
}

/// The node-to-attacker scenario used for eavesdropping.
///
/// The scattered power is that of the legitimate environment at 1 m, while
/// the direct path follows the path-loss law, so the K factor grows as
/// `d^{-n}` when the attacker closes in.
pub fn eavesdrop_scenario(legit: &Scenario, attacker: &AttackerConfig) -> Result<Scenario> {
    attacker.validate()?;
    let node = legit.geometry.tx_position;
    let d = distance(node, attacker.position);
    if d == 0.0 {
        return Err(Error::config("attacker sits exactly on the node"));
    }
    let mut s = legit.clone();
    s.id = format!("{}/eavesdrop", legit.id);
    s.geometry.rx_position = attacker.position;
    s.geometry.wall_attenuations.clear();
    let scale = d.powf(-legit.params.path_loss_exponent);
    s.params.k_rician = legit.params.k_rician * scale;
    if let Some(snr_db) = attacker.eavesdrop_snr_db {
        s.snr = SnrModel::Fixed { snr_db };
    }
    Ok(s)
}

/// Input noise of an amplify-and-forward relay receiving `rx_power` mW.
///
/// A relay never estimates CSI, so the receiver impairment ceiling of the
/// budget model does not apply; only the thermal floor does. A configured
/// eavesdrop SNR overrides this.
pub fn relay_noise_power(scenario: &Scenario, attacker: &AttackerConfig, rx_power: f64) -> f64 {
    match (attacker.eavesdrop_snr_db, scenario.snr) {
        (Some(snr_db), _) => rx_power * 10f64.powf(-snr_db / 10.0),
        (None, SnrModel::Budget { noise_floor_dbm, .. }) => 10f64.powf(noise_floor_dbm / 10.0),
        (None, fixed) => fixed.noise_power(rx_power),
    }
}

/// Attacker-to-server link: the legitimate environment seen from the
/// attacker's position.
pub fn attacker_uplink(legit_link: &Link, attacker: &AttackerConfig) -> Link {
    legit_link.moved(attacker.position, legit_link.geometry.rx_position)
}

/// Pearson correlation of two magnitude vectors.
pub fn magnitude_correlation(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::config("correlation needs two equal vectors of length ≥ 2"));
    }
    let x: Vec<f64> = a.iter().map(|v| v.norm()).collect();
    let y: Vec<f64> = b.iter().map(|v| v.norm()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, q) in x.iter().zip(&y) {
        sxy += (p - mx) * (q - my);
        sxx += (p - mx) * (p - mx);
        syy += (q - my) * (q - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(if sxx == syy { 1.0 } else { 0.0 });
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Where a signal replay is aimed.
#[derive(Debug, Clone)]
pub struct ReplayTarget<'a> {
    pub server: &'a AuthServer,
    pub dev_id: &'a str,
    pub surface: &'a Surface,
    pub scenario: &'a Scenario,
    pub legit_link: &'a Link,
    pub code: &'a ControlCode,
    pub channel: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalReplayReport {
    pub attacker_distance: f64,
    pub guard_zone: f64,
    pub packets: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    /// Correlation of noiseless replayed and genuine CSI magnitudes.
    pub correlation: f64,
}

/// Relay `packets` pilots of the target code and count Protocol 1 acceptances.
///
/// The attacker hears `s·h_{i→at}·x + η_at`, amplifies it by the inverse of
/// the eavesdrop path loss times `replay_gain`, and retransmits through
/// `h_{at→s}`.
pub fn run_signal_replay(
    target: &ReplayTarget<'_>,
    attacker: &AttackerConfig,
    packets: usize,
    seeds: &SeedTree,
) -> Result<SignalReplayReport> {
    if packets == 0 {
        return Err(Error::config("replay needs at least one packet"));
    }
    let eaves = eavesdrop_scenario(target.scenario, attacker)?;
    let i_at = eaves.link(seeds)?;
    let at_s = attacker_uplink(target.legit_link, attacker);
    let node = Transmitter::with_link(target.surface, target.scenario, target.legit_link.clone());
    let listener = Transmitter::with_link(target.surface, &eaves, i_at.clone());
    let relay = Transmitter::with_link(target.surface, target.scenario, at_s.clone());

    let grid = crate::phy::subcarrier_grid(target.channel, target.scenario.subcarriers)?;
    let h_at_s = at_s.response(&grid)?;
    let heard = listener.injected(target.code, target.channel, &i_at)?;
    // Undo the eavesdrop path loss: the relay re-emits what left the node.
    let gain = Complex64::new(attacker.replay_gain / i_at.large_scale_gain()?.sqrt(), 0.0);
    let eaves_noise = relay_noise_power(&eaves, attacker, listener.rx_power()?);
    let server_noise = relay.noise_power()?;

    let genuine = node.injected(target.code, target.channel, target.legit_link)?;
    let clean: Vec<Complex64> = heard
        .values()
        .iter()
        .zip(h_at_s.values())
        .map(|(y, h)| gain * h * y)
        .collect();
    let correlation = magnitude_correlation(genuine.values(), &clean)?;

    let pilot = &node.pilot;
    let mut accepted = 0;
    for p in 0..packets {
        let mut rng = seeds.stream(&format!("replay/{}/{p}", eaves.id));
        let y_at = transmit(pilot, &heard, eaves_noise, &mut rng)?;
        let y_s = signal_replay(&y_at, &h_at_s, gain, server_noise, &mut rng)?;
        let csi = estimate_csi(&y_s, pilot)?;
        if authenticate_p1(target.server, &csi, target.dev_id)?.accepted {
            accepted += 1;
        }
    }
    let attacker_distance = distance(target.scenario.geometry.tx_position, attacker.position);
    let report = SignalReplayReport {
        attacker_distance,
        guard_zone: guard_zone_radius(crate::phy::wifi_channel_center(target.channel)?)?,
        packets,
        accepted,
        acceptance_rate: accepted as f64 / packets as f64,
        correlation,
    };
    info!(
        "signal replay at {:.3} m: {}/{} accepted, correlation {:.4}",
        attacker_distance, accepted, packets, correlation
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub features: FeatureConfig,
}

impl EstimatorConfig {
    /// The classifier trunk with a linear head of `cells` outputs and the
    /// given dense widths in front of it.
    pub fn with_dense(cells: usize, hidden: &[usize], seed: u64) -> Self {
        let mut network = NetworkConfig::reference(cells);
        network.dense_sizes = hidden.iter().copied().chain([cells]).collect();
        network.head = Head::Linear;
        network.dropout_p = 0.0;
        Self {
            network,
            train: TrainConfig {
                epochs: 60,
                batch_size: 32,
                learning_rate: 0.002,
                momentum: 0.9,
                seed,
                train_fraction: 0.9,
                validation_fraction: 0.1,
                standardize_inputs: false,
            },
            features: FeatureConfig::default(),
        }
    }

    /// Full-size trunk (2048, 1024 hidden units).
    pub fn reference(cells: usize, seed: u64) -> Self {
        Self::with_dense(cells, &[2048, 1024], seed)
    }

    /// Narrow trunk for desk-scale runs.
    pub fn desk(cells: usize, seed: u64) -> Self {
        Self::with_dense(cells, &[256, 128], seed)
    }
}

/// Regression from CSI to signature voltages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvEstimator {
    pub features: FeatureConfig,
    /// `None` when the training set held a single code.
    pub params: Option<NetworkParams>,
    /// Output returned by a degenerate estimator.
    pub constant: Vec<f64>,
    pub degenerate: bool,
    /// Per-cell mean voltage removed from the targets.
    pub offset: Vec<f64>,
    /// Pooled standard deviation dividing the centred targets.
    pub scale: f64,
    /// RMS voltage error per cell on the held-out part.
    pub validation_rms: f64,
}

impl SvEstimator {
    pub fn cells(&self) -> usize {
        self.constant.len()
    }

    pub fn estimate(&self, csi: &CsiVector) -> Result<Vec<f64>> {
        let Some(params) = &self.params else {
            return Ok(self.constant.clone());
        };
        let (x, _) = csi_to_input(csi, &self.features)?;
        let out = params.forward(&x, Mode::Eval)?;
        Ok(out.iter().zip(&self.offset).map(|(v, m)| v * self.scale + m).collect())
    }

    /// Mean estimate over several packets.
    pub fn estimate_mean(&self, csis: &[CsiVector]) -> Result<Vec<f64>> {
        if csis.is_empty() {
            return Err(Error::data("no packets to estimate from"));
        }
        let mut acc = vec![0.0; self.cells()];
        for c in csis {
            for (a, v) in acc.iter_mut().zip(self.estimate(c)?) {
                *a += v;
            }
        }
        Ok(acc.into_iter().map(|a| a / csis.len() as f64).collect())
    }
}

/// Snap continuous voltages onto the code lattice `{0} ∪ levels`.
pub fn quantize_sv(estimate: &[f64], levels: &SignatureLevels) -> Vec<f64> {
    estimate
        .iter()
        .map(|&v| {
            if v < levels.low + 0.5 * levels.step() {
                0.0
            } else {
                levels.quantize(v)
            }
        })
        .collect()
}

/// Fit an estimator on overheard CSI labelled with the codes' voltages.
pub fn train_sv_estimator(eavesdropped: &Dataset, levels: &SignatureLevels, cfg: &EstimatorConfig) -> Result<SvEstimator> {
    if eavesdropped.is_empty() || eavesdropped.header.classes.is_empty() {
        return Err(Error::data("no eavesdropped packets to train on"));
    }
    eavesdropped.validate()?;
    let cells = cfg.network.output_size();
    if eavesdropped.header.classes.iter().any(|c| c.code.sv.len() != cells) {
        return Err(Error::config("estimator output size differs from the code length"));
    }
    if eavesdropped.header.classes.iter().flat_map(|c| &c.code.sv).any(|&v| v != 0.0 && (v < levels.low - 1e-9 || v > levels.high + 1e-9)) {
        return Err(Error::config("eavesdropped code voltage outside the level range"));
    }
    let mut distinct: Vec<&Vec<f64>> = eavesdropped.header.classes.iter().map(|c| &c.code.sv).collect();
    distinct.dedup();
    if distinct.len() < 2 {
        return Ok(SvEstimator {
            features: cfg.features,
            params: None,
            constant: distinct[0].clone(),
            degenerate: true,
            offset: vec![0.0; cells],
            scale: 1.0,
            validation_rms: 0.0,
        });
    }
    let indices: Vec<usize> = (0..eavesdropped.len()).collect();
    let inputs = dataset_inputs(eavesdropped, &indices, &cfg.features)?;
    let mut targets = Array2::zeros((eavesdropped.len(), cells));
    for (i, r) in eavesdropped.records.iter().enumerate() {
        for (j, v) in eavesdropped.header.classes[r.label as usize].code.sv.iter().enumerate() {
            targets[[i, j]] = *v;
        }
    }
    // Centre each cell and divide by one pooled deviation so the
    // risk stays proportional to the voltage error.
    let offset: Vec<f64> = targets.columns().into_iter().map(|c| c.mean().unwrap_or(0.0)).collect();
    for mut row in targets.rows_mut() {
        row.iter_mut().zip(&offset).for_each(|(v, m)| *v -= m);
    }
    let scale = (targets.iter().map(|v| v * v).sum::<f64>() / targets.len() as f64).sqrt();
    if !(scale > 0.0) {
        return Err(Error::numeric("eavesdropped codes have no voltage spread"));
    }
    targets.mapv_inplace(|v| v / scale);
    let trained = fit_regression(&inputs, &targets, &cfg.network, &cfg.train)?;
    let best = &trained.report.epochs[trained.report.best_epoch];
    // Risk is half the per-row squared error summed over cells.
    let validation_rms = (2.0 * best.validation_risk / cells as f64).sqrt() * scale;
    debug!("estimator validation rms {validation_rms:.4} V");
    Ok(SvEstimator {
        features: cfg.features,
        params: Some(trained.params),
        constant: vec![0.0; cells],
        degenerate: false,
        offset,
        scale,
        validation_rms,
    })
}

/// Five-number summary with linear-interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|v| v.is_nan()) {
            return Err(Error::data("box statistics need finite samples"));
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Ok(Self {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReplayConfig {
    pub tests: usize,
    pub packets_per_test: usize,
    pub burst: usize,
}

impl Default for FeatureReplayConfig {
    fn default() -> Self {
        Self {
            tests: 12,
            packets_per_test: 25,
            burst: 500,
        }
    }
}

/// One 25-packet test: estimate, re-inject, measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayTest {
    pub estimated_sv: Vec<f64>,
    /// Server-side distances of the attacker's packets to the secret class.
    pub attacker: BoxStats,
    /// Same for fresh genuine packets.
    pub genuine: BoxStats,
    /// Median attacker distance minus median genuine distance.
    pub separation: f64,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReplayReport {
    pub tests: Vec<ReplayTest>,
    /// Test whose estimate drives the burst (smallest attacker median).
    pub best_test: usize,
    pub burst_packets: usize,
    pub burst_accepted: usize,
    pub acceptance_rate: f64,
    pub min_separation: f64,
}

/// Everything a feature-replay run touches besides the estimator.
#[derive(Debug, Clone)]
pub struct FeatureReplaySetup<'a> {
    pub server: &'a AuthServer,
    pub dev_id: &'a str,
    /// Global class of the secret code at the server.
    pub target_class: u32,
    /// Channel-select voltage of the secret code (not secret).
    pub cv: f64,
    pub channel: u32,
    pub scenario: &'a Scenario,
    pub attacker_surface: &'a Surface,
    /// Attacker-to-server link.
    pub uplink: &'a Link,
}

/// Run the estimate-and-reinject attack.
///
/// `target_csi[t]` holds the packets of the secret code overheard for test
/// `t`; `genuine[t]` holds legitimate packets received by the server in the
/// same test, used as the separation baseline.
pub fn feature_replay_attack(
    estimator: &SvEstimator,
    target_csi: &[Vec<CsiVector>],
    genuine: &[Vec<CsiVector>],
    setup: &FeatureReplaySetup<'_>,
    cfg: &FeatureReplayConfig,
    seeds: &SeedTree,
) -> Result<FeatureReplayReport> {
    if target_csi.is_empty() || target_csi.len() != genuine.len() {
        return Err(Error::config("one overheard and one genuine batch per test"));
    }
    let tx = Transmitter::with_link(setup.attacker_surface, setup.scenario, setup.uplink.clone());
    let levels = &setup.attacker_surface.levels;
    let mut tests = Vec::with_capacity(target_csi.len());
    for (t, (heard, real)) in target_csi.iter().zip(genuine).enumerate() {
        let estimated_sv = quantize_sv(&estimator.estimate_mean(heard)?, levels);
        let code = ControlCode::new(setup.cv, estimated_sv.clone());
        let mut distances = Vec::with_capacity(cfg.packets_per_test);
        let mut accepted = 0;
        for p in 0..cfg.packets_per_test {
            let csi = tx.packet(&code, setup.channel, &mut seeds.stream(&format!("feature-replay/test/{t}/{p}")))?;
            distances.push(setup.server.class_distance(&csi, setup.target_class)?);
            if authenticate_p1(setup.server, &csi, setup.dev_id)?.accepted {
                accepted += 1;
            }
        }
        let own: Vec<f64> = real
            .iter()
            .map(|c| setup.server.class_distance(c, setup.target_class))
            .collect::<Result<_>>()?;
        let attacker = BoxStats::from_samples(&distances)?;
        let genuine = BoxStats::from_samples(&own)?;
        debug!("test {t}: sv {estimated_sv:?} median {:.3} vs {:.3}", attacker.median, genuine.median);
        tests.push(ReplayTest {
            estimated_sv,
            separation: attacker.median - genuine.median,
            attacker,
            genuine,
            accepted,
        });
    }
    let best_test = tests
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.attacker.median.total_cmp(&b.1.attacker.median))
        .map(|(i, _)| i)
        .expect("at least one test");
    let code = ControlCode::new(setup.cv, tests[best_test].estimated_sv.clone());
    let mut burst_accepted = 0;
    for p in 0..cfg.burst {
        let csi = tx.packet(&code, setup.channel, &mut seeds.stream(&format!("feature-replay/burst/{p}")))?;
        if authenticate_p1(setup.server, &csi, setup.dev_id)?.accepted {
            burst_accepted += 1;
        }
    }
    let min_separation = tests.iter().map(|t| t.separation).fold(f64::INFINITY, f64::min);
    let acceptance_rate = if cfg.burst == 0 { 0.0 } else { burst_accepted as f64 / cfg.burst as f64 };
    info!("feature replay: {burst_accepted}/{} accepted, min separation {min_separation:.3}", cfg.burst);
    Ok(FeatureReplayReport {
        tests,
        best_test,
        burst_packets: cfg.burst,
        burst_accepted,
        acceptance_rate,
        min_separation,
    })
}
