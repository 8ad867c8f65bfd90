//! Pilot transmission through the injected channel and receiver-side CSI
//! estimation, plus labelled dataset generation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{injected_response, redraw_diffuse, ChannelParams, Link, ScenarioGeometry};
use crate::error::{Error, Result};
use crate::metasurface::{ControlCode, FrequencyResponse, Surface};
use crate::rng::{rng_from_u64, SeedTree};

/// Default CSI report length.
pub const DEFAULT_SUBCARRIERS: usize = 30;

/// Subcarrier spacing of a 20 MHz 802.11 channel, Hz.
pub const SUBCARRIER_SPACING: f64 = 312.5e3;

/// Grouped subcarrier indices of a 30-entry CSI report on a 20 MHz channel.
pub const GROUPED_SUBCARRIERS_30: [i32; 30] = [
    -28, -26, -24, -22, -20, -18, -16, -14, -12, -10, -8, -6, -4, -2, -1, 1, 3, 5, 7, 9, 11, 13,
    15, 17, 19, 21, 23, 25, 27, 28,
];

/// Centre frequency of a 2.4 GHz WiFi channel (1..=13).
pub fn wifi_channel_center(channel: u32) -> Result<f64> {
    if !(1..=13).contains(&channel) {
        return Err(Error::config(format!("WiFi channel {channel} outside 1..=13")));
    }
    Ok(2.407e9 + 5.0e6 * channel as f64)
}

/// Subcarrier frequencies of `count` CSI entries on a WiFi channel.
///
/// 30 entries follow the grouped report layout, 64 the full FFT grid; any
/// other count is spread evenly over ±8.75 MHz.
pub fn subcarrier_grid(channel: u32, count: usize) -> Result<Vec<f64>> {
    let center = wifi_channel_center(channel)?;
    let offsets: Vec<f64> = match count {
        0 => return Err(Error::config("subcarrier count must be positive")),
        30 => GROUPED_SUBCARRIERS_30
            .iter()
            .map(|&k| k as f64 * SUBCARRIER_SPACING)
            .collect(),
        64 => (-32..32).map(|k| k as f64 * SUBCARRIER_SPACING).collect(),
        1 => vec![0.0],
        n => (0..n)
            .map(|i| -8.75e6 + 17.5e6 * i as f64 / (n - 1) as f64)
            .collect(),
    };
    Ok(offsets.into_iter().map(|o| center + o).collect())
}

/// Known unit-power pilot, one symbol per subcarrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotSymbol {
    values: Vec<Complex64>,
}

impl PilotSymbol {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("pilot is empty"));
        }
        if values.iter().any(|v| v.norm() == 0.0) {
            return Err(Error::domain("pilot has a zero entry"));
        }
        let power = values.iter().map(|v| v.norm_sqr()).sum::<f64>() / values.len() as f64;
        if (power - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("pilot power {power} is not unit")));
        }
        Ok(Self { values })
    }

    /// Fixed QPSK pattern of length `len`.
    pub fn qpsk(len: usize) -> Self {
        let values = (0..len)
            .map(|j| {
                let quadrant = ((j * 7 + j / 3) % 4) as f64;
                Complex64::from_polar(1.0, PI / 4.0 + quadrant * PI / 2.0)
            })
            .collect();
        Self { values }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Receiver estimate of the injected channel for one packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiVector {
    pub values: Vec<Complex64>,
}

impl CsiVector {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Round every component to `f32` so the vector survives a float32 file exactly.
    pub fn quantized_f32(&self) -> Self {
        Self {
            values: self
                .values
                .iter()
                .map(|v| Complex64::new(v.re as f32 as f64, v.im as f32 as f64))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// One circularly-symmetric complex Gaussian sample with `E|z|² = power`.
pub fn complex_gaussian<R: Rng + ?Sized>(power: f64, rng: &mut R) -> Complex64 {
    let sigma = (power / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(sigma * re, sigma * im)
}

/// `Y_j = SH_j X_j + η_j` with `E|η_j|² = noise_power`.
pub fn transmit<R: Rng + ?Sized>(
    pilot: &PilotSymbol,
    injected: &FrequencyResponse,
    noise_power: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if pilot.len() != injected.len() {
        return Err(Error::config(format!(
            "pilot has {} subcarriers, channel has {}",
            pilot.len(),
            injected.len()
        )));
    }
    if !(noise_power >= 0.0) {
        return Err(Error::domain("noise power must be non-negative"));
    }
    Ok(pilot
        .values()
        .iter()
        .zip(injected.values())
        .map(|(x, sh)| {
            let clean = sh * x;
            if noise_power == 0.0 {
                clean
            } else {
                clean + complex_gaussian(noise_power, rng)
            }
        })
        .collect())
}

/// Single-snapshot least-squares estimate `Y_j / X_j`.
pub fn estimate_csi(received: &[Complex64], pilot: &PilotSymbol) -> Result<CsiVector> {
    if received.len() != pilot.len() {
        return Err(Error::config(format!(
            "received {} subcarriers, pilot has {}",
            received.len(),
            pilot.len()
        )));
    }
    if pilot.values().iter().any(|x| x.norm() == 0.0) {
        return Err(Error::domain("pilot has a zero entry"));
    }
    Ok(CsiVector::new(
        received
            .iter()
            .zip(pilot.values())
            .map(|(y, x)| y / x)
            .collect(),
    ))
}

/// How the per-packet noise power is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnrModel {
    /// Fixed SNR relative to the mean received power.
    Fixed { snr_db: f64 },
    /// Link budget: thermal floor plus a receiver impairment floor that
    /// scales with the received power (caps the effective SNR).
    Budget {
        tx_power_dbm: f64,
        noise_floor_dbm: f64,
        ceiling_db: f64,
    },
}

impl Default for SnrModel {
    fn default() -> Self {
        SnrModel::Budget {
            tx_power_dbm: 15.0,
            noise_floor_dbm: -95.0,
            ceiling_db: DEFAULT_SNR_CEILING_DB,
        }
    }
}

/// Effective CSI SNR of a strong link under the default budget, dB.
pub const DEFAULT_SNR_CEILING_DB: f64 = 34.0;

impl SnrModel {
    /// Transmit power in mW (1 mW for the fixed-SNR model).
    pub fn tx_power(&self) -> f64 {
        match self {
            SnrModel::Fixed { .. } => 1.0,
            SnrModel::Budget { tx_power_dbm, .. } => 10f64.powf(tx_power_dbm / 10.0),
        }
    }

    /// Noise power for a link delivering `rx_power` mW on average.
    pub fn noise_power(&self, rx_power: f64) -> f64 {
        match *self {
            SnrModel::Fixed { snr_db } => rx_power / 10f64.powf(snr_db / 10.0),
            SnrModel::Budget {
                noise_floor_dbm,
                ceiling_db,
                ..
            } => 10f64.powf(noise_floor_dbm / 10.0) + rx_power / 10f64.powf(ceiling_db / 10.0),
        }
    }

    pub fn effective_snr_db(&self, rx_power: f64) -> f64 {
        10.0 * (rx_power / self.noise_power(rx_power)).log10()
    }
}

/// How the channel-select voltage is chosen per WiFi channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CvMode {
    /// Use each code's own `cv`.
    Code,
    /// Re-tune `cv` so the idle resonance sits on the channel centre.
    Tune,
}

impl Default for CvMode {
    fn default() -> Self {
        CvMode::Code
    }
}

/// Everything needed to simulate packets between a node and the receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub geometry: ScenarioGeometry,
    pub params: ChannelParams,
    /// WiFi channels to transmit on.
    pub channels: Vec<u32>,
    #[serde(default = "default_subcarriers")]
    pub subcarriers: usize,
    #[serde(default)]
    pub snr: SnrModel,
    #[serde(default)]
    pub cv_mode: CvMode,
    /// Redraw the diffuse taps for every packet.
    #[serde(default)]
    pub dynamic: bool,
}

fn default_subcarriers() -> usize {
    DEFAULT_SUBCARRIERS
}

impl Scenario {
    /// Node and receiver `distance` metres apart on WiFi channel 3.
    pub fn line(id: &str, distance: f64) -> Self {
        Self {
            id: id.to_string(),
            geometry: ScenarioGeometry::at_distance(distance),
            params: ChannelParams::default(),
            channels: vec![3],
            subcarriers: DEFAULT_SUBCARRIERS,
            snr: SnrModel::default(),
            cv_mode: CvMode::Code,
            dynamic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.params.validate()?;
        if self.channels.is_empty() {
            return Err(Error::config("scenario lists no channels"));
        }
        for &ch in &self.channels {
            wifi_channel_center(ch)?;
        }
        let mut seen = self.channels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.channels.len() {
            return Err(Error::config("scenario lists a channel twice"));
        }
        if self.subcarriers == 0 {
            return Err(Error::config("subcarrier count must be positive"));
        }
        Ok(())
    }

    /// Frozen link for this scenario, drawn from the `link/<id>` stream.
    pub fn link(&self, seeds: &SeedTree) -> Result<Link> {
        Link::realize(
            &self.geometry,
            &self.params,
            &mut seeds.stream(&format!("link/{}", self.id)),
        )
    }

    /// The code actually applied on `channel` under this scenario's cv mode.
    pub fn effective_code(&self, surface: &Surface, code: &ControlCode, channel: u32) -> Result<ControlCode> {
        match self.cv_mode {
            CvMode::Code => Ok(code.clone()),
            CvMode::Tune => Ok(ControlCode {
                cv: surface.cv_for_frequency(wifi_channel_center(channel)?)?,
                sv: code.sv.clone(),
            }),
        }
    }
}

/// Packet-level simulator for one scenario: frozen link plus noise model.
#[derive(Debug, Clone)]
pub struct Transmitter<'a> {
    pub surface: &'a Surface,
    pub scenario: &'a Scenario,
    pub link: Link,
    pub pilot: PilotSymbol,
}

impl<'a> Transmitter<'a> {
    pub fn new(surface: &'a Surface, scenario: &'a Scenario, seeds: &SeedTree) -> Result<Self> {
        scenario.validate()?;
        Ok(Self {
            surface,
            scenario,
            link: scenario.link(seeds)?,
            pilot: PilotSymbol::qpsk(scenario.subcarriers),
        })
    }

    /// Same environment, explicit link (for moved endpoints).
    pub fn with_link(surface: &'a Surface, scenario: &'a Scenario, link: Link) -> Self {
        Self {
            surface,
            scenario,
            link,
            pilot: PilotSymbol::qpsk(scenario.subcarriers),
        }
    }

    /// Mean received power in mW before the surface.
    pub fn rx_power(&self) -> Result<f64> {
        Ok(self.scenario.snr.tx_power() * self.link.large_scale_gain()?)
    }

    pub fn noise_power(&self) -> Result<f64> {
        Ok(self.scenario.snr.noise_power(self.rx_power()?))
    }

    /// Noiseless received-amplitude-scaled `SH` for `code` on `channel`.
    pub fn injected(&self, code: &ControlCode, channel: u32, link: &Link) -> Result<FrequencyResponse> {
        let grid = subcarrier_grid(channel, self.scenario.subcarriers)?;
        let code = self.scenario.effective_code(self.surface, code, channel)?;
        let s = self.surface.response(&code, &grid)?;
        let h = link.response(&grid)?;
        let sh = injected_response(&s, &h)?;
        Ok(sh.scaled(Complex64::new(self.scenario.snr.tx_power().sqrt(), 0.0)))
    }

    /// One packet: draws dynamics (when enabled) and noise from `rng`.
    pub fn packet<R: Rng + ?Sized>(&self, code: &ControlCode, channel: u32, rng: &mut R) -> Result<CsiVector> {
        let link = if self.scenario.dynamic {
            let mut moving = self.link.clone();
            moving.realization = redraw_diffuse(&self.link.realization, self.link.params.k_rician, rng);
            moving
        } else {
            self.link.clone()
        };
        let sh = self.injected(code, channel, &link)?;
        let y = transmit(&self.pilot, &sh, self.noise_power()?, rng)?;
        estimate_csi(&y, &self.pilot)
    }
}

/// What a class label stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub code: ControlCode,
    pub channel: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub n_classes: usize,
    pub subcarriers: usize,
    pub seed: u64,
    pub scenario_ids: Vec<String>,
    pub classes: Vec<ClassInfo>,
    /// Free-form generation settings echoed for provenance.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub label: u32,
    pub channel: u32,
    pub scenario: u32,
    pub seed: u64,
    pub csi: CsiVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.header.n_classes
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label as usize).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.header.n_classes];
        for r in &self.records {
            if let Some(c) = counts.get_mut(r.label as usize) {
                *c += 1;
            }
        }
        counts
    }

    /// Labels dense in `[0, n_classes)`, every label present, fixed CSI length.
    pub fn validate(&self) -> Result<()> {
        if self.header.classes.len() != self.header.n_classes {
            return Err(Error::data("class table does not match n_classes"));
        }
        for r in &self.records {
            if r.label as usize >= self.header.n_classes {
                return Err(Error::data(format!("label {} out of range", r.label)));
            }
            if r.csi.len() != self.header.subcarriers {
                return Err(Error::data("CSI length differs from header"));
            }
            if r.scenario as usize >= self.header.scenario_ids.len().max(1) {
                return Err(Error::data("scenario index out of range"));
            }
        }
        if let Some(missing) = self.class_counts().iter().position(|&c| c == 0) {
            return Err(Error::data(format!("label {missing} has no records")));
        }
        Ok(())
    }

    /// Records with the given indices, keeping the header.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            header: self.header.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Records whose label satisfies `keep`, relabelled densely in order of first label.
    pub fn select_classes(&self, keep: &[usize]) -> Dataset {
        let map: BTreeMap<usize, u32> = keep
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new as u32))
            .collect();
        let records = self
            .records
            .iter()
            .filter_map(|r| {
                map.get(&(r.label as usize)).map(|&label| Record {
                    label,
                    ..r.clone()
                })
            })
            .collect();
        let mut header = self.header.clone();
        header.n_classes = keep.len();
        header.classes = keep.iter().map(|&k| self.header.classes[k].clone()).collect();
        Dataset { header, records }
    }
}

/// Split indices per label, sending `fraction` of each class to the first
/// part (at least one record per class on each side when the class has two).
pub fn stratified_split<R: Rng + ?Sized>(
    labels: &[usize],
    fraction: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!("split fraction {fraction} outside (0, 1)")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (_, mut idx) in by_class {
        // Fisher-Yates with the caller's stream keeps the split reproducible.
        for i in (1..idx.len()).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        let mut take = (fraction * idx.len() as f64).round() as usize;
        if idx.len() >= 2 {
            take = take.clamp(1, idx.len() - 1);
        }
        first.extend_from_slice(&idx[..take]);
        second.extend_from_slice(&idx[take..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

/// Simulate `packets_per_code` packets of every code on every scenario channel.
///
/// With one channel the label is the code index; with several it is
/// `code_index * channels + channel_index`. Records come out in canonical
/// order (label, packet), each with its own noise stream
/// `noise/<scenario>/<label>/<packet>`.
pub fn generate_dataset(
    surface: &Surface,
    scenario: &Scenario,
    codes: &[ControlCode],
    packets_per_code: usize,
    seeds: &SeedTree,
) -> Result<Dataset> {
    if codes.is_empty() || codes.len() * scenario.channels.len() < 2 {
        return Err(Error::config("a dataset needs at least two classes"));
    }
    if packets_per_code == 0 {
        return Err(Error::config("packets per code must be positive"));
    }
    surface.validate()?;
    let tx = Transmitter::new(surface, scenario, seeds)?;
    let n_channels = scenario.channels.len();
    let mut classes = Vec::with_capacity(codes.len() * n_channels);
    let mut records = Vec::with_capacity(codes.len() * n_channels * packets_per_code);
    for (ci, code) in codes.iter().enumerate() {
        for (chi, &channel) in scenario.channels.iter().enumerate() {
            let label = (ci * n_channels + chi) as u32;
            classes.push(ClassInfo {
                code: scenario.effective_code(surface, code, channel)?,
                channel,
            });
            for p in 0..packets_per_code {
                let seed = seeds.seed_u64(&format!("noise/{}/{label}/{p}", scenario.id));
                let csi = tx
                    .packet(code, channel, &mut rng_from_u64(seed))?
                    .quantized_f32();
                records.push(Record {
                    label,
                    channel,
                    scenario: 0,
                    seed,
                    csi,
                });
            }
        }
    }
    let dataset = Dataset {
        header: DatasetHeader {
            n_classes: classes.len(),
            subcarriers: scenario.subcarriers,
            seed: seeds.master(),
            scenario_ids: vec![scenario.id.clone()],
            classes,
            config: serde_json::json!({
                "packets_per_code": packets_per_code,
                "scenario": scenario,
            }),
        },
        records,
    };
    dataset.validate()?;
    Ok(dataset)
}
