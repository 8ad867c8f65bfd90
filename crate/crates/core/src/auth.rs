//! Enrollment database and the three authentication protocols, run as
//! server-side state machines over received CSI.
//!
//! The server scores a CSI vector with a shared-covariance Gaussian model
//! over standardized magnitudes: the class posterior is proportional to
//! `exp(-d²/2)` where `d` is the Mahalanobis distance to the class mean. A
//! packet is accepted for a device when the posterior of the predicted
//! class reaches the threshold, the class belongs to the device, and the
//! distance lies inside the class's enrolled region (the gate).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{centroid_fit, magnitude_feature, CentroidModel, FeatureConfig};
use crate::error::{Error, Result};
use crate::phy::{CsiVector, Dataset};
use crate::rng::SeedTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuthConfig {
    /// Minimum posterior of the predicted class.
    pub threshold: f64,
    /// Quantile of enrolled self-distances that sets the gate.
    pub gate_quantile: f64,
    /// Gate = quantile distance × margin.
    pub gate_margin: f64,
    /// Ridge added to the pooled covariance, relative to its mean diagonal.
    pub ridge: f64,
    /// Signatures per Protocol 2 session.
    pub p2_length: usize,
}

impl Default for AuthConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            gate_quantile: 0.99,
            gate_margin: 1.25,
            ridge: 1e-6,
            p2_length: 3,
        }
    }
}

impl AuthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config("threshold must lie in [0, 1]"));
        }
        if !(self.gate_quantile > 0.0 && self.gate_quantile <= 1.0) || !(self.gate_margin > 0.0) {
            return Err(Error::config("gate quantile must lie in (0, 1] and margin be positive"));
        }
        if !(self.ridge > 0.0) {
            return Err(Error::config("ridge must be positive"));
        }
        if self.p2_length < 2 {
            return Err(Error::config("Protocol 2 needs at least two signatures"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub dev_id: String,
    /// Global class ids owned by this device.
    pub enrolled_labels: BTreeSet<u32>,
    pub allowed_channels: BTreeSet<u32>,
    /// Protocol 2 order of global class ids.
    pub designated_sequence: Vec<u32>,
    /// Protocol 3 class expected on each channel.
    pub channel_labels: BTreeMap<u32, u32>,
    pub enrolled_model_ref: String,
    pub nonce: u64,
    #[serde(with = "hex_bytes")]
    pub fp_digest: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        hex::decode(text).map_err(serde::de::Error::custom)
    }
}

/// SHA-256 over `len(dev_id) ‖ dev_id ‖ count ‖ sorted labels ‖ nonce`,
/// integers little-endian (`u32` lengths and labels, `u64` nonce).
pub fn fingerprint_digest(dev_id: &str, labels: &BTreeSet<u32>, nonce: u64) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update((dev_id.len() as u32).to_le_bytes());
    h.update(dev_id.as_bytes());
    h.update((labels.len() as u32).to_le_bytes());
    for l in labels {
        h.update(l.to_le_bytes());
    }
    h.update(nonce.to_le_bytes());
    h.finalize().to_vec()
}

pub fn fingerprint_hash(record: &DeviceRecord) -> Vec<u8> {
    fingerprint_digest(&record.dev_id, &record.enrolled_labels, record.nonce)
}

/// What a node keeps after enrollment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub dev_id: String,
    #[serde(with = "hex_bytes")]
    pub expected_digest: Vec<u8>,
}

/// True when the Ack is addressed to this node and carries the provisioned digest.
pub fn verify_server_hash(node: &NodeState, ack: &AuthMessage) -> bool {
    match ack {
        AuthMessage::Ack { fp_hash, dev_id } => dev_id == &node.dev_id && fp_hash == &node.expected_digest,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AuthMessage {
    PilotReq {
        dev_id: String,
    },
    AReq {
        inj_c_est: CsiVector,
        dev_id: String,
    },
    Ack {
        #[serde(with = "hex_bytes")]
        fp_hash: Vec<u8>,
        dev_id: String,
    },
    Reject {
        reason: String,
    },
}

const TAG_PILOT: u8 = 1;
const TAG_AREQ: u8 = 2;
const TAG_ACK: u8 = 3;
const TAG_REJECT: u8 = 4;

impl AuthMessage {
    pub fn reject(reason: &str) -> Self {
        AuthMessage::Reject {
            reason: reason.to_string(),
        }
    }

    /// Byte encoding: a one-byte tag, then fields in declaration order.
    /// Strings and byte strings are `u32` length + bytes; a CSI vector is a
    /// `u32` count followed by `(re, im)` as `f64` pairs. All little-endian.
    pub fn encode(&self) -> Vec<u8> {
        fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
            out.extend_from_slice(&(b.len() as u32).to_le_bytes());
            out.extend_from_slice(b);
        }
        let mut out = Vec::new();
        match self {
            AuthMessage::PilotReq { dev_id } => {
                out.push(TAG_PILOT);
                put_bytes(&mut out, dev_id.as_bytes());
            }
            AuthMessage::AReq { inj_c_est, dev_id } => {
                out.push(TAG_AREQ);
                out.extend_from_slice(&(inj_c_est.len() as u32).to_le_bytes());
                for v in &inj_c_est.values {
                    out.extend_from_slice(&v.re.to_le_bytes());
                    out.extend_from_slice(&v.im.to_le_bytes());
                }
                put_bytes(&mut out, dev_id.as_bytes());
            }
            AuthMessage::Ack { fp_hash, dev_id } => {
                out.push(TAG_ACK);
                put_bytes(&mut out, fp_hash);
                put_bytes(&mut out, dev_id.as_bytes());
            }
            AuthMessage::Reject { reason } => {
                out.push(TAG_REJECT);
                put_bytes(&mut out, reason.as_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let msg = match r.u8()? {
            TAG_PILOT => AuthMessage::PilotReq { dev_id: r.string()? },
            TAG_AREQ => {
                let n = r.u32()? as usize;
                if n > (bytes.len() - r.pos) / 16 {
                    return Err(r.error("CSI count exceeds message length"));
                }
                let values = (0..n)
                    .map(|_| Ok(Complex64::new(r.f64()?, r.f64()?)))
                    .collect::<Result<Vec<_>>>()?;
                AuthMessage::AReq {
                    inj_c_est: CsiVector::new(values),
                    dev_id: r.string()?,
                }
            }
            TAG_ACK => AuthMessage::Ack {
                fp_hash: r.bytes()?.to_vec(),
                dev_id: r.string()?,
            },
            TAG_REJECT => AuthMessage::Reject { reason: r.string()? },
            tag => return Err(Error::Parse { offset: 0, message: format!("unknown message tag {tag}") }),
        };
        if r.pos != bytes.len() {
            return Err(r.error("trailing bytes"));
        }
        Ok(msg)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error(&self, message: &str) -> Error {
        Error::Parse {
            offset: self.pos as u64,
            message: message.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error("truncated message"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn string(&mut self) -> Result<String> {
        let start = self.pos;
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Parse {
            offset: start as u64,
            message: "string is not UTF-8".into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub accepted: bool,
    pub matched_labels: Vec<u32>,
    /// Smallest posterior among the classified packets.
    pub score: f64,
    pub transcript: Vec<AuthMessage>,
}

/// Server verdict on one CSI vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub class: u32,
    pub posterior: f64,
    pub distance: f64,
    /// Distance lies inside the predicted class's gate.
    pub in_region: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sample {
    class: u32,
    feature: Vec<f64>,
}

/// Which enrolled classes Protocol 2 pushes, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnrollOptions {
    /// Local labels of the designated sequence; defaults to the first `p2_length` labels.
    pub designated: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthServer {
    pub config: AuthConfig,
    pub seed: u64,
    pub features: FeatureConfig,
    pub records: BTreeMap<String, DeviceRecord>,
    /// `(dev_id, local label)` of every global class id.
    pub classes: Vec<(String, u32)>,
    samples: Vec<Sample>,
    #[serde(skip)]
    model: Option<CentroidModel>,
    #[serde(skip)]
    gates: Vec<f64>,
}

impl AuthServer {
    pub fn new(config: AuthConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            seed,
            features: FeatureConfig::default(),
            records: BTreeMap::new(),
            classes: Vec::new(),
            samples: Vec::new(),
            model: None,
            gates: Vec::new(),
        })
    }

    pub fn record(&self, dev_id: &str) -> Option<&DeviceRecord> {
        self.records.get(dev_id)
    }

    pub fn gate(&self, class: u32) -> Option<f64> {
        self.gates.get(class as usize).copied()
    }

    pub fn model(&self) -> Option<&CentroidModel> {
        self.model.as_ref()
    }

    /// Register a device from its own labelled dataset and refit the model.
    ///
    /// Every class of the dataset becomes a global class owned by the device.
    pub fn enroll(&mut self, dev_id: &str, dataset: &Dataset, options: &EnrollOptions) -> Result<DeviceRecord> {
        if self.records.contains_key(dev_id) {
            return Err(Error::config(format!("device {dev_id} already enrolled")));
        }
        if dataset.is_empty() {
            return Err(Error::data("enrollment dataset is empty"));
        }
        dataset.validate()?;
        if let Some(c) = dataset.class_counts().iter().position(|&c| c < 2) {
            return Err(Error::data(format!("class {c} has fewer than two enrollment samples")));
        }
        let base = self.classes.len() as u32;
        let mut samples = Vec::with_capacity(dataset.len());
        for r in &dataset.records {
            samples.push(Sample {
                class: base + r.label,
                feature: magnitude_feature(&r.csi, &self.features)?,
            });
        }
        let local_count = dataset.n_classes() as u32;
        let designated_local = match &options.designated {
            Some(seq) => seq.clone(),
            None => (0..local_count.min(self.config.p2_length as u32)).collect(),
        };
        if designated_local.iter().any(|&l| l >= local_count) {
            return Err(Error::config("designated label outside the enrolled set"));
        }
        let mut channel_labels = BTreeMap::new();
        for (local, info) in dataset.header.classes.iter().enumerate() {
            channel_labels.entry(info.channel).or_insert(base + local as u32);
        }
        let enrolled_labels: BTreeSet<u32> = (base..base + local_count).collect();
        let nonce = SeedTree::new(self.seed).seed_u64(&format!("nonce/{dev_id}"));
        let mut record = DeviceRecord {
            dev_id: dev_id.to_string(),
            allowed_channels: channel_labels.keys().copied().collect(),
            designated_sequence: designated_local.iter().map(|l| base + l).collect(),
            channel_labels,
            enrolled_model_ref: "centroid".into(),
            nonce,
            enrolled_labels,
            fp_digest: Vec::new(),
        };
        record.fp_digest = fingerprint_hash(&record);

        let mut next = self.clone();
        next.samples.extend(samples);
        next.classes
            .extend((0..local_count).map(|l| (dev_id.to_string(), l)));
        next.records.insert(dev_id.to_string(), record.clone());
        next.refit()?;
        *self = next;
        Ok(record)
    }

    /// Node-side state provisioned at enrollment.
    pub fn provision(&self, dev_id: &str) -> Result<NodeState> {
        let record = self
            .record(dev_id)
            .ok_or_else(|| Error::config(format!("device {dev_id} not enrolled")))?;
        Ok(NodeState {
            dev_id: dev_id.to_string(),
            expected_digest: record.fp_digest.clone(),
        })
    }

    /// Refit the centroid model and per-class gates from stored samples.
    pub fn refit(&mut self) -> Result<()> {
        let k = self.classes.len();
        if k == 0 {
            self.model = None;
            self.gates.clear();
            return Ok(());
        }
        let features: Vec<Vec<f64>> = self.samples.iter().map(|s| s.feature.clone()).collect();
        let labels: Vec<usize> = self.samples.iter().map(|s| s.class as usize).collect();
        let raw = centroid_fit(&features, &labels, k, 0.0).or_else(|_| centroid_fit(&features, &labels, k, 1e-12))?;
        let dim = raw.dim() as f64;
        let ridge = self.config.ridge * raw.covariance.trace() / dim;
        let model = CentroidModel::from_parts(raw.means, raw.covariance, ridge)?;
        let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); k];
        for s in &self.samples {
            per_class[s.class as usize].push(model.distance(&s.feature, s.class as usize)?);
        }
        self.gates = per_class
            .into_iter()
            .map(|mut d| {
                d.sort_by(|a, b| a.total_cmp(b));
                let idx = ((self.config.gate_quantile * d.len() as f64).ceil() as usize).clamp(1, d.len()) - 1;
                d[idx] * self.config.gate_margin
            })
            .collect();
        self.model = Some(model);
        Ok(())
    }

    /// Classify one CSI vector against every enrolled class.
    pub fn score(&self, csi: &CsiVector) -> Result<Scored> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::config("server has no enrolled devices"))?;
        let x = magnitude_feature(csi, &self.features)?;
        let d = model.distances(&x)?;
        let logits: Vec<f64> = d.iter().map(|v| -0.5 * v * v).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let (class, distance) = model.classify(&x)?;
        Ok(Scored {
            class: class as u32,
            posterior: weights[class] / total,
            distance,
            in_region: distance <= self.gates[class],
        })
    }

    /// Mahalanobis distance of `csi` to the centroid of global `class`.
    pub fn class_distance(&self, csi: &CsiVector, class: u32) -> Result<f64> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::config("server has no enrolled devices"))?;
        if class as usize >= model.n_classes() {
            return Err(Error::config(format!("class {class} is not enrolled")));
        }
        model.distance(&magnitude_feature(csi, &self.features)?, class as usize)
    }

    /// Decision of the single-packet rule for `expected` classes.
    fn check(&self, csi: &CsiVector, expected: &BTreeSet<u32>) -> Result<(Scored, Option<&'static str>)> {
        let s = self.score(csi)?;
        let verdict = if !expected.contains(&s.class) {
            Some("label mismatch")
        } else if s.posterior < self.config.threshold {
            Some("low confidence")
        } else if !s.in_region {
            Some("outside enrolled region")
        } else {
            None
        };
        Ok((s, verdict))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path)?;
        let mut server: AuthServer = serde_json::from_slice(&text)?;
        server.config.validate()?;
        server.refit()?;
        Ok(server)
    }
}

fn reject(mut transcript: Vec<AuthMessage>, reason: &str, labels: Vec<u32>, score: f64) -> ProtocolOutcome {
    transcript.push(AuthMessage::reject(reason));
    ProtocolOutcome {
        accepted: false,
        matched_labels: labels,
        score,
        transcript,
    }
}

/// Protocol 1: pilot request, one CSI estimate, Ack with the fingerprint hash.
pub fn authenticate_p1(server: &AuthServer, rx_pilot: &CsiVector, dev_id: &str) -> Result<ProtocolOutcome> {
    let transcript = vec![
        AuthMessage::PilotReq {
            dev_id: dev_id.to_string(),
        },
        AuthMessage::AReq {
            inj_c_est: rx_pilot.clone(),
            dev_id: dev_id.to_string(),
        },
    ];
    let Some(record) = server.record(dev_id) else {
        return Ok(reject(transcript, "unknown device", Vec::new(), 0.0));
    };
    let (s, verdict) = server.check(rx_pilot, &record.enrolled_labels)?;
    if let Some(reason) = verdict {
        return Ok(reject(transcript, reason, vec![s.class], s.posterior));
    }
    let mut transcript = transcript;
    transcript.push(AuthMessage::Ack {
        fp_hash: record.fp_digest.clone(),
        dev_id: dev_id.to_string(),
    });
    Ok(ProtocolOutcome {
        accepted: true,
        matched_labels: vec![s.class],
        score: s.posterior,
        transcript,
    })
}

#[derive(Debug, Clone, PartialEq)]
enum P2State {
    AwaitPilot,
    AwaitFirst { dev_id: String },
    AwaitSignature { dev_id: String, next: usize },
    Closed,
}

/// Protocol 2 server session: the first signature must pass the Protocol 1
/// rule for the first designated class, after which the server sends its
/// hash; the node pushes the remaining designated signatures in order.
#[derive(Debug, Clone)]
pub struct P2Session<'a> {
    server: &'a AuthServer,
    state: P2State,
    matched: Vec<u32>,
    score: f64,
    accepted: bool,
    transcript: Vec<AuthMessage>,
}

impl<'a> P2Session<'a> {
    pub fn new(server: &'a AuthServer) -> Self {
        Self {
            server,
            state: P2State::AwaitPilot,
            matched: Vec::new(),
            score: 1.0,
            accepted: false,
            transcript: Vec::new(),
        }
    }

    fn close(&mut self, reply: AuthMessage, accepted: bool) -> Option<AuthMessage> {
        self.accepted = accepted;
        self.state = P2State::Closed;
        self.transcript.push(reply.clone());
        Some(reply)
    }

    /// Feed one node message; returns the server's reply, if any.
    pub fn handle(&mut self, msg: AuthMessage) -> Result<Option<AuthMessage>> {
        if self.state == P2State::Closed {
            return Ok(None);
        }
        self.transcript.push(msg.clone());
        let state = self.state.clone();
        match (state, msg) {
            (P2State::AwaitPilot, AuthMessage::PilotReq { dev_id }) => {
                if self.server.record(&dev_id).is_none() {
                    return Ok(self.close(AuthMessage::reject("unknown device"), false));
                }
                self.state = P2State::AwaitFirst { dev_id };
                Ok(None)
            }
            (P2State::AwaitFirst { dev_id }, AuthMessage::AReq { inj_c_est, dev_id: d }) if d == dev_id => {
                self.signature(&dev_id, &inj_c_est, 0)
            }
            (P2State::AwaitSignature { dev_id, next }, AuthMessage::AReq { inj_c_est, dev_id: d }) if d == dev_id => {
                self.signature(&dev_id, &inj_c_est, next)
            }
            _ => Ok(self.close(AuthMessage::reject("protocol violation"), false)),
        }
    }

    fn signature(&mut self, dev_id: &str, csi: &CsiVector, index: usize) -> Result<Option<AuthMessage>> {
        let record = self.server.record(dev_id).expect("checked at pilot");
        let expected = record.designated_sequence[index];
        let (s, verdict) = self.server.check(csi, &BTreeSet::from([expected]))?;
        self.matched.push(s.class);
        self.score = self.score.min(s.posterior);
        if let Some(reason) = verdict {
            return Ok(self.close(AuthMessage::reject(reason), false));
        }
        let ack = AuthMessage::Ack {
            fp_hash: record.fp_digest.clone(),
            dev_id: dev_id.to_string(),
        };
        if index + 1 == record.designated_sequence.len() {
            return Ok(self.close(ack, true));
        }
        self.state = P2State::AwaitSignature {
            dev_id: dev_id.to_string(),
            next: index + 1,
        };
        if index == 0 {
            self.transcript.push(ack.clone());
            return Ok(Some(ack));
        }
        Ok(None)
    }

    pub fn finish(self) -> ProtocolOutcome {
        let mut transcript = self.transcript;
        if !matches!(transcript.last(), Some(AuthMessage::Ack { .. } | AuthMessage::Reject { .. })) || self.state != P2State::Closed {
            transcript.push(AuthMessage::reject("incomplete"));
            return ProtocolOutcome {
                accepted: false,
                matched_labels: self.matched,
                score: self.score,
                transcript,
            };
        }
        let score = if self.matched.is_empty() { 0.0 } else { self.score };
        ProtocolOutcome {
            accepted: self.accepted,
            matched_labels: self.matched,
            score,
            transcript,
        }
    }
}

/// Replay a node-side message list through a Protocol 2 session.
pub fn run_p2_transcript(server: &AuthServer, messages: Vec<AuthMessage>) -> Result<ProtocolOutcome> {
    let mut session = P2Session::new(server);
    for m in messages {
        session.handle(m)?;
    }
    Ok(session.finish())
}

/// Protocol 2 from the node's side: pilot, first signature, verify the
/// server hash, then push the remaining signatures.
pub fn authenticate_p2(
    server: &AuthServer,
    node: &NodeState,
    rx_sequence: &[CsiVector],
) -> Result<ProtocolOutcome> {
    if rx_sequence.len() < 2 {
        return Err(Error::config("Protocol 2 needs at least two signatures"));
    }
    let dev_id = node.dev_id.clone();
    let areq = |csi: &CsiVector| AuthMessage::AReq {
        inj_c_est: csi.clone(),
        dev_id: dev_id.clone(),
    };
    let mut session = P2Session::new(server);
    session.handle(AuthMessage::PilotReq { dev_id: dev_id.clone() })?;
    let reply = session.handle(areq(&rx_sequence[0]))?;
    match reply {
        Some(ack @ AuthMessage::Ack { .. }) if session.state != P2State::Closed => {
            if !verify_server_hash(node, &ack) {
                let mut outcome = session.finish();
                outcome.transcript.pop();
                outcome.transcript.push(AuthMessage::reject("server hash mismatch"));
                return Ok(outcome);
            }
        }
        _ => return Ok(session.finish()),
    }
    if let Some(record) = server.record(&dev_id) {
        if rx_sequence.len() != record.designated_sequence.len() {
            return Ok(session.finish());
        }
    }
    for csi in &rx_sequence[1..] {
        session.handle(areq(csi))?;
    }
    Ok(session.finish())
}

/// Protocol 3: one CSI estimate per allowed channel, each matching the
/// device's class on that channel.
pub fn authenticate_p3(
    server: &AuthServer,
    rx_per_channel: &BTreeMap<u32, CsiVector>,
    dev_id: &str,
) -> Result<ProtocolOutcome> {
    let mut transcript = vec![AuthMessage::PilotReq {
        dev_id: dev_id.to_string(),
    }];
    let Some(record) = server.record(dev_id) else {
        return Ok(reject(transcript, "unknown device", Vec::new(), 0.0));
    };
    if record.channel_labels.len() < 2 {
        return Err(Error::config("device is not enrolled on two or more channels"));
    }
    for (channel, csi) in rx_per_channel {
        if record.allowed_channels.contains(channel) {
            transcript.push(AuthMessage::AReq {
                inj_c_est: csi.clone(),
                dev_id: dev_id.to_string(),
            });
        }
    }
    let mut matched = Vec::new();
    let mut score: f64 = 1.0;
    for (channel, &expected) in &record.channel_labels {
        let Some(csi) = rx_per_channel.get(channel) else {
            return Ok(reject(transcript, "incomplete", matched, 0.0));
        };
        let (s, verdict) = server.check(csi, &BTreeSet::from([expected]))?;
        matched.push(s.class);
        score = score.min(s.posterior);
        if let Some(reason) = verdict {
            return Ok(reject(transcript, reason, matched, score));
        }
    }
    transcript.push(AuthMessage::Ack {
        fp_hash: record.fp_digest.clone(),
        dev_id: dev_id.to_string(),
    });
    Ok(ProtocolOutcome {
        accepted: true,
        matched_labels: matched,
        score,
        transcript,
    })
}
