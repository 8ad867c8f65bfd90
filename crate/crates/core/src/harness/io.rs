//! Binary dataset and model files.
//!
//! Dataset layout, little endian:
//! `b"MFPD"`, `u32` version, `u32` header length, JSON header, `u64` record
//! count, then per record `u32` label, `u32` channel, `u32` scenario, `u64`
//! seed, `u32` subcarrier count and that many `(f32 re, f32 im)` pairs.
//! Records hold f32-quantized CSI, so the round trip is bit exact.
//!
//! Model layout: `b"MFPM"`, `u32` version, `u32` header length, JSON header
//! (network and feature configs, tensor names and lengths), then every tensor
//! as `f64` in header order.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classifier::{FeatureConfig, InputNorm, NetworkConfig, NetworkParams};
use crate::error::{Error, Result};
use crate::phy::{CsiVector, Dataset, DatasetHeader, Record};

pub const DATASET_MAGIC: &[u8; 4] = b"MFPD";
pub const MODEL_MAGIC: &[u8; 4] = b"MFPM";
pub const FORMAT_VERSION: u32 = 1;

/// Byte cursor that reports the offset of every short read.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.bytes.len() as u64,
                message: format!("file truncated while reading {what} at byte {}", self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn preamble(&mut self, magic: &[u8; 4]) -> Result<Vec<u8>> {
        if self.take(4, "magic")? != magic {
            return Err(Error::Parse {
                offset: 0,
                message: "bad magic".into(),
            });
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Parse {
                offset: 4,
                message: format!("unsupported format version {version}"),
            });
        }
        let len = self.u32("header length")? as usize;
        Ok(self.take(len, "header")?.to_vec())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::data(format!(
                "{} trailing bytes after the last record (byte {})",
                self.bytes.len() - self.pos,
                self.pos
            )));
        }
        Ok(())
    }
}

fn preamble(out: &mut Vec<u8>, magic: &[u8; 4], header: &[u8]) -> Result<()> {
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let len = u32::try_from(header.len()).map_err(|_| Error::data("header too large"))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(header);
    Ok(())
}

/// Serialize a dataset; CSI values must be representable as f32.
pub fn dataset_to_bytes(dataset: &Dataset) -> Result<Vec<u8>> {
    dataset.validate()?;
    let mut out = Vec::new();
    preamble(&mut out, DATASET_MAGIC, &serde_json::to_vec(&dataset.header)?)?;
    out.extend_from_slice(&(dataset.records.len() as u64).to_le_bytes());
    for r in &dataset.records {
        out.extend_from_slice(&r.label.to_le_bytes());
        out.extend_from_slice(&r.channel.to_le_bytes());
        out.extend_from_slice(&r.scenario.to_le_bytes());
        out.extend_from_slice(&r.seed.to_le_bytes());
        out.extend_from_slice(&(r.csi.len() as u32).to_le_bytes());
        for v in &r.csi.values {
            let (re, im) = (v.re as f32, v.im as f32);
            if re as f64 != v.re || im as f64 != v.im {
                return Err(Error::data("CSI value not representable as f32; quantize first"));
            }
            out.extend_from_slice(&re.to_le_bytes());
            out.extend_from_slice(&im.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut rd = Reader::new(bytes);
    let header_bytes = rd.preamble(DATASET_MAGIC)?;
    let header: DatasetHeader = serde_json::from_slice(&header_bytes).map_err(|e| Error::Parse {
        offset: 12,
        message: format!("dataset header: {e}"),
    })?;
    let count = rd.u64("record count")?;
    let mut records = Vec::new();
    for _ in 0..count {
        let label = rd.u32("label")?;
        let channel = rd.u32("channel")?;
        let scenario = rd.u32("scenario index")?;
        let seed = rd.u64("record seed")?;
        let n = rd.u32("subcarrier count")? as usize;
        if n != header.subcarriers {
            return Err(Error::data(format!(
                "record has {n} subcarriers, header declares {}",
                header.subcarriers
            )));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let re = rd.f32("CSI")?;
            let im = rd.f32("CSI")?;
            values.push(Complex64::new(re as f64, im as f64));
        }
        records.push(Record {
            label,
            channel,
            scenario,
            seed,
            csi: CsiVector::new(values),
        });
    }
    rd.finish()?;
    let ds = Dataset { header, records };
    ds.validate()?;
    Ok(ds)
}

pub fn export_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_bytes(dataset)?)?;
    Ok(())
}

pub fn import_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_bytes(&std::fs::read(path)?)
}

/// One row per record: `label,channel,scenario,seed,re_0,im_0,...`.
pub fn write_dataset_csv<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    write!(out, "label,channel,scenario,seed")?;
    for j in 0..dataset.header.subcarriers {
        write!(out, ",re_{j},im_{j}")?;
    }
    writeln!(out)?;
    for r in &dataset.records {
        write!(out, "{},{},{},{}", r.label, r.channel, r.scenario, r.seed)?;
        for v in &r.csi.values {
            write!(out, ",{},{}", v.re, v.im)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelHeader {
    network: NetworkConfig,
    features: FeatureConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_norm: Option<InputNorm>,
    tensors: Vec<(String, usize)>,
}

/// A trained network together with the feature extraction it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub params: NetworkParams,
    pub features: FeatureConfig,
}

pub fn model_to_bytes(model: &SavedModel) -> Result<Vec<u8>> {
    let header = ModelHeader {
        network: model.params.config.clone(),
        features: model.features,
        input_norm: model.params.input_norm.clone(),
        tensors: model
            .params
            .tensor_names()
            .into_iter()
            .zip(model.params.tensors().iter().map(|t| t.len()))
            .collect(),
    };
    let mut out = Vec::new();
    preamble(&mut out, MODEL_MAGIC, &serde_json::to_vec(&header)?)?;
    for t in model.params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<SavedModel> {
    let mut rd = Reader::new(bytes);
    let header_bytes = rd.preamble(MODEL_MAGIC)?;
    let header: ModelHeader = serde_json::from_slice(&header_bytes).map_err(|e| Error::Parse {
        offset: 12,
        message: format!("model header: {e}"),
    })?;
    let mut params = NetworkParams::zeros(&header.network)?;
    let expected: Vec<(String, usize)> = params
        .tensor_names()
        .into_iter()
        .zip(params.tensors().iter().map(|t| t.len()))
        .collect();
    if expected != header.tensors {
        return Err(Error::data("tensor table does not match the network configuration"));
    }
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = rd.f64("weights")?;
        }
    }
    rd.finish()?;
    if let Some(n) = &header.input_norm {
        let width = header.network.input_width();
        if n.mean.len() != width || n.scale.len() != width {
            return Err(Error::data("input statistics do not match the input width"));
        }
    }
    params.input_norm = header.input_norm;
    if !params.is_finite() {
        return Err(Error::data("model contains non-finite or non-positive values"));
    }
    Ok(SavedModel {
        params,
        features: header.features,
    })
}

pub fn save_model(model: &SavedModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    model_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metasurface::Surface;
    use crate::phy::{generate_dataset, Scenario};
    use crate::rng::SeedTree;

    fn small() -> Dataset {
        let surface = Surface::default();
        let mut scenario = Scenario::line("io", 2.0);
        scenario.channels = vec![6];
        generate_dataset(&surface, &scenario, &surface.spread_codes(16.1, 3), 4, &SeedTree::new(8)).unwrap()
    }

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        let ds = small();
        let bytes = dataset_to_bytes(&ds).unwrap();
        assert_eq!(dataset_from_bytes(&bytes).unwrap(), ds);
        assert_eq!(&bytes[..4], DATASET_MAGIC);
    }

    #[test]
    fn truncation_reports_an_offset() {
        let bytes = dataset_to_bytes(&small()).unwrap();
        for cut in [2, 10, 40, bytes.len() - 3] {
            match dataset_from_bytes(&bytes[..cut]) {
                Err(Error::Parse { offset, .. }) => assert_eq!(offset, cut as u64),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn count_and_version_mismatches() {
        let ds = small();
        let mut bytes = dataset_to_bytes(&ds).unwrap();
        bytes.extend_from_slice(&[0; 5]);
        assert!(matches!(dataset_from_bytes(&bytes), Err(Error::Data(_))));
        let mut bytes = dataset_to_bytes(&ds).unwrap();
        bytes[4] = 9;
        assert!(matches!(dataset_from_bytes(&bytes), Err(Error::Parse { offset: 4, .. })));
        // Declared count larger than the records present.
        let mut bytes = dataset_to_bytes(&ds).unwrap();
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        bytes[12 + header_len] += 1;
        assert!(matches!(dataset_from_bytes(&bytes), Err(Error::Parse { .. })));
    }

    #[test]
    fn unquantized_csi_is_refused() {
        let mut ds = small();
        ds.records[0].csi.values[0].re = 0.1;
        assert!(dataset_to_bytes(&ds).is_err());
    }

    #[test]
    fn model_round_trip() {
        let mut net = NetworkConfig::reference(3);
        net.dense_sizes = vec![8, 3];
        let mut params = NetworkParams::init(&net, &mut SeedTree::new(2).stream("init")).unwrap();
        let rows = ndarray::Array2::from_shape_fn((5, 33), |(i, j)| (i * j) as f64 * 0.1);
        params.input_norm = Some(InputNorm::fit(rows.view()).unwrap());
        let model = SavedModel {
            params,
            features: FeatureConfig::default(),
        };
        let bytes = model_to_bytes(&model).unwrap();
        assert_eq!(model_from_bytes(&bytes).unwrap(), model);
        assert!(matches!(model_from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Parse { .. })));
        let mut bad = model.clone();
        bad.params.input_norm.as_mut().unwrap().scale[0] = 0.0;
        assert!(matches!(model_from_bytes(&model_to_bytes(&bad).unwrap()), Err(Error::Data(_))));
    }

    #[test]
    fn csv_has_one_row_per_record() {
        let ds = small();
        let mut out = Vec::new();
        write_dataset_csv(&ds, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), ds.len() + 1);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 4 + 2 * ds.header.subcarriers);
    }
}
