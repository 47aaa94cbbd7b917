//! Single-file checkpoint archive.
//!
//! ```text
//! b"AVIDCKPT"            magic
//! u32 LE                 format version
//! u64 LE                 header length in bytes
//! header                 JSON: architecture, step, RNG state, metric, tensor table
//! f32 LE ...             tensor payloads, in table order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchConfig, DetectorModel, InpainterModel, Network};
use crate::error::{AvidError, Result};
use crate::nn::Conv2d;

pub const MAGIC: &[u8; 8] = b"AVIDCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    /// Number of noise/shuffle draws already consumed (the training step).
    pub stream: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    arch: ArchConfig,
    step: u64,
    rng: RngState,
    metric: Option<(String, f64)>,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchConfig,
    pub step: u64,
    pub rng: RngState,
    /// Validation metric that triggered the save, if any.
    pub metric: Option<(String, f64)>,
    pub tensors: Vec<NamedTensor>,
}

fn network_tensors<N: Network<f32>>(prefix: &str, net: &N) -> Vec<NamedTensor> {
    net.parameter_shapes()
        .into_iter()
        .zip(net.parameters())
        .map(|((name, shape), data)| NamedTensor {
            name: format!("{prefix}.{name}"),
            shape,
            data: data.to_vec(),
        })
        .collect()
}

impl Checkpoint {
    pub fn new(arch: &ArchConfig, step: u64, rng: RngState) -> Self {
        Self {
            arch: arch.clone(),
            step,
            rng,
            metric: None,
            tensors: Vec::new(),
        }
    }

    pub fn with_inpainter(mut self, model: &InpainterModel) -> Self {
        self.tensors.extend(network_tensors("inpainter", model));
        self
    }

    pub fn with_detector(mut self, model: &DetectorModel) -> Self {
        self.tensors.extend(network_tensors("detector", model));
        self
    }

    pub fn with_metric(mut self, name: &str, value: f64) -> Self {
        self.metric = Some((name.to_string(), value));
        self
    }

    /// Extra named arrays (e.g. optimizer velocities) stored alongside the weights.
    pub fn with_arrays(mut self, prefix: &str, shapes: &[(String, Vec<usize>)], arrays: &[Vec<f32>]) -> Self {
        for ((name, shape), data) in shapes.iter().zip(arrays) {
            self.tensors.push(NamedTensor {
                name: format!("{prefix}.{name}"),
                shape: shape.clone(),
                data: data.clone(),
            });
        }
        self
    }

    pub fn has(&self, prefix: &str) -> bool {
        let p = format!("{prefix}.");
        self.tensors.iter().any(|t| t.name.starts_with(&p))
    }

    /// Arrays stored under `prefix`, in file order.
    pub fn arrays(&self, prefix: &str) -> Vec<&NamedTensor> {
        let p = format!("{prefix}.");
        self.tensors.iter().filter(|t| t.name.starts_with(&p)).collect()
    }

    fn conv_layers(&self, prefix: &str, names: &[String], shapes: &[(usize, usize, usize, usize, usize)]) -> Result<Vec<Conv2d<f32>>> {
        let mut layers = Vec::with_capacity(names.len());
        for (name, &(cin, cout, k, stride, pad)) in names.iter().zip(shapes) {
            let find = |suffix: &str, shape: Vec<usize>| -> Result<Vec<f32>> {
                let full = format!("{prefix}.{name}.{suffix}");
                let t = self
                    .tensors
                    .iter()
                    .find(|t| t.name == full)
                    .ok_or_else(|| AvidError::Checkpoint(format!("missing tensor {full}")))?;
                if t.shape != shape {
                    return Err(AvidError::Checkpoint(format!(
                        "tensor {full} has shape {:?}, expected {shape:?}",
                        t.shape
                    )));
                }
                Ok(t.data.clone())
            };
            let mut conv = Conv2d::zeroed(cin, cout, k, stride, pad);
            conv.weight = find("weight", vec![cout, cin, k, k])?;
            conv.bias = find("bias", vec![cout])?;
            layers.push(conv);
        }
        Ok(layers)
    }

    pub fn inpainter(&self) -> Result<InpainterModel> {
        let (template, _) = super::init_models_as::<f32>(&self.arch, 0)?;
        let shapes: Vec<_> = template
            .layers()
            .iter()
            .map(|c| (c.in_channels, c.out_channels, c.kernel, c.stride, c.pad))
            .collect();
        let layers = self.conv_layers("inpainter", &template.layer_names(), &shapes)?;
        InpainterModel::from_layers(&self.arch, layers)
    }

    pub fn detector(&self) -> Result<DetectorModel> {
        let shapes: Vec<_> = self
            .arch
            .detector_layers
            .iter()
            .map(|l| (l.in_channels, l.out_channels, l.kernel, l.stride, l.pad()))
            .collect();
        let names: Vec<String> = (0..shapes.len()).map(|i| format!("conv{i}")).collect();
        let layers = self.conv_layers("detector", &names, &shapes)?;
        DetectorModel::from_layers(&self.arch, layers)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            arch: self.arch.clone(),
            step: self.step,
            rng: self.rng,
            metric: self.metric.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| AvidError::Checkpoint(e.to_string()))?;
        let payload: usize = self.tensors.iter().map(|t| t.data.len() * 4).sum();
        let mut out = Vec::with_capacity(20 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            if t.data.len() != t.shape.iter().product::<usize>() {
                return Err(AvidError::Checkpoint(format!("tensor {} length does not match its shape", t.name)));
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| AvidError::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint archive"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(AvidError::Checkpoint(format!("unsupported format version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..header_end])
            .map_err(|e| AvidError::Checkpoint(format!("bad header: {e}")))?;
        let mut at = header_end;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            let end = at + 4 * n;
            if end > bytes.len() {
                return Err(AvidError::Checkpoint(format!("truncated data for {}", entry.name)));
            }
            let data = bytes[at..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            at = end;
            tensors.push(NamedTensor {
                name: entry.name,
                shape: entry.shape,
                data,
            });
        }
        if at != bytes.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Self {
            arch: header.arch,
            step: header.step,
            rng: header.rng,
            metric: header.metric,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| AvidError::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| AvidError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| AvidError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| AvidError::load(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::init_models;

    fn arch() -> ArchConfig {
        ArchConfig {
            input_height: 56,
            input_width: 56,
            inpainter_widths: vec![2, 3, 4],
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_restores_both_networks() {
        let a = arch();
        let (inp, det) = init_models(&a, 9).unwrap();
        let ckpt = Checkpoint::new(&a, 42, RngState { seed: 9, stream: 42 })
            .with_inpainter(&inp)
            .with_detector(&det)
            .with_metric("recon", 0.25);
        let bytes = ckpt.to_bytes().unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.inpainter().unwrap(), inp);
        assert_eq!(back.detector().unwrap(), det);
        assert_eq!(back.step, 42);
        // Serialization is byte-stable.
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn missing_network_is_reported() {
        let a = arch();
        let (_, det) = init_models(&a, 1).unwrap();
        let ckpt = Checkpoint::new(&a, 0, RngState::default()).with_detector(&det);
        assert!(ckpt.detector().is_ok());
        assert!(matches!(ckpt.inpainter(), Err(AvidError::Checkpoint(_))));
    }

    #[test]
    fn corrupt_archives_are_rejected() {
        let a = arch();
        let (inp, _) = init_models(&a, 1).unwrap();
        let bytes = Checkpoint::new(&a, 0, RngState::default()).with_inpainter(&inp).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version).is_err());
        assert!(Checkpoint::from_bytes(b"hello").is_err());
    }
}
