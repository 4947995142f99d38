//! Policy weight bundle and its binary file format.
//!
//! Layout: the 8-byte magic `MAGATW01`, a little-endian `u32` byte length,
//! that many bytes of UTF-8 JSON metadata (architecture fields plus an
//! ordered tensor manifest), then every tensor's `f32` values in
//! little-endian order, concatenated in manifest order.
//!
//! Tensor names follow the convention the model expects:
//!
//! | name | shape |
//! |---|---|
//! | `cnn.{k}.weight`, `cnn.{k}.bias` | `[out, in, 3, 3]`, `[out]` |
//! | `edge_mlp.{0,1}.weight`, `.bias` | `[hidden, 3]`, `[edge_dim, hidden]` |
//! | `gnn.{l}.w_root`, `w_node`, `theta_node` | `[embed, embed]` |
//! | `gnn.{l}.w_edge`, `theta_edge` | `[embed, edge_dim]` |
//! | `decoder.{0,1}.weight`, `.bias` | `[hidden, embed]`, `[5, hidden]` |

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::Proximity;
use super::observation::CHANNELS;

pub const MAGIC: &[u8; 8] = b"MAGATW01";
pub const ACTIONS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("bad magic: expected MAGATW01")]
    BadMagic,
    #[error("file ends inside the metadata block")]
    TruncatedHeader,
    #[error("metadata is not valid: {0}")]
    Metadata(String),
    #[error("file ends inside tensor {0:?}")]
    Truncated(String),
    #[error("shape inconsistency: {0}")]
    Shape(String),
    #[error("tensor {0:?} holds a non-finite value")]
    NonFinite(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

fn default_slope() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub r_obs: usize,
    pub r_comm: usize,
    pub embed_dim: usize,
    pub edge_dim: usize,
    pub edge_hidden: usize,
    pub layers: usize,
    /// Channel counts through the encoder, starting with the 4 input planes.
    pub cnn_channels: Vec<usize>,
    pub decoder_hidden: usize,
    #[serde(default)]
    pub proximity: Proximity,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
    pub tensors: Vec<TensorSpec>,
}

impl PolicyMeta {
    /// The default architecture: 4→32→64→128 encoder, three attention
    /// layers, 32-wide edge MLP, 128→64→5 decoder.
    pub fn standard(r_obs: usize, r_comm: usize) -> Self {
        Self::with_sizes(r_obs, r_comm, &[CHANNELS, 32, 64, 128], 32, 32, 3, 64)
    }

    pub fn with_sizes(
        r_obs: usize,
        r_comm: usize,
        cnn_channels: &[usize],
        edge_dim: usize,
        edge_hidden: usize,
        layers: usize,
        decoder_hidden: usize,
    ) -> Self {
        let embed = *cnn_channels.last().expect("at least the input channel count");
        let mut meta = PolicyMeta {
            r_obs,
            r_comm,
            embed_dim: embed,
            edge_dim,
            edge_hidden,
            layers,
            cnn_channels: cnn_channels.to_vec(),
            decoder_hidden,
            proximity: Proximity::Chebyshev,
            leaky_slope: default_slope(),
            tensors: Vec::new(),
        };
        meta.tensors = meta.expected_tensors();
        meta
    }

    /// Manifest the architecture fields imply, in canonical order.
    pub fn expected_tensors(&self) -> Vec<TensorSpec> {
        let t = |name: String, shape: Vec<usize>| TensorSpec { name, shape };
        let mut out = Vec::new();
        for (k, pair) in self.cnn_channels.windows(2).enumerate() {
            out.push(t(format!("cnn.{k}.weight"), vec![pair[1], pair[0], 3, 3]));
            out.push(t(format!("cnn.{k}.bias"), vec![pair[1]]));
        }
        out.push(t("edge_mlp.0.weight".into(), vec![self.edge_hidden, 3]));
        out.push(t("edge_mlp.0.bias".into(), vec![self.edge_hidden]));
        out.push(t("edge_mlp.1.weight".into(), vec![self.edge_dim, self.edge_hidden]));
        out.push(t("edge_mlp.1.bias".into(), vec![self.edge_dim]));
        let d = self.embed_dim;
        for l in 0..self.layers {
            out.push(t(format!("gnn.{l}.w_root"), vec![d, d]));
            out.push(t(format!("gnn.{l}.w_node"), vec![d, d]));
            out.push(t(format!("gnn.{l}.w_edge"), vec![d, self.edge_dim]));
            out.push(t(format!("gnn.{l}.theta_node"), vec![d, d]));
            out.push(t(format!("gnn.{l}.theta_edge"), vec![d, self.edge_dim]));
        }
        out.push(t("decoder.0.weight".into(), vec![self.decoder_hidden, d]));
        out.push(t("decoder.0.bias".into(), vec![self.decoder_hidden]));
        out.push(t("decoder.1.weight".into(), vec![ACTIONS, self.decoder_hidden]));
        out.push(t("decoder.1.bias".into(), vec![ACTIONS]));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(TensorSpec::numel).sum()
    }

    fn validate(&self) -> Result<(), WeightsError> {
        if self.cnn_channels.first() != Some(&CHANNELS) {
            return Err(WeightsError::Shape(format!(
                "encoder must start at {CHANNELS} channels, got {:?}",
                self.cnn_channels
            )));
        }
        if self.cnn_channels.last() != Some(&self.embed_dim) {
            return Err(WeightsError::Shape("encoder output must equal embed_dim".into()));
        }
        if self.r_obs == 0 || 2 * self.r_obs + 1 < 2 * (self.cnn_channels.len() - 1) + 1 {
            return Err(WeightsError::Shape(format!(
                "field of view {} too small for {} valid 3x3 convolutions",
                2 * self.r_obs + 1,
                self.cnn_channels.len() - 1
            )));
        }
        if !(self.leaky_slope.is_finite()) {
            return Err(WeightsError::Metadata("leaky_slope must be finite".into()));
        }
        let expected = self.expected_tensors();
        let by_name: HashMap<&str, &TensorSpec> = self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        if by_name.len() != self.tensors.len() {
            return Err(WeightsError::Shape("duplicate tensor names in manifest".into()));
        }
        for spec in &expected {
            match by_name.get(spec.name.as_str()) {
                None => {
                    return Err(WeightsError::Shape(format!(
                        "metadata implies tensor {:?} but the manifest lacks it",
                        spec.name
                    )))
                }
                Some(found) if found.shape != spec.shape => {
                    return Err(WeightsError::Shape(format!(
                        "tensor {:?} has shape {:?}, architecture needs {:?}",
                        spec.name, found.shape, spec.shape
                    )))
                }
                _ => {}
            }
        }
        if expected.len() != self.tensors.len() {
            return Err(WeightsError::Shape(format!(
                "manifest lists {} tensors, architecture uses {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub spec: TensorSpec,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyWeights {
    pub meta: PolicyMeta,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
    /// Metadata bytes as read, so re-serialization is bitwise stable.
    raw_meta: String,
}

impl PolicyWeights {
    pub fn from_tensors(meta: PolicyMeta, tensors: Vec<Tensor>) -> Result<Self, WeightsError> {
        meta.validate()?;
        for (spec, t) in meta.tensors.iter().zip(&tensors) {
            if spec != &t.spec || t.data.len() != spec.numel() {
                return Err(WeightsError::Shape(format!(
                    "tensor {:?} does not match its manifest entry",
                    spec.name
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(WeightsError::NonFinite(spec.name.clone()));
            }
        }
        if tensors.len() != meta.tensors.len() {
            return Err(WeightsError::Shape("tensor count differs from manifest".into()));
        }
        let raw_meta = serde_json::to_string(&meta).map_err(|e| WeightsError::Metadata(e.to_string()))?;
        Ok(Self::assemble(meta, tensors, raw_meta))
    }

    fn assemble(meta: PolicyMeta, tensors: Vec<Tensor>, raw_meta: String) -> Self {
        let index = tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (t.spec.name.clone(), i))
            .collect();
        PolicyWeights {
            meta,
            tensors,
            index,
            raw_meta,
        }
    }

    /// Uniform fan-in scaled initialization; deterministic in `seed`.
    pub fn random(meta: PolicyMeta, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = meta
            .tensors
            .iter()
            .map(|spec| {
                let fan_in: usize = if spec.shape.len() > 1 {
                    spec.shape[1..].iter().product()
                } else {
                    spec.shape[0]
                };
                let bound = (3.0 / fan_in as f32).sqrt();
                let data = (0..spec.numel()).map(|_| rng.gen_range(-bound..bound)).collect();
                Tensor {
                    spec: spec.clone(),
                    data,
                }
            })
            .collect();
        Self::from_tensors(meta, tensors).expect("standard manifest is consistent")
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// Mutable access for tools that edit weights in place; values must stay finite.
    pub fn tensor_data_mut(&mut self, name: &str) -> Option<&mut [f32]> {
        let i = *self.index.get(name)?;
        Some(&mut self.tensors[i].data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let body: usize = self.tensors.iter().map(|t| t.data.len() * 4).sum();
        let mut out = Vec::with_capacity(12 + self.raw_meta.len() + body);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.raw_meta.len() as u32).to_le_bytes());
        out.extend_from_slice(self.raw_meta.as_bytes());
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

pub fn load_weights(bytes: &[u8]) -> Result<PolicyWeights, WeightsError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let len_bytes: [u8; 4] = bytes
        .get(8..12)
        .ok_or(WeightsError::TruncatedHeader)?
        .try_into()
        .expect("4 bytes");
    let meta_len = u32::from_le_bytes(len_bytes) as usize;
    let meta_bytes = bytes.get(12..12 + meta_len).ok_or(WeightsError::TruncatedHeader)?;
    let raw_meta = std::str::from_utf8(meta_bytes)
        .map_err(|e| WeightsError::Metadata(e.to_string()))?
        .to_owned();
    let meta: PolicyMeta = serde_json::from_str(&raw_meta).map_err(|e| WeightsError::Metadata(e.to_string()))?;

    let mut offset = 12 + meta_len;
    let mut tensors = Vec::with_capacity(meta.tensors.len());
    for spec in &meta.tensors {
        let need = spec.numel() * 4;
        let chunk = bytes
            .get(offset..offset + need)
            .ok_or_else(|| WeightsError::Truncated(spec.name.clone()))?;
        let data: Vec<f32> = chunk
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(WeightsError::NonFinite(spec.name.clone()));
        }
        tensors.push(Tensor {
            spec: spec.clone(),
            data,
        });
        offset += need;
    }
    if offset != bytes.len() {
        return Err(WeightsError::Shape(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - offset
        )));
    }
    meta.validate()?;
    Ok(PolicyWeights::assemble(meta, tensors, raw_meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PolicyMeta {
        PolicyMeta::with_sizes(3, 2, &[4, 4, 6, 8], 4, 5, 3, 6)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let w = PolicyWeights::random(small(), 1);
        let bytes = w.to_bytes();
        let back = load_weights(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn foreign_metadata_formatting_survives_round_trip() {
        let w = PolicyWeights::random(small(), 2);
        let pretty = serde_json::to_string_pretty(&w.meta).unwrap();
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&(pretty.len() as u32).to_le_bytes());
        bytes.extend_from_slice(pretty.as_bytes());
        bytes.extend_from_slice(&w.to_bytes()[12 + serde_json::to_string(&w.meta).unwrap().len()..]);
        assert_eq!(load_weights(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = PolicyWeights::random(small(), 1).to_bytes();
        bytes[0] = b'X';
        assert_eq!(load_weights(&bytes).unwrap_err(), WeightsError::BadMagic);
    }

    #[test]
    fn truncation_names_first_incomplete_tensor() {
        let w = PolicyWeights::random(small(), 1);
        let bytes = w.to_bytes();
        let header = 12 + serde_json::to_string(&w.meta).unwrap().len();
        // cnn.0.weight has 4*4*9 = 144 values; cut inside cnn.0.bias
        let cut = header + 144 * 4 + 2;
        assert_eq!(
            load_weights(&bytes[..cut]).unwrap_err(),
            WeightsError::Truncated("cnn.0.bias".into())
        );
    }

    #[test]
    fn missing_layer_is_a_shape_error() {
        let mut meta = small();
        let two = PolicyMeta::with_sizes(3, 2, &[4, 4, 6, 8], 4, 5, 2, 6);
        meta.tensors = two.tensors.clone();
        let w2 = PolicyWeights::random(two, 4);
        let body = &w2.to_bytes()[12 + serde_json::to_string(&w2.meta).unwrap().len()..];
        let json = serde_json::to_string(&meta).unwrap();
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(json.as_bytes());
        bytes.extend_from_slice(body);
        assert!(matches!(load_weights(&bytes), Err(WeightsError::Shape(_))));
    }

    #[test]
    fn non_finite_value_rejected() {
        let w = PolicyWeights::random(small(), 1);
        let mut bytes = w.to_bytes();
        let header = 12 + serde_json::to_string(&w.meta).unwrap().len();
        bytes[header..header + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(
            load_weights(&bytes).unwrap_err(),
            WeightsError::NonFinite("cnn.0.weight".into())
        );
    }

    #[test]
    fn standard_model_fits_parameter_budget() {
        let meta = PolicyMeta::standard(5, 7);
        let count = meta.parameter_count();
        assert!(count < 760_000, "{count}");
        assert!(count > 200_000, "{count}");
    }
}
