//! JSON container for networks.
//!
//! Field order within a file:
//!
//! ```text
//! format, version, loss, dropout_rate, l1_lambda, quant, input_norm,
//! layers[]: fan_in, fan_out, activation, weights, bias, mask, bn
//! bn: gamma, beta, running_mean, running_var
//! ```
//!
//! `weights` and `mask` are row-major `[fan_in × fan_out]`; `mask` holds
//! 0/1. Reals are written in shortest round-trip form, so a save/load cycle
//! is bit-exact.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{BatchNorm, DenseLayer, LossKind, NetError, Network};
use crate::arch::Activation;
use crate::data::Standardizer;
use crate::fixed::FixedPointFormat;

pub const NETWORK_FORMAT: &str = "hwnas-network";
pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub format: String,
    pub version: u32,
    pub loss: LossKind,
    pub dropout_rate: f64,
    pub l1_lambda: f64,
    pub quant: Option<FixedPointFormat>,
    pub input_norm: Option<Standardizer>,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub mask: Vec<u8>,
    pub bn: Option<BnFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BnFile {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl From<&Network> for NetworkFile {
    fn from(net: &Network) -> Self {
        NetworkFile {
            format: NETWORK_FORMAT.into(),
            version: NETWORK_FORMAT_VERSION,
            loss: net.loss,
            dropout_rate: net.dropout_rate,
            l1_lambda: net.l1_lambda,
            quant: net.quant,
            input_norm: net.input_norm.clone(),
            layers: net
                .layers
                .iter()
                .map(|l| LayerFile {
                    fan_in: l.fan_in(),
                    fan_out: l.fan_out(),
                    activation: l.activation,
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                    mask: l.mask.iter().map(|&m| u8::from(m)).collect(),
                    bn: l.bn.as_ref().map(|b| BnFile {
                        gamma: b.gamma.to_vec(),
                        beta: b.beta.to_vec(),
                        running_mean: b.running_mean.to_vec(),
                        running_var: b.running_var.to_vec(),
                    }),
                })
                .collect(),
        }
    }
}

fn bad(msg: impl Into<String>) -> NetError {
    NetError::File(msg.into())
}

impl TryFrom<NetworkFile> for Network {
    type Error = NetError;

    fn try_from(f: NetworkFile) -> Result<Self, NetError> {
        if f.format != NETWORK_FORMAT || f.version != NETWORK_FORMAT_VERSION {
            return Err(bad(format!("unsupported format {} v{}", f.format, f.version)));
        }
        if f.layers.is_empty() {
            return Err(bad("no layers"));
        }
        let mut layers = Vec::with_capacity(f.layers.len());
        for (i, l) in f.layers.into_iter().enumerate() {
            let shape = (l.fan_in, l.fan_out);
            let weights = Array2::from_shape_vec(shape, l.weights).map_err(|e| bad(format!("layer {i} weights: {e}")))?;
            if l.mask.iter().any(|&m| m > 1) {
                return Err(bad(format!("layer {i}: mask entries must be 0 or 1")));
            }
            let mask = Array2::from_shape_vec(shape, l.mask.into_iter().map(|m| m == 1).collect())
                .map_err(|e| bad(format!("layer {i} mask: {e}")))?;
            if l.bias.len() != l.fan_out {
                return Err(bad(format!("layer {i}: bias length {} != {}", l.bias.len(), l.fan_out)));
            }
            let bn = match l.bn {
                Some(b) => {
                    if [&b.gamma, &b.beta, &b.running_mean, &b.running_var].iter().any(|v| v.len() != l.fan_out) {
                        return Err(bad(format!("layer {i}: batch-norm length mismatch")));
                    }
                    Some(BatchNorm {
                        gamma: Array1::from(b.gamma),
                        beta: Array1::from(b.beta),
                        running_mean: Array1::from(b.running_mean),
                        running_var: Array1::from(b.running_var),
                    })
                }
                None => None,
            };
            if let Some(prev) = layers.last() {
                let prev: &DenseLayer = prev;
                if prev.fan_out() != l.fan_in {
                    return Err(bad(format!("layer {i}: fan_in {} != previous fan_out {}", l.fan_in, prev.fan_out())));
                }
            }
            layers.push(DenseLayer { weights, bias: Array1::from(l.bias), mask, bn, activation: l.activation });
        }
        Ok(Network {
            layers,
            dropout_rate: f.dropout_rate,
            l1_lambda: f.l1_lambda,
            loss: f.loss,
            quant: f.quant,
            input_norm: f.input_norm,
        })
    }
}

impl Network {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&NetworkFile::from(self)).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        fs::write(path, self.to_json()).map_err(|e| bad(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        Self::from_json(&text)
    }
}
