//! Integer-coded export of a compressed network.
//!
//! Every weight and bias is stored as `round(w / 2^(I-T))` for the
//! network's `ap_fixed<T,I>` format; pruned weights are code 0 with mask
//! bit 0. Batch-norm statistics and input standardization stay in floating
//! point. [`FirmwareDescriptor::to_network`] rebuilds a network whose
//! forward pass equals the quantized original.

use std::collections::BTreeMap;

use hwnas_core::arch::{Activation, ArchitectureSpec};
use hwnas_core::cost::{effective_bops, estimate_network, BoardCapacity, HlsConfig, IoType, ResourceEstimate, Strategy};
use hwnas_core::data::Standardizer;
use hwnas_core::fixed::FixedPointFormat;
use hwnas_core::nn::{
    BnFile, LayerFile, LossKind, NetError, Network, NetworkFile, NETWORK_FORMAT, NETWORK_FORMAT_VERSION,
};
use serde::{Deserialize, Serialize};

pub const FIRMWARE_FORMAT: &str = "hwnas-firmware";
pub const FIRMWARE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmwareLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
    /// Row-major `fan_in × fan_out` integer codes.
    pub weights: Vec<i64>,
    pub bias: Vec<i64>,
    /// Row-major, 1 = kept.
    pub mask: Vec<u8>,
    pub bn: Option<BnFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HlsEcho {
    pub board: String,
    pub strategy: Strategy,
    pub io_type: IoType,
    pub reuse_factor: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub study: Option<String>,
    pub trial_id: Option<u64>,
    pub precision: String,
    pub metrics: BTreeMap<String, f64>,
    pub effective_bops: f64,
    pub resource_estimate: ResourceEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmwareDescriptor {
    pub format: String,
    pub version: u32,
    pub architecture: Option<ArchitectureSpec>,
    pub precision: FixedPointFormat,
    pub loss: LossKind,
    pub input_norm: Option<Standardizer>,
    pub layers: Vec<FirmwareLayer>,
    pub hls: HlsEcho,
    pub provenance: Provenance,
}

/// Identifying information carried into the descriptor.
#[derive(Debug, Clone, Default)]
pub struct ExportContext {
    pub study: Option<String>,
    pub trial_id: Option<u64>,
    pub architecture: Option<ArchitectureSpec>,
    pub metrics: BTreeMap<String, f64>,
}

impl FirmwareDescriptor {
    /// Encode `net` at `fmt` (its attached format, if any, is replaced).
    pub fn from_network(
        net: &Network,
        fmt: FixedPointFormat,
        hls: &HlsConfig,
        board: &BoardCapacity,
        ctx: ExportContext,
    ) -> Self {
        let mut q = net.clone();
        q.quant = Some(fmt);
        let file = NetworkFile::from(&q);
        let layers = file
            .layers
            .iter()
            .enumerate()
            .map(|(l, lf)| FirmwareLayer {
                fan_in: lf.fan_in,
                fan_out: lf.fan_out,
                activation: lf.activation,
                weights: q.forward_weights(l).iter().map(|&w| fmt.encode(w)).collect(),
                bias: q.forward_bias(l).iter().map(|&b| fmt.encode(b)).collect(),
                mask: lf.mask.clone(),
                bn: lf.bn.clone(),
            })
            .collect();
        let mut hls = hls.clone();
        hls.default_precision = fmt;
        FirmwareDescriptor {
            format: FIRMWARE_FORMAT.into(),
            version: FIRMWARE_VERSION,
            architecture: ctx.architecture,
            precision: fmt,
            loss: file.loss,
            input_norm: file.input_norm,
            layers,
            hls: HlsEcho {
                board: board.name.clone(),
                strategy: hls.strategy,
                io_type: hls.io_type,
                reuse_factor: hls.reuse_factor,
            },
            provenance: Provenance {
                study: ctx.study,
                trial_id: ctx.trial_id,
                precision: fmt.to_string(),
                metrics: ctx.metrics,
                effective_bops: effective_bops(&q, fmt),
                resource_estimate: estimate_network(&q, &hls, board),
            },
        }
    }

    /// Decode back into a quantized network.
    pub fn to_network(&self) -> Result<Network, NetError> {
        let fmt = self.precision;
        let layers = self
            .layers
            .iter()
            .map(|l| LayerFile {
                fan_in: l.fan_in,
                fan_out: l.fan_out,
                activation: l.activation,
                weights: l.weights.iter().map(|&c| fmt.decode(c)).collect(),
                bias: l.bias.iter().map(|&c| fmt.decode(c)).collect(),
                mask: l.mask.clone(),
                bn: l.bn.clone(),
            })
            .collect();
        Network::try_from(NetworkFile {
            format: NETWORK_FORMAT.into(),
            version: NETWORK_FORMAT_VERSION,
            loss: self.loss,
            dropout_rate: 0.0,
            l1_lambda: 0.0,
            quant: Some(fmt),
            input_norm: self.input_norm.clone(),
            layers,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let d: FirmwareDescriptor = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if d.format != FIRMWARE_FORMAT || d.version != FIRMWARE_VERSION {
            return Err(format!("unsupported descriptor {} v{}", d.format, d.version));
        }
        Ok(d)
    }
}
