//! Decoding parameter assignments into MLP architecture specifications.
//!
//! Recognized parameter names:
//!
//! | name                                   | meaning                                   |
//! |----------------------------------------|-------------------------------------------|
//! | `depth` / `num_layers`                 | number of hidden layers                   |
//! | `mlp_head_layers`                      | hidden layers + output layer              |
//! | `width_<i>` (1-based)                  | width of hidden layer `i`                 |
//! | `hidden_units`                         | width of every layer without `width_<i>`  |
//! | `activation` / `hidden_activation`     | relu, tanh, sigmoid, leaky_relu, none     |
//! | `batch_norm` (bool) / `normalization`  | `BatchNorm` or `None`                     |
//! | `dropout` / `dropout_rate`             | dropout fraction                          |
//! | `l1` / `l1_lambda`                     | L1 penalty weight                         |
//! | `learning_rate`                        | optimizer step size                       |
//! | `window_size`, `window_start`          | readout window over a time series         |
//! | `output_dim`                           | number of output units                    |
//! | `output_activation`                    | `None` (logits) or `softmax`              |
//! | `block_type`, `num_blocks`             | only `None` / `1` are supported           |

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::WindowSpec;
use crate::space::{ParamAssignment, ParamValue, SearchSpace, SpaceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    LeakyRelu,
    None,
}

impl Activation {
    pub const ALL: [Activation; 5] =
        [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::LeakyRelu, Activation::None];

    /// Case-insensitive parse accepting the usual spellings.
    pub fn parse(tag: &str) -> Option<Self> {
        let t: String = tag.chars().filter(|c| *c != '_' && *c != '-').collect::<String>().to_lowercase();
        match t.as_str() {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            "leakyrelu" => Some(Activation::LeakyRelu),
            "none" | "linear" | "identity" => Some(Activation::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    /// Raw logits; binary cross-entropy when the output is one unit.
    Logits,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub depth: usize,
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub batch_norm: bool,
    pub dropout_rate: f64,
    pub l1_lambda: f64,
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowSpec>,
    /// `None` means "derived from the dataset".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dim: Option<usize>,
    pub output_activation: OutputActivation,
}

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("missing parameter `{0}`")]
    Missing(String),
    #[error("parameter `{name}`: invalid value {value}")]
    Invalid { name: String, value: String },
    #[error("unrecognized architecture parameter `{0}`")]
    Unknown(String),
    #[error("invalid architecture: {0}")]
    Spec(String),
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.layer_widths.len() != self.depth {
            return Err(DecodeError::Spec(format!(
                "{} widths for depth {}",
                self.layer_widths.len(),
                self.depth
            )));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(DecodeError::Spec("layer widths must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(DecodeError::Spec(format!("dropout {} outside [0,1)", self.dropout_rate)));
        }
        if !(self.l1_lambda >= 0.0 && self.l1_lambda.is_finite()) {
            return Err(DecodeError::Spec(format!("l1 {} must be >= 0", self.l1_lambda)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DecodeError::Spec(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.output_dim == Some(0) {
            return Err(DecodeError::Spec("output_dim must be >= 1".into()));
        }
        Ok(())
    }

    /// Output width given the dataset's class count.
    pub fn resolve_output_dim(&self, class_count: usize) -> usize {
        self.output_dim.unwrap_or(match (class_count, self.output_activation) {
            (2, OutputActivation::Logits) => 1,
            (c, _) => c,
        })
    }
}

const KNOWN: &[&str] = &[
    "depth",
    "num_layers",
    "mlp_head_layers",
    "hidden_units",
    "activation",
    "hidden_activation",
    "batch_norm",
    "normalization",
    "dropout",
    "dropout_rate",
    "l1",
    "l1_lambda",
    "learning_rate",
    "window_size",
    "window_start",
    "output_dim",
    "output_activation",
    "block_type",
    "num_blocks",
];

/// Whether the decoder understands a parameter name.
pub fn is_known_param(name: &str) -> bool {
    KNOWN.contains(&name) || width_slot(name).is_some()
}

fn width_slot(name: &str) -> Option<usize> {
    name.strip_prefix("width_").and_then(|s| s.parse::<usize>().ok()).filter(|&i| i >= 1)
}

fn invalid(name: &str, v: &ParamValue) -> DecodeError {
    DecodeError::Invalid { name: name.to_string(), value: v.to_string() }
}

struct Lookup<'a>(&'a ParamAssignment);

impl<'a> Lookup<'a> {
    fn first<'n>(&self, names: &[&'n str]) -> Option<(&'n str, &'a ParamValue)> {
        names.iter().find_map(|n| self.0.get(*n).map(|v| (*n, v)))
    }

    fn count(&self, names: &[&str]) -> Result<Option<usize>, DecodeError> {
        self.first(names)
            .map(|(n, v)| v.as_usize().ok_or_else(|| invalid(n, v)))
            .transpose()
    }

    fn real(&self, names: &[&str]) -> Result<Option<f64>, DecodeError> {
        self.first(names)
            .map(|(n, v)| v.as_f64().ok_or_else(|| invalid(n, v)))
            .transpose()
    }
}

/// Turn an assignment into an [`ArchitectureSpec`].
///
/// The assignment must cover every active parameter of `space`.
pub fn decode_architecture(
    assignment: &ParamAssignment,
    space: &SearchSpace,
) -> Result<ArchitectureSpec, DecodeError> {
    space.check_assignment(assignment)?;
    for name in assignment.keys() {
        if !KNOWN.contains(&name.as_str()) && width_slot(name).is_none() {
            return Err(DecodeError::Unknown(name.clone()));
        }
    }
    let get = Lookup(assignment);

    if let Some((n, v)) = get.first(&["block_type"]) {
        if Activation::parse(v.as_tag().unwrap_or("")) != Some(Activation::None) {
            return Err(invalid(n, v));
        }
    }
    if let Some(blocks) = get.count(&["num_blocks"])? {
        if blocks != 1 {
            return Err(DecodeError::Invalid { name: "num_blocks".into(), value: blocks.to_string() });
        }
    }

    let depth = match get.count(&["depth", "num_layers"])? {
        Some(d) => d,
        None => match get.count(&["mlp_head_layers"])? {
            Some(h) if h >= 1 => h - 1,
            Some(h) => return Err(DecodeError::Invalid { name: "mlp_head_layers".into(), value: h.to_string() }),
            None => return Err(DecodeError::Missing("depth".into())),
        },
    };
    let shared = get.count(&["hidden_units"])?;
    let layer_widths = (1..=depth)
        .map(|i| {
            let slot = format!("width_{i}");
            match assignment.get(&slot) {
                Some(v) => v.as_usize().ok_or_else(|| invalid(&slot, v)),
                None => shared.ok_or(DecodeError::Missing(slot)),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let activation = match get.first(&["activation", "hidden_activation"]) {
        Some((n, v)) => v.as_tag().and_then(Activation::parse).ok_or_else(|| invalid(n, v))?,
        None => Activation::Relu,
    };
    let batch_norm = match get.first(&["batch_norm", "normalization"]) {
        Some((n, ParamValue::Tag(t))) => match t.to_lowercase().as_str() {
            "batchnorm" | "batch_norm" | "true" => true,
            "none" | "false" => false,
            _ => return Err(invalid(n, &ParamValue::Tag(t.clone()))),
        },
        Some((n, v)) => v.as_bool().ok_or_else(|| invalid(n, v))?,
        None => false,
    };
    let output_activation = match get.first(&["output_activation"]) {
        Some((n, v)) => match v.as_tag().map(str::to_lowercase).as_deref() {
            Some("none" | "logits" | "linear") => OutputActivation::Logits,
            Some("softmax") => OutputActivation::Softmax,
            _ => return Err(invalid(n, v)),
        },
        None => OutputActivation::Softmax,
    };
    let window = match get.count(&["window_size"])? {
        Some(size) => Some(WindowSpec { start: get.count(&["window_start"])?.unwrap_or(0), size }),
        None if assignment.contains_key("window_start") => {
            return Err(DecodeError::Missing("window_size".into()))
        }
        None => None,
    };

    let spec = ArchitectureSpec {
        depth,
        layer_widths,
        activation,
        batch_norm,
        dropout_rate: get.real(&["dropout", "dropout_rate"])?.unwrap_or(0.0),
        l1_lambda: get.real(&["l1", "l1_lambda"])?.unwrap_or(0.0),
        learning_rate: get.real(&["learning_rate"])?.unwrap_or(DEFAULT_LEARNING_RATE),
        window,
        output_dim: get.count(&["output_dim"])?,
        output_activation,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParamDomain;

    fn ints(v: &[i64]) -> Vec<ParamValue> {
        v.iter().copied().map(ParamValue::Int).collect()
    }

    fn tags(v: &[&str]) -> Vec<ParamValue> {
        v.iter().map(|&s| ParamValue::from(s)).collect()
    }

    /// Jet-classification style space with depth-gated widths.
    fn jet_space() -> SearchSpace {
        let widths: [&[i64]; 8] =
            [&[64, 120, 128], &[32, 60, 64], &[16, 32], &[32, 64], &[32, 64], &[32, 64], &[16, 32], &[32, 44, 64]];
        let mut params = vec![ParamDomain::new("depth", ints(&[4, 5, 6, 7, 8]))];
        for (i, w) in widths.iter().enumerate() {
            params.push(ParamDomain::new(format!("width_{}", i + 1), ints(w)));
        }
        params.push(ParamDomain::new("activation", tags(&["ReLU", "Tanh", "Sigmoid"])));
        params.push(ParamDomain::new("batch_norm", vec![true.into(), false.into()]));
        params.push(ParamDomain::new("learning_rate", vec![0.0010.into(), 0.0015.into(), 0.0020.into()]));
        params.push(ParamDomain::new("l1", vec![0.0.into(), 1e-6.into(), 1e-5.into(), 1e-4.into()]));
        params.push(ParamDomain::new("dropout", vec![0.0.into(), 0.05.into(), 0.1.into()]));
        let mut space = SearchSpace::new(params);
        for i in 5..=8 {
            space = space.with_rule(&format!("width_{i}"), "depth", ints(&(i..=8).collect::<Vec<_>>()));
        }
        space
    }

    fn assign(pairs: &[(&str, ParamValue)]) -> ParamAssignment {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn decodes_jet_assignment() {
        let space = jet_space();
        space.validate().unwrap();
        let a = assign(&[
            ("depth", 4.into()),
            ("width_1", 64.into()),
            ("width_2", 32.into()),
            ("width_3", 16.into()),
            ("width_4", 32.into()),
            ("activation", "ReLU".into()),
            ("batch_norm", true.into()),
            ("learning_rate", 0.0015.into()),
            ("l1", 1e-5.into()),
            ("dropout", 0.05.into()),
        ]);
        let spec = decode_architecture(&a, &space).unwrap();
        assert_eq!(spec.depth, 4);
        assert_eq!(spec.layer_widths, vec![64, 32, 16, 32]);
        assert_eq!(spec.activation, Activation::Relu);
        assert!(spec.batch_norm);
        assert_eq!(spec.learning_rate, 0.0015);
        assert_eq!(spec.l1_lambda, 1e-5);
        assert_eq!(spec.dropout_rate, 0.05);
        assert_eq!(spec.window, None);
        // pure
        assert_eq!(decode_architecture(&a, &space).unwrap(), spec);
    }

    #[test]
    fn missing_active_parameter_fails() {
        let space = jet_space();
        let a = assign(&[("depth", 4.into()), ("width_1", 64.into())]);
        assert!(matches!(decode_architecture(&a, &space), Err(DecodeError::Space(SpaceError::Missing(_)))));
    }

    /// Readout-style space: shared hidden width, optional activation, window genes.
    fn qubit_space() -> SearchSpace {
        SearchSpace::new(vec![
            ParamDomain::new("hidden_units", ints(&[2, 4])),
            ParamDomain::new("hidden_activation", tags(&["ReLU", "LeakyReLU", "None"])),
            ParamDomain::new("normalization", tags(&["BatchNorm", "None"])),
            ParamDomain::new("block_type", tags(&["None"])),
            ParamDomain::new("num_blocks", ints(&[1])),
            ParamDomain::new("mlp_head_layers", ints(&[2])),
            ParamDomain::new("output_dim", ints(&[1])),
            ParamDomain::new("output_activation", tags(&["None"])),
            ParamDomain::new("window_size", (1..=16).map(|k| ParamValue::Int(25 * k)).collect()),
            ParamDomain::new("window_start", (0..30).map(|k| ParamValue::Int(25 * k)).collect()),
        ])
    }

    #[test]
    fn decodes_readout_assignment() {
        let space = qubit_space();
        space.validate().unwrap();
        let a = assign(&[
            ("hidden_units", 4.into()),
            ("hidden_activation", "None".into()),
            ("normalization", "BatchNorm".into()),
            ("block_type", "None".into()),
            ("num_blocks", 1.into()),
            ("mlp_head_layers", 2.into()),
            ("output_dim", 1.into()),
            ("output_activation", "None".into()),
            ("window_size", 400.into()),
            ("window_start", 100.into()),
        ]);
        let spec = decode_architecture(&a, &space).unwrap();
        assert_eq!(spec.activation, Activation::None);
        assert_eq!(spec.depth, 1);
        assert_eq!(spec.layer_widths, vec![4]);
        assert!(spec.batch_norm);
        assert_eq!(spec.output_dim, Some(1));
        assert_eq!(spec.output_activation, OutputActivation::Logits);
        let w = spec.window.unwrap();
        assert_eq!((w.start, w.start + w.size), (100, 500));
    }

    #[test]
    fn activation_spellings() {
        assert_eq!(Activation::parse("LeakyReLU"), Some(Activation::LeakyRelu));
        assert_eq!(Activation::parse("leaky_relu"), Some(Activation::LeakyRelu));
        assert_eq!(Activation::parse("None"), Some(Activation::None));
        assert_eq!(Activation::parse("Sigmoid"), Some(Activation::Sigmoid));
        assert_eq!(Activation::parse("gelu"), None);
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let space = SearchSpace::new(vec![
            ParamDomain::new("depth", ints(&[1])),
            ParamDomain::new("width_1", ints(&[3])),
            ParamDomain::new("colour", tags(&["red"])),
        ]);
        let a = assign(&[("depth", 1.into()), ("width_1", 3.into()), ("colour", "red".into())]);
        assert_eq!(decode_architecture(&a, &space), Err(DecodeError::Unknown("colour".into())));
    }

    #[test]
    fn output_dim_resolution() {
        let space = SearchSpace::new(vec![ParamDomain::new("depth", ints(&[1])), ParamDomain::new("hidden_units", ints(&[3]))]);
        let spec = decode_architecture(&assign(&[("depth", 1.into()), ("hidden_units", 3.into())]), &space).unwrap();
        assert_eq!(spec.resolve_output_dim(5), 5);
        assert_eq!(spec.resolve_output_dim(2), 2);
        let logits = ArchitectureSpec { output_activation: OutputActivation::Logits, ..spec };
        assert_eq!(logits.resolve_output_dim(2), 1);
    }
}
