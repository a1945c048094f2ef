//! Hardware cost models: bit operations, a closed-form FPGA resource and
//! latency oracle, board capacities, architecture features and a learned
//! surrogate of the oracle.
//!
//! Oracle constants are fixed and not calibrated against any synthesis tool.

use std::fmt;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{decode_architecture, Activation, ArchitectureSpec};
use crate::data::Standardizer;
use crate::fixed::FixedPointFormat;
use crate::nn::{fit, LossKind, Mode, Network, NetworkFile, Targets, TrainConfig};
use crate::space::SearchSpace;

/// LUTs per multiplier bit-product, as a ratio of 55/100.
pub const LUT_PER_MULT_BIT2: (u64, u64) = (55, 100);
/// Flip-flops per LUT, as a ratio of 4/10.
pub const FF_PER_LUT: (u64, u64) = (4, 10);
/// Multipliers with `b_w · b_a` at or above this go to DSP blocks.
pub const DSP_BIT_PRODUCT_THRESHOLD: u32 = 100;
pub const BRAM_BLOCK_BITS: u64 = 36_864;
/// Pipeline cycles added per dense layer on top of the adder tree.
pub const LAYER_PIPELINE_CYCLES: u32 = 4;
pub const ORACLE_VERSION: u32 = 1;

const BOARDS_YAML: &str = include_str!("../data/boards.yaml");

#[derive(Debug, Error)]
pub enum CostError {
    #[error("unknown board `{0}`")]
    UnknownBoard(String),
    #[error("board `{0}`: capacities must all be positive")]
    BadBoard(String),
    #[error("surrogate needs at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("surrogate file: {0}")]
    File(String),
    #[error(transparent)]
    Train(#[from] crate::nn::TrainError),
    #[error(transparent)]
    Net(#[from] crate::nn::NetError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoardCapacity {
    pub name: String,
    pub lut_total: u64,
    pub ff_total: u64,
    pub dsp_total: u64,
    pub bram_total: u64,
}

impl BoardCapacity {
    pub fn validate(&self) -> Result<(), CostError> {
        if [self.lut_total, self.ff_total, self.dsp_total, self.bram_total].contains(&0) {
            return Err(CostError::BadBoard(self.name.clone()));
        }
        Ok(())
    }

    pub fn capacity(&self, kind: ResourceKind) -> u64 {
        match kind {
            ResourceKind::Lut => self.lut_total,
            ResourceKind::Ff => self.ff_total,
            ResourceKind::Dsp => self.dsp_total,
            ResourceKind::Bram => self.bram_total,
        }
    }
}

/// Boards shipped in `data/boards.yaml`.
pub fn builtin_boards() -> Vec<BoardCapacity> {
    serde_yaml::from_str(BOARDS_YAML).expect("bundled board table parses")
}

/// Case-insensitive lookup in the bundled table.
pub fn board_by_name(name: &str) -> Result<BoardCapacity, CostError> {
    builtin_boards()
        .into_iter()
        .find(|b| b.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| CostError::UnknownBoard(name.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Lut,
    Ff,
    Dsp,
    Bram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Latency,
    Resource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IoType {
    Parallel,
    Stream,
}

/// A board given by name (bundled table) or by explicit capacities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoardRef {
    Named(String),
    Custom(BoardCapacity),
}

impl BoardRef {
    pub fn resolve(&self) -> Result<BoardCapacity, CostError> {
        let b = match self {
            BoardRef::Named(n) => board_by_name(n)?,
            BoardRef::Custom(b) => b.clone(),
        };
        b.validate()?;
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HlsConfig {
    pub board: BoardRef,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_io")]
    pub io_type: IoType,
    #[serde(default = "default_reuse")]
    pub reuse_factor: u32,
    #[serde(default = "default_precision")]
    pub default_precision: FixedPointFormat,
}

fn default_strategy() -> Strategy {
    Strategy::Latency
}
fn default_io() -> IoType {
    IoType::Parallel
}
fn default_reuse() -> u32 {
    1
}
pub fn default_precision() -> FixedPointFormat {
    FixedPointFormat::new(16, 6).expect("valid")
}

impl HlsConfig {
    pub fn new(board: &str) -> Self {
        Self {
            board: BoardRef::Named(board.to_string()),
            strategy: Strategy::Latency,
            io_type: IoType::Parallel,
            reuse_factor: 1,
            default_precision: default_precision(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub lut: f64,
    pub ff: f64,
    pub dsp: f64,
    /// 36 Kb blocks.
    pub bram: f64,
    pub latency_cycles: f64,
    pub initiation_interval: u32,
    pub lut_pct: f64,
    pub ff_pct: f64,
    pub dsp_pct: f64,
    pub bram_pct: f64,
}

impl ResourceEstimate {
    pub fn from_counts(lut: f64, ff: f64, dsp: f64, bram: f64, latency_cycles: f64, ii: u32, board: &BoardCapacity) -> Self {
        Self {
            lut,
            ff,
            dsp,
            bram,
            latency_cycles,
            initiation_interval: ii.max(1),
            lut_pct: utilization_pct(lut, ResourceKind::Lut, board),
            ff_pct: utilization_pct(ff, ResourceKind::Ff, board),
            dsp_pct: utilization_pct(dsp, ResourceKind::Dsp, board),
            bram_pct: utilization_pct(bram, ResourceKind::Bram, board),
        }
    }

    pub fn count(&self, kind: ResourceKind) -> f64 {
        match kind {
            ResourceKind::Lut => self.lut,
            ResourceKind::Ff => self.ff,
            ResourceKind::Dsp => self.dsp,
            ResourceKind::Bram => self.bram,
        }
    }
}

impl fmt::Display for ResourceEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "LUT   {:>10} ({}%)", self.lut, format_pct(self.lut_pct))?;
        writeln!(f, "FF    {:>10} ({}%)", self.ff, format_pct(self.ff_pct))?;
        writeln!(f, "DSP   {:>10} ({}%)", self.dsp, format_pct(self.dsp_pct))?;
        writeln!(f, "BRAM  {:>10} ({}%)", self.bram, format_pct(self.bram_pct))?;
        writeln!(f, "latency {} cycles, II {}", self.latency_cycles, self.initiation_interval)?;
        write!(f, "mean utilization {}%", format_pct(mean_utilization(self)))
    }
}

/// `100 · count / capacity`, unrounded.
pub fn utilization_pct(count: f64, kind: ResourceKind, board: &BoardCapacity) -> f64 {
    100.0 * count / board.capacity(kind) as f64
}

/// Round a percentage to two decimals.
pub fn round_pct(p: f64) -> f64 {
    (p * 100.0).round() / 100.0
}

pub fn format_pct(p: f64) -> String {
    format!("{:.2}", p)
}

/// Arithmetic mean of the four unrounded percentages.
pub fn mean_utilization(est: &ResourceEstimate) -> f64 {
    (est.lut_pct + est.ff_pct + est.bram_pct + est.dsp_pct) / 4.0
}

pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// `(fan_in, fan_out)` of every dense layer, output layer included.
pub fn layer_shapes(spec: &ArchitectureSpec, input_dim: usize, output_dim: usize) -> Vec<(usize, usize)> {
    let mut sizes = vec![input_dim];
    sizes.extend_from_slice(&spec.layer_widths);
    sizes.push(output_dim);
    sizes.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Bit operations of one dense layer with `nonzero` surviving weights.
pub fn layer_bops(n: usize, m: usize, nonzero: u64, b_w: u32, b_a: u32) -> u64 {
    let (n64, m64) = (n as u64, m as u64);
    nonzero * b_w as u64 * b_a as u64 + m64 * n64 * (b_a as u64 + b_w as u64 + ceil_log2(n) as u64)
}

/// `Σ m·n·(d·b_w·b_a + b_a + b_w + ⌈log2 n⌉)` over layers; `densities`
/// aligned with `shapes`.
pub fn bops(shapes: &[(usize, usize)], b_w: u32, b_a: u32, densities: &[f64]) -> f64 {
    assert_eq!(shapes.len(), densities.len(), "one density per layer");
    shapes
        .iter()
        .zip(densities)
        .map(|(&(n, m), &d)| {
            let mn = (m * n) as f64;
            mn * (d * b_w as f64 * b_a as f64) + mn * (b_a + b_w + ceil_log2(n)) as f64
        })
        .sum()
}

/// Dense BOPs of a decoded architecture at one precision.
pub fn spec_bops(spec: &ArchitectureSpec, input_dim: usize, output_dim: usize, bits: u32) -> f64 {
    let shapes = layer_shapes(spec, input_dim, output_dim);
    bops(&shapes, bits, bits, &vec![1.0; shapes.len()])
}

/// BOPs using each layer's current mask density. Weight and activation
/// widths come from the attached format, or `default` for float networks.
pub fn effective_bops(net: &Network, default: FixedPointFormat) -> f64 {
    let bits = net.quant.unwrap_or(default).total_bits();
    net.layers
        .iter()
        .map(|l| layer_bops(l.fan_in(), l.fan_out(), l.unmasked() as u64, bits, bits) as f64)
        .sum()
}

/// Closed-form resource and latency estimate.
///
/// With `M_l = round(d_l · n_l · m_l)` surviving multipliers per layer:
///
/// ```text
/// dsp  += ⌈M_l / R⌉                          if b_w·b_a ≥ 100
/// lut  += ⌈0.55 · M_l · b_w · b_a / R⌉       otherwise
/// lut  += ⌈Σ_l m_l (n_l − 1) max(b_w, b_a) / R⌉
/// ff    = ⌈0.4 · lut⌉
/// bram  = 0 for latency strategy at R = 1, else ⌈Σ_l M_l b_w / 36864⌉
/// latency = Σ_l (⌈log2 n_l⌉ + 4) + (R − 1) · layers
/// II    = max(1, R)
/// ```
pub fn analytic_estimate(
    shapes: &[(usize, usize)],
    densities: &[f64],
    fmt: FixedPointFormat,
    hls: &HlsConfig,
    board: &BoardCapacity,
) -> ResourceEstimate {
    assert_eq!(shapes.len(), densities.len(), "one density per layer");
    let (b_w, b_a) = (fmt.total_bits(), fmt.total_bits());
    let r = hls.reuse_factor.max(1) as u64;
    let (mut lut, mut dsp, mut adder_bits, mut weight_bits) = (0u64, 0u64, 0u64, 0u64);
    let mut latency = 0u64;
    for (&(n, m), &d) in shapes.iter().zip(densities) {
        let mults = (d * (n * m) as f64).round() as u64;
        if b_w * b_a >= DSP_BIT_PRODUCT_THRESHOLD {
            dsp += ceil_div(mults, r);
        } else {
            lut += ceil_div(LUT_PER_MULT_BIT2.0 * mults * (b_w * b_a) as u64, LUT_PER_MULT_BIT2.1 * r);
        }
        adder_bits += (m * n.saturating_sub(1)) as u64 * b_w.max(b_a) as u64;
        weight_bits += mults * b_w as u64;
        latency += (ceil_log2(n) + LAYER_PIPELINE_CYCLES) as u64;
    }
    lut += ceil_div(adder_bits, r);
    let ff = ceil_div(FF_PER_LUT.0 * lut, FF_PER_LUT.1);
    let bram = if hls.strategy == Strategy::Latency && r == 1 {
        0
    } else {
        ceil_div(weight_bits, BRAM_BLOCK_BITS)
    };
    latency += (r - 1) * shapes.len() as u64;
    ResourceEstimate::from_counts(
        lut as f64,
        ff as f64,
        dsp as f64,
        bram as f64,
        latency as f64,
        hls.reuse_factor.max(1),
        board,
    )
}

/// Oracle estimate of a dense (unpruned) architecture at the configured
/// default precision.
pub fn estimate_spec(
    spec: &ArchitectureSpec,
    input_dim: usize,
    output_dim: usize,
    hls: &HlsConfig,
    board: &BoardCapacity,
) -> ResourceEstimate {
    let shapes = layer_shapes(spec, input_dim, output_dim);
    analytic_estimate(&shapes, &vec![1.0; shapes.len()], hls.default_precision, hls, board)
}

/// Oracle estimate of a network with its current masks and format.
pub fn estimate_network(net: &Network, hls: &HlsConfig, board: &BoardCapacity) -> ResourceEstimate {
    let densities: Vec<f64> = net.layers.iter().map(|l| l.density()).collect();
    analytic_estimate(&net.shapes(), &densities, net.quant.unwrap_or(hls.default_precision), hls, board)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostFeatures {
    pub depth: f64,
    pub total_params: f64,
    pub max_width: f64,
    pub mean_width: f64,
    pub log2_total_mults: f64,
    pub weight_bits: f64,
    pub act_bits: f64,
    pub reuse_factor: f64,
    /// 1 for the resource strategy, 0 for latency.
    pub strategy: f64,
    pub input_dim: f64,
    pub output_dim: f64,
}

pub const FEATURE_COUNT: usize = 11;

impl CostFeatures {
    /// Regressor input: counts and widths on a log scale.
    pub fn to_vector(&self) -> [f64; FEATURE_COUNT] {
        [
            self.depth,
            self.total_params.ln_1p(),
            self.max_width.ln_1p(),
            self.mean_width.ln_1p(),
            self.log2_total_mults,
            self.weight_bits.log2(),
            self.act_bits.log2(),
            self.reuse_factor.log2(),
            self.strategy,
            self.input_dim.ln_1p(),
            self.output_dim.ln_1p(),
        ]
    }
}

/// Features of a dense architecture under an HLS configuration.
pub fn featurize(spec: &ArchitectureSpec, input_dim: usize, output_dim: usize, hls: &HlsConfig) -> CostFeatures {
    let shapes = layer_shapes(spec, input_dim, output_dim);
    let mults: usize = shapes.iter().map(|&(n, m)| n * m).sum();
    let params: usize = shapes.iter().map(|&(n, m)| n * m + m).sum();
    let widths = &spec.layer_widths;
    let bits = hls.default_precision.total_bits() as f64;
    CostFeatures {
        depth: spec.depth as f64,
        total_params: params as f64,
        max_width: widths.iter().copied().max().unwrap_or(0) as f64,
        mean_width: if widths.is_empty() { 0.0 } else { widths.iter().sum::<usize>() as f64 / widths.len() as f64 },
        log2_total_mults: (mults as f64).log2(),
        weight_bits: bits,
        act_bits: bits,
        reuse_factor: hls.reuse_factor.max(1) as f64,
        strategy: if hls.strategy == Strategy::Resource { 1.0 } else { 0.0 },
        input_dim: input_dim as f64,
        output_dim: output_dim as f64,
    }
}

/// Targets predicted by the surrogate, in model order.
pub const SURROGATE_TARGETS: [&str; 5] = ["lut", "ff", "dsp", "bram", "latency_cycles"];

fn targets_of(est: &ResourceEstimate) -> [f64; 5] {
    [est.lut, est.ff, est.dsp, est.bram, est.latency_cycles]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateOptions {
    pub hidden_units: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for SurrogateOptions {
    fn default() -> Self {
        Self { hidden_units: 32, epochs: 200, batch_size: 64, learning_rate: 3e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressor {
    /// Constant `log1p` value, used when the training target never varies.
    Constant { value: f64 },
    Network { target_mean: f64, target_std: f64, net: NetworkFile },
}

pub const SURROGATE_FORMAT: &str = "hwnas-surrogate";
pub const SURROGATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub format: String,
    pub version: u32,
    pub feature_norm: Standardizer,
    /// One regressor per entry of [`SURROGATE_TARGETS`].
    pub regressors: Vec<Regressor>,
}

fn feature_matrix(features: &[&CostFeatures]) -> Array2<f64> {
    Array2::from_shape_fn((features.len(), FEATURE_COUNT), |(i, j)| features[i].to_vector()[j])
}

pub const MIN_SURROGATE_SAMPLES: usize = 2;

/// Fit one regressor per target on `log1p` values.
pub fn train_surrogate(
    samples: &[(CostFeatures, ResourceEstimate)],
    seed: u64,
    opts: &SurrogateOptions,
) -> Result<SurrogateModel, CostError> {
    if samples.len() < MIN_SURROGATE_SAMPLES {
        return Err(CostError::TooFewSamples { min: MIN_SURROGATE_SAMPLES, got: samples.len() });
    }
    let feats: Vec<&CostFeatures> = samples.iter().map(|s| &s.0).collect();
    let raw = feature_matrix(&feats);
    let feature_norm = Standardizer::fit(&raw).map_err(|e| CostError::File(e.to_string()))?;
    let x = feature_norm.transform(&raw);
    let mut regressors = Vec::with_capacity(SURROGATE_TARGETS.len());
    for t in 0..SURROGATE_TARGETS.len() {
        let y: Vec<f64> = samples.iter().map(|s| targets_of(&s.1)[t].max(0.0).ln_1p()).collect();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        if var.sqrt() <= 1e-12 * (1.0 + mean.abs()) {
            regressors.push(Regressor::Constant { value: mean });
            continue;
        }
        let std = var.sqrt();
        let yz = Array2::from_shape_fn((y.len(), 1), |(i, _)| (y[i] - mean) / std);
        let net_seed = crate::derive_seed(seed, t as u64);
        let mut net = Network::new(
            &[FEATURE_COUNT, opts.hidden_units, 1],
            Activation::Tanh,
            false,
            0.0,
            0.0,
            LossKind::MeanSquaredError,
            net_seed,
        );
        let cfg = TrainConfig {
            standardize: false,
            ..TrainConfig::new(opts.epochs, opts.batch_size, opts.learning_rate, net_seed)
        };
        fit(&mut net, &x, Targets::Values(&yz), &cfg)?;
        regressors.push(Regressor::Network { target_mean: mean, target_std: std, net: NetworkFile::from(&net) });
    }
    Ok(SurrogateModel { format: SURROGATE_FORMAT.into(), version: SURROGATE_VERSION, feature_norm, regressors })
}

impl SurrogateModel {
    fn networks(&self) -> Result<Vec<Option<Network>>, CostError> {
        self.regressors
            .iter()
            .map(|r| match r {
                Regressor::Constant { .. } => Ok(None),
                Regressor::Network { net, .. } => Ok(Some(Network::try_from(net.clone())?)),
            })
            .collect()
    }

    /// Predicted counts for a batch, `[lut, ff, dsp, bram, latency]` per row.
    pub fn predict_counts(&self, features: &[&CostFeatures]) -> Result<Vec<[f64; 5]>, CostError> {
        if self.regressors.len() != SURROGATE_TARGETS.len() {
            return Err(CostError::File(format!("expected 5 regressors, found {}", self.regressors.len())));
        }
        let x = self.feature_norm.transform(&feature_matrix(features));
        let nets = self.networks()?;
        let mut out = vec![[0.0; 5]; features.len()];
        for (t, (reg, net)) in self.regressors.iter().zip(&nets).enumerate() {
            match (reg, net) {
                (Regressor::Constant { value }, _) => {
                    for row in out.iter_mut() {
                        row[t] = value.exp_m1().max(0.0);
                    }
                }
                (Regressor::Network { target_mean, target_std, .. }, Some(net)) => {
                    let z = net.forward(&x, Mode::Eval)?;
                    for (row, v) in out.iter_mut().zip(z.column(0)) {
                        row[t] = (v * target_std + target_mean).exp_m1().max(0.0);
                    }
                }
                _ => unreachable!("network regressor decoded above"),
            }
        }
        Ok(out)
    }

    /// Non-negative estimate; percentages from `board`, initiation
    /// interval `max(1, R)` from the features.
    pub fn predict(&self, features: &CostFeatures, board: &BoardCapacity) -> Result<ResourceEstimate, CostError> {
        let [lut, ff, dsp, bram, lat] = self.predict_counts(&[features])?[0];
        Ok(ResourceEstimate::from_counts(lut, ff, dsp, bram, lat, features.reuse_factor.max(1.0) as u32, board))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("surrogate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CostError> {
        let m: SurrogateModel = serde_json::from_str(text).map_err(|e| CostError::File(e.to_string()))?;
        if m.format != SURROGATE_FORMAT || m.version != SURROGATE_VERSION {
            return Err(CostError::File(format!("unsupported format {} v{}", m.format, m.version)));
        }
        Ok(m)
    }
}

/// Reuse factors sampled when building surrogate training sets.
pub const SAMPLED_REUSE_FACTORS: [u32; 6] = [1, 2, 4, 8, 16, 32];

/// Oracle-labelled samples drawn from `space`, varying reuse factor,
/// strategy and precision so every target varies.
pub fn oracle_samples(
    space: &SearchSpace,
    input_dim: usize,
    class_count: usize,
    base: &HlsConfig,
    board: &BoardCapacity,
    precisions: &[FixedPointFormat],
    n: usize,
    seed: u64,
) -> Result<Vec<(CostFeatures, ResourceEstimate)>, crate::arch::DecodeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let assignment = space.sample_uniform(&mut rng);
        let spec = decode_architecture(&assignment, space)?;
        let input = match spec.window {
            Some(w) => 2 * w.size,
            None => input_dim,
        };
        let output = spec.resolve_output_dim(class_count);
        let mut hls = base.clone();
        hls.reuse_factor = SAMPLED_REUSE_FACTORS[rng.random_range(0..SAMPLED_REUSE_FACTORS.len())];
        hls.strategy = if rng.random::<bool>() { Strategy::Latency } else { Strategy::Resource };
        if !precisions.is_empty() {
            hls.default_precision = precisions[rng.random_range(0..precisions.len())];
        }
        let est = estimate_spec(&spec, input, output, &hls, board);
        out.push((featurize(&spec, input, output, &hls), est));
    }
    Ok(out)
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input has no rank variance.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::OutputActivation;

    fn fmt(t: u32, i: u32) -> FixedPointFormat {
        FixedPointFormat::new(t, i).unwrap()
    }

    fn hls(r: u32) -> HlsConfig {
        HlsConfig { reuse_factor: r, default_precision: fmt(8, 3), ..HlsConfig::new("VU13P") }
    }

    fn spec(widths: &[usize]) -> ArchitectureSpec {
        ArchitectureSpec {
            depth: widths.len(),
            layer_widths: widths.to_vec(),
            activation: Activation::Relu,
            batch_norm: false,
            dropout_rate: 0.0,
            l1_lambda: 0.0,
            learning_rate: 1e-3,
            window: None,
            output_dim: None,
            output_activation: OutputActivation::Softmax,
        }
    }

    #[test]
    fn bops_examples() {
        assert_eq!(bops(&[(4, 3)], 8, 8, &[1.0]), 984.0);
        assert_eq!(bops(&[(4, 3)], 8, 8, &[0.5]), 600.0);
        assert_eq!(bops(&[(1, 1)], 1, 1, &[1.0]), 3.0);
        assert_eq!(layer_bops(4, 3, 12, 8, 8), 984);
        assert_eq!(spec_bops(&spec(&[]), 4, 3, 8), 984.0);
    }

    #[test]
    fn ceil_log2_values() {
        let got: Vec<u32> = [1, 2, 3, 4, 5, 8, 9, 1024, 1025].iter().map(|&n| ceil_log2(n)).collect();
        assert_eq!(got, vec![0, 1, 2, 2, 3, 3, 4, 10, 11]);
    }

    #[test]
    fn effective_bops_tracks_masks() {
        let mut net = Network::new(&[4, 3], Activation::None, false, 0.0, 0.0, LossKind::SoftmaxCrossEntropy, 0);
        net.quant = Some(fmt(8, 3));
        assert_eq!(effective_bops(&net, fmt(16, 6)), 984.0);
        for j in 0..3 {
            net.layers[0].mask[[0, j]] = false;
            net.layers[0].mask[[1, j]] = false;
        }
        assert_eq!(effective_bops(&net, fmt(16, 6)), 600.0);
        net.quant = None;
        assert_eq!(effective_bops(&net, fmt(8, 3)), 600.0);
    }

    #[test]
    fn oracle_single_layer() {
        let board = board_by_name("VU13P").unwrap();
        let e = analytic_estimate(&[(4, 3)], &[1.0], fmt(8, 3), &hls(1), &board);
        assert_eq!(e.dsp, 0.0);
        assert_eq!(e.initiation_interval, 1);
        assert_eq!(e.latency_cycles, 6.0);
        // 0.55*12*64 = 422.4 -> 423; adders 3*3*8 = 72
        assert_eq!(e.lut, 423.0 + 72.0);
        assert_eq!(e.ff, (0.4f64 * 495.0).ceil());
        assert_eq!(e.bram, 0.0);
        let e8 = analytic_estimate(&[(4, 3)], &[1.0], fmt(8, 3), &hls(8), &board);
        assert_eq!(e8.initiation_interval, 8);
        assert_eq!(e8.latency_cycles, 13.0);
        assert_eq!(e8.bram, 1.0);
        let wide = analytic_estimate(&[(16, 12)], &[1.0], fmt(16, 6), &hls(1), &board);
        assert_eq!(wide.dsp, 192.0);
    }

    #[test]
    fn oracle_monotone_in_reuse() {
        let board = board_by_name("ZCU102").unwrap();
        let shapes = [(16, 64), (64, 32), (32, 5)];
        let d = [1.0, 0.5, 1.0];
        for f in [fmt(16, 6), fmt(8, 3)] {
            let mut prev: Option<ResourceEstimate> = None;
            for r in [1, 2, 3, 4, 8, 16] {
                let e = analytic_estimate(&shapes, &d, f, &hls(r), &board);
                if let Some(p) = prev {
                    assert!(e.lut <= p.lut && e.dsp <= p.dsp);
                    assert!(e.latency_cycles >= p.latency_cycles);
                }
                prev = Some(e);
            }
        }
    }

    #[test]
    fn board_percentages() {
        let vu = board_by_name("vu13p").unwrap();
        let zcu = board_by_name("ZCU102").unwrap();
        assert_eq!(round_pct(utilization_pct(54075.0, ResourceKind::Lut, &vu)), 3.13);
        assert_eq!(round_pct(utilization_pct(6996.0, ResourceKind::Lut, &zcu)), 2.55);
        assert_eq!(format_pct(utilization_pct(0.0, ResourceKind::Dsp, &vu)), "0.00");
        assert!(board_by_name("nope").is_err());
    }

    #[test]
    fn mean_utilization_examples() {
        let board = BoardCapacity { name: "b".into(), lut_total: 100, ff_total: 100, dsp_total: 100, bram_total: 100 };
        let e = ResourceEstimate::from_counts(1.0, 2.0, 4.0, 3.0, 0.0, 1, &board);
        assert_eq!(mean_utilization(&e), 2.5);
        let z = ResourceEstimate::from_counts(0.0, 0.0, 0.0, 0.0, 0.0, 0, &board);
        assert_eq!(mean_utilization(&z), 0.0);
        assert_eq!(z.initiation_interval, 1);
    }

    #[test]
    fn features() {
        let f = featurize(&spec(&[]), 4, 3, &hls(1));
        assert!((f.log2_total_mults - 12f64.log2()).abs() < 1e-12);
        assert_eq!(f.depth, 0.0);
        let s = spec(&[8, 4]);
        assert_eq!(featurize(&s, 4, 3, &hls(2)), featurize(&s, 4, 3, &hls(2)));
        assert_eq!(featurize(&s, 4, 3, &hls(2)).depth, 2.0);
        assert_eq!(featurize(&s, 4, 3, &hls(2)).total_params, (4 * 8 + 8 + 8 * 4 + 4 + 4 * 3 + 3) as f64);
    }

    #[test]
    fn constant_targets_give_constant_predictor() {
        let board = board_by_name("VU13P").unwrap();
        let s = spec(&[8]);
        let samples: Vec<_> = (1..6)
            .map(|w| {
                let sp = spec(&[w * 2]);
                let mut e = estimate_spec(&sp, 4, 3, &hls(1), &board);
                e.dsp = 7.0;
                (featurize(&sp, 4, 3, &hls(1)), e)
            })
            .collect();
        let opts = SurrogateOptions { epochs: 5, ..Default::default() };
        let m = train_surrogate(&samples, 0, &opts).unwrap();
        assert!(matches!(m.regressors[2], Regressor::Constant { .. }));
        let p = m.predict(&featurize(&s, 4, 3, &hls(1)), &board).unwrap();
        assert!((p.dsp - 7.0).abs() < 1e-9);
        assert_eq!(m, train_surrogate(&samples, 0, &opts).unwrap());
        assert_eq!(SurrogateModel::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn spearman_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), 0.0);
    }
}
