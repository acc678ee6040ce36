//! Quantized network description for the SC engine, and the weight and
//! activation normalization that produces it from a float [`Network`].
//!
//! Scale bookkeeping: every feature map in the SC engine carries the float
//! activation multiplied by a per-layer factor `k`. The input image has
//! `k = 1`. A neuron layer with weight scale `s` and fan-in `n` (bias
//! counted as one more input) divides its bipolar sum by `n * a`, so
//!
//! ```text
//! k_out = k_in / (s * n * a)
//! ```
//!
//! Biases are quantized as `b * k_in / s` so that they stay consistent with
//! the scaled inputs. Since ReLU and max-pooling are positively homogeneous,
//! none of these factors changes the arg-max of the output layer.

use std::sync::OnceLock;

use crate::bitstream::{check_width, max_level, Codification, StochasticValue};
use crate::error::{Result, ScError};
use crate::lfsr::{default_taps, reciprocal_taps, Lfsr};
use crate::nn::generators::best_weight_seed;
use crate::nn::model::{Layer, LayerKind, Network, PoolMode, Shape};

/// Polynomial and seed of one generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngConfig {
    pub taps: u32,
    pub seed: u32,
}

impl RngConfig {
    pub fn lfsr(&self, width: u32) -> Result<Lfsr> {
        Lfsr::new(width, self.taps, self.seed)
    }
}

/// Width, stream length and the generator configuration of a run.
///
/// Two principal generators drive the whole network: `r_x` converts the
/// image, re-converts every neuron output and produces the `0*` reference;
/// `r_w` converts every weight. `selector` only feeds average-pooling
/// multiplexers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScParams {
    pub width: u32,
    pub stream_length: usize,
    pub r_x: RngConfig,
    pub r_w: RngConfig,
    pub selector: RngConfig,
}

impl ScParams {
    /// Defaults for `width`: the documented polynomial for both principal
    /// generators, `r_x` seeded with 1 and `r_w` started at the phase offset
    /// ranked first by
    /// [`rank_phase_offsets`](crate::nn::generators::rank_phase_offsets). The selector uses the
    /// reciprocal polynomial. Stream length is one full period.
    pub fn for_width(width: u32) -> Result<Self> {
        check_width(width)?;
        let taps = default_taps(width).ok_or_else(|| {
            ScError::InvalidLfsr(format!("no default polynomial for width {width}"))
        })?;
        let r_x = RngConfig { taps, seed: 1 };
        Ok(Self {
            width,
            stream_length: max_level(width) as usize,
            r_x,
            r_w: RngConfig {
                taps,
                seed: default_weight_seed(width)?,
            },
            selector: RngConfig {
                taps: reciprocal_taps(taps, width),
                seed: 1,
            },
        })
    }

    pub fn with_length(mut self, stream_length: usize) -> Self {
        self.stream_length = stream_length;
        self
    }

    pub fn max_level(&self) -> u32 {
        max_level(self.width)
    }

    /// Level of the bipolar zero reference `0*`.
    pub fn zero_level(&self) -> u32 {
        quantize_bipolar(0.0, self.width)
    }

    pub fn validate(&self) -> Result<()> {
        check_width(self.width)?;
        if self.stream_length == 0 {
            return Err(ScError::EmptyStream);
        }
        for (name, cfg) in [
            ("R_x", self.r_x),
            ("R_w", self.r_w),
            ("selector", self.selector),
        ] {
            let lfsr = cfg.lfsr(self.width)?;
            if !lfsr.is_maximal() {
                return Err(ScError::InvalidLfsr(format!(
                    "{name} polynomial {:#x} is not maximal at width {}",
                    cfg.taps, self.width
                )));
            }
        }
        if self.r_x == self.r_w {
            return Err(ScError::InvalidLfsr(
                "R_x and R_w must differ in seed or polynomial".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ScParams {
    fn default() -> Self {
        Self::for_width(8).expect("width 8 has a default polynomial")
    }
}

/// Best-ranked `r_w` seed for the default `r_x` of `width`, computed once.
fn default_weight_seed(width: u32) -> Result<u32> {
    static SEEDS: [OnceLock<u32>; 25] = [const { OnceLock::new() }; 25];
    let slot = &SEEDS[width as usize];
    if let Some(&seed) = slot.get() {
        return Ok(seed);
    }
    let taps = default_taps(width)
        .ok_or_else(|| ScError::InvalidLfsr(format!("no default polynomial for width {width}")))?;
    let seed = best_weight_seed(Lfsr::new(width, taps, 1)?)?;
    Ok(*slot.get_or_init(|| seed))
}

/// Nearest bipolar level, clamped to the representable range.
pub fn quantize_bipolar(value: f64, width: u32) -> u32 {
    let max = max_level(width) as f64;
    (((value + 1.0) / 2.0) * max).round().clamp(0.0, max) as u32
}

/// Bipolar value of a level.
pub fn level_value(level: u32, width: u32) -> f64 {
    StochasticValue::new(level, Codification::Bipolar, width)
        .map(|v| v.decoded())
        .unwrap_or(f64::NAN)
}

/// Quantized weights of one neuron, as bipolar levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronSpec {
    pub weights: Vec<u32>,
    pub bias: Option<u32>,
}

impl NeuronSpec {
    pub fn fan_in(&self) -> usize {
        self.weights.len()
    }

    /// Inputs seen by the APC, the bias counting as one.
    pub fn apc_inputs(&self) -> usize {
        self.weights.len() + self.bias.is_some() as usize
    }

    pub fn validate(&self, width: u32) -> Result<()> {
        let max = max_level(width);
        match self.weights.iter().chain(&self.bias).find(|&&l| l > max) {
            Some(&raw) => Err(ScError::LevelOutOfRange { raw, width }),
            None => Ok(()),
        }
    }
}

/// One layer of the SC network.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub input: Shape,
    pub output: Shape,
    /// Kernel size and stride for conv and pool layers; 1 for dense.
    pub kernel: usize,
    pub stride: usize,
    pub pool_mode: Option<PoolMode>,
    /// One entry per output channel (conv) or output unit (dense). A conv
    /// neuron is instantiated at every output pixel.
    pub neurons: Vec<NeuronSpec>,
    /// Weight normalization factor `s`: weights enter as `w / s`.
    pub weight_scale: f64,
    /// Dynamic-range compensation `a`; 1 unless calibrated.
    pub activation_gain: f64,
    /// Scale `k` of the incoming feature map relative to float.
    pub input_scale: f64,
}

impl LayerSpec {
    pub fn has_neurons(&self) -> bool {
        self.kind != LayerKind::Pool
    }

    /// Inputs per APC, bias included. Zero for pool layers.
    pub fn apc_inputs(&self) -> usize {
        self.neurons.first().map_or(0, NeuronSpec::apc_inputs)
    }

    /// Factor applied to the decoded APC sum before re-conversion:
    /// `1 / (n * a)`.
    pub fn activation_scale(&self) -> f64 {
        if self.has_neurons() {
            1.0 / (self.apc_inputs() as f64 * self.activation_gain)
        } else {
            1.0
        }
    }

    /// Float value of a decoded APC sum: `sum x*w* = (k_in / s) * z`.
    pub fn preactivation_scale(&self) -> f64 {
        self.input_scale / self.weight_scale
    }

    /// Scale `k` of this layer's output when it is a hidden layer.
    pub fn output_scale(&self) -> f64 {
        if self.has_neurons() {
            self.preactivation_scale() * self.activation_scale()
        } else {
            self.input_scale
        }
    }

    /// Number of neuron instances (APCs) in the layer.
    pub fn neuron_instances(&self) -> usize {
        if self.has_neurons() {
            self.output.len()
        } else {
            0
        }
    }
}

/// The full SC network: quantized layers plus generator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub params: ScParams,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let mut shape = self.input;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.input != shape {
                return Err(ScError::Shape(format!(
                    "layer {i} expects {}, previous layer produces {shape}",
                    layer.input
                )));
            }
            if !(layer.weight_scale > 0.0 && layer.activation_gain > 0.0) {
                return Err(ScError::InvalidNetwork(format!(
                    "layer {i} has a non-positive scale"
                )));
            }
            if layer.has_neurons() == layer.neurons.is_empty() {
                return Err(ScError::InvalidNetwork(format!(
                    "layer {i}: neuron layers need neurons, pool layers none"
                )));
            }
            for n in &layer.neurons {
                n.validate(self.params.width)?;
            }
            shape = layer.output;
        }
        Ok(())
    }

    pub fn output_shape(&self) -> Shape {
        self.layers.last().map_or(self.input, |l| l.output)
    }

    /// Factor between decoded SC logits and float logits.
    pub fn logit_scale(&self) -> f64 {
        self.layers.last().map_or(1.0, |l| l.preactivation_scale())
    }

    pub fn uses_average_pooling(&self) -> bool {
        self.layers
            .iter()
            .any(|l| l.pool_mode == Some(PoolMode::Average))
    }
}

/// Largest float pre-activation magnitude seen per layer on a calibration
/// batch (zero for pool layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub max_abs_preactivation: Vec<f64>,
}

/// Knobs for [`normalize_weights`].
#[derive(Debug, Clone, Default)]
pub struct NormalizeOptions {
    /// Calibrated activation gains; `a = 1` everywhere when absent.
    pub calibration: Option<Calibration>,
    /// Extra factor on each layer's activation scale `1 / (n a)`. Missing
    /// entries mean 1.
    pub scale_multipliers: Vec<f64>,
}

/// Quantizes a float network for the SC engine.
///
/// Per neuron layer: `s = max(1, max|w|, max|b k_in|)`, every weight maps to
/// level `round((w / s + 1) / 2 * (2^width - 1))`, and the activation scale
/// is `1 / (n a)` with `a = k_in * max|z| / (s n)` when calibrated.
pub fn normalize_weights(
    net: &Network,
    params: ScParams,
    options: &NormalizeOptions,
) -> Result<NetworkSpec> {
    let shapes = net.shapes()?;
    if let Some(cal) = &options.calibration {
        if cal.max_abs_preactivation.len() != net.layers.len() {
            return Err(ScError::InvalidNetwork(format!(
                "calibration covers {} layers, network has {}",
                cal.max_abs_preactivation.len(),
                net.layers.len()
            )));
        }
    }
    let width = params.width;
    let mut k = 1.0f64;
    let mut input = net.input;
    let mut layers = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let output = shapes[i];
        let (kernel, stride, pool_mode) = match layer {
            Layer::Conv(c) => (c.kernel, c.stride, None),
            Layer::Pool(p) => (p.kernel, p.stride, Some(p.mode)),
            Layer::FullyConnected(_) => (1, 1, None),
        };
        let mut spec = LayerSpec {
            kind: layer.kind(),
            input,
            output,
            kernel,
            stride,
            pool_mode,
            neurons: Vec::new(),
            weight_scale: 1.0,
            activation_gain: 1.0,
            input_scale: k,
        };
        if let Some((weights, bias)) = layer.parameters() {
            let all = weights.iter().chain(bias.into_iter().flatten());
            if all.clone().any(|w| !w.is_finite()) {
                return Err(ScError::NonFiniteWeight { layer: i });
            }
            let max_w = weights.iter().fold(0.0f64, |m, &w| m.max((w as f64).abs()));
            let max_b = bias
                .into_iter()
                .flatten()
                .fold(0.0f64, |m, &b| m.max((b as f64 * k).abs()));
            let s = 1.0f64.max(max_w).max(max_b);
            let outputs = match layer {
                Layer::Conv(c) => c.out_channels,
                Layer::FullyConnected(f) => f.outputs,
                Layer::Pool(_) => unreachable!(),
            };
            let fan_in = weights.len() / outputs.max(1);
            spec.neurons = (0..outputs)
                .map(|o| NeuronSpec {
                    weights: weights[o * fan_in..(o + 1) * fan_in]
                        .iter()
                        .map(|&w| quantize_bipolar(w as f64 / s, width))
                        .collect(),
                    bias: bias.map(|b| quantize_bipolar(b[o] as f64 * k / s, width)),
                })
                .collect();
            let n = (fan_in + bias.is_some() as usize) as f64;
            let mut gain = match &options.calibration {
                Some(cal) if cal.max_abs_preactivation[i] > 0.0 => {
                    k * cal.max_abs_preactivation[i] / (s * n)
                }
                _ => 1.0,
            };
            if let Some(&c) = options.scale_multipliers.get(i) {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(ScError::OutOfRange(format!(
                        "scale multiplier {c} for layer {i}"
                    )));
                }
                gain /= c;
            }
            spec.weight_scale = s;
            spec.activation_gain = gain;
            k = spec.output_scale();
        }
        input = output;
        layers.push(spec);
    }
    let spec = NetworkSpec {
        input: net.input,
        layers,
        params,
    };
    spec.validate()?;
    Ok(spec)
}
