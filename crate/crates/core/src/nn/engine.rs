//! Bit-level evaluation of the SC network.
//!
//! Every layer restarts `R_x` and `R_w` from their seeds, so a given level
//! always converts to the same stream. Streams are therefore cached per
//! level ([`LevelTable`]) instead of re-running the comparator for every
//! neuron. Each neuron layer runs in two phases: the APC accumulates the
//! exact XNOR-array sum over the whole stream, then the normalized sum is
//! re-converted with `R_x` and OR-ed with the `0*` reference.

use std::sync::OnceLock;

use crate::bitstream::Bitstream;
use crate::error::{Result, ScError};
use crate::gates::{and_all, apc_sum, gate_mux, gate_or, gate_xnor, or_all, ApcAccumulator};
use crate::lfsr::{Encoder, Lfsr};
use crate::nn::model::{LayerKind, PoolMode, Shape};
use crate::nn::spec::{quantize_bipolar, LayerSpec, NetworkSpec, NeuronSpec, ScParams};

/// Lazily built stream for every level of one generator.
#[derive(Debug)]
pub struct LevelTable {
    encoder: Encoder,
    streams: Vec<OnceLock<Bitstream>>,
}

impl LevelTable {
    pub fn new(lfsr: Lfsr, length: usize) -> Result<Self> {
        let encoder = Encoder::new(lfsr, length)?;
        let levels = 1usize << lfsr.width();
        Ok(Self {
            encoder,
            streams: (0..levels).map(|_| OnceLock::new()).collect(),
        })
    }

    #[inline]
    pub fn get(&self, level: u32) -> &Bitstream {
        self.streams[level as usize].get_or_init(|| self.encoder.encode_level(level))
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }
}

/// Generator state shared by every layer of a run.
#[derive(Debug)]
pub struct ScContext {
    params: ScParams,
    x: LevelTable,
    w: LevelTable,
    zero: Bitstream,
    selector: Lfsr,
}

impl ScContext {
    pub fn new(params: ScParams) -> Result<Self> {
        params.validate()?;
        let len = params.stream_length;
        let x = LevelTable::new(params.r_x.lfsr(params.width)?, len)?;
        let w = LevelTable::new(params.r_w.lfsr(params.width)?, len)?;
        let zero = x.get(params.zero_level()).clone();
        Ok(Self {
            params,
            x,
            w,
            zero,
            selector: params.selector.lfsr(params.width)?,
        })
    }

    pub fn params(&self) -> &ScParams {
        &self.params
    }

    /// Activation stream for `level`, converted with `R_x`.
    pub fn activation(&self, level: u32) -> &Bitstream {
        self.x.get(level)
    }

    /// Weight stream for `level`, converted with `R_w`.
    pub fn weight(&self, level: u32) -> &Bitstream {
        self.w.get(level)
    }

    /// The `0*` reference stream.
    pub fn zero(&self) -> &Bitstream {
        &self.zero
    }

    /// Converts input levels to streams with `R_x`.
    pub fn encode_input(&self, levels: &[u32]) -> Result<Vec<Bitstream>> {
        let max = self.params.max_level();
        levels
            .iter()
            .map(|&l| {
                if l > max {
                    Err(ScError::LevelOutOfRange {
                        raw: l,
                        width: self.params.width,
                    })
                } else {
                    Ok(self.activation(l).clone())
                }
            })
            .collect()
    }

    /// XNOR array plus APC for one neuron instance. `inputs` yields
    /// `(activation, weight level)` pairs.
    fn apc<'a>(
        &'a self,
        inputs: impl Iterator<Item = (&'a Bitstream, u32)>,
        bias: Option<u32>,
    ) -> ApcAccumulator {
        let len = self.params.stream_length;
        let mut n = 0usize;
        let mut differ = 0i64;
        for (x, level) in inputs {
            let w = self.weight(level);
            differ += x
                .words()
                .iter()
                .zip(w.words())
                .map(|(a, b)| (a ^ b).count_ones() as i64)
                .sum::<i64>();
            n += 1;
        }
        let mut acc = ApcAccumulator {
            fan_in: n,
            total: (n * len) as i64 - differ,
            cycles: len,
        };
        if let Some(level) = bias {
            // XNOR with the constant +1 stream passes the weight through.
            acc.fan_in += 1;
            acc.total += self.weight(level).count_ones() as i64;
        }
        acc
    }

    /// Re-conversion and ReLU: normalize the APC sum, convert it with
    /// `R_x`, then OR with `0*`.
    fn activate(&self, acc: &ApcAccumulator, scale: f64) -> Activation {
        let (level, saturated) = normalized_level(acc, scale, self.params.width);
        let stream = gate_or(self.activation(level), &self.zero).expect("equal lengths");
        Activation {
            level,
            saturated,
            stream,
        }
    }
}

/// Maps an APC sum to a level: `v = (sum / L) * scale`, clamped to
/// `[-1, 1]`. Reports whether clamping happened.
pub fn normalized_level(acc: &ApcAccumulator, scale: f64, width: u32) -> (u32, bool) {
    let v = acc.bipolar_value() * scale;
    let saturated = !(-1.0..=1.0).contains(&v);
    if saturated {
        log::trace!("activation saturated: {v:.4} clamped to [-1, 1]");
    }
    (quantize_bipolar(v.clamp(-1.0, 1.0), width), saturated)
}

/// Result of one neuron: its pre-OR level, the output stream, and whether
/// normalization overflowed.
#[derive(Debug, Clone)]
pub struct Activation {
    pub level: u32,
    pub saturated: bool,
    pub stream: Bitstream,
}

/// A stochastic neuron evaluated gate by gate: XNOR array, APC, `R_x`
/// re-conversion of `sum / L * scale`, OR against `0*`.
///
/// `inputs` must already be `R_x` streams; weights are converted here with
/// `r_w`. This is the reference path; [`ScEngine`] fuses the same steps.
pub fn neuron_forward(
    inputs: &[&Bitstream],
    spec: &NeuronSpec,
    r_x: Lfsr,
    r_w: Lfsr,
    length: usize,
    scale: f64,
) -> Result<Activation> {
    if inputs.len() != spec.fan_in() {
        return Err(ScError::FanInMismatch {
            expected: spec.fan_in(),
            got: inputs.len(),
        });
    }
    if r_x.width() != r_w.width() {
        return Err(ScError::WidthMismatch {
            value: r_w.width(),
            generator: r_x.width(),
        });
    }
    let width = r_x.width();
    spec.validate(width)?;
    let enc_x = Encoder::new(r_x, length)?;
    let enc_w = Encoder::new(r_w, length)?;
    let mut products = Vec::with_capacity(spec.apc_inputs());
    for (x, &level) in inputs.iter().zip(&spec.weights) {
        if x.len() != length {
            return Err(ScError::LengthMismatch {
                left: x.len(),
                right: length,
            });
        }
        products.push(gate_xnor(x, &enc_w.encode_level(level))?);
    }
    if let Some(bias) = spec.bias {
        let one = Bitstream::ones(length)?;
        products.push(gate_xnor(&one, &enc_w.encode_level(bias))?);
    }
    let acc = apc_sum(&products.iter().collect::<Vec<_>>())?;
    let (level, saturated) = normalized_level(&acc, scale, width);
    let zero = enc_x.encode_level(quantize_bipolar(0.0, width));
    let stream = gate_or(&enc_x.encode_level(level), &zero)?;
    Ok(Activation {
        level,
        saturated,
        stream,
    })
}

/// Output of a neuron layer.
#[derive(Debug, Clone)]
pub enum LayerOutput {
    /// Hidden layer: re-converted, ReLU-ed streams.
    Streams {
        streams: Vec<Bitstream>,
        saturations: u64,
    },
    /// Readout layer: raw APC sums, no ReLU.
    Sums(Vec<ApcAccumulator>),
}

fn check_input(layer: &LayerSpec, maps: &[Bitstream], length: usize) -> Result<()> {
    if maps.len() != layer.input.len() {
        return Err(ScError::Shape(format!(
            "{} layer expects {} ({} streams), got {} streams",
            layer.kind.as_str(),
            layer.input,
            layer.input.len(),
            maps.len()
        )));
    }
    if let Some(bad) = maps.iter().find(|s| s.len() != length) {
        return Err(ScError::LengthMismatch {
            left: bad.len(),
            right: length,
        });
    }
    Ok(())
}

/// APC sums for every neuron instance of a conv or dense layer, in output
/// order (channel-major for conv).
fn layer_sums(
    ctx: &ScContext,
    layer: &LayerSpec,
    maps: &[Bitstream],
) -> Result<Vec<ApcAccumulator>> {
    check_input(layer, maps, ctx.params.stream_length)?;
    let sums = match layer.kind {
        LayerKind::Conv => {
            let (inp, out, k, s) = (layer.input, layer.output, layer.kernel, layer.stride);
            let mut sums = Vec::with_capacity(out.len());
            for (o, neuron) in layer.neurons.iter().enumerate() {
                debug_assert!(o < out.channels);
                for oy in 0..out.height {
                    for ox in 0..out.width {
                        let window = (0..inp.channels).flat_map(|c| {
                            (0..k).flat_map(move |ky| {
                                (0..k).map(move |kx| inp.index(c, oy * s + ky, ox * s + kx))
                            })
                        });
                        let pairs = window.zip(&neuron.weights).map(|(i, &w)| (&maps[i], w));
                        sums.push(ctx.apc(pairs, neuron.bias));
                    }
                }
            }
            sums
        }
        LayerKind::FullyConnected => layer
            .neurons
            .iter()
            .map(|neuron| {
                if neuron.fan_in() != maps.len() {
                    return Err(ScError::FanInMismatch {
                        expected: neuron.fan_in(),
                        got: maps.len(),
                    });
                }
                Ok(ctx.apc(maps.iter().zip(neuron.weights.iter().copied()), neuron.bias))
            })
            .collect::<Result<_>>()?,
        LayerKind::Pool => return Err(ScError::InvalidNetwork("pool layer has no neurons".into())),
    };
    Ok(sums)
}

/// Evaluates a conv or dense layer. Hidden layers re-convert and apply the
/// OR-gate ReLU; a readout layer returns the APC sums.
pub fn neuron_layer_forward(
    ctx: &ScContext,
    layer: &LayerSpec,
    maps: &[Bitstream],
    readout: bool,
) -> Result<LayerOutput> {
    let sums = layer_sums(ctx, layer, maps)?;
    if readout {
        return Ok(LayerOutput::Sums(sums));
    }
    let scale = layer.activation_scale();
    let mut saturations = 0;
    let streams = sums
        .iter()
        .map(|acc| {
            let a = ctx.activate(acc, scale);
            saturations += a.saturated as u64;
            a.stream
        })
        .collect();
    Ok(LayerOutput::Streams {
        streams,
        saturations,
    })
}

/// Convolution layer: one neuron per output pixel over its kernel window
/// (valid padding).
pub fn conv_forward(
    ctx: &ScContext,
    layer: &LayerSpec,
    maps: &[Bitstream],
    readout: bool,
) -> Result<LayerOutput> {
    if layer.kind != LayerKind::Conv {
        return Err(ScError::InvalidNetwork(format!(
            "conv_forward on a {} layer",
            layer.kind.as_str()
        )));
    }
    neuron_layer_forward(ctx, layer, maps, readout)
}

/// Pooling with a single gate per window: OR for max, AND for min, a
/// multiplexer for average. Max and min are exact only when the window's
/// streams are totally correlated, which re-conversion with `R_x` ensures.
pub fn pool_forward(
    ctx: &ScContext,
    layer: &LayerSpec,
    maps: &[Bitstream],
) -> Result<Vec<Bitstream>> {
    let mode = match (layer.kind, layer.pool_mode) {
        (LayerKind::Pool, Some(mode)) => mode,
        _ => {
            return Err(ScError::InvalidNetwork(
                "pool_forward needs a pool layer".into(),
            ))
        }
    };
    check_input(layer, maps, ctx.params.stream_length)?;
    pool_maps(
        maps,
        layer.input,
        layer.output,
        layer.kernel,
        layer.stride,
        mode,
        ctx.selector,
    )
}

/// Pools channel-major `maps` of shape `input` into `output`.
pub fn pool_maps(
    maps: &[Bitstream],
    input: Shape,
    output: Shape,
    kernel: usize,
    stride: usize,
    mode: PoolMode,
    selector: Lfsr,
) -> Result<Vec<Bitstream>> {
    let mut out = Vec::with_capacity(output.len());
    let mut window = Vec::with_capacity(kernel * kernel);
    for c in 0..output.channels {
        for oy in 0..output.height {
            for ox in 0..output.width {
                window.clear();
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        window.push(&maps[input.index(c, oy * stride + ky, ox * stride + kx)]);
                    }
                }
                out.push(match mode {
                    PoolMode::Max => or_all(&window)?,
                    PoolMode::Min => and_all(&window)?,
                    PoolMode::Average if window.len() == 1 => window[0].clone(),
                    PoolMode::Average => gate_mux(&window, selector)?,
                });
            }
        }
    }
    Ok(out)
}

/// Result of a full forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    /// Decoded readout APC sums, `sum_j x*_j w*_j`.
    pub logits: Vec<f64>,
    /// Readout APC sums as integers: `sum_j (2 ones_j - L)`.
    pub apc_sums: Vec<i64>,
    pub predicted: usize,
    /// Saturation events per layer.
    pub saturations: Vec<u64>,
}

impl ForwardResult {
    pub fn total_saturations(&self) -> u64 {
        self.saturations.iter().sum()
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// A prepared network: spec plus the generator tables.
#[derive(Debug)]
pub struct ScEngine {
    spec: NetworkSpec,
    ctx: ScContext,
}

impl ScEngine {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        if spec.layers.is_empty() {
            return Err(ScError::InvalidNetwork("network has no layers".into()));
        }
        if !spec.layers.last().is_some_and(LayerSpec::has_neurons) {
            return Err(ScError::InvalidNetwork(
                "the last layer must be conv or dense to produce logits".into(),
            ));
        }
        let ctx = ScContext::new(spec.params)?;
        Ok(Self { spec, ctx })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn context(&self) -> &ScContext {
        &self.ctx
    }

    /// Runs the network on an image given as `R_x` input levels
    /// (channel-major).
    pub fn forward(&self, image: &[u32]) -> Result<ForwardResult> {
        self.run(image, None)
    }

    /// Like [`forward`](Self::forward), also returning every hidden
    /// layer's output streams.
    pub fn forward_traced(&self, image: &[u32]) -> Result<(ForwardResult, Vec<Vec<Bitstream>>)> {
        let mut trace = Vec::new();
        let result = self.run(image, Some(&mut trace))?;
        Ok((result, trace))
    }

    fn run(
        &self,
        image: &[u32],
        mut trace: Option<&mut Vec<Vec<Bitstream>>>,
    ) -> Result<ForwardResult> {
        if image.len() != self.spec.input.len() {
            return Err(ScError::Shape(format!(
                "image has {} pixels, network expects {}",
                image.len(),
                self.spec.input
            )));
        }
        let mut maps = self.ctx.encode_input(image)?;
        let mut saturations = Vec::with_capacity(self.spec.layers.len());
        let last = self.spec.layers.len() - 1;
        for (i, layer) in self.spec.layers.iter().enumerate() {
            match layer.kind {
                LayerKind::Pool => {
                    maps = pool_forward(&self.ctx, layer, &maps)?;
                    saturations.push(0);
                }
                _ => match neuron_layer_forward(&self.ctx, layer, &maps, i == last)? {
                    LayerOutput::Streams {
                        streams,
                        saturations: n,
                    } => {
                        maps = streams;
                        saturations.push(n);
                    }
                    LayerOutput::Sums(sums) => {
                        saturations.push(0);
                        let logits: Vec<f64> = sums.iter().map(|a| a.bipolar_value()).collect();
                        return Ok(ForwardResult {
                            predicted: argmax(&logits),
                            apc_sums: sums.iter().map(|a| a.bipolar_sum()).collect(),
                            logits,
                            saturations,
                        });
                    }
                },
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(maps.clone());
            }
        }
        unreachable!("last layer is a neuron layer")
    }
}

/// One-shot forward pass. Prefer [`ScEngine`] for more than one image.
pub fn network_forward(image: &[u32], spec: &NetworkSpec) -> Result<ForwardResult> {
    ScEngine::new(spec.clone())?.forward(image)
}
