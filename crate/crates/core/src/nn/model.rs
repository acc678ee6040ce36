//! Floating-point network description shared by the SC engine and the
//! reference oracle. Weights are stored exactly as trained.

use std::fmt;

use crate::error::{Result, ScError};

/// Channel-major feature-map shape. Fully-connected activations are
/// `(n, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn flat(n: usize) -> Self {
        Self::new(n, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolMode {
    Max,
    Min,
    Average,
}

impl PoolMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoolMode::Max => "max",
            PoolMode::Min => "min",
            PoolMode::Average => "avg",
        }
    }
}

impl std::str::FromStr for PoolMode {
    type Err = ScError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(PoolMode::Max),
            "min" => Ok(PoolMode::Min),
            "avg" | "average" | "mean" => Ok(PoolMode::Average),
            other => Err(ScError::InvalidNetwork(format!(
                "unknown pool mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    FullyConnected,
    Pool,
}

impl LayerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::FullyConnected => "fc",
            LayerKind::Pool => "pool",
        }
    }
}

/// Valid-padding convolution. Weights are `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weights: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl ConvLayer {
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn kernel_weights(&self, out: usize) -> &[f32] {
        let n = self.fan_in();
        &self.weights[out * n..(out + 1) * n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolLayer {
    pub kernel: usize,
    pub stride: usize,
    pub mode: PoolMode,
}

/// Dense layer. Weights are `[out][in]`; inputs are the previous feature
/// map flattened channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl FcLayer {
    pub fn row(&self, out: usize) -> &[f32] {
        &self.weights[out * self.inputs..(out + 1) * self.inputs]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    Pool(PoolLayer),
    FullyConnected(FcLayer),
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv(_) => LayerKind::Conv,
            Layer::Pool(_) => LayerKind::Pool,
            Layer::FullyConnected(_) => LayerKind::FullyConnected,
        }
    }

    pub fn has_neurons(&self) -> bool {
        !matches!(self, Layer::Pool(_))
    }

    /// `(weights, bias)` for neuron layers.
    pub fn parameters(&self) -> Option<(&[f32], Option<&[f32]>)> {
        match self {
            Layer::Conv(c) => Some((&c.weights, c.bias.as_deref())),
            Layer::FullyConnected(f) => Some((&f.weights, f.bias.as_deref())),
            Layer::Pool(_) => None,
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match self {
            Layer::Conv(c) => {
                if c.kernel == 0 || c.stride == 0 {
                    return Err(ScError::InvalidNetwork("zero kernel or stride".into()));
                }
                if input.channels != c.in_channels {
                    return Err(ScError::Shape(format!(
                        "conv expects {} input channels, got {input}",
                        c.in_channels
                    )));
                }
                if input.height < c.kernel || input.width < c.kernel {
                    return Err(ScError::Shape(format!(
                        "{k}x{k} kernel larger than input {input}",
                        k = c.kernel
                    )));
                }
                if c.weights.len() != c.out_channels * c.fan_in() {
                    return Err(ScError::Shape(format!(
                        "conv weights hold {} values, expected {}",
                        c.weights.len(),
                        c.out_channels * c.fan_in()
                    )));
                }
                check_bias(c.bias.as_deref(), c.out_channels)?;
                Ok(Shape::new(
                    c.out_channels,
                    (input.height - c.kernel) / c.stride + 1,
                    (input.width - c.kernel) / c.stride + 1,
                ))
            }
            Layer::Pool(p) => {
                if p.kernel == 0 || p.stride == 0 {
                    return Err(ScError::InvalidNetwork("zero kernel or stride".into()));
                }
                let tiles = |n: usize| n >= p.kernel && (n - p.kernel).is_multiple_of(p.stride);
                if !tiles(input.height) || !tiles(input.width) {
                    return Err(ScError::Shape(format!(
                        "{k}x{k} pool with stride {s} does not tile {input}",
                        k = p.kernel,
                        s = p.stride
                    )));
                }
                Ok(Shape::new(
                    input.channels,
                    (input.height - p.kernel) / p.stride + 1,
                    (input.width - p.kernel) / p.stride + 1,
                ))
            }
            Layer::FullyConnected(f) => {
                if input.len() != f.inputs {
                    return Err(ScError::Shape(format!(
                        "fc expects {} inputs, got {input}",
                        f.inputs
                    )));
                }
                if f.weights.len() != f.inputs * f.outputs {
                    return Err(ScError::Shape(format!(
                        "fc weights hold {} values, expected {}",
                        f.weights.len(),
                        f.inputs * f.outputs
                    )));
                }
                check_bias(f.bias.as_deref(), f.outputs)?;
                Ok(Shape::flat(f.outputs))
            }
        }
    }
}

fn check_bias(bias: Option<&[f32]>, n: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != n => Err(ScError::Shape(format!(
            "bias holds {} values, expected {n}",
            b.len()
        ))),
        _ => Ok(()),
    }
}

/// A float network: input shape plus an ordered list of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input: Shape,
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(input: Shape, layers: Vec<Layer>) -> Result<Self> {
        let net = Self { input, layers };
        net.shapes()?;
        Ok(net)
    }

    /// Output shape of every layer, validating compatibility on the way.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shape = self.input;
        self.layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                shape = layer
                    .output_shape(shape)
                    .map_err(|e| ScError::Shape(format!("layer {i}: {e}")))?;
                Ok(shape)
            })
            .collect()
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(self.shapes()?.last().copied().unwrap_or(self.input))
    }

    /// Replaces the mode of every pooling layer.
    pub fn with_pool_mode(mut self, mode: PoolMode) -> Self {
        for layer in &mut self.layers {
            if let Layer::Pool(p) = layer {
                p.mode = mode;
            }
        }
        self
    }

    /// Rescales every neuron layer to `max|w| = 1`, carrying the product of
    /// the factors into the biases. Each layer's output is multiplied by a
    /// positive constant and ReLU and pooling commute with that, so the
    /// predicted class is unchanged.
    pub fn equalized(mut self) -> Self {
        let mut carried = 1.0f64;
        for layer in &mut self.layers {
            let (weights, bias) = match layer {
                Layer::Conv(c) => (&mut c.weights, &mut c.bias),
                Layer::FullyConnected(f) => (&mut f.weights, &mut f.bias),
                Layer::Pool(_) => continue,
            };
            let max = weights.iter().fold(0.0f32, |m, w| m.max(w.abs()));
            if max == 0.0 {
                continue;
            }
            let c = 1.0 / max as f64;
            carried *= c;
            for w in weights.iter_mut() {
                *w = (*w as f64 * c) as f32;
            }
            for b in bias.iter_mut().flatten() {
                *b = (*b as f64 * carried) as f32;
            }
        }
        self
    }

    /// Whether this is the classic LeNet-5 stack: conv 6@5x5, pool,
    /// conv 16@5x5, pool, fc 120, fc 84, fc 10.
    pub fn is_lenet5(&self) -> bool {
        let kinds: Vec<_> = self.layers.iter().map(Layer::kind).collect();
        use LayerKind::*;
        if kinds
            != [
                Conv,
                Pool,
                Conv,
                Pool,
                FullyConnected,
                FullyConnected,
                FullyConnected,
            ]
        {
            return false;
        }
        let conv = |i: usize| match &self.layers[i] {
            Layer::Conv(c) => (c.out_channels, c.kernel),
            _ => unreachable!(),
        };
        let fc = |i: usize| match &self.layers[i] {
            Layer::FullyConnected(f) => f.outputs,
            _ => unreachable!(),
        };
        conv(0) == (6, 5) && conv(2) == (16, 5) && (fc(4), fc(5), fc(6)) == (120, 84, 10)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn lenet5_zeros() -> Network {
        let conv = |i, o| {
            Layer::Conv(ConvLayer {
                in_channels: i,
                out_channels: o,
                kernel: 5,
                stride: 1,
                weights: vec![0.0; i * o * 25],
                bias: Some(vec![0.0; o]),
            })
        };
        let pool = Layer::Pool(PoolLayer {
            kernel: 2,
            stride: 2,
            mode: PoolMode::Max,
        });
        let fc = |i, o| {
            Layer::FullyConnected(FcLayer {
                inputs: i,
                outputs: o,
                weights: vec![0.0; i * o],
                bias: Some(vec![0.0; o]),
            })
        };
        Network::new(
            Shape::new(1, 32, 32),
            vec![
                conv(1, 6),
                pool.clone(),
                conv(6, 16),
                pool.clone(),
                fc(400, 120),
                fc(120, 84),
                fc(84, 10),
            ],
        )
        .unwrap()
    }

    #[test]
    fn lenet5_shapes() {
        let net = lenet5_zeros();
        let shapes = net.shapes().unwrap();
        assert_eq!(shapes[0], Shape::new(6, 28, 28));
        assert_eq!(shapes[1], Shape::new(6, 14, 14));
        assert_eq!(shapes[2], Shape::new(16, 10, 10));
        assert_eq!(shapes[3], Shape::new(16, 5, 5));
        assert_eq!(shapes[6], Shape::flat(10));
        assert!(net.is_lenet5());
    }

    #[test]
    fn pool_must_tile() {
        let pool = Layer::Pool(PoolLayer {
            kernel: 2,
            stride: 2,
            mode: PoolMode::Max,
        });
        assert!(pool.output_shape(Shape::new(1, 5, 4)).is_err());
        assert_eq!(
            pool.output_shape(Shape::new(3, 4, 6)).unwrap(),
            Shape::new(3, 2, 3)
        );
    }

    #[test]
    fn shape_mismatches_rejected() {
        let fc = Layer::FullyConnected(FcLayer {
            inputs: 4,
            outputs: 2,
            weights: vec![0.0; 8],
            bias: Some(vec![0.0; 3]),
        });
        assert!(fc.output_shape(Shape::flat(4)).is_err(), "bias length");
        assert!(Network::new(Shape::flat(5), vec![fc]).is_err());
    }

    #[test]
    fn pool_mode_parse() {
        assert_eq!("MAX".parse::<PoolMode>().unwrap(), PoolMode::Max);
        assert_eq!("avg".parse::<PoolMode>().unwrap(), PoolMode::Average);
        assert!("median".parse::<PoolMode>().is_err());
    }
}
