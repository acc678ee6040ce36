//! The stochastic CNN: float model, quantized spec, bit-level engine and
//! resource count.

pub mod cost;
pub mod engine;
pub mod generators;
pub mod model;
pub mod spec;

pub use cost::{cost_report, neuron_cost, CostReport};
pub use engine::{
    argmax, conv_forward, network_forward, neuron_forward, neuron_layer_forward, pool_forward,
    Activation, ForwardResult, LayerOutput, ScContext, ScEngine,
};
pub use model::{ConvLayer, FcLayer, Layer, LayerKind, Network, PoolLayer, PoolMode, Shape};
pub use spec::{
    normalize_weights, quantize_bipolar, Calibration, LayerSpec, NetworkSpec, NeuronSpec,
    NormalizeOptions, RngConfig, ScParams,
};
