//! Bit-exact simulator for fully-parallel stochastic-computing CNN hardware.
//!
//! The stack, bottom up:
//!
//! * [`bitstream`], [`lfsr`], [`correlation`]: streams, generators,
//!   binary-to-stochastic conversion and the correlation factor.
//! * [`gates`]: AND / OR / XNOR, the multiplexer and APC adders, and the
//!   closed-form correlation-dependent gate outputs.
//! * [`nn`]: the correlation-exploiting neuron (XNOR array, APC,
//!   re-conversion, OR-gate ReLU), layers, and the two-LFSR network engine.
//! * [`reference`]: floating-point oracle and accuracy comparison.
//! * [`io`]: MNIST IDX files and the weight manifest.

pub mod batch;
pub mod bitstream;
pub mod correlation;
pub mod error;
pub mod gates;
pub mod io;
pub mod lfsr;
pub mod nn;
pub mod reference;

pub use bitstream::{decode, max_level, Bitstream, Codification, StochasticValue};
pub use correlation::{correlation, CorrelationEstimate};
pub use error::{Result, ScError};
pub use gates::{
    apc_sum, apc_xnor_sum, gate_and, gate_mux, gate_or, gate_xnor, predict_gate, ApcAccumulator,
    Gate,
};
pub use lfsr::{default_taps, encode, reciprocal_taps, Encoder, Lfsr};
