//! Stochastic logic gates and adders.

use crate::bitstream::Bitstream;
use crate::correlation::lower_bound;
use crate::error::{Result, ScError};
use crate::lfsr::Lfsr;

/// Bitwise AND. Decorrelated inputs multiply (unipolar); totally correlated
/// inputs give the minimum.
pub fn gate_and(x: &Bitstream, y: &Bitstream) -> Result<Bitstream> {
    x.zip_words(y, |a, b| a & b)
}

/// Bitwise OR. Totally correlated inputs give the maximum.
pub fn gate_or(x: &Bitstream, y: &Bitstream) -> Result<Bitstream> {
    x.zip_words(y, |a, b| a | b)
}

/// Bitwise XNOR: bipolar multiplication for decorrelated inputs.
pub fn gate_xnor(x: &Bitstream, y: &Bitstream) -> Result<Bitstream> {
    x.zip_words(y, |a, b| !(a ^ b))
}

/// OR over any number of streams (max under total correlation).
pub fn or_all(inputs: &[&Bitstream]) -> Result<Bitstream> {
    fold_all(inputs, |a, b| a | b)
}

/// AND over any number of streams (min under total correlation).
pub fn and_all(inputs: &[&Bitstream]) -> Result<Bitstream> {
    fold_all(inputs, |a, b| a & b)
}

fn fold_all(inputs: &[&Bitstream], f: impl Fn(u64, u64) -> u64) -> Result<Bitstream> {
    let (first, rest) = inputs
        .split_first()
        .ok_or(ScError::TooFewInputs { min: 1, got: 0 })?;
    let mut out = (*first).clone();
    for s in rest {
        out.check_same_len(s)?;
        for (o, w) in out.words_mut().iter_mut().zip(s.words()) {
            *o = f(*o, *w);
        }
    }
    Ok(out)
}

/// Number of selector bits needed to address `k` inputs.
fn select_bits(k: usize) -> u32 {
    usize::BITS - (k - 1).leading_zeros()
}

/// Multiplexer scaled adder: each cycle forwards one input picked by the
/// top `ceil(log2 k)` bits of the selector LFSR (folded modulo `k` when `k`
/// is not a power of two). Decodes to roughly the mean of the inputs.
pub fn gate_mux(inputs: &[&Bitstream], select_rng: Lfsr) -> Result<Bitstream> {
    let k = inputs.len();
    if k < 2 {
        return Err(ScError::TooFewInputs { min: 2, got: k });
    }
    let len = inputs[0].len();
    for s in &inputs[1..] {
        inputs[0].check_same_len(s)?;
    }
    let bits = select_bits(k);
    if bits > select_rng.width() {
        return Err(ScError::OutOfRange(format!(
            "{k} inputs need {bits} selector bits, generator has {}",
            select_rng.width()
        )));
    }
    let shift = select_rng.width() - bits;
    let selectors = select_rng.sequence(len);
    Bitstream::from_fn(len, |t| {
        let idx = (selectors[t] >> shift) as usize % k;
        inputs[idx].get(t)
    })
}

/// Output of an accumulative parallel counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApcAccumulator {
    pub fan_in: usize,
    /// Ones counted over all inputs and cycles.
    pub total: i64,
    pub cycles: usize,
}

impl ApcAccumulator {
    pub fn new(fan_in: usize, cycles: usize) -> Self {
        Self {
            fan_in,
            total: 0,
            cycles,
        }
    }

    /// Adds one cycle's worth of parallel inputs.
    pub fn clock(&mut self, bits: impl IntoIterator<Item = bool>) {
        self.total += bits.into_iter().filter(|&b| b).count() as i64;
    }

    /// `sum_j (2 ones_j - L)`: the bipolar sum in units of one cycle.
    #[inline]
    pub fn bipolar_sum(&self) -> i64 {
        2 * self.total - (self.fan_in * self.cycles) as i64
    }

    /// Bipolar sum with the signed output register clamped to `bits` bits,
    /// for modelling a finite adder tree.
    pub fn bipolar_sum_saturating(&self, bits: u32) -> i64 {
        let hi = (1i64 << (bits - 1)) - 1;
        self.bipolar_sum().clamp(-hi - 1, hi)
    }

    /// The decoded sum of bipolar inputs, `sum_j x*_j`.
    #[inline]
    pub fn bipolar_value(&self) -> f64 {
        self.bipolar_sum() as f64 / self.cycles as f64
    }

    /// The decoded sum of unipolar inputs.
    #[inline]
    pub fn unipolar_value(&self) -> f64 {
        self.total as f64 / self.cycles as f64
    }
}

/// Exact population count across `n` parallel streams over all cycles.
pub fn apc_sum(inputs: &[&Bitstream]) -> Result<ApcAccumulator> {
    let first = inputs
        .first()
        .ok_or(ScError::TooFewInputs { min: 1, got: 0 })?;
    let mut acc = ApcAccumulator::new(inputs.len(), first.len());
    for s in inputs {
        first.check_same_len(s)?;
        acc.total += s.count_ones() as i64;
    }
    Ok(acc)
}

/// APC fed by an XNOR array: `sum_j popcount(xnor(x_j, w_j))`, without
/// materializing the product streams.
pub fn apc_xnor_sum(xs: &[&Bitstream], ws: &[&Bitstream]) -> Result<ApcAccumulator> {
    if xs.len() != ws.len() {
        return Err(ScError::FanInMismatch {
            expected: ws.len(),
            got: xs.len(),
        });
    }
    let first = xs.first().ok_or(ScError::TooFewInputs { min: 1, got: 0 })?;
    let len = first.len();
    let mut differ = 0i64;
    for (x, w) in xs.iter().zip(ws) {
        first.check_same_len(x)?;
        first.check_same_len(w)?;
        differ += x
            .words()
            .iter()
            .zip(w.words())
            .map(|(a, b)| (a ^ b).count_ones() as i64)
            .sum::<i64>();
    }
    Ok(ApcAccumulator {
        fan_in: xs.len(),
        total: (xs.len() * len) as i64 - differ,
        cycles: len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    And,
    Or,
}

/// Closed-form mean output of a two-input AND/OR gate given the input means
/// and their correlation factor. An undefined correlation (a constant
/// input) contributes nothing: the correction term vanishes there.
pub fn predict_gate(x_mean: f64, y_mean: f64, c: Option<f64>, gate: Gate) -> Result<f64> {
    for m in [x_mean, y_mean] {
        if !(0.0..=1.0).contains(&m) {
            return Err(ScError::OutOfRange(format!("mean {m} outside [0, 1]")));
        }
    }
    let product = x_mean * y_mean;
    let headroom = x_mean.min(y_mean) - product;
    let c = c.unwrap_or(0.0);
    // Tolerate float noise at the ends of the feasible range.
    const EPS: f64 = 1e-9;
    let lo = lower_bound(x_mean, y_mean).unwrap_or(-1.0).min(-1.0);
    if !c.is_finite() || c > 1.0 + EPS || c < lo - EPS {
        return Err(ScError::OutOfRange(format!(
            "correlation {c} infeasible for means ({x_mean}, {y_mean})"
        )));
    }
    Ok(match gate {
        Gate::And => product + headroom * c,
        Gate::Or => x_mean + y_mean - product - headroom * c,
    })
}
