//! Fibonacci LFSRs and the comparator-based binary-to-stochastic converter.
//!
//! Register convention: the state shifts left by one each step and the new
//! low bit is the parity of `state & taps`. A polynomial
//! `x^w + ... + x^e + ... + 1` is written as a mask with bit `e - 1` set for
//! every non-constant term, so `x^8 + x^6 + x^5 + x^4 + 1` is `0xB8`. The
//! value emitted by a step is the new state.

use crate::bitstream::{check_width, max_level, words_for, Bitstream, StochasticValue};
use crate::error::{Result, ScError};

/// Default maximal-length feedback masks for widths 3..=16.
const DEFAULT_TAPS: [(u32, u32); 14] = [
    (3, 0x6),     // x^3 + x^2 + 1
    (4, 0xC),     // x^4 + x^3 + 1
    (5, 0x14),    // x^5 + x^3 + 1
    (6, 0x30),    // x^6 + x^5 + 1
    (7, 0x60),    // x^7 + x^6 + 1
    (8, 0xB8),    // x^8 + x^6 + x^5 + x^4 + 1
    (9, 0x110),   // x^9 + x^5 + 1
    (10, 0x240),  // x^10 + x^7 + 1
    (11, 0x500),  // x^11 + x^9 + 1
    (12, 0xE08),  // x^12 + x^11 + x^10 + x^4 + 1
    (13, 0x1C80), // x^13 + x^12 + x^11 + x^8 + 1
    (14, 0x3802), // x^14 + x^13 + x^12 + x^2 + 1
    (15, 0x6000), // x^15 + x^14 + 1
    (16, 0xD008), // x^16 + x^15 + x^13 + x^4 + 1
];

/// The documented default maximal polynomial for `width`.
pub fn default_taps(width: u32) -> Option<u32> {
    DEFAULT_TAPS
        .iter()
        .find(|(w, _)| *w == width)
        .map(|&(_, taps)| taps)
}

/// Mask of the reciprocal polynomial. The reciprocal of a primitive
/// polynomial is primitive, so this gives a second maximal generator with
/// a different sequence.
pub fn reciprocal_taps(taps: u32, width: u32) -> u32 {
    // exponents e in taps (bit e-1) map to w - e; x^w maps to itself and the
    // old x^w becomes the constant term.
    let mut out = 1 << (width - 1);
    for e in 1..width {
        if taps >> (e - 1) & 1 == 1 {
            out |= 1 << (width - e - 1);
        }
    }
    out
}

/// A linear feedback shift register. The all-zero state is unreachable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lfsr {
    state: u32,
    width: u32,
    taps: u32,
}

impl Lfsr {
    pub fn new(width: u32, taps: u32, seed: u32) -> Result<Self> {
        check_width(width)?;
        let mask = max_level(width);
        if taps == 0 || taps & !mask != 0 || taps >> (width - 1) & 1 == 0 {
            return Err(ScError::InvalidLfsr(format!(
                "taps {taps:#x} must include x^{width} and fit in {width} bits"
            )));
        }
        if seed & !mask != 0 {
            return Err(ScError::InvalidLfsr(format!(
                "seed {seed:#x} does not fit in {width} bits"
            )));
        }
        if seed == 0 {
            return Err(ScError::ZeroState);
        }
        Ok(Self {
            state: seed,
            width,
            taps,
        })
    }

    /// Register with the default polynomial for `width`.
    pub fn with_default_taps(width: u32, seed: u32) -> Result<Self> {
        let taps = default_taps(width).ok_or_else(|| {
            ScError::InvalidLfsr(format!("no default polynomial for width {width}"))
        })?;
        Self::new(width, taps, seed)
    }

    #[inline]
    pub fn state(&self) -> u32 {
        self.state
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn taps(&self) -> u32 {
        self.taps
    }

    /// Advances one clock. Returns the next register and the emitted value,
    /// which lies in `[1, 2^width - 1]`.
    #[inline]
    #[must_use]
    pub fn step(self) -> (Self, u32) {
        let feedback = (self.state & self.taps).count_ones() & 1;
        let state = ((self.state << 1) | feedback) & max_level(self.width);
        (Self { state, ..self }, state)
    }

    /// The next `n` emitted values, starting from this state.
    pub fn sequence(self, n: usize) -> Vec<u32> {
        let mut lfsr = self;
        (0..n)
            .map(|_| {
                let (next, value) = lfsr.step();
                lfsr = next;
                value
            })
            .collect()
    }

    /// State reached after `n` steps.
    pub fn advance(self, n: usize) -> Self {
        (0..n).fold(self, |l, _| l.step().0)
    }

    /// Steps until the starting state recurs. `O(2^width)`.
    pub fn period(self) -> u64 {
        let start = self.state;
        let mut lfsr = self;
        let mut n = 0u64;
        loop {
            lfsr = lfsr.step().0;
            n += 1;
            if lfsr.state == start || n > max_level(self.width) as u64 {
                return n;
            }
        }
    }

    pub fn is_maximal(self) -> bool {
        self.period() == max_level(self.width) as u64
    }
}

/// Precomputed comparator sequence `R(t)` for one generator and length.
///
/// Encoding the same level twice yields the same stream, which is what lets
/// streams sharing a generator be totally correlated.
#[derive(Debug, Clone)]
pub struct Encoder {
    rng: Vec<u32>,
    width: u32,
}

impl Encoder {
    pub fn new(lfsr: Lfsr, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(ScError::EmptyStream);
        }
        Ok(Self {
            rng: lfsr.sequence(length),
            width: lfsr.width(),
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rng.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.rng.is_empty()
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn rng_values(&self) -> &[u32] {
        &self.rng
    }

    /// Bit `t` is set iff `raw >= R(t)`.
    pub fn encode_level(&self, raw: u32) -> Bitstream {
        let mut words = vec![0u64; words_for(self.rng.len())];
        for (w, chunk) in words.iter_mut().zip(self.rng.chunks(64)) {
            let mut acc = 0u64;
            for (i, &r) in chunk.iter().enumerate() {
                acc |= ((raw >= r) as u64) << i;
            }
            *w = acc;
        }
        Bitstream::from_words(words, self.rng.len()).expect("encoder length is nonzero")
    }

    pub fn encode(&self, value: &StochasticValue) -> Result<Bitstream> {
        if value.width() != self.width {
            return Err(ScError::WidthMismatch {
                value: value.width(),
                generator: self.width,
            });
        }
        Ok(self.encode_level(value.raw()))
    }
}

/// Binary-to-stochastic conversion: compares `value` against `length`
/// successive outputs of `rng`.
pub fn encode(value: &StochasticValue, rng: Lfsr, length: usize) -> Result<Bitstream> {
    if value.width() != rng.width() {
        return Err(ScError::WidthMismatch {
            value: value.width(),
            generator: rng.width(),
        });
    }
    Ok(Encoder::new(rng, length)?.encode_level(value.raw()))
}

/// Encodes a level into a stream for each of `levels`, all with one shared
/// generator.
pub fn encode_all(levels: &[u32], encoder: &Encoder) -> Vec<Bitstream> {
    levels.iter().map(|&l| encoder.encode_level(l)).collect()
}
