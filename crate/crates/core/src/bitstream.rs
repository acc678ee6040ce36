//! Packed stochastic bitstreams and the unipolar / bipolar codifications.
//!
//! A [`Bitstream`] holds one bit per clock cycle, 64 cycles per word. Bits
//! past `len` in the last word are always zero, so word-level popcounts are
//! exact without masking at every call site.

use std::fmt;

use crate::error::{Result, ScError};

const WORD_BITS: usize = 64;

#[inline]
pub(crate) fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

#[inline]
fn tail_mask(len: usize) -> u64 {
    match len % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// A fixed-length sequence of booleans, one per clock cycle.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bitstream {
    words: Vec<u64>,
    len: usize,
}

impl Bitstream {
    pub fn zeros(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(ScError::EmptyStream);
        }
        Ok(Self {
            words: vec![0; words_for(len)],
            len,
        })
    }

    pub fn ones(len: usize) -> Result<Self> {
        let mut s = Self::zeros(len)?;
        s.words.iter_mut().for_each(|w| *w = u64::MAX);
        s.clear_tail();
        Ok(s)
    }

    /// Builds a stream whose bit `t` is `f(t)`.
    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Result<Self> {
        let mut s = Self::zeros(len)?;
        for t in 0..len {
            if f(t) {
                s.words[t / WORD_BITS] |= 1 << (t % WORD_BITS);
            }
        }
        Ok(s)
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        Self::from_fn(bits.len(), |t| bits[t])
    }

    /// Wraps raw words; bits beyond `len` are cleared.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(ScError::EmptyStream);
        }
        words.resize(words_for(len), 0);
        let mut s = Self { words, len };
        s.clear_tail();
        Ok(s)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false; streams have at least one cycle.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, t: usize) -> bool {
        assert!(
            t < self.len,
            "cycle {t} out of range for length {}",
            self.len
        );
        self.words[t / WORD_BITS] >> (t % WORD_BITS) & 1 == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |t| self.get(t))
    }

    #[inline]
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn count_zeros(&self) -> usize {
        self.len - self.count_ones()
    }

    /// Fraction of ones (the unipolar reading).
    pub fn mean(&self) -> f64 {
        self.count_ones() as f64 / self.len as f64
    }

    pub fn not(&self) -> Self {
        let mut out = Self {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        out.clear_tail();
        out
    }

    pub(crate) fn check_same_len(&self, other: &Self) -> Result<()> {
        if self.len != other.len {
            return Err(ScError::LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        Ok(())
    }

    /// Word-wise combination of two equal-length streams.
    pub(crate) fn zip_words(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Result<Self> {
        self.check_same_len(other)?;
        let mut out = Self {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            len: self.len,
        };
        out.clear_tail();
        Ok(out)
    }

    #[inline]
    pub(crate) fn words_mut(&mut self) -> &mut [u64] {
        &mut self.words
    }

    #[inline]
    pub(crate) fn clear_tail(&mut self) {
        let mask = tail_mask(self.len);
        if let Some(last) = self.words.last_mut() {
            *last &= mask;
        }
    }
}

impl fmt::Debug for Bitstream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bitstream({}; ", self.len)?;
        for (i, bit) in self.iter().enumerate() {
            if i == 96 {
                write!(f, "...")?;
                break;
            }
            f.write_str(if bit { "1" } else { "0" })?;
        }
        write!(f, ")")
    }
}

/// How a stream's fraction of ones maps to a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Codification {
    /// p = N1 / N, in [0, 1].
    Unipolar,
    /// p* = (N1 - N0) / N = 2p - 1, in [-1, 1].
    Bipolar,
}

/// Reads a stream back as a number by counting ones.
pub fn decode(stream: &Bitstream, codification: Codification) -> f64 {
    let ones = stream.count_ones() as i64;
    let len = stream.len() as i64;
    match codification {
        Codification::Unipolar => ones as f64 / len as f64,
        Codification::Bipolar => (2 * ones - len) as f64 / len as f64,
    }
}

/// A quantized magnitude with its codification.
///
/// `raw` is a level in `[0, 2^width - 1]`. With the `>=` comparator a full
/// LFSR period turns level `raw` into exactly `raw` ones out of `2^width - 1`
/// cycles, so the decoded value below is what the hardware reads back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StochasticValue {
    raw: u32,
    codification: Codification,
    width: u32,
}

impl StochasticValue {
    pub fn new(raw: u32, codification: Codification, width: u32) -> Result<Self> {
        check_width(width)?;
        if raw > max_level(width) {
            return Err(ScError::LevelOutOfRange { raw, width });
        }
        Ok(Self {
            raw,
            codification,
            width,
        })
    }

    /// Nearest level to a real value; values outside the codification's
    /// range are rejected.
    pub fn from_real(value: f64, codification: Codification, width: u32) -> Result<Self> {
        check_width(width)?;
        let unit = match codification {
            Codification::Unipolar => value,
            Codification::Bipolar => (value + 1.0) / 2.0,
        };
        if !unit.is_finite() || !(0.0..=1.0).contains(&unit) {
            return Err(ScError::OutOfRange(format!(
                "{value} is not representable as {codification:?}"
            )));
        }
        let raw = (unit * max_level(width) as f64).round() as u32;
        Self::new(raw, codification, width)
    }

    #[inline]
    pub fn raw(&self) -> u32 {
        self.raw
    }

    #[inline]
    pub fn codification(&self) -> Codification {
        self.codification
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    /// The represented number. Computed the same way [`decode`] reads a
    /// full-period stream, so the two agree bit-for-bit.
    pub fn decoded(&self) -> f64 {
        let max = max_level(self.width) as i64;
        let raw = self.raw as i64;
        match self.codification {
            Codification::Unipolar => raw as f64 / max as f64,
            Codification::Bipolar => (2 * raw - max) as f64 / max as f64,
        }
    }
}

/// Largest level at `width` bits, `2^width - 1`. Also the LFSR period.
#[inline]
pub fn max_level(width: u32) -> u32 {
    ((1u64 << width) - 1) as u32
}

pub(crate) fn check_width(width: u32) -> Result<()> {
    if !(2..=24).contains(&width) {
        return Err(ScError::OutOfRange(format!(
            "width {width} outside supported range 2..=24"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_paper_examples() {
        let four = Bitstream::from_bits(&[true, true, false, true]).unwrap();
        assert_eq!(decode(&four, Codification::Unipolar), 0.75);
        let eight =
            Bitstream::from_bits(&[false, true, true, false, true, true, true, true]).unwrap();
        assert_eq!(decode(&eight, Codification::Unipolar), 0.75);
        assert_eq!(decode(&eight, Codification::Bipolar), 0.5);
    }

    #[test]
    fn all_ones_bipolar_is_plus_one() {
        let s = Bitstream::ones(255).unwrap();
        assert_eq!(decode(&s, Codification::Bipolar), 1.0);
        assert_eq!(decode(&s.not(), Codification::Bipolar), -1.0);
    }

    #[test]
    fn empty_stream_rejected() {
        assert!(matches!(Bitstream::zeros(0), Err(ScError::EmptyStream)));
        assert!(matches!(
            Bitstream::from_bits(&[]),
            Err(ScError::EmptyStream)
        ));
    }

    #[test]
    fn tail_bits_stay_clear() {
        let s = Bitstream::ones(70).unwrap();
        assert_eq!(s.count_ones(), 70);
        assert_eq!(s.not().count_ones(), 0);
        let w = Bitstream::from_words(vec![u64::MAX, u64::MAX], 65).unwrap();
        assert_eq!(w.count_ones(), 65);
    }

    #[test]
    fn get_matches_from_fn() {
        let s = Bitstream::from_fn(130, |t| t % 3 == 0).unwrap();
        assert!(s.iter().enumerate().all(|(t, b)| b == (t % 3 == 0)));
        assert_eq!(s.count_ones(), 44);
    }

    #[test]
    fn stochastic_value_ranges() {
        let v = StochasticValue::new(255, Codification::Bipolar, 8).unwrap();
        assert_eq!(v.decoded(), 1.0);
        let z = StochasticValue::new(0, Codification::Bipolar, 8).unwrap();
        assert_eq!(z.decoded(), -1.0);
        let u = StochasticValue::new(51, Codification::Unipolar, 8).unwrap();
        assert_eq!(u.decoded(), 0.2);
        assert!(StochasticValue::new(256, Codification::Unipolar, 8).is_err());
        assert!(StochasticValue::from_real(1.5, Codification::Unipolar, 8).is_err());
        assert!(StochasticValue::from_real(f64::NAN, Codification::Bipolar, 8).is_err());
    }

    #[test]
    fn bipolar_zero_is_one_level_off() {
        // 255 levels are odd: the nearest level to 0* reads back as +1/255.
        let z = StochasticValue::from_real(0.0, Codification::Bipolar, 8).unwrap();
        assert_eq!(z.raw(), 128);
        assert!((z.decoded() - 1.0 / 255.0).abs() < 1e-15);
    }
}
