//! Stochastic-computing correlation factor between two streams.

use crate::bitstream::Bitstream;
use crate::error::{Result, ScError};

/// Measured correlation between two streams.
///
/// `value` is `Cov(x, y) / (min(x̄, ȳ) - x̄ȳ)` with the population covariance
/// over all cycles. It is `None` when the denominator vanishes, which
/// happens exactly when a mean is 0 or 1 (or both means are equal to 0/1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub value: Option<f64>,
    pub covariance: f64,
    pub means: (f64, f64),
}

impl CorrelationEstimate {
    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }

    /// Smallest value the factor can take for these means. The denominator
    /// only measures headroom above independence, so for skewed means the
    /// factor can go below -1 (it never exceeds +1).
    pub fn lower_bound(&self) -> Option<f64> {
        lower_bound(self.means.0, self.means.1)
    }
}

pub(crate) fn lower_bound(x: f64, y: f64) -> Option<f64> {
    let denom = x.min(y) - x * y;
    (denom > 0.0).then(|| ((x + y - 1.0).max(0.0) - x * y) / denom)
}

/// Computes the correlation factor of two equal-length streams.
pub fn correlation(x: &Bitstream, y: &Bitstream) -> Result<CorrelationEstimate> {
    x.check_same_len(y)?;
    if x.len() < 2 {
        return Err(ScError::OutOfRange(
            "correlation needs at least two cycles".into(),
        ));
    }
    let len = x.len() as f64;
    let ones_x = x.count_ones();
    let ones_y = y.count_ones();
    let both: usize = x
        .words()
        .iter()
        .zip(y.words())
        .map(|(a, b)| (a & b).count_ones() as usize)
        .sum();
    let mx = ones_x as f64 / len;
    let my = ones_y as f64 / len;
    // Cov = E[xy] - x̄ȳ, kept in integer counts until the final division so
    // that Cov == denominator exactly when one support nests in the other.
    let n = x.len() as i128;
    let cov_num = both as i128 * n - ones_x as i128 * ones_y as i128;
    let den_num = ones_x.min(ones_y) as i128 * n - ones_x as i128 * ones_y as i128;
    let covariance = cov_num as f64 / (n * n) as f64;
    let value = (den_num != 0).then(|| cov_num as f64 / den_num as f64);
    Ok(CorrelationEstimate {
        value,
        covariance,
        means: (mx, my),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstream::{Codification, StochasticValue};
    use crate::lfsr::{encode, reciprocal_taps, Lfsr};

    fn unipolar(raw: u32) -> StochasticValue {
        StochasticValue::new(raw, Codification::Unipolar, 8).unwrap()
    }

    #[test]
    fn self_correlation_is_one() {
        let x = Bitstream::from_fn(100, |t| t % 7 < 3).unwrap();
        assert_eq!(correlation(&x, &x).unwrap().value, Some(1.0));
    }

    #[test]
    fn shared_generator_is_one() {
        let lfsr = Lfsr::with_default_taps(8, 1).unwrap();
        let x = encode(&unipolar(100), lfsr, 255).unwrap();
        let y = encode(&unipolar(200), lfsr, 255).unwrap();
        assert_eq!(correlation(&x, &y).unwrap().value, Some(1.0));
    }

    #[test]
    fn independent_generators_are_nearly_uncorrelated() {
        let a = Lfsr::with_default_taps(8, 1).unwrap();
        let b = Lfsr::new(8, reciprocal_taps(0xB8, 8), 0x5A).unwrap();
        let x = encode(&unipolar(128), a, 255).unwrap();
        let y = encode(&unipolar(128), b, 255).unwrap();
        let c = correlation(&x, &y).unwrap().value.unwrap();
        assert!(c.abs() < 0.15, "C = {c}");
    }

    #[test]
    fn constant_stream_is_undefined() {
        let x = Bitstream::zeros(64).unwrap();
        let y = Bitstream::from_fn(64, |t| t % 2 == 0).unwrap();
        let est = correlation(&x, &y).unwrap();
        assert!(!est.is_defined());
        assert_eq!(est.covariance, 0.0);
        let ones = Bitstream::ones(64).unwrap();
        assert!(!correlation(&ones, &y).unwrap().is_defined());
    }

    #[test]
    fn length_errors() {
        let x = Bitstream::zeros(10).unwrap();
        let y = Bitstream::zeros(11).unwrap();
        assert!(matches!(
            correlation(&x, &y),
            Err(ScError::LengthMismatch { .. })
        ));
        let one = Bitstream::ones(1).unwrap();
        assert!(correlation(&one, &one).is_err());
    }

    #[test]
    fn anti_nested_streams_can_fall_below_minus_one() {
        // x̄ = 0.1, ȳ = 0.9 with disjoint supports: Cov = -0.09, denom 0.01.
        let x = Bitstream::from_fn(10, |t| t == 0).unwrap();
        let y = Bitstream::from_fn(10, |t| t != 0).unwrap();
        let est = correlation(&x, &y).unwrap();
        let c = est.value.unwrap();
        assert!((c + 9.0).abs() < 1e-12);
        assert!((est.lower_bound().unwrap() + 9.0).abs() < 1e-12);
    }
}
