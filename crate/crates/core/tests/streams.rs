//! Properties of streams, generators, correlation and gates.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sc_cnn::{
    apc_sum, apc_xnor_sum, correlation, decode, default_taps, gate_and, gate_mux, gate_or,
    gate_xnor, max_level, predict_gate, Bitstream, Codification, Encoder, Gate, Lfsr,
    StochasticValue,
};

fn lfsr(width: u32, seed: u32) -> Lfsr {
    Lfsr::new(width, default_taps(width).unwrap(), seed).unwrap()
}

fn full_period(width: u32, seed: u32) -> Encoder {
    Encoder::new(lfsr(width, seed), max_level(width) as usize).unwrap()
}

fn random_stream(rng: &mut impl Rng, len: usize, p: f64) -> Bitstream {
    Bitstream::from_fn(len, |_| rng.gen_bool(p)).unwrap()
}

#[test]
fn full_period_decoding_is_exact() {
    for width in 4..=8 {
        let enc = full_period(width, 1);
        for raw in 0..=max_level(width) {
            let s = enc.encode_level(raw);
            for cod in [Codification::Unipolar, Codification::Bipolar] {
                let v = StochasticValue::new(raw, cod, width).unwrap();
                assert_eq!(decode(&s, cod), v.decoded(), "width {width} raw {raw}");
            }
        }
    }
}

#[test]
fn lfsr_period_is_a_permutation() {
    for width in 4..=16 {
        let m = max_level(width) as usize;
        let mut seen = vec![false; m + 1];
        for v in lfsr(width, 1).sequence(m) {
            assert!(!seen[v as usize], "width {width}: {v} repeated");
            seen[v as usize] = true;
        }
        assert!(!seen[0] && seen[1..].iter().all(|&b| b), "width {width}");
        assert_eq!(lfsr(width, 1).advance(m).state(), 1);
    }
}

proptest! {
    #[test]
    fn shared_generator_nests(width in 4u32..=10, seed in 1u32..16, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let m = max_level(width);
        let seed = 1 + seed % m;
        let (lo, hi) = {
            let (x, y) = ((a * m as f64) as u32, (b * m as f64) as u32);
            (x.min(y), x.max(y))
        };
        let enc = Encoder::new(lfsr(width, seed), 3 * m as usize / 2).unwrap();
        let (x, y) = (enc.encode_level(lo), enc.encode_level(hi));
        prop_assert_eq!(gate_and(&x, &y).unwrap(), x.clone());
        prop_assert_eq!(gate_or(&x, &y).unwrap(), y.clone());
    }

    #[test]
    fn correlation_at_most_one(len in 2usize..600, p in 0.0f64..=1.0, q in 0.0f64..=1.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = (random_stream(&mut rng, len, p), random_stream(&mut rng, len, q));
        let c = correlation(&x, &y).unwrap();
        if let Some(v) = c.value {
            prop_assert!(v <= 1.0 + 1e-12, "{v}");
            prop_assert!(v >= c.lower_bound().unwrap() - 1e-12, "{v}");
        } else {
            let (mx, my) = c.means;
            prop_assert!(mx == 0.0 || mx == 1.0 || my == 0.0 || my == 1.0);
        }
    }

    #[test]
    fn shared_generator_correlation_is_one(x in 1u32..255, y in 1u32..255) {
        let enc = full_period(8, 1);
        let c = correlation(&enc.encode_level(x), &enc.encode_level(y)).unwrap();
        if x != y {
            prop_assert_eq!(c.value, Some(1.0));
        }
    }

    #[test]
    fn gates_match_prediction(width in 5u32..=9, x in 0.0f64..=1.0, y in 0.0f64..=1.0, shared: bool) {
        let m = max_level(width);
        let ex = full_period(width, 1);
        let ey = if shared { ex.clone() } else { full_period(width, 1 + m / 3) };
        let (xs, ys) = (ex.encode_level((x * m as f64) as u32), ey.encode_level((y * m as f64) as u32));
        let c = correlation(&xs, &ys).unwrap().value;
        let tol = 2.0 / m as f64;
        for (gate, out) in [(Gate::And, gate_and(&xs, &ys)), (Gate::Or, gate_or(&xs, &ys))] {
            let measured = decode(&out.unwrap(), Codification::Unipolar);
            let predicted = predict_gate(xs.mean(), ys.mean(), c, gate).unwrap();
            prop_assert!((measured - predicted).abs() <= tol, "{gate:?}: {measured} vs {predicted}");
        }
    }

    #[test]
    fn shared_or_is_max_and_and_is_min(x in 0u32..=255, y in 0u32..=255) {
        let enc = full_period(8, 1);
        let (xs, ys) = (enc.encode_level(x), enc.encode_level(y));
        for cod in [Codification::Unipolar, Codification::Bipolar] {
            let (a, b) = (decode(&xs, cod), decode(&ys, cod));
            prop_assert_eq!(decode(&gate_or(&xs, &ys).unwrap(), cod), a.max(b));
            prop_assert_eq!(decode(&gate_and(&xs, &ys).unwrap(), cod), a.min(b));
        }
    }

    #[test]
    fn apc_counts_every_bit(n in 1usize..=64, len in 1usize..=1024, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let streams: Vec<Bitstream> = (0..n)
            .map(|_| {
                let p = rng.gen();
                random_stream(&mut rng, len, p)
            })
            .collect();
        let refs: Vec<&Bitstream> = streams.iter().collect();
        let mut naive = 0i64;
        for s in &streams {
            for t in 0..len {
                naive += s.get(t) as i64;
            }
        }
        let acc = apc_sum(&refs).unwrap();
        prop_assert_eq!(acc.total, naive);
        prop_assert_eq!(acc.bipolar_sum(), 2 * naive - (n * len) as i64);

        let weights: Vec<Bitstream> = (0..n).map(|_| random_stream(&mut rng, len, 0.5)).collect();
        let wrefs: Vec<&Bitstream> = weights.iter().collect();
        let mut agree = 0i64;
        for (x, w) in streams.iter().zip(&weights) {
            for t in 0..len {
                agree += (x.get(t) == w.get(t)) as i64;
            }
        }
        prop_assert_eq!(apc_xnor_sum(&refs, &wrefs).unwrap().total, agree);
    }
}

/// A deterministic pair of generators misses a product by up to a few
/// counts, so the sign is only guaranteed once `|x* y*|` clears that error.
#[test]
fn xnor_keeps_product_sign() {
    const MARGIN: f64 = 0.05;
    let (ex, ey) = (full_period(8, 1), full_period(8, 226));
    let b = Codification::Bipolar;
    let mut checked = 0;
    for x in 0..=255 {
        for y in 0..=255 {
            let (xs, ys) = (ex.encode_level(x), ey.encode_level(y));
            let (a, w) = (decode(&xs, b), decode(&ys, b));
            let c = correlation(&xs, &ys).unwrap().value;
            if (a * w).abs() > MARGIN && c.is_some_and(|c| c.abs() < 0.1) {
                let p = decode(&gate_xnor(&xs, &ys).unwrap(), b);
                assert_eq!(p.signum(), (a * w).signum(), "{a} * {w} -> {p}");
                checked += 1;
            }
        }
    }
    assert!(checked > 30_000, "{checked}");
}

#[test]
fn mux_averages_its_inputs() {
    let enc = full_period(8, 1);
    let levels = [30u32, 100, 180, 250];
    let inputs: Vec<Bitstream> = levels.iter().map(|&l| enc.encode_level(l)).collect();
    let refs: Vec<&Bitstream> = inputs.iter().collect();
    let target = inputs.iter().map(Bitstream::mean).sum::<f64>() / 4.0;
    let selector_taps = sc_cnn::reciprocal_taps(default_taps(8).unwrap(), 8);
    let outs: Vec<f64> = (1..=200u32)
        .map(|seed| {
            let sel = Lfsr::new(8, selector_taps, seed).unwrap();
            gate_mux(&refs, sel).unwrap().mean()
        })
        .collect();
    let n = outs.len() as f64;
    let mean = outs.iter().sum::<f64>() / n;
    let sd = (outs.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    // 99% interval on the mean over selector seeds.
    let half = 2.576 * sd / n.sqrt();
    assert!(
        (mean - target).abs() <= half.max(1e-3),
        "{mean} vs {target} (+-{half})"
    );
}

#[test]
fn independent_products_are_accurate() {
    let (ex, ew) = (full_period(8, 1), full_period(8, 226));
    let mut errors = Vec::new();
    for i in 0..=16u32 {
        for j in 0..=16u32 {
            let (xs, ws) = (
                ex.encode_level((i * 255 + 8) / 16),
                ew.encode_level((j * 255 + 8) / 16),
            );
            let b = Codification::Bipolar;
            let p = decode(&gate_xnor(&xs, &ws).unwrap(), b);
            errors.push((p - decode(&xs, b) * decode(&ws, b)).abs());
        }
    }
    errors.sort_by(f64::total_cmp);
    assert!(errors[((errors.len() - 1) as f64 * 0.95).round() as usize] <= 0.05);
}
