//! The bundled LeNet-5 weights and MNIST subset.

use std::path::PathBuf;
use std::sync::OnceLock;

use sc_cnn::batch::{float_forward_all, map_sequential, sc_forward_all, select_weight_seed};
use sc_cnn::io::{load_weights, save_weights, Dataset};
use sc_cnn::nn::{argmax, normalize_weights, Network, NormalizeOptions, ScEngine, ScParams};
use sc_cnn::reference::{calibrate_quantile, float_forward_trace};
use sc_cnn::{correlation, decode, Codification};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn dataset(name: &str, n: usize) -> Dataset {
    let dir = data_dir().join("mnist-1k");
    Dataset::load(
        dir.join(format!("{name}-images-idx3-ubyte")),
        dir.join(format!("{name}-labels-idx1-ubyte")),
    )
    .unwrap()
    .truncated(n)
    .padded(32)
    .unwrap()
}

fn lenet() -> Network {
    load_weights(data_dir().join("lenet5")).unwrap()
}

/// Equalized network, quantile gains and selected `R_w`, as `--calibrate`
/// sets them up.
struct Calibrated {
    net: Network,
    params: ScParams,
    options: NormalizeOptions,
    test: Dataset,
    float_pred: Vec<usize>,
}

fn calibrate_at(width: u32) -> Calibrated {
    let net = lenet().equalized();
    let calib = dataset("calib", 200);
    let tensors: Vec<_> = (0..calib.len()).map(|i| calib.bipolar(i)).collect();
    let options = NormalizeOptions {
        calibration: Some(calibrate_quantile(&net, &tensors, 0.99).unwrap()),
        ..NormalizeOptions::default()
    };
    let mut params = ScParams::for_width(width).unwrap();
    params.r_w.seed = select_weight_seed(&net, params, &options, &calib, 4, 0)
        .unwrap()
        .0;
    let test = dataset("t1k", 100);
    let float_pred = float_forward_all(&net, &test, 0)
        .unwrap()
        .iter()
        .map(|l| argmax(l))
        .collect();
    Calibrated {
        net,
        params,
        options,
        test,
        float_pred,
    }
}

fn calibrated() -> &'static Calibrated {
    static SETUP: OnceLock<Calibrated> = OnceLock::new();
    SETUP.get_or_init(|| calibrate_at(8))
}

fn agreement(setup: &Calibrated, options: &NormalizeOptions) -> f64 {
    let spec = normalize_weights(&setup.net, setup.params, options).unwrap();
    let sc = sc_forward_all(&ScEngine::new(spec).unwrap(), &setup.test, 0).unwrap();
    let agree = sc
        .iter()
        .zip(&setup.float_pred)
        .filter(|(r, &f)| r.predicted == f)
        .count();
    agree as f64 / sc.len() as f64
}

/// Rescaling a hidden layer's activations leaves the float argmax alone.
/// At 8 bits the first conv layer has no precision to spare (one bit
/// less, or a saturated tail, costs a few images), so this runs at 10.
#[test]
fn argmax_survives_rescaled_hidden_layers() {
    let setup = &calibrate_at(10);
    let hidden: Vec<usize> = (0..setup.net.layers.len() - 1)
        .filter(|&i| setup.net.layers[i].has_neurons())
        .collect();
    assert!(agreement(setup, &setup.options) >= 0.95);
    for &layer in &hidden {
        for c in [0.5, 2.0] {
            let mut multipliers = vec![1.0; setup.net.layers.len()];
            multipliers[layer] = c;
            let options = NormalizeOptions {
                scale_multipliers: multipliers,
                ..setup.options.clone()
            };
            let a = agreement(setup, &options);
            assert!(a >= 0.95, "layer {layer} c={c}: agreement {a}");
        }
    }
}

/// Eq. (1) divides by `min(x, y) - xy`, so when a mean sits within a few
/// counts of 0 or 1 a single count of covariance swings the factor past
/// 1. The bound is checked where that headroom is at least 0.05.
#[test]
fn activations_decorrelated_from_next_weights() {
    const HEADROOM: f64 = 0.05;
    let setup = calibrated();
    let spec = normalize_weights(&setup.net, setup.params, &setup.options).unwrap();
    let engine = ScEngine::new(spec).unwrap();
    let ctx = engine.context();
    let width = setup.params.width;
    let (mut all, mut clear) = (Vec::new(), Vec::new());
    for i in 0..5 {
        let (_, trace) = engine.forward_traced(&setup.test.levels(i, width)).unwrap();
        for (l, streams) in trace.iter().enumerate() {
            let Some(next) = engine.spec().layers[l + 1..]
                .iter()
                .find(|s| s.has_neurons())
            else {
                continue;
            };
            let mut levels: Vec<u32> = next
                .neurons
                .iter()
                .flat_map(|n| n.weights.clone())
                .collect();
            levels.sort_unstable();
            levels.dedup();
            let mut seen = std::collections::HashSet::new();
            for s in streams.iter().filter(|s| seen.insert(s.count_ones())) {
                for &w in &levels {
                    let c = correlation(s, ctx.weight(w)).unwrap();
                    let Some(v) = c.value else { continue };
                    let (x, y) = c.means;
                    all.push(v.abs());
                    if x.min(y) - x * y >= HEADROOM {
                        clear.push(v.abs());
                    }
                }
            }
        }
    }
    assert!(clear.len() > 100_000, "{}", clear.len());
    let worst = clear.iter().fold(0.0f64, |m, &v| m.max(v));
    assert!(worst < 0.15, "max |C| = {worst}");
    all.sort_by(f64::total_cmp);
    assert!(
        all[all.len() / 2] < 0.05,
        "median |C| = {}",
        all[all.len() / 2]
    );
}

#[test]
fn max_pool_matches_float() {
    let net = lenet();
    let test = dataset("t1k", 20);
    let spec = normalize_weights(&net, ScParams::default(), &NormalizeOptions::default()).unwrap();
    let engine = ScEngine::new(spec.clone()).unwrap();
    let mut errors = Vec::new();
    for i in 0..test.len() {
        let (result, trace) = engine.forward_traced(&test.levels(i, 8)).unwrap();
        let float = float_forward_trace(&test.bipolar(i), &net).unwrap();
        for (l, layer) in spec.layers.iter().enumerate() {
            if layer.has_neurons() || result.saturations[..l].iter().any(|&s| s > 0) {
                continue;
            }
            let k = layer.input_scale;
            for (s, f) in trace[l].iter().zip(&float[l].output) {
                errors.push((decode(s, Codification::Bipolar) - f * k).abs());
            }
        }
    }
    assert!(!errors.is_empty());
    errors.sort_by(f64::total_cmp);
    let p90 = errors[((errors.len() - 1) as f64 * 0.9).round() as usize];
    assert!(p90 <= 0.1, "p90 {p90}");
}

#[test]
fn batch_results_independent_of_workers() {
    let setup = calibrated();
    let spec = normalize_weights(&setup.net, setup.params, &setup.options).unwrap();
    let engine = ScEngine::new(spec).unwrap();
    let data = setup.test.clone().truncated(24);
    let one = sc_forward_all(&engine, &data, 1).unwrap();
    let many = sc_forward_all(&engine, &data, 4).unwrap();
    let seq = map_sequential(data.len(), |i| engine.forward(&data.levels(i, 8))).unwrap();
    for ((a, b), c) in one.iter().zip(&many).zip(&seq) {
        assert_eq!(a.apc_sums, b.apc_sums);
        assert_eq!(a.apc_sums, c.apc_sums);
        assert_eq!(a.saturations, b.saturations);
    }
}

#[test]
fn weights_round_trip_bit_identical() {
    let net = lenet();
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_weights(&net, dir.path()).unwrap();
    assert_eq!(load_weights(&manifest).unwrap(), net);
    let original = std::fs::read(data_dir().join("lenet5/conv1.weight.f32")).unwrap();
    let saved = std::fs::read(dir.path().join("layer0.weight.f32")).unwrap();
    assert_eq!(original, saved);
    let again = tempfile::tempdir().unwrap();
    save_weights(&load_weights(&manifest).unwrap(), again.path()).unwrap();
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(dir.path().join(&name)).unwrap(),
            std::fs::read(again.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn bundled_weights_are_accurate() {
    let net = lenet();
    let test = dataset("t1k", 1000);
    let float = float_forward_all(&net, &test, 0).unwrap();
    let correct = float
        .iter()
        .zip(test.labels())
        .filter(|(l, &y)| argmax(l) == y as usize)
        .count();
    assert!(correct >= 980, "{correct}/1000");
}
