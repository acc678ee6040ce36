use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::info;
use sc_cnn::batch::{float_forward_all, sc_forward_all, select_weight_seed};
use sc_cnn::io::{load_weights, Dataset};
use sc_cnn::lfsr::Encoder;
use sc_cnn::nn::spec::{normalize_weights, NormalizeOptions, ScParams};
use sc_cnn::nn::{argmax, cost_report, Network, NetworkSpec, ScEngine};
use sc_cnn::reference::{calibrate_quantile, degradation_report, float_forward};
use sc_cnn::{correlation, decode, gate_and, gate_or, predict_gate, Codification, Gate};

use crate::config::{describe, RunConfig};
use crate::UsageError;

/// A machine-readable table plus human summary lines.
pub struct Report {
    pub csv: String,
    pub summary: Vec<String>,
}

impl Report {
    fn new(header: &str) -> Self {
        Self {
            csv: format!("{header}\n"),
            summary: Vec::new(),
        }
    }

    fn row(&mut self, fields: &[String]) {
        self.csv.push_str(&fields.join(","));
        self.csv.push('\n');
    }

    fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    /// CSV to `out` (or stdout), summary to stdout.
    pub fn emit(&self, out: Option<&Path>) -> Result<()> {
        let mut stdout = String::new();
        match out {
            Some(path) => std::fs::write(path, &self.csv)
                .with_context(|| format!("writing {}", path.display()))?,
            None => stdout.push_str(&self.csv),
        }
        for line in &self.summary {
            let _ = writeln!(stdout, "# {line}");
        }
        print!("{stdout}");
        Ok(())
    }
}

fn load_network(cfg: &RunConfig) -> Result<Network> {
    let path = cfg.require(&cfg.weights, "weights")?;
    let net = load_weights(path)?;
    Ok(match cfg.pool {
        Some(mode) => net.with_pool_mode(mode),
        None => net,
    })
}

/// Loads a dataset and pads it to the network input unless disabled.
fn fit_dataset(cfg: &RunConfig, data: Dataset, net: &Network) -> Result<Dataset> {
    let input = net.input;
    let data = if !cfg.no_pad
        && input.height == input.width
        && (data.rows(), data.cols()) != (input.height, input.width)
    {
        data.padded(input.height)?
    } else {
        data
    };
    if data.shape() != input {
        bail!(
            "images are {}, network expects {} (padding {})",
            data.shape(),
            input,
            if cfg.no_pad {
                "disabled"
            } else {
                "not applicable"
            }
        );
    }
    Ok(data)
}

fn load_dataset(cfg: &RunConfig, net: &Network) -> Result<Dataset> {
    let images = cfg.require(&cfg.mnist_images, "mnist-images")?;
    let labels = cfg.require(&cfg.mnist_labels, "mnist-labels")?;
    let mut data = Dataset::load(images, labels)?;
    if let Some(limit) = cfg.limit {
        data = data.truncated(limit);
    }
    if data.is_empty() {
        bail!("dataset {} is empty", images.display());
    }
    fit_dataset(cfg, data, net)
}

/// Number of ranked `R_w` phase offsets tried by `--calibrate`.
const SEED_CANDIDATES: usize = 4;

/// The network and generators a run uses.
struct Prepared {
    /// Equalized when calibrating; float logits are compared against this.
    net: Network,
    params: ScParams,
    options: NormalizeOptions,
    notes: Vec<String>,
}

impl Prepared {
    fn spec(&self, params: ScParams) -> Result<NetworkSpec> {
        Ok(normalize_weights(&self.net, params, &self.options)?)
    }
}

/// Loads the network and, with `--calibrate`, equalizes it, sets the
/// activation gains from the held-out set and picks `R_w` among the
/// best-ranked phase offsets by agreement with the float predictions.
fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let mut params = cfg.params().map_err(UsageError::wrap)?;
    let net = load_network(cfg)?;
    if !cfg.calibrate {
        return Ok(Prepared {
            net,
            params,
            options: NormalizeOptions::default(),
            notes: vec!["calibrated=false".into()],
        });
    }
    let images = cfg.require(&cfg.calib_images, "calib-images")?;
    let labels = cfg.require(&cfg.calib_labels, "calib-labels")?;
    let data = fit_dataset(cfg, Dataset::load(images, labels)?, &net)?;
    let net = net.equalized();
    let tensors: Vec<_> = (0..data.len()).map(|i| data.bipolar(i)).collect();
    let options = NormalizeOptions {
        calibration: Some(calibrate_quantile(&net, &tensors, cfg.calib_quantile)?),
        ..NormalizeOptions::default()
    };
    let mut notes = vec![format!(
        "calibrated=true images={} quantile={}",
        data.len(),
        cfg.calib_quantile
    )];
    if cfg.seed_w.is_none() && params.r_w.taps == params.r_x.taps {
        let (seed, agree) =
            select_weight_seed(&net, params, &options, &data, SEED_CANDIDATES, cfg.workers)?;
        params.r_w.seed = seed;
        notes.push(format!(
            "selected R_w seed={seed} ({agree}/{} calibration agreement)",
            data.len()
        ));
    }
    Ok(Prepared {
        net,
        params,
        options,
        notes,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

pub fn evaluate(cfg: &RunConfig) -> Result<Report> {
    let prep = prepare(cfg)?;
    let (net, params) = (&prep.net, prep.params);
    let data = load_dataset(cfg, net)?;
    let engine = ScEngine::new(prep.spec(params)?)?;

    let start = Instant::now();
    let float = float_forward_all(net, &data, cfg.workers)?;
    let sc = sc_forward_all(&engine, &data, cfg.workers)?;
    info!("evaluated {} images in {:.2?}", data.len(), start.elapsed());

    let labels: Vec<usize> = data.labels().iter().map(|&l| l as usize).collect();
    let float_pred: Vec<usize> = float.iter().map(|l| argmax(l)).collect();
    let sc_pred: Vec<usize> = sc.iter().map(|r| r.predicted).collect();
    let report = degradation_report(&labels, &float_pred, &sc_pred)?;

    let mut out = Report::new("index,label,float_pred,sc_pred,saturations");
    for (i, r) in sc.iter().enumerate() {
        out.row(&[
            i.to_string(),
            labels[i].to_string(),
            float_pred[i].to_string(),
            sc_pred[i].to_string(),
            r.total_saturations().to_string(),
        ]);
    }
    let layers = engine.spec().layers.len();
    let mut per_layer = vec![0u64; layers];
    for r in &sc {
        for (t, s) in per_layer.iter_mut().zip(&r.saturations) {
            *t += s;
        }
    }
    out.note(describe(&params));
    out.summary.extend(prep.notes);
    out.note(format!("images={}", report.images));
    out.note(format!("float_accuracy={:.2}%", report.float_accuracy));
    out.note(format!("sc_accuracy={:.2}%", report.sc_accuracy));
    out.note(format!("delta={:.2} points", report.delta));
    out.note(format!("agreement={}/{}", report.agreement, report.images));
    out.note(format!(
        "saturations per layer: {}",
        per_layer
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    ));
    for c in &report.per_class {
        out.note(format!(
            "class {}: n={} float={} sc={}",
            c.label, c.count, c.float_correct, c.sc_correct
        ));
    }
    Ok(out)
}

pub fn infer(cfg: &RunConfig, index: usize) -> Result<Report> {
    let prep = prepare(cfg)?;
    let (net, params) = (&prep.net, prep.params);
    let data = load_dataset(cfg, net)?;
    if index >= data.len() {
        return Err(UsageError::msg(format!(
            "--index {index} out of range for {} images",
            data.len()
        )));
    }
    let spec = prep.spec(params)?;
    let scale = spec.logit_scale();
    let engine = ScEngine::new(spec)?;
    let float = float_forward(&data.bipolar(index), net)?;
    let sc = engine.forward(&data.levels(index, params.width))?;

    let mut out = Report::new("class,float_logit,sc_logit,sc_logit_rescaled");
    for (c, (&f, &s)) in float.iter().zip(&sc.logits).enumerate() {
        out.row(&[c.to_string(), fmt(f), fmt(s), fmt(s / scale)]);
    }
    out.note(describe(&params));
    out.summary.extend(prep.notes);
    out.note(format!("image={index} label={}", data.label(index)));
    out.note(format!("float_prediction={}", argmax(&float)));
    out.note(format!("sc_prediction={}", sc.predicted));
    out.note(format!("saturations={}", sc.total_saturations()));
    Ok(out)
}

pub fn sweep(cfg: &RunConfig, lengths: &[usize]) -> Result<Report> {
    if lengths.len() < 2 {
        return Err(UsageError::msg("sweep needs at least two --lengths"));
    }
    if lengths.contains(&0) {
        return Err(UsageError::msg("stream lengths must be at least 1"));
    }
    let prep = prepare(cfg)?;
    let (net, base) = (&prep.net, prep.params);
    let data = load_dataset(cfg, net)?;
    let float = float_forward_all(net, &data, cfg.workers)?;
    let labels: Vec<usize> = data.labels().iter().map(|&l| l as usize).collect();
    let float_pred: Vec<usize> = float.iter().map(|l| argmax(l)).collect();

    let mut out =
        Report::new("length,images,float_accuracy,sc_accuracy,mean_abs_logit_error,saturations");
    for &length in lengths {
        let spec = prep.spec(base.with_length(length))?;
        let scale = spec.logit_scale();
        let engine = ScEngine::new(spec)?;
        let sc = sc_forward_all(&engine, &data, cfg.workers)?;
        let sc_pred: Vec<usize> = sc.iter().map(|r| r.predicted).collect();
        let report = degradation_report(&labels, &float_pred, &sc_pred)?;
        let (err_sum, count) = sc
            .iter()
            .zip(&float)
            .flat_map(|(r, f)| r.logits.iter().zip(f))
            .fold((0.0, 0usize), |(s, n), (&sc, &fl)| {
                (s + (sc / scale - fl).abs(), n + 1)
            });
        let saturations: u64 = sc.iter().map(|r| r.total_saturations()).sum();
        out.row(&[
            length.to_string(),
            data.len().to_string(),
            format!("{:.2}", report.float_accuracy),
            format!("{:.2}", report.sc_accuracy),
            fmt(err_sum / count as f64),
            saturations.to_string(),
        ]);
        info!("length {length}: sc accuracy {:.2}%", report.sc_accuracy);
    }
    out.note(describe(&base));
    out.summary.extend(prep.notes);
    Ok(out)
}

pub fn correlation_demo(cfg: &RunConfig, steps: u32) -> Result<Report> {
    let params = cfg.params().map_err(UsageError::wrap)?;
    if steps == 0 {
        return Err(UsageError::msg("--steps must be at least 1"));
    }
    let width = params.width;
    let length = params.stream_length;
    let max = params.max_level();
    let x_enc = Encoder::new(params.r_x.lfsr(width)?, length)?;
    let w_enc = Encoder::new(params.r_w.lfsr(width)?, length)?;
    let grid: Vec<u32> = (0..=steps)
        .map(|i| ((i as u64 * max as u64 + steps as u64 / 2) / steps as u64) as u32)
        .collect();

    let mut out = Report::new(
        "regime,x_level,y_level,x,y,correlation,and,and_predicted,or,or_predicted,min,product,max",
    );
    for (regime, y_enc) in [("shared", &x_enc), ("independent", &w_enc)] {
        let mut abs_c = Vec::new();
        let mut worst = 0.0f64;
        for &xl in &grid {
            for &yl in &grid {
                let xs = x_enc.encode_level(xl);
                let ys = y_enc.encode_level(yl);
                let (x, y) = (xs.mean(), ys.mean());
                let c = correlation(&xs, &ys)?;
                let and = decode(&gate_and(&xs, &ys)?, Codification::Unipolar);
                let or = decode(&gate_or(&xs, &ys)?, Codification::Unipolar);
                let and_p = predict_gate(x, y, c.value, Gate::And)?;
                let or_p = predict_gate(x, y, c.value, Gate::Or)?;
                worst = worst.max((and - and_p).abs()).max((or - or_p).abs());
                if let Some(v) = c.value {
                    abs_c.push(v.abs());
                }
                out.row(&[
                    regime.to_string(),
                    xl.to_string(),
                    yl.to_string(),
                    fmt(x),
                    fmt(y),
                    c.value.map_or_else(|| "undefined".to_string(), fmt),
                    fmt(and),
                    fmt(and_p),
                    fmt(or),
                    fmt(or_p),
                    fmt(x.min(y)),
                    fmt(x * y),
                    fmt(x.max(y)),
                ]);
            }
        }
        abs_c.sort_by(f64::total_cmp);
        let median = abs_c.get(abs_c.len() / 2).copied().unwrap_or(f64::NAN);
        out.note(format!(
            "{regime}: {} defined pairs, median |C|={median:.4}, max |measured - predicted|={worst:.2e}",
            abs_c.len()
        ));
    }
    out.note(describe(&params));
    Ok(out)
}

pub fn cost(cfg: &RunConfig) -> Result<Report> {
    let params = cfg.params().map_err(UsageError::wrap)?;
    let net = load_network(cfg)?;
    let spec = normalize_weights(&net, params, &NormalizeOptions::default())?;
    let report = cost_report(&spec);
    let mut out = Report::new("resource,count");
    for (name, count) in report.rows() {
        out.row(&[name.to_string(), count.to_string()]);
    }
    out.note(format!(
        "{} layers, {} neurons",
        spec.layers.len(),
        spec.layers
            .iter()
            .map(|l| l.neuron_instances())
            .sum::<usize>()
    ));
    Ok(out)
}
