//! Floating-point oracle for the SC network and accuracy comparison.

use crate::error::{Result, ScError};
use crate::nn::engine::argmax;
use crate::nn::model::{Layer, Network, PoolMode, Shape};
use crate::nn::spec::Calibration;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl FloatTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(ScError::Shape(format!(
                "dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_shape(shape: Shape, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![shape.channels, shape.height, shape.width], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Per-layer values from a traced float pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerValues {
    /// Weighted sums before ReLU; empty for pool layers.
    pub preactivation: Vec<f64>,
    /// Layer output (after ReLU or pooling; equal to `preactivation` on the
    /// readout layer).
    pub output: Vec<f64>,
}

fn check_image(image: &FloatTensor, net: &Network) -> Result<()> {
    let len: usize = image.dims.iter().product();
    if len != net.input.len() {
        return Err(ScError::Shape(format!(
            "image dims {:?} do not match network input {}",
            image.dims, net.input
        )));
    }
    Ok(())
}

/// Standard conv / ReLU / pool / dense inference. The last layer has no
/// ReLU.
pub fn float_forward(image: &FloatTensor, net: &Network) -> Result<Vec<f64>> {
    Ok(float_forward_trace(image, net)?
        .pop()
        .map(|l| l.output)
        .unwrap_or_else(|| image.data.clone()))
}

pub fn float_forward_trace(image: &FloatTensor, net: &Network) -> Result<Vec<LayerValues>> {
    check_image(image, net)?;
    let shapes = net.shapes()?;
    let mut x = image.data.clone();
    let mut shape = net.input;
    let last = net.layers.len().saturating_sub(1);
    let mut trace = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let out_shape = shapes[i];
        let values = match layer {
            Layer::Conv(c) => {
                let mut z = vec![0.0; out_shape.len()];
                for o in 0..c.out_channels {
                    let w = c.kernel_weights(o);
                    let b = c.bias.as_ref().map_or(0.0, |b| b[o] as f64);
                    for oy in 0..out_shape.height {
                        for ox in 0..out_shape.width {
                            let mut acc = b;
                            let mut j = 0;
                            for ci in 0..c.in_channels {
                                for ky in 0..c.kernel {
                                    for kx in 0..c.kernel {
                                        let idx =
                                            shape.index(ci, oy * c.stride + ky, ox * c.stride + kx);
                                        acc += w[j] as f64 * x[idx];
                                        j += 1;
                                    }
                                }
                            }
                            z[out_shape.index(o, oy, ox)] = acc;
                        }
                    }
                }
                activation(z, i == last)
            }
            Layer::FullyConnected(f) => {
                let z = (0..f.outputs)
                    .map(|o| {
                        let b = f.bias.as_ref().map_or(0.0, |b| b[o] as f64);
                        f.row(o)
                            .iter()
                            .zip(&x)
                            .fold(b, |acc, (&w, &v)| acc + w as f64 * v)
                    })
                    .collect();
                activation(z, i == last)
            }
            Layer::Pool(p) => {
                let mut out = Vec::with_capacity(out_shape.len());
                for c in 0..out_shape.channels {
                    for oy in 0..out_shape.height {
                        for ox in 0..out_shape.width {
                            let window =
                                (0..p.kernel).flat_map(|ky| (0..p.kernel).map(move |kx| (ky, kx)));
                            let vals = window.map(|(ky, kx)| {
                                x[shape.index(c, oy * p.stride + ky, ox * p.stride + kx)]
                            });
                            out.push(match p.mode {
                                PoolMode::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                                PoolMode::Min => vals.fold(f64::INFINITY, f64::min),
                                PoolMode::Average => {
                                    vals.sum::<f64>() / (p.kernel * p.kernel) as f64
                                }
                            });
                        }
                    }
                }
                LayerValues {
                    preactivation: Vec::new(),
                    output: out,
                }
            }
        };
        x = values.output.clone();
        shape = out_shape;
        trace.push(values);
    }
    Ok(trace)
}

fn activation(z: Vec<f64>, readout: bool) -> LayerValues {
    let output = if readout {
        z.clone()
    } else {
        z.iter().map(|&v| v.max(0.0)).collect()
    };
    LayerValues {
        preactivation: z,
        output,
    }
}

/// Largest |pre-activation| per layer over a batch of images.
pub fn calibrate(net: &Network, images: &[FloatTensor]) -> Result<Calibration> {
    calibrate_quantile(net, images, 1.0)
}

/// Quantile `q` of |pre-activation| per layer over a batch of images.
/// `q = 1` is the maximum; lower values let a few outliers saturate in
/// exchange for finer resolution everywhere else.
pub fn calibrate_quantile(net: &Network, images: &[FloatTensor], q: f64) -> Result<Calibration> {
    if images.is_empty() {
        return Err(ScError::EmptyDataset);
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(ScError::OutOfRange(format!("quantile {q} not in (0, 1]")));
    }
    let mut values = vec![Vec::new(); net.layers.len()];
    for image in images {
        for (v, layer) in values.iter_mut().zip(float_forward_trace(image, net)?) {
            v.extend(layer.preactivation.iter().map(|z| z.abs()));
        }
    }
    let quantile = |mut v: Vec<f64>| {
        if v.is_empty() {
            return 0.0;
        }
        let k = ((v.len() - 1) as f64 * q).round() as usize;
        *v.select_nth_unstable_by(k, f64::total_cmp).1
    };
    Ok(Calibration {
        max_abs_preactivation: values.into_iter().map(quantile).collect(),
    })
}

/// Per-class counts for one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassStats {
    pub label: usize,
    pub count: usize,
    pub float_correct: usize,
    pub sc_correct: usize,
}

/// Float vs SC accuracy on the same images.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationReport {
    pub images: usize,
    /// Percent.
    pub float_accuracy: f64,
    /// Percent.
    pub sc_accuracy: f64,
    /// `float_accuracy - sc_accuracy`, percentage points.
    pub delta: f64,
    /// Images where the two engines predict the same class.
    pub agreement: usize,
    pub per_class: Vec<ClassStats>,
    /// `confusion[label][predicted]` for the SC engine.
    pub sc_confusion: Vec<Vec<usize>>,
    pub float_confusion: Vec<Vec<usize>>,
}

pub fn degradation_report(
    labels: &[usize],
    float_predictions: &[usize],
    sc_predictions: &[usize],
) -> Result<DegradationReport> {
    if labels.is_empty() {
        return Err(ScError::EmptyDataset);
    }
    if labels.len() != float_predictions.len() || labels.len() != sc_predictions.len() {
        return Err(ScError::ResultMismatch(format!(
            "{} labels, {} float predictions, {} SC predictions",
            labels.len(),
            float_predictions.len(),
            sc_predictions.len()
        )));
    }
    let classes = labels
        .iter()
        .chain(float_predictions)
        .chain(sc_predictions)
        .max()
        .map_or(0, |m| m + 1);
    let mut per_class: Vec<ClassStats> = (0..classes)
        .map(|label| ClassStats {
            label,
            ..ClassStats::default()
        })
        .collect();
    let mut sc_confusion = vec![vec![0; classes]; classes];
    let mut float_confusion = vec![vec![0; classes]; classes];
    let (mut float_ok, mut sc_ok, mut agreement) = (0, 0, 0);
    for ((&y, &f), &s) in labels.iter().zip(float_predictions).zip(sc_predictions) {
        let stats = &mut per_class[y];
        stats.count += 1;
        stats.float_correct += (f == y) as usize;
        stats.sc_correct += (s == y) as usize;
        float_ok += (f == y) as usize;
        sc_ok += (s == y) as usize;
        agreement += (f == s) as usize;
        sc_confusion[y][s] += 1;
        float_confusion[y][f] += 1;
    }
    let n = labels.len() as f64;
    let float_accuracy = 100.0 * float_ok as f64 / n;
    let sc_accuracy = 100.0 * sc_ok as f64 / n;
    Ok(DegradationReport {
        images: labels.len(),
        float_accuracy,
        sc_accuracy,
        delta: float_accuracy - sc_accuracy,
        agreement,
        per_class,
        sc_confusion,
        float_confusion,
    })
}

/// Predicted class of a float pass.
pub fn float_predict(image: &FloatTensor, net: &Network) -> Result<usize> {
    Ok(argmax(&float_forward(image, net)?))
}
