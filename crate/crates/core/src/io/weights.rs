//! Weight manifests: a `manifest.toml` describing the layer stack plus one
//! raw little-endian `f32` file per tensor, in the layout of
//! [`ConvLayer`] / [`FcLayer`].
//!
//! ```toml
//! version = 1
//! input_shape = [1, 32, 32]
//!
//! [[layer]]
//! kind = "conv"
//! in_channels = 1
//! out_channels = 6
//! kernel = 5
//! weights = "conv1.weight.f32"
//! bias = "conv1.bias.f32"
//!
//! [[layer]]
//! kind = "pool"
//! kernel = 2
//! stride = 2
//! mode = "max"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScError};
use crate::nn::model::{ConvLayer, FcLayer, Layer, Network, PoolLayer, PoolMode, Shape};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.toml";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    input_shape: [usize; 3],
    #[serde(default, rename = "layer")]
    layers: Vec<Entry>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Entry {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        weights: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bias: Option<String>,
    },
    Pool {
        kernel: usize,
        stride: usize,
        mode: String,
    },
    Fc {
        inputs: usize,
        outputs: usize,
        weights: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bias: Option<String>,
    },
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> ScError {
    ScError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_tensor(path: &Path, expected: usize, layer: usize) -> Result<Vec<f32>> {
    let bytes = std::fs::read(path).map_err(|source| ScError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() != expected * 4 {
        return Err(format_err(
            path,
            format!(
                "layer {layer}: tensor holds {} bytes, expected {} ({expected} f32 values)",
                bytes.len(),
                expected * 4
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Loads a network from a manifest file or a directory containing
/// `manifest.toml`. Tensor paths are relative to the manifest.
pub fn load_weights(path: impl AsRef<Path>) -> Result<Network> {
    let path = manifest_path(path.as_ref());
    let text = std::fs::read_to_string(&path).map_err(|source| ScError::Io {
        path: path.clone(),
        source,
    })?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| format_err(&path, e.to_string().trim_end()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(format_err(
            &path,
            format!(
                "unsupported manifest version {}, expected {MANIFEST_VERSION}",
                manifest.version
            ),
        ));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let [c, h, w] = manifest.input_shape;
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (i, entry) in manifest.layers.into_iter().enumerate() {
        let bias = |file: &Option<String>, n: usize| {
            file.as_ref()
                .map(|f| read_tensor(&dir.join(f), n, i))
                .transpose()
        };
        layers.push(match entry {
            Entry::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                weights,
                bias: b,
            } => Layer::Conv(ConvLayer {
                in_channels,
                out_channels,
                kernel,
                stride,
                weights: read_tensor(
                    &dir.join(&weights),
                    out_channels * in_channels * kernel * kernel,
                    i,
                )?,
                bias: bias(&b, out_channels)?,
            }),
            Entry::Pool {
                kernel,
                stride,
                mode,
            } => Layer::Pool(PoolLayer {
                kernel,
                stride,
                mode: mode
                    .parse::<PoolMode>()
                    .map_err(|e| format_err(&path, format!("layer {i}: {e}")))?,
            }),
            Entry::Fc {
                inputs,
                outputs,
                weights,
                bias: b,
            } => Layer::FullyConnected(FcLayer {
                inputs,
                outputs,
                weights: read_tensor(&dir.join(&weights), inputs * outputs, i)?,
                bias: bias(&b, outputs)?,
            }),
        });
    }
    Network::new(Shape::new(c, h, w), layers).map_err(|e| format_err(&path, e.to_string()))
}

/// Errors unless `net` is the LeNet-5 topology on 32x32 single-channel input.
pub fn check_lenet5(net: &Network) -> Result<()> {
    if net.input != Shape::new(1, 32, 32) || !net.is_lenet5() {
        let kinds: Vec<_> = net.layers.iter().map(|l| l.kind().as_str()).collect();
        return Err(ScError::InvalidNetwork(format!(
            "expected LeNet-5 on 1x32x32 input, got [{}] on {}",
            kinds.join(", "),
            net.input
        )));
    }
    Ok(())
}

/// Writes `net` as `dir/manifest.toml` plus `layer{i}.{weight,bias}.f32`.
/// Returns the manifest path.
pub fn save_weights(net: &Network, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| ScError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let write = |name: String, data: &[f32]| -> Result<String> {
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(&name);
        std::fs::write(&path, bytes).map_err(|source| ScError::Io { path, source })?;
        Ok(name)
    };
    let mut layers = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let bias = |b: &Option<Vec<f32>>| {
            b.as_ref()
                .map(|b| write(format!("layer{i}.bias.f32"), b))
                .transpose()
        };
        layers.push(match layer {
            Layer::Conv(c) => Entry::Conv {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                stride: c.stride,
                weights: write(format!("layer{i}.weight.f32"), &c.weights)?,
                bias: bias(&c.bias)?,
            },
            Layer::Pool(p) => Entry::Pool {
                kernel: p.kernel,
                stride: p.stride,
                mode: p.mode.as_str().to_string(),
            },
            Layer::FullyConnected(f) => Entry::Fc {
                inputs: f.inputs,
                outputs: f.outputs,
                weights: write(format!("layer{i}.weight.f32"), &f.weights)?,
                bias: bias(&f.bias)?,
            },
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        input_shape: [net.input.channels, net.input.height, net.input.width],
        layers,
    };
    let text = toml::to_string(&manifest).map_err(|e| format_err(dir, e.to_string()))?;
    let path = dir.join(MANIFEST_NAME);
    std::fs::write(&path, text).map_err(|source| ScError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Network {
        Network::new(
            Shape::new(1, 4, 4),
            vec![
                Layer::Conv(ConvLayer {
                    in_channels: 1,
                    out_channels: 2,
                    kernel: 3,
                    stride: 1,
                    weights: (0..18).map(|i| i as f32 * 0.1 - 0.9).collect(),
                    bias: Some(vec![0.25, -1e-7]),
                }),
                Layer::Pool(PoolLayer {
                    kernel: 2,
                    stride: 2,
                    mode: PoolMode::Average,
                }),
                Layer::FullyConnected(FcLayer {
                    inputs: 2,
                    outputs: 3,
                    weights: vec![1.5, -2.0, f32::MIN_POSITIVE, 0.0, -0.0, 3.25],
                    bias: None,
                }),
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let net = small();
        let path = save_weights(&net, dir.path()).unwrap();
        let back = load_weights(&path).unwrap();
        let bits = |n: &Network| -> Vec<u32> {
            n.layers
                .iter()
                .filter_map(Layer::parameters)
                .flat_map(|(w, b)| w.iter().chain(b.into_iter().flatten()).map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&back), bits(&net));
        assert_eq!(back, net);
        assert_eq!(load_weights(dir.path()).unwrap(), net);
    }

    #[test]
    fn size_mismatch_names_layer() {
        let dir = tempfile::tempdir().unwrap();
        save_weights(&small(), dir.path()).unwrap();
        std::fs::write(dir.path().join("layer2.weight.f32"), [0u8; 20]).unwrap();
        let err = load_weights(dir.path()).unwrap_err().to_string();
        assert!(
            err.contains("layer 2") && err.contains("expected 24"),
            "{err}"
        );
    }

    #[test]
    fn missing_tensor_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_weights(dir.path().join("nope.toml")),
            Err(ScError::Io { .. })
        ));
        save_weights(&small(), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("layer0.bias.f32")).unwrap();
        let err = load_weights(dir.path()).unwrap_err();
        match err {
            ScError::Io { path, source } => {
                assert!(path.ends_with("layer0.bias.f32"));
                assert_eq!(source.kind(), std::io::ErrorKind::NotFound);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_NAME);
        let cases = [
            ("version = 2\ninput_shape = [1, 2, 2]\n", "version"),
            (
                "version = 1\ninput_shape = [1, 2, 2]\n[[layer]]\nkind = \"lstm\"\n",
                "lstm",
            ),
            (
                "version = 1\ninput_shape = [1, 2, 2]\n[[layer]]\nkind = \"pool\"\nkernel = 2\nstride = 2\nmode = \"median\"\n",
                "median",
            ),
            ("version = 1\ninput_shape = [1, 2\n", "parse"),
        ];
        for (text, needle) in cases {
            std::fs::write(&path, text).unwrap();
            let err = load_weights(&path).unwrap_err().to_string();
            assert!(
                err.contains(needle) || err.contains("expected"),
                "{needle}: {err}"
            );
        }
    }

    #[test]
    fn empty_manifest_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_NAME);
        std::fs::write(&path, "version = 1\ninput_shape = [1, 32, 32]\n").unwrap();
        let net = load_weights(&path).unwrap();
        assert!(net.layers.is_empty());
        assert!(check_lenet5(&net).is_err());
    }
}
