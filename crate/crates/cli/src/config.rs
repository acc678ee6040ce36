//! Run configuration: defaults, `key=value` config files and flag overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sc_cnn::nn::generators::best_weight_seed;
use sc_cnn::nn::spec::{RngConfig, ScParams};
use sc_cnn::nn::PoolMode;
use sc_cnn::reciprocal_taps;

/// Everything a command needs. Unset generator fields fall back to the
/// documented defaults for the chosen width.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub stream_length: Option<usize>,
    pub width: u32,
    pub seed_x: Option<u32>,
    pub seed_w: Option<u32>,
    pub poly_x: Option<u32>,
    pub poly_w: Option<u32>,
    pub weights: Option<PathBuf>,
    pub mnist_images: Option<PathBuf>,
    pub mnist_labels: Option<PathBuf>,
    pub calib_images: Option<PathBuf>,
    pub calib_labels: Option<PathBuf>,
    pub limit: Option<usize>,
    pub pool: Option<PoolMode>,
    pub calibrate: bool,
    /// Quantile of |pre-activation| used as each layer's range.
    pub calib_quantile: f64,
    pub no_pad: bool,
    pub out: Option<PathBuf>,
    pub workers: usize,
}

impl RunConfig {
    pub fn new() -> Self {
        Self {
            width: 8,
            calib_quantile: 0.99,
            ..Self::default()
        }
    }

    /// Applies a `key=value` file. Blank lines and `#` comments are skipped;
    /// keys use flag names with `-` or `_`.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut seen = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key=value", path.display(), n + 1))?;
            let key = key.trim().replace('_', "-");
            if seen.insert(key.clone(), n + 1).is_some() {
                bail!("{}:{}: duplicate key {key}", path.display(), n + 1);
            }
            self.set(&key, value.trim())
                .with_context(|| format!("{}:{}", path.display(), n + 1))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        match key {
            "length" | "stream-length" => self.stream_length = Some(parse_num(value)?),
            "width" => self.width = parse_num(value)?,
            "seed-x" => self.seed_x = Some(parse_num(value)?),
            "seed-w" => self.seed_w = Some(parse_num(value)?),
            "poly-x" => self.poly_x = Some(parse_num(value)?),
            "poly-w" => self.poly_w = Some(parse_num(value)?),
            "weights" => self.weights = path(),
            "mnist-images" => self.mnist_images = path(),
            "mnist-labels" => self.mnist_labels = path(),
            "calib-images" => self.calib_images = path(),
            "calib-labels" => self.calib_labels = path(),
            "limit" => self.limit = Some(parse_num(value)?),
            "pool" => self.pool = Some(value.parse()?),
            "calibrate" => self.calibrate = parse_bool(value)?,
            "calib-quantile" => {
                self.calib_quantile = value
                    .parse()
                    .with_context(|| format!("invalid number {value:?}"))?
            }
            "no-pad" => self.no_pad = parse_bool(value)?,
            "out" => self.out = path(),
            "workers" => self.workers = parse_num(value)?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(4..=16).contains(&self.width) {
            bail!("width must be in [4, 16], got {}", self.width);
        }
        if self.stream_length == Some(0) {
            bail!("stream length must be at least 1");
        }
        if !(self.calib_quantile > 0.0 && self.calib_quantile <= 1.0) {
            bail!(
                "calibration quantile must be in (0, 1], got {}",
                self.calib_quantile
            );
        }
        if self.limit == Some(0) {
            bail!("--limit must be at least 1");
        }
        Ok(())
    }

    /// Generator configuration for this run.
    pub fn params(&self) -> Result<ScParams> {
        self.validate()?;
        let width = self.width;
        let mut params = ScParams::for_width(width)?;
        let taps_x = self.poly_x.unwrap_or(params.r_x.taps);
        let r_x = RngConfig {
            taps: taps_x,
            seed: self.seed_x.unwrap_or(1),
        };
        let taps_w = self.poly_w.unwrap_or(taps_x);
        let seed_w = match self.seed_w {
            Some(s) => s,
            None if taps_w == taps_x => best_weight_seed(r_x.lfsr(width)?)?,
            None => 1,
        };
        params.r_x = r_x;
        params.r_w = RngConfig {
            taps: taps_w,
            seed: seed_w,
        };
        if self.poly_x.is_some() {
            params.selector.taps = reciprocal_taps(taps_x, width);
        }
        if let Some(len) = self.stream_length {
            params.stream_length = len;
        }
        params.validate()?;
        Ok(params)
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .with_context(|| format!("missing --{flag} (or `{flag}=` in the config file)"))
    }
}

fn parse_num<T: TryFrom<u64>>(s: &str) -> Result<T> {
    let s = s.trim();
    let v = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    }
    .with_context(|| format!("invalid number {s:?}"))?;
    T::try_from(v).map_err(|_| anyhow::anyhow!("{s} out of range"))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => bail!("invalid boolean {s:?}"),
    }
}

/// Parses a number that may be written in hex (`0xB8`).
pub fn parse_u32(s: &str) -> std::result::Result<u32, String> {
    parse_num(s).map_err(|e| e.to_string())
}

/// Human description of the generators, e.g. for summaries.
pub fn describe(params: &ScParams) -> String {
    let lfsr = |c: RngConfig| format!("taps={:#x} seed={}", c.taps, c.seed);
    format!(
        "width={} length={} R_x[{}] R_w[{}]",
        params.width,
        params.stream_length,
        lfsr(params.r_x),
        lfsr(params.r_w)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# comment\nlength = 127\nseed_x=0x05\npool = min\ncalibrate = yes\n",
        )
        .unwrap();
        let mut cfg = RunConfig::new();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.stream_length, Some(127));
        assert_eq!(cfg.seed_x, Some(5));
        assert_eq!(cfg.pool, Some(PoolMode::Min));
        assert!(cfg.calibrate);
        let p = cfg.params().unwrap();
        assert_eq!(p.stream_length, 127);
        assert_eq!(p.r_x.seed, 5);
        assert_ne!(p.r_w, p.r_x);
    }

    #[test]
    fn bad_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        for text in [
            "nope = 1\n",
            "width\n",
            "length = -3\n",
            "width=8\nwidth=9\n",
        ] {
            std::fs::write(&path, text).unwrap();
            assert!(RunConfig::new().apply_file(&path).is_err(), "{text}");
        }
        let mut cfg = RunConfig::new();
        cfg.width = 3;
        assert!(cfg.validate().is_err());
        cfg.width = 8;
        cfg.stream_length = Some(0);
        assert!(cfg.validate().is_err());
        cfg.stream_length = None;
        cfg.calib_quantile = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_params_match_library() {
        assert_eq!(RunConfig::new().params().unwrap(), ScParams::default());
    }
}
