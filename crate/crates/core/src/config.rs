//! Pipeline configuration and its `key = value` file format.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Keys match the CLI flag names without the leading dashes, with `-` and `_`
//! interchangeable (e.g. `window-min = 32` or `window_min = 32`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compositor::{BlendMode, Resample};
use crate::descriptor::DescriptorConfig;
use crate::detector::ScaleSet;
use crate::error::{Error, Result};
use crate::imaging;
use crate::matcher::{MatchStrategy, MatcherConfig};
use crate::registration::RansacConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Ramp coefficient; `None` picks [`imaging::default_alpha`] per image.
    pub alpha: Option<f64>,
    pub window_min: usize,
    pub window_max: usize,
    /// Region factor; `None` uses the largest admissible value for the scale set.
    pub beta0: Option<f64>,
    pub d: usize,
    pub orientation_normalize: bool,
    pub matcher: MatcherConfig,
    pub ransac: RansacConfig,
    pub blend: BlendMode,
    pub resample: Resample,
    /// Worker threads; `None` lets the pool decide.
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            window_min: 32,
            window_max: 64,
            beta0: None,
            d: 4,
            orientation_normalize: true,
            matcher: MatcherConfig::default(),
            ransac: RansacConfig::default(),
            blend: BlendMode::Feather,
            resample: Resample::Bilinear,
            threads: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(format!("invalid boolean {value:?} for {key}"))),
    }
}

/// Splits `key = value` text into pairs, keys normalized to snake case.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config(format!("line {}: expected `key = value`, got {raw:?}", n + 1)));
        };
        let key = k.trim().replace('-', "_");
        if key.is_empty() {
            return Err(Error::config(format!("line {}: empty key", n + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

impl PipelineConfig {
    /// Applies one setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches('-').replace('-', "_");
        match key.as_str() {
            "alpha" => self.alpha = Some(parse(&key, value)?),
            "window_min" => self.window_min = parse(&key, value)?,
            "window_max" => self.window_max = parse(&key, value)?,
            "beta0" => self.beta0 = Some(parse(&key, value)?),
            "d" => self.d = parse(&key, value)?,
            "orientation" | "orientation_normalize" => self.orientation_normalize = parse_bool(&key, value)?,
            "no_orientation" => self.orientation_normalize = !parse_bool(&key, value)?,
            "delta_s" => self.matcher.delta_s = parse(&key, value)?,
            "match_strategy" => self.matcher.strategy = value.parse::<MatchStrategy>()?,
            "ransac_iters" => self.ransac.iterations = parse(&key, value)?,
            "ransac_tol" => self.ransac.inlier_tol = parse(&key, value)?,
            "min_inliers" => self.ransac.min_inliers = parse(&key, value)?,
            "seed" => self.ransac.seed = parse(&key, value)?,
            "threads" => self.threads = Some(parse(&key, value)?),
            "blend" => self.blend = value.parse()?,
            "resample" => self.resample = value.parse()?,
            other => return Err(Error::config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_key_values(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_kv_str(&text)
    }

    /// Renders the configuration in the file format, one key per line.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        if let Some(a) = self.alpha {
            s += &format!("alpha = {a}\n");
        }
        s += &format!("window_min = {}\nwindow_max = {}\n", self.window_min, self.window_max);
        if let Some(b) = self.beta0 {
            s += &format!("beta0 = {b}\n");
        }
        s += &format!("d = {}\norientation = {}\n", self.d, self.orientation_normalize);
        s += &format!("delta_s = {}\n", self.matcher.delta_s);
        s += &format!(
            "match_strategy = {}\n",
            match self.matcher.strategy {
                MatchStrategy::ThresholdAll => "threshold_all",
                MatchStrategy::NearestNeighbor => "nearest_neighbor",
            }
        );
        s += &format!(
            "ransac_iters = {}\nransac_tol = {}\nmin_inliers = {}\nseed = {}\n",
            self.ransac.iterations, self.ransac.inlier_tol, self.ransac.min_inliers, self.ransac.seed
        );
        if let Some(t) = self.threads {
            s += &format!("threads = {t}\n");
        }
        s += &format!(
            "blend = {}\nresample = {}\n",
            match self.blend {
                BlendMode::Feather => "feather",
                BlendMode::Overwrite => "overwrite",
            },
            match self.resample {
                Resample::Bilinear => "bilinear",
                Resample::Nearest => "nearest",
            }
        );
        s
    }

    pub fn scales(&self) -> Result<ScaleSet> {
        ScaleSet::from_range(self.window_min, self.window_max)
    }

    pub fn descriptor_config(&self) -> Result<DescriptorConfig> {
        let scales = self.scales()?;
        if self.d == 0 {
            return Err(Error::config("descriptor grid d must be at least 1"));
        }
        let beta0 = self.beta0.unwrap_or_else(|| DescriptorConfig::max_beta0(self.d, &scales));
        DescriptorConfig::new(beta0, self.d, &scales, self.orientation_normalize)
    }

    /// Ramp coefficient for an `nr x nc` image.
    pub fn alpha_for(&self, nr: usize, nc: usize) -> Result<f64> {
        let alpha = self.alpha.unwrap_or_else(|| imaging::default_alpha(nr, nc));
        imaging::validate_alpha(alpha, nr, nc)?;
        Ok(alpha)
    }

    /// Checks every component invariant that does not depend on image size.
    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::config(format!("alpha must be positive, got {a}")));
            }
        }
        self.descriptor_config()?;
        self.matcher.validate()?;
        self.ransac.validate()?;
        if self.threads == Some(0) {
            return Err(Error::config("threads must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.scales().unwrap().sizes(), &[32, 64]);
        let dc = cfg.descriptor_config().unwrap();
        assert!((dc.beta0 - 0.5f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn parses_file_text() {
        let text = "# demo\nwindow-min = 16\nwindow_max = 128 # trailing\n\nbeta0=0.05\nno-orientation = true\n\
                    delta_s = 0.5\nmatch_strategy = threshold_all\nransac_iters = 10\nseed = 9\nblend = overwrite\n";
        let cfg = PipelineConfig::from_kv_str(text).unwrap();
        assert_eq!((cfg.window_min, cfg.window_max), (16, 128));
        assert_eq!(cfg.beta0, Some(0.05));
        assert!(!cfg.orientation_normalize);
        assert_eq!(cfg.matcher.strategy, MatchStrategy::ThresholdAll);
        assert_eq!((cfg.ransac.iterations, cfg.ransac.seed), (10, 9));
        assert_eq!(cfg.blend, BlendMode::Overwrite);
    }

    #[test]
    fn round_trips_through_text() {
        let mut cfg = PipelineConfig::default();
        cfg.alpha = Some(1e-5);
        cfg.threads = Some(2);
        cfg.matcher.delta_s = 0.4;
        assert_eq!(PipelineConfig::from_kv_str(&cfg.to_kv_string()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "bogus = 1",
            "window_min",
            "window_min = abc",
            "beta0 = 0.5",
            "delta_s = -1",
            "min_inliers = 1",
            "threads = 0",
            "window_min = 4",
            "orientation = maybe",
        ] {
            assert!(matches!(PipelineConfig::from_kv_str(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn alpha_bound_depends_on_size() {
        let cfg = PipelineConfig {
            alpha: Some(1e-3),
            ..Default::default()
        };
        assert!(cfg.alpha_for(100, 100).is_ok());
        assert!(cfg.alpha_for(1000, 1000).is_err());
    }
}
