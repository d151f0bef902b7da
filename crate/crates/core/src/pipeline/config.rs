use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapter::ADAPTER_CMD_ENV;
use crate::error::{Error, Result};

fn default_sample_rate() -> u32 {
    16_000
}
fn default_merge_gap() -> u64 {
    crate::subtitle::DEFAULT_MAX_GAP_MS
}
fn default_min_duration() -> f64 {
    crate::filtering::DEFAULT_MIN_DURATION_S
}
fn default_max_duration() -> f64 {
    crate::filtering::DEFAULT_MAX_DURATION_S
}
fn default_wer_max() -> f64 {
    crate::filtering::DEFAULT_WER_MAX
}
fn default_keep_fraction() -> f64 {
    crate::filtering::DEFAULT_KEEP_FRACTION
}
fn default_iou_min() -> f64 {
    crate::speakers::DEFAULT_IOU_MIN
}
fn default_sim_max() -> f64 {
    crate::speakers::DEFAULT_SIM_MAX
}
fn default_min_segments() -> usize {
    crate::speakers::DEFAULT_MIN_COUNT
}
fn default_k_units() -> usize {
    crate::units::DEFAULT_K
}
fn default_hop_ms() -> u32 {
    20
}
fn default_tau() -> f64 {
    crate::speakers::DEFAULT_TAU
}
fn default_parallelism() -> usize {
    1
}

/// Every tunable of a pipeline run. Loaded from TOML; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_root: PathBuf,
    pub output_root: PathBuf,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: u32,
    #[serde(default = "default_merge_gap")]
    pub merge_gap_ms: u64,
    #[serde(default = "default_min_duration")]
    pub min_duration_s: f64,
    #[serde(default = "default_max_duration")]
    pub max_duration_s: f64,
    #[serde(default = "default_wer_max")]
    pub wer_max: f64,
    #[serde(default = "default_keep_fraction")]
    pub keep_fraction: f64,
    #[serde(default = "default_iou_min")]
    pub pair_iou_min: f64,
    #[serde(default = "default_sim_max")]
    pub pair_sim_max: f64,
    #[serde(default = "default_min_segments")]
    pub min_segments_per_speaker: usize,
    #[serde(default = "default_k_units")]
    pub k_units: usize,
    #[serde(default = "default_hop_ms")]
    pub frame_hop_ms: u32,
    #[serde(default = "default_tau")]
    pub cluster_tau: f64,
    #[serde(default)]
    pub adapter_cmd: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl PipelineConfig {
    pub fn new(input_root: impl Into<PathBuf>, output_root: impl Into<PathBuf>) -> Self {
        Self {
            input_root: input_root.into(),
            output_root: output_root.into(),
            sample_rate_hz: default_sample_rate(),
            merge_gap_ms: default_merge_gap(),
            min_duration_s: default_min_duration(),
            max_duration_s: default_max_duration(),
            wer_max: default_wer_max(),
            keep_fraction: default_keep_fraction(),
            pair_iou_min: default_iou_min(),
            pair_sim_max: default_sim_max(),
            min_segments_per_speaker: default_min_segments(),
            k_units: default_k_units(),
            frame_hop_ms: default_hop_ms(),
            cluster_tau: default_tau(),
            adapter_cmd: None,
            seed: 0,
            parallelism: default_parallelism(),
        }
    }

    /// Parses TOML. Relative roots are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for root in [&mut cfg.input_root, &mut cfg.output_root] {
            if root.is_relative() {
                *root = base_dir.join(&*root);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// The configured sidecar command, with the environment variable taking
    /// precedence over the config key.
    pub fn effective_adapter_cmd(&self) -> Option<String> {
        std::env::var(ADAPTER_CMD_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .or_else(|| self.adapter_cmd.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(8_000..=48_000).contains(&self.sample_rate_hz) {
            return fail(format!("sample_rate_hz {} outside [8000, 48000]", self.sample_rate_hz));
        }
        if !(self.min_duration_s > 0.0 && self.min_duration_s < self.max_duration_s) {
            return fail(format!(
                "need 0 < min_duration_s < max_duration_s, got {} and {}",
                self.min_duration_s, self.max_duration_s
            ));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return fail(format!("keep_fraction {} outside (0, 1]", self.keep_fraction));
        }
        if !(self.wer_max >= 0.0 && self.wer_max.is_finite()) {
            return fail(format!("wer_max {} must be a finite non-negative number", self.wer_max));
        }
        if !(self.pair_iou_min > 0.0 && self.pair_iou_min <= 1.0) {
            return fail(format!("pair_iou_min {} outside (0, 1]", self.pair_iou_min));
        }
        if !(-1.0..=1.0).contains(&self.pair_sim_max) {
            return fail(format!("pair_sim_max {} outside [-1, 1]", self.pair_sim_max));
        }
        if !self.cluster_tau.is_finite() {
            return fail("cluster_tau must be finite".into());
        }
        if self.min_segments_per_speaker == 0 {
            return fail("min_segments_per_speaker must be positive".into());
        }
        if self.k_units == 0 {
            return fail("k_units must be positive".into());
        }
        if self.frame_hop_ms == 0 {
            return fail("frame_hop_ms must be positive".into());
        }
        if self.parallelism == 0 {
            return fail("parallelism must be positive".into());
        }
        if self.input_root == self.output_root {
            return fail("input_root and output_root must differ".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_constants() {
        let c = PipelineConfig::from_toml_str("input_root = 'in'\noutput_root = 'out'\n", Path::new("/base")).unwrap();
        assert_eq!(c.input_root, Path::new("/base/in"));
        assert_eq!(c.sample_rate_hz, 16_000);
        assert_eq!(c.merge_gap_ms, 1000);
        assert_eq!((c.min_duration_s, c.max_duration_s), (3.0, 15.0));
        assert_eq!((c.wer_max, c.keep_fraction), (0.6, 0.8));
        assert_eq!((c.pair_iou_min, c.pair_sim_max), (0.5, 0.5));
        assert_eq!(c.min_segments_per_speaker, 5);
        assert_eq!(c.k_units, 1000);
        assert_eq!(c.frame_hop_ms, 20);
        assert_eq!(c.cluster_tau, 0.75);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::from_toml_str("input_root='a'\noutput_root='b'\nbogus=1\n", Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn inverted_durations_fail_validation() {
        let mut c = PipelineConfig::new("in", "out");
        c.min_duration_s = 16.0;
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("min_duration_s")));
        let mut c = PipelineConfig::new("in", "out");
        c.keep_fraction = 0.0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::new("in", "out");
        c.parallelism = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = PipelineConfig::new("/in", "/out");
        c.adapter_cmd = Some("python sidecar.py".into());
        c.seed = 9;
        assert_eq!(PipelineConfig::from_toml_str(&c.to_toml(), Path::new("/")).unwrap(), c);
    }
}
