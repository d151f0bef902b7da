use serde::{Deserialize, Serialize};

use super::mfcc::frame_count;
use super::AudioBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YinConfig {
    pub f0_min: f64,
    pub f0_max: f64,
    pub threshold: f64,
    pub window_ms: f64,
    pub hop_ms: f64,
}

impl Default for YinConfig {
    fn default() -> Self {
        Self {
            f0_min: 60.0,
            f0_max: 500.0,
            threshold: 0.15,
            window_ms: 40.0,
            hop_ms: 20.0,
        }
    }
}

/// Frame-level F0 and voicing decisions. Unvoiced frames carry `f0_hz == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    pub f0_hz: Vec<f64>,
    pub voiced: Vec<bool>,
    pub hop_ms: f64,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.voiced.is_empty() {
            return 0.0;
        }
        self.voiced.iter().filter(|&&v| v).count() as f64 / self.voiced.len() as f64
    }

    /// Median F0 over voiced frames.
    pub fn median_f0(&self) -> Option<f64> {
        let mut v: Vec<f64> = self
            .f0_hz
            .iter()
            .zip(&self.voiced)
            .filter(|(_, &vo)| vo)
            .map(|(&f, _)| f)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        Some(if v.len() % 2 == 0 {
            0.5 * (v[mid - 1] + v[mid])
        } else {
            v[mid]
        })
    }
}

/// Cumulative-mean-normalized difference for lags `0..=max_lag`.
///
/// The integration window is `frame.len() - max_lag` samples so every lag
/// compares the same number of sample pairs.
fn cmnd(frame: &[f32], max_lag: usize) -> Vec<f64> {
    let w = frame.len() - max_lag;
    let mut out = vec![1.0; max_lag + 1];
    let mut running = 0.0;
    for tau in 1..=max_lag {
        let d: f64 = (0..w)
            .map(|j| {
                let diff = frame[j] as f64 - frame[j + tau] as f64;
                diff * diff
            })
            .sum();
        running += d;
        out[tau] = if running > 0.0 { d * tau as f64 / running } else { 1.0 };
    }
    out
}

fn parabolic_offset(y0: f64, y1: f64, y2: f64) -> f64 {
    let denom = y0 - 2.0 * y1 + y2;
    if denom.abs() < f64::EPSILON {
        0.0
    } else {
        (0.5 * (y0 - y2) / denom).clamp(-1.0, 1.0)
    }
}

/// YIN fundamental-frequency estimation with voiced/unvoiced decisions.
pub fn estimate_pitch_yin(buffer: &AudioBuffer, cfg: &YinConfig) -> PitchTrack {
    let sr = buffer.sample_rate_hz() as f64;
    let window = (cfg.window_ms * sr / 1000.0).round() as usize;
    let hop = ((cfg.hop_ms * sr / 1000.0).round() as usize).max(1);
    let min_lag = ((sr / cfg.f0_max).floor() as usize).max(2);
    let max_lag = (sr / cfg.f0_min).ceil() as usize;

    let mut track = PitchTrack {
        f0_hz: Vec::new(),
        voiced: Vec::new(),
        hop_ms: cfg.hop_ms,
    };
    if window <= max_lag + 1 {
        return track;
    }
    let n_frames = frame_count(buffer.len(), window, hop);
    for f in 0..n_frames {
        let frame = &buffer.samples()[f * hop..f * hop + window];
        let d = cmnd(frame, max_lag);
        let mut estimate = None;
        let mut tau = min_lag;
        while tau < max_lag {
            if d[tau] < cfg.threshold {
                while tau + 1 < max_lag && d[tau + 1] < d[tau] {
                    tau += 1;
                }
                let refined = tau as f64 + parabolic_offset(d[tau - 1], d[tau], d[tau + 1]);
                let f0 = sr / refined;
                if (cfg.f0_min..=cfg.f0_max).contains(&f0) {
                    estimate = Some(f0);
                }
                break;
            }
            tau += 1;
        }
        track.voiced.push(estimate.is_some());
        track.f0_hz.push(estimate.unwrap_or(0.0));
    }
    track
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, n: usize) -> AudioBuffer {
        let s = (0..n)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin()) as f32)
            .collect();
        AudioBuffer::new(s, 16_000).unwrap()
    }

    #[test]
    fn tracks_220_hz() {
        let t = estimate_pitch_yin(&sine(220.0, 16_000), &YinConfig::default());
        assert!(t.voiced_fraction() >= 0.9);
        let m = t.median_f0().unwrap();
        assert!((217.8..=222.2).contains(&m), "median {m}");
    }

    #[test]
    fn tracks_110_hz_without_octave_errors() {
        let t = estimate_pitch_yin(&sine(110.0, 16_000), &YinConfig::default());
        let m = t.median_f0().unwrap();
        assert!((m - 110.0).abs() <= 1.1, "median {m}");
        let octave = t
            .f0_hz
            .iter()
            .zip(&t.voiced)
            .filter(|(&f, &v)| v && ((f / 110.0).log2().abs() > 0.5))
            .count();
        assert!((octave as f64) <= 0.05 * t.len() as f64);
    }

    #[test]
    fn silence_is_unvoiced() {
        let t = estimate_pitch_yin(&AudioBuffer::silence(16_000, 16_000), &YinConfig::default());
        assert_eq!(t.len(), 49);
        assert!(t.voiced.iter().all(|v| !v));
        assert!(t.f0_hz.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn too_short_gives_empty_track() {
        let t = estimate_pitch_yin(&sine(220.0, 100), &YinConfig::default());
        assert!(t.is_empty());
    }
}
