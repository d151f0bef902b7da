use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioBuffer;
use crate::error::{Error, Result};

const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub pre_emphasis: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            hop_ms: 20.0,
            n_mels: 26,
            n_coeffs: 13,
            pre_emphasis: 0.97,
        }
    }
}

/// Row-major `n_frames x n_coeffs` feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMatrix {
    data: Vec<f64>,
    n_coeffs: usize,
    pub hop_ms: f64,
    pub window_ms: f64,
}

impl FrameMatrix {
    pub fn from_rows(data: Vec<f64>, n_coeffs: usize, hop_ms: f64, window_ms: f64) -> Result<Self> {
        if n_coeffs == 0 || data.len() % n_coeffs != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of {n_coeffs}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            n_coeffs,
            hop_ms,
            window_ms,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.n_coeffs
    }

    pub fn n_coeffs(&self) -> usize {
        self.n_coeffs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_coeffs..(i + 1) * self.n_coeffs]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_coeffs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Number of full frames; zero when the signal is shorter than one window.
pub fn frame_count(n_samples: usize, window: usize, hop: usize) -> usize {
    if n_samples < window {
        0
    } else {
        (n_samples - window) / hop + 1
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, evaluated at each FFT bin centre.
fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64, f_max: f64) -> Vec<Vec<f64>> {
    let mel_max = hz_to_mel(f_max);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / n_fft as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II basis, first `n_out` rows.
fn dct_basis(n_in: usize, n_out: usize) -> Vec<Vec<f64>> {
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n_in as f64).sqrt()
            } else {
                (2.0 / n_in as f64).sqrt()
            };
            (0..n_in)
                .map(|n| scale * (PI * k as f64 * (2 * n + 1) as f64 / (2 * n_in) as f64).cos())
                .collect()
        })
        .collect()
}

/// Mel-frequency cepstral coefficients, one row per hop.
///
/// Input must be at 16 kHz. A buffer shorter than one window yields an empty
/// matrix.
pub fn mfcc(buffer: &AudioBuffer, cfg: &MfccConfig) -> Result<FrameMatrix> {
    let sr = buffer.sample_rate_hz() as f64;
    if buffer.sample_rate_hz() != super::CANONICAL_RATE_HZ {
        return Err(Error::InvalidArgument(format!(
            "mfcc expects {} Hz input, got {}",
            super::CANONICAL_RATE_HZ,
            buffer.sample_rate_hz()
        )));
    }
    if cfg.n_coeffs == 0 || cfg.n_coeffs > cfg.n_mels {
        return Err(Error::InvalidArgument("need 0 < n_coeffs <= n_mels".into()));
    }
    let window = (cfg.window_ms * sr / 1000.0).round() as usize;
    let hop = (cfg.hop_ms * sr / 1000.0).round() as usize;
    if window == 0 || hop == 0 {
        return Err(Error::InvalidArgument("window and hop must be positive".into()));
    }
    let n_frames = frame_count(buffer.len(), window, hop);
    let n_fft = window.next_power_of_two();
    let hamming: Vec<f64> = (0..window)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (window - 1).max(1) as f64).cos())
        .collect();
    let bank = mel_filterbank(cfg.n_mels, n_fft, sr, sr / 2.0);
    let dct = dct_basis(cfg.n_mels, cfg.n_coeffs);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let samples = buffer.samples();
    let mut data = Vec::with_capacity(n_frames * cfg.n_coeffs);
    let mut spectrum = vec![Complex::new(0.0, 0.0); n_fft];
    let mut log_mel = vec![0.0; cfg.n_mels];
    for f in 0..n_frames {
        let frame = &samples[f * hop..f * hop + window];
        spectrum.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        let mut prev = 0.0;
        for (i, &s) in frame.iter().enumerate() {
            let s = s as f64;
            let emphasized = if i == 0 { s } else { s - cfg.pre_emphasis * prev };
            prev = s;
            spectrum[i].re = emphasized * hamming[i];
        }
        fft.process(&mut spectrum);
        let power: Vec<f64> = spectrum[..n_fft / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr() / n_fft as f64)
            .collect();
        for (m, filt) in bank.iter().enumerate() {
            let energy: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
            log_mel[m] = energy.max(LOG_FLOOR).ln();
        }
        for basis in &dct {
            data.push(basis.iter().zip(&log_mel).map(|(b, x)| b * x).sum());
        }
    }
    FrameMatrix::from_rows(data, cfg.n_coeffs, cfg.hop_ms, cfg.window_ms)
}
