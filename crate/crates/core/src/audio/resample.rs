use super::AudioBuffer;
use crate::error::{Error, Result};

/// Low-pass cutoff as a fraction of the lower of the two rates.
const CUTOFF_FRACTION: f64 = 0.45;
/// Filter zero crossings on each side of the centre tap.
const ZERO_CROSSINGS: f64 = 16.0;
const KAISER_BETA: f64 = 8.6;

const MIN_RATE: u32 = 8_000;
const MAX_RATE: u32 = 48_000;

/// Zeroth-order modified Bessel function of the first kind, by power series.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(x: f64, beta: f64) -> f64 {
    if x.abs() >= 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - x * x).sqrt()) / bessel_i0(beta)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Windowed-sinc polyphase resampler.
///
/// `up` phases of a Kaiser-windowed low-pass with cutoff at 0.45 of the lower
/// rate. Each phase is normalized to unit DC gain and edges replicate the
/// first/last sample, so constant input stays constant.
struct Polyphase {
    up: u64,
    down: u64,
    half_taps: i64,
    phases: Vec<Vec<f64>>,
}

impl Polyphase {
    fn new(source_hz: u32, target_hz: u32) -> Self {
        let g = gcd(source_hz as u64, target_hz as u64);
        let up = target_hz as u64 / g;
        let down = source_hz as u64 / g;
        // Cutoff normalized to the input sample rate (cycles per input sample).
        let fc = CUTOFF_FRACTION * source_hz.min(target_hz) as f64 / source_hz as f64;
        let half_width = ZERO_CROSSINGS / (2.0 * fc);
        let half_taps = half_width.ceil() as i64;
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                let mut taps: Vec<f64> = (-half_taps + 1..=half_taps)
                    .map(|k| {
                        let u = k as f64 - frac;
                        2.0 * fc * sinc(2.0 * fc * u) * kaiser(u / half_width, KAISER_BETA)
                    })
                    .collect();
                let sum: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|t| *t /= sum);
                taps
            })
            .collect();
        Self {
            up,
            down,
            half_taps,
            phases,
        }
    }

    fn run(&self, input: &[f32], out_len: usize) -> Vec<f32> {
        let last = input.len() as i64 - 1;
        (0..out_len as u64)
            .map(|n| {
                let pos = n * self.down;
                let base = (pos / self.up) as i64;
                let taps = &self.phases[(pos % self.up) as usize];
                let mut acc = 0.0f64;
                for (j, &t) in taps.iter().enumerate() {
                    let idx = (base - self.half_taps + 1 + j as i64).clamp(0, last);
                    acc += t * input[idx as usize] as f64;
                }
                acc as f32
            })
            .collect()
    }
}

/// Converts `buffer` to `target_hz`. A same-rate call returns the input unchanged.
pub fn resample(buffer: &AudioBuffer, target_hz: u32) -> Result<AudioBuffer> {
    if target_hz == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    let source_hz = buffer.sample_rate_hz();
    if source_hz == target_hz {
        return Ok(buffer.clone());
    }
    for rate in [source_hz, target_hz] {
        if !(MIN_RATE..=MAX_RATE).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "sample rate {rate} Hz outside supported range [{MIN_RATE}, {MAX_RATE}]"
            )));
        }
    }
    let out_len = (buffer.len() as f64 * target_hz as f64 / source_hz as f64).round() as usize;
    if buffer.is_empty() {
        return AudioBuffer::new(Vec::new(), target_hz);
    }
    let samples = Polyphase::new(source_hz, target_hz).run(buffer.samples(), out_len);
    AudioBuffer::new(samples, target_hz)
}
