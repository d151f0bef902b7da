//! Resample a synthetic voice-like signal to 16 kHz, then extract MFCCs and
//! a YIN pitch track.

use dubpair::audio::{estimate_pitch_yin, mfcc, resample, AudioBuffer, MfccConfig, YinConfig, CANONICAL_RATE_HZ};

fn main() -> dubpair::Result<()> {
    // One second at 44.1 kHz: a 180 Hz fundamental with two harmonics.
    let rate = 44_100;
    let samples = (0..rate)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let w = 2.0 * std::f64::consts::PI * 180.0 * t;
            (0.4 * w.sin() + 0.2 * (2.0 * w).sin() + 0.1 * (3.0 * w).sin()) as f32
        })
        .collect();
    let original = AudioBuffer::new(samples, rate as u32)?;
    let audio = resample(&original, CANONICAL_RATE_HZ)?;
    println!(
        "resampled {} samples @ {} Hz -> {} samples @ {} Hz",
        original.len(),
        original.sample_rate_hz(),
        audio.len(),
        audio.sample_rate_hz()
    );

    let feats = mfcc(&audio, &MfccConfig::default())?;
    println!("mfcc: {} frames x {} coefficients", feats.n_frames(), feats.n_coeffs());
    let c0: Vec<String> = feats.row(0).iter().take(5).map(|v| format!("{v:.2}")).collect();
    println!("first frame: [{} ...]", c0.join(", "));

    let pitch = estimate_pitch_yin(&audio, &YinConfig::default());
    println!(
        "pitch: {:.1}% voiced, median f0 {:.2} Hz",
        100.0 * pitch.voiced_fraction(),
        pitch.median_f0().unwrap_or(0.0)
    );
    Ok(())
}
