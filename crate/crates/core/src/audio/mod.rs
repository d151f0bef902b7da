//! Mono audio buffers, WAV I/O and frame-level features.

mod mfcc;
mod pitch;
mod resample;

use std::io::{Read, Seek, Write};
use std::path::Path;

pub use mfcc::{frame_count, mfcc, FrameMatrix, MfccConfig};
pub use pitch::{estimate_pitch_yin, PitchTrack, YinConfig};
pub use resample::resample;

use crate::error::{Error, Result};

/// Rate every pipeline stage works at.
pub const CANONICAL_RATE_HZ: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    /// Wraps mono samples, clamping each to `[-1, 1]`.
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        let samples = samples
            .into_iter()
            .map(|s| if s.is_nan() { 0.0 } else { s.clamp(-1.0, 1.0) })
            .collect();
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn silence(n: usize, sample_rate_hz: u32) -> Self {
        Self {
            samples: vec![0.0; n],
            sample_rate_hz,
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Duration in whole milliseconds, rounded down.
    pub fn duration_ms(&self) -> u64 {
        self.samples.len() as u64 * 1000 / self.sample_rate_hz as u64
    }

    fn sample_at_ms(&self, ms: u64) -> usize {
        (ms * self.sample_rate_hz as u64 / 1000) as usize
    }
}

/// Cuts `[start_ms, end_ms)` out of `buffer`, sample-exact.
pub fn slice(buffer: &AudioBuffer, start_ms: u64, end_ms: u64) -> Result<AudioBuffer> {
    let out_of_range = || Error::SliceOutOfRange {
        start_ms,
        end_ms,
        duration_ms: buffer.duration_ms(),
    };
    if start_ms >= end_ms {
        return Err(out_of_range());
    }
    let start = buffer.sample_at_ms(start_ms);
    let end = buffer.sample_at_ms(end_ms);
    if end > buffer.len() {
        return Err(out_of_range());
    }
    Ok(AudioBuffer {
        samples: buffer.samples[start..end].to_vec(),
        sample_rate_hz: buffer.sample_rate_hz,
    })
}

fn decode<R: Read>(reader: hound::WavReader<R>) -> std::result::Result<AudioBuffer, WavDecodeError> {
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(WavDecodeError::Unsupported(format!(
            "{} channels",
            spec.channels
        )));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Int, bits) => {
            return Err(WavDecodeError::Unsupported(format!("PCM {bits}-bit integer")))
        }
        (hound::SampleFormat::Float, bits) => {
            return Err(WavDecodeError::Unsupported(format!("IEEE float {bits}-bit")))
        }
    };
    let samples = if spec.channels == 2 {
        interleaved
            .chunks_exact(2)
            .map(|c| 0.5 * (c[0] + c[1]))
            .collect()
    } else {
        interleaved
    };
    AudioBuffer::new(samples, spec.sample_rate).map_err(|_| WavDecodeError::Unsupported("sample rate 0".into()))
}

enum WavDecodeError {
    Unsupported(String),
    Hound(hound::Error),
}

impl From<hound::Error> for WavDecodeError {
    fn from(e: hound::Error) -> Self {
        WavDecodeError::Hound(e)
    }
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::Unsupported => Error::UnsupportedFormat(format!("{}: unsupported WAV encoding", path.display())),
        hound::Error::FormatError(msg) if msg.contains("format tag") || msg.contains("not supported") => {
            Error::UnsupportedFormat(format!("{}: {msg}", path.display()))
        }
        source => Error::Wav {
            path: path.to_path_buf(),
            source,
        },
    }
}

/// Reads a PCM16 or 32-bit float WAV, averaging stereo down to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_wav_bytes(&bytes).map_err(|e| match e {
        Error::Wav { source, .. } => map_hound(path, source),
        Error::UnsupportedFormat(msg) => Error::UnsupportedFormat(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// In-memory counterpart of [`read_wav`].
pub fn read_wav_bytes(bytes: &[u8]) -> Result<AudioBuffer> {
    let reader = hound::WavReader::new(std::io::Cursor::new(bytes)).map_err(|e| map_hound(Path::new("<memory>"), e))?;
    decode(reader).map_err(|e| match e {
        WavDecodeError::Unsupported(tag) => Error::UnsupportedFormat(tag),
        WavDecodeError::Hound(e) => map_hound(Path::new("<memory>"), e),
    })
}

fn quantize(s: f32) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn encode<W: Write + Seek>(buffer: &AudioBuffer, writer: W) -> std::result::Result<(), hound::Error> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::new(writer, spec)?;
    {
        let mut w16 = w.get_i16_writer(buffer.samples.len() as u32);
        for &s in &buffer.samples {
            w16.write_sample(quantize(s));
        }
        w16.flush()?;
    }
    w.finalize()
}

/// Encodes a buffer as a PCM16 mono WAV file image.
pub fn wav_bytes(buffer: &AudioBuffer) -> Vec<u8> {
    let mut cursor = std::io::Cursor::new(Vec::new());
    encode(buffer, &mut cursor).expect("in-memory WAV encoding cannot fail");
    cursor.into_inner()
}

/// Writes PCM16 mono.
pub fn write_wav(path: impl AsRef<Path>, buffer: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, wav_bytes(buffer)).map_err(|e| Error::io(path, e))
}
