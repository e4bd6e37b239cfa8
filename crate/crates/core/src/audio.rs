//! Raw audio signals and WAV file I/O.
//!
//! The on-disk format is fixed: RIFF/WAVE, PCM 16-bit signed little-endian,
//! mono. Samples are scaled to [-1, 1) by dividing by 32768.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

/// A mono audio signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSignal {
    pub samples: Vec<f64>,
    /// Sample rate in Hz.
    pub rate: u32,
}

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("wav format error: {0}")]
    Format(String),
    #[error("signal contains non-finite samples")]
    NonFinite,
    #[error("sample rate must be positive")]
    BadRate,
}

impl RawSignal {
    /// Build a signal, validating that the rate is positive and every
    /// sample is finite.
    pub fn new(samples: Vec<f64>, rate: u32) -> Result<Self, AudioError> {
        if rate == 0 {
            return Err(AudioError::BadRate);
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite);
        }
        Ok(Self { samples, rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn read_u16(bytes: &[u8], at: usize) -> Option<u16> {
    bytes.get(at..at + 2).map(|b| u16::from_le_bytes([b[0], b[1]]))
}

/// Parse a PCM16 mono WAV from raw bytes.
pub fn wav_from_bytes(bytes: &[u8]) -> Result<RawSignal, AudioError> {
    let err = |m: &str| AudioError::Format(m.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(err("not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4).ok_or_else(|| err("truncated chunk header"))? as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(err("truncated chunk body"));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(err("fmt chunk too small"));
                }
                let format = read_u16(bytes, body_start).unwrap();
                let channels = read_u16(bytes, body_start + 2).unwrap();
                let rate = read_u32(bytes, body_start + 4).unwrap();
                let bits = read_u16(bytes, body_start + 14).unwrap();
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(&bytes[body_start..body_start + size]),
            _ => {} // skip LIST, fact, etc.
        }
        // chunks are word-aligned
        pos = body_start + size + (size & 1);
    }
    let (format, channels, rate, bits) = fmt.ok_or_else(|| err("missing fmt chunk"))?;
    if format != 1 {
        return Err(err("only PCM (format 1) is supported"));
    }
    if channels != 1 {
        return Err(err("only mono is supported"));
    }
    if bits != 16 {
        return Err(err("only 16-bit samples are supported"));
    }
    if rate == 0 {
        return Err(AudioError::BadRate);
    }
    let data = data.ok_or_else(|| err("missing data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(err("odd data chunk length"));
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    Ok(RawSignal { samples, rate })
}

/// Serialize a signal as PCM16 mono WAV bytes. Samples are clipped to the
/// representable range.
pub fn wav_to_bytes(signal: &RawSignal) -> Vec<u8> {
    let n = signal.samples.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&signal.rate.to_le_bytes());
    out.extend_from_slice(&(signal.rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in &signal.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Read a WAV file from disk.
pub fn read_wav(path: &Path) -> Result<RawSignal, AudioError> {
    let bytes = fs::read(path)?;
    wav_from_bytes(&bytes)
}

/// Write a signal to disk as WAV.
pub fn write_wav(path: &Path, signal: &RawSignal) -> Result<(), AudioError> {
    fs::write(path, wav_to_bytes(signal))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_quantized_samples() {
        let samples: Vec<f64> = (0..100).map(|i| ((i * 257) % 401) as f64 / 401.0 - 0.5).collect();
        let sig = RawSignal::new(samples, 16000).unwrap();
        let back = wav_from_bytes(&wav_to_bytes(&sig)).unwrap();
        assert_eq!(back.rate, 16000);
        assert_eq!(back.len(), sig.len());
        for (a, b) in sig.samples.iter().zip(back.samples.iter()) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn exact_quantized_values_roundtrip_bitwise() {
        let samples: Vec<f64> = vec![0.0, 1.0 / 32768.0, -1.0, 0.5];
        let sig = RawSignal::new(samples.clone(), 8000).unwrap();
        let back = wav_from_bytes(&wav_to_bytes(&sig)).unwrap();
        assert_eq!(back.samples, samples);
    }

    #[test]
    fn rejects_stereo_and_non_pcm() {
        let sig = RawSignal::new(vec![0.0; 4], 8000).unwrap();
        let mut bytes = wav_to_bytes(&sig);
        bytes[22] = 2; // channels
        assert!(matches!(wav_from_bytes(&bytes), Err(AudioError::Format(_))));
        let mut bytes = wav_to_bytes(&sig);
        bytes[20] = 3; // IEEE float
        assert!(matches!(wav_from_bytes(&bytes), Err(AudioError::Format(_))));
    }

    #[test]
    fn rejects_truncated_file() {
        let sig = RawSignal::new(vec![0.1; 32], 8000).unwrap();
        let bytes = wav_to_bytes(&sig);
        assert!(wav_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(wav_from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn skips_extra_chunks() {
        let sig = RawSignal::new(vec![0.25; 8], 44100).unwrap();
        let bytes = wav_to_bytes(&sig);
        // splice a LIST chunk between fmt and data
        let mut spliced = bytes[..36].to_vec();
        spliced.extend_from_slice(b"LIST");
        spliced.extend_from_slice(&4u32.to_le_bytes());
        spliced.extend_from_slice(b"INFO");
        spliced.extend_from_slice(&bytes[36..]);
        let total = (spliced.len() - 8) as u32;
        spliced[4..8].copy_from_slice(&total.to_le_bytes());
        let back = wav_from_bytes(&spliced).unwrap();
        assert_eq!(back.len(), 8);
        assert_eq!(back.rate, 44100);
    }

    #[test]
    fn validates_signal_construction() {
        assert!(matches!(RawSignal::new(vec![0.0], 0), Err(AudioError::BadRate)));
        assert!(matches!(
            RawSignal::new(vec![f64::NAN], 8000),
            Err(AudioError::NonFinite)
        ));
    }
}
