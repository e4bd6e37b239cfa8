//! Deterministic source-filter vowel synthesis and the nuisance
//! transformation model `s'(t) = v(t) * s(phi(t)) + n(t)`: time
//! scaling/shifting, channel FIR filtering, seeded additive noise, and
//! exact circular shifts for invariance tests.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::audio::RawSignal;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad vowel spec: {0}")]
    BadSpec(String),
    #[error("bad transform spec: {0}")]
    BadTransform(String),
    #[error("pitch/formant scaling needs the source vowel spec; re-synthesize instead")]
    UnsupportedOnRawAudio,
}

/// A synthetic vowel: three formant resonances excited by an impulse
/// train at the fundamental.
#[derive(Debug, Clone, PartialEq)]
pub struct VowelSpec {
    pub class_name: String,
    pub formants_hz: [f64; 3],
    pub bandwidths_hz: [f64; 3],
    pub f0_hz: f64,
    pub duration_ms: f64,
}

impl VowelSpec {
    pub fn validate(&self, rate: u32) -> Result<(), SynthError> {
        let [f1, f2, f3] = self.formants_hz;
        if !(f1 > 0.0 && f1 < f2 && f2 < f3 && f3 < rate as f64 / 2.0) {
            return Err(SynthError::BadSpec(format!(
                "formants must satisfy 0 < F1 < F2 < F3 < rate/2, got {:?} at {} Hz",
                self.formants_hz, rate
            )));
        }
        if self.bandwidths_hz.iter().any(|&b| b <= 0.0) {
            return Err(SynthError::BadSpec("bandwidths must be positive".to_string()));
        }
        if !(self.f0_hz > 0.0) {
            return Err(SynthError::BadSpec("f0 must be positive".to_string()));
        }
        if !(self.duration_ms > 0.0) {
            return Err(SynthError::BadSpec("duration must be positive".to_string()));
        }
        Ok(())
    }
}

/// Nuisance transform parameters. The identity is `a = 1`, zero shift,
/// FIR `[1]`, no noise, unit pitch/formant scales.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub time_scale: f64,
    pub time_shift_ms: f64,
    pub channel_fir: Vec<f64>,
    pub noise_snr_db: Option<f64>,
    pub pitch_scale: f64,
    pub formant_scale: f64,
    pub seed: u64,
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self {
            time_scale: 1.0,
            time_shift_ms: 0.0,
            channel_fir: vec![1.0],
            noise_snr_db: None,
            pitch_scale: 1.0,
            formant_scale: 1.0,
            seed: 0,
        }
    }
}

impl TransformSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.time_scale > 0.0) {
            return Err(SynthError::BadTransform("time_scale must be positive".to_string()));
        }
        if !(self.pitch_scale > 0.0 && self.formant_scale > 0.0) {
            return Err(SynthError::BadTransform(
                "pitch_scale and formant_scale must be positive".to_string(),
            ));
        }
        if self.channel_fir.is_empty() {
            return Err(SynthError::BadTransform("FIR must be nonempty".to_string()));
        }
        Ok(())
    }

    fn is_identity_fir(&self) -> bool {
        self.channel_fir == [1.0]
    }
}

/// Synthesize a vowel: an impulse train at `f0` driven through three
/// cascaded second-order all-pole resonators, peak-normalized to 0.5.
pub fn synth_vowel(spec: &VowelSpec, rate: u32) -> Result<RawSignal, SynthError> {
    spec.validate(rate)?;
    let n = (spec.duration_ms * rate as f64 / 1000.0).round() as usize;
    if n == 0 {
        return Err(SynthError::BadSpec("duration rounds to zero samples".to_string()));
    }
    // impulse train with fractional phase accumulation
    let mut x = vec![0.0; n];
    let mut phase = 1.0; // fire on the first sample
    let step = spec.f0_hz / rate as f64;
    for slot in x.iter_mut() {
        if phase >= 1.0 {
            *slot = 1.0;
            phase -= 1.0;
        }
        phase += step;
    }
    // resonator cascade, unit DC gain each
    for (&f, &bw) in spec.formants_hz.iter().zip(&spec.bandwidths_hz) {
        let r = (-std::f64::consts::PI * bw / rate as f64).exp();
        let theta = 2.0 * std::f64::consts::PI * f / rate as f64;
        let b = 2.0 * r * theta.cos();
        let c = -r * r;
        let a = 1.0 - b - c;
        let (mut y1, mut y2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = a * *v + b * y1 + c * y2;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak <= 0.0 {
        return Err(SynthError::BadSpec("synthesized signal has zero energy".to_string()));
    }
    let scale = 0.5 / peak;
    for v in &mut x {
        *v *= scale;
    }
    Ok(RawSignal { samples: x, rate })
}

/// Rescale a vowel spec for pitch/formant nuisances (vocal-tract length
/// proxy); the result is re-synthesized rather than warped in the signal
/// domain.
pub fn transform_vowel_spec(spec: &VowelSpec, t: &TransformSpec) -> VowelSpec {
    VowelSpec {
        class_name: spec.class_name.clone(),
        formants_hz: spec.formants_hz.map(|f| f * t.formant_scale),
        bandwidths_hz: spec.bandwidths_hz,
        f0_hz: spec.f0_hz * t.pitch_scale,
        duration_ms: spec.duration_ms,
    }
}

fn resample_linear(samples: &[f64], scale: f64) -> Vec<f64> {
    let l = samples.len();
    if l == 0 {
        return Vec::new();
    }
    let out_len = (((l - 1) as f64) / scale).floor() as usize + 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * scale;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if lo + 1 < l {
                samples[lo] * (1.0 - frac) + samples[lo + 1] * frac
            } else {
                samples[l - 1]
            }
        })
        .collect()
}

fn convolve_full(signal: &[f64], fir: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let m = fir.len();
    let mut out = vec![0.0; n + m - 1];
    for (i, &s) in signal.iter().enumerate() {
        for (j, &h) in fir.iter().enumerate() {
            out[i + j] += s * h;
        }
    }
    out
}

/// Add seeded white Gaussian noise at the requested SNR relative to the
/// given reference power.
pub fn add_noise(samples: &mut [f64], snr_db: f64, reference_power: f64, seed: u64) {
    if reference_power <= 0.0 || samples.is_empty() {
        return;
    }
    let noise_power = reference_power / 10f64.powf(snr_db / 10.0);
    let sigma = noise_power.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    for v in samples.iter_mut() {
        *v += normal.sample(&mut rng);
    }
}

fn mean_power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64
}

/// Apply the transformation model to raw audio: time-scale by linear
/// interpolation, shift, convolve with the channel FIR, add noise.
/// The identity spec returns the input bit-exactly. Pitch or formant
/// scaling cannot be applied to raw audio and is an error here.
pub fn apply_transform(signal: &RawSignal, spec: &TransformSpec) -> Result<RawSignal, SynthError> {
    spec.validate()?;
    if spec.pitch_scale != 1.0 || spec.formant_scale != 1.0 {
        return Err(SynthError::UnsupportedOnRawAudio);
    }
    let rate = signal.rate;
    let mut samples = signal.samples.clone();
    if spec.time_scale != 1.0 {
        samples = resample_linear(&samples, spec.time_scale);
    }
    let shift = (spec.time_shift_ms * rate as f64 / 1000.0).round() as i64;
    if shift > 0 {
        let mut shifted = vec![0.0; shift as usize];
        shifted.extend_from_slice(&samples);
        samples = shifted;
    } else if shift < 0 {
        let drop = (-shift) as usize;
        if drop >= samples.len() {
            return Err(SynthError::BadTransform(format!(
                "negative shift {} ms drops the whole signal",
                spec.time_shift_ms
            )));
        }
        samples = samples[drop..].to_vec();
    }
    if !spec.is_identity_fir() {
        samples = convolve_full(&samples, &spec.channel_fir);
    }
    if let Some(snr) = spec.noise_snr_db {
        let power = mean_power(&samples);
        add_noise(&mut samples, snr, power, spec.seed);
    }
    Ok(RawSignal { samples, rate })
}

/// Exact circular shift: `out[i] = x[(i - j) mod dim]`. The group action
/// used by the invariance tests; preserves mean and norm exactly.
pub fn circular_shift(x: &[f64], j: usize) -> Vec<f64> {
    let d = x.len();
    assert!(d > 0, "cannot shift an empty vector");
    let j = j % d;
    let mut out = Vec::with_capacity(d);
    out.extend_from_slice(&x[d - j..]);
    out.extend_from_slice(&x[..d - j]);
    out
}
