//! Frame-level acoustic front-end: MFS, MFB, MFC and PLP coefficients
//! with first- and second-order derivatives.
//!
//! The chain is framing (pre-emphasis + Hamming window), power spectrum,
//! mel filterbank, then a kind-specific encoding:
//!
//! - MFS: 40 linear mel-band energies plus log frame energy (d = 41)
//! - MFB: log of the MFS channels, same log energy channel (d = 41)
//! - MFC: orthonormal DCT-II of 26 log mel energies, keep 13 (d = 13)
//! - PLP: 26 mel energies, equal-loudness weighted, cube-root compressed,
//!   inverse cosine transform to autocorrelation, Levinson-Durbin order 12,
//!   LPC-to-cepstra, keep 13 (d = 13)

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

use crate::audio::RawSignal;
use crate::config::{ConfigError, KeyValues};

/// Floor applied before logs and root compression so silence frames stay
/// finite.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("signal too short: {len} samples, window needs {window}")]
    SignalTooShort { len: usize, window: usize },
    #[error("bad filterbank band: fmin {fmin} must be below fmax {fmax}")]
    BadBand { fmin: f64, fmax: f64 },
    #[error("numerically singular autocorrelation: {0}")]
    NumericallySingular(String),
    #[error("bad front-end config: {0}")]
    BadConfig(String),
    #[error("non-finite value produced at frame {frame}")]
    NonFinite { frame: usize },
    #[error("feature file format error: {0}")]
    FormatError(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Front-end parameters. Defaults follow the standard 25 ms / 10 ms,
/// 40+1 / 26-band, order-12 setup.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub preemphasis: f64,
    pub n_mels_spectral: usize,
    pub n_mels_cepstral: usize,
    pub n_cepstra: usize,
    pub lpc_order: usize,
    pub delta_window: usize,
    pub fmin_hz: f64,
    /// Upper band edge; `None` means the Nyquist frequency.
    pub fmax_hz: Option<f64>,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            hop_ms: 10.0,
            preemphasis: 0.97,
            n_mels_spectral: 40,
            n_mels_cepstral: 26,
            n_cepstra: 13,
            lpc_order: 12,
            delta_window: 2,
            fmin_hz: 0.0,
            fmax_hz: None,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<(), FrontendError> {
        let bad = |m: String| Err(FrontendError::BadConfig(m));
        if !(self.hop_ms > 0.0 && self.window_ms >= self.hop_ms) {
            return bad(format!(
                "need window_ms >= hop_ms > 0, got {} / {}",
                self.window_ms, self.hop_ms
            ));
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return bad(format!("preemphasis {} outside [0,1)", self.preemphasis));
        }
        if self.n_cepstra > self.n_mels_cepstral {
            return bad(format!(
                "n_cepstra {} exceeds n_mels_cepstral {}",
                self.n_cepstra, self.n_mels_cepstral
            ));
        }
        if self.lpc_order >= self.n_mels_cepstral {
            return bad(format!(
                "lpc_order {} must be below n_mels_cepstral {}",
                self.lpc_order, self.n_mels_cepstral
            ));
        }
        if self.n_mels_spectral == 0 || self.n_mels_cepstral == 0 || self.n_cepstra == 0 {
            return bad("filter/coefficient counts must be positive".to_string());
        }
        if self.delta_window == 0 {
            return bad("delta_window must be positive".to_string());
        }
        Ok(())
    }

    /// Window length in samples at the given rate.
    pub fn window_samples(&self, rate: u32) -> usize {
        (self.window_ms * rate as f64 / 1000.0).round() as usize
    }

    /// Hop length in samples at the given rate.
    pub fn hop_samples(&self, rate: u32) -> usize {
        (self.hop_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn fmax_for(&self, rate: u32) -> f64 {
        self.fmax_hz.unwrap_or(rate as f64 / 2.0)
    }

    /// Read overrides from a `key = value` set with an optional key prefix
    /// (the pipeline uses `frontend.`).
    pub fn from_key_values(kv: &KeyValues, prefix: &str) -> Result<Self, ConfigError> {
        let d = Self::default();
        let k = |name: &str| format!("{prefix}{name}");
        let cfg = Self {
            window_ms: kv.get_parsed(&k("window_ms"), d.window_ms)?,
            hop_ms: kv.get_parsed(&k("hop_ms"), d.hop_ms)?,
            preemphasis: kv.get_parsed(&k("preemphasis"), d.preemphasis)?,
            n_mels_spectral: kv.get_parsed(&k("n_mels_spectral"), d.n_mels_spectral)?,
            n_mels_cepstral: kv.get_parsed(&k("n_mels_cepstral"), d.n_mels_cepstral)?,
            n_cepstra: kv.get_parsed(&k("n_cepstra"), d.n_cepstra)?,
            lpc_order: kv.get_parsed(&k("lpc_order"), d.lpc_order)?,
            delta_window: kv.get_parsed(&k("delta_window"), d.delta_window)?,
            fmin_hz: kv.get_parsed(&k("fmin_hz"), d.fmin_hz)?,
            fmax_hz: match kv.get(&k("fmax_hz")) {
                None => None,
                Some(v) => Some(v.parse().map_err(|_| ConfigError::BadValue {
                    key: k("fmax_hz"),
                    value: v.to_string(),
                    wanted: "f64",
                })?),
            },
        };
        cfg.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

/// The four frame-level encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Mfs,
    Mfb,
    Mfc,
    Plp,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [Self::Mfs, Self::Mfb, Self::Mfc, Self::Plp];

    /// Static coefficient count per frame (before deltas). Defaults give
    /// 41 for MFS/MFB and 13 for MFC/PLP.
    pub fn static_dim(self, config: &FrontendConfig) -> usize {
        match self {
            Self::Mfs | Self::Mfb => config.n_mels_spectral + 1,
            Self::Mfc | Self::Plp => config.n_cepstra,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mfs => "MFS",
            Self::Mfb => "MFB",
            Self::Mfc => "MFC",
            Self::Plp => "PLP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MFS" => Some(Self::Mfs),
            "MFB" => Some(Self::Mfb),
            "MFC" => Some(Self::Mfc),
            "PLP" => Some(Self::Plp),
            _ => None,
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-frame coefficients for one utterance: statics, deltas and
/// delta-deltas side by side, so `3 * static_dim` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub values: Array2<f64>,
    pub kind: FeatureKind,
    pub config: FrontendConfig,
    /// Sample rate the frames were extracted at; fixes frame center times.
    pub rate: u32,
}

impl FrameMatrix {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    /// Center of frame `i` in samples of the source signal.
    pub fn frame_center_sample(&self, i: usize) -> f64 {
        let w = self.config.window_samples(self.rate) as f64;
        let h = self.config.hop_samples(self.rate) as f64;
        i as f64 * h + w / 2.0
    }
}

// --- framing ---------------------------------------------------------------

/// Hamming window of the given length.
pub fn hamming_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Cut a signal into overlapping frames, pre-emphasize each frame and
/// apply a Hamming window. Frame count is `1 + floor((L - W) / H)`.
pub fn frame_signal(
    signal: &RawSignal,
    config: &FrontendConfig,
) -> Result<Vec<Vec<f64>>, FrontendError> {
    config.validate()?;
    let w = config.window_samples(signal.rate);
    let h = config.hop_samples(signal.rate);
    if w == 0 || h == 0 {
        return Err(FrontendError::BadConfig(format!(
            "window/hop of {}/{} ms round to zero samples at {} Hz",
            config.window_ms, config.hop_ms, signal.rate
        )));
    }
    let l = signal.len();
    if l < w {
        return Err(FrontendError::SignalTooShort { len: l, window: w });
    }
    let n_frames = 1 + (l - w) / h;
    let window = hamming_window(w);
    let k = config.preemphasis;
    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let start = f * h;
        let raw = &signal.samples[start..start + w];
        let mut frame = Vec::with_capacity(w);
        frame.push(raw[0] * window[0]);
        for n in 1..w {
            frame.push((raw[n] - k * raw[n - 1]) * window[n]);
        }
        frames.push(frame);
    }
    Ok(frames)
}

// --- spectrum --------------------------------------------------------------

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Squared-magnitude FFT of a frame, zero-padded to the next power of two.
/// Returns the `fft_len/2 + 1` non-negative frequency bins, unscaled.
pub fn power_spectrum(frame: &[f64]) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    power_spectrum_with(frame, &mut planner)
}

/// As [`power_spectrum`], reusing an FFT planner across frames.
pub fn power_spectrum_with(frame: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let fft_len = next_pow2(frame.len().max(1));
    let fft = planner.plan_fft_forward(fft_len);
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    fft.process(&mut buf);
    buf[..fft_len / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

// --- mel filterbank ---------------------------------------------------------

/// Hz to mel, O'Shaughnessy formula.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

/// Mel to Hz, inverse of [`hz_to_mel`].
pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank with peaks equally spaced on the mel scale
/// and peak height 1. Weights are evaluated at exact bin frequencies.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(
        n_filters: usize,
        n_bins: usize,
        rate: u32,
        fmin_hz: f64,
        fmax_hz: f64,
    ) -> Result<Self, FrontendError> {
        if fmin_hz >= fmax_hz {
            return Err(FrontendError::BadBand {
                fmin: fmin_hz,
                fmax: fmax_hz,
            });
        }
        assert!(n_filters >= 1 && n_bins >= 2);
        let fft_len = (n_bins - 1) * 2;
        let mel_lo = hz_to_mel(fmin_hz);
        let mel_hi = hz_to_mel(fmax_hz);
        let edges_hz: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_filters + 1) as f64))
            .collect();
        let mut weights = Vec::with_capacity(n_filters);
        for j in 0..n_filters {
            let (left, center, right) = (edges_hz[j], edges_hz[j + 1], edges_hz[j + 2]);
            let mut w = vec![0.0; n_bins];
            for (bin, slot) in w.iter_mut().enumerate() {
                let f = bin as f64 * rate as f64 / fft_len as f64;
                if f > left && f < center {
                    *slot = (f - left) / (center - left);
                } else if f == center {
                    *slot = 1.0;
                } else if f > center && f < right {
                    *slot = (right - f) / (right - center);
                }
            }
            weights.push(w);
        }
        let centers_hz = edges_hz[1..=n_filters].to_vec();
        Ok(Self {
            weights,
            centers_hz,
            edges_hz,
        })
    }

    pub fn n_filters(&self) -> usize {
        self.weights.len()
    }

    /// Peak center frequency of each filter in Hz.
    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Band `(left, right)` covered by filter `j` in Hz.
    pub fn band_hz(&self, j: usize) -> (f64, f64) {
        (self.edges_hz[j], self.edges_hz[j + 2])
    }

    pub fn weights(&self, j: usize) -> &[f64] {
        &self.weights[j]
    }

    /// Filter energies for a power spectrum.
    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(spectrum).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// One-shot filterbank application matching the struct-based path.
pub fn mel_filterbank(
    spectrum: &[f64],
    n_filters: usize,
    fmin_hz: f64,
    fmax_hz: f64,
    rate: u32,
) -> Result<Vec<f64>, FrontendError> {
    let fb = MelFilterbank::new(n_filters, spectrum.len(), rate, fmin_hz, fmax_hz)?;
    Ok(fb.apply(spectrum))
}

// --- cepstra ----------------------------------------------------------------

/// Orthonormal DCT-II: `c_k = a_k * sum_m x_m cos(pi k (m + 0.5) / M)` with
/// `a_0 = sqrt(1/M)`, `a_k = sqrt(2/M)`.
pub fn dct_cepstra(log_energies: &[f64], n_coeffs: usize) -> Vec<f64> {
    let m = log_energies.len();
    assert!(n_coeffs <= m, "n_coeffs {} exceeds input length {}", n_coeffs, m);
    let mut out = Vec::with_capacity(n_coeffs);
    for k in 0..n_coeffs {
        let scale = if k == 0 {
            (1.0 / m as f64).sqrt()
        } else {
            (2.0 / m as f64).sqrt()
        };
        let sum: f64 = log_energies
            .iter()
            .enumerate()
            .map(|(i, &x)| x * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / m as f64).cos())
            .sum();
        out.push(scale * sum);
    }
    out
}

/// Levinson-Durbin recursion solving the Toeplitz normal equations
/// `R a = r` for the forward predictor `x[n] ~ sum_k a_k x[n-k]`.
/// Returns the coefficients and the residual gain.
pub fn levinson_durbin(autocorr: &[f64], order: usize) -> Result<(Vec<f64>, f64), FrontendError> {
    assert!(autocorr.len() > order, "need order+1 autocorrelation lags");
    if !(autocorr[0] > 0.0) {
        return Err(FrontendError::NumericallySingular(format!(
            "autocorr[0] = {} is not positive",
            autocorr[0]
        )));
    }
    let mut a = vec![0.0; order];
    let mut err = autocorr[0];
    for i in 1..=order {
        let mut acc = autocorr[i];
        for j in 1..i {
            acc -= a[j - 1] * autocorr[i - j];
        }
        let k = acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            return Err(FrontendError::NumericallySingular(format!(
                "reflection coefficient {} at lag {}",
                k, i
            )));
        }
        let prev = a.clone();
        a[i - 1] = k;
        for j in 1..i {
            a[j - 1] = prev[j - 1] - k * prev[i - j - 1];
        }
        err *= 1.0 - k * k;
    }
    Ok((a, err))
}

/// LPC to cepstra: `c_0 = ln(gain)`,
/// `c_n = a_n + sum_{k=1}^{n-1} (k/n) c_k a_{n-k}`.
pub fn lpc_to_cepstra(lpc: &[f64], gain: f64, n_coeffs: usize) -> Vec<f64> {
    assert!(n_coeffs >= 1);
    let a = |n: usize| if n >= 1 && n <= lpc.len() { lpc[n - 1] } else { 0.0 };
    let mut c = Vec::with_capacity(n_coeffs);
    c.push(gain.max(LOG_FLOOR).ln());
    for n in 1..n_coeffs {
        let mut v = a(n);
        for k in 1..n {
            v += (k as f64 / n as f64) * c[k] * a(n - k);
        }
        c.push(v);
    }
    c
}

/// Equal-loudness weight at frequency `f` (40 dB curve, rational
/// approximation).
pub fn equal_loudness(f_hz: f64) -> f64 {
    let w2 = (2.0 * std::f64::consts::PI * f_hz).powi(2);
    ((w2 + 56.8e6) * w2 * w2) / ((w2 + 6.3e6).powi(2) * (w2 + 0.38e9))
}

/// Inverse cosine transform of `m` band values to `order + 1`
/// autocorrelation lags, duplicating the band edges across DC and Nyquist.
pub fn bands_to_autocorr(bands: &[f64], order: usize) -> Vec<f64> {
    let m = bands.len();
    let half = m + 1;
    let norm = 1.0 / (2.0 * half as f64);
    (0..=order)
        .map(|tau| {
            let mut acc = bands[0]; // DC duplicate
            for (i, &b) in bands.iter().enumerate() {
                let angle = std::f64::consts::PI * tau as f64 * (i + 1) as f64 / half as f64;
                acc += 2.0 * b * angle.cos();
            }
            acc += bands[m - 1] * if tau % 2 == 0 { 1.0 } else { -1.0 }; // Nyquist duplicate
            acc * norm
        })
        .collect()
}

// --- deltas -----------------------------------------------------------------

/// Append first- and second-order regression deltas:
/// `d_t = sum_{th=1}^{T} th (x_{t+th} - x_{t-th}) / (2 sum th^2)`,
/// with boundary frames replicated. Output has 3x the input columns.
pub fn append_deltas(statics: &Array2<f64>, delta_window: usize) -> Array2<f64> {
    let deltas = regression_deltas(statics, delta_window);
    let ddeltas = regression_deltas(&deltas, delta_window);
    let (rows, cols) = statics.dim();
    let mut out = Array2::zeros((rows, cols * 3));
    for r in 0..rows {
        for c in 0..cols {
            out[[r, c]] = statics[[r, c]];
            out[[r, cols + c]] = deltas[[r, c]];
            out[[r, 2 * cols + c]] = ddeltas[[r, c]];
        }
    }
    out
}

fn regression_deltas(x: &Array2<f64>, theta: usize) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let denom: f64 = 2.0 * (1..=theta).map(|t| (t * t) as f64).sum::<f64>();
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for t in 1..=theta {
            let fwd = (r + t).min(rows - 1);
            let bwd = r.saturating_sub(t);
            for c in 0..cols {
                out[[r, c]] += t as f64 * (x[[fwd, c]] - x[[bwd, c]]);
            }
        }
        for c in 0..cols {
            out[[r, c]] /= denom;
        }
    }
    out
}

// --- full extraction ---------------------------------------------------------

/// Extract a [`FrameMatrix`] for one utterance.
pub fn extract_features(
    signal: &RawSignal,
    kind: FeatureKind,
    config: &FrontendConfig,
) -> Result<FrameMatrix, FrontendError> {
    let frames = frame_signal(signal, config)?;
    let w = config.window_samples(signal.rate);
    let fft_len = next_pow2(w);
    let n_bins = fft_len / 2 + 1;
    let fmax = config.fmax_for(signal.rate);
    let n_mels = match kind {
        FeatureKind::Mfs | FeatureKind::Mfb => config.n_mels_spectral,
        FeatureKind::Mfc | FeatureKind::Plp => config.n_mels_cepstral,
    };
    let fb = MelFilterbank::new(n_mels, n_bins, signal.rate, config.fmin_hz, fmax)?;
    let loudness: Vec<f64> = fb.centers_hz().iter().map(|&f| equal_loudness(f)).collect();
    let mut planner = FftPlanner::new();

    let d = kind.static_dim(config);
    let mut statics = Array2::zeros((frames.len(), d));
    for (i, frame) in frames.iter().enumerate() {
        let energy: f64 = frame.iter().map(|x| x * x).sum();
        let spectrum = power_spectrum_with(frame, &mut planner);
        let bands = fb.apply(&spectrum);
        let row: Vec<f64> = match kind {
            FeatureKind::Mfs => {
                let mut v = bands;
                v.push(energy.max(LOG_FLOOR).ln());
                v
            }
            FeatureKind::Mfb => {
                let mut v: Vec<f64> = bands.iter().map(|&b| b.max(LOG_FLOOR).ln()).collect();
                v.push(energy.max(LOG_FLOOR).ln());
                v
            }
            FeatureKind::Mfc => {
                let logs: Vec<f64> = bands.iter().map(|&b| b.max(LOG_FLOOR).ln()).collect();
                dct_cepstra(&logs, config.n_cepstra)
            }
            FeatureKind::Plp => {
                let compressed: Vec<f64> = bands
                    .iter()
                    .zip(&loudness)
                    .map(|(&b, &e)| (b * e).max(LOG_FLOOR).powf(0.33))
                    .collect();
                let autocorr = bands_to_autocorr(&compressed, config.lpc_order);
                let (lpc, gain) = levinson_durbin(&autocorr, config.lpc_order)?;
                lpc_to_cepstra(&lpc, gain, config.n_cepstra)
            }
        };
        debug_assert_eq!(row.len(), d);
        for (c, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(FrontendError::NonFinite { frame: i });
            }
            statics[[i, c]] = v;
        }
    }
    let values = append_deltas(&statics, config.delta_window);
    Ok(FrameMatrix {
        values,
        kind,
        config: config.clone(),
        rate: signal.rate,
    })
}

// --- feature CSV -----------------------------------------------------------------

/// Write frame features for many utterances as one CSV:
/// `utterance,frame,c0,...,c{3d-1}` with floats printed with 9
/// significant digits. A comment line records kind, static dim and rate.
pub fn write_feature_csv(
    path: &std::path::Path,
    utterances: &[(String, FrameMatrix)],
) -> Result<(), FrontendError> {
    use crate::util::fmt_sig9;
    assert!(!utterances.is_empty(), "nothing to write");
    let kind = utterances[0].1.kind;
    let rate = utterances[0].1.rate;
    let cols = utterances[0].1.values.ncols();
    let mut out = String::new();
    out.push_str(&format!("# kind={} d={} rate={}\n", kind, cols / 3, rate));
    out.push_str("utterance,frame");
    for c in 0..cols {
        out.push_str(&format!(",c{}", c));
    }
    out.push('\n');
    for (utt, fm) in utterances {
        assert_eq!(fm.kind, kind, "mixed kinds in one feature file");
        for r in 0..fm.n_frames() {
            out.push_str(utt);
            out.push_str(&format!(",{}", r));
            for c in 0..cols {
                out.push(',');
                out.push_str(&fmt_sig9(fm.values[[r, c]]));
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a feature CSV back into per-utterance [`FrameMatrix`] values,
/// reusing the front-end config the features were extracted with.
pub fn read_feature_csv(
    path: &std::path::Path,
    config: &FrontendConfig,
) -> Result<Vec<(String, FrameMatrix)>, FrontendError> {
    let text = std::fs::read_to_string(path)?;
    let bad = |line: usize, msg: &str| {
        FrontendError::FormatError(format!("{}:{}: {}", path.display(), line + 1, msg))
    };
    let mut kind = None;
    let mut rate = None;
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            for token in rest.split_whitespace() {
                if let Some((key, value)) = token.split_once('=') {
                    match key {
                        "kind" => kind = FeatureKind::parse(value),
                        "rate" => rate = value.parse::<u32>().ok(),
                        _ => {}
                    }
                }
            }
            continue;
        }
        if line.starts_with("utterance,") || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let utt = fields.next().ok_or_else(|| bad(i, "missing utterance"))?;
        let _frame = fields.next().ok_or_else(|| bad(i, "missing frame index"))?;
        let values: Result<Vec<f64>, _> = fields.map(|f| f.parse::<f64>()).collect();
        let values = values.map_err(|_| bad(i, "bad float"))?;
        rows.push((utt.to_string(), values));
    }
    let kind = kind.ok_or_else(|| bad(0, "missing kind comment"))?;
    let rate = rate.ok_or_else(|| bad(0, "missing rate comment"))?;
    let mut out: Vec<(String, FrameMatrix)> = Vec::new();
    let mut current: Option<(String, Vec<Vec<f64>>)> = None;
    let flush = |current: &mut Option<(String, Vec<Vec<f64>>)>,
                 out: &mut Vec<(String, FrameMatrix)>| {
        if let Some((utt, frames)) = current.take() {
            let cols = frames[0].len();
            let values =
                Array2::from_shape_fn((frames.len(), cols), |(r, c)| frames[r][c]);
            out.push((
                utt,
                FrameMatrix {
                    values,
                    kind,
                    config: config.clone(),
                    rate,
                },
            ));
        }
    };
    for (utt, values) in rows {
        match &mut current {
            Some((cur, frames)) if *cur == utt => frames.push(values),
            _ => {
                flush(&mut current, &mut out);
                current = Some((utt, vec![values]));
            }
        }
    }
    flush(&mut current, &mut out);
    Ok(out)
}
