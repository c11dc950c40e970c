//! Front end: PCM audio to log-mel or MFCC feature matrices.
//!
//! All arithmetic is done in `f64`; only the on-disk container narrows to
//! `f32`. Every stage is a pure function of its inputs.

mod dsp;
mod wav;

pub use dsp::{
    extract, frame_and_window, mel_energies, mfcc_from_logmel, power_spectrum, pre_emphasize, DctMatrix, Frames,
    MelFilterbank, PowerSpectrum,
};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

use std::fmt;

use crate::error::{Error, Result};

/// Mono PCM audio, amplitudes in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct PcmSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl PcmSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Domain("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Domain("signal has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::Domain(format!("sample {i} = {} is outside [-1, 1]", samples[i])));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    LogMel,
    Mfcc,
    StandardizedLogMel,
    StandardizedMfcc,
}

impl FeatureKind {
    /// Kind byte used by the SPFX container.
    pub fn code(self) -> u8 {
        match self {
            FeatureKind::LogMel => 0,
            FeatureKind::Mfcc => 1,
            FeatureKind::StandardizedLogMel => 2,
            FeatureKind::StandardizedMfcc => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => FeatureKind::LogMel,
            1 => FeatureKind::Mfcc,
            2 => FeatureKind::StandardizedLogMel,
            3 => FeatureKind::StandardizedMfcc,
            _ => return None,
        })
    }

    pub fn standardized(self) -> Self {
        match self {
            FeatureKind::LogMel | FeatureKind::StandardizedLogMel => FeatureKind::StandardizedLogMel,
            FeatureKind::Mfcc | FeatureKind::StandardizedMfcc => FeatureKind::StandardizedMfcc,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::LogMel => "log_mel",
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::StandardizedLogMel => "standardized_log_mel",
            FeatureKind::StandardizedMfcc => "standardized_mfcc",
        })
    }
}

/// A `T x nu` matrix of feature frames, stored time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    num_frames: usize,
    num_channels: usize,
    frame_shift_ms: f64,
    kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn new(
        data: Vec<f64>,
        num_frames: usize,
        num_channels: usize,
        frame_shift_ms: f64,
        kind: FeatureKind,
    ) -> Result<Self> {
        if num_frames == 0 || num_channels == 0 {
            return Err(Error::Domain(format!(
                "feature matrix must be non-empty, got {num_frames}x{num_channels}"
            )));
        }
        if data.len() != num_frames * num_channels {
            return Err(Error::Domain(format!(
                "data length {} != {num_frames}x{num_channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value at frame {} channel {}",
                i / num_channels,
                i % num_channels
            )));
        }
        Ok(Self {
            data,
            num_frames,
            num_channels,
            frame_shift_ms,
            kind,
        })
    }

    /// Builds a matrix from per-frame rows.
    pub fn from_rows(rows: &[Vec<f64>], frame_shift_ms: f64, kind: FeatureKind) -> Result<Self> {
        let channels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != channels) {
            return Err(Error::Domain("ragged feature rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(data, rows.len(), channels, frame_shift_ms, kind)
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn frame_shift_ms(&self) -> f64 {
        self.frame_shift_ms
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, frame: usize, channel: usize) -> f64 {
        self.data[frame * self.num_channels + channel]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.num_channels..(t + 1) * self.num_channels]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.num_channels)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn set_kind(&mut self, kind: FeatureKind) {
        self.kind = kind;
    }
}

/// Front-end parameters. `None` fields are resolved against the sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct DspConfig {
    pub pre_emphasis: f64,
    pub frame_len_ms: f64,
    pub frame_shift_ms: f64,
    /// Defaults to the smallest power of two holding one frame.
    pub n_fft: Option<usize>,
    pub n_mels: usize,
    /// `Some(n)` adds the DCT stage and keeps `n` cepstral coefficients.
    pub n_coeffs: Option<usize>,
    pub log_floor: f64,
    pub fmin_hz: f64,
    /// Defaults to Nyquist.
    pub fmax_hz: Option<f64>,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            pre_emphasis: 0.97,
            frame_len_ms: 25.0,
            frame_shift_ms: 10.0,
            n_fft: None,
            n_mels: 40,
            n_coeffs: None,
            log_floor: 1e-10,
            fmin_hz: 0.0,
            fmax_hz: None,
        }
    }
}

impl DspConfig {
    /// 40-channel log-mel.
    pub fn librispeech_like() -> Self {
        Self::default()
    }

    /// 80 MFCCs over 80 mel channels. At 16 kHz the default 512-point FFT
    /// cannot resolve 80 distinct low-frequency filter edges, so this uses 1024.
    pub fn iwslt_like() -> Self {
        Self {
            n_fft: Some(1024),
            n_mels: 80,
            n_coeffs: Some(80),
            ..Self::default()
        }
    }

    /// Checks the parameters against `sample_rate` and fills in defaults.
    pub fn resolve(&self, sample_rate: u32) -> Result<FrameLayout> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        let rate = f64::from(sample_rate);
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return Err(Error::Config(format!(
                "pre_emphasis {} must lie in [0, 1)",
                self.pre_emphasis
            )));
        }
        let frame_len = (self.frame_len_ms * rate / 1000.0).round();
        let frame_shift = (self.frame_shift_ms * rate / 1000.0).round();
        if frame_len.is_nan() || frame_len < 1.0 || frame_shift.is_nan() || frame_shift < 1.0 {
            return Err(Error::Config(format!(
                "frame length {} ms / shift {} ms give less than one sample at {sample_rate} Hz",
                self.frame_len_ms, self.frame_shift_ms
            )));
        }
        let frame_len = frame_len as usize;
        let frame_shift = frame_shift as usize;
        let n_fft = self.n_fft.unwrap_or_else(|| frame_len.next_power_of_two());
        if !n_fft.is_power_of_two() {
            return Err(Error::Config(format!("n_fft {n_fft} is not a power of two")));
        }
        if n_fft < frame_len {
            return Err(Error::Config(format!(
                "n_fft {n_fft} is shorter than the {frame_len}-sample frame"
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be positive".into()));
        }
        if let Some(n) = self.n_coeffs {
            if n == 0 || n > self.n_mels {
                return Err(Error::Config(format!("n_coeffs {n} must be in 1..={}", self.n_mels)));
            }
        }
        if self.log_floor <= 0.0 || !self.log_floor.is_finite() {
            return Err(Error::Config(format!(
                "log_floor {} must be a small positive number",
                self.log_floor
            )));
        }
        let nyquist = rate / 2.0;
        let fmax = self.fmax_hz.unwrap_or(nyquist);
        if !(0.0 <= self.fmin_hz && self.fmin_hz < fmax && fmax <= nyquist) {
            return Err(Error::Config(format!(
                "need 0 <= fmin ({}) < fmax ({fmax}) <= {nyquist}",
                self.fmin_hz
            )));
        }
        Ok(FrameLayout {
            sample_rate,
            frame_len,
            frame_shift,
            n_fft,
            fmax_hz: fmax,
        })
    }
}

/// Sample-domain parameters derived from a [`DspConfig`] and a sample rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameLayout {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub frame_shift: usize,
    pub n_fft: usize,
    pub fmax_hz: f64,
}

impl FrameLayout {
    /// `floor((len - frame_len) / shift) + 1`, or 0 when the signal is shorter than a frame.
    pub fn num_frames(&self, signal_len: usize) -> usize {
        if signal_len < self.frame_len {
            0
        } else {
            (signal_len - self.frame_len) / self.frame_shift + 1
        }
    }
}
