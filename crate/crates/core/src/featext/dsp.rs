use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{DspConfig, FeatureKind, FeatureMatrix, FrameLayout, PcmSignal};
use crate::error::{Error, Result};

/// `y[0] = x[0]`, `y[n] = x[n] - a * x[n-1]`.
pub fn pre_emphasize(samples: &[f64], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    if let Some(&first) = samples.first() {
        out.push(first);
        out.extend(samples.windows(2).map(|w| w[1] - coeff * w[0]));
    }
    out
}

fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
        .collect()
}

/// Windowed frames, each zero-padded to `n_fft`, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Frames {
    data: Vec<f64>,
    n_fft: usize,
}

impl Frames {
    pub fn from_raw(data: Vec<f64>, n_fft: usize) -> Result<Self> {
        if n_fft == 0 || !data.len().is_multiple_of(n_fft) {
            return Err(Error::Domain(format!(
                "{} samples do not split into {n_fft}-point frames",
                data.len()
            )));
        }
        Ok(Self { data, n_fft })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n_fft
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_fft..(i + 1) * self.n_fft]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.n_fft)
    }
}

/// Pre-emphasis, framing (partial tail dropped), Hamming window, zero-padding.
pub fn frame_and_window(signal: &PcmSignal, cfg: &DspConfig) -> Result<Frames> {
    let layout = cfg.resolve(signal.sample_rate())?;
    frame_with_layout(signal, cfg.pre_emphasis, &layout)
}

fn frame_with_layout(signal: &PcmSignal, pre_emphasis: f64, layout: &FrameLayout) -> Result<Frames> {
    let count = layout.num_frames(signal.len());
    if count == 0 {
        return Err(Error::EmptyOutput(format!(
            "{} samples is shorter than one {}-sample frame",
            signal.len(),
            layout.frame_len
        )));
    }
    let emphasized = pre_emphasize(signal.samples(), pre_emphasis);
    let window = hamming(layout.frame_len);
    let mut data = vec![0.0; count * layout.n_fft];
    for (t, out) in data.chunks_exact_mut(layout.n_fft).enumerate() {
        let start = t * layout.frame_shift;
        let src = &emphasized[start..start + layout.frame_len];
        for ((o, &x), &w) in out.iter_mut().zip(src).zip(&window) {
            *o = x * w;
        }
    }
    Ok(Frames {
        data,
        n_fft: layout.n_fft,
    })
}

/// One-sided power spectrum: `bins = n_fft / 2 + 1` values per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSpectrum {
    data: Vec<f64>,
    bins: usize,
}

impl PowerSpectrum {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.bins
    }

    pub fn n_fft(&self) -> usize {
        2 * (self.bins - 1)
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.bins..(i + 1) * self.bins]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.bins)
    }
}

pub fn power_spectrum(frames: &Frames) -> Result<PowerSpectrum> {
    if frames.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite sample in frame data".into()));
    }
    let n = frames.n_fft;
    let bins = n / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(frames.len() * bins);
    for frame in frames.iter() {
        for (b, &x) in buf.iter_mut().zip(frame) {
            *b = Complex::new(x, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend(buf[..bins].iter().map(|c| c.norm_sqr()));
    }
    Ok(PowerSpectrum { data, bins })
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on FFT bins whose `n_mels + 2` edges are equally
/// spaced in mel and rounded to the nearest bin.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    edges: Vec<usize>,
    n_fft: usize,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, fmin_hz: f64, fmax_hz: f64) -> Result<Self> {
        let (lo, hi) = (hz_to_mel(fmin_hz), hz_to_mel(fmax_hz));
        let step = (hi - lo) / (n_mels + 1) as f64;
        let bin_hz = f64::from(sample_rate) / n_fft as f64;
        let edges: Vec<usize> = (0..n_mels + 2)
            .map(|i| (mel_to_hz(lo + i as f64 * step) / bin_hz).round() as usize)
            .collect();
        if let Some(i) = edges.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "{n_mels} mel filters over {fmin_hz}-{fmax_hz} Hz collapse at edge {} \
                 (bin {}) with a {n_fft}-point FFT; use fewer filters or a larger n_fft",
                i + 1,
                edges[i + 1]
            )));
        }
        Ok(Self { edges, n_fft })
    }

    pub fn num_filters(&self) -> usize {
        self.edges.len() - 2
    }

    /// FFT bin at the apex of filter `j`.
    pub fn center_bin(&self, j: usize) -> usize {
        self.edges[j + 1]
    }

    /// Weight of FFT bin `k` in filter `j`.
    pub fn weight(&self, j: usize, k: usize) -> f64 {
        let (l, c, r) = (self.edges[j], self.edges[j + 1], self.edges[j + 2]);
        if k <= l || k >= r {
            0.0
        } else if k <= c {
            (k - l) as f64 / (c - l) as f64
        } else {
            (r - k) as f64 / (r - c) as f64
        }
    }

    /// Dense `num_filters x (n_fft/2 + 1)` weight rows.
    pub fn weights(&self) -> Vec<Vec<f64>> {
        let bins = self.n_fft / 2 + 1;
        (0..self.num_filters())
            .map(|j| (0..bins).map(|k| self.weight(j, k)).collect())
            .collect()
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let (l, r) = (self.edges[j], self.edges[j + 2]);
            *o = (l + 1..r).map(|k| self.weight(j, k) * power[k]).sum();
        }
    }
}

/// Filterbank energies followed by `ln(max(x, log_floor))`.
pub fn mel_energies(power: &PowerSpectrum, cfg: &DspConfig, sample_rate: u32) -> Result<FeatureMatrix> {
    let layout = cfg.resolve(sample_rate)?;
    if layout.n_fft != power.n_fft() {
        return Err(Error::Config(format!(
            "spectrum has {} bins but config expects n_fft {}",
            power.bins(),
            layout.n_fft
        )));
    }
    let bank = MelFilterbank::new(cfg.n_mels, layout.n_fft, sample_rate, cfg.fmin_hz, layout.fmax_hz)?;
    let mut data = vec![0.0; power.num_frames() * cfg.n_mels];
    for (frame, out) in power.iter().zip(data.chunks_exact_mut(cfg.n_mels)) {
        bank.apply(frame, out);
        for v in out.iter_mut() {
            *v = v.max(cfg.log_floor).ln();
        }
    }
    FeatureMatrix::new(
        data,
        power.num_frames(),
        cfg.n_mels,
        cfg.frame_shift_ms,
        FeatureKind::LogMel,
    )
}

/// Orthonormal DCT-II, truncated to the first `n_out` coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct DctMatrix {
    rows: Vec<f64>,
    n_in: usize,
    n_out: usize,
}

impl DctMatrix {
    pub fn new(n_in: usize, n_out: usize) -> Result<Self> {
        if n_in == 0 || n_out == 0 || n_out > n_in {
            return Err(Error::Config(format!(
                "DCT needs 1 <= coefficients ({n_out}) <= inputs ({n_in})"
            )));
        }
        let n = n_in as f64;
        let mut rows = Vec::with_capacity(n_in * n_out);
        for k in 0..n_out {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            rows.extend((0..n_in).map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos()));
        }
        Ok(Self { rows, n_in, n_out })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k * self.n_in..(k + 1) * self.n_in]
    }

    pub fn forward(&self, input: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.n_out) {
            *o = self.row(k).iter().zip(input).map(|(a, b)| a * b).sum();
        }
    }

    /// Transpose product; the exact inverse when `n_out == n_in`.
    pub fn inverse(&self, coeffs: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, &c) in coeffs.iter().enumerate().take(self.n_out) {
            for (o, &g) in out.iter_mut().zip(self.row(k)) {
                *o += g * c;
            }
        }
    }
}

pub fn mfcc_from_logmel(logmel: &FeatureMatrix, n_coeffs: usize) -> Result<FeatureMatrix> {
    if logmel.kind() != FeatureKind::LogMel {
        return Err(Error::Config(format!(
            "MFCC needs log_mel input, got {}",
            logmel.kind()
        )));
    }
    let channels = logmel.num_channels();
    if n_coeffs > channels {
        return Err(Error::Config(format!(
            "n_coeffs {n_coeffs} exceeds {channels} mel channels"
        )));
    }
    let dct = DctMatrix::new(channels, n_coeffs)?;
    let mut data = vec![0.0; logmel.num_frames() * n_coeffs];
    for (row, out) in logmel.frames().zip(data.chunks_exact_mut(n_coeffs)) {
        dct.forward(row, out);
    }
    FeatureMatrix::new(
        data,
        logmel.num_frames(),
        n_coeffs,
        logmel.frame_shift_ms(),
        FeatureKind::Mfcc,
    )
}

/// Full front end: framing, power spectrum, log-mel and optionally MFCC.
pub fn extract(signal: &PcmSignal, cfg: &DspConfig) -> Result<FeatureMatrix> {
    let frames = frame_and_window(signal, cfg)?;
    let power = power_spectrum(&frames)?;
    let logmel = mel_energies(&power, cfg, signal.sample_rate())?;
    match cfg.n_coeffs {
        Some(n) => mfcc_from_logmel(&logmel, n),
        None => Ok(logmel),
    }
}
