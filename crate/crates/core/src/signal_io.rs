//! Mono waveforms: WAV input/output, band-limited resampling and mixing at a
//! prescribed signal-to-noise ratio.

use std::path::Path;

use crate::diff_engine::SparseRows;
use crate::error::{Error, Result};

/// Taps per output sample of the windowed-sinc resampler.
pub const RESAMPLE_TAPS: usize = 64;
/// Kaiser window shape parameter of the resampler.
pub const RESAMPLE_KAISER_BETA: f64 = 8.0;

/// Mono time-domain signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("waveform must hold at least one sample".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample {i} is not finite")));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
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

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Samples `[start, start + len)` as a new waveform.
    pub fn slice(&self, start: usize, len: usize) -> Result<Waveform> {
        if len == 0 || start + len > self.samples.len() {
            return Err(Error::InvalidArgument(format!(
                "slice [{start}, {}) of a {}-sample waveform",
                start + len,
                self.samples.len()
            )));
        }
        Ok(Waveform {
            samples: self.samples[start..start + len].to_vec(),
            sample_rate: self.sample_rate,
        })
    }

    pub fn scaled(&self, gain: f64) -> Result<Waveform> {
        Waveform::new(self.samples.iter().map(|s| s * gain).collect(), self.sample_rate)
    }
}

/// Target, interference and their sum at a fixed SNR.
#[derive(Clone, Debug, PartialEq)]
pub struct MixturePair {
    pub mixture: Waveform,
    pub target: Waveform,
    /// The interference after SNR scaling.
    pub interference: Waveform,
}

impl MixturePair {
    pub fn len(&self) -> usize {
        self.mixture.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mixture.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.mixture.sample_rate()
    }

    /// Same-range excerpt of all three signals.
    pub fn excerpt(&self, start: usize, len: usize) -> Result<MixturePair> {
        Ok(MixturePair {
            mixture: self.mixture.slice(start, len)?,
            target: self.target.slice(start, len)?,
            interference: self.interference.slice(start, len)?,
        })
    }
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io)
            if matches!(
                io.kind(),
                std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other
            ) =>
        {
            Error::corrupt(path, io)
        }
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(msg) => Error::corrupt(path, msg),
        hound::Error::Unsupported => {
            Error::UnsupportedFormat(format!("{}: unsupported WAVE encoding", path.display()))
        }
        other => Error::corrupt(path, other),
    }
}

/// Reads a PCM16 or float32 RIFF/WAVE file, averaging channels to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let format = reader.spec();
    let channels = format.channels as usize;
    let interleaved: Vec<f64> = match (format.sample_format, format.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {bits}-bit {fmt:?} samples",
                path.display()
            )))
        }
    }
    .map_err(|e| map_hound(path, e))?;
    if interleaved.len() % channels != 0 {
        return Err(Error::corrupt(path, "partial sample frame"));
    }
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if mono.is_empty() {
        return Err(Error::corrupt(path, "no samples"));
    }
    Waveform::new(mono, format.sample_rate).map_err(|e| Error::corrupt(path, e))
}

fn quantize(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes a mono PCM16 file; samples are clamped to [-1, 1] and rounded.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, format).map_err(|e| map_hound(path, e))?;
    for &s in w.samples() {
        writer
            .write_sample(quantize(s))
            .map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Output length of resampling `len` samples from `from` to `to` Hz.
pub fn resampled_len(len: usize, from: u32, to: u32) -> usize {
    ((len as f64) * to as f64 / from as f64).round() as usize
}

/// The resampler as a constant linear map from `len` input samples.
///
/// Each output sample is a 64-tap Kaiser-windowed sinc interpolation around
/// its source position, with the cutoff at the lower Nyquist frequency. Taps
/// falling outside the signal are dropped and the remaining taps are
/// renormalized to sum to one, so constant signals pass through unchanged.
pub fn resample_map(len: usize, from: u32, to: u32) -> Result<SparseRows> {
    if from == 0 || to == 0 {
        return Err(Error::InvalidArgument("sample rates must be positive".into()));
    }
    let out_len = resampled_len(len, from, to);
    if from == to {
        return SparseRows::new(len, (0..len).map(|i| (i, vec![1.0])).collect());
    }
    let step = from as f64 / to as f64;
    let cutoff = (to as f64 / from as f64).min(1.0);
    let half = (RESAMPLE_TAPS / 2) as f64;
    let norm = bessel_i0(RESAMPLE_KAISER_BETA);
    let mut rows = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 * step;
        let base = pos.floor() as i64;
        let lo = (base - (RESAMPLE_TAPS as i64 / 2 - 1)).max(0);
        let hi = (base + RESAMPLE_TAPS as i64 / 2).min(len as i64 - 1);
        let (lo, hi) = if lo > hi {
            let last = len as i64 - 1;
            (last, last)
        } else {
            (lo, hi)
        };
        let mut taps: Vec<f64> = (lo..=hi)
            .map(|n| {
                let t = pos - n as f64;
                let r = (t / half).clamp(-1.0, 1.0);
                let window = bessel_i0(RESAMPLE_KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                cutoff * sinc(cutoff * t) * window
            })
            .collect();
        let total: f64 = taps.iter().sum();
        if total.abs() > 1e-12 {
            taps.iter_mut().for_each(|t| *t /= total);
        }
        rows.push((lo as usize, taps));
    }
    SparseRows::new(len, rows)
}

/// Band-limited resampling to `target_rate`.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    if target_rate == w.sample_rate() {
        return Ok(w.clone());
    }
    let map = resample_map(w.len(), w.sample_rate(), target_rate)?;
    if map.output_len() == 0 {
        return Err(Error::SignalTooShort {
            needed: 1,
            got: 0,
        });
    }
    Waveform::new(map.apply(w.samples()), target_rate)
}

/// Mixes `interference` into `target` so the target-to-interference power
/// ratio equals `snr_db`. Both inputs are truncated to the shorter length.
pub fn mix_at_snr(target: &Waveform, interference: &Waveform, snr_db: f64) -> Result<MixturePair> {
    if target.sample_rate() != interference.sample_rate() {
        return Err(Error::InvalidArgument(format!(
            "sample rates differ: {} vs {}",
            target.sample_rate(),
            interference.sample_rate()
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("snr must be finite, got {snr_db}")));
    }
    let len = target.len().min(interference.len());
    let t = target.slice(0, len)?;
    let i = interference.slice(0, len)?;
    let (rt, ri) = (t.rms(), i.rms());
    if rt <= 1e-8 {
        return Err(Error::SilentSignal("target"));
    }
    if ri <= 1e-8 {
        return Err(Error::SilentSignal("interference"));
    }
    let gain = rt / (ri * 10f64.powf(snr_db / 20.0));
    let scaled = i.scaled(gain)?;
    let mixture: Vec<f64> = t
        .samples()
        .iter()
        .zip(scaled.samples())
        .map(|(a, b)| a + b)
        .collect();
    Ok(MixturePair {
        mixture: Waveform::new(mixture, t.sample_rate())?,
        target: t,
        interference: scaled,
    })
}
