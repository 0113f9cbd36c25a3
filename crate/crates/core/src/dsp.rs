//! Framed magnitude spectra and one-third-octave band grouping.
//!
//! The transforms are expressed as graph fragments so the intelligibility
//! loss can differentiate through them; the standalone functions evaluate
//! those same fragments.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diff_engine::{Graph, Inputs, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::signal_io::Waveform;

/// Magnitude STFT, `bins x frames`.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeFrames {
    pub values: Tensor,
    pub frame_len: usize,
    pub fft_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl MagnitudeFrames {
    pub fn bins(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Band-pooled magnitudes, `bands x frames`.
#[derive(Clone, Debug, PartialEq)]
pub struct OctaveBandFrames {
    pub values: Tensor,
    pub band_edges: Vec<(f64, f64)>,
}

/// 0/1 assignment of FFT bins to one-third-octave bands.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMatrix {
    weights: Tensor,
    centers: Vec<f64>,
    edges: Vec<(f64, f64)>,
}

impl BandMatrix {
    /// `bands x bins`.
    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn edges(&self) -> &[(f64, f64)] {
        &self.edges
    }

    pub fn num_bands(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn num_bins(&self) -> usize {
        self.weights.shape()[1]
    }
}

/// How bin magnitudes are combined within a band.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandPool {
    /// Root of the summed power.
    #[default]
    L2,
    /// Plain sum of magnitudes.
    L1,
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> usize {
    if len < frame_len {
        0
    } else {
        (len - frame_len) / hop + 1
    }
}

/// Windowed DFT basis: rows `0..F` are cosines, rows `F..2F` sines, for the
/// first `fft_len / 2 + 1` bins of a frame zero-padded to `fft_len`.
pub fn dft_filter_bank(frame_len: usize, fft_len: usize) -> Tensor {
    let bins = fft_len / 2 + 1;
    let window = hann_periodic(frame_len);
    let mut data = Vec::with_capacity(2 * bins * frame_len);
    for part in 0..2 {
        for k in 0..bins {
            for (n, w) in window.iter().enumerate() {
                // Reduce the phase index exactly before scaling to radians.
                let phase = 2.0 * PI * ((k * n) % fft_len) as f64 / fft_len as f64;
                let basis = if part == 0 { phase.cos() } else { -phase.sin() };
                data.push(w * basis);
            }
        }
    }
    Tensor::new(vec![2 * bins, frame_len], data).expect("filter bank shape")
}

fn check_framing(len: usize, frame_len: usize, fft_len: usize, hop: usize) -> Result<()> {
    if frame_len == 0 || frame_len > fft_len {
        return Err(Error::InvalidArgument(format!(
            "frame length {frame_len} must be in 1..={fft_len}"
        )));
    }
    if hop == 0 {
        return Err(Error::InvalidArgument("hop must be positive".into()));
    }
    if len < frame_len {
        return Err(Error::SignalTooShort {
            needed: frame_len,
            got: len,
        });
    }
    Ok(())
}

/// Adds the magnitude STFT of a 1-D `signal` node; the result is `[bins, frames]`.
pub fn stft_magnitude_node(
    g: &mut Graph,
    signal: NodeId,
    frame_len: usize,
    fft_len: usize,
    hop: usize,
) -> Result<NodeId> {
    let len = match g.shape(signal) {
        [n] => *n,
        s => return Err(Error::shape(format!("stft input must be 1-D, got {s:?}"))),
    };
    check_framing(len, frame_len, fft_len, hop)?;
    let bins = fft_len / 2 + 1;
    let bank = g.constant(dft_filter_bank(frame_len, fft_len));
    let stft = g.conv1d(signal, bank, hop)?;
    let power = g.square(stft)?;
    let re = g.slice(power, 0, bins)?;
    let im = g.slice(power, bins, bins)?;
    let sum = g.add(re, im)?;
    g.sqrt(sum)
}

/// Adds band pooling of a `[bins, frames]` magnitude node.
pub fn band_energy_node(
    g: &mut Graph,
    magnitude: NodeId,
    bands: &BandMatrix,
    pool: BandPool,
) -> Result<NodeId> {
    let bins = g.shape(magnitude).first().copied().unwrap_or(0);
    if bins != bands.num_bins() {
        return Err(Error::shape(format!(
            "band matrix covers {} bins, magnitudes have {bins}",
            bands.num_bins()
        )));
    }
    let w = g.constant(bands.weights.clone());
    match pool {
        BandPool::L2 => {
            let power = g.square(magnitude)?;
            let pooled = g.matmul(w, power)?;
            g.sqrt(pooled)
        }
        BandPool::L1 => g.matmul(w, magnitude),
    }
}

/// Magnitude STFT with a periodic Hann window; frame `m` covers samples
/// `[m * hop, m * hop + frame_len)`.
pub fn frame_stft(w: &Waveform, frame_len: usize, fft_len: usize, hop: usize) -> Result<MagnitudeFrames> {
    check_framing(w.len(), frame_len, fft_len, hop)?;
    let mut g = Graph::new();
    let x = g.input("x", &[w.len()])?;
    let mag = stft_magnitude_node(&mut g, x, frame_len, fft_len, hop)?;
    g.set_output(mag);
    let mut inputs = Inputs::new();
    inputs.insert("x".into(), Tensor::vector(w.samples().to_vec()));
    Ok(MagnitudeFrames {
        values: g.forward(&inputs)?,
        frame_len,
        fft_len,
        hop,
        sample_rate: w.sample_rate(),
    })
}

/// One-third-octave bands with centers `lowest_center * 2^(k/3)`.
///
/// Bins are assigned to the band whose `[low, high)` range holds their
/// center frequency. Bands reaching past Nyquist or holding no bin are
/// dropped.
pub fn octave_band_matrix(
    sample_rate: u32,
    fft_len: usize,
    num_bands: usize,
    lowest_center: f64,
) -> Result<BandMatrix> {
    if !(lowest_center > 0.0) || num_bands == 0 || fft_len == 0 || sample_rate == 0 {
        return Err(Error::InvalidArgument(format!(
            "band layout needs positive center, band count and fft length \
             (got {lowest_center}, {num_bands}, {fft_len})"
        )));
    }
    let bins = fft_len / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let bin_hz = sample_rate as f64 / fft_len as f64;
    // Shared edge formula keeps adjacent bands exactly contiguous.
    let edge = |e: usize| lowest_center * 2f64.powf((2.0 * e as f64 - 1.0) / 6.0);
    let mut rows = Vec::new();
    let mut centers = Vec::new();
    let mut edges = Vec::new();
    for k in 0..num_bands {
        let (low, high) = (edge(k), edge(k + 1));
        if high > nyquist {
            continue;
        }
        let row: Vec<f64> = (0..bins)
            .map(|i| {
                let f = i as f64 * bin_hz;
                if f >= low && f < high {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        if row.iter().any(|&v| v > 0.0) {
            rows.extend(row);
            centers.push(lowest_center * 2f64.powf(k as f64 / 3.0));
            edges.push((low, high));
        }
    }
    Ok(BandMatrix {
        weights: Tensor::new(vec![centers.len(), bins], rows)?,
        centers,
        edges,
    })
}

/// Band energies with the default square-root-of-power pooling.
pub fn band_energies(mag: &MagnitudeFrames, bands: &BandMatrix) -> Result<OctaveBandFrames> {
    band_energies_with(mag, bands, BandPool::L2)
}

pub fn band_energies_with(
    mag: &MagnitudeFrames,
    bands: &BandMatrix,
    pool: BandPool,
) -> Result<OctaveBandFrames> {
    let mut g = Graph::new();
    let m = g.input("mag", mag.values.shape())?;
    let out = band_energy_node(&mut g, m, bands, pool)?;
    g.set_output(out);
    let mut inputs = Inputs::new();
    inputs.insert("mag".into(), mag.values.clone());
    Ok(OctaveBandFrames {
        values: g.forward(&inputs)?,
        band_edges: bands.edges.clone(),
    })
}
