//! Short-time intelligibility as a differentiable graph.
//!
//! Pipeline: resample to the analysis rate, magnitude STFT, one-third-octave
//! pooling, sliding segments of `N` frames, per-segment normalize-and-clip of
//! the estimate, centered correlation against the target, and the mean over
//! all bands and segments.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diff_engine::{Graph, NodeId, Tensor};
use crate::dsp::{self, BandPool};
use crate::error::{Error, Result};
use crate::signal_io;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoiConfig {
    pub frame_len: usize,
    pub fft_len: usize,
    pub hop: usize,
    pub num_bands: usize,
    pub lowest_center: f64,
    pub segment_frames: usize,
    pub clip_beta_db: f64,
    pub analysis_rate: u32,
    pub epsilon: f64,
    pub band_pool: BandPool,
}

impl Default for StoiConfig {
    fn default() -> Self {
        StoiConfig {
            frame_len: 256,
            fft_len: 512,
            hop: 128,
            num_bands: 15,
            lowest_center: 150.0,
            segment_frames: 30,
            clip_beta_db: -15.0,
            analysis_rate: 10_000,
            epsilon: 1e-12,
            band_pool: BandPool::L2,
        }
    }
}

impl StoiConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.segment_frames == 0 {
            return bad("segment_frames must be at least 1".into());
        }
        if self.frame_len == 0 || self.hop * 2 != self.frame_len {
            return bad(format!(
                "hop ({}) must be half the frame length ({})",
                self.hop, self.frame_len
            ));
        }
        if self.fft_len < self.frame_len {
            return bad(format!("fft_len {} < frame_len {}", self.fft_len, self.frame_len));
        }
        if !(self.clip_beta_db < 0.0) {
            return bad(format!("clip_beta_db must be negative, got {}", self.clip_beta_db));
        }
        if self.analysis_rate == 0 || !(self.lowest_center > 0.0) || self.num_bands == 0 {
            return bad("analysis rate, lowest center and band count must be positive".into());
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be nonnegative".into());
        }
        Ok(())
    }

    /// Multiplier on the target envelope that bounds the normalized estimate.
    pub fn clip_factor(&self) -> f64 {
        1.0 + 10f64.powf(-self.clip_beta_db / 20.0)
    }

    /// Shortest input (at `sample_rate`) that yields one full segment.
    pub fn min_samples(&self, sample_rate: u32) -> usize {
        let at_analysis = (self.segment_frames - 1) * self.hop + self.frame_len;
        if sample_rate == self.analysis_rate {
            return at_analysis;
        }
        let mut n = (at_analysis as f64 * sample_rate as f64 / self.analysis_rate as f64).floor() as usize;
        while signal_io::resampled_len(n, sample_rate, self.analysis_rate) < at_analysis {
            n += 1;
        }
        n
    }
}

/// Graph nodes of one intelligibility computation.
#[derive(Clone, Copy, Debug)]
pub struct StoiNodes {
    /// `1 - mean(d)`.
    pub loss: NodeId,
    /// Per band and segment correlations, `[bands, segments, 1]`.
    pub d: NodeId,
}

/// Correlations `d(j, m)` over bands `j` and segment end frames `m >= N - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntelligibilityMatrix {
    /// `[bands, segments]`.
    pub d: Tensor,
}

impl IntelligibilityMatrix {
    pub fn bands(&self) -> usize {
        self.d.shape()[0]
    }

    pub fn segments(&self) -> usize {
        self.d.shape()[1]
    }
}

fn l2_last(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    let sq = g.square(x)?;
    let s = g.sum_last(sq)?;
    g.sqrt(s)
}

/// Adds the intelligibility loss comparing estimate `x` with target `y`,
/// both 1-D nodes sampled at `sample_rate`.
pub fn stoi_nodes(
    g: &mut Graph,
    x: NodeId,
    y: NodeId,
    cfg: &StoiConfig,
    sample_rate: u32,
) -> Result<StoiNodes> {
    cfg.validate()?;
    let len = match (g.shape(x), g.shape(y)) {
        ([a], [b]) if a == b => *a,
        (a, b) => {
            return Err(Error::shape(format!(
                "intelligibility inputs must be equal-length 1-D, got {a:?} and {b:?}"
            )))
        }
    };
    let needed = cfg.min_samples(sample_rate);
    if len < needed {
        return Err(Error::SignalTooShort { needed, got: len });
    }
    let (xr, yr) = if sample_rate == cfg.analysis_rate {
        (x, y)
    } else {
        let map = Arc::new(signal_io::resample_map(len, sample_rate, cfg.analysis_rate)?);
        (g.linear_map(x, map.clone())?, g.linear_map(y, map)?)
    };

    let bands = dsp::octave_band_matrix(cfg.analysis_rate, cfg.fft_len, cfg.num_bands, cfg.lowest_center)?;
    let envelope = |g: &mut Graph, s: NodeId| -> Result<NodeId> {
        let mag = dsp::stft_magnitude_node(g, s, cfg.frame_len, cfg.fft_len, cfg.hop)?;
        let bands = dsp::band_energy_node(g, mag, &bands, cfg.band_pool)?;
        g.unfold(bands, cfg.segment_frames)
    };
    let xs = envelope(g, xr)?;
    let ys = envelope(g, yr)?;

    // Normalize the estimate segment to the target's energy, then clip it.
    let xn = l2_last(g, xs)?;
    let yn = l2_last(g, ys)?;
    let xn_eps = g.offset(xn, cfg.epsilon)?;
    let gain = g.div(yn, xn_eps)?;
    let scaled = g.mul(xs, gain)?;
    let bound = g.scale(ys, cfg.clip_factor())?;
    let clipped = g.min(scaled, bound)?;

    let xm = g.mean_last(clipped)?;
    let xc = g.sub(clipped, xm)?;
    let ym = g.mean_last(ys)?;
    let yc = g.sub(ys, ym)?;
    let prod = g.mul(xc, yc)?;
    let num = g.sum_last(prod)?;
    let xcn = l2_last(g, xc)?;
    let ycn = l2_last(g, yc)?;
    let norms = g.mul(xcn, ycn)?;
    let den = g.offset(norms, cfg.epsilon)?;
    let d = g.div(num, den)?;

    let mean = g.mean(d)?;
    let neg = g.scale(mean, -1.0)?;
    let loss = g.offset(neg, 1.0)?;
    Ok(StoiNodes { loss, d })
}
