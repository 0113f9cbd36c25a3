//! Synthetic speech-like signals for tests, benchmarks and smoke training.
//!
//! A "speaker" is a harmonic comb at a fixed fundamental, gated by a
//! syllable-rate envelope, plus a little low-passed noise under the same
//! envelope.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::signal_io::{mix_at_snr, MixturePair, Waveform};

/// Overall gain; keeps 0 dB mixtures of two voices inside full scale.
const LEVEL: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct Speaker {
    pub f0: f64,
    /// Syllables per second.
    pub syllable_rate: f64,
    /// Noise level relative to the voiced part, linear amplitude.
    pub noise_level: f64,
}

impl Speaker {
    pub const HIGH: Speaker = Speaker {
        f0: 220.0,
        syllable_rate: 4.0,
        noise_level: 0.1,
    };

    pub const LOW: Speaker = Speaker {
        f0: 130.0,
        syllable_rate: 3.0,
        noise_level: 0.1,
    };

    pub fn render(&self, len: usize, sample_rate: u32, seed: u64) -> Result<Waveform> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs = sample_rate as f64;
        let harmonics = ((0.45 * fs) / self.f0).floor().max(1.0) as usize;
        let phases: Vec<f64> = (0..harmonics).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();

        // Syllables: raised-cosine bumps of random length, separated by short gaps.
        let mut env = vec![0.0; len];
        let mean_len = fs / self.syllable_rate;
        let mut start = (rng.gen_range(0.0..0.3) * mean_len) as usize;
        while start < len {
            let dur = (mean_len * rng.gen_range(0.6..1.0)) as usize;
            let amp = rng.gen_range(0.6..1.0);
            for i in 0..dur.min(len - start) {
                env[start + i] = amp * 0.5 * (1.0 - (2.0 * PI * i as f64 / dur as f64).cos());
            }
            start += dur + (mean_len * rng.gen_range(0.1..0.4)) as usize;
        }

        let mut lp = 0.0;
        let samples = (0..len)
            .map(|n| {
                let t = n as f64 / fs;
                let voiced: f64 = phases
                    .iter()
                    .enumerate()
                    .map(|(h, ph)| {
                        let k = (h + 1) as f64;
                        (2.0 * PI * k * self.f0 * t + ph).sin() / k
                    })
                    .sum();
                lp = 0.8 * lp + 0.2 * rng.gen_range(-1.0..1.0);
                LEVEL * env[n] * (voiced + self.noise_level * 5.0 * lp)
            })
            .collect();
        Waveform::new(samples, sample_rate)
    }
}

/// Two distinct speakers mixed at `snr_db`; the high voice is the target.
pub fn two_speaker_mixture(seconds: f64, sample_rate: u32, snr_db: f64, seed: u64) -> Result<MixturePair> {
    let len = (seconds * sample_rate as f64).round() as usize;
    let target = Speaker::HIGH.render(len, sample_rate, seed)?;
    let interference = Speaker::LOW.render(len, sample_rate, seed.wrapping_add(1))?;
    mix_at_snr(&target, &interference, snr_db)
}

/// White noise in `[-1, 1)`.
pub fn white_noise(len: usize, sample_rate: u32, seed: u64) -> Result<Waveform> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), sample_rate)
}
