//! Cross-checks the graph-based intelligibility score against a direct,
//! loop-only implementation written from the textbook definition.

use std::f64::consts::PI;

use sepcost::fixtures::{white_noise, Speaker};
use sepcost::losses::{stoi_forward, StoiConfig};
use sepcost::signal_io::Waveform;

/// Straight-line score for signals already at 10 kHz.
fn reference_stoi(x: &[f64], y: &[f64]) -> f64 {
    let (frame, nfft, hop, bands, seg) = (256usize, 512usize, 128usize, 15usize, 30usize);
    let fs = 10_000.0;
    let clip = 1.0 + 10f64.powf(15.0 / 20.0);
    let eps = 1e-12;
    let window: Vec<f64> = (0..frame)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / frame as f64).cos())
        .collect();
    let frames = (x.len() - frame) / hop + 1;

    let envelope = |s: &[f64]| -> Vec<Vec<f64>> {
        // env[band][frame]
        let mut env = vec![vec![0.0; frames]; bands];
        for m in 0..frames {
            let mut power = vec![0.0; nfft / 2 + 1];
            for (k, p) in power.iter_mut().enumerate() {
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..frame {
                    let v = window[n] * s[m * hop + n];
                    let ph = 2.0 * PI * (k * n) as f64 / nfft as f64;
                    re += v * ph.cos();
                    im -= v * ph.sin();
                }
                *p = re * re + im * im;
            }
            for (j, row) in env.iter_mut().enumerate() {
                let lo = 150.0 * 2f64.powf((2.0 * j as f64 - 1.0) / 6.0);
                let hi = 150.0 * 2f64.powf((2.0 * j as f64 + 1.0) / 6.0);
                let mut acc = 0.0;
                for (k, p) in power.iter().enumerate() {
                    let f = k as f64 * fs / nfft as f64;
                    if f >= lo && f < hi {
                        acc += p;
                    }
                }
                row[m] = acc.sqrt();
            }
        }
        env
    };
    let ex = envelope(x);
    let ey = envelope(y);

    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..bands {
        for m in seg - 1..frames {
            let xs = &ex[j][m + 1 - seg..=m];
            let ys = &ey[j][m + 1 - seg..=m];
            let nx = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = ys.iter().map(|v| v * v).sum::<f64>().sqrt();
            let xb: Vec<f64> = xs
                .iter()
                .zip(ys)
                .map(|(a, b)| (a * ny / (nx + eps)).min(clip * b))
                .collect();
            let mx = xb.iter().sum::<f64>() / seg as f64;
            let my = ys.iter().sum::<f64>() / seg as f64;
            let (mut num, mut vx, mut vy) = (0.0, 0.0, 0.0);
            for (a, b) in xb.iter().zip(ys) {
                num += (a - mx) * (b - my);
                vx += (a - mx) * (a - mx);
                vy += (b - my) * (b - my);
            }
            total += num / (vx.sqrt() * vy.sqrt() + eps);
            count += 1;
        }
    }
    total / count as f64
}

fn noisy(clean: &Waveform, snr_db: f64, seed: u64) -> Waveform {
    let n = white_noise(clean.len(), clean.sample_rate(), seed).unwrap();
    let gain = clean.rms() / (n.rms() * 10f64.powf(snr_db / 20.0));
    let s: Vec<f64> = clean
        .samples()
        .iter()
        .zip(n.samples())
        .map(|(c, v)| c + gain * v)
        .collect();
    Waveform::new(s, clean.sample_rate()).unwrap()
}

#[test]
fn graph_score_matches_direct_implementation() {
    let cfg = StoiConfig::default();
    let clean = Speaker::HIGH.render(6000, 10_000, 1).unwrap();
    for (i, snr) in [20.0, 0.0, -10.0].into_iter().enumerate() {
        let x = noisy(&clean, snr, 100 + i as u64);
        let (s, _) = stoi_forward(&x, &clean, &cfg).unwrap();
        let r = reference_stoi(x.samples(), clean.samples());
        assert!((s - r).abs() < 1e-9, "snr {snr}: graph {s} vs direct {r}");
    }
}

#[test]
fn score_falls_with_noise_level() {
    let cfg = StoiConfig::default();
    let snrs = [20.0, 10.0, 0.0, -10.0];
    let mut means = [0.0; 4];
    let draws = 20;
    for draw in 0..draws {
        let clean = Speaker::LOW.render(8000, 10_000, draw).unwrap();
        for (k, &snr) in snrs.iter().enumerate() {
            let x = noisy(&clean, snr, 1000 + draw * 10 + k as u64);
            let (s, _) = stoi_forward(&x, &clean, &cfg).unwrap();
            if draw < 2 {
                let r = reference_stoi(x.samples(), clean.samples());
                assert!((s - r).abs() < 1e-9);
            }
            means[k] += s / draws as f64;
        }
    }
    for k in 1..4 {
        assert!(means[k] < means[k - 1], "{means:?}");
    }
}
