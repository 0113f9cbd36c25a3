//! Acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so every criterion is always
//! evaluated and reported, and the process fails if any of them fails.

use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sepcost::aet_net::{
    init_params, network_nodes, separate, synthesis_forward, NetworkConfig, SeparatorParams,
    WeightSharing, SYNTHESIS,
};
use sepcost::diff_engine::{check_gradient, Graph, Inputs, Tensor};
use sepcost::fixtures::{two_speaker_mixture, white_noise, Speaker};
use sepcost::losses::{
    mse_node, sar_loss, sar_node, sdr_loss, sdr_node, sir_loss, sir_node, stoi_forward, stoi_loss,
    stoi_nodes, CompositeCost, StoiConfig, DEFAULT_EPSILON, EXPERIMENT_COSTS,
};
use sepcost::metrics::{bss_decompose, bss_eval_metrics, stoi_metric};
use sepcost::signal_io::{MixturePair, Waveform};
use sepcost::trainer::{evaluate_cost, write_log, Config, Dataset, LogEntry, Split, TrainConfig, Trainer};
use sepcost::Result;

const GRAD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn wave(v: Vec<f64>, rate: u32) -> Waveform {
    Waveform::new(v, rate).unwrap()
}

fn loss_graph(kind: &str, n: usize, rate: u32) -> Result<Graph> {
    let mut g = Graph::new();
    let x = g.input("x", &[n])?;
    let y = g.input("y", &[n])?;
    let z = g.input("z", &[n])?;
    let out = match kind {
        "mse" => mse_node(&mut g, x, y)?,
        "sdr" => sdr_node(&mut g, x, y, DEFAULT_EPSILON)?,
        "sir" => sir_node(&mut g, x, y, z, DEFAULT_EPSILON)?,
        "sar" => sar_node(&mut g, x, y, z, DEFAULT_EPSILON)?,
        _ => stoi_nodes(&mut g, x, y, &StoiConfig::default(), rate)?.loss,
    };
    g.set_output(out);
    Ok(g)
}

fn criterion_1() -> Result<Outcome> {
    let start = Instant::now();
    let mut worst: Vec<(String, f64)> = Vec::new();
    for kind in ["mse", "sdr", "sir", "sar", "stoi"] {
        // Energy ratios on 2048 samples at every coordinate; the
        // intelligibility cost on 4000 samples at 8 kHz (resampled inside
        // the graph) at 200 random coordinates per seed.
        let (n, rate, coords) = if kind == "stoi" { (4000, 8000, Some(200)) } else { (2048, 16000, None) };
        let g = loss_graph(kind, n, rate)?;
        let mut max = 0.0f64;
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut inputs = Inputs::new();
            for name in ["x", "y", "z"] {
                inputs.insert(name.into(), Tensor::vector(random_vec(&mut rng, n)));
            }
            let idx: Option<Vec<usize>> = coords.map(|k| sample(&mut rng, n, k).into_vec());
            let r = check_gradient(&g, &inputs, "x", FD_STEP, idx.as_deref())?;
            max = max.max(r.max_rel_error);
        }
        worst.push((kind.to_string(), max));
    }

    // Whole separator composed with the SDR cost, every parameter tensor.
    let cfg = NetworkConfig {
        components: 16,
        taps: 64,
        stride: 16,
        hidden: 16,
        weight_sharing: WeightSharing::Independent,
        ..NetworkConfig::default()
    };
    let n = 2048;
    let out_len = cfg.output_len(n);
    let mut g = Graph::new();
    let mix = g.input("mixture", &[n])?;
    let target = g.input("target", &[out_len])?;
    let nodes = network_nodes(&mut g, &cfg, mix)?;
    let loss = sdr_node(&mut g, nodes.output, target, DEFAULT_EPSILON)?;
    g.set_output(loss);
    let mut max = 0.0f64;
    for seed in 0..5 {
        let params = init_params(seed, &cfg)?;
        let pair = two_speaker_mixture(n as f64 / 16000.0, 16000, 0.0, seed)?;
        let mut inputs = params.inputs();
        inputs.insert("mixture".into(), Tensor::vector(pair.mixture.samples().to_vec()));
        inputs.insert("target".into(), Tensor::vector(pair.target.samples()[..out_len].to_vec()));
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        for (name, shape) in cfg.param_shapes() {
            let size: usize = shape.iter().product();
            let idx = sample(&mut rng, size, size.min(24)).into_vec();
            let r = check_gradient(&g, &inputs, name, FD_STEP, Some(&idx))?;
            max = max.max(r.max_rel_error);
        }
    }
    worst.push(("network+sdr".into(), max));

    let elapsed = start.elapsed();
    let all_ok = worst.iter().all(|(_, e)| *e <= GRAD_TOL);
    let time_ok = elapsed <= Duration::from_secs(120);
    let parts: Vec<String> = worst.iter().map(|(k, e)| format!("{k} {e:.2e}")).collect();
    Ok(outcome(
        all_ok && time_ok,
        format!("max rel err: {} (tol {GRAD_TOL:e}); {:.1}s of 120s", parts.join(", "), elapsed.as_secs_f64()),
    ))
}

fn criterion_2() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut max = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(16..256);
        let (x, y, z) = (random_vec(&mut rng, n), random_vec(&mut rng, n), random_vec(&mut rng, n));
        let (xx, xy, yy) = (dot(&x, &x), dot(&x, &y), dot(&y, &y));
        let closed = 10.0 * (xy * xy / (yy * xx - xy * xy)).log10();
        let r = bss_eval_metrics(&wave(x, 16000), &wave(y, 16000), &wave(z, 16000))?;
        max = max.max((r.sdr_db - closed).abs());
    }
    Ok(outcome(max <= 1e-9, format!("max |dB difference| {max:.2e} over 1000 pairs (tol 1e-9)")))
}

fn criterion_3() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut recon = 0.0f64;
    for _ in 0..100 {
        let n = 512;
        let (x, y, z) = (random_vec(&mut rng, n), random_vec(&mut rng, n), random_vec(&mut rng, n));
        let d = bss_decompose(&wave(x.clone(), 16000), &wave(y, 16000), &wave(z, 16000))?;
        for (i, xv) in x.iter().enumerate() {
            let s = d.target.samples()[i] + d.interference.samples()[i] + d.artifacts.samples()[i];
            let scale = xv.abs() + d.target.samples()[i].abs() + d.interference.samples()[i].abs();
            recon = recon.max((s - xv).abs() / scale.max(f64::MIN_POSITIVE));
        }
    }
    let recon_ok = recon <= 4.0 * f64::EPSILON;

    let y = random_vec(&mut rng, 1024);
    let mut z = random_vec(&mut rng, 1024);
    let c = dot(&z, &y) / dot(&y, &y);
    z.iter_mut().zip(&y).for_each(|(a, b)| *a -= c * b);
    let (ny, nz) = (dot(&y, &y).sqrt(), dot(&z, &z).sqrt());
    let mut sir_err = 0.0f64;
    for beta in [0.1, 0.5, 1.0, 2.0] {
        let x: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a + beta * b).collect();
        let r = bss_eval_metrics(&wave(x, 16000), &wave(y.clone(), 16000), &wave(z.clone(), 16000))?;
        let expected = -20.0 * (beta * nz / ny).log10();
        sir_err = sir_err.max((r.sir_db - expected).abs());
    }
    Ok(outcome(
        recon_ok && sir_err <= 1e-9,
        format!(
            "reconstruction rel err {recon:.2e} (machine precision); SIR closed-form err {sir_err:.2e} dB (tol 1e-9)"
        ),
    ))
}

fn add_noise(clean: &Waveform, snr_db: f64, seed: u64) -> Result<Waveform> {
    let n = white_noise(clean.len(), clean.sample_rate(), seed)?;
    let gain = clean.rms() / (n.rms() * 10f64.powf(snr_db / 20.0));
    let s = clean.samples().iter().zip(n.samples()).map(|(c, v)| c + gain * v).collect();
    Waveform::new(s, clean.sample_rate())
}

fn criterion_4() -> Result<Outcome> {
    let cfg = StoiConfig::default();
    let snrs = [20.0, 10.0, 0.0, -10.0];
    let mut means = [0.0; 4];
    let (mut self_err, mut d_lo, mut d_hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    let mut exact = true;
    let draws = 20;
    for draw in 0..draws {
        let speaker = if draw % 2 == 0 { Speaker::HIGH } else { Speaker::LOW };
        let clean = speaker.render(16000, 16000, draw)?;
        let (s, d) = stoi_forward(&clean, &clean, &cfg)?;
        self_err = self_err.max((s - 1.0).abs());
        for (k, &snr) in snrs.iter().enumerate() {
            let x = add_noise(&clean, snr, 1000 + 10 * draw + k as u64)?;
            let (s, d) = stoi_forward(&x, &clean, &cfg)?;
            for &v in d.d.data() {
                d_lo = d_lo.min(v);
                d_hi = d_hi.max(v);
            }
            exact &= stoi_metric(&x, &clean, &cfg)? == 1.0 - stoi_loss(&x, &clean, &cfg)?;
            means[k] += s / draws as f64;
        }
        for &v in d.d.data() {
            d_lo = d_lo.min(v);
            d_hi = d_hi.max(v);
        }
    }
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let range_ok = d_lo >= -1.0 && d_hi <= 1.0 + 1e-12;
    Ok(outcome(
        self_err <= 1e-9 && range_ok && decreasing && exact,
        format!(
            "|STOI(x,x)-1| {self_err:.1e}; d in [{d_lo:.4}, {d_hi:.12}]; means at 20/10/0/-10 dB {:.4}/{:.4}/{:.4}/{:.4}; metric == 1-loss: {exact}",
            means[0], means[1], means[2], means[3]
        ),
    ))
}

fn criterion_5() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Correlated pair so that <x,y>^2 stays far above epsilon at every scale.
    let y = random_vec(&mut rng, 1024);
    let x: Vec<f64> = y.iter().map(|v| v + 0.5 * rng.gen_range(-1.0..1.0)).collect();
    let base = sdr_loss(&wave(x.clone(), 16000), &wave(y.clone(), 16000), DEFAULT_EPSILON)?;
    let mut scale_err = 0.0f64;
    for a in [-5.0, -0.3, 0.01, 2.0, 1e3] {
        let xa: Vec<f64> = x.iter().map(|v| a * v).collect();
        let s = sdr_loss(&wave(xa, 16000), &wave(y.clone(), 16000), DEFAULT_EPSILON)?;
        scale_err = scale_err.max((s - base).abs() / base);
    }

    let e = |i: usize| {
        let mut v = vec![0.0; 8];
        v[i] = 1.0;
        wave(v, 16000)
    };
    let (yo, zo) = (e(0), e(1));
    let sir0 = sir_loss(&yo, &yo, &zo, DEFAULT_EPSILON)?;

    // Orthonormal pair from Gram-Schmidt on random 8-dim vectors.
    let mut y8 = random_vec(&mut rng, 8);
    let n = dot(&y8, &y8).sqrt();
    y8.iter_mut().for_each(|v| *v /= n);
    let mut z8 = random_vec(&mut rng, 8);
    let c = dot(&z8, &y8);
    z8.iter_mut().zip(&y8).for_each(|(a, b)| *a -= c * b);
    let n = dot(&z8, &z8).sqrt();
    z8.iter_mut().for_each(|v| *v /= n);
    let (yw, zw) = (wave(y8.clone(), 16000), wave(z8.clone(), 16000));
    let mix: Vec<f64> = y8.iter().zip(&z8).map(|(a, b)| a + b).collect();
    let sar_mix = sar_loss(&wave(mix, 16000), &yw, &zw, DEFAULT_EPSILON)?;
    let mut violations = 0;
    let mut best_other = f64::INFINITY;
    for _ in 0..10_000 {
        let mut v = random_vec(&mut rng, 8);
        let n = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|a| *a /= n);
        let s = sar_loss(&wave(v, 16000), &yw, &zw, DEFAULT_EPSILON)?;
        best_other = best_other.min(s);
        if sar_mix > s + 1e-12 {
            violations += 1;
        }
    }
    let pass = scale_err <= 1e-10 && sir0 == 0.0 && (sar_mix - 1.0).abs() <= 1e-10 && violations == 0;
    Ok(outcome(
        pass,
        format!(
            "sdr scale rel err {scale_err:.1e}; sir(y,y,z) {sir0}; sar(y+z) {sar_mix:.12}; \
             best of 10^4 random unit x {best_other:.6}, violations {violations}"
        ),
    ))
}

fn small_network() -> NetworkConfig {
    NetworkConfig {
        components: 32,
        taps: 128,
        stride: 16,
        hidden: 32,
        ..NetworkConfig::default()
    }
}

fn criterion_6() -> Result<Outcome> {
    let pairs = (0..3)
        .map(|k| two_speaker_mixture(1.0, 16000, 0.0, 60 + k))
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(pairs, Split::Train)?;
    let mut worst = 0.0f64;
    for cost in EXPERIMENT_COSTS {
        let cfg = Config {
            network: small_network(),
            stoi: StoiConfig::default(),
            train: TrainConfig {
                cost: cost.into(),
                excerpt_len: 0,
                ..TrainConfig::default()
            },
        };
        let t = Trainer::new(cfg.clone(), &dataset)?;
        let cost: &CompositeCost = t.cost();
        let mut sums = vec![0.0; cost.components().len()];
        for pair in &dataset.pairs {
            let (_, raw) = evaluate_cost(&cfg, cost, t.params(), pair)?;
            for (i, r) in raw.iter().enumerate() {
                sums[i] += cost.scales()[i] * r;
            }
        }
        for s in sums {
            worst = worst.max((s / dataset.len() as f64 - 1.0).abs());
        }
    }
    Ok(outcome(
        worst <= 1e-6,
        format!("max |scaled component - 1| {worst:.2e} over the seven costs (tol 1e-6)"),
    ))
}

struct Run {
    trainer: Trainer,
    elapsed: Duration,
    tie_violations: usize,
    steps: usize,
}

fn overfit_config(cost: &str) -> Config {
    Config {
        network: NetworkConfig {
            components: 128,
            taps: 256,
            stride: 16,
            hidden: 128,
            weight_sharing: WeightSharing::Shared,
            ..NetworkConfig::default()
        },
        stoi: StoiConfig::default(),
        train: TrainConfig {
            cost: cost.into(),
            epochs: 500,
            excerpt_len: 0,
            seed: 7,
            ..TrainConfig::default()
        },
    }
}

fn tied(p: &SeparatorParams) -> bool {
    p.get(SYNTHESIS).is_none()
        && std::ptr::eq(p.synthesis_filters(), p.analysis_filters())
        && p.synthesis_filters().data() == p.analysis_filters().data()
}

fn overfit_run(cost: &str, pair: &MixturePair) -> Result<Run> {
    let dataset = Dataset::new(vec![pair.clone()], Split::Train)?;
    let start = Instant::now();
    let mut trainer = Trainer::new(overfit_config(cost), &dataset)?;
    let mut tie_violations = 0;
    let mut steps = 0;
    trainer.run(&dataset, None, |p, _| {
        steps += 1;
        if !tied(p) {
            tie_violations += 1;
        }
    })?;
    Ok(Run {
        trainer,
        elapsed: start.elapsed(),
        tie_violations,
        steps,
    })
}

fn trimmed(w: &Waveform, trim: usize, len: usize) -> Waveform {
    wave(w.samples()[trim..trim + len].to_vec(), w.sample_rate())
}

/// SDR gain over the mixture and intelligibility of estimate and mixture,
/// all on the trimmed training range.
fn overfit_scores(run: &Run, pair: &MixturePair) -> Result<(f64, f64, f64, f64)> {
    let params = run.trainer.params();
    let out = separate(&pair.mixture, params)?;
    let trim = run.trainer.config().train.trim;
    let len = out.len() - 2 * trim;
    let (x, m) = (trimmed(&out, trim, len), trimmed(&pair.mixture, trim, len));
    let (y, z) = (trimmed(&pair.target, trim, len), trimmed(&pair.interference, trim, len));
    let est = bss_eval_metrics(&x, &y, &z)?;
    let mix = bss_eval_metrics(&m, &y, &z)?;
    let cfg = &run.trainer.config().stoi;
    Ok((est.sdr_db, mix.sdr_db, stoi_metric(&x, &y, cfg)?, stoi_metric(&m, &y, cfg)?))
}

fn log_text(entries: &[LogEntry]) -> String {
    entries.iter().map(|e| e.to_json() + "\n").collect()
}

fn main() {
    let mut results: Vec<(u32, &str, Result<Outcome>)> = vec![
        (1, "gradient correctness", criterion_1()),
        (2, "SDR surrogate/metric identity", criterion_2()),
        (3, "BSS decomposition and closed forms", criterion_3()),
        (4, "intelligibility properties", criterion_4()),
        (5, "loss sanity minima", criterion_5()),
        (6, "unity normalization", criterion_6()),
    ];

    let pair = two_speaker_mixture(2.0, 16000, 0.0, 0).expect("fixture");
    let sdr_run = overfit_run("sdr", &pair);
    let combo_run = overfit_run("sdr:0.75+stoi:0.25", &pair);

    let c7 = (|| -> Result<Outcome> {
        let (a, b) = (sdr_run.as_ref().map_err(clone_err)?, combo_run.as_ref().map_err(clone_err)?);
        let (est, mix, _, _) = overfit_scores(a, &pair)?;
        let (est3, _, stoi_est, stoi_mix) = overfit_scores(b, &pair)?;
        let time = a.elapsed + b.elapsed;
        let pass = est - mix >= 6.0 && stoi_est > stoi_mix && time <= Duration::from_secs(300);
        Ok(outcome(
            pass,
            format!(
                "sdr cost: {est:.2} dB vs mixture {mix:.2} dB (+{:.2}); sdr+stoi cost: {est3:.2} dB, \
                 STOI {stoi_est:.4} vs mixture {stoi_mix:.4}; {} + {} steps in {:.1}s of 300s",
                est - mix,
                a.steps,
                b.steps,
                time.as_secs_f64()
            ),
        ))
    })();
    results.push((7, "overfit smoke test", c7));

    let c8 = (|| -> Result<Outcome> {
        let (a, b) = (sdr_run.as_ref().map_err(clone_err)?, combo_run.as_ref().map_err(clone_err)?);
        // Functional check: synthesis with the trained parameters is the
        // transposed convolution with the analysis bank.
        let p = a.trainer.params();
        let c = p.config();
        let frames = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xh = Tensor::new(vec![c.components, frames], random_vec(&mut rng, c.components * frames))?;
        let ones = Tensor::filled(&[c.components, frames], 1.0);
        let out = synthesis_forward(&xh, &ones, p)?;
        let a_bank = p.analysis_filters();
        let mut max = 0.0f64;
        for (t, v) in out.samples().iter().enumerate() {
            let mut direct = 0.0;
            for ci in 0..c.components {
                for l in 0..frames {
                    if t >= l * c.stride && t - l * c.stride < c.taps {
                        direct += xh.at2(ci, l) * a_bank.at2(ci, t - l * c.stride);
                    }
                }
            }
            max = max.max((v - direct).abs());
        }
        let violations = a.tie_violations + b.tie_violations;
        Ok(outcome(
            violations == 0 && max < 1e-10,
            format!(
                "tie held after {} of {} optimizer steps; synthesis vs analysis-bank transposed conv err {max:.1e}",
                a.steps + b.steps - violations,
                a.steps + b.steps
            ),
        ))
    })();
    results.push((8, "shared-weight invariant", c8));

    let c9 = (|| -> Result<Outcome> {
        let a = sdr_run.as_ref().map_err(clone_err)?;
        let b = overfit_run("sdr", &pair)?;
        let same_ckpt = a.trainer.checkpoint().to_json() == b.trainer.checkpoint().to_json();
        let same_log = log_text(a.trainer.log()) == log_text(b.trainer.log());
        let dir = std::env::temp_dir().join(format!("sepcost-acceptance-{}", std::process::id()));
        std::fs::create_dir_all(&dir).map_err(|e| sepcost::Error::InvalidArgument(e.to_string()))?;
        let (pa, pb) = (dir.join("a.jsonl"), dir.join("b.jsonl"));
        write_log(a.trainer.log(), &pa)?;
        write_log(b.trainer.log(), &pb)?;
        let same_files = std::fs::read(&pa).ok() == std::fs::read(&pb).ok();
        let _ = std::fs::remove_dir_all(&dir);
        Ok(outcome(
            same_ckpt && same_log && same_files,
            format!(
                "checkpoint identical: {same_ckpt}; log identical: {same_log} ({} lines); log files identical: {same_files}",
                a.trainer.log().len()
            ),
        ))
    })();
    results.push((9, "determinism", c9));

    let mut failed = 0;
    for (id, name, r) in &results {
        let (status, detail) = match r {
            Ok(o) if o.pass => ("PASS", o.detail.clone()),
            Ok(o) => ("FAIL", o.detail.clone()),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {id} [{status}] {name}: {detail}");
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn clone_err(e: &sepcost::Error) -> sepcost::Error {
    sepcost::Error::InvalidArgument(format!("training run failed: {e}"))
}
