//! Auto-encoder-transform separator.
//!
//! A learned strided convolution replaces the STFT. Its output `X` is split
//! into a smooth nonnegative modulation `M` (smoothed `|X|`) and a carrier
//! `P = X / M`. Two dense softplus layers map the mixture modulation to the
//! target modulation per frame, which is re-applied to the carrier and
//! turned back into a waveform by a transposed convolution.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::diff_engine::{Graph, Inputs, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::signal_io::Waveform;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightSharing {
    Independent,
    /// Synthesis uses the analysis filters themselves.
    Shared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub components: usize,
    pub taps: usize,
    pub stride: usize,
    pub hidden: usize,
    pub smoothing_width: usize,
    pub weight_sharing: WeightSharing,
    pub sample_rate: u32,
    pub modulation_floor: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            components: 1024,
            taps: 1024,
            stride: 16,
            hidden: 1024,
            smoothing_width: 5,
            weight_sharing: WeightSharing::Shared,
            sample_rate: 16_000,
            modulation_floor: 1e-8,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.components == 0 || self.taps == 0 || self.stride == 0 || self.hidden == 0 {
            return bad("components, taps, stride and hidden width must be positive");
        }
        if self.smoothing_width % 2 == 0 {
            return bad("smoothing width must be odd");
        }
        if self.sample_rate == 0 {
            return bad("sample rate must be positive");
        }
        if !(self.modulation_floor > 0.0) {
            return bad("modulation floor must be positive");
        }
        Ok(())
    }

    pub fn frames(&self, len: usize) -> usize {
        if len < self.taps {
            0
        } else {
            (len - self.taps) / self.stride + 1
        }
    }

    /// Length of the reconstructed waveform for an input of `len` samples.
    pub fn output_len(&self, len: usize) -> usize {
        match self.frames(len) {
            0 => 0,
            l => (l - 1) * self.stride + self.taps,
        }
    }

    /// Names and shapes of the trainable tensors, in storage order.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (c, k, h) = (self.components, self.taps, self.hidden);
        let mut v = vec![
            (ANALYSIS, vec![c, k]),
            (SMOOTHING, vec![c, self.smoothing_width]),
            (DENSE1_W, vec![h, c]),
            (DENSE1_B, vec![h]),
            (DENSE2_W, vec![c, h]),
            (DENSE2_B, vec![c]),
        ];
        if self.weight_sharing == WeightSharing::Independent {
            v.push((SYNTHESIS, vec![c, k]));
        }
        v
    }
}

pub const ANALYSIS: &str = "analysis";
pub const SMOOTHING: &str = "smoothing";
pub const DENSE1_W: &str = "dense1.weight";
pub const DENSE1_B: &str = "dense1.bias";
pub const DENSE2_W: &str = "dense2.weight";
pub const DENSE2_B: &str = "dense2.bias";
pub const SYNTHESIS: &str = "synthesis";

/// Trainable tensors plus the configuration they were built for.
///
/// In shared mode there is no synthesis tensor at all; the analysis bank is
/// used in both directions.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparatorParams {
    config: NetworkConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl SeparatorParams {
    /// Assembles parameters from named tensors, checking names and shapes.
    pub fn from_tensors(config: NetworkConfig, mut tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        for (name, shape) in &shapes {
            match tensors.get(*name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::shape(format!(
                        "parameter `{name}` has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                None => return Err(Error::shape(format!("missing parameter `{name}`"))),
            }
        }
        tensors.retain(|k, _| shapes.iter().any(|(n, _)| n == k));
        if tensors.len() != shapes.len() {
            return Err(Error::shape("unexpected parameter set"));
        }
        Ok(SeparatorParams { config, tensors })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn weight_sharing(&self) -> WeightSharing {
        self.config.weight_sharing
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn analysis_filters(&self) -> &Tensor {
        &self.tensors[ANALYSIS]
    }

    pub fn synthesis_filters(&self) -> &Tensor {
        match self.config.weight_sharing {
            WeightSharing::Shared => &self.tensors[ANALYSIS],
            WeightSharing::Independent => &self.tensors[SYNTHESIS],
        }
    }

    /// Normalized smoothing kernel, `[components, width]`.
    pub fn smoothing_kernel(&self) -> Tensor {
        let raw = &self.tensors[SMOOTHING];
        let w = self.config.smoothing_width;
        let mut data: Vec<f64> = raw.data().iter().map(|&v| softplus(v)).collect();
        for row in data.chunks_mut(w) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        Tensor::new(raw.shape().to_vec(), data).expect("same shape")
    }

    /// Tensors keyed by their graph input names.
    pub fn inputs(&self) -> Inputs {
        self.tensors
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.tensors.keys().map(String::as_str).collect()
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches")
}

/// Glorot-uniform filters and dense weights, zero biases, and a flat
/// smoothing kernel.
pub fn init_params(seed: u64, cfg: &NetworkConfig) -> Result<SeparatorParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, k, h) = (cfg.components, cfg.taps, cfg.hidden);
    let mut t = BTreeMap::new();
    t.insert(ANALYSIS.to_string(), glorot(&mut rng, c, k));
    t.insert(DENSE1_W.to_string(), glorot(&mut rng, h, c));
    t.insert(DENSE2_W.to_string(), glorot(&mut rng, c, h));
    if cfg.weight_sharing == WeightSharing::Independent {
        t.insert(SYNTHESIS.to_string(), glorot(&mut rng, c, k));
    }
    t.insert(DENSE1_B.to_string(), Tensor::zeros(&[h]));
    t.insert(DENSE2_B.to_string(), Tensor::zeros(&[c]));
    t.insert(SMOOTHING.to_string(), Tensor::zeros(&[c, cfg.smoothing_width]));
    SeparatorParams::from_tensors(cfg.clone(), t)
}

/// Node handles of one network evaluation.
#[derive(Clone, Copy, Debug)]
pub struct NetworkNodes {
    pub x: NodeId,
    pub m: NodeId,
    pub p: NodeId,
    pub m_hat: NodeId,
    pub output: NodeId,
}

fn param(g: &mut Graph, cfg: &NetworkConfig, name: &str) -> Result<NodeId> {
    let shape = cfg
        .param_shapes()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| s)
        .ok_or_else(|| Error::shape(format!("no parameter `{name}` in this configuration")))?;
    g.input(name, &shape)
}

/// `X`, `M`, `P` for a 1-D signal node. Parameters are graph inputs named
/// after the tensors.
pub fn analysis_nodes(g: &mut Graph, cfg: &NetworkConfig, signal: NodeId) -> Result<(NodeId, NodeId, NodeId)> {
    let filters = param(g, cfg, ANALYSIS)?;
    let x = g.conv1d(signal, filters, cfg.stride)?;
    let raw = param(g, cfg, SMOOTHING)?;
    let pos = g.softplus(raw)?;
    let total = g.sum_last(pos)?;
    let kernel = g.div(pos, total)?;
    let mag = g.abs(x)?;
    let smooth = g.depthwise_smooth(mag, kernel)?;
    let m = g.offset(smooth, cfg.modulation_floor)?;
    let p = g.div(x, m)?;
    Ok((x, m, p))
}

pub fn separator_nodes(g: &mut Graph, cfg: &NetworkConfig, m: NodeId) -> Result<NodeId> {
    let (w1, b1) = (param(g, cfg, DENSE1_W)?, param(g, cfg, DENSE1_B)?);
    let (w2, b2) = (param(g, cfg, DENSE2_W)?, param(g, cfg, DENSE2_B)?);
    let h = g.dense(w1, m, b1)?;
    let h = g.softplus(h)?;
    let o = g.dense(w2, h, b2)?;
    g.softplus(o)
}

pub fn synthesis_nodes(g: &mut Graph, cfg: &NetworkConfig, m_hat: NodeId, p: NodeId) -> Result<NodeId> {
    let filters = match cfg.weight_sharing {
        WeightSharing::Shared => param(g, cfg, ANALYSIS)?,
        WeightSharing::Independent => param(g, cfg, SYNTHESIS)?,
    };
    let x_hat = g.mul(m_hat, p)?;
    g.conv_transpose1d(x_hat, filters, cfg.stride)
}

/// Full separator from a mixture node to the estimate node.
pub fn network_nodes(g: &mut Graph, cfg: &NetworkConfig, mixture: NodeId) -> Result<NetworkNodes> {
    let (x, m, p) = analysis_nodes(g, cfg, mixture)?;
    let m_hat = separator_nodes(g, cfg, m)?;
    let output = synthesis_nodes(g, cfg, m_hat, p)?;
    Ok(NetworkNodes {
        x,
        m,
        p,
        m_hat,
        output,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AetRepresentation {
    /// `[components, frames]`.
    pub x: Tensor,
    pub m: Tensor,
    pub p: Tensor,
}

fn check_len(cfg: &NetworkConfig, len: usize) -> Result<()> {
    if len < cfg.taps {
        return Err(Error::SignalTooShort {
            needed: cfg.taps,
            got: len,
        });
    }
    Ok(())
}

pub fn analysis_forward(w: &Waveform, params: &SeparatorParams) -> Result<AetRepresentation> {
    let cfg = params.config();
    check_len(cfg, w.len())?;
    let mut g = Graph::new();
    let s = g.input("mixture", &[w.len()])?;
    let (x, m, p) = analysis_nodes(&mut g, cfg, s)?;
    let mut inputs = params.inputs();
    inputs.insert("mixture".into(), Tensor::vector(w.samples().to_vec()));
    let eval = g.evaluate(&inputs)?;
    Ok(AetRepresentation {
        x: eval.value(x).clone(),
        m: eval.value(m).clone(),
        p: eval.value(p).clone(),
    })
}

fn check_matrix(t: &Tensor, rows: usize, what: &str) -> Result<usize> {
    match t.shape() {
        [r, c] if *r == rows => Ok(*c),
        s => Err(Error::shape(format!("{what} must be [{rows}, frames], got {s:?}"))),
    }
}

pub fn separator_forward(m: &Tensor, params: &SeparatorParams) -> Result<Tensor> {
    let cfg = params.config();
    let frames = check_matrix(m, cfg.components, "modulation")?;
    let mut g = Graph::new();
    let mi = g.input("m", &[cfg.components, frames])?;
    let out = separator_nodes(&mut g, cfg, mi)?;
    g.set_output(out);
    let mut inputs = params.inputs();
    inputs.insert("m".into(), m.clone());
    g.forward(&inputs)
}

pub fn synthesis_forward(m_hat: &Tensor, p: &Tensor, params: &SeparatorParams) -> Result<Waveform> {
    let cfg = params.config();
    let frames = check_matrix(m_hat, cfg.components, "estimated modulation")?;
    if p.shape() != m_hat.shape() {
        return Err(Error::shape(format!(
            "carrier {:?} and modulation {:?} differ",
            p.shape(),
            m_hat.shape()
        )));
    }
    let mut g = Graph::new();
    let mi = g.input("m_hat", &[cfg.components, frames])?;
    let pi = g.input("p", &[cfg.components, frames])?;
    let out = synthesis_nodes(&mut g, cfg, mi, pi)?;
    g.set_output(out);
    let mut inputs = params.inputs();
    inputs.insert("m_hat".into(), m_hat.clone());
    inputs.insert("p".into(), p.clone());
    Waveform::new(g.forward(&inputs)?.into_data(), cfg.sample_rate)
}

/// Runs the whole network. The output has `cfg.output_len(len)` samples,
/// aligned with the start of the input.
pub fn separate(w: &Waveform, params: &SeparatorParams) -> Result<Waveform> {
    let cfg = params.config();
    check_len(cfg, w.len())?;
    let mut g = Graph::new();
    let s = g.input("mixture", &[w.len()])?;
    let nodes = network_nodes(&mut g, cfg, s)?;
    g.set_output(nodes.output);
    let mut inputs = params.inputs();
    inputs.insert("mixture".into(), Tensor::vector(w.samples().to_vec()));
    Waveform::new(g.forward(&inputs)?.into_data(), w.sample_rate())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisOrder {
    /// Filter indices sorted by dominant frequency, lowest first.
    pub permutation: Vec<usize>,
    /// Dominant frequency of each filter in its original position, Hz.
    pub frequencies: Vec<f64>,
}

pub const BASIS_DFT_LEN: usize = 4096;

/// Ranks analysis filters by the peak of their zero-padded magnitude
/// spectrum.
pub fn order_bases_by_dominant_frequency(params: &SeparatorParams, sample_rate: u32) -> BasisOrder {
    let filters = params.analysis_filters();
    let (count, taps) = (filters.shape()[0], filters.shape()[1]);
    let n = BASIS_DFT_LEN.max(taps.next_power_of_two());
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let frequencies: Vec<f64> = filters
        .data()
        .chunks(taps)
        .map(|row| {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (b, &v) in buf.iter_mut().zip(row) {
                b.re = v;
            }
            fft.process(&mut buf);
            let mut best = (0, f64::NEG_INFINITY);
            for (k, c) in buf[..=n / 2].iter().enumerate() {
                let mag = c.norm_sqr();
                if mag > best.1 {
                    best = (k, mag);
                }
            }
            best.0 as f64 * sample_rate as f64 / n as f64
        })
        .collect();
    let mut permutation: Vec<usize> = (0..count).collect();
    permutation.sort_by(|&a, &b| frequencies[a].total_cmp(&frequencies[b]));
    BasisOrder {
        permutation,
        frequencies,
    }
}

/// One CSV line per analysis filter: dominant frequency, then the taps,
/// lowest frequency first.
pub fn basis_csv(params: &SeparatorParams, sample_rate: u32) -> String {
    let order = order_bases_by_dominant_frequency(params, sample_rate);
    let filters = params.analysis_filters();
    let taps = filters.shape()[1];
    let mut out = String::new();
    for &i in &order.permutation {
        write!(out, "{}", order.frequencies[i]).unwrap();
        for v in &filters.data()[i * taps..(i + 1) * taps] {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff_engine::check_gradient;
    use std::f64::consts::{LN_2, PI};

    fn small(sharing: WeightSharing) -> NetworkConfig {
        NetworkConfig {
            components: 6,
            taps: 32,
            stride: 4,
            hidden: 5,
            weight_sharing: sharing,
            ..NetworkConfig::default()
        }
    }

    fn signal(len: usize, seed: u64) -> Waveform {
        crate::fixtures::white_noise(len, 16000, seed).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = NetworkConfig::default();
        let a = init_params(7, &cfg).unwrap();
        let b = init_params(7, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.analysis_filters().max_abs() <= (6.0f64 / 2048.0).sqrt());
        assert!(std::ptr::eq(a.analysis_filters(), a.synthesis_filters()));
        assert!(a.get(SYNTHESIS).is_none());
        let k = a.smoothing_kernel();
        assert!(k.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
        assert_ne!(init_params(8, &cfg).unwrap(), a);
    }

    #[test]
    fn frame_arithmetic() {
        let cfg = NetworkConfig::default();
        assert_eq!(cfg.frames(2048), 65);
        assert_eq!(cfg.output_len(2048), 2048);
        assert_eq!(cfg.frames(1023), 0);
    }

    #[test]
    fn representation_identities() {
        let p = init_params(1, &small(WeightSharing::Independent)).unwrap();
        let r = analysis_forward(&signal(200, 2), &p).unwrap();
        assert_eq!(r.x.shape(), &[6, (200 - 32) / 4 + 1]);
        assert!(r.m.data().iter().all(|&v| v > 0.0));
        for ((x, m), pp) in r.x.data().iter().zip(r.m.data()).zip(r.p.data()) {
            assert!((m * pp - x).abs() <= 1e-10 * x.abs().max(1e-300));
        }
        let z = analysis_forward(&Waveform::new(vec![0.0; 64], 16000).unwrap(), &p).unwrap();
        assert!(z.x.data().iter().all(|&v| v == 0.0));
        assert!(z.m.data().iter().all(|&v| v == 1e-8));
        assert!(z.p.data().iter().all(|&v| v == 0.0));
        assert!(matches!(
            analysis_forward(&signal(31, 0), &p),
            Err(Error::SignalTooShort { needed: 32, got: 31 })
        ));
    }

    #[test]
    fn frame_shift_covariance() {
        let p = init_params(3, &small(WeightSharing::Shared)).unwrap();
        let w = signal(300, 4);
        let mut shifted = vec![0.0; 4];
        shifted.extend_from_slice(w.samples());
        let a = analysis_forward(&w, &p).unwrap().x;
        let b = analysis_forward(&Waveform::new(shifted, 16000).unwrap(), &p).unwrap().x;
        let (rows, la) = (a.shape()[0], a.shape()[1]);
        assert_eq!(b.shape()[1], la + 1);
        for r in 0..rows {
            for c in 0..la {
                assert_eq!(a.at2(r, c), b.at2(r, c + 1));
            }
        }
    }

    #[test]
    fn separator_cases() {
        let cfg = small(WeightSharing::Shared);
        let mut p = init_params(5, &cfg).unwrap();
        let m = Tensor::filled(&[6, 3], 0.7);
        assert!(separator_forward(&m, &p).unwrap().data().iter().all(|&v| v > 0.0));
        for name in [DENSE1_W, DENSE1_B, DENSE2_W, DENSE2_B] {
            p.get_mut(name).unwrap().data_mut().fill(0.0);
        }
        let out = separator_forward(&m, &p).unwrap();
        assert!(out.data().iter().all(|&v| (v - LN_2).abs() < 1e-15));
        assert!(matches!(
            separator_forward(&Tensor::zeros(&[5, 3]), &p),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn synthesis_cases() {
        let p = init_params(6, &small(WeightSharing::Independent)).unwrap();
        let w = signal(128, 7);
        let r = analysis_forward(&w, &p).unwrap();
        let zero = synthesis_forward(&Tensor::zeros(r.m.shape()), &r.p, &p).unwrap();
        assert!(zero.samples().iter().all(|&v| v == 0.0));
        assert_eq!(zero.len(), p.config().output_len(128));
        // Oracle modulation: M * P gives back X, so synthesis equals the
        // transposed convolution of X computed directly.
        let out = synthesis_forward(&r.m, &r.p, &p).unwrap();
        let f = p.synthesis_filters();
        let (c, k) = (f.shape()[0], f.shape()[1]);
        let frames = r.x.shape()[1];
        let mut direct = vec![0.0; out.len()];
        for ci in 0..c {
            for l in 0..frames {
                for t in 0..k {
                    direct[l * 4 + t] += r.x.at2(ci, l) * f.at2(ci, t);
                }
            }
        }
        for (a, b) in out.samples().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn separate_is_finite_and_reproducible() {
        let p = init_params(9, &small(WeightSharing::Shared)).unwrap();
        let w = signal(500, 10);
        let a = separate(&w, &p).unwrap();
        let b = separate(&w, &p).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|v| v.is_finite()));
        assert_eq!(a.len(), p.config().output_len(500));
    }

    #[test]
    fn network_gradients() {
        let cfg = small(WeightSharing::Independent);
        let p = init_params(11, &cfg).unwrap();
        let w = signal(96, 12);
        let mut g = Graph::new();
        let s = g.input("mixture", &[96]).unwrap();
        let nodes = network_nodes(&mut g, &cfg, s).unwrap();
        let target = g.constant(Tensor::vector(signal(96, 13).into_samples()));
        let loss = crate::losses::sdr_node(&mut g, nodes.output, target, 1e-12).unwrap();
        g.set_output(loss);
        let mut inputs = p.inputs();
        inputs.insert("mixture".into(), Tensor::vector(w.into_samples()));
        for name in cfg.param_shapes().iter().map(|(n, _)| *n) {
            let r = check_gradient(&g, &inputs, name, 1e-5, None).unwrap();
            assert!(r.max_rel_error < 1e-5, "{name}: {}", r.max_rel_error);
        }
    }

    #[test]
    fn basis_ordering() {
        let cfg = NetworkConfig {
            components: 3,
            taps: 512,
            hidden: 2,
            ..NetworkConfig::default()
        };
        let mut p = init_params(0, &cfg).unwrap();
        let freqs = [1000.0, 200.0, 100.0];
        let a = p.get_mut(ANALYSIS).unwrap();
        for (row, f) in a.data_mut().chunks_mut(512).zip(freqs) {
            for (n, v) in row.iter_mut().enumerate() {
                *v = (2.0 * PI * f * n as f64 / 16000.0).sin();
            }
        }
        let o = order_bases_by_dominant_frequency(&p, 16000);
        let bin = 16000.0 / 4096.0;
        for (got, want) in o.frequencies.iter().zip(freqs) {
            assert!((got - want).abs() <= bin);
        }
        assert_eq!(o.permutation, vec![2, 1, 0]);
        assert_eq!(order_bases_by_dominant_frequency(&p, 16000), o);
        let csv = basis_csv(&p, 16000);
        let firsts: Vec<f64> = csv
            .lines()
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(firsts.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 513);
        assert_eq!(csv, basis_csv(&p, 16000));
    }
}
