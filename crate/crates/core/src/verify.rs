//! Seeded finite-difference checks of the costs and the whole network, as
//! exposed by the command-line `gradcheck`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aet_net::{init_params, network_nodes, NetworkConfig, WeightSharing};
use crate::diff_engine::{check_gradient, Graph, Inputs, Tensor};
use crate::error::Result;
use crate::fixtures::two_speaker_mixture;
use crate::losses::{mse_node, sar_node, sdr_node, sir_node, stoi_nodes, LossKind, StoiConfig, DEFAULT_EPSILON};

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckTarget {
    Loss(LossKind),
    /// The separator composed with the SDR cost.
    Network,
}

impl std::str::FromStr for CheckTarget {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "network" {
            Ok(CheckTarget::Network)
        } else {
            s.parse().map(CheckTarget::Loss)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckSummary {
    pub checked: usize,
    pub max_rel_error: f64,
}

impl CheckSummary {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    Tensor::vector((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Energy costs: 2048 random samples, every coordinate. Intelligibility:
/// 4000 samples at 8 kHz, 200 random coordinates. Network: a small
/// separator on a 2048-sample fixture, 24 coordinates per parameter tensor.
pub fn check(target: CheckTarget, seed: u64) -> Result<CheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match target {
        CheckTarget::Loss(kind) => {
            let (n, rate) = if kind == LossKind::Stoi { (4000, 8000) } else { (2048, 16000) };
            let mut g = Graph::new();
            let x = g.input("x", &[n])?;
            let y = g.input("y", &[n])?;
            let z = g.input("z", &[n])?;
            let out = match kind {
                LossKind::Mse => mse_node(&mut g, x, y)?,
                LossKind::Sdr => sdr_node(&mut g, x, y, DEFAULT_EPSILON)?,
                LossKind::Sir => sir_node(&mut g, x, y, z, DEFAULT_EPSILON)?,
                LossKind::Sar => sar_node(&mut g, x, y, z, DEFAULT_EPSILON)?,
                LossKind::Stoi => stoi_nodes(&mut g, x, y, &StoiConfig::default(), rate)?.loss,
            };
            g.set_output(out);
            let mut inputs = Inputs::new();
            for name in ["x", "y", "z"] {
                inputs.insert(name.into(), random(&mut rng, n));
            }
            let idx = (kind == LossKind::Stoi).then(|| sample(&mut rng, n, 200).into_vec());
            let r = check_gradient(&g, &inputs, "x", FD_STEP, idx.as_deref())?;
            Ok(CheckSummary {
                checked: r.checked,
                max_rel_error: r.max_rel_error,
            })
        }
        CheckTarget::Network => {
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
            let y = g.input("target", &[out_len])?;
            let nodes = network_nodes(&mut g, &cfg, mix)?;
            let loss = sdr_node(&mut g, nodes.output, y, DEFAULT_EPSILON)?;
            g.set_output(loss);
            let params = init_params(seed, &cfg)?;
            let pair = two_speaker_mixture(n as f64 / cfg.sample_rate as f64, cfg.sample_rate, 0.0, seed)?;
            let mut inputs = params.inputs();
            inputs.insert("mixture".into(), Tensor::vector(pair.mixture.into_samples()));
            inputs.insert(
                "target".into(),
                Tensor::vector(pair.target.samples()[..out_len].to_vec()),
            );
            let mut summary = CheckSummary {
                checked: 0,
                max_rel_error: 0.0,
            };
            for (name, shape) in cfg.param_shapes() {
                let size: usize = shape.iter().product();
                let idx = sample(&mut rng, size, size.min(24)).into_vec();
                let r = check_gradient(&g, &inputs, name, FD_STEP, Some(&idx))?;
                summary.checked += r.checked;
                summary.max_rel_error = summary.max_rel_error.max(r.max_rel_error);
            }
            Ok(summary)
        }
    }
}
