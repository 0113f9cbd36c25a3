//! Training loop: unity normalization of composite costs, optimizer steps on
//! random excerpts, JSON-lines logging and resumable checkpoints.
//!
//! All randomness is derived from `(seed, epoch, step)`, so a run resumed
//! from a checkpoint continues exactly as the uninterrupted run would.

mod checkpoint;
mod dataset;
mod optim;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, EncodedTensor, OptimizerSnapshot, FORMAT_VERSION};
pub use dataset::{build_dataset, list_wavs, Dataset, Split};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};

use crate::aet_net::{init_params, network_nodes, NetworkConfig, SeparatorParams};
use crate::diff_engine::{Graph, Inputs, Tensor};
use crate::error::{Error, Result};
use crate::losses::{composite_nodes, normalize_cost_scales, CompositeCost, StoiConfig, DEFAULT_EPSILON};
use crate::signal_io::MixturePair;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Cost string such as `sdr:0.75+stoi:0.25`.
    pub cost: String,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub optimizer_epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    pub snr_db: f64,
    /// Training crop length in samples; 0 trains on whole utterances.
    pub excerpt_len: usize,
    /// Samples dropped at each end of the output before the loss.
    pub trim: usize,
    /// Pairs averaged for the unity normalization.
    pub normalization_pairs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        TrainConfig {
            cost: "sdr".into(),
            optimizer: opt.kind,
            learning_rate: opt.learning_rate,
            beta1: opt.beta1,
            beta2: opt.beta2,
            optimizer_epsilon: opt.epsilon,
            epochs: 10,
            seed: 0,
            snr_db: 0.0,
            excerpt_len: 32768,
            trim: 1024,
            normalization_pairs: 10,
        }
    }
}

impl TrainConfig {
    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.optimizer_epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.parse::<CompositeCost>()?;
        self.optimizer_config().validate()?;
        if self.excerpt_len != 0 && self.excerpt_len < 4096 {
            return Err(Error::InvalidArgument(format!(
                "excerpt_len must be 0 or at least 4096, got {}",
                self.excerpt_len
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidArgument("snr_db must be finite".into()));
        }
        if self.normalization_pairs == 0 {
            return Err(Error::InvalidArgument("normalization_pairs must be positive".into()));
        }
        Ok(())
    }
}

/// Everything that defines a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub network: NetworkConfig,
    pub stoi: StoiConfig,
    pub train: TrainConfig,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.stoi.validate()?;
        self.train.validate()
    }
}

/// Position of the next step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub epoch: usize,
    pub step: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Normalize,
    Train,
}

/// One training-log line. `components` holds raw (unscaled) values and
/// `total` the weighted, scaled cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub phase: Phase,
    pub epoch: usize,
    pub step: usize,
    pub components: BTreeMap<String, f64>,
    pub total: f64,
}

impl LogEntry {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log entry serializes")
    }
}

pub fn write_log(entries: &[LogEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for e in entries {
        writeln!(f, "{}", e.to_json()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn step_rng(seed: u64, epoch: usize, step: usize, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(epoch as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(step as u64).to_le_bytes());
    key[24..].copy_from_slice(&stream.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

const EXCERPT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

/// Crop of `len` samples at a random offset; the whole pair if `len` is 0
/// or not shorter than the pair.
pub fn random_excerpt(pair: &MixturePair, len: usize, rng: &mut impl Rng) -> Result<MixturePair> {
    if len == 0 || len >= pair.len() {
        return Ok(pair.clone());
    }
    let start = rng.gen_range(0..=pair.len() - len);
    pair.excerpt(start, len)
}

/// The cost graph for mixtures of `len` samples. Inputs: `mixture` of
/// `len` samples, and `target`/`interference` already cut to the trimmed
/// output range.
pub struct LossGraph {
    pub graph: Graph,
    pub total: crate::diff_engine::NodeId,
    pub raw: Vec<crate::diff_engine::NodeId>,
    pub output: crate::diff_engine::NodeId,
    /// Length of the trimmed estimate entering the loss.
    pub aligned_len: usize,
    pub trim: usize,
}

impl LossGraph {
    pub fn build(cfg: &Config, cost: &CompositeCost, len: usize) -> Result<Self> {
        let trim = cfg.train.trim;
        let out_len = cfg.network.output_len(len);
        if out_len <= 2 * trim {
            return Err(Error::SignalTooShort {
                needed: cfg.network.taps.max(2 * trim + 1),
                got: len,
            });
        }
        let aligned_len = out_len - 2 * trim;
        let mut g = Graph::new();
        let mix = g.input("mixture", &[len])?;
        let y = g.input("target", &[aligned_len])?;
        let z = g.input("interference", &[aligned_len])?;
        let net = network_nodes(&mut g, &cfg.network, mix)?;
        let x = g.slice(net.output, trim, aligned_len)?;
        let nodes = composite_nodes(
            &mut g,
            cost,
            x,
            y,
            z,
            &cfg.stoi,
            cfg.network.sample_rate,
            DEFAULT_EPSILON,
        )?;
        g.set_output(nodes.total);
        Ok(LossGraph {
            graph: g,
            total: nodes.total,
            raw: nodes.raw,
            output: x,
            aligned_len,
            trim,
        })
    }

    pub fn inputs(&self, params: &SeparatorParams, pair: &MixturePair) -> Inputs {
        let cut = |w: &crate::signal_io::Waveform| {
            Tensor::vector(w.samples()[self.trim..self.trim + self.aligned_len].to_vec())
        };
        let mut inputs = params.inputs();
        inputs.insert("mixture".into(), Tensor::vector(pair.mixture.samples().to_vec()));
        inputs.insert("target".into(), cut(&pair.target));
        inputs.insert("interference".into(), cut(&pair.interference));
        inputs
    }
}

fn components_map(cost: &CompositeCost, raw: &[f64]) -> BTreeMap<String, f64> {
    cost.components()
        .iter()
        .zip(raw)
        .map(|(c, v)| (c.kind.to_string(), *v))
        .collect()
}

/// Total and raw component values without updating anything.
pub fn evaluate_cost(
    cfg: &Config,
    cost: &CompositeCost,
    params: &SeparatorParams,
    pair: &MixturePair,
) -> Result<(f64, Vec<f64>)> {
    let lg = LossGraph::build(cfg, cost, pair.len())?;
    let inputs = lg.inputs(params, pair);
    let eval = lg.graph.evaluate(&inputs)?;
    let raw = lg
        .raw
        .iter()
        .map(|id| eval.value(*id).item())
        .collect::<Result<Vec<_>>>()?;
    Ok((eval.value(lg.total).item()?, raw))
}

/// Averages each raw component over the first pairs of `dataset` and sets
/// the scales so each averaged component becomes one.
pub fn normalization_pass(
    cfg: &Config,
    cost: &CompositeCost,
    params: &SeparatorParams,
    dataset: &Dataset,
) -> Result<(CompositeCost, Vec<LogEntry>)> {
    let count = cfg.train.normalization_pairs.min(dataset.len());
    let mut sums = vec![0.0; cost.components().len()];
    let mut log = Vec::with_capacity(count);
    for (i, pair) in dataset.pairs[..count].iter().enumerate() {
        let pair = random_excerpt(pair, cfg.train.excerpt_len, &mut NoOffset)?;
        let (total, raw) = evaluate_cost(cfg, cost, params, &pair)?;
        for (s, r) in sums.iter_mut().zip(&raw) {
            *s += r;
        }
        log.push(LogEntry {
            phase: Phase::Normalize,
            epoch: 0,
            step: i,
            components: components_map(cost, &raw),
            total,
        });
    }
    let means: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
    Ok((normalize_cost_scales(cost, &means)?, log))
}

/// Always yields the smallest value, so normalization crops start at zero.
struct NoOffset;

impl rand::RngCore for NoOffset {
    fn next_u32(&mut self) -> u32 {
        0
    }
    fn next_u64(&mut self) -> u64 {
        0
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        dest.fill(0)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        dest.fill(0);
        Ok(())
    }
}

/// Result of one optimizer step; values are from before the update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub total: f64,
    pub raw: Vec<f64>,
}

/// One optimizer step on `pair` (already cropped). Parameters are left
/// untouched if the loss or any gradient is not finite.
pub fn train_step(
    cfg: &Config,
    cost: &CompositeCost,
    params: &mut SeparatorParams,
    optimizer: &mut OptimizerState,
    pair: &MixturePair,
    at: Progress,
) -> Result<StepResult> {
    let lg = LossGraph::build(cfg, cost, pair.len())?;
    let inputs = lg.inputs(params, pair);
    let eval = lg.graph.evaluate(&inputs)?;
    let total = eval.value(lg.total).item()?;
    let raw = lg
        .raw
        .iter()
        .map(|id| eval.value(*id).item())
        .collect::<Result<Vec<_>>>()?;
    let diverged = |detail: String| Error::NumericalDivergence {
        epoch: at.epoch,
        step: at.step,
        detail,
    };
    if !total.is_finite() {
        return Err(diverged(format!("loss is {total}")));
    }
    let names = params.param_names();
    let grads = lg.graph.backward(&eval, &names)?;
    for (name, g) in &grads {
        if !g.all_finite() {
            return Err(diverged(format!("non-finite gradient for `{name}`")));
        }
    }
    optimizer.apply(&cfg.train.optimizer_config(), params, &grads)?;
    Ok(StepResult { total, raw })
}

/// Stateful training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: Config,
    cost: CompositeCost,
    params: SeparatorParams,
    optimizer: OptimizerState,
    progress: Progress,
    log: Vec<LogEntry>,
}

impl Trainer {
    /// Fresh parameters from the seed, then the normalization pass.
    pub fn new(config: Config, dataset: &Dataset) -> Result<Self> {
        config.validate()?;
        let cost = config.train.cost.parse()?;
        Self::with_cost(config, cost, dataset)
    }

    /// Like [`Trainer::new`] but with an explicit cost, which may carry
    /// component gains.
    pub fn with_cost(config: Config, cost: CompositeCost, dataset: &Dataset) -> Result<Self> {
        config.validate()?;
        let params = init_params(config.train.seed, &config.network)?;
        let (cost, log) = normalization_pass(&config, &cost, &params, dataset)?;
        Ok(Trainer {
            config,
            cost,
            params,
            optimizer: OptimizerState::default(),
            progress: Progress::default(),
            log,
        })
    }

    /// Continues a run saved with [`Trainer::checkpoint`].
    pub fn resume(ckpt: &Checkpoint) -> Result<Self> {
        let path = Path::new("<checkpoint>");
        let config = ckpt.config.clone();
        config.validate()?;
        let (Some(scales), Some(progress)) = (&ckpt.cost_scales, ckpt.progress) else {
            return Err(Error::InvalidArgument(
                "checkpoint holds parameters only, not a resumable run".into(),
            ));
        };
        let cost: CompositeCost = config.train.cost.parse()?;
        let cost = normalize_cost_scales(&cost, &scales.iter().map(|s| 1.0 / s).collect::<Vec<_>>())?;
        Ok(Trainer {
            params: ckpt.params(path)?,
            optimizer: ckpt.optimizer_state(path)?,
            cost,
            config,
            progress,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn cost(&self) -> &CompositeCost {
        &self.cost
    }

    pub fn params(&self) -> &SeparatorParams {
        &self.params
    }

    pub fn progress(&self) -> Progress {
        self.progress
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn is_done(&self) -> bool {
        self.progress.epoch >= self.config.train.epochs
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(&self.config, &self.params).with_optimizer(&self.optimizer);
        c.cost_scales = Some(self.cost.scales().to_vec());
        c.progress = Some(self.progress);
        c
    }

    fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut step_rng(self.config.train.seed, epoch, 0, SHUFFLE_STREAM));
        order
    }

    /// Runs steps until the configured epochs are done or `max_steps` more
    /// steps have been taken. `observer` sees the parameters after every
    /// update.
    pub fn run(
        &mut self,
        dataset: &Dataset,
        max_steps: Option<usize>,
        mut observer: impl FnMut(&SeparatorParams, &LogEntry),
    ) -> Result<()> {
        let mut taken = 0;
        while !self.is_done() && max_steps.map_or(true, |m| taken < m) {
            let Progress { epoch, step } = self.progress;
            let order = self.epoch_order(epoch, dataset.len());
            let mut rng = step_rng(self.config.train.seed, epoch, step, EXCERPT_STREAM);
            let pair = random_excerpt(&dataset.pairs[order[step]], self.config.train.excerpt_len, &mut rng)?;
            let r = train_step(
                &self.config,
                &self.cost,
                &mut self.params,
                &mut self.optimizer,
                &pair,
                self.progress,
            )?;
            let entry = LogEntry {
                phase: Phase::Train,
                epoch,
                step,
                components: components_map(&self.cost, &r.raw),
                total: r.total,
            };
            observer(&self.params, &entry);
            self.log.push(entry);
            self.progress = if step + 1 == dataset.len() {
                Progress {
                    epoch: epoch + 1,
                    step: 0,
                }
            } else {
                Progress {
                    epoch,
                    step: step + 1,
                }
            };
            taken += 1;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub params: SeparatorParams,
    pub cost: CompositeCost,
    pub log: Vec<LogEntry>,
    pub checkpoint: Checkpoint,
}

/// Initializes, normalizes and trains for the configured number of epochs.
pub fn fit(dataset: &Dataset, config: &Config) -> Result<FitOutcome> {
    let mut t = Trainer::new(config.clone(), dataset)?;
    t.run(dataset, None, |_, _| {})?;
    Ok(FitOutcome {
        checkpoint: t.checkpoint(),
        params: t.params.clone(),
        cost: t.cost.clone(),
        log: t.log.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aet_net::WeightSharing;
    use crate::fixtures::two_speaker_mixture;
    use crate::losses::LossKind;

    fn tiny(cost: &str) -> Config {
        Config {
            network: NetworkConfig {
                components: 8,
                taps: 32,
                stride: 8,
                hidden: 8,
                weight_sharing: WeightSharing::Shared,
                ..NetworkConfig::default()
            },
            stoi: StoiConfig::default(),
            train: TrainConfig {
                cost: cost.into(),
                epochs: 2,
                excerpt_len: 0,
                trim: 64,
                learning_rate: 1e-2,
                ..TrainConfig::default()
            },
        }
    }

    fn data(n: usize, secs: f64) -> Dataset {
        let pairs = (0..n)
            .map(|k| two_speaker_mixture(secs, 16000, 0.0, k as u64).unwrap())
            .collect();
        Dataset::new(pairs, Split::Train).unwrap()
    }

    #[test]
    fn zero_epochs_keeps_initial_params() {
        let mut cfg = tiny("sdr");
        cfg.train.epochs = 0;
        let d = data(2, 0.3);
        let out = fit(&d, &cfg).unwrap();
        assert_eq!(out.params, init_params(0, &cfg.network).unwrap());
        assert!(out.log.iter().all(|e| e.phase == Phase::Normalize));
        assert_eq!(out.log.len(), 2);
    }

    #[test]
    fn normalization_gives_unit_components() {
        let cfg = tiny("sdr:0.75+stoi:0.25");
        let d = data(3, 0.8);
        let t = Trainer::new(cfg.clone(), &d).unwrap();
        let mut sums = [0.0; 2];
        for pair in &d.pairs {
            let (_, raw) = evaluate_cost(&cfg, t.cost(), t.params(), pair).unwrap();
            for i in 0..2 {
                sums[i] += raw[i] * t.cost().scales()[i];
            }
        }
        for s in sums {
            assert!((s / 3.0 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut cfg = tiny("mse");
        cfg.train.learning_rate = 0.0;
        let d = data(1, 0.3);
        let mut t = Trainer::new(cfg.clone(), &d).unwrap();
        t.run(&d, Some(1), |_, _| {}).unwrap();
        assert_eq!(t.params(), &init_params(0, &cfg.network).unwrap());
    }

    #[test]
    fn small_step_descends() {
        for seed in 0..5 {
            let mut cfg = tiny("mse");
            cfg.train.seed = seed;
            cfg.train.optimizer = OptimizerKind::Sgd;
            let d = data(1, 0.3);
            let cost = CompositeCost::single(LossKind::Mse);
            let mut params = init_params(seed, &cfg.network).unwrap();
            let mut opt = OptimizerState::default();
            let before = evaluate_cost(&cfg, &cost, &params, &d.pairs[0]).unwrap().0;
            // Scale the rate to the gradient so the step is tiny but visible.
            cfg.train.learning_rate = 1e-3 / before.max(1e-12);
            train_step(&cfg, &cost, &mut params, &mut opt, &d.pairs[0], Progress::default()).unwrap();
            let after = evaluate_cost(&cfg, &cost, &params, &d.pairs[0]).unwrap().0;
            assert!(after < before, "seed {seed}: {after} >= {before}");
        }
    }

    #[test]
    fn gain_is_absorbed_by_normalization() {
        let mut cfg = tiny("sdr:0.5+sar:0.5");
        cfg.train.epochs = 5;
        let d = data(2, 0.3);
        let cost: CompositeCost = cfg.train.cost.parse().unwrap();
        let mut boosted = cost.clone();
        boosted.components_mut()[1].gain = 37.0;
        let mut a = Trainer::with_cost(cfg.clone(), cost, &d).unwrap();
        let mut b = Trainer::with_cost(cfg, boosted, &d).unwrap();
        a.run(&d, Some(10), |_, _| {}).unwrap();
        b.run(&d, Some(10), |_, _| {}).unwrap();
        let totals = |t: &Trainer| -> Vec<f64> {
            t.log().iter().filter(|e| e.phase == Phase::Train).map(|e| e.total).collect()
        };
        let (ta, tb) = (totals(&a), totals(&b));
        assert_eq!(ta.len(), 10);
        for (x, y) in ta.iter().zip(&tb) {
            assert!((x - y).abs() <= 1e-9 * x.abs(), "{x} vs {y}");
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let mut cfg = tiny("sdr");
        cfg.train.excerpt_len = 4096;
        let d = data(3, 0.4);
        let mut whole = Trainer::new(cfg.clone(), &d).unwrap();
        whole.run(&d, None, |_, _| {}).unwrap();

        let mut first = Trainer::new(cfg, &d).unwrap();
        first.run(&d, Some(4), |_, _| {}).unwrap();
        let json = first.checkpoint().to_json();
        let ckpt: Checkpoint = serde_json::from_str(&json).unwrap();
        let mut second = Trainer::resume(&ckpt).unwrap();
        second.run(&d, None, |_, _| {}).unwrap();

        assert_eq!(second.params(), whole.params());
        let joined: Vec<LogEntry> = first.log().iter().chain(second.log()).cloned().collect();
        assert_eq!(joined, whole.log());
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let cfg = tiny("sdr");
        let d = data(1, 0.3);
        let mut t = Trainer::new(cfg, &d).unwrap();
        t.run(&d, Some(1), |_, _| {}).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        t.checkpoint().save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.params(&path).unwrap(), *t.params());
        assert_eq!(back, t.checkpoint());

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::CorruptFile { .. })));

        std::fs::write(&path, text.replacen("\"format_version\":1", "\"format_version\":99", 1)).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::IncompatibleCheckpoint(_))));

        let mut bad = t.checkpoint();
        bad.tensors.get_mut("analysis").unwrap().data.insert(0, '!');
        bad.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::CorruptFile { .. })));
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = tiny("mse");
        let d = data(1, 0.3);
        let mut params = init_params(0, &cfg.network).unwrap();
        params.get_mut("dense2.bias").unwrap().data_mut()[0] = f64::NAN;
        let before = params.clone();
        let cost = CompositeCost::single(LossKind::Mse);
        let r = train_step(
            &cfg,
            &cost,
            &mut params,
            &mut OptimizerState::default(),
            &d.pairs[0],
            Progress { epoch: 3, step: 1 },
        );
        assert!(matches!(r, Err(Error::NumericalDivergence { epoch: 3, step: 1, .. })));
        // Parameters are untouched (NaN compares unequal, so compare bits).
        let bits = |p: &SeparatorParams| -> Vec<u64> {
            p.tensors().values().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&params), bits(&before));
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny("sdr");
        cfg.train.excerpt_len = 100;
        assert!(cfg.validate().is_err());
        cfg.train.excerpt_len = 0;
        cfg.train.cost = "sdr:+".into();
        assert!(matches!(cfg.validate(), Err(Error::InvalidCost { .. })));
        let json = serde_json::to_string(&Config::default()).unwrap();
        let back: Config = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Config::default());
        assert!(serde_json::from_str::<Config>(r#"{"train":{"bogus":1}}"#).is_err());
    }
}
