use std::fs;
use std::path::Path;

use clap::Args;
use sepcost::aet_net::WeightSharing;
use sepcost::trainer::{Config, OptimizerKind};

use crate::CliError;

/// Flags that override values from the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// Cost string, e.g. `sdr` or `sdr:0.75+stoi:0.25`
    #[arg(long)]
    pub cost: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "learning-rate", alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long = "snr-db", allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    /// Training crop in samples (0 for whole utterances)
    #[arg(long = "excerpt-len")]
    pub excerpt_len: Option<usize>,
    #[arg(long)]
    pub trim: Option<usize>,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub taps: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long = "weight-sharing", value_parser = parse_sharing)]
    pub weight_sharing: Option<WeightSharing>,
    #[arg(long = "sample-rate")]
    pub sample_rate: Option<u32>,
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        _ => Err(format!("unknown optimizer `{s}` (adam, sgd)")),
    }
}

fn parse_sharing(s: &str) -> Result<WeightSharing, String> {
    match s {
        "shared" => Ok(WeightSharing::Shared),
        "independent" => Ok(WeightSharing::Independent),
        _ => Err(format!("unknown weight sharing `{s}` (shared, independent)")),
    }
}

pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
}

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) {
        let t = &mut cfg.train;
        let n = &mut cfg.network;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(t.cost, self.cost);
        set!(t.epochs, self.epochs);
        set!(t.seed, self.seed);
        set!(t.learning_rate, self.learning_rate);
        set!(t.optimizer, self.optimizer);
        set!(t.snr_db, self.snr_db);
        set!(t.excerpt_len, self.excerpt_len);
        set!(t.trim, self.trim);
        set!(n.components, self.components);
        set!(n.taps, self.taps);
        set!(n.stride, self.stride);
        set!(n.hidden, self.hidden);
        set!(n.weight_sharing, self.weight_sharing);
        set!(n.sample_rate, self.sample_rate);
    }
}
