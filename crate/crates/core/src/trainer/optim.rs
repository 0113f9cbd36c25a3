use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::aet_net::SeparatorParams;
use crate::diff_engine::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        // Zero is allowed so a step can be checked for being a no-op.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("optimizer epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Moment estimates of the adaptive method; empty for plain gradient descent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub steps: u64,
    pub first: BTreeMap<String, Tensor>,
    pub second: BTreeMap<String, Tensor>,
}

impl OptimizerState {
    pub fn apply(
        &mut self,
        cfg: &OptimizerConfig,
        params: &mut SeparatorParams,
        grads: &HashMap<String, Tensor>,
    ) -> Result<()> {
        self.steps += 1;
        let lr = cfg.learning_rate;
        let names: Vec<String> = params.tensors().keys().cloned().collect();
        for name in names {
            let g = grads
                .get(&name)
                .ok_or_else(|| Error::shape(format!("no gradient for `{name}`")))?;
            let p = params.get_mut(&name).expect("name from params");
            match cfg.kind {
                OptimizerKind::Sgd => {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
                OptimizerKind::Adam => {
                    let shape = g.shape();
                    let m = self
                        .first
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(shape));
                    let v = self
                        .second
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(shape));
                    let c1 = 1.0 - cfg.beta1.powi(self.steps as i32);
                    let c2 = 1.0 - cfg.beta2.powi(self.steps as i32);
                    for (((w, d), mi), vi) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * d;
                        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * d * d;
                        *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + cfg.epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
