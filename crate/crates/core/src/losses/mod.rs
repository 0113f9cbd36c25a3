//! Differentiable separation costs and weighted composites.
//!
//! Every cost is in minimization form: the energy-ratio costs are the
//! reciprocal-style surrogates of SDR/SIR/SAR and the intelligibility cost is
//! `1 - STOI`. Each is available as a graph fragment (`*_node`) for training
//! and as a plain function on waveforms.

mod bss;
mod stoi;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bss::{mse_node, sar_node, sdr_node, sir_node};
pub use stoi::{stoi_nodes, IntelligibilityMatrix, StoiConfig, StoiNodes};

use crate::diff_engine::{Graph, Inputs, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::signal_io::Waveform;

/// Guard added to denominators that vanish at orthogonality or silence.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Cost strings of the seven compared training objectives, in order.
pub const EXPERIMENT_COSTS: [&str; 7] = [
    "mse",
    "sdr",
    "sdr:0.75+stoi:0.25",
    "sdr:0.5+stoi:0.5",
    "sir:0.75+sar:0.25",
    "sir:0.5+sar:0.5",
    "sir:0.25+sar:0.75",
];

pub fn inner_product(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "inner product of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

fn check_aligned(ws: &[&Waveform]) -> Result<()> {
    let first = ws[0];
    for w in &ws[1..] {
        if w.len() != first.len() {
            return Err(Error::shape(format!(
                "waveform lengths differ: {} vs {}",
                first.len(),
                w.len()
            )));
        }
        if w.sample_rate() != first.sample_rate() {
            return Err(Error::shape(format!(
                "sample rates differ: {} vs {}",
                first.sample_rate(),
                w.sample_rate()
            )));
        }
    }
    Ok(())
}

/// Builds a graph over inputs `x`, `y`, `z` (as many as given), evaluates
/// the node returned by `build` and returns its scalar value.
fn eval_scalar(
    ws: &[&Waveform],
    build: impl FnOnce(&mut Graph, &[NodeId]) -> Result<NodeId>,
) -> Result<f64> {
    check_aligned(ws)?;
    let names = ["x", "y", "z"];
    let mut g = Graph::new();
    let mut inputs = Inputs::new();
    let mut ids = Vec::with_capacity(ws.len());
    for (w, name) in ws.iter().zip(names) {
        ids.push(g.input(name, &[w.len()])?);
        inputs.insert(name.to_string(), Tensor::vector(w.samples().to_vec()));
    }
    let out = build(&mut g, &ids)?;
    g.set_output(out);
    g.forward(&inputs)?.item()
}

pub fn mse_loss(x: &Waveform, y: &Waveform) -> Result<f64> {
    eval_scalar(&[x, y], |g, n| mse_node(g, n[0], n[1]))
}

pub fn sdr_loss(x: &Waveform, y: &Waveform, eps: f64) -> Result<f64> {
    eval_scalar(&[x, y], |g, n| sdr_node(g, n[0], n[1], eps))
}

pub fn sir_loss(x: &Waveform, y: &Waveform, z: &Waveform, eps: f64) -> Result<f64> {
    eval_scalar(&[x, y, z], |g, n| sir_node(g, n[0], n[1], n[2], eps))
}

pub fn sar_loss(x: &Waveform, y: &Waveform, z: &Waveform, eps: f64) -> Result<f64> {
    eval_scalar(&[x, y, z], |g, n| sar_node(g, n[0], n[1], n[2], eps))
}

/// Intelligibility score and per band/segment correlations of `x` against `y`.
///
/// The score is reported as `1 - loss` so that it is exactly complementary
/// to [`stoi_loss`].
pub fn stoi_forward(x: &Waveform, y: &Waveform, cfg: &StoiConfig) -> Result<(f64, IntelligibilityMatrix)> {
    check_aligned(&[x, y])?;
    let mut g = Graph::new();
    let xi = g.input("x", &[x.len()])?;
    let yi = g.input("y", &[y.len()])?;
    let nodes = stoi_nodes(&mut g, xi, yi, cfg, x.sample_rate())?;
    g.set_output(nodes.loss);
    let mut inputs = Inputs::new();
    inputs.insert("x".into(), Tensor::vector(x.samples().to_vec()));
    inputs.insert("y".into(), Tensor::vector(y.samples().to_vec()));
    let eval = g.evaluate(&inputs)?;
    let loss = eval.value(nodes.loss).item()?;
    let d = eval.value(nodes.d);
    let (bands, segs) = (d.shape()[0], d.shape()[1]);
    let d = Tensor::new(vec![bands, segs], d.data().to_vec())?;
    Ok((1.0 - loss, IntelligibilityMatrix { d }))
}

pub fn stoi_loss(x: &Waveform, y: &Waveform, cfg: &StoiConfig) -> Result<f64> {
    check_aligned(&[x, y])?;
    let rate = x.sample_rate();
    eval_scalar(&[x, y], |g, n| Ok(stoi_nodes(g, n[0], n[1], cfg, rate)?.loss))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Sdr,
    Sir,
    Sar,
    Stoi,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Mse,
        LossKind::Sdr,
        LossKind::Sir,
        LossKind::Sar,
        LossKind::Stoi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Sdr => "sdr",
            LossKind::Sir => "sir",
            LossKind::Sar => "sar",
            LossKind::Stoi => "stoi",
        }
    }

    /// Whether the cost reads the interference signal.
    pub fn uses_interference(self) -> bool {
        matches!(self, LossKind::Sir | LossKind::Sar)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown loss `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostComponent {
    pub kind: LossKind,
    pub weight: f64,
    /// Constant factor on the raw loss (1 for parsed costs).
    pub gain: f64,
}

/// Weighted sum of loss components, each with a normalization scale.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeCost {
    components: Vec<CostComponent>,
    scales: Vec<f64>,
}

impl CompositeCost {
    pub fn new(components: Vec<CostComponent>) -> Result<Self> {
        let text = || {
            components
                .iter()
                .map(|c| format!("{}:{}", c.kind, c.weight))
                .collect::<Vec<_>>()
                .join("+")
        };
        let fail = |reason: &str| Error::InvalidCost {
            cost: text(),
            reason: reason.to_string(),
        };
        if components.is_empty() {
            return Err(fail("no components"));
        }
        if components.iter().any(|c| !(c.weight >= 0.0) || !c.weight.is_finite()) {
            return Err(fail("weights must be finite and nonnegative"));
        }
        if !(components.iter().map(|c| c.weight).sum::<f64>() > 0.0) {
            return Err(fail("weights must not all be zero"));
        }
        for (i, c) in components.iter().enumerate() {
            if components[..i].iter().any(|p| p.kind == c.kind) {
                return Err(fail("duplicate component"));
            }
        }
        let scales = vec![1.0; components.len()];
        Ok(CompositeCost { components, scales })
    }

    pub fn single(kind: LossKind) -> Self {
        CompositeCost::new(vec![CostComponent {
            kind,
            weight: 1.0,
            gain: 1.0,
        }])
        .expect("single component is valid")
    }

    pub fn components(&self) -> &[CostComponent] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [CostComponent] {
        &mut self.components
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn uses_interference(&self) -> bool {
        self.components.iter().any(|c| c.kind.uses_interference())
    }

    pub fn has(&self, kind: LossKind) -> bool {
        self.components.iter().any(|c| c.kind == kind)
    }
}

impl fmt::Display for CompositeCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let [only] = self.components.as_slice() {
            if only.weight == 1.0 {
                return write!(f, "{}", only.kind);
            }
        }
        let parts: Vec<String> = self
            .components
            .iter()
            .map(|c| format!("{}:{}", c.kind, c.weight))
            .collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for CompositeCost {
    type Err = Error;

    /// Parses `name[:weight](+name[:weight])*`, e.g. `sdr:0.75+stoi:0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let fail = |reason: String| Error::InvalidCost {
            cost: s.to_string(),
            reason,
        };
        let mut components = Vec::new();
        for part in s.trim().split('+') {
            let part = part.trim();
            if part.is_empty() {
                return Err(fail("empty component".into()));
            }
            let (name, weight) = match part.split_once(':') {
                Some((n, w)) => {
                    let w = w.trim();
                    let parsed: f64 = w
                        .parse()
                        .map_err(|_| fail(format!("bad weight `{w}`")))?;
                    if !(parsed > 0.0) || !parsed.is_finite() {
                        return Err(fail(format!("weight `{w}` must be a positive decimal")));
                    }
                    (n.trim(), parsed)
                }
                None => (part, 1.0),
            };
            let kind: LossKind = name
                .to_ascii_lowercase()
                .parse()
                .map_err(|_| fail(format!("unknown component `{name}`")))?;
            components.push(CostComponent {
                kind,
                weight,
                gain: 1.0,
            });
        }
        CompositeCost::new(components).map_err(|e| match e {
            Error::InvalidCost { reason, .. } => fail(reason),
            other => other,
        })
    }
}

/// Sets each scale to the reciprocal of the component's initial loss so
/// every scaled component starts at one.
pub fn normalize_cost_scales(cost: &CompositeCost, initial_losses: &[f64]) -> Result<CompositeCost> {
    if initial_losses.len() != cost.components.len() {
        return Err(Error::shape(format!(
            "{} initial losses for {} components",
            initial_losses.len(),
            cost.components.len()
        )));
    }
    let mut scales = Vec::with_capacity(initial_losses.len());
    for (c, &l) in cost.components.iter().zip(initial_losses) {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::DegenerateScale {
                component: c.kind.to_string(),
                value: l,
            });
        }
        scales.push(1.0 / l);
    }
    Ok(CompositeCost {
        components: cost.components.clone(),
        scales,
    })
}

/// Graph nodes of a composite cost.
#[derive(Clone, Debug)]
pub struct CompositeNodes {
    /// `sum_i weight_i * scale_i * raw_i`.
    pub total: NodeId,
    /// Raw value `gain_i * L_i` per component, in cost order.
    pub raw: Vec<NodeId>,
}

#[allow(clippy::too_many_arguments)]
pub fn composite_nodes(
    g: &mut Graph,
    cost: &CompositeCost,
    x: NodeId,
    y: NodeId,
    z: NodeId,
    stoi: &StoiConfig,
    sample_rate: u32,
    eps: f64,
) -> Result<CompositeNodes> {
    let mut raw = Vec::with_capacity(cost.components.len());
    let mut total: Option<NodeId> = None;
    for (c, scale) in cost.components.iter().zip(&cost.scales) {
        let l = match c.kind {
            LossKind::Mse => mse_node(g, x, y)?,
            LossKind::Sdr => sdr_node(g, x, y, eps)?,
            LossKind::Sir => sir_node(g, x, y, z, eps)?,
            LossKind::Sar => sar_node(g, x, y, z, eps)?,
            LossKind::Stoi => stoi_nodes(g, x, y, stoi, sample_rate)?.loss,
        };
        let r = if c.gain == 1.0 { l } else { g.scale(l, c.gain)? };
        raw.push(r);
        let term = g.scale(r, c.weight * scale)?;
        total = Some(match total {
            None => term,
            Some(t) => g.add(t, term)?,
        });
    }
    Ok(CompositeNodes {
        total: total.expect("cost has components"),
        raw,
    })
}

fn eval_composite(
    cost: &CompositeCost,
    x: &Waveform,
    y: &Waveform,
    z: &Waveform,
    cfg: &StoiConfig,
) -> Result<(f64, Vec<f64>)> {
    check_aligned(&[x, y, z])?;
    let mut g = Graph::new();
    let n = x.len();
    let (xi, yi, zi) = (g.input("x", &[n])?, g.input("y", &[n])?, g.input("z", &[n])?);
    let nodes = composite_nodes(&mut g, cost, xi, yi, zi, cfg, x.sample_rate(), DEFAULT_EPSILON)?;
    g.set_output(nodes.total);
    let mut inputs = Inputs::new();
    for (name, w) in [("x", x), ("y", y), ("z", z)] {
        inputs.insert(name.into(), Tensor::vector(w.samples().to_vec()));
    }
    let eval = g.evaluate(&inputs)?;
    let raw = nodes
        .raw
        .iter()
        .map(|id| eval.value(*id).item())
        .collect::<Result<Vec<_>>>()?;
    Ok((eval.value(nodes.total).item()?, raw))
}

/// `sum_i w_i * c_i * L_i(x, y, z)`.
pub fn composite_loss(
    cost: &CompositeCost,
    x: &Waveform,
    y: &Waveform,
    z: &Waveform,
    cfg: &StoiConfig,
) -> Result<f64> {
    eval_composite(cost, x, y, z, cfg).map(|(t, _)| t)
}

/// Unscaled component values, in cost order.
pub fn component_losses(
    cost: &CompositeCost,
    x: &Waveform,
    y: &Waveform,
    z: &Waveform,
    cfg: &StoiConfig,
) -> Result<Vec<f64>> {
    eval_composite(cost, x, y, z, cfg).map(|(_, r)| r)
}
