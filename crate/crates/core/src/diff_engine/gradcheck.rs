use super::{Graph, Inputs, Tensor};
use crate::error::{Error, Result};

/// Entries whose magnitude is below this fraction of the largest gradient
/// entry are compared against that floor instead of their own size.
pub const RELATIVE_FLOOR: f64 = 1e-2;

fn scalar_output(graph: &Graph, inputs: &Inputs) -> Result<f64> {
    let t = graph.forward(inputs)?;
    if t.len() != 1 {
        return Err(Error::NotScalar(t.shape().to_vec()));
    }
    Ok(t.data()[0])
}

/// Central differences of the scalar graph output with respect to the
/// selected coordinates of input `wrt`.
///
/// Coordinate `i` uses step `h = step * max(1, |x_i|)`.
pub fn finite_difference_at(
    graph: &Graph,
    inputs: &Inputs,
    wrt: &str,
    step: f64,
    indices: &[usize],
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let mut work = inputs.clone();
    let len = work
        .get(wrt)
        .ok_or_else(|| Error::UnboundInput(wrt.to_string()))?
        .len();
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= len {
            return Err(Error::InvalidArgument(format!("index {i} out of range {len}")));
        }
        let x0 = work[wrt].data()[i];
        let h = step * x0.abs().max(1.0);
        let (xp, xm) = (x0 + h, x0 - h);
        work.get_mut(wrt).unwrap().data_mut()[i] = xp;
        let fp = scalar_output(graph, &work)?;
        work.get_mut(wrt).unwrap().data_mut()[i] = xm;
        let fm = scalar_output(graph, &work)?;
        work.get_mut(wrt).unwrap().data_mut()[i] = x0;
        out.push((fp - fm) / (xp - xm));
    }
    Ok(out)
}

/// Central-difference gradient over every coordinate of `wrt`.
pub fn finite_difference_gradient(
    graph: &Graph,
    inputs: &Inputs,
    wrt: &str,
    step: f64,
) -> Result<Tensor> {
    let t = inputs
        .get(wrt)
        .ok_or_else(|| Error::UnboundInput(wrt.to_string()))?;
    let shape = t.shape().to_vec();
    let idx: Vec<usize> = (0..t.len()).collect();
    Tensor::new(shape, finite_difference_at(graph, inputs, wrt, step, &idx)?)
}

/// Largest elementwise relative discrepancy between two gradient vectors.
///
/// The denominator for entry `i` is `max(|a_i|, |n_i|, RELATIVE_FLOOR * max_j |n_j|)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric
        .iter()
        .chain(analytic)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (RELATIVE_FLOOR * scale).max(f64::MIN_POSITIVE);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub input: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Compares reverse-mode gradients of `wrt` against central differences,
/// either at every coordinate or at the given subset.
pub fn check_gradient(
    graph: &Graph,
    inputs: &Inputs,
    wrt: &str,
    step: f64,
    indices: Option<&[usize]>,
) -> Result<GradCheckReport> {
    let (_, grads) = super::evaluate_with_gradient(graph, inputs, &[wrt])?;
    let analytic = &grads[wrt];
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..analytic.len()).collect();
            &all
        }
    };
    let numeric = finite_difference_at(graph, inputs, wrt, step, idx)?;
    let picked: Vec<f64> = idx.iter().map(|&i| analytic.data()[i]).collect();
    Ok(GradCheckReport {
        input: wrt.to_string(),
        checked: idx.len(),
        max_rel_error: max_relative_error(&picked, &numeric),
    })
}
