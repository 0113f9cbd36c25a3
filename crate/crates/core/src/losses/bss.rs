//! Energy-ratio surrogates in minimization form, plus mean squared error.

use crate::diff_engine::{Graph, NodeId};
use crate::error::Result;

/// `mean((x - y)^2)`.
pub fn mse_node(g: &mut Graph, x: NodeId, y: NodeId) -> Result<NodeId> {
    let diff = g.sub(x, y)?;
    let sq = g.square(diff)?;
    g.mean(sq)
}

/// `<x,x> / (<x,y>^2 + eps)`: least-energy output maximally correlated with
/// the target.
pub fn sdr_node(g: &mut Graph, x: NodeId, y: NodeId, eps: f64) -> Result<NodeId> {
    let xx = g.inner(x, x)?;
    let xy = g.inner(x, y)?;
    let xy2 = g.square(xy)?;
    let den = g.offset(xy2, eps)?;
    g.div(xx, den)
}

/// `<x,z>^2 / (<x,y>^2 + eps)`.
pub fn sir_node(g: &mut Graph, x: NodeId, y: NodeId, z: NodeId, eps: f64) -> Result<NodeId> {
    let xz = g.inner(x, z)?;
    let xz2 = g.square(xz)?;
    let xy = g.inner(x, y)?;
    let xy2 = g.square(xy)?;
    let den = g.offset(xy2, eps)?;
    g.div(xz2, den)
}

/// `<x,x> / (<x,y>^2/<y,y> + <x,z>^2/<z,z> + eps)`, which assumes the target
/// and interference are orthogonal.
pub fn sar_node(g: &mut Graph, x: NodeId, y: NodeId, z: NodeId, eps: f64) -> Result<NodeId> {
    let xx = g.inner(x, x)?;
    let xy = g.inner(x, y)?;
    let xz = g.inner(x, z)?;
    let yy = g.inner(y, y)?;
    let zz = g.inner(z, z)?;
    let xy2 = g.square(xy)?;
    let xz2 = g.square(xz)?;
    let py = g.div(xy2, yy)?;
    let pz = g.div(xz2, zz)?;
    let proj = g.add(py, pz)?;
    let den = g.offset(proj, eps)?;
    g.div(xx, den)
}
