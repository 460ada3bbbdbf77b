use crate::error::{Error, Result};
use crate::qcalculus::{caputo_from_samples, caputo_split};
use crate::qcore::QContext;

use super::solve::SolutionBundle;

/// A node enters the residual only if its Caputo sum is resolved to this
/// relative accuracy.
pub const NODE_TOLERANCE: f64 = 1e-8;

/// Largest normalised residual `|^cD^α u_k + (λ_k+m) u_k - f_k| / (1 + |f_k|)`
/// over all modes and all grid nodes whose Caputo sum is resolved.
///
/// The Caputo derivative at `T q^j` uses the stored trace values at
/// `T q^{j+i}`, so nodes close to the grid floor are skipped. Failed modes
/// are skipped as well; they are reported in the bundle diagnostics.
pub fn residual_check(bundle: &SolutionBundle, ctx: &QContext) -> Result<f64> {
    let alpha = bundle.alpha;
    let (n, _) = caputo_split(alpha);
    let depth = bundle.grid.depth();
    let nodes = bundle.grid.nodes();
    let mut worst: Option<f64> = None;
    for (i, trace) in bundle.traces.iter().enumerate() {
        if bundle.diagnostics[i].error.is_some() {
            continue;
        }
        let lambda = bundle.model.decay_rate(i);
        for j in 0..=depth.saturating_sub(n) {
            let samples = &trace[j..=depth];
            if samples.len() < n + 1 {
                break;
            }
            let t = nodes[j];
            let c = caputo_from_samples(samples, alpha, t, ctx)?;
            if c.tail_estimate.is_nan() || c.tail_estimate > NODE_TOLERANCE * c.value.abs().max(1.0) {
                continue;
            }
            let f = bundle.source.eval(i, t);
            let r = (c.value + lambda * trace[j] - f).abs() / (1.0 + f.abs());
            worst = Some(worst.map_or(r, |w: f64| w.max(r)));
        }
    }
    worst.ok_or(Error::InsufficientGrid)
}
