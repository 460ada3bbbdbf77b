use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::QContext;

/// Default relative floor: nodes stop once `T q^J < 1e-20 · T`.
pub const DEFAULT_RELATIVE_FLOOR: f64 = 1e-20;

/// q-geometric time nodes `T, Tq, …, Tq^J` followed by `0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    q: f64,
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, ctx: &QContext) -> Result<Self> {
        Self::with_floor(horizon, DEFAULT_RELATIVE_FLOOR, ctx)
    }

    /// `J` is the first index with `T q^J < relative_floor · T`, at least 1.
    pub fn with_floor(horizon: f64, relative_floor: f64, ctx: &QContext) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if !(relative_floor > 0.0 && relative_floor < 1.0) {
            return Err(Error::InvalidArgument(format!("grid floor must lie in (0,1), got {relative_floor}")));
        }
        let q = ctx.q();
        let mut nodes = vec![horizon];
        let mut j = 0i32;
        loop {
            j += 1;
            let t = horizon * q.powi(j);
            nodes.push(t);
            if t < relative_floor * horizon {
                break;
            }
        }
        nodes.push(0.0);
        Ok(TimeGrid { horizon, q, nodes })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// All nodes, decreasing, ending with 0.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// The positive nodes `T q^j`, `j = 0..=J`.
    pub fn positive_nodes(&self) -> &[f64] {
        &self.nodes[..self.nodes.len() - 1]
    }

    /// `J`, the exponent of the smallest positive node.
    pub fn depth(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}
