use std::io::Write;

use serde::{Deserialize, Serialize};

use super::estimate::EstimateReport;
use super::model::CoefficientField;
use super::solve::{ModeDiagnostics, ProblemKind, SolutionBundle};
use crate::error::Result;

/// Long-format `mode,t,u` table, modes in order, nodes from `T` down to 0.
pub fn write_solution_csv<W: Write>(bundle: &SolutionBundle, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "t", "u"])?;
    for (i, trace) in bundle.traces.iter().enumerate() {
        let mode = (i + 1).to_string();
        for (t, u) in bundle.grid.nodes().iter().zip(trace) {
            w.write_record([mode.as_str(), &t.to_string(), &u.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `k,value` table, the same layout the coefficient reader accepts.
pub fn write_coefficients_csv<W: Write>(field: &CoefficientField, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "value"])?;
    for (i, v) in field.values().iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Machine-readable summary of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub kind: ProblemKind,
    pub model: String,
    pub alpha: f64,
    pub q: f64,
    pub horizon: f64,
    pub modes: usize,
    pub grid_nodes: usize,
    pub residual_max: Option<f64>,
    pub failed_modes: Vec<usize>,
    pub values_at_horizon: Vec<f64>,
    pub initial_slope: Option<Vec<f64>>,
    pub estimate: Option<EstimateReport>,
    pub mode_diagnostics: Vec<ModeDiagnostics>,
}

impl SolveReport {
    pub fn new(bundle: &SolutionBundle, estimate: Option<EstimateReport>) -> Self {
        SolveReport {
            kind: bundle.kind,
            model: bundle.model.name().to_string(),
            alpha: bundle.alpha,
            q: bundle.grid.q(),
            horizon: bundle.grid.horizon(),
            modes: bundle.model.modes(),
            grid_nodes: bundle.grid.len(),
            residual_max: bundle.residual_max,
            failed_modes: bundle.failed_modes(),
            values_at_horizon: bundle.at_horizon(),
            initial_slope: bundle.initial_slope.clone(),
            estimate,
            mode_diagnostics: bundle.diagnostics.clone(),
        }
    }
}
