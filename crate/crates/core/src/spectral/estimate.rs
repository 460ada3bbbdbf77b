use serde::{Deserialize, Serialize};

use super::model::{sobolev_norm_sq, CoefficientField, SpectralModel};
use super::solve::{ProblemKind, SolutionBundle, Source};
use crate::error::{Error, Result};

/// Both sides of an a-priori estimate and their ratio. Nothing is asserted;
/// the constant in front of the right-hand side is `C_T = max(2, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub c_t: f64,
    /// `‖f‖²_{H^d} / (‖φ‖²_{H^{d+2}} + ‖ρ‖²_{H^{d+2}})` for the inverse problem.
    pub source_ratio: Option<f64>,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// Measures `max_t (‖^cD^α u‖²_{H^d} + ‖u‖²_{H^{d+2}})` against
/// `C_T (‖φ‖²_{H^{d+2}} [+ ‖ρ‖²_{H^{d+2}}] + (sup ‖f‖_{H^d} + sup ‖D_q f‖_{H^d})²)`.
///
/// The Caputo derivative is taken from the equation, `f_k - (λ_k+m) u_k`.
/// For the inverse problem the recovered source is an output, so the
/// right-hand side holds only the data terms and the source norm is
/// reported separately.
pub fn energy_estimate_report(
    bundle: &SolutionBundle,
    phi: &CoefficientField,
    rho: Option<&CoefficientField>,
    source: &Source,
    d: f64,
) -> Result<EstimateReport> {
    bundle.ensure_all_ok()?;
    let model: &SpectralModel = &bundle.model;
    model.check_len(phi)?;
    if let Some(r) = rho {
        model.check_len(r)?;
    }
    source.check_len(model)?;
    let eig = model.eigenvalues();
    let k = model.modes();
    let q = bundle.grid.q();
    let horizon = bundle.grid.horizon();
    let c_t = horizon.max(2.0);

    let mut lhs = 0.0f64;
    let mut f_sup = 0.0f64;
    let mut df_sup = 0.0f64;
    let mut caputo = vec![0.0; k];
    let mut u = vec![0.0; k];
    let mut f = vec![0.0; k];
    let mut df = vec![0.0; k];
    for (j, &t) in bundle.grid.positive_nodes().iter().enumerate() {
        for i in 0..k {
            u[i] = bundle.traces[i][j];
            f[i] = source.eval(i, t);
            caputo[i] = f[i] - model.decay_rate(i) * u[i];
            df[i] = (f[i] - source.eval(i, q * t)) / (t * (1.0 - q));
        }
        let a = sobolev_norm_sq(&caputo, eig, d) + sobolev_norm_sq(&u, eig, d + 2.0);
        if !a.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite energy at t = {t}")));
        }
        lhs = lhs.max(a);
        f_sup = f_sup.max(sobolev_norm_sq(&f, eig, d).sqrt());
        df_sup = df_sup.max(sobolev_norm_sq(&df, eig, d).sqrt());
    }

    let data = sobolev_norm_sq(phi.values(), eig, d + 2.0)
        + rho.map_or(0.0, |r| sobolev_norm_sq(r.values(), eig, d + 2.0));
    let (rhs, source_ratio) = if bundle.kind == ProblemKind::Inverse {
        (c_t * data, Some(ratio(f_sup * f_sup, data)))
    } else {
        (c_t * (data + (f_sup + df_sup).powi(2)), None)
    };
    Ok(EstimateReport { lhs, rhs, ratio: ratio(lhs, rhs), c_t, source_ratio })
}

/// `Σ_k u_k(t) ψ_k(x)` for every grid node (rows) and point (columns).
pub fn reconstruct_field(bundle: &SolutionBundle, points: &[f64]) -> Result<Vec<Vec<f64>>> {
    let model = &bundle.model;
    if !model.has_basis() {
        return Err(Error::NoBasis);
    }
    let mut basis = Vec::with_capacity(model.modes());
    for k in 1..=model.modes() {
        basis.push(points.iter().map(|&x| model.basis_value(k, x)).collect::<Result<Vec<f64>>>()?);
    }
    let field = (0..bundle.grid.len())
        .map(|j| {
            (0..points.len())
                .map(|p| {
                    let mut s = crate::sum::CompensatedSum::new();
                    for (i, b) in basis.iter().enumerate() {
                        s.add(bundle.traces[i][j] * b[p]);
                    }
                    s.value()
                })
                .collect()
        })
        .collect();
    Ok(field)
}
