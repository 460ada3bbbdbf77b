use rayon::prelude::*;

use super::grid::TimeGrid;
use super::model::{CoefficientField, SpectralModel};
use super::solve::{check_order, ModeDiagnostics, ProblemKind, SolutionBundle, Source};
use crate::error::{Error, Result};
use crate::qcore::{q_gamma, QContext};
use crate::qspecial::{q_mittag_leffler, EvalStrategy, MLParams};

/// Denominators below this value are suspicious unless the theoretical floor
/// is itself that small.
pub const DENOMINATOR_ABSOLUTE_FLOOR: f64 = 1e-14;

/// Theoretical lower bound `g / (1+g)`, `g = (λ_k+m) T^α / Γ_q(α+1)`, for
/// `1 - e_{α,1}(-(λ_k+m)T^α;q)`.
pub fn denominator_floor(alpha: f64, decay_rate: f64, horizon: f64, ctx: &QContext) -> Result<f64> {
    let g = decay_rate * horizon.powf(alpha) / q_gamma(alpha + 1.0, ctx)?;
    Ok(g / (1.0 + g))
}

/// Recovers the time-independent source `f` and the trajectory `u` from
/// `u(0) = φ` and `u(T) = ρ` for `0 < α < 1`, on the default grid.
pub fn inverse_solve(
    alpha: f64,
    phi: &CoefficientField,
    rho: &CoefficientField,
    horizon: f64,
    model: &SpectralModel,
    ctx: &QContext,
    strat: &EvalStrategy,
) -> Result<(SolutionBundle, CoefficientField)> {
    let grid = TimeGrid::new(horizon, ctx)?;
    inverse_solve_on(alpha, phi, rho, &grid, model, ctx, strat)
}

/// As [`inverse_solve`] with an explicit time grid; `T` is the grid horizon.
///
/// `f_k = (λ_k+m)φ_k - (λ_k+m)(φ_k-ρ_k) / (1 - E_k(T))` and
/// `u_k(t) = φ_k + (φ_k-ρ_k)(E_k(t) - 1) / (1 - E_k(T))` with
/// `E_k(t) = e_{α,1}(-(λ_k+m)t^α;q)`.
pub fn inverse_solve_on(
    alpha: f64,
    phi: &CoefficientField,
    rho: &CoefficientField,
    grid: &TimeGrid,
    model: &SpectralModel,
    ctx: &QContext,
    strat: &EvalStrategy,
) -> Result<(SolutionBundle, CoefficientField)> {
    check_order(alpha, 0.0, 1.0, false)?;
    model.check_len(phi)?;
    model.check_len(rho)?;
    let horizon = grid.horizon();
    let p = MLParams::new(alpha, 1.0)?;
    let radius_arg = horizon.powf(alpha) * (1.0 - ctx.q()).powf(alpha);

    let per_mode: Vec<Result<(Vec<f64>, f64, ModeDiagnostics)>> = (0..model.modes())
        .into_par_iter()
        .map(|i| {
            let lambda = model.decay_rate(i);
            let mode = i + 1;
            let wrap = |e| Error::mode(mode, e);
            let mut diag = ModeDiagnostics::new(mode, lambda, lambda * radius_arg >= 1.0);
            let e_end = q_mittag_leffler(&p, -lambda * horizon.powf(alpha), ctx, strat).map_err(wrap)?;
            diag.record(&e_end);
            let den = 1.0 - e_end.value;
            let floor = denominator_floor(alpha, lambda, horizon, ctx).map_err(wrap)?;
            diag.denominator = Some(den);
            diag.denominator_floor = Some(floor);
            if den < DENOMINATOR_ABSOLUTE_FLOOR && den < 0.5 * floor {
                return Err(wrap(Error::DenominatorUnderflow { mode, value: den, floor }));
            }
            let (ph, rh) = (phi.get(i), rho.get(i));
            let jump = ph - rh;
            let f = lambda * ph - lambda * jump / den;
            let mut trace = Vec::with_capacity(grid.len());
            for (j, &t) in grid.positive_nodes().iter().enumerate() {
                let e = if j == 0 {
                    e_end.value
                } else {
                    let r = q_mittag_leffler(&p, -lambda * t.powf(alpha), ctx, strat).map_err(wrap)?;
                    diag.record(&r);
                    r.value
                };
                trace.push(ph + jump * (e - 1.0) / den);
            }
            trace.push(ph);
            Ok((trace, f, diag))
        })
        .collect();

    let mut traces = Vec::with_capacity(model.modes());
    let mut source = Vec::with_capacity(model.modes());
    let mut diagnostics = Vec::with_capacity(model.modes());
    for r in per_mode {
        let (trace, f, diag) = r?;
        traces.push(trace);
        source.push(f);
        diagnostics.push(diag);
    }
    let source = CoefficientField::new(source);
    let mut bundle = SolutionBundle {
        kind: ProblemKind::Inverse,
        alpha,
        model: model.clone(),
        grid: grid.clone(),
        traces,
        source: Source::Constant(source.clone()),
        phi: phi.clone(),
        rho: Some(rho.clone()),
        diagnostics,
        residual_max: None,
        initial_slope: None,
    };
    bundle.residual_max = super::residual::residual_check(&bundle, ctx).ok();
    Ok((bundle, source))
}
