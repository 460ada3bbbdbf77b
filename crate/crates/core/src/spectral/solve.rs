use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use super::model::{CoefficientField, SpectralModel};
use crate::error::{Error, Result};
use crate::qcalculus::KernelWeights;
use crate::qcore::{pow_product, QContext, SeriesResult, Status};
use crate::qspecial::{q_mittag_leffler, sum_power_series, EvalStrategy, MLParams, TermAndRatio};
use crate::sum::CompensatedSum;

pub type SourceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Per-mode source term `f_k(t)`.
#[derive(Clone)]
pub enum Source {
    Zero,
    /// Time-independent coefficients.
    Constant(CoefficientField),
    /// One function of time per mode.
    Functions(Vec<SourceFn>),
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Zero => write!(f, "Zero"),
            Source::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Source::Functions(v) => write!(f, "Functions({} modes)", v.len()),
        }
    }
}

impl Source {
    /// `f_k(t)` for the zero-based mode index `i`.
    pub fn eval(&self, i: usize, t: f64) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::Constant(c) => c.get(i),
            Source::Functions(v) => v[i](t),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Source::Zero => true,
            Source::Constant(c) => c.values().iter().all(|&v| v == 0.0),
            Source::Functions(_) => false,
        }
    }

    pub(crate) fn check_len(&self, model: &SpectralModel) -> Result<()> {
        let got = match self {
            Source::Zero => return Ok(()),
            Source::Constant(c) => c.len(),
            Source::Functions(v) => v.len(),
        };
        if got != model.modes() {
            return Err(Error::LengthMismatch { expected: model.modes(), got });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    /// `0 < α ≤ 1` with initial value.
    Suborder,
    /// `1 < α < 2` with initial value and initial velocity.
    Superorder,
    /// Final-value problem with unknown time-independent source.
    Inverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeError {
    pub kind: String,
    pub message: String,
}

/// Evaluation record for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDiagnostics {
    /// 1-based mode index.
    pub mode: usize,
    pub decay_rate: f64,
    /// `(λ_k+m) T^α (1-q)^α ≥ 1`: the kernel series is summed by acceleration.
    pub outside_radius: bool,
    pub status: Status,
    pub max_terms: usize,
    pub max_tail: f64,
    pub accelerated_evaluations: usize,
    pub denominator: Option<f64>,
    pub denominator_floor: Option<f64>,
    pub error: Option<ModeError>,
    #[serde(skip)]
    pub(crate) cause: Option<Error>,
}

impl ModeDiagnostics {
    pub(crate) fn new(mode: usize, decay_rate: f64, outside_radius: bool) -> Self {
        ModeDiagnostics {
            mode,
            decay_rate,
            outside_radius,
            status: Status::Converged,
            max_terms: 0,
            max_tail: 0.0,
            accelerated_evaluations: 0,
            denominator: None,
            denominator_floor: None,
            error: None,
            cause: None,
        }
    }

    pub(crate) fn record(&mut self, r: &SeriesResult) {
        self.status = self.status.worst(r.status);
        self.max_terms = self.max_terms.max(r.terms_used);
        self.max_tail = self.max_tail.max(r.tail_estimate);
        if r.status == Status::Accelerated {
            self.accelerated_evaluations += 1;
        }
    }

    pub(crate) fn fail(&mut self, e: &Error) {
        self.status = Status::Diverged;
        let wrapped = Error::mode(self.mode, e.clone());
        self.error = Some(ModeError { kind: wrapped.kind().to_string(), message: e.to_string() });
        self.cause = Some(wrapped);
    }
}

/// Per-mode traces on a q-geometric grid plus everything needed to check
/// them.
#[derive(Debug, Clone)]
pub struct SolutionBundle {
    pub kind: ProblemKind,
    pub alpha: f64,
    pub model: SpectralModel,
    pub grid: TimeGrid,
    /// `traces[i][j]` is `u_{i+1}` at `grid.nodes()[j]`.
    pub traces: Vec<Vec<f64>>,
    pub source: Source,
    pub phi: CoefficientField,
    /// Initial velocity (superorder) or final value (inverse).
    pub rho: Option<CoefficientField>,
    pub diagnostics: Vec<ModeDiagnostics>,
    pub residual_max: Option<f64>,
    /// `(u(t_J) - u(0)) / t_J` per mode, superorder only.
    pub initial_slope: Option<Vec<f64>>,
}

impl SolutionBundle {
    pub fn trace(&self, i: usize) -> &[f64] {
        &self.traces[i]
    }

    /// `u_k(T)` for every mode.
    pub fn at_horizon(&self) -> Vec<f64> {
        self.traces.iter().map(|t| t[0]).collect()
    }

    /// `u_k(0)` for every mode.
    pub fn at_origin(&self) -> Vec<f64> {
        self.traces.iter().map(|t| *t.last().unwrap()).collect()
    }

    pub fn failed_modes(&self) -> Vec<usize> {
        self.diagnostics.iter().filter(|d| d.error.is_some()).map(|d| d.mode).collect()
    }

    /// The first recorded mode failure, if any.
    pub fn ensure_all_ok(&self) -> Result<()> {
        for d in &self.diagnostics {
            if let Some(e) = &d.cause {
                return Err(e.clone());
            }
            if let Some(e) = &d.error {
                return Err(Error::mode(d.mode, Error::InvalidArgument(e.message.clone())));
            }
        }
        Ok(())
    }
}

/// Coefficient table for the Duhamel term
/// `(1-q) t^α Σ_m q^m (q^{m+1};q)_{α-1} S_m(-λ t^α) f(t q^m)` with
/// `S_m(z) = Σ_k z^k (q^{α+m};q)_{αk} / Γ_q(αk+α)`.
///
/// Entries are stored against powers of `w = z (1-q)^α`; they do not depend
/// on `t` or on the mode, so one table serves a whole solve.
/// Kernel table length used when some mode leaves the series radius.
const KERNEL_TERMS_BEYOND_RADIUS: usize = 400;

pub(crate) struct DuhamelKernel {
    alpha: f64,
    q_alpha: f64,
    rows: Vec<Vec<f64>>,
    ratios: Vec<f64>,
    /// Partial-fraction coefficients: `S_m` times its weight equals
    /// `Σ_j continued[m][j] / (1 - w q^{αj})` for every `w`, since
    /// `(q^{α(k+1)};q)_m` expands by the q-binomial theorem.
    continued: Vec<Vec<f64>>,
}

impl DuhamelKernel {
    pub fn new(alpha: f64, k_len: usize, ctx: &QContext) -> Result<Self> {
        let q = ctx.q();
        let m_len = (((1e-2 * ctx.eps_series()).ln() / q.ln()).ceil() as usize + 10).min(ctx.max_terms());
        let qq = crate::qcore::q_pochhammer_inf(q, ctx).value;
        let prefactor = (1.0 - q).powf(alpha - 1.0) / qq;
        let base: Vec<f64> = (0..=k_len)
            .map(|k| pow_product(alpha * (k + 1) as f64, ctx))
            .collect::<Result<_>>()?;
        let ratios = (0..k_len).map(|k| base[k + 1] / base[k]).collect();
        let q_alpha = q.powf(alpha);
        let mut weights = KernelWeights::new(alpha, ctx)?;
        let mut rows = Vec::with_capacity(m_len);
        let mut continued = Vec::with_capacity(m_len);
        let mut binom = vec![1.0];
        for m in 0..m_len {
            let w = weights.next().unwrap_or(0.0);
            let mf = m as f64;
            let head = pow_product(alpha + mf, ctx)?;
            let row = (0..k_len)
                .map(|k| {
                    let den = pow_product(alpha * (k + 1) as f64 + mf, ctx)?;
                    Ok(w * prefactor * base[k] * head / den)
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);

            let scale = w * prefactor * head;
            let mut power = 1.0;
            let mut qj = 1.0;
            let coeffs = binom
                .iter()
                .enumerate()
                .map(|(j, b)| {
                    let c = scale * b * power;
                    // q^{j(j-1)/2 + αj} for the next j
                    power *= qj * q_alpha;
                    qj *= q;
                    if j % 2 == 0 {
                        c
                    } else {
                        -c
                    }
                })
                .collect();
            continued.push(coeffs);
            // Gaussian binomials [m+1 choose j] = [m choose j-1] + q^j [m choose j]
            let mut next = vec![0.0; binom.len() + 1];
            let mut qj = 1.0;
            for j in 0..next.len() {
                let left = if j > 0 { binom[j - 1] } else { 0.0 };
                let right = binom.get(j).copied().unwrap_or(0.0);
                next[j] = left + qj * right;
                qj *= q;
            }
            binom = next;
        }
        Ok(DuhamelKernel { alpha, q_alpha, rows, ratios, continued })
    }

    fn continued_row(&self, m: usize, w: f64) -> SeriesResult {
        let mut sum = CompensatedSum::new();
        let mut magnitude = 0.0;
        let mut shift = 1.0;
        for c in &self.continued[m] {
            let term = c / (1.0 - w * shift);
            sum.add(term);
            magnitude += term.abs();
            shift *= self.q_alpha;
        }
        SeriesResult {
            value: sum.value(),
            terms_used: self.continued[m].len(),
            tail_estimate: 4.0 * f64::EPSILON * magnitude,
            status: Status::Accelerated,
        }
    }

    /// Number of `k` terms needed for `|w| < 1` to reach the series
    /// tolerance, or the acceleration table size beyond the radius.
    pub fn terms_needed(max_w: f64, ctx: &QContext, strat: &EvalStrategy) -> usize {
        let inside = if max_w <= 0.0 {
            2
        } else if max_w < 1.0 {
            let target = 1e-3 * ctx.eps_series() * (1.0 - max_w);
            ((target.ln() / max_w.ln()).ceil() as usize + 2).max(2)
        } else {
            strat.accel_table_size()
        };
        inside.min(ctx.max_terms()).max(2)
    }

    /// Duhamel term at time `t > 0` for decay rate `lambda` and source `f`.
    pub fn eval<F>(
        &self,
        lambda: f64,
        t: f64,
        f: F,
        ctx: &QContext,
        strat: &EvalStrategy,
        diag: &mut ModeDiagnostics,
    ) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        let q = ctx.q();
        let ta = t.powf(self.alpha);
        let z = -lambda * ta;
        let w = z * (1.0 - q).powf(self.alpha);
        let radius = (1.0 - q).powf(-self.alpha);
        let k_len = self.ratios.len();
        let local = ctx.clone().with_max_terms(k_len)?;
        let scale = (1.0 - q) * ta;
        let eps = ctx.eps_series();

        let mut sum = CompensatedSum::new();
        let mut qm = 1.0;
        let mut tail = 0.0;
        for (m, row) in self.rows.iter().enumerate() {
            let direct = sum_power_series(w, radius, z, &local, strat, |k| {
                Ok(TermAndRatio { term: w.powi(k as i32) * row[k], ratio_bound: w.abs() * self.ratios[k] })
            });
            let s = match direct {
                Err(Error::AccelerationFailed { .. }) if strat.continues() => self.continued_row(m, w),
                Ok(r) if r.status == Status::Truncated && w < 0.0 && strat.continues() => self.continued_row(m, w),
                other => other?,
            };
            diag.record(&s);
            let inc = scale * qm * s.value * f(t * qm);
            tail += scale * qm * s.tail_estimate;
            sum.add(inc);
            let value = sum.value();
            if qm < eps && inc.abs() <= eps * value.abs().max(1.0) {
                diag.max_tail = diag.max_tail.max(tail);
                return Ok(value);
            }
            qm *= q;
        }
        diag.record(&SeriesResult {
            value: sum.value(),
            terms_used: self.rows.len(),
            tail_estimate: tail,
            status: Status::Truncated,
        });
        Ok(sum.value())
    }
}

pub(crate) fn check_order(alpha: f64, lo: f64, hi: f64, hi_inclusive: bool) -> Result<()> {
    let ok = alpha > lo && (alpha < hi || (hi_inclusive && alpha == hi));
    if ok {
        Ok(())
    } else {
        let close = if hi_inclusive { "]" } else { ")" };
        Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in ({lo}, {hi}{close}")))
    }
}

fn scaled_argument(model: &SpectralModel, alpha: f64, horizon: f64, ctx: &QContext) -> Vec<f64> {
    let s = horizon.powf(alpha) * (1.0 - ctx.q()).powf(alpha);
    (0..model.modes()).map(|i| model.decay_rate(i) * s).collect()
}

struct Initial<'a> {
    phi: &'a CoefficientField,
    rho: Option<&'a CoefficientField>,
}

#[allow(clippy::too_many_arguments)]
fn solve_direct(
    kind: ProblemKind,
    alpha: f64,
    init: Initial<'_>,
    source: &Source,
    model: &SpectralModel,
    grid: &TimeGrid,
    ctx: &QContext,
    strat: &EvalStrategy,
) -> Result<SolutionBundle> {
    model.check_len(init.phi)?;
    if let Some(r) = init.rho {
        model.check_len(r)?;
    }
    source.check_len(model)?;
    if (grid.q() - ctx.q()).abs() > 0.0 {
        return Err(Error::InvalidArgument("time grid and context use different q".into()));
    }
    let args = scaled_argument(model, alpha, grid.horizon(), ctx);
    let kernel = if source.is_zero() {
        None
    } else {
        let max_w = args.iter().copied().fold(0.0, f64::max);
        let inside_w = args.iter().copied().filter(|&w| w < 1.0).fold(0.0, f64::max);
        let mut k_len = DuhamelKernel::terms_needed(inside_w, ctx, strat);
        if max_w >= 1.0 {
            // nodes below T pass through |w| close to 1, where the table
            // length caps direct summation and acceleration takes over
            k_len = k_len.max(strat.accel_table_size()).max(KERNEL_TERMS_BEYOND_RADIUS.min(ctx.max_terms()));
        }
        Some(DuhamelKernel::new(alpha, k_len, ctx)?)
    };
    let first = MLParams::new(alpha, 1.0)?;
    let second = MLParams::new(alpha, 2.0)?;

    let results: Vec<(Vec<f64>, ModeDiagnostics)> = (0..model.modes())
        .into_par_iter()
        .map(|i| {
            let lambda = model.decay_rate(i);
            let mut diag = ModeDiagnostics::new(i + 1, lambda, args[i] >= 1.0);
            let phi = init.phi.get(i);
            let rho = init.rho.map(|r| r.get(i)).unwrap_or(0.0);
            let mut trace = Vec::with_capacity(grid.len());
            let outcome: Result<()> = (|| {
                for &t in grid.positive_nodes() {
                    let z = -lambda * t.powf(alpha);
                    let mut u = 0.0;
                    if phi != 0.0 {
                        let e = q_mittag_leffler(&first, z, ctx, strat)?;
                        diag.record(&e);
                        u += phi * e.value;
                    }
                    if rho != 0.0 {
                        let e = q_mittag_leffler(&second, z, ctx, strat)?;
                        diag.record(&e);
                        u += t * rho * e.value;
                    }
                    if let Some(k) = &kernel {
                        u += k.eval(lambda, t, |s| source.eval(i, s), ctx, strat, &mut diag)?;
                    }
                    trace.push(u);
                }
                trace.push(phi);
                Ok(())
            })();
            if let Err(e) = outcome {
                diag.fail(&e);
                trace = vec![f64::NAN; grid.len()];
            }
            (trace, diag)
        })
        .collect();

    let (traces, diagnostics): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let initial_slope = (kind == ProblemKind::Superorder).then(|| {
        let j = grid.depth();
        let tj = grid.nodes()[j];
        traces.iter().map(|tr: &Vec<f64>| (tr[j] - tr[j + 1]) / tj).collect()
    });
    let mut bundle = SolutionBundle {
        kind,
        alpha,
        model: model.clone(),
        grid: grid.clone(),
        traces,
        source: source.clone(),
        phi: init.phi.clone(),
        rho: init.rho.cloned(),
        diagnostics,
        residual_max: None,
        initial_slope,
    };
    bundle.residual_max = super::residual::residual_check(&bundle, ctx).ok();
    Ok(bundle)
}

/// Direct problem `^cD^α u + (λ_k+m) u = f`, `u(0) = φ`, for `0 < α ≤ 1`:
/// `u_k(t) = φ_k e_{α,1}(-(λ_k+m)t^α) + Duhamel term`.
///
/// A mode whose evaluation fails gets NaN traces and an error entry in its
/// diagnostics; the remaining modes are still solved.
pub fn direct_solve_suborder(
    alpha: f64,
    phi: &CoefficientField,
    source: &Source,
    model: &SpectralModel,
    grid: &TimeGrid,
    ctx: &QContext,
    strat: &EvalStrategy,
) -> Result<SolutionBundle> {
    check_order(alpha, 0.0, 1.0, true)?;
    solve_direct(ProblemKind::Suborder, alpha, Initial { phi, rho: None }, source, model, grid, ctx, strat)
}

/// Direct problem for `1 < α < 2` with initial value `φ` and initial
/// velocity `ρ`: adds `t ρ_k e_{α,2}(-(λ_k+m)t^α)` to the suborder form.
#[allow(clippy::too_many_arguments)]
pub fn direct_solve_superorder(
    alpha: f64,
    phi: &CoefficientField,
    rho: &CoefficientField,
    source: &Source,
    model: &SpectralModel,
    grid: &TimeGrid,
    ctx: &QContext,
    strat: &EvalStrategy,
) -> Result<SolutionBundle> {
    check_order(alpha, 1.0, 2.0, false)?;
    solve_direct(ProblemKind::Superorder, alpha, Initial { phi, rho: Some(rho) }, source, model, grid, ctx, strat)
}
