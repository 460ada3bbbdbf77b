//! The q-exponential, the two-parameter q-Mittag-Leffler function
//! `e_{α,β}(z;q) = Σ z^k / Γ_q(αk+β)` and its q-translated form.
//!
//! Inside the disc `|z|(1-q)^α < 1` the defining series is summed directly
//! with a rigorous geometric tail bound. For negative `z` beyond the disc the
//! alternating partial sums are fed to Wynn's epsilon algorithm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{inf_product, pow_product, q_number, QContext, SeriesResult, Status, ZERO_FACTOR_TOL};
use crate::sum::CompensatedSum;
use crate::wynn::EpsilonTable;

/// Order `α > 0` and second parameter `β ≥ 0` of `e_{α,β}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MLParams {
    alpha: f64,
    beta: f64,
}

impl MLParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {beta}")));
        }
        Ok(MLParams { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Radius of convergence of the defining series, `(1-q)^{-α}`.
    pub fn radius(&self, ctx: &QContext) -> f64 {
        (1.0 - ctx.q()).powf(-self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    SeriesOnly,
    SeriesThenAccelerate,
}

/// How to evaluate Mittag-Leffler type series.
///
/// With acceleration enabled, negative arguments beyond the disc go through
/// Wynn's epsilon algorithm. When that table does not settle and
/// `continuation` is on, the exact partial-fraction continuation
/// (see [`q_mittag_leffler_continued`]) is used instead of failing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalStrategy {
    mode: EvalMode,
    accel_table_size: usize,
    continuation: bool,
}

impl EvalStrategy {
    pub fn new(mode: EvalMode, accel_table_size: usize) -> Result<Self> {
        if mode == EvalMode::SeriesThenAccelerate && accel_table_size < 4 {
            return Err(Error::InvalidArgument(format!(
                "accel_table_size must be at least 4, got {accel_table_size}"
            )));
        }
        Ok(EvalStrategy { mode, accel_table_size: accel_table_size.max(1), continuation: true })
    }

    pub fn series_only() -> Self {
        EvalStrategy { mode: EvalMode::SeriesOnly, accel_table_size: 40, continuation: false }
    }

    pub fn with_continuation(mut self, on: bool) -> Self {
        self.continuation = on;
        self
    }

    /// Whether a failed epsilon table falls back to the continuation.
    pub fn continues(&self) -> bool {
        self.accelerates() && self.continuation
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    pub fn accel_table_size(&self) -> usize {
        self.accel_table_size
    }

    pub fn accelerates(&self) -> bool {
        self.mode == EvalMode::SeriesThenAccelerate
    }
}

impl Default for EvalStrategy {
    fn default() -> Self {
        EvalStrategy { mode: EvalMode::SeriesThenAccelerate, accel_table_size: 40, continuation: true }
    }
}

/// One term of a power series together with an upper bound on
/// `|t_{j+1} / t_j|` valid for every `j ≥ k`.
pub(crate) struct TermAndRatio {
    pub term: f64,
    pub ratio_bound: f64,
}

/// Sums `Σ t_k` where `t_k` comes from `next(k)`.
///
/// `scaled_arg` is the limiting term ratio `z (1-q)^α`; when its magnitude is
/// below one the series is summed directly. If that fails to reach the
/// tolerance within `max_terms`, or the argument lies beyond the radius, a
/// negative argument is handed to the epsilon algorithm when the strategy
/// allows it.
pub(crate) fn sum_power_series<F>(
    scaled_arg: f64,
    radius: f64,
    z: f64,
    ctx: &QContext,
    strat: &EvalStrategy,
    mut next: F,
) -> Result<SeriesResult>
where
    F: FnMut(usize) -> Result<TermAndRatio>,
{
    let can_accelerate = scaled_arg < 0.0 && strat.accelerates();
    if scaled_arg.abs() < 1.0 {
        let direct = sum_direct(ctx, &mut next)?;
        if direct.status == Status::Converged || !can_accelerate {
            return Ok(direct);
        }
        return match sum_accelerated(ctx, strat, &mut next) {
            Ok(r) => Ok(r),
            Err(_) => Ok(direct),
        };
    }
    if !can_accelerate {
        return Err(Error::OutsideRadius { z, radius });
    }
    sum_accelerated(ctx, strat, &mut next)
}

/// Direct summation with the rigorous tail bound `|t_k| ρ_k / (1 - ρ_k)`.
pub(crate) fn sum_direct<F>(ctx: &QContext, next: &mut F) -> Result<SeriesResult>
where
    F: FnMut(usize) -> Result<TermAndRatio>,
{
    let mut sum = CompensatedSum::new();
    let mut last_tail = f64::INFINITY;
    for k in 0..ctx.max_terms() {
        let TermAndRatio { term, ratio_bound } = next(k)?;
        sum.add(term);
        if ratio_bound < 1.0 {
            let tail = term.abs() * ratio_bound / (1.0 - ratio_bound);
            last_tail = tail;
            let value = sum.value();
            if tail <= ctx.eps_series() * value.abs().max(1.0) {
                return Ok(SeriesResult { value, terms_used: k + 1, tail_estimate: tail, status: Status::Converged });
            }
        }
    }
    Ok(SeriesResult {
        value: sum.value(),
        terms_used: ctx.max_terms(),
        tail_estimate: last_tail,
        status: Status::Truncated,
    })
}

/// Wynn's epsilon algorithm on the partial sums. Accepts once two
/// consecutive estimates agree to `100 · eps_series` without a breakdown.
pub(crate) fn sum_accelerated<F>(ctx: &QContext, strat: &EvalStrategy, next: &mut F) -> Result<SeriesResult>
where
    F: FnMut(usize) -> Result<TermAndRatio>,
{
    let tol = 100.0 * ctx.eps_series();
    let mut table = EpsilonTable::new();
    let mut sum = CompensatedSum::new();
    let mut previous = f64::NAN;
    let mut last_delta = f64::INFINITY;
    for k in 0..strat.accel_table_size() {
        sum.add(next(k)?.term);
        let estimate = table.push(sum.value());
        if k >= 1 {
            last_delta = (estimate - previous).abs();
            if k >= 4 && !table.last_broken() && last_delta <= tol * estimate.abs().max(1.0) {
                return Ok(SeriesResult {
                    value: estimate,
                    terms_used: k + 1,
                    tail_estimate: last_delta,
                    status: Status::Accelerated,
                });
            }
        }
        previous = estimate;
    }
    Err(Error::AccelerationFailed { terms: strat.accel_table_size(), last_delta })
}

/// Coefficients `(1-q)^{β-1} (q^{αk+β};q)_∞ / (q;q)_∞ = (1-q)^{αk} / Γ_q(αk+β)`.
///
/// Working with `(z(1-q)^α)^k` times these keeps every factor bounded even
/// when `z^k` alone would overflow.
pub(crate) struct ScaledRecipGamma<'a> {
    ctx: &'a QContext,
    alpha: f64,
    beta: f64,
    prefactor: f64,
    cached: Option<(usize, f64)>,
}

impl<'a> ScaledRecipGamma<'a> {
    pub fn new(p: &MLParams, ctx: &'a QContext) -> Result<Self> {
        let qq = ctx.qq_inf()?;
        Ok(ScaledRecipGamma {
            ctx,
            alpha: p.alpha,
            beta: p.beta,
            prefactor: (1.0 - ctx.q()).powf(p.beta - 1.0) / qq,
            cached: None,
        })
    }

    fn product(&mut self, k: usize) -> Result<f64> {
        if let Some((ck, v)) = self.cached {
            if ck == k {
                return Ok(v);
            }
        }
        let v = pow_product(self.alpha * k as f64 + self.beta, self.ctx)?;
        self.cached = Some((k, v));
        Ok(v)
    }

    /// Returns `c_k` and `c_{k+1}/c_k`, which bounds `c_{j+1}/c_j` for all
    /// `j ≥ k` since the ratio decreases towards one.
    pub fn coeff_and_ratio(&mut self, k: usize) -> Result<(f64, f64)> {
        let pk = self.product(k)?;
        let pk1 = pow_product(self.alpha * (k + 1) as f64 + self.beta, self.ctx)?;
        self.cached = Some((k + 1, pk1));
        let ratio = if pk == 0.0 { f64::INFINITY } else { pk1 / pk };
        Ok((self.prefactor * pk, ratio))
    }
}

/// Σ_{k} w^k c_k with `w = z (1-q)^α` and `c_k` from [`ScaledRecipGamma`],
/// each term optionally multiplied by an extra factor bounded in ratio by 1.
pub(crate) fn ml_series_with<G>(
    p: &MLParams,
    z: f64,
    ctx: &QContext,
    strat: &EvalStrategy,
    mut extra: G,
) -> Result<SeriesResult>
where
    G: FnMut(usize) -> Result<f64>,
{
    let w = z * (1.0 - ctx.q()).powf(p.alpha);
    let radius = p.radius(ctx);
    let mut coeffs = ScaledRecipGamma::new(p, ctx)?;
    sum_power_series(w, radius, z, ctx, strat, |k| {
        let (c, r) = coeffs.coeff_and_ratio(k)?;
        let term = w.powi(k as i32) * c * extra(k)?;
        Ok(TermAndRatio { term, ratio_bound: w.abs() * r })
    })
}

/// Series `Σ x^k / [k]_q!`, valid for `|x|(1-q) < 1`.
pub fn q_exp_series(x: f64, ctx: &QContext) -> Result<SeriesResult> {
    let w = x * (1.0 - ctx.q());
    let strat = EvalStrategy::series_only();
    let mut term = 1.0;
    sum_power_series(w, 1.0 / (1.0 - ctx.q()), x, ctx, &strat, |k| {
        let current = term;
        let ratio = x.abs() / q_number(k as f64 + 1.0, ctx);
        term *= x / q_number(k as f64 + 1.0, ctx);
        Ok(TermAndRatio { term: current, ratio_bound: ratio })
    })
}

/// Euler product form `1 / ((1-q)x; q)_∞` of the q-exponential.
pub fn q_exp_product(x: f64, ctx: &QContext) -> Result<SeriesResult> {
    let p = inf_product((1.0 - ctx.q()) * x, ctx);
    if p.value == 0.0 || p.min_factor < ZERO_FACTOR_TOL {
        return Err(Error::Pole { x });
    }
    let value = p.value.recip();
    let tail = value.abs() * p.rel_tail;
    let status = if p.converged { Status::Accelerated } else { Status::Truncated };
    Ok(SeriesResult { value, terms_used: p.terms, tail_estimate: tail, status })
}

/// The q-exponential `e_q(x)`.
///
/// Uses the series inside `|x|(1-q) < 1` and the product continuation
/// (status `Accelerated`) outside it.
pub fn q_exp(x: f64, ctx: &QContext) -> Result<SeriesResult> {
    if x == 0.0 {
        return Ok(SeriesResult::exact(1.0));
    }
    if (x * (1.0 - ctx.q())).abs() < 1.0 {
        let r = q_exp_series(x, ctx)?;
        if r.status == Status::Converged {
            return Ok(r);
        }
    }
    q_exp_product(x, ctx)
}

/// The q-Mittag-Leffler function `e_{α,β}(z;q)`.
pub fn q_mittag_leffler(
    p: &MLParams,
    z: f64,
    ctx: &QContext,
    strat: &EvalStrategy,
) -> Result<SeriesResult> {
    let r = ml_series_with(p, z, ctx, strat, |_| Ok(1.0));
    if z < 0.0 && strat.continues() {
        match r {
            Err(Error::AccelerationFailed { .. }) => return q_mittag_leffler_continued(p, z, ctx),
            Ok(v) if v.status == Status::Truncated => return q_mittag_leffler_continued(p, z, ctx),
            _ => {}
        }
    }
    r
}

/// `e_{α,β}(z;q)` from its partial-fraction expansion
///
/// `(1-q)^{β-1} / (q;q)_∞ · Σ_n (-1)^n q^{n(n-1)/2 + βn} / ((q;q)_n (1 - z(1-q)^α q^{αn}))`,
///
/// obtained by expanding each `(q^{αk+β};q)_∞` with Euler's identity and
/// summing the geometric series in `k`. It agrees with the power series
/// inside the disc and continues it to the whole line except the poles
/// `z(1-q)^α = q^{-αn}`. The terms decay like `q^{n²/2}`; the tail estimate
/// includes the rounding error of the alternating sum.
pub fn q_mittag_leffler_continued(p: &MLParams, z: f64, ctx: &QContext) -> Result<SeriesResult> {
    let q = ctx.q();
    let w = z * (1.0 - q).powf(p.alpha);
    let q_alpha = q.powf(p.alpha);
    let q_beta = q.powf(p.beta);
    let prefactor = (1.0 - q).powf(p.beta - 1.0) / ctx.qq_inf()?;
    let mut sum = CompensatedSum::new();
    let mut magnitude = 0.0;
    let mut coeff = 1.0;
    let mut shift = 1.0;
    let mut qn = 1.0;
    for n in 0..ctx.max_terms() {
        let den = 1.0 - w * shift;
        if den.abs() < ZERO_FACTOR_TOL {
            return Err(Error::Pole { x: z });
        }
        let term = if n % 2 == 0 { coeff / den } else { -coeff / den };
        sum.add(term);
        magnitude += term.abs();
        if term.abs() <= f64::EPSILON * 1e-2 * magnitude || coeff == 0.0 {
            let value = prefactor * sum.value();
            let tail = prefactor * (term.abs() + 4.0 * f64::EPSILON * magnitude);
            return Ok(SeriesResult { value, terms_used: n + 1, tail_estimate: tail, status: Status::Accelerated });
        }
        coeff *= qn * q_beta / (1.0 - qn * q);
        qn *= q;
        shift *= q_alpha;
    }
    Err(Error::Truncated { op: "q_mittag_leffler_continued", terms: ctx.max_terms() })
}

/// `ε^{-q^α s} e_{α,β}(c t^α; q) = Σ c^k t^{αk} (q^α s/t; q)_{αk} / Γ_q(αk+β)`.
pub fn translated_ml(
    p: &MLParams,
    c: f64,
    t: f64,
    s: f64,
    ctx: &QContext,
    strat: &EvalStrategy,
) -> Result<SeriesResult> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    if s.is_nan() || s < 0.0 || s > t {
        return Err(Error::InvalidTranslation { s, t });
    }
    translated_ml_at(p, c, t, ctx.q().powf(p.alpha) * s, ctx, strat)
}

/// Translation by an explicit point `y ∈ [0, t]`:
/// `Σ c^k t^{αk} (y/t; q)_{αk} / Γ_q(αk+β)`.
pub fn translated_ml_at(
    p: &MLParams,
    c: f64,
    t: f64,
    y: f64,
    ctx: &QContext,
    strat: &EvalStrategy,
) -> Result<SeriesResult> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    if y.is_nan() || y < 0.0 || y > t {
        return Err(Error::InvalidTranslation { s: y, t });
    }
    let ratio = y / t;
    let q_alpha = ctx.q().powf(p.alpha);
    let numerator = inf_product(ratio, ctx);
    if !numerator.converged {
        return Err(Error::Truncated { op: "translated_ml", terms: numerator.terms });
    }
    let z = c * t.powf(p.alpha);
    ml_series_with(p, z, ctx, strat, |k| {
        if k == 0 || ratio == 0.0 {
            return Ok(1.0);
        }
        let den = inf_product(ratio * q_alpha.powi(k as i32), ctx);
        if !den.converged {
            return Err(Error::Truncated { op: "translated_ml", terms: den.terms });
        }
        Ok(numerator.value / den.value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{q_factorial, q_gamma, q_pochhammer_real};

    fn ctx(q: f64) -> QContext {
        QContext::new(q).unwrap()
    }

    #[test]
    fn params_validate() {
        assert!(MLParams::new(0.0, 1.0).is_err());
        assert!(MLParams::new(0.5, -0.1).is_err());
        assert!(MLParams::new(0.5, 0.0).is_ok());
        assert!(EvalStrategy::new(EvalMode::SeriesThenAccelerate, 3).is_err());
        assert!(EvalStrategy::new(EvalMode::SeriesOnly, 1).is_ok());
    }

    #[test]
    fn q_exp_at_zero() {
        assert_eq!(q_exp(0.0, &ctx(0.5)).unwrap().value, 1.0);
    }

    #[test]
    fn q_exp_series_matches_product() {
        let c = ctx(0.5);
        let s = q_exp_series(0.5, &c).unwrap();
        let p = q_exp_product(0.5, &c).unwrap();
        assert_eq!(s.status, Status::Converged);
        assert!((s.value - p.value).abs() < 1e-12);
    }

    #[test]
    fn q_exp_matches_partial_sums() {
        let c = ctx(0.3);
        let oracle: f64 = (0..200).map(|k| 1.0 / q_factorial(k, &c)).sum();
        assert!((q_exp(1.0, &c).unwrap().value - oracle).abs() < 1e-13);
    }

    #[test]
    fn q_exp_outside_radius_uses_product() {
        let c = ctx(0.5);
        let r = q_exp(3.0, &c).unwrap();
        assert_eq!(r.status, Status::Accelerated);
        // pole: (1-q)x = q^{-1}
        assert!(matches!(q_exp(4.0, &c), Err(Error::Pole { .. })));
    }

    #[test]
    fn ml_at_zero() {
        let c = ctx(0.5);
        let s = EvalStrategy::default();
        for (a, b) in [(0.5, 1.0), (1.5, 0.5), (0.3, 2.0)] {
            let p = MLParams::new(a, b).unwrap();
            let v = q_mittag_leffler(&p, 0.0, &c, &s).unwrap().value;
            assert!((v - 1.0 / q_gamma(b, &c).unwrap()).abs() < 1e-15);
        }
        // β = 0: 1/Γ_q(0) = 0
        let p = MLParams::new(0.5, 0.0).unwrap();
        assert_eq!(q_mittag_leffler(&p, 0.0, &c, &s).unwrap().value, 0.0);
    }

    #[test]
    fn ml_reduces_to_q_exp() {
        let c = ctx(0.5);
        let p = MLParams::new(1.0, 1.0).unwrap();
        let v = q_mittag_leffler(&p, 0.4, &c, &EvalStrategy::default()).unwrap();
        assert!((v.value - q_exp(0.4, &c).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn ml_range_example() {
        let c = ctx(0.5);
        let p = MLParams::new(0.5, 1.0).unwrap();
        let v = q_mittag_leffler(&p, -0.8, &c, &EvalStrategy::default()).unwrap();
        assert!(v.value > 0.0 && v.value < 1.0);
        assert_eq!(v.status, Status::Converged);
    }

    #[test]
    fn ml_outside_radius_policy() {
        let c = ctx(0.5);
        let p = MLParams::new(0.5, 1.0).unwrap();
        let z = 2.0; // radius is √2
        assert!(matches!(
            q_mittag_leffler(&p, z, &c, &EvalStrategy::default()),
            Err(Error::OutsideRadius { .. })
        ));
        assert!(matches!(
            q_mittag_leffler(&p, -z, &c, &EvalStrategy::series_only()),
            Err(Error::OutsideRadius { .. })
        ));
        let r = q_mittag_leffler(&p, -z, &c, &EvalStrategy::default()).unwrap();
        assert_eq!(r.status, Status::Accelerated);
        assert!(r.value > 0.0 && r.value < 1.0);
    }

    #[test]
    fn ml_acceleration_can_fail() {
        let c = ctx(0.5);
        let p = MLParams::new(0.5, 1.0).unwrap();
        let strat = EvalStrategy::new(EvalMode::SeriesThenAccelerate, 4).unwrap().with_continuation(false);
        assert!(matches!(
            q_mittag_leffler(&p, -50.0, &c, &strat),
            Err(Error::AccelerationFailed { .. })
        ));
    }

    #[test]
    fn continuation_agrees_with_series_and_acceleration() {
        let c = ctx(0.5);
        for (a, b) in [(0.5, 1.0), (0.9, 0.9), (1.5, 2.0), (0.3, 0.0)] {
            let p = MLParams::new(a, b).unwrap();
            let r = p.radius(&c);
            for z in [-0.5 * r, -0.95 * r, 0.6 * r] {
                let s = q_mittag_leffler(&p, z, &c, &EvalStrategy::series_only()).unwrap();
                let k = q_mittag_leffler_continued(&p, z, &c).unwrap();
                assert!((s.value - k.value).abs() < 1e-13, "{a} {b} {z}: {} vs {}", s.value, k.value);
            }
            let w = q_mittag_leffler(&p, -2.0 * r, &c, &EvalStrategy::default().with_continuation(false));
            let k = q_mittag_leffler_continued(&p, -2.0 * r, &c).unwrap();
            assert!((w.unwrap().value - k.value).abs() < 1e-10);
        }
    }

    #[test]
    fn large_negative_arguments_fall_back() {
        let c = ctx(0.5);
        let p = MLParams::new(0.5, 1.0).unwrap();
        let r = q_mittag_leffler(&p, -200.0, &c, &EvalStrategy::default()).unwrap();
        assert_eq!(r.status, Status::Accelerated);
        assert!(r.value > 0.0 && r.value < 1.0 / (1.0 + 200.0 / q_gamma(1.5, &c).unwrap()));
        // positive poles of the continuation
        let p = MLParams::new(1.0, 1.0).unwrap();
        assert!(matches!(q_mittag_leffler_continued(&p, 4.0, &c), Err(Error::Pole { .. })));
    }

    #[test]
    fn translated_reductions() {
        let c = ctx(0.5);
        let s = EvalStrategy::default();
        let p = MLParams::new(0.7, 1.0).unwrap();
        let a = translated_ml(&p, -0.6, 1.2, 0.0, &c, &s).unwrap().value;
        let b = q_mittag_leffler(&p, -0.6 * 1.2f64.powf(0.7), &c, &s).unwrap().value;
        assert!((a - b).abs() < 1e-15);
        let p = MLParams::new(0.7, 1.5).unwrap();
        let v = translated_ml(&p, 0.0, 1.2, 0.5, &c, &s).unwrap().value;
        assert!((v - 1.0 / q_gamma(1.5, &c).unwrap()).abs() < 1e-15);
        assert!(matches!(
            translated_ml(&p, 1.0, 1.0, 1.5, &c, &s),
            Err(Error::InvalidTranslation { .. })
        ));
    }

    #[test]
    fn translated_matches_brute_force() {
        let c = ctx(0.5);
        let p = MLParams::new(0.5, 0.5).unwrap();
        let (t, s) = (1.0, 0.5);
        let y = 0.5f64.powf(0.5) * s;
        let oracle: f64 = (0..300)
            .map(|k| {
                let k = k as f64;
                let poch = q_pochhammer_real(y / t, 0.5 * k, &c).unwrap().value;
                (-1f64).powf(k) * t.powf(0.5 * k) * poch / q_gamma(0.5 * k + 0.5, &c).unwrap()
            })
            .sum();
        let v = translated_ml(&p, -1.0, t, s, &c, &EvalStrategy::default()).unwrap();
        assert!((v.value - oracle).abs() < 1e-10, "{} vs {}", v.value, oracle);
    }

    #[test]
    fn translation_at_t_keeps_only_first_term() {
        let c = ctx(0.5);
        let p = MLParams::new(0.6, 1.0).unwrap();
        let v = translated_ml_at(&p, -0.7, 1.3, 1.3, &c, &EvalStrategy::default()).unwrap();
        assert!((v.value - 1.0).abs() < 1e-15);
    }
}
