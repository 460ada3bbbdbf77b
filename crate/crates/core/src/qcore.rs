//! Foundational q-arithmetic: q-numbers, q-shifted factorials (finite,
//! infinite and real-index), the q-factorial and the q-Gamma function.
//!
//! Every infinite product is truncated at the first index `N` for which
//! `|a| q^N < eps_product` *and* the omitted factors can change the product by
//! at most a relative `exp(|a| q^N / (1 - q)) - 1 <= eps_series`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// Smallest admissible base by default.
pub const DEFAULT_Q_MIN: f64 = 1e-3;
/// Largest admissible base by default.
pub const DEFAULT_Q_MAX: f64 = 1.0 - 1e-3;

/// `x` is treated as a pole of Γ_q when it is within this distance of a
/// nonpositive integer.
pub const POLE_WINDOW: f64 = 1e-12;

/// A factor `1 - q^k a` smaller than this in magnitude counts as a zero of
/// the product when the product sits in a denominator.
pub(crate) const ZERO_FACTOR_TOL: f64 = 1e-13;

/// The base `q` together with the truncation policy shared by every series
/// and product evaluation. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QContext {
    q: f64,
    eps_product: f64,
    eps_series: f64,
    max_terms: usize,
    #[serde(skip)]
    qq_inf: InfProduct,
}

impl QContext {
    /// Context with default tolerances; rejects `q` outside
    /// `[DEFAULT_Q_MIN, DEFAULT_Q_MAX]`.
    pub fn new(q: f64) -> Result<Self> {
        Self::with_bounds(q, DEFAULT_Q_MIN, DEFAULT_Q_MAX)
    }

    /// Context whose admissible window for `q` is `[q_min, q_max]`, which must
    /// itself lie inside `(0, 1)`.
    pub fn with_bounds(q: f64, q_min: f64, q_max: f64) -> Result<Self> {
        if !(q_min > 0.0 && q_max < 1.0 && q_min <= q_max) {
            return Err(Error::InvalidContext(format!(
                "admissible window [{q_min}, {q_max}] must lie inside (0, 1)"
            )));
        }
        if !(q.is_finite() && q >= q_min && q <= q_max) {
            return Err(Error::InvalidContext(format!(
                "q = {q} outside the admissible window [{q_min}, {q_max}]"
            )));
        }
        Ok(Self::build(q, 1e-16, 1e-14, 10_000))
    }

    fn build(q: f64, eps_product: f64, eps_series: f64, max_terms: usize) -> Self {
        let mut ctx = QContext {
            q,
            eps_product,
            eps_series,
            max_terms,
            qq_inf: InfProduct::unit(),
        };
        ctx.qq_inf = inf_product(q, &ctx);
        ctx
    }

    pub fn with_eps_product(self, eps: f64) -> Result<Self> {
        check_tol("eps_product", eps)?;
        Ok(Self::build(self.q, eps, self.eps_series, self.max_terms))
    }

    pub fn with_eps_series(self, eps: f64) -> Result<Self> {
        check_tol("eps_series", eps)?;
        Ok(Self::build(self.q, self.eps_product, eps, self.max_terms))
    }

    pub fn with_max_terms(self, max_terms: usize) -> Result<Self> {
        if max_terms == 0 {
            return Err(Error::InvalidContext("max_terms must be at least 1".into()));
        }
        Ok(Self::build(self.q, self.eps_product, self.eps_series, max_terms))
    }

    /// Same tolerances, different base. The new base only has to lie in
    /// `(0, 1)`; this is how derived bases such as `q^{1/2}` are handled.
    pub fn with_q(&self, q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidContext(format!("q = {q} must lie in (0, 1)")));
        }
        Ok(Self::build(q, self.eps_product, self.eps_series, self.max_terms))
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn eps_product(&self) -> f64 {
        self.eps_product
    }

    pub fn eps_series(&self) -> f64 {
        self.eps_series
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }

    /// `(q;q)_∞`, computed once at construction.
    pub(crate) fn qq_inf(&self) -> Result<f64> {
        if self.qq_inf.converged {
            Ok(self.qq_inf.value)
        } else {
            Err(Error::Truncated { op: "(q;q)_inf", terms: self.qq_inf.terms })
        }
    }
}

fn check_tol(name: &str, eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidContext(format!("{name} must be a positive finite number, got {eps}")))
    }
}

/// Outcome classification for a truncated series or product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Status {
    Converged,
    Accelerated,
    Truncated,
    Diverged,
}

impl Status {
    /// The more severe of the two.
    pub fn worst(self, other: Status) -> Status {
        self.max(other)
    }
}

/// A value together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult {
    pub value: f64,
    pub terms_used: usize,
    pub tail_estimate: f64,
    pub status: Status,
}

impl SeriesResult {
    pub fn exact(value: f64) -> Self {
        SeriesResult { value, terms_used: 0, tail_estimate: 0.0, status: Status::Converged }
    }

    /// Builds a result from a summation that stopped on its own criterion;
    /// the status is downgraded to `Truncated` if the tail bound does not
    /// meet `eps_series · max(1, |value|)`.
    pub(crate) fn from_tail(value: f64, terms_used: usize, tail: f64, ctx: &QContext) -> Self {
        let status = if tail <= ctx.eps_series() * value.abs().max(1.0) {
            Status::Converged
        } else {
            Status::Truncated
        };
        SeriesResult { value, terms_used, tail_estimate: tail, status }
    }

    /// The value, unless the evaluation diverged.
    pub fn usable(&self) -> Option<f64> {
        match self.status {
            Status::Diverged => None,
            _ if !self.value.is_finite() => None,
            _ => Some(self.value),
        }
    }
}

/// Raw outcome of a truncated infinite product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct InfProduct {
    pub value: f64,
    pub terms: usize,
    /// Relative bound on the effect of the omitted factors.
    pub rel_tail: f64,
    /// Smallest `|1 - q^k a|` among the factors used.
    pub min_factor: f64,
    pub converged: bool,
}

impl InfProduct {
    fn unit() -> Self {
        InfProduct { value: 1.0, terms: 0, rel_tail: 0.0, min_factor: 1.0, converged: true }
    }

    fn to_series(self, ctx: &QContext) -> SeriesResult {
        let tail = self.value.abs() * self.rel_tail;
        if self.converged {
            SeriesResult::from_tail(self.value, self.terms, tail, ctx)
        } else {
            SeriesResult {
                value: self.value,
                terms_used: self.terms,
                tail_estimate: tail,
                status: Status::Truncated,
            }
        }
    }
}

/// `∏_{k≥0} (1 - q^k a)` truncated per the context.
pub(crate) fn inf_product(a: f64, ctx: &QContext) -> InfProduct {
    let q = ctx.q;
    let one_minus_q = 1.0 - q;
    let mut value = 1.0;
    let mut qk = 1.0;
    let mut min_factor = f64::INFINITY;
    let abs_a = a.abs();
    for k in 0..ctx.max_terms {
        let x = abs_a * qk;
        if x < ctx.eps_product {
            let rel_tail = (x / one_minus_q).exp_m1();
            if rel_tail <= ctx.eps_series {
                return InfProduct { value, terms: k, rel_tail, min_factor, converged: true };
            }
        }
        let factor = 1.0 - qk * a;
        value *= factor;
        min_factor = min_factor.min(factor.abs());
        if value == 0.0 {
            return InfProduct { value, terms: k + 1, rel_tail: 0.0, min_factor, converged: true };
        }
        qk *= q;
    }
    let rel_tail = (abs_a * qk / one_minus_q).exp_m1();
    InfProduct { value, terms: ctx.max_terms, rel_tail, min_factor, converged: false }
}

/// `(q^x; q)_∞`, the building block of Γ_q.
pub(crate) fn pow_product(x: f64, ctx: &QContext) -> Result<f64> {
    let p = inf_product(ctx.q.powf(x), ctx);
    if p.converged {
        Ok(p.value)
    } else {
        Err(Error::Truncated { op: "(q^x;q)_inf", terms: p.terms })
    }
}

/// The q-analogue of a real number, `[α]_q = (1 - q^α) / (1 - q)`.
pub fn q_number(alpha: f64, ctx: &QContext) -> f64 {
    let q = ctx.q;
    (1.0 - q.powf(alpha)) / (1.0 - q)
}

/// Finite q-shifted factorial `(a; q)_n = ∏_{k<n} (1 - q^k a)`.
pub fn q_pochhammer(a: f64, n: usize, ctx: &QContext) -> f64 {
    let mut value = 1.0;
    let mut qk = 1.0;
    for _ in 0..n {
        value *= 1.0 - qk * a;
        qk *= ctx.q;
    }
    value
}

/// Infinite q-shifted factorial `(a; q)_∞`.
///
/// A zero factor (`a = q^{-k}`) yields an exact zero. Hitting `max_terms`
/// before the tolerance is met returns status `Truncated`.
pub fn q_pochhammer_inf(a: f64, ctx: &QContext) -> SeriesResult {
    inf_product(a, ctx).to_series(ctx)
}

/// Real-index q-shifted factorial `(a; q)_ν = (a; q)_∞ / (a q^ν; q)_∞`.
pub fn q_pochhammer_real(a: f64, nu: f64, ctx: &QContext) -> Result<SeriesResult> {
    if nu == 0.0 || a == 0.0 {
        return Ok(SeriesResult::exact(1.0));
    }
    let num = inf_product(a, ctx);
    let den = inf_product(a * ctx.q.powf(nu), ctx);
    if den.value == 0.0 || den.min_factor < ZERO_FACTOR_TOL {
        return Err(Error::DivisionByZeroProduct { value: den.value });
    }
    let value = num.value / den.value;
    let tail = value.abs() * (num.rel_tail + den.rel_tail);
    let terms = num.terms + den.terms;
    if num.converged && den.converged {
        Ok(SeriesResult::from_tail(value, terms, tail, ctx))
    } else {
        Ok(SeriesResult { value, terms_used: terms, tail_estimate: tail, status: Status::Truncated })
    }
}

/// True when `x` is within [`POLE_WINDOW`] of a nonpositive integer.
pub fn is_gamma_pole(x: f64) -> bool {
    let r = x.round();
    r <= 0.0 && (x - r).abs() < POLE_WINDOW
}

/// Products below this are recomputed as a single product of factor ratios.
const UNDERFLOW_GUARD: f64 = 1e-250;

/// `(q;q)_∞ / (q^x;q)_∞` as one product of ratios `(1-q^{k+1})/(1-q^{k+x})`.
///
/// Near `q = 1` both products underflow while their ratio is moderate.
fn gamma_ratio_product(x: f64, ctx: &QContext) -> Result<f64> {
    let q = ctx.q;
    let (a, b) = (q, q.powf(x));
    let scale = a.max(b);
    let mut value = 1.0;
    let mut qk = 1.0;
    for _ in 0..ctx.max_terms {
        let s = scale * qk;
        if s < ctx.eps_product && (s / (1.0 - q)).exp_m1() <= ctx.eps_series {
            return Ok(value);
        }
        let den = 1.0 - qk * b;
        if den.abs() < ZERO_FACTOR_TOL {
            return Err(Error::Pole { x });
        }
        value *= (1.0 - qk * a) / den;
        qk *= q;
    }
    Err(Error::Truncated { op: "q_gamma", terms: ctx.max_terms })
}

/// The q-Gamma function `Γ_q(x) = (q;q)_∞ / (q^x;q)_∞ · (1-q)^{1-x}`.
pub fn q_gamma(x: f64, ctx: &QContext) -> Result<f64> {
    if is_gamma_pole(x) {
        return Err(Error::Pole { x });
    }
    let qq = ctx.qq_inf()?;
    let den = inf_product(ctx.q.powf(x), ctx);
    if !den.converged {
        return Err(Error::Truncated { op: "q_gamma", terms: den.terms });
    }
    if den.min_factor < ZERO_FACTOR_TOL {
        return Err(Error::Pole { x });
    }
    let ratio = if qq < UNDERFLOW_GUARD || den.value.abs() < UNDERFLOW_GUARD {
        gamma_ratio_product(x, ctx)?
    } else {
        qq / den.value
    };
    Ok(ratio * (1.0 - ctx.q).powf(1.0 - x))
}

/// `1 / Γ_q(x)`, extended by zero at the poles.
pub fn recip_q_gamma(x: f64, ctx: &QContext) -> Result<f64> {
    if is_gamma_pole(x) {
        return Ok(0.0);
    }
    let qq = ctx.qq_inf()?;
    let num = pow_product(x, ctx)?;
    if qq < UNDERFLOW_GUARD || num.abs() < UNDERFLOW_GUARD {
        return Ok((1.0 - ctx.q).powf(x - 1.0) / gamma_ratio_product(x, ctx)?);
    }
    Ok(num / qq * (1.0 - ctx.q).powf(x - 1.0))
}

/// `[n]_q! = [1]_q [2]_q ⋯ [n]_q`, with `[0]_q! = 1`.
pub fn q_factorial(n: usize, ctx: &QContext) -> f64 {
    (1..=n).map(|i| q_number(i as f64, ctx)).product()
}

/// `Σ c_k` for a slice, compensated. Convenience used by oracles and reports.
pub fn compensated_total(values: &[f64]) -> f64 {
    let mut s = CompensatedSum::new();
    for &v in values {
        s.add(v);
    }
    s.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(q: f64) -> QContext {
        QContext::new(q).unwrap()
    }

    #[test]
    fn context_rejects_bad_base() {
        assert!(QContext::new(0.0).is_err());
        assert!(QContext::new(1.0).is_err());
        assert!(QContext::new(0.9995).is_err());
        assert!(QContext::new(5e-4).is_err());
        assert!(QContext::new(f64::NAN).is_err());
        assert!(QContext::with_bounds(0.9995, 1e-4, 0.9999).is_ok());
        assert!(QContext::with_bounds(0.5, 0.0, 0.9).is_err());
        assert!(ctx(0.5).with_eps_series(0.0).is_err());
        assert!(ctx(0.5).with_eps_product(-1.0).is_err());
        assert!(ctx(0.5).with_max_terms(0).is_err());
    }

    #[test]
    fn q_number_values() {
        assert_eq!(q_number(0.0, &ctx(0.3)), 0.0);
        assert_eq!(q_number(1.0, &ctx(0.3)), 1.0);
        assert_eq!(q_number(2.0, &ctx(0.5)), 1.5);
    }

    #[test]
    fn finite_pochhammer() {
        let c = ctx(0.5);
        assert_eq!(q_pochhammer(0.7, 0, &c), 1.0);
        assert_eq!(q_pochhammer(0.0, 5, &c), 1.0);
        // (1 - 0.5)(1 - 0.25)
        assert!((q_pochhammer(0.5, 2, &c) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn infinite_pochhammer() {
        let c = ctx(0.5);
        let r = q_pochhammer_inf(0.0, &c);
        assert_eq!(r.value, 1.0);
        assert_eq!(r.status, Status::Converged);
        assert_eq!(q_pochhammer_inf(1.0, &c).value, 0.0);

        // 200-term brute-force product
        let mut oracle = 1.0;
        for k in 0..200 {
            oracle *= 1.0 - 0.5f64.powi(k) * 0.5;
        }
        let r = q_pochhammer_inf(0.5, &c);
        assert!((r.value - oracle).abs() < 1e-14);
        assert_eq!(r.status, Status::Converged);
    }

    #[test]
    fn infinite_pochhammer_truncates_visibly() {
        let c = QContext::with_bounds(0.999, 1e-3, 0.999).unwrap().with_max_terms(100).unwrap();
        let r = q_pochhammer_inf(0.5, &c);
        assert_eq!(r.status, Status::Truncated);
        assert_eq!(r.terms_used, 100);
    }

    #[test]
    fn real_index_pochhammer() {
        let c = ctx(0.5);
        assert_eq!(q_pochhammer_real(0.3, 0.0, &c).unwrap().value, 1.0);
        assert_eq!(q_pochhammer_real(0.0, 2.7, &c).unwrap().value, 1.0);
        let r = q_pochhammer_real(0.3, 3.0, &c).unwrap();
        assert!((r.value - q_pochhammer(0.3, 3, &c)).abs() < 1e-12);
        // denominator (a q^ν; q)_∞ with a q^ν = 1
        assert!(matches!(
            q_pochhammer_real(4.0, 2.0, &c),
            Err(Error::DivisionByZeroProduct { .. })
        ));
    }

    #[test]
    fn gamma_small_integers() {
        let c = ctx(0.5);
        assert!((q_gamma(1.0, &c).unwrap() - 1.0).abs() < 1e-15);
        assert!((q_gamma(2.0, &c).unwrap() - 1.0).abs() < 1e-15);
        assert!((q_gamma(3.0, &c).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn gamma_poles() {
        let c = ctx(0.5);
        for x in [0.0, -1.0, -2.0, -3.0 + 1e-13] {
            assert!(matches!(q_gamma(x, &c), Err(Error::Pole { .. })), "x = {x}");
            assert_eq!(recip_q_gamma(x, &c).unwrap(), 0.0);
        }
        // negative non-integer arguments are fine
        let g = q_gamma(-0.5, &c).unwrap();
        let g_half = q_gamma(0.5, &c).unwrap();
        assert!((g_half - q_number(-0.5, &c) * g).abs() < 1e-12 * g_half.abs());
    }

    #[test]
    fn gamma_near_one_survives_product_underflow() {
        let c = QContext::new(0.999).unwrap().with_max_terms(100_000).unwrap();
        assert!(c.qq_inf().unwrap() < 1e-250);
        assert!((q_gamma(2.0, &c).unwrap() - 1.0).abs() < 1e-12);
        let g = q_gamma(0.5, &c).unwrap();
        assert!((g / std::f64::consts::PI.sqrt() - 1.0).abs() < 1e-3);
        assert!((recip_q_gamma(0.5, &c).unwrap() * g - 1.0).abs() < 1e-13);
    }

    #[test]
    fn factorial() {
        assert_eq!(q_factorial(0, &ctx(0.5)), 1.0);
        assert!((q_factorial(2, &ctx(0.5)) - 1.5).abs() < 1e-15);
        let c = ctx(0.3);
        let g = q_gamma(5.0, &c).unwrap();
        assert!((q_factorial(4, &c) - g).abs() < 1e-12 * g);
    }
}
