//! q-differentiation, Jackson integration, the Riemann-Liouville q-fractional
//! integral and the Caputo fractional q-derivative, all based at the origin.
//!
//! Everything here lives on q-geometric node sets `x q^m`, so no
//! interpolation is ever needed.

use crate::error::{Error, Result};
use crate::qcore::{q_gamma, q_pochhammer_real, QContext, SeriesResult, Status};
use crate::sum::CompensatedSum;

/// A real function that can be sampled at arbitrary positive points.
pub trait QFunction: Sync {
    fn eval(&self, t: f64) -> f64;
}

impl<F> QFunction for F
where
    F: Fn(f64) -> f64 + Sync,
{
    fn eval(&self, t: f64) -> f64 {
        self(t)
    }
}

/// `D_q f(x) = (f(x) - f(qx)) / (x (1-q))`.
pub fn q_derivative<F: QFunction + ?Sized>(f: &F, x: f64, ctx: &QContext) -> Result<f64> {
    if x == 0.0 {
        return Err(Error::ZeroPoint);
    }
    let q = ctx.q();
    Ok((f.eval(x) - f.eval(q * x)) / (x * (1.0 - q)))
}

/// `D_q^n f(x)` computed from the samples `f(x q^j)`, `j = 0..=n`.
pub fn q_derivative_n<F: QFunction + ?Sized>(f: &F, n: usize, x: f64, ctx: &QContext) -> Result<f64> {
    if n > 0 && x == 0.0 {
        return Err(Error::ZeroPoint);
    }
    let q = ctx.q();
    let mut samples = Vec::with_capacity(n + 1);
    let mut y = x;
    for _ in 0..=n {
        samples.push(f.eval(y));
        y *= q;
    }
    Ok(difference_quotient(&samples, n, x, q))
}

/// Repeated q-difference quotient of `samples[j] = g(x q^j)`; returns
/// `D_q^n g(x)`.
fn difference_quotient(samples: &[f64], n: usize, x: f64, q: f64) -> f64 {
    let mut level: Vec<f64> = samples[..=n].to_vec();
    for i in 0..n {
        let mut y = x;
        for j in 0..n - i {
            level[j] = (level[j] - level[j + 1]) / (y * (1.0 - q));
            y *= q;
        }
    }
    level[0]
}

/// Sums `Σ_m inc(m)` for a Jackson-type series whose weights decay like
/// `q^m`. Stops once `q^m < eps_series` and the increment is negligible.
fn geometric_sum<I>(ctx: &QContext, mut inc: I) -> Result<SeriesResult>
where
    I: FnMut(usize, f64) -> f64,
{
    let q = ctx.q();
    let eps = ctx.eps_series();
    let mut sum = CompensatedSum::new();
    let mut qm = 1.0;
    let mut last = 0.0f64;
    let mut midpoint = f64::NAN;
    let max = ctx.max_terms();
    for m in 0..max {
        let d = inc(m, qm);
        if !d.is_finite() {
            return Err(Error::NonAbsolutelyConvergent { last: d });
        }
        sum.add(d);
        last = d;
        if m == max / 2 {
            midpoint = d.abs();
        }
        let value = sum.value();
        if qm < eps && d.abs() <= eps * value.abs().max(1.0) {
            let tail = d.abs() * q / (1.0 - q);
            return Ok(SeriesResult::from_tail(value, m + 1, tail, ctx));
        }
        qm *= q;
    }
    if midpoint.is_finite() && last.abs() >= 0.5 * midpoint && last != 0.0 {
        return Err(Error::NonAbsolutelyConvergent { last });
    }
    Ok(SeriesResult {
        value: sum.value(),
        terms_used: max,
        tail_estimate: last.abs() * q / (1.0 - q),
        status: Status::Truncated,
    })
}

/// `∫_0^a f d_q t = (1-q) a Σ q^m f(a q^m)`.
fn jackson_from_zero<F: QFunction + ?Sized>(f: &F, a: f64, ctx: &QContext) -> Result<SeriesResult> {
    if a == 0.0 {
        return Ok(SeriesResult::exact(0.0));
    }
    let scale = (1.0 - ctx.q()) * a;
    geometric_sum(ctx, |_, qm| scale * qm * f.eval(a * qm))
}

/// Jackson integral `∫_a^b f d_q t = ∫_0^b - ∫_0^a`.
pub fn jackson_integral<F: QFunction + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    ctx: &QContext,
) -> Result<SeriesResult> {
    if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("integration limits must be nonnegative, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(SeriesResult::exact(0.0));
    }
    let upper = jackson_from_zero(f, b, ctx)?;
    let lower = jackson_from_zero(f, a, ctx)?;
    Ok(SeriesResult {
        value: upper.value - lower.value,
        terms_used: upper.terms_used + lower.terms_used,
        tail_estimate: upper.tail_estimate + lower.tail_estimate,
        status: upper.status.worst(lower.status),
    })
}

/// Bilateral Jackson integral `(1-q) Σ_{m∈ℤ} q^m f(q^m)`.
///
/// The two sides are truncated independently; the side towards infinity
/// stops after two consecutive negligible increments.
pub fn jackson_integral_0inf<F: QFunction + ?Sized>(f: &F, ctx: &QContext) -> Result<SeriesResult> {
    let q = ctx.q();
    let scale = 1.0 - q;
    let small = geometric_sum(ctx, |_, qm| scale * qm * f.eval(qm))?;

    let eps = ctx.eps_series();
    let mut sum = CompensatedSum::new();
    let mut quiet = 0;
    let mut weight = 1.0 / q;
    let mut last = 0.0f64;
    let mut first = f64::NAN;
    for m in 1..=ctx.max_terms() {
        let d = scale * weight * f.eval(weight);
        if !d.is_finite() {
            return Err(Error::NonAbsolutelyConvergent { last: d });
        }
        if m == 1 {
            first = d.abs();
        }
        sum.add(d);
        last = d;
        let total = sum.value() + small.value;
        if d.abs() <= eps * total.abs().max(1.0) {
            quiet += 1;
            if quiet == 2 {
                let value = total;
                return Ok(SeriesResult {
                    value,
                    terms_used: small.terms_used + m,
                    tail_estimate: small.tail_estimate + d.abs(),
                    status: small.status,
                });
            }
        } else {
            quiet = 0;
        }
        weight /= q;
        if !weight.is_finite() {
            break;
        }
    }
    if last.abs() >= first {
        return Err(Error::NonAbsolutelyConvergent { last });
    }
    Ok(SeriesResult {
        value: sum.value() + small.value,
        terms_used: small.terms_used + ctx.max_terms(),
        tail_estimate: small.tail_estimate + last.abs(),
        status: Status::Truncated,
    })
}

/// Riemann-Liouville kernel weights `(q^{m+1}; q)_{α-1}` at the Jackson nodes,
/// generated by the exact ratio `(1 - q^{m+α}) / (1 - q^{m+1})`.
pub(crate) struct KernelWeights {
    q: f64,
    qm: f64,
    q_alpha: f64,
    current: f64,
}

impl KernelWeights {
    pub fn new(alpha: f64, ctx: &QContext) -> Result<Self> {
        let q = ctx.q();
        let w0 = q_pochhammer_real(q, alpha - 1.0, ctx)?;
        if !w0.value.is_finite() {
            return Err(Error::DivisionByZeroProduct { value: w0.value });
        }
        Ok(KernelWeights { q, qm: 1.0, q_alpha: q.powf(alpha), current: w0.value })
    }
}

impl Iterator for KernelWeights {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let w = self.current;
        let next_num = 1.0 - self.qm * self.q_alpha;
        let next_den = 1.0 - self.qm * self.q;
        self.current *= next_num / next_den;
        self.qm *= self.q;
        Some(w)
    }
}

/// `I^α f(x) = (1/Γ_q(α)) ∫_0^x x^{α-1} (qt/x; q)_{α-1} f(t) d_q t`.
pub fn rl_fractional_integral<F: QFunction + ?Sized>(
    f: &F,
    alpha: f64,
    x: f64,
    ctx: &QContext,
) -> Result<SeriesResult> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("order must be positive, got {alpha}")));
    }
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidArgument(format!("x must be positive, got {x}")));
    }
    let scale = (1.0 - ctx.q()) * x.powf(alpha) / q_gamma(alpha, ctx)?;
    let mut weights = KernelWeights::new(alpha, ctx)?;
    geometric_sum(ctx, |_, qm| {
        let w = weights.next().unwrap_or(0.0);
        scale * qm * w * f.eval(x * qm)
    })
}

/// Integer order `n = ⌈α⌉` and fractional remainder `n - α` of a Caputo order.
pub fn caputo_split(alpha: f64) -> (usize, f64) {
    let n = alpha.ceil();
    (n as usize, n - alpha)
}

/// Caputo fractional q-derivative `I^{n-α} D_q^n f(x)` with `n = ⌈α⌉`.
pub fn caputo_derivative<F: QFunction + ?Sized>(
    f: &F,
    alpha: f64,
    x: f64,
    ctx: &QContext,
) -> Result<SeriesResult> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("order must be positive, got {alpha}")));
    }
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidArgument(format!("x must be positive, got {x}")));
    }
    let q = ctx.q();
    let mut y = x;
    let samples = std::iter::from_fn(|| {
        let v = f.eval(y);
        y *= q;
        Some(v)
    });
    caputo_core(samples, alpha, x, ctx)
}

/// Caputo derivative at `x` from the samples `samples[j] = f(x q^j)`.
///
/// Used on solution traces stored on a q-geometric grid. Truncation is
/// noise-aware: the sum stops once rounding noise in the q-differences
/// dominates the increments, and the remaining tail is extrapolated
/// geometrically. The reported tail estimate covers extrapolation
/// uncertainty plus accumulated noise.
pub fn caputo_from_samples(samples: &[f64], alpha: f64, x: f64, ctx: &QContext) -> Result<SeriesResult> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("order must be positive, got {alpha}")));
    }
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidArgument(format!("x must be positive, got {x}")));
    }
    let (n, _) = caputo_split(alpha);
    if samples.len() < n + 1 {
        return Err(Error::LengthMismatch { expected: n + 1, got: samples.len() });
    }
    caputo_core(samples.iter().copied(), alpha, x, ctx)
}

fn caputo_core<S>(mut samples: S, alpha: f64, x: f64, ctx: &QContext) -> Result<SeriesResult>
where
    S: Iterator<Item = f64>,
{
    let q = ctx.q();
    let (n, nu) = caputo_split(alpha);
    let mut window: std::collections::VecDeque<f64> = std::collections::VecDeque::with_capacity(n + 1);
    for _ in 0..=n {
        match samples.next() {
            Some(v) => window.push_back(v),
            None => return Err(Error::LengthMismatch { expected: n + 1, got: window.len() }),
        }
    }
    let buf: Vec<f64> = window.iter().copied().collect();
    if nu == 0.0 {
        return Ok(SeriesResult::exact(difference_quotient(&buf, n, x, q)));
    }

    let scale = (1.0 - q) * x.powf(nu) / q_gamma(nu, ctx)?;
    let mut weights = KernelWeights::new(nu, ctx)?;
    let eps = ctx.eps_series();
    let unit = f64::EPSILON * (1u64 << n) as f64;

    let mut sum = CompensatedSum::new();
    let mut noise_total = 0.0;
    let mut qm = 1.0;
    let mut prev_inc = f64::NAN;
    let mut last_inc = 0.0;
    let mut estimates = [f64::NAN; 2];
    let mut terms = 0;
    let mut buf = buf;
    for m in 0..ctx.max_terms() {
        let y = x * qm;
        let g = difference_quotient(&buf, n, y, q);
        let w = weights.next().unwrap_or(0.0);
        let factor = scale * qm * w;
        let inc = factor * g;
        let magnitude = buf.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let noise = factor.abs() * unit * magnitude / (y * (1.0 - q)).powi(n as i32);
        if !inc.is_finite() {
            return Err(Error::NonAbsolutelyConvergent { last: inc });
        }
        if m >= 3 && noise > inc.abs() {
            // rounding noise has overtaken the signal
            break;
        }
        sum.add(inc);
        noise_total += noise;
        terms = m + 1;
        let value = sum.value();
        if qm < eps && inc.abs() <= eps * value.abs().max(1.0) {
            let tail = inc.abs() * q / (1.0 - q) + noise_total;
            return Ok(SeriesResult::from_tail(value, terms, tail, ctx));
        }
        estimates = [estimates[1], geometric_limit(value, prev_inc, inc)];
        prev_inc = inc;
        last_inc = inc;
        qm *= q;
        match samples.next() {
            Some(v) => {
                buf.remove(0);
                buf.push(v);
            }
            None => break,
        }
    }
    let partial = sum.value();
    let (value, tail) = match estimates {
        [a, b] if a.is_finite() && b.is_finite() => (b, (b - a).abs() + noise_total),
        _ => (partial, last_inc.abs() * q / (1.0 - q) + noise_total),
    };
    let status = if tail <= eps * value.abs().max(1.0) { Status::Accelerated } else { Status::Truncated };
    Ok(SeriesResult { value, terms_used: terms, tail_estimate: tail, status })
}

/// Full-sum estimate assuming the increments continue geometrically with
/// the last observed ratio; NaN when the ratio is not in (0, 1).
fn geometric_limit(partial: f64, prev_inc: f64, inc: f64) -> f64 {
    if inc == 0.0 {
        return partial;
    }
    let r = inc / prev_inc;
    if r.is_finite() && r > 0.0 && r < 1.0 {
        partial + inc * r / (1.0 - r)
    } else {
        f64::NAN
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::q_number;
    use crate::qspecial::q_exp;

    fn ctx(q: f64) -> QContext {
        QContext::new(q).unwrap()
    }

    #[test]
    fn derivative_examples() {
        let c = ctx(0.5);
        assert_eq!(q_derivative(&|_t: f64| 3.0, 0.7, &c).unwrap(), 0.0);
        assert!((q_derivative(&|t: f64| t.powi(3), 1.0, &c).unwrap() - 1.75).abs() < 1e-15);
        let e = |t: f64| q_exp(t, &c).unwrap().value;
        assert!((q_derivative(&e, 0.2, &c).unwrap() - e(0.2)).abs() < 1e-10);
        assert_eq!(q_derivative(&e, 0.0, &c), Err(Error::ZeroPoint));
    }

    #[test]
    fn higher_derivative_of_power() {
        let c = ctx(0.5);
        let d2 = q_derivative_n(&|t: f64| t.powi(3), 2, 2.0, &c).unwrap();
        let exact = q_number(3.0, &c) * q_number(2.0, &c) * 2.0;
        assert!((d2 - exact).abs() < 1e-12 * exact);
        assert_eq!(q_derivative_n(&|t: f64| t, 0, 2.0, &c).unwrap(), 2.0);
    }

    #[test]
    fn jackson_examples() {
        let c = ctx(0.5);
        let one = jackson_integral(&|_t: f64| 1.0, 0.0, 1.0, &c).unwrap();
        assert!((one.value - 1.0).abs() < 1e-14);
        assert_eq!(one.status, Status::Converged);
        let lin = jackson_integral(&|t: f64| t, 0.0, 1.0, &c).unwrap();
        assert!((lin.value - 2.0 / 3.0).abs() < 1e-14);
        assert_eq!(jackson_integral(&|t: f64| t, 0.4, 0.4, &c).unwrap().value, 0.0);
        assert!(jackson_integral(&|t: f64| t, -1.0, 0.4, &c).is_err());
    }

    #[test]
    fn jackson_detects_divergence() {
        let c = ctx(0.5).with_max_terms(200).unwrap();
        let r = jackson_integral(&|t: f64| 1.0 / t, 0.0, 1.0, &c);
        assert!(matches!(r, Err(Error::NonAbsolutelyConvergent { .. })));
    }

    #[test]
    fn bilateral_examples() {
        let c = ctx(0.5);
        assert_eq!(jackson_integral_0inf(&|_t: f64| 0.0, &c).unwrap().value, 0.0);
        let ind = |t: f64| if t <= 1.0 { t } else { 0.0 };
        let a = jackson_integral_0inf(&ind, &c).unwrap().value;
        let b = jackson_integral(&|t: f64| t, 0.0, 1.0, &c).unwrap().value;
        assert!((a - b).abs() < 1e-12);
        // supported on q^m, m in -3..=2
        let bump = |t: f64| if (0.2..=8.5).contains(&t) { t * (9.0 - t) } else { 0.0 };
        let oracle: f64 = (-3i32..=2).map(|m| 0.5 * 0.5f64.powi(m) * bump(0.5f64.powi(m))).sum();
        assert!((jackson_integral_0inf(&bump, &c).unwrap().value - oracle).abs() < 1e-12);
    }

    #[test]
    fn rl_integral_examples() {
        let c = ctx(0.5);
        assert_eq!(rl_fractional_integral(&|_t: f64| 0.0, 0.5, 1.0, &c).unwrap().value, 0.0);
        let v = rl_fractional_integral(&|_t: f64| 1.0, 0.5, 1.0, &c).unwrap().value;
        assert!((v - 1.0 / q_gamma(1.5, &c).unwrap()).abs() < 1e-13);
        let f = |t: f64| t * t + 1.0;
        let a = rl_fractional_integral(&f, 1.0, 0.8, &c).unwrap().value;
        let b = jackson_integral(&f, 0.0, 0.8, &c).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn caputo_examples() {
        let c = ctx(0.5);
        for alpha in [0.3, 0.5, 1.3, 1.7] {
            let v = caputo_derivative(&|_t: f64| 2.5, alpha, 0.9, &c).unwrap().value;
            assert_eq!(v, 0.0);
        }
        let v = caputo_derivative(&|t: f64| t, 0.5, 1.0, &c).unwrap().value;
        assert!((v - 1.0 / q_gamma(1.5, &c).unwrap()).abs() < 1e-12);
        let f = |t: f64| t.powf(1.3) + 0.5 * t;
        let g = |t: f64| (2.0 * t).sin();
        let h = |t: f64| 2.0 * f(t) + 3.0 * g(t);
        let (a, b, s) = (
            caputo_derivative(&f, 0.6, 0.7, &c).unwrap().value,
            caputo_derivative(&g, 0.6, 0.7, &c).unwrap().value,
            caputo_derivative(&h, 0.6, 0.7, &c).unwrap().value,
        );
        assert!((s - (2.0 * a + 3.0 * b)).abs() < 1e-11);
    }

    #[test]
    fn caputo_integer_order_is_plain_derivative() {
        let c = ctx(0.5);
        let v = caputo_derivative(&|t: f64| t.powi(3), 1.0, 1.0, &c).unwrap().value;
        assert!((v - 1.75).abs() < 1e-14);
    }

    #[test]
    fn caputo_of_power_from_samples() {
        let c = ctx(0.5);
        let x = 0.8;
        let samples: Vec<f64> = (0..70).map(|j| (x * 0.5f64.powi(j)).powi(2)).collect();
        for alpha in [0.5, 1.5] {
            let r = caputo_from_samples(&samples, alpha, x, &c).unwrap();
            let exact = q_gamma(3.0, &c).unwrap() / q_gamma(3.0 - alpha, &c).unwrap() * x.powf(2.0 - alpha);
            assert!((r.value - exact).abs() < 1e-9, "alpha {alpha}: {} vs {exact}", r.value);
            assert!(r.tail_estimate < 1e-8);
        }
        assert!(caputo_from_samples(&samples[..1], 0.5, x, &c).is_err());
    }
}
