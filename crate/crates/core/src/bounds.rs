//! Numerical checks of the two-sided estimate, the strict `(0,1)` range and
//! the algebraic decay bound of `e_{α,β}(-z;q)`.
//!
//! The two-sided estimate is measured through signed margins; nothing here
//! panics or aborts on a violated inequality.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{q_gamma, QContext, Status};
use crate::qspecial::{q_exp_product, q_mittag_leffler, EvalStrategy, MLParams};

/// Column order of the CSV export.
pub const REPORT_HEADER: [&str; 14] = [
    "alpha",
    "beta",
    "q",
    "z",
    "value",
    "lower",
    "upper",
    "decay_bound",
    "holds_lower",
    "holds_upper",
    "holds_range",
    "holds_decay",
    "margin_lower",
    "margin_upper",
];

/// One evaluated `(α, β, q, z)` tuple.
///
/// The two-sided fields (`lower`, `upper` and their flags and margins) are
/// only populated for `β = 1, 0 < α < 1`; otherwise they are NaN / false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub alpha: f64,
    pub beta: f64,
    pub q: f64,
    pub z: f64,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub decay_bound: f64,
    pub holds_lower: bool,
    pub holds_upper: bool,
    pub holds_range: bool,
    pub holds_decay: bool,
    pub margin_lower: f64,
    pub margin_upper: f64,
    /// The decay bound uses the empirical constant instead of `C_q`.
    #[serde(skip)]
    pub empirical_constant: bool,
    #[serde(skip)]
    pub status: Option<Status>,
    #[serde(skip)]
    pub error: Option<String>,
}

impl BoundReport {
    fn blank(alpha: f64, beta: f64, q: f64, z: f64) -> Self {
        BoundReport {
            alpha,
            beta,
            q,
            z,
            value: f64::NAN,
            lower: f64::NAN,
            upper: f64::NAN,
            decay_bound: f64::NAN,
            holds_lower: false,
            holds_upper: false,
            holds_range: false,
            holds_decay: false,
            margin_lower: f64::NAN,
            margin_upper: f64::NAN,
            empirical_constant: false,
            status: None,
            error: None,
        }
    }

    /// Whether the two-sided estimate applies to this row.
    pub fn has_two_sided(&self) -> bool {
        self.beta == 1.0 && self.alpha > 0.0 && self.alpha < 1.0
    }

    /// `(1+z)|value|`, the quantity the decay bound controls.
    pub fn scaled_value(&self) -> f64 {
        (1.0 + self.z) * self.value.abs()
    }
}

/// The constant of the decay bound together with its auxiliary argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConstant {
    pub alpha_prime: f64,
    pub c_q: f64,
    pub computable: bool,
}

/// `α' = 2^α / ((1-q^β)(1-√q))` and `C_q = e_{√q}(α') / Γ_q(β)`.
///
/// `e_{√q}` is taken in its product form; a pole, a nonpositive product
/// value or `β = 0` makes the constant not computable.
pub fn decay_constant(p: &MLParams, ctx: &QContext) -> DecayConstant {
    let q = ctx.q();
    let sq = q.sqrt();
    let alpha_prime = 2f64.powf(p.alpha()) / ((1.0 - q.powf(p.beta())) * (1.0 - sq));
    let not = DecayConstant { alpha_prime, c_q: f64::NAN, computable: false };
    if p.beta() == 0.0 {
        return not;
    }
    let Ok(half) = ctx.with_q(sq) else { return not };
    let e = match q_exp_product(alpha_prime, &half) {
        Ok(r) if r.status != Status::Diverged && r.status != Status::Truncated => r.value,
        _ => return not,
    };
    let Ok(g) = q_gamma(p.beta(), ctx) else { return not };
    let c_q = e / g;
    if e > 0.0 && c_q.is_finite() {
        DecayConstant { alpha_prime, c_q, computable: true }
    } else {
        DecayConstant { alpha_prime, c_q, computable: false }
    }
}

fn margin_above(value: f64, bound: f64) -> f64 {
    (value - bound) / bound.abs()
}

fn margin_below(value: f64, bound: f64) -> f64 {
    (bound - value) / bound.abs()
}

fn evaluate(p: &MLParams, z: f64, ctx: &QContext, strat: &EvalStrategy) -> Result<BoundReport> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::InvalidArgument(format!("z must be nonnegative, got {z}")));
    }
    let mut r = BoundReport::blank(p.alpha(), p.beta(), ctx.q(), z);
    let e = q_mittag_leffler(p, -z, ctx, strat)?;
    r.value = e.value;
    r.status = Some(e.status);
    r.holds_range = e.value > 0.0 && e.value < 1.0;

    if r.has_two_sided() {
        let a = p.alpha();
        r.lower = 1.0 / (1.0 + q_gamma(1.0 - a, ctx)? * z);
        r.upper = 1.0 / (1.0 + z / q_gamma(a + 1.0, ctx)?);
        r.margin_lower = margin_above(r.value, r.lower);
        r.margin_upper = margin_below(r.value, r.upper);
        r.holds_lower = r.margin_lower >= 0.0;
        r.holds_upper = r.margin_upper >= 0.0;
    }

    if p.alpha() < 2.0 {
        let dc = decay_constant(p, ctx);
        if dc.computable {
            r.decay_bound = dc.c_q / (1.0 + z);
        } else {
            r.empirical_constant = true;
            r.decay_bound = r.scaled_value() / (1.0 + z);
        }
        r.holds_decay = r.value.abs() <= r.decay_bound;
    }
    Ok(r)
}

/// Two-sided estimate and strict range of `e_{α,1}(-z;q)` for `0 < α < 1`.
pub fn ml_bounds_check(alpha: f64, z: f64, ctx: &QContext, strat: &EvalStrategy) -> Result<BoundReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("two-sided estimate needs 0 < alpha < 1, got {alpha}")));
    }
    evaluate(&MLParams::new(alpha, 1.0)?, z, ctx, strat)
}

/// Decay bound `|e_{α,β}(-z;q)| ≤ C_q / (1+z)` for `0 < α < 2`.
///
/// When `C_q` is not computable the row falls back to the pointwise
/// constant `(1+z)|value|` and sets `empirical_constant`.
pub fn ml_decay_check(p: &MLParams, z: f64, ctx: &QContext, strat: &EvalStrategy) -> Result<BoundReport> {
    if p.alpha() >= 2.0 {
        return Err(Error::InvalidArgument(format!("decay bound needs 0 < alpha < 2, got {}", p.alpha())));
    }
    evaluate(p, z, ctx, strat)
}

fn admissible(alpha: f64, beta: f64, q: f64, z: f64) -> bool {
    alpha > 0.0 && alpha < 2.0 && beta >= 0.0 && q > 0.0 && q < 1.0 && z >= 0.0 && z.is_finite()
}

/// Evaluates every tuple `(α, β, q, z)` in order. Failures are stored in the
/// row; rows whose decay constant is not computable share the empirical
/// constant `sup (1+z)|value|` of their `(α, β, q)` group.
pub fn scan_tuples(tuples: &[(f64, f64, f64, f64)], ctx: &QContext, strat: &EvalStrategy) -> Vec<BoundReport> {
    let mut rows: Vec<BoundReport> = tuples
        .par_iter()
        .map(|&(alpha, beta, q, z)| {
            let outcome = MLParams::new(alpha, beta)
                .and_then(|p| ctx.with_q(q).map(|c| (p, c)))
                .and_then(|(p, c)| evaluate(&p, z, &c, strat));
            outcome.unwrap_or_else(|e| {
                let mut r = BoundReport::blank(alpha, beta, q, z);
                r.error = Some(format!("{}: {e}", e.kind()));
                r
            })
        })
        .collect();

    let mut groups: Vec<((f64, f64, f64), f64)> = Vec::new();
    for r in rows.iter().filter(|r| r.empirical_constant && r.error.is_none()) {
        let key = (r.alpha, r.beta, r.q);
        let s = r.scaled_value();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, sup)) => *sup = sup.max(s),
            None => groups.push((key, s)),
        }
    }
    for r in rows.iter_mut().filter(|r| r.empirical_constant && r.error.is_none()) {
        if let Some((_, sup)) = groups.iter().find(|(k, _)| *k == (r.alpha, r.beta, r.q)) {
            r.decay_bound = sup / (1.0 + r.z);
            r.holds_decay = r.value.abs() <= r.decay_bound;
        }
    }
    rows
}

/// Cartesian sweep in lexicographic input order, skipping inadmissible
/// tuples.
pub fn bounds_scan(
    alphas: &[f64],
    betas: &[f64],
    qs: &[f64],
    zs: &[f64],
    ctx: &QContext,
    strat: &EvalStrategy,
) -> Vec<BoundReport> {
    let mut tuples = Vec::new();
    for &a in alphas {
        for &b in betas {
            for &q in qs {
                for &z in zs {
                    if admissible(a, b, q, z) {
                        tuples.push((a, b, q, z));
                    }
                }
            }
        }
    }
    scan_tuples(&tuples, ctx, strat)
}

/// Writes rows as CSV with the [`REPORT_HEADER`] columns. Rows whose
/// evaluation failed carry NaN values; their errors live in the summary.
pub fn write_report_csv<W: std::io::Write>(rows: &[BoundReport], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `n` log-spaced points between `lo` and `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
        }
    }
}

/// Range and two-sided grid: β = 1, α ∈ {0.2, …, 0.8}, q ∈ {0.3, 0.5, 0.7}
/// and 20 log-spaced z from `0.95 R · 10^{-3}` to `0.95 R`, where
/// `R = (1-q)^{-α}` is the series radius.
pub fn default_range_grid() -> Vec<(f64, f64, f64, f64)> {
    let mut tuples = Vec::new();
    for alpha in [0.2, 0.35, 0.5, 0.65, 0.8] {
        for q in [0.3, 0.5, 0.7] {
            let edge = 0.95 * (1.0f64 - q).powf(-alpha);
            for z in log_space(edge * 1e-3, edge, 20) {
                tuples.push((alpha, 1.0, q, z));
            }
        }
    }
    tuples
}

/// Decay grid: β, α ∈ {0.5, 1, 1.5}, q ∈ {0.3, 0.5}, 15 log-spaced z in
/// `[0.01, 3]`.
pub fn default_decay_grid() -> Vec<(f64, f64, f64, f64)> {
    let zs = log_space(0.01, 3.0, 15);
    let mut tuples = Vec::new();
    for beta in [0.5, 1.0, 1.5] {
        for alpha in [0.5, 1.0, 1.5] {
            for q in [0.3, 0.5] {
                for &z in &zs {
                    tuples.push((alpha, beta, q, z));
                }
            }
        }
    }
    tuples
}

/// Both default grids, range grid first.
pub fn default_grid() -> Vec<(f64, f64, f64, f64)> {
    let mut t = default_range_grid();
    t.extend(default_decay_grid());
    t
}

/// A row that fails one side of the two-sided estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub row: usize,
    pub alpha: f64,
    pub q: f64,
    pub z: f64,
    pub side: String,
    pub margin: f64,
    /// Ratio by which the bound must be relaxed to hold.
    pub slack_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub rows: usize,
    pub error_rows: Vec<(usize, String)>,
    pub two_sided_rows: usize,
    pub margins_computed: usize,
    pub lower_pass_rate: f64,
    pub upper_pass_rate: f64,
    pub worst_margin_lower: f64,
    pub worst_margin_upper: f64,
    pub range_rows: usize,
    pub range_pass_rate: f64,
    pub worst_range_margin: f64,
    pub decay_rows: usize,
    pub decay_pass_rate: f64,
    pub empirical_constant_rows: Vec<usize>,
    pub violations: Vec<Violation>,
    pub max_slack_factor: f64,
}

fn rate(pass: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        pass as f64 / total as f64
    }
}

impl ScanSummary {
    pub fn from_rows(rows: &[BoundReport]) -> Self {
        let mut s = ScanSummary {
            rows: rows.len(),
            error_rows: Vec::new(),
            two_sided_rows: 0,
            margins_computed: 0,
            lower_pass_rate: 1.0,
            upper_pass_rate: 1.0,
            worst_margin_lower: f64::INFINITY,
            worst_margin_upper: f64::INFINITY,
            range_rows: 0,
            range_pass_rate: 1.0,
            worst_range_margin: f64::INFINITY,
            decay_rows: 0,
            decay_pass_rate: 1.0,
            empirical_constant_rows: Vec::new(),
            violations: Vec::new(),
            max_slack_factor: 1.0,
        };
        let (mut lower_ok, mut upper_ok, mut range_ok, mut decay_ok) = (0, 0, 0, 0);
        for (i, r) in rows.iter().enumerate() {
            if let Some(e) = &r.error {
                s.error_rows.push((i, e.clone()));
                continue;
            }
            if r.beta == 1.0 {
                s.range_rows += 1;
                range_ok += r.holds_range as usize;
                let m = r.value.min(1.0 - r.value);
                s.worst_range_margin = s.worst_range_margin.min(m);
            }
            if r.alpha < 2.0 {
                s.decay_rows += 1;
                decay_ok += r.holds_decay as usize;
                if r.empirical_constant {
                    s.empirical_constant_rows.push(i);
                }
            }
            if !r.has_two_sided() {
                continue;
            }
            s.two_sided_rows += 1;
            if r.margin_lower.is_finite() && r.margin_upper.is_finite() {
                s.margins_computed += 1;
            }
            lower_ok += r.holds_lower as usize;
            upper_ok += r.holds_upper as usize;
            s.worst_margin_lower = s.worst_margin_lower.min(r.margin_lower);
            s.worst_margin_upper = s.worst_margin_upper.min(r.margin_upper);
            if !r.holds_lower {
                let factor = r.lower / r.value;
                s.push_violation(i, r, "lower", r.margin_lower, factor);
            }
            if !r.holds_upper {
                let factor = r.value / r.upper;
                s.push_violation(i, r, "upper", r.margin_upper, factor);
            }
        }
        s.lower_pass_rate = rate(lower_ok, s.two_sided_rows);
        s.upper_pass_rate = rate(upper_ok, s.two_sided_rows);
        s.range_pass_rate = rate(range_ok, s.range_rows);
        s.decay_pass_rate = rate(decay_ok, s.decay_rows);
        s
    }

    fn push_violation(&mut self, row: usize, r: &BoundReport, side: &str, margin: f64, factor: f64) {
        let slack_factor = if factor.is_finite() && factor > 0.0 { factor } else { f64::INFINITY };
        self.max_slack_factor = self.max_slack_factor.max(slack_factor);
        self.violations.push(Violation {
            row,
            alpha: r.alpha,
            q: r.q,
            z: r.z,
            side: side.to_string(),
            margin,
            slack_factor,
        });
    }
}
