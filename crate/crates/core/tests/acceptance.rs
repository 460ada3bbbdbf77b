//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! The bound scans, solver configurations and estimate ratios are written to
//! `acceptance_report.json` in the cargo target temp directory.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use qfrac::bounds::{default_decay_grid, default_range_grid, scan_tuples, ScanSummary};
use qfrac::qcalculus::{caputo_derivative, jackson_integral, q_derivative};
use qfrac::qcore::{q_gamma, q_number, q_pochhammer, q_pochhammer_inf, q_pochhammer_real};
use qfrac::qspecial::q_mittag_leffler_continued;
use qfrac::spectral::{
    direct_solve_superorder, direct_solve_suborder, energy_estimate_report, inverse_solve, residual_check,
    CoefficientField, Source, SpectralModel, TimeGrid,
};
use qfrac::sum::CompensatedSum;
use qfrac::verify::run_invariants;
use qfrac::{EvalStrategy, MLParams, QContext};

type Outcome = Result<String, String>;

fn ctx(q: f64) -> QContext {
    QContext::new(q).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(1e-300)
    }
}

/// Tracks the largest error seen and fails when it exceeds `limit`.
struct Worst {
    limit: f64,
    value: f64,
    at: String,
}

impl Worst {
    fn new(limit: f64) -> Self {
        Worst { limit, value: 0.0, at: String::new() }
    }

    fn see(&mut self, e: f64, at: impl FnOnce() -> String) {
        if e.is_nan() || e > self.value {
            self.value = e;
            self.at = at();
        }
    }

    fn ok(&self) -> bool {
        self.value <= self.limit
    }

    fn describe(&self, what: &str) -> String {
        format!("{what} {:.2e} (limit {:.0e}{})", self.value, self.limit, if self.ok() { String::new() } else { format!(", at {}", self.at) })
    }
}

fn verdict(parts: &[(&Worst, &str)]) -> Outcome {
    let text = parts.iter().map(|(w, n)| w.describe(n)).collect::<Vec<_>>().join("; ");
    if parts.iter().all(|(w, _)| w.ok()) {
        Ok(text)
    } else {
        Err(text)
    }
}

/// Independent q-Gamma: the product of factor ratios, no shared code.
fn oracle_gamma(x: f64, q: f64) -> f64 {
    let mut v = (1.0 - q).powf(1.0 - x);
    let mut qk = 1.0;
    for _ in 0..20_000 {
        v *= (1.0 - qk * q) / (1.0 - qk * q.powf(x));
        qk *= q;
        if qk < 1e-18 {
            break;
        }
    }
    v
}

fn oracle_factorial(n: usize, q: f64) -> f64 {
    (1..=n).map(|i| (1.0 - q.powi(i as i32)) / (1.0 - q)).product()
}

fn criterion_1() -> Outcome {
    let mut rec = Worst::new(1e-12);
    let mut fact = Worst::new(1e-12);
    for q in [0.3, 0.5, 0.7, 0.9] {
        let c = ctx(q);
        for i in 1..=50 {
            let x = i as f64 / 10.0;
            let lhs = q_gamma(x + 1.0, &c).map_err(|e| e.to_string())?;
            let rhs = q_number(x, &c) * q_gamma(x, &c).map_err(|e| e.to_string())?;
            rec.see(rel(rhs, lhs), || format!("q={q} x={x}"));
        }
        for n in 0..=12 {
            let g = q_gamma(n as f64 + 1.0, &c).map_err(|e| e.to_string())?;
            fact.see(rel(g, oracle_factorial(n, q)), || format!("q={q} n={n}"));
        }
    }
    verdict(&[(&rec, "recurrence"), (&fact, "factorial")])
}

fn criterion_2() -> Outcome {
    let mut split = Worst::new(1e-12);
    let mut ratio = Worst::new(1e-10);
    for q in [0.3, 0.5, 0.7, 0.9] {
        let (c, c2) = (ctx(q), ctx(q * q));
        for a in [-0.5, 0.0, 0.3, 0.9] {
            let num = q_pochhammer_inf(a, &c).value;
            for n in 0..=20usize {
                // finite products written out here as the oracle
                let direct: f64 = (0..2 * n).map(|k| 1.0 - q.powi(k as i32) * a).product();
                let lhs = q_pochhammer(a, 2 * n, &c);
                let rhs = q_pochhammer(a, n, &c2) * q_pochhammer(a * q, n, &c2);
                split.see(rel(rhs, lhs).max(rel(lhs, direct)), || format!("q={q} a={a} n={n}"));
                let den = q_pochhammer_inf(a * q.powi(n as i32), &c).value;
                if den.abs() > 1e-8 {
                    ratio.see(rel(num / den, q_pochhammer(a, n, &c)), || format!("q={q} a={a} n={n}"));
                }
            }
        }
    }
    verdict(&[(&split, "splitting"), (&ratio, "ratio")])
}

fn poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * t + a)
}

fn criterion_3() -> Outcome {
    let e = |err: qfrac::Error| err.to_string();
    let mut power = Worst::new(1e-13);
    let mut product = Worst::new(1e-8);
    let mut parts = Worst::new(1e-10);
    let mut ftc = Worst::new(1e-10);
    let mut constants = Worst::new(0.0);
    for q in [0.3, 0.5, 0.7] {
        let c = ctx(q);
        for n in 1..=10 {
            for x in [0.25, 1.0, 2.0] {
                let d = q_derivative(&|t: f64| t.powi(n), x, &c).map_err(e)?;
                let exact = (1.0 - q.powi(n)) / (1.0 - q) * x.powi(n - 1);
                power.see(rel(d, exact), || format!("q={q} n={n} x={x}"));
            }
        }
    }
    for q in [0.5, 0.7] {
        let c = ctx(q);
        for alpha in [0.3, 0.7, 1.5] {
            for x in [1.0f64, 2.0] {
                let g = |s: f64| x.powf(alpha) * q_pochhammer_real(s / x, alpha, &c).unwrap().value;
                for j in 1..=8 {
                    let s = x * q.powi(j);
                    let lhs = (g(s) - g(q * s)) / (s * (1.0 - q));
                    let rhs = -(1.0 - q.powf(alpha)) / (1.0 - q)
                        * x.powf(alpha - 1.0)
                        * q_pochhammer_real(q * s / x, alpha - 1.0, &c).map_err(e)?.value;
                    product.see(rel(lhs, rhs), || format!("q={q} alpha={alpha} x={x} j={j}"));
                }
            }
        }
    }
    let polys: [&[f64]; 5] = [
        &[1.0, -2.0, 0.5, 3.0, -1.0],
        &[0.3, 1.1, -0.7, 0.0, 0.25],
        &[2.0, 0.0, 1.0],
        &[-1.0, 0.5],
        &[0.0, 0.0, 0.0, 0.0, 1.0],
    ];
    for q in [0.3, 0.5, 0.7] {
        let c = ctx(q);
        let dq = |f: &[f64], t: f64| (poly(f, t) - poly(f, q * t)) / (t * (1.0 - q));
        for (iu, u) in polys.iter().enumerate() {
            for (iv, v) in polys.iter().enumerate() {
                let (a, b) = (0.25, 1.0);
                let lhs = jackson_integral(&|t: f64| poly(u, t) * dq(v, t), a, b, &c).map_err(e)?.value;
                let cross = jackson_integral(&|t: f64| poly(v, q * t) * dq(u, t), a, b, &c).map_err(e)?.value;
                let boundary = poly(u, b) * poly(v, b) - poly(u, a) * poly(v, a);
                let scale = lhs.abs().max(cross.abs()).max(boundary.abs()).max(1.0);
                parts.see((lhs - (boundary - cross)).abs() / scale, || format!("q={q} u#{iu} v#{iv}"));
            }
            for a in [0.5, 1.0, 2.0] {
                let v = jackson_integral(&|t: f64| dq(u, t), 0.0, a, &c).map_err(e)?.value;
                let exact = poly(u, a) - poly(u, 0.0);
                ftc.see((v - exact).abs() / poly(u, a).abs().max(1.0), || format!("q={q} f#{iu} a={a}"));
            }
        }
        for alpha in [0.3, 0.7, 1.3, 1.7] {
            for x in [0.5, 1.0, 2.0] {
                let v = caputo_derivative(&|_t: f64| -1.25, alpha, x, &c).map_err(e)?.value;
                constants.see(v.abs(), || format!("q={q} alpha={alpha} x={x}"));
            }
        }
    }
    verdict(&[
        (&power, "power rule"),
        (&product, "product derivative"),
        (&parts, "integration by parts"),
        (&ftc, "fundamental theorem"),
        (&constants, "Caputo of constants"),
    ])
}

fn summary_json(s: &ScanSummary) -> Value {
    serde_json::to_value(s).unwrap()
}

fn criterion_4(report: &mut Value) -> Outcome {
    let c = ctx(0.5);
    let strat = EvalStrategy::default();
    let rows = scan_tuples(&default_range_grid(), &c, &strat);
    let mut margin = f64::INFINITY;
    let mut at = String::new();
    let mut oracle = Worst::new(1e-12);
    for r in &rows {
        if let Some(e) = &r.error {
            return Err(format!("row alpha={} q={} z={} failed: {e}", r.alpha, r.q, r.z));
        }
        let m = r.value.min(1.0 - r.value);
        if m.is_nan() || m < margin {
            margin = m;
            at = format!("alpha={} q={} z={}", r.alpha, r.q, r.z);
        }
        // independent series with the oracle Gamma
        let mut s = CompensatedSum::new();
        for k in 0..600 {
            s.add((-r.z).powi(k) / oracle_gamma(r.alpha * k as f64 + 1.0, r.q));
        }
        oracle.see((r.value - s.value()).abs(), || format!("alpha={} q={} z={}", r.alpha, r.q, r.z));
    }
    report["criterion_4"] = json!({ "rows": rows.len(), "min_margin": margin, "at": at, "max_oracle_error": oracle.value });
    let text = format!("{} rows, min margin {margin:.3e} at {at} (limit 1e-12); {}", rows.len(), oracle.describe("series oracle error"));
    if rows.len() == 300 && margin >= 1e-12 && oracle.ok() {
        Ok(text)
    } else {
        Err(text)
    }
}

fn criterion_5(report: &mut Value) -> Outcome {
    let c = ctx(0.5);
    let rows = scan_tuples(&default_range_grid(), &c, &EvalStrategy::default());
    let s = ScanSummary::from_rows(&rows);
    report["criterion_5"] = json!({
        "summary": summary_json(&s),
        "rows": rows.iter().map(|r| json!([r.alpha, r.q, r.z, r.value, r.lower, r.upper, r.margin_lower, r.margin_upper])).collect::<Vec<_>>(),
    });
    let text = format!(
        "margins for {}/{} rows; lower pass {:.3}, upper pass {:.3}; worst margins {:.3e} / {:.3e}; {} violations, max slack factor {:.3} (limit 10)",
        s.margins_computed,
        s.two_sided_rows,
        s.lower_pass_rate,
        s.upper_pass_rate,
        s.worst_margin_lower,
        s.worst_margin_upper,
        s.violations.len(),
        s.max_slack_factor
    );
    if s.two_sided_rows == 300 && s.margins_computed == s.two_sided_rows && s.error_rows.is_empty() && s.max_slack_factor <= 10.0 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn criterion_6(report: &mut Value) -> Outcome {
    let c = ctx(0.5);
    let rows = scan_tuples(&default_decay_grid(), &c, &EvalStrategy::default());
    let s = ScanSummary::from_rows(&rows);
    let mut oracle = Worst::new(1e-9);
    let mut bad = Vec::new();
    for r in &rows {
        if let Some(e) = &r.error {
            bad.push(format!("alpha={} beta={} q={} z={}: {e}", r.alpha, r.beta, r.q, r.z));
            continue;
        }
        if !r.scaled_value().is_finite() {
            bad.push(format!("alpha={} beta={} q={} z={}: (1+z)|e| not finite", r.alpha, r.beta, r.q, r.z));
        }
        if !r.empirical_constant && !r.holds_decay {
            bad.push(format!("alpha={} beta={} q={} z={}: decay bound violated", r.alpha, r.beta, r.q, r.z));
        }
        if r.empirical_constant && !r.decay_bound.is_finite() {
            bad.push(format!("alpha={} beta={} q={} z={}: empirical constant missing", r.alpha, r.beta, r.q, r.z));
        }
        let p = MLParams::new(r.alpha, r.beta).unwrap();
        let exact = q_mittag_leffler_continued(&p, -r.z, &ctx(r.q)).map_err(|e| e.to_string())?.value;
        oracle.see((r.value - exact).abs(), || format!("alpha={} beta={} q={} z={}", r.alpha, r.beta, r.q, r.z));
    }
    report["criterion_6"] = json!({
        "rows": rows.len(),
        "decay_pass_rate": s.decay_pass_rate,
        "empirical_constant_rows": s.empirical_constant_rows.len(),
        "rows_detail": rows.iter().map(|r| json!([r.alpha, r.beta, r.q, r.z, r.value, r.decay_bound, r.empirical_constant])).collect::<Vec<_>>(),
    });
    let text = format!(
        "{} rows, {} with empirical constant, decay pass rate {:.3}; {}",
        rows.len(),
        s.empirical_constant_rows.len(),
        s.decay_pass_rate,
        oracle.describe("partial-fraction oracle error")
    );
    if bad.is_empty() && rows.len() == 270 && oracle.ok() {
        Ok(text)
    } else {
        Err(format!("{text}; {}", bad.first().cloned().unwrap_or_default()))
    }
}

fn criterion_7(estimates: &mut Vec<Value>) -> Outcome {
    let c = ctx(0.5);
    let strat = EvalStrategy::default();
    let model = SpectralModel::new(vec![0.0], 1.0).unwrap();
    let grid = TimeGrid::new(1.0, &c).unwrap();
    let phi: CoefficientField = vec![1.0].into();
    let mut worst = Worst::new(1e-6);
    for alpha in [0.5, 0.9] {
        for (label, source) in [("f=0", Source::Zero), ("f=const", Source::Constant(vec![0.7].into()))] {
            let b = direct_solve_suborder(alpha, &phi, &source, &model, &grid, &c, &strat).map_err(|e| e.to_string())?;
            let r = residual_check(&b, &c).map_err(|e| e.to_string())?;
            worst.see(r, || format!("alpha={alpha} {label}"));
            let est = energy_estimate_report(&b, &phi, None, &source, 1.0).map_err(|e| e.to_string())?;
            estimates.push(json!({ "config": format!("suborder alpha={alpha} {label}"), "estimate": est }));
        }
    }
    verdict(&[(&worst, "max residual")])
}

fn criterion_8(estimates: &mut Vec<Value>) -> Outcome {
    let c = ctx(0.5);
    let strat = EvalStrategy::default();
    let model = SpectralModel::new(vec![0.0], 1.0).unwrap();
    let grid = TimeGrid::new(1.0, &c).unwrap();
    let zero = CoefficientField::zeros(1);
    let rho: CoefficientField = vec![0.8].into();
    let b = direct_solve_superorder(1.5, &zero, &rho, &Source::Zero, &model, &grid, &c, &strat).map_err(|e| e.to_string())?;
    let mut residual = Worst::new(1e-5);
    residual.see(residual_check(&b, &c).map_err(|e| e.to_string())?, String::new);
    let origin = b.at_origin()[0];
    estimates.push(json!({
        "config": "superorder alpha=1.5 phi=0 rho=0.8",
        "estimate": energy_estimate_report(&b, &zero, Some(&rho), &Source::Zero, 1.0).map_err(|e| e.to_string())?,
    }));

    let phi: CoefficientField = vec![1.0].into();
    let b = direct_solve_superorder(1.5, &phi, &zero, &Source::Zero, &model, &grid, &c, &strat).map_err(|e| e.to_string())?;
    let mut first = Worst::new(1e-10);
    for (j, (t, u)) in grid.nodes().iter().zip(b.trace(0)).enumerate() {
        // φ e_{1.5,1}(-t^1.5) summed directly with the oracle Gamma
        let z = -t.powf(1.5);
        let mut s = CompensatedSum::new();
        if z.abs() * 0.5f64.powf(1.5) < 0.9 {
            for k in 0..800 {
                s.add(z.powi(k) / oracle_gamma(1.5 * k as f64 + 1.0, 0.5));
            }
            first.see((u - s.value()).abs(), || format!("node {j}"));
        }
    }
    estimates.push(json!({
        "config": "superorder alpha=1.5 phi=1 rho=0",
        "estimate": energy_estimate_report(&b, &phi, Some(&zero), &Source::Zero, 1.0).map_err(|e| e.to_string())?,
    }));
    let text = format!("{}; u(0) = {origin}; {}", residual.describe("residual"), first.describe("first-term error"));
    if residual.ok() && origin == 0.0 && first.ok() {
        Ok(text)
    } else {
        Err(text)
    }
}

fn criterion_9(estimates: &mut Vec<Value>) -> Outcome {
    let c = ctx(0.5);
    let strat = EvalStrategy::default();
    let model = SpectralModel::dirichlet_sine(16, 1.0).unwrap();
    let (alpha, q) = (0.5, 0.5);
    let top = model.eigenvalues()[15] + 1.0;
    let horizon = (0.8 / (top * (1.0f64 - q).powf(alpha))).powf(1.0 / alpha);
    assert!(top * horizon.powf(alpha) * (1.0f64 - q).powf(alpha) <= 0.8 + 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(20240917);
    let mut draw = || -> CoefficientField {
        (1..=16).map(|k| rng.random_range(-1.0..1.0) * (k as f64).powi(-3)).collect::<Vec<_>>().into()
    };
    let (phi, rho) = (draw(), draw());
    let (inv, f) = inverse_solve(alpha, &phi, &rho, horizon, &model, &c, &strat).map_err(|e| e.to_string())?;
    let mut ends = Worst::new(1e-12);
    for i in 0..16 {
        ends.see((inv.at_origin()[i] - phi.get(i)).abs(), || format!("u(0) mode {}", i + 1));
        ends.see((inv.at_horizon()[i] - rho.get(i)).abs(), || format!("u(T) mode {}", i + 1));
    }
    let source = Source::Constant(f);
    let direct = direct_solve_suborder(alpha, &phi, &source, &model, &inv.grid, &c, &strat).map_err(|e| e.to_string())?;
    direct.ensure_all_ok().map_err(|e| e.to_string())?;
    let mut trip = Worst::new(1e-6);
    for i in 0..16 {
        trip.see((direct.at_horizon()[i] - rho.get(i)).abs(), || format!("mode {}", i + 1));
    }
    estimates.push(json!({
        "config": format!("inverse dirichlet-sine K=16 m=1 alpha=0.5 q=0.5 T={horizon:e}"),
        "estimate": energy_estimate_report(&inv, &phi, Some(&rho), &source, 1.0).map_err(|e| e.to_string())?,
    }));
    verdict(&[(&ends, "endpoint error"), (&trip, "round-trip error")]).map(|t| format!("T = {horizon:.4e}; {t}"))
}

fn criterion_10(estimates: &[Value]) -> Outcome {
    let mut n = 0;
    for e in estimates {
        let est = &e["estimate"];
        for key in ["lhs", "rhs", "ratio"] {
            if !est[key].as_f64().is_some_and(f64::is_finite) {
                return Err(format!("{}: {key} is not finite", e["config"]));
            }
        }
        n += 1;
    }
    let ratios: Vec<String> = estimates.iter().map(|e| format!("{:.3}", e["estimate"]["ratio"].as_f64().unwrap())).collect();
    if n == 7 {
        Ok(format!("{n} configurations, ratios [{}]", ratios.join(", ")))
    } else {
        Err(format!("expected 7 configurations, got {n}"))
    }
}

fn criterion_11() -> Outcome {
    let a = serde_json::to_vec_pretty(&run_invariants()).unwrap();
    let b = serde_json::to_vec_pretty(&run_invariants()).unwrap();
    let report = run_invariants();
    let text = format!("{} bytes, {} checks ({} failed)", a.len(), report.checks.len(), report.failed);
    if a == b {
        Ok(text)
    } else {
        Err(format!("reports differ; {text}"))
    }
}

fn main() {
    let mut report = json!({});
    let mut estimates = Vec::new();
    let mut failures = 0;
    let mut run = |id: usize, budget: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let over = budget.is_some_and(|b| took > b);
        let (ok, text) = match outcome {
            Ok(t) if !over => (true, t),
            Ok(t) => (false, format!("{t}; over the {:?} budget", budget.unwrap())),
            Err(t) => (false, t),
        };
        if !ok {
            failures += 1;
        }
        println!("criterion {id:>2} {} [{:.2?}] {text}", if ok { "PASS" } else { "FAIL" }, took);
    };
    let secs = |s: u64| Some(Duration::from_secs(s));
    run(1, secs(1), &mut criterion_1);
    run(2, secs(1), &mut criterion_2);
    run(3, secs(5), &mut criterion_3);
    run(4, secs(10), &mut || criterion_4(&mut report));
    run(5, secs(10), &mut || criterion_5(&mut report));
    run(6, secs(10), &mut || criterion_6(&mut report));
    run(7, secs(30), &mut || criterion_7(&mut estimates));
    run(8, None, &mut || criterion_8(&mut estimates));
    run(9, secs(60), &mut || criterion_9(&mut estimates));
    run(10, None, &mut || criterion_10(&estimates));
    run(11, None, &mut criterion_11);

    report["estimates"] = Value::Array(estimates);
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_report.json");
    match std::fs::write(&path, serde_json::to_vec_pretty(&report).unwrap()) {
        Ok(()) => println!("report: {}", path.display()),
        Err(e) => {
            println!("could not write {}: {e}", path.display());
            failures += 1;
        }
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
