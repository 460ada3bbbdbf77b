//! Subcommand implementations. Each one validates its settings before any
//! computation starts.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use qfrac::bounds::{bounds_scan, default_grid, log_space, scan_tuples, write_report_csv, BoundReport, ScanSummary};
use qfrac::qcore::{
    q_factorial, q_gamma, q_number, q_pochhammer, q_pochhammer_inf, q_pochhammer_real, QContext, SeriesResult, Status,
};
use qfrac::qspecial::{q_exp, q_mittag_leffler, translated_ml, EvalStrategy, MLParams};
use qfrac::spectral::{
    direct_solve_suborder, direct_solve_superorder, energy_estimate_report, inverse_solve, write_coefficients_csv,
    write_solution_csv, CoefficientField, SolutionBundle, SolveReport, Source, SpectralModel, TimeGrid,
};
use qfrac::verify::{run_invariants, run_selftest, VerifyReport};
use serde::Serialize;

use crate::config::{CommandName, Format, Function, Settings};
use crate::error::{compute, io, write_failed, CliError, CliResult};

const DEFAULT_MASS: f64 = 1.0;
const DEFAULT_ESTIMATE_ORDER: f64 = 1.0;
const BUILTIN_SINE: &str = "builtin:dirichlet-sine";

pub fn run(command: CommandName, s: &Settings) -> CliResult<()> {
    match command {
        CommandName::Eval => eval(s),
        CommandName::BoundsScan => scan(s),
        CommandName::SolveDirect => solve_direct(s),
        CommandName::SolveInverse => solve_inverse(s),
        CommandName::Verify => verify(run_invariants(), s),
        CommandName::Selftest => verify(run_selftest(), s),
    }
}

fn require<T: Copy>(value: Option<T>, flag: &str, command: CommandName) -> CliResult<T> {
    value.ok_or_else(|| CliError::config(command.as_str(), format!("{} requires --{flag}", command.as_str())))
}

fn context(q: f64, s: &Settings, command: CommandName) -> CliResult<QContext> {
    let bad = |e: qfrac::Error| CliError::config(command.as_str(), e.to_string());
    let mut ctx = QContext::new(q).map_err(bad)?;
    if let Some(eps) = s.eps_series {
        ctx = ctx.with_eps_series(eps).map_err(bad)?;
    }
    if let Some(eps) = s.eps_product {
        ctx = ctx.with_eps_product(eps).map_err(bad)?;
    }
    if let Some(n) = s.max_terms {
        ctx = ctx.with_max_terms(n).map_err(bad)?;
    }
    Ok(ctx)
}

fn strategy(s: &Settings) -> EvalStrategy {
    let base = match s.accelerate {
        Some(t) if !t.is_on() => EvalStrategy::series_only(),
        _ => EvalStrategy::default(),
    };
    base.with_continuation(s.continuation.is_none_or(|t| t.is_on()))
}

/// Csv needs a file; without `--out` the default is json on stdout.
fn output_format(s: &Settings, command: CommandName) -> CliResult<Format> {
    match (s.format, &s.out) {
        (Some(Format::Csv), None) => {
            Err(CliError::config(command.as_str(), format!("{} --format csv requires --out", command.as_str())))
        }
        (Some(f), _) => Ok(f),
        (None, Some(_)) => Ok(Format::Csv),
        (None, None) => Ok(Format::Json),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io {
        module: "cli",
        operation: "write_output",
        source: qfrac::Error::Io(format!("{}: {e}", path.display())),
    })
}

/// The file at `path`, or stdout.
fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> CliResult<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| write_failed(e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(write_failed)
}

/// `out` with `suffix` appended to the file name.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(out.as_os_str());
    s.push(suffix);
    s.into()
}

#[derive(Debug, Serialize)]
struct EvalRow {
    arg: f64,
    value: f64,
    terms_used: Option<usize>,
    tail_estimate: Option<f64>,
    status: Option<Status>,
}

impl EvalRow {
    fn exact(arg: f64, value: f64) -> Self {
        EvalRow { arg, value, terms_used: None, tail_estimate: None, status: None }
    }

    fn series(arg: f64, r: SeriesResult) -> Self {
        EvalRow {
            arg,
            value: r.value,
            terms_used: Some(r.terms_used),
            tail_estimate: Some(r.tail_estimate),
            status: Some(r.status),
        }
    }
}

#[derive(Debug, Serialize)]
struct EvalReport {
    #[serde(rename = "fn")]
    function: &'static str,
    q: f64,
    rows: Vec<EvalRow>,
}

fn eval(s: &Settings) -> CliResult<()> {
    let cmd = CommandName::Eval;
    let function = require(s.function, "fn", cmd)?;
    let q = require(s.q, "q", cmd)?;
    let ctx = context(q, s, cmd)?;
    let strat = strategy(s);
    let x = || require(s.x, "x", cmd);
    let n = || require(s.n, "n", cmd);
    let ml_params = || -> CliResult<MLParams> {
        let alpha = require(s.alpha, "alpha", cmd)?;
        MLParams::new(alpha, s.beta.unwrap_or(1.0)).map_err(|e| CliError::config(cmd.as_str(), e.to_string()))
    };

    let rows = match function {
        Function::Qnumber => vec![EvalRow::exact(x()?, q_number(x()?, &ctx))],
        Function::Qpochhammer => vec![EvalRow::exact(x()?, q_pochhammer(x()?, n()?, &ctx))],
        Function::QpochhammerInf => vec![EvalRow::series(x()?, q_pochhammer_inf(x()?, &ctx))],
        Function::QpochhammerReal => {
            let nu = require(s.nu, "nu", cmd)?;
            let r = q_pochhammer_real(x()?, nu, &ctx).map_err(compute("qcore", "q_pochhammer_real"))?;
            vec![EvalRow::series(x()?, r)]
        }
        Function::Qgamma => {
            vec![EvalRow::exact(x()?, q_gamma(x()?, &ctx).map_err(compute("qcore", "q_gamma"))?)]
        }
        Function::Qfactorial => vec![EvalRow::exact(n()? as f64, q_factorial(n()?, &ctx))],
        Function::Qexp => vec![EvalRow::series(x()?, q_exp(x()?, &ctx).map_err(compute("qspecial", "q_exp"))?)],
        Function::Ml => {
            let p = ml_params()?;
            let zs = s.z.clone().ok_or_else(|| CliError::config(cmd.as_str(), "eval --fn ml requires --z"))?;
            let mut rows = Vec::with_capacity(zs.len());
            for z in zs {
                let r = q_mittag_leffler(&p, z, &ctx, &strat).map_err(compute("qspecial", "q_mittag_leffler"))?;
                rows.push(EvalRow::series(z, r));
            }
            rows
        }
        Function::TranslatedMl => {
            let p = ml_params()?;
            let t = require(s.t, "t", cmd)?;
            let shift = require(s.s, "s", cmd)?;
            let r = translated_ml(&p, x()?, t, shift, &ctx, &strat).map_err(compute("qspecial", "translated_ml"))?;
            vec![EvalRow::series(x()?, r)]
        }
    };

    let report = EvalReport { function: function.as_str(), q, rows };
    match s.format {
        Some(Format::Json) => write_json(&report, s.out.as_deref()),
        Some(Format::Csv) => write_eval_csv(&report, s.out.as_deref()),
        None => {
            let mut w = sink(s.out.as_deref())?;
            for r in &report.rows {
                writeln!(w, "{}", r.value).map_err(write_failed)?;
            }
            w.flush().map_err(write_failed)
        }
    }
}

fn write_eval_csv(report: &EvalReport, path: Option<&Path>) -> CliResult<()> {
    fn opt<T: ToString>(v: Option<T>) -> String {
        v.map(|v| v.to_string()).unwrap_or_default()
    }
    let mut w = sink(path)?;
    let mut text = String::from("fn,q,arg,value,terms_used,tail_estimate,status\n");
    for r in &report.rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            report.function,
            report.q,
            r.arg,
            r.value,
            opt(r.terms_used),
            opt(r.tail_estimate),
            opt(r.status.map(|s| format!("{s:?}"))),
        ));
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(write_failed)
}

#[derive(Serialize)]
struct ScanDocument<'a> {
    summary: &'a ScanSummary,
    rows: &'a [BoundReport],
}

/// Default grid unless `--alpha` or `--z` narrows the scan to one
/// `(α, β, q)` slice.
fn scan(s: &Settings) -> CliResult<()> {
    let cmd = CommandName::BoundsScan;
    let format = output_format(s, cmd)?;
    let strat = strategy(s);
    let rows = if s.alpha.is_some() || s.z.is_some() {
        let alpha = require(s.alpha, "alpha", cmd)?;
        let q = require(s.q, "q", cmd)?;
        let beta = s.beta.unwrap_or(1.0);
        let ctx = context(q, s, cmd)?;
        let zs = match &s.z {
            Some(zs) => zs.clone(),
            None => {
                let edge = 0.95 * (1.0 - q).powf(-alpha);
                log_space(edge * 1e-3, edge, 20)
            }
        };
        bounds_scan(&[alpha], &[beta], &[q], &zs, &ctx, &strat)
    } else {
        let ctx = context(s.q.unwrap_or(0.5), s, cmd)?;
        scan_tuples(&default_grid(), &ctx, &strat)
    };
    let summary = ScanSummary::from_rows(&rows);

    match format {
        Format::Json => write_json(&ScanDocument { summary: &summary, rows: &rows }, s.out.as_deref()),
        Format::Csv => {
            let out = s.out.as_deref().expect("csv output has a path");
            let mut w = create(out)?;
            write_report_csv(&rows, &mut w).map_err(io("bounds", "write_report_csv"))?;
            w.flush().map_err(write_failed)?;
            write_json(&summary, Some(&sibling(out, ".summary.json")))
        }
    }
}

/// Problem data shared by both solvers.
struct Problem {
    alpha: f64,
    horizon: f64,
    ctx: QContext,
    strat: EvalStrategy,
    model: SpectralModel,
    phi: CoefficientField,
    format: Format,
    order: f64,
}

fn load_field(path: &Path) -> CliResult<CoefficientField> {
    CoefficientField::from_csv_file(path).map_err(io("spectral", "CoefficientField::from_csv_file"))
}

fn load_model(s: &Settings, command: CommandName) -> CliResult<SpectralModel> {
    let mass = s.mass.unwrap_or(DEFAULT_MASS);
    let spec = s.model.as_deref().unwrap_or(BUILTIN_SINE);
    let bad = |e: qfrac::Error| CliError::config(command.as_str(), e.to_string());
    if spec == BUILTIN_SINE || spec == "dirichlet-sine" {
        let modes = require(s.modes, "modes", command)?;
        SpectralModel::dirichlet_sine(modes, mass).map_err(bad)
    } else if let Some(path) = spec.strip_prefix("file:") {
        let model = SpectralModel::from_eigenvalue_file(Path::new(path), mass)
            .map_err(io("spectral", "SpectralModel::from_eigenvalue_file"))?;
        match s.modes {
            Some(k) if k != model.modes() => Err(CliError::config(
                command.as_str(),
                format!("--modes {k} disagrees with the {} eigenvalues in {path}", model.modes()),
            )),
            _ => Ok(model),
        }
    } else {
        Err(CliError::config(
            command.as_str(),
            format!("unknown model `{spec}`; expected {BUILTIN_SINE} or file:PATH"),
        ))
    }
}

fn check_len(field: &CoefficientField, model: &SpectralModel, flag: &str, command: CommandName) -> CliResult<()> {
    if field.len() != model.modes() {
        return Err(CliError::config(
            command.as_str(),
            format!("--{flag} has {} coefficients but the model has {} modes", field.len(), model.modes()),
        ));
    }
    Ok(())
}

fn problem(s: &Settings, command: CommandName, alpha_range: (f64, f64)) -> CliResult<Problem> {
    let format = output_format(s, command)?;
    let q = require(s.q, "q", command)?;
    let alpha = require(s.alpha, "alpha", command)?;
    let horizon = require(s.horizon, "T", command)?;
    let phi_path = s.phi.as_deref().ok_or_else(|| {
        CliError::config(command.as_str(), format!("{} requires --phi", command.as_str()))
    })?;
    let (lo, hi) = alpha_range;
    if !(alpha > lo && alpha < hi) {
        return Err(CliError::config(command.as_str(), format!("--alpha must lie in ({lo}, {hi}), got {alpha}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CliError::config(command.as_str(), format!("--T must be positive, got {horizon}")));
    }
    let ctx = context(q, s, command)?;
    let model = load_model(s, command)?;
    let phi = load_field(phi_path)?;
    check_len(&phi, &model, "phi", command)?;
    Ok(Problem {
        alpha,
        horizon,
        ctx,
        strat: strategy(s),
        model,
        phi,
        format,
        order: s.d.unwrap_or(DEFAULT_ESTIMATE_ORDER),
    })
}

#[derive(Serialize)]
struct ModeTrace<'a> {
    mode: usize,
    t: &'a [f64],
    u: &'a [f64],
}

#[derive(Serialize)]
struct SolveDocument<'a> {
    report: &'a SolveReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<&'a [f64]>,
    solution: Vec<ModeTrace<'a>>,
}

/// Writes the solution, its diagnostics and the recovered source (inverse
/// only), then reports failed modes as a compute error.
fn emit_solution(
    bundle: &SolutionBundle,
    recovered: Option<&CoefficientField>,
    estimate_rho: Option<&CoefficientField>,
    p: &Problem,
    s: &Settings,
    operation: &'static str,
) -> CliResult<()> {
    let estimate = if bundle.failed_modes().is_empty() {
        Some(
            energy_estimate_report(bundle, &p.phi, estimate_rho, &bundle.source, p.order)
                .map_err(compute("spectral", "energy_estimate_report"))?,
        )
    } else {
        None
    };
    let report = SolveReport::new(bundle, estimate);

    match p.format {
        Format::Json => {
            let nodes = bundle.grid.nodes();
            let solution =
                bundle.traces.iter().enumerate().map(|(i, u)| ModeTrace { mode: i + 1, t: nodes, u }).collect();
            let doc = SolveDocument { report: &report, source: recovered.map(|f| f.values()), solution };
            write_json(&doc, s.out.as_deref())?;
        }
        Format::Csv => {
            let out = s.out.as_deref().expect("csv output has a path");
            let mut w = create(out)?;
            write_solution_csv(bundle, &mut w).map_err(io("spectral", "write_solution_csv"))?;
            w.flush().map_err(write_failed)?;
            if let Some(f) = recovered {
                let mut w = create(&sibling(out, ".source.csv"))?;
                write_coefficients_csv(f, &mut w).map_err(io("spectral", "write_coefficients_csv"))?;
                w.flush().map_err(write_failed)?;
            }
            write_json(&report, Some(&sibling(out, ".diagnostics.json")))?;
        }
    }
    bundle.ensure_all_ok().map_err(compute("spectral", operation))
}

fn solve_direct(s: &Settings) -> CliResult<()> {
    let cmd = CommandName::SolveDirect;
    let p = problem(s, cmd, (0.0, 2.0))?;
    let superorder = p.alpha > 1.0;
    let rho = match (&s.rho, superorder) {
        (Some(path), true) => Some(load_field(path)?),
        (None, true) => Some(CoefficientField::zeros(p.model.modes())),
        (Some(_), false) => {
            return Err(CliError::config(cmd.as_str(), "--rho (initial velocity) only applies when --alpha > 1"))
        }
        (None, false) => None,
    };
    if let Some(rho) = &rho {
        check_len(rho, &p.model, "rho", cmd)?;
    }
    let source = match &s.source {
        Some(path) => {
            let f = load_field(path)?;
            check_len(&f, &p.model, "source", cmd)?;
            Source::Constant(f)
        }
        None => Source::Zero,
    };
    let grid = TimeGrid::new(p.horizon, &p.ctx).map_err(compute("spectral", "TimeGrid::new"))?;
    let (bundle, operation) = match &rho {
        Some(rho) => (
            direct_solve_superorder(p.alpha, &p.phi, rho, &source, &p.model, &grid, &p.ctx, &p.strat)
                .map_err(compute("spectral", "direct_solve_superorder"))?,
            "direct_solve_superorder",
        ),
        None => (
            direct_solve_suborder(p.alpha, &p.phi, &source, &p.model, &grid, &p.ctx, &p.strat)
                .map_err(compute("spectral", "direct_solve_suborder"))?,
            "direct_solve_suborder",
        ),
    };
    emit_solution(&bundle, None, rho.as_ref(), &p, s, operation)
}

fn solve_inverse(s: &Settings) -> CliResult<()> {
    let cmd = CommandName::SolveInverse;
    if s.source.is_some() {
        return Err(CliError::config(cmd.as_str(), "solve-inverse recovers the source; --source is not accepted"));
    }
    let p = problem(s, cmd, (0.0, 1.0))?;
    let rho_path = s.rho.as_deref().ok_or_else(|| CliError::config(cmd.as_str(), "solve-inverse requires --rho"))?;
    let rho = load_field(rho_path)?;
    check_len(&rho, &p.model, "rho", cmd)?;
    let (bundle, f) = inverse_solve(p.alpha, &p.phi, &rho, p.horizon, &p.model, &p.ctx, &p.strat)
        .map_err(compute("spectral", "inverse_solve"))?;
    emit_solution(&bundle, Some(&f), Some(&rho), &p, s, "inverse_solve")
}

fn verify(report: VerifyReport, s: &Settings) -> CliResult<()> {
    match s.format {
        Some(Format::Csv) => write_verify_csv(&report, s.out.as_deref())?,
        _ => write_json(&report, s.out.as_deref())?,
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::Verification { suite: report.suite, failed: report.failed, total: report.checks.len() })
    }
}

fn write_verify_csv(report: &VerifyReport, path: Option<&Path>) -> CliResult<()> {
    let mut text = String::from("module,check,cases,observed,limit,sense,margin,passed\n");
    for c in &report.checks {
        let sense = serde_json::to_value(c.sense).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.module, c.name, c.cases, c.observed, c.limit, sense, c.margin, c.passed
        ));
    }
    let mut w = sink(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(write_failed)
}
