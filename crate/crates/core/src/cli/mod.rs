//! Command-line front end: problem-file ingestion, one subcommand per
//! pipeline, worked-example presets, and CSV/JSON report emission.
//!
//! Exit codes: 0 on success, 2 on input validation errors, 3 on numeric
//! failures. Nothing is written on a nonzero exit except the message on
//! standard error.

pub mod problem;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::exprdsl::{Env, Expr};
use crate::fracops::{
    apply, apply_oracle, FracError, FracOrder, Grid, GridFunction, OperatorKind,
};
use crate::noether::{
    check_invariance_numeric, invariance_residual, noether_residual, InvarianceReport,
    NoetherError, SymmetryGenerators,
};
use crate::optctrl::{
    augmented_functional, autonomous_invariant, cost, hamiltonian, hamiltonian_noether_residual,
    pontryagin_residual, solve_lq, ControlGenerators, ControlProblem, OptCtrlError,
    PontryaginTriple,
};
use crate::variational::{
    el_residual, solve_ritz, Extremal, InitialGuess, VariationalError, VariationalProblem,
};

use problem::ProblemFile;
use report::{Format, Report};

/// Error carrying the process exit code: validation problems exit 2,
/// numeric failures exit 3.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<FracError> for CliError {
    fn from(e: FracError) -> CliError {
        match &e {
            FracError::InvalidGrid(_) | FracError::InvalidOrder(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<VariationalError> for CliError {
    fn from(e: VariationalError) -> CliError {
        match &e {
            VariationalError::BadProblem(_) | VariationalError::MissingRightBoundary => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<NoetherError> for CliError {
    fn from(e: NoetherError) -> CliError {
        match e {
            NoetherError::BadGenerators(_) | NoetherError::UnsupportedTimeTransform(_) => {
                CliError::Validation(e.to_string())
            }
            NoetherError::Variational(inner) => CliError::from(inner),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<OptCtrlError> for CliError {
    fn from(e: OptCtrlError) -> CliError {
        match &e {
            OptCtrlError::BadProblem(_)
            | OptCtrlError::BadGenerators(_)
            | OptCtrlError::NotLq(_)
            | OptCtrlError::GridTooLarge { .. }
            | OptCtrlError::NotAutonomous(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "frac-noether",
    version,
    about = "Fractional variational calculus, conservation laws, and optimal control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a fractional operator to an expression in t
    Deriv(DerivArgs),
    /// Solve a variational problem by the direct Ritz method
    SolveCv(FileArgs),
    /// Check invariance of the action under given generators
    CheckInvariance(FileArgs),
    /// Evaluate the fractional Noether conservation-law residual
    CheckNoether(FileArgs),
    /// Solve a linear-quadratic fractional optimal control problem
    SolveOc(FileArgs),
    /// Evaluate the Hamiltonian-form Noether residual along an LQ solve
    CheckNoetherOc(FileArgs),
    /// Run a bundled worked example (example1 or example2)
    Examples(ExamplesArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// Output path (defaults to the problem file's output.path, else stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Suppress informational messages on standard error
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct DerivArgs {
    /// Problem file whose lagrangian field holds the expression in t
    problem: Option<PathBuf>,
    /// Inline expression in the variable t
    #[arg(long)]
    expr: Option<String>,
    /// Operator kind (kebab-case, e.g. left-caputo, riesz-caputo)
    #[arg(long)]
    kind: String,
    /// Fractional order in (0, 1]
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of grid nodes
    #[arg(long = "N")]
    n: Option<usize>,
    /// Left endpoint (inline mode)
    #[arg(long)]
    a: Option<f64>,
    /// Right endpoint (inline mode)
    #[arg(long)]
    b: Option<f64>,
    /// Also evaluate the adaptive quadrature oracle to this tolerance
    #[arg(long)]
    oracle: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct FileArgs {
    /// JSON problem file
    problem: PathBuf,
    /// Override the problem file's alpha
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the grid sizes (comma-separated for a refinement study)
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ExamplesArgs {
    /// Preset name: example1 (variational) or example2 (control)
    name: String,
    /// Fractional order in (0, 1]
    #[arg(long)]
    alpha: f64,
    /// Grid sizes (comma-separated for a refinement study)
    #[arg(long = "N", value_delimiter = ',', default_value = "129")]
    n: Vec<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

/// Parses the command line, runs the selected command, and returns the
/// process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Deriv(args) => cmd_deriv(args),
        Command::SolveCv(args) => cmd_solve_cv(args),
        Command::CheckInvariance(args) => cmd_check_invariance(args),
        Command::CheckNoether(args) => cmd_check_noether(args),
        Command::SolveOc(args) => cmd_solve_oc(args),
        Command::CheckNoetherOc(args) => cmd_check_noether_oc(args),
        Command::Examples(args) => cmd_examples(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

/// Resolves output destination and format from flags and the problem
/// file's optional output section.
fn resolve_output(
    output: &OutputArgs,
    file: Option<&ProblemFile>,
) -> Result<(Option<PathBuf>, Format), CliError> {
    let section = file.and_then(|f| f.output.as_ref());
    let path = output
        .out
        .clone()
        .or_else(|| section.and_then(|s| s.path.as_ref().map(PathBuf::from)));
    let format_name = output
        .format
        .clone()
        .or_else(|| section.and_then(|s| s.format.clone()));
    let format = match format_name {
        Some(name) => Format::parse(&name)?,
        None => match &path {
            Some(p) if p.extension().is_some_and(|e| e == "json") => Format::Json,
            _ => Format::Csv,
        },
    };
    Ok((path, format))
}

fn cmd_deriv(args: &DerivArgs) -> Result<(), CliError> {
    let kind = OperatorKind::parse_name(&args.kind).ok_or_else(|| {
        let names: Vec<&str> = OperatorKind::ALL.iter().map(|k| k.name()).collect();
        CliError::Validation(format!(
            "unknown operator kind `{}` (expected one of: {})",
            args.kind,
            names.join(", ")
        ))
    })?;

    let file = match &args.problem {
        Some(path) => Some(ProblemFile::load(path)?),
        None => None,
    };
    let (expr_text, a, b, alpha, n) = match (&args.expr, &file) {
        (Some(expr), _) => (
            expr.clone(),
            args.a.unwrap_or(0.0),
            args.b.unwrap_or(1.0),
            args.alpha
                .ok_or_else(|| CliError::Validation("--alpha is required".into()))?,
            args.n
                .ok_or_else(|| CliError::Validation("--N is required".into()))?,
        ),
        (None, Some(file)) => (
            file.lagrangian.clone(),
            args.a.unwrap_or(file.interval.a),
            args.b.unwrap_or(file.interval.b),
            args.alpha.unwrap_or(file.alpha),
            args.n.unwrap_or_else(|| file.n_list(None)[0]),
        ),
        (None, None) => {
            return Err(CliError::Validation(
                "pass --expr or a problem file".into(),
            ));
        }
    };

    let vars: std::collections::HashSet<String> = std::iter::once("t".to_string()).collect();
    let expr = Expr::parse_with_vars(&expr_text, &vars)
        .map_err(|e| CliError::Validation(format!("in expression `{expr_text}`: {e}")))?;
    let grid = Grid::new(a, b, n)?;
    let order = FracOrder::new(alpha)?;

    let mut values = Vec::with_capacity(n);
    for t in grid.nodes() {
        values.push(
            expr.eval_single("t", t)
                .map_err(|e| CliError::Numeric(format!("evaluating at t={t}: {e}")))?,
        );
    }
    let f = GridFunction::from_values(grid, values)?;
    let result = apply(kind, order, &f)?;

    let mut rep = Report::new(grid);
    rep.push_series("f", &f);
    rep.push_series(kind.name(), &result);
    if let Some(tol) = args.oracle {
        let mut oracle_col = Vec::with_capacity(n);
        for t in grid.nodes() {
            match apply_oracle(kind, order, &expr, a, b, t, tol) {
                Ok(v) => oracle_col.push(Some(v)),
                Err(FracError::SingularPoint(..)) => oracle_col.push(None),
                Err(e) => return Err(e.into()),
            }
        }
        rep.push_column("oracle", oracle_col);
    }
    rep.meta("command", json!("deriv"));
    rep.meta("expr", json!(expr_text));
    rep.meta("kind", json!(kind.name()));
    rep.meta("alpha", json!(alpha));
    rep.meta("N", json!(n));
    rep.meta("interval", json!([a, b]));

    let (path, format) = resolve_output(&args.output, file.as_ref())?;
    rep.write(path.as_deref(), format, args.output.quiet)
}

/// Solves the variational problem on each requested grid; returns the
/// finest-grid extremal plus the residual-norm refinement trace.
fn run_ritz_study(
    file: &ProblemFile,
    ns: &[usize],
    alpha: Option<f64>,
) -> Result<(VariationalProblem, Extremal, Vec<GridFunction>, Vec<Value>), CliError> {
    let mut finest: Option<(VariationalProblem, Extremal, Vec<GridFunction>)> = None;
    let mut trace = Vec::new();
    for &n in ns {
        let prob = file.variational(n, alpha)?;
        let ext = solve_ritz(&prob, InitialGuess::Linear)?;
        let residuals = el_residual(&prob, &ext.q)?;
        let norms: Vec<f64> = residuals.iter().map(GridFunction::interior_l2).collect();
        trace.push(json!({
            "N": n,
            "el_residual_interior_l2": norms,
            "objective": ext.objective,
            "iterations": ext.iterations,
        }));
        finest = Some((prob, ext, residuals));
    }
    let (prob, ext, residuals) = finest.expect("at least one grid");
    Ok((prob, ext, residuals, trace))
}

fn cmd_solve_cv(args: &FileArgs) -> Result<(), CliError> {
    let file = ProblemFile::load(&args.problem)?;
    let ns = file.n_list(args.n.as_deref());
    let (prob, ext, residuals, trace) = run_ritz_study(&file, &ns, args.alpha)?;

    let mut rep = Report::new(prob.grid());
    for (c, qc) in ext.q.iter().enumerate() {
        rep.push_series(&format!("q{c}"), qc);
    }
    for (c, rc) in residuals.iter().enumerate() {
        rep.push_series(&format!("el_residual{c}"), rc);
    }
    rep.meta("command", json!("solve-cv"));
    rep.meta("alpha", json!(prob.order().alpha()));
    rep.meta("N", json!(prob.grid().len()));
    rep.meta("objective", json!(ext.objective));
    rep.meta("iterations", json!(ext.iterations));
    rep.meta("gradient_norm", json!(ext.gradient_norm));
    rep.meta("refinement", Value::Array(trace));

    let (path, format) = resolve_output(&args.output, Some(&file))?;
    rep.write(path.as_deref(), format, args.output.quiet)
}

fn cmd_check_invariance(args: &FileArgs) -> Result<(), CliError> {
    let file = ProblemFile::load(&args.problem)?;
    let ns = file.n_list(args.n.as_deref());
    let n = *ns.last().expect("non-empty N list");
    let prob = file.variational(n, args.alpha)?;
    let gen = file.symmetry_generators()?;
    let ext = solve_ritz(&prob, InitialGuess::Linear)?;

    const EPS_LIST: [f64; 6] = [1e-2, 5e-3, 2.5e-3, -1e-2, -5e-3, -2.5e-3];
    let verdict = check_invariance_numeric(&prob, &gen, &ext.q, &EPS_LIST)?;
    let residual = invariance_residual(&prob, &gen, &ext.q)?;

    let mut rep = Report::new(prob.grid());
    for (c, qc) in ext.q.iter().enumerate() {
        rep.push_series(&format!("q{c}"), qc);
    }
    rep.push_series("invariance_residual", &residual);
    rep.meta("command", json!("check-invariance"));
    rep.meta("alpha", json!(prob.order().alpha()));
    rep.meta("N", json!(n));
    rep.meta("invariant", json!(verdict.invariant()));
    match &verdict {
        InvarianceReport::VerticalSlope {
            slope,
            residual_integral,
            relative_mismatch,
            ..
        } => {
            rep.meta("path", json!("vertical"));
            rep.meta("slope", json!(slope));
            rep.meta("residual_integral", json!(residual_integral));
            rep.meta("relative_mismatch", json!(relative_mismatch));
        }
        InvarianceReport::TimeShift {
            pairs,
            max_relative_gap,
            ..
        } => {
            rep.meta("path", json!("time-shift"));
            rep.meta("max_relative_gap", json!(max_relative_gap));
            let pairs: Vec<Value> = pairs
                .iter()
                .map(|(eps, before, after)| json!([eps, before, after]))
                .collect();
            rep.meta("functional_pairs", Value::Array(pairs));
        }
    }

    let (path, format) = resolve_output(&args.output, Some(&file))?;
    rep.write(path.as_deref(), format, args.output.quiet)
}

fn cmd_check_noether(args: &FileArgs) -> Result<(), CliError> {
    let file = ProblemFile::load(&args.problem)?;
    let ns = file.n_list(args.n.as_deref());
    let gen = file.symmetry_generators()?;

    let mut finest = None;
    let mut trace = Vec::new();
    for &n in &ns {
        let prob = file.variational(n, args.alpha)?;
        let ext = solve_ritz(&prob, InitialGuess::Linear)?;
        let report = noether_residual(&prob, &gen, &ext.q)?;
        trace.push((n, report.interior_norm));
        finest = Some((prob, ext, report));
    }
    let (prob, ext, conservation) = finest.expect("at least one grid");

    let mut rep = Report::new(prob.grid());
    for (c, qc) in ext.q.iter().enumerate() {
        rep.push_series(&format!("q{c}"), qc);
    }
    rep.push_series("noether_residual", &conservation.residual);
    rep.meta("command", json!("check-noether"));
    rep.meta("alpha", json!(prob.order().alpha()));
    rep.meta("N", json!(prob.grid().len()));
    rep.meta("interior_l2", json!(conservation.interior_norm));
    push_trace_meta(&mut rep, &trace);

    let (path, format) = resolve_output(&args.output, Some(&file))?;
    rep.write(path.as_deref(), format, args.output.quiet)
}

/// Hamiltonian values along a Pontryagin triple.
fn hamiltonian_along(
    prob: &ControlProblem,
    trip: &PontryaginTriple,
) -> Result<GridFunction, CliError> {
    let h = hamiltonian(prob);
    let grid = prob.grid();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let mut env = Env::new();
        env.set("t", grid.node(i));
        for c in 0..prob.n_states() {
            env.set(&format!("q{c}"), trip.q[c].value(i));
            env.set(&format!("p{c}"), trip.p[c].value(i));
        }
        for e in 0..prob.n_controls() {
            env.set(&format!("u{e}"), trip.u[e].value(i));
        }
        values.push(
            h.eval(&env)
                .map_err(|e| CliError::Numeric(format!("evaluating H at node {i}: {e}")))?,
        );
    }
    Ok(GridFunction::from_values(grid, values)?)
}

fn push_triple(rep: &mut Report, prob: &ControlProblem, trip: &PontryaginTriple) {
    for (c, qc) in trip.q.iter().enumerate() {
        rep.push_series(&format!("q{c}"), qc);
    }
    for (e, ue) in trip.u.iter().enumerate() {
        rep.push_series(&format!("u{e}"), ue);
    }
    for (c, pc) in trip.p.iter().enumerate() {
        rep.push_series(&format!("p{c}"), pc);
    }
    let _ = prob;
}

fn push_trace_meta(rep: &mut Report, trace: &[(usize, f64)]) {
    let entries: Vec<Value> = trace
        .iter()
        .map(|(n, norm)| json!({"N": n, "interior_l2": norm}))
        .collect();
    rep.meta("refinement", Value::Array(entries));
    if trace.len() >= 2 {
        let ratios: Vec<Value> = trace
            .windows(2)
            .map(|w| json!(w[0].1 / w[1].1))
            .collect();
        rep.meta("refinement_ratios", Value::Array(ratios));
    }
}

fn cmd_solve_oc(args: &FileArgs) -> Result<(), CliError> {
    let file = ProblemFile::load(&args.problem)?;
    let ns = file.n_list(args.n.as_deref());

    let mut finest = None;
    let mut trace = Vec::new();
    for &n in &ns {
        let prob = file.control(n, args.alpha)?;
        let trip = solve_lq(&prob)?;
        let res = pontryagin_residual(&prob, &trip)?;
        let max_norm = |fs: &[GridFunction]| {
            fs.iter()
                .map(GridFunction::interior_max)
                .fold(0.0f64, f64::max)
        };
        trace.push(json!({
            "N": n,
            "state_residual_interior_max": max_norm(&res.state),
            "costate_residual_interior_max": max_norm(&res.costate),
            "stationarity_interior_max": max_norm(&res.stationarity),
        }));
        finest = Some((prob, trip, res));
    }
    let (prob, trip, res) = finest.expect("at least one grid");

    let mut rep = Report::new(prob.grid());
    push_triple(&mut rep, &prob, &trip);
    for (c, rc) in res.state.iter().enumerate() {
        rep.push_series(&format!("state_residual{c}"), rc);
    }
    for (c, rc) in res.costate.iter().enumerate() {
        rep.push_series(&format!("costate_residual{c}"), rc);
    }
    for (e, re) in res.stationarity.iter().enumerate() {
        rep.push_series(&format!("stationarity{e}"), re);
    }
    rep.meta("command", json!("solve-oc"));
    rep.meta("alpha", json!(prob.order().alpha()));
    rep.meta("N", json!(prob.grid().len()));
    rep.meta("cost", json!(cost(&prob, &trip)?));
    rep.meta("augmented_functional", json!(augmented_functional(&prob, &trip)?));
    rep.meta("refinement", Value::Array(trace));

    let (path, format) = resolve_output(&args.output, Some(&file))?;
    rep.write(path.as_deref(), format, args.output.quiet)
}

fn cmd_check_noether_oc(args: &FileArgs) -> Result<(), CliError> {
    let file = ProblemFile::load(&args.problem)?;
    let ns = file.n_list(args.n.as_deref());

    let mut finest = None;
    let mut trace = Vec::new();
    for &n in &ns {
        let prob = file.control(n, args.alpha)?;
        let gen = file.control_generators(prob.n_states(), prob.n_controls())?;
        let trip = solve_lq(&prob)?;
        let report = hamiltonian_noether_residual(&prob, &gen, &trip)?;
        trace.push((n, report.interior_norm));
        finest = Some((prob, trip, report));
    }
    let (prob, trip, conservation) = finest.expect("at least one grid");

    let mut rep = Report::new(prob.grid());
    push_triple(&mut rep, &prob, &trip);
    rep.push_series("noether_residual", &conservation.residual);
    let h = hamiltonian_along(&prob, &trip)?;
    rep.push_series("hamiltonian", &h);
    rep.meta("command", json!("check-noether-oc"));
    rep.meta("alpha", json!(prob.order().alpha()));
    rep.meta("N", json!(prob.grid().len()));
    rep.meta("interior_l2", json!(conservation.interior_norm));
    push_trace_meta(&mut rep, &trace);

    let (path, format) = resolve_output(&args.output, Some(&file))?;
    rep.write(path.as_deref(), format, args.output.quiet)
}

/// Bundled worked examples.
///
/// * `example1` — variational: minimize `(1/2) v0^2` on `[0, 1]` with
///   `q(0) = 0`, `q(1) = 1`; time-translation generators `tau = 1`,
///   `xi = 0`.
/// * `example2` — control: minimize `(1/2)(q0^2 + u0^2)` subject to the
///   fractional dynamics `-q0 + u0` with `q(0) = 1`, free right endpoint;
///   autonomous generators `tau = 1`, `xi = rho = sigma = 0`.
fn cmd_examples(args: &ExamplesArgs) -> Result<(), CliError> {
    if args.n.is_empty() {
        return Err(CliError::Validation("need at least one grid size".into()));
    }
    let order = FracOrder::new(args.alpha)?;
    match args.name.as_str() {
        "example1" => cmd_example1(args, order),
        "example2" => cmd_example2(args, order),
        other => Err(CliError::Validation(format!(
            "unknown example `{other}` (expected example1 or example2)"
        ))),
    }
}

fn cmd_example1(args: &ExamplesArgs, order: FracOrder) -> Result<(), CliError> {
    let lagrangian = Expr::parse("v0^2 / 2").expect("preset expression");
    let gen = SymmetryGenerators::new(Expr::constant(1.0), vec![Expr::constant(0.0)])
        .expect("preset generators");

    let mut finest = None;
    let mut trace = Vec::new();
    for &n in &args.n {
        let prob = VariationalProblem::new(
            Grid::new(0.0, 1.0, n)?,
            order,
            1,
            lagrangian.clone(),
            vec![0.0],
            Some(vec![1.0]),
        )?;
        let ext = solve_ritz(&prob, InitialGuess::Linear)?;
        let report = noether_residual(&prob, &gen, &ext.q)?;
        trace.push((n, report.interior_norm));
        finest = Some((prob, ext, report));
    }
    let (prob, ext, conservation) = finest.expect("at least one grid");
    let residuals = el_residual(&prob, &ext.q)?;

    let mut rep = Report::new(prob.grid());
    rep.push_series("q0", &ext.q[0]);
    rep.push_series("el_residual0", &residuals[0]);
    rep.push_series("noether_residual", &conservation.residual);
    rep.meta("command", json!("examples"));
    rep.meta("preset", json!("example1"));
    rep.meta("alpha", json!(order.alpha()));
    rep.meta("N", json!(prob.grid().len()));
    rep.meta("objective", json!(ext.objective));
    rep.meta("interior_l2", json!(conservation.interior_norm));
    push_trace_meta(&mut rep, &trace);

    let (path, format) = resolve_output(&args.output, None)?;
    rep.write(path.as_deref(), format, args.output.quiet)
}

fn cmd_example2(args: &ExamplesArgs, order: FracOrder) -> Result<(), CliError> {
    let lagrangian = Expr::parse("(q0^2 + u0^2) / 2").expect("preset expression");
    let dynamics = Expr::parse("-q0 + u0").expect("preset expression");
    let gen = ControlGenerators::new(
        Expr::constant(1.0),
        vec![Expr::constant(0.0)],
        vec![Expr::constant(0.0)],
        vec![Expr::constant(0.0)],
    )
    .expect("preset generators");

    let mut finest = None;
    let mut trace = Vec::new();
    for &n in &args.n {
        let prob = ControlProblem::new(
            Grid::new(0.0, 1.0, n)?,
            order,
            1,
            1,
            lagrangian.clone(),
            vec![dynamics.clone()],
            vec![1.0],
            None,
        )?;
        let trip = solve_lq(&prob)?;
        let report = hamiltonian_noether_residual(&prob, &gen, &trip)?;
        trace.push((n, report.interior_norm));
        finest = Some((prob, trip, report));
    }
    let (prob, trip, conservation) = finest.expect("at least one grid");

    let h = hamiltonian_along(&prob, &trip)?;
    let (h_min, h_max) = h
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let h_scale = h.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let h_drift = (h_max - h_min) / (1.0 + h_scale);
    let invariant = autonomous_invariant(&prob, &trip)?;

    let mut rep = Report::new(prob.grid());
    push_triple(&mut rep, &prob, &trip);
    rep.push_series("hamiltonian", &h);
    rep.push_series("autonomous_invariant", &invariant);
    rep.push_series("noether_residual", &conservation.residual);
    rep.meta("command", json!("examples"));
    rep.meta("preset", json!("example2"));
    rep.meta("alpha", json!(order.alpha()));
    rep.meta("N", json!(prob.grid().len()));
    rep.meta("cost", json!(cost(&prob, &trip)?));
    rep.meta("hamiltonian_drift_relative", json!(h_drift));
    rep.meta("interior_l2", json!(conservation.interior_norm));
    push_trace_meta(&mut rep, &trace);

    let (path, format) = resolve_output(&args.output, None)?;
    rep.write(path.as_deref(), format, args.output.quiet)
}
