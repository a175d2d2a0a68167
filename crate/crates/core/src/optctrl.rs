//! Fractional optimal control in the Riesz-Caputo sense: Hamiltonian
//! construction, Pontryagin-system residuals, a dense linear solver for
//! linear-quadratic problems, and the Hamiltonian-form conservation law.
//!
//! The Hamiltonian system couples the Riesz-Caputo derivative of the
//! state with the Riesz derivative of the costate; its discrete form
//! reuses the operator matrices of [`crate::fracops`]. Only residual
//! evaluation is offered for nonlinear problems; [`solve_lq`] handles the
//! linear-quadratic case by one dense LU solve over all node unknowns.

use thiserror::Error;

use crate::exprdsl::{control_vars, Env, Expr, ExprError};
use crate::fracops::{
    apply, dt_gamma, riesz_caputo_matrix, riesz_derivative_matrix, FracError, FracOrder, Grid,
    GridFunction, OperatorKind,
};
use crate::linalg::{lu_solve, DMat};
use crate::noether::ConservationReport;

#[derive(Debug, Error)]
pub enum OptCtrlError {
    #[error("invalid problem: {0}")]
    BadProblem(String),
    #[error("invalid generators: {0}")]
    BadGenerators(String),
    #[error("expression error at node {node}: {source}")]
    AtNode { node: usize, source: ExprError },
    #[error("not a linear-quadratic problem: {0}")]
    NotLq(String),
    #[error("singular Pontryagin system (condition estimate {condition_estimate:.3e})")]
    SingularSystem { condition_estimate: f64 },
    #[error("grid has {n} nodes, above the dense-solve cap of {cap} (override with FRAC_NOETHER_MAX_N)")]
    GridTooLarge { n: usize, cap: usize },
    #[error("problem is not autonomous: {0}")]
    NotAutonomous(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Frac(#[from] FracError),
}

/// Fractional optimal control problem in Lagrange form: minimize the
/// integral of `lagrangian(t, q, u)` subject to the fractional dynamics
/// `RieszCaputo D q_c = dynamics_c(t, q, u)` and `q(a) = qa`. An optional
/// fixed terminal state `qb` replaces the free-endpoint costate closure in
/// [`solve_lq`].
#[derive(Debug, Clone)]
pub struct ControlProblem {
    grid: Grid,
    order: FracOrder,
    n_states: usize,
    n_controls: usize,
    lagrangian: Expr,
    dynamics: Vec<Expr>,
    qa: Vec<f64>,
    qb: Option<Vec<f64>>,
}

impl ControlProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Grid,
        order: FracOrder,
        n_states: usize,
        n_controls: usize,
        lagrangian: Expr,
        dynamics: Vec<Expr>,
        qa: Vec<f64>,
        qb: Option<Vec<f64>>,
    ) -> Result<ControlProblem, OptCtrlError> {
        if n_states == 0 || n_controls == 0 {
            return Err(OptCtrlError::BadProblem(
                "need at least one state and one control component".into(),
            ));
        }
        if dynamics.len() != n_states {
            return Err(OptCtrlError::BadProblem(format!(
                "{} dynamics expressions for {} states",
                dynamics.len(),
                n_states
            )));
        }
        // the cost and dynamics may not reference the costate
        let mut declared = control_vars(n_states, n_controls);
        for c in 0..n_states {
            declared.remove(&format!("p{c}"));
        }
        for expr in std::iter::once(&lagrangian).chain(&dynamics) {
            for v in expr.variables() {
                if !declared.contains(v) {
                    return Err(OptCtrlError::BadProblem(format!(
                        "expression references undeclared variable `{v}`"
                    )));
                }
            }
        }
        if qa.len() != n_states {
            return Err(OptCtrlError::BadProblem(format!(
                "initial state has {} values for {} states",
                qa.len(),
                n_states
            )));
        }
        if let Some(qb) = &qb {
            if qb.len() != n_states {
                return Err(OptCtrlError::BadProblem(format!(
                    "terminal state has {} values for {} states",
                    qb.len(),
                    n_states
                )));
            }
        }
        if qa.iter().chain(qb.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(OptCtrlError::BadProblem(
                "boundary values must be finite".into(),
            ));
        }
        Ok(ControlProblem {
            grid,
            order,
            n_states,
            n_controls,
            lagrangian,
            dynamics,
            qa,
            qb,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn order(&self) -> FracOrder {
        self.order
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn lagrangian(&self) -> &Expr {
        &self.lagrangian
    }

    pub fn dynamics(&self) -> &[Expr] {
        &self.dynamics
    }

    pub fn qa(&self) -> &[f64] {
        &self.qa
    }

    pub fn qb(&self) -> Option<&[f64]> {
        self.qb.as_deref()
    }

    /// Same problem posed on another grid (for refinement studies).
    pub fn on_grid(&self, grid: Grid) -> ControlProblem {
        let mut p = self.clone();
        p.grid = grid;
        p
    }
}

/// State, control, and costate trajectories on a shared grid.
#[derive(Debug, Clone)]
pub struct PontryaginTriple {
    pub q: Vec<GridFunction>,
    pub u: Vec<GridFunction>,
    pub p: Vec<GridFunction>,
}

/// Infinitesimal generators for the Hamiltonian-form law: `tau` and `xi`
/// enter the conservation residual; `rho` (control) and `sigma` (costate)
/// complete the transformation and are carried for reporting.
#[derive(Debug, Clone)]
pub struct ControlGenerators {
    pub tau: Expr,
    pub xi: Vec<Expr>,
    pub rho: Vec<Expr>,
    pub sigma: Vec<Expr>,
}

impl ControlGenerators {
    pub fn new(
        tau: Expr,
        xi: Vec<Expr>,
        rho: Vec<Expr>,
        sigma: Vec<Expr>,
    ) -> Result<ControlGenerators, OptCtrlError> {
        if xi.is_empty() || xi.len() != sigma.len() {
            return Err(OptCtrlError::BadGenerators(
                "xi and sigma must both have one entry per state".into(),
            ));
        }
        if rho.is_empty() {
            return Err(OptCtrlError::BadGenerators(
                "rho must have one entry per control".into(),
            ));
        }
        let declared = control_vars(xi.len(), rho.len());
        for expr in std::iter::once(&tau).chain(&xi).chain(&rho).chain(&sigma) {
            for v in expr.variables() {
                if !declared.contains(v) {
                    return Err(OptCtrlError::BadGenerators(format!(
                        "generator references undeclared variable `{v}`"
                    )));
                }
            }
        }
        Ok(ControlGenerators {
            tau,
            xi,
            rho,
            sigma,
        })
    }
}

/// The control Hamiltonian `H = L + p . dynamics` as a symbolic
/// expression over `(t, q, u, p)`.
pub fn hamiltonian(prob: &ControlProblem) -> Expr {
    let mut h = prob.lagrangian.clone();
    for (c, phi) in prob.dynamics.iter().enumerate() {
        h = Expr::add(h, Expr::mul(Expr::var(&format!("p{c}")), phi.clone()));
    }
    h
}

fn check_triple(prob: &ControlProblem, trip: &PontryaginTriple) -> Result<(), OptCtrlError> {
    if trip.q.len() != prob.n_states
        || trip.p.len() != prob.n_states
        || trip.u.len() != prob.n_controls
    {
        return Err(OptCtrlError::BadProblem(
            "triple dimensions do not match the problem".into(),
        ));
    }
    for f in trip.q.iter().chain(&trip.u).chain(&trip.p) {
        if f.grid() != prob.grid {
            return Err(OptCtrlError::Frac(FracError::GridMismatch));
        }
    }
    Ok(())
}

fn triple_env(prob: &ControlProblem, trip: &PontryaginTriple, i: usize) -> Env {
    let mut env = Env::new();
    env.set("t", prob.grid.node(i));
    for (c, f) in trip.q.iter().enumerate() {
        env.set(&format!("q{c}"), f.value(i));
    }
    for (e, f) in trip.u.iter().enumerate() {
        env.set(&format!("u{e}"), f.value(i));
    }
    for (c, f) in trip.p.iter().enumerate() {
        env.set(&format!("p{c}"), f.value(i));
    }
    env
}

fn sample_along(
    prob: &ControlProblem,
    trip: &PontryaginTriple,
    expr: &Expr,
) -> Result<GridFunction, OptCtrlError> {
    let mut values = Vec::with_capacity(prob.grid.len());
    for i in 0..prob.grid.len() {
        let v = expr
            .eval(&triple_env(prob, trip, i))
            .map_err(|source| OptCtrlError::AtNode { node: i, source })?;
        values.push(v);
    }
    Ok(GridFunction::from_values(prob.grid, values)?)
}

/// Node-wise residuals of the fractional Hamiltonian system.
#[derive(Debug, Clone)]
pub struct PontryaginResiduals {
    /// `RieszCaputo D q_c - dH/dp_c` per state component.
    pub state: Vec<GridFunction>,
    /// `Riesz D p_c + dH/dq_c` per state component.
    pub costate: Vec<GridFunction>,
    /// `dH/du_e` per control component.
    pub stationarity: Vec<GridFunction>,
}

/// Evaluates the three residual fields of the fractional Pontryagin
/// system along a candidate triple.
pub fn pontryagin_residual(
    prob: &ControlProblem,
    trip: &PontryaginTriple,
) -> Result<PontryaginResiduals, OptCtrlError> {
    check_triple(prob, trip)?;
    let h = hamiltonian(prob);
    let mut state = Vec::with_capacity(prob.n_states);
    let mut costate = Vec::with_capacity(prob.n_states);
    for c in 0..prob.n_states {
        let dq = apply(OperatorKind::RieszCaputo, prob.order, &trip.q[c])?;
        let hp = sample_along(prob, trip, &h.diff(&format!("p{c}")))?;
        state.push(dq.linear_combination(1.0, &hp, -1.0)?);
        let dp = apply(OperatorKind::RieszDerivative, prob.order, &trip.p[c])?;
        let hq = sample_along(prob, trip, &h.diff(&format!("q{c}")))?;
        costate.push(dp.linear_combination(1.0, &hq, 1.0)?);
    }
    let mut stationarity = Vec::with_capacity(prob.n_controls);
    for e in 0..prob.n_controls {
        stationarity.push(sample_along(prob, trip, &h.diff(&format!("u{e}")))?);
    }
    Ok(PontryaginResiduals {
        state,
        costate,
        stationarity,
    })
}

const DEFAULT_MAX_N: usize = 4097;

fn dense_cap() -> usize {
    std::env::var("FRAC_NOETHER_MAX_N")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_MAX_N)
}

// Deterministic probe values for quadratic/affine structure validation:
// second partials of the cost must be constant in (q, u) and second
// partials of the dynamics must vanish at every probe point.
const PROBE_SCALES: [f64; 3] = [0.7385, -1.1234, 0.4311];

fn probe_env(prob: &ControlProblem, t: f64, scale: f64) -> Env {
    let mut env = Env::new();
    env.set("t", t);
    let mut j = 0;
    for c in 0..prob.n_states {
        env.set(&format!("q{c}"), scale * (1.0 + 0.1 * j as f64));
        j += 1;
    }
    for e in 0..prob.n_controls {
        env.set(&format!("u{e}"), scale * (1.0 + 0.1 * j as f64));
        j += 1;
    }
    env
}

fn validate_lq(prob: &ControlProblem) -> Result<(), OptCtrlError> {
    let grid = prob.grid;
    let t_probes = [
        grid.a(),
        grid.a() + 0.5137 * (grid.b() - grid.a()),
        grid.b(),
    ];
    let mut vars = Vec::new();
    for c in 0..prob.n_states {
        vars.push(format!("q{c}"));
    }
    for e in 0..prob.n_controls {
        vars.push(format!("u{e}"));
    }
    for i in 0..vars.len() {
        for j in 0..=i {
            let second = prob.lagrangian.diff(&vars[i]).diff(&vars[j]);
            let depends = second
                .variables()
                .iter()
                .any(|v| vars.iter().any(|w| w == v));
            if depends {
                for &t in &t_probes {
                    let mut seen: Option<f64> = None;
                    for &s in &PROBE_SCALES {
                        let v = second.eval(&probe_env(prob, t, s))?;
                        if let Some(first) = seen {
                            if (v - first).abs() > 1e-9 * (1.0 + first.abs()) {
                                return Err(OptCtrlError::NotLq(format!(
                                    "cost second partial in ({}, {}) varies with the probe point",
                                    vars[i], vars[j]
                                )));
                            }
                        }
                        seen = Some(v);
                    }
                }
            }
            for (c, phi) in prob.dynamics.iter().enumerate() {
                let second = phi.diff(&vars[i]).diff(&vars[j]);
                if second.is_zero() {
                    continue;
                }
                for &t in &t_probes {
                    for &s in &PROBE_SCALES {
                        let v = second.eval(&probe_env(prob, t, s))?;
                        if v.abs() > 1e-9 {
                            return Err(OptCtrlError::NotLq(format!(
                                "dynamics component {c} is not affine in ({}, {})",
                                vars[i], vars[j]
                            )));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn zero_env(grid_t: f64, n: usize, m: usize) -> Env {
    let mut env = Env::new();
    env.set("t", grid_t);
    for c in 0..n {
        env.set(&format!("q{c}"), 0.0);
    }
    for e in 0..m {
        env.set(&format!("u{e}"), 0.0);
    }
    env
}

/// Solves the linear-quadratic fractional control problem by assembling
/// the discrete Hamiltonian system (state, costate, stationarity rows plus
/// boundary rows) into one dense linear system.
///
/// Free right endpoint uses the transversality closure `p(b) = 0`; when a
/// terminal state `qb` is supplied it replaces that closure and the state
/// equation is collocated at every node instead.
pub fn solve_lq(prob: &ControlProblem) -> Result<PontryaginTriple, OptCtrlError> {
    let grid = prob.grid;
    let nn = grid.len();
    let cap = dense_cap();
    if nn > cap {
        return Err(OptCtrlError::GridTooLarge { n: nn, cap });
    }
    validate_lq(prob)?;

    let n = prob.n_states;
    let m = prob.n_controls;
    let size = (2 * n + m) * nn;
    let idx_q = |c: usize, i: usize| c * nn + i;
    let idx_u = |e: usize, i: usize| (n + e) * nn + i;
    let idx_p = |c: usize, i: usize| (n + m + c) * nn + i;

    // symbolic first/second partials, evaluated per node at (q, u) = 0
    let dl_dq: Vec<Expr> = (0..n).map(|c| prob.lagrangian.diff(&format!("q{c}"))).collect();
    let dl_du: Vec<Expr> = (0..m).map(|e| prob.lagrangian.diff(&format!("u{e}"))).collect();
    let hess = |a: &Expr, v: &str| a.diff(v);
    let mrc = riesz_caputo_matrix(grid, prob.order);
    let rd = riesz_derivative_matrix(grid, prob.order);

    let mut a = DMat::zeros(size, size);
    let mut b = vec![0.0; size];
    let mut row = 0;

    // boundary rows
    for c in 0..n {
        a.set(row, idx_q(c, 0), 1.0);
        b[row] = prob.qa[c];
        row += 1;
    }
    if let Some(qb) = &prob.qb {
        for c in 0..n {
            a.set(row, idx_q(c, nn - 1), 1.0);
            b[row] = qb[c];
            row += 1;
        }
    } else {
        for c in 0..n {
            a.set(row, idx_p(c, nn - 1), 1.0);
            row += 1;
        }
    }

    // state equation: RieszCaputo D q_c = dynamics_c.
    // With a free right endpoint, collocated at nodes 1..nn-1; with a
    // fixed terminal state, at every node (the extra equations replace the
    // dropped costate rows at the ends).
    let state_nodes: Vec<usize> = if prob.qb.is_some() {
        (0..nn).collect()
    } else {
        (1..nn).collect()
    };
    for c in 0..n {
        let phi = &prob.dynamics[c];
        let dphi_dq: Vec<Expr> = (0..n).map(|d| phi.diff(&format!("q{d}"))).collect();
        let dphi_du: Vec<Expr> = (0..m).map(|e| phi.diff(&format!("u{e}"))).collect();
        for &i in &state_nodes {
            let env = zero_env(grid.node(i), n, m);
            for j in 0..nn {
                let w = mrc.get(i, j);
                if w != 0.0 {
                    a.add_to(row, idx_q(c, j), w);
                }
            }
            for d in 0..n {
                a.add_to(row, idx_q(d, i), -dphi_dq[d].eval(&env)?);
            }
            for e in 0..m {
                a.add_to(row, idx_u(e, i), -dphi_du[e].eval(&env)?);
            }
            b[row] = phi.eval(&env)?;
            row += 1;
        }
    }

    // costate equation: Riesz D p_c = -dH/dq_c. With the free endpoint,
    // collocated at 1..nn-1: the last row's singular boundary column is
    // omitted by the operator matrix, which is exact because p(b) = 0 is
    // enforced. With a fixed terminal state, collocated at 1..nn-2 where
    // every operator row is complete.
    let costate_last = if prob.qb.is_some() { nn - 1 } else { nn };
    for c in 0..n {
        let dphi_dqc: Vec<Expr> = (0..n)
            .map(|d| prob.dynamics[d].diff(&format!("q{c}")))
            .collect();
        for i in 1..costate_last {
            let env = zero_env(grid.node(i), n, m);
            for j in 0..nn {
                let w = rd.get(i, j);
                if w != 0.0 {
                    a.add_to(row, idx_p(c, j), w);
                }
            }
            // dH/dq_c = dL/dq_c + sum_d p_d dphi_d/dq_c, linearized
            for d in 0..n {
                a.add_to(row, idx_q(d, i), hess(&dl_dq[c], &format!("q{d}")).eval(&env)?);
            }
            for e in 0..m {
                a.add_to(row, idx_u(e, i), hess(&dl_dq[c], &format!("u{e}")).eval(&env)?);
            }
            for d in 0..n {
                a.add_to(row, idx_p(d, i), dphi_dqc[d].eval(&env)?);
            }
            b[row] = -dl_dq[c].eval(&env)?;
            row += 1;
        }
    }

    // stationarity: dH/du_e = 0 at every node
    for e in 0..m {
        let dphi_due: Vec<Expr> = (0..n)
            .map(|d| prob.dynamics[d].diff(&format!("u{e}")))
            .collect();
        for i in 0..nn {
            let env = zero_env(grid.node(i), n, m);
            for d in 0..n {
                a.add_to(row, idx_q(d, i), hess(&dl_du[e], &format!("q{d}")).eval(&env)?);
            }
            for f in 0..m {
                a.add_to(row, idx_u(f, i), hess(&dl_du[e], &format!("u{f}")).eval(&env)?);
            }
            for d in 0..n {
                a.add_to(row, idx_p(d, i), dphi_due[d].eval(&env)?);
            }
            b[row] = -dl_du[e].eval(&env)?;
            row += 1;
        }
    }
    debug_assert_eq!(row, size);

    let x = lu_solve(a, b).map_err(|e| OptCtrlError::SingularSystem {
        condition_estimate: e.condition_estimate,
    })?;

    let take = |base: usize| -> Result<GridFunction, OptCtrlError> {
        Ok(GridFunction::from_values(grid, x[base..base + nn].to_vec())?)
    };
    let mut q: Vec<GridFunction> =
        (0..n).map(|c| take(idx_q(c, 0))).collect::<Result<_, _>>()?;
    let u: Vec<GridFunction> =
        (0..m).map(|e| take(idx_u(e, 0))).collect::<Result<_, _>>()?;
    let mut p: Vec<GridFunction> =
        (0..n).map(|c| take(idx_p(c, 0))).collect::<Result<_, _>>()?;
    // enforce the boundary rows exactly rather than to solver roundoff
    for c in 0..n {
        q[c].values_mut()[0] = prob.qa[c];
        match &prob.qb {
            Some(qb) => q[c].values_mut()[nn - 1] = qb[c],
            None => p[c].values_mut()[nn - 1] = 0.0,
        }
    }
    Ok(PontryaginTriple { q, u, p })
}

fn trapezoid(grid: Grid, values: &[f64]) -> f64 {
    let h = grid.h();
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (0.5 * (values[0] + values[n - 1]) + inner)
}

/// The cost functional `integral of L(t, q, u)` by trapezoid quadrature.
pub fn cost(prob: &ControlProblem, trip: &PontryaginTriple) -> Result<f64, OptCtrlError> {
    check_triple(prob, trip)?;
    let l = sample_along(prob, trip, &prob.lagrangian)?;
    Ok(trapezoid(prob.grid, l.values()))
}

/// The multiplier-rule functional `integral of (H - p . RieszCaputo D q)`.
/// Coincides with [`cost`] whenever the state equation holds.
pub fn augmented_functional(
    prob: &ControlProblem,
    trip: &PontryaginTriple,
) -> Result<f64, OptCtrlError> {
    check_triple(prob, trip)?;
    let mut integrand = sample_along(prob, trip, &hamiltonian(prob))?;
    for c in 0..prob.n_states {
        let dq = apply(OperatorKind::RieszCaputo, prob.order, &trip.q[c])?;
        let pdq = trip.p[c].pointwise_mul(&dq)?;
        integrand = integrand.linear_combination(1.0, &pdq, -1.0)?;
    }
    Ok(trapezoid(prob.grid, integrand.values()))
}

/// Hamiltonian-form Noether residual:
/// `dt_gamma(H - (1-alpha) p . RieszCaputoDq, tau) - sum_c dt_gamma(p_c, xi_c)`.
pub fn hamiltonian_noether_residual(
    prob: &ControlProblem,
    gen: &ControlGenerators,
    trip: &PontryaginTriple,
) -> Result<ConservationReport, OptCtrlError> {
    check_triple(prob, trip)?;
    if gen.xi.len() != prob.n_states || gen.rho.len() != prob.n_controls {
        return Err(OptCtrlError::BadGenerators(format!(
            "generators sized for {} states / {} controls",
            gen.xi.len(),
            gen.rho.len()
        )));
    }
    let alpha = prob.order.alpha();
    let mut h_mod = sample_along(prob, trip, &hamiltonian(prob))?;
    for c in 0..prob.n_states {
        let dq = apply(OperatorKind::RieszCaputo, prob.order, &trip.q[c])?;
        let pdq = trip.p[c].pointwise_mul(&dq)?;
        h_mod = h_mod.linear_combination(1.0, &pdq, -(1.0 - alpha))?;
    }
    let tau_traj = sample_along(prob, trip, &gen.tau)?;
    let mut total = dt_gamma(&h_mod, &tau_traj, prob.order)?;
    for c in 0..prob.n_states {
        let xi_traj = sample_along(prob, trip, &gen.xi[c])?;
        let term = dt_gamma(&trip.p[c], &xi_traj, prob.order)?;
        total = total.linear_combination(1.0, &term, -1.0)?;
    }
    Ok(ConservationReport::from_residual(total))
}

/// The quantity `H + (alpha - 1) p . RieszCaputo D q` along a triple; its
/// Riesz derivative of order alpha vanishes for autonomous problems. At
/// alpha = 1 it reduces to the Hamiltonian itself.
pub fn autonomous_invariant(
    prob: &ControlProblem,
    trip: &PontryaginTriple,
) -> Result<GridFunction, OptCtrlError> {
    check_triple(prob, trip)?;
    for expr in std::iter::once(&prob.lagrangian).chain(&prob.dynamics) {
        if expr.variables().contains("t") {
            return Err(OptCtrlError::NotAutonomous(
                "cost or dynamics depend explicitly on t".into(),
            ));
        }
    }
    let alpha = prob.order.alpha();
    let mut out = sample_along(prob, trip, &hamiltonian(prob))?;
    for c in 0..prob.n_states {
        let dq = apply(OperatorKind::RieszCaputo, prob.order, &trip.q[c])?;
        let pdq = trip.p[c].pointwise_mul(&dq)?;
        out = out.linear_combination(1.0, &pdq, alpha - 1.0)?;
    }
    Ok(out)
}
