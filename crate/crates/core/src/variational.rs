//! Fractional variational problems: the action functional built on the
//! Riesz-Caputo derivative, Euler-Lagrange residuals, and a direct Ritz
//! solver for the fixed-endpoint case.
//!
//! A problem's Lagrangian is an expression in `t`, the configuration
//! variables `q0..`, and the velocity slots `v0..`, where `v{c}` stands
//! for the Riesz-Caputo derivative of component `c`. The functional is
//! discretized by an endpoint-corrected trapezoid rule on the operator
//! grid; because the discrete Riesz-Caputo operator is linear, the
//! objective gradient is computed exactly through its transpose plus
//! symbolic partials.

use thiserror::Error;

use crate::exprdsl::{variational_vars, Env, Expr, ExprError};
use crate::fracops::{apply, FracError, FracOrder, Grid, GridFunction, OperatorKind};

#[derive(Debug, Error)]
pub enum VariationalError {
    #[error("invalid problem: {0}")]
    BadProblem(String),
    #[error("expression error at node {node}: {source}")]
    AtNode { node: usize, source: ExprError },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Frac(#[from] FracError),
    #[error("solver did not converge after {iterations} iterations (gradient max-norm {gradient_norm:.3e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },
    #[error("right boundary values are required by this solver")]
    MissingRightBoundary,
}

/// Fixed-interval fractional variational problem.
#[derive(Debug, Clone)]
pub struct VariationalProblem {
    grid: Grid,
    order: FracOrder,
    n_components: usize,
    lagrangian: Expr,
    qa: Vec<f64>,
    qb: Option<Vec<f64>>,
}

impl VariationalProblem {
    pub fn new(
        grid: Grid,
        order: FracOrder,
        n_components: usize,
        lagrangian: Expr,
        qa: Vec<f64>,
        qb: Option<Vec<f64>>,
    ) -> Result<VariationalProblem, VariationalError> {
        if n_components == 0 {
            return Err(VariationalError::BadProblem(
                "need at least one configuration component".into(),
            ));
        }
        let declared = variational_vars(n_components);
        for v in lagrangian.variables() {
            if !declared.contains(v) {
                return Err(VariationalError::BadProblem(format!(
                    "lagrangian references undeclared variable `{v}`"
                )));
            }
        }
        if qa.len() != n_components {
            return Err(VariationalError::BadProblem(format!(
                "left boundary has {} values for {} components",
                qa.len(),
                n_components
            )));
        }
        if let Some(qb) = &qb {
            if qb.len() != n_components {
                return Err(VariationalError::BadProblem(format!(
                    "right boundary has {} values for {} components",
                    qb.len(),
                    n_components
                )));
            }
        }
        if qa.iter().chain(qb.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(VariationalError::BadProblem(
                "boundary values must be finite".into(),
            ));
        }
        Ok(VariationalProblem {
            grid,
            order,
            n_components,
            lagrangian,
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

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn lagrangian(&self) -> &Expr {
        &self.lagrangian
    }

    pub fn qa(&self) -> &[f64] {
        &self.qa
    }

    pub fn qb(&self) -> Option<&[f64]> {
        self.qb.as_deref()
    }

    /// Same problem posed on another grid (for refinement studies).
    pub fn on_grid(&self, grid: Grid) -> VariationalProblem {
        let mut p = self.clone();
        p.grid = grid;
        p
    }
}

/// A numerical extremal together with solver diagnostics.
#[derive(Debug, Clone)]
pub struct Extremal {
    pub q: Vec<GridFunction>,
    pub objective: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Trajectory plus its Riesz-Caputo derivatives, ready for node-wise
/// Lagrangian evaluation.
pub(crate) struct Trajectory<'a> {
    pub q: &'a [GridFunction],
    pub v: Vec<GridFunction>,
    grid: Grid,
}

pub(crate) fn trajectory<'a>(
    order: FracOrder,
    q: &'a [GridFunction],
) -> Result<Trajectory<'a>, VariationalError> {
    let grid = q[0].grid();
    let mut v = Vec::with_capacity(q.len());
    for qc in q {
        if qc.grid() != grid {
            return Err(VariationalError::Frac(FracError::GridMismatch));
        }
        v.push(apply(OperatorKind::RieszCaputo, order, qc)?);
    }
    Ok(Trajectory { q, v, grid })
}

impl Trajectory<'_> {
    pub fn env(&self, i: usize) -> Env {
        let mut env = Env::new();
        env.set("t", self.grid.node(i));
        for (c, qc) in self.q.iter().enumerate() {
            env.set(&format!("q{c}"), qc.value(i));
        }
        for (c, vc) in self.v.iter().enumerate() {
            env.set(&format!("v{c}"), vc.value(i));
        }
        env
    }

    /// Samples `expr` at every node, mapping failures to the node index.
    pub fn sample(&self, expr: &Expr) -> Result<GridFunction, VariationalError> {
        let mut values = Vec::with_capacity(self.grid.len());
        for i in 0..self.grid.len() {
            let v = expr
                .eval(&self.env(i))
                .map_err(|source| VariationalError::AtNode { node: i, source })?;
            values.push(v);
        }
        Ok(GridFunction::from_values(self.grid, values)?)
    }
}

fn check_components(
    prob: &VariationalProblem,
    q: &[GridFunction],
) -> Result<(), VariationalError> {
    if q.len() != prob.n_components {
        return Err(VariationalError::BadProblem(format!(
            "trajectory has {} components, problem declares {}",
            q.len(),
            prob.n_components
        )));
    }
    for qc in q {
        if qc.grid() != prob.grid {
            return Err(VariationalError::Frac(FracError::GridMismatch));
        }
    }
    Ok(())
}

// Endpoint-corrected trapezoid weights (h/4, 5h/4, h, ..., h, 5h/4, h/4).
// Same total weight and order of accuracy as the plain trapezoid rule, but
// chosen so the adjoint of the discrete derivative annihilates constants
// at interior nodes: trajectories with a constant discrete derivative are
// then exactly stationary for the discrete functional (e.g. the classical
// straight-line extremal at order one).
pub(crate) fn quadrature_weights(grid: Grid) -> Vec<f64> {
    let n = grid.len();
    let h = grid.h();
    let mut w = vec![h; n];
    w[0] = 0.25 * h;
    w[n - 1] = 0.25 * h;
    w[1] += 0.25 * h;
    w[n - 2] += 0.25 * h;
    w
}

/// Endpoint-corrected trapezoid quadrature of the Lagrangian along a
/// trajectory (see [`quadrature_weights`] for the weight choice).
pub fn evaluate_functional(
    prob: &VariationalProblem,
    q: &[GridFunction],
) -> Result<f64, VariationalError> {
    check_components(prob, q)?;
    let traj = trajectory(prob.order, q)?;
    let samples = traj.sample(&prob.lagrangian)?;
    let w = quadrature_weights(prob.grid);
    Ok(samples
        .values()
        .iter()
        .zip(&w)
        .map(|(l, w)| l * w)
        .sum())
}

/// Node-wise Euler-Lagrange residual per component:
/// `dL/dq_c - (Riesz derivative of dL/dv_c along the trajectory)`.
/// Endpoint nodes inherit the Riesz-derivative flags.
pub fn el_residual(
    prob: &VariationalProblem,
    q: &[GridFunction],
) -> Result<Vec<GridFunction>, VariationalError> {
    check_components(prob, q)?;
    let traj = trajectory(prob.order, q)?;
    let mut out = Vec::with_capacity(prob.n_components);
    for c in 0..prob.n_components {
        let d2 = traj.sample(&prob.lagrangian.diff(&format!("q{c}")))?;
        let momentum = traj.sample(&prob.lagrangian.diff(&format!("v{c}")))?;
        let drift = apply(OperatorKind::RieszDerivative, prob.order, &momentum)?;
        out.push(d2.linear_combination(1.0, &drift, -1.0)?);
    }
    Ok(out)
}

/// Exact gradient of the discrete objective with respect to the node
/// values, one grid function per component. Entries at the two boundary
/// nodes are zeroed (those values are fixed by the boundary conditions).
pub fn ritz_gradient(
    prob: &VariationalProblem,
    q: &[GridFunction],
) -> Result<Vec<GridFunction>, VariationalError> {
    check_components(prob, q)?;
    let traj = trajectory(prob.order, q)?;
    let w = quadrature_weights(prob.grid);
    let n = prob.grid.len();
    let m = crate::fracops::riesz_caputo_matrix(prob.grid, prob.order);
    let mut out = Vec::with_capacity(prob.n_components);
    for c in 0..prob.n_components {
        let d2 = traj.sample(&prob.lagrangian.diff(&format!("q{c}")))?;
        let d3 = traj.sample(&prob.lagrangian.diff(&format!("v{c}")))?;
        let weighted: Vec<f64> = d3.values().iter().zip(&w).map(|(v, w)| v * w).collect();
        let adjoint = m.matvec_t(&weighted);
        let mut g = vec![0.0; n];
        for i in 1..n - 1 {
            g[i] = w[i] * d2.value(i) + adjoint[i];
        }
        out.push(GridFunction::from_values(prob.grid, g)?);
    }
    Ok(out)
}

/// Initial guess for [`solve_ritz`].
pub enum InitialGuess<'a> {
    /// Linear interpolant of the boundary data.
    Linear,
    /// Caller-supplied trajectory; boundary values are overwritten.
    Values(&'a [GridFunction]),
}

const MAX_ITERATIONS: usize = 5000;
const GRAD_TOL: f64 = 1e-9;
const LBFGS_MEMORY: usize = 10;
const ARMIJO_C: f64 = 1e-4;

struct Objective<'a> {
    prob: &'a VariationalProblem,
    grid: Grid,
    qa: Vec<f64>,
    qb: Vec<f64>,
}

impl Objective<'_> {
    // interior unknowns, component-major
    fn unpack(&self, x: &[f64]) -> Vec<GridFunction> {
        let n = self.grid.len();
        let inner = n - 2;
        (0..self.prob.n_components)
            .map(|c| {
                let mut values = vec![0.0; n];
                values[0] = self.qa[c];
                values[n - 1] = self.qb[c];
                values[1..n - 1].copy_from_slice(&x[c * inner..(c + 1) * inner]);
                GridFunction::from_values(self.grid, values).expect("finite iterate")
            })
            .collect()
    }

    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), VariationalError> {
        let q = self.unpack(x);
        let value = evaluate_functional(self.prob, &q)?;
        let grads = ritz_gradient(self.prob, &q)?;
        let n = self.grid.len();
        let inner = n - 2;
        let mut g = vec![0.0; self.prob.n_components * inner];
        for (c, gc) in grads.iter().enumerate() {
            g[c * inner..(c + 1) * inner].copy_from_slice(&gc.values()[1..n - 1]);
        }
        Ok((value, g))
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the discrete functional over interior node values by L-BFGS
/// with Armijo backtracking. Requires both boundary values; an explicit
/// initial guess has its boundary nodes overwritten before iteration.
pub fn solve_ritz(
    prob: &VariationalProblem,
    init: InitialGuess<'_>,
) -> Result<Extremal, VariationalError> {
    let qb = prob
        .qb
        .clone()
        .ok_or(VariationalError::MissingRightBoundary)?;
    let grid = prob.grid;
    let n = grid.len();
    let inner = n - 2;
    let objective = Objective {
        prob,
        grid,
        qa: prob.qa.clone(),
        qb,
    };

    let mut x = vec![0.0; prob.n_components * inner];
    match init {
        InitialGuess::Linear => {
            for c in 0..prob.n_components {
                for i in 1..n - 1 {
                    let s = (grid.node(i) - grid.a()) / (grid.b() - grid.a());
                    x[c * inner + i - 1] =
                        (1.0 - s) * objective.qa[c] + s * objective.qb[c];
                }
            }
        }
        InitialGuess::Values(q) => {
            check_components(prob, q)?;
            for (c, qc) in q.iter().enumerate() {
                x[c * inner..(c + 1) * inner].copy_from_slice(&qc.values()[1..n - 1]);
            }
        }
    }

    let (mut fx, mut gx) = objective.value_and_grad(&x)?;
    let mut pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new(); // (s, y, 1/(y.s))
    let mut iterations = 0;
    while inf_norm(&gx) > GRAD_TOL && iterations < MAX_ITERATIONS {
        // two-loop recursion
        let mut d: Vec<f64> = gx.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.last() {
            let scale = dot(s, y) / dot(y, y);
            if scale.is_finite() && scale > 0.0 {
                for di in d.iter_mut() {
                    *di *= scale;
                }
            }
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&gx, &d);
        if !(slope < 0.0) {
            // fall back to steepest descent if curvature info is unusable
            d = gx.iter().map(|g| -g).collect();
            slope = dot(&gx, &d);
            pairs.clear();
        }

        // Armijo backtracking; the absolute slack keeps the test meaningful
        // once decrements fall below the rounding floor of the objective
        let slack = 1e-15 * (1.0 + fx.abs());
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            match objective.value_and_grad(&xt) {
                Ok((ft, gt)) if ft <= fx + ARMIJO_C * step * slope + slack => {
                    accepted = Some((xt, ft, gt));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let (xt, ft, gt) = match accepted {
            Some(t) => t,
            None => {
                return Err(VariationalError::NonConvergence {
                    iterations,
                    gradient_norm: inf_norm(&gx),
                })
            }
        };

        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * inf_norm(&s).max(1e-300) {
            if pairs.len() == LBFGS_MEMORY {
                pairs.remove(0);
            }
            pairs.push((s, y, 1.0 / sy));
        }
        x = xt;
        fx = ft;
        gx = gt;
        iterations += 1;
    }

    let gradient_norm = inf_norm(&gx);
    if gradient_norm > GRAD_TOL {
        return Err(VariationalError::NonConvergence {
            iterations,
            gradient_norm,
        });
    }
    Ok(Extremal {
        q: objective.unpack(&x),
        objective: fx,
        iterations,
        gradient_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn problem(
        lagrangian: &str,
        alpha: f64,
        n: usize,
        qa: f64,
        qb: Option<f64>,
    ) -> VariationalProblem {
        VariationalProblem::new(
            Grid::new(0.0, 1.0, n).unwrap(),
            FracOrder::new(alpha).unwrap(),
            1,
            Expr::parse(lagrangian).unwrap(),
            vec![qa],
            qb.map(|v| vec![v]),
        )
        .unwrap()
    }

    fn line(grid: Grid) -> Vec<GridFunction> {
        vec![GridFunction::sample(grid, |t| t).unwrap()]
    }

    #[test]
    fn rejects_undeclared_variables_and_bad_boundaries() {
        let grid = Grid::new(0.0, 1.0, 9).unwrap();
        let order = FracOrder::new(0.5).unwrap();
        let bad = Expr::parse("v1^2").unwrap();
        assert!(
            VariationalProblem::new(grid, order, 1, bad, vec![0.0], None).is_err()
        );
        let ok = Expr::parse("v0^2").unwrap();
        assert!(VariationalProblem::new(grid, order, 1, ok, vec![0.0, 1.0], None).is_err());
    }

    #[test]
    fn kinetic_action_of_straight_line() {
        let prob = problem("v0^2/2", 1.0, 129, 0.0, Some(1.0));
        let val = evaluate_functional(&prob, &line(prob.grid())).unwrap();
        assert!((val - 0.5).abs() < 1e-12, "got {val}");
    }

    #[test]
    fn action_of_constant_trajectory_vanishes() {
        for alpha in [0.4, 0.75, 1.0] {
            let prob = problem("v0^2/2", alpha, 65, 2.0, None);
            let q = vec![GridFunction::sample(prob.grid(), |_| 2.0).unwrap()];
            let val = evaluate_functional(&prob, &q).unwrap();
            assert!(val.abs() < 1e-13);
        }
    }

    #[test]
    fn half_order_action_of_straight_line() {
        // the Riesz-Caputo derivative of t at alpha = 1/2 is
        // (sqrt(t) + sqrt(1-t)) / (2 Gamma(3/2)); the action integral
        // evaluates to (1 + pi/4) / (2 pi)
        let expect = (1.0 + PI / 4.0) / (2.0 * PI);
        let prob = problem("v0^2/2", 0.5, 513, 0.0, Some(1.0));
        let val = evaluate_functional(&prob, &line(prob.grid())).unwrap();
        assert!((val - expect).abs() < 5e-3, "got {val}, want {expect}");
    }

    #[test]
    fn free_particle_residual_vanishes_on_line() {
        let prob = problem("v0^2/2", 1.0, 129, 0.0, Some(1.0));
        let res = el_residual(&prob, &line(prob.grid())).unwrap();
        assert!(res[0].inner_max() <= 1e-8, "max {}", res[0].inner_max());
    }

    #[test]
    fn constant_force_residual_is_constant()  {
        // L = v^2/2 - q along q = t^2: dL/dq = -1, momentum = 2t,
        // Riesz derivative of 2t is 2, so the residual is -3 everywhere
        let prob = problem("v0^2/2 - q0", 1.0, 129, 0.0, Some(1.0));
        let q = vec![GridFunction::sample(prob.grid(), |t| t * t).unwrap()];
        let res = el_residual(&prob, &q).unwrap();
        for i in 1..prob.grid().len() - 1 {
            assert!((res[0].value(i) + 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_trajectory_residual_vanishes_any_order() {
        for alpha in [0.3, 0.6, 1.0] {
            let prob = problem("v0^2/2", alpha, 65, 1.5, None);
            let q = vec![GridFunction::sample(prob.grid(), |_| 1.5).unwrap()];
            let res = el_residual(&prob, &q).unwrap();
            for i in 0..prob.grid().len() {
                if !res[0].is_flagged(i) {
                    assert!(res[0].value(i).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for alpha in [0.5, 1.0] {
            let prob = problem("v0^2/2 + q0^2/2 + t*q0", alpha, 33, 0.0, Some(1.0));
            let grid = prob.grid();
            let base: Vec<f64> = grid
                .nodes()
                .map(|t| t + 0.3 * rng.gen_range(-1.0..1.0))
                .collect();
            let q = vec![GridFunction::from_values(grid, base.clone()).unwrap()];
            let grad = ritz_gradient(&prob, &q).unwrap();
            let eps = 1e-6;
            for i in 1..grid.len() - 1 {
                let mut plus = base.clone();
                plus[i] += eps;
                let mut minus = base.clone();
                minus[i] -= eps;
                let fp = evaluate_functional(
                    &prob,
                    &[GridFunction::from_values(grid, plus).unwrap()],
                )
                .unwrap();
                let fm = evaluate_functional(
                    &prob,
                    &[GridFunction::from_values(grid, minus).unwrap()],
                )
                .unwrap();
                let fd = (fp - fm) / (2.0 * eps);
                let g = grad[0].value(i);
                assert!(
                    (g - fd).abs() <= 1e-6 * g.abs().max(fd.abs()).max(1e-3),
                    "alpha={alpha} node {i}: analytic {g}, fd {fd}"
                );
            }
        }
    }

    #[test]
    fn ritz_reproduces_classical_straight_line() {
        let prob = problem("v0^2/2", 1.0, 65, 0.0, Some(1.0));
        let sol = solve_ritz(&prob, InitialGuess::Linear).unwrap();
        let grid = prob.grid();
        for i in 0..grid.len() {
            assert!((sol.q[0].value(i) - grid.node(i)).abs() <= 1e-6);
        }
        assert!((sol.objective - 0.5).abs() < 1e-6);
    }

    #[test]
    fn ritz_drives_down_the_el_residual() {
        let prob = problem("v0^2/2", 0.75, 129, 0.0, Some(1.0));
        let guess = line(prob.grid());
        let before = el_residual(&prob, &guess).unwrap()[0].interior_max();
        let sol = solve_ritz(&prob, InitialGuess::Linear).unwrap();
        let after = el_residual(&prob, &sol.q).unwrap()[0].interior_max();
        assert!(
            after * 10.0 <= before,
            "residual before {before}, after {after}"
        );
        assert!(sol.objective <= evaluate_functional(&prob, &guess).unwrap() + 1e-12);
    }

    #[test]
    fn initial_guess_boundary_values_are_overwritten() {
        let prob = problem("v0^2/2", 1.0, 33, 0.0, Some(1.0));
        let bad = vec![GridFunction::sample(prob.grid(), |_| 5.0).unwrap()];
        let sol = solve_ritz(&prob, InitialGuess::Values(&bad)).unwrap();
        assert_eq!(sol.q[0].value(0), 0.0);
        assert_eq!(sol.q[0].value(32), 1.0);
    }

    #[test]
    fn ritz_residual_norm_does_not_grow_under_refinement() {
        let mut norms = Vec::new();
        for n in [65usize, 129, 257] {
            let prob = problem("v0^2/2", 0.75, n, 0.0, Some(1.0));
            let sol = solve_ritz(&prob, InitialGuess::Linear).unwrap();
            norms.push(el_residual(&prob, &sol.q).unwrap()[0].interior_l2());
        }
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] * 1.05, "norms {norms:?}");
        }
    }

    #[test]
    fn solver_requires_right_boundary() {
        let prob = problem("v0^2/2", 0.5, 33, 0.0, None);
        assert!(matches!(
            solve_ritz(&prob, InitialGuess::Linear),
            Err(VariationalError::MissingRightBoundary)
        ));
    }
}
