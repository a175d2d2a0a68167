//! Invariance checks and fractional conservation-law residuals along
//! numerical extremals (Lagrangian form).
//!
//! Conservation is quantified as a residual of the fractional
//! conservation operator `dt_gamma`, reported with an interior norm that
//! excludes a boundary layer (the Riemann-Liouville boundary terms are
//! singular at the interval ends) and, when several grids are supplied, a
//! refinement trace. The discrete operators only approximately commute
//! with the continuous statements, so conservation is tested as a
//! norm-under-refinement study rather than an exact zero.

use std::collections::HashSet;

use thiserror::Error;

use crate::exprdsl::{Expr, ExprError};
use crate::fracops::{apply, dt_gamma, FracError, Grid, GridFunction, OperatorKind};
use crate::variational::{
    evaluate_functional, quadrature_weights, trajectory, VariationalError, VariationalProblem,
};

#[derive(Debug, Error)]
pub enum NoetherError {
    #[error("invalid generators: {0}")]
    BadGenerators(String),
    #[error("unsupported time transformation: {0}")]
    UnsupportedTimeTransform(String),
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Frac(#[from] FracError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Infinitesimal generators of a one-parameter transformation:
/// `t -> t + eps*tau(t, q)` and `q_c -> q_c + eps*xi_c(t, q)`.
#[derive(Debug, Clone)]
pub struct SymmetryGenerators {
    tau: Expr,
    xi: Vec<Expr>,
}

impl SymmetryGenerators {
    pub fn new(tau: Expr, xi: Vec<Expr>) -> Result<SymmetryGenerators, NoetherError> {
        if xi.is_empty() {
            return Err(NoetherError::BadGenerators(
                "need one xi generator per component".into(),
            ));
        }
        let mut declared: HashSet<String> = HashSet::new();
        declared.insert("t".to_string());
        for c in 0..xi.len() {
            declared.insert(format!("q{c}"));
        }
        for expr in std::iter::once(&tau).chain(&xi) {
            for v in expr.variables() {
                if !declared.contains(v) {
                    return Err(NoetherError::BadGenerators(format!(
                        "generator references undeclared variable `{v}`"
                    )));
                }
            }
        }
        Ok(SymmetryGenerators { tau, xi })
    }

    pub fn tau(&self) -> &Expr {
        &self.tau
    }

    pub fn xi(&self) -> &[Expr] {
        &self.xi
    }
}

/// A conservation-law residual with its interior norm and, when a
/// refinement study was run, the (N, norm) trace across grids.
#[derive(Debug, Clone)]
pub struct ConservationReport {
    pub residual: GridFunction,
    pub interior_norm: f64,
    pub grid_refinement_trace: Vec<(usize, f64)>,
}

impl ConservationReport {
    pub fn from_residual(residual: GridFunction) -> ConservationReport {
        let interior_norm = residual.interior_l2();
        let n = residual.grid().len();
        ConservationReport {
            residual,
            interior_norm,
            grid_refinement_trace: vec![(n, interior_norm)],
        }
    }

    /// Replaces the refinement trace (used when merging a study).
    pub fn with_trace(mut self, trace: Vec<(usize, f64)>) -> ConservationReport {
        self.grid_refinement_trace = trace;
        self
    }
}

fn check_generators(
    prob: &VariationalProblem,
    gen: &SymmetryGenerators,
) -> Result<(), NoetherError> {
    if gen.xi.len() != prob.n_components() {
        return Err(NoetherError::BadGenerators(format!(
            "{} xi generators for {} components",
            gen.xi.len(),
            prob.n_components()
        )));
    }
    Ok(())
}

/// Node-wise necessary condition of invariance without time
/// transformation: `sum_c dL/dq_c * xi_c + dL/dv_c * (Riesz-Caputo D of
/// xi_c along the trajectory)`. Vanishes identically when the functional
/// is invariant under the vertical transformation.
pub fn invariance_residual(
    prob: &VariationalProblem,
    gen: &SymmetryGenerators,
    q: &[GridFunction],
) -> Result<GridFunction, NoetherError> {
    check_generators(prob, gen)?;
    let traj = trajectory(prob.order(), q)?;
    let mut total = GridFunction::zeros(prob.grid());
    for (c, xi) in gen.xi.iter().enumerate() {
        let d2 = traj.sample(&prob.lagrangian().diff(&format!("q{c}")))?;
        let d3 = traj.sample(&prob.lagrangian().diff(&format!("v{c}")))?;
        let xi_traj = traj.sample(xi)?;
        let dxi = apply(OperatorKind::RieszCaputo, prob.order(), &xi_traj)?;
        let term = d2
            .pointwise_mul(&xi_traj)?
            .linear_combination(1.0, &d3.pointwise_mul(&dxi)?, 1.0)?;
        total = total.linear_combination(1.0, &term, 1.0)?;
    }
    Ok(total)
}

/// Fractional conservation of momentum (the law without time
/// transformation): residual of `sum_c dt_gamma(dL/dv_c, xi_c)` along the
/// trajectory.
pub fn momentum_law_residual(
    prob: &VariationalProblem,
    gen: &SymmetryGenerators,
    q: &[GridFunction],
) -> Result<ConservationReport, NoetherError> {
    check_generators(prob, gen)?;
    let traj = trajectory(prob.order(), q)?;
    let mut total = GridFunction::zeros(prob.grid());
    for (c, xi) in gen.xi.iter().enumerate() {
        let momentum = traj.sample(&prob.lagrangian().diff(&format!("v{c}")))?;
        let xi_traj = traj.sample(xi)?;
        let term = dt_gamma(&momentum, &xi_traj, prob.order())?;
        total = total.linear_combination(1.0, &term, 1.0)?;
    }
    Ok(ConservationReport::from_residual(total))
}

/// Full fractional Noether law with time transformation: residual of
/// `sum_c dt_gamma(dL/dv_c, xi_c) + dt_gamma(L - alpha * sum_c dL/dv_c *
/// v_c, tau)` along the trajectory. At order one with `tau = 1`, `xi = 0`
/// this is the classical energy law.
pub fn noether_residual(
    prob: &VariationalProblem,
    gen: &SymmetryGenerators,
    q: &[GridFunction],
) -> Result<ConservationReport, NoetherError> {
    check_generators(prob, gen)?;
    let momentum_part = momentum_law_residual(prob, gen, q)?.residual;
    let traj = trajectory(prob.order(), q)?;
    let alpha = prob.order().alpha();
    let mut energy = traj.sample(prob.lagrangian())?;
    for c in 0..prob.n_components() {
        let momentum = traj.sample(&prob.lagrangian().diff(&format!("v{c}")))?;
        let pv = momentum.pointwise_mul(&traj.v[c])?;
        energy = energy.linear_combination(1.0, &pv, -alpha)?;
    }
    let tau_traj = traj.sample(&gen.tau)?;
    let energy_part = dt_gamma(&energy, &tau_traj, prob.order())?;
    let total = momentum_part.linear_combination(1.0, &energy_part, 1.0)?;
    Ok(ConservationReport::from_residual(total))
}

/// Outcome of the direct numerical invariance check.
#[derive(Debug, Clone)]
pub enum InvarianceReport {
    /// Vertical path (`tau` identically zero): slope of
    /// `eps -> I[q + eps*xi]` at zero, fitted from the supplied epsilons,
    /// against the quadrature of [`invariance_residual`].
    VerticalSlope {
        slope: f64,
        residual_integral: f64,
        relative_mismatch: f64,
        /// (eps, I[q + eps*xi] - I[q]) samples used for the fit.
        deltas: Vec<(f64, f64)>,
        invariant: bool,
    },
    /// Affine time shift: the functional over the transformed interval
    /// against the original, per epsilon.
    TimeShift {
        /// (eps, original functional, transformed functional).
        pairs: Vec<(f64, f64, f64)>,
        max_relative_gap: f64,
        invariant: bool,
    },
}

impl InvarianceReport {
    pub fn invariant(&self) -> bool {
        match self {
            InvarianceReport::VerticalSlope { invariant, .. } => *invariant,
            InvarianceReport::TimeShift { invariant, .. } => *invariant,
        }
    }
}

fn linear_interpolate(grid: Grid, values: &[f64], t: f64) -> f64 {
    let h = grid.h();
    let s = ((t - grid.a()) / h).clamp(0.0, (grid.len() - 1) as f64);
    let i = (s.floor() as usize).min(grid.len() - 2);
    let frac = s - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

const INVARIANCE_TOL: f64 = 1e-6;

/// Checks invariance directly from the definition by perturbing the
/// trajectory (and, for affine `tau`, the time variable) with each
/// epsilon and comparing functional values.
pub fn check_invariance_numeric(
    prob: &VariationalProblem,
    gen: &SymmetryGenerators,
    q: &[GridFunction],
    eps_list: &[f64],
) -> Result<InvarianceReport, NoetherError> {
    check_generators(prob, gen)?;
    if eps_list.is_empty() {
        return Err(NoetherError::BadGenerators("empty epsilon list".into()));
    }
    let base = evaluate_functional(prob, q)?;
    let traj = trajectory(prob.order(), q)?;
    let xi_traj: Vec<GridFunction> = gen
        .xi
        .iter()
        .map(|xi| traj.sample(xi))
        .collect::<Result<_, _>>()?;

    if gen.tau.is_zero() {
        let mut deltas = Vec::with_capacity(eps_list.len());
        for &eps in eps_list {
            let perturbed: Vec<GridFunction> = q
                .iter()
                .zip(&xi_traj)
                .map(|(qc, xc)| qc.linear_combination(1.0, xc, eps))
                .collect::<Result<_, _>>()?;
            deltas.push((eps, evaluate_functional(prob, &perturbed)? - base));
        }
        // least-squares fit delta ~ slope*eps + c*eps^2 (no constant term)
        let (mut s2, mut s3, mut s4, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(e, d) in &deltas {
            s2 += e * e;
            s3 += e * e * e;
            s4 += e * e * e * e;
            r1 += e * d;
            r2 += e * e * d;
        }
        let det = s2 * s4 - s3 * s3;
        let slope = if det.abs() > 1e-300 {
            (r1 * s4 - r2 * s3) / det
        } else {
            r1 / s2
        };
        let residual = invariance_residual(prob, gen, q)?;
        let w = quadrature_weights(prob.grid());
        let residual_integral: f64 = residual
            .values()
            .iter()
            .zip(&w)
            .map(|(r, w)| r * w)
            .sum();
        let relative_mismatch = (slope - residual_integral).abs()
            / slope.abs().max(residual_integral.abs()).max(1.0);
        let invariant = slope.abs() <= INVARIANCE_TOL * (1.0 + base.abs());
        return Ok(InvarianceReport::VerticalSlope {
            slope,
            residual_integral,
            relative_mismatch,
            deltas,
            invariant,
        });
    }

    // time transformation: supported for tau affine in t and free of q
    for v in gen.tau.variables() {
        if v != "t" {
            return Err(NoetherError::UnsupportedTimeTransform(format!(
                "tau depends on `{v}`; only tau(t) affine in t is supported"
            )));
        }
    }
    let dtau = gen.tau.diff("t");
    if !dtau.diff("t").is_zero() {
        return Err(NoetherError::UnsupportedTimeTransform(
            "tau is not affine in t".into(),
        ));
    }
    let grid = prob.grid();
    let c1 = dtau.eval_single("t", grid.a())?;
    let c0 = gen.tau.eval_single("t", grid.a())? - c1 * grid.a();

    let mut pairs = Vec::with_capacity(eps_list.len());
    let mut max_relative_gap = 0.0f64;
    for &eps in eps_list {
        let stretch = 1.0 + eps * c1;
        if stretch <= 0.0 {
            return Err(NoetherError::UnsupportedTimeTransform(format!(
                "eps = {eps} reverses the time direction"
            )));
        }
        let new_a = grid.a() + eps * (c0 + c1 * grid.a());
        let new_b = grid.b() + eps * (c0 + c1 * grid.b());
        let new_grid = Grid::new(new_a, new_b, grid.len())?;
        let mut transformed = Vec::with_capacity(q.len());
        for (qc, xi) in gen.xi.iter().enumerate() {
            let mut values = Vec::with_capacity(grid.len());
            for tbar in new_grid.nodes() {
                let t = ((tbar - eps * c0) / stretch).clamp(grid.a(), grid.b());
                let qval = linear_interpolate(grid, q[qc].values(), t);
                let mut env = crate::exprdsl::Env::new();
                env.set("t", t);
                for (c, qf) in q.iter().enumerate() {
                    env.set(&format!("q{c}"), linear_interpolate(grid, qf.values(), t));
                }
                let xival = xi.eval(&env)?;
                values.push(qval + eps * xival);
            }
            transformed.push(GridFunction::from_values(new_grid, values)?);
        }
        let shifted = evaluate_functional(&prob.on_grid(new_grid), &transformed)?;
        pairs.push((eps, base, shifted));
        max_relative_gap =
            max_relative_gap.max((shifted - base).abs() / (1.0 + base.abs()));
    }
    let invariant = max_relative_gap <= INVARIANCE_TOL;
    Ok(InvarianceReport::TimeShift {
        pairs,
        max_relative_gap,
        invariant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::FracOrder;
    use crate::variational::{el_residual, solve_ritz, InitialGuess};

    fn problem(lagrangian: &str, alpha: f64, n: usize) -> VariationalProblem {
        VariationalProblem::new(
            Grid::new(0.0, 1.0, n).unwrap(),
            FracOrder::new(alpha).unwrap(),
            1,
            Expr::parse(lagrangian).unwrap(),
            vec![0.0],
            Some(vec![1.0]),
        )
        .unwrap()
    }

    fn generators(tau: &str, xi: &str) -> SymmetryGenerators {
        SymmetryGenerators::new(Expr::parse(tau).unwrap(), vec![Expr::parse(xi).unwrap()])
            .unwrap()
    }

    fn line(grid: Grid) -> Vec<GridFunction> {
        vec![GridFunction::sample(grid, |t| t).unwrap()]
    }

    #[test]
    fn rejects_foreign_generator_variables() {
        let bad = SymmetryGenerators::new(
            Expr::parse("u0").unwrap(),
            vec![Expr::parse("1").unwrap()],
        );
        assert!(matches!(bad, Err(NoetherError::BadGenerators(_))));
    }

    #[test]
    fn translation_invariance_of_kinetic_lagrangian() {
        let prob = problem("v0^2/2", 0.6, 65);
        let gen = generators("0", "1");
        let q = vec![GridFunction::sample(prob.grid(), |t| t * t - 0.3 * t).unwrap()];
        let res = invariance_residual(&prob, &gen, &q).unwrap();
        for v in res.values() {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn harmonic_lagrangian_invariance_defect_is_q() {
        let prob = problem("q0^2/2 + v0^2/2", 0.5, 65);
        let gen = generators("0", "1");
        let q = line(prob.grid());
        let res = invariance_residual(&prob, &gen, &q).unwrap();
        for (i, v) in res.values().iter().enumerate() {
            assert!((v - prob.grid().node(i)).abs() < 1e-13);
        }
    }

    #[test]
    fn classical_scaling_invariance_defect_is_one() {
        let prob = problem("v0^2/2", 1.0, 129);
        let gen = generators("0", "t");
        let res = invariance_residual(&prob, &gen, &line(prob.grid())).unwrap();
        for v in res.values() {
            assert!((v - 1.0).abs() < 1e-11, "got {v}");
        }
    }

    #[test]
    fn classical_momentum_is_conserved_on_the_line() {
        let prob = problem("v0^2/2", 1.0, 129);
        let gen = generators("0", "1");
        let report = momentum_law_residual(&prob, &gen, &line(prob.grid())).unwrap();
        assert!(report.residual.interior_max() < 1e-12);
        assert!(report.interior_norm < 1e-12);
    }

    #[test]
    fn zero_generator_gives_zero_residual() {
        let prob = problem("q0^2 + v0^2/2", 0.7, 65);
        let gen = generators("0", "0");
        let q = vec![GridFunction::sample(prob.grid(), |t| t.sin()).unwrap()];
        let report = momentum_law_residual(&prob, &gen, &q).unwrap();
        for v in report.residual.values() {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn momentum_residual_scales_linearly_in_xi() {
        let prob = problem("v0^2/2 + t*q0", 0.6, 65);
        let q = vec![GridFunction::sample(prob.grid(), |t| t * t).unwrap()];
        let base = momentum_law_residual(&prob, &generators("0", "1 + t"), &q).unwrap();
        let scaled =
            momentum_law_residual(&prob, &generators("0", "3*(1 + t)"), &q).unwrap();
        for i in 0..prob.grid().len() {
            assert!(
                (scaled.residual.value(i) - 3.0 * base.residual.value(i)).abs() <= 1e-12,
                "node {i}"
            );
        }
    }

    #[test]
    fn noether_with_zero_tau_equals_momentum_law() {
        let prob = problem("q0^2/2 + v0^2/2", 0.75, 65);
        let gen = generators("0", "1 + q0");
        let q = vec![GridFunction::sample(prob.grid(), |t| t.exp() - 1.0).unwrap()];
        let a = noether_residual(&prob, &gen, &q).unwrap();
        let b = momentum_law_residual(&prob, &gen, &q).unwrap();
        for i in 0..prob.grid().len() {
            assert!((a.residual.value(i) - b.residual.value(i)).abs() <= 1e-13);
        }
    }

    #[test]
    fn classical_energy_is_conserved_on_the_line() {
        let prob = problem("v0^2/2", 1.0, 129);
        let gen = generators("1", "0");
        let report = noether_residual(&prob, &gen, &line(prob.grid())).unwrap();
        assert!(
            report.residual.interior_max() < 1e-11,
            "max {}",
            report.residual.interior_max()
        );
    }

    #[test]
    fn momentum_law_interior_norm_shrinks_under_refinement() {
        // invariance + extremality => the momentum-law residual must not
        // grow under refinement
        let gen = generators("0", "1");
        let mut norms = Vec::new();
        for n in [65usize, 129, 257] {
            let prob = problem("v0^2/2", 0.75, n);
            let sol = solve_ritz(&prob, InitialGuess::Linear).unwrap();
            let inv = invariance_residual(&prob, &gen, &sol.q).unwrap();
            assert!(inv.interior_max() < 1e-12);
            assert!(el_residual(&prob, &sol.q).unwrap()[0].interior_l2() < 1e-1);
            norms.push(momentum_law_residual(&prob, &gen, &sol.q).unwrap().interior_norm);
        }
        for w in norms.windows(2) {
            assert!(w[1] <= 1.2 * w[0], "norms {norms:?}");
        }
    }

    #[test]
    fn vertical_check_confirms_invariance() {
        let prob = problem("v0^2/2", 0.6, 65);
        let gen = generators("0", "1");
        let report = check_invariance_numeric(
            &prob,
            &gen,
            &line(prob.grid()),
            &[-1e-2, -1e-3, 1e-3, 1e-2],
        )
        .unwrap();
        match report {
            InvarianceReport::VerticalSlope {
                slope, invariant, ..
            } => {
                assert!(slope.abs() <= 1e-8, "slope {slope}");
                assert!(invariant);
            }
            _ => panic!("expected vertical-slope report"),
        }
    }

    #[test]
    fn vertical_check_flags_non_invariance_and_matches_residual() {
        let prob = problem("q0*v0", 0.5, 129);
        let gen = generators("0", "1");
        let report = check_invariance_numeric(
            &prob,
            &gen,
            &line(prob.grid()),
            &[-1e-2, -1e-3, 1e-3, 1e-2],
        )
        .unwrap();
        match report {
            InvarianceReport::VerticalSlope {
                slope,
                residual_integral,
                relative_mismatch,
                invariant,
                ..
            } => {
                assert!(!invariant, "slope {slope} should be flagged");
                assert!(slope.abs() > 1e-3);
                assert!(
                    relative_mismatch <= 1e-4,
                    "slope {slope} vs integral {residual_integral}"
                );
            }
            _ => panic!("expected vertical-slope report"),
        }
    }

    #[test]
    fn time_shift_of_autonomous_lagrangian_is_invariant() {
        let prob = problem("v0^2/2 + q0^2", 0.7, 65);
        let gen = generators("1", "0");
        let report = check_invariance_numeric(
            &prob,
            &gen,
            &line(prob.grid()),
            &[-1e-2, 1e-3, 1e-2],
        )
        .unwrap();
        match report {
            InvarianceReport::TimeShift {
                max_relative_gap,
                invariant,
                ..
            } => {
                assert!(max_relative_gap <= 1e-6, "gap {max_relative_gap}");
                assert!(invariant);
            }
            _ => panic!("expected time-shift report"),
        }
    }

    #[test]
    fn general_time_transform_is_rejected() {
        let prob = problem("v0^2/2", 0.5, 33);
        let q = line(prob.grid());
        let gen = generators("t^2", "0");
        assert!(matches!(
            check_invariance_numeric(&prob, &gen, &q, &[1e-3]),
            Err(NoetherError::UnsupportedTimeTransform(_))
        ));
        let gen = SymmetryGenerators::new(
            Expr::parse("q0").unwrap(),
            vec![Expr::parse("0").unwrap()],
        )
        .unwrap();
        assert!(matches!(
            check_invariance_numeric(&prob, &gen, &q, &[1e-3]),
            Err(NoetherError::UnsupportedTimeTransform(_))
        ));
    }
}
