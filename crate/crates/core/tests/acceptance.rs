//! End-to-end acceptance suite. Each test prints one
//! `criterion N: PASS/FAIL (...)` line and then asserts the criterion.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use frac_noether::exprdsl::{BinOp, Expr, UnaryFn};
use frac_noether::fracops::{
    apply, apply_oracle, gamma, FracOrder, Grid, GridFunction, OperatorKind,
};
use frac_noether::noether::{noether_residual, SymmetryGenerators};
use frac_noether::optctrl::{
    hamiltonian_noether_residual, pontryagin_residual, solve_lq, ControlGenerators,
    ControlProblem, PontryaginTriple,
};
use frac_noether::variational::{
    el_residual, evaluate_functional, ritz_gradient, solve_ritz, InitialGuess,
    VariationalProblem,
};

fn report(criterion: u32, ok: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
}

/// Unflagged node-wise max difference between `f` and `g`.
fn max_gap(f: &GridFunction, g: &GridFunction) -> f64 {
    f.values()
        .iter()
        .zip(g.values())
        .zip(f.flags().iter().zip(g.flags()))
        .filter(|(_, (&a, &b))| !a && !b)
        .map(|((x, y), _)| (x - y).abs())
        .fold(0.0f64, f64::max)
}

#[test]
fn criterion_01_operator_half_sum_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let grid = Grid::new(0.0, 1.0, 129).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let c: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let f = GridFunction::sample(grid, |t| {
            c[0] + c[1] * t + c[2] * t * t + c[3] * (3.0 * t).sin() + c[4] * (0.5 * t).exp()
        })
        .unwrap();
        for alpha in [0.3, 0.7] {
            let order = FracOrder::new(alpha).unwrap();
            let pairs = [
                (
                    OperatorKind::RieszIntegral,
                    OperatorKind::LeftRLIntegral,
                    OperatorKind::RightRLIntegral,
                    1.0,
                ),
                (
                    OperatorKind::RieszDerivative,
                    OperatorKind::LeftRLDerivative,
                    OperatorKind::RightRLDerivative,
                    -1.0,
                ),
                (
                    OperatorKind::RieszCaputo,
                    OperatorKind::LeftCaputo,
                    OperatorKind::RightCaputo,
                    -1.0,
                ),
            ];
            for (combined, left_kind, right_kind, sign) in pairs {
                let whole = apply(combined, order, &f).unwrap();
                let left = apply(left_kind, order, &f).unwrap();
                let right = apply(right_kind, order, &f).unwrap();
                let half_sum = left.linear_combination(0.5, &right, 0.5 * sign).unwrap();
                worst = worst.max(max_gap(&whole, &half_sum));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst <= 1e-13 && elapsed < 1.0;
    report(
        1,
        ok,
        &format!("max half-sum gap {worst:.3e}, {elapsed:.2}s"),
    );
}

#[test]
fn criterion_02_caputo_l1_convergence_order() {
    let start = Instant::now();
    let order = FracOrder::new(0.5).unwrap();
    let gamma25 = gamma(2.5).unwrap();
    let mut logs = Vec::new();
    for n in [65usize, 129, 257, 513, 1025] {
        let grid = Grid::new(0.0, 1.0, n).unwrap();
        let f = GridFunction::sample(grid, |t| t * t).unwrap();
        let d = apply(OperatorKind::LeftCaputo, order, &f).unwrap();
        let err = (1..n - 1)
            .map(|i| {
                let t = grid.node(i);
                (d.value(i) - 2.0 * t.powf(1.5) / gamma25).abs()
            })
            .fold(0.0f64, f64::max);
        logs.push((grid.h().ln(), err.ln()));
    }
    // least-squares slope of log(err) against log(h)
    let m = logs.len() as f64;
    let sx: f64 = logs.iter().map(|(x, _)| x).sum();
    let sy: f64 = logs.iter().map(|(_, y)| y).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| x * y).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let elapsed = start.elapsed().as_secs_f64();
    let ok = slope >= 1.3 && elapsed < 5.0;
    report(2, ok, &format!("empirical order {slope:.3}, {elapsed:.2}s"));
}

#[test]
fn criterion_03_oracle_equivalence_on_polynomials() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let grid = Grid::new(0.0, 1.0, 257).unwrap();
    let n = grid.len();
    let probe_nodes = [n / 6, n / 3, n / 2, 2 * n / 3, 5 * n / 6];
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let expr = Expr::parse(&format!(
            "{} + {}*t + {}*t^2 + {}*t^3",
            c[0], c[1], c[2], c[3]
        ))
        .unwrap();
        let f = GridFunction::sample(grid, |t| {
            c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t
        })
        .unwrap();
        for alpha in [0.3, 0.5, 0.8] {
            let order = FracOrder::new(alpha).unwrap();
            for kind in OperatorKind::ALL {
                let discrete = apply(kind, order, &f).unwrap();
                let oracle: Vec<f64> = probe_nodes
                    .iter()
                    .map(|&i| {
                        apply_oracle(kind, order, &expr, 0.0, 1.0, grid.node(i), 1e-8).unwrap()
                    })
                    .collect();
                let scale = oracle
                    .iter()
                    .fold(1e-12f64, |m, v| m.max(v.abs()));
                for (&i, &o) in probe_nodes.iter().zip(&oracle) {
                    worst = worst.max((discrete.value(i) - o).abs() / scale);
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst <= 5e-2 && elapsed < 30.0;
    report(
        3,
        ok,
        &format!("max relative gap {worst:.3e}, {elapsed:.2}s"),
    );
}

#[test]
fn criterion_04_classical_reduction_second_order() {
    let order = FracOrder::new(1.0).unwrap();
    let cases: [(fn(f64) -> f64, fn(f64) -> f64, &str); 3] = [
        (|t| (2.0 * t).sin(), |t| 2.0 * (2.0 * t).cos(), "sin"),
        (|t| t.exp(), |t| t.exp(), "exp"),
        (|t| t * t * t - 0.5 * t, |t| 3.0 * t * t - 0.5, "poly"),
    ];
    let mut min_order = f64::INFINITY;
    for (f, df, _) in cases {
        let mut errors = Vec::new();
        for n in [65usize, 129, 257] {
            let grid = Grid::new(0.0, 1.0, n).unwrap();
            let gf = GridFunction::sample(grid, f).unwrap();
            let d = apply(OperatorKind::RieszCaputo, order, &gf).unwrap();
            let err = (1..n - 1)
                .map(|i| (d.value(i) - df(grid.node(i))).abs())
                .fold(0.0f64, f64::max);
            errors.push(err);
        }
        for w in errors.windows(2) {
            min_order = min_order.min((w[0] / w[1]).log2());
        }
    }
    let ok = min_order >= 1.8;
    report(4, ok, &format!("min measured order {min_order:.3}"));
}

#[test]
fn criterion_05_ritz_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let n = 33;
    let grid = Grid::new(0.0, 1.0, n).unwrap();
    let lagrangian = Expr::parse("v0^2/2 + q0^3/3 + sin(q0)*t").unwrap();
    let mut worst = 0.0f64;
    for alpha in [0.5, 1.0] {
        let prob = VariationalProblem::new(
            grid,
            FracOrder::new(alpha).unwrap(),
            1,
            lagrangian.clone(),
            vec![0.0],
            Some(vec![1.0]),
        )
        .unwrap();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q = vec![GridFunction::from_values(grid, values.clone()).unwrap()];
        let grad = ritz_gradient(&prob, &q).unwrap();
        for i in 1..n - 1 {
            let eps = 1e-5 * (1.0 + values[i].abs());
            let perturb = |delta: f64| {
                let mut v = values.clone();
                v[i] += delta;
                let qv = vec![GridFunction::from_values(grid, v).unwrap()];
                evaluate_functional(&prob, &qv).unwrap()
            };
            let fd = (perturb(eps) - perturb(-eps)) / (2.0 * eps);
            let rel = (grad[0].value(i) - fd).abs() / fd.abs().max(1e-12);
            worst = worst.max(rel);
        }
    }
    let ok = worst <= 1e-6;
    report(5, ok, &format!("max component relative error {worst:.3e}"));
}

#[test]
fn criterion_06_classical_noether_for_the_free_particle() {
    let grid = Grid::new(0.0, 1.0, 129).unwrap();
    let prob = VariationalProblem::new(
        grid,
        FracOrder::new(1.0).unwrap(),
        1,
        Expr::parse("v0^2/2").unwrap(),
        vec![0.0],
        Some(vec![1.0]),
    )
    .unwrap();
    let ext = solve_ritz(&prob, InitialGuess::Linear).unwrap();

    let momentum_gen =
        SymmetryGenerators::new(Expr::constant(0.0), vec![Expr::constant(1.0)]).unwrap();
    let momentum = noether_residual(&prob, &momentum_gen, &ext.q)
        .unwrap()
        .residual
        .interior_max();

    let energy_gen =
        SymmetryGenerators::new(Expr::constant(1.0), vec![Expr::constant(0.0)]).unwrap();
    let energy = noether_residual(&prob, &energy_gen, &ext.q)
        .unwrap()
        .residual
        .interior_max();

    let ok = momentum <= 1e-6 && energy <= 1e-6;
    report(
        6,
        ok,
        &format!("momentum residual {momentum:.3e}, energy residual {energy:.3e}"),
    );
}

#[test]
fn criterion_07_example1_conservation_refinement_and_symbolic_zero() {
    // Refinement of the conservation residual for the time-translation
    // law at alpha = 0.75.
    let alpha = 0.75;
    let order = FracOrder::new(alpha).unwrap();
    let gen = SymmetryGenerators::new(Expr::constant(1.0), vec![Expr::constant(0.0)]).unwrap();
    let mut norms = Vec::new();
    for n in [129usize, 257] {
        let prob = VariationalProblem::new(
            Grid::new(0.0, 1.0, n).unwrap(),
            order,
            1,
            Expr::parse("v0^2/2").unwrap(),
            vec![0.0],
            Some(vec![1.0]),
        )
        .unwrap();
        let ext = solve_ritz(&prob, InitialGuess::Linear).unwrap();
        norms.push(noether_residual(&prob, &gen, &ext.q).unwrap().interior_norm);
    }
    let ratio = norms[0] / norms[1];

    // At alpha = 1/2 the conserved quantity (1 - 2 alpha) p^2 / 2 is
    // identically zero: constant folding collapses it symbolically.
    let half = 0.5;
    let quantity = Expr::mul(
        Expr::constant(1.0 - 2.0 * half),
        Expr::div(
            Expr::pow(Expr::var("p"), Expr::constant(2.0)),
            Expr::constant(2.0),
        ),
    );
    let symbolically_zero = quantity.is_zero();

    let ok = ratio >= 2.0 && symbolically_zero;
    report(
        7,
        ok,
        &format!(
            "residual norms {:.3e} -> {:.3e} (ratio {ratio:.2}), symbolic zero: {symbolically_zero}",
            norms[0], norms[1]
        ),
    );
}

fn example2(alpha: f64, n: usize) -> ControlProblem {
    ControlProblem::new(
        Grid::new(0.0, 1.0, n).unwrap(),
        FracOrder::new(alpha).unwrap(),
        1,
        1,
        Expr::parse("(q0^2 + u0^2)/2").unwrap(),
        vec![Expr::parse("-q0 + u0").unwrap()],
        vec![1.0],
        None,
    )
    .unwrap()
}

fn triple_residual_max(prob: &ControlProblem, trip: &PontryaginTriple) -> f64 {
    let res = pontryagin_residual(prob, trip).unwrap();
    res.state
        .iter()
        .chain(&res.costate)
        .chain(&res.stationarity)
        .map(GridFunction::interior_max)
        .fold(0.0f64, f64::max)
}

#[test]
fn criterion_08_example2_lq_solves_and_hamiltonian_law() {
    let gen = ControlGenerators::new(
        Expr::constant(1.0),
        vec![Expr::constant(0.0)],
        vec![Expr::constant(0.0)],
        vec![Expr::constant(0.0)],
    )
    .unwrap();

    let mut worst_residual = 0.0f64;
    let mut worst_ratio = f64::INFINITY;
    for alpha in [0.6, 0.8] {
        let mut norms = Vec::new();
        for n in [129usize, 257] {
            let prob = example2(alpha, n);
            let trip = solve_lq(&prob).unwrap();
            worst_residual = worst_residual.max(triple_residual_max(&prob, &trip));
            norms.push(
                hamiltonian_noether_residual(&prob, &gen, &trip)
                    .unwrap()
                    .interior_norm,
            );
        }
        worst_ratio = worst_ratio.min(norms[0] / norms[1]);
    }

    // Classical limit: the Hamiltonian is conserved along the solution.
    let prob = example2(1.0, 129);
    let trip = solve_lq(&prob).unwrap();
    let h_expr = Expr::parse("(q0^2 + u0^2)/2 + p0*(-q0 + u0)").unwrap();
    let mut h_values = Vec::new();
    for i in 0..prob.grid().len() {
        let mut env = frac_noether::exprdsl::Env::new();
        env.set("t", prob.grid().node(i));
        env.set("q0", trip.q[0].value(i));
        env.set("u0", trip.u[0].value(i));
        env.set("p0", trip.p[0].value(i));
        h_values.push(h_expr.eval(&env).unwrap());
    }
    let h_max = h_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let h_min = h_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let h_scale = h_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let drift = (h_max - h_min) / (1.0 + h_scale);

    let ok = worst_residual <= 1e-8 && worst_ratio >= 2.0 && drift <= 1e-4;
    report(
        8,
        ok,
        &format!(
            "system residual {worst_residual:.3e}, worst halving ratio {worst_ratio:.2}, \
             classical drift {drift:.3e}"
        ),
    );
}

#[test]
fn criterion_09_reduction_to_the_variational_system() {
    let grid = Grid::new(0.0, 1.0, 129).unwrap();
    let order = FracOrder::new(0.7).unwrap();

    let vprob = VariationalProblem::new(
        grid,
        order,
        1,
        Expr::parse("v0^2/2 + q0^2/2").unwrap(),
        vec![0.0],
        Some(vec![1.0]),
    )
    .unwrap();
    let cprob = ControlProblem::new(
        grid,
        order,
        1,
        1,
        Expr::parse("u0^2/2 + q0^2/2").unwrap(),
        vec![Expr::parse("u0").unwrap()],
        vec![0.0],
        Some(vec![1.0]),
    )
    .unwrap();

    let q = GridFunction::sample(grid, |t| t + 0.3 * (std::f64::consts::PI * t).sin()).unwrap();
    let el = el_residual(&vprob, std::slice::from_ref(&q)).unwrap();

    // Eliminate the control by stationarity: u = RieszCaputo q, p = -dL/dv.
    let u = apply(OperatorKind::RieszCaputo, order, &q).unwrap();
    let p = GridFunction::from_values(grid, u.values().iter().map(|v| -v).collect()).unwrap();
    let trip = PontryaginTriple {
        q: vec![q],
        u: vec![u],
        p: vec![p],
    };
    let res = pontryagin_residual(&cprob, &trip).unwrap();
    let stat_max = res.stationarity[0]
        .values()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = max_gap(&res.costate[0], &el[0]);

    let ok = gap <= 1e-10 && stat_max <= 1e-10;
    report(
        9,
        ok,
        &format!("costate/Euler-Lagrange gap {gap:.3e}, stationarity {stat_max:.3e}"),
    );
}

// ----- deterministic expression generator for criterion 10 -----

fn gen_expr(rng: &mut ChaCha8Rng, depth: u32) -> Expr {
    if depth == 0 || rng.gen_range(0..5) == 0 {
        return if rng.gen_bool(0.5) {
            Expr::constant((rng.gen_range(-40i32..=40) as f64) / 8.0)
        } else {
            Expr::var(["t", "q0", "v0"][rng.gen_range(0..3)])
        };
    }
    match rng.gen_range(0..8) {
        0 => Expr::binary(BinOp::Add, gen_expr(rng, depth - 1), gen_expr(rng, depth - 1)),
        1 => Expr::binary(BinOp::Sub, gen_expr(rng, depth - 1), gen_expr(rng, depth - 1)),
        2 => Expr::binary(BinOp::Mul, gen_expr(rng, depth - 1), gen_expr(rng, depth - 1)),
        3 => Expr::binary(BinOp::Div, gen_expr(rng, depth - 1), gen_expr(rng, depth - 1)),
        4 => Expr::binary(
            BinOp::Pow,
            gen_expr(rng, depth - 1),
            Expr::constant(rng.gen_range(2i32..=3) as f64),
        ),
        5 => Expr::unary(UnaryFn::Sin, gen_expr(rng, depth - 1)),
        6 => Expr::unary(UnaryFn::Cos, gen_expr(rng, depth - 1)),
        _ => Expr::neg(gen_expr(rng, depth - 1)),
    }
}

#[test]
fn criterion_10_parser_round_trip_and_differentiation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);

    // 200 display/parse round trips checked by evaluation agreement.
    let mut round_trips = 0;
    while round_trips < 200 {
        let expr = gen_expr(&mut rng, 4);
        let reparsed = Expr::parse(&expr.to_string()).unwrap();
        let mut env = frac_noether::exprdsl::Env::new();
        let mut checked = false;
        for k in 0..5 {
            env.set("t", 0.1 + 0.2 * k as f64);
            env.set("q0", -0.4 + 0.25 * k as f64);
            env.set("v0", 0.3 - 0.15 * k as f64);
            match (expr.eval(&env), reparsed.eval(&env)) {
                (Ok(a), Ok(b)) => {
                    assert!(
                        (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
                        "round trip mismatch for `{expr}`: {a} vs {b}"
                    );
                    checked = true;
                }
                (Err(_), Err(_)) => {}
                (a, b) => panic!("round trip domain mismatch for `{expr}`: {a:?} vs {b:?}"),
            }
        }
        if checked {
            round_trips += 1;
        }
    }

    // 50 symbolic derivatives validated against central differences.
    let mut derivative_checks = 0;
    let mut worst = 0.0f64;
    while derivative_checks < 50 {
        let expr = gen_expr(&mut rng, 3);
        let var = ["t", "q0", "v0"][rng.gen_range(0..3)];
        let deriv = expr.diff(var);
        let mut env = frac_noether::exprdsl::Env::new();
        env.set("t", 0.37);
        env.set("q0", -0.21);
        env.set("v0", 0.55);
        let x = env.get(var).unwrap();
        let eps = 1e-6;
        let at = |env: &mut frac_noether::exprdsl::Env, v: f64| {
            env.set(var, v);
            expr.eval(env)
        };
        let (plus, minus, exact) = match (
            at(&mut env, x + eps),
            at(&mut env, x - eps),
            {
                env.set(var, x);
                deriv.eval(&env)
            },
        ) {
            (Ok(p), Ok(m), Ok(e)) => (p, m, e),
            _ => continue, // domain-restricted sample; draw another
        };
        let fd = (plus - minus) / (2.0 * eps);
        if !fd.is_finite() || fd.abs() > 1e6 {
            continue; // too stiff for a meaningful finite-difference check
        }
        let rel = (exact - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(rel);
        assert!(
            rel <= 1e-7,
            "derivative mismatch for `{expr}` d/d{var}: {exact} vs {fd}"
        );
        derivative_checks += 1;
    }

    report(
        10,
        true,
        &format!("200 round trips, 50 derivative checks, worst relative gap {worst:.3e}"),
    );
}
