//! Values that are only trusted after an independent brute-force check.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lipdual::certificates::{
    duality_report, eta, extract_dual, intersection_point, saddle_lambda_scale,
};
use lipdual::costs::CostKind;
use lipdual::gauge::gauge;
use lipdual::minmax::{
    default_params, grad_lambda, objective, saddle_value_factor, solve, solve_eliminated_form,
    SolverConfig,
};
use lipdual::oracle::{brute_force_solve, lipschitz_allowance, oracle_gauge, GridSpec};
use lipdual::problem::{LinearOperator, PrimalSolution, ProblemInstance, VectorN};
use lipdual::suite::{oracle_instance, oracle_suite, SuiteInstance};

fn identity_instance(x: [f64; 2], eps: f64, delta: f64) -> ProblemInstance {
    ProblemInstance::with_kind(x.to_vec(), LinearOperator::identity(2), eps, delta, CostKind::L1)
        .unwrap()
}

fn oracle_c(inst: &ProblemInstance, bound: f64, step: f64) -> (f64, VectorN) {
    let r = brute_force_solve(inst, &GridSpec::new(bound, step).unwrap()).unwrap();
    (r.cost.finite().unwrap(), r.f.unwrap())
}

fn tight() -> SolverConfig {
    SolverConfig {
        tol: 1e-12,
        ..SolverConfig::default()
    }
}

#[test]
fn ball_instance_matches_oracle() {
    let inst = identity_instance([2.0, 0.0], 0.5, 0.0);
    let (c, f) = oracle_c(&inst, 3.0, 1e-3);
    assert!((c - 1.5).abs() <= 1e-3);
    assert!((f[0] - 1.5).abs() <= 1e-3 && f[1].abs() <= 1e-3);

    let out = solve(&inst, &SolverConfig::default()).unwrap();
    assert!((out.solution.cost_value - c).abs() <= 2e-3);
    assert!((out.solution.cost_value - 1.5).abs() <= 1e-6);
    let lam = out.certificate.lambda.as_dvector();
    assert!((lam - DVector::from_vec(vec![1.0, 0.0])).norm() <= 1e-6);

    let elim = solve_eliminated_form(&inst, &SolverConfig::default()).unwrap();
    assert!((elim.solution.cost_value - c).abs() <= 2e-3);
}

#[test]
fn inflated_instance_matches_oracle() {
    let inst = identity_instance([2.0, 0.0], 0.0, 0.5);
    let (c, f) = oracle_c(&inst, 3.0, 1e-3);
    assert!((c - 4.0 / 3.0).abs() <= 2e-3);

    let out = solve(&inst, &SolverConfig::default()).unwrap();
    assert!((out.solution.cost_value - c).abs() <= 2e-3);
    assert!((out.solution.f.as_dvector() - f.as_dvector()).amax() <= 2e-3);

    // Dual read off the oracle's representation.
    let cert = extract_dual(&inst, &f).unwrap();
    let expected = DVector::from_vec(vec![2.0 / 3.0, 0.0]);
    assert!((cert.lambda.as_dvector() - &expected).norm() <= 5e-3);
    assert!((cert.margin - c).abs() <= 5e-3);

    // With epsilon = 0 the intersection point is the target itself.
    let sol = PrimalSolution::from_representation(&inst, c, f).unwrap();
    let y = intersection_point(&inst, &sol).unwrap();
    assert_eq!(y.to_vec(), vec![2.0, 0.0]);
}

#[test]
fn inflated_gauge_matches_oracle() {
    let phi = LinearOperator::identity(2);
    let cost: std::sync::Arc<dyn lipdual::costs::Cost> =
        std::sync::Arc::new(lipdual::costs::CostModel::new(CostKind::L1, 2).unwrap());
    let z = VectorN::new(vec![2.0, 0.0]).unwrap();
    let grid = GridSpec::new(3.0, 1e-3).unwrap();
    let by_grid = oracle_gauge(&z, &phi, 1.0, cost.clone(), &grid).unwrap().finite().unwrap();
    assert!((by_grid - 1.0).abs() <= 2e-3);
    let g = gauge(&z, &phi, 1.0, cost, 1e-9).unwrap();
    assert!((g.value.finite().unwrap() - by_grid).abs() <= 2e-3);
    assert!((g.value.finite().unwrap() - 1.0).abs() <= 1e-8);
}

#[test]
fn saddle_value_equals_oracle_cost() {
    let inst = identity_instance([2.0, 0.0], 0.5, 0.0);
    let (c, _) = oracle_c(&inst, 3.0, 1e-3);
    let cfg = SolverConfig::default();
    let out = solve(&inst, &cfg).unwrap();
    let scale = saddle_lambda_scale(out.solution.cost_value, 1.0, cfg.r, cfg.q).unwrap();
    let lam = VectorN::from_dvector(out.certificate.lambda.as_dvector() * scale).unwrap();
    let value = objective(&lam, &out.solution.h, &inst, cfg.r, cfg.q).unwrap();
    assert!((value - c).abs() <= 2e-3);
    assert!((value - 1.5).abs() <= 1e-6);
}

#[test]
fn order_two_parameters_give_unit_factor() {
    let (r, q, s) = default_params(2.0).unwrap();
    assert!((r - 3.0 * 2f64.powf(-2.0 / 3.0)).abs() <= 1e-12);
    assert!((q - 2.0 / 3.0).abs() <= 1e-12);
    // Evaluate the factor independently of `default_params`.
    let direct = (1.0 - q) * (q.powf(q) * r).powf(1.0 / (1.0 - q));
    assert!((direct - 1.0).abs() <= 1e-12);
    assert!((s - 1.0).abs() <= 1e-12);
    assert!((saddle_value_factor(r, q) - 1.0).abs() <= 1e-12);
}

fn suite() -> Vec<SuiteInstance> {
    oracle_suite(1..=50, &[1, 2, 3]).unwrap()
}

#[test]
fn iterates_bracket_the_oracle_value() {
    for case in suite().iter().step_by(3) {
        let inst = &case.instance;
        let oracle = brute_force_solve(inst, &case.grid).unwrap().cost.finite().unwrap();
        let allow = (2.0 * lipschitz_allowance(inst) * case.grid.step).max(1e-4);
        let out = solve(inst, &tight()).unwrap();
        for row in &out.trace.rows {
            assert!(row.dual_lower <= oracle + allow + 1e-8, "{}: lower {}", case.id, row.dual_lower);
            assert!(row.primal_upper >= oracle - allow - 1e-8, "{}: upper {}", case.id, row.primal_upper);
            assert!(row.margin > 0.0, "{}: margin {}", case.id, row.margin);
        }
        assert!(inst.cost.membership(out.state.h.as_dvector(), 1e-9));
    }
}

#[test]
fn mid_run_report_brackets_oracle() {
    let case = oracle_instance(5, &[1, 2, 3]).unwrap();
    let inst = &case.instance;
    let oracle = brute_force_solve(inst, &case.grid).unwrap().cost.finite().unwrap();
    let allow = (2.0 * lipschitz_allowance(inst) * case.grid.step).max(1e-4);
    let out = solve(inst, &tight()).unwrap();
    // The first trace row is an early iterate with a visible gap.
    let first = out.trace.rows.first().unwrap();
    assert!(first.gap > 0.0);
    assert!(first.dual_lower <= oracle + allow && oracle - allow <= first.primal_upper);

    let report = duality_report(inst, &out.solution, &out.certificate).unwrap();
    let upper = report.primal_upper.finite().unwrap();
    assert!(report.dual_lower <= oracle + allow && oracle - allow <= upper);
    assert!(report.optimal);
}

#[test]
fn eta_at_solution_matches_oracle() {
    for case in suite().iter().step_by(2) {
        let inst = &case.instance;
        if inst.is_trivial() {
            continue;
        }
        let oracle = brute_force_solve(inst, &case.grid).unwrap().cost.finite().unwrap();
        let allow = (2.0 * lipschitz_allowance(inst) * case.grid.step).max(1e-4);
        let out = solve(inst, &tight()).unwrap();
        let e = eta(&out.solution.h, inst).unwrap().finite().unwrap();
        assert!(e >= oracle - allow, "{}", case.id);
        assert!((e - out.solution.scale).abs() <= 1e-6, "{}", case.id);
    }
}

#[test]
fn residual_is_colinear_with_dual() {
    for case in suite() {
        let inst = &case.instance;
        if inst.is_trivial() || inst.epsilon + inst.delta == 0.0 {
            continue;
        }
        let out = solve(inst, &tight()).unwrap();
        let w = inst.x.as_dvector() - inst.phi.apply(&out.solution.f).unwrap().into_inner();
        let lam = out.certificate.lambda.as_dvector();
        let cos = w.dot(lam) / (w.norm() * lam.norm());
        let angle = cos.clamp(-1.0, 1.0).acos();
        assert!(angle <= 1e-6, "{}: angle {angle:e}", case.id);
    }
}

#[test]
fn gradient_vanishes_at_certified_saddle() {
    let cfg = tight();
    for case in suite() {
        let inst = &case.instance;
        let Ok(out) = solve(inst, &cfg) else { continue };
        if inst.is_trivial() || out.certificate.degenerate || !out.certificate.in_lambda {
            continue;
        }
        // Smoothness of the margin term needs lambda away from zero.
        if out.state.lambda.as_dvector().norm() == 0.0 {
            continue;
        }
        let g = grad_lambda(&out.state.lambda, &out.solution.h, inst, cfg.r, cfg.q).unwrap();
        assert!(g.as_dvector().norm() <= 1e-4, "{}: |g| = {:e}", case.id, g.as_dvector().norm());
    }
}

#[test]
fn eliminated_form_agrees_with_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let cfg = SolverConfig::default();
    for _ in 0..20 {
        let k = rng.random_range(1..=4usize);
        let n = rng.random_range(2..=4usize);
        let kind = CostKind::ALL[rng.random_range(0..3usize)];
        let delta = if rng.random_bool(0.5) { 0.0 } else { 0.5 };
        let phi = LinearOperator::from_rows(
            &(0..n)
                .map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect::<Vec<Vec<f64>>>(),
        )
        .unwrap();
        let f: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let x = phi.apply(&VectorN::new(f).unwrap()).unwrap().to_vec();
        let eps = 0.1 * x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let inst = ProblemInstance::with_kind(x, phi, eps, delta, kind).unwrap();
        let a = solve(&inst, &cfg).unwrap().solution.cost_value;
        let b = solve_eliminated_form(&inst, &cfg).unwrap().solution.cost_value;
        assert!((a - b).abs() <= 2.0 * cfg.tol, "{a} vs {b}");
    }
}

#[test]
fn nonnegative_cone_keeps_nonnegative_optima() {
    let mut checked = 0;
    for case in suite() {
        let inst = &case.instance;
        if inst.cost.kind() != Some(CostKind::L1) {
            continue;
        }
        let oracle = brute_force_solve(inst, &case.grid).unwrap();
        let f = oracle.f.unwrap();
        if f.iter().any(|&v| v < 0.0) {
            continue;
        }
        let conic = ProblemInstance::with_kind(
            inst.x.to_vec(),
            inst.phi.clone(),
            inst.epsilon,
            inst.delta,
            CostKind::L1Nonneg,
        )
        .unwrap();
        let a = solve(inst, &tight()).unwrap().solution.cost_value;
        let b = solve(&conic, &tight()).unwrap().solution.cost_value;
        assert!((a - b).abs() <= 1e-4, "{}: {a} vs {b}", case.id);
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn refining_the_grid_changes_little() {
    let mut checked = 0;
    for seed in 1..=20u64 {
        let case = oracle_instance(seed, &[1, 2]).unwrap();
        let inst = &case.instance;
        if case.grid.bound / case.grid.step > 5e3 || inst.is_trivial() {
            continue;
        }
        checked += 1;
        let coarse = brute_force_solve(inst, &case.grid).unwrap().cost.finite().unwrap();
        let fine_grid = GridSpec::new(case.grid.bound, case.grid.step / 2.0).unwrap();
        let fine = brute_force_solve(inst, &fine_grid).unwrap().cost.finite().unwrap();
        let allow = lipschitz_allowance(inst) * case.grid.step;
        assert!(fine <= coarse + allow, "{}: {fine} vs {coarse}", case.id);
    }
    assert!(checked > 0);
}
