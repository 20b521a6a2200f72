use shrinker_lab::flow::{
    flow_curve, graph_rhs, menger, ClosedFlowConfig, FlowError, GraphState, GraphStepper, Q1Model, Q1Variant, StopReason,
};
use shrinker_lab::geometry::sphere_profile;
use shrinker_lab::spectrum::{assemble_l, eigensolve, OuterClosure};
use shrinker_lab::wazewski::{
    box_membership, shoot, BoxSpec, ModeNorms, ProbeBackend, ShootConfig, ShootStatus, SurrogateBackend, WazewskiError,
};

#[test]
fn menger_on_circle() {
    for r in [0.1, 1.0, 7.5] {
        let pt = |a: f64| [r * a.cos(), r * a.sin()];
        let k = menger(pt(0.1), pt(0.4), pt(1.3));
        assert!((k - 1.0 / r).abs() < 1e-12 * (1.0 / r), "{k}");
        let k = menger(pt(1.3), pt(0.4), pt(0.1));
        assert!((k + 1.0 / r).abs() < 1e-12 * (1.0 / r));
    }
    assert_eq!(menger([0.0, 0.0], [1.0, 1.0], [2.0, 2.0]), 0.0);
}

#[test]
fn round_sphere_shrinks_by_radius_law() {
    for n in [2, 3] {
        let p = sphere_profile(n, 120);
        let pts: Vec<[f64; 2]> = p.x.iter().zip(&p.r).map(|(&x, &r)| [x, r]).collect();
        let cps = [0.25, 0.5, 0.75];
        let traj = flow_curve(pts, &ClosedFlowConfig::new(n), &cps, 0.9, |_| true);
        assert_eq!(traj.stop, StopReason::Reached);
        for s in &traj.states {
            let exact = (2.0 * n as f64 * (1.0 - s.t)).sqrt();
            for (x, r) in s.x.iter().zip(&s.r) {
                let rho = x.hypot(*r);
                assert!((rho - exact).abs() < 2e-3 * exact, "n = {n}, t = {}: {rho} vs {exact}", s.t);
            }
            // |A| = √n/ρ, so the type-I ratio is √n/√(2n)
            assert!((s.type_i_ratio - 0.5_f64.sqrt()).abs() < 5e-3);
        }
    }
}

#[test]
fn unstable_modes_grow_at_their_rates() {
    let p = sphere_profile(2, 200);
    let st = assemble_l(&p, OuterClosure::Dirichlet).unwrap();
    let basis = eigensolve(&st, 4, None).unwrap();
    let stepper = GraphStepper::new(&p, &st, &basis, None);
    for k in 0..2 {
        let eps = 1e-6;
        let h: Vec<f64> = basis.modes[k].iter().map(|v| eps * v).collect();
        let s0 = GraphState::new(0.0, h, &p, &basis, false);
        let out = stepper.evolve(s0.clone(), 0.5, 0.5).unwrap();
        let end = out.last().unwrap();
        let growth = end.norms.coeffs[k] / s0.norms.coeffs[k];
        let exact = (-basis.lambda[k] * 0.5).exp();
        assert!((growth - exact).abs() < 2e-3 * exact, "mode {k}: {growth} vs {exact}");
    }
}

#[test]
fn zero_graph_is_fixed() {
    let p = sphere_profile(2, 200);
    let st = assemble_l(&p, OuterClosure::Dirichlet).unwrap();
    let basis = eigensolve(&st, 4, None).unwrap();
    let out = GraphStepper::new(&p, &st, &basis, None).evolve(GraphState::zero(&p, &basis), 0.2, 0.1).unwrap();
    assert!(out.iter().all(|s| s.h.iter().all(|&v| v == 0.0)));
}

#[test]
fn large_graph_is_degenerate() {
    let p = sphere_profile(2, 200);
    let st = assemble_l(&p, OuterClosure::Dirichlet).unwrap();
    let basis = eigensolve(&st, 4, None).unwrap();
    // |A| = 1/√2 on the sphere, so h = 1 gives |h||A| ≈ 0.71
    let s = GraphState::new(0.0, vec![1.0; p.len()], &p, &basis, false);
    assert!(matches!(graph_rhs(&s, &p, OuterClosure::Dirichlet, None), Err(FlowError::GraphDegenerate { .. })));
}

#[test]
fn forcing_respects_caps_and_support() {
    for variant in [Q1Variant::Half, Q1Variant::Quarter] {
        let q = Q1Model::new(10.0, 4.0, 0.7, variant);
        for tau in [0.0, 0.5, 2.0] {
            let (lo, hi) = q.support(tau);
            assert!((hi - 10.0 * (tau + 4.0_f64).exp()).abs() < 1e-9 * hi);
            assert_eq!(q.eval(lo * 0.999, tau), 0.0);
            assert_eq!(q.eval(hi * 1.001, tau), 0.0);
            let mut peak: f64 = 0.0;
            for k in 1..4000 {
                let f = lo + (hi - lo) * k as f64 / 4000.0;
                let v = q.eval(f, tau);
                peak = peak.max(v.abs());
                assert!(v.abs() <= q.value_cap(tau) * (1.0 + 1e-12));
                // |∇f| ≤ √f on the shrinker
                assert!(q.eval_df(f, tau).abs() * f.sqrt() <= q.grad_cap(tau) * (1.0 + 1e-9));
            }
            assert!(peak > 0.0);
        }
    }
}

fn rk4_coefficients(b: &SurrogateBackend, p: &[f64], tau: f64) -> Vec<f64> {
    let ls = b.spec.lambda_star;
    let k = b.c * (-2.0 * ls * b.spec.tau0).exp();
    let steps = 20_000;
    let h = tau / steps as f64;
    let rhs = |t: f64, y: &[f64]| -> Vec<f64> { y.iter().zip(&b.lambda).map(|(v, l)| -l * v + k * (-2.0 * ls * t).exp()).collect() };
    let mut y: Vec<f64> = (0..b.lambda.len()).map(|i| if i < b.m { p[i] } else { 0.0 }).collect();
    let mut t = 0.0;
    let axpy = |y: &[f64], d: &[f64], s: f64| -> Vec<f64> { y.iter().zip(d).map(|(a, b)| a + s * b).collect() };
    for _ in 0..steps {
        let k1 = rhs(t, &y);
        let k2 = rhs(t + h / 2.0, &axpy(&y, &k1, h / 2.0));
        let k3 = rhs(t + h / 2.0, &axpy(&y, &k2, h / 2.0));
        let k4 = rhs(t + h, &axpy(&y, &k3, h));
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
    }
    y
}

fn unit_norms(k: usize) -> Vec<ModeNorms> {
    vec![ModeNorms { sup_over_rt: 0.01, sup_d: 0.01, sup_rt_d2: 0.01 }; k]
}

fn toy(lambda: Vec<f64>, m: usize, c: f64) -> SurrogateBackend {
    let mut spec = BoxSpec::with_lambda_star(0.25);
    spec.tau_max = 20.0;
    let k = lambda.len();
    SurrogateBackend::new(lambda, m, c, spec, unit_norms(k))
}

#[test]
fn surrogate_matches_integrated_ode() {
    let b = toy(vec![-1.0, -0.5, 0.5, 2.0, 0.25 * 2.0], 2, 0.3);
    let p = [1e-3, -2e-3];
    for tau in [0.3, 1.0, 3.0] {
        let exact = b.coefficients(&p, tau);
        let num = rk4_coefficients(&b, &p, tau);
        for (a, n) in exact.iter().zip(&num) {
            assert!((a - n).abs() < 1e-10 * (1.0 + a.abs()), "tau = {tau}: {a} vs {n}");
        }
    }
}

#[test]
fn surrogate_shoot_finds_closed_form() {
    for (lambda, m) in [(vec![-1.0, 0.5, 2.0], 1), (vec![-1.0, -0.5, 0.5, 2.0], 2)] {
        let b = toy(lambda, m, 0.01);
        assert!(b.p_star().iter().all(|v| v.abs() < b.spec.mu_u * b.spec.decay(0.0)));
        let res = shoot(&b, &ShootConfig::default()).unwrap();
        // a found point only has to lie in the set of trajectories that stay to tau_max
        let tol = match res.status {
            ShootStatus::Converged => 1e-10,
            ShootStatus::Found => b.spec.mu_u * b.spec.decay(0.0) * (-(0.5 + 0.25) * b.spec.tau_max).exp(),
            ShootStatus::NotFound => panic!("m = {m}: not found"),
        };
        for (a, e) in res.p_star.iter().zip(b.p_star()) {
            assert!((a - e).abs() <= tol, "m = {m}: {a} vs {e}");
        }
        if res.status == ShootStatus::Found {
            assert!(b.probe(&res.p_star, false).exit.tau_exit.is_none());
        }
        assert!(res.bracket_monotone());
        let pr = b.probe(&b.p_star(), false);
        assert!(pr.exit.tau_exit.is_none());
    }
}

#[test]
fn three_unstable_modes_unsupported() {
    let b = toy(vec![-1.0, -0.5, -0.2, 0.5], 3, 0.5);
    assert!(matches!(shoot(&b, &ShootConfig::default()), Err(WazewskiError::UnsupportedDimension(3))));
}

#[test]
fn budget_is_enforced() {
    let b = toy(vec![-1.0, -0.5, 0.5, 2.0], 2, 0.5);
    let cfg = ShootConfig { budget: 10, ..ShootConfig::default() };
    assert!(matches!(shoot(&b, &cfg), Err(WazewskiError::BudgetExhausted(10))));
}

#[test]
fn box_spec_validation() {
    let lambda = [-1.0, -0.5, 0.5, 2.0];
    let ok = BoxSpec::with_lambda_star(0.25);
    ok.validate(&lambda, 2).unwrap();
    let bad = BoxSpec { mu_u: ok.p_bar / 2.0, ..ok };
    assert!(matches!(bad.validate(&lambda, 2), Err(WazewskiError::InvalidSpec(_))));
    let bad = BoxSpec { eps1: 0.0, ..ok };
    assert!(bad.validate(&lambda, 2).is_err());
    // λ* must separate the m-th and (m+1)-th eigenvalues
    assert!(ok.validate(&lambda, 1).is_err());
    assert!(BoxSpec::with_lambda_star(0.6).validate(&lambda, 2).is_err());
}

#[test]
fn touching_a_bound_is_outside() {
    let spec = BoxSpec::with_lambda_star(0.25);
    let b = toy(vec![-1.0, 0.5], 1, 0.0);
    let mut g = b.norms_at(&[0.0], 0.0);
    assert!(box_membership(&g, 0.0, &spec).0);
    g.hu = spec.mu_u * spec.decay(0.0);
    assert!(!box_membership(&g, 0.0, &spec).0);
}
