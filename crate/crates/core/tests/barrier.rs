use shrinker_lab::barrier::{
    build_barrier, check_forcing, f_identity_check, h_squared_defect, verify_supersolution, BarrierConstants, BarrierDomain, BarrierError,
    BarrierRegion,
};
use shrinker_lab::flow::{GraphState, GraphStepper, Q1Model, Q1Variant};
use shrinker_lab::geometry::{hyperplane_profile, solve_profile, sphere_profile, GridConfig};
use shrinker_lab::spectrum::{assemble_l, eigensolve, OuterClosure};
use shrinker_lab::ConeSpec;

fn domain() -> BarrierDomain {
    BarrierDomain { tau0: 4.0, tau_range: (0.0, 2.0), nf: 32, ntau: 16 }
}

/// On the hyperplane |A| = 0, |∇f|² = f and Δf = n/2, so for k = 2 the inner margin is
/// e^{−(τ+τ₀)}((B − (n + 2)D) f + nB/2).
fn inner_exact(c: &BarrierConstants, n: f64, s: f64, f: f64) -> f64 {
    (-s).exp() * ((c.b - (n + 2.0) * c.d) * f + n * c.b / 2.0)
}

/// Outer margin on the hyperplane with C₀ = 0: e^{τ+τ₀} E (1/f − n/(2f²) + 2/f²).
fn outer_exact(c: &BarrierConstants, n: f64, s: f64, f: f64) -> f64 {
    s.exp() * c.e * (1.0 / f - n / (2.0 * f * f) + 2.0 / (f * f))
}

fn grid_min(field: &shrinker_lab::barrier::BarrierField, exact: impl Fn(f64, f64) -> f64) -> f64 {
    let mut m = f64::INFINITY;
    for (j, &tau) in field.taus.iter().enumerate() {
        for &f in &field.f[j] {
            m = m.min(exact(tau + field.tau0, f));
        }
    }
    m
}

#[test]
fn hyperplane_margins_match_closed_form() {
    for n in [2, 3] {
        let p = hyperplane_profile(n, 150.0, 0.05);
        let c = BarrierConstants { c0: 0.0, a: 1.0, e: 1.0, ..BarrierConstants::default() };
        for region in [BarrierRegion::Inner, BarrierRegion::Outer] {
            let field = build_barrier(&p, &c, region, &domain()).unwrap();
            let rep = verify_supersolution(&field, &p, None, 0.0, 1e-10).unwrap();
            let want = match region {
                BarrierRegion::Inner => grid_min(&field, |s, f| inner_exact(&c, n as f64, s, f)),
                BarrierRegion::Outer => grid_min(&field, |s, f| outer_exact(&c, n as f64, s, f)),
            };
            assert!((rep.worst_margin - want).abs() < 1e-6 * want.abs(), "n = {n}, {region:?}: {} vs {want}", rep.worst_margin);
            assert!(rep.pass);
        }
    }
}

#[test]
fn weak_inner_barrier_fails_at_region_edge() {
    let p = hyperplane_profile(2, 150.0, 0.05);
    // B < (n + 2)D makes the margin negative for large f
    let c = BarrierConstants { b: 2.0, ..BarrierConstants::default() };
    let field = build_barrier(&p, &c, BarrierRegion::Inner, &domain()).unwrap();
    let rep = verify_supersolution(&field, &p, None, 0.0, 1e-10).unwrap();
    assert!(!rep.pass);
    let want = grid_min(&field, |s, f| inner_exact(&c, 2.0, s, f));
    assert!((rep.worst_margin - want).abs() < 1e-6 * want.abs());
    assert!(!rep.hypotheses_hold);
}

#[test]
fn default_constants_pass_on_cone() {
    let p = solve_profile(ConeSpec::new(2, 1.0).unwrap(), 60.0, &GridConfig::default()).unwrap();
    let c = BarrierConstants::default();
    let dom = BarrierDomain { tau0: 4.0, tau_range: (0.0, 2.0), nf: 64, ntau: 64 };
    for region in [BarrierRegion::Inner, BarrierRegion::Outer] {
        let field = build_barrier(&p, &c, region, &dom).unwrap();
        let q1 = Q1Model::new(10.0, 4.0, 0.3, Q1Variant::Half);
        let rep = verify_supersolution(&field, &p, Some(&q1), 0.05, 1e-10).unwrap();
        assert!(rep.pass, "{region:?}: {}", rep.worst_margin);
        assert!(rep.hypotheses_hold);
    }
}

#[test]
fn forcing_must_match_regions() {
    let p = hyperplane_profile(2, 150.0, 0.05);
    let c = BarrierConstants::default();
    let inner = build_barrier(&p, &c, BarrierRegion::Inner, &domain()).unwrap();
    let outer = build_barrier(&p, &c, BarrierRegion::Outer, &domain()).unwrap();
    let fitted = Q1Model::new(c.big_gamma, 4.0, 0.3, Q1Variant::Half);
    check_forcing(&inner, &fitted).unwrap();
    check_forcing(&outer, &fitted).unwrap();
    // support reaching into γ₁e^{τ+τ₀}
    let low = Q1Model::new(c.gamma1, 4.0, 0.3, Q1Variant::Half);
    assert!(matches!(check_forcing(&inner, &low), Err(BarrierError::RegionMismatch(_))));
    let loud = Q1Model::new(c.big_gamma, 4.0, 50.0, Q1Variant::Half);
    assert!(matches!(check_forcing(&outer, &loud), Err(BarrierError::RegionMismatch(_))));
    assert!(matches!(verify_supersolution(&outer, &p, Some(&loud), 0.0, 1e-10), Err(BarrierError::RegionMismatch(_))));
}

#[test]
fn region_off_the_profile() {
    let p = hyperplane_profile(2, 10.0, 0.05);
    let r = build_barrier(&p, &BarrierConstants::default(), BarrierRegion::Inner, &domain());
    assert!(matches!(r, Err(BarrierError::EmptyRegion(_))));
}

#[test]
fn drift_identity_is_second_order() {
    let res = |ds| {
        let p = solve_profile(ConeSpec::new(2, 1.0).unwrap(), 60.0, &GridConfig { ds, ..GridConfig::default() }).unwrap();
        f_identity_check(&p).max_residual
    };
    let (a, b) = (res(0.02), res(0.01));
    assert!((a / b).log2() > 1.8, "{a} {b}");
    assert!(f_identity_check(&sphere_profile(2, 400)).max_residual < 1e-3);
}

#[test]
fn h_squared_is_subsolution_on_sphere() {
    let p = sphere_profile(2, 200);
    let st = assemble_l(&p, OuterClosure::Dirichlet).unwrap();
    let basis = eigensolve(&st, 4, None).unwrap();
    let h: Vec<f64> = basis.modes[1].iter().map(|v| 1e-4 * v).collect();
    let out = GraphStepper::new(&p, &st, &basis, None).evolve(GraphState::new(0.0, h, &p, &basis, false), 0.1, 0.01).unwrap();
    for w in out.windows(2) {
        assert!(h_squared_defect(&w[0], &w[1], &p, 4.0) < 1e-2);
    }
}
