//! Rescaled mean curvature flow of normal graphs over a shrinker, mean curvature
//! flow of the closed doubled generating curve, and the transplant that turns the
//! second into the first.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cutoff::CutoffEta;
use crate::diff;
use crate::doubling::DoubledProfile;
use crate::embed::check_embedded;
use crate::geometry::{EndKind, ShrinkerProfile};
use crate::spectrum::{tridiag_solve, w_norm, OperatorStencil, OuterClosure, SpectralBasis};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("normal graph degenerate at node {node}: {reason}")]
    GraphDegenerate { node: usize, reason: String },
    #[error("step rejected after {halvings} halvings at tau = {tau}")]
    StepRejected { tau: f64, halvings: usize },
    #[error("resolution lost at t = {t}: max|A| * min ds = {value:.3}")]
    ResolutionLoss { t: f64, value: f64 },
    #[error("axis pinch at t = {t}: min r = {min_r:.3e}")]
    AxisPinch { t: f64, min_r: f64 },
    #[error("flowed curve is not a normal graph over node {node}: {candidates} intersections")]
    NotAGraph { node: usize, candidates: usize },
    #[error("the doubled curve is not closed")]
    NotClosed,
    #[error("perturbed curve is not embedded (nearest approach {0:.3e})")]
    NotEmbedded(f64),
    #[error("profile/basis size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
}

/// Which edge of the forcing annulus is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Q1Variant {
    /// Γ₀e^{τ+τ₀}/2 ≤ f ≤ Γ₀e^{τ+τ₀}.
    Half,
    /// Γ₀e^{τ+τ₀}/4 ≤ f ≤ Γ₀e^{τ+τ₀}.
    Quarter,
}

/// A smooth bump in f supported on the forcing annulus, scaled so that both
/// magnitude caps hold pointwise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Q1Model {
    pub big_gamma0: f64,
    pub tau0: f64,
    pub c_q: f64,
    pub variant: Q1Variant,
    amp: f64,
}

fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

fn bump_deriv(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let d = 1.0 - u * u;
        -bump(u) * 2.0 * u / (d * d)
    }
}

impl Q1Model {
    pub fn new(big_gamma0: f64, tau0: f64, c_q: f64, variant: Q1Variant) -> Self {
        let lo = Self::lower_fraction(variant);
        let max_db = (1..20_000).map(|k| bump_deriv(-1.0 + k as f64 / 10_000.0).abs()).fold(0.0, f64::max);
        // |∂_t bump| = 2|bump'|, |∇f| ≤ √f ≤ √F and the annulus has width F(1 − lo)
        let amp = c_q * (1.0_f64).min((1.0 - lo) / (2.0 * max_db));
        Self { big_gamma0, tau0, c_q, variant, amp }
    }

    fn lower_fraction(v: Q1Variant) -> f64 {
        match v {
            Q1Variant::Half => 0.5,
            Q1Variant::Quarter => 0.25,
        }
    }

    fn scale(&self, tau: f64) -> f64 {
        self.big_gamma0 * (tau + self.tau0).exp()
    }

    /// Support annulus (f_lo, f_hi) at time τ.
    pub fn support(&self, tau: f64) -> (f64, f64) {
        let s = self.scale(tau);
        (Self::lower_fraction(self.variant) * s, s)
    }

    pub fn value_cap(&self, tau: f64) -> f64 {
        self.c_q * self.scale(tau).powf(-0.5)
    }

    pub fn grad_cap(&self, tau: f64) -> f64 {
        self.c_q / self.scale(tau)
    }

    pub fn eval(&self, f: f64, tau: f64) -> f64 {
        let (lo, hi) = self.support(tau);
        if f <= lo || f >= hi {
            return 0.0;
        }
        let u = 2.0 * (f - lo) / (hi - lo) - 1.0;
        self.amp * self.scale(tau).powf(-0.5) * bump(u)
    }

    /// ∂Q₁/∂f.
    pub fn eval_df(&self, f: f64, tau: f64) -> f64 {
        let (lo, hi) = self.support(tau);
        if f <= lo || f >= hi {
            return 0.0;
        }
        let u = 2.0 * (f - lo) / (hi - lo) - 1.0;
        self.amp * self.scale(tau).powf(-0.5) * bump_deriv(u) * 2.0 / (hi - lo)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GraphNorms {
    /// ‖h_u‖ in L²_W.
    pub hu: f64,
    /// ‖h_s‖ in L²_W.
    pub hs: f64,
    /// ⟨h, h_j⟩_W for the unstable modes.
    pub coeffs: Vec<f64>,
    pub sup_h_over_rt: f64,
    pub sup_dh: f64,
    pub sup_rt_d2h: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphState {
    pub tau: f64,
    pub h: Vec<f64>,
    pub dh: Vec<f64>,
    pub d2h: Vec<f64>,
    pub norms: GraphNorms,
    pub q1_active: bool,
    /// Forcing annulus (f_lo, f_hi) implied by a transplant, when recorded.
    pub support: Option<(f64, f64)>,
}

/// Frobenius norm of the intrinsic Hessian of a rotationally symmetric function.
pub fn hessian_norm(p: &ShrinkerProfile, i: usize, dh: f64, d2h: f64) -> f64 {
    let rot = p.tr[i] / p.r[i] * dh;
    (d2h * d2h + (p.n as f64 - 1.0) * rot * rot).sqrt()
}

pub fn graph_norms(h: &[f64], dh: &[f64], d2h: &[f64], p: &ShrinkerProfile, basis: &SpectralBasis) -> GraphNorms {
    let m = basis.m_star;
    let coeffs: Vec<f64> = basis.modes[..m].iter().map(|mode| basis.inner(h, mode)).collect();
    let mut hu_vec = vec![0.0; h.len()];
    for (c, mode) in coeffs.iter().zip(&basis.modes) {
        for (u, v) in hu_vec.iter_mut().zip(mode) {
            *u += c * v;
        }
    }
    let hs_vec: Vec<f64> = h.iter().zip(&hu_vec).map(|(a, b)| a - b).collect();
    let mut out = GraphNorms {
        hu: coeffs.iter().map(|c| c * c).sum::<f64>().sqrt(),
        hs: w_norm(&hs_vec, &basis.grid),
        coeffs,
        ..Default::default()
    };
    for i in 0..h.len() {
        out.sup_h_over_rt = out.sup_h_over_rt.max(h[i].abs() / p.r_tilde[i]);
        out.sup_dh = out.sup_dh.max(dh[i].abs());
        out.sup_rt_d2h = out.sup_rt_d2h.max(p.r_tilde[i] * hessian_norm(p, i, dh[i], d2h[i]));
    }
    out
}

impl GraphState {
    pub fn new(tau: f64, h: Vec<f64>, p: &ShrinkerProfile, basis: &SpectralBasis, q1_active: bool) -> Self {
        let dh = diff::d1(&h, p.ds);
        let d2h = diff::d2(&h, p.ds);
        let norms = graph_norms(&h, &dh, &d2h, p, basis);
        Self { tau, h, dh, d2h, norms, q1_active, support: None }
    }

    pub fn zero(p: &ShrinkerProfile, basis: &SpectralBasis) -> Self {
        Self::new(0.0, vec![0.0; p.len()], p, basis, false)
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Signed curvature of the circle through three points (positive when turning left).
pub fn menger(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let bc = sub(c, b);
    2.0 * cross(ab, ac) / (norm(ab) * norm(ac) * norm(bc))
}

/// Unit normal (T_r, −T_x) of the chord from a to c.
fn chord_normal(a: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    let t = sub(c, a);
    let l = norm(t);
    [t[1] / l, -t[0] / l]
}

/// Mean curvature of the revolved hypersurface at b, with neighbours a and c.
fn mean_curvature(n: usize, a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> (f64, [f64; 2], f64) {
    let k = menger(a, b, c);
    let nu = chord_normal(a, c);
    let rot = nu[1] / b[1];
    (k + (n as f64 - 1.0) * rot, nu, (k * k + (n as f64 - 1.0) * rot * rot).sqrt())
}

/// Base point and normal of a ghost node beyond an end of a profile.
fn ghost_base(p: &ShrinkerProfile, inner: bool) -> ([f64; 2], [f64; 2]) {
    let m = p.len();
    let (i0, i1, i2) = if inner { (0, 1, 2) } else { (m - 1, m - 2, m - 3) };
    let ex = |v: &[f64]| 3.0 * v[i0] - 3.0 * v[i1] + v[i2];
    let g = [ex(&p.x), ex(&p.r)];
    let nu = [ex(&p.nux), ex(&p.nur)];
    let l = norm(nu);
    (g, [nu[0] / l, nu[1] / l])
}

/// Graph points γ + hν with one ghost at each end.
fn graph_points(p: &ShrinkerProfile, h: &[f64], outer: OuterClosure) -> Vec<[f64; 2]> {
    let m = p.len();
    let mut pts = Vec::with_capacity(m + 2);
    let first = [p.x[0] + h[0] * p.nux[0], p.r[0] + h[0] * p.nur[0]];
    let last = [p.x[m - 1] + h[m - 1] * p.nux[m - 1], p.r[m - 1] + h[m - 1] * p.nur[m - 1]];
    let ghost = |inner: bool, end: EndKind, pt: [f64; 2], hv: f64| -> [f64; 2] {
        match end {
            EndKind::Axis => [pt[0], -pt[1]],
            EndKind::Open => {
                let (g, nu) = ghost_base(p, inner);
                [g[0] + hv * nu[0], g[1] + hv * nu[1]]
            }
            EndKind::Truncated => {
                let (g, nu) = ghost_base(p, inner);
                let hg = if outer == OuterClosure::Dirichlet { -hv } else { hv };
                [g[0] + hg * nu[0], g[1] + hg * nu[1]]
            }
        }
    };
    pts.push(ghost(true, p.inner, first, h[0]));
    for i in 0..m {
        pts.push([p.x[i] + h[i] * p.nux[i], p.r[i] + h[i] * p.nur[i]]);
    }
    pts.push(ghost(false, p.outer, last, h[m - 1]));
    pts
}

/// Normal speed of the rescaled flow of the graph of h, before balancing.
fn raw_speed(p: &ShrinkerProfile, h: &[f64], outer: OuterClosure, q1: Option<(&Q1Model, f64)>, check: bool) -> Result<Vec<f64>, FlowError> {
    let pts = graph_points(p, h, outer);
    let mut v = vec![0.0; p.len()];
    for i in 0..p.len() {
        let (a, b, c) = (pts[i], pts[i + 1], pts[i + 2]);
        if b[1] <= 0.0 {
            return Err(FlowError::GraphDegenerate { node: i, reason: "graph crosses the axis".into() });
        }
        let (hm, nu1, _) = mean_curvature(p.n, a, b, c);
        let tilt = p.nux[i] * nu1[0] + p.nur[i] * nu1[1];
        if check {
            let a_norm = p.a2[i].sqrt();
            if h[i].abs() * a_norm >= 0.5 {
                return Err(FlowError::GraphDegenerate { node: i, reason: format!("|h||A| = {:.3}", h[i].abs() * a_norm) });
            }
            if 1.0 + tilt <= 0.5 {
                return Err(FlowError::GraphDegenerate { node: i, reason: format!("normal tilt {tilt:.3}") });
            }
        }
        let mut speed = -hm + 0.5 * dot(b, nu1);
        if let Some((model, tau)) = q1 {
            let f = 0.25 * (p.x[i] * p.x[i] + p.r[i] * p.r[i]);
            speed += model.eval(f, tau);
        }
        v[i] = speed / tilt;
    }
    Ok(v)
}

/// Right-hand side of the graph flow, balanced so that h ≡ 0 is an exact fixed point.
pub struct GraphRhs<'a> {
    pub profile: &'a ShrinkerProfile,
    pub outer: OuterClosure,
    base: Vec<f64>,
}

impl<'a> GraphRhs<'a> {
    pub fn new(profile: &'a ShrinkerProfile, outer: OuterClosure) -> Self {
        let zero = vec![0.0; profile.len()];
        let base = raw_speed(profile, &zero, outer, None, false).expect("profile itself is a graph");
        Self { profile, outer, base }
    }

    /// Discrete speed of the unperturbed profile, subtracted from every evaluation.
    pub fn base_speed(&self) -> &[f64] {
        &self.base
    }

    pub fn eval(&self, h: &[f64], q1: Option<(&Q1Model, f64)>) -> Result<Vec<f64>, FlowError> {
        let v = raw_speed(self.profile, h, self.outer, q1, true)?;
        Ok(v.iter().zip(&self.base).map(|(a, b)| a - b).collect())
    }
}

/// Convenience wrapper around [`GraphRhs`].
pub fn graph_rhs(state: &GraphState, p: &ShrinkerProfile, outer: OuterClosure, q1: Option<&Q1Model>) -> Result<Vec<f64>, FlowError> {
    GraphRhs::new(p, outer).eval(&state.h, q1.map(|m| (m, state.tau)))
}

/// Quasilinear h'' coefficient minus one, per node.
fn quasilinear_excess(p: &ShrinkerProfile, h: &[f64], dh: &[f64]) -> Vec<f64> {
    (0..h.len())
        .map(|i| {
            let a = 1.0 + p.kappa[i] * h[i];
            1.0 / (a * a + dh[i] * dh[i]) - 1.0
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GraphFlowConfig {
    /// Δτ ≤ cfl · (Δs)².
    pub cfl: f64,
    pub max_halvings: usize,
}

impl Default for GraphFlowConfig {
    fn default() -> Self {
        Self { cfl: 0.4, max_halvings: 10 }
    }
}

pub struct GraphStepper<'a> {
    pub rhs: GraphRhs<'a>,
    pub stencil: &'a OperatorStencil,
    pub basis: &'a SpectralBasis,
    pub q1: Option<Q1Model>,
    pub cfg: GraphFlowConfig,
}

impl<'a> GraphStepper<'a> {
    pub fn new(p: &'a ShrinkerProfile, stencil: &'a OperatorStencil, basis: &'a SpectralBasis, q1: Option<Q1Model>) -> Self {
        Self { rhs: GraphRhs::new(p, stencil.outer), stencil, basis, q1, cfg: GraphFlowConfig::default() }
    }

    pub fn max_dt(&self) -> f64 {
        self.cfg.cfl * self.rhs.profile.ds * self.rhs.profile.ds
    }

    /// Solves (I − dt A) δ = dt N with A the L stencil plus the frozen quasilinear excess.
    fn implicit_increment(&self, h: &[f64], nval: &[f64], dt: f64) -> Vec<f64> {
        let p = self.rhs.profile;
        let m = h.len();
        let dh = diff::d1(h, p.ds);
        let cq = quasilinear_excess(p, h, &dh);
        let st = self.stencil;
        let h2 = p.ds * p.ds;
        let mut lower = vec![0.0; m - 1];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m - 1];
        for i in 0..m {
            let q = cq[i] / h2;
            let mut d = st.b[i] - 2.0 * q;
            if i == 0 {
                d += q;
            } else {
                lower[i - 1] = -dt * (st.a[i] + q);
            }
            if i + 1 < m {
                upper[i] = -dt * (st.c[i] + q);
            } else if p.outer == EndKind::Truncated && st.outer == OuterClosure::Dirichlet {
                d -= q;
            } else {
                d += q;
            }
            diag[i] = 1.0 - dt * d;
        }
        let rhs: Vec<f64> = nval.iter().map(|v| dt * v).collect();
        tridiag_solve(&lower, &diag, &upper, &rhs)
    }

    /// One IMEX step; halves dt on rejection.
    pub fn step(&self, state: &GraphState, dt: f64) -> Result<(GraphState, f64), FlowError> {
        let q1 = self.q1.as_ref().map(|m| (m, state.tau));
        let nval = self.rhs.eval(&state.h, q1)?;
        let mut dt = dt.min(self.max_dt());
        for _ in 0..=self.cfg.max_halvings {
            let inc = self.implicit_increment(&state.h, &nval, dt);
            let h: Vec<f64> = state.h.iter().zip(&inc).map(|(a, b)| a + b).collect();
            let ok = h.iter().all(|v| v.is_finite()) && raw_speed(self.rhs.profile, &h, self.rhs.outer, None, true).is_ok();
            if ok {
                let next = GraphState::new(state.tau + dt, h, self.rhs.profile, self.basis, self.q1.is_some());
                return Ok((next, dt));
            }
            dt *= 0.5;
        }
        Err(FlowError::StepRejected { tau: state.tau, halvings: self.cfg.max_halvings })
    }

    /// Integrates to tau_end, recording the state every `record` in τ (and at the end).
    pub fn evolve(&self, state: GraphState, tau_end: f64, record: f64) -> Result<Vec<GraphState>, FlowError> {
        let mut out = vec![state.clone()];
        let mut cur = state;
        let mut next_record = cur.tau + record;
        while cur.tau < tau_end - 1e-14 {
            let target = next_record.min(tau_end);
            let dt = (target - cur.tau).min(self.max_dt());
            let (s, _) = self.step(&cur, dt)?;
            cur = s;
            if cur.tau >= target - 1e-12 {
                cur.tau = target;
                out.push(cur.clone());
                next_record += record;
            }
        }
        Ok(out)
    }
}

/// Unstable-mode perturbation η(f/(γ₀e^{τ₀})) Σ p_i h_i of the doubled surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Perturbation {
    pub p: Vec<f64>,
    pub gamma0: f64,
    pub tau0: f64,
}

impl Perturbation {
    /// Node function on the profile.
    pub fn profile_values(&self, prof: &ShrinkerProfile, basis: &SpectralBasis) -> Vec<f64> {
        let scale = self.gamma0 * self.tau0.exp();
        let eta = CutoffEta::BUMP;
        (0..prof.len())
            .map(|i| {
                let f = 0.25 * (prof.x[i] * prof.x[i] + prof.r[i] * prof.r[i]);
                let s: f64 = self.p.iter().zip(&basis.modes).map(|(c, mode)| c * mode[i]).sum();
                eta.eval(f / scale) * s
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosedFlowState {
    pub t: f64,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub max_a: f64,
    /// Smallest r over samples away from the two axis ends.
    pub min_r: f64,
    pub min_ds: f64,
    pub type_i_ratio: f64,
}

impl ClosedFlowState {
    pub fn points(&self) -> Vec<[f64; 2]> {
        self.x.iter().zip(&self.r).map(|(&a, &b)| [a, b]).collect()
    }

    /// τ = −log(1 − t).
    pub fn tau(&self) -> f64 {
        -(1.0 - self.t).ln()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClosedFlowConfig {
    pub n: usize,
    /// dt = dt_factor · (min Δs)² / n.
    pub dt_factor: f64,
    /// Stop when max|A| · min Δs exceeds this.
    pub resolution_limit: f64,
    /// Fraction of samples at each end excluded from the pinch monitor.
    pub end_fraction: f64,
    /// Stop when the curve shrinks below this diameter.
    pub min_diameter: f64,
}

impl ClosedFlowConfig {
    pub fn new(n: usize) -> Self {
        Self { n, dt_factor: 0.2, resolution_limit: 0.5, end_fraction: 0.05, min_diameter: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Reached,
    ResolutionLoss,
    AxisPinch,
    Observer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosedTrajectory {
    pub states: Vec<ClosedFlowState>,
    pub stop: StopReason,
    pub steps: usize,
}

struct CurveEval {
    speed: Vec<f64>,
    normal: Vec<[f64; 2]>,
    tangent_shift: Vec<f64>,
    max_a: f64,
    min_ds: f64,
}

/// Normal speeds −H and the tangential redistribution keeping arc-length spacing uniform.
fn evaluate_curve(n: usize, pts: &[[f64; 2]]) -> CurveEval {
    let m = pts.len();
    let ext = |j: isize| -> [f64; 2] {
        if j < 0 {
            let p = pts[(-j - 1) as usize];
            [p[0], -p[1]]
        } else if j as usize >= m {
            let p = pts[2 * m - 1 - j as usize];
            [p[0], -p[1]]
        } else {
            pts[j as usize]
        }
    };
    let mut speed = vec![0.0; m];
    let mut normal = vec![[0.0; 2]; m];
    let mut kv = vec![0.0; m];
    let mut max_a: f64 = 0.0;
    for i in 0..m {
        let (a, b, c) = (ext(i as isize - 1), pts[i], ext(i as isize + 1));
        let (h, nu, anorm) = mean_curvature(n, a, b, c);
        speed[i] = -h;
        normal[i] = nu;
        kv[i] = menger(a, b, c) * speed[i];
        max_a = max_a.max(anorm);
    }
    let mut gaps = Vec::with_capacity(m + 1);
    gaps.push(pts[0][1].abs());
    for i in 1..m {
        gaps.push(norm(sub(pts[i], pts[i - 1])));
    }
    gaps.push(pts[m - 1][1].abs());
    let mut integral = gaps[0] * kv[0] + gaps[m] * kv[m - 1];
    for i in 1..m {
        integral += gaps[i] * 0.5 * (kv[i - 1] + kv[i]);
    }
    let total: f64 = gaps.iter().sum();
    let mean = integral / total;
    let mut alpha = vec![0.0; m];
    alpha[0] = gaps[0] * (mean - kv[0]);
    for i in 1..m {
        alpha[i] = alpha[i - 1] + gaps[i] * (mean - 0.5 * (kv[i - 1] + kv[i]));
    }
    let min_ds = gaps[1..m].iter().copied().chain([2.0 * gaps[0], 2.0 * gaps[m]]).fold(f64::INFINITY, f64::min);
    CurveEval { speed, normal, tangent_shift: alpha, max_a, min_ds }
}

fn closed_state(cfg: &ClosedFlowConfig, t: f64, pts: &[[f64; 2]]) -> ClosedFlowState {
    let ev = evaluate_curve(cfg.n, pts);
    let m = pts.len();
    let skip = ((cfg.end_fraction * m as f64) as usize).max(1);
    let min_r = pts[skip..m - skip].iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    ClosedFlowState {
        t,
        x: pts.iter().map(|p| p[0]).collect(),
        r: pts.iter().map(|p| p[1]).collect(),
        max_a: ev.max_a,
        min_r,
        min_ds: ev.min_ds,
        type_i_ratio: ev.max_a * (1.0 - t).max(0.0).sqrt(),
    }
}

/// Initial samples of F_p; the perturbation moves only samples copied from the profile.
pub fn perturbed_curve(d: &DoubledProfile, prof: &ShrinkerProfile, basis: &SpectralBasis, pert: Option<&Perturbation>) -> Vec<[f64; 2]> {
    let vals = pert.map(|q| q.profile_values(prof, basis));
    (0..d.len())
        .map(|k| {
            let mut pt = [d.x[k], d.r[k]];
            if let (Some(v), Some(i)) = (&vals, d.profile_index[k]) {
                pt[0] += v[i] * prof.nux[i];
                pt[1] += v[i] * prof.nur[i];
            }
            pt
        })
        .collect()
}

/// Mean curvature flow of a generating arc whose two ends lie on the axis. States are
/// recorded at t = 0 and at every checkpoint; `observer` may stop the run early.
pub fn flow_curve(
    pts0: Vec<[f64; 2]>,
    cfg: &ClosedFlowConfig,
    checkpoints: &[f64],
    t_end: f64,
    mut observer: impl FnMut(&ClosedFlowState) -> bool,
) -> ClosedTrajectory {
    let mut pts = pts0;
    let mut t = 0.0;
    let first = closed_state(cfg, t, &pts);
    let mut states = vec![first.clone()];
    let mut steps = 0;
    if !observer(&first) {
        return ClosedTrajectory { states, stop: StopReason::Observer, steps };
    }
    let mut targets: Vec<f64> = checkpoints.iter().copied().filter(|&c| c > 0.0 && c < t_end).collect();
    targets.push(t_end);
    let mut next = 0;
    loop {
        let ev = evaluate_curve(cfg.n, &pts);
        if ev.max_a * ev.min_ds > cfg.resolution_limit {
            return ClosedTrajectory { states, stop: StopReason::ResolutionLoss, steps };
        }
        let m = pts.len();
        let skip = ((cfg.end_fraction * m as f64) as usize).max(1);
        let min_r = pts[skip..m - skip].iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        if min_r < 2.0 * ev.min_ds {
            return ClosedTrajectory { states, stop: StopReason::AxisPinch, steps };
        }
        let diameter = pts.iter().fold(0.0_f64, |a, p| a.max(norm(*p)));
        if diameter < cfg.min_diameter {
            return ClosedTrajectory { states, stop: StopReason::ResolutionLoss, steps };
        }
        let mut dt = cfg.dt_factor * ev.min_ds * ev.min_ds / cfg.n as f64;
        let target = targets[next];
        let mut hit = false;
        if t + dt >= target {
            dt = target - t;
            hit = true;
        }
        for i in 0..m {
            let nu = ev.normal[i];
            let tan = [-nu[1], nu[0]];
            let v = ev.speed[i];
            let a = ev.tangent_shift[i];
            pts[i][0] += dt * (v * nu[0] + a * tan[0]);
            pts[i][1] += dt * (v * nu[1] + a * tan[1]);
        }
        steps += 1;
        t = if hit { target } else { t + dt };
        if hit {
            let s = closed_state(cfg, t, &pts);
            states.push(s.clone());
            next += 1;
            if !observer(&s) {
                return ClosedTrajectory { states, stop: StopReason::Observer, steps };
            }
            if next >= targets.len() {
                return ClosedTrajectory { states, stop: StopReason::Reached, steps };
            }
        }
    }
}

/// Flows F_p from the doubled surface. Checkpoints are physical times.
pub fn flow_doubled(
    d: &DoubledProfile,
    prof: &ShrinkerProfile,
    basis: &SpectralBasis,
    pert: Option<&Perturbation>,
    checkpoints: &[f64],
    t_end: f64,
    observer: impl FnMut(&ClosedFlowState) -> bool,
) -> Result<ClosedTrajectory, FlowError> {
    if !d.closed {
        return Err(FlowError::NotClosed);
    }
    let pts = perturbed_curve(d, prof, basis, pert);
    let mut full = pts.clone();
    full.extend(pts.iter().rev().map(|p| [p[0], -p[1]]));
    let cell = 4.0 * d.h_grid.max(1e-3);
    let rep = check_embedded(&full, true, cell, 0.5);
    if !rep.pass || pts.iter().any(|p| p[1] <= 0.0) {
        return Err(FlowError::NotEmbedded(rep.min_distance.unwrap_or(0.0)));
    }
    Ok(flow_curve(pts, &ClosedFlowConfig::new(d.n), checkpoints, t_end, observer))
}

/// Circle through three points as (centre, radius), if they are not collinear.
fn circumcircle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<([f64; 2], f64)> {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    if d.abs() < 1e-14 * (norm(sub(b, a)) * norm(sub(c, a))).max(1e-300) {
        return None;
    }
    let a2 = dot(a, a);
    let b2 = dot(b, b);
    let c2 = dot(c, c);
    let ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
    let uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
    let centre = [ux, uy];
    Some((centre, norm(sub(a, centre))))
}

/// Signed normal offsets at which the line g + sν meets the polyline, |s| < cap.
/// Each crossing is refined on the circle through the nearest three samples.
fn normal_intersections(pts: &[[f64; 2]], g: [f64; 2], tan: [f64; 2], nu: [f64; 2], cap: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let reach = cap * cap * 4.0;
    for j in 1..pts.len() - 2 {
        let (q0, q1) = (pts[j], pts[j + 1]);
        let d0 = dot(sub(q0, g), tan);
        let d1 = dot(sub(q1, g), tan);
        if d0 * d1 > 0.0 || (d0 == 0.0 && j > 1 && out.last().is_some()) {
            continue;
        }
        if dot(sub(q0, g), sub(q0, g)) > reach + 4.0 * dot(sub(q1, q0), sub(q1, q0)) {
            continue;
        }
        let t = if d0 == d1 { 0.0 } else { d0 / (d0 - d1) };
        let z = [q0[0] + t * (q1[0] - q0[0]), q0[1] + t * (q1[1] - q0[1])];
        let s_lin = dot(sub(z, g), nu);
        if s_lin.abs() >= cap {
            continue;
        }
        let tri = if t < 0.5 { (pts[j - 1], q0, q1) } else { (q0, q1, pts[j + 2]) };
        let mut s = s_lin;
        if let Some((c, rad)) = circumcircle(tri.0, tri.1, tri.2) {
            let w = sub(g, c);
            let bq = dot(w, nu);
            let disc = bq * bq - (dot(w, w) - rad * rad);
            if disc >= 0.0 {
                let sq = disc.sqrt();
                let r1 = -bq + sq;
                let r2 = -bq - sq;
                let best = if (r1 - s_lin).abs() < (r2 - s_lin).abs() { r1 } else { r2 };
                if (best - s_lin).abs() <= norm(sub(q1, q0)) {
                    s = best;
                }
            }
        }
        out.push(s);
    }
    out
}

/// Blends the flowed curve with the static shrinker, rescales by 1/√(1 − t) and
/// fits the normal graph h over every profile node.
pub fn transplant_and_fit(
    c: &ClosedFlowState,
    d: &DoubledProfile,
    prof: &ShrinkerProfile,
    basis: &SpectralBasis,
    big_gamma0: f64,
    tau0: f64,
) -> Result<GraphState, FlowError> {
    if c.x.len() != d.len() {
        return Err(FlowError::SizeMismatch(c.x.len(), d.len()));
    }
    let lam = (1.0 - c.t).sqrt();
    let scale = big_gamma0 * tau0.exp();
    let eta = CutoffEta::BUMP;
    let m = d.len();
    let mut pts = Vec::with_capacity(m + 4);
    for k in 0..m {
        let base = match d.profile_index[k] {
            Some(i) => [prof.x[i], prof.r[i]],
            None => [d.x[k], d.r[k]],
        };
        let e = eta.eval(0.25 * dot(base, base) / scale);
        let blended = [e * c.x[k] + (1.0 - e) * lam * base[0], e * c.r[k] + (1.0 - e) * lam * base[1]];
        pts.push([blended[0] / lam, blended[1] / lam]);
    }
    let mut ext = vec![[pts[1][0], -pts[1][1]], [pts[0][0], -pts[0][1]]];
    ext.extend_from_slice(&pts);
    ext.push([pts[m - 1][0], -pts[m - 1][1]]);
    ext.push([pts[m - 2][0], -pts[m - 2][1]]);
    let mut h = vec![0.0; prof.len()];
    for i in 0..prof.len() {
        let g = [prof.x[i], prof.r[i]];
        let tan = [prof.tx[i], prof.tr[i]];
        let nu = [prof.nux[i], prof.nur[i]];
        let a = prof.a2[i].sqrt();
        let cap = 0.5 * (1.0 / a.max(1e-12)).min(prof.r_tilde[i]);
        let mut hits = normal_intersections(&ext, g, tan, nu, cap);
        hits.sort_by(|a, b| a.partial_cmp(b).unwrap());
        hits.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        match hits.len() {
            1 => h[i] = hits[0],
            k => return Err(FlowError::NotAGraph { node: i, candidates: k }),
        }
    }
    let tau = c.tau();
    let mut st = GraphState::new(tau, h, prof, basis, false);
    st.support = Some((0.5 * big_gamma0 * (tau + tau0).exp(), big_gamma0 * (tau + tau0).exp()));
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn menger_is_exact_on_circles() {
        let pt = |t: f64| [3.0 * t.cos(), 3.0 * t.sin()];
        assert!((menger(pt(0.1), pt(0.4), pt(0.55)) - 1.0 / 3.0).abs() < 1e-12);
        assert!((menger(pt(0.55), pt(0.4), pt(0.1)) + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn q1_caps_and_support() {
        let q = Q1Model::new(10.0, 1.0, 1.0, Q1Variant::Half);
        let (lo, hi) = q.support(0.5);
        assert_eq!(q.eval(lo * 0.99, 0.5), 0.0);
        assert_eq!(q.eval(hi * 1.01, 0.5), 0.0);
        for k in 1..200 {
            let f = lo + (hi - lo) * k as f64 / 200.0;
            assert!(q.eval(f, 0.5) <= q.value_cap(0.5) + 1e-15);
            // |∇Q₁| = |∂_f Q₁| |∇f| ≤ |∂_f Q₁| √f
            assert!(q.eval_df(f, 0.5).abs() * f.sqrt() <= q.grad_cap(0.5) * (1.0 + 1e-12));
        }
    }
}
