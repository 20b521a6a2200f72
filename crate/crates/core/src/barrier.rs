//! The comparison operator Q and the two-region barriers u for the C⁰ estimate.
//!
//! Q u = (g + C)∇²u − ⟨∇f, ∇u⟩ + (C_n|A|² + C_n|∇A| + 1)u + 2√|u| |Q₁| with
//! f = |γ|²/4.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff;
use crate::flow::{GraphState, Q1Model};
use crate::geometry::ShrinkerProfile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("region mismatch: {0}")]
    RegionMismatch(String),
    #[error("empty region: {0}")]
    EmptyRegion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierRegion {
    /// u = e^{(1−k)(τ+τ₀)}(Df^k − Bf^{k−1}) on Γe^{τ₀} < f < γ₁e^{τ+τ₀}.
    Inner,
    /// u = e^{τ+τ₀}(a − E/f) on γ₂e^{τ+τ₀} < f < Γe^{τ+τ₀}.
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierConstants {
    pub k: f64,
    pub d: f64,
    pub b: f64,
    pub a: f64,
    pub e: f64,
    pub w: f64,
    pub big_gamma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub c0: f64,
    pub cn: f64,
}

impl Default for BarrierConstants {
    fn default() -> Self {
        Self { k: 2.0, d: 1.0, b: 12.0, a: 1.0, e: 6.0, w: 0.5, big_gamma: 10.0, gamma1: 4.0, gamma2: 1.0, c0: 1.0, cn: 4.0 }
    }
}

impl BarrierConstants {
    /// B − D(k(k + n/2) + C_n S) with S = sup(f|A|² + f|∇A|).
    pub fn inner_slack(&self, n: usize, s: f64) -> f64 {
        self.b - self.d * (self.k * (self.k + n as f64 / 2.0) + self.cn * s)
    }

    /// E − a C_n S − C₀√a.
    pub fn outer_slack(&self, s: f64) -> f64 {
        self.e - self.a * self.cn * s - self.c0 * self.a.sqrt()
    }
}

/// f = |γ|²/4 with arc-length derivatives and the drift identity residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FFunction {
    pub f: Vec<f64>,
    pub fs: Vec<f64>,
    pub fss: Vec<f64>,
    pub laplacian: Vec<f64>,
    pub grad2: Vec<f64>,
    /// Δf − |∇f|² − (n/2 − f).
    pub residual: Vec<f64>,
}

impl FFunction {
    pub fn new(p: &ShrinkerProfile) -> Self {
        let f = p.f();
        let fs = diff::d1(&f, p.ds);
        let fss = diff::d2(&f, p.ds);
        let nm1 = p.n as f64 - 1.0;
        let nh = p.n as f64 / 2.0;
        let m = f.len();
        let laplacian: Vec<f64> = (0..m).map(|i| fss[i] + nm1 * p.tr[i] / p.r[i] * fs[i]).collect();
        let grad2: Vec<f64> = fs.iter().map(|v| v * v).collect();
        let residual = (0..m).map(|i| laplacian[i] - grad2[i] - (nh - f[i])).collect();
        Self { f, fs, fss, laplacian, grad2, residual }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdentityReport {
    pub max_residual: f64,
    pub node: usize,
    pub f_at: f64,
}

pub fn f_identity_check(p: &ShrinkerProfile) -> IdentityReport {
    let ff = FFunction::new(p);
    let (node, max_residual) = ff.residual.iter().enumerate().fold((0, 0.0), |acc, (i, r)| if r.abs() > acc.1 { (i, r.abs()) } else { acc });
    IdentityReport { max_residual, node, f_at: ff.f[node] }
}

/// sup over the profile of f|A|² + f|∇A|.
pub fn curvature_sup(p: &ShrinkerProfile) -> f64 {
    let f = p.f();
    (0..p.len()).map(|i| f[i] * (p.a2[i] + p.grad_a[i])).fold(0.0, f64::max)
}

/// Q applied to a node function. The C^{ab} coefficient is the current graph's
/// quasilinear excess in the meridian direction, or zero without a state.
pub fn eval_q(u: &[f64], state: Option<&GraphState>, p: &ShrinkerProfile, cn: f64, q1: Option<(&Q1Model, f64)>) -> Vec<f64> {
    let ff = FFunction::new(p);
    let us = diff::d1(u, p.ds);
    let uss = diff::d2(u, p.ds);
    let nm1 = p.n as f64 - 1.0;
    (0..u.len())
        .map(|i| {
            let lap = uss[i] + nm1 * p.tr[i] / p.r[i] * us[i];
            let c = match state {
                Some(s) => {
                    let a = 1.0 + p.kappa[i] * s.h[i];
                    1.0 / (a * a + s.dh[i] * s.dh[i]) - 1.0
                }
                None => 0.0,
            };
            let pot = cn * p.a2[i] + cn * p.grad_a[i] + 1.0;
            let forcing = q1.map_or(0.0, |(m, tau)| 2.0 * u[i].abs().sqrt() * m.eval(ff.f[i], tau).abs());
            lap + c * uss[i] - ff.fs[i] * us[i] + pot * u[i] + forcing
        })
        .collect()
}

/// Max over nodes of the positive part of (∂_τ − Q)(h²) between two graph states,
/// relative to max |h|². Discretization noise shows up as a small positive value.
pub fn h_squared_defect(prev: &GraphState, next: &GraphState, p: &ShrinkerProfile, cn: f64) -> f64 {
    let dt = next.tau - prev.tau;
    let h2: Vec<f64> = next.h.iter().map(|v| v * v).collect();
    let q = eval_q(&h2, Some(next), p, cn, None);
    let scale = h2.iter().copied().fold(0.0, f64::max).max(1e-300);
    (0..h2.len())
        .map(|i| ((h2[i] - prev.h[i] * prev.h[i]) / dt - q[i]) / scale)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Profile data interpolated linearly in f along the outer, f-monotone part of the profile.
struct Tail {
    f: Vec<f64>,
    a: Vec<f64>,
    grad_a: Vec<f64>,
    fs: Vec<f64>,
    fss: Vec<f64>,
    lap: Vec<f64>,
    grad2: Vec<f64>,
    rot: Vec<f64>,
    r_tilde: Vec<f64>,
}

impl Tail {
    fn new(p: &ShrinkerProfile) -> Self {
        let ff = FFunction::new(p);
        let m = p.len();
        let mut start = m - 1;
        while start > 0 && ff.f[start - 1] < ff.f[start] {
            start -= 1;
        }
        let idx: Vec<usize> = (start..m).collect();
        let pick = |v: &dyn Fn(usize) -> f64| idx.iter().map(|&i| v(i)).collect::<Vec<f64>>();
        Self {
            f: pick(&|i| ff.f[i]),
            a: pick(&|i| p.a2[i].sqrt()),
            grad_a: pick(&|i| p.grad_a[i]),
            fs: pick(&|i| ff.fs[i]),
            fss: pick(&|i| ff.fss[i]),
            lap: pick(&|i| ff.laplacian[i]),
            grad2: pick(&|i| ff.grad2[i]),
            rot: pick(&|i| p.tr[i] / p.r[i] * ff.fs[i]),
            r_tilde: pick(&|i| p.r_tilde[i]),
        }
    }

    fn range(&self) -> (f64, f64) {
        (self.f[0], *self.f.last().unwrap())
    }

    fn at(&self, f: f64) -> [f64; 8] {
        let j = self.f.partition_point(|&v| v < f).clamp(1, self.f.len() - 1);
        let t = (f - self.f[j - 1]) / (self.f[j] - self.f[j - 1]);
        let lerp = |v: &[f64]| v[j - 1] + t * (v[j] - v[j - 1]);
        [lerp(&self.a), lerp(&self.grad_a), lerp(&self.fs), lerp(&self.fss), lerp(&self.lap), lerp(&self.grad2), lerp(&self.rot), lerp(&self.r_tilde)]
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BarrierDomain {
    pub tau0: f64,
    pub tau_range: (f64, f64),
    pub nf: usize,
    pub ntau: usize,
}

/// Sampled barrier: slice j holds (τ_j, f-nodes, u-values).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierField {
    pub region: BarrierRegion,
    pub consts: BarrierConstants,
    pub tau0: f64,
    pub taus: Vec<f64>,
    pub f: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl BarrierField {
    pub fn nodes(&self) -> usize {
        self.f.iter().map(|v| v.len()).sum()
    }
}

/// U, ∂_fU, ∂²_fU and ∂_τU.
fn profile_fn(region: BarrierRegion, c: &BarrierConstants, tau0: f64, tau: f64, f: f64) -> [f64; 4] {
    let s = tau + tau0;
    match region {
        BarrierRegion::Inner => {
            let k = c.k;
            let g = ((1.0 - k) * s).exp();
            let u = g * (c.d * f.powf(k) - c.b * f.powf(k - 1.0));
            let u1 = g * (c.d * k * f.powf(k - 1.0) - c.b * (k - 1.0) * f.powf(k - 2.0));
            let u2 = g * (c.d * k * (k - 1.0) * f.powf(k - 2.0) - c.b * (k - 1.0) * (k - 2.0) * f.powf(k - 3.0));
            [u, u1, u2, (1.0 - k) * u]
        }
        BarrierRegion::Outer => {
            let g = s.exp();
            let u = g * (c.a - c.e / f);
            [u, g * c.e / (f * f), -2.0 * g * c.e / (f * f * f), u]
        }
    }
}

/// Open f-interval of the region at time τ, clipped to the profile.
fn region_bounds(region: BarrierRegion, c: &BarrierConstants, tau0: f64, tau: f64, range: (f64, f64)) -> Option<(f64, f64)> {
    let (lo, hi) = match region {
        BarrierRegion::Inner => (c.big_gamma * tau0.exp(), c.gamma1 * (tau + tau0).exp()),
        BarrierRegion::Outer => (c.gamma2 * (tau + tau0).exp(), c.big_gamma * (tau + tau0).exp()),
    };
    let (lo, hi) = (lo.max(range.0), hi.min(range.1));
    (hi > lo * (1.0 + 1e-9)).then_some((lo, hi))
}

/// Samples u log-uniformly in f and uniformly in τ over the part of the τ range where
/// the region meets the profile.
pub fn build_barrier(p: &ShrinkerProfile, consts: &BarrierConstants, region: BarrierRegion, dom: &BarrierDomain) -> Result<BarrierField, BarrierError> {
    let tail = Tail::new(p);
    let range = tail.range();
    let (t0, t1) = dom.tau_range;
    let probe = 2000;
    let live: Vec<f64> = (0..=probe)
        .map(|j| t0 + (t1 - t0) * j as f64 / probe as f64)
        .filter(|&t| region_bounds(region, consts, dom.tau0, t, range).is_some())
        .collect();
    if live.len() < 2 {
        return Err(BarrierError::EmptyRegion(format!("{region:?} region misses the profile (f in [{:.3}, {:.3}]) for tau in [{t0}, {t1}]", range.0, range.1)));
    }
    let (a, b) = (live[0], *live.last().unwrap());
    let mut field = BarrierField { region, consts: *consts, tau0: dom.tau0, taus: Vec::new(), f: Vec::new(), u: Vec::new() };
    for j in 0..dom.ntau {
        let tau = if dom.ntau == 1 { a } else { a + (b - a) * j as f64 / (dom.ntau - 1) as f64 };
        let Some((lo, hi)) = region_bounds(region, consts, dom.tau0, tau, range) else { continue };
        let fs: Vec<f64> = (0..dom.nf).map(|i| lo * (hi / lo).powf((i as f64 + 0.5) / dom.nf as f64)).collect();
        let us = fs.iter().map(|&f| profile_fn(region, consts, dom.tau0, tau, f)[0]).collect();
        field.taus.push(tau);
        field.f.push(fs);
        field.u.push(us);
    }
    Ok(field)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierReport {
    pub region: BarrierRegion,
    pub pass: bool,
    pub worst_margin: f64,
    pub worst_tau: f64,
    pub worst_f: f64,
    pub nodes: usize,
    pub slack: f64,
    /// slack ≥ w > 0
    pub hypotheses_hold: bool,
}

/// Checks that Q₁ vanishes on the inner region and respects (C₀/Γ)e^{−(τ+τ₀)/2} on the outer one.
pub fn check_forcing(field: &BarrierField, q1: &Q1Model) -> Result<(), BarrierError> {
    let c = &field.consts;
    for (j, &tau) in field.taus.iter().enumerate() {
        let cap = c.c0 / c.big_gamma * (-(tau + field.tau0) / 2.0).exp();
        for &f in &field.f[j] {
            let q = q1.eval(f, tau).abs();
            let bad = match field.region {
                BarrierRegion::Inner => q > 0.0,
                BarrierRegion::Outer => q > cap * (1.0 + 1e-12),
            };
            if bad {
                return Err(BarrierError::RegionMismatch(format!("|Q1| = {q:.3e} at f = {f:.3}, tau = {tau:.3} in the {:?} region", field.region)));
            }
        }
    }
    Ok(())
}

/// (∂_τ − Q)u ≥ −tol_neg at every sampled node, with C^{ab} at its adversarial sign
/// under |C| ≤ C_n(ε r̃|A| + ε²) and Q₁ at its cap on the outer region (or at the
/// model's own values when one is given).
pub fn verify_supersolution(
    field: &BarrierField,
    p: &ShrinkerProfile,
    q1: Option<&Q1Model>,
    h_bound: f64,
    tol_neg: f64,
) -> Result<BarrierReport, BarrierError> {
    if let Some(q) = q1 {
        check_forcing(field, q)?;
    }
    let tail = Tail::new(p);
    let c = &field.consts;
    let nm1 = p.n as f64 - 1.0;
    let mut worst = (f64::INFINITY, 0.0, 0.0);
    for (j, &tau) in field.taus.iter().enumerate() {
        let cap = match field.region {
            BarrierRegion::Inner => 0.0,
            BarrierRegion::Outer => c.c0 / c.big_gamma * (-(tau + field.tau0) / 2.0).exp(),
        };
        for &f in &field.f[j] {
            let [a, grad_a, fs, fss, lap, grad2, rot, rt] = tail.at(f);
            let [u, u1, u2, ut] = profile_fn(field.region, c, field.tau0, tau, f);
            let drift_lap = u1 * (lap - grad2) + u2 * grad2;
            let hess_ss = u1 * fss + u2 * fs * fs;
            let hess_rot = u1 * rot;
            let hess = (hess_ss * hess_ss + nm1 * hess_rot * hess_rot).sqrt();
            let c_bound = c.cn * (h_bound * rt * a + h_bound * h_bound);
            let pot = c.cn * a * a + c.cn * grad_a + 1.0;
            let forcing = match q1 {
                Some(q) => q.eval(f, tau).abs(),
                None => cap,
            };
            let margin = ut - drift_lap - c_bound * hess - pot * u - 2.0 * u.abs().sqrt() * forcing;
            if margin < worst.0 {
                worst = (margin, tau, f);
            }
        }
    }
    let s = curvature_sup(p);
    let slack = match field.region {
        BarrierRegion::Inner => c.inner_slack(p.n, s),
        BarrierRegion::Outer => c.outer_slack(s),
    };
    Ok(BarrierReport {
        region: field.region,
        pass: worst.0 >= -tol_neg,
        worst_margin: worst.0,
        worst_tau: worst.1,
        worst_f: worst.2,
        nodes: field.nodes(),
        slack,
        hypotheses_hold: c.w > 0.0 && slack >= c.w,
    })
}
