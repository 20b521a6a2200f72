//! Generating curves of rotationally symmetric shrinkers in the (x, r) half-plane.
//!
//! The profile is parametrized by arc length with tangent T = (cos φ, sin φ) and
//! normal ν = (sin φ, −cos φ). With this orientation the round sphere traversed
//! counter-clockwise has outward ν and H > 0, and the shrinker equation reads
//! H = ⟨γ, ν⟩ / 2 with H = κ + (n−1) ν_r / r.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub n: usize,
    /// Slope of the generating ray r = σ x.
    pub sigma: f64,
}

impl ConeSpec {
    pub fn new(n: usize, sigma: f64) -> Result<Self, GeometryError> {
        let c = Self { n, sigma };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.n < 2 {
            return Err(GeometryError::InvalidCone(format!("dimension n = {} < 2", self.n)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(GeometryError::InvalidCone(format!("sigma = {} must be positive and finite", self.sigma)));
        }
        Ok(())
    }

    /// Half-angle of the cone measured from the x-axis.
    pub fn alpha(&self) -> f64 {
        self.sigma.atan()
    }

    /// Coefficient a of the far-field normal graph u ≈ a / ρ over the cone.
    pub fn far_field_coefficient(&self) -> f64 {
        -((self.n - 1) as f64) / self.sigma
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("profile reached the axis at s = {s:.6} with slope cos(phi) = {cos_phi:.3e}")]
    AxisSingularity { s: f64, cos_phi: f64 },
    #[error("end is not a graph over the cone: {0}")]
    NotGraphical(String),
    #[error("doubled curve self-intersects near ({x:.6}, {r:.6})")]
    SelfIntersection { x: f64, r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Sphere,
    Hyperplane,
    ConicalEnd,
    Complete,
}

/// How a profile terminates at either end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndKind {
    /// Meets the rotation axis perpendicularly.
    Axis,
    /// Cut at an interior neck; the curve continues but is not part of the profile.
    Open,
    /// Cut at the outer truncation radius.
    Truncated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    /// Arc-length spacing of the output nodes.
    pub ds: f64,
    /// RK4 substeps per output node.
    pub substeps: usize,
    /// The far-field ansatz is placed at this multiple of S_max.
    pub start_factor: f64,
    /// Accept a conical end that never reaches the axis (cut at its first neck).
    pub allow_open_end: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { ds: 0.01, substeps: 2, start_factor: 4.0, allow_open_end: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShrinkerProfile {
    pub kind: ProfileKind,
    pub n: usize,
    pub cone: Option<ConeSpec>,
    pub ds: f64,
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    pub tx: Vec<f64>,
    pub tr: Vec<f64>,
    pub nux: Vec<f64>,
    pub nur: Vec<f64>,
    pub kappa: Vec<f64>,
    pub h: Vec<f64>,
    pub a2: Vec<f64>,
    pub grad_a: Vec<f64>,
    pub residual: Vec<f64>,
    pub r_tilde: Vec<f64>,
    pub inner: EndKind,
    pub outer: EndKind,
    /// |γ| at the outermost node.
    pub s_max: f64,
}

/// The fixed weight r̃ ≥ 1, equal to |γ| for |γ| ≥ 2 and C¹ across 2.
pub fn r_tilde(rho: f64) -> f64 {
    if rho >= 2.0 {
        rho
    } else {
        1.0 + rho * rho / 4.0
    }
}

impl ShrinkerProfile {
    /// Builds all derived per-node data from uniformly spaced samples of (x, r, φ).
    #[allow(clippy::too_many_arguments)]
    pub fn from_samples(
        kind: ProfileKind,
        n: usize,
        cone: Option<ConeSpec>,
        ds: f64,
        s: Vec<f64>,
        x: Vec<f64>,
        r: Vec<f64>,
        phi: Vec<f64>,
        inner: EndKind,
        outer: EndKind,
    ) -> Self {
        let m = s.len();
        let nf = n as f64;
        let tx: Vec<f64> = phi.iter().map(|p| p.cos()).collect();
        let tr: Vec<f64> = phi.iter().map(|p| p.sin()).collect();
        let nux = tr.clone();
        let nur: Vec<f64> = tx.iter().map(|c| -c).collect();
        let kappa = diff::d1(&phi, ds);
        let mu: Vec<f64> = (0..m).map(|i| nur[i] / r[i]).collect();
        let dk = diff::d1(&kappa, ds);
        let dmu = diff::d1(&mu, ds);
        let mut h = vec![0.0; m];
        let mut a2 = vec![0.0; m];
        let mut grad_a = vec![0.0; m];
        let mut residual = vec![0.0; m];
        let mut rt = vec![0.0; m];
        for i in 0..m {
            h[i] = kappa[i] + (nf - 1.0) * mu[i];
            a2[i] = kappa[i] * kappa[i] + (nf - 1.0) * mu[i] * mu[i];
            let twist = tr[i] / r[i] * (kappa[i] - mu[i]);
            grad_a[i] = (dk[i] * dk[i] + (nf - 1.0) * dmu[i] * dmu[i] + 2.0 * (nf - 1.0) * twist * twist).sqrt();
            residual[i] = h[i] - 0.5 * (x[i] * nux[i] + r[i] * nur[i]);
            rt[i] = r_tilde(x[i].hypot(r[i]));
        }
        let s_max = (0..m).map(|i| x[i].hypot(r[i])).fold(0.0, f64::max);
        Self {
            kind,
            n,
            cone,
            ds,
            s,
            x,
            r,
            phi,
            tx,
            tr,
            nux,
            nur,
            kappa,
            h,
            a2,
            grad_a,
            residual,
            r_tilde: rt,
            inner,
            outer,
            s_max,
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.x[i].hypot(self.r[i])
    }

    /// ⟨γ, ν⟩ at node i.
    pub fn support(&self, i: usize) -> f64 {
        self.x[i] * self.nux[i] + self.r[i] * self.nur[i]
    }

    /// ⟨γ, T⟩ at node i.
    pub fn tangential(&self, i: usize) -> f64 {
        self.x[i] * self.tx[i] + self.r[i] * self.tr[i]
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// True when both ends lie on the axis, so the revolved hypersurface is closed.
    pub fn is_closed(&self) -> bool {
        self.inner == EndKind::Axis && self.outer == EndKind::Axis
    }

    /// f = |γ|²/4 per node.
    pub fn f(&self) -> Vec<f64> {
        (0..self.len()).map(|i| 0.25 * (self.x[i] * self.x[i] + self.r[i] * self.r[i])).collect()
    }

    /// Raw ratio r/x and the two-angle slope estimate at the node nearest |γ| = rho.
    pub fn slope_at(&self, rho: f64) -> Option<SlopeSample> {
        let i = (0..self.len()).min_by(|&a, &b| {
            (self.radius(a) - rho).abs().partial_cmp(&(self.radius(b) - rho).abs()).unwrap()
        })?;
        let psi = self.r[i].atan2(self.x[i]);
        let phi = self.phi[i].sin().atan2(self.phi[i].cos());
        Some(SlopeSample {
            radius: self.radius(i),
            ratio: self.r[i] / self.x[i],
            estimate: (0.5 * (psi + phi)).tan(),
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlopeSample {
    pub radius: f64,
    /// r / x at the sample.
    pub ratio: f64,
    /// tan of the mean of the position angle and the tangent angle; its bias is O(ρ⁻⁴).
    pub estimate: f64,
}

/// Exact round sphere of radius √(2n), sampled at `nodes` cell centres from
/// (ρ, 0) counter-clockwise to (−ρ, 0).
pub fn sphere_profile(n: usize, nodes: usize) -> ShrinkerProfile {
    let rho = (2.0 * n as f64).sqrt();
    let len = std::f64::consts::PI * rho;
    let ds = len / nodes as f64;
    let s: Vec<f64> = (0..nodes).map(|i| (i as f64 + 0.5) * ds).collect();
    let x = s.iter().map(|t| rho * (t / rho).cos()).collect();
    let r = s.iter().map(|t| rho * (t / rho).sin()).collect();
    let phi = s.iter().map(|t| t / rho + std::f64::consts::FRAC_PI_2).collect();
    ShrinkerProfile::from_samples(ProfileKind::Sphere, n, None, ds, s, x, r, phi, EndKind::Axis, EndKind::Axis)
}

/// The hyperplane {x = 0}: the straight ray r = s from the axis to S_max.
pub fn hyperplane_profile(n: usize, s_max: f64, ds: f64) -> ShrinkerProfile {
    let nodes = (s_max / ds).floor() as usize;
    let s: Vec<f64> = (0..nodes).map(|i| (i as f64 + 0.5) * ds).collect();
    let x = vec![0.0; nodes];
    let r = s.clone();
    let phi = vec![std::f64::consts::FRAC_PI_2; nodes];
    ShrinkerProfile::from_samples(ProfileKind::Hyperplane, n, None, ds, s, x, r, phi, EndKind::Axis, EndKind::Truncated)
}

/// Right-hand side of the arc-length shrinker system for (x, r, φ).
pub fn shrinker_rhs(n: usize, y: [f64; 3]) -> [f64; 3] {
    let [x, r, phi] = y;
    let (sp, cp) = phi.sin_cos();
    [cp, sp, 0.5 * (x * sp - r * cp) + (n as f64 - 1.0) * cp / r]
}

pub fn rk4_step(n: usize, y: [f64; 3], h: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
    let k1 = shrinker_rhs(n, y);
    let k2 = shrinker_rhs(n, add(y, k1, 0.5 * h));
    let k3 = shrinker_rhs(n, add(y, k2, 0.5 * h));
    let k4 = shrinker_rhs(n, add(y, k3, h));
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        y[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

/// Far-field state on the end asymptotic to `cone` at cone distance rho0:
/// the point ρ₀e_α + (a/ρ₀)ν_C with the matching tangent angle.
pub fn far_field_state(cone: &ConeSpec, rho0: f64) -> [f64; 3] {
    let alpha = cone.alpha();
    let a = cone.far_field_coefficient();
    let u = a / rho0;
    let du = -a / (rho0 * rho0);
    let (sa, ca) = alpha.sin_cos();
    let x = rho0 * ca + u * sa;
    let r = rho0 * sa - u * ca;
    [x, r, alpha - du.atan()]
}

/// Information about where the inward integration stopped.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InnerTermination {
    pub x: f64,
    pub r: f64,
    pub phi: f64,
    /// Arc length travelled inward from the outermost stored node.
    pub depth: f64,
}

/// Integrates the shrinker end asymptotic to `cone` inward from the far-field
/// ansatz and samples it on a uniform arc-length grid reaching out to |γ| ≈ S_max.
///
/// Integration stops at the first neck (r′ = 0) or at the axis. A perpendicular
/// axis crossing yields a complete profile. Reaching a neck yields the end cut
/// there when `grid.allow_open_end`, and `NoConvergence` otherwise.
pub fn solve_profile(cone: ConeSpec, s_max: f64, grid: &GridConfig) -> Result<ShrinkerProfile, GeometryError> {
    cone.validate()?;
    if !(grid.ds > 0.0) || grid.substeps == 0 {
        return Err(GeometryError::InvalidGrid(format!("ds = {}, substeps = {}", grid.ds, grid.substeps)));
    }
    if s_max < 10.0 {
        return Err(GeometryError::InvalidGrid(format!("S_max = {s_max} must reach |γ| ≥ 10")));
    }
    let n = cone.n;
    let h = -grid.ds / grid.substeps as f64;
    let rho0 = grid.start_factor.max(1.0) * s_max;
    let mut y = far_field_state(&cone, rho0);
    // approach S_max with the same step size so the stiff far field stays resolved
    while y[0].hypot(y[1]) > s_max {
        y = rk4_step(n, y, h);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NoConvergence("far-field integration diverged".into()));
        }
    }
    let mut xs = vec![y[0]];
    let mut rs = vec![y[1]];
    let mut ps = vec![y[2]];
    let budget = 20.0 * s_max;
    let mut depth = 0.0;
    let mut inner = EndKind::Open;
    let mut prev = y;
    'outer: loop {
        for _ in 0..grid.substeps {
            let next = rk4_step(n, prev, h);
            depth -= h;
            if !next.iter().all(|v| v.is_finite()) || next[1] <= 0.0 {
                let cos_phi = prev[2].cos();
                if prev[1] < 1e-3 && cos_phi.abs() < 1e-2 {
                    inner = EndKind::Axis;
                    break 'outer;
                }
                return Err(GeometryError::AxisSingularity { s: depth, cos_phi });
            }
            if next[2].sin() <= 0.0 {
                // first neck along the inward direction
                let term = InnerTermination { x: next[0], r: next[1], phi: next[2], depth };
                if !grid.allow_open_end {
                    return Err(GeometryError::NoConvergence(format!(
                        "end reached a neck at (x, r) = ({:.6}, {:.6}) after arc length {:.4} without meeting the axis",
                        term.x, term.r, term.depth
                    )));
                }
                break 'outer;
            }
            prev = next;
        }
        xs.push(prev[0]);
        rs.push(prev[1]);
        ps.push(prev[2]);
        if depth > budget {
            return Err(GeometryError::NoConvergence(format!("no neck or axis within arc length {budget}")));
        }
    }
    xs.reverse();
    rs.reverse();
    ps.reverse();
    let m = xs.len();
    if m < 16 {
        return Err(GeometryError::InvalidGrid(format!("only {m} nodes; refine ds")));
    }
    let s: Vec<f64> = (0..m).map(|i| i as f64 * grid.ds).collect();
    let kind = if inner == EndKind::Axis { ProfileKind::Complete } else { ProfileKind::ConicalEnd };
    Ok(ShrinkerProfile::from_samples(kind, n, Some(cone), grid.ds, s, xs, rs, ps, inner, EndKind::Truncated))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayConstants {
    /// sup r̃|A| over nodes with |γ| ≥ 2.
    pub c0: f64,
    /// sup r̃²|∇A| over nodes with |γ| ≥ 2.
    pub c1: f64,
    /// |γ| where each supremum is attained.
    pub c0_at: f64,
    pub c1_at: f64,
    pub tail_nodes: usize,
}

/// Curvature decay constants over the tail {|γ| ≥ 2}; derivatives along arc length
/// are finite differences. A profile without tail nodes reports zeros with `tail_nodes = 0`,
/// a non-finite value is reported as infinity.
pub fn curvature_decay_report(p: &ShrinkerProfile) -> DecayConstants {
    let mut out = DecayConstants { c0: 0.0, c1: 0.0, c0_at: f64::NAN, c1_at: f64::NAN, tail_nodes: 0 };
    for i in 0..p.len() {
        let rho = p.radius(i);
        if rho < 2.0 - 1e-12 {
            continue;
        }
        out.tail_nodes += 1;
        let rt = p.r_tilde[i];
        let v0 = rt * p.a2[i].sqrt();
        let v1 = rt * rt * p.grad_a[i];
        let v0 = if v0.is_finite() { v0 } else { f64::INFINITY };
        let v1 = if v1.is_finite() { v1 } else { f64::INFINITY };
        if v0 > out.c0 {
            out.c0 = v0;
            out.c0_at = rho;
        }
        if v1 > out.c1 {
            out.c1 = v1;
            out.c1_at = rho;
        }
    }
    out
}
