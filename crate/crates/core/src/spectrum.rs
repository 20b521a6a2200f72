//! The stability operator L u = Δu − ½⟨x^T, ∇u⟩ + (|A|² + ½)u on rotationally
//! symmetric functions, its eigenbasis, weighted inner products and norms.
//!
//! L is discretized in weighted Sturm–Liouville form
//! (1/ρ)(ρ u′)′ + (|A|² + ½)u with ρ = r^{n−1} e^{−|γ|²/4}, by finite volumes on
//! the profile nodes (cell centres). Conjugating by √w gives a symmetric
//! tridiagonal matrix S with S v = λ v whenever L u = −λ u.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{EndKind, ShrinkerProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("grid too coarse: {0} interior nodes, need at least 64")]
    GridTooCoarse(usize),
    #[error("requested {k} modes from {nodes} nodes; at most nodes/4 allowed")]
    TooManyModes { k: usize, nodes: usize },
    #[error("eigensolver failed: mode {mode} residual {residual:.3e}")]
    SolverFailure { mode: usize, residual: f64 },
}

/// Closure at a truncated outer end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterClosure {
    Dirichlet,
    /// Zero flux; used to measure truncation sensitivity.
    Free,
}

/// Per-node Gaussian quadrature data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedGrid {
    /// ln(r^{n−1} e^{−|γ|²/4} Δs); the weight itself underflows far out.
    pub log_w: Vec<f64>,
    /// ⟨γ, T⟩ / 2.
    pub drift: Vec<f64>,
}

impl WeightedGrid {
    pub fn new(p: &ShrinkerProfile) -> Self {
        let nm1 = p.n as f64 - 1.0;
        let log_w = (0..p.len())
            .map(|i| nm1 * p.r[i].ln() - 0.25 * (p.x[i] * p.x[i] + p.r[i] * p.r[i]) + p.ds.ln())
            .collect();
        let drift = (0..p.len()).map(|i| 0.5 * p.tangential(i)).collect();
        Self { log_w, drift }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_w.iter().map(|l| l.exp()).collect()
    }

    /// Total Gaussian weight Σ w_k.
    pub fn volume(&self) -> f64 {
        self.log_w.iter().map(|l| l.exp()).sum()
    }
}

/// Three-point stencil (L u)_i = a_i u_{i−1} + b_i u_i + c_i u_{i+1} together
/// with its symmetric form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorStencil {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Diagonal of S = −D^{1/2} L D^{−1/2}.
    pub sym_diag: Vec<f64>,
    /// Off-diagonal of S, entry i couples i and i+1.
    pub sym_off: Vec<f64>,
    pub grid: WeightedGrid,
    pub outer: OuterClosure,
}

impl OperatorStencil {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let m = u.len();
        (0..m)
            .map(|i| {
                let mut v = self.b[i] * u[i];
                if i > 0 {
                    v += self.a[i] * u[i - 1];
                }
                if i + 1 < m {
                    v += self.c[i] * u[i + 1];
                }
                v
            })
            .collect()
    }
}

/// Log of the weight density at the midpoint between nodes i and i+1,
/// located by cubic Hermite interpolation of the curve.
fn face_log_density(p: &ShrinkerProfile, i: usize) -> f64 {
    let h = p.ds;
    let mx = 0.5 * (p.x[i] + p.x[i + 1]) - h / 8.0 * (p.tx[i + 1] - p.tx[i]);
    let mr = 0.5 * (p.r[i] + p.r[i + 1]) - h / 8.0 * (p.tr[i + 1] - p.tr[i]);
    (p.n as f64 - 1.0) * mr.ln() - 0.25 * (mx * mx + mr * mr)
}

/// Assembles L on the profile. Axis ends get zero face weight (regularity), an
/// open inner end gets zero flux, the truncated outer end follows `outer`.
pub fn assemble_l(p: &ShrinkerProfile, outer: OuterClosure) -> Result<OperatorStencil, SpectrumError> {
    let m = p.len();
    if m < 66 {
        return Err(SpectrumError::GridTooCoarse(m.saturating_sub(2)));
    }
    let nm1 = p.n as f64 - 1.0;
    let h2 = p.ds * p.ds;
    let log_rho: Vec<f64> = (0..m)
        .map(|i| nm1 * p.r[i].ln() - 0.25 * (p.x[i] * p.x[i] + p.r[i] * p.r[i]))
        .collect();
    // face i+1/2 for i in 0..m-1
    let log_face: Vec<f64> = (0..m - 1).map(|i| face_log_density(p, i)).collect();
    // outer boundary face, extrapolated
    let log_end = 1.5 * log_rho[m - 1] - 0.5 * log_rho[m - 2];
    let dirichlet_outer = p.outer == EndKind::Truncated && outer == OuterClosure::Dirichlet;

    let mut a = vec![0.0; m];
    let mut b = vec![0.0; m];
    let mut c = vec![0.0; m];
    let mut sd = vec![0.0; m];
    let mut so = vec![0.0; m - 1];
    for i in 0..m {
        let pot = p.a2[i] + 0.5;
        let mut diag = 0.0;
        if i > 0 {
            let wl = (log_face[i - 1] - log_rho[i]).exp() / h2;
            a[i] = wl;
            diag -= wl;
        }
        if i + 1 < m {
            let wr = (log_face[i] - log_rho[i]).exp() / h2;
            c[i] = wr;
            diag -= wr;
            so[i] = -(log_face[i] - 0.5 * (log_rho[i] + log_rho[i + 1])).exp() / h2;
        } else if dirichlet_outer {
            diag -= 2.0 * (log_end - log_rho[i]).exp() / h2;
        }
        b[i] = diag + pot;
        sd[i] = -diag - pot;
    }
    Ok(OperatorStencil { a, b, c, sym_diag: sd, sym_off: so, grid: WeightedGrid::new(p), outer })
}

/// Number of eigenvalues of the symmetric tridiagonal (d, e) below x.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let qq = if q.abs() < 1e-300 { 1e-300_f64.copysign(q) } else { q };
        q = d[i] - x - e[i - 1] * e[i - 1] / qq;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The j-th smallest eigenvalue (0-based) by bisection.
fn kth_eigenvalue(d: &[f64], e: &[f64], j: usize, lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) > j {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves the tridiagonal system (sub, diag, sup) x = rhs with partial pivoting.
pub(crate) fn tridiag_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    // rows hold up to three nonzeros after pivoting: (d, u1, u2)
    let mut d = diag.to_vec();
    let mut u1: Vec<f64> = (0..m).map(|i| if i + 1 < m { sup[i] } else { 0.0 }).collect();
    let mut u2 = vec![0.0; m];
    let mut l = vec![0.0; m];
    let mut x = rhs.to_vec();
    let mut swapped = vec![false; m];
    for i in 0..m - 1 {
        let s = sub[i];
        if s.abs() > d[i].abs() {
            // swap rows i and i+1
            swapped[i] = true;
            let (di, u1i) = (d[i], u1[i]);
            d[i] = s;
            u1[i] = d[i + 1];
            u2[i] = if i + 1 < m - 1 { u1[i + 1] } else { 0.0 };
            x.swap(i, i + 1);
            let f = di / s;
            l[i] = f;
            d[i + 1] = u1i - f * u1[i];
            if i + 1 < m - 1 {
                u1[i + 1] = -f * u2[i];
            }
            x[i + 1] -= f * x[i];
        } else {
            let piv = if d[i] == 0.0 { 1e-300 } else { d[i] };
            d[i] = piv;
            let f = s / piv;
            l[i] = f;
            d[i + 1] -= f * u1[i];
            x[i + 1] -= f * x[i];
        }
    }
    let _ = (&l, &swapped);
    let mut out = vec![0.0; m];
    for i in (0..m).rev() {
        let mut v = x[i];
        if i + 1 < m {
            v -= u1[i] * out[i + 1];
        }
        if i + 2 < m {
            v -= u2[i] * out[i + 2];
        }
        let piv = if d[i] == 0.0 { 1e-300 } else { d[i] };
        out[i] = v / piv;
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralBasis {
    /// Ascending eigenvalues, L h_i = −λ_i h_i.
    pub lambda: Vec<f64>,
    /// Eigenfunctions as node values, orthonormal in L²_W.
    pub modes: Vec<Vec<f64>>,
    pub lambda_star: f64,
    pub m_star: usize,
    /// Far-field growth exponent of |h_i| against |γ|, if the profile has a fitting window.
    pub decay_exponents: Vec<Option<f64>>,
    pub grid: WeightedGrid,
    /// Max over modes of ‖L h_i + λ_i h_i‖_W.
    pub max_residual: f64,
}

impl SpectralBasis {
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        w_inner(f, g, &self.grid)
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        w_norm(f, &self.grid)
    }

    /// Max |⟨h_i, h_j⟩_W − δ_ij|.
    pub fn gram_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.modes.len() {
            for j in 0..=i {
                let g = self.inner(&self.modes[i], &self.modes[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// Restricts the basis to its first k modes.
    pub fn truncated(&self, k: usize) -> SpectralBasis {
        let mut b = self.clone();
        b.lambda.truncate(k);
        b.modes.truncate(k);
        b.decay_exponents.truncate(k);
        b.m_star = b.m_star.min(k);
        b
    }

    pub fn with_lambda_star(mut self, lambda_star: f64) -> SpectralBasis {
        self.lambda_star = lambda_star;
        self.m_star = self.lambda.iter().filter(|&&l| l < lambda_star).count();
        self
    }
}

pub fn w_inner(f: &[f64], g: &[f64], grid: &WeightedGrid) -> f64 {
    f.iter().zip(g).zip(&grid.log_w).map(|((a, b), lw)| a * b * lw.exp()).sum()
}

pub fn w_norm(f: &[f64], grid: &WeightedGrid) -> f64 {
    w_inner(f, f, grid).max(0.0).sqrt()
}

/// Default λ*: midpoint of the largest gap among eigenvalues below −0.1; when
/// that is not positive, 0.25 (moved to the middle of its gap if an eigenvalue
/// lies within 0.05 of it). Returns (λ*, m).
pub fn default_lambda_star(lambda: &[f64]) -> (f64, usize) {
    let neg: Vec<f64> = lambda.iter().copied().filter(|&l| l < -0.1).collect();
    let mut candidate = None;
    if neg.len() >= 2 {
        let mut best = 0.0;
        for w in neg.windows(2) {
            if w[1] - w[0] > best {
                best = w[1] - w[0];
                candidate = Some(0.5 * (w[0] + w[1]));
            }
        }
    }
    let mut ls = match candidate {
        Some(c) if c > 0.0 => c,
        _ => 0.25,
    };
    if let Some(pos) = lambda.iter().position(|&l| (l - ls).abs() < 0.05) {
        let below = if pos > 0 { lambda[pos - 1] } else { 0.0 };
        let above = lambda[pos];
        let (lo, hi) = if above > ls { (below.max(0.0), above) } else { (above, lambda.get(pos + 1).copied().unwrap_or(above + 1.0)) };
        ls = 0.5 * (lo + hi);
    }
    let m = lambda.iter().filter(|&&l| l < ls).count();
    (ls, m)
}

/// Lowest k eigenpairs. Eigenvalues come from Sturm bisection, vectors from
/// inverse iteration. Where the √w-scaled vector falls below 1e−8 of its peak the
/// eigenfunction is rebuilt by the inward three-term recurrence from the outer
/// Dirichlet end, which is the stable direction for the polynomially growing mode.
pub fn eigensolve(st: &OperatorStencil, k: usize, lambda_star: Option<f64>) -> Result<SpectralBasis, SpectrumError> {
    let m = st.len();
    if k == 0 || k > m / 4 {
        return Err(SpectrumError::TooManyModes { k, nodes: m });
    }
    let d = &st.sym_diag;
    let e = &st.sym_off;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let rad = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < m { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - rad);
        hi = hi.max(d[i] + rad);
    }
    let scale = hi.abs().max(lo.abs()).max(1.0);
    let lambdas: Vec<f64> = (0..k).map(|j| kth_eigenvalue(d, e, j, lo - 1.0, hi + 1.0)).collect();

    let sub: Vec<f64> = e.clone();
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (j, &lam) in lambdas.iter().enumerate() {
        let shift = lam + 1e-12 * scale;
        let diag: Vec<f64> = d.iter().map(|v| v - shift).collect();
        let mut v: Vec<f64> = (0..m).map(|i| 1.0 + ((i * 7919 + j * 104_729) % 1000) as f64 * 1e-3).collect();
        for _ in 0..4 {
            v = tridiag_solve(&sub, &diag, &sub, &v);
            for prev in &vecs {
                let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (vi, pi) in v.iter_mut().zip(prev) {
                    *vi -= dot * pi;
                }
            }
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for vi in v.iter_mut() {
                *vi /= nrm;
            }
        }
        vecs.push(v);
    }

    let half_log_w: Vec<f64> = st.grid.log_w.iter().map(|l| 0.5 * l).collect();
    let mut modes = Vec::with_capacity(k);
    for (j, v) in vecs.iter().enumerate() {
        let mut u: Vec<f64> = v.iter().zip(&half_log_w).map(|(vi, hl)| vi * (-hl).exp()).collect();
        let peak = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        let last_good = (0..m).rev().find(|&i| v[i].abs() >= 1e-8 * peak).unwrap_or(m - 1);
        if st.outer == OuterClosure::Dirichlet && last_good + 3 < m && last_good > 2 {
            let lam = lambdas[j];
            let mut t = vec![0.0; m];
            t[m - 1] = 1.0;
            // row m-1: a u_{m-2} + (b + λ) u_{m-1} = 0
            t[m - 2] = -(st.b[m - 1] + lam) * t[m - 1] / st.a[m - 1];
            let mut i = m - 2;
            while i > last_good {
                t[i - 1] = -((st.b[i] + lam) * t[i] + st.c[i] * t[i + 1]) / st.a[i];
                let big = t[i - 1].abs();
                if big > 1e200 {
                    for tv in t.iter_mut().skip(i - 1) {
                        *tv *= 1e-200;
                    }
                }
                i -= 1;
            }
            let factor = u[last_good] / t[last_good];
            for i in last_good + 1..m {
                u[i] = factor * t[i];
            }
        }
        let nrm = w_norm(&u, &st.grid);
        let imax = (0..m).max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap()).unwrap();
        let sgn = if v[imax] < 0.0 { -1.0 } else { 1.0 };
        for ui in u.iter_mut() {
            *ui *= sgn / nrm;
        }
        modes.push(u);
    }

    let mut max_residual: f64 = 0.0;
    for (j, u) in modes.iter().enumerate() {
        let lu = st.apply(u);
        let res: Vec<f64> = lu.iter().zip(u).map(|(a, b)| a + lambdas[j] * b).collect();
        let r = w_norm(&res, &st.grid);
        if !r.is_finite() || r > 1e-4 * (1.0 + lambdas[j].abs()) {
            return Err(SpectrumError::SolverFailure { mode: j, residual: r });
        }
        max_residual = max_residual.max(r);
    }

    let (ls, ms) = match lambda_star {
        Some(l) => (l, lambdas.iter().filter(|&&x| x < l).count()),
        None => default_lambda_star(&lambdas),
    };
    Ok(SpectralBasis {
        lambda: lambdas,
        modes,
        lambda_star: ls,
        m_star: ms,
        decay_exponents: vec![None; k],
        grid: st.grid.clone(),
        max_residual,
    })
}

/// Least-squares slope of log|h| against log|γ| over lo ≤ |γ| ≤ hi.
pub fn fit_exponent(p: &ShrinkerProfile, h: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..p.len() {
        let rho = p.radius(i);
        if rho < lo || rho > hi || h[i] == 0.0 {
            continue;
        }
        let lx = rho.ln();
        let ly = h[i].abs().ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        cnt += 1.0;
    }
    if cnt < 8.0 {
        return None;
    }
    Some((cnt * sxy - sx * sy) / (cnt * sxx - sx * sx))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayVerdict {
    pub mode: usize,
    pub lambda: f64,
    pub exponent: Option<f64>,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayWindow {
    pub lo: f64,
    /// Fraction of the profile's outer radius.
    pub hi_frac: f64,
    pub slack: f64,
}

impl Default for DecayWindow {
    fn default() -> Self {
        Self { lo: 20.0, hi_frac: 0.8, slack: 0.1 }
    }
}

/// PASS iff the fitted exponent is at most 2(λ + δ + ½) + slack.
pub fn decay_check(basis: &SpectralBasis, p: &ShrinkerProfile, delta: f64, win: DecayWindow) -> Vec<DecayVerdict> {
    basis
        .modes
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let lambda = basis.lambda[i];
            let exponent = fit_exponent(p, h, win.lo, win.hi_frac * p.s_max);
            let bound = 2.0 * (lambda + delta + 0.5) + win.slack;
            DecayVerdict { mode: i, lambda, exponent, bound, pass: exponent.map_or(false, |x| x <= bound) }
        })
        .collect()
}

/// Fills `decay_exponents` using the default window.
pub fn attach_decay(mut basis: SpectralBasis, p: &ShrinkerProfile) -> SpectralBasis {
    let win = DecayWindow::default();
    basis.decay_exponents = basis.modes.iter().map(|h| fit_exponent(p, h, win.lo, win.hi_frac * p.s_max)).collect();
    basis
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Projection {
    pub unstable: Vec<f64>,
    pub stable: Vec<f64>,
    pub coefficients: Vec<f64>,
}

/// h_u = Σ_{j ≤ m} ⟨h, h_j⟩ h_j and h_s = h − h_u.
pub fn project(h: &[f64], basis: &SpectralBasis) -> Projection {
    let m = basis.m_star;
    let coefficients: Vec<f64> = basis.modes[..m].iter().map(|mode| basis.inner(h, mode)).collect();
    let mut unstable = vec![0.0; h.len()];
    for (c, mode) in coefficients.iter().zip(&basis.modes) {
        for (u, hm) in unstable.iter_mut().zip(mode) {
            *u += c * hm;
        }
    }
    let stable = h.iter().zip(&unstable).map(|(a, b)| a - b).collect();
    Projection { unstable, stable, coefficients }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HomNorms {
    pub sup: f64,
    pub holder: f64,
    pub c0_alpha: f64,
    pub c1_alpha_minus1: f64,
}

/// Index stride so that at most ~4000 nodes enter the pair suprema.
fn pair_stride(m: usize) -> usize {
    if m <= 10_000 {
        1
    } else {
        m.div_ceil(4000)
    }
}

fn weighted_sup(vals: &[f64], rt: &[f64], gamma: f64) -> f64 {
    vals.iter().zip(rt).fold(0.0, |a, (v, r)| a.max(r.powf(gamma) * v.abs()))
}

fn weighted_holder(vals: &[[f64; 2]], p: &ShrinkerProfile, alpha: f64, gamma: f64) -> f64 {
    let m = p.len();
    let stride = pair_stride(m);
    let idx: Vec<usize> = (0..m).step_by(stride).collect();
    let mut worst: f64 = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let dist = (p.x[i] - p.x[j]).hypot(p.r[i] - p.r[j]);
            if dist == 0.0 {
                continue;
            }
            let df = (vals[i][0] - vals[j][0]).hypot(vals[i][1] - vals[j][1]);
            let wgt = p.r_tilde[i].powf(-gamma - alpha) + p.r_tilde[j].powf(-gamma - alpha);
            worst = worst.max(df / dist.powf(alpha) / wgt);
        }
    }
    worst
}

/// The r̃-weighted Hölder norms of a rotationally symmetric node function. Pair
/// suprema use chordal distance in the half-plane; above 10⁴ nodes the pairs are
/// taken on a strided subset.
pub fn hom_norms(h: &[f64], p: &ShrinkerProfile, alpha: f64, gamma: f64) -> HomNorms {
    let sup = weighted_sup(h, &p.r_tilde, gamma);
    let scalar: Vec<[f64; 2]> = h.iter().map(|&v| [v, 0.0]).collect();
    let holder = weighted_holder(&scalar, p, alpha, gamma);
    let dh = crate::diff::d1(h, p.ds);
    let grad: Vec<[f64; 2]> = (0..h.len()).map(|i| [dh[i] * p.tx[i], dh[i] * p.tr[i]]).collect();
    let sup1 = weighted_sup(h, &p.r_tilde, 1.0);
    let hold1 = weighted_holder(&scalar, p, alpha, 1.0);
    let gsup = weighted_sup(&dh, &p.r_tilde, 2.0);
    let ghold = weighted_holder(&grad, p, alpha, 2.0);
    HomNorms { sup, holder, c0_alpha: sup + holder, c1_alpha_minus1: sup1 + hold1 + gsup + ghold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sphere_profile;

    #[test]
    fn sturm_counts_diagonal() {
        let d = [1.0, 2.0, 3.0];
        let e = [0.0, 0.0];
        assert_eq!(sturm_count(&d, &e, 2.5), 2);
        assert!((kth_eigenvalue(&d, &e, 1, 0.0, 4.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tridiag_solve_matches_dense() {
        let sub = [1.0, -2.0, 0.5, 3.0];
        let diag = [0.1, 1.0, -1.0, 2.0, 0.3];
        let rhs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let x = tridiag_solve(&sub, &diag, &sub, &rhs);
        for i in 0..5 {
            let mut v = diag[i] * x[i];
            if i > 0 {
                v += sub[i - 1] * x[i - 1];
            }
            if i < 4 {
                v += sub[i] * x[i + 1];
            }
            assert!((v - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_on_sphere() {
        let p = sphere_profile(2, 200);
        let st = assemble_l(&p, OuterClosure::Dirichlet).unwrap();
        let lu = st.apply(&vec![1.0; p.len()]);
        for v in lu {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn default_lambda_star_is_positive() {
        let (ls, m) = default_lambda_star(&[-1.0, -0.5, 0.5, 1.5]);
        assert_eq!((ls, m), (0.25, 2));
        let (ls, m) = default_lambda_star(&[-1.0, 0.26, 0.8]);
        assert!(ls > 0.0 && ls < 0.26 && m == 1);
    }
}
