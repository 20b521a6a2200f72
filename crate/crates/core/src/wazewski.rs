//! Ważewski box membership, exit classification and the shooting search over the
//! unstable coefficients p.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff;
use crate::doubling::DoubledProfile;
use crate::flow::{flow_doubled, hessian_norm, transplant_and_fit, FlowError, GraphNorms, Perturbation};
use crate::geometry::ShrinkerProfile;
use crate::spectrum::SpectralBasis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WazewskiError {
    #[error("invalid box: {0}")]
    InvalidSpec(String),
    #[error("exit map has constant sign on the initial bracket (lo: {lo:?}, hi: {hi:?})")]
    NoSignChange { lo: Box<ExitRecord>, hi: Box<ExitRecord> },
    #[error("probe budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("shooting in {0} unstable directions is not supported")]
    UnsupportedDimension(usize),
    #[error("initial cell has winding number zero")]
    ZeroDegree,
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lambda_star: f64,
    pub mu_u: f64,
    pub mu_s: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub tau_max: f64,
    pub tau0: f64,
    pub big_gamma0: f64,
    pub gamma0: f64,
    pub p_bar: f64,
}

impl BoxSpec {
    pub fn with_lambda_star(lambda_star: f64) -> Self {
        let p_bar = 0.1;
        Self {
            lambda_star,
            mu_u: 0.1 * p_bar,
            mu_s: 0.1 * p_bar,
            eps0: 0.05,
            eps1: 0.05,
            eps2: 0.05,
            tau_max: 2.0,
            tau0: 4.0,
            big_gamma0: 10.0,
            gamma0: 1.0,
            p_bar,
        }
    }

    /// e^{−λ*(τ+τ₀)}.
    pub fn decay(&self, tau: f64) -> f64 {
        (-self.lambda_star * (tau + self.tau0)).exp()
    }

    /// Half-width p̄e^{−λ*τ₀} of the initial p-cube.
    pub fn p_radius(&self) -> f64 {
        self.p_bar * (-self.lambda_star * self.tau0).exp()
    }

    pub fn validate(&self, lambda: &[f64], m: usize) -> Result<(), WazewskiError> {
        let pos = [self.mu_u, self.mu_s, self.eps0, self.eps1, self.eps2, self.tau_max, self.tau0, self.big_gamma0, self.gamma0, self.p_bar];
        if self.lambda_star <= 0.0 || pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(WazewskiError::InvalidSpec("all box constants must be positive and finite".into()));
        }
        if self.mu_u >= self.p_bar / 2.0 {
            return Err(WazewskiError::InvalidSpec(format!("mu_u = {} must be below p_bar/2", self.mu_u)));
        }
        if m == 0 || m > lambda.len() || lambda[m - 1] >= self.lambda_star || lambda.get(m).is_some_and(|&l| l <= self.lambda_star) {
            return Err(WazewskiError::InvalidSpec(format!("lambda_star = {} does not separate mode {m}", self.lambda_star)));
        }
        Ok(())
    }
}

/// Relative slack 1 − value/bound of each box inequality; ≤ 0 means outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub unstable: f64,
    pub stable: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Margins {
    pub const FULL: Margins = Margins { unstable: 1.0, stable: 1.0, c0: 1.0, c1: 1.0, c2: 1.0 };

    pub fn min_with(&self, o: &Margins) -> Margins {
        Margins {
            unstable: self.unstable.min(o.unstable),
            stable: self.stable.min(o.stable),
            c0: self.c0.min(o.c0),
            c1: self.c1.min(o.c1),
            c2: self.c2.min(o.c2),
        }
    }

    /// Smallest margin among the conditions other than the unstable one.
    pub fn non_unstable(&self) -> f64 {
        self.stable.min(self.c0).min(self.c1).min(self.c2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitClass {
    None,
    UnstableNorm,
    StableNorm,
    C0Bound,
    C1Bound,
    C2Bound,
    GeometryDegenerate,
}

impl ExitClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExitClass::None => "none",
            ExitClass::UnstableNorm => "unstable_norm",
            ExitClass::StableNorm => "stable_norm",
            ExitClass::C0Bound => "c0_bound",
            ExitClass::C1Bound => "c1_bound",
            ExitClass::C2Bound => "c2_bound",
            ExitClass::GeometryDegenerate => "geometry_degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub condition: String,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub tau_exit: Option<f64>,
    pub exit_class: ExitClass,
    pub witness: Option<Witness>,
}

impl ExitRecord {
    pub fn stayed() -> Self {
        Self { tau_exit: None, exit_class: ExitClass::None, witness: None }
    }
}

/// The five inequalities at time τ for the given norms. Touching a bound is outside.
pub fn box_membership(norms: &GraphNorms, tau: f64, spec: &BoxSpec) -> (bool, Margins) {
    let e = spec.decay(tau);
    let m = Margins {
        unstable: 1.0 - norms.hu / (spec.mu_u * e),
        stable: 1.0 - norms.hs / (spec.mu_s * e),
        c0: 1.0 - norms.sup_h_over_rt / spec.eps0,
        c1: 1.0 - norms.sup_dh / spec.eps1,
        c2: 1.0 - norms.sup_rt_d2h / spec.eps2,
    };
    let inside = m.unstable > 0.0 && m.stable > 0.0 && m.c0 > 0.0 && m.c1 > 0.0 && m.c2 > 0.0;
    (inside, m)
}

fn first_violation(norms: &GraphNorms, tau: f64, spec: &BoxSpec, m: &Margins) -> (ExitClass, Witness) {
    let e = spec.decay(tau);
    let w = |c: &str, v: f64, b: f64| Witness { condition: c.to_string(), value: v, bound: b };
    if m.unstable <= 0.0 {
        (ExitClass::UnstableNorm, w("|h_u| < mu_u exp(-lambda*(tau+tau0))", norms.hu, spec.mu_u * e))
    } else if m.stable <= 0.0 {
        (ExitClass::StableNorm, w("|h_s| < mu_s exp(-lambda*(tau+tau0))", norms.hs, spec.mu_s * e))
    } else if m.c0 <= 0.0 {
        (ExitClass::C0Bound, w("|h| < eps0 r~", norms.sup_h_over_rt, spec.eps0))
    } else if m.c1 <= 0.0 {
        (ExitClass::C1Bound, w("|grad h| < eps1", norms.sup_dh, spec.eps1))
    } else {
        (ExitClass::C2Bound, w("|hess h| < eps2 / r~", norms.sup_rt_d2h, spec.eps2))
    }
}

/// One recorded point of a probe trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSample {
    pub tau: f64,
    pub norms: GraphNorms,
    pub margins: Margins,
    pub max_a: Option<f64>,
    pub type_i_ratio: Option<f64>,
}

/// First sample outside the box, classified by the fixed order unstable, stable, c0, c1, c2.
pub fn classify_exit(samples: &[ProbeSample], spec: &BoxSpec) -> ExitRecord {
    for s in samples {
        let (inside, m) = box_membership(&s.norms, s.tau, spec);
        if !inside {
            let (class, witness) = first_violation(&s.norms, s.tau, spec, &m);
            return ExitRecord { tau_exit: Some(s.tau), exit_class: class, witness: Some(witness) };
        }
    }
    ExitRecord::stayed()
}

/// Smallest ratio g(τ)/max_{σ≤τ} g(σ) of g = ‖h_u‖e^{λ*(τ+τ₀)} over [τ_exit, τ_exit + window].
pub fn post_exit_growth(samples: &[ProbeSample], spec: &BoxSpec, tau_exit: f64, window: f64) -> Option<f64> {
    let g: Vec<f64> = samples
        .iter()
        .filter(|s| s.tau >= tau_exit - 1e-12 && s.tau <= tau_exit + window + 1e-9)
        .map(|s| s.norms.hu / spec.decay(s.tau))
        .collect();
    if g.len() < 2 {
        return None;
    }
    let mut best = g[0];
    let mut worst: f64 = 1.0;
    for &v in &g[1..] {
        worst = worst.min(v / best);
        best = best.max(v);
    }
    Some(worst)
}

/// Outcome of one trajectory started from p.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Probe {
    pub p: Vec<f64>,
    pub exit: ExitRecord,
    /// τ_exit, or the simulated horizon when the trajectory never left.
    pub staying_time: f64,
    /// (⟨h_u, h_j⟩)_j at exit; the exit map F(p).
    pub exit_coeffs: Vec<f64>,
    /// Componentwise minimum of the margins strictly before exit.
    pub pre_exit_margins: Margins,
    pub post_exit_growth: Option<f64>,
    /// Largest type-I ratio seen, for flow backends.
    pub max_type_i: Option<f64>,
    pub samples: Vec<ProbeSample>,
}

impl Probe {
    fn from_samples(p: Vec<f64>, samples: Vec<ProbeSample>, spec: &BoxSpec, horizon: f64, keep: bool) -> Probe {
        let exit = classify_exit(&samples, spec);
        let mut pre = Margins::FULL;
        let mut coeffs = vec![0.0; p.len()];
        for s in &samples {
            if exit.tau_exit.is_some_and(|t| s.tau >= t) {
                coeffs = s.norms.coeffs.clone();
                break;
            }
            pre = pre.min_with(&s.margins);
        }
        let growth = exit.tau_exit.and_then(|t| post_exit_growth(&samples, spec, t, 0.2));
        let max_type_i = samples.iter().filter_map(|s| s.type_i_ratio).reduce(f64::max);
        Probe {
            p,
            staying_time: exit.tau_exit.unwrap_or(horizon),
            exit,
            exit_coeffs: coeffs,
            pre_exit_margins: pre,
            post_exit_growth: growth,
            max_type_i,
            samples: if keep { samples } else { Vec::new() },
        }
    }

    /// Sign of ⟨h_u(t(p)), h_1⟩.
    pub fn sign(&self) -> f64 {
        self.exit_coeffs.first().copied().unwrap_or(0.0).signum()
    }
}

/// Something that runs a trajectory from p and reports its box exit.
pub trait ProbeBackend: Sync {
    fn m(&self) -> usize;
    fn spec(&self) -> &BoxSpec;
    fn probe(&self, p: &[f64], keep_samples: bool) -> Probe;
}

/// Per-mode bounds used to bound the pointwise norms of Σ y_i h_i.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModeNorms {
    pub sup_over_rt: f64,
    pub sup_d: f64,
    pub sup_rt_d2: f64,
}

pub fn mode_norms(p: &ShrinkerProfile, basis: &SpectralBasis) -> Vec<ModeNorms> {
    basis
        .modes
        .iter()
        .map(|h| {
            let dh = diff::d1(h, p.ds);
            let d2h = diff::d2(h, p.ds);
            let mut out = ModeNorms { sup_over_rt: 0.0, sup_d: 0.0, sup_rt_d2: 0.0 };
            for i in 0..h.len() {
                out.sup_over_rt = out.sup_over_rt.max(h[i].abs() / p.r_tilde[i]);
                out.sup_d = out.sup_d.max(dh[i].abs());
                out.sup_rt_d2 = out.sup_rt_d2.max(p.r_tilde[i] * hessian_norm(p, i, dh[i], d2h[i]));
            }
            out
        })
        .collect()
}

/// Linear mode dynamics y_i′ = −λ_i y_i + c e^{−2λ*(τ+τ₀)}, y_i(0) = p_i for the
/// unstable modes and 0 otherwise, solved in closed form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateBackend {
    pub lambda: Vec<f64>,
    pub m: usize,
    pub c: f64,
    pub spec: BoxSpec,
    pub horizon: f64,
    pub dtau: f64,
    pub norms: Vec<ModeNorms>,
}

impl SurrogateBackend {
    pub fn new(lambda: Vec<f64>, m: usize, c: f64, spec: BoxSpec, norms: Vec<ModeNorms>) -> Self {
        Self { lambda, m, c, spec, horizon: spec.tau_max, dtau: 0.01, norms }
    }

    /// The unique p keeping every unstable coefficient below e^{−λ*τ}.
    pub fn p_star(&self) -> Vec<f64> {
        let ls = self.spec.lambda_star;
        let k = self.c * (-2.0 * ls * self.spec.tau0).exp();
        self.lambda[..self.m].iter().map(|l| -k / (2.0 * ls - l)).collect()
    }

    pub fn coefficients(&self, p: &[f64], tau: f64) -> Vec<f64> {
        let ls = self.spec.lambda_star;
        let k = self.c * (-2.0 * ls * self.spec.tau0).exp();
        self.lambda
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let y0 = if i < self.m { p[i] } else { 0.0 };
                let gap = 2.0 * ls - l;
                let forced = if gap.abs() < 1e-12 { k * tau * (-l * tau).exp() } else { k * ((-l * tau).exp() - (-2.0 * ls * tau).exp()) / gap };
                y0 * (-l * tau).exp() + forced
            })
            .collect()
    }

    pub fn norms_at(&self, p: &[f64], tau: f64) -> GraphNorms {
        let y = self.coefficients(p, tau);
        let mut g = GraphNorms {
            hu: y[..self.m].iter().map(|v| v * v).sum::<f64>().sqrt(),
            hs: y[self.m..].iter().map(|v| v * v).sum::<f64>().sqrt(),
            coeffs: y[..self.m].to_vec(),
            ..Default::default()
        };
        for (v, n) in y.iter().zip(&self.norms) {
            g.sup_h_over_rt += v.abs() * n.sup_over_rt;
            g.sup_dh += v.abs() * n.sup_d;
            g.sup_rt_d2h += v.abs() * n.sup_rt_d2;
        }
        g
    }

    fn sample(&self, p: &[f64], tau: f64) -> ProbeSample {
        let norms = self.norms_at(p, tau);
        let (_, margins) = box_membership(&norms, tau, &self.spec);
        ProbeSample { tau, norms, margins, max_a: None, type_i_ratio: None }
    }
}

impl ProbeBackend for SurrogateBackend {
    fn m(&self) -> usize {
        self.m
    }

    fn spec(&self) -> &BoxSpec {
        &self.spec
    }

    /// Samples on a uniform τ grid; the first exit interval is refined by bisection so
    /// the recorded exit time is exact to rounding.
    fn probe(&self, p: &[f64], keep: bool) -> Probe {
        let steps = (self.horizon / self.dtau).round() as usize;
        let mut samples = Vec::new();
        let mut exit_at: Option<f64> = None;
        let mut prev_tau = 0.0;
        for k in 0..=steps {
            let tau = k as f64 * self.dtau;
            let s = self.sample(p, tau);
            let inside = box_membership(&s.norms, tau, &self.spec).0;
            if exit_at.is_none() && !inside {
                let (mut lo, mut hi) = (prev_tau, tau);
                if k > 0 {
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if box_membership(&self.norms_at(p, mid), mid, &self.spec).0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                }
                exit_at = Some(hi);
                samples.push(self.sample(p, hi));
                if hi < tau {
                    samples.push(s);
                }
            } else {
                samples.push(s);
            }
            if let Some(t) = exit_at {
                if tau >= t + 0.2 {
                    break;
                }
            }
            prev_tau = tau;
        }
        Probe::from_samples(p.to_vec(), samples, &self.spec, self.horizon, keep)
    }
}

/// Flow of the doubled surface from F_p, transplanted back over the profile every `dtau`.
pub struct FullBackend<'a> {
    pub profile: &'a ShrinkerProfile,
    pub basis: &'a SpectralBasis,
    pub doubled: &'a DoubledProfile,
    pub spec: BoxSpec,
    pub dtau: f64,
    /// Extra rescaled time simulated after exit.
    pub post_exit: f64,
}

impl<'a> FullBackend<'a> {
    pub fn new(profile: &'a ShrinkerProfile, basis: &'a SpectralBasis, doubled: &'a DoubledProfile, spec: BoxSpec) -> Self {
        Self { profile, basis, doubled, spec, dtau: 0.02, post_exit: 0.2 }
    }

    /// ⟨h_p(·, 0), h_j⟩_W − p_j for the unstable modes.
    pub fn initial_defect(&self, p: &[f64]) -> Result<Vec<f64>, FlowError> {
        let pert = Perturbation { p: p.to_vec(), gamma0: self.spec.gamma0, tau0: self.spec.tau0 };
        let traj = flow_doubled(self.doubled, self.profile, self.basis, Some(&pert), &[], 1e-300, |_| false)?;
        let g = transplant_and_fit(&traj.states[0], self.doubled, self.profile, self.basis, self.spec.big_gamma0, self.spec.tau0)?;
        Ok(g.norms.coeffs.iter().zip(p).map(|(a, b)| a - b).collect())
    }

    fn degenerate(&self, p: &[f64], samples: Vec<ProbeSample>, tau: f64, why: String, keep: bool) -> Probe {
        let mut pre = Margins::FULL;
        for s in &samples {
            pre = pre.min_with(&s.margins);
        }
        let coeffs = samples.last().map(|s| s.norms.coeffs.clone()).unwrap_or_else(|| vec![0.0; p.len()]);
        let max_type_i = samples.iter().filter_map(|s| s.type_i_ratio).reduce(f64::max);
        Probe {
            p: p.to_vec(),
            exit: ExitRecord {
                tau_exit: Some(tau),
                exit_class: ExitClass::GeometryDegenerate,
                witness: Some(Witness { condition: why, value: f64::NAN, bound: f64::NAN }),
            },
            staying_time: tau,
            exit_coeffs: coeffs,
            pre_exit_margins: pre,
            post_exit_growth: None,
            max_type_i,
            samples: if keep { samples } else { Vec::new() },
        }
    }
}

impl ProbeBackend for FullBackend<'_> {
    fn m(&self) -> usize {
        self.basis.m_star
    }

    fn spec(&self) -> &BoxSpec {
        &self.spec
    }

    fn probe(&self, p: &[f64], keep: bool) -> Probe {
        let spec = &self.spec;
        let pert = Perturbation { p: p.to_vec(), gamma0: spec.gamma0, tau0: spec.tau0 };
        let horizon = spec.tau_max + self.post_exit;
        let count = (horizon / self.dtau).round() as usize;
        let checkpoints: Vec<f64> = (1..=count).map(|k| 1.0 - (-(k as f64) * self.dtau).exp()).collect();
        let t_end = *checkpoints.last().unwrap();
        let mut samples: Vec<ProbeSample> = Vec::new();
        let mut failure: Option<(f64, String)> = None;
        let mut exit_tau: Option<f64> = None;
        let result = flow_doubled(self.doubled, self.profile, self.basis, Some(&pert), &checkpoints, t_end, |c| {
            match transplant_and_fit(c, self.doubled, self.profile, self.basis, spec.big_gamma0, spec.tau0) {
                Ok(g) => {
                    let (inside, margins) = box_membership(&g.norms, g.tau, spec);
                    samples.push(ProbeSample { tau: g.tau, norms: g.norms, margins, max_a: Some(c.max_a), type_i_ratio: Some(c.type_i_ratio) });
                    if !inside && exit_tau.is_none() {
                        exit_tau = Some(g.tau);
                    }
                    match exit_tau {
                        Some(t) => g.tau < t + self.post_exit - 1e-9,
                        None => g.tau < spec.tau_max - 1e-9,
                    }
                }
                Err(e) => {
                    failure = Some((c.tau(), e.to_string()));
                    false
                }
            }
        });
        match result {
            Err(e) => return self.degenerate(p, samples, 0.0, e.to_string(), keep),
            Ok(traj) => {
                if let Some((tau, why)) = failure {
                    if exit_tau.is_none() {
                        return self.degenerate(p, samples, tau, why, keep);
                    }
                } else if exit_tau.is_none() && !matches!(traj.stop, crate::flow::StopReason::Observer | crate::flow::StopReason::Reached) {
                    let tau = samples.last().map_or(0.0, |s| s.tau);
                    return self.degenerate(p, samples, tau, format!("{:?}", traj.stop), keep);
                }
            }
        }
        Probe::from_samples(p.to_vec(), samples, spec, spec.tau_max, keep)
    }
}

/// Runs probes in parallel on at most LAB_THREADS threads.
pub fn run_probes<B: ProbeBackend>(backend: &B, points: &[Vec<f64>], keep: bool) -> Vec<Probe> {
    let threads = std::env::var("LAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&t| t > 0);
    let work = || points.par_iter().map(|p| backend.probe(p, keep)).collect();
    match threads.and_then(|t| rayon::ThreadPoolBuilder::new().num_threads(t).build().ok()) {
        Some(pool) => pool.install(work),
        None => work(),
    }
}

/// Deterministic sunflower pattern of `count` points filling the initial p-cube.
pub fn sweep_points(m: usize, count: usize, radius: f64) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..count)
        .map(|k| {
            let s = (k as f64 + 0.5) / count as f64;
            match m {
                1 => vec![radius * (2.0 * s - 1.0)],
                _ => {
                    let rad = radius * s.sqrt();
                    let th = golden * k as f64;
                    let mut v = vec![0.0; m];
                    v[0] = rad * th.cos();
                    v[1] = rad * th.sin();
                    v
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BracketStep {
    pub level: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Minimum staying time over the cell's vertices.
    pub min_staying: f64,
    pub best_staying: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShootStatus {
    /// A probe stayed in the box through τ_max.
    Found,
    /// The bracket shrank below the tolerance while still certifying a zero.
    Converged,
    NotFound,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShootResult {
    pub status: ShootStatus,
    pub p_star: Vec<f64>,
    pub staying_time_star: f64,
    pub brackets: Vec<BracketStep>,
    pub probes: Vec<Probe>,
}

impl ShootResult {
    pub fn levels(&self) -> usize {
        self.brackets.len().saturating_sub(1)
    }

    /// Whether the vertex-minimum staying time never decreases along the brackets.
    pub fn bracket_monotone(&self) -> bool {
        self.brackets.windows(2).all(|w| w[1].min_staying >= w[0].min_staying - 1e-9)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShootConfig {
    pub max_levels: usize,
    pub tolerance: f64,
    pub budget: usize,
    pub edge_samples: usize,
    /// Off-centre split point, so a symmetric zero never falls on a cell edge.
    pub split: f64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self { max_levels: 40, tolerance: 1e-10, budget: 4000, edge_samples: 4, split: 0.5 + 0.0137 }
    }
}

struct Cache<'b, B: ProbeBackend> {
    backend: &'b B,
    map: HashMap<Vec<u64>, usize>,
    probes: Vec<Probe>,
    budget: usize,
}

impl<'b, B: ProbeBackend> Cache<'b, B> {
    fn key(p: &[f64]) -> Vec<u64> {
        p.iter().map(|v| v.to_bits()).collect()
    }

    fn ensure(&mut self, pts: &[Vec<f64>]) -> Result<(), WazewskiError> {
        let mut fresh: Vec<Vec<f64>> = Vec::new();
        for p in pts {
            let k = Self::key(p);
            if !self.map.contains_key(&k) && !fresh.iter().any(|q| Self::key(q) == k) {
                fresh.push(p.clone());
            }
        }
        if self.probes.len() + fresh.len() > self.budget {
            return Err(WazewskiError::BudgetExhausted(self.budget));
        }
        for pr in run_probes(self.backend, &fresh, false) {
            self.map.insert(Self::key(&pr.p), self.probes.len());
            self.probes.push(pr);
        }
        Ok(())
    }

    fn get(&self, p: &[f64]) -> &Probe {
        &self.probes[self.map[&Self::key(p)]]
    }
}

fn stays(pr: &Probe, spec: &BoxSpec) -> bool {
    pr.exit.exit_class == ExitClass::None && pr.staying_time >= spec.tau_max
}

/// Searches the initial cube [−p̄e^{−λ*τ₀}, p̄e^{−λ*τ₀}]^m for a p whose trajectory
/// stays in the box: sign bisection for m = 1, winding-number subdivision for m = 2.
pub fn shoot<B: ProbeBackend>(backend: &B, cfg: &ShootConfig) -> Result<ShootResult, WazewskiError> {
    let spec = *backend.spec();
    let m = backend.m();
    let mut cache = Cache { backend, map: HashMap::new(), probes: Vec::new(), budget: cfg.budget };
    let r0 = spec.p_radius();
    match m {
        1 => bisect(&mut cache, &spec, cfg, r0),
        2 => subdivide(&mut cache, &spec, cfg, r0),
        _ => Err(WazewskiError::UnsupportedDimension(m)),
    }
}

fn finish<B: ProbeBackend>(cache: &mut Cache<B>, status: ShootStatus, p_star: Vec<f64>, brackets: Vec<BracketStep>) -> ShootResult {
    let staying = match cache.map.get(&Cache::<B>::key(&p_star)) {
        Some(&i) => cache.probes[i].staying_time,
        None => cache.backend.probe(&p_star, false).staying_time,
    };
    ShootResult { status, p_star, staying_time_star: staying, brackets, probes: std::mem::take(&mut cache.probes) }
}

fn bisect<B: ProbeBackend>(cache: &mut Cache<B>, spec: &BoxSpec, cfg: &ShootConfig, r0: f64) -> Result<ShootResult, WazewskiError> {
    let (mut lo, mut hi) = (-r0, r0);
    cache.ensure(&[vec![lo], vec![hi]])?;
    let (plo, phi) = (cache.get(&[lo]).clone(), cache.get(&[hi]).clone());
    for pr in [&plo, &phi] {
        if stays(pr, spec) {
            let p = pr.p.clone();
            return Ok(finish(cache, ShootStatus::Found, p, Vec::new()));
        }
    }
    let slo = plo.sign();
    if slo == phi.sign() || slo == 0.0 {
        return Err(WazewskiError::NoSignChange { lo: Box::new(plo.exit), hi: Box::new(phi.exit) });
    }
    let mut brackets = vec![BracketStep {
        level: 0,
        lo: vec![lo],
        hi: vec![hi],
        min_staying: plo.staying_time.min(phi.staying_time),
        best_staying: plo.staying_time.max(phi.staying_time),
    }];
    let mut status = ShootStatus::NotFound;
    let mut p_star = vec![0.5 * (lo + hi)];
    for level in 1..=cfg.max_levels {
        let mid = 0.5 * (lo + hi);
        cache.ensure(&[vec![mid]])?;
        let pm = cache.get(&[mid]).clone();
        if stays(&pm, spec) {
            status = ShootStatus::Found;
            p_star = vec![mid];
            brackets.push(BracketStep { level, lo: vec![mid], hi: vec![mid], min_staying: pm.staying_time, best_staying: pm.staying_time });
            break;
        }
        if pm.sign() == slo {
            lo = mid;
        } else {
            hi = mid;
        }
        let (a, b) = (cache.get(&[lo]).staying_time, cache.get(&[hi]).staying_time);
        brackets.push(BracketStep { level, lo: vec![lo], hi: vec![hi], min_staying: a.min(b), best_staying: a.max(b) });
        p_star = vec![0.5 * (lo + hi)];
        if hi - lo <= cfg.tolerance {
            status = ShootStatus::Converged;
            break;
        }
    }
    Ok(finish(cache, status, p_star, brackets))
}

fn angle(v: &[f64]) -> f64 {
    v[1].atan2(v[0])
}

fn wrap(mut d: f64) -> f64 {
    use std::f64::consts::PI;
    while d > PI {
        d -= 2.0 * PI;
    }
    while d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Boundary points of a rectangle, counter-clockwise, `k` segments per edge.
fn rect_boundary(lo: &[f64], hi: &[f64], k: usize) -> Vec<Vec<f64>> {
    let corners = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    let mut out = Vec::with_capacity(4 * k);
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        for j in 0..k {
            let t = j as f64 / k as f64;
            let x = if j == 0 { a[0] } else { a[0] + t * (b[0] - a[0]) };
            let y = if j == 0 { a[1] } else { a[1] + t * (b[1] - a[1]) };
            out.push(vec![x, y]);
        }
    }
    out
}

enum Winding {
    Degree(i64),
    Stayed(Vec<f64>),
}

/// Winding number of the exit map around a rectangle, refining boundary segments
/// across which the exit direction turns by more than π/2.
fn winding<B: ProbeBackend>(cache: &mut Cache<B>, spec: &BoxSpec, lo: &[f64], hi: &[f64], k: usize) -> Result<Winding, WazewskiError> {
    let mut pts = rect_boundary(lo, hi, k);
    let min_seg = 1e-6 * (hi[0] - lo[0]).min(hi[1] - lo[1]);
    for _ in 0..12 {
        cache.ensure(&pts)?;
        if let Some(p) = pts.iter().find(|p| stays(cache.get(p), spec)) {
            return Ok(Winding::Stayed(p.clone()));
        }
        let mut refined = Vec::with_capacity(pts.len() * 2);
        let mut changed = false;
        for j in 0..pts.len() {
            let a = &pts[j];
            let b = &pts[(j + 1) % pts.len()];
            refined.push(a.clone());
            let jump = wrap(angle(&cache.get(b).exit_coeffs) - angle(&cache.get(a).exit_coeffs));
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if jump.abs() > std::f64::consts::FRAC_PI_2 && len > min_seg {
                refined.push(vec![0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                changed = true;
            }
        }
        pts = refined;
        if !changed {
            break;
        }
    }
    cache.ensure(&pts)?;
    let mut total = 0.0;
    for j in 0..pts.len() {
        let a = cache.get(&pts[j]).exit_coeffs.clone();
        let b = cache.get(&pts[(j + 1) % pts.len()]).exit_coeffs.clone();
        total += wrap(angle(&b) - angle(&a));
    }
    Ok(Winding::Degree((total / (2.0 * std::f64::consts::PI)).round() as i64))
}

fn vertex_staying<B: ProbeBackend>(cache: &mut Cache<B>, lo: &[f64], hi: &[f64]) -> Result<(f64, f64), WazewskiError> {
    let vs = [vec![lo[0], lo[1]], vec![hi[0], lo[1]], vec![hi[0], hi[1]], vec![lo[0], hi[1]]];
    cache.ensure(&vs)?;
    let st: Vec<f64> = vs.iter().map(|v| cache.get(v).staying_time).collect();
    Ok((st.iter().copied().fold(f64::INFINITY, f64::min), st.iter().copied().fold(0.0, f64::max)))
}

fn subdivide<B: ProbeBackend>(cache: &mut Cache<B>, spec: &BoxSpec, cfg: &ShootConfig, r0: f64) -> Result<ShootResult, WazewskiError> {
    let (mut lo, mut hi) = (vec![-r0, -r0], vec![r0, r0]);
    let mut brackets = Vec::new();
    match winding(cache, spec, &lo, &hi, cfg.edge_samples)? {
        Winding::Stayed(p) => {
            return Ok(finish(cache, ShootStatus::Found, p, brackets));
        }
        Winding::Degree(0) => return Err(WazewskiError::ZeroDegree),
        Winding::Degree(_) => {}
    }
    let (mn, mx) = vertex_staying(cache, &lo, &hi)?;
    brackets.push(BracketStep { level: 0, lo: lo.clone(), hi: hi.clone(), min_staying: mn, best_staying: mx });
    for level in 1..=cfg.max_levels {
        let cut = [lo[0] + cfg.split * (hi[0] - lo[0]), lo[1] + cfg.split * (hi[1] - lo[1])];
        let children = [
            (vec![lo[0], lo[1]], vec![cut[0], cut[1]]),
            (vec![cut[0], lo[1]], vec![hi[0], cut[1]]),
            (vec![cut[0], cut[1]], vec![hi[0], hi[1]]),
            (vec![lo[0], cut[1]], vec![cut[0], hi[1]]),
        ];
        let mut chosen = None;
        for (clo, chi) in children {
            match winding(cache, spec, &clo, &chi, cfg.edge_samples)? {
                Winding::Stayed(p) => {
                    let (mn, mx) = vertex_staying(cache, &clo, &chi)?;
                    brackets.push(BracketStep { level, lo: clo, hi: chi, min_staying: mn, best_staying: mx });
                    return Ok(finish(cache, ShootStatus::Found, p, brackets));
                }
                Winding::Degree(0) => {}
                Winding::Degree(_) => {
                    chosen = Some((clo, chi));
                    break;
                }
            }
        }
        let Some((clo, chi)) = chosen else {
            let centre = vec![0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
            return Ok(finish(cache, ShootStatus::NotFound, centre, brackets));
        };
        lo = clo;
        hi = chi;
        let (mn, mx) = vertex_staying(cache, &lo, &hi)?;
        brackets.push(BracketStep { level, lo: lo.clone(), hi: hi.clone(), min_staying: mn, best_staying: mx });
        if (hi[0] - lo[0]).hypot(hi[1] - lo[1]) <= cfg.tolerance {
            let centre = vec![0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
            return Ok(finish(cache, ShootStatus::Converged, centre, brackets));
        }
    }
    let centre = vec![0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    Ok(finish(cache, ShootStatus::NotFound, centre, brackets))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> BoxSpec {
        BoxSpec::with_lambda_star(0.25)
    }

    #[test]
    fn zero_state_is_inside_with_full_margins() {
        let (inside, m) = box_membership(&GraphNorms::default(), 0.0, &spec());
        assert!(inside);
        assert_eq!(m, Margins::FULL);
    }

    #[test]
    fn touching_the_bound_is_outside() {
        let s = spec();
        let g = GraphNorms { hu: s.mu_u * s.decay(0.3), ..Default::default() };
        let (inside, m) = box_membership(&g, 0.3, &s);
        assert!(!inside);
        assert!(m.unstable.abs() < 1e-15);
    }

    #[test]
    fn ties_follow_the_fixed_order() {
        let s = spec();
        let g = GraphNorms { hu: 1.0, hs: 1.0, sup_h_over_rt: 1.0, sup_dh: 1.0, sup_rt_d2h: 1.0, coeffs: vec![1.0] };
        let (_, m) = box_membership(&g, 0.0, &s);
        let sample = ProbeSample { tau: 0.0, norms: g, margins: m, max_a: None, type_i_ratio: None };
        assert_eq!(classify_exit(&[sample], &s).exit_class, ExitClass::UnstableNorm);
        let g = GraphNorms { sup_dh: 1.0, sup_rt_d2h: 1.0, ..Default::default() };
        let (_, m) = box_membership(&g, 0.0, &s);
        let sample = ProbeSample { tau: 0.0, norms: g, margins: m, max_a: None, type_i_ratio: None };
        assert_eq!(classify_exit(&[sample], &s).exit_class, ExitClass::C1Bound);
    }

    #[test]
    fn mu_u_must_stay_below_half_p_bar() {
        let mut s = spec();
        s.mu_u = 0.06;
        assert!(s.validate(&[-1.0, 0.5], 1).is_err());
        assert!(spec().validate(&[-1.0, 0.5], 1).is_ok());
        assert!(spec().validate(&[-1.0, 0.2], 1).is_err());
    }
}
