//! Run configuration as TOML, with presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::BarrierConstants;
use crate::flow::Q1Variant;
use crate::geometry::{hyperplane_profile, solve_profile, sphere_profile, ConeSpec, GeometryError, GridConfig, ShrinkerProfile};
use crate::spectrum::{assemble_l, attach_decay, eigensolve, OuterClosure, SpectralBasis, SpectrumError};
use crate::wazewski::{BoxSpec, ShootConfig};
use crate::FORMAT_VERSION;

pub const PRESETS: [&str; 4] = ["sphere", "hyperplane", "cone_s1", "cone_s05"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown preset {0:?} (expected one of sphere, hyperplane, cone_s1, cone_s05)")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSource {
    Sphere,
    Hyperplane,
    Cone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Surrogate,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub kind: ProfileSource,
    pub n: usize,
    /// Cone aperture; ignored for the sphere and the hyperplane.
    pub sigma: f64,
    /// Node count for the sphere.
    pub nodes: usize,
    pub s_max: f64,
    pub ds: f64,
    pub substeps: usize,
    pub start_factor: f64,
    /// Reject a cone end that reaches a neck instead of the axis.
    pub require_closed: bool,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        let g = GridConfig::default();
        Self { kind: ProfileSource::Cone, n: 2, sigma: 1.0, nodes: 400, s_max: 60.0, ds: g.ds, substeps: g.substeps, start_factor: g.start_factor, require_closed: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub modes: usize,
    pub lambda_star: Option<f64>,
    pub delta: f64,
    pub closure: OuterClosure,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { modes: 6, lambda_star: None, delta: 0.05, closure: OuterClosure::Dirichlet }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoublingConfig {
    /// Gluing scale R; the profile's default scale when absent.
    pub big_r: Option<f64>,
}

/// BoxSpec without λ*, which comes from the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxConfig {
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

impl Default for BoxConfig {
    fn default() -> Self {
        let b = BoxSpec::with_lambda_star(0.25);
        Self {
            mu_u: b.mu_u,
            mu_s: b.mu_s,
            eps0: b.eps0,
            eps1: b.eps1,
            eps2: b.eps2,
            tau_max: b.tau_max,
            tau0: b.tau0,
            big_gamma0: b.big_gamma0,
            gamma0: b.gamma0,
            p_bar: b.p_bar,
        }
    }
}

impl BoxConfig {
    pub fn spec(&self, lambda_star: f64) -> BoxSpec {
        BoxSpec {
            lambda_star,
            mu_u: self.mu_u,
            mu_s: self.mu_s,
            eps0: self.eps0,
            eps1: self.eps1,
            eps2: self.eps2,
            tau_max: self.tau_max,
            tau0: self.tau0,
            big_gamma0: self.big_gamma0,
            gamma0: self.gamma0,
            p_bar: self.p_bar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Graph-flow step cap Δτ ≤ cfl·Δs².
    pub cfl: f64,
    pub max_halvings: usize,
    /// Rescaled time between transplant checkpoints on the full backend.
    pub checkpoint_dtau: f64,
    pub post_exit: f64,
    /// Physical end time for `flow`.
    pub t_end: f64,
    pub q1: Q1Variant,
    pub c_q: f64,
    /// Initial data for `flow`; zero when empty.
    pub p: Vec<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { cfl: 0.4, max_halvings: 10, checkpoint_dtau: 0.02, post_exit: 0.2, t_end: 0.995, q1: Q1Variant::Half, c_q: 1.0, p: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootSection {
    pub backend: Backend,
    pub sweep_points: usize,
    pub max_levels: usize,
    pub tolerance: f64,
    pub budget: usize,
    /// Forcing amplitude of the surrogate backend.
    pub surrogate_c: f64,
    /// Surrogate horizon; tau_max when absent.
    pub surrogate_tau_max: Option<f64>,
}

impl Default for ShootSection {
    fn default() -> Self {
        let s = ShootConfig::default();
        Self {
            backend: Backend::Surrogate,
            sweep_points: 32,
            max_levels: s.max_levels,
            tolerance: s.tolerance,
            budget: s.budget,
            surrogate_c: 0.01,
            surrogate_tau_max: Some(60.0),
        }
    }
}

impl ShootSection {
    pub fn shoot_config(&self) -> ShootConfig {
        ShootConfig { max_levels: self.max_levels, tolerance: self.tolerance, budget: self.budget, ..ShootConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierSection {
    pub nf: usize,
    pub ntau: usize,
    pub h_bound: f64,
    pub tol_neg: f64,
    pub constants: BarrierConstants,
}

impl Default for BarrierSection {
    fn default() -> Self {
        Self { nf: 64, ntau: 64, h_bound: 0.05, tol_neg: 1e-10, constants: BarrierConstants::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    pub profile: ProfileConfig,
    pub spectral: SpectralConfig,
    pub doubling: DoublingConfig,
    #[serde(rename = "box")]
    pub box_: BoxConfig,
    pub flow: FlowConfig,
    pub shoot: ShootSection,
    pub barrier: BarrierSection,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            profile: ProfileConfig::default(),
            spectral: SpectralConfig::default(),
            doubling: DoublingConfig::default(),
            box_: BoxConfig::default(),
            flow: FlowConfig::default(),
            shoot: ShootSection::default(),
            barrier: BarrierSection::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        match name {
            "sphere" => {
                c.profile.kind = ProfileSource::Sphere;
                c.profile.nodes = 200;
            }
            "hyperplane" => c.profile.kind = ProfileSource::Hyperplane,
            "cone_s1" => c.profile.sigma = 1.0,
            "cone_s05" => c.profile.sigma = 0.5,
            _ => return Err(ConfigError::UnknownPreset(name.to_string())),
        }
        Ok(c)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.format_version != FORMAT_VERSION {
            return bad(format!("format_version {} (this build writes {FORMAT_VERSION})", self.format_version));
        }
        let p = &self.profile;
        if p.n < 2 {
            return bad(format!("profile.n = {} must be at least 2", p.n));
        }
        if p.kind == ProfileSource::Cone {
            ConeSpec::new(p.n, p.sigma).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if !(p.ds > 0.0) || p.nodes < 16 || p.substeps == 0 {
            return bad("profile grid: ds > 0, nodes ≥ 16, substeps ≥ 1".into());
        }
        if self.spectral.modes == 0 || !(self.spectral.delta > 0.0) {
            return bad("spectral.modes ≥ 1 and spectral.delta > 0".into());
        }
        if let Some(ls) = self.spectral.lambda_star {
            if !(ls > 0.0) {
                return bad(format!("spectral.lambda_star = {ls} must be positive"));
            }
        }
        let b = &self.box_;
        let pos = [b.mu_u, b.mu_s, b.eps0, b.eps1, b.eps2, b.tau_max, b.tau0, b.big_gamma0, b.gamma0, b.p_bar];
        if pos.iter().any(|v| !(*v > 0.0)) {
            return bad("box fields must be positive".into());
        }
        if b.mu_u >= b.p_bar / 2.0 {
            return bad(format!("box.mu_u = {} must be below p_bar/2 = {}", b.mu_u, b.p_bar / 2.0));
        }
        let f = &self.flow;
        if !(f.cfl > 0.0) || !(f.checkpoint_dtau > 0.0) || !(f.t_end > 0.0 && f.t_end < 1.0) {
            return bad("flow: cfl > 0, checkpoint_dtau > 0, 0 < t_end < 1".into());
        }
        if self.shoot.sweep_points == 0 {
            return bad("shoot.sweep_points ≥ 1".into());
        }
        if self.barrier.nf < 2 || self.barrier.ntau < 2 {
            return bad("barrier.nf and barrier.ntau ≥ 2".into());
        }
        Ok(())
    }

    pub fn cone(&self) -> Option<ConeSpec> {
        (self.profile.kind == ProfileSource::Cone).then(|| ConeSpec::new(self.profile.n, self.profile.sigma).ok()).flatten()
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig { ds: self.profile.ds, substeps: self.profile.substeps, start_factor: self.profile.start_factor, allow_open_end: !self.profile.require_closed }
    }

    pub fn build_profile(&self) -> Result<ShrinkerProfile, GeometryError> {
        let p = &self.profile;
        match p.kind {
            ProfileSource::Sphere => Ok(sphere_profile(p.n, p.nodes)),
            ProfileSource::Hyperplane => Ok(hyperplane_profile(p.n, p.s_max, p.ds)),
            ProfileSource::Cone => solve_profile(ConeSpec::new(p.n, p.sigma)?, p.s_max, &self.grid()),
        }
    }

    pub fn build_basis(&self, p: &ShrinkerProfile) -> Result<SpectralBasis, SpectrumError> {
        let st = assemble_l(p, self.spectral.closure)?;
        let b = eigensolve(&st, self.spectral.modes, self.spectral.lambda_star)?;
        Ok(attach_decay(b, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for name in PRESETS {
            let c = RunConfig::preset(name).unwrap();
            c.validate().unwrap();
            let back = RunConfig::from_toml(&c.to_toml()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let text = "[profile]\nsigma = 1.0\nsigmaa = 2.0\n";
        assert!(matches!(RunConfig::from_toml(text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn empty_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn bad_sigma() {
        let text = "[profile]\nsigma = -1.0\n";
        assert!(matches!(RunConfig::from_toml(text), Err(ConfigError::Invalid(_))));
    }
}
