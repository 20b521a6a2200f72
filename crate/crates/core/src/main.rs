use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use shrinker_lab::barrier::{build_barrier, curvature_sup, f_identity_check, verify_supersolution, BarrierDomain, BarrierRegion};
use shrinker_lab::config::{Backend, ConfigError, RunConfig};
use shrinker_lab::doubling::{build_doubling, default_gluing_scale, junction_report, mirror_defect};
use shrinker_lab::embed::check_embedded;
use shrinker_lab::flow::{flow_doubled, FlowError, GraphFlowConfig, GraphState, GraphStepper, Perturbation, Q1Model};
use shrinker_lab::geometry::{curvature_decay_report, GeometryError};
use shrinker_lab::io::{IoError, OutputDir};
use shrinker_lab::spectrum::{assemble_l, decay_check, DecayWindow, SpectrumError};
use shrinker_lab::wazewski::{mode_norms, run_probes, shoot, sweep_points, FullBackend, ProbeBackend, ShootResult, ShootStatus, SurrogateBackend, WazewskiError};
use shrinker_lab::{CutoffEta, ShrinkerProfile, SpectralBasis};

#[derive(Parser)]
#[command(name = "shrinker-lab", version, about = "Doubled self-shrinker lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the profile and report residual and curvature decay.
    Profile(Common),
    /// Eigenpairs of the stability operator.
    Spectrum(Common),
    /// Build the doubled generating curve.
    Double(Common),
    /// Flow the doubled surface from flow.p.
    Flow(Common),
    /// Sweep and shoot for a staying initial condition.
    Shoot(Common),
    /// Check the barrier supersolutions.
    Barrier(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "cone_s1")]
    preset: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// Validate and print the resolved config without running.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, thiserror::Error)]
enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Usage(String),
    #[error("search did not find a staying initial condition")]
    NotFound,
}

impl RunError {
    fn code(&self) -> u8 {
        match self {
            RunError::Config(_) | RunError::Io(_) | RunError::Usage(_) => 1,
            RunError::Numerical(_) => 2,
            RunError::NotFound => 3,
        }
    }
}

impl From<GeometryError> for RunError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::InvalidCone(_) | GeometryError::InvalidGrid(_) => RunError::Usage(e.to_string()),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<SpectrumError> for RunError {
    fn from(e: SpectrumError) -> Self {
        match e {
            SpectrumError::TooManyModes { .. } => RunError::Usage(e.to_string()),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<FlowError> for RunError {
    fn from(e: FlowError) -> Self {
        RunError::Numerical(e.to_string())
    }
}

impl From<WazewskiError> for RunError {
    fn from(e: WazewskiError) -> Self {
        match e {
            WazewskiError::InvalidSpec(_) | WazewskiError::UnsupportedDimension(_) => RunError::Usage(e.to_string()),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

fn resolve(c: &Common) -> Result<RunConfig, RunError> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::preset(&c.preset)?,
    };
    if let Some(out) = &c.out {
        cfg.output.dir = out.clone();
    }
    if let Some(b) = c.backend {
        cfg.shoot.backend = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open(cfg: &RunConfig, command: &str) -> Result<OutputDir, RunError> {
    let mut out = OutputDir::create(&cfg.output.dir, cfg, command)?;
    let mut recorded = cfg.clone();
    recorded.output.dir = Default::default();
    out.write_text("config.toml", &recorded.to_toml())?;
    Ok(out)
}

#[derive(Serialize)]
struct ProfileReport {
    kind: String,
    nodes: usize,
    s_max: f64,
    max_residual: f64,
    decay: shrinker_lab::geometry::DecayConstants,
    slope_error_at_50: Option<f64>,
}

fn profile_rows(p: &ShrinkerProfile) -> Vec<Vec<f64>> {
    (0..p.len()).map(|i| vec![p.s[i], p.x[i], p.r[i], p.phi[i], p.kappa[i], p.h[i], p.a2[i].sqrt(), p.grad_a[i], p.residual[i]]).collect()
}

fn cmd_profile(cfg: &RunConfig) -> Result<(), RunError> {
    let p = cfg.build_profile()?;
    let mut out = open(cfg, "profile")?;
    out.write_csv("profile.csv", &["s", "x", "r", "phi", "kappa", "H", "abs_A", "grad_A", "residual"], &profile_rows(&p))?;
    let rep = ProfileReport {
        kind: format!("{:?}", p.kind),
        nodes: p.len(),
        s_max: p.s_max,
        max_residual: p.max_abs_residual(),
        decay: curvature_decay_report(&p),
        slope_error_at_50: p.cone.zip(p.slope_at(50.0)).map(|(c, s)| (s.estimate - c.sigma).abs()),
    };
    println!("profile: {} nodes, max residual {:.3e}", rep.nodes, rep.max_residual);
    out.write_json("profile.json", &rep)?;
    out.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct SpectrumReport<'a> {
    lambda: &'a [f64],
    lambda_star: f64,
    m_star: usize,
    gram_defect: f64,
    max_residual: f64,
    decay: Vec<shrinker_lab::spectrum::DecayVerdict>,
}

fn spectrum(cfg: &RunConfig) -> Result<(ShrinkerProfile, SpectralBasis), RunError> {
    let p = cfg.build_profile()?;
    let b = cfg.build_basis(&p)?;
    Ok((p, b))
}

fn cmd_spectrum(cfg: &RunConfig) -> Result<(), RunError> {
    let (p, b) = spectrum(cfg)?;
    let mut out = open(cfg, "spectrum")?;
    let rows: Vec<Vec<f64>> = (0..p.len()).map(|i| std::iter::once(p.s[i]).chain(b.modes.iter().map(|m| m[i])).collect()).collect();
    let names: Vec<String> = std::iter::once("s".to_string()).chain((0..b.modes.len()).map(|k| format!("h{}", k + 1))).collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    out.write_csv("modes.csv", &header, &rows)?;
    let rep = SpectrumReport {
        lambda: &b.lambda,
        lambda_star: b.lambda_star,
        m_star: b.m_star,
        gram_defect: b.gram_defect(),
        max_residual: b.max_residual,
        decay: decay_check(&b, &p, cfg.spectral.delta, DecayWindow::default()),
    };
    println!("spectrum: lambda = {:?}, lambda* = {}, m* = {}", rep.lambda, rep.lambda_star, rep.m_star);
    out.write_json("spectrum.json", &rep)?;
    out.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct DoublingReport {
    big_r: f64,
    closed: bool,
    trivial: bool,
    b_offset: Option<f64>,
    plane: Option<f64>,
    mirror_defect: Option<f64>,
    embedded: bool,
    junctions: Vec<shrinker_lab::doubling::JunctionReport>,
}

fn cmd_double(cfg: &RunConfig) -> Result<(), RunError> {
    let p = cfg.build_profile()?;
    let big_r = cfg.doubling.big_r.unwrap_or_else(|| default_gluing_scale(&p));
    let d = build_doubling(&p, big_r, &CutoffEta::GLUING)?;
    let mut out = open(cfg, "double")?;
    let rows: Vec<Vec<f64>> = (0..d.len()).map(|i| vec![d.x[i], d.r[i], d.tags[i].region as u8 as f64, d.tags[i].reflected as u8 as f64]).collect();
    out.write_csv("doubled.csv", &["x", "r", "region", "reflected"], &rows)?;
    let (poly, closed) = d.meridian();
    let rep = DoublingReport {
        big_r,
        closed: d.closed,
        trivial: d.trivial,
        b_offset: d.b_offset,
        plane: d.plane,
        mirror_defect: mirror_defect(&d),
        embedded: check_embedded(&poly, closed, 4.0 * d.h_grid, 0.5).pass,
        junctions: junction_report(&d),
    };
    println!("doubling: R = {big_r}, closed = {}, embedded = {}", rep.closed, rep.embedded);
    out.write_json("doubling.json", &rep)?;
    out.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct ClosedSummary {
    stop: shrinker_lab::flow::StopReason,
    steps: usize,
    t_final: f64,
    max_type_i_ratio: f64,
}

#[derive(Serialize)]
struct FlowReport {
    p: Vec<f64>,
    q1_active: bool,
    graph_tau_final: f64,
    graph_final_norms: shrinker_lab::flow::GraphNorms,
    /// Absent when the doubled curve is not closed.
    closed: Option<ClosedSummary>,
}

fn cmd_flow(cfg: &RunConfig) -> Result<(), RunError> {
    let (p, b) = spectrum(cfg)?;
    let mut pv = cfg.flow.p.clone();
    pv.resize(b.m_star, 0.0);
    let pert = Perturbation { p: pv.clone(), gamma0: cfg.box_.gamma0, tau0: cfg.box_.tau0 };
    let mut out = open(cfg, "flow")?;

    let st = assemble_l(&p, cfg.spectral.closure)?;
    let q1 = (cfg.flow.c_q > 0.0).then(|| Q1Model::new(cfg.box_.big_gamma0, cfg.box_.tau0, cfg.flow.c_q, cfg.flow.q1));
    let mut stepper = GraphStepper::new(&p, &st, &b, q1);
    stepper.cfg = GraphFlowConfig { cfl: cfg.flow.cfl, max_halvings: cfg.flow.max_halvings };
    let start = GraphState::new(0.0, pert.profile_values(&p, &b), &p, &b, q1.is_some());
    let states = stepper.evolve(start, cfg.box_.tau_max, cfg.flow.checkpoint_dtau)?;
    let rows: Vec<Vec<f64>> = states
        .iter()
        .map(|s| {
            let mut row = vec![s.tau, s.norms.hu, s.norms.hs, s.norms.sup_h_over_rt, s.norms.sup_dh, s.norms.sup_rt_d2h];
            row.extend(&s.norms.coeffs);
            row
        })
        .collect();
    let mut names: Vec<String> = ["tau", "hu", "hs", "sup_h_over_rt", "sup_dh", "sup_rt_d2h"].map(String::from).to_vec();
    names.extend((0..b.m_star).map(|k| format!("c{}", k + 1)));
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    out.write_csv("graph_flow.csv", &header, &rows)?;
    let last = states.last().expect("evolve records the start");

    let big_r = cfg.doubling.big_r.unwrap_or_else(|| default_gluing_scale(&p));
    let d = build_doubling(&p, big_r, &CutoffEta::GLUING)?;
    let closed = if d.closed {
        let checkpoints: Vec<f64> = (1..200).map(|k| cfg.flow.t_end * k as f64 / 200.0).collect();
        let traj = flow_doubled(&d, &p, &b, Some(&pert), &checkpoints, cfg.flow.t_end, |_| true)?;
        let rows: Vec<Vec<f64>> = traj.states.iter().map(|s| vec![s.t, s.tau(), s.max_a, s.min_r, s.min_ds, s.type_i_ratio]).collect();
        out.write_csv("trajectory.csv", &["t", "tau", "max_A", "min_r", "min_ds", "type_i_ratio"], &rows)?;
        Some(ClosedSummary {
            stop: traj.stop,
            steps: traj.steps,
            t_final: traj.states.last().map_or(0.0, |s| s.t),
            max_type_i_ratio: traj.states.iter().map(|s| s.type_i_ratio).fold(0.0, f64::max),
        })
    } else {
        None
    };
    let rep = FlowReport { p: pv, q1_active: q1.is_some(), graph_tau_final: last.tau, graph_final_norms: last.norms.clone(), closed };
    println!("flow: graph flow to tau = {:.3}, |h_u| = {:.3e}, |h_s| = {:.3e}", last.tau, last.norms.hu, last.norms.hs);
    match &rep.closed {
        Some(c) => println!("flow: closed flow stop {:?} at t = {:.6}, max type-I ratio {:.4}", c.stop, c.t_final, c.max_type_i_ratio),
        None => println!("flow: doubled curve is not closed; closed flow skipped"),
    }
    out.write_json("flow.json", &rep)?;
    out.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct ShootReport<'a> {
    backend: Backend,
    status: ShootStatus,
    p_star: &'a [f64],
    staying_time_star: f64,
    levels: usize,
    probes: usize,
    bracket_monotone: bool,
    closed_form_p_star: Option<Vec<f64>>,
    sweep_exit_counts: std::collections::BTreeMap<&'static str, usize>,
    brackets: &'a [shrinker_lab::wazewski::BracketStep],
}

fn shoot_and_report<B: ProbeBackend>(cfg: &RunConfig, backend: &B, closed_form: Option<Vec<f64>>) -> Result<ShootResult, RunError> {
    let spec = backend.spec();
    let sweep = run_probes(backend, &sweep_points(backend.m(), cfg.shoot.sweep_points, spec.mu_u * (-spec.lambda_star * spec.tau0).exp()), false);
    let mut counts = std::collections::BTreeMap::new();
    for q in &sweep {
        *counts.entry(q.exit.exit_class.as_str()).or_insert(0) += 1;
    }
    let res = shoot(backend, &cfg.shoot.shoot_config())?;
    let mut out = open(cfg, "shoot")?;
    let rows: Vec<Vec<f64>> = sweep
        .iter()
        .chain(&res.probes)
        .map(|q| {
            let mut row = q.p.clone();
            row.extend([q.staying_time, q.sign(), q.exit.exit_class as u8 as f64, q.pre_exit_margins.non_unstable()]);
            row
        })
        .collect();
    let mut names: Vec<String> = (0..backend.m()).map(|k| format!("p{}", k + 1)).collect();
    names.extend(["staying_time", "exit_sign", "exit_class", "pre_exit_margin"].map(String::from));
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    out.write_csv("probes.csv", &header, &rows)?;
    let rep = ShootReport {
        backend: cfg.shoot.backend,
        status: res.status,
        p_star: &res.p_star,
        staying_time_star: res.staying_time_star,
        levels: res.levels(),
        probes: res.probes.len(),
        bracket_monotone: res.bracket_monotone(),
        closed_form_p_star: closed_form,
        sweep_exit_counts: counts,
        brackets: &res.brackets,
    };
    println!("shoot: {:?} p* = {:?}, staying {:.4}, {} levels, {} probes", rep.status, rep.p_star, rep.staying_time_star, rep.levels, rep.probes);
    out.write_json("shoot.json", &rep)?;
    out.finish()?;
    Ok(res)
}

fn cmd_shoot(cfg: &RunConfig) -> Result<(), RunError> {
    let (p, b) = spectrum(cfg)?;
    let spec = cfg.box_.spec(b.lambda_star);
    spec.validate(&b.lambda, b.m_star)?;
    let res = match cfg.shoot.backend {
        Backend::Surrogate => {
            let mut s = spec;
            if let Some(t) = cfg.shoot.surrogate_tau_max {
                s.tau_max = t;
            }
            let sur = SurrogateBackend::new(b.lambda.clone(), b.m_star, cfg.shoot.surrogate_c, s, mode_norms(&p, &b));
            shoot_and_report(cfg, &sur, Some(sur.p_star()))?
        }
        Backend::Full => {
            let big_r = cfg.doubling.big_r.unwrap_or_else(|| default_gluing_scale(&p));
            let d = build_doubling(&p, big_r, &CutoffEta::GLUING)?;
            if !d.closed {
                return Err(FlowError::NotClosed.into());
            }
            let mut full = FullBackend::new(&p, &b, &d, spec);
            full.dtau = cfg.flow.checkpoint_dtau;
            full.post_exit = cfg.flow.post_exit;
            shoot_and_report(cfg, &full, None)?
        }
    };
    if res.status == ShootStatus::NotFound {
        return Err(RunError::NotFound);
    }
    Ok(())
}

#[derive(Serialize)]
struct BarrierOutput {
    identity: shrinker_lab::barrier::IdentityReport,
    curvature_sup: f64,
    constants: shrinker_lab::barrier::BarrierConstants,
    reports: Vec<shrinker_lab::barrier::BarrierReport>,
    pass: bool,
}

fn cmd_barrier(cfg: &RunConfig) -> Result<(), RunError> {
    let p = cfg.build_profile()?;
    let bs = &cfg.barrier;
    let dom = BarrierDomain { tau0: cfg.box_.tau0, tau_range: (0.0, cfg.box_.tau_max), nf: bs.nf, ntau: bs.ntau };
    let mut reports = Vec::new();
    for region in [BarrierRegion::Inner, BarrierRegion::Outer] {
        let field = build_barrier(&p, &bs.constants, region, &dom).map_err(|e| RunError::Numerical(e.to_string()))?;
        reports.push(verify_supersolution(&field, &p, None, bs.h_bound, bs.tol_neg).map_err(|e| RunError::Numerical(e.to_string()))?);
    }
    let rep = BarrierOutput {
        identity: f_identity_check(&p),
        curvature_sup: curvature_sup(&p),
        constants: bs.constants,
        pass: reports.iter().all(|r| r.pass),
        reports,
    };
    for r in &rep.reports {
        println!(
            "barrier {:?}: {} worst margin {:.4e} at f = {:.4}, tau = {:.4} ({} nodes)",
            r.region,
            if r.pass { "PASS" } else { "FAIL" },
            r.worst_margin,
            r.worst_f,
            r.worst_tau,
            r.nodes
        );
    }
    let mut out = open(cfg, "barrier")?;
    out.write_json("barrier.json", &rep)?;
    out.finish()?;
    Ok(())
}

fn run(cmd: Cmd) -> Result<(), RunError> {
    let (common, f): (&Common, fn(&RunConfig) -> Result<(), RunError>) = match &cmd {
        Cmd::Profile(c) => (c, cmd_profile),
        Cmd::Spectrum(c) => (c, cmd_spectrum),
        Cmd::Double(c) => (c, cmd_double),
        Cmd::Flow(c) => (c, cmd_flow),
        Cmd::Shoot(c) => (c, cmd_shoot),
        Cmd::Barrier(c) => (c, cmd_barrier),
    };
    let cfg = resolve(common)?;
    if common.dry_run {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    f(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
