use std::path::{Path, PathBuf};

use cascade_core::analysis::{
    admissibility_ratio, hypothesis_report, kalman_mode_test, observability_constants,
    ObservationKind,
};
use cascade_core::dynamics::{
    signal_csv, solve, trajectory_csv, CascadeSystem, ControlSignal, SolveOptions, SystemState,
    TimeGrid,
};
use cascade_core::geometry::gcc_check;
use cascade_core::hum::{epsilon_sweep, synthesize_control, HumOptions, HumResult};
use serde_json::json;

use crate::config::{parse_config, LoadedConfig, ObservationChoice, Resolved};
use crate::output::{
    spectra_csv, versions, NamedGcc, OutputDir, ReplayRecord, ResolvedEcho, RunReport, CONFIG,
    CONTROL, INITIAL, REPORT, SPECTRA, TRAJECTORY,
};
use crate::{CliError, Command, RunArgs};

/// Canned heat 2-cascade with disjoint coupling and control regions.
pub const DEMO_CONFIG: &str = include_str!("../../../configs/demo_heat_cascade.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub verdict: Verdict,
    pub summary: String,
    pub report: Option<RunReport>,
    pub out_dir: Option<PathBuf>,
}

pub fn execute(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Replay { dir } => crate::replay::replay(dir),
        Command::Demo { out, snapshots } => {
            let loaded = parse_config(DEMO_CONFIG)?;
            let args = RunArgs {
                config: PathBuf::from("<demo>"),
                out: out.clone(),
                snapshots: *snapshots,
            };
            run_loaded("demo", &loaded, &args, sweep_eps)
        }
        Command::Gcc(a) => run_file("gcc", a, gcc),
        Command::Check(a) => run_file("check", a, check),
        Command::Control(a) => run_file("control", a, control),
        Command::Observability(a) => run_file("observability", a, observability),
        Command::Kalman(a) => run_file("kalman", a, kalman),
        Command::SweepEps(a) => run_file("sweep-eps", a, sweep_eps),
    }
}

/// Everything a command needs besides the configuration.
pub struct Ctx<'a> {
    pub loaded: &'a LoadedConfig,
    pub args: &'a RunArgs,
    pub out: OutputDir,
    pub report: RunReport,
}

type Handler = fn(&mut Ctx) -> Result<(Verdict, String), CliError>;

fn run_file(name: &str, args: &RunArgs, handler: Handler) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let loaded = parse_config(&text)?;
    run_loaded(name, &loaded, args, handler)
}

fn run_loaded(
    name: &str,
    loaded: &LoadedConfig,
    args: &RunArgs,
    handler: Handler,
) -> Result<Outcome, CliError> {
    let dir = args
        .out
        .clone()
        .or_else(|| loaded.config.output.clone())
        .unwrap_or_else(|| PathBuf::from("cascade_out").join(name));
    let mut ctx = Ctx {
        loaded,
        args,
        out: OutputDir::create(&dir)?,
        report: RunReport {
            command: name.to_string(),
            verdict: String::new(),
            summary: String::new(),
            config: loaded.raw.clone(),
            config_hash: loaded.hash.clone(),
            resolved: None,
            hypotheses: None,
            gcc: Vec::new(),
            result: serde_json::Value::Null,
            replay: None,
            notes: Vec::new(),
            artifacts: Vec::new(),
            versions: versions(),
        },
    };
    let mut text = serde_json::to_string_pretty(&loaded.raw).expect("values serialize");
    text.push('\n');
    ctx.out.write(CONFIG, &text)?;
    let (verdict, summary) = handler(&mut ctx)?;
    let summary = format!("{name}: {} ({summary})", verdict.label().to_uppercase());
    ctx.report.verdict = verdict.label().to_string();
    ctx.report.summary = summary.clone();
    ctx.report.artifacts = ctx.out.artifacts();
    let report = ctx.report.clone();
    ctx.out.write_json(REPORT, &report)?;
    Ok(Outcome {
        verdict,
        summary,
        report: Some(report),
        out_dir: Some(ctx.out.path().to_path_buf()),
    })
}

struct Prepared {
    sys: CascadeSystem,
    resolved: Resolved,
}

fn prepare(ctx: &mut Ctx) -> Result<Prepared, CliError> {
    let cfg = &ctx.loaded.config;
    let sys = cfg.build_system()?;
    let resolved = cfg.resolve(&sys)?;
    ctx.report.resolved = Some(ResolvedEcho {
        horizon: resolved.time.horizon(),
        dt: resolved.time.dt,
        steps: resolved.time.steps,
        k_filter: resolved.k_filter,
        horizon_defaulted: resolved.horizon_defaulted,
    });
    if sys.family().is_endpoint_angle() {
        ctx.report.notes.push(
            "θ = ±π/2 lies outside the open range (-π/2, π/2) covered by the parabolic-type null controllability result"
                .into(),
        );
    }
    if resolved.horizon_defaulted {
        ctx.report
            .notes
            .push("T defaulted to 1.5 x the sum of the GCC times of all regions".into());
    }
    ctx.out.write(SPECTRA, &spectra_csv(sys.basis().eigenvalues()))?;
    Ok(Prepared { sys, resolved })
}

fn gcc_reports(ctx: &mut Ctx, horizon: f64) -> Result<bool, CliError> {
    let cfg = &ctx.loaded.config;
    let mut regions = cfg.control_regions()?;
    regions.extend(cfg.coupling_regions()?);
    let mut all = true;
    for (name, r) in regions {
        let report = gcc_check(&r, horizon, cfg.gcc.n_rays, cfg.gcc.dt_ray)?;
        all &= report.pass;
        ctx.report.gcc.push(NamedGcc { name, report });
    }
    Ok(all)
}

fn gcc(ctx: &mut Ctx) -> Result<(Verdict, String), CliError> {
    let cfg = &ctx.loaded.config;
    let horizon = match cfg.gcc.horizon.or(cfg.horizon) {
        Some(t) => t,
        None => cfg.default_horizon()?,
    };
    if cfg.controls.iter().any(|c| matches!(c, crate::config::ControlConfig::Boundary { .. })) {
        ctx.report
            .notes
            .push("boundary controls are not ray-traced; only regions are checked".into());
    }
    let pass = gcc_reports(ctx, horizon)?;
    let hit: Vec<String> = ctx
        .report
        .gcc
        .iter()
        .map(|g| format!("{}: {}/{} rays", g.name, g.report.rays_hit, g.report.rays_total))
        .collect();
    ctx.report.result = json!({ "horizon": horizon, "pass": pass });
    Ok((Verdict::from_bool(pass), format!("T = {horizon}; {}", hit.join(", "))))
}

fn check(ctx: &mut Ctx) -> Result<(Verdict, String), CliError> {
    let p = prepare(ctx)?;
    let cfg = &ctx.loaded.config;
    let levels = admissibility_ratio(
        &p.sys,
        cfg.check.a2_samples,
        cfg.check.a2_horizon,
        cfg.dt.unwrap_or(f64::INFINITY),
        &cfg.check.a2_levels,
        cfg.seed,
    )?;
    let rep = hypothesis_report(&p.sys, cfg.check.a4_samples, &levels, cfg.seed)?;
    let summary = format!(
        "λ1 = {:.6}, A1 {}, A4 {}, A2 ratios {:?}",
        rep.omega_a1,
        rep.a1_holds,
        rep.a4_holds,
        rep.a2_ratio_samples
            .iter()
            .map(|r| format!("{r:.3}"))
            .collect::<Vec<_>>()
    );
    let pass = rep.pass();
    ctx.report.result = json!({ "admissibility": levels });
    ctx.report.hypotheses = Some(rep);
    Ok((Verdict::from_bool(pass), summary))
}

/// HUM result without the bulky signal and states.
fn hum_json(r: &HumResult) -> serde_json::Value {
    let mut v = serde_json::to_value(r).expect("results serialize");
    if let Some(obj) = v.as_object_mut() {
        for key in ["control", "initial_state", "terminal_state"] {
            obj.remove(key);
        }
    }
    v
}

fn write_control_artifacts(
    ctx: &mut Ctx,
    sys: &CascadeSystem,
    time: &TimeGrid,
    r: &HumResult,
) -> Result<(), CliError> {
    ctx.out.write(CONTROL, &signal_csv(&r.control))?;
    ctx.out.write_json(INITIAL, &r.initial_state)?;
    ctx.report.replay = Some(ReplayRecord {
        epsilon: r.epsilon,
        k_filter: r.k_filter,
        terminal_energy_full: r.terminal_energy_full,
        terminal_energy_filtered: r.terminal_energy_filtered,
        terminal_energy_per_component: r.terminal_energy_per_component.clone(),
    });
    if let Some(k) = ctx.args.snapshots {
        let sol = solve(
            sys,
            &r.initial_state,
            Some(&r.control),
            time,
            &SolveOptions::snapshots(k),
        )?;
        ctx.out.write(TRAJECTORY, &trajectory_csv(&sol.snapshots))?;
    }
    Ok(())
}

fn hum_options(ctx: &Ctx, k_filter: usize) -> HumOptions {
    let cfg = &ctx.loaded.config;
    HumOptions::new(k_filter, cfg.epsilon, cfg.cg_tol, cfg.max_iter)
}

fn control(ctx: &mut Ctx) -> Result<(Verdict, String), CliError> {
    let p = prepare(ctx)?;
    let y0 = ctx.loaded.config.initial_state(&p.sys)?;
    let time = p.resolved.time;
    gcc_reports(ctx, time.horizon())?;
    let opts = hum_options(ctx, p.resolved.k_filter);
    let r = synthesize_control(&p.sys, &y0, &time, &opts)?;
    write_control_artifacts(ctx, &p.sys, &time, &r)?;
    ctx.report.result = hum_json(&r);
    let summary = format!(
        "{:?} after {} iterations; filtered terminal/initial energy = {:.3e}; full terminal energy = {:.3e}",
        r.status,
        r.cg_iterations,
        r.filtered_ratio(),
        r.terminal_energy_full
    );
    Ok((Verdict::from_bool(r.success), summary))
}

fn observability(ctx: &mut Ctx) -> Result<(Verdict, String), CliError> {
    let p = prepare(ctx)?;
    let cfg = &ctx.loaded.config;
    let horizons = if cfg.observability.horizons.is_empty() {
        vec![p.resolved.time.horizon()]
    } else {
        cfg.observability.horizons.clone()
    };
    let last = *p.sys.controlled().last().expect("validated controls");
    let mut reports = Vec::new();
    for which in &cfg.observability.which {
        let kind = match which {
            ObservationChoice::Control => ObservationKind::ControlAdjoint { component: last },
            ObservationChoice::Coupling => {
                let Some(e) = p.sys.coupling().entries().first() else {
                    return Err(CliError::Config("no coupling to observe".into()));
                };
                ObservationKind::CouplingProjection {
                    target: e.target,
                    source: e.source,
                }
            }
        };
        for &t in &horizons {
            let time = TimeGrid::new(t, p.resolved.time.dt)?;
            reports.push(observability_constants(
                &p.sys,
                kind,
                &time,
                p.resolved.k_filter,
                cfg.observability.seed_limit,
            )?);
        }
    }
    let pass = reports
        .iter()
        .all(|r| r.c_est > 1e-10 * r.eigenvalues.last().copied().unwrap_or(0.0).abs());
    let summary = reports
        .iter()
        .map(|r| format!("T = {}: C = {:.6e}", r.horizon, r.c_est))
        .collect::<Vec<_>>()
        .join("; ");
    ctx.report.result = json!({ "observability": reports });
    Ok((Verdict::from_bool(pass), summary))
}

fn kalman(ctx: &mut Ctx) -> Result<(Verdict, String), CliError> {
    let p = prepare(ctx)?;
    let k = ctx
        .loaded
        .config
        .kalman_modes
        .unwrap_or(p.resolved.k_filter)
        .min(p.sys.basis().len());
    let rep = kalman_mode_test(p.sys.coupling(), p.sys.control(), p.sys.basis(), k)?;
    let deficient: Vec<usize> = rep
        .modes
        .iter()
        .filter(|m| !m.full_rank)
        .map(|m| m.mode + 1)
        .collect();
    let summary = if deficient.is_empty() {
        format!("full rank on all {k} modes")
    } else {
        format!("rank deficient on modes {deficient:?}")
    };
    let pass = rep.pass;
    ctx.report.result = json!({ "kalman": rep });
    Ok((Verdict::from_bool(pass), summary))
}

fn sweep_eps(ctx: &mut Ctx) -> Result<(Verdict, String), CliError> {
    let p = prepare(ctx)?;
    let cfg = &ctx.loaded.config;
    let Some(sweep) = cfg.sweep.clone() else {
        return Err(CliError::Config("sweep-eps needs a \"sweep\" section".into()));
    };
    let y0 = cfg.initial_state(&p.sys)?;
    let time = p.resolved.time;
    let opts = hum_options(ctx, p.resolved.k_filter);
    let s = epsilon_sweep(&p.sys, &y0, &time, &opts, &sweep.epsilons)?;
    let last = s.results.last().expect("at least three runs");
    write_control_artifacts(ctx, &p.sys, &time, last)?;
    let (lo, hi) = sweep.slope_band;
    let in_band = s.slope >= lo && s.slope <= hi;
    let free = last.free_terminal_norm;
    let summary = format!(
        "slope {:.3} (band [{lo}, {hi}]); |Y(T)|/|free(T)| at ε = {:e}: {:.3e}",
        s.slope,
        last.epsilon,
        if free > 0.0 { last.terminal_norm / free } else { 0.0 }
    );
    ctx.report.result = json!({
        "epsilons": s.epsilons,
        "terminal_norms": s.terminal_norms,
        "slope": s.slope,
        "intercept": s.intercept,
        "partial": s.partial,
        "free_terminal_norm": free,
        "runs": s.results.iter().map(hum_json).collect::<Vec<_>>(),
    });
    Ok((Verdict::from_bool(in_band && !s.partial), summary))
}

/// Control signal with the layout expected by `sys` on `time`.
pub fn control_template(sys: &CascadeSystem, time: &TimeGrid) -> ControlSignal {
    ControlSignal::zeros(sys, *time)
}

pub fn read_report(dir: &Path) -> Result<RunReport, CliError> {
    let p = dir.join(REPORT);
    let text = std::fs::read_to_string(&p)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("corrupt {}: {e}", p.display())))
}

pub fn read_initial(dir: &Path) -> Result<SystemState, CliError> {
    let p = dir.join(INITIAL);
    let text = std::fs::read_to_string(&p)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("corrupt {}: {e}", p.display())))
}
