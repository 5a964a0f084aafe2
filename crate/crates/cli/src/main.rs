use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use loopcool::cooling::cooling_report;
use loopcool::feedback::{
    self, default_band, effective_cavity, exact_resonance, nyquist_stability,
};
use loopcool::ingest;
use loopcool::langevin::{
    displacement_spectrum, lorentzian_extract, mechanical_peak, phonon_occupancy_detailed,
    spectrum_at, write_spectrum_csv, Observable, QuadratureConfig, Spectrum,
};
use loopcool::model::{
    cavity_susceptibility, membrane_modes, GainModel, MembraneGeometry, TransferCurve,
};
use loopcool::optimize::presets::{figure_preset, PresetOptions};
use loopcool::optimize::{
    minimize_occupancy, sweep, Evaluator, MinimizeOptions, Scenario, SweepSpec, Variable,
};
use loopcool::par::Exec;
use loopcool::units::{hz_to_rad, occupancy_to_temperature, rad_to_hz};
use loopcool::Error;
use serde_json::{json, Value};

mod config;
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "loopcool",
    version,
    about = "Optomechanical cooling with coherent output feedback"
)]
struct Cli {
    /// RunConfig JSON; defaults describe the membrane experiment without feedback.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// weak | langevin
    #[arg(long, global = true)]
    evaluator: Option<String>,
    #[arg(long, global = true)]
    points: Option<usize>,
    /// Frequency band `lo:hi` in Hz.
    #[arg(long, global = true)]
    band: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mechanical position spectrum from the Langevin solution.
    Spectrum,
    /// Closed-loop cavity: linewidth, detuning, stability.
    EffectiveCavity,
    /// Final occupancy with the configured evaluator.
    Cooling,
    /// Exact occupancy and the phonon-number spectrum.
    Solve,
    /// Minimise over `--vary name:lo:hi` (up to three), or `--sweep name:lo:hi`.
    Optimize {
        #[arg(long)]
        vary: Vec<String>,
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Write the curve bundle of a named study.
    Preset { name: String },
    /// Decompose an open-loop Bode trace, or fit a measured spectrum.
    Ingest {
        #[arg(long)]
        bode: Option<PathBuf>,
        #[arg(long)]
        spectrum: Option<PathBuf>,
        /// Band (Hz) for the delay fit, `lo:hi`.
        #[arg(long)]
        delay_band: Option<String>,
    },
    /// Drum-mode table of a circular membrane.
    Membrane {
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value_t = 97e-9)]
        thickness: f64,
        #[arg(long, default_value_t = 3100.0)]
        density: f64,
        /// Fundamental (0,1) frequency in Hz.
        #[arg(long, conflicts_with = "stress")]
        fundamental_hz: Option<f64>,
        /// In-plane stress in Pa.
        #[arg(long)]
        stress: Option<f64>,
        #[arg(long, default_value_t = 3)]
        n: u32,
        #[arg(long, default_value_t = 3)]
        j: u32,
    },
}

const UNSTABLE: u8 = 3;
const INVALID: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let unstable = e
                .chain()
                .any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_instability));
            ExitCode::from(if unstable { UNSTABLE } else { INVALID })
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    scenario: Scenario,
    out: PathBuf,
    evaluator: Evaluator,
    points: usize,
    band: Option<(f64, f64)>,
    /// Evaluator and points only override a preset when given explicitly.
    explicit_evaluator: bool,
    explicit_points: bool,
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(e) = &cli.evaluator {
        cfg.evaluator.kind = e.parse::<Evaluator>()?;
    }
    if let Some(n) = cli.points {
        if n < 2 {
            bail!(Error::Config("--points must be at least 2".into()));
        }
        cfg.evaluator.points = n;
    }
    if let Some(b) = &cli.band {
        cfg.evaluator.band_hz = Some(parse_pair(b, "--band")?);
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    let scenario = cfg.scenario()?;
    let ctx = Ctx {
        out: cfg.output.dir.clone(),
        evaluator: cfg.evaluator.kind,
        points: cfg.evaluator.points,
        band: cfg
            .evaluator
            .band_hz
            .map(|(a, b)| (hz_to_rad(a), hz_to_rad(b))),
        scenario,
        cfg,
        explicit_evaluator: cli.evaluator.is_some(),
        explicit_points: cli.points.is_some(),
    };
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    match &cli.command {
        Command::Spectrum => spectrum(&ctx),
        Command::EffectiveCavity => eff_cavity(&ctx),
        Command::Cooling => cooling(&ctx),
        Command::Solve => solve(&ctx),
        Command::Optimize { vary, sweep } => optimize(&ctx, vary, sweep.as_deref()),
        Command::Preset { name } => preset(&ctx, name),
        Command::Ingest {
            bode,
            spectrum,
            delay_band,
        } => ingest_cmd(
            &ctx,
            bode.as_deref(),
            spectrum.as_deref(),
            delay_band.as_deref(),
        ),
        Command::Membrane {
            radius,
            thickness,
            density,
            fundamental_hz,
            stress,
            n,
            j,
        } => membrane(
            &ctx,
            *radius,
            *thickness,
            *density,
            *fundamental_hz,
            *stress,
            *n,
            *j,
        ),
    }
}

fn parse_pair(s: &str, what: &str) -> anyhow::Result<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("{what} expects lo:hi, got `{s}`")))?;
    let lo: f64 = a
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{what}: bad number `{a}`")))?;
    let hi: f64 = b
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{what}: bad number `{b}`")))?;
    if !(lo < hi) {
        bail!(Error::Config(format!("{what}: need lo < hi")));
    }
    Ok((lo, hi))
}

/// Variables given in Hz on the command line.
fn is_hz(v: Variable) -> bool {
    matches!(v, Variable::Detuning | Variable::Coupling)
}

fn parse_variable(s: &str) -> anyhow::Result<(Variable, (f64, f64))> {
    let (name, range) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("expected name:lo:hi, got `{s}`")))?;
    let v: Variable = name.parse()?;
    let (lo, hi) = parse_pair(range, name)?;
    Ok(if is_hz(v) {
        (v, (hz_to_rad(lo), hz_to_rad(hi)))
    } else {
        (v, (lo, hi))
    })
}

fn to_user(v: Variable, x: f64) -> f64 {
    if is_hz(v) {
        rad_to_hz(x)
    } else {
        x
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn sidecar(ctx: &Ctx, name: &str, command: &str, summary: Value) -> anyhow::Result<PathBuf> {
    let path = ctx.out.join(format!("{name}.json"));
    let doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": ctx.cfg.resolved(),
        "summary": summary,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn require_stable_loop(s: &Scenario) -> anyhow::Result<feedback::StabilityVerdict> {
    let v = nyquist_stability(
        &s.cavity,
        &s.feedback,
        default_band(&s.cavity, &s.feedback),
        4000,
    )?;
    if !v.stable {
        bail!(Error::FeedbackUnstable {
            winding: v.winding_number
        });
    }
    Ok(v)
}

fn quadrature(ctx: &Ctx) -> QuadratureConfig {
    QuadratureConfig {
        rel_tol: ctx.cfg.evaluator.rel_tol,
        check_stability: false,
        ..QuadratureConfig::default()
    }
}

fn spectrum(ctx: &Ctx) -> anyhow::Result<()> {
    let s = &ctx.scenario;
    require_stable_loop(s)?;
    let (we, ge) = mechanical_peak(&s.cavity, &s.mechanics, &s.feedback)?;
    let band = ctx
        .band
        .unwrap_or((we - 50.0 * ge.abs(), we + 50.0 * ge.abs()));
    let sp = displacement_spectrum(
        &s.cavity,
        &s.mechanics,
        &s.feedback,
        band,
        ctx.points.max(8),
        Exec::default(),
    )?;
    let csv = ctx.out.join("spectrum.csv");
    write_spectrum_csv(&csv, &sp)?;
    let fit = lorentzian_extract(&sp).ok();
    let summary = json!({
        "omega_eff_hz": rad_to_hz(we),
        "gamma_eff_hz": rad_to_hz(ge),
        "fit": fit.map(|f| json!({"omega_eff_hz": rad_to_hz(f.omega_eff), "gamma_eff_hz": rad_to_hz(f.gamma_eff), "area": f.area})),
    });
    sidecar(ctx, "spectrum", "spectrum", summary)?;
    println!(
        "spectrum: peak {:.6} kHz, linewidth {:.4} Hz, {} points -> {}",
        rad_to_hz(we) / 1e3,
        rad_to_hz(ge),
        sp.omega.len(),
        csv.display()
    );
    Ok(())
}

fn eff_cavity(ctx: &Ctx) -> anyhow::Result<()> {
    let s = &ctx.scenario;
    let (p, fb) = (&s.cavity, &s.feedback);
    let e = effective_cavity(p, fb)?;
    let v = nyquist_stability(p, fb, default_band(p, fb), 4000)?;
    let exact = if v.stable {
        exact_resonance(p, fb).ok()
    } else {
        None
    };
    let k = p.kappa();
    let (lo, hi) = ctx
        .band
        .unwrap_or((p.detuning - 10.0 * k, p.detuning + 10.0 * k));
    let n = ctx.points;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let w = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let chi_eff = feedback::effective_susceptibility(p, fb, w)
            .map(|c| c.norm_sqr())
            .unwrap_or(f64::INFINITY);
        rows.push(vec![
            rad_to_hz(w),
            chi_eff,
            cavity_susceptibility(p, w).norm_sqr(),
            feedback::squash_spectrum(p, fb, w).unwrap_or(f64::INFINITY),
        ]);
    }
    let csv = ctx.out.join("effective_cavity.csv");
    write_csv(
        &csv,
        &["frequency_hz", "chi_eff_abs2", "chi_abs2", "s_i"],
        &rows,
    )?;
    let summary = json!({
        "kappa_eff_hz": rad_to_hz(e.kappa_eff),
        "delta_eff_hz": rad_to_hz(e.delta_eff),
        "normalized_gain": e.gain_norm,
        "phase_t_rad": e.phase_t,
        "single_pole_valid": e.valid,
        "exact_peak_hz": exact.map(|x| rad_to_hz(x.0)),
        "exact_hwhm_hz": exact.map(|x| rad_to_hz(x.1)),
        "stable": v.stable,
        "winding_number": v.winding_number,
        "margin": v.margin,
    });
    sidecar(ctx, "effective_cavity", "effective-cavity", summary)?;
    println!(
        "effective-cavity: G_fb={:.4} kappa_eff={:.2} Hz delta_eff={:.4} kHz stable={}",
        e.gain_norm,
        rad_to_hz(e.kappa_eff),
        rad_to_hz(e.delta_eff) / 1e3,
        v.stable
    );
    Ok(())
}

fn cooling(ctx: &Ctx) -> anyhow::Result<()> {
    let s = &ctx.scenario;
    let v = require_stable_loop(s)?;
    let r = cooling_report(&s.cavity, &s.mechanics, &s.feedback)?;
    let n = match ctx.evaluator {
        Evaluator::WeakCoupling => r.n_final,
        Evaluator::Langevin => {
            phonon_occupancy_detailed(&s.cavity, &s.mechanics, &s.feedback, &quadrature(ctx))?.n
        }
    };
    let t = occupancy_to_temperature(n, s.mechanics.omega_m);
    let summary = json!({
        "evaluator": ctx.evaluator,
        "n_final": n,
        "temperature_k": t,
        "stable": v.stable,
        "margin": v.margin,
        "report": r,
    });
    let csv = ctx.out.join("cooling.csv");
    write_csv(
        &csv,
        &[
            "n_final",
            "temperature_k",
            "a_plus",
            "a_minus",
            "gamma_opt_hz",
            "n_backaction",
        ],
        &[vec![
            n,
            t,
            r.rates.a_plus,
            r.rates.a_minus,
            rad_to_hz(r.rates.gamma_opt),
            r.n_backaction,
        ]],
    )?;
    sidecar(ctx, "cooling", "cooling", summary)?;
    println!(
        "cooling: n_final={n:.6e} T={} stable=true evaluator={}",
        format_temperature(t),
        evaluator_name(ctx.evaluator)
    );
    Ok(())
}

fn format_temperature(t: f64) -> String {
    if t >= 1.0 {
        format!("{t:.4} K")
    } else if t >= 1e-3 {
        format!("{:.4} mK", t * 1e3)
    } else if t >= 1e-6 {
        format!("{:.4} uK", t * 1e6)
    } else {
        format!("{:.4} nK", t * 1e9)
    }
}

fn evaluator_name(e: Evaluator) -> &'static str {
    match e {
        Evaluator::WeakCoupling => "weak_coupling",
        Evaluator::Langevin => "langevin",
    }
}

fn solve(ctx: &Ctx) -> anyhow::Result<()> {
    let s = &ctx.scenario;
    require_stable_loop(s)?;
    let r = phonon_occupancy_detailed(&s.cavity, &s.mechanics, &s.feedback, &quadrature(ctx))?;
    let band = ctx.band.unwrap_or((
        r.omega_eff - 50.0 * r.gamma_eff,
        r.omega_eff + 50.0 * r.gamma_eff,
    ));
    let n = ctx.points;
    let rows = (0..n)
        .map(|i| {
            let w = band.0 + (band.1 - band.0) * i as f64 / (n - 1) as f64;
            spectrum_at(&s.cavity, &s.mechanics, &s.feedback, Observable::BDag, w)
                .map(|v| vec![rad_to_hz(w), v])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let csv = ctx.out.join("solve.csv");
    write_csv(&csv, &["frequency_hz", "s_bdag_b"], &rows)?;
    let t = occupancy_to_temperature(r.n, s.mechanics.omega_m);
    let summary = json!({
        "n_final": r.n,
        "quadrature_error": r.error,
        "temperature_k": t,
        "omega_eff_hz": rad_to_hz(r.omega_eff),
        "gamma_eff_hz": rad_to_hz(r.gamma_eff),
        "panels": r.panels,
    });
    sidecar(ctx, "solve", "solve", summary)?;
    println!(
        "solve: n_final={:.6e} T={} gamma_eff={:.4} Hz",
        r.n,
        format_temperature(t),
        rad_to_hz(r.gamma_eff)
    );
    Ok(())
}

fn optimize(ctx: &Ctx, vary: &[String], sweep_arg: Option<&str>) -> anyhow::Result<()> {
    let s = &ctx.scenario;
    if let Some(sw) = sweep_arg {
        if !vary.is_empty() {
            bail!(Error::Config("use either --sweep or --vary".into()));
        }
        let (v, range) = parse_variable(sw)?;
        let spec = SweepSpec::new(v, range, ctx.points, ctx.evaluator)?;
        let pts = sweep(&spec, s, Exec::default())?;
        let rows: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| {
                vec![
                    to_user(v, p.value),
                    p.eval.n_final,
                    p.eval.temperature_final,
                    if p.eval.stable { 1.0 } else { 0.0 },
                    p.eval.margin,
                ]
            })
            .collect();
        let csv = ctx.out.join("sweep.csv");
        write_csv(
            &csv,
            &[v.name(), "n_final", "temperature_k", "stable", "margin"],
            &rows,
        )?;
        let best = pts
            .iter()
            .filter(|p| p.eval.stable)
            .min_by(|a, b| a.eval.n_final.total_cmp(&b.eval.n_final));
        let unstable = pts.iter().filter(|p| !p.eval.stable).count();
        sidecar(
            ctx,
            "sweep",
            "optimize --sweep",
            json!({"variable": v, "points": pts.len(), "unstable_points": unstable, "best": best.map(|b| json!({"value": to_user(v, b.value), "n_final": b.eval.n_final}))}),
        )?;
        match best {
            Some(b) => println!(
                "sweep: {} points, {} unstable, min n={:.6e} at {}={}",
                pts.len(),
                unstable,
                b.eval.n_final,
                v.name(),
                to_user(v, b.value)
            ),
            None => bail!(Error::NoStablePoint),
        }
        return Ok(());
    }
    if vary.is_empty() {
        bail!(Error::Config(
            "optimize needs --vary name:lo:hi or --sweep name:lo:hi".into()
        ));
    }
    let free = vary
        .iter()
        .map(|v| parse_variable(v))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut opts = MinimizeOptions::new(ctx.evaluator);
    opts.eval.quadrature = quadrature(ctx);
    let r = minimize_occupancy(s, &free, &opts)?;
    let vars: Vec<Variable> = free.iter().map(|f| f.0).collect();
    let mut header: Vec<&str> = vars.iter().map(|v| v.name()).collect();
    header.extend(["n_final", "stable"]);
    let rows: Vec<Vec<f64>> = r
        .trace
        .iter()
        .map(|t| {
            let mut row: Vec<f64> = vars
                .iter()
                .zip(&t.params)
                .map(|(&v, &x)| to_user(v, x))
                .collect();
            row.extend([t.n_final, if t.stable { 1.0 } else { 0.0 }]);
            row
        })
        .collect();
    let csv = ctx.out.join("optimize_trace.csv");
    write_csv(&csv, &header, &rows)?;
    let best: serde_json::Map<String, Value> = vars
        .iter()
        .zip(&r.best_params)
        .map(|(&v, &x)| (v.name().to_string(), json!(to_user(v, x))))
        .collect();
    sidecar(
        ctx,
        "optimize_trace",
        "optimize",
        json!({"best_params": best, "best_occupancy": r.best_occupancy, "stability_margin": r.stability_margin, "evaluations": r.trace.len()}),
    )?;
    println!(
        "optimize: n_min={:.6e} at {} (margin {:.3e}, {} evaluations)",
        r.best_occupancy,
        Value::Object(best),
        r.stability_margin,
        r.trace.len()
    );
    Ok(())
}

fn preset(ctx: &Ctx, name: &str) -> anyhow::Result<()> {
    let opts = PresetOptions {
        points: ctx.explicit_points.then_some(ctx.points),
        evaluator: ctx.explicit_evaluator.then_some(ctx.evaluator),
        exec: Exec::default(),
    };
    let b = figure_preset(name, &opts)?;
    let files = b.write(&ctx.out)?;
    sidecar(
        ctx,
        &format!("{name}_run"),
        "preset",
        json!({
            "preset": name,
            "evaluator": b.evaluator,
            "files": files.iter().filter_map(|f| f.file_name()).map(|f| f.to_string_lossy()).collect::<Vec<_>>(),
        }),
    )?;
    let csvs = files
        .iter()
        .filter(|f| f.extension().is_some_and(|e| e == "csv"))
        .count();
    println!(
        "preset {name}: {csvs} curves, evaluator {} -> {}",
        evaluator_name(b.evaluator),
        ctx.out.display()
    );
    Ok(())
}

fn ingest_cmd(
    ctx: &Ctx,
    bode: Option<&Path>,
    spectrum: Option<&Path>,
    delay_band: Option<&str>,
) -> anyhow::Result<()> {
    match (bode, spectrum) {
        (Some(path), None) => {
            let s = &ctx.scenario;
            let trace = ingest::parse_bode(path)?;
            let d = ingest::decompose_electronic_filter(&trace, &s.cavity, ctx.cfg.feedback.port)?;
            let GainModel::Tabulated(curve) = &d.gain else {
                unreachable!("decomposition is tabulated")
            };
            let (lo, hi) = curve.domain();
            let band = match delay_band {
                Some(b) => {
                    let (a, c) = parse_pair(b, "--delay-band")?;
                    (hz_to_rad(a), hz_to_rad(c))
                }
                None => (lo + 0.5 * (hi - lo), hi),
            };
            let fit = ingest::linear_phase_fit(curve, band)?;
            let corner = ingest::high_pass_corner(curve).ok();
            write_filter(ctx, curve)?;
            for f in &d.dropped_hz {
                eprintln!(
                    "warning: dropped sample at {f} Hz (cavity response below {:e})",
                    ingest::MIN_CAVITY_RESPONSE
                );
            }
            sidecar(
                ctx,
                "filter",
                "ingest --bode",
                json!({
                    "source": d.source,
                    "samples": curve.len(),
                    "dropped_hz": d.dropped_hz,
                    "delay_s": fit.delay,
                    "phase_fit_rms_rad": fit.rms_residual,
                    "delay_band_hz": [rad_to_hz(band.0), rad_to_hz(band.1)],
                    "corner_hz": corner.map(rad_to_hz),
                    "note": "detection efficiency is not separable from the filter gain; eta is taken as 1 downstream",
                }),
            )?;
            println!(
                "ingest: {} samples, delay {:.2} ns, corner {}",
                curve.len(),
                fit.delay * 1e9,
                corner
                    .map(|c| format!("{:.2} kHz", rad_to_hz(c) / 1e3))
                    .unwrap_or_else(|| "none".into())
            );
            Ok(())
        }
        (None, Some(path)) => {
            let sp: Spectrum = ingest::parse_spectrum(path)?;
            let fit = lorentzian_extract(&sp)?;
            let csv = ctx.out.join("spectrum_fit.csv");
            write_csv(
                &csv,
                &["omega_eff_hz", "gamma_eff_hz", "area", "background"],
                &[vec![
                    rad_to_hz(fit.omega_eff),
                    rad_to_hz(fit.gamma_eff),
                    fit.area,
                    fit.background,
                ]],
            )?;
            sidecar(
                ctx,
                "spectrum_fit",
                "ingest --spectrum",
                json!({"source": path, "fit": fit}),
            )?;
            println!(
                "ingest: peak {:.6} kHz, linewidth {:.4} Hz",
                rad_to_hz(fit.omega_eff) / 1e3,
                rad_to_hz(fit.gamma_eff)
            );
            Ok(())
        }
        _ => Err(anyhow!(Error::Config(
            "ingest needs exactly one of --bode or --spectrum".into()
        ))),
    }
}

fn write_filter(ctx: &Ctx, curve: &TransferCurve) -> anyhow::Result<()> {
    let (f, v): (Vec<f64>, Vec<_>) = curve.samples().map(|(w, g)| (rad_to_hz(w), g)).unzip();
    ingest::BodeTrace::from_complex("filter", &f, &v)?.write(&ctx.out.join("filter.csv"))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn membrane(
    ctx: &Ctx,
    radius: f64,
    thickness: f64,
    density: f64,
    fundamental_hz: Option<f64>,
    stress: Option<f64>,
    n: u32,
    j: u32,
) -> anyhow::Result<()> {
    let geom = match (fundamental_hz, stress) {
        (_, Some(s)) => MembraneGeometry::from_stress(radius, thickness, density, s)?,
        (Some(f), None) => {
            MembraneGeometry::from_fundamental(radius, thickness, density, hz_to_rad(f))?
        }
        (None, None) => MembraneGeometry::from_fundamental(
            radius,
            thickness,
            density,
            hz_to_rad(loopcool::optimize::presets::EXPERIMENT_OMEGA_M_HZ),
        )?,
    };
    let modes = membrane_modes(&geom, n, j)?;
    let mass = geom.physical_mass();
    let rows: Vec<Vec<f64>> = modes
        .iter()
        .map(|m| {
            vec![
                m.n as f64,
                m.j as f64,
                m.alpha,
                rad_to_hz(m.omega),
                m.m_eff_ratio,
                mass * m.m_eff_ratio,
            ]
        })
        .collect();
    let csv = ctx.out.join("membrane.csv");
    write_csv(
        &csv,
        &["n", "j", "alpha", "frequency_hz", "m_eff_ratio", "m_eff_kg"],
        &rows,
    )?;
    sidecar(
        ctx,
        "membrane",
        "membrane",
        json!({"geometry": geom, "physical_mass_kg": mass, "modes": modes.len()}),
    )?;
    let f = &modes[0];
    println!(
        "membrane: {} modes, fundamental ({},{}) at {:.3} kHz, m_eff {:.3} ng",
        modes.len(),
        f.n,
        f.j,
        rad_to_hz(f.omega) / 1e3,
        mass * f.m_eff_ratio * 1e12
    );
    Ok(())
}
