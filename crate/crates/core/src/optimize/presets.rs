//! Named parameter sets and the curve bundles built from them.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::{
    evaluate, minimize_occupancy, sweep, EvalOptions, Evaluator, MinimizeOptions, Scenario,
    SweepSpec, Variable,
};
use crate::error::{Error, Result};
use crate::feedback::{
    self, effective_cavity, exact_resonance, squash_spectrum, with_normalized_gain,
};
use crate::langevin::QuadratureConfig;
use crate::model::{CavityParams, FeedbackConfig, GainModel, MechanicsParams, Port};
use crate::par::{self, Exec};
use crate::units::{
    hz_to_rad, occupancy_to_temperature, rad_to_hz, reduction_db, temperature_to_occupancy,
};

pub const EXPERIMENT_KAPPA_HZ: f64 = 21.5e3;
pub const EXPERIMENT_KAPPA_PRIME_HZ: f64 = 1.35e3;
pub const EXPERIMENT_DETUNING_HZ: f64 = 330e3;
pub const EXPERIMENT_OMEGA_M_HZ: f64 = 343.13e3;
pub const EXPERIMENT_GAMMA_M_HZ: f64 = 1.18;
pub const EXPERIMENT_BATH_K: f64 = 300.0;
pub const EXPERIMENT_DRIVE_W: f64 = 33e-6;
pub const EXPERIMENT_G0_HZ: f64 = 0.84;
/// Linearised coupling reproducing the 2 K no-feedback result.
pub const EXPERIMENT_COUPLING_HZ: f64 = 1612.0186;
/// Effective detection efficiency of the transmission loop.
pub const EXPERIMENT_ETA: f64 = 6.84401493557163e-4;
pub const EXPERIMENT_DELAY: f64 = 750e-9;
/// Flat-filter phase offset giving φ_𝒯(Δ) ≈ −0.59 rad with the 750 ns delay.
pub const EXPERIMENT_PHASE_OFFSET: f64 = -3.6478795204733436;
pub const EXPERIMENT_OPTIMAL_GAIN: f64 = 0.9;
pub const EXPERIMENT_NO_FEEDBACK_K: f64 = 2.0;

pub const FIG1_OPTICAL_ETA: f64 = 0.42;
pub const FIG1_MICROWAVE_ETA: f64 = 0.36;
pub const FIG1_GAIN_BOUNDS: (f64, f64) = (-1.0, 1.0);
pub const FIG1_PHASE_BOUNDS: (f64, f64) = (-PI, PI);

pub const PRESET_NAMES: [&str; 9] = [
    "fig1_optical",
    "fig1_microwave",
    "smfig1_delay",
    "smfig1_detuning",
    "smfig1_coupling",
    "fig4_gain",
    "fig4_detuning",
    "fig2_squash",
    "fig3_effective_cavity",
];

pub fn experiment_cavity(detuning: f64) -> CavityParams {
    let k = hz_to_rad(EXPERIMENT_KAPPA_HZ);
    let kp = hz_to_rad(EXPERIMENT_KAPPA_PRIME_HZ);
    CavityParams::new((k - kp) / 2.0, (k - kp) / 2.0, kp, detuning)
        .expect("experiment cavity")
        .with_drive(EXPERIMENT_DRIVE_W, crate::model::DEFAULT_WAVELENGTH)
}

pub fn experiment_mechanics() -> MechanicsParams {
    let wm = hz_to_rad(EXPERIMENT_OMEGA_M_HZ);
    let mut m = MechanicsParams::new(
        wm,
        hz_to_rad(EXPERIMENT_GAMMA_M_HZ),
        temperature_to_occupancy(EXPERIMENT_BATH_K, wm),
        hz_to_rad(EXPERIMENT_COUPLING_HZ),
    )
    .expect("experiment mechanics");
    m.g0 = Some(hz_to_rad(EXPERIMENT_G0_HZ));
    m
}

/// Transmission loop with the flat 750 ns filter at unit amplitude.
pub fn experiment_loop() -> FeedbackConfig {
    FeedbackConfig::new(
        Port::Transmission,
        0.0,
        EXPERIMENT_ETA,
        GainModel::flat(1.0, EXPERIMENT_DELAY, EXPERIMENT_PHASE_OFFSET),
    )
    .expect("experiment loop")
}

/// Membrane-in-the-middle experiment, loop gain set to 𝒢_fb = 0.9.
pub fn experiment() -> Scenario {
    let cavity = experiment_cavity(hz_to_rad(EXPERIMENT_DETUNING_HZ));
    let feedback = with_normalized_gain(&cavity, &experiment_loop(), EXPERIMENT_OPTIMAL_GAIN)
        .expect("experiment gain");
    Scenario {
        cavity,
        mechanics: experiment_mechanics(),
        feedback,
    }
}

pub fn experiment_without_feedback() -> Scenario {
    Scenario {
        feedback: FeedbackConfig::off(),
        ..experiment()
    }
}

fn fig1_loop(eta: f64, phase_offset: f64) -> Result<FeedbackConfig> {
    FeedbackConfig::new(
        Port::Reflection,
        0.0,
        eta,
        GainModel::flat(0.0, 0.0, phase_offset),
    )
}

/// Optical cavity of the Fig. 1 study, reflection loop, Δ = ω_m, zero gain.
pub fn fig1_optical(eta: f64) -> Result<Scenario> {
    let wm = hz_to_rad(1.48e6);
    Ok(Scenario {
        cavity: CavityParams::new(hz_to_rad(1.17e6), hz_to_rad(0.13e6), 0.0, wm)?,
        mechanics: MechanicsParams::new(wm, hz_to_rad(0.18), 5000.0, 0.1 * wm)?,
        feedback: fig1_loop(eta, PI)?,
    })
}

/// Microwave circuit of the Fig. 1 study, single port.
pub fn fig1_microwave(eta: f64) -> Result<Scenario> {
    let wm = hz_to_rad(10.1e6);
    let k = hz_to_rad(13.5e6);
    let kp = hz_to_rad(50e3);
    Ok(Scenario {
        cavity: CavityParams::new(k - kp, 0.0, kp, wm)?,
        mechanics: MechanicsParams::new(wm, hz_to_rad(16.0), 75.0, 0.05 * wm)?,
        feedback: fig1_loop(eta, 0.0)?,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Curve {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Curve {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PresetBundle {
    pub name: String,
    pub evaluator: Evaluator,
    pub curves: Vec<Curve>,
    pub metadata: serde_json::Value,
}

impl PresetBundle {
    pub fn curve(&self, name: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.name == name)
    }

    /// One CSV per curve plus `metadata.json`; returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| Error::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::new();
        for c in &self.curves {
            let path = dir.join(format!("{}_{}.csv", self.name, c.name));
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
            w.write_record(&c.columns)
                .map_err(|e| csv_error(&path, e))?;
            for r in &c.rows {
                w.write_record(r.iter().map(|v| v.to_string()))
                    .map_err(|e| csv_error(&path, e))?;
            }
            w.flush().map_err(io(&path))?;
            written.push(path);
        }
        let path = dir.join(format!("{}_metadata.json", self.name));
        let text = serde_json::to_string_pretty(&self.metadata).expect("metadata serialises");
        fs::write(&path, text + "\n").map_err(io(&path))?;
        written.push(path);
        Ok(written)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PresetOptions {
    /// Points per swept axis; each preset has its own default.
    pub points: Option<usize>,
    /// Overrides the evaluator pinned by the preset.
    pub evaluator: Option<Evaluator>,
    pub exec: Exec,
}

pub fn figure_preset(name: &str, opts: &PresetOptions) -> Result<PresetBundle> {
    let pts = |default: usize| opts.points.unwrap_or(default).max(2);
    let (evaluator, curves, params) = match name {
        "fig1_optical" => fig1_bundle(fig1_optical, FIG1_OPTICAL_ETA, pts(41), opts)?,
        "fig1_microwave" => fig1_bundle(fig1_microwave, FIG1_MICROWAVE_ETA, pts(41), opts)?,
        "smfig1_delay" | "smfig1_detuning" | "smfig1_coupling" => {
            smfig1_bundle(name, pts(101), opts)?
        }
        "fig4_gain" => fig4_gain(pts(41), opts)?,
        "fig4_detuning" => fig4_detuning(pts(41), opts)?,
        "fig2_squash" => fig2_squash(pts(801))?,
        "fig3_effective_cavity" => fig3_effective_cavity(pts(101))?,
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    let quad = QuadratureConfig::default();
    let metadata = json!({
        "preset": name,
        "evaluator": evaluator,
        "params": params,
        "tolerances": {
            "quadrature_rel_tol": quad.rel_tol,
            "minimize_rel_tol": MinimizeOptions::new(evaluator).tol,
            "nyquist_samples": crate::cooling::REPORT_NYQUIST_SAMPLES,
        },
        "units": "frequencies in Hz (columns ending _hz), rates in scenario params in rad/s",
        "temperature_convention": "T = hbar * omega_m * n / k_B",
        "version": env!("CARGO_PKG_VERSION"),
    });
    Ok(PresetBundle {
        name: name.to_string(),
        evaluator,
        curves,
        metadata,
    })
}

type Built = (Evaluator, Vec<Curve>, serde_json::Value);

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Lowest no-feedback occupancy over the bare detuning.
pub fn no_feedback_minimum(s: &Scenario, evaluator: Evaluator, exec: Exec) -> Result<(f64, f64)> {
    let base = Scenario {
        feedback: FeedbackConfig::off(),
        ..s.clone()
    };
    let wm = s.mechanics.omega_m;
    let mut o = MinimizeOptions::new(evaluator);
    o.exec = exec;
    let r = minimize_occupancy(&base, &[(Variable::Detuning, (0.5 * wm, 3.0 * wm))], &o)?;
    Ok((r.best_params[0], r.best_occupancy))
}

/// Best (gain amplitude, homodyne phase) of a Fig. 1 scenario at Δ = ω_m.
pub fn fig1_optimum(s: &Scenario, opts: &MinimizeOptions) -> Result<super::OptimizationResult> {
    minimize_occupancy(
        s,
        &[
            (Variable::GainAmplitude, FIG1_GAIN_BOUNDS),
            (Variable::HomodynePhase, FIG1_PHASE_BOUNDS),
        ],
        opts,
    )
}

fn fig1_bundle(
    make: fn(f64) -> Result<Scenario>,
    eta_r: f64,
    points: usize,
    opts: &PresetOptions,
) -> Result<Built> {
    let final_eval = opts.evaluator.unwrap_or(Evaluator::Langevin);
    let map_eval = EvalOptions::new(Evaluator::WeakCoupling).with_exec(Exec::Sequential);
    let mut curves = Vec::new();
    let mut summary = Curve::new(
        "summary",
        &[
            "eta",
            "n_no_feedback",
            "n_feedback",
            "gain_amplitude",
            "homodyne_phase",
            "ratio",
        ],
    );
    let mut params = serde_json::Map::new();
    for (label, eta) in [("eta_1", 1.0), ("eta_reduced", eta_r)] {
        let s = make(eta)?;
        params.insert(
            label.into(),
            serde_json::to_value(&s).expect("scenario serialises"),
        );
        let grid: Vec<(f64, f64)> = (0..points)
            .flat_map(|i| (0..points).map(move |j| (i, j)))
            .map(|(i, j)| {
                let a = FIG1_GAIN_BOUNDS.0
                    + (FIG1_GAIN_BOUNDS.1 - FIG1_GAIN_BOUNDS.0) * i as f64 / (points - 1) as f64;
                let f = FIG1_PHASE_BOUNDS.0
                    + (FIG1_PHASE_BOUNDS.1 - FIG1_PHASE_BOUNDS.0) * j as f64 / (points - 1) as f64;
                (a, f)
            })
            .collect();
        let evals = par::map(opts.exec, &grid, |&(a, f)| {
            s.with_all(&[(Variable::GainAmplitude, a), (Variable::HomodynePhase, f)])
                .map(|x| evaluate(&x, &map_eval))
        });
        let mut map = Curve::new(
            &format!("map_{label}"),
            &["gain_amplitude", "homodyne_phase", "n_final", "stable"],
        );
        for (&(a, f), e) in grid.iter().zip(evals) {
            let e = e?;
            map.push(vec![a, f, e.n_final, flag(e.stable)]);
        }
        curves.push(map);

        let mut mo = MinimizeOptions::new(Evaluator::WeakCoupling);
        mo.exec = opts.exec;
        let best = fig1_optimum(&s, &mo)?;
        let at = s.with_all(&[
            (Variable::GainAmplitude, best.best_params[0]),
            (Variable::HomodynePhase, best.best_params[1]),
        ])?;
        let n_fb = evaluate(&at, &EvalOptions::new(final_eval).with_exec(opts.exec)).n_final;
        let (_, n0) = no_feedback_minimum(&s, final_eval, opts.exec)?;
        summary.push(vec![
            eta,
            n0,
            n_fb,
            best.best_params[0],
            best.best_params[1],
            n0 / n_fb,
        ]);
    }
    curves.push(summary);
    Ok((final_eval, curves, serde_json::Value::Object(params)))
}

fn smfig1_bundle(name: &str, points: usize, opts: &PresetOptions) -> Result<Built> {
    let evaluator = opts.evaluator.unwrap_or(Evaluator::WeakCoupling);
    let base = fig1_optical(1.0)?;
    let mut mo = MinimizeOptions::new(Evaluator::WeakCoupling);
    mo.exec = opts.exec;
    let best = fig1_optimum(&base, &mo)?;
    let s = base.with_all(&[
        (Variable::GainAmplitude, best.best_params[0]),
        (Variable::HomodynePhase, best.best_params[1]),
    ])?;
    let wm = s.mechanics.omega_m;
    let (var, range, column, to_col): (Variable, (f64, f64), &str, fn(f64) -> f64) = match name {
        "smfig1_delay" => (Variable::Delay, (0.0, 2.0 * PI / wm), "delay_s", |x| x),
        "smfig1_detuning" => (
            Variable::Detuning,
            (0.25 * wm, 3.0 * wm),
            "detuning_hz",
            rad_to_hz,
        ),
        _ => (
            Variable::Coupling,
            (0.01 * wm, 0.3 * wm),
            "coupling_hz",
            rad_to_hz,
        ),
    };
    let with_fb = sweep(
        &SweepSpec::new(var, range, points, evaluator)?,
        &s,
        opts.exec,
    )?;
    let mut curve = Curve::new(
        name.trim_start_matches("smfig1_"),
        &[column, "n_feedback", "stable", "n_no_feedback"],
    );
    let without = if var == Variable::Delay {
        vec![None; points]
    } else {
        let off = Scenario {
            feedback: s.feedback.with_gain(GainModel::off()),
            ..s.clone()
        };
        sweep(
            &SweepSpec::new(var, range, points, evaluator)?,
            &off,
            opts.exec,
        )?
        .into_iter()
        .map(Some)
        .collect()
    };
    let n_off_fixed = evaluate(
        &Scenario {
            feedback: s.feedback.with_gain(GainModel::off()),
            ..s.clone()
        },
        &EvalOptions::new(evaluator),
    )
    .n_final;
    for (p, o) in with_fb.iter().zip(without) {
        let n_off = o.map(|o| o.eval.n_final).unwrap_or(n_off_fixed);
        curve.push(vec![
            to_col(p.value),
            p.eval.n_final,
            flag(p.eval.stable),
            n_off,
        ]);
    }
    Ok((
        evaluator,
        vec![curve],
        json!({ "scenario": s, "swept": var }),
    ))
}

fn fig4_gain(points: usize, opts: &PresetOptions) -> Result<Built> {
    let evaluator = opts.evaluator.unwrap_or(Evaluator::Langevin);
    let s = experiment();
    let off = experiment_without_feedback();
    let wm = s.mechanics.omega_m;
    let n0 = evaluate(&off, &EvalOptions::new(evaluator).with_exec(opts.exec)).n_final;
    let pinned = sweep(
        &SweepSpec::new(Variable::NormalizedGain, (0.0, 0.999), points, evaluator)?,
        &s,
        opts.exec,
    )?;
    let weak = sweep(
        &SweepSpec::new(
            Variable::NormalizedGain,
            (0.0, 0.999),
            points,
            Evaluator::WeakCoupling,
        )?,
        &s,
        opts.exec,
    )?;
    let mut curve = Curve::new(
        "occupancy",
        &[
            "normalized_gain",
            "n_final",
            "n_weak",
            "temperature_mk",
            "reduction_db",
            "stable",
        ],
    );
    for (p, w) in pinned.iter().zip(&weak) {
        let n = p.eval.n_final;
        curve.push(vec![
            p.value,
            n,
            w.eval.n_final,
            1e3 * occupancy_to_temperature(n, wm),
            reduction_db(n0, n),
            flag(p.eval.stable),
        ]);
    }
    let threshold = sweep(
        &SweepSpec::new(
            Variable::NormalizedGain,
            (0.9, 1.2),
            points,
            Evaluator::WeakCoupling,
        )?,
        &s,
        opts.exec,
    )?;
    let mut grey = Curve::new("stability", &["normalized_gain", "stable", "margin"]);
    for p in &threshold {
        grey.push(vec![p.value, flag(p.eval.stable), p.eval.margin]);
    }
    let meta = json!({
        "scenario": s,
        "n_no_feedback": n0,
        "temperature_no_feedback_k": occupancy_to_temperature(n0, wm),
    });
    Ok((evaluator, vec![curve, grey], meta))
}

fn fig4_detuning(points: usize, opts: &PresetOptions) -> Result<Built> {
    let evaluator = opts.evaluator.unwrap_or(Evaluator::Langevin);
    let s = experiment();
    let wm = s.mechanics.omega_m;
    let range = (hz_to_rad(325e3), hz_to_rad(335e3));
    let swept = sweep(
        &SweepSpec::new(Variable::Detuning, range, points, evaluator)?,
        &s,
        opts.exec,
    )?;
    let mut curve = Curve::new(
        "occupancy",
        &[
            "detuning_hz",
            "normalized_gain",
            "n_final",
            "temperature_mk",
            "stable",
        ],
    );
    for p in &swept {
        let g = effective_cavity(&s.cavity.with_detuning(p.value), &s.feedback)?.gain_norm;
        curve.push(vec![
            rad_to_hz(p.value),
            g,
            p.eval.n_final,
            1e3 * occupancy_to_temperature(p.eval.n_final, wm),
            flag(p.eval.stable),
        ]);
    }
    let fixed_point = feedback::optimal_bare_detuning(&s.cavity, &s.feedback, wm)?;
    let sweep_min = swept
        .iter()
        .filter(|p| p.eval.stable)
        .min_by(|a, b| a.eval.n_final.total_cmp(&b.eval.n_final))
        .map(|p| rad_to_hz(p.value));
    let meta = json!({
        "scenario": s,
        "optimal_detuning_fixed_point_hz": rad_to_hz(fixed_point),
        "optimal_detuning_sweep_hz": sweep_min,
    });
    Ok((evaluator, vec![curve], meta))
}

fn fig2_squash(points: usize) -> Result<Built> {
    let base = experiment();
    let k = base.cavity.kappa();
    let d = base.cavity.detuning;
    let gain = 0.5;
    let plus = with_normalized_gain(&base.cavity, &base.feedback, gain)?;
    let minus = with_normalized_gain(&base.cavity, &base.feedback, -gain)?;
    let mut curve = Curve::new(
        "in_loop_spectrum",
        &["frequency_hz", "s_i_positive", "s_i_negative"],
    );
    for i in 0..points {
        let w = d - 10.0 * k + 20.0 * k * i as f64 / (points - 1) as f64;
        curve.push(vec![
            rad_to_hz(w),
            squash_spectrum(&base.cavity, &plus, w)?,
            squash_spectrum(&base.cavity, &minus, w)?,
        ]);
    }
    Ok((
        Evaluator::WeakCoupling,
        vec![curve],
        json!({ "cavity": base.cavity, "normalized_gain": [gain, -gain] }),
    ))
}

fn fig3_effective_cavity(points: usize) -> Result<Built> {
    let base = experiment();
    let p = &base.cavity;
    let k = p.kappa();
    let mut width = Curve::new(
        "kappa_eff",
        &[
            "normalized_gain",
            "kappa_eff_over_kappa",
            "exact_hwhm_over_kappa",
        ],
    );
    let mut shift = Curve::new(
        "delta_eff",
        &[
            "normalized_gain",
            "delta_shift_hz",
            "tan_form_hz",
            "exact_peak_shift_hz",
        ],
    );
    for i in 0..points {
        let g = 0.99 * i as f64 / (points - 1) as f64;
        let fb = with_normalized_gain(p, &base.feedback, g)?;
        let e = effective_cavity(p, &fb)?;
        let (peak, hwhm) = exact_resonance(p, &fb)?;
        width.push(vec![g, e.kappa_eff / k, hwhm / k]);
        shift.push(vec![
            g,
            rad_to_hz(e.delta_eff - p.detuning),
            rad_to_hz(-k * e.gain_norm * e.phase_t.tan()),
            rad_to_hz(peak - p.detuning),
        ]);
    }
    Ok((
        Evaluator::WeakCoupling,
        vec![width, shift],
        json!({ "cavity": p, "feedback": base.feedback }),
    ))
}
