//! Parameter sweeps and bounded minimisation of the final occupancy.

pub mod presets;

use serde::{Deserialize, Serialize};

use crate::cooling::{cooling_report_with_verdict, CoolingReport};
use crate::error::{Error, Result};
use crate::feedback::{self, with_normalized_gain};
use crate::langevin::{phonon_occupancy_detailed, QuadratureConfig};
use crate::model::{CavityParams, FeedbackConfig, GainModel, MechanicsParams};
use crate::par::{self, Exec};
use crate::units::occupancy_to_temperature;

/// One complete parameter set.
#[derive(Clone, Debug, Serialize)]
pub struct Scenario {
    pub cavity: CavityParams,
    pub mechanics: MechanicsParams,
    pub feedback: FeedbackConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    /// Flat gain amplitude, or multiplier of a tabulated filter.
    GainAmplitude,
    HomodynePhase,
    /// Bare detuning (rad/s).
    Detuning,
    /// Flat-gain delay (s).
    Delay,
    /// Linearised coupling G (rad/s).
    Coupling,
    /// 𝒢_fb; rescales the gain amplitude of the transmission loop.
    NormalizedGain,
}

impl Variable {
    pub fn name(self) -> &'static str {
        match self {
            Variable::GainAmplitude => "gain_amplitude",
            Variable::HomodynePhase => "homodyne_phase",
            Variable::Detuning => "detuning",
            Variable::Delay => "delay",
            Variable::Coupling => "coupling",
            Variable::NormalizedGain => "normalized_gain",
        }
    }
}

impl std::str::FromStr for Variable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid("variable", format!("unknown sweep variable `{s}`")))
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.cavity.validate()?;
        self.mechanics.validate()?;
        self.feedback.validate()
    }

    /// Copy with `var` set to `value`.
    pub fn with(&self, var: Variable, value: f64) -> Result<Scenario> {
        let mut s = self.clone();
        match var {
            Variable::GainAmplitude => {
                s.feedback.gain = match &self.feedback.gain {
                    GainModel::FlatDelay {
                        delay,
                        phase_offset,
                        ..
                    } => GainModel::flat(value, *delay, *phase_offset),
                    g @ GainModel::Tabulated(_) => g.scaled(value)?,
                }
            }
            Variable::HomodynePhase => s.feedback.phi = value,
            Variable::Detuning => s.cavity.detuning = value,
            Variable::Delay => match &self.feedback.gain {
                GainModel::FlatDelay {
                    amplitude,
                    phase_offset,
                    ..
                } => s.feedback.gain = GainModel::flat(*amplitude, value, *phase_offset),
                GainModel::Tabulated(_) => {
                    return Err(Error::invalid(
                        "delay",
                        "delay sweeps need a flat gain model",
                    ))
                }
            },
            Variable::Coupling => s.mechanics.coupling = value,
            Variable::NormalizedGain => {
                s.feedback = with_normalized_gain(&self.cavity, &self.feedback, value)?
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn with_all(&self, values: &[(Variable, f64)]) -> Result<Scenario> {
        values
            .iter()
            .try_fold(self.clone(), |s, &(v, x)| s.with(v, x))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    #[default]
    WeakCoupling,
    Langevin,
}

impl std::str::FromStr for Evaluator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak_coupling" | "weak" => Ok(Evaluator::WeakCoupling),
            "langevin" => Ok(Evaluator::Langevin),
            _ => Err(Error::invalid(
                "evaluator",
                format!("unknown evaluator `{s}`"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct EvalOptions {
    pub evaluator: Evaluator,
    pub quadrature: QuadratureConfig,
}

impl EvalOptions {
    pub fn new(evaluator: Evaluator) -> Self {
        Self {
            evaluator,
            quadrature: QuadratureConfig::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.quadrature.exec = exec;
        self
    }
}

/// Result at one parameter point. Unstable or failed points carry an
/// infinite occupancy and a note instead of being dropped.
#[derive(Clone, Debug, Serialize)]
pub struct Evaluation {
    pub n_final: f64,
    pub temperature_final: f64,
    pub stable: bool,
    pub margin: f64,
    pub report: Option<CoolingReport>,
    pub note: Option<String>,
}

impl Evaluation {
    fn failed(note: String) -> Self {
        Evaluation {
            n_final: f64::INFINITY,
            temperature_final: f64::INFINITY,
            stable: false,
            margin: 0.0,
            report: None,
            note: Some(note),
        }
    }
}

pub fn evaluate(s: &Scenario, opts: &EvalOptions) -> Evaluation {
    let verdict = if s.feedback.gain.is_off() {
        Ok(feedback::StabilityVerdict {
            stable: true,
            winding_number: 0,
            margin: 1.0,
        })
    } else {
        feedback::nyquist_stability_with(
            &s.cavity,
            &s.feedback,
            feedback::default_band(&s.cavity, &s.feedback),
            crate::cooling::REPORT_NYQUIST_SAMPLES,
            opts.quadrature.exec,
        )
    };
    let verdict = match verdict {
        Ok(v) => v,
        Err(e) => return Evaluation::failed(e.to_string()),
    };
    if !verdict.stable {
        let mut e = Evaluation::failed(format!(
            "feedback loop unstable (winding {})",
            verdict.winding_number
        ));
        e.margin = verdict.margin;
        return e;
    }
    let report = cooling_report_with_verdict(&s.cavity, &s.mechanics, &s.feedback, true);
    let n = match opts.evaluator {
        Evaluator::WeakCoupling => report
            .as_ref()
            .map(|r| r.n_final)
            .map_err(|e| e.to_string()),
        Evaluator::Langevin => {
            let q = QuadratureConfig {
                check_stability: false,
                ..opts.quadrature
            };
            phonon_occupancy_detailed(&s.cavity, &s.mechanics, &s.feedback, &q)
                .map(|r| r.n)
                .map_err(|e| e.to_string())
        }
    };
    match n {
        Ok(n) if n.is_finite() => Evaluation {
            n_final: n,
            temperature_final: occupancy_to_temperature(n, s.mechanics.omega_m),
            stable: true,
            margin: verdict.margin,
            report: report.ok(),
            note: None,
        },
        Ok(n) => Evaluation::failed(format!("non-finite occupancy {n}")),
        Err(msg) => {
            let mut e = Evaluation::failed(msg);
            e.margin = verdict.margin;
            e.report = report.ok();
            e
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSpec {
    pub variable: Variable,
    pub range: (f64, f64),
    pub points: usize,
    pub evaluator: Evaluator,
}

impl SweepSpec {
    pub fn new(
        variable: Variable,
        range: (f64, f64),
        points: usize,
        evaluator: Evaluator,
    ) -> Result<Self> {
        if !(range.0 < range.1) {
            return Err(Error::invalid("range", "need lo < hi"));
        }
        if points < 2 {
            return Err(Error::invalid("points", "need at least 2 points"));
        }
        Ok(Self {
            variable,
            range,
            points,
            evaluator,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        let (lo, hi) = self.range;
        (0..self.points)
            .map(|i| lo + (hi - lo) * i as f64 / (self.points - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    #[serde(flatten)]
    pub eval: Evaluation,
}

pub fn sweep(spec: &SweepSpec, base: &Scenario, exec: Exec) -> Result<Vec<SweepPoint>> {
    base.validate()?;
    let opts = EvalOptions::new(spec.evaluator).with_exec(Exec::Sequential);
    Ok(par::map(exec, &spec.values(), |&v| {
        let eval = match base.with(spec.variable, v) {
            Ok(s) => evaluate(&s, &opts),
            Err(e) => Evaluation::failed(e.to_string()),
        };
        SweepPoint { value: v, eval }
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct TracePoint {
    pub params: Vec<f64>,
    pub n_final: f64,
    pub stable: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizationResult {
    pub variables: Vec<Variable>,
    pub best_params: Vec<f64>,
    pub best_occupancy: f64,
    pub stability_margin: f64,
    pub trace: Vec<TracePoint>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MinimizeOptions {
    pub eval: EvalOptions,
    /// Coarse grid points per free variable (defaults by dimension when 0).
    pub grid_points: usize,
    /// Relative (to bound width) parameter tolerance of the refinement.
    pub tol: f64,
    pub max_cycles: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl MinimizeOptions {
    pub fn new(evaluator: Evaluator) -> Self {
        Self {
            eval: EvalOptions::new(evaluator),
            grid_points: 0,
            tol: 1e-4,
            max_cycles: 40,
            exec: Exec::default(),
        }
    }
}

/// Coarse scan of the bounded box, then cyclic golden-section refinement.
pub fn minimize_occupancy(
    base: &Scenario,
    free: &[(Variable, (f64, f64))],
    opts: &MinimizeOptions,
) -> Result<OptimizationResult> {
    base.validate()?;
    if free.is_empty() || free.len() > 3 {
        return Err(Error::invalid("free", "between 1 and 3 free variables"));
    }
    for (v, (lo, hi)) in free {
        if !(lo < hi) {
            return Err(Error::invalid(
                "bounds",
                format!("{}: need lo < hi", v.name()),
            ));
        }
    }
    let vars: Vec<Variable> = free.iter().map(|f| f.0).collect();
    let bounds: Vec<(f64, f64)> = free.iter().map(|f| f.1).collect();
    let dim = free.len();
    let per = if opts.grid_points >= 2 {
        opts.grid_points
    } else {
        [0, 41, 15, 7][dim]
    };

    let point_eval = EvalOptions {
        quadrature: QuadratureConfig {
            exec: Exec::Sequential,
            ..opts.eval.quadrature
        },
        ..opts.eval
    };
    let eval_at = |x: &[f64]| -> Evaluation {
        let assign: Vec<(Variable, f64)> = vars.iter().copied().zip(x.iter().copied()).collect();
        match base.with_all(&assign) {
            Ok(s) => evaluate(&s, &point_eval),
            Err(e) => Evaluation::failed(e.to_string()),
        }
    };

    let total = per.pow(dim as u32);
    let grid: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            bounds
                .iter()
                .map(|&(lo, hi)| {
                    let i = idx % per;
                    idx /= per;
                    lo + (hi - lo) * i as f64 / (per - 1) as f64
                })
                .collect()
        })
        .collect();
    let evals = par::map(opts.exec, &grid, |x| eval_at(x));
    let mut trace: Vec<TracePoint> = grid
        .iter()
        .zip(&evals)
        .map(|(x, e)| TracePoint {
            params: x.clone(),
            n_final: e.n_final,
            stable: e.stable,
        })
        .collect();

    let seed = trace
        .iter()
        .filter(|t| t.stable && t.n_final.is_finite())
        .min_by(|a, b| a.n_final.total_cmp(&b.n_final))
        .ok_or(Error::NoStablePoint)?;
    let mut x = seed.params.clone();
    let mut fx = seed.n_final;
    let mut step: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| (hi - lo) / (per - 1) as f64)
        .collect();

    let golden = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..opts.max_cycles {
        let mut moved = 0.0f64;
        for j in 0..dim {
            let (lo_b, hi_b) = bounds[j];
            let tol = opts.tol * (hi_b - lo_b);
            let mut a = (x[j] - step[j]).max(lo_b);
            let mut b = (x[j] + step[j]).min(hi_b);
            let probe = |t: f64, trace: &mut Vec<TracePoint>| -> f64 {
                let mut y = x.clone();
                y[j] = t;
                let e = eval_at(&y);
                trace.push(TracePoint {
                    params: y,
                    n_final: e.n_final,
                    stable: e.stable,
                });
                if e.stable {
                    e.n_final
                } else {
                    f64::INFINITY
                }
            };
            let mut c = b - golden * (b - a);
            let mut d = a + golden * (b - a);
            let mut fc = probe(c, &mut trace);
            let mut fd = probe(d, &mut trace);
            while (b - a) > tol {
                if fc <= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - golden * (b - a);
                    fc = probe(c, &mut trace);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + golden * (b - a);
                    fd = probe(d, &mut trace);
                }
            }
            let (t, ft) = if fc <= fd { (c, fc) } else { (d, fd) };
            if ft < fx {
                moved = moved.max((t - x[j]).abs() / (hi_b - lo_b));
                x[j] = t;
                fx = ft;
            }
            step[j] = (0.5 * step[j]).max(4.0 * tol);
        }
        if moved < opts.tol {
            break;
        }
    }

    let best = eval_at(&x);
    if !best.stable {
        return Err(Error::NoStablePoint);
    }
    Ok(OptimizationResult {
        variables: vars,
        best_params: x,
        best_occupancy: best.n_final,
        stability_margin: best.margin,
        trace,
    })
}
