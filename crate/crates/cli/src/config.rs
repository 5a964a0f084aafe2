//! JSON run configuration. Frequencies are in Hz here and converted to rad/s
//! when the scenario is built.

use std::path::{Path, PathBuf};

use loopcool::ingest::{decompose_electronic_filter, parse_bode};
use loopcool::model::{
    CavityParams, FeedbackConfig, GainModel, MechanicsParams, Port, DEFAULT_WAVELENGTH,
};
use loopcool::optimize::presets as p;
use loopcool::optimize::{Evaluator, Scenario};
use loopcool::units::{hz_to_rad, temperature_to_occupancy};
use loopcool::Error;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub cavity: CavitySection,
    pub mechanics: MechanicsSection,
    pub feedback: FeedbackSection,
    pub evaluator: EvaluatorSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavitySection {
    pub kappa0_hz: f64,
    pub kappa1_hz: f64,
    pub kappa_prime_hz: f64,
    pub detuning_hz: f64,
    pub drive_power_w: Option<f64>,
    pub wavelength_m: f64,
}

impl Default for CavitySection {
    fn default() -> Self {
        let k0 = (p::EXPERIMENT_KAPPA_HZ - p::EXPERIMENT_KAPPA_PRIME_HZ) / 2.0;
        Self {
            kappa0_hz: k0,
            kappa1_hz: k0,
            kappa_prime_hz: p::EXPERIMENT_KAPPA_PRIME_HZ,
            detuning_hz: p::EXPERIMENT_DETUNING_HZ,
            drive_power_w: Some(p::EXPERIMENT_DRIVE_W),
            wavelength_m: DEFAULT_WAVELENGTH,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MechanicsSection {
    pub omega_m_hz: f64,
    pub gamma_m_hz: f64,
    /// Bath temperature; ignored when `n_th` is given.
    pub bath_temperature_k: f64,
    pub n_th: Option<f64>,
    pub coupling_hz: f64,
    pub g0_hz: Option<f64>,
}

impl Default for MechanicsSection {
    fn default() -> Self {
        Self {
            omega_m_hz: p::EXPERIMENT_OMEGA_M_HZ,
            gamma_m_hz: p::EXPERIMENT_GAMMA_M_HZ,
            bath_temperature_k: p::EXPERIMENT_BATH_K,
            n_th: None,
            coupling_hz: p::EXPERIMENT_COUPLING_HZ,
            g0_hz: Some(p::EXPERIMENT_G0_HZ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackSection {
    pub enabled: bool,
    pub port: Port,
    pub phi_rad: f64,
    pub eta: f64,
    /// Flat filter amplitude; replaced when `normalized_gain` is set.
    pub amplitude: f64,
    pub normalized_gain: Option<f64>,
    pub delay_s: f64,
    pub phase_offset_rad: f64,
    /// Measured open-loop Bode trace; when set, the filter is decomposed from
    /// it and `eta` is forced to 1.
    pub open_loop_csv: Option<PathBuf>,
}

impl Default for FeedbackSection {
    fn default() -> Self {
        Self {
            enabled: false,
            port: Port::Transmission,
            phi_rad: 0.0,
            eta: p::EXPERIMENT_ETA,
            amplitude: 1.0,
            normalized_gain: Some(p::EXPERIMENT_OPTIMAL_GAIN),
            delay_s: p::EXPERIMENT_DELAY,
            phase_offset_rad: p::EXPERIMENT_PHASE_OFFSET,
            open_loop_csv: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluatorSection {
    pub kind: Evaluator,
    pub rel_tol: f64,
    pub points: usize,
    pub band_hz: Option<(f64, f64)>,
}

impl Default for EvaluatorSection {
    fn default() -> Self {
        Self {
            kind: Evaluator::WeakCoupling,
            rel_tol: 1e-9,
            points: 201,
            band_hz: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<(), Error> {
        let e = &self.evaluator;
        if !(e.rel_tol > 0.0 && e.rel_tol < 1.0) {
            return Err(Error::Config("evaluator.rel_tol must lie in (0, 1)".into()));
        }
        if e.points < 2 {
            return Err(Error::Config("evaluator.points must be at least 2".into()));
        }
        if let Some((lo, hi)) = e.band_hz {
            if !(lo < hi) {
                return Err(Error::Config("evaluator.band_hz needs lo < hi".into()));
            }
        }
        self.scenario().map(|_| ())
    }

    pub fn scenario(&self) -> Result<Scenario, Error> {
        let c = &self.cavity;
        let mut cavity = CavityParams::new(
            hz_to_rad(c.kappa0_hz),
            hz_to_rad(c.kappa1_hz),
            hz_to_rad(c.kappa_prime_hz),
            hz_to_rad(c.detuning_hz),
        )?;
        cavity.laser_wavelength = c.wavelength_m;
        cavity.drive_power = c.drive_power_w;
        cavity.validate()?;

        let m = &self.mechanics;
        let omega_m = hz_to_rad(m.omega_m_hz);
        let n_th = m
            .n_th
            .unwrap_or_else(|| temperature_to_occupancy(m.bath_temperature_k, omega_m));
        let mut mechanics = MechanicsParams::new(
            omega_m,
            hz_to_rad(m.gamma_m_hz),
            n_th,
            hz_to_rad(m.coupling_hz),
        )?;
        mechanics.g0 = m.g0_hz.map(hz_to_rad);

        let f = &self.feedback;
        let feedback = if !f.enabled {
            FeedbackConfig::off()
        } else if let Some(path) = &f.open_loop_csv {
            let trace = parse_bode(path)?;
            let d = decompose_electronic_filter(&trace, &cavity, f.port)?;
            let fb = FeedbackConfig::new(f.port, f.phi_rad, 1.0, d.gain)?;
            match f.normalized_gain {
                Some(g) => loopcool::feedback::with_normalized_gain(&cavity, &fb, g)?,
                None => fb,
            }
        } else {
            let fb = FeedbackConfig::new(
                f.port,
                f.phi_rad,
                f.eta,
                GainModel::flat(f.amplitude, f.delay_s, f.phase_offset_rad),
            )?;
            match f.normalized_gain {
                Some(g) => loopcool::feedback::with_normalized_gain(&cavity, &fb, g)?,
                None => fb,
            }
        };
        Ok(Scenario {
            cavity,
            mechanics,
            feedback,
        })
    }

    /// Config after defaults, alongside the derived rad/s scenario.
    pub fn resolved(&self) -> serde_json::Value {
        serde_json::json!({
            "config_hz": self,
            "scenario_rad_s": self.scenario().ok(),
        })
    }
}
