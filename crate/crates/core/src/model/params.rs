use serde::Serialize;

use super::{TransferCurve, C64};
use crate::error::{Error, Result};

/// Optical cavity: three decay channels and the drive detuning (all rad/s).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CavityParams {
    /// Input mirror, the port the feedback actuates.
    pub kappa0: f64,
    pub kappa1: f64,
    /// Internal loss.
    pub kappa_prime: f64,
    pub detuning: f64,
    /// Input power of the cooling beam (W).
    pub drive_power: Option<f64>,
    /// Laser wavelength (m).
    pub laser_wavelength: f64,
}

pub const DEFAULT_WAVELENGTH: f64 = 1064e-9;

impl CavityParams {
    pub fn new(kappa0: f64, kappa1: f64, kappa_prime: f64, detuning: f64) -> Result<Self> {
        let p = Self {
            kappa0,
            kappa1,
            kappa_prime,
            detuning,
            drive_power: None,
            laser_wavelength: DEFAULT_WAVELENGTH,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa0", self.kappa0),
            ("kappa1", self.kappa1),
            ("kappa_prime", self.kappa_prime),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        if !(self.kappa() > 0.0) {
            return Err(Error::invalid("kappa", "total decay rate must be positive"));
        }
        if !self.detuning.is_finite() {
            return Err(Error::invalid("detuning", "must be finite"));
        }
        if let Some(pw) = self.drive_power {
            if !(pw >= 0.0) || !pw.is_finite() {
                return Err(Error::invalid(
                    "drive_power",
                    format!("must be >= 0, got {pw}"),
                ));
            }
        }
        if !(self.laser_wavelength > 0.0) {
            return Err(Error::invalid("laser_wavelength", "must be positive"));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa0 + self.kappa1 + self.kappa_prime
    }

    pub fn with_detuning(&self, detuning: f64) -> Self {
        Self {
            detuning,
            ..self.clone()
        }
    }

    pub fn with_drive(mut self, power: f64, wavelength: f64) -> Self {
        self.drive_power = Some(power);
        self.laser_wavelength = wavelength;
        self
    }
}

/// Mechanical mode and its linearised coupling (rates in rad/s).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MechanicsParams {
    pub omega_m: f64,
    pub gamma_m: f64,
    pub n_th: f64,
    /// Single-photon coupling, needed only to derive `coupling` from power.
    pub g0: Option<f64>,
    /// Linearised coupling G.
    pub coupling: f64,
}

impl MechanicsParams {
    pub fn new(omega_m: f64, gamma_m: f64, n_th: f64, coupling: f64) -> Result<Self> {
        let m = Self {
            omega_m,
            gamma_m,
            n_th,
            g0: None,
            coupling,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_m > 0.0) || !self.omega_m.is_finite() {
            return Err(Error::invalid("omega_m", "must be positive"));
        }
        if !(self.gamma_m > 0.0) || !self.gamma_m.is_finite() {
            return Err(Error::invalid("gamma_m", "must be positive"));
        }
        if !(self.n_th >= 0.0) || !self.n_th.is_finite() {
            return Err(Error::invalid("n_th", "must be >= 0"));
        }
        if !(self.coupling >= 0.0) || !self.coupling.is_finite() {
            return Err(Error::invalid("coupling", "must be >= 0"));
        }
        Ok(())
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        Self {
            coupling,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Reflection,
    Transmission,
}

/// `(kappa_fb, theta_fb, z)` selected by the detected port.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PortGeometry {
    pub kappa_fb: f64,
    pub theta_fb: f64,
    pub z: f64,
}

/// Electronic feedback transfer function `g_fb(omega)`.
#[derive(Clone, Debug, Serialize)]
pub enum GainModel {
    /// `amplitude * exp(i (omega * delay + sign(omega) * phase_offset))`.
    ///
    /// The offset is applied as an odd function of frequency so that
    /// `g(-w) = g(w)*` holds for any offset; for 0 or pi it is the plain
    /// constant phase.
    FlatDelay {
        amplitude: f64,
        delay: f64,
        phase_offset: f64,
    },
    Tabulated(TransferCurve),
}

impl GainModel {
    pub fn off() -> Self {
        GainModel::FlatDelay {
            amplitude: 0.0,
            delay: 0.0,
            phase_offset: 0.0,
        }
    }

    pub fn flat(amplitude: f64, delay: f64, phase_offset: f64) -> Self {
        GainModel::FlatDelay {
            amplitude,
            delay,
            phase_offset,
        }
    }

    /// Tabulated gain from a one-sided curve; negative frequencies are
    /// derived by conjugate reflection.
    pub fn tabulated(curve: TransferCurve) -> Result<Self> {
        if !curve.is_one_sided() {
            return Err(Error::invalid(
                "gain",
                "tabulated gain must be stored one-sided (positive frequencies only)",
            ));
        }
        Ok(GainModel::Tabulated(curve))
    }

    pub fn eval(&self, w: f64) -> Result<C64> {
        match self {
            GainModel::FlatDelay {
                amplitude,
                delay,
                phase_offset,
            } => {
                if *amplitude == 0.0 {
                    return Ok(C64::new(0.0, 0.0));
                }
                if w == 0.0 {
                    return Ok(C64::new(amplitude * phase_offset.cos(), 0.0));
                }
                let ph = w * delay + w.signum() * phase_offset;
                Ok(C64::from_polar(*amplitude, ph))
            }
            GainModel::Tabulated(c) => c.eval(w),
        }
    }

    pub fn is_off(&self) -> bool {
        matches!(self, GainModel::FlatDelay { amplitude, .. } if *amplitude == 0.0)
    }

    /// Same filter shape with the overall amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Ok(match self {
            GainModel::FlatDelay {
                amplitude,
                delay,
                phase_offset,
            } => GainModel::FlatDelay {
                amplitude: amplitude * factor,
                delay: *delay,
                phase_offset: *phase_offset,
            },
            GainModel::Tabulated(c) => {
                if factor == 0.0 {
                    return Ok(GainModel::off());
                }
                let samples = c.samples().map(|(w, v)| (w, v * factor)).collect();
                GainModel::Tabulated(TransferCurve::new(samples)?)
            }
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FeedbackConfig {
    pub port: Port,
    /// Homodyne phase (rad); 0 detects the amplitude quadrature.
    pub phi: f64,
    /// Detection efficiency.
    pub eta: f64,
    pub gain: GainModel,
}

impl FeedbackConfig {
    pub fn new(port: Port, phi: f64, eta: f64, gain: GainModel) -> Result<Self> {
        let fb = Self {
            port,
            phi,
            eta,
            gain,
        };
        fb.validate()?;
        Ok(fb)
    }

    /// Feedback disabled (zero gain), transmission detection, unit efficiency.
    pub fn off() -> Self {
        Self {
            port: Port::Transmission,
            phi: 0.0,
            eta: 1.0,
            gain: GainModel::off(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid(
                "eta",
                format!("must lie in [0, 1], got {}", self.eta),
            ));
        }
        if !self.phi.is_finite() {
            return Err(Error::invalid("phi", "must be finite"));
        }
        Ok(())
    }

    pub fn with_gain(&self, gain: GainModel) -> Self {
        Self {
            gain,
            ..self.clone()
        }
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        Self {
            eta,
            ..self.clone()
        }
    }

    pub fn with_phi(&self, phi: f64) -> Self {
        Self {
            phi,
            ..self.clone()
        }
    }
}
