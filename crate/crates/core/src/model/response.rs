use super::{CavityParams, FeedbackConfig, MechanicsParams, Port, PortGeometry, C64};
use crate::error::{Error, Result};
use crate::units::{C_LIGHT, HBAR};

/// Empty-cavity susceptibility `2 kappa / (kappa + i (Delta - omega))`.
pub fn cavity_susceptibility(p: &CavityParams, omega: f64) -> C64 {
    let k = p.kappa();
    C64::new(2.0 * k, 0.0) / C64::new(k, p.detuning - omega)
}

/// `(theta_Delta, theta_bar_Delta)`: intracavity phase shift from off-resonant
/// driving and the phase of the first-mirror output relative to its input.
pub fn input_phase_shifts(p: &CavityParams) -> (f64, f64) {
    let k = p.kappa();
    let d = p.detuning;
    let theta = (-d / k).atan();
    let theta_bar = (2.0 * d * p.kappa0 / (d * d + k * (p.kappa1 - p.kappa0))).atan();
    (theta, if theta_bar.is_nan() { 0.0 } else { theta_bar })
}

impl PortGeometry {
    pub fn of(p: &CavityParams, port: Port) -> Self {
        let (theta, theta_bar) = input_phase_shifts(p);
        match port {
            Port::Reflection => PortGeometry {
                kappa_fb: p.kappa0,
                theta_fb: theta_bar,
                z: 0.0,
            },
            Port::Transmission => PortGeometry {
                kappa_fb: p.kappa1,
                theta_fb: theta,
                z: 1.0,
            },
        }
    }
}

/// Response of the detected output quadrature to input amplitude fluctuations.
pub fn zeta_out(p: &CavityParams, fb: &FeedbackConfig, omega: f64) -> C64 {
    let geo = PortGeometry::of(p, fb.port);
    let k = p.kappa();
    let a = fb.phi - geo.theta_fb;
    let e = C64::from_polar(1.0, a);
    let pref = (p.kappa0 * geo.kappa_fb).sqrt() / (2.0 * k);
    pref * (cavity_susceptibility(p, omega) * e
        + cavity_susceptibility(p, -omega).conj() * e.conj())
        - (1.0 - geo.z) * a.cos()
}

/// Response of the intracavity quadrature at angle `varphi` to input
/// amplitude modulation.
pub fn zeta_cavity(p: &CavityParams, varphi: f64, omega: f64) -> C64 {
    let (theta, _) = input_phase_shifts(p);
    let e = C64::from_polar(1.0, varphi - theta);
    p.kappa0 / (2.0 * p.kappa())
        * (cavity_susceptibility(p, omega) * e + cavity_susceptibility(p, -omega).conj() * e.conj())
}

/// Mean intracavity photon number from the drive power and the resulting
/// linearised coupling `G = g0 sqrt(2 n_c)`.
pub fn photon_number_and_coupling(p: &CavityParams, m: &MechanicsParams) -> Result<(f64, f64)> {
    let power = p
        .drive_power
        .ok_or_else(|| Error::InsufficientParameters("drive_power is required".into()))?;
    let g0 =
        m.g0.ok_or_else(|| Error::InsufficientParameters("g0 is required".into()))?;
    let omega_l = 2.0 * std::f64::consts::PI * C_LIGHT / p.laser_wavelength;
    let k = p.kappa();
    let n_c = 2.0 * p.kappa0 * power / (HBAR * omega_l * (k * k + p.detuning * p.detuning));
    Ok((n_c, g0 * (2.0 * n_c).sqrt()))
}
