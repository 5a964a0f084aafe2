use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::bessel::{bessel_j, bessel_j_zeros};
use crate::numeric::quad::{integrate, QuadOptions};
use crate::par::Exec;

/// Taut circular membrane (SI units).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MembraneGeometry {
    pub radius: f64,
    pub thickness: f64,
    pub density: f64,
    pub sound_speed: f64,
}

impl MembraneGeometry {
    pub fn new(radius: f64, thickness: f64, density: f64, sound_speed: f64) -> Result<Self> {
        for (name, v) in [
            ("radius", radius),
            ("thickness", thickness),
            ("density", density),
            ("sound_speed", sound_speed),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(Self {
            radius,
            thickness,
            density,
            sound_speed,
        })
    }

    /// Sound speed from in-plane stress (Pa): `c_s = sqrt(stress / density)`.
    pub fn from_stress(radius: f64, thickness: f64, density: f64, stress: f64) -> Result<Self> {
        if !(stress > 0.0) {
            return Err(Error::invalid("stress", "must be positive"));
        }
        Self::new(radius, thickness, density, (stress / density).sqrt())
    }

    /// Back-solve the sound speed so that the (0,1) mode sits at `omega_01`.
    pub fn from_fundamental(
        radius: f64,
        thickness: f64,
        density: f64,
        omega_01: f64,
    ) -> Result<Self> {
        let alpha = bessel_j_zeros(0, 1)[0];
        Self::new(radius, thickness, density, omega_01 * radius / alpha)
    }

    pub fn physical_mass(&self) -> f64 {
        self.density * self.thickness * std::f64::consts::PI * self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MembraneMode {
    pub n: u32,
    pub j: u32,
    pub alpha: f64,
    /// Eigenfrequency (rad/s).
    pub omega: f64,
    /// `∫_0^1 x J_n(alpha x)^2 dx`; multiply by the physical mass for m_eff.
    pub m_eff_ratio: f64,
}

/// Modes `(n, j)` for `0 <= n < n_max`, `1 <= j <= j_max`, sorted by frequency.
pub fn membrane_modes(
    geom: &MembraneGeometry,
    n_max: u32,
    j_max: u32,
) -> Result<Vec<MembraneMode>> {
    if n_max < 1 || j_max < 1 {
        return Err(Error::invalid("n_max/j_max", "both must be >= 1"));
    }
    let opts = QuadOptions {
        rel_tol: 1e-10,
        exec: Exec::Sequential,
        ..QuadOptions::default()
    };
    let mut modes = Vec::new();
    for n in 0..n_max {
        for (idx, alpha) in bessel_j_zeros(n, j_max as usize).into_iter().enumerate() {
            let ratio = integrate(
                |x| {
                    let j = bessel_j(n, alpha * x);
                    Ok(x * j * j)
                },
                0.0,
                1.0,
                &[],
                opts,
            )?
            .value;
            modes.push(MembraneMode {
                n,
                j: idx as u32 + 1,
                alpha,
                omega: geom.sound_speed / geom.radius * alpha,
                m_eff_ratio: ratio,
            });
        }
    }
    modes.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    Ok(modes)
}
