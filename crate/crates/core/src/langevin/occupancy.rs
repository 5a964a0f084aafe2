use serde::Serialize;

use super::{assemble_and_solve, observable_spectrum, NoiseBasis, Observable};
use crate::error::{Error, Result};
use crate::feedback;
use crate::model::{CavityParams, FeedbackConfig, MechanicsParams, Port};
use crate::numeric::quad::{integrate, integrate_tail, QuadOptions};
use crate::par::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    /// Inner window is `window_factor * (Δ + ω_m)`; tails are mapped beyond it.
    pub window_factor: f64,
    pub max_panels: usize,
    pub check_stability: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            window_factor: 10.0,
            max_panels: 40_000,
            check_stability: true,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OccupancyResult {
    pub n: f64,
    pub error: f64,
    pub omega_eff: f64,
    pub gamma_eff: f64,
    pub panels: usize,
}

/// Mechanical resonance of the coupled system: `(omega_eff, gamma_eff)`.
pub fn mechanical_peak(
    p: &CavityParams,
    m: &MechanicsParams,
    fb: &FeedbackConfig,
) -> Result<(f64, f64)> {
    let inverse = |w: f64| -> Result<num_complex::Complex64> {
        let k = assemble_and_solve(p, m, fb, w)?.k[(2, 6)];
        Ok(m.gamma_m.sqrt() / k)
    };
    let mut w = m.omega_m;
    for _ in 0..100 {
        let next = w + inverse(w)?.im;
        let done = (next - w).abs() < 1e-12 * m.omega_m;
        w = next;
        if done {
            break;
        }
    }
    Ok((w, 2.0 * inverse(w)?.re))
}

pub fn phonon_occupancy(
    p: &CavityParams,
    m: &MechanicsParams,
    fb: &FeedbackConfig,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    phonon_occupancy_detailed(p, m, fb, cfg).map(|r| r.n)
}

/// `n = (1/2π) ∫ S_{b†b}(ω) dω`.
pub fn phonon_occupancy_detailed(
    p: &CavityParams,
    m: &MechanicsParams,
    fb: &FeedbackConfig,
    cfg: &QuadratureConfig,
) -> Result<OccupancyResult> {
    if cfg.check_stability && !fb.gain.is_off() {
        let v =
            feedback::nyquist_stability_with(p, fb, feedback::default_band(p, fb), 4000, cfg.exec)?;
        if !v.stable {
            return Err(Error::FeedbackUnstable {
                winding: v.winding_number,
            });
        }
    }
    let (omega_eff, gamma_eff) = mechanical_peak(p, m, fb)?;
    if !(gamma_eff > 0.0) {
        return Err(Error::OptomechanicallyUnstable {
            gamma_opt: gamma_eff - m.gamma_m,
            neg_gamma_m: -m.gamma_m,
        });
    }

    let basis = NoiseBasis::new(m.n_th);
    let f = |w: f64| -> Result<f64> {
        let a = assemble_and_solve(p, m, fb, w)?;
        let b = assemble_and_solve(p, m, fb, -w)?;
        Ok(observable_spectrum(&a, &b, &basis, Observable::BDag))
    };

    let mut centres = vec![(omega_eff, gamma_eff), (p.detuning, p.kappa())];
    if fb.port == Port::Transmission && !fb.gain.is_off() {
        if let Ok(e) = feedback::effective_cavity(p, fb) {
            if e.kappa_eff > 0.0 {
                centres.push((e.delta_eff, e.kappa_eff));
            }
        }
    }
    let window = cfg.window_factor * (p.detuning.abs() + m.omega_m);
    let mut breaks = Vec::new();
    for (c, width) in centres {
        for s in [-1.0, 1.0] {
            for mult in [0.0, 0.5, 2.0, 6.0, 20.0, 60.0, 200.0, 600.0] {
                for d in [-1.0, 1.0] {
                    let x = s * c + d * mult * width;
                    if x.abs() < window {
                        breaks.push(x);
                    }
                }
            }
        }
    }
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: cfg.rel_tol,
        max_panels: cfg.max_panels,
        exec: cfg.exec,
    };
    let core = integrate(f, -window, window, &breaks, opts)?;
    let tail_opts = QuadOptions {
        rel_tol: cfg.rel_tol.max(1e-8),
        ..opts
    };
    let hi = integrate_tail(f, window, false, tail_opts)?;
    let lo = integrate_tail(f, -window, true, tail_opts)?;
    let two_pi = std::f64::consts::TAU;
    Ok(OccupancyResult {
        n: (core.value + hi.value + lo.value) / two_pi,
        error: (core.error + hi.error + lo.error) / two_pi,
        omega_eff,
        gamma_eff,
        panels: core.panels + hi.panels + lo.panels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooling::{occupancy_weak_coupling, scattering_rates};
    use crate::units::hz_to_rad;

    fn setup(g: f64) -> (CavityParams, MechanicsParams) {
        let k = hz_to_rad(21.5e3);
        let kp = hz_to_rad(1.35e3);
        let wm = hz_to_rad(343.13e3);
        let p = CavityParams::new((k - kp) / 2.0, (k - kp) / 2.0, kp, wm).unwrap();
        (
            p,
            MechanicsParams::new(wm, hz_to_rad(1.18), 5e4, g).unwrap(),
        )
    }

    #[test]
    fn thermal_fixed_point() {
        let (p, m) = setup(0.0);
        let n =
            phonon_occupancy(&p, &m, &FeedbackConfig::off(), &QuadratureConfig::default()).unwrap();
        assert!((n / m.n_th - 1.0).abs() < 1e-6, "{n}");
        let (w, g) = mechanical_peak(&p, &m, &FeedbackConfig::off()).unwrap();
        assert!((w - m.omega_m).abs() < 1e-9 * w && (g / m.gamma_m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resolved_sideband_strong_coupling_correction() {
        // at Δ = ω_m ≫ κ with n_th ≫ 1 the exact result exceeds the weak-coupling
        // one by the factor 1 + (G/κ)²
        let (p, m) = setup(hz_to_rad(343.13e3) / 100.0);
        let fb = FeedbackConfig::off();
        let n = phonon_occupancy(&p, &m, &fb, &QuadratureConfig::default()).unwrap();
        let w = occupancy_weak_coupling(&m, &scattering_rates(&p, &m, &fb).unwrap())
            .unwrap()
            .n_final;
        let factor = 1.0 + (m.coupling / p.kappa()).powi(2);
        assert!(
            (n / (w * factor) - 1.0).abs() < 2e-3,
            "{n} vs {w} x {factor}"
        );
    }
}
