//! Weak-coupling scattering rates, occupancies and the high-temperature
//! limits of the cooling chain.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feedback::{self, loop_denominator, EffectiveCavity};
use crate::model::{
    cavity_susceptibility, input_phase_shifts, zeta_cavity, CavityParams, FeedbackConfig,
    MechanicsParams, Port, PortGeometry, C64,
};
use crate::units::occupancy_to_temperature;

/// Advisory bound for the weak-coupling rates: G ≤ ω_m / 20.
pub const WEAK_COUPLING_RATIO: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatePair {
    pub a_plus: f64,
    pub a_minus: f64,
    pub gamma_opt: f64,
}

impl RatePair {
    pub fn new(a_plus: f64, a_minus: f64) -> Self {
        Self {
            a_plus,
            a_minus,
            gamma_opt: a_minus - a_plus,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Occupancy {
    pub n_backaction: f64,
    pub n_final: f64,
    pub temperature_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoolingReport {
    pub rates: RatePair,
    pub n_backaction: f64,
    pub n_final: f64,
    /// Single-pole values; `None` for the reflection loop.
    pub kappa_eff: Option<f64>,
    pub delta_eff: Option<f64>,
    pub gain_norm: Option<f64>,
    pub stable: bool,
    pub temperature_final: f64,
    pub weak_coupling_ok: bool,
}

pub fn weak_coupling_ok(m: &MechanicsParams) -> bool {
    m.coupling <= m.omega_m / WEAK_COUPLING_RATIO
}

/// φ_fb: detected quadrature angle referred to the cavity output.
pub fn output_phase(p: &CavityParams, fb: &FeedbackConfig) -> f64 {
    match fb.port {
        Port::Reflection => {
            let (theta, theta_bar) = input_phase_shifts(p);
            fb.phi + theta - theta_bar
        }
        Port::Transmission => fb.phi,
    }
}

/// Λ(ω) = 2 ζ_c(0, ω) g(ω) / (1 - L(ω)).
pub fn feedback_lambda(p: &CavityParams, fb: &FeedbackConfig, omega: f64) -> Result<C64> {
    if fb.gain.is_off() {
        return Ok(C64::new(0.0, 0.0));
    }
    let d = loop_denominator(p, fb, omega)?;
    Ok(2.0 * zeta_cavity(p, 0.0, omega) * fb.gain.eval(omega)? / d)
}

/// Spectrum of the intracavity amplitude quadrature, S_X(ω).
pub fn cavity_quadrature_spectrum(
    p: &CavityParams,
    fb: &FeedbackConfig,
    omega: f64,
) -> Result<f64> {
    let k = p.kappa();
    let geo = PortGeometry::of(p, fb.port);
    let lam = feedback_lambda(p, fb, omega)?;
    let chi = cavity_susceptibility(p, omega);
    let coherent = chi
        + (fb.eta * geo.kappa_fb / p.kappa0).sqrt()
            * lam.conj()
            * C64::from_polar(1.0, -output_phase(p, fb));
    let extra = (k - fb.eta * geo.kappa_fb) / p.kappa0 * lam.norm_sqr();
    Ok((coherent.norm_sqr() + extra) / (2.0 * k))
}

/// A± = G² S_X(∓ω_m).
pub fn scattering_rates(
    p: &CavityParams,
    m: &MechanicsParams,
    fb: &FeedbackConfig,
) -> Result<RatePair> {
    let g2 = m.coupling * m.coupling;
    Ok(RatePair::new(
        g2 * cavity_quadrature_spectrum(p, fb, -m.omega_m)?,
        g2 * cavity_quadrature_spectrum(p, fb, m.omega_m)?,
    ))
}

/// Rates from the compact single-port, unit-efficiency expression
/// `G²/2κ |χ(∓ω_m) + [Λ(∓ω_m) e^{iφ_fb}]*|²`.
pub fn compact_rates(
    p: &CavityParams,
    m: &MechanicsParams,
    fb: &FeedbackConfig,
) -> Result<RatePair> {
    let unit = fb.with_eta(1.0);
    let phase = C64::from_polar(1.0, output_phase(p, fb));
    let rate = |w: f64| -> Result<f64> {
        let lam = feedback_lambda(p, &unit, w)?;
        let s = cavity_susceptibility(p, w) + (lam * phase).conj();
        Ok(m.coupling * m.coupling * s.norm_sqr() / (2.0 * p.kappa()))
    };
    Ok(RatePair::new(rate(-m.omega_m)?, rate(m.omega_m)?))
}

/// Backaction-limited and final occupancy from the rates.
pub fn occupancy_weak_coupling(m: &MechanicsParams, rates: &RatePair) -> Result<Occupancy> {
    let g = rates.gamma_opt;
    if g <= -m.gamma_m {
        return Err(Error::OptomechanicallyUnstable {
            gamma_opt: g,
            neg_gamma_m: -m.gamma_m,
        });
    }
    let n_backaction = if g > 0.0 {
        rates.a_plus / g
    } else {
        f64::INFINITY
    };
    let n_final = (m.gamma_m * m.n_th + rates.a_plus) / (m.gamma_m + g);
    Ok(Occupancy {
        n_backaction,
        n_final,
        temperature_final: occupancy_to_temperature(n_final, m.omega_m),
    })
}

/// Number of Nyquist samples used for the stability verdict in reports.
pub const REPORT_NYQUIST_SAMPLES: usize = 4000;

/// Full weak-coupling report including the loop stability verdict.
pub fn cooling_report(
    p: &CavityParams,
    m: &MechanicsParams,
    fb: &FeedbackConfig,
) -> Result<CoolingReport> {
    let verdict =
        feedback::nyquist_stability(p, fb, feedback::default_band(p, fb), REPORT_NYQUIST_SAMPLES)?;
    cooling_report_with_verdict(p, m, fb, verdict.stable)
}

/// As [`cooling_report`] with the loop verdict supplied by the caller.
pub fn cooling_report_with_verdict(
    p: &CavityParams,
    m: &MechanicsParams,
    fb: &FeedbackConfig,
    stable: bool,
) -> Result<CoolingReport> {
    let eff = match fb.port {
        Port::Transmission => Some(feedback::effective_cavity(p, fb)?),
        Port::Reflection => None,
    };
    let rates = scattering_rates(p, m, fb)?;
    let occ = occupancy_weak_coupling(m, &rates)?;
    Ok(CoolingReport {
        rates,
        n_backaction: occ.n_backaction,
        n_final: occ.n_final,
        kappa_eff: eff.as_ref().map(|e| e.kappa_eff),
        delta_eff: eff.as_ref().map(|e| e.delta_eff),
        gain_norm: eff.as_ref().map(|e| e.gain_norm),
        stable,
        temperature_final: occ.temperature_final,
        weak_coupling_ok: weak_coupling_ok(m),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HighTemperatureReport {
    pub rho: f64,
    pub gamma_opt: f64,
    pub n_eff: f64,
    pub n_final: f64,
    /// Δ_eff - ω_m; the formulas assume this is small.
    pub detuning_mismatch: f64,
}

/// High-temperature, resolved-sideband limit of the cooling chain.
pub fn high_temperature_report(
    p: &CavityParams,
    m: &MechanicsParams,
    eff: &EffectiveCavity,
    eta: f64,
    kappa1: f64,
) -> Result<HighTemperatureReport> {
    let ke = eff.kappa_eff;
    if !(ke > 0.0) {
        return Err(Error::NonPositiveLinewidth(ke));
    }
    if !(eta > 0.0 && kappa1 > 0.0) {
        return Err(Error::invalid("eta/kappa1", "both must be positive"));
    }
    let k = p.kappa();
    let g2 = m.coupling * m.coupling;
    let dd = p.detuning - eff.delta_eff;
    let rho = g2 * ((k - ke).powi(2) + dd * dd) / (2.0 * eta * kappa1 * ke * ke);
    let gamma_opt = 2.0 * g2 / ke;
    let n_eff = m.n_th + rho / m.gamma_m;
    Ok(HighTemperatureReport {
        rho,
        gamma_opt,
        n_eff,
        n_final: n_eff * m.gamma_m / gamma_opt,
        detuning_mismatch: eff.delta_eff - m.omega_m,
    })
}

/// Excess heating rate inferred from measured occupancies.
pub fn rho_from_measured(
    n_final: f64,
    n_sc: f64,
    n_th: f64,
    kappa: f64,
    kappa_eff: f64,
    gamma_m: f64,
) -> Result<f64> {
    for (name, v) in [
        ("n_final", n_final),
        ("n_sc", n_sc),
        ("n_th", n_th),
        ("kappa", kappa),
        ("kappa_eff", kappa_eff),
        ("gamma_m", gamma_m),
    ] {
        if !(v > 0.0) {
            return Err(Error::invalid(name, "must be positive"));
        }
    }
    let x = kappa / kappa_eff * n_final / n_sc - 1.0;
    if x < 0.0 {
        return Err(Error::InconsistentMeasurement(format!(
            "kappa/kappa_eff * n/n_SC = {:.6} < 1 implies negative excess heating",
            x + 1.0
        )));
    }
    Ok(gamma_m * n_th * x)
}

/// Occupancy predicted from the sideband-cooling value and the feedback-reshaped cavity.
pub fn occupancy_vs_sideband_cooling(
    n_sc: f64,
    kappa: f64,
    kappa_eff: f64,
    delta_mismatch: f64,
    eta: f64,
    kappa1: f64,
) -> Result<f64> {
    if !(kappa_eff > 0.0) {
        return Err(Error::NonPositiveLinewidth(kappa_eff));
    }
    Ok(n_sc * kappa_eff / kappa
        + ((kappa - kappa_eff).powi(2) + delta_mismatch * delta_mismatch)
            / (4.0 * eta * kappa1 * kappa_eff))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinewidthOptimum {
    pub kappa_eff_opt: f64,
    pub n_min: f64,
}

pub fn optimal_linewidth_and_min(n_sc: f64, kappa: f64, eta: f64, kappa1: f64) -> LinewidthOptimum {
    let x = 4.0 * n_sc * eta * kappa1 / kappa;
    LinewidthOptimum {
        kappa_eff_opt: kappa * (1.0 / (x + 1.0)).sqrt(),
        n_min: 2.0 * n_sc / (1.0 + (1.0 + x).sqrt()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GainModel;
    use crate::units::{hz_to_rad, temperature_to_occupancy};

    fn resolved() -> (CavityParams, MechanicsParams) {
        let k = hz_to_rad(21.5e3);
        let kp = hz_to_rad(1.35e3);
        let wm = hz_to_rad(343.13e3);
        let p = CavityParams::new((k - kp) / 2.0, (k - kp) / 2.0, kp, wm).unwrap();
        let m = MechanicsParams::new(
            wm,
            hz_to_rad(1.18),
            temperature_to_occupancy(300.0, wm),
            hz_to_rad(1600.0),
        )
        .unwrap();
        (p, m)
    }

    #[test]
    fn no_feedback_spectrum_is_lorentzian() {
        let (p, _) = resolved();
        let fb = FeedbackConfig::off();
        for w in [-3e6, -1e5, 0.0, 2.1e6] {
            let s = cavity_quadrature_spectrum(&p, &fb, w).unwrap();
            let oracle = cavity_susceptibility(&p, w).norm_sqr() / (2.0 * p.kappa());
            assert!((s / oracle - 1.0).abs() < 1e-14);
        }
        assert_eq!(feedback_lambda(&p, &fb, 1.0).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn backaction_limit_resolved_sideband() {
        let (p, m) = resolved();
        let r = scattering_rates(&p, &m, &FeedbackConfig::off()).unwrap();
        let o = occupancy_weak_coupling(&m, &r).unwrap();
        let k = p.kappa();
        // exact Lorentzian ratio: n0 = κ²/(4ω_m²)
        assert!((o.n_backaction / (k * k / (4.0 * m.omega_m * m.omega_m)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn occupancy_limits() {
        let (_, m) = resolved();
        let o = occupancy_weak_coupling(&m, &RatePair::new(3.0, 3.0)).unwrap();
        assert!((o.n_final / (m.n_th + 3.0 / m.gamma_m) - 1.0).abs() < 1e-12);
        let o = occupancy_weak_coupling(&m, &RatePair::new(0.0, 50.0)).unwrap();
        assert_eq!(o.n_backaction, 0.0);
        assert!((o.n_final - m.gamma_m * m.n_th / (m.gamma_m + 50.0)).abs() < 1e-6);
        assert!(matches!(
            occupancy_weak_coupling(&m, &RatePair::new(100.0, 0.0)),
            Err(Error::OptomechanicallyUnstable { .. })
        ));
    }

    #[test]
    fn zero_gamma_opt_keeps_thermal() {
        let (_, m) = resolved();
        let o = occupancy_weak_coupling(&m, &RatePair::new(0.0, 0.0)).unwrap();
        assert_eq!(o.n_final, m.n_th);
    }

    #[test]
    fn lambda_near_detuning_matches_pole_form() {
        let (mut p, _) = resolved();
        p.detuning = hz_to_rad(330e3);
        let fb = FeedbackConfig::new(
            Port::Transmission,
            0.0,
            1e-3,
            GainModel::flat(1.0, 750e-9, -3.6478795204733436),
        )
        .unwrap();
        let fb = feedback::with_normalized_gain(&p, &fb, 0.5).unwrap();
        let (theta, _) = input_phase_shifts(&p);
        let k = p.kappa();
        for off in [-1.0, 0.0, 0.7] {
            let w = p.detuning + off * k;
            let exact = feedback_lambda(&p, &fb, w).unwrap();
            let approx = p.kappa0 / k
                * fb.gain.eval(w).unwrap()
                * feedback::effective_susceptibility(&p, &fb, w).unwrap()
                * C64::from_polar(1.0, -theta);
            assert!(
                (exact - approx).norm() / approx.norm() < 0.1,
                "{exact} {approx}"
            );
            let wn = -w;
            let exact = feedback_lambda(&p, &fb, wn).unwrap();
            let approx = p.kappa0 / k
                * fb.gain.eval(wn).unwrap()
                * feedback::effective_susceptibility(&p, &fb, w)
                    .unwrap()
                    .conj()
                * C64::from_polar(1.0, theta);
            assert!(
                (exact - approx).norm() / approx.norm() < 0.1,
                "{exact} {approx}"
            );
        }
    }

    #[test]
    fn rho_examples() {
        assert_eq!(
            rho_from_measured(5.0, 5.0, 1e7, 3.0, 3.0, 1.0).unwrap(),
            0.0
        );
        let g = hz_to_rad(1.18);
        let rho = rho_from_measured(0.175, 1.0, 1.82e7, 10.0, 1.0, g).unwrap();
        assert!((rho / g / 1.365e7 - 1.0).abs() < 1e-3);
        assert!(matches!(
            rho_from_measured(0.05, 1.0, 1e7, 10.0, 1.0, 1.0),
            Err(Error::InconsistentMeasurement(_))
        ));
    }

    #[test]
    fn sideband_occupancy_anchor() {
        assert_eq!(
            occupancy_vs_sideband_cooling(7.0, 2.0, 2.0, 0.0, 0.3, 1.0).unwrap(),
            7.0
        );
        let o = optimal_linewidth_and_min(1e4, 1.0, 1.0, 0.5);
        assert!((o.n_min - 2e4 / (1.0 + (1.0f64 + 2e4).sqrt())).abs() < 1e-9);
        assert!((o.n_min - 140.4).abs() < 0.1);
        let tiny = optimal_linewidth_and_min(1e4, 1.0, 1e-12, 0.5);
        assert!((tiny.n_min / 1e4 - 1.0).abs() < 1e-6);
    }
}
