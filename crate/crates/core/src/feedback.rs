//! The in-loop field with the membrane decoupled: loop transfer functions,
//! squashing, the effective cavity and loop stability.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    cavity_susceptibility, input_phase_shifts, zeta_cavity, zeta_out, CavityParams, FeedbackConfig,
    GainModel, Port, PortGeometry, C64,
};
use crate::par::{self, Exec};

/// Below this |1 - L| the closed loop is treated as sitting on its pole.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Single-pole validity thresholds.
pub const MIN_DETUNING_RATIO: f64 = 5.0;
pub const MAX_KAPPA_TAU: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectiveCavity {
    pub kappa_eff: f64,
    pub delta_eff: f64,
    pub gain_norm: f64,
    /// arg 𝒯(Δ)
    pub phase_t: f64,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub winding_number: i64,
    pub margin: f64,
}

/// `2 sqrt(eta) zeta_out(omega) g(omega)`.
pub fn loop_factor(p: &CavityParams, fb: &FeedbackConfig, omega: f64) -> Result<C64> {
    if fb.gain.is_off() {
        return Ok(C64::new(0.0, 0.0));
    }
    Ok(2.0 * fb.eta.sqrt() * zeta_out(p, fb, omega) * fb.gain.eval(omega)?)
}

/// `1 - L(omega)`, refusing points on the instability boundary.
pub fn loop_denominator(p: &CavityParams, fb: &FeedbackConfig, omega: f64) -> Result<C64> {
    let d = 1.0 - loop_factor(p, fb, omega)?;
    if d.norm() < BOUNDARY_TOL {
        return Err(Error::InstabilityBoundary {
            omega,
            magnitude: d.norm(),
        });
    }
    Ok(d)
}

fn require_transmission(fb: &FeedbackConfig) -> Result<()> {
    match fb.port {
        Port::Transmission => Ok(()),
        Port::Reflection => Err(Error::UnsupportedPort {
            required: "transmission",
        }),
    }
}

/// Open-loop transfer of the transmission loop. For reflection use
/// [`loop_factor`].
pub fn open_loop_transfer(p: &CavityParams, fb: &FeedbackConfig, omega: f64) -> Result<C64> {
    require_transmission(fb)?;
    if fb.gain.is_off() {
        return Ok(C64::new(0.0, 0.0));
    }
    let (theta, _) = input_phase_shifts(p);
    let pref = (fb.eta * p.kappa0 * p.kappa1).sqrt() / p.kappa();
    Ok(
        pref * fb.gain.eval(omega)?
            * cavity_susceptibility(p, omega)
            * C64::from_polar(1.0, -theta),
    )
}

/// 𝒢_fb = Re[𝒯(Δ) e^{iφ}].
pub fn normalized_gain(p: &CavityParams, fb: &FeedbackConfig) -> Result<f64> {
    Ok((open_loop_transfer(p, fb, p.detuning)? * C64::from_polar(1.0, fb.phi)).re)
}

/// Rescale the gain amplitude so that 𝒢_fb equals `target`.
pub fn with_normalized_gain(
    p: &CavityParams,
    fb: &FeedbackConfig,
    target: f64,
) -> Result<FeedbackConfig> {
    if target == 0.0 {
        return Ok(fb.with_gain(fb.gain.scaled(0.0)?));
    }
    let current = normalized_gain(p, fb)?;
    if current.abs() < 1e-300 {
        return Err(Error::invalid(
            "gain",
            "zero normalized gain cannot be rescaled (gain off or in quadrature)",
        ));
    }
    Ok(fb.with_gain(fb.gain.scaled(target / current)?))
}

/// In-loop photocurrent spectrum normalised to shot noise.
pub fn squash_spectrum(p: &CavityParams, fb: &FeedbackConfig, omega: f64) -> Result<f64> {
    Ok(loop_denominator(p, fb, omega)?.norm_sqr().recip())
}

fn delay_estimate(gain: &GainModel, omega: f64) -> Result<f64> {
    match gain {
        GainModel::FlatDelay { delay, .. } => Ok(delay.abs()),
        GainModel::Tabulated(curve) => {
            let (lo, hi) = curve.domain();
            let h = 1e-4 * (hi - lo);
            let a = (omega - h).max(lo.max(0.0));
            let b = (omega + h).min(hi);
            let pa = curve.eval(a)?.arg();
            let pb = curve.eval(b)?.arg();
            let mut dp = pb - pa;
            dp -= (dp / std::f64::consts::TAU).round() * std::f64::consts::TAU;
            Ok((dp / (b - a)).abs())
        }
    }
}

/// Single-pole effective cavity of the transmission loop.
pub fn effective_cavity(p: &CavityParams, fb: &FeedbackConfig) -> Result<EffectiveCavity> {
    let t = open_loop_transfer(p, fb, p.detuning)? * C64::from_polar(1.0, fb.phi);
    let k = p.kappa();
    let tau = if fb.gain.is_off() {
        0.0
    } else {
        delay_estimate(&fb.gain, p.detuning)?
    };
    Ok(EffectiveCavity {
        kappa_eff: k * (1.0 - t.re),
        delta_eff: p.detuning - k * t.im,
        gain_norm: t.re,
        phase_t: (t * C64::from_polar(1.0, -fb.phi)).arg(),
        valid: p.detuning / k >= MIN_DETUNING_RATIO && k * tau <= MAX_KAPPA_TAU,
    })
}

/// Closed-loop cavity susceptibility.
pub fn effective_susceptibility(p: &CavityParams, fb: &FeedbackConfig, omega: f64) -> Result<C64> {
    Ok(cavity_susceptibility(p, omega) / loop_denominator(p, fb, omega)?)
}

/// Peak position and half width at half maximum of the exact `|χ_eff|²`
/// near the (effective) detuning.
pub fn exact_resonance(p: &CavityParams, fb: &FeedbackConfig) -> Result<(f64, f64)> {
    let k = p.kappa();
    let centre = match fb.port {
        Port::Transmission => effective_cavity(p, fb)?.delta_eff,
        Port::Reflection => p.detuning,
    };
    let power = |w: f64| effective_susceptibility(p, fb, w).map(|c| c.norm_sqr());
    let n = 4001;
    let grid: Vec<f64> = (0..n)
        .map(|i| centre - 5.0 * k + 10.0 * k * i as f64 / (n - 1) as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&w| power(w)).collect::<Result<_>>()?;
    let imax = (0..n)
        .max_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap_or(0);
    if imax == 0 || imax == n - 1 {
        return Err(Error::NoFixedPoint(
            "no resonance inside ±5κ of the effective detuning".into(),
        ));
    }
    let (mut a, mut b) = (grid[imax - 1], grid[imax + 1]);
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-12 * k.max(centre.abs()) {
        let c = b - golden * (b - a);
        let d = a + golden * (b - a);
        if power(c)? >= power(d)? {
            b = d;
        } else {
            a = c;
        }
    }
    let peak = 0.5 * (a + b);
    let half = 0.5 * power(peak)?;
    let crossing = |dir: isize| -> Result<f64> {
        let mut i = imax as isize;
        while i > 0 && (i as usize) < n - 1 && vals[i as usize] > half {
            i += dir;
        }
        let (mut inside, mut outside) = (peak, grid[i as usize]);
        if power(outside)? > half {
            return Err(Error::NoFixedPoint(
                "half maximum not reached inside the scan".into(),
            ));
        }
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if power(mid)? > half {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok(0.5 * (inside + outside))
    };
    let (lo, hi) = (crossing(-1)?, crossing(1)?);
    Ok((peak, 0.5 * (hi - lo)))
}

/// Default symmetric Nyquist band: wide enough for the cavity response to
/// decay, clipped to a tabulated gain's domain.
pub fn default_band(p: &CavityParams, fb: &FeedbackConfig) -> (f64, f64) {
    let mut w = 200.0 * (p.detuning.abs() + p.kappa());
    if let GainModel::Tabulated(c) = &fb.gain {
        w = w.min(c.domain().1);
    }
    (-w, w)
}

/// Nyquist winding of `1 - L(omega)` over `band`, evaluated with the default
/// execution strategy.
pub fn nyquist_stability(
    p: &CavityParams,
    fb: &FeedbackConfig,
    band: (f64, f64),
    samples: usize,
) -> Result<StabilityVerdict> {
    nyquist_stability_with(p, fb, band, samples, Exec::default())
}

pub fn nyquist_stability_with(
    p: &CavityParams,
    fb: &FeedbackConfig,
    band: (f64, f64),
    samples: usize,
    exec: Exec,
) -> Result<StabilityVerdict> {
    let (lo, hi) = band;
    if !(lo < hi) || samples < 16 {
        return Err(Error::invalid(
            "band",
            "need lo < hi and at least 16 samples",
        ));
    }
    if fb.gain.is_off() {
        return Ok(StabilityVerdict {
            stable: true,
            winding_number: 0,
            margin: 1.0,
        });
    }
    // Reflection keeps a direct (non-decaying) term in the loop; there the
    // closing arc is only safe while the edge loop stays inside the unit disk.
    let edge_limit = match fb.port {
        Port::Transmission => 1e-3,
        Port::Reflection => 1.0,
    };
    for w in [lo, hi] {
        let m = loop_factor(p, fb, w)?.norm();
        if m >= edge_limit {
            return Err(Error::BandTooNarrow { magnitude: m });
        }
    }

    let k = p.kappa();
    let mut grid = Vec::with_capacity(samples + 2000);
    let scale = k.min(hi.abs().max(lo.abs()));
    let (ulo, uhi) = ((lo / scale).asinh(), (hi / scale).asinh());
    for i in 0..samples {
        let u = ulo + (uhi - ulo) * i as f64 / (samples - 1) as f64;
        grid.push(scale * u.sinh());
    }
    for c in [-p.detuning, p.detuning] {
        for i in 0..=1000 {
            let w = c + k * (-30.0 + 60.0 * i as f64 / 1000.0);
            if w > lo && w < hi {
                grid.push(w);
            }
        }
    }
    grid.push(lo);
    grid.push(hi);
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let eval = |ws: &[f64]| -> Result<Vec<C64>> {
        par::map(exec, ws, |&w| loop_factor(p, fb, w).map(|l| 1.0 - l))
            .into_iter()
            .collect()
    };
    let mut d = eval(&grid)?;

    let jump = |a: C64, b: C64| (b / a).arg();
    for _ in 0..40 {
        let mids: Vec<f64> = grid
            .windows(2)
            .zip(d.windows(2))
            .filter(|(_, dd)| jump(dd[0], dd[1]).abs() > std::f64::consts::FRAC_PI_4)
            .map(|(ww, _)| 0.5 * (ww[0] + ww[1]))
            .filter(|&m| m > grid[0] && m < *grid.last().unwrap())
            .collect();
        if mids.is_empty() {
            break;
        }
        let dm = eval(&mids)?;
        let mut merged: Vec<(f64, C64)> = grid
            .into_iter()
            .zip(d)
            .chain(mids.into_iter().zip(dm))
            .collect();
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        merged.dedup_by(|a, b| a.0 == b.0);
        (grid, d) = merged.into_iter().unzip();
    }

    let mut total = 0.0;
    for i in 1..d.len() {
        let j = jump(d[i - 1], d[i]);
        if j.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::SamplingTooCoarse {
                omega: grid[i],
                jump: j.abs(),
            });
        }
        total += j;
    }
    let (first, last) = (d[0], *d.last().unwrap());
    let margin = d.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if margin < BOUNDARY_TOL {
        let i = d.iter().position(|z| z.norm() == margin).unwrap_or(0);
        return Err(Error::InstabilityBoundary {
            omega: grid[i],
            magnitude: margin,
        });
    }
    // Close the contour from D(hi) back to D(lo) inside Re D > 0.
    total += first.arg() - last.arg();
    let winding = (total / std::f64::consts::TAU).round() as i64;
    Ok(StabilityVerdict {
        stable: winding == 0,
        winding_number: winding,
        margin,
    })
}

/// Gain value `g(-omega_m)` that removes the Stokes rate from the first
/// (interfering) term of the cavity-quadrature spectrum.
pub fn stokes_suppression_gain(p: &CavityParams, fb: &FeedbackConfig, omega_m: f64) -> Result<C64> {
    let w = -omega_m;
    let geo = PortGeometry::of(p, fb.port);
    let (theta, theta_bar) = input_phase_shifts(p);
    let phi_fb = match fb.port {
        Port::Reflection => fb.phi + theta - theta_bar,
        Port::Transmission => fb.phi,
    };
    let chi_c = cavity_susceptibility(p, w).conj();
    let den = fb.eta.sqrt() * zeta_out(p, fb, w) * chi_c
        - (fb.eta * geo.kappa_fb / p.kappa0).sqrt()
            * zeta_cavity(p, 0.0, w)
            * C64::from_polar(1.0, phi_fb);
    if den.norm() < BOUNDARY_TOL {
        return Err(Error::NoSuppressingGain {
            magnitude: den.norm(),
        });
    }
    Ok(0.5 * chi_c / den)
}

pub const FIXED_POINT_DAMPING: f64 = 0.5;
pub const FIXED_POINT_MAX_ITER: usize = 200;

/// Bare detuning at which Δ_eff = ω_m for 𝒢_fb = 1 (transmission loop).
pub fn optimal_bare_detuning(p: &CavityParams, fb: &FeedbackConfig, omega_m: f64) -> Result<f64> {
    require_transmission(fb)?;
    if fb.gain.is_off() {
        return Ok(omega_m);
    }
    let tol = std::f64::consts::TAU;
    let k = p.kappa();
    let mut delta = omega_m;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let q = p.with_detuning(delta);
        let phase = open_loop_transfer(&q, fb, delta)?.arg() + fb.phi;
        let target = omega_m + k * phase.tan();
        if !target.is_finite() || target <= 0.0 {
            return Err(Error::NoFixedPoint(format!(
                "iterate left the band at {delta:e} rad/s"
            )));
        }
        let next = (1.0 - FIXED_POINT_DAMPING) * delta + FIXED_POINT_DAMPING * target;
        if (next - delta).abs() < tol {
            return Ok(next);
        }
        delta = next;
    }
    Err(Error::NoFixedPoint(format!(
        "no convergence in {FIXED_POINT_MAX_ITER} iterations"
    )))
}
