//! Property tests for the response functions, the loop and the rate model.

use std::f64::consts::PI;

use loopcool::cooling::{
    compact_rates, high_temperature_report, occupancy_weak_coupling, scattering_rates,
};
use loopcool::feedback::{
    default_band, effective_cavity, effective_susceptibility, loop_factor, nyquist_stability,
    optimal_bare_detuning, squash_spectrum, with_normalized_gain,
};
use loopcool::model::{
    cavity_susceptibility, input_phase_shifts, membrane_modes, zeta_cavity, zeta_out, CavityParams,
    FeedbackConfig, GainModel, MechanicsParams, MembraneGeometry, Port, C64,
};
use loopcool::optimize::presets as pre;
use loopcool::units::{hz_to_rad, occupancy_to_temperature, temperature_to_occupancy};
use proptest::prelude::*;

fn cavity() -> impl Strategy<Value = CavityParams> {
    (1e3..1e6f64, 0.0..1e6f64, 0.0..1e5f64, -5e6..5e6f64)
        .prop_map(|(k0, k1, kp, d)| CavityParams::new(k0, k1, kp, d).unwrap())
}

fn port() -> impl Strategy<Value = Port> {
    prop_oneof![Just(Port::Reflection), Just(Port::Transmission)]
}

fn flat_loop() -> impl Strategy<Value = FeedbackConfig> {
    (
        port(),
        -PI..PI,
        0.01..1.0f64,
        -2.0..2.0f64,
        0.0..1e-6f64,
        -PI..PI,
    )
        .prop_map(|(port, phi, eta, a, tau, off)| {
            FeedbackConfig::new(port, phi, eta, GainModel::flat(a, tau, off)).unwrap()
        })
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

proptest! {
    #[test]
    fn responses_are_conjugate_symmetric(
        p in cavity(), fb in flat_loop(), w in 1.0..1e7f64, varphi in -PI..PI,
    ) {
        let t = 1e-13;
        prop_assert!(close(zeta_out(&p, &fb, -w), zeta_out(&p, &fb, w).conj(), t));
        prop_assert!(close(zeta_cavity(&p, varphi, -w), zeta_cavity(&p, varphi, w).conj(), t));
        prop_assert!(close(fb.gain.eval(-w).unwrap(), fb.gain.eval(w).unwrap().conj(), t));
        prop_assert!(close(
            loop_factor(&p, &fb, -w).unwrap(),
            loop_factor(&p, &fb, w).unwrap().conj(),
            t
        ));
    }

    #[test]
    fn susceptibility_peaks_at_detuning(p in cavity()) {
        let k = p.kappa();
        let n = 2001;
        let step = 10.0 * k / (n - 1) as f64;
        let best = (0..n)
            .map(|i| p.detuning - 5.0 * k + step * i as f64)
            .max_by(|&a, &b| {
                cavity_susceptibility(&p, a)
                    .norm()
                    .total_cmp(&cavity_susceptibility(&p, b).norm())
            })
            .unwrap();
        prop_assert!((best - p.detuning).abs() <= step);
    }

    #[test]
    fn zeta_out_direct_term(p in cavity(), fb in flat_loop()) {
        // far off resonance χ(±ω) is negligible and only the direct term remains
        let w = 1e12 * (p.kappa() + p.detuning.abs());
        let z = zeta_out(&p, &fb, w);
        match fb.port {
            Port::Transmission => prop_assert!(z.norm() < 1e-9),
            Port::Reflection => {
                let (_, theta_bar) = input_phase_shifts(&p);
                let direct = -(fb.phi - theta_bar).cos();
                prop_assert!((z - direct).norm() < 1e-9, "{z} vs {direct}");
            }
        }
    }

    #[test]
    fn kappa_eff_identity(p in cavity(), fb in flat_loop(), g in -3.0..1.5f64) {
        let fb = FeedbackConfig { port: Port::Transmission, ..fb };
        prop_assume!(p.kappa1 > 0.0);
        let fb = match with_normalized_gain(&p, &fb, g) {
            Ok(f) => f,
            Err(_) => return Ok(()),
        };
        let e = effective_cavity(&p, &fb).unwrap();
        prop_assert!((e.gain_norm - g).abs() <= 1e-12 * (1.0 + g.abs()));
        prop_assert!((e.kappa_eff - p.kappa() * (1.0 - e.gain_norm)).abs() <= 1e-12 * p.kappa());
    }

    #[test]
    fn in_loop_spectrum_round_trip(p in cavity(), fb in flat_loop(), w in -1e7..1e7f64) {
        let d = 1.0 - loop_factor(&p, &fb, w).unwrap();
        prop_assume!(d.norm() > 1e-6);
        let s = squash_spectrum(&p, &fb, w).unwrap();
        prop_assert!((s * d.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rates_are_nonnegative(p in cavity(), fb in flat_loop(), wm in 1e3..1e7f64) {
        let m = MechanicsParams::new(wm, 1.0, 100.0, wm / 30.0).unwrap();
        match scattering_rates(&p, &m, &fb) {
            Ok(r) => {
                prop_assert!(r.a_plus >= 0.0 && r.a_minus >= 0.0);
                prop_assert!((r.gamma_opt - (r.a_minus - r.a_plus)).abs() <= 1e-12 * r.a_minus.max(r.a_plus));
            }
            Err(e) => prop_assert!(e.is_instability()),
        }
    }

    #[test]
    fn single_port_rates_match_compact_form(
        k0 in 1e4..1e6f64, wr in 0.3..5.0f64, dr in 0.5..2.0f64,
        a in -0.5..0.5f64, tau in 0.0..0.05f64, off in -PI..PI, phi in -PI..PI,
    ) {
        let wm = wr * k0;
        let p = CavityParams::new(k0, 0.0, 0.0, dr * wm).unwrap();
        let m = MechanicsParams::new(wm, 1.0, 1e4, wm / 50.0).unwrap();
        let fb = FeedbackConfig::new(Port::Reflection, phi, 1.0, GainModel::flat(a, tau / k0, off))
            .unwrap();
        let stable = matches!(nyquist_stability(&p, &fb, default_band(&p, &fb), 2000), Ok(v) if v.stable);
        prop_assume!(stable);
        let x = scattering_rates(&p, &m, &fb).unwrap();
        let y = compact_rates(&p, &m, &fb).unwrap();
        prop_assert!((x.a_plus / y.a_plus - 1.0).abs() < 1e-10);
        prop_assert!((x.a_minus / y.a_minus - 1.0).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_susceptibility_follows_pole(
        k in 1e4..1e6f64, dr in 10.0..50.0f64, kt in 0.0..0.05f64,
        g in -0.2..0.2f64, phase in -1.0..1.0f64,
    ) {
        let kp = 0.05 * k;
        let p = CavityParams::new(0.5 * (k - kp), 0.5 * (k - kp), kp, dr * k).unwrap();
        let (theta, _) = input_phase_shifts(&p);
        let tau = kt / k;
        // offset chosen so arg 𝒯(Δ) = phase
        let off = phase + theta - p.detuning * tau;
        let fb = FeedbackConfig::new(Port::Transmission, 0.0, 1.0, GainModel::flat(1.0, tau, off))
            .unwrap();
        let fb = with_normalized_gain(&p, &fb, g).unwrap();
        let e = effective_cavity(&p, &fb).unwrap();
        for i in 0..=120 {
            let w = p.detuning - 3.0 * k + 6.0 * k * i as f64 / 120.0;
            let exact = effective_susceptibility(&p, &fb, w).unwrap().norm();
            let pole = (2.0 * k / C64::new(e.kappa_eff, e.delta_eff - w)).norm();
            prop_assert!((exact / pole - 1.0).abs() <= 0.05, "w-Δ={} exact {exact} pole {pole}", (w - p.detuning) / k);
        }
    }

    #[test]
    fn squash_flips_with_offset(g in 0.05..0.5f64) {
        let s = pre::experiment();
        let p = &s.cavity;
        let k = p.kappa();
        let fb = with_normalized_gain(p, &s.feedback, g).unwrap();
        let flipped = match fb.gain {
            GainModel::FlatDelay { amplitude, delay, phase_offset } => {
                fb.with_gain(GainModel::flat(amplitude, delay, phase_offset + PI))
            }
            _ => unreachable!(),
        };
        for i in 0..=40 {
            let w = p.detuning - 0.25 * k + 0.5 * k * i as f64 / 40.0;
            let a = squash_spectrum(p, &fb, w).unwrap();
            let b = squash_spectrum(p, &flipped, w).unwrap();
            prop_assert!((a < 1.0) != (b < 1.0), "{w} {a} {b}");
        }
    }
}

#[test]
fn nyquist_matches_single_pole_sign() {
    // narrow line deep in the single-pole regime
    let k = 1e4;
    let p = CavityParams::new(0.5 * k, 0.5 * k, 0.0, 200.0 * k).unwrap();
    let (theta, _) = input_phase_shifts(&p);
    let fb = FeedbackConfig::new(
        Port::Transmission,
        0.0,
        1.0,
        GainModel::flat(1.0, 0.0, theta - 0.3),
    )
    .unwrap();
    let mut flips = 0;
    let mut last = None;
    for i in 0..100 {
        // 0.505 .. 1.495, never exactly 1
        let g = 0.505 + 0.01 * i as f64;
        let f = with_normalized_gain(&p, &fb, g).unwrap();
        let v = nyquist_stability(&p, &f, default_band(&p, &f), 4000).unwrap();
        let e = effective_cavity(&p, &f).unwrap();
        assert_eq!(v.stable, e.kappa_eff > 0.0, "G = {g}");
        if last.is_some_and(|l| l != v.stable) {
            flips += 1;
        }
        last = Some(v.stable);
    }
    assert_eq!(flips, 1);
}

#[test]
fn membrane_mass_ratio_matches_bessel_identity() {
    // independent series for J_n
    fn j(n: u32, x: f64) -> f64 {
        let mut term = (0.5 * x).powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
        let mut sum = term;
        for m in 1..200 {
            term *= -(0.25 * x * x) / (m as f64 * (m + n) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    }
    let g =
        MembraneGeometry::from_fundamental(0.615e-3, 97e-9, 3100.0, hz_to_rad(343.13e3)).unwrap();
    let modes = membrane_modes(&g, 4, 3).unwrap();
    assert_eq!(modes.len(), 12);
    for m in &modes {
        assert!(j(m.n, m.alpha).abs() < 1e-10, "({}, {})", m.n, m.j);
        let want = 0.5 * j(m.n + 1, m.alpha).powi(2);
        assert!(
            (m.m_eff_ratio / want - 1.0).abs() < 1e-8,
            "({}, {})",
            m.n,
            m.j
        );
    }
}

#[test]
fn temperature_conversion_anchor() {
    let wm = hz_to_rad(343.13e3);
    let n = temperature_to_occupancy(2.0, wm);
    assert!((n / 1.2145e5 - 1.0).abs() < 1e-3, "{n}");
    assert!((occupancy_to_temperature(n, wm) - 2.0).abs() < 1e-12);
}

#[test]
fn high_temperature_chain_tracks_full_rates() {
    // Δ retuned at each gain so that Δ_eff = ω_m
    let s = pre::experiment();
    let m = &s.mechanics;
    for i in 0..=9 {
        let g = 0.5 + 0.05 * i as f64;
        let mut p = s.cavity.clone();
        let mut fb = with_normalized_gain(&p, &s.feedback, g).unwrap();
        for _ in 0..200 {
            let e = effective_cavity(&p, &fb).unwrap();
            let next = p.detuning + 0.5 * (m.omega_m - e.delta_eff);
            p = p.with_detuning(next);
            fb = with_normalized_gain(&p, &fb, g).unwrap();
            if (e.delta_eff - m.omega_m).abs() < 1e-6 * m.omega_m {
                break;
            }
        }
        let e = effective_cavity(&p, &fb).unwrap();
        let h = high_temperature_report(&p, m, &e, fb.eta, p.kappa1).unwrap();
        let full = occupancy_weak_coupling(m, &scattering_rates(&p, m, &fb).unwrap())
            .unwrap()
            .n_final;
        assert!(
            (h.n_final / full - 1.0).abs() <= 0.15,
            "G = {g}: high-T {} vs full {full}",
            h.n_final
        );
    }
}

#[test]
fn fixed_point_without_phase_returns_omega_m() {
    let k = 1e4;
    let wm = 30.0 * k;
    let p = CavityParams::new(0.5 * k, 0.5 * k, 0.0, wm).unwrap();
    let (theta, _) = input_phase_shifts(&p);
    let fb = FeedbackConfig::new(
        Port::Transmission,
        0.0,
        1.0,
        GainModel::flat(1.0, 0.0, theta),
    )
    .unwrap();
    let fb = with_normalized_gain(&p, &fb, 1.0).unwrap();
    let d = optimal_bare_detuning(&p, &fb, wm).unwrap();
    assert!((d - wm).abs() < 1.0 * 2.0 * PI, "{d} vs {wm}");
}
