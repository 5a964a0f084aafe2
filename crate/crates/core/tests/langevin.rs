use loopcool::cooling::{occupancy_weak_coupling, scattering_rates};
use loopcool::langevin::{
    assemble_and_solve, cross_spectrum, mechanical_peak, phonon_occupancy, NoiseBasis, Observable,
    QuadratureConfig,
};
use loopcool::model::FeedbackConfig;
use loopcool::optimize::presets as pre;
use loopcool::optimize::Scenario;
use proptest::prelude::*;

fn presets() -> Vec<(&'static str, Scenario)> {
    vec![
        ("experiment", pre::experiment_without_feedback()),
        ("fig1_optical", pre::fig1_optical(1.0).unwrap()),
        ("fig1_microwave", pre::fig1_microwave(1.0).unwrap()),
    ]
}

#[test]
fn loop_without_coupling_keeps_the_bath() {
    let s = pre::experiment();
    for g in [0.3, 0.9] {
        let fb = loopcool::feedback::with_normalized_gain(&s.cavity, &s.feedback, g).unwrap();
        let m = s.mechanics.with_coupling(0.0);
        let n = phonon_occupancy(&s.cavity, &m, &fb, &QuadratureConfig::default()).unwrap();
        assert!(
            (n / m.n_th - 1.0).abs() < 1e-6,
            "G_fb = {g}: {n} vs {}",
            m.n_th
        );
    }
}

#[test]
fn spectra_are_real_and_nonnegative() {
    let s = pre::experiment();
    let basis = NoiseBasis::new(s.mechanics.n_th);
    let obs = [
        Observable::A,
        Observable::B,
        Observable::BDag,
        Observable::Ifb,
        Observable::AOut0,
        Observable::AOut1,
        Observable::Position,
        Observable::CavityQuadrature(0.4),
    ];
    let wm = s.mechanics.omega_m;
    for i in 0..400 {
        let w = -3.0 * wm + 6.0 * wm * (i as f64 + 0.5) / 400.0;
        let a = assemble_and_solve(&s.cavity, &s.mechanics, &s.feedback, w).unwrap();
        let b = assemble_and_solve(&s.cavity, &s.mechanics, &s.feedback, -w).unwrap();
        for o in obs {
            let v = cross_spectrum(&a, &b, &basis, o, o.partner());
            assert!(
                v.im.abs() <= 1e-12 * v.re.abs().max(1.0),
                "{o:?} at {w}: {v}"
            );
            assert!(v.re >= -1e-9 * v.re.abs().max(1.0), "{o:?} at {w}: {v}");
        }
    }
}

#[test]
fn damping_matches_sideband_rate() {
    let s = pre::experiment_without_feedback();
    let wm = s.mechanics.omega_m;
    let p = s.cavity.with_detuning(wm);
    let m = &s.mechanics;
    let (_, gamma_eff) = mechanical_peak(&p, m, &FeedbackConfig::off()).unwrap();
    let want = m.gamma_m + 2.0 * m.coupling * m.coupling / p.kappa();
    assert!(
        (gamma_eff / want - 1.0).abs() < 0.1,
        "{gamma_eff} vs {want}"
    );
}

#[test]
fn quadrature_is_converged() {
    for (name, s) in presets()
        .into_iter()
        .chain([("experiment_fb", pre::experiment())])
    {
        let cfg = QuadratureConfig::default();
        let fine = QuadratureConfig {
            rel_tol: 0.5 * cfg.rel_tol,
            ..cfg
        };
        let a = phonon_occupancy(&s.cavity, &s.mechanics, &s.feedback, &cfg).unwrap();
        let b = phonon_occupancy(&s.cavity, &s.mechanics, &s.feedback, &fine).unwrap();
        assert!((a / b - 1.0).abs() < 1e-3, "{name}: {a} vs {b}");
    }
}

#[test]
fn fig1_presets_agree_with_weak_coupling_closely() {
    for (name, s) in presets().into_iter().skip(1) {
        let m = s.mechanics.with_coupling(s.mechanics.omega_m / 100.0);
        let weak =
            occupancy_weak_coupling(&m, &scattering_rates(&s.cavity, &m, &s.feedback).unwrap())
                .unwrap()
                .n_final;
        let exact =
            phonon_occupancy(&s.cavity, &m, &s.feedback, &QuadratureConfig::default()).unwrap();
        assert!(
            (exact / weak - 1.0).abs() < 0.02,
            "{name}: {exact} vs {weak}"
        );
    }
}

#[test]
fn experiment_excess_tracks_resolved_sideband_factor() {
    let s = pre::experiment_without_feedback();
    let m = s.mechanics.with_coupling(s.mechanics.omega_m / 100.0);
    let weak = occupancy_weak_coupling(&m, &scattering_rates(&s.cavity, &m, &s.feedback).unwrap())
        .unwrap()
        .n_final;
    let exact = phonon_occupancy(&s.cavity, &m, &s.feedback, &QuadratureConfig::default()).unwrap();
    let g_over_k = m.coupling / s.cavity.kappa();
    let excess = exact / weak - 1.0;
    assert!(excess > 0.0 && excess < 0.05);
    assert!(
        excess <= 1.5 * g_over_k * g_over_k,
        "{excess} vs {}",
        g_over_k * g_over_k
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn weak_coupling_consistency(which in 0usize..3, ratio in 100.0..1000.0f64) {
        let (name, s) = presets().swap_remove(which);
        let m = s.mechanics.with_coupling(s.mechanics.omega_m / ratio);
        let weak = occupancy_weak_coupling(&m, &scattering_rates(&s.cavity, &m, &s.feedback).unwrap())
            .unwrap()
            .n_final;
        let exact = phonon_occupancy(&s.cavity, &m, &s.feedback, &QuadratureConfig::default())
            .unwrap();
        prop_assert!((exact / weak - 1.0).abs() <= 0.05, "{name}: {exact} vs {weak}");
    }
}
