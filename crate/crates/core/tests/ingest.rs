use std::f64::consts::PI;

use loopcool::ingest::{
    compose, decompose_electronic_filter, delay_from_phase, high_pass_filter, linear_phase_fit,
    parse_bode, synthetic_trace, BodeTrace,
};
use loopcool::model::{GainModel, Port, TransferCurve, C64};
use loopcool::optimize::presets as pre;
use loopcool::units::hz_to_rad;
use loopcool::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn tabulated(g: &GainModel) -> &TransferCurve {
    match g {
        GainModel::Tabulated(c) => c,
        _ => panic!("expected a tabulated filter"),
    }
}

#[test]
fn flat_filter_is_recovered_exactly() {
    let p = pre::experiment().cavity;
    let freqs = log_grid(1e4, 5e6, 2001);
    let gain = GainModel::flat(0.37, 750e-9, 0.0);
    let trace = compose(&gain, &p, Port::Transmission, &freqs).unwrap();
    let d = decompose_electronic_filter(&trace, &p, Port::Transmission).unwrap();
    assert!(d.dropped_hz.is_empty());
    let c = tabulated(&d.gain);
    for (w, v) in c.samples() {
        assert!((v.norm() / 0.37 - 1.0).abs() < 1e-6, "{w}");
    }
    let tau = delay_from_phase(c, (hz_to_rad(1e4), hz_to_rad(5e6))).unwrap();
    assert!((tau - 750e-9).abs() < 1e-9, "{tau}");
}

#[test]
fn round_trip_through_a_file() {
    let p = pre::experiment().cavity;
    let freqs = log_grid(1e4, 5e6, 801);
    let trace = synthetic_trace(&p, Port::Transmission, &freqs, hz_to_rad(150e3), 750e-9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("open_loop.csv");
    trace.write(&path).unwrap();
    let read = parse_bode(&path).unwrap();
    let d = decompose_electronic_filter(&read, &p, Port::Transmission).unwrap();
    let back = compose(&d.gain, &p, Port::Transmission, &freqs).unwrap();
    for (a, b) in read.complex().iter().zip(back.complex()) {
        assert!((a - b).norm() <= 1e-9 * a.norm());
    }
    for (a, b) in trace.complex().iter().zip(read.complex()) {
        assert!((a - b).norm() <= 1e-12 * a.norm());
    }
}

#[test]
fn noisy_phase_still_gives_the_delay() {
    let freqs = log_grid(1e5, 5e6, 400);
    let omegas: Vec<f64> = freqs.iter().map(|&f| hz_to_rad(f)).collect();
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let phase: Vec<f64> = omegas
            .iter()
            .map(|&w| w * 750e-9 + PI + noise.sample(&mut rng))
            .collect();
        let c = TransferCurve::from_polar(&omegas, &vec![1.0; omegas.len()], &phase).unwrap();
        let tau = delay_from_phase(&c, (omegas[0], *omegas.last().unwrap())).unwrap();
        assert!((tau / 750e-9 - 1.0).abs() < 0.02, "{tau}");
    }
}

#[test]
fn wrong_port_leaves_a_curved_residual() {
    let p = pre::experiment().cavity;
    let freqs = log_grid(1e4, 5e6, 4001);
    let trace = synthetic_trace(&p, Port::Transmission, &freqs, hz_to_rad(150e3), 750e-9).unwrap();
    let near = (p.detuning - 3.0 * p.kappa(), p.detuning + 3.0 * p.kappa());
    let fit = |port| {
        let d = decompose_electronic_filter(&trace, &p, port).unwrap();
        linear_phase_fit(tabulated(&d.gain), near).unwrap()
    };
    let right = fit(Port::Transmission);
    let wrong = fit(Port::Reflection);
    assert!(right.rms_residual < 0.05, "{}", right.rms_residual);
    assert!(wrong.rms_residual > 10.0 * right.rms_residual);
    assert!((wrong.delay - 750e-9).abs() > 1e-6, "{}", wrong.delay);
}

#[test]
fn vanishing_cavity_response_is_refused() {
    // zero-coupling transmission port: every sample would be a division by ~0
    let mut p = pre::experiment().cavity;
    p.kappa1 = 1e-12;
    let freqs = log_grid(1e6, 1e9, 50);
    let values: Vec<C64> = freqs
        .iter()
        .map(|&f| high_pass_filter(1.0, 1e6, 0.0, 0.0, hz_to_rad(f)))
        .collect();
    let trace = BodeTrace::from_complex("flat", &freqs, &values).unwrap();
    assert!(matches!(
        decompose_electronic_filter(&trace, &p, Port::Transmission),
        Err(Error::InconsistentMeasurement(_))
    ));
}

#[test]
fn malformed_file_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(
        &path,
        "# analyzer export\nfrequency_hz,magnitude_db,phase_rad\n1e4,-3,0.1\n2e4,,0.2\n",
    )
    .unwrap();
    match parse_bode(&path) {
        Err(Error::Parse { line, path: p, .. }) => {
            assert_eq!(line, 4);
            assert_eq!(p, path);
        }
        other => panic!("{other:?}"),
    }
}
