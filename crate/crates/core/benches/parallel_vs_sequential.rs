//! Sequential vs rayon execution of the hot paths. Build with
//! `--no-default-features` to see the fallback (both arms then run serially).

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use loopcool::feedback::{default_band, nyquist_stability_with};
use loopcool::langevin::{phonon_occupancy, QuadratureConfig};
use loopcool::optimize::presets as pre;
use loopcool::optimize::{sweep, Evaluator, SweepSpec, Variable};
use loopcool::par::Exec;

const ARMS: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn gain_sweep(c: &mut Criterion) {
    let s = pre::experiment();
    let spec = SweepSpec::new(
        Variable::NormalizedGain,
        (0.0, 0.99),
        32,
        Evaluator::Langevin,
    )
    .unwrap();
    let mut g = c.benchmark_group("langevin_gain_sweep_32");
    g.sample_size(10);
    for (name, exec) in ARMS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep(black_box(&spec), &s, exec).unwrap())
        });
    }
    g.finish();
}

fn occupancy(c: &mut Criterion) {
    let s = pre::experiment();
    let mut g = c.benchmark_group("phonon_occupancy");
    for (name, exec) in ARMS {
        let cfg = QuadratureConfig {
            exec,
            ..QuadratureConfig::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                phonon_occupancy(&s.cavity, &s.mechanics, black_box(&s.feedback), &cfg).unwrap()
            })
        });
    }
    g.finish();
}

fn nyquist(c: &mut Criterion) {
    let s = pre::experiment();
    let band = default_band(&s.cavity, &s.feedback);
    let mut g = c.benchmark_group("nyquist_200k");
    for (name, exec) in ARMS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                nyquist_stability_with(&s.cavity, black_box(&s.feedback), band, 200_000, exec)
                    .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, gain_sweep, occupancy, nyquist);
criterion_main!(benches);
