//! Parallel against sequential execution of the two batch workloads:
//! interaction-constant calibration and independent Riemann solves.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ncft_core::curves::Curves;
use ncft_core::diagnostics::{calibrate, CalibrationOptions};
use ncft_core::exec::{map_range, Execution};
use ncft_core::kinetics::KineticFunction;
use ncft_core::model::{Cubic, Elasticity, State};
use ncft_core::riemann::RiemannSolver;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn calibration(c: &mut Criterion) {
    let kin = KineticFunction::theta(0.5, Some(0.5)).unwrap();
    let model = Cubic::default();
    let solver = RiemannSolver::new(Curves::new(&model), &kin, true);
    let opts = CalibrationOptions {
        samples: 700,
        ..CalibrationOptions::default()
    };
    let mut g = c.benchmark_group("calibration");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| calibrate(&solver, &State::scalar(1.0), &opts, exec).unwrap())
        });
    }
    g.finish();
}

fn riemann_batch(c: &mut Criterion) {
    let kin = KineticFunction::theta(0.5, Some(0.5)).unwrap();
    let model = Elasticity::default();
    let solver = RiemannSolver::new(Curves::new(&model), &kin, true);
    let n = 200;
    let pair = |k: usize| {
        let t = k as f64 / n as f64;
        let ul = State::new(vec![0.4 * t - 0.2, 0.25 + 0.2 * t]);
        let ur = State::new(vec![ul[0] + 0.03 * (7.0 * t).sin(), ul[1] + 0.03 * (5.0 * t).cos()]);
        (ul, ur)
    };
    let mut g = c.benchmark_group("riemann_batch");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                map_range(exec, n, |k| {
                    let (ul, ur) = pair(k);
                    solver.solve(&ul, &ur).map(|f| f.len()).unwrap_or(0)
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, calibration, riemann_batch);
criterion_main!(benches);
