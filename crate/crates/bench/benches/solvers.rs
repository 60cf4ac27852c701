use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tsdrive::mhe::{build_qp, MeasurementBuffer, MheConfig, MovingHorizonEstimator};
use tsdrive::mpc::{MpcConfig, MpcController, Reference, ReferenceWindow};
use tsdrive::qp::solve;
use tsdrive::{ControlInput, DynamicState, Measurement};
use tsdrive_bench::bench_model;

fn benches(c: &mut Criterion) {
    let model = bench_model();
    let u = ControlInput::new(0.05, 0.8);
    let y = Measurement {
        vx: 1.5,
        omega: 0.4,
    };

    let mhe_cfg = MheConfig::default();
    let mut buffer = MeasurementBuffer::for_horizon(mhe_cfg.hp);
    for _ in 0..buffer.capacity() {
        buffer.push(y, u, 0.0);
    }
    let mhe_qp =
        build_qp(&model, &buffer, &mhe_cfg, &DynamicState::new(1.5, 0.0, 0.4)).expect("qp");
    c.bench_function("qp_solve_cold", |b| {
        b.iter(|| solve(black_box(&mhe_qp.qp), mhe_cfg.solver, None).expect("solve"))
    });

    let mpc_cfg = MpcConfig::default();
    let refs = ReferenceWindow::constant(
        Reference {
            vx: 1.8,
            omega: 0.6,
        },
        mpc_cfg.hp,
    );
    let x_hat = DynamicState::new(1.5, 0.01, 0.4);
    let mut mpc = MpcController::new(&model, mpc_cfg).expect("controller");
    c.bench_function("mpc_step", |b| {
        b.iter(|| {
            mpc.step(&model, black_box(&x_hat), &u, &refs)
                .expect("step")
                .first_input()
        })
    });

    let mut mhe = MovingHorizonEstimator::new(mhe_cfg).expect("estimator");
    for _ in 0..buffer.capacity() {
        mhe.update(&model, y, u).expect("update");
    }
    c.bench_function("mhe_update", |b| {
        b.iter(|| {
            mhe.update(&model, black_box(y), u)
                .expect("update")
                .current()
        })
    });
}

criterion_group!(solver_benches, benches);
criterion_main!(solver_benches);
