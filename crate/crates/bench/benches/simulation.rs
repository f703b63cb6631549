use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vqt_bench::random_ansatz;
use vqt_core::mps::{partial_trace_to_mpo, run_circuit_mps, DEFAULT_SVD_TOL};
use vqt_core::statevector::run_circuit;

fn dense_vs_mps(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    for (n, d) in [(10, 4), (14, 6), (16, 10)] {
        let circ = random_ansatz(n, d, 0);
        group.bench_with_input(BenchmarkId::new("dense", format!("n{n}_d{d}")), &circ, |b, circ| b.iter(|| run_circuit(circ).unwrap()));
        group.bench_with_input(BenchmarkId::new("mps", format!("n{n}_d{d}")), &circ, |b, circ| {
            b.iter(|| run_circuit_mps(circ, None, DEFAULT_SVD_TOL).unwrap())
        });
    }
    group.finish();
}

fn mpo_export(c: &mut Criterion) {
    let mps = run_circuit_mps(&random_ansatz(12, 6, 1), None, DEFAULT_SVD_TOL).unwrap();
    c.bench_function("partial_trace_mpo_n12_keep6", |b| b.iter(|| partial_trace_to_mpo(&mps, 6).unwrap().to_dense().unwrap()));
}

criterion_group!(benches, dense_vs_mps, mpo_export);
criterion_main!(benches);
