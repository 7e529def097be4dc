//! Parallel-versus-sequential benchmarks for the data-parallel hot paths:
//! the similarity matrix, the annealing read fan-out, and a full sweep
//! cell. Built with the default `parallel` feature these compare the rayon
//! pool against a single-thread pool; built with `--no-default-features`
//! the same benches measure the sequential fallback.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use ising_ssl::annealer::{simulated_anneal, AnnealSchedule};
use ising_ssl::dataset::{generate_blobs, DataPoint};
use ising_ssl::oracle::ssl_instance;
use ising_ssl::par::with_thread_cap;
use ising_ssl::pipeline::{sweep, PipelineConfig};
use ising_ssl::similarity::{similarity_matrix, SimilarityModel};

fn bench_modes(c: &mut Criterion, group: &str, mut run: impl FnMut() + Send) {
    let parallel = cfg!(feature = "parallel");
    let label = if parallel { "parallel" } else { "sequential" };
    c.bench_function(&format!("{group}/{label}"), |b| b.iter(&mut run));
    if parallel {
        c.bench_function(&format!("{group}/one_thread"), |b| {
            b.iter(|| with_thread_cap(1, &mut run))
        });
    }
}

fn similarity_benches(c: &mut Criterion) {
    let centers = [
        DataPoint::new(vec![0.0, 0.0]),
        DataPoint::new(vec![4.0, 1.0]),
    ];
    let ds = generate_blobs(&centers, 200, 0.9, 7).unwrap();
    let model = SimilarityModel::reciprocal(1.0, 0.5);
    bench_modes(c, "similarity_matrix_400", || {
        black_box(similarity_matrix(&ds, &model).unwrap());
    });
}

fn anneal_benches(c: &mut Criterion) {
    let instance = ssl_instance(11, 75, 15, 6).unwrap();
    let schedule = AnnealSchedule::default_sa(&instance.problem, 3);
    bench_modes(c, "simulated_anneal_150x32", || {
        black_box(simulated_anneal(&instance.problem, &schedule).unwrap());
    });
}

fn sweep_benches(c: &mut Criterion) {
    let centers = [
        DataPoint::new(vec![0.0, 0.0]),
        DataPoint::new(vec![5.0, 0.5]),
    ];
    let ds = generate_blobs(&centers, 20, 0.8, 13).unwrap();
    let config = PipelineConfig::new(SimilarityModel::reciprocal(1.0, 1.0), 3, 1);
    bench_modes(c, "sweep_cell_40pts", || {
        black_box(sweep(&ds, &[0.4], 2, 5, &config).unwrap());
    });
}

fn all(c: &mut Criterion) {
    similarity_benches(c);
    anneal_benches(c);
    sweep_benches(c);
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = all
}
criterion_main!(benches);
