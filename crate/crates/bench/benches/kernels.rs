use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use raftfem::fem::{assemble_mass, assemble_stiffness};
use raftfem::linalg::SparseLu;
use raftfem::stepper::{assemble_reduced_system, step_reduced};
use raftfem::{build_refined_sphere, connected_components, StepperConfig};
use raftfem_bench::{baseline_state, sphere};
use std::hint::black_box;

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    for level in [3, 4, 5] {
        let mesh = build_refined_sphere(level).unwrap();
        g.bench_with_input(
            BenchmarkId::new("mass_and_stiffness", mesh.num_vertices()),
            &mesh,
            |b, m| {
                b.iter(|| {
                    (
                        assemble_mass(black_box(m)),
                        assemble_stiffness(black_box(m)),
                    )
                })
            },
        );
    }
    g.finish();
}

fn matvec(c: &mut Criterion) {
    let mut g = c.benchmark_group("matvec");
    for level in [4, 5, 6] {
        let space = sphere(level);
        let x: Vec<f64> = (0..space.num_vertices())
            .map(|i| (i as f64).sin())
            .collect();
        let mut y = vec![0.0; x.len()];
        g.bench_function(BenchmarkId::new("stiffness", space.num_vertices()), |b| {
            b.iter(|| space.stiffness.matvec_into(black_box(&x), &mut y))
        });
    }
    g.finish();
}

fn reduced_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("reduced_step");
    g.sample_size(10);
    let cfg = StepperConfig::default();
    for level in [3, 4] {
        let space = sphere(level);
        let (state, params) = baseline_state(&space);
        let n = space.num_vertices();
        let system = assemble_reduced_system(&state, 1e-3, &params, &space, &cfg, None);
        let matrix = system.flatten();
        g.bench_function(BenchmarkId::new("lu_factor", n), |b| {
            b.iter(|| SparseLu::factor(black_box(&matrix)).unwrap())
        });
        g.bench_function(BenchmarkId::new("step", n), |b| {
            b.iter(|| step_reduced(black_box(&state), 1e-3, &params, &space, &cfg).unwrap())
        });
    }
    g.finish();
}

fn topology(c: &mut Criterion) {
    let space = sphere(5);
    let (state, _) = baseline_state(&space);
    c.bench_function("connected_components/6146", |b| {
        b.iter(|| connected_components(black_box(&state.phi), 0.0, &space).unwrap())
    });
}

criterion_group!(benches, assembly, matvec, reduced_step, topology);
criterion_main!(benches);
