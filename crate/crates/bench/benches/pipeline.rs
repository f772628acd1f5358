use criterion::{black_box, criterion_group, criterion_main, Criterion};

use arisim_core::channel::{bessel_j, ChannelSet};
use arisim_core::rng;
use arisim_core::scenario::{sample_topology, ScenarioConfig};
use arisim_core::txbf::{build_xi, initial_beamformers, solve_w_subproblem, update_xi_aux};
use arisim_core::reflect::{build_lambda, solve_v_subproblem, update_mu_aux};
use nalgebra::{Complex, DMatrix, DVector};

fn bench_bessel(c: &mut Criterion) {
    c.bench_function("bessel_j1_mixed_range", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            let mut x = 0.1;
            while x < 40.0 {
                acc += bessel_j(1, black_box(x)).unwrap();
                acc += bessel_j(3, black_box(x)).unwrap();
                x += 0.37;
            }
            acc
        })
    });
}

fn bench_channel_synthesis(c: &mut Criterion) {
    let cfg = ScenarioConfig::desk();
    let topo = sample_topology(&cfg, 1);
    c.bench_function("channel_synthesis_desk", |b| {
        b.iter(|| ChannelSet::synthesize(&cfg, &topo, black_box(&topo.aris_initial), 1))
    });
}

fn bench_w_subproblem(c: &mut Criterion) {
    let cfg = ScenarioConfig::desk();
    let topo = sample_topology(&cfg, 2);
    let ch = ChannelSet::synthesize(&cfg, &topo, &topo.aris_initial, 2);
    let mut chi = DMatrix::zeros(cfg.aris_count, cfg.groups);
    for j in 0..cfg.aris_count {
        chi[(j, j)] = 1.0;
    }
    let theta: Vec<DVector<f64>> =
        (0..cfg.aris_count).map(|_| DVector::zeros(cfg.subsurfaces)).collect();
    let xi = build_xi(&ch, &topo, &theta, &chi);
    let w0 = initial_beamformers(&ch, &topo, &cfg, &theta, &chi);
    let w_mats: Vec<DMatrix<Complex<f64>>> = w0.iter().map(|w| w * w.adjoint()).collect();
    let aux = update_xi_aux(&w_mats, &xi, &topo);
    c.bench_function("transmit_sdp_desk", |b| {
        b.iter(|| solve_w_subproblem(black_box(&aux), &xi, &topo, &cfg).unwrap())
    });
}

fn bench_v_subproblem(c: &mut Criterion) {
    let cfg = ScenarioConfig::desk();
    let topo = sample_topology(&cfg, 3);
    let ch = ChannelSet::synthesize(&cfg, &topo, &topo.aris_initial, 3);
    let mut chi = DMatrix::zeros(cfg.aris_count, cfg.groups);
    for j in 0..cfg.aris_count {
        chi[(j, j)] = 1.0;
    }
    let theta: Vec<DVector<f64>> =
        (0..cfg.aris_count).map(|_| DVector::zeros(cfg.subsurfaces)).collect();
    let w = initial_beamformers(&ch, &topo, &cfg, &theta, &chi);
    let lambdas = build_lambda(&ch, &topo, &w, 0, 0);
    let dim = cfg.subsurfaces + 1;
    let v0 = DMatrix::from_diagonal_element(dim, dim, Complex::new(1.0, 0.0));
    let aux = update_mu_aux(&v0, &lambdas, &topo, 0);
    c.bench_function("reflection_sdp_desk", |b| {
        b.iter(|| solve_v_subproblem(black_box(&aux), &lambdas, &topo, &cfg, 0).unwrap())
    });
    let _ = rng::stream(0, "bench", &[]);
}

criterion_group!(
    benches,
    bench_bessel,
    bench_channel_synthesis,
    bench_w_subproblem,
    bench_v_subproblem
);
criterion_main!(benches);
