use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use zonalflow::fields::{zonal_from_f, PowerOfC1, SharedRadial};
use zonalflow::geometry::{solve_profile, ProfileSettings, SurfaceSpec};
use zonalflow::misiolek::{
    build_wh, mc_direct, mc_formula_wh, mc_reduced, MCOptions, PerturbationH,
};
use zonalflow::stability::{lambda1, lambda1_mode};

fn kernels(c: &mut Criterion) {
    let spec = SurfaceSpec::new(2.0, 0.5).unwrap();
    let settings = ProfileSettings::default();
    c.bench_function("solve_profile", |b| {
        b.iter(|| solve_profile(spec, &settings).unwrap())
    });

    let profile = Arc::new(solve_profile(spec, &settings).unwrap());
    c.bench_function("lambda1_mode_512", |b| {
        b.iter(|| lambda1_mode(&profile, 0, 512).unwrap())
    });
    c.bench_function("lambda1", |b| b.iter(|| lambda1(&profile).unwrap()));

    let f: SharedRadial = Arc::new(PowerOfC1 {
        profile: profile.clone(),
        delta: 1e-3,
        p: 8.0,
    });
    let z = zonal_from_f(f, profile.clone());
    let h = PerturbationH::plateau(&profile, 0.4).unwrap();
    let wh = build_wh(h.clone(), profile.clone()).unwrap();
    let opts = MCOptions::default();
    let mut group = c.benchmark_group("mc");
    group.bench_function("formula_1d", |b| {
        b.iter(|| mc_formula_wh(z.profile_fn.as_ref(), &h, &profile, &opts).unwrap())
    });
    group.bench_function("reduced_2d", |b| {
        b.iter(|| mc_reduced(z.profile_fn.as_ref(), &wh, &profile, &opts).unwrap())
    });
    group.bench_function("direct", |b| {
        b.iter(|| mc_direct(&z, &wh, &profile, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
