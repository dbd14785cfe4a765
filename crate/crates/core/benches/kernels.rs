//! Hot kernels timed on the parallel and the sequential path: lattice
//! enumeration for the Siegel theta function, Eisenstein γ-sums, the
//! approximate functional equation and the regularized-integral quadrature.
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use geogreen_core::eisenstein::{EisMethod, EisensteinContext};
use geogreen_core::lfunc::newform_job;
use geogreen_core::newform::{coefficients_from_curve, CurveSpec};
use geogreen_core::numeric::C64;
use geogreen_core::par::set_parallel;
use geogreen_core::qspace::{dual_and_discriminant, lattice_from_level, DEFAULT_MAX_DISC_ORDER};
use geogreen_core::quadorder::{field_from_disc, ring_class_group};
use geogreen_core::reglift::{j_input_on, reg_integral, unimodular_tube_lattice, LiftOptions, PointSource};
use geogreen_core::theta::{siegel_theta_22, ThetaOptions, TubePoint};
use std::hint::black_box;

const MODES: [(&str, bool); 2] = [("parallel", true), ("sequential", false)];

fn lattice_enumeration(c: &mut Criterion) {
    let (lat, disc) = unimodular_tube_lattice().unwrap();
    let z = TubePoint::new(C64::new(0.1, 1.3), C64::new(-0.2, 0.9)).unwrap();
    let tau = C64::new(0.05, 0.4);
    let opts = ThetaOptions { tol: 1e-12, ..Default::default() };
    let mut g = c.benchmark_group("lattice_enumeration");
    for (name, on) in MODES {
        set_parallel(on);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| siegel_theta_22(&lat, &disc, black_box(tau), &z, None, &opts).unwrap())
        });
    }
    g.finish();
}

fn eisenstein_gamma_sum(c: &mut Criterion) {
    let f = field_from_disc(5).unwrap();
    let r = ring_class_group(&f, 1, 1).unwrap();
    let (_, _, l2) = lattice_from_level(&r.reps[0], 1).unwrap();
    let d = dual_and_discriminant(&l2, DEFAULT_MAX_DISC_ORDER).unwrap();
    let ctx = EisensteinContext::new(&d).unwrap();
    let tau = C64::new(0.2, 1.1);
    let mut g = c.benchmark_group("eisenstein_gamma_sum");
    for (name, on) in MODES {
        set_parallel(on);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ctx.eval(black_box(tau), 3.0, 0, EisMethod::GammaSum { trunc_c: 80 }).unwrap())
        });
    }
    g.finish();
}

fn afe_sum(c: &mut Criterion) {
    let e = CurveSpec::curve_37a();
    let t = coefficients_from_curve(&e, 2000).unwrap();
    let job = newform_job("37a", &t, 37).unwrap();
    let mut g = c.benchmark_group("afe_sum");
    for (name, on) in MODES {
        set_parallel(on);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| job.completed_value(black_box(0.75)).unwrap())
        });
    }
    g.finish();
}

fn reg_integral_quadrature(c: &mut Criterion) {
    let (lat, disc) = unimodular_tube_lattice().unwrap();
    let j = j_input_on(&disc, 24).unwrap();
    let z = TubePoint::new(C64::new(0.1, 2.5), C64::new(-0.2, 0.9)).unwrap();
    let opts = LiftOptions { t_grid: vec![4.0, 8.0], s_probe: vec![], ..Default::default() };
    let mut g = c.benchmark_group("reg_integral_quadrature");
    g.sample_size(10);
    for (name, on) in MODES {
        set_parallel(on);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let src = PointSource::Tube { lattice: &lat, disc: &disc, z };
                reg_integral(&j, &src, &opts).unwrap()
            })
        });
    }
    g.finish();
    set_parallel(true);
}

criterion_group!(kernels, lattice_enumeration, eisenstein_gamma_sum, afe_sum, reg_integral_quadrature);
criterion_main!(kernels);
