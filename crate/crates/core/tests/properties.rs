use std::sync::Arc;

use proptest::prelude::*;

use zonalflow::fields::{
    fprime_from_f, zonal_from_f, Gaussian, PowerOfC1, RadialFn, Scaled, SharedRadial,
};
use zonalflow::geometry::{solve_profile, ProfileCurve, ProfileSettings, SurfaceSpec};
use zonalflow::misiolek::{
    build_wh, divfree_from_stream, mc_direct, mc_formula_wh, mc_reduced, FourierPotential,
    MCOptions, PerturbationH,
};
use zonalflow::stability::{check_arnold_with, lambda1, ArnoldSettings};

fn profile(a: f64, b: f64) -> Arc<ProfileCurve> {
    Arc::new(solve_profile(SurfaceSpec::new(a, b).unwrap(), &ProfileSettings::default()).unwrap())
}

fn close(x: f64, y: f64, rel: f64) -> bool {
    (x - y).abs() <= 1e-10f64.max(rel * x.abs().max(y.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn profile_parity_and_constraints(a in 1.0f64..3.5, b in 0.05f64..0.9, t in 0.0f64..1.0) {
        let p = profile(a, b);
        let r = t * p.r_b();
        let x = p.point(r).unwrap();
        let y = p.point(-r).unwrap();
        prop_assert!((x.c1 - y.c1).abs() <= 1e-12);
        prop_assert!((x.c2 + y.c2).abs() <= 1e-12);
        prop_assert!((x.c1 * x.c1 - a * a * (1.0 - x.c2 * x.c2)).abs() <= 1e-8);
        prop_assert!((x.dc1 * x.dc1 + x.dc2 * x.dc2 - 1.0).abs() <= 1e-8);
        prop_assert!(x.c1 > 0.0 && x.dc2 > 0.0);
        if r > 0.0 {
            prop_assert!(x.dc1 < 0.0 && y.dc1 > 0.0);
        }
        prop_assert!(x.epsilon_radicand() >= -1e-8);
    }

    #[test]
    fn fprime_is_scale_invariant(c in 0.01f64..100.0, kappa in 0.5f64..8.0, t in -1.0f64..1.0) {
        let p = profile(2.0, 0.5);
        let f: SharedRadial = Arc::new(Gaussian { delta: 0.05, kappa });
        let cf = Scaled(c, f.clone());
        let r = t * p.r_b();
        let x = fprime_from_f(f.as_ref(), &p, r).unwrap();
        let y = fprime_from_f(&cf, &p, r).unwrap();
        prop_assert!(close(x, y, 1e-12));
    }

    #[test]
    fn mc_is_quadratic_in_both_fields(c in -3.0f64..3.0, w in 0.1f64..0.9) {
        prop_assume!(c.abs() > 0.05);
        let p = profile(1.5, 0.5);
        let f: SharedRadial = Arc::new(PowerOfC1 { profile: p.clone(), delta: 0.01, p: 6.0 });
        let z = zonal_from_f(f, p.clone());
        let h = PerturbationH::plateau(&p, w).unwrap();
        let opts = MCOptions::default();
        let base = mc_formula_wh(z.profile_fn.as_ref(), &h, &p, &opts).unwrap().value;
        let scaled = mc_formula_wh(z.scaled(c).profile_fn.as_ref(), &h, &p, &opts).unwrap().value;
        prop_assert!(close(scaled, c * c * base, 1e-9));
        let ch = PerturbationH::custom(Arc::new(Scaled(c, Arc::new(h.clone()))), &p).unwrap();
        let scaled = mc_formula_wh(z.profile_fn.as_ref(), &ch, &p, &opts).unwrap().value;
        prop_assert!(close(scaled, c * c * base, 1e-9));
    }

    #[test]
    fn rotating_a_stream_field_leaves_mc_unchanged(
        coeffs in proptest::collection::vec(-1.0f64..1.0, 6),
        phase in -3.0f64..3.0,
    ) {
        let p = profile(2.0, 0.7);
        let f: SharedRadial = Arc::new(Gaussian { delta: 0.1, kappa: 2.0 });
        let z = zonal_from_f(f, p.clone());
        let modes = vec![
            (1, coeffs[0..2].to_vec(), coeffs[2..3].to_vec()),
            (2, coeffs[3..4].to_vec(), coeffs[4..6].to_vec()),
        ];
        let pot = FourierPotential::vanishing_at_boundary(p.r_b(), &modes);
        let opts = MCOptions { theta_nodes: 64, ..MCOptions::default() };
        let w0 = divfree_from_stream(Arc::new(pot.clone()), p.clone()).unwrap();
        let w1 = divfree_from_stream(Arc::new(pot.with_phase(phase)), p.clone()).unwrap();
        let a = mc_direct(&z, &w0, &p, &opts).unwrap().value;
        let b = mc_direct(&z, &w1, &p, &opts).unwrap().value;
        let c = mc_reduced(z.profile_fn.as_ref(), &w1, &p, &opts).unwrap().value;
        prop_assert!(close(a, b, 1e-9));
        prop_assert!(close(b, c, 1e-6));
    }

    #[test]
    fn sphere_mc_is_nonpositive(b in 0.1f64..0.9, w in 0.05f64..0.95, kappa in 0.1f64..10.0) {
        let p = profile(1.0, b);
        let f: SharedRadial = Arc::new(Gaussian { delta: 0.01, kappa });
        let z = zonal_from_f(f, p.clone());
        let h = PerturbationH::plateau(&p, w).unwrap();
        let v = mc_formula_wh(z.profile_fn.as_ref(), &h, &p, &MCOptions::default()).unwrap().value;
        prop_assert!(v < 0.0);
    }
}

#[test]
fn arnold_verdict_is_scale_invariant() {
    let p = profile(2.0, 0.5);
    let lam = lambda1(&p).unwrap();
    let settings = ArnoldSettings::default();
    for f in [
        Arc::new(Gaussian {
            delta: 0.5,
            kappa: 1.0,
        }) as SharedRadial,
        Arc::new(PowerOfC1 {
            profile: p.clone(),
            delta: 1e-3,
            p: 3.0,
        }),
    ] {
        let base = check_arnold_with(f.as_ref(), &p, &lam, &settings).unwrap();
        for c in [1e-3, 0.5, 7.0] {
            let r = check_arnold_with(&Scaled(c, f.clone()), &p, &lam, &settings).unwrap();
            assert_eq!(r.verdict, base.verdict);
            assert!(close(r.fprime_min, base.fprime_min, 1e-12));
            assert!(close(r.fprime_max, base.fprime_max, 1e-12));
        }
    }
}

#[test]
fn wh_methods_agree_across_surfaces() {
    let opts = MCOptions::default();
    for (a, b) in [(1.2, 0.3), (2.5, 0.6), (3.0, 0.9)] {
        let p = profile(a, b);
        let f: SharedRadial = Arc::new(PowerOfC1 {
            profile: p.clone(),
            delta: 1e-3,
            p: 12.0,
        });
        let z = zonal_from_f(f, p.clone());
        for w in [0.15, 0.5, 0.85] {
            let h = PerturbationH::plateau(&p, w).unwrap();
            let wh = build_wh(h.clone(), p.clone()).unwrap();
            let x = mc_formula_wh(z.profile_fn.as_ref(), &h, &p, &opts)
                .unwrap()
                .value;
            let y = mc_reduced(z.profile_fn.as_ref(), &wh, &p, &opts)
                .unwrap()
                .value;
            let u = mc_direct(&z, &wh, &p, &opts).unwrap().value;
            assert!(
                close(x, y, 1e-6) && close(y, u, 1e-6),
                "{a} {b} {w}: {x} {y} {u}"
            );
        }
    }
}

#[test]
fn radial_functions_expose_consistent_values() {
    let p = profile(2.0, 0.5);
    let f = PowerOfC1 {
        profile: p.clone(),
        delta: 1e-2,
        p: 4.0,
    };
    for r in p.grid(9) {
        assert_eq!(f.value(r).unwrap(), f.jet(r).unwrap().v);
    }
}
