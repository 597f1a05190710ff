use hlkernel::dforms::{dbar_poly, parse_test_form, Family, Form};
use hlkernel::geom::{ball, pinched, DomainSpec, Poly};
use hlkernel::jet::C64;
use hlkernel::quad::{mc_integral, sample, Region};
use proptest::prelude::*;

fn point(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -0.5f64..0.5), n)
        .prop_map(|v| v.into_iter().map(|(a, b)| C64::new(a, b)).collect())
}

fn domains() -> Vec<DomainSpec> {
    vec![ball(2), pinched()]
}

proptest! {
    #[test]
    fn hefer_coefficients_reproduce_the_levi_polynomial(zeta in point(2), z in point(2)) {
        for d in domains() {
            let h = d.hefer(&zeta, &z);
            let lhs: C64 = (0..2).map(|j| h[j] * (zeta[j] - z[j])).sum();
            let f = d.levi_polynomial(&zeta, &z);
            prop_assert!((lhs - f).norm() <= 1e-12 * (1.0 + f.norm()), "{}: {lhs} vs {f}", d.name);
        }
    }

    #[test]
    fn rho2_is_symmetric_and_nonnegative(zeta in point(2), z in point(2)) {
        for d in domains() {
            let a = d.rho2(&zeta, &z);
            prop_assert_eq!(a, d.rho2(&z, &zeta));
            prop_assert!(a >= 0.0);
        }
    }

    #[test]
    fn p_eps_is_nonnegative_inside(zeta in point(2), z in point(2), eps in 0.0f64..0.1) {
        for d in domains() {
            if d.r_eps(&zeta, eps) < 0.0 && d.r_eps(&z, eps) < 0.0 {
                if let Ok(p) = d.p_eps(&zeta, &z, eps) {
                    prop_assert!(p >= 0.0);
                }
            }
        }
    }

    #[test]
    fn dbar_squares_to_zero(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let f = parse_test_form(&format!("{a}*zbar1^2*z2*dzbar2 + {b}*zbar2*zbar1*dzbar1 + z1*zbar2^3"), 2).unwrap();
        let pt = [C64::new(0.3, -0.1), C64::new(a / 4.0, b / 4.0)];
        let twice = dbar_poly(&dbar_poly(&f));
        prop_assert!(twice.terms().iter().all(|(_, p)| p.eval(&pt).norm() < 1e-12));
    }

    #[test]
    fn one_forms_anticommute(j in 0usize..2, k in 0usize..2) {
        let one = || Poly::constant(C64::new(1.0, 0.0), 2);
        let a: Form<Poly> = Form::basis(2, Family::DZetaBar, j, one()).unwrap();
        let b: Form<Poly> = Form::basis(2, Family::DZeta, k, one()).unwrap();
        let ab = a.wedge(&b);
        let ba = b.wedge(&a);
        let pt = [C64::new(0.0, 0.0); 2];
        prop_assert!(ab.add(&ba).terms().iter().all(|(_, p)| p.eval(&pt).norm() == 0.0));
    }
}

#[test]
fn samples_respect_their_region() {
    let d = pinched();
    let s = sample(&d, Region::Interior { eps: 0.05 }, 5000, 3).unwrap();
    assert!((0..s.len()).all(|i| d.r_eps(&s.point(i), 0.05) < 0.0));
    let s = sample(&d, Region::Boundary { eps: 0.05, band: 0.02, gamma_min: 0.0 }, 2000, 3).unwrap();
    assert!((0..s.len()).all(|i| d.r_eps(&s.point(i), 0.05).abs() < 1e-9));
}

#[test]
fn sampling_does_not_depend_on_the_thread_count() {
    let d = ball(2);
    let region = Region::Interior { eps: 0.0 };
    let many = sample(&d, region, 10_000, 11).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let one = pool.install(|| sample(&d, region, 10_000, 11).unwrap());
    assert_eq!(many.coords, one.coords);
    assert_eq!(many.tries, one.tries);
}

#[test]
fn ball_volume_and_sphere_area() {
    let d = ball(2);
    let one = |_: &[C64]| Ok(C64::new(1.0, 0.0));
    let s = sample(&d, Region::Interior { eps: 0.0 }, 100_000, 5).unwrap();
    let v = mc_integral(&one, &s).unwrap();
    let exact = std::f64::consts::PI.powi(2) / 2.0;
    assert!((v.re - exact).abs() < 4.0 * v.std_error, "{} +- {}", v.re, v.std_error);
    let s = sample(&d, Region::Boundary { eps: 0.0, band: 0.02, gamma_min: 0.0 }, 100_000, 5).unwrap();
    let a = mc_integral(&one, &s).unwrap();
    let exact = 2.0 * std::f64::consts::PI.powi(2);
    assert!((a.re - exact).abs() < 4.0 * a.std_error + 0.02 * exact, "{} +- {}", a.re, a.std_error);
}
