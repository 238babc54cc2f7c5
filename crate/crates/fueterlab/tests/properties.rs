use fueterlab::diagnostics::sublevel_energy;
use fueterlab::fueter_families::{sup_norm, EnergyModel, FueterFamily, ProductGeometry};
use fueterlab::multivalued::{classical_dirichlet, dirichlet_energy, lipschitz_approx, pair_distance, TwoValuedField};
use fueterlab::rational_maps::{to_quotient, u1_act, u1_act_quotient, MonopoleRep, Z2Point3, SLICE_TOL};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, 3)
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

fn slice_point() -> impl Strategy<Value = MonopoleRep> {
    (-3.0..3.0f64, -3.0..3.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(a, b, c, d)| {
        let a1 = C64::new(a, b);
        let b0 = C64::new(c, d);
        MonopoleRep::new((1.0 - b0 * a1 * a1).sqrt(), a1, b0)
    })
}

proptest! {
    #[test]
    fn pair_distance_is_a_metric_on_sign_classes(a in vec3(), b in vec3(), c in vec3()) {
        let ab = pair_distance(&a, &b).unwrap();
        let bc = pair_distance(&b, &c).unwrap();
        let ac = pair_distance(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!((ab - pair_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((ab - pair_distance(&neg(&a), &b).unwrap()).abs() < 1e-12);
        prop_assert_eq!(pair_distance(&a, &neg(&a)).unwrap(), 0.0);
    }

    #[test]
    fn z2_point_distance_matches_pair_distance(a in vec3(), b in vec3()) {
        let p = Z2Point3 { x: [a[0], a[1], a[2]] };
        let q = Z2Point3 { x: [b[0], b[1], b[2]] };
        prop_assert!((p.distance(&q) - pair_distance(&a, &b).unwrap()).abs() < 1e-12);
        prop_assert_eq!(p.canonical().distance(&p), 0.0);
    }

    #[test]
    fn circle_action_preserves_the_slice(m in slice_point(), theta in 0.0..std::f64::consts::TAU) {
        let lam = C64::from_polar(1.0, theta);
        let acted = u1_act(lam, &m).unwrap();
        prop_assert!(acted.slice_residual() <= SLICE_TOL * (1.0 + m.b0.norm() * m.a1.norm_sqr()));
        let q = to_quotient(&m).unwrap();
        let (r1, r2) = q.residuals();
        prop_assert!(r1 <= 1e-12 * (1.0 + q.z2.norm_sqr()));
        prop_assert!(r2 <= 1e-12 * (1.0 + (q.z3 * q.z4).norm()));
        let qa = to_quotient(&acted).unwrap();
        let qb = u1_act_quotient(lam, &q);
        let scale = 1.0 + q.z1.norm() + q.z2.norm() + q.z3.norm() + q.z4.norm();
        for (x, y) in [(qa.z1, qb.z1), (qa.z2, qb.z2), (qa.z3, qb.z3), (qa.z4, qb.z4)] {
            prop_assert!((x - y).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn dirichlet_energy_is_classical_for_single_valued_fields(
        c in 2.0..5.0f64, g in prop::collection::vec(-1.0..1.0f64, 3), n in 4usize..10
    ) {
        let f = TwoValuedField::from_fn([n, n, n], 0.05, [0.0; 3], 3, |x| {
            vec![c + g[0] * x[0], g[1] * x[1], g[2] * x[2]]
        });
        let d = dirichlet_energy(&f, None).energy;
        let e = classical_dirichlet(&f);
        prop_assert!((d - e).abs() <= 1e-10 * e.max(1e-300), "aligned {d} vs classical {e}");
    }

    #[test]
    fn lipschitz_approximation_agrees_off_the_bad_set(k in 0.5..4.0f64, lam_log in 0.0..4.0f64) {
        let f = TwoValuedField::from_fn([24, 24, 1], 1.0 / 24.0, [-0.5, -0.5, 0.0], 2, |x| {
            let r = x[0].hypot(x[1]);
            vec![k * r * (x[0] - 0.1), x[1]]
        });
        let lam = 2f64.powf(lam_log);
        if let Ok(res) = lipschitz_approx(&f, lam, 1.0) {
            for idx in 0..f.len() {
                prop_assert_eq!(res.bad_set[idx], !res.omega_set[idx]);
                if res.omega_set[idx] {
                    prop_assert_eq!(res.field_lambda.value(idx), f.value(idx));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sup_norm_stays_in_the_log_band(log_lambda in 3.0..16.0f64) {
        let geom = ProductGeometry::sphere(32);
        let fam = FueterFamily::sphere_reference(log_lambda.exp());
        let n = sup_norm(&fam, &geom).unwrap();
        prop_assert!((n - log_lambda).abs() <= 1.0, "sup {n} at log lambda {log_lambda}");
    }

    #[test]
    fn sublevel_energy_is_monotone(log_lambda in 3.0..14.0f64, t in prop::collection::vec(0.0..20.0f64, 1..6)) {
        let geom = ProductGeometry::sphere(32);
        let fam = FueterFamily::sphere_reference(log_lambda.exp());
        let mut ts = t.clone();
        ts.sort_by(f64::total_cmp);
        let p = sublevel_energy(&EnergyModel::default(), &fam, &geom, &ts).unwrap();
        for w in p.es.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        prop_assert!(p.es.iter().all(|e| *e >= 0.0 && *e <= p.total * (1.0 + 1e-12)));
    }
}
