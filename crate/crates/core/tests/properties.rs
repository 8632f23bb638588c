//! Property tests for the algebraic and geometric invariants.

use std::f64::consts::TAU;
use std::sync::Arc;

use elliptic_rigidity::curve::{CurveK, CurveSpec};
use elliptic_rigidity::field::{CertifyOptions, ExtendMode, FieldG, HExtension, Which};
use elliptic_rigidity::io::{gridmap_to_string, parse_gridmap};
use elliptic_rigidity::matrix::{Mat2, Mat3};
use elliptic_rigidity::pde::{Grid2D, GridMap};
use elliptic_rigidity::t4::laminate::{laminate_map, staircase_laminate};
use elliptic_rigidity::t4::{Pi3, T4Config};
use num_complex::Complex64;
use proptest::prelude::*;

fn mat2() -> impl Strategy<Value = Mat2> {
    prop::array::uniform4(-10.0f64..10.0).prop_map(Mat2::from_vec4)
}

fn mat3() -> impl Strategy<Value = Mat3> {
    prop::array::uniform3(prop::array::uniform3(-5.0f64..5.0)).prop_map(Mat3::new)
}

fn kc_fields(c: f64) -> (Arc<HExtension>, FieldG, FieldG) {
    let k = CurveK::build(&CurveSpec::kc(c), 256).unwrap();
    let h = Arc::new(HExtension::extend(&k, ExtendMode::ClosedForm, 2.0 * k.radius(), 64, 0.0).unwrap());
    let opts = CertifyOptions { n_pairs: 2000, ..Default::default() };
    (h.clone(), FieldG::new(h.clone(), Which::G1, opts).unwrap(), FieldG::new(h, Which::G2, opts).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn conformal_split_identities(a in mat2()) {
        let p = a.decompose();
        let (zp, zm) = (p.zp.norm(), p.zm.norm());
        let scale = a.frob_sq().max(1e-300);
        prop_assert!((a.det() - (zp * zp - zm * zm)).abs() <= 1e-12 * scale);
        prop_assert!((a.frob_sq() - 2.0 * (zp * zp + zm * zm)).abs() <= 1e-12 * scale);
        prop_assert!((a.sigma1() - (zp + zm)).abs() <= 1e-12 * a.frob().max(1e-300));
        prop_assert!((a.sigma2() - (zp - zm).abs()).abs() <= 1e-12 * a.frob().max(1e-300));
    }

    #[test]
    fn rows_as_complex_numbers(a in mat2()) {
        let p = a.decompose();
        let r1 = p.zp.conj() + p.zm;
        let r2 = Complex64::i() * (p.zp.conj() - p.zm);
        prop_assert!((a.row1() - r1).norm() <= 1e-12 * a.frob().max(1.0));
        prop_assert!((a.row2() - r2).norm() <= 1e-12 * a.frob().max(1.0));
    }

    #[test]
    fn sigma2_3x3_matches_svd(m in mat3()) {
        let n = nalgebra::Matrix3::from_fn(|i, j| m[(i, j)]);
        let mut s: Vec<f64> = n.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        prop_assert!((m.sigma1() - s[0]).abs() <= 1e-9 * s[0].max(1.0));
        prop_assert!((m.sigma2() - s[1]).abs() <= 1e-8 * s[0].max(1.0));
    }

    #[test]
    fn rank_one_3x3_has_zero_sigma2(b in prop::array::uniform3(-3.0f64..3.0), n in prop::array::uniform3(-3.0f64..3.0)) {
        let m = Mat3::outer(b, n);
        prop_assert!(m.sigma2() <= 1e-12 * m.frob().max(1.0));
    }

    #[test]
    fn curve_spec_display_round_trips(c in 0.0f64..0.9, r in 0.1f64..5.0, which in 0usize..3) {
        let spec = match which {
            0 => CurveSpec::so2(),
            1 => CurveSpec::kc(c),
            _ => CurveSpec::winding2(c * 0.4),
        }.scaled(r);
        prop_assert_eq!(CurveSpec::parse(&spec.to_string()).unwrap(), spec);
    }

    #[test]
    fn gridmap_text_round_trips(seed in any::<u64>(), n in 17usize..24) {
        let g = Grid2D::new(1.0 + (seed % 7) as f64, n).unwrap();
        let s = (seed % 1000) as f64 / 1000.0;
        let u = GridMap::from_fn(g, |x, y| [(x * s).sin() * 1e-7, y.exp() * s]);
        prop_assert_eq!(parse_gridmap(&gridmap_to_string(&u)).unwrap(), u);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kc_fields_are_uniformly_monotone(c in 0.05f64..0.8, a in prop::array::uniform2(-3.0f64..3.0), b in prop::array::uniform2(-3.0f64..3.0)) {
        let (_, g1, g2) = kc_fields(c);
        for g in [&g1, &g2] {
            let (ga, gb) = (g.eval(a).unwrap(), g.eval(b).unwrap());
            let d = [a[0] - b[0], a[1] - b[1]];
            let d2 = d[0] * d[0] + d[1] * d[1];
            let mono = (ga[0] - gb[0]) * d[0] + (ga[1] - gb[1]) * d[1];
            let lip2 = (ga[0] - gb[0]).powi(2) + (ga[1] - gb[1]).powi(2);
            prop_assert!(mono >= g.lambda * d2 - 1e-9 * (1.0 + d2));
            prop_assert!(lip2 <= g.big_lambda.powi(2) * d2 + 1e-9 * (1.0 + d2));
        }
    }

    #[test]
    fn inverse_of_f_round_trips(c in 0.0f64..0.8, r in 0.0f64..5.0, th in 0.0f64..TAU) {
        let (h, _, _) = kc_fields(c);
        let w = Complex64::from_polar(r, th);
        let (z, _) = h.invert_f(w, 1e-14).unwrap();
        prop_assert!((h.f(z) - w).norm() <= 1e-12 * w.norm().max(1.0));
    }

    #[test]
    fn projection_is_nearest_sample(a in mat2(), which in 0usize..3) {
        let spec = [CurveSpec::so2(), CurveSpec::kc(0.5), CurveSpec::winding2(0.2)][which].clone();
        let k = CurveK::build(&spec, 512).unwrap();
        let p = k.project(&a);
        let brute = k.m.iter().map(|m| (*m - a).frob()).fold(f64::INFINITY, f64::min);
        prop_assert!(p.dist <= brute + 1e-12);
        prop_assert!(((p.point - a).frob() - p.dist).abs() <= 1e-12 * (1.0 + p.dist));
    }

    #[test]
    fn staircase_preserves_barycenter(a in 0.2f64..3.0, n in 0usize..60) {
        let Ok(cfg) = T4Config::new(a) else { return Ok(()); };
        let nu = staircase_laminate(&cfg, n);
        prop_assert!((nu.total_weight() - 1.0).abs() <= 1e-14);
        prop_assert!((nu.barycenter() - cfg.c[0]).max_abs() <= 1e-13 * (1.0 + a));
        let residual = nu.atoms.last().unwrap().1;
        prop_assert!((residual / (a / (2.0 + a)).powi(n as i32) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn laminate_matches_affine_data_on_boundary(w in 0.05f64..0.95, stripes in 3usize..40, s in 0.0f64..1.0, k in 0usize..4) {
        let cfg = T4Config::new(1.0).unwrap();
        let lam = laminate_map(cfg.t[k], cfg.c[(k + 1) % 4], w, stripes).unwrap();
        let f = lam.mean_gradient();
        for x in [[s, 0.0], [s, 1.0], [0.0, s], [1.0, s]] {
            let want = f.apply([x[0], x[1], 0.0]);
            let got = lam.value(x);
            for r in 0..3 {
                prop_assert!((got[r] - want[r]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rho_properties_at_random_points(seed in 0u64..50, th in -10.0f64..10.0) {
        let pi3 = Pi3::new(T4Config::new(1.0).unwrap(), 0.02, seed).unwrap();
        let r = &pi3.rho;
        prop_assert!(r.deriv(th) >= 0.5);
        prop_assert!((r.eval(th) - th).abs() < 0.02);
        prop_assert!((r.eval(th + TAU) - r.eval(th) - TAU).abs() <= 1e-12);
        prop_assert!((pi3.gamma(th + TAU) - pi3.gamma(th)).max_abs() <= 1e-9);
    }
}
