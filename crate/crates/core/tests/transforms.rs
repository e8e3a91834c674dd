use itosym::classifier::construct_drift;
use itosym::determining::{probe_points, residual_summary, Point};
use itosym::transforms::{standard_form, transform_sde, transform_symmetry, CoordinateMap};
use itosym::{Case, CaseParams, NoiseSpec, SdeProblem};
use proptest::prelude::*;

const KS: [f64; 4] = [-1.0, 0.5, 2.0, 3.0];

#[test]
fn xi_inverts_g_on_log_spaced_points() {
    for k in KS {
        let noise = NoiseSpec::simple(1.3, k);
        for i in 0..100 {
            let x = 10f64.powf(-2.0 + 4.0 * i as f64 / 99.0);
            let back = noise.xi(noise.g(x)).unwrap();
            assert!((back - x).abs() <= 1e-12 * x.max(1.0), "k={k}: {x} -> {back}");
        }
    }
}

proptest! {
    #[test]
    fn case_a_standard_drift_is_constant(
        c in -2.0f64..2.0,
        s in 0.5f64..2.0,
        k in prop::sample::select(KS.to_vec()),
        xs in prop::collection::vec((0.3f64..3.0, 0.3f64..3.0), 50),
    ) {
        let noise = NoiseSpec::simple(s, k);
        let p = SdeProblem::new(construct_drift(Case::A, &CaseParams::a_case(c), noise).unwrap(), noise);
        let sf = standard_form(&p).unwrap();
        for (x1, x2) in xs {
            let (f1, f2) = (sf.drift(noise.g(x1), 0.0).unwrap(), sf.drift(noise.g(x2), 0.0).unwrap());
            prop_assert!((f1 - f2).abs() <= 1e-9, "{f1} vs {f2}");
        }
    }

    #[test]
    fn affine_maps_carry_symmetries(
        scale in prop_oneof![-2.0f64..-0.5, 0.5f64..2.0],
        shift in -2.0f64..2.0,
        k in prop::sample::select(KS.to_vec()),
        case in prop::sample::select(vec![Case::A, Case::B, Case::C]),
    ) {
        let noise = NoiseSpec::simple(0.9, k);
        let params = match case {
            Case::A => CaseParams::a_case(0.6),
            Case::B => CaseParams::b_case(-0.3, 1.1),
            Case::C => CaseParams::c_case(0.2, -0.7, 0.5),
        };
        let p = SdeProblem::from_family(case, params, noise);
        let sym = p.family().unwrap().unwrap().symmetry(Some("exp(u)".parse().unwrap()));
        let map = CoordinateMap::affine(scale, shift).unwrap();
        let t = transform_sde(&p, &map).unwrap();
        let (tsym, warning) = transform_symmetry(&sym, &map, &p).unwrap();
        prop_assert!(warning.is_none());
        let pts: Vec<Point> = probe_points(11, 30)
            .into_iter()
            .map(|q| Point::new(scale * q.x + shift, q.t, q.w))
            .collect();
        let s = residual_summary(&t, &tsym, &pts).unwrap();
        prop_assert!(s.max() <= 1e-5, "{s:?}");
    }
}
