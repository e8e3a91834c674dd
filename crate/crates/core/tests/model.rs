use itosym::integrate::wiener_path;
use itosym::{CaseParams, Domain, NoiseSpec, SdeProblem, WienerPath};
use proptest::prelude::*;

proptest! {
    #[test]
    fn noise_round_trips(s in 0.1f64..3.0, k in prop::sample::select(vec![-1.0, 0.5, 2.0, 3.0]), constant: bool) {
        let n = if constant { NoiseSpec::constant(s) } else { NoiseSpec::simple(s, k) };
        let back: NoiseSpec = serde_json::from_str(&serde_json::to_string(&n).unwrap()).unwrap();
        prop_assert_eq!(n, back);
    }

    #[test]
    fn case_params_round_trip(c0 in -2.0f64..2.0, c1 in 0.1f64..2.0, beta in 0.1f64..1.5) {
        let p = CaseParams::c_case(c0, c1, beta);
        let back: CaseParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        prop_assert_eq!(p, back);
    }

    #[test]
    fn domain_round_trips(lo in -5.0f64..0.0, hi in 0.1f64..5.0, open_lo: bool, open_hi: bool) {
        let d = Domain::new(if open_lo { f64::NEG_INFINITY } else { lo }, if open_hi { f64::INFINITY } else { hi });
        let back: Domain = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        prop_assert_eq!(d, back);
    }

    #[test]
    fn wiener_paths_round_trip(seed: u64, index in 0u64..1000) {
        let w = wiener_path(seed, index, 0.0, 1.0, 16).unwrap();
        let back: WienerPath = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
        prop_assert_eq!(w, back);
    }

    #[test]
    fn path_index_selects_distinct_paths(seed: u64, index in 0u64..1000) {
        let a = wiener_path(seed, index, 0.0, 1.0, 8).unwrap();
        let b = wiener_path(seed, index + 1, 0.0, 1.0, 8).unwrap();
        prop_assert_eq!(&a, &wiener_path(seed, index, 0.0, 1.0, 8).unwrap());
        prop_assert_ne!(a.values, b.values);
    }
}

#[test]
fn problem_document_round_trips() {
    let src = r#"{"drift":{"family":"B","params":{"c0":1.0,"c1":-2.0}},"noise":{"kind":"simple","s":1.0,"k":2.0},"domain":[0.0,null]}"#;
    let p: SdeProblem = serde_json::from_str(src).unwrap();
    let back: SdeProblem = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
    assert_eq!(p, back);
    assert_eq!(p.domain, Domain::positive());
}
