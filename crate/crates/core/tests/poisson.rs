use num_complex::Complex64;
use perlick::poisson::{
    bracket, default_threshold, sample_points, verify_full_algebra, verify_relation, FnPhase, Observables,
    RelationRegistry, SampleBox,
};
use perlick::{Error, ModelParams};

#[test]
fn full_algebra_holds_on_each_geometry() {
    for (k, m, n) in [(-0.5, 1, 2), (0.0, 2, 3), (2.0, 3, 1)] {
        let params = ModelParams::new(k, m, n).unwrap();
        let points = sample_points(&params, &SampleBox::for_params(&params), 40, 7);
        let reports = verify_full_algebra(&params, &points).unwrap();
        assert_eq!(reports.len(), RelationRegistry::standard(&params).unwrap().len());
        for r in &reports {
            assert!(r.passed(), "kappa {k} beta {m}/{n}: {} max_rel {:e}", r.relation, r.max_rel);
            assert_eq!(r.n + r.skipped, points.len());
            assert_eq!(r.threshold, default_threshold(&params));
        }
    }
}

#[test]
fn a_false_relation_is_reported() {
    let params = ModelParams::new(0.0, 1, 1).unwrap();
    let obs = Observables::new(params).unwrap();
    let (h, x) = (obs.get("H").unwrap(), obs.get("X+").unwrap());
    let points = sample_points(&params, &SampleBox::for_params(&params), 25, 1);
    // {H, X+} vanishes; claiming it equals X+ must fail everywhere
    let report = verify_relation("{H,X+}=X+", (h.as_ref(), x.as_ref()), x.as_ref(), &points, 1e-6).unwrap();
    assert!(!report.passed());
    assert_eq!(report.failures.len(), 25);
    assert!(report.failures.windows(2).all(|w| w[0].index < w[1].index));
}

#[test]
fn canonical_coordinates() {
    let params = ModelParams::new(1.0, 1, 1).unwrap();
    let coord = |i: usize| FnPhase::real(format!("q{i}"), move |p| Ok(p.to_array()[i]));
    let points = sample_points(&params, &SampleBox::for_params(&params), 10, 3);
    for p in &points {
        for i in 0..3 {
            for j in 0..3 {
                let qp = bracket(coord(i).as_ref(), coord(j + 3).as_ref(), p).unwrap();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((qp - Complex64::new(expected, 0.0)).norm() < 1e-9);
                let qq = bracket(coord(i).as_ref(), coord(j).as_ref(), p).unwrap();
                assert!(qq.norm() < 1e-9);
            }
        }
    }
}

#[test]
fn sampler_is_seeded_and_respects_the_box() {
    let params = ModelParams::new(1.0, 2, 1).unwrap();
    let b = SampleBox::for_params(&params);
    let a1 = sample_points(&params, &b, 100, 42);
    assert_eq!(a1, sample_points(&params, &b, 100, 42));
    assert_ne!(a1, sample_points(&params, &b, 100, 43));
    let equator = params.kappa.equator().unwrap();
    for p in &a1 {
        assert!(p.xi >= b.xi.0 && p.xi <= b.xi.1);
        assert!((p.xi - equator).abs() >= b.margin);
        assert!(p.p_phi > 0.0);
    }
}

#[test]
fn constants_need_zero_offset() {
    let params = ModelParams::new(0.0, 1, 1).unwrap().with_offset(0.5).unwrap();
    assert!(matches!(Observables::new(params), Err(Error::NonZeroOffset(_))));
    assert!(matches!(verify_full_algebra(&ModelParams::new(0.0, 1, 1).unwrap(), &[]), Err(Error::EmptySample)));
}
