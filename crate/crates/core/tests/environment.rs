use nchj::environment::{
    audit_assumptions, find_features, generate_constant, generate_mollified, generate_periodic,
    FeatureKind, KernelSpec, PotentialField, Process, Window,
};
use nchj::Error;

fn poisson(seed: u64, rate: f64, window: Window, h: f64) -> PotentialField {
    generate_mollified(
        seed,
        Process::Poisson,
        rate,
        KernelSpec::biweight(1.0),
        window,
        h,
    )
    .unwrap()
}

#[test]
fn mollified_fields_stay_in_unit_range_with_bounded_slope() {
    let k = KernelSpec::biweight(1.0);
    for seed in 0..20 {
        let f = poisson(seed, 1.0, Window::new(-10.0, 10.0), 0.05);
        assert!(f.min_value() >= 0.0 && f.max_value() <= 1.0);
        assert!(f.derivative_sup() <= k.sup_density() + 1e-12);
        let w = generate_mollified(
            seed,
            Process::Wiener,
            2.0,
            k,
            Window::new(-10.0, 10.0),
            0.05,
        )
        .unwrap();
        assert!(w.min_value() >= 0.0 && w.max_value() <= 1.0);
        assert!(w.derivative_sup() <= k.sup_derivative() * 2.0 * k.radius);
    }
}

#[test]
fn rejects_bad_kernels_and_coarse_grids() {
    let bad = KernelSpec {
        mass: 0.5,
        ..KernelSpec::biweight(1.0)
    };
    let w = Window::new(-5.0, 5.0);
    assert!(matches!(
        generate_mollified(1, Process::Poisson, 1.0, bad, w, 0.1),
        Err(Error::KernelNotNormalized { .. })
    ));
    assert!(matches!(
        generate_mollified(1, Process::Poisson, 1.0, KernelSpec::biweight(0.4), w, 0.25),
        Err(Error::Undersampled { .. })
    ));
}

#[test]
fn regeneration_is_bit_identical() {
    let f = poisson(42, 1.0, Window::new(-20.0, 20.0), 0.05);
    let g = f.spec().unwrap().build().unwrap();
    assert_eq!(f, g);
    assert_eq!(f.to_json().unwrap(), g.to_json().unwrap());
}

#[test]
fn json_round_trip_is_exact() {
    let f = generate_mollified(
        5,
        Process::Wiener,
        1.5,
        KernelSpec::triweight(1.0),
        Window::new(-8.0, 8.0),
        0.1,
    )
    .unwrap();
    let text = f.to_json().unwrap();
    let g = PotentialField::from_json(&text).unwrap();
    for (a, b) in f.values.iter().zip(&g.values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in f.derivative_values.iter().zip(&g.derivative_values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(text, g.to_json().unwrap());
    let dir = std::env::temp_dir().join(format!("nchj-env-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("field.json");
    f.save(&path).unwrap();
    assert_eq!(PotentialField::load(&path).unwrap(), f);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn version_mismatch_is_rejected() {
    let f = generate_constant(0.5, Window::new(0.0, 1.0), 0.5).unwrap();
    let text = f
        .to_json()
        .unwrap()
        .replace("\"format_version\":1", "\"format_version\":99");
    assert!(PotentialField::from_json(&text).is_err());
}

#[test]
fn overlapping_windows_see_the_same_realization() {
    for process in [Process::Poisson, Process::Wiener] {
        let k = KernelSpec::biweight(1.0);
        let a = generate_mollified(7, process, 1.0, k, Window::new(-10.0, 10.0), 0.05).unwrap();
        let b = generate_mollified(7, process, 1.0, k, Window::new(-5.0, 15.0), 0.05).unwrap();
        for i in 0..a.len() {
            let x = a.node(i);
            if b.window().contains(x) {
                assert_eq!(a.evaluate(x).unwrap(), b.evaluate(x).unwrap(), "node {x}");
            }
        }
        for j in 0..500 {
            let x = -4.9 + 0.0291 * j as f64;
            let (va, da) = a.evaluate(x).unwrap();
            let (vb, db) = b.evaluate(x).unwrap();
            assert!((va - vb).abs() <= 1e-12 && (da - db).abs() <= 1e-12);
        }
    }
}

#[test]
fn shifted_field_evaluates_at_offset() {
    let f = poisson(11, 1.0, Window::new(-10.0, 10.0), 0.05);
    let s = 2.35;
    let g = f.shifted(s).unwrap();
    for i in 0..f.len() {
        let x = f.node(i) - s;
        assert_eq!(g.evaluate(x).unwrap(), f.evaluate(f.node(i)).unwrap());
    }
    for j in 0..300 {
        let x = -7.0 + 0.0437 * j as f64;
        let (v0, d0) = g.evaluate(x).unwrap();
        let (v1, d1) = f.evaluate(x + s).unwrap();
        assert!((v0 - v1).abs() <= 1e-12 && (d0 - d1).abs() <= 1e-12);
    }
}

#[test]
fn stored_derivative_matches_differences_at_second_order() {
    let err = |h: f64| {
        let f = poisson(3, 1.0, Window::new(-10.0, 10.0), h);
        (1..f.len() - 1)
            .map(|i| {
                let fd = (f.values[i + 1] - f.values[i - 1]) / (2.0 * h);
                (fd - f.derivative_values[i]).abs()
            })
            .fold(0.0, f64::max)
    };
    let e1 = err(0.05);
    let e2 = err(0.025);
    let e3 = err(0.0125);
    assert!(e1 / e2 > 3.0 && e2 / e3 > 3.0, "{e1} {e2} {e3}");
}

#[test]
fn interpolant_is_c1() {
    let f = poisson(8, 1.0, Window::new(-5.0, 5.0), 0.1);
    let d = 1e-9;
    for i in 1..f.len() - 1 {
        let x = f.node(i);
        let (vl, dl) = f.evaluate(x - d).unwrap();
        let (vr, dr) = f.evaluate(x + d).unwrap();
        assert!((vl - vr).abs() < 1e-8);
        assert!((dl - dr).abs() < 1e-6);
        assert!((dl - f.derivative_values[i]).abs() < 1e-6);
    }
}

#[test]
fn constant_and_periodic_values() {
    let w = Window::new(-4.0, 4.0);
    for level in [0.0, 0.5, 1.0] {
        let f = generate_constant(level, w, 0.1).unwrap();
        assert_eq!(f.evaluate(0.37).unwrap(), (level, 0.0));
    }
    let p = generate_periodic(2.0, w, 0.05).unwrap();
    assert!(p.evaluate(0.0).unwrap().0.abs() < 1e-15);
    assert!((p.evaluate(1.0).unwrap().0 - 1.0).abs() < 1e-15);
    assert!((p.evaluate(0.5).unwrap().0 - 0.5).abs() < 1e-15);
    for j in 0..100 {
        let x = -3.9 + 0.0513 * j as f64;
        let (a, da) = p.evaluate(x).unwrap();
        let (b, db) = p.evaluate(x + 2.0).unwrap();
        assert!((a - b).abs() < 1e-12 && (da - db).abs() < 1e-12);
    }
}

#[test]
fn periodic_features_match_arccos_boundaries() {
    let h = 0.01;
    let f = generate_periodic(2.0, Window::new(-6.0, 6.0), h).unwrap();
    let feats = find_features(&f, 0.5, 0.5);
    // V <= 1/2 iff cos(pi x) >= 0 iff |x - 2k| <= 1/2.
    for feat in &feats {
        let interior = feat.a > -6.0 + h && feat.b < 6.0 - h;
        if !interior {
            continue;
        }
        let center = feat.center();
        match feat.kind {
            FeatureKind::Valley => {
                assert!((center - 2.0 * (center / 2.0).round()).abs() <= 0.5 * h + 1e-9)
            }
            FeatureKind::Hill => {
                assert!(
                    (center - 1.0 - 2.0 * ((center - 1.0) / 2.0).round()).abs() <= 0.5 * h + 1e-9
                )
            }
        }
        assert!((feat.length() - 1.0).abs() <= h + 1e-12, "{feat:?}");
    }
    let full = |k: FeatureKind| {
        feats
            .iter()
            .filter(|f| f.kind == k && f.length() > 0.9)
            .count()
    };
    let valleys = full(FeatureKind::Valley);
    let hills = full(FeatureKind::Hill);
    assert_eq!(valleys, 5);
    assert_eq!(hills, 6);
}

#[test]
fn poisson_features_hold_on_every_node() {
    let f = poisson(42, 0.4, Window::new(-100.0, 100.0), 0.05);
    for feat in find_features(&f, 0.9, 5.0) {
        assert!(feat.length() >= 5.0 - 1e-9);
        for i in 0..f.len() {
            let x = f.node(i);
            if x >= feat.a && x <= feat.b {
                let v = f.values[i];
                match feat.kind {
                    FeatureKind::Valley => assert!(v <= 0.9),
                    FeatureKind::Hill => assert!(v >= 0.9),
                }
            }
        }
    }
}

#[test]
fn wiener_audit_is_informational() {
    let f = generate_mollified(
        1,
        Process::Wiener,
        1.0,
        KernelSpec::biweight(1.0),
        Window::new(-100.0, 100.0),
        0.1,
    )
    .unwrap();
    let r = audit_assumptions(&f, &[0.25, 0.75], &[1.0, 2.0]);
    assert_eq!(r.checks.len(), 4);
    assert!(!r.caveat.is_empty());
}
