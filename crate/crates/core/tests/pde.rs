use nchj::corrector::tilted_free_energy;
use nchj::effective::{build, EffectiveOptions};
use nchj::environment::{generate_constant, generate_periodic, PotentialField, Window};
use nchj::pde::{
    homogenization_sweep, hopf_cole_linear, scheme_is_monotone, self_convergence, solve_effective,
    solve_viscous, HBarTable, InitialData, PdeOptions,
};

fn constant(level: f64) -> PotentialField {
    generate_constant(level, Window::symmetric(200.0), 0.5).unwrap()
}

fn periodic() -> PotentialField {
    generate_periodic(2.0, Window::symmetric(200.0), 0.5).unwrap()
}

#[test]
fn linear_data_on_constant_fields_are_exact() {
    let o = PdeOptions::default();
    for (v0, beta, c, theta, eps) in [
        (1.0, 1.0, 0.0, 1.0, 0.25),
        (0.0, 0.5, 1.0, -2.0, 0.125),
        (1.0, 1.0, 2.0, 0.5, 0.5),
    ] {
        let r = solve_viscous(
            &constant(v0),
            beta,
            c,
            eps,
            InitialData::Linear { theta },
            1.0,
            &o,
        )
        .unwrap();
        let exact = 0.5 * theta * theta - c * theta.abs() + beta * v0;
        assert!((r.probe - exact).abs() < 1e-10, "{} vs {exact}", r.probe);
        assert!(r.box_error(theta, exact, 1.0) < 1e-10);
        assert!(r.cfl_ratio <= 1.0);
    }
    let r = solve_viscous(
        &constant(1.0),
        1.0,
        0.0,
        0.25,
        InitialData::Linear { theta: 1.0 },
        1.0,
        &o,
    )
    .unwrap();
    assert!((r.probe - 1.5).abs() < 1e-10);
    assert!(r.probe_lipschitz <= 1.0 + 0.5 + 1.0);
}

#[test]
fn periodic_homogenization_at_steep_slopes() {
    let f = periodic();
    let h = build(&f, 1.0, 1.0, &[], &EffectiveOptions::default()).unwrap();
    let r = homogenization_sweep(
        &f,
        &h,
        &[-2.0, 2.0],
        &[0.25, 0.125, 0.0625],
        1.0,
        &PdeOptions::default(),
    )
    .unwrap();
    let (a, b) = (r.summary(-2.0).unwrap(), r.summary(2.0).unwrap());
    assert!(b.monotone && b.final_relative_gap <= 0.05, "{b:?}");
    // x -> -x symmetry of the whole problem.
    assert!((a.final_relative_gap - b.final_relative_gap).abs() < 1e-9);
    assert!(r
        .to_csv()
        .starts_with("theta,epsilon,probe,H_bar,abs_error"));
}

#[test]
fn hopf_cole_matches_the_viscous_scheme() {
    let f = periodic();
    let o = PdeOptions::default();
    for theta in [0.0, 1.5] {
        let v = solve_viscous(&f, 1.0, 0.0, 0.125, InitialData::Linear { theta }, 1.0, &o).unwrap();
        let w = hopf_cole_linear(&f, 1.0, 0.125, theta, 1.0, 1e-3, &o).unwrap();
        assert!(
            (v.probe - w.probe).abs() < 5e-3,
            "{} vs {}",
            v.probe,
            w.probe
        );
    }
    // At steep slopes the c = 0 probe approaches Lambda.
    let lam = tilted_free_energy(&f, 1.0, 2.0, None, &Default::default())
        .unwrap()
        .lambda;
    let w = hopf_cole_linear(&f, 1.0, 0.0625, 2.0, 1.0, 1e-3, &o).unwrap();
    assert!((w.probe - lam).abs() < 0.01, "{} vs {lam}", w.probe);
}

#[test]
fn ordered_data_stay_ordered() {
    let f = periodic();
    let o = PdeOptions::default();
    let lo = solve_viscous(
        &f,
        1.0,
        1.0,
        0.25,
        InitialData::Kink {
            left: 2.0,
            right: 1.0,
        },
        1.0,
        &o,
    )
    .unwrap();
    for theta in [1.0, 2.0] {
        let hi = solve_viscous(&f, 1.0, 1.0, 0.25, InitialData::Linear { theta }, 1.0, &o).unwrap();
        let (s, t) = (lo.final_snapshot(), hi.final_snapshot());
        for (&x, &u) in s.x.iter().zip(&s.u).filter(|(x, _)| x.abs() <= 1.0) {
            assert!(u <= t.at(x).unwrap() + 1e-12, "x = {x}");
        }
    }
}

#[test]
fn effective_equation() {
    let f = constant(1.0);
    let weak = build(&f, 1.0, 1.0, &[], &EffectiveOptions::default()).unwrap();
    let table = HBarTable::build(&weak, 3.0, 61, &[1.3]).unwrap();
    let r = solve_effective(
        &table,
        InitialData::Linear { theta: 1.3 },
        1.0,
        0.05,
        0.9,
        1.0,
        &[],
    )
    .unwrap();
    let hb = weak.h_bar(1.3).unwrap();
    assert!((r.probe - hb).abs() < 1e-10 && r.box_error(1.3, hb, 1.0) < 1e-10);

    // min(x, 2x) stays below both linear solutions.
    let kink = solve_effective(
        &table,
        InitialData::Kink {
            left: 2.0,
            right: 1.0,
        },
        1.0,
        0.05,
        0.9,
        1.0,
        &[],
    )
    .unwrap();
    for theta in [1.0, 2.0] {
        let lin = solve_effective(
            &table,
            InitialData::Linear { theta },
            1.0,
            0.05,
            0.9,
            1.0,
            &[],
        )
        .unwrap();
        let (s, t) = (kink.final_snapshot(), lin.final_snapshot());
        for (&x, &u) in s.x.iter().zip(&s.u).filter(|(x, _)| x.abs() <= 1.0) {
            assert!(u <= t.at(x).unwrap() + 1e-9);
        }
    }

    // Kinks in the strong regime. The convex kink |x| takes the largest
    // value of H over its slope range, which is the flat piece; the concave
    // kink -|x| takes the smallest, H(1) = -1/2.
    let strong = build(&f, 1.0, 2.0, &[], &EffectiveOptions::default()).unwrap();
    let table = HBarTable::build(&strong, 2.0, 81, &[]).unwrap();
    for (g, value) in [
        (
            InitialData::Kink {
                left: -1.0,
                right: 1.0,
            },
            0.0,
        ),
        (
            InitialData::Kink {
                left: 1.0,
                right: -1.0,
            },
            -0.5,
        ),
    ] {
        let sc = self_convergence(&table, g, 1.0, 0.04, 4).unwrap();
        assert!(sc.differences.windows(2).all(|d| d[1] < d[0]), "{sc:?}");
        assert!((sc.extrapolated - value).abs() < 0.01, "{sc:?}");
    }
}

#[test]
fn configuration_and_runtime_errors() {
    let f = periodic();
    let o = PdeOptions::default();
    let coarse = PdeOptions {
        dx_per_epsilon: 4.0,
        ..o.clone()
    };
    assert!(solve_viscous(
        &f,
        1.0,
        1.0,
        0.25,
        InitialData::Linear { theta: 1.0 },
        1.0,
        &coarse
    )
    .is_err());
    let tight = PdeOptions {
        gradient_bound: 1.5,
        ..o.clone()
    };
    let r = solve_viscous(
        &f,
        1.0,
        1.0,
        0.25,
        InitialData::Linear { theta: 1.4 },
        1.0,
        &tight,
    );
    assert!(
        matches!(r, Err(nchj::Error::GradientBlowup { .. })),
        "{r:?}"
    );
    let small = generate_periodic(2.0, Window::symmetric(5.0), 0.5).unwrap();
    assert!(solve_viscous(
        &small,
        1.0,
        1.0,
        0.25,
        InitialData::Linear { theta: 1.0 },
        1.0,
        &o
    )
    .is_err());
    // Monotone with the default step, not with twice the stable step.
    let (dx, eps) = (0.25 / 8.0, 0.25);
    assert!(scheme_is_monotone(eps, 4.0, dx, 0.9 * dx * dx / eps));
    assert!(!scheme_is_monotone(eps, 4.0, dx, 2.0 * dx * dx / eps));
}
