use nchj::corrector::FreeEnergyOptions;
use nchj::effective::{build, check_bound_structure, find_theta_bar, EffectiveOptions, Regime};
use nchj::environment::{
    generate_constant, generate_mollified, KernelSpec, PotentialField, Process, Window,
};

fn opts() -> EffectiveOptions {
    EffectiveOptions {
        free_energy: FreeEnergyOptions {
            min_window: 10.0,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn level_one() -> PotentialField {
    generate_constant(1.0, Window::new(-120.0, 20.0), 0.05).unwrap()
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn closed_form(beta: f64, c: f64, theta: f64) -> f64 {
    let lam = |q: f64| beta + 0.5 * q * q;
    let a = theta.abs();
    if beta >= 0.5 * c * c {
        if a < c {
            beta - 0.5 * c * c
        } else {
            lam(a - c) - 0.5 * c * c
        }
    } else {
        let tb = c - (c * c - 2.0 * beta).sqrt();
        if a < tb {
            0.0
        } else {
            lam(a - c) - 0.5 * c * c
        }
    }
}

#[test]
fn theta_bar_closed_form() {
    let f = level_one();
    let tb = find_theta_bar(&f, 1.0, 2.0, &opts()).unwrap();
    assert!((tb.value - (2.0 - 2f64.sqrt())).abs() < 1e-7);
    assert!(tb.interval.0 <= tb.value && tb.value <= tb.interval.1);
    assert!(find_theta_bar(&f, 1.0, 1.0, &opts()).is_err());
    let small = find_theta_bar(&f, 1e-3, 2.0, &opts()).unwrap();
    assert!(small.value < 1e-3);
}

#[test]
fn piecewise_values_on_constant_field() {
    let f = level_one();
    let h = build(&f, 1.0, 1.0, &[], &opts()).unwrap();
    assert_eq!(h.regime, Regime::Weak);
    assert!((h.h_bar(2.0).unwrap() - 1.0).abs() < 1e-7);
    assert_eq!(h.h_bar(0.3).unwrap(), 0.5);
    let s = build(&f, 1.0, 2.0, &[], &opts()).unwrap();
    assert_eq!(s.h_bar(0.0).unwrap(), 0.0);
    for &t in &grid(-4.0, 4.0, 33) {
        assert!((s.h_bar(t).unwrap() - closed_form(1.0, 2.0, t)).abs() < 1e-6);
        assert_eq!(s.h_bar(t).unwrap(), s.h_bar(-t).unwrap());
    }
}

#[test]
fn zero_control_gives_free_energy() {
    let f = level_one();
    let h = build(&f, 1.0, 0.0, &[], &opts()).unwrap();
    for t in [-1.5, 0.0, 0.7] {
        assert_eq!(h.h_bar(t).unwrap(), h.lambda(t).unwrap());
    }
}

#[test]
fn bound_structure_detects_regime() {
    let f = level_one();
    let g = grid(-4.0, 4.0, 41);
    let weak = build(&f, 1.0, 1.0, &g, &opts()).unwrap();
    let r = check_bound_structure(&weak, &g, 1e-6).unwrap();
    assert!(r.passed, "{:?}", r.violations);
    assert!(r.convex_on_grid);
    let strong = build(&f, 1.0, 2.0, &g, &opts()).unwrap();
    let r = check_bound_structure(&strong, &g, 1e-6).unwrap();
    assert!(r.violations.is_empty(), "{:?}", r.violations);
    assert!(!r.convex_on_grid);
    assert!(r.passed);
    let flagged: Vec<f64> = r
        .rows
        .iter()
        .filter(|x| x.convexity_violation)
        .map(|x| x.theta)
        .collect();
    let tb = strong.theta_bar.unwrap().value;
    assert!(
        flagged.iter().all(|t| (t.abs() - tb).abs() < 0.5),
        "{flagged:?}"
    );
}

#[test]
fn random_field_structure() {
    let f = generate_mollified(
        42,
        Process::Poisson,
        1.0,
        KernelSpec::biweight(1.0),
        Window::symmetric(200.0),
        0.05,
    )
    .unwrap();
    let o = EffectiveOptions::default();
    let g = grid(-4.0, 4.0, 41);
    for (beta, c) in [(1.0, 1.0), (0.5, 2.0)] {
        let h = build(&f, beta, c, &g, &o).unwrap();
        let r = check_bound_structure(&h, &g, 1e-6).unwrap();
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert!(h.h_bar(0.0).unwrap() >= 0.0);
        if let Some(tb) = h.theta_bar {
            assert!((h.lambda(tb.value - c).unwrap() - 0.5 * c * c).abs() <= o.tol_lambda);
        }
    }
}

#[test]
fn h_bar_is_monotone_in_beta() {
    let f = level_one();
    let g = grid(-3.0, 3.0, 13);
    let a = build(&f, 1.0, 1.0, &g, &opts())
        .unwrap()
        .evaluate_grid(&g)
        .unwrap();
    let b = build(&f, 2.0, 1.0, &g, &opts())
        .unwrap()
        .evaluate_grid(&g)
        .unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| y >= x));
}
