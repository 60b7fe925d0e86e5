use nchj::corrector::{solve_riccati, RiccatiOptions};
use nchj::environment::{generate_constant, PotentialField, Window};
use nchj::montecarlo::{
    confinement_rate, estimate_functional, exp_chebyshev_check, hitting_laplace, local_time_oracle,
    local_time_rate, martingale_audit, mc_hitting_laplace, policy_upper_bounds, simulate_paths,
    LocalTimeEstimator, McOptions, Policy, Proposal,
};

fn constant(level: f64) -> PotentialField {
    generate_constant(level, Window::symmetric(300.0), 0.05).unwrap()
}

fn budget(n_paths: usize, dt: f64) -> McOptions {
    McOptions {
        n_paths,
        dt,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn simulated_means_follow_the_drift() {
    let f = constant(0.0);
    let o = budget(8000, 0.01);
    let t: f64 = 4.0;
    let band = 4.0 * t.sqrt() / (o.n_paths as f64).sqrt();
    let zero = simulate_paths(&f, Policy::Zero, t, 2, &o).unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert_eq!(zero.positions.len(), 2);
    assert!((zero.times[1] - t).abs() < 1e-12);
    assert!(mean(&zero.positions[1]).abs() < band);
    let right = simulate_paths(&f, Policy::ConstRight { c: 1.0 }, t, 1, &o).unwrap();
    assert!((mean(&right.positions[0]) - t).abs() < band);
    assert!(right.integral_v.iter().all(|&v| v == 0.0));
    // E[l_t(0)] = sqrt(2t/pi) for Brownian motion; the occupation estimator
    // is biased at order sqrt(dt).
    let fine = simulate_paths(&f, Policy::Zero, t, 1, &budget(16_000, 0.001)).unwrap();
    let lt = mean(&fine.local_time);
    assert!(
        (lt - (2.0 * t / std::f64::consts::PI).sqrt()).abs() < 0.05,
        "{lt}"
    );
}

#[test]
fn valley_trap_is_ergodic() {
    let f = constant(0.0);
    let o = budget(2000, 0.01);
    let b = simulate_paths(
        &f,
        Policy::ValleyTrap {
            x_star: 0.0,
            c: 1.0,
        },
        50.0,
        1,
        &o,
    )
    .unwrap();
    let inside = b.positions[0].iter().filter(|x| x.abs() <= 5.0).count() as f64
        / b.positions[0].len() as f64;
    assert!(inside >= 0.99, "{inside}");
}

#[test]
fn gaussian_closed_forms() {
    let o = budget(4000, 0.05);
    let e = estimate_functional(&constant(1.0), Policy::Zero, 1.0, 2.0, 20.0, 2.0, &o).unwrap();
    assert!(e.agrees_with(3.0, 3.0, 1e-9), "{e:?}");
    assert!(e.stderr > 0.0 && e.batches >= 16);
    let e = estimate_functional(&constant(0.0), Policy::Zero, 1.0, 1.0, 20.0, 1.0, &o).unwrap();
    assert!(e.agrees_with(0.5, 3.0, 1e-9));
    // Without a tilt the estimate is noisy but unbiased in the exponent.
    let o = budget(32_000, 0.05);
    let e = estimate_functional(&constant(0.0), Policy::Zero, 1.0, 0.5, 4.0, 0.0, &o).unwrap();
    assert!(e.agrees_with(0.125, 4.0, 0.0), "{e:?}");
}

#[test]
fn girsanov_consistency() {
    let f = constant(0.5);
    let (beta, theta, c) = (1.0, 0.7, 1.3);
    for proposal in [Proposal::Controlled, Proposal::Girsanov] {
        let o = McOptions {
            proposal,
            ..budget(8000, 0.02)
        };
        let a = estimate_functional(&f, Policy::ConstRight { c }, beta, theta, 10.0, theta, &o)
            .unwrap();
        let b =
            estimate_functional(&f, Policy::Zero, beta, theta + c, 10.0, theta + c, &o).unwrap();
        let diff = a.value - (b.value - 0.5 * c * c);
        assert!(
            diff.abs() <= 3.0 * (a.stderr.hypot(b.stderr)) + 1e-9,
            "{diff}"
        );
    }
}

#[test]
fn seeded_runs_are_bit_identical() {
    let f = constant(0.3);
    let o = budget(2000, 0.05);
    let p = Policy::ValleyTrap {
        x_star: 0.0,
        c: 1.0,
    };
    let a = estimate_functional(&f, p, 1.0, 0.4, 5.0, 0.4, &o).unwrap();
    let b = estimate_functional(&f, p, 1.0, 0.4, 5.0, 0.4, &o).unwrap();
    assert_eq!(a, b);
    let c = estimate_functional(&f, p, 1.0, 0.4, 5.0, 0.4, &McOptions { seed: 12, ..o }).unwrap();
    assert_ne!(a.batch_values, c.batch_values);
}

#[test]
fn weight_collapse_and_small_windows_are_errors() {
    let f = constant(0.0);
    let o = McOptions {
        resample_threshold: 0.0,
        ..budget(25_600, 0.05)
    };
    let r = estimate_functional(&f, Policy::Zero, 1.0, 10.0, 10.0, 0.0, &o);
    assert!(
        matches!(r, Err(nchj::Error::UnreliableEstimate { .. })),
        "{r:?}"
    );
    let small = generate_constant(0.0, Window::symmetric(10.0), 0.05).unwrap();
    let r = estimate_functional(&small, Policy::Zero, 1.0, 2.0, 20.0, 2.0, &o);
    assert!(matches!(r, Err(nchj::Error::WindowTooSmall { .. })));
    assert!(estimate_functional(
        &f,
        Policy::Zero,
        1.0,
        2.0,
        20.0,
        2.0,
        &McOptions { batches: 8, ..o }
    )
    .is_err());
}

#[test]
fn zero_control_policies_coincide() {
    let f = constant(1.0);
    let r = policy_upper_bounds(&f, 1.0, 0.0, 1.5, 10.0, None, &budget(1600, 0.05)).unwrap();
    assert!((r.const_left.value - r.const_right.value).abs() < 1e-9);
    assert!((r.best_value - (1.0 + 0.5 * 1.5 * 1.5)).abs() < 1e-9);
    assert!(r.valley_trap.is_none() && !r.missing_valley);
}

#[test]
fn constant_field_witnesses_match_closed_form() {
    let f = constant(1.0);
    let (beta, c, theta) = (1.0, 1.0, 2.0);
    let r = policy_upper_bounds(&f, beta, c, theta, 10.0, None, &budget(1600, 0.05)).unwrap();
    // Lambda(q) = beta + q^2/2 on a level-one field.
    let left = beta + 0.5 * (theta - c).powi(2) - 0.5 * c * c;
    assert_eq!(r.best_policy, "const-left");
    assert!((r.best_value - left).abs() < 1e-9);
    let sel = nchj::montecarlo::ValleySelect::default();
    let r = policy_upper_bounds(&f, beta, c, theta, 10.0, Some(sel), &budget(1600, 0.05)).unwrap();
    assert!(r.missing_valley && r.valley_trap.is_none());
}

#[test]
fn martingale_audit_on_constant_field() {
    let f = constant(1.0);
    let ro = RiccatiOptions::default();
    let (beta, theta, c) = (1.0, 2.0, 1.0);
    let p = solve_riccati(
        &f,
        beta,
        theta,
        beta + 0.5 * theta * theta,
        Window::new(-100.0, 100.0),
        None,
        &ro,
    )
    .unwrap();
    let q = solve_riccati(
        &f,
        beta,
        theta - c,
        beta + 0.5 * (theta - c).powi(2),
        Window::new(-100.0, 100.0),
        None,
        &ro,
    )
    .unwrap();
    let o = budget(3200, 0.01);
    let r = martingale_audit(&f, &p, c, Some(&q), Some(0.0), &[0.0, 1.0, 5.0], &o).unwrap();
    assert!(r.passed, "{:#?}", r.rows);
    for row in &r.rows {
        if row.t == 0.0 {
            assert_eq!(row.mean, 1.0);
        }
    }
    let sub: Vec<_> = r
        .rows
        .iter()
        .filter(|r| r.label == "const-right" && r.t == 5.0)
        .collect();
    // E[M_t] = exp(2 theta c t) for the right-moving policy on a constant field.
    assert!(
        (sub[0].log_mean - 2.0 * theta * c * 5.0).abs() < 1e-6,
        "{}",
        sub[0].log_mean
    );
}

#[test]
fn hitting_time_calibration() {
    assert_eq!(hitting_laplace(0.0, 3.0, -2.0), 1.0);
    assert!((hitting_laplace(0.5, 0.0, 1.0) - 0.367_879_4).abs() < 1e-7);
    assert!((hitting_laplace(2.0, 3.0, 1.0) - 0.018_315_6).abs() < 1e-7);
    let m = mc_hitting_laplace(2.0, 3.0, 1.0, &budget(16_000, 0.002)).unwrap();
    assert!(m.within(3.0), "{m:?}");
    assert!(mc_hitting_laplace(0.0, 0.0, 1.0, &budget(16, 0.01)).is_err());
}

#[test]
fn confinement_scaling() {
    let a = confinement_rate(1.0, 8.0, &budget(3200, 0.002)).unwrap();
    let b = confinement_rate(2.0, 32.0, &budget(3200, 0.008)).unwrap();
    assert!(a.relative_error() < 0.1, "{a:?}");
    assert!(b.relative_error() < 0.1, "{b:?}");
    assert!((4.0 * b.value / a.value - 1.0).abs() < 0.1);
}

#[test]
fn local_time_oracle_and_estimate() {
    assert_eq!(local_time_oracle(3.0, 0.0).unwrap(), 0.0);
    let j8 = local_time_oracle(8.0, 1.0).unwrap();
    assert!((j8 - 0.5).abs() < 1e-6);
    let j2 = local_time_oracle(2.0, 1.0).unwrap();
    let k = (2.0 * j2).sqrt();
    assert!((k * (2.0 * k).tanh() - 1.0).abs() < 1e-12);
    let o = budget(3200, 0.01);
    let zero = local_time_rate(2.0, 0.0, 20.0, LocalTimeEstimator::Bridge, &o).unwrap();
    assert_eq!(zero.value, 0.0);
    let e = local_time_rate(2.0, 1.0, 40.0, LocalTimeEstimator::Bridge, &o).unwrap();
    assert!(e.relative_error() < 0.05, "{e:?}");
    let occ = local_time_rate(
        2.0,
        1.0,
        40.0,
        LocalTimeEstimator::Occupation,
        &budget(3200, 0.001),
    )
    .unwrap();
    assert!(occ.relative_error() < 0.1, "{occ:?}");
    assert!(occ.bias_warning);
}

#[test]
fn exponential_chebyshev_bound() {
    let o = budget(1600, 0.02);
    for policy in [
        Policy::ConstLeft { c: 1.0 },
        Policy::ValleyTrap {
            x_star: 0.0,
            c: 1.0,
        },
    ] {
        let r = exp_chebyshev_check(policy, 0.5, 1.0, 0.5, 4.0, &o).unwrap();
        assert!(r.passed, "{r:?}");
    }
    assert!(exp_chebyshev_check(Policy::Tilt { drift: 2.0 }, 0.5, 1.0, 0.5, 4.0, &o).is_err());
}
