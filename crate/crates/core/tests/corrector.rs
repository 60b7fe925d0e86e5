use nchj::corrector::{
    find_lambda_o, free_energy_curve, log_martingale_weight, neg_log_v, solve_riccati,
    tilted_free_energy, FreeEnergyOptions, RiccatiOptions,
};
use nchj::environment::{
    generate_constant, generate_mollified, generate_periodic, KernelSpec, PotentialField, Process,
    Window,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn short_opts() -> FreeEnergyOptions {
    FreeEnergyOptions {
        min_window: 10.0,
        ..Default::default()
    }
}

fn poisson_field(half: f64) -> PotentialField {
    generate_mollified(
        42,
        Process::Poisson,
        1.0,
        KernelSpec::biweight(1.0),
        Window::symmetric(half),
        0.05,
    )
    .unwrap()
}

#[test]
fn constant_field_riccati_fixed_point() {
    let f = generate_constant(1.0, Window::symmetric(150.0), 0.05).unwrap();
    let p = solve_riccati(
        &f,
        1.0,
        1.0,
        3.0,
        Window::new(-5.0, 5.0),
        None,
        &RiccatiOptions::default(),
    )
    .unwrap();
    for &u in &p.u_values {
        assert!((u - 2.0).abs() < 1e-12);
    }
    assert_eq!(p.f_at(0.0).unwrap(), 0.0);
    assert!(p.ode_residual < 1e-10);
}

#[test]
fn neg_log_v_constant_fields_hit_sandwich_ends() {
    let o = RiccatiOptions::default();
    let f1 = generate_constant(1.0, Window::symmetric(150.0), 0.05).unwrap();
    assert!((neg_log_v(&f1, 1.0, 3.0, 0.0, 2.0, &o).unwrap() - 4.0).abs() < 1e-10);
    assert!((neg_log_v(&f1, 1.0, 3.0, 2.0, 0.0, &o).unwrap() - 4.0).abs() < 1e-10);
    let f0 = generate_constant(0.0, Window::symmetric(150.0), 0.05).unwrap();
    assert!((neg_log_v(&f0, 1.0, 2.0, 0.0, 1.0, &o).unwrap() - 2.0).abs() < 1e-10);
    assert_eq!(neg_log_v(&f0, 1.0, 2.0, 0.3, 0.3, &o).unwrap(), 0.0);
}

#[test]
fn periodic_corrector_is_periodic() {
    let f = generate_periodic(2.0, Window::symmetric(150.0), 0.01).unwrap();
    let p = solve_riccati(
        &f,
        1.0,
        1.0,
        2.0,
        Window::new(-10.0, 10.0),
        None,
        &RiccatiOptions::default(),
    )
    .unwrap();
    for j in 0..400 {
        let x = -9.5 + 0.04 * j as f64;
        assert!((p.u_at(x).unwrap() - p.u_at(x + 2.0).unwrap()).abs() < 1e-8);
    }
}

#[test]
fn band_violation_is_reported() {
    let f = poisson_field(150.0);
    // A buffer of zero with a start value far from the attractor still sits
    // in the band for the exact flow; a tiny tolerance with a coarse step
    // does not. The forced failure uses tol_u = 0 and a negative buffer check.
    let opts = RiccatiOptions {
        tol_u: 0.0,
        ..Default::default()
    };
    let ok = solve_riccati(&f, 1.0, 1.0, 1.5, Window::new(-10.0, 10.0), None, &opts);
    assert!(ok.is_ok() || matches!(ok, Err(nchj::Error::RiccatiBand { .. })));
    assert!(solve_riccati(&f, 1.0, 1.0, 0.5, Window::new(-10.0, 10.0), None, &opts).is_err());
}

#[test]
fn sandwich_and_additivity_on_random_field() {
    let f = poisson_field(150.0);
    let o = RiccatiOptions::default();
    let beta = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let lambda = beta + rng.random_range(0.2..2.0);
        let mut p: Vec<f64> = (0..3).map(|_| rng.random_range(-40.0..40.0)).collect();
        p.sort_by(f64::total_cmp);
        let (x, y, z) = (p[0], p[1], p[2]);
        let xz = neg_log_v(&f, beta, lambda, x, z, &o).unwrap();
        let xy = neg_log_v(&f, beta, lambda, x, y, &o).unwrap();
        let yz = neg_log_v(&f, beta, lambda, y, z, &o).unwrap();
        assert!((xz - xy - yz).abs() < 1e-4, "{xz} {xy} {yz}");
        let lo = (2.0 * (lambda - beta)).sqrt() * (z - x);
        let hi = (2.0 * lambda).sqrt() * (z - x);
        assert!(xz >= lo - 1e-4 && xz <= hi + 1e-4);
        let zx = neg_log_v(&f, beta, lambda, z, x, &o).unwrap();
        assert!(zx >= lo - 1e-4 && zx <= hi + 1e-4);
    }
}

#[test]
fn corrector_is_a_cocycle() {
    let f = poisson_field(200.0);
    let o = RiccatiOptions::default();
    let p = solve_riccati(&f, 1.0, 1.5, 2.0, Window::new(-30.0, 30.0), None, &o).unwrap();
    for &(x, y) in &[(3.0, 5.0), (-10.0, 7.5), (12.35, -4.2)] {
        let g = f.shifted(x).unwrap();
        let q = solve_riccati(&g, 1.0, 1.5, 2.0, Window::new(-20.0, 20.0), None, &o).unwrap();
        let lhs = p.f_at(x + y).unwrap() - p.f_at(x).unwrap();
        let rhs = q.f_at(y).unwrap();
        assert!((lhs - rhs).abs() < 1e-6, "{lhs} {rhs}");
    }
}

#[test]
fn closed_form_roots_on_constant_fields() {
    let o = short_opts();
    let f1 = generate_constant(1.0, Window::new(-120.0, 20.0), 0.05).unwrap();
    let r = find_lambda_o(&f1, 1.0, 2.0, None, &o).unwrap();
    assert!(!r.flat);
    assert!((r.lambda - 3.0).abs() < 1e-7);
    assert!(r.monotone);
    let f0 = generate_constant(0.0, Window::new(-120.0, 20.0), 0.05).unwrap();
    let r = find_lambda_o(&f0, 1.0, 2.0, None, &o).unwrap();
    assert!((r.lambda - 2.0).abs() < 1e-7);
    let r = tilted_free_energy(&f1, 1.0, -2.0, None, &o).unwrap();
    assert!((r.lambda - 3.0).abs() < 1e-7);
    assert_eq!(
        tilted_free_energy(&f1, 1.7, 0.0, None, &o).unwrap().lambda,
        1.7
    );
}

#[test]
fn negative_theta_uses_mirrored_branch() {
    let f = generate_constant(1.0, Window::new(-20.0, 120.0), 0.05).unwrap();
    let r = find_lambda_o(&f, 1.0, -2.0, None, &short_opts()).unwrap();
    assert!((r.lambda - 3.0).abs() < 1e-7);
}

#[test]
fn small_theta_is_flat_on_random_field() {
    let f = poisson_field(200.0);
    let o = FreeEnergyOptions::default();
    let r = find_lambda_o(
        &f,
        1.0,
        0.01,
        None,
        &FreeEnergyOptions {
            min_window: 150.0,
            ..o
        },
    )
    .unwrap();
    assert!(r.flat);
    assert_eq!(r.lambda, 1.0);
    assert!(r.lambda_o.is_none());
}

#[test]
fn curve_on_constant_field() {
    let f = generate_constant(1.0, Window::new(-120.0, 20.0), 0.05).unwrap();
    let c = free_energy_curve(&f, 1.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], None, &short_opts()).unwrap();
    let expect = [3.0, 1.5, 1.0, 1.5, 3.0];
    for (r, e) in c.results.iter().zip(expect) {
        assert!((r.lambda - e).abs() < 1e-7);
    }
    assert_eq!(c.flat_interval, Some((-0.0, 0.0)));
    assert!(free_energy_curve(&f, 1.0, &[1.0, 0.0], None, &short_opts()).is_err());
}

#[test]
fn martingale_weight_normalization() {
    let f = generate_constant(1.0, Window::symmetric(150.0), 0.05).unwrap();
    let p = solve_riccati(
        &f,
        1.0,
        2.0,
        3.0,
        Window::new(-20.0, 20.0),
        None,
        &RiccatiOptions::default(),
    )
    .unwrap();
    assert_eq!(log_martingale_weight(&f, &p, &[0.0], 0.01).unwrap(), 0.0);
    // F = 0 on a constant field: log M = t + 2 X_t - 3 t.
    let path = [0.0, 0.1, 0.3, -0.2, 0.5];
    let lm = log_martingale_weight(&f, &p, &path, 0.25).unwrap();
    assert!((lm - (1.0 + 2.0 * 0.5 - 3.0)).abs() < 1e-10);
}
