use std::f64::consts::PI;

use kdpinn::problems::{
    allen_cahn::initial as ac_initial, black_scholes_problem, burgers_problem,
    navier_stokes_problem, AllenCahnSettings, AllenCahnSolver, ColeHopf, Role, TaylorGreen,
};

fn interior(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (1..=n).map(move |i| lo + (hi - lo) * i as f64 / (n + 1) as f64)
}

#[test]
fn black_scholes_reference_residual_on_interior_grid() {
    let p = black_scholes_problem(1.0, 0.05, 0.2, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for s in interior(0.5, 1.5, 50) {
        for t in interior(0.0, 1.0, 50) {
            worst = worst.max(p.reference_residuals(&[s, t]).unwrap()[0].abs());
        }
    }
    assert!(worst < 1e-8, "sup residual {worst:e}");
}

#[test]
fn taylor_green_reference_residual_and_divergence() {
    let p = navier_stokes_problem(0.01).unwrap();
    let (mut mom, mut div): (f64, f64) = (0.0, 0.0);
    for t in [0.0, 0.37, 1.0] {
        for x in interior(0.0, 2.0 * PI, 50) {
            for y in interior(0.0, 2.0 * PI, 50) {
                let r = p.reference_residuals(&[x, y, t]).unwrap();
                mom = mom.max(r[0].abs()).max(r[1].abs());
                div = div.max(r[2].abs());
            }
        }
    }
    assert!(mom < 1e-8, "momentum {mom:e}");
    assert!(div < 1e-12, "divergence {div:e}");
}

#[test]
fn taylor_green_momentum_at_random_points() {
    use rand::{Rng, SeedableRng};
    let p = navier_stokes_problem(1e-2).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let x = [
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(0.0..1.0),
        ];
        let r = p.reference_residuals(&x).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-10), "{r:?}");
    }
}

#[test]
fn taylor_green_energy_decay_by_quadrature() {
    let tg = TaylorGreen::new(0.01).unwrap();
    let n = 128;
    let h = 2.0 * PI / n as f64;
    // periodic trapezoid rule, exact for these trigonometric polynomials
    let energy = |t: f64| {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let [u, v, _] = tg.eval(i as f64 * h, j as f64 * h, t);
                acc += 0.5 * (u * u + v * v);
            }
        }
        acc * h * h
    };
    let e0 = energy(0.0);
    assert!((e0 - tg.kinetic_energy(0.0)).abs() / e0 < 1e-12);
    for t in [0.25f64, 0.5, 1.0] {
        let expected = e0 * (-4.0 * 0.01 * t).exp();
        assert!((energy(t) - expected).abs() / expected < 1e-6);
    }
}

#[test]
fn constraint_targets_agree_with_reference() {
    let problems = [
        black_scholes_problem(1.0, 0.05, 0.2, 1.0).unwrap(),
        navier_stokes_problem(0.01).unwrap(),
    ];
    for p in &problems {
        let d = p.dim();
        let n_out = p.n_outputs();
        for &role in p.constraint_roles() {
            for face in p.faces(role).unwrap() {
                for k in 0..20 {
                    let mut x: Vec<f64> = (0..d)
                        .map(|i| p.domain().lo[i] + p.domain().width(i) * (k as f64 + 0.5) / 20.0)
                        .collect();
                    x[face.axis] = face.value;
                    let mut target = vec![0.0; n_out];
                    let mut reference = vec![0.0; n_out];
                    p.constraint_target(role, &x, &mut target).unwrap();
                    p.reference().eval(&x, &mut reference).unwrap();
                    for (a, b) in target.iter().zip(&reference) {
                        assert!((a - b).abs() < 1e-10, "{} {role} at {x:?}", p.name());
                    }
                }
            }
        }
    }
}

#[test]
fn black_scholes_boundary_locus() {
    let p = black_scholes_problem(1.0, 0.05, 0.2, 1.0).unwrap();
    let faces = p.faces(Role::Boundary).unwrap();
    let values: Vec<f64> = faces.iter().map(|f| f.value).collect();
    assert_eq!(values, vec![0.5, 1.5]);
    assert_eq!(p.faces(Role::Terminal).unwrap()[0].value, 1.0);
}

#[test]
fn allen_cahn_time_step_self_convergence() {
    let solve = |nt| {
        AllenCahnSolver::new(1e-3, AllenCahnSettings { nx: 512, nt })
            .unwrap()
            .solve()
    };
    let coarse = solve(2000);
    let fine = solve(4000);
    let a = coarse.values.row(2000);
    let b = fine.values.row(4000);
    let diff = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-5, "sup change {diff:e}");
    assert_eq!(coarse.values[[0, 0]], ac_initial(-1.0));
}

#[test]
fn burgers_reference_satisfies_discrete_residual() {
    let nu = 0.01 / PI;
    let ch = ColeHopf::new(nu).unwrap();
    let h = 2.5e-4;
    let mut worst: f64 = 0.0;
    for i in 0..=16 {
        let x = 0.1 + 0.05 * i as f64;
        for k in 0..=18 {
            let t = 0.1 + 0.05 * k as f64;
            let u = ch.eval(x, t);
            let u_t = (ch.eval(x, t + h) - ch.eval(x, t - h)) / (2.0 * h);
            let (up, um) = (ch.eval(x + h, t), ch.eval(x - h, t));
            let u_x = (up - um) / (2.0 * h);
            let u_xx = (up - 2.0 * u + um) / (h * h);
            worst = worst.max((u_t + u * u_x - nu * u_xx).abs());
        }
    }
    assert!(worst < 1e-4, "sup discrete residual {worst:e}");
}

#[test]
fn burgers_problem_initial_targets() {
    let p = burgers_problem(0.01 / PI).unwrap();
    let mut out = [f64::NAN];
    p.constraint_target(Role::Initial, &[0.0, 0.0], &mut out)
        .unwrap();
    assert_eq!(out[0], 0.0);
    p.constraint_target(Role::Initial, &[1.0, 0.0], &mut out)
        .unwrap();
    assert!(out[0].abs() < 1e-15);
    p.constraint_target(Role::Initial, &[0.5, 0.0], &mut out)
        .unwrap();
    assert_eq!(out[0], -1.0);
}
