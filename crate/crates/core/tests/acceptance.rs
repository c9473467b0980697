//! Acceptance suite. Runs the gating criteria 1-10 and prints one PASS/FAIL
//! line each; criterion 11 (full-scale training, hours) runs only with
//! `KDPINN_FULL_SCALE=1`. Exits nonzero if any executed criterion fails.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::{all_problems, rel, small_batches, teacher_targets};
use kdpinn::experiments::{
    ablation_recipe, bs_in_domain_recipe, bs_ood_recipe, cross_pde_recipes, ood_comparison,
    run_cross_pde, run_equal_arch_ablation, run_in_domain_bs, run_ood_suite, InDomainRun, Scale,
    Variant,
};
use kdpinn::jets::Activation;
use kdpinn::net::{mac_count, LayerSpec, MlpNetwork};
use kdpinn::perf::{combined_bound, measure_latencies, speedup_ratio, LatencyPlan};
use kdpinn::problems::{black_scholes_problem, navier_stokes_problem, PdeProblem};
use kdpinn::sampling::{normalize_mean_one, raw_informed_weights, SobolStream};
use kdpinn::training::{
    assemble_loss, curriculum, huber, huber_grad, kl_gaussian, LossInputs, LossWeights, Penalty,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- 1

fn input_derivative_error(net: &MlpNetwork, x: &[f64]) -> (f64, f64) {
    let d = x.len();
    let h = 1e-4;
    let f = |p: &[f64]| -> Vec<f64> {
        let a = Array2::from_shape_vec((1, d), p.to_vec()).unwrap();
        net.forward(a.view()).unwrap().row(0).to_vec()
    };
    let jets = net.forward_jets(x).unwrap();
    let f0 = f(x);
    let (mut eg, mut eh) = (0.0f64, 0.0f64);
    for i in 0..d {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        for (o, j) in jets.iter().enumerate() {
            let fd1 = (fp[o] - fm[o]) / (2.0 * h);
            eg = eg.max((j.grad()[i] - fd1).abs() / (1.0 + fd1.abs()));
            let fd2 = (fp[o] - 2.0 * f0[o] + fm[o]) / (h * h);
            eh = eh.max((j.hess(i, i) - fd2).abs() / (1.0 + fd2.abs()));
        }
        for k in 0..i {
            let mut pp = x.to_vec();
            let mut pm = x.to_vec();
            let mut mp = x.to_vec();
            let mut mm = x.to_vec();
            pp[i] += h;
            pp[k] += h;
            pm[i] += h;
            pm[k] -= h;
            mp[i] -= h;
            mp[k] += h;
            mm[i] -= h;
            mm[k] -= h;
            let (a, b, c, e) = (f(&pp), f(&pm), f(&mp), f(&mm));
            for (o, j) in jets.iter().enumerate() {
                let fd = (a[o] - b[o] - c[o] + e[o]) / (4.0 * h * h);
                eh = eh.max((j.hess(i, k) - fd).abs() / (1.0 + fd.abs()));
            }
        }
    }
    (eg, eh)
}

fn param_gradient_error(
    student: &MlpNetwork,
    teacher: &MlpNetwork,
    problem: &PdeProblem,
    seed: u64,
) -> f64 {
    let b = small_batches(problem, 8, seed);
    let targets = teacher_targets(teacher, &b.distillation);
    let inputs = LossInputs {
        collocation: &b.collocation,
        constraints: &b.constraints,
        distillation: Some((&b.distillation, &targets)),
    };
    let w = LossWeights {
        huber_delta: Some(0.05),
        kd_penalty: if seed.is_multiple_of(2) {
            Penalty::Mse
        } else {
            Penalty::Huber
        },
        ..LossWeights::default()
    };
    let c = 0.6;
    let (_, grad) = assemble_loss(student, problem, &inputs, &w, c).unwrap();
    let theta = student.params();
    let loss = |th: &[f64]| {
        let mut n = student.clone();
        n.set_params(th).unwrap();
        assemble_loss(&n, problem, &inputs, &w, c).unwrap().0.total
    };
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let h = 1e-6 * theta[i].abs().max(1.0);
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[i] += h;
        tm[i] -= h;
        let fd = (loss(&tp) - loss(&tm)) / (2.0 * h);
        worst = worst.max(rel(grad.values()[i], fd, 1e-4));
    }
    worst
}

fn criterion_autodiff() -> Outcome {
    let problems = all_problems();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut eg, mut eh, mut ep) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..20u64 {
        let problem = &problems[k as usize % problems.len()];
        let depth = rng.random_range(1..=2);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=8)).collect();
        let act = if k % 2 == 0 {
            Activation::Tanh
        } else {
            Activation::Silu
        };
        let net = common::random_net(problem, &hidden, act, 500 + k);
        let teacher = common::random_net(problem, &[6, 6], Activation::Tanh, 900 + k);
        let dom = problem.domain();
        for _ in 0..4 {
            let x: Vec<f64> = (0..dom.dim())
                .map(|i| dom.lo[i] + dom.width(i) * rng.random_range(0.05..0.95))
                .collect();
            let (g, h) = input_derivative_error(&net, &x);
            eg = eg.max(g);
            eh = eh.max(h);
        }
        ep = ep.max(param_gradient_error(&net, &teacher, problem, k));
    }
    check(
        eg < 1e-5 && eh < 1e-5 && ep < 1e-5,
        format!("20 nets: max input-grad err {eg:.1e}, Hessian err {eh:.1e}, loss param-grad err {ep:.1e} (< 1e-5)"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_reference_residuals() -> Outcome {
    let bs = black_scholes_problem(1.0, 0.05, 0.2, 1.0).unwrap();
    let ns = navier_stokes_problem(0.01).unwrap();
    let interior = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * (k as f64 + 1.0) / 51.0;
    let mut bs_max = 0.0f64;
    for i in 0..50 {
        for j in 0..50 {
            let x = [interior(0.5, 1.5, i), interior(0.0, 1.0, j)];
            bs_max = bs_max.max(bs.reference_residuals(&x).unwrap()[0].abs());
        }
    }
    let (mut mom, mut div) = (0.0f64, 0.0f64);
    for t in [0.0, 0.5, 1.0] {
        for i in 0..50 {
            for j in 0..50 {
                let x = [interior(0.0, 2.0 * PI, i), interior(0.0, 2.0 * PI, j), t];
                let r = ns.reference_residuals(&x).unwrap();
                mom = mom.max(r[0].abs()).max(r[1].abs());
                div = div.max(r[2].abs());
            }
        }
    }
    check(
        bs_max < 1e-8 && mom < 1e-8 && div < 1e-12,
        format!("Black-Scholes {bs_max:.1e}, Taylor-Green momentum {mom:.1e} (< 1e-8), divergence {div:.1e} (< 1e-12)"),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_kl() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let mt = rng.random_range(-2.0..2.0);
        let ms = rng.random_range(-2.0..2.0);
        let s = rng.random_range(0.1..3.0);
        let expected = (mt - ms) * (mt - ms) / (2.0 * s * s);
        let got = kl_gaussian(mt, s, ms, s);
        worst = worst.max((got - expected).abs() / expected.max(1.0));
    }
    check(
        worst < 1e-12,
        format!("10^4 tuples, max deviation {worst:.1e} (< 1e-12)"),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_flops_and_bounds() -> Outcome {
    let t = mac_count(&LayerSpec::tanh(&[2, 50, 50, 50, 1]));
    let s = mac_count(&LayerSpec::tanh(&[2, 20, 20, 20, 1]));
    let ratio = t as f64 / s as f64;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for k in 0..=30 {
        let f = 0.02 + 0.03 * k as f64 / 30.0;
        let b = combined_bound(10.0, f, 1.0).unwrap();
        lo = lo.min(b);
        hi = hi.max(b);
    }
    // bounds compared at two-decimal rounding
    let round2 = |v: f64| (v * 100.0).round() / 100.0;
    check(
        t == 5150
            && s == 860
            && (ratio - 5.988).abs() < 1e-3
            && round2(lo) >= 6.9
            && round2(hi) <= 8.5,
        format!(
            "MACs {t}/{s} = {ratio:.3}; combined bound over f in [0.02, 0.05]: [{lo:.4}, {hi:.4}]"
        ),
    )
}

// ---------------------------------------------------------------- 5

/// Direct (non-incremental) Sobol construction of the first four
/// coordinates, visited in Gray-code order.
fn sobol_oracle(index: u32, dim: usize) -> f64 {
    // (degree, a, initial m) of the first primitive polynomials
    let params: [(u32, u32, &[u32]); 2] = [(1, 0, &[1]), (2, 1, &[1, 3])];
    let mut v = [0u32; 32];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (31 - k);
        }
    } else {
        let (s, a, m0) = params[dim - 1];
        let mut m = [0u32; 32];
        m[..s as usize].copy_from_slice(m0);
        for k in s as usize..32 {
            let mut mk = m[k - s as usize] ^ (m[k - s as usize] << s);
            for j in 1..s {
                if (a >> (s - 1 - j)) & 1 == 1 {
                    mk ^= m[k - j as usize] << j;
                }
            }
            m[k] = mk;
        }
        for k in 0..32 {
            v[k] = m[k] << (31 - k);
        }
    }
    let gray = index ^ (index >> 1);
    let mut x = 0u32;
    for (k, vk) in v.iter().enumerate() {
        if (gray >> k) & 1 == 1 {
            x ^= vk;
        }
    }
    x as f64 / 4294967296.0
}

fn dyadic_balanced(points: &Array2<f64>, m: u32) -> bool {
    (0..=m).all(|k1| {
        let k2 = m - k1;
        let mut counts = vec![0usize; 1 << m];
        for r in points.rows() {
            let a = (r[0] * (1u64 << k1) as f64) as usize;
            let b = (r[1] * (1u64 << k2) as f64) as usize;
            counts[(a << k2) | b] += 1;
        }
        counts.iter().all(|&c| c == 1)
    })
}

fn criterion_sobol() -> Outcome {
    let mut plain = SobolStream::unscrambled(3).unwrap();
    let p = plain.next_points(1024).unwrap();
    let mut mismatches = 0;
    for i in 0..1024 {
        for d in 0..3 {
            if p[[i, d]] != sobol_oracle(i as u32, d) {
                mismatches += 1;
            }
        }
    }
    let first = [p[[1, 0]], p[[2, 0]], p[[3, 0]]];
    let mut balanced = true;
    for seed in [1u64, 7, 12345] {
        for m in 0..=8 {
            let pts = SobolStream::new(2, seed)
                .unwrap()
                .next_points(1 << m)
                .unwrap();
            balanced &= dyadic_balanced(&pts, m);
        }
    }
    let a = SobolStream::new(3, 99).unwrap().next_points(4096).unwrap();
    let b = SobolStream::new(3, 99).unwrap().next_points(4096).unwrap();
    check(
        mismatches == 0 && first == [0.5, 0.75, 0.25] && balanced && a == b,
        format!(
            "first points {first:?}, {mismatches} mismatches vs direct construction (1024 x 3), \
             scrambled balance m <= 8: {balanced}, deterministic: {}",
            a == b
        ),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_loss_pieces() -> Outcome {
    let mut msgs = Vec::new();
    let mut ok = true;
    let mut cont = 0.0f64;
    for d in [0.1, 0.5, 1.0, 2.0] {
        for eps in [1e-9, 1e-12] {
            cont = cont.max((huber(d - eps, d) - huber(d + eps, d)).abs());
            cont = cont.max((huber_grad(d - eps, d) - huber_grad(d + eps, d)).abs());
        }
    }
    ok &= cont < 1e-8;
    msgs.push(format!("Huber jump at delta {cont:.1e}"));
    let ends =
        curriculum(0, 1000) == 0.0 && curriculum(1000, 1000) == 1.0 && curriculum(500, 1000) == 0.5;
    ok &= ends;
    msgs.push(format!("curriculum endpoints {ends}"));

    let problem = black_scholes_problem(1.0, 0.05, 0.2, 1.0).unwrap();
    let student = common::random_net(&problem, &[6], Activation::Tanh, 3);
    let teacher = common::random_net(&problem, &[8, 8], Activation::Tanh, 4);
    let b = small_batches(&problem, 64, 5);
    let targets = teacher_targets(&teacher, &b.distillation);
    let inputs = LossInputs {
        collocation: &b.collocation,
        constraints: &b.constraints,
        distillation: Some((&b.distillation, &targets)),
    };
    let w = LossWeights::default();
    let (bd, _) = assemble_loss(&student, &problem, &inputs, &w, 0.7).unwrap();
    let manual = 0.7 * (bd.l_pde + 12.0 * bd.l_bc + 15.0 * bd.l_term) + 1.5 * bd.l_kd;
    let gap = (bd.total - manual).abs() / manual.abs().max(1.0);
    ok &= gap <= 1e-12;
    msgs.push(format!("weighted-total gap {gap:.1e}"));

    let raw = raw_informed_weights(&[0.0, 0.5, 1.0], 0.5);
    ok &= raw == vec![1.0, 1.25, 1.5];
    let mut norm = raw.clone();
    normalize_mean_one(&mut norm);
    let mean = norm.iter().sum::<f64>() / 3.0;
    ok &= (mean - 1.0).abs() < 1e-12;
    msgs.push(format!("informed weights {raw:?}"));
    check(ok, msgs.join(", "))
}

// ---------------------------------------------------------------- 7-10

fn criterion_bs_desk(run: &InDomainRun) -> Outcome {
    let r = &run.report;
    let rel_l2 = r.student.accuracy.rel_l2.unwrap_or(f64::INFINITY);
    let (k1, k500) = (
        r.kd_loss_first.unwrap_or(0.0),
        r.kd_loss_500.unwrap_or(f64::INFINITY),
    );
    let drop = k1 / k500;
    check(
        rel_l2 < 5e-2 && drop >= 1e2,
        format!(
            "student relL2 {rel_l2:.3e} (< 5e-2; teacher {:.3e}), KD loss {k1:.2e} -> {k500:.2e} at iter 500, drop x{drop:.0} (>= 100)",
            r.teacher.accuracy.rel_l2.unwrap_or(f64::NAN)
        ),
    )
}

fn criterion_latency(run: &InDomainRun) -> Outcome {
    let plan = LatencyPlan::default();
    let pair = [
        (&run.teacher.network, "teacher"),
        (&run.student.network, "student"),
    ];
    let times = measure_latencies(&pair, &plan).map_err(|e| e.to_string())?;
    let (t, s) = (&times[0], &times[1]);
    let ratio = speedup_ratio(t, s).map_err(|e| e.to_string())?;
    let r_flops = 5150.0 / 860.0;
    let bound = combined_bound(r_flops, 0.02, 1.0).unwrap();
    check(
        ratio >= 3.0 && ratio <= 1.25 * bound,
        format!(
            "median {:.3} ms / {:.3} ms = x{ratio:.2} (>= 3; bound x{bound:.2} with 1.25 slack) on {}",
            t.median_ms, s.median_ms, t.fingerprint.cpu_model
        ),
    )
}

fn criterion_ablation(teacher: &MlpNetwork) -> Outcome {
    let recipe = ablation_recipe(Scale::Desk);
    let seeds = [0u64, 1, 2, 3, 4];
    let rep = run_equal_arch_ablation(&recipe, teacher, &seeds, None).map_err(|e| e.to_string())?;
    let max_delta = rep
        .seeds
        .iter()
        .map(|s| s.latency_delta.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let detail: Vec<String> = rep
        .seeds
        .iter()
        .map(|s| format!("{:.2e}/{:.2e}", s.distilled.rmse, s.plain.rmse))
        .collect();
    check(
        max_delta < 0.10 && rep.distilled_wins >= 3,
        format!(
            "max latency delta {:.1}% (< 10%), distilled RMSE <= plain in {}/5 seeds [{}]",
            100.0 * max_delta,
            rep.distilled_wins,
            detail.join(", ")
        ),
    )
}

fn criterion_ood(teacher: &MlpNetwork) -> Outcome {
    let base = bs_ood_recipe(Scale::Desk);
    let mut good_seeds = 0;
    let mut detail = Vec::new();
    for seed in 0..5u64 {
        let mut r = base.clone();
        r.seed = seed;
        let (b, _) =
            run_ood_suite(&r, teacher, Variant::Baseline, None).map_err(|e| e.to_string())?;
        let (p, _) =
            run_ood_suite(&r, teacher, Variant::KdPinnPlus, None).map_err(|e| e.to_string())?;
        let c = ood_comparison(&b, &p).map_err(|e| e.to_string())?;
        if c.improved >= 3 {
            good_seeds += 1;
        }
        detail.push(format!("{}/5", c.improved));
    }
    check(
        good_seeds >= 3,
        format!(
            "regions improved per seed [{}]; seeds with >= 3: {good_seeds}/5",
            detail.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- 11

fn criterion_full_scale() -> Outcome {
    let run =
        run_in_domain_bs(&bs_in_domain_recipe(Scale::Full), None).map_err(|e| e.to_string())?;
    let acc = &run.report.student.accuracy;
    let rel_l2 = acc.rel_l2.unwrap_or(f64::INFINITY);
    let bs_ok = acc.rmse <= 2.0 * 2.286e-3 && rel_l2 <= 2.0 * 1.017e-2;
    let cross = run_cross_pde(&cross_pde_recipes(Scale::Full), None).map_err(|e| e.to_string())?;
    let row = |name: &str| {
        cross
            .rows
            .iter()
            .find(|r| r.name.starts_with(name))
            .cloned()
    };
    let (burgers, ns, fast) = (
        row("burgers_"),
        row("navier_stokes_full"),
        row("navier_stokes_fast"),
    );
    let ordering = match (&burgers, &ns) {
        (Some(b), Some(n)) => b.speedup.zip(n.speedup).is_some_and(|(x, y)| x > y),
        _ => false,
    };
    let fast_ok = fast
        .as_ref()
        .and_then(|f| f.student.as_ref().zip(f.teacher.as_ref()))
        .is_some_and(|(s, t)| s.rmse <= 1.05 * t.rmse);
    check(
        bs_ok && ordering && fast_ok,
        format!(
            "student RMSE {:.3e}, relL2 {rel_l2:.3e}; Burgers speedup > NS speedup: {ordering}; fast NS student within 5% of teacher: {fast_ok}",
            acc.rmse
        ),
    )
}

fn report(n: usize, name: &str, start: Instant, outcome: &Outcome) {
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(m) => println!("criterion {n:>2} PASS  {name}: {m} [{secs:.0}s]"),
        Err(m) => println!("criterion {n:>2} FAIL  {name}: {m} [{secs:.0}s]"),
    }
}

fn main() {
    // `cargo test -- --list` and filters from the harness do not apply here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    let run = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| -> usize {
        let start = Instant::now();
        let outcome = f();
        report(n, name, start, &outcome);
        outcome.is_err() as usize
    };
    failed += run(1, "autodiff correctness", &mut criterion_autodiff);
    failed += run(2, "reference residuals", &mut criterion_reference_residuals);
    failed += run(3, "Gaussian KL identity", &mut criterion_kl);
    failed += run(4, "FLOP ratio and bounds", &mut criterion_flops_and_bounds);
    failed += run(5, "Sobol/Owen sampling", &mut criterion_sobol);
    failed += run(6, "Huber, curriculum, weights", &mut criterion_loss_pieces);

    let start = Instant::now();
    let bs = run_in_domain_bs(&bs_in_domain_recipe(Scale::Desk), None);
    match bs {
        Ok(bs) => {
            let o = criterion_bs_desk(&bs);
            report(7, "Black-Scholes desk run", start, &o);
            failed += o.is_err() as usize;
            failed += run(8, "latency speedup", &mut || criterion_latency(&bs));
            failed += run(9, "equal-architecture ablation", &mut || {
                criterion_ablation(&bs.teacher.network)
            });
            failed += run(10, "KD-PINN+ out-of-domain", &mut || {
                criterion_ood(&bs.teacher.network)
            });
        }
        Err(e) => {
            for (n, name) in [
                (7, "Black-Scholes desk run"),
                (8, "latency speedup"),
                (9, "equal-architecture ablation"),
                (10, "KD-PINN+ out-of-domain"),
            ] {
                report(n, name, start, &Err(format!("desk training failed: {e}")));
                failed += 1;
            }
        }
    }
    if std::env::var("KDPINN_FULL_SCALE").is_ok_and(|v| v == "1") {
        failed += run(11, "full-scale reproduction", &mut criterion_full_scale);
    } else {
        println!(
            "criterion 11 SKIP  full-scale reproduction: set KDPINN_FULL_SCALE=1 (several hours)"
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all executed criteria passed");
}
