//! Desk-scale Black–Scholes teacher/student run.
//!
//! `cargo run --release --example bs_desk -- [seed]`

use std::time::Instant;

use kdpinn::experiments::{bs_in_domain_recipe, run_in_domain_bs, Scale};

fn main() -> kdpinn::Result<()> {
    let mut recipe = bs_in_domain_recipe(Scale::Desk);
    if let Some(seed) = std::env::args().nth(1) {
        recipe.seed = seed.parse().expect("seed is an integer");
    }
    let start = Instant::now();
    let run = run_in_domain_bs(&recipe, None)?;
    let r = &run.report;
    println!("finished in {:.0}s", start.elapsed().as_secs_f64());
    for (role, m) in [("teacher", &r.teacher), ("student", &r.student)] {
        println!(
            "{role:8} rmse {:.3e}  rel_l2 {:.3e}  latency {:.2} ms",
            m.accuracy.rmse,
            m.accuracy.rel_l2.unwrap_or(f64::NAN),
            m.latency.as_ref().map_or(f64::NAN, |l| l.median_ms)
        );
    }
    println!(
        "speedup x{:.2} (bound x{:.2}), kd loss {:.2e} -> {:.2e}",
        r.speedup.unwrap_or(f64::NAN),
        r.bounds.s_max,
        r.kd_loss_first.unwrap_or(f64::NAN),
        r.kd_loss_500.unwrap_or(f64::NAN)
    );
    Ok(())
}
