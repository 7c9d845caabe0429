//! Ablation on the synthetic corpus: labeled-only baseline vs. consistency
//! vs. consistency plus re-assembly, over several master seeds.
//!
//! cargo run --release --example ssl_uplift -- [seeds] [lr]

use std::time::Instant;

use scr::synthetic::{generate, median, run_variant, SyntheticSpec, Variant};
use scr::TrainConfig;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let lr: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1e-5);
    let embed: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(64);
    let hidden: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(128);

    let start = Instant::now();
    let mut acc = [vec![], vec![], vec![]];
    for seed in 0..seeds {
        let corpus = generate(&SyntheticSpec { seed, ..Default::default() });
        for (vi, v) in Variant::ALL.into_iter().enumerate() {
            let t = Instant::now();
            let base = TrainConfig { master_seed: seed, lr, ..Default::default() };
            let out = run_variant(&corpus, v, &base, embed, hidden)?;
            println!(
                "seed {seed} {:<20} test_acc {:.4} best_epoch {:>3} epochs {:>3} ({:.1}s)",
                v.name(),
                out.test_accuracy,
                out.best_epoch,
                out.epochs_run,
                t.elapsed().as_secs_f64()
            );
            acc[vi].push(out.test_accuracy);
        }
    }
    for (v, a) in Variant::ALL.iter().zip(&acc) {
        println!("{:<20} median test accuracy {:.4}", v.name(), median(a));
    }
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
