//! Train ablation variants on synthetic data whose auxiliary behaviors see
//! noisy versions of the target factors.
//!
//! ```bash
//! cargo run --release -p bcipm --example ablation_study -- --variants full,wo-enh,wo-net
//! ```

use bcipm::cli::{run_variant, Variant};
use bcipm::eval::EvalOptions;
use bcipm::synthetic::{generate, BehaviorSpec, SyntheticConfig};
use bcipm::{leave_one_out_split, TrainConfig};
use clap::Parser;

#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "full,wo-enh,wo-net")]
    variants: String,
    #[arg(long, default_value_t = 0.5)]
    gate_noise: f64,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 7)]
    data_seed: u64,
}

fn main() -> bcipm::Result<()> {
    let args = Args::parse();
    let synth = SyntheticConfig {
        behaviors: vec![
            BehaviorSpec::new("click", 12, args.gate_noise),
            BehaviorSpec::new("cart", 6, args.gate_noise),
            BehaviorSpec::new("buy", 5, 0.0),
        ],
        seed: args.data_seed,
        ..SyntheticConfig::default()
    };
    let split = leave_one_out_split(&generate(&synth)?);
    let base = TrainConfig {
        dim: args.dim,
        epochs: args.epochs,
        lr: args.lr,
        batch_size: args.batch_size,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let opts = EvalOptions {
        cutoffs: vec![10],
        ..EvalOptions::default()
    };
    println!("variant\thr@10\tndcg@10");
    for v in Variant::parse_list(&args.variants)? {
        let r = run_variant(&split, &v.configure(&base), &opts)?;
        println!("{v}\t{:.4}\t{:.4}", r.hr(10).unwrap(), r.ndcg(10).unwrap());
    }
    Ok(())
}
