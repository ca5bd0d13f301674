//! Train on a synthetic latent-factor log and compare against popularity.
//!
//! ```bash
//! cargo run --release -p bcipm --example train_synthetic -- --epochs 100 --dim 32
//! ```

use bcipm::eval::popularity_baseline;
use bcipm::synthetic::{generate, SyntheticConfig};
use bcipm::{leave_one_out_split, TrainConfig, Trainer};
use clap::Parser;

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 1e-4)]
    gamma: f64,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    report_every: usize,
}

fn main() -> bcipm::Result<()> {
    let args = Args::parse();
    let data = generate(&SyntheticConfig::default())?;
    let split = leave_one_out_split(&data);
    println!("{}", serde_json::to_string(&split.train.stats()).unwrap());

    let target = split.train.target_behavior();
    let all: Vec<usize> = (0..split.train.num_behaviors()).collect();
    let pop_t = popularity_baseline(&split, &[target], &[10])?
        .hr(10)
        .unwrap();
    let pop_a = popularity_baseline(&split, &all, &[10])?.hr(10).unwrap();
    println!("popularity HR@10: target {pop_t:.4}, all behaviors {pop_a:.4}");

    let cfg = TrainConfig {
        dim: args.dim,
        epochs: args.epochs,
        lr: args.lr,
        batch_size: args.batch_size,
        beta: args.beta,
        gamma: args.gamma,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(&split.train, cfg)?;
    let mut first = None;
    while trainer.epoch < args.epochs {
        let s = trainer.train_epoch()?;
        first.get_or_insert(s.loss_total);
        if s.epoch % args.report_every == 0 || s.epoch == args.epochs {
            let r = trainer.evaluate(&split, &[5, 10])?;
            println!(
                "epoch {:>3}  loss {:.5}  bce {:.5}  bpr {:.5}  HR@10 {:.4}  NDCG@10 {:.4}  ({:.2}s)",
                s.epoch,
                s.loss_total,
                s.loss_bce,
                s.loss_bpr,
                r.hr(10).unwrap(),
                r.ndcg(10).unwrap(),
                s.seconds
            );
            if s.epoch == args.epochs {
                println!(
                    "loss ratio {:.4}, HR@10 / best popularity {:.3}",
                    s.loss_total / first.unwrap(),
                    r.hr(10).unwrap() / pop_t.max(pop_a)
                );
            }
        }
    }
    Ok(())
}
