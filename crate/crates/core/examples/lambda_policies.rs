//! How the fusion weight moves scores between the preference-network term
//! and the enhanced-graph term.
//!
//! ```bash
//! cargo run --release -p bcipm --example lambda_policies
//! ```

use bcipm::dataset::leave_one_out_split;
use bcipm::fusion::{lambda_for, LambdaPolicy};
use bcipm::synthetic::{generate, SyntheticConfig};
use bcipm::{TrainConfig, Trainer};

fn main() -> bcipm::Result<()> {
    let split = leave_one_out_split(&generate(&SyntheticConfig::default())?);
    let train = &split.train;
    let cfg = TrainConfig {
        dim: 16,
        epochs: 20,
        lr: 1e-2,
        batch_size: 128,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(train, cfg)?;
    while trainer.epoch < 20 {
        trainer.train_epoch()?;
    }

    let user = split.test[0].user;
    println!(
        "user {} has {} target items; inverse-count gives λ = {:.3}",
        train.users().raw(user),
        train.target_items_of(user).len(),
        lambda_for(user, LambdaPolicy::InverseCount, train)
    );
    for policy in [
        LambdaPolicy::InverseCount,
        LambdaPolicy::fixed(0.0)?,
        LambdaPolicy::fixed(0.5)?,
        LambdaPolicy::fixed(1.0)?,
    ] {
        trainer.state.set_lambda_policy(policy);
        let r = trainer.evaluate(&split, &[10])?;
        println!(
            "{:<14} HR@10 {:.4}  NDCG@10 {:.4}",
            policy.to_string(),
            r.hr(10).unwrap(),
            r.ndcg(10).unwrap()
        );
    }
    Ok(())
}
