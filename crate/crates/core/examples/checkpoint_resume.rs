//! Train, checkpoint half way, resume in a fresh trainer and confirm the
//! resumed run ends exactly where the uninterrupted one does.
//!
//! ```bash
//! cargo run --release -p bcipm --example checkpoint_resume
//! ```

use bcipm::dataset::leave_one_out_split;
use bcipm::synthetic::{generate, SyntheticConfig};
use bcipm::{Checkpoint, TrainConfig, Trainer};

fn main() -> bcipm::Result<()> {
    let split = leave_one_out_split(&generate(&SyntheticConfig::default())?);
    let cfg = TrainConfig {
        dim: 16,
        epochs: 10,
        lr: 1e-2,
        batch_size: 256,
        ..TrainConfig::default()
    };
    let path = std::env::temp_dir().join("bcipm-demo.ckpt");

    let mut straight = Trainer::new(&split.train, cfg.clone())?;
    while straight.epoch < cfg.epochs {
        let s = straight.train_epoch()?;
        if s.epoch == cfg.epochs / 2 {
            straight.save_checkpoint(&path)?;
            println!("checkpoint after epoch {} at {}", s.epoch, path.display());
        }
    }

    let mut resumed = Checkpoint::load(&path)?.restore(&split.train, Some(&cfg))?;
    println!("resuming at epoch {}", resumed.epoch);
    while resumed.epoch < cfg.epochs {
        resumed.train_epoch()?;
    }

    let a = straight.evaluate(&split, &[10])?;
    let b = resumed.evaluate(&split, &[10])?;
    println!("straight: {}", a.to_json());
    println!("resumed:  {}", b.to_json());
    println!(
        "identical: {}",
        a == b && straight.state.base == resumed.state.base
    );
    Ok(())
}
