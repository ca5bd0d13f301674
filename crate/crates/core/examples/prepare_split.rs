//! Ingest a TSV interaction log, split it leave-one-out and write a
//! snapshot that `bcipm train --split` can consume.
//!
//! ```bash
//! cargo run --release -p bcipm --example prepare_split -- --out /tmp/demo.split
//! cargo run --release -p bcipm --example prepare_split -- --data log.tsv --behaviors pv,cart,buy
//! ```
//!
//! Without `--data` a synthetic log is generated first.

use std::path::PathBuf;

use bcipm::cli::cmd_prepare;
use bcipm::synthetic::{generate_tsv, SyntheticConfig};
use clap::Parser;

#[derive(Parser)]
struct Args {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "click,cart,buy")]
    behaviors: String,
    #[arg(long, default_value = "demo.split")]
    out: PathBuf,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args = Args::parse();
    let data = match args.data {
        Some(p) => p,
        None => {
            let p = std::env::temp_dir().join("bcipm-synthetic.tsv");
            std::fs::write(&p, generate_tsv(&SyntheticConfig::default()))?;
            println!("synthetic log written to {}", p.display());
            p
        }
    };
    let (split, stats) = cmd_prepare(&data, &args.behaviors, &args.out)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    println!(
        "{} users held out, snapshot at {}",
        split.test.len(),
        args.out.display()
    );
    for h in split.test.iter().take(5) {
        println!(
            "  {} -> {} (order {})",
            split.train.users().raw(h.user),
            split.train.items().raw(h.item),
            h.order
        );
    }
    Ok(())
}
