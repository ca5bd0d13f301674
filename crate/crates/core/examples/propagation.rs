//! Build the normalized bipartite graph of a tiny log and propagate one-hot
//! embeddings through it, layer by layer.
//!
//! ```bash
//! cargo run --release -p bcipm --example propagation
//! ```

use std::path::Path;

use bcipm::graph::{build_adjacency, propagate};
use bcipm::{BehaviorRegistry, Dataset, Matrix};

const LOG: &str = "\
alice\tbook\tview
alice\tlamp\tview
alice\tbook\tbuy
bob\tlamp\tbuy
bob\tmug\tview
carol\tmug\tbuy
";

fn main() -> bcipm::Result<()> {
    let reg = BehaviorRegistry::parse("view,buy")?;
    let data = Dataset::parse_tsv(LOG, &reg, Path::new("inline"))?;
    let (m, n) = (data.num_users(), data.num_items());
    let adj = build_adjacency(&data, &[0, 1])?;
    println!("{m} users, {n} items, {} stored entries", adj.nnz());

    let names: Vec<String> = (0..m as u32)
        .map(|u| data.users().raw(u).to_string())
        .chain((0..n as u32).map(|i| data.items().raw(i).to_string()))
        .collect();
    for r in 0..adj.rows() {
        let row: Vec<String> = adj
            .row(r)
            .map(|(c, v)| format!("{}:{v:.3}", names[c]))
            .collect();
        println!("  {:<6} deg {}  {}", names[r], adj.degree(r), row.join(" "));
    }

    // one-hot on alice: how much of her embedding reaches each node
    let mut e0 = Matrix::zeros(m + n, 1);
    e0.set(0, 0, 1.0);
    for layers in 0..=3 {
        let (e, _) = propagate(&adj, &e0, layers)?;
        let col: Vec<String> = (0..m + n).map(|r| format!("{:.3}", e.get(r, 0))).collect();
        println!("L={layers}: {}", col.join(" "));
    }
    Ok(())
}
