//! Run the gated preference network on one user/item pair under every
//! behavior and with each filter layer removed.
//!
//! ```bash
//! cargo run --release -p bcipm --example preference_network
//! ```

use bcipm::bipn::{forward, score, BipnParams, FilterLayers};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (d, k) = (4, 3);
    let params = BipnParams::init(d, k, &mut rng);
    let e_u = [0.4, -0.1, 0.3, 0.2];
    let e_i = [0.2, 0.5, -0.3, 0.1];

    let settings = [
        ("both gates", FilterLayers::default()),
        (
            "no pre-filter",
            FilterLayers {
                prefilter: false,
                postfilter: true,
            },
        ),
        (
            "no post-filter",
            FilterLayers {
                prefilter: true,
                postfilter: false,
            },
        ),
    ];
    for (name, filters) in settings {
        println!("{name}");
        for b in 0..k {
            let c = forward(&e_u, &e_i, b, &params, filters);
            let fmt = |v: &[f64]| {
                v.iter()
                    .map(|x| format!("{x:+.3}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            println!(
                "  behavior {b}: pref [{}]  logit {:+.4}",
                fmt(&c.pref),
                score(&c.pref, &e_i)
            );
            if !c.h1.is_empty() {
                println!("              gate1 [{}]", fmt(&c.h1));
            }
        }
    }
}
