//! Compare the analytic gradient of the training objective with central
//! finite differences on a small synthetic model.
//!
//! ```bash
//! cargo run --release -p bcipm --example gradient_check
//! ```

use bcipm::fusion::ModelState;
use bcipm::synthetic::{generate, SyntheticConfig};
use bcipm::training::{
    batch_objective, bce_positives, sample_bce_batch, sample_bpr_triples, Batch, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bcipm::Result<()> {
    let data = generate(&SyntheticConfig {
        users: 8,
        items: 12,
        ..SyntheticConfig::default()
    })?;
    let cfg = TrainConfig {
        dim: 6,
        pretrain_layers: 1,
        enhance_layers: 1,
        negatives: 2,
        gamma: 1e-3,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut state = ModelState::init(&data, cfg.architecture(), &mut rng)?;
    let batch = Batch {
        bce: sample_bce_batch(&data, &bce_positives(&data, &cfg), &mut rng, &cfg),
        bpr: sample_bpr_triples(&data, &mut rng),
    };
    let (_, mut grads) = batch_objective(&state, &data, &batch, cfg.beta, cfg.gamma)?;
    grads.add_l2(&state, cfg.gamma, None);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let n = state.base.as_slice().len();
    for idx in (0..n).step_by(7) {
        let orig = state.base.as_slice()[idx];
        let mut at = |v: f64| -> bcipm::Result<f64> {
            state.base.as_mut_slice()[idx] = v;
            state.materialize()?;
            Ok(batch_objective(&state, &data, &batch, cfg.beta, cfg.gamma)?
                .0
                .total)
        };
        let numeric = (at(orig + h)? - at(orig - h)?) / (2.0 * h);
        at(orig)?;
        let analytic = grads.base.as_slice()[idx];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
        if idx % 35 == 0 {
            println!(
                "base[{idx:>3}]  analytic {analytic:+.6e}  numeric {numeric:+.6e}  rel {rel:.1e}"
            );
        }
    }
    println!("worst relative error over sampled base entries: {worst:.2e}");
    Ok(())
}
