//! Synthetic multi-behavior logs drawn from shared latent factors.
//!
//! Each user and item gets a latent vector; behavior `b` scores pairs with
//! a per-behavior gate over the factors (all ones for the target
//! behavior), adds an item popularity bias, and each user picks
//! `per_user` items by Gumbel top-k sampling at the given temperature.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};

use crate::dataset::{BehaviorRegistry, Dataset};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorSpec {
    pub name: String,
    pub per_user: usize,
    /// Standard deviation of the gate around 1; 0 means the behavior sees
    /// the same factors as the target.
    pub gate_noise: f64,
}

impl BehaviorSpec {
    pub fn new(name: &str, per_user: usize, gate_noise: f64) -> Self {
        Self {
            name: name.to_string(),
            per_user,
            gate_noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub factors: usize,
    /// Auxiliary behaviors first, target behavior last.
    pub behaviors: Vec<BehaviorSpec>,
    pub temperature: f64,
    pub popularity_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            users: 100,
            items: 60,
            factors: 4,
            behaviors: vec![
                BehaviorSpec::new("click", 12, 0.0),
                BehaviorSpec::new("cart", 6, 0.0),
                BehaviorSpec::new("buy", 5, 0.0),
            ],
            temperature: 0.3,
            popularity_std: 0.3,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn registry(&self) -> Result<BehaviorRegistry> {
        let names: Vec<&str> = self.behaviors.iter().map(|b| b.name.as_str()).collect();
        BehaviorRegistry::new(&names)
    }
}

/// TSV lines `u<k>\ti<k>\t<behavior>\t<timestamp>`.
pub fn generate_tsv(cfg: &SyntheticConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.factors;
    let mut normal =
        |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let user_f = normal(cfg.users * r);
    let item_f = normal(cfg.items * r);
    let bias: Vec<f64> = normal(cfg.items)
        .into_iter()
        .map(|z| z * cfg.popularity_std)
        .collect();
    let last = cfg.behaviors.len() - 1;
    let gates: Vec<Vec<f64>> = cfg
        .behaviors
        .iter()
        .enumerate()
        .map(|(b, spec)| {
            if b == last {
                vec![1.0; r]
            } else {
                normal(r)
                    .into_iter()
                    .map(|z| 1.0 + spec.gate_noise * z)
                    .collect()
            }
        })
        .collect();

    let gumbel = Gumbel::new(0.0, 1.0).expect("valid gumbel");
    let scale = 1.0 / (r as f64).sqrt();
    let mut out = String::new();
    for u in 0..cfg.users {
        let uf = &user_f[u * r..(u + 1) * r];
        for (b, spec) in cfg.behaviors.iter().enumerate() {
            let mut keyed: Vec<(f64, usize)> = (0..cfg.items)
                .map(|i| {
                    let vf = &item_f[i * r..(i + 1) * r];
                    let s: f64 =
                        (0..r).map(|k| gates[b][k] * uf[k] * vf[k]).sum::<f64>() * scale + bias[i];
                    (s / cfg.temperature + gumbel.sample(&mut rng), i)
                })
                .collect();
            keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
            for &(_, i) in keyed.iter().take(spec.per_user.min(cfg.items)) {
                let ts: u32 = rng.random_range(0..1_000_000);
                let _ = writeln!(out, "u{u}\ti{i}\t{}\t{ts}", spec.name);
            }
        }
    }
    out
}

pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    Dataset::parse_tsv(
        &generate_tsv(cfg),
        &cfg.registry()?,
        Path::new("<synthetic>"),
    )
}
