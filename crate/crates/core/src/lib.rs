//! Multi-behavior recommendation with behavior-contextualized item
//! preferences.
//!
//! The model propagates base user/item embeddings over a unified graph of
//! all behaviors, passes `(user, item, behavior)` triples through a gated
//! preference network, enhances target-behavior representations with a
//! second propagation, and blends the two scores per user. Training
//! optimises a cross-entropy objective over every behavior jointly with a
//! pairwise ranking objective over the target behavior, using hand-written
//! reverse-mode gradients.
//!
//! ## Modules
//!
//! - [`dataset`]: TSV ingestion, deduplication, leave-one-out splits and
//!   split snapshots
//! - [`graph`]: normalized adjacency, propagation and its reverse pass
//! - [`bipn`]: the gated preference network and its gradients
//! - [`fusion`]: model state, enhancement, λ policy and fused scoring
//! - [`training`]: sampling, losses, Adam and the epoch loop
//! - [`checkpoint`]: binary checkpoints with bit-exact resume
//! - [`eval`]: full-catalog HR@K / NDCG@K
//! - [`cli`]: the `bcipm` command line
//! - [`synthetic`]: latent-factor generator for experiments and tests
//!
//! ## Examples
//!
//! ```bash
//! cargo run --release -p bcipm --example prepare_split
//! cargo run --release -p bcipm --example propagation
//! cargo run --release -p bcipm --example preference_network
//! cargo run --release -p bcipm --example gradient_check
//! cargo run --release -p bcipm --example train_synthetic
//! cargo run --release -p bcipm --example lambda_policies
//! cargo run --release -p bcipm --example ablation_study
//! cargo run --release -p bcipm --example checkpoint_resume
//! ```

pub mod bipn;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod graph;
pub mod matrix;
pub mod synthetic;
pub mod training;

pub use checkpoint::Checkpoint;
pub use dataset::{leave_one_out_split, BehaviorRegistry, Dataset, Split};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalReport};
pub use fusion::{Architecture, LambdaPolicy, ModelState};
pub use matrix::{EmbeddingMatrix, Matrix};
pub use training::{TrainConfig, Trainer};
