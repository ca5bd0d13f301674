//! Model state: unified-graph propagation of the base embeddings, target
//! behavior enhancement `Ê = E + E'`, the per-user blend weight λ and the
//! fused score
//!
//! ```text
//! y_ui = (1 − λ) · ⟨agg_u, e_i⟩ + λ · ⟨ê_u, ê_i⟩
//! ```
//!
//! where `e_i` is a row of `E` and `ê_u`, `ê_i` are rows of `Ê`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::bipn::{self, BipnParams, FilterLayers};
use crate::dataset::{Dataset, ItemId, UserId};
use crate::error::{Error, Result};
use crate::graph::{
    build_adjacency, propagate, propagate_backward, NormalizedAdjacency, PropagationTrace,
};
use crate::matrix::{dot, EmbeddingMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPolicy {
    /// `λ = 1 / N_u`, with `λ = 1` when `N_u = 0`.
    InverseCount,
    Fixed(f64),
}

impl LambdaPolicy {
    pub fn fixed(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Config(format!(
                "fixed lambda {value} outside [0, 1]"
            )));
        }
        Ok(Self::Fixed(value))
    }
}

impl fmt::Display for LambdaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaPolicy::InverseCount => write!(f, "inverse-count"),
            LambdaPolicy::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

impl FromStr for LambdaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inverse-count" | "inverse" => Ok(Self::InverseCount),
            other => match other.strip_prefix("fixed:") {
                Some(v) => Self::fixed(
                    v.parse()
                        .map_err(|_| Error::Config(format!("invalid lambda value {v:?}")))?,
                ),
                None => Err(Error::Config(format!(
                    "lambda must be `inverse-count` or `fixed:<v>`, got {other:?}"
                ))),
            },
        }
    }
}

pub fn lambda_for(user: UserId, policy: LambdaPolicy, train: &Dataset) -> f64 {
    match policy {
        LambdaPolicy::InverseCount => match train.user_target_count()[user as usize] {
            0 => 1.0,
            n => 1.0 / n as f64,
        },
        LambdaPolicy::Fixed(v) => v.clamp(0.0, 1.0),
    }
}

/// How the base embeddings are propagated before the preference network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PretrainMode {
    /// One graph over the union of all behaviors' edges.
    Aggregated,
    /// One graph per behavior, propagated outputs summed.
    Separate,
    /// Base embeddings are used directly.
    Disabled,
}

impl fmt::Display for PretrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PretrainMode::Aggregated => "agg",
            PretrainMode::Separate => "sep",
            PretrainMode::Disabled => "none",
        })
    }
}

impl FromStr for PretrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "agg" => Ok(Self::Aggregated),
            "sep" => Ok(Self::Separate),
            "none" => Ok(Self::Disabled),
            other => Err(Error::Config(format!(
                "unknown pretrain strategy {other:?}"
            ))),
        }
    }
}

/// Architectural switches, including every ablation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Architecture {
    pub dim: usize,
    pub pretrain: PretrainMode,
    pub pretrain_layers: usize,
    pub enhance_layers: usize,
    /// Include auxiliary behaviors in the pre-training graph.
    pub aux_in_pretrain: bool,
    pub use_enhancement: bool,
    pub use_bipn: bool,
    pub filters: FilterLayers,
    /// Stop gradients through the propagated part `E'` of `Ê`.
    pub detach_enhancement: bool,
    pub lambda: LambdaPolicy,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            dim: 64,
            pretrain: PretrainMode::Aggregated,
            pretrain_layers: 2,
            enhance_layers: 2,
            aux_in_pretrain: true,
            use_enhancement: true,
            use_bipn: true,
            filters: FilterLayers::default(),
            detach_enhancement: false,
            lambda: LambdaPolicy::InverseCount,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if !self.use_bipn && !self.use_enhancement {
            return Err(Error::Config(
                "removing both the preference network and the enhancement leaves no scorer".into(),
            ));
        }
        Ok(())
    }
}

/// `Ê = E + propagate(target_adj, E, L)`.
pub fn enhance(
    e: &EmbeddingMatrix,
    target_adj: &NormalizedAdjacency,
    layers: usize,
) -> Result<EmbeddingMatrix> {
    Ok(enhance_with_trace(e, target_adj, layers)?.0)
}

fn enhance_with_trace(
    e: &EmbeddingMatrix,
    target_adj: &NormalizedAdjacency,
    layers: usize,
) -> Result<(EmbeddingMatrix, PropagationTrace)> {
    let (mut prop, trace) = propagate(target_adj, e, layers)?;
    prop.add_scaled(e, 1.0);
    Ok((prop, trace))
}

/// `(1 − λ)·⟨agg, e_i⟩ + λ·⟨ê_u, ê_i⟩`.
pub fn score(user: UserId, item: ItemId, agg_pref: &[f64], state: &ModelState, lambda: f64) -> f64 {
    let m = state.num_users;
    let mut y = 0.0;
    if lambda < 1.0 {
        y += (1.0 - lambda) * dot(agg_pref, state.e.row(m + item as usize));
    }
    if lambda > 0.0 {
        if let Some(enh) = &state.e_enh {
            y += lambda * dot(enh.row(user as usize), enh.row(m + item as usize));
        }
    }
    y
}

/// Trainable parameters together with the graphs and the derived
/// embeddings `E` and `Ê`.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub base: EmbeddingMatrix,
    pub bipn: BipnParams,
    arch: Architecture,
    num_users: usize,
    num_items: usize,
    pretrain_adjs: Vec<NormalizedAdjacency>,
    target_adj: NormalizedAdjacency,
    e: EmbeddingMatrix,
    e_enh: Option<EmbeddingMatrix>,
    pretrain_traces: Vec<PropagationTrace>,
    enh_trace: Option<PropagationTrace>,
}

/// Base embedding initialisation scale.
pub const BASE_INIT_STD: f64 = 0.1;

impl ModelState {
    /// Randomly initialised model: base rows ~ N(0, 0.1²), Glorot network
    /// weights.
    pub fn init<R: Rng + ?Sized>(train: &Dataset, arch: Architecture, rng: &mut R) -> Result<Self> {
        let rows = train.num_users() + train.num_items();
        let normal = Normal::new(0.0, BASE_INIT_STD).expect("valid std");
        let data = (0..rows * arch.dim).map(|_| normal.sample(rng)).collect();
        let base = EmbeddingMatrix::from_vec(rows, arch.dim, data)?;
        let bipn = BipnParams::init(arch.dim, train.num_behaviors(), rng);
        Self::new(train, arch, base, bipn)
    }

    pub fn new(
        train: &Dataset,
        arch: Architecture,
        base: EmbeddingMatrix,
        bipn: BipnParams,
    ) -> Result<Self> {
        arch.validate()?;
        let (m, n) = (train.num_users(), train.num_items());
        if base.rows() != m + n || base.cols() != arch.dim {
            return Err(Error::Shape(format!(
                "base embeddings {}x{}, expected {}x{}",
                base.rows(),
                base.cols(),
                m + n,
                arch.dim
            )));
        }
        if bipn.dim() != arch.dim || bipn.num_behaviors() != train.num_behaviors() {
            return Err(Error::Shape(
                "network parameters do not match the model".into(),
            ));
        }
        let target = train.target_behavior();
        let behaviors: Vec<usize> = if arch.aux_in_pretrain {
            (0..train.num_behaviors()).collect()
        } else {
            vec![target]
        };
        let pretrain_adjs = match arch.pretrain {
            PretrainMode::Aggregated => vec![build_adjacency(train, &behaviors)?],
            PretrainMode::Separate => behaviors
                .iter()
                .map(|&b| build_adjacency(train, &[b]))
                .collect::<Result<_>>()?,
            PretrainMode::Disabled => Vec::new(),
        };
        let target_adj = build_adjacency(train, &[target])?;
        let mut state = Self {
            e: base.clone(),
            base,
            bipn,
            arch,
            num_users: m,
            num_items: n,
            pretrain_adjs,
            target_adj,
            e_enh: None,
            pretrain_traces: Vec::new(),
            enh_trace: None,
        };
        state.materialize()?;
        Ok(state)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn target_adjacency(&self) -> &NormalizedAdjacency {
        &self.target_adj
    }

    pub fn pretrain_adjacencies(&self) -> &[NormalizedAdjacency] {
        &self.pretrain_adjs
    }

    /// Propagated embeddings `E`.
    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.e
    }

    /// Enhanced embeddings `Ê`, absent when the enhancement is removed.
    pub fn enhanced(&self) -> Option<&EmbeddingMatrix> {
        self.e_enh.as_ref()
    }

    /// Recomputes `E` and `Ê` from the current base embeddings.
    pub fn materialize(&mut self) -> Result<()> {
        self.pretrain_traces.clear();
        self.e = match self.arch.pretrain {
            PretrainMode::Disabled => self.base.clone(),
            _ => {
                let mut sum = EmbeddingMatrix::zeros(self.base.rows(), self.base.cols());
                for adj in &self.pretrain_adjs {
                    let (e, trace) = propagate(adj, &self.base, self.arch.pretrain_layers)?;
                    sum.add_scaled(&e, 1.0);
                    self.pretrain_traces.push(trace);
                }
                sum
            }
        };
        if self.arch.use_enhancement {
            let (enh, trace) =
                enhance_with_trace(&self.e, &self.target_adj, self.arch.enhance_layers)?;
            self.e_enh = Some(enh);
            self.enh_trace = Some(trace);
        } else {
            self.e_enh = None;
            self.enh_trace = None;
        }
        Ok(())
    }

    /// Maps gradients w.r.t. `E` and `Ê` back to the base embeddings.
    pub fn backward(
        &self,
        grad_e: &EmbeddingMatrix,
        grad_enh: Option<&EmbeddingMatrix>,
    ) -> Result<EmbeddingMatrix> {
        let mut total = grad_e.clone();
        if let (Some(g), Some(trace)) = (grad_enh, &self.enh_trace) {
            total.add_scaled(g, 1.0);
            if !self.arch.detach_enhancement {
                let through = propagate_backward(&self.target_adj, trace, g)?;
                total.add_scaled(&through, 1.0);
            }
        }
        match self.arch.pretrain {
            PretrainMode::Disabled => Ok(total),
            _ => {
                let mut out = EmbeddingMatrix::zeros(total.rows(), total.cols());
                for (adj, trace) in self.pretrain_adjs.iter().zip(&self.pretrain_traces) {
                    out.add_scaled(&propagate_backward(adj, trace, &total)?, 1.0);
                }
                Ok(out)
            }
        }
    }

    /// Swaps the fusion weight policy; λ does not affect the embeddings.
    pub fn set_lambda_policy(&mut self, policy: LambdaPolicy) {
        self.arch.lambda = policy;
    }

    /// Effective λ for a user after applying the architecture: 0 without
    /// enhancement, 1 without the preference network.
    pub fn lambda(&self, user: UserId, train: &Dataset) -> f64 {
        if !self.arch.use_bipn {
            1.0
        } else if !self.arch.use_enhancement {
            0.0
        } else {
            lambda_for(user, self.arch.lambda, train)
        }
    }

    /// Aggregated target-behavior preference of `user` over its training
    /// target items; zero when the network is removed.
    pub fn aggregate(&self, user: UserId, train: &Dataset) -> Vec<f64> {
        if !self.arch.use_bipn {
            return vec![0.0; self.arch.dim];
        }
        bipn::aggregate_target_preferences(
            user,
            &self.bipn,
            self.arch.filters,
            train.target_items_of(user),
            &self.e,
            self.num_users,
        )
    }

    /// Scores of every catalog item for one user.
    pub fn score_all(&self, user: UserId, agg: &[f64], lambda: f64) -> Vec<f64> {
        (0..self.num_items as ItemId)
            .map(|i| score(user, i, agg, self, lambda))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.base.is_finite() && self.bipn.is_finite()
    }
}
