//! Symmetric-normalized user–item adjacency and light graph propagation
//! with layer combination, plus the matching reverse pass.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{EmbeddingMatrix, Matrix};

/// `D^{-1/2} A D^{-1/2}` over the bipartite graph, stored in compressed
/// rows with sorted column indices. Rows `0..M` are users, `M..M+N` items.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    num_users: usize,
    num_items: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    /// Builds the normalized adjacency from a list of `(user, item)` edges.
    /// Duplicate edges collapse into one.
    pub fn from_edges(num_users: usize, num_items: usize, edges: &[(u32, u32)]) -> Self {
        let rows = num_users + num_items;
        let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); rows];
        for &(u, i) in edges {
            neighbors[u as usize].push(num_users as u32 + i);
            neighbors[num_users + i as usize].push(u);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }
        let inv_sqrt: Vec<f64> = neighbors
            .iter()
            .map(|nb| {
                if nb.is_empty() {
                    0.0
                } else {
                    1.0 / (nb.len() as f64).sqrt()
                }
            })
            .collect();

        let mut indptr = Vec::with_capacity(rows + 1);
        indptr.push(0);
        let nnz = neighbors.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (r, nb) in neighbors.iter().enumerate() {
            for &c in nb {
                indices.push(c);
                values.push(inv_sqrt[r] * inv_sqrt[c as usize]);
            }
            indptr.push(indices.len());
        }
        Self {
            num_users,
            num_items,
            indptr,
            indices,
            values,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn rows(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn value(&self, r: usize, c: usize) -> Option<f64> {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .binary_search(&(c as u32))
            .ok()
            .map(|k| self.values[span.start + k])
    }

    pub fn degree(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    /// `out = Â · x`. Rows are independent, so the result does not depend
    /// on the thread count.
    pub fn spmm(&self, x: &Matrix) -> Matrix {
        let d = x.cols();
        let mut out = Matrix::zeros(self.rows(), d);
        if d == 0 {
            return out;
        }
        out.as_mut_slice()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(r, dst)| {
                for (c, v) in self.row(r) {
                    for (o, s) in dst.iter_mut().zip(x.row(c)) {
                        *o += v * s;
                    }
                }
            });
        out
    }
}

/// Normalized adjacency over the union of the selected behaviors' edges.
pub fn build_adjacency(train: &Dataset, behaviors: &[usize]) -> Result<NormalizedAdjacency> {
    if behaviors.is_empty() {
        return Err(Error::Config("behavior subset must be non-empty".into()));
    }
    let mut edges = Vec::new();
    for &b in behaviors {
        if b >= train.num_behaviors() {
            return Err(Error::Config(format!("behavior index {b} out of range")));
        }
        edges.extend(train.interactions(b).iter().map(|it| (it.user, it.item)));
    }
    Ok(NormalizedAdjacency::from_edges(
        train.num_users(),
        train.num_items(),
        &edges,
    ))
}

/// Layer outputs `E^(0..=L)` of a forward propagation and their weights.
#[derive(Debug, Clone)]
pub struct PropagationTrace {
    pub layers: Vec<EmbeddingMatrix>,
    pub weights: Vec<f64>,
}

impl PropagationTrace {
    pub fn num_layers(&self) -> usize {
        self.layers.len() - 1
    }
}

/// `α_l = 1 / (l + 1)`.
pub fn layer_weight(l: usize) -> f64 {
    1.0 / (l as f64 + 1.0)
}

/// `E = Σ_l α_l Â^l E0` for `l = 0..=layers`.
pub fn propagate(
    adj: &NormalizedAdjacency,
    e0: &EmbeddingMatrix,
    layers: usize,
) -> Result<(EmbeddingMatrix, PropagationTrace)> {
    if e0.rows() != adj.rows() {
        return Err(Error::Shape(format!(
            "adjacency has {} rows, embeddings {}",
            adj.rows(),
            e0.rows()
        )));
    }
    let mut out = e0.clone();
    let mut trace = PropagationTrace {
        layers: vec![e0.clone()],
        weights: vec![layer_weight(0)],
    };
    for l in 1..=layers {
        let next = adj.spmm(&trace.layers[l - 1]);
        out.add_scaled(&next, layer_weight(l));
        trace.layers.push(next);
        trace.weights.push(layer_weight(l));
    }
    Ok((out, trace))
}

/// Gradient of `propagate` w.r.t. `E0`: `Σ_l α_l Â^l G`, evaluated by
/// Horner's rule using the symmetry of `Â`.
pub fn propagate_backward(
    adj: &NormalizedAdjacency,
    trace: &PropagationTrace,
    grad: &EmbeddingMatrix,
) -> Result<EmbeddingMatrix> {
    let first = &trace.layers[0];
    if !grad.same_shape(first) || adj.rows() != grad.rows() {
        return Err(Error::Shape(format!(
            "gradient {}x{} does not match trace {}x{}",
            grad.rows(),
            grad.cols(),
            first.rows(),
            first.cols()
        )));
    }
    let layers = trace.num_layers();
    let mut acc = grad.clone();
    acc.scale(trace.weights[layers]);
    for l in (0..layers).rev() {
        let mut next = adj.spmm(&acc);
        next.add_scaled(grad, trace.weights[l]);
        acc = next;
    }
    Ok(acc)
}
