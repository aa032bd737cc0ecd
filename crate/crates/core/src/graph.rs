//! Sparse graph representation and normalized propagation operators.
//!
//! The graph is stored as a symmetric CSR adjacency with an explicit degree
//! vector. Four normalizations are supported:
//!
//! | kind            | operator                                        |
//! |-----------------|-------------------------------------------------|
//! | `SymNorm`       | `P = D^{-1/2} A D^{-1/2}`                       |
//! | `TrickSymNorm`  | `P~ = D~^{-1/2} A D~^{-1/2}`                    |
//! | `TrickFull`     | `P^ = D~^{-1/2} (A + I) D~^{-1/2}`              |
//! | `TrickDiag`     | `I~ = D~^{-1}` (diagonal)                       |
//!
//! where `D~ = D + I`. Isolated nodes get an all-zero row/column under
//! `SymNorm` (no division by zero; the node keeps only its hop-0 signal).
//! The `Trick*` kinds are always safe because `D~_ii >= 1`.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<F> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<F>,
}

impl<F: Scalar> Csr<F> {
    /// Build from triplets that are already grouped by row and sorted by
    /// column within each row.
    fn from_sorted_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl Iterator<Item = (usize, usize, F)>,
    ) -> Self {
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (r, c, v) in triplets {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `r` as `(column, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, F)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Sparse x dense product, `self (n_rows x n_cols) * x (n_cols x d)`.
    ///
    /// Accumulation is sequential per output row, so the result does not
    /// depend on how rows would be scheduled across threads.
    pub fn mul_dense(&self, x: &Array2<F>) -> Result<Array2<F>> {
        if x.nrows() != self.n_cols {
            return Err(Error::DimMismatch {
                context: "sparse * dense product",
                expected: self.n_cols,
                got: x.nrows(),
            });
        }
        let d = x.ncols();
        let mut out = Array2::zeros((self.n_rows, d));
        for r in 0..self.n_rows {
            let mut acc = out.row_mut(r);
            for (c, v) in self.row(r) {
                let src = x.row(c);
                for j in 0..d {
                    acc[j] = acc[j] + v * src[j];
                }
            }
        }
        Ok(out)
    }

    /// Sparse x vector product.
    pub fn mul_vec(&self, x: &Array1<F>) -> Result<Array1<F>> {
        if x.len() != self.n_cols {
            return Err(Error::DimMismatch {
                context: "sparse * vector product",
                expected: self.n_cols,
                got: x.len(),
            });
        }
        let mut out = Array1::zeros(self.n_rows);
        for r in 0..self.n_rows {
            let mut acc = F::zero();
            for (c, v) in self.row(r) {
                acc = acc + v * x[c];
            }
            out[r] = acc;
        }
        Ok(out)
    }

    /// Dense copy, for small-scale verification only.
    pub fn to_dense(&self) -> Array2<F> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out[[r, c]] = v;
            }
        }
        out
    }
}

/// Undirected graph with unit-weight edges, symmetric sparse adjacency and
/// exact degree vector.
#[derive(Debug, Clone)]
pub struct SparseGraph<F> {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Csr<F>,
    degree: Vec<F>,
}

/// Validate and canonicalize an undirected edge list: reversed duplicates
/// collapse, self-pairs are rejected.
fn canonical_edges(edges: &[(usize, usize)], n: usize) -> Result<Vec<(usize, usize)>> {
    let mut set = BTreeSet::new();
    for &(u, v) in edges {
        if u >= n || v >= n {
            return Err(Error::EdgeOutOfRange { u, v, n });
        }
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        set.insert((u.min(v), u.max(v)));
    }
    Ok(set.into_iter().collect())
}

impl<F: Scalar> SparseGraph<F> {
    /// Build a graph from an undirected edge list. Duplicate and reversed
    /// duplicate pairs collapse to a single unit-weight edge; `(u, u)` pairs
    /// are rejected.
    pub fn build(edges: &[(usize, usize)], n: usize) -> Result<Self> {
        let edges = canonical_edges(edges, n)?;
        Self::from_weighted(&edges, n, |_| F::one())
    }

    /// Weighted variant. The shipped datasets are unweighted; this exists so
    /// the type admits non-unit weights.
    pub fn build_weighted(edges: &[(usize, usize, F)], n: usize) -> Result<Self> {
        let pairs: Vec<(usize, usize)> = edges.iter().map(|&(u, v, _)| (u, v)).collect();
        let canonical = canonical_edges(&pairs, n)?;
        let mut weight = std::collections::BTreeMap::new();
        for &(u, v, w) in edges {
            weight.insert((u.min(v), u.max(v)), w);
        }
        Self::from_weighted(&canonical, n, |e| weight[&e])
    }

    fn from_weighted(
        canonical: &[(usize, usize)],
        n: usize,
        weight: impl Fn((usize, usize)) -> F,
    ) -> Result<Self> {
        // Scatter both directions, then sort per row by building row buckets.
        let mut rows: Vec<Vec<(usize, F)>> = vec![Vec::new(); n];
        for &(u, v) in canonical {
            let w = weight((u, v));
            rows[u].push((v, w));
            rows[v].push((u, w));
        }
        for r in rows.iter_mut() {
            r.sort_unstable_by_key(|&(c, _)| c);
        }
        let degree: Vec<F> = rows
            .iter()
            .map(|r| r.iter().fold(F::zero(), |acc, &(_, w)| acc + w))
            .collect();
        let adjacency = Csr::from_sorted_triplets(
            n,
            n,
            rows.iter()
                .enumerate()
                .flat_map(|(r, cols)| cols.iter().map(move |&(c, w)| (r, c, w))),
        );
        Ok(SparseGraph {
            n,
            edges: canonical.to_vec(),
            adjacency,
            degree,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    /// Canonicalized undirected edges, `(u, v)` with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> &Csr<F> {
        &self.adjacency
    }

    pub fn degree(&self) -> &[F] {
        &self.degree
    }

    /// Dense adjacency rows, used by the structure-as-features experiment.
    pub fn dense_adjacency(&self) -> Array2<F> {
        self.adjacency.to_dense()
    }
}

/// Which normalization a [`PropagationOperator`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OperatorKind {
    /// `P = D^{-1/2} A D^{-1/2}`
    SymNorm,
    /// `P~ = D~^{-1/2} A D~^{-1/2}` with `D~ = D + I`
    TrickSymNorm,
    /// `P^ = D~^{-1/2} (A + I) D~^{-1/2}`
    TrickFull,
    /// `I~ = D~^{-1}`, diagonal
    TrickDiag,
}

enum OperatorRepr<F> {
    Sparse(Csr<F>),
    Diagonal(Vec<F>),
}

/// A normalized propagation operator, sparse or diagonal.
pub struct PropagationOperator<F> {
    kind: OperatorKind,
    repr: OperatorRepr<F>,
    n: usize,
}

/// Build the requested normalization of the graph adjacency.
pub fn normalize<F: Scalar>(graph: &SparseGraph<F>, kind: OperatorKind) -> PropagationOperator<F> {
    let n = graph.n_nodes();
    let repr = match kind {
        OperatorKind::SymNorm => {
            let dinv: Vec<F> = graph
                .degree()
                .iter()
                .map(|&d| {
                    if d > F::zero() {
                        F::one() / d.sqrt()
                    } else {
                        F::zero()
                    }
                })
                .collect();
            OperatorRepr::Sparse(scaled_adjacency(graph, &dinv, false))
        }
        OperatorKind::TrickSymNorm => {
            let dinv = trick_dinv_sqrt(graph);
            OperatorRepr::Sparse(scaled_adjacency(graph, &dinv, false))
        }
        OperatorKind::TrickFull => {
            let dinv = trick_dinv_sqrt(graph);
            OperatorRepr::Sparse(scaled_adjacency(graph, &dinv, true))
        }
        OperatorKind::TrickDiag => OperatorRepr::Diagonal(
            graph
                .degree()
                .iter()
                .map(|&d| F::one() / (d + F::one()))
                .collect(),
        ),
    };
    PropagationOperator { kind, repr, n }
}

fn trick_dinv_sqrt<F: Scalar>(graph: &SparseGraph<F>) -> Vec<F> {
    graph
        .degree()
        .iter()
        .map(|&d| F::one() / (d + F::one()).sqrt())
        .collect()
}

/// `dinv[i] * A_ij * dinv[j]`, optionally with the self-loop diagonal
/// `dinv[i]^2` inserted.
fn scaled_adjacency<F: Scalar>(graph: &SparseGraph<F>, dinv: &[F], with_diag: bool) -> Csr<F> {
    let n = graph.n_nodes();
    let adj = graph.adjacency();
    let mut triplets = Vec::with_capacity(adj.nnz() + if with_diag { n } else { 0 });
    for r in 0..n {
        let mut inserted_diag = !with_diag;
        for (c, v) in adj.row(r) {
            if !inserted_diag && c > r {
                triplets.push((r, r, dinv[r] * dinv[r]));
                inserted_diag = true;
            }
            triplets.push((r, c, dinv[r] * v * dinv[c]));
        }
        if !inserted_diag {
            triplets.push((r, r, dinv[r] * dinv[r]));
        }
    }
    Csr::from_sorted_triplets(n, n, triplets.into_iter())
}

impl<F: Scalar> PropagationOperator<F> {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Apply the operator to a dense feature matrix (`n x d`).
    ///
    /// Cost is `O(|E| d)` for the sparse kinds and `O(n d)` for the diagonal
    /// kind.
    pub fn apply(&self, x: &Array2<F>) -> Result<Array2<F>> {
        match &self.repr {
            OperatorRepr::Sparse(csr) => csr.mul_dense(x),
            OperatorRepr::Diagonal(diag) => {
                if x.nrows() != self.n {
                    return Err(Error::DimMismatch {
                        context: "diagonal operator apply",
                        expected: self.n,
                        got: x.nrows(),
                    });
                }
                let mut out = x.clone();
                for (r, mut row) in out.rows_mut().into_iter().enumerate() {
                    row.mapv_inplace(|v| v * diag[r]);
                }
                Ok(out)
            }
        }
    }

    /// Apply the operator to a single signal vector.
    pub fn apply_vec(&self, x: &Array1<F>) -> Result<Array1<F>> {
        match &self.repr {
            OperatorRepr::Sparse(csr) => csr.mul_vec(x),
            OperatorRepr::Diagonal(diag) => {
                if x.len() != self.n {
                    return Err(Error::DimMismatch {
                        context: "diagonal operator apply",
                        expected: self.n,
                        got: x.len(),
                    });
                }
                Ok(Array1::from_iter(
                    x.iter().zip(diag).map(|(&v, &d)| v * d),
                ))
            }
        }
    }

    /// Diagonal entries if this is a diagonal operator.
    pub fn diagonal(&self) -> Option<&[F]> {
        match &self.repr {
            OperatorRepr::Diagonal(d) => Some(d),
            OperatorRepr::Sparse(_) => None,
        }
    }

    /// Dense copy, for small-scale verification only.
    pub fn to_dense(&self) -> Array2<F> {
        match &self.repr {
            OperatorRepr::Sparse(csr) => csr.to_dense(),
            OperatorRepr::Diagonal(diag) => Array2::from_diag(&Array1::from_vec(diag.clone())),
        }
    }
}
