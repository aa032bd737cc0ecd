//! Decomposition of repeated graph convolutions into hop subparts.
//!
//! A K-fold graph convolution expands into K+1 propagated feature matrices
//! ("subparts") combined by scalar pooling weights. Four variants are
//! supported:
//!
//! - `VanillaNorm` — `((I + P) / 2)^K`, subparts `P^k X`, weights
//!   `C(K,k) / 2^K`.
//! - `VanillaLazy` — `(beta I + (1-beta) P)^K`, subparts `P^k X`, weights
//!   `C(K,k) beta^{K-k} (1-beta)^k`.
//! - `Trick` — `(I~ + P~)^K` expanded as `sum_k C(K,k) I~^{K-k} P~^k`; the
//!   diagonal factor `I~^{K-k}` is folded into the subpart so the weight
//!   stays scalar. On irregular graphs `I~` and `P~` do not commute and the
//!   expanded form is taken as the definition; it matches the matrix power
//!   exactly on regular graphs.
//! - `TrickLazy` — `(beta I + (1-beta) P^)^K`, subparts `P^^k X`, weights as
//!   in the lazy case.
//!
//! [`direct_power_oracle`] evaluates each variant's matrix power by repeated
//! application, with no binomial expansion, and is the independent check
//! that [`build_stack`] + [`SubpartStack::compose`] reproduce it.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize, OperatorKind, SparseGraph};
use crate::scalar::{cast, Scalar};

/// Largest supported hop count; binomial weights are exact in doubles here.
pub const MAX_HOPS: usize = 16;

/// Node count limit for [`direct_power_oracle`].
pub const DIRECT_POWER_MAX_NODES: usize = 500;

/// Decomposition variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Normalized vanilla convolution without the renormalization trick.
    VanillaNorm,
    /// Lazy-random-walk convolution on `P`.
    VanillaLazy,
    /// Renormalization-trick convolution, binomially expanded.
    Trick,
    /// Lazy-random-walk convolution on the renormalized operator `P^`.
    TrickLazy,
}

impl Variant {
    /// The propagation operator this variant applies per hop.
    pub fn operator_kind(self) -> OperatorKind {
        match self {
            Variant::VanillaNorm | Variant::VanillaLazy => OperatorKind::SymNorm,
            Variant::Trick => OperatorKind::TrickSymNorm,
            Variant::TrickLazy => OperatorKind::TrickFull,
        }
    }

    pub fn is_lazy(self) -> bool {
        matches!(self, Variant::VanillaLazy | Variant::TrickLazy)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::VanillaNorm => "vanilla-norm",
            Variant::VanillaLazy => "vanilla-lazy",
            Variant::Trick => "trick",
            Variant::TrickLazy => "trick-lazy",
        }
    }

    pub const ALL: [Variant; 4] = [
        Variant::VanillaNorm,
        Variant::VanillaLazy,
        Variant::Trick,
        Variant::TrickLazy,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vanilla-norm" => Ok(Variant::VanillaNorm),
            "vanilla-lazy" => Ok(Variant::VanillaLazy),
            "trick" => Ok(Variant::Trick),
            "trick-lazy" => Ok(Variant::TrickLazy),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected vanilla-norm, vanilla-lazy, trick, trick-lazy)"
            ))),
        }
    }
}

/// Binomial row `C(k_hops, 0..=k_hops)` by the multiplicative recurrence,
/// exact in doubles for `k_hops <= 16`.
fn binomial_row(k_hops: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(k_hops + 1);
    let mut c = 1.0;
    row.push(c);
    for j in 0..k_hops {
        c = c * (k_hops - j) as f64 / (j + 1) as f64;
        row.push(c);
    }
    row
}

fn check_hops(k_hops: usize) -> Result<()> {
    if k_hops > MAX_HOPS {
        return Err(Error::HopLimit {
            k: k_hops,
            max: MAX_HOPS,
        });
    }
    Ok(())
}

fn check_beta<F: Scalar>(variant: Variant, beta: F) -> Result<()> {
    if variant.is_lazy() && !(beta >= F::zero() && beta <= F::one()) {
        return Err(Error::BetaOutOfRange(beta.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

/// Scalar pooling weights `omega_k` for a variant.
///
/// `beta` is ignored by the non-lazy variants.
pub fn pooling_weights<F: Scalar>(variant: Variant, k_hops: usize, beta: F) -> Result<Vec<F>> {
    check_hops(k_hops)?;
    check_beta(variant, beta)?;
    let binom = binomial_row(k_hops);
    let weights = match variant {
        Variant::VanillaNorm => {
            let denom = (2f64).powi(k_hops as i32);
            binom.iter().map(|&c| cast::<F>(c / denom)).collect()
        }
        Variant::VanillaLazy | Variant::TrickLazy => {
            let stay = beta;
            let step = F::one() - beta;
            binom
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    cast::<F>(c) * pow_nonneg(stay, k_hops - k) * pow_nonneg(step, k)
                })
                .collect()
        }
        Variant::Trick => binom.iter().map(|&c| cast::<F>(c)).collect(),
    };
    Ok(weights)
}

/// `base^exp` with the `0^0 = 1` convention the binomial expansion needs.
fn pow_nonneg<F: Scalar>(base: F, exp: usize) -> F {
    let mut acc = F::one();
    for _ in 0..exp {
        acc = acc * base;
    }
    acc
}

/// The K+1 propagated subparts plus their pooling weights.
#[derive(Debug, Clone)]
pub struct SubpartStack<F> {
    variant: Variant,
    k_hops: usize,
    beta: Option<F>,
    subparts: Vec<Array2<F>>,
    weights: Vec<F>,
}

impl<F: Scalar> SubpartStack<F> {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn k_hops(&self) -> usize {
        self.k_hops
    }

    pub fn beta(&self) -> Option<F> {
        self.beta
    }

    /// The K+1 subpart matrices `S_k`, hop order.
    pub fn subparts(&self) -> &[Array2<F>] {
        &self.subparts
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn n_nodes(&self) -> usize {
        self.subparts[0].nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.subparts[0].ncols()
    }

    /// Weighted sum `sum_k omega_k S_k` in feature space.
    ///
    /// The model pools in hidden space after the (linear) encoder, which is
    /// the same thing; this feature-space form is what the oracles and the
    /// standard-classification path consume.
    pub fn compose(&self) -> Array2<F> {
        let mut acc: Array2<F> = Array2::zeros(self.subparts[0].raw_dim());
        for (s, &w) in self.subparts.iter().zip(&self.weights) {
            acc.scaled_add(w, s);
        }
        acc
    }
}

/// Propagate `x` into the K+1 subparts of the chosen variant.
///
/// Cost is `O(K |E| d)` sparse work plus `O(K n d)` diagonal scaling for the
/// `Trick` variant.
pub fn build_stack<F: Scalar>(
    graph: &SparseGraph<F>,
    x: &Array2<F>,
    variant: Variant,
    k_hops: usize,
    beta: F,
) -> Result<SubpartStack<F>> {
    check_hops(k_hops)?;
    check_beta(variant, beta)?;
    if x.nrows() != graph.n_nodes() {
        return Err(Error::DimMismatch {
            context: "build_stack features",
            expected: graph.n_nodes(),
            got: x.nrows(),
        });
    }
    let op = normalize(graph, variant.operator_kind());
    let mut propagated = Vec::with_capacity(k_hops + 1);
    propagated.push(x.clone());
    for _ in 0..k_hops {
        let next = op.apply(propagated.last().expect("non-empty"))?;
        propagated.push(next);
    }

    let subparts = match variant {
        Variant::Trick => {
            // S_k = I~^{K-k} P~^k X, the diagonal factor folded in
            let dinv: Vec<F> = graph
                .degree()
                .iter()
                .map(|&d| F::one() / (d + F::one()))
                .collect();
            propagated
                .into_iter()
                .enumerate()
                .map(|(k, mut s)| {
                    let power = k_hops - k;
                    if power > 0 {
                        for (r, mut row) in s.rows_mut().into_iter().enumerate() {
                            let scale = pow_nonneg(dinv[r], power);
                            row.mapv_inplace(|v| v * scale);
                        }
                    }
                    s
                })
                .collect()
        }
        _ => propagated,
    };

    Ok(SubpartStack {
        variant,
        k_hops,
        beta: variant.is_lazy().then_some(beta),
        subparts,
        weights: pooling_weights(variant, k_hops, beta)?,
    })
}

/// Evaluate the variant's convolution as a genuine matrix power, by repeated
/// application and no binomial expansion. Verification scale only.
pub fn direct_power_oracle<F: Scalar>(
    graph: &SparseGraph<F>,
    x: &Array2<F>,
    variant: Variant,
    k_hops: usize,
    beta: F,
) -> Result<Array2<F>> {
    check_hops(k_hops)?;
    check_beta(variant, beta)?;
    if graph.n_nodes() > DIRECT_POWER_MAX_NODES {
        return Err(Error::OracleScale {
            context: "direct power oracle",
            n: graph.n_nodes(),
            max: DIRECT_POWER_MAX_NODES,
        });
    }

    let mut y = x.clone();
    match variant {
        Variant::VanillaNorm => {
            // ((I + P) / 2)^K
            let p = normalize(graph, OperatorKind::SymNorm);
            let half = cast::<F>(0.5);
            for _ in 0..k_hops {
                y = (&y + &p.apply(&y)?) * half;
            }
        }
        Variant::VanillaLazy => {
            let p = normalize(graph, OperatorKind::SymNorm);
            let step = F::one() - beta;
            for _ in 0..k_hops {
                y = &y * beta + &(p.apply(&y)? * step);
            }
        }
        Variant::TrickLazy => {
            let p = normalize(graph, OperatorKind::TrickFull);
            let step = F::one() - beta;
            for _ in 0..k_hops {
                y = &y * beta + &(p.apply(&y)? * step);
            }
        }
        Variant::Trick => {
            // (I~ + P~)^K, which is exactly P^ applied K times
            let p = normalize(graph, OperatorKind::TrickFull);
            for _ in 0..k_hops {
                y = p.apply(&y)?;
            }
        }
    }
    Ok(y)
}
