//! Quantitative CSD quality evaluation.
//!
//! Good class semantic descriptions should reproduce the relationships the
//! classes exhibit in feature space. Both sides are summarized the same way:
//! mean-class feature vectors (prototypes) on one side and CSD vectors on
//! the other each induce a per-class conditional distribution over the
//! *other* classes via a softmax of inner products with the self term
//! excluded. The two relation matrices are then compared row by row with KL
//! divergence, cosine similarity, or Euclidean distance, averaged over
//! classes.
//!
//! Bag-of-words attributes are first reduced with a truncated SVD and every
//! vector is unit-normalized, so the inner products are scale-free.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::spectral::symmetric_eigen;

/// Gram-matrix dimension up to which [`truncated_svd_reduce`] uses the dense
/// eigensolver; larger inputs switch to subspace iteration.
const SVD_DENSE_EIG_MAX_DIM: usize = 512;

/// Scale every nonzero row to unit L2 norm; zero rows stay zero and are
/// counted.
pub fn unit_normalize_rows<F: Scalar>(x: &Array2<F>) -> (Array2<F>, usize) {
    let mut out = x.clone();
    let mut zero_rows = 0;
    for mut row in out.rows_mut() {
        let norm = row.iter().fold(F::zero(), |acc, &v| acc + v * v).sqrt();
        if norm > F::zero() {
            row.mapv_inplace(|v| v / norm);
        } else {
            zero_rows += 1;
        }
    }
    (out, zero_rows)
}

/// Exact per-class means of the feature rows.
pub fn class_prototypes<F: Scalar>(
    x: &Array2<F>,
    labels: &[usize],
    n_classes: usize,
) -> Result<Array2<F>> {
    if labels.len() != x.nrows() {
        return Err(Error::DimMismatch {
            context: "class prototypes",
            expected: x.nrows(),
            got: labels.len(),
        });
    }
    let mut sums: Array2<F> = Array2::zeros((n_classes, x.ncols()));
    let mut counts = vec![0usize; n_classes];
    for (i, &c) in labels.iter().enumerate() {
        if c >= n_classes {
            return Err(Error::DimMismatch {
                context: "class label",
                expected: n_classes,
                got: c,
            });
        }
        counts[c] += 1;
        let mut row = sums.row_mut(c);
        row += &x.row(i);
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::EmptyClass(c));
        }
        let inv = F::one() / cast::<F>(count as f64);
        sums.row_mut(c).mapv_inplace(|v| v * inv);
    }
    Ok(sums)
}

/// Row-wise softmax of pairwise inner products with the self term excluded:
/// entry `(i, j)` is the probability of class `j` given class `i`, the
/// diagonal is fixed at zero, and every row sums to one over `j != i`.
pub fn relation_distribution<F: Scalar>(vectors: &Array2<F>) -> Result<Array2<F>> {
    let m = vectors.nrows();
    if m < 2 {
        return Err(Error::TooFewClasses(m));
    }
    let logits = vectors.dot(&vectors.t());
    let mut r = Array2::zeros((m, m));
    for i in 0..m {
        let mut max = F::neg_infinity();
        for j in 0..m {
            if j != i {
                max = max.max(logits[[i, j]]);
            }
        }
        let mut sum = F::zero();
        for j in 0..m {
            if j != i {
                let e = (logits[[i, j]] - max).exp();
                r[[i, j]] = e;
                sum += e;
            }
        }
        for j in 0..m {
            if j != i {
                r[[i, j]] /= sum;
            }
        }
    }
    Ok(r)
}

/// Row-distance aggregation measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DistanceMeasure {
    /// `KL(empirical || semantic)`; lower is better.
    KlDivergence,
    /// cosine of the off-diagonal row vectors; higher is better.
    CosineSimilarity,
    /// L2 distance of the off-diagonal row vectors; lower is better.
    EuclideanDistance,
}

/// Mean row distance between two relation matrices.
///
/// Rows are compared on their off-diagonal entries, matching the excluded
/// self term. A zero semantic probability where the empirical one is
/// positive makes the KL term infinite; that infinity is reported, not
/// clamped. `kl_smoothing` mixes epsilon into both distributions first.
pub fn distribution_distance<F: Scalar>(
    pr: &Array2<F>,
    pr_hat: &Array2<F>,
    measure: DistanceMeasure,
    kl_smoothing: Option<f64>,
) -> Result<F> {
    let m = pr.nrows();
    if pr.dim() != pr_hat.dim() {
        return Err(Error::DimMismatch {
            context: "relation matrices",
            expected: m,
            got: pr_hat.nrows(),
        });
    }
    if m < 2 {
        return Err(Error::TooFewClasses(m));
    }
    let mut total = F::zero();
    let mut p_row: Vec<F> = Vec::with_capacity(m - 1);
    let mut q_row: Vec<F> = Vec::with_capacity(m - 1);
    for i in 0..m {
        p_row.clear();
        q_row.clear();
        for j in 0..m {
            if j != i {
                p_row.push(pr[[i, j]]);
                q_row.push(pr_hat[[i, j]]);
            }
        }
        if let (DistanceMeasure::KlDivergence, Some(eps)) = (measure, kl_smoothing) {
            let eps = cast::<F>(eps);
            let denom = F::one() + cast::<F>((m - 1) as f64) * eps;
            for v in p_row.iter_mut() {
                *v = (*v + eps) / denom;
            }
            for v in q_row.iter_mut() {
                *v = (*v + eps) / denom;
            }
        }
        total += match measure {
            DistanceMeasure::KlDivergence => {
                let mut kl = F::zero();
                for (&p, &q) in p_row.iter().zip(&q_row) {
                    if p > F::zero() {
                        if q > F::zero() {
                            kl += p * (p / q).ln();
                        } else {
                            kl = F::infinity();
                            break;
                        }
                    }
                }
                kl
            }
            DistanceMeasure::CosineSimilarity => {
                let dot = p_row.iter().zip(&q_row).fold(F::zero(), |a, (&p, &q)| a + p * q);
                let np = p_row.iter().fold(F::zero(), |a, &p| a + p * p).sqrt();
                let nq = q_row.iter().fold(F::zero(), |a, &q| a + q * q).sqrt();
                dot / (np * nq)
            }
            DistanceMeasure::EuclideanDistance => p_row
                .iter()
                .zip(&q_row)
                .fold(F::zero(), |a, (&p, &q)| a + (p - q) * (p - q))
                .sqrt(),
        };
    }
    Ok(total / cast::<F>(m as f64))
}

/// Rank-`r` projection scores `U_r S_r` from the top singular triplets of
/// `x`, via the eigendecomposition of the Gram matrix `x^T x` (dense for
/// small widths, subspace iteration above [`SVD_DENSE_EIG_MAX_DIM`]).
pub fn truncated_svd_reduce<F: Scalar>(x: &Array2<F>, r: usize) -> Result<Array2<F>> {
    Ok(truncated_svd_with_values(x, r)?.0)
}

/// As [`truncated_svd_reduce`], also returning the singular values in
/// non-increasing order.
pub fn truncated_svd_with_values<F: Scalar>(
    x: &Array2<F>,
    r: usize,
) -> Result<(Array2<F>, Array1<F>)> {
    let (n, d) = x.dim();
    let limit = n.min(d);
    if r > limit {
        return Err(Error::RankOutOfRange { r, limit });
    }
    if r == 0 {
        return Ok((Array2::zeros((n, 0)), Array1::zeros(0)));
    }

    let basis: Array2<F> = if d <= SVD_DENSE_EIG_MAX_DIM {
        let gram = x.t().dot(x);
        let (values, vectors) = symmetric_eigen(&gram)?;
        // eigenvalues ascend; take the top r columns in descending order
        let mut v = Array2::zeros((d, r));
        for k in 0..r {
            let src = values.len() - 1 - k;
            v.column_mut(k).assign(&vectors.column(src));
        }
        v
    } else {
        subspace_iteration(x, r)?
    };

    let scores = x.dot(&basis);
    let mut values = Array1::zeros(r);
    for k in 0..r {
        values[k] = scores
            .column(k)
            .iter()
            .fold(F::zero(), |a, &v| a + v * v)
            .sqrt();
    }
    Ok((scores, values))
}

/// Orthonormal approximate top-`r` right-singular basis of `x` by block
/// power iteration on the Gram operator, never forming `x^T x`.
fn subspace_iteration<F: Scalar>(x: &Array2<F>, r: usize) -> Result<Array2<F>> {
    use rand::{Rng, SeedableRng};
    let d = x.ncols();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Array2<F> =
        Array2::from_shape_fn((d, r), |_| cast::<F>(rng.random::<f64>() * 2.0 - 1.0));
    orthonormalize_columns(&mut v);

    let mut prev_energy = F::zero();
    const MAX_ITERS: usize = 500;
    for _ in 0..MAX_ITERS {
        let w = x.dot(&v);
        let mut next = x.t().dot(&w);
        orthonormalize_columns(&mut next);
        let xw = x.dot(&next);
        let energy = xw.iter().fold(F::zero(), |a, &e| a + e * e);
        v = next;
        let rel = (energy - prev_energy).abs() / energy.max(F::epsilon());
        if rel < cast::<F>(1e-12) {
            break;
        }
        prev_energy = energy;
    }

    // Rayleigh-Ritz rotation so the columns are actual singular directions
    // in descending order.
    let b = x.dot(&v);
    let small = b.t().dot(&b);
    let (values, vectors) = symmetric_eigen(&small)?;
    let mut rotated = Array2::zeros((d, r));
    for k in 0..r {
        let src = values.len() - 1 - k;
        let dir = v.dot(&vectors.column(src).to_owned());
        rotated.column_mut(k).assign(&dir);
    }
    Ok(rotated)
}

fn orthonormalize_columns<F: Scalar>(v: &mut Array2<F>) {
    let (rows, cols) = v.dim();
    for j in 0..cols {
        for prev in 0..j {
            let dot = (0..rows).fold(F::zero(), |a, i| a + v[[i, j]] * v[[i, prev]]);
            for i in 0..rows {
                let adj = dot * v[[i, prev]];
                v[[i, j]] -= adj;
            }
        }
        let norm = (0..rows)
            .fold(F::zero(), |a, i| a + v[[i, j]] * v[[i, j]])
            .sqrt();
        if norm > F::epsilon() {
            for i in 0..rows {
                v[[i, j]] /= norm;
            }
        }
    }
}

/// Preprocessing knobs for [`evaluate_csd_quality`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalOptions {
    /// Reduce attributes to this rank first (for bag-of-words datasets).
    pub svd_rank: Option<usize>,
    /// Unit-normalize attribute and CSD vectors.
    pub unit_normalize: bool,
    /// Epsilon smoothing for the KL term; `None` reports infinities as-is.
    pub kl_smoothing: Option<f64>,
    /// Evaluate only these classes (default: all).
    pub class_subset: Option<Vec<usize>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            svd_rank: None,
            unit_normalize: true,
            kl_smoothing: None,
            class_subset: None,
        }
    }
}

/// The three metric values for one dataset/CSD pairing.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CsdQuality {
    pub kl_divergence: f64,
    pub cosine_similarity: f64,
    pub euclidean_distance: f64,
    pub zero_attribute_rows: usize,
    pub zero_csd_rows: usize,
}

/// Full pipeline: preprocess, build prototypes, compare the empirical and
/// semantic relation distributions under all three measures.
///
/// `csd` must hold one row per class, ordered by class id.
pub fn evaluate_csd_quality<F: Scalar>(
    x: &Array2<F>,
    labels: &[usize],
    n_classes: usize,
    csd: &Array2<F>,
    opts: &EvalOptions,
) -> Result<CsdQuality> {
    if csd.nrows() < n_classes {
        return Err(Error::DimMismatch {
            context: "CSD rows vs classes",
            expected: n_classes,
            got: csd.nrows(),
        });
    }

    // optional restriction to a class subset (e.g. seen classes only)
    let (x, labels, csd): (Array2<F>, Vec<usize>, Array2<F>) = match &opts.class_subset {
        None => (x.clone(), labels.to_vec(), csd.clone()),
        Some(subset) => {
            let keep: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, l)| subset.contains(l))
                .map(|(i, _)| i)
                .collect();
            let x_sub = x.select(Axis(0), &keep);
            let labels_sub: Vec<usize> = keep
                .iter()
                .map(|&i| subset.iter().position(|c| *c == labels[i]).expect("kept"))
                .collect();
            let csd_sub = csd.select(Axis(0), subset);
            (x_sub, labels_sub, csd_sub)
        }
    };
    let m = csd.nrows();

    let reduced = match opts.svd_rank {
        Some(r) => truncated_svd_reduce(&x, r)?,
        None => x,
    };
    let (attrs, zero_attribute_rows) = if opts.unit_normalize {
        unit_normalize_rows(&reduced)
    } else {
        (reduced, 0)
    };
    let (csd_vecs, zero_csd_rows) = if opts.unit_normalize {
        unit_normalize_rows(&csd)
    } else {
        (csd, 0)
    };

    let prototypes = class_prototypes(&attrs, &labels, m)?;
    let empirical = relation_distribution(&prototypes)?;
    let semantic = relation_distribution(&csd_vecs)?;

    let to64 = |v: F| v.to_f64().unwrap_or(f64::NAN);
    Ok(CsdQuality {
        kl_divergence: to64(distribution_distance(
            &empirical,
            &semantic,
            DistanceMeasure::KlDivergence,
            opts.kl_smoothing,
        )?),
        cosine_similarity: to64(distribution_distance(
            &empirical,
            &semantic,
            DistanceMeasure::CosineSimilarity,
            None,
        )?),
        euclidean_distance: to64(distribution_distance(
            &empirical,
            &semantic,
            DistanceMeasure::EuclideanDistance,
            None,
        )?),
        zero_attribute_rows,
        zero_csd_rows,
    })
}
