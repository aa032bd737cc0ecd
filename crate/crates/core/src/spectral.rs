//! Dense spectral verification tools.
//!
//! Everything here is a verification surface for small graphs (`n <= 200`):
//! the training path never touches it. The central piece is
//! [`spectral_filter_oracle`], which evaluates a Chebyshev-expanded spectral
//! filter two independent ways — through a dense eigendecomposition of the
//! normalized Laplacian and through the sparse three-term recursion — and
//! refuses to return unless the two agree.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::graph::{normalize, OperatorKind, SparseGraph};
use crate::scalar::{cast, Scalar};

/// Largest graph the dense oracle paths accept.
pub const ORACLE_MAX_NODES: usize = 200;

/// Agreement required between the eigendecomposition and recursion paths.
pub const ORACLE_TOL: f64 = 1e-9;

/// How to rescale the Laplacian spectrum onto `[-1, 1]` for the Chebyshev
/// basis: with the exact largest eigenvalue, or with a fixed bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMax {
    /// Use the exact largest eigenvalue from the dense decomposition.
    Exact,
    /// Use a fixed value (conventionally `2.0`).
    Fixed(f64),
}

/// Dense symmetric-normalized Laplacian `L = I - D^{-1/2} A D^{-1/2}`.
pub fn normalized_laplacian_dense<F: Scalar>(graph: &SparseGraph<F>) -> Array2<F> {
    let n = graph.n_nodes();
    let p = normalize(graph, OperatorKind::SymNorm).to_dense();
    let mut l = -p;
    for i in 0..n {
        l[[i, i]] = l[[i, i]] + F::one();
    }
    l
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns. Deterministic: no pivoting randomness, and each
/// eigenvector is sign-fixed so its largest-magnitude entry is positive.
pub fn symmetric_eigen<F: Scalar>(a: &Array2<F>) -> Result<(Array1<F>, Array2<F>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimMismatch {
            context: "symmetric eigendecomposition",
            expected: n,
            got: a.ncols(),
        });
    }
    let mut m = a.clone();
    let mut v: Array2<F> = Array2::eye(n);
    if n <= 1 {
        let vals = Array1::from_iter((0..n).map(|i| m[[i, i]]));
        return Ok((vals, v));
    }

    let frob = m.iter().fold(F::zero(), |acc, &x| acc + x * x).sqrt();
    let tol = cast::<F>(1e-30).max(frob * cast::<F>(1e-15));
    const MAX_SWEEPS: usize = 100;

    for _ in 0..MAX_SWEEPS {
        let mut off = F::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            return Ok(sorted_eigenpairs(m, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= tol * cast::<F>(1e-2) {
                    continue;
                }
                let (c, s) = jacobi_rotation(m[[p, p]], m[[q, q]], apq);
                apply_rotation(&mut m, &mut v, p, q, c, s);
            }
        }
    }
    Err(Error::EigenFailure(format!(
        "Jacobi sweep limit ({MAX_SWEEPS}) reached without convergence"
    )))
}

fn jacobi_rotation<F: Scalar>(app: F, aqq: F, apq: F) -> (F, F) {
    let tau = (aqq - app) / (cast::<F>(2.0) * apq);
    let t = if tau >= F::zero() {
        F::one() / (tau + (F::one() + tau * tau).sqrt())
    } else {
        -F::one() / (-tau + (F::one() + tau * tau).sqrt())
    };
    let c = F::one() / (F::one() + t * t).sqrt();
    (c, t * c)
}

fn apply_rotation<F: Scalar>(
    m: &mut Array2<F>,
    v: &mut Array2<F>,
    p: usize,
    q: usize,
    c: F,
    s: F,
) {
    let n = m.nrows();
    for k in 0..n {
        let mkp = m[[k, p]];
        let mkq = m[[k, q]];
        m[[k, p]] = c * mkp - s * mkq;
        m[[k, q]] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[[p, k]];
        let mqk = m[[q, k]];
        m[[p, k]] = c * mpk - s * mqk;
        m[[q, k]] = s * mpk + c * mqk;
    }
    for k in 0..n {
        let vkp = v[[k, p]];
        let vkq = v[[k, q]];
        v[[k, p]] = c * vkp - s * vkq;
        v[[k, q]] = s * vkp + c * vkq;
    }
}

fn sorted_eigenpairs<F: Scalar>(m: Array2<F>, v: Array2<F>) -> (Array1<F>, Array2<F>) {
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[[i, i]]
            .partial_cmp(&m[[j, j]])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        // sign convention: largest-|entry| positive
        let col = v.column(src);
        let mut flip = F::one();
        let mut best = F::zero();
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                flip = if x < F::zero() { -F::one() } else { F::one() };
            }
        }
        for r in 0..n {
            vectors[[r, dst]] = col[r] * flip;
        }
    }
    (values, vectors)
}

/// Evaluate `sum_k coeffs[k] T_k(L~) x` through the sparse Chebyshev
/// recursion, where `L~ = (2 / lambda_max) L - I`.
pub fn chebyshev_recursion<F: Scalar>(
    graph: &SparseGraph<F>,
    coeffs: &[F],
    x: &Array1<F>,
    lambda_max: F,
) -> Result<Array1<F>> {
    let p = normalize(graph, OperatorKind::SymNorm);
    let scale = cast::<F>(2.0) / lambda_max;
    // L~ v = (2/lmax)(v - P v) - v
    let lt = |v: &Array1<F>| -> Result<Array1<F>> {
        let pv = p.apply_vec(v)?;
        Ok((v - &pv) * scale - v)
    };

    let mut acc = x * coeffs[0];
    if coeffs.len() == 1 {
        return Ok(acc);
    }
    let mut t_prev = x.clone();
    let mut t_cur = lt(x)?;
    acc = acc + &t_cur * coeffs[1];
    for &c in &coeffs[2..] {
        let t_next = lt(&t_cur)? * cast::<F>(2.0) - &t_prev;
        acc = acc + &t_next * c;
        t_prev = t_cur;
        t_cur = t_next;
    }
    Ok(acc)
}

/// Chebyshev filter value at a scalar argument, by the same recursion.
fn chebyshev_scalar<F: Scalar>(coeffs: &[F], y: F) -> F {
    let mut acc = coeffs[0];
    if coeffs.len() == 1 {
        return acc;
    }
    let mut t_prev = F::one();
    let mut t_cur = y;
    acc = acc + coeffs[1] * t_cur;
    for &c in &coeffs[2..] {
        let t_next = cast::<F>(2.0) * y * t_cur - t_prev;
        acc = acc + c * t_next;
        t_prev = t_cur;
        t_cur = t_next;
    }
    acc
}

/// Spectral filter evaluated two ways with a built-in agreement check.
///
/// Path (a) diagonalizes the dense normalized Laplacian and applies the
/// filter on the eigenvalues; path (b) runs the sparse recursion. The two
/// must agree to [`ORACLE_TOL`] in the max norm, otherwise an error reports
/// the deviation. Path (b)'s result is returned.
pub fn spectral_filter_oracle<F: Scalar>(
    graph: &SparseGraph<F>,
    coeffs: &[F],
    x: &Array1<F>,
    lambda_max: LambdaMax,
) -> Result<Array1<F>> {
    let n = graph.n_nodes();
    if n > ORACLE_MAX_NODES {
        return Err(Error::OracleScale {
            context: "spectral filter oracle",
            n,
            max: ORACLE_MAX_NODES,
        });
    }
    if coeffs.is_empty() {
        return Err(Error::Config("empty Chebyshev coefficient list".into()));
    }
    if x.len() != n {
        return Err(Error::DimMismatch {
            context: "spectral filter oracle signal",
            expected: n,
            got: x.len(),
        });
    }

    let l = normalized_laplacian_dense(graph);
    let (values, vectors) = symmetric_eigen(&l)?;
    let lmax = match lambda_max {
        LambdaMax::Exact => values[values.len() - 1],
        LambdaMax::Fixed(v) => cast::<F>(v),
    };
    if lmax <= F::zero() {
        return Err(Error::EigenFailure(format!(
            "non-positive lambda_max {lmax}"
        )));
    }

    // (a) U diag(filter(rescaled eigenvalue)) U^T x
    let ut_x = vectors.t().dot(x);
    let filtered = Array1::from_iter(values.iter().zip(ut_x.iter()).map(|(&lam, &w)| {
        let y = cast::<F>(2.0) * lam / lmax - F::one();
        chebyshev_scalar(coeffs, y) * w
    }));
    let eig_path = vectors.dot(&filtered);

    // (b) sparse recursion
    let rec_path = chebyshev_recursion(graph, coeffs, x, lmax)?;

    let max_dev = eig_path
        .iter()
        .zip(rec_path.iter())
        .fold(F::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
    if max_dev.to_f64().unwrap_or(f64::INFINITY) > ORACLE_TOL {
        return Err(Error::OracleDisagreement {
            max_dev: max_dev.to_f64().unwrap_or(f64::INFINITY),
            tol: ORACLE_TOL,
        });
    }
    Ok(rec_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> SparseGraph<f64> {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        SparseGraph::build(&edges, n).unwrap()
    }

    fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
        Array1::from_iter((0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0))
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // normalized Laplacian of a 3-node path: eigenvalues 0, 1, 2
        let g: SparseGraph<f64> = SparseGraph::build(&[(0, 1), (1, 2)], 3).unwrap();
        let l = normalized_laplacian_dense(&g);
        let (vals, vecs) = symmetric_eigen(&l).unwrap();
        assert!((vals[0] - 0.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        assert!((vals[2] - 2.0).abs() < 1e-12);
        let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for (a, b) in recon.iter().zip(l.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_coefficient_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = random_graph(&mut rng, 12, 0.3);
        let x = random_signal(&mut rng, 12);
        let y = spectral_filter_oracle(&g, &[1.0], &x, LambdaMax::Exact).unwrap();
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_coefficient_is_rescaled_laplacian() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random_graph(&mut rng, 10, 0.4);
        let x = random_signal(&mut rng, 10);
        let y = spectral_filter_oracle(&g, &[0.0, 1.0], &x, LambdaMax::Fixed(2.0)).unwrap();
        // with lambda_max = 2: L~ = L - I = -P
        let p = normalize(&g, OperatorKind::SymNorm);
        let expected = -p.apply_vec(&x).unwrap();
        for (a, b) in y.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn dual_paths_agree_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..20 {
            let n = 5 + (trial % 10);
            let g = random_graph(&mut rng, n, 0.35);
            let x = random_signal(&mut rng, n);
            let coeffs = [0.3, -0.2, 0.1];
            // both rescalings must self-agree
            spectral_filter_oracle(&g, &coeffs, &x, LambdaMax::Exact).unwrap();
            spectral_filter_oracle(&g, &coeffs, &x, LambdaMax::Fixed(2.0)).unwrap();
        }
    }

    #[test]
    fn oracle_rejects_large_graphs() {
        let g: SparseGraph<f64> = SparseGraph::build(&[(0, 1)], ORACLE_MAX_NODES + 1).unwrap();
        let x = Array1::zeros(ORACLE_MAX_NODES + 1);
        assert!(matches!(
            spectral_filter_oracle(&g, &[1.0], &x, LambdaMax::Exact),
            Err(Error::OracleScale { .. })
        ));
    }

    #[test]
    fn empty_graph_laplacian_is_identity() {
        let g: SparseGraph<f64> = SparseGraph::build(&[], 4).unwrap();
        let l = normalized_laplacian_dense(&g);
        assert_eq!(l, Array2::<f64>::eye(4));
        let x = Array1::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        // exact lmax = 1 here, so L~ = 2L - I = I and T_1(L~) x = x
        let y = spectral_filter_oracle(&g, &[0.0, 1.0], &x, LambdaMax::Exact).unwrap();
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
