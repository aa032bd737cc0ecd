//! Forward passes, losses, and analytic gradients.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::decompose::SubpartStack;
use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

use super::ParamSet;

/// Gathered rows of the subpart stack for a fixed node set, with local
/// class labels. Training loops build this once and reuse it every epoch.
#[derive(Debug, Clone)]
pub struct Batch<F> {
    /// K+1 row blocks, each `|T| x d`
    pub inputs: Vec<Array2<F>>,
    /// pooling weights, one per hop
    pub weights: Vec<F>,
    /// local class index per row
    pub labels: Vec<usize>,
}

impl<F: Scalar> Batch<F> {
    pub fn gather(stack: &SubpartStack<F>, nodes: &[usize], labels: Vec<usize>) -> Result<Self> {
        if labels.len() != nodes.len() {
            return Err(Error::DimMismatch {
                context: "batch labels",
                expected: nodes.len(),
                got: labels.len(),
            });
        }
        for &i in nodes {
            if i >= stack.n_nodes() {
                return Err(Error::DimMismatch {
                    context: "batch node index",
                    expected: stack.n_nodes(),
                    got: i,
                });
            }
        }
        Ok(Batch {
            inputs: stack
                .subparts()
                .iter()
                .map(|s| s.select(Axis(0), nodes))
                .collect(),
            weights: stack.weights().to_vec(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs[0].nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loss components of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<F> {
    /// `compositional + alpha * local`
    pub total: F,
    pub compositional: F,
    pub local: F,
}

/// `x W + b`, the single-layer map used everywhere.
fn affine<F: Scalar>(x: &Array2<F>, w: &Array2<F>, b: &Array1<F>) -> Result<Array2<F>> {
    if x.ncols() != w.nrows() {
        return Err(Error::DimMismatch {
            context: "affine map input",
            expected: w.nrows(),
            got: x.ncols(),
        });
    }
    let mut out = x.dot(w);
    for mut row in out.rows_mut() {
        row += b;
    }
    Ok(out)
}

/// Project hidden vectors into class scores: inner products against CSD
/// rows in zero-shot mode, raw logits in classifier mode.
fn class_scores<F: Scalar>(mapped: &Array2<F>, csd: Option<&Array2<F>>) -> Result<Array2<F>> {
    match csd {
        Some(csd) => {
            if csd.ncols() != mapped.ncols() {
                return Err(Error::DimMismatch {
                    context: "semantic head vs CSD width",
                    expected: mapped.ncols(),
                    got: csd.ncols(),
                });
            }
            Ok(mapped.dot(&csd.t()))
        }
        None => Ok(mapped.clone()),
    }
}

/// Row-stabilized softmax cross-entropy: returns the summed loss and the
/// softmax matrix (reused by the backward pass).
fn softmax_ce<F: Scalar>(logits: &Array2<F>, labels: &[usize]) -> Result<(F, Array2<F>)> {
    let classes = logits.ncols();
    let mut probs = logits.clone();
    let mut total = F::zero();
    for (i, mut row) in probs.rows_mut().into_iter().enumerate() {
        let y = labels[i];
        if y >= classes {
            return Err(Error::DimMismatch {
                context: "class label",
                expected: classes,
                got: y,
            });
        }
        let max = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        // -log softmax(y) = ln(sum) - (logit_y - max)
        total += sum.ln() - row[y].ln();
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok((total, probs))
}

/// Inverted-dropout mask: entries are `1/keep` with probability `keep`,
/// otherwise zero.
fn dropout_mask<F: Scalar>(rng: &mut ChaCha8Rng, shape: (usize, usize), dropout: F) -> Array2<F> {
    let keep = 1.0 - dropout.to_f64().unwrap_or(0.0);
    let inv = cast::<F>(1.0 / keep);
    Array2::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < keep {
            inv
        } else {
            F::zero()
        }
    })
}

/// One full-batch evaluation: loss, and optionally the analytic gradients.
///
/// Dropout masks (when `dropout > 0`) are drawn from `rng` — per-hop input
/// masks first, then the pooled-representation mask — and the returned loss
/// and gradients correspond to those same masks. `weight_decay` adds the
/// coupled L2 term `wd * p` to every gradient tensor.
pub(crate) fn run_batch<F: Scalar>(
    batch: &Batch<F>,
    params: &ParamSet<F>,
    csd: Option<&Array2<F>>,
    alpha: F,
    relu: bool,
    dropout: F,
    mut rng: Option<&mut ChaCha8Rng>,
    weight_decay: F,
    want_grads: bool,
) -> Result<(LossParts<F>, Option<ParamSet<F>>)> {
    if batch.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let rows = batch.len();
    let hops = batch.inputs.len();
    let use_dropout = dropout > F::zero();
    if use_dropout && rng.is_none() {
        return Err(Error::Config("dropout requires an RNG stream".into()));
    }

    // ---- forward ----
    let mut masked: Vec<Option<Array2<F>>> = Vec::with_capacity(hops);
    let mut hidden: Vec<Array2<F>> = Vec::with_capacity(hops);
    let mut pre_activation: Vec<Option<Array2<F>>> = Vec::with_capacity(hops);
    for k in 0..hops {
        let a_k = if use_dropout {
            let mask = dropout_mask(rng.as_mut().expect("checked"), batch.inputs[k].dim(), dropout);
            Some(&batch.inputs[k] * &mask)
        } else {
            None
        };
        let input = a_k.as_ref().unwrap_or(&batch.inputs[k]);
        let pre = affine(input, &params.w_psi, &params.b_psi)?;
        let h = if relu {
            pre.mapv(|v| v.max(F::zero()))
        } else {
            pre.clone()
        };
        pre_activation.push(relu.then(|| pre));
        masked.push(a_k);
        hidden.push(h);
    }

    let mut z: Array2<F> = Array2::zeros(hidden[0].raw_dim());
    for (h, &w) in hidden.iter().zip(&batch.weights) {
        z.scaled_add(w, h);
    }
    let mask_z = use_dropout
        .then(|| dropout_mask(rng.as_mut().expect("checked"), z.dim(), dropout));
    let zd = match &mask_z {
        Some(m) => &z * m,
        None => z.clone(),
    };

    let mapped_com = affine(&zd, &params.w_out, &params.b_out)?;
    let logits_com = class_scores(&mapped_com, csd)?;
    let (sum_com, probs_com) = softmax_ce(&logits_com, &batch.labels)?;
    let inv_rows = F::one() / cast::<F>(rows as f64);
    let q_com = sum_com * inv_rows;

    let with_local = alpha != F::zero();
    let mut local_probs: Vec<Array2<F>> = Vec::new();
    let mut q_loc = F::zero();
    if with_local {
        for h in &hidden {
            let mapped = affine(h, &params.w_loc, &params.b_loc)?;
            let logits = class_scores(&mapped, csd)?;
            let (sum_k, probs_k) = softmax_ce(&logits, &batch.labels)?;
            q_loc += sum_k * inv_rows;
            if want_grads {
                local_probs.push(probs_k);
            }
        }
    }

    let parts = LossParts {
        total: q_com + alpha * q_loc,
        compositional: q_com,
        local: q_loc,
    };
    if !parts.total.is_finite() {
        return Err(Error::NonFinite {
            what: "loss",
            epoch: 0,
            detail: format!(
                "compositional={:?} local={:?}",
                parts.compositional.to_f64(),
                parts.local.to_f64()
            ),
        });
    }
    if !want_grads {
        return Ok((parts, None));
    }

    // ---- backward ----
    let mut grads = params.zeros_like();

    // softmax cross-entropy: d logits = (probs - onehot) / rows
    let mut d_logits_com = probs_com;
    for (i, &y) in batch.labels.iter().enumerate() {
        d_logits_com[[i, y]] -= F::one();
    }
    d_logits_com *= inv_rows;

    let d_mapped_com = match csd {
        Some(csd) => d_logits_com.dot(csd),
        None => d_logits_com,
    };
    grads.w_out = zd.t().dot(&d_mapped_com);
    grads.b_out = d_mapped_com.sum_axis(Axis(0));
    let mut d_z = d_mapped_com.dot(&params.w_out.t());
    if let Some(m) = &mask_z {
        d_z = &d_z * m;
    }

    let local_scale = alpha * inv_rows;
    for k in 0..hops {
        let mut d_h = &d_z * batch.weights[k];
        if with_local {
            let mut d_logits_k = local_probs[k].clone();
            for (i, &y) in batch.labels.iter().enumerate() {
                d_logits_k[[i, y]] -= F::one();
            }
            d_logits_k *= local_scale;
            let d_mapped_k = match csd {
                Some(csd) => d_logits_k.dot(csd),
                None => d_logits_k,
            };
            grads.w_loc += &hidden[k].t().dot(&d_mapped_k);
            grads.b_loc += &d_mapped_k.sum_axis(Axis(0));
            d_h += &d_mapped_k.dot(&params.w_loc.t());
        }
        if let Some(pre) = &pre_activation[k] {
            d_h.zip_mut_with(pre, |g, &p| {
                if p <= F::zero() {
                    *g = F::zero();
                }
            });
        }
        let input = masked[k].as_ref().unwrap_or(&batch.inputs[k]);
        grads.w_psi += &input.t().dot(&d_h);
        grads.b_psi += &d_h.sum_axis(Axis(0));
    }

    if weight_decay != F::zero() {
        grads.w_psi.scaled_add(weight_decay, &params.w_psi);
        grads.b_psi.scaled_add(weight_decay, &params.b_psi);
        grads.w_loc.scaled_add(weight_decay, &params.w_loc);
        grads.b_loc.scaled_add(weight_decay, &params.b_loc);
        grads.w_out.scaled_add(weight_decay, &params.w_out);
        grads.b_out.scaled_add(weight_decay, &params.b_out);
    }

    Ok((parts, Some(grads)))
}

/// Hidden representation of every hop subpart followed by the local head:
/// per-hop score matrices `f[k][i][c]` against the seen-class CSD rows.
pub fn forward_local<F: Scalar>(
    stack: &SubpartStack<F>,
    params: &ParamSet<F>,
    csd_seen: &Array2<F>,
    relu: bool,
) -> Result<Vec<Array2<F>>> {
    stack
        .subparts()
        .iter()
        .map(|s| {
            let pre = affine(s, &params.w_psi, &params.b_psi)?;
            let h = if relu {
                pre.mapv(|v| v.max(F::zero()))
            } else {
                pre
            };
            class_scores(&affine(&h, &params.w_loc, &params.b_loc)?, Some(csd_seen))
        })
        .collect()
}

/// Pooled (global) representation and its class scores. `csd = None` means
/// classifier mode: the output head's logits are the scores.
pub fn forward_global<F: Scalar>(
    stack: &SubpartStack<F>,
    params: &ParamSet<F>,
    csd: Option<&Array2<F>>,
    relu: bool,
) -> Result<(Array2<F>, Array2<F>)> {
    let rows: Vec<&Array2<F>> = stack.subparts().iter().collect();
    let z = pooled_hidden(&rows, stack.weights(), params, relu)?;
    let scores = class_scores(&affine(&z, &params.w_out, &params.b_out)?, csd)?;
    Ok((z, scores))
}

/// `z = sum_k omega_k psi(S_k)` for already-selected row blocks.
pub(crate) fn pooled_hidden<F: Scalar>(
    inputs: &[&Array2<F>],
    weights: &[F],
    params: &ParamSet<F>,
    relu: bool,
) -> Result<Array2<F>> {
    let mut z: Array2<F> = Array2::zeros((inputs[0].nrows(), params.w_psi.ncols()));
    for (s, &w) in inputs.iter().zip(weights) {
        let pre = affine(s, &params.w_psi, &params.b_psi)?;
        let h = if relu {
            pre.mapv(|v| v.max(F::zero()))
        } else {
            pre
        };
        z.scaled_add(w, &h);
    }
    Ok(z)
}

/// Joint loss over the given training nodes (no dropout).
pub fn loss_joint<F: Scalar>(
    stack: &SubpartStack<F>,
    params: &ParamSet<F>,
    nodes: &[usize],
    labels: &[usize],
    csd_seen: &Array2<F>,
    alpha: F,
    relu: bool,
) -> Result<LossParts<F>> {
    let batch = Batch::gather(stack, nodes, labels.to_vec())?;
    let (parts, _) = run_batch(
        &batch,
        params,
        Some(csd_seen),
        alpha,
        relu,
        F::zero(),
        None,
        F::zero(),
        false,
    )?;
    Ok(parts)
}

/// Analytic gradients of the joint loss plus the coupled L2 term. When
/// `dropout > 0`, masks are drawn from a stream seeded with `seed` and the
/// returned loss corresponds to those masks.
#[allow(clippy::too_many_arguments)]
pub fn gradients<F: Scalar>(
    stack: &SubpartStack<F>,
    params: &ParamSet<F>,
    nodes: &[usize],
    labels: &[usize],
    csd_seen: &Array2<F>,
    alpha: F,
    weight_decay: F,
    dropout: F,
    seed: u64,
    relu: bool,
) -> Result<(LossParts<F>, ParamSet<F>)> {
    use rand::SeedableRng;
    let batch = Batch::gather(stack, nodes, labels.to_vec())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng_opt = (dropout > F::zero()).then_some(&mut rng);
    let (parts, grads) = run_batch(
        &batch,
        params,
        Some(csd_seen),
        alpha,
        relu,
        dropout,
        rng_opt,
        weight_decay,
        true,
    )?;
    Ok((parts, grads.expect("gradients requested")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::{build_stack, Variant};
    use crate::graph::SparseGraph;
    use crate::model::{init_params, ModelDims};
    use ndarray::array;
    use rand::SeedableRng;

    fn toy_stack(k: usize) -> SubpartStack<f64> {
        let g: SparseGraph<f64> =
            SparseGraph::build(&[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], 4).unwrap();
        let x = array![
            [1.0, 0.0, 0.5],
            [0.0, 1.0, -0.5],
            [0.5, 0.5, 1.0],
            [-1.0, 0.25, 0.0]
        ];
        build_stack(&g, &x, Variant::VanillaLazy, k, 0.7).unwrap()
    }

    fn orthonormal_csd() -> Array2<f64> {
        array![[1.0, 0.0], [0.0, 1.0]]
    }

    #[test]
    fn zero_params_give_zero_scores_and_uniform_loss() {
        let stack = toy_stack(2);
        let params = ParamSet::<f64>::zeros(ModelDims {
            input: 3,
            hidden: 4,
            out: 2,
        });
        let csd = orthonormal_csd();
        let local = forward_local(&stack, &params, &csd, false).unwrap();
        assert_eq!(local.len(), 3);
        for f in &local {
            assert!(f.iter().all(|&v| v == 0.0));
        }
        let (_, scores) = forward_global(&stack, &params, Some(&csd), false).unwrap();
        assert!(scores.iter().all(|&v| v == 0.0));

        // all-equal scores: Q_com = ln 2, Q_loc = (K+1) ln 2
        let parts = loss_joint(
            &stack,
            &params,
            &[0, 1, 2, 3],
            &[0, 1, 0, 1],
            &csd,
            1.0,
            false,
        )
        .unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((parts.compositional - ln2).abs() < 1e-12);
        assert!((parts.local - 3.0 * ln2).abs() < 1e-12);
        assert!((parts.total - 4.0 * ln2).abs() < 1e-12);
    }

    #[test]
    fn single_class_loss_is_zero_and_grads_are_decay_only() {
        let stack = toy_stack(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params: ParamSet<f64> = init_params(
            ModelDims {
                input: 3,
                hidden: 4,
                out: 2,
            },
            &mut rng,
        );
        let csd = array![[0.6, 0.8]];
        let parts = loss_joint(&stack, &params, &[0, 1, 2], &[0, 0, 0], &csd, 1.0, false).unwrap();
        assert_eq!(parts.total, 0.0);

        let wd = 1e-3;
        let (_, grads) = gradients(
            &stack,
            &params,
            &[0, 1, 2],
            &[0, 0, 0],
            &csd,
            1.0,
            wd,
            0.0,
            0,
            false,
        )
        .unwrap();
        for (g, p) in grads.w_psi.iter().zip(params.w_psi.iter()) {
            assert!((g - wd * p).abs() < 1e-14);
        }
        for (g, p) in grads.w_out.iter().zip(params.w_out.iter()) {
            assert!((g - wd * p).abs() < 1e-14);
        }
    }

    #[test]
    fn alpha_zero_drops_local_term() {
        let stack = toy_stack(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params: ParamSet<f64> = init_params(
            ModelDims {
                input: 3,
                hidden: 4,
                out: 2,
            },
            &mut rng,
        );
        let csd = orthonormal_csd();
        let parts = loss_joint(&stack, &params, &[0, 1, 2, 3], &[0, 1, 1, 0], &csd, 0.0, false)
            .unwrap();
        assert_eq!(parts.total, parts.compositional);
        assert_eq!(parts.local, 0.0);
    }

    #[test]
    fn alpha_scales_linearly() {
        let stack = toy_stack(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params: ParamSet<f64> = init_params(
            ModelDims {
                input: 3,
                hidden: 4,
                out: 2,
            },
            &mut rng,
        );
        let csd = orthonormal_csd();
        let nodes = [0usize, 1, 2, 3];
        let labels = [0usize, 1, 1, 0];
        let at = |alpha: f64| {
            loss_joint(&stack, &params, &nodes, &labels, &csd, alpha, false)
                .unwrap()
                .total
        };
        let base = at(0.0);
        let one = at(1.0);
        let two = at(2.0);
        assert!(((two - base) - 2.0 * (one - base)).abs() < 1e-12);
    }

    #[test]
    fn identity_setup_recovers_orthonormal_scores() {
        // d = d_h = d_s, identity maps, inputs equal to CSD rows
        let g: SparseGraph<f64> = SparseGraph::build(&[(0, 1)], 2).unwrap();
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let stack = build_stack(&g, &x, Variant::VanillaNorm, 0, 0.0).unwrap();
        let mut params = ParamSet::<f64>::zeros(ModelDims {
            input: 2,
            hidden: 2,
            out: 2,
        });
        params.w_psi = Array2::eye(2);
        params.w_loc = Array2::eye(2);
        params.w_out = Array2::eye(2);
        let csd = orthonormal_csd();
        let local = forward_local(&stack, &params, &csd, false).unwrap();
        assert!((local[0][[0, 0]] - 1.0).abs() < 1e-12);
        assert!(local[0][[0, 1]].abs() < 1e-12);
        assert!((local[0][[1, 1]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hidden_pooling_equals_feature_pooling_for_linear_psi() {
        let stack = toy_stack(3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params: ParamSet<f64> = init_params(
            ModelDims {
                input: 3,
                hidden: 5,
                out: 2,
            },
            &mut rng,
        );
        let (z, _) = forward_global(&stack, &params, Some(&orthonormal_csd()), false).unwrap();
        // psi applied to the feature-space composition
        let composed = stack.compose();
        let direct = affine(&composed, &params.w_psi, &params.b_psi).unwrap();
        // bias enters once because the pooling weights sum to one here
        for (a, b) in z.iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let logits = array![[1.0, 2.0, 3.0], [-5.0, 0.0, 5.0]];
        let (_, probs) = softmax_ce(&logits, &[0, 2]).unwrap();
        for row in probs.rows() {
            let sum: f64 = row.sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        let shifted = logits.mapv(|v| v + 7.5);
        let (_, probs2) = softmax_ce(&shifted, &[0, 2]).unwrap();
        for (a, b) in probs.iter().zip(probs2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn losses_are_nonnegative() {
        let stack = toy_stack(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..10 {
            let params: ParamSet<f64> = init_params(
                ModelDims {
                    input: 3,
                    hidden: 4,
                    out: 2,
                },
                &mut rng,
            );
            let parts = loss_joint(
                &stack,
                &params,
                &[0, 1, 2, 3],
                &[trial % 2, 1, 0, 1],
                &orthonormal_csd(),
                1.0,
                false,
            )
            .unwrap();
            assert!(parts.compositional >= 0.0);
            assert!(parts.local >= 0.0);
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let stack = toy_stack(1);
        let params = ParamSet::<f64>::zeros(ModelDims {
            input: 3,
            hidden: 4,
            out: 2,
        });
        let err = loss_joint(&stack, &params, &[], &[], &orthonormal_csd(), 1.0, false)
            .unwrap_err();
        assert!(matches!(err, Error::EmptyTrainingSet));
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let stack = toy_stack(1);
        let mut params = ParamSet::<f64>::zeros(ModelDims {
            input: 3,
            hidden: 4,
            out: 2,
        });
        params.w_psi[[0, 0]] = f64::INFINITY;
        let err = loss_joint(
            &stack,
            &params,
            &[0, 1],
            &[0, 1],
            &orthonormal_csd(),
            1.0,
            false,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn dropout_draws_are_deterministic_per_seed() {
        let stack = toy_stack(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params: ParamSet<f64> = init_params(
            ModelDims {
                input: 3,
                hidden: 4,
                out: 2,
            },
            &mut rng,
        );
        let csd = orthonormal_csd();
        let run = |seed: u64| {
            gradients(
                &stack,
                &params,
                &[0, 1, 2, 3],
                &[0, 1, 1, 0],
                &csd,
                1.0,
                0.0,
                0.5,
                seed,
                false,
            )
            .unwrap()
        };
        let (l1, g1) = run(11);
        let (l2, g2) = run(11);
        assert_eq!(l1.total, l2.total);
        assert_eq!(g1, g2);
        let (l3, _) = run(12);
        assert_ne!(l1.total, l3.total);
    }

    /// Central finite differences over every parameter entry.
    fn finite_difference_check(
        stack: &SubpartStack<f64>,
        params: &ParamSet<f64>,
        nodes: &[usize],
        labels: &[usize],
        csd: &Array2<f64>,
        alpha: f64,
        weight_decay: f64,
    ) -> f64 {
        let (_, analytic) = gradients(
            stack, params, nodes, labels, csd, alpha, weight_decay, 0.0, 0, false,
        )
        .unwrap();
        let h = 1e-6;
        let objective = |p: &ParamSet<f64>| -> f64 {
            let parts = loss_joint(stack, p, nodes, labels, csd, alpha, false).unwrap();
            let sq = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>();
            let sq1 = |a: &Array1<f64>| a.iter().map(|v| v * v).sum::<f64>();
            parts.total
                + 0.5
                    * weight_decay
                    * (sq(&p.w_psi)
                        + sq1(&p.b_psi)
                        + sq(&p.w_loc)
                        + sq1(&p.b_loc)
                        + sq(&p.w_out)
                        + sq1(&p.b_out))
        };
        let mut max_rel = 0.0f64;
        let mut check = |get: &dyn Fn(&mut ParamSet<f64>) -> &mut f64, analytic_g: f64| {
            let mut plus = params.clone();
            *get(&mut plus) += h;
            let mut minus = params.clone();
            *get(&mut minus) -= h;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let denom = analytic_g.abs().max(numeric.abs());
            if denom > 1e-10 {
                max_rel = max_rel.max((analytic_g - numeric).abs() / denom);
            }
        };
        let dims = params.dims();
        for r in 0..dims.input {
            for c in 0..dims.hidden {
                check(&|p| &mut p.w_psi[[r, c]], analytic.w_psi[[r, c]]);
            }
        }
        for c in 0..dims.hidden {
            check(&|p| &mut p.b_psi[c], analytic.b_psi[c]);
        }
        for r in 0..dims.hidden {
            for c in 0..dims.out {
                check(&|p| &mut p.w_loc[[r, c]], analytic.w_loc[[r, c]]);
                check(&|p| &mut p.w_out[[r, c]], analytic.w_out[[r, c]]);
            }
        }
        for c in 0..dims.out {
            check(&|p| &mut p.b_loc[c], analytic.b_loc[c]);
            check(&|p| &mut p.b_out[c], analytic.b_out[c]);
        }
        max_rel
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let stack = toy_stack(2);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for trial in 0..5 {
            let params: ParamSet<f64> = init_params(
                ModelDims {
                    input: 3,
                    hidden: 4,
                    out: 2,
                },
                &mut rng,
            );
            let alpha = [0.0, 0.5, 1.0][trial % 3];
            let wd = [0.0, 5e-4][trial % 2];
            let rel = finite_difference_check(
                &stack,
                &params,
                &[0, 1, 2, 3],
                &[0, 1, 1, 0],
                &orthonormal_csd(),
                alpha,
                wd,
            );
            assert!(rel < 1e-5, "trial {trial}: max relative error {rel:e}");
        }
    }

    #[test]
    fn classifier_mode_gradients_match_finite_differences() {
        // csd = None: the head emits logits directly
        let stack = toy_stack(2);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params: ParamSet<f64> = init_params(
            ModelDims {
                input: 3,
                hidden: 4,
                out: 2,
            },
            &mut rng,
        );
        let batch = Batch::gather(&stack, &[0, 1, 2, 3], vec![0, 1, 1, 0]).unwrap();
        let (_, grads) = run_batch(
            &batch, &params, None, 0.0, false, 0.0, None, 0.0, true,
        )
        .unwrap();
        let grads = grads.unwrap();
        let h = 1e-6;
        let objective = |p: &ParamSet<f64>| -> f64 {
            let (parts, _) =
                run_batch(&batch, p, None, 0.0, false, 0.0, None, 0.0, false).unwrap();
            parts.total
        };
        let mut max_rel = 0.0f64;
        for r in 0..4 {
            for c in 0..2 {
                let mut plus = params.clone();
                plus.w_out[[r, c]] += h;
                let mut minus = params.clone();
                minus.w_out[[r, c]] -= h;
                let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let a = grads.w_out[[r, c]];
                let denom = a.abs().max(numeric.abs());
                if denom > 1e-10 {
                    max_rel = max_rel.max((a - numeric).abs() / denom);
                }
            }
        }
        assert!(max_rel < 1e-5, "max relative error {max_rel:e}");
    }

    #[test]
    fn relu_gradients_match_finite_differences() {
        let stack = toy_stack(1);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params: ParamSet<f64> = init_params(
            ModelDims {
                input: 3,
                hidden: 6,
                out: 2,
            },
            &mut rng,
        );
        let csd = orthonormal_csd();
        let nodes = [0usize, 1, 2, 3];
        let labels = [0usize, 1, 0, 1];
        let (_, analytic) = gradients(
            &stack, &params, &nodes, &labels, &csd, 1.0, 0.0, 0.0, 0, true,
        )
        .unwrap();
        let h = 1e-6;
        let objective = |p: &ParamSet<f64>| {
            loss_joint(&stack, p, &nodes, &labels, &csd, 1.0, true)
                .unwrap()
                .total
        };
        let mut max_rel = 0.0f64;
        for r in 0..3 {
            for c in 0..6 {
                let mut plus = params.clone();
                plus.w_psi[[r, c]] += h;
                let mut minus = params.clone();
                minus.w_psi[[r, c]] -= h;
                let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let a = analytic.w_psi[[r, c]];
                let denom = a.abs().max(numeric.abs());
                if denom > 1e-8 {
                    max_rel = max_rel.max((a - numeric).abs() / denom);
                }
            }
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel:e}");
    }
}
