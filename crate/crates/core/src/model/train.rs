//! Training loops, zero-shot inference, and baselines.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ClassSplit, CsdTable, StandardSplit};
use crate::decompose::{build_stack, SubpartStack};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::scalar::{cast, Scalar};

use super::forward::{pooled_hidden, run_batch, Batch};
use super::{adam_step, init_params, AdamState, ModelDims, ParamSet, TrainConfig};

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub loss_compositional: f64,
    pub loss_local: f64,
    /// validation accuracy (zero-shot mode) or validation loss (standard
    /// mode), when a validation signal exists
    pub val_objective: Option<f64>,
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct Trained<F> {
    pub params: ParamSet<F>,
    pub history: Vec<EpochRecord>,
    /// epoch whose parameters are returned: best validation epoch when a
    /// validation signal exists, otherwise the last
    pub chosen_epoch: usize,
    pub stopped_early: bool,
}

/// Greater-is-better / less-is-better early stopping bookkeeping.
struct EarlyStopper {
    maximize: bool,
    window: Option<usize>,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopper {
    fn new(maximize: bool, window: Option<usize>) -> Self {
        EarlyStopper {
            maximize,
            window,
            best: if maximize {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            },
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Returns `(improved, should_stop)`.
    fn observe(&mut self, epoch: usize, value: f64) -> (bool, bool) {
        let improved = if self.maximize {
            value > self.best
        } else {
            value < self.best
        };
        if improved {
            self.best = value;
            self.best_epoch = epoch;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        let stop = match self.window {
            Some(w) => self.since_best >= w,
            None => false,
        };
        (improved, stop)
    }
}

/// Fraction of positions where `predictions[i] == truth[i]`.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    hits as f64 / predictions.len() as f64
}

/// Row argmax with ties broken toward the lowest index.
fn argmax_row<F: Scalar>(row: ndarray::ArrayView1<F>) -> usize {
    let mut best = 0;
    let mut best_v = row[0];
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best_v = v;
            best = j;
        }
    }
    best
}

/// Scores of the pooled representation for the given nodes against a CSD
/// matrix (zero-shot) or as raw logits (`csd = None`).
fn scores_for_nodes<F: Scalar>(
    params: &ParamSet<F>,
    stack: &SubpartStack<F>,
    nodes: &[usize],
    csd: Option<&Array2<F>>,
    relu: bool,
) -> Result<Array2<F>> {
    let selected: Vec<Array2<F>> = stack
        .subparts()
        .iter()
        .map(|s| s.select(Axis(0), nodes))
        .collect();
    let refs: Vec<&Array2<F>> = selected.iter().collect();
    let z = pooled_hidden(&refs, stack.weights(), params, relu)?;
    let mut mapped = z.dot(&params.w_out);
    for mut row in mapped.rows_mut() {
        row += &params.b_out;
    }
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
        None => Ok(mapped),
    }
}

/// Zero-shot label inference: argmax inner product against the candidate
/// class CSDs. Returns global class ids from `candidate_classes`; ties go to
/// the lowest class index.
pub fn predict_unseen<F: Scalar>(
    params: &ParamSet<F>,
    stack: &SubpartStack<F>,
    csd_candidates: &Array2<F>,
    candidate_classes: &[usize],
    nodes: &[usize],
    relu: bool,
) -> Result<Vec<usize>> {
    if candidate_classes.is_empty() {
        return Err(Error::EmptyClassSet("unseen"));
    }
    if csd_candidates.nrows() != candidate_classes.len() {
        return Err(Error::DimMismatch {
            context: "candidate CSD rows",
            expected: candidate_classes.len(),
            got: csd_candidates.nrows(),
        });
    }
    let scores = scores_for_nodes(params, stack, nodes, Some(csd_candidates), relu)?;
    Ok(scores
        .rows()
        .into_iter()
        .map(|row| candidate_classes[argmax_row(row)])
        .collect())
}

/// Class prediction in standard-classification mode (head logits).
pub fn predict_classifier<F: Scalar>(
    params: &ParamSet<F>,
    stack: &SubpartStack<F>,
    nodes: &[usize],
    relu: bool,
) -> Result<Vec<usize>> {
    let scores = scores_for_nodes(params, stack, nodes, None, relu)?;
    Ok(scores.rows().into_iter().map(argmax_row).collect())
}

/// Zero-shot accuracy over `nodes` restricted to `classes`.
fn zero_shot_accuracy<F: Scalar>(
    params: &ParamSet<F>,
    stack: &SubpartStack<F>,
    csd: &Array2<F>,
    classes: &[usize],
    nodes: &[usize],
    labels: &[usize],
    relu: bool,
) -> Result<f64> {
    let predicted = predict_unseen(params, stack, csd, classes, nodes, relu)?;
    let truth: Vec<usize> = nodes.iter().map(|&i| labels[i]).collect();
    Ok(accuracy(&predicted, &truth))
}

fn local_labels(nodes: &[usize], labels: &[usize], classes: &[usize]) -> Result<Vec<usize>> {
    nodes
        .iter()
        .map(|&i| {
            classes
                .iter()
                .position(|&c| c == labels[i])
                .ok_or_else(|| Error::Config(format!("node {i} carries out-of-split class {}", labels[i])))
        })
        .collect()
}

/// Train the zero-shot model on the seen classes of `split`.
///
/// All seen-class nodes form one full batch per step. When validation
/// classes exist, the validation objective is zero-shot accuracy on the
/// validation-class nodes and the best-validation parameters are returned;
/// otherwise training runs the configured epochs and returns the final
/// parameters.
pub fn train_znc<F: Scalar>(
    stack: &SubpartStack<F>,
    labels: &[usize],
    split: &ClassSplit,
    csd: &CsdTable,
    cfg: &TrainConfig,
) -> Result<Trained<F>> {
    if split.train_classes.is_empty() {
        return Err(Error::EmptyClassSet("train"));
    }
    if split.train_nodes.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if labels.len() != stack.n_nodes() {
        return Err(Error::DimMismatch {
            context: "labels",
            expected: stack.n_nodes(),
            got: labels.len(),
        });
    }

    let csd_train: Array2<F> = csd.matrix(&split.train_classes, cfg.normalize_csd)?;
    let batch = Batch::gather(
        stack,
        &split.train_nodes,
        local_labels(&split.train_nodes, labels, &split.train_classes)?,
    )?;

    let validation = if !split.val_classes.is_empty() && !split.val_nodes.is_empty() {
        let csd_val: Array2<F> = csd.matrix(&split.val_classes, cfg.normalize_csd)?;
        Some(csd_val)
    } else {
        None
    };

    let dims = ModelDims {
        input: stack.feature_dim(),
        hidden: cfg.hidden_dim,
        out: csd.dim,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params: ParamSet<F> = init_params(dims, &mut rng);
    let mut adam = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut stopper = EarlyStopper::new(true, cfg.early_stop_window);
    let mut best_params: Option<ParamSet<F>> = None;
    let mut stopped_early = false;

    let alpha = cast::<F>(cfg.alpha);
    let dropout = cast::<F>(cfg.dropout);
    let lr = cast::<F>(cfg.lr);
    let wd = cast::<F>(cfg.weight_decay);

    for epoch in 0..cfg.epochs {
        let rng_opt = (cfg.dropout > 0.0).then_some(&mut rng);
        let (parts, grads) = run_batch(
            &batch,
            &params,
            Some(&csd_train),
            alpha,
            cfg.relu,
            dropout,
            rng_opt,
            wd,
            true,
        )
        .map_err(|e| match e {
            Error::NonFinite { what, detail, .. } => Error::NonFinite { what, epoch, detail },
            other => other,
        })?;
        adam_step(&mut params, &grads.expect("requested"), &mut adam, lr, F::zero());
        params.check_finite(epoch)?;

        let val_objective = match &validation {
            Some(csd_val) => Some(zero_shot_accuracy(
                &params,
                stack,
                csd_val,
                &split.val_classes,
                &split.val_nodes,
                labels,
                cfg.relu,
            )?),
            None => None,
        };
        history.push(EpochRecord {
            epoch,
            loss: parts.total.to_f64().unwrap_or(f64::NAN),
            loss_compositional: parts.compositional.to_f64().unwrap_or(f64::NAN),
            loss_local: parts.local.to_f64().unwrap_or(f64::NAN),
            val_objective,
        });

        if let Some(v) = val_objective {
            let (improved, stop) = stopper.observe(epoch, v);
            if improved {
                best_params = Some(params.clone());
            }
            if stop {
                stopped_early = true;
                break;
            }
        }
    }

    let chosen_epoch = if validation.is_some() {
        stopper.best_epoch
    } else {
        history.len().saturating_sub(1)
    };
    Ok(Trained {
        params: best_params.unwrap_or(params),
        history,
        chosen_epoch,
        stopped_early,
    })
}

/// Convenience wrapper: build the decomposition stack from the graph and
/// train on it.
pub fn train_znc_on_graph<F: Scalar>(
    graph: &SparseGraph<F>,
    x: &Array2<F>,
    labels: &[usize],
    split: &ClassSplit,
    csd: &CsdTable,
    cfg: &TrainConfig,
) -> Result<(Trained<F>, SubpartStack<F>)> {
    let stack = build_stack(graph, x, cfg.variant, cfg.k_hops, cast::<F>(cfg.beta))?;
    let trained = train_znc(&stack, labels, split, csd, cfg)?;
    Ok((trained, stack))
}

/// Outcome of a standard node-classification run.
#[derive(Debug, Clone)]
pub struct StandardOutcome<F> {
    pub test_accuracy: f64,
    pub trained: Trained<F>,
}

/// Standard semi-supervised node classification: the semantic head is
/// replaced by a `|C|`-way classifier, trained with cross-entropy on the
/// train nodes, early-stopped on validation loss, and evaluated on the test
/// nodes with the best-validation parameters.
pub fn standard_classify<F: Scalar>(
    graph: &SparseGraph<F>,
    x: &Array2<F>,
    labels: &[usize],
    n_classes: usize,
    split: &StandardSplit,
    cfg: &TrainConfig,
) -> Result<StandardOutcome<F>> {
    if split.train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let stack = build_stack(graph, x, cfg.variant, cfg.k_hops, cast::<F>(cfg.beta))?;
    let train_batch = Batch::gather(
        &stack,
        &split.train,
        split.train.iter().map(|&i| labels[i]).collect(),
    )?;
    let val_batch = if split.val.is_empty() {
        None
    } else {
        Some(Batch::gather(
            &stack,
            &split.val,
            split.val.iter().map(|&i| labels[i]).collect(),
        )?)
    };

    let dims = ModelDims {
        input: stack.feature_dim(),
        hidden: cfg.hidden_dim,
        out: n_classes,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params: ParamSet<F> = init_params(dims, &mut rng);
    let mut adam = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut stopper = EarlyStopper::new(false, cfg.early_stop_window);
    let mut best_params: Option<ParamSet<F>> = None;
    let mut stopped_early = false;

    let alpha = cast::<F>(cfg.alpha);
    let dropout = cast::<F>(cfg.dropout);
    let lr = cast::<F>(cfg.lr);
    let wd = cast::<F>(cfg.weight_decay);

    for epoch in 0..cfg.epochs {
        let rng_opt = (cfg.dropout > 0.0).then_some(&mut rng);
        let (parts, grads) = run_batch(
            &train_batch,
            &params,
            None,
            alpha,
            cfg.relu,
            dropout,
            rng_opt,
            wd,
            true,
        )
        .map_err(|e| match e {
            Error::NonFinite { what, detail, .. } => Error::NonFinite { what, epoch, detail },
            other => other,
        })?;
        adam_step(&mut params, &grads.expect("requested"), &mut adam, lr, F::zero());
        params.check_finite(epoch)?;

        let val_objective = match &val_batch {
            Some(vb) => {
                let (val_parts, _) = run_batch(
                    vb,
                    &params,
                    None,
                    F::zero(),
                    cfg.relu,
                    F::zero(),
                    None,
                    F::zero(),
                    false,
                )?;
                Some(val_parts.total.to_f64().unwrap_or(f64::NAN))
            }
            None => None,
        };
        history.push(EpochRecord {
            epoch,
            loss: parts.total.to_f64().unwrap_or(f64::NAN),
            loss_compositional: parts.compositional.to_f64().unwrap_or(f64::NAN),
            loss_local: parts.local.to_f64().unwrap_or(f64::NAN),
            val_objective,
        });
        if let Some(v) = val_objective {
            let (improved, stop) = stopper.observe(epoch, v);
            if improved {
                best_params = Some(params.clone());
            }
            if stop {
                stopped_early = true;
                break;
            }
        }
    }

    let chosen_epoch = if val_batch.is_some() {
        stopper.best_epoch
    } else {
        history.len().saturating_sub(1)
    };
    let final_params = best_params.unwrap_or(params);
    let predicted = predict_classifier(&final_params, &stack, &split.test, cfg.relu)?;
    let truth: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    Ok(StandardOutcome {
        test_accuracy: accuracy(&predicted, &truth),
        trained: Trained {
            params: final_params,
            history,
            chosen_epoch,
            stopped_early,
        },
    })
}

/// The trivial baseline: an i.i.d. uniform draw from the unseen classes for
/// every test node.
pub fn random_guess(n_nodes: usize, unseen_classes: &[usize], seed: u64) -> Result<Vec<usize>> {
    if unseen_classes.is_empty() {
        return Err(Error::EmptyClassSet("unseen"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_nodes)
        .map(|_| unseen_classes[rng.random_range(0..unseen_classes.len())])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_class_split, synthetic_dataset, SplitScheme, SyntheticSpec};
    use ndarray::array;

    fn toy_setup() -> (
        SubpartStack<f64>,
        Vec<usize>,
        ClassSplit,
        CsdTable,
        TrainConfig,
    ) {
        let spec = SyntheticSpec {
            classes: 4,
            nodes_per_class: 10,
            csd_dim: 8,
            feature_noise: 0.3,
            p_in: 0.5,
            p_out: 0.05,
            seed: 7,
            ..SyntheticSpec::default()
        };
        let (ds, csd) = synthetic_dataset::<f64>(&spec).unwrap();
        let cfg = TrainConfig {
            epochs: 120,
            hidden_dim: 16,
            k_hops: 2,
            ..TrainConfig::znc_default()
        };
        let stack = build_stack(&ds.graph, &ds.x, cfg.variant, cfg.k_hops, cfg.beta).unwrap();
        let split = make_class_split(&ds.labels, 4, SplitScheme::SplitI, (2, 0, 2)).unwrap();
        (stack, ds.labels, split, csd, cfg)
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let (stack, labels, split, csd, cfg) = toy_setup();
        let a = train_znc(&stack, &labels, &split, &csd, &cfg).unwrap();
        let b = train_znc(&stack, &labels, &split, &csd, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn zero_shot_beats_random_on_separable_instance() {
        let (stack, labels, split, csd, cfg) = toy_setup();
        let trained = train_znc(&stack, &labels, &split, &csd, &cfg).unwrap();
        let csd_unseen: Array2<f64> = csd.matrix(&split.test_classes, true).unwrap();
        let predicted = predict_unseen(
            &trained.params,
            &stack,
            &csd_unseen,
            &split.test_classes,
            &split.test_nodes,
            false,
        )
        .unwrap();
        let truth: Vec<usize> = split.test_nodes.iter().map(|&i| labels[i]).collect();
        let acc = accuracy(&predicted, &truth);
        assert!(acc > 0.8, "unseen accuracy {acc} not above 0.8");
    }

    #[test]
    fn compositional_loss_decreases_early() {
        let (stack, labels, split, csd, mut cfg) = toy_setup();
        cfg.epochs = 12;
        for alpha in [0.0, 1.0] {
            cfg.alpha = alpha;
            let trained = train_znc(&stack, &labels, &split, &csd, &cfg).unwrap();
            let h = &trained.history;
            for w in h.windows(2).take(10) {
                assert!(
                    w[1].loss_compositional <= w[0].loss_compositional + 1e-6,
                    "alpha={alpha}: compositional loss rose early: {} -> {}",
                    w[0].loss_compositional,
                    w[1].loss_compositional
                );
            }
        }
    }

    #[test]
    fn validation_split_early_stops_and_returns_best() {
        let (stack, labels, _, csd, mut cfg) = toy_setup();
        let split = make_class_split(&labels, 4, SplitScheme::SplitII, (1, 1, 2)).unwrap();
        cfg.early_stop_window = Some(5);
        cfg.epochs = 400;
        let trained = train_znc(&stack, &labels, &split, &csd, &cfg).unwrap();
        assert!(trained.history.len() <= 400);
        let best = trained
            .history
            .iter()
            .filter_map(|r| r.val_objective)
            .fold(f64::NEG_INFINITY, f64::max);
        let chosen = trained.history[trained.chosen_epoch].val_objective.unwrap();
        assert_eq!(best, chosen);
    }

    #[test]
    fn empty_train_class_set_is_rejected() {
        let (stack, labels, mut split, csd, cfg) = toy_setup();
        split.train_classes.clear();
        assert!(matches!(
            train_znc(&stack, &labels, &split, &csd, &cfg),
            Err(Error::EmptyClassSet("train"))
        ));
    }

    #[test]
    fn tie_break_predicts_lowest_class_index() {
        let (stack, _, _, _, _) = toy_setup();
        let params = ParamSet::<f64>::zeros(ModelDims {
            input: stack.feature_dim(),
            hidden: 4,
            out: 3,
        });
        let csd = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        // zero head -> all scores zero -> lowest candidate class wins
        let predicted =
            predict_unseen(&params, &stack, &csd, &[2, 3], &[0, 5, 11], false).unwrap();
        assert_eq!(predicted, vec![2, 2, 2]);
    }

    #[test]
    fn predictions_invariant_under_uniform_csd_scaling() {
        let (stack, labels, split, csd, cfg) = toy_setup();
        let trained = train_znc(&stack, &labels, &split, &csd, &cfg).unwrap();
        let base: Array2<f64> = csd.matrix(&split.test_classes, false).unwrap();
        let scaled = &base * 5.0;
        let a = predict_unseen(
            &trained.params,
            &stack,
            &base,
            &split.test_classes,
            &split.test_nodes,
            false,
        )
        .unwrap();
        let b = predict_unseen(
            &trained.params,
            &stack,
            &scaled,
            &split.test_classes,
            &split.test_nodes,
            false,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_guess_is_deterministic_and_calibrated() {
        let a = random_guess(100, &[3, 4, 5, 6], 9).unwrap();
        let b = random_guess(100, &[3, 4, 5, 6], 9).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|c| (3..=6).contains(c)));

        // single unseen class: accuracy 1 against that class
        let only = random_guess(50, &[2], 1).unwrap();
        let truth = vec![2usize; 50];
        assert_eq!(accuracy(&only, &truth), 1.0);

        assert!(matches!(
            random_guess(5, &[], 0),
            Err(Error::EmptyClassSet("unseen"))
        ));
    }

    #[test]
    fn standard_classification_learns_separable_labels() {
        let spec = SyntheticSpec {
            classes: 3,
            nodes_per_class: 30,
            csd_dim: 6,
            feature_noise: 0.5,
            p_in: 0.4,
            p_out: 0.02,
            seed: 11,
            ..SyntheticSpec::default()
        };
        let (ds, _) = synthetic_dataset::<f64>(&spec).unwrap();
        // stratified node split: 5 train, 5 val per class, rest test
        let mut train = Vec::new();
        let mut val = Vec::new();
        let mut test = Vec::new();
        for c in 0..3 {
            let members: Vec<usize> =
                (0..ds.n_nodes()).filter(|&i| ds.labels[i] == c).collect();
            train.extend(&members[..5]);
            val.extend(&members[5..10]);
            test.extend(&members[10..]);
        }
        let split = StandardSplit { train, val, test };
        let cfg = TrainConfig {
            seed: 3,
            hidden_dim: 16,
            dropout: 0.5,
            ..TrainConfig::standard_default()
        };
        let outcome = standard_classify(&ds.graph, &ds.x, &ds.labels, 3, &split, &cfg).unwrap();
        assert!(
            outcome.test_accuracy > 0.8,
            "test accuracy {}",
            outcome.test_accuracy
        );
    }

    #[test]
    fn permuting_head_columns_permutes_predictions() {
        let spec = SyntheticSpec {
            classes: 3,
            nodes_per_class: 10,
            csd_dim: 6,
            feature_noise: 0.4,
            ..SyntheticSpec::default()
        };
        let (ds, _) = synthetic_dataset::<f64>(&spec).unwrap();
        let split = StandardSplit {
            train: (0..15).collect(),
            val: vec![],
            test: (15..30).collect(),
        };
        let cfg = TrainConfig {
            epochs: 60,
            hidden_dim: 8,
            dropout: 0.0,
            early_stop_window: None,
            ..TrainConfig::standard_default()
        };
        let outcome = standard_classify(&ds.graph, &ds.x, &ds.labels, 3, &split, &cfg).unwrap();
        let stack = build_stack(&ds.graph, &ds.x, cfg.variant, cfg.k_hops, cfg.beta).unwrap();
        let base = predict_classifier(&outcome.trained.params, &stack, &split.test, false).unwrap();

        // permute class ids pi = (1, 2, 0) in the head
        let pi = [1usize, 2, 0];
        let mut permuted = outcome.trained.params.clone();
        for (src, &dst) in pi.iter().enumerate() {
            permuted
                .w_out
                .column_mut(dst)
                .assign(&outcome.trained.params.w_out.column(src));
            permuted.b_out[dst] = outcome.trained.params.b_out[src];
            permuted
                .w_loc
                .column_mut(dst)
                .assign(&outcome.trained.params.w_loc.column(src));
            permuted.b_loc[dst] = outcome.trained.params.b_loc[src];
        }
        let moved = predict_classifier(&permuted, &stack, &split.test, false).unwrap();
        let remapped: Vec<usize> = base.iter().map(|&c| pi[c]).collect();
        assert_eq!(moved, remapped);
        // accuracy against likewise-permuted truth is unchanged
        let truth: Vec<usize> = split.test.iter().map(|&i| ds.labels[i]).collect();
        let truth_permuted: Vec<usize> = truth.iter().map(|&c| pi[c]).collect();
        assert_eq!(
            accuracy(&base, &truth),
            accuracy(&moved, &truth_permuted)
        );
    }

    #[test]
    fn ablation_pronet_gcn_loss_is_compositional_only() {
        let (stack, labels, split, csd, cfg) = toy_setup();
        let gcn_cfg = super::super::AblationKind::ProNetGcn.apply(&cfg);
        assert_eq!(gcn_cfg.alpha, 0.0);
        let trained = train_znc(&stack, &labels, &split, &csd, &gcn_cfg).unwrap();
        for rec in &trained.history {
            assert_eq!(rec.loss, rec.loss_compositional);
            assert_eq!(rec.loss_local, 0.0);
        }
    }
}
