//! Experiment runners and deterministic reports.
//!
//! Every runner resolves an [`ExperimentConfig`], executes its pipeline per
//! seed, and returns a report that embeds the complete resolved config (and
//! any defaults that were assumed), so a report alone suffices to reproduce
//! the run. Canonical report JSON is deterministic: rerunning a task with
//! the same config yields byte-identical bytes. Wall-clock timing therefore
//! stays out of the serialized artifact; runners record it on the in-memory
//! struct only.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::csd::{evaluate_csd_quality, CsdQuality, EvalOptions};
use crate::data::{
    class_split_counts, load_content_cites, load_fixture_dataset, make_class_split,
    make_standard_split, synthetic_dataset, ClassSplit, CsdTable, Dataset, SplitScheme,
    StandardSplit, SyntheticSpec,
};
use crate::decompose::{build_stack, direct_power_oracle, SubpartStack, Variant};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::model::{
    accuracy, predict_unseen, random_guess, standard_classify, train_znc, AblationKind,
    TrainConfig,
};
use crate::Real;

/// Which experiment a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Znc,
    Standard,
    CsdEval,
    Ablation,
    DecomposeCheck,
    Grid,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Znc => "znc",
            Task::Standard => "standard",
            Task::CsdEval => "csd-eval",
            Task::Ablation => "ablation",
            Task::DecomposeCheck => "decompose-check",
            Task::Grid => "grid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "znc" => Ok(Task::Znc),
            "standard" => Ok(Task::Standard),
            "csd-eval" => Ok(Task::CsdEval),
            "ablation" => Ok(Task::Ablation),
            "decompose-check" => Ok(Task::DecomposeCheck),
            "grid" => Ok(Task::Grid),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetRef {
    /// A checksummed fixture directory `<data_root>/<id>/`.
    Fixture { id: String },
    /// Explicit content/cites paths.
    Files {
        id: String,
        content: PathBuf,
        cites: PathBuf,
    },
    /// Deterministically generated planted-partition instance.
    Synthetic { spec: SyntheticSpec },
}

impl DatasetRef {
    pub fn id(&self) -> String {
        match self {
            DatasetRef::Fixture { id } | DatasetRef::Files { id, .. } => id.clone(),
            DatasetRef::Synthetic { spec } => format!("synthetic-{}", spec.seed),
        }
    }
}

/// Class/node split selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum SplitSpec {
    SplitI,
    SplitII,
    /// Explicit class counts (synthetic and custom datasets).
    Counts {
        train: usize,
        val: usize,
        test: usize,
    },
    /// Node-level standard split (standard classification only).
    Standard,
}

/// Fully resolved experiment description, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub dataset: DatasetRef,
    /// CSD table path; synthetic datasets default to their generated table
    pub csd_path: Option<PathBuf>,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub adjacency_as_features: bool,
    pub data_root: PathBuf,
    /// standard-split fixture (standard task on file-backed datasets)
    pub standard_split_path: Option<PathBuf>,
    pub grid: Option<GridSpec>,
    /// grid mode without validation: sweep the test metric for sensitivity
    /// maps instead of selecting a model
    pub grid_sensitivity: bool,
    /// csd-eval preprocessing
    pub svd_rank: Option<usize>,
    pub kl_smoothing: Option<f64>,
    /// assertion threshold used by the CLI's --assert mode
    pub min_accuracy: Option<f64>,
    /// defaults that were assumed rather than given explicitly
    pub assumptions: Vec<String>,
}

/// Hyperparameter value lists for grid search; absent fields keep the base
/// config's single value. Cells enumerate in field order, last field
/// fastest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lr: Option<Vec<f64>>,
    pub epochs: Option<Vec<usize>>,
    pub weight_decay: Option<Vec<f64>>,
    pub dropout: Option<Vec<f64>>,
    pub k_hops: Option<Vec<usize>>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

/// Default number of repeat seeds when none are given. The source protocol
/// reports mean +/- std without stating the repeat count; ten is this
/// artifact's documented assumption, surfaced in every report.
pub const DEFAULT_REPEATS: usize = 10;

pub fn default_seeds(repeats: usize) -> Vec<u64> {
    (0..repeats as u64).collect()
}

/// Sample mean and standard deviation (n-1 denominator; 0 for n < 2).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One seed's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub accuracy: f64,
    pub chosen_epoch: usize,
    pub stopped_early: bool,
}

/// Accuracy report for znc / standard runs (and each ablation block).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub dataset: String,
    pub per_seed: Vec<SeedResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub single_sample: bool,
    pub warnings: Vec<String>,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl MetricsReport {
    /// Canonical machine-readable bytes; deterministic for a fixed config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Fixed-width human-readable table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "task {:<16} dataset {}\n",
            self.task, self.dataset
        ));
        out.push_str("  seed   accuracy   epoch   early-stop\n");
        for r in &self.per_seed {
            out.push_str(&format!(
                "{:>6}   {:>8.4}   {:>5}   {}\n",
                r.seed,
                r.accuracy,
                r.chosen_epoch,
                if r.stopped_early { "yes" } else { "no" }
            ));
        }
        out.push_str(&format!(
            "  mean {:.4}  std {:.4}  ({} seed{}{})\n",
            self.mean_accuracy,
            self.std_accuracy,
            self.per_seed.len(),
            if self.per_seed.len() == 1 { "" } else { "s" },
            if self.single_sample {
                ", single-sample std reported as 0"
            } else {
                ""
            }
        ));
        for w in &self.warnings {
            out.push_str(&format!("  warning: {w}\n"));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// resolution helpers
// ---------------------------------------------------------------------------

/// Loaded instance: dataset plus the CSD table in force.
struct ResolvedData {
    dataset: Dataset<Real>,
    csd: Option<CsdTable>,
    warnings: Vec<String>,
}

fn load_data(cfg: &ExperimentConfig) -> Result<ResolvedData> {
    let mut warnings = Vec::new();
    let (mut dataset, generated_csd) = match &cfg.dataset {
        DatasetRef::Synthetic { spec } => {
            let (ds, csd) = synthetic_dataset::<Real>(spec)?;
            (ds, Some(csd))
        }
        DatasetRef::Fixture { id } => (load_fixture_dataset(&cfg.data_root, id)?, None),
        DatasetRef::Files { id, content, cites } => {
            (load_content_cites(content, cites, id)?, None)
        }
    };
    if dataset.warnings.unknown_endpoint_edges > 0 {
        warnings.push(format!(
            "cites: {} edge(s) referencing unknown node ids dropped",
            dataset.warnings.unknown_endpoint_edges
        ));
    }
    if dataset.warnings.self_citation_edges > 0 {
        warnings.push(format!(
            "cites: {} self-citation(s) dropped",
            dataset.warnings.self_citation_edges
        ));
    }
    if cfg.adjacency_as_features {
        dataset = dataset.adjacency_as_features();
    }
    let csd = match &cfg.csd_path {
        Some(path) => Some(CsdTable::load(path)?),
        None => generated_csd,
    };
    Ok(ResolvedData {
        dataset,
        csd,
        warnings,
    })
}

fn resolve_class_split(cfg: &ExperimentConfig, dataset: &Dataset<Real>) -> Result<ClassSplit> {
    let n_classes = dataset.n_classes();
    let counts = match cfg.split {
        SplitSpec::Counts { train, val, test } => (train, val, test),
        SplitSpec::SplitI => match class_split_counts(&dataset.id, SplitScheme::SplitI) {
            Some(c) => c,
            None => {
                // synthetic/custom default: leading half seen, rest unseen
                let train = n_classes.div_ceil(2);
                (train, 0, n_classes - train)
            }
        },
        SplitSpec::SplitII => match class_split_counts(&dataset.id, SplitScheme::SplitII) {
            Some(c) => c,
            None => {
                let train = (n_classes / 2).max(1);
                let val = 1;
                if train + val >= n_classes {
                    return Err(Error::Config(format!(
                        "cannot derive a split-ii partition for {n_classes} classes; give explicit counts"
                    )));
                }
                (train, val, n_classes - train - val)
            }
        },
        SplitSpec::Standard => {
            return Err(Error::Config(
                "standard split selected for a class-split task".into(),
            ))
        }
    };
    let scheme = if counts.1 > 0 {
        SplitScheme::SplitII
    } else {
        SplitScheme::SplitI
    };
    make_class_split(&dataset.labels, n_classes, scheme, counts)
}

fn resolve_standard_split(
    cfg: &ExperimentConfig,
    dataset: &Dataset<Real>,
) -> Result<StandardSplit> {
    if let Some(path) = &cfg.standard_split_path {
        return make_standard_split(dataset, path);
    }
    if let DatasetRef::Synthetic { .. } = cfg.dataset {
        // deterministic stratified split: ~1/6 train, ~1/6 val per class
        let n_classes = dataset.n_classes();
        let mut train = Vec::new();
        let mut val = Vec::new();
        let mut test = Vec::new();
        for c in 0..n_classes {
            let members: Vec<usize> = (0..dataset.n_nodes())
                .filter(|&i| dataset.labels[i] == c)
                .collect();
            let k = (members.len() / 6).max(1);
            train.extend(&members[..k.min(members.len())]);
            val.extend(members.iter().skip(k).take(k));
            test.extend(members.iter().skip(2 * k));
        }
        return Ok(StandardSplit { train, val, test });
    }
    let default = cfg
        .data_root
        .join(cfg.dataset.id())
        .join("standard-split.json");
    make_standard_split(dataset, &default)
}

fn csd_or_err(data: &ResolvedData) -> Result<&CsdTable> {
    data.csd.as_ref().ok_or_else(|| {
        Error::Config("no CSD table: give --csd or use a synthetic dataset".into())
    })
}

// ---------------------------------------------------------------------------
// znc / standard / ablation
// ---------------------------------------------------------------------------

fn znc_accuracy_for_seed(
    stack: &SubpartStack<Real>,
    dataset: &Dataset<Real>,
    split: &ClassSplit,
    csd: &CsdTable,
    train_cfg: &TrainConfig,
) -> Result<SeedResult> {
    let trained = train_znc(stack, &dataset.labels, split, csd, train_cfg)?;
    let csd_unseen: Array2<Real> = csd.matrix(&split.test_classes, train_cfg.normalize_csd)?;
    let predicted = predict_unseen(
        &trained.params,
        stack,
        &csd_unseen,
        &split.test_classes,
        &split.test_nodes,
        train_cfg.relu,
    )?;
    let truth: Vec<usize> = split.test_nodes.iter().map(|&i| dataset.labels[i]).collect();
    Ok(SeedResult {
        seed: train_cfg.seed,
        accuracy: accuracy(&predicted, &truth),
        chosen_epoch: trained.chosen_epoch,
        stopped_early: trained.stopped_early,
    })
}

/// Zero-shot node classification: load, split, propagate once, then train
/// and evaluate per seed.
pub fn run_znc(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    let start = Instant::now();
    let data = load_data(cfg)?;
    let csd = csd_or_err(&data)?.clone();
    let split = resolve_class_split(cfg, &data.dataset)?;
    csd.check_covers(
        data.dataset.n_classes(),
        cfg.csd_path.as_deref().unwrap_or(Path::new("<generated>")),
    )?;
    let stack = build_stack(
        &data.dataset.graph,
        &data.dataset.x,
        cfg.train.variant,
        cfg.train.k_hops,
        cfg.train.beta,
    )?;

    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
        per_seed.push(znc_accuracy_for_seed(
            &stack,
            &data.dataset,
            &split,
            &csd,
            &train_cfg,
        )?);
    }
    Ok(finish_report(Task::Znc, cfg, &data, per_seed, start))
}

/// Standard semi-supervised node classification.
pub fn run_standard(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    let start = Instant::now();
    let data = load_data(cfg)?;
    let split = resolve_standard_split(cfg, &data.dataset)?;
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
        let outcome = standard_classify(
            &data.dataset.graph,
            &data.dataset.x,
            &data.dataset.labels,
            data.dataset.n_classes(),
            &split,
            &train_cfg,
        )?;
        per_seed.push(SeedResult {
            seed,
            accuracy: outcome.test_accuracy,
            chosen_epoch: outcome.trained.chosen_epoch,
            stopped_early: outcome.trained.stopped_early,
        });
    }
    Ok(finish_report(Task::Standard, cfg, &data, per_seed, start))
}

fn finish_report(
    task: Task,
    cfg: &ExperimentConfig,
    data: &ResolvedData,
    per_seed: Vec<SeedResult>,
    start: Instant,
) -> MetricsReport {
    let accuracies: Vec<f64> = per_seed.iter().map(|r| r.accuracy).collect();
    let (mean, std) = mean_std(&accuracies);
    let mut warnings = data.warnings.clone();
    for custom in cfg.train.custom_fields() {
        warnings.push(format!("hyperparameter outside documented search space: {custom}"));
    }
    MetricsReport {
        task: task.name().to_owned(),
        dataset: data.dataset.id.clone(),
        single_sample: per_seed.len() == 1,
        per_seed,
        mean_accuracy: mean,
        std_accuracy: std,
        warnings,
        config: cfg.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    }
}

/// One ablation variant's block in the grouped report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationBlock {
    pub variant: String,
    pub per_seed: Vec<SeedResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Grouped report for the three-variant ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub task: String,
    pub dataset: String,
    pub blocks: Vec<AblationBlock>,
    pub warnings: Vec<String>,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl AblationReport {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "task {:<16} dataset {}\n",
            self.task, self.dataset
        ));
        for b in &self.blocks {
            out.push_str(&format!(
                "  {:<12} mean {:.4}  std {:.4}  ({} seeds)\n",
                b.variant,
                b.mean_accuracy,
                b.std_accuracy,
                b.per_seed.len()
            ));
        }
        out
    }

    pub fn block(&self, name: &str) -> Option<&AblationBlock> {
        self.blocks.iter().find(|b| b.variant == name)
    }
}

/// Run the three ablation variants with shared seeds.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationReport> {
    let start = Instant::now();
    let data = load_data(cfg)?;
    let csd = csd_or_err(&data)?.clone();
    let split = resolve_class_split(cfg, &data.dataset)?;

    let mut blocks = Vec::new();
    for kind in AblationKind::ALL {
        let variant_cfg = kind.apply(&cfg.train);
        let stack = build_stack(
            &data.dataset.graph,
            &data.dataset.x,
            variant_cfg.variant,
            variant_cfg.k_hops,
            variant_cfg.beta,
        )?;
        let mut per_seed = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let train_cfg = TrainConfig { seed, ..variant_cfg.clone() };
            per_seed.push(znc_accuracy_for_seed(
                &stack,
                &data.dataset,
                &split,
                &csd,
                &train_cfg,
            )?);
        }
        let accuracies: Vec<f64> = per_seed.iter().map(|r| r.accuracy).collect();
        let (mean, std) = mean_std(&accuracies);
        blocks.push(AblationBlock {
            variant: kind.name().to_owned(),
            per_seed,
            mean_accuracy: mean,
            std_accuracy: std,
        });
    }
    Ok(AblationReport {
        task: Task::Ablation.name().to_owned(),
        dataset: data.dataset.id.clone(),
        blocks,
        warnings: data.warnings,
        config: cfg.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// csd-eval
// ---------------------------------------------------------------------------

/// csd-eval output row (mirrors the three-measure table layout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsdEvalReport {
    pub task: String,
    pub dataset: String,
    pub csd_kind: String,
    pub quality: CsdQuality,
    pub options: EvalOptions,
    pub warnings: Vec<String>,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl CsdEvalReport {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn render_text(&self) -> String {
        format!(
            "task {:<16} dataset {} ({})\n  kl-divergence {:.4}\n  cosine-similarity {:.4}\n  euclidean-distance {:.4}\n",
            self.task,
            self.dataset,
            self.csd_kind,
            self.quality.kl_divergence,
            self.quality.cosine_similarity,
            self.quality.euclidean_distance
        )
    }

    /// CSV row matching the report table layout.
    pub fn csv_row(&self) -> String {
        format!(
            "dataset,csd_kind,kl_divergence,cosine_similarity,euclidean_distance\n{},{},{:.6},{:.6},{:.6}\n",
            self.dataset,
            self.csd_kind,
            self.quality.kl_divergence,
            self.quality.cosine_similarity,
            self.quality.euclidean_distance
        )
    }
}

/// Evaluate CSD quality for a dataset + CSD table.
pub fn run_csd_eval(cfg: &ExperimentConfig) -> Result<CsdEvalReport> {
    let start = Instant::now();
    let data = load_data(cfg)?;
    let csd = csd_or_err(&data)?;
    csd.check_covers(
        data.dataset.n_classes(),
        cfg.csd_path.as_deref().unwrap_or(Path::new("<generated>")),
    )?;
    let all_classes: Vec<usize> = (0..data.dataset.n_classes()).collect();
    let csd_matrix: Array2<Real> = csd.matrix(&all_classes, false)?;
    let options = EvalOptions {
        svd_rank: cfg.svd_rank,
        unit_normalize: true,
        kl_smoothing: cfg.kl_smoothing,
        class_subset: None,
    };
    let quality = evaluate_csd_quality(
        &data.dataset.x,
        &data.dataset.labels,
        data.dataset.n_classes(),
        &csd_matrix,
        &options,
    )?;
    Ok(CsdEvalReport {
        task: Task::CsdEval.name().to_owned(),
        dataset: data.dataset.id.clone(),
        csd_kind: csd.kind.clone(),
        quality,
        options,
        warnings: data.warnings,
        config: cfg.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// decompose-check
// ---------------------------------------------------------------------------

/// One deviation measurement in the decompose-check report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    pub variant: String,
    pub graph_family: String,
    pub k_hops: usize,
    pub beta: f64,
    pub max_deviation: f64,
    /// `None` marks informational entries (documented non-equivalence)
    pub pass: Option<bool>,
}

/// Report of compose-vs-direct-power deviations per variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeCheckReport {
    pub task: String,
    pub tolerance: f64,
    pub entries: Vec<DeviationEntry>,
    pub all_exact_pass: bool,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

pub const DECOMPOSE_CHECK_TOL: f64 = 1e-10;

impl DecomposeCheckReport {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "task {:<16} tolerance {:.1e}\n",
            self.task, self.tolerance
        ));
        for e in &self.entries {
            out.push_str(&format!(
                "  {:<13} {:<10} K={} beta={:<4} max-dev {:.3e}  {}\n",
                e.variant,
                e.graph_family,
                e.k_hops,
                e.beta,
                e.max_deviation,
                match e.pass {
                    Some(true) => "PASS",
                    Some(false) => "FAIL",
                    None => "info",
                }
            ));
        }
        out.push_str(&format!(
            "  exact variants: {}\n",
            if self.all_exact_pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

fn random_graph_and_features(
    rng: &mut rand_chacha::ChaCha8Rng,
    n: usize,
    d: usize,
    edge_p: f64,
) -> Result<(SparseGraph<Real>, Array2<Real>)> {
    use rand::Rng;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < edge_p {
                edges.push((u, v));
            }
        }
    }
    let graph = SparseGraph::build(&edges, n)?;
    let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0);
    Ok((graph, x))
}

fn circulant_graph_and_features(
    rng: &mut rand_chacha::ChaCha8Rng,
    n: usize,
    offsets: &[usize],
    d: usize,
) -> Result<(SparseGraph<Real>, Array2<Real>)> {
    use rand::Rng;
    let mut edges = Vec::new();
    for i in 0..n {
        for &o in offsets {
            edges.push((i, (i + o) % n));
        }
    }
    let graph = SparseGraph::build(&edges, n)?;
    let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0);
    Ok((graph, x))
}

fn max_abs_diff(a: &Array2<Real>, b: &Array2<Real>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Exhaustively compare `compose(build_stack(..))` against the direct
/// matrix-power oracle on internally generated graphs.
pub fn run_decompose_check(cfg: &ExperimentConfig) -> Result<DecomposeCheckReport> {
    use rand::SeedableRng;
    let start = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let betas = [0.0, 0.3, 0.7, 1.0];
    let mut entries = Vec::new();
    let mut all_exact_pass = true;

    let exact = [Variant::VanillaNorm, Variant::VanillaLazy, Variant::TrickLazy];
    for variant in exact {
        for k in 0..=5usize {
            for &beta in &betas {
                let mut worst = 0.0f64;
                for trial in 0..4 {
                    let n = 6 + 11 * trial;
                    let (graph, x) = random_graph_and_features(&mut rng, n, 1 + trial * 2, 0.3)?;
                    let stack = build_stack(&graph, &x, variant, k, beta)?;
                    let direct = direct_power_oracle(&graph, &x, variant, k, beta)?;
                    worst = worst.max(max_abs_diff(&stack.compose(), &direct));
                }
                let pass = worst <= DECOMPOSE_CHECK_TOL;
                all_exact_pass &= pass;
                entries.push(DeviationEntry {
                    variant: variant.name().to_owned(),
                    graph_family: "random".to_owned(),
                    k_hops: k,
                    beta,
                    max_deviation: worst,
                    pass: Some(pass),
                });
                if !variant.is_lazy() {
                    break; // beta is irrelevant for non-lazy variants
                }
            }
        }
    }

    // trick variant: exact on regular graphs, informational on irregular
    for k in 0..=5usize {
        let mut worst = 0.0f64;
        for &n in &[8usize, 12, 16] {
            let (graph, x) = circulant_graph_and_features(&mut rng, n, &[1, 2], 4)?;
            let stack = build_stack(&graph, &x, Variant::Trick, k, 0.0)?;
            let direct = direct_power_oracle(&graph, &x, Variant::Trick, k, 0.0)?;
            worst = worst.max(max_abs_diff(&stack.compose(), &direct));
        }
        let pass = worst <= DECOMPOSE_CHECK_TOL;
        all_exact_pass &= pass;
        entries.push(DeviationEntry {
            variant: Variant::Trick.name().to_owned(),
            graph_family: "regular".to_owned(),
            k_hops: k,
            beta: 0.0,
            max_deviation: worst,
            pass: Some(pass),
        });
    }
    {
        // star graph: documented non-commutation, informational only
        let edges: Vec<(usize, usize)> = (1..8).map(|v| (0usize, v)).collect();
        let graph: SparseGraph<Real> = SparseGraph::build(&edges, 8)?;
        use rand::Rng;
        let x = Array2::from_shape_fn((8, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        let stack = build_stack(&graph, &x, Variant::Trick, 2, 0.0)?;
        let direct = direct_power_oracle(&graph, &x, Variant::Trick, 2, 0.0)?;
        entries.push(DeviationEntry {
            variant: Variant::Trick.name().to_owned(),
            graph_family: "star".to_owned(),
            k_hops: 2,
            beta: 0.0,
            max_deviation: max_abs_diff(&stack.compose(), &direct),
            pass: None,
        });
    }

    Ok(DecomposeCheckReport {
        task: Task::DecomposeCheck.name().to_owned(),
        tolerance: DECOMPOSE_CHECK_TOL,
        entries,
        all_exact_pass,
        config: cfg.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------------

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lr: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub dropout: f64,
    pub k_hops: usize,
    pub alpha: f64,
    pub beta: f64,
    /// mean validation accuracy (selection mode) or mean test accuracy
    /// (sensitivity mode)
    pub metric: f64,
}

/// Exhaustive grid report. In selection mode the best-validation cell is
/// re-evaluated on the test set; in sensitivity mode (no validation signal)
/// the metric itself is the test accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub task: String,
    pub dataset: String,
    pub selection_by_validation: bool,
    pub cells: Vec<GridCell>,
    pub selected: Option<GridCell>,
    pub selected_test_accuracy: Option<f64>,
    pub warnings: Vec<String>,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl GridReport {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Full grid as CSV.
    pub fn csv(&self) -> String {
        let mut out =
            String::from("lr,epochs,weight_decay,dropout,k_hops,alpha,beta,metric\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.6}\n",
                c.lr, c.epochs, c.weight_decay, c.dropout, c.k_hops, c.alpha, c.beta, c.metric
            ));
        }
        out
    }

    /// K x beta heat-map CSV (rows = K, columns = beta) when those are the
    /// swept axes.
    pub fn heatmap_csv(&self) -> Option<String> {
        let mut ks: Vec<usize> = self.cells.iter().map(|c| c.k_hops).collect();
        ks.sort_unstable();
        ks.dedup();
        let mut betas: Vec<f64> = self.cells.iter().map(|c| c.beta).collect();
        betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        betas.dedup();
        if ks.len() * betas.len() != self.cells.len() {
            return None;
        }
        let mut out = String::from("k_hops\\beta");
        for b in &betas {
            out.push_str(&format!(",{b}"));
        }
        out.push('\n');
        for &k in &ks {
            out.push_str(&format!("{k}"));
            for &b in &betas {
                let cell = self
                    .cells
                    .iter()
                    .find(|c| c.k_hops == k && c.beta == b)?;
                out.push_str(&format!(",{:.4}", cell.metric));
            }
            out.push('\n');
        }
        Some(out)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "task {:<16} dataset {} ({} cells, {})\n",
            self.task,
            self.dataset,
            self.cells.len(),
            if self.selection_by_validation {
                "selection by validation accuracy"
            } else {
                "test-metric sensitivity sweep"
            }
        ));
        if let Some(sel) = &self.selected {
            out.push_str(&format!(
                "  selected: lr={} epochs={} wd={} dropout={} K={} alpha={} beta={} (metric {:.4})\n",
                sel.lr, sel.epochs, sel.weight_decay, sel.dropout, sel.k_hops, sel.alpha, sel.beta,
                sel.metric
            ));
        }
        if let Some(acc) = self.selected_test_accuracy {
            out.push_str(&format!("  selected-config test accuracy: {acc:.4}\n"));
        }
        out
    }
}

fn grid_values(spec: &GridSpec, base: &TrainConfig) -> Vec<TrainConfig> {
    let lrs = spec.lr.clone().unwrap_or_else(|| vec![base.lr]);
    let epochs = spec.epochs.clone().unwrap_or_else(|| vec![base.epochs]);
    let wds = spec
        .weight_decay
        .clone()
        .unwrap_or_else(|| vec![base.weight_decay]);
    let dropouts = spec.dropout.clone().unwrap_or_else(|| vec![base.dropout]);
    let ks = spec.k_hops.clone().unwrap_or_else(|| vec![base.k_hops]);
    let alphas = spec.alpha.clone().unwrap_or_else(|| vec![base.alpha]);
    let betas = spec.beta.clone().unwrap_or_else(|| vec![base.beta]);
    let mut out = Vec::new();
    for &lr in &lrs {
        for &ep in &epochs {
            for &wd in &wds {
                for &dr in &dropouts {
                    for &k in &ks {
                        for &al in &alphas {
                            for &be in &betas {
                                out.push(TrainConfig {
                                    lr,
                                    epochs: ep,
                                    weight_decay: wd,
                                    dropout: dr,
                                    k_hops: k,
                                    alpha: al,
                                    beta: be,
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Exhaustive hyperparameter sweep for the zero-shot task.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<GridReport> {
    let start = Instant::now();
    let spec = cfg
        .grid
        .as_ref()
        .ok_or_else(|| Error::Config("grid task needs a grid value specification".into()))?;
    let data = load_data(cfg)?;
    let csd = csd_or_err(&data)?.clone();
    let split = resolve_class_split(cfg, &data.dataset)?;
    let has_validation = !split.val_classes.is_empty();
    if !has_validation && !cfg.grid_sensitivity {
        return Err(Error::Config(
            "grid selection needs a validation signal (split-ii); pass sensitivity mode to sweep the test metric".into(),
        ));
    }
    let selection_by_validation = has_validation && !cfg.grid_sensitivity;

    let candidates = grid_values(spec, &cfg.train);
    let mut cells = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for (idx, cand) in candidates.iter().enumerate() {
        let stack = build_stack(
            &data.dataset.graph,
            &data.dataset.x,
            cand.variant,
            cand.k_hops,
            cand.beta,
        )?;
        let mut metrics = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let train_cfg = TrainConfig { seed, ..cand.clone() };
            let metric = if selection_by_validation {
                let trained = train_znc(&stack, &data.dataset.labels, &split, &csd, &train_cfg)?;
                let best_val = trained
                    .history
                    .iter()
                    .filter_map(|r| r.val_objective)
                    .fold(f64::NEG_INFINITY, f64::max);
                best_val
            } else {
                znc_accuracy_for_seed(&stack, &data.dataset, &split, &csd, &train_cfg)?.accuracy
            };
            metrics.push(metric);
        }
        let (mean, _) = mean_std(&metrics);
        cells.push(GridCell {
            lr: cand.lr,
            epochs: cand.epochs,
            weight_decay: cand.weight_decay,
            dropout: cand.dropout,
            k_hops: cand.k_hops,
            alpha: cand.alpha,
            beta: cand.beta,
            metric: mean,
        });
        // ties resolve to the first candidate in iteration order
        if best.map(|(_, m)| mean > m).unwrap_or(true) {
            best = Some((idx, mean));
        }
    }

    let (selected, selected_test_accuracy) = match best {
        None => (None, None),
        Some((idx, _)) => {
            let cell = cells[idx].clone();
            let test_acc = if selection_by_validation {
                // final test evaluation for the selected config only
                let cand = &candidates[idx];
                let stack = build_stack(
                    &data.dataset.graph,
                    &data.dataset.x,
                    cand.variant,
                    cand.k_hops,
                    cand.beta,
                )?;
                let mut accs = Vec::with_capacity(cfg.seeds.len());
                for &seed in &cfg.seeds {
                    let train_cfg = TrainConfig { seed, ..cand.clone() };
                    accs.push(
                        znc_accuracy_for_seed(&stack, &data.dataset, &split, &csd, &train_cfg)?
                            .accuracy,
                    );
                }
                Some(mean_std(&accs).0)
            } else {
                Some(cell.metric)
            };
            (Some(cell), test_acc)
        }
    };

    Ok(GridReport {
        task: Task::Grid.name().to_owned(),
        dataset: data.dataset.id.clone(),
        selection_by_validation,
        cells,
        selected,
        selected_test_accuracy,
        warnings: data.warnings,
        config: cfg.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------------

/// Train once with the first configured seed and write the parameter
/// checkpoint. Supports the znc and standard tasks.
pub fn train_and_checkpoint(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let seed = *cfg
        .seeds
        .first()
        .ok_or_else(|| Error::Config("empty seed list".into()))?;
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let data = load_data(cfg)?;
    let params = match cfg.task {
        Task::Znc => {
            let csd = csd_or_err(&data)?;
            let split = resolve_class_split(cfg, &data.dataset)?;
            let stack = build_stack(
                &data.dataset.graph,
                &data.dataset.x,
                train_cfg.variant,
                train_cfg.k_hops,
                train_cfg.beta,
            )?;
            train_znc(&stack, &data.dataset.labels, &split, csd, &train_cfg)?.params
        }
        Task::Standard => {
            let split = resolve_standard_split(cfg, &data.dataset)?;
            standard_classify(
                &data.dataset.graph,
                &data.dataset.x,
                &data.dataset.labels,
                data.dataset.n_classes(),
                &split,
                &train_cfg,
            )?
            .trained
            .params
        }
        other => {
            return Err(Error::Config(format!(
                "checkpointing is not defined for the {} task",
                other.name()
            )))
        }
    };
    crate::model::save_checkpoint(path, &params, &train_cfg, seed)
}

// ---------------------------------------------------------------------------
// random-guess calibration helper
// ---------------------------------------------------------------------------

/// Mean and std of RandomGuess accuracy over `seeds` on the given test
/// labels and unseen class set.
pub fn random_guess_calibration(
    test_labels: &[usize],
    unseen_classes: &[usize],
    seeds: &[u64],
) -> Result<(f64, f64)> {
    let mut accs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let guesses = random_guess(test_labels.len(), unseen_classes, seed)?;
        accs.push(accuracy(&guesses, test_labels));
    }
    Ok(mean_std(&accs))
}
