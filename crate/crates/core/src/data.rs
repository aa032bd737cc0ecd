//! Dataset ingestion, CSD tables, class splits, and synthetic instances.
//!
//! Citation networks arrive as a `content` file (one node per line:
//! `<node_id> <attr_0> ... <attr_{d-1}> <label>`) and a `cites` file
//! (`<cited_id> <citing_id>` per line). Node ids are remapped to dense
//! `0..n-1` in first-appearance order of the content file; edges naming
//! unknown ids and self-citations are dropped with counted warnings.
//!
//! CSD tables are JSON documents:
//!
//! ```json
//! { "kind": "text", "dim": 128,
//!   "classes": [ { "id": 0, "name": "...", "vector": [ ... ] } ] }
//! ```
//!
//! Fixture directories carry a `manifest.json` with per-file checksums and
//! row counts so a run can verify it is consuming the bytes it expects.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csd::unit_normalize_rows;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::scalar::{cast, Scalar};

/// Node/edge/feature/class counts, echoed by every loader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
}

/// Counted, non-fatal anomalies seen while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadWarnings {
    /// cites lines naming a node id absent from the content file
    pub unknown_endpoint_edges: usize,
    /// cites lines citing the node itself
    pub self_citation_edges: usize,
}

/// An attributed, labeled graph.
#[derive(Debug, Clone)]
pub struct Dataset<F> {
    pub id: String,
    pub graph: SparseGraph<F>,
    pub x: Array2<F>,
    /// class id per node
    pub labels: Vec<usize>,
    /// class id -> display name
    pub class_names: Vec<String>,
    /// original node ids, dense order
    pub node_ids: Vec<String>,
    pub warnings: LoadWarnings,
}

impl<F: Scalar> Dataset<F> {
    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            nodes: self.graph.n_nodes(),
            edges: self.graph.n_edges(),
            features: self.x.ncols(),
            classes: self.class_names.len(),
        }
    }

    /// Replace node attributes with dense adjacency rows (feature width
    /// becomes `n`, graph unchanged).
    pub fn adjacency_as_features(&self) -> Dataset<F> {
        Dataset {
            x: self.graph.dense_adjacency(),
            ..self.clone()
        }
    }
}

/// Published statistics for the shipped dataset ids.
pub fn known_stats(id: &str) -> Option<DatasetStats> {
    match id {
        "cora" => Some(DatasetStats {
            nodes: 2708,
            edges: 5429,
            features: 1433,
            classes: 7,
        }),
        "citeseer" => Some(DatasetStats {
            nodes: 3327,
            edges: 4732,
            features: 3703,
            classes: 6,
        }),
        "c-m10m" => Some(DatasetStats {
            nodes: 4464,
            edges: 5804,
            features: 128,
            classes: 6,
        }),
        "pubmed" => Some(DatasetStats {
            nodes: 19717,
            edges: 44338,
            features: 500,
            classes: 3,
        }),
        _ => None,
    }
}

/// Documented class-id order for the shipped datasets: canonical name plus
/// raw-file aliases, indexed by class id.
pub fn known_class_table(id: &str) -> Option<Vec<(&'static str, &'static [&'static str])>> {
    match id {
        "cora" => Some(vec![
            ("Neural Network", &["Neural_Networks"]),
            ("Rule Learning", &["Rule_Learning"]),
            ("Reinforcement Learning", &["Reinforcement_Learning"]),
            ("Probabilistic Methods", &["Probabilistic_Methods"]),
            ("Theory", &[]),
            ("Genetic Algorithms", &["Genetic_Algorithms"]),
            ("Case Based", &["Case_Based"]),
        ]),
        "citeseer" => Some(vec![
            ("Agent", &["Agents"]),
            ("Information Retrieval", &["IR"]),
            ("Database", &["DB"]),
            ("Artificial Intelligence", &["AI"]),
            ("Human Computer Interaction", &["HCI"]),
            ("Machine Learning", &["ML"]),
        ]),
        "c-m10m" => Some(vec![
            ("Biology", &["biology"]),
            ("Computer Science", &["computer_science", "computer science"]),
            (
                "Financial Economics",
                &["financial_economics", "financial economics"],
            ),
            (
                "Industrial Engineering",
                &["industrial_engineering", "industrial engineering"],
            ),
            ("Physics", &["physics"]),
            ("Social Science", &["social_science", "social science"]),
        ]),
        _ => None,
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// Load a citation network from `content` + `cites` files.
///
/// `dataset_id` selects the documented class-id table when one exists;
/// otherwise class ids are assigned to the distinct label strings in
/// lexicographic order.
pub fn load_content_cites<F: Scalar>(
    content_path: &Path,
    cites_path: &Path,
    dataset_id: &str,
) -> Result<Dataset<F>> {
    let parse_err = |path: &Path, line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut node_ids = Vec::new();
    let mut index_of = BTreeMap::new();
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;

    for (lineno, line) in read_lines(content_path)?.iter().enumerate() {
        let line_1 = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 3 {
            return Err(parse_err(
                content_path,
                line_1,
                format!("expected `<id> <attrs...> <label>`, got {} fields", tokens.len()),
            ));
        }
        let id = tokens[0].to_owned();
        if index_of.contains_key(&id) {
            return Err(parse_err(
                content_path,
                line_1,
                format!("duplicate node id '{id}'"),
            ));
        }
        let label = tokens[tokens.len() - 1].to_owned();
        let attrs: Vec<f64> = tokens[1..tokens.len() - 1]
            .iter()
            .enumerate()
            .map(|(i, t)| {
                t.parse::<f64>().map_err(|e| {
                    parse_err(content_path, line_1, format!("attribute {i}: {e}"))
                })
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(attrs.len()),
            Some(w) if w != attrs.len() => {
                return Err(parse_err(
                    content_path,
                    line_1,
                    format!("attribute width {} differs from first row's {w}", attrs.len()),
                ));
            }
            _ => {}
        }
        index_of.insert(id.clone(), node_ids.len());
        node_ids.push(id);
        raw_labels.push(label);
        rows.push(attrs);
    }

    let n = node_ids.len();
    if n == 0 {
        return Err(parse_err(content_path, 0, "empty content file".into()));
    }
    let d = width.unwrap_or(0);

    // map label strings to class ids
    let (class_names, label_ids) = match known_class_table(dataset_id) {
        Some(table) => {
            let names: Vec<String> = table.iter().map(|(name, _)| (*name).to_owned()).collect();
            let resolve = |raw: &str| -> Option<usize> {
                table.iter().position(|(name, aliases)| {
                    *name == raw || aliases.contains(&raw)
                })
            };
            let ids = raw_labels
                .iter()
                .enumerate()
                .map(|(i, raw)| {
                    resolve(raw).ok_or_else(|| {
                        parse_err(
                            content_path,
                            i + 1,
                            format!("unknown class label '{raw}' for dataset '{dataset_id}'"),
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (names, ids)
        }
        None => {
            let mut names: Vec<String> = raw_labels.clone();
            names.sort();
            names.dedup();
            let ids = raw_labels
                .iter()
                .map(|raw| names.binary_search(raw).expect("label present"))
                .collect();
            (names, ids)
        }
    };

    // edges
    let mut warnings = LoadWarnings::default();
    let mut edges = Vec::new();
    for (lineno, line) in read_lines(cites_path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(parse_err(
                cites_path,
                lineno + 1,
                format!("expected `<cited> <citing>`, got {} fields", tokens.len()),
            ));
        }
        match (index_of.get(tokens[0]), index_of.get(tokens[1])) {
            (Some(&u), Some(&v)) => {
                if u == v {
                    warnings.self_citation_edges += 1;
                } else {
                    edges.push((u, v));
                }
            }
            _ => warnings.unknown_endpoint_edges += 1,
        }
    }

    let graph = SparseGraph::build(&edges, n)?;
    let mut x = Array2::zeros((n, d));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = cast::<F>(v);
        }
    }

    Ok(Dataset {
        id: dataset_id.to_owned(),
        graph,
        x,
        labels: label_ids,
        class_names,
        node_ids,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// CSD tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CsdFileEntry {
    id: usize,
    name: String,
    vector: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CsdFile {
    kind: String,
    dim: usize,
    classes: Vec<CsdFileEntry>,
}

/// Per-class semantic description vectors, indexed by class id.
#[derive(Debug, Clone, PartialEq)]
pub struct CsdTable {
    pub kind: String,
    pub dim: usize,
    pub names: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl CsdTable {
    pub fn from_vectors(kind: &str, names: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vectors.first().map(Vec::len).unwrap_or(0);
        let table = CsdTable {
            kind: kind.to_owned(),
            dim,
            names,
            vectors,
        };
        table.validate(Path::new("<memory>"))?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: CsdFile = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let m = file.classes.len();
        let mut names = vec![String::new(); m];
        let mut vectors = vec![Vec::new(); m];
        let mut seen = vec![false; m];
        for entry in file.classes {
            if entry.id >= m || seen[entry.id] {
                return Err(Error::Json {
                    path: path.to_path_buf(),
                    msg: format!("class ids must cover 0..{} exactly once", m - 1),
                });
            }
            seen[entry.id] = true;
            names[entry.id] = entry.name;
            vectors[entry.id] = entry.vector;
        }
        let table = CsdTable {
            kind: file.kind,
            dim: file.dim,
            names,
            vectors,
        };
        table.validate(path)?;
        Ok(table)
    }

    fn validate(&self, path: &Path) -> Result<()> {
        for (id, vec) in self.vectors.iter().enumerate() {
            if vec.len() != self.dim {
                return Err(Error::CsdWidth {
                    class: id,
                    expected: self.dim,
                    got: vec.len(),
                });
            }
            if vec.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteCsd { class: id });
            }
        }
        if self.names.len() != self.vectors.len() {
            return Err(Error::Json {
                path: path.to_path_buf(),
                msg: "names/vectors length mismatch".into(),
            });
        }
        Ok(())
    }

    /// Check the table covers classes `0..n_classes`.
    pub fn check_covers(&self, n_classes: usize, path: &Path) -> Result<()> {
        if self.vectors.len() < n_classes {
            return Err(Error::MissingClass {
                class: self.vectors.len(),
                path: path.to_path_buf(),
            });
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.vectors.len()
    }

    /// Rows for the requested classes, optionally unit-normalized.
    pub fn matrix<F: Scalar>(&self, class_ids: &[usize], unit_normalize: bool) -> Result<Array2<F>> {
        for &c in class_ids {
            if c >= self.vectors.len() {
                return Err(Error::MissingClass {
                    class: c,
                    path: PathBuf::from("<csd table>"),
                });
            }
        }
        let mut out = Array2::zeros((class_ids.len(), self.dim));
        for (r, &c) in class_ids.iter().enumerate() {
            for (j, &v) in self.vectors[c].iter().enumerate() {
                out[[r, j]] = cast::<F>(v);
            }
        }
        if unit_normalize {
            let (normalized, _) = unit_normalize_rows(&out);
            Ok(normalized)
        } else {
            Ok(out)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CsdFile {
            kind: self.kind.clone(),
            dim: self.dim,
            classes: self
                .names
                .iter()
                .zip(&self.vectors)
                .enumerate()
                .map(|(id, (name, vector))| CsdFileEntry {
                    id,
                    name: name.clone(),
                    vector: vector.clone(),
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&file).expect("serializable");
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

// ---------------------------------------------------------------------------
// Class splits
// ---------------------------------------------------------------------------

/// Which fixed seen/unseen class partition to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitScheme {
    /// All seen classes train; all unseen classes test.
    SplitI,
    /// Seen classes are split into train and validation parts.
    SplitII,
}

/// Documented `[train/val/test]` class counts per dataset and scheme.
pub fn class_split_counts(dataset_id: &str, scheme: SplitScheme) -> Option<(usize, usize, usize)> {
    match (dataset_id, scheme) {
        ("cora", SplitScheme::SplitI) => Some((3, 0, 4)),
        ("cora", SplitScheme::SplitII) => Some((2, 2, 3)),
        ("citeseer", SplitScheme::SplitI) => Some((2, 0, 4)),
        ("citeseer", SplitScheme::SplitII) => Some((2, 2, 2)),
        ("c-m10m", SplitScheme::SplitI) => Some((3, 0, 3)),
        ("c-m10m", SplitScheme::SplitII) => Some((2, 2, 2)),
        _ => None,
    }
}

/// A seen-train / seen-val / unseen-test class partition with the node sets
/// it induces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub scheme: SplitScheme,
    pub train_classes: Vec<usize>,
    pub val_classes: Vec<usize>,
    pub test_classes: Vec<usize>,
    pub train_nodes: Vec<usize>,
    pub val_nodes: Vec<usize>,
    pub test_nodes: Vec<usize>,
}

/// Partition classes by ascending id into the given `[train/val/test]`
/// counts and induce the node sets.
pub fn make_class_split(
    labels: &[usize],
    n_classes: usize,
    scheme: SplitScheme,
    counts: (usize, usize, usize),
) -> Result<ClassSplit> {
    let (n_train, n_val, n_test) = counts;
    if n_train + n_val + n_test != n_classes {
        return Err(Error::Config(format!(
            "class split counts {counts:?} do not sum to {n_classes} classes"
        )));
    }
    if n_train == 0 {
        return Err(Error::EmptyClassSet("train"));
    }
    if n_test == 0 {
        return Err(Error::EmptyClassSet("test"));
    }
    let train_classes: Vec<usize> = (0..n_train).collect();
    let val_classes: Vec<usize> = (n_train..n_train + n_val).collect();
    let test_classes: Vec<usize> = (n_train + n_val..n_classes).collect();
    let nodes_of = |classes: &[usize]| -> Vec<usize> {
        labels
            .iter()
            .enumerate()
            .filter(|(_, l)| classes.contains(l))
            .map(|(i, _)| i)
            .collect()
    };
    Ok(ClassSplit {
        scheme,
        train_nodes: nodes_of(&train_classes),
        val_nodes: nodes_of(&val_classes),
        test_nodes: nodes_of(&test_classes),
        train_classes,
        val_classes,
        test_classes,
    })
}

/// Class split for a known dataset id.
pub fn make_known_class_split(
    dataset_id: &str,
    labels: &[usize],
    n_classes: usize,
    scheme: SplitScheme,
) -> Result<ClassSplit> {
    let counts = class_split_counts(dataset_id, scheme).ok_or_else(|| {
        Error::Config(format!(
            "no documented {scheme:?} class counts for dataset '{dataset_id}'; supply explicit counts"
        ))
    })?;
    make_class_split(labels, n_classes, scheme, counts)
}

// ---------------------------------------------------------------------------
// Standard node-level splits
// ---------------------------------------------------------------------------

/// Node-level train/val/test split for standard semi-supervised
/// classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StandardSplitFile {
    dataset: String,
    /// original node-id strings
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

/// Documented standard-split sizes (train/val/test nodes).
pub fn standard_split_sizes(dataset_id: &str) -> Option<(usize, usize, usize)> {
    match dataset_id {
        "cora" => Some((140, 500, 1000)),
        "citeseer" => Some((120, 500, 1000)),
        "pubmed" => Some((60, 500, 1000)),
        _ => None,
    }
}

/// Load a standard split fixture and resolve its node-id strings against the
/// dataset. Sizes are checked against the documented values for known
/// datasets, and the three sets must be pairwise disjoint.
pub fn make_standard_split<F: Scalar>(
    dataset: &Dataset<F>,
    path: &Path,
) -> Result<StandardSplit> {
    if !path.exists() {
        return Err(Error::MissingFixture(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: StandardSplitFile = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let index_of: BTreeMap<&str, usize> = dataset
        .node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let resolve = |ids: &[String]| -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                index_of.get(id.as_str()).copied().ok_or_else(|| Error::Json {
                    path: path.to_path_buf(),
                    msg: format!("split references unknown node id '{id}'"),
                })
            })
            .collect()
    };
    let split = StandardSplit {
        train: resolve(&file.train)?,
        val: resolve(&file.val)?,
        test: resolve(&file.test)?,
    };
    if let Some((tr, va, te)) = standard_split_sizes(&dataset.id) {
        let got = (split.train.len(), split.val.len(), split.test.len());
        if got != (tr, va, te) {
            return Err(Error::Config(format!(
                "standard split sizes {got:?} differ from documented {:?} for '{}'",
                (tr, va, te),
                dataset.id
            )));
        }
    }
    let mut all: Vec<usize> = split
        .train
        .iter()
        .chain(&split.val)
        .chain(&split.test)
        .copied()
        .collect();
    all.sort_unstable();
    let len = all.len();
    all.dedup();
    if all.len() != len {
        return Err(Error::Config(
            "standard split sets are not pairwise disjoint".into(),
        ));
    }
    Ok(split)
}

// ---------------------------------------------------------------------------
// Fixture manifests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
    pub rows: usize,
}

/// Checksummed inventory of a fixture directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub dataset: String,
    /// role ("content", "cites", "csd-text", "csd-label", "standard-split")
    /// -> file entry
    pub files: BTreeMap<String, ManifestFile>,
    pub note: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl FixtureManifest {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFixture(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// Verify every listed file exists under `dir` with the recorded
    /// checksum and line count.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for entry in self.files.values() {
            let path = dir.join(&entry.path);
            if !path.exists() {
                return Err(Error::MissingFixture(path));
            }
            let bytes = fs::read(&path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            let got = sha256_hex(&bytes);
            if got != entry.sha256 {
                return Err(Error::ChecksumMismatch {
                    path,
                    expected: entry.sha256.clone(),
                    got,
                });
            }
            let rows = bytes.split(|&b| b == b'\n').filter(|l| !l.is_empty()).count();
            if rows != entry.rows {
                return Err(Error::Config(format!(
                    "{}: manifest says {} rows, file has {rows}",
                    path.display(),
                    entry.rows
                )));
            }
        }
        Ok(())
    }

    /// Build a manifest by hashing the given role -> filename pairs in `dir`.
    pub fn create(dataset: &str, dir: &Path, roles: &[(&str, &str)], note: &str) -> Result<Self> {
        let mut files = BTreeMap::new();
        for (role, name) in roles {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            files.insert(
                (*role).to_owned(),
                ManifestFile {
                    path: (*name).to_owned(),
                    sha256: sha256_hex(&bytes),
                    rows: bytes.split(|&b| b == b'\n').filter(|l| !l.is_empty()).count(),
                },
            );
        }
        Ok(FixtureManifest {
            dataset: dataset.to_owned(),
            files,
            note: note.to_owned(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("serializable");
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Load a fixture dataset directory: verifies `manifest.json`, then loads
/// the content/cites pair it names.
pub fn load_fixture_dataset<F: Scalar>(root: &Path, id: &str) -> Result<Dataset<F>> {
    let dir = root.join(id);
    let manifest = FixtureManifest::load(&dir.join("manifest.json"))?;
    manifest.verify(&dir)?;
    let content = manifest
        .files
        .get("content")
        .ok_or_else(|| Error::Config(format!("manifest for '{id}' lists no content file")))?;
    let cites = manifest
        .files
        .get("cites")
        .ok_or_else(|| Error::Config(format!("manifest for '{id}' lists no cites file")))?;
    load_content_cites(&dir.join(&content.path), &dir.join(&cites.path), id)
}

// ---------------------------------------------------------------------------
// Synthetic instances
// ---------------------------------------------------------------------------

/// Planted-partition instance description. Features live directly in the
/// semantic space: `x_i = s_{y_i} + noise`.
///
/// With `csd_mixing = 0` the class CSDs are exactly orthonormal. That makes
/// a clean geometry but destroys zero-shot transfer for affine prototypical
/// heads: every gradient update to the output head lies in the span of the
/// *seen* CSD rows, so scores against orthogonal unseen CSDs keep their
/// random initialization and unseen accuracy hovers at chance. Nonzero
/// `csd_mixing` blends each later class's CSD with the leading
/// `csd_mix_base` classes' CSDs (distinct emphasis per class), giving the
/// unseen classes seen-space semantics a trained model can act on — the
/// mechanism real CSDs provide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub nodes_per_class: usize,
    /// CSD width; must be >= classes
    pub csd_dim: usize,
    /// per-coordinate standard deviation of feature noise
    pub feature_noise: f64,
    /// intra-class edge probability
    pub p_in: f64,
    /// inter-class edge probability
    pub p_out: f64,
    pub seed: u64,
    /// weight of the seen-class blend in later classes' CSDs (0 = fully
    /// orthonormal)
    pub csd_mixing: f64,
    /// how many leading classes the blend draws on; 0 means `classes / 2`
    pub csd_mix_base: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 4,
            nodes_per_class: 10,
            csd_dim: 8,
            feature_noise: 0.8,
            p_in: 0.5,
            p_out: 0.05,
            seed: 0,
            csd_mixing: 0.7,
            csd_mix_base: 0,
        }
    }
}

/// Standard normal via Box-Muller, consuming two uniforms per call.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Random orthonormal rows (m x d, m <= d) by Gram-Schmidt on Gaussian rows.
fn orthonormal_rows(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    while rows.len() < m {
        let mut v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        for prev in &rows {
            let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (x, p) in v.iter_mut().zip(prev) {
                *x -= dot * p;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            rows.push(v);
        }
    }
    rows
}

/// Generate a deterministic planted-partition dataset plus CSDs.
pub fn synthetic_dataset<F: Scalar>(spec: &SyntheticSpec) -> Result<(Dataset<F>, CsdTable)> {
    if spec.classes < 2 {
        return Err(Error::TooFewClasses(spec.classes));
    }
    if spec.csd_dim < spec.classes {
        return Err(Error::Config(format!(
            "csd_dim {} < classes {}: orthonormal CSD basis impossible",
            spec.csd_dim, spec.classes
        )));
    }
    if !(0.0..=1.0).contains(&spec.csd_mixing) {
        return Err(Error::Config(format!(
            "csd_mixing {} outside [0, 1]",
            spec.csd_mixing
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.classes * spec.nodes_per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / spec.nodes_per_class).collect();

    let basis = orthonormal_rows(&mut rng, spec.classes, spec.csd_dim);
    let mix_base = if spec.csd_mix_base == 0 {
        spec.classes / 2
    } else {
        spec.csd_mix_base.min(spec.classes)
    };
    let gamma = spec.csd_mixing;
    let mut csd_rows = basis.clone();
    if gamma > 0.0 {
        for c in mix_base..spec.classes {
            // emphasize one leading class per later class, spread the rest
            let favored = c % mix_base;
            let minor = if mix_base > 1 {
                0.25 / (mix_base - 1) as f64
            } else {
                0.0
            };
            let mut blend = vec![0.0; spec.csd_dim];
            for (b, basis_row) in basis.iter().enumerate().take(mix_base) {
                let w = if b == favored { 0.75 } else { minor };
                for (x, &v) in blend.iter_mut().zip(basis_row) {
                    *x += w * v;
                }
            }
            let bn: f64 = blend.iter().map(|v| v * v).sum::<f64>().sqrt();
            let row: Vec<f64> = basis[c]
                .iter()
                .zip(&blend)
                .map(|(&own, &bl)| (1.0 - gamma) * own + gamma * bl / bn)
                .collect();
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            csd_rows[c] = row.into_iter().map(|v| v / norm).collect();
        }
    }
    let mut x = Array2::zeros((n, spec.csd_dim));
    for i in 0..n {
        let proto = &csd_rows[labels[i]];
        for j in 0..spec.csd_dim {
            x[[i, j]] = cast::<F>(proto[j] + spec.feature_noise * gaussian(&mut rng));
        }
    }

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                spec.p_in
            } else {
                spec.p_out
            };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = SparseGraph::build(&edges, n)?;

    let names: Vec<String> = (0..spec.classes).map(|c| format!("class-{c}")).collect();
    let kind = if gamma > 0.0 {
        "synthetic-mixed"
    } else {
        "synthetic-orthonormal"
    };
    let csd = CsdTable::from_vectors(kind, names.clone(), csd_rows)?;

    Ok((
        Dataset {
            id: format!("synthetic-{}", spec.seed),
            graph,
            x,
            labels,
            class_names: names,
            node_ids: (0..n).map(|i| format!("n{i}")).collect(),
            warnings: LoadWarnings::default(),
        },
        csd,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    const TOY_CONTENT: &str = "\
paper_a 1 0 0.5 alpha
paper_b 0 1 0.0 beta
paper_c 1 1 1.0 alpha
";

    #[test]
    fn loads_toy_content_and_cites() {
        let dir = tempfile::tempdir().unwrap();
        let content = write_file(dir.path(), "toy.content", TOY_CONTENT);
        let cites = write_file(dir.path(), "toy.cites", "paper_a paper_b\n");
        let ds: Dataset<f64> = load_content_cites(&content, &cites, "toy").unwrap();
        assert_eq!(
            ds.stats(),
            DatasetStats {
                nodes: 3,
                edges: 1,
                features: 3,
                classes: 2
            }
        );
        // lexicographic labels: alpha -> 0, beta -> 1
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.node_ids, vec!["paper_a", "paper_b", "paper_c"]);
        assert_eq!(ds.x[[0, 2]], 0.5);
    }

    #[test]
    fn unknown_edge_endpoints_are_counted_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let content = write_file(dir.path(), "toy.content", TOY_CONTENT);
        let cites = write_file(
            dir.path(),
            "toy.cites",
            "paper_a paper_b\nghost paper_a\npaper_c paper_c\n",
        );
        let ds: Dataset<f64> = load_content_cites(&content, &cites, "toy").unwrap();
        assert_eq!(ds.graph.n_edges(), 1);
        assert_eq!(ds.warnings.unknown_endpoint_edges, 1);
        assert_eq!(ds.warnings.self_citation_edges, 1);
    }

    #[test]
    fn malformed_content_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let content = write_file(dir.path(), "bad.content", "a 1 0 x\nb 1 oops y\n");
        let cites = write_file(dir.path(), "bad.cites", "");
        let err = load_content_cites::<f64>(&content, &cites, "toy").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn width_inconsistency_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let content = write_file(dir.path(), "bad.content", "a 1 0 x\nb 1 y\n");
        let cites = write_file(dir.path(), "bad.cites", "");
        assert!(load_content_cites::<f64>(&content, &cites, "toy").is_err());
    }

    #[test]
    fn known_class_tables_match_documented_order() {
        let cora = known_class_table("cora").unwrap();
        assert_eq!(cora[0].0, "Neural Network");
        assert_eq!(cora[6].0, "Case Based");
        let citeseer = known_class_table("citeseer").unwrap();
        assert_eq!(citeseer.len(), 6);
        assert_eq!(citeseer[2].0, "Database");
    }

    #[test]
    fn csd_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let table = CsdTable::from_vectors(
            "text",
            vec!["a".into(), "b".into()],
            vec![vec![3.0, 4.0, 0.0], vec![0.0, 1.0, 0.0]],
        )
        .unwrap();
        let path = dir.path().join("csd.json");
        table.save(&path).unwrap();
        let loaded = CsdTable::load(&path).unwrap();
        assert_eq!(loaded, table);
        assert_eq!(loaded.dim, 3);

        // unit normalization on request: [3,4,0] -> [0.6,0.8,0]
        let m: Array2<f64> = loaded.matrix(&[0, 1], true).unwrap();
        assert!((m[[0, 0]] - 0.6).abs() < 1e-12);
        assert!((m[[0, 1]] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn csd_missing_class_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "gap.json",
            r#"{"kind":"text","dim":2,"classes":[
                {"id":0,"name":"a","vector":[1.0,0.0]},
                {"id":2,"name":"c","vector":[0.0,1.0]},
                {"id":2,"name":"c2","vector":[0.0,1.0]}
            ]}"#,
        );
        assert!(CsdTable::load(&path).is_err());

        let ok = CsdTable::from_vectors(
            "text",
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let err = ok.check_covers(4, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::MissingClass { class: 2, .. }));
    }

    #[test]
    fn csd_wrong_width_is_reported() {
        let err = CsdTable::from_vectors(
            "text",
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.0], vec![0.0]],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::CsdWidth {
                class: 1,
                expected: 2,
                got: 1
            }
        ));
    }

    #[test]
    fn class_split_counts_match_documentation() {
        assert_eq!(class_split_counts("cora", SplitScheme::SplitI), Some((3, 0, 4)));
        assert_eq!(class_split_counts("citeseer", SplitScheme::SplitII), Some((2, 2, 2)));
        assert_eq!(class_split_counts("c-m10m", SplitScheme::SplitI), Some((3, 0, 3)));
    }

    #[test]
    fn class_split_partitions_nodes() {
        let labels = vec![0, 1, 2, 3, 0, 2, 3, 3];
        let split = make_class_split(&labels, 4, SplitScheme::SplitII, (2, 1, 1)).unwrap();
        assert_eq!(split.train_classes, vec![0, 1]);
        assert_eq!(split.val_classes, vec![2]);
        assert_eq!(split.test_classes, vec![3]);
        assert_eq!(split.train_nodes, vec![0, 1, 4]);
        assert_eq!(split.val_nodes, vec![2, 5]);
        assert_eq!(split.test_nodes, vec![3, 6, 7]);
        // partition covers all nodes exactly once
        let total = split.train_nodes.len() + split.val_nodes.len() + split.test_nodes.len();
        assert_eq!(total, labels.len());
    }

    #[test]
    fn class_split_rejects_bad_counts() {
        let labels = vec![0, 1];
        assert!(make_class_split(&labels, 2, SplitScheme::SplitI, (2, 0, 1)).is_err());
        assert!(make_class_split(&labels, 2, SplitScheme::SplitI, (0, 0, 2)).is_err());
    }

    #[test]
    fn standard_split_loads_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let content = write_file(dir.path(), "toy.content", TOY_CONTENT);
        let cites = write_file(dir.path(), "toy.cites", "paper_a paper_b\n");
        let ds: Dataset<f64> = load_content_cites(&content, &cites, "toy").unwrap();
        let split_path = write_file(
            dir.path(),
            "split.json",
            r#"{"dataset":"toy","train":["paper_a"],"val":["paper_b"],"test":["paper_c"]}"#,
        );
        let split = make_standard_split(&ds, &split_path).unwrap();
        assert_eq!(split.train, vec![0]);
        assert_eq!(split.val, vec![1]);
        assert_eq!(split.test, vec![2]);

        let overlap = write_file(
            dir.path(),
            "overlap.json",
            r#"{"dataset":"toy","train":["paper_a"],"val":["paper_a"],"test":["paper_c"]}"#,
        );
        assert!(make_standard_split(&ds, &overlap).is_err());
        assert!(matches!(
            make_standard_split(&ds, &dir.path().join("absent.json")),
            Err(Error::MissingFixture(_))
        ));
    }

    #[test]
    fn adjacency_as_features_uses_dense_rows() {
        let dir = tempfile::tempdir().unwrap();
        let content = write_file(dir.path(), "toy.content", TOY_CONTENT);
        let cites = write_file(dir.path(), "toy.cites", "paper_a paper_b\n");
        let ds: Dataset<f64> = load_content_cites(&content, &cites, "toy").unwrap();
        let swapped = ds.adjacency_as_features();
        assert_eq!(swapped.x.dim(), (3, 3));
        assert_eq!(swapped.x[[0, 1]], 1.0);
        assert_eq!(swapped.x[[1, 0]], 1.0);
        // isolated node -> zero feature row
        assert!(swapped.x.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loading_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let content = write_file(dir.path(), "toy.content", TOY_CONTENT);
        let cites = write_file(dir.path(), "toy.cites", "paper_a paper_b\n");
        let a: Dataset<f64> = load_content_cites(&content, &cites, "toy").unwrap();
        let b: Dataset<f64> = load_content_cites(&content, &cites, "toy").unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.graph.edges(), b.graph.edges());
    }

    #[test]
    fn manifest_verify_catches_tampering() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "toy.content", TOY_CONTENT);
        write_file(dir.path(), "toy.cites", "paper_a paper_b\n");
        let manifest = FixtureManifest::create(
            "toy",
            dir.path(),
            &[("content", "toy.content"), ("cites", "toy.cites")],
            "hand-written loader smoke fixture",
        )
        .unwrap();
        manifest.verify(dir.path()).unwrap();

        write_file(dir.path(), "toy.cites", "paper_a paper_c\n");
        assert!(matches!(
            manifest.verify(dir.path()),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn fixture_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("toy");
        fs::create_dir(&sub).unwrap();
        write_file(&sub, "toy.content", TOY_CONTENT);
        write_file(&sub, "toy.cites", "paper_a paper_b\n");
        let manifest = FixtureManifest::create(
            "toy",
            &sub,
            &[("content", "toy.content"), ("cites", "toy.cites")],
            "loader smoke fixture",
        )
        .unwrap();
        manifest.save(&sub.join("manifest.json")).unwrap();
        let ds: Dataset<f64> = load_fixture_dataset(dir.path(), "toy").unwrap();
        assert_eq!(ds.n_nodes(), 3);
    }

    #[test]
    fn synthetic_dataset_is_deterministic() {
        let spec = SyntheticSpec::default();
        let (a, csd_a): (Dataset<f64>, _) = synthetic_dataset(&spec).unwrap();
        let (b, csd_b): (Dataset<f64>, _) = synthetic_dataset(&spec).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.graph.edges(), b.graph.edges());
        assert_eq!(a.n_nodes(), 40);
        assert_eq!(csd_a, csd_b);
    }

    #[test]
    fn synthetic_csds_orthonormal_without_mixing() {
        let spec = SyntheticSpec {
            csd_mixing: 0.0,
            ..SyntheticSpec::default()
        };
        let (_, csd): (Dataset<f64>, _) = synthetic_dataset(&spec).unwrap();
        let m: Array2<f64> = csd.matrix(&[0, 1, 2, 3], false).unwrap();
        let gram = m.dot(&m.t());
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn synthetic_mixing_correlates_unseen_with_seen() {
        let spec = SyntheticSpec::default(); // mixing 0.7, base 2
        let (_, csd): (Dataset<f64>, _) = synthetic_dataset(&spec).unwrap();
        let m: Array2<f64> = csd.matrix(&[0, 1, 2, 3], false).unwrap();
        // unseen classes 2, 3 lean on distinct seen classes: 2 on 0, 3 on 1
        let dot = |a: usize, b: usize| m.row(a).dot(&m.row(b));
        assert!(dot(2, 0) > dot(2, 1));
        assert!(dot(3, 1) > dot(3, 0));
        assert!(dot(2, 0) > 0.3);
        // rows stay unit length
        for c in 0..4 {
            assert!((dot(c, c) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn synthetic_dimension_guard() {
        let spec = SyntheticSpec {
            classes: 4,
            csd_dim: 2,
            ..SyntheticSpec::default()
        };
        assert!(synthetic_dataset::<f64>(&spec).is_err());
    }
}
