//! Dataset ingestion, end-to-end orchestration, the six-variant
//! comparison, and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::{extract_features, AveragingMode, Normalizer, Orientation};
use crate::mlp::{
    self, EpochRecord, Model, NetworkConfig, NetworkParams, StopReason, TrainConfig,
};
use crate::pgm;
use crate::raster::preprocess_with_threshold;
use crate::segment::{label_components, normalize_glyph, GlyphBox};

/// A labeled image corpus: entries in deterministic order plus the
/// label-to-class-index map (lexicographic, contiguous from 0).
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub entries: Vec<(PathBuf, String)>,
    pub class_map: BTreeMap<String, usize>,
}

fn build_class_map(entries: &[(PathBuf, String)]) -> Result<BTreeMap<String, usize>> {
    let mut map = BTreeMap::new();
    for (_, label) in entries {
        let next = map.len();
        map.entry(label.clone()).or_insert(next);
    }
    // BTreeMap iterates sorted; reassign indices lexicographically
    let mut sorted = BTreeMap::new();
    for (i, label) in map.keys().cloned().enumerate() {
        sorted.insert(label, i);
    }
    if sorted.len() < 2 {
        return Err(Error::Dataset(format!(
            "need at least 2 classes, found {}",
            sorted.len()
        )));
    }
    Ok(sorted)
}

impl DatasetManifest {
    /// Scans `root/<label>/<image>.pgm`. Labels are the subdirectory
    /// names; entries are ordered by label, then file name.
    pub fn scan_dir(root: &Path) -> Result<Self> {
        let read = |p: &Path| {
            fs::read_dir(p).map_err(|source| Error::Io { path: p.to_path_buf(), source })
        };
        let mut labels = Vec::new();
        for entry in read(root)? {
            let entry = entry.map_err(|source| Error::Io { path: root.to_path_buf(), source })?;
            if entry.path().is_dir() {
                labels.push(entry.path());
            }
        }
        labels.sort();
        let mut entries = Vec::new();
        for dir in labels {
            let label = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .ok_or_else(|| Error::Dataset(format!("unusable class directory {}", dir.display())))?;
            let mut files = Vec::new();
            for entry in read(&dir)? {
                let entry = entry.map_err(|source| Error::Io { path: dir.clone(), source })?;
                let path = entry.path();
                if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
                    files.push(path);
                }
            }
            files.sort();
            entries.extend(files.into_iter().map(|p| (p, label.clone())));
        }
        let class_map = build_class_map(&entries)?;
        Ok(Self { entries, class_map })
    }

    /// Reads an explicit manifest: one `path<TAB>label` per line, blank
    /// lines and `#` comments skipped, paths resolved against the
    /// manifest's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((img, label)) = line.split_once('\t') else {
                return Err(Error::Dataset(format!(
                    "{}:{}: expected \"path<TAB>label\", got {line:?}",
                    path.display(),
                    i + 1
                )));
            };
            let img = base.join(img);
            if !img.exists() {
                return Err(Error::Dataset(format!(
                    "{}:{}: image {} does not exist",
                    path.display(),
                    i + 1,
                    img.display()
                )));
            }
            entries.push((img, label.to_string()));
        }
        let class_map = build_class_map(&entries)?;
        Ok(Self { entries, class_map })
    }

    /// Class labels in class-index order.
    pub fn class_names(&self) -> Vec<String> {
        self.class_map.keys().cloned().collect()
    }
}

/// Per-image loading knobs.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Components below this pixel count are discarded as specks.
    pub min_pixels: usize,
    /// Fixed binarization threshold; None picks one per image.
    pub threshold: Option<u8>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { min_pixels: 8, threshold: None }
    }
}

/// Loaded glyphs plus everything that went wrong on the way.
#[derive(Debug)]
pub struct LoadOutcome {
    pub glyphs: Vec<(GlyphBox, usize)>,
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
}

fn load_single_glyph(
    path: &Path,
    opts: &LoadOptions,
    warnings: &mut Vec<String>,
) -> Result<GlyphBox> {
    let gray = pgm::load_pgm(path)?;
    let page = preprocess_with_threshold(&gray, opts.threshold);
    let mut components: Vec<_> = label_components(&page)
        .into_iter()
        .filter(|c| c.pixels.len() >= opts.min_pixels)
        .collect();
    if components.is_empty() {
        return Err(Error::Dataset(format!("{}: no components", path.display())));
    }
    if components.len() > 1 {
        warnings.push(format!(
            "{}: {} components, keeping the largest",
            path.display(),
            components.len()
        ));
        components.sort_by_key(|c| std::cmp::Reverse(c.pixels.len()));
    }
    normalize_glyph(&components[0])
}

/// Loads every manifest entry as a single glyph, in manifest order.
/// Images with several components keep the largest one (with a
/// warning); per-entry failures are collected, and the whole load
/// aborts when more than 10% of entries fail.
pub fn load_dataset(manifest: &DatasetManifest, opts: &LoadOptions) -> Result<LoadOutcome> {
    if manifest.entries.is_empty() {
        return Err(Error::Dataset("manifest has no entries".into()));
    }
    let mut glyphs = Vec::with_capacity(manifest.entries.len());
    let mut warnings = Vec::new();
    let mut errors = Vec::new();
    for (path, label) in &manifest.entries {
        let class = manifest.class_map[label];
        match load_single_glyph(path, opts, &mut warnings) {
            Ok(glyph) => glyphs.push((glyph, class)),
            Err(e) => errors.push(e.to_string()),
        }
    }
    if errors.len() * 10 > manifest.entries.len() {
        return Err(Error::Dataset(format!(
            "{} of {} entries failed to load; first error: {}",
            errors.len(),
            manifest.entries.len(),
            errors[0]
        )));
    }
    Ok(LoadOutcome { glyphs, warnings, errors })
}

/// Classification quality on a labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_classes: usize,
    pub samples: usize,
    /// confusion[true][predicted]
    pub confusion: Vec<Vec<usize>>,
    /// 100 * trace / total
    pub recognition_rate: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub support: Vec<usize>,
}

impl EvalReport {
    /// Builds the report from (true, predicted) pairs.
    pub fn from_predictions(n_classes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyEvalSet);
        }
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for &(truth, pred) in pairs {
            for (what, v) in [("true", truth), ("predicted", pred)] {
                if v >= n_classes {
                    return Err(Error::Dataset(format!(
                        "{what} class index {v} out of range for {n_classes} classes"
                    )));
                }
            }
            confusion[truth][pred] += 1;
        }
        let correct: usize = (0..n_classes).map(|i| confusion[i][i]).sum();
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let support: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
        let recall: Vec<f64> =
            (0..n_classes).map(|i| ratio(confusion[i][i], support[i])).collect();
        let precision: Vec<f64> = (0..n_classes)
            .map(|j| {
                let col: usize = (0..n_classes).map(|i| confusion[i][j]).sum();
                ratio(confusion[j][j], col)
            })
            .collect();
        Ok(Self {
            n_classes,
            samples: pairs.len(),
            confusion,
            recognition_rate: 100.0 * correct as f64 / pairs.len() as f64,
            precision,
            recall,
            support,
        })
    }
}

/// Classifies every sample and tabulates the confusion matrix.
pub fn evaluate(params: &NetworkParams, samples: &[(Vec<f64>, usize)]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let mut pairs = Vec::with_capacity(samples.len());
    for (features, truth) in samples {
        pairs.push((*truth, mlp::classify(params, features)?));
    }
    EvalReport::from_predictions(params.output_dim(), &pairs)
}

/// One of the six networks: scan orientation x feature-vector size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantKey {
    pub orientation: Orientation,
    pub with_aggregates: bool,
}

impl VariantKey {
    /// Table order: 54-feature Vertical/Horizontal/Diagonal, then the
    /// 69-feature trio.
    pub const ALL: [VariantKey; 6] = [
        VariantKey { orientation: Orientation::Vertical, with_aggregates: false },
        VariantKey { orientation: Orientation::Horizontal, with_aggregates: false },
        VariantKey { orientation: Orientation::Diagonal, with_aggregates: false },
        VariantKey { orientation: Orientation::Vertical, with_aggregates: true },
        VariantKey { orientation: Orientation::Horizontal, with_aggregates: true },
        VariantKey { orientation: Orientation::Diagonal, with_aggregates: true },
    ];

    pub fn input_dim(&self) -> usize {
        crate::features::FeatureVector::expected_len(self.with_aggregates)
    }

    /// Stable slug used in output file names, e.g. "diagonal-69".
    pub fn name(&self) -> String {
        format!("{}-{}", self.orientation, self.input_dim())
    }
}

/// Settings shared by every variant of one comparison run.
#[derive(Debug, Clone)]
pub struct VariantConfig {
    pub mode: AveragingMode,
    pub hidden: [usize; 2],
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for VariantConfig {
    fn default() -> Self {
        Self { mode: AveragingMode::AllLines, hidden: [100, 100], seed: 1, train: TrainConfig::default() }
    }
}

/// A trained variant, before any evaluation.
#[derive(Debug, Clone)]
pub struct TrainedVariant {
    pub key: VariantKey,
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub stop: StopReason,
    pub final_mse: f64,
    pub epochs: usize,
    pub warnings: Vec<String>,
}

/// A trained variant with its evaluation.
#[derive(Debug, Clone)]
pub struct VariantResult {
    pub key: VariantKey,
    pub model: Model,
    pub report: EvalReport,
    pub history: Vec<EpochRecord>,
    pub stop: StopReason,
    pub final_mse: f64,
    pub epochs: usize,
    pub warnings: Vec<String>,
}

fn glyph_features(
    glyphs: &[(GlyphBox, usize)],
    key: VariantKey,
    mode: AveragingMode,
) -> Result<Vec<(Vec<f64>, usize)>> {
    glyphs
        .iter()
        .map(|(g, class)| {
            let fv = extract_features(&g.glyph, key.orientation, key.with_aggregates, mode)?;
            Ok((fv.values, *class))
        })
        .collect()
}

fn one_hot(class: usize, n: usize, soft: bool) -> Vec<f64> {
    let (hot, cold) = if soft { (0.95, 0.05) } else { (1.0, 0.0) };
    (0..n).map(|j| if j == class { hot } else { cold }).collect()
}

/// Extracts features per the variant key and trains a fresh network.
pub fn train_variant(
    train_set: &[(GlyphBox, usize)],
    key: VariantKey,
    n_classes: usize,
    cfg: &VariantConfig,
) -> Result<TrainedVariant> {
    let mut train = glyph_features(train_set, key, cfg.mode)?;
    let normalizer = if cfg.train.normalize_inputs {
        let vectors: Vec<Vec<f64>> = train.iter().map(|(v, _)| v.clone()).collect();
        let nz = Normalizer::fit(&vectors)?;
        for (v, _) in train.iter_mut() {
            nz.apply(v);
        }
        Some(nz)
    } else {
        None
    };
    let inputs: Vec<Vec<f64>> = train.iter().map(|(v, _)| v.clone()).collect();
    let targets: Vec<Vec<f64>> =
        train.iter().map(|(_, c)| one_hot(*c, n_classes, cfg.train.soft_targets)).collect();
    let ncfg = NetworkConfig {
        input_dim: key.input_dim(),
        hidden: cfg.hidden,
        output_dim: n_classes,
        seed: cfg.seed,
    };
    let outcome = mlp::train(&ncfg, &cfg.train, &inputs, &targets)?;
    let model = Model {
        params: outcome.params,
        orientation: key.orientation,
        mode: cfg.mode,
        with_aggregates: key.with_aggregates,
        normalizer,
    };
    Ok(TrainedVariant {
        key,
        model,
        history: outcome.state.history,
        stop: outcome.stop,
        final_mse: outcome.final_mse,
        epochs: outcome.state.epoch,
        warnings: outcome.warnings,
    })
}

/// Evaluates a model on labeled glyphs, extracting features with the
/// model's own settings and applying its stored normalization.
pub fn evaluate_model(model: &Model, test_set: &[(GlyphBox, usize)]) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let mut pairs = Vec::with_capacity(test_set.len());
    for (g, class) in test_set {
        let fv = extract_features(&g.glyph, model.orientation, model.with_aggregates, model.mode)?;
        pairs.push((*class, model.classify(&fv.values)?));
    }
    EvalReport::from_predictions(model.params.output_dim(), &pairs)
}

/// Extracts features per the variant key, trains a fresh network, and
/// evaluates it on the held-out set.
pub fn run_variant(
    train_set: &[(GlyphBox, usize)],
    test_set: &[(GlyphBox, usize)],
    key: VariantKey,
    n_classes: usize,
    cfg: &VariantConfig,
) -> Result<VariantResult> {
    let trained = train_variant(train_set, key, n_classes, cfg)?;
    let report = evaluate_model(&trained.model, test_set)?;
    Ok(VariantResult {
        key: trained.key,
        model: trained.model,
        report,
        history: trained.history,
        stop: trained.stop,
        final_mse: trained.final_mse,
        epochs: trained.epochs,
        warnings: trained.warnings,
    })
}

/// Trains all six variants with identical seed and hyperparameters.
/// A failing variant does not stop the others.
pub fn run_comparison(
    train_set: &[(GlyphBox, usize)],
    test_set: &[(GlyphBox, usize)],
    n_classes: usize,
    cfg: &VariantConfig,
) -> Vec<(VariantKey, Result<VariantResult>)> {
    VariantKey::ALL
        .iter()
        .map(|&key| (key, run_variant(train_set, test_set, key, n_classes, cfg)))
        .collect()
}

/// Renders the per-epoch trace as CSV. Epochs are 1-based.
pub fn render_trace(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mse,lr,accepted\n");
    for (i, r) in history.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", i + 1, r.mse, r.lr, r.accepted);
    }
    out
}

fn orientation_title(o: Orientation) -> &'static str {
    match o {
        Orientation::Vertical => "Vertical",
        Orientation::Horizontal => "Horizontal",
        Orientation::Diagonal => "Diagonal",
    }
}

const ROW_LABELS: [&str; 5] = [
    "Feature Extraction type",
    "Number of nodes in input layer",
    "Number of nodes in 1st hidden layer",
    "Number of nodes in 2nd hidden layer",
    "Number of nodes in output layer",
];
const RATE_LABEL: &str = "Recognition rate percentage";
const LABEL_WIDTH: usize = 38;

fn table_row(out: &mut String, label: &str, cells: &[String]) {
    let _ = write!(out, "{label:<LABEL_WIDTH$}");
    for cell in cells {
        let _ = write!(out, "{cell:<12}");
    }
    let trimmed = out.trim_end().len();
    out.truncate(trimmed);
    out.push('\n');
}

/// Renders one variant's report: the single-column network table, the
/// training outcome, the confusion matrix as CSV, and per-class stats.
pub fn render_report(result: &VariantResult, class_names: &[String]) -> String {
    let (d, h1, h2, n) = result.model.params.dims();
    let mut out = String::new();
    let cells: [[String; 1]; 5] = [
        [orientation_title(result.key.orientation).to_string()],
        [d.to_string()],
        [h1.to_string()],
        [h2.to_string()],
        [n.to_string()],
    ];
    for (label, cell) in ROW_LABELS.iter().zip(&cells) {
        table_row(&mut out, label, cell);
    }
    table_row(&mut out, RATE_LABEL, &[format!("{:.2}", result.report.recognition_rate)]);
    out.push('\n');
    let _ = writeln!(out, "Training stop reason: {}", result.stop);
    let _ = writeln!(out, "Epochs run: {}", result.epochs);
    let _ = writeln!(out, "Final MSE: {}", result.final_mse);
    for w in &result.warnings {
        let _ = writeln!(out, "Warning: {w}");
    }
    out.push('\n');
    out.push_str("Confusion matrix (rows true, columns predicted):\n");
    let _ = writeln!(out, "label,{}", class_names.join(","));
    for (i, row) in result.report.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "{},{}", class_names[i], cells.join(","));
    }
    out.push('\n');
    out.push_str("Per-class statistics:\n");
    out.push_str("label,support,precision,recall\n");
    for i in 0..result.report.n_classes {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4}",
            class_names[i], result.report.support[i], result.report.precision[i], result.report.recall[i]
        );
    }
    out
}

/// Renders the comparison summary: one three-column table per
/// feature-vector size, orientations as columns.
pub fn render_summary(
    results: &[(VariantKey, Result<VariantResult>)],
    hidden: [usize; 2],
    n_classes: usize,
) -> String {
    let mut out = String::from("Comparison of recognition rates\n");
    for with_aggregates in [false, true] {
        let dim = crate::features::FeatureVector::expected_len(with_aggregates);
        let _ = write!(out, "\n{dim} features\n");
        let group: Vec<&(VariantKey, Result<VariantResult>)> = Orientation::ALL
            .iter()
            .map(|&o| {
                results
                    .iter()
                    .find(|(k, _)| k.orientation == o && k.with_aggregates == with_aggregates)
                    .expect("all six variants present")
            })
            .collect();
        let titles: Vec<String> = group
            .iter()
            .map(|(k, _)| orientation_title(k.orientation).to_string())
            .collect();
        table_row(&mut out, ROW_LABELS[0], &titles);
        for (label, value) in ROW_LABELS[1..]
            .iter()
            .zip([dim, hidden[0], hidden[1], n_classes])
        {
            let cells: Vec<String> = vec![value.to_string(); 3];
            table_row(&mut out, label, &cells);
        }
        let rates: Vec<String> = group
            .iter()
            .map(|(_, r)| match r {
                Ok(res) => format!("{:.2}", res.report.recognition_rate),
                Err(_) => "failed".to_string(),
            })
            .collect();
        table_row(&mut out, RATE_LABEL, &rates);
    }
    out
}
