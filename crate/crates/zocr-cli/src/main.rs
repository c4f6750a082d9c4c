//! Command-line front end: preprocess, extract, train, recognize, and
//! the six-variant compare harness.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use zocr::error::Error;
use zocr::features::{export_delimited, extract_features, AveragingMode, FeatureVector, Orientation};
use zocr::mlp::Model;
use zocr::pgm;
use zocr::pipeline::{
    load_dataset, render_report, render_summary, render_trace, run_comparison, train_variant,
    DatasetManifest, LoadOptions, LoadOutcome, VariantConfig, VariantKey,
};
use zocr::raster::preprocess_with_threshold;
use zocr::segment::{segment_page, GlyphBox};
use zocr::TrainConfig;

#[derive(Parser)]
#[command(
    name = "zocr",
    version,
    about = "Offline handwritten character recognition: zonal features and a sigmoid network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Binarize, edge-detect, dilate and hole-fill one image
    Preprocess(PreprocessArgs),
    /// Extract feature vectors from an image or a labeled corpus
    Extract(ExtractArgs),
    /// Train a network on a labeled corpus and save the model
    Train(TrainArgs),
    /// Segment a page and classify its glyphs with a saved model
    Recognize(RecognizeArgs),
    /// Train and evaluate all six orientation/size variants
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OrientationArg {
    Diagonal,
    Horizontal,
    Vertical,
}

impl From<OrientationArg> for Orientation {
    fn from(a: OrientationArg) -> Self {
        match a {
            OrientationArg::Diagonal => Orientation::Diagonal,
            OrientationArg::Horizontal => Orientation::Horizontal,
            OrientationArg::Vertical => Orientation::Vertical,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    AllLines,
    NonEmpty,
}

impl From<ModeArg> for AveragingMode {
    fn from(a: ModeArg) -> Self {
        match a {
            ModeArg::AllLines => AveragingMode::AllLines,
            ModeArg::NonEmpty => AveragingMode::NonEmptyLines,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Hidden([usize; 2]);

fn parse_hidden(s: &str) -> Result<Hidden, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected two comma-separated layer widths, e.g. 100,100".into());
    }
    let mut widths = [0usize; 2];
    for (w, p) in widths.iter_mut().zip(&parts) {
        *w = p
            .trim()
            .parse()
            .map_err(|_| format!("bad layer width {:?}", p.trim()))?;
    }
    Ok(Hidden(widths))
}

/// Feature-extraction settings shared by extract and train.
#[derive(Args)]
struct ExtractFlags {
    /// Scan direction of the per-zone lines
    #[arg(long, value_enum, default_value_t = OrientationArg::Diagonal)]
    orientation: OrientationArg,
    /// Extend the 54 zone features with the 9+6 aggregates (69 total)
    #[arg(long)]
    aggregates: bool,
    /// Average over all lines or only the non-empty ones
    #[arg(long, value_enum, default_value_t = ModeArg::AllLines)]
    mode: ModeArg,
}

/// Image-loading settings shared by every image-reading subcommand.
#[derive(Args)]
struct LoadFlags {
    /// Drop components smaller than this many pixels
    #[arg(long, default_value_t = 8)]
    min_pixels: usize,
    /// Fixed binarization threshold (default: automatic per image)
    #[arg(long)]
    threshold: Option<u8>,
}

impl LoadFlags {
    fn options(&self) -> LoadOptions {
        LoadOptions { min_pixels: self.min_pixels, threshold: self.threshold }
    }
}

/// Trainer settings shared by train and compare.
#[derive(Args)]
struct TrainFlags {
    /// Seed for deterministic weight initialization
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Hidden layer widths
    #[arg(long, default_value = "100,100", value_parser = parse_hidden)]
    hidden: Hidden,
    /// Stop when the batch MSE reaches this goal
    #[arg(long, default_value_t = 1e-6)]
    goal_mse: f64,
    /// Stop after this many epochs
    #[arg(long, default_value_t = 1_000_000)]
    max_epochs: usize,
    /// Initial learning rate
    #[arg(long, default_value_t = 0.01)]
    lr0: f64,
    /// Momentum constant
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Learning-rate growth on improving epochs
    #[arg(long, default_value_t = 1.05)]
    lr_inc: f64,
    /// Learning-rate decay on rejected epochs
    #[arg(long, default_value_t = 0.7)]
    lr_dec: f64,
    /// Tolerated MSE increase factor before a step is rejected
    #[arg(long, default_value_t = 1.04)]
    max_perf_inc: f64,
    /// Min-max scale features to [0, 1]; the scaler is stored in the model
    #[arg(long)]
    normalize: bool,
    /// Train against 0.05/0.95 targets instead of 0/1
    #[arg(long)]
    soft_targets: bool,
}

impl TrainFlags {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            goal_mse: self.goal_mse,
            max_epochs: self.max_epochs,
            lr0: self.lr0,
            momentum: self.momentum,
            lr_inc: self.lr_inc,
            lr_dec: self.lr_dec,
            max_perf_inc: self.max_perf_inc,
            normalize_inputs: self.normalize,
            soft_targets: self.soft_targets,
        }
    }

    fn variant_config(&self, mode: AveragingMode) -> VariantConfig {
        VariantConfig { mode, hidden: self.hidden.0, seed: self.seed, train: self.train_config() }
    }
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input PGM image
    #[arg(long)]
    input: PathBuf,
    /// Output PGM image (0 ink, 255 background)
    #[arg(long)]
    output: PathBuf,
    /// Fixed binarization threshold (default: automatic)
    #[arg(long)]
    threshold: Option<u8>,
}

#[derive(Args)]
struct ExtractArgs {
    /// PGM page, corpus directory (root/<label>/*.pgm), or manifest file
    #[arg(long)]
    input: PathBuf,
    /// Output text file (default: standard output)
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    extraction: ExtractFlags,
    #[command(flatten)]
    load: LoadFlags,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus directory (root/<label>/*.pgm) or manifest file
    #[arg(long)]
    train_root: PathBuf,
    /// Model file to write
    #[arg(long)]
    model_out: PathBuf,
    /// Trace CSV to write (default: model path with .trace.csv)
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[command(flatten)]
    extraction: ExtractFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    load: LoadFlags,
}

#[derive(Args)]
struct RecognizeArgs {
    /// Model file written by train or compare
    #[arg(long)]
    model: PathBuf,
    /// PGM page to recognize
    #[arg(long)]
    input: PathBuf,
    /// Recognized-text sidecar (default: input path with .txt)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the model's stored scan orientation
    #[arg(long, value_enum)]
    orientation: Option<OrientationArg>,
    /// Force aggregate features on, overriding the model's setting
    #[arg(long)]
    aggregates: bool,
    /// Override the model's stored averaging mode
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[command(flatten)]
    load: LoadFlags,
}

#[derive(Args)]
struct CompareArgs {
    /// Training corpus directory or manifest file
    #[arg(long)]
    train_root: PathBuf,
    /// Held-out test corpus directory or manifest file
    #[arg(long)]
    test_root: PathBuf,
    /// Directory for reports, traces, models, and the summary
    #[arg(long)]
    out_dir: PathBuf,
    /// Average over all lines or only the non-empty ones
    #[arg(long, value_enum, default_value_t = ModeArg::AllLines)]
    mode: ModeArg,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    load: LoadFlags,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Train(args) => cmd_train(args),
        Command::Recognize(args) => cmd_recognize(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Config(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn write_text(path: &Path, text: &str) -> zocr::Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn labels_path(model: &Path) -> PathBuf {
    model.with_extension("labels.txt")
}

fn load_manifest(path: &Path) -> zocr::Result<DatasetManifest> {
    if path.is_dir() {
        DatasetManifest::scan_dir(path)
    } else {
        DatasetManifest::from_file(path)
    }
}

fn report_load_issues(out: &LoadOutcome) {
    const SHOWN: usize = 5;
    for w in out.warnings.iter().take(SHOWN) {
        eprintln!("warning: {w}");
    }
    if out.warnings.len() > SHOWN {
        eprintln!("warning: ...{} similar warnings suppressed", out.warnings.len() - SHOWN);
    }
    for e in &out.errors {
        eprintln!("error (entry skipped): {e}");
    }
}

fn load_corpus(
    root: &Path,
    load: &LoadFlags,
) -> zocr::Result<(DatasetManifest, Vec<(GlyphBox, usize)>)> {
    let manifest = load_manifest(root)?;
    let out = load_dataset(&manifest, &load.options())?;
    report_load_issues(&out);
    Ok((manifest, out.glyphs))
}

fn threshold_text(threshold: Option<u8>) -> String {
    threshold.map_or_else(|| "auto".to_string(), |t| t.to_string())
}

fn print_train_flags(train: &TrainFlags, load: &LoadFlags) {
    println!("  hidden: {},{}   seed: {}", train.hidden.0[0], train.hidden.0[1], train.seed);
    println!("  goal-mse: {}   max-epochs: {}", train.goal_mse, train.max_epochs);
    println!(
        "  lr0: {}   momentum: {}   lr-inc: {}   lr-dec: {}   max-perf-inc: {}",
        train.lr0, train.momentum, train.lr_inc, train.lr_dec, train.max_perf_inc
    );
    println!(
        "  normalize: {}   soft-targets: {}   min-pixels: {}   threshold: {}",
        train.normalize,
        train.soft_targets,
        load.min_pixels,
        threshold_text(load.threshold)
    );
}

fn cmd_preprocess(args: PreprocessArgs) -> zocr::Result<()> {
    let gray = pgm::load_pgm(&args.input)?;
    let page = preprocess_with_threshold(&gray, args.threshold);
    pgm::save_pgm(&args.output, &pgm::binary_to_gray(&page))?;
    println!("wrote {}", args.output.display());
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> zocr::Result<()> {
    let orientation: Orientation = args.extraction.orientation.into();
    let mode: AveragingMode = args.extraction.mode.into();
    let with_aggregates = args.extraction.aggregates;
    let mut rows: Vec<(Option<String>, FeatureVector)> = Vec::new();
    let is_page = args.input.is_file()
        && args.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_page {
        // one page: all its glyphs in reading order, unlabeled
        let gray = pgm::load_pgm(&args.input)?;
        let page = preprocess_with_threshold(&gray, args.load.threshold);
        let glyphs = segment_page(&page, args.load.min_pixels);
        if glyphs.is_empty() {
            eprintln!("warning: no glyphs in {}", args.input.display());
        }
        for g in &glyphs {
            rows.push((None, extract_features(&g.glyph, orientation, with_aggregates, mode)?));
        }
    } else {
        let manifest = load_manifest(&args.input)?;
        let out = load_dataset(&manifest, &args.load.options())?;
        report_load_issues(&out);
        let names = manifest.class_names();
        for (g, class) in &out.glyphs {
            let fv = extract_features(&g.glyph, orientation, with_aggregates, mode)?;
            rows.push((Some(names[*class].clone()), fv));
        }
    }
    let text = export_delimited(orientation, mode, with_aggregates, &rows);
    match &args.output {
        Some(path) => {
            write_text(path, &text)?;
            println!("wrote {} ({} vectors)", path.display(), rows.len());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> zocr::Result<()> {
    args.train.train_config().validate()?;
    let orientation: Orientation = args.extraction.orientation.into();
    let mode: AveragingMode = args.extraction.mode.into();
    println!("zocr train");
    println!("  corpus: {}", args.train_root.display());
    println!(
        "  orientation: {}   aggregates: {}   mode: {}",
        orientation, args.extraction.aggregates, mode
    );
    print_train_flags(&args.train, &args.load);

    let (manifest, glyphs) = load_corpus(&args.train_root, &args.load)?;
    let n_classes = manifest.class_map.len();
    println!("loaded {} glyphs in {} classes", glyphs.len(), n_classes);

    let key = VariantKey { orientation, with_aggregates: args.extraction.aggregates };
    let cfg = args.train.variant_config(mode);
    println!(
        "training {}-{}-{}-{}",
        key.input_dim(),
        cfg.hidden[0],
        cfg.hidden[1],
        n_classes
    );
    let trained = train_variant(&glyphs, key, n_classes, &cfg)?;
    for w in &trained.warnings {
        eprintln!("warning: {w}");
    }
    println!("stop: {}", trained.stop);
    println!("epochs: {}", trained.epochs);
    println!("final-mse: {}", trained.final_mse);

    trained.model.save(&args.model_out)?;
    println!("wrote model {}", args.model_out.display());
    let labels = labels_path(&args.model_out);
    write_text(&labels, &format!("{}\n", manifest.class_names().join("\n")))?;
    println!("wrote labels {}", labels.display());
    let trace = args
        .trace_out
        .clone()
        .unwrap_or_else(|| args.model_out.with_extension("trace.csv"));
    write_text(&trace, &render_trace(&trained.history))?;
    println!("wrote trace {}", trace.display());
    Ok(())
}

fn read_labels(model_path: &Path, n_classes: usize) -> Vec<String> {
    let path = labels_path(model_path);
    let fallback = || (0..n_classes).map(|i| i.to_string()).collect();
    match fs::read_to_string(&path) {
        Ok(text) => {
            let labels: Vec<String> = text.lines().map(str::to_string).collect();
            if labels.len() == n_classes && labels.iter().all(|l| !l.is_empty()) {
                labels
            } else {
                eprintln!(
                    "warning: {} does not list {} classes; printing class indices",
                    path.display(),
                    n_classes
                );
                fallback()
            }
        }
        Err(_) => {
            eprintln!(
                "warning: no label file {}; printing class indices",
                path.display()
            );
            fallback()
        }
    }
}

fn cmd_recognize(args: RecognizeArgs) -> zocr::Result<()> {
    let model = Model::load(&args.model)?;
    let labels = read_labels(&args.model, model.params.output_dim());
    let orientation = args.orientation.map_or(model.orientation, Orientation::from);
    let mode = args.mode.map_or(model.mode, AveragingMode::from);
    let with_aggregates = model.with_aggregates || args.aggregates;

    let gray = pgm::load_pgm(&args.input)?;
    let page = preprocess_with_threshold(&gray, args.load.threshold);
    let glyphs = segment_page(&page, args.load.min_pixels);
    if glyphs.is_empty() {
        eprintln!("warning: no glyphs in {}", args.input.display());
    }
    let mut parts = Vec::with_capacity(glyphs.len());
    for g in &glyphs {
        let fv = extract_features(&g.glyph, orientation, with_aggregates, mode)?;
        let class = model.classify(&fv.values)?;
        parts.push(labels[class].clone());
    }
    let sep = if parts.iter().all(|p| p.chars().count() == 1) { "" } else { " " };
    let text = parts.join(sep);
    println!("{text}");
    let sidecar = args.output.clone().unwrap_or_else(|| args.input.with_extension("txt"));
    write_text(&sidecar, &format!("{text}\n"))?;
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> zocr::Result<()> {
    args.train.train_config().validate()?;
    let mode: AveragingMode = args.mode.into();
    println!("zocr compare");
    println!("  train corpus: {}", args.train_root.display());
    println!("  test corpus: {}", args.test_root.display());
    println!("  mode: {mode}");
    print_train_flags(&args.train, &args.load);

    let (train_manifest, train_glyphs) = load_corpus(&args.train_root, &args.load)?;
    let (test_manifest, test_glyphs) = load_corpus(&args.test_root, &args.load)?;
    if train_manifest.class_map != test_manifest.class_map {
        return Err(Error::Dataset(format!(
            "train and test corpora disagree on classes: [{}] vs [{}]",
            train_manifest.class_names().join(", "),
            test_manifest.class_names().join(", ")
        )));
    }
    let n_classes = train_manifest.class_map.len();
    let names = train_manifest.class_names();
    println!(
        "loaded {} train and {} test glyphs in {} classes",
        train_glyphs.len(),
        test_glyphs.len(),
        n_classes
    );

    fs::create_dir_all(&args.out_dir)
        .map_err(|source| Error::Io { path: args.out_dir.clone(), source })?;
    let cfg = args.train.variant_config(mode);
    let results = run_comparison(&train_glyphs, &test_glyphs, n_classes, &cfg);
    let mut failed = 0usize;
    for (key, result) in &results {
        let name = key.name();
        match result {
            Ok(res) => {
                write_text(&args.out_dir.join(format!("report-{name}.txt")), &render_report(res, &names))?;
                write_text(&args.out_dir.join(format!("trace-{name}.csv")), &render_trace(&res.history))?;
                let model_path = args.out_dir.join(format!("model-{name}.mlp"));
                res.model.save(&model_path)?;
                write_text(&labels_path(&model_path), &format!("{}\n", names.join("\n")))?;
                eprintln!(
                    "trained {name}: {:.2}% in {} epochs ({})",
                    res.report.recognition_rate, res.epochs, res.stop
                );
            }
            Err(e) => {
                failed += 1;
                eprintln!("variant {name} failed: {e}");
            }
        }
    }
    let summary = render_summary(&results, cfg.hidden, n_classes);
    write_text(&args.out_dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    if failed > 0 {
        return Err(Error::Dataset(format!("{failed} of {} variants failed", results.len())));
    }
    Ok(())
}
