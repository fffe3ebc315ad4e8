//! `tta-gps`: pool generation, prediction caching, greedy policy search,
//! evaluation and policy application.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or format error, 4 model
//! adapter error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use tta_gps::calibrate::test_time_cross_validation;
use tta_gps::demo::{generate_shapes, read_images, read_labels, run_desk_demo, write_images, write_labels, DemoConfig};
use tta_gps::gps::{greedy_search, SearchObjective};
use tta_gps::imageops::{apply_subpolicy, read_image, write_image, ImageBuffer, PositionalConfig};
use tta_gps::metrics::{mean_corruption_error, CorruptionErrorTable};
use tta_gps::policy::{generate_pool, parse_policy, serialize_policy, Policy, PoolRecipe, Style};
use tta_gps::predcache::{
    cache_file_name, predict_policy, read_cache, serve, write_cache, LabelVector, ModelAdapter, PredictionMatrix,
    SubprocessClassifier, ToyClassifier, ToyConfig,
};
use tta_gps::rng::{object_stream, stream};
use tta_gps::{Error, Result};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_ADAPTER: u8 = 4;
const POOL_STREAM: u64 = 0x9001;

#[derive(Parser)]
#[command(name = "tta-gps", version, about = "Greedy policy search for test-time augmentation")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads.
    #[arg(long, global = true, env = "TTA_GPS_WORKERS", default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a pool of candidate sub-policies.
    Pool(PoolArgs),
    /// Cache predictions of every pool sub-policy on one image set.
    Cache(CacheArgs),
    /// Greedy search over cached validation predictions.
    Search(SearchArgs),
    /// Evaluate a policy with test-time cross-validation.
    Eval(EvalArgs),
    /// Apply one sub-policy of a policy to an image.
    Apply(ApplyArgs),
    /// Write the synthetic shapes dataset.
    Dataset(DatasetArgs),
    /// Train the built-in classifier.
    Train(TrainArgs),
    /// Serve the built-in classifier over stdin/stdout.
    Serve(ServeArgs),
    /// Run the end-to-end synthetic comparison.
    Demo(DemoArgs),
}

#[derive(Args)]
struct PoolArgs {
    /// Comma-separated `count:N:M` segments; defaults to the style's pool.
    #[arg(long)]
    recipe: Option<String>,
    /// Append the identity sub-policy.
    #[arg(long)]
    identity: bool,
    #[arg(long, default_value = "cifar")]
    style: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AdapterArgs {
    /// `builtin`, `file:<dir>` or `subprocess:<command>`.
    #[arg(long, default_value = "builtin")]
    adapter: String,
    /// Model file of the built-in adapter.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct CacheArgs {
    #[arg(long)]
    pool: PathBuf,
    /// Image set (concatenated raw images).
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    cache_dir: PathBuf,
    /// `val`, `test`, or a corruption tag `<name>@<severity>`.
    #[arg(long, default_value = "val")]
    split: String,
    #[command(flatten)]
    adapter: AdapterArgs,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    cache_dir: PathBuf,
    #[arg(long, default_value = "val")]
    split: String,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "cll")]
    objective: String,
    /// Policy size.
    #[arg(long = "T", default_value_t = 100)]
    t: usize,
    #[arg(long)]
    out: PathBuf,
    /// Trace file; defaults to `<out>.trace`.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Read cached predictions from here; otherwise run the adapter.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Images, when predicting through the adapter.
    #[arg(long)]
    images: Option<PathBuf>,
    #[command(flatten)]
    adapter: AdapterArgs,
    #[arg(long, default_value_t = 5)]
    splits: usize,
    /// Normalizer for mCE; corruption caches are the `<name>@<severity>`
    /// directories under the cache directory.
    #[arg(long)]
    baseline_table: Option<PathBuf>,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    policy: PathBuf,
    /// Sub-policy index within the policy.
    #[arg(long)]
    index: usize,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    train: usize,
    #[arg(long, default_value_t = 500)]
    val: usize,
    #[arg(long, default_value_t = 500)]
    test: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = ToyConfig::default().iterations)]
    iterations: usize,
    #[arg(long, default_value_t = ToyConfig::default().augment_copies)]
    augment_copies: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    /// Seeds to run; defaults to the global seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 20)]
    t: usize,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::InvalidKind(_) | Error::InvalidMagnitude(_) | Error::OutOfRange { .. } => EXIT_USAGE,
        Error::Adapter { .. } => EXIT_ADAPTER,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.workers == 0 {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(EXIT_USAGE);
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Pool(a) => cmd_pool(cli.seed, a),
        Command::Cache(a) => cmd_cache(cli.seed, a),
        Command::Search(a) => cmd_search(a),
        Command::Eval(a) => cmd_eval(cli.seed, a),
        Command::Apply(a) => cmd_apply(cli.seed, a),
        Command::Dataset(a) => cmd_dataset(cli.seed, a),
        Command::Train(a) => cmd_train(cli.seed, a),
        Command::Serve(a) => cmd_serve(a),
        Command::Demo(a) => cmd_demo(cli.seed, a),
    }
}

fn read_policy(path: &Path) -> Result<Policy> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    parse_policy(&text).map_err(|e| e.at(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
    }
    fs::write(path, text).map_err(|e| Error::from(e).at(path))
}

fn cmd_pool(seed: u64, a: &PoolArgs) -> Result<()> {
    let style: Style = a.style.parse().map_err(|e: Error| usage(e.to_string()))?;
    let recipe = match (&a.recipe, style) {
        (Some(text), _) => PoolRecipe::parse_segments(text, a.identity, style).map_err(|e| match e {
            Error::Config(msg) => usage(format!("--recipe: {msg}")),
            other => usage(format!("--recipe: {other}")),
        })?,
        (None, Style::ImageNet) => PoolRecipe {
            include_identity: a.identity,
            ..PoolRecipe::imagenet_default()
        },
        (None, _) => PoolRecipe {
            include_identity: true,
            style,
            ..PoolRecipe::cifar_default()
        },
    };
    let pool = generate_pool(&recipe, &mut stream(seed, &[POOL_STREAM]))?;
    write_text(&a.out, &serialize_policy(&Policy::new(pool)?))?;
    println!("pool size {}", recipe.pool_size());
    Ok(())
}

fn open_adapter(a: &AdapterArgs) -> Result<ModelAdapter> {
    if a.adapter == "builtin" {
        let model = a
            .model
            .as_ref()
            .ok_or_else(|| usage("the builtin adapter needs --model"))?;
        return Ok(ModelAdapter::Builtin(ToyClassifier::load(model)?));
    }
    if let Some(dir) = a.adapter.strip_prefix("file:") {
        return Ok(ModelAdapter::MatrixFile(PathBuf::from(dir)));
    }
    if let Some(cmd) = a.adapter.strip_prefix("subprocess:") {
        return Ok(ModelAdapter::Subprocess(SubprocessClassifier::spawn(cmd)?));
    }
    Err(usage(format!(
        "unknown adapter {:?} (expected builtin, file:<dir> or subprocess:<command>)",
        a.adapter
    )))
}

fn check_split(split: &str) -> Result<()> {
    let ok = !split.is_empty()
        && split.chars().all(|c| c.is_ascii_alphanumeric() || "-_@.".contains(c))
        && !split.starts_with('.')
        && match split.split_once('@') {
            Some((name, sev)) => !name.is_empty() && matches!(sev, "1" | "2" | "3" | "4" | "5"),
            None => true,
        };
    if ok {
        Ok(())
    } else {
        Err(usage(format!(
            "invalid split {split:?} (expected a name or <corruption>@<1-5>)"
        )))
    }
}

/// Existing entry with the expected number of rows, readable and intact.
fn valid_cache_entry(path: &Path, n_objects: usize) -> bool {
    path.is_file() && read_cache::<f32>(path).is_ok_and(|m| m.n_objects() == n_objects)
}

fn cmd_cache(seed: u64, a: &CacheArgs) -> Result<()> {
    check_split(&a.split)?;
    let pool = read_policy(&a.pool)?;
    let images = read_images(&a.images)?;
    if images.is_empty() {
        return Err(Error::Format(format!("{} holds no images", a.images.display())));
    }
    let adapter = open_adapter(&a.adapter)?;
    let dir = a.cache_dir.join(&a.split);
    fs::create_dir_all(&dir).map_err(|e| Error::from(e).at(&dir))?;
    let positional = PositionalConfig::default();
    let todo: Vec<_> = pool
        .subpolicies()
        .iter()
        .filter(|s| !valid_cache_entry(&dir.join(cache_file_name(s.id())), images.len()))
        .collect();
    todo.par_iter().try_for_each(|s| -> Result<()> {
        let m = adapter.predict_under_subpolicy(&images, s, &positional, seed, 1)?;
        write_cache(&m.cast::<f32>(), dir.join(cache_file_name(s.id())))
    })?;
    println!(
        "cached {} of {} sub-policies in {}",
        todo.len(),
        pool.len(),
        dir.display()
    );
    Ok(())
}

/// Cache entries of `ids`, in order; lists every missing id on failure.
fn load_cached(dir: &Path, ids: &[usize], n_objects: usize) -> Result<Vec<PredictionMatrix<f64>>> {
    let missing: Vec<usize> = ids
        .iter()
        .copied()
        .filter(|&id| !dir.join(cache_file_name(id)).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingCache(missing).at(dir));
    }
    ids.par_iter()
        .map(|&id| {
            let path = dir.join(cache_file_name(id));
            let m: PredictionMatrix<f64> = read_cache(&path)?;
            if m.n_objects() != n_objects {
                return Err(Error::ShapeMismatch(format!("{} rows, {n_objects} labels", m.n_objects())).at(&path));
            }
            Ok(m)
        })
        .collect()
}

fn cmd_search(a: &SearchArgs) -> Result<()> {
    check_split(&a.split)?;
    let objective: SearchObjective = a.objective.parse()?;
    let pool = read_policy(&a.pool)?;
    let labels = read_labels(&a.labels)?;
    let ids = pool.ids();
    let candidates = load_cached(&a.cache_dir.join(&a.split), &ids, labels.len())?;
    let outcome = greedy_search(&candidates, &labels, a.t, objective)?;
    // Candidate positions map back to the pool's own ids.
    let chosen: Vec<usize> = outcome.ids.iter().map(|&i| ids[i]).collect();
    let policy = Policy::from_ids(pool.subpolicies(), &chosen)?;
    write_text(&a.out, &serialize_policy(&policy))?;
    let mut trace = outcome.trace;
    for step in &mut trace.steps {
        step.chosen = ids[step.chosen];
    }
    let trace_path = a.trace.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".trace");
        PathBuf::from(p)
    });
    write_text(&trace_path, &trace.to_text())?;
    let last = trace.steps.last().expect("T >= 1");
    println!(
        "policy of {} ({} distinct) written to {}; final {} {:.6}",
        policy.len(),
        trace.distinct(),
        a.out.display(),
        objective,
        last.value
    );
    Ok(())
}

/// Mean of cached matrices with repeats counted.
fn mean_of(members: &[PredictionMatrix<f64>]) -> Result<PredictionMatrix<f64>> {
    let mut mean = members[0].clone();
    for (t, m) in members.iter().enumerate().skip(1) {
        mean = mean.running_mix(m, t + 1)?;
    }
    Ok(mean)
}

fn corruption_splits(cache_dir: &Path) -> Result<Vec<(String, usize)>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(cache_dir).map_err(|e| Error::from(e).at(cache_dir))?;
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((c, s)) = name.split_once('@') {
            if let Ok(sev) = s.parse::<usize>() {
                if entry.path().is_dir() && (1..=5).contains(&sev) {
                    out.push((c.to_string(), sev));
                }
            }
        }
    }
    out.sort();
    // Only corruptions with every severity cached form a table.
    let complete: Vec<String> = out
        .chunk_by(|a, b| a.0 == b.0)
        .filter(|g| g.len() == 5)
        .map(|g| g[0].0.clone())
        .collect();
    out.retain(|(c, _)| {
        let keep = complete.contains(c);
        if !keep {
            eprintln!("warning: skipping corruption {c}: not all five severities are cached");
        }
        keep
    });
    out.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    Ok(out)
}

fn cmd_eval(seed: u64, a: &EvalArgs) -> Result<()> {
    let policy = read_policy(&a.policy)?;
    let labels = read_labels(&a.labels)?;
    let ids = policy.ids();
    let m = match (&a.cache_dir, &a.images) {
        (Some(dir), _) => {
            check_split(&a.split)?;
            mean_of(&load_cached(&dir.join(&a.split), &ids, labels.len())?)?
        }
        (None, Some(images)) => {
            let images = read_images(images)?;
            let adapter = open_adapter(&a.adapter)?;
            match adapter.classifier() {
                Some(clf) => predict_policy(clf, &images, &policy, &PositionalConfig::default(), seed)?,
                None => {
                    let members = policy
                        .subpolicies()
                        .iter()
                        .map(|s| adapter.predict_under_subpolicy(&images, s, &PositionalConfig::default(), seed, 1))
                        .collect::<Result<Vec<_>>>()?;
                    mean_of(&members)?
                }
            }
        }
        (None, None) => return Err(usage("eval needs --cache-dir or --images")),
    };
    let report = test_time_cross_validation(&m, &labels, a.splits, seed)?;
    let mut text = report.to_text();
    if report.unstratified {
        eprintln!("warning: a class has a single object; splits are not stratified");
    }

    if let Some(dir) = &a.cache_dir {
        let splits = corruption_splits(dir)?;
        if !splits.is_empty() {
            let mut means = Vec::with_capacity(splits.len());
            for (c, s) in &splits {
                let path = dir.join(format!("{c}@{s}"));
                means.push(mean_of(&load_cached(&path, &ids, labels.len())?)?);
            }
            let table = CorruptionErrorTable::from_predictions(
                splits
                    .iter()
                    .zip(&means)
                    .map(|((c, s), m)| (c.as_str(), *s, m, &labels)),
            )?;
            text.push_str(&format!("muCE {:.6}\n", mean_corruption_error(&table, None)?));
            if let Some(path) = &a.baseline_table {
                let raw = fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
                let baseline = CorruptionErrorTable::<f64>::parse(&raw).map_err(|e| e.at(path))?;
                text.push_str(&format!("mCE {:.6}\n", mean_corruption_error(&table, Some(&baseline))?));
            }
        } else if a.baseline_table.is_some() {
            return Err(usage(
                "--baseline-table given but no <corruption>@<severity> caches found",
            ));
        }
    }
    print!("{text}");
    if let Some(out) = &a.out {
        write_text(out, &text)?;
    }
    Ok(())
}

fn cmd_apply(seed: u64, a: &ApplyArgs) -> Result<()> {
    let policy = read_policy(&a.policy)?;
    let s = policy.subpolicies().get(a.index).ok_or(Error::OutOfRange {
        index: a.index,
        len: policy.len(),
    })?;
    let img: ImageBuffer = read_image(&a.input)?;
    let out = apply_subpolicy(
        &img,
        s,
        &PositionalConfig::default(),
        &mut object_stream(seed, s.id(), 0),
    )?;
    write_image(&out, &a.output)
}

fn cmd_dataset(seed: u64, a: &DatasetArgs) -> Result<()> {
    fs::create_dir_all(&a.out).map_err(|e| Error::from(e).at(&a.out))?;
    let mut start = 0;
    for (name, count) in [("train", a.train), ("val", a.val), ("test", a.test)] {
        let (images, labels) = generate_shapes(seed, start, count);
        write_images(&images, a.out.join(format!("{name}.ttaimg")))?;
        write_labels(&labels, a.out.join(format!("{name}.labels")))?;
        start += count;
    }
    println!("wrote {} images to {}", start, a.out.display());
    Ok(())
}

fn cmd_train(seed: u64, a: &TrainArgs) -> Result<()> {
    let images = read_images(&a.images)?;
    let labels: LabelVector = read_labels(&a.labels)?;
    let config = ToyConfig {
        iterations: a.iterations,
        augment_copies: a.augment_copies,
        seed,
        ..ToyConfig::default()
    };
    let clf = ToyClassifier::train(&images, &labels, &config)?;
    clf.save(&a.model)?;
    println!("trained on {} images, {} classes", images.len(), clf.n_classes());
    Ok(())
}

fn cmd_serve(a: &ServeArgs) -> Result<()> {
    let clf = ToyClassifier::load(&a.model)?;
    let stdin = std::io::stdin();
    serve(stdin.lock(), std::io::stdout().lock(), &clf)
}

fn cmd_demo(seed: u64, a: &DemoArgs) -> Result<()> {
    let seeds = if a.seeds.is_empty() {
        vec![seed]
    } else {
        a.seeds.clone()
    };
    for s in seeds {
        let cfg = DemoConfig {
            policy_size: a.t,
            ..DemoConfig::desk(s)
        };
        let report = run_desk_demo(&cfg)?;
        println!("seed {s}\n{}", report.to_text());
    }
    Ok(())
}
