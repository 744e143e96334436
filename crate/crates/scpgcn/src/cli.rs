//! Command-line interface. Configuration resolves as defaults, then an
//! optional JSON file (`--config`), then explicit flags. Every run prints the
//! resolved configuration before doing any work.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use scpgcn_core::community::{spectral_communities, CommunityCache};
use scpgcn_core::eval::{evaluate_split, Grid, GridSearchResult, Scores, Variant, TRAIN_FRACTION};
use scpgcn_core::graph::{labels, NetworkInstance, ViewKind};
use scpgcn_core::model::{Activation, LayerWidths, ScpGcnModel};
use scpgcn_core::synthdata::{generate_dataset, split_dataset, GeneratorConfig};
use scpgcn_core::training::{embed_instances, structure_view, train, TrainConfig};
use serde::Serialize;

use crate::dataio::{self, DataError};
use crate::report::{self, MembershipRecord};
use crate::runner;

#[derive(Debug, Parser)]
#[command(
    name = "scpgcn",
    version,
    about = "Siamese community-preserving graph convolutions for paired brain networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic paired-network dataset.
    Generate(GenerateArgs),
    /// Spectrally cluster each instance's structure view.
    Cluster(ClusterArgs),
    /// Train an encoder on every instance of a dataset.
    Train(TrainArgs),
    /// Embed a dataset with a trained encoder.
    Embed(EmbedArgs),
    /// Repeated random-split evaluation of one variant.
    Evaluate(EvaluateArgs),
    /// Cross-validated grid search over alpha, beta and C.
    Gridsearch(GridArgs),
    /// The four loss ablations and the four view assignments.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory for the manifest and matrix files.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator config JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Nodes per network.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of classes; only 2 is supported.
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Planted communities.
    #[arg(long)]
    pub communities: Option<usize>,
    #[arg(long)]
    pub p_in: Option<f64>,
    #[arg(long)]
    pub p_out: Option<f64>,
    #[arg(long)]
    pub w_scale: Option<f64>,
    #[arg(long)]
    pub signal: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
}

/// Flags shared by every subcommand that builds a [`TrainConfig`].
#[derive(Debug, Args, Default)]
pub struct ModelFlags {
    /// Training config JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub communities: Option<usize>,
    #[arg(long, value_parser = parse_view)]
    pub structure_view: Option<ViewKind>,
    #[arg(long, value_parser = parse_view)]
    pub feature_view: Option<ViewKind>,
    /// Layer widths as `h1,h2,d`.
    #[arg(long, value_parser = parse_widths)]
    pub widths: Option<LayerWidths>,
    #[arg(long, value_parser = parse_activation)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub cluster_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub communities: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_view, default_value = "structural")]
    pub structure_view: ViewKind,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for `model.json` and `history.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Sets the loss and view flags; cannot be combined with view flags.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_view, default_value = "structural")]
    pub structure_view: ViewKind,
    #[arg(long, value_parser = parse_view, default_value = "functional")]
    pub feature_view: ViewKind,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report JSON; per-repeat CSV goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Variant name, e.g. `scp-gcn` or `s-gcn-fmri`. Defaults to whatever
    /// the resolved flags describe.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report JSON; the sweep table goes next to it as CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated alpha values (default 1e-3..1e3 by decades).
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    /// Comma-separated beta values (default 1e-3..1e3 by decades).
    #[arg(long, value_delimiter = ',')]
    pub beta_grid: Option<Vec<f64>>,
    /// Comma-separated community counts (default 2..10).
    #[arg(long, value_delimiter = ',')]
    pub communities_grid: Option<Vec<usize>>,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report JSON; the summary table goes next to it as CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub model: ModelFlags,
}

fn parse_view(s: &str) -> Result<ViewKind, String> {
    s.parse().map_err(|e: scpgcn_core::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: scpgcn_core::Error| e.to_string())
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    s.parse().map_err(|e: scpgcn_core::Error| e.to_string())
}

fn parse_widths(s: &str) -> Result<LayerWidths, String> {
    let parts: Vec<usize> =
        s.split(',').map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}"))).collect::<Result<_, _>>()?;
    match parts[..] {
        [hidden1, hidden2, embedding] => Ok(LayerWidths { hidden1, hidden2, embedding }),
        _ => Err(format!("expected three comma-separated widths, got `{s}`")),
    }
}

/// Exit status: 1 for runtime failures, 2 for usage errors.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<scpgcn_core::Error> for CliError {
    fn from(e: scpgcn_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> CliResult {
    match command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Cluster(a) => cmd_cluster(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Embed(a) => cmd_embed(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Gridsearch(a) => cmd_gridsearch(&a),
        Command::Ablate(a) => cmd_ablate(&a),
    }
}

fn read_config<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> CliResult<T> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("config file {} does not exist", path.display())));
    }
    dataio::read_json(path).map_err(|e| CliError::Usage(e.to_string()))
}

fn print_resolved<T: Serialize>(value: &T) {
    println!("resolved config:");
    println!("{}", serde_json::to_string_pretty(value).expect("configs always serialize"));
}

fn resolve_train_config(flags: &ModelFlags) -> CliResult<TrainConfig> {
    let mut c: TrainConfig = match &flags.config {
        Some(p) => read_config(p)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = flags.$flag { c.$field = v; })*
        };
    }
    set!(seed => seed, alpha => alpha, beta => beta, margin => margin, lr => learning_rate,
         epochs => epochs, communities => communities, structure_view => view_structure,
         feature_view => view_features, widths => widths, activation => activation,
         cluster_seed => cluster_seed);
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(c)
}

/// Resolves the config and applies an explicit variant, which may not be
/// combined with view flags.
fn resolve_with_variant(flags: &ModelFlags, variant: Option<Variant>) -> CliResult<(TrainConfig, Variant)> {
    let config = resolve_train_config(flags)?;
    match variant {
        Some(v) => {
            if flags.structure_view.is_some() || flags.feature_view.is_some() {
                return Err(CliError::Usage(
                    "--variant already fixes the views; drop --structure-view/--feature-view".into(),
                ));
            }
            Ok((v.apply(&config), v))
        }
        None => Ok((config.clone(), Variant::from_config(&config))),
    }
}

fn load(manifest: &Path) -> CliResult<Vec<NetworkInstance>> {
    if !manifest.is_file() {
        return Err(CliError::Usage(format!("manifest {} does not exist", manifest.display())));
    }
    let data = dataio::load_dataset(manifest)?;
    if data.is_empty() {
        return Err(CliError::Runtime(format!("{} lists no instances", manifest.display())));
    }
    Ok(data)
}

/// `report.json` → `report<suffix>.csv` in the same directory.
fn sibling_csv(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}.csv"))
}

fn cmd_generate(a: &GenerateArgs) -> CliResult {
    if a.classes != 2 {
        return Err(CliError::Usage(format!("--classes {} is unsupported; labels are binary", a.classes)));
    }
    let mut c: GeneratorConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => GeneratorConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = a.$flag { c.$field = v; })*
        };
    }
    set!(seed => seed, n => n, per_class => per_class, communities => communities, p_in => p_in,
         p_out => p_out, w_scale => w_scale, signal => signal, noise => noise);
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    print_resolved(&c);
    let ds = generate_dataset(&c)?;
    let mut metadata = BTreeMap::new();
    metadata.insert("generator".to_string(), serde_json::to_string(&c).expect("configs always serialize"));
    metadata.insert(
        "planted_membership".to_string(),
        serde_json::to_string(&ds.planted).expect("vectors always serialize"),
    );
    let path = dataio::save_dataset(&ds.instances, &a.out, metadata)?;
    println!("wrote {} instances ({} nodes) to {}", ds.instances.len(), c.n, path.display());
    Ok(())
}

fn cmd_cluster(a: &ClusterArgs) -> CliResult {
    if a.communities == 0 {
        return Err(CliError::Usage("--communities must be at least 1".into()));
    }
    #[derive(Serialize)]
    struct Resolved<'a> {
        manifest: &'a Path,
        communities: usize,
        seed: u64,
        structure_view: ViewKind,
    }
    print_resolved(&Resolved {
        manifest: &a.manifest,
        communities: a.communities,
        seed: a.seed,
        structure_view: a.structure_view,
    });
    let data = load(&a.manifest)?;
    let config = TrainConfig { view_structure: a.structure_view, ..TrainConfig::default() };
    let records = data
        .iter()
        .map(|x| {
            let assignment = spectral_communities(&structure_view(x, &config), a.communities, a.seed)?;
            Ok(MembershipRecord::new(x.id(), &assignment))
        })
        .collect::<CliResult<Vec<_>>>()?;
    dataio::write_json(&records, &a.out)?;
    println!("clustered {} instances into {} communities; wrote {}", records.len(), a.communities, a.out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> CliResult {
    let (config, variant) = resolve_with_variant(&a.model, a.variant)?;
    print_resolved(&config);
    let data = load(&a.manifest)?;
    let outcome = train(&data, &config)?;
    let model_path = a.out.join("model.json");
    let history_path = a.out.join("history.csv");
    dataio::write_json(&outcome.model, &model_path)?;
    dataio::write_text(&report::history_csv(&outcome.history), &history_path)?;
    let last = outcome.history.last().expect("at least one epoch");
    println!(
        "trained {} on {} instances for {} epochs; final mean loss {:.6}",
        variant,
        data.len(),
        config.epochs,
        last.mean_loss
    );
    println!("wrote {} and {}", model_path.display(), history_path.display());
    Ok(())
}

fn cmd_embed(a: &EmbedArgs) -> CliResult {
    #[derive(Serialize)]
    struct Resolved<'a> {
        manifest: &'a Path,
        model: &'a Path,
        structure_view: ViewKind,
        feature_view: ViewKind,
    }
    print_resolved(&Resolved {
        manifest: &a.manifest,
        model: &a.model,
        structure_view: a.structure_view,
        feature_view: a.feature_view,
    });
    if !a.model.is_file() {
        return Err(CliError::Usage(format!("model {} does not exist", a.model.display())));
    }
    let model: ScpGcnModel = dataio::read_json(&a.model)?;
    let data = load(&a.manifest)?;
    let config =
        TrainConfig { view_structure: a.structure_view, view_features: a.feature_view, ..TrainConfig::default() };
    let rows: Vec<(String, Vec<f64>)> = embed_instances(&model, &data, &config)?
        .into_iter()
        .zip(&data)
        .map(|(e, x)| (x.id().to_string(), e.graph_embedding))
        .collect();
    dataio::write_text(&report::embedding_csv(&rows), &a.out)?;
    println!("embedded {} instances; wrote {}", rows.len(), a.out.display());
    Ok(())
}

fn check_repeats(repeats: usize) -> CliResult {
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult {
    check_repeats(a.repeats)?;
    let (config, variant) = resolve_with_variant(&a.model, a.variant)?;
    print_resolved(&config);
    let data = load(&a.manifest)?;
    let rep = runner::run_experiment(&data, variant, &config, a.repeats, a.jobs)?;
    dataio::write_json(&rep, &a.out)?;
    let csv = sibling_csv(&a.out, "");
    dataio::write_text(&report::repeats_csv(std::slice::from_ref(&rep)), &csv)?;
    println!(
        "{}: accuracy {:.4} ± {:.4}, F1 {:.4} ± {:.4} over {} repeats",
        rep.variant, rep.accuracy_mean, rep.accuracy_std, rep.f1_mean, rep.f1_std, rep.repeats
    );
    println!("wrote {} and {}", a.out.display(), csv.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct GridReport {
    config: TrainConfig,
    folds: usize,
    grid: Grid,
    train_ids: Vec<String>,
    test_ids: Vec<String>,
    /// Best point retrained on the whole training split and scored on the
    /// held-out split.
    test: Scores,
    search: GridSearchResult,
}

fn cmd_gridsearch(a: &GridArgs) -> CliResult {
    let config = resolve_train_config(&a.model)?;
    let coarse = Grid::coarse();
    let grid = Grid {
        alphas: a.alpha_grid.clone().unwrap_or(coarse.alphas),
        betas: a.beta_grid.clone().unwrap_or(coarse.betas),
        communities: a.communities_grid.clone().unwrap_or(coarse.communities),
    };
    if grid.alphas.iter().chain(&grid.betas).any(|v| v.is_nan() || *v < 0.0) || grid.communities.contains(&0) {
        return Err(CliError::Usage("grid values must be non-negative and C at least 1".into()));
    }
    grid.points().map_err(|e| CliError::Usage(e.to_string()))?;
    if a.folds < 2 {
        return Err(CliError::Usage("--folds must be at least 2".into()));
    }
    #[derive(Serialize)]
    struct Resolved<'a> {
        config: &'a TrainConfig,
        grid: &'a Grid,
        folds: usize,
    }
    print_resolved(&Resolved { config: &config, grid: &grid, folds: a.folds });
    let data = load(&a.manifest)?;
    let (train_idx, test_idx) = split_dataset(&labels(&data), TRAIN_FRACTION, config.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    let (train_set, test_set) = (pick(&train_idx), pick(&test_idx));
    let search = runner::grid_search(&train_set, &grid, a.folds, &config, a.jobs)?;
    let best_config = search.best.apply(&config);
    let test = evaluate_split(&train_set, &test_set, &best_config, &mut CommunityCache::new())?;
    let rep = GridReport {
        config,
        folds: a.folds,
        grid,
        train_ids: train_set.iter().map(|x| x.id().to_string()).collect(),
        test_ids: test_set.iter().map(|x| x.id().to_string()).collect(),
        test,
        search,
    };
    dataio::write_json(&rep, &a.out)?;
    let table = sibling_csv(&a.out, "");
    let summary = sibling_csv(&a.out, "_summary");
    dataio::write_text(&report::grid_csv(&rep.search), &table)?;
    dataio::write_text(&report::grid_summary_csv(&rep.search), &summary)?;
    let b = rep.search.best;
    println!(
        "best alpha {} beta {} C {}: CV accuracy {:.4}; test accuracy {:.4}, F1 {:.4}",
        b.alpha, b.beta, b.communities, rep.search.best_accuracy, rep.test.accuracy, rep.test.f1
    );
    println!("wrote {}, {} and {}", a.out.display(), table.display(), summary.display());
    Ok(())
}

fn cmd_ablate(a: &AblateArgs) -> CliResult {
    check_repeats(a.repeats)?;
    let config = resolve_train_config(&a.model)?;
    print_resolved(&config);
    let data = load(&a.manifest)?;
    let reports = Variant::ablation_suite()
        .into_iter()
        .map(|v| runner::run_experiment(&data, v, &config, a.repeats, a.jobs))
        .collect::<Result<Vec<_>, _>>()?;
    dataio::write_json(&reports, &a.out)?;
    let summary = sibling_csv(&a.out, "");
    let repeats = sibling_csv(&a.out, "_repeats");
    dataio::write_text(&report::summary_csv(&reports), &summary)?;
    dataio::write_text(&report::repeats_csv(&reports), &repeats)?;
    println!("{:<20} {:>17} {:>17}", "variant", "accuracy", "F1");
    for r in &reports {
        println!(
            "{:<20} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4}",
            r.variant, r.accuracy_mean, r.accuracy_std, r.f1_mean, r.f1_std
        );
    }
    println!("wrote {}, {} and {}", a.out.display(), summary.display(), repeats.display());
    Ok(())
}
