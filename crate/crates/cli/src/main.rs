use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use teaser_core::dataset::{
    load_interactions, load_metadata, prepare, EncodingConfig, PreparedDataset, SplitSpec,
};
use teaser_core::ease::{train_ease, ItemItemModel};
use teaser_core::eval::{
    evaluate, grid_search, sha256_hex, simulate_feedback, write_report, EaseScorer, EnsembleScorer,
    HyperGrid, ReportRow, RunManifest, SimulationConfig, TeaserScorer,
};
use teaser_core::solver::{train, EncoderModel, Hyperparams};
use teaser_core::synthetic::{planted_preferences, PlantedConfig};
use teaser_service::{Models, Service};
use tracing::{info, warn};

#[derive(Parser)]
#[command(
    name = "teaser",
    version,
    about = "Tag-space linear recommender with editable user profiles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read interaction and metadata CSVs, split users, encode tags.
    Ingest(IngestArgs),
    /// Train the tag encoder.
    Train(TrainArgs),
    /// Train the EASE item-item baseline.
    TrainEase(TrainEaseArgs),
    /// Report recall@20, recall@100 and nDCG@100 on held-out users.
    Evaluate(EvaluateArgs),
    /// Select hyperparameters by validation nDCG@100.
    GridSearch(GridArgs),
    /// Measure the effect of simulated tag feedback.
    Simulate(SimulateArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Write a planted-preference synthetic dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// `user_id,item_id` CSV.
    #[arg(long)]
    interactions: PathBuf,
    /// `item_id,category,value` CSV.
    #[arg(long)]
    metadata: PathBuf,
    /// TOML encoding rules (min_tag_items, display_fields, bins).
    #[arg(long)]
    encoding: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    #[arg(long, default_value_t = 5)]
    min_interactions: usize,
    #[arg(long, default_value_t = 0.8)]
    history_fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct HyperArgs {
    /// TOML file with any of lambda1, lambda2, rho, max_iterations, tolerance.
    /// Flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

impl HyperArgs {
    fn resolve(&self) -> Result<Hyperparams> {
        let mut hp = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => Hyperparams::default(),
        };
        if let Some(v) = self.lambda1 {
            hp.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            hp.lambda2 = v;
        }
        if let Some(v) = self.rho {
            hp.rho = v;
        }
        if let Some(v) = self.max_iterations {
            hp.max_iterations = v;
        }
        if let Some(v) = self.tolerance {
            hp.tolerance = v;
        }
        hp.validate()?;
        Ok(hp)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared dataset written by `ingest`.
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainEaseArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 500.0)]
    lambda: f64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Users {
    Validation,
    Test,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Also report EASE and the TEASER × EASE ensemble.
    #[arg(long)]
    ease: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Users::Test)]
    users: Users,
    /// CSV report; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// JSON run manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Per-user metrics as JSON.
    #[arg(long)]
    per_user: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// TOML grid (lambda1, lambda2, rho lists, max_iterations, tolerance).
    /// List flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    lambda1: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda2: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// CSV table with one row per grid point.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Retrain at the best point and save the encoder here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Distinct tags boosted per run (1 or 2).
    #[arg(long, default_value_t = 1)]
    tags: usize,
    /// Positive clicks per boosted tag (0 to 5).
    #[arg(long, default_value_t = 3)]
    clicks: i32,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Users::Test)]
    users: Users,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Enables `ensemble=true` on recommendation requests.
    #[arg(long)]
    ease: Option<PathBuf>,
    /// Line-delimited session event log; replayed on start.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 100)]
    items: usize,
    #[arg(long, default_value_t = 20)]
    tags: usize,
    #[arg(long, default_value_t = 10)]
    items_per_user: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory receiving interactions.csv and metadata.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train_cmd(a),
        Command::TrainEase(a) => train_ease_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::GridSearch(a) => grid_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Generate(a) => generate(a),
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let interactions = load_interactions(&a.interactions)?;
    let metadata = load_metadata(&a.metadata)?;
    let encoding = match &a.encoding {
        Some(p) => EncodingConfig::load(p)?,
        None => EncodingConfig::default(),
    };
    let spec = SplitSpec {
        train_fraction: a.train_fraction,
        validation_fraction: a.validation_fraction,
        test_fraction: a.test_fraction,
        min_interactions: a.min_interactions,
        history_fraction: a.history_fraction,
        seed: a.seed,
    };
    let ds = prepare(&interactions, &metadata, &encoding, &spec)?;
    ds.save(&a.out)?;
    info!(
        users = interactions.num_users(),
        items = ds.num_items(),
        tags = ds.tags.num_tags(),
        train = ds.split.train.rows(),
        validation = ds.split.validation.len(),
        test = ds.split.test.len(),
        dropped = ds.dropped_items.len(),
        out = %a.out.display(),
        "dataset prepared"
    );
    Ok(())
}

fn load_dataset(path: &Path) -> Result<(PreparedDataset, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((PreparedDataset::from_json(&bytes)?, sha256_hex(&bytes)))
}

fn report_convergence(model: &EncoderModel) {
    let r = &model.report;
    if !r.converged {
        warn!(
            iterations = r.iterations,
            primal = r.primal_residual,
            "ADMM stopped before converging"
        );
    }
    info!(
        iterations = r.iterations,
        primal = r.primal_residual,
        objective = r.objective,
        "encoder trained"
    );
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let hp = a.hyper.resolve()?;
    let (ds, _) = load_dataset(&a.dataset)?;
    let model = train(&ds.split.train, &ds.tags, &hp)?;
    report_convergence(&model);
    model.save(&a.out)?;
    Ok(())
}

fn train_ease_cmd(a: TrainEaseArgs) -> Result<()> {
    let (ds, _) = load_dataset(&a.dataset)?;
    train_ease(&ds.split.train, a.lambda)?.save(&a.out)?;
    info!(lambda = a.lambda, out = %a.out.display(), "EASE trained");
    Ok(())
}

fn users(ds: &PreparedDataset, which: Users) -> &teaser_core::dataset::EvaluationSplit {
    match which {
        Users::Validation => &ds.split.validation,
        Users::Test => &ds.split.test,
    }
}

fn emit_report(rows: &[ReportRow], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write_report(
            rows,
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )?,
        None => write_report(rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let (ds, sha) = load_dataset(&a.dataset)?;
    let model = EncoderModel::load(&a.model)?;
    let split = users(&ds, a.users);
    let teaser = TeaserScorer {
        model: &model,
        tags: &ds.tags,
    };
    let base = evaluate(&teaser, split)?;
    let mut rows = vec![ReportRow::new("TEASER", "static", &base, None)];
    let mut per_user = vec![("TEASER", base.per_user.clone())];
    if let Some(path) = &a.ease {
        let ease = ItemItemModel::load(path)?;
        let alone = evaluate(&EaseScorer(&ease), split)?;
        let both = evaluate(
            &EnsembleScorer {
                teaser,
                ease: &ease,
            },
            split,
        )?;
        rows.push(ReportRow::new("EASE", "static", &alone, None));
        rows.push(ReportRow::new("TEASER x EASE", "static", &both, None));
        per_user.push(("EASE", alone.per_user));
        per_user.push(("TEASER x EASE", both.per_user));
    }
    emit_report(&rows, a.report.as_deref())?;
    if let Some(p) = &a.per_user {
        write_json(&per_user, p)?;
    }
    if let Some(p) = &a.manifest {
        write_json(
            &RunManifest {
                command: "evaluate".into(),
                seed: ds.split_spec.seed,
                grid: None,
                simulation: None,
                dataset_sha256: sha,
            },
            p,
        )?;
    }
    Ok(())
}

fn grid_cmd(a: GridArgs) -> Result<()> {
    let mut grid = match &a.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => HyperGrid::default(),
    };
    if !a.lambda1.is_empty() {
        grid.lambda1 = a.lambda1;
    }
    if !a.lambda2.is_empty() {
        grid.lambda2 = a.lambda2;
    }
    if !a.rho.is_empty() {
        grid.rho = a.rho;
    }
    if let Some(v) = a.max_iterations {
        grid.max_iterations = v;
    }
    if let Some(v) = a.tolerance {
        grid.tolerance = v;
    }
    let points = grid.points();
    if points.is_empty() {
        bail!("hyperparameter grid is empty");
    }
    for hp in &points {
        hp.validate()?;
    }
    let (ds, sha) = load_dataset(&a.dataset)?;
    let result = grid_search(&points, &ds.split.train, &ds.tags, &ds.split.validation)?;

    let mut w = match &a.table {
        Some(p) => {
            csv::Writer::from_writer(Box::new(fs::File::create(p)?) as Box<dyn std::io::Write>)
        }
        None => {
            csv::Writer::from_writer(Box::new(std::io::stdout().lock()) as Box<dyn std::io::Write>)
        }
    };
    w.write_record([
        "lambda1",
        "lambda2",
        "rho",
        "converged",
        "iterations",
        "recall@20",
        "recall@100",
        "nDCG@100",
    ])?;
    for row in &result.table {
        let hp = &row.hyperparams;
        w.write_record([
            hp.lambda1.to_string(),
            hp.lambda2.to_string(),
            hp.rho.to_string(),
            row.converged.to_string(),
            row.iterations.to_string(),
            row.recall_20.to_string(),
            row.recall_100.to_string(),
            row.ndcg_100.to_string(),
        ])?;
    }
    w.flush()?;
    let best = &result.best;
    info!(
        lambda1 = best.lambda1,
        lambda2 = best.lambda2,
        rho = best.rho,
        "best grid point"
    );

    if let Some(out) = &a.out {
        let model = train(&ds.split.train, &ds.tags, best)?;
        report_convergence(&model);
        model.save(out)?;
    }
    if let Some(p) = &a.manifest {
        write_json(
            &RunManifest {
                command: "grid-search".into(),
                seed: ds.split_spec.seed,
                grid: Some(points),
                simulation: None,
                dataset_sha256: sha,
            },
            p,
        )?;
    }
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let (ds, sha) = load_dataset(&a.dataset)?;
    let model = EncoderModel::load(&a.model)?;
    let config = SimulationConfig {
        tags_boosted: a.tags,
        clicks: a.clicks,
        runs: a.runs,
        seed: a.seed,
    };
    let rep = simulate_feedback(&model, &ds.tags, users(&ds, a.users), &config)?;
    let scenario = format!(
        "{} tag{} x {} click{}",
        a.tags,
        if a.tags == 1 { "" } else { "s" },
        a.clicks,
        if a.clicks == 1 { "" } else { "s" }
    );
    let rows = [
        ReportRow::new("TEASER", "static", &rep.static_report, None),
        ReportRow::new(
            "TEASER",
            &scenario,
            &rep.interactive,
            Some(rep.improvement_percent),
        ),
    ];
    emit_report(&rows, a.report.as_deref())?;
    if let Some(p) = &a.manifest {
        write_json(
            &RunManifest {
                command: "simulate".into(),
                seed: a.seed,
                grid: None,
                simulation: Some(config),
                dataset_sha256: sha,
            },
            p,
        )?;
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let models = Models::load(&a.dataset, &a.model, a.ease.as_deref())?;
    let service = match &a.log {
        Some(path) => Service::with_log(models, path).map_err(|e| anyhow::anyhow!(e.message))?,
        None => Service::new(Some(models)),
    };
    info!(sessions = service.sessions().len(), "sessions restored");
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .with_context(|| format!("invalid address {}:{}", a.host, a.port))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(teaser_service::serve(Arc::new(service), addr))?;
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let data = planted_preferences(&PlantedConfig {
        users: a.users,
        items: a.items,
        tags: a.tags,
        items_per_user: a.items_per_user,
        seed: a.seed,
    })?;
    fs::create_dir_all(&a.out_dir)?;
    let inter = a.out_dir.join("interactions.csv");
    let meta = a.out_dir.join("metadata.csv");
    data.write_interactions(std::io::BufWriter::new(fs::File::create(&inter)?))?;
    data.write_metadata(std::io::BufWriter::new(fs::File::create(&meta)?))?;
    info!(interactions = %inter.display(), metadata = %meta.display(), "synthetic data written");
    Ok(())
}
