use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use pairshot_core::backend::external::{serve_tcp, ModelServer};
use pairshot_core::io::write_dataset;
use pairshot_core::prompting::Task;
use pairshot_core::rng::derive_seed;
use pairshot_core::split::{split_no_leakage, SplitOptions};
use pairshot_core::{Dataset, DatasetKind};
use pairshot_harness::manifest::RunManifest;
use pairshot_harness::sweep::{train_cell, CellTiming};
use pairshot_harness::table::parse_metric;
use pairshot_harness::*;
use pairshot_ingest::mock::{MockBugzilla, MockOptions};
use pairshot_ingest::{
    bugzilla_dataset, fetch_bugs, ingest_stackoverflow_exports, load_srs_pairs, FetchConfig, IngestionWindow, SoOptions,
};

#[derive(Parser)]
#[command(
    name = "pairshot",
    version,
    about = "Few-shot sentence-pair classification experiments"
)]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a task dataset from a source.
    #[command(subcommand)]
    Ingest(IngestSource),
    /// Split a dataset into a leakage-free train pool and test set.
    Split(SplitArgs),
    /// Train and evaluate a single (size, replicate) cell.
    Train(TrainArgs),
    /// Run a training-set-size sweep.
    Sweep(SweepArgs),
    /// Render tables from saved sweep results.
    Report(ReportArgs),
    /// Serve the bundled Bugzilla fixture over HTTP.
    MockBugzilla(MockArgs),
    /// Serve the toy backend over the external-backend protocol.
    ServeBackend(ServeArgs),
}

#[derive(Subcommand)]
enum IngestSource {
    Bugzilla(BugzillaArgs),
    Stackoverflow(StackOverflowArgs),
    Srs(SrsArgs),
}

fn usage(e: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, e).exit()
}

fn existing(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.exists() {
        Ok(p)
    } else {
        Err(format!("`{s}` does not exist"))
    }
}

fn metric_name(s: &str) -> Result<String, String> {
    parse_metric(s).map(|_| s.to_string()).map_err(|e| e.to_string())
}

#[derive(Args)]
struct BugzillaArgs {
    /// Bug collection URL, e.g. https://bugzilla.mozilla.org/rest/bug
    #[arg(long)]
    endpoint: String,
    #[arg(long, default_value = "bugzilla_duplicate")]
    task: String,
    #[arg(long, default_value = "2019-01-01")]
    earliest: String,
    #[arg(long, default_value = "2021-12-31")]
    latest: String,
    #[arg(long, default_value_t = 100)]
    page_size: usize,
    /// Neutral pairs per positive pair.
    #[arg(long, default_value_t = 1.0)]
    neutral_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StackOverflowArgs {
    #[arg(long, value_parser = existing)]
    duplicates: PathBuf,
    #[arg(long, value_parser = existing)]
    neutral: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    neutral_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SrsArgs {
    #[arg(long, value_parser = existing)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, value_parser = existing)]
    data: PathBuf,
    #[arg(long)]
    train_pool_size: usize,
    #[arg(long, default_value_t = 2000)]
    test_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target test-set label fractions, comma separated in label order.
    #[arg(long, value_delimiter = ',')]
    class_ratio: Option<Vec<f64>>,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Experiment settings; flags override the config file.
#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment config.
    #[arg(long, value_parser = existing)]
    config: Option<PathBuf>,
    /// Labeled pair dataset; bundled synthetic data when omitted.
    #[arg(long, value_parser = existing)]
    data: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    backend: Option<BackendSpec>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    unlabeled_size: Option<usize>,
    #[arg(long)]
    train_pool_size: Option<usize>,
    #[arg(long)]
    seed_base: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// SetFit encoder epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Fine-tune steps or PET MLM steps per member.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    distill_steps: Option<usize>,
}

impl ExperimentArgs {
    /// Invalid settings are usage errors and exit with status 2.
    fn resolve(&self) -> (ExperimentConfig, DataSource) {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p).unwrap_or_else(|e| usage(e)),
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.task {
            c.task_id = v.clone();
        }
        if let Some(v) = self.method {
            c.method = v;
        }
        if let Some(v) = &self.backend {
            c.backend = v.clone();
        }
        if let Some(v) = &self.sizes {
            c.sizes = v.clone();
        }
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { c.$f = v; } )*};
        }
        set!(replicates, test_size, unlabeled_size, seed_base, workers);
        if self.train_pool_size.is_some() {
            c.train_pool_size = self.train_pool_size;
        }
        if self.epochs.is_some() {
            c.epochs = self.epochs;
        }
        if self.steps.is_some() {
            c.steps = self.steps;
        }
        if self.distill_steps.is_some() {
            c.distill_steps = self.distill_steps;
        }
        if let Err(e) = c.validate() {
            usage(e);
        }
        let source = match &self.data {
            Some(p) => DataSource::File(p.clone()),
            None => DataSource::Synthetic,
        };
        (c, source)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    replicate: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, default_value = "sweep-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Saved sweep result files; several are shown side by side.
    #[arg(long = "result", required = true, value_parser = existing)]
    results: Vec<PathBuf>,
    #[arg(long, default_value = "accuracy", value_parser = metric_name)]
    metric: String,
    #[arg(long, default_value = "text")]
    format: TableFormat,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MockArgs {
    #[arg(long, default_value_t = 8089)]
    port: u16,
    /// JSON array of bug records; the bundled fixture when omitted.
    #[arg(long, value_parser = existing)]
    records: Option<PathBuf>,
    /// Answer the first N requests with HTTP 503.
    #[arg(long, default_value_t = 0)]
    fail_first: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 7878)]
    port: u16,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn ingest(src: IngestSource) -> Result<()> {
    let mut m = RunManifest::start("ingest");
    let (dataset, out, report, source): (Dataset, PathBuf, serde_json::Value, String) = match src {
        IngestSource::Bugzilla(a) => {
            let task = Task::from_id(&a.task)?;
            let window = IngestionWindow::parse(&a.earliest, &a.latest)?;
            let fetch = fetch_bugs(
                &FetchConfig {
                    page_size: a.page_size,
                    ..FetchConfig::new(a.endpoint.clone())
                },
                &window,
            )?;
            let (d, rep) = bugzilla_dataset(&fetch.records, task, a.neutral_ratio, a.seed)?;
            m.seeds.push(a.seed);
            let report = serde_json::json!({
                "requests": fetch.requests,
                "retries": fetch.retries,
                "records": fetch.records.len(),
                "malformed": fetch.malformed,
                "duplicate_ids": fetch.duplicate_ids,
                "outside_window": fetch.outside_window,
                "window": window,
                "assembly": rep,
            });
            (d, a.out, report, format!("bugzilla:{}", a.endpoint))
        }
        IngestSource::Stackoverflow(a) => {
            let opts = SoOptions {
                neutral_ratio: a.neutral_ratio,
                seed: a.seed,
                ..Default::default()
            };
            let (d, rep) = ingest_stackoverflow_exports(&a.duplicates, &a.neutral, &opts)?;
            m.seeds.push(a.seed);
            let report = serde_json::json!({ "options": opts, "report": rep });
            (d, a.out, report, format!("stackoverflow:{}", a.duplicates.display()))
        }
        IngestSource::Srs(a) => {
            let d = load_srs_pairs(&a.input)?;
            (d, a.out, serde_json::json!({}), format!("srs:{}", a.input.display()))
        }
    };
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_dataset(&dataset, &out, &source)?;
    let report_path = out.with_extension("report.json");
    let mut report = report;
    report["pairs"] = dataset.len().into();
    write_json(&report_path, &report)?;
    m.outputs = vec![out.clone(), report_path];
    m.finish("ok");
    m.write_beside(&out)?;
    println!("wrote {} pairs to {}", dataset.len(), out.display());
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let mut m = RunManifest::start("split");
    let all = pairshot_core::io::read_dataset(&a.data)?.with_kind(DatasetKind::Train)?;
    let options = SplitOptions {
        class_ratio: a.class_ratio.clone(),
    };
    let s = split_no_leakage(&all, a.train_pool_size, a.test_size, a.seed, &options)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let source = a.data.display().to_string();
    let (pool, test) = (a.out_dir.join("train_pool.jsonl"), a.out_dir.join("test.jsonl"));
    write_dataset(&s.train_pool, &pool, &source)?;
    write_dataset(&s.test, &test, &source)?;
    m.config_hash = Some(pairshot_core::config_hash(&(
        a.train_pool_size,
        a.test_size,
        a.seed,
        &options,
    )));
    m.seeds.push(a.seed);
    m.outputs = vec![pool, test];
    m.finish("ok");
    m.write_to_dir(&a.out_dir)?;
    println!(
        "train pool {} pairs, test {} pairs, {} dropped",
        s.train_pool.len(),
        s.test.len(),
        all.len() - s.train_pool.len() - s.test.len()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut m = RunManifest::start("train");
    let (mut config, source) = a.experiment.resolve();
    config.sizes = vec![a.size];
    config.replicates = a.replicate + 1;
    config.validate()?;
    let backend = config.backend.connect()?;
    let pools = prepare_pools(&config, &source)?;
    pools.check(&config)?;
    let seed = config.replicate_seed(a.replicate);
    let train = pools.training_sample(a.size, seed, a.replicate)?;
    let unlabeled = match config.method {
        Method::Pet => Some(pools.unlabeled_for(&train, config.unlabeled_size, seed)?),
        _ => None,
    };
    let model_seed = derive_seed(seed, a.size as u64);
    let out = train_cell(
        &config,
        config.task()?,
        &train,
        unlabeled.as_ref(),
        &pools.test,
        model_seed,
        backend.as_ref(),
    )?;
    out.model.write(&a.out_dir)?;
    write_json(&a.out_dir.join("eval_report.json"), &out.report)?;
    std::fs::write(a.out_dir.join("config.toml"), config.to_toml()?)?;
    m.config_hash = Some(pairshot_core::config_hash(&config));
    m.seeds = vec![seed, model_seed];
    m.outputs = vec![a.out_dir.join("eval_report.json")];
    m.finish("ok");
    m.write_to_dir(&a.out_dir)?;
    println!(
        "size {} replicate {}: accuracy {:.4}, macro F1 {:.4}, weighted F1 {:.4}",
        a.size, a.replicate, out.report.accuracy, out.report.macro_f1, out.report.weighted_f1
    );
    Ok(())
}

/// Returns whether every cell completed.
fn sweep(a: SweepArgs) -> Result<bool> {
    let mut m = RunManifest::start("sweep");
    let (config, source) = a.experiment.resolve();
    m.config_hash = Some(pairshot_core::config_hash(&config));
    m.seeds = (0..config.replicates).map(|r| config.replicate_seed(r)).collect();
    let backend = config.backend.connect()?;
    let pools = prepare_pools(&config, &source)?;
    let outcome = run_sweep(&config, &pools, backend.as_ref())?;
    let dir = &a.out_dir;
    std::fs::create_dir_all(dir)?;
    let result_path = dir.join("result.json");
    outcome.result.save(&result_path)?;
    std::fs::write(dir.join("config.toml"), config.to_toml()?)?;

    let cell_seconds: f64 = outcome.timings.iter().map(|t| t.seconds).sum();
    if config.workers == 1 && (cell_seconds - outcome.wall_seconds).abs() > 0.05 * outcome.wall_seconds {
        log::warn!(
            "cell timings sum to {cell_seconds:.2}s against {:.2}s wall clock",
            outcome.wall_seconds
        );
    }
    #[derive(serde::Serialize)]
    struct Timings<'a> {
        wall_seconds: f64,
        cell_seconds: f64,
        cells: &'a [CellTiming],
    }
    write_json(
        &dir.join("timings.json"),
        &Timings {
            wall_seconds: outcome.wall_seconds,
            cell_seconds,
            cells: &outcome.timings,
        },
    )?;
    let mut outputs = vec![result_path, dir.join("timings.json")];
    for metric in ["accuracy", "macro_f1", "weighted_f1"] {
        for (ext, format) in [("txt", TableFormat::Text), ("csv", TableFormat::Csv)] {
            let p = dir.join(format!("table_{metric}.{ext}"));
            std::fs::write(&p, emit_table(&outcome.result, metric, format)?)?;
            outputs.push(p);
        }
    }

    print!("{}", emit_table(&outcome.result, "accuracy", TableFormat::Text)?);
    let complete = outcome.result.is_complete();
    if !complete {
        eprintln!(
            "{} of {} cells failed; see {}",
            outcome.result.failed_cells(),
            outcome.result.cells.len(),
            dir.join("result.json").display()
        );
    }
    m.outputs = outputs;
    m.finish(if complete { "ok" } else { "partial" });
    m.write_to_dir(dir)?;
    Ok(complete)
}

fn report(a: ReportArgs) -> Result<()> {
    let results = a
        .results
        .iter()
        .map(|p| SweepResult::load(p))
        .collect::<Result<Vec<_>>>()?;
    let table = emit_comparison(&results, &a.metric, a.format)?;
    match &a.out {
        Some(p) => {
            let mut m = RunManifest::start("report");
            std::fs::write(p, &table)?;
            m.config_hash = results.first().map(|r| r.config_hash.clone());
            m.outputs = vec![p.clone()];
            m.finish("ok");
            m.write_beside(p)?;
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn mock_bugzilla(a: MockArgs) -> Result<()> {
    let records = match &a.records {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => pairshot_ingest::fixture::fixture_records(),
    };
    let listener = std::net::TcpListener::bind(("127.0.0.1", a.port))?;
    let server = MockBugzilla::start_on(
        listener,
        records,
        MockOptions {
            fail_first: a.fail_first,
        },
    )?;
    println!("serving {}", server.endpoint());
    server.wait();
    Ok(())
}

fn serve_backend(a: ServeArgs) -> Result<()> {
    let listener = std::net::TcpListener::bind(("127.0.0.1", a.port))?;
    println!("toy backend listening on {}", listener.local_addr()?);
    serve_tcp(listener, ModelServer::toy())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match cli.command {
        Command::Ingest(s) => ingest(s).map(|_| true),
        Command::Split(a) => split(a).map(|_| true),
        Command::Train(a) => train(a).map(|_| true),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a).map(|_| true),
        Command::MockBugzilla(a) => mock_bugzilla(a).map(|_| true),
        Command::ServeBackend(a) => serve_backend(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
