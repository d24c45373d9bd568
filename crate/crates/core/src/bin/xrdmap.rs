use std::collections::BTreeSet;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use xrdmap::comparison::{sweep, MetricKind, SweepMethod};
use xrdmap::error::{Error, Result};
use xrdmap::io::{self, Format, PatternSet};
use xrdmap::merge::{hierarchical_merge, manual_merge, PeakMetric};
use xrdmap::model::{MembershipTable, PhaseId, Stamp};
use xrdmap::phasemap::{run_incremental_phase_mapping, PhaseMapParams};
use xrdmap::plot::{render_plots, PlotOptions};
use xrdmap::service::{self, AppState, SystemClock};
use xrdmap::signal::{binarize_with_threshold, BinarizationParams, Threshold};
use xrdmap::synth::{fixtures, generate, SynthConfig};

const OUT_DIR_ENV: &str = "XRDMAP_OUT_DIR";

#[derive(Parser)]
#[command(name = "xrdmap", version, about = "Phase mapping for combinatorial XRD libraries")]
struct Cli {
    /// Print failures as a JSON object on stderr.
    #[arg(long, global = true)]
    errors_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic wafer and its ground truth.
    Synth(SynthArgs),
    /// Reduce every pattern of a dataset to binary peak windows.
    Binarize(BinarizeArgs),
    /// Assign binarized samples to pure and mixed phases.
    Map(MapArgs),
    /// Merge pure phases, by distance cutoff or by id.
    Merge(MergeArgs),
    /// Score conventional clustering against ground truth.
    Baseline(BaselineArgs),
    /// Render wafer, ternary and peak-stack plots.
    Plot(PlotArgs),
    /// Serve a result for interactive merging.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureName {
    Clean,
    Noisy,
    OverSplit,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML or JSON generator configuration.
    #[arg(long, required_unless_present = "fixture")]
    config: Option<PathBuf>,
    /// Built-in configuration instead of --config.
    #[arg(long, value_enum, conflicts_with = "config")]
    fixture: Option<FixtureName>,
    /// Sample count for --fixture.
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [env: XRDMAP_OUT_DIR]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BinarizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Minimum processed intensity, or `auto` for median + 5 MAD.
    #[arg(long)]
    threshold: Threshold,
    #[arg(long)]
    windows: usize,
    #[arg(long, default_value_t = 5)]
    smooth_degree: usize,
    #[arg(long, default_value_t = 21)]
    smooth_window: usize,
    #[arg(long, default_value_t = 1)]
    baseline_degree: usize,
    /// Patterns file (JSON) [default: $XRDMAP_OUT_DIR/patterns.json]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MapArgs {
    /// Patterns file written by `binarize`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    th: usize,
    #[arg(long)]
    ot: usize,
    #[arg(long, default_value_t = 3)]
    max_mixed: usize,
    /// Result file, `.json` or `.csv` [default: $XRDMAP_OUT_DIR/result.json]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, requires = "cutoff", conflicts_with = "ids")]
    metric: Option<PeakMetric>,
    #[arg(long, requires = "metric")]
    cutoff: Option<f64>,
    /// Comma-separated pure phase ids, e.g. P1,P3.
    #[arg(long, value_delimiter = ',', required_unless_present = "metric")]
    ids: Vec<String>,
    #[arg(long, default_value = "cli")]
    actor: String,
    /// Lineage timestamp; the current time when absent.
    #[arg(long)]
    timestamp_ms: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineMethod {
    Hier,
    Kmeans,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Ground-truth memberships (`sample_id,phases`).
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum)]
    method: BaselineMethod,
    #[arg(long, default_value = "euclidean")]
    metric: MetricKind,
    /// Comma-separated cutoffs (hier) or cluster counts (kmeans).
    #[arg(long, value_delimiter = ',', required = true)]
    param: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also score this incremental result.
    #[arg(long)]
    result: Option<PathBuf>,
    /// Report, `.csv` or `.json` [default: $XRDMAP_OUT_DIR/report.csv]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    show_outliers: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Directory with the browser client.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

fn out_path(given: Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
    if let Some(p) = given {
        return Ok(p);
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) => Ok(PathBuf::from(dir).join(default_name)),
        None => Err(Error::Validation(format!(
            "--out is required when {OUT_DIR_ENV} is unset"
        ))),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn read_config(path: &Path) -> Result<SynthConfig> {
    let text = fs::read_to_string(path)?;
    match Format::from_path(path) {
        Format::Json => Ok(serde_json::from_str(&text)?),
        Format::Csv => toml::from_str(&text).map_err(|e| Error::Config(e.to_string())),
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut config = match (args.config, args.fixture) {
        (Some(path), _) => read_config(&path)?,
        (None, Some(FixtureName::Clean)) => fixtures::clean_three_phase(0, args.samples).config,
        (None, Some(FixtureName::Noisy)) => fixtures::noisy_three_phase(0, args.samples).config,
        (None, Some(FixtureName::OverSplit)) => fixtures::over_split(0, args.samples).config,
        (None, None) => return Err(Error::Validation("--config or --fixture is required".into())),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let dir = match args.out {
        Some(d) => d,
        None => out_path(None, "")?,
    };
    fs::create_dir_all(&dir)?;
    let out = generate(&config)?;
    io::write_dataset(&out.dataset, dir.join("dataset.csv"))?;
    fs::write(dir.join("truth.csv"), io::truth_to_csv(&out.truth)?)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&config)?)?;
    println!("{} samples written to {}", out.dataset.samples.len(), dir.display());
    Ok(())
}

fn binarize(args: BinarizeArgs) -> Result<()> {
    let loaded = io::load_dataset(&args.input)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let template = BinarizationParams {
        smooth_degree: args.smooth_degree,
        smooth_window: args.smooth_window,
        baseline_degree: args.baseline_degree,
        intensity_threshold: 0.0,
        window_count: args.windows,
    };
    template.validate(loaded.dataset.grid.len())?;
    let (patterns, record) = binarize_with_threshold(&loaded.dataset.samples, &template, args.threshold)?;
    let threshold = record.params.intensity_threshold;
    let set = PatternSet::new(
        loaded.dataset.samples.iter().map(|s| s.id.clone()),
        patterns,
        Some(record),
    );
    let out = out_path(args.out, "patterns.json")?;
    ensure_parent(&out)?;
    io::write_patterns(&set, &out)?;
    println!(
        "{} patterns (threshold {threshold}) written to {}",
        set.patterns.len(),
        out.display()
    );
    Ok(())
}

fn map(args: MapArgs) -> Result<()> {
    let set = io::read_patterns(&args.input)?;
    let params = PhaseMapParams {
        th: args.th,
        ot: args.ot,
        max_mixed_constituents: args.max_mixed,
    };
    let mut result = run_incremental_phase_mapping(&set.pairs(), &params)?;
    result.params.binarization = set.binarization;
    let out = out_path(args.out, "result.json")?;
    ensure_parent(&out)?;
    io::export_result(&result, &out, Format::from_path(&out))?;
    println!(
        "{} pure phases, {} mixed samples, {} outliers; written to {}",
        result.catalog.len(),
        result.memberships.mixed().count(),
        result.memberships.outliers().count(),
        out.display()
    );
    Ok(())
}

fn merge(args: MergeArgs) -> Result<()> {
    let result = io::import_result(&args.input)?;
    let stamp = match args.timestamp_ms {
        Some(ms) => Stamp::new(args.actor, ms),
        None => Stamp::now(args.actor),
    };
    let merged = match (args.metric, args.cutoff) {
        (Some(metric), Some(cutoff)) => hierarchical_merge(&result, metric, cutoff, stamp)?.0,
        _ => {
            let ids = args
                .ids
                .iter()
                .map(|s| s.trim().parse::<PhaseId>())
                .collect::<Result<Vec<_>>>()?;
            manual_merge(&result, &ids, stamp)?
        }
    };
    if let Some(entry) = merged.lineage.last() {
        for w in &entry.warnings {
            eprintln!("warning: {w}");
        }
    }
    let out = out_path(args.out, "result.json")?;
    ensure_parent(&out)?;
    io::export_result(&merged, &out, Format::from_path(&out))?;
    println!(
        "{} -> {} pure phases; written to {}",
        result.catalog.len(),
        merged.catalog.len(),
        out.display()
    );
    Ok(())
}

fn membership_sets(ids: &[String], table: &MembershipTable, what: &str) -> Result<Vec<BTreeSet<usize>>> {
    ids.iter()
        .map(|id| {
            table
                .get(id)
                .map(|m| m.iter().map(|p| p.0).collect())
                .ok_or_else(|| Error::Validation(format!("sample {id} missing from {what}")))
        })
        .collect()
}

fn baseline(args: BaselineArgs) -> Result<()> {
    let loaded = io::load_dataset(&args.input)?;
    let truth_table = io::read_truth(&args.truth)?;
    let ids: Vec<String> = loaded.dataset.samples.iter().map(|s| s.id.clone()).collect();
    let truth = membership_sets(&ids, &truth_table, "truth")?;
    let vectors: Vec<Vec<f64>> = loaded.dataset.samples.iter().map(|s| s.intensities.clone()).collect();
    let method = match args.method {
        BaselineMethod::Hier => SweepMethod::Hierarchical {
            metric: args.metric,
            cutoffs: args.param.clone(),
        },
        BaselineMethod::Kmeans => {
            let ks = args
                .param
                .iter()
                .map(|&k| {
                    if k >= 1.0 && k.fract() == 0.0 {
                        Ok(k as usize)
                    } else {
                        Err(Error::Validation(format!("k must be a positive integer, got {k}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            SweepMethod::Kmeans { ks, seed: args.seed }
        }
    };
    let mut report = sweep(&vectors, &truth, &[method])?;
    if let Some(path) = &args.result {
        let result = io::import_result(path)?;
        let predicted = membership_sets(&ids, &result.memberships, "result")?;
        report.push_memberships("incremental", result.params.th as f64, &predicted, &truth)?;
    }
    let out = out_path(args.out, "report.csv")?;
    ensure_parent(&out)?;
    io::write_report(&report, &out)?;
    for row in &report.rows {
        println!(
            "{:<12} {:<11} {:>10} clusters={:<4} purity={:.3} ari={:.3} dual_recall={:.3}",
            row.method,
            row.metric,
            row.param,
            row.clusters,
            row.scores.purity,
            row.scores.adjusted_rand,
            row.scores.dual_membership_recall
        );
    }
    Ok(())
}

fn plot(args: PlotArgs) -> Result<()> {
    let result = io::import_result(&args.result)?;
    let loaded = io::load_dataset(&args.dataset)?;
    let dir = match args.out {
        Some(d) => d,
        None => out_path(None, "")?,
    };
    let files = render_plots(
        &result,
        &loaded.dataset,
        &dir,
        PlotOptions {
            show_outliers: args.show_outliers,
        },
    )?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let result = io::import_result(&args.result)?;
    let loaded = io::load_dataset(&args.dataset)?;
    let app = AppState::new(loaded.dataset, result, SystemClock);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(service::serve(
        app,
        SocketAddr::new(args.host, args.port),
        args.static_dir,
    ))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Binarize(a) => binarize(a),
        Command::Map(a) => map(a),
        Command::Merge(a) => merge(a),
        Command::Baseline(a) => baseline(a),
        Command::Plot(a) => plot(a),
        Command::Serve(a) => serve(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code: u8 = if e.is_io() { 2 } else { 1 };
            if cli.errors_json {
                let body = serde_json::json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code });
                eprintln!("{body}");
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(code)
        }
    }
}
