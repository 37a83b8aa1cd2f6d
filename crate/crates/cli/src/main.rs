//! `bsp`: command-line pipeline for stable bimodule discovery.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use bsp_core::data::{load_dataset, write_matrix_binary, write_matrix_csv};
use bsp_core::dedup::{select_representatives, BimoduleCollection};
use bsp_core::eval::score_collection;
use bsp_core::jsonio::{
    read_bimodules, read_json_file, write_bimodules, write_json_file, RunSummary, TraceRecord,
    TruthRecord,
};
use bsp_core::net::net_stats;
use bsp_core::search::{run_pipeline, SearchConfig};
use bsp_core::simgen::{generate_dataset, GenConfig};
use bsp_core::tuning::choose_alpha;
use bsp_core::{FeatureSet, View};

#[derive(Parser)]
#[command(name = "bsp", version, about = "Stable bimodule discovery on two-view data")]
struct Cli {
    /// Worker threads; defaults to all cores, or the BSP_WORKERS variable.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for stable bimodules and write them as JSON.
    Search(SearchArgs),
    /// Choose the false discovery parameter via half-permuted instances.
    Tune(TuneArgs),
    /// Generate a synthetic benchmark dataset with planted bimodules.
    Simulate(SimulateArgs),
    /// Score detected bimodules against exported ground truth.
    Evaluate(EvaluateArgs),
    /// Compute connectivity threshold and essential edges per bimodule.
    Netstats(NetstatsArgs),
    /// Reduce a bimodule collection to its effective representatives.
    Filter(FilterArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Type-1 matrix (CSV with header of feature ids, or BSPM binary).
    #[arg(long)]
    x: PathBuf,
    /// Type-2 matrix, same format and row count.
    #[arg(long)]
    y: PathBuf,
    /// Optional covariate matrix to residualize out.
    #[arg(long)]
    covariates: Option<PathBuf>,
}

#[derive(Args)]
struct SearchLikeArgs {
    /// False discovery parameter.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Fraction of type-1 features used as search seeds.
    #[arg(long, default_value_t = 1.0)]
    seed_fraction_s: f64,
    /// Fraction of type-2 features used as search seeds.
    #[arg(long, default_value_t = 1.0)]
    seed_fraction_t: f64,
    /// Skip seeds already inside a found bimodule (serial seed order).
    #[arg(long, default_value_t = false)]
    skip_covered_seeds: bool,
    /// Iteration cap per search.
    #[arg(long, default_value_t = 20)]
    max_iterations: usize,
    /// Geometric size cap per iterate.
    #[arg(long, default_value_t = 5000.0)]
    size_cap: f64,
    /// Permutation budget of the final joint p-value filter.
    #[arg(long, default_value_t = 100_000)]
    filter_perms: usize,
    /// Master RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SearchLikeArgs {
    fn to_config(&self) -> SearchConfig {
        SearchConfig {
            alpha: self.alpha,
            max_iterations: self.max_iterations,
            size_cap: self.size_cap,
            seed_fraction_s: self.seed_fraction_s,
            seed_fraction_t: self.seed_fraction_t,
            skip_covered_seeds: self.skip_covered_seeds,
            rng_seed: self.seed,
        }
    }
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    search: SearchLikeArgs,
    /// Output path for the bimodule JSON.
    #[arg(long)]
    out: PathBuf,
    /// Output path for the per-seed trace log (default: <out stem>.traces.json).
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    search: SearchLikeArgs,
    /// Comma-separated ascending grid of candidate alpha values.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    /// Number of half-permuted instances.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    half_perms: u32,
    /// Acceptable mean edge-error estimate.
    #[arg(long, default_value_t = 0.05)]
    target: f64,
    /// Output path for the tuning report JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    q: usize,
    #[arg(long)]
    n: usize,
    /// Number of planted bimodules.
    #[arg(long)]
    k: usize,
    /// Pairwise bridge probability is bridge-rate / k.
    #[arg(long, default_value_t = 1.5)]
    bridge_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix: writes <prefix>_x, <prefix>_y, <prefix>_truth.json.
    #[arg(long)]
    out_prefix: String,
    /// Matrix output format.
    #[arg(long, default_value = "csv", value_parser = ["csv", "bin"])]
    format: String,
    /// Elide the population edge list from the truth JSON above this count.
    #[arg(long)]
    truth_edge_cap: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Detected bimodules JSON.
    #[arg(long)]
    found: PathBuf,
    /// Ground truth JSON from `bsp simulate`.
    #[arg(long)]
    truth: PathBuf,
    /// Output path for the report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Optional flat CSV of per-bimodule rows.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct NetstatsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Bimodule JSON to annotate.
    #[arg(long)]
    bimodules: PathBuf,
    /// Output path for the annotated bimodule JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    /// Bimodule JSON to reduce.
    #[arg(long)]
    bimodules: PathBuf,
    /// Output path for the representative subset.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let workers = cli
        .workers
        .or_else(|| {
            std::env::var("BSP_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|v| v.get())
                .unwrap_or(1)
        });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    let outcome = pool.install(|| run(cli.command, workers));
    if let Err(err) = outcome {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(command: Command, workers: usize) -> anyhow::Result<()> {
    match command {
        Command::Search(args) => cmd_search(args, workers),
        Command::Tune(args) => cmd_tune(args, workers),
        Command::Simulate(args) => cmd_simulate(args, workers),
        Command::Evaluate(args) => cmd_evaluate(args, workers),
        Command::Netstats(args) => cmd_netstats(args, workers),
        Command::Filter(args) => cmd_filter(args, workers),
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    out.with_file_name(name)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    out.with_file_name(name)
}

#[allow(clippy::too_many_arguments)]
fn write_summary(
    out: &Path,
    command: &str,
    seed: u64,
    workers: usize,
    dims: Option<(usize, usize, usize, usize)>,
    started: Instant,
    outputs: &[&Path],
) -> anyhow::Result<()> {
    let summary = RunSummary {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        workers,
        n: dims.map(|d| d.0),
        n_eff: dims.map(|d| d.1),
        p: dims.map(|d| d.2),
        q: dims.map(|d| d.3),
        elapsed_seconds: started.elapsed().as_secs_f64(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_json_file(&sidecar_path(out), &summary)?;
    Ok(())
}

fn cmd_search(args: SearchArgs, workers: usize) -> anyhow::Result<()> {
    let started = Instant::now();
    let dataset = load_dataset(&args.data.x, &args.data.y, args.data.covariates.as_ref())
        .context("loading data")?
        .prepare()
        .context("preparing data")?;
    let config = args.search.to_config();
    let result = run_pipeline(&dataset, &config, args.search.filter_perms)?;

    write_bimodules(&args.out, &result.bimodules, Some(&dataset))?;
    let traces_path = args
        .traces
        .clone()
        .unwrap_or_else(|| sibling(&args.out, ".traces.json"));
    let trace_records: Vec<TraceRecord> =
        result.traces.iter().map(TraceRecord::from_trace).collect();
    write_json_file(&traces_path, &trace_records)?;
    write_summary(
        &args.out,
        "search",
        config.rng_seed,
        workers,
        Some((dataset.n(), dataset.n_eff(), dataset.p(), dataset.q())),
        started,
        &[&args.out, &traces_path],
    )?;
    println!(
        "search: {} fixed points, {} past filter, {} representatives written to {}",
        result.n_found,
        result.n_after_filter,
        result.bimodules.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_tune(args: TuneArgs, workers: usize) -> anyhow::Result<()> {
    let started = Instant::now();
    let raw = load_dataset(&args.data.x, &args.data.y, args.data.covariates.as_ref())
        .context("loading data")?;
    let template = args.search.to_config();
    let report = choose_alpha(
        &raw,
        &args.grid,
        args.half_perms as usize,
        args.target,
        &template,
        args.search.filter_perms,
    )?;
    write_json_file(&args.out, &report)?;
    write_summary(
        &args.out,
        "tune",
        template.rng_seed,
        workers,
        Some((raw.n(), raw.n_eff(), raw.p(), raw.q())),
        started,
        &[&args.out],
    )?;
    println!(
        "tune: chosen alpha = {}{}",
        report.chosen_alpha,
        if report.no_alpha_met_target {
            " (warning: no grid value met the target)"
        } else {
            ""
        }
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, workers: usize) -> anyhow::Result<()> {
    let started = Instant::now();
    let config = GenConfig {
        p: args.p,
        q: args.q,
        n: args.n,
        k: args.k,
        bridge_rate: args.bridge_rate,
        rng_seed: args.seed,
    };
    let (dataset, truth) = generate_dataset(&config)?;
    let ext = if args.format == "bin" { "bin" } else { "csv" };
    let x_path = PathBuf::from(format!("{}_x.{ext}", args.out_prefix));
    let y_path = PathBuf::from(format!("{}_y.{ext}", args.out_prefix));
    let truth_path = PathBuf::from(format!("{}_truth.json", args.out_prefix));
    if args.format == "bin" {
        write_matrix_binary(&x_path, &dataset.x, &dataset.s_ids)?;
        write_matrix_binary(&y_path, &dataset.y, &dataset.t_ids)?;
    } else {
        write_matrix_csv(&x_path, &dataset.x, &dataset.s_ids)?;
        write_matrix_csv(&y_path, &dataset.y, &dataset.t_ids)?;
    }
    write_json_file(
        &truth_path,
        &TruthRecord::from_truth(&truth, args.truth_edge_cap),
    )?;
    write_summary(
        &truth_path,
        "simulate",
        args.seed,
        workers,
        Some((dataset.n(), dataset.n_eff(), dataset.p(), dataset.q())),
        started,
        &[&x_path, &y_path, &truth_path],
    )?;
    println!(
        "simulate: wrote {}, {}, {} ({} planted, {} bridges)",
        x_path.display(),
        y_path.display(),
        truth_path.display(),
        truth.planted.len(),
        truth.bridges.len()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, workers: usize) -> anyhow::Result<()> {
    let started = Instant::now();
    let detections = read_bimodules(&args.found)?;
    let truth_record: TruthRecord = read_json_file(&args.truth)?;
    let truth_edges = truth_record.truth_edges();
    let truths: Vec<(FeatureSet, FeatureSet)> = truth_record
        .planted
        .iter()
        .map(|pr| {
            (
                FeatureSet::new(View::TypeOne, pr.a.clone()),
                FeatureSet::new(View::TypeTwo, pr.b.clone()),
            )
        })
        .collect();
    let report = score_collection(&truths, &detections, &truth_edges);
    write_json_file(&args.out, &report)?;
    if let Some(csv_path) = &args.csv {
        let mut text =
            String::from("kind,index,best_recall,best_jaccard,edge_error,truth_overlaps\n");
        for t in &report.per_truth {
            text.push_str(&format!(
                "truth,{},{:.16e},{:.16e},,\n",
                t.truth_index, t.best_recall, t.best_jaccard
            ));
        }
        for d in &report.per_detection {
            let err = d
                .edge_error
                .map(|e| format!("{e:.16e}"))
                .unwrap_or_default();
            text.push_str(&format!(
                "detection,{},,,{},{}\n",
                d.detection_index, err, d.truth_overlaps
            ));
        }
        std::fs::write(csv_path, text)
            .with_context(|| format!("writing {}", csv_path.display()))?;
    }
    write_summary(&args.out, "evaluate", 0, workers, None, started, &[&args.out])?;
    println!(
        "evaluate: mean recall {:.4}, mean jaccard {:.4}, mean edge error {:.4}",
        report.mean_recall, report.mean_jaccard, report.mean_edge_error
    );
    Ok(())
}

fn cmd_netstats(args: NetstatsArgs, workers: usize) -> anyhow::Result<()> {
    let started = Instant::now();
    let dataset = load_dataset(&args.data.x, &args.data.y, args.data.covariates.as_ref())?
        .prepare()?;
    let mut bimodules = read_bimodules(&args.bimodules)?;
    for bm in &mut bimodules {
        if bm.a.indices().iter().any(|&s| s >= dataset.p())
            || bm.b.indices().iter().any(|&t| t >= dataset.q())
        {
            bail!(
                "bimodule indices exceed the data dimensions ({} x {})",
                dataset.p(),
                dataset.q()
            );
        }
        bm.net = Some(net_stats(&dataset, &bm.a, &bm.b));
    }
    write_bimodules(&args.out, &bimodules, Some(&dataset))?;
    write_summary(
        &args.out,
        "netstats",
        0,
        workers,
        Some((dataset.n(), dataset.n_eff(), dataset.p(), dataset.q())),
        started,
        &[&args.out],
    )?;
    println!(
        "netstats: annotated {} bimodules into {}",
        bimodules.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_filter(args: FilterArgs, workers: usize) -> anyhow::Result<()> {
    let started = Instant::now();
    let bimodules = read_bimodules(&args.bimodules)?;
    let collection = BimoduleCollection::new(bimodules);
    let effective = bsp_core::dedup::effective_number(&collection);
    let reps = select_representatives(&collection);
    write_bimodules(&args.out, &reps, None)?;
    write_summary(&args.out, "filter", 0, workers, None, started, &[&args.out])?;
    println!(
        "filter: {} -> {} representatives (effective number {:.2})",
        collection.len(),
        reps.len(),
        effective
    );
    Ok(())
}
