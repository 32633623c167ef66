//! `nssbm` command-line driver: simulate, fit, eval, summarize.
//!
//! Every command writes a manifest (`manifest.json`, or `summary_manifest.json`
//! for summarize) next to its outputs with the resolved parameters and SHA-256
//! digests of its inputs. Outputs contain no timestamps, so a fixed seed and
//! fixed inputs give identical bytes.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::greedy::{greedy_fit, FitResult, MoveKind, SearchConfig, TraceStep};
use crate::icl::{self, Hyperparameters, IclValue};
use crate::ingest::{self, BinningSpec};
use crate::metrics::adjusted_rand_index;
use crate::simulate::{self, GenerativeSpec, RateGrid};
use crate::tensor::{build_tensor, InteractionTensor, Mode, Partition};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "NSSBM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "nssbm", version, about = "Non-stationary stochastic block model clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset with additive or explicit block rates.
    Simulate(SimulateArgs),
    /// Fit node and time clusters by greedy ICL maximization.
    Fit(FitArgs),
    /// Adjusted Rand index of predicted vs true labels, printed as JSON.
    Eval(EvalArgs),
    /// Export plot-ready CSV tables from a fit.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Directed,
    Undirected,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Directed => Mode::Directed,
            ModeArg::Undirected => Mode::Undirected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// Raw `t i j` contact log (csv if the first data line is the CSV header).
    Auto,
    Raw,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub nodes: usize,
    #[arg(long)]
    pub bins: usize,
    /// Number of node clusters.
    #[arg(long)]
    pub k: usize,
    /// Number of time clusters.
    #[arg(long)]
    pub d: usize,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub s1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub s2: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub s3: Option<Vec<f64>>,
    /// JSON file with a nested `[k][g][d]` rate array (instead of --s1/--s2/--s3).
    #[arg(long, conflicts_with_all = ["s1", "s2", "s3"])]
    pub rates_file: Option<PathBuf>,
    /// Node label weights (default uniform).
    #[arg(long, value_delimiter = ',')]
    pub node_weights: Option<Vec<f64>>,
    /// Time label weights (default uniform).
    #[arg(long, value_delimiter = ',')]
    pub time_weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, value_enum, default_value = "directed")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Raw contact log or pre-binned `person_a,person_b,bin,count` CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: InputFormat,
    /// Truth file from `simulate`; supplies mode and dimensions for CSV input.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Tensor mode (default: undirected, or the truth file's mode).
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Number of nodes for CSV input (default: max id + 1).
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Number of bins (raw default 96, CSV default max bin + 1).
    #[arg(long)]
    pub num_bins: Option<usize>,
    /// Bin width in seconds for raw logs.
    #[arg(long, default_value_t = 900)]
    pub bin_width: i64,
    /// Timestamp at which bin 0 starts, for raw logs.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub origin: i64,
    /// Fail on raw events outside the binning window instead of dropping them.
    #[arg(long)]
    pub strict_range: bool,
    #[arg(long, default_value_t = 10)]
    pub kmax: usize,
    #[arg(long, default_value_t = 10)]
    pub dmax: usize,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Bin width used in the rate model (default: the truth file's, else 1).
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 100)]
    pub max_sweeps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// JSON with `node_labels` and `time_labels` (e.g. fit.json).
    #[arg(long)]
    pub pred: PathBuf,
    /// JSON with `node_labels` and `time_labels` (e.g. truth.json).
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Contents of `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub num_nodes: usize,
    pub num_bins: usize,
    pub mode: Mode,
    pub delta: f64,
    pub seed: u64,
    pub node_weights: Vec<f64>,
    pub time_weights: Vec<f64>,
    pub rates: Vec<Vec<Vec<f64>>>,
    pub node_labels: Vec<usize>,
    pub time_labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub k: usize,
    pub g: usize,
    pub d: usize,
    #[serde(rename = "S")]
    pub s: u64,
    #[serde(rename = "R")]
    pub r: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub accepted: usize,
    pub node_moves: usize,
    pub time_moves: usize,
    pub node_merges: usize,
    pub time_merges: usize,
}

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub format_version: u32,
    pub mode: Mode,
    pub num_nodes: usize,
    pub num_bins: usize,
    pub total_count: u64,
    pub hyperparameters: Hyperparameters,
    pub search: SearchConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub binning: Option<BinningSpec>,
    pub k: usize,
    pub d: usize,
    pub icl: IclValue,
    pub node_labels: Vec<usize>,
    pub time_labels: Vec<usize>,
    /// Raw person ids by dense index, for raw-log input.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub node_ids: Option<Vec<u64>>,
    pub bin_totals: Vec<u64>,
    /// Pooled interaction rate of each time cluster.
    pub time_cluster_intensity: Vec<f64>,
    /// Free blocks only (`k <= g` when undirected).
    pub blocks: Vec<BlockRow>,
    pub restart_id: usize,
    pub sweeps: usize,
    pub trace_summary: TraceSummary,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct LabelFile {
    node_labels: Vec<usize>,
    time_labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ari_nodes: f64,
    pub ari_time: f64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Fit(args) => cmd_fit(&args).map(|_| ()),
        Command::Eval(args) => {
            let report = cmd_eval(&args)?;
            println!("{}", serde_json::to_string(&report)?);
            Ok(())
        }
        Command::Summarize(args) => cmd_summarize(&args),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn write_manifest(
    path: &Path,
    command: &str,
    seed: Option<u64>,
    parameters: &impl Serialize,
    inputs: &[&Path],
    outputs: &[&str],
) -> Result<()> {
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        seed,
        parameters: serde_json::to_value(parameters)?,
        inputs: inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<_>>()?,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    write_json(path, &manifest)
}

fn resolve_rates(args: &SimulateArgs) -> Result<RateGrid> {
    let grid = if let Some(path) = &args.rates_file {
        let nested: Vec<Vec<Vec<f64>>> = read_json(path)?;
        let k = nested.len();
        let d = nested.first().and_then(|r| r.first()).map_or(0, Vec::len);
        ensure!(
            nested.iter().all(|r| r.len() == k && r.iter().all(|c| c.len() == d)),
            "rates file must hold a K x K x D array"
        );
        RateGrid::new(k, d, nested.into_iter().flatten().flatten().collect())?
    } else {
        match (&args.s1, &args.s2, &args.s3) {
            (Some(s1), Some(s2), Some(s3)) => simulate::additive_rates(s1, s2, s3)?,
            _ => bail!("give either --s1, --s2 and --s3 or --rates-file"),
        }
    };
    ensure!(
        grid.k == args.k && grid.d == args.d,
        "rates describe K={}, D={} but --k {} --d {} was requested",
        grid.k,
        grid.d,
        args.k,
        args.d
    );
    Ok(grid)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    ensure!(args.nodes > 0 && args.bins > 0, "--nodes and --bins must be positive");
    let rates = resolve_rates(args)?;
    let spec = GenerativeSpec {
        node_weights: args
            .node_weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / args.k as f64; args.k]),
        time_weights: args
            .time_weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / args.d as f64; args.d]),
        delta: args.delta,
        mode: args.mode.into(),
        ..GenerativeSpec::uniform(args.nodes, args.bins, rates, args.seed)
    };
    let sim = simulate::simulate(&spec)?;
    fs::create_dir_all(&args.out)?;

    let events = File::create(args.out.join("events.csv"))?;
    ingest::write_prebinned_csv(BufWriter::new(events), &sim.tensor)?;
    let truth = TruthFile {
        num_nodes: spec.num_nodes,
        num_bins: spec.num_bins,
        mode: spec.mode,
        delta: spec.delta,
        seed: spec.seed,
        node_weights: spec.node_weights.clone(),
        time_weights: spec.time_weights.clone(),
        rates: spec.rates.to_nested(),
        node_labels: sim.node_labels,
        time_labels: sim.time_labels,
    };
    write_json(&args.out.join("truth.json"), &truth)?;
    let mut inputs: Vec<&Path> = Vec::new();
    if let Some(p) = &args.rates_file {
        inputs.push(p);
    }
    write_manifest(
        &args.out.join("manifest.json"),
        "simulate",
        Some(args.seed),
        args,
        &inputs,
        &["events.csv", "truth.json"],
    )?;
    eprintln!(
        "simulated N={} U={} K={} D={} mode={} total_count={}",
        spec.num_nodes,
        spec.num_bins,
        spec.rates.k,
        spec.rates.d,
        spec.mode,
        sim.tensor.total_count()
    );
    Ok(())
}

fn detect_csv(path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    Ok(first.is_some_and(|l| l.starts_with("person_a")))
}

struct LoadedInput {
    tensor: InteractionTensor,
    node_ids: Option<Vec<u64>>,
    binning: Option<BinningSpec>,
    node_map: Option<ingest::NodeMap>,
}

fn load_input(args: &FitArgs, truth: Option<&TruthFile>) -> Result<LoadedInput> {
    let is_csv = match args.format {
        InputFormat::Csv => true,
        InputFormat::Raw => false,
        InputFormat::Auto => detect_csv(&args.input)?,
    };
    let mode: Mode = args
        .mode
        .map(Mode::from)
        .or(truth.map(|t| t.mode))
        .unwrap_or(Mode::Undirected);
    if is_csv {
        let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
        let records = ingest::read_prebinned_csv(BufReader::new(file))?;
        let num_nodes = args
            .nodes
            .or(truth.map(|t| t.num_nodes))
            .unwrap_or_else(|| records.iter().map(|r| r.source.max(r.target) + 1).max().unwrap_or(1));
        let num_bins = args
            .num_bins
            .or(truth.map(|t| t.num_bins))
            .unwrap_or_else(|| records.iter().map(|r| r.bin + 1).max().unwrap_or(1));
        let tensor = build_tensor(&records, num_nodes, num_bins, mode)
            .with_context(|| format!("building tensor from {}", args.input.display()))?;
        Ok(LoadedInput {
            tensor,
            node_ids: None,
            binning: None,
            node_map: None,
        })
    } else {
        ensure!(
            mode == Mode::Undirected,
            "raw contact logs are undirected; --mode directed needs pre-binned CSV input"
        );
        let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
        let log = ingest::parse_contact_log(BufReader::new(file))
            .with_context(|| format!("parsing {}", args.input.display()))?;
        let binning = BinningSpec {
            origin: args.origin,
            bin_width: args.bin_width,
            num_bins: args.num_bins.unwrap_or(96),
            drop_out_of_range: !args.strict_range,
        };
        let tensor = log.to_tensor(&binning)?;
        Ok(LoadedInput {
            tensor,
            node_ids: Some(log.node_map.raw_ids().to_vec()),
            binning: Some(binning),
            node_map: Some(log.node_map),
        })
    }
}

fn trace_summary(trace: &[TraceStep]) -> TraceSummary {
    let mut s = TraceSummary {
        accepted: trace.len(),
        ..Default::default()
    };
    for step in trace {
        match step.kind {
            MoveKind::NodeMove => s.node_moves += 1,
            MoveKind::TimeMove => s.time_moves += 1,
            MoveKind::NodeMerge => s.node_merges += 1,
            MoveKind::TimeMerge => s.time_merges += 1,
        }
    }
    s
}

fn block_rows(fit: &FitResult) -> Vec<BlockRow> {
    let mut rows = Vec::new();
    for k in 0..fit.k {
        for g in 0..fit.k {
            if !fit.stats.is_free_block(k, g) {
                continue;
            }
            for d in 0..fit.d {
                rows.push(BlockRow {
                    k,
                    g,
                    d,
                    s: fit.stats.s(k, g, d),
                    r: fit.stats.r(k, g, d),
                    rate: fit.rates.get(k, g, d),
                });
            }
        }
    }
    rows
}

/// Runs the fit, writes `fit.json` and the manifest, and returns the fit file.
pub fn cmd_fit(args: &FitArgs) -> Result<FitFile> {
    let truth: Option<TruthFile> = args.truth.as_deref().map(read_json).transpose()?;
    let input = load_input(args, truth.as_ref())?;
    let tensor = &input.tensor;
    let h = Hyperparameters {
        a: args.a,
        b: args.b,
        alpha: args.alpha,
        gamma: args.gamma,
        delta: args.delta.or(truth.as_ref().map(|t| t.delta)).unwrap_or(1.0),
    };
    let cfg = SearchConfig {
        k_max: args.kmax.min(tensor.num_nodes()),
        d_max: args.dmax.min(tensor.num_bins()),
        max_sweeps: args.max_sweeps,
        num_restarts: args.restarts,
        seed: args.seed,
        ..SearchConfig::default()
    };
    let fit = greedy_fit(tensor, &h, &cfg)?;

    let fresh = icl::icl(tensor, &fit.node_partition, &fit.time_partition, &h)?;
    ensure!(
        (fresh.total - fit.icl.total).abs() <= 1e-6,
        "ICL revalidation failed: reported {} but recomputed {}",
        fit.icl.total,
        fresh.total
    );

    let file = FitFile {
        format_version: 1,
        mode: tensor.mode(),
        num_nodes: tensor.num_nodes(),
        num_bins: tensor.num_bins(),
        total_count: tensor.total_count(),
        hyperparameters: h,
        search: cfg,
        binning: input.binning,
        k: fit.k,
        d: fit.d,
        icl: fit.icl,
        node_labels: fit.node_partition.labels().to_vec(),
        time_labels: fit.time_partition.labels().to_vec(),
        node_ids: input.node_ids,
        bin_totals: tensor.bin_totals(),
        time_cluster_intensity: fit.time_cluster_intensity(&h),
        blocks: block_rows(&fit),
        restart_id: fit.restart_id,
        sweeps: fit.sweeps,
        trace_summary: trace_summary(&fit.trace),
        trace: fit.trace.clone(),
    };

    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("fit.json"), &file)?;
    let mut outputs = vec!["fit.json"];
    if let Some(map) = &input.node_map {
        map.write_csv(BufWriter::new(File::create(args.out.join("node_map.csv"))?))?;
        outputs.push("node_map.csv");
    }
    let mut inputs: Vec<&Path> = vec![&args.input];
    if let Some(t) = &args.truth {
        inputs.push(t);
    }
    write_manifest(
        &args.out.join("manifest.json"),
        "fit",
        Some(args.seed),
        args,
        &inputs,
        &outputs,
    )?;
    println!(
        "K={} D={} ICL={:.6} (emission {:.6}, labels {:.6}) restart={} sweeps={}",
        file.k, file.d, file.icl.total, file.icl.emission_term, file.icl.label_term, file.restart_id, file.sweeps
    );
    Ok(file)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let pred: LabelFile = read_json(&args.pred)?;
    let truth: LabelFile = read_json(&args.truth)?;
    let ari_nodes = adjusted_rand_index(&pred.node_labels, &truth.node_labels).context("node labels")?;
    let ari_time = adjusted_rand_index(&pred.time_labels, &truth.time_labels).context("time labels")?;
    Ok(EvalReport { ari_nodes, ari_time })
}

pub fn cmd_summarize(args: &SummarizeArgs) -> Result<()> {
    let fit: FitFile = read_json(&args.fit)?;
    ensure!(
        fit.time_labels.len() == fit.num_bins && fit.bin_totals.len() == fit.num_bins,
        "fit file has inconsistent bin fields"
    );
    ensure!(
        fit.node_labels.len() == fit.num_nodes,
        "fit file has inconsistent node fields"
    );
    // rejects label vectors with gaps
    Partition::new(fit.node_labels.clone())?;
    Partition::new(fit.time_labels.clone())?;
    fs::create_dir_all(&args.out)?;

    let mut w = csv::Writer::from_path(args.out.join("block_rates.csv"))?;
    for row in &fit.blocks {
        w.serialize(row)?;
    }
    if fit.blocks.is_empty() {
        w.write_record(["k", "g", "d", "S", "R", "rate"])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(args.out.join("time_clusters.csv"))?;
    w.write_record(["bin", "cluster", "total"])?;
    for (bin, (&cluster, &total)) in fit.time_labels.iter().zip(&fit.bin_totals).enumerate() {
        w.write_record([bin.to_string(), cluster.to_string(), total.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(args.out.join("node_clusters.csv"))?;
    w.write_record(["node", "raw_id", "cluster"])?;
    for (node, &cluster) in fit.node_labels.iter().enumerate() {
        let raw = fit
            .node_ids
            .as_ref()
            .and_then(|ids| ids.get(node))
            .map_or_else(|| node.to_string(), u64::to_string);
        w.write_record([node.to_string(), raw, cluster.to_string()])?;
    }
    w.flush()?;

    // separate name so summarizing into the fit directory keeps the fit manifest
    write_manifest(
        &args.out.join("summary_manifest.json"),
        "summarize",
        None,
        args,
        &[&args.fit],
        &["block_rates.csv", "time_clusters.csv", "node_clusters.csv"],
    )?;
    Ok(())
}
