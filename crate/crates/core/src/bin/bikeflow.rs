use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bikeflow::analytics::{community_graph, interaction_table, self_containment};
use bikeflow::baselines::{greedy_modularity_with, louvain, modularity};
use bikeflow::compare::compare_partitions;
use bikeflow::dynamics::hourly_communities;
use bikeflow::flow::{DEFAULT_TAU, DEFAULT_TOL, DEFAULT_MAX_ITER};
use bikeflow::ingest::{clean_trips, parse_trips, write_trips, IngestConfig};
use bikeflow::manifest::{RunManifest, MANIFEST_FILE};
use bikeflow::network::{build_network, read_stations, write_stations};
use bikeflow::output::{fmt_sig, OutputSet};
use bikeflow::{
    codelength, infomap, Error, FlowModel, FlowNetwork, FlowOptions, FlowState, OptimizationResult,
    OptimizerConfig, Partition, Result,
};

#[derive(Parser)]
#[command(name = "bikeflow", version, about = "Flow-based community detection for bike-share trips")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean raw trip CSVs and build the station OD network.
    Ingest(IngestArgs),
    /// Detect communities on an edge list.
    Detect(DetectArgs),
    /// Run every method on one network and compare the partitions.
    Compare(CompareArgs),
    /// Interaction table and community network for a partition.
    Report(ReportArgs),
    /// Per-hour communities and the station by hour assignment matrix.
    Dynamics(DynamicsArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Trip CSV files, read in the order given.
    #[arg(long, required = true, num_args = 1..)]
    trips: Vec<PathBuf>,
    #[arg(long)]
    stations: PathBuf,
    /// TOML file with repair station ids, weekend handling and column names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct FlowArgs {
    #[arg(long, default_value_t = FlowModel::Empirical)]
    flow_model: FlowModel,
    /// Teleportation probability for the random-walk model.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
}

impl FlowArgs {
    fn options(&self) -> FlowOptions {
        FlowOptions {
            model: self.flow_model,
            tau: self.tau,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            self_loops: true,
        }
    }
}

#[derive(Args, Clone)]
struct SearchArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
}

impl SearchArgs {
    fn config(&self) -> OptimizerConfig {
        OptimizerConfig {
            seed: self.seed,
            trials: self.trials,
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Args)]
struct NetworkArgs {
    /// Edge list with columns origin_id,destination_id,weight.
    #[arg(long)]
    network: PathBuf,
    /// Station metadata; defines the node universe when given.
    #[arg(long)]
    stations: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Infomap,
    Louvain,
    Greedy,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Infomap => "infomap",
            Method::Louvain => "louvain",
            Method::Greedy => "greedy",
        }
    }
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    input: NetworkArgs,
    #[arg(long, value_enum, default_value_t = Method::Infomap)]
    method: Method,
    #[command(flatten)]
    flow: FlowArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Modularity resolution for louvain and greedy.
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: NetworkArgs,
    /// Reference partition; defaults to the infomap result.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[command(flatten)]
    flow: FlowArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    partition: PathBuf,
    /// Station metadata with coordinates for the centroids.
    #[arg(long)]
    stations: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DynamicsArgs {
    /// Cleaned trip CSV.
    #[arg(long)]
    trips: PathBuf,
    #[arg(long)]
    stations: PathBuf,
    /// Cleaning config, applied again to the trips.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Minimum trip ends for a station to take part in an hour.
    #[arg(long, default_value_t = 1)]
    min_flow: u64,
    #[command(flatten)]
    flow: FlowArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn load_network(args: &NetworkArgs) -> Result<FlowNetwork> {
    let stations = args
        .stations
        .as_deref()
        .map(|p| read_stations(open(p)?))
        .transpose()?;
    FlowNetwork::read_edge_list(open(&args.network)?, stations)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Rounds to the printed precision so JSON sidecars are digest-stable.
fn round_sig(x: f64) -> f64 {
    fmt_sig(x).parse().unwrap_or(x)
}

fn commit(mut files: OutputSet, mut manifest: RunManifest, out: &Path) -> Result<()> {
    manifest.set_outputs(files.digests());
    files.add(MANIFEST_FILE, manifest.to_json()?);
    files.commit(out)?;
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let mut manifest = RunManifest::new("ingest");
    let config = match &args.config {
        Some(p) => {
            manifest.add_input(p)?;
            IngestConfig::load(p)?
        }
        None => IngestConfig::default(),
    };
    manifest.add_input(&args.stations)?;
    let stations = read_stations(open(&args.stations)?)?;
    let mut raw = Vec::new();
    let mut row_errors = Vec::new();
    for path in &args.trips {
        manifest.add_input(path)?;
        let report = manifest.time("parse", || parse_trips(open(path)?, &config.columns))?;
        raw.extend(report.trips);
        row_errors.extend(report.errors.into_iter().map(|e| (path.display().to_string(), e)));
    }
    let (trips, stats) = manifest.time("clean", || {
        clean_trips(raw, &config.repair_station_ids, config.drop_weekends)
    });
    let net = manifest.time("network", || build_network(&trips, &stations))?;

    let mut files = OutputSet::new();
    files.add_with("trips_clean.csv", |b| write_trips(b, &trips, &config.columns))?;
    files.add_with("edges.csv", |b| net.write_edge_list(b))?;
    files.add_with("stations.csv", |b| write_stations(b, &stations))?;
    files.add("cleaning_stats.json", json_bytes(&stats)?);
    files.add_with("row_errors.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["file", "line", "message"])?;
        for (file, e) in &row_errors {
            w.write_record([file.as_str(), &e.line.to_string(), &e.message])?;
        }
        w.flush().map_err(|e| Error::Serialize(e.to_string()))
    })?;
    commit(files, manifest, &args.out)?;

    println!("read        {}", stats.total_read);
    println!("repair      {}", stats.dropped_repair);
    println!("no dest/neg {}", stats.dropped_negative_or_no_destination);
    println!("no origin   {}", stats.dropped_no_origin);
    println!("no bike id  {}", stats.dropped_no_bike_id);
    println!("weekend     {}", stats.dropped_weekend);
    println!("retained    {}", stats.retained);
    println!("malformed rows skipped: {}", row_errors.len());
    println!(
        "stations: {} active of {} in metadata",
        net.active_node_count(),
        stations.len()
    );
    Ok(())
}

struct Detection {
    result: OptimizationResult,
    codelength: Option<f64>,
    modularity: f64,
}

fn run_method(
    method: Method,
    net: &FlowNetwork,
    flow: &FlowState,
    search: &SearchArgs,
    resolution: f64,
) -> Result<Detection> {
    let result = match method {
        Method::Infomap => infomap(flow, net, &search.config())?,
        Method::Louvain => louvain(net, search.seed, resolution)?,
        Method::Greedy => greedy_modularity_with(net, resolution)?,
    };
    // Modularity methods may leave a positive-flow node unassigned only on an
    // empty network; the codelength is then undefined.
    let codelength = codelength(flow, &result.partition).ok();
    let modularity = if net.total_weight() > 0 {
        modularity(net, &result.partition, resolution)?.q
    } else {
        0.0
    };
    Ok(Detection {
        result,
        codelength,
        modularity,
    })
}

#[derive(Serialize)]
struct RunRecord {
    method: Method,
    flow_model: String,
    tau: f64,
    seed: u64,
    trials: usize,
    resolution: f64,
    modules: usize,
    unassigned: usize,
    codelength: Option<f64>,
    modularity: f64,
    sweeps: usize,
    trial_scores: Vec<f64>,
}

fn cmd_detect(args: DetectArgs) -> Result<()> {
    let mut manifest = RunManifest::new("detect");
    manifest.add_input(&args.input.network)?;
    if let Some(p) = &args.input.stations {
        manifest.add_input(p)?;
    }
    let net = load_network(&args.input)?;
    let opts = args.flow.options();
    let flow = manifest.time("flow", || opts.solve(&net))?;
    let det = manifest.time("detect", || {
        run_method(args.method, &net, &flow, &args.search, args.resolution)
    })?;
    manifest.config.method = Some(args.method.name().into());
    manifest.config.flow_model = Some(opts.model.to_string());
    manifest.config.tau = Some(opts.tau);
    manifest.config.seed = Some(args.search.seed);
    manifest.config.trials = Some(args.search.trials);
    manifest.config.resolution = Some(args.resolution);

    let part = &det.result.partition;
    let record = RunRecord {
        method: args.method,
        flow_model: opts.model.to_string(),
        tau: opts.tau,
        seed: args.search.seed,
        trials: args.search.trials,
        resolution: args.resolution,
        modules: part.module_count(),
        unassigned: part.len() - part.assigned_count(),
        codelength: det.codelength.map(round_sig),
        modularity: round_sig(det.modularity),
        sweeps: det.result.sweeps_run,
        trial_scores: det.result.trial_scores.iter().copied().map(round_sig).collect(),
    };
    let mut files = OutputSet::new();
    files.add_with("partition.csv", |b| part.write_csv(&net, b))?;
    files.add_with("flow.csv", |b| flow.write_visit_csv(&net, b))?;
    files.add("run.json", json_bytes(&record)?);
    commit(files, manifest, &args.out)?;

    println!("method      {}", args.method.name());
    println!("modules     {}", record.modules);
    if let Some(l) = det.codelength {
        println!("codelength  {} bits", fmt_sig(l));
    }
    println!("modularity  {}", fmt_sig(det.modularity));
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let mut manifest = RunManifest::new("compare");
    manifest.add_input(&args.input.network)?;
    if let Some(p) = &args.input.stations {
        manifest.add_input(p)?;
    }
    let net = load_network(&args.input)?;
    let reference = match &args.reference {
        Some(p) => {
            manifest.add_input(p)?;
            Some(Partition::read_csv(&net, open(p)?)?)
        }
        None => None,
    };
    let opts = args.flow.options();
    let flow = manifest.time("flow", || opts.solve(&net))?;
    let methods = [Method::Infomap, Method::Louvain, Method::Greedy];
    let mut runs = Vec::new();
    for m in methods {
        let det = manifest.time(m.name(), || {
            run_method(m, &net, &flow, &args.search, args.resolution)
        })?;
        runs.push((m, det));
    }
    manifest.config.flow_model = Some(opts.model.to_string());
    manifest.config.tau = Some(opts.tau);
    manifest.config.seed = Some(args.search.seed);
    manifest.config.trials = Some(args.search.trials);
    manifest.config.resolution = Some(args.resolution);

    let reference = reference.unwrap_or_else(|| runs[0].1.result.partition.clone());
    let mut files = OutputSet::new();
    files.add_with("comparison.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["method", "modules", "codelength", "modularity", "nmi", "ari"])?;
        for (m, det) in &runs {
            let s = compare_partitions(&det.result.partition, &reference)?;
            w.write_record([
                m.name().to_string(),
                det.result.partition.module_count().to_string(),
                det.codelength.map(fmt_sig).unwrap_or_default(),
                fmt_sig(det.modularity),
                fmt_sig(s.nmi),
                fmt_sig(s.ari),
            ])?;
        }
        w.flush().map_err(|e| Error::Serialize(e.to_string()))
    })?;
    files.add_with("pairwise.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["method_a", "method_b", "nmi", "ari"])?;
        for (i, (ma, a)) in runs.iter().enumerate() {
            for (mb, b) in &runs[i + 1..] {
                let s = compare_partitions(&a.result.partition, &b.result.partition)?;
                w.write_record([ma.name(), mb.name(), &fmt_sig(s.nmi), &fmt_sig(s.ari)])?;
            }
        }
        w.flush().map_err(|e| Error::Serialize(e.to_string()))
    })?;
    for (m, det) in &runs {
        files.add_with(format!("partition_{}.csv", m.name()), |b| {
            det.result.partition.write_csv(&net, b)
        })?;
    }
    commit(files, manifest, &args.out)?;
    for (m, det) in &runs {
        println!(
            "{:<8} modules {:>4}  codelength {:>14}  modularity {}",
            m.name(),
            det.result.partition.module_count(),
            det.codelength.map(fmt_sig).unwrap_or_default(),
            fmt_sig(det.modularity)
        );
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut manifest = RunManifest::new("report");
    for p in [&args.network, &args.partition, &args.stations] {
        manifest.add_input(p)?;
    }
    let stations = read_stations(open(&args.stations)?)?;
    let net = FlowNetwork::read_edge_list(open(&args.network)?, Some(stations))?;
    let part = Partition::read_csv(&net, open(&args.partition)?)?;
    let table = manifest.time("table", || interaction_table(&net, &part))?;
    let graph = manifest.time("graph", || community_graph(&net, &part))?;

    let mut files = OutputSet::new();
    files.add_with("table.csv", |b| table.write_csv(b))?;
    files.add_with("interaction_matrix.csv", |b| table.write_matrix_csv(b))?;
    files.add_with("community_graph.geojson", |b| graph.write_geojson(b))?;
    files.add_with("community_nodes.csv", |b| graph.write_nodes_csv(b))?;
    files.add_with("community_edges.csv", |b| graph.write_edges_csv(b))?;
    commit(files, manifest, &args.out)?;

    println!("modules           {}", table.module_count());
    println!("total trips       {}", table.total_trips);
    if table.total_trips > 0 {
        println!("self-containment  {}", fmt_sig(self_containment(&table)?));
    }
    let missing = graph.missing_centroids();
    if !missing.is_empty() {
        eprintln!("warning: modules without located stations: {missing:?}");
    }
    Ok(())
}

fn cmd_dynamics(args: DynamicsArgs) -> Result<()> {
    let mut manifest = RunManifest::new("dynamics");
    let config = match &args.config {
        Some(p) => {
            manifest.add_input(p)?;
            IngestConfig::load(p)?
        }
        None => IngestConfig::default(),
    };
    manifest.add_input(&args.trips)?;
    manifest.add_input(&args.stations)?;
    let stations = read_stations(open(&args.stations)?)?;
    let report = parse_trips(open(&args.trips)?, &config.columns)?;
    if !report.errors.is_empty() {
        eprintln!("warning: skipped {} malformed rows", report.errors.len());
    }
    let (trips, _) = clean_trips(report.trips, &config.repair_station_ids, config.drop_weekends);
    let cfg = args.search.config();
    let opts = args.flow.options();
    let hourly = manifest.time("detect", || {
        hourly_communities(&trips, &stations, &cfg, &opts, args.min_flow)
    })?;
    manifest.config.flow_model = Some(opts.model.to_string());
    manifest.config.tau = Some(opts.tau);
    manifest.config.seed = Some(cfg.seed);
    manifest.config.trials = Some(cfg.trials);
    manifest.config.min_flow = Some(args.min_flow);

    let mut files = OutputSet::new();
    files.add_with("hourly_matrix.csv", |b| hourly.write_matrix_csv(b))?;
    files.add_with("hourly_summary.csv", |b| hourly.write_summary_csv(b))?;
    commit(files, manifest, &args.out)?;
    for c in &hourly.columns {
        println!("h{:02}  trips {:>8}  modules {:>4}", c.hour, c.trips, c.module_count());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Report(a) => cmd_report(a),
        Command::Dynamics(a) => cmd_dynamics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
