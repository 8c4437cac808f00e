use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use pgtune::bench::{default_ef_grid, eval_graph, repetition_report, EvalReport};
use pgtune::builder::{build_multi, build_single, BuildOptions, BuildReport, BatchSummary, KnngMode};
use pgtune::dataset::{gen_split, io, DistanceCounter, GroundTruth, SyntheticKind, VectorSet, DEFAULT_TRUTH_DEPTH};
use pgtune::graph::ProximityGraph;
use pgtune::params::{BuildParams, IndexKind};
use pgtune::tuner::{tune, GraphEvaluator, ParamSpace, QpsMode, Recommender, TuneConfig, DEFAULT_POOL_SIZE};

#[derive(Parser)]
#[command(name = "pgtune", version, about = "Build, evaluate and tune proximity-graph ANN indexes")]
struct Cli {
    /// Worker threads for parallel sections (ground truth); default: all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic base set (and optionally a query set) as fvecs.
    GenData(GenData),
    /// Brute-force nearest neighbours of each query: ids as ivecs plus a
    /// parallel `.dist.fvecs` file.
    GroundTruth(GroundTruthArgs),
    /// Build one index.
    Build(BuildArgs),
    /// Build several parameter settings of one index kind together.
    BuildMulti(BuildArgs),
    /// Sweep the search beam width and report recall, QPS and distance counts.
    Eval(EvalArgs),
    /// Tune construction parameters for (qps, recall).
    Tune(TuneArgs),
    /// Compare a batch build against building the same settings one by one.
    RepetitionReport(RepetitionArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Uniform,
    Gaussian,
    Clustered,
}

#[derive(Clone, Copy, ValueEnum)]
enum Knng {
    Exact,
    NnDescent,
}

impl From<Knng> for KnngMode {
    fn from(k: Knng) -> Self {
        match k {
            Knng::Exact => KnngMode::Exact,
            Knng::NnDescent => KnngMode::NnDescent,
        }
    }
}

#[derive(Args)]
struct GenData {
    /// Output path of the base set.
    #[arg(long)]
    dataset: PathBuf,
    /// Output path of the query set.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    n_queries: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    kind: Kind,
    /// Cluster count for `--kind clustered`.
    #[arg(long, default_value_t = 16)]
    centers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GroundTruthArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Neighbours per query.
    #[arg(long, default_value_t = DEFAULT_TRUTH_DEPTH)]
    k: usize,
    /// Output ivecs path; distances go next to it as `<stem>.dist.fvecs`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ParamSource {
    /// Parameters as JSON: an object for `build`, an array of objects for
    /// `build-multi` and `repetition-report`.
    #[arg(long, conflicts_with = "param_file")]
    params: Option<String>,
    /// File holding the parameter JSON.
    #[arg(long)]
    param_file: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    index: IndexKind,
    #[command(flatten)]
    source: ParamSource,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// How NSG's initial KNN graph is built.
    #[arg(long, value_enum, default_value = "nn-descent")]
    knng: Knng,
    /// `build`: graph file. `build-multi`: output directory.
    #[arg(long)]
    out: PathBuf,
    /// Disable the shared construction-search distance cache.
    #[arg(long)]
    no_share_search: bool,
    /// Disable reuse of the previous prune result.
    #[arg(long)]
    no_reuse_prune: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    /// Ground-truth ivecs; computed by brute force when absent.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Comma-separated ascending beam widths.
    #[arg(long, value_delimiter = ',')]
    ef_grid: Option<Vec<usize>>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the sweep rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Ground-truth ivecs; computed by brute force when absent.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// hnsw, vamana or nsg.
    #[arg(long, value_parser = parse_kind)]
    index: IndexKind,
    /// Total settings to evaluate.
    #[arg(long, default_value_t = 50)]
    budget: usize,
    /// Settings recommended and built together per round.
    #[arg(long, default_value_t = 10)]
    batch_size: usize,
    /// mehvi or random.
    #[arg(long, value_parser = parse_recommender, default_value = "mehvi")]
    recommender: Recommender,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_delimiter = ',')]
    ef_grid: Option<Vec<usize>>,
    /// Recall at which each graph's qps is read off its sweep.
    #[arg(long, default_value_t = 0.95)]
    target_recall: f64,
    /// wall (measured) or proxy (1e6 / distances per query, deterministic).
    #[arg(long, value_parser = parse_qps_mode, default_value = "wall")]
    qps_mode: QpsMode,
    #[arg(long, value_enum, default_value = "nn-descent")]
    knng: Knng,
    /// JSON search space `{"kind": .., "dims": [{name, lo, hi, step}, ..]}`;
    /// the kind's default space when absent.
    #[arg(long)]
    space_file: Option<PathBuf>,
    /// Candidate pool scored per recommendation round.
    #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
    pool_size: usize,
    /// Output directory for `log.jsonl` and `report.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RepetitionArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    index: IndexKind,
    #[command(flatten)]
    source: ParamSource,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "nn-descent")]
    knng: Knng,
    /// Log every evaluated pair for exact shared-pair ratios (small sets).
    #[arg(long)]
    exact_pairs: bool,
    /// Also build with each sharing mechanism alone.
    #[arg(long)]
    ablation: bool,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<IndexKind, String> {
    s.parse().map_err(|e: pgtune::Error| e.to_string())
}

fn parse_recommender(s: &str) -> Result<Recommender, String> {
    s.parse().map_err(|e: pgtune::Error| e.to_string())
}

fn parse_qps_mode(s: &str) -> Result<QpsMode, String> {
    s.parse().map_err(|e: pgtune::Error| e.to_string())
}

/// Usage errors exit with 2, everything else with 1.
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn input(path: &Path) -> CliResult<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        usage(format!("input file not found: {}", path.display()))
    }
}

fn load_set(path: &Path) -> CliResult<VectorSet> {
    let p = input(path)?;
    Ok(io::load_fvecs(p).with_context(|| format!("reading {}", p.display()))?)
}

fn parse_one(kind: IndexKind, v: Value) -> CliResult<BuildParams> {
    let mut v = v;
    if let Some(obj) = v.as_object_mut() {
        if let Some(tag) = obj.remove("kind") {
            let tagged = tag.as_str().and_then(|t| t.parse::<IndexKind>().ok());
            if tagged != Some(kind) {
                return usage(format!("parameter kind {tag} does not match --index {kind}"));
            }
        }
    }
    let p = BuildParams::from_json_for(kind, v).or_else(|e| usage(format!("malformed {kind} parameters: {e}")))?;
    p.validate().or_else(|e| usage(e.to_string()))?;
    Ok(p)
}

fn read_params(kind: IndexKind, src: &ParamSource, many: bool) -> CliResult<Vec<BuildParams>> {
    let text = match (&src.params, &src.param_file) {
        (Some(s), _) => s.clone(),
        (None, Some(f)) => fs::read_to_string(input(f)?)?,
        (None, None) => return usage("one of --params or --param-file is required"),
    };
    let v: Value = serde_json::from_str(&text).or_else(|e| usage(format!("malformed parameter JSON: {e}")))?;
    match (v, many) {
        (Value::Array(items), true) => {
            if items.is_empty() {
                return usage("parameter array is empty");
            }
            items.into_iter().map(|x| parse_one(kind, x)).collect()
        }
        (v @ Value::Object(_), false) => Ok(vec![parse_one(kind, v)?]),
        (_, true) => usage("expected a JSON array of parameter objects"),
        (_, false) => usage("expected a JSON parameter object"),
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec_pretty(v)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(out: Option<&Path>, v: &impl Serialize) -> CliResult<()> {
    match out {
        Some(p) => write_json(p, v),
        None => {
            let text = serde_json::to_string_pretty(v)?;
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

fn truth_for(path: Option<&Path>, data: &VectorSet, queries: &VectorSet, k: usize) -> CliResult<GroundTruth> {
    match path {
        Some(p) => Ok(GroundTruth::load(input(p)?, None)?),
        None => Ok(GroundTruth::compute(data, queries, k, &DistanceCounter::new())?),
    }
}

fn ef_grid(grid: &Option<Vec<usize>>, k: usize) -> CliResult<Vec<usize>> {
    match grid {
        Some(g) if g.is_empty() => usage("--ef-grid is empty"),
        Some(g) if g.windows(2).any(|w| w[0] >= w[1]) => usage("--ef-grid must be strictly ascending"),
        Some(g) if g[0] < k => usage(format!("--ef-grid starts below k ({k})")),
        Some(g) => Ok(g.clone()),
        None => Ok(default_ef_grid(k)),
    }
}

fn gen_data(a: &GenData) -> CliResult<()> {
    let kind = match a.kind {
        Kind::Uniform => SyntheticKind::Uniform,
        Kind::Gaussian => SyntheticKind::Gaussian,
        Kind::Clustered => SyntheticKind::Clustered { centers: a.centers },
    };
    let nq = if a.queries.is_some() { a.n_queries } else { 1 };
    let (base, queries) = gen_split(a.n, nq, a.dim, a.seed, kind).or_else(|e| usage(e.to_string()))?;
    io::write_fvecs(&a.dataset, &base)?;
    if let Some(q) = &a.queries {
        io::write_fvecs(q, &queries)?;
    }
    Ok(())
}

fn dist_path(ids: &Path) -> PathBuf {
    let stem = ids.file_stem().unwrap_or_default().to_string_lossy();
    ids.with_file_name(format!("{stem}.dist.fvecs"))
}

fn ground_truth(a: &GroundTruthArgs) -> CliResult<()> {
    let data = load_set(&a.dataset)?;
    let queries = load_set(&a.queries)?;
    if a.k == 0 {
        return usage("--k must be positive");
    }
    let gt = GroundTruth::compute(&data, &queries, a.k, &DistanceCounter::new())?;
    gt.save(&a.out, &dist_path(&a.out))?;
    Ok(())
}

fn options(a: &BuildArgs) -> BuildOptions {
    BuildOptions {
        knng: a.knng.into(),
        share_search: !a.no_share_search,
        reuse_prune: !a.no_reuse_prune,
        ..BuildOptions::new(a.seed)
    }
}

fn build(a: &BuildArgs) -> CliResult<()> {
    let data = load_set(&a.dataset)?;
    let params = read_params(a.index, &a.source, false)?;
    let (g, report) = build_single(&data, &params[0], a.seed, a.knng.into())?;
    g.save_with_meta(&a.out, a.seed)?;
    emit(None, &report)
}

#[derive(Serialize)]
struct MultiReport {
    summary: BatchSummary,
    graphs: Vec<String>,
    reports: Vec<BuildReport>,
}

fn build_multi_cmd(a: &BuildArgs) -> CliResult<()> {
    let data = load_set(&a.dataset)?;
    let params = read_params(a.index, &a.source, true)?;
    let batch = build_multi(&data, &params, &options(a))?;
    fs::create_dir_all(&a.out)?;
    let mut names = Vec::new();
    for (i, g) in batch.graphs.iter().enumerate() {
        let name = format!("graph_{i}.pgi");
        g.save_with_meta(&a.out.join(&name), a.seed)?;
        names.push(name);
    }
    let report = MultiReport {
        summary: batch.summary,
        graphs: names,
        reports: batch.reports,
    };
    write_json(&a.out.join("report.json"), &report)?;
    emit(None, &report.summary)
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    let data = load_set(&a.dataset)?;
    let queries = load_set(&a.queries)?;
    let g = ProximityGraph::load(input(&a.graph)?).with_context(|| format!("reading {}", a.graph.display()))?;
    let grid = ef_grid(&a.ef_grid, a.k)?;
    let truth = truth_for(a.truth.as_deref(), &data, &queries, a.k)?;
    let report: EvalReport = eval_graph(&g, &data, &queries, &truth, a.k, &grid)?;
    if let Some(c) = &a.csv {
        report.write_csv(c)?;
    }
    emit(a.out.as_deref(), &report)
}

fn tune_cmd(a: &TuneArgs) -> CliResult<()> {
    if a.batch_size == 0 || a.budget < a.batch_size {
        return usage(format!(
            "--budget ({}) must be at least --batch-size ({}) and the batch size positive",
            a.budget, a.batch_size
        ));
    }
    if !(0.0..=1.0).contains(&a.target_recall) {
        return usage("--target-recall must lie in [0, 1]");
    }
    let space = match &a.space_file {
        Some(f) => {
            let s: ParamSpace = serde_json::from_str(&fs::read_to_string(input(f)?)?)
                .or_else(|e| usage(format!("malformed space file: {e}")))?;
            s.validate().or_else(|e| usage(e.to_string()))?;
            if s.kind != Some(a.index) {
                return usage(format!("space file does not describe {} parameters", a.index));
            }
            s
        }
        None => ParamSpace::default_for(a.index),
    };
    let data = load_set(&a.dataset)?;
    let queries = load_set(&a.queries)?;
    let grid = ef_grid(&a.ef_grid, a.k)?;
    let truth = truth_for(a.truth.as_deref(), &data, &queries, a.k)?;
    fs::create_dir_all(&a.out)?;
    let mut log = BufWriter::new(File::create(a.out.join("log.jsonl"))?);
    let mut evaluator = GraphEvaluator {
        data: &data,
        queries: &queries,
        truth: &truth,
        k: a.k,
        ef_grid: grid,
        target_recall: a.target_recall,
        qps_mode: a.qps_mode,
        build: BuildOptions {
            knng: a.knng.into(),
            ..BuildOptions::new(a.seed)
        },
    };
    let cfg = TuneConfig {
        pool_size: a.pool_size,
        ..TuneConfig::new(a.budget, a.batch_size, a.seed, a.recommender)
    };
    let (_, report) = tune(&space, &mut evaluator, &cfg, |rec| {
        serde_json::to_writer(&mut log, rec)?;
        log.write_all(b"\n")?;
        log.flush()?;
        Ok(())
    })?;
    write_json(&a.out.join("report.json"), &report)?;
    eprintln!(
        "{} observations, {} on the front, estimation {:.1}% of {:.0} ms",
        report.observations,
        report.front.len(),
        100.0 * report.cost.estimate_share,
        report.cost.wall_ms
    );
    Ok(())
}

fn repetition(a: &RepetitionArgs) -> CliResult<()> {
    let data = load_set(&a.dataset)?;
    let params = read_params(a.index, &a.source, true)?;
    if params.len() < 2 {
        return usage("a repetition report needs at least two parameter sets");
    }
    if a.exact_pairs && data.len() > pgtune::bench::EXACT_PAIR_LIMIT {
        return usage(format!(
            "--exact-pairs is limited to {} points",
            pgtune::bench::EXACT_PAIR_LIMIT
        ));
    }
    let r = repetition_report(&data, &params, a.seed, a.knng.into(), a.exact_pairs, a.ablation)?;
    emit(a.out.as_deref(), &r)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return usage("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match &cli.cmd {
        Cmd::GenData(a) => gen_data(a),
        Cmd::GroundTruth(a) => ground_truth(a),
        Cmd::Build(a) => build(a),
        Cmd::BuildMulti(a) => build_multi_cmd(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Tune(a) => tune_cmd(a),
        Cmd::RepetitionReport(a) => repetition(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
