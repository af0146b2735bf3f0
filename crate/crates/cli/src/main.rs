//! `qrec`: ingest triplet files into binary stores, run singular value
//! estimation, threshold projection and recommendation against them, and
//! run seeded experiments.
//!
//! Exit codes: 0 success, 1 error, 2 usage error, 3 cold-start user,
//! 4 projection empty, 5 an experiment invariant failed.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use qrec_core::experiment::{self, ExperimentConfig};
use qrec_core::qproject::Projector;
use qrec_core::qsim::{SveEngine, SvePath};
use qrec_core::recsys::recommendation_sigma;
use qrec_core::rng::stream;
use qrec_core::sample_tree::parse_triplets;
use qrec_core::subsample::DEFAULT_KAPPA;
use qrec_core::{Error, MatrixStore, ProjectionParams, Recommender};

const EXIT_COLD_START: u8 = 3;
const EXIT_PROJECTION_EMPTY: u8 = 4;
const EXIT_INVARIANT: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "qrec", version, about = "Quantum recommendation system simulator")]
struct Cli {
    /// Master seed; every random draw comes from a named stream of it.
    #[arg(long, env = "QREC_SEED", global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read `i,j,value` lines and write a binary store.
    Ingest(IngestArgs),
    /// Estimate the singular components of a vector; prints CSV.
    Sve(SveArgs),
    /// Project a vector onto the right singular vectors above a threshold.
    Project(ProjectArgs),
    /// Recommend products to a user.
    Recommend(RecommendArgs),
    /// Run an experiment from a JSON config and write the report.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Triplet file (`-` for stdin).
    input: PathBuf,
    /// Output store file.
    #[arg(short, long)]
    output: PathBuf,
    /// Row count (default: largest row index + 1).
    #[arg(long)]
    rows: Option<usize>,
    /// Column count (default: largest column index + 1).
    #[arg(long)]
    cols: Option<usize>,
}

#[derive(Args, Debug)]
struct VectorArgs {
    /// Store file written by `ingest`.
    #[arg(long)]
    store: PathBuf,
    /// Input vector as comma-separated values.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "row", required_unless_present = "row")]
    vector: Option<String>,
    /// Use row `i` of the stored matrix as the input vector.
    #[arg(long)]
    row: Option<usize>,
    /// Simulation path.
    #[arg(long, default_value = "exact", value_parser = parse_path)]
    path: SvePath,
}

#[derive(Args, Debug)]
struct SveArgs {
    #[command(flatten)]
    input: VectorArgs,
    /// Precision ε relative to ‖A‖_F.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[command(flatten)]
    input: VectorArgs,
    /// Threshold σ.
    #[arg(long)]
    sigma: f64,
    /// Band fraction κ.
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    /// Trial cap (default: ⌈(ln n + 7)/β²⌉).
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Number of standard-basis measurements of the output state to print.
    #[arg(long, default_value_t = 0)]
    samples: usize,
}

#[derive(Args, Debug)]
struct RecommendArgs {
    /// Store of the (subsampled) preference matrix.
    #[arg(long)]
    store: PathBuf,
    /// User (row) index.
    #[arg(long)]
    user: usize,
    /// Threshold σ; if absent it is √(ε²p/2k)·‖T̂‖_F from --rank, --epsilon, --p.
    #[arg(long)]
    sigma: Option<f64>,
    /// Target rank k.
    #[arg(long, default_value_t = 4)]
    rank: usize,
    /// Approximation parameter ε.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Subsampling probability the store was built with.
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Band fraction κ.
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(long, default_value = "exact", value_parser = parse_path)]
    path: SvePath,
    /// Number of recommendations to draw.
    #[arg(long, default_value_t = 1)]
    count: usize,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON config; omitted fields take their defaults.
    config: PathBuf,
    /// Report destination (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-user CSV destination.
    #[arg(long)]
    users_csv: Option<PathBuf>,
    /// p-sweep CSV destination.
    #[arg(long)]
    sweep_csv: Option<PathBuf>,
}

fn parse_path(s: &str) -> Result<SvePath, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            let code = match err.downcast_ref::<Error>() {
                Some(Error::ColdStart(_)) => EXIT_COLD_START,
                Some(Error::ProjectionEmpty { .. }) => EXIT_PROJECTION_EMPTY,
                _ => 1,
            };
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let seed = cli.seed;
    match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Sve(args) => sve(args, seed.unwrap_or(0)),
        Command::Project(args) => project(args, seed.unwrap_or(0)),
        Command::Recommend(args) => recommend(args, seed.unwrap_or(0)),
        Command::Experiment(args) => run_experiment(args, seed),
    }
}

fn load_store(path: &Path) -> anyhow::Result<MatrixStore> {
    let bytes = fs::read(path).with_context(|| format!("reading store {}", path.display()))?;
    Ok(MatrixStore::deserialize(&bytes).with_context(|| format!("decoding store {}", path.display()))?)
}

fn ingest(args: IngestArgs) -> anyhow::Result<ExitCode> {
    let triplets = if args.input.as_os_str() == "-" {
        parse_triplets(std::io::stdin().lock())?
    } else {
        let file = fs::File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
        parse_triplets(BufReader::new(file)).with_context(|| format!("parsing {}", args.input.display()))?
    };
    let store = MatrixStore::from_triplets(&triplets, args.rows, args.cols)?;
    fs::write(&args.output, store.serialize()).with_context(|| format!("writing {}", args.output.display()))?;
    println!(
        "rows={} cols={} entries={} frobenius={}",
        store.rows(),
        store.cols(),
        store.entry_count(),
        store.frobenius_norm()
    );
    Ok(ExitCode::SUCCESS)
}

fn input_vector(args: &VectorArgs, store: &MatrixStore) -> anyhow::Result<Vec<f64>> {
    let x = match (&args.vector, args.row) {
        (Some(text), _) => text
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| anyhow!("bad vector entry {t:?}: {e}")))
            .collect::<anyhow::Result<Vec<f64>>>()?,
        (None, Some(i)) => store.row_values(i)?,
        (None, None) => bail!("one of --vector or --row is required"),
    };
    if x.len() != store.cols() {
        bail!("vector has {} entries, the store has {} columns", x.len(), store.cols());
    }
    Ok(x)
}

fn sve(args: SveArgs, seed: u64) -> anyhow::Result<ExitCode> {
    let store = load_store(&args.input.store)?;
    let x = input_vector(&args.input, &store)?;
    let engine = SveEngine::new(&store)?;
    let out = engine.sve(&x, args.epsilon, args.input.path, &mut stream(seed, "measurement"))?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "index,alpha_sq,sigma,estimate,bin")?;
    for c in &out.components {
        writeln!(stdout, "{},{},{},{},{}", c.index, c.alpha * c.alpha, c.sigma, c.estimate, c.bin)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn project(args: ProjectArgs, seed: u64) -> anyhow::Result<ExitCode> {
    let store = load_store(&args.input.store)?;
    let x = input_vector(&args.input, &store)?;
    let engine = SveEngine::new(&store)?;
    let mut params = ProjectionParams::new(args.sigma, args.kappa)?;
    if let Some(cap) = args.max_iterations {
        params = params.with_max_iterations(cap);
    }
    let projector = Projector::new(&engine, params, args.input.path)?;
    let outcome = projector.project(&x, &mut stream(seed, "projection"))?;
    let mut rng = stream(seed, "measurement");
    let samples: Vec<usize> = (0..args.samples).map(|_| outcome.sample(&mut rng)).collect();
    let doc = serde_json::json!({
        "outcome": outcome,
        "samples": samples,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(ExitCode::SUCCESS)
}

fn recommend(args: RecommendArgs, seed: u64) -> anyhow::Result<ExitCode> {
    let store = load_store(&args.store)?;
    let sigma = args
        .sigma
        .unwrap_or_else(|| recommendation_sigma(store.frobenius_norm(), args.rank, args.epsilon, args.p));
    let params = ProjectionParams::new(sigma, args.kappa)?;
    let rec = Recommender::new(store, params, args.path)?;
    let mut rng = stream(seed, "projection");
    let prepared = rec.prepare_user(args.user)?;
    let mut stdout = std::io::stdout().lock();
    for _ in 0..args.count {
        let outcome = prepared.run(&mut rng)?;
        let r = Recommender::measure(args.user, &outcome, &mut rng);
        writeln!(
            stdout,
            "user={} product={} iterations={} success_probability={} kept={:?}",
            r.user, r.product, r.iterations, r.success_probability, r.kept
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_experiment(args: ExperimentArgs, seed: Option<u64>) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", args.config.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let report = experiment::run(&config)?;
    let json = report.to_json();
    match &args.output {
        Some(path) => fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    if let Some(path) = &args.users_csv {
        fs::write(path, report.per_user_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.sweep_csv {
        fs::write(path, report.sweep_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    if !report.invariants.all_hold {
        eprintln!("error: experiment invariants failed: {:?}", report.invariants);
        return Ok(ExitCode::from(EXIT_INVARIANT));
    }
    Ok(ExitCode::SUCCESS)
}
