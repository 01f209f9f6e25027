use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use dynvrp::decisions::{enumerate_paths, Decision, DecisionPath, DecisionSource, PathDecisionMaker, Replay};
use dynvrp::dynamics::{run_clairvoyant, run_demoa};
use dynvrp::harness::{self, ClairvoyantFronts, NamedInstance, SweepConfig};
use dynvrp::instance::{generate, read_instance, write_instance, EraLength, GeneratorConfig, Topology};
use dynvrp::EmoaConfig;

#[derive(Parser)]
#[command(name = "dynvrp", version, about = "Dynamic bi-objective vehicle routing with era-wise decisions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    GenInstance(GenArgs),
    /// Run the era loop once with a decision path or recorded ranks.
    Run(RunArgs),
    /// Run every decision path over instances and replicates.
    Sweep(SweepArgs),
    /// Compute clairvoyant reference fronts.
    Clairvoyant(ClairvoyantArgs),
    /// Hypervolume indicator of sweep results against clairvoyant fronts.
    Eval(EvalArgs),
    /// Mean and standard deviation per topology and last decision.
    Aggregate(AggregateArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "uniform")]
    topology: Topology,
    /// Mandatory customers, depots included.
    #[arg(long, default_value_t = 25)]
    n_mandatory: usize,
    #[arg(long, default_value_t = 75)]
    n_dynamic: usize,
    #[arg(long, default_value_t = 7)]
    eras: usize,
    /// Era length, or `auto` for the mandatory path length divided by the eras.
    #[arg(long, default_value = "auto")]
    delta: EraLength<f64>,
    #[arg(long, default_value_t = 100.0)]
    side: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EmoaArgs {
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    mu: Option<usize>,
    #[arg(long)]
    lambda: Option<usize>,
    #[arg(long)]
    p_swap: Option<f64>,
    /// Local search budget per boost in milliseconds; 0 means unlimited.
    #[arg(long)]
    ls_time_limit_ms: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EmoaArgs {
    fn config(&self, base: EmoaConfig) -> EmoaConfig {
        EmoaConfig {
            generations: self.generations.unwrap_or(base.generations),
            mu: self.mu.unwrap_or(base.mu),
            lambda: self.lambda.unwrap_or(base.lambda),
            p_swap: self.p_swap.unwrap_or(base.p_swap),
            ls_time_limit: match self.ls_time_limit_ms {
                Some(0) => None,
                Some(ms) => Some(Duration::from_millis(ms)),
                None => base.ls_time_limit,
            },
            seed: self.seed,
            ..base
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Decision path such as `0.25,0.5,0.75`.
    #[arg(long, conflicts_with = "replay")]
    path: Option<DecisionPath<f64>>,
    /// Recorded 1-based ranks, one per era, such as `1,4,2`.
    #[arg(long, value_delimiter = ',')]
    replay: Option<Vec<usize>>,
    /// Eras; defaults to the path length or the instance's value.
    #[arg(long)]
    eras: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[command(flatten)]
    emoa: EmoaArgs,
    /// Writes `trace.csv` and `tour.txt` here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Instance files.
    #[arg(long, num_args = 1.., required = true)]
    instances: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    d_set: Vec<f64>,
    #[arg(long)]
    eras: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Only the four highlighted paths built from the smallest and largest d.
    #[arg(long)]
    selected_paths: bool,
    /// Experiment scale: 7 eras, 5 replicates, mu = lambda = 100 and
    /// 65,000 generations unless overridden.
    #[arg(long)]
    full: bool,
    #[command(flatten)]
    emoa: EmoaArgs,
    #[arg(long)]
    jobs: Option<usize>,
    /// Receives `results.csv`; an existing file is resumed.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ClairvoyantArgs {
    #[arg(long, num_args = 1.., required = true)]
    instances: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long)]
    full: bool,
    #[command(flatten)]
    emoa: EmoaArgs,
    #[arg(long, default_value = "clairvoyant.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    clairvoyant: PathBuf,
    #[arg(long, default_value = "indicators.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long)]
    results: PathBuf,
    /// CSV output; a table on stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "DYNVRP_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "DYNVRP_HOST", default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, env = "DYNVRP_MAX_SESSIONS", default_value_t = 16)]
    max_sessions: usize,
    /// Abort sessions that wait longer than this for a decision.
    #[arg(long, env = "DYNVRP_DECISION_TIMEOUT_SECS")]
    decision_timeout_secs: Option<u64>,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(io::stderr)
        .init();
    match Cli::parse().command {
        Command::GenInstance(a) => gen_instance(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Clairvoyant(a) => clairvoyant(a),
        Command::Eval(a) => eval(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Serve(a) => serve(a),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn gen_instance(a: GenArgs) -> Result<()> {
    let cfg = GeneratorConfig { n_mandatory: a.n_mandatory, n_dynamic: a.n_dynamic, side: a.side, n_eras: a.eras, delta: a.delta, seed: a.seed };
    let instance = generate(a.topology, &cfg)?;
    let mut out = output(a.out.as_deref())?;
    write_instance(&instance, &mut out)?;
    out.flush()?;
    Ok(())
}

fn load(paths: &[PathBuf]) -> Result<Vec<NamedInstance>> {
    paths.iter().map(|p| NamedInstance::load(p).with_context(|| format!("reading {}", p.display()))).collect()
}

fn run(a: RunArgs) -> Result<()> {
    let instance = read_instance(&a.instance).with_context(|| format!("reading {}", a.instance.display()))?;
    let emoa = a.emoa.config(EmoaConfig::default());
    let delta = a.delta.unwrap_or_else(|| instance.delta());
    let (mut source, n_eras): (Box<dyn DecisionSource<f64>>, usize) = match (a.path, a.replay) {
        (Some(path), None) => {
            ensure!(a.eras.is_none_or(|e| e == path.len()), "--eras disagrees with the path length");
            let n = path.len();
            (Box::new(PathDecisionMaker::new(path)), n)
        }
        (None, Some(ranks)) => {
            ensure!(a.eras.is_none_or(|e| e == ranks.len()), "--eras disagrees with the number of ranks");
            let n = ranks.len();
            (Box::new(Replay::new(ranks.into_iter().map(Decision::Index).collect())), n)
        }
        (None, None) => {
            let n = a.eras.unwrap_or_else(|| instance.n_eras());
            (Box::new(PathDecisionMaker::new(DecisionPath::constant(0.5, n)?)), n)
        }
        (Some(_), Some(_)) => bail!("give either --path or --replay"),
    };
    let trace = match run_demoa(&instance, n_eras, delta, source.as_mut(), &emoa) {
        Ok(t) => t,
        Err(partial) => bail!("{partial}"),
    };
    println!("era\tt\tfront\trank\ttour_length\tunvisited\tupper_bound");
    for r in &trace.records {
        let (_, obj) = r.chosen();
        println!(
            "{}\t{:.3}\t{}\t{}\t{:.3}\t{}\t{}",
            r.era,
            r.start_time,
            r.front.len(),
            r.chosen_rank,
            obj.tour_length,
            obj.unvisited,
            r.upper_bound
        );
    }
    if let Some(dir) = a.out_dir {
        fs::create_dir_all(&dir)?;
        trace.write_csv(BufWriter::new(File::create(dir.join("trace.csv"))?))?;
        trace.write_tour(&instance, BufWriter::new(File::create(dir.join("tour.txt"))?))?;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let instances = load(&a.instances)?;
    let n_eras = a.eras.unwrap_or(if a.full { 7 } else { 3 });
    let replicates = a.replicates.unwrap_or(if a.full { 5 } else { 1 });
    let base = if a.full { EmoaConfig::full_scale() } else { EmoaConfig::default() };
    let paths: Vec<DecisionPath<f64>> = if a.selected_paths {
        let lo = a.d_set.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.d_set.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        harness::selected_paths(n_eras, lo, hi)
    } else {
        enumerate_paths(&a.d_set, n_eras)?.collect()
    };
    let cfg = SweepConfig { paths, replicates, emoa: a.emoa.config(base), master_seed: a.emoa.seed, jobs: a.jobs, delta: a.delta };
    fs::create_dir_all(&a.out_dir)?;
    let out = a.out_dir.join("results.csv");
    let total = instances.len() * cfg.paths.len() * replicates;
    eprintln!("{total} runs ({} instances x {} paths x {replicates} replicates)", instances.len(), cfg.paths.len());
    let summary = harness::sweep_with_progress(&instances, &cfg, &out, &mut |done, pending| {
        if done % (pending / 20).max(1) == 0 || done == pending {
            eprintln!("{done}/{pending}");
        }
    })?;
    eprintln!("{} runs completed, {} already present; results in {}", summary.completed, summary.skipped, out.display());
    Ok(())
}

fn clairvoyant(a: ClairvoyantArgs) -> Result<()> {
    let base = if a.full { EmoaConfig::full_scale() } else { EmoaConfig::default() };
    let emoa = a.emoa.config(base);
    let mut fronts = ClairvoyantFronts::new();
    for named in load(&a.instances)? {
        let front = run_clairvoyant(&named.instance, &emoa, a.repeats)?;
        eprintln!("{}: {} points", named.name, front.len());
        fronts.insert(named.name, front.objectives().collect());
    }
    harness::write_clairvoyant(&fronts, &a.out)?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let rows = harness::read_results(&a.results)?;
    let fronts = harness::read_clairvoyant(&a.clairvoyant)?;
    let indicators = harness::evaluate(&rows, &fronts)?;
    harness::write_csv(&indicators, &a.out)?;
    eprintln!("{} indicator rows in {}", indicators.len(), a.out.display());
    Ok(())
}

fn aggregate(a: AggregateArgs) -> Result<()> {
    let summary = harness::aggregate(&harness::read_results(&a.results)?)?;
    if let Some(out) = a.out {
        return Ok(harness::write_csv(&summary, &out)?);
    }
    println!("{:<10} {:>6} {:>5} {:>12} {:>10} {:>10} {:>10}", "topology", "d", "runs", "tour mean", "tour sd", "unv mean", "unv sd");
    for s in summary {
        println!(
            "{:<10} {:>6} {:>5} {:>12.3} {:>10.4} {:>10.3} {:>10.4}",
            s.topology, s.last_decision, s.runs, s.tour_length_mean, s.tour_length_std, s.unvisited_mean, s.unvisited_std
        );
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let config = dynvrp_service::ServiceConfig {
        max_sessions: a.max_sessions,
        decision_timeout: a.decision_timeout_secs.map(Duration::from_secs),
    };
    let state = dynvrp_service::AppState::new(config, dynvrp_service::default_bundle()?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(dynvrp_service::serve(SocketAddr::new(a.host, a.port), state))?;
    Ok(())
}
