use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dtrnn::checkpoint::Checkpoint;
use dtrnn::fixtures;
use dtrnn::gradcheck::{self, GradCheckConfig};
use dtrnn::trainer::{self, write_epoch_csv, write_summary_csv, Method, Timing, TrainConfig};
use dtrnn::treegen::{generate_tree, tree_stats, TreeMethod, DEFAULT_MAX_COUNT};
use dtrnn::{load_citation_dataset, Graph};

#[derive(Parser)]
#[command(name = "dtrnn", version, about = "Deep-tree vertex classification")]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert `.content` / `.cites` files to dataset JSON.
    Ingest(IngestArgs),
    /// Build the tree rooted at one vertex.
    Tree(TreeArgs),
    /// Train and evaluate one configuration.
    Train(TrainArgs),
    /// Sweep methods x training ratios x seeds.
    Benchmark(BenchmarkArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    Citation,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    cites: PathBuf,
    #[arg(long, value_enum, default_value = "citation")]
    format: InputFormat,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DatasetArg {
    /// Dataset JSON produced by `ingest`, or a built-in name: `fig2-toy`,
    /// `webkb-synthetic`, `cora-synthetic`.
    #[arg(long)]
    dataset: String,
    /// Name written to the CSV `dataset` column; defaults to the file stem.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct TreeArgs {
    #[command(flatten)]
    data: DatasetArg,
    /// Raw vertex id as it appears in the dataset.
    #[arg(long)]
    root: String,
    /// `dtg` or `bfs`.
    #[arg(long, default_value = "dtg")]
    method: String,
    #[arg(long, default_value_t = DEFAULT_MAX_COUNT)]
    max_count: usize,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Hyper {
    #[arg(long = "hidden", default_value_t = TrainConfig::default().hidden_dim)]
    hidden_dim: usize,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long = "lr", default_value_t = TrainConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().grad_clip)]
    grad_clip: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_COUNT)]
    max_count: usize,
    /// `off` zeroes the wall-clock columns so output is byte-reproducible.
    #[arg(long, value_enum, default_value = "on")]
    timing: TimingArg,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum TimingArg {
    On,
    Off,
}

impl From<TimingArg> for Timing {
    fn from(t: TimingArg) -> Self {
        match t {
            TimingArg::On => Timing::Measured,
            TimingArg::Off => Timing::Zeroed,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DatasetArg,
    #[arg(long, default_value = "dtrnn")]
    method: String,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long, default_value_t = TrainConfig::default().train_ratio)]
    train_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-epoch results CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    data: DatasetArg,
    /// Comma-separated methods: dtrnn, dtrnn-att, glstm, agrnn.
    #[arg(long, default_value = "dtrnn,glstm,dtrnn-att")]
    methods: String,
    /// Comma-separated training ratios.
    #[arg(long, default_value = "0.7,0.75,0.8,0.85,0.9")]
    ratios: String,
    #[arg(long, default_value = "0")]
    seeds: String,
    #[command(flatten)]
    hyper: Hyper,
    /// Write one row per epoch instead of one row per run.
    #[arg(long)]
    per_epoch: bool,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random instances per pooling mode.
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fail when the max relative error exceeds this.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let msg = format!("{err:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Tree(args) => tree(args),
        Command::Train(args) => train(args, cli.verbose),
        Command::Benchmark(args) => benchmark(args, cli.verbose),
        Command::Gradcheck(args) => gradcheck(args),
    }
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("no such file: {}", path.display());
    }
    Ok(())
}

fn require_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            bail!("output directory does not exist: {}", dir.display())
        }
        _ => Ok(()),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_dataset(arg: &DatasetArg) -> Result<(Graph, String)> {
    if let Some(g) = fixtures::builtin(&arg.dataset) {
        return Ok((g?, arg.name.clone().unwrap_or_else(|| arg.dataset.clone())));
    }
    let path = Path::new(&arg.dataset);
    require_file(path)?;
    let g = Graph::load_json(path)?;
    let name = arg.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map_or_else(|| arg.dataset.clone(), |s| s.to_string_lossy().into_owned())
    });
    Ok((g, name))
}

fn parse_list<T: std::str::FromStr>(what: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("bad {what} {s:?}: {e}")))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("empty {what} list");
    }
    Ok(items)
}

fn ingest(args: IngestArgs) -> Result<()> {
    let InputFormat::Citation = args.format;
    require_file(&args.content)?;
    require_file(&args.cites)?;
    require_parent(&args.out)?;
    let g = load_citation_dataset(&args.content, &args.cites)?;
    g.save_json(&args.out)?;
    let d = g.drop_counts();
    println!(
        "n={} edges={} classes={} vocab_dim={} dropped: dangling={} duplicate={} self_loop={}",
        g.n(),
        g.edges().len(),
        g.num_classes(),
        g.vocab_dim(),
        d.dangling,
        d.duplicate,
        d.self_loop
    );
    Ok(())
}

fn tree(args: TreeArgs) -> Result<()> {
    let method: TreeMethod = args.method.parse()?;
    if let Some(out) = &args.out {
        require_parent(out)?;
    }
    let (g, _) = load_dataset(&args.data)?;
    let root = g
        .vertex_by_raw_id(&args.root)
        .ok_or_else(|| anyhow!("unknown vertex id {:?}", args.root))?;
    let t = generate_tree(&g, root, method, args.max_count)?;
    let stats = tree_stats(&t);
    let raw = |v: usize| g.raw_ids()[v].clone();
    let doc = serde_json::json!({
        "target": t.target,
        "method": t.method,
        "max_count": t.max_count,
        "nodes": t.nodes,
        "raw_ids": t.nodes.iter().map(|n| raw(n.vertex)).collect::<Vec<_>>(),
        "stats": {
            "node_count": stats.node_count,
            "max_depth": stats.max_depth,
            "max_branching": stats.max_branching,
            "complexity_bound": stats.complexity_bound,
            "appearances": stats.appearances.iter().map(|(&v, &c)| (raw(v), c)).collect::<std::collections::BTreeMap<_, _>>(),
        },
    });
    let mut out = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    Ok(())
}

fn base_config(h: &Hyper) -> TrainConfig {
    TrainConfig {
        hidden_dim: h.hidden_dim,
        epochs: h.epochs,
        learning_rate: h.learning_rate,
        grad_clip: h.grad_clip,
        max_count: h.max_count,
        ..TrainConfig::default()
    }
}

fn train(args: TrainArgs, verbose: bool) -> Result<()> {
    let method: Method = args.method.parse()?;
    for p in args.out.iter().chain(&args.checkpoint) {
        require_parent(p)?;
    }
    let config = TrainConfig {
        method,
        train_ratio: args.train_ratio,
        seed: args.seed,
        ..base_config(&args.hyper)
    };
    config.validate()?;
    let (g, name) = load_dataset(&args.data)?;
    let (params, record) = trainer::train(&g, &config, &name)?;
    if verbose {
        for e in &record.epochs {
            eprintln!(
                "epoch {} loss {:.5} macro_f1 {:.4} micro_f1 {:.4}",
                e.epoch, e.train_loss, e.macro_f1, e.micro_f1
            );
        }
    }
    write_epoch_csv(std::slice::from_ref(&record), output(args.out.as_deref())?, args.hyper.timing.into())?;
    if let Some(path) = &args.checkpoint {
        Checkpoint { config, params }.save(path)?;
    }
    Ok(())
}

fn benchmark(args: BenchmarkArgs, verbose: bool) -> Result<()> {
    let methods: Vec<Method> = parse_list("method", &args.methods)?;
    let ratios: Vec<f64> = parse_list("ratio", &args.ratios)?;
    let seeds: Vec<u64> = parse_list("seed", &args.seeds)?;
    if let Some(p) = &args.out {
        require_parent(p)?;
    }
    let base = base_config(&args.hyper);
    TrainConfig {
        train_ratio: ratios[0],
        ..base.clone()
    }
    .validate()?;
    let (g, name) = load_dataset(&args.data)?;
    let records = trainer::benchmark_with_progress(&g, &name, &methods, &ratios, &seeds, &base, |r| {
        if verbose {
            eprintln!(
                "{} ratio {} seed {}: macro_f1 {:.4} micro_f1 {:.4} ({:.2}s)",
                r.config.method,
                r.config.train_ratio,
                r.config.seed,
                r.final_epoch().macro_f1,
                r.final_epoch().micro_f1,
                r.treegen_s + r.train_s + r.eval_s
            );
        }
    })?;
    let out = output(args.out.as_deref())?;
    if args.per_epoch {
        write_epoch_csv(&records, out, args.hyper.timing.into())?;
    } else {
        write_summary_csv(&records, out, args.hyper.timing.into())?;
    }
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<()> {
    let report = gradcheck::run(&GradCheckConfig {
        instances: args.instances,
        seed: args.seed,
        ..GradCheckConfig::default()
    })?;
    println!(
        "instances={} coordinates={} max_rel_error={:e}",
        report.instances, report.coordinates, report.max_rel_error
    );
    if let Some(w) = &report.worst {
        println!(
            "worst: instance {} attention={} {}[{}] analytic={:e} numeric={:e}",
            w.instance, w.attention, w.param, w.index, w.analytic, w.numeric
        );
    }
    if report.max_rel_error >= args.tolerance {
        bail!(
            "gradient check failed: max relative error {:e} >= {:e}",
            report.max_rel_error,
            args.tolerance
        );
    }
    Ok(())
}
