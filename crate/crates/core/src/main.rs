use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use caltrace::bench::{self, Experiment, ExperimentSpec, RunManifest, Summary, Transport};
use caltrace::conflict::{extract_conflict_sets, gen_chain, gen_er_graph, ChainTopology, Shape};
use caltrace::label::IntegrityLadder;
use caltrace::pdp::{self, ServiceConfig};
use caltrace::EngineMode;

#[derive(Parser)]
#[command(
    name = "caltrace",
    version,
    about = "Calibration traceability access control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a latency experiment and write per-trial CSV.
    Bench(BenchArgs),
    /// Summarize a results CSV.
    Summarize { csv: PathBuf },
    /// Serve decisions over HTTP.
    Serve {
        #[arg(long, env = "CALTRACE_CONFIG")]
        config: PathBuf,
    },
    /// Write a fixture manifest for one chain topology.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Depth,
    Branching,
    Conflict,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Unified,
    Baseline,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Inproc,
    Service,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Tree,
    Layered,
}

impl From<ShapeArg> for Shape {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::Tree => Shape::Tree,
            ShapeArg::Layered => Shape::Layered,
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    experiment: ExperimentArg,
    /// Comma list; `a..b` or `a..b:step` ranges allowed.
    #[arg(long, value_parser = parse_list)]
    levels: Option<List>,
    #[arg(long, value_parser = parse_list)]
    branches: Option<List>,
    #[arg(long, value_parser = parse_list)]
    sizes: Option<List>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum, default_value = "inproc")]
    transport: TransportArg,
    #[arg(long, value_enum)]
    shape: Option<ShapeArg>,
    /// Re-check shared ancestors once per path.
    #[arg(long)]
    no_memo: bool,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Report the shape checks but exit 0 regardless.
    #[arg(long)]
    no_assert: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    levels: usize,
    #[arg(long, default_value_t = 1)]
    branches: usize,
    #[arg(long, value_enum, default_value = "tree")]
    shape: ShapeArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = bench::DEFAULT_COMPETITORS)]
    competitors: usize,
    #[arg(long, default_value_t = bench::DEFAULT_CONFLICT_P)]
    p: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone)]
struct List(Vec<usize>);

fn parse_list(s: &str) -> Result<List, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, rest)) = part.split_once("..") {
            let (b, step) = rest.split_once(':').unwrap_or((rest, "1"));
            let num = |x: &str| x.parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if step == 0 || a > b {
                return Err(format!("bad range `{part}`"));
            }
            out.extend((a..=b).step_by(step));
        } else {
            out.push(part.parse().map_err(|e| format!("`{part}`: {e}"))?);
        }
    }
    Ok(List(out))
}

fn print_summary(summary: &Summary) {
    println!(
        "{:<9} {:>6} {:>8} {:>5} {:>7} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "model",
        "levels",
        "branches",
        "size",
        "trials",
        "min_ns",
        "median_ns",
        "mean_ns",
        "p95_ns",
        "max_ns"
    );
    for p in &summary.points {
        println!(
            "{:<9} {:>6} {:>8} {:>5} {:>7} {:>12} {:>12.1} {:>12.1} {:>12} {:>12}",
            p.model.as_str(),
            p.point.levels,
            p.point.branches,
            p.point.conflict_size,
            p.trials,
            p.min_ns,
            p.median_ns,
            p.mean_ns,
            p.p95_ns,
            p.max_ns
        );
    }
    for s in &summary.speedups {
        println!(
            "speedup levels={} branches={} size={}: unified/baseline = {:.3}",
            s.point.levels, s.point.branches, s.point.conflict_size, s.ratio
        );
    }
}

fn bench_cmd(args: BenchArgs) -> Result<ExitCode> {
    let experiment = match args.experiment {
        ExperimentArg::Depth => Experiment::Depth,
        ExperimentArg::Branching => Experiment::Branching,
        ExperimentArg::Conflict => Experiment::ConflictSize,
    };
    let mut spec = ExperimentSpec::defaults(experiment);
    if let Some(List(v)) = args.levels {
        spec.levels = v;
    }
    if let Some(List(v)) = args.branches {
        spec.branches = v;
    }
    if let Some(List(v)) = args.sizes {
        spec.conflict_sizes = v;
    }
    if let Some(v) = args.iterations {
        spec.iterations = v;
    }
    if let Some(v) = args.warmup {
        spec.warmup = v;
    }
    if let Some(m) = args.mode {
        spec.modes = match m {
            ModeArg::Unified => vec![EngineMode::Unified],
            ModeArg::Baseline => vec![EngineMode::BaselineConjunction],
            ModeArg::Both => vec![EngineMode::Unified, EngineMode::BaselineConjunction],
        };
    }
    spec.seed = args.seed;
    spec.transport = match args.transport {
        TransportArg::Inproc => Transport::InProcess,
        TransportArg::Service => Transport::Service,
    };
    spec.shape = args.shape.map(Shape::from);
    spec.memoize = !args.no_memo;

    let manifest = RunManifest::new(&spec);
    let rows = bench::run_experiment(&spec)?;
    let out =
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    bench::write_csv(&rows, BufWriter::new(out))?;
    let manifest_path = bench::manifest_path(&args.out);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;

    let summary = bench::summarize(&rows);
    print_summary(&summary);
    let checks = bench::check_expectations(experiment, &summary);
    for c in &checks {
        println!(
            "{} {} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    eprintln!("wrote {} rows to {}", rows.len(), args.out.display());
    if !args.no_assert && checks.iter().any(|c| !c.passed) {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_cmd(args: GenArgs) -> Result<()> {
    let graph = gen_er_graph(args.competitors, args.p, args.seed)?;
    let universe = extract_conflict_sets(&graph);
    let ladder = IntegrityLadder::new(args.levels as u32)?;
    let topology = ChainTopology {
        depth: args.levels,
        branches: args.branches,
        shape: args.shape.into(),
    };
    let fixture = gen_chain(topology, &universe, &ladder, args.seed)?;
    fixture.write_json(&args.out)?;
    eprintln!(
        "wrote {} reports to {}",
        fixture.reports.len(),
        args.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Bench(args) => bench_cmd(args),
        Command::Summarize { csv } => {
            let file = File::open(&csv).with_context(|| format!("opening {}", csv.display()))?;
            print_summary(&bench::summarize(&bench::parse_csv(file)?));
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { config } => {
            let config = ServiceConfig::load(&config)?;
            if config.timeout_ms == 0 {
                bail!("timeout_ms must be positive");
            }
            eprintln!(
                "serving {} on {} ({})",
                config.store_path.display(),
                config.listen_addr,
                config.engine_mode
            );
            tokio::runtime::Runtime::new()?.block_on(pdp::serve(config))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen(args) => gen_cmd(args).map(|()| ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
