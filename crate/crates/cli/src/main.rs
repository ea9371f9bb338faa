use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use shopfloor::harness::{
    rerun_manifest, run_experiment, DispatcherKind, ExperimentReport, ExperimentSpec, METRICS_FILE,
};
use shopfloor::heuristics::HeuristicDispatcher;
use shopfloor::metrics::MetricsRow;
use shopfloor::sim::{run_episode, write_trajectory_csv, Shop};
use shopfloor::{Objective, StateVariant};

#[derive(Parser)]
#[command(name = "shopfloor", version, about = "Learning-based single-machine dispatching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment spec (JSON); every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    objective: Option<Objective>,
    /// edf | lst | random | imitation | reinforce | transfer
    #[arg(long)]
    dispatcher: Option<DispatcherKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a rule-based dispatcher and write its decision log.
    Simulate(Common),
    /// Train a policy with REINFORCE and evaluate it.
    Train(Common),
    /// Evaluate a dispatcher, or a saved policy with --checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train a network to imitate a rule-based dispatcher.
    Imitate(Common),
    /// Transfer a source policy to the target shop and fine-tune it.
    Transfer(Common),
    /// Train one policy per state variant.
    Ablate(Common),
    /// Print the metrics of finished experiments.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Re-run an experiment from its manifest.
    Rerun {
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_spec(common: &Common, forced: Option<DispatcherKind>) -> Result<ExperimentSpec> {
    let mut spec = match &common.config {
        Some(path) => ExperimentSpec::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    if let Some(o) = common.objective {
        spec.config.objective = o;
        if let Some(t) = &mut spec.transfer {
            t.source.objective = o;
        }
    }
    match (forced, common.dispatcher) {
        (Some(f), Some(d)) if f != d => bail!("this subcommand runs the {f} dispatcher, not {d}"),
        (Some(f), _) => spec.dispatcher = f,
        (None, Some(d)) => spec.dispatcher = d,
        (None, None) => {}
    }
    Ok(spec)
}

fn print_metrics(rows: impl IntoIterator<Item = (String, MetricsRow)>) {
    println!(
        "{:<24} {:>12} {:>10} {:>10} {:>10} {:>8}",
        "label", "reward", "lateness", "tardiness", "completed", "dropped"
    );
    for (label, m) in rows {
        println!(
            "{:<24} {:>12.3} {:>10.3} {:>10.3} {:>10.1} {:>8.1}",
            label, m.total_discounted_reward, m.average_lateness, m.average_tardiness, m.jobs_completed, m.jobs_dropped
        );
    }
}

fn run(spec: &ExperimentSpec, out: &Path) -> Result<()> {
    spec.validate()?;
    let report: ExperimentReport = run_experiment(spec, out)?;
    print_metrics(report.cells.iter().map(|c| (c.label.clone(), c.metrics.clone())));
    println!("wrote {} (config hash {})", out.display(), report.manifest.config_hash);
    Ok(())
}

fn simulate(common: &Common) -> Result<()> {
    let spec = load_spec(common, None)?;
    let Some(kind) = spec.dispatcher.heuristic() else {
        bail!("simulate runs rule-based dispatchers only (edf, lst, random)");
    };
    spec.validate()?;
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let mut rows = Vec::new();
    for &seed in spec.eval_seeds() {
        let mut shop = Shop::new(spec.config.clone(), seed)?;
        let ep = run_episode(&mut shop, &mut HeuristicDispatcher::new(kind, seed))?;
        let path = common.out.join(format!("trajectory-{seed}.csv"));
        let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_trajectory_csv(&ep.log, file)?;
        rows.push((format!("seed {seed}"), MetricsRow::from_episode(&ep.rewards, &ep.final_state, spec.config.gamma)));
    }
    print_metrics(rows);
    Ok(())
}

fn report(dirs: &[PathBuf]) -> Result<()> {
    println!(
        "{:<20} {:<24} {:<10} {:>12} {:>10} {:>10}",
        "experiment", "label", "dispatcher", "reward", "lateness", "tardiness"
    );
    for dir in dirs {
        let path = dir.join(METRICS_FILE);
        let mut reader = csv::Reader::from_path(&path).with_context(|| format!("opening {}", path.display()))?;
        for rec in reader.records() {
            let rec = rec.with_context(|| format!("reading {}", path.display()))?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| field(i).parse::<f64>().unwrap_or(f64::NAN);
            println!(
                "{:<20} {:<24} {:<10} {:>12.3} {:>10.3} {:>10.3}",
                dir.display(),
                field(0),
                field(1),
                num(2),
                num(3),
                num(4)
            );
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(c) => simulate(&c),
        Command::Train(c) => run(&load_spec(&c, Some(DispatcherKind::Reinforce))?, &c.out),
        Command::Evaluate { common, checkpoint } => {
            let mut spec = load_spec(&common, None)?;
            if let Some(path) = checkpoint {
                if spec.dispatcher.heuristic().is_some() {
                    spec.dispatcher = DispatcherKind::Reinforce;
                }
                spec.checkpoint = Some(path);
            }
            if spec.checkpoint.is_none() && spec.dispatcher.heuristic().is_none() {
                bail!("evaluating a {} dispatcher needs --checkpoint", spec.dispatcher);
            }
            run(&spec, &common.out)
        }
        Command::Imitate(c) => run(&load_spec(&c, Some(DispatcherKind::Imitation))?, &c.out),
        Command::Transfer(c) => run(&load_spec(&c, Some(DispatcherKind::Transfer))?, &c.out),
        Command::Ablate(c) => {
            let mut spec = load_spec(&c, Some(DispatcherKind::Reinforce))?;
            if spec.ablation.is_empty() {
                spec.ablation = StateVariant::ALL.to_vec();
            }
            run(&spec, &c.out)
        }
        Command::Report { dirs } => report(&dirs),
        Command::Rerun { manifest, out } => {
            let report = rerun_manifest(&manifest, &out)?;
            print_metrics(report.cells.iter().map(|c| (c.label.clone(), c.metrics.clone())));
            Ok(())
        }
    }
}
