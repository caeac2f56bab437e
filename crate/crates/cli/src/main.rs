use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use calibrec::pipeline::{
    decide_stage, evaluate_stage, postprocess_stage, preprocess_stage, recommend_stage, run_all, with_pool, Decision,
    ExperimentConfig, Layout, Stage, StageReport,
};
use calibrec::recommend::{Algorithm, RecommenderConfig};

/// Calibrated top-N recommendation experiments.
#[derive(Debug, Parser)]
#[command(name = "calibrec", version)]
struct Cli {
    /// Experiment configuration (TOML). Defaults apply to anything left out.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); overrides the configuration.
    #[arg(long, global = true, value_name = "INT")]
    jobs: Option<usize>,
    /// Output directory shared by all stages.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage and write manifest.json.
    #[command(name = "run_all", alias = "run")]
    RunAll,
    /// Clean the dataset and write one split per repetition.
    Preprocess,
    /// Train the recommenders and write their candidate lists.
    Recommend,
    /// Build calibrated lists for every grid combination.
    Postprocess {
        /// External predictions (`user_id,item_id,predicted_weight`) used instead of the
        /// configured recommenders.
        #[arg(long, value_name = "PATH")]
        candidates: Option<PathBuf>,
    },
    /// Evaluate the lists and write metrics.csv.
    Evaluate,
    /// Pick the best system from a metrics or decision CSV.
    Decide {
        /// Defaults to `<out>/metrics.csv`.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(stage: &str, r: StageReport) {
    eprintln!(
        "{stage}: {} files written, {} combinations failed",
        r.outputs.len(),
        r.failures.len()
    );
    for f in &r.failures {
        eprintln!("  rep {} {}: {}", f.repetition, f.combination.system(), f.error);
    }
}

fn print_decision(d: &Decision) {
    for (id, e) in &d.undefined {
        eprintln!("skipped {id}: {e}");
    }
    print!("{}", d.table);
}

fn run_stage(cfg: &ExperimentConfig, layout: &Layout, name: &str, stage: Stage) -> Result<()> {
    let r = with_pool(cfg.jobs, || stage(cfg, layout))?.with_context(|| format!("{name} failed"))?;
    report(name, r);
    Ok(())
}

fn external(cfg: &mut ExperimentConfig, predictions: &Path) -> Result<()> {
    if !predictions.exists() {
        bail!("missing prerequisite file: {}", predictions.display());
    }
    let mut rec = RecommenderConfig::new(Algorithm::External);
    rec.predictions_path = Some(predictions.to_path_buf());
    cfg.recommenders = vec![rec];
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let layout = Layout::new(&cli.out);
    match &cli.command {
        Command::Decide { input } => {
            let input = input.clone().unwrap_or_else(|| layout.metrics());
            let d = decide_stage(&input, &layout).with_context(|| format!("deciding from {}", input.display()))?;
            print_decision(&d);
            return Ok(());
        }
        Command::RunAll => {
            let cfg = load_config(&cli)?;
            let manifest = run_all(&cfg, &layout)?;
            let failed = manifest.combinations.len() - manifest.done();
            eprintln!(
                "{} combinations done, {failed} failed; manifest at {}",
                manifest.done(),
                layout.manifest().display()
            );
            for c in manifest.combinations.iter().filter(|c| c.error.is_some()) {
                eprintln!(
                    "  rep {} {}-{}-{}@{}: {}",
                    c.repetition,
                    c.divergence,
                    c.balance,
                    c.recommender,
                    c.lambda,
                    c.error.as_deref().unwrap_or_default()
                );
            }
            print!("{}", std::fs::read_to_string(layout.decision_table())?);
        }
        Command::Preprocess => run_stage(&load_config(&cli)?, &layout, "preprocess", preprocess_stage)?,
        Command::Recommend => run_stage(&load_config(&cli)?, &layout, "recommend", recommend_stage)?,
        Command::Postprocess { candidates } => {
            let mut cfg = load_config(&cli)?;
            if let Some(path) = candidates {
                external(&mut cfg, path)?;
            }
            run_stage(&cfg, &layout, "postprocess", postprocess_stage)?;
        }
        Command::Evaluate => {
            let cfg = load_config(&cli)?;
            run_stage(&cfg, &layout, "evaluate", evaluate_stage)?;
        }
    }
    Ok(())
}
