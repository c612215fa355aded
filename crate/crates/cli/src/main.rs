use std::path::{Path, PathBuf};

use agentaudit::corpus::{ingest_tweets, Strictness};
use agentaudit::harness::simlab::{self, SimlabConfig};
use agentaudit::harness::{run_pipeline, verify_determinism, RunConfig, RunManifest, Stage};
use agentaudit::persona::Strategy;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "agentaudit", version, about = "Audit LLM persona agents against human replies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured worker count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL corpus and write a deduplicated store.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Abort on the first malformed record.
        #[arg(long)]
        strict: bool,
    },
    /// Generate agent replies (runs ingest first).
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Restrict to one strategy.
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Comma-separated model ids to keep.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Reuse an existing run directory and its cache.
        #[arg(long)]
        resume: bool,
    },
    /// Label human and agent replies with stance.
    Classify(RunArgs),
    /// Score human, agent and reference tweets for toxicity.
    Toxicity(RunArgs),
    /// Compute metric tables into metrics.json.
    Metrics(RunArgs),
    /// Write CSV and JSON tables under tables/.
    Report(RunArgs),
    /// All stages.
    Run(RunArgs),
    /// Repeat the full run and compare manifest hashes.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
    },
    /// Write a synthetic corpus with known ground truth.
    Simlab {
        /// Output directory for tweets.jsonl and truth.json.
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (TOML); defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn print_manifest(m: &RunManifest) -> Result<()> {
    let incomplete: Vec<&str> = m.incomplete_stages().iter().map(|s| s.name()).collect();
    println!("manifest_hash {}", m.manifest_hash);
    println!("pairs {} generated {} failed {}", m.counts.pairs, m.counts.generated, m.counts.failed_generations);
    if !incomplete.is_empty() {
        println!("incomplete stages: {}", incomplete.join(", "));
    }
    for n in &m.notes {
        println!("note: {n}");
    }
    Ok(())
}

fn run_stage(args: &RunArgs, stage: Stage) -> Result<()> {
    let cfg = load_config(args)?;
    let outcome = run_pipeline(&cfg, stage)?;
    print_manifest(&outcome.manifest)
}

fn write_simlab(out: &Path, config: Option<&Path>, users: Option<usize>, seed: Option<u64>) -> Result<()> {
    let mut cfg = match config {
        Some(p) => toml::from_str::<SimlabConfig>(&std::fs::read_to_string(p)?)?,
        None => SimlabConfig::default(),
    };
    if let Some(u) = users {
        cfg.users = u;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let lab = simlab::generate(&cfg).map_err(anyhow::Error::msg)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("tweets.jsonl"), lab.to_jsonl())?;
    std::fs::write(out.join("truth.json"), serde_json::to_vec_pretty(&lab.truth)?)?;
    println!("wrote {} tweets for {} users to {}", lab.truth.tweets, lab.truth.users, out.display());
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { input, out, strict } => {
            let strictness = if strict { Strictness::Strict } else { Strictness::Lenient };
            let file = std::fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let corpus = ingest_tweets(std::io::BufReader::new(file), strictness)?;
            corpus.save(&out)?;
            println!("{}", serde_json::to_string_pretty(&corpus.report())?);
        }
        Command::Simulate {
            run,
            strategy,
            models,
            resume,
        } => {
            let mut cfg = load_config(&run)?;
            if !resume && cfg.run_dir.join("manifest.json").exists() {
                bail!("{} already holds a run; pass --resume to continue it", cfg.run_dir.display());
            }
            if let Some(s) = strategy {
                cfg.strategies = vec![s];
            }
            if !models.is_empty() {
                for m in &models {
                    if !cfg.models.iter().any(|e| &e.model_id == m) {
                        bail!("model {m} is not in the config");
                    }
                }
                cfg.models.retain(|e| models.contains(&e.model_id));
            }
            let outcome = run_pipeline(&cfg, Stage::Simulate)?;
            println!("generator calls {}", outcome.generator_calls);
            print_manifest(&outcome.manifest)?;
        }
        Command::Classify(a) => run_stage(&a, Stage::Classify)?,
        Command::Toxicity(a) => run_stage(&a, Stage::Toxicity)?,
        Command::Metrics(a) => run_stage(&a, Stage::Metrics)?,
        Command::Report(a) | Command::Run(a) => run_stage(&a, Stage::Report)?,
        Command::Verify { run, repetitions } => {
            let cfg = load_config(&run)?;
            let report = verify_determinism(&cfg, repetitions)?;
            for (i, h) in report.hashes.iter().enumerate() {
                println!("run {i}: {h}");
            }
            if report.identical {
                println!("PASS: {repetitions} runs produced identical manifests");
            } else {
                println!(
                    "FAIL: runs diverged at {}",
                    report.first_divergence.as_deref().unwrap_or("manifest.json")
                );
                std::process::exit(1);
            }
        }
        Command::Simlab { out, config, users, seed } => write_simlab(&out, config.as_deref(), users, seed)?,
    }
    Ok(())
}
