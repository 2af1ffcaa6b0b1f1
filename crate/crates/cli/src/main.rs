use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use enercurate_cli::{
    load_config, run_pipeline, run_stage, CliError, Plan, RunManifest, Stage, StageIo,
};
use enercurate_core::jsonl::read_jsonl;
use enercurate_core::model::{Corpus, Document};

#[derive(Parser)]
#[command(
    name = "enercurate",
    version,
    about = "Corpus curation and alignment-data stages"
)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a config key, e.g. `--set dedup.epsilon=0.08`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InOut {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Manifest log; defaults to `run_log.jsonl` beside the output.
    #[arg(long)]
    run_log: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, normalize and filter a directory of extracted text.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        subdomain: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        run_log: Option<PathBuf>,
    },
    /// Remove semantic near-duplicates from a corpus.
    Dedup {
        #[command(flatten)]
        io: InOut,
        /// Cluster count or `auto`.
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Select core papers from a citation graph.
    Refine {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        percentile: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        min_pts: Option<usize>,
        #[arg(long)]
        target_size: Option<usize>,
    },
    /// Score, repair and re-score instruction samples.
    Check {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        max_rounds: Option<u32>,
        /// `all_dims` or `mean`.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Build adjacent-tier preference pairs.
    RlhfPairs {
        #[command(flatten)]
        io: InOut,
    },
    /// Rank candidate answers and keep the top k.
    RsSelect {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Grade model answers against a benchmark.
    Eval {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Score subjective items with the judge agent.
        #[arg(long)]
        judge: bool,
        #[arg(long)]
        run_log: Option<PathBuf>,
    },
    /// Run a named plan (`pretraining`, `instruction`, `rlhf`) or a plan file.
    Pipeline {
        #[arg(long)]
        plan: String,
        /// Directory that plan inputs are relative to; defaults to the plan
        /// file's directory, or the current directory for named plans.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long)]
        workdir: PathBuf,
    },
    /// Print per-source document and token totals of a corpus.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn stage_io(input: PathBuf, out: PathBuf, run_log: Option<PathBuf>) -> StageIo {
    let mut io = StageIo::new(input, out);
    if let Some(l) = run_log {
        io.run_log = l;
    }
    io
}

fn flag<T: ToString>(overrides: &mut Vec<(String, String)>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        overrides.push((key.to_string(), v.to_string()));
    }
}

fn quoted(s: Option<String>) -> Option<String> {
    s.map(|v| format!("{v:?}"))
}

fn print_manifests(manifests: &[RunManifest]) {
    let mut out = std::io::stdout().lock();
    for m in manifests {
        // A closed stdout must not turn a finished run into a failure.
        let _ = writeln!(
            out,
            "{}",
            serde_json::to_string(m).expect("manifest serializes")
        );
    }
}

fn run(cli: Cli) -> anyhow::Result<Vec<RunManifest>> {
    let mut overrides = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("`--set {kv}` is not KEY=VALUE")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    flag(&mut overrides, "seed", cli.seed);
    let (stage, io) = match cli.command {
        Command::Ingest {
            root,
            source,
            subdomain,
            out,
            run_log,
        } => {
            flag(&mut overrides, "ingest.source", quoted(source));
            flag(&mut overrides, "ingest.subdomain", quoted(subdomain));
            (Stage::Ingest, stage_io(root, out, run_log))
        }
        Command::Dedup { io, k, epsilon } => {
            flag(&mut overrides, "dedup.k_clusters", k);
            flag(&mut overrides, "dedup.epsilon", epsilon);
            (Stage::Dedup, stage_io(io.input, io.out, io.run_log))
        }
        Command::Refine {
            io,
            percentile,
            eps,
            min_pts,
            target_size,
        } => {
            flag(&mut overrides, "refine.percentile", percentile);
            flag(&mut overrides, "refine.dbscan_epsilon", eps);
            flag(&mut overrides, "refine.min_pts", min_pts);
            flag(&mut overrides, "refine.target_size", target_size);
            (Stage::Refine, stage_io(io.input, io.out, io.run_log))
        }
        Command::Check {
            io,
            threshold,
            max_rounds,
            mode,
        } => {
            flag(&mut overrides, "quality.threshold", threshold);
            flag(&mut overrides, "quality.max_rounds", max_rounds);
            flag(&mut overrides, "quality.threshold_mode", quoted(mode));
            (Stage::Check, stage_io(io.input, io.out, io.run_log))
        }
        Command::RlhfPairs { io } => (Stage::RlhfPairs, stage_io(io.input, io.out, io.run_log)),
        Command::RsSelect { io, k } => {
            flag(&mut overrides, "rlhf.k", k);
            (Stage::RsSelect, stage_io(io.input, io.out, io.run_log))
        }
        Command::Eval {
            bench,
            answers,
            out,
            judge,
            run_log,
        } => {
            if judge {
                overrides.push(("eval.judge".into(), "true".into()));
            }
            let mut io = stage_io(bench, out, run_log);
            io.answers = Some(answers);
            (Stage::Eval, io)
        }
        Command::Pipeline {
            plan,
            base,
            workdir,
        } => {
            let cfg = load_config(cli.config.as_deref(), &overrides, std::env::vars())?;
            let (plan, default_base) = match Plan::named(&plan) {
                Some(p) => (p, PathBuf::from(".")),
                None => {
                    let path = Path::new(&plan);
                    let text = std::fs::read_to_string(path).map_err(|e| {
                        CliError::Usage(format!(
                            "`{plan}` is neither a named plan nor a readable file: {e}"
                        ))
                    })?;
                    (
                        Plan::parse(&text)?,
                        path.parent().map(Path::to_path_buf).unwrap_or_default(),
                    )
                }
            };
            let base = base.unwrap_or(default_base);
            return run_pipeline(&plan, &cfg, &base, &workdir).map_err(|e| {
                print_manifests(&e.completed);
                anyhow::Error::new(e.error).context(format!("plan `{}` stopped", plan.name))
            });
        }
        Command::Stats { input } => {
            load_config(cli.config.as_deref(), &overrides, std::env::vars())?;
            let docs: Vec<Document> = read_jsonl(&input)
                .map_err(|e| CliError::Io(e.to_string()))
                .context("reading corpus")?;
            let corpus = Corpus::new(docs);
            let _ = writeln!(
                std::io::stdout().lock(),
                "{}",
                serde_json::to_string_pretty(&corpus.stats)?
            );
            return Ok(Vec::new());
        }
    };
    let cfg = load_config(cli.config.as_deref(), &overrides, std::env::vars())?;
    Ok(vec![
        run_stage(stage, &cfg, &io).with_context(|| format!("stage `{stage}`"))?
    ])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(manifests) => {
            print_manifests(&manifests);
            let parked: usize = manifests.iter().map(|m| m.counts.parked).sum();
            if parked > 0 {
                eprintln!("warning: {parked} item(s) parked after agent failures");
                return ExitCode::from(5);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<CliError>())
                .map_or(1, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
