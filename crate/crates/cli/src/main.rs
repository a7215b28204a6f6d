use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use narrative_cli::config::{Overrides, PipelineConfig};
use narrative_cli::error::{exit_code, EXIT_OK, EXIT_USAGE};
use narrative_cli::report::write_report;
use narrative_cli::stages::{self, Ctx};
use narrative_cli::workspace::Workspace;

#[derive(Parser)]
#[command(name = "narrative", version, about = "Narrative-chain extraction and framing analysis")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true, env = "NARRATIVE_CONFIG")]
    config: Option<PathBuf>,
    /// Global random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true)]
    artifacts: Option<PathBuf>,
    /// Override one setting, e.g. `--set clustering.ks=[10,20]`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Rerun even when the stage is up to date.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Load the corpus and parses and assign train/test splits.
    Ingest,
    /// Extract (verb, object) event mentions.
    ExtractEvents,
    /// Distill the relation dataset from the knowledge graph.
    BuildRelationDataset,
    /// Train the Temporal/Causal/None relation classifier.
    TrainRelationModel,
    /// Classify event pairs into narrative chains.
    BuildChains,
    /// Expand chains into sentences.
    ExpandChains,
    /// Embed chain expansions and documents.
    Embed,
    /// Cluster chain embeddings for every configured k, fit on training-split chains.
    Cluster,
    /// Build per-document cluster-frequency features.
    Featurize,
    /// Train frame logistic regression for every k.
    TrainFrameLr,
    /// Train the neural fusion head and its embedding-only ablation.
    TrainFrameNeural,
    /// Run the random, LDA, event-type and template baselines.
    Baselines,
    /// Generate intrusion-test items and the blinded export.
    IntrusionGen,
    /// Answer intrusion items interactively.
    Annotate {
        #[arg(long)]
        annotator: String,
    },
    /// Score annotations: accuracy and Krippendorff's alpha.
    IntrusionScore,
    /// Rank clusters by mutual information with each frame.
    MiReport,
    /// Cross-validate the relation classifier against its baselines.
    Evaluate,
    /// Summarize all artifacts present.
    Report,
    /// Every non-interactive stage, then the report.
    All,
}

fn run_all(ctx: &Ctx) -> Result<()> {
    stages::ingest(ctx)?;
    stages::extract_events(ctx)?;
    stages::build_relation_dataset(ctx)?;
    stages::train_relation_model(ctx)?;
    stages::build_chains(ctx)?;
    stages::expand_chains(ctx)?;
    stages::embed(ctx)?;
    stages::cluster(ctx)?;
    stages::featurize(ctx)?;
    stages::train_frame_lr(ctx)?;
    stages::train_frame_neural(ctx)?;
    stages::baselines(ctx)?;
    stages::intrusion_gen(ctx)?;
    stages::mi_report(ctx)?;
    stages::evaluate(ctx)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let cfg = PipelineConfig::load(&Overrides { config: g.config, seed: g.seed, artifacts: g.artifacts, set: g.set })?;
    let ws = Workspace::open(&cfg.artifacts)?;
    let _lock = ws.lock()?;
    let ctx = Ctx { cfg, ws, force: g.force };
    match cli.command {
        Command::Ingest => stages::ingest(&ctx).map(drop),
        Command::ExtractEvents => stages::extract_events(&ctx).map(drop),
        Command::BuildRelationDataset => stages::build_relation_dataset(&ctx).map(drop),
        Command::TrainRelationModel => stages::train_relation_model(&ctx).map(drop),
        Command::BuildChains => stages::build_chains(&ctx).map(drop),
        Command::ExpandChains => stages::expand_chains(&ctx).map(drop),
        Command::Embed => stages::embed(&ctx).map(drop),
        Command::Cluster => stages::cluster(&ctx).map(drop),
        Command::Featurize => stages::featurize(&ctx).map(drop),
        Command::TrainFrameLr => stages::train_frame_lr(&ctx).map(drop),
        Command::TrainFrameNeural => stages::train_frame_neural(&ctx).map(drop),
        Command::Baselines => stages::baselines(&ctx).map(drop),
        Command::IntrusionGen => stages::intrusion_gen(&ctx).map(drop),
        Command::Annotate { annotator } => {
            stages::annotate(&ctx, &annotator, io::stdin().lock(), io::stdout()).map(drop)
        }
        Command::IntrusionScore => stages::intrusion_score(&ctx).map(drop),
        Command::MiReport => stages::mi_report(&ctx).map(drop),
        Command::Evaluate => stages::evaluate(&ctx).map(drop),
        Command::Report => report(&ctx),
        Command::All => run_all(&ctx).and_then(|()| report(&ctx)),
    }
}

fn report(ctx: &Ctx) -> Result<()> {
    for p in write_report(&ctx.cfg, &ctx.ws)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
