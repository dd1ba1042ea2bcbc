use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod run;

use run::RunContext;

#[derive(Parser)]
#[command(name = "counterarg", version, about = "Feature-controlled counter-argument generation pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to anything it leaves out.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// `dotted.key=value` override, applied after the file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run directory holding config.json, manifest.json, artifacts/ and logs/.
    #[arg(long, global = true, default_value = "runs/default")]
    run_dir: PathBuf,
    /// Rerun a stage even when the manifest says it is complete.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Load and normalize the dialogue corpus.
    Ingest,
    /// Train the classification, entailment and similarity value models.
    TrainValues,
    /// Train the four-member argument-type ensemble.
    TrainArgtype,
    /// Label every turn with the four feature families.
    Annotate,
    /// Train the control-code generator on the annotated corpus.
    TrainGenerator,
    /// Generate one response.
    Generate(commands::GenerateArgs),
    /// Train and score the feature-combination grid.
    EvalGrid(commands::GridArgs),
    /// Feature distribution and grid summary.
    Report,
    /// Blinded packets for human rating.
    ExportHumeval(commands::HumevalArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::TrainValues => "train-values",
            Command::TrainArgtype => "train-argtype",
            Command::Annotate => "annotate",
            Command::TrainGenerator => "train-generator",
            Command::Generate(_) => "generate",
            Command::EvalGrid(_) => "eval-grid",
            Command::Report => "report",
            Command::ExportHumeval(_) => "export-humeval",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let name = cli.command.name();
    let ctx = match RunContext::open(&cli.common.run_dir, cli.common.config.as_deref(), &cli.common.overrides) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("error: invalid configuration\n{e}");
            return ExitCode::from(1);
        }
    };
    let diagnostics = ctx.config.diagnostics();
    if !diagnostics.is_empty() {
        eprintln!("error: invalid configuration");
        for d in diagnostics {
            eprintln!("  {d}");
        }
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Ingest => commands::ingest(&ctx, cli.common.force),
        Command::TrainValues => commands::train_values(&ctx, cli.common.force),
        Command::TrainArgtype => commands::train_argtype(&ctx, cli.common.force),
        Command::Annotate => commands::annotate(&ctx, cli.common.force),
        Command::TrainGenerator => commands::train_generator(&ctx, cli.common.force),
        Command::Generate(args) => commands::generate(&ctx, &args),
        Command::EvalGrid(args) => commands::eval_grid(&ctx, &args, cli.common.force),
        Command::Report => commands::report(&ctx),
        Command::ExportHumeval(args) => commands::export_humeval(&ctx, &args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{name} failed: {e:#}");
            eprintln!("error: {name} failed: {e:#}");
            if e.downcast_ref::<counterarg_core::Error>().is_some_and(|e| matches!(e, counterarg_core::Error::Config(_))) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
