use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use jay_repair::critics::CriticFamily;
use jay_repair::pipeline::{self, Overrides, RepairRequest, RunConfig};
use jay_repair::{Error, Result};

#[derive(Parser)]
#[command(name = "jay-repair", version, about = "Back-translation program repair for Jay programs")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Critic family: none, compiler or tests.
    #[arg(long, global = true)]
    critic: Option<String>,
    /// Back-translation iterations.
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Beam width for repair and evaluation, or breaker beam for gen-bugs.
    #[arg(long, global = true)]
    beam: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory of the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corrupt the correct corpus and fill the sample store.
    GenMechanical,
    /// Train the initial fixer and breaker from the store.
    InitTrain,
    /// Run the back-translation loop from the initial models.
    Backtranslate,
    /// Repair one program at a given line span.
    Repair {
        #[arg(long)]
        program: PathBuf,
        /// LINE or START-END, 1-based and inclusive.
        #[arg(long)]
        span: String,
        #[arg(long)]
        model: PathBuf,
        /// Test suite; defaults to <program stem>.tests.json beside the program.
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Reference fix used to judge correctness.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Evaluate a fixer checkpoint.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Generate a certified bug corpus with a breaker checkpoint.
    GenBugs {
        #[arg(long)]
        model: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Usage(format!("cannot start {j} workers: {e}")))?;
    }
    let overrides = Overrides {
        critic: cli.critic.as_deref().map(str::parse::<CriticFamily>).transpose()?,
        iterations: cli.iterations,
        beam: cli.beam,
        seed: cli.seed,
    };
    let base = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let cfg = base.resolve(&overrides)?;
    let out = |default: PathBuf| cli.out.clone().unwrap_or(default);
    match cli.command {
        Command::GenMechanical => {
            let s = pipeline::gen_mechanical(&cfg)?;
            println!("locations: {}, bugs: {}, over-length: {}", s.locations, s.bugs, s.rejected);
            for (rule, n) in &s.per_rule {
                println!("  {rule}: {n}");
            }
            println!("store added {} samples", s.store_added);
            for c in &s.store {
                println!("  {:?} {}: {}", c.direction, c.origin.label(), c.count);
            }
        }
        Command::InitTrain => {
            let s = pipeline::init_train(&cfg)?;
            for log in [&s.fixer, &s.breaker] {
                if let Some(o) = &log.outcome {
                    println!(
                        "{:?}: {} train / {} validation samples, best validation loss {:.4} at epoch {} of {}",
                        log.direction, log.train_size, log.val_size, o.best_val_loss, o.best_epoch, o.epochs_run
                    );
                }
            }
            println!("checkpoints in {}", cfg.init_dir().display());
        }
        Command::Backtranslate => {
            let dir = out(cfg.run_dir.join(format!("bt-{}", cfg.backtranslation.critic)));
            let logs = pipeline::backtranslate(&cfg, &dir)?;
            for l in &logs {
                println!(
                    "iteration {}: fixer kept {}/{} (+{} Break), breaker kept {}/{} (+{} Fix)",
                    l.iteration,
                    l.fixer_generation.critic.kept,
                    l.fixer_generation.generated,
                    l.fixer_generation.store_added,
                    l.breaker_generation.critic.kept,
                    l.breaker_generation.generated,
                    l.breaker_generation.store_added
                );
            }
            println!("run directory {}", dir.display());
        }
        Command::Repair { program, span, model, suite, reference } => {
            let req = RepairRequest { program, span: pipeline::parse_span(&span)?, suite, reference };
            let dir = out(cfg.run_dir.join("repair"));
            let has_reference = req.reference.is_some();
            for (p, a) in pipeline::repair_program(&cfg, &req, &model, &dir)? {
                let correct = if has_reference { a.correct.to_string() } else { "?".into() };
                println!(
                    "rank {:>3}  log-prob {:>9.3}  compiles={} plausible={} correct={}",
                    p.rank, p.log_prob, a.compiles, a.plausible, correct
                );
                for line in p.replacement.lines() {
                    println!("          | {line}");
                }
            }
            println!("patches in {}", dir.display());
        }
        Command::Evaluate { model } => {
            let dir = out(cfg.run_dir.join("eval"));
            let r = pipeline::evaluate_model(&cfg, &model, &dir)?;
            println!("tasks: {}, correct: {}, plausible: {}", r.tasks, r.correct, r.plausible);
            println!(
                "compilability: {:.2}% ({} of {} candidates)",
                r.compilability, r.compiling_candidates, r.candidates
            );
            println!("report in {}", dir.display());
        }
        Command::GenBugs { model } => {
            let dir = out(cfg.run_dir.join("bugs"));
            let k = cli.beam.unwrap_or(cfg.backtranslation.k_buggy);
            let (s, _) = pipeline::gen_bugs(&cfg, &model, &dir, k)?;
            println!(
                "{} locations x {} beams: {} generated, {} accepted by the {} critic, {} emitted",
                s.locations, s.k_buggy, s.generated, s.critic_counts.kept, s.critic, s.emitted
            );
            println!("bugs in {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
