use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use berm_harness::case::{check_columns, run_case_study, Table};
use berm_harness::config::{parse_config, Config};
use berm_harness::suite::run_suite;
use berm_harness::{HarnessError, Result};
use clap::{Args, Parser, Subcommand};

/// Penalized-regression simulation suites and case studies.
#[derive(Parser)]
#[command(name = "berm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scenario suites.
    Suite {
        #[command(subcommand)]
        action: Run,
    },
    /// Case studies on CSV data.
    Case {
        #[command(subcommand)]
        action: Run,
    },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
}

#[derive(Subcommand)]
enum Run {
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Worker threads (defaults to the config value, then to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Replicates per scenario (suites only).
    #[arg(long)]
    replicates: Option<usize>,
    /// Suppress progress output.
    #[arg(long, short)]
    quiet: bool,
}

fn suite(args: RunArgs) -> Result<()> {
    let Config::Suite(mut cfg) = parse_config(&args.config)? else {
        return Err(HarnessError::schema("suite", "expected a [suite] config"));
    };
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    if let Some(o) = args.out {
        cfg.output_dir = o;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    cfg.validate()?;
    let total = cfg.expand()?.len() * cfg.replicates;
    let done = AtomicUsize::new(0);
    let quiet = args.quiet;
    let outcome = run_suite(&cfg, &|id, r| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        if !quiet {
            eprintln!("[{k}/{total}] {id} replicate {r}");
        }
    })?;
    eprintln!(
        "{} result rows, {} errors -> {}",
        outcome.results.len(),
        outcome.errors.len(),
        cfg.output_dir.display()
    );
    if outcome.results.is_empty() {
        return Err(HarnessError::AllCellsFailed);
    }
    Ok(())
}

fn case(args: RunArgs) -> Result<()> {
    let Config::Case(mut cfg) = parse_config(&args.config)? else {
        return Err(HarnessError::schema("case", "expected a [case] config"));
    };
    if let Some(o) = args.out {
        cfg.output_dir = o;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.replicates.is_some() {
        return Err(HarnessError::schema("replicates", "--replicates applies to suites only"));
    }
    let run = || run_case_study(&cfg);
    let out = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HarnessError::schema("threads", e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    println!("test R^2 {:.4}, {} of {} features selected", out.test_r2, out.selected.len(), out.features.len());
    for c in &out.comparisons {
        match c.test {
            Some(t) => println!(
                "{} vs {}: difference {:.3}, p = {:.3e}",
                c.eval_group, c.reference_group, t.difference, t.p_value
            ),
            None => println!("{} vs {}: too few rows to compare", c.eval_group, c.reference_group),
        }
    }
    eprintln!("reports -> {}", cfg.output_dir.display());
    Ok(())
}

fn validate(path: PathBuf) -> Result<()> {
    match parse_config(&path)? {
        Config::Suite(s) => {
            let n = s.expand()?.len();
            println!("suite config ok: {n} scenarios x {} replicates x {} methods", s.replicates, s.methods.len());
        }
        Config::Case(c) => {
            if c.data_path.exists() {
                check_columns(&c, &Table::read(&c.data_path)?)?;
            }
            println!("case config ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Suite { action: Run::Run(a) } => suite(a),
        Command::Case { action: Run::Run(a) } => case(a),
        Command::Validate { config } => validate(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
