use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use panelflow_cli::{synth, LoadedManifest, Run, Stage};

#[derive(Parser)]
#[command(name = "panelflow", version, about = "Linked rotating-panel labour flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run manifest (TOML).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory; overrides the manifest's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Significance level for filtered regression tables.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Which states count as employed when deriving job loss and gain.
    #[arg(long, global = true, value_enum)]
    emp_dichotomy: Option<Dichotomy>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dichotomy {
    Table3,
    Strict,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse visit files, repair revisit quarters, assign panels.
    Ingest,
    /// Drop households failing the consistency rules. Exits 2 when any
    /// household was removed.
    Validate,
    /// Infer the FSU renumbering between consecutive survey years.
    MatchFsu,
    /// Assemble person histories, features and the attrition table.
    BuildPanel,
    /// Gross-flow matrices by sex and quarter, and their averages.
    Flows,
    /// Entry, exit and gross-flow rates by cell.
    Rates,
    /// Rate regression and job loss/gain logit models.
    Regress,
    /// Earnings-ratio distributions for exits from employment.
    Ecdf,
    /// Write a synthetic bundle with ground truth and a ready manifest.
    Synth,
    /// Every enabled stage in order.
    Pipeline,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(cli: &Cli) -> Result<Option<LoadedManifest>> {
    let Some(path) = &cli.manifest else {
        return Ok(None);
    };
    let mut m = LoadedManifest::load(path)?;
    if let Some(a) = cli.alpha {
        if !(0.0..=1.0).contains(&a) {
            bail!("--alpha must lie in [0, 1]");
        }
        m.manifest.thresholds.alpha = a;
    }
    if let Some(d) = cli.emp_dichotomy {
        m.manifest.regression.emp_dichotomy = match d {
            Dichotomy::Table3 => "table3",
            Dichotomy::Strict => "strict",
        }
        .into();
    }
    if let Some(s) = cli.seed {
        m.manifest.seed = Some(s);
    }
    Ok(Some(m))
}

fn run(cli: &Cli) -> Result<u8> {
    let manifest = load(cli)?;
    if let Command::Synth = cli.command {
        let out = match (&cli.out, &manifest) {
            (Some(o), _) => o.clone(),
            (None, Some(m)) => m.output_dir(None)?,
            (None, None) => bail!("synth needs --out or a manifest with output_dir"),
        };
        synth(manifest.as_ref(), &out, cli.seed)?;
        return Ok(0);
    }
    let manifest = manifest.context("--manifest is required")?;
    let out = manifest.output_dir(cli.out.as_deref())?;
    let run = Run::new(manifest, out)?;
    let stage = match cli.command {
        Command::Pipeline => {
            run.run_pipeline()?;
            return Ok(0);
        }
        Command::Synth => unreachable!("handled above"),
        Command::Ingest => Stage::Ingest,
        Command::Validate => Stage::Validate,
        Command::MatchFsu => Stage::MatchFsu,
        Command::BuildPanel => Stage::BuildPanel,
        Command::Flows => Stage::Flows,
        Command::Rates => Stage::Rates,
        Command::Regress => Stage::Regress,
        Command::Ecdf => Stage::Ecdf,
    };
    let outcome = run.run_stage(stage)?;
    Ok(if outcome.households_removed > 0 { 2 } else { 0 })
}
