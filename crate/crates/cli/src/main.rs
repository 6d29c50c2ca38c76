//! `incentive-sim`: run budget sweeps, the break-even analysis and the
//! survey-size study from a TOML config.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use incentive_core::acceptance::break_even_analysis;
use incentive_core::config::{ConfigError, Resources, RunConfig};
use incentive_core::pipeline::{run_sweep, survey_size_sweep, World};
use incentive_core::report;
use incentive_core::Cents;

#[derive(Parser)]
#[command(
    name = "incentive-sim",
    version,
    about = "Budget-constrained decarbonization incentive simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of the config over its budget sweep.
    Run(Common),
    /// Per-household break-even table and failing fractions per horizon.
    Breakeven(Common),
    /// Bandit value and survey coverage across survey sizes.
    SurveyDiag(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: the config's `out`, else ./results).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweep points.
    #[arg(long)]
    workers: Option<usize>,
    /// Resource directory (grids/, profiles/, scc.csv). Overrides the config,
    /// which in turn overrides $INCENTIVE_RESOURCES.
    #[arg(long)]
    resources: Option<PathBuf>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

struct Prepared {
    cfg: RunConfig,
    out: PathBuf,
    world: World,
    resources: Resources,
}

fn prepare(args: &Common) -> Result<Prepared, Failure> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(dir) = &args.resources {
        cfg.resources.dir = Some(dir.clone());
    }
    cfg.validate()?;
    let households = cfg.households()?;
    cfg.check_population(households.len())?;
    let resources = cfg.load_resources()?;
    let world = cfg.world(households, &resources).map_err(runtime)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(runtime)?;
    Ok(Prepared {
        cfg,
        out,
        world,
        resources,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(runtime)
}

fn cmd_run(args: &Common) -> Result<(), Failure> {
    let p = prepare(args)?;
    let scenarios = p.cfg.scenarios(&p.resources);
    let results = run_sweep(&p.world, &scenarios, p.cfg.workers).map_err(runtime)?;

    let csv_path = p.out.join("results.csv");
    report::write_long_csv(&results, create(&csv_path)?).map_err(runtime)?;
    let runs = p.out.join("runs");
    fs::create_dir_all(&runs).map_err(runtime)?;
    for (i, r) in results.iter().enumerate() {
        report::write_json(r, create(&runs.join(format!("{i:03}.json")))?).map_err(runtime)?;
    }
    fs::write(p.out.join("config.toml"), p.cfg.to_toml_string()).map_err(runtime)?;

    for r in &results {
        println!(
            "{} budget {}: status quo {:.2}%, bandit {:.2}%, optimal {:.2}%",
            r.scenario,
            r.budget,
            r.status_quo.reduction_percent,
            r.bandit.reduction_percent,
            r.optimal.reduction_percent
        );
    }
    println!(
        "wrote {} and {} run files",
        csv_path.display(),
        results.len()
    );
    Ok(())
}

fn cmd_breakeven(args: &Common) -> Result<(), Failure> {
    let p = prepare(args)?;
    let payback = p.cfg.cost.payback_years[0];
    let mut reports = Vec::new();
    for &d in &p.cfg.cost.discount {
        let s = p.cfg.cost_scenario(d, payback);
        let rep = break_even_analysis(
            &p.world.households,
            &p.world.outcomes,
            &s,
            &p.cfg.breakeven.horizons,
        )
        .map_err(runtime)?;
        let path = p.out.join(format!("breakeven_table_r{}.csv", d.rate()));
        report::write_break_even_csv(&rep, create(&path)?).map_err(runtime)?;
        for (t, f) in rep.horizons.iter().zip(&rep.failing_fraction) {
            println!(
                "discount {} horizon {t}: {:.1}% fail to break even",
                d.rate(),
                100.0 * f
            );
        }
        reports.push((d.rate(), rep));
    }
    let path = p.out.join("breakeven_summary.csv");
    report::write_break_even_summary_csv(&reports, create(&path)?).map_err(runtime)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_survey_diag(args: &Common) -> Result<(), Failure> {
    let p = prepare(args)?;
    let scenario = p
        .cfg
        .scenarios(&p.resources)
        .into_iter()
        .next()
        .expect("validated config has a scenario");
    let seeds: Vec<u64> = (0..u64::from(p.cfg.survey_diag.seeds))
        .map(|k| p.cfg.seed.wrapping_add(k))
        .collect();
    let budget = Cents::from_dollars(p.cfg.survey_diag.budget);
    let rows = survey_size_sweep(
        &p.world,
        &scenario,
        budget,
        &p.cfg.survey_diag.sizes,
        &seeds,
        p.cfg.workers,
    )
    .map_err(runtime)?;
    report::write_survey_size_csv(&rows, create(&p.out.join("survey_diag.csv"))?)
        .map_err(runtime)?;
    report::write_coverage_csv(&rows, create(&p.out.join("survey_coverage.csv"))?)
        .map_err(runtime)?;
    report::write_json(&rows, create(&p.out.join("survey_diag.json"))?).map_err(runtime)?;
    for r in &rows {
        println!(
            "N = {:>5}: mean bandit value ${:.2}",
            r.survey_size, r.mean_bandit_value
        );
    }
    println!("wrote {}", p.out.join("survey_diag.csv").display());
    Ok(())
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    let mut last = out.clone();
    for cause in e.chain().skip(1) {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            out.push_str(": ");
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Breakeven(a) => cmd_breakeven(a),
        Command::SurveyDiag(a) => cmd_survey_diag(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {}", describe(&e));
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(3)
        }
    }
}
