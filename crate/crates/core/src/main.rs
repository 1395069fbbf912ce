use acsharp::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

/// Stochastic Allen-Cahn interface laboratory.
#[derive(Parser, Debug)]
#[command(name = "acsharp", version, about)]
struct Cli {
    /// experiment: sample-noise | evolve | sweep-generation |
    /// compare-sandwich | track-interface | limit-law
    experiment: String,

    /// TOML configuration file
    #[arg(long)]
    config: PathBuf,

    /// override the config's root seed
    #[arg(long)]
    root_seed: Option<u64>,

    /// output directory (defaults to the config's out_dir, or ./runs/<experiment>)
    #[arg(long)]
    out: Option<PathBuf>,

    /// also dump sample scalar trajectories as CSV
    #[arg(long)]
    dump_trajectories: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> acsharp::Result<()> {
    let kind = ExperimentKind::parse(&cli.experiment)?;
    let mut config = ExperimentConfig::load(&cli.config)?;
    config.experiment = kind;
    if let Some(seed) = cli.root_seed {
        config.root_seed = seed;
    }
    if cli.dump_trajectories {
        config.dump_trajectories = true;
    }
    let out_dir = cli
        .out
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(kind.name()));

    let report = run_experiment(&config, Some(&out_dir))?;

    if config.dump_trajectories && config.grid.dim == 1 {
        let f = config.reaction.build()?;
        acsharp::harness::experiments::dump_sample_trajectories(&config, &f, &out_dir)?;
    }

    println!("experiment : {}", report.experiment);
    println!("config hash: {}", report.config_hash);
    for v in &report.hypothesis_violations {
        println!("hypothesis : {v}");
    }
    for row in &report.eps_rows {
        println!(
            "eps {:>8.4}: {}/{} pass ({:.1}%), {} failed",
            row.eps,
            row.n_pass,
            row.n_paths,
            100.0 * row.pass_fraction,
            row.n_failed
        );
    }
    if let Some(trend) = report.pass_trend_nondecreasing {
        println!("trend      : nondecreasing = {trend}");
    }
    for s in &report.slopes {
        println!(
            "slope      : {} = {:.4} (r2 = {:.4})",
            s.statistic, s.slope, s.r2
        );
    }
    if let Some(ll) = &report.limit_law {
        println!(
            "limit law  : pass = {} (mean z = {:.2}, var z = {:.2}, alpha1 = {:.4}, alpha2 = {:.4})",
            ll.pass, ll.mean_z, ll.var_z, ll.alpha1_calibrated, ll.alpha2_calibrated
        );
    }
    println!(
        "wall clock : {:.2} s; outputs in {}",
        report.wall_clock_sec,
        out_dir.display()
    );
    Ok(())
}
