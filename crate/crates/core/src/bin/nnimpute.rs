use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nnimpute::io::{estimate_from_csv, EstimateConfig};
use nnimpute::matching::Basis;
use nnimpute::sim::diagnostics::{bias_decomposition, discrepancy_trend, MatchingKind, TREND_SIZES};
use nnimpute::sim::scenario::{build_population, replicate_rng, run_scenario_on, DesignKind, ScenarioConfig};
use nnimpute::sim::write_outputs;
use nnimpute::survey::{draw_sample_with, pps_inclusion_probs, SamplingDesign};
use nnimpute::{fit_matching_model, nearest_neighbor_match, ParameterSpec};

#[derive(Parser)]
#[command(name = "nnimpute", version, about = "Nearest neighbor imputation with replication variance")]
struct Cli {
    /// Print the default scenario and estimate configurations and exit.
    #[arg(long)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo scenario and write report.csv, table.txt and replicates.csv.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use `fast_reps` replicates instead of `mc_reps`.
        #[arg(long)]
        fast: bool,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate targets and variances from a sample CSV.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decompose the imputation error of the mean and show how the matching
    /// discrepancy shrinks with n.
    DiagnoseBias {
        #[arg(long)]
        scenario: PathBuf,
        /// Samples per size in the trend.
        #[arg(long, default_value_t = 20)]
        reps: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_config {
        println!("# scenario file (simulate, diagnose-bias)");
        print!("{}", ScenarioConfig::default().to_commented_toml());
        println!("\n# estimate config (estimate)");
        print!("{}", EstimateConfig::default().to_commented_toml());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("nothing to do; see --help");
        return ExitCode::from(2);
    };
    match run(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> nnimpute::Result<()> {
    match command {
        Command::Simulate {
            scenario,
            out,
            fast,
            seed,
        } => {
            let mut cfg = ScenarioConfig::load(&scenario)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let reps = if fast { cfg.fast_reps } else { cfg.mc_reps };
            let population = build_population(&cfg)?;
            let report = run_scenario_on(&cfg, &population, reps)?;
            write_outputs(&report, &out)?;
            print!("{}", std::fs::read_to_string(out.join("table.txt"))?);
            eprintln!("{} replicates in {:.1?}", report.reps, report.wall_time);
        }
        Command::Estimate { data, config, out } => {
            let output = estimate_from_csv(&data, &config)?;
            output.write(&out)?;
            print!("{}", output.summary);
        }
        Command::DiagnoseBias { scenario, reps } => diagnose(&ScenarioConfig::load(&scenario)?, reps)?,
    }
    Ok(())
}

fn diagnose(cfg: &ScenarioConfig, reps: usize) -> nnimpute::Result<()> {
    let population = build_population(cfg)?;
    let design = match cfg.design {
        DesignKind::Srs => SamplingDesign::SimpleRandom { n: cfg.sample_size },
        DesignKind::Pps => {
            let (_, clipped) = pps_inclusion_probs(cfg.expected_size, &population.sizes)?;
            println!("pps: {clipped} clipped inclusion probabilities");
            SamplingDesign::PoissonPps {
                expected_size: cfg.expected_size,
                sizes: population.sizes.clone(),
            }
        }
    };
    let mut rng = replicate_rng(cfg.seed, 0);
    let sample = draw_sample_with(&population.data, &design, &mut rng)?.sample.mask_nonrespondents();
    let scores = fit_matching_model(&sample, cfg.basis())?.scores(&sample)?;
    let assignment = nearest_neighbor_match(&sample, &scores)?;
    let d = bias_decomposition(&population, &sample, &assignment, &ParameterSpec::Mean)?;
    println!(
        "population {} sample of n = {} ({} respondents), mean",
        cfg.population,
        sample.len(),
        sample.respondent_count()
    );
    println!("  D_N = {:.6}  B_N = {:.6}  sqrt(n)(mu_hat - mu) = {:.6}", d.d_n, d.b_n, d.scaled_error);
    println!("  identity gap = {:.3e}\n", d.identity_gap());

    let kinds = [
        ("score", MatchingKind::Score(cfg.basis())),
        ("mahalanobis", MatchingKind::Mahalanobis),
    ];
    println!("{:<12} {:>6} {:>16} {:>12}", "matching", "n", "mean discrepancy", "mean |B_N|");
    for (name, kind) in kinds {
        let trend = discrepancy_trend(&population, kind, &TREND_SIZES, reps, cfg.seed)?;
        for p in &trend.points {
            println!("{name:<12} {:>6} {:>16.6} {:>12.6}", p.n, p.mean_discrepancy, p.mean_abs_b_n);
        }
        println!(
            "{name:<12} log-log slope: discrepancy {:.3}, |B_N| {:.3}",
            trend.discrepancy_slope, trend.b_n_slope
        );
    }
    if cfg.basis() == Basis::FirstOrder {
        println!("\nnote: a first-order score does not contain the true mean of this population");
    }
    Ok(())
}
