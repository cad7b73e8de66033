use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use sumsq_core::scenario::{Format, Outcome, RunRecord, Scenario, SchemeSpec, Task};

#[derive(Parser, Debug)]
#[command(
    name = "sumsq",
    version,
    about = "Check Hardy, Rellich, Green and Stokes identities for sums of squares of vector fields"
)]
struct Cli {
    /// Scenario file (TOML). Without it each subcommand runs its bundled default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for the JSON and CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Gauss points per axis per cell.
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Geometric rings between the first excision radius and the boundary.
    #[arg(long, global = true)]
    refine: Option<usize>,
    /// First excision radius as a fraction of the pole-to-boundary distance.
    #[arg(long, global = true)]
    eps0: Option<f64>,
    /// Halvings of the excision radius.
    #[arg(long, global = true)]
    eps_levels: Option<usize>,
    /// Monte-Carlo samples for the oracle cross-checks.
    #[arg(long, global = true)]
    mc_samples: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write only this format (both by default).
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// First and second Green identities.
    Green,
    /// Divergence formula per frame field.
    Stokes,
    /// Local Hardy inequalities over an (α, β) grid.
    Hardy,
    /// Uncertainty principles.
    Uncertainty,
    /// Rellich inequalities.
    Rellich,
    /// Rellich inequalities with a gradient on the right.
    RellichGrad,
    /// Representation formula at interior points.
    Representation,
    /// Calibrates the constant of Γ and checks the unit flux.
    Calibrate,
    /// Minimizes the Rayleigh ratio over a trial family.
    Sharpness,
    /// Parses and validates scenario files without integrating.
    ValidateConfig {
        /// Files to validate in addition to `--config`.
        paths: Vec<PathBuf>,
    },
}

impl Command {
    fn task(&self) -> Option<Task> {
        Some(match self {
            Command::Green => Task::Green,
            Command::Stokes => Task::Stokes,
            Command::Hardy => Task::Hardy,
            Command::Uncertainty => Task::Uncertainty,
            Command::Rellich => Task::Rellich,
            Command::RellichGrad => Task::RellichGrad,
            Command::Representation => Task::Representation,
            Command::Calibrate => Task::Calibrate,
            Command::Sharpness => Task::Sharpness,
            Command::ValidateConfig { .. } => return None,
        })
    }
}

fn bundled(task: Task) -> &'static str {
    match task {
        Task::Green => include_str!("../../../scenarios/euclid3_green.toml"),
        Task::Stokes => include_str!("../../../scenarios/r3_nonsmooth_stokes.toml"),
        Task::Hardy => include_str!("../../../scenarios/euclid3_hardy.toml"),
        Task::Uncertainty => include_str!("../../../scenarios/euclid3_uncertainty.toml"),
        Task::Rellich => include_str!("../../../scenarios/euclid5_rellich.toml"),
        Task::RellichGrad => include_str!("../../../scenarios/euclid5_rellich_grad.toml"),
        Task::Representation => include_str!("../../../scenarios/euclid3_representation.toml"),
        Task::Calibrate => include_str!("../../../scenarios/euclid3_calibrate.toml"),
        Task::Sharpness => include_str!("../../../scenarios/euclid3_sharpness.toml"),
    }
}

fn overrides(cli: &Cli) -> SchemeSpec {
    SchemeSpec {
        order: cli.order,
        refinement: cli.refine,
        eps0: cli.eps0,
        eps_levels: cli.eps_levels,
        mc_samples: cli.mc_samples,
        seed: cli.seed,
        max_nodes: None,
    }
}

fn summarize(record: &RunRecord, passed: bool) {
    let status = if passed { "PASS" } else { "FAIL" };
    match &record.outcome {
        Outcome::Inequalities(reports) => {
            let holds = reports.iter().filter(|r| r.holds()).count();
            println!("{status} {}: {holds}/{} reports hold", record.scenario, reports.len());
            for r in reports.iter().filter(|r| !r.holds()) {
                println!(
                    "  {} {} α={} β={}: slack {:e} (error {:e}) {}",
                    r.name, r.function, r.alpha, r.beta, r.slack, r.error_total, r.verdict
                );
            }
        }
        Outcome::Green(rows) => {
            let worst = rows.iter().map(|r| r.relative).fold(0.0, f64::max);
            println!(
                "{status} {}: {} identities, largest relative residual {worst:e}",
                record.scenario,
                rows.len()
            );
        }
        Outcome::Stokes(rows) => {
            for r in rows {
                println!(
                    "{} {} set {}: interior {} boundary {} residual {:e}{}",
                    if r.holds { "PASS" } else { "FAIL" },
                    record.scenario,
                    r.set,
                    r.interior,
                    r.boundary,
                    r.residual,
                    r.mc_interior.map_or(String::new(), |m| format!(
                        " monte-carlo {m} ± {}",
                        r.mc_sigma.unwrap_or(0.0)
                    ))
                );
            }
        }
        Outcome::Representation(rows) => {
            let worst = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
            println!(
                "{status} {}: {} evaluations, largest residual {worst:e}",
                record.scenario,
                rows.len()
            );
        }
        Outcome::Calibration(r) => {
            println!(
                "{status} {}: c = {}, check flux {} (deviation {:e})",
                record.scenario, r.constant, r.check_flux, r.deviation
            );
        }
        Outcome::Sharpness(r) => {
            println!(
                "{status} {}: {} α={} β={} best ratio {} at θ = {:?}, constant {}, gap {:.3}%, restart spread {:.3}%, {} evaluations",
                record.scenario,
                r.inequality,
                r.alpha,
                r.beta,
                r.best_ratio,
                r.best_theta,
                r.constant,
                100.0 * r.relative_gap(),
                100.0 * r.restart_spread,
                r.trace.len()
            );
        }
    }
}

fn load(cli: &Cli, task: Task) -> anyhow::Result<Scenario> {
    match &cli.config {
        Some(path) => {
            let s = Scenario::load(path)?;
            if s.task != task {
                bail!("{} describes task `{}`, not `{}`", path.display(), s.task, task);
            }
            Ok(s)
        }
        None => Ok(Scenario::from_toml_str(bundled(task))?),
    }
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let over = overrides(cli);
    let Some(task) = cli.command.task() else {
        let Command::ValidateConfig { paths } = &cli.command else {
            unreachable!()
        };
        let mut all: Vec<PathBuf> = cli.config.iter().cloned().collect();
        all.extend(paths.iter().cloned());
        if all.is_empty() {
            bail!("validate-config needs --config or at least one path");
        }
        for p in &all {
            let s = Scenario::load(p)?;
            s.validate(&over).with_context(|| format!("{}", p.display()))?;
            println!("ok {} ({} / {})", p.display(), s.name, s.task);
        }
        return Ok(true);
    };
    let scenario = load(cli, task)?;
    let record = scenario.run(&over)?;
    let passed = scenario.passed(&record);
    let dir = cli
        .out
        .clone()
        .or_else(|| scenario.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let formats = match cli.format {
        Some(FormatArg::Json) => vec![Format::Json],
        Some(FormatArg::Csv) => vec![Format::Csv],
        None => vec![Format::Json, Format::Csv],
    };
    for path in record.write(&dir, &formats)? {
        log::info!("wrote {}", path.display());
    }
    summarize(&record, passed);
    Ok(passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
