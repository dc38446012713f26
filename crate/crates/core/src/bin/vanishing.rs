use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use vanishing_diffeo::cli::{exit_code_of, run, ExperimentPlan, ScheduleKind, EXIT_BAD_PLAN};
use vanishing_diffeo::field_norms::NormMethod;

/// Builds short diffeomorphism paths over a parameter sweep and prices them.
#[derive(Parser, Debug)]
#[command(name = "vanishing", version)]
struct Args {
    /// Plan file with `key = value` lines.
    #[arg(long)]
    plan: PathBuf,
    /// Output directory (overrides the plan's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit bound certificates and fail with exit code 2 if any fails.
    #[arg(long)]
    verify: bool,
    /// Number of deformation frames per point.
    #[arg(long)]
    frames: Option<usize>,
    /// direct, monte_carlo or interpolation_bound.
    #[arg(long)]
    method: Option<String>,
    /// Seed for Monte Carlo pricing (replaces the plan's seeds).
    #[arg(long)]
    seed: Option<u64>,
    /// paper or moderate (replaces the plan's schedules).
    #[arg(long)]
    schedule: Option<String>,
    /// `c` in the moderate schedule `α = c ln k`.
    #[arg(long = "moderate-c")]
    moderate_c: Option<f64>,
}

fn plan_from(args: &Args) -> vanishing_diffeo::Result<ExperimentPlan> {
    let mut plan = ExperimentPlan::from_file(&args.plan)?;
    if let Some(out) = &args.out {
        plan.out = out.clone();
    }
    plan.verify |= args.verify;
    if let Some(f) = args.frames {
        plan.frames = f;
    }
    if let Some(m) = &args.method {
        plan.method = m.parse::<NormMethod>()?;
    }
    if let Some(s) = args.seed {
        plan.seeds = vec![s];
    }
    if let Some(s) = &args.schedule {
        plan.schedules = vec![s.parse::<ScheduleKind>()?];
    }
    if let Some(c) = args.moderate_c {
        plan.moderate_c = c;
    }
    Ok(plan)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let plan = match plan_from(&args) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_BAD_PLAN as u8);
        }
    };
    match run(&plan) {
        Ok(summary) => {
            eprintln!(
                "{} rows, {} certificates ({} failed), {} failed points",
                summary.rows.len(),
                summary.certificates.len(),
                summary.certificates.iter().filter(|c| !c.passed).count(),
                summary.failures.len()
            );
            ExitCode::from(summary.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_of(&e) as u8)
        }
    }
}
