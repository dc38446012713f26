//! Sweep runner behind the `vanishing` binary.

mod plan;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use plan::{ExperimentPlan, ScheduleKind, SweepPoint};

use crate::construction::{build_run, state_grid, ConstructionParams, ConstructionRun, Pricing, TargetSpec, DEFAULT_SLOPE};
use crate::diffeo::write_snapshot;
use crate::error::{Error, Result};
use crate::field_norms::NormOptions;
use crate::oracle::{verify_bounds, BoundCertificate, Calibration};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_ASSEMBLY: i32 = 3;
pub const EXIT_BAD_PLAN: i32 = 4;

pub const CSV_HEADER: [&str; 15] = [
    "dim",
    "k",
    "s",
    "p",
    "strategy",
    "schedule",
    "cost_squeeze",
    "cost_transport",
    "cost_correct",
    "cost_total",
    "endpoint_error",
    "admissible",
    "wall_ms",
    "method",
    "seed",
];

/// Whether the geodesic distance vanishes for `W^{s,p}` on `ℝⁿ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Vanishing,
    Positive,
    Borderline,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Vanishing => "vanishing",
            Regime::Positive => "positive",
            Regime::Borderline => "borderline",
        }
    }
}

pub fn classify(s: f64, p: f64, dim: usize) -> Regime {
    let n = dim as f64;
    let sp = s * p;
    if s >= 1.0 {
        Regime::Positive
    } else if (sp - n).abs() <= 1e-12 * n {
        Regime::Borderline
    } else if sp > n {
        Regime::Positive
    } else {
        Regime::Vanishing
    }
}

/// The CSV columns of one finished point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub dim: usize,
    pub k: usize,
    pub s: f64,
    pub p: f64,
    pub strategy: String,
    pub schedule: String,
    pub cost_squeeze: f64,
    pub cost_transport: f64,
    pub cost_correct: f64,
    pub cost_total: f64,
    pub endpoint_error: f64,
    pub admissible: bool,
    pub wall_ms: u64,
    pub method: String,
    pub seed: u64,
}

impl ResultRow {
    fn of(point: &SweepPoint, run: &ConstructionRun, plan: &ExperimentPlan, wall_ms: u64) -> Self {
        let b = run.breakdown();
        Self {
            dim: point.dim,
            k: point.k,
            s: point.s,
            p: point.p,
            strategy: point.strategy.as_str().into(),
            schedule: point.schedule.as_str().into(),
            cost_squeeze: b.squeeze,
            cost_transport: b.transport,
            cost_correct: b.correct,
            cost_total: b.total,
            endpoint_error: run.endpoint_error,
            admissible: run.params.admissibility.admissible,
            wall_ms,
            method: plan.method.as_str().into(),
            seed: point.seed,
        }
    }
}

/// What `run` produced, besides the files.
#[derive(Debug, Default)]
pub struct RunSummary {
    pub rows: Vec<ResultRow>,
    pub certificates: Vec<BoundCertificate>,
    pub failures: Vec<(SweepPoint, String)>,
    pub exit_code: i32,
}

pub fn params_for(point: &SweepPoint, plan: &ExperimentPlan) -> Result<ConstructionParams> {
    let schedule = point.schedule.schedule(plan.moderate_c);
    let mut params = ConstructionParams::with_schedule(point.k, point.dim, point.s, point.p, point.strategy, schedule)?;
    params.resolutions = plan.resolutions.clone();
    Ok(params)
}

pub fn pricing_for(point: &SweepPoint, plan: &ExperimentPlan) -> Pricing {
    Pricing {
        method: plan.method,
        norm: NormOptions {
            seed: point.seed,
            ..NormOptions::default()
        },
        ..Pricing::default()
    }
}

/// Builds and prices one point on the default target.
pub fn run_point(point: &SweepPoint, plan: &ExperimentPlan) -> Result<(ConstructionRun, u64)> {
    let start = Instant::now();
    let params = params_for(point, plan)?;
    let target = TargetSpec::bump(state_grid(&params)?, DEFAULT_SLOPE)?;
    let run = build_run(&target, &params, &pricing_for(point, plan))?;
    Ok((run, start.elapsed().as_millis() as u64))
}

fn frame_name(point: &SweepPoint, j: usize) -> String {
    format!(
        "frame_n{}_k{}_s{}_p{}_{}_{}_seed{}_{j:03}.txt",
        point.dim,
        point.k,
        point.s,
        point.p,
        point.strategy.as_str(),
        point.schedule.as_str(),
        point.seed
    )
}

/// Frame times `j / (N - 1)`; a single frame is the endpoint.
pub fn frame_times(frames: usize) -> Vec<f64> {
    match frames {
        0 => vec![],
        1 => vec![1.0],
        n => (0..n).map(|j| j as f64 / (n - 1) as f64).collect(),
    }
}

fn write_frames(dir: &Path, point: &SweepPoint, run: &ConstructionRun, frames: usize) -> Result<()> {
    for (j, t) in frame_times(frames).into_iter().enumerate() {
        let phi = run.frame(t)?;
        let f = BufWriter::new(File::create(dir.join(frame_name(point, j)))?);
        write_snapshot(&phi, f)?;
    }
    Ok(())
}

/// Sanity checks that need no construction; failures are bad plans.
pub fn check_plan(plan: &ExperimentPlan) -> Result<()> {
    for point in plan.points() {
        let params = params_for(&point, plan)?;
        match point.strategy {
            crate::construction::Strategy::Flow2d if point.dim != 2 => {
                return Err(Error::BadPlan(format!("flow2d needs dim = 2, got {}", point.dim)))
            }
            crate::construction::Strategy::AffineNd if !params.affine_subcritical() => {
                return Err(Error::BadPlan(format!(
                    "affine_nd needs s < (dim-1)/p, got s = {}, p = {}, dim = {}",
                    point.s, point.p, point.dim
                )))
            }
            _ => {}
        }
    }
    if plan.method == crate::field_norms::NormMethod::MonteCarlo && plan.seeds.is_empty() {
        return Err(Error::BadPlan("monte_carlo needs at least one seed".into()));
    }
    Ok(())
}

/// Group of a point for calibration: everything except `k`.
fn group_key(p: &SweepPoint) -> String {
    format!("{}|{}|{}|{}|{}|{}", p.dim, p.strategy.as_str(), p.schedule.as_str(), p.s, p.p, p.seed)
}

/// Runs every sweep point and writes `results.csv`, `certificates.jsonl`
/// (with verification) and `frames/` (with frames) into `plan.out`.
pub fn run(plan: &ExperimentPlan) -> Result<RunSummary> {
    check_plan(plan)?;
    fs::create_dir_all(&plan.out)?;
    let frames_dir = plan.out.join("frames");
    if plan.frames > 0 {
        fs::create_dir_all(&frames_dir)?;
    }
    let points = plan.points();
    for p in &points {
        if classify(p.s, p.p, p.dim) == Regime::Borderline {
            eprintln!(
                "s = {}, p = {}, dim = {}: borderline, no theoretical guarantee",
                p.s, p.p, p.dim
            );
        }
    }

    let outcomes: Vec<Result<(ConstructionRun, u64)>> = points.par_iter().map(|p| run_point(p, plan)).collect();

    let mut summary = RunSummary::default();
    let mut runs: Vec<Option<ConstructionRun>> = Vec::with_capacity(points.len());
    for (point, outcome) in points.iter().zip(outcomes) {
        match outcome {
            Ok((run, ms)) => {
                summary.rows.push(ResultRow::of(point, &run, plan, ms));
                runs.push(Some(run));
            }
            Err(e) => {
                eprintln!("{point:?}: {e}");
                summary.failures.push((point.clone(), e.to_string()));
                runs.push(None);
            }
        }
    }

    let mut csv = csv::WriterBuilder::new().has_headers(false).from_path(plan.out.join("results.csv"))?;
    csv.write_record(CSV_HEADER)?;
    for row in &summary.rows {
        csv.serialize(row)?;
    }
    csv.flush()?;

    if plan.frames > 0 {
        points
            .par_iter()
            .zip(runs.par_iter())
            .filter_map(|(p, r)| r.as_ref().map(|r| (p, r)))
            .try_for_each(|(p, r)| write_frames(&frames_dir, p, r, plan.frames))?;
    }

    if plan.verify {
        let mut calibrations: BTreeMap<String, Calibration> = BTreeMap::new();
        let mut order: Vec<usize> = (0..points.len()).filter(|&i| runs[i].is_some()).collect();
        order.sort_by_key(|&i| (group_key(&points[i]), points[i].k));
        for &i in &order {
            let run = runs[i].as_ref().expect("filtered");
            let key = group_key(&points[i]);
            if !calibrations.contains_key(&key) {
                calibrations.insert(key.clone(), Calibration::fit(run)?);
            }
        }
        let per_point = (0..points.len())
            .into_par_iter()
            .map(|i| match &runs[i] {
                Some(run) => verify_bounds(run, calibrations.get(&group_key(&points[i]))),
                None => Ok(vec![]),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = BufWriter::new(File::create(plan.out.join("certificates.jsonl"))?);
        for certs in per_point {
            for c in certs {
                writeln!(out, "{}", c.to_json_line()?)?;
                summary.certificates.push(c);
            }
        }
        out.flush()?;
    }

    summary.exit_code = if !summary.failures.is_empty() {
        EXIT_ASSEMBLY
    } else if summary.certificates.iter().any(|c| !c.passed) {
        EXIT_VERIFY
    } else {
        EXIT_OK
    };
    Ok(summary)
}

/// Maps a top-level error to an exit code.
pub fn exit_code_of(e: &Error) -> i32 {
    match e {
        Error::BadPlan(_) | Error::UnsupportedMethod(_) | Error::StrategyNotApplicable(_) => EXIT_BAD_PLAN,
        _ => EXIT_ASSEMBLY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_follows_the_trichotomy() {
        assert_eq!(classify(0.5, 2.0, 2), Regime::Vanishing);
        assert_eq!(classify(1.0, 2.0, 2), Regime::Positive);
        assert_eq!(classify(0.5, 4.0, 2), Regime::Borderline);
        assert_eq!(classify(0.9, 4.0, 3), Regime::Positive);
        assert_eq!(classify(0.0, 1.0, 1), Regime::Vanishing);
    }

    #[test]
    fn frame_times_end_at_one() {
        assert!(frame_times(0).is_empty());
        assert_eq!(frame_times(1), vec![1.0]);
        assert_eq!(frame_times(3), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn flow2d_in_three_dimensions_is_a_bad_plan() {
        let plan = ExperimentPlan::parse("dim = 3\nk = 8\n").unwrap();
        assert!(matches!(check_plan(&plan), Err(Error::BadPlan(_))));
    }
}
