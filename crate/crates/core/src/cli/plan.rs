use std::path::PathBuf;
use std::str::FromStr;

use crate::construction::{Resolutions, Schedule, Strategy};
use crate::error::{Error, Result};
use crate::field_norms::NormMethod;

/// Which `α, δ` schedule a sweep point uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Asymptotic,
    Moderate,
}

impl ScheduleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleKind::Asymptotic => "paper",
            ScheduleKind::Moderate => "moderate",
        }
    }

    pub fn schedule(&self, moderate_c: f64) -> Schedule {
        match self {
            ScheduleKind::Asymptotic => Schedule::Asymptotic,
            ScheduleKind::Moderate => Schedule::moderate(moderate_c),
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(ScheduleKind::Asymptotic),
            "moderate" => Ok(ScheduleKind::Moderate),
            _ => Err(Error::BadPlan(format!("unknown schedule `{s}`"))),
        }
    }
}

/// A parameter sweep read from a `key = value` file.
///
/// List-valued keys take comma-separated values. Lines starting with `#`
/// are comments. Resolution fields are set with `resolutions.<field> = v`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub dims: Vec<usize>,
    pub ks: Vec<usize>,
    pub ss: Vec<f64>,
    pub ps: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub schedules: Vec<ScheduleKind>,
    pub seeds: Vec<u64>,
    pub method: NormMethod,
    pub out: PathBuf,
    pub verify: bool,
    pub frames: usize,
    pub moderate_c: f64,
    pub resolutions: Resolutions,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            dims: vec![2],
            ks: vec![8, 16, 32, 64],
            ss: vec![0.5],
            ps: vec![2.0],
            strategies: vec![Strategy::Flow2d],
            schedules: vec![ScheduleKind::Asymptotic],
            seeds: vec![0],
            method: NormMethod::InterpolationBound,
            out: PathBuf::from("out"),
            verify: false,
            frames: 0,
            moderate_c: Schedule::DEFAULT_MODERATE_C,
            resolutions: Resolutions::default(),
        }
    }
}

/// One fully specified construction of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub dim: usize,
    pub k: usize,
    pub s: f64,
    pub p: f64,
    pub strategy: Strategy,
    pub schedule: ScheduleKind,
    pub seed: u64,
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|_| Error::BadPlan(format!("bad value `{v}` for `{key}`"))))
        .collect()
}

fn one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::BadPlan(format!("bad value `{value}` for `{key}`")))
}

fn set_resolution(r: &mut Resolutions, field: &str, value: &str) -> Result<()> {
    let key = format!("resolutions.{field}");
    match field {
        "x_cells" => r.x_cells = one(&key, value)?,
        "y_cells_per_strip" => r.y_cells_per_strip = one(&key, value)?,
        "patch_cells_per_delta" => r.patch_cells_per_delta = one(&key, value)?,
        "tube_cells_per_lambda" => r.tube_cells_per_lambda = one(&key, value)?,
        "squeeze_steps_per_alpha" => r.squeeze_steps_per_alpha = one(&key, value)?,
        "transport_nodes" => r.transport_nodes = one(&key, value)?,
        "correction_nodes" => r.correction_nodes = one(&key, value)?,
        "affine_nodes" => r.affine_nodes = one(&key, value)?,
        "transport_tol" => r.transport_tol = one(&key, value)?,
        "transport_max_step" => r.transport_max_step = one(&key, value)?,
        _ => return Err(Error::BadPlan(format!("unknown key `{key}`"))),
    }
    Ok(())
}

impl ExperimentPlan {
    pub fn parse(text: &str) -> Result<Self> {
        let mut plan = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::BadPlan(format!("line {}: expected `key = value`", no + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "dim" => plan.dims = list(key, value)?,
                "k" => plan.ks = list(key, value)?,
                "s" => plan.ss = list(key, value)?,
                "p" => plan.ps = list(key, value)?,
                "strategy" => plan.strategies = list(key, value)?,
                "schedule" => plan.schedules = list(key, value)?,
                "seed" => plan.seeds = list(key, value)?,
                "method" => plan.method = value.parse()?,
                "out" => plan.out = PathBuf::from(value),
                "verify" => plan.verify = one(key, value)?,
                "frames" => plan.frames = one(key, value)?,
                "moderate_c" => plan.moderate_c = one(key, value)?,
                _ => match key.strip_prefix("resolutions.") {
                    Some(field) => set_resolution(&mut plan.resolutions, field, value)?,
                    None => return Err(Error::BadPlan(format!("line {}: unknown key `{key}`", no + 1))),
                },
            }
        }
        Ok(plan)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::BadPlan(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sweep points in plan order: dim, strategy, schedule, p, s, seed, then k.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &dim in &self.dims {
            for &strategy in &self.strategies {
                for &schedule in &self.schedules {
                    for &p in &self.ps {
                        for &s in &self.ss {
                            for &seed in &self.seeds {
                                for &k in &self.ks {
                                    out.push(SweepPoint {
                                        dim,
                                        k,
                                        s,
                                        p,
                                        strategy,
                                        schedule,
                                        seed,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
