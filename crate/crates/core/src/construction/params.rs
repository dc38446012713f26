use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Squeeze, mollified transport, unsqueeze, affine correction (n = 2).
    Flow2d,
    /// Squeeze, affine homotopy of the conjugated shear, unsqueeze.
    AffineNd,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Flow2d => "flow2d",
            Strategy::AffineNd => "affine_nd",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flow2d" => Ok(Strategy::Flow2d),
            "affine_nd" => Ok(Strategy::AffineNd),
            _ => Err(Error::BadPlan(format!("unknown strategy `{s}`"))),
        }
    }
}

/// How `α` and `δ` depend on `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// `α = (ln k)²`, `δ = k^{-(ln k + √ln k)}`.
    Asymptotic,
    /// `α = c ln k`, `δ = λ k^{-d}`.
    Moderate { c: f64, d: f64 },
}

impl Schedule {
    pub const DEFAULT_MODERATE_C: f64 = 2.0;
    pub const DEFAULT_MODERATE_D: f64 = 1.0;

    pub fn moderate(c: f64) -> Self {
        Schedule::Moderate {
            c,
            d: Self::DEFAULT_MODERATE_D,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Asymptotic => "paper",
            Schedule::Moderate { .. } => "moderate",
        }
    }

    /// `(α, λ, δ)` at `k`.
    pub fn evaluate(&self, k: usize) -> (f64, f64, f64) {
        let kf = k as f64;
        let l = kf.ln();
        match *self {
            Schedule::Asymptotic => {
                let alpha = l * l;
                let lambda = (-alpha).exp() / kf;
                let delta = kf.powf(-(l + l.sqrt()));
                (alpha, lambda, delta)
            }
            Schedule::Moderate { c, d } => {
                let alpha = c * l;
                let lambda = (-alpha).exp() / kf;
                (alpha, lambda, lambda * kf.powf(-d))
            }
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Grid and time-step counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolutions {
    /// Cells of the state grid along `x` on `[0, 1]`.
    pub x_cells: usize,
    /// State-grid cells per `1/k` along each transverse axis.
    pub y_cells_per_strip: usize,
    /// Transport pricing patches use spacing `δ / patch_cells_per_delta`.
    pub patch_cells_per_delta: usize,
    /// Affine pricing tubes use transverse spacing `λ / tube_cells_per_lambda`.
    pub tube_cells_per_lambda: usize,
    /// Squeeze integration steps per unit of `α`.
    pub squeeze_steps_per_alpha: usize,
    pub transport_nodes: usize,
    pub correction_nodes: usize,
    pub affine_nodes: usize,
    /// Adaptive transport tolerance in units of `δ`.
    pub transport_tol: f64,
    pub transport_max_step: f64,
}

impl Default for Resolutions {
    fn default() -> Self {
        Self {
            x_cells: 64,
            y_cells_per_strip: 8,
            patch_cells_per_delta: 8,
            tube_cells_per_lambda: 8,
            squeeze_steps_per_alpha: 200,
            transport_nodes: 33,
            correction_nodes: 9,
            affine_nodes: 9,
            transport_tol: 1e-3,
            transport_max_step: 1.0 / 1024.0,
        }
    }
}

/// Admissibility ratios `δ^s / (kλ^{2-s})` and `k^{-s²/(1-s)} λ^s / δ^s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub lower_ratio: f64,
    pub upper_ratio: f64,
    pub admissible: bool,
}

pub const ADMISSIBILITY_RATIO: f64 = 10.0;

pub fn admissibility(k: usize, lambda: f64, delta: f64, s: f64) -> Admissibility {
    let kf = k as f64;
    let lower_ratio = delta.powf(s) / (kf * lambda.powf(2.0 - s));
    let upper_ratio = if s < 1.0 {
        kf.powf(-s * s / (1.0 - s)) * lambda.powf(s) / delta.powf(s)
    } else {
        0.0
    };
    Admissibility {
        lower_ratio,
        upper_ratio,
        admissible: lower_ratio >= ADMISSIBILITY_RATIO && upper_ratio >= ADMISSIBILITY_RATIO,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionParams {
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub delta: f64,
    pub s: f64,
    pub p: f64,
    pub strategy: Strategy,
    pub schedule: Schedule,
    pub resolutions: Resolutions,
    pub admissibility: Admissibility,
}

impl ConstructionParams {
    pub fn with_schedule(k: usize, n: usize, s: f64, p: f64, strategy: Strategy, schedule: Schedule) -> Result<Self> {
        if k < 2 {
            return Err(Error::BadPlan(format!("k = {k} < 2")));
        }
        if n < 2 || n > crate::grid::MAX_DIM {
            return Err(Error::BadPlan(format!("dimension {n} outside 2..={}", crate::grid::MAX_DIM)));
        }
        if !(0.0..=1.0).contains(&s) || p.is_nan() || p < 1.0 {
            return Err(Error::BadPlan(format!("need s in [0, 1] and p >= 1, got s = {s}, p = {p}")));
        }
        let (alpha, lambda, delta) = schedule.evaluate(k);
        let params = Self {
            n,
            k,
            alpha,
            lambda,
            delta,
            s,
            p,
            strategy,
            schedule,
            resolutions: Resolutions::default(),
            admissibility: admissibility(k, lambda, delta, s),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn m(&self) -> usize {
        self.n - 1
    }

    /// Checks the structural invariants; admissibility is only recorded.
    pub fn validate(&self) -> Result<()> {
        let expect = (-self.alpha).exp() / self.k as f64;
        if (self.lambda - expect).abs() > 1e-12 * expect {
            return Err(Error::BadPlan(format!("λ = {} but e^-α/k = {expect}", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta < self.lambda) {
            return Err(Error::BadPlan(format!("need 0 < δ < λ, got δ = {}, λ = {}", self.delta, self.lambda)));
        }
        if self.alpha < 0.0 {
            return Err(Error::BadPlan("α must be non-negative".into()));
        }
        Ok(())
    }

    /// Whether `affine_nd` is allowed: `s < (n - 1)/p`.
    pub fn affine_subcritical(&self) -> bool {
        self.s < self.m() as f64 / self.p
    }

    /// State-grid spacing `h` (the largest spacing).
    pub fn state_spacing(&self) -> f64 {
        let hx = 1.0 / self.resolutions.x_cells as f64;
        let hy = 1.0 / (self.resolutions.y_cells_per_strip * self.k) as f64;
        hx.max(hy)
    }
}

/// Parameters under the asymptotic schedule `α = (ln k)²`.
pub fn default_params(k: usize, n: usize, s: f64, p: f64, strategy: Strategy) -> Result<ConstructionParams> {
    if k < 3 {
        return Err(Error::BadPlan(format!("the schedule needs k >= 3, got {k}")));
    }
    ConstructionParams::with_schedule(k, n, s, p, strategy, Schedule::Asymptotic)
}

pub fn moderate_params(k: usize, n: usize, s: f64, p: f64, strategy: Strategy, c: f64) -> Result<ConstructionParams> {
    if !(c > 0.0) {
        return Err(Error::BadPlan(format!("moderate schedule needs c > 0, got {c}")));
    }
    ConstructionParams::with_schedule(k, n, s, p, strategy, Schedule::moderate(c))
}
