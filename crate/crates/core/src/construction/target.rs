use serde::{Deserialize, Serialize};

use super::params::ConstructionParams;
use super::profiles::{target_bump, target_bump_derivative, target_bump_max_slope};
use crate::diffeo::GridDiffeo;
use crate::error::{Error, Result};
use crate::grid::{BoxRegion, GridSpec, ScalarField};

/// Slope `max |∂₁ζ|` of the default target.
pub const DEFAULT_SLOPE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticForm {
    /// `ζ = amplitude · b(x) b(y_1) ⋯ b(y_m)`.
    SeparableBump { amplitude: f64 },
}

impl AnalyticForm {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            AnalyticForm::SeparableBump { amplitude } => amplitude * x.iter().map(|&c| target_bump(c)).product::<f64>(),
        }
    }

    pub fn partial_x(&self, x: &[f64]) -> f64 {
        match *self {
            AnalyticForm::SeparableBump { amplitude } => {
                amplitude * target_bump_derivative(x[0]) * x[1..].iter().map(|&c| target_bump(c)).product::<f64>()
            }
        }
    }
}

/// The shear target `Φ(x, y) = (x + ζ(x, y), y)`.
#[derive(Clone, Debug)]
pub struct TargetSpec {
    pub dim: usize,
    pub zeta: ScalarField,
    pub analytic: Option<AnalyticForm>,
    /// `1 + min ∂₁ζ`, required positive.
    pub margin: f64,
}

/// The state grid on `[0, 1]ⁿ`: spacing `1/x_cells` along `x` and
/// `1/(y_cells_per_strip · k)` transversally.
pub fn state_grid(params: &ConstructionParams) -> Result<GridSpec> {
    let r = &params.resolutions;
    let mut n = vec![r.x_cells + 1];
    n.extend(std::iter::repeat_n(r.y_cells_per_strip * params.k + 1, params.n - 1));
    GridSpec::new(vec![0.0; params.n], vec![1.0; params.n], n)
}

fn unit_cube(grid: &GridSpec) -> Result<()> {
    if grid.lo().iter().any(|v| *v != 0.0) || grid.hi().iter().any(|v| *v != 1.0) {
        return Err(Error::InvalidGrid("target grid must be the unit cube".into()));
    }
    if grid.dim() < 2 {
        return Err(Error::InvalidGrid("target needs dimension at least 2".into()));
    }
    Ok(())
}

impl TargetSpec {
    /// Default separable bump scaled so that `max |∂₁ζ| = slope`.
    pub fn bump(grid: GridSpec, slope: f64) -> Result<Self> {
        unit_cube(&grid)?;
        if !(0.0..1.0).contains(&slope) {
            return Err(Error::InvalidField(format!("slope {slope} must lie in [0, 1)")));
        }
        let form = AnalyticForm::SeparableBump {
            amplitude: slope / target_bump_max_slope(),
        };
        let support = BoxRegion::cube(grid.dim(), 0.1, 0.9);
        let zeta = ScalarField::from_fn(grid, support, |x| form.value(x))?;
        Ok(Self {
            dim: zeta.dim(),
            zeta,
            analytic: Some(form),
            margin: 1.0 - slope,
        })
    }

    pub fn zero(grid: GridSpec) -> Result<Self> {
        unit_cube(&grid)?;
        Ok(Self {
            dim: grid.dim(),
            zeta: ScalarField::zeros(grid),
            analytic: None,
            margin: 1.0,
        })
    }

    /// Grid-only target; checks `ζ ≥ 0`, `∂₁ζ > -1` and vanishing on the boundary.
    pub fn from_field(zeta: ScalarField) -> Result<Self> {
        let grid = zeta.grid().clone();
        unit_cube(&grid)?;
        if zeta.values().iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidField("ζ must be non-negative".into()));
        }
        let mut idx = vec![0usize; grid.dim()];
        for (i, v) in zeta.values().iter().enumerate() {
            grid.unravel(i, &mut idx);
            let on_face = (0..grid.dim()).any(|a| idx[a] == 0 || idx[a] + 1 == grid.resolution()[a]);
            if on_face && *v != 0.0 {
                return Err(Error::InvalidField("ζ must vanish on the boundary of the unit cube".into()));
            }
        }
        let dx = grid.partial_at_nodes(zeta.values(), 0);
        let margin = 1.0 + dx.iter().fold(f64::INFINITY, |m, v| m.min(*v)).min(0.0);
        if margin <= 0.0 {
            return Err(Error::InvalidField(format!("∂₁ζ reaches {}", margin - 1.0)));
        }
        Ok(Self {
            dim: grid.dim(),
            zeta,
            analytic: None,
            margin,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.zeta.grid()
    }

    pub fn is_zero(&self) -> bool {
        self.zeta.is_zero()
    }

    /// `ζ(x)`: closed form when available, multilinear otherwise.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.analytic {
            Some(f) => f.value(x),
            None => self.zeta.value(x),
        }
    }

    /// The target map sampled at the grid nodes.
    pub fn shear(&self) -> Result<GridDiffeo> {
        shear_map(&self.zeta)
    }
}

/// `(x, y) ↦ (x + f(x, y), y)` at the nodes of `f`'s grid.
pub fn shear_map(f: &ScalarField) -> Result<GridDiffeo> {
    let grid = f.grid().clone();
    let mut disp = vec![vec![0.0; grid.len()]; grid.dim()];
    disp[0] = f.values().to_vec();
    GridDiffeo::new(grid, disp, f.support().clone())
}
