use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field_norms::FieldSample;
use crate::grid::{BoxRegion, GridSpec, ScalarField};

/// A time-dependent vector field `u(t, ·)` on `t ∈ [0, 1]`.
///
/// Implementations must return exactly zero outside `support_box`.
pub trait VelocitySource: Send + Sync {
    fn dim(&self) -> usize;

    fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Sampled components of `u(t, ·)` used for pricing.
    fn snapshot(&self, t: f64) -> Result<Vec<FieldSample>>;

    fn support_box(&self) -> BoxRegion;

    fn time_invariant(&self) -> bool {
        false
    }

    /// A particle resting at `x` stays there until this time.
    fn idle_until(&self, _x: &[f64]) -> f64 {
        0.0
    }

    /// The velocity at `x` vanishes for every time after `t`.
    fn at_rest(&self, _t: f64, _x: &[f64]) -> bool {
        false
    }

    /// Source-specific fixed-step integration of `sign · u` over `[0, t_end]`
    /// with `steps` steps per unit time. Returns `false` to fall back to the
    /// generic integrator.
    fn advect_fast(&self, _points: &mut [f64], _steps: usize, _t_end: f64, _sign: f64) -> bool {
        false
    }
}

/// Time stepping used to integrate one segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stepping {
    /// Classical RK4 with this many equal steps on `[0, 1]`.
    Fixed(usize),
    /// RK4 with step-doubling error control: absolute local tolerance,
    /// largest step, and the first step taken after an idle period.
    Adaptive { tol: f64, max_step: f64, first_step: f64 },
}

#[derive(Clone)]
pub struct Segment {
    pub label: String,
    pub source: Arc<dyn VelocitySource>,
    /// Quadrature nodes in the segment's own time `[0, 1]`.
    pub time_nodes: Vec<f64>,
    pub stepping: Stepping,
}

impl std::fmt::Debug for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Segment")
            .field("label", &self.label)
            .field("time_nodes", &self.time_nodes.len())
            .field("stepping", &self.stepping)
            .finish()
    }
}

pub fn uniform_nodes(count: usize) -> Vec<f64> {
    let count = count.max(2);
    (0..count).map(|i| i as f64 / (count - 1) as f64).collect()
}

fn check_nodes(nodes: &[f64]) -> Result<()> {
    let ok = nodes.len() >= 2
        && nodes[0] == 0.0
        && *nodes.last().unwrap() == 1.0
        && nodes.windows(2).all(|w| w[1] > w[0]);
    if !ok {
        return Err(Error::InvalidField(
            "time nodes must increase strictly from 0 to 1".into(),
        ));
    }
    Ok(())
}

impl Segment {
    pub fn new(label: impl Into<String>, source: Arc<dyn VelocitySource>, time_nodes: Vec<f64>, stepping: Stepping) -> Result<Self> {
        check_nodes(&time_nodes)?;
        Ok(Self {
            label: label.into(),
            source,
            time_nodes,
            stepping,
        })
    }

    pub fn reversed(&self) -> Segment {
        Segment {
            label: self.label.clone(),
            source: Arc::new(Reversed(self.source.clone())),
            time_nodes: self.time_nodes.iter().rev().map(|t| 1.0 - t).collect(),
            stepping: self.stepping,
        }
    }
}

/// A concatenation of segments; segment `j` of `N` occupies `[j/N, (j+1)/N]`
/// with its velocity scaled by `N`.
#[derive(Clone, Debug, Default)]
pub struct VelocityPath {
    pub segments: Vec<Segment>,
}

impl VelocityPath {
    pub fn single(segment: Segment) -> Self {
        Self {
            segments: vec![segment],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.segments.first().map(|s| s.source.dim())
    }

    /// Global time nodes of the concatenated parametrization.
    pub fn time_nodes(&self) -> Vec<f64> {
        let n = self.segments.len() as f64;
        let mut out: Vec<f64> = Vec::new();
        for (j, s) in self.segments.iter().enumerate() {
            for t in &s.time_nodes {
                let g = (j as f64 + t) / n;
                if out.last().is_none_or(|l| g > *l) {
                    out.push(g);
                }
            }
        }
        out
    }

    /// `u(t, x)` of the concatenated parametrization.
    pub fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let n = self.segments.len();
        if n == 0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let scaled = (t.clamp(0.0, 1.0) * n as f64).min(n as f64 - 1e-15);
        let j = (scaled.floor() as usize).min(n - 1);
        self.segments[j].source.velocity(scaled - j as f64, x, out);
        out.iter_mut().for_each(|v| *v *= n as f64);
    }
}

pub fn concat(paths: &[VelocityPath]) -> Result<VelocityPath> {
    if paths.is_empty() {
        return Err(Error::EmptyPath);
    }
    let dims: Vec<usize> = paths.iter().filter_map(|p| p.dim()).collect();
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::IncompatibleGrids("paths of different dimensions".into()));
    }
    Ok(VelocityPath {
        segments: paths.iter().flat_map(|p| p.segments.iter().cloned()).collect(),
    })
}

/// Time-reversed, negated path: `u_r(t) = -u(1 - t)`.
pub fn reverse(path: &VelocityPath) -> VelocityPath {
    VelocityPath {
        segments: path.segments.iter().rev().map(Segment::reversed).collect(),
    }
}

struct Reversed(Arc<dyn VelocitySource>);

impl VelocitySource for Reversed {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.0.velocity(1.0 - t, x, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }

    fn snapshot(&self, t: f64) -> Result<Vec<FieldSample>> {
        self.0.snapshot(1.0 - t)
    }

    fn support_box(&self) -> BoxRegion {
        self.0.support_box()
    }

    fn time_invariant(&self) -> bool {
        self.0.time_invariant()
    }

    fn advect_fast(&self, points: &mut [f64], steps: usize, t_end: f64, sign: f64) -> bool {
        self.0.time_invariant() && self.0.advect_fast(points, steps, t_end, -sign)
    }
}

/// Velocity given by grid samples at time nodes: multilinear in space,
/// linear in time.
pub struct SampledSource {
    times: Vec<f64>,
    /// `fields[i][a]` is component `a` at time node `i`.
    fields: Vec<Vec<ScalarField>>,
    support: BoxRegion,
}

impl SampledSource {
    pub fn new(times: Vec<f64>, fields: Vec<Vec<ScalarField>>) -> Result<Self> {
        check_nodes(&times)?;
        if fields.len() != times.len() {
            return Err(Error::InvalidField("one field per time node required".into()));
        }
        let dim = fields[0].len();
        let grid = fields[0][0].grid().clone();
        let mut support: Option<BoxRegion> = None;
        for f in fields.iter().flatten() {
            if f.dim() != dim {
                return Err(Error::InvalidField("component count differs from dimension".into()));
            }
            if *f.grid() != grid {
                return Err(Error::IncompatibleGrids("time slices on different grids".into()));
            }
            support = Some(match support {
                None => f.support().clone(),
                Some(s) => s.union(f.support()),
            });
        }
        if fields.iter().any(|c| c.len() != dim) {
            return Err(Error::InvalidField("component count differs between time nodes".into()));
        }
        Ok(Self {
            times,
            fields,
            support: support.unwrap(),
        })
    }

    /// Time-constant field from components.
    pub fn constant(components: Vec<ScalarField>) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![components.clone(), components])
    }

    pub fn grid(&self) -> &GridSpec {
        self.fields[0][0].grid()
    }

    fn bracket(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(0.0, 1.0);
        let i = match self.times.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.times.len() - 2),
        };
        let f = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        (i, f)
    }
}

impl VelocitySource for SampledSource {
    fn dim(&self) -> usize {
        self.fields[0].len()
    }

    fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let (i, f) = self.bracket(t);
        for a in 0..out.len() {
            let v0 = self.fields[i][a].value(x);
            let v1 = self.fields[i + 1][a].value(x);
            out[a] = (1.0 - f) * v0 + f * v1;
        }
    }

    fn snapshot(&self, t: f64) -> Result<Vec<FieldSample>> {
        let (i, f) = self.bracket(t);
        (0..self.dim())
            .map(|a| {
                let blended = if f == 0.0 {
                    self.fields[i][a].clone()
                } else if f == 1.0 {
                    self.fields[i + 1][a].clone()
                } else {
                    self.fields[i][a].scaled(1.0 - f).sum(&self.fields[i + 1][a].scaled(f))?
                };
                Ok(FieldSample::Grid(blended))
            })
            .collect()
    }

    fn support_box(&self) -> BoxRegion {
        self.support.clone()
    }

    fn time_invariant(&self) -> bool {
        self.fields.windows(2).all(|w| w[0] == w[1])
    }
}

type VelocityFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Closed-form velocity, sampled on `grid` for pricing.
pub struct FnSource {
    dim: usize,
    grid: GridSpec,
    support: BoxRegion,
    invariant: bool,
    f: Box<VelocityFn>,
}

impl FnSource {
    pub fn new(
        grid: GridSpec,
        support: BoxRegion,
        invariant: bool,
        f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim: grid.dim(),
            grid,
            support,
            invariant,
            f: Box::new(f),
        }
    }
}

impl VelocitySource for FnSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) {
        if self.support.contains(x) {
            (self.f)(t, x, out);
        } else {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn snapshot(&self, t: f64) -> Result<Vec<FieldSample>> {
        let mut o = vec![0.0; self.dim];
        (0..self.dim)
            .map(|a| {
                let f = ScalarField::from_fn(self.grid.clone(), self.support.clone(), |x| {
                    (self.f)(t, x, &mut o);
                    o[a]
                })?;
                Ok(FieldSample::Grid(f))
            })
            .collect()
    }

    fn support_box(&self) -> BoxRegion {
        self.support.clone()
    }

    fn time_invariant(&self) -> bool {
        self.invariant
    }
}
