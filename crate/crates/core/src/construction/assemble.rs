use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::affine::{affine_nd_path, AffineSource};
use super::correction::correction_path;
use super::params::{ConstructionParams, Strategy};
use super::squeeze::squeeze_path;
use super::strips::{split_strips, StripDecomposition, StripPiece};
use super::target::{state_grid, TargetSpec};
use super::transport::{transport_path_with, TransportSource};
use crate::diffeo::{advect_segment, advect_until, compose, concat, invert, path_cost, path_cost_many, reverse, CostReport, GridDiffeo, Segment, VelocityPath};
use crate::error::{Error, Result};
use crate::field_norms::{NormMethod, NormOptions};
use crate::grid::{BoxRegion, ScalarField};

/// How paths are priced.
#[derive(Clone, Debug)]
pub struct Pricing {
    pub method: NormMethod,
    pub norm: NormOptions,
    /// Uniform quadrature nodes per segment; 0 keeps each segment's own nodes.
    pub quadrature_nodes: usize,
}

impl Default for Pricing {
    fn default() -> Self {
        Self {
            method: NormMethod::InterpolationBound,
            norm: NormOptions::default(),
            quadrature_nodes: 0,
        }
    }
}

/// Costs grouped by step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Squeeze and unsqueeze.
    pub squeeze: f64,
    /// Transport, or the affine homotopy for `affine_nd`.
    pub transport: f64,
    pub correct: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn from_report(report: &CostReport) -> Self {
        let mut out = Self::default();
        for c in &report.per_segment {
            match step_of(&c.label) {
                "squeeze" | "unsqueeze" => out.squeeze += c.cost,
                "transport" | "affine" => out.transport += c.cost,
                "correct" => out.correct += c.cost,
                _ => {}
            }
        }
        out.total = report.total;
        out
    }
}

/// Step name of a segment label `step/piece`.
pub fn step_of(label: &str) -> &str {
    label.split('/').next().unwrap_or(label)
}

/// Everything retained about one strip piece.
#[derive(Clone)]
pub struct PieceRun {
    pub index: Vec<u8>,
    pub label: String,
    pub zeta: ScalarField,
    /// Segments of this piece in path order.
    pub path: VelocityPath,
    /// `Ψ⁻¹ Θ Ψ` (flow2d) or `Ψ⁻¹ Γ Ψ` (affine_nd) at the state nodes.
    pub conjugated: GridDiffeo,
    /// Displacement of `Γ = Ψ⁻¹ Θ Ψ Φ_I⁻¹` (flow2d only).
    pub xi: Option<ScalarField>,
    pub transport: Option<Arc<TransportSource>>,
    pub affine: Option<Arc<AffineSource>>,
    pub cost: CostReport,
}

/// A finished construction with its intermediates.
#[derive(Clone)]
pub struct ConstructionRun {
    pub params: ConstructionParams,
    pub target: TargetSpec,
    pub decomposition: StripDecomposition,
    pub pieces: Vec<PieceRun>,
    pub path: VelocityPath,
    pub cost: CostReport,
    pub endpoint: GridDiffeo,
    /// Sup distance at the nodes between the endpoint and the target.
    pub endpoint_error: f64,
}

impl ConstructionRun {
    pub fn breakdown(&self) -> CostBreakdown {
        CostBreakdown::from_report(&self.cost)
    }

    /// Cost breakdowns of the same path priced at each of `ss`.
    pub fn costs_at(&self, ss: &[f64], pricing: &Pricing) -> Result<Vec<CostBreakdown>> {
        let reports = path_cost_many(&self.path, ss, self.params.p, pricing.method, pricing.quadrature_nodes, &pricing.norm)?;
        Ok(reports.iter().map(CostBreakdown::from_report).collect())
    }

    /// Endpoint error when the affine maps `Γ` are skipped: the correction
    /// segments under `flow2d`, the affine homotopies under `affine_nd`.
    pub fn ablation_error(&self) -> Result<f64> {
        let skip = match self.params.strategy {
            Strategy::Flow2d => "correct",
            Strategy::AffineNd => "affine",
        };
        let segs: Vec<&Segment> = self.path.segments.iter().filter(|s| step_of(&s.label) != skip).collect();
        let mut pts = GridDiffeo::identity(self.target.grid().clone()).images();
        for seg in segs {
            advect_segment(seg, &mut pts, 1, 1.0)?;
        }
        Ok(target_distance(&self.target, &pts))
    }

    /// The flow of the assembled path at global time `t`.
    pub fn frame(&self, t: f64) -> Result<GridDiffeo> {
        if t >= 1.0 {
            return Ok(self.endpoint.clone());
        }
        let mut pts = GridDiffeo::identity(self.target.grid().clone()).images();
        advect_until(&self.path, &mut pts, 1, t)?;
        GridDiffeo::from_images(self.target.grid().clone(), &pts)
    }
}

fn labelled(path: VelocityPath, step: &str, piece: &str) -> VelocityPath {
    VelocityPath {
        segments: path
            .segments
            .into_iter()
            .map(|mut s| {
                s.label = format!("{step}/{piece}");
                s
            })
            .collect(),
    }
}

fn flow_nodes(grid: &crate::grid::GridSpec, path: &VelocityPath) -> Result<GridDiffeo> {
    let mut pts = GridDiffeo::identity(grid.clone()).images();
    for seg in &path.segments {
        advect_segment(seg, &mut pts, 1, 1.0)?;
    }
    GridDiffeo::from_images(grid.clone(), &pts)
}

fn build_piece(params: &ConstructionParams, piece: &StripPiece, pricing: &Pricing) -> Result<Option<PieceRun>> {
    if piece.zeta.is_zero() {
        return Ok(None);
    }
    let grid = piece.zeta.grid();
    let label = piece.label();
    let sq = squeeze_path(params, &piece.lattice)?;
    let unsq = labelled(reverse(&sq), "unsqueeze", &label);
    let sq = labelled(sq, "squeeze", &label);
    let (path, conjugated, xi, transport, affine) = match params.strategy {
        Strategy::Flow2d => {
            let transport = Arc::new(TransportSource::new(params, piece)?);
            let tr = labelled(transport_path_with(params, transport.clone())?, "transport", &label);
            let head = concat(&[sq, tr, unsq])?;
            let a = flow_nodes(grid, &head)?;
            let gamma = compose(&a, &invert(&piece.shear()?)?)?;
            let xi = ScalarField::new(grid.clone(), gamma.displacement(0).to_vec(), grid.bounding_box())?;
            let corr = labelled(reverse(&correction_path(params, xi.clone())?), "correct", &label);
            (concat(&[head, corr])?, a, Some(xi), Some(transport), None)
        }
        Strategy::AffineNd => {
            let af = labelled(affine_nd_path(params, piece)?, "affine", &label);
            let path = concat(&[sq, af, unsq])?;
            let a = flow_nodes(grid, &path)?;
            (path, a, None, None, Some(Arc::new(AffineSource::new(params, piece)?)))
        }
    };
    let cost = path_cost(&path, params.s, params.p, pricing.method, pricing.quadrature_nodes, &pricing.norm)?;
    Ok(Some(PieceRun {
        index: piece.index.clone(),
        label,
        zeta: piece.zeta.clone(),
        path,
        conjugated,
        xi,
        transport,
        affine,
        cost,
    }))
}

/// Sup distance at the nodes between particle images and `x ↦ (x + ζ(x), y)`.
fn target_distance(target: &TargetSpec, images: &[f64]) -> f64 {
    let g = target.grid();
    let d = g.dim();
    images
        .par_chunks(d)
        .enumerate()
        .map(|(i, img)| {
            let x = g.node(i);
            let want = x[0] + target.eval(&x);
            let mut e = (img[0] - want).abs();
            for a in 1..d {
                e = e.max((img[a] - x[a]).abs());
            }
            e
        })
        .reduce(|| 0.0, f64::max)
}

fn check_applicable(target: &TargetSpec, params: &ConstructionParams) -> Result<()> {
    params.validate()?;
    if target.dim != params.n {
        return Err(Error::IncompatibleGrids(format!("target has dimension {}, params {}", target.dim, params.n)));
    }
    if target.grid() != &state_grid(params)? {
        return Err(Error::IncompatibleGrids("target must live on the state grid of the parameters".into()));
    }
    match params.strategy {
        Strategy::Flow2d if params.n != 2 => Err(Error::StrategyNotApplicable(format!(
            "flow2d needs n = 2, got n = {}",
            params.n
        ))),
        Strategy::AffineNd if !params.affine_subcritical() => Err(Error::StrategyNotApplicable(format!(
            "affine_nd needs s < (n-1)/p, got s = {}, n = {}, p = {}",
            params.s, params.n, params.p
        ))),
        _ => Ok(()),
    }
}

/// Builds, prices and flows the whole construction.
pub fn build_run(target: &TargetSpec, params: &ConstructionParams, pricing: &Pricing) -> Result<ConstructionRun> {
    check_applicable(target, params)?;
    let decomposition = split_strips(target, params.k)?;
    let pieces: Vec<PieceRun> = decomposition
        .pieces
        .par_iter()
        .map(|p| build_piece(params, p, pricing))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut cost = CostReport::empty(params.s, params.p, pricing.method);
    cost.quadrature_nodes = pricing.quadrature_nodes;
    let mut segments = Vec::new();
    for p in &pieces {
        cost.extend(p.cost.clone());
        segments.extend(p.path.segments.iter().cloned());
    }
    let path = VelocityPath { segments };
    let grid = target.grid().clone();
    // The first piece's conjugated map already carries its squeeze and transport.
    let mut pts = match pieces.first() {
        Some(first) => first.conjugated.images(),
        None => GridDiffeo::identity(grid.clone()).images(),
    };
    let skip = if pieces.is_empty() { 0 } else { 3 };
    for seg in path.segments.iter().skip(skip) {
        advect_segment(seg, &mut pts, 1, 1.0)?;
    }
    let endpoint = GridDiffeo::from_images(grid, &pts)?;
    let endpoint_error = target_distance(target, &pts);
    let tol = 10.0 * 5.0 * target.grid().max_spacing();
    if endpoint_error > tol {
        return Err(Error::AssemblyFailed(format!(
            "endpoint misses the target by {endpoint_error:e} > {tol:e}"
        )));
    }
    Ok(ConstructionRun {
        params: params.clone(),
        target: target.clone(),
        decomposition,
        pieces,
        path,
        cost,
        endpoint,
        endpoint_error,
    })
}

/// The assembled path, its cost and its endpoint at the default pricing.
pub fn assemble_full_path(target: &TargetSpec, params: &ConstructionParams) -> Result<(VelocityPath, CostReport, GridDiffeo)> {
    let run = build_run(target, params, &Pricing::default())?;
    Ok((run.path, run.cost, run.endpoint))
}

/// The analytic target map at the nodes of its grid.
pub fn target_map(target: &TargetSpec) -> Result<GridDiffeo> {
    let g = target.grid().clone();
    GridDiffeo::from_fn(g, BoxRegion::cube(target.dim, 0.0, 1.0), |x, out| {
        out[0] = x[0] + target.eval(x);
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::params::{default_params, Strategy};
    use crate::construction::target::DEFAULT_SLOPE;

    fn run(k: usize, n: usize, strategy: Strategy, zero: bool) -> ConstructionRun {
        let p = default_params(k, n, 0.5, 2.0, strategy).unwrap();
        let g = state_grid(&p).unwrap();
        let t = if zero { TargetSpec::zero(g).unwrap() } else { TargetSpec::bump(g, DEFAULT_SLOPE).unwrap() };
        build_run(&t, &p, &Pricing::default()).unwrap()
    }

    #[test]
    fn zero_target_gives_empty_path() {
        let r = run(8, 2, Strategy::Flow2d, true);
        assert!(r.path.is_empty());
        assert_eq!(r.cost.total, 0.0);
        assert_eq!(r.endpoint_error, 0.0);
    }

    #[test]
    fn flow2d_endpoint_hits_target_and_correction_matters() {
        let r = run(8, 2, Strategy::Flow2d, false);
        let h = r.target.grid().max_spacing();
        assert!(r.endpoint_error <= 5.0 * h, "{:e}", r.endpoint_error);
        let labels: Vec<&str> = r.path.segments.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(
            labels,
            ["squeeze/0", "transport/0", "unsqueeze/0", "correct/0", "squeeze/1", "transport/1", "unsqueeze/1", "correct/1"]
        );
        let ablated = r.ablation_error().unwrap();
        assert!(ablated > r.endpoint_error, "{ablated:e} vs {:e}", r.endpoint_error);
        let b = r.breakdown();
        assert!((b.squeeze + b.transport + b.correct - b.total).abs() < 1e-12 * b.total);
    }

    #[test]
    fn last_frame_is_the_endpoint() {
        let r = run(8, 2, Strategy::Flow2d, false);
        let mut pts = GridDiffeo::identity(r.target.grid().clone()).images();
        advect_until(&r.path, &mut pts, 1, 1.0).unwrap();
        assert_eq!(pts, r.endpoint.images());
    }

    #[test]
    fn affine_endpoint_in_three_dimensions() {
        let r = run(8, 3, Strategy::AffineNd, false);
        assert_eq!(r.pieces.len(), 4);
        assert!(r.endpoint_error <= 5.0 * r.target.grid().max_spacing(), "{:e}", r.endpoint_error);
    }

    #[test]
    fn flow2d_rejects_three_dimensions() {
        let p = default_params(8, 3, 0.5, 2.0, Strategy::Flow2d).unwrap();
        let t = TargetSpec::bump(state_grid(&p).unwrap(), DEFAULT_SLOPE).unwrap();
        assert!(matches!(build_run(&t, &p, &Pricing::default()), Err(Error::StrategyNotApplicable(_))));
    }
}
