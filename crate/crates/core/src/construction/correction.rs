use std::sync::Arc;

use super::params::ConstructionParams;
use crate::diffeo::{uniform_nodes, Segment, Stepping, VelocityPath, VelocitySource};
use crate::error::{Error, Result};
use crate::field_norms::FieldSample;
use crate::grid::{BoxRegion, ScalarField};

/// Velocity of the affine homotopy `Γ_t(x, y) = (x + t ξ(x, y), y)`:
/// `u_t(X, y) = ξ(γ_{t,y}⁻¹(X), y)`, inverted row by row.
pub struct CorrectionSource {
    xi: ScalarField,
}

impl CorrectionSource {
    /// `xi` lives on a grid whose first axis spans the `x` direction.
    pub fn new(xi: ScalarField) -> Result<Self> {
        let g = xi.grid();
        let nx = g.resolution()[0];
        let s0 = g.stride(0);
        let h = g.spacing()[0];
        let v = xi.values();
        for r in 0..s0 {
            for i in 0..nx - 1 {
                let a = g.coord(0, i) + v[r + i * s0];
                let b = g.coord(0, i + 1) + v[r + (i + 1) * s0];
                if b - a <= 1e-12 * h {
                    return Err(Error::MonotonicityViolated(format!(
                        "x + ξ is not increasing along row {r} at node {i}"
                    )));
                }
            }
        }
        Ok(Self { xi })
    }

    pub fn xi(&self) -> &ScalarField {
        &self.xi
    }

    /// `ξ(γ⁻¹(X))` on the transverse row with flat offset `r`.
    fn on_row(&self, t: f64, x: f64, r: usize) -> f64 {
        let g = self.xi.grid();
        let nx = g.resolution()[0];
        let s0 = g.stride(0);
        let v = self.xi.values();
        let image = |i: usize| g.coord(0, i) + t * v[r + i * s0];
        if x <= image(0) || x >= image(nx - 1) {
            return 0.0;
        }
        let (mut lo, mut hi) = (0usize, nx - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if image(mid) <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (image(lo), image(hi));
        let f = ((x - a) / (b - a)).clamp(0.0, 1.0);
        v[r + lo * s0] * (1.0 - f) + v[r + hi * s0] * f
    }
}

impl VelocitySource for CorrectionSource {
    fn dim(&self) -> usize {
        self.xi.dim()
    }

    fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let g = self.xi.grid();
        let d = g.dim();
        // Multilinear blend over the transverse cell containing `y`.
        let mut base = [0usize; crate::grid::MAX_DIM];
        let mut frac = [0f64; crate::grid::MAX_DIM];
        for a in 1..d {
            match g.locate(a, x[a]) {
                Some((i, f)) => {
                    base[a] = i;
                    frac[a] = f;
                }
                None => return,
            }
        }
        let mut acc = 0.0;
        for corner in 0..1usize << (d - 1) {
            let mut w = 1.0;
            let mut r = 0;
            for a in 1..d {
                let up = (corner >> (a - 1)) & 1;
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
                r += (base[a] + up) * g.stride(a);
            }
            if w != 0.0 {
                acc += w * self.on_row(t, x[0], r);
            }
        }
        out[0] = acc;
    }

    fn snapshot(&self, t: f64) -> Result<Vec<FieldSample>> {
        let g = self.xi.grid().clone();
        let mut out = vec![0.0; g.dim()];
        let u = ScalarField::from_fn(g.clone(), g.bounding_box(), |x| {
            self.velocity(t, x, &mut out);
            out[0]
        })?;
        let mut comps = vec![FieldSample::Grid(u)];
        comps.extend((1..g.dim()).map(|_| FieldSample::Zero));
        Ok(comps)
    }

    fn support_box(&self) -> BoxRegion {
        self.xi.grid().bounding_box()
    }
}

/// The affine homotopy from the identity to `Γ = Id + (ξ, 0)`.
pub fn correction_path(params: &ConstructionParams, xi: ScalarField) -> Result<VelocityPath> {
    let bound = 3.0 * params.delta / params.lambda + 5.0 * params.state_spacing();
    let worst = xi.sup_abs();
    if worst > 10.0 * bound {
        return Err(Error::ConstructionInconsistent(format!(
            "max|ξ| = {worst:e} exceeds 10·(3δ/λ + 5h) = {:e}",
            10.0 * bound
        )));
    }
    let src = CorrectionSource::new(xi)?;
    let nodes = uniform_nodes(params.resolutions.correction_nodes);
    Ok(VelocityPath::single(Segment::new("correct", Arc::new(src), nodes, Stepping::Fixed(2))?))
}
