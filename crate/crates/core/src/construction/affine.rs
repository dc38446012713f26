use std::sync::Arc;

use super::params::ConstructionParams;
use super::squeezed::{SqueezedProfile, StripProfile};
use super::strips::StripPiece;
use crate::diffeo::{uniform_nodes, Segment, Stepping, VelocityPath, VelocitySource};
use crate::error::{Error, Result};
use crate::field_norms::FieldSample;
use crate::grid::{BoxRegion, GridSpec, ScalarField};

/// Velocity of `Γ_t(x, Y) = (x + t ζ̃(x, Y), Y)` with `ζ̃ = ζ_I ∘ Ψ⁻¹`.
pub struct AffineSource {
    n: usize,
    profile: Arc<SqueezedProfile>,
    tube_spacing: f64,
    centers: Vec<Vec<f64>>,
}

impl AffineSource {
    pub fn new(params: &ConstructionParams, piece: &StripPiece) -> Result<Self> {
        let profile = Arc::new(SqueezedProfile::new(piece, params.alpha));
        if 1.0 + piece.bounds.min_dx <= 0.0 {
            return Err(Error::MonotonicityViolated("x + ζ̃ is not increasing".into()));
        }
        let support = piece.zeta.support();
        let region = BoxRegion::new(support.lo[1..].to_vec(), support.hi[1..].to_vec())?;
        let g = piece.zeta.grid();
        let centers = piece
            .lattice
            .centers_meeting(&region)
            .into_iter()
            .filter(|z| {
                let r = 3.0 / params.k as f64 + 1e-12;
                let mut x = vec![0.0; g.dim()];
                piece.zeta.values().iter().enumerate().any(|(i, v)| {
                    *v != 0.0 && {
                        g.node_into(i, &mut x);
                        x[1..].iter().zip(z).all(|(y, c)| (y - c).abs() <= r)
                    }
                })
            })
            .collect();
        Ok(Self {
            n: params.n,
            profile,
            tube_spacing: params.lambda / params.resolutions.tube_cells_per_lambda as f64,
            centers,
        })
    }

    pub fn profile(&self) -> &Arc<SqueezedProfile> {
        &self.profile
    }

    /// Pricing grid on the tube `(0, 1) × (z ± 3λ)` around one center.
    pub fn tube_grid(&self, center: &[f64]) -> Result<GridSpec> {
        let w = self.profile.half_width();
        let g = self.profile.piece().grid();
        let mut lo = vec![0.0];
        let mut hi = vec![1.0];
        lo.extend(center.iter().map(|z| z - w));
        hi.extend(center.iter().map(|z| z + w));
        let mut h = vec![g.spacing()[0]];
        h.extend(std::iter::repeat_n(self.tube_spacing, self.n - 1));
        GridSpec::with_max_spacing(&BoxRegion::new(lo, hi)?, &h)
    }

    pub fn active_centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// `Vol(supp ξ)` measured as nonzero nodes of `ζ̃` on the tubes times the cell volume.
    pub fn support_volume(&self) -> Result<f64> {
        let mut vol = 0.0;
        for z in &self.centers {
            let g = self.tube_grid(z)?;
            let mut x = vec![0.0; self.n];
            let count = (0..g.len())
                .filter(|&i| {
                    g.node_into(i, &mut x);
                    self.profile.value(x[0], &x[1..]) != 0.0
                })
                .count();
            vol += count as f64 * g.cell_volume();
        }
        Ok(vol)
    }
}

impl VelocitySource for AffineSource {
    fn dim(&self) -> usize {
        self.n
    }

    fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let Some(rows) = self.profile.blend(&x[1..]) else {
            return;
        };
        let g = self.profile.piece().grid();
        let v = self.profile.piece().values();
        let s0 = g.stride(0);
        let nx = g.resolution()[0];
        let zeta = |i: usize| rows.iter().map(|&(r, w)| w * v[r + i * s0]).sum::<f64>();
        let image = |i: usize| g.coord(0, i) + t * zeta(i);
        if x[0] <= image(0) || x[0] >= image(nx - 1) {
            return;
        }
        let (mut lo, mut hi) = (0usize, nx - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if image(mid) <= x[0] {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (image(lo), image(hi));
        let f = ((x[0] - a) / (b - a)).clamp(0.0, 1.0);
        out[0] = zeta(lo) * (1.0 - f) + zeta(hi) * f;
    }

    fn snapshot(&self, t: f64) -> Result<Vec<FieldSample>> {
        let patches = self
            .centers
            .iter()
            .map(|z| {
                let g = self.tube_grid(z)?;
                let region = g.bounding_box();
                let mut out = vec![0.0; self.n];
                ScalarField::from_fn(g, region, |x| {
                    self.velocity(t, x, &mut out);
                    out[0]
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut comps = vec![FieldSample::Patches(patches)];
        comps.extend((1..self.n).map(|_| FieldSample::Zero));
        Ok(comps)
    }

    fn support_box(&self) -> BoxRegion {
        BoxRegion::cube(self.n, 0.0, 1.0)
    }
}

/// The affine homotopy from the identity to `Ψ Φ_I Ψ⁻¹`, valid for `s < (n-1)/p`.
pub fn affine_nd_path(params: &ConstructionParams, piece: &StripPiece) -> Result<VelocityPath> {
    if !params.affine_subcritical() {
        return Err(Error::StrategyNotApplicable(format!(
            "affine_nd needs s < (n-1)/p, got s = {}, n = {}, p = {}",
            params.s, params.n, params.p
        )));
    }
    let src = AffineSource::new(params, piece)?;
    let nodes = uniform_nodes(params.resolutions.affine_nodes);
    Ok(VelocityPath::single(Segment::new("affine", Arc::new(src), nodes, Stepping::Fixed(2))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::params::{default_params, Strategy};
    use crate::construction::squeeze::squeeze_path;
    use crate::construction::strips::split_strips;
    use crate::construction::target::{state_grid, TargetSpec, DEFAULT_SLOPE};
    use crate::diffeo::{advect, concat, reverse};

    fn setup(k: usize, n: usize) -> (ConstructionParams, Vec<StripPiece>) {
        let p = default_params(k, n, 0.5, 2.0, Strategy::AffineNd).unwrap();
        let t = TargetSpec::bump(state_grid(&p).unwrap(), DEFAULT_SLOPE).unwrap();
        (p.clone(), split_strips(&t, k).unwrap().pieces)
    }

    #[test]
    fn supercritical_exponent_is_rejected() {
        let (mut p, ps) = setup(8, 2);
        p.s = 0.6;
        assert!(matches!(affine_nd_path(&p, &ps[0]), Err(Error::StrategyNotApplicable(_))));
    }

    #[test]
    fn conjugated_homotopy_reproduces_the_piece() {
        let (p, ps) = setup(8, 3);
        let piece = &ps[1];
        let sq = squeeze_path(&p, &piece.lattice).unwrap();
        let path = concat(&[sq.clone(), affine_nd_path(&p, piece).unwrap(), reverse(&sq)]).unwrap();
        let g = piece.zeta.grid().clone();
        let mut pts: Vec<f64> = (0..g.len()).flat_map(|i| g.node(i)).collect();
        advect(&path, &mut pts, 1).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            let x = g.node(i);
            worst = worst.max((pts[3 * i] - x[0] - piece.zeta.values()[i]).abs());
            worst = worst.max((pts[3 * i + 1] - x[1]).abs().max((pts[3 * i + 2] - x[2]).abs()));
        }
        assert!(worst < 1e-8, "{worst:e}");
    }

    #[test]
    fn support_volume_scales_like_tubes() {
        let c: Vec<f64> = [8, 16]
            .iter()
            .map(|&k| {
                let (p, ps) = setup(k, 3);
                let v = AffineSource::new(&p, &ps[0]).unwrap().support_volume().unwrap();
                v / ((k as f64).powi(2) * p.lambda.powi(2))
            })
            .collect();
        assert!(c[0] > 0.0 && c[1] / c[0] < 2.0 && c[0] / c[1] < 2.0, "{c:?}");
    }
}
