use std::sync::Arc;

use super::params::ConstructionParams;
use super::squeezed::{g_offset, tau, SqueezedProfile, StripProfile};
use super::strips::StripPiece;
use crate::diffeo::{uniform_nodes, Segment, Stepping, VelocityPath, VelocitySource};
use crate::error::{Error, Result};
use crate::field_norms::FieldSample;
use crate::grid::{BoxRegion, GridSpec, ScalarField};

/// Cumulative distribution of the density `30 t² (1-t)²` on `[0, 1]`.
fn bump_cdf(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// `∫₀ᵗ` of [`bump_cdf`] on `[0, 1]`.
fn bump_cdf_integral(t: f64) -> f64 {
    t.powi(4) * (2.5 - 3.0 * t + t * t)
}

/// `η_δ`: a normalized box of half-width `δ/(1+ρ)` convolved with a bump
/// of half-width `ρδ/(1+ρ)`, so `supp η_δ = [-δ, δ]` and `sup η_δ = (1+ρ)/(2δ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mollifier {
    pub delta: f64,
    pub rho: f64,
    a: f64,
    b: f64,
}

impl Mollifier {
    pub const DEFAULT_RHO: f64 = 0.1;

    /// Uses `ρ = min(0.1, λ)`, which keeps `sup η_δ ≤ (1+λ)/(2δ)`.
    pub fn new(delta: f64, lambda: f64) -> Self {
        Self::with_rho(delta, Self::DEFAULT_RHO.min(lambda))
    }

    pub fn with_rho(delta: f64, rho: f64) -> Self {
        Self {
            delta,
            rho,
            a: delta / (1.0 + rho),
            b: rho * delta / (1.0 + rho),
        }
    }

    fn bump_cdf(&self, u: f64) -> f64 {
        bump_cdf((u + self.b) / (2.0 * self.b))
    }

    fn bump_cdf_integral(&self, u: f64) -> f64 {
        if u <= -self.b {
            0.0
        } else if u >= self.b {
            u
        } else {
            2.0 * self.b * bump_cdf_integral((u + self.b) / (2.0 * self.b))
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        if x.abs() >= self.delta {
            return 0.0;
        }
        (self.bump_cdf(x + self.a) - self.bump_cdf(x - self.a)) / (2.0 * self.a)
    }

    /// `∫_{-∞}^x η_δ`, in closed form.
    pub fn cumulative(&self, x: f64) -> f64 {
        if x <= -self.delta {
            0.0
        } else if x >= self.delta {
            1.0
        } else {
            (self.bump_cdf_integral(x + self.a) - self.bump_cdf_integral(x - self.a)) / (2.0 * self.a)
        }
    }

    pub fn sup(&self) -> f64 {
        0.5 / self.a
    }
}

/// Time-dependent field `u_δ(t, x, Y) = (1+λ)⁻¹ ∫_{x-g(t,Y)}^{x-t} η_δ` along `x`.
pub struct TransportSource {
    n: usize,
    profile: Arc<SqueezedProfile>,
    mollifier: Mollifier,
    lambda: f64,
    delta: f64,
    spacing: f64,
    centers: Vec<Vec<f64>>,
}

impl TransportSource {
    pub fn new(params: &ConstructionParams, piece: &StripPiece) -> Result<Self> {
        let profile = Arc::new(SqueezedProfile::new(piece, params.alpha));
        let lambda = params.lambda;
        if lambda * profile.lip_x() >= 1.0 {
            return Err(Error::MonotonicityViolated(format!(
                "λ max|∂ₓζ̃| = {} is not below 1",
                lambda * profile.lip_x()
            )));
        }
        let support = piece.zeta.support();
        let region = BoxRegion::new(support.lo[1..].to_vec(), support.hi[1..].to_vec())?;
        let centers = piece
            .lattice
            .centers_meeting(&region)
            .into_iter()
            .filter(|z| strip_carries_mass(piece, z, params.k))
            .collect();
        Ok(Self {
            n: params.n,
            profile,
            mollifier: Mollifier::new(params.delta, lambda),
            lambda,
            delta: params.delta,
            spacing: params.delta / params.resolutions.patch_cells_per_delta as f64,
            centers,
        })
    }

    pub fn profile(&self) -> &Arc<SqueezedProfile> {
        &self.profile
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.mollifier
    }

    /// Lattice centers whose squeezed strip carries a nonzero profile.
    pub fn active_centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// Pricing patch of `u_δ(t)` around one center.
    pub fn patch(&self, t: f64, center: &[f64]) -> Result<ScalarField> {
        let d = self.delta + 2.0 * self.spacing;
        let w = self.profile.half_width();
        let mut lo = vec![t - d];
        let mut hi = vec![t + self.lambda * self.profile.sup() + d];
        lo.extend(center.iter().map(|z| z - w));
        hi.extend(center.iter().map(|z| z + w));
        let region = BoxRegion::new(lo, hi)?;
        let grid = GridSpec::with_max_spacing(&region, &vec![self.spacing; self.n])?;
        let mut out = vec![0.0; self.n];
        ScalarField::from_fn(grid, region, |x| {
            self.velocity(t, x, &mut out);
            out[0]
        })
    }
}

fn strip_carries_mass(piece: &StripPiece, center: &[f64], k: usize) -> bool {
    let g = piece.zeta.grid();
    let mut x = vec![0.0; g.dim()];
    let r = 3.0 / k as f64 + 1e-12;
    piece.zeta.values().iter().enumerate().any(|(i, v)| {
        *v != 0.0 && {
            g.node_into(i, &mut x);
            x[1..].iter().zip(center).all(|(y, z)| (y - z).abs() <= r)
        }
    })
}

impl VelocitySource for TransportSource {
    fn dim(&self) -> usize {
        self.n
    }

    fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let y = &x[1..];
        let r = g_offset(t, y, self.profile.as_ref(), self.lambda);
        if r == 0.0 {
            return;
        }
        let v = x[0] - t;
        out[0] = (self.mollifier.cumulative(v) - self.mollifier.cumulative(v - r)) / (1.0 + self.lambda);
    }

    fn snapshot(&self, t: f64) -> Result<Vec<FieldSample>> {
        let patches = self
            .centers
            .iter()
            .map(|z| self.patch(t, z))
            .collect::<Result<Vec<_>>>()?;
        let mut out = vec![FieldSample::Patches(patches)];
        out.extend((1..self.n).map(|_| FieldSample::Zero));
        Ok(out)
    }

    fn support_box(&self) -> BoxRegion {
        let mut lo = vec![-self.delta];
        let mut hi = vec![1.0 + self.delta];
        lo.extend(std::iter::repeat_n(0.0, self.n - 1));
        hi.extend(std::iter::repeat_n(1.0, self.n - 1));
        BoxRegion { lo, hi }
    }

    /// `u_δ` vanishes at `x` while `g(t, Y) ≤ x - δ`, that is for `t ≤ τ(x - δ)`.
    fn idle_until(&self, x: &[f64]) -> f64 {
        let y = &x[1..];
        if !self.profile.active(y) {
            return 1.0;
        }
        (tau(x[0] - self.delta, y, self.profile.as_ref(), self.lambda) - self.delta).clamp(0.0, 1.0)
    }

    /// Once the trailing edge `x = t` has passed, the particle stays put.
    fn at_rest(&self, t: f64, x: &[f64]) -> bool {
        x[0] - t < -self.delta
    }
}

/// The transport segment for one strip piece (two-dimensional only).
pub fn transport_path(params: &ConstructionParams, piece: &StripPiece) -> Result<VelocityPath> {
    transport_path_with(params, Arc::new(TransportSource::new(params, piece)?))
}

/// As [`transport_path`], driving an existing source.
pub fn transport_path_with(params: &ConstructionParams, src: Arc<TransportSource>) -> Result<VelocityPath> {
    if params.n != 2 {
        return Err(Error::StrategyNotApplicable(format!(
            "the transport flow is two-dimensional, got n = {}",
            params.n
        )));
    }
    let r = &params.resolutions;
    if r.patch_cells_per_delta < 4 {
        return Err(Error::ResolutionTooCoarse(format!(
            "δ layer resolved by {} cells, need 4",
            r.patch_cells_per_delta
        )));
    }
    let stepping = Stepping::Adaptive {
        tol: r.transport_tol * params.delta,
        max_step: r.transport_max_step,
        first_step: 0.25 * params.delta,
    };
    let seg = Segment::new("transport", src, uniform_nodes(r.transport_nodes), stepping)?;
    Ok(VelocityPath::single(seg))
}

/// `u_δ(t, ·)` sampled on the pricing patches.
pub fn transport_velocity(t: f64, params: &ConstructionParams, piece: &StripPiece) -> Result<Vec<FieldSample>> {
    TransportSource::new(params, piece)?.snapshot(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::params::{default_params, moderate_params, Strategy};
    use crate::construction::strips::split_strips_2d;
    use crate::construction::target::{state_grid, TargetSpec, DEFAULT_SLOPE};
    use crate::field_norms::{vector_norm, NormMethod, NormOptions};

    #[test]
    fn mollifier_mass_symmetry_and_sup() {
        let lambda = 0.02;
        let m = Mollifier::new(1e-3, lambda);
        let n = 200_000;
        let h = 2e-3 / n as f64;
        let mass: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * m.density(-1e-3 + i as f64 * h)
            })
            .sum::<f64>()
            * h;
        assert!((mass - 1.0).abs() < 1e-10, "mass {mass}");
        for i in 0..1000 {
            let x = i as f64 * 1.1e-6;
            assert!((m.density(x) - m.density(-x)).abs() < 1e-12 * m.sup());
            assert!(m.density(x) <= (1.0 + lambda) / (2.0 * m.delta));
            assert!((m.cumulative(x) + m.cumulative(-x) - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.cumulative(0.0), 0.5);
    }

    #[test]
    fn cumulative_differentiates_to_density() {
        let m = Mollifier::new(1e-2, 0.1);
        let h = 1e-7;
        for i in -90..=90 {
            let x = i as f64 * 1e-4;
            let fd = (m.cumulative(x + h) - m.cumulative(x - h)) / (2.0 * h);
            assert!((fd - m.density(x)).abs() < 1e-5 * m.sup(), "x = {x}");
        }
    }

    fn pieces(k: usize, moderate: bool) -> (ConstructionParams, Vec<StripPiece>) {
        let p = if moderate {
            moderate_params(k, 2, 0.5, 2.0, Strategy::Flow2d, 2.0).unwrap()
        } else {
            default_params(k, 2, 0.5, 2.0, Strategy::Flow2d).unwrap()
        };
        let t = TargetSpec::bump(state_grid(&p).unwrap(), DEFAULT_SLOPE).unwrap();
        (p, split_strips_2d(&t, k).unwrap().pieces)
    }

    #[test]
    fn zero_piece_gives_zero_velocity() {
        let (p, ps) = pieces(8, false);
        let mut zero = ps[0].clone();
        zero.zeta = ScalarField::zeros(zero.zeta.grid().clone());
        let src = TransportSource::new(&p, &zero).unwrap();
        assert!(src.active_centers().is_empty());
        let mut out = [1.0, 1.0];
        src.velocity(0.5, &[0.5, 0.5], &mut out);
        assert_eq!(out, [0.0, 0.0]);
    }

    #[test]
    fn velocity_is_bounded_by_indicator_height() {
        let (p, ps) = pieces(32, true);
        let src = TransportSource::new(&p, &ps[0]).unwrap();
        let top = 1.0 / (1.0 + p.lambda);
        let mut peak: f64 = 0.0;
        for t in [0.3, 0.5, 0.7] {
            for f in src.snapshot(t).unwrap() {
                if let FieldSample::Patches(ps) = f {
                    for patch in ps {
                        for v in patch.values() {
                            assert!(*v >= 0.0 && *v <= top * (1.0 + 1e-12));
                            peak = peak.max(*v);
                        }
                    }
                }
            }
        }
        assert!(peak > 0.9 * top);
    }

    #[test]
    fn per_time_norm_tracks_scaling() {
        let opts = NormOptions::default();
        let ratios: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&k| {
                let (p, ps) = pieces(k, true);
                let u = transport_velocity(0.5, &p, &ps[0]).unwrap();
                let (norm, _) = vector_norm(&u, 0.5, 2.0, NormMethod::InterpolationBound, &opts).unwrap();
                norm * norm / (k as f64 * p.lambda.powf(1.5) / p.delta.sqrt())
            })
            .collect();
        // At k = 8 the window λζ is narrower than δ and the estimate is not saturated.
        let band = &ratios[1..];
        let hi = band.iter().cloned().fold(f64::MIN, f64::max);
        let lo = band.iter().cloned().fold(f64::MAX, f64::min);
        assert!(hi / lo < 2.0, "{ratios:?}");
        assert!(ratios[0] <= hi, "{ratios:?}");
    }
}
