use super::strips::{Lattice, StripPiece};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, MAX_DIM};

/// Relative distance below which a transverse coordinate is taken to sit on a grid row.
const SNAP: f64 = 1e-6;

/// A profile `ζ̃(x, y)` that the transport and affine steps push along `x`.
pub trait StripProfile: Send + Sync {
    fn value(&self, x: f64, y: &[f64]) -> f64;

    /// `sup |ζ̃|`.
    fn sup(&self) -> f64;
}

impl StripProfile for ScalarField {
    fn value(&self, x: f64, y: &[f64]) -> f64 {
        let mut p = [0.0; MAX_DIM];
        p[0] = x;
        p[1..=y.len()].copy_from_slice(y);
        ScalarField::value(self, &p[..=y.len()])
    }

    fn sup(&self) -> f64 {
        self.sup_abs()
    }
}

/// `ζ̃_I = ζ_I ∘ Ψ⁻¹`: the strip piece seen in squeezed coordinates.
///
/// Near each lattice center `z`, `Ψ⁻¹(x, Y) = (x, z + e^α (Y - z))`. Rows of
/// the state grid are recovered exactly so that `ζ̃` is the same piecewise
/// linear function of `x` as the piece on that row.
#[derive(Clone, Debug)]
pub struct SqueezedProfile {
    zeta: ScalarField,
    lattice: Lattice,
    stretch: f64,
    half_width: f64,
    sup: f64,
    lip_x: f64,
}

impl SqueezedProfile {
    pub fn new(piece: &StripPiece, alpha: f64) -> Self {
        let k = piece.lattice.k as f64;
        let lambda = (-alpha).exp() / k;
        Self {
            zeta: piece.zeta.clone(),
            lattice: piece.lattice.clone(),
            stretch: alpha.exp(),
            half_width: StripPiece::SUPPORT_HALF_WIDTH * lambda,
            sup: piece.zeta.sup_abs(),
            lip_x: piece.bounds.max_dx.max(-piece.bounds.min_dx),
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn piece(&self) -> &ScalarField {
        &self.zeta
    }

    /// `max |∂ₓζ̃|`.
    pub fn lip_x(&self) -> f64 {
        self.lip_x
    }

    /// Half-width `3λ` of the squeezed strips.
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Pre-image of `Y` under the squeeze, if `Y` lies in a squeezed strip.
    pub fn unsqueeze(&self, y: &[f64], out: &mut [f64]) -> bool {
        for a in 0..y.len() {
            let z = self.lattice.center(a, y[a]);
            let d = y[a] - z;
            if d.abs() > self.half_width * (1.0 + 1e-9) {
                return false;
            }
            out[a] = z + self.stretch * d;
        }
        true
    }

    pub fn active(&self, y: &[f64]) -> bool {
        let mut tmp = [0.0; MAX_DIM];
        self.unsqueeze(y, &mut tmp[..y.len()])
    }

    /// Flat offset of the grid row through `y`, if every coordinate snaps to a node.
    fn row(&self, y: &[f64]) -> Option<usize> {
        let g = self.zeta.grid();
        let mut offset = 0;
        for (a, &v) in y.iter().enumerate() {
            let ax = a + 1;
            let u = (v - g.lo()[ax]) / g.spacing()[ax];
            let j = u.round();
            if (u - j).abs() > SNAP || j < 0.0 || j as usize >= g.resolution()[ax] {
                return None;
            }
            offset += j as usize * g.stride(ax);
        }
        Some(offset)
    }

    /// Row offsets and weights whose blend is `ζ̃(·, y)` at the `x` nodes.
    pub fn blend(&self, y: &[f64]) -> Option<Vec<(usize, f64)>> {
        let m = y.len();
        let mut pre = [0.0; MAX_DIM];
        if !self.unsqueeze(y, &mut pre[..m]) {
            return None;
        }
        if let Some(r) = self.row(&pre[..m]) {
            return Some(vec![(r, 1.0)]);
        }
        let g = self.zeta.grid();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..m {
            let (i, f) = g.locate(a + 1, pre[a])?;
            base[a] = i;
            frac[a] = f;
        }
        let mut out = Vec::with_capacity(1 << m);
        for corner in 0..1usize << m {
            let mut w = 1.0;
            let mut r = 0;
            for a in 0..m {
                let up = (corner >> a) & 1;
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
                r += (base[a] + up) * g.stride(a + 1);
            }
            if w != 0.0 {
                out.push((r, w));
            }
        }
        Some(out)
    }

    /// Values of `ζ_I` along the state row through the unsqueezed `y`.
    pub fn row_values(&self, y: &[f64]) -> Option<Vec<f64>> {
        let mut pre = [0.0; MAX_DIM];
        if !self.unsqueeze(y, &mut pre[..y.len()]) {
            return None;
        }
        let r = self.row(&pre[..y.len()])?;
        let g = self.zeta.grid();
        let s0 = g.stride(0);
        Some((0..g.resolution()[0]).map(|i| self.zeta.values()[r + i * s0]).collect())
    }
}

impl StripProfile for SqueezedProfile {
    fn value(&self, x: f64, y: &[f64]) -> f64 {
        let m = y.len();
        let mut pre = [0.0; MAX_DIM];
        if !self.unsqueeze(y, &mut pre[..m]) {
            return 0.0;
        }
        let g = self.zeta.grid();
        match self.row(&pre[..m]) {
            Some(r) => match g.locate(0, x) {
                Some((i, f)) => {
                    let s0 = g.stride(0);
                    let v = self.zeta.values();
                    v[r + i * s0] * (1.0 - f) + v[r + (i + 1) * s0] * f
                }
                None => 0.0,
            },
            None => StripProfile::value(&self.zeta, x, &pre[..m]),
        }
    }

    fn sup(&self) -> f64 {
        self.sup
    }
}

/// `τ_y(x) = x - λ ζ̃(x, y)`.
pub fn tau(x: f64, y: &[f64], profile: &dyn StripProfile, lambda: f64) -> f64 {
    x - lambda * profile.value(x, y)
}

/// `g(t, y) = τ_y⁻¹(t)` by bisection on `[t, t + λ sup ζ̃]`.
pub fn g_inverse(t: f64, y: &[f64], profile: &dyn StripProfile, lambda: f64) -> Result<f64> {
    let f = |g: f64| tau(g, y, profile, lambda) - t;
    let mut lo = t;
    let mut hi = t + lambda * profile.sup();
    let (flo, fhi) = (f(lo), f(hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::MonotonicityViolated(format!(
            "τ does not bracket t = {t} on [{lo}, {hi}]: τ - t = {flo:e}, {fhi:e}"
        )));
    }
    if flo == 0.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `g(t, y) - t` by fixed-point iteration of `r = λ ζ̃(t + r, y)`; a
/// contraction whenever `λ |∂ₓζ̃| < 1`.
pub fn g_offset(t: f64, y: &[f64], profile: &dyn StripProfile, lambda: f64) -> f64 {
    let mut r = lambda * profile.value(t, y);
    if r == 0.0 {
        return 0.0;
    }
    for _ in 0..100 {
        let next = lambda * profile.value(t + r, y);
        let done = (next - r).abs() <= 1e-15 * r.abs().max(1e-300);
        r = next;
        if done {
            break;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::params::{default_params, Strategy};
    use crate::construction::strips::split_strips_2d;
    use crate::construction::target::{state_grid, TargetSpec, DEFAULT_SLOPE};
    use crate::grid::{BoxRegion, GridSpec};

    fn line(a: f64) -> ScalarField {
        let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![33, 5]).unwrap();
        ScalarField::from_fn(g, BoxRegion::cube(2, 0.0, 1.0), |x| a * x[0]).unwrap()
    }

    #[test]
    fn zero_profile_gives_identity() {
        let z = line(0.0);
        for t in [0.0, 0.3, 0.77] {
            assert_eq!(g_inverse(t, &[0.5], &z, 1e-3).unwrap(), t);
            assert_eq!(g_offset(t, &[0.5], &z, 1e-3), 0.0);
        }
    }

    #[test]
    fn linear_core_has_closed_form() {
        let a = 0.4;
        let lambda = 0.01;
        let z = line(a);
        for t in [0.1, 0.5, 0.9] {
            let exact = t / (1.0 - lambda * a);
            assert!((g_inverse(t, &[0.5], &z, lambda).unwrap() - exact).abs() < 1e-10);
            assert!((t + g_offset(t, &[0.5], &z, lambda) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn bracket_failure_is_reported() {
        let z = line(-0.5);
        assert!(matches!(g_inverse(0.5, &[0.5], &z, 0.1), Err(Error::MonotonicityViolated(_))));
    }

    #[test]
    fn residual_is_second_order_in_lambda() {
        let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![257, 5]).unwrap();
        let z = ScalarField::from_fn(g, BoxRegion::cube(2, 0.0, 1.0), |x| 0.1 * (std::f64::consts::PI * x[0]).sin().powi(2)).unwrap();
        let ratio = |lambda: f64| {
            (1..40)
                .map(|i| {
                    let t = i as f64 / 40.0;
                    let g = g_inverse(t, &[0.5], &z, lambda).unwrap();
                    (g - t - lambda * StripProfile::value(&z, t, &[0.5])).abs()
                })
                .fold(0.0, f64::max)
                / (lambda * lambda)
        };
        let c: Vec<f64> = [0.08, 0.04, 0.02, 0.01].iter().map(|&l| ratio(l)).collect();
        for w in c.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 0.15, "{c:?}");
        }
    }

    #[test]
    fn squeezed_rows_match_piece_rows() {
        let p = default_params(8, 2, 0.5, 2.0, Strategy::Flow2d).unwrap();
        let t = TargetSpec::bump(state_grid(&p).unwrap(), DEFAULT_SLOPE).unwrap();
        let dec = split_strips_2d(&t, 8).unwrap();
        let prof = SqueezedProfile::new(&dec.pieces[1], p.alpha);
        let z = 0.5;
        for j in [-20i32, -3, 0, 7, 23] {
            let y = z + j as f64 / 64.0;
            let big_y = z + (-p.alpha).exp() * (y - z);
            for x in [0.2, 0.43, 0.61] {
                let want = StripProfile::value(&dec.pieces[1].zeta, x, &[y]);
                assert!((prof.value(x, &[big_y]) - want).abs() < 1e-14);
            }
        }
        assert_eq!(prof.value(0.5, &[z + 4.0 * p.lambda]), 0.0);
    }
}
