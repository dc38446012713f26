use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::profiles::{strip_cutoff, wrap8};
use super::target::{shear_map, TargetSpec};
use crate::diffeo::{compose, invert_row, GridDiffeo};
use crate::error::{Error, Result};
use crate::grid::{BoxRegion, GridSpec, ScalarField};

/// Residual values below this are rounding noise.
const NOISE: f64 = 1e-10;

/// The transverse lattice `(8ℤ^m + 4I)/k` of one strip family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub k: usize,
    /// `4 I_j` per transverse axis, in units of `1/k`.
    pub shift: Vec<f64>,
}

impl Lattice {
    pub fn new(k: usize, index: &[u8]) -> Self {
        Self {
            k,
            shift: index.iter().map(|&b| 4.0 * b as f64).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.shift.len()
    }

    /// `k y_j - 4 I_j` reduced to `[-4, 4)`.
    #[inline]
    pub fn local(&self, axis: usize, y: f64) -> f64 {
        wrap8(self.k as f64 * y - self.shift[axis])
    }

    /// Nearest lattice center along one axis.
    #[inline]
    pub fn center(&self, axis: usize, y: f64) -> f64 {
        let kf = self.k as f64;
        let i = ((kf * y - self.shift[axis]) / 8.0).round();
        (8.0 * i + self.shift[axis]) / kf
    }

    /// `χ_I(y)`: 1 on the core `L_I`, supported in `S_I`.
    pub fn cutoff(&self, y: &[f64]) -> f64 {
        (0..self.m()).map(|a| strip_cutoff(self.k as f64 * y[a] - self.shift[a])).product()
    }

    /// Whether `y` lies in the closed cubes of half-width `r/k` about the centers.
    pub fn within(&self, y: &[f64], r: f64) -> bool {
        (0..self.m()).all(|a| self.local(a, y[a]).abs() <= r + 1e-9)
    }

    /// `y ∈ L_I` (half-width `2/k`).
    pub fn in_core(&self, y: &[f64]) -> bool {
        self.within(y, 2.0)
    }

    /// `y ∈ S_I` (half-width `3/k`).
    pub fn in_strip(&self, y: &[f64]) -> bool {
        self.within(y, 3.0)
    }

    /// Centers whose `S_I` cube meets `region` (transverse coordinates).
    pub fn centers_meeting(&self, region: &BoxRegion) -> Vec<Vec<f64>> {
        let kf = self.k as f64;
        let mut per_axis: Vec<Vec<f64>> = Vec::with_capacity(self.m());
        for a in 0..self.m() {
            let lo = ((kf * region.lo[a] - self.shift[a] - 3.0) / 8.0).ceil() as i64;
            let hi = ((kf * region.hi[a] - self.shift[a] + 3.0) / 8.0).floor() as i64;
            per_axis.push((lo..=hi).map(|i| (8.0 * i as f64 + self.shift[a]) / kf).collect());
        }
        let mut out = vec![Vec::new()];
        for axis in per_axis {
            out = out
                .into_iter()
                .flat_map(|c| {
                    axis.iter().map(move |&z| {
                        let mut c = c.clone();
                        c.push(z);
                        c
                    })
                })
                .collect();
        }
        out
    }
}

/// Bounds `0 ≤ ζ_I`, `-1 + 1/C < ∂ₓζ_I < C`, `|∂_yζ_I| < C k` measured on a piece.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceBounds {
    pub min_value: f64,
    pub min_dx: f64,
    pub max_dx: f64,
    /// `max |∂_y ζ_I| / k`.
    pub dy_over_k: f64,
}

impl PieceBounds {
    /// Smallest `C` satisfying the two-sided `x` bound.
    pub fn c_x(&self) -> f64 {
        self.max_dx.max(1.0 / (1.0 + self.min_dx))
    }
}

#[derive(Clone, Debug)]
pub struct StripPiece {
    /// Lattice index `I ∈ ℤ₂^m`.
    pub index: Vec<u8>,
    pub lattice: Lattice,
    pub zeta: ScalarField,
    pub bounds: PieceBounds,
}

impl StripPiece {
    pub fn label(&self) -> String {
        self.index.iter().map(|b| b.to_string()).collect()
    }

    /// Half-width of the support cubes `S_I` in units of `1/k`.
    pub const SUPPORT_HALF_WIDTH: f64 = 3.0;
    /// Half-width of the core cubes `L_I` in units of `1/k`.
    pub const CORE_HALF_WIDTH: f64 = 2.0;

    pub fn shear(&self) -> Result<GridDiffeo> {
        shear_map(&self.zeta)
    }
}

#[derive(Clone, Debug)]
pub struct StripDecomposition {
    pub k: usize,
    pub pieces: Vec<StripPiece>,
    /// Sup distance between the composed pieces and the target at the nodes.
    pub composition_error: f64,
}

impl StripDecomposition {
    pub fn count(&self) -> usize {
        self.pieces.len()
    }

    /// `Φ_last ∘ ⋯ ∘ Φ_1` on the grid.
    pub fn composed(&self) -> Result<GridDiffeo> {
        let mut acc = self.pieces[0].shear()?;
        for p in &self.pieces[1..] {
            acc = compose(&p.shear()?, &acc)?;
        }
        Ok(acc)
    }
}

/// Lattice indices in processing order: by number of ones, then with
/// leading ones first.
pub fn lattice_order(m: usize) -> Vec<Vec<u8>> {
    let mut all: Vec<Vec<u8>> = (0..1usize << m)
        .map(|bits| (0..m).map(|a| ((bits >> a) & 1) as u8).collect())
        .collect();
    all.sort_by(|a, b| {
        let pa: u8 = a.iter().sum();
        let pb: u8 = b.iter().sum();
        pa.cmp(&pb).then_with(|| b.cmp(a))
    });
    all
}

fn check_resolution(grid: &GridSpec, k: usize) -> Result<()> {
    for a in 1..grid.dim() {
        if grid.spacing()[a] * 8.0 * k as f64 > 1.0 + 1e-9 {
            return Err(Error::ResolutionTooCoarse(format!(
                "axis {a}: spacing {} does not resolve 1/{k} with 8 cells",
                grid.spacing()[a]
            )));
        }
    }
    Ok(())
}

/// Row `r` (flat transverse index) sampled along `x`.
fn row(values: &[f64], stride0: usize, r: usize, nx: usize) -> Vec<f64> {
    (0..nx).map(|j| values[j * stride0 + r]).collect()
}

fn lerp_row(row: &[f64], h: f64, x: f64) -> f64 {
    let u = (x / h).clamp(0.0, (row.len() - 1) as f64);
    let i = (u.floor() as usize).min(row.len() - 2);
    let f = u - i as f64;
    (1.0 - f) * row[i] + f * row[i + 1]
}

fn piece_bounds(zeta: &ScalarField, k: usize) -> PieceBounds {
    let g = zeta.grid();
    let min_value = zeta.values().iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let dx = g.partial_at_nodes(zeta.values(), 0);
    let min_dx = dx.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let max_dx = dx.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut dy: f64 = 0.0;
    for a in 1..g.dim() {
        dy = g.partial_at_nodes(zeta.values(), a).iter().fold(dy, |m, v| m.max(v.abs()));
    }
    PieceBounds {
        min_value,
        min_dx,
        max_dx,
        dy_over_k: dy / k as f64,
    }
}

fn decompose(target: &TargetSpec, k: usize, order: Vec<Vec<u8>>) -> Result<StripDecomposition> {
    let grid = target.grid().clone();
    check_resolution(&grid, k)?;
    let nx = grid.resolution()[0];
    let hx = grid.spacing()[0];
    let stride0 = grid.stride(0);
    let xs: Vec<f64> = (0..nx).map(|j| grid.coord(0, j)).collect();
    let rows: Vec<usize> = (0..stride0).collect();
    let transverse = |r: usize| -> Vec<f64> {
        let mut x = grid.node(r);
        x.remove(0);
        x
    };
    let zeta_vals = target.zeta.values();
    let last = order.len() - 1;
    let mut pieces: Vec<StripPiece> = Vec::with_capacity(order.len());
    for (i, index) in order.into_iter().enumerate() {
        let lattice = Lattice::new(k, &index);
        let done = &pieces;
        let columns: Vec<Vec<f64>> = rows
            .par_iter()
            .map(|&r| {
                let y = transverse(r);
                let cut = if i == last { 1.0 } else { lattice.cutoff(&y) };
                let zrow = row(zeta_vals, stride0, r, nx);
                if i == 0 {
                    return zrow.iter().map(|z| z * cut).collect();
                }
                let images: Vec<Vec<f64>> = done
                    .iter()
                    .map(|p| row(p.zeta.values(), stride0, r, nx).iter().zip(&xs).map(|(z, x)| x + z).collect())
                    .collect();
                xs.iter()
                    .map(|&xp| {
                        let mut x = xp;
                        for img in images.iter().rev() {
                            x = invert_row(0.0, hx, img, x).unwrap_or(x);
                        }
                        let residual = x + lerp_row(&zrow, hx, x) - xp;
                        (if residual.abs() < NOISE { 0.0 } else { residual }) * cut
                    })
                    .collect()
            })
            .collect();
        // Chained row interpolation leaves residuals of order h² below zero
        // and, for the last piece, outside its strips.
        let floor = -grid.max_spacing().powi(2);
        let mut values = vec![0.0; grid.len()];
        for (r, col) in columns.into_iter().enumerate() {
            for (j, v) in col.into_iter().enumerate() {
                if v < floor {
                    return Err(Error::DecompositionFailed(format!("ζ_I reaches {v:e}")));
                }
                values[j * stride0 + r] = v.max(0.0);
            }
        }
        let mut y = vec![0.0; grid.dim() - 1];
        let mut x = vec![0.0; grid.dim()];
        for (flat, v) in values.iter_mut().enumerate() {
            if *v != 0.0 {
                grid.node_into(flat, &mut x);
                y.copy_from_slice(&x[1..]);
                if !lattice.in_strip(&y) && *v <= -floor {
                    *v = 0.0;
                } else if !lattice.in_strip(&y) {
                    return Err(Error::DecompositionFailed(format!(
                        "piece {}: value {v:e} at {x:?} outside (0,1)×S_I",
                        index.iter().map(|b| b.to_string()).collect::<String>()
                    )));
                }
            }
        }
        let zeta = ScalarField::new(grid.clone(), values, target.zeta.support().clone())?;
        let bounds = piece_bounds(&zeta, k);
        if 1.0 + bounds.min_dx <= 0.0 {
            return Err(Error::DecompositionFailed(format!("∂ₓζ_I reaches {}", bounds.min_dx)));
        }
        pieces.push(StripPiece {
            index,
            lattice,
            zeta,
            bounds,
        });
    }
    let mut dec = StripDecomposition {
        k,
        pieces,
        composition_error: 0.0,
    };
    let err = dec.composed()?.sup_distance(&target.shear()?)?;
    let tol = 5.0 * grid.max_spacing();
    if err > tol {
        return Err(Error::DecompositionFailed(format!(
            "composed pieces miss the target by {err:e} > 5h = {tol:e}"
        )));
    }
    dec.composition_error = err;
    Ok(dec)
}

/// Two pieces: `ζ₁ = ζ χ_k` and the residual of `Φ ∘ Φ₁⁻¹`.
pub fn split_strips_2d(target: &TargetSpec, k: usize) -> Result<StripDecomposition> {
    if target.dim != 2 {
        return Err(Error::DecompositionFailed(format!("two-dimensional split on a {}-dimensional target", target.dim)));
    }
    if k < 2 {
        return Err(Error::DecompositionFailed(format!("k = {k} < 2")));
    }
    decompose(target, k, lattice_order(1))
}

/// `2^m` pieces by the recursive residual construction.
pub fn split_strips_nd(target: &TargetSpec, k: usize) -> Result<StripDecomposition> {
    if target.dim < 3 {
        return Err(Error::DecompositionFailed("the lattice split needs n >= 3".into()));
    }
    if k < 2 {
        return Err(Error::DecompositionFailed(format!("k = {k} < 2")));
    }
    decompose(target, k, lattice_order(target.dim - 1))
}

/// Dispatches on the dimension.
pub fn split_strips(target: &TargetSpec, k: usize) -> Result<StripDecomposition> {
    if target.dim == 2 {
        split_strips_2d(target, k)
    } else {
        split_strips_nd(target, k)
    }
}
