use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{BoxRegion, GridSpec};

/// Grid-sampled map `x ↦ x + d(x)`, identity outside `support`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDiffeo {
    grid: GridSpec,
    /// One displacement component per axis, node-major within each component.
    disp: Vec<Vec<f64>>,
    support: BoxRegion,
}

const NEWTON_MAX_ITER: usize = 60;

impl GridDiffeo {
    pub fn new(grid: GridSpec, disp: Vec<Vec<f64>>, support: BoxRegion) -> Result<Self> {
        let dim = grid.dim();
        if disp.len() != dim || disp.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidField("displacement shape does not match grid".into()));
        }
        if support.dim() != dim {
            return Err(Error::InvalidField("support box dimension mismatch".into()));
        }
        let mut x = vec![0.0; dim];
        for i in 0..grid.len() {
            let moved = (0..dim).any(|a| disp[a][i] != 0.0);
            if (0..dim).any(|a| !disp[a][i].is_finite()) {
                return Err(Error::InvalidField(format!("non-finite displacement at node {i}")));
            }
            if moved {
                grid.node_into(i, &mut x);
                if !support.contains(&x) {
                    return Err(Error::InvalidField(format!(
                        "nonzero displacement at {x:?} outside the support box"
                    )));
                }
            }
        }
        Ok(Self { grid, disp, support })
    }

    pub fn identity(grid: GridSpec) -> Self {
        let dim = grid.dim();
        let support = grid.bounding_box();
        let disp = vec![vec![0.0; grid.len()]; dim];
        Self { grid, disp, support }
    }

    /// Builds the map from node images; the support box is the bounding box
    /// of the moved nodes.
    pub fn from_images(grid: GridSpec, images: &[f64]) -> Result<Self> {
        let dim = grid.dim();
        if images.len() != dim * grid.len() {
            return Err(Error::InvalidField("image count does not match grid".into()));
        }
        let mut disp = vec![vec![0.0; grid.len()]; dim];
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut x = vec![0.0; dim];
        for i in 0..grid.len() {
            grid.node_into(i, &mut x);
            let mut moved = false;
            for a in 0..dim {
                let d = images[i * dim + a] - x[a];
                disp[a][i] = d;
                moved |= d != 0.0;
            }
            if moved {
                for a in 0..dim {
                    lo[a] = lo[a].min(x[a]);
                    hi[a] = hi[a].max(x[a]);
                }
            }
        }
        let support = if lo[0].is_finite() {
            BoxRegion::new(lo, hi)?
        } else {
            grid.bounding_box()
        };
        Self::new(grid, disp, support)
    }

    pub fn from_fn(grid: GridSpec, support: BoxRegion, f: impl Fn(&[f64], &mut [f64]) + Sync) -> Result<Self> {
        let dim = grid.dim();
        let images: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let x = grid.node(i);
                let mut y = x.clone();
                if support.contains(&x) {
                    f(&x, &mut y);
                }
                y.into_iter()
            })
            .collect();
        let mut disp = vec![vec![0.0; grid.len()]; dim];
        let mut x = vec![0.0; dim];
        for i in 0..grid.len() {
            grid.node_into(i, &mut x);
            for a in 0..dim {
                disp[a][i] = images[i * dim + a] - x[a];
            }
        }
        Self::new(grid, disp, support)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn support(&self) -> &BoxRegion {
        &self.support
    }

    pub fn displacement(&self, axis: usize) -> &[f64] {
        &self.disp[axis]
    }

    pub fn is_identity(&self) -> bool {
        self.disp.iter().all(|c| c.iter().all(|v| *v == 0.0))
    }

    /// Node images, interleaved per node.
    pub fn images(&self) -> Vec<f64> {
        let dim = self.dim();
        let mut out = vec![0.0; dim * self.grid.len()];
        let mut x = vec![0.0; dim];
        for i in 0..self.grid.len() {
            self.grid.node_into(i, &mut x);
            for a in 0..dim {
                out[i * dim + a] = x[a] + self.disp[a][i];
            }
        }
        out
    }

    /// Image of an arbitrary point; identity outside the grid box.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for a in 0..self.dim() {
            out[a] = x[a] + self.grid.interpolate(&self.disp[a], x).unwrap_or(0.0);
        }
    }

    /// The single axis carrying displacement, if the map is shear-type.
    pub fn shear_axis(&self) -> Option<usize> {
        let moving: Vec<usize> = (0..self.dim())
            .filter(|&a| self.disp[a].iter().any(|v| *v != 0.0))
            .collect();
        match moving.as_slice() {
            [] => Some(0),
            [a] => Some(*a),
            _ => None,
        }
    }

    /// Smallest discrete Jacobian determinant over interior nodes.
    pub fn min_jacobian(&self) -> f64 {
        let dim = self.dim();
        let n = self.grid.resolution();
        if n.iter().any(|&k| k < 3) {
            return 1.0;
        }
        let h = self.grid.spacing();
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let mut idx = vec![0usize; dim];
                self.grid.unravel(i, &mut idx);
                if (0..dim).any(|a| idx[a] == 0 || idx[a] + 1 == n[a]) {
                    return f64::INFINITY;
                }
                let mut jac = vec![0.0; dim * dim];
                for b in 0..dim {
                    let st = self.grid.stride(b);
                    for a in 0..dim {
                        let d = (self.disp[a][i + st] - self.disp[a][i - st]) / (2.0 * h[b]);
                        jac[a * dim + b] = d + if a == b { 1.0 } else { 0.0 };
                    }
                }
                determinant(&mut jac, dim)
            })
            .reduce(|| f64::INFINITY, f64::min)
    }

    pub fn check_jacobian(&self) -> Result<()> {
        let j = self.min_jacobian();
        if !(j > 0.0) {
            return Err(Error::FlowDegenerate(format!("minimum Jacobian determinant {j}")));
        }
        Ok(())
    }

    /// Sup over nodes of the Euclidean distance between two maps.
    pub fn sup_distance(&self, other: &GridDiffeo) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::IncompatibleGrids("distance between maps on different grids".into()));
        }
        Ok((0..self.grid.len())
            .map(|i| {
                (0..self.dim())
                    .map(|a| (self.disp[a][i] - other.disp[a][i]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max))
    }

    pub fn max_displacement(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| (0..self.dim()).map(|a| self.disp[a][i].powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

fn determinant(m: &mut [f64], n: usize) -> f64 {
    match n {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => {
            let mut det = 1.0;
            for c in 0..n {
                let piv = (c..n)
                    .max_by(|&a, &b| m[a * n + c].abs().total_cmp(&m[b * n + c].abs()))
                    .unwrap();
                if m[piv * n + c] == 0.0 {
                    return 0.0;
                }
                if piv != c {
                    for k in 0..n {
                        m.swap(piv * n + k, c * n + k);
                    }
                    det = -det;
                }
                det *= m[c * n + c];
                for r in c + 1..n {
                    let f = m[r * n + c] / m[c * n + c];
                    for k in c..n {
                        m[r * n + k] -= f * m[c * n + k];
                    }
                }
            }
            det
        }
    }
}

/// `outer ∘ inner`, evaluated at the nodes of the common grid.
pub fn compose(outer: &GridDiffeo, inner: &GridDiffeo) -> Result<GridDiffeo> {
    if outer.grid != inner.grid {
        return Err(Error::IncompatibleGrids("compose on different grids".into()));
    }
    let grid = &inner.grid;
    let dim = grid.dim();
    let moving: Vec<bool> = outer.disp.iter().map(|c| c.iter().any(|v| *v != 0.0)).collect();
    let images: Vec<Result<Vec<f64>>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut y = grid.node(i);
            for a in 0..dim {
                y[a] += inner.disp[a][i];
            }
            let mut out = vec![0.0; dim];
            for a in 0..dim {
                let d = if !moving[a] {
                    0.0
                } else {
                    grid.interpolate(&outer.disp[a], &y)
                        .ok_or_else(|| Error::OutOfDomain(format!("{y:?}")))?
                };
                out[a] = y[a] + d;
            }
            Ok(out)
        })
        .collect();
    let mut disp = vec![vec![0.0; grid.len()]; dim];
    let mut x = vec![0.0; dim];
    for (i, img) in images.into_iter().enumerate() {
        let img = img?;
        grid.node_into(i, &mut x);
        for a in 0..dim {
            disp[a][i] = img[a] - x[a];
        }
    }
    let support = outer.support.union(&inner.support);
    GridDiffeo::new(grid.clone(), disp, support)
}

/// Inverts a piecewise-linear increasing function given by samples on a
/// uniform row; `None` outside the row's image.
pub(crate) fn invert_row(x0: f64, h: f64, image: &[f64], target: f64) -> Option<f64> {
    let n = image.len();
    if target < image[0] || target > image[n - 1] {
        return None;
    }
    let (mut lo, mut hi) = (0usize, n - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if image[mid] <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (image[lo], image[hi]);
    let f = if b > a { ((target - a) / (b - a)).clamp(0.0, 1.0) } else { 0.0 };
    Some(x0 + (lo as f64 + f) * h)
}

fn invert_shear(phi: &GridDiffeo, axis: usize) -> Result<GridDiffeo> {
    let grid = &phi.grid;
    let n = grid.resolution()[axis];
    let stride = grid.stride(axis);
    let h = grid.spacing()[axis];
    let x0 = grid.lo()[axis];
    let d = &phi.disp[axis];
    let mut out = vec![0.0; grid.len()];
    let mut idx = vec![0usize; grid.dim()];
    let starts: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            grid.unravel(i, &mut idx);
            idx[axis] == 0
        })
        .collect();
    let rows: Vec<Result<Vec<(usize, f64)>>> = starts
        .par_iter()
        .map(|&s| {
            let image: Vec<f64> = (0..n).map(|j| grid.coord(axis, j) + d[s + j * stride]).collect();
            if image.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InversionFailed(format!(
                    "row starting at node {s} is not strictly increasing"
                )));
            }
            (0..n)
                .map(|j| {
                    let node = s + j * stride;
                    let target = grid.coord(axis, j);
                    let z = invert_row(x0, h, &image, target).ok_or_else(|| {
                        Error::InversionFailed(format!("node {node} outside the row image"))
                    })?;
                    Ok((node, z - target))
                })
                .collect()
        })
        .collect();
    for r in rows {
        for (node, v) in r? {
            out[node] = v;
        }
    }
    let mut x = vec![0.0; grid.dim()];
    for (i, v) in out.iter_mut().enumerate() {
        grid.node_into(i, &mut x);
        if !phi.support.contains(&x) {
            *v = 0.0;
        }
    }
    let mut disp = vec![vec![0.0; grid.len()]; grid.dim()];
    disp[axis] = out;
    GridDiffeo::new(grid.clone(), disp, phi.support.clone())
}

fn invert_newton(phi: &GridDiffeo, tol: f64) -> Result<GridDiffeo> {
    let grid = &phi.grid;
    let dim = grid.dim();
    let solved: Vec<Result<Vec<f64>>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let target = grid.node(i);
            if !phi.support.contains(&target) {
                return Ok(vec![0.0; dim]);
            }
            let mut z = target.clone();
            let mut img = vec![0.0; dim];
            let mut jac = vec![0.0; dim * dim];
            for _ in 0..NEWTON_MAX_ITER {
                phi.apply(&z, &mut img);
                let res: Vec<f64> = (0..dim).map(|a| img[a] - target[a]).collect();
                if res.iter().map(|r| r * r).sum::<f64>().sqrt() <= tol {
                    return Ok((0..dim).map(|a| z[a] - target[a]).collect());
                }
                for a in 0..dim {
                    for b in 0..dim {
                        let dd = grid
                            .interpolate_partial(&phi.disp[a], &z, b)
                            .map(|(_, d)| d)
                            .unwrap_or(0.0);
                        jac[a * dim + b] = dd + if a == b { 1.0 } else { 0.0 };
                    }
                }
                let step = solve(&jac, &res, dim)
                    .ok_or_else(|| Error::InversionFailed(format!("singular Jacobian at node {i}")))?;
                let mut damp = 1.0;
                let r0 = res.iter().map(|r| r * r).sum::<f64>();
                loop {
                    let trial: Vec<f64> = (0..dim).map(|a| z[a] - damp * step[a]).collect();
                    phi.apply(&trial, &mut img);
                    let r1: f64 = (0..dim).map(|a| (img[a] - target[a]).powi(2)).sum();
                    if r1 < r0 || damp < 1e-6 {
                        z = trial;
                        break;
                    }
                    damp *= 0.5;
                }
            }
            Err(Error::InversionFailed(format!("Newton did not converge at node {i}")))
        })
        .collect();
    let mut disp = vec![vec![0.0; grid.len()]; dim];
    for (i, r) in solved.into_iter().enumerate() {
        let v = r?;
        for a in 0..dim {
            disp[a][i] = v[a];
        }
    }
    GridDiffeo::new(grid.clone(), disp, phi.support.clone())
}

fn solve(m: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut a = m.to_vec();
    let mut x = b.to_vec();
    for c in 0..n {
        let piv = (c..n).max_by(|&p, &q| a[p * n + c].abs().total_cmp(&a[q * n + c].abs()))?;
        if a[piv * n + c].abs() < 1e-300 {
            return None;
        }
        for k in 0..n {
            a.swap(piv * n + k, c * n + k);
        }
        x.swap(piv, c);
        for r in 0..n {
            if r != c {
                let f = a[r * n + c] / a[c * n + c];
                for k in c..n {
                    a[r * n + k] -= f * a[c * n + k];
                }
                x[r] -= f * x[c];
            }
        }
    }
    Some((0..n).map(|c| x[c] / a[c * n + c]).collect())
}

/// Node-wise inverse: exact piecewise-linear row inversion for shear-type
/// maps, damped Newton otherwise.
pub fn invert(phi: &GridDiffeo) -> Result<GridDiffeo> {
    if phi.is_identity() {
        return Ok(phi.clone());
    }
    match phi.shear_axis() {
        Some(axis) => invert_shear(phi, axis),
        None => invert_newton(phi, 1e-12),
    }
}
