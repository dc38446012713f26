//! Uniform tensor grids on boxes of ℝⁿ and scalar fields sampled on them.
//!
//! Nodes are stored row-major with axis 0 slowest. Off-node values come
//! from multilinear interpolation; fields are zero-extended outside their
//! grid box.

use crate::error::{Error, Result};

/// Largest dimension handled by the fixed-size scratch buffers below.
pub const MAX_DIM: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidGrid(format!(
                "box bounds have mismatched dimensions {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return Err(Error::InvalidGrid(format!("bad interval [{a}, {b}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn union(&self, other: &BoxRegion) -> BoxRegion {
        BoxRegion {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    pub fn intersect(&self, other: &BoxRegion) -> Option<BoxRegion> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).all(|(a, b)| a <= b) {
            Some(BoxRegion { lo, hi })
        } else {
            None
        }
    }

    pub fn expanded(&self, margin: f64) -> BoxRegion {
        BoxRegion {
            lo: self.lo.iter().map(|a| a - margin).collect(),
            hi: self.hi.iter().map(|b| b + margin).collect(),
        }
    }
}

/// Uniform grid: `n[i]` nodes on `[lo[i], hi[i]]`, spacing `(hi - lo) / (n - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    lo: Vec<f64>,
    hi: Vec<f64>,
    n: Vec<usize>,
    h: Vec<f64>,
    strides: Vec<usize>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        let dim = lo.len();
        if dim == 0 || dim > MAX_DIM || hi.len() != dim || n.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "dimension mismatch or unsupported dimension (lo {}, hi {}, n {})",
                lo.len(),
                hi.len(),
                n.len()
            )));
        }
        for i in 0..dim {
            if !(lo[i].is_finite() && hi[i].is_finite() && hi[i] > lo[i]) {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: degenerate interval [{}, {}]",
                    lo[i], hi[i]
                )));
            }
            if n[i] < 2 {
                return Err(Error::InvalidGrid(format!("axis {i}: need at least 2 nodes")));
            }
        }
        let h = (0..dim).map(|i| (hi[i] - lo[i]) / (n[i] - 1) as f64).collect();
        let mut strides = vec![1usize; dim];
        for i in (0..dim.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * n[i + 1];
        }
        Ok(Self {
            lo,
            hi,
            n,
            h,
            strides,
        })
    }

    pub fn on_box(region: &BoxRegion, n: Vec<usize>) -> Result<Self> {
        Self::new(region.lo.clone(), region.hi.clone(), n)
    }

    /// Grid on `region` whose spacing along each axis is at most `h[i]`.
    pub fn with_max_spacing(region: &BoxRegion, h: &[f64]) -> Result<Self> {
        let n = region
            .lo
            .iter()
            .zip(&region.hi)
            .zip(h)
            .map(|((a, b), hi)| (((b - a) / hi).ceil() as usize + 1).max(2))
            .collect();
        Self::on_box(region, n)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn resolution(&self) -> &[usize] {
        &self.n
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn max_spacing(&self) -> f64 {
        self.h.iter().cloned().fold(0.0, f64::max)
    }

    pub fn bounding_box(&self) -> BoxRegion {
        BoxRegion {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.n[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + i as f64 * self.h[axis]
        }
    }

    pub fn unravel(&self, mut flat: usize, idx: &mut [usize]) {
        for a in 0..self.dim() {
            idx[a] = flat / self.strides[a];
            flat %= self.strides[a];
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.node_into(flat, &mut out);
        out
    }

    pub fn node_into(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for a in 0..self.dim() {
            let i = rem / self.strides[a];
            rem %= self.strides[a];
            out[a] = self.coord(a, i);
        }
    }

    /// Trapezoid weight of one axis: `h` in the interior, `h/2` at the ends.
    pub fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n[axis] {
            0.5 * self.h[axis]
        } else {
            self.h[axis]
        }
    }

    pub fn weight(&self, flat: usize) -> f64 {
        let mut rem = flat;
        let mut w = 1.0;
        for a in 0..self.dim() {
            let i = rem / self.strides[a];
            rem %= self.strides[a];
            w *= self.axis_weight(a, i);
        }
        w
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|f| self.weight(f)).collect()
    }

    /// Cell index and fractional offset of `x` along `axis`, or `None` outside.
    #[inline]
    pub fn locate(&self, axis: usize, x: f64) -> Option<(usize, f64)> {
        let lo = self.lo[axis];
        let hi = self.hi[axis];
        if !(x >= lo && x <= hi) {
            return None;
        }
        let u = (x - lo) / self.h[axis];
        let last = self.n[axis] - 2;
        let i = (u.floor() as usize).min(last);
        let f = (u - i as f64).clamp(0.0, 1.0);
        Some((i, f))
    }

    /// Multilinear interpolation of node values; `None` outside the box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        let dim = self.dim();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0f64; MAX_DIM];
        for a in 0..dim {
            let (i, f) = self.locate(a, x[a])?;
            base[a] = i;
            frac[a] = f;
        }
        Some(self.blend(values, &base[..dim], &frac[..dim], None))
    }

    /// Interpolated value and its partial derivative along `axis`.
    pub fn interpolate_partial(&self, values: &[f64], x: &[f64], axis: usize) -> Option<(f64, f64)> {
        let dim = self.dim();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0f64; MAX_DIM];
        for a in 0..dim {
            let (i, f) = self.locate(a, x[a])?;
            base[a] = i;
            frac[a] = f;
        }
        let v = self.blend(values, &base[..dim], &frac[..dim], None);
        let d = self.blend(values, &base[..dim], &frac[..dim], Some(axis)) / self.h[axis];
        Some((v, d))
    }

    fn blend(&self, values: &[f64], base: &[usize], frac: &[f64], diff_axis: Option<usize>) -> f64 {
        let dim = base.len();
        let origin = self.ravel(base);
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut off = origin;
            for a in 0..dim {
                let bit = (corner >> a) & 1 == 1;
                let fa = frac[a];
                w *= match (Some(a) == diff_axis, bit) {
                    (true, true) => 1.0,
                    (true, false) => -1.0,
                    (false, true) => fa,
                    (false, false) => 1.0 - fa,
                };
                if bit {
                    off += self.strides[a];
                }
            }
            if w != 0.0 {
                acc += w * values[off];
            }
        }
        acc
    }

    /// Finite-difference partial derivative at every node: central in the
    /// interior, one-sided at the box edges.
    pub fn partial_at_nodes(&self, values: &[f64], axis: usize) -> Vec<f64> {
        let n = self.n[axis];
        let s = self.strides[axis];
        let h = self.h[axis];
        let mut idx = vec![0usize; self.dim()];
        (0..self.len())
            .map(|flat| {
                self.unravel(flat, &mut idx);
                let i = idx[axis];
                if i == 0 {
                    (values[flat + s] - values[flat]) / h
                } else if i + 1 == n {
                    (values[flat] - values[flat - s]) / h
                } else {
                    (values[flat + s] - values[flat - s]) / (2.0 * h)
                }
            })
            .collect()
    }

    /// Inclusive node-index range per axis of nodes lying inside `region`.
    pub fn index_ranges(&self, region: &BoxRegion) -> Option<Vec<(usize, usize)>> {
        let mut out = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let eps = 1e-9 * self.h[a];
            let first = ((region.lo[a] - self.lo[a] - eps) / self.h[a]).ceil().max(0.0) as usize;
            let last_f = ((region.hi[a] - self.lo[a] + eps) / self.h[a]).floor();
            if last_f < 0.0 {
                return None;
            }
            let last = (last_f as usize).min(self.n[a] - 1);
            if first > last {
                return None;
            }
            out.push((first, last));
        }
        Some(out)
    }
}

/// Grid-sampled real function, identically zero outside `support`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
    support: BoxRegion,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>, support: BoxRegion) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if support.dim() != grid.dim() {
            return Err(Error::InvalidField("support box dimension mismatch".into()));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite sample at node {bad}")));
        }
        let mut x = vec![0.0; grid.dim()];
        for (flat, v) in values.iter().enumerate() {
            if *v != 0.0 {
                grid.node_into(flat, &mut x);
                if !support.contains(&x) {
                    return Err(Error::InvalidField(format!(
                        "nonzero sample {v} at {x:?} outside the support box"
                    )));
                }
            }
        }
        Ok(Self {
            grid,
            values,
            support,
        })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let support = grid.bounding_box();
        let values = vec![0.0; grid.len()];
        Self {
            grid,
            values,
            support,
        }
    }

    /// Samples `f` at the nodes inside `support` (zero elsewhere).
    pub fn from_fn(grid: GridSpec, support: BoxRegion, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|flat| {
                grid.node_into(flat, &mut x);
                if support.contains(&x) {
                    f(&x)
                } else {
                    0.0
                }
            })
            .collect();
        Self::new(grid, values, support)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> &BoxRegion {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// Multilinear value, zero outside the grid box.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.values, x).unwrap_or(0.0)
    }

    pub fn value_and_partial(&self, x: &[f64], axis: usize) -> (f64, f64) {
        self.grid
            .interpolate_partial(&self.values, x, axis)
            .unwrap_or((0.0, 0.0))
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            support: self.support.clone(),
        }
    }

    pub fn sum(&self, other: &ScalarField) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::IncompatibleGrids("field sum on different grids".into()));
        }
        Ok(Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            support: self.support.union(&other.support),
        })
    }

    /// Euclidean gradient magnitude at every node (central differences).
    pub fn gradient_magnitude(&self) -> Result<Vec<f64>> {
        if let Some(a) = self.grid.resolution().iter().position(|&n| n < 3) {
            return Err(Error::ResolutionTooCoarse(format!(
                "axis {a} has fewer than 3 nodes; central differences undefined"
            )));
        }
        let partials: Vec<Vec<f64>> = (0..self.dim())
            .map(|a| self.grid.partial_at_nodes(&self.values, a))
            .collect();
        Ok((0..self.grid.len())
            .map(|f| partials.iter().map(|d| d[f] * d[f]).sum::<f64>().sqrt())
            .collect())
    }
}
