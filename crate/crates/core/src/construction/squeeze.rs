use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::params::ConstructionParams;
use super::profiles::{squeeze_profile, unit_box_cutoff};
use super::strips::Lattice;
use crate::diffeo::{uniform_nodes, Segment, Stepping, VelocityPath, VelocitySource};
use crate::error::{Error, Result};
use crate::field_norms::FieldSample;
use crate::grid::{BoxRegion, GridSpec, ScalarField, MAX_DIM};

/// Time-constant field `u = (0, (α/k) u₁(k y - 4I) χ(x, y))`.
pub struct SqueezeSource {
    n: usize,
    alpha: f64,
    lattice: Lattice,
    grid: GridSpec,
    support: BoxRegion,
}

impl SqueezeSource {
    pub fn new(params: &ConstructionParams, lattice: Lattice) -> Result<Self> {
        let n = params.n;
        let r = &params.resolutions;
        let support = BoxRegion::cube(n, -0.125, 1.125);
        let mut res = vec![r.x_cells + r.x_cells / 4 + 1];
        let ny = r.y_cells_per_strip * params.k;
        res.extend(std::iter::repeat_n(ny + ny / 4 + 1, n - 1));
        let grid = GridSpec::on_box(&support, res)?;
        Ok(Self {
            n,
            alpha: params.alpha,
            lattice,
            grid,
            support,
        })
    }

    #[inline]
    fn transverse(&self, axis: usize, y: f64) -> f64 {
        let k = self.lattice.k as f64;
        self.alpha / k * squeeze_profile(k * y - self.lattice.shift[axis])
    }

    fn flow_1d(&self, axis: usize, mut y: f64, steps: usize, t_end: f64, sign: f64) -> f64 {
        let h = 1.0 / steps as f64;
        let f = |v: f64| sign * self.transverse(axis, v);
        let mut t = 0.0;
        while t < t_end {
            let dt = h.min(t_end - t);
            let k1 = f(y);
            let k2 = f(y + 0.5 * dt * k1);
            let k3 = f(y + 0.5 * dt * k2);
            let k4 = f(y + dt * k3);
            y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += dt;
        }
        y
    }

    fn flow_point(&self, x: &mut [f64], steps: usize, t_end: f64, sign: f64) {
        let d = x.len();
        let h = 1.0 / steps as f64;
        let mut k = [[0.0; MAX_DIM]; 4];
        let mut y = [0.0; MAX_DIM];
        let mut t = 0.0;
        while t < t_end {
            let dt = h.min(t_end - t);
            for stage in 0..4 {
                let c = [0.0, 0.5, 0.5, 1.0][stage];
                for a in 0..d {
                    y[a] = x[a] + if stage == 0 { 0.0 } else { c * dt * k[stage - 1][a] };
                }
                let mut out = [0.0; MAX_DIM];
                self.velocity(0.0, &y[..d], &mut out[..d]);
                for a in 0..d {
                    k[stage][a] = sign * out[a];
                }
            }
            for a in 0..d {
                x[a] += dt / 6.0 * (k[0][a] + 2.0 * k[1][a] + 2.0 * k[2][a] + k[3][a]);
            }
            t += dt;
        }
    }
}

fn in_unit_cube(x: &[f64]) -> bool {
    x.iter().all(|v| (0.0..=1.0).contains(v))
}

impl VelocitySource for SqueezeSource {
    fn dim(&self) -> usize {
        self.n
    }

    fn velocity(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        let chi: f64 = x.iter().map(|&c| unit_box_cutoff(c)).product();
        for a in 1..self.n {
            out[a] = if chi == 0.0 { 0.0 } else { chi * self.transverse(a - 1, x[a]) };
        }
    }

    fn snapshot(&self, _t: f64) -> Result<Vec<FieldSample>> {
        let mut out = vec![FieldSample::Zero];
        let mut v = vec![0.0; self.n];
        for a in 1..self.n {
            let f = ScalarField::from_fn(self.grid.clone(), self.support.clone(), |x| {
                self.velocity(0.0, x, &mut v);
                v[a]
            })?;
            out.push(FieldSample::Grid(f));
        }
        Ok(out)
    }

    fn support_box(&self) -> BoxRegion {
        self.support.clone()
    }

    fn time_invariant(&self) -> bool {
        true
    }

    /// Inside the unit cube each transverse coordinate follows its own
    /// one-dimensional flow, integrated once per distinct value.
    fn advect_fast(&self, points: &mut [f64], steps: usize, t_end: f64, sign: f64) -> bool {
        let d = self.n;
        let mut keys: Vec<(usize, u64)> = points
            .chunks(d)
            .filter(|x| in_unit_cube(x))
            .flat_map(|x| (1..d).map(move |a| (a, x[a].to_bits())))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let images: HashMap<(usize, u64), f64> = keys
            .par_iter()
            .map(|&(a, bits)| ((a, bits), self.flow_1d(a - 1, f64::from_bits(bits), steps, t_end, sign)))
            .collect();
        points.par_chunks_mut(d).for_each(|x| {
            if in_unit_cube(x) {
                for a in 1..d {
                    x[a] = images[&(a, x[a].to_bits())];
                }
            } else {
                self.flow_point(x, steps, t_end, sign);
            }
        });
        true
    }
}

/// Integration steps for the squeeze segment.
pub fn squeeze_steps(params: &ConstructionParams) -> usize {
    ((params.resolutions.squeeze_steps_per_alpha as f64 * params.alpha).ceil() as usize).max(16)
}

/// The squeeze for one strip family; its time-one flow is `Ψ`.
pub fn squeeze_path(params: &ConstructionParams, lattice: &Lattice) -> Result<VelocityPath> {
    if params.alpha < 0.0 {
        return Err(Error::InvalidField("α must be non-negative".into()));
    }
    let r = &params.resolutions;
    if r.y_cells_per_strip < 4 || r.tube_cells_per_lambda < 4 || r.x_cells % 4 != 0 {
        return Err(Error::ResolutionTooCoarse(
            "squeezed strips need at least 4 cells across".into(),
        ));
    }
    if (r.patch_cells_per_delta as f64) * params.lambda / params.delta < 4.0 {
        return Err(Error::ResolutionTooCoarse(format!(
            "transport patches resolve λ = {:e} with fewer than 4 cells",
            params.lambda
        )));
    }
    let src = SqueezeSource::new(params, lattice.clone())?;
    let seg = Segment::new("squeeze", Arc::new(src), uniform_nodes(2), Stepping::Fixed(squeeze_steps(params)))?;
    Ok(VelocityPath::single(seg))
}
