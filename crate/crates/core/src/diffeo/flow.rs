//! Particle integration of `∂_t φ_t = u(t, φ_t)` with classical RK4.

use rayon::prelude::*;

use super::map::GridDiffeo;
use super::path::{Segment, Stepping, VelocityPath, VelocitySource};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, MAX_DIM};

const MAX_STEPS: usize = 50_000_000;

#[inline]
fn rk4_step(src: &dyn VelocitySource, t: f64, h: f64, x: &[f64], out: &mut [f64]) {
    let d = x.len();
    let mut k1 = [0.0; MAX_DIM];
    let mut k2 = [0.0; MAX_DIM];
    let mut k3 = [0.0; MAX_DIM];
    let mut k4 = [0.0; MAX_DIM];
    let mut y = [0.0; MAX_DIM];
    src.velocity(t, x, &mut k1[..d]);
    for a in 0..d {
        y[a] = x[a] + 0.5 * h * k1[a];
    }
    src.velocity(t + 0.5 * h, &y[..d], &mut k2[..d]);
    for a in 0..d {
        y[a] = x[a] + 0.5 * h * k2[a];
    }
    src.velocity(t + 0.5 * h, &y[..d], &mut k3[..d]);
    for a in 0..d {
        y[a] = x[a] + h * k3[a];
    }
    src.velocity(t + h, &y[..d], &mut k4[..d]);
    for a in 0..d {
        out[a] = x[a] + h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
    }
}

fn fixed(src: &dyn VelocitySource, steps: usize, t_end: f64, x: &mut [f64]) {
    let h = 1.0 / steps as f64;
    let mut t = src.idle_until(x).max(0.0);
    let mut next = [0.0; MAX_DIM];
    let d = x.len();
    while t < t_end {
        let step = h.min(t_end - t);
        rk4_step(src, t, step, x, &mut next[..d]);
        x.copy_from_slice(&next[..d]);
        t += step;
        if src.at_rest(t, x) {
            break;
        }
    }
}

fn adaptive(src: &dyn VelocitySource, tol: f64, max_step: f64, first_step: f64, t_end: f64, x: &mut [f64]) -> Result<()> {
    let d = x.len();
    let mut t = src.idle_until(x).max(0.0);
    let mut h = first_step.min(max_step);
    let mut full = [0.0; MAX_DIM];
    let mut half = [0.0; MAX_DIM];
    let mut two = [0.0; MAX_DIM];
    let mut steps = 0usize;
    while t < t_end {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::FlowDegenerate(format!(
                "adaptive integration exceeded {MAX_STEPS} steps at t = {t}"
            )));
        }
        let step = h.min(max_step).min(t_end - t);
        rk4_step(src, t, step, x, &mut full[..d]);
        rk4_step(src, t, 0.5 * step, x, &mut half[..d]);
        rk4_step(src, t + 0.5 * step, 0.5 * step, &half[..d], &mut two[..d]);
        let err = (0..d).map(|a| (two[a] - full[a]).abs()).fold(0.0, f64::max) / 15.0;
        if err <= tol || step <= 1e-15 {
            x.copy_from_slice(&two[..d]);
            t += step;
            let grow = if err == 0.0 { 4.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 4.0) };
            h = step * grow;
            if src.at_rest(t, x) {
                break;
            }
        } else {
            h = step * (0.9 * (tol / err).powf(0.25)).max(0.1);
        }
    }
    Ok(())
}

/// Integrates one segment on `[0, t_end]` for particles stored interleaved in `points`.
pub fn advect_segment(seg: &Segment, points: &mut [f64], min_substeps: usize, t_end: f64) -> Result<()> {
    let dim = seg.source.dim();
    if points.len() % dim != 0 {
        return Err(Error::InvalidField("particle buffer not a multiple of the dimension".into()));
    }
    let src: &dyn VelocitySource = seg.source.as_ref();
    match seg.stepping {
        Stepping::Fixed(n) => {
            let steps = n.max(min_substeps).max(1);
            if src.advect_fast(points, steps, t_end, 1.0) {
                return Ok(());
            }
            points.par_chunks_mut(dim).for_each(|x| fixed(src, steps, t_end, x));
            Ok(())
        }
        Stepping::Adaptive { tol, max_step, first_step } => points
            .par_chunks_mut(dim)
            .try_for_each(|x| adaptive(src, tol, max_step, first_step, t_end, x)),
    }
}

/// Integrates the whole path up to global time `t` (in `[0, 1]`).
pub fn advect_until(path: &VelocityPath, points: &mut [f64], substeps: usize, t: f64) -> Result<()> {
    let n = path.segments.len();
    if n == 0 {
        return Ok(());
    }
    let scaled = t.clamp(0.0, 1.0) * n as f64;
    for (j, seg) in path.segments.iter().enumerate() {
        let local = (scaled - j as f64).min(1.0);
        if local <= 0.0 {
            break;
        }
        advect_segment(seg, points, substeps, local)?;
    }
    Ok(())
}

pub fn advect(path: &VelocityPath, points: &mut [f64], substeps: usize) -> Result<()> {
    advect_until(path, points, substeps, 1.0)
}

fn node_buffer(grid: &GridSpec) -> Vec<f64> {
    let dim = grid.dim();
    let mut pts = vec![0.0; dim * grid.len()];
    for (i, chunk) in pts.chunks_mut(dim).enumerate() {
        grid.node_into(i, chunk);
    }
    pts
}

/// `φ_t` of the path started from the identity, sampled at the grid nodes.
pub fn flow_until(path: &VelocityPath, grid: &GridSpec, substeps: usize, t: f64) -> Result<GridDiffeo> {
    if substeps == 0 {
        return Err(Error::InvalidField("substeps must be at least 1".into()));
    }
    let mut pts = node_buffer(grid);
    advect_until(path, &mut pts, substeps, t)?;
    let phi = GridDiffeo::from_images(grid.clone(), &pts)?;
    phi.check_jacobian()?;
    Ok(phi)
}

/// Endpoint `φ_1` of the path started from the identity.
pub fn flow(path: &VelocityPath, grid: &GridSpec, substeps: usize) -> Result<GridDiffeo> {
    flow_until(path, grid, substeps, 1.0)
}

/// Flows the node images of `start` along the path, giving `φ_1 ∘ start`.
pub fn flow_from(path: &VelocityPath, start: &GridDiffeo, substeps: usize) -> Result<GridDiffeo> {
    let mut pts = start.images();
    advect(path, &mut pts, substeps)?;
    let phi = GridDiffeo::from_images(start.grid().clone(), &pts)?;
    phi.check_jacobian()?;
    Ok(phi)
}
