//! Brute-force and analytic cross-checks.

mod bounds;

use rayon::prelude::*;
use serde::Serialize;

use crate::construction::TargetSpec;
use crate::diffeo::GridDiffeo;
use crate::error::{Error, Result};
use crate::grid::ScalarField;

pub use bounds::{verify_bounds, Calibration, CERTIFICATE_NAMES};

/// Largest grid the quadratic oracle accepts.
pub const BRUTE_NODE_LIMIT: usize = 10_000;

/// The verdict on one tracked bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCertificate {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub margin: f64,
    pub passed: bool,
    pub context: serde_json::Value,
}

impl BoundCertificate {
    pub fn new(name: &str, measured: f64, bound: f64, context: serde_json::Value) -> Self {
        let passed = measured <= bound;
        let margin = if bound > 0.0 {
            measured / bound
        } else if passed {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            name: name.to_string(),
            measured,
            bound,
            margin,
            passed,
            context,
        }
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn ball_volume(n: usize) -> f64 {
    // V_n = 2π/n · V_{n-2}
    let mut v = if n % 2 == 0 { 1.0 } else { 2.0 };
    let mut m = if n % 2 == 0 { 2 } else { 3 };
    while m <= n {
        v *= 2.0 * std::f64::consts::PI / m as f64;
        m += 2;
    }
    v
}

/// `|∇f|` at one node, central differences inside, one-sided at the grid edges.
fn grad_at(f: &ScalarField, idx: &[usize]) -> f64 {
    let g = f.grid();
    let v = f.values();
    let mut at = idx.to_vec();
    let mut sq = 0.0;
    for a in 0..g.dim() {
        let n = g.resolution()[a];
        let h = g.spacing()[a];
        let i = idx[a];
        let (lo, hi, span) = if i == 0 {
            (0, 1, h)
        } else if i + 1 == n {
            (n - 2, n - 1, h)
        } else {
            (i - 1, i + 1, 2.0 * h)
        };
        at[a] = lo;
        let a_lo = v[g.ravel(&at)];
        at[a] = hi;
        let a_hi = v[g.ravel(&at)];
        at[a] = i;
        let d = (a_hi - a_lo) / span;
        sq += d * d;
    }
    sq.sqrt()
}

/// Plain double sum for the Gagliardo seminorm to the power `p`.
///
/// The field is extended by zero onto a box padded on each side by the
/// support diameter. Every ordered pair of distinct nodes contributes
/// `w_x w_y |f(x) - f(y)|^p / |x - y|^{n+sp}`; each support node adds its
/// cell integral `w |∇f|^p S_{n-1} R^{p(1-s)} / (p(1-s))`.
pub fn brute_seminorm(f: &ScalarField, s: f64, p: f64) -> Result<f64> {
    let g = f.grid();
    if g.len() > BRUTE_NODE_LIMIT {
        return Err(Error::NodeBudget {
            nodes: g.len(),
            budget: BRUTE_NODE_LIMIT,
        });
    }
    if !(s > 0.0 && s < 1.0) || p < 1.0 {
        return Err(Error::UnsupportedExponent(format!("s = {s}, p = {p}")));
    }
    let n = g.dim();
    let h = g.spacing();
    let sup = f.support();

    // nodes of the grid inside the support box
    let mut first = vec![0usize; n];
    let mut count = vec![0usize; n];
    for a in 0..n {
        let tol = 1e-9 * h[a];
        let lo = ((sup.lo[a] - g.lo()[a] - tol) / h[a]).ceil().max(0.0);
        let hi = ((sup.hi[a] - g.lo()[a] + tol) / h[a]).floor().min((g.resolution()[a] - 1) as f64);
        if hi < lo {
            return Ok(0.0);
        }
        first[a] = lo as usize;
        count[a] = (hi - lo) as usize + 1;
    }
    if f.values().iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    if g.resolution().iter().any(|&r| r < 3) {
        return Err(Error::ResolutionTooCoarse("fewer than 3 nodes on an axis".into()));
    }
    let diam = sup.lo.iter().zip(&sup.hi).map(|(l, u)| (u - l) * (u - l)).sum::<f64>().sqrt();
    let pad: Vec<usize> = (0..n).map(|a| ((diam / h[a] - 1e-9).ceil() as usize).max(1)).collect();
    let side: Vec<usize> = (0..n).map(|a| count[a] + 2 * pad[a]).collect();
    let total: usize = side.iter().product();

    // every node of the padded box: integer position, weight, value
    let mut pos = Vec::with_capacity(total);
    let mut weight = Vec::with_capacity(total);
    let mut value = Vec::with_capacity(total);
    let mut support_nodes = Vec::new();
    let mut idx = vec![0usize; n];
    let mut gi = vec![0usize; n];
    for c in 0..total {
        let mut r = c;
        for a in (0..n).rev() {
            idx[a] = r % side[a];
            r /= side[a];
        }
        let mut w = 1.0;
        let mut inside = true;
        for a in 0..n {
            w *= if idx[a] == 0 || idx[a] + 1 == side[a] { 0.5 * h[a] } else { h[a] };
            inside &= idx[a] >= pad[a] && idx[a] < pad[a] + count[a];
        }
        let v = if inside {
            for a in 0..n {
                gi[a] = idx[a] - pad[a] + first[a];
            }
            support_nodes.push((c, gi.clone()));
            f.values()[g.ravel(&gi)]
        } else {
            0.0
        };
        pos.push(idx.clone());
        weight.push(w);
        value.push(v);
    }

    let e = n as f64 + s * p;
    let pairs: f64 = (0..total)
        .into_par_iter()
        .filter(|&x| value[x] != 0.0)
        .map(|x| {
            let mut acc = 0.0;
            for y in 0..total {
                if y == x {
                    continue;
                }
                let d = value[x] - value[y];
                if d == 0.0 {
                    continue;
                }
                let r2: f64 = (0..n)
                    .map(|a| {
                        let t = (pos[x][a] as f64 - pos[y][a] as f64) * h[a];
                        t * t
                    })
                    .sum();
                let twice = if value[y] == 0.0 { 2.0 } else { 1.0 };
                acc += twice * weight[y] * d.abs().powf(p) / r2.powf(e / 2.0);
            }
            weight[x] * acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();

    let vn = ball_volume(n);
    let q = p * (1.0 - s);
    let cells: f64 = support_nodes
        .iter()
        .map(|(c, gi)| {
            let w = weight[*c];
            let radius = (w / vn).powf(1.0 / n as f64);
            w * grad_at(f, gi).powf(p) * n as f64 * vn * radius.powf(q) / q
        })
        .sum();
    Ok(pairs + cells)
}

/// Sup distance at the nodes between `endpoint` and `x ↦ (x₁ + ζ(x), x₂, …)`.
///
/// Panics if the two grids differ.
pub fn endpoint_check(endpoint: &GridDiffeo, target: &TargetSpec) -> f64 {
    let g = endpoint.grid();
    assert_eq!(g, target.grid(), "endpoint and target must share a grid");
    let n = g.dim();
    (0..g.len())
        .into_par_iter()
        .map(|i| {
            let x = g.node(i);
            let mut err: f64 = 0.0;
            for a in 0..n {
                let want = if a == 0 { target.eval(&x) } else { 0.0 };
                err = err.max((endpoint.displacement(a)[i] - want).abs());
            }
            err
        })
        .reduce(|| 0.0, f64::max)
}
