use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path::{Segment, VelocityPath};
use crate::error::{Error, Result};
use crate::field_norms::{vector_norm, NormMethod, NormOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentCost {
    pub label: String,
    pub cost: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub per_segment: Vec<SegmentCost>,
    pub total: f64,
    pub method: NormMethod,
    pub s: f64,
    pub p: f64,
    /// Uniform node count requested; 0 means each segment's own time nodes.
    pub quadrature_nodes: usize,
}

impl CostReport {
    pub fn empty(s: f64, p: f64, method: NormMethod) -> Self {
        Self {
            per_segment: Vec::new(),
            total: 0.0,
            method,
            s,
            p,
            quadrature_nodes: 0,
        }
    }

    /// Sum of segment costs whose label is one of `labels`.
    pub fn sum_of(&self, labels: &[&str]) -> f64 {
        self.per_segment
            .iter()
            .filter(|c| labels.contains(&c.label.as_str()))
            .map(|c| c.cost)
            .sum()
    }

    /// Appends the segments of another report (same exponents and method).
    pub fn extend(&mut self, other: CostReport) {
        self.per_segment.extend(other.per_segment);
        self.total = self.per_segment.iter().map(|c| c.cost).sum();
    }
}

fn trapezoid(nodes: &[f64], values: &[f64]) -> f64 {
    nodes
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// `∫₀¹ ‖u(t)‖ dt` of one segment in its own time, trapezoid rule.
pub fn segment_cost(seg: &Segment, s: f64, p: f64, method: NormMethod, quadrature_nodes: usize, opts: &NormOptions) -> Result<SegmentCost> {
    Ok(segment_costs(seg, &[s], p, method, quadrature_nodes, opts)?.remove(0))
}

/// [`segment_cost`] for several `s` from one set of snapshots.
pub fn segment_costs(seg: &Segment, ss: &[f64], p: f64, method: NormMethod, quadrature_nodes: usize, opts: &NormOptions) -> Result<Vec<SegmentCost>> {
    let price = |t: f64| -> Result<Vec<(f64, f64)>> {
        let snap = seg.source.snapshot(t)?;
        ss.iter().map(|&s| vector_norm(&snap, s, p, method, opts)).collect()
    };
    if seg.source.time_invariant() {
        return Ok(price(0.0)?
            .into_iter()
            .map(|(cost, stderr)| SegmentCost {
                label: seg.label.clone(),
                cost,
                stderr,
            })
            .collect());
    }
    let nodes = if quadrature_nodes == 0 {
        seg.time_nodes.clone()
    } else {
        super::path::uniform_nodes(quadrature_nodes)
    };
    let values: Vec<Vec<(f64, f64)>> = nodes.par_iter().map(|&t| price(t)).collect::<Result<_>>()?;
    Ok((0..ss.len())
        .map(|j| {
            let norms: Vec<f64> = values.iter().map(|v| v[j].0).collect();
            let errs: Vec<f64> = values.iter().map(|v| v[j].1).collect();
            SegmentCost {
                label: seg.label.clone(),
                cost: trapezoid(&nodes, &norms),
                stderr: trapezoid(&nodes, &errs),
            }
        })
        .collect())
}

/// Prices every segment; the total is the sum of the segment costs.
pub fn path_cost(path: &VelocityPath, s: f64, p: f64, method: NormMethod, quadrature_nodes: usize, opts: &NormOptions) -> Result<CostReport> {
    Ok(path_cost_many(path, &[s], p, method, quadrature_nodes, opts)?.remove(0))
}

/// One [`CostReport`] per entry of `ss`, sampling each velocity snapshot once.
pub fn path_cost_many(path: &VelocityPath, ss: &[f64], p: f64, method: NormMethod, quadrature_nodes: usize, opts: &NormOptions) -> Result<Vec<CostReport>> {
    if quadrature_nodes == 1 {
        return Err(Error::InvalidField("quadrature needs at least 2 nodes".into()));
    }
    let per_seg: Vec<Vec<SegmentCost>> = path
        .segments
        .iter()
        .map(|seg| segment_costs(seg, ss, p, method, quadrature_nodes, opts))
        .collect::<Result<_>>()?;
    Ok(ss
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let per_segment: Vec<SegmentCost> = per_seg.iter().map(|v| v[j].clone()).collect();
            let total = per_segment.iter().map(|c| c.cost).sum();
            CostReport {
                per_segment,
                total,
                method,
                s,
                p,
                quadrature_nodes,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::diffeo::path::{concat, reverse, uniform_nodes, FnSource, Stepping};
    use crate::field_norms::wsp_norm;
    use crate::grid::{GridSpec, ScalarField};

    fn source(invariant: bool) -> Arc<FnSource> {
        let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![17, 17]).unwrap();
        Arc::new(FnSource::new(g.clone(), g.bounding_box(), invariant, move |t, x, out| {
            let b = (x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])).max(0.0);
            out[0] = b * if invariant { 1.0 } else { 1.0 + t * t };
            out[1] = 0.0;
        }))
    }

    fn path(invariant: bool) -> VelocityPath {
        VelocityPath::single(Segment::new("u", source(invariant), uniform_nodes(9), Stepping::Fixed(8)).unwrap())
    }

    #[test]
    fn constant_field_costs_its_norm() {
        let opts = NormOptions::default();
        let m = NormMethod::InterpolationBound;
        let c = path_cost(&path(true), 0.5, 2.0, m, 5, &opts).unwrap();
        let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![17, 17]).unwrap();
        let f = ScalarField::from_fn(g.clone(), g.bounding_box(), |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])).unwrap();
        let n = wsp_norm(&f, 0.5, 2.0, m, &opts).unwrap().wsp;
        assert!((c.total - n).abs() < 1e-12);
    }

    #[test]
    fn reverse_and_concat_preserve_cost() {
        let opts = NormOptions::default();
        let m = NormMethod::InterpolationBound;
        let p = path(false);
        let a = path_cost(&p, 0.5, 2.0, m, 0, &opts).unwrap().total;
        let b = path_cost(&reverse(&p), 0.5, 2.0, m, 0, &opts).unwrap().total;
        assert!((a - b).abs() < 1e-12);
        let both = concat(&[p.clone(), reverse(&p)]).unwrap();
        let c = path_cost(&both, 0.5, 2.0, m, 0, &opts).unwrap();
        assert_eq!(c.total, c.per_segment.iter().map(|s| s.cost).sum::<f64>());
        assert!((c.total - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn empty_path_costs_nothing() {
        let c = path_cost(&VelocityPath::default(), 0.5, 2.0, NormMethod::InterpolationBound, 3, &NormOptions::default()).unwrap();
        assert_eq!(c.total, 0.0);
    }

    #[test]
    fn many_exponents_match_single_pricing() {
        let opts = NormOptions::default();
        let m = NormMethod::InterpolationBound;
        let path = concat(&[path(false), reverse(&path(true))]).unwrap();
        let many = path_cost_many(&path, &[0.3, 0.7], 2.0, m, 0, &opts).unwrap();
        for (r, s) in many.iter().zip([0.3, 0.7]) {
            assert_eq!(r, &path_cost(&path, s, 2.0, m, 0, &opts).unwrap());
        }
    }
}
