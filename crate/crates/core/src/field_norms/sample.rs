use super::lp::blend;
use super::{effective_exponent, grad_lp_pow, lp_pow, wsp_norm, NormMethod, NormOptions, NormReport};
use crate::error::Result;
use crate::grid::ScalarField;

/// One velocity component at one time: nothing, a single grid, or a set of
/// grid patches with pairwise disjoint supports.
#[derive(Clone, Debug)]
pub enum FieldSample {
    Zero,
    Grid(ScalarField),
    Patches(Vec<ScalarField>),
}

impl FieldSample {
    pub fn is_zero(&self) -> bool {
        match self {
            FieldSample::Zero => true,
            FieldSample::Grid(f) => f.is_zero(),
            FieldSample::Patches(ps) => ps.iter().all(|f| f.is_zero()),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            FieldSample::Zero => 0.0,
            FieldSample::Grid(f) => f.sup_abs(),
            FieldSample::Patches(ps) => ps.iter().fold(0.0, |m, f| m.max(f.sup_abs())),
        }
    }

    pub fn norm(&self, s: f64, p: f64, method: NormMethod, opts: &NormOptions) -> Result<NormReport> {
        match self {
            FieldSample::Zero => Ok(NormReport {
                q: effective_exponent(p, method, opts),
                ..NormReport::zero(s, p, method)
            }),
            FieldSample::Grid(f) => wsp_norm(f, s, p, method, opts),
            FieldSample::Patches(ps) => {
                if method != NormMethod::InterpolationBound {
                    return pair_norm_of_patches(ps, s, p, method, opts);
                }
                let q = effective_exponent(p, method, opts);
                let mut lpq = 0.0;
                let mut gq = 0.0;
                for f in ps {
                    lpq += lp_pow(f, q)?;
                    gq += grad_lp_pow(f, q)?;
                }
                let lp = lpq.powf(1.0 / q);
                let w1p = (lpq + gq).powf(1.0 / q);
                let wsp = blend(lp, w1p, s);
                Ok(NormReport {
                    lp,
                    w1p,
                    gagliardo_seminorm: (wsp.powf(q) - lpq).max(0.0),
                    wsp,
                    method,
                    estimator_stderr: 0.0,
                    s,
                    p,
                    q,
                    tail: 0.0,
                })
            }
        }
    }
}

/// Pair estimators on a patch set: each patch is priced zero-extended on its
/// own padded box and the `p`-th powers are summed. Pairs with one node in
/// each of two patches are counted as `|f(x)|^p + |f(y)|^p` instead of
/// `|f(x) - f(y)|^p`.
fn pair_norm_of_patches(ps: &[ScalarField], s: f64, p: f64, method: NormMethod, opts: &NormOptions) -> Result<NormReport> {
    let mut lpp = 0.0;
    let mut gp = 0.0;
    let mut semi = 0.0;
    let mut var = 0.0;
    let mut tail = 0.0;
    for (i, f) in ps.iter().enumerate() {
        let o = NormOptions {
            seed: opts.seed.wrapping_add(i as u64),
            ..opts.clone()
        };
        let r = wsp_norm(f, s, p, method, &o)?;
        lpp += r.lp.powf(p);
        gp += r.w1p.powf(p) - r.lp.powf(p);
        semi += r.gagliardo_seminorm;
        var += r.estimator_stderr * r.estimator_stderr;
        tail += r.tail;
    }
    Ok(NormReport {
        lp: lpp.powf(1.0 / p),
        w1p: (lpp + gp.max(0.0)).powf(1.0 / p),
        gagliardo_seminorm: semi,
        wsp: (lpp + semi).powf(1.0 / p),
        method,
        estimator_stderr: var.sqrt(),
        s,
        p,
        q: p,
        tail,
    })
}

/// Norm of a vector field: component norms summed. Returns `(value, stderr)`.
pub fn vector_norm(components: &[FieldSample], s: f64, p: f64, method: NormMethod, opts: &NormOptions) -> Result<(f64, f64)> {
    let mut value = 0.0;
    let mut stderr = 0.0;
    for c in components {
        let r = c.norm(s, p, method, opts)?;
        value += r.wsp;
        stderr += r.estimator_stderr;
    }
    Ok((value, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_norms::interpolation_bound;
    use crate::grid::{BoxRegion, GridSpec};

    fn patch(lo: f64) -> ScalarField {
        let g = GridSpec::new(vec![lo, 0.0], vec![lo + 1.0, 1.0], vec![21, 21]).unwrap();
        ScalarField::from_fn(g.clone(), g.bounding_box(), |x| {
            ((x[0] - lo) * (lo + 1.0 - x[0]) * x[1] * (1.0 - x[1])).powi(2)
        })
        .unwrap()
    }

    #[test]
    fn patches_add_pth_powers() {
        let opts = NormOptions::default();
        let one = FieldSample::Patches(vec![patch(0.0)])
            .norm(0.5, 2.0, NormMethod::InterpolationBound, &opts)
            .unwrap();
        let two = FieldSample::Patches(vec![patch(0.0), patch(5.0)])
            .norm(0.5, 2.0, NormMethod::InterpolationBound, &opts)
            .unwrap();
        assert!((two.wsp / one.wsp - 2f64.sqrt()).abs() < 1e-12);
        let grid = interpolation_bound(&patch(0.0), 0.5, 2.0).unwrap();
        assert!((one.wsp - grid).abs() < 1e-14);
    }

    #[test]
    fn pair_methods_add_patch_powers() {
        let opts = NormOptions::default();
        let one = FieldSample::Patches(vec![patch(0.0)]).norm(0.5, 2.0, NormMethod::Direct, &opts).unwrap();
        let grid = wsp_norm(&patch(0.0), 0.5, 2.0, NormMethod::Direct, &opts).unwrap();
        assert_eq!(one.wsp, grid.wsp);
        let two = FieldSample::Patches(vec![patch(0.0), patch(5.0)])
            .norm(0.5, 2.0, NormMethod::Direct, &opts)
            .unwrap();
        assert!((two.wsp / one.wsp - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn vector_norm_sums_components() {
        let opts = NormOptions::default();
        let g = GridSpec::new(vec![0.0], vec![1.0], vec![11]).unwrap();
        let f = ScalarField::from_fn(g, BoxRegion::cube(1, 0.0, 1.0), |x| x[0]).unwrap();
        let a = FieldSample::Grid(f.clone());
        let b = FieldSample::Grid(f.scaled(-2.0));
        let (v, e) = vector_norm(&[a.clone(), b, FieldSample::Zero], 0.5, 2.0, NormMethod::InterpolationBound, &opts).unwrap();
        let single = a.norm(0.5, 2.0, NormMethod::InterpolationBound, &opts).unwrap().wsp;
        assert!((v - 3.0 * single).abs() < 1e-12);
        assert_eq!(e, 0.0);
    }
}
