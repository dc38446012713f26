use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;

use vanishing_diffeo::construction::{
    build_run, default_params, state_grid, Pricing, Strategy, TargetSpec, DEFAULT_SLOPE,
};
use vanishing_diffeo::diffeo::{
    compose, concat, flow, flow_until, invert, path_cost, uniform_nodes, FnSource, GridDiffeo, Segment, Stepping,
    VelocityPath,
};
use vanishing_diffeo::field_norms::{gagliardo_direct, wsp_norm, NormMethod, NormOptions};
use vanishing_diffeo::grid::{BoxRegion, GridSpec, ScalarField};
use vanishing_diffeo::oracle::brute_seminorm;

fn bump(v: f64) -> f64 {
    if v <= 0.0 || v >= 1.0 {
        0.0
    } else {
        (v * (1.0 - v)).powi(2) * 16.0
    }
}

fn field_from(side: usize, vals: &[f64]) -> ScalarField {
    let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![side, side]).unwrap();
    let v: Vec<f64> = (0..g.len()).map(|i| vals[i % vals.len()]).collect();
    ScalarField::new(g.clone(), v, g.bounding_box()).unwrap()
}

fn methods() -> [NormMethod; 3] {
    [NormMethod::Direct, NormMethod::MonteCarlo, NormMethod::InterpolationBound]
}

fn opts(seed: u64) -> NormOptions {
    NormOptions {
        seed,
        mc_samples: 4000,
        ..NormOptions::default()
    }
}

/// A swirl on the unit square, vanishing on its boundary.
fn swirl(a: f64, b: f64, c: f64) -> VelocityPath {
    let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![17, 17]).unwrap();
    let src = FnSource::new(g.clone(), g.bounding_box(), false, move |t, x, out| {
        let w = bump(x[0]) * bump(x[1]);
        out[0] = w * (a + c * t * x[1]);
        out[1] = w * b * (x[0] - 0.5);
    });
    VelocityPath::single(Segment::new("swirl", Arc::new(src), uniform_nodes(5), Stepping::Fixed(32)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norms_are_homogeneous(
        vals in prop::collection::vec(-1.0..1.0f64, 36),
        c in -3.0..3.0f64,
        s in 0.1..0.9f64,
        p in prop::sample::select(vec![1.5, 2.0, 3.0]),
        seed in 0..1000u64,
    ) {
        let f = field_from(6, &vals);
        let cf = f.scaled(c);
        for m in methods() {
            let a = wsp_norm(&f, s, p, m, &opts(seed)).unwrap().wsp;
            let b = wsp_norm(&cf, s, p, m, &opts(seed)).unwrap().wsp;
            assert_relative_eq!(b, c.abs() * a, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn triangle_inequality_holds(
        u in prop::collection::vec(-1.0..1.0f64, 36),
        v in prop::collection::vec(-1.0..1.0f64, 36),
        s in 0.1..0.9f64,
        seed in 0..1000u64,
    ) {
        let (f, g) = (field_from(6, &u), field_from(6, &v));
        let fg = f.sum(&g).unwrap();
        for m in [NormMethod::Direct, NormMethod::MonteCarlo] {
            let o = opts(seed);
            let a = wsp_norm(&f, s, 2.0, m, &o).unwrap();
            let b = wsp_norm(&g, s, 2.0, m, &o).unwrap();
            let ab = wsp_norm(&fg, s, 2.0, m, &o).unwrap();
            let slack = 3.0 * (a.estimator_stderr + b.estimator_stderr + ab.estimator_stderr);
            prop_assert!(ab.wsp <= a.wsp + b.wsp + slack + 1e-12, "{m:?}: {} > {} + {}", ab.wsp, a.wsp, b.wsp);
        }
    }

    #[test]
    fn oracle_agrees_with_direct_sum(
        side in 4..12usize,
        vals in prop::collection::vec(-1.0..1.0f64, 1..50),
        lo in 0.0..0.4f64,
        hi in 0.6..1.0f64,
        s in 0.05..0.95f64,
        p in 1.0..3.0f64,
    ) {
        let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![side, side]).unwrap();
        let support = BoxRegion::cube(2, lo, hi);
        let mut x = [0.0; 2];
        let v: Vec<f64> = (0..g.len())
            .map(|i| {
                g.node_into(i, &mut x);
                if support.contains(&x) { vals[i % vals.len()] } else { 0.0 }
            })
            .collect();
        let f = ScalarField::new(g, v, support).unwrap();
        let a = brute_seminorm(&f, s, p).unwrap();
        let b = gagliardo_direct(&f, s, p, u128::MAX).unwrap().value;
        assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-300);
    }

    #[test]
    fn path_cost_is_the_segment_sum(
        amps in prop::collection::vec((-0.5..0.5f64, -0.5..0.5f64, -0.5..0.5f64), 1..4),
        s in 0.1..0.9f64,
    ) {
        let parts: Vec<VelocityPath> = amps.iter().map(|&(a, b, c)| swirl(a, b, c)).collect();
        let path = concat(&parts).unwrap();
        let r = path_cost(&path, s, 2.0, NormMethod::InterpolationBound, 0, &NormOptions::default()).unwrap();
        prop_assert_eq!(r.total, r.per_segment.iter().map(|c| c.cost).sum::<f64>());
    }

    #[test]
    fn flow_of_concat_is_composition(
        a1 in -0.5..0.5f64, b1 in -0.5..0.5f64, c1 in -0.5..0.5f64,
        a2 in -0.5..0.5f64, b2 in -0.5..0.5f64, c2 in -0.5..0.5f64,
    ) {
        let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![33, 33]).unwrap();
        let (p1, p2) = (swirl(a1, b1, c1), swirl(a2, b2, c2));
        let whole = flow(&concat(&[p1.clone(), p2.clone()]).unwrap(), &g, 1).unwrap();
        let parts = compose(&flow(&p2, &g, 1).unwrap(), &flow(&p1, &g, 1).unwrap()).unwrap();
        let err = whole.sup_distance(&parts).unwrap();
        prop_assert!(err <= 5.0 * g.max_spacing(), "sup error {err}");
        prop_assert!(whole.min_jacobian() > 0.0);
    }
}

#[test]
fn right_composition_keeps_per_time_norms() {
    let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![33, 33]).unwrap();
    let (a, b, c) = (0.3, -0.4, 0.2);
    let path = swirl(a, b, c);
    let psi = GridDiffeo::from_fn(g.clone(), g.bounding_box(), |x, y| {
        let w = 0.06 * bump(x[0]) * bump(x[1]);
        y[0] = x[0] + w;
        y[1] = x[1] - 0.5 * w;
    })
    .unwrap();
    let at = |t: f64| compose(&flow_until(&path, &g, 1, t).unwrap(), &psi).unwrap();
    let dt = 1e-3;
    let opts = NormOptions::default();
    for t in [0.25, 0.5, 0.75] {
        let (lo, mid, hi) = (at(t - dt), at(t), at(t + dt));
        let back = invert(&mid).unwrap();
        let mut comps: Vec<Vec<f64>> = (0..2).map(|_| Vec::with_capacity(g.len())).collect();
        let (mut z, mut w, mut yl, mut yh) = ([0.0; 2], [0.0; 2], [0.0; 2], [0.0; 2]);
        for i in 0..g.len() {
            g.node_into(i, &mut z);
            back.apply(&z, &mut w);
            lo.apply(&w, &mut yl);
            hi.apply(&w, &mut yh);
            for k in 0..2 {
                comps[k].push((yh[k] - yl[k]) / (2.0 * dt));
            }
        }
        for (k, vals) in comps.into_iter().enumerate() {
            let derived = ScalarField::new(g.clone(), vals, g.bounding_box()).unwrap();
            let exact = ScalarField::from_fn(g.clone(), g.bounding_box(), |x| {
                let w = bump(x[0]) * bump(x[1]);
                if k == 0 { w * (a + c * t * x[1]) } else { w * b * (x[0] - 0.5) }
            })
            .unwrap();
            for m in [NormMethod::Direct, NormMethod::InterpolationBound] {
                let d = wsp_norm(&derived, 0.5, 2.0, m, &opts).unwrap().wsp;
                let e = wsp_norm(&exact, 0.5, 2.0, m, &opts).unwrap().wsp;
                assert_relative_eq!(d, e, max_relative = 0.05);
            }
        }
    }
}

#[test]
fn constructed_paths_keep_positive_jacobians() {
    for (n, strategy) in [(2, Strategy::Flow2d), (3, Strategy::AffineNd)] {
        let params = default_params(8, n, 0.5, 2.0, strategy).unwrap();
        let t = TargetSpec::bump(state_grid(&params).unwrap(), DEFAULT_SLOPE).unwrap();
        let run = build_run(&t, &params, &Pricing::default()).unwrap();
        for j in 0..=8 {
            let phi = run.frame(j as f64 / 8.0).unwrap();
            assert!(phi.min_jacobian() > 0.0, "n = {n}, t = {}", j as f64 / 8.0);
        }
    }
}
