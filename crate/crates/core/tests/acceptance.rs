//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vanishing_diffeo::cli::{self, ExperimentPlan};
use vanishing_diffeo::construction::{
    build_run, default_params, moderate_params, state_grid, ConstructionParams, ConstructionRun, Pricing, Strategy,
    TargetSpec, DEFAULT_SLOPE,
};
use vanishing_diffeo::field_norms::{gagliardo_direct, gagliardo_monte_carlo, wsp_norm, NormMethod, NormOptions};
use vanishing_diffeo::grid::{BoxRegion, GridSpec, ScalarField};
use vanishing_diffeo::oracle::{brute_seminorm, endpoint_check, verify_bounds, Calibration};

type Verdict = (bool, String);

fn build(params: ConstructionParams) -> ConstructionRun {
    let t = TargetSpec::bump(state_grid(&params).unwrap(), DEFAULT_SLOPE).unwrap();
    build_run(&t, &params, &Pricing::default()).unwrap()
}

fn slope(ks: &[usize], ys: &[f64]) -> f64 {
    let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ls.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

const KS: [usize; 4] = [8, 16, 32, 64];
const SWEEP_S: [f64; 4] = [0.4, 0.6, 0.8, 1.0];

/// `cost_total[s][k]` for the moderate flow2d sweep, each path priced at every `s`.
fn moderate_sweep() -> Vec<Vec<f64>> {
    let mut table = vec![vec![0.0; KS.len()]; SWEEP_S.len()];
    for (j, &k) in KS.iter().enumerate() {
        let run = build(moderate_params(k, 2, SWEEP_S[0], 2.0, Strategy::Flow2d, 2.0).unwrap());
        let costs = run.costs_at(&SWEEP_S, &Pricing::default()).unwrap();
        assert_eq!(costs[0].total, run.cost.total, "repricing must reproduce the build cost");
        for (i, c) in costs.iter().enumerate() {
            table[i][j] = c.total;
        }
    }
    table
}

fn criterion_1(table: &[Vec<f64>]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &s) in SWEEP_S[..3].iter().enumerate() {
        let row = &table[i];
        let decreasing = row.windows(2).all(|w| w[1] < w[0]);
        let m = slope(&KS, row);
        let pass = decreasing && m < 0.0 && m.abs() >= 0.1;
        ok &= pass;
        parts.push(format!(
            "s={s}: {:.3}/{:.3}/{:.3}/{:.3} slope {m:.3} {}",
            row[0],
            row[1],
            row[2],
            row[3],
            if pass { "ok" } else { "fails" }
        ));
    }
    (ok, parts.join("; "))
}

fn criterion_2(table: &[Vec<f64>]) -> Verdict {
    let row = &table[3];
    (
        row[3] >= row[0],
        format!("s=1.0: {:.3}/{:.3}/{:.3}/{:.3}", row[0], row[1], row[2], row[3]),
    )
}

struct DefaultRuns {
    flow: Vec<ConstructionRun>,
    affine: Vec<ConstructionRun>,
}

fn default_runs() -> DefaultRuns {
    DefaultRuns {
        flow: [8, 16].iter().map(|&k| build(default_params(k, 2, 0.5, 2.0, Strategy::Flow2d).unwrap())).collect(),
        affine: [8, 16].iter().map(|&k| build(default_params(k, 3, 0.5, 2.0, Strategy::AffineNd).unwrap())).collect(),
    }
}

fn criterion_3(runs: &DefaultRuns) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for run in runs.flow.iter().chain(&runs.affine) {
        let h = run.params.state_spacing();
        let err = endpoint_check(&run.endpoint, &run.target);
        let abl = run.ablation_error().unwrap();
        let pass = err <= 5.0 * h && abl > err && (err - run.endpoint_error).abs() <= 1e-15;
        ok &= pass;
        parts.push(format!(
            "n={} k={}: err/h {:.3e}, ablated/h {:.3}",
            run.params.n,
            run.params.k,
            err / h,
            abl / h
        ));
    }
    (ok, parts.join("; "))
}

fn criterion_4(runs: &DefaultRuns) -> Verdict {
    let cal = Calibration::fit(&runs.flow[0]).unwrap();
    let mut failed = Vec::new();
    let mut count = 0;
    for run in &runs.flow {
        for c in verify_bounds(run, Some(&cal)).unwrap() {
            count += 1;
            if !c.passed {
                failed.push(format!("{} at k={} ({:.3e} > {:.3e})", c.name, run.params.k, c.measured, c.bound));
            }
        }
    }
    if failed.is_empty() {
        (true, format!("{count} certificates at k=8,16 passed"))
    } else {
        (false, failed.join(", "))
    }
}

fn random_field(rng: &mut ChaCha8Rng) -> (ScalarField, f64, f64) {
    let dim = rng.gen_range(1..=3usize);
    let side = match dim {
        1 => rng.gen_range(12..=300usize),
        2 => rng.gen_range(5..=20usize),
        _ => rng.gen_range(4..=7usize),
    };
    let shape = vec![side; dim];
    let g = GridSpec::new(vec![0.0; dim], vec![1.0; dim], shape).unwrap();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for _ in 0..dim {
        let a: f64 = rng.gen_range(0.0..0.4);
        let b: f64 = rng.gen_range(0.6..1.0);
        lo.push(a);
        hi.push(b);
    }
    let support = BoxRegion::new(lo, hi).unwrap();
    let smooth = rng.gen_bool(0.5);
    let freq: f64 = rng.gen_range(1.0..4.0);
    let noise: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut x = vec![0.0; dim];
    let vals: Vec<f64> = (0..g.len())
        .map(|i| {
            g.node_into(i, &mut x);
            if !support.contains(&x) {
                0.0
            } else if smooth {
                x.iter().map(|v| (freq * v).sin()).product()
            } else {
                noise[i]
            }
        })
        .collect();
    let f = ScalarField::new(g, vals, support).unwrap();
    let s = rng.gen_range(0.1..0.9);
    let p = [1.0, 1.5, 2.0, 3.0][rng.gen_range(0..4)];
    (f, s, p)
}

fn criterion_5() -> Verdict {
    // oracle equivalence
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (f, s, p) = random_field(&mut rng);
        let a = brute_seminorm(&f, s, p).unwrap();
        let b = gagliardo_direct(&f, s, p, u128::MAX).unwrap().value;
        worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));
    }
    let equiv = worst <= 1e-9;

    // Monte Carlo against the direct sum
    let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![16, 16]).unwrap();
    let mut mc_ok = 0;
    let mut worst_z: f64 = 0.0;
    for seed in 0..20u64 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let c = [r.gen_range(0.3..0.7), r.gen_range(0.3..0.7)];
        let w: f64 = r.gen_range(0.1..0.2);
        let f = ScalarField::from_fn(g.clone(), g.bounding_box(), |x| {
            (-((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (w * w)).exp()
        })
        .unwrap();
        let d = gagliardo_direct(&f, 0.5, 2.0, u128::MAX).unwrap().value;
        let m = gagliardo_monte_carlo(&f, 0.5, 2.0, 200_000, seed).unwrap();
        let z = (m.value - d).abs() / m.stderr;
        worst_z = worst_z.max(z);
        if z <= 3.0 {
            mc_ok += 1;
        }
    }
    // mean of 20 seeds on one field
    let f = ScalarField::from_fn(g.clone(), g.bounding_box(), |x| {
        (-((x[0] - 0.5).powi(2) + (x[1] - 0.45).powi(2)) / 0.02).exp()
    })
    .unwrap();
    let d = gagliardo_direct(&f, 0.5, 2.0, u128::MAX).unwrap().value;
    let ests: Vec<_> = (0..20u64)
        .map(|seed| gagliardo_monte_carlo(&f, 0.5, 2.0, 50_000, 1000 + seed).unwrap())
        .collect();
    let mean = ests.iter().map(|e| e.value).sum::<f64>() / 20.0;
    let combined = ests.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt() / 20.0;
    let mean_z = (mean - d).abs() / combined;
    let mc = mc_ok == 20 && mean_z <= 3.0;

    // indicator scaling on a fixed grid
    let g = GridSpec::new(vec![0.0], vec![1.0], vec![16385]).unwrap();
    let lens = [0.125, 0.25, 0.5];
    let mut worst_rel: f64 = 0.0;
    for sp in [0.3, 0.5, 0.7] {
        let s = sp / 2.0;
        let vals: Vec<f64> = lens
            .iter()
            .map(|&l| {
                let f = ScalarField::from_fn(g.clone(), BoxRegion::new(vec![0.0], vec![l]).unwrap(), |x| {
                    if x[0] <= l + 1e-12 { 1.0 } else { 0.0 }
                })
                .unwrap();
                gagliardo_direct(&f, s, 2.0, u128::MAX).unwrap().value
            })
            .collect();
        let xs: Vec<f64> = lens.iter().map(|l| l.ln()).collect();
        let ys: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let e = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        worst_rel = worst_rel.max((e - (1.0 - sp)).abs() / (1.0 - sp));
    }
    let scaling = worst_rel <= 0.1;
    (
        equiv && mc && scaling,
        format!(
            "oracle max rel diff {worst:.2e}; MC {mc_ok}/20 runs within 3 stderr (max z {worst_z:.2}), mean of 20 at z {mean_z:.2}; indicator exponent max rel err {worst_rel:.3}"
        ),
    )
}

fn smooth_corpus(n: usize) -> Vec<ScalarField> {
    let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![n, n]).unwrap();
    let pi = std::f64::consts::PI;
    let fns: Vec<Box<dyn Fn(&[f64]) -> f64>> = vec![
        Box::new(move |x| (pi * x[0]).sin() * (pi * x[1]).sin()),
        Box::new(move |x| (2.0 * pi * x[0]).sin() * (pi * x[1]).sin().powi(2)),
        Box::new(|x| (-((x[0] - 0.5).powi(2) + (x[1] - 0.4).powi(2)) / 0.02).exp()),
        Box::new(|x| 16.0 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])),
    ];
    fns.into_iter()
        .map(|f| ScalarField::from_fn(g.clone(), g.bounding_box(), |x| f(x)).unwrap())
        .collect()
}

fn criterion_6() -> Verdict {
    let opts = NormOptions::default();
    let k_at = |n: usize| {
        let mut k: f64 = 0.0;
        for f in smooth_corpus(n) {
            for s in [0.3, 0.5, 0.7] {
                let d = wsp_norm(&f, s, 2.0, NormMethod::Direct, &opts).unwrap().wsp;
                let b = wsp_norm(&f, s, 2.0, NormMethod::InterpolationBound, &opts).unwrap().wsp;
                k = k.max(d / b);
            }
        }
        k
    };
    let (a, b) = (k_at(17), k_at(33));
    ((b / a - 1.0).abs() <= 0.2, format!("K(17²) = {a:.4}, K(33²) = {b:.4}"))
}

fn criterion_7(runs: &DefaultRuns) -> Verdict {
    let band = |a: f64, b: f64| {
        let r = b / a;
        (0.25..=4.0).contains(&r)
    };
    let mut ok = true;
    let mut parts = Vec::new();
    let mut check = |name: &str, ratios: [f64; 2]| {
        let pass = ratios[0] > 0.0 && band(ratios[0], ratios[1]);
        ok &= pass;
        parts.push(format!("{name} {:.3e} -> {:.3e}", ratios[0], ratios[1]));
    };
    let ratio = |run: &ConstructionRun, which: &str| {
        let p = &run.params;
        let (k, s, a, l, d) = (p.k as f64, p.s, p.alpha, p.lambda, p.delta);
        let b = run.breakdown();
        match which {
            "squeeze" => b.squeeze / (a * k.powf(-(1.0 - s))),
            "transport" => b.transport / (k.sqrt() * l.powf((2.0 - s) / 2.0) / d.powf(s / 2.0)),
            "correct" => b.correct / ((d / l).powf(1.0 - s) * k.powf(s)),
            _ => b.transport / (k.powf(s) * (-(p.m() as f64 / 2.0 - s) * a).exp()),
        }
    };
    for which in ["squeeze", "transport", "correct"] {
        check(which, [ratio(&runs.flow[0], which), ratio(&runs.flow[1], which)]);
    }
    check("affine", [ratio(&runs.affine[0], "affine"), ratio(&runs.affine[1], "affine")]);
    (ok, parts.join("; "))
}

fn strip_wall(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(12);
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn criterion_8() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let once = |tag: &str| {
        let mut plan = ExperimentPlan::parse("dim = 2\nk = 8, 16\ns = 0.5\nschedule = paper, moderate\nseed = 7\n").unwrap();
        plan.out = dir.path().join(tag);
        let summary = cli::run(&plan).unwrap();
        assert_eq!(summary.exit_code, cli::EXIT_OK);
        let mut mc = ExperimentPlan::parse("dim = 2\nk = 8\ns = 0.5\nmethod = monte_carlo\nseed = 7\n").unwrap();
        mc.out = dir.path().join(format!("{tag}_mc"));
        cli::run(&mc).unwrap();
        let a = std::fs::read_to_string(plan.out.join("results.csv")).unwrap();
        let b = std::fs::read_to_string(mc.out.join("results.csv")).unwrap();
        strip_wall(&a) + "\n" + &strip_wall(&b)
    };
    let (a, b) = (once("a"), once("b"));
    (a == b, format!("{} CSV rows compared", a.lines().count() - 2))
}

fn main() {
    let mut verdicts: Vec<(usize, Verdict)> = Vec::new();
    let mut report = |n: usize, v: Verdict| {
        println!("criterion {n} {}: {}", if v.0 { "PASS" } else { "FAIL" }, v.1);
        verdicts.push((n, v));
    };
    let table = moderate_sweep();
    report(1, criterion_1(&table));
    report(2, criterion_2(&table));
    let runs = default_runs();
    report(3, criterion_3(&runs));
    report(4, criterion_4(&runs));
    report(5, criterion_5());
    report(6, criterion_6());
    report(7, criterion_7(&runs));
    report(8, criterion_8());
    let failed: Vec<usize> = verdicts.iter().filter(|(_, v)| !v.0).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
