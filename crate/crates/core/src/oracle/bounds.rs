use rayon::prelude::*;
use serde_json::json;

use super::BoundCertificate;
use crate::construction::squeezed::{g_inverse, SqueezedProfile, StripProfile};
use crate::construction::{ConstructionRun, PieceRun, Strategy};
use crate::error::{Error, Result};

/// Every certificate `verify_bounds` emits, in emission order.
pub const CERTIFICATE_NAMES: [&str; 10] = [
    "theta_error",
    "theta_monotone",
    "theta_support",
    "xi_bound",
    "g_order",
    "piece_balance",
    "dx_theta",
    "dy_theta",
    "du_delta_sup",
    "support_volume",
];

const DU_TIMES: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const G_HALVINGS: usize = 3;
const NOISE: f64 = 1e-12;

/// Constants fitted at the smallest `k` of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub k: usize,
    /// `max(max ∂ₓθ, 1 / min ∂ₓθ)`.
    pub dx_theta: f64,
    /// `λ max |∂_Y θ|`.
    pub dy_theta: f64,
    /// `δ max |du_δ|` over the sampled times.
    pub du_delta_sup: f64,
    /// `Vol(supp) / (kλ)^m`.
    pub support_volume: f64,
}

impl Calibration {
    pub fn fit(run: &ConstructionRun) -> Result<Self> {
        let m = measure(run)?;
        Ok(m.calibration(run.params.k))
    }
}

#[derive(Default)]
struct PieceMeasure {
    theta_error: f64,
    nonincreasing: usize,
    support_excess: f64,
    xi: f64,
    dx_min: f64,
    dx_max: f64,
    dy: f64,
    du: f64,
    volume: f64,
    g_ratios: Vec<f64>,
}

struct Measure {
    theta_error: f64,
    nonincreasing: usize,
    support_excess: f64,
    xi: f64,
    g_spread: f64,
    balance: f64,
    dx: f64,
    dy: f64,
    du: f64,
    volume: f64,
}

impl Measure {
    fn calibration(&self, k: usize) -> Calibration {
        Calibration {
            k,
            dx_theta: self.dx,
            dy_theta: self.dy,
            du_delta_sup: self.du,
            support_volume: self.volume,
        }
    }
}

fn check_complete(run: &ConstructionRun, piece: &PieceRun) -> Result<()> {
    let missing = match run.params.strategy {
        Strategy::Flow2d if piece.xi.is_none() => Some("Γ displacement"),
        Strategy::Flow2d if piece.transport.is_none() => Some("transport source"),
        Strategy::AffineNd if piece.affine.is_none() => Some("affine source"),
        _ => None,
    };
    match missing {
        Some(what) => Err(Error::IncompleteRun(format!("piece {} has no {what}", piece.label))),
        None => Ok(()),
    }
}

fn profile_of(piece: &PieceRun) -> &SqueezedProfile {
    match (&piece.transport, &piece.affine) {
        (Some(t), _) => t.profile(),
        (_, Some(a)) => a.profile(),
        _ => unreachable!("checked by check_complete"),
    }
}

/// `max_{t,y} |g - t - λζ̃| / λ²` for `λ, λ/2, …`.
fn g_ratios(run: &ConstructionRun, piece: &PieceRun) -> Result<Vec<f64>> {
    let prof = profile_of(piece);
    let g = piece.zeta.grid();
    let nx = g.resolution()[0];
    let s0 = g.stride(0);
    let m = g.dim() - 1;
    let shrink = (-run.params.alpha).exp();
    let half = 3.0 / run.params.k as f64 + 1e-12;
    let v = piece.zeta.values();
    let mut rows = Vec::new();
    let mut y = vec![0.0; g.dim()];
    for r in 0..s0 {
        if (0..nx).all(|i| v[r + i * s0] == 0.0) {
            continue;
        }
        g.node_into(r, &mut y);
        let mut big_y = Vec::with_capacity(m);
        for a in 0..m {
            let z = prof.lattice().center(a, y[a + 1]);
            if (y[a + 1] - z).abs() > half {
                break;
            }
            big_y.push(z + shrink * (y[a + 1] - z));
        }
        if big_y.len() == m {
            rows.push(big_y);
        }
    }
    let ts: Vec<f64> = (0..2 * nx - 1).map(|j| g.lo()[0] + 0.5 * j as f64 * g.spacing()[0]).collect();
    (0..=G_HALVINGS)
        .map(|j| {
            let lambda = run.params.lambda / (1u64 << j) as f64;
            let mut worst: f64 = 0.0;
            for yy in &rows {
                for &t in &ts {
                    let gi = g_inverse(t, yy, prof, lambda)?;
                    worst = worst.max((gi - t - lambda * prof.value(t, yy)).abs());
                }
            }
            Ok(worst / (lambda * lambda))
        })
        .collect()
}

fn measure_piece(run: &ConstructionRun, piece: &PieceRun) -> Result<PieceMeasure> {
    check_complete(run, piece)?;
    let params = &run.params;
    let g = piece.zeta.grid();
    let n = g.dim();
    let nx = g.resolution()[0];
    let s0 = g.stride(0);
    let h = g.spacing().to_vec();
    let z = piece.zeta.values();
    let sigma = piece.conjugated.displacement(0);
    let mut out = PieceMeasure {
        dx_min: f64::INFINITY,
        dx_max: 0.0,
        ..Default::default()
    };

    for (i, (s, zv)) in sigma.iter().zip(z).enumerate() {
        let mut e = (s - zv).abs();
        for a in 1..n {
            e = e.max(piece.conjugated.displacement(a)[i].abs());
        }
        out.theta_error = out.theta_error.max(e);
    }

    let mut x = vec![0.0; n];
    for r in 0..s0 {
        let mut zeta_nodes: Vec<f64> = Vec::new();
        for i in 0..nx {
            if z[r + i * s0] != 0.0 {
                zeta_nodes.push(g.coord(0, i));
            }
        }
        for i in 0..nx {
            let f = r + i * s0;
            if i + 1 < nx {
                let d = (h[0] + sigma[f + s0] - sigma[f]) / h[0];
                if d <= 0.0 {
                    out.nonincreasing += 1;
                }
                out.dx_min = out.dx_min.min(d);
                out.dx_max = out.dx_max.max(d);
            }
            if sigma[f].abs() > NOISE {
                g.node_into(f, &mut x);
                let dist = zeta_nodes
                    .iter()
                    .map(|c| (c - x[0]).abs())
                    .fold(f64::INFINITY, f64::min);
                out.support_excess = out.support_excess.max(dist.min(1.0 + g.bounding_box().diameter()));
            }
        }
    }

    // |∂_Y θ| = e^α |∂_y σ| on the squeezed strips
    for a in 1..n {
        let d = g.partial_at_nodes(sigma, a);
        let worst = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        out.dy = out.dy.max(worst * params.lambda * params.alpha.exp());
    }

    if let Some(xi) = &piece.xi {
        out.xi = xi.sup_abs();
    }
    if let Some(tr) = &piece.transport {
        let mut worst: f64 = 0.0;
        for &t in &DU_TIMES {
            for c in tr.active_centers() {
                let patch = tr.patch(t, c)?;
                let gm = patch.gradient_magnitude()?;
                worst = worst.max(gm.iter().fold(0.0f64, |m, v| m.max(*v)));
            }
        }
        out.du = worst * params.delta;
    }
    if let Some(af) = &piece.affine {
        out.volume = af.support_volume()? / (params.k as f64 * params.lambda).powi(params.m() as i32);
    }
    out.g_ratios = g_ratios(run, piece)?;
    Ok(out)
}

fn measure(run: &ConstructionRun) -> Result<Measure> {
    let pieces = run
        .pieces
        .par_iter()
        .map(|p| measure_piece(run, p))
        .collect::<Result<Vec<_>>>()?;
    let mut m = Measure {
        theta_error: 0.0,
        nonincreasing: 0,
        support_excess: 0.0,
        xi: 0.0,
        g_spread: 1.0,
        balance: 1.0,
        dx: 1.0,
        dy: 0.0,
        du: 0.0,
        volume: 0.0,
    };
    let mut ratios = vec![0.0f64; G_HALVINGS + 1];
    for p in &pieces {
        m.theta_error = m.theta_error.max(p.theta_error);
        m.nonincreasing += p.nonincreasing;
        m.support_excess = m.support_excess.max(p.support_excess);
        m.xi = m.xi.max(p.xi);
        if p.dx_min > 0.0 {
            m.dx = m.dx.max(p.dx_max).max(1.0 / p.dx_min);
        } else {
            m.dx = f64::INFINITY;
        }
        m.dy = m.dy.max(p.dy);
        m.du = m.du.max(p.du);
        m.volume = m.volume.max(p.volume);
        for (r, q) in ratios.iter_mut().zip(&p.g_ratios) {
            *r = r.max(*q);
        }
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
    if hi > 0.0 {
        m.g_spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    }
    let costs: Vec<f64> = run.pieces.iter().map(|p| p.cost.total).filter(|c| *c > 0.0).collect();
    if let (Some(lo), Some(hi)) = (
        costs.iter().cloned().reduce(f64::min),
        costs.iter().cloned().reduce(f64::max),
    ) {
        m.balance = hi / lo;
    }
    Ok(m)
}

/// One certificate per tracked bound.
///
/// Fitted constants come from `calibration`; without one the run calibrates
/// itself, which makes the fitted certificates pass by construction.
pub fn verify_bounds(run: &ConstructionRun, calibration: Option<&Calibration>) -> Result<Vec<BoundCertificate>> {
    let m = measure(run)?;
    let params = &run.params;
    let own = m.calibration(params.k);
    let cal = calibration.unwrap_or(&own);
    let h = params.state_spacing();
    let ctx = json!({
        "k": params.k,
        "n": params.n,
        "s": params.s,
        "p": params.p,
        "strategy": params.strategy.as_str(),
        "schedule": params.schedule.name(),
        "alpha": params.alpha,
        "lambda": params.lambda,
        "delta": params.delta,
        "h": h,
        "calibrated_at": cal.k,
    });
    let err_bound = 3.0 * params.delta / params.lambda + 5.0 * h;
    Ok(vec![
        BoundCertificate::new("theta_error", m.theta_error, err_bound, ctx.clone()),
        BoundCertificate::new("theta_monotone", m.nonincreasing as f64, 0.0, ctx.clone()),
        BoundCertificate::new("theta_support", m.support_excess, params.delta + h, ctx.clone()),
        BoundCertificate::new("xi_bound", m.xi, err_bound, ctx.clone()),
        BoundCertificate::new("g_order", m.g_spread, 2.0, ctx.clone()),
        BoundCertificate::new("piece_balance", m.balance, 3.0, ctx.clone()),
        BoundCertificate::new("dx_theta", m.dx, 2.0 * cal.dx_theta, ctx.clone()),
        BoundCertificate::new("dy_theta", m.dy, 2.0 * cal.dy_theta, ctx.clone()),
        BoundCertificate::new("du_delta_sup", m.du, 2.0 * cal.du_delta_sup, ctx.clone()),
        BoundCertificate::new("support_volume", m.volume, 2.0 * cal.support_volume, ctx),
    ])
}
