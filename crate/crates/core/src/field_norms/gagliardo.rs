//! Gagliardo double integral of a zero-extended grid field.
//!
//! The integral is restricted to a computational box `C`: the support box
//! padded on every side by at least its diameter, snapped outward to the
//! grid lattice (lattice nodes beyond the grid carry the value zero).
//! Pairs of distinct nodes use the node-to-node kernel; the coincident pair
//! of each node is replaced by the local-Lipschitz cell integral
//! `w |∇f|^p S_{n-1} R^{p(1-s)} / (p(1-s))`, with `R` the radius of the ball
//! of volume `w`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lp::check_p;
use crate::error::{Error, Result};
use crate::grid::ScalarField;

/// Breakdown of one seminorm estimate (all values are `p`-th powers).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GagliardoEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Pairs with both nodes inside the support.
    pub interior: f64,
    /// Pairs with exactly one node inside the support, counted twice.
    pub boundary: f64,
    /// Coincident-node cell integrals.
    pub diagonal: f64,
    /// Closed-form bound on pairs leaving the computational box; reported, not added.
    pub tail: f64,
    pub samples: usize,
}

pub const MIN_MC_SAMPLES: usize = 100;
const MC_CHUNK: usize = 8192;

/// Volume of the unit ball in ℝⁿ.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * std::f64::consts::PI / n as f64,
    }
}

pub(crate) fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::UnsupportedExponent(format!(
            "Gagliardo seminorm needs s in (0, 1), got {s}"
        )));
    }
    Ok(())
}

/// Lattice data shared by the direct and Monte Carlo estimators.
struct Prepared {
    dim: usize,
    nc: Vec<usize>,
    strides: Vec<usize>,
    s_lo: Vec<usize>,
    s_hi: Vec<usize>,
    f: Vec<f64>,
    w: Vec<f64>,
    diag: Vec<f64>,
    kernel: Vec<f64>,
    s_nodes: Vec<usize>,
    tail: f64,
    volume: f64,
    p: f64,
}

impl Prepared {
    fn new(field: &ScalarField, s: f64, p: f64, pair_budget: Option<u128>) -> Result<Option<Self>> {
        check_p(p)?;
        check_s(s)?;
        let grid = field.grid();
        let dim = grid.dim();
        let Some(ranges) = grid.index_ranges(field.support()) else {
            return Ok(None);
        };
        if field.is_zero() {
            return Ok(None);
        }
        let h = grid.spacing().to_vec();
        let diam = field.support().diameter();
        let margin: Vec<usize> = h
            .iter()
            .map(|ha| ((diam / ha - 1e-9).ceil() as usize).max(1))
            .collect();
        let nc: Vec<usize> = (0..dim)
            .map(|a| ranges[a].1 - ranges[a].0 + 1 + 2 * margin[a])
            .collect();
        let s_count: u128 = ranges.iter().map(|(a, b)| (b - a + 1) as u128).product();
        let c_count: u128 = nc.iter().map(|&n| n as u128).product();
        if let Some(budget) = pair_budget {
            if s_count * c_count > budget {
                return Err(Error::BudgetExceeded {
                    pairs: s_count * c_count,
                    budget,
                });
            }
        }
        let total = c_count as usize;
        let mut strides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * nc[a + 1];
        }
        let s_lo: Vec<usize> = margin.clone();
        let s_hi: Vec<usize> = (0..dim).map(|a| margin[a] + ranges[a].1 - ranges[a].0).collect();

        let grad = field.gradient_magnitude()?;
        let n = dim as f64;
        let vn = unit_ball_volume(dim);
        let sphere = n * vn;
        let e = p * (1.0 - s);

        let mut f = vec![0.0; total];
        let mut w = vec![0.0; total];
        let mut diag = vec![0.0; total];
        let mut kernel = vec![0.0; total];
        let mut s_nodes = Vec::with_capacity(s_count as usize);
        let mut idx = vec![0usize; dim];
        let mut gidx = vec![0usize; dim];
        let mut tail = 0.0;
        let d_eff = (0..dim).map(|a| margin[a] as f64 * h[a]).fold(f64::INFINITY, f64::min);
        for c in 0..total {
            let mut rem = c;
            let mut wt = 1.0;
            let mut r2 = 0.0;
            let mut inside = true;
            for a in 0..dim {
                idx[a] = rem / strides[a];
                rem %= strides[a];
                let ends = idx[a] == 0 || idx[a] + 1 == nc[a];
                wt *= if ends { 0.5 * h[a] } else { h[a] };
                let d = idx[a] as f64 * h[a];
                r2 += d * d;
                inside &= idx[a] >= s_lo[a] && idx[a] <= s_hi[a];
            }
            w[c] = wt;
            kernel[c] = if c == 0 { 0.0 } else { r2.powf(-(n + s * p) / 2.0) };
            if inside {
                for a in 0..dim {
                    gidx[a] = idx[a] - s_lo[a] + ranges[a].0;
                }
                let gf = grid.ravel(&gidx);
                let v = field.values()[gf];
                f[c] = v;
                let radius = (wt / vn).powf(1.0 / n);
                diag[c] = wt * grad[gf].powf(p) * sphere * radius.powf(e) / e;
                tail += 2.0 * wt * v.abs().powf(p) * sphere * d_eff.powf(-s * p) / (s * p);
                s_nodes.push(c);
            }
        }
        let volume = (0..dim).map(|a| (nc[a] - 1) as f64 * h[a]).product();
        Ok(Some(Self {
            dim,
            nc,
            strides,
            s_lo,
            s_hi,
            f,
            w,
            diag,
            kernel,
            s_nodes,
            tail,
            volume,
            p,
        }))
    }

    #[inline]
    fn in_support(&self, idx: &[usize]) -> bool {
        (0..self.dim).all(|a| idx[a] >= self.s_lo[a] && idx[a] <= self.s_hi[a])
    }

    #[inline]
    fn offset(&self, a: &[usize], b: &[usize]) -> usize {
        (0..self.dim).map(|i| a[i].abs_diff(b[i]) * self.strides[i]).sum()
    }

    fn unravel(&self, mut flat: usize, idx: &mut [usize]) {
        for a in 0..self.dim {
            idx[a] = flat / self.strides[a];
            flat %= self.strides[a];
        }
    }

    fn direct(&self) -> GagliardoEstimate {
        let total = self.f.len();
        let parts: Vec<(f64, f64, f64)> = self
            .s_nodes
            .par_iter()
            .map(|&x| {
                let mut xi = vec![0usize; self.dim];
                let mut yi = vec![0usize; self.dim];
                self.unravel(x, &mut xi);
                let fx = self.f[x];
                let fxp = fx.abs().powf(self.p);
                let mut interior = 0.0;
                let mut boundary = 0.0;
                for y in 0..total {
                    if y == x {
                        continue;
                    }
                    self.unravel(y, &mut yi);
                    let k = self.kernel[self.offset(&xi, &yi)] * self.w[y];
                    if self.in_support(&yi) {
                        let d = fx - self.f[y];
                        if d != 0.0 {
                            interior += k * d.abs().powf(self.p);
                        }
                    } else {
                        boundary += k;
                    }
                }
                let wx = self.w[x];
                (wx * interior, 2.0 * wx * fxp * boundary, self.diag[x])
            })
            .collect();
        let (mut interior, mut boundary, mut diagonal) = (0.0, 0.0, 0.0);
        for (i, b, d) in parts {
            interior += i;
            boundary += b;
            diagonal += d;
        }
        GagliardoEstimate {
            value: interior + boundary + diagonal,
            stderr: 0.0,
            interior,
            boundary,
            diagonal,
            tail: self.tail,
            samples: 0,
        }
    }

    /// Maps a uniform point of `C` to its trapezoid cell (nearest node).
    #[inline]
    fn sample_node(&self, rng: &mut ChaCha8Rng, idx: &mut [usize]) -> usize {
        let mut flat = 0;
        for a in 0..self.dim {
            let u: f64 = rng.gen::<f64>() * (self.nc[a] - 1) as f64;
            let i = (u.round() as usize).min(self.nc[a] - 1);
            idx[a] = i;
            flat += i * self.strides[a];
        }
        flat
    }

    fn chunk(&self, seed: u64, chunk: u64, count: usize) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk);
        let mut xi = vec![0usize; self.dim];
        let mut yi = vec![0usize; self.dim];
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..count {
            let x = self.sample_node(&mut rng, &mut xi);
            let y = self.sample_node(&mut rng, &mut yi);
            let v = if x == y {
                if self.in_support(&xi) {
                    self.diag[x] / (self.w[x] * self.w[x])
                } else {
                    0.0
                }
            } else {
                let d = self.f[x] - self.f[y];
                if d == 0.0 {
                    0.0
                } else {
                    d.abs().powf(self.p) * self.kernel[self.offset(&xi, &yi)]
                }
            };
            sum += v;
            sq += v * v;
        }
        (sum, sq)
    }

    fn monte_carlo(&self, samples: usize, seed: u64) -> GagliardoEstimate {
        let chunks = samples.div_ceil(MC_CHUNK);
        let parts: Vec<(f64, f64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let count = MC_CHUNK.min(samples - c * MC_CHUNK);
                self.chunk(seed, c as u64, count)
            })
            .collect();
        let (mut sum, mut sq) = (0.0, 0.0);
        for (a, b) in parts {
            sum += a;
            sq += b;
        }
        let nf = samples as f64;
        let mean = sum / nf;
        let var = ((sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
        let v2 = self.volume * self.volume;
        GagliardoEstimate {
            value: v2 * mean,
            stderr: v2 * (var / nf).sqrt(),
            tail: self.tail,
            samples,
            ..Default::default()
        }
    }
}

/// Deterministic node-pair sum; errors when `|S|·|C|` exceeds `pair_budget`.
pub fn gagliardo_direct(f: &ScalarField, s: f64, p: f64, pair_budget: u128) -> Result<GagliardoEstimate> {
    Ok(match Prepared::new(f, s, p, Some(pair_budget))? {
        Some(prep) => prep.direct(),
        None => GagliardoEstimate::default(),
    })
}

/// Uniform pair sampling on `C × C`.
///
/// Each sample is attributed to the trapezoid cells of its two points, so the
/// estimator is unbiased for the direct sum.
pub fn gagliardo_monte_carlo(f: &ScalarField, s: f64, p: f64, samples: usize, seed: u64) -> Result<GagliardoEstimate> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::TooFewSamples {
            got: samples,
            min: MIN_MC_SAMPLES,
        });
    }
    Ok(match Prepared::new(f, s, p, None)? {
        Some(prep) => prep.monte_carlo(samples, seed),
        None => GagliardoEstimate {
            samples,
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoxRegion, GridSpec};

    fn indicator(len: f64, nodes: usize) -> ScalarField {
        let g = GridSpec::new(vec![-len / 2.0], vec![1.5 * len], vec![2 * nodes - 1]).unwrap();
        let support = BoxRegion::new(vec![0.0], vec![len]).unwrap();
        ScalarField::from_fn(g, support, |_| 1.0).unwrap()
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-14);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn zero_field_gives_zero() {
        let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![8, 8]).unwrap();
        let f = ScalarField::zeros(g);
        assert_eq!(gagliardo_direct(&f, 0.5, 2.0, u128::MAX).unwrap().value, 0.0);
        assert_eq!(gagliardo_monte_carlo(&f, 0.5, 2.0, 1000, 1).unwrap().value, 0.0);
    }

    #[test]
    fn constant_has_no_interior_or_diagonal_part() {
        let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![9, 9]).unwrap();
        let f = ScalarField::from_fn(g.clone(), g.bounding_box(), |_| 2.5).unwrap();
        let est = gagliardo_direct(&f, 0.4, 2.0, u128::MAX).unwrap();
        assert_eq!(est.interior, 0.0);
        assert_eq!(est.diagonal, 0.0);
        assert!(est.boundary > 0.0);
    }

    #[test]
    fn indicator_scaling_is_exact() {
        let (s, p) = (0.3, 2.0);
        let a = gagliardo_direct(&indicator(0.5, 41), s, p, u128::MAX).unwrap().value;
        let b = gagliardo_direct(&indicator(1.0, 41), s, p, u128::MAX).unwrap().value;
        assert!((b / a - 2f64.powf(1.0 - s * p)).abs() < 1e-10);
    }

    #[test]
    fn budget_is_enforced() {
        let f = indicator(0.5, 41);
        assert!(matches!(
            gagliardo_direct(&f, 0.25, 2.0, 10),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn too_few_samples() {
        let f = indicator(0.5, 11);
        assert!(matches!(
            gagliardo_monte_carlo(&f, 0.25, 2.0, 99, 0),
            Err(Error::TooFewSamples { got: 99, min: 100 })
        ));
    }

    #[test]
    fn monte_carlo_matches_direct() {
        let f = indicator(0.5, 21);
        let d = gagliardo_direct(&f, 0.25, 2.0, u128::MAX).unwrap().value;
        let m = gagliardo_monte_carlo(&f, 0.25, 2.0, 400_000, 7).unwrap();
        assert!((m.value - d).abs() <= 3.0 * m.stderr, "{} vs {d} ± {}", m.value, m.stderr);
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let f = indicator(0.5, 21);
        let a = gagliardo_monte_carlo(&f, 0.25, 2.0, 20_000, 3).unwrap();
        let b = gagliardo_monte_carlo(&f, 0.25, 2.0, 20_000, 3).unwrap();
        assert_eq!(a, b);
    }
}
