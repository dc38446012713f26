//! Fixed one-dimensional smooth profiles.

/// `C^∞` step: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Even plateau: 1 on `|v| ≤ inner`, 0 on `|v| ≥ outer`.
pub fn plateau(v: f64, inner: f64, outer: f64) -> f64 {
    smooth_step((outer - v.abs()) / (outer - inner))
}

/// Representative of `v` in `[-4, 4)` modulo 8.
#[inline]
pub fn wrap8(v: f64) -> f64 {
    v - 8.0 * ((v + 4.0) / 8.0).floor()
}

/// Periodic strip cutoff: 1 on `[-2, 2]`, supported in `(-3, 3)`, period 8.
pub fn strip_cutoff(v: f64) -> f64 {
    plateau(wrap8(v), 2.0, 3.0)
}

/// Periodic squeeze profile: `-v` on `[-3, 3]`, vanishing at `±4`, period 8.
pub fn squeeze_profile(v: f64) -> f64 {
    let w = wrap8(v);
    -w * plateau(w, 3.0, 4.0)
}

/// Box cutoff for the squeeze field: 1 on `[0, 1]`, zero outside
/// `(-1/8, 9/8)`.
pub fn unit_box_cutoff(x: f64) -> f64 {
    plateau(x - 0.5, 0.5, 0.625)
}

/// Bump supported in `[0.1, 0.9]` with maximum 1 at `0.5`.
pub fn target_bump(x: f64) -> f64 {
    let u = (x - 0.5) / 0.4;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

pub fn target_bump_derivative(x: f64) -> f64 {
    let u = (x - 0.5) / 0.4;
    if u.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - u * u;
        target_bump(x) * (-2.0 * u / (q * q)) / 0.4
    }
}

/// `max |b'|` of [`target_bump`], by golden-section search on `(0.1, 0.5)`.
pub fn target_bump_max_slope() -> f64 {
    let f = |x: f64| -target_bump_derivative(x).abs();
    let (mut a, mut b) = (0.1, 0.5);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    -f(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_plateau_and_support() {
        for i in -400..=400 {
            let v = i as f64 * 0.01;
            let c = strip_cutoff(v);
            if v.abs() <= 2.0 {
                assert_eq!(c, 1.0);
            }
            if (3.0..=4.0).contains(&v.abs()) {
                assert_eq!(c, 0.0);
            }
            assert!((strip_cutoff(v + 8.0) - c).abs() < 1e-12);
        }
    }

    #[test]
    fn squeeze_profile_is_linear_core() {
        for i in -300..=300 {
            let v = i as f64 * 0.01;
            assert!((squeeze_profile(v) + v).abs() < 1e-15);
        }
        assert_eq!(squeeze_profile(4.0), 0.0);
        assert_eq!(squeeze_profile(-4.0), 0.0);
    }

    #[test]
    fn bump_slope_matches_sampling() {
        let m = target_bump_max_slope();
        let sampled = (0..100_000)
            .map(|i| target_bump_derivative(0.1 + 0.8 * i as f64 / 100_000.0).abs())
            .fold(0.0, f64::max);
        assert!((m - sampled).abs() < 1e-6 * m);
        let h = 1e-6;
        let x = 0.3;
        let fd = (target_bump(x + h) - target_bump(x - h)) / (2.0 * h);
        assert!((fd - target_bump_derivative(x)).abs() < 1e-6);
    }
}
