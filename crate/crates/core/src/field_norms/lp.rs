use crate::error::{Error, Result};
use crate::grid::ScalarField;

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::UnsupportedExponent(format!("p = {p} (need p >= 1)")));
    }
    Ok(())
}

/// `Σ w |f|^p` with trapezoid weights.
pub fn lp_pow(f: &ScalarField, p: f64) -> Result<f64> {
    check_p(p)?;
    let grid = f.grid();
    Ok(f
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| grid.weight(i) * v.abs().powf(p))
        .sum())
}

pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    Ok(lp_pow(f, p)?.powf(1.0 / p))
}

/// `Σ w |∇f|^p`, gradient by central differences.
pub fn grad_lp_pow(f: &ScalarField, p: f64) -> Result<f64> {
    check_p(p)?;
    let grad = f.gradient_magnitude()?;
    let grid = f.grid();
    Ok(grad
        .iter()
        .enumerate()
        .filter(|(_, g)| **g != 0.0)
        .map(|(i, g)| grid.weight(i) * g.powf(p))
        .sum())
}

pub fn w1p_norm(f: &ScalarField, p: f64) -> Result<f64> {
    Ok((lp_pow(f, p)? + grad_lp_pow(f, p)?).powf(1.0 / p))
}

/// `a^(1-s) * b^s` with the convention `0^0 = 1`.
pub(crate) fn blend(lp: f64, w1p: f64, s: f64) -> f64 {
    let a = if s == 1.0 { 1.0 } else { lp.powf(1.0 - s) };
    let b = if s == 0.0 { 1.0 } else { w1p.powf(s) };
    a * b
}

/// `‖f‖_p^(1-s) ‖f‖_{1,p}^s`, the interpolation surrogate with unit constant.
///
/// Accepts the closed range `s ∈ [0, 1]`; the end points reproduce the
/// `Lᵖ` and `W^{1,p}` norms.
pub fn interpolation_bound(f: &ScalarField, s: f64, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::UnsupportedExponent(format!(
            "interpolation bound needs p > 1, got {p}"
        )));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::UnsupportedExponent(format!("s = {s} outside [0, 1]")));
    }
    Ok(blend(lp_norm(f, p)?, w1p_norm(f, p)?, s))
}
