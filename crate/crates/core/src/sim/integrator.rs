use nalgebra::DVector;

use crate::error::{Error, Result};

/// Advances `x' = f(x, u)` over `dt` with `substeps` classical fourth-order
/// Runge-Kutta steps, holding `u` constant (zero-order hold).
pub fn rk4_step<F>(f: F, x: &DVector<f64>, u: &DVector<f64>, dt: f64, substeps: usize) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    if substeps == 0 || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "integration needs dt > 0 and at least one substep (dt = {dt}, substeps = {substeps})"
        )));
    }
    let h = dt / substeps as f64;
    let mut x = x.clone();
    for _ in 0..substeps {
        let k1 = f(&x, u)?;
        let k2 = f(&(&x + &k1 * (h / 2.0)), u)?;
        let k3 = f(&(&x + &k2 * (h / 2.0)), u)?;
        let k4 = f(&(&x + &k3 * h), u)?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("plant state"));
    }
    Ok(x)
}
