use super::riccati::CorrectorProfile;
use crate::environment::PotentialField;
use crate::error::{invalid, Result};

/// `log M_t` for a path sampled at times `k dt`:
///
/// ```text
/// M_t = exp(beta int_0^t V(X_s) ds + theta (X_t - X_0) + F(X_t) - F(X_0) - lambda t)
/// ```
///
/// with the time integral by the trapezoid rule and `beta`, `theta`,
/// `lambda` taken from the profile. For paths started at 0 this is the
/// usual normalization `F(0) = 0`.
pub fn log_martingale_weight(
    field: &PotentialField,
    profile: &CorrectorProfile,
    path: &[f64],
    dt: f64,
) -> Result<f64> {
    if path.is_empty() {
        return Err(invalid("empty path"));
    }
    if !(dt > 0.0) && path.len() > 1 {
        return Err(invalid("dt must be positive"));
    }
    let mut integral = 0.0;
    let mut prev = field.value(path[0])?;
    for &x in &path[1..] {
        let v = field.value(x)?;
        integral += 0.5 * (prev + v) * dt;
        prev = v;
    }
    let t = dt * (path.len() - 1) as f64;
    let x0 = path[0];
    let xt = path[path.len() - 1];
    Ok(
        profile.beta * integral + profile.theta * (xt - x0) + profile.f_at(xt)?
            - profile.f_at(x0)?
            - profile.lambda * t,
    )
}

/// `M_t` itself; see [`log_martingale_weight`].
pub fn martingale_weights(
    field: &PotentialField,
    profile: &CorrectorProfile,
    path: &[f64],
    dt: f64,
) -> Result<f64> {
    Ok(log_martingale_weight(field, profile, path, dt)?.exp())
}
