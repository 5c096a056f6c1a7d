use crate::error::{domain, Result};

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        domain(format!("quantile level must lie in (0, 1), got {tau}"))
    }
}

#[inline]
pub(crate) fn pinball_unchecked(tau: f64, u: f64) -> f64 {
    if u >= 0.0 {
        u * tau
    } else {
        u * (tau - 1.0)
    }
}

/// Pinball (quantile) loss ρ_τ(u).
pub fn pinball(tau: f64, u: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(pinball_unchecked(tau, u))
}

/// Quantile Huber loss: the pinball weights applied to the Huber norm of `u`,
/// quadratic within `eps` of zero.
pub fn huber_pinball(tau: f64, u: f64, eps: f64) -> Result<f64> {
    Ok(huber_pinball_with_derivative(tau, u, eps)?.0)
}

/// Quantile Huber loss and its derivative with respect to `u`.
pub fn huber_pinball_with_derivative(tau: f64, u: f64, eps: f64) -> Result<(f64, f64)> {
    check_tau(tau)?;
    if !(eps > 0.0) {
        return domain(format!("Huber threshold must be positive, got {eps}"));
    }
    Ok(huber_pinball_unchecked(tau, u, eps))
}

#[inline]
pub(crate) fn huber_pinball_unchecked(tau: f64, u: f64, eps: f64) -> (f64, f64) {
    let a = u.abs();
    let (h, dh) = if a <= eps {
        (u * u / (2.0 * eps), u / eps)
    } else {
        (a - 0.5 * eps, u.signum())
    };
    let w = if u >= 0.0 { tau } else { 1.0 - tau };
    (w * h, w * dh)
}
