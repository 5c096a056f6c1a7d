//! Gaussian law left-censored at 0 and right-censored at 1.
//!
//! Mass below 0 collapses onto 0 and mass above 1 onto 1, which matches the
//! support of PV power normalized by plant capacity.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::normal;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Location and scale of the doubly censored normal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl CensoredNormalParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let p = Self { mu, sigma };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() || !self.mu.is_finite() {
            return domain(format!(
                "censored normal needs finite mu and sigma > 0, got ({}, {})",
                self.mu, self.sigma
            ));
        }
        Ok(())
    }
}

/// CDF of the censored law: 0 below 0, Φ((x−μ)/σ) on [0, 1], 1 above 1.
pub fn cdf(x: f64, p: CensoredNormalParams) -> Result<f64> {
    p.check()?;
    Ok(if x < 0.0 {
        0.0
    } else if x > 1.0 {
        1.0
    } else {
        normal::cdf((x - p.mu) / p.sigma)
    })
}

/// Point masses `(p_lb, p_ub)` at 0 and 1.
pub fn point_masses(p: CensoredNormalParams) -> Result<(f64, f64)> {
    p.check()?;
    Ok((normal::cdf(-p.mu / p.sigma), normal::cdf((p.mu - 1.0) / p.sigma)))
}

/// Generalized inverse of [`cdf`] at level `tau` in (0, 1).
pub fn quantile(tau: f64, p: CensoredNormalParams) -> Result<f64> {
    p.check()?;
    if !(tau > 0.0 && tau < 1.0) {
        return domain(format!("quantile level must lie in (0, 1), got {tau}"));
    }
    p.check()?;
    if tau <= normal::cdf(-p.mu / p.sigma) {
        return Ok(0.0);
    }
    if tau >= normal::cdf((1.0 - p.mu) / p.sigma) {
        return Ok(1.0);
    }
    Ok((p.mu + p.sigma * normal::inv_cdf(tau)).clamp(0.0, 1.0))
}

// Antiderivative of Φ(t)².
#[inline]
fn phi_sq_integral(t: f64) -> f64 {
    let big_phi = normal::cdf(t);
    t * big_phi * big_phi + 2.0 * normal::pdf(t) * big_phi
        - FRAC_1_SQRT_PI * normal::cdf(std::f64::consts::SQRT_2 * t)
}

struct Standardized {
    z: f64,
    lower: f64,
    upper: f64,
}

fn standardize(p: CensoredNormalParams, y: f64) -> Result<Standardized> {
    p.check()?;
    if !(0.0..=1.0).contains(&y) {
        return domain(format!("observation must lie in [0, 1], got {y}"));
    }
    Ok(Standardized {
        z: (y - p.mu) / p.sigma,
        lower: -p.mu / p.sigma,
        upper: (1.0 - p.mu) / p.sigma,
    })
}

// CRPS of the standard normal censored to [lower, upper] at z in that interval:
// ∫_lower^z Φ(t)² dt + ∫_z^upper Φ(−t)² dt.
fn standard_crps(s: &Standardized) -> f64 {
    phi_sq_integral(s.z) - phi_sq_integral(s.lower) + phi_sq_integral(-s.z)
        - phi_sq_integral(-s.upper)
}

/// Closed-form CRPS of the censored law against an observation in [0, 1].
pub fn crps_closed_form(p: CensoredNormalParams, y: f64) -> Result<f64> {
    let s = standardize(p, y)?;
    Ok((p.sigma * standard_crps(&s)).max(0.0))
}

/// Partial derivatives `(∂/∂μ, ∂/∂σ)` of [`crps_closed_form`].
pub fn crps_gradient(p: CensoredNormalParams, y: f64) -> Result<(f64, f64)> {
    let s = standardize(p, y)?;
    let centre = 2.0 * normal::cdf(s.z) - 1.0;
    let lo_mass = normal::cdf(s.lower);
    let hi_mass = normal::cdf(-s.upper);
    let lo_sq = lo_mass * lo_mass;
    let hi_sq = hi_mass * hi_mass;
    let d_mu = -(centre - lo_sq + hi_sq);
    let d_sigma = standard_crps(&s) - s.z * centre + s.lower * lo_sq - s.upper * hi_sq;
    Ok((d_mu, d_sigma))
}

/// CRPS and gradient without domain checks, for training loops that have
/// already floored sigma and validated observations.
pub(crate) fn crps_value_and_gradient(mu: f64, sigma: f64, y: f64) -> (f64, f64, f64) {
    let s = Standardized {
        z: (y - mu) / sigma,
        lower: -mu / sigma,
        upper: (1.0 - mu) / sigma,
    };
    let c = standard_crps(&s);
    let centre = 2.0 * normal::cdf(s.z) - 1.0;
    let lo = normal::cdf(s.lower);
    let hi = normal::cdf(-s.upper);
    let d_mu = -(centre - lo * lo + hi * hi);
    let d_sigma = c - s.z * centre + s.lower * lo * lo - s.upper * hi * hi;
    ((sigma * c).max(0.0), d_mu, d_sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(mu: f64, sigma: f64) -> CensoredNormalParams {
        CensoredNormalParams::new(mu, sigma).unwrap()
    }

    // ∫ [F(t) − 1{t ≥ y}]² dt by the trapezoid rule; the integrand vanishes
    // outside [0, 1] and is smooth on [0, y] and [y, 1].
    fn crps_by_quadrature(mu: f64, sigma: f64, y: f64, panels: usize) -> f64 {
        let f = |t: f64| 0.5 * libm::erfc(-(t - mu) / (sigma * std::f64::consts::SQRT_2));
        let trap = |a: f64, b: f64, n: usize, g: &dyn Fn(f64) -> f64| {
            if b <= a {
                return 0.0;
            }
            let h = (b - a) / n as f64;
            let mut s = 0.5 * (g(a) + g(b));
            for i in 1..n {
                s += g(a + i as f64 * h);
            }
            s * h
        };
        let left = ((y * panels as f64).round() as usize).max(1);
        let right = (panels - left.min(panels - 1)).max(1);
        trap(0.0, y, left, &|t| f(t).powi(2)) + trap(y, 1.0, right, &|t| (1.0 - f(t)).powi(2))
    }

    #[test]
    fn cdf_branches() {
        assert_eq!(cdf(-0.2, params(0.5, 0.2)).unwrap(), 0.0);
        assert!((cdf(0.5, params(0.5, 0.2)).unwrap() - 0.5).abs() < 1e-15);
        assert!((cdf(0.25, params(0.5, 0.25)).unwrap() - 0.158_655).abs() < 1e-6);
        let p = params(0.7, 0.3);
        assert!((cdf(1.0, p).unwrap() - normal::cdf(1.0)).abs() < 1e-15);
        assert_eq!(cdf(1.0 + 1e-12, p).unwrap(), 1.0);
        assert!(cdf(0.5, CensoredNormalParams { mu: 0.5, sigma: 0.0 }).is_err());
    }

    #[test]
    fn point_mass_values() {
        assert_eq!(point_masses(params(0.0, 1.0)).unwrap().0, 0.5);
        let (lb, ub) = point_masses(params(0.5, 0.5)).unwrap();
        assert!((lb - 0.158_655).abs() < 1e-6 && (ub - 0.158_655).abs() < 1e-6);
        assert!((point_masses(params(2.0, 0.5)).unwrap().1 - 0.977_250).abs() < 1e-6);
        assert!(point_masses(CensoredNormalParams { mu: 0.0, sigma: -1.0 }).is_err());
    }

    #[test]
    fn quantile_examples() {
        let want = 0.5 + 0.1 * -2.326_347_874_040_841;
        assert!((quantile(0.01, params(0.5, 0.1)).unwrap() - want).abs() < 1e-12);
        assert!((quantile(0.01, params(0.5, 0.1)).unwrap() - 0.2674).abs() < 1e-4);
        assert!((quantile(0.5, params(0.5, 0.2)).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(quantile(0.05, params(-1.0, 0.3)).unwrap(), 0.0);
        assert_eq!(quantile(0.99, params(2.0, 0.3)).unwrap(), 1.0);
        assert!(quantile(0.0, params(0.5, 0.1)).is_err());
        assert!(quantile(1.0, params(0.5, 0.1)).is_err());
    }

    #[test]
    fn quantile_is_generalized_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let p = params(rng.gen_range(-0.5..1.5), rng.gen_range(0.01..1.0));
            let tau: f64 = rng.gen_range(0.001..0.999);
            let q = quantile(tau, p).unwrap();
            if q < 1.0 {
                assert!(cdf(q, p).unwrap() >= tau - 1e-12);
            }
            let x: f64 = rng.gen_range(0.001..0.999);
            let c = cdf(x, p).unwrap();
            if c > 0.0 && c < 1.0 - 1e-6 {
                assert!(quantile(c, p).unwrap() <= x + 1e-9);
            }
        }
    }

    #[test]
    fn crps_matches_quadrature_at_named_points() {
        let v = crps_closed_form(params(0.5, 0.2), 0.3).unwrap();
        let oracle = crps_by_quadrature(0.5, 0.2, 0.3, 1_000_000);
        assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
        assert!(crps_closed_form(params(0.5, 1e-6), 0.5).unwrap() < 1e-5);
        let v = crps_closed_form(params(-5.0, 0.1), 0.0).unwrap();
        assert!(v < 1e-6);
        assert!(crps_by_quadrature(-5.0, 0.1, 0.0, 100_000) < 1e-6);
        assert!(crps_closed_form(params(0.5, 0.2), 1.2).is_err());
    }

    #[test]
    fn crps_matches_quadrature_on_random_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let (mu, sigma, y) = (
                rng.gen_range(-0.5..1.5),
                rng.gen_range(0.01..1.0),
                rng.gen_range(0.0..1.0),
            );
            let v = crps_closed_form(params(mu, sigma), y).unwrap();
            let oracle = crps_by_quadrature(mu, sigma, y, 200_000);
            assert!((v - oracle).abs() < 1e-6, "({mu},{sigma},{y}): {v} vs {oracle}");
        }
    }

    #[test]
    fn crps_matches_energy_form_by_monte_carlo() {
        let p = params(0.3, 0.25);
        let y = 0.45;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let draw = |rng: &mut ChaCha8Rng| {
            let u: f64 = rng.gen_range(1e-16..1.0);
            (p.mu + p.sigma * normal::inv_cdf(u)).clamp(0.0, 1.0)
        };
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let x = draw(&mut rng);
            let x2 = draw(&mut rng);
            samples.push((x - y).abs() - 0.5 * (x - x2).abs());
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let exact = crps_closed_form(p, y).unwrap();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut points = vec![(0.5, 0.2, 0.3)];
        for _ in 0..50 {
            points.push((rng.gen_range(-0.3..1.3), rng.gen_range(0.05..0.8), rng.gen_range(0.01..0.99)));
        }
        for (mu, sigma, y) in points {
            let (dm, ds) = crps_gradient(params(mu, sigma), y).unwrap();
            let f = |m: f64, s: f64| crps_closed_form(params(m, s), y).unwrap();
            let fd_m = (f(mu + h, sigma) - f(mu - h, sigma)) / (2.0 * h);
            let fd_s = (f(mu, sigma + h) - f(mu, sigma - h)) / (2.0 * h);
            assert!((dm - fd_m).abs() <= 1e-4 * fd_m.abs().max(1e-3), "dmu at {mu},{sigma},{y}");
            assert!((ds - fd_s).abs() <= 1e-4 * fd_s.abs().max(1e-3), "dsigma at {mu},{sigma},{y}");
        }
    }

    #[test]
    fn gradient_symmetry_and_spread_penalty() {
        let (dm, _) = crps_gradient(params(0.5, 0.2), 0.5).unwrap();
        assert!(dm.abs() < 1e-14);
        for i in 0..=10 {
            let s = 0.1 + 0.01 * i as f64;
            assert!(crps_gradient(params(0.5, s), 0.5).unwrap().1 >= 0.0);
        }
        assert!(
            crps_closed_form(params(0.5, 0.2), 0.5).unwrap()
                > crps_closed_form(params(0.5, 0.1), 0.5).unwrap()
        );
    }

    #[test]
    fn unchecked_path_agrees() {
        let (v, dm, ds) = crps_value_and_gradient(0.4, 0.3, 0.9);
        assert_eq!(v, crps_closed_form(params(0.4, 0.3), 0.9).unwrap());
        assert_eq!((dm, ds), crps_gradient(params(0.4, 0.3), 0.9).unwrap());
    }
}
