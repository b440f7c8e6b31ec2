//! Per-coordinate and spherical regression losses with their analytic
//! derivatives with respect to the prediction.

use serde::{Deserialize, Serialize};

use crate::geometry::SphericalPosition;

/// `(r - r_hat)^2`.
pub fn loss_range(r_hat: f64, r: f64) -> f64 {
    (r - r_hat).powi(2)
}

pub fn loss_range_grad(r_hat: f64, r: f64) -> f64 {
    -2.0 * (r - r_hat)
}

/// Cyclic error `2 - 2 cos(theta_hat - theta)`.
pub fn loss_emce(theta_hat: f64, theta: f64) -> f64 {
    2.0 - 2.0 * (theta_hat - theta).cos()
}

pub fn loss_emce_grad(theta_hat: f64, theta: f64) -> f64 {
    2.0 * (theta_hat - theta).sin()
}

/// How the cyclic loss is adapted to inclinations in `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InclinationLoss {
    /// `2 - 2 cos(2 (phi_hat - phi))`, period pi.
    #[default]
    Period,
    /// `2 (2 - 2 cos(phi_hat - phi))`.
    Scaled,
}

impl InclinationLoss {
    pub fn value(self, phi_hat: f64, phi: f64) -> f64 {
        match self {
            Self::Period => 2.0 - 2.0 * (2.0 * (phi_hat - phi)).cos(),
            Self::Scaled => 2.0 * loss_emce(phi_hat, phi),
        }
    }

    pub fn grad(self, phi_hat: f64, phi: f64) -> f64 {
        match self {
            Self::Period => 4.0 * (2.0 * (phi_hat - phi)).sin(),
            Self::Scaled => 2.0 * loss_emce_grad(phi_hat, phi),
        }
    }
}

pub fn loss_emce_inclination(phi_hat: f64, phi: f64) -> f64 {
    InclinationLoss::Period.value(phi_hat, phi)
}

/// Squared Euclidean distance written in spherical coordinates (law of
/// cosines).
pub fn loss_spherical(p_hat: &SphericalPosition, p: &SphericalPosition) -> f64 {
    let c = angular_cosine(p_hat, p);
    p_hat.r * p_hat.r + p.r * p.r - 2.0 * p_hat.r * p.r * c
}

/// Partial derivatives `(d/dr_hat, d/dtheta_hat, d/dphi_hat)` of
/// [`loss_spherical`].
pub fn loss_spherical_grad(p_hat: &SphericalPosition, p: &SphericalPosition) -> [f64; 3] {
    let dt = p_hat.theta - p.theta;
    let (sph, cph) = p_hat.phi.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    let c = sph * sp * dt.cos() + cph * cp;
    let rr = 2.0 * p_hat.r * p.r;
    [
        2.0 * p_hat.r - 2.0 * p.r * c,
        rr * sph * sp * dt.sin(),
        -rr * (cph * sp * dt.cos() - sph * cp),
    ]
}

fn angular_cosine(a: &SphericalPosition, b: &SphericalPosition) -> f64 {
    a.phi.sin() * b.phi.sin() * (a.theta - b.theta).cos() + a.phi.cos() * b.phi.cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sph(r: f64, theta: f64, phi: f64) -> SphericalPosition {
        SphericalPosition { r, theta, phi }
    }

    #[test]
    fn range_loss_values() {
        assert_eq!(loss_range(3.0, 3.0), 0.0);
        assert_eq!(loss_range(4.0, 3.0), 1.0);
    }

    #[test]
    fn emce_values() {
        assert_eq!(loss_emce(0.7, 0.7), 0.0);
        assert!((loss_emce(0.7 + PI, 0.7) - 4.0).abs() < 1e-15);
        assert!(loss_emce(0.7 + 2.0 * PI, 0.7).abs() < 1e-15);
    }

    #[test]
    fn inclination_variants() {
        assert_eq!(loss_emce_inclination(1.1, 1.1), 0.0);
        assert!(loss_emce_inclination(1.1 + PI, 1.1).abs() < 1e-14);
        assert!((InclinationLoss::Scaled.value(1.1 + PI, 1.1) - 8.0).abs() < 1e-14);
    }

    #[test]
    fn spherical_special_cases() {
        let p = sph(12.0, 0.4, 1.2);
        assert!(loss_spherical(&p, &p).abs() < 1e-12);
        let a = sph(1.0, 0.3, PI / 2.0);
        let b = sph(1.0, 0.3 + PI, PI / 2.0);
        assert!((loss_spherical(&a, &b) - 4.0).abs() < 1e-15);
    }
}
