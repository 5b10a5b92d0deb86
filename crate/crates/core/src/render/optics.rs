//! Snell refraction and Fresnel transmittance.

use crate::error::{Error, Result};
use crate::geom::{check_unit, Vec3};

const UNIT_TOL: f64 = 1e-9;

/// Outcome of a refraction event at an interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Refraction {
    /// Transmitted direction (unit).
    Transmit(Vec3),
    /// No transmitted ray: eta * sin(theta1) > 1.
    TotalInternal,
}

/// Refract a unit `incident` direction at a surface with unit `normal`
/// (facing the incident ray: incident . normal < 0), with `eta = n1 / n2`.
///
/// The transmitted direction is coplanar with (incident, normal) and
/// satisfies sin(theta2) = eta * sin(theta1).
pub fn refract_dir(incident: Vec3, normal: Vec3, eta: f64) -> Result<Refraction> {
    check_unit(incident, UNIT_TOL, "incident direction")?;
    check_unit(normal, UNIT_TOL, "surface normal")?;
    let cos1 = -incident.dot(&normal);
    if cos1 <= 0.0 {
        return Err(Error::Domain(format!(
            "incident direction must face the surface (incident . normal = {})",
            -cos1
        )));
    }
    let sin2_t = eta * eta * (1.0 - cos1 * cos1);
    if sin2_t > 1.0 {
        return Ok(Refraction::TotalInternal);
    }
    let cos2 = (1.0 - sin2_t).sqrt();
    let t = incident * eta + normal * (eta * cos1 - cos2);
    Ok(Refraction::Transmit(t.normalize()))
}

/// Unpolarized Fresnel reflectance for a dielectric interface.
///
/// `cos1`/`cos2` are the incidence/refraction cosines, `n1`/`n2` the indices.
pub fn fresnel_reflectance(cos1: f64, cos2: f64, n1: f64, n2: f64) -> f64 {
    let rs = (n1 * cos1 - n2 * cos2) / (n1 * cos1 + n2 * cos2);
    let rp = (n1 * cos2 - n2 * cos1) / (n1 * cos2 + n2 * cos1);
    0.5 * (rs * rs + rp * rp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_incidence_passes_straight() {
        let d = Vec3::new(0.0, 0.0, 1.0);
        let n = Vec3::new(0.0, 0.0, -1.0);
        for eta in [0.5, 1.0 / 1.5, 1.0, 1.5] {
            match refract_dir(d, n, eta).unwrap() {
                Refraction::Transmit(t) => assert!((t - d).norm() < 1e-14),
                Refraction::TotalInternal => panic!("no TIR at normal incidence"),
            }
        }
    }

    #[test]
    fn eta_one_is_identity() {
        let d = Vec3::new(0.3, -0.2, 0.9).normalize();
        let n = Vec3::new(0.1, 0.2, -1.0).normalize();
        match refract_dir(d, n, 1.0).unwrap() {
            Refraction::Transmit(t) => assert!((t - d).norm() < 1e-12),
            Refraction::TotalInternal => panic!(),
        }
    }

    #[test]
    fn air_to_glass_30_degrees() {
        let th1 = 30f64.to_radians();
        let d = Vec3::new(th1.sin(), 0.0, th1.cos());
        let n = Vec3::new(0.0, 0.0, -1.0);
        match refract_dir(d, n, 1.0 / 1.5).unwrap() {
            Refraction::Transmit(t) => {
                let th2 = t.x.atan2(t.z).to_degrees();
                assert!((th2 - 19.47).abs() < 0.01, "theta2 = {th2}");
            }
            Refraction::TotalInternal => panic!(),
        }
    }

    #[test]
    fn tir_beyond_critical_angle() {
        // glass -> air at 45 degrees: sin(45) * 1.5 > 1
        let th1 = 45f64.to_radians();
        let d = Vec3::new(th1.sin(), 0.0, th1.cos());
        let n = Vec3::new(0.0, 0.0, -1.0);
        assert_eq!(refract_dir(d, n, 1.5).unwrap(), Refraction::TotalInternal);
    }

    #[test]
    fn non_unit_inputs_rejected() {
        let d = Vec3::new(0.0, 0.0, 2.0);
        let n = Vec3::new(0.0, 0.0, -1.0);
        assert!(refract_dir(d, n, 1.0).is_err());
        assert!(refract_dir(n, d, 1.0).is_err());
    }

    #[test]
    fn fresnel_normal_incidence_glass() {
        // ((n1-n2)/(n1+n2))^2 = 0.04 for 1.0 -> 1.5
        let r = fresnel_reflectance(1.0, 1.0, 1.0, 1.5);
        assert!((r - 0.04).abs() < 1e-12);
    }
}
