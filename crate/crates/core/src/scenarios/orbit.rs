//! Earth gravity with the two lowest zonal harmonics.

use serde::{Deserialize, Serialize};

use crate::polyalg::{PolyError, Scalar};

pub const MU_EARTH: f64 = 398_600.441_8;
pub const R_EARTH: f64 = 6_378.137;
pub const J2: f64 = 0.001_082_626_7;
pub const J3: f64 = -0.000_002_532_7;

/// Point-mass gravity plus J2 and J3 zonal terms, km and seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitModel {
    pub mu: f64,
    pub radius: f64,
    pub j2: f64,
    pub j3: f64,
    /// Integration step used when the interval is at most `gap_threshold`.
    pub arc_step: f64,
    /// Integration step for longer intervals.
    pub gap_step: f64,
    pub gap_threshold: f64,
}

impl Default for OrbitModel {
    fn default() -> Self {
        OrbitModel {
            mu: MU_EARTH,
            radius: R_EARTH,
            j2: J2,
            j3: J3,
            arc_step: 10.0,
            gap_step: 60.0,
            gap_threshold: 3600.0,
        }
    }
}

impl OrbitModel {
    pub fn step_for(&self, interval: f64) -> f64 {
        if interval.abs() <= self.gap_threshold {
            self.arc_step
        } else {
            self.gap_step
        }
    }

    /// Acceleration `∇U` at position `r`.
    pub fn acceleration<S: Scalar>(&self, r: &[S]) -> Result<[S; 3], PolyError> {
        let (x, y, z) = (&r[0], &r[1], &r[2]);
        let r2 = x.clone() * x.clone() + y.clone() * y.clone() + z.clone() * z.clone();
        let ir2 = r2.recip()?;
        let ir = ir2.sqrt()?;
        let ir3 = ir.clone() * ir2.clone();
        let z2r2 = z.clone() * z.clone() * ir2.clone();

        // two-body
        let mut ax = x.clone() * ir3.clone() * (-self.mu);
        let mut ay = y.clone() * ir3.clone() * (-self.mu);
        let mut az = z.clone() * ir3.clone() * (-self.mu);

        // J2: -(3/2) J2 mu R² / r⁵ · (x(1 - 5z²/r²), y(1 - 5z²/r²), z(3 - 5z²/r²))
        let ir5 = ir3.clone() * ir2.clone();
        let c2 = ir5.clone() * (-1.5 * self.j2 * self.mu * self.radius * self.radius);
        let lat = z2r2.clone() * (-5.0);
        let fxy = c2.clone() * (lat.clone() + 1.0);
        ax = ax + fxy.clone() * x.clone();
        ay = ay + fxy * y.clone();
        az = az + c2 * (lat + 3.0) * z.clone();

        // J3: -(5/2) J3 mu R³ / r⁷ · (x(3z - 7z³/r²), y(...), 6z² - 7z⁴/r² - 3r²/5)
        let ir7 = ir5 * ir2;
        let c3 = ir7 * (-2.5 * self.j3 * self.mu * self.radius.powi(3));
        let gxy = (z.clone() * 3.0 - z.clone() * z2r2.clone() * 7.0) * c3.clone();
        ax = ax + gxy.clone() * x.clone();
        ay = ay + gxy * y.clone();
        let gz = z.clone() * z.clone() * 6.0 - z.clone() * z.clone() * z2r2 * 7.0 - r2 * 0.6;
        az = az + gz * c3;
        Ok([ax, ay, az])
    }

    /// Time derivative of the state `(r, v)`.
    pub fn rhs<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>, PolyError> {
        let [ax, ay, az] = self.acceleration(&x[..3])?;
        Ok(vec![x[3].clone(), x[4].clone(), x[5].clone(), ax, ay, az])
    }

    /// Gravitational potential `U` (positive convention, `a = ∇U`).
    pub fn potential(&self, r: &[f64]) -> f64 {
        let rn = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        let s = r[2] / rn;
        let k = self.mu / rn;
        let q = self.radius / rn;
        let u_j2 = -k * self.j2 * q * q * 0.5 * (3.0 * s * s - 1.0);
        let u_j3 = -k * self.j3 * q.powi(3) * 0.5 * (5.0 * s.powi(3) - 3.0 * s);
        k + u_j2 + u_j3
    }

    /// Specific energy `v²/2 - U`, conserved by the flow.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let v2 = x[3] * x[3] + x[4] * x[4] + x[5] * x[5];
        0.5 * v2 - self.potential(&x[..3])
    }
}
