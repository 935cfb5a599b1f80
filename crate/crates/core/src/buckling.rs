//! Linearized analysis of the straight configuration.
//!
//! Near `q = 0` with the end point moved along the x-axis, equilibrium
//! configurations are proportional to `(alpha1, 1, alpha3) q2`. The two
//! roots of the resulting quadratic give the U- and Z-shaped families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::JointConfig;
use crate::segment::{SegmentGeometry, Stability};

/// Buckled shape family of the straight chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    /// `+sqrt(21)` root, sign pattern `(-, +, +)`.
    U,
    /// `-sqrt(21)` root, sign pattern `(-, +, -)`.
    Z,
}

impl Shape {
    pub const BOTH: [Shape; 2] = [Shape::U, Shape::Z];

    fn root_sign(self) -> f64 {
        match self {
            Shape::U => 1.0,
            Shape::Z => -1.0,
        }
    }

    /// The stability the linear analysis predicts for this family.
    pub fn expected_stability(self) -> Stability {
        match self {
            Shape::U => Stability::Stable,
            Shape::Z => Stability::Unstable,
        }
    }
}

/// Result of [`classify_shape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    U,
    Z,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucklingCoefficients {
    /// `q1 = alpha1 q2`
    pub alpha1: f64,
    /// `q3 = alpha3 q2`
    pub alpha3: f64,
    /// Critical-force factor, `(alpha1 + alpha3 - 2) / 2`.
    pub lambda: f64,
    /// Deflection factor, `dx = mu q2^2 b`.
    pub mu: f64,
    pub shape: Shape,
}

pub fn linearized_coefficients(shape: Shape) -> BucklingCoefficients {
    let r = shape.root_sign() * 21f64.sqrt();
    let alpha1 = -(r + 11.0) / 20.0;
    let alpha3 = (r - 1.0) / 4.0;
    BucklingCoefficients {
        alpha1,
        alpha3,
        lambda: 0.5 * (alpha1 + alpha3 - 2.0),
        mu: deflection_coefficient(shape),
        shape,
    }
}

/// `mu = (21 +/- sqrt(21)) / 20`.
pub fn deflection_coefficient(shape: Shape) -> f64 {
    (21.0 + shape.root_sign() * 21f64.sqrt()) / 20.0
}

fn symmetric_parts(geom: &SegmentGeometry) -> Result<(f64, f64, f64)> {
    if !geom.is_symmetric() {
        return Err(Error::AsymmetricInput(
            "buckling analysis needs a symmetric segment",
        ));
    }
    Ok((geom.a1(), geom.b1(), geom.k1()))
}

/// `2(b^2 - a^2) - b L0`, the quantity whose sign decides straight stability.
fn bracket(a: f64, b: f64, l0: f64) -> f64 {
    2.0 * (b * b - a * a) - b * l0
}

/// Critical end-point forces `(Fx0_U, Fx0_Z)` of the straight chain.
///
/// The straight pose is stable exactly when `Fx0_U < 0`.
pub fn critical_force(geom: &SegmentGeometry, l0: f64) -> Result<(f64, f64)> {
    let (a, b, k) = symmetric_parts(geom)?;
    let f = |s: Shape| -linearized_coefficients(s).lambda * (k / b) * bracket(a, b, l0);
    Ok((f(Shape::U), f(Shape::Z)))
}

/// Linearized end-point force `(Fx, Fy)` for an alpha-consistent
/// configuration with `q2 != 0`. `Fy` is zero at this order.
pub fn linearized_force(geom: &SegmentGeometry, l0: f64, q: &JointConfig) -> Result<(f64, f64)> {
    let (a, b, k) = symmetric_parts(geom)?;
    let [q1, q2, q3] = q.q;
    if q2 == 0.0 {
        return Err(Error::InvalidParameter {
            name: "q2",
            value: q2,
            reason: "linearized force is undefined at q2 = 0",
        });
    }
    let fx = -(k / (2.0 * b * q2)) * bracket(a, b, l0) * (q1 + q3 - 2.0 * q2);
    Ok((fx, 0.0))
}

/// Sign-pattern classification: `(-,+,+)`/`(+,-,-)` is U and
/// `(-,+,-)`/`(+,-,+)` is Z. Zeros and other patterns are `Other`.
pub fn classify_shape(q: &JointConfig) -> ShapeClass {
    let [q1, q2, q3] = q.q;
    if q1 == 0.0 || q2 == 0.0 || q3 == 0.0 {
        return ShapeClass::Other;
    }
    let (s1, s2, s3) = (q1 > 0.0, q2 > 0.0, q3 > 0.0);
    if s1 == s2 {
        ShapeClass::Other
    } else if s2 == s3 {
        ShapeClass::U
    } else {
        ShapeClass::Z
    }
}
