//! Mechanics of a single dual-triangle segment.
//!
//! Two rigid triangles share a passive revolute joint; two linear springs
//! span the outer vertices. The spring on side 1 sees the angle
//! `beta12 + q`, the one on side 2 sees `beta12 - q`. Angles are radians,
//! positive counter-clockwise.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics;

const GRID_POINTS: usize = 2001;

/// Static design of one segment: triangle sides and spring stiffnesses.
///
/// `c1`, `c2` and `beta12` are always derived on demand, never cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentGeometry {
    a1: f64,
    b1: f64,
    a2: f64,
    b2: f64,
    k1: f64,
    k2: f64,
}

impl SegmentGeometry {
    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64, k1: f64, k2: f64) -> Result<Self> {
        for (name, value) in [
            ("a1", a1),
            ("b1", b1),
            ("a2", a2),
            ("b2", b2),
            ("k1", k1),
            ("k2", k2),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and strictly positive",
                });
            }
        }
        Ok(Self {
            a1,
            b1,
            a2,
            b2,
            k1,
            k2,
        })
    }

    pub fn symmetric(a: f64, b: f64, k: f64) -> Result<Self> {
        Self::new(a, b, a, b, k, k)
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }
    pub fn b1(&self) -> f64 {
        self.b1
    }
    pub fn a2(&self) -> f64 {
        self.a2
    }
    pub fn b2(&self) -> f64 {
        self.b2
    }
    pub fn k1(&self) -> f64 {
        self.k1
    }
    pub fn k2(&self) -> f64 {
        self.k2
    }

    pub fn c1(&self) -> f64 {
        self.a1.hypot(self.b1)
    }

    pub fn c2(&self) -> f64 {
        self.a2.hypot(self.b2)
    }

    pub fn beta12(&self) -> f64 {
        (self.a1 / self.b1).atan() + (self.a2 / self.b2).atan()
    }

    pub fn is_symmetric(&self) -> bool {
        self.a1 == self.a2 && self.b1 == self.b2 && self.k1 == self.k2
    }

    /// Longest length either spring can reach (`c1 + c2`).
    pub fn max_spring_length(&self) -> f64 {
        self.c1() + self.c2()
    }

    /// Default joint limit: the angle at which the triangle edges collide,
    /// `pi - beta12`.
    pub fn collision_limit(&self) -> f64 {
        PI - self.beta12()
    }

    pub fn stiffness(&self, side: Side) -> f64 {
        match side {
            Side::First => self.k1,
            Side::Second => self.k2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    First,
    Second,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::First, Side::Second];
}

/// Unextended spring lengths, the actuation state of a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentControls {
    pub l01: f64,
    pub l02: f64,
}

impl SegmentControls {
    pub fn new(l01: f64, l02: f64) -> Result<Self> {
        for (name, value) in [("l01", l01), ("l02", l02)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and strictly positive",
                });
            }
        }
        Ok(Self { l01, l02 })
    }

    pub fn symmetric(l0: f64) -> Result<Self> {
        Self::new(l0, l0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.l01 == self.l02
    }

    pub fn free_length(&self, side: Side) -> f64 {
        match side {
            Side::First => self.l01,
            Side::Second => self.l02,
        }
    }

    /// Checks that both springs can actually be stretched in this geometry.
    pub fn check_against(&self, geom: &SegmentGeometry) -> Result<()> {
        let max = geom.max_spring_length();
        for (name, value) in [("l01", self.l01), ("l02", self.l02)] {
            if value >= max {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be shorter than the maximum spring length c1 + c2",
                });
            }
        }
        Ok(())
    }

    pub fn swapped(&self) -> Self {
        Self {
            l01: self.l02,
            l02: self.l01,
        }
    }
}

/// Kinematic and static state of one spring at a given joint angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringState {
    pub theta: f64,
    pub length: f64,
    /// Tension `k (L - L0)`.
    pub force: f64,
    /// Lever arm of the spring force about the passive joint.
    pub moment_arm: f64,
}

pub fn spring_state(
    geom: &SegmentGeometry,
    side: Side,
    controls: &SegmentControls,
    q: f64,
) -> Result<SpringState> {
    let beta = geom.beta12();
    let theta = match side {
        Side::First => beta + q,
        Side::Second => beta - q,
    };
    let (c1, c2) = (geom.c1(), geom.c2());
    let sq = c1 * c1 + c2 * c2 + 2.0 * c1 * c2 * theta.cos();
    let min = (c1 - c2).abs();
    let max = c1 + c2;
    let tol = 1e-12 * max;
    let length = sq.max(0.0).sqrt();
    if !sq.is_finite() || length < min - tol || length > max + tol || length <= tol {
        return Err(Error::SpringDomain {
            theta,
            length,
            min,
            max,
        });
    }
    let force = geom.stiffness(side) * (length - controls.free_length(side));
    let moment_arm = c1 * c2 * theta.sin() / length;
    Ok(SpringState {
        theta,
        length,
        force,
        moment_arm,
    })
}

/// Net spring torque `M1 + M2` at the passive joint (general asymmetric form).
pub fn segment_torque(geom: &SegmentGeometry, controls: &SegmentControls, q: f64) -> Result<f64> {
    let s1 = spring_state(geom, Side::First, controls, q)?;
    let s2 = spring_state(geom, Side::Second, controls, q)?;
    let cc = geom.c1() * geom.c2();
    let m1 = geom.k1 * (1.0 - controls.l01 / s1.length) * cc * s1.theta.sin();
    let m2 = -geom.k2 * (1.0 - controls.l02 / s2.length) * cc * s2.theta.sin();
    Ok(m1 + m2)
}

/// Analytic `dM/dq` of [`segment_torque`].
pub fn segment_torque_derivative(
    geom: &SegmentGeometry,
    controls: &SegmentControls,
    q: f64,
) -> Result<f64> {
    let s1 = spring_state(geom, Side::First, controls, q)?;
    let s2 = spring_state(geom, Side::Second, controls, q)?;
    let cc = geom.c1() * geom.c2();
    // d/dtheta [sin(theta) / L(theta)] = cos/L + cc sin^2 / L^3
    let term = |s: &SpringState, l0: f64| {
        let (sin, cos) = s.theta.sin_cos();
        cos - l0 * (cos / s.length + cc * sin * sin / s.length.powi(3))
    };
    // theta1 = beta + q, theta2 = beta - q: the sign flips cancel on side 2.
    Ok(geom.k1 * cc * term(&s1, controls.l01) + geom.k2 * cc * term(&s2, controls.l02))
}

/// Compact symmetric torque
/// `2ck [c cos(beta) sin q - L0 cos(beta/2) sin(q/2)]`.
///
/// Kept as an independent code path for cross-checking [`segment_torque`].
pub fn symmetric_torque_compact(a: f64, b: f64, k: f64, l0: f64, q: f64) -> f64 {
    let c = a.hypot(b);
    let beta = 2.0 * (a / b).atan();
    2.0 * c * k * (c * beta.cos() * q.sin() - l0 * (beta / 2.0).cos() * (q / 2.0).sin())
}

/// Derivative of [`symmetric_torque_compact`].
pub fn symmetric_torque_derivative_compact(a: f64, b: f64, k: f64, l0: f64, q: f64) -> f64 {
    let c = a.hypot(b);
    let beta = 2.0 * (a / b).atan();
    c * k * (2.0 * c * beta.cos() * q.cos() - l0 * (beta / 2.0).cos() * (q / 2.0).cos())
}

/// Joint torque written in triangle sides: `2k[(b²-a²) sin q - b L0 sin(q/2)]`.
pub fn symmetric_torque_sides(a: f64, b: f64, k: f64, l0: f64, q: f64) -> f64 {
    2.0 * k * ((b * b - a * a) * q.sin() - b * l0 * (0.5 * q).sin())
}

/// Outcome of the straight-configuration stability test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StraightStability {
    pub stable: bool,
    /// `L0 - 2b(1 - (a/b)^2)`; positive means a monotonic torque curve.
    pub margin: f64,
}

/// Straight (`q = 0`) stability of a symmetric segment.
pub fn is_straight_config_stable(
    geom: &SegmentGeometry,
    controls: &SegmentControls,
) -> Result<StraightStability> {
    if !geom.is_symmetric() {
        return Err(Error::AsymmetricInput(
            "straight stability needs a1=a2, b1=b2, k1=k2",
        ));
    }
    if !controls.is_symmetric() {
        return Err(Error::AsymmetricInput("straight stability needs l01 = l02"));
    }
    let (a, b) = (geom.a1, geom.b1);
    let margin = controls.l01 - 2.0 * b * (1.0 - (a / b).powi(2));
    Ok(StraightStability {
        stable: margin > 0.0,
        margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentEquilibrium {
    pub q: f64,
    pub stability: Stability,
    pub residual: f64,
}

/// All equilibria of `M(q) + m_ext = 0` on `[-q_max, q_max]`.
///
/// Uses a 2001-point bracketing grid with bisection and a final Newton
/// polish. Stability is the sign of `M'(q)` (stable when negative).
pub fn segment_equilibria(
    geom: &SegmentGeometry,
    controls: &SegmentControls,
    m_ext: f64,
    q_max: f64,
) -> Result<Vec<SegmentEquilibrium>> {
    if !(q_max > 0.0 && q_max <= geom.collision_limit() + 1e-12) {
        return Err(Error::InvalidParameter {
            name: "q_max",
            value: q_max,
            reason: "must lie in (0, pi - beta12]",
        });
    }
    let f = |q: f64| segment_torque(geom, controls, q).map_or(f64::NAN, |m| m + m_ext);
    let roots = numerics::bracketed_roots(f, -q_max, q_max, GRID_POINTS);
    if roots.is_empty() {
        return Err(Error::NoRootBracketed {
            lo: -q_max,
            hi: q_max,
        });
    }
    roots
        .into_iter()
        .map(|q0| {
            let q = polish(geom, controls, m_ext, q0);
            let residual = segment_torque(geom, controls, q)? + m_ext;
            let slope = segment_torque_derivative(geom, controls, q)?;
            Ok(SegmentEquilibrium {
                q,
                stability: if slope < 0.0 {
                    Stability::Stable
                } else {
                    Stability::Unstable
                },
                residual,
            })
        })
        .collect()
}

fn polish(geom: &SegmentGeometry, controls: &SegmentControls, m_ext: f64, q0: f64) -> f64 {
    let eval = |q: f64| -> Option<(f64, f64)> {
        let m = segment_torque(geom, controls, q).ok()? + m_ext;
        let d = segment_torque_derivative(geom, controls, q).ok()?;
        Some((m, d))
    };
    let Some((mut f, mut d)) = eval(q0) else {
        return q0;
    };
    let mut q = q0;
    for _ in 0..5 {
        if f == 0.0 || d == 0.0 {
            break;
        }
        let next = q - f / d;
        // only accept polish steps that stay inside the bisection cell
        if (next - q0).abs() > 1e-9 {
            break;
        }
        match eval(next) {
            Some((fn_, dn)) if fn_.abs() < f.abs() => {
                q = next;
                f = fn_;
                d = dn;
            }
            _ => break,
        }
    }
    q
}
