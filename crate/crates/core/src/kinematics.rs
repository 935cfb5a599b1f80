//! Kinematics of the three-segment chain.
//!
//! The chain is a fixed base offset `b` followed by links of length
//! `2b`, `2b` and `b` at the cumulative angles `q1`, `q1+q2`, `q1+q2+q3`.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};

/// Lengths of the three moving links in units of `b`.
const LINKS: [f64; 3] = [2.0, 2.0, 1.0];
const C3_CLAMP: f64 = 1e-12;

/// Joint angles of the chain plus the shared symmetric joint limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointConfig {
    pub q: [f64; 3],
    pub q_max: f64,
}

impl JointConfig {
    pub fn new(q1: f64, q2: f64, q3: f64, q_max: f64) -> Self {
        Self {
            q: [q1, q2, q3],
            q_max,
        }
    }

    pub fn from_vector(q: &Vector3<f64>, q_max: f64) -> Self {
        Self {
            q: [q[0], q[1], q[2]],
            q_max,
        }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::from(self.q)
    }

    pub fn within_limits(&self) -> bool {
        self.q.iter().all(|qi| qi.abs() <= self.q_max)
    }

    /// Smallest distance of any joint to its limit.
    pub fn limit_clearance(&self) -> f64 {
        self.q
            .iter()
            .map(|qi| self.q_max - qi.abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mirrored(&self) -> Self {
        Self {
            q: [-self.q[0], -self.q[1], -self.q[2]],
            q_max: self.q_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

impl PlanarPose {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// IK solution family, selected by the sign of `sin q3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Branch {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Plus, Branch::Minus];

    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn of_q3(q3: f64) -> Self {
        if q3 < 0.0 {
            Branch::Minus
        } else {
            Branch::Plus
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Branch::Plus => "+",
            Branch::Minus => "-",
        }
    }
}

/// Result of the two-link inverse kinematics for a fixed `q1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reach {
    Reachable {
        q2: f64,
        q3: f64,
    },
    /// `|C3| > 1`: the remaining two links cannot reach the point.
    Unreachable {
        c3: f64,
    },
}

impl Reach {
    pub fn angles(self) -> Option<(f64, f64)> {
        match self {
            Reach::Reachable { q2, q3 } => Some((q2, q3)),
            Reach::Unreachable { .. } => None,
        }
    }
}

fn cumulative(q: &[f64; 3]) -> [f64; 3] {
    [q[0], q[0] + q[1], q[0] + q[1] + q[2]]
}

pub fn forward_kinematics(q: &JointConfig, b: f64) -> PlanarPose {
    let phi = cumulative(&q.q);
    let mut x = b;
    let mut y = 0.0;
    for (len, angle) in LINKS.iter().zip(phi) {
        let (s, c) = angle.sin_cos();
        x += len * b * c;
        y += len * b * s;
    }
    PlanarPose { x, y, phi: phi[2] }
}

/// `C3` intermediate of the inverse kinematics; reachability needs `|C3| <= 1`.
pub fn ik_cos_q3(x: f64, y: f64, q1: f64, b: f64) -> f64 {
    let (s1, c1) = q1.sin_cos();
    let px = x - b - 2.0 * b * c1;
    let py = y - 2.0 * b * s1;
    (px * px + py * py - 5.0 * b * b) / (4.0 * b * b)
}

/// Solves for `(q2, q3)` given the end point and `q1`.
///
/// `|C3|` within `1e-12` above one is clamped (grazing reach); `q2` is
/// wrapped into `(-pi, pi]`.
pub fn inverse_kinematics(x: f64, y: f64, q1: f64, branch: Branch, b: f64) -> Reach {
    let c3 = ik_cos_q3(x, y, q1, b);
    if !c3.is_finite() || c3.abs() > 1.0 + C3_CLAMP {
        return Reach::Unreachable { c3 };
    }
    let c3 = c3.clamp(-1.0, 1.0);
    let s3 = branch.sign() * (1.0 - c3 * c3).max(0.0).sqrt();
    let q3 = s3.atan2(c3);
    let (s1, c1) = q1.sin_cos();
    let px = x - b - 2.0 * b * c1;
    let py = y - 2.0 * b * s1;
    let q12 = py.atan2(px) - (b * s3).atan2(2.0 * b + b * c3);
    Reach::Reachable {
        q2: wrap_angle(q12 - q1),
        q3,
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Full 3x3 manipulator Jacobian `d(x, y, phi)/dq`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainJacobian(pub Matrix3<f64>);

impl ChainJacobian {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Translational 2x3 block.
    pub fn translational(&self) -> Matrix2x3<f64> {
        self.0.fixed_rows::<2>(0).into_owned()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }
}

pub fn jacobian(q: &JointConfig, b: f64) -> ChainJacobian {
    let phi = cumulative(&q.q);
    let mut j = Matrix3::zeros();
    for col in 0..3 {
        let (mut sx, mut sy) = (0.0, 0.0);
        for l in col..3 {
            let (s, c) = phi[l].sin_cos();
            sx -= LINKS[l] * b * s;
            sy += LINKS[l] * b * c;
        }
        j[(0, col)] = sx;
        j[(1, col)] = sy;
        j[(2, col)] = 1.0;
    }
    ChainJacobian(j)
}

/// `dJ/dq_i` for `i = 1, 2, 3`.
///
/// Entry `(r, j)` of `dJ/dq_i` only involves links `l >= max(i, j)`, so the
/// partials are symmetric in `(i, j)`.
pub fn jacobian_partials(q: &JointConfig, b: f64) -> [Matrix3<f64>; 3] {
    let phi = cumulative(&q.q);
    // tail sums from link m onwards
    let mut tail_c = [0.0; 3];
    let mut tail_s = [0.0; 3];
    for m in (0..3).rev() {
        let (s, c) = phi[m].sin_cos();
        let next_c = if m + 1 < 3 { tail_c[m + 1] } else { 0.0 };
        let next_s = if m + 1 < 3 { tail_s[m + 1] } else { 0.0 };
        tail_c[m] = next_c + LINKS[m] * b * c;
        tail_s[m] = next_s + LINKS[m] * b * s;
    }
    let mut out = [Matrix3::zeros(); 3];
    for (i, d) in out.iter_mut().enumerate() {
        for j in 0..3 {
            let m = i.max(j);
            d[(0, j)] = -tail_c[m];
            d[(1, j)] = -tail_s[m];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_jacobian;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::PI;

    fn cfg(q1: f64, q2: f64, q3: f64) -> JointConfig {
        JointConfig::new(q1, q2, q3, 1.8)
    }

    #[test]
    fn straight_pose() {
        let p = forward_kinematics(&cfg(0.0, 0.0, 0.0), 1.0);
        assert_eq!((p.x, p.y, p.phi), (6.0, 0.0, 0.0));
    }

    #[test]
    fn vertical_pose() {
        let p = forward_kinematics(&cfg(PI / 2.0, 0.0, 0.0), 1.0);
        assert_abs_diff_eq!(p.x, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.y, 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.phi, PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn general_pose_frozen() {
        // independent 30-digit summation of the link vectors
        let p = forward_kinematics(&cfg(0.3, -0.2, 0.1), 1.0);
        assert_relative_eq!(p.x, 5.880_747_886_648_505, max_relative = 1e-14);
        assert_relative_eq!(p.y, 0.989_376_577_411_396_7, max_relative = 1e-14);
        assert_relative_eq!(p.phi, 0.2, max_relative = 1e-15);
    }

    #[test]
    fn ik_straight() {
        for br in Branch::BOTH {
            let (q2, q3) = inverse_kinematics(6.0, 0.0, 0.0, br, 1.0).angles().unwrap();
            assert_abs_diff_eq!(q2, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(q3, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn ik_out_of_reach() {
        match inverse_kinematics(7.0, 0.0, 0.0, Branch::Plus, 1.0) {
            Reach::Unreachable { c3 } => assert_relative_eq!(c3, 2.75, max_relative = 1e-15),
            r => panic!("expected unreachable, got {r:?}"),
        }
    }

    #[test]
    fn straight_jacobian_structure() {
        let j = jacobian(&cfg(0.0, 0.0, 0.0), 1.0);
        let expected = Matrix3::new(0.0, 0.0, 0.0, 5.0, 3.0, 1.0, 1.0, 1.0, 1.0);
        assert_eq!(j.0, expected);
        assert_eq!(j.determinant(), 0.0);
    }

    #[test]
    fn jacobian_matches_closed_form_entries() {
        let (q1, q2, q3) = (0.3, -0.2, 0.1);
        let b = 1.3;
        let j = jacobian(&cfg(q1, q2, q3), b).0;
        let (s1, s12, s123) = (q1.sin(), (q1 + q2).sin(), (q1 + q2 + q3).sin());
        let (c1, c12, c123) = (q1.cos(), (q1 + q2).cos(), (q1 + q2 + q3).cos());
        let e = Matrix3::new(
            -2.0 * b * s1 - 2.0 * b * s12 - b * s123,
            -2.0 * b * s12 - b * s123,
            -b * s123,
            2.0 * b * c1 + 2.0 * b * c12 + b * c123,
            2.0 * b * c12 + b * c123,
            b * c123,
            1.0,
            1.0,
            1.0,
        );
        assert!((j - e).norm() < 1e-14);
    }

    #[test]
    fn straight_partial_q3_pattern() {
        let d = jacobian_partials(&cfg(0.0, 0.0, 0.0), 1.0);
        // only -b cos(q123) survives in row 0; row 1 (sines) vanishes
        let e = Matrix3::new(-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(d[2], e);
    }

    #[test]
    fn jacobian_finite_differences() {
        let q = cfg(0.3, -0.2, 0.1);
        let b = 1.0;
        let fd = finite_difference_jacobian::<_, 2>(
            |v| forward_kinematics(&JointConfig::from_vector(v, 1.8), b).position(),
            &q.vector(),
            1e-6,
        );
        let j = jacobian(&q, b).translational();
        assert!((fd - j).abs().max() <= 1e-6 * j.abs().max());
    }

    #[allow(clippy::needless_range_loop)]
    mod props {
        use super::*;
        use proptest::prelude::*;

        fn angles() -> impl Strategy<Value = JointConfig> {
            prop::array::uniform3(-1.5f64..1.5).prop_map(|q| JointConfig { q, q_max: 1.85 })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn ik_roundtrip(q in angles(), b in 0.5f64..2.0) {
                prop_assume!(q.q[2].abs() > 1e-3);
                let p = forward_kinematics(&q, b);
                let (q2, q3) = inverse_kinematics(p.x, p.y, q.q[0], Branch::of_q3(q.q[2]), b)
                    .angles()
                    .unwrap();
                prop_assert!((q2 - q.q[1]).abs() < 1e-9);
                prop_assert!((q3 - q.q[2]).abs() < 1e-9);
                let back = forward_kinematics(&JointConfig::new(q.q[0], q2, q3, 1.85), b);
                prop_assert!((back.x - p.x).abs() < 1e-9 * b);
                prop_assert!((back.y - p.y).abs() < 1e-9 * b);
            }

            #[test]
            fn mirror(q in angles()) {
                let p = forward_kinematics(&q, 1.0);
                let m = forward_kinematics(&q.mirrored(), 1.0);
                prop_assert!((p.x - m.x).abs() < 1e-12);
                prop_assert!((p.y + m.y).abs() < 1e-12);
                prop_assert!((p.phi + m.phi).abs() < 1e-12);
            }

            #[test]
            fn partials_match_finite_differences(q in angles()) {
                let d = jacobian_partials(&q, 1.0);
                let scale = 5.0;
                for i in 0..3 {
                    let mut qp = q; qp.q[i] += 1e-6;
                    let mut qm = q; qm.q[i] -= 1e-6;
                    let fd = (jacobian(&qp, 1.0).0 - jacobian(&qm, 1.0).0) / 2e-6;
                    prop_assert!((fd - d[i]).abs().max() <= 1e-6 * scale);
                }
            }

            #[test]
            fn contracted_partials_are_symmetric(q in angles(), f in prop::array::uniform2(-3.0f64..3.0)) {
                let d = jacobian_partials(&q, 1.0);
                let force = Vector3::new(f[0], f[1], 0.0);
                let cols: Vec<Vector3<f64>> = d.iter().map(|m| m.transpose() * force).collect();
                for i in 0..3 {
                    for j in 0..3 {
                        prop_assert!((cols[i][j] - cols[j][i]).abs() < 1e-12);
                    }
                }
            }

            #[test]
            fn second_order_deflection(u in prop::array::uniform3(-1.0f64..1.0), scale in 1e-3f64..3e-2) {
                let q = JointConfig::new(u[0] * scale, u[1] * scale, u[2] * scale, 1.85);
                let p = forward_kinematics(&q, 1.0);
                let (q1, q12, q123) = (q.q[0], q.q[0] + q.q[1], q.q[0] + q.q[1] + q.q[2]);
                let dx = q1 * q1 + q12 * q12 + 0.5 * q123 * q123;
                let dy = 2.0 * (q1 + q12 + 0.5 * q123);
                let n = (u[0].abs() + u[1].abs() + u[2].abs()) * scale;
                // x error is O(q^4), y error is O(q^3)
                prop_assert!(((6.0 - p.x) - dx).abs() <= 2.0 * n.powi(4));
                prop_assert!((p.y - dy).abs() <= 2.0 * n.powi(3));
            }
        }
    }
}
