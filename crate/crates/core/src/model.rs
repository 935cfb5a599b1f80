//! The three-segment manipulator: shared geometry, per-segment controls and
//! the joint limit.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::kinematics::JointConfig;
use crate::segment::{self, SegmentControls, SegmentGeometry, Side};

/// Per-segment unextended spring lengths `L0_ij`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInputs {
    pub segments: [SegmentControls; 3],
}

impl ControlInputs {
    pub fn new(segments: [SegmentControls; 3]) -> Self {
        Self { segments }
    }

    pub fn symmetric(l0: f64) -> Result<Self> {
        let s = SegmentControls::symmetric(l0)?;
        Ok(Self { segments: [s; 3] })
    }

    /// Equal controls on every spring, if that is what this is.
    pub fn common_length(&self) -> Option<f64> {
        let l = self.segments[0].l01;
        self.segments
            .iter()
            .all(|s| s.l01 == l && s.l02 == l)
            .then_some(l)
    }

    /// Controls that make `q` an unloaded equilibrium while keeping the
    /// mean free length of each segment at `l0`.
    ///
    /// Splitting `L0_i1 = l0 - d_i`, `L0_i2 = l0 + d_i` changes the joint
    /// torque by `2 k a d_i cos(q_i / 2)`, so `d_i` has a closed form.
    pub fn preloaded(geom: &SegmentGeometry, l0: f64, q: &JointConfig) -> Result<Self> {
        if !geom.is_symmetric() {
            return Err(Error::AsymmetricInput(
                "preloaded controls need a symmetric segment",
            ));
        }
        let (a, b, k) = (geom.a1(), geom.b1(), geom.k1());
        let mut segments = [SegmentControls::symmetric(l0)?; 3];
        for (seg, &qi) in segments.iter_mut().zip(&q.q) {
            let m = segment::symmetric_torque_sides(a, b, k, l0, qi);
            let d = -m / (2.0 * k * a * (0.5 * qi).cos());
            *seg = SegmentControls::new(l0 - d, l0 + d)?;
            seg.check_against(geom)?;
        }
        Ok(Self { segments })
    }
}

/// Geometry, actuation state and joint limit of the whole chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manipulator {
    geom: SegmentGeometry,
    controls: ControlInputs,
    q_max: f64,
}

impl Manipulator {
    /// The segment geometry must be symmetric: the chain link pattern
    /// `(b, 2b, 2b, b)` assumes `b1 = b2`.
    pub fn new(geom: SegmentGeometry, controls: ControlInputs, q_max: Option<f64>) -> Result<Self> {
        if !geom.is_symmetric() {
            return Err(Error::AsymmetricInput(
                "manipulator segments must be symmetric",
            ));
        }
        for c in &controls.segments {
            c.check_against(&geom)?;
        }
        let limit = geom.collision_limit();
        let q_max = q_max.unwrap_or(limit);
        if !(q_max > 0.0 && q_max <= limit) {
            return Err(Error::InvalidParameter {
                name: "q_max",
                value: q_max,
                reason: "must lie in (0, pi - beta12]",
            });
        }
        Ok(Self {
            geom,
            controls,
            q_max,
        })
    }

    pub fn geometry(&self) -> &SegmentGeometry {
        &self.geom
    }

    pub fn controls(&self) -> &ControlInputs {
        &self.controls
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn a(&self) -> f64 {
        self.geom.a1()
    }

    pub fn b(&self) -> f64 {
        self.geom.b1()
    }

    pub fn k(&self) -> f64 {
        self.geom.k1()
    }

    /// Torque scale `k b^2` used to make residuals unit-free.
    pub fn torque_scale(&self) -> f64 {
        self.k() * self.b() * self.b()
    }

    pub fn with_controls(&self, controls: ControlInputs) -> Result<Self> {
        Self::new(self.geom, controls, Some(self.q_max))
    }

    pub fn config(&self, q: [f64; 3]) -> JointConfig {
        JointConfig {
            q,
            q_max: self.q_max,
        }
    }

    /// Joint torques `M_qi` from the general spring model.
    pub fn joint_torques(&self, q: &JointConfig) -> Result<Vector3<f64>> {
        let mut m = Vector3::zeros();
        for i in 0..3 {
            m[i] = segment::segment_torque(&self.geom, &self.controls.segments[i], q.q[i])?;
        }
        Ok(m)
    }

    /// `dM_qi / dq_i`.
    pub fn joint_torque_slopes(&self, q: &JointConfig) -> Result<Vector3<f64>> {
        let mut d = Vector3::zeros();
        for i in 0..3 {
            d[i] =
                segment::segment_torque_derivative(&self.geom, &self.controls.segments[i], q.q[i])?;
        }
        Ok(d)
    }

    /// Elastic energy `1/2 sum k (L_ij - L0_ij)^2` over all six springs.
    pub fn total_energy(&self, q: &JointConfig) -> Result<f64> {
        let mut e = 0.0;
        for (c, &qi) in self.controls.segments.iter().zip(&q.q) {
            for side in Side::BOTH {
                let s = segment::spring_state(&self.geom, side, c, qi)?;
                e += 0.5 * self.geom.stiffness(side) * (s.length - c.free_length(side)).powi(2);
            }
        }
        Ok(e)
    }
}

/// A manipulator together with a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManipulatorState {
    pub manipulator: Manipulator,
    pub q: JointConfig,
}

impl ManipulatorState {
    pub fn energy(&self) -> Result<f64> {
        self.manipulator.total_energy(&self.q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn manip(l0: f64) -> Manipulator {
        Manipulator::new(
            SegmentGeometry::symmetric(0.75, 1.0, 1.0).unwrap(),
            ControlInputs::symmetric(l0).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn straight_energy() {
        let m = manip(1.0);
        let e = m.total_energy(&m.config([0.0; 3])).unwrap();
        assert_relative_eq!(e, 3.0 * (2.0 - 1.0f64).powi(2), max_relative = 1e-14);
    }

    #[test]
    fn energy_frozen_value() {
        // direct 30-digit summation over the six springs
        let m = manip(1.0);
        let e = m.total_energy(&m.config([0.3, -0.2, 0.1])).unwrap();
        assert_relative_eq!(e, 3.009_004_313_778_127, max_relative = 1e-13);
    }

    #[test]
    fn energy_linear_in_k() {
        let q = JointConfig::new(0.3, -0.2, 0.1, 1.8);
        let e1 = manip(0.9).total_energy(&q).unwrap();
        let m3 = Manipulator::new(
            SegmentGeometry::symmetric(0.75, 1.0, 3.0).unwrap(),
            ControlInputs::symmetric(0.9).unwrap(),
            None,
        )
        .unwrap();
        assert_relative_eq!(m3.total_energy(&q).unwrap(), 3.0 * e1, max_relative = 1e-14);
    }

    #[test]
    fn torques_are_negative_energy_gradient() {
        let m = manip(1.1);
        let q = m.config([0.4, -0.3, 0.2]);
        let t = m.joint_torques(&q).unwrap();
        for i in 0..3 {
            let g = crate::numerics::finite_difference(
                |x| {
                    let mut qq = q;
                    qq.q[i] = x;
                    m.total_energy(&qq).unwrap()
                },
                q.q[i],
                1e-6,
            );
            assert_relative_eq!(-g, t[i], max_relative = 1e-7);
        }
    }

    #[test]
    fn preloaded_controls_cancel_torques() {
        let geom = SegmentGeometry::symmetric(0.75, 1.0, 1.0).unwrap();
        let q = JointConfig::new(-0.49, 0.63, 0.58, geom.collision_limit());
        let c = ControlInputs::preloaded(&geom, 1.0, &q).unwrap();
        let m = Manipulator::new(geom, c, None).unwrap();
        assert!(m.joint_torques(&q).unwrap().norm() < 1e-14);
        for s in &c.segments {
            assert_relative_eq!(0.5 * (s.l01 + s.l02), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn rejects_bad_manipulators() {
        let asym = SegmentGeometry::new(0.7, 1.0, 0.8, 1.0, 1.0, 1.0).unwrap();
        assert!(Manipulator::new(asym, ControlInputs::symmetric(1.0).unwrap(), None).is_err());
        let g = SegmentGeometry::symmetric(0.75, 1.0, 1.0).unwrap();
        assert!(Manipulator::new(g, ControlInputs::symmetric(1.0).unwrap(), Some(3.0)).is_err());
        assert!(Manipulator::new(g, ControlInputs::symmetric(2.6).unwrap(), None).is_err());
    }
}
