//! Joint and Cartesian stiffness of the chain, unloaded and under load.
//!
//! Joint stiffness is `K_theta = -dM/dq`, so a stable joint has a positive
//! value. Differentiating `M(q) + J^T F = 0` at constant `F` gives
//! `(K_theta - K_g) dq = J^T dF`, with `K_g` the contraction of the Jacobian
//! partials with the wrench.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::equilibrium::{self, Axis, PlanarWrench};
use crate::error::{Error, Result};
use crate::kinematics::{self, Branch, JointConfig};
use crate::model::{ControlInputs, Manipulator};
use crate::numerics::{self, SolverSettings};
use crate::segment::{SegmentGeometry, Stability};

/// Condition number of `K_theta - K_g` beyond which a point counts as
/// quasi-buckling.
pub const QUASI_BUCKLING_CONDITION: f64 = 1e12;
/// Stiffness along the loaded axis below this fraction of its value at the
/// first profile point counts as a collapse.
pub const COLLAPSE_FRACTION: f64 = 0.1;
const JUMP_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointTorques {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl JointTorques {
    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.m1, self.m2, self.m3)
    }
}

fn symmetric_abk(geom: &SegmentGeometry) -> Result<(f64, f64, f64)> {
    if !geom.is_symmetric() {
        return Err(Error::AsymmetricInput(
            "joint torques need a symmetric segment",
        ));
    }
    Ok((geom.a1(), geom.b1(), geom.k1()))
}

fn check_range(geom: &SegmentGeometry, q: &JointConfig) -> Result<()> {
    let limit = geom.collision_limit();
    match q.q.iter().find(|qi| !(qi.abs() < limit)) {
        Some(&qi) => Err(Error::Infeasible(format!(
            "joint angle {qi} outside the open range (-{limit}, {limit})"
        ))),
        None => Ok(()),
    }
}

/// Joint torques with independent spring controls in every segment,
/// `2k(b^2-a^2) sin q - k L01 [a cos(q/2) + b sin(q/2)] + k L02 [a cos(q/2) - b sin(q/2)]`.
pub fn joint_torques(
    geom: &SegmentGeometry,
    controls: &ControlInputs,
    q: &JointConfig,
) -> Result<JointTorques> {
    let (a, b, k) = symmetric_abk(geom)?;
    check_range(geom, q)?;
    let m = |i: usize| {
        let c = &controls.segments[i];
        let (s, co) = (0.5 * q.q[i]).sin_cos();
        2.0 * k * (b * b - a * a) * q.q[i].sin() - k * c.l01 * (a * co + b * s)
            + k * c.l02 * (a * co - b * s)
    };
    Ok(JointTorques {
        m1: m(0),
        m2: m(1),
        m3: m(2),
    })
}

/// Diagonal joint stiffness `K_theta = -dM/dq`.
pub fn joint_stiffness(
    geom: &SegmentGeometry,
    controls: &ControlInputs,
    q: &JointConfig,
) -> Result<Matrix3<f64>> {
    let (a, b, k) = symmetric_abk(geom)?;
    check_range(geom, q)?;
    let mut kt = Matrix3::zeros();
    for i in 0..3 {
        let c = &controls.segments[i];
        let (s, co) = (0.5 * q.q[i]).sin_cos();
        let dm = 2.0 * k * (b * b - a * a) * q.q[i].cos()
            - 0.5 * k * c.l01 * (b * co - a * s)
            - 0.5 * k * c.l02 * (a * s + b * co);
        kt[(i, i)] = -dm;
    }
    Ok(kt)
}

fn residual_tolerance(manip: &Manipulator) -> f64 {
    1e-8 * manip.torque_scale()
}

/// Unloaded Cartesian compliance and stiffness `(C_F0, K_F0)`.
///
/// `q` must be an unloaded equilibrium (all joint torques zero). The
/// straight configuration is rejected as singular: its compliance is not
/// defined and its behaviour is that of the buckling analysis instead.
pub fn unloaded_cartesian(
    manip: &Manipulator,
    q: &JointConfig,
) -> Result<(Matrix2<f64>, Matrix2<f64>)> {
    let m = joint_torques(manip.geometry(), manip.controls(), q)?;
    let norm = m.vector().norm();
    if norm > residual_tolerance(manip) {
        return Err(Error::Precondition(format!(
            "configuration is not unloaded: |M| = {norm:e}"
        )));
    }
    let jt = kinematics::jacobian(q, manip.b()).translational();
    check_rank(&jt, manip.b())?;
    let kt = joint_stiffness(manip.geometry(), manip.controls(), q)?;
    let mut cf = Matrix2::zeros();
    for r in 0..2 {
        for s in 0..2 {
            cf[(r, s)] = (0..3).map(|j| jt[(r, j)] * jt[(s, j)] / kt[(j, j)]).sum();
        }
    }
    if !cf.iter().all(|v: &f64| v.is_finite()) {
        return Err(Error::Singular {
            what: "joint stiffness",
            measure: (0..3)
                .map(|j| kt[(j, j)].abs())
                .fold(f64::INFINITY, f64::min),
        });
    }
    let kf = numerics::inverse2(&cf).ok_or(Error::Singular {
        what: "unloaded compliance",
        measure: cf.determinant().abs(),
    })?;
    Ok((cf, kf))
}

fn check_rank(jt: &Matrix2x3<f64>, b: f64) -> Result<()> {
    let sv = jt.singular_values();
    let smin = sv.min();
    if smin <= 1e-10 * b {
        return Err(Error::Singular {
            what:
                "translational Jacobian (straight or fully folded chain; see the buckling analysis)",
            measure: smin,
        });
    }
    Ok(())
}

/// `K_g` with columns `(dJ/dq_i)^T F`. Symmetric for any wrench.
pub fn loading_influence(b: f64, q: &JointConfig, wrench: &PlanarWrench) -> Matrix3<f64> {
    let partials = kinematics::jacobian_partials(q, b);
    let f = wrench.vector();
    let mut kg = Matrix3::zeros();
    for (i, p) in partials.iter().enumerate() {
        kg.set_column(i, &(p.transpose() * f));
    }
    kg
}

/// All stiffness matrices at a loaded equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffnessSet {
    pub k_theta: Matrix3<f64>,
    pub kg: Matrix3<f64>,
    /// Translational compliance `J (K_theta - K_g)^-1 J^T`.
    pub cf: Matrix2<f64>,
    pub kf: Matrix2<f64>,
    /// Condition number of `K_theta - K_g`.
    pub condition: f64,
    /// Smallest eigenvalue of `K_theta - K_g`; positive at a stable point.
    pub min_eig: f64,
}

impl StiffnessSet {
    pub fn kxx(&self) -> f64 {
        self.kf[(0, 0)]
    }

    pub fn kyy(&self) -> f64 {
        self.kf[(1, 1)]
    }

    pub fn stability(&self) -> Stability {
        if self.min_eig > 0.0 {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    }
}

/// Residual `M + J^T F` of the loaded equilibrium.
pub fn wrench_residual(
    manip: &Manipulator,
    q: &JointConfig,
    wrench: &PlanarWrench,
) -> Result<Vector3<f64>> {
    let j = kinematics::jacobian(q, manip.b());
    Ok(manip.joint_torques(q)? + j.matrix().transpose() * wrench.vector())
}

/// `K_theta - K_g` from the general spring model.
fn loaded_hessian(
    manip: &Manipulator,
    q: &JointConfig,
    wrench: &PlanarWrench,
) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    let kt = Matrix3::from_diagonal(&(-manip.joint_torque_slopes(q)?));
    let kg = loading_influence(manip.b(), q, wrench);
    Ok((kt, kg))
}

pub fn loaded_stiffness(
    manip: &Manipulator,
    q: &JointConfig,
    wrench: &PlanarWrench,
) -> Result<StiffnessSet> {
    let r = wrench_residual(manip, q, wrench)?.norm();
    if r > residual_tolerance(manip) {
        return Err(Error::Precondition(format!(
            "configuration is not in equilibrium with the wrench: |M + J^T F| = {r:e}"
        )));
    }
    let (k_theta, kg) = loaded_hessian(manip, q, wrench)?;
    let h = k_theta - kg;
    let condition = numerics::condition_number(&h);
    if !(condition <= QUASI_BUCKLING_CONDITION) {
        return Err(Error::QuasiBuckling { condition });
    }
    let h_sym = 0.5 * (h + h.transpose());
    let min_eig = SymmetricEigen::new(h_sym).eigenvalues.min();
    let hinv = h.try_inverse().ok_or(Error::QuasiBuckling { condition })?;
    let jt = kinematics::jacobian(q, manip.b()).translational();
    let cf = jt * hinv * jt.transpose();
    let kf = numerics::inverse2(&cf).ok_or(Error::Singular {
        what: "loaded compliance",
        measure: cf.determinant().abs(),
    })?;
    Ok(StiffnessSet {
        k_theta,
        kg,
        cf,
        kf,
        condition,
        min_eig,
    })
}

/// Newton solve of `M(q) + J^T F = 0` for a prescribed end-point wrench.
pub fn solve_under_force(
    manip: &Manipulator,
    wrench: &PlanarWrench,
    guess: &JointConfig,
    settings: &SolverSettings,
) -> Result<JointConfig> {
    let ts = manip.torque_scale();
    let q_max = manip.q_max();
    let report = numerics::newton_solve(
        |x| {
            let q = JointConfig::from_vector(x, q_max);
            let r = wrench_residual(manip, &q, wrench).ok()?;
            let (kt, kg) = loaded_hessian(manip, &q, wrench).ok()?;
            Some((r / ts, (kg - kt) / ts))
        },
        guess.vector(),
        settings,
    )?;
    let q = JointConfig::from_vector(&report.solution, q_max);
    if !q.within_limits() {
        return Err(Error::Infeasible(format!(
            "loaded configuration {:?} violates the joint limit {q_max}",
            q.q
        )));
    }
    Ok(q)
}

/// Unloaded starting state for stiffness profiles.
///
/// Takes the lowest stable energy minimum on the `+` branch at `endpoint`
/// for equal controls `l0`, then re-splits every segment's controls around
/// `l0` so that this configuration carries no load at all.
pub fn unloaded_start(
    geom: &SegmentGeometry,
    l0: f64,
    endpoint: (f64, f64),
    q_max: Option<f64>,
) -> Result<(Manipulator, JointConfig)> {
    let base = Manipulator::new(*geom, ControlInputs::symmetric(l0)?, q_max)?;
    let eq = equilibrium::find_equilibria(
        &base,
        endpoint,
        Branch::Plus,
        equilibrium::DEFAULT_GRID_POINTS,
    )?
    .into_iter()
    .filter(|p| p.stability == Stability::Stable)
    .min_by(|a, b| a.energy.total_cmp(&b.energy))
    .ok_or_else(|| {
        Error::Infeasible(format!(
            "no stable equilibrium with end point ({}, {})",
            endpoint.0, endpoint.1
        ))
    })?;
    let manip = base.with_controls(ControlInputs::preloaded(geom, l0, &eq.q)?)?;
    Ok((manip, eq.q))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub q: JointConfig,
    /// `NaN` where the stiffness is undefined (quasi-buckling).
    pub kxx: f64,
    pub kyy: f64,
    /// End-point displacement from the start along the force axis.
    pub deflection: f64,
    pub quasi_buckling: bool,
    pub jump: bool,
    pub stiffness: Option<StiffnessSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRecord {
    pub force: f64,
    /// `None` is a gap: Newton failed at this force.
    pub solution: Option<ProfilePoint>,
    pub error: Option<Error>,
}

/// Force-controlled continuation from `start`, recording the Cartesian
/// stiffness at every grid force along `axis`.
///
/// A point is flagged quasi-buckling when `K_theta - K_g` is not positive
/// definite or is ill-conditioned, when the stiffness along the loaded axis
/// has collapsed below [`COLLAPSE_FRACTION`] of its value at the first
/// point, when the configuration jumps, or when a joint comes within 1% of
/// its limit.
pub fn stiffness_profile(
    manip: &Manipulator,
    start: &JointConfig,
    axis: Axis,
    forces: &[f64],
    settings: &SolverSettings,
) -> Result<Vec<ProfileRecord>> {
    if !start.within_limits() {
        return Err(Error::Precondition(format!(
            "start configuration {:?} violates the joint limit",
            start.q
        )));
    }
    let origin = kinematics::forward_kinematics(start, manip.b()).position();
    let wrench_of = |f: f64| match axis {
        Axis::X => PlanarWrench::force(f, 0.0),
        Axis::Y => PlanarWrench::force(0.0, f),
    };
    let mut previous: Option<(f64, JointConfig)> = None;
    let mut reference: Option<f64> = None;
    let mut out = Vec::with_capacity(forces.len());
    for &f in forces {
        let wrench = wrench_of(f);
        let guess = previous.map_or(*start, |p| p.1);
        let predicted = previous.and_then(|(f0, q0)| {
            let (kt, kg) = loaded_hessian(manip, &q0, &wrench_of(f0)).ok()?;
            let j = kinematics::jacobian(&q0, manip.b());
            let dq = numerics::solve3(
                &(kt - kg),
                &(j.matrix().transpose() * wrench_of(f - f0).vector()),
            )?;
            Some(dq.amax())
        });
        match solve_under_force(manip, &wrench, &guess, settings) {
            Ok(q) => {
                let jump = match (previous, predicted) {
                    (Some((_, q0)), Some(p)) => {
                        (q.vector() - q0.vector()).amax() > JUMP_FACTOR * p.max(1e-9)
                    }
                    _ => false,
                };
                let stiff = loaded_stiffness(manip, &q, &wrench);
                let near_limit = q.limit_clearance() < 0.01 * manip.q_max();
                let (kxx, kyy, unstable, stiffness) = match stiff {
                    Ok(s) => (
                        s.kxx(),
                        s.kyy(),
                        s.min_eig <= 0.0 || s.kxx() <= 0.0,
                        Some(s),
                    ),
                    Err(_) => (f64::NAN, f64::NAN, true, None),
                };
                let along = match axis {
                    Axis::X => kxx,
                    Axis::Y => kyy,
                };
                let reference = *reference.get_or_insert(along);
                let collapsed = reference > 0.0 && !(along >= COLLAPSE_FRACTION * reference);
                let pos = kinematics::forward_kinematics(&q, manip.b()).position();
                out.push(ProfileRecord {
                    force: f,
                    solution: Some(ProfilePoint {
                        q,
                        kxx,
                        kyy,
                        deflection: (pos - origin)[axis.index()],
                        quasi_buckling: unstable || collapsed || jump || near_limit,
                        jump,
                        stiffness,
                    }),
                    error: None,
                });
                previous = Some((f, q));
            }
            Err(e) => out.push(ProfileRecord {
                force: f,
                solution: None,
                error: Some(e),
            }),
        }
    }
    Ok(out)
}
