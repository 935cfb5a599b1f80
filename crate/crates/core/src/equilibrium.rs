//! Equilibria of the chain with a prescribed end point.
//!
//! Two routes are available. The energy route scans `E(q1)` along the
//! one-dimensional set of configurations that keep the end point fixed and
//! picks its extrema. The torque route solves the position constraints plus
//! the zero end-effector torque condition directly with Newton's method.
//! Both meet at the same points: along the constraint set the balance torque
//! equals `-|sin q3| dE/dq1`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::buckling::{self, Shape};
use crate::error::{Error, Result};
use crate::kinematics::{self, Branch, JointConfig, Reach};
use crate::model::Manipulator;
use crate::numerics::{self, SolverSettings};
use crate::segment::Stability;

pub const DEFAULT_GRID_POINTS: usize = 2001;
const CURVATURE_STEP: f64 = 1e-4;
const JUMP_FACTOR: f64 = 10.0;

/// End-effector force and torque `(Fx, Fy, Me)` applied to the chain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarWrench {
    pub fx: f64,
    pub fy: f64,
    pub me: f64,
}

impl PlanarWrench {
    pub fn new(fx: f64, fy: f64, me: f64) -> Self {
        Self { fx, fy, me }
    }

    pub fn force(fx: f64, fy: f64) -> Self {
        Self { fx, fy, me: 0.0 }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.fx, self.fy, self.me)
    }

    pub fn translational(&self) -> Vector2<f64> {
        Vector2::new(self.fx, self.fy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EquilibriumKind {
    /// Interior extremum of the energy curve.
    Interior,
    /// The constraint set collapses to a single configuration.
    Isolated,
}

/// One solution of the fixed-end-point equilibrium problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumPoint {
    pub q: JointConfig,
    pub energy: f64,
    pub stability: Stability,
    pub feasible: bool,
    pub branch: Branch,
    pub kind: EquilibriumKind,
}

/// One sample of an energy curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub q1: f64,
    /// `(q2, q3)` when the end point is reachable for this `q1`.
    pub angles: Option<(f64, f64)>,
    pub feasible: bool,
    pub energy: Option<f64>,
    /// Branch-oriented balance torque, see [`balance_torque`].
    pub balance_torque: Option<f64>,
}

/// Left side of the zero end-effector torque condition,
/// `S3 M1 - (S23 + S3) M2 + (2 S2 + S23) M3`.
pub fn torque_balance_raw(q: &JointConfig, m: &Vector3<f64>) -> f64 {
    let [_, q2, q3] = q.q;
    let (s2, s3, s23) = (q2.sin(), q3.sin(), (q2 + q3).sin());
    s3 * m[0] - (s23 + s3) * m[1] + (2.0 * s2 + s23) * m[2]
}

fn torque_balance_gradient(q: &JointConfig, m: &Vector3<f64>, dm: &Vector3<f64>) -> Vector3<f64> {
    let [_, q2, q3] = q.q;
    let (s2, c2) = q2.sin_cos();
    let (s3, c3) = q3.sin_cos();
    let (s23, c23) = (q2 + q3).sin_cos();
    Vector3::new(
        s3 * dm[0],
        -c23 * m[1] - (s23 + s3) * dm[1] + (2.0 * c2 + c23) * m[2],
        c3 * m[0] - (c23 + c3) * m[1] + c23 * m[2] + (2.0 * s2 + s23) * dm[2],
    )
}

/// Balance torque oriented by the IK branch: `sign(branch) * raw`.
///
/// Along the constraint set this equals `-|sin q3| dE/dq1`, so it vanishes
/// exactly at the energy extrema and has the sign of `-dE/dq1` elsewhere.
pub fn balance_torque(manip: &Manipulator, q: &JointConfig, branch: Branch) -> Result<f64> {
    let m = manip.joint_torques(q)?;
    Ok(branch.sign() * torque_balance_raw(q, &m))
}

/// Configuration on `branch` with the given `q1` and end point.
pub fn constrained_config(
    manip: &Manipulator,
    endpoint: (f64, f64),
    branch: Branch,
    q1: f64,
) -> Option<JointConfig> {
    match kinematics::inverse_kinematics(endpoint.0, endpoint.1, q1, branch, manip.b()) {
        Reach::Reachable { q2, q3 } => Some(manip.config([q1, q2, q3])),
        Reach::Unreachable { .. } => None,
    }
}

fn feasible_config(
    manip: &Manipulator,
    endpoint: (f64, f64),
    branch: Branch,
    q1: f64,
) -> Option<JointConfig> {
    constrained_config(manip, endpoint, branch, q1).filter(|q| q.within_limits())
}

/// Balance torque at `q1` on the branch, or `None` when infeasible.
pub fn external_torque_me(
    manip: &Manipulator,
    endpoint: (f64, f64),
    branch: Branch,
    q1: f64,
) -> Option<f64> {
    let q = feasible_config(manip, endpoint, branch, q1)?;
    balance_torque(manip, &q, branch).ok()
}

/// Analytic `dE/dq1` along the constraint set, `-raw / sin q3`.
pub fn energy_slope(
    manip: &Manipulator,
    endpoint: (f64, f64),
    branch: Branch,
    q1: f64,
) -> Option<f64> {
    let q = constrained_config(manip, endpoint, branch, q1)?;
    let m = manip.joint_torques(&q).ok()?;
    let s3 = q.q[2].sin();
    (s3 != 0.0).then(|| -torque_balance_raw(&q, &m) / s3)
}

pub fn energy_curve(
    manip: &Manipulator,
    endpoint: (f64, f64),
    branch: Branch,
    q1_grid: &[f64],
) -> Vec<EnergySample> {
    q1_grid
        .iter()
        .map(|&q1| {
            let reach = constrained_config(manip, endpoint, branch, q1);
            let feasible_q = reach.filter(|q| q.within_limits() && q1.abs() <= manip.q_max());
            let energy = feasible_q.and_then(|q| manip.total_energy(&q).ok());
            let torque = feasible_q.and_then(|q| balance_torque(manip, &q, branch).ok());
            EnergySample {
                q1,
                angles: reach.map(|q| (q.q[1], q.q[2])),
                feasible: energy.is_some() && torque.is_some(),
                energy,
                balance_torque: torque,
            }
        })
        .collect()
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * (i as f64) / ((n - 1) as f64))
            .collect(),
    }
}

/// Energy extrema on one IK branch.
///
/// Minima are stable, maxima unstable. An end point that admits exactly one
/// configuration (the straight pose at `(6b, 0)`) is returned as an
/// [`EquilibriumKind::Isolated`] stable point.
pub fn find_equilibria(
    manip: &Manipulator,
    endpoint: (f64, f64),
    branch: Branch,
    grid_n: usize,
) -> Result<Vec<EquilibriumPoint>> {
    let grid = uniform_grid(-manip.q_max(), manip.q_max(), grid_n.max(3));
    let samples = energy_curve(manip, endpoint, branch, &grid);
    let torque_tol = 1e-9 * manip.torque_scale();
    let me_at = |q1: f64| external_torque_me(manip, endpoint, branch, q1).unwrap_or(f64::NAN);
    let xtol = 1e-15 * manip.q_max();

    let mut out = Vec::new();
    let n = samples.len();
    for i in 0..n {
        let s = &samples[i];
        if !s.feasible {
            continue;
        }
        let left = i > 0 && samples[i - 1].feasible;
        let right = i + 1 < n && samples[i + 1].feasible;
        if !left && !right {
            if s.balance_torque.is_some_and(|t| t.abs() <= torque_tol) {
                let q = feasible_config(manip, endpoint, branch, s.q1).expect("feasible sample");
                out.push(point(
                    manip,
                    q,
                    branch,
                    Stability::Stable,
                    EquilibriumKind::Isolated,
                )?);
            }
            continue;
        }
        if !right {
            continue;
        }
        let (ta, tb) = (
            s.balance_torque.expect("feasible"),
            samples[i + 1].balance_torque.expect("feasible"),
        );
        let root = if ta == 0.0 {
            // exact zero on the grid: classify using the neighbours
            let prev = if left {
                samples[i - 1].balance_torque
            } else {
                None
            };
            match prev {
                Some(p) if p != 0.0 && p.signum() != tb.signum() => Some((s.q1, p, tb)),
                _ => None,
            }
        } else if tb != 0.0 && ta.signum() != tb.signum() {
            let mut f = me_at;
            let x = numerics::bisect(&mut f, s.q1, samples[i + 1].q1, ta, xtol);
            Some((x, ta, tb))
        } else {
            None
        };
        if let Some((q1, before, after)) = root {
            let Some(q) = feasible_config(manip, endpoint, branch, q1) else {
                continue;
            };
            // balance torque = -|S3| dE/dq1: a + to - crossing is a minimum
            let stability = if before > 0.0 && after < 0.0 {
                Stability::Stable
            } else {
                Stability::Unstable
            };
            out.push(point(
                manip,
                q,
                branch,
                stability,
                EquilibriumKind::Interior,
            )?);
        }
    }
    Ok(out)
}

fn point(
    manip: &Manipulator,
    q: JointConfig,
    branch: Branch,
    stability: Stability,
    kind: EquilibriumKind,
) -> Result<EquilibriumPoint> {
    Ok(EquilibriumPoint {
        energy: manip.total_energy(&q)?,
        feasible: q.within_limits(),
        q,
        stability,
        branch,
        kind,
    })
}

/// End-point wrench from the closed-form inverse of `J^T`.
pub fn recover_wrench(manip: &Manipulator, q: &JointConfig) -> Result<PlanarWrench> {
    let b = manip.b();
    let [q1, q2, q3] = q.q;
    let s2 = q2.sin();
    if s2.abs() <= 1e-8 {
        return Err(Error::Singular {
            what: "closed-form wrench (sin q2 = 0)",
            measure: s2.abs(),
        });
    }
    let m = manip.joint_torques(q)?;
    let (s1, c1) = q1.sin_cos();
    let (s12, c12) = (q1 + q2).sin_cos();
    let s3 = q3.sin();
    let s23 = (q2 + q3).sin();
    let a = Matrix3::new(
        c12,
        -c1 - c12,
        c1,
        s12,
        -s1 - s12,
        s1,
        b * s3,
        -b * s23 - b * s3,
        2.0 * b * s2 + b * s23,
    );
    let f = -(a * m) / (2.0 * b * s2);
    Ok(PlanarWrench::new(f[0], f[1], f[2]))
}

/// End-point wrench from a generic solve of `J^T F = -M`.
pub fn recover_wrench_linear(manip: &Manipulator, q: &JointConfig) -> Result<PlanarWrench> {
    let j = kinematics::jacobian(q, manip.b());
    let m = manip.joint_torques(q)?;
    let f = numerics::solve3(&j.matrix().transpose(), &(-m)).ok_or(Error::Singular {
        what: "manipulator Jacobian",
        measure: j.determinant().abs(),
    })?;
    Ok(PlanarWrench::new(f[0], f[1], f[2]))
}

/// Scaled residual of the fixed-end-point equilibrium system and its
/// derivative: positions divided by `b`, the balance torque by `k b^2`.
pub fn equilibrium_residual(
    manip: &Manipulator,
    endpoint: (f64, f64),
    q: &JointConfig,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let b = manip.b();
    let ts = manip.torque_scale();
    let pose = kinematics::forward_kinematics(q, b);
    let j = kinematics::jacobian(q, b);
    let m = manip.joint_torques(q)?;
    let dm = manip.joint_torque_slopes(q)?;
    let r = Vector3::new(
        (pose.x - endpoint.0) / b,
        (pose.y - endpoint.1) / b,
        torque_balance_raw(q, &m) / ts,
    );
    let g = torque_balance_gradient(q, &m, &dm) / ts;
    let jm = j.matrix();
    let d = Matrix3::new(
        jm[(0, 0)] / b,
        jm[(0, 1)] / b,
        jm[(0, 2)] / b,
        jm[(1, 0)] / b,
        jm[(1, 1)] / b,
        jm[(1, 2)] / b,
        g[0],
        g[1],
        g[2],
    );
    Ok((r, d))
}

/// Solution of the torque route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadedEquilibrium {
    pub point: EquilibriumPoint,
    pub wrench: PlanarWrench,
    pub iterations: usize,
    pub residual_norm: f64,
}

pub fn solve_loaded_configuration(
    manip: &Manipulator,
    endpoint: (f64, f64),
    guess: &JointConfig,
    settings: &SolverSettings,
) -> Result<LoadedEquilibrium> {
    if !guess.within_limits() {
        return Err(Error::Precondition(format!(
            "initial guess {:?} violates the joint limit {}",
            guess.q,
            manip.q_max()
        )));
    }
    if is_straight_endpoint(manip, endpoint) {
        // The only configuration reaching (6b, 0) is q = 0, where Newton
        // degrades to linear convergence and the axial force is
        // indeterminate; report the unloaded straight pose directly.
        let q = manip.config([0.0; 3]);
        let (r, _) = equilibrium_residual(manip, endpoint, &q)?;
        return Ok(LoadedEquilibrium {
            point: point(
                manip,
                q,
                Branch::Plus,
                Stability::Stable,
                EquilibriumKind::Isolated,
            )?,
            wrench: PlanarWrench::default(),
            iterations: 0,
            residual_norm: r.norm(),
        });
    }
    let q_max = manip.q_max();
    let report = numerics::newton_solve(
        |x| equilibrium_residual(manip, endpoint, &JointConfig::from_vector(x, q_max)).ok(),
        guess.vector(),
        settings,
    )?;
    let q = JointConfig::from_vector(&report.solution, q_max);
    if !q.within_limits() {
        return Err(Error::Infeasible(format!(
            "converged configuration {:?} violates the joint limit {}",
            q.q, q_max
        )));
    }
    let stability = match manifold_curvature(manip, endpoint, &q) {
        Ok(c) if c > 0.0 => Stability::Stable,
        Ok(_) => Stability::Unstable,
        // the constraint set is a single point: nothing to move along
        Err(Error::Singular { .. }) => Stability::Stable,
        Err(e) => return Err(e),
    };
    let torques = manip.joint_torques(&q)?;
    let wrench = if torques.norm() <= 1e-12 * manip.torque_scale() {
        PlanarWrench::default()
    } else {
        recover_wrench(manip, &q)?
    };
    let kind = if kinematics::jacobian(&q, manip.b())
        .translational()
        .rank(1e-12)
        < 2
    {
        EquilibriumKind::Isolated
    } else {
        EquilibriumKind::Interior
    };
    Ok(LoadedEquilibrium {
        point: point(manip, q, Branch::of_q3(q.q[2]), stability, kind)?,
        wrench,
        iterations: report.iterations,
        residual_norm: report.residual_norm,
    })
}

/// Second difference of the energy along the fixed-end-point constraint
/// set, with steps of `1e-4` rad along its unit tangent.
///
/// Returns [`Error::Singular`] where the translational Jacobian loses rank.
pub fn manifold_curvature(
    manip: &Manipulator,
    endpoint: (f64, f64),
    q: &JointConfig,
) -> Result<f64> {
    let b = manip.b();
    let jt = kinematics::jacobian(q, b).translational();
    let tangent = Vector3::new(jt[(0, 0)], jt[(0, 1)], jt[(0, 2)]).cross(&Vector3::new(
        jt[(1, 0)],
        jt[(1, 1)],
        jt[(1, 2)],
    ));
    let norm = tangent.norm();
    if norm <= 1e-10 * b * b {
        return Err(Error::Singular {
            what: "translational Jacobian",
            measure: norm,
        });
    }
    let t = tangent / norm;
    let h = CURVATURE_STEP;
    let e0 = manip.total_energy(q)?;
    let side = |s: f64| -> Result<f64> {
        let p = project_to_endpoint(manip, endpoint, &(q.vector() + t * s))?;
        manip.total_energy(&JointConfig::from_vector(&p, q.q_max))
    };
    let (ep, em) = (side(h)?, side(-h)?);
    Ok((ep - 2.0 * e0 + em) / (h * h))
}

/// Minimum-norm Gauss-Newton projection onto `{q : p(q) = endpoint}`.
fn project_to_endpoint(
    manip: &Manipulator,
    endpoint: (f64, f64),
    start: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let b = manip.b();
    let target = Vector2::new(endpoint.0, endpoint.1);
    let mut x = *start;
    for _ in 0..50 {
        let q = JointConfig::from_vector(&x, manip.q_max());
        let r = kinematics::forward_kinematics(&q, b).position() - target;
        if r.norm() <= 1e-15 * b {
            return Ok(x);
        }
        let jt = kinematics::jacobian(&q, b).translational();
        let gram: Matrix2<f64> = jt * jt.transpose();
        let y = gram.lu().solve(&r).ok_or(Error::Singular {
            what: "translational Jacobian",
            measure: gram.determinant().abs(),
        })?;
        let dx = jt.transpose() * y;
        x -= dx;
        if dx.norm() <= 1e-16 {
            return Ok(x);
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// Options for [`force_deflection_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOptions {
    /// Guess for the first grid point. When absent, a straight start is
    /// seeded with the linearized U-shape and any other start with the
    /// lowest-energy stable equilibrium found by [`find_equilibria`].
    pub initial_guess: Option<JointConfig>,
    pub settings: SolverSettings,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeflectionPoint {
    pub q: JointConfig,
    pub wrench: PlanarWrench,
    pub stability: Stability,
    /// The solution moved much further than the local sensitivity predicts.
    pub jump: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeflectionRecord {
    pub deflection: f64,
    pub endpoint: (f64, f64),
    /// `None` marks a point where Newton did not converge.
    pub solution: Option<DeflectionPoint>,
    pub error: Option<Error>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceDeflectionCurve {
    pub axis: Axis,
    pub records: Vec<DeflectionRecord>,
    /// Force along the sweep axis extrapolated to zero deflection.
    pub intercept: Option<f64>,
}

impl ForceDeflectionCurve {
    /// Whether the extrapolated curve passes through the origin, within
    /// `tol` in force units.
    pub fn passes_through_zero(&self, tol: f64) -> Option<bool> {
        self.intercept.map(|f| f.abs() <= tol)
    }

    pub fn jump_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.solution.is_some_and(|s| s.jump))
            .count()
    }

    pub fn gap_count(&self) -> usize {
        self.records.iter().filter(|r| r.solution.is_none()).count()
    }
}

fn endpoint_for(start: (f64, f64), axis: Axis, deflection: f64) -> (f64, f64) {
    match axis {
        Axis::X => (start.0 - deflection, start.1),
        Axis::Y => (start.0, start.1 + deflection),
    }
}

fn is_straight_endpoint(manip: &Manipulator, p: (f64, f64)) -> bool {
    (p.0 - 6.0 * manip.b()).abs() <= 1e-12 * manip.b() && p.1.abs() <= 1e-12 * manip.b()
}

/// Linearized U-shape configuration with axial deflection `dx` from the
/// straight pose.
pub fn u_shape_seed(manip: &Manipulator, dx: f64) -> JointConfig {
    let c = buckling::linearized_coefficients(Shape::U);
    let q2 = (dx.max(0.0) / (c.mu * manip.b())).sqrt();
    manip.config([c.alpha1 * q2, q2, c.alpha3 * q2])
}

/// Deflection-controlled continuation along one axis.
///
/// Deflection is `x0 - x` for [`Axis::X`] and `y - y0` for [`Axis::Y`].
/// Every grid point starts Newton from the previous converged solution;
/// non-converged points are kept as gaps and the sweep goes on.
pub fn force_deflection_sweep(
    manip: &Manipulator,
    start: (f64, f64),
    axis: Axis,
    deflections: &[f64],
    options: &SweepOptions,
) -> Result<ForceDeflectionCurve> {
    if deflections.is_empty() {
        return Ok(ForceDeflectionCurve {
            axis,
            records: Vec::new(),
            intercept: None,
        });
    }
    let straight = is_straight_endpoint(manip, start);
    let mut previous: Option<(f64, JointConfig)> = match options.initial_guess {
        Some(g) => Some((f64::NAN, g)),
        None if straight => None,
        None => {
            let guess = lowest_stable_equilibrium(manip, start)?;
            Some((0.0, guess.q))
        }
    };
    let mut records = Vec::with_capacity(deflections.len());
    for &d in deflections {
        let endpoint = endpoint_for(start, axis, d);
        let guess = match previous {
            Some((_, q)) => q,
            None if axis == Axis::X => u_shape_seed(manip, start.0 - endpoint.0),
            None => manip.config([0.0; 3]),
        };
        let predicted = previous
            .filter(|(d0, _)| d0.is_finite())
            .and_then(|(d0, q)| {
                predicted_step(manip, endpoint_for(start, axis, d0), &q, axis, d - d0)
            });
        match solve_loaded_configuration(manip, endpoint, &guess, &options.settings) {
            Ok(sol) => {
                let q = sol.point.q;
                let jump = match (previous, predicted) {
                    (Some((d0, q0)), Some(pred)) if d0.is_finite() => {
                        let moved = (q.vector() - q0.vector()).amax();
                        moved > JUMP_FACTOR * pred.max(1e-9)
                    }
                    _ => false,
                };
                records.push(DeflectionRecord {
                    deflection: d,
                    endpoint,
                    solution: Some(DeflectionPoint {
                        q,
                        wrench: sol.wrench,
                        stability: sol.point.stability,
                        jump,
                    }),
                    error: None,
                });
                previous = Some((d, q));
            }
            Err(e) => records.push(DeflectionRecord {
                deflection: d,
                endpoint,
                solution: None,
                error: Some(e),
            }),
        }
    }
    let intercept = fit_intercept(&records, axis);
    Ok(ForceDeflectionCurve {
        axis,
        records,
        intercept,
    })
}

/// `||dq||_inf` predicted by the linearized equilibrium system for a
/// deflection increment `dd` at a converged point.
fn predicted_step(
    manip: &Manipulator,
    endpoint: (f64, f64),
    q: &JointConfig,
    axis: Axis,
    dd: f64,
) -> Option<f64> {
    let (_, a) = equilibrium_residual(manip, endpoint, q).ok()?;
    let b = manip.b();
    let dr = match axis {
        Axis::X => Vector3::new(1.0 / b, 0.0, 0.0),
        Axis::Y => Vector3::new(0.0, -1.0 / b, 0.0),
    };
    numerics::solve3(&a, &(-dr * dd)).map(|v| v.amax())
}

/// Least-squares line through the converged points before the first jump,
/// evaluated at zero deflection.
fn fit_intercept(records: &[DeflectionRecord], axis: Axis) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in records {
        let Some(s) = r.solution else { continue };
        if s.jump {
            break;
        }
        xs.push(r.deflection);
        ys.push(s.wrench.translational()[axis.index()]);
    }
    linear_intercept(&xs, &ys)
}

pub(crate) fn linear_intercept(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(my - sxy / sxx * mx)
}

/// Lowest-energy stable equilibrium over both branches at an end point.
pub fn lowest_stable_equilibrium(
    manip: &Manipulator,
    endpoint: (f64, f64),
) -> Result<EquilibriumPoint> {
    let mut best: Option<EquilibriumPoint> = None;
    for branch in Branch::BOTH {
        for p in find_equilibria(manip, endpoint, branch, DEFAULT_GRID_POINTS)? {
            if p.stability == Stability::Stable && best.is_none_or(|b| p.energy < b.energy) {
                best = Some(p);
            }
        }
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no stable equilibrium with end point ({}, {})",
            endpoint.0, endpoint.1
        ))
    })
}
