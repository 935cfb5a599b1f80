//! Small numerical kernel shared by the analysis modules.
//!
//! Everything here is deterministic: fixed evaluation order, no randomized
//! pivoting, so repeated runs on one platform are bit-identical.

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};

/// Settings for the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Tolerance on the Euclidean norm of the (already scaled) residual.
    pub residual_tolerance: f64,
    pub fd_step: f64,
    /// Backtracking factor applied to the Newton step on each halving.
    pub damping: f64,
    pub max_halvings: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            residual_tolerance: 1e-10,
            fd_step: 1e-6,
            damping: 0.5,
            max_halvings: 30,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iterations",
                value: 0.0,
                reason: "must be positive",
            });
        }
        if !(self.residual_tolerance > 0.0 && self.residual_tolerance < 1.0) {
            return Err(Error::InvalidParameter {
                name: "residual_tolerance",
                value: self.residual_tolerance,
                reason: "must lie in (0, 1)",
            });
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::InvalidParameter {
                name: "fd_step",
                value: self.fd_step,
                reason: "must be positive",
            });
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidParameter {
                name: "damping",
                value: self.damping,
                reason: "must lie in (0, 1)",
            });
        }
        Ok(())
    }
}

/// Successful Newton run.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub solution: Vector3<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    /// Residual norm before each step, followed by the final one.
    pub trace: Vec<f64>,
}

/// Failed Newton run, with the last accepted iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonFailure {
    pub last: Vector3<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub trace: Vec<f64>,
}

impl From<NewtonFailure> for Error {
    fn from(f: NewtonFailure) -> Self {
        Error::NotConverged {
            iterations: f.iterations,
            residual: f.residual_norm,
        }
    }
}

/// Damped Newton iteration for a 3-dimensional residual.
///
/// `system` returns the residual and its analytic derivative at a point, or
/// `None` where the residual is undefined (the line search then backs off).
/// A singular derivative falls back to a Levenberg-regularized step; the run
/// fails if no step reduces the residual after `max_halvings` halvings.
pub fn newton_solve<F>(
    mut system: F,
    guess: Vector3<f64>,
    settings: &SolverSettings,
) -> std::result::Result<NewtonReport, NewtonFailure>
where
    F: FnMut(&Vector3<f64>) -> Option<(Vector3<f64>, Matrix3<f64>)>,
{
    let mut x = guess;
    let mut trace = Vec::new();
    let Some((mut r, mut a)) = system(&x) else {
        return Err(NewtonFailure {
            last: x,
            iterations: 0,
            residual_norm: f64::INFINITY,
            trace,
        });
    };
    let mut norm = r.norm();
    for iteration in 0..settings.max_iterations {
        trace.push(norm);
        if norm < settings.residual_tolerance {
            return Ok(NewtonReport {
                solution: x,
                iterations: iteration,
                residual_norm: norm,
                trace,
            });
        }
        let step = newton_step(&a, &r);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_halvings {
            let trial = x + step * t;
            if let Some((rt, at)) = system(&trial) {
                let nt = rt.norm();
                if nt.is_finite() && nt < (1.0 - 1e-4 * t) * norm {
                    accepted = Some((trial, rt, at, nt));
                    break;
                }
            }
            t *= settings.damping;
        }
        match accepted {
            Some((xt, rt, at, nt)) => {
                x = xt;
                r = rt;
                a = at;
                norm = nt;
            }
            None => {
                return Err(NewtonFailure {
                    last: x,
                    iterations: iteration,
                    residual_norm: norm,
                    trace,
                })
            }
        }
    }
    trace.push(norm);
    if norm < settings.residual_tolerance {
        return Ok(NewtonReport {
            solution: x,
            iterations: settings.max_iterations,
            residual_norm: norm,
            trace,
        });
    }
    Err(NewtonFailure {
        last: x,
        iterations: settings.max_iterations,
        residual_norm: norm,
        trace,
    })
}

fn newton_step(a: &Matrix3<f64>, r: &Vector3<f64>) -> Vector3<f64> {
    if let Some(step) = solve3(a, &(-r)) {
        if step.iter().all(|v| v.is_finite()) {
            return step;
        }
    }
    // Regularized pseudo-step for a singular derivative.
    let scale = a.abs().max().max(1e-300);
    let ata = a.transpose() * a + Matrix3::identity() * (1e-10 * scale * scale);
    solve3(&ata, &(-(a.transpose() * r))).unwrap_or_else(Vector3::zeros)
}

/// Solves `a x = b`, returning `None` when `a` is singular.
pub fn solve3(a: &Matrix3<f64>, b: &Vector3<f64>) -> Option<Vector3<f64>> {
    a.lu().solve(b)
}

pub fn inverse2(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    m.try_inverse()
}

/// 2-norm condition number from the singular values; infinite when singular.
pub fn condition_number(m: &Matrix3<f64>) -> f64 {
    let sv = m.svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Symmetric (to `rel_tol`) and positive definite.
pub fn is_symmetric_positive_definite(m: &Matrix2<f64>, rel_tol: f64) -> bool {
    let scale = m.abs().max();
    if (m[(0, 1)] - m[(1, 0)]).abs() > rel_tol * scale {
        return false;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.cholesky().is_some()
}

/// All sign changes of `f` on a uniform grid of `grid_n` points over
/// `[lo, hi]`, refined by bisection to an interval width of `1e-12`
/// (relative to the interval scale). Roots of even multiplicity that do not
/// change sign are missed. Points where `f` is not finite are skipped.
pub fn bracketed_roots<F>(mut f: F, lo: f64, hi: f64, grid_n: usize) -> Vec<f64>
where
    F: FnMut(f64) -> f64,
{
    let n = grid_n.max(2);
    let xs: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * (i as f64) / ((n - 1) as f64))
        .collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let xtol = 1e-12 * (hi - lo).abs().max(1.0);
    let mut roots = Vec::new();
    for i in 0..n {
        if fs[i] == 0.0 {
            roots.push(xs[i]);
        }
    }
    for i in 0..n - 1 {
        let (fa, fb) = (fs[i], fs[i + 1]);
        if !(fa.is_finite() && fb.is_finite()) || fa == 0.0 || fb == 0.0 {
            continue;
        }
        if fa.signum() != fb.signum() {
            roots.push(bisect(&mut f, xs[i], xs[i + 1], fa, xtol));
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Bisection on a bracket `[a, b]` with `f(a) = fa` of opposite sign to `f(b)`.
pub fn bisect<F>(f: &mut F, mut a: f64, mut b: f64, mut fa: f64, xtol: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= xtol || m == a || m == b {
            return m;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Local minima of `f` sampled on a uniform grid, each refined by
/// golden-section search inside its neighbouring grid cells.
pub fn grid_local_minima<F>(mut f: F, lo: f64, hi: f64, grid_n: usize, xtol: f64) -> Vec<f64>
where
    F: FnMut(f64) -> f64,
{
    let n = grid_n.max(3);
    let xs: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * (i as f64) / ((n - 1) as f64))
        .collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for i in 1..n - 1 {
        let (l, c, r) = (fs[i - 1], fs[i], fs[i + 1]);
        if l.is_finite() && c.is_finite() && r.is_finite() && c < l && c <= r {
            out.push(golden_section(&mut f, xs[i - 1], xs[i + 1], xtol));
        }
    }
    out
}

fn golden_section<F>(f: &mut F, mut a: f64, mut b: f64, xtol: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > xtol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Central finite difference `(f(x+h) - f(x-h)) / 2h`.
pub fn finite_difference<F>(mut f: F, x: f64, step: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// Central-difference Jacobian of a map `R^3 -> R^R`.
pub fn finite_difference_jacobian<F, const R: usize>(
    mut f: F,
    x: &Vector3<f64>,
    step: f64,
) -> SMatrix<f64, R, 3>
where
    F: FnMut(&Vector3<f64>) -> SVector<f64, R>,
{
    let mut out = SMatrix::<f64, R, 3>::zeros();
    for j in 0..3 {
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += step;
        xm[j] -= step;
        let col = (f(&xp) - f(&xm)) / (2.0 * step);
        out.set_column(j, &col);
    }
    out
}
