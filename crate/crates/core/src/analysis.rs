//! Convergence diagnostics: duality gaps against a saddle-point estimate,
//! closed-form rate-bound evaluators for the simple and proposed
//! relaxations, spectral analysis of the per-mode second-order recursion
//! (transition matrix, critical penalty, damping frequency), and PSD
//! checks for the weighting matrix underlying the rate proofs.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operators::DiagonalMajorizer;
use crate::problem::CompositeProblem;
use crate::solvers::fgm_restart_run;

/// Estimated saddle point of the split problem
/// `min 1/2||u - y||^2 + phi(x) + psi(x) s.t. u = Ax`.
///
/// For the quadratic loss the dual solution is `mu_hat = y - u_hat`, and
/// feasibility forces `u_hat = A x_hat`.
#[derive(Clone, Debug)]
pub struct SaddlePointEstimate {
    pub x_hat: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub mu_hat: Vec<f64>,
    /// Objective value at the saddle, `f(x_hat, u_hat)`.
    pub f_hat: f64,
}

impl SaddlePointEstimate {
    /// Build the full saddle estimate from a primal solution.
    pub fn from_primal(problem: &CompositeProblem, x_hat: Vec<f64>) -> Result<Self> {
        let u_hat = problem.op.apply(&x_hat)?;
        let mu_hat: Vec<f64> = problem.y.iter().zip(&u_hat).map(|(y, u)| y - u).collect();
        let f_hat = problem.cost_split(&x_hat, &u_hat)?;
        Ok(SaddlePointEstimate {
            x_hat,
            u_hat,
            mu_hat,
            f_hat,
        })
    }

    /// Solve the problem to high accuracy with the restarted fast gradient
    /// method and derive the saddle estimate from the result.
    pub fn from_long_run(problem: &CompositeProblem, x0: &[f64], max_iter: usize) -> Result<Self> {
        let (x_hat, _) = fgm_restart_run(problem, x0, max_iter, 1e-12)?;
        Self::from_primal(problem, x_hat)
    }
}

/// Duality gap `[f(x,u) - f(x_hat,u_hat)] - <mu_hat, Ax - u>` of an
/// approximate solution; nonnegative (up to saddle-estimate error) for any
/// `(x, u)`, and zero at the saddle point. The `mu` component of the
/// iterate does not enter the formula.
pub fn duality_gap(
    problem: &CompositeProblem,
    x: &[f64],
    u: &[f64],
    saddle: &SaddlePointEstimate,
) -> Result<f64> {
    let f = problem.cost_split(x, u)?;
    let ax = problem.op.apply(x)?;
    let coupling: f64 = saddle
        .mu_hat
        .iter()
        .zip(ax.iter().zip(u))
        .map(|(m, (a, ui))| m * (a - ui))
        .sum();
    Ok(f - saddle.f_hat - coupling)
}

/// Componentwise arithmetic mean of the first `k` entries of a history of
/// iterates.
pub fn ergodic_average(history: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > history.len() {
        return Err(Error::Config(format!(
            "cannot average {k} of {} iterates",
            history.len()
        )));
    }
    let n = history[0].len();
    let mut avg = vec![0.0; n];
    for it in &history[..k] {
        if it.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: it.len(),
            });
        }
        for (a, v) in avg.iter_mut().zip(it) {
            *a += v;
        }
    }
    for a in avg.iter_mut() {
        *a /= k as f64;
    }
    Ok(avg)
}

fn weighted_sq_norm(x: &[f64], d: &[f64]) -> f64 {
    x.iter().zip(d).map(|(v, w)| w * v * v).sum()
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// The three constants of the ergodic rate bounds, shared by
/// [`theorem1_bound`] and [`theorem2_bound`]:
/// `a = 1/2||x0 - x_hat||^2_{D_psi}`,
/// `b = rho/2 ||x0 - x_hat||^2_{D_A - A'A}`,
/// `c = 1/(2 alpha) (sqrt(rho)||u0 - u_hat|| + ||mu0 - mu_hat||/sqrt(rho))^2`.
fn bound_constants(
    problem: &CompositeProblem,
    x0: &[f64],
    u0: &[f64],
    mu0: &[f64],
    saddle: &SaddlePointEstimate,
    d_psi: &DiagonalMajorizer,
    d_a: &DiagonalMajorizer,
    rho: f64,
    alpha: f64,
) -> Result<(f64, f64, f64)> {
    let dx: Vec<f64> = x0.iter().zip(&saddle.x_hat).map(|(a, b)| a - b).collect();
    let a = 0.5 * weighted_sq_norm(&dx, &d_psi.entries);
    let adx = problem.op.apply(&dx)?;
    // ||dx||^2_{D_A - A'A} = dx' D_A dx - ||A dx||^2; nonnegative when D_A
    // dominates, clamp tiny negative round-off.
    let b = 0.5 * rho * (weighted_sq_norm(&dx, &d_a.entries) - sq_norm(&adx)).max(0.0);
    let du: Vec<f64> = u0.iter().zip(&saddle.u_hat).map(|(a, b)| a - b).collect();
    let dmu: Vec<f64> = mu0.iter().zip(&saddle.mu_hat).map(|(a, b)| a - b).collect();
    let c = (rho.sqrt() * sq_norm(&du).sqrt() + sq_norm(&dmu).sqrt() / rho.sqrt()).powi(2)
        / (2.0 * alpha);
    Ok((a, b, c))
}

/// Ergodic duality-gap bound of the simple relaxation after `k`
/// iterations: `(a + b + c)/k` with the constants of [`bound_constants`].
#[allow(clippy::too_many_arguments)]
pub fn theorem1_bound(
    k: usize,
    x0: &[f64],
    u0: &[f64],
    mu0: &[f64],
    saddle: &SaddlePointEstimate,
    d_psi: &DiagonalMajorizer,
    d_a: &DiagonalMajorizer,
    rho: f64,
    alpha: f64,
    problem: &CompositeProblem,
) -> Result<f64> {
    check_rate_params(k, rho, alpha)?;
    let (a, b, c) = bound_constants(problem, x0, u0, mu0, saddle, d_psi, d_a, rho, alpha)?;
    Ok((a + b + c) / k as f64)
}

/// Ergodic duality-gap bound of the proposed relaxation: identical to
/// [`theorem1_bound`] except the linearization constant is divided by
/// `alpha`, which is what makes over-relaxation pay off.
#[allow(clippy::too_many_arguments)]
pub fn theorem2_bound(
    k: usize,
    x0: &[f64],
    u0: &[f64],
    mu0: &[f64],
    saddle: &SaddlePointEstimate,
    d_psi: &DiagonalMajorizer,
    d_a: &DiagonalMajorizer,
    rho: f64,
    alpha: f64,
    problem: &CompositeProblem,
) -> Result<f64> {
    check_rate_params(k, rho, alpha)?;
    let (a, b, c) = bound_constants(problem, x0, u0, mu0, saddle, d_psi, d_a, rho, alpha)?;
    Ok((a + b / alpha + c) / k as f64)
}

fn check_rate_params(k: usize, rho: f64, alpha: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("bound needs at least one iteration".into()));
    }
    if rho <= 0.0 || !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Config(format!(
            "rate bound needs rho > 0 and alpha in (0, 2), got rho={rho}, alpha={alpha}"
        )));
    }
    Ok(())
}

/// Per-mode transition matrix of the second-order `(g, h)` recursion that
/// the quadratic-loss proposed relaxation induces on the eigencomponent
/// with curvature `lambda` (largest curvature `l_a`, penalty `rho`,
/// relaxation `alpha`).
#[derive(Clone, Copy, Debug)]
pub struct TransitionMatrix2x2 {
    pub t11: f64,
    pub t12: f64,
    pub t21: f64,
    pub t22: f64,
}

impl TransitionMatrix2x2 {
    pub fn trace(&self) -> f64 {
        self.t11 + self.t22
    }

    pub fn det(&self) -> f64 {
        self.t11 * self.t22 - self.t12 * self.t21
    }

    /// Discriminant of the characteristic polynomial; negative means a
    /// complex (oscillatory, underdamped) eigenvalue pair.
    pub fn discriminant(&self) -> f64 {
        self.trace().powi(2) - 4.0 * self.det()
    }

    /// Largest eigenvalue magnitude.
    pub fn spectral_radius(&self) -> f64 {
        let disc = self.discriminant();
        if disc >= 0.0 {
            let s = disc.sqrt();
            ((self.trace() + s) / 2.0)
                .abs()
                .max(((self.trace() - s) / 2.0).abs())
        } else {
            // complex pair: |lambda|^2 = det
            self.det().max(0.0).sqrt()
        }
    }
}

pub fn transition_matrix(
    lambda: f64,
    l_a: f64,
    rho: f64,
    alpha: f64,
) -> Result<TransitionMatrix2x2> {
    if !(lambda > 0.0 && lambda <= l_a) {
        return Err(Error::Config(format!(
            "need 0 < lambda <= l_a, got lambda={lambda}, l_a={l_a}"
        )));
    }
    if rho <= 0.0 {
        return Err(Error::Config(format!("need rho > 0, got {rho}")));
    }
    let r = lambda / l_a;
    Ok(TransitionMatrix2x2 {
        t11: alpha * rho * r / (rho + 1.0) * (rho - 1.0) / rho
            + ((1.0 - alpha) * rho + 1.0) / (rho + 1.0),
        t12: alpha * rho * r / (rho + 1.0),
        t21: alpha * (1.0 - r) * (rho - 1.0) / rho,
        t22: alpha * (1.0 - r) + 1.0 - alpha,
    })
}

/// Penalty value at which the dominant mode transitions from oscillatory
/// to overdamped: `2 sqrt((lambda_1/l_a)(1 - lambda_1/l_a))`, independent
/// of the relaxation parameter.
pub fn critical_rho(lambda_1: f64, l_a: f64) -> Result<f64> {
    if !(lambda_1 > 0.0 && lambda_1 <= l_a) {
        return Err(Error::Config(format!(
            "need 0 < lambda_1 <= l_a, got lambda_1={lambda_1}, l_a={l_a}"
        )));
    }
    let r = lambda_1 / l_a;
    Ok(2.0 * (r * (1.0 - r)).sqrt())
}

/// Numerical root of the characteristic-polynomial discriminant in `rho`,
/// by bisection; exists to cross-check [`critical_rho`] and its
/// independence from `alpha`.
pub fn critical_rho_by_root_finding(lambda_1: f64, l_a: f64, alpha: f64) -> Result<f64> {
    let disc = |rho: f64| -> Result<f64> {
        Ok(transition_matrix(lambda_1, l_a, rho, alpha)?.discriminant())
    };
    let mut lo = 1e-12;
    if disc(lo)? >= 0.0 {
        return Err(Error::Numerical(
            "mode is overdamped even for vanishing penalty".into(),
        ));
    }
    let mut hi = 1.0;
    while disc(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Numerical("no overdamped regime found".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if disc(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Oscillation frequency of the dominant mode in the small-penalty
/// (underdamped) regime: `omega = arccos(trace / (2 sqrt(det)))` of the
/// transition matrix evaluated at `rho_small`. Errors with
/// [`Error::Overdamped`] when the mode has real eigenvalues (no
/// oscillation).
pub fn damping_frequency(lambda_1: f64, l_a: f64, alpha: f64, rho_small: f64) -> Result<f64> {
    let t = transition_matrix(lambda_1, l_a, rho_small, alpha)?;
    let det = t.det();
    if det <= 0.0 {
        return Err(Error::Overdamped(rho_small));
    }
    let c = t.trace() / (2.0 * det.sqrt());
    if c.abs() > 1.0 {
        return Err(Error::Overdamped(rho_small));
    }
    Ok(c.acos())
}

/// Assemble the rate-proof weighting matrix
///
/// ```text
///     [ D_psi + P        0                 0          ]
/// H = [ 0           (rho/alpha) B'B   ((1-alpha)/alpha) B' ]
///     [ 0           ((1-alpha)/alpha) B   1/(alpha rho) I  ]
/// ```
///
/// and report its minimum eigenvalue together with a PSD verdict. The
/// matrix is positive semi-definite exactly on the admissible range
/// `0 < alpha < 2`, `rho > 0`.
pub fn check_psd_h(
    alpha: f64,
    rho: f64,
    b_matrix: &DMatrix<f64>,
    d_psi: &DiagonalMajorizer,
    p_matrix: &DMatrix<f64>,
) -> Result<(f64, bool)> {
    let n = d_psi.len();
    if p_matrix.nrows() != n || p_matrix.ncols() != n {
        return Err(Error::Shape {
            expected: n,
            got: p_matrix.nrows(),
        });
    }
    let (mb, nb) = (b_matrix.nrows(), b_matrix.ncols());
    let dim = n + nb + mb;
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = p_matrix[(i, j)];
        }
        h[(i, i)] += d_psi.entries[i];
    }
    let btb = b_matrix.transpose() * b_matrix;
    for i in 0..nb {
        for j in 0..nb {
            h[(n + i, n + j)] = rho / alpha * btb[(i, j)];
        }
    }
    let c = (1.0 - alpha) / alpha;
    for i in 0..mb {
        for j in 0..nb {
            h[(n + nb + i, n + j)] = c * b_matrix[(i, j)];
            h[(n + j, n + nb + i)] = c * b_matrix[(i, j)];
        }
        h[(n + nb + i, n + nb + i)] += 1.0 / (alpha * rho);
    }
    let eig = h.symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = eig
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    Ok((min_eig, min_eig >= -1e-10 * scale))
}

/// Root-mean-square difference over an optional pixel mask, scaled to
/// image units (`hu_scale = 1` when the image is already in those units).
pub fn rms_difference_masked(
    x: &[f64],
    x_ref: &[f64],
    mask: Option<&[bool]>,
    hu_scale: f64,
) -> Result<f64> {
    if x.len() != x_ref.len() {
        return Err(Error::Shape {
            expected: x_ref.len(),
            got: x.len(),
        });
    }
    if let Some(m) = mask {
        if m.len() != x.len() {
            return Err(Error::Shape {
                expected: x.len(),
                got: m.len(),
            });
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..x.len() {
        if mask.map_or(true, |m| m[i]) {
            let d = x[i] - x_ref[i];
            sum += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Config("empty mask in RMS difference".into()));
    }
    Ok((sum / count as f64).sqrt() * hu_scale)
}

/// Unmasked, unit-scale RMS difference.
pub fn rms_difference(x: &[f64], x_ref: &[f64]) -> Result<f64> {
    rms_difference_masked(x, x_ref, None, 1.0)
}
