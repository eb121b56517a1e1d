//! Relaxed augmented-Lagrangian solvers.
//!
//! Four full-data step functions share the same saddle-point problem and can
//! be cross-checked against each other:
//!
//! * [`relaxed_al_step`] — relaxed AL with an *exact* x-minimization
//!   (expensive; used as a reference oracle),
//! * [`lalm_simple_relaxed_step`] — linearized AL with an explicit
//!   separable proximity term,
//! * [`lalm_proposed_literal_step`] — relaxation through a redundant split
//!   `v = G^{1/2} x`, with an explicit dense matrix square root,
//! * [`lalm_proposed_practical_step`] / [`lalm_proposed_quadratic_step`] —
//!   algebraically equivalent reformulations of the literal step that avoid
//!   `G^{1/2}` and need only one forward and one adjoint application per
//!   step.
//!
//! On top of these, the module provides ordered-subsets runners
//! ([`os_relaxed_lalm_run`], [`os_simple_relaxed_lalm_run`],
//! [`os_sqs_run`]), the continuation schedule [`continuation_rho`], and a
//! restarted fast gradient method [`fgm_restart_run`] used to compute
//! reference solutions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operators::{diag_majorizer_ata, max_eigenvalue, DiagonalMajorizer, LinearOperator};
use crate::problem::{CompositeProblem, ProxSpec, SmoothSpec};

/// Penalty-parameter schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RhoMode {
    Fixed(f64),
    /// Decreasing schedule [`continuation_rho`], advanced once per
    /// subiteration.
    Continuation,
}

/// Penalty-curvature mode for the smooth regularizer's diagonal majorizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DPsiMode {
    /// Curvature evaluated at the current iterate; faster in practice but
    /// outside the assumptions of the rate bounds.
    Huber,
    /// Global maximum curvature; the mode the rate bounds assume.
    MaxCurvature,
}

/// Shared solver settings.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Relaxation parameter, must lie in (0, 2).
    pub alpha: f64,
    pub rho: RhoMode,
    /// Outer iterations (each visits every subset once).
    pub iterations: usize,
    /// Number of ordered subsets (1 = full gradients).
    pub subsets: usize,
    pub d_psi_mode: DPsiMode,
    /// Rows are grouped in contiguous blocks of this size before the
    /// interleaved subset assignment — set it to the number of detector
    /// bins per view so subsets are sets of whole views. 1 means rows are
    /// assigned individually.
    pub rows_per_view: usize,
}

impl SolverConfig {
    /// Continuation defaults: full-curvature bookkeeping left to the
    /// caller-facing fields.
    pub fn new(alpha: f64, rho: RhoMode, iterations: usize, subsets: usize) -> Self {
        SolverConfig {
            alpha,
            rho,
            iterations,
            subsets,
            d_psi_mode: DPsiMode::Huber,
            rows_per_view: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows_per_view == 0 {
            return Err(Error::Config("rows_per_view must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::Config(format!(
                "relaxation parameter must be in (0, 2), got {}",
                self.alpha
            )));
        }
        if let RhoMode::Fixed(r) = self.rho {
            if r <= 0.0 {
                return Err(Error::Config(format!("penalty parameter must be positive, got {r}")));
            }
        }
        if self.subsets == 0 {
            return Err(Error::Config("need at least one subset".into()));
        }
        Ok(())
    }
}

/// Iterates recorded once per outer iteration. `wall_seconds` is `None`
/// unless timing was explicitly requested, so that output files are
/// reproducible byte-for-byte under a fixed seed.
#[derive(Clone, Debug)]
pub struct ConvergenceRecord {
    pub k: usize,
    pub rho: f64,
    pub cost: f64,
    pub rms_hu: Option<f64>,
    pub ergodic_gap: Option<f64>,
    pub nonergodic_gap: Option<f64>,
    pub wall_seconds: Option<f64>,
}

/// Serialize records with a fixed header and fixed-precision floats.
pub fn records_to_csv(records: &[ConvergenceRecord]) -> String {
    let mut out = String::from("k,rho,cost,rms_hu,ergodic_gap,nonergodic_gap,wall_seconds\n");
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.12e}"));
    for r in records {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{},{},{},{}\n",
            r.k,
            r.rho,
            r.cost,
            fmt(r.rms_hu),
            fmt(r.ergodic_gap),
            fmt(r.nonergodic_gap),
            fmt(r.wall_seconds),
        ));
    }
    out
}

/// Iterates diverge when the objective exceeds this multiple of its
/// initial value.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Decreasing penalty schedule; `k` counts completed (sub)iterations.
/// Chosen so the solver stays close to critical damping as it converges.
pub fn continuation_rho(k: usize, alpha: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let t = std::f64::consts::PI / (alpha * (k as f64 + 1.0));
    t * (1.0 - (t / 2.0).powi(2)).max(0.0).sqrt()
}

/// Assign row `j` to subset `j mod m`; every subset is nonempty.
pub fn partition_subsets(rows: usize, m: usize) -> Result<Vec<Vec<usize>>> {
    if m == 0 || m > rows {
        return Err(Error::Config(format!(
            "cannot split {rows} rows into {m} subsets"
        )));
    }
    let mut subsets = vec![Vec::with_capacity(rows / m + 1); m];
    for j in 0..rows {
        subsets[j % m].push(j);
    }
    Ok(subsets)
}

fn sub_vecs(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `x - H^{-1} grad`, followed by the prox of the nonsmooth term in the
/// H-metric. Entries with `H_i = 0` (pixels the data and penalty never
/// touch) are frozen at their current value.
fn prox_update(prox: &ProxSpec, x: &[f64], grad: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    let mut c: Vec<f64> = Vec::with_capacity(x.len());
    let mut h_safe: Vec<f64> = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        if h[i] > 0.0 {
            c.push(x[i] - grad[i] / h[i]);
            h_safe.push(h[i]);
        } else {
            c.push(x[i]);
            h_safe.push(1.0);
        }
    }
    prox.prox_diag(&mut c, &h_safe)?;
    for i in 0..x.len() {
        if h[i] <= 0.0 {
            c[i] = x[i];
        }
    }
    Ok(c)
}

/// Diagonal of the x-update metric `rho D_A + D_psi`.
fn metric_diag(rho: f64, d_a: &[f64], d_psi: &[f64]) -> Vec<f64> {
    d_a.iter().zip(d_psi).map(|(a, p)| rho * a + p).collect()
}

// ---------------------------------------------------------------------------
// Exact relaxed AL (reference oracle)
// ---------------------------------------------------------------------------

/// State of the exact relaxed AL iteration.
#[derive(Clone, Debug)]
pub struct AlState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub mu: Vec<f64>,
    /// Largest eigenvalue of `A'A`, cached for the inner prox-gradient
    /// solver.
    lipschitz: f64,
}

impl AlState {
    pub fn new(problem: &CompositeProblem, x: Vec<f64>, u: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        check_state_dims(problem, &x, &u, &mu)?;
        let lipschitz = max_eigenvalue(&problem.op, 1e-12, 50_000)?;
        Ok(AlState { x, u, mu, lipschitz })
    }
}

fn check_state_dims(p: &CompositeProblem, x: &[f64], u: &[f64], mu: &[f64]) -> Result<()> {
    if x.len() != p.op.domain_dim() {
        return Err(Error::Shape {
            expected: p.op.domain_dim(),
            got: x.len(),
        });
    }
    if u.len() != p.op.range_dim() || mu.len() != p.op.range_dim() {
        return Err(Error::Shape {
            expected: p.op.range_dim(),
            got: u.len().min(mu.len()),
        });
    }
    Ok(())
}

/// One iteration of the relaxed AL method with an exact x-minimization.
///
/// The x-update solves `min_x phi(x) + rho/2 ||Ax - (u + mu/rho)||^2`
/// exactly: by a dense normal-equation solve when `phi` is absent, and by
/// an inner accelerated prox-gradient loop driven to near machine
/// precision otherwise. Only meant for small problems; it is the oracle
/// the cheap linearized steps are verified against. Requires a zero
/// smooth penalty.
pub fn relaxed_al_step(
    problem: &CompositeProblem,
    state: &mut AlState,
    rho: f64,
    alpha: f64,
) -> Result<()> {
    if !matches!(problem.smooth, SmoothSpec::Zero) {
        return Err(Error::Config(
            "exact AL step supports only a zero smooth penalty".into(),
        ));
    }
    let target: Vec<f64> = state
        .u
        .iter()
        .zip(&state.mu)
        .map(|(u, m)| u + m / rho)
        .collect();
    state.x = match &problem.prox {
        ProxSpec::None => exact_least_squares(&problem.op, &target)?,
        _ => inner_prox_gradient(problem, &state.x, &target, rho, state.lipschitz)?,
    };
    relaxed_u_mu_update(problem, &state.x, &mut state.u, &mut state.mu, rho, alpha)
}

/// Shared u- and mu-update for quadratic loss `1/2||u - y||^2` with
/// relaxation variable `r = alpha A x + (1 - alpha) u`.
fn relaxed_u_mu_update(
    problem: &CompositeProblem,
    x: &[f64],
    u: &mut Vec<f64>,
    mu: &mut [f64],
    rho: f64,
    alpha: f64,
) -> Result<()> {
    let ax = problem.op.apply(x)?;
    relaxed_u_mu_update_from_ax(&problem.y, &ax, u, mu, rho, alpha);
    Ok(())
}

fn relaxed_u_mu_update_from_ax(
    y: &[f64],
    ax: &[f64],
    u: &mut Vec<f64>,
    mu: &mut [f64],
    rho: f64,
    alpha: f64,
) {
    for j in 0..y.len() {
        let r = alpha * ax[j] + (1.0 - alpha) * u[j];
        let u_new = (y[j] - mu[j] + rho * r) / (1.0 + rho);
        mu[j] -= rho * (r - u_new);
        u[j] = u_new;
    }
}

/// Solve `A'A x = A' target` densely (materializing the normal matrix by
/// applying the operator to coordinate vectors).
fn exact_least_squares(op: &LinearOperator, target: &[f64]) -> Result<Vec<f64>> {
    let n = op.domain_dim();
    let mut ata = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let aej = op.apply(&e)?;
        let col = op.apply_adjoint(&aej)?;
        for i in 0..n {
            ata[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    let rhs = DVector::from_vec(op.apply_adjoint(target)?);
    let chol = ata
        .cholesky()
        .ok_or_else(|| Error::Numerical("normal equations are singular".into()))?;
    Ok(chol.solve(&rhs).data.into())
}

/// Accelerated prox-gradient on `min_x phi(x) + rho/2 ||Ax - t||^2`,
/// iterated to near machine precision.
fn inner_prox_gradient(
    problem: &CompositeProblem,
    x0: &[f64],
    target: &[f64],
    rho: f64,
    lipschitz: f64,
) -> Result<Vec<f64>> {
    let step = rho * lipschitz;
    let h = vec![step.max(f64::MIN_POSITIVE); x0.len()];
    let mut x = x0.to_vec();
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let az = problem.op.apply(&z)?;
        let res = sub_vecs(&az, target);
        let mut grad = problem.op.apply_adjoint(&res)?;
        for g in grad.iter_mut() {
            *g *= rho;
        }
        let x_new = prox_update(&problem.prox, &z, &grad, &h)?;
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        let mut max_change = 0.0f64;
        let mut max_val = 0.0f64;
        for i in 0..x.len() {
            max_change = max_change.max((x_new[i] - x[i]).abs());
            max_val = max_val.max(x_new[i].abs());
            z[i] = x_new[i] + beta * (x_new[i] - x[i]);
        }
        x = x_new;
        t = t_new;
        if max_change <= 1e-14 * (1.0 + max_val) {
            return Ok(x);
        }
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Linearized AL with simple relaxation
// ---------------------------------------------------------------------------

/// State of the simple-relaxed linearized AL iteration; keeps `Ax` cached
/// so each step costs one forward and one adjoint application.
#[derive(Clone, Debug)]
pub struct SimpleRelaxedState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub mu: Vec<f64>,
    ax: Vec<f64>,
}

impl SimpleRelaxedState {
    pub fn new(
        problem: &CompositeProblem,
        x: Vec<f64>,
        u: Vec<f64>,
        mu: Vec<f64>,
    ) -> Result<Self> {
        check_state_dims(problem, &x, &u, &mu)?;
        let ax = problem.op.apply(&x)?;
        Ok(SimpleRelaxedState { x, u, mu, ax })
    }
}

/// One iteration of linearized AL with simple relaxation: the x-update is
/// a prox of the nonsmooth term in the `rho D_A + D_psi` metric centered
/// at `x - H^{-1}(grad psi + rho A'(Ax - u) - A' mu)`; u and mu follow the
/// standard relaxed updates.
pub fn lalm_simple_relaxed_step(
    problem: &CompositeProblem,
    state: &mut SimpleRelaxedState,
    rho: f64,
    alpha: f64,
    d_a: &DiagonalMajorizer,
    d_psi: &DiagonalMajorizer,
) -> Result<()> {
    let grad_psi = problem.smooth.grad(&state.x)?;
    let t: Vec<f64> = state
        .ax
        .iter()
        .zip(&state.u)
        .zip(&state.mu)
        .map(|((a, u), m)| rho * (a - u) - m)
        .collect();
    let at = problem.op.apply_adjoint(&t)?;
    let grad: Vec<f64> = grad_psi.iter().zip(&at).map(|(g, a)| g + a).collect();
    let h = metric_diag(rho, &d_a.entries, &d_psi.entries);
    state.x = prox_update(&problem.prox, &state.x, &grad, &h)?;
    state.ax = problem.op.apply(&state.x)?;
    relaxed_u_mu_update_from_ax(&problem.y, &state.ax, &mut state.u, &mut state.mu, rho, alpha);
    Ok(())
}

// ---------------------------------------------------------------------------
// Proposed relaxation, literal form (explicit matrix square root)
// ---------------------------------------------------------------------------

/// State of the literal proposed-relaxation iteration over the redundant
/// split `v = G^{1/2} x`, `G = D_A - A'A`. Holds a dense `G^{1/2}`, so it
/// only suits small problems; it exists to validate the matrix-free forms.
#[derive(Clone, Debug)]
pub struct LiteralRelaxedState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub mu: Vec<f64>,
    pub v: Vec<f64>,
    pub nu: Vec<f64>,
    sqrt_g: DMatrix<f64>,
}

impl LiteralRelaxedState {
    /// Initializes `v = G^{1/2} x` and `nu = 0`, the choices under which
    /// the redundant multiplier provably stays zero.
    pub fn new(
        problem: &CompositeProblem,
        d_a: &DiagonalMajorizer,
        x: Vec<f64>,
        u: Vec<f64>,
        mu: Vec<f64>,
    ) -> Result<Self> {
        check_state_dims(problem, &x, &u, &mu)?;
        let n = problem.op.domain_dim();
        if d_a.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: d_a.len(),
            });
        }
        // G = D_A - A'A, materialized densely.
        let mut g = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = problem.op.apply_adjoint(&problem.op.apply(&e)?)?;
            for i in 0..n {
                g[(i, j)] = -col[i];
            }
            g[(j, j)] += d_a.entries[j];
            e[j] = 0.0;
        }
        let eig = g.symmetric_eigen();
        let lam_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let tol = 1e-8 * lam_max.max(1.0);
        if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l < -tol) {
            return Err(Error::Majorization(format!(
                "diagonal does not dominate A'A: eigenvalue {bad}"
            )));
        }
        let sqrt_vals: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
        let sqrt_g =
            &eig.eigenvectors * DMatrix::from_diagonal(&DVector::from_vec(sqrt_vals)) * eig.eigenvectors.transpose();
        let v = (&sqrt_g * DVector::from_column_slice(&x)).data.into();
        let nu = vec![0.0; n];
        Ok(LiteralRelaxedState {
            x,
            u,
            mu,
            v,
            nu,
            sqrt_g,
        })
    }
}

/// One iteration of the proposed relaxation in its literal form, carrying
/// the redundant variable `v` and its multiplier `nu` explicitly.
pub fn lalm_proposed_literal_step(
    problem: &CompositeProblem,
    state: &mut LiteralRelaxedState,
    rho: f64,
    alpha: f64,
    d_a: &DiagonalMajorizer,
    d_psi: &DiagonalMajorizer,
) -> Result<()> {
    let sqrt_g = &state.sqrt_g;
    let grad_psi = problem.smooth.grad(&state.x)?;
    let ax = problem.op.apply(&state.x)?;
    let res: Vec<f64> = ax
        .iter()
        .zip(&state.u)
        .zip(&state.mu)
        .map(|((a, u), m)| rho * (a - u) - m)
        .collect();
    let at = problem.op.apply_adjoint(&res)?;
    let gx = sqrt_g * DVector::from_column_slice(&state.x);
    let gterm = sqrt_g
        * (rho * (gx - DVector::from_column_slice(&state.v))
            - DVector::from_column_slice(&state.nu));
    let grad: Vec<f64> = (0..state.x.len())
        .map(|i| grad_psi[i] + at[i] + gterm[i])
        .collect();
    let h = metric_diag(rho, &d_a.entries, &d_psi.entries);
    state.x = prox_update(&problem.prox, &state.x, &grad, &h)?;

    relaxed_u_mu_update(problem, &state.x, &mut state.u, &mut state.mu, rho, alpha)?;

    let gx_new = sqrt_g * DVector::from_column_slice(&state.x);
    for i in 0..state.v.len() {
        let r_v = alpha * gx_new[i] + (1.0 - alpha) * state.v[i];
        let v_new = r_v - state.nu[i] / rho;
        state.nu[i] -= rho * (r_v - v_new);
        state.v[i] = v_new;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Proposed relaxation, practical form (general loss interface)
// ---------------------------------------------------------------------------

/// State of the matrix-free proposed relaxation. Alongside the primal and
/// dual variables it carries the recursions `h`, `q = A'(u - y)` and
/// `b = A' mu`, which is what keeps each step at a single forward and a
/// single adjoint application.
#[derive(Clone, Debug)]
pub struct PracticalRelaxedState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub mu: Vec<f64>,
    pub h: Vec<f64>,
    q: Vec<f64>,
    b: Vec<f64>,
}

impl PracticalRelaxedState {
    pub fn new(
        problem: &CompositeProblem,
        d_a: &DiagonalMajorizer,
        x: Vec<f64>,
        u: Vec<f64>,
        mu: Vec<f64>,
    ) -> Result<Self> {
        check_state_dims(problem, &x, &u, &mu)?;
        let ax = problem.op.apply(&x)?;
        let zeta = problem.op.apply_adjoint(&sub_vecs(&ax, &problem.y))?;
        // h = G^{1/2} v + A'y with v = G^{1/2} x collapses to D_A x - A'(Ax - y).
        let h: Vec<f64> = d_a
            .entries
            .iter()
            .zip(&x)
            .zip(&zeta)
            .map(|((d, xi), z)| d * xi - z)
            .collect();
        let q = problem.op.apply_adjoint(&sub_vecs(&u, &problem.y))?;
        let b = problem.op.apply_adjoint(&mu)?;
        Ok(PracticalRelaxedState { x, u, mu, h, q, b })
    }
}

/// One iteration of the proposed relaxation in its practical form:
/// `gamma = rho A'(u - y + mu/rho) + rho h` drives the prox step, and the
/// split variables `u`, `mu` are kept explicitly. The recursions for
/// `A'(u - y)` and `A' mu` reuse the projection of the new iterate, so the
/// step applies the operator once forward and once in adjoint.
pub fn lalm_proposed_practical_step(
    problem: &CompositeProblem,
    state: &mut PracticalRelaxedState,
    rho: f64,
    alpha: f64,
    d_a: &DiagonalMajorizer,
    d_psi: &DiagonalMajorizer,
) -> Result<()> {
    let grad_psi = problem.smooth.grad(&state.x)?;
    // gamma = rho q + b + rho h; x-update gradient at x is
    // grad psi + rho D_A x - gamma.
    let grad: Vec<f64> = (0..state.x.len())
        .map(|i| {
            grad_psi[i] + rho * d_a.entries[i] * state.x[i]
                - (rho * state.q[i] + state.b[i] + rho * state.h[i])
        })
        .collect();
    let h_diag = metric_diag(rho, &d_a.entries, &d_psi.entries);
    state.x = prox_update(&problem.prox, &state.x, &grad, &h_diag)?;

    let ax = problem.op.apply(&state.x)?;
    let zeta = problem.op.apply_adjoint(&sub_vecs(&ax, &problem.y))?;

    relaxed_u_mu_update_from_ax(&problem.y, &ax, &mut state.u, &mut state.mu, rho, alpha);

    for i in 0..state.x.len() {
        let eta = d_a.entries[i] * state.x[i] - zeta[i];
        // image of the relaxation variable under A', relative to A'y
        let aq = alpha * zeta[i] + (1.0 - alpha) * state.q[i];
        let q_new = (-state.b[i] + rho * aq) / (1.0 + rho);
        state.b[i] -= rho * (aq - q_new);
        state.q[i] = q_new;
        state.h[i] = alpha * eta + (1.0 - alpha) * state.h[i];
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Proposed relaxation, quadratic-loss form
// ---------------------------------------------------------------------------

/// State of the quadratic-loss simplification of the proposed relaxation:
/// only the image `g = A'(u - y)` of the split variable survives, plus the
/// `h` recursion. Valid when the dual is initialized consistently,
/// `mu = y - u`.
#[derive(Clone, Debug)]
pub struct QuadraticRelaxedState {
    pub x: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl QuadraticRelaxedState {
    /// Standard initialization `g = A'(Ax - y)`, `h = D_A x - g`,
    /// corresponding to `u = Ax` and `mu = y - u`.
    pub fn new(problem: &CompositeProblem, d_a: &DiagonalMajorizer, x: Vec<f64>) -> Result<Self> {
        let ax = problem.op.apply(&x)?;
        let zeta = problem.op.apply_adjoint(&sub_vecs(&ax, &problem.y))?;
        let h: Vec<f64> = d_a
            .entries
            .iter()
            .zip(&x)
            .zip(&zeta)
            .map(|((d, xi), z)| d * xi - z)
            .collect();
        Ok(QuadraticRelaxedState { x, g: zeta, h })
    }
}

/// One iteration of the quadratic-loss form: `gamma = (rho - 1) g + rho h`,
/// prox step in the `rho D_A + D_psi` metric, then the two scalar-weighted
/// recursions for `g` and `h`. One forward and one adjoint application.
pub fn lalm_proposed_quadratic_step(
    problem: &CompositeProblem,
    state: &mut QuadraticRelaxedState,
    rho: f64,
    alpha: f64,
    d_a: &DiagonalMajorizer,
    d_psi: &DiagonalMajorizer,
) -> Result<()> {
    let grad_psi = problem.smooth.grad(&state.x)?;
    let grad: Vec<f64> = (0..state.x.len())
        .map(|i| {
            grad_psi[i] + rho * d_a.entries[i] * state.x[i]
                - ((rho - 1.0) * state.g[i] + rho * state.h[i])
        })
        .collect();
    let h_diag = metric_diag(rho, &d_a.entries, &d_psi.entries);
    state.x = prox_update(&problem.prox, &state.x, &grad, &h_diag)?;

    let ax = problem.op.apply(&state.x)?;
    let zeta = problem.op.apply_adjoint(&sub_vecs(&ax, &problem.y))?;
    for i in 0..state.x.len() {
        state.g[i] = rho / (rho + 1.0) * (alpha * zeta[i] + (1.0 - alpha) * state.g[i])
            + state.g[i] / (rho + 1.0);
        state.h[i] =
            alpha * (d_a.entries[i] * state.x[i] - zeta[i]) + (1.0 - alpha) * state.h[i];
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Ordered-subsets runners
// ---------------------------------------------------------------------------

/// Result of an ordered-subsets run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub x: Vec<f64>,
    pub records: Vec<ConvergenceRecord>,
    /// Forward applications of the system model over the whole run,
    /// summed across subset operators. The ordered-subsets solvers use
    /// exactly one per subiteration plus one for the warm-start gradient.
    pub forward_count: usize,
    /// Adjoint applications, counted like [`RunOutput::forward_count`].
    pub adjoint_count: usize,
}

struct OsContext {
    sub_ops: Vec<LinearOperator>,
    sub_y: Vec<Vec<f64>>,
    d_l: DiagonalMajorizer,
    metrics: CompositeProblem,
    reference: Option<Vec<f64>>,
    record_timing: bool,
    start: std::time::Instant,
    initial_cost: f64,
}

impl OsContext {
    fn new(
        problem: &CompositeProblem,
        x0: &[f64],
        config: &SolverConfig,
        reference: Option<&[f64]>,
        record_timing: bool,
    ) -> Result<Self> {
        config.validate()?;
        if x0.len() != problem.dim() {
            return Err(Error::Shape {
                expected: problem.dim(),
                got: x0.len(),
            });
        }
        let rows = problem.op.range_dim();
        if rows % config.rows_per_view != 0 {
            return Err(Error::Config(format!(
                "{rows} rows do not divide into views of {} rows",
                config.rows_per_view
            )));
        }
        let views = partition_subsets(rows / config.rows_per_view, config.subsets)?;
        let mut sub_ops = Vec::with_capacity(views.len());
        let mut sub_y = Vec::with_capacity(views.len());
        for view_set in &views {
            let row_set: Vec<usize> = view_set
                .iter()
                .flat_map(|&v| {
                    (v * config.rows_per_view)..((v + 1) * config.rows_per_view)
                })
                .collect();
            sub_ops.push(problem.op.row_subset(&row_set)?);
            sub_y.push(row_set.iter().map(|&j| problem.y[j]).collect());
        }
        let d_l = diag_majorizer_ata(&problem.op, None)?;
        // Cost/RMS tracking uses a separate operator instance so it does
        // not perturb the work-accounting counters of the solve itself.
        let metrics = problem.clone();
        let initial_cost = metrics.cost(x0)?;
        Ok(OsContext {
            sub_ops,
            sub_y,
            d_l,
            metrics,
            reference: reference.map(|r| r.to_vec()),
            record_timing,
            start: std::time::Instant::now(),
            initial_cost,
        })
    }

    /// Regularizer majorizer diagonal in the configured curvature mode.
    fn penalty_diag(
        &self,
        problem: &CompositeProblem,
        config: &SolverConfig,
        x: &[f64],
    ) -> Result<DiagonalMajorizer> {
        match config.d_psi_mode {
            DPsiMode::Huber => problem.smooth.sqs_diag_at(x),
            DPsiMode::MaxCurvature => Ok(problem.smooth.sqs_diag_max(x.len())),
        }
    }

    /// `M * gradient of the m-th partial quadratic loss`.
    fn subset_gradient(&self, m: usize, x: &[f64]) -> Result<Vec<f64>> {
        let op = &self.sub_ops[m];
        let res = sub_vecs(&op.apply(x)?, &self.sub_y[m]);
        let mut g = op.apply_adjoint(&res)?;
        let scale = self.sub_ops.len() as f64;
        for v in g.iter_mut() {
            *v *= scale;
        }
        Ok(g)
    }

    fn record(&self, k: usize, rho: f64, x: &[f64]) -> Result<ConvergenceRecord> {
        let cost = self.metrics.cost(x)?;
        if !cost.is_finite() || cost > DIVERGENCE_FACTOR * self.initial_cost.abs().max(1e-300) {
            return Err(Error::Diverged {
                k,
                cost,
                initial: self.initial_cost,
            });
        }
        let rms_hu = self
            .reference
            .as_deref()
            .map(|r| crate::analysis::rms_difference(x, r))
            .transpose()?;
        Ok(ConvergenceRecord {
            k,
            rho,
            cost,
            rms_hu,
            ergodic_gap: None,
            nonergodic_gap: None,
            wall_seconds: self
                .record_timing
                .then(|| self.start.elapsed().as_secs_f64()),
        })
    }
}

/// Penalty value for subiteration counter `k`.
fn schedule_rho(mode: RhoMode, k: usize, alpha: f64) -> f64 {
    match mode {
        RhoMode::Fixed(r) => r,
        RhoMode::Continuation => continuation_rho(k, alpha),
    }
}

/// Ordered-subsets solver with the proposed relaxation. Each subiteration
/// performs a prox step in the `rho D_L + D_R` metric (with the
/// current-point curvature of the penalty), evaluates one subset gradient,
/// and updates the `g`/`h` recursions; the penalty parameter follows the
/// configured schedule per subiteration.
pub fn os_relaxed_lalm_run(
    problem: &CompositeProblem,
    x0: &[f64],
    config: &SolverConfig,
    reference: Option<&[f64]>,
    record_timing: bool,
) -> Result<RunOutput> {
    os_lalm_run(problem, x0, config, reference, record_timing, true)
}

/// Ordered-subsets solver with the simple relaxation: identical to
/// [`os_relaxed_lalm_run`] except the search direction omits the `h`
/// recursion (`s = rho zeta + (1 - rho) g`).
pub fn os_simple_relaxed_lalm_run(
    problem: &CompositeProblem,
    x0: &[f64],
    config: &SolverConfig,
    reference: Option<&[f64]>,
    record_timing: bool,
) -> Result<RunOutput> {
    os_lalm_run(problem, x0, config, reference, record_timing, false)
}

fn os_lalm_run(
    problem: &CompositeProblem,
    x0: &[f64],
    config: &SolverConfig,
    reference: Option<&[f64]>,
    record_timing: bool,
    proposed: bool,
) -> Result<RunOutput> {
    let ctx = OsContext::new(problem, x0, config, reference, record_timing)?;
    let m_total = ctx.sub_ops.len();
    let alpha = config.alpha;

    let mut x = x0.to_vec();
    // Warm start from the last subset, mirroring where the inner loop
    // leaves off.
    let mut zeta = ctx.subset_gradient(m_total - 1, &x)?;
    let mut g = zeta.clone();
    let mut h: Vec<f64> = ctx
        .d_l
        .entries
        .iter()
        .zip(&x)
        .zip(&zeta)
        .map(|((d, xi), z)| d * xi - z)
        .collect();

    let mut records = vec![ctx.record(0, schedule_rho(config.rho, 0, alpha), &x)?];
    let mut sub_k = 0usize;
    for _ in 1..=config.iterations {
        for m in 0..m_total {
            let rho = schedule_rho(config.rho, sub_k, alpha);
            let s: Vec<f64> = if proposed {
                (0..x.len())
                    .map(|i| rho * (ctx.d_l.entries[i] * x[i] - h[i]) + (1.0 - rho) * g[i])
                    .collect()
            } else {
                zeta.iter().zip(&g).map(|(z, gi)| rho * z + (1.0 - rho) * gi).collect()
            };
            let grad_r = problem.smooth.grad(&x)?;
            let d_r = ctx.penalty_diag(problem, config, &x)?;
            let grad: Vec<f64> = s.iter().zip(&grad_r).map(|(a, b)| a + b).collect();
            let h_diag = metric_diag(rho, &ctx.d_l.entries, &d_r.entries);
            x = prox_update(&problem.prox, &x, &grad, &h_diag)?;

            zeta = ctx.subset_gradient(m, &x)?;
            for i in 0..x.len() {
                g[i] = rho / (rho + 1.0) * (alpha * zeta[i] + (1.0 - alpha) * g[i])
                    + g[i] / (rho + 1.0);
                if proposed {
                    h[i] = alpha * (ctx.d_l.entries[i] * x[i] - zeta[i]) + (1.0 - alpha) * h[i];
                }
            }
            sub_k += 1;
            records.push(ctx.record(sub_k, schedule_rho(config.rho, sub_k, alpha), &x)?);
        }
    }
    let forward_count = ctx.sub_ops.iter().map(|o| o.forward_count()).sum();
    let adjoint_count = ctx.sub_ops.iter().map(|o| o.adjoint_count()).sum();
    Ok(RunOutput {
        x,
        records,
        forward_count,
        adjoint_count,
    })
}

/// Baseline ordered-subsets separable-surrogate solver: a diagonal
/// majorized gradient step per subset, no dual variables.
pub fn os_sqs_run(
    problem: &CompositeProblem,
    x0: &[f64],
    config: &SolverConfig,
    reference: Option<&[f64]>,
    record_timing: bool,
) -> Result<RunOutput> {
    let ctx = OsContext::new(problem, x0, config, reference, record_timing)?;
    let m_total = ctx.sub_ops.len();
    let mut x = x0.to_vec();
    let mut records = vec![ctx.record(0, 1.0, &x)?];
    let mut sub_k = 0usize;
    for _ in 1..=config.iterations {
        for m in 0..m_total {
            let zeta = ctx.subset_gradient(m, &x)?;
            let grad_r = problem.smooth.grad(&x)?;
            let d_r = ctx.penalty_diag(problem, config, &x)?;
            let grad: Vec<f64> = zeta.iter().zip(&grad_r).map(|(a, b)| a + b).collect();
            let h_diag = metric_diag(1.0, &ctx.d_l.entries, &d_r.entries);
            x = prox_update(&problem.prox, &x, &grad, &h_diag)?;
            sub_k += 1;
            records.push(ctx.record(sub_k, 1.0, &x)?);
        }
    }
    let forward_count = ctx.sub_ops.iter().map(|o| o.forward_count()).sum();
    let adjoint_count = ctx.sub_ops.iter().map(|o| o.adjoint_count()).sum();
    Ok(RunOutput {
        x,
        records,
        forward_count,
        adjoint_count,
    })
}

// ---------------------------------------------------------------------------
// Restarted fast gradient method (reference solutions)
// ---------------------------------------------------------------------------

/// Fast (momentum) proximal gradient method in the diagonal majorizer
/// metric `D_L + D_R` (maximum penalty curvature), with function-value
/// adaptive restart. Converges monotonically in practice and is used to
/// generate near-exact reference solutions. Stops after `max_iter`
/// iterations or when the relative objective decrease falls below `tol`.
/// Returns the final iterate and the objective trace.
pub fn fgm_restart_run(
    problem: &CompositeProblem,
    x0: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x0.len() != problem.dim() {
        return Err(Error::Shape {
            expected: problem.dim(),
            got: x0.len(),
        });
    }
    let d_l = diag_majorizer_ata(&problem.op, None)?;
    let d_r = problem.smooth.sqs_diag_max(problem.dim());
    let h = metric_diag(1.0, &d_l.entries, &d_r.entries);

    let mut x = x0.to_vec();
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut costs = vec![problem.cost(&x)?];
    for _ in 0..max_iter {
        let az = problem.op.apply(&z)?;
        let res = sub_vecs(&az, &problem.y);
        let data_grad = problem.op.apply_adjoint(&res)?;
        let smooth_grad = problem.smooth.grad(&z)?;
        let grad: Vec<f64> = data_grad
            .iter()
            .zip(&smooth_grad)
            .map(|(a, b)| a + b)
            .collect();
        let x_new = prox_update(&problem.prox, &z, &grad, &h)?;
        let cost_new = problem.cost(&x_new)?;
        let cost_prev = *costs.last().unwrap();
        if cost_new > cost_prev {
            // restart momentum from the last good iterate
            t = 1.0;
            z = x.clone();
            costs.push(cost_prev);
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        for i in 0..x.len() {
            z[i] = x_new[i] + beta * (x_new[i] - x[i]);
        }
        x = x_new;
        t = t_new;
        costs.push(cost_new);
        let denom = cost_prev.abs().max(1e-300);
        if (cost_prev - cost_new) / denom < tol && costs.len() > 2 {
            break;
        }
    }
    Ok((x, costs))
}
