//! Dense LASSO test instance and the experiment loop that tracks ergodic
//! and non-ergodic duality gaps per iteration for the relaxed linearized
//! AL solvers. Used by the CLI experiment runner and the acceptance tests.

use crate::analysis::{duality_gap, SaddlePointEstimate};
use crate::error::{Error, Result};
use crate::operators::{max_eigenvalue, DiagonalMajorizer, LinearOperator};
use crate::problem::{CompositeProblem, ProxSpec, SmoothSpec};
use crate::solvers::{
    lalm_proposed_practical_step, lalm_simple_relaxed_step, PracticalRelaxedState,
    SimpleRelaxedState,
};
use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A built LASSO instance `min 1/2||Ax - y||^2 + lambda||x||_1` with the
/// standard warm start from the least-norm solution of `Ax = y`.
#[derive(Clone, Debug)]
pub struct LassoInstance {
    pub problem: CompositeProblem,
    pub x_true: Vec<f64>,
    /// Scalar majorizer `lambda_max(A'A) I` of the data Hessian.
    pub d_a: DiagonalMajorizer,
    /// Zero diagonal: the smooth extra term is absent.
    pub d_psi: DiagonalMajorizer,
    /// Least-norm solution `A'(AA')^{-1} y`.
    pub x0: Vec<f64>,
    /// `A x0` (equals `y` for the least-norm start).
    pub u0: Vec<f64>,
    /// `y - u0`.
    pub mu0: Vec<f64>,
}

/// Build a random sparse-recovery instance: `A` is `m x n` with iid
/// standard-normal entries, the truth has `sparsity` nonzero entries drawn
/// iid standard normal at the first positions of a seeded permutation, and
/// `y = A x_true + noise` with iid `N(0, noise_std^2)` noise. Deterministic
/// given `seed`. Requires an underdetermined system (`m < n`) so the
/// least-norm warm start exists.
pub fn build_lasso_instance(
    m: usize,
    n: usize,
    sparsity: usize,
    noise_std: f64,
    lambda: f64,
    seed: u64,
) -> Result<LassoInstance> {
    if m == 0 || n == 0 || sparsity == 0 || sparsity > n {
        return Err(Error::Config("bad lasso instance dimensions".into()));
    }
    if m >= n {
        return Err(Error::Config(
            "lasso instance must be underdetermined (m < n)".into(),
        ));
    }
    if noise_std < 0.0 || lambda <= 0.0 {
        return Err(Error::Config("bad lasso noise or penalty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;

    // Row-major iid Gaussian system matrix.
    let data: Vec<f64> = (0..m * n).map(|_| normal.sample(&mut rng)).collect();
    let op = LinearOperator::dense(m, n, data.clone())?;

    // Sparse ground truth on a seeded support.
    let mut support: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        support.swap(i, j);
    }
    let mut x_true = vec![0.0f64; n];
    for &j in &support[..sparsity] {
        x_true[j] = normal.sample(&mut rng);
    }

    let ax: Vec<f64> = {
        let tmp = op.apply(&x_true)?;
        tmp
    };
    let y: Vec<f64> = ax
        .iter()
        .map(|a| a + noise_std * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng))
        .collect();

    // Least-norm warm start x0 = A'(AA')^{-1} y via a dense factorization.
    let a_mat = DMatrix::from_row_slice(m, n, &data);
    let gram = &a_mat * a_mat.transpose();
    let rhs = DVector::from_column_slice(&y);
    let sol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("AA' is singular".into()))?
        .solve(&rhs);
    let x0: Vec<f64> = (a_mat.transpose() * sol).iter().copied().collect();

    let problem = CompositeProblem::new(op, y, SmoothSpec::Zero, ProxSpec::L1 { lambda })?;
    let u0 = problem.op.apply(&x0)?;
    let mu0: Vec<f64> = problem.y.iter().zip(&u0).map(|(a, b)| a - b).collect();

    let l_max = max_eigenvalue(&problem.op, 1e-12, 50_000)?;
    let d_a = DiagonalMajorizer {
        entries: vec![l_max; n],
    };
    let d_psi = DiagonalMajorizer {
        entries: vec![0.0; n],
    };
    Ok(LassoInstance {
        problem,
        x_true,
        d_a,
        d_psi,
        x0,
        u0,
        mu0,
    })
}

/// The default desk instance: 100 x 400, 20-sparse truth, noise standard
/// deviation 0.1, penalty 1.
pub fn default_lasso_instance(seed: u64) -> Result<LassoInstance> {
    build_lasso_instance(100, 400, 20, 0.1, 1.0, seed)
}

/// Which relaxation the experiment loop runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LassoSolverKind {
    Simple,
    Proposed,
}

/// Per-iteration gap trace of one solver run.
#[derive(Clone, Debug)]
pub struct GapHistory {
    /// Duality gap at the running average of `(x, u)` over iterations
    /// `1..=k`; index 0 is `k = 1`.
    pub ergodic: Vec<f64>,
    /// Duality gap at the current iterate `(x_k, u_k)`.
    pub nonergodic: Vec<f64>,
}

impl GapHistory {
    /// First 1-based iteration whose non-ergodic gap is at or below `tol`.
    pub fn iterations_to_nonergodic(&self, tol: f64) -> Option<usize> {
        self.nonergodic.iter().position(|&g| g <= tol).map(|i| i + 1)
    }
}

/// Run one relaxed solver on the instance for `iterations` steps at fixed
/// `(alpha, rho)`, recording ergodic and non-ergodic duality gaps against
/// the provided saddle estimate after every step.
pub fn run_lasso_solver(
    instance: &LassoInstance,
    kind: LassoSolverKind,
    alpha: f64,
    rho: f64,
    iterations: usize,
    saddle: &SaddlePointEstimate,
) -> Result<GapHistory> {
    let problem = &instance.problem;
    let n = problem.dim();
    let m = problem.y.len();

    let mut ergodic = Vec::with_capacity(iterations);
    let mut nonergodic = Vec::with_capacity(iterations);
    let mut x_sum = vec![0.0f64; n];
    let mut u_sum = vec![0.0f64; m];

    let mut simple_state = None;
    let mut proposed_state = None;
    match kind {
        LassoSolverKind::Simple => {
            simple_state = Some(SimpleRelaxedState::new(
                problem,
                instance.x0.clone(),
                instance.u0.clone(),
                instance.mu0.clone(),
            )?);
        }
        LassoSolverKind::Proposed => {
            proposed_state = Some(PracticalRelaxedState::new(
                problem,
                &instance.d_a,
                instance.x0.clone(),
                instance.u0.clone(),
                instance.mu0.clone(),
            )?);
        }
    }

    for k in 1..=iterations {
        let (x, u): (&[f64], &[f64]) = match kind {
            LassoSolverKind::Simple => {
                let st = simple_state.as_mut().unwrap();
                lalm_simple_relaxed_step(problem, st, rho, alpha, &instance.d_a, &instance.d_psi)?;
                (&st.x, &st.u)
            }
            LassoSolverKind::Proposed => {
                let st = proposed_state.as_mut().unwrap();
                lalm_proposed_practical_step(
                    problem,
                    st,
                    rho,
                    alpha,
                    &instance.d_a,
                    &instance.d_psi,
                )?;
                (&st.x, &st.u)
            }
        };
        for (s, v) in x_sum.iter_mut().zip(x) {
            *s += v;
        }
        for (s, v) in u_sum.iter_mut().zip(u) {
            *s += v;
        }
        let x_bar: Vec<f64> = x_sum.iter().map(|s| s / k as f64).collect();
        let u_bar: Vec<f64> = u_sum.iter().map(|s| s / k as f64).collect();
        ergodic.push(duality_gap(problem, &x_bar, &u_bar, saddle)?);
        nonergodic.push(duality_gap(problem, x, u, saddle)?);
    }
    Ok(GapHistory { ergodic, nonergodic })
}

/// High-accuracy saddle estimate for the instance, from a long run of the
/// restarted fast gradient method started at the warm start.
pub fn lasso_saddle(instance: &LassoInstance, max_iter: usize) -> Result<SaddlePointEstimate> {
    SaddlePointEstimate::from_long_run(&instance.problem, &instance.x0, max_iter)
}
