//! Composite problem definition: quadratic data term, optional smooth
//! edge-preserving regularizer, and a proximable term handled exactly.
//!
//! The objective is
//!
//! ```text
//! F(x) = 1/2 ||A x - y||^2 + R(x) + phi(x)
//! ```
//!
//! where `R` is smooth (possibly zero) and `phi` is one of: nothing, an
//! l1 penalty, or a box indicator. Statistical weighting is folded into
//! `A` and `y` ahead of time (see [`weighted_substitution`]), so solvers
//! only ever see an unweighted quadratic.

use crate::error::{Error, Result};
use crate::operators::{DiagonalMajorizer, LinearOperator};

/// Proximable (possibly nonsmooth) term.
#[derive(Clone, Debug)]
pub enum ProxSpec {
    /// phi = 0; the prox is the identity.
    None,
    /// phi(x) = lambda * ||x||_1.
    L1 { lambda: f64 },
    /// Indicator of the box `[lower, upper]^n`; use infinities for
    /// one-sided constraints such as nonnegativity.
    Box { lower: f64, upper: f64 },
}

impl ProxSpec {
    /// `argmin_z phi(z) + 1/2 ||z - c||^2_H` for diagonal `H > 0`,
    /// computed in place.
    pub fn prox_diag(&self, c: &mut [f64], h: &[f64]) -> Result<()> {
        if c.len() != h.len() {
            return Err(Error::Shape {
                expected: c.len(),
                got: h.len(),
            });
        }
        match self {
            ProxSpec::None => {}
            ProxSpec::L1 { lambda } => {
                for (ci, hi) in c.iter_mut().zip(h) {
                    let t = lambda / hi;
                    *ci = ci.signum() * (ci.abs() - t).max(0.0);
                }
            }
            ProxSpec::Box { lower, upper } => {
                for ci in c.iter_mut() {
                    *ci = ci.clamp(*lower, *upper);
                }
            }
        }
        Ok(())
    }

    /// Function value; returns infinity outside a box (with a small
    /// tolerance so projected iterates evaluate finite).
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ProxSpec::None => 0.0,
            ProxSpec::L1 { lambda } => lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
            ProxSpec::Box { lower, upper } => {
                let tol = 1e-9;
                if x.iter().all(|&v| v >= lower - tol && v <= upper + tol) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Fair potential `delta^2 (|t|/delta - ln(1 + |t|/delta))`: quadratic
/// near zero, asymptotically linear, with curvature bounded by 1.
pub fn fair_potential(t: f64, delta: f64) -> f64 {
    let r = t.abs() / delta;
    delta * delta * (r - r.ln_1p())
}

/// Derivative of the Fair potential: `t / (1 + |t|/delta)`.
pub fn fair_derivative(t: f64, delta: f64) -> f64 {
    t / (1.0 + t.abs() / delta)
}

/// Huber-type curvature `omega(t) = fair_derivative(t)/t = 1/(1+|t|/delta)`,
/// with `omega(0) = 1`. This is the tightest scalar such that the parabola
/// `fair(s) + fair'(s)(t-s) + omega(s)/2 (t-s)^2` majorizes the potential.
pub fn fair_curvature(t: f64, delta: f64) -> f64 {
    1.0 / (1.0 + t.abs() / delta)
}

/// Smooth edge-preserving penalty
///
/// ```text
/// R(x) = sum_d beta_d sum_{(a,b) in pairs_d} kappa_a kappa_b fair(x_a - x_b)
/// ```
///
/// over the four 2-D neighbor directions, with voxel-dependent weights
/// `kappa` equalizing spatial resolution.
#[derive(Clone, Debug)]
pub struct RegularizerSpec {
    nx: usize,
    ny: usize,
    delta: f64,
    /// Per-direction: (pixel pair, premultiplied weight beta*kappa_a*kappa_b).
    weighted_pairs: Vec<(usize, usize, f64)>,
}

impl RegularizerSpec {
    /// `betas` holds one weight per direction in the order
    /// (1,0), (0,1), (1,1), (1,-1); `kappa = None` means all-ones.
    pub fn new(
        nx: usize,
        ny: usize,
        betas: [f64; 4],
        delta: f64,
        kappa: Option<&[f64]>,
    ) -> Result<Self> {
        if delta <= 0.0 {
            return Err(Error::Config("regularizer delta must be positive".into()));
        }
        if betas.iter().any(|&b| b < 0.0) {
            return Err(Error::Config("regularizer weights must be nonnegative".into()));
        }
        if let Some(k) = kappa {
            if k.len() != nx * ny {
                return Err(Error::Shape {
                    expected: nx * ny,
                    got: k.len(),
                });
            }
        }
        const DIRS: [(i32, i32); 4] = [(1, 0), (0, 1), (1, 1), (1, -1)];
        let mut weighted_pairs = Vec::new();
        for (dir, &beta) in DIRS.iter().zip(&betas) {
            if beta == 0.0 {
                continue;
            }
            let op = LinearOperator::finite_difference(nx, ny, *dir)?;
            for &(a, b) in op.difference_pairs().unwrap() {
                let kk = kappa.map_or(1.0, |k| k[a] * k[b]);
                weighted_pairs.push((a, b, beta * kk));
            }
        }
        Ok(RegularizerSpec {
            nx,
            ny,
            delta,
            weighted_pairs,
        })
    }

    pub fn dim(&self) -> usize {
        self.nx * self.ny
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self
            .weighted_pairs
            .iter()
            .map(|&(a, b, w)| w * fair_potential(x[a] - x[b], self.delta))
            .sum())
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut g = vec![0.0; x.len()];
        for &(a, b, w) in &self.weighted_pairs {
            let d = w * fair_derivative(x[a] - x[b], self.delta);
            g[a] += d;
            g[b] -= d;
        }
        Ok(g)
    }

    /// Separable quadratic majorizer diagonal at maximum curvature
    /// (`omega(0) = 1`): each pair contributes `2w` to both endpoints.
    /// Dominates the Hessian everywhere, so it can be computed once.
    pub fn sqs_diag_max(&self) -> DiagonalMajorizer {
        let mut entries = vec![0.0; self.dim()];
        for &(a, b, w) in &self.weighted_pairs {
            entries[a] += 2.0 * w;
            entries[b] += 2.0 * w;
        }
        DiagonalMajorizer { entries }
    }

    /// Separable quadratic majorizer diagonal at the current point, using
    /// the Huber-type curvature of each pair term. Tighter than
    /// [`Self::sqs_diag_max`]; valid as a majorizer only locally, which is
    /// how the ordered-subsets solvers use it.
    pub fn sqs_diag_at(&self, x: &[f64]) -> Result<DiagonalMajorizer> {
        self.check_dim(x)?;
        let mut entries = vec![0.0; self.dim()];
        for &(a, b, w) in &self.weighted_pairs {
            let c = 2.0 * w * fair_curvature(x[a] - x[b], self.delta);
            entries[a] += c;
            entries[b] += c;
        }
        Ok(DiagonalMajorizer { entries })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Smooth penalty beyond the quadratic data term.
#[derive(Clone, Debug)]
pub enum SmoothSpec {
    Zero,
    EdgePreserving(RegularizerSpec),
}

impl SmoothSpec {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            SmoothSpec::Zero => Ok(0.0),
            SmoothSpec::EdgePreserving(r) => r.eval(x),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            SmoothSpec::Zero => Ok(vec![0.0; x.len()]),
            SmoothSpec::EdgePreserving(r) => r.grad(x),
        }
    }

    /// Diagonal dominating the penalty Hessian for all `x` (zeros when the
    /// penalty is absent).
    pub fn sqs_diag_max(&self, dim: usize) -> DiagonalMajorizer {
        match self {
            SmoothSpec::Zero => DiagonalMajorizer {
                entries: vec![0.0; dim],
            },
            SmoothSpec::EdgePreserving(r) => r.sqs_diag_max(),
        }
    }

    /// Current-point curvature diagonal (see [`RegularizerSpec::sqs_diag_at`]).
    pub fn sqs_diag_at(&self, x: &[f64]) -> Result<DiagonalMajorizer> {
        match self {
            SmoothSpec::Zero => Ok(DiagonalMajorizer {
                entries: vec![0.0; x.len()],
            }),
            SmoothSpec::EdgePreserving(r) => r.sqs_diag_at(x),
        }
    }
}

/// The full composite objective bundled with its forward model.
#[derive(Clone, Debug)]
pub struct CompositeProblem {
    pub op: LinearOperator,
    pub y: Vec<f64>,
    pub smooth: SmoothSpec,
    pub prox: ProxSpec,
}

impl CompositeProblem {
    pub fn new(
        op: LinearOperator,
        y: Vec<f64>,
        smooth: SmoothSpec,
        prox: ProxSpec,
    ) -> Result<Self> {
        if y.len() != op.range_dim() {
            return Err(Error::Shape {
                expected: op.range_dim(),
                got: y.len(),
            });
        }
        if let SmoothSpec::EdgePreserving(r) = &smooth {
            if r.dim() != op.domain_dim() {
                return Err(Error::Shape {
                    expected: op.domain_dim(),
                    got: r.dim(),
                });
            }
        }
        Ok(CompositeProblem {
            op,
            y,
            smooth,
            prox,
        })
    }

    pub fn dim(&self) -> usize {
        self.op.domain_dim()
    }

    /// Data-term value `1/2 ||r||^2` for a residual `r = Ax - y`.
    pub fn data_term_from_residual(residual: &[f64]) -> f64 {
        0.5 * residual.iter().map(|v| v * v).sum::<f64>()
    }

    /// Full objective `F(x)`; applies the operator once.
    pub fn cost(&self, x: &[f64]) -> Result<f64> {
        let ax = self.op.apply(x)?;
        let residual: Vec<f64> = ax.iter().zip(&self.y).map(|(a, b)| a - b).collect();
        Ok(Self::data_term_from_residual(&residual)
            + self.smooth.eval(x)?
            + self.prox.eval(x))
    }

    /// Objective evaluated in the split form `1/2||u - y||^2 + R(x) + phi(x)`
    /// (the data term uses `u` in place of `Ax`). Used by duality-gap
    /// computations.
    pub fn cost_split(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        if u.len() != self.y.len() {
            return Err(Error::Shape {
                expected: self.y.len(),
                got: u.len(),
            });
        }
        let residual: Vec<f64> = u.iter().zip(&self.y).map(|(a, b)| a - b).collect();
        Ok(Self::data_term_from_residual(&residual)
            + self.smooth.eval(x)?
            + self.prox.eval(x))
    }
}

/// Fold statistical weights into the data term: returns `(W^{1/2} A,
/// W^{1/2} y)` with an optional extra global scale applied to the operator
/// rows (used for unit conversions). With these substitutions
/// `1/2 ||A~ x - y~||^2 = 1/2 ||Ax - y||^2_W`.
pub fn weighted_substitution(
    op: LinearOperator,
    weights: &[f64],
    y: &[f64],
    row_scale: f64,
) -> Result<(LinearOperator, Vec<f64>)> {
    if weights.len() != op.range_dim() || y.len() != op.range_dim() {
        return Err(Error::Shape {
            expected: op.range_dim(),
            got: weights.len().min(y.len()),
        });
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::Config("statistical weights must be finite and >= 0".into()));
    }
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let y_tilde: Vec<f64> = y.iter().zip(&sqrt_w).map(|(v, s)| v * s).collect();
    let scale: Vec<f64> = sqrt_w.iter().map(|s| s * row_scale).collect();
    let op_tilde = LinearOperator::row_scaled(op, scale)?;
    Ok((op_tilde, y_tilde))
}
