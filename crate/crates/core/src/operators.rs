//! Linear operators with exact adjoints, diagonal majorizers and spectral
//! utilities.
//!
//! Every realization satisfies the adjoint-consistency invariant
//! `<Ax, y> == <x, A'y>` to floating-point accuracy, which the duality-gap
//! and algebraic-equivalence checks elsewhere in the crate rely on.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};

/// Diagonal matrix `D >= A'WA` used to decouple quadratic subproblems.
#[derive(Clone, Debug)]
pub struct DiagonalMajorizer {
    pub entries: Vec<f64>,
}

impl DiagonalMajorizer {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
enum Realization {
    /// Row-major dense matrix.
    Dense { data: Vec<f64> },
    /// Compressed sparse rows; produced by the parallel-beam ray tracer.
    /// All stored values are nonnegative intersection lengths.
    Sparse {
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        vals: Vec<f64>,
    },
    /// First-order finite differences `x[n] - x[n + s]` over an nx-by-ny
    /// image; out-of-bounds neighbor pairs produce no row.
    FiniteDifference { pairs: Vec<(usize, usize)> },
    /// Diagonal left-scaling of another operator: `y = s .* (inner x)`.
    RowScaled {
        inner: Box<LinearOperator>,
        scale: Vec<f64>,
    },
}

#[derive(Debug, Default)]
struct ApplyCounters {
    forward: AtomicUsize,
    adjoint: AtomicUsize,
}

/// A linear map with an exact adjoint.
///
/// Operators are immutable after construction; `apply`/`apply_adjoint` take
/// `&self` and are safe to share across threads. The per-operator counters
/// record how many forward and adjoint applications this instance performed
/// (used by the work-accounting tests).
#[derive(Debug)]
pub struct LinearOperator {
    domain_dim: usize,
    range_dim: usize,
    realization: Realization,
    counters: ApplyCounters,
}

impl Clone for LinearOperator {
    fn clone(&self) -> Self {
        LinearOperator {
            domain_dim: self.domain_dim,
            range_dim: self.range_dim,
            realization: self.realization.clone(),
            counters: ApplyCounters::default(),
        }
    }
}

impl LinearOperator {
    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    pub fn range_dim(&self) -> usize {
        self.range_dim
    }

    /// Number of forward applications performed by this instance.
    pub fn forward_count(&self) -> usize {
        self.counters.forward.load(Ordering::Relaxed)
    }

    /// Number of adjoint applications performed by this instance.
    pub fn adjoint_count(&self) -> usize {
        self.counters.adjoint.load(Ordering::Relaxed)
    }

    pub fn reset_counts(&self) {
        self.counters.forward.store(0, Ordering::Relaxed);
        self.counters.adjoint.store(0, Ordering::Relaxed);
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::dense(n, n, data).expect("identity is well-formed")
    }

    /// Dense row-major matrix.
    pub fn dense(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(LinearOperator {
            domain_dim: cols,
            range_dim: rows,
            realization: Realization::Dense { data },
            counters: ApplyCounters::default(),
        })
    }

    /// Parse the plain-text dense format: first line `rows cols`, then
    /// row-major whitespace-separated values.
    pub fn dense_from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let rows: usize = tokens
            .next()
            .ok_or_else(|| Error::Parse("missing row count".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad row count: {e}")))?;
        let cols: usize = tokens
            .next()
            .ok_or_else(|| Error::Parse("missing column count".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad column count: {e}")))?;
        let data: Vec<f64> = tokens
            .map(|t| {
                t.parse()
                    .map_err(|e| Error::Parse(format!("bad value {t:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        Self::dense(rows, cols, data)
    }

    pub fn dense_from_file(path: &std::path::Path) -> Result<Self> {
        Self::dense_from_text(&std::fs::read_to_string(path)?)
    }

    /// Finite-difference operator `[Cx]_n = x[n] - x[n + s]` on an
    /// nx-by-ny image (row-major, `x[ix + iy*nx]`), dropping pairs whose
    /// neighbor falls outside the image.
    pub fn finite_difference(nx: usize, ny: usize, direction: (i32, i32)) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Shape {
                expected: 1,
                got: 0,
            });
        }
        const DIRS: [(i32, i32); 4] = [(1, 0), (0, 1), (1, 1), (1, -1)];
        if !DIRS.contains(&direction) {
            return Err(Error::Config(format!(
                "unsupported difference direction {direction:?}"
            )));
        }
        let (sx, sy) = direction;
        let mut pairs = Vec::new();
        for iy in 0..ny as i32 {
            for ix in 0..nx as i32 {
                let (jx, jy) = (ix + sx, iy + sy);
                if jx >= 0 && jx < nx as i32 && jy >= 0 && jy < ny as i32 {
                    pairs.push((
                        (ix + iy * nx as i32) as usize,
                        (jx + jy * nx as i32) as usize,
                    ));
                }
            }
        }
        Ok(LinearOperator {
            domain_dim: nx * ny,
            range_dim: pairs.len(),
            realization: Realization::FiniteDifference { pairs },
            counters: ApplyCounters::default(),
        })
    }

    /// Parallel-beam projector over a square-pixel grid centered at the
    /// origin, using exact line/pixel intersection lengths. Rays are traced
    /// once at construction into sparse rows, so the adjoint is the exact
    /// transpose. Row order is view-major: `row = view * num_bins + bin`.
    pub fn parallel_beam(
        nx: usize,
        ny: usize,
        pixel_size: f64,
        num_bins: usize,
        bin_spacing: f64,
        angles: &[f64],
    ) -> Result<Self> {
        if nx == 0 || ny == 0 || num_bins == 0 || angles.is_empty() {
            return Err(Error::Config("empty projector geometry".into()));
        }
        if pixel_size <= 0.0 || bin_spacing <= 0.0 {
            return Err(Error::Config("nonpositive projector spacing".into()));
        }
        let mut row_ptr = Vec::with_capacity(angles.len() * num_bins + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        let mut cells = Vec::new();
        for &theta in angles {
            let (sin_t, cos_t) = theta.sin_cos();
            for bin in 0..num_bins {
                let t = (bin as f64 - (num_bins as f64 - 1.0) / 2.0) * bin_spacing;
                // Ray through (t*cos, t*sin) with direction (-sin, cos).
                trace_ray(
                    nx,
                    ny,
                    pixel_size,
                    (t * cos_t, t * sin_t),
                    (-sin_t, cos_t),
                    &mut cells,
                );
                for &(cell, len) in cells.iter() {
                    col_idx.push(cell);
                    vals.push(len);
                }
                row_ptr.push(col_idx.len());
            }
        }
        Ok(LinearOperator {
            domain_dim: nx * ny,
            range_dim: angles.len() * num_bins,
            realization: Realization::Sparse {
                row_ptr,
                col_idx,
                vals,
            },
            counters: ApplyCounters::default(),
        })
    }

    /// Left-scale an operator by a diagonal: `y = scale .* (inner x)`.
    pub fn row_scaled(inner: LinearOperator, scale: Vec<f64>) -> Result<Self> {
        if scale.len() != inner.range_dim {
            return Err(Error::Shape {
                expected: inner.range_dim,
                got: scale.len(),
            });
        }
        Ok(LinearOperator {
            domain_dim: inner.domain_dim,
            range_dim: inner.range_dim,
            realization: Realization::RowScaled {
                inner: Box::new(inner),
                scale,
            },
            counters: ApplyCounters::default(),
        })
    }

    /// Returns `Ax`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.domain_dim {
            return Err(Error::Shape {
                expected: self.domain_dim,
                got: x.len(),
            });
        }
        self.counters.forward.fetch_add(1, Ordering::Relaxed);
        Ok(self.apply_raw(x, false))
    }

    /// Returns `A'y`.
    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.range_dim {
            return Err(Error::Shape {
                expected: self.range_dim,
                got: y.len(),
            });
        }
        self.counters.adjoint.fetch_add(1, Ordering::Relaxed);
        Ok(self.adjoint_raw(y, false))
    }

    fn apply_raw(&self, x: &[f64], abs: bool) -> Vec<f64> {
        match &self.realization {
            Realization::Dense { data } => {
                let mut out = vec![0.0; self.range_dim];
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &data[i * self.domain_dim..(i + 1) * self.domain_dim];
                    let mut acc = 0.0;
                    for (a, xv) in row.iter().zip(x) {
                        acc += if abs { a.abs() } else { *a } * xv;
                    }
                    *o = acc;
                }
                out
            }
            Realization::Sparse {
                row_ptr,
                col_idx,
                vals,
            } => {
                // Intersection lengths are nonnegative, so |A| = A.
                let _ = abs;
                let mut out = vec![0.0; self.range_dim];
                for i in 0..self.range_dim {
                    let mut acc = 0.0;
                    for k in row_ptr[i]..row_ptr[i + 1] {
                        acc += vals[k] * x[col_idx[k]];
                    }
                    out[i] = acc;
                }
                out
            }
            Realization::FiniteDifference { pairs } => pairs
                .iter()
                .map(|&(a, b)| {
                    if abs {
                        x[a] + x[b]
                    } else {
                        x[a] - x[b]
                    }
                })
                .collect(),
            Realization::RowScaled { inner, scale } => {
                let mut out = inner.apply_raw(x, abs);
                for (o, s) in out.iter_mut().zip(scale) {
                    *o *= if abs { s.abs() } else { *s };
                }
                out
            }
        }
    }

    fn adjoint_raw(&self, y: &[f64], abs: bool) -> Vec<f64> {
        match &self.realization {
            Realization::Dense { data } => {
                let mut out = vec![0.0; self.domain_dim];
                for i in 0..self.range_dim {
                    let row = &data[i * self.domain_dim..(i + 1) * self.domain_dim];
                    let yv = y[i];
                    for (o, a) in out.iter_mut().zip(row) {
                        *o += if abs { a.abs() } else { *a } * yv;
                    }
                }
                out
            }
            Realization::Sparse {
                row_ptr,
                col_idx,
                vals,
            } => {
                let _ = abs;
                let mut out = vec![0.0; self.domain_dim];
                for i in 0..self.range_dim {
                    let yv = y[i];
                    for k in row_ptr[i]..row_ptr[i + 1] {
                        out[col_idx[k]] += vals[k] * yv;
                    }
                }
                out
            }
            Realization::FiniteDifference { pairs } => {
                let mut out = vec![0.0; self.domain_dim];
                for (n, &(a, b)) in pairs.iter().enumerate() {
                    out[a] += y[n];
                    if abs {
                        out[b] += y[n];
                    } else {
                        out[b] -= y[n];
                    }
                }
                out
            }
            Realization::RowScaled { inner, scale } => {
                let scaled: Vec<f64> = y
                    .iter()
                    .zip(scale)
                    .map(|(v, s)| v * if abs { s.abs() } else { *s })
                    .collect();
                inner.adjoint_raw(&scaled, abs)
            }
        }
    }

    /// `|A| x` (entrywise absolute values of the matrix).
    pub fn apply_abs(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.domain_dim {
            return Err(Error::Shape {
                expected: self.domain_dim,
                got: x.len(),
            });
        }
        Ok(self.apply_raw(x, true))
    }

    /// `|A|' y`.
    pub fn apply_abs_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.range_dim {
            return Err(Error::Shape {
                expected: self.range_dim,
                got: y.len(),
            });
        }
        Ok(self.adjoint_raw(y, true))
    }

    /// Pixel pairs of a finite-difference realization (used by the
    /// regularizer); `None` for other realizations.
    pub fn difference_pairs(&self) -> Option<&[(usize, usize)]> {
        match &self.realization {
            Realization::FiniteDifference { pairs } => Some(pairs),
            _ => None,
        }
    }

    /// Restriction of this operator to a subset of its rows, in the given
    /// order. Used to build ordered-subset partial operators; the result
    /// has fresh apply counters.
    pub fn row_subset(&self, rows: &[usize]) -> Result<LinearOperator> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.range_dim) {
            return Err(Error::Shape {
                expected: self.range_dim,
                got: bad,
            });
        }
        let realization = match &self.realization {
            Realization::Dense { data } => {
                let mut sub = Vec::with_capacity(rows.len() * self.domain_dim);
                for &r in rows {
                    sub.extend_from_slice(&data[r * self.domain_dim..(r + 1) * self.domain_dim]);
                }
                Realization::Dense { data: sub }
            }
            Realization::Sparse {
                row_ptr,
                col_idx,
                vals,
            } => {
                let mut new_ptr = Vec::with_capacity(rows.len() + 1);
                let mut new_idx = Vec::new();
                let mut new_vals = Vec::new();
                new_ptr.push(0);
                for &r in rows {
                    new_idx.extend_from_slice(&col_idx[row_ptr[r]..row_ptr[r + 1]]);
                    new_vals.extend_from_slice(&vals[row_ptr[r]..row_ptr[r + 1]]);
                    new_ptr.push(new_idx.len());
                }
                Realization::Sparse {
                    row_ptr: new_ptr,
                    col_idx: new_idx,
                    vals: new_vals,
                }
            }
            Realization::FiniteDifference { pairs } => Realization::FiniteDifference {
                pairs: rows.iter().map(|&r| pairs[r]).collect(),
            },
            Realization::RowScaled { inner, scale } => Realization::RowScaled {
                inner: Box::new(inner.row_subset(rows)?),
                scale: rows.iter().map(|&r| scale[r]).collect(),
            },
        };
        Ok(LinearOperator {
            domain_dim: self.domain_dim,
            range_dim: rows.len(),
            realization,
            counters: ApplyCounters::default(),
        })
    }
}

/// `diag{|A|' W |A| 1}`, the classic separable majorizer of `A'WA`.
/// With `weights = None` this is `diag{|A|'|A| 1}`.
pub fn diag_majorizer_ata(
    op: &LinearOperator,
    weights: Option<&[f64]>,
) -> Result<DiagonalMajorizer> {
    let ones = vec![1.0; op.domain_dim()];
    let mut mid = op.apply_abs(&ones)?;
    if let Some(w) = weights {
        if w.len() != op.range_dim() {
            return Err(Error::Shape {
                expected: op.range_dim(),
                got: w.len(),
            });
        }
        if w.iter().any(|&v| v < 0.0) {
            return Err(Error::Config("negative majorizer weights".into()));
        }
        for (m, wv) in mid.iter_mut().zip(w) {
            *m *= wv;
        }
    }
    let entries = op.apply_abs_adjoint(&mid)?;
    debug_assert!(entries.iter().all(|e| e.is_finite() && *e >= 0.0));
    Ok(DiagonalMajorizer { entries })
}

/// Largest eigenvalue of `A'A` by power iteration, to relative accuracy
/// `tol`. The start vector is all-ones plus a fixed deterministic
/// perturbation so repeated runs agree bit-for-bit.
pub fn max_eigenvalue(op: &LinearOperator, tol: f64, max_iter: usize) -> Result<f64> {
    if tol <= 0.0 {
        return Err(Error::Config("power iteration tol must be positive".into()));
    }
    let n = op.domain_dim();
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.01 * ((i as f64 + 1.0) * 12.9898).sin())
        .collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let av = op.apply(&v)?;
        let mut w = op.apply_adjoint(&av)?;
        // Rayleigh quotient with unit-norm v.
        let new_lambda: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let norm = normalize(&mut w);
        if norm == 0.0 {
            return Ok(0.0); // A'A v = 0: zero operator on this subspace
        }
        let done = (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(f64::MIN_POSITIVE);
        lambda = new_lambda;
        v = w;
        if done {
            return Ok(lambda);
        }
    }
    Err(Error::NoConvergence {
        max_iter,
        last: lambda,
    })
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Exact intersection lengths of one ray with the pixel grid.
///
/// The image occupies `[-nx*h/2, nx*h/2] x [-ny*h/2, ny*h/2]` with pixel
/// `(ix, iy)` at index `ix + iy*nx`. Amanatides-Woo style traversal.
fn trace_ray(
    nx: usize,
    ny: usize,
    h: f64,
    origin: (f64, f64),
    dir: (f64, f64),
    cells: &mut Vec<(usize, f64)>,
) {
    cells.clear();
    let (x0, y0) = origin;
    let (dx, dy) = dir;
    let xmin = -(nx as f64) * h / 2.0;
    let ymin = -(ny as f64) * h / 2.0;
    let xmax = -xmin;
    let ymax = -ymin;

    // Slab intersection of the ray parameter s with the bounding box.
    let mut s_in = f64::NEG_INFINITY;
    let mut s_out = f64::INFINITY;
    for (p, d, lo, hi) in [(x0, dx, xmin, xmax), (y0, dy, ymin, ymax)] {
        if d.abs() < 1e-12 {
            if p <= lo || p >= hi {
                return;
            }
        } else {
            let (a, b) = ((lo - p) / d, (hi - p) / d);
            s_in = s_in.max(a.min(b));
            s_out = s_out.min(a.max(b));
        }
    }
    if s_in >= s_out {
        return;
    }

    let cell_of = |s: f64| -> (i64, i64) {
        let px = x0 + s * dx;
        let py = y0 + s * dy;
        (
            (((px - xmin) / h).floor() as i64).clamp(0, nx as i64 - 1),
            (((py - ymin) / h).floor() as i64).clamp(0, ny as i64 - 1),
        )
    };

    let mut s = s_in;
    let (mut ix, mut iy) = cell_of(s_in + 1e-12 * (s_out - s_in).max(1.0));
    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let next_cross = |i: i64, p: f64, d: f64, lo: f64, step: i64| -> f64 {
        if d.abs() < 1e-12 {
            f64::INFINITY
        } else {
            let boundary = lo + (i + if step > 0 { 1 } else { 0 }) as f64 * h;
            (boundary - p) / d
        }
    };
    let mut sx = next_cross(ix, x0, dx, xmin, step_x);
    let mut sy = next_cross(iy, y0, dy, ymin, step_y);

    loop {
        let s_next = sx.min(sy).min(s_out);
        let len = s_next - s;
        if len > 0.0 {
            cells.push(((ix + iy * nx as i64) as usize, len));
        }
        if s_next >= s_out {
            break;
        }
        if sx <= sy {
            ix += step_x;
            if ix < 0 || ix >= nx as i64 {
                break;
            }
            sx = next_cross(ix, x0, dx, xmin, step_x);
        } else {
            iy += step_y;
            if iy < 0 || iy >= ny as i64 {
                break;
            }
            sy = next_cross(iy, y0, dy, ymin, step_y);
        }
        s = s_next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn norm(a: &[f64]) -> f64 {
        dot(a, a).sqrt()
    }

    fn adjoint_check(op: &LinearOperator, rng: &mut ChaCha8Rng, trials: usize) {
        for _ in 0..trials {
            let x: Vec<f64> = (0..op.domain_dim()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let y: Vec<f64> = (0..op.range_dim()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let ax = op.apply(&x).unwrap();
            let aty = op.apply_adjoint(&y).unwrap();
            let lhs = dot(&ax, &y);
            let rhs = dot(&x, &aty);
            let scale = norm(&ax) * norm(&y) + norm(&x) * norm(&aty);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * scale.max(1e-300),
                "adjoint violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn identity_apply() {
        let op = LinearOperator::identity(2);
        assert_eq!(op.apply(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(op.apply_adjoint(&[5.0, -1.0]).unwrap(), vec![5.0, -1.0]);
    }

    #[test]
    fn dense_apply_and_adjoint() {
        let op = LinearOperator::dense(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(op.apply(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        assert_eq!(op.apply_adjoint(&[1.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(op.apply(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn apply_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..12).map(|_| rng.gen::<f64>() - 0.5).collect();
        let op = LinearOperator::dense(3, 4, data).unwrap();
        let x1: Vec<f64> = (0..4).map(|_| rng.gen()).collect();
        let x2: Vec<f64> = (0..4).map(|_| rng.gen()).collect();
        let comb: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let lhs = op.apply(&comb).unwrap();
        let a1 = op.apply(&x1).unwrap();
        let a2 = op.apply(&x2).unwrap();
        for i in 0..3 {
            assert!((lhs[i] - (2.0 * a1[i] - 3.0 * a2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let op = LinearOperator::dense(2, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(op.apply(&[1.0]), Err(Error::Shape { .. })));
        assert!(matches!(
            op.apply_adjoint(&[1.0, 2.0, 3.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn dense_text_roundtrip() {
        let op = LinearOperator::dense_from_text("2 2\n1 2\n3 4\n").unwrap();
        assert_eq!(op.apply(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        assert!(LinearOperator::dense_from_text("2 2\n1 2 3").is_err());
    }

    #[test]
    fn majorizer_identity_and_hand_example() {
        let id = LinearOperator::identity(3);
        let d = diag_majorizer_ata(&id, None).unwrap();
        assert_eq!(d.entries, vec![1.0, 1.0, 1.0]);

        // |A|1 = (3,7), |A|'(3,7) = (24,34)
        let op = LinearOperator::dense(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = diag_majorizer_ata(&op, None).unwrap();
        assert_eq!(d.entries, vec![24.0, 34.0]);
    }

    #[test]
    fn weighted_majorizer_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, n) = (6, 4);
        let data: Vec<f64> = (0..m * n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let w: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        let op = LinearOperator::dense(m, n, data.clone()).unwrap();
        let d = diag_majorizer_ata(&op, Some(&w)).unwrap();
        // brute force |A|' diag(w) |A| 1
        for j in 0..n {
            let mut expect = 0.0;
            for i in 0..m {
                let mut rowsum = 0.0;
                for k in 0..n {
                    rowsum += data[i * n + k].abs();
                }
                expect += data[i * n + j].abs() * w[i] * rowsum;
            }
            assert!((d.entries[j] - expect).abs() < 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn majorizer_dominates_ata() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, n) = (12, 7);
        let data: Vec<f64> = (0..m * n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let w: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        let op = LinearOperator::dense(m, n, data).unwrap();
        let d = diag_majorizer_ata(&op, Some(&w)).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let ax = op.apply(&x).unwrap();
            let wax: f64 = ax.iter().zip(&w).map(|(a, wv)| a * a * wv).sum();
            let dx: f64 = x.iter().zip(&d.entries).map(|(xv, dv)| xv * xv * dv).sum();
            let nx: f64 = dot(&x, &x);
            assert!(dx - wax >= -1e-9 * nx * d.max_entry());
        }
    }

    #[test]
    fn power_iteration_identity_and_diagonal() {
        let id = LinearOperator::identity(4);
        let l = max_eigenvalue(&id, 1e-12, 1000).unwrap();
        assert!((l - 1.0).abs() < 1e-10);

        // A with A'A = diag(1,2,3)
        let a = LinearOperator::dense(
            3,
            3,
            vec![1.0, 0.0, 0.0, 0.0, 2f64.sqrt(), 0.0, 0.0, 0.0, 3f64.sqrt()],
        )
        .unwrap();
        let l = max_eigenvalue(&a, 1e-12, 10000).unwrap();
        assert!((l - 3.0).abs() < 1e-8);
    }

    #[test]
    fn power_iteration_matches_eigendecomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, n) = (20, 10);
        let data: Vec<f64> = (0..m * n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let op = LinearOperator::dense(m, n, data.clone()).unwrap();
        let a = nalgebra::DMatrix::from_row_slice(m, n, &data);
        let ata = a.transpose() * &a;
        let eig = nalgebra::SymmetricEigen::new(ata);
        let truth = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let l = max_eigenvalue(&op, 1e-10, 100000).unwrap();
        assert!((l - truth).abs() <= 1e-6 * truth);
    }

    #[test]
    fn power_iteration_nonconvergence_reports_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..100).map(|_| rng.gen::<f64>() - 0.5).collect();
        let op = LinearOperator::dense(10, 10, data).unwrap();
        match max_eigenvalue(&op, 1e-15, 2) {
            Err(Error::NoConvergence { last, .. }) => assert!(last.is_finite()),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn max_eigenvalue_bounded_by_majorizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data: Vec<f64> = (0..60).map(|_| rng.gen::<f64>() - 0.5).collect();
        let op = LinearOperator::dense(10, 6, data).unwrap();
        let d = diag_majorizer_ata(&op, None).unwrap();
        let l = max_eigenvalue(&op, 1e-10, 100000).unwrap();
        assert!(l <= d.max_entry() * (1.0 + 1e-9));
    }

    #[test]
    fn finite_difference_basics() {
        // constant image -> zero
        let op = LinearOperator::finite_difference(4, 4, (1, 0)).unwrap();
        let c = vec![3.5; 16];
        assert!(op.apply(&c).unwrap().iter().all(|&v| v == 0.0));

        // 2x1 image (a,b), direction (1,0) -> single entry a-b
        let op = LinearOperator::finite_difference(2, 1, (1, 0)).unwrap();
        assert_eq!(op.range_dim(), 1);
        assert_eq!(op.apply(&[5.0, 2.0]).unwrap(), vec![3.0]);

        assert!(LinearOperator::finite_difference(0, 4, (1, 0)).is_err());
        assert!(LinearOperator::finite_difference(4, 4, (2, 0)).is_err());
    }

    #[test]
    fn adjoint_consistency_all_realizations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..48).map(|_| rng.gen::<f64>() - 0.5).collect();
        let dense = LinearOperator::dense(8, 6, data).unwrap();
        adjoint_check(&dense, &mut rng, 20);

        for dir in [(1, 0), (0, 1), (1, 1), (1, -1)] {
            let fd = LinearOperator::finite_difference(8, 8, dir).unwrap();
            adjoint_check(&fd, &mut rng, 20);
        }

        let angles: Vec<f64> = (0..12).map(|i| i as f64 * std::f64::consts::PI / 12.0).collect();
        let proj = LinearOperator::parallel_beam(16, 16, 1.0, 24, 1.0, &angles).unwrap();
        adjoint_check(&proj, &mut rng, 20);

        let scale: Vec<f64> = (0..proj.range_dim()).map(|_| rng.gen::<f64>()).collect();
        let scaled = LinearOperator::row_scaled(proj, scale).unwrap();
        adjoint_check(&scaled, &mut rng, 20);
    }

    #[test]
    fn projector_axis_aligned_ray_lengths() {
        // Single vertical ray (theta = 0) through the middle of a 4x4 grid of
        // unit pixels: total intersection length equals the grid height.
        let proj = LinearOperator::parallel_beam(4, 4, 1.0, 1, 1.0, &[0.0]).unwrap();
        let ones = vec![1.0; 16];
        let sino = proj.apply(&ones).unwrap();
        assert!((sino[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn projector_diagonal_ray_total_length() {
        // 45-degree rays: sum over all bins of A*1 equals total path length
        // through the square; check the center bin crosses the diagonal.
        let theta = std::f64::consts::FRAC_PI_4;
        let proj = LinearOperator::parallel_beam(8, 8, 1.0, 1, 1.0, &[theta]).unwrap();
        let ones = vec![1.0; 64];
        let sino = proj.apply(&ones).unwrap();
        assert!((sino[0] - 8.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn row_subset_matches_full_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f64> = (0..30).map(|_| rng.gen::<f64>() - 0.5).collect();
        let op = LinearOperator::dense(6, 5, data).unwrap();
        let scale: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() + 0.5).collect();
        let scaled = LinearOperator::row_scaled(op, scale).unwrap();
        let rows = [4, 0, 2];
        let sub = scaled.row_subset(&rows).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.gen()).collect();
        let full = scaled.apply(&x).unwrap();
        let part = sub.apply(&x).unwrap();
        for (i, &r) in rows.iter().enumerate() {
            assert_eq!(part[i], full[r]);
        }
        adjoint_check(&sub, &mut rng, 10);
        assert!(scaled.row_subset(&[6]).is_err());
    }

    #[test]
    fn apply_counters_track_calls() {
        let op = LinearOperator::identity(3);
        let _ = op.apply(&[1.0, 2.0, 3.0]).unwrap();
        let _ = op.apply(&[1.0, 2.0, 3.0]).unwrap();
        let _ = op.apply_adjoint(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(op.forward_count(), 2);
        assert_eq!(op.adjoint_count(), 1);
        op.reset_counts();
        assert_eq!(op.forward_count(), 0);
    }
}
