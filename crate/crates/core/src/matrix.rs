//! Dense matrix kernels shared by the team and control modules.
//!
//! Everything here is a pure function of its inputs. Matrices are plain
//! `nalgebra::DMatrix<f64>`; the helpers add the pseudo-inverse conventions
//! and the tolerance rules the rest of the crate relies on.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
        }
    }
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Result<Self> {
        if !(abs_tol.is_finite() && rel_tol.is_finite() && abs_tol >= 0.0 && rel_tol >= 0.0) {
            return Err(Error::InvalidMatrix(format!(
                "tolerances must be finite and nonnegative, got abs={abs_tol} rel={rel_tol}"
            )));
        }
        Ok(Tolerance { abs_tol, rel_tol })
    }

    /// Same absolute and relative tolerance.
    pub fn uniform(tol: f64) -> Result<Self> {
        Self::new(tol, tol)
    }

    pub fn accepts(&self, residual: f64, scale: f64) -> bool {
        residual <= self.abs_tol + self.rel_tol * scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Containment {
    pub contained: bool,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinNormSolution {
    pub solution: Mat,
    pub residual: f64,
    pub consistent: bool,
}

fn ensure_finite(a: &Mat, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidMatrix(format!("{what} has non-finite entries")))
    }
}

/// Moore-Penrose pseudo-inverse with the default tolerance.
pub fn pinv(a: &Mat) -> Result<Mat> {
    pinv_with(a, &Tolerance::default())
}

/// Pseudo-inverse. Singular values at or below
/// `max(rows, cols) * sigma_max * rel_tol` are treated as zero.
///
/// nalgebra's bidiagonal SVD occasionally loses accuracy on rank-deficient
/// inputs, so its result is checked against the Penrose conditions. On a
/// failed check the singular triplets are recomputed from the symmetric
/// eigendecomposition of `[[0, A], [Aᵀ, 0]]`, whose eigenvalues are `±σ_k`
/// with eigenvectors `(u_k, ±v_k) / √2`.
pub fn pinv_with(a: &Mat, tol: &Tolerance) -> Result<Mat> {
    ensure_finite(a, "pinv input")?;
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(Mat::zeros(n, m));
    }
    let fast = pinv_bidiagonal(a, tol);
    if penrose_error(a, &fast) <= 1e-11 {
        return Ok(fast);
    }
    Ok(pinv_symmetric(a, tol))
}

fn pinv_bidiagonal(a: &Mat, tol: &Tolerance) -> Mat {
    let (m, n) = a.shape();
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let sigma_max = svd.singular_values.amax();
    let cutoff = m.max(n) as f64 * sigma_max * tol.rel_tol;
    let mut out = Mat::zeros(n, m);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        out += (v_t.row(k).transpose() / s) * u.column(k).transpose();
    }
    out
}

fn jordan_wielandt(a: &Mat) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let (m, n) = a.shape();
    let mut jw = Mat::zeros(m + n, m + n);
    jw.view_mut((0, m), (m, n)).copy_from(a);
    jw.view_mut((m, 0), (n, m)).copy_from(&a.transpose());
    SymmetricEigen::new(jw)
}

fn pinv_symmetric(a: &Mat, tol: &Tolerance) -> Mat {
    let (m, n) = a.shape();
    let eig = jordan_wielandt(a);
    let sigma_max = eig.eigenvalues.amax();
    let cutoff = m.max(n) as f64 * sigma_max * tol.rel_tol;
    // Summing over whole eigenspaces makes the result independent of the
    // basis chosen for repeated singular values.
    let mut out = Mat::zeros(n, m);
    for (k, &s) in eig.eigenvalues.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let w = eig.eigenvectors.column(k);
        out += (w.rows(m, n) * w.rows(0, m).transpose()) * (2.0 / s);
    }
    out
}

/// Largest violation of the four Penrose conditions, each scaled by the
/// size of the quantity it constrains.
fn penrose_error(a: &Mat, x: &Mat) -> f64 {
    let ax = a * x;
    let xa = x * a;
    let e1 = (&ax * a - a).amax() / (1.0 + a.amax());
    let e2 = (&xa * x - x).amax() / (1.0 + x.amax());
    let e3 = (&ax - ax.transpose()).amax() / (1.0 + ax.amax());
    let e4 = (&xa - xa.transpose()).amax() / (1.0 + xa.amax());
    e1.max(e2).max(e3).max(e4)
}

/// Singular values in decreasing order.
pub fn singular_values(a: &Mat) -> Vec<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Vec::new();
    }
    let mut vals: Vec<f64> = jordan_wielandt(a).eigenvalues.iter().cloned().collect();
    vals.sort_by(|x, y| y.total_cmp(x));
    vals.truncate(m.min(n));
    vals.iter_mut().for_each(|v| *v = v.max(0.0));
    vals
}

/// Tests whether every column of `target` lies in the column space of
/// `candidate` by projecting onto it.
pub fn colspace_contains(target: &Mat, candidate: &Mat, tol: &Tolerance) -> Result<Containment> {
    if target.nrows() != candidate.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "target has {} rows, candidate has {}",
            target.nrows(),
            candidate.nrows()
        )));
    }
    ensure_finite(target, "target")?;
    let projector = candidate * pinv_with(candidate, tol)?;
    let mut contained = true;
    let mut max_residual: f64 = 0.0;
    for c in target.column_iter() {
        let r = (&projector * c - c).norm();
        max_residual = max_residual.max(r);
        if !tol.accepts(r, c.norm()) {
            contained = false;
        }
    }
    Ok(Containment {
        contained,
        max_residual,
    })
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn solve_minimum_norm(a: &Mat, b: &Mat, tol: &Tolerance) -> Result<MinNormSolution> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "system matrix has {} rows, right-hand side has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    ensure_finite(b, "right-hand side")?;
    let solution = pinv_with(a, tol)? * b;
    let residual = (a * &solution - b).norm();
    let consistent = tol.accepts(residual, b.norm());
    Ok(MinNormSolution {
        solution,
        residual,
        consistent,
    })
}

/// `trace(G Σ Gᵀ)`, the expected squared norm of `G Ξ` for `Ξ ~ N(0, Σ)`.
pub fn quad_cost(m_eff: &Mat, sigma: &Mat) -> Result<f64> {
    if m_eff.ncols() != sigma.nrows() || !sigma.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "effective map is {}x{}, covariance is {}x{}",
            m_eff.nrows(),
            m_eff.ncols(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    check_symmetric(sigma, &Tolerance::default())?;
    Ok((m_eff * sigma * m_eff.transpose()).trace())
}

pub fn check_symmetric(sigma: &Mat, tol: &Tolerance) -> Result<()> {
    if !sigma.is_square() {
        return Err(Error::InvalidCovariance(format!(
            "covariance must be square, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    ensure_finite(sigma, "covariance")?;
    let asym = (sigma - sigma.transpose()).amax();
    if !tol.accepts(asym, sigma.amax()) {
        return Err(Error::InvalidCovariance(format!(
            "covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Smallest eigenvalue of the symmetric part of a square matrix.
pub fn min_eigenvalue(sigma: &Mat) -> f64 {
    if sigma.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// A factor `F` with `F Fᵀ = Σ` for a symmetric PSD `Σ`; eigenvalues that
/// round to slightly negative values are clipped at zero.
pub fn gaussian_factor(sigma: &Mat) -> Mat {
    let n = sigma.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut f = eig.eigenvectors.clone();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        f.column_mut(k).scale_mut(s);
    }
    f
}

/// Exact-zero test for authored data (no tolerance).
pub fn is_exact_zero(a: &Mat) -> bool {
    a.iter().all(|&v| v == 0.0)
}

/// Stacks matrices vertically. All inputs must share `cols` columns.
pub fn vstack(blocks: &[&Mat], cols: usize) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Concatenates matrices horizontally. All inputs must share `rows` rows.
pub fn hstack(blocks: &[&Mat], rows: usize) -> Mat {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Block-diagonal matrix.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Row-array form used by the file formats.
pub fn to_rows(a: &Mat) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

/// Builds a matrix from row arrays. An empty outer array is a 0x0 matrix.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    let m = Mat::from_fn(n_rows, n_cols, |i, j| rows[i][j]);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}
