//! Small dense helpers shared by the geometry and solver layers.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value threshold used for every rank decision.
pub const RANK_RTOL: f64 = 1e-10;

/// Singular values of `m`, sorted in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rtol` times the largest one.
pub fn numerical_rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        None => 0,
        Some(&0.0) => 0,
        Some(&max) => s.iter().filter(|&&x| x > rtol * max).count(),
    }
}

/// Minimum-norm least-squares solution of `a * x = b`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let max = svd.singular_values.max();
    let eps = if max > 0.0 { RANK_RTOL * max } else { 0.0 };
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn null_space(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to a square matrix so the full right-singular basis is available.
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let max = svd.singular_values.max();
    let kernel: Vec<usize> = (0..n).filter(|&i| max == 0.0 || svd.singular_values[i] <= rtol * max).collect();
    let mut out = DMatrix::zeros(n, kernel.len());
    for (c, &i) in kernel.iter().enumerate() {
        out.set_column(c, &v_t.row(i).transpose());
    }
    out
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Options for [`newton`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Absolute tolerance on the infinity norm of the residual, multiplied by
    /// `1 + |u|_inf`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NewtonFailure<E> {
    Diverged { iterations: usize, residual: f64 },
    Singular,
    Residual(E),
}

/// Newton iteration with a central-difference Jacobian of `residual`.
///
/// The Jacobian is refreshed only when the residual stops contracting by at
/// least a factor of ten per iteration. Returns the root and the number of
/// iterations used.
pub fn newton<E, F>(mut residual: F, mut u: DVector<f64>, opts: NewtonOptions) -> Result<(DVector<f64>, usize), NewtonFailure<E>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, E>,
{
    let dim = u.len();
    let mut r = residual(&u).map_err(NewtonFailure::Residual)?;
    let mut last_norm = inf_norm(&r);
    let mut lu = None;
    let mut refresh = true;
    for iter in 0..opts.max_iter {
        // The Jacobian is always formed once so that a singular system is
        // reported even when the initial guess already satisfies it.
        if refresh || lu.is_none() {
            let jac = fd_jacobian(&mut residual, &u, r.len()).map_err(NewtonFailure::Residual)?;
            let fact = jac.lu();
            let diag = fact.u().diagonal();
            let dmax = diag.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            let dmin = diag.iter().fold(f64::INFINITY, |a, x| a.min(x.abs()));
            if dim > 0 && (dmax == 0.0 || dmin <= SINGULAR_PIVOT_RTOL * dmax) {
                return Err(NewtonFailure::Singular);
            }
            lu = Some(fact);
        }
        let scale = 1.0 + inf_norm(&u);
        if last_norm <= opts.tol * scale {
            polish(&mut residual, &mut u, &mut last_norm, lu.as_ref());
            return Ok((u, iter));
        }
        let delta = lu.as_ref().and_then(|f| f.solve(&(-&r))).ok_or(NewtonFailure::Singular)?;
        u += &delta;
        r = residual(&u).map_err(NewtonFailure::Residual)?;
        let norm = inf_norm(&r);
        // Stagnation at the rounding floor counts as convergence when close.
        let tiny_update = inf_norm(&delta) <= 4.0 * f64::EPSILON * (1.0 + inf_norm(&u));
        if tiny_update && norm <= 1e3 * opts.tol * (1.0 + inf_norm(&u)) {
            return Ok((u, iter + 1));
        }
        refresh = !(norm <= 0.1 * last_norm);
        last_norm = norm;
    }
    let scale = 1.0 + inf_norm(&u);
    if last_norm <= opts.tol * scale {
        return Ok((u, opts.max_iter));
    }
    Err(NewtonFailure::Diverged { iterations: opts.max_iter, residual: last_norm / scale })
}

/// Pivot ratio below which a finite-difference Jacobian is treated as singular.
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-10;

/// One extra chord step at a converged point, kept only if it lowers the
/// residual. Pushes the root to the rounding floor at the cost of one
/// residual evaluation.
fn polish<E, F>(residual: &mut F, u: &mut DVector<f64>, norm: &mut f64, lu: Option<&nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>)
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, E>,
{
    let (Some(lu), true) = (lu, *norm > 0.0) else {
        return;
    };
    let Ok(r) = residual(u) else {
        return;
    };
    let Some(delta) = lu.solve(&(-r)) else {
        return;
    };
    let candidate = &*u + delta;
    if let Ok(rc) = residual(&candidate) {
        let nc = inf_norm(&rc);
        if nc < *norm {
            *u = candidate;
            *norm = nc;
        }
    }
}

/// Central-difference Jacobian with step `1e-6 (1 + |u_j|)`.
pub fn fd_jacobian<E, F>(residual: &mut F, u: &DVector<f64>, rows: usize) -> Result<DMatrix<f64>, E>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, E>,
{
    let mut jac = DMatrix::zeros(rows, u.len());
    let mut probe = u.clone();
    for j in 0..u.len() {
        let step = 1e-6 * (1.0 + u[j].abs());
        probe[j] = u[j] + step;
        let rp = residual(&probe)?;
        probe[j] = u[j] - step;
        let rm = residual(&probe)?;
        probe[j] = u[j];
        jac.set_column(j, &((rp - rm) / (2.0 * step)));
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_rank_deficient_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(numerical_rank(&m, RANK_RTOL), 2);
        assert_eq!(numerical_rank(&DMatrix::zeros(2, 2), RANK_RTOL), 0);
    }

    #[test]
    fn null_space_is_orthogonal_to_rows() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 0.5]);
        let k = null_space(&m, RANK_RTOL);
        assert_eq!(k.ncols(), 2);
        assert!((&m * &k).amax() < 1e-14);
    }

    #[test]
    fn newton_finds_cube_root() {
        let f = |u: &DVector<f64>| -> Result<DVector<f64>, ()> { Ok(DVector::from_element(1, u[0].powi(3) - 8.0)) };
        let (u, _) = newton(f, DVector::from_element(1, 1.0), NewtonOptions::default()).unwrap();
        assert!((u[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn newton_reports_singular_jacobian() {
        let f2 = |u: &DVector<f64>| -> Result<DVector<f64>, ()> { Ok(DVector::from_vec(vec![u[0] + u[1] - 1.0, 2.0 * u[0] + 2.0 * u[1]])) };
        assert_eq!(newton(f2, DVector::zeros(2), NewtonOptions::default()), Err(NewtonFailure::Singular));
    }
}
