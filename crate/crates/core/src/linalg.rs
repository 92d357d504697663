//! Dense linear algebra helpers shared by the solvers.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition-number ceiling before a decomposition is treated as failed.
pub const COND_MAX: f64 = 1e12;

/// Roots of `det(lambda * F - G) = 0`, infinite roots mapped to `None`.
///
/// Computed by a shift-invert reduction to an ordinary eigenvalue problem:
/// for a shift sigma with `sigma*F - G` invertible, the finite roots are
/// `sigma - 1/nu` over nonzero eigenvalues `nu` of `(sigma*F - G)^{-1} F`.
pub fn pencil_roots(g: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<Vec<Option<Complex<f64>>>> {
    let n = g.nrows();
    if n == 0 || g.ncols() != n || f.nrows() != n || f.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "pencil_roots",
            expected: "square G, F of equal size".into(),
            got: format!("G {}x{}, F {}x{}", g.nrows(), g.ncols(), f.nrows(), f.ncols()),
        });
    }

    // Shifts chosen away from likely root locations; first well-conditioned one wins.
    const SHIFTS: [f64; 7] = [0.0, 0.371_238_9, -0.618_251_7, 1.323_471, -1.757_319, 2.910_113, 4.173_529];
    let mut chosen: Option<(f64, DMatrix<f64>)> = None;
    for &sigma in &SHIFTS {
        let shifted = f * sigma - g;
        let svd = shifted.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smax > 0.0 && smin > smax / COND_MAX {
            let lu = shifted.lu();
            if let Some(m) = lu.try_inverse() {
                chosen = Some((sigma, m * f));
                break;
            }
        }
    }
    let (sigma, m) = chosen.ok_or_else(|| Error::NumericalFailure {
        context: "pencil_roots",
        detail: "no shift makes sigma*F - G invertible".into(),
    })?;

    let nus = m.complex_eigenvalues();
    let mut roots: Vec<Option<Complex<f64>>> = nus
        .iter()
        .map(|nu| {
            if nu.norm() < 1e-14 {
                None
            } else {
                Some(Complex::new(sigma, 0.0) - Complex::new(1.0, 0.0) / nu)
            }
        })
        .collect();
    // Fixed ordering: finite roots by (|λ|, re, im), infinite roots last.
    roots.sort_by(|a, b| match (a, b) {
        (None, None) => std::cmp::Ordering::Equal,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (Some(_), None) => std::cmp::Ordering::Less,
        (Some(x), Some(y)) => (x.norm(), x.re, x.im)
            .partial_cmp(&(y.norm(), y.re, y.im))
            .unwrap_or(std::cmp::Ordering::Equal),
    });
    Ok(roots)
}

/// Right null vector of the complex matrix `lambda * F - G` via SVD.
pub fn pencil_null_vector(
    g: &DMatrix<f64>,
    f: &DMatrix<f64>,
    lambda: Complex<f64>,
) -> Result<DVector<Complex<f64>>> {
    let n = g.nrows();
    let mut a = DMatrix::<Complex<f64>>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = lambda * Complex::new(f[(i, j)], 0.0) - Complex::new(g[(i, j)], 0.0);
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::NumericalFailure {
        context: "pencil_null_vector",
        detail: "SVD did not return V^T".into(),
    })?;
    // Smallest singular value's right singular vector.
    let mut idx = 0;
    let mut smin = f64::INFINITY;
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s < smin {
            smin = *s;
            idx = k;
        }
    }
    let row = v_t.row(idx);
    let mut v = DVector::<Complex<f64>>::zeros(n);
    for j in 0..n {
        v[j] = row[j].conj();
    }
    // Deterministic phase: largest-modulus entry made real positive.
    let mut pivot = 0;
    let mut best = 0.0;
    for j in 0..n {
        let m = v[j].norm();
        if m > best {
            best = m;
            pivot = j;
        }
    }
    if best > 0.0 {
        let phase = v[pivot] / Complex::new(v[pivot].norm(), 0.0);
        for j in 0..n {
            v[j] /= phase;
        }
    }
    Ok(v)
}

/// Solves the discrete Lyapunov equation `S = A S A' + Q` by doubling.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if q.nrows() != n || q.ncols() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "lyapunov",
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", q.nrows(), q.ncols()),
        });
    }
    let mut s = q.clone();
    let mut m = a.clone();
    for _ in 0..200 {
        let norm = m.norm();
        if norm < 1e-150 {
            break;
        }
        s = &s + &m * &s * m.transpose();
        m = &m * &m;
        if m.norm() < 1e-16 * (1.0 + s.norm()) {
            s = &s + &m * &s * m.transpose();
            break;
        }
    }
    if !s.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalFailure {
            context: "lyapunov",
            detail: "doubling diverged; A is not stable".into(),
        });
    }
    // Symmetrize against rounding drift.
    let st = s.transpose();
    Ok((s + st) * 0.5)
}

/// Moore-Penrose pseudo-inverse with relative tolerance on singular values.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = rel_tol * smax.max(1e-300);
    let u = svd.u.as_ref().unwrap();
    let v_t = svd.v_t.as_ref().unwrap();
    let mut sinv = DMatrix::<f64>::zeros(v_t.nrows(), u.ncols());
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > tol {
            sinv[(k, k)] = 1.0 / s;
        }
    }
    v_t.transpose() * sinv * u.transpose()
}

/// Numerical rank: singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|s| **s > rel_tol * smax).count()
}

/// Reciprocal condition number from singular values.
pub fn rcond(a: &DMatrix<f64>) -> f64 {
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 {
        0.0
    } else {
        smin / smax
    }
}

/// Spectral radius of a real square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Smallest eigenvalue of the symmetrized matrix.
pub fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Symmetric PSD square root via eigendecomposition, clamping tiny negatives.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = a.nrows();
    let min_eig = eig.eigenvalues.min();
    if min_eig < -1e-8 * (1.0 + eig.eigenvalues.max().abs()) {
        return Err(Error::NumericalFailure {
            context: "psd_sqrt",
            detail: format!("matrix is not PSD (min eigenvalue {min_eig:e})"),
        });
    }
    let mut d = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        d[(k, k)] = eig.eigenvalues[k].max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Dense LU solve with a condition guard.
pub fn solve_lu(a: &DMatrix<f64>, b: &DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    let rc = rcond(a);
    if rc < 1.0 / COND_MAX {
        return Err(Error::NumericalFailure {
            context: "solve_lu",
            detail: format!("{context}: rcond {rc:e} below 1/cond_max"),
        });
    }
    a.clone().lu().solve(b).ok_or_else(|| Error::NumericalFailure {
        context: "solve_lu",
        detail: format!("{context}: LU solve failed"),
    })
}
