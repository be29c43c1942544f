//! Dense and tridiagonal linear algebra kernels.
//!
//! Dense SVD, symmetric eigendecomposition and matrix products go through the
//! system OpenBLAS/LAPACK. Symmetric tridiagonal problems (the grid
//! Schroedinger operator, Lanczos projections) use dedicated O(n) routines:
//! Sturm-sequence bisection for eigenvalues and inverse iteration for
//! eigenvectors, so that large grids never require dense storage.

use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2};
use std::os::raw::c_char;

#[link(name = "openblas")]
extern "C" {
    fn dsyev_(
        jobz: *const c_char,
        uplo: *const c_char,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        w: *mut f64,
        work: *mut f64,
        lwork: *const i32,
        info: *mut i32,
    );
    fn dgesdd_(
        jobz: *const c_char,
        m: *const i32,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        s: *mut f64,
        u: *mut f64,
        ldu: *const i32,
        vt: *mut f64,
        ldvt: *const i32,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        info: *mut i32,
    );
    fn dgemm_(
        transa: *const c_char,
        transb: *const c_char,
        m: *const i32,
        n: *const i32,
        k: *const i32,
        alpha: *const f64,
        a: *const f64,
        lda: *const i32,
        b: *const f64,
        ldb: *const i32,
        beta: *const f64,
        c: *mut f64,
        ldc: *const i32,
    );
}

/// `C = A * B` through BLAS dgemm.
pub fn matmul(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let (m, ka) = a.dim();
    let (kb, n) = b.dim();
    assert_eq!(ka, kb, "matmul inner dimensions");
    if m == 0 || n == 0 || ka == 0 {
        return Array2::zeros((m, n));
    }
    let a_std;
    let a_view = if let Some(sl) = a.as_slice() {
        sl
    } else {
        a_std = a.as_standard_layout().into_owned();
        a_std.as_slice().expect("standard layout")
    };
    let b_std;
    let b_view = if let Some(sl) = b.as_slice() {
        sl
    } else {
        b_std = b.as_standard_layout().into_owned();
        b_std.as_slice().expect("standard layout")
    };
    let mut c = vec![0.0f64; m * n];
    // Row-major C = A*B is column-major C^T = B^T * A^T.
    let (ml, nl, kl) = (n as i32, m as i32, ka as i32);
    unsafe {
        dgemm_(
            b"N".as_ptr() as _,
            b"N".as_ptr() as _,
            &ml,
            &nl,
            &kl,
            &1.0,
            b_view.as_ptr(),
            &ml,
            a_view.as_ptr(),
            &kl,
            &0.0,
            c.as_mut_ptr(),
            &ml,
        );
    }
    Array2::from_shape_vec((m, n), c).unwrap()
}

/// Eigendecomposition of a real symmetric matrix.
///
/// Returns ascending eigenvalues and a matrix whose row `k` is the k-th
/// eigenvector.
pub fn eigh(a: &ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension("eigh needs a square matrix".into()));
    }
    let mut buf: Vec<f64> = a.iter().cloned().collect();
    let nl = n as i32;
    let mut w = vec![0.0f64; n];
    let lwork = (34 * n.max(1)) as i32;
    let mut work = vec![0.0f64; lwork as usize];
    let mut info = 0i32;
    unsafe {
        dsyev_(
            b"V".as_ptr() as _,
            b"L".as_ptr() as _,
            &nl,
            buf.as_mut_ptr(),
            &nl,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::NonConvergence(format!("dsyev info={info}")));
    }
    // Column j of the column-major result is eigenvector j; interpreting the
    // buffer as row-major puts it in row j.
    let v = Array2::from_shape_vec((n, n), buf).unwrap();
    Ok((Array1::from(w), v))
}

pub struct Svd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

/// Thin SVD `A = U diag(s) V^T` with `U: (m,k)`, `V^T: (k,n)`, `k = min(m,n)`.
pub fn svd(a: &ArrayView2<f64>) -> Result<Svd> {
    let (m, n) = a.dim();
    let k = m.min(n);
    if k == 0 {
        return Err(Error::Dimension("svd of empty matrix".into()));
    }
    let mut buf: Vec<f64> = a.iter().cloned().collect();
    // Row-major A is column-major A^T: factor A^T = U_b S V_b^T, then
    // U_A = V_b and V_A^T = U_b^T, which are exactly the LAPACK output
    // buffers reinterpreted in row-major order.
    let (ml, nl) = (n as i32, m as i32);
    let kl = k as i32;
    let mut s = vec![0.0f64; k];
    let mut u_b = vec![0.0f64; n * k];
    let mut vt_b = vec![0.0f64; k * m];
    let mut iwork = vec![0i32; 8 * k];
    let mut info = 0i32;
    let mut work_query = [0.0f64];
    let lwork_query = -1i32;
    unsafe {
        dgesdd_(
            b"S".as_ptr() as _,
            &ml,
            &nl,
            buf.as_mut_ptr(),
            &ml,
            s.as_mut_ptr(),
            u_b.as_mut_ptr(),
            &ml,
            vt_b.as_mut_ptr(),
            &kl,
            work_query.as_mut_ptr(),
            &lwork_query,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    let lwork = work_query[0] as i32;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    unsafe {
        dgesdd_(
            b"S".as_ptr() as _,
            &ml,
            &nl,
            buf.as_mut_ptr(),
            &ml,
            s.as_mut_ptr(),
            u_b.as_mut_ptr(),
            &ml,
            vt_b.as_mut_ptr(),
            &kl,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::NonConvergence(format!("dgesdd info={info}")));
    }
    Ok(Svd {
        u: Array2::from_shape_vec((m, k), vt_b).unwrap(),
        s: Array1::from(s),
        vt: Array2::from_shape_vec((k, n), u_b).unwrap(),
    })
}

/// Number of eigenvalues of the symmetric tridiagonal `(diag, off)` strictly
/// below `x`, from the Sturm sequence.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0usize;
    let mut q = 1.0f64;
    for i in 0..diag.len() {
        let e2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = if q.abs() < f64::MIN_POSITIVE {
            diag[i] - x - e2 / f64::MIN_POSITIVE
        } else {
            diag[i] - x - e2 / q
        };
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k` lowest eigenvalues of a symmetric tridiagonal matrix by bisection.
pub fn tridiag_lowest_eigenvalues(diag: &[f64], off: &[f64], k: usize) -> Vec<f64> {
    let n = diag.len();
    assert!(k <= n && n >= 1);
    assert_eq!(off.len(), n.saturating_sub(1));
    // Gershgorin bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 }
            + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let scale = (hi - lo).max(1.0);
    (0..k)
        .map(|j| {
            let (mut a, mut b) = (lo, hi);
            // Find eigenvalue j (0-based, ascending).
            while b - a > 1e-15 * scale + f64::EPSILON * (a.abs() + b.abs()) {
                let mid = 0.5 * (a + b);
                if sturm_count(diag, off, mid) > j {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

fn pivot_guard(x: f64) -> f64 {
    if x.abs() < 1e-300 {
        1e-300f64.copysign(if x == 0.0 { 1.0 } else { x })
    } else {
        x
    }
}

/// Solve `(T - sigma I) x = b` for tridiagonal `T` with partial pivoting.
///
/// LU of a pivoted tridiagonal has an upper band of width two; `d`, `e`, `f`
/// hold the diagonal and the two super-diagonals of U.
fn tridiag_shifted_solve(diag: &[f64], off: &[f64], sigma: f64, b: &mut [f64]) {
    let n = diag.len();
    let mut d: Vec<f64> = diag.iter().map(|&v| v - sigma).collect();
    let mut e = vec![0.0f64; n];
    e[..n - 1].copy_from_slice(off);
    let mut f = vec![0.0f64; n];
    for i in 0..n - 1 {
        let sub = off[i];
        let next_e = if i + 1 < n - 1 { e[i + 1] } else { 0.0 };
        if d[i].abs() >= sub.abs() {
            let m = sub / pivot_guard(d[i]);
            d[i + 1] -= m * e[i];
            e[i + 1] = next_e - m * f[i];
            b[i + 1] -= m * b[i];
        } else {
            // swap rows i and i+1, then eliminate
            let (rd, re, rf, rb) = (d[i], e[i], f[i], b[i]);
            let (pd, pe, pf, pb) = (sub, d[i + 1], next_e, b[i + 1]);
            d[i] = pd;
            e[i] = pe;
            f[i] = pf;
            b[i] = pb;
            let m = rd / pivot_guard(pd);
            d[i + 1] = re - m * pe;
            e[i + 1] = rf - m * pf;
            b[i + 1] = rb - m * pb;
        }
    }
    for i in (0..n).rev() {
        let mut rhs = b[i];
        if i + 1 < n {
            rhs -= e[i] * b[i + 1];
        }
        if i + 2 < n {
            rhs -= f[i] * b[i + 2];
        }
        b[i] = rhs / pivot_guard(d[i]);
    }
}

/// The `k` lowest eigenpairs of a symmetric tridiagonal matrix.
///
/// Eigenvectors come from inverse iteration; members of a near-degenerate
/// cluster are re-orthogonalized against each other so that double-well
/// doublets stay resolved.
pub fn tridiag_lowest_eigenpairs(
    diag: &[f64],
    off: &[f64],
    k: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = diag.len();
    let mut eigenvalues = tridiag_lowest_eigenvalues(diag, off, k);
    let scale = eigenvalues
        .iter()
        .fold(1.0f64, |acc, &v| acc.max(v.abs()));
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        // deterministic nonzero start
        let mut v: Vec<f64> = (0..n)
            .map(|i| ((i * 2654435761 + j * 40503 + 1) % 1000) as f64 / 1000.0 - 0.5)
            .collect();
        normalize(&mut v);
        let sigma = eigenvalues[j] + 1e-12 * scale;
        for _ in 0..4 {
            tridiag_shifted_solve(diag, off, sigma, &mut v);
            // deflate against all previously found vectors so clusters and
            // near-degenerate doublets stay resolved
            for prev in &vectors {
                let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(prev).for_each(|(a, b)| *a -= dot * b);
            }
            normalize(&mut v);
        }
        // Rayleigh-quotient polish: bisection resolves eigenvalues only
        // relative to the Gershgorin width (huge for fine-grid kinetic
        // terms); the Rayleigh quotient of the inverse-iteration vector is
        // accurate to the residual squared, independent of the matrix norm.
        let mut rq = 0.0f64;
        for i in 0..n {
            let mut tv = diag[i] * v[i];
            if i > 0 {
                tv += off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                tv += off[i] * v[i + 1];
            }
            rq += v[i] * tv;
        }
        eigenvalues[j] = rq;
        vectors.push(v);
    }
    (eigenvalues, vectors)
}

fn normalize(v: &mut [f64]) {
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nrm > 0.0 {
        v.iter_mut().for_each(|x| *x /= nrm);
    }
}

/// Lowest eigenpair (plus the next Ritz value) of a large symmetric operator
/// given only through its action, by restarted Lanczos iteration with full
/// reorthogonalization.
///
/// Returns `(lowest two Ritz values, ground vector, residual norm)`.
pub fn lanczos_lowest<F>(
    n: usize,
    mut apply: F,
    init: &[f64],
    block: usize,
    max_restarts: usize,
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64)>
where
    F: FnMut(&[f64], &mut [f64]),
{
    assert_eq!(init.len(), n);
    let m = block.min(n).max(2);
    let mut q0 = init.to_vec();
    let nrm = q0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(nrm > 0.0) {
        return Err(Error::InvalidInput("lanczos: zero start vector".into()));
    }
    q0.iter_mut().for_each(|x| *x /= nrm);

    let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    // Ritz values bound the exact eigenvalues from above, so the tightest
    // estimate of the second eigenvalue is the minimum over restarts.
    let mut best_second = f64::INFINITY;
    for _restart in 0..max_restarts {
        let mut basis: Vec<Vec<f64>> = vec![q0.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![0.0f64; n];
        for j in 0..m {
            apply(&basis[j], &mut w);
            let a: f64 = w.iter().zip(&basis[j]).map(|(x, y)| x * y).sum();
            alpha.push(a);
            for (i, q) in basis.iter().enumerate() {
                let coef = if i == j {
                    a
                } else if i + 1 == j {
                    beta[i]
                } else {
                    0.0
                };
                if coef != 0.0 {
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= coef * y);
                }
            }
            // full reorthogonalization pass
            for q in &basis {
                let dot: f64 = w.iter().zip(q).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= dot * y);
            }
            let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if j + 1 == m || b < 1e-14 * alpha[0].abs().max(1.0) {
                beta.push(b);
                break;
            }
            beta.push(b);
            let q_next: Vec<f64> = w.iter().map(|x| x / b).collect();
            basis.push(q_next);
        }
        let kdim = basis.len();
        let (ritz, rvecs) = {
            let mut t = Array2::<f64>::zeros((kdim, kdim));
            for i in 0..kdim {
                t[[i, i]] = alpha[i];
                if i + 1 < kdim {
                    t[[i, i + 1]] = beta[i];
                    t[[i + 1, i]] = beta[i];
                }
            }
            eigh(&t.view())?
        };
        let mut ground = vec![0.0f64; n];
        for (i, q) in basis.iter().enumerate() {
            let c = rvecs[[0, i]];
            ground.iter_mut().zip(q).for_each(|(g, y)| *g += c * y);
        }
        normalize(&mut ground);
        let resid = beta[kdim - 1].abs() * rvecs[[0, kdim - 1]].abs();
        let mut vals: Vec<f64> = ritz.iter().take(2.min(kdim)).cloned().collect();
        if vals.len() > 1 {
            best_second = best_second.min(vals[1]);
            vals[1] = best_second;
        }
        let accept = resid <= tol * vals[0].abs().max(1.0);
        let better = match &best {
            Some((bv, _, br)) => vals[0] < bv[0] || resid < *br,
            None => true,
        };
        if better {
            best = Some((vals.clone(), ground.clone(), resid));
        }
        if accept {
            break;
        }
        q0 = ground;
    }
    let (mut vals, vec, resid) = best.unwrap();
    if vals.len() > 1 {
        vals[1] = vals[1].min(best_second);
    }
    Ok((vals, vec, resid))
}
