//! Brute-force exact diagonalization of the truncated lattice Hamiltonian.
//!
//! For small `(L, d)` the full `d^L` vector fits in memory and the lowest
//! eigenpair of `H = sum_j (A_j + c_j N_1 W_j) + N_1 sum_j Y_j Y_{j+1}` is
//! extracted with a matrix-free Lanczos iteration. This is the correctness
//! oracle for the DMRG engine and the measurement layer.

use crate::linalg::lanczos_lowest;
use crate::localbasis::LocalBasis;
use crate::{Error, Result};
use ndarray::{Array2, ArrayView2};

/// Hard cap on the dense Hilbert-space dimension.
pub const MAX_DENSE_DIM: usize = 1 << 22;

/// Lowest eigenpair of the dense lattice problem.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub dimension: usize,
    pub l: usize,
    pub d: usize,
    pub ground_energy: f64,
    pub ground_vector: Vec<f64>,
    /// Gap to the first Ritz excitation (estimate from the same Krylov space).
    pub first_gap: f64,
}

/// Open-boundary on-site weight `c_j`: edges carry half the `W` term.
pub fn obc_weight(j: usize, l: usize) -> f64 {
    if l == 1 || j == 0 || j == l - 1 {
        0.5
    } else {
        1.0
    }
}

fn checked_dimension(d: usize, l: usize) -> Result<usize> {
    let mut dim = 1usize;
    for _ in 0..l {
        dim = dim
            .checked_mul(d)
            .filter(|&x| x <= MAX_DENSE_DIM)
            .ok_or_else(|| {
                Error::ResourceGuard(format!("d^L = {d}^{l} exceeds {MAX_DENSE_DIM}"))
            })?;
    }
    Ok(dim)
}

/// `out += (M on site j) v` for a `d x d` matrix, matrix-free over the full
/// product space. Site index is 0-based; the site runs over the stride
/// `d^(L-1-j)` block of the flat index.
fn accumulate_single_site(
    v: &[f64],
    out: &mut [f64],
    mat: &ArrayView2<f64>,
    j: usize,
    d: usize,
    l: usize,
) {
    let stride = d.pow((l - 1 - j) as u32);
    let outer = v.len() / (stride * d);
    for a in 0..outer {
        let base_a = a * d * stride;
        for q in 0..d {
            let row = base_a + q * stride;
            for qp in 0..d {
                let m = mat[[q, qp]];
                if m == 0.0 {
                    continue;
                }
                let col = base_a + qp * stride;
                for b in 0..stride {
                    out[row + b] += m * v[col + b];
                }
            }
        }
    }
}

/// `out += pref * (Y on site j)(Y on site j+1) v`, matrix-free.
fn accumulate_bond(
    v: &[f64],
    out: &mut [f64],
    y: &ArrayView2<f64>,
    pref: f64,
    j: usize,
    d: usize,
    l: usize,
) {
    let stride = d.pow((l - 2 - j) as u32);
    let outer = v.len() / (stride * d * d);
    for a in 0..outer {
        let base_a = a * d * d * stride;
        for q1 in 0..d {
            for q2 in 0..d {
                let row = base_a + (q1 * d + q2) * stride;
                for p1 in 0..d {
                    let y1 = y[[q1, p1]];
                    if y1 == 0.0 {
                        continue;
                    }
                    for p2 in 0..d {
                        let m = pref * y1 * y[[q2, p2]];
                        if m == 0.0 {
                            continue;
                        }
                        let col = base_a + (p1 * d + p2) * stride;
                        for b in 0..stride {
                            out[row + b] += m * v[col + b];
                        }
                    }
                }
            }
        }
    }
}

/// On-site matrices `A + c_j N_1 W` for every site.
pub fn local_terms(basis: &LocalBasis, n1: f64, l: usize) -> Vec<Array2<f64>> {
    (0..l)
        .map(|j| {
            let mut m = basis.w_op.clone() * (obc_weight(j, l) * n1);
            for q in 0..basis.d {
                m[[q, q]] += basis.energies[q];
            }
            m
        })
        .collect()
}

/// Apply the full lattice Hamiltonian to a dense vector.
pub fn apply_hamiltonian(
    basis: &LocalBasis,
    n1: f64,
    l: usize,
    v: &[f64],
    out: &mut [f64],
) {
    let d = basis.d;
    out.iter_mut().for_each(|x| *x = 0.0);
    for (j, m) in local_terms(basis, n1, l).iter().enumerate() {
        accumulate_single_site(v, out, &m.view(), j, d, l);
    }
    for j in 0..l.saturating_sub(1) {
        accumulate_bond(v, out, &basis.y_op.view(), n1, j, d, l);
    }
}

/// Dense matrix of the lattice Hamiltonian; only for very small instances.
pub fn dense_hamiltonian(basis: &LocalBasis, n1: f64, l: usize) -> Result<Array2<f64>> {
    let dim = checked_dimension(basis.d, l)?;
    if dim > 1 << 12 {
        return Err(Error::ResourceGuard(format!(
            "dense matrix of dimension {dim} refused; use the matrix-free path"
        )));
    }
    let mut h = Array2::<f64>::zeros((dim, dim));
    let mut col = vec![0.0f64; dim];
    let mut out = vec![0.0f64; dim];
    for c in 0..dim {
        col.iter_mut().for_each(|x| *x = 0.0);
        col[c] = 1.0;
        apply_hamiltonian(basis, n1, l, &col, &mut out);
        for r in 0..dim {
            h[[r, c]] = out[r];
        }
    }
    Ok(h)
}

/// Lowest eigenpair of the truncated lattice Hamiltonian by matrix-free
/// Lanczos with full reorthogonalization.
pub fn exact_ground_state(basis: &LocalBasis, n1: f64, l: usize) -> Result<DenseSpectrum> {
    if l < 1 {
        return Err(Error::InvalidInput("need L >= 1".into()));
    }
    let d = basis.d;
    let dim = checked_dimension(d, l)?;

    // deterministic start with weight on the two staggered product seeds
    let mut init = vec![1e-3f64; dim];
    let stag = staggered_index(d.min(2), d, l);
    init[0] += 1.0;
    init[stag] += 1.0;

    let apply = |v: &[f64], out: &mut [f64]| apply_hamiltonian(basis, n1, l, v, out);
    let block = 70.min(dim);
    let (ritz, ground, resid) = lanczos_lowest(dim, apply, &init, block, 60, 1e-11)?;
    let e0 = ritz[0];
    if resid > 1e-9 * e0.abs().max(1.0) {
        return Err(Error::NonConvergence(format!(
            "Lanczos residual {resid} at dimension {dim}"
        )));
    }
    let first_gap = if ritz.len() > 1 {
        (ritz[1] - ritz[0]).max(0.0)
    } else {
        0.0
    };
    Ok(DenseSpectrum {
        dimension: dim,
        l,
        d,
        ground_energy: e0,
        ground_vector: ground,
        first_gap,
    })
}

fn staggered_index(second_level: usize, d: usize, l: usize) -> usize {
    // |0 1 0 1 ...> in the flat indexing
    let mut idx = 0usize;
    for j in 0..l {
        let q = if j % 2 == 1 { second_level - 1 } else { 0 };
        idx = idx * d + q;
    }
    idx
}

/// `<ground| O |ground>` for a tensor product of single-site matrices placed
/// on distinct sites (1-based site labels).
pub fn exact_expectation(
    spec: &DenseSpectrum,
    operators: &[(usize, ArrayView2<f64>)],
) -> Result<f64> {
    let d = spec.d;
    let l = spec.l;
    let mut seen = vec![false; l];
    for &(site, ref m) in operators {
        if site < 1 || site > l {
            return Err(Error::InvalidInput(format!("site {site} outside 1..{l}")));
        }
        if seen[site - 1] {
            return Err(Error::InvalidInput(format!("site {site} listed twice")));
        }
        seen[site - 1] = true;
        if m.dim() != (d, d) {
            return Err(Error::Dimension(format!(
                "operator on site {site} is {:?}, expected ({d}, {d})",
                m.dim()
            )));
        }
    }
    let mut work = spec.ground_vector.clone();
    let mut out = vec![0.0f64; work.len()];
    for &(site, ref m) in operators {
        out.iter_mut().for_each(|x| *x = 0.0);
        accumulate_single_site(&work, &mut out, m, site - 1, d, l);
        std::mem::swap(&mut work, &mut out);
    }
    Ok(spec
        .ground_vector
        .iter()
        .zip(&work)
        .map(|(a, b)| a * b)
        .sum())
}

/// Convenience: `<Y_j Y_j'>` with the `j = j'` diagonal going through the
/// second-moment matrix `Y.Y` on a single site.
pub fn exact_yy(spec: &DenseSpectrum, basis: &LocalBasis, j: usize, jp: usize) -> Result<f64> {
    if j == jp {
        let yy = basis.y_op.dot(&basis.y_op);
        exact_expectation(spec, &[(j, yy.view())])
    } else {
        exact_expectation(spec, &[(j, basis.y_op.view()), (jp, basis.y_op.view())])
    }
}
