//! Truncated local basis from the single-site harmonic-quartic problem.
//!
//! The site Hamiltonian `H_loc = (1/2)[-g^2 d^2/dy^2 + (w^2 - M_1) y^2 + M_2 y^4]`
//! is discretized with a second-order central-difference stencil on a uniform
//! grid with Dirichlet walls, diagonalized with the dedicated tridiagonal
//! routines, and the lowest `d` eigenfunctions become the computational basis.
//! The truncated position operators `Y` and `W` are built by trapezoid
//! quadrature; note `W != Y^2` once the basis is truncated.

use crate::linalg::tridiag_lowest_eigenpairs;
use crate::model::CoefficientTable;
use crate::{Error, ModelParameters, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Real-space grid description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Half-width of the domain, in units of the lattice constant.
    pub y_max: f64,
    /// Number of interior grid points.
    pub points: usize,
}

/// Reduced inputs of the single-well problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellParameters {
    pub g: f64,
    /// Harmonic coefficient `w^2 - M_1`; negative in the double-well regime.
    pub mu: f64,
    /// Quartic coefficient `M_2`.
    pub quartic: f64,
}

impl WellParameters {
    pub fn from_model(params: &ModelParameters, coeffs: &CoefficientTable) -> Self {
        Self {
            g: params.g,
            mu: params.omega2 - coeffs.m1(),
            quartic: coeffs.m2(),
        }
    }

    pub fn potential(&self, y: f64) -> f64 {
        0.5 * (self.mu * y * y + self.quartic * y.powi(4))
    }

    /// Curvature frequency at the well minimum.
    fn omega_char(&self) -> f64 {
        if self.mu >= 0.0 {
            let harmonic = self.mu.sqrt();
            let quartic_scale = (self.g * self.quartic.max(0.0)).cbrt();
            harmonic.max(quartic_scale).max(1e-8)
        } else {
            (-2.0 * self.mu).sqrt()
        }
    }

    fn well_depth(&self) -> f64 {
        if self.mu < 0.0 && self.quartic > 0.0 {
            -self.mu * self.mu / (8.0 * self.quartic)
        } else {
            0.0
        }
    }
}

/// Solver controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative eigenvalue tolerance under grid doubling.
    pub refine_tol: f64,
    /// Starting number of grid points.
    pub initial_points: usize,
    pub max_points: usize,
    /// Required excess of `V(y_max)` over `E_d`, in units of `g * Omega_char`.
    pub boundary_margin: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            refine_tol: 1e-10,
            initial_points: 4096,
            max_points: 1 << 22,
            boundary_margin: 5.0,
        }
    }
}

/// Symmetric tridiagonal discretization of the site Hamiltonian.
#[derive(Debug, Clone)]
pub struct GridHamiltonian {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    pub y: Vec<f64>,
    pub step: f64,
}

/// Truncated single-site basis: eigenenergies, grid eigenfunctions and the
/// position operator matrices.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    pub d: usize,
    /// Ascending eigenenergies of the site problem.
    pub energies: Vec<f64>,
    /// Eigenfunctions on the grid, row `q`, normalized under trapezoid
    /// quadrature.
    pub wavefunctions: Array2<f64>,
    /// `<psi_q | y | psi_q'>`
    pub y_op: Array2<f64>,
    /// `<psi_q | y^2 | psi_q'>`
    pub w_op: Array2<f64>,
    pub grid: GridSpec,
    /// Grid coordinates.
    pub y: Vec<f64>,
    pub step: f64,
    pub well: WellParameters,
}

/// Second-order central-difference discretization with Dirichlet walls.
pub fn build_grid_hamiltonian(well: &WellParameters, grid: &GridSpec) -> Result<GridHamiltonian> {
    if grid.points < 64 {
        return Err(Error::InvalidInput("grid needs at least 64 points".into()));
    }
    if !(grid.y_max > 0.0) {
        return Err(Error::InvalidInput("y_max must be positive".into()));
    }
    let n = grid.points;
    let h = 2.0 * grid.y_max / (n as f64 + 1.0);
    let kinetic = well.g * well.g / (h * h);
    let mut diag = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let yi = -grid.y_max + (i as f64 + 1.0) * h;
        let v = well.potential(yi);
        if !v.is_finite() {
            return Err(Error::Domain(format!("non-finite potential at y={yi}")));
        }
        diag.push(kinetic + v);
        y.push(yi);
    }
    let off = vec![-0.5 * kinetic; n - 1];
    Ok(GridHamiltonian { diag, off, y, step: h })
}

fn estimate_y_max(well: &WellParameters, d: usize, margin: f64) -> Result<f64> {
    if well.quartic <= 0.0 && well.mu <= 0.0 {
        return Err(Error::Domain(
            "potential unbounded below: need mu > 0 or quartic > 0".into(),
        ));
    }
    let omega = well.omega_char();
    let e_top = well.well_depth()
        + well.g * omega * (d as f64 + 2.0)
        + (20.0 + margin) * well.g * omega;
    let y2 = if well.quartic > 0.0 {
        (-well.mu + (well.mu * well.mu + 8.0 * well.quartic * e_top.max(0.0)).sqrt())
            / (2.0 * well.quartic)
    } else {
        2.0 * e_top.max(well.g * omega) / well.mu
    };
    Ok(1.25 * y2.max(1e-6).sqrt())
}

fn solve_on_grid(well: &WellParameters, grid: &GridSpec, d: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>, GridHamiltonian)> {
    let ham = build_grid_hamiltonian(well, grid)?;
    let (_, vecs) = tridiag_lowest_eigenpairs(&ham.diag, &ham.off, d);
    // Rayleigh quotients in gradient form: the naive v' T v cancels the huge
    // kinetic diagonal (g^2/h^2) against the off-diagonal, losing ~eps * g^2/h^2
    // absolute accuracy on fine grids. Sum of squares of differences instead.
    let kinetic = well.g * well.g / (ham.step * ham.step);
    let n = ham.y.len();
    let vals: Vec<f64> = vecs
        .iter()
        .map(|v| {
            let norm2: f64 = v.iter().map(|x| x * x).sum();
            let pot: f64 = (0..n).map(|i| well.potential(ham.y[i]) * v[i] * v[i]).sum();
            let mut grad2 = v[0] * v[0] + v[n - 1] * v[n - 1];
            for i in 0..n - 1 {
                let dv = v[i + 1] - v[i];
                grad2 += dv * dv;
            }
            (pot + 0.5 * kinetic * grad2) / norm2
        })
        .collect();
    Ok((vals, vecs, ham))
}

/// Solve the site problem with automatic grid refinement.
///
/// The grid is doubled until all kept eigenvalues are stable to
/// `opts.refine_tol` relative, and the boundary condition invariant
/// (`V(y_max)` above `E_d` by the configured margin) is checked post-solve.
pub fn solve_local_basis_well(
    well: &WellParameters,
    d: usize,
    grid: Option<GridSpec>,
    opts: &SolveOptions,
) -> Result<LocalBasis> {
    if d < 2 {
        return Err(Error::InvalidInput("need d >= 2 basis states".into()));
    }
    let y_max = match grid {
        Some(gr) => gr.y_max,
        None => estimate_y_max(well, d, opts.boundary_margin)?,
    };
    let mut points = grid.map(|gr| gr.points).unwrap_or(opts.initial_points).max(64);
    let omega = well.omega_char();
    let scale = (well.g * omega).max(1e-12);

    let mut current = solve_on_grid(well, &GridSpec { y_max, points }, d)?;
    loop {
        if 2 * points > opts.max_points {
            return Err(Error::NonConvergence(format!(
                "grid refinement exceeded {} points without reaching tol {}",
                opts.max_points, opts.refine_tol
            )));
        }
        let next = solve_on_grid(well, &GridSpec { y_max, points: 2 * points }, d)?;
        let converged = current
            .0
            .iter()
            .zip(&next.0)
            .all(|(&a, &b)| (a - b).abs() <= opts.refine_tol * a.abs().max(scale));
        current = next;
        points *= 2;
        if converged {
            break;
        }
    }
    let (energies, vectors, ham) = current;
    let spec = GridSpec { y_max, points };

    // boundary check: the walls must sit well above the top kept level
    let v_edge = well.potential(y_max);
    let e_top = energies[d - 1];
    if v_edge < e_top + opts.boundary_margin * scale {
        return Err(Error::Domain(format!(
            "domain too small: V(y_max)={v_edge:.6} vs E_d={e_top:.6} (margin {})",
            opts.boundary_margin * scale
        )));
    }
    for win in energies.windows(2) {
        if win[1] < win[0] {
            return Err(Error::NonConvergence("eigenvalues not ascending".into()));
        }
    }

    let n = ham.y.len();
    let h = ham.step;

    // The potential is even and the grid reflection-symmetric, so every
    // eigenfunction has definite parity. Project each vector onto its
    // dominant parity sector (killing residual doublet mixing from inverse
    // iteration), then re-orthogonalize within each sector.
    let mut vectors = vectors;
    let mut parities = Vec::with_capacity(d);
    for v in vectors.iter_mut() {
        let mut even_norm = 0.0f64;
        let mut odd_norm = 0.0f64;
        for i in 0..n {
            let e = 0.5 * (v[i] + v[n - 1 - i]);
            let o = 0.5 * (v[i] - v[n - 1 - i]);
            even_norm += e * e;
            odd_norm += o * o;
        }
        let even = even_norm >= odd_norm;
        for i in 0..n / 2 {
            let (a, b) = (v[i], v[n - 1 - i]);
            let half = 0.5 * (a + if even { b } else { -b });
            v[i] = half;
            v[n - 1 - i] = if even { half } else { -half };
        }
        if n % 2 == 1 && !even {
            v[n / 2] = 0.0;
        }
        parities.push(even);
    }
    for q in 0..d {
        for p in 0..q {
            if parities[p] != parities[q] {
                continue;
            }
            let dot: f64 = (0..n).map(|i| vectors[p][i] * vectors[q][i]).sum();
            let nrm: f64 = vectors[p].iter().map(|x| x * x).sum();
            if nrm > 0.0 {
                let c = dot / nrm;
                for i in 0..n {
                    vectors[q][i] -= c * vectors[p][i];
                }
            }
        }
    }

    let mut wf = Array2::<f64>::zeros((d, n));
    for (q, v) in vectors.iter().enumerate() {
        // quadrature normalization and deterministic sign
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>() * h;
        let peak = v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-8 * peak)
            .map(|&x| x.signum())
            .unwrap_or(1.0);
        let factor = sign / norm.sqrt();
        for i in 0..n {
            wf[[q, i]] = v[i] * factor;
        }
    }

    let mut basis = LocalBasis {
        d,
        energies,
        wavefunctions: wf,
        y_op: Array2::zeros((d, d)),
        w_op: Array2::zeros((d, d)),
        grid: spec,
        y: ham.y,
        step: h,
        well: *well,
    };
    basis.y_op = operator_matrix_elements(&basis, 1)?;
    basis.w_op = operator_matrix_elements(&basis, 2)?;
    Ok(basis)
}

/// Solve the site problem for a model parameter point.
pub fn solve_local_basis(
    params: &ModelParameters,
    coeffs: &CoefficientTable,
    d: usize,
    grid: Option<GridSpec>,
    opts: &SolveOptions,
) -> Result<LocalBasis> {
    let well = WellParameters::from_model(params, coeffs);
    solve_local_basis_well(&well, d, grid, opts)
}

/// Matrix of `<psi_q | y^power | psi_q'>` by trapezoid quadrature.
pub fn operator_matrix_elements(basis: &LocalBasis, power: u32) -> Result<Array2<f64>> {
    if power < 1 {
        return Err(Error::InvalidInput("power must be >= 1".into()));
    }
    let d = basis.d;
    let n = basis.y.len();
    let h = basis.step;
    let mut out = Array2::<f64>::zeros((d, d));
    for a in 0..d {
        for b in a..d {
            let mut acc = 0.0;
            for i in 0..n {
                acc += basis.wavefunctions[[a, i]]
                    * basis.wavefunctions[[b, i]]
                    * basis.y[i].powi(power as i32);
            }
            let val = acc * h;
            out[[a, b]] = val;
            out[[b, a]] = val;
        }
    }
    Ok(out)
}

impl LocalBasis {
    /// Parity eigenvalue (+1 even, -1 odd) of each kept level, measured from
    /// the grid reflection symmetry of the eigenfunction.
    pub fn parity_signs(&self) -> Vec<i8> {
        let n = self.y.len();
        (0..self.d)
            .map(|q| {
                let overlap: f64 = (0..n)
                    .map(|i| self.wavefunctions[[q, i]] * self.wavefunctions[[q, n - 1 - i]])
                    .sum::<f64>()
                    * self.step;
                if overlap >= 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigh;
    use approx::assert_abs_diff_eq;

    fn loose() -> SolveOptions {
        SolveOptions { refine_tol: 1e-8, ..Default::default() }
    }

    #[test]
    fn stencil_entries() {
        let well = WellParameters { g: 0.7, mu: 1.0, quartic: 0.3 };
        let grid = GridSpec { y_max: 5.0, points: 128 };
        let ham = build_grid_hamiltonian(&well, &grid).unwrap();
        let h = 2.0 * 5.0 / 129.0;
        assert_abs_diff_eq!(ham.step, h, epsilon = 1e-15);
        let kin = 0.7 * 0.7 / (h * h);
        for (i, &d) in ham.diag.iter().enumerate() {
            assert_abs_diff_eq!(d, kin + well.potential(ham.y[i]), epsilon = 1e-12);
        }
        for &o in &ham.off {
            assert_abs_diff_eq!(o, -0.5 * kin, epsilon = 1e-12);
        }
    }

    #[test]
    fn harmonic_spectrum_and_ladder() {
        // quartic off, unit frequency: E_q = g (q - 1/2)
        let g = 0.35;
        let well = WellParameters { g, mu: 1.0, quartic: 0.0 };
        let basis = solve_local_basis_well(&well, 5, None, &loose()).unwrap();
        for q in 0..5 {
            assert_abs_diff_eq!(
                basis.energies[q],
                g * (q as f64 + 0.5),
                epsilon = 1e-7
            );
        }
        // ladder elements |<q|y|q+1>| = sqrt(g q / 2); the sign is fixed by
        // the left-tail convention, which flips odd states
        for q in 1..5usize {
            assert_abs_diff_eq!(
                basis.y_op[[q - 1, q]].abs(),
                (g * q as f64 / 2.0).sqrt(),
                epsilon = 1e-7
            );
        }
    }

    #[test]
    fn orthonormal_under_quadrature() {
        let well = WellParameters { g: 0.1, mu: -3.0, quartic: 12.0 };
        let basis = solve_local_basis_well(&well, 5, None, &loose()).unwrap();
        let n = basis.y.len();
        for a in 0..5 {
            for b in 0..5 {
                let dot: f64 = (0..n)
                    .map(|i| basis.wavefunctions[[a, i]] * basis.wavefunctions[[b, i]])
                    .sum::<f64>()
                    * basis.step;
                let expect = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn parity_selection_rules() {
        let well = WellParameters { g: 0.1, mu: -3.2, quartic: 12.05 };
        let basis = solve_local_basis_well(&well, 6, None, &loose()).unwrap();
        let signs = basis.parity_signs();
        for a in 0..6 {
            for b in 0..6 {
                if signs[a] == signs[b] {
                    // Y couples only opposite parity
                    assert!(basis.y_op[[a, b]].abs() < 1e-12);
                } else {
                    // W couples only equal parity
                    assert!(basis.w_op[[a, b]].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn double_well_structure() {
        // deep tunneling regime (g well below the barrier scale):
        // near-degenerate doublet, third state peaked at the barrier
        let well = WellParameters { g: 0.02, mu: 1.0 - 4.2072, quartic: 12.0543 };
        let basis = solve_local_basis_well(&well, 5, None, &loose()).unwrap();
        let gap01 = basis.energies[1] - basis.energies[0];
        let gap12 = basis.energies[2] - basis.energies[1];
        assert!(gap01 < 0.2 * gap12, "doublet splitting {gap01} vs {gap12}");
        // doublet members share the same two-lobed density...
        let n = basis.y.len();
        let dens_diff = (0..n)
            .map(|i| (basis.wavefunctions[[0, i]].powi(2) - basis.wavefunctions[[1, i]].powi(2)).abs())
            .fold(0.0f64, f64::max);
        let dens_max = (0..n)
            .map(|i| basis.wavefunctions[[0, i]].powi(2))
            .fold(0.0f64, f64::max);
        assert!(dens_diff < 0.05 * dens_max, "doublet densities differ by {dens_diff}");
        // ...peaked at the classical minima +/- sqrt(-mu / (2 quartic))
        let y0 = (-well.mu / (2.0 * well.quartic)).sqrt();
        let i_peak = (0..n)
            .max_by(|&a, &b| {
                basis.wavefunctions[[0, a]]
                    .powi(2)
                    .total_cmp(&basis.wavefunctions[[0, b]].powi(2))
            })
            .unwrap();
        assert!((basis.y[i_peak].abs() - y0).abs() < 0.15 * y0);
    }

    #[test]
    fn truncation_makes_w_differ_from_y_squared() {
        let well = WellParameters { g: 0.1, mu: -3.2, quartic: 12.05 };
        let basis = solve_local_basis_well(&well, 5, None, &loose()).unwrap();
        let y2 = basis.y_op.dot(&basis.y_op);
        let diff = (&basis.w_op - &y2).mapv(|x| x * x).sum().sqrt();
        assert!(diff > 1e-6, "Frobenius difference {diff}");
        // but both are symmetric
        for a in 0..5 {
            for b in 0..5 {
                assert_abs_diff_eq!(basis.w_op[[a, b]], basis.w_op[[b, a]], epsilon = 1e-12);
            }
        }
        // and power interfaces agree with stored operators
        let y1 = operator_matrix_elements(&basis, 1).unwrap();
        let w = operator_matrix_elements(&basis, 2).unwrap();
        assert_abs_diff_eq!((&y1 - &basis.y_op).mapv(f64::abs).sum(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((&w - &basis.w_op).mapv(f64::abs).sum(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn restriction_trace_matches_energy_sum() {
        let well = WellParameters { g: 0.12, mu: -2.0, quartic: 12.0 };
        let basis = solve_local_basis_well(&well, 4, None, &loose()).unwrap();
        // build the d x d restriction of the discrete H_loc by quadrature
        let ham = build_grid_hamiltonian(&well, &basis.grid).unwrap();
        let n = ham.y.len();
        let d = basis.d;
        let mut restr = Array2::<f64>::zeros((d, d));
        for a in 0..d {
            // apply tridiagonal H to psi_a
            let mut hpsi = vec![0.0f64; n];
            for i in 0..n {
                hpsi[i] = ham.diag[i] * basis.wavefunctions[[a, i]];
                if i > 0 {
                    hpsi[i] += ham.off[i - 1] * basis.wavefunctions[[a, i - 1]];
                }
                if i + 1 < n {
                    hpsi[i] += ham.off[i] * basis.wavefunctions[[a, i + 1]];
                }
            }
            for b in 0..d {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += basis.wavefunctions[[b, i]] * hpsi[i];
                }
                restr[[b, a]] = acc * basis.step;
            }
        }
        let (vals, _) = eigh(&restr.view()).unwrap();
        let sum_restr: f64 = vals.sum();
        let sum_e: f64 = basis.energies.iter().sum();
        assert!((sum_restr - sum_e).abs() <= 1e-10 * sum_e.abs().max(1.0));
    }

    #[test]
    fn refinement_invariant_holds_at_accepted_grid() {
        let well = WellParameters { g: 0.1, mu: -3.2, quartic: 12.05 };
        let opts = loose();
        let basis = solve_local_basis_well(&well, 4, None, &opts).unwrap();
        // re-solve at half and full resolution and compare
        let half = GridSpec { y_max: basis.grid.y_max, points: basis.grid.points / 2 };
        let (e_half, _, _) = solve_on_grid(&well, &half, 4).unwrap();
        let scale = (well.g * well.omega_char()).max(1e-12);
        for q in 0..4 {
            let rel = (basis.energies[q] - e_half[q]).abs() / basis.energies[q].abs().max(scale);
            assert!(rel < 1e-8, "level {q} rel shift {rel}");
        }
    }

    #[test]
    fn doublet_gap_shrinks_with_g() {
        let mut prev_gap = f64::INFINITY;
        for &g in &[0.15, 0.10, 0.06] {
            let well = WellParameters { g, mu: -3.2, quartic: 12.05 };
            let basis = solve_local_basis_well(&well, 3, None, &loose()).unwrap();
            let gap = basis.energies[1] - basis.energies[0];
            assert!(gap < prev_gap, "gap {gap} not below {prev_gap} at g={g}");
            prev_gap = gap;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let well = WellParameters { g: 0.1, mu: -1.0, quartic: 0.0 };
        assert!(solve_local_basis_well(&well, 3, None, &loose()).is_err());
        let ok = WellParameters { g: 0.1, mu: 1.0, quartic: 0.0 };
        assert!(solve_local_basis_well(&ok, 1, None, &loose()).is_err());
        let tiny = GridSpec { y_max: 4.0, points: 32 };
        assert!(build_grid_hamiltonian(&ok, &tiny).is_err());
        // explicit domain far too small must be rejected post-solve
        let small = GridSpec { y_max: 0.4, points: 512 };
        assert!(solve_local_basis_well(&ok, 4, Some(small), &loose()).is_err());
    }
}
