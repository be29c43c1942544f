//! Two-site DMRG ground-state search for the nearest-neighbor lattice model.
//!
//! The Hamiltonian `H = sum_j (A_j + c_j N_1 W_j) + N_1 sum_j Y_j Y_{j+1}`
//! is encoded as a bond-dimension-3 matrix product operator. Sweeps optimize
//! two adjacent sites at a time: the local eigenproblem is solved by a
//! warm-started Lanczos iteration on the effective Hamiltonian built from
//! cached left/right environments, and the block is split back by SVD under a
//! combined `D_max`/discarded-weight truncation policy.

use crate::linalg::{lanczos_lowest, matmul};
use crate::localbasis::LocalBasis;
use crate::mps::{InitStrategy, MatrixProductState, Truncation};
use crate::{Error, Result};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

/// MPO form of the lattice Hamiltonian.
#[derive(Debug, Clone)]
pub struct LatticeHamiltonian {
    pub l: usize,
    pub d: usize,
    pub n1: f64,
    /// On-site matrices `A + c_j N_1 W`, edges at half weight.
    pub local_terms: Vec<Array2<f64>>,
    pub y: Array2<f64>,
    /// Per-site packed MPO matrix, rows `(w, q)`, columns `(q', w')`.
    wmats: Vec<Array2<f64>>,
}

/// Convergence summary of one DMRG run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub sweeps_done: usize,
    pub final_energy: f64,
    pub energy_delta_last_sweep: f64,
    pub max_discarded_weight: f64,
    pub wall_time: f64,
    pub converged: bool,
    /// Energy after each full sweep.
    pub energy_history: Vec<f64>,
}

/// Sweep and truncation controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DmrgControls {
    pub d_max: usize,
    pub sweep_limit: usize,
    /// Relative energy change per full sweep at which the run stops.
    pub energy_tol: f64,
    /// Per-cut relative discarded-weight target.
    pub discard_tol: f64,
    pub lanczos_tol: f64,
    pub lanczos_block: usize,
    pub lanczos_restarts: usize,
}

impl Default for DmrgControls {
    fn default() -> Self {
        Self {
            d_max: 50,
            sweep_limit: 40,
            energy_tol: 1e-10,
            discard_tol: 1e-10,
            lanczos_tol: 1e-12,
            lanczos_block: 25,
            lanczos_restarts: 12,
        }
    }
}

fn symmetry_defect(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in r + 1..n {
            worst = worst.max((m[[r, c]] - m[[c, r]]).abs());
        }
    }
    worst
}

fn mpo_matrix(local: &Array2<f64>, y: &Array2<f64>, n1: f64) -> Array2<f64> {
    let d = local.nrows();
    let mut wmat = Array2::<f64>::zeros((3 * d, 3 * d));
    let mut put = |w: usize, wp: usize, m: &Array2<f64>, scale: f64| {
        for q in 0..d {
            for qp in 0..d {
                wmat[[w * d + q, qp * 3 + wp]] = scale * m[[q, qp]];
            }
        }
    };
    let eye = Array2::<f64>::eye(d);
    put(0, 0, &eye, 1.0);
    put(1, 0, y, 1.0);
    put(2, 0, local, 1.0);
    put(2, 1, y, n1);
    put(2, 2, &eye, 1.0);
    wmat
}

/// Build the MPO Hamiltonian from a local basis and the coupling strength.
pub fn build_lattice_hamiltonian(
    basis: &LocalBasis,
    n1: f64,
    l: usize,
) -> Result<LatticeHamiltonian> {
    if l < 2 {
        return Err(Error::InvalidInput("need L >= 2".into()));
    }
    if symmetry_defect(&basis.y_op) > 1e-12 || symmetry_defect(&basis.w_op) > 1e-12 {
        return Err(Error::InvalidInput(
            "local operator matrices are not symmetric".into(),
        ));
    }
    let local_terms = crate::ed::local_terms(basis, n1, l);
    let wmats = local_terms
        .iter()
        .map(|m| mpo_matrix(m, &basis.y_op, n1))
        .collect();
    Ok(LatticeHamiltonian {
        l,
        d: basis.d,
        n1,
        local_terms,
        y: basis.y_op.clone(),
        wmats,
    })
}

/// Initialize a variational state compatible with the Hamiltonian.
pub fn initialize_state(
    h: &LatticeHamiltonian,
    strategy: InitStrategy,
) -> Result<MatrixProductState> {
    MatrixProductState::initialize(h.l, h.d, strategy)
}

fn boundary_env(w_index: usize) -> Array3<f64> {
    let mut e = Array3::<f64>::zeros((1, 3, 1));
    e[[0, w_index, 0]] = 1.0;
    e
}

fn to_matrix(a: ndarray::ArrayD<f64>, rows: usize, cols: usize) -> Array2<f64> {
    a.as_standard_layout()
        .to_owned()
        .into_shape((rows, cols))
        .expect("reshape")
}

/// Absorb one site tensor into a left environment.
fn left_env_update(env: &Array3<f64>, t: &Array3<f64>, wmat: &Array2<f64>) -> Array3<f64> {
    let (da, _, db) = env.dim();
    let (_, d, da2) = t.dim();
    // [w, b, q, a2] = sum_a env[a, w, b] t[a, q, a2]
    let e_perm = to_matrix(env.clone().into_dyn().permuted_axes(vec![1, 2, 0]), 3 * db, da);
    let t_mat = t.clone().into_shape((da, d * da2)).expect("reshape");
    let y1 = matmul(e_perm.view(), t_mat.view());
    let y1 = y1.into_shape((3, db, d, da2)).expect("reshape");
    // [(q', w'), (b, a2)] = sum_{w, q} wmat[(w, q), (q', w')] y1[w, b, q, a2]
    let y1p = to_matrix(y1.into_dyn().permuted_axes(vec![0, 2, 1, 3]), 3 * d, db * da2);
    let y2 = matmul(wmat.t(), y1p.view());
    let y2 = y2.into_shape((d, 3, db, da2)).expect("reshape");
    // [a2, w', b2] = sum_{b, q'} t[b, q', b2] y2[q', w', b, a2]
    let y2p = to_matrix(y2.into_dyn().permuted_axes(vec![2, 0, 1, 3]), db * d, 3 * da2);
    let t_mat2 = t.clone().into_shape((db * d, da2)).expect("reshape");
    let out = matmul(t_mat2.t(), y2p.view());
    let out = out.into_shape((da2, 3, da2)).expect("reshape");
    to_matrix(out.into_dyn().permuted_axes(vec![2, 1, 0]), da2 * 3, da2)
        .into_shape((da2, 3, da2))
        .expect("reshape")
}

/// Absorb one site tensor into a right environment.
fn right_env_update(env: &Array3<f64>, t: &Array3<f64>, wmat: &Array2<f64>) -> Array3<f64> {
    let (da2, _, db2) = env.dim();
    let (da, d, _) = t.dim();
    // [(b, q'), (w', a2)] = sum_{b2} t[b, q', b2] env[a2, w', b2]
    let e_perm = to_matrix(env.clone().into_dyn().permuted_axes(vec![2, 1, 0]), db2, 3 * da2);
    let t_mat = t.clone().into_shape((da * d, db2)).expect("reshape");
    let z1 = matmul(t_mat.view(), e_perm.view());
    let z1 = z1.into_shape((da, d, 3, da2)).expect("reshape");
    // [(w, q), (b, a2)] = sum_{q', w'} wmat[(w, q), (q', w')] z1[b, q', w', a2]
    let z1p = to_matrix(z1.into_dyn().permuted_axes(vec![1, 2, 0, 3]), d * 3, da * da2);
    let z2 = matmul(wmat.view(), z1p.view());
    let z2 = z2.into_shape((3, d, da, da2)).expect("reshape");
    // [a, w, b] = sum_{q, a2} t[a, q, a2] z2[w, q, b, a2]
    let z2p = to_matrix(z2.into_dyn().permuted_axes(vec![1, 3, 0, 2]), d * da2, 3 * da);
    let t_mat3 = t.clone().into_shape((da, d * da2)).expect("reshape");
    let out = matmul(t_mat3.view(), z2p.view());
    out.into_shape((da, 3, da)).expect("reshape")
}

/// `<state| H |state>` by full environment contraction (any gauge).
pub fn expectation_energy(h: &LatticeHamiltonian, state: &MatrixProductState) -> Result<f64> {
    if state.len() != h.l || state.local_dim() != h.d {
        return Err(Error::Dimension("state/Hamiltonian shape mismatch".into()));
    }
    let mut env = boundary_env(2);
    for j in 0..h.l {
        env = left_env_update(&env, &state.tensors[j], &h.wmats[j]);
    }
    Ok(env[[0, 0, 0]])
}

/// Effective two-site Hamiltonian built from cached environments.
struct TwoSiteOp<'a> {
    left: &'a Array3<f64>,
    right: &'a Array3<f64>,
    w1: &'a Array2<f64>,
    w2: &'a Array2<f64>,
    dims: (usize, usize, usize, usize),
}

impl TwoSiteOp<'_> {
    fn len(&self) -> usize {
        let (dl, d1, d2, dr) = self.dims;
        dl * d1 * d2 * dr
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let (dl, d1, d2, dr) = self.dims;
        let v_mat = Array2::from_shape_vec((dl * d1 * d2, dr), v.to_vec()).expect("shape");
        // X1[a', q1', q2', w2, b] = sum_{b'} v[a', q1', q2', b'] right[b, w2, b']
        let r_perm = to_matrix(
            self.right.clone().into_dyn().permuted_axes(vec![2, 1, 0]),
            dr,
            3 * dr,
        );
        let x1 = matmul(v_mat.view(), r_perm.view())
            .into_shape((dl, d1, d2, 3, dr))
            .expect("reshape");
        // X2[w1, q2, a', q1', b] = sum_{q2', w2} w2mat[(w1, q2), (q2', w2)] X1
        let x1p = to_matrix(
            x1.into_dyn().permuted_axes(vec![2, 3, 0, 1, 4]),
            d2 * 3,
            dl * d1 * dr,
        );
        let x2 = matmul(self.w2.view(), x1p.view())
            .into_shape((3, d2, dl, d1, dr))
            .expect("reshape");
        // X3[w, q1, a', q2, b] = sum_{q1', w1} w1mat[(w, q1), (q1', w1)] X2
        let x2p = to_matrix(
            x2.into_dyn().permuted_axes(vec![3, 0, 2, 1, 4]),
            d1 * 3,
            dl * d2 * dr,
        );
        let x3 = matmul(self.w1.view(), x2p.view())
            .into_shape((3, d1, dl, d2, dr))
            .expect("reshape");
        // out[a, q1, q2, b] = sum_{w, a'} left[a, w, a'] X3[w, q1, a', q2, b]
        let x3p = to_matrix(
            x3.into_dyn().permuted_axes(vec![0, 2, 1, 3, 4]),
            3 * dl,
            d1 * d2 * dr,
        );
        let l_mat = self
            .left
            .clone()
            .into_shape((dl, 3 * dl))
            .expect("reshape");
        let res = matmul(l_mat.view(), x3p.view());
        out.copy_from_slice(res.as_slice().expect("contiguous"));
    }
}

fn merged_block(state: &MatrixProductState, c: usize) -> (Array2<f64>, (usize, usize, usize, usize)) {
    let (dl, d1, m) = state.tensors[c].dim();
    let (_, d2, dr) = state.tensors[c + 1].dim();
    let t1 = state.tensors[c].clone().into_shape((dl * d1, m)).expect("reshape");
    let t2 = state.tensors[c + 1].clone().into_shape((m, d2 * dr)).expect("reshape");
    (matmul(t1.view(), t2.view()), (dl, d1, d2, dr))
}

/// Variational ground-state search. The state is returned even when the
/// sweep limit is hit; `report.converged` records which case occurred.
pub fn dmrg_ground_state(
    h: &LatticeHamiltonian,
    init: MatrixProductState,
    controls: &DmrgControls,
) -> Result<(MatrixProductState, ConvergenceReport)> {
    if controls.d_max < 2 {
        return Err(Error::InvalidInput("D_max must be >= 2".into()));
    }
    if !(controls.energy_tol > 0.0) {
        return Err(Error::InvalidInput("energy_tol must be positive".into()));
    }
    if init.len() != h.l || init.local_dim() != h.d {
        return Err(Error::Dimension("initial state incompatible with H".into()));
    }
    let start = Instant::now();
    let l = h.l;
    let policy = Truncation {
        d_max: controls.d_max,
        discard_tol: controls.discard_tol,
    };
    let mut state = init;
    state.move_center_to(0, &policy)?;
    state.normalize();

    // right environments: right_envs[j] covers sites j..L-1
    let mut right_envs: Vec<Array3<f64>> = vec![Array3::zeros((0, 0, 0)); l + 1];
    right_envs[l] = boundary_env(0);
    for j in (1..l).rev() {
        right_envs[j] = right_env_update(&right_envs[j + 1], &state.tensors[j], &h.wmats[j]);
    }
    let mut left_envs: Vec<Array3<f64>> = vec![Array3::zeros((0, 0, 0)); l + 1];
    left_envs[0] = boundary_env(2);

    let mut history: Vec<f64> = Vec::new();
    let mut max_disc = 0.0f64;
    let mut converged = false;
    let mut last_delta = f64::INFINITY;

    for _sweep in 0..controls.sweep_limit {
        let mut sweep_energy = f64::INFINITY;

        // left-to-right half sweep
        for c in 0..l - 1 {
            let (theta, dims) = merged_block(&state, c);
            let op = TwoSiteOp {
                left: &left_envs[c],
                right: &right_envs[c + 2],
                w1: &h.wmats[c],
                w2: &h.wmats[c + 1],
                dims,
            };
            let warm: Vec<f64> = theta.iter().cloned().collect();
            let n = op.len();
            let (ritz, ground, _resid) = lanczos_lowest(
                n,
                |v, out| op.apply(v, out),
                &warm,
                controls.lanczos_block.min(n),
                controls.lanczos_restarts,
                controls.lanczos_tol,
            )?;
            sweep_energy = ritz[0];
            let gmat = Array2::from_shape_vec((dims.0 * dims.1, dims.2 * dims.3), ground)
                .expect("shape");
            let disc = state.set_two_site(c, &gmat, dims, &policy, c + 1)?;
            max_disc = max_disc.max(disc);
            left_envs[c + 1] = left_env_update(&left_envs[c], &state.tensors[c], &h.wmats[c]);
        }

        // right-to-left half sweep
        for c in (0..l - 1).rev() {
            let (theta, dims) = merged_block(&state, c);
            let op = TwoSiteOp {
                left: &left_envs[c],
                right: &right_envs[c + 2],
                w1: &h.wmats[c],
                w2: &h.wmats[c + 1],
                dims,
            };
            let warm: Vec<f64> = theta.iter().cloned().collect();
            let n = op.len();
            let (ritz, ground, _resid) = lanczos_lowest(
                n,
                |v, out| op.apply(v, out),
                &warm,
                controls.lanczos_block.min(n),
                controls.lanczos_restarts,
                controls.lanczos_tol,
            )?;
            sweep_energy = ritz[0];
            let gmat = Array2::from_shape_vec((dims.0 * dims.1, dims.2 * dims.3), ground)
                .expect("shape");
            let disc = state.set_two_site(c, &gmat, dims, &policy, c)?;
            max_disc = max_disc.max(disc);
            right_envs[c + 1] =
                right_env_update(&right_envs[c + 2], &state.tensors[c + 1], &h.wmats[c + 1]);
        }

        let prev = history.last().copied();
        history.push(sweep_energy);
        if let Some(p) = prev {
            last_delta = (p - sweep_energy).abs() / sweep_energy.abs().max(1.0);
            if last_delta < controls.energy_tol {
                converged = true;
                break;
            }
        }
    }

    state.normalize();
    let final_energy = *history.last().expect("at least one sweep");
    let report = ConvergenceReport {
        sweeps_done: history.len(),
        final_energy,
        energy_delta_last_sweep: last_delta,
        max_discarded_weight: max_disc,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
        energy_history: history,
    };
    Ok((state, report))
}

/// Schmidt values across `cut` (1-based).
pub fn schmidt_spectrum(state: &MatrixProductState, cut: usize) -> Result<Vec<f64>> {
    state.schmidt_spectrum(cut)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"ZZMPS01\n";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    l: usize,
    d: usize,
    center: usize,
    /// `(left, phys, right)` dimensions per site, row-major payload order.
    shapes: Vec<(usize, usize, usize)>,
    meta: serde_json::Value,
}

/// Atomically persist a state: temp file in the target directory, then rename.
pub fn save_checkpoint(
    state: &MatrixProductState,
    meta: serde_json::Value,
    path: &Path,
) -> Result<()> {
    let header = CheckpointHeader {
        format_version: 1,
        l: state.len(),
        d: state.local_dim(),
        center: state.center,
        shapes: state.tensors.iter().map(|t| t.dim()).collect(),
        meta,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(CHECKPOINT_MAGIC)?;
        f.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        f.write_all(&header_bytes)?;
        for t in &state.tensors {
            for &x in t.iter() {
                f.write_all(&x.to_le_bytes())?;
            }
        }
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Load a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(MatrixProductState, serde_json::Value)> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::InvalidInput("not a checkpoint file".into()));
    }
    let mut len8 = [0u8; 8];
    f.read_exact(&mut len8)?;
    let hlen = u64::from_le_bytes(len8) as usize;
    let mut hbuf = vec![0u8; hlen];
    f.read_exact(&mut hbuf)?;
    let header: CheckpointHeader = serde_json::from_slice(&hbuf)?;
    if header.format_version != 1 {
        return Err(Error::InvalidInput(format!(
            "unsupported checkpoint version {}",
            header.format_version
        )));
    }
    let mut tensors = Vec::with_capacity(header.l);
    for &(dl, d, dr) in &header.shapes {
        let n = dl * d * dr;
        let mut buf = vec![0u8; n * 8];
        f.read_exact(&mut buf)?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Array3::from_shape_vec((dl, d, dr), data).expect("shape"));
    }
    if tensors.len() != header.l {
        return Err(Error::InvalidInput("truncated checkpoint".into()));
    }
    let schmidt = vec![Vec::new(); header.l - 1];
    Ok((
        MatrixProductState {
            tensors,
            center: header.center,
            schmidt,
        },
        header.meta,
    ))
}
