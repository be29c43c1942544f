//! Matrix-product-state container: canonical forms, center moves, truncation
//! and Schmidt spectra.
//!
//! Site tensors are stored as `(left bond, physical, right bond)` arrays.
//! Tensors strictly left of the orthogonality center are left-orthonormal,
//! tensors strictly right of it right-orthonormal; all gauge moves go through
//! the thin SVD so Schmidt spectra come out for free.

use crate::linalg::svd;
use crate::{Error, Result};
use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Initialization strategies for the variational state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Seeded dense random tensors at the requested bond dimension.
    Random { seed: u64, d_init: usize },
    /// Product state alternating the two well orientations `(e1 ± e2)/sqrt(2)`.
    Staggered,
    /// Product state in the local ground level everywhere.
    Linear,
}

/// Truncation policy for a single split.
#[derive(Debug, Clone, Copy)]
pub struct Truncation {
    pub d_max: usize,
    /// Largest relative Schmidt weight allowed to be discarded.
    pub discard_tol: f64,
}

impl Truncation {
    /// Exact gauge move: keep everything up to numerical rank.
    pub fn exact() -> Self {
        Self { d_max: usize::MAX, discard_tol: 0.0 }
    }
}

/// Open-boundary matrix product state with a tracked orthogonality center.
#[derive(Debug, Clone)]
pub struct MatrixProductState {
    pub tensors: Vec<Array3<f64>>,
    pub center: usize,
    /// Schmidt values per cut (cut `c` separates sites `0..=c` from the rest);
    /// entries are refreshed whenever a gauge move crosses the cut.
    pub schmidt: Vec<Vec<f64>>,
}

fn product_state(locals: &[Vec<f64>]) -> MatrixProductState {
    let l = locals.len();
    let tensors = locals
        .iter()
        .map(|v| {
            let d = v.len();
            let mut t = Array3::<f64>::zeros((1, d, 1));
            for (q, &x) in v.iter().enumerate() {
                t[[0, q, 0]] = x;
            }
            t
        })
        .collect();
    MatrixProductState {
        tensors,
        center: l - 1,
        schmidt: vec![vec![1.0]; l - 1],
    }
}

impl MatrixProductState {
    /// Build an initial normalized state in canonical form.
    pub fn initialize(l: usize, d: usize, strategy: InitStrategy) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidInput("need L >= 2 sites".into()));
        }
        if d < 2 {
            return Err(Error::InvalidInput("need local dimension >= 2".into()));
        }
        let mut state = match strategy {
            InitStrategy::Linear => {
                let mut e1 = vec![0.0; d];
                e1[0] = 1.0;
                product_state(&vec![e1; l])
            }
            InitStrategy::Staggered => {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                let locals: Vec<Vec<f64>> = (0..l)
                    .map(|j| {
                        let mut v = vec![0.0; d];
                        v[0] = r;
                        v[1] = if j % 2 == 0 { r } else { -r };
                        v
                    })
                    .collect();
                product_state(&locals)
            }
            InitStrategy::Random { seed, d_init } => {
                if d_init < 1 {
                    return Err(Error::InvalidInput("D_init must be >= 1".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let tensors: Vec<Array3<f64>> = (0..l)
                    .map(|j| {
                        let dl = if j == 0 { 1 } else { d_init };
                        let dr = if j == l - 1 { 1 } else { d_init };
                        let mut t = Array3::<f64>::zeros((dl, d, dr));
                        for x in t.iter_mut() {
                            *x = rng.gen_range(-1.0..1.0);
                        }
                        t
                    })
                    .collect();
                let mut s = MatrixProductState {
                    tensors,
                    center: l - 1,
                    schmidt: vec![Vec::new(); l - 1],
                };
                // bring to canonical form; exact moves also trim dead ranks
                s.recanonicalize()?;
                s
            }
        };
        state.normalize();
        // populate every cut's Schmidt list
        state.move_center_to(0, &Truncation::exact())?;
        state.move_center_to(l - 1, &Truncation::exact())?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn local_dim(&self) -> usize {
        self.tensors[0].dim().1
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        (0..self.len() - 1)
            .map(|c| self.tensors[c].dim().2)
            .collect()
    }

    /// Frobenius norm of the center tensor = norm of the state.
    pub fn norm(&self) -> f64 {
        self.tensors[self.center]
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.tensors[self.center].mapv_inplace(|x| x / n);
        }
    }

    /// Move the center one site to the right, truncating the crossed bond.
    /// Returns the relative discarded weight.
    pub fn shift_center_right(&mut self, policy: &Truncation) -> Result<f64> {
        let c = self.center;
        if c + 1 >= self.len() {
            return Err(Error::InvalidInput("center already at right edge".into()));
        }
        let (dl, d, dr) = self.tensors[c].dim();
        let m = self.tensors[c]
            .clone()
            .into_shape((dl * d, dr))
            .expect("contiguous tensor");
        let fac = svd(&m.view())?;
        let (kept, s_kept, discarded) = truncate_spectrum(&fac.s, policy);
        let u = fac.u.slice(ndarray::s![.., ..kept]).to_owned();
        self.tensors[c] = u.into_shape((dl, d, kept)).expect("reshape");
        // absorb S V^T into the right neighbor
        let mut sv = fac.vt.slice(ndarray::s![..kept, ..]).to_owned();
        for (i, &sv_i) in s_kept.iter().enumerate() {
            sv.row_mut(i).mapv_inplace(|x| x * sv_i);
        }
        let (rl, rd, rr) = self.tensors[c + 1].dim();
        let right = self.tensors[c + 1]
            .clone()
            .into_shape((rl, rd * rr))
            .expect("contiguous tensor");
        let merged = crate::linalg::matmul(sv.view(), right.view());
        self.tensors[c + 1] = merged.into_shape((kept, rd, rr)).expect("reshape");
        self.schmidt[c] = normalized_schmidt(&s_kept);
        self.center = c + 1;
        Ok(discarded)
    }

    /// Move the center one site to the left, truncating the crossed bond.
    pub fn shift_center_left(&mut self, policy: &Truncation) -> Result<f64> {
        let c = self.center;
        if c == 0 {
            return Err(Error::InvalidInput("center already at left edge".into()));
        }
        let (dl, d, dr) = self.tensors[c].dim();
        let m = self.tensors[c]
            .clone()
            .into_shape((dl, d * dr))
            .expect("contiguous tensor");
        let fac = svd(&m.view())?;
        let (kept, s_kept, discarded) = truncate_spectrum(&fac.s, policy);
        let vt = fac.vt.slice(ndarray::s![..kept, ..]).to_owned();
        self.tensors[c] = vt.into_shape((kept, d, dr)).expect("reshape");
        let mut us = fac.u.slice(ndarray::s![.., ..kept]).to_owned();
        for (i, &s_i) in s_kept.iter().enumerate() {
            us.column_mut(i).mapv_inplace(|x| x * s_i);
        }
        let (ll, ld, lr) = self.tensors[c - 1].dim();
        let left = self.tensors[c - 1]
            .clone()
            .into_shape((ll * ld, lr))
            .expect("contiguous tensor");
        let merged = crate::linalg::matmul(left.view(), us.view());
        self.tensors[c - 1] = merged.into_shape((ll, ld, kept)).expect("reshape");
        self.schmidt[c - 1] = normalized_schmidt(&s_kept);
        self.center = c - 1;
        Ok(discarded)
    }

    /// Walk the center to `site`, truncating each crossed bond with `policy`.
    /// Returns the maximum relative discarded weight along the way.
    pub fn move_center_to(&mut self, site: usize, policy: &Truncation) -> Result<f64> {
        if site >= self.len() {
            return Err(Error::InvalidInput(format!(
                "site {site} outside chain of length {}",
                self.len()
            )));
        }
        let mut max_disc = 0.0f64;
        while self.center < site {
            max_disc = max_disc.max(self.shift_center_right(policy)?);
        }
        while self.center > site {
            max_disc = max_disc.max(self.shift_center_left(policy)?);
        }
        Ok(max_disc)
    }

    /// Restore canonical form from arbitrary tensors (center ends at site 0).
    fn recanonicalize(&mut self) -> Result<()> {
        // claim the center at the right edge, then sweep it to the left edge
        // with exact moves; this right-orthonormalizes every other tensor.
        self.center = self.len() - 1;
        for _ in 0..self.len() - 1 {
            self.shift_center_left(&Truncation::exact())?;
        }
        Ok(())
    }

    /// Schmidt values across `cut` (1-based, `1..=L-1`), descending,
    /// squared-sum normalized.
    pub fn schmidt_spectrum(&self, cut: usize) -> Result<Vec<f64>> {
        if cut < 1 || cut >= self.len() {
            return Err(Error::InvalidInput(format!(
                "cut {cut} outside 1..{}",
                self.len() - 1
            )));
        }
        let stored = &self.schmidt[cut - 1];
        if !stored.is_empty() {
            return Ok(stored.clone());
        }
        let mut scratch = self.clone();
        scratch.move_center_to(cut - 1, &Truncation::exact())?;
        scratch.shift_center_right(&Truncation::exact())?;
        Ok(scratch.schmidt[cut - 1].clone())
    }

    /// Replace the two-site block `(c, c+1)` from a merged tensor, splitting
    /// with `policy` and leaving the center on `new_center` (`c` or `c+1`).
    pub fn set_two_site(
        &mut self,
        c: usize,
        theta: &Array2<f64>,
        dims: (usize, usize, usize, usize),
        policy: &Truncation,
        new_center: usize,
    ) -> Result<f64> {
        let (dl, d1, d2, dr) = dims;
        let fac = svd(&theta.view())?;
        let (kept, s_kept, discarded) = truncate_spectrum(&fac.s, policy);
        let u = fac.u.slice(ndarray::s![.., ..kept]).to_owned();
        let vt = fac.vt.slice(ndarray::s![..kept, ..]).to_owned();
        let total: f64 = s_kept.iter().map(|x| x * x).sum::<f64>().sqrt();
        if new_center == c + 1 {
            self.tensors[c] = u.into_shape((dl, d1, kept)).expect("reshape");
            let mut sv = vt;
            for (i, &s_i) in s_kept.iter().enumerate() {
                sv.row_mut(i).mapv_inplace(|x| x * s_i / total);
            }
            self.tensors[c + 1] = sv.into_shape((kept, d2, dr)).expect("reshape");
        } else if new_center == c {
            self.tensors[c + 1] = vt.into_shape((kept, d2, dr)).expect("reshape");
            let mut us = u;
            for (i, &s_i) in s_kept.iter().enumerate() {
                us.column_mut(i).mapv_inplace(|x| x * s_i / total);
            }
            self.tensors[c] = us.into_shape((dl, d1, kept)).expect("reshape");
        } else {
            return Err(Error::InvalidInput("new_center must be c or c+1".into()));
        }
        self.schmidt[c] = normalized_schmidt(&s_kept);
        self.center = new_center;
        Ok(discarded)
    }

    /// Expand the state into a dense `d^L` vector; test-scale sizes only.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        let l = self.len();
        let d = self.local_dim();
        let dim = d
            .checked_pow(l as u32)
            .filter(|&x| x <= 1 << 22)
            .ok_or_else(|| Error::ResourceGuard("dense expansion too large".into()))?;
        // row r of `amps` holds the bond vector for physical prefix r
        let mut amps = Array2::<f64>::zeros((1, 1));
        amps[[0, 0]] = 1.0;
        for t in &self.tensors {
            let (dl, td, dr) = t.dim();
            let mat = t.clone().into_shape((dl, td * dr)).expect("reshape");
            amps = crate::linalg::matmul(amps.view(), mat.view())
                .into_shape((amps.nrows() * td, dr))
                .expect("reshape");
        }
        debug_assert_eq!(amps.nrows(), dim);
        Ok(amps.column(0).to_vec())
    }

    /// Max deviation from the canonical-form contraction identities.
    pub fn canonical_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (j, t) in self.tensors.iter().enumerate() {
            let (dl, d, dr) = t.dim();
            if j < self.center {
                // sum_{a,q} T[a,q,b] T[a,q,b'] = delta
                let m = t.clone().into_shape((dl * d, dr)).expect("reshape");
                let gram = crate::linalg::matmul(m.t(), m.view());
                worst = worst.max(identity_defect(&gram));
            } else if j > self.center {
                let m = t.clone().into_shape((dl, d * dr)).expect("reshape");
                let gram = crate::linalg::matmul(m.view(), m.t());
                worst = worst.max(identity_defect(&gram));
            }
        }
        worst
    }
}

fn identity_defect(gram: &Array2<f64>) -> f64 {
    let n = gram.nrows();
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            let expect = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((gram[[r, c]] - expect).abs());
        }
    }
    worst
}

fn normalized_schmidt(s: &[f64]) -> Vec<f64> {
    let total: f64 = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    if total > 0.0 {
        s.iter().map(|x| x / total).collect()
    } else {
        s.to_vec()
    }
}

/// Decide how many singular values to keep: at most `d_max`, discarding at
/// most `discard_tol` relative squared weight (whichever binds first), always
/// keeping at least one.
fn truncate_spectrum(s: &Array1<f64>, policy: &Truncation) -> (usize, Vec<f64>, f64) {
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total <= 0.0 {
        return (1, vec![s[0].max(0.0)], 0.0);
    }
    let hard_cap = policy.d_max.min(s.len()).max(1);
    // numerical-rank floor: drop exact zeros regardless of policy
    let mut kept = s
        .iter()
        .take(hard_cap)
        .take_while(|&&x| x > 1e-14 * s[0])
        .count()
        .max(1);
    if policy.discard_tol > 0.0 {
        let mut tail = 0.0;
        let mut k = kept;
        while k > 1 {
            let next = tail + s[k - 1] * s[k - 1];
            if next / total > policy.discard_tol {
                break;
            }
            tail = next;
            k -= 1;
        }
        kept = k;
    }
    let discarded: f64 = s.iter().skip(kept).map(|x| x * x).sum::<f64>() / total;
    (kept, s.iter().take(kept).cloned().collect(), discarded)
}
