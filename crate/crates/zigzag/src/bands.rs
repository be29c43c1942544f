//! Long-range phonon scattering functions and the second-order check of the
//! short-range mapping.
//!
//! The `q -> q` scattering channel of the Taylor-expanded interaction is a
//! function of a `2q-1` component quasimomentum vector. The effective
//! nearest-neighbor model is built to match it at the soft mode `pi-vector`
//! up to second order; this module evaluates both sides and quantifies the
//! match.

use crate::model::{
    coupling_coefficient_n, onsite_coefficient_m, riemann_zeta, taylor_coefficient_b,
};
use crate::{Error, Result};
use std::f64::consts::PI;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Quasimomentum vector with `2q - 1` components in the Brillouin zone.
#[derive(Debug, Clone, PartialEq)]
pub struct KVector(pub Vec<f64>);

impl KVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.iter().any(|k| !(-PI - 1e-12..=PI + 1e-12).contains(k)) {
            return Err(Error::Domain("k components must lie in [-pi, pi]".into()));
        }
        Ok(Self(components))
    }

    /// The soft-mode point `(pi, ..., pi)` for channel `q`.
    pub fn soft_mode(q: u32) -> Self {
        Self(vec![PI; (2 * q - 1) as usize])
    }
}

fn series_cutoff(s: f64, tol: f64) -> u64 {
    // integral tail bound: sum_{l > L} l^(1-s)... <= L^(1-s)/(s-1)
    let l = (tol * (s - 1.0)).powf(1.0 / (1.0 - s));
    (l.ceil() as u64).clamp(64, 20_000_000)
}

fn scattering_series(k: &[f64], q: u32, alpha: f64, lmax: u64) -> f64 {
    let s = alpha + 2.0 * q as f64;
    let mut total = 0.0f64;
    let ksum: f64 = k.iter().sum();
    for l in 1..=lmax {
        let lf = l as f64;
        let mut term = (ksum * 0.5 * lf).sin();
        for &kt in k {
            term *= (kt * 0.5 * lf).sin();
        }
        total += term / lf.powf(s);
    }
    -total
}

/// Scattering function of channel `q` by direct summation, truncated when the
/// analytic tail bound drops below `tol`.
pub fn scattering_function(k: &KVector, q: u32, alpha: f64, tol: f64) -> Result<f64> {
    if q < 1 {
        return Err(Error::Domain("q must be >= 1".into()));
    }
    if k.0.len() != (2 * q - 1) as usize {
        return Err(Error::Dimension(format!(
            "channel q={q} needs {} components, got {}",
            2 * q - 1,
            k.0.len()
        )));
    }
    let s = alpha + 2.0 * q as f64;
    Ok(scattering_series(&k.0, q, alpha, series_cutoff(s, tol)))
}

/// Closed-form value at the soft mode:
/// `(-1)^q (2^s - 1)/2^s zeta(s)` with `s = alpha + 2q`.
pub fn soft_mode_value(q: u32, alpha: f64) -> Result<f64> {
    if q < 1 {
        return Err(Error::Domain("q must be >= 1".into()));
    }
    let s = alpha + 2.0 * q as f64;
    let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * (2f64.powf(s) - 1.0) / 2f64.powf(s) * riemann_zeta(s)?)
}

/// Closed-form off-diagonal Hessian entry of the scattering function at the
/// soft mode, for `q >= 2`. The diagonal entry is exactly twice this value.
pub fn hessian_offdiagonal(q: u32, alpha: f64) -> Result<f64> {
    if q < 2 {
        return Err(Error::Domain(
            "hessian_offdiagonal requires q >= 2; the q = 1 channel is handled by the dedicated N_1 branch".into(),
        ));
    }
    let s = alpha + 2.0 * q as f64;
    let sign = if q % 2 == 0 { -1.0 } else { 1.0 };
    Ok(sign * (2f64.powf(s - 2.0) - 1.0) / 2f64.powf(s) * riemann_zeta(s - 2.0)?)
}

/// Curvature of the scattering function at the soft mode along the symmetric
/// direction `(1, ..., 1)`: the full Hessian contracted with that direction.
pub fn symmetric_curvature(q: u32, alpha: f64) -> Result<f64> {
    if q == 1 {
        // eta(alpha)/2, with the alpha -> 1 limit ln(2)/2 taken analytically
        if alpha == 1.0 {
            return Ok(0.5 * 2f64.ln());
        }
        return Ok(0.5 * (1.0 - 2f64.powf(1.0 - alpha)) * riemann_zeta(alpha)?);
    }
    let h = hessian_offdiagonal(q, alpha)?;
    let n = 2.0 * q as f64 - 1.0;
    // (2q-1) diagonal entries of 2h plus (2q-1)(2q-2) off-diagonal entries
    Ok(n * 2.0 * h + n * (n - 1.0) * h)
}

/// Effective nearest-neighbor scattering kernel, normalized by
/// `2^(2q+1) b_q` so that it is directly comparable with the long-range
/// scattering function.
pub fn short_range_dispersion(k: &KVector, q: u32, alpha: f64) -> Result<f64> {
    if q < 1 {
        return Err(Error::Domain("q must be >= 1".into()));
    }
    if k.0.len() != (2 * q - 1) as usize {
        return Err(Error::Dimension(format!(
            "channel q={q} needs {} components, got {}",
            2 * q - 1,
            k.0.len()
        )));
    }
    let m_q = onsite_coefficient_m(q, alpha)?;
    let n_q = coupling_coefficient_n(q, alpha)?;
    let b_q = taylor_coefficient_b(q, alpha);
    let big_k: f64 = k.0.iter().take(q as usize).sum();
    let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
    let quad = 2.0 * (1.0 - sign * big_k.cos());
    Ok(sign * (m_q - n_q * quad) / (2f64.powf(2.0 * q as f64 + 1.0) * b_q))
}

fn match_cutoff(q: u32, alpha: f64) -> u64 {
    let s = alpha + 2.0 * q as f64;
    if s <= 3.5 {
        // slowest channel: second-derivative tail decays like 1/l
        4_000_000
    } else {
        // tail of the twice-differentiated series ~ L^(3-s)/(4(s-3))
        let l = (4e-9 * (s - 3.0)).powf(1.0 / (3.0 - s));
        (l.ceil() as u64).clamp(2_000, 20_000_000)
    }
}

/// Value, slope and curvature of the truncated scattering series along the
/// symmetric direction `k_i = pi + delta`, by term-wise analytic
/// differentiation (no finite-difference error; only the series tail is
/// approximate).
///
/// Each term is `A B^m / l^s` with `A = sin(a theta)`, `B = sin(b theta)`,
/// `theta = pi + delta`, `a = (2q-1) l / 2`, `b = l / 2`, `m = 2q - 1`.
fn symmetric_series_jet(q: u32, alpha: f64, lmax: u64) -> (f64, f64, f64) {
    let s = alpha + 2.0 * q as f64;
    let m = (2 * q - 1) as f64;
    let theta = PI;
    let (mut v, mut g, mut c) = (0.0f64, 0.0f64, 0.0f64);
    for l in 1..=lmax {
        let lf = l as f64;
        let a = m * lf / 2.0;
        let b = lf / 2.0;
        let (sa, ca) = (a * theta).sin_cos();
        let (sb, cb) = (b * theta).sin_cos();
        let bm = sb.powi(2 * q as i32 - 1);
        let bm1 = sb.powi(2 * q as i32 - 2);
        let val = sa * bm;
        let grad = a * ca * bm + m * b * sa * bm1 * cb;
        let mut curv = -(a * a + m * b * b) * sa * bm + 2.0 * a * m * b * ca * bm1 * cb;
        if q > 1 {
            let bm2 = sb.powi(2 * q as i32 - 3);
            curv += m * (m - 1.0) * b * b * sa * bm2 * cb * cb;
        }
        let w = lf.powf(-s);
        v += val * w;
        g += grad * w;
        c += curv * w;
    }
    (-v, -g, -c)
}

/// Maximum mismatch between the long-range scattering function and the
/// short-range kernel at the soft mode, over value, slope and curvature along
/// the symmetric direction. Both sides are differentiated analytically.
pub fn verify_second_order_match(q: u32, alpha: f64) -> Result<f64> {
    let lmax = match_cutoff(q, alpha);
    let (v_long, g_long, c_long) = symmetric_series_jet(q, alpha, lmax);

    // Short-range kernel along the same direction: depends on
    // K = sum of the first q components = q (pi + delta).
    let m_q = onsite_coefficient_m(q, alpha)?;
    let n_q = coupling_coefficient_n(q, alpha)?;
    let b_q = taylor_coefficient_b(q, alpha);
    let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
    let norm = 2f64.powf(2.0 * q as f64 + 1.0) * b_q;
    let qf = q as f64;
    let (skq, ckq) = (qf * PI).sin_cos();
    let v_short = sign * (m_q - n_q * 2.0 * (1.0 - sign * ckq)) / norm;
    let g_short = sign * (-n_q * 2.0 * sign * qf * skq) / norm;
    let c_short = sign * (-n_q * 2.0 * sign * qf * qf * ckq) / norm;

    let mism = (v_long - v_short)
        .abs()
        .max((g_long - g_short).abs())
        .max((c_long - c_short).abs());
    Ok(mism)
}

/// High-symmetry scan paths for band CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandPath {
    /// 1D Brillouin zone `[-pi, pi]`, valid for any `q` along the symmetric
    /// direction (all components equal).
    Line1d,
    /// `Gamma -> pi-vector -> X`, then `M -> pi-vector`, for `q = 2`.
    GammaXM,
}

#[derive(Debug, Clone)]
pub struct BandSample {
    /// Path parameter (cumulative Euclidean arc length).
    pub t: f64,
    pub xi_long: f64,
    pub xi_short: f64,
    /// Second-order expansion around the soft mode.
    pub parabola: f64,
}

fn path_points(path: BandPath, q: u32, samples: usize) -> Result<Vec<Vec<f64>>> {
    let n = (2 * q - 1) as usize;
    match path {
        BandPath::Line1d => Ok((0..samples)
            .map(|i| {
                let k = -PI + 2.0 * PI * i as f64 / (samples - 1) as f64;
                vec![k; n]
            })
            .collect()),
        BandPath::GammaXM => {
            if q != 2 {
                return Err(Error::Domain("gamma-x-m path is defined for q = 2".into()));
            }
            let gamma = [0.0, 0.0, 0.0];
            let pi3 = [PI, PI, PI];
            let x = [0.0, 0.0, PI];
            let m = [0.0, PI, PI];
            let segs: [([f64; 3], [f64; 3]); 3] = [(gamma, pi3), (pi3, x), (m, pi3)];
            let per = (samples / 3).max(2);
            let mut pts = Vec::new();
            for (a, b) in segs {
                for i in 0..per {
                    let t = i as f64 / (per - 1) as f64;
                    pts.push((0..3).map(|c| a[c] + t * (b[c] - a[c])).collect());
                }
            }
            Ok(pts)
        }
    }
}

fn quadratic_expansion(k: &[f64], q: u32, alpha: f64) -> Result<f64> {
    let value = soft_mode_value(q, alpha)?;
    let delta: Vec<f64> = k.iter().map(|&x| x - PI).collect();
    let quad = if q == 1 {
        symmetric_curvature(1, alpha)? * delta[0] * delta[0]
    } else {
        let h = hessian_offdiagonal(q, alpha)?;
        let sum: f64 = delta.iter().sum();
        let sq: f64 = delta.iter().map(|d| d * d).sum();
        // delta' H delta with H = h (ones) + h I
        h * (sum * sum + sq)
    };
    Ok(value + 0.5 * quad)
}

/// Sample the long-range scattering function, the short-range kernel and the
/// soft-mode parabola along a scan path.
pub fn band_scan(
    path: BandPath,
    q: u32,
    alpha: f64,
    samples: usize,
    tol: f64,
) -> Result<Vec<BandSample>> {
    if samples < 4 {
        return Err(Error::InvalidInput("need at least 4 samples".into()));
    }
    let pts = path_points(path, q, samples)?;
    let mut ts = Vec::with_capacity(pts.len());
    let mut acc = 0.0;
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            let d2: f64 = p
                .iter()
                .zip(&pts[i - 1])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            acc += d2.sqrt();
        }
        ts.push(acc);
    }
    let eval = |(t, p): (f64, &Vec<f64>)| -> Result<BandSample> {
        let kv = KVector(p.clone());
        Ok(BandSample {
            t,
            xi_long: scattering_function(&kv, q, alpha, tol)?,
            xi_short: short_range_dispersion(&kv, q, alpha)?,
            parabola: quadratic_expansion(p, q, alpha)?,
        })
    };
    #[cfg(feature = "parallel")]
    {
        ts.par_iter()
            .zip(pts.par_iter())
            .map(|(&t, p)| eval((t, p)))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ts.iter()
            .zip(pts.iter())
            .map(|(&t, p)| eval((t, p)))
            .collect()
    }
}
