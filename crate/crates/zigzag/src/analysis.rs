//! Criticality extraction: thermodynamic extrapolation, correlation-decay
//! fits, finite-size-scaling collapse, central-charge fits and the
//! phase-boundary power law.
//!
//! All fitters are deterministic data-in/data-out functions. Linear problems
//! go through an SVD least-squares solver with covariance-based
//! uncertainties; the collapse uses a crossing stage followed by a
//! derivative-free simplex refinement against a monotone cubic master curve.

use crate::linalg::svd;
use crate::{Error, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Named parameters with uncertainties from one fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub values: BTreeMap<String, f64>,
    pub uncertainties: BTreeMap<String, f64>,
    pub residual_norm: f64,
    pub model_tag: String,
}

impl FitResult {
    pub fn value(&self, name: &str) -> f64 {
        self.values[name]
    }

    pub fn uncertainty(&self, name: &str) -> f64 {
        self.uncertainties[name]
    }
}

/// Finite-size-scaling collapse output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollapseResult {
    pub omega_c: f64,
    /// `gamma_1 = beta / nu`
    pub beta_over_nu: f64,
    /// `-gamma_2 = 1 / nu`
    pub inv_nu: f64,
    pub collapse_cost: f64,
}

/// Phase classification from the extrapolated order parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Linear,
    Zigzag,
}

/// Least squares `min |A x - b|` via SVD, returning the solution and the
/// covariance-based standard errors of the parameters.
fn lstsq(a: &Array2<f64>, b: &Array1<f64>) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let (n, p) = a.dim();
    if n < p {
        return Err(Error::InvalidInput(format!(
            "least squares needs >= {p} rows, got {n}"
        )));
    }
    let fac = svd(&a.view())?;
    let smax = fac.s[0];
    if !(smax > 0.0) {
        return Err(Error::Domain("all-zero design matrix".into()));
    }
    let cutoff = 1e-12 * smax;
    // x = V S^-1 U^T b
    let utb: Vec<f64> = (0..fac.s.len())
        .map(|k| {
            fac.u
                .column(k)
                .iter()
                .zip(b.iter())
                .map(|(u, y)| u * y)
                .sum::<f64>()
        })
        .collect();
    let mut x = vec![0.0f64; p];
    for k in 0..fac.s.len() {
        if fac.s[k] <= cutoff {
            continue;
        }
        let coef = utb[k] / fac.s[k];
        for j in 0..p {
            x[j] += fac.vt[[k, j]] * coef;
        }
    }
    let mut rss = 0.0;
    for i in 0..n {
        let pred: f64 = (0..p).map(|j| a[[i, j]] * x[j]).sum();
        rss += (b[i] - pred).powi(2);
    }
    let sigma2 = if n > p { rss / (n - p) as f64 } else { 0.0 };
    let errs: Vec<f64> = (0..p)
        .map(|j| {
            let var: f64 = (0..fac.s.len())
                .filter(|&k| fac.s[k] > cutoff)
                .map(|k| (fac.vt[[k, j]] / fac.s[k]).powi(2))
                .sum();
            (var * sigma2).sqrt()
        })
        .collect();
    Ok((x, errs, rss.sqrt()))
}

fn poly_intercept(points: &[(f64, f64)], order: usize) -> Result<f64> {
    let n = points.len();
    let mut a = Array2::<f64>::zeros((n, order + 1));
    let mut b = Array1::<f64>::zeros(n);
    for (i, &(l, xi)) in points.iter().enumerate() {
        let x = 1.0 / l;
        for j in 0..=order {
            a[[i, j]] = x.powi(j as i32);
        }
        b[i] = xi;
    }
    let (coef, _, _) = lstsq(&a, &b)?;
    Ok(coef[0])
}

/// Extrapolate `xi_L` to `L -> infinity` with inverse-length polynomials of
/// orders 1..3; the reported value is the order-2 intercept, the uncertainty
/// the spread of intercepts across orders.
pub fn extrapolate_thermodynamic(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let mut ls: Vec<f64> = points.iter().map(|p| p.0).collect();
    ls.sort_by(|a, b| a.partial_cmp(b).expect("finite L"));
    ls.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if ls.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "need >= 4 distinct system sizes, got {}",
            ls.len()
        )));
    }
    for &(l, _) in points {
        if !(l > 0.0) {
            return Err(Error::InvalidInput("system sizes must be positive".into()));
        }
    }
    let intercepts: Vec<f64> = (1..=3)
        .map(|order| poly_intercept(points, order))
        .collect::<Result<_>>()?;
    let xi_inf = intercepts[1];
    let spread = intercepts
        .iter()
        .flat_map(|a| intercepts.iter().map(move |b| (a - b).abs()))
        .fold(0.0f64, f64::max);
    Ok((xi_inf, spread))
}

/// Zigzag iff the extrapolated order parameter clearly exceeds both its own
/// uncertainty and an absolute floor.
pub fn classify_phase(xi_inf: f64, uncertainty: f64) -> Phase {
    if xi_inf > (3.0 * uncertainty).max(1e-3) {
        Phase::Zigzag
    } else {
        Phase::Linear
    }
}

/// Fit `G(dj) = amplitude * dj^-eta * exp(-dj / lambda)` in log space.
/// Points with `G <= 0` or `dj < min_dj` are excluded (`min_dj = 2` default
/// suppresses short-distance lattice artifacts).
pub fn fit_correlation_decay(
    profile: &[(usize, f64)],
    min_dj: usize,
) -> Result<FitResult> {
    let candidates = profile.iter().filter(|&&(dj, _)| dj >= 1).count();
    if candidates < 10 {
        return Err(Error::InvalidInput(format!(
            "need >= 10 points with dj >= 1, got {candidates}"
        )));
    }
    let usable: Vec<(f64, f64)> = profile
        .iter()
        .filter(|&&(dj, g)| dj >= min_dj.max(1) && g > 0.0)
        .map(|&(dj, g)| (dj as f64, g))
        .collect();
    if usable.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "only {} usable (positive, dj >= {min_dj}) points",
            usable.len()
        )));
    }
    let n = usable.len();
    let mut a = Array2::<f64>::zeros((n, 3));
    let mut b = Array1::<f64>::zeros(n);
    for (i, &(dj, g)) in usable.iter().enumerate() {
        a[[i, 0]] = 1.0;
        a[[i, 1]] = -dj.ln();
        a[[i, 2]] = -dj;
        b[i] = g.ln();
    }
    let (x, errs, resid) = lstsq(&a, &b)?;
    let amplitude = x[0].exp();
    let eta = x[1];
    let inv_lambda = x[2];
    if inv_lambda.abs() < 1e-300 {
        return Err(Error::NonConvergence("degenerate decay length".into()));
    }
    let lambda = 1.0 / inv_lambda;
    let mut values = BTreeMap::new();
    values.insert("amplitude".into(), amplitude);
    values.insert("eta".into(), eta);
    values.insert("lambda".into(), lambda);
    let mut uncertainties = BTreeMap::new();
    uncertainties.insert("amplitude".into(), amplitude * errs[0]);
    uncertainties.insert("eta".into(), errs[1]);
    uncertainties.insert("lambda".into(), errs[2] * lambda * lambda);
    Ok(FitResult {
        values,
        uncertainties,
        residual_norm: resid,
        model_tag: "powerlaw_times_exponential_logspace".into(),
    })
}

/// Linear fit of the entropy profile against the Calabrese-Cardy chord
/// coordinate `(1/6) ln(L sin(pi l / L))`; edge cuts (both ends) excluded.
pub fn fit_central_charge(profile: &[(usize, f64)], l: usize, l_min: usize) -> Result<FitResult> {
    let usable: Vec<(usize, f64)> = profile
        .iter()
        .filter(|&&(cut, _)| cut >= l_min && cut <= l - l_min)
        .cloned()
        .collect();
    if usable.len() < 8 {
        return Err(Error::InvalidInput(format!(
            "need >= 8 interior cuts, got {}",
            usable.len()
        )));
    }
    let n = usable.len();
    let mut a = Array2::<f64>::zeros((n, 2));
    let mut b = Array1::<f64>::zeros(n);
    for (i, &(cut, s)) in usable.iter().enumerate() {
        let chord = (l as f64) * (std::f64::consts::PI * cut as f64 / l as f64).sin();
        a[[i, 0]] = chord.ln() / 6.0;
        a[[i, 1]] = 1.0;
        b[i] = s;
    }
    let (x, errs, resid) = lstsq(&a, &b)?;
    let mut values = BTreeMap::new();
    values.insert("c".into(), x[0]);
    values.insert("c_prime".into(), x[1]);
    let mut uncertainties = BTreeMap::new();
    uncertainties.insert("c".into(), errs[0]);
    uncertainties.insert("c_prime".into(), errs[1]);
    Ok(FitResult {
        values,
        uncertainties,
        residual_norm: resid,
        model_tag: "cardy_entropy".into(),
    })
}

/// Fit `y = u * g^v` on positive data via log-log least squares.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::InvalidInput("need >= 3 points".into()));
    }
    if points.iter().any(|&(g, y)| g <= 0.0 || y <= 0.0) {
        return Err(Error::InvalidInput("power-law fit needs positive data".into()));
    }
    let n = points.len();
    let mut a = Array2::<f64>::zeros((n, 2));
    let mut b = Array1::<f64>::zeros(n);
    for (i, &(g, y)) in points.iter().enumerate() {
        a[[i, 0]] = 1.0;
        a[[i, 1]] = g.ln();
        b[i] = y.ln();
    }
    let (x, errs, resid) = lstsq(&a, &b)?;
    let u = x[0].exp();
    let mut values = BTreeMap::new();
    values.insert("u".into(), u);
    values.insert("v".into(), x[1]);
    let mut uncertainties = BTreeMap::new();
    uncertainties.insert("u".into(), u * errs[0]);
    uncertainties.insert("v".into(), errs[1]);
    Ok(FitResult {
        values,
        uncertainties,
        residual_norm: resid,
        model_tag: "power_law_loglog".into(),
    })
}

fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.len() < 2 || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let idx = xs.partition_point(|&v| v < x).min(xs.len() - 1).max(1);
    let (x0, x1) = (xs[idx - 1], xs[idx]);
    let (y0, y1) = (ys[idx - 1], ys[idx]);
    if x1 == x0 {
        return Some(y0);
    }
    Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

/// Monotone (Fritsch-Carlson) cubic Hermite through knot points.
struct MonotoneSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ms: Vec<f64>,
}

impl MonotoneSpline {
    fn fit(points: &[(f64, f64)], knots: usize) -> Option<Self> {
        if points.len() < 4 || knots < 3 {
            return None;
        }
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite x"));
        let (x_lo, x_hi) = (sorted[0].0, sorted[sorted.len() - 1].0);
        if !(x_hi > x_lo) {
            return None;
        }
        // equal-count (quantile) bins: knots concentrate where the rescaled
        // points cluster, so sharp master-curve features stay resolved
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let total = sorted.len();
        for k in 0..knots {
            let lo = k * total / knots;
            let hi = ((k + 1) * total / knots).min(total);
            if hi <= lo {
                continue;
            }
            let bin = &sorted[lo..hi];
            let bx = bin.iter().map(|p| p.0).sum::<f64>() / bin.len() as f64;
            let by = bin.iter().map(|p| p.1).sum::<f64>() / bin.len() as f64;
            if xs.last().map_or(true, |&last| bx > last) {
                xs.push(bx);
                ys.push(by);
            }
        }
        if xs.len() < 3 {
            return None;
        }
        let n = xs.len();
        let deltas: Vec<f64> = (0..n - 1)
            .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let mut ms = vec![0.0f64; n];
        ms[0] = deltas[0];
        ms[n - 1] = deltas[n - 2];
        for i in 1..n - 1 {
            if deltas[i - 1] * deltas[i] <= 0.0 {
                ms[i] = 0.0;
            } else {
                ms[i] = 0.5 * (deltas[i - 1] + deltas[i]);
            }
        }
        // Fritsch-Carlson limiter keeps the interpolant monotone per segment
        for i in 0..n - 1 {
            if deltas[i] == 0.0 {
                ms[i] = 0.0;
                ms[i + 1] = 0.0;
                continue;
            }
            let a = ms[i] / deltas[i];
            let bq = ms[i + 1] / deltas[i];
            let r = (a * a + bq * bq).sqrt();
            if r > 3.0 {
                ms[i] = 3.0 * a / r * deltas[i];
                ms[i + 1] = 3.0 * bq / r * deltas[i];
            }
        }
        Some(Self { xs, ys, ms })
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.ms[0] * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.ms[n - 1] * (x - self.xs[n - 1]);
        }
        let idx = self.xs.partition_point(|&v| v <= x).min(n - 1).max(1);
        let (x0, x1) = (self.xs[idx - 1], self.xs[idx]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (y0, y1) = (self.ys[idx - 1], self.ys[idx]);
        let (m0, m1) = (self.ms[idx - 1], self.ms[idx]);
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
    }
}

/// Summed squared deviation of rescaled points from the refit master curve.
fn collapse_cost(
    curves: &[(usize, Vec<(f64, f64)>)],
    omega_c: f64,
    gamma1: f64,
    gamma2: f64,
) -> f64 {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for &(l, ref data) in curves {
        let lf = l as f64;
        for &(omega, xi) in data {
            let x = (omega - omega_c) * lf.powf(-gamma2);
            let y = xi * lf.powf(gamma1);
            if x.is_finite() && y.is_finite() {
                pts.push((x, y));
            }
        }
    }
    match MonotoneSpline::fit(&pts, 20) {
        Some(spline) => pts
            .iter()
            .map(|&(x, y)| (y - spline.eval(x)).powi(2))
            .sum(),
        None => f64::INFINITY,
    }
}

/// Crossing dispersion of `xi_L L^gamma1` over all curve pairs; also returns
/// the mean crossing abscissa.
fn crossing_dispersion(
    curves: &[(usize, Vec<(f64, f64)>)],
    gamma1: f64,
) -> (f64, Option<f64>) {
    let mut crossings = Vec::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let (la, da) = (&curves[i].0, &curves[i].1);
            let (lb, db) = (&curves[j].0, &curves[j].1);
            let fa = (*la as f64).powf(gamma1);
            let fb = (*lb as f64).powf(gamma1);
            let xa: Vec<f64> = da.iter().map(|p| p.0).collect();
            let ya: Vec<f64> = da.iter().map(|p| p.1 * fa).collect();
            let xb: Vec<f64> = db.iter().map(|p| p.0).collect();
            let yb: Vec<f64> = db.iter().map(|p| p.1 * fb).collect();
            let lo = xa[0].max(xb[0]);
            let hi = xa[xa.len() - 1].min(xb[xb.len() - 1]);
            if !(hi > lo) {
                continue;
            }
            let samples = 200;
            let mut prev: Option<(f64, f64)> = None;
            for s in 0..=samples {
                let x = lo + (hi - lo) * s as f64 / samples as f64;
                let (va, vb) = match (interp_linear(&xa, &ya, x), interp_linear(&xb, &yb, x)) {
                    (Some(a), Some(b)) => (a, b),
                    _ => continue,
                };
                let diff = va - vb;
                if let Some((px, pd)) = prev {
                    if pd == 0.0 {
                        crossings.push(px);
                    } else if pd * diff < 0.0 {
                        crossings.push(px + (x - px) * pd / (pd - diff));
                    }
                }
                prev = Some((x, diff));
            }
        }
    }
    if crossings.is_empty() {
        return (f64::INFINITY, None);
    }
    let mean = crossings.iter().sum::<f64>() / crossings.len() as f64;
    let var = crossings
        .iter()
        .map(|x| (x - mean).powi(2))
        .sum::<f64>()
        / crossings.len() as f64;
    (var.sqrt(), Some(mean))
}

fn golden_minimize(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Deterministic Nelder-Mead simplex minimization.
fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    start: &[f64],
    step: &[f64],
    iters: usize,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let base = start.to_vec();
    simplex.push((base.clone(), f(&base)));
    for i in 0..n {
        let mut p = base.clone();
        p[i] += step[i];
        let v = f(&p);
        simplex.push((p, v));
    }
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite cost"));
        let worst = simplex[n].clone();
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64)
            .collect();
        let reflect: Vec<f64> = (0..n)
            .map(|j| centroid[j] + (centroid[j] - worst.0[j]))
            .collect();
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let expand: Vec<f64> = (0..n)
                .map(|j| centroid[j] + 2.0 * (centroid[j] - worst.0[j]))
                .collect();
            let fe = f(&expand);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|j| centroid[j] + 0.5 * (worst.0[j] - centroid[j]))
                .collect();
            let fcv = f(&contract);
            if fcv < worst.1 {
                simplex[n] = (contract, fcv);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for j in 0..n {
                        v.0[j] = best[j] + 0.5 * (v.0[j] - best[j]);
                    }
                    v.1 = f(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite cost"));
    (simplex[0].0.clone(), simplex[0].1)
}

/// Finite-size-scaling collapse: stage 1 tunes `(gamma_1, omega_c)` for a
/// sharp crossing of `xi_L L^gamma1`; stage 2 tunes `gamma_2` against the
/// master curve; a joint simplex refinement polishes all three.
pub fn finite_size_collapse(curves: &[(usize, Vec<(f64, f64)>)]) -> Result<CollapseResult> {
    if curves.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "need >= 4 system sizes, got {}",
            curves.len()
        )));
    }
    for &(l, ref data) in curves {
        if l < 2 || data.len() < 4 {
            return Err(Error::InvalidInput(
                "each curve needs L >= 2 and >= 4 samples".into(),
            ));
        }
        for w in data.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidInput(
                    "curve samples must be sorted in omega".into(),
                ));
            }
        }
    }

    // stage 1: crossing sharpness in gamma_1
    let gamma1 = golden_minimize(
        |g1| crossing_dispersion(curves, g1).0,
        0.0,
        0.6,
        48,
    );
    let (disp, omega_c) = crossing_dispersion(curves, gamma1);
    let omega_c = omega_c.ok_or_else(|| {
        Error::NonConvergence("no curve crossings in the scanned window".into())
    })?;
    if !disp.is_finite() {
        return Err(Error::NonConvergence("crossing dispersion diverged".into()));
    }

    // stage 2: collapse quality in gamma_2 (= -1/nu)
    let gamma2 = golden_minimize(
        |g2| collapse_cost(curves, omega_c, gamma1, g2),
        -3.0,
        -0.2,
        48,
    );

    // joint polish
    let (best, cost) = nelder_mead(
        |p| collapse_cost(curves, p[0], p[1], p[2]),
        &[omega_c, gamma1, gamma2],
        &[5e-3, 2e-2, 5e-2],
        300,
    );
    Ok(CollapseResult {
        omega_c: best[0],
        beta_over_nu: best[1],
        inv_nu: -best[2],
        collapse_cost: cost,
    })
}

/// Durbin-Watson statistic of fit residuals ordered by the regressor.
pub fn durbin_watson(residuals: &[f64]) -> f64 {
    let ss: f64 = residuals.iter().map(|e| e * e).sum();
    if ss == 0.0 {
        return 2.0;
    }
    let num: f64 = residuals.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    num / ss
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn extrapolation_recovers_linear_model() {
        let points: Vec<(f64, f64)> = [16.0, 32.0, 64.0, 128.0, 256.0]
            .iter()
            .map(|&l| (l, 0.3 + 0.5 / l))
            .collect();
        let (xi, unc) = extrapolate_thermodynamic(&points).unwrap();
        assert_abs_diff_eq!(xi, 0.3, epsilon = 1e-9);
        assert!(unc < 1e-8);
    }

    #[test]
    fn extrapolation_of_pure_floor_is_zero_within_uncertainty() {
        let points: Vec<(f64, f64)> = [16.0, 24.0, 32.0, 48.0, 64.0, 96.0, 128.0]
            .iter()
            .map(|&l| (l, 0.4 / (l as f64).sqrt()))
            .collect();
        let (xi, unc) = extrapolate_thermodynamic(&points).unwrap();
        // 1/sqrt(L) has no 1/L expansion; the spread-based uncertainty must
        // cover the residual within the 3-sigma classification margin
        assert!(xi.abs() < 3.0 * unc, "xi {xi} unc {unc}");
        assert_eq!(classify_phase(xi, unc), Phase::Linear);
    }

    #[test]
    fn extrapolation_order_invariant() {
        let mut points: Vec<(f64, f64)> = [16.0, 32.0, 64.0, 128.0, 256.0]
            .iter()
            .map(|&l| (l, 0.25 + 0.4 / l + 0.9 / (l * l)))
            .collect();
        let (a, ua) = extrapolate_thermodynamic(&points).unwrap();
        points.reverse();
        points.swap(0, 2);
        let (b, ub) = extrapolate_thermodynamic(&points).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        assert_abs_diff_eq!(ua, ub, epsilon = 1e-10);
    }

    #[test]
    fn extrapolation_requires_four_sizes() {
        let points = vec![(16.0, 0.3), (32.0, 0.28), (64.0, 0.27)];
        assert!(extrapolate_thermodynamic(&points).is_err());
    }

    #[test]
    fn classification_thresholds() {
        assert_eq!(classify_phase(0.2, 1e-3), Phase::Zigzag);
        assert_eq!(classify_phase(2e-4, 1e-3), Phase::Linear);
        assert_eq!(classify_phase(5e-4, 1e-5), Phase::Linear); // absolute floor
    }

    #[test]
    fn correlation_fit_recovers_exact_model() {
        let profile: Vec<(usize, f64)> = (1..=60)
            .map(|dj| {
                let x = dj as f64;
                (dj, 1.0 * x.powf(-0.25) * (-x / 200.0).exp())
            })
            .collect();
        let fit = fit_correlation_decay(&profile, 2).unwrap();
        assert!((fit.value("amplitude") - 1.0).abs() < 1e-6);
        assert!((fit.value("eta") - 0.25).abs() < 1e-6);
        assert!((fit.value("lambda") - 200.0).abs() / 200.0 < 1e-6);
    }

    #[test]
    fn correlation_fit_with_noise_stays_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let profile: Vec<(usize, f64)> = (1..=80)
            .map(|dj| {
                let x = dj as f64;
                let noise = 1.0 + 0.01 * rng.gen_range(-1.0..1.0);
                (dj, noise * x.powf(-0.25) * (-x / 150.0).exp())
            })
            .collect();
        let fit = fit_correlation_decay(&profile, 2).unwrap();
        assert!((fit.value("eta") - 0.25).abs() < 0.02, "eta {}", fit.value("eta"));
    }

    #[test]
    fn correlation_fit_input_guards() {
        let short: Vec<(usize, f64)> = (1..=5).map(|dj| (dj, 0.5)).collect();
        assert!(fit_correlation_decay(&short, 2).is_err());
        let negative: Vec<(usize, f64)> = (1..=20).map(|dj| (dj, -1.0)).collect();
        assert!(fit_correlation_decay(&negative, 2).is_err());
    }

    #[test]
    fn cardy_fit_recovers_parameters_and_flat_residuals() {
        let l = 64usize;
        // tiny iid noise keeps the residuals non-degenerate so the
        // Durbin-Watson statistic is meaningful (DW ~ 2 for white residuals)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let profile: Vec<(usize, f64)> = (1..l)
            .map(|cut| {
                let chord = (l as f64) * (std::f64::consts::PI * cut as f64 / l as f64).sin();
                let noise = 1e-8 * rng.gen_range(-1.0..1.0);
                (cut, 0.5 / 6.0 * chord.ln() + 1.0 + noise)
            })
            .collect();
        let fit = fit_central_charge(&profile, l, 4).unwrap();
        assert_abs_diff_eq!(fit.value("c"), 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.value("c_prime"), 1.0, epsilon = 1e-6);
        // residual trend check on the fitted model
        let residuals: Vec<f64> = profile
            .iter()
            .filter(|&&(cut, _)| cut >= 4 && cut <= l - 4)
            .map(|&(cut, s)| {
                let chord = (l as f64) * (std::f64::consts::PI * cut as f64 / l as f64).sin();
                s - (fit.value("c") / 6.0 * chord.ln() + fit.value("c_prime"))
            })
            .collect();
        let dw = durbin_watson(&residuals);
        assert!((1.0..=3.0).contains(&dw), "Durbin-Watson {dw}");
    }

    #[test]
    fn cardy_fit_zero_profile_gives_zero_charge() {
        let l = 32usize;
        let profile: Vec<(usize, f64)> = (1..l).map(|cut| (cut, 0.0)).collect();
        let fit = fit_central_charge(&profile, l, 4).unwrap();
        assert_abs_diff_eq!(fit.value("c"), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn power_law_exact_recovery() {
        let points: Vec<(f64, f64)> = [0.02, 0.05, 0.08, 0.12]
            .iter()
            .map(|&g: &f64| (g, 2.0 * g.powf(0.5)))
            .collect();
        let fit = fit_power_law(&points).unwrap();
        assert_abs_diff_eq!(fit.value("u"), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.value("v"), 0.5, epsilon = 1e-12);
        assert!(fit_power_law(&[(0.1, -1.0), (0.2, 1.0), (0.3, 1.0)]).is_err());
    }

    fn synthetic_curves(
        omega_c: f64,
        beta_over_nu: f64,
        inv_nu: f64,
    ) -> Vec<(usize, Vec<(f64, f64)>)> {
        let f = |x: f64| 0.6 * (1.0 - 0.8 * x.tanh());
        [16usize, 32, 64, 128]
            .iter()
            .map(|&l| {
                let lf = l as f64;
                let data: Vec<(f64, f64)> = (0..25)
                    .map(|i| {
                        let omega = omega_c - 0.12 + 0.01 * i as f64;
                        let x = (omega - omega_c) * lf.powf(inv_nu);
                        (omega, lf.powf(-beta_over_nu) * f(x))
                    })
                    .collect();
                (l, data)
            })
            .collect()
    }

    #[test]
    fn collapse_recovers_synthetic_exponents() {
        let curves = synthetic_curves(0.4, 0.125, 1.0);
        let res = finite_size_collapse(&curves).unwrap();
        assert!((res.omega_c - 0.4).abs() < 0.01, "omega_c {}", res.omega_c);
        assert!(
            (res.beta_over_nu - 0.125).abs() / 0.125 < 0.02,
            "beta/nu {}",
            res.beta_over_nu
        );
        assert!((res.inv_nu - 1.0).abs() < 0.02, "1/nu {}", res.inv_nu);
    }

    #[test]
    fn collapse_is_locally_optimal() {
        let curves = synthetic_curves(0.4, 0.125, 1.0);
        let res = finite_size_collapse(&curves).unwrap();
        let base = collapse_cost(&curves, res.omega_c, res.beta_over_nu, -res.inv_nu);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let oc = res.omega_c * (1.0 + 0.1 * rng.gen_range(-1.0f64..1.0));
            let g1 = res.beta_over_nu * (1.0 + 0.1 * rng.gen_range(-1.0f64..1.0));
            let g2 = -res.inv_nu * (1.0 + 0.1 * rng.gen_range(-1.0f64..1.0));
            let cost = collapse_cost(&curves, oc, g1, g2);
            assert!(
                cost >= base - 1e-12,
                "perturbation beat the optimum: {cost} < {base}"
            );
        }
    }

    #[test]
    fn degenerate_crossing_without_rescaling() {
        // gamma1 = 0 family: curves cross at omega_c regardless of L
        let curves: Vec<(usize, Vec<(f64, f64)>)> = [16usize, 32, 64, 128]
            .iter()
            .map(|&l| {
                let lf = l as f64;
                let data: Vec<(f64, f64)> = (0..25)
                    .map(|i| {
                        let omega: f64 = 0.3 + 0.01 * i as f64;
                        (omega, 0.5 - (omega - 0.42) * lf.powf(0.8))
                    })
                    .collect();
                (l, data)
            })
            .collect();
        let res = finite_size_collapse(&curves).unwrap();
        assert!((res.omega_c - 0.42).abs() < 5e-3, "omega_c {}", res.omega_c);
        assert!(res.beta_over_nu.abs() < 0.03, "gamma1 {}", res.beta_over_nu);
    }

    #[test]
    fn collapse_input_guards() {
        let curves = synthetic_curves(0.4, 0.125, 1.0);
        assert!(finite_size_collapse(&curves[..3]).is_err());
        let mut bad = curves.clone();
        bad[0].1.swap(0, 5);
        assert!(finite_size_collapse(&bad).is_err());
    }
}
