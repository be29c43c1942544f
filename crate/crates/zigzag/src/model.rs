//! Closed-form coefficient machinery of the effective short-range model:
//! Riemann zeta, Taylor coefficients `b_q`, on-site fields `M_q`, couplings
//! `N_q`, the alpha-to-alpha rescaling and the phi^4 correspondence.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Reduced physical inputs defining one simulation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    /// Interaction exponent (>= 1).
    pub alpha: f64,
    /// Effective Planck constant (> 0), dimensionless.
    pub g: f64,
    /// Squared rescaled transverse trap frequency, dimensionless.
    pub omega2: f64,
    /// Taylor truncation order; odd, >= 3, so the truncated potential stays
    /// bounded from below.
    pub order_t: u32,
}

impl ModelParameters {
    pub fn new(alpha: f64, g: f64, omega2: f64, order_t: u32) -> Result<Self> {
        if !(alpha >= 1.0) {
            return Err(Error::Domain(format!("alpha must be >= 1, got {alpha}")));
        }
        if !(g > 0.0) {
            return Err(Error::Domain(format!("g must be > 0, got {g}")));
        }
        if !omega2.is_finite() {
            return Err(Error::Domain("omega2 must be finite".into()));
        }
        if order_t < 3 || order_t % 2 == 0 {
            return Err(Error::Domain(format!(
                "order_t must be an odd integer >= 3, got {order_t}"
            )));
        }
        Ok(Self { alpha, g, omega2, order_t })
    }

    /// Ion-chain defaults (`alpha = 1`, fourth-order model).
    pub fn ion_chain(g: f64, omega2: f64) -> Result<Self> {
        Self::new(1.0, g, omega2, 5)
    }
}

/// Dimensionful inputs of the underlying chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParameters {
    pub hbar: f64,
    pub mass: f64,
    pub lattice_constant: f64,
    pub coupling: f64,
}

impl PhysicalParameters {
    pub fn new(hbar: f64, mass: f64, lattice_constant: f64, coupling: f64) -> Result<Self> {
        for (name, v) in [
            ("hbar", hbar),
            ("mass", mass),
            ("lattice_constant", lattice_constant),
            ("coupling", coupling),
        ] {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(Self { hbar, mass, lattice_constant, coupling })
    }
}

/// Riemann zeta for `s > 1`, by direct summation with an Euler-Maclaurin tail
/// correction. Absolute accuracy well below 1e-12 over the range used here.
pub fn riemann_zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(Error::Domain(format!("zeta requires s > 1, got {s}")));
    }
    let n = 24usize;
    let mut sum = 0.0f64;
    for k in 1..n {
        sum += (k as f64).powf(-s);
    }
    let nf = n as f64;
    let mut tail = nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s);
    // Bernoulli corrections B2, B4, B6, B8
    let mut pow = nf.powf(-s - 1.0);
    let mut rising = s;
    tail += rising / 12.0 * pow;
    rising *= (s + 1.0) * (s + 2.0);
    pow /= nf * nf;
    tail -= rising / 720.0 * pow;
    rising *= (s + 3.0) * (s + 4.0);
    pow /= nf * nf;
    tail += rising / 30240.0 * pow;
    rising *= (s + 5.0) * (s + 6.0);
    pow /= nf * nf;
    tail -= rising / 1209600.0 * pow;
    Ok(sum + tail)
}

/// Taylor coefficient `b_q(alpha) = Gamma(q + alpha/2) / (q! Gamma(alpha/2))`.
pub fn taylor_coefficient_b(q: u32, alpha: f64) -> f64 {
    let h = 0.5 * alpha;
    (ln_gamma(q as f64 + h) - ln_gamma(h) - ln_gamma(q as f64 + 1.0)).exp()
}

/// On-site field `M_q(alpha)`.
pub fn onsite_coefficient_m(q: u32, alpha: f64) -> Result<f64> {
    if q < 1 {
        return Err(Error::Domain("M_q requires q >= 1".into()));
    }
    let s = alpha + 2.0 * q as f64;
    let b = taylor_coefficient_b(q, alpha);
    Ok(b * (2f64.powf(s) - 1.0) / 2f64.powf(alpha - 1.0) * riemann_zeta(s)?)
}

/// Coupling constant `N_q(alpha)`.
///
/// `q = 1` uses the dedicated branch (`ln 2` at exactly `alpha = 1`,
/// otherwise `alpha zeta(alpha) (2^alpha - 2)/2^alpha`); `q > 1` uses the
/// general expression with `zeta(alpha + 2q - 2)`.
pub fn coupling_coefficient_n(q: u32, alpha: f64) -> Result<f64> {
    if q < 1 {
        return Err(Error::Domain("N_q requires q >= 1".into()));
    }
    if q == 1 {
        if alpha == 1.0 {
            return Ok(2f64.ln());
        }
        return Ok((2f64.powf(alpha) - 2.0) / 2f64.powf(alpha) * alpha * riemann_zeta(alpha)?);
    }
    let qf = q as f64;
    let b = taylor_coefficient_b(q, alpha);
    Ok((2.0 * qf - 1.0) / qf
        * b
        * (2f64.powf(alpha + 2.0 * qf - 2.0) - 1.0)
        / 2f64.powf(alpha - 1.0)
        * riemann_zeta(alpha + 2.0 * qf - 2.0)?)
}

/// Expansion coefficients of the effective model up to `qmax`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub alpha: f64,
    /// `b[q]`, q = 0..qmax
    pub b: Vec<f64>,
    /// `m[q-1]` holds `M_q`, q = 1..qmax
    pub m: Vec<f64>,
    /// `n[q-1]` holds `N_q`, q = 1..qmax
    pub n: Vec<f64>,
}

impl CoefficientTable {
    pub fn compute(alpha: f64, qmax: u32) -> Result<Self> {
        if !(alpha >= 1.0) {
            return Err(Error::Domain(format!("alpha must be >= 1, got {alpha}")));
        }
        if qmax < 1 {
            return Err(Error::Domain("qmax must be >= 1".into()));
        }
        let b = (0..=qmax).map(|q| taylor_coefficient_b(q, alpha)).collect();
        let m = (1..=qmax)
            .map(|q| onsite_coefficient_m(q, alpha))
            .collect::<Result<_>>()?;
        let n = (1..=qmax)
            .map(|q| coupling_coefficient_n(q, alpha))
            .collect::<Result<_>>()?;
        Ok(Self { alpha, b, m, n })
    }

    pub fn m1(&self) -> f64 {
        self.m[0]
    }

    pub fn n1(&self) -> f64 {
        self.n[0]
    }

    pub fn m2(&self) -> f64 {
        self.m[1]
    }
}

/// Effective Planck constant `g = hbar sqrt(a^(alpha-2) / (M C_int))`.
pub fn effective_planck_constant(p: &PhysicalParameters, alpha: f64) -> f64 {
    p.hbar * (p.lattice_constant.powf(alpha - 2.0) / (p.mass * p.coupling)).sqrt()
}

/// Map a parameter point at exponent `alpha` to the equivalent point at
/// `alpha_prime`, returning the transformed parameters together with the
/// length and energy scale factors `(u, v)`.
pub fn rescale_to_alpha(
    params: &ModelParameters,
    alpha_prime: f64,
) -> Result<(ModelParameters, f64, f64)> {
    if !(alpha_prime >= 1.0) {
        return Err(Error::Domain(format!("alpha' must be >= 1, got {alpha_prime}")));
    }
    let m1 = onsite_coefficient_m(1, params.alpha)?;
    let m2 = onsite_coefficient_m(2, params.alpha)?;
    let n1 = coupling_coefficient_n(1, params.alpha)?;
    let m1p = onsite_coefficient_m(1, alpha_prime)?;
    let m2p = onsite_coefficient_m(2, alpha_prime)?;
    let n1p = coupling_coefficient_n(1, alpha_prime)?;

    let u = (n1p * m2 / (n1 * m2p)).sqrt();
    let v = n1p * n1p * m2 / (n1 * n1 * m2p);
    let omega2_p = m1p + n1p / n1 * (params.omega2 - m1);
    let g_p = params.g * m2 / m2p * (n1p / n1).powf(1.5);
    let out = ModelParameters::new(alpha_prime, g_p, omega2_p, params.order_t)?;
    Ok((out, u, v))
}

/// Parameters of the equivalent phi^4 theory: signed `m^2` (negative on the
/// zigzag side) and quartic coupling `lambda`.
pub fn phi4_parameters(params: &ModelParameters) -> Result<(f64, f64)> {
    let m1 = onsite_coefficient_m(1, params.alpha)?;
    let m2 = onsite_coefficient_m(2, params.alpha)?;
    let n1 = coupling_coefficient_n(1, params.alpha)?;
    let m_squared = (params.omega2 - m1) / n1;
    let lambda = 12.0 * params.g * m2 / n1.powf(1.5);
    Ok((m_squared, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Independent zeta oracle: brute-force partial sum with a midpoint
    /// integral tail estimate.
    fn zeta_bruteforce(s: f64) -> f64 {
        let n = 2_000_000u64;
        // Kahan summation from the smallest terms up, so the partial sums do
        // not drown the tail contributions in rounding noise.
        let mut sum = 0.0f64;
        let mut carry = 0.0f64;
        for k in (1..=n).rev() {
            let term = (k as f64).powf(-s) - carry;
            let next = sum + term;
            carry = (next - sum) - term;
            sum = next;
        }
        sum + (n as f64 + 0.5).powf(1.0 - s) / (s - 1.0)
    }

    #[test]
    fn zeta_known_and_oracle_values() {
        let z2 = riemann_zeta(2.0).unwrap();
        assert_abs_diff_eq!(z2, std::f64::consts::PI.powi(2) / 6.0, epsilon = 1e-13);
        for s in [1.5, 3.0, 5.0, 7.0, 11.0] {
            let z = riemann_zeta(s).unwrap();
            assert_abs_diff_eq!(z, zeta_bruteforce(s), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(riemann_zeta(3.0).unwrap(), 1.2020569031595943, epsilon = 1e-12);
        assert_abs_diff_eq!(riemann_zeta(5.0).unwrap(), 1.0369277551433699, epsilon = 1e-12);
        assert!(riemann_zeta(1.0).is_err());
        assert!(riemann_zeta(0.5).is_err());
    }

    #[test]
    fn b_coefficients() {
        assert_abs_diff_eq!(taylor_coefficient_b(0, 1.0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(taylor_coefficient_b(0, 3.7), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(taylor_coefficient_b(1, 1.0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(taylor_coefficient_b(2, 1.0), 0.375, epsilon = 1e-14);
        // recurrence b_{q+1}/b_q = (q + alpha/2)/(q+1)
        for alpha in [1.0, 2.5, 6.0] {
            for q in 0..6u32 {
                let ratio = taylor_coefficient_b(q + 1, alpha) / taylor_coefficient_b(q, alpha);
                assert_abs_diff_eq!(ratio, (q as f64 + 0.5 * alpha) / (q as f64 + 1.0), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn golden_values_alpha_one() {
        let z3 = riemann_zeta(3.0).unwrap();
        let z5 = riemann_zeta(5.0).unwrap();
        let m1 = onsite_coefficient_m(1, 1.0).unwrap();
        let m2 = onsite_coefficient_m(2, 1.0).unwrap();
        let n1 = coupling_coefficient_n(1, 1.0).unwrap();
        let n2 = coupling_coefficient_n(2, 1.0).unwrap();
        assert_abs_diff_eq!(m1, 3.5 * z3, epsilon = 1e-12);
        assert_abs_diff_eq!(m2, 93.0 / 8.0 * z5, epsilon = 1e-12);
        assert_abs_diff_eq!(n1, 2f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(n2, 63.0 / 16.0 * z3, epsilon = 1e-12);
        // four-decimal paper values
        assert_abs_diff_eq!(m1, 4.2072, epsilon = 5e-5);
        assert_abs_diff_eq!(n1, 0.6931, epsilon = 5e-5);
        assert_abs_diff_eq!(m2, 12.0543, epsilon = 5e-5);
    }

    #[test]
    fn n1_general_branch() {
        let z3 = riemann_zeta(3.0).unwrap();
        let n1 = coupling_coefficient_n(1, 3.0).unwrap();
        assert_abs_diff_eq!(n1, (8.0 - 2.0) / 8.0 * 3.0 * z3, epsilon = 1e-12);
        assert_abs_diff_eq!(n1, 2.7046, epsilon = 1e-4);
    }

    #[test]
    fn planck_constant_scaling() {
        let p = PhysicalParameters::new(1.0, 1.0, 1.0, 1.0).unwrap();
        for alpha in [1.0, 2.0, 3.0] {
            assert_abs_diff_eq!(effective_planck_constant(&p, alpha), 1.0, epsilon = 1e-15);
        }
        let p4 = PhysicalParameters::new(1.0, 1.0, 4.0, 1.0).unwrap();
        assert_abs_diff_eq!(effective_planck_constant(&p4, 2.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(effective_planck_constant(&p4, 1.0), 0.5, epsilon = 1e-15);
        // g scales as a^(alpha/2 - 1)
        for alpha in [1.0, 1.7, 3.0, 6.0] {
            let a = 2.3;
            let pa = PhysicalParameters::new(1.0, 1.0, a, 1.0).unwrap();
            assert_abs_diff_eq!(
                effective_planck_constant(&pa, alpha),
                a.powf(0.5 * alpha - 1.0),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn rescale_identity_and_classical_point() {
        let p = ModelParameters::new(1.0, 0.1, 2.0, 5).unwrap();
        let (same, u, v) = rescale_to_alpha(&p, 1.0).unwrap();
        assert_abs_diff_eq!(u, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(same.g, p.g, epsilon = 1e-14);
        assert_abs_diff_eq!(same.omega2, p.omega2, epsilon = 1e-14);

        // classical critical point maps to classical critical point
        let m1_1 = onsite_coefficient_m(1, 1.0).unwrap();
        let m1_3 = onsite_coefficient_m(1, 3.0).unwrap();
        let crit = ModelParameters::new(1.0, 0.1, m1_1, 5).unwrap();
        let (mapped, _, _) = rescale_to_alpha(&crit, 3.0).unwrap();
        assert_abs_diff_eq!(mapped.omega2, m1_3, epsilon = 1e-10);

        // explicit Eq. check for g'
        let n1_1 = coupling_coefficient_n(1, 1.0).unwrap();
        let n1_3 = coupling_coefficient_n(1, 3.0).unwrap();
        let m2_1 = onsite_coefficient_m(2, 1.0).unwrap();
        let m2_3 = onsite_coefficient_m(2, 3.0).unwrap();
        assert_abs_diff_eq!(
            mapped.g,
            0.1 * m2_1 / m2_3 * (n1_3 / n1_1).powf(1.5),
            epsilon = 1e-12
        );
    }

    #[test]
    fn rescale_round_trip() {
        for (alpha, alpha_p) in [(1.0, 3.0), (1.0, 6.0), (2.0, 1.5)] {
            let p = ModelParameters::new(alpha, 0.07, 1.9, 5).unwrap();
            let (fwd, _, _) = rescale_to_alpha(&p, alpha_p).unwrap();
            let (back, _, _) = rescale_to_alpha(&fwd, alpha).unwrap();
            assert_abs_diff_eq!(back.g, p.g, epsilon = 1e-12 * p.g);
            assert_abs_diff_eq!(back.omega2, p.omega2, epsilon = 1e-12 * p.omega2.abs());
        }
    }

    #[test]
    fn phi4_correspondence() {
        let m1 = onsite_coefficient_m(1, 1.0).unwrap();
        let n1 = coupling_coefficient_n(1, 1.0).unwrap();
        let m2 = onsite_coefficient_m(2, 1.0).unwrap();

        let at_crit = ModelParameters::new(1.0, 0.1, m1, 5).unwrap();
        let (msq, _) = phi4_parameters(&at_crit).unwrap();
        assert_abs_diff_eq!(msq, 0.0, epsilon = 1e-12);

        let unit = ModelParameters::new(1.0, 0.1, m1 + 2f64.ln(), 5).unwrap();
        let (msq, lambda) = phi4_parameters(&unit).unwrap();
        assert_abs_diff_eq!(msq, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lambda, 12.0 * 0.1 * m2 / n1.powf(1.5), epsilon = 1e-12);

        // zigzag side: signed negative m^2, not an error
        let zz = ModelParameters::new(1.0, 0.1, 1.0, 5).unwrap();
        let (msq, _) = phi4_parameters(&zz).unwrap();
        assert!(msq < 0.0);
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParameters::new(0.5, 0.1, 1.0, 5).is_err());
        assert!(ModelParameters::new(1.0, 0.0, 1.0, 5).is_err());
        assert!(ModelParameters::new(1.0, 0.1, 1.0, 4).is_err());
        assert!(ModelParameters::new(1.0, 0.1, 1.0, 1).is_err());
        assert!(PhysicalParameters::new(1.0, -1.0, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn coefficients_positive(q in 1u32..8, alpha in 1.0f64..8.0) {
            prop_assert!(taylor_coefficient_b(q, alpha) > 0.0);
            prop_assert!(onsite_coefficient_m(q, alpha).unwrap() > 0.0);
            prop_assert!(coupling_coefficient_n(q, alpha).unwrap() > 0.0);
        }

        #[test]
        fn rescale_round_trips(alpha in 1.0f64..6.0, alpha_p in 1.0f64..6.0,
                               g in 0.01f64..0.5, omega2 in -2.0f64..6.0) {
            let p = ModelParameters::new(alpha, g, omega2, 5).unwrap();
            let (fwd, _, _) = rescale_to_alpha(&p, alpha_p).unwrap();
            let (back, _, _) = rescale_to_alpha(&fwd, alpha).unwrap();
            prop_assert!((back.g - p.g).abs() <= 1e-10 * p.g.max(1.0));
            prop_assert!((back.omega2 - p.omega2).abs() <= 1e-10 * p.omega2.abs().max(1.0));
        }
    }
}
