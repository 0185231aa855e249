//! Ensemble specifications, trigonometric parametrizations of the limiting
//! densities, saddle points, and soft-edge scaling constants for the three
//! models: products of Ginibre matrices, products with inverse factors, and
//! products with one truncated-unitary factor.

use num_bigint::BigUint;
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no soft edge for products with inverse factors (support is unbounded)")]
    NoSoftEdge,
    #[error("quadrature failed to converge: {0}")]
    Convergence(String),
    #[error("integer overflow; exact value is {0}")]
    Overflow(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    GinibreProduct,
    WithInverses,
    TruncatedUnitary,
}

/// Which ensemble, with all its size and exponent parameters.
///
/// `nu` holds ν_1..ν_M (ν_0 = 0 is implicit); `nu_tilde` holds ν̃_1..ν̃_K for
/// the inverse factors (ν̃_0 = ν̃_K = 0); `kappa` = l+1−2n for the
/// truncated-unitary factor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub n: usize,
    pub m: usize,
    pub k_inv: usize,
    pub nu: Vec<u32>,
    pub nu_tilde: Vec<u32>,
    pub kappa: i64,
}

impl ModelSpec {
    pub fn ginibre(n: usize, m: usize, nu: Vec<u32>) -> Self {
        assert!(n >= 1 && m >= 1);
        assert_eq!(nu.len(), m);
        ModelSpec { variant: Variant::GinibreProduct, n, m, k_inv: 0, nu, nu_tilde: vec![], kappa: 0 }
    }

    pub fn with_inverses(n: usize, m: usize, k: usize, nu: Vec<u32>, nu_tilde: Vec<u32>) -> Self {
        assert!(n >= 1 && m >= 1 && k >= 1);
        assert_eq!(nu.len(), m);
        assert_eq!(nu_tilde.len(), k);
        assert_eq!(*nu_tilde.last().unwrap(), 0, "ν̃_K must vanish");
        ModelSpec { variant: Variant::WithInverses, n, m, k_inv: k, nu, nu_tilde, kappa: 0 }
    }

    pub fn truncated_unitary(n: usize, m: usize, nu: Vec<u32>, kappa: i64) -> Self {
        assert!(n >= 1 && m >= 1);
        assert_eq!(nu.len(), m);
        assert!(kappa > i64::from(nu[0]), "need κ > ν_1");
        ModelSpec { variant: Variant::TruncatedUnitary, n, m, k_inv: 0, nu, nu_tilde: vec![], kappa }
    }

    /// Upper end of the open φ-interval of the parametrization.
    pub fn phi_sup(&self) -> f64 {
        match self.variant {
            Variant::TruncatedUnitary => 2.0 * PI / (self.m as f64 + 1.0),
            _ => PI / (self.m as f64 + 1.0),
        }
    }

    /// The squared singular values live at scale n^p; p = M, M−K, or M−1.
    pub fn arg_power(&self) -> i32 {
        match self.variant {
            Variant::GinibreProduct => self.m as i32,
            Variant::WithInverses => self.m as i32 - self.k_inv as i32,
            Variant::TruncatedUnitary => self.m as i32 - 1,
        }
    }

    /// Right end of the support of the limiting density (+∞ for WithInverses).
    pub fn support_sup(&self) -> f64 {
        match self.variant {
            Variant::WithInverses => f64::INFINITY,
            _ => edge_constants(self).map(|e| e.x_star).unwrap_or(f64::INFINITY),
        }
    }
}

/// A bulk reference point: location, angle, density, and the saddle pair.
#[derive(Debug, Clone)]
pub struct BulkPoint {
    pub x0: f64,
    pub phi: f64,
    pub rho: f64,
    pub w_plus: Complex64,
    pub w_minus: Complex64,
}

impl BulkPoint {
    pub fn at_phi(spec: &ModelSpec, phi: f64) -> Result<Self, ModelError> {
        let x0 = param_x(spec, phi)?;
        let rho = density_rho(spec, phi)?;
        let (w_plus, w_minus) = saddle_points(spec, phi)?;
        Ok(BulkPoint { x0, phi, rho, w_plus, w_minus })
    }

    pub fn at_x0(spec: &ModelSpec, x0: f64) -> Result<Self, ModelError> {
        Self::at_phi(spec, inverse_param(spec, x0)?)
    }
}

/// Soft-edge constants x_*, c_1 = x_*/c_2, c_2, z_0.
#[derive(Debug, Clone, Copy)]
pub struct EdgeData {
    pub x_star: f64,
    pub c1: f64,
    pub c2: f64,
    pub z0: f64,
}

fn check_phi(spec: &ModelSpec, phi: f64) -> Result<(), ModelError> {
    let sup = spec.phi_sup();
    // Parametrizations degenerate at the endpoints; keep a guard margin.
    if phi <= 1e-9 || phi >= sup - 1e-9 {
        return Err(ModelError::Domain(format!(
            "phi = {phi} outside the open interval (0, {sup})"
        )));
    }
    Ok(())
}

/// The spectral location x_0 as a function of the angle φ (strictly
/// decreasing for every variant).
pub fn param_x(spec: &ModelSpec, phi: f64) -> Result<f64, ModelError> {
    check_phi(spec, phi)?;
    let m = spec.m as f64;
    Ok(match spec.variant {
        Variant::GinibreProduct => {
            ((m + 1.0) * phi).sin().powf(m + 1.0) / (phi.sin() * (m * phi).sin().powf(m))
        }
        Variant::WithInverses => {
            let k = spec.k_inv as f64;
            let a = (m + 1.0) / (k + 1.0) * phi + k / (k + 1.0) * PI;
            let b = (m - k) / (k + 1.0) * phi + k / (k + 1.0) * PI;
            a.sin().powf(m + 1.0) / (phi.sin().powf(k + 1.0) * b.sin().powf(m - k))
        }
        Variant::TruncatedUnitary => {
            ((m + 1.0) / 2.0 * phi).sin().powf((m + 1.0) / 2.0)
                / (phi.sin() * ((m - 1.0) / 2.0 * phi).sin().powf((m - 1.0) / 2.0))
        }
    })
}

/// The limiting density ρ(φ) at the point x_0 = param_x(φ).
pub fn density_rho(spec: &ModelSpec, phi: f64) -> Result<f64, ModelError> {
    check_phi(spec, phi)?;
    let m = spec.m as f64;
    let x0 = param_x(spec, phi)?;
    Ok(match spec.variant {
        Variant::GinibreProduct => {
            ((m + 1.0) * phi).sin() / (m * phi).sin() * phi.sin() / (PI * x0)
        }
        Variant::WithInverses => {
            let k = spec.k_inv as f64;
            let a = (m + 1.0) / (k + 1.0) * phi + k / (k + 1.0) * PI;
            let b = (m - k) / (k + 1.0) * phi + k / (k + 1.0) * PI;
            a.sin() / b.sin() * phi.sin() / (PI * x0)
        }
        Variant::TruncatedUnitary => {
            (((m + 1.0) / 2.0 * phi).sin() / (((m - 1.0) / 2.0) * phi).sin()).sqrt()
                * (phi / 2.0).sin()
                / (PI * x0)
        }
    })
}

/// Invert the strictly decreasing map param_x by bisection.
pub fn inverse_param(spec: &ModelSpec, x0: f64) -> Result<f64, ModelError> {
    if !(x0 > 0.0) || x0 >= spec.support_sup() {
        return Err(ModelError::Domain(format!(
            "x0 = {x0} outside the open support (0, {})",
            spec.support_sup()
        )));
    }
    let mut lo = 2e-9; // param_x decreasing: x(lo) large, x(hi) small
    let mut hi = spec.phi_sup() - 2e-9;
    if param_x(spec, lo)? < x0 || param_x(spec, hi)? > x0 {
        return Err(ModelError::Domain(format!(
            "x0 = {x0} not bracketed inside the guarded φ-interval"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if param_x(spec, mid)? > x0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 * (1.0 + hi) {
            break;
        }
    }
    let phi = 0.5 * (lo + hi);
    let resid = (param_x(spec, phi)? - x0).abs();
    if resid > 1e-12 * x0 {
        return Err(ModelError::Convergence(format!(
            "bisection residual {resid:.3e} at x0 = {x0}"
        )));
    }
    Ok(phi)
}

/// The conjugate saddle pair w_± of the phase function, in closed form.
pub fn saddle_points(spec: &ModelSpec, phi: f64) -> Result<(Complex64, Complex64), ModelError> {
    check_phi(spec, phi)?;
    let m = spec.m as f64;
    let w_plus = match spec.variant {
        Variant::GinibreProduct => {
            let r = ((m + 1.0) * phi).sin() / (m * phi).sin();
            Complex64::from_polar(r, phi)
        }
        Variant::WithInverses => {
            let k = spec.k_inv as f64;
            let a = (m + 1.0) / (k + 1.0) * phi + k / (k + 1.0) * PI;
            let b = (m - k) / (k + 1.0) * phi + k / (k + 1.0) * PI;
            Complex64::from_polar(a.sin() / b.sin(), phi)
        }
        Variant::TruncatedUnitary => {
            let r = (((m + 1.0) / 2.0 * phi).sin() / (((m - 1.0) / 2.0) * phi).sin()).sqrt();
            Complex64::from_polar(r, phi / 2.0)
        }
    };
    Ok((w_plus, w_plus.conj()))
}

/// Residual of the model's algebraic saddle equation at z (should vanish at w_±).
pub fn saddle_residual(spec: &ModelSpec, phi: f64, z: Complex64) -> Result<f64, ModelError> {
    let x0 = param_x(spec, phi)?;
    let m = spec.m as i32;
    let r = match spec.variant {
        Variant::GinibreProduct => z.powi(m + 1) - x0 * (z - 1.0),
        Variant::WithInverses => {
            z.powi(m + 1) + x0 * (Complex64::new(1.0, 0.0) - z).powi(spec.k_inv as i32 + 1)
        }
        Variant::TruncatedUnitary => z.powi(m + 1) + x0 * (Complex64::new(1.0, 0.0) - z * z),
    };
    // Normalize by the size of the leading term so the check is scale-free.
    Ok(r.norm() / z.norm().powi(m + 1).max(x0))
}

/// Closed-form soft-edge constants (GinibreProduct and TruncatedUnitary only).
pub fn edge_constants(spec: &ModelSpec) -> Result<EdgeData, ModelError> {
    let m = spec.m as f64;
    match spec.variant {
        Variant::GinibreProduct => {
            let x_star = (m + 1.0).powf(m + 1.0) / m.powf(m);
            let c2 = (m + 1.0).powf(m + 2.0 / 3.0) / (2f64.powf(1.0 / 3.0) * m.powf(m - 1.0));
            Ok(EdgeData { x_star, c1: x_star / c2, c2, z0: 1.0 + 1.0 / m })
        }
        Variant::TruncatedUnitary => {
            if spec.m < 2 {
                return Err(ModelError::Domain(
                    "truncated-unitary edge needs M ≥ 2".into(),
                ));
            }
            let x_star = (m + 1.0).powf((m + 1.0) / 2.0) / (2.0 * (m - 1.0).powf((m - 1.0) / 2.0));
            let c2 = (m + 1.0).powf((m + 1.0) / 2.0)
                / (2f64.powf(4.0 / 3.0) * (m - 1.0).powf(m / 2.0 - 7.0 / 6.0));
            Ok(EdgeData {
                x_star,
                c1: x_star / c2,
                c2,
                z0: ((m + 1.0) / (m - 1.0)).sqrt(),
            })
        }
        Variant::WithInverses => Err(ModelError::NoSoftEdge),
    }
}

/// Exact Fuss-Catalan number (1/(Mk+1))·C(Mk+k, k).
pub fn fuss_catalan_big(m: usize, k: usize) -> BigUint {
    // binomial((M+1)k, k) built as a product of exact integer ratios
    let n = (m + 1) * k;
    let mut num = BigUint::from(1u32);
    let mut den = BigUint::from(1u32);
    for i in 0..k {
        num *= BigUint::from(n - i);
        den *= BigUint::from(i + 1);
    }
    (num / den) / BigUint::from(m * k + 1)
}

/// Fuss-Catalan number as u64 (errors with the exact big-integer string on overflow).
pub fn fuss_catalan_moment(m: usize, k: usize) -> Result<u64, ModelError> {
    let v = fuss_catalan_big(m, k);
    u64::try_from(&v).map_err(|_| ModelError::Overflow(v.to_string()))
}

/// k-th moment of the limiting density by quadrature over the angle
/// parametrization (GinibreProduct only; matches the Fuss-Catalan numbers).
pub fn density_moment(spec: &ModelSpec, k: u32) -> Result<f64, ModelError> {
    if spec.variant != Variant::GinibreProduct {
        return Err(ModelError::Domain(
            "density moments are only defined for the Ginibre product".into(),
        ));
    }
    let m = spec.m as f64;
    let gl = crate::quad::GaussLegendre::new(32);
    // ∫ x^k ρ dx = ∫ x(φ)^k ρ(φ) (−x'(φ)) dφ with the analytic log-derivative
    // x'/x = (M+1)² cot((M+1)φ) − cot φ − M² cot(Mφ); the integrand extends
    // smoothly to both endpoints.
    let integrand = |phi: f64| -> f64 {
        if phi <= 1.5e-9 || phi >= spec.phi_sup() - 1.5e-9 {
            return 0.0;
        }
        let x = param_x(spec, phi).unwrap();
        let rho = density_rho(spec, phi).unwrap();
        let dlog = (m + 1.0).powi(2) / ((m + 1.0) * phi).tan() - 1.0 / phi.tan()
            - m * m / (m * phi).tan();
        x.powi(k as i32) * rho * (-x * dlog)
    };
    let coarse = gl.integrate_panels(0.0, spec.phi_sup(), 48, integrand);
    let fine = gl.integrate_panels(0.0, spec.phi_sup(), 96, integrand);
    if (coarse - fine).abs() > 1e-10 * fine.abs().max(1.0) {
        return Err(ModelError::Convergence(format!(
            "density moment k = {k}: refinement difference {:.3e}",
            (coarse - fine).abs()
        )));
    }
    Ok(fine)
}
