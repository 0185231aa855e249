//! Small-n oracle for the finite-n kernel: the moment-matrix formula
//! K_n(x,y) = Σ_{j,k} x^j (M_n^{-1})_{k,j} w_k(y), the normalization-constant
//! identity det M_n = Π_{i,j} Γ(i+ν_j), and the reproducing-kernel defect.
//! Entirely independent of the contour machinery: the matrix entries are exact
//! gamma products, inverted over arbitrary-precision rationals.

use crate::model::{ModelSpec, Variant};
use crate::quad::GaussLegendre;
use crate::special::{self, SpecialError, WeightSpec};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("moment matrix too ill-conditioned: estimate {estimate:.3e} exceeds 1e12")]
    IllConditioned { estimate: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// The n×n matrix of moments ∫ x^j w_k(x) dx together with its exact inverse.
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    pub n: usize,
    /// entries[j][k] = ∫ x^j w_k(x) dx, an exact product of factorials.
    pub entries: Vec<Vec<f64>>,
    /// 1-norm condition number of the symmetrically equilibrated matrix.
    pub condition_estimate: f64,
    /// inverse[k][j] = (M_n^{-1})_{k,j}, rounded from the exact rational inverse.
    inverse: Vec<Vec<f64>>,
    /// log det M_n, from the exact rational determinant.
    log_det: f64,
    weight_specs: Vec<WeightSpec>,
}

fn require_ginibre(spec: &ModelSpec) -> Result<(), OracleError> {
    if spec.variant != Variant::GinibreProduct {
        return Err(OracleError::Domain(
            "the moment oracle covers the plain Ginibre product only".into(),
        ));
    }
    Ok(())
}

/// Exact entry (j,k): Π_l Γ(j+1+b_l) over the integer gamma shifts of w_k.
fn exact_entry(spec: &ModelSpec, j: usize, k: usize) -> BigInt {
    let mut prod = BigInt::one();
    for l in 0..spec.m {
        let shift = spec.nu[l] as usize + if l == 0 { k } else { 0 };
        // Γ(j + 1 + shift) = (j + shift)!
        for i in 2..=(j + shift) {
            prod *= BigInt::from(i);
        }
    }
    prod
}

/// Gauss–Jordan inversion over the rationals; returns (inverse, det).
fn invert_exact(a: &[Vec<BigRational>]) -> Option<(Vec<Vec<BigRational>>, BigRational)> {
    let n = a.len();
    let mut work: Vec<Vec<BigRational>> = a.to_vec();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { BigRational::one() } else { BigRational::zero() })
                .collect()
        })
        .collect();
    let mut det = BigRational::one();
    for col in 0..n {
        let pivot_row = (col..n).find(|&r| !work[r][col].is_zero())?;
        if pivot_row != col {
            work.swap(col, pivot_row);
            inv.swap(col, pivot_row);
            det = -det;
        }
        let pivot = work[col][col].clone();
        det *= pivot.clone();
        for j in 0..n {
            work[col][j] /= pivot.clone();
            inv[col][j] /= pivot.clone();
        }
        for r in 0..n {
            if r == col || work[r][col].is_zero() {
                continue;
            }
            let factor = work[r][col].clone();
            for j in 0..n {
                let w = factor.clone() * work[col][j].clone();
                work[r][j] -= w;
                let v = factor.clone() * inv[col][j].clone();
                inv[r][j] -= v;
            }
        }
    }
    Some((inv, det))
}

/// log of a positive rational, safe against f64 overflow of either part.
fn ln_big(r: &BigRational) -> f64 {
    fn ln_int(x: &BigInt) -> f64 {
        let m = x.magnitude();
        if let Some(v) = m.to_f64() {
            if v.is_finite() && v > 0.0 {
                return v.ln();
            }
        }
        let bits = m.bits();
        let top = (m >> (bits - 53)).to_f64().unwrap();
        top.ln() + (bits - 53) as f64 * std::f64::consts::LN_2
    }
    ln_int(r.numer()) - ln_int(r.denom())
}

/// Build the moment matrix with its exact inverse and condition estimate.
pub fn moment_matrix(spec: &ModelSpec, n: usize) -> Result<MomentMatrix, OracleError> {
    require_ginibre(spec)?;
    assert!(n >= 1);
    let exact: Vec<Vec<BigRational>> = (0..n)
        .map(|j| (0..n).map(|k| BigRational::from(exact_entry(spec, j, k))).collect())
        .collect();
    let (inv_exact, det) =
        invert_exact(&exact).ok_or_else(|| OracleError::Domain("singular moment matrix".into()))?;
    if !det.is_positive() {
        return Err(OracleError::Domain("moment matrix determinant not positive".into()));
    }
    let entries: Vec<Vec<f64>> =
        exact.iter().map(|row| row.iter().map(|e| e.to_f64().unwrap_or(f64::INFINITY)).collect()).collect();
    let inverse: Vec<Vec<f64>> =
        inv_exact.iter().map(|row| row.iter().map(|e| e.to_f64().unwrap_or(f64::INFINITY)).collect()).collect();
    // Condition of the equilibrated matrix D M D with D = diag(entries)^{-1/2}:
    // the raw 1-norm condition number is dominated by the factorial growth of
    // the entries and says nothing about the accuracy of the exact inverse.
    let d: Vec<f64> = (0..n).map(|j| entries[j][j].sqrt().recip()).collect();
    let norm1 = |m: &dyn Fn(usize, usize) -> f64| -> f64 {
        (0..n)
            .map(|k| (0..n).map(|j| m(j, k).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let scaled = |j: usize, k: usize| entries[j][k] * d[j] * d[k];
    let scaled_inv = |j: usize, k: usize| inverse[j][k] / (d[j] * d[k]);
    let condition_estimate = norm1(&scaled) * norm1(&scaled_inv);
    if condition_estimate > 1e12 {
        return Err(OracleError::IllConditioned { estimate: condition_estimate });
    }
    let weight_specs =
        (0..n).map(|k| WeightSpec::new(spec.m, spec.nu.clone(), k as u32)).collect();
    Ok(MomentMatrix {
        n,
        entries,
        condition_estimate,
        inverse,
        log_det: ln_big(&det),
        weight_specs,
    })
}

impl MomentMatrix {
    /// K_n(x, y) = Σ_k w_k(y) · Σ_j (M_n^{-1})_{k,j} x^j.
    pub fn kernel(&self, x: f64, y: f64) -> Result<f64, OracleError> {
        assert!(x > 0.0 && y > 0.0);
        let mut sum = 0.0;
        for k in 0..self.n {
            let wk = special::weight_w(&self.weight_specs[k], y)?;
            let mut poly = 0.0;
            for j in (0..self.n).rev() {
                poly = poly * x + self.inverse[k][j];
            }
            sum += wk * poly;
        }
        Ok(sum)
    }
}

/// The moment-matrix kernel at a single point (rebuilds the matrix; use
/// `MomentMatrix::kernel` directly for grids).
pub fn kernel_direct(spec: &ModelSpec, n: usize, x: f64, y: f64) -> Result<f64, OracleError> {
    moment_matrix(spec, n)?.kernel(x, y)
}

/// Verify log det M_n = Σ_{i=1}^n Σ_{j=0}^M log Γ(i+ν_j) to 1e-9.
pub fn normalization_check(spec: &ModelSpec, n: usize) -> Result<(f64, f64, bool), OracleError> {
    let mm = moment_matrix(spec, n)?;
    let lhs = mm.log_det;
    let mut rhs = 0.0;
    for i in 1..=n {
        rhs += special::ln_gamma_real(i as f64); // the implicit ν_0 = 0 factor
        for &nu in &spec.nu {
            rhs += special::ln_gamma_real(i as f64 + f64::from(nu));
        }
    }
    Ok((lhs, rhs, (lhs - rhs).abs() <= 1e-9))
}

/// Nodes and weights for ∫_0^∞ f(t) dt under t = u^M (which turns the
/// stretched-exponential decay e^{-M t^{1/M}} of the weights into e^{-M u}).
fn halfline_rule(m: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let gl = GaussLegendre::new(order);
    let u_max = 45.0;
    let panels = 150usize;
    let h = u_max / panels as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mf = m as f64;
    // The weights carry a logarithmic singularity at t = 0; dyadic grading of
    // the first panel keeps the rule accurate there.
    let mut spans: Vec<(f64, f64)> = Vec::new();
    let mut lo = h;
    for _ in 0..45 {
        spans.push((0.5 * lo, lo));
        lo *= 0.5;
    }
    spans.push((0.0, lo));
    for p in 1..panels {
        spans.push((p as f64 * h, (p as f64 + 1.0) * h));
    }
    for (a, b) in spans {
        let c = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
            let u = c + half * x;
            if u <= 0.0 {
                continue;
            }
            nodes.push(u.powi(m as i32));
            weights.push(w * half * mf * u.powi(m as i32 - 1));
        }
    }
    (nodes, weights)
}

/// Max relative defect of |∫ K(x,t) K(t,y) dt − K(x,y)| over a 4×4 grid.
pub fn reproducing_check(
    spec: &ModelSpec,
    n: usize,
    quadrature_order: usize,
) -> Result<f64, OracleError> {
    let mm = moment_matrix(spec, n)?;
    let (nodes, weights) = halfline_rule(spec.m, quadrature_order);
    // Cache w_k and the polynomial factors at the quadrature nodes.
    let mut w_cache = vec![vec![0.0; nodes.len()]; n];
    let mut p_cache = vec![vec![0.0; nodes.len()]; n];
    for k in 0..n {
        for (i, &t) in nodes.iter().enumerate() {
            w_cache[k][i] = special::weight_w(&mm.weight_specs[k], t)?;
            let mut poly = 0.0;
            for j in (0..n).rev() {
                poly = poly * t + mm.inverse[k][j];
            }
            p_cache[k][i] = poly;
        }
    }
    let grid: Vec<f64> = (0..4).map(|i| 0.5 + i as f64 * (3.0 - 0.5) / 3.0).collect();
    let mut defect = 0.0_f64;
    for &x in &grid {
        for &y in &grid {
            let direct = mm.kernel(x, y)?;
            let mut px = vec![0.0; n];
            let mut wy = vec![0.0; n];
            for k in 0..n {
                let mut poly = 0.0;
                for j in (0..n).rev() {
                    poly = poly * x + mm.inverse[k][j];
                }
                px[k] = poly;
                wy[k] = special::weight_w(&mm.weight_specs[k], y)?;
            }
            let mut integral = 0.0;
            for (i, &w) in weights.iter().enumerate() {
                // K(x,t) = Σ_k w_k(t) p_k(x); K(t,y) = Σ_k w_k(y) p_k(t).
                let kxt: f64 = (0..n).map(|k| w_cache[k][i] * px[k]).sum();
                let kty: f64 = (0..n).map(|k| wy[k] * p_cache[k][i]).sum();
                integral += w * kxt * kty;
            }
            defect = defect.max((integral - direct).abs() / direct.abs().max(1.0));
        }
    }
    Ok(defect)
}

/// ∫ K_n(t,t) dt, which must equal n (the trace identity tr(M M^{-1}) = n).
pub fn kernel_trace(spec: &ModelSpec, n: usize, quadrature_order: usize) -> Result<f64, OracleError> {
    let mm = moment_matrix(spec, n)?;
    let (nodes, weights) = halfline_rule(spec.m, quadrature_order);
    let mut trace = 0.0;
    for (&t, &w) in nodes.iter().zip(&weights) {
        trace += w * mm.kernel(t, t)?;
    }
    Ok(trace)
}
