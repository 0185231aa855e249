//! Finite-n kernel evaluation by double-contour quadrature for all three
//! models, rescaled bulk and edge kernels exactly as in the universality
//! statements, and the reference sine and Airy kernels.
//!
//! The integrand is always assembled as exp(F(s;y) − F(t;x))·y^{-1}/(s−t)
//! with F a sum of log-gammas, normalized per evaluation by the observed
//! maxima of Re F on the grids so that magnitudes stay near 1; the
//! normalization cancels exactly in the final log-space assembly.

use crate::contour::{self, Contour, ContourError, QuadratureGrid};
use crate::model::{self, BulkPoint, EdgeData, ModelError, ModelSpec, Variant};
use crate::phase::{self, PhaseContext, PhaseError};
use crate::special::{self, SpecialError};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("quadrature did not converge: error estimate {estimate:.3e} on value {value:.6e} after {refinements} refinements")]
    Convergence { estimate: f64, value: f64, refinements: usize },
    #[error("quadrature grid too close to an integrand pole near {0}")]
    PoleClearance(Complex64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Contour(#[from] ContourError),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

impl From<PhaseError> for KernelError {
    fn from(e: PhaseError) -> Self {
        match e {
            PhaseError::Pole(z) => KernelError::PoleClearance(z),
            PhaseError::BranchPoint(z) => KernelError::PoleClearance(z),
            PhaseError::Singularity(z) => KernelError::PoleClearance(z),
        }
    }
}

/// A converged kernel evaluation with its diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct KernelValue {
    pub value: f64,
    /// |Im| of the raw complex quadrature result (reality check).
    pub imag_residual: f64,
    /// Difference between the order-16 and order-32 grids.
    pub error_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    Bulk,
    Edge,
}

/// The scaling data of the bulk/edge universality statements.
#[derive(Debug, Clone)]
pub struct ScalingFrame {
    pub mode: ScalingMode,
    pub bulk: Option<BulkPoint>,
    pub edge: Option<EdgeData>,
    pub n: usize,
}

impl ScalingFrame {
    pub fn bulk(spec: &ModelSpec, phi: f64) -> Result<Self, ModelError> {
        Ok(ScalingFrame {
            mode: ScalingMode::Bulk,
            bulk: Some(BulkPoint::at_phi(spec, phi)?),
            edge: None,
            n: spec.n,
        })
    }

    pub fn edge(spec: &ModelSpec) -> Result<Self, ModelError> {
        Ok(ScalingFrame {
            mode: ScalingMode::Edge,
            bulk: None,
            edge: Some(model::edge_constants(spec)?),
            n: spec.n,
        })
    }
}

const LOG_CUTOFF: f64 = -46.0; // drop nodes below e^-46 ≈ 1e-20 of the peak
const REL_TOL: f64 = 1e-6;

/// Normalized double sum: returns (S, L) with
/// ∫_C ds ∮_Σ dt e^{F(s;y) − F(t;x)}/(s − t) = e^L · S.
fn normalized_double_sum(
    c_grid: &QuadratureGrid,
    sigma_grids: &[&QuadratureGrid],
    ctx_y: &PhaseContext,
    ctx_x: &PhaseContext,
) -> Result<(Complex64, f64), KernelError> {
    let mut s_val: Vec<(Complex64, Complex64, Complex64)> = Vec::new(); // (s, w, F(s;y))
    for (&s, &w) in c_grid.nodes.iter().zip(&c_grid.weights) {
        s_val.push((s, w, phase::big_f(ctx_y, s)?));
    }
    let mut t_val: Vec<(Complex64, Complex64, Complex64)> = Vec::new(); // (t, w, −F(t;x))
    for g in sigma_grids {
        for (&t, &w) in g.nodes.iter().zip(&g.weights) {
            t_val.push((t, w, -phase::big_f(ctx_x, t)?));
        }
    }
    let la = s_val.iter().map(|v| v.2.re).fold(f64::NEG_INFINITY, f64::max);
    let lb = t_val.iter().map(|v| v.2.re).fold(f64::NEG_INFINITY, f64::max);
    let s_kept: Vec<(Complex64, Complex64)> = s_val
        .iter()
        .filter(|v| v.2.re - la > LOG_CUTOFF)
        .map(|v| (v.0, v.1 * (v.2 - la).exp()))
        .collect();
    let t_kept: Vec<(Complex64, Complex64)> = t_val
        .iter()
        .filter(|v| v.2.re - lb > LOG_CUTOFF)
        .map(|v| (v.0, v.1 * (v.2 - lb).exp()))
        .collect();
    let mut sum = Complex64::new(0.0, 0.0);
    for &(s, ws) in &s_kept {
        let mut inner = Complex64::new(0.0, 0.0);
        for &(t, wt) in &t_kept {
            inner += wt / (s - t);
        }
        sum += ws * inner;
    }
    Ok((sum, la + lb))
}

/// As [`normalized_double_sum`], for a C that crosses the closed curve Σ.
/// Since the gamma parts of F(t;y) − F(t;x) cancel exactly, the integrand
/// value on the diagonal s = t is the entire function g(t) = e^{t·log(x/y)}
/// (up to the e^{F(s;y)} factor), and
///
///   ∬ e^{F(s;y)−F(t;x)}/(s−t) = ∬ [e^{F(s;y)−F(t;x)} − e^{t·log(x/y)}]/(s−t)
///                               + ∮_Σ dt g(t) ∫_C ds/(s−t),
///
/// where the last term is, by Cauchy's theorem applied to the closed Σ,
/// exactly the negative of the residue strip picked up by letting C cross Σ.
/// The two cancel, so the kernel is the subtracted double integral alone.
/// Its integrand is a divided difference of entire functions — smooth in
/// both variables across the crossing — so plain product quadrature
/// converges at full order where the unsubtracted sum stalls.
fn normalized_double_sum_subtracted(
    c_grid: &QuadratureGrid,
    sigma_grids: &[&QuadratureGrid],
    ctx_y: &PhaseContext,
    ctx_x: &PhaseContext,
    ln_ratio: f64,
) -> Result<(Complex64, f64), KernelError> {
    let mut s_val: Vec<(Complex64, Complex64, Complex64)> = Vec::new(); // (s, w, F(s;y))
    for (&s, &w) in c_grid.nodes.iter().zip(&c_grid.weights) {
        s_val.push((s, w, phase::big_f(ctx_y, s)?));
    }
    let mut t_val: Vec<(Complex64, Complex64, Complex64)> = Vec::new(); // (t, w, −F(t;x))
    for g in sigma_grids {
        for (&t, &w) in g.nodes.iter().zip(&g.weights) {
            t_val.push((t, w, -phase::big_f(ctx_x, t)?));
        }
    }
    let la = s_val.iter().map(|v| v.2.re).fold(f64::NEG_INFINITY, f64::max);
    let lb = t_val.iter().map(|v| v.2.re).fold(f64::NEG_INFINITY, f64::max);
    let l = la + lb;
    // Per t-node, carry both peak-normalized factors: w·e^{−F(t;x)−lb} for
    // the main term and w·e^{t·log(x/y)−l} for the subtraction. The two have
    // different decay profiles, so a node is kept while either is alive.
    let mut t_kept: Vec<(Complex64, Complex64, Complex64)> = Vec::new();
    for v in &t_val {
        let gamma = v.0 * ln_ratio - l;
        if gamma.re > 600.0 {
            return Err(KernelError::Domain(
                "crossing subtraction overflows its normalization".into(),
            ));
        }
        let beta = v.2 - lb;
        if beta.re > LOG_CUTOFF || gamma.re > LOG_CUTOFF {
            let bt = if beta.re > LOG_CUTOFF { v.1 * beta.exp() } else { Complex64::ZERO };
            let gt = if gamma.re > LOG_CUTOFF { v.1 * gamma.exp() } else { Complex64::ZERO };
            t_kept.push((v.0, bt, gt));
        }
    }
    let mut sum = Complex64::new(0.0, 0.0);
    for &(s, w_raw, a) in &s_val {
        let alive = a.re - la > LOG_CUTOFF;
        let ws = if alive { w_raw * (a - la).exp() } else { Complex64::ZERO };
        let mut inner = Complex64::new(0.0, 0.0);
        for &(t, bt, gt) in &t_kept {
            let d = s - t;
            if d.norm_sqr() < 1e-24 {
                continue; // removable diagonal: the divided difference is finite
            }
            inner += (ws * bt - w_raw * gt) / d;
        }
        sum += inner;
    }
    Ok((sum, l))
}

/// Combine the normalized sum with the remaining log-scale factors:
/// value = Re(−S · e^{L + ln_extra}), where ln_extra collects −log y,
/// −log(4π²), and any scaling prefactors/conjugation exponents.
fn finish(sum: Complex64, l: f64, ln_extra: f64) -> Result<(f64, f64), KernelError> {
    let total = l + ln_extra - (4.0 * PI * PI).ln();
    if total > 700.0 {
        return Err(KernelError::Domain(format!(
            "kernel magnitude overflows double precision (log scale {total:.1})"
        )));
    }
    let c = -sum * total.exp();
    Ok((c.re, c.im.abs()))
}

/// Quadrature knobs shared by the kernel engines. `panels_per_unit` of None
/// picks the engine's default; `order` is the coarse Gauss–Legendre order
/// (the error estimate compares it against order 2·order).
#[derive(Debug, Clone, Copy)]
pub struct EngineOptions {
    pub panels_per_unit: Option<f64>,
    pub order: usize,
    pub rel_tol: f64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { panels_per_unit: None, order: 16, rel_tol: REL_TOL }
    }
}

struct GridSet {
    c_coarse: QuadratureGrid,
    c_fine: QuadratureGrid,
    s_coarse: Vec<QuadratureGrid>,
    s_fine: Vec<QuadratureGrid>,
}

fn grid_levels(c: &Contour, sigmas: &[&Contour], base_ppu: f64, order: usize, levels: usize) -> Vec<GridSet> {
    (0..levels)
        .map(|lvl| {
            let ppu = base_ppu * 1.5f64.powi(lvl as i32);
            GridSet {
                c_coarse: contour::discretize(c, ppu, order),
                c_fine: contour::discretize(c, ppu, 2 * order),
                s_coarse: sigmas.iter().map(|s| contour::discretize(s, ppu, order)).collect(),
                s_fine: sigmas.iter().map(|s| contour::discretize(s, ppu, 2 * order)).collect(),
            }
        })
        .collect()
}

/// Run the refinement ladder: accept when the coarse- and fine-order grids
/// agree and the imaginary residual is within the reality tolerance.
fn refine(
    grids: &[GridSet],
    ctx_y: &PhaseContext,
    ctx_x: &PhaseContext,
    ln_extra: f64,
    rel_tol: f64,
) -> Result<KernelValue, KernelError> {
    let mut last = (0.0, 0.0, f64::INFINITY);
    for set in grids {
        let gc: Vec<&QuadratureGrid> = set.s_coarse.iter().collect();
        let gf: Vec<&QuadratureGrid> = set.s_fine.iter().collect();
        let (sum_c, l_c) = normalized_double_sum(&set.c_coarse, &gc, ctx_y, ctx_x)?;
        let (v_c, _) = finish(sum_c, l_c, ln_extra)?;
        let (sum_f, l_f) = normalized_double_sum(&set.c_fine, &gf, ctx_y, ctx_x)?;
        let (v_f, im_f) = finish(sum_f, l_f, ln_extra)?;
        let est = (v_c - v_f).abs();
        let scale = v_f.abs().max(1.0);
        // The unnormalized peak-magnitude terms carry relative roundoff
        // ~1e-13; when they cancel down to the value, that noise is an
        // absolute floor no refinement can beat. Accept results only while
        // the floor still leaves at least three digits.
        let ln_norm = (l_f + ln_extra - (4.0 * PI * PI).ln()).min(700.0);
        let noise = 1e-13 * ln_norm.exp();
        let tol = rel_tol * scale + noise;
        if est <= tol && im_f <= tol && noise <= 1e-3 * scale {
            return Ok(KernelValue {
                value: v_f,
                imag_residual: im_f,
                error_estimate: est.max(noise),
            });
        }
        last = (v_f, im_f, est.max(noise));
    }
    Err(KernelError::Convergence { estimate: last.2, value: last.0, refinements: grids.len() })
}

/// Refinement ladder for the crossing-contour bulk path, built on the
/// subtracted double sum.
fn refine_crossing(
    grids: &[GridSet],
    ctx_y: &PhaseContext,
    ctx_x: &PhaseContext,
    ln_extra: f64,
    rel_tol: f64,
    ln_ratio: f64,
) -> Result<KernelValue, KernelError> {
    let mut last = (0.0, 0.0, f64::INFINITY);
    for set in grids {
        let gc: Vec<&QuadratureGrid> = set.s_coarse.iter().collect();
        let gf: Vec<&QuadratureGrid> = set.s_fine.iter().collect();
        let (sum_c, l_c) =
            normalized_double_sum_subtracted(&set.c_coarse, &gc, ctx_y, ctx_x, ln_ratio)?;
        let (v_c, _) = finish(sum_c, l_c, ln_extra)?;
        let (sum_f, l_f) =
            normalized_double_sum_subtracted(&set.c_fine, &gf, ctx_y, ctx_x, ln_ratio)?;
        let (v_f, im_f) = finish(sum_f, l_f, ln_extra)?;
        let est = (v_c - v_f).abs();
        let scale = v_f.abs().max(1.0);
        let ln_norm = (l_f + ln_extra - (4.0 * PI * PI).ln()).min(700.0);
        let noise = 1e-13 * ln_norm.exp();
        let tol = rel_tol * scale + noise;
        if est <= tol && im_f <= tol && noise <= 1e-3 * scale {
            return Ok(KernelValue {
                value: v_f,
                imag_residual: im_f,
                error_estimate: est.max(noise),
            });
        }
        last = (v_f, im_f, est.max(noise));
    }
    Err(KernelError::Convergence { estimate: last.2, value: last.0, refinements: grids.len() })
}

/// Reusable direct-contour evaluator (Σ around the pole string, C vertical).
pub struct DirectKernel {
    spec: ModelSpec,
    grids: Vec<GridSet>,
    rel_tol: f64,
}

impl DirectKernel {
    pub fn new(spec: &ModelSpec) -> Result<Self, KernelError> {
        Self::with_options(spec, EngineOptions::default())
    }

    pub fn with_options(spec: &ModelSpec, opts: EngineOptions) -> Result<Self, KernelError> {
        assert!(spec.n <= 512, "direct quadrature regime is n <= 512");
        let (c, sigma) = contour::build_direct_contours(spec)?;
        let ppu = opts.panels_per_unit.unwrap_or(2.0);
        let grids = grid_levels(&c, &[&sigma], ppu, opts.order, 3);
        Ok(DirectKernel { spec: spec.clone(), grids, rel_tol: opts.rel_tol })
    }

    /// As `new`, but with C moved to the right of Σ (contour-switch identity:
    /// the double integral is unchanged because ∮_Σ (x/y)^t dt = 0).
    pub fn new_switched(spec: &ModelSpec) -> Result<Self, KernelError> {
        let (c, sigma) = contour::build_direct_contours(spec)?;
        let c_right = switched_c_line(&sigma, &c, spec)?;
        let grids = grid_levels(&c_right, &[&sigma], 2.0, 16, 3);
        Ok(DirectKernel { spec: spec.clone(), grids, rel_tol: REL_TOL })
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<KernelValue, KernelError> {
        assert!(x > 0.0 && y > 0.0);
        let ctx_y = PhaseContext::new(self.spec.clone(), y);
        let ctx_x = PhaseContext::new(self.spec.clone(), x);
        refine(&self.grids, &ctx_y, &ctx_x, -y.ln(), self.rel_tol)
    }
}

/// Vertical line strictly right of Σ (at n − 1/4), truncated at the same
/// height as the default C line (the decay rate along a vertical line is the
/// same up to O(1)).
fn switched_c_line(
    sigma: &Contour,
    c_left: &Contour,
    spec: &ModelSpec,
) -> Result<Contour, ContourError> {
    let n = spec.n as f64;
    let x = n - 0.25;
    let sigma_right = sigma
        .segments
        .iter()
        .flat_map(|seg| (0..=8).map(move |k| seg.point(k as f64 / 8.0).re))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(sigma_right < x, "Σ must stay left of the switched C line");
    let mut t_max: f64 = 1.0;
    for seg in &c_left.segments {
        t_max = t_max.max(seg.point(0.0).im.abs()).max(seg.point(1.0).im.abs());
    }
    let kind = contour::SegmentKind::VerticalLine { x, y0: -t_max, y1: t_max };
    Contour::new(
        "C_direct_right".to_string(),
        vec![contour::ContourSegment::forward(kind)],
        false,
    )
}

/// The finite-n kernel K_n(x, y) on the direct contours.
pub fn kernel_finite_n(spec: &ModelSpec, x: f64, y: f64) -> Result<KernelValue, KernelError> {
    DirectKernel::new(spec)?.eval(x, y)
}

fn cot(x: f64) -> f64 {
    x.cos() / x.sin()
}

/// The conjugation angle of the bulk statements: φ for the Ginibre product
/// and the inverse variant, φ/2 for the truncated-unitary variant.
fn bulk_conj_angle(spec: &ModelSpec, phi: f64) -> f64 {
    match spec.variant {
        Variant::TruncatedUnitary => 0.5 * phi,
        _ => phi,
    }
}

/// Reusable bulk-scaling evaluator on the saddle-adapted contours.
pub struct BulkKernel {
    spec: ModelSpec,
    point: BulkPoint,
    grids: Vec<GridSet>,
    rel_tol: f64,
}

impl BulkKernel {
    pub fn new(spec: &ModelSpec, point: &BulkPoint) -> Result<Self, KernelError> {
        Self::with_options(spec, point, EngineOptions::default())
    }

    pub fn with_options(
        spec: &ModelSpec,
        point: &BulkPoint,
        opts: EngineOptions,
    ) -> Result<Self, KernelError> {
        let (eps_prime, _) = contour::default_bulk_epsilons(spec.n);
        let (c, sigma, _crossing) =
            contour::build_bulk_contours_closed(spec, point.phi, eps_prime)?;
        let ppu = opts.panels_per_unit.unwrap_or(0.75);
        let grids = grid_levels(&c, &[&sigma], ppu, opts.order, 3);
        Ok(BulkKernel {
            spec: spec.clone(),
            point: point.clone(),
            grids,
            rel_tol: opts.rel_tol,
        })
    }

    /// The exact left-hand side of the bulk universality statement.
    pub fn eval(&self, xi: f64, eta: f64) -> Result<KernelValue, KernelError> {
        let n = self.spec.n as f64;
        let p = self.spec.arg_power();
        let bp = &self.point;
        let x = n.powi(p) * (bp.x0 + xi / (n * bp.rho));
        let y = n.powi(p) * (bp.x0 + eta / (n * bp.rho));
        if x <= 0.0 || y <= 0.0 {
            return Err(KernelError::Domain("scaled arguments left the positive axis".into()));
        }
        let ctx_y = PhaseContext::new(self.spec.clone(), y);
        let ctx_x = PhaseContext::new(self.spec.clone(), x);
        // conjugation factor e^{−π(ξ−η)cot} and prefactor n^{p−1}/ρ, in logs
        let ln_extra = -y.ln() - PI * (xi - eta) * cot(bulk_conj_angle(&self.spec, bp.phi))
            + (p as f64 - 1.0) * n.ln()
            - bp.rho.ln();
        let ln_ratio = x.ln() - y.ln();
        refine_crossing(&self.grids, &ctx_y, &ctx_x, ln_extra, self.rel_tol, ln_ratio)
    }
}

pub fn rescaled_bulk_kernel(
    spec: &ModelSpec,
    frame: &ScalingFrame,
    xi: f64,
    eta: f64,
) -> Result<f64, KernelError> {
    assert_eq!(frame.mode, ScalingMode::Bulk);
    let point = frame.bulk.as_ref().expect("bulk frame");
    Ok(BulkKernel::new(spec, point)?.eval(xi, eta)?.value)
}

/// Reusable edge-scaling evaluator on the coalescing-saddle contours.
pub struct EdgeKernel {
    spec: ModelSpec,
    data: EdgeData,
    grids: Vec<GridSet>,
    rel_tol: f64,
}

impl EdgeKernel {
    pub fn new(spec: &ModelSpec) -> Result<Self, KernelError> {
        Self::with_options(spec, EngineOptions::default())
    }

    pub fn with_options(spec: &ModelSpec, opts: EngineOptions) -> Result<Self, KernelError> {
        let data = model::edge_constants(spec)?;
        let (c, sigma) = contour::build_edge_contours(spec)?;
        let ppu = opts.panels_per_unit.unwrap_or(0.75);
        let grids = grid_levels(&c, &[&sigma], ppu, opts.order, 3);
        Ok(EdgeKernel { spec: spec.clone(), data, grids, rel_tol: opts.rel_tol })
    }

    /// The exact left-hand side of the soft-edge universality statement.
    pub fn eval(&self, xi: f64, eta: f64) -> Result<KernelValue, KernelError> {
        let n = self.spec.n as f64;
        let p = self.spec.arg_power();
        let e = &self.data;
        let x = n.powi(p) * (e.x_star + e.c2 * xi / n.powf(2.0 / 3.0));
        let y = n.powi(p) * (e.x_star + e.c2 * eta / n.powf(2.0 / 3.0));
        if x <= 0.0 || y <= 0.0 {
            return Err(KernelError::Domain("scaled arguments left the positive axis".into()));
        }
        let ctx_y = PhaseContext::new(self.spec.clone(), y);
        let ctx_x = PhaseContext::new(self.spec.clone(), x);
        // conjugation exponent z0·(c2/x*)·n^{1/3}(ξ−η) and prefactor
        // n^{p−2/3}·c2, assembled in log-space with the kernel magnitude
        let ln_extra = -y.ln() - e.z0 * (e.c2 / e.x_star) * n.powf(1.0 / 3.0) * (xi - eta)
            + (p as f64 - 2.0 / 3.0) * n.ln()
            + e.c2.ln();
        refine(&self.grids, &ctx_y, &ctx_x, ln_extra, self.rel_tol)
    }
}

pub fn rescaled_edge_kernel(
    spec: &ModelSpec,
    frame: &ScalingFrame,
    xi: f64,
    eta: f64,
) -> Result<f64, KernelError> {
    assert_eq!(frame.mode, ScalingMode::Edge);
    let _ = frame.edge.as_ref().expect("edge frame");
    Ok(EdgeKernel::new(spec)?.eval(xi, eta)?.value)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// K_sin(ξ, η) = sin π(ξ−η) / (π(ξ−η)), 1 on the diagonal.
pub fn sine_kernel(xi: f64, eta: f64) -> f64 {
    sinc(PI * (xi - eta))
}

/// Closed form of the Σ_vertical part of the bulk integral in the ε→0 limit:
/// I2 = (2πi·y·log(x/y))^{-1}·((x/y)^{nw+} − (x/y)^{nw−}), written with the
/// difference of conjugate exponentials reduced to a real sine so the
/// removable singularity at x = y is handled by the sinc limit.
pub fn bulk_i2_closed_form(spec: &ModelSpec, point: &BulkPoint, xi: f64, eta: f64) -> f64 {
    let n = spec.n as f64;
    let p = spec.arg_power();
    let y = n.powi(p) * (point.x0 + eta / (n * point.rho));
    let ratio = (point.x0 + xi / (n * point.rho)) / (point.x0 + eta / (n * point.rho));
    let l = ratio.ln();
    let (re_w, im_w) = (point.w_plus.re, point.w_plus.im);
    (n * im_w / (PI * y)) * (n * l * re_w).exp() * sinc(n * l * im_w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AiryMethod {
    AiryFormula,
    ContourIntegral,
}

/// K_Ai(ξ, η) by the Ai/Ai′ formula or by the wedge-contour double integral.
pub fn airy_kernel(xi: f64, eta: f64, method: AiryMethod) -> Result<f64, KernelError> {
    assert!(
        (-30.0..=10.0).contains(&xi) && (-30.0..=10.0).contains(&eta),
        "airy_kernel arguments must lie in [-30, 10]"
    );
    match method {
        AiryMethod::AiryFormula => {
            if (xi - eta).abs() < 1e-10 {
                let x = 0.5 * (xi + eta);
                let (ai, aip) = special::airy_ai(x)?;
                Ok(aip * aip - x * ai * ai)
            } else {
                let (ai_x, aip_x) = special::airy_ai(xi)?;
                let (ai_y, aip_y) = special::airy_ai(eta)?;
                Ok((ai_x * aip_y - aip_x * ai_y) / (xi - eta))
            }
        }
        AiryMethod::ContourIntegral => airy_contour_integral(xi, eta),
    }
}

/// Nodes/weights along a wedge contour from vertex ± rays at the given unit
/// directions, Gauss–Legendre on panels of the stated length.
fn wedge_nodes(
    vertex: Complex64,
    dir_down: Complex64,
    dir_up: Complex64,
    reach: f64,
    panel: f64,
    order: usize,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let gl = crate::quad::GaussLegendre::new(order);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let panels = (reach / panel).ceil() as usize;
    // lower ray traversed inward (r: reach→0), then upper ray outward
    for pnl in (0..panels).rev() {
        // b < a: the negative half-width supplies the inward direction
        let (a, b) = ((pnl + 1) as f64 * panel, pnl as f64 * panel);
        for (&xn, &wn) in gl.nodes.iter().zip(&gl.weights) {
            let r = 0.5 * (a + b) + 0.5 * (b - a) * xn;
            nodes.push(vertex + r * dir_down);
            weights.push(wn * 0.5 * (b - a) * dir_down);
        }
    }
    for pnl in 0..panels {
        let (a, b) = (pnl as f64 * panel, (pnl + 1) as f64 * panel);
        for (&xn, &wn) in gl.nodes.iter().zip(&gl.weights) {
            let r = 0.5 * (a + b) + 0.5 * (b - a) * xn;
            nodes.push(vertex + r * dir_up);
            weights.push(wn * 0.5 * (b - a) * dir_up);
        }
    }
    (nodes, weights)
}

fn airy_contour_integral(xi: f64, eta: f64) -> Result<f64, KernelError> {
    // γ_R from e^{−iπ/3}∞ to e^{iπ/3}∞ through +1/2; γ_L its mirror image
    // through −1/2, also traversed upward. Reach chosen so the integrand
    // drops below 1e-18 of its peak: Re(μ³/3) ~ −r³/3 beats |x|·r by r=9
    // for |x| ≤ 30.
    let reach = 9.0 + (xi.abs().max(eta.abs())).sqrt();
    let phase_r = |mu: Complex64| mu * mu * mu / 3.0 - xi * mu;
    let phase_l = |la: Complex64| la * la * la / 3.0 - eta * la;
    let eval = |order: usize| -> f64 {
        let (rn, rw) = wedge_nodes(
            Complex64::new(0.5, 0.0),
            Complex64::from_polar(1.0, -PI / 3.0),
            Complex64::from_polar(1.0, PI / 3.0),
            reach,
            0.5,
            order,
        );
        let (ln_, lw) = wedge_nodes(
            Complex64::new(-0.5, 0.0),
            Complex64::from_polar(1.0, -2.0 * PI / 3.0),
            Complex64::from_polar(1.0, 2.0 * PI / 3.0),
            reach,
            0.5,
            order,
        );
        let a: Vec<Complex64> = rn.iter().map(|&mu| phase_r(mu)).collect();
        let b: Vec<Complex64> = ln_.iter().map(|&la| -phase_l(la)).collect();
        let la_max = a.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
        let lb_max = b.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = Complex64::new(0.0, 0.0);
        for (i, &mu) in rn.iter().enumerate() {
            if a[i].re - la_max < LOG_CUTOFF {
                continue;
            }
            let fa = rw[i] * (a[i] - la_max).exp();
            let mut inner = Complex64::new(0.0, 0.0);
            for (j, &lam) in ln_.iter().enumerate() {
                if b[j].re - lb_max < LOG_CUTOFF {
                    continue;
                }
                inner += lw[j] * (b[j] - lb_max).exp() / (mu - lam);
            }
            sum += fa * inner;
        }
        // 1/(2πi)² = −1/(4π²)
        (-sum * (la_max + lb_max).exp()).re / (4.0 * PI * PI)
    };
    let coarse = eval(16);
    let fine = eval(32);
    let est = (coarse - fine).abs();
    if est > 1e-9 * fine.abs().max(1.0) {
        return Err(KernelError::Convergence { estimate: est, value: fine, refinements: 1 });
    }
    Ok(fine)
}

/// One row of a convergence table: n and the sup-norm distance to the limit.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n: usize,
    pub sup_error: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub mode: ScalingMode,
    pub rows: Vec<ConvergenceRow>,
    pub decreasing: bool,
}

/// Sup over the grid of |rescaled kernel − limit kernel| for each n.
/// `phi` selects the bulk reference point and is ignored in edge mode.
pub fn convergence_report(
    spec: &ModelSpec,
    mode: ScalingMode,
    phi: Option<f64>,
    n_list: &[usize],
    grid: &[(f64, f64)],
) -> Result<ConvergenceReport, KernelError> {
    assert!(n_list.windows(2).all(|w| w[0] < w[1]), "nList must be increasing");
    use rayon::prelude::*;
    // The report's resolution is the distance to the universal limit
    // (O(10^-2) at desk-scale n); a 1e-3 engine tolerance is an order below
    // that, and loose enough to admit the cancellation-noise floor of the
    // truncated-unitary phase function, which sits above the default gate
    // at a handful of off-diagonal points.
    let opts = EngineOptions { rel_tol: 1e-3, ..EngineOptions::default() };
    let mut rows = Vec::new();
    for &n in n_list {
        let spec_n = ModelSpec { n, ..spec.clone() };
        let errors: Result<Vec<f64>, KernelError> = match mode {
            ScalingMode::Bulk => {
                let phi = phi.expect("bulk mode needs a reference angle");
                let point = BulkPoint::at_phi(&spec_n, phi)?;
                let engine = BulkKernel::with_options(&spec_n, &point, opts)?;
                grid.par_iter()
                    .map(|&(xi, eta)| {
                        Ok((engine.eval(xi, eta)?.value - sine_kernel(xi, eta)).abs())
                    })
                    .collect()
            }
            ScalingMode::Edge => {
                let engine = EdgeKernel::with_options(&spec_n, opts)?;
                grid.par_iter()
                    .map(|&(xi, eta)| {
                        let limit = airy_kernel(xi, eta, AiryMethod::AiryFormula)?;
                        Ok((engine.eval(xi, eta)?.value - limit).abs())
                    })
                    .collect()
            }
        };
        let sup = errors?.into_iter().fold(0.0, f64::max);
        rows.push(ConvergenceRow { n, sup_error: sup });
    }
    let decreasing = rows.windows(2).all(|w| w[0].sup_error > w[1].sup_error);
    Ok(ConvergenceReport { mode, rows, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    #[test]
    fn sine_kernel_values() {
        assert_eq!(sine_kernel(0.0, 0.0), 1.0);
        assert!(sine_kernel(0.0, 1.0).abs() < 1e-15);
        assert!((sine_kernel(0.0, 0.5) - 2.0 / PI).abs() < 1e-15);
        assert!((sine_kernel(0.25, 0.25 + 1e-12) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn airy_kernel_formula_values() {
        // K_Ai(0,0) = Ai′(0)² = 3^{-2/3}/Γ(1/3)² ≈ 0.06698657...
        let diag = airy_kernel(0.0, 0.0, AiryMethod::AiryFormula).unwrap();
        assert!((diag - 0.066987483779663974).abs() < 1e-12, "{diag}");
        // symmetry and continuity across the removable singularity
        let a = airy_kernel(-1.3, 0.4, AiryMethod::AiryFormula).unwrap();
        let b = airy_kernel(0.4, -1.3, AiryMethod::AiryFormula).unwrap();
        assert!((a - b).abs() < 1e-12);
        let near = airy_kernel(0.7, 0.7 + 1e-7, AiryMethod::AiryFormula).unwrap();
        let at = airy_kernel(0.7, 0.7, AiryMethod::AiryFormula).unwrap();
        assert!((near - at).abs() < 1e-6, "{near} vs {at}");
    }

    #[test]
    fn airy_methods_agree() {
        for &xi in &[-3.0, -1.0, 1.0] {
            for &eta in &[-2.0, 0.0, 0.5] {
                let f = airy_kernel(xi, eta, AiryMethod::AiryFormula).unwrap();
                let c = airy_kernel(xi, eta, AiryMethod::ContourIntegral).unwrap();
                assert!((f - c).abs() < 1e-8, "({xi},{eta}): {f} vs {c}");
            }
        }
    }

    #[test]
    fn finite_n_frozen_smallest_case() {
        // n=2, M=1: K_2(1,1) = e^{-1} from the 2×2 moment matrix by hand.
        let spec = ModelSpec::ginibre(2, 1, vec![0]);
        let kv = kernel_finite_n(&spec, 1.0, 1.0).unwrap();
        assert!((kv.value - (-1.0f64).exp()).abs() < 1e-9, "{}", kv.value);
        assert!(kv.imag_residual < 1e-9);
        assert!(kv.error_estimate < 1e-7);
    }

    #[test]
    fn finite_n_matches_moment_oracle() {
        let spec = ModelSpec::ginibre(3, 2, vec![0, 0]);
        let direct = oracle::kernel_direct(&spec, 3, 1.0, 1.0).unwrap();
        let kv = kernel_finite_n(&spec, 1.0, 1.0).unwrap();
        assert!(
            (kv.value - direct).abs() <= 1e-8 * direct.abs().max(1.0),
            "{} vs {direct}",
            kv.value
        );
    }

    #[test]
    fn finite_n_matches_laguerre_christoffel_darboux() {
        // M=1, ν=0: the kernel is e^{-y} Σ_{k<n} L_k(x) L_k(y) with the
        // (orthonormal) Laguerre polynomials.
        let n = 4;
        let spec = ModelSpec::ginibre(n, 1, vec![0]);
        let engine = DirectKernel::new(&spec).unwrap();
        let laguerre = |x: f64| -> Vec<f64> {
            let mut l = vec![1.0, 1.0 - x];
            for k in 1..n - 1 {
                let kf = k as f64;
                let next = ((2.0 * kf + 1.0 - x) * l[k] - kf * l[k - 1]) / (kf + 1.0);
                l.push(next);
            }
            l
        };
        for &(x, y) in &[(0.5, 0.5), (1.0, 2.0), (3.0, 0.7)] {
            let lx = laguerre(x);
            let ly = laguerre(y);
            let cd: f64 = (-y).exp() * (0..n).map(|k| lx[k] * ly[k]).sum::<f64>();
            let kv = engine.eval(x, y).unwrap();
            assert!(
                (kv.value - cd).abs() <= 1e-8 * cd.abs().max(1.0),
                "({x},{y}): {} vs {cd}",
                kv.value
            );
        }
    }

    #[test]
    fn contour_switch_identity() {
        let spec = ModelSpec::ginibre(4, 2, vec![0, 1]);
        let left = DirectKernel::new(&spec).unwrap();
        let right = DirectKernel::new_switched(&spec).unwrap();
        for &(x, y) in &[(1.0, 1.0), (2.5, 0.8)] {
            let a = left.eval(x, y).unwrap().value;
            let b = right.eval(x, y).unwrap().value;
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn trace_of_finite_n_kernel_is_n() {
        // ∫ K_n(x,x) dx = n; Gauss–Legendre in the u = x^{1/M} variable.
        let spec = ModelSpec::ginibre(5, 2, vec![0, 1]);
        let engine = DirectKernel::new(&spec).unwrap();
        let gl = crate::quad::GaussLegendre::new(8);
        let mut trace = 0.0;
        let panels = 80;
        let u_max = 40.0;
        let h = u_max / panels as f64;
        for p in 0..panels {
            trace += gl.integrate(p as f64 * h, (p + 1) as f64 * h, |u| {
                let x = u * u;
                2.0 * u * engine.eval(x, x).unwrap().value
            });
        }
        assert!((trace - 5.0).abs() <= 1e-6 * 5.0, "{trace}");
    }

    #[test]
    fn bulk_closed_curve_matches_split_curve_decomposition() {
        // Two independent evaluations of the same rescaled kernel: the
        // closed-curve engine (subtracted double sum over C × Σ_full) against
        // the split-curve decomposition (C between the two sealed components,
        // plain double sum). The split form loses digits as n grows, but at
        // n = 50 it still carries ~6 digits, enough to cross-validate every
        // variant's closed-curve path.
        let specs = [
            ModelSpec::ginibre(50, 2, vec![0, 0]),
            ModelSpec::with_inverses(50, 2, 1, vec![0, 0], vec![0]),
            ModelSpec::truncated_unitary(50, 2, vec![0, 0], 3),
        ];
        let phis = [PI / 6.0, PI / 6.0, PI / 4.0];
        for (spec, &phi) in specs.iter().zip(&phis) {
            let point = BulkPoint::at_phi(spec, phi).unwrap();
            let bulk = BulkKernel::new(spec, &point).unwrap();
            let eps = contour::default_bulk_epsilons(spec.n);
            let (c, sl, sr) = contour::build_bulk_contours(spec, phi, eps).unwrap();
            let grids = grid_levels(&c, &[&sl, &sr], 1.0, 16, 2);
            let n = spec.n as f64;
            let p = spec.arg_power();
            for &(xi, eta) in &[(0.3, -0.4), (1.1, 1.1)] {
                let via_closed = bulk.eval(xi, eta).unwrap().value;
                let x = n.powi(p) * (point.x0 + xi / (n * point.rho));
                let y = n.powi(p) * (point.x0 + eta / (n * point.rho));
                let ctx_y = PhaseContext::new(spec.clone(), y);
                let ctx_x = PhaseContext::new(spec.clone(), x);
                let ln_extra = -y.ln()
                    - PI * (xi - eta) * cot(bulk_conj_angle(spec, phi))
                    + (p as f64 - 1.0) * n.ln()
                    - point.rho.ln();
                let set = &grids[1];
                let gf: Vec<&QuadratureGrid> = set.s_fine.iter().collect();
                let (sum, l) = normalized_double_sum(&set.c_fine, &gf, &ctx_y, &ctx_x).unwrap();
                let (via_split, _) = finish(sum, l, ln_extra).unwrap();
                assert!(
                    (via_closed - via_split).abs() <= 1e-4 * via_split.abs().max(0.1),
                    "{:?} ({xi},{eta}): {via_closed} vs {via_split}",
                    spec.variant
                );
            }
        }
    }

    #[test]
    fn bulk_engine_agrees_with_direct_contours() {
        // The same rescaled kernel from the saddle-adapted contours
        // and from the direct contours. The direct representation loses
        // digits to cancellation as the scaled arguments grow, so compare at
        // a reference point near the hard edge where they stay small; the
        // direct engine's own noise gate guarantees at least three digits.
        let spec = ModelSpec::ginibre(12, 2, vec![0, 0]);
        let phi = 0.95;
        let point = BulkPoint::at_phi(&spec, phi).unwrap();
        let bulk = BulkKernel::new(&spec, &point).unwrap();
        let direct = DirectKernel::new(&spec).unwrap();
        let n = 12.0f64;
        for &(xi, eta) in &[(0.0, 0.0), (0.7, -0.4)] {
            let via_bulk = bulk.eval(xi, eta).unwrap().value;
            let x = n.powi(2) * (point.x0 + xi / (n * point.rho));
            let y = n.powi(2) * (point.x0 + eta / (n * point.rho));
            let kd = direct.eval(x, y).unwrap();
            let prefactor = (-PI * (xi - eta) * cot(phi)).exp() * n / point.rho;
            let via_direct = prefactor * kd.value;
            let tol = (1e-6 + 2.0 * prefactor * kd.error_estimate / via_direct.abs().max(1.0))
                * via_direct.abs().max(1.0);
            assert!(
                (via_bulk - via_direct).abs() <= tol,
                "({xi},{eta}): {via_bulk} vs {via_direct} (tol {tol:e})"
            );
        }
    }

    #[test]
    fn bulk_kernel_approaches_sine_kernel() {
        let spec = ModelSpec::ginibre(60, 2, vec![0, 0]);
        let frame = ScalingFrame::bulk(&spec, PI / 6.0).unwrap();
        let v = rescaled_bulk_kernel(&spec, &frame, 0.0, 0.0).unwrap();
        assert!((v - 1.0).abs() < 0.1, "{v}");
        let v = rescaled_bulk_kernel(&spec, &frame, 0.9, -0.35).unwrap();
        assert!((v - sine_kernel(0.9, -0.35)).abs() < 0.1, "{v}");
    }

    #[test]
    fn edge_kernel_approaches_airy_kernel() {
        let spec = ModelSpec::ginibre(60, 2, vec![0, 0]);
        let frame = ScalingFrame::edge(&spec).unwrap();
        let v = rescaled_edge_kernel(&spec, &frame, 0.0, 0.0).unwrap();
        assert!((v - 0.066987).abs() < 0.05, "{v}");
    }

    #[test]
    fn i2_closed_form_carries_the_sine_kernel() {
        // conj·(n^{p-1}/ρ)·I2 → sinc π(ξ−η): the dominant term of the bulk limit.
        let spec = ModelSpec::ginibre(2000, 2, vec![0, 0]);
        let point = BulkPoint::at_phi(&spec, PI / 6.0).unwrap();
        let n = 2000.0;
        for &(xi, eta) in &[(0.3, -0.2), (1.4, 1.4), (2.0, 0.0)] {
            let i2 = bulk_i2_closed_form(&spec, &point, xi, eta);
            let v = (-PI * (xi - eta) * cot(point.phi)).exp() * n / point.rho * i2;
            assert!(
                (v - sine_kernel(xi, eta)).abs() < 5e-3,
                "({xi},{eta}): {v} vs {}",
                sine_kernel(xi, eta)
            );
        }
    }
}
