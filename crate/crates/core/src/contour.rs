//! Construction and quadrature discretization of the integration contours:
//! the curve Σ̃ and its ε-truncation, the bulk contours (vertical line C plus
//! the split curve Σ₁..Σ₄), the soft-edge wedge contours, and well-conditioned
//! closed contours for direct finite-n kernel evaluation.

use crate::model::{self, BulkPoint, ModelSpec, Variant};
use crate::phase;
use crate::quad::GaussLegendre;
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ContourError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("geometry error: {0}")]
    Geometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Forward,
    Reverse,
}

/// One smooth piece of a contour, parametrized over u ∈ [0, 1].
#[derive(Debug, Clone)]
pub enum SegmentKind {
    VerticalLine { x: f64, y0: f64, y1: f64 },
    HorizontalSegment { y: f64, x0: f64, x1: f64 },
    CircularArc { center: Complex64, radius: f64, theta0: f64, theta1: f64 },
    ZetaCurve { spec: ModelSpec, scale: f64, phi0: f64, phi1: f64 },
    LineSegment { z0: Complex64, z1: Complex64 },
}

#[derive(Debug, Clone)]
pub struct ContourSegment {
    pub kind: SegmentKind,
    pub orientation: Orientation,
}

impl ContourSegment {
    pub fn forward(kind: SegmentKind) -> Self {
        ContourSegment { kind, orientation: Orientation::Forward }
    }

    /// Map the public parameter to the underlying forward parameter.
    pub fn oriented_param(&self, u: f64) -> f64 {
        match self.orientation {
            Orientation::Forward => u,
            Orientation::Reverse => 1.0 - u,
        }
    }

    fn raw_point(&self, u: f64) -> Complex64 {
        match &self.kind {
            SegmentKind::VerticalLine { x, y0, y1 } => Complex64::new(*x, y0 + (y1 - y0) * u),
            SegmentKind::HorizontalSegment { y, x0, x1 } => {
                Complex64::new(x0 + (x1 - x0) * u, *y)
            }
            SegmentKind::CircularArc { center, radius, theta0, theta1 } => {
                center + Complex64::from_polar(*radius, theta0 + (theta1 - theta0) * u)
            }
            SegmentKind::ZetaCurve { spec, scale, phi0, phi1 } => {
                zeta_point(spec, phi0 + (phi1 - phi0) * u, *scale)
            }
            SegmentKind::LineSegment { z0, z1 } => z0 + (z1 - z0) * u,
        }
    }

    fn raw_derivative(&self, u: f64) -> Complex64 {
        match &self.kind {
            SegmentKind::VerticalLine { y0, y1, .. } => Complex64::new(0.0, y1 - y0),
            SegmentKind::HorizontalSegment { x0, x1, .. } => Complex64::new(x1 - x0, 0.0),
            SegmentKind::CircularArc { radius, theta0, theta1, .. } => {
                Complex64::new(0.0, radius * (theta1 - theta0))
                    * Complex64::from_polar(1.0, theta0 + (theta1 - theta0) * u)
            }
            SegmentKind::ZetaCurve { spec, scale, phi0, phi1 } => {
                (phi1 - phi0) * zeta_derivative(spec, phi0 + (phi1 - phi0) * u, *scale)
            }
            SegmentKind::LineSegment { z0, z1 } => z1 - z0,
        }
    }

    pub fn point(&self, u: f64) -> Complex64 {
        self.raw_point(self.oriented_param(u))
    }

    /// d(point)/du, including the orientation sign.
    pub fn derivative(&self, u: f64) -> Complex64 {
        let d = self.raw_derivative(self.oriented_param(u));
        match self.orientation {
            Orientation::Forward => d,
            Orientation::Reverse => -d,
        }
    }

    pub fn start(&self) -> Complex64 {
        self.point(0.0)
    }

    pub fn end(&self) -> Complex64 {
        self.point(1.0)
    }

    /// Polyline estimate of the arc length.
    pub fn length_estimate(&self) -> f64 {
        let samples = 64;
        let mut len = 0.0;
        let mut prev = self.point(0.0);
        for i in 1..=samples {
            let z = self.point(i as f64 / samples as f64);
            len += (z - prev).norm();
            prev = z;
        }
        len
    }
}

/// An ordered chain of segments; closed contours return to their start.
/// `apexes` marks saddle points near which discretization is refined.
#[derive(Debug, Clone)]
pub struct Contour {
    pub name: String,
    pub segments: Vec<ContourSegment>,
    pub closed: bool,
    pub apexes: Vec<Complex64>,
    pub apex_radius: f64,
}

impl Contour {
    pub fn new(
        name: String,
        segments: Vec<ContourSegment>,
        closed: bool,
    ) -> Result<Self, ContourError> {
        if segments.is_empty() {
            return Err(ContourError::Geometry(format!("contour {name} has no segments")));
        }
        for (kind, seg) in segments.iter().enumerate() {
            if seg.length_estimate() <= 0.0 {
                return Err(ContourError::Geometry(format!(
                    "degenerate segment {kind} in contour {name}"
                )));
            }
        }
        for w in segments.windows(2) {
            let gap = (w[0].end() - w[1].start()).norm();
            let tol = 1e-12 * (1.0 + w[0].end().norm());
            if gap > tol {
                return Err(ContourError::Geometry(format!(
                    "segments of {name} do not chain: gap {gap:.3e} at {}",
                    w[0].end()
                )));
            }
        }
        if closed {
            let gap = (segments.last().unwrap().end() - segments[0].start()).norm();
            let tol = 1e-12 * (1.0 + segments[0].start().norm());
            if gap > tol {
                return Err(ContourError::Geometry(format!(
                    "contour {name} declared closed but does not return to start (gap {gap:.3e})"
                )));
            }
        }
        Ok(Contour { name, segments, closed, apexes: vec![], apex_radius: 0.0 })
    }

    fn with_apexes(mut self, apexes: Vec<Complex64>, radius: f64) -> Self {
        self.apexes = apexes;
        self.apex_radius = radius;
        self
    }

    /// CSV sample of the contour: segment_index, param, re, im.
    pub fn to_csv(&self, samples_per_segment: usize) -> String {
        let mut out = String::from("segment_index,param,re,im\n");
        for (i, seg) in self.segments.iter().enumerate() {
            for k in 0..=samples_per_segment {
                let u = k as f64 / samples_per_segment as f64;
                let z = seg.point(u);
                out.push_str(&format!("{i},{u:.6},{:.17e},{:.17e}\n", z.re, z.im));
            }
        }
        out
    }
}

/// Nodes and complex dz-weights of a discretized contour.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<Complex64>,
    pub weights: Vec<Complex64>,
    /// (segment index, parameter) of each node in the source contour.
    pub seg_param: Vec<(usize, f64)>,
    pub source: Contour,
}

impl QuadratureGrid {
    pub fn integral<F: FnMut(Complex64) -> Complex64>(&self, mut f: F) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }

    /// Winding number about p via the residue integral (real-valued; callers
    /// round to the nearest integer).
    pub fn winding_number(&self, p: Complex64) -> f64 {
        let v: Complex64 = self.integral(|z| 1.0 / (z - p));
        (v / Complex64::new(0.0, 2.0 * PI)).re
    }
}

// --- the curve ζ and its relatives ----------------------------------------

fn angle_factor(spec: &ModelSpec) -> f64 {
    match spec.variant {
        Variant::TruncatedUnitary => 0.5,
        _ => 1.0,
    }
}

fn zeta_radius_at_zero(spec: &ModelSpec) -> f64 {
    let m = spec.m as f64;
    match spec.variant {
        Variant::GinibreProduct => (m + 1.0) / m,
        Variant::WithInverses => 1.0,
        Variant::TruncatedUnitary => ((m + 1.0) / (m - 1.0)).sqrt(),
    }
}

/// Radius of the curve at angle parameter φ (even in φ: the lower branch is
/// the conjugate of the upper one).
pub fn zeta_radius(spec: &ModelSpec, phi: f64) -> f64 {
    let p = phi.abs();
    if p < 1e-9 {
        return zeta_radius_at_zero(spec);
    }
    let m = spec.m as f64;
    match spec.variant {
        Variant::GinibreProduct => ((m + 1.0) * p).sin() / (m * p).sin(),
        Variant::WithInverses => {
            let k = spec.k_inv as f64;
            let a = (m + 1.0) / (k + 1.0) * p + k / (k + 1.0) * PI;
            let b = (m - k) / (k + 1.0) * p + k / (k + 1.0) * PI;
            a.sin() / b.sin()
        }
        Variant::TruncatedUnitary => {
            ((((m + 1.0) / 2.0) * p).sin() / (((m - 1.0) / 2.0) * p).sin()).sqrt()
        }
    }
}

/// Logarithmic radial derivative r'(φ)/r(φ) for φ ≥ 0, with series fallbacks
/// where the cotangents cancel.
fn zeta_log_deriv(spec: &ModelSpec, p: f64) -> f64 {
    let m = spec.m as f64;
    match spec.variant {
        Variant::GinibreProduct => {
            if p < 1e-4 {
                -(2.0 * m + 1.0) * p / 3.0
            } else {
                (m + 1.0) / ((m + 1.0) * p).tan() - m / (m * p).tan()
            }
        }
        Variant::WithInverses => {
            let k = spec.k_inv as f64;
            let a = (m + 1.0) / (k + 1.0);
            let b = (m - k) / (k + 1.0);
            let c = k / (k + 1.0) * PI;
            a / (a * p + c).tan() - b / (b * p + c).tan()
        }
        Variant::TruncatedUnitary => {
            if p < 1e-4 {
                -m * p / 6.0
            } else {
                0.25 * ((m + 1.0) / (((m + 1.0) / 2.0) * p).tan()
                    - (m - 1.0) / (((m - 1.0) / 2.0) * p).tan())
            }
        }
    }
}

/// Point of the (scaled) curve at parameter φ ∈ (−φ_sup, φ_sup).
pub fn zeta_point(spec: &ModelSpec, phi: f64, scale: f64) -> Complex64 {
    scale * Complex64::from_polar(zeta_radius(spec, phi), angle_factor(spec) * phi)
}

/// dζ/dφ of the scaled curve.
pub fn zeta_derivative(spec: &ModelSpec, phi: f64, scale: f64) -> Complex64 {
    if phi < 0.0 {
        return -zeta_derivative(spec, -phi, scale).conj();
    }
    let al = angle_factor(spec);
    let r = zeta_radius(spec, phi);
    let rp = r * zeta_log_deriv(spec, phi);
    scale * Complex64::new(rp, al * r) * Complex64::from_polar(1.0, al * phi)
}

/// Solve zeta_radius(φ) = target on (0, φ_sup) by bisection (the radius
/// decreases from its φ = 0 value to 0).
fn solve_zeta_radius(spec: &ModelSpec, target: f64) -> Result<f64, ContourError> {
    if !(target > 0.0 && target < zeta_radius_at_zero(spec)) {
        return Err(ContourError::Domain(format!(
            "radius {target} outside (0, {})",
            zeta_radius_at_zero(spec)
        )));
    }
    let mut lo = 1e-12;
    let mut hi = spec.phi_sup() - 1e-12;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if zeta_radius(spec, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solve Re ζ(φ) = target on (0, φ_sup) (also strictly decreasing).
fn solve_zeta_re(spec: &ModelSpec, target: f64) -> Result<f64, ContourError> {
    let re = |p: f64| zeta_radius(spec, p) * (angle_factor(spec) * p).cos();
    if !(target < zeta_radius_at_zero(spec)) {
        return Err(ContourError::Geometry(format!(
            "abscissa {target} right of the curve's real point"
        )));
    }
    let mut lo = 1e-12;
    let mut hi = spec.phi_sup() - 1e-12;
    if re(hi) > target {
        return Err(ContourError::Geometry(format!(
            "abscissa {target} not reached by the curve"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if re(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed counterclockwise Σ̃^ε: both branches of ζ truncated at |z| = ε,
/// joined by the arc of |z| = ε through −ε.
fn build_sigma_tilde_for(
    spec: &ModelSpec,
    epsilon: f64,
    scale: f64,
    name: &str,
) -> Result<Contour, ContourError> {
    let r0 = zeta_radius_at_zero(spec);
    if !(epsilon > 0.0 && epsilon < 0.5 * r0.min(1.0)) {
        return Err(ContourError::Domain(format!(
            "epsilon = {epsilon} outside (0, {})",
            0.5 * r0.min(1.0)
        )));
    }
    let phi_r = solve_zeta_radius(spec, epsilon)?;
    let theta = zeta_point(spec, phi_r, 1.0).arg();
    let segs = vec![
        ContourSegment::forward(SegmentKind::ZetaCurve {
            spec: spec.clone(),
            scale,
            phi0: 0.0,
            phi1: phi_r,
        }),
        ContourSegment::forward(SegmentKind::CircularArc {
            center: Complex64::new(0.0, 0.0),
            radius: epsilon * scale,
            theta0: theta,
            theta1: 2.0 * PI - theta,
        }),
        ContourSegment::forward(SegmentKind::ZetaCurve {
            spec: spec.clone(),
            scale,
            phi0: -phi_r,
            phi1: 0.0,
        }),
    ];
    Contour::new(name.into(), segs, true)
}

/// Σ̃^ε for the product of M Ginibre matrices.
pub fn build_sigma_tilde(m: usize, epsilon: f64) -> Result<Contour, ContourError> {
    let spec = ModelSpec::ginibre(1, m, vec![0; m]);
    build_sigma_tilde_for(&spec, epsilon, 1.0, "SigmaTilde")
}

/// Default (ε', ε) for the bulk construction: Σ̃-truncation radius parameter
/// and bar half-gap (the half-gap in the n-scaled plane is n·ε).
pub fn default_bulk_epsilons(n: usize) -> (f64, f64) {
    (0.1, 0.2 / n as f64)
}

#[cfg(test)]
fn frac_dist(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Bulk contours at angle φ: the vertical line C at the half-integer nearest
/// n·Re w± from below, and the curve n·Σ̃^r split at C into two closed
/// components, each sealed by a vertical bar.
pub fn build_bulk_contours(
    spec: &ModelSpec,
    phi: f64,
    epsilon_pair: (f64, f64),
) -> Result<(Contour, Contour, Contour), ContourError> {
    if spec.n < 10 {
        return Err(ContourError::Domain("bulk contours need n ≥ 10".into()));
    }
    let bp = BulkPoint::at_phi(spec, phi)
        .map_err(|e| ContourError::Domain(format!("bulk point: {e}")))?;
    let nf = spec.n as f64;
    let (ep_prime, ep) = epsilon_pair;
    let xw = nf * bp.w_plus.re;
    // C and both bars sit strictly between the consecutive integers around
    // the saddle line, so no pole of the t-integrand lands in the strip that
    // the bars cut out of the curve.
    let xc = xw.floor() + 0.5;
    let g = (nf * ep).clamp(0.05, 0.35);
    let nr = (ep_prime * nf).floor() + 0.5;
    let phi_trunc = solve_zeta_radius(spec, nr / nf)?;
    let phi_right = solve_zeta_re(spec, (xc + g) / nf)?;
    let phi_left = solve_zeta_re(spec, (xc - g) / nf)?;
    if !(phi_right < phi_left && phi_left < phi_trunc) {
        return Err(ContourError::Geometry(
            "bulk cuts do not land on the curve in order".into(),
        ));
    }
    let z_left = zeta_point(spec, phi_left, nf);
    let z_right = zeta_point(spec, phi_right, nf);
    let theta = zeta_point(spec, phi_trunc, 1.0).arg();
    let apexes = vec![nf * bp.w_plus, nf * bp.w_minus];
    let apex_radius = nf.powf(0.6);

    let sigma_right = Contour::new(
        "SigmaRight".into(),
        vec![
            ContourSegment::forward(SegmentKind::ZetaCurve {
                spec: spec.clone(),
                scale: nf,
                phi0: -phi_right,
                phi1: phi_right,
            }),
            ContourSegment::forward(SegmentKind::VerticalLine {
                x: z_right.re,
                y0: z_right.im,
                y1: -z_right.im,
            }),
        ],
        true,
    )?
    .with_apexes(apexes.clone(), apex_radius);

    let sigma_left = Contour::new(
        "SigmaLeft".into(),
        vec![
            ContourSegment::forward(SegmentKind::ZetaCurve {
                spec: spec.clone(),
                scale: nf,
                phi0: phi_left,
                phi1: phi_trunc,
            }),
            ContourSegment::forward(SegmentKind::CircularArc {
                center: Complex64::new(0.0, 0.0),
                radius: nr,
                theta0: theta,
                theta1: 2.0 * PI - theta,
            }),
            ContourSegment::forward(SegmentKind::ZetaCurve {
                spec: spec.clone(),
                scale: nf,
                phi0: -phi_trunc,
                phi1: -phi_left,
            }),
            ContourSegment::forward(SegmentKind::VerticalLine {
                x: z_left.re,
                y0: -z_left.im,
                y1: z_left.im,
            }),
        ],
        true,
    )?
    .with_apexes(apexes.clone(), apex_radius);

    // Truncate C where the integrand has decayed below 1e-18 of its saddle value.
    let f_ref = phase::f_hat(spec, bp.w_plus, bp.x0)
        .map_err(|e| ContourError::Geometry(format!("phase at saddle: {e}")))?
        .re;
    let mut y = (nf * bp.w_plus.im.abs()).max(1.0);
    let step = (nf / 10.0).max(1.0);
    loop {
        y += step;
        let v = phase::f_hat(spec, Complex64::new(xc, y) / nf, bp.x0)
            .map_err(|e| ContourError::Geometry(format!("phase on C: {e}")))?
            .re;
        if nf * (v - f_ref) < -45.0 {
            break;
        }
        if y > 200.0 * nf {
            return Err(ContourError::Geometry("C tail fails to decay".into()));
        }
    }
    let c = Contour::new(
        "C_bulk".into(),
        vec![ContourSegment::forward(SegmentKind::VerticalLine { x: xc, y0: -y, y1: y })],
        false,
    )?
    .with_apexes(apexes, apex_radius);

    Ok((c, sigma_left, sigma_right))
}

/// Bulk contours at angle φ with the curve left uncut: the same vertical line
/// C as [`build_bulk_contours`] and the full closed curve n·Σ̃^r (zeta curve
/// truncated at radius ≈ ε′n and sealed by the circular arc). C crosses the
/// curve at a conjugate pair of points; the upper one is returned so the
/// caller can account for the residue strip between C and the curve and
/// subtract the crossing singularity exactly.
pub fn build_bulk_contours_closed(
    spec: &ModelSpec,
    phi: f64,
    epsilon_prime: f64,
) -> Result<(Contour, Contour, Complex64), ContourError> {
    if spec.n < 10 {
        return Err(ContourError::Domain("bulk contours need n ≥ 10".into()));
    }
    let bp = BulkPoint::at_phi(spec, phi)
        .map_err(|e| ContourError::Domain(format!("bulk point: {e}")))?;
    let nf = spec.n as f64;
    let xw = nf * bp.w_plus.re;
    let xc = xw.floor() + 0.5;
    let nr = (epsilon_prime * nf).floor() + 0.5;
    let phi_trunc = solve_zeta_radius(spec, nr / nf)?;
    let phi_cross = solve_zeta_re(spec, xc / nf)?;
    if phi_cross >= phi_trunc {
        return Err(ContourError::Geometry(
            "C falls outside the truncated curve".into(),
        ));
    }
    let crossing = zeta_point(spec, phi_cross, nf);
    let theta = zeta_point(spec, phi_trunc, 1.0).arg();
    let apexes = vec![nf * bp.w_plus, nf * bp.w_minus];
    let apex_radius = nf.powf(0.6);

    let sigma = Contour::new(
        "SigmaFull".into(),
        vec![
            ContourSegment::forward(SegmentKind::ZetaCurve {
                spec: spec.clone(),
                scale: nf,
                phi0: -phi_trunc,
                phi1: phi_trunc,
            }),
            ContourSegment::forward(SegmentKind::CircularArc {
                center: Complex64::new(0.0, 0.0),
                radius: nr,
                theta0: theta,
                theta1: 2.0 * PI - theta,
            }),
        ],
        true,
    )?
    .with_apexes(apexes.clone(), apex_radius);

    // Truncate C where the integrand has decayed below 1e-18 of its saddle value.
    let f_ref = phase::f_hat(spec, bp.w_plus, bp.x0)
        .map_err(|e| ContourError::Geometry(format!("phase at saddle: {e}")))?
        .re;
    let mut y = (nf * bp.w_plus.im.abs()).max(1.0);
    let step = (nf / 10.0).max(1.0);
    loop {
        y += step;
        let v = phase::f_hat(spec, Complex64::new(xc, y) / nf, bp.x0)
            .map_err(|e| ContourError::Geometry(format!("phase on C: {e}")))?
            .re;
        if nf * (v - f_ref) < -45.0 {
            break;
        }
        if y > 200.0 * nf {
            return Err(ContourError::Geometry("C tail fails to decay".into()));
        }
    }
    let c = Contour::new(
        "C_bulk".into(),
        vec![ContourSegment::forward(SegmentKind::VerticalLine { x: xc, y0: -y, y1: y })],
        false,
    )?
    .with_apexes(apexes, apex_radius);

    Ok((c, sigma, crossing))
}

/// Soft-edge contours: C is a wedge of half-angle π/3 around n·z0 continued
/// by vertical tails; Σ is the mirrored wedge (half-angle 2π/3) joined to the
/// truncated curve n·Σ̃^r by vertical connectors.
pub fn build_edge_contours(spec: &ModelSpec) -> Result<(Contour, Contour), ContourError> {
    if spec.n < 10 {
        return Err(ContourError::Domain("edge contours need n ≥ 10".into()));
    }
    let e = model::edge_constants(spec)
        .map_err(|e| ContourError::Domain(format!("edge constants: {e}")))?;
    let nf = spec.n as f64;
    let z0n = nf * e.z0;
    let a_loc = e.c1 * nf.powf(2.0 / 3.0);
    let a_glob = e.c1 * nf.powf(0.7);
    let s60 = 3f64.sqrt() / 2.0;

    // Truncate the global tails of C where the profile has decayed.
    let f0 = phase::f_hat(spec, Complex64::new(e.z0, 0.0), e.x_star)
        .map_err(|e| ContourError::Geometry(format!("phase at apex: {e}")))?
        .re;
    let xc = z0n + 0.5 * a_glob;
    let mut t = a_glob * s60;
    let step = (nf / 10.0).max(1.0);
    loop {
        t += step;
        let v = phase::f_hat(spec, Complex64::new(xc, t) / nf, e.x_star)
            .map_err(|e| ContourError::Geometry(format!("phase on C: {e}")))?
            .re;
        if nf * (v - f0) < -45.0 {
            break;
        }
        if t > 200.0 * nf {
            return Err(ContourError::Geometry("edge C tail fails to decay".into()));
        }
    }
    let c = Contour::new(
        "C_edge".into(),
        vec![
            ContourSegment::forward(SegmentKind::VerticalLine { x: xc, y0: -t, y1: -a_glob * s60 }),
            ContourSegment::forward(SegmentKind::LineSegment {
                z0: Complex64::new(z0n + 0.5 * a_glob, -a_glob * s60),
                z1: Complex64::new(z0n + 0.5 * a_loc, -a_loc * s60),
            }),
            ContourSegment::forward(SegmentKind::VerticalLine {
                x: z0n + 0.5 * a_loc,
                y0: -a_loc * s60,
                y1: a_loc * s60,
            }),
            ContourSegment::forward(SegmentKind::LineSegment {
                z0: Complex64::new(z0n + 0.5 * a_loc, a_loc * s60),
                z1: Complex64::new(z0n + 0.5 * a_glob, a_glob * s60),
            }),
            ContourSegment::forward(SegmentKind::VerticalLine { x: xc, y0: a_glob * s60, y1: t }),
        ],
        false,
    )?
    .with_apexes(vec![Complex64::new(z0n, 0.0)], 3.0 * a_loc);

    let nr = (0.1 * nf).floor() + 0.5;
    let phi_trunc = solve_zeta_radius(spec, nr / nf)?;
    let xcut = z0n - 0.5 * a_glob;
    let phi_cut = solve_zeta_re(spec, xcut / nf)?;
    if phi_cut >= phi_trunc {
        return Err(ContourError::Geometry("edge cut beyond the curve truncation".into()));
    }
    let z_cut = zeta_point(spec, phi_cut, nf);
    if z_cut.im <= a_glob * s60 {
        return Err(ContourError::Geometry("edge connector would point downward".into()));
    }
    let theta = zeta_point(spec, phi_trunc, 1.0).arg();
    let sigma = Contour::new(
        "Sigma_edge".into(),
        vec![
            ContourSegment::forward(SegmentKind::VerticalLine {
                x: z0n - 0.5 * a_loc,
                y0: -a_loc * s60,
                y1: a_loc * s60,
            }),
            ContourSegment::forward(SegmentKind::LineSegment {
                z0: Complex64::new(z0n - 0.5 * a_loc, a_loc * s60),
                z1: Complex64::new(z0n - 0.5 * a_glob, a_glob * s60),
            }),
            ContourSegment::forward(SegmentKind::VerticalLine {
                x: xcut,
                y0: a_glob * s60,
                y1: z_cut.im,
            }),
            ContourSegment::forward(SegmentKind::ZetaCurve {
                spec: spec.clone(),
                scale: nf,
                phi0: phi_cut,
                phi1: phi_trunc,
            }),
            ContourSegment::forward(SegmentKind::CircularArc {
                center: Complex64::new(0.0, 0.0),
                radius: nr,
                theta0: theta,
                theta1: 2.0 * PI - theta,
            }),
            ContourSegment::forward(SegmentKind::ZetaCurve {
                spec: spec.clone(),
                scale: nf,
                phi0: -phi_trunc,
                phi1: -phi_cut,
            }),
            ContourSegment::forward(SegmentKind::VerticalLine {
                x: xcut,
                y0: -z_cut.im,
                y1: -a_glob * s60,
            }),
            ContourSegment::forward(SegmentKind::LineSegment {
                z0: Complex64::new(z0n - 0.5 * a_glob, -a_glob * s60),
                z1: Complex64::new(z0n - 0.5 * a_loc, -a_loc * s60),
            }),
        ],
        true,
    )?
    .with_apexes(vec![Complex64::new(z0n, 0.0)], 3.0 * a_loc);

    Ok((c, sigma))
}

/// Robust contours for direct finite-n evaluation: Σ is an inscribed polygon
/// of the ellipse centered at (n−1)/2 (clearing both −1/2 and the enclosed
/// poles), C the vertical line Re s = −1/2 truncated where the integrand has
/// decayed below 1e-18 of its peak.
pub fn build_direct_contours(spec: &ModelSpec) -> Result<(Contour, Contour), ContourError> {
    if spec.n > 512 {
        return Err(ContourError::Domain("direct contours are for n ≤ 512".into()));
    }
    let nf = spec.n as f64;
    let center = (nf - 1.0) / 2.0;
    let ax = nf / 2.0 - 0.125;
    let ay = 2f64.max(nf / 8.0);
    let sides = 64.max(4 * spec.n);
    let vertex = |j: usize| {
        let th = 2.0 * PI * j as f64 / sides as f64;
        Complex64::new(center + ax * th.cos(), ay * th.sin())
    };
    let segs: Vec<ContourSegment> = (0..sides)
        .map(|j| {
            ContourSegment::forward(SegmentKind::LineSegment {
                z0: vertex(j),
                z1: vertex((j + 1) % sides),
            })
        })
        .collect();
    let sigma = Contour::new("Sigma_direct".into(), segs, true)?;

    let ctx = phase::PhaseContext::new(spec.clone(), 1.0);
    let h = |t: f64| {
        phase::big_f(&ctx, Complex64::new(-0.5, t))
            .map(|v| v.re)
            .map_err(|e| ContourError::Geometry(format!("integrand on C: {e}")))
    };
    let peak = h(0.0)?;
    let mut t = 0.0;
    loop {
        t += 1.0;
        if h(t)? - peak < (1e-18f64).ln() {
            break;
        }
        if t > 200.0 + 50.0 * nf {
            return Err(ContourError::Geometry("direct C tail fails to decay".into()));
        }
    }
    let c = Contour::new(
        "C_direct".into(),
        vec![ContourSegment::forward(SegmentKind::VerticalLine { x: -0.5, y0: -t, y1: t })],
        false,
    )?;
    Ok((c, sigma))
}

/// Gauss–Legendre discretization: `panels_per_unit_length` panels per unit of
/// arc length per segment, density doubled within `apex_radius` of any saddle
/// apex carried by the contour.
pub fn discretize(c: &Contour, panels_per_unit_length: f64, order: usize) -> QuadratureGrid {
    assert!(
        matches!(order, 8 | 16 | 32),
        "supported Gauss-Legendre orders are 8, 16, 32"
    );
    let gl = GaussLegendre::new(order);
    let mut nodes = vec![];
    let mut weights = vec![];
    let mut seg_param = vec![];
    for (si, seg) in c.segments.iter().enumerate() {
        let len = seg.length_estimate();
        let panels = ((len * panels_per_unit_length).ceil() as usize).max(1);
        let mut bounds: Vec<f64> = (0..=panels).map(|p| p as f64 / panels as f64).collect();
        if !c.apexes.is_empty() && c.apex_radius > 0.0 {
            let mut refined = vec![bounds[0]];
            for w in bounds.windows(2) {
                let mid = seg.point(0.5 * (w[0] + w[1]));
                if c.apexes.iter().any(|a| (mid - a).norm() < c.apex_radius) {
                    refined.push(0.5 * (w[0] + w[1]));
                }
                refined.push(w[1]);
            }
            bounds = refined;
        }
        for w in bounds.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let half = 0.5 * (w[1] - w[0]);
            for (&x, &wt) in gl.nodes.iter().zip(&gl.weights) {
                let u = mid + half * x;
                nodes.push(seg.point(u));
                weights.push(wt * half * seg.derivative(u));
                seg_param.push((si, u));
            }
        }
    }
    QuadratureGrid { nodes, weights, seg_param, source: c.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{verify_lemma, LemmaCheck, PhaseContext};

    fn conj_symmetric(grid: &QuadratureGrid) -> bool {
        grid.nodes.iter().all(|z| {
            grid.nodes
                .iter()
                .any(|w| (w - z.conj()).norm() < 1e-9 * (1.0 + z.norm()))
        })
    }

    #[test]
    fn sigma_tilde_winding_and_symmetry() {
        let c = build_sigma_tilde(3, 0.1).unwrap();
        let grid = discretize(&c, 40.0, 16);
        assert!((grid.winding_number(Complex64::new(0.5, 0.0)) - 1.0).abs() < 1e-8);
        assert!(grid.winding_number(Complex64::new(2.0, 0.0)).abs() < 1e-8);
        // Rightmost point is 1 + 1/M.
        let max_re = grid.nodes.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        assert!(max_re <= 4.0 / 3.0 + 1e-12);
        assert!(conj_symmetric(&grid));
        let v: Complex64 = grid.integral(|_| Complex64::new(1.0, 0.0));
        assert!(v.norm() < 1e-12, "closed ∮dz = {v}");
    }

    #[test]
    fn residue_integral_and_refinement() {
        let c = build_sigma_tilde(2, 0.07).unwrap();
        let coarse = discretize(&c, 20.0, 16);
        let fine = discretize(&c, 40.0, 16);
        let tau = Complex64::new(0.0, 2.0 * PI);
        let rc: Complex64 = coarse.integral(|z| 1.0 / (z - 0.5));
        let rf: Complex64 = fine.integral(|z| 1.0 / (z - 0.5));
        assert!((rc - tau).norm() < 1e-10, "coarse residue {rc}");
        assert!((rc - rf).norm() < 1e-10, "refinement moved the residue by {}", (rc - rf).norm());
    }

    #[test]
    fn straight_segment_weights_sum_to_chord() {
        let c = Contour::new(
            "chord".into(),
            vec![ContourSegment::forward(SegmentKind::LineSegment {
                z0: Complex64::new(-1.0, 2.0),
                z1: Complex64::new(3.0, -1.0),
            })],
            false,
        )
        .unwrap();
        let grid = discretize(&c, 2.0, 8);
        let s: Complex64 = grid.weights.iter().sum();
        assert!((s - Complex64::new(4.0, -3.0)).norm() < 1e-12);
    }

    #[test]
    fn zeta_derivative_matches_finite_differences() {
        let specs = [
            ModelSpec::ginibre(10, 2, vec![0, 0]),
            ModelSpec::with_inverses(10, 3, 2, vec![0; 3], vec![0, 0]),
            ModelSpec::truncated_unitary(10, 3, vec![0; 3], 2),
        ];
        for spec in specs {
            for frac in [-0.8, -0.3, 0.2, 0.6, 0.9] {
                let phi = spec.phi_sup() * frac * 0.99;
                let h = 1e-6;
                let fd = (zeta_point(&spec, phi + h, 2.0) - zeta_point(&spec, phi - h, 2.0))
                    / (2.0 * h);
                let an = zeta_derivative(&spec, phi, 2.0);
                assert!(
                    (fd - an).norm() < 1e-7 * (1.0 + an.norm()),
                    "dζ/dφ mismatch at φ = {phi} for {spec:?}: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn bulk_contours_enclose_the_pole_string() {
        let spec = ModelSpec::ginibre(20, 2, vec![0, 0]);
        let (c, sl, sr) = build_bulk_contours(&spec, PI / 6.0, default_bulk_epsilons(20)).unwrap();
        let gl = discretize(&sl, 2.0, 16);
        let gr = discretize(&sr, 2.0, 16);
        for k in 0..20 {
            let p = Complex64::new(k as f64, 0.0);
            let w = gl.winding_number(p) + gr.winding_number(p);
            assert!((w - 1.0).abs() < 1e-7, "winding {w} about {k}");
        }
        // Negative integers inside the half-integer arc are harmless (the
        // reciprocal gamma factors vanish there), but everything left of the
        // arc must stay outside.
        assert!(gl.winding_number(Complex64::new(-4.0, 0.0)).abs() < 1e-7);
        assert!(conj_symmetric(&gl) && conj_symmetric(&gr));
        // The C line stays clear of the integers; bars keep the ε-gap from C.
        let SegmentKind::VerticalLine { x: xc, .. } = c.segments[0].kind else {
            panic!("C is a vertical line")
        };
        assert!(frac_dist(xc) >= 0.1);
        let SegmentKind::VerticalLine { x: xr, .. } = sr.segments[1].kind else {
            panic!("bar is vertical")
        };
        let gap = (xr - xc).abs();
        assert!(gap >= 20.0 * default_bulk_epsilons(20).1 - 1e-9, "gap {gap}");
    }

    #[test]
    fn bulk_contours_shift_off_adversarial_integers() {
        // M = 1, φ = π/6, n = 20: Re n·w+ = 20·2cos²φ = 30 exactly.
        let spec = ModelSpec::ginibre(20, 1, vec![0]);
        let (c, sl, sr) = build_bulk_contours(&spec, PI / 6.0, default_bulk_epsilons(20)).unwrap();
        let SegmentKind::VerticalLine { x: xc, .. } = c.segments[0].kind else {
            panic!("C is a vertical line")
        };
        assert!((xc - 30.5).abs() < 1e-9, "expected the ½-shift, got {xc}");
        assert!(frac_dist(xc) >= 0.1);
        let gl = discretize(&sl, 2.0, 16);
        let gr = discretize(&sr, 2.0, 16);
        for k in 0..20 {
            let p = Complex64::new(k as f64, 0.0);
            let w = gl.winding_number(p) + gr.winding_number(p);
            assert!((w - 1.0).abs() < 1e-7, "winding {w} about {k}");
        }
    }

    #[test]
    fn edge_contours_geometry() {
        let spec = ModelSpec::ginibre(50, 2, vec![0, 0]);
        let (c, sigma) = build_edge_contours(&spec).unwrap();
        assert_eq!(c.apexes, vec![Complex64::new(75.0, 0.0)]); // n·z0, z0 = 3/2
        let gc = discretize(&c, 1.0, 8);
        let gs = discretize(&sigma, 1.0, 8);
        assert!(conj_symmetric(&gc) && conj_symmetric(&gs));
        // Σ closed around the pole string, C disjoint from Σ.
        for k in [0usize, 13, 37, 49] {
            let w = gs.winding_number(Complex64::new(k as f64, 0.0));
            assert!((w - 1.0).abs() < 1e-7, "winding {w} about {k}");
        }
        assert!(gs.winding_number(Complex64::new(80.0, 0.0)).abs() < 1e-7);
        let mut min_sep = f64::INFINITY;
        for zc in &gc.nodes {
            for zs in &gs.nodes {
                min_sep = min_sep.min((zc - zs).norm());
            }
        }
        let e = model::edge_constants(&spec).unwrap();
        assert!(min_sep > 0.9 * e.c1 * 50f64.powf(2.0 / 3.0), "separation {min_sep}");
    }

    #[test]
    fn direct_contours_clearance_and_decay() {
        let spec = ModelSpec::ginibre(8, 2, vec![0, 0]);
        let (c, sigma) = build_direct_contours(&spec).unwrap();
        let gs = discretize(&sigma, 4.0, 16);
        for k in 0..8 {
            let w = gs.winding_number(Complex64::new(k as f64, 0.0));
            assert!((w - 1.0).abs() < 1e-8, "winding {w} about {k}");
        }
        assert!(gs.winding_number(Complex64::new(-1.0, 0.0)).abs() < 1e-8);
        let min_re = gs.nodes.iter().map(|z| z.re).fold(f64::MAX, f64::min);
        assert!(min_re > -0.5 + 1e-3);
        let vz: Complex64 = gs.integral(|z| z);
        assert!(vz.norm() < 1e-10, "∮ z dz = {vz}");
        // Integrand decay at the C endpoints relative to the peak.
        let ctx = PhaseContext::new(spec, 1.0);
        let SegmentKind::VerticalLine { x, y1, .. } = c.segments[0].kind else {
            panic!("C is a vertical line")
        };
        let peak = crate::phase::big_f(&ctx, Complex64::new(x, 0.0)).unwrap().re;
        let tail = crate::phase::big_f(&ctx, Complex64::new(x, y1)).unwrap().re;
        assert!(tail - peak < (1e-15f64).ln(), "tail/peak log-ratio {}", tail - peak);
    }

    #[test]
    fn bulk_inequalities_hold_on_recommended_contours() {
        let spec = ModelSpec::ginibre(60, 2, vec![0, 0]);
        let phi = PI / 6.0;
        let x0 = model::param_x(&spec, phi).unwrap();
        let ctx = PhaseContext::new(spec.clone(), x0);
        let (c, sl, sr) = build_bulk_contours(&spec, phi, default_bulk_epsilons(60)).unwrap();
        for contour in [&c, &sl, &sr] {
            let grid = discretize(contour, 0.15, 8);
            let rep = verify_lemma(&ctx, LemmaCheck::Bulk21, &grid);
            assert!(rep.points_checked > 50, "{}: {} points", contour.name, rep.points_checked);
            assert!(
                rep.pass(),
                "{}: {} violations, first {:?}",
                contour.name,
                rep.violations.len(),
                rep.violations.first()
            );
            assert!(rep.delta > 0.0);
        }
    }

    #[test]
    fn edge_inequalities_hold_on_recommended_contours() {
        let spec = ModelSpec::ginibre(60, 2, vec![0, 0]);
        let e = model::edge_constants(&spec).unwrap();
        let ctx = PhaseContext::new(spec.clone(), e.x_star);
        let (c, sigma) = build_edge_contours(&spec).unwrap();
        for contour in [&c, &sigma] {
            let grid = discretize(contour, 0.15, 8);
            let rep = verify_lemma(&ctx, LemmaCheck::Edge22, &grid);
            assert!(rep.points_checked > 50, "{}: {} points", contour.name, rep.points_checked);
            assert!(
                rep.pass(),
                "{}: {} violations, first {:?}",
                contour.name,
                rep.violations.len(),
                rep.violations.first()
            );
        }
    }

    #[test]
    fn csv_export_shape() {
        let c = build_sigma_tilde(2, 0.1).unwrap();
        let csv = c.to_csv(8);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "segment_index,param,re,im");
        assert_eq!(csv.lines().count(), 1 + 3 * 9);
    }
}
