//! Special functions: complex log-gamma, the Airy function, Meijer-G weight
//! functions via Mellin–Barnes quadrature, and explicit Mellin moments.

use crate::quad::GaussLegendre;
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecialError {
    #[error("log-gamma pole at nonpositive integer z = {0}")]
    Pole(f64),
    #[error("argument {0} outside supported range [{1}, {2}]")]
    Range(f64, f64, f64),
    #[error("Mellin-Barnes integration failed to converge: {0}")]
    Convergence(String),
    #[error("result exceeds floating-point range; log-scale value is {log_value}")]
    Overflow { log_value: f64 },
}

/// Parameters of the weight function w_k: a product of M Ginibre factors with
/// exponents nu_1..nu_M, and the weight index k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightSpec {
    pub m: usize,
    pub nu: Vec<u32>,
    pub k: u32,
}

impl WeightSpec {
    pub fn new(m: usize, nu: Vec<u32>, k: u32) -> Self {
        assert!(m >= 1, "need at least one factor");
        assert_eq!(nu.len(), m, "need one exponent per factor");
        WeightSpec { m, nu, k }
    }

    /// Gamma shifts of the Mellin-Barnes integrand: nu_1 + k, nu_2, .., nu_M.
    fn shifts(&self) -> Vec<f64> {
        let mut b = vec![f64::from(self.nu[0] + self.k)];
        b.extend(self.nu[1..].iter().map(|&v| f64::from(v)));
        b
    }
}

// --- complex log-gamma -----------------------------------------------------

/// Principal-branch log Γ(z) (Stirling + recurrence + reflection; relative
/// error ~1e-14 for |z| up to 1e6).
pub fn log_gamma(z: Complex64) -> Result<Complex64, SpecialError> {
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.floor() {
        return Err(SpecialError::Pole(z.re));
    }
    Ok(log_gamma_unchecked(z))
}

/// As `log_gamma` but without the pole check; returns garbage at exact poles.
pub fn log_gamma_unchecked(z: Complex64) -> Complex64 {
    if z.im < 0.0 {
        return log_gamma_unchecked(z.conj()).conj();
    }
    if z.re > 7.0 || z.im > 7.0 {
        stirling(z)
    } else if z.re >= 0.125 {
        // Shift into the Stirling region: log Γ(z) = log Γ(z+m) − Σ log(z+j).
        let mut acc = Complex64::new(0.0, 0.0);
        let mut w = z;
        while w.re <= 7.0 {
            acc += w.ln();
            w += 1.0;
        }
        stirling(w) - acc
    } else {
        // Reflection with the winding term that keeps the principal branch
        // (for Im z >= 0): logΓ(z) = logπ − log sin(πz) − logΓ(1−z) + 2πi⌊Re z/2 + ¼⌋.
        let lsin = (PI * z).sin().ln();
        let wind = Complex64::new(0.0, 2.0 * PI * (z.re / 2.0 + 0.25).floor());
        Complex64::new(PI.ln(), 0.0) + wind - lsin - log_gamma_unchecked(Complex64::new(1.0, 0.0) - z)
    }
}

/// Stirling series with Bernoulli coefficients B_{2k}/(2k(2k−1)); valid for
/// |z| ≳ 7 away from the negative real axis.
fn stirling(z: Complex64) -> Complex64 {
    const COEF: [f64; 11] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
        -3617.0 / 122_400.0,
        43867.0 / 244_188.0,
        -174_611.0 / 125_400.0,
        854_513.0 / 63_756.0,
    ];
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    let lz = z.ln();
    let mut s = (z - 0.5) * lz - z + half_log_2pi;
    let z2 = z * z;
    let mut zp = z;
    for c in COEF {
        s += c / zp;
        zp *= z2;
    }
    s
}

/// Real log Γ(x), x > 0.
pub fn ln_gamma_real(x: f64) -> f64 {
    log_gamma_unchecked(Complex64::new(x, 0.0)).re
}

/// Real digamma ψ(x), x away from nonpositive integers.
pub fn digamma(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut w = x;
    if w < 0.0 {
        // ψ(x) = ψ(1−x) − π cot(πx)
        return digamma(1.0 - x) - PI / (PI * x).tan();
    }
    while w < 8.0 {
        acc -= 1.0 / w;
        w += 1.0;
    }
    // Asymptotic: ln w − 1/(2w) − Σ B_{2k}/(2k w^{2k})
    const C: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
    ];
    let inv2 = 1.0 / (w * w);
    let mut p = inv2;
    let mut s = w.ln() - 0.5 / w;
    for c in C {
        s -= c * p;
        p *= inv2;
    }
    acc + s
}

// --- double-double helpers for the Airy Maclaurin series -------------------

/// Unevaluated sum hi + lo with |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }
    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        Dd { hi: s, lo: err }
    }
    fn add(self, o: Dd) -> Self {
        let s = Dd::two_sum(self.hi, o.hi);
        let lo = s.lo + self.lo + o.lo;
        let r = Dd::two_sum(s.hi, lo);
        Dd { hi: r.hi, lo: r.lo }
    }
    fn two_prod(a: f64, b: f64) -> Self {
        let p = a * b;
        let err = a.mul_add(b, -p);
        Dd { hi: p, lo: err }
    }
    fn mul_f64(self, b: f64) -> Self {
        let p = Dd::two_prod(self.hi, b);
        let lo = p.lo + self.lo * b;
        let r = Dd::two_sum(p.hi, lo);
        Dd { hi: r.hi, lo: r.lo }
    }
    fn div_f64(self, b: f64) -> Self {
        let q0 = self.hi / b;
        let p = Dd::two_prod(q0, b);
        let r_hi = self.hi - p.hi;
        let r = (r_hi - p.lo) + self.lo;
        let q1 = r / b;
        let s = Dd::two_sum(q0, q1);
        Dd { hi: s.hi, lo: s.lo }
    }
    fn mul(self, o: Dd) -> Self {
        let p = Dd::two_prod(self.hi, o.hi);
        let lo = p.lo + self.hi * o.lo + self.lo * o.hi;
        let r = Dd::two_sum(p.hi, lo);
        Dd { hi: r.hi, lo: r.lo }
    }
    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

// --- Airy function ---------------------------------------------------------

/// Ai(x) and Ai'(x); absolute error ≲ 1e-13 on [−30, 30].
///
/// Maclaurin series in double-double arithmetic for |x| ≤ 9 (the series loses
/// ~e^{2ζ} ≈ 1e8 digits to cancellation there, which double-double absorbs),
/// standard asymptotic expansions beyond.
pub fn airy_ai(x: f64) -> Result<(f64, f64), SpecialError> {
    if !(-30.0..=30.0).contains(&x) {
        return Err(SpecialError::Range(x, -30.0, 30.0));
    }
    if x.abs() <= 9.0 {
        Ok(airy_series(x))
    } else if x > 0.0 {
        Ok(airy_asym_pos(x))
    } else {
        Ok(airy_asym_neg(-x))
    }
}

fn airy_series(x: f64) -> (f64, f64) {
    // Ai = c1 f − c2 g, Ai' = c1 f' − c2 g' with
    // f = Σ x^{3k}/c_k,        ratio y/((3k−1)(3k))
    // g = x Σ y^k/d_k,         ratio y/((3k)(3k+1))
    // f' = x² Σ t_k, t_1=1/2,  ratio y/((3k)(3k+2))
    // g' = Σ q_k, q_0=1,       ratio y/((3k+1)(3k+3))
    const C1: Dd = Dd { hi: 0.3550280538878172, lo: 2.05233632436212e-17 };
    const C2: Dd = Dd { hi: 0.2588194037928068, lo: -2.522243111610832e-17 };
    let y = x * x * x;
    let mut f = Dd::from(1.0);
    let mut g = Dd::from(1.0);
    let mut fp = Dd::from(0.5);
    let mut gp = Dd::from(1.0);
    let mut tf = Dd::from(1.0);
    let mut tg = Dd::from(1.0);
    let mut tfp = Dd::from(0.5);
    let mut tgp = Dd::from(1.0);
    for k in 1..200 {
        let kf = 3.0 * k as f64;
        tf = tf.mul_f64(y).div_f64((kf - 1.0) * kf);
        tg = tg.mul_f64(y).div_f64(kf * (kf + 1.0));
        tfp = tfp.mul_f64(y).div_f64(kf * (kf + 2.0));
        tgp = tgp.mul_f64(y).div_f64((kf - 2.0) * kf);
        f = f.add(tf);
        g = g.add(tg);
        fp = fp.add(tfp);
        gp = gp.add(tgp);
        if tf.hi.abs() < 1e-40 && tg.hi.abs() < 1e-40 {
            break;
        }
    }
    let ai = C1.mul(f).add(C2.mul(g).mul_f64(-x)).value();
    let aip = C1.mul(fp).mul_f64(x * x).add(C2.mul(gp).mul_f64(-1.0)).value();
    (ai, aip)
}

/// Σ (−1)^k u_k ζ^{−k} style tails; returns the four partial sums
/// (even-u, odd-u, even-v, odd-v) needed by both asymptotic regimes.
fn airy_uv_sums(zeta: f64, alternate_within: bool) -> (f64, f64, f64, f64) {
    // u_0 = 1, u_k = u_{k−1} (6k−5)(6k−3)(6k−1) / (216 k (2k−1)), v_k = u_k (6k+1)/(1−6k)
    let mut ue = 1.0; // Σ ±u_{2k} ζ^{−2k}
    let mut uo = 0.0;
    let mut ve = 1.0;
    let mut vo = 0.0;
    let mut u = 1.0;
    let mut zp = 1.0;
    let mut prev = f64::MAX;
    for k in 1..60 {
        let kf = k as f64;
        u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0)
            / (216.0 * kf * (2.0 * kf - 1.0));
        let v = u * (6.0 * kf + 1.0) / (1.0 - 6.0 * kf);
        zp /= zeta;
        let term = u * zp;
        if term.abs() > prev {
            break; // asymptotic series started diverging
        }
        prev = term.abs();
        // Positive x wants (−1)^k on every term; negative x wants (−1)^j within
        // each of the even (k = 2j) and odd (k = 2j+1) subsequences, i.e. (−1)^⌊k/2⌋.
        let s = if alternate_within {
            if k % 2 == 1 { -1.0 } else { 1.0 }
        } else if (k / 2) % 2 == 1 {
            -1.0
        } else {
            1.0
        };
        if k % 2 == 0 {
            ue += s * term;
            ve += s * v * zp;
        } else {
            uo += s * term;
            vo += s * v * zp;
        }
        if term.abs() < 1e-19 {
            break;
        }
    }
    (ue, uo, ve, vo)
}

fn airy_asym_pos(x: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let (ue, uo, ve, vo) = airy_uv_sums(zeta, true);
    let su = ue + uo;
    let sv = ve + vo;
    let pref = (-zeta).exp() / (2.0 * PI.sqrt());
    let ai = pref / x.powf(0.25) * su;
    let aip = -pref * x.powf(0.25) * sv;
    (ai, aip)
}

fn airy_asym_neg(t: f64) -> (f64, f64) {
    // DLMF 9.7.9 / 9.7.10 at argument −t, t > 0.
    let zeta = 2.0 / 3.0 * t.powf(1.5);
    let (ue, uo, ve, vo) = airy_uv_sums(zeta, false);
    let (c, s) = ((zeta - PI / 4.0).cos(), (zeta - PI / 4.0).sin());
    let ai = (c * ue + s * uo) / (PI.sqrt() * t.powf(0.25));
    let aip = t.powf(0.25) / PI.sqrt() * (s * ve - c * vo);
    (ai, aip)
}

// --- Meijer-G weights via Mellin–Barnes ------------------------------------

/// w_k(x) = (2πi)^{-1} ∫ Γ(s+ν_1+k) Π_{j≥2} Γ(s+ν_j) x^{−s} ds, integrated
/// along a vertical line through the real saddle of the integrand (which keeps
/// the quadrature relatively accurate across the whole range of x).
pub fn weight_w(spec: &WeightSpec, x: f64) -> Result<f64, SpecialError> {
    assert!(x > 0.0, "weight_w requires x > 0");
    let b = spec.shifts();
    let b_min = b.iter().cloned().fold(f64::INFINITY, f64::min);
    let lx = x.ln();

    // Real saddle: Σ ψ(c + b_j) = ln x, solved by bisection on the monotone map;
    // clamp the line just right of the rightmost pole at −b_min.
    let mut lo = -b_min + 1e-4;
    let mut hi = {
        let mut h = lo.max(1.0);
        while b.iter().map(|&bj| digamma(h + bj)).sum::<f64>() < lx {
            h = 2.0 * h + 1.0;
            if h > 1e9 {
                break;
            }
        }
        h
    };
    if b.iter().map(|&bj| digamma(lo + bj)).sum::<f64>() > lx {
        // True saddle left of the pole clearance; keep the clamped line.
        hi = lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if b.iter().map(|&bj| digamma(mid + bj)).sum::<f64>() < lx {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * (1.0 + hi.abs()) {
            break;
        }
    }
    let c = 0.5 * (lo + hi);

    // Log-integrand along s = c + iτ relative to its value at the saddle.
    let peak: f64 = b.iter().map(|&bj| ln_gamma_real(c + bj)).sum::<f64>() - c * lx;
    let log_f = |tau: f64| -> Complex64 {
        let s = Complex64::new(c, tau);
        let mut acc = Complex64::new(-peak, 0.0) - s * lx;
        for &bj in &b {
            acc += log_gamma_unchecked(s + bj);
        }
        acc
    };

    // Truncation: scan outward until the magnitude drops below 1e-18 of peak.
    let width = 1.0
        / b.iter()
            .map(|&bj| {
                let h = 1e-4;
                (digamma(c + bj + h) - digamma(c + bj - h)) / (2.0 * h)
            })
            .sum::<f64>()
            .max(1e-12)
            .sqrt();
    let mut t_max = width;
    while log_f(t_max).re > -42.0 {
        t_max *= 1.35;
        if t_max > 1e4 {
            return Err(SpecialError::Convergence(format!(
                "Mellin-Barnes tail for x = {x} not decaying by |Im s| = {t_max:.1}"
            )));
        }
    }

    // Conjugate symmetry: w = (e^{peak}/π) Re ∫_0^T e^{log_f(τ)} dτ.
    let panel = (0.5 * width).clamp(0.02, 0.25);
    let integrate = |order: usize, panel_len: f64| -> f64 {
        let gl = GaussLegendre::new(order);
        let n_panels = ((t_max / panel_len).ceil() as usize).max(1).min(20_000);
        gl.integrate_panels(0.0, t_max, n_panels, |tau| log_f(tau).exp().re)
    };
    let coarse = integrate(16, panel);
    let fine = integrate(32, panel);
    let scale = fine.abs().max(1e-280);
    if (coarse - fine).abs() > 1e-9 * scale {
        return Err(SpecialError::Convergence(format!(
            "Mellin-Barnes refinement disagreement {:.3e} at x = {x}",
            (coarse - fine).abs() / scale
        )));
    }
    Ok(fine / PI * peak.exp())
}

/// Mellin moment Γ(j+1+ν_1+k) Π_{l≥2} Γ(j+1+ν_l) as an exact product of
/// integer factorials (errors out in log scale when it overflows f64).
pub fn mellin_moment(j: u32, spec: &WeightSpec) -> Result<f64, SpecialError> {
    let log_value: f64 = spec
        .shifts()
        .iter()
        .map(|&bj| ln_gamma_real(f64::from(j) + 1.0 + bj))
        .sum();
    if log_value > 709.0 {
        return Err(SpecialError::Overflow { log_value });
    }
    let mut prod = 1.0_f64;
    for &bj in &spec.shifts() {
        // Γ(m) = (m−1)! with m = j+1+b_j a positive integer.
        let m = (f64::from(j) + 1.0 + bj) as u64;
        for i in 2..m {
            prod *= i as f64;
        }
    }
    Ok(prod)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn log_gamma_trivial_values() {
        assert!(log_gamma(c(1.0, 0.0)).unwrap().norm() < 1e-14);
        assert_relative_eq!(
            log_gamma(c(5.0, 0.0)).unwrap().re,
            24.0_f64.ln(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            log_gamma(c(0.5, 0.0)).unwrap().re,
            0.5723649429247000870717,
            max_relative = 1e-14
        );
    }

    #[test]
    fn log_gamma_frozen_values() {
        // 40-digit arbitrary-precision references.
        let cases = [
            (c(1.0, 1.0), c(-0.6509231993018563388852, -0.3016403204675331978875)),
            (c(3.7, 0.0), c(1.428072326665387921872, 0.0)),
            (c(0.1, -5.0), c(-7.578577021796898168928, -2.411187333038269530624)),
            (c(-3.5, 0.2), c(-1.489660367505290774484, -12.28851441272709492225)),
            (c(-7.3, -2.1), c(-13.61622165832649933973, 20.1645904666658797553)),
            (c(-0.5, 0.5), c(0.45896083308959576723, -3.1069236923143956735)),
            (c(-2.5, 0.5), c(-0.93508562129827747868, -8.8709628852474591986)),
            (c(-4.5, 0.5), c(-3.7081623865245864458, -14.901593916648986106)),
            (c(-6.2, 3.0), c(-13.893954798632238944, -15.245302824194894566)),
            (c(-1.1, 0.01), c(2.268538543950900045, -6.1819747319248019705)),
            (c(-5.5, 6.9), c(-22.133683547641134029, -5.3455398594715261557)),
            (c(-0.3, 0.2), c(1.2259360301379849529, -2.789379730848463532)),
            (c(-3.7, 1.3), c(-4.7854439029143245804, -11.305842446777267236)),
            (c(0.05, 2.0), c(-2.5336481985319510217, -1.3507094948328372432)),
            (c(-9.9, 0.4), c(-14.214308064906136036, -31.684682023091255764)),
            (c(1e6, 1e6), c(12376679.82274329919842, 13947481.91894257170304)),
            (c(-0.5, 0.0), c(1.2655121234846453965, -3.1415926535897932385)),
            (c(-2.5, 0.0), c(-0.056243716497674050673, -9.4247779607693797154)),
        ];
        for (z, want) in cases {
            let got = log_gamma(z).unwrap();
            assert!(
                (got - want).norm() <= 1e-13 * want.norm().max(1.0),
                "log_gamma({z}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn log_gamma_poles() {
        for z in [c(0.0, 0.0), c(-1.0, 0.0), c(-7.0, 0.0)] {
            assert!(log_gamma(z).is_err(), "expected pole at {z}");
        }
    }

    #[test]
    fn log_gamma_recurrence_and_reflection() {
        // Deterministic scatter of points avoiding poles.
        let mut pts = Vec::new();
        for i in 0..40 {
            let re = -20.0 + 41.0 * (i as f64 * 0.618_033_988_749_895).fract();
            let im = -50.0 + 100.0 * (i as f64 * 0.414_213_562_373_095).fract();
            let z = c(re, im);
            if (z.re - z.re.round()).abs() > 0.1 || z.im.abs() > 0.1 {
                pts.push(z);
            }
        }
        for z in pts {
            let lg = log_gamma_unchecked(z);
            let lg1 = log_gamma_unchecked(z + 1.0);
            // Recurrence mod 2πi.
            let d = lg1 - lg - z.ln();
            let wraps = (d.im / (2.0 * PI)).round();
            assert!(
                (d - c(0.0, 2.0 * PI * wraps)).norm() < 1e-11 * (1.0 + lg.norm()),
                "recurrence failed at {z}: {d}"
            );
            // Reflection identity in exponentiated (branch-insensitive) form.
            let lhs = (lg + log_gamma_unchecked(c(1.0, 0.0) - z)).exp() * (PI * z).sin() / PI;
            assert!(
                (lhs - 1.0).norm() < 1e-10,
                "reflection failed at {z}: {lhs}"
            );
        }
    }

    #[test]
    fn airy_frozen_table() {
        // 40-digit arbitrary-precision references on [−30, 30].
        let table: [(f64, f64, f64); 25] = [
            (-30.0, -0.08796818845684216283262, 1.228620602637485134704),
            (-25.0, 0.1635265788304294694864, 0.9623788513876974100384),
            (-20.0, -0.1764061270779846895902, 0.8928628567364712383984),
            (-15.0, 0.2782174908708289295276, 0.2723742043086420208258),
            (-12.0, -0.06655517505437312947419, 1.023110453367970729896),
            (-9.0, -0.02213372154734140367417, -0.9756639809263315947127),
            (-8.0, -0.05270505035638620262208, 0.9355609381983065510255),
            (-7.0, 0.1842808352505056372799, -0.7710081684101265477313),
            (-6.5, -0.2380203019971158035944, -0.6749524925132021729989),
            (-6.0, -0.3291451736298231052314, 0.3459354872813428949298),
            (-5.0, 0.350761009024114319788, 0.3271928185544431367949),
            (-3.0, -0.3788142936776580743472, 0.3145837692165988136508),
            (-1.0, 0.5355608832923521187995, -0.01016056711664520939505),
            (0.0, 0.3550280538878172392601, -0.2588194037928067984052),
            (1.0, 0.1352924163128814155241, -0.1591474412967932127875),
            (2.0, 0.03492413042327437913532, -0.053090384433653631704),
            (5.0, 0.0001083444281360744173499, -0.0002474138908684624760002),
            (6.0, 0.000009947694360252889570239, -0.00002476520039703495475418),
            (6.5, 0.00000279588234320491358546, -0.000007231931466601792559814),
            (7.0, 7.492128863997167080771e-7, -0.000002008150894738791991169),
            (8.0, 4.692207616099231625649e-8, -1.341439297906786574291e-7),
            (9.0, 2.471168430872489843289e-9, -7.48064138965894641276e-9),
            (12.0, 1.393184688875360839049e-13, -4.854736554985308462994e-13),
            (20.0, 1.691672868670540313554e-27, -7.586391625748354960515e-27),
            (30.0, 3.208217591550495571075e-49, -1.759876581432725982082e-48),
        ];
        for (x, ai, aip) in table {
            let (a, ap) = airy_ai(x).unwrap();
            assert!(
                (a - ai).abs() < 1e-13 + 1e-12 * ai.abs(),
                "Ai({x}) = {a}, want {ai}"
            );
            assert!(
                (ap - aip).abs() < 1e-13 + 1e-12 * aip.abs(),
                "Ai'({x}) = {ap}, want {aip}"
            );
        }
    }

    #[test]
    fn airy_first_zero() {
        let (a, _) = airy_ai(-2.338107410459767038489).unwrap();
        assert!(a.abs() < 1e-9, "Ai at first zero: {a}");
    }

    #[test]
    fn airy_range_guard() {
        assert!(airy_ai(31.0).is_err());
        assert!(airy_ai(-30.5).is_err());
        assert!(airy_ai(f64::NAN).is_err());
    }

    #[test]
    fn weight_m1_matches_closed_form() {
        // M = 1: w_k(x) = x^{ν1+k} e^{−x}.
        for (nu1, k) in [(0u32, 0u32), (0, 1), (2, 1), (3, 0)] {
            let spec = WeightSpec::new(1, vec![nu1], k);
            let p = f64::from(nu1 + k);
            let mut x = 1e-4_f64;
            while x <= 50.0 {
                let want = x.powf(p) * (-x).exp();
                let got = weight_w(&spec, x).unwrap();
                assert!(
                    (got - want).abs() <= 1e-9 * want.abs(),
                    "w(ν1={nu1},k={k}; x={x}) = {got}, want {want}"
                );
                x *= 10.0;
            }
        }
    }

    #[test]
    fn weight_m2_matches_bessel() {
        // M = 2, ν = (0,0), k = 0: w_0(x) = 2 K_0(2√x); frozen references.
        let spec = WeightSpec::new(2, vec![0, 0], 0);
        let table = [
            (0.001, 5.761079461720921325858),
            (0.1, 1.473474195622193320054),
            (1.0, 0.2277877454990668713054),
            (10.0, 0.001753314606821574651625),
            (100.0, 1.148247563067304858543e-9),
        ];
        for (x, want) in table {
            let got = weight_w(&spec, x).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-9);
        }
        // M = 2, ν = (0,1): w_0(1) = 2 K_1(2).
        let spec = WeightSpec::new(2, vec![1, 0], 0);
        assert_relative_eq!(
            weight_w(&spec, 1.0).unwrap(),
            0.2797317636330448545692,
            max_relative = 1e-9
        );
    }

    #[test]
    fn weight_m3_frozen_values() {
        let spec = WeightSpec::new(3, vec![0, 0, 0], 0);
        let table = [
            (0.5, 0.3757021237846899487033),
            (1.0, 0.1640416067483760731514),
            (5.0, 0.01182829448745208624127),
        ];
        for (x, want) in table {
            assert_relative_eq!(weight_w(&spec, x).unwrap(), want, max_relative = 1e-9);
        }
    }

    #[test]
    fn mellin_moment_examples() {
        assert_eq!(mellin_moment(1, &WeightSpec::new(1, vec![0], 1)).unwrap(), 2.0);
        assert_eq!(mellin_moment(0, &WeightSpec::new(2, vec![0, 0], 0)).unwrap(), 1.0);
        assert_eq!(mellin_moment(2, &WeightSpec::new(1, vec![0], 0)).unwrap(), 2.0);
        // Overflow path reports in log scale.
        match mellin_moment(200, &WeightSpec::new(3, vec![0, 0, 0], 0)) {
            Err(SpecialError::Overflow { log_value }) => assert!(log_value > 709.0),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn mellin_moment_matches_weight_quadrature() {
        // ∫ x^j w(x) dx by direct quadrature against the gamma product.
        let gl = GaussLegendre::new(16);
        for spec in [
            WeightSpec::new(1, vec![1], 1),
            WeightSpec::new(2, vec![0, 0], 0),
            WeightSpec::new(2, vec![1, 0], 2),
            WeightSpec::new(3, vec![0, 1, 2], 1),
        ] {
            for j in 0..=4u32 {
                let want = mellin_moment(j, &spec).unwrap();
                // Weights decay like exp(−M x^{1/M}); integrate far enough out.
                let upper: f64 = match spec.m {
                    1 => 120.0,
                    2 => 2500.0,
                    _ => 20000.0,
                };
                // Geometric panels absorb the logarithmic singularity at 0.
                let mut got = 0.0;
                let mut a = 1e-12;
                while a < upper {
                    let b = (a * 2.0).min(upper);
                    got += gl.integrate(a, b, |x| {
                        x.powi(j as i32) * weight_w(&spec, x).unwrap()
                    });
                    a = b;
                }
                assert!(
                    (got - want).abs() <= 1e-6 * want,
                    "∫x^{j} w dx for {spec:?}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn digamma_spot_values() {
        // ψ(1) = −γ, ψ(2) = 1 − γ, plus an arbitrary-precision point.
        let gamma_e = 0.5772156649015328606065;
        assert_relative_eq!(digamma(1.0), -gamma_e, max_relative = 1e-13);
        assert_relative_eq!(digamma(2.0), 1.0 - gamma_e, max_relative = 1e-13);
        assert_relative_eq!(digamma(0.107), -9.7595615881502624383, max_relative = 1e-12);
    }
}
