//! Monte Carlo sampling of the matrix products: squared singular values,
//! empirical density against the analytic limit, and edge-location
//! statistics.
//!
//! Every trial draws from its own counter-based ChaCha stream derived from
//! (seed, trial index), so parallel and serial runs produce identical
//! batches.

use crate::model::{self, ModelError, ModelSpec, Variant};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum McError {
    #[error("inverse factor nearly singular (condition {0:.3e}); resample")]
    SingularFactor(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("domain error: {0}")]
    Domain(String),
}

/// The per-trial RNG stream: one ChaCha8 cipher, one stream per trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// rows×cols matrix of standard complex Gaussians: Re and Im parts are
/// independent N(0, ½), so E|entry|² = 1.
pub fn sample_ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<Complex64> {
    assert!(rows >= 1 && cols >= 1);
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(normal.sample(rng), normal.sample(rng))
    })
}

/// l×l Haar unitary: QR of a Ginibre matrix with the R-diagonal phase fed
/// back into the columns of Q (plain QR alone is not Haar distributed).
pub fn sample_haar_unitary<R: Rng + ?Sized>(l: usize, rng: &mut R) -> DMatrix<Complex64> {
    let qr = sample_ginibre(l, l, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..l {
        let d = r[(j, j)];
        let phase = if d.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { d / d.norm() };
        for i in 0..l {
            q[(i, j)] *= phase;
        }
    }
    q
}

fn squared_singular_values(y: &DMatrix<Complex64>) -> Vec<f64> {
    let mut vals: Vec<f64> = y.clone().svd(false, false).singular_values.iter().map(|s| s * s).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.truncate(y.ncols().min(y.nrows()));
    vals
}

/// The n squared singular values of one draw of the product, ascending.
///
/// Sizes: X_j is (n+ν_j)×(n+ν_{j-1}) with ν_0 = 0; inverse factors X̃_k are
/// (n+ν̃_k)×(n+ν̃_{k-1}) with ν̃_0 = ν̃_K = 0, so their product is square.
/// For the truncated-unitary variant the first factor is the upper-left
/// (n+ν_1)×n block of an l×l Haar unitary, l = κ+2n−1.
pub fn sample_squared_singular_values<R: Rng + ?Sized>(
    spec: &ModelSpec,
    rng: &mut R,
) -> Result<Vec<f64>, McError> {
    let n = spec.n;
    let first: DMatrix<Complex64> = match spec.variant {
        Variant::TruncatedUnitary => {
            let l = (spec.kappa + 2 * n as i64 - 1) as usize;
            let nu1 = spec.nu[0] as usize;
            assert!(l >= 2 * n + nu1, "truncation needs l >= 2n + ν_1");
            let u = sample_haar_unitary(l, rng);
            u.view((0, 0), (n + nu1, n)).into_owned()
        }
        _ => {
            let nu1 = spec.nu[0] as usize;
            sample_ginibre(n + nu1, n, rng)
        }
    };
    let mut y = first;
    for j in 1..spec.m {
        let (nu_hi, nu_lo) = (spec.nu[j] as usize, spec.nu[j - 1] as usize);
        y = sample_ginibre(n + nu_hi, n + nu_lo, rng) * y;
    }
    if spec.variant == Variant::WithInverses {
        let mut b = {
            let nu1 = spec.nu_tilde[0] as usize;
            sample_ginibre(n + nu1, n, rng)
        };
        for k in 1..spec.k_inv {
            let (nu_hi, nu_lo) = (spec.nu_tilde[k] as usize, spec.nu_tilde[k - 1] as usize);
            b = sample_ginibre(n + nu_hi, n + nu_lo, rng) * b;
        }
        let sv = b.clone().svd(false, false).singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        if smin <= 0.0 || smax / smin > 1e14 {
            return Err(McError::SingularFactor(if smin > 0.0 {
                smax / smin
            } else {
                f64::INFINITY
            }));
        }
        let b_inv = b.try_inverse().ok_or(McError::SingularFactor(f64::INFINITY))?;
        y *= b_inv;
    }
    Ok(squared_singular_values(&y))
}

/// A batch of trials with the squared singular values rescaled by n^p,
/// p = M, M−K, or M−1 per variant.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub spec: ModelSpec,
    pub trials: usize,
    pub seed: u64,
    pub rescaled_values: Vec<f64>,
}

impl SampleBatch {
    pub fn sample(spec: &ModelSpec, trials: usize, seed: u64) -> Result<SampleBatch, McError> {
        assert!(trials >= 1);
        let scale = (spec.n as f64).powi(spec.arg_power());
        let per_trial: Result<Vec<Vec<f64>>, McError> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_rng(seed, t);
                // nearly-singular inverse factors are resampled from the
                // same stream, so determinism is preserved
                loop {
                    match sample_squared_singular_values(spec, &mut rng) {
                        Ok(vals) => return Ok(vals.into_iter().map(|v| v / scale).collect()),
                        Err(McError::SingularFactor(_)) => continue,
                        Err(e) => return Err(e),
                    }
                }
            })
            .collect();
        Ok(SampleBatch {
            spec: spec.clone(),
            trials,
            seed,
            rescaled_values: per_trial?.into_iter().flatten().collect(),
        })
    }

    /// CSV export: trial, index, value.
    pub fn to_csv(&self) -> String {
        let n = self.spec.n;
        let mut out = String::from("trial,index,value\n");
        for (i, v) in self.rescaled_values.iter().enumerate() {
            out.push_str(&format!("{},{},{:.16e}\n", i / n, i % n, v));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub normalized_density: Vec<f64>,
    /// Analytic limiting density at the bin centers (0 outside the support).
    pub analytic_density: Vec<f64>,
}

impl Histogram {
    fn from_values(values: &[f64], bins: usize, lo: f64, hi: f64) -> Histogram {
        assert!(bins >= 1 && hi > lo);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in values {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        let total = values.len() as f64;
        let normalized_density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        Histogram { edges, counts, normalized_density, analytic_density: vec![0.0; bins] }
    }

    /// CSV export: bin_left, bin_right, count, density, analytic_density.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count,density,analytic_density\n");
        for i in 0..self.counts.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{},{:.16e},{:.16e}\n",
                self.edges[i],
                self.edges[i + 1],
                self.counts[i],
                self.normalized_density[i],
                self.analytic_density[i]
            ));
        }
        out
    }
}

/// The limiting density of the rescaled squared singular values at x
/// (0 outside the support).
pub fn analytic_density(spec: &ModelSpec, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    match model::inverse_param(spec, x) {
        Ok(phi) => model::density_rho(spec, phi).unwrap_or(0.0),
        Err(_) => 0.0,
    }
}

/// Histogram of a batch against the analytic density; supError is the sup
/// over interior bins (two bins dropped at each end; unbounded-support
/// variants are first restricted to the 99th percentile).
pub fn empirical_vs_density(batch: &SampleBatch, bins: usize) -> Result<(Histogram, f64), McError> {
    assert!(bins >= 8);
    let mut values = batch.rescaled_values.clone();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if batch.spec.variant == Variant::WithInverses {
        let keep = ((values.len() as f64) * 0.99).ceil() as usize;
        values.truncate(keep.max(1));
    }
    let hi = values.last().copied().ok_or_else(|| McError::Domain("empty batch".into()))? * (1.0 + 1e-12);
    let mut hist = Histogram::from_values(&values, bins, 0.0, hi);
    let width = hist.edges[1] - hist.edges[0];
    for i in 0..bins {
        let center = hist.edges[i] + 0.5 * width;
        hist.analytic_density[i] = analytic_density(&batch.spec, center);
    }
    let mut sup = 0.0f64;
    for i in 2..bins.saturating_sub(2) {
        sup = sup.max((hist.normalized_density[i] - hist.analytic_density[i]).abs());
    }
    Ok((hist, sup))
}

/// Mean and standard deviation of the rescaled largest squared singular
/// value over independent trials.
pub fn edge_statistics(spec: &ModelSpec, trials: usize, seed: u64) -> Result<(f64, f64), McError> {
    if spec.variant == Variant::WithInverses {
        return Err(McError::Domain("no soft edge for products with inverse factors".into()));
    }
    assert!(trials >= 2);
    let scale = (spec.n as f64).powi(spec.arg_power());
    let maxima: Result<Vec<f64>, McError> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let vals = sample_squared_singular_values(spec, &mut rng)?;
            Ok(vals.last().copied().unwrap() / scale)
        })
        .collect();
    let maxima = maxima?;
    let mean = maxima.iter().sum::<f64>() / maxima.len() as f64;
    let var = maxima.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (maxima.len() - 1) as f64;
    Ok((mean, var.sqrt()))
}
