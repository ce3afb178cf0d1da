//! The MRCD estimator: regularized subset scatter, rho calibration,
//! concentration steps, deterministic starts, the fitting algorithm,
//! precision matrix, robust distances and h-scan diagnostics.

mod fit;
mod scan;
mod scatter;
mod starts;

pub use fit::{fit, robust_distances, FitOptions, MrcdFit, OutlierCutoff, TargetChoice};
pub use scan::{scan_h, ScanRow};
pub use scatter::{c_step, RegularizedScatter};
pub use starts::{initial_estimates, subset_from_start, StartEstimate};

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Fallback regularization weight, also used to blend singular start
/// estimates (algorithm step value rho = 0.1).
pub const RHO_BLEND: f64 = 0.1;

/// Default maximum condition number for calibration.
pub const KAPPA_MAX: f64 = 1000.0;

/// An h-subset of observation indices (0-based internally), kept sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetIndex {
    indices: Vec<usize>,
}

impl SubsetIndex {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        let h = indices.len();
        let min = n.div_ceil(2);
        if h < min || h > n {
            return Err(Error::BadSubsetSize { h, min, max: n });
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: last + 1,
                });
            }
        }
        Ok(Self { indices })
    }

    pub fn h(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// 1-based indices, matching row numbering in reports.
    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|&i| i + 1).collect()
    }
}

/// Consistency factor c_alpha making the trimmed covariance consistent at
/// the normal model: (h/n) / F_{chi2(p+2)}(q) with q the chi2(p) quantile
/// at level h/n. Equal to 1 when h = n.
pub fn consistency_factor(h: usize, n: usize, p: usize) -> Result<f64> {
    let min = n.div_ceil(2);
    if h < min || h > n {
        return Err(Error::BadSubsetSize { h, min, max: n });
    }
    if h == n {
        return Ok(1.0);
    }
    let level = h as f64 / n as f64;
    let chi_p = ChiSquared::new(p as f64).expect("p >= 1");
    let chi_p2 = ChiSquared::new((p + 2) as f64).expect("p >= 1");
    let q = chi_p.inverse_cdf(level);
    Ok(level / chi_p2.cdf(q))
}

/// Condition number of rho I + (1 - rho) diag(eigvals).
fn blended_condition(rho: f64, lambda_min: f64, lambda_max: f64) -> f64 {
    (rho + (1.0 - rho) * lambda_max) / (rho + (1.0 - rho) * lambda_min)
}

/// Smallest rho in [0, 1) for which rho I + (1 - rho) S is well-conditioned,
/// given the eigenvalues of S. Solved in closed form (the condition number
/// is monotone in rho), with a bisection fallback near the clamping edges.
pub fn calibrate_rho(eigvals: &[f64], kappa_max: f64) -> f64 {
    let mut lambda_min = f64::MAX;
    let mut lambda_max = 0.0f64;
    for &l in eigvals {
        let l = l.max(0.0); // clip tiny negatives from rounding
        lambda_min = lambda_min.min(l);
        lambda_max = lambda_max.max(l);
    }
    if lambda_max <= 0.0 {
        // Zero scatter: any positive rho works; use the blend constant.
        return RHO_BLEND;
    }
    if lambda_min > 0.0 && lambda_max / lambda_min <= kappa_max {
        return 0.0;
    }
    let rho = (lambda_max - kappa_max * lambda_min)
        / (kappa_max - kappa_max * lambda_min - 1.0 + lambda_max);
    let rho = rho.clamp(0.0, 1.0 - f64::EPSILON);
    if blended_condition(rho, lambda_min, lambda_max) <= kappa_max * (1.0 + 1e-9) {
        return rho;
    }
    // Fallback: the condition number decreases in rho on [0, 1).
    let (mut lo, mut hi) = (0.0f64, 1.0 - f64::EPSILON);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if blended_condition(mid, lambda_min, lambda_max) <= kappa_max {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
