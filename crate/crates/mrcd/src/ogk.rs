//! Orthogonalized Gnanadesikan-Kettenring estimator of location and scatter,
//! used as a simulation comparator and as one of the deterministic starts.

use nalgebra::{DMatrix, DVector};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::univariate::{median, qn_scale};

/// Tukey biweight weight-function tuning for the weighted mean.
const BIWEIGHT_LOCATION_C: f64 = 4.5;

/// Tukey biweight rho tuning for a ~50% breakdown M-scale at the normal
/// model: E[rho_c(Z)] = 1/2 for Z standard normal.
const BIWEIGHT_SCALE_C: f64 = 1.547_645;
const BIWEIGHT_SCALE_B: f64 = 0.5;

/// Relative floor for zero robust variances in the orthogonalized basis.
const ZERO_VARIANCE_EPS: f64 = 1e-6;

/// Fitted OGK location and scatter.
#[derive(Debug, Clone)]
pub struct OgkFit {
    pub location: DVector<f64>,
    pub scatter: DMatrix<f64>,
}

fn biweight_rho(u: f64) -> f64 {
    let t = u / BIWEIGHT_SCALE_C;
    if t.abs() >= 1.0 {
        1.0
    } else {
        let s = 1.0 - t * t;
        1.0 - s * s * s
    }
}

/// Weighted mean with biweight weights around the median, scaled by Qn.
pub fn m_location(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptySample);
    }
    let med = median(x)?;
    let s0 = qn_scale(x)?.value;
    if s0 <= 0.0 {
        return Ok(med);
    }
    let mut wsum = 0.0;
    let mut acc = 0.0;
    for &v in x {
        let t = (v - med) / (s0 * BIWEIGHT_LOCATION_C);
        if t.abs() < 1.0 {
            let w = (1.0 - t * t) * (1.0 - t * t);
            wsum += w;
            acc += w * v;
        }
    }
    if wsum > 0.0 {
        Ok(acc / wsum)
    } else {
        Ok(med)
    }
}

/// One-step M-estimate of scale starting from Qn, with the biweight rho.
pub fn m_scale(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let med = median(x)?;
    let s0 = qn_scale(x)?.value;
    if s0 <= 0.0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for &v in x {
        acc += biweight_rho((v - med) / s0);
    }
    Ok(s0 * (acc / (n as f64 * BIWEIGHT_SCALE_B)).sqrt())
}

/// OGK fit on a plain matrix of observations (rows).
pub fn ogk_fit_matrix(x: &DMatrix<f64>) -> Result<OgkFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(Error::TooFewObservations {
            required: 2,
            actual: n,
        });
    }
    // Step 2: columnwise scale normalization.
    let mut d = DVector::zeros(p);
    for j in 0..p {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        d[j] = m_scale(&col)?;
    }
    let d_max = d.iter().cloned().fold(0.0f64, f64::max);
    if d_max <= 0.0 {
        return Err(Error::SingularScatter);
    }
    for j in 0..p {
        // Constant-column repair, mirroring the eigenvalue repair below.
        if d[j] <= 0.0 {
            d[j] = ZERO_VARIANCE_EPS.sqrt() * d_max;
        }
    }
    let mut y = x.clone();
    for j in 0..p {
        y.column_mut(j).scale_mut(1.0 / d[j]);
    }
    // Step 3: pairwise correlation-like matrix.
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| y.column(j).iter().copied().collect())
        .collect();
    let mut u = DMatrix::identity(p, p);
    let mut sum = vec![0.0f64; n];
    let mut diff = vec![0.0f64; n];
    for j in 0..p {
        for k in (j + 1)..p {
            for i in 0..n {
                sum[i] = cols[j][i] + cols[k][i];
                diff[i] = cols[j][i] - cols[k][i];
            }
            let s_sum = m_scale(&sum)?;
            let s_diff = m_scale(&diff)?;
            let v = 0.25 * (s_sum * s_sum - s_diff * s_diff);
            u[(j, k)] = v;
            u[(k, j)] = v;
        }
    }
    // Step 4: orthogonalize and replace eigenvalues by robust variances.
    let eig = u.symmetric_eigen();
    let e = eig.eigenvectors;
    let v = &y * &e;
    let mut lambda = DVector::zeros(p);
    let mut m = DVector::zeros(p);
    for j in 0..p {
        let col: Vec<f64> = v.column(j).iter().copied().collect();
        let s = m_scale(&col)?;
        lambda[j] = s * s;
        m[j] = m_location(&col)?;
    }
    let lmax = lambda.iter().cloned().fold(0.0f64, f64::max);
    for j in 0..p {
        lambda[j] = lambda[j].max(ZERO_VARIANCE_EPS * lmax);
    }
    let mu_y = &e * m;
    let mut sigma_y = DMatrix::zeros(p, p);
    for j in 0..p {
        let ej = e.column(j);
        sigma_y += ej * ej.transpose() * lambda[j];
    }
    // Step 5: back-transform.
    let location = d.component_mul(&mu_y);
    let mut scatter = sigma_y;
    for i in 0..p {
        for j in 0..p {
            scatter[(i, j)] *= d[i] * d[j];
        }
    }
    Ok(OgkFit { location, scatter })
}

/// OGK fit on a named data matrix.
pub fn ogk_fit(x: &DataMatrix) -> Result<OgkFit> {
    ogk_fit_matrix(x.values())
}
