//! Diagnostic sweep of the estimator over a range of subset sizes.

use nalgebra::DMatrix;

use super::fit::{prepare, search_best_subset, FitOptions, TargetChoice};
use super::scatter::RegularizedScatter;
use super::{consistency_factor, SubsetIndex};
use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// One row of the h-scan table.
#[derive(Debug, Clone)]
pub struct ScanRow {
    pub h: usize,
    pub rho: f64,
    pub objective: f64,
    /// Frobenius distance between rho I + (1-rho) S* at this h and at the
    /// previous h in the scan; `None` on the first row.
    pub scatter_gap: Option<f64>,
    pub subset: SubsetIndex,
}

fn regularized_s_star(scatter: &RegularizedScatter, rho: f64) -> Result<DMatrix<f64>> {
    let s_w = scatter.s_w();
    let p = s_w.nrows();
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p {
        let di = s_w[(i, i)];
        if di <= 0.0 {
            return Err(Error::SingularScatter);
        }
        for j in 0..p {
            let dj = s_w[(j, j)];
            m[(i, j)] = (1.0 - rho) * s_w[(i, j)] / (di * dj).sqrt();
        }
        m[(i, i)] += rho;
    }
    Ok(m)
}

/// Fits the estimator at every h in `h_values` (ascending), reusing the
/// standardization, whitening and six initial estimates across sizes.
pub fn scan_h(
    x: &DataMatrix,
    h_values: &[usize],
    target: &TargetChoice,
    opts: &FitOptions,
) -> Result<Vec<ScanRow>> {
    if h_values.is_empty() {
        return Err(Error::EmptyRange);
    }
    let n = x.n();
    let min = n.div_ceil(2);
    for &h in h_values {
        if h < min || h > n {
            return Err(Error::BadSubsetSize { h, min, max: n });
        }
    }
    let mut sorted: Vec<usize> = h_values.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let prepared = prepare(x, target)?;
    let mut rows = Vec::with_capacity(sorted.len());
    let mut previous: Option<DMatrix<f64>> = None;
    for h in sorted {
        let c_alpha = consistency_factor(h, n, x.p())?;
        let outcome = search_best_subset(&prepared.w, &prepared.starts, h, c_alpha, opts)?;
        let scatter =
            RegularizedScatter::from_subset(&outcome.subset, &prepared.w, outcome.rho, c_alpha);
        let m = regularized_s_star(&scatter, outcome.rho)?;
        let scatter_gap = previous.as_ref().map(|prev| (&m - prev).norm());
        previous = Some(m);
        rows.push(ScanRow {
            h,
            rho: outcome.rho,
            objective: outcome.objective,
            scatter_gap,
            subset: outcome.subset,
        });
    }
    Ok(rows)
}
