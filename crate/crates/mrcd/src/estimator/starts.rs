//! Six deterministic initial location/scatter estimates in the whitened
//! space, in the style of deterministic MCD starting values.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use super::scatter::h_smallest;
use super::{SubsetIndex, KAPPA_MAX, RHO_BLEND};
use crate::error::Result;
use crate::ogk;
use crate::univariate::{median, qn_scale};

/// Clipping bound applied before the hyperbolic-tangent transform of the
/// first start.
const TANH_CLIP: f64 = 3.0;

/// A rough initial location/scatter pair used to seed the subset search.
#[derive(Debug, Clone)]
pub struct StartEstimate {
    pub location: DVector<f64>,
    pub scatter: DMatrix<f64>,
}

/// Average ranks (1-based, ties averaged) of a column.
fn average_ranks(col: &[f64]) -> Vec<f64> {
    let n = col.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| col[a].total_cmp(&col[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && col[idx[j]] == col[idx[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1 ..= j
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation matrix of the columns of `m` (divisor n).
fn correlation_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = (m.nrows(), m.ncols());
    let mut centered = m.clone();
    let means = m.row_mean();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let mut sd = DVector::zeros(p);
    for j in 0..p {
        sd[j] = (centered.column(j).norm_squared() / n as f64).sqrt();
    }
    for j in 0..p {
        let s = if sd[j] > 0.0 { 1.0 / sd[j] } else { 0.0 };
        centered.column_mut(j).scale_mut(s);
    }
    let mut r = centered.transpose() * &centered / n as f64;
    for j in 0..p {
        r[(j, j)] = 1.0;
    }
    r
}

fn coordinatewise_median(w: &DMatrix<f64>) -> DVector<f64> {
    let p = w.ncols();
    let mut m = DVector::zeros(p);
    for j in 0..p {
        let col: Vec<f64> = w.column(j).iter().copied().collect();
        m[j] = median(&col).expect("non-empty column");
    }
    m
}

/// Refines a raw start scatter and derives its location: the eigenvalues of
/// the raw estimate are replaced by squared Qn scales of the data projected
/// on its eigenvectors, and the location is the coordinatewise median of the
/// sphered data mapped back, mu = S^(1/2) med(W S^(-1/2)). The raw starts are
/// correlation-like and understate the eigenvalue spread; re-estimating it
/// keeps the initial Mahalanobis metric faithful to the actual dispersion.
fn refine_start(w: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<StartEstimate> {
    let p = s.nrows();
    let sym = nalgebra::SymmetricEigen::new((s + s.transpose()) * 0.5);
    let e = sym.eigenvectors;
    let b = w * &e;
    let mut l = DVector::zeros(p);
    for j in 0..p {
        let col: Vec<f64> = b.column(j).iter().copied().collect();
        let q = qn_scale(&col)?.value;
        l[j] = q * q;
    }
    let mut el = e.clone();
    for j in 0..p {
        el.column_mut(j).scale_mut(l[j]);
    }
    let scatter = &el * e.transpose();
    // Pseudo-inverse square root: degenerate directions contribute nothing
    // to the sphered median and are restored as zero by the forward root.
    let mut e_inv_root = e.clone();
    let mut e_root = e.clone();
    for j in 0..p {
        let root = l[j].sqrt();
        e_root.column_mut(j).scale_mut(root);
        e_inv_root
            .column_mut(j)
            .scale_mut(if root > 0.0 { 1.0 / root } else { 0.0 });
    }
    let sphered = w * &e_inv_root * e.transpose();
    let med = coordinatewise_median(&sphered);
    let location = &e_root * e.transpose() * med;
    Ok(StartEstimate { location, scatter })
}

/// Blends a start scatter toward the identity when it is singular or
/// ill-conditioned, mirroring the rho = 0.1 repair of the fitting algorithm.
fn condition_start(s: DMatrix<f64>) -> DMatrix<f64> {
    let p = s.nrows();
    let usable = match Cholesky::new(s.clone()) {
        None => false,
        Some(_) => {
            let eig = s.symmetric_eigenvalues();
            let max = eig.iter().cloned().fold(f64::MIN, f64::max);
            let min = eig.iter().cloned().fold(f64::MAX, f64::min);
            min > 0.0 && max / min <= KAPPA_MAX
        }
    };
    if usable {
        s
    } else {
        let mut blended = s * (1.0 - RHO_BLEND);
        for j in 0..p {
            blended[(j, j)] += RHO_BLEND;
        }
        blended
    }
}

/// The six deterministic start estimates for whitened data `w`:
/// 1. correlation of clipped-tanh transformed columns,
/// 2. Spearman rank correlation,
/// 3. correlation of normal scores,
/// 4. spatial-sign covariance matrix,
/// 5. covariance of the half of rows with smallest Euclidean norm,
/// 6. the OGK scatter.
/// Each raw scatter is refined by re-estimating its eigenvalues with Qn
/// scales along its eigenvectors, the location is the sphered coordinatewise
/// median, and the result is blended toward the identity when singular or
/// ill-conditioned.
pub fn initial_estimates(w: &DMatrix<f64>) -> Result<Vec<StartEstimate>> {
    let (n, p) = (w.nrows(), w.ncols());
    let mut scatters: Vec<DMatrix<f64>> = Vec::with_capacity(6);

    // S1: tanh of clipped entries.
    let tanh_m = DMatrix::from_fn(n, p, |i, j| w[(i, j)].clamp(-TANH_CLIP, TANH_CLIP).tanh());
    scatters.push(correlation_matrix(&tanh_m));

    // S2 and S3 share the column ranks.
    let ranks: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let col: Vec<f64> = w.column(j).iter().copied().collect();
            average_ranks(&col)
        })
        .collect();
    let rank_m = DMatrix::from_fn(n, p, |i, j| ranks[j][i]);
    scatters.push(correlation_matrix(&rank_m));

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let scores = DMatrix::from_fn(n, p, |i, j| {
        normal.inverse_cdf((ranks[j][i] - 1.0 / 3.0) / (n as f64 + 1.0 / 3.0))
    });
    scatters.push(correlation_matrix(&scores));

    // S4: spatial-sign covariance.
    let mut signs = w.clone();
    for mut row in signs.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row.scale_mut(1.0 / norm);
        }
    }
    scatters.push(signs.transpose() * &signs / n as f64);

    // S5: covariance of the half of rows with smallest norm.
    let norms = DVector::from_fn(n, |i, _| w.row(i).norm_squared());
    let half = n.div_ceil(2);
    let closest = h_smallest(&norms, half);
    let mut sub = DMatrix::zeros(half, p);
    for (r, &i) in closest.iter().enumerate() {
        sub.row_mut(r).copy_from(&w.row(i));
    }
    let (_, s5) = crate::preprocess::subset_mean_cov(&sub)?;
    scatters.push(s5);

    // S6: OGK scatter.
    scatters.push(ogk::ogk_fit_matrix(w)?.scatter);

    scatters
        .into_iter()
        .map(|s| {
            let refined = refine_start(w, &s)?;
            Ok(StartEstimate {
                location: refined.location,
                scatter: condition_start(refined.scatter),
            })
        })
        .collect()
}

/// The h observations with smallest Mahalanobis distance with respect to a
/// start estimate.
pub fn subset_from_start(
    w: &DMatrix<f64>,
    start: &StartEstimate,
    h: usize,
) -> Result<SubsetIndex> {
    let n = w.nrows();
    let chol = Cholesky::new(start.scatter.clone())
        .ok_or(crate::error::Error::SingularScatter)?;
    let mut dev = w.clone();
    for mut row in dev.row_iter_mut() {
        row -= start.location.transpose();
    }
    let solved = chol.solve(&dev.transpose());
    let d = DVector::from_fn(n, |i, _| {
        dev.row(i).transpose().dot(&solved.column(i).into_owned())
    });
    SubsetIndex::new(h_smallest(&d, h), n)
}
