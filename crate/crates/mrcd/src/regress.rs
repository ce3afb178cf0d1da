//! Plug-in robust linear regression built on the joint scatter estimate.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::estimator::{fit, FitOptions, TargetChoice};

/// Result of regressing the last column of the data on the others.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    pub slopes: DVector<f64>,
    pub intercept: f64,
    /// Classical least-squares slopes on the same data, for contrast.
    pub ols_slopes: DVector<f64>,
    pub ols_intercept: f64,
    /// 1-based rows left out of the h-subset by the joint scatter fit.
    pub excluded_rows: Vec<usize>,
    pub rho: f64,
    pub h: usize,
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let n = x.nrows();
    let q = x.ncols();
    let mut design = DMatrix::from_element(n, q + 1, 1.0);
    design.view_mut((0, 1), (n, q)).copy_from(x);
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * y;
    let coef = Cholesky::new(xtx)
        .ok_or(Error::SingularScatter)?
        .solve(&xty);
    let slopes = DVector::from_fn(q, |j, _| coef[j + 1]);
    Ok((slopes, coef[0]))
}

/// Fits y on the predictors by partitioning the joint robust scatter of
/// [X | y]: slopes = K_xx^{-1} k_xy, intercept = m_y - m_x' slopes.
pub fn mrcd_regression(
    predictors: &DataMatrix,
    response: &[f64],
    h: usize,
    target: &TargetChoice,
    opts: &FitOptions,
) -> Result<RegressionFit> {
    let n = predictors.n();
    let q = predictors.p();
    if response.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: response.len(),
        });
    }
    let mut joint = DMatrix::zeros(n, q + 1);
    joint.view_mut((0, 0), (n, q)).copy_from(predictors.values());
    for i in 0..n {
        joint[(i, q)] = response[i];
    }
    let mut names = predictors.names().to_vec();
    names.push("response".to_string());
    let data = DataMatrix::new(names, joint)?;

    let joint_fit = fit(&data, h, target, opts)?;
    let k = &joint_fit.scatter;
    let k_xx = k.view((0, 0), (q, q)).into_owned();
    let k_xy = DVector::from_fn(q, |j, _| k[(j, q)]);
    let slopes = Cholesky::new(k_xx)
        .ok_or(Error::SingularScatter)?
        .solve(&k_xy);
    let m_x = DVector::from_fn(q, |j, _| joint_fit.location[j]);
    let intercept = joint_fit.location[q] - m_x.dot(&slopes);

    let y = DVector::from_column_slice(response);
    let (ols_slopes, ols_intercept) = ols(predictors.values(), &y)?;

    let in_subset: std::collections::HashSet<usize> =
        joint_fit.subset.indices().iter().copied().collect();
    let excluded_rows = (0..n).filter(|i| !in_subset.contains(i)).map(|i| i + 1).collect();

    Ok(RegressionFit {
        slopes,
        intercept,
        ols_slopes,
        ols_intercept,
        excluded_rows,
        rho: joint_fit.rho,
        h,
    })
}
