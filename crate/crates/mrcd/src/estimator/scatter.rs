//! Regularized subset scatter in the target-whitened space, with the
//! determinant objective, Mahalanobis distances and the concentration step.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::SubsetIndex;
use crate::error::{Error, Result};

/// The convex combination rho I + (1 - rho) c_alpha S_W(H) for a subset H,
/// held in factored form so that determinants and distances can be computed
/// through an h x h Gram system when h < p.
#[derive(Debug, Clone)]
pub struct RegularizedScatter {
    pub rho: f64,
    pub c_alpha: f64,
    h: usize,
    mean: DVector<f64>,
    /// h x p matrix of centered subset rows w_i - mean.
    centered: DMatrix<f64>,
}

impl RegularizedScatter {
    pub fn from_subset(
        subset: &SubsetIndex,
        w: &DMatrix<f64>,
        rho: f64,
        c_alpha: f64,
    ) -> Self {
        let h = subset.h();
        let p = w.ncols();
        let mut sub = DMatrix::zeros(h, p);
        for (r, &i) in subset.indices().iter().enumerate() {
            sub.row_mut(r).copy_from(&w.row(i));
        }
        let mean = sub.row_mean().transpose();
        for mut row in sub.row_iter_mut() {
            row -= mean.transpose();
        }
        Self {
            rho,
            c_alpha,
            h,
            mean,
            centered: sub,
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn p(&self) -> usize {
        self.centered.ncols()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Subset scatter S_W(H) with divisor h.
    pub fn s_w(&self) -> DMatrix<f64> {
        self.centered.transpose() * &self.centered / self.h as f64
    }

    /// Dense K_core = rho I + (1 - rho) c_alpha S_W(H).
    pub fn k_core(&self) -> DMatrix<f64> {
        let p = self.p();
        let mut k = self.s_w() * ((1.0 - self.rho) * self.c_alpha);
        for j in 0..p {
            k[(j, j)] += self.rho;
        }
        k
    }

    /// Eigenvalues of c_alpha S_W(H), ascending. When h < p the nonzero
    /// spectrum is read off the h x h Gram matrix; the rest are exact zeros.
    pub fn scatter_eigenvalues(&self) -> Vec<f64> {
        let p = self.p();
        let scale = self.c_alpha / self.h as f64;
        let mut eig: Vec<f64> = if self.h < p {
            let gram = &self.centered * self.centered.transpose();
            gram.symmetric_eigenvalues()
                .iter()
                .map(|&l| l * scale)
                .chain(std::iter::repeat(0.0).take(p - self.h))
                .collect()
        } else {
            let s = self.s_w();
            s.symmetric_eigenvalues()
                .iter()
                .map(|&l| l * self.c_alpha)
                .collect()
        };
        eig.sort_by(|a, b| a.total_cmp(b));
        eig
    }

    /// Eigenvalues of K_core, ascending: rho + (1 - rho) * lambda.
    pub fn core_eigenvalues(&self) -> Vec<f64> {
        self.scatter_eigenvalues()
            .into_iter()
            .map(|l| self.rho + (1.0 - self.rho) * l)
            .collect()
    }

    /// log det(K_core), through a Cholesky factorization in the smaller of
    /// the p x p or h x h formulations.
    pub fn log_det(&self) -> Result<f64> {
        let p = self.p();
        if self.rho > 0.0 && self.h < p {
            // det(rho I_p + g C'C) = rho^(p-h) det(rho I_h + g CC')
            let g = (1.0 - self.rho) * self.c_alpha / self.h as f64;
            let mut gram = &self.centered * self.centered.transpose() * g;
            for j in 0..self.h {
                gram[(j, j)] += self.rho;
            }
            let chol = Cholesky::new(gram).ok_or(Error::SingularScatter)?;
            let mut ld = (p - self.h) as f64 * self.rho.ln();
            for j in 0..self.h {
                ld += 2.0 * chol.l_dirty()[(j, j)].ln();
            }
            Ok(ld)
        } else {
            let chol = Cholesky::new(self.k_core()).ok_or(Error::SingularScatter)?;
            let mut ld = 0.0;
            for j in 0..p {
                ld += 2.0 * chol.l_dirty()[(j, j)].ln();
            }
            Ok(ld)
        }
    }

    /// The MRCD objective det(K_core)^(1/p), evaluated in the log domain.
    pub fn objective(&self) -> Result<f64> {
        Ok((self.log_det()? / self.p() as f64).exp())
    }

    /// Squared Mahalanobis distances of every row of `w` with respect to
    /// (mean, K_core). Uses the Woodbury identity when h < p.
    pub fn sq_distances(&self, w: &DMatrix<f64>) -> Result<DVector<f64>> {
        let n = w.nrows();
        let p = self.p();
        if w.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: w.ncols(),
            });
        }
        let mut dev = w.clone();
        for mut row in dev.row_iter_mut() {
            row -= self.mean.transpose();
        }
        if self.rho > 0.0 && self.h < p {
            // K^{-1} v = v / rho - (g / rho^2) C' (I_h + (g/rho) C C')^{-1} C v
            let g = (1.0 - self.rho) * self.c_alpha / self.h as f64;
            let mut gram = &self.centered * self.centered.transpose() * (g / self.rho);
            for j in 0..self.h {
                gram[(j, j)] += 1.0;
            }
            let chol = Cholesky::new(gram).ok_or(Error::SingularScatter)?;
            let proj = &self.centered * dev.transpose(); // h x n
            let solved = chol.solve(&proj);
            let mut d = DVector::zeros(n);
            for i in 0..n {
                let v2 = dev.row(i).norm_squared();
                let corr = proj.column(i).dot(&solved.column(i));
                d[i] = (v2 - (g / self.rho) * corr) / self.rho;
            }
            Ok(d)
        } else {
            let chol = Cholesky::new(self.k_core()).ok_or(Error::SingularScatter)?;
            let solved = chol.solve(&dev.transpose());
            let mut d = DVector::zeros(n);
            for i in 0..n {
                d[i] = dev.row(i).transpose().dot(&solved.column(i).into_owned());
            }
            Ok(d)
        }
    }
}

/// Indices of the h smallest values, ties broken by the lowest index.
pub(crate) fn h_smallest(values: &DVector<f64>, h: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx.truncate(h);
    idx.sort_unstable();
    idx
}

/// One generalized concentration step: distances with respect to the
/// regularized scatter of H1, then the h observations with the smallest
/// distances form H2. Guarantees det(K_2) <= det(K_1).
pub fn c_step(
    h1: &SubsetIndex,
    w: &DMatrix<f64>,
    rho: f64,
    c_alpha: f64,
) -> Result<SubsetIndex> {
    let scatter = RegularizedScatter::from_subset(h1, w, rho, c_alpha);
    let d = scatter.sq_distances(w)?;
    SubsetIndex::new(h_smallest(&d, h1.h()), w.nrows())
}
